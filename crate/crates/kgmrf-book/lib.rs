// The guide's Markdown chapters, pulled in as module docs so that
// `cargo test --doc` compiles and runs every listing.

#[doc = include_str!("../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../book/src/orbits.md")]
pub mod orbits {}
#[doc = include_str!("../../book/src/filter.md")]
pub mod filter {}
#[doc = include_str!("../../book/src/baselines.md")]
pub mod baselines {}
#[doc = include_str!("../../book/src/so3.md")]
pub mod so3 {}
#[doc = include_str!("../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../book/src/experiments.md")]
pub mod experiments {}
#[doc = include_str!("../../book/src/region_covariance.md")]
pub mod region_covariance {}
#[doc = include_str!("../../book/src/cli.md")]
pub mod cli {}
