//! Flat `key = value` run configuration. File values sit under flag values;
//! both sit over the built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// Every accepted key, its default and a one-line description. The
/// defaults column is informational; the real defaults live in the
/// library's parameter structs.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("out", "out", "output directory"),
    ("seeds", "5,6,7,8,9", "evaluation seeds, a subset of 5..9"),
    ("jobs", "1", "worker threads; output bytes do not depend on it"),
    ("tune", "false", "grid-search hyperparameters on seeds 0..4 first"),
    ("timing", "false", "record per-cell wall-clock time (runtime_s column)"),
    ("warm_start", "true", "start filters at the true initial state and velocity"),
    ("emit_csv", "true", "write CSV files"),
    ("emit_json", "true", "write summary-<command>.json"),
    ("emit_svg", "true", "write SVG line plots"),
    ("omega", "0.08", "SPD(2) angular velocity, rad/step"),
    ("sigma2", "0.1", "isotropic noise floor"),
    ("m_dof", "8", "Wishart degrees of freedom"),
    ("horizon", "400", "SPD(2) frames per run"),
    ("eta", "0.05", "K-GMRF step size (spectral-gap default 0.01)"),
    ("gamma", "0.95", "K-GMRF damping (spectral-gap default 1.0)"),
    ("rho", "0.01", "damping reference rate; 0 damps absolute velocity"),
    ("obs_smoothing", "none", "observation pre-smoothing weight, or none"),
    ("ema_weight", "0.8", "EMA weight on the observation (SPD)"),
    ("kf_q", "0.005", "tangent KF process noise (SPD)"),
    ("kf_r", "0.1", "tangent KF measurement noise (SPD)"),
    ("ab_alpha", "0.4", "alpha-beta position gain (SPD)"),
    ("ab_beta", "0.1", "alpha-beta velocity gain (SPD)"),
    ("so3_alpha", "0.5", "K-GMRF SO(3) position gain"),
    ("so3_beta", "0.05", "K-GMRF SO(3) velocity gain"),
    ("so3_gamma", "0.98", "K-GMRF SO(3) damping"),
    ("so3_ema_weight", "0.8", "EMA weight on the observation (SO(3))"),
    ("so3_kf_q", "0.005", "tangent KF process noise (SO(3))"),
    ("so3_kf_r", "0.1", "tangent KF measurement noise (SO(3))"),
    ("so3_ab_alpha", "0.5", "alpha-beta position gain (SO(3))"),
    ("so3_ab_beta", "0.05", "alpha-beta velocity gain (SO(3))"),
    ("so3_sigma_r", "0.05", "SO(3) observation noise, rad"),
    ("so3_horizon", "200", "SO(3) frames per run"),
    ("gap_omega", "0.03", "spectral-gap angular velocity"),
    ("gap_sigma2", "4", "spectral-gap noise floor"),
    ("eta_max", "4", "stability map: largest eta"),
    ("grid", "20", "stability map: cells per axis"),
    ("stability_gamma", "none", "stability map: single gamma column, or none"),
    ("track_stride", "2", "tracker candidate stride, px"),
    ("track_lost_threshold", "5", "tracker lost-frame distance"),
    ("track_sigma2_rel", "0.1", "tracker noise floor relative to the first descriptor"),
];

#[derive(Clone, Debug, Default)]
pub struct Overrides(BTreeMap<String, String>);

impl Overrides {
    pub fn insert(&mut self, key: &str, value: String) -> Result<(), CliError> {
        if !KEYS.iter().any(|(k, _, _)| *k == key) {
            return Err(CliError::Usage(format!("unknown config key `{key}`")));
        }
        self.0.insert(key.to_string(), value);
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|s| s.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("bad value `{v}` for key `{key}`: {e}"))),
        }
    }

    pub fn apply<T: FromStr>(&self, key: &str, target: &mut T) -> Result<(), CliError>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.get(key)? {
            *target = v;
        }
        Ok(())
    }

    /// `none` or a number.
    pub fn optional_f64(&self, key: &str) -> Result<Option<Option<f64>>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some("none") => Ok(Some(None)),
            Some(_) => Ok(Some(self.get::<f64>(key)?)),
        }
    }
}

pub fn parse_config(text: &str) -> Result<Overrides, CliError> {
    let mut out = Overrides::default();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", n + 1)))?;
        out.insert(k.trim(), v.trim().to_string())?;
    }
    Ok(out)
}

pub fn load_config(path: &Path) -> Result<Overrides, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    s.split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|e| CliError::Usage(format!("bad seed `{t}`: {e}"))))
        .collect()
}

pub fn keys_help() -> String {
    let mut s = String::from("Config keys (flat `key = value`, `#` comments):\n");
    for (k, d, what) in KEYS {
        s.push_str(&format!("  {k:<22} {what} [default: {d}]\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_comments() {
        let o = parse_config("\n# nothing\n   \n").unwrap();
        assert!(o.raw("eta").is_none());
        let o = parse_config("eta = 0.1 # step\nseeds=5,6").unwrap();
        assert_eq!(o.get::<f64>("eta").unwrap(), Some(0.1));
        assert_eq!(parse_seeds(o.raw("seeds").unwrap()).unwrap(), vec![5, 6]);
    }

    #[test]
    fn unknown_key_names_it() {
        match parse_config("etta = 1") {
            Err(CliError::Usage(msg)) => assert!(msg.contains("etta")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_value() {
        let o = parse_config("jobs = many").unwrap();
        assert!(matches!(o.get::<usize>("jobs"), Err(CliError::Usage(_))));
    }
}
