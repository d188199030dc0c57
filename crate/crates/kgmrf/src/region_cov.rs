//! Region covariance descriptors on real frames.
//!
//! Each pixel gets the feature vector `[x, y, R, G, B, |I_x|, |I_y|]`;
//! a box is described by the 7×7 covariance of its pixels' features,
//! read in O(1) from integral tensors. The tracker filters that
//! descriptor with K-GMRF and moves the box to the best-matching candidate
//! in a window twice the box size.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::filters::{kgmrf_step, Damping, KgmrfConfig, KgmrfState};
use crate::geometry::{OrbitState, Spectrum};
use crate::linalg::{sym_eig, Mat, SymMat};

pub const N_FEAT: usize = 7;
const N_PAIRS: usize = N_FEAT * (N_FEAT + 1) / 2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// 1 (gray) or 3 (RGB).
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Image> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidParam(format!("channels must be 1 or 3, got {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidParam(format!(
                "pixel buffer has {} bytes, expected {}",
                data.len(),
                width * height * channels
            )));
        }
        Ok(Image { width, height, channels, data })
    }

    /// (R, G, B); gray pixels repeat their value.
    pub fn rgb(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * self.channels;
        if self.channels == 1 {
            let v = self.data[i] as f64;
            [v, v, v]
        } else {
            [self.data[i] as f64, self.data[i + 1] as f64, self.data[i + 2] as f64]
        }
    }

    pub fn intensity(&self, x: usize, y: usize) -> f64 {
        let [r, g, b] = self.rgb(x, y);
        if self.channels == 1 {
            r
        } else {
            0.299 * r + 0.587 * g + 0.114 * b
        }
    }
}

struct Cursor<'a> {
    b: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.b.len() {
            match self.b[self.pos] {
                b'#' => {
                    while self.pos < self.b.len() && self.b[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.b.len() && self.b[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Pnm(format!("expected {what}")));
        }
        std::str::from_utf8(&self.b[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Pnm(format!("{what} out of range")))
    }
}

/// Binary PGM (P5) or PPM (P6) with maxval 255.
pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 {
        return Err(Error::Pnm("missing magic number".into()));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        m => return Err(Error::Pnm(format!("unsupported magic {:?}", String::from_utf8_lossy(m)))),
    };
    let mut c = Cursor { b: bytes, pos: 2 };
    let width = c.number("width")?;
    let height = c.number("height")?;
    let maxval = c.number("maxval")?;
    if maxval != 255 {
        return Err(Error::Pnm(format!("unsupported maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Pnm("empty image".into()));
    }
    match bytes.get(c.pos) {
        Some(b) if b.is_ascii_whitespace() => c.pos += 1,
        _ => return Err(Error::Pnm("missing whitespace after header".into())),
    }
    let need = width * height * channels;
    let payload = &bytes[c.pos..];
    if payload.len() < need {
        return Err(Error::Pnm(format!("truncated payload: {} of {need} bytes", payload.len())));
    }
    Image::new(width, height, channels, payload[..need].to_vec())
}

pub fn encode_pnm(img: &Image) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn read_pnm(path: &Path) -> Result<Image> {
    decode_pnm(&std::fs::read(path)?)
}

/// Axis-aligned box, top-left corner plus size, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl BBox {
    pub fn new(x: i64, y: i64, w: i64, h: i64) -> BBox {
        BBox { x, y, w, h }
    }

    pub fn area(&self) -> i64 {
        self.w.max(0) * self.h.max(0)
    }

    /// Intersection with the frame, or None when empty.
    pub fn clip(&self, width: usize, height: usize) -> Option<BBox> {
        let x0 = self.x.max(0);
        let y0 = self.y.max(0);
        let x1 = (self.x + self.w).min(width as i64);
        let y1 = (self.y + self.h).min(height as i64);
        (x1 > x0 && y1 > y0).then(|| BBox::new(x0, y0, x1 - x0, y1 - y0))
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0);
    let inter = (iw * ih) as f64;
    let union = (a.area() + b.area()) as f64 - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// One `x,y,w,h` per line, comma, tab or space separated. Coordinates are
/// kept as written.
pub fn parse_otb_groundtruth(text: &str) -> Result<Vec<BBox>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if fields.len() != 4 {
            return Err(Error::Groundtruth { line: k + 1, msg: format!("expected 4 fields, got {}", fields.len()) });
        }
        let mut v = [0i64; 4];
        for (i, f) in fields.iter().enumerate() {
            let x: f64 = f
                .parse()
                .map_err(|_| Error::Groundtruth { line: k + 1, msg: format!("not a number: {f:?}") })?;
            if !x.is_finite() {
                return Err(Error::Groundtruth { line: k + 1, msg: format!("not finite: {f:?}") });
            }
            v[i] = x.round() as i64;
        }
        out.push(BBox::new(v[0], v[1], v[2], v[3]));
    }
    Ok(out)
}

/// Per-pixel features plus first- and second-order integral tensors, each
/// (W + 1)·(H + 1) entries with a zero first row and column.
pub struct FeatureTensor {
    pub width: usize,
    pub height: usize,
    pub features: Vec<[f64; N_FEAT]>,
    sum1: Vec<[f64; N_FEAT]>,
    sum2: Vec<[f64; N_PAIRS]>,
}

fn pair_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * N_FEAT - i * (i + 1) / 2 + j
}

pub fn build_features(img: &Image) -> FeatureTensor {
    let (w, h) = (img.width, img.height);
    let mut features = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let [r, g, b] = img.rgb(x, y);
            let ix = (img.intensity((x + 1).min(w - 1), y) - img.intensity(x.saturating_sub(1), y)) / 2.0;
            let iy = (img.intensity(x, (y + 1).min(h - 1)) - img.intensity(x, y.saturating_sub(1))) / 2.0;
            features.push([x as f64, y as f64, r, g, b, ix.abs(), iy.abs()]);
        }
    }
    let stride = w + 1;
    let mut sum1 = vec![[0.0; N_FEAT]; stride * (h + 1)];
    let mut sum2 = vec![[0.0; N_PAIRS]; stride * (h + 1)];
    for y in 0..h {
        let mut row1 = [0.0; N_FEAT];
        let mut row2 = [0.0; N_PAIRS];
        for x in 0..w {
            let f = &features[y * w + x];
            for i in 0..N_FEAT {
                row1[i] += f[i];
                for j in i..N_FEAT {
                    row2[pair_index(i, j)] += f[i] * f[j];
                }
            }
            let above = y * stride + x + 1;
            let here = (y + 1) * stride + x + 1;
            for i in 0..N_FEAT {
                sum1[here][i] = sum1[above][i] + row1[i];
            }
            for k in 0..N_PAIRS {
                sum2[here][k] = sum2[above][k] + row2[k];
            }
        }
    }
    FeatureTensor { width: w, height: h, features, sum1, sum2 }
}

impl FeatureTensor {
    fn window<const N: usize>(&self, t: &[[f64; N]], b: &BBox) -> [f64; N] {
        let stride = self.width + 1;
        let (x0, y0) = (b.x as usize, b.y as usize);
        let (x1, y1) = (x0 + b.w as usize, y0 + b.h as usize);
        let mut out = [0.0; N];
        for k in 0..N {
            out[k] = t[y1 * stride + x1][k] - t[y0 * stride + x1][k] - t[y1 * stride + x0][k] + t[y0 * stride + x0][k];
        }
        out
    }
}

fn clipped(feat: &FeatureTensor, b: &BBox) -> Result<BBox> {
    let c = b
        .clip(feat.width, feat.height)
        .ok_or_else(|| Error::DegenerateBox(format!("{b:?} misses the {}x{} frame", feat.width, feat.height)))?;
    if c.area() < 2 {
        return Err(Error::DegenerateBox(format!("{b:?} covers fewer than 2 pixels")));
    }
    Ok(c)
}

fn cov_from_sums(s1: &[f64; N_FEAT], s2: &[f64; N_PAIRS], n: f64) -> Mat {
    Mat::from_fn(N_FEAT, |i, j| (s2[pair_index(i, j)] - s1[i] * s1[j] / n) / (n - 1.0))
}

/// Sample covariance of the features inside `b` (clipped to the frame),
/// plus `reg`·I.
pub fn region_covariance(feat: &FeatureTensor, b: &BBox, reg: f64) -> Result<SymMat> {
    let c = clipped(feat, b)?;
    let n = c.area() as f64;
    let cov = cov_from_sums(&feat.window(&feat.sum1, &c), &feat.window(&feat.sum2, &c), n);
    Ok(SymMat::new(&cov).add_identity(reg))
}

/// Descriptor with the default regularisation 1e-3·trace/7.
pub fn descriptor(feat: &FeatureTensor, b: &BBox) -> Result<SymMat> {
    let raw = region_covariance(feat, b, 0.0)?;
    let reg = 1e-3 * raw.trace() / N_FEAT as f64;
    Ok(raw.add_identity(reg.max(1e-9)))
}

/// Direct per-pixel accumulation, for checking the integral tensors.
pub fn brute_force_covariance(feat: &FeatureTensor, b: &BBox) -> Result<SymMat> {
    let c = clipped(feat, b)?;
    let mut s1 = [0.0; N_FEAT];
    let mut s2 = [0.0; N_PAIRS];
    for y in c.y as usize..(c.y + c.h) as usize {
        for x in c.x as usize..(c.x + c.w) as usize {
            let f = &feat.features[y * feat.width + x];
            for i in 0..N_FEAT {
                s1[i] += f[i];
                for j in i..N_FEAT {
                    s2[pair_index(i, j)] += f[i] * f[j];
                }
            }
        }
    }
    Ok(SymMat::new(&cov_from_sums(&s1, &s2, c.area() as f64)))
}

/// Affine-invariant distance: the root of Σ ln² of the generalized
/// eigenvalues of (a, b).
pub fn airm_distance(a: &SymMat, b: &SymMat) -> Result<f64> {
    let ihalf = b.map_eigen(|v| 1.0 / v.max(1e-300).sqrt())?;
    let inner = SymMat::new(&ihalf.congruence(a.mat()));
    let e = sym_eig(&inner)?;
    Ok(e.values.iter().map(|v| v.max(1e-300).ln().powi(2)).sum::<f64>().sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrackConfig {
    pub eta: f64,
    pub gamma: f64,
    pub rho: f64,
    /// Noise floor of the descriptor filter, relative to trace/7 of the
    /// first descriptor.
    pub sigma2_rel: f64,
    pub stride: usize,
    /// Best-candidate distance above which a frame is flagged lost.
    pub lost_threshold: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        TrackConfig { eta: 0.05, gamma: 0.95, rho: 0.01, sigma2_rel: 0.1, stride: 2, lost_threshold: 5.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrackFrame {
    pub frame: usize,
    pub bbox: BBox,
    pub iou: Option<f64>,
    pub score: f64,
    pub lost: bool,
}

/// Eigenvalues forced strictly decreasing so they define an orbit.
fn orbit_spectrum(values: &[f64]) -> Result<Spectrum> {
    let mut v: Vec<f64> = values.to_vec();
    for k in 1..v.len() {
        let cap = v[k - 1] * (1.0 - 1e-9);
        if v[k] >= cap {
            v[k] = cap;
        }
    }
    Spectrum::new(&v)
}

/// Tracks a fixed-size box through `frames`, starting from `init`.
///
/// Frame 0 is reported at `init`. For each later frame the candidates are
/// all box positions on a `stride` grid inside a window of twice the box
/// size around the previous box, clamped to the frame; the candidate
/// nearest the filtered descriptor becomes the observation and the new box.
pub fn track_sequence(frames: &[Image], init: BBox, gt: Option<&[BBox]>, cfg: &TrackConfig) -> Result<Vec<TrackFrame>> {
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    if init.w < 1 || init.h < 1 || init.area() < 2 {
        return Err(Error::DegenerateBox(format!("{init:?}")));
    }
    let stride = cfg.stride.max(1) as i64;
    let feat0 = build_features(&frames[0]);
    let d0 = descriptor(&feat0, &init)?;
    let eig = sym_eig(&d0)?;
    let spectrum = orbit_spectrum(&eig.values)?;
    let sigma2 = cfg.sigma2_rel * d0.trace() / N_FEAT as f64;
    let kcfg = KgmrfConfig::new(cfg.eta, cfg.gamma, sigma2).with_damping(if cfg.rho > 0.0 {
        Damping::Tracked { rho: cfg.rho }
    } else {
        Damping::Absolute
    });
    kcfg.validate()?;
    let start = OrbitState::from_rotation(&spectrum, &crate::linalg::RotMat::new(&eig.vectors)?);
    let mut state = KgmrfState::new(start);

    let score_of = |t: usize, b: &BBox| gt.and_then(|g| g.get(t)).map(|g| iou(b, g));
    let mut out = vec![TrackFrame { frame: 0, bbox: init, iou: score_of(0, &init), score: 0.0, lost: false }];
    let mut cur = init;
    for (t, img) in frames.iter().enumerate().skip(1) {
        let feat = build_features(img);
        let (fw, fh) = (img.width as i64, img.height as i64);
        let (bw, bh) = (cur.w.min(fw), cur.h.min(fh));
        let cx = cur.x + cur.w / 2;
        let cy = cur.y + cur.h / 2;
        let (wx0, wy0) = ((cx - bw).max(0), (cy - bh).max(0));
        let (wx1, wy1) = ((cx + bw).min(fw), (cy + bh).min(fh));
        let template = state.m.m().clone();
        let mut best: Option<(f64, BBox, SymMat)> = None;
        let mut y = wy0;
        while y + bh <= wy1.max(wy0 + bh) {
            let mut x = wx0;
            while x + bw <= wx1.max(wx0 + bw) {
                let cand = BBox::new(x.min(fw - bw), y.min(fh - bh), bw, bh);
                let d = descriptor(&feat, &cand)?;
                let s = airm_distance(&d, &template)?;
                if best.as_ref().map_or(true, |(b, _, _)| s < *b) {
                    best = Some((s, cand, d));
                }
                x += stride;
            }
            y += stride;
        }
        let (score, bbox, obs) = best.expect("window holds at least one candidate");
        state = kgmrf_step(&state, &kcfg, Some(&obs))?;
        cur = bbox;
        out.push(TrackFrame { frame: t, bbox, iou: score_of(t, &bbox), score, lost: score > cfg.lost_threshold });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrackSummary {
    pub frames: usize,
    pub mean_iou: f64,
    pub success_rate: f64,
    pub lost_frames: usize,
}

/// Mean IoU and the fraction of frames with IoU > 0.5, over frames that
/// have ground truth.
pub fn summarize_track(track: &[TrackFrame]) -> TrackSummary {
    let ious: Vec<f64> = track.iter().filter_map(|f| f.iou).collect();
    let n = ious.len().max(1) as f64;
    TrackSummary {
        frames: track.len(),
        mean_iou: ious.iter().sum::<f64>() / n,
        success_rate: ious.iter().filter(|&&v| v > 0.5).count() as f64 / n,
        lost_frames: track.iter().filter(|f| f.lost).count(),
    }
}

pub fn track_csv(track: &[TrackFrame]) -> String {
    use crate::bench::fmt_g;
    let mut out = String::from("frame,x,y,w,h,iou,score\n");
    for f in track {
        let iou = f.iou.map(fmt_g).unwrap_or_else(|| "NA".into());
        let _ = writeln!(out, "{},{},{},{},{},{},{}", f.frame, f.bbox.x, f.bbox.y, f.bbox.w, f.bbox.h, iou, fmt_g(f.score));
    }
    out
}

/// Sorted `.ppm`/`.pgm` frames of an OTB-style directory (searching `img/`
/// first) and its `groundtruth_rect.txt`.
pub fn load_otb_dir(dir: &Path) -> Result<(Vec<PathBuf>, Vec<BBox>)> {
    if !dir.is_dir() {
        return Err(Error::Io(format!("{} is not a directory", dir.display())));
    }
    let img_dir = if dir.join("img").is_dir() { dir.join("img") } else { dir.to_path_buf() };
    let mut frames: Vec<PathBuf> = std::fs::read_dir(&img_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("ppm" | "pgm")))
        .collect();
    frames.sort();
    if frames.is_empty() {
        return Err(Error::Io(format!("no .ppm/.pgm frames in {}", img_dir.display())));
    }
    let gt_path = dir.join("groundtruth_rect.txt");
    let gt = parse_otb_groundtruth(&std::fs::read_to_string(&gt_path)?)?;
    if gt.is_empty() {
        return Err(Error::Groundtruth { line: 0, msg: "no boxes".into() });
    }
    Ok((frames, gt))
}

/// A textured target translating over a smooth background, with its true
/// boxes.
pub fn synthetic_sequence(width: usize, height: usize, start: BBox, velocity: (i64, i64), n_frames: usize) -> (Vec<Image>, Vec<BBox>) {
    let mut frames = Vec::with_capacity(n_frames);
    let mut boxes = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let b = BBox::new(start.x + velocity.0 * t as i64, start.y + velocity.1 * t as i64, start.w, start.h);
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                let (xi, yi) = (x as i64, y as i64);
                let inside = xi >= b.x && xi < b.x + b.w && yi >= b.y && yi < b.y + b.h;
                if inside {
                    let (u, v) = (xi - b.x, yi - b.y);
                    let check = ((u / 4) + (v / 4)) % 2 == 0;
                    data.extend_from_slice(if check { &[230, 40, 40] } else { &[40, 40, 200] });
                } else {
                    let g = (60.0 + 80.0 * x as f64 / width as f64 + 40.0 * y as f64 / height as f64) as u8;
                    data.extend_from_slice(&[g, g, g / 2 + 30]);
                }
            }
        }
        frames.push(Image { width, height, channels: 3, data });
        boxes.push(b);
    }
    (frames, boxes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Rng;

    #[test]
    fn pnm_round_trip() {
        let img = Image::new(2, 2, 3, (0..12).map(|v| v as u8 * 20).collect()).unwrap();
        assert_eq!(decode_pnm(&encode_pnm(&img)).unwrap(), img);
        let g = decode_pnm(b"P5\n1 1\n255\n\x00").unwrap();
        assert_eq!((g.width, g.height, g.channels, g.data[0]), (1, 1, 1, 0));
    }

    #[test]
    fn pnm_errors() {
        assert!(matches!(decode_pnm(b"P3\n1 1\n255\n0"), Err(Error::Pnm(_))));
        assert!(matches!(decode_pnm(b"P5\n2 2\n255\n\x00"), Err(Error::Pnm(_))));
        assert!(matches!(decode_pnm(b"P5\n1 1\n65535\n\x00\x00"), Err(Error::Pnm(_))));
        assert!(matches!(decode_pnm(b"P5\n# comment\n1 1\n255\n\x07").map(|i| i.data), Ok(d) if d == vec![7]));
    }

    #[test]
    fn features_of_ramp_and_constant() {
        let flat = Image::new(5, 4, 1, vec![9; 20]).unwrap();
        let f = build_features(&flat);
        assert!(f.features.iter().all(|p| p[5] == 0.0 && p[6] == 0.0));
        assert_eq!(f.features[2 * 5 + 3][0], 3.0);
        assert_eq!(f.features[2 * 5 + 3][1], 2.0);
        let ramp = Image::new(6, 3, 1, (0..18).map(|i| (i % 6) as u8).collect()).unwrap();
        let f = build_features(&ramp);
        for y in 0..3 {
            for x in 1..5 {
                assert_eq!(f.features[y * 6 + x][5], 1.0);
            }
        }
    }

    #[test]
    fn constant_box_has_grid_moments() {
        let img = Image::new(8, 8, 3, vec![100; 192]).unwrap();
        let f = build_features(&img);
        let reg = 0.01;
        let c = region_covariance(&f, &BBox::new(1, 2, 4, 3), reg).unwrap();
        // n equally spaced integers have population variance (n² − 1)/12;
        // each repeats m times and the estimator divides by nm − 1
        let var = |n: f64, m: f64| (n * n - 1.0) / 12.0 * (n * m) / (n * m - 1.0);
        assert!((c[(0, 0)] - reg - var(4.0, 3.0)).abs() < 1e-12);
        assert!((c[(1, 1)] - reg - var(3.0, 4.0)).abs() < 1e-12);
        for i in 2..7 {
            assert!((c[(i, i)] - reg).abs() < 1e-12);
        }
    }

    #[test]
    fn integral_matches_brute_force() {
        let mut rng = Rng::new(3, "test/image");
        let data = (0..40 * 30 * 3).map(|_| (rng.next_u64() % 256) as u8).collect();
        let img = Image::new(40, 30, 3, data).unwrap();
        let f = build_features(&img);
        for _ in 0..100 {
            let x = (rng.next_u64() % 38) as i64;
            let y = (rng.next_u64() % 28) as i64;
            let w = 2 + (rng.next_u64() % (40 - x as u64 - 1)) as i64;
            let h = 1 + (rng.next_u64() % (30 - y as u64)) as i64;
            let b = BBox::new(x, y, w, h);
            let a = region_covariance(&f, &b, 0.0).unwrap();
            let r = brute_force_covariance(&f, &b).unwrap();
            assert!((a.mat() - r.mat()).max_abs() <= 1e-6, "{b:?}");
        }
    }

    #[test]
    fn rank_deficient_region_is_psd() {
        let img = Image::new(4, 1, 1, vec![1, 5, 2, 8]).unwrap();
        let c = region_covariance(&build_features(&img), &BBox::new(0, 0, 2, 1), 0.0).unwrap();
        assert!(c.min_eig().unwrap() >= -1e-9);
        assert!(matches!(region_covariance(&build_features(&img), &BBox::new(0, 0, 1, 1), 0.0), Err(Error::DegenerateBox(_))));
    }

    #[test]
    fn groundtruth_parsing() {
        assert_eq!(parse_otb_groundtruth("10,20,30,40").unwrap(), vec![BBox::new(10, 20, 30, 40)]);
        assert_eq!(parse_otb_groundtruth("10\t20\t30\t40\n").unwrap(), vec![BBox::new(10, 20, 30, 40)]);
        assert_eq!(parse_otb_groundtruth("1,2,3,4\n5,6,7,8\n9,10,11,12\n").unwrap().len(), 3);
        assert!(matches!(parse_otb_groundtruth("1,2,3"), Err(Error::Groundtruth { line: 1, .. })));
        assert!(matches!(parse_otb_groundtruth("1,2,3,4\n1,x,3,4"), Err(Error::Groundtruth { line: 2, .. })));
    }

    #[test]
    fn iou_cases() {
        let a = BBox::new(0, 0, 2, 2);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(5, 5, 2, 2)), 0.0);
        assert!((iou(&a, &BBox::new(1, 1, 2, 2)) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn static_sequence_stays_put() {
        let (frames, boxes) = synthetic_sequence(64, 48, BBox::new(20, 15, 16, 12), (0, 0), 6);
        let tr = track_sequence(&frames, boxes[0], Some(&boxes), &TrackConfig::default()).unwrap();
        assert!(tr.iter().all(|f| f.iou == Some(1.0)));
    }

    #[test]
    fn success_rate_counts() {
        let ious = [0.9, 0.4, 0.6, 0.51, 0.5, 0.2, 1.0, 0.0, 0.7, 0.55];
        let track: Vec<TrackFrame> = ious
            .iter()
            .enumerate()
            .map(|(k, &v)| TrackFrame { frame: k, bbox: BBox::new(0, 0, 1, 1), iou: Some(v), score: 0.0, lost: false })
            .collect();
        assert!((summarize_track(&track).success_rate - 0.6).abs() < 1e-15);
    }
}
