//! CSV, JSON and SVG output.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use super::SweepResult;
use crate::error::Result;

pub const CSV_HEADER: &str = "sweep_param,param_value,method,seed,mean_error,steady_error,runtime_s";

/// printf's `%.6g`.
pub fn fmt_g(v: f64) -> String {
    const P: i32 = 6;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, v);
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let x: i32 = exp.parse().expect("integer exponent");
    if x < -4 || x >= P {
        let mant = strip_zeros(mant);
        let sign = if x < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", x.abs())
    } else {
        strip_zeros(&format!("{:.*}", (P - 1 - x) as usize, v))
    }
}

fn strip_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn csv_string(res: &SweepResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in &res.cells {
        let rt = c.runtime_s.map(fmt_g).unwrap_or_else(|| "NA".into());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            res.param,
            fmt_g(c.param_value),
            c.method,
            c.seed,
            fmt_g(c.mean_error),
            fmt_g(c.steady_error),
            rt
        );
    }
    out
}

pub fn write_csv(res: &SweepResult, path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(res))?;
    Ok(())
}

fn num(v: f64) -> Value {
    // JSON has no NaN; non-finite values become null
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn sweep_value(res: &SweepResult) -> Value {
    let series: Vec<Value> = res
        .series
        .iter()
        .map(|s| {
            json!({
                "method": s.method,
                "mean": s.mean.iter().map(|v| num(*v)).collect::<Vec<_>>(),
                "std": s.std.iter().map(|v| num(*v)).collect::<Vec<_>>(),
            })
        })
        .collect();
    let fits: Vec<Value> = res
        .fits
        .iter()
        .map(|f| {
            json!({
                "method": f.method,
                "kind": f.kind,
                "slope": num(f.fit.slope),
                "intercept": num(f.fit.intercept),
                "r2": num(f.fit.r2),
            })
        })
        .collect();
    json!({
        "name": res.name,
        "param": res.param,
        "values": res.values.iter().map(|v| num(*v)).collect::<Vec<_>>(),
        "metric": res.metric,
        "series": series,
        "fits": fits,
        "kappa_fit": res.kappa_fit.map(|(k, r2)| json!({"kappa": num(k), "r2": num(r2)})),
    })
}

/// `{"schema": 1, "sweeps": [...], ...extra}`.
pub fn summary_json(sweeps: &[&SweepResult], extra: Option<Value>) -> String {
    let mut root = json!({
        "schema": 1,
        "sweeps": sweeps.iter().map(|s| sweep_value(s)).collect::<Vec<_>>(),
    });
    if let (Some(Value::Object(extra)), Value::Object(obj)) = (extra, &mut root) {
        obj.extend(extra);
    }
    let mut s = serde_json::to_string_pretty(&root).expect("json values serialize");
    s.push('\n');
    s
}

pub fn write_summary_json(sweeps: &[&SweepResult], extra: Option<Value>, path: &Path) -> Result<()> {
    std::fs::write(path, summary_json(sweeps, extra))?;
    Ok(())
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Static line chart: axes with min/max tick labels, one polyline per
/// method, a legend in the top right.
pub fn svg_string(res: &SweepResult) -> String {
    let (w, h) = (800.0, 500.0);
    let (left, right, top, bottom) = (70.0, 180.0, 30.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;

    let xs = &res.values;
    let finite = |v: &f64| v.is_finite();
    let xmin = xs.iter().copied().filter(finite).fold(f64::INFINITY, f64::min);
    let xmax = xs.iter().copied().filter(finite).fold(f64::NEG_INFINITY, f64::max);
    let ys = res.series.iter().flat_map(|s| s.mean.iter().copied()).filter(finite);
    let ymax = ys.fold(0.0f64, f64::max);
    let (xmin, xmax) = if xmin < xmax { (xmin, xmax) } else { (xmin - 0.5, xmin + 0.5) };
    let ymax = if ymax > 0.0 { ymax * 1.05 } else { 1.0 };
    let px = |x: f64| left + (x - xmin) / (xmax - xmin) * pw;
    let py = |y: f64| top + ph - y / ymax * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 800 500" width="800" height="500">"#);
    let _ = writeln!(s, r#"<rect x="0" y="0" width="800" height="500" fill="white"/>"#);
    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="12" fill="black">"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#, left + pw / 2.0, res.name);
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        top + ph,
        left + pw,
        top + ph
    );
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + ph);
    for (x, anchor) in [(xmin, "start"), (xmax, "end")] {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="{anchor}">{}</text>"#, px(x), top + ph + 16.0, fmt_g(x));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">0</text>"#, left - 6.0, top + ph);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 6.0, top + 10.0, fmt_g(ymax));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 20.0, res.param);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">error (deg)</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    let _ = writeln!(s, "</g>");

    for (k, series) in res.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = xs
            .iter()
            .zip(&series.mean)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        let ly = top + 10.0 + 20.0 * k as f64;
        let lx = left + pw + 20.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 24.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 30.0,
            ly + 4.0,
            series.method
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_svg_lineplot(res: &SweepResult, path: &Path) -> Result<()> {
    std::fs::write(path, svg_string(res))?;
    Ok(())
}
