//! `plot`: validation curves from run manifests as CSV and standalone SVG.
//!
//! Each method gets a line through the per-epoch average over its seeds and
//! a shaded band between the best and worst seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{write_file, CliError, Result};
use crate::train::{RunManifest, MANIFEST_FILE};

/// Per-seed validation curve of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub method: String,
    pub seed: u64,
    pub mu: Vec<f64>,
    pub mean_gstar: Vec<f64>,
    pub max_gstar: Vec<f64>,
}

impl Curve {
    pub fn from_manifest(m: &RunManifest) -> Result<Self> {
        let pick = |f: fn(&dualprox_core::mlp::EpochRecord) -> Option<f64>| {
            m.history
                .iter()
                .map(f)
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| {
                    CliError::Invalid(format!(
                        "{} seed {} has no validation curve",
                        m.method.name(),
                        m.seed
                    ))
                })
        };
        Ok(Self {
            method: m.method.name().to_string(),
            seed: m.seed,
            mu: m.history.iter().map(|r| r.mu).collect(),
            mean_gstar: pick(|r| r.val_mean_gstar)?,
            max_gstar: pick(|r| r.val_max_gstar)?,
        })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

/// Per-epoch minimum, average and maximum over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub lo: Vec<f64>,
    pub avg: Vec<f64>,
    pub hi: Vec<f64>,
}

pub fn band(series: &[&[f64]]) -> Band {
    let len = series.iter().map(|s| s.len()).min().unwrap_or(0);
    let k = series.len() as f64;
    let at = |e: usize| series.iter().map(move |s| s[e]);
    Band {
        lo: (0..len).map(|e| at(e).fold(f64::INFINITY, f64::min)).collect(),
        avg: (0..len).map(|e| at(e).sum::<f64>() / k).collect(),
        hi: (0..len).map(|e| at(e).fold(f64::NEG_INFINITY, f64::max)).collect(),
    }
}

/// Manifest files given directly or found below the given directories.
pub fn collect_manifests(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for p in paths {
        if p.is_file() {
            found.push(p.clone());
            continue;
        }
        let mut stack = vec![p.clone()];
        while let Some(dir) = stack.pop() {
            let entries = std::fs::read_dir(&dir).map_err(|e| CliError::io(&dir, e))?;
            for entry in entries {
                let q = entry.map_err(|e| CliError::io(&dir, e))?.path();
                if q.is_dir() {
                    stack.push(q);
                } else if q.file_name().is_some_and(|n| n == MANIFEST_FILE) {
                    found.push(q);
                }
            }
        }
    }
    if found.is_empty() {
        return Err(CliError::Invalid("no manifests given".into()));
    }
    found.sort();
    Ok(found)
}

/// Cuts all curves to the shortest one. Returns the common length and
/// whether anything was cut.
pub fn truncate_common(curves: &mut [Curve]) -> (usize, bool) {
    let len = curves.iter().map(Curve::len).min().unwrap_or(0);
    let cut = curves.iter().any(|c| c.len() != len);
    for c in curves.iter_mut() {
        c.mu.truncate(len);
        c.mean_gstar.truncate(len);
        c.max_gstar.truncate(len);
    }
    (len, cut)
}

pub fn curves_csv(curves: &[Curve]) -> String {
    let mut s = String::from("method,seed,epoch,mu,mean_gstar,max_gstar\n");
    for c in curves {
        for e in 0..c.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                c.method, c.seed, e, c.mu[e], c.mean_gstar[e], c.max_gstar[e]
            );
        }
    }
    s
}

fn group(curves: &[Curve]) -> BTreeMap<&str, Vec<&Curve>> {
    let mut g: BTreeMap<&str, Vec<&Curve>> = BTreeMap::new();
    for c in curves {
        g.entry(c.method.as_str()).or_default().push(c);
    }
    g
}

pub fn bands_csv(curves: &[Curve]) -> String {
    let mut s = String::from("method,epoch,mean_lo,mean_avg,mean_hi,max_lo,max_avg,max_hi\n");
    for (method, cs) in group(curves) {
        let mean = band(&cs.iter().map(|c| c.mean_gstar.as_slice()).collect::<Vec<_>>());
        let max = band(&cs.iter().map(|c| c.max_gstar.as_slice()).collect::<Vec<_>>());
        for e in 0..mean.avg.len() {
            let _ = writeln!(
                s,
                "{method},{e},{},{},{},{},{},{}",
                mean.lo[e], mean.avg[e], mean.hi[e], max.lo[e], max.avg[e], max.hi[e]
            );
        }
    }
    s
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let vals: Vec<f64> = values.filter(|v| v.is_finite()).collect();
        let log = !vals.is_empty() && vals.iter().all(|&v| v > 0.0);
        let t = |v: f64| if log { v.log10() } else { v };
        let lo = vals.iter().map(|&v| t(v)).fold(f64::INFINITY, f64::min);
        let hi = vals.iter().map(|&v| t(v)).fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if !lo.is_finite() {
            (0.0, 1.0)
        } else if log {
            (lo.floor(), hi.ceil().max(lo.floor() + 1.0))
        } else if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        };
        Self { lo, hi, log }
    }

    fn frac(&self, v: f64) -> f64 {
        let t = if self.log { v.max(f64::MIN_POSITIVE).log10() } else { v };
        ((t - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            (self.lo as i32..=self.hi as i32)
                .map(|d| (10f64.powi(d), format!("1e{d}")))
                .collect()
        } else {
            (0..=4)
                .map(|k| {
                    let v = self.lo + (self.hi - self.lo) * k as f64 / 4.0;
                    (v, format!("{v:.3}"))
                })
                .collect()
        }
    }
}

fn px(epoch: usize, len: usize) -> f64 {
    let span = (len.max(2) - 1) as f64;
    LEFT + (WIDTH - LEFT - RIGHT) * epoch as f64 / span
}

fn py(axis: &Axis, v: f64) -> f64 {
    HEIGHT - BOTTOM - (HEIGHT - TOP - BOTTOM) * axis.frac(v)
}

/// Line chart of one metric, one line and band per method.
pub fn render_svg(title: &str, curves: &[Curve], metric: fn(&Curve) -> &[f64]) -> String {
    let groups = group(curves);
    let len = curves.iter().map(Curve::len).min().unwrap_or(0);
    let axis = Axis::fit(curves.iter().flat_map(|c| metric(c).iter().copied()));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{title}</text>"#, WIDTH / 2.0);
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        s,
        r#"<path d="M{x0},{y0} L{x0},{y1} L{x1},{y1}" fill="none" stroke="black"/>"#
    );
    for (v, label) in axis.ticks() {
        let y = py(&axis, v);
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#dddddd"/><text x="{}" y="{:.2}" text-anchor="end">{label}</text>"##,
            x0 - 6.0,
            y + 4.0
        );
    }
    for k in 0..=4 {
        let e = (len.saturating_sub(1)) * k / 4;
        let x = px(e, len);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y1}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{e}</text>"#,
            y1 + 5.0,
            y1 + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">G★ (%)</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (i, (method, cs)) in groups.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let b = band(&cs.iter().map(|c| metric(c)).collect::<Vec<_>>());
        let mut area = String::new();
        for (e, v) in b.hi.iter().enumerate() {
            let _ = write!(area, "{}{:.2},{:.2} ", if e == 0 { "M" } else { "L" }, px(e, len), py(&axis, *v));
        }
        for (e, v) in b.lo.iter().enumerate().rev() {
            let _ = write!(area, "L{:.2},{:.2} ", px(e, len), py(&axis, *v));
        }
        let _ = writeln!(s, r#"<path d="{}Z" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, area);
        let line: Vec<String> = b
            .avg
            .iter()
            .enumerate()
            .map(|(e, v)| format!("{:.2},{:.2}", px(e, len), py(&axis, *v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{method} ({} seeds)</text>"#,
            x1 + 10.0,
            x1 + 30.0,
            x1 + 36.0,
            ly + 4.0,
            cs.len()
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Reads manifests, writes `curves.csv`, `bands.csv`, `mean_gstar.svg` and
/// `max_gstar.svg` to `out`. Returns the number of epochs plotted.
pub fn run_plot(paths: &[PathBuf], out: &Path) -> Result<usize> {
    let manifests = collect_manifests(paths)?;
    let mut curves = manifests
        .iter()
        .map(|p| Curve::from_manifest(&RunManifest::load(p)?))
        .collect::<Result<Vec<_>>>()?;
    curves.sort_by(|a, b| (&a.method, a.seed).cmp(&(&b.method, b.seed)));
    let (len, cut) = truncate_common(&mut curves);
    if cut {
        eprintln!("warning: runs have different epoch counts; plotting the first {len}");
    }
    write_file(&out.join("curves.csv"), curves_csv(&curves).as_bytes())?;
    write_file(&out.join("bands.csv"), bands_csv(&curves).as_bytes())?;
    let mean = render_svg("Mean validation G★", &curves, |c| &c.mean_gstar);
    let max = render_svg("Worst validation G★", &curves, |c| &c.max_gstar);
    write_file(&out.join("mean_gstar.svg"), mean.as_bytes())?;
    write_file(&out.join("max_gstar.svg"), max.as_bytes())?;
    Ok(len)
}
