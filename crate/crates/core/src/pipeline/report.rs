use std::fmt::Write as _;
use std::path::Path;

use super::{read_json, ExperimentConfig, RunManifest};
use crate::actions::Vec2;
use crate::error::{Error, Result};
use crate::policy::EvalReport;
use crate::sysid::TuningResult;

/// Chi-square quantile with two degrees of freedom at 95%.
const CHI2_95_2DOF: f64 = 5.991_464_547_107_979;
const SIZE: f64 = 640.0;

/// 95% confidence ellipse of a point cloud, meters and degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: Vec2,
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Angle of the major axis from +x.
    pub angle: f64,
}

impl Ellipse {
    pub fn is_point(&self) -> bool {
        self.semi_major <= 1e-9
    }
}

/// Ellipse from the sample covariance of `pts` (a point when all coincide
/// or only one is given).
pub fn confidence_ellipse(pts: &[Vec2]) -> Option<Ellipse> {
    if pts.is_empty() {
        return None;
    }
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let center = Vec2::new(cx, cy);
    if pts.len() < 2 {
        return Some(Ellipse {
            center,
            semi_major: 0.0,
            semi_minor: 0.0,
            angle: 0.0,
        });
    }
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.x - cx, p.y - cy);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let (sxx, syy, sxy) = (sxx / (n - 1.0), syy / (n - 1.0), sxy / (n - 1.0));
    let mid = 0.5 * (sxx + syy);
    let rad = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    let (l1, l2) = (mid + rad, (mid - rad).max(0.0));
    Some(Ellipse {
        center,
        semi_major: (CHI2_95_2DOF * l1).sqrt(),
        semi_minor: (CHI2_95_2DOF * l2).sqrt(),
        angle: 0.5 * (2.0 * sxy).atan2(sxx - syy),
    })
}

/// Top view with the robot base at the bottom centre and the `theta = 0`
/// axis pointing up; positive angles are drawn to the left.
struct View {
    scale: f64,
}

impl View {
    fn map(&self, p: Vec2) -> (f64, f64) {
        (SIZE / 2.0 - p.y * self.scale, SIZE - 30.0 - p.x * self.scale)
    }
}

fn star(x: f64, y: f64, r: f64) -> String {
    let pts: Vec<String> = (0..10)
        .map(|k| {
            let a = -std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI / 5.0;
            let rr = if k % 2 == 0 { r } else { 0.4 * r };
            format!("{:.2},{:.2}", x + rr * a.cos(), y + rr * a.sin())
        })
        .collect();
    pts.join(" ")
}

/// Scatter of targets (stars), trial endpoints (dots) and per-target 95%
/// ellipses, over arcs at the given radii.
pub fn render_svg(report: &EvalReport, title: &str, arcs: &[f64]) -> String {
    let mut extent = arcs.iter().copied().fold(0.5f64, f64::max);
    for t in &report.per_target {
        extent = extent.max(t.target.r);
        for tr in &t.trials {
            extent = extent.max(tr.final_pos.norm());
        }
    }
    let view = View {
        scale: (SIZE - 60.0) / (extent * 1.1),
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="10" y="20" font-family="sans-serif" font-size="14">{title}</text>"#);
    for &r in arcs {
        let (x0, y0) = view.map(Vec2::new(0.0, -r));
        let (x1, y1) = view.map(Vec2::new(0.0, r));
        let rad = r * view.scale;
        let _ = writeln!(
            s,
            r##"<path class="arc" d="M {x0:.2} {y0:.2} A {rad:.2} {rad:.2} 0 0 0 {x1:.2} {y1:.2}" fill="none" stroke="#999" stroke-dasharray="4 3"/>"##
        );
    }
    let (bx, by) = view.map(Vec2::ZERO);
    let _ = writeln!(s, r##"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="#444"/>"##, bx - 5.0, by - 5.0);

    let palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
    for (i, t) in report.per_target.iter().enumerate() {
        let color = palette[i % palette.len()];
        let pts: Vec<Vec2> = t.trials.iter().map(|x| x.final_pos).collect();
        if let Some(e) = confidence_ellipse(&pts) {
            let (cx, cy) = view.map(e.center);
            if e.is_point() {
                let _ = writeln!(s, r#"<circle class="ci95-point" cx="{cx:.2}" cy="{cy:.2}" r="1.5" fill="{color}"/>"#);
            } else {
                // the view swaps and negates axes, so angles flip
                let rot = -90.0 - e.angle.to_degrees();
                let _ = writeln!(
                    s,
                    r#"<ellipse class="ci95" cx="{cx:.2}" cy="{cy:.2}" rx="{:.2}" ry="{:.2}" transform="rotate({rot:.2} {cx:.2} {cy:.2})" fill="{color}" fill-opacity="0.15" stroke="{color}"/>"#,
                    e.semi_major * view.scale,
                    e.semi_minor * view.scale
                );
            }
        }
        for p in &pts {
            let (x, y) = view.map(*p);
            let _ = writeln!(s, r#"<circle class="trial" cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
        }
        let (x, y) = view.map(t.target.to_cartesian());
        let _ = writeln!(
            s,
            r##"<polygon class="target" points="{}" fill="{color}" stroke="#000" stroke-width="0.6"/>"##,
            star(x, y, 8.0)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="10" y="{:.0}" font-family="sans-serif" font-size="12">median {:.1}%  IQR {:.1}-{:.1}% of cable length</text>"#,
        SIZE - 8.0,
        100.0 * report.stats.median,
        100.0 * report.stats.q1,
        100.0 * report.stats.q3
    );
    s.push_str("</svg>\n");
    s
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One row per trial of every named report.
pub fn write_error_csv(path: &Path, reports: &[(String, EvalReport)]) -> Result<()> {
    let mut s = String::from("policy,target,target_r,target_theta_deg,trial,final_x,final_y,error_m,failed\n");
    for (name, rep) in reports {
        for (ti, t) in rep.per_target.iter().enumerate() {
            for (k, tr) in t.trials.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{name},{ti},{},{},{k},{},{},{},{}",
                    t.target.r,
                    t.target.theta.to_degrees(),
                    tr.final_pos.x,
                    tr.final_pos.y,
                    tr.error,
                    tr.failed
                );
            }
        }
    }
    write_text(path, &s)
}

pub fn write_history_csv(path: &Path, tuning: &TuningResult) -> Result<()> {
    let mut s = String::from("generation,best,mean\n");
    for h in &tuning.history {
        let _ = writeln!(s, "{},{},{}", h.generation, h.best, h.mean);
    }
    write_text(path, &s)
}

/// SVG per evaluated policy plus the error and tuning-history CSVs of a run
/// directory. Returns the written paths relative to `dir`.
pub fn write_report(manifest: &RunManifest, dir: &Path, cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let mut outputs = Vec::new();
    let mut reports = Vec::new();
    for (name, p) in &manifest.policies {
        let path = dir.join(&p.report);
        if !path.exists() {
            return Err(Error::io(&path, std::io::ErrorKind::NotFound.into()).in_stage("eval"));
        }
        let rep: EvalReport = read_json(&path).map_err(|e| e.in_stage("eval"))?;
        let arcs = [
            cfg.workspace.r_min,
            cfg.workspace.r_max,
            cfg.eval.annulus.0,
            cfg.eval.annulus.1,
        ];
        let rel = format!("report/{name}.svg");
        write_text(&dir.join(&rel), &render_svg(&rep, name, &arcs))?;
        outputs.push(rel);
        reports.push((name.clone(), rep));
    }
    write_error_csv(&dir.join("report/errors.csv"), &reports)?;
    outputs.push("report/errors.csv".into());
    if let Some(t) = &manifest.tuning {
        let path = dir.join(t);
        let tuning: TuningResult = read_json(&path).map_err(|e| e.in_stage("tune"))?;
        write_history_csv(&dir.join("report/tuning_history.csv"), &tuning)?;
        outputs.push("report/tuning_history.csv".into());
    }
    Ok(outputs)
}
