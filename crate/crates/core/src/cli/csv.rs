//! CSV emission. Floats carry 17 significant digits so files round-trip.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::linalg::Vector;
use crate::trajectory::PwsTrajectory;
use crate::Result;

pub fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn header(first: &str, prefix: &str, dim: usize) -> String {
    let mut h = first.to_string();
    for i in 1..=dim {
        let _ = write!(h, ",{prefix}_{i}");
    }
    h
}

pub fn row(t: f64, v: &Vector) -> String {
    let mut s = fmt_f(t);
    for x in v.iter() {
        s.push(',');
        s.push_str(&fmt_f(*x));
    }
    s
}

/// Samples every segment on a grid of width `step`, starting at its start and
/// closing with its left limit at the end; switching times appear twice.
pub fn samples(traj: &PwsTrajectory, step: f64) -> Vec<(f64, Vector)> {
    let mut out = Vec::new();
    for seg in traj.segments() {
        let span = seg.end - seg.start;
        let mut j = 0usize;
        loop {
            let t = seg.start + step * j as f64;
            if t >= seg.end - 1e-9 * span {
                break;
            }
            out.push((t, seg.eval(t)));
            j += 1;
        }
        out.push((seg.end, seg.eval(seg.end)));
    }
    out
}

pub fn trajectory_csv(traj: &PwsTrajectory, prefix: &str, step: f64) -> String {
    let mut s = header("t", prefix, traj.dim());
    s.push('\n');
    for (t, v) in samples(traj, step) {
        s.push_str(&row(t, &v));
        s.push('\n');
    }
    s
}

pub fn impulses_csv(traj: &PwsTrajectory) -> String {
    let mut s = String::from("t,order,component,coeff\n");
    for rec in traj.impulses() {
        for (order, c) in rec.coeffs.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                let _ = writeln!(s, "{},{},{},{}", fmt_f(rec.time), order, i + 1, fmt_f(*v));
            }
        }
    }
    s
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}
