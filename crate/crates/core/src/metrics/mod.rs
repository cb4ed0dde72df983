//! Field comparison metrics and their export formats.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::CavityMesh;

const SSIM_WINDOW: usize = 8;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("field lengths {} and {}", a.len(), b.len())));
    }
    Ok(())
}

/// Mean squared nodewise difference.
pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(s / pred.len() as f64)
}

/// Structural similarity of two temperature fields on a cavity mesh.
///
/// Both fields are mapped to `[0, 1]` by `(lo, hi)` and read as an image of
/// `n` rows by `AR * n` columns. Local statistics use uniform 8x8 windows
/// at stride one (shrunk to the image size if smaller) with population
/// variances; the result is the mean over windows.
pub fn ssim(pred: &[f64], truth: &[f64], mesh: &CavityMesh, lo: f64, hi: f64) -> Result<f64> {
    check_lengths(pred, truth)?;
    if pred.len() != mesh.n_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "field has {} values, mesh has {} nodes",
            pred.len(),
            mesh.n_nodes()
        )));
    }
    if !(hi > lo) {
        return Err(Error::InvalidConfig(format!("empty normalisation range [{lo}, {hi}]")));
    }
    let scale = 1.0 / (hi - lo);
    let x: Vec<f64> = pred.iter().map(|v| (v - lo) * scale).collect();
    let y: Vec<f64> = truth.iter().map(|v| (v - lo) * scale).collect();
    Ok(ssim_image(&x, &y, mesh.nx(), mesh.ny()))
}

/// Mean windowed SSIM of two `width x height` row-major images.
pub fn ssim_image(x: &[f64], y: &[f64], width: usize, height: usize) -> f64 {
    let wx = SSIM_WINDOW.min(width);
    let wy = SSIM_WINDOW.min(height);
    let count = (wx * wy) as f64;
    let mut total = 0.0;
    let mut n_windows = 0usize;
    for j0 in 0..=height - wy {
        for i0 in 0..=width - wx {
            let cells = || (j0..j0 + wy).flat_map(move |j| (i0..i0 + wx).map(move |i| j * width + i));
            let (mut sx, mut sy) = (0.0, 0.0);
            for c in cells() {
                sx += x[c];
                sy += y[c];
            }
            let (mx, my) = (sx / count, sy / count);
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for c in cells() {
                let (dx, dy) = (x[c] - mx, y[c] - my);
                vx += dx * dx;
                vy += dy * dy;
                cov += dx * dy;
            }
            let (vx, vy, cov) = (vx / count, vy / count, cov / count);
            let num = (2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2);
            total += num / den;
            n_windows += 1;
        }
    }
    total / n_windows as f64
}

/// `|pred - truth|` per node.
pub fn error_map(pred: &[f64], truth: &[f64]) -> Result<Vec<f64>> {
    check_lengths(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).collect())
}

/// Index of the cell row whose centre is nearest to `y`; exact ties go to
/// the upper row.
pub fn profile_row(mesh: &CavityMesh, y: f64) -> Result<usize> {
    if !(y > 0.0 && y < mesh.height()) {
        return Err(Error::InvalidConfig(format!(
            "profile height {y} outside (0, {})",
            mesh.height()
        )));
    }
    let row = (y * mesh.ny() as f64 / mesh.height()).floor() as usize;
    Ok(row.min(mesh.ny() - 1))
}

/// `(x, value)` along the cell row nearest to `y`, ordered by `x`.
pub fn line_profile(field: &[f64], mesh: &CavityMesh, y: f64) -> Result<Vec<(f64, f64)>> {
    if field.len() != mesh.n_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "field has {} values, mesh has {} nodes",
            field.len(),
            mesh.n_nodes()
        )));
    }
    let j = profile_row(mesh, y)?;
    Ok((0..mesh.nx())
        .map(|i| {
            let node = mesh.node(i, j);
            (mesh.cell_centers()[node][0], field[node])
        })
        .collect())
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-step comparison of a predicted rollout against ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Frame index of each compared step.
    pub steps: Vec<usize>,
    pub mse: Vec<f64>,
    pub ssim: Vec<f64>,
    /// Absolute-error fields at selected steps, keyed by frame index.
    pub error_maps: Vec<(usize, Vec<f64>)>,
    /// `(x, predicted, truth)` along the profile row at the last step.
    pub profile: Vec<(f64, f64, f64)>,
    pub profile_y: f64,
}

impl EvalReport {
    /// Compares `pred[k]` with `truth[k]` for every `k`; `first_step` is the
    /// frame index of `pred[0]`.
    pub fn compute(
        pred: &[Vec<f64>],
        truth: &[Vec<f64>],
        mesh: &CavityMesh,
        range: (f64, f64),
        first_step: usize,
        profile_y: f64,
        map_steps: &[usize],
    ) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} predicted frames vs {} reference frames",
                pred.len(),
                truth.len()
            )));
        }
        let mut report = Self {
            steps: Vec::with_capacity(pred.len()),
            mse: Vec::with_capacity(pred.len()),
            ssim: Vec::with_capacity(pred.len()),
            error_maps: Vec::new(),
            profile: Vec::new(),
            profile_y,
        };
        for (k, (p, t)) in pred.iter().zip(truth).enumerate() {
            let step = first_step + k;
            report.steps.push(step);
            report.mse.push(mse(p, t)?);
            report.ssim.push(ssim(p, t, mesh, range.0, range.1)?);
            if map_steps.contains(&step) {
                report.error_maps.push((step, error_map(p, t)?));
            }
        }
        if let (Some(p), Some(t)) = (pred.last(), truth.last()) {
            let pp = line_profile(p, mesh, profile_y)?;
            let tp = line_profile(t, mesh, profile_y)?;
            report.profile = pp.iter().zip(&tp).map(|(a, b)| (a.0, a.1, b.1)).collect();
        }
        Ok(report)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn mse_mean_std(&self) -> (f64, f64) {
        mean_std(&self.mse)
    }

    pub fn ssim_mean_std(&self) -> (f64, f64) {
        mean_std(&self.ssim)
    }

    /// `step,mse,ssim` with one row per step.
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("step,mse,ssim\n");
        for k in 0..self.len() {
            let _ = writeln!(s, "{},{:e},{}", self.steps[k], self.mse[k], self.ssim[k]);
        }
        s
    }

    /// `x,predicted,truth` along the profile row.
    pub fn profile_csv(&self) -> String {
        let mut s = String::from("x,predicted,truth\n");
        for (x, p, t) in &self.profile {
            let _ = writeln!(s, "{x},{p},{t}");
        }
        s
    }
}

/// One `node,x,y,value` row per node.
pub fn field_csv(field: &[f64], mesh: &CavityMesh) -> String {
    let mut s = String::from("node,x,y,value\n");
    for (k, (c, v)) in mesh.cell_centers().iter().zip(field).enumerate() {
        let _ = writeln!(s, "{k},{},{},{v}", c[0], c[1]);
    }
    s
}

/// Blue-white-red colour for `t` in `[0, 1]`; out-of-range values saturate.
fn colour(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let ramp = |a: f64| (255.0 * a).round() as u8;
    if t < 0.5 {
        let a = t * 2.0;
        [ramp(a), ramp(a), 255]
    } else {
        let a = (1.0 - t) * 2.0;
        [255, ramp(a), ramp(a)]
    }
}

/// Binary PPM (P6) image of a mesh field, one pixel per cell scaled up by
/// `zoom`, top row of the cavity first.
pub fn field_ppm(field: &[f64], mesh: &CavityMesh, lo: f64, hi: f64, zoom: usize) -> Result<Vec<u8>> {
    if field.len() != mesh.n_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "field has {} values, mesh has {} nodes",
            field.len(),
            mesh.n_nodes()
        )));
    }
    let zoom = zoom.max(1);
    let (w, h) = (mesh.nx() * zoom, mesh.ny() * zoom);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let span = if hi > lo { hi - lo } else { 1.0 };
    for py in 0..h {
        let j = mesh.ny() - 1 - py / zoom;
        for px in 0..w {
            let v = field[mesh.node(px / zoom, j)];
            out.extend_from_slice(&colour((v - lo) / span));
        }
    }
    Ok(out)
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh() -> CavityMesh {
        CavityMesh::new(1, 16, 1.0).unwrap()
    }

    #[test]
    fn mse_basics() {
        let a = vec![1.0, 2.0, 3.0];
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let b: Vec<f64> = a.iter().map(|v| v + 1.0).collect();
        assert_eq!(mse(&b, &a).unwrap(), 1.0);
        assert!(mse(&a, &b[..2]).is_err());
    }

    #[test]
    fn ssim_of_identical_fields_is_one() {
        let m = mesh();
        let f: Vec<f64> = (0..256).map(|k| 300.0 + (k as f64 * 0.37).sin().abs()).collect();
        assert_eq!(ssim(&f, &f, &m, 300.0, 301.4).unwrap(), 1.0);
    }

    #[test]
    fn ssim_of_negated_field_is_negative() {
        let m = mesh();
        let f: Vec<f64> = (0..256).map(|k| 300.7 + 0.5 * (k as f64 * 0.9).sin()).collect();
        let g: Vec<f64> = f.iter().map(|v| 2.0 * 300.7 - v).collect();
        assert!(ssim(&f, &g, &m, 300.0, 301.4).unwrap() < 0.0);
    }

    #[test]
    fn ssim_checks_mesh_size() {
        let f = vec![0.0; 10];
        assert!(ssim(&f, &f, &mesh(), 0.0, 1.0).is_err());
    }

    #[test]
    fn small_images_use_a_single_window() {
        let x = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(ssim_image(&x, &x, 2, 2), 1.0);
    }

    #[test]
    fn error_map_properties() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        assert!(error_map(&a, &a).unwrap().iter().all(|&v| v == 0.0));
        let mut b = a.clone();
        b[2] -= 0.75;
        let e = error_map(&a, &b).unwrap();
        assert_eq!(e, vec![0.0, 0.0, 0.75, 0.0]);
        let inf = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert_eq!(e.iter().copied().fold(0.0, f64::max), inf);
    }

    #[test]
    fn profile_row_breaks_ties_upward() {
        let m = mesh();
        assert_eq!(profile_row(&m, 0.5).unwrap(), 8);
        assert_eq!(profile_row(&m, 0.47).unwrap(), 7);
        assert_eq!(profile_row(&m, 0.999).unwrap(), 15);
        assert!(profile_row(&m, 0.0).is_err());
        assert!(profile_row(&m, 1.2).is_err());
    }

    #[test]
    fn profiles_of_simple_fields() {
        let m = CavityMesh::new(2, 16, 1.0).unwrap();
        let constant = vec![300.5; m.n_nodes()];
        let p = line_profile(&constant, &m, 0.5).unwrap();
        assert_eq!(p.len(), 32);
        assert!(p.iter().all(|&(_, v)| v == 300.5));
        assert!(p.windows(2).all(|w| w[0].0 < w[1].0));
        let linear: Vec<f64> = m.cell_centers().iter().map(|c| 301.4 - 1.4 * c[1]).collect();
        let p = line_profile(&linear, &m, 0.5).unwrap();
        assert!(p.iter().all(|&(_, v)| v == 301.4 - 1.4 * 0.53125));
    }

    #[test]
    fn report_of_perfect_prediction() {
        let m = CavityMesh::new(1, 8, 1.0).unwrap();
        let frames: Vec<Vec<f64>> =
            (0..5).map(|k| (0..64).map(|i| 300.0 + 0.01 * (i * k) as f64 % 1.4).collect()).collect();
        let r = EvalReport::compute(&frames, &frames, &m, (300.0, 301.4), 10, 0.5, &[12]).unwrap();
        assert_eq!(r.steps, vec![10, 11, 12, 13, 14]);
        assert!(r.mse.iter().all(|&v| v == 0.0));
        assert!(r.ssim.iter().all(|&v| v == 1.0));
        assert_eq!(r.error_maps.len(), 1);
        assert_eq!(r.profile.len(), 8);
        let csv = r.metrics_csv();
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.lines().nth(1).unwrap().starts_with("10,0e0,1"));
    }

    #[test]
    fn ppm_has_expected_size() {
        let m = CavityMesh::new(2, 4, 1.0).unwrap();
        let f = vec![300.0; 32];
        let img = field_ppm(&f, &m, 300.0, 301.0, 3).unwrap();
        let header = b"P6\n24 12\n255\n";
        assert_eq!(&img[..header.len()], header);
        assert_eq!(img.len(), header.len() + 24 * 12 * 3);
    }
}
