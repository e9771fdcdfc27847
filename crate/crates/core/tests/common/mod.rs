use dehaze_core::image::Image;
use dehaze_core::regularization::SparseField;
use nalgebra::{DMatrix, DVector};

pub const EPS: f64 = 1e-4;

/// Minimizer of `Σ w (a - ã)² + α Σ_edges w_ij (a_i - a_j)² + β Σ b a`,
/// assembled densely from scratch and solved by LU.
pub fn dense_minimizer(img: &Image, field: &SparseField, alpha: f64, beta: f64) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let px = img.pixels();
    let conf: Vec<f64> = field
        .samples
        .iter()
        .map(|s| s.map_or(0.0, |s| 1.0 / s.sigma.max(1e-3).powi(2)))
        .collect();
    let top = conf.iter().cloned().fold(0.0, f64::max);
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut r = DVector::<f64>::zeros(n);
    for i in 0..n {
        let wi = conf[i] / top;
        m[(i, i)] += wi;
        let target = field.samples[i].map_or(0.0, |s| s.value);
        let magnitude = px[i].iter().map(|c| c * c).sum::<f64>().sqrt();
        r[i] = wi * target - 0.5 * beta / magnitude.max(EPS);
    }
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            for j in [(x + 1 < w).then(|| i + 1), (y + 1 < h).then(|| i + w)].into_iter().flatten() {
                let d2: f64 = (0..3).map(|c| (px[i][c] - px[j][c]).powi(2)).sum();
                let wij = alpha / (d2 + EPS);
                m[(i, i)] += wij;
                m[(j, j)] += wij;
                m[(i, j)] -= wij;
                m[(j, i)] -= wij;
            }
        }
    }
    m.lu().solve(&r).expect("system is nonsingular").iter().cloned().collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

