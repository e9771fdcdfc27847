//! Propagation of sparse estimates to every pixel.
//!
//! Transmission is spread by exact nearest-neighbor lookup in the joint
//! color/position feature space. Airlight magnitude is interpolated by
//! minimizing
//!
//! ```text
//! Ψ(a) = (a - ã)ᵀ Σ (a - ã) + α aᵀ L a + β bᵀ a
//! ```
//!
//! where `Σ` holds per-pixel data confidences, `L` is the 4-connected image
//! graph Laplacian with edge weights `1 / (|I(x) - I(y)|² + ε)` and
//! `b(x) = 1 / max(|I(x)|, ε)`. Setting the gradient to zero gives the
//! symmetric system `(Σ + α L) a = Σ ã - β b / 2`, solved here by
//! conjugate gradients with a zero-fill incomplete Cholesky preconditioner.

use rayon::prelude::*;

use crate::dark_channel::Anchor;
use crate::error::{Error, Result};
use crate::image::{feature_unchecked, Image, ScalarMap};
use crate::kdtree::FeatureIndex;
use crate::linalg::{norm, rgb_distance};

/// Builds the nearest-neighbor index over anchor pixels.
pub fn build_feature_index(img: &Image, anchors: &[Anchor], lambda: f64) -> Result<FeatureIndex> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::config(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let points: Vec<_> = anchors
        .iter()
        .map(|a| {
            (
                feature_unchecked(img.get(a.x, a.y), a.x, a.y, img.width(), img.height(), lambda),
                a.t,
            )
        })
        .collect();
    FeatureIndex::build(&points)
}

/// Every pixel takes the transmission of its nearest anchor in feature space.
pub fn nn_regularize_transmission(img: &Image, anchors: &[Anchor], lambda: f64) -> Result<ScalarMap> {
    let index = build_feature_index(img, anchors, lambda)?;
    Ok(nn_regularize_with_index(img, &index, lambda))
}

pub fn nn_regularize_with_index(img: &Image, index: &FeatureIndex, lambda: f64) -> ScalarMap {
    let (w, h) = (img.width(), img.height());
    let data: Vec<f64> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            (0..w).map(move |x| {
                let q = feature_unchecked(img.get(x, y), x, y, w, h, lambda);
                index.nearest(&q).payload.clamp(0.0, 1.0)
            })
        })
        .collect();
    ScalarMap::new(w, h, data).expect("dimensions preserved")
}

/// One sparse airlight-magnitude estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub value: f64,
    /// Error spread of the estimate within its patch.
    pub sigma: f64,
}

/// Per-pixel optional samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseField {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<Option<Sample>>,
}

impl SparseField {
    pub fn empty(width: usize, height: usize) -> SparseField {
        SparseField {
            width,
            height,
            samples: vec![None; width * height],
        }
    }

    pub fn set(&mut self, index: usize, sample: Sample) {
        self.samples[index] = Some(sample);
    }

    pub fn count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_some()).count()
    }

    /// Values with unset pixels as NaN, for dumping.
    pub fn to_map(&self) -> ScalarMap {
        let data = self.samples.iter().map(|s| s.map_or(f64::NAN, |s| s.value)).collect();
        ScalarMap::new(self.width, self.height, data).expect("dimensions preserved")
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .into_par_iter()
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] += v;
            }
        }
        out
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(&self.mul_vec(x), x)
    }
}

/// Fixed-order dot product.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Assembled terms of the interpolation energy.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationSystem {
    pub width: usize,
    pub height: usize,
    /// Diagonal of `Σ`: normalized confidences in `[0, 1]`, zero where no sample exists.
    pub data_weights: Vec<f64>,
    /// Sample values `ã`, zero where no sample exists.
    pub targets: Vec<f64>,
    pub laplacian: CsrMatrix,
    /// Linear term `b(x) = 1 / max(|I(x)|, ε)`.
    pub b: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

/// Smallest per-patch error spread accepted before inverting it.
pub const SIGMA_FLOOR: f64 = 1e-3;

/// Builds the interpolation energy for `estimates` on `img`.
pub fn assemble_interpolation_system(
    estimates: &SparseField,
    img: &Image,
    alpha: f64,
    beta: f64,
    eps: f64,
) -> Result<InterpolationSystem> {
    if estimates.width != img.width() || estimates.height != img.height() {
        return Err(Error::DimensionMismatch {
            left_width: estimates.width,
            left_height: estimates.height,
            right_width: img.width(),
            right_height: img.height(),
        });
    }
    if estimates.count() == 0 {
        return Err(Error::invalid("interpolation needs at least one estimated pixel"));
    }
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::config(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    if !(eps > 0.0) {
        return Err(Error::config("eps must be > 0"));
    }

    let raw: Vec<f64> = estimates
        .samples
        .iter()
        .map(|s| s.map_or(0.0, |s| 1.0 / s.sigma.max(SIGMA_FLOOR).powi(2)))
        .collect();
    let max_w = raw.iter().copied().fold(0.0, f64::max);
    let data_weights = raw.iter().map(|w| w / max_w).collect();
    let targets = estimates.samples.iter().map(|s| s.map_or(0.0, |s| s.value)).collect();
    let b = img.pixels().iter().map(|&p| 1.0 / norm(p).max(eps)).collect();

    Ok(InterpolationSystem {
        width: img.width(),
        height: img.height(),
        data_weights,
        targets,
        laplacian: image_laplacian(img, eps),
        b,
        alpha,
        beta,
    })
}

/// Weighted graph Laplacian of the 4-connected pixel grid.
pub fn image_laplacian(img: &Image, eps: f64) -> CsrMatrix {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let px = img.pixels();
    let weight = |i: usize, j: usize| 1.0 / (rgb_distance(px[i], px[j]).powi(2) + eps);

    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(5 * n);
    let mut values = Vec::with_capacity(5 * n);
    indptr.push(0);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut neighbors = [usize::MAX; 4];
            if y > 0 {
                neighbors[0] = i - w;
            }
            if x > 0 {
                neighbors[1] = i - 1;
            }
            if x + 1 < w {
                neighbors[2] = i + 1;
            }
            if y + 1 < h {
                neighbors[3] = i + w;
            }
            let mut degree = 0.0;
            let row_start = indices.len();
            for &j in &neighbors {
                if j != usize::MAX {
                    let wij = weight(i, j);
                    degree += wij;
                    indices.push(j);
                    values.push(-wij);
                }
            }
            // keep column order sorted: neighbors above/left come before the diagonal
            let insert_at = row_start + neighbors[..2].iter().filter(|&&j| j != usize::MAX).count();
            indices.insert(insert_at, i);
            values.insert(insert_at, degree);
            indptr.push(indices.len());
        }
    }
    CsrMatrix {
        n,
        indptr,
        indices,
        values,
    }
}

impl InterpolationSystem {
    pub fn dimension(&self) -> usize {
        self.data_weights.len()
    }

    /// `Σ + α L`.
    pub fn matrix(&self) -> CsrMatrix {
        let mut m = self.laplacian.clone();
        for v in &mut m.values {
            *v *= self.alpha;
        }
        for i in 0..m.n {
            for k in m.indptr[i]..m.indptr[i + 1] {
                if m.indices[k] == i {
                    m.values[k] += self.data_weights[i];
                }
            }
        }
        m
    }

    /// `Σ ã - β b / 2`.
    pub fn rhs(&self) -> Vec<f64> {
        self.data_weights
            .iter()
            .zip(&self.targets)
            .zip(&self.b)
            .map(|((w, t), b)| w * t - 0.5 * self.beta * b)
            .collect()
    }

    /// Value of the interpolation energy at `a`.
    pub fn energy(&self, a: &[f64]) -> f64 {
        let data: f64 = a
            .iter()
            .zip(&self.targets)
            .zip(&self.data_weights)
            .map(|((a, t), w)| w * (a - t) * (a - t))
            .sum();
        data + self.alpha * self.laplacian.quadratic_form(a) + self.beta * dot(&self.b, a)
    }

    /// The starting point: samples where present, zero elsewhere.
    pub fn initial_guess(&self) -> Vec<f64> {
        self.targets.clone()
    }
}

/// Output of the iterative solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Unclamped minimizer.
    pub raw: Vec<f64>,
    /// Minimizer clamped into the valid magnitude range.
    pub field: ScalarMap,
    pub iterations: usize,
    /// Final relative residual `|M x - r| / |r|`.
    pub residual: f64,
}

/// Default iteration cap, `10 √n`.
pub fn default_max_iter(n: usize) -> usize {
    (10.0 * (n as f64).sqrt()).ceil() as usize
}

/// Solves the interpolation system with preconditioned conjugate gradients
/// from [`InterpolationSystem::initial_guess`].
///
/// Rows with an all-zero diagonal (no sample and `α = 0`) are decoupled
/// from the rest and pinned to zero. The returned field is clamped to
/// `[0, upper]`.
pub fn solve_airlight_field(system: &InterpolationSystem, tol: f64, max_iter: usize, upper: f64) -> Result<Solution> {
    let m = system.matrix();
    let rhs = system.rhs();
    let n = system.dimension();
    let diag = m.diagonal();
    let active: Vec<bool> = diag.iter().map(|&d| d > 0.0).collect();

    let mut x = system.initial_guess();
    let mut r_vec = rhs.clone();
    for i in 0..n {
        if !active[i] {
            x[i] = 0.0;
            r_vec[i] = 0.0;
        }
    }
    let rhs_norm = dot(&r_vec, &r_vec).sqrt();
    let finish = |x: Vec<f64>, iterations: usize, residual: f64| -> Solution {
        let clamped = x.iter().map(|v| v.clamp(0.0, upper)).collect();
        Solution {
            field: ScalarMap::new(system.width, system.height, clamped).expect("dimensions preserved"),
            raw: x,
            iterations,
            residual,
        }
    };
    if rhs_norm == 0.0 {
        return Ok(finish(vec![0.0; n], 0, 0.0));
    }

    let mx = m.mul_vec(&x);
    let mut r: Vec<f64> = (0..n).map(|i| if active[i] { rhs[i] - mx[i] } else { 0.0 }).collect();
    let factor = IncompleteCholesky::new(&m, &active);
    let precondition = |r: &[f64]| -> Vec<f64> { factor.solve(r) };
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut residual = dot(&r, &r).sqrt() / rhs_norm;

    for iter in 0..max_iter {
        if residual <= tol {
            return Ok(finish(x, iter, residual));
        }
        let mp = m.mul_vec(&p);
        let pmp = dot(&p, &mp);
        if pmp <= 0.0 {
            break;
        }
        let step = rz / pmp;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * mp[i];
        }
        residual = dot(&r, &r).sqrt() / rhs_norm;
        z = precondition(&r);
        let rz_next = dot(&r, &z);
        let ratio = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + ratio * p[i];
        }
    }
    // recompute the true residual before giving up
    let mx = m.mul_vec(&x);
    let true_r: Vec<f64> = (0..n).map(|i| if active[i] { r_vec[i] - mx[i] } else { 0.0 }).collect();
    residual = dot(&true_r, &true_r).sqrt() / rhs_norm;
    if residual <= tol {
        return Ok(finish(x, max_iter, residual));
    }
    Err(Error::SolverDidNotConverge {
        iterations: max_iter,
        residual,
    })
}

/// Zero-fill incomplete Cholesky factor `L Lᵀ ≈ M`, stored by rows of `L`.
struct IncompleteCholesky {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<f64>,
}

impl IncompleteCholesky {
    /// Inactive rows become identity rows. A pivot that collapses below
    /// `1e-12` of its diagonal entry falls back to that entry.
    fn new(m: &CsrMatrix, active: &[bool]) -> IncompleteCholesky {
        let n = m.n;
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut diag = vec![1.0; n];
        indptr.push(0);
        for i in 0..n {
            let row_start = indices.len();
            if active[i] {
                for (j, mij) in m.row(i) {
                    if j >= i || !active[j] {
                        continue;
                    }
                    let (ri, rj) = (row_start..indices.len(), indptr[j]..indptr[j + 1]);
                    let overlap = sparse_dot(&indices[ri.clone()], &values[ri], &indices[rj.clone()], &values[rj]);
                    indices.push(j);
                    values.push((mij - overlap) / diag[j]);
                }
                let mii = m.get(i, i);
                let sq: f64 = values[row_start..].iter().map(|v| v * v).sum();
                let pivot = mii - sq;
                diag[i] = if pivot > 1e-12 * mii { pivot.sqrt() } else { mii.sqrt() };
            }
            indptr.push(indices.len());
        }
        IncompleteCholesky {
            indptr,
            indices,
            values,
            diag,
        }
    }

    /// `(L Lᵀ)⁻¹ r`.
    fn solve(&self, r: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut y = r.to_vec();
        for i in 0..n {
            let mut acc = y[i];
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc -= self.values[k] * y[self.indices[k]];
            }
            y[i] = acc / self.diag[i];
        }
        for i in (0..n).rev() {
            y[i] /= self.diag[i];
            let yi = y[i];
            for k in self.indptr[i]..self.indptr[i + 1] {
                y[self.indices[k]] -= self.values[k] * yi;
            }
        }
        y
    }
}

/// Dot product of two sparse rows with sorted column indices.
fn sparse_dot(ia: &[usize], va: &[f64], ib: &[usize], vb: &[f64]) -> f64 {
    let (mut p, mut q, mut acc) = (0, 0, 0.0);
    while p < ia.len() && q < ib.len() {
        match ia[p].cmp(&ib[q]) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                acc += va[p] * vb[q];
                p += 1;
                q += 1;
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, w: usize, h: usize) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap()
    }

    #[test]
    fn single_anchor_gives_constant_map() {
        let img = random_image(0, 9, 7);
        let t = nn_regularize_transmission(&img, &[Anchor { x: 3, y: 3, t: 0.7 }], 0.1).unwrap();
        assert!(t.values().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn self_anchored_is_identity() {
        let img = random_image(1, 8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let anchors: Vec<_> = (0..64).map(|i| Anchor { x: i % 8, y: i / 8, t: rng.random() }).collect();
        let t = nn_regularize_transmission(&img, &anchors, 0.1).unwrap();
        for a in &anchors {
            assert_eq!(t.get(a.x, a.y), a.t);
        }
    }

    #[test]
    fn empty_anchors_is_error() {
        let img = random_image(1, 4, 4);
        assert!(nn_regularize_transmission(&img, &[], 0.1).is_err());
    }

    #[test]
    fn two_region_assignment() {
        let img = Image::from_fn(16, 8, |x, _| if x < 8 { [0.1, 0.12, 0.15] } else { [0.8, 0.82, 0.85] }).unwrap();
        let anchors = [Anchor { x: 2, y: 4, t: 0.9 }, Anchor { x: 13, y: 1, t: 0.3 }];
        let t = nn_regularize_transmission(&img, &anchors, 0.01).unwrap();
        for y in 0..8 {
            for x in 0..16 {
                assert_eq!(t.get(x, y), if x < 8 { 0.9 } else { 0.3 });
            }
        }
    }

    fn full_field(img: &Image, value: impl Fn(usize) -> f64) -> SparseField {
        let mut f = SparseField::empty(img.width(), img.height());
        for i in 0..img.len() {
            f.set(i, Sample { value: value(i), sigma: 0.01 });
        }
        f
    }

    #[test]
    fn laplacian_rows_sum_to_zero_and_psd() {
        let img = random_image(3, 11, 9);
        let l = image_laplacian(&img, 1e-4);
        for i in 0..l.n {
            let s: f64 = l.row(i).map(|(_, v)| v).sum();
            assert!(s.abs() < 1e-9 * l.get(i, i).max(1.0));
            for (j, v) in l.row(i) {
                assert_eq!(v, l.get(j, i));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x: Vec<f64> = (0..l.n).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(l.quadratic_form(&x) >= -1e-9);
        }
    }

    #[test]
    fn identical_neighbors_hit_weight_cap() {
        let img = Image::filled(3, 1, [0.4; 3]).unwrap();
        let l = image_laplacian(&img, 1e-4);
        assert!((l.get(0, 1) + 1e4).abs() < 1e-6);
    }

    #[test]
    fn pure_data_term_returns_samples() {
        let img = random_image(5, 6, 5);
        let field = full_field(&img, |i| (i % 7) as f64 / 7.0);
        let sys = assemble_interpolation_system(&field, &img, 0.0, 0.0, 1e-4).unwrap();
        let sol = solve_airlight_field(&sys, 1e-10, 100, 1.0).unwrap();
        for (i, v) in sol.raw.iter().enumerate() {
            assert!((v - (i % 7) as f64 / 7.0).abs() < 1e-9);
        }
    }

    #[test]
    fn partial_samples_without_smoothness() {
        let img = random_image(6, 5, 5);
        let mut field = SparseField::empty(5, 5);
        field.set(3, Sample { value: 0.4, sigma: 0.02 });
        field.set(17, Sample { value: 0.9, sigma: 0.05 });
        let sys = assemble_interpolation_system(&field, &img, 0.0, 0.0, 1e-4).unwrap();
        let sol = solve_airlight_field(&sys, 1e-12, 50, 1.0).unwrap();
        assert!((sol.raw[3] - 0.4).abs() < 1e-12);
        assert!((sol.raw[17] - 0.9).abs() < 1e-12);
        assert_eq!(sol.raw[0], 0.0);
    }

    #[test]
    fn constant_samples_give_constant_field() {
        let img = random_image(7, 10, 10);
        let field = full_field(&img, |_| 0.35);
        let sys = assemble_interpolation_system(&field, &img, 1.0, 0.0, 1e-4).unwrap();
        let sol = solve_airlight_field(&sys, 1e-10, 2000, 1.0).unwrap();
        assert!(sol.raw.iter().all(|v| (v - 0.35).abs() < 1e-8));
    }

    #[test]
    fn hand_built_three_by_three() {
        // 3x3 image with two estimates; every weight written out by hand
        let px = [
            [0.1, 0.2, 0.3],
            [0.3, 0.2, 0.1],
            [0.5, 0.5, 0.5],
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.2, 0.2, 0.2],
            [0.9, 0.8, 0.7],
            [0.6, 0.3, 0.0],
            [0.4, 0.4, 0.9],
        ];
        let img = Image::new(3, 3, px.to_vec()).unwrap();
        let mut field = SparseField::empty(3, 3);
        field.set(0, Sample { value: 0.5, sigma: 0.1 });
        field.set(8, Sample { value: 0.2, sigma: 0.2 });
        let eps = 1e-4;
        let (alpha, beta) = (0.7, 0.3);
        let sys = assemble_interpolation_system(&field, &img, alpha, beta, eps).unwrap();

        let w = |a: usize, b: usize| {
            let d2: f64 = (0..3).map(|c| (px[a][c] - px[b][c]).powi(2)).sum();
            1.0 / (d2 + eps)
        };
        let edges = [(0, 1), (1, 2), (3, 4), (4, 5), (6, 7), (7, 8), (0, 3), (3, 6), (1, 4), (4, 7), (2, 5), (5, 8)];
        let mut expected = [[0.0f64; 9]; 9];
        for &(a, b) in &edges {
            let wab = w(a, b);
            expected[a][b] -= alpha * wab;
            expected[b][a] -= alpha * wab;
            expected[a][a] += alpha * wab;
            expected[b][b] += alpha * wab;
        }
        // 1/σ² = 100 and 25, scaled by the maximum
        expected[0][0] += 1.0;
        expected[8][8] += 0.25;
        let got = sys.matrix().to_dense();
        for i in 0..9 {
            for j in 0..9 {
                assert!((got[i][j] - expected[i][j]).abs() <= 1e-9 * expected[i][j].abs().max(1.0), "({i},{j})");
            }
        }
        let rhs = sys.rhs();
        assert!((rhs[0] - (0.5 - 0.15 / (0.14f64).sqrt())).abs() < 1e-12);
        assert!((rhs[3] - (-0.15 / eps)).abs() < 1e-6);
        assert!((rhs[8] - (0.25 * 0.2 - 0.15 / (1.13f64).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn energy_descends_from_initial_guess() {
        let img = random_image(9, 12, 12);
        let mut field = SparseField::empty(12, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for i in (0..144).step_by(5) {
            field.set(i, Sample { value: rng.random(), sigma: rng.random_range(0.01..0.1) });
        }
        let sys = assemble_interpolation_system(&field, &img, 1.0, 0.1, 1e-4).unwrap();
        let sol = solve_airlight_field(&sys, 1e-8, 5000, 1.0).unwrap();
        assert!(sys.energy(&sol.raw) < sys.energy(&sys.initial_guess()));
    }

    #[test]
    fn non_convergence_is_reported() {
        let img = random_image(11, 20, 20);
        let mut field = SparseField::empty(20, 20);
        field.set(0, Sample { value: 1.0, sigma: 0.01 });
        let sys = assemble_interpolation_system(&field, &img, 1.0, 0.0, 1e-4).unwrap();
        match solve_airlight_field(&sys, 1e-12, 2, 1.0) {
            Err(Error::SolverDidNotConverge { iterations: 2, residual }) => assert!(residual > 1e-12),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
