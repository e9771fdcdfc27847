//! Small fixed-size vector helpers and a symmetric 3x3 eigen-solver.

use crate::image::Rgb;

pub type Vec3 = [f64; 3];

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// `a / |a|`, or `None` when `|a|` is below `eps`.
pub fn normalize(a: Vec3, eps: f64) -> Option<Vec3> {
    let n = norm(a);
    if n <= eps || !n.is_finite() {
        None
    } else {
        Some(scale(a, 1.0 / n))
    }
}

/// Angle between two directions in degrees, ignoring orientation (0..=90).
pub fn line_angle_deg(a: Vec3, b: Vec3) -> f64 {
    let c = (dot(a, b) / (norm(a) * norm(b))).abs().min(1.0);
    c.acos().to_degrees()
}

/// Symmetric 3x3 matrix stored as full rows.
pub type Sym3 = [[f64; 3]; 3];

/// Eigenvalues in ascending order and matching unit eigenvectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymEigen {
    pub values: [f64; 3],
    pub vectors: [Vec3; 3],
}

/// Eigen-decomposition of a symmetric 3x3 matrix.
///
/// Eigenvalues come from the closed-form roots of the characteristic
/// polynomial (trigonometric form). Each eigenvector is taken from the best
/// conditioned cross product of the rows of `M - λI` and then polished by two
/// steps of shifted inverse iteration. The last vector is re-orthogonalized
/// against the first two.
pub fn sym3_eigen(m: &Sym3) -> SymEigen {
    let values = sym3_eigenvalues(m);
    let scale_ref = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);

    let v0 = polished_vector(m, values[0], scale_ref, None);
    let v1 = polished_vector(m, values[1], scale_ref, Some(v0));
    let v2 = normalize(cross(v0, v1), 0.0).unwrap_or([0.0, 0.0, 1.0]);
    // Rayleigh quotients are far more accurate than the trigonometric roots
    // near repeated eigenvalues
    let mut pairs = [v0, v1, v2].map(|v| (rayleigh(m, v), v));
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    SymEigen {
        values: pairs.map(|p| p.0),
        vectors: pairs.map(|p| p.1),
    }
}

fn rayleigh(m: &Sym3, v: Vec3) -> f64 {
    let mv = [dot(m[0], v), dot(m[1], v), dot(m[2], v)];
    dot(v, mv)
}

fn sym3_eigenvalues(m: &Sym3) -> [f64; 3] {
    let p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    if p1 == 0.0 {
        let mut d = [m[0][0], m[1][1], m[2][2]];
        d.sort_by(f64::total_cmp);
        return d;
    }
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = *m;
    for (i, row) in b.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det_b = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (det_b / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let largest = q + 2.0 * p * phi.cos();
    let smallest = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let middle = 3.0 * q - largest - smallest;
    let mut out = [smallest, middle, largest];
    out.sort_by(f64::total_cmp);
    out
}

fn polished_vector(m: &Sym3, lambda: f64, scale_ref: f64, orth: Option<Vec3>) -> Vec3 {
    let shifted = |i: usize| -> Vec3 {
        let mut r = m[i];
        r[i] -= lambda;
        r
    };
    let rows = [shifted(0), shifted(1), shifted(2)];
    let candidates = [
        cross(rows[0], rows[1]),
        cross(rows[0], rows[2]),
        cross(rows[1], rows[2]),
    ];
    let best = candidates
        .iter()
        .copied()
        .max_by(|a, b| dot(*a, *a).total_cmp(&dot(*b, *b)))
        .expect("three candidates");

    let row_scale = rows.iter().fold(0.0f64, |acc, r| acc.max(dot(*r, *r)));
    let mut v = match normalize(best, 1e-6 * row_scale) {
        Some(v) => v,
        // M - λI has rank <= 1: any vector orthogonal to its nonzero row works
        None => {
            let row = rows
                .iter()
                .copied()
                .max_by(|a, b| dot(*a, *a).total_cmp(&dot(*b, *b)))
                .expect("three rows");
            any_orthogonal(normalize(row, 1e-300).unwrap_or([1.0, 0.0, 0.0]))
        }
    };
    if let Some(o) = orth {
        v = project_out(v, o);
    }

    // shifted inverse iteration
    let shift = lambda - 1e-10 * scale_ref;
    for _ in 0..2 {
        let mut a = *m;
        for (i, row) in a.iter_mut().enumerate() {
            row[i] -= shift;
        }
        if let Some(next) = solve3(&a, v).and_then(|x| normalize(x, 1e-300)) {
            v = next;
        }
        if let Some(o) = orth {
            v = project_out(v, o);
        }
    }
    v
}

fn project_out(v: Vec3, o: Vec3) -> Vec3 {
    let w = sub(v, scale(o, dot(v, o)));
    normalize(w, 1e-12).unwrap_or_else(|| any_orthogonal(o))
}

pub(crate) fn any_orthogonal(u: Vec3) -> Vec3 {
    let pick = if u[0].abs() <= u[1].abs() && u[0].abs() <= u[2].abs() {
        [1.0, 0.0, 0.0]
    } else if u[1].abs() <= u[2].abs() {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    normalize(cross(u, pick), 0.0).expect("pick is not parallel to u")
}

/// Solves `a x = b` by Cramer's rule; `None` when singular.
fn solve3(a: &Sym3, b: Vec3) -> Option<Vec3> {
    let det = dot(a[0], cross(a[1], a[2]));
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let cols = |c: usize| [a[0][c], a[1][c], a[2][c]];
    let (c0, c1, c2) = (cols(0), cols(1), cols(2));
    let x = [
        dot(b, cross(c1, c2)) / det,
        dot(c0, cross(b, c2)) / det,
        dot(c0, cross(c1, b)) / det,
    ];
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Euclidean distance between two RGB colors.
#[inline]
pub fn rgb_distance(a: Rgb, b: Rgb) -> f64 {
    norm(sub(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference(m: &Sym3) -> (Vec<f64>, Vec<Vec3>) {
        let nm = Matrix3::from_fn(|i, j| m[i][j]);
        let eig = nm.symmetric_eigen();
        let mut idx: Vec<usize> = (0..3).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vecs = idx
            .iter()
            .map(|&i| {
                let c = eig.eigenvectors.column(i);
                [c[0], c[1], c[2]]
            })
            .collect();
        (vals, vecs)
    }

    fn random_sym(rng: &mut ChaCha8Rng) -> Sym3 {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in i..3 {
                let v = rng.random_range(-1.0..1.0);
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        m
    }

    #[test]
    fn matches_nalgebra_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let m = random_sym(&mut rng);
            let e = sym3_eigen(&m);
            let (vals, vecs) = reference(&m);
            for k in 0..3 {
                assert!((e.values[k] - vals[k]).abs() < 1e-9, "{:?} vs {:?}", e.values, vals);
            }
            // smallest eigenvector, up to sign
            assert!(dot(e.vectors[0], vecs[0]).abs() > 1.0 - 1e-9);
            for v in e.vectors {
                assert!((norm(v) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn residual_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let m = random_sym(&mut rng);
            let e = sym3_eigen(&m);
            for k in 0..3 {
                let v = e.vectors[k];
                let mv = [dot(m[0], v), dot(m[1], v), dot(m[2], v)];
                let r = norm(sub(mv, scale(v, e.values[k])));
                assert!(r < 1e-9, "residual {r}");
            }
        }
    }

    #[test]
    fn diagonal_and_rank_one() {
        let e = sym3_eigen(&[[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]]);
        assert_eq!(e.values, [1.0, 2.0, 3.0]);
        assert!(dot(e.vectors[0], [0.0, 1.0, 0.0]).abs() > 1.0 - 1e-12);

        let u = normalize([1.0, 2.0, 2.0], 0.0).unwrap();
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = u[i] * u[j];
            }
        }
        let e = sym3_eigen(&m);
        assert!(e.values[0].abs() < 1e-12 && e.values[1].abs() < 1e-12);
        assert!((e.values[2] - 1.0).abs() < 1e-12);
        assert!(dot(e.vectors[0], u).abs() < 1e-9);
    }

    #[test]
    fn cross_and_angle() {
        assert_eq!(cross([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]), [0.0, 0.0, 1.0]);
        assert!((line_angle_deg([1.0, 0.0, 0.0], [-1.0, 1.0, 0.0]) - 45.0).abs() < 1e-12);
    }
}
