mod common;

use common::{dense_minimizer, max_abs_diff, EPS};
use dehaze_core::image::Image;
use dehaze_core::regularization::{assemble_interpolation_system, solve_airlight_field, Sample, SparseField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn five_pixel_chain_matches_dense_solve() {
    let img = Image::new(5, 1, vec![[0.2, 0.3, 0.4], [0.25, 0.3, 0.4], [0.6, 0.5, 0.4], [0.6, 0.55, 0.45], [0.9, 0.8, 0.7]]).unwrap();
    let mut field = SparseField::empty(5, 1);
    field.set(0, Sample { value: 0.3, sigma: 0.01 });
    field.set(4, Sample { value: 0.7, sigma: 0.02 });
    for (alpha, beta) in [(1.0, 0.0), (1.0, 1e-4), (0.05, 0.01)] {
        let system = assemble_interpolation_system(&field, &img, alpha, beta, EPS).unwrap();
        let sol = solve_airlight_field(&system, 1e-14, 1000, f64::INFINITY).unwrap();
        let dense = dense_minimizer(&img, &field, alpha, beta);
        assert!(max_abs_diff(&sol.raw, &dense) <= 1e-6, "alpha {alpha} beta {beta}: {:?} vs {dense:?}", sol.raw);
    }
}

#[test]
fn centered_estimate_on_chain_is_symmetric() {
    let img = Image::new(5, 1, vec![[0.1, 0.2, 0.3], [0.3, 0.3, 0.3], [0.5, 0.4, 0.3], [0.3, 0.3, 0.3], [0.1, 0.2, 0.3]]).unwrap();
    let mut field = SparseField::empty(5, 1);
    field.set(2, Sample { value: 1.0, sigma: 0.01 });
    let system = assemble_interpolation_system(&field, &img, 1.0, 0.0, EPS).unwrap();
    let sol = solve_airlight_field(&system, 1e-14, 1000, f64::INFINITY).unwrap();
    let dense = dense_minimizer(&img, &field, 1.0, 0.0);
    assert!(max_abs_diff(&sol.raw, &dense) <= 1e-6);
    for k in 0..2 {
        assert!((sol.raw[k] - sol.raw[4 - k]).abs() <= 1e-9);
    }
}

#[test]
fn random_systems_match_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for trial in 0..12 {
        let (w, h) = (rng.random_range(2..=20), rng.random_range(2..=20));
        // a smooth ramp with noise, so edge weights span several decades
        let img = Image::from_fn(w, h, |x, y| {
            let base = (x + y) as f64 / (w + h) as f64;
            [0, 1, 2].map(|c| (base + 0.1 * c as f64 + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0))
        })
        .unwrap();
        let mut field = SparseField::empty(w, h);
        for i in 0..w * h {
            if rng.random_bool(0.2) {
                field.set(i, Sample { value: rng.random_range(0.0..1.2), sigma: rng.random_range(0.0..0.1) });
            }
        }
        if field.count() == 0 {
            field.set(0, Sample { value: 0.5, sigma: 0.05 });
        }
        let (alpha, beta) = (rng.random_range(0.01..2.0), rng.random_range(0.0..1e-2));
        let system = assemble_interpolation_system(&field, &img, alpha, beta, EPS).unwrap();
        let sol = solve_airlight_field(&system, 1e-14, 20 * w * h, f64::INFINITY).unwrap();
        let dense = dense_minimizer(&img, &field, alpha, beta);
        let err = max_abs_diff(&sol.raw, &dense);
        assert!(err <= 1e-6, "trial {trial} ({w}x{h}): error {err}");
    }
}

#[test]
fn solution_minimizes_energy_locally() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let img = Image::from_fn(12, 9, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap();
    let mut field = SparseField::empty(12, 9);
    for i in (0..108).step_by(7) {
        field.set(i, Sample { value: rng.random_range(0.0..1.0), sigma: 0.02 });
    }
    let system = assemble_interpolation_system(&field, &img, 1.0, 1e-4, EPS).unwrap();
    let sol = solve_airlight_field(&system, 1e-14, 5000, f64::INFINITY).unwrap();
    let best = system.energy(&sol.raw);
    assert!(best <= system.energy(&system.initial_guess()));
    for _ in 0..50 {
        let probe: Vec<f64> = sol.raw.iter().map(|a| a + rng.random_range(-1e-3..1e-3)).collect();
        assert!(system.energy(&probe) >= best - 1e-12);
    }
}
