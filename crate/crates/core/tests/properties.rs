mod common;

use std::sync::Arc;

use common::*;
use lgcp::geometry::{build_mesh, fem_matrices, MeshSettings};
use lgcp::inference::{LatentModel, Likelihood, NewtonOptions};
use lgcp::latent::{equispaced_knots, rw1_term, spde2d_term, MaternPriors, Prior, RW1_PRIOR};
use lgcp::simulate::modulation;
use lgcp::smoothing::kernel_mass_inside;
use lgcp::Window;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn rw1_structure(r in 2usize..40, log_tau in -5.0f64..8.0) {
        check_rw1_structure(r, log_tau).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn voronoi_mass(n in 2usize..250, seed in any::<u64>()) {
        check_voronoi_mass(n, seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn augmentation_counts(counts in prop::collection::vec(1usize..50, 2..5), seed in any::<u64>()) {
        check_augmentation_counts(&counts, seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn modulation_is_bounded_and_monotone(d1 in 0.0f64..10.0, d2 in 0.0f64..10.0, phi in 0.01f64..100.0) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(modulation(lo, phi) <= 1.0);
        prop_assert!(modulation(hi, phi) <= modulation(lo, phi));
    }

    #[test]
    fn kernel_mass_is_a_probability(x in 0.0f64..3.0, y in 0.0f64..2.0, h in 0.02f64..2.0) {
        let w = holed_window(3.0, 2.0);
        let m = kernel_mass_inside(&w, lgcp::Point::new(x, y), h);
        prop_assert!((-1e-9..=1.0 + 1e-9).contains(&m), "{}", m);
    }

    #[test]
    fn rw1_prior_invariant_to_constant_shift(shift in -3.0f64..3.0, seed in any::<u64>()) {
        // y and weights on 6 knots, the predictor reads the knot values directly
        use rand::Rng;
        let mut r = rng(seed);
        let knots = equispaced_knots(6, 3.0);
        let term = rw1_term("u", knots, RW1_PRIOR).unwrap();
        let rows = 12;
        let mut t = sprs::TriMat::new((rows, 6));
        for k in 0..rows {
            t.add_triplet(k, k % 6, 1.0);
        }
        let y: Vec<f64> = (0..rows).map(|k| if k < 6 { 1.0 } else { 0.0 }).collect();
        let w: Vec<f64> = (0..rows).map(|k| if k < 6 { 0.0 } else { r.random_range(0.1..2.0) }).collect();
        let model = LatentModel::new(vec![term], y, w, t.to_csr(), Likelihood::Poisson).unwrap();
        let x: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
        let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
        // prior quadratic form ignores constants
        let qa = model.log_prior_latent(&[0.3], &x).unwrap();
        let qb = model.log_prior_latent(&[0.3], &shifted).unwrap();
        prop_assert!((qa - qb).abs() < 1e-9 * qa.abs().max(1.0));
    }

    #[test]
    fn priors_are_normalised(threshold in 0.5f64..20.0, prob in 0.01f64..0.99) {
        for kind in [lgcp::latent::PcKind::Range2d, lgcp::latent::PcKind::Range1d, lgcp::latent::PcKind::Sd] {
            let p = lgcp::latent::pc_prior_calibrate(kind, threshold, prob);
            let c = p.cdf(threshold);
            let want = match kind {
                lgcp::latent::PcKind::Sd => 1.0 - prob,
                _ => prob,
            };
            prop_assert!((c - want).abs() < 1e-9, "{:?} {} {}", kind, c, want);
        }
        let is_log_gamma = matches!(RW1_PRIOR, Prior::LogGammaPrecision { .. });
        prop_assert!(is_log_gamma);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn projector_rows(width in 1.0f64..4.0, height in 1.0f64..4.0, edge in 0.25f64..0.8, seed in any::<u64>()) {
        check_projector_rows(width, height, edge, seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn fem_matrices_are_consistent(width in 1.0f64..3.0, height in 1.0f64..3.0, edge in 0.3f64..0.8) {
        let w = Window::rectangle(0.0, 0.0, width, height).unwrap();
        let mesh = build_mesh(&w, &MeshSettings::new(edge)).unwrap();
        let fem = fem_matrices(&mesh).unwrap();
        let mass: f64 = fem.c_diag.iter().sum();
        prop_assert!((mass - mesh.area()).abs() < 1e-9 * mesh.area());
        // stiffness annihilates constants and is symmetric
        for (i, row) in fem.g.outer_iterator().enumerate() {
            let s: f64 = row.iter().map(|(_, v)| *v).sum();
            prop_assert!(s.abs() < 1e-10);
            for (j, v) in row.iter() {
                let t = fem.g.get(j, i).copied().unwrap_or(0.0);
                prop_assert!((v - t).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spde_precision_is_symmetric_and_factorizable(log_range in -0.5f64..1.5, log_sd in -1.0f64..1.0) {
        let w = Window::rectangle(0.0, 0.0, 2.0, 2.0).unwrap();
        let mesh = Arc::new(build_mesh(&w, &MeshSettings::new(0.4)).unwrap());
        let term = spde2d_term("s", mesh, &MaternPriors::default()).unwrap();
        let q = term.dense_precision(&[log_range, log_sd]).unwrap();
        prop_assert!((&q - q.transpose()).amax() < 1e-12 * q.amax());
        prop_assert!(q.cholesky().is_some());
    }
}

#[test]
fn newton_mode_is_reproducible() {
    let w = holed_window(2.0, 2.0);
    let mut r = rng(9);
    let pts = uniform_points(&mut r, 80, &w);
    let knots = equispaced_knots(8, 2.0);
    let term = rw1_term("u", knots.clone(), RW1_PRIOR).unwrap();
    let mut t = sprs::TriMat::new((pts.len(), 8));
    for (k, p) in pts.iter().enumerate() {
        for (j, v) in term.project_scalar(p.x).unwrap() {
            t.add_triplet(k, j, v);
        }
    }
    let y = vec![1.0; pts.len()];
    let wts: Vec<f64> = pts.iter().map(|p| 0.01 + p.y * 0.01).collect();
    let model = LatentModel::new(vec![term], y, wts, t.to_csr(), Likelihood::Poisson).unwrap();
    let a = model.find_mode(&[1.0], &NewtonOptions::default()).unwrap();
    let b = model.find_mode(&[1.0], &NewtonOptions::default()).unwrap();
    assert_eq!(a.x, b.x);
}
