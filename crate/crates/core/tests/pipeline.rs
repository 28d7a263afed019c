mod common;

use common::*;
use lgcp::geometry::io::{read_pattern_csv, read_window_geojson, write_pattern_csv, write_window_geojson};
use lgcp::inference::{fit, FitOptions};
use lgcp::lgcp::{effect_difference, exposure_curve, prepare, ExposureForm, ModelId, ModelSpec, WeightScheme};
use lgcp::simulate::{simulate_study, Scenario};
use lgcp::smoothing::risk_ratio;
use lgcp::{Error, GridSpec, Point, PointPattern, Window};

fn small_study(seed: u64, n_cases: usize, phi: f64) -> (Scenario, PointPattern) {
    let mut sc = Scenario::full_study(seed);
    sc.n_controls = 1500;
    sc.case_counts = vec![n_cases];
    sc.phis = vec![phi];
    sc.grid_res = 60;
    let st = simulate_study(&sc).unwrap();
    let pp = st.datasets[0].pattern(&st.controls).unwrap();
    (sc, pp)
}

#[test]
fn files_roundtrip_into_identical_fits() {
    let (sc, pp) = small_study(3, 200, 2.0);
    let dir = tempfile::tempdir().unwrap();
    let (pp_path, w_path) = (dir.path().join("pattern.csv"), dir.path().join("window.geojson"));
    write_pattern_csv(&pp_path, &pp).unwrap();
    write_window_geojson(&w_path, &sc.window).unwrap();
    let pp2 = read_pattern_csv(&pp_path).unwrap();
    let w2 = read_window_geojson(&w_path).unwrap();
    assert_eq!(pp2.points, pp.points);
    assert_eq!(pp2.marks, pp.marks);
    assert!((w2.area() - sc.window.area()).abs() < 1e-12);
    let spec = ModelSpec::new(ModelId::M2, 1).with_source("s", sc.source, ExposureForm::Fixed);
    let a = fit(&prepare(&spec, &pp, &sc.window).unwrap().model, &FitOptions::default()).unwrap();
    let b = fit(&prepare(&spec, &pp2, &w2).unwrap().model, &FitOptions::default()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn strong_decay_gives_decreasing_rw1_curve() {
    let (sc, pp) = small_study(8, 1000, 1.0);
    let spec = ModelSpec::new(ModelId::M2, 1).with_source("s", sc.source, ExposureForm::Rw1);
    let am = prepare(&spec, &pp, &sc.window).unwrap();
    let f = fit(&am.model, &FitOptions::default()).unwrap();
    let mut d: Vec<f64> = am.data.rows.iter().filter(|r| r.block == 1 && r.y == 1.0).map(|r| r.distances[0]).collect();
    d.sort_by(f64::total_cmp);
    let q1 = d[d.len() / 4];
    let curve = exposure_curve(&f, &am, 1, "s", &[0.0, q1]).unwrap();
    assert!(curve[1].mean < curve[0].mean, "{curve:?}");
}

#[test]
fn fixed_exposure_slope_is_negative_under_decay() {
    let (sc, pp) = small_study(4, 800, 1.0);
    let spec = ModelSpec::new(ModelId::M2, 1).with_source("s", sc.source, ExposureForm::Fixed);
    let am = prepare(&spec, &pp, &sc.window).unwrap();
    let f = fit(&am.model, &FitOptions::default()).unwrap();
    let c = exposure_curve(&f, &am, 1, "s", &[1.0]).unwrap();
    assert!(c[0].upper < 0.0, "{c:?}");
}

#[test]
fn dual_mesh_weights_fit_like_voronoi() {
    let (sc, pp) = small_study(5, 300, 2.0);
    let mut spec = ModelSpec::new(ModelId::M0, 1);
    let vor = fit(&prepare(&spec, &pp, &sc.window).unwrap().model, &FitOptions::default()).unwrap();
    spec.weights = WeightScheme::DualMesh;
    let am = prepare(&spec, &pp, &sc.window).unwrap();
    let dual = fit(&am.model, &FitOptions::default()).unwrap();
    let o = am.model.block("intercept").unwrap().offset;
    for b in 0..2 {
        assert!((vor.node(o + b).0 - dual.node(o + b).0).abs() < 0.15);
    }
}

#[test]
fn flat_decay_matches_baseline_risk() {
    let (sc, pp) = small_study(6, 1500, 1e6);
    let grid = GridSpec::covering(&sc.window, 30).unwrap();
    let rr = risk_ratio(&pp.points_of(1), &pp.points_of(0), 0.5, grid, &sc.window).unwrap();
    let mut v = rr.defined_values();
    v.sort_by(f64::total_cmp);
    let med = v[v.len() / 2];
    assert!((med - 1.0).abs() < 0.2, "median ratio {med}");
}

#[test]
fn identical_diseases_have_null_difference() {
    let w = Window::rectangle(0.0, 0.0, 4.0, 3.0).unwrap();
    let mut r = rng(12);
    let c = uniform_points(&mut r, 600, &w);
    let a = uniform_points(&mut r, 250, &w);
    let b = uniform_points(&mut r, 250, &w);
    let pp = PointPattern::from_groups(&[&c, &a, &b]).unwrap();
    let spec = ModelSpec::new(ModelId::M1, 2);
    let am = prepare(&spec, &pp, &w).unwrap();
    let f = fit(&am.model, &FitOptions::default()).unwrap();
    let grid = GridSpec::covering(&w, 24).unwrap();
    let (mean, sd) = effect_difference(&f, &am, 1, 2, grid, &w).unwrap();
    let cells: Vec<usize> = (0..grid.len()).filter(|&k| mean.is_defined(k)).collect();
    let inside = cells.iter().filter(|&&k| mean.values[k].abs() <= 1.96 * sd.values[k]).count();
    assert!(inside as f64 >= 0.9 * cells.len() as f64, "{inside} of {}", cells.len());
    let (m0, _) = effect_difference(&f, &am, 1, 1, grid, &w).unwrap();
    assert!(m0.defined_values().iter().all(|v| *v == 0.0));

    let am0 = prepare(&ModelSpec::new(ModelId::M0, 2), &pp, &w).unwrap();
    let f0 = fit(&am0.model, &FitOptions::default()).unwrap();
    assert!(matches!(effect_difference(&f0, &am0, 1, 2, grid, &w), Err(Error::InvalidSpec(_))));
}

#[test]
fn hotspot_is_flagged_by_exceedance() {
    let w = Window::rectangle(0.0, 0.0, 4.0, 3.0).unwrap();
    let mut r = rng(21);
    let c = uniform_points(&mut r, 800, &w);
    let mut a = uniform_points(&mut r, 200, &w);
    let hot = Point::new(1.0, 1.0);
    let disc = Window::rectangle(0.6, 0.6, 1.4, 1.4).unwrap();
    a.extend(uniform_points(&mut r, 150, &disc));
    let pp = PointPattern::from_groups(&[&c, &a]).unwrap();
    let am = prepare(&ModelSpec::new(ModelId::M1, 1), &pp, &w).unwrap();
    let f = fit(&am.model, &FitOptions::default()).unwrap();
    let grid = GridSpec::covering(&w, 40).unwrap();
    let ex = lgcp::inference::exceedance(&f, &am.model, "S1", grid, &w).unwrap();
    assert!(ex.value_at(hot) > 0.9, "{}", ex.value_at(hot));
}
