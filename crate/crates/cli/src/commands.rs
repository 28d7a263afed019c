use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lgcp::geometry::io::{pattern_to_csv, read_pattern_csv, read_window_geojson, window_to_geojson};
use lgcp::inference::{exceedance, posterior_field};
use lgcp::lgcp::{effect_difference, exposure_curve, AssembledModel};
use lgcp::simulate::{Baseline, Scenario};
use lgcp::{ExposureForm, FitResult, GridField, GridSpec, Point, Window};
use serde::{Deserialize, Serialize};

use crate::config::{hash_bytes, hash_file, write_file, FileHash, RunConfig};
use crate::error::{CliError, CliResult};
use crate::report::{CurveReport, DatasetRef, EffectRow, FitReport, SpatialSummary};

const Z95: f64 = 1.959_963_984_540_054;
const CURVE_POINTS: usize = 41;

pub fn parse_point(s: &str) -> Result<Point, String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected X,Y, got {s}"))?;
    let x: f64 = x.trim().parse().map_err(|e| format!("bad x in {s}: {e}"))?;
    let y: f64 = y.trim().parse().map_err(|e| format!("bad y in {s}: {e}"))?;
    Ok(Point::new(x, y))
}

pub fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (u, v) = s.split_once(',').ok_or_else(|| format!("expected U,V, got {s}"))?;
    let u = u.trim().parse().map_err(|e| format!("bad disease in {s}: {e}"))?;
    let v = v.trim().parse().map_err(|e| format!("bad disease in {s}: {e}"))?;
    Ok((u, v))
}

fn note(cfg: &RunConfig, msg: impl AsRef<str>) {
    if cfg.verbosity > 0 {
        eprintln!("{}", msg.as_ref());
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub phi: f64,
    pub n_cases: usize,
    pub file: FileHash,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub scenario: Scenario,
    pub window: FileHash,
    pub baseline_estimate: FileHash,
    pub datasets: Vec<ManifestEntry>,
}

fn write_hashed(dir: &Path, name: &str, contents: String) -> CliResult<FileHash> {
    write_file(&dir.join(name), &contents)?;
    Ok(FileHash { path: name.to_string(), sha256: hash_bytes(contents.as_bytes()) })
}

pub fn simulate(cfg: &RunConfig) -> CliResult<()> {
    let sim = &cfg.simulation;
    let mut sc = Scenario::full_study(cfg.seed);
    if cfg.window.is_some() {
        let path = cfg.require_file("window", &cfg.window)?;
        sc.window = read_window_geojson(&path)?;
        sc.baseline = Baseline::Uniform;
    }
    sc.n_controls = sim.n_controls;
    sc.case_counts = sim.case_counts.clone();
    sc.phis = sim.phis.clone();
    sc.source = sim.source;
    sc.bandwidth = sim.bandwidth;
    sc.grid_res = sim.smoothing_res;
    note(cfg, format!("simulating {} datasets", sc.case_counts.len() * sc.phis.len()));
    let study = lgcp::simulate_study(&sc)?;

    let dir = &cfg.out;
    let window = write_hashed(dir, "window.geojson", window_to_geojson(&sc.window))?;
    let baseline_estimate = write_hashed(dir, "baseline_estimate.csv", study.baseline_estimate.to_csv())?;
    let mut datasets = Vec::with_capacity(study.datasets.len());
    for d in &study.datasets {
        let name = format!("phi{}_n{}.csv", d.phi, d.n_cases);
        let file = write_hashed(dir, &name, pattern_to_csv(&d.pattern(&study.controls)?))?;
        note(cfg, format!("wrote {name}"));
        datasets.push(ManifestEntry { phi: d.phi, n_cases: d.n_cases, file });
    }
    let manifest = Manifest { seed: cfg.seed, scenario: sc, window, baseline_estimate, datasets };
    write_file(&dir.join("manifest.json"), to_json(&manifest))
}

pub struct Fitted {
    pub am: AssembledModel,
    pub fit: FitResult,
    pub window: Window,
    pub dataset: DatasetRef,
}

pub fn fit_dataset(cfg: &RunConfig) -> CliResult<Fitted> {
    let pattern_path = cfg.require_file("pattern", &cfg.pattern)?;
    let window_path = cfg.require_file("window", &cfg.window)?;
    let dataset = DatasetRef { pattern: hash_file(&pattern_path)?, window: hash_file(&window_path)? };
    let pattern = read_pattern_csv(&pattern_path)?;
    let window = read_window_geojson(&window_path)?;
    let mut spec = cfg.model.clone();
    spec.n_diseases = pattern.n_types().saturating_sub(1);
    note(cfg, format!("model {} with {} diseases, {} points", spec.model.index(), spec.n_diseases, pattern.len()));
    let am = lgcp::prepare(&spec, &pattern, &window)?;
    let fit = lgcp::fit(&am.model, &cfg.fit)?;
    note(
        cfg,
        format!(
            "{} outer iterations, gradient {:.2e}, DIC {:.2}",
            fit.diagnostics.outer_iterations, fit.diagnostics.outer_gradient_norm, fit.criteria.dic
        ),
    );
    Ok(Fitted { am, fit, window, dataset })
}

fn effect_row(name: String, (mean, sd): (f64, f64)) -> EffectRow {
    EffectRow { name, mean, sd, lower: mean - Z95 * sd, upper: mean + Z95 * sd }
}

fn fixed_effects(f: &Fitted) -> CliResult<Vec<EffectRow>> {
    let (am, fit) = (&f.am, &f.fit);
    let block = |name: &str| {
        am.model.block(name).ok_or_else(|| CliError::Consistency(format!("assembled model lacks block {name}")))
    };
    let mut rows = Vec::new();
    let o = block(&am.layout.intercepts)?.offset;
    for b in 0..=am.spec.n_diseases {
        rows.push(effect_row(format!("alpha{b}"), fit.node(o + b)));
    }
    for slot in am.layout.exposures.iter().filter(|s| s.form == ExposureForm::Fixed) {
        rows.push(effect_row(slot.block.clone(), fit.node(block(&slot.block)?.offset)));
    }
    for name in &am.layout.confounders {
        let o = block(name)?.offset;
        for (c, cov) in am.spec.confounders.iter().enumerate() {
            rows.push(effect_row(format!("{name}.{cov}"), fit.node(o + c)));
        }
    }
    Ok(rows)
}

fn spatial_blocks(am: &AssembledModel) -> Vec<String> {
    std::iter::once(am.layout.baseline.clone()).chain(am.layout.specific.iter().cloned()).collect()
}

fn spatial_terms(f: &Fitted) -> CliResult<Vec<SpatialSummary>> {
    spatial_blocks(&f.am)
        .into_iter()
        .map(|name| {
            let get = |suffix: &str| {
                let key = format!("{name}.{suffix}");
                f.fit
                    .hyper
                    .iter()
                    .find(|h| h.name == key)
                    .cloned()
                    .ok_or_else(|| CliError::Consistency(format!("fit lacks hyperparameter {key}")))
            };
            Ok(SpatialSummary { range: get("range")?, sd: get("sd")?, name })
        })
        .collect()
}

fn curves(f: &Fitted) -> CliResult<Vec<CurveReport>> {
    let mut out = Vec::new();
    for slot in f.am.layout.exposures.iter().filter(|s| s.form != ExposureForm::Fixed) {
        let max_d = f.am.data.max_distance(slot.source);
        let d: Vec<f64> = (0..CURVE_POINTS).map(|k| max_d * k as f64 / (CURVE_POINTS - 1) as f64).collect();
        let points = exposure_curve(&f.fit, &f.am, slot.disease, &slot.source_name, &d)?;
        out.push(CurveReport { block: slot.block.clone(), points });
    }
    Ok(out)
}

fn write_grid(dir: &Path, name: String, field: &GridField, names: &mut Vec<String>) -> CliResult<()> {
    write_file(&dir.join(&name), field.to_csv())?;
    names.push(name);
    Ok(())
}

pub fn fit(cfg: &RunConfig) -> CliResult<()> {
    let f = fit_dataset(cfg)?;
    let grid = GridSpec::covering(&f.window, cfg.grid_res)?;
    let mut grids = Vec::new();
    for block in spatial_blocks(&f.am) {
        let (mean, sd) = posterior_field(&f.fit, &f.am.model, &block, grid, &f.window)?;
        write_grid(&cfg.out, format!("{block}_mean.csv"), &mean, &mut grids)?;
        write_grid(&cfg.out, format!("{block}_sd.csv"), &sd, &mut grids)?;
        if block != f.am.layout.baseline {
            let ex = exceedance(&f.fit, &f.am.model, &block, grid, &f.window)?;
            write_grid(&cfg.out, format!("{block}_exceedance.csv"), &ex, &mut grids)?;
        }
    }
    let report = FitReport {
        model: f.am.spec.model.index(),
        n_diseases: f.am.spec.n_diseases,
        dataset: f.dataset.clone(),
        seed: cfg.seed,
        spec: f.am.spec.clone(),
        hyperparameters: f.fit.hyper.clone(),
        spatial_terms: spatial_terms(&f)?,
        fixed_effects: fixed_effects(&f)?,
        exposure_curves: curves(&f)?,
        criteria: f.fit.criteria.clone(),
        diagnostics: f.fit.diagnostics.clone(),
        grids,
    };
    write_file(&cfg.out.join("config.json"), cfg.to_json() + "\n")?;
    write_file(&cfg.out.join("report.json"), to_json(&report))
}

pub fn load_report(path: &Path) -> CliResult<FitReport> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read report {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("invalid report {}: {e}", path.display())))
}

fn same_dataset(a: &DatasetRef, b: &DatasetRef) -> bool {
    a.pattern.sha256 == b.pattern.sha256 && a.window.sha256 == b.window.sha256
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn comparison_table(reports: &[(String, FitReport)]) -> String {
    let dash = |ok: bool, v: f64| if ok { format!("{v}") } else { "-".to_string() };
    let mut out = String::from("model,label,dic,p_d,waic,p_waic,log_ml,delta_dic\n");
    let first = &reports[0].1.criteria;
    for (label, r) in reports {
        let c = &r.criteria;
        let delta = dash(c.dic_reliable && first.dic_reliable, c.dic - first.dic);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.model,
            csv_field(label),
            dash(c.dic_reliable, c.dic),
            dash(c.dic_reliable, c.p_d),
            dash(c.waic_reliable, c.waic),
            dash(c.waic_reliable, c.p_waic),
            c.log_marginal_likelihood,
            delta
        );
    }
    out
}

pub fn compare(paths: &[PathBuf], out: Option<&Path>) -> CliResult<()> {
    if paths.len() < 2 {
        return Err(CliError::Input("compare needs at least two reports".into()));
    }
    let reports: Vec<(String, FitReport)> =
        paths.iter().map(|p| Ok((p.display().to_string(), load_report(p)?))).collect::<CliResult<_>>()?;
    let (first_label, first) = &reports[0];
    for (label, r) in &reports[1..] {
        if !same_dataset(&first.dataset, &r.dataset) {
            return Err(CliError::Consistency(format!("{label} was fitted to a different dataset than {first_label}")));
        }
    }
    let table = comparison_table(&reports);
    match out {
        Some(p) => write_file(p, table),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}

/// Takes dataset paths and model settings from an earlier report.
pub fn adopt_report(cfg: &mut RunConfig, path: &Path) -> CliResult<FitReport> {
    let r = load_report(path)?;
    cfg.pattern = Some(PathBuf::from(&r.dataset.pattern.path));
    cfg.window = Some(PathBuf::from(&r.dataset.window.path));
    cfg.model = r.spec.clone();
    Ok(r)
}

#[derive(Debug, Serialize)]
struct DiseaseSummary {
    disease: usize,
    max_exceedance: f64,
    /// Area of cells whose exceedance probability is above 0.95.
    area_above_95: f64,
}

#[derive(Debug, Serialize)]
struct RiskmapSummary {
    model: u8,
    dataset: DatasetRef,
    diseases: Vec<DiseaseSummary>,
    grids: Vec<String>,
}

pub fn riskmap(cfg: &RunConfig, reference: Option<&FitReport>, diffs: &[(usize, usize)]) -> CliResult<()> {
    if !cfg.model.model.has_specific_fields() {
        return Err(CliError::Input(format!(
            "risk maps need model 1 or 3, got model {}",
            cfg.model.model.index()
        )));
    }
    let f = fit_dataset(cfg)?;
    if let Some(r) = reference {
        if !same_dataset(&r.dataset, &f.dataset) {
            return Err(CliError::Consistency("pattern or window differs from the one in the report".into()));
        }
    }
    let grid = GridSpec::covering(&f.window, cfg.grid_res)?;
    let mut grids = Vec::new();
    let mut diseases = Vec::new();
    for (i, block) in f.am.layout.specific.iter().enumerate() {
        let (mean, sd) = posterior_field(&f.fit, &f.am.model, block, grid, &f.window)?;
        let ex = exceedance(&f.fit, &f.am.model, block, grid, &f.window)?;
        write_grid(&cfg.out, format!("{block}_mean.csv"), &mean, &mut grids)?;
        write_grid(&cfg.out, format!("{block}_sd.csv"), &sd, &mut grids)?;
        write_grid(&cfg.out, format!("{block}_exceedance.csv"), &ex, &mut grids)?;
        let hot = ex.defined_values().iter().filter(|p| **p > 0.95).count();
        diseases.push(DiseaseSummary {
            disease: i + 1,
            max_exceedance: ex.max(),
            area_above_95: hot as f64 * grid.cell_area(),
        });
    }
    for &(u, v) in diffs {
        let (mean, sd) = effect_difference(&f.fit, &f.am, u, v, grid, &f.window)?;
        write_grid(&cfg.out, format!("diff_{u}_{v}_mean.csv"), &mean, &mut grids)?;
        write_grid(&cfg.out, format!("diff_{u}_{v}_sd.csv"), &sd, &mut grids)?;
    }
    let summary = RiskmapSummary { model: f.am.spec.model.index(), dataset: f.dataset, diseases, grids };
    write_file(&cfg.out.join("riskmap.json"), to_json(&summary))
}
