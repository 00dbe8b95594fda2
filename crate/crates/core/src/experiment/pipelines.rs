use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, ExperimentKind, InitialKind};
use crate::error::{Error, Result};
use crate::hierarchy::{
    check_factorization, constant_initial, evolve_cauchy, shell_average, solve_k1,
    solve_stationary, zero_initial, CauchySettings, CorrelationGrid, HierarchyProblem,
    Representation, TorusGrid,
};
use crate::simulator::{
    estimate_k1, estimate_pair_correlation, run_replicas, EstimatorAccumulators, MarkEstimate,
    PairCorrelation,
};
use crate::stats::{bonferroni_threshold, three_sigma_alpha, z_score};

/// What a pipeline produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub experiment: ExperimentKind,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    /// False only when a comparison failed.
    pub passed: bool,
    pub manifest: Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthSummary {
    pub ratios: Vec<f64>,
    pub h: f64,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSummary {
    pub replicas: usize,
    pub births: u64,
    pub deaths: u64,
    pub immigrations: u64,
    pub max_population: usize,
    pub mean_population: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub tests: usize,
    pub missing_bins: usize,
    pub family_alpha: f64,
    /// Per-test `|z|` threshold after the Bonferroni adjustment.
    pub threshold: f64,
    pub failures: usize,
    pub max_z: f64,
    pub passed: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub version: String,
    /// SHA-256 of the canonical config TOML.
    pub params_hash: String,
    pub effective_kappa: f64,
    pub spectral_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<EventSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonSummary>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub quantity: &'static str,
    pub mark_i: usize,
    pub mark_j: Option<usize>,
    pub r_lo: Option<f64>,
    pub r_hi: Option<f64>,
    pub analytic: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub z: f64,
}

pub fn params_hash(config: &ExperimentConfig) -> Result<String> {
    let text = config.to_toml()?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn csv(&mut self, name: &str) -> Result<csv::Writer<fs::File>> {
        Ok(csv::Writer::from_path(self.path(name))?)
    }

    fn finish(
        mut self,
        config: &ExperimentConfig,
        mut manifest: Manifest,
        passed: bool,
    ) -> Result<Outcome> {
        fs::write(self.path("config.toml"), config.to_toml()?)?;
        let manifest_path = self.dir.join("manifest.toml");
        manifest.files = self
            .files
            .iter()
            .filter_map(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .collect();
        manifest.files.push("manifest.toml".into());
        let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(&manifest_path, text)?;
        self.files.push(manifest_path);
        Ok(Outcome {
            experiment: config.experiment,
            out_dir: self.dir,
            files: self.files,
            passed,
            manifest,
        })
    }
}

fn base_manifest(config: &ExperimentConfig) -> Result<Manifest> {
    let model = config.model()?;
    Ok(Manifest {
        experiment: config.experiment.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        params_hash: params_hash(config)?,
        effective_kappa: model.kappa(),
        spectral_radius: model.raw_r(),
        seed: None,
        growth: None,
        events: None,
        comparison: None,
        files: Vec::new(),
    })
}

/// Runs the pipeline named in `config.experiment`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    match config.experiment {
        ExperimentKind::Stationary => run_stationary(config, out),
        ExperimentKind::Cauchy => run_cauchy(config, out),
        ExperimentKind::Simulate => run_simulate(config, out),
        ExperimentKind::Compare => run_compare(config, out),
    }
}

fn problem(config: &ExperimentConfig, grid: TorusGrid) -> Result<HierarchyProblem> {
    HierarchyProblem::new(config.model()?, grid, config.solver_settings())
}

fn write_k1(w: &mut Writer, name: &str, k1: &[f64], labels: &[String]) -> Result<()> {
    let mut csv = w.csv(name)?;
    csv.write_record(["mark", "label", "value"])?;
    for (s, v) in k1.iter().enumerate() {
        csv.write_record([s.to_string(), labels[s].clone(), v.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

/// Stationary correlation functions up to `n_max`, with factorization and growth reports.
pub fn run_stationary(config: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    config.validate()?;
    let mut w = Writer::new(out)?;
    let mut manifest = base_manifest(config)?;
    let labels = &config.model.marks.labels;
    let n_max = config.solver.n_max;
    let (orders, growth) = if n_max == 1 {
        let model = config.model()?;
        let k1 = solve_k1(&model, config.solver.tolerance)?;
        let report = crate::hierarchy::GrowthReport::from_ratios(vec![k1.weighted_sup(model.q())]);
        (vec![k1], report)
    } else {
        let problem = problem(config, config.grid()?)?;
        let sol = solve_stationary(&problem, n_max, config.solver.representation)?;
        (sol.orders, sol.growth)
    };
    write_k1(&mut w, "k1.csv", orders[0].values(), labels)?;
    for k in &orders[1..] {
        let n = k.order();
        k.save_csv(w.path(&format!("k{n}.csv")))?;
        k.save_binary(w.path(&format!("k{n}.bin")))?;
    }
    if n_max >= 2 {
        let radii = config.factorization_radii();
        let mut csv = w.csv("factorization.csv")?;
        csv.write_record(["order", "radius", "deviation"])?;
        for k in &orders[1..] {
            let report = check_factorization(k, orders[0].values(), &radii)?;
            for (r, d) in report.radii.iter().zip(&report.deviations) {
                csv.write_record([
                    report.order.to_string(),
                    r.to_string(),
                    d.map(|v| v.to_string()).unwrap_or_default(),
                ])?;
            }
        }
        csv.flush()?;
    }
    {
        let mut csv = w.csv("growth.csv")?;
        csv.write_record(["order", "ratio", "bound"])?;
        for (i, r) in growth.ratios.iter().enumerate() {
            let bound = growth.d * growth.h.powi(i as i32 + 1);
            csv.write_record([(i + 1).to_string(), r.to_string(), bound.to_string()])?;
        }
        csv.flush()?;
    }
    manifest.growth = Some(GrowthSummary {
        ratios: growth.ratios.clone(),
        h: growth.h,
        d: growth.d,
    });
    w.finish(config, manifest, true)
}

/// True when `v` is non-increasing from its midpoint on, up to roundoff.
fn decays_eventually(v: &[f64]) -> bool {
    let top = v.iter().copied().fold(0.0, f64::max);
    let floor = 1e-10 * top.max(1.0);
    v[v.len() / 2..]
        .windows(2)
        .all(|p| p[1] <= p[0] * (1.0 + 1e-9) + floor)
}

/// Relaxation of the hierarchy from the configured initial data towards the
/// stationary solution on the same grid.
pub fn run_cauchy(config: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    config.validate()?;
    let s = &config.solver;
    let grid = config.grid()?;
    let problem = problem(config, grid)?;
    let repr = if s.n_max == 1 {
        Representation::Difference
    } else {
        s.representation
    };
    let reference = solve_stationary(&problem, s.n_max, repr)?.orders;
    let initial = match s.initial {
        InitialKind::Zero => zero_initial(&reference),
        InitialKind::Constant => constant_initial(&reference, s.initial_value.unwrap_or(0.0)),
        InitialKind::File => s
            .initial_files
            .iter()
            .map(CorrelationGrid::load_binary)
            .collect::<Result<Vec<_>>>()?,
    };
    let kappa = problem.kappa();
    let stiffness = s.n_max as f64 * (1.0 + kappa);
    let dt = s.dt.unwrap_or(0.1 / stiffness);
    let steps = (s.horizon / dt).ceil().max(1.0) as usize;
    let settings = CauchySettings {
        horizon: s.horizon,
        dt: s.dt,
        record_every: (steps / 2000).max(1),
    };
    let traj = evolve_cauchy(&problem, &initial, &reference, &settings)?;

    let mut w = Writer::new(out)?;
    let mut manifest = base_manifest(config)?;
    {
        let mut csv = w.csv("trajectory.csv")?;
        let mut header = vec!["time".to_string()];
        header.extend((1..=s.n_max).map(|n| format!("deviation_{n}")));
        csv.write_record(&header)?;
        for (j, t) in traj.times.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(traj.deviations.iter().map(|d| d[j].to_string()));
            csv.write_record(&row)?;
        }
        csv.flush()?;
    }
    {
        let mut csv = w.csv("rates.csv")?;
        csv.write_record(["order", "fitted_rate", "intrinsic_rate"])?;
        for n in 1..=s.n_max {
            let rate = traj.decay_rate(n, s.horizon / 2.0, s.horizon);
            csv.write_record([
                n.to_string(),
                rate.map(|r| r.to_string()).unwrap_or_default(),
                (n as f64 * (1.0 - kappa)).to_string(),
            ])?;
        }
        csv.flush()?;
    }
    for (i, d) in traj.deviations.iter().enumerate() {
        if !decays_eventually(d) {
            return Err(Error::Mismatch {
                context: format!(
                    "order {} deviation grows in the second half of the run",
                    i + 1
                ),
                difference: d.last().copied().unwrap_or(f64::NAN),
            });
        }
    }
    manifest.growth = None;
    w.finish(config, manifest, true)
}

fn event_summary(acc: &EstimatorAccumulators) -> EventSummary {
    EventSummary {
        replicas: acc.events.len(),
        births: acc.events.iter().map(|e| e.births).sum(),
        deaths: acc.events.iter().map(|e| e.deaths).sum(),
        immigrations: acc.events.iter().map(|e| e.immigrations).sum(),
        max_population: acc
            .events
            .iter()
            .map(|e| e.max_population)
            .max()
            .unwrap_or(0),
        mean_population: acc.mean_population(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_estimates(
    w: &mut Writer,
    acc: &EstimatorAccumulators,
    k1: &[MarkEstimate],
    k2: &PairCorrelation,
) -> Result<()> {
    let mut csv = w.csv("k1_estimate.csv")?;
    csv.write_record(["mark", "estimate", "stderr"])?;
    for e in k1 {
        csv.write_record([
            e.mark.to_string(),
            e.estimate.to_string(),
            e.stderr.to_string(),
        ])?;
    }
    csv.flush()?;

    let mut csv = w.csv("k2_estimate.csv")?;
    csv.write_record(["r_lo", "r_hi", "mark_i", "mark_j", "estimate", "stderr"])?;
    for b in &k2.bins {
        csv.write_record([
            b.r_lo.to_string(),
            b.r_hi.to_string(),
            b.mark_i.to_string(),
            b.mark_j.to_string(),
            opt(b.estimate),
            opt(b.stderr),
        ])?;
    }
    csv.flush()?;

    let mut csv = w.csv("events.csv")?;
    csv.write_record([
        "replica",
        "births",
        "deaths",
        "immigrations",
        "initial_size",
        "final_size",
        "max_population",
    ])?;
    for e in &acc.events {
        csv.write_record([
            e.replica.to_string(),
            e.births.to_string(),
            e.deaths.to_string(),
            e.immigrations.to_string(),
            e.initial_size.to_string(),
            e.final_size.to_string(),
            e.max_population.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Gillespie replicas with density and pair-correlation estimates.
pub fn run_simulate(config: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    config.validate()?;
    let params = config.sim_params(0.0)?;
    let acc = run_replicas(&params)?;
    let k1 = estimate_k1(&acc)?;
    let k2 = estimate_pair_correlation(&acc)?;
    let mut w = Writer::new(out)?;
    write_estimates(&mut w, &acc, &k1, &k2)?;
    let mut manifest = base_manifest(config)?;
    manifest.seed = Some(params.seed);
    manifest.events = Some(event_summary(&acc));
    w.finish(config, manifest, true)
}

/// Smallest admissible grid with spacing at most a quarter of the histogram bin.
pub fn compare_grid_points(side: f64, bin_width: f64) -> usize {
    let needed = (4.0 * side / bin_width).ceil() as usize;
    needed.next_power_of_two().max(8)
}

/// Solver and simulator on the same model, compared bin by bin at a
/// Bonferroni-adjusted family-wise level.
pub fn run_compare(config: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    config.validate()?;
    let model = config.model()?;
    let params = config.sim_params(config.compare.kappa_offset)?;

    let k1_solver = solve_k1(&model, config.solver.tolerance)?;
    let points = config
        .compare
        .grid_points
        .unwrap_or_else(|| compare_grid_points(model.side(), params.bin_width));
    let grid = TorusGrid::new(model.dim(), model.side(), points)?;
    let problem = problem(config, grid)?;
    let k2_solver = solve_stationary(&problem, 2, Representation::Difference)?;

    let acc = run_replicas(&params)?;
    let k1_est = estimate_k1(&acc)?;
    let k2_est = estimate_pair_correlation(&acc)?;

    let mut rows = Vec::new();
    for e in &k1_est {
        let analytic = k1_solver.values()[e.mark];
        rows.push(ComparisonRow {
            quantity: "k1",
            mark_i: e.mark,
            mark_j: None,
            r_lo: None,
            r_hi: None,
            analytic,
            estimate: e.estimate,
            stderr: e.stderr,
            z: zscore(analytic, e.estimate, e.stderr),
        });
    }
    let m = model.marks();
    let mut missing = 0;
    for i in 0..m {
        for j in 0..m {
            let averages = shell_average(k2_solver.order(2), (i, j), &k2_est.edges)?;
            for (b, avg) in averages.iter().enumerate() {
                let bin = &k2_est.bins[(i * m + j) * averages.len() + b];
                match (bin.estimate, bin.stderr, avg) {
                    (Some(est), Some(se), Some(a)) => rows.push(ComparisonRow {
                        quantity: "k2",
                        mark_i: i,
                        mark_j: Some(j),
                        r_lo: Some(bin.r_lo),
                        r_hi: Some(bin.r_hi),
                        analytic: *a,
                        estimate: est,
                        stderr: se,
                        z: zscore(*a, est, se),
                    }),
                    _ => missing += 1,
                }
            }
        }
    }

    let alpha = config.compare.alpha.unwrap_or_else(three_sigma_alpha);
    let threshold = bonferroni_threshold(alpha, rows.len());
    let failures = rows.iter().filter(|r| !(r.z <= threshold)).count();
    let max_z = rows.iter().map(|r| r.z).fold(0.0, f64::max);
    let passed = failures == 0;
    let summary = ComparisonSummary {
        tests: rows.len(),
        missing_bins: missing,
        family_alpha: alpha,
        threshold,
        failures,
        max_z,
        passed,
        note: format!(
            "{} tests at family-wise level {alpha:.4e}; Bonferroni per-test threshold |z| <= {threshold:.4}",
            rows.len()
        ),
    };

    let mut w = Writer::new(out)?;
    write_k1(
        &mut w,
        "k1.csv",
        k1_solver.values(),
        &config.model.marks.labels,
    )?;
    write_estimates(&mut w, &acc, &k1_est, &k2_est)?;
    {
        let mut csv = w.csv("comparison.csv")?;
        csv.write_record([
            "quantity", "mark_i", "mark_j", "r_lo", "r_hi", "analytic", "estimate", "stderr", "z",
            "pass",
        ])?;
        for r in &rows {
            csv.write_record([
                r.quantity.to_string(),
                r.mark_i.to_string(),
                r.mark_j.map(|j| j.to_string()).unwrap_or_default(),
                opt(r.r_lo),
                opt(r.r_hi),
                r.analytic.to_string(),
                r.estimate.to_string(),
                r.stderr.to_string(),
                r.z.to_string(),
                (r.z <= threshold).to_string(),
            ])?;
        }
        csv.flush()?;
    }
    let mut manifest = base_manifest(config)?;
    manifest.seed = Some(params.seed);
    manifest.growth = Some(GrowthSummary {
        ratios: k2_solver.growth.ratios.clone(),
        h: k2_solver.growth.h,
        d: k2_solver.growth.d,
    });
    manifest.events = Some(event_summary(&acc));
    manifest.comparison = Some(summary);
    w.finish(config, manifest, passed)
}

/// `|a - e| / se`, with a zero standard error giving 0 on exact agreement and infinity otherwise.
fn zscore(analytic: f64, estimate: f64, stderr: f64) -> f64 {
    if stderr > 0.0 {
        z_score(analytic, estimate, stderr)
    } else if analytic == estimate {
        0.0
    } else {
        f64::INFINITY
    }
}
