//! Experiment configuration and the seeded sweep over `(seed, n, m, method)`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::{
    evaluate, select, select_euclidean, BandwidthGrid, CandidateGrid, Evaluation, FitConfig,
};
use crate::density::{fit_kde, schedule, DensityModel, GridSpec};
use crate::error::{Error, Result};
use crate::geodesic::build_graph;
use crate::model::{EstimatorSpec, LabeledSet, UnlabeledSet};
use crate::regress::{fit, EuclideanRegressor};
use crate::synth::{
    derive_seed, make_lower_bound_instance, make_smooth_instance, make_uniform_components, AxisBox,
    LowerBoundParams, ProblemInstance, SmoothParams,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Stream indices for [`derive_seed`].
pub mod streams {
    pub const LABELED: u64 = 1;
    pub const UNLABELED: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const MONTE_CARLO: u64 = 4;
}

/// Generator name plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum InstanceSpec {
    UniformComponents {
        boxes: Vec<AxisBox>,
        labels: Vec<f64>,
        #[serde(default)]
        sigma: f64,
    },
    LowerBound(LowerBoundParams),
    Smooth(SmoothParams),
}

impl Default for InstanceSpec {
    fn default() -> Self {
        InstanceSpec::LowerBound(LowerBoundParams::default())
    }
}

impl InstanceSpec {
    pub const GENERATORS: [&'static str; 3] = ["uniform_components", "lower_bound", "smooth"];

    /// Default parameters for a generator name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "uniform_components" => Ok(InstanceSpec::UniformComponents {
                boxes: vec![
                    AxisBox { lower: vec![0.0, 0.0], upper: vec![0.4, 1.0] },
                    AxisBox { lower: vec![0.6, 0.0], upper: vec![1.0, 1.0] },
                ],
                labels: vec![1.0, -1.0],
                sigma: 0.1,
            }),
            "lower_bound" => Ok(InstanceSpec::LowerBound(LowerBoundParams::default())),
            "smooth" => Ok(InstanceSpec::Smooth(SmoothParams::default())),
            other => Err(Error::Config(format!(
                "unknown generator '{other}' (expected one of {:?})",
                Self::GENERATORS
            ))),
        }
    }

    pub fn build(&self) -> Result<ProblemInstance> {
        match self {
            InstanceSpec::UniformComponents { boxes, labels, sigma } => {
                make_uniform_components(boxes.clone(), labels.clone(), *sigma)
            }
            InstanceSpec::LowerBound(p) => make_lower_bound_instance(p),
            InstanceSpec::Smooth(p) => make_smooth_instance(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SsCv,
    SsFixed,
    EuclideanCv,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::SsCv, Method::SsFixed, Method::EuclideanCv];

    pub fn name(self) -> &'static str {
        match self {
            Method::SsCv => "ss_cv",
            Method::SsFixed => "ss_fixed",
            Method::EuclideanCv => "euclidean_cv",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

/// Grid and schedule for the density estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    /// Cells per axis; defaults to [`GridSpec::default_resolution`].
    pub resolution: Option<usize>,
    /// Padding around the instance's bounding box, as a fraction of its extent.
    pub pad_fraction: f64,
    pub c1: f64,
    pub c2: f64,
    /// Overrides the scheduled KDE bandwidth.
    pub bandwidth: Option<f64>,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig { resolution: None, pad_fraction: 0.1, c1: 1.0, c2: 0.25, bandwidth: None }
    }
}

impl DensityConfig {
    pub fn grid_for(&self, instance: &ProblemInstance) -> Result<GridSpec> {
        let b = instance.bounding_box();
        let d = b.dim();
        let res = self.resolution.unwrap_or_else(|| GridSpec::default_resolution(d));
        if !(self.pad_fraction >= 0.0 && self.pad_fraction.is_finite()) {
            return Err(Error::Config(format!("pad_fraction must be >= 0, got {}", self.pad_fraction)));
        }
        let lower = (0..d).map(|k| b.lower[k] - self.pad_fraction * (b.upper[k] - b.lower[k])).collect();
        let upper = (0..d).map(|k| b.upper[k] + self.pad_fraction * (b.upper[k] - b.lower[k])).collect();
        GridSpec::new(lower, upper, vec![res; d])
    }

    /// KDE of `unlabeled` on this configuration's grid.
    pub fn estimate(&self, grid: &GridSpec, unlabeled: &UnlabeledSet) -> Result<DensityModel> {
        let mut sched = schedule(unlabeled.m(), grid.dim(), self.c1, self.c2)?;
        if let Some(h) = self.bandwidth {
            if !(h > 0.0) {
                return Err(Error::Config(format!("density bandwidth must be > 0, got {h}")));
            }
            sched = sched.with_bandwidth(h);
        }
        fit_kde(unlabeled, grid, &sched)
    }
}

/// Candidate grid for the cross-validated methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CandidateConfig {
    /// Defaults to `{0, 1, 2, 4, 8, ln m}`.
    pub alphas: Option<Vec<f64>>,
    /// Fixed bandwidths; when absent, `bandwidth_count` log-spaced values per alpha.
    pub bandwidths: Option<Vec<f64>>,
    pub bandwidth_count: usize,
    pub split_fraction: f64,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        CandidateConfig { alphas: None, bandwidths: None, bandwidth_count: 8, split_fraction: 0.5 }
    }
}

impl CandidateConfig {
    pub fn grid(&self, m: usize, seed: u64) -> CandidateGrid {
        let mut g = CandidateGrid::default_for(m, seed);
        if let Some(a) = &self.alphas {
            g.alphas = a.clone();
        }
        g.bandwidths = self.bandwidth_grid();
        g.split_fraction = self.split_fraction;
        g
    }

    pub fn bandwidth_grid(&self) -> BandwidthGrid {
        match &self.bandwidths {
            Some(h) => BandwidthGrid::Fixed(h.clone()),
            None => BandwidthGrid::Auto { count: self.bandwidth_count },
        }
    }
}

/// Parameters of the `ss_fixed` method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedConfig {
    pub alpha: f64,
    /// Defaults to the median finite positive distance between labeled points.
    pub h: Option<f64>,
}

impl Default for FixedConfig {
    fn default() -> Self {
        FixedConfig { alpha: 1.0, h: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub candidates: CandidateConfig,
    pub fixed: FixedConfig,
    pub density: DensityConfig,
    pub fit: FitConfig,
    pub n_mc: usize,
    /// Refit the cross-validated choice on all labeled points instead of the
    /// training half.
    pub refit: bool,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            instance: InstanceSpec::default(),
            n: vec![10],
            m: vec![1000],
            seeds: vec![0],
            methods: Method::ALL.to_vec(),
            candidates: CandidateConfig::default(),
            fixed: FixedConfig::default(),
            density: DensityConfig::default(),
            fit: FitConfig::default(),
            n_mc: 2000,
            refit: false,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".into()));
        }
        if self.n.is_empty() || self.m.is_empty() {
            return Err(Error::Config("n and m must be non-empty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must be non-empty".into()));
        }
        if self.n_mc == 0 {
            return Err(Error::Config("n_mc must be >= 1".into()));
        }
        if !(self.fixed.alpha >= 0.0 && self.fixed.alpha.is_finite()) {
            return Err(Error::Config(format!("fixed alpha must be >= 0, got {}", self.fixed.alpha)));
        }
        if let Some(h) = self.fixed.h {
            if !(h > 0.0) {
                return Err(Error::Config(format!("fixed h must be > 0, got {h}")));
            }
        }
        self.candidates.grid(self.m[0], 0).validate()
    }
}

/// One output line of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub method: Method,
    pub n: usize,
    pub m: usize,
    pub alpha: Option<f64>,
    pub h: Option<f64>,
    pub excess_risk: Option<f64>,
    pub uncovered_fraction: Option<f64>,
    pub wall_ms: f64,
    pub status: String,
    pub schema_version: u32,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Draws shared by every method of one `(seed, n, m)` cell.
#[derive(Debug, Clone)]
pub struct CellData {
    pub labeled: LabeledSet,
    pub unlabeled: UnlabeledSet,
    pub split_seed: u64,
    pub mc_seed: u64,
}

impl CellData {
    pub fn draw(instance: &ProblemInstance, seed: u64, n: usize, m: usize) -> Result<Self> {
        Ok(CellData {
            labeled: instance.sample_labeled(n, derive_seed(seed, streams::LABELED))?,
            unlabeled: instance.sample_unlabeled(m, derive_seed(seed, streams::UNLABELED))?,
            split_seed: derive_seed(seed, streams::SPLIT),
            mc_seed: derive_seed(seed, streams::MONTE_CARLO),
        })
    }
}

/// Outcome of one method on one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodOutcome {
    pub spec: EstimatorSpec,
    pub evaluation: Evaluation,
}

/// Median of the finite positive entries, if any.
fn median_positive(mut v: Vec<f64>) -> Option<f64> {
    v.retain(|d| d.is_finite() && *d > 0.0);
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[v.len() / 2])
}

/// The training set the final estimator is fitted on.
fn final_training_set(cfg: &ExperimentConfig, labeled: &LabeledSet, train_indices: &[usize]) -> Result<LabeledSet> {
    if cfg.refit {
        Ok(labeled.clone())
    } else {
        labeled.select(train_indices)
    }
}

/// Runs one method on one cell. `model` is the density estimate for the
/// semisupervised methods.
pub fn run_method(
    cfg: &ExperimentConfig,
    instance: &ProblemInstance,
    cell: &CellData,
    model: Result<&DensityModel, &Error>,
    method: Method,
) -> Result<MethodOutcome> {
    let fitcfg = &cfg.fit;
    let model = || model.map_err(|e| Error::Config(format!("density estimate failed: {e}")));
    match method {
        Method::SsCv => {
            let model = model()?;
            let grid = cfg.candidates.grid(cell.unlabeled.m(), cell.split_seed);
            let report = select(&cell.labeled, model, &grid, fitcfg)?;
            let graph = build_graph(model, report.chosen.alpha, fitcfg.connectivity)?.with_snap_mode(fitcfg.snap);
            let train = final_training_set(cfg, &cell.labeled, &report.train_indices)?;
            let reg = fit(&train, &graph, report.chosen)?.with_truncation(fitcfg.truncation)?;
            let evaluation = evaluate(&reg, instance, cfg.n_mc, cell.mc_seed)?;
            Ok(MethodOutcome { spec: report.chosen, evaluation })
        }
        Method::SsFixed => {
            let model = model()?;
            let alpha = cfg.fixed.alpha;
            let graph = build_graph(model, alpha, fitcfg.connectivity)?.with_snap_mode(fitcfg.snap);
            let provisional = EstimatorSpec::new(alpha, 1.0, fitcfg.fallback)?;
            let reg = fit(&cell.labeled, &graph, provisional)?;
            let h = match cfg.fixed.h {
                Some(h) => h,
                None => {
                    let n = cell.labeled.n();
                    let all: Vec<f64> =
                        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| reg.labeled_distance(i, j)).collect();
                    median_positive(all).unwrap_or(1.0)
                }
            };
            let spec = EstimatorSpec::new(alpha, h, fitcfg.fallback)?;
            let reg = reg.with_spec(spec)?.with_truncation(fitcfg.truncation)?;
            let evaluation = evaluate(&reg, instance, cfg.n_mc, cell.mc_seed)?;
            Ok(MethodOutcome { spec, evaluation })
        }
        Method::EuclideanCv => {
            let bw = cfg.candidates.bandwidth_grid();
            let report = select_euclidean(&cell.labeled, &bw, cfg.candidates.split_fraction, cell.split_seed, fitcfg)?;
            let train = final_training_set(cfg, &cell.labeled, &report.train_indices)?;
            let reg = EuclideanRegressor::new(train, report.chosen.h, fitcfg.fallback, fitcfg.truncation)?;
            let evaluation = evaluate(&reg, instance, cfg.n_mc, cell.mc_seed)?;
            Ok(MethodOutcome { spec: report.chosen, evaluation })
        }
    }
}

fn run_cell(cfg: &ExperimentConfig, instance: &ProblemInstance, seed: u64, n: usize, m: usize) -> Vec<SweepRow> {
    let started = Instant::now();
    let drawn = CellData::draw(instance, seed, n, m);
    let shared_ms = started.elapsed().as_secs_f64() * 1e3;
    let needs_model = cfg.methods.iter().any(|m| *m != Method::EuclideanCv);
    let model_start = Instant::now();
    let model = match (&drawn, needs_model) {
        (Ok(cell), true) => Some(cfg.density.grid_for(instance).and_then(|g| cfg.density.estimate(&g, &cell.unlabeled))),
        _ => None,
    };
    let model_ms = model_start.elapsed().as_secs_f64() * 1e3;

    cfg.methods
        .iter()
        .map(|&method| {
            let t = Instant::now();
            let outcome = match &drawn {
                Err(e) => Err(Error::Config(format!("sampling failed: {e}"))),
                Ok(cell) => {
                    let model_ref = match &model {
                        Some(Ok(mdl)) => Ok(mdl),
                        Some(Err(e)) => Err(e),
                        None => Err(&Error::EmptyGraph),
                    };
                    run_method(cfg, instance, cell, model_ref, method)
                }
            };
            let mut wall_ms = shared_ms + t.elapsed().as_secs_f64() * 1e3;
            if method != Method::EuclideanCv {
                wall_ms += model_ms;
            }
            let base = SweepRow {
                seed,
                method,
                n,
                m,
                alpha: None,
                h: None,
                excess_risk: None,
                uncovered_fraction: None,
                wall_ms,
                status: "ok".into(),
                schema_version: SCHEMA_VERSION,
            };
            match outcome {
                Ok(o) => SweepRow {
                    alpha: Some(o.spec.alpha),
                    h: Some(o.spec.h),
                    excess_risk: Some(o.evaluation.excess_risk),
                    uncovered_fraction: Some(o.evaluation.uncovered_fraction),
                    ..base
                },
                Err(e) => SweepRow { status: format!("error: {e}"), ..base },
            }
        })
        .collect()
}

/// Runs every `(seed, n, m)` cell in parallel; rows come back ordered by
/// seed, then n, then m, then method as listed in the config. Every column
/// except `wall_ms` is a pure function of the configuration.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let instance = cfg.instance.build()?;
    let cells: Vec<(u64, usize, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| cfg.n.iter().flat_map(move |&n| cfg.m.iter().map(move |&m| (s, n, m))))
        .collect();
    let rows: Vec<Vec<SweepRow>> = cells.par_iter().map(|&(s, n, m)| run_cell(cfg, &instance, s, n, m)).collect();
    Ok(rows.into_iter().flatten().collect())
}

pub fn write_rows(rows: &[SweepRow], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows_to(rows: &[SweepRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Write { path: path.to_path_buf(), source })?;
    write_rows(rows, std::io::BufWriter::new(file))
}
