//! Hold-out selection of `(alpha, h)` and excess-risk evaluation.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::geodesic::{build_graph, Connectivity, SnapMode};
use crate::model::{EstimatorSpec, Fallback, LabeledSet, Point};
use crate::regress::{boxcar_average, fit, EuclideanRegressor, FittedRegressor, Predictor};
use crate::synth::{rng_for, ProblemInstance};

/// Default density sensitivities: `{0, 1, 2, 4, 8, ln m}`, sorted and deduplicated.
pub fn default_alphas(m: usize) -> Vec<f64> {
    let mut a = vec![0.0, 1.0, 2.0, 4.0, 8.0];
    let lm = (m.max(1) as f64).ln();
    if !a.contains(&lm) {
        a.push(lm);
    }
    a.sort_by(f64::total_cmp);
    a
}

/// `count` log-spaced values between `lo` and `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 || lo >= hi {
        return vec![hi];
    }
    let ratio = (hi / lo).ln();
    let mut out: Vec<f64> = (0..count)
        .map(|k| lo * (ratio * k as f64 / (count - 1) as f64).exp())
        .collect();
    out[count - 1] = hi;
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthGrid {
    Fixed(Vec<f64>),
    /// Log-spaced between the smallest positive and largest finite distance
    /// among training points, computed per `alpha`.
    Auto { count: usize },
}

impl BandwidthGrid {
    fn resolve(&self, pairwise: impl Iterator<Item = f64>) -> Vec<f64> {
        match self {
            BandwidthGrid::Fixed(h) => h.clone(),
            BandwidthGrid::Auto { count } => {
                let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
                for d in pairwise.filter(|d| d.is_finite() && *d > 0.0) {
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
                if hi == 0.0 {
                    return vec![1.0];
                }
                log_spaced(lo, hi, *count)
            }
        }
    }
}

/// Candidate set and split parameters for hold-out selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGrid {
    pub alphas: Vec<f64>,
    pub bandwidths: BandwidthGrid,
    pub split_fraction: f64,
    pub seed: u64,
}

impl CandidateGrid {
    pub fn default_for(m: usize, seed: u64) -> Self {
        CandidateGrid { alphas: default_alphas(m), bandwidths: BandwidthGrid::Auto { count: 8 }, split_fraction: 0.5, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::Config("candidate alphas are empty".into()));
        }
        if self.alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::Config(format!("candidate alphas must be finite and >= 0: {:?}", self.alphas)));
        }
        if !self.alphas.contains(&0.0) {
            return Err(Error::Config("candidate alphas must include 0".into()));
        }
        match &self.bandwidths {
            BandwidthGrid::Fixed(h) if h.is_empty() || h.iter().any(|h| !(*h > 0.0)) => {
                return Err(Error::Config(format!("candidate bandwidths must be non-empty and > 0: {h:?}")));
            }
            BandwidthGrid::Auto { count: 0 } => return Err(Error::Config("bandwidth count must be >= 1".into())),
            _ => {}
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config(format!("split fraction must lie in (0, 1), got {}", self.split_fraction)));
        }
        Ok(())
    }

    fn sorted_alphas(&self) -> Vec<f64> {
        let mut a = self.alphas.clone();
        a.sort_by(f64::total_cmp);
        a.dedup();
        a
    }
}

/// Settings shared by every candidate fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub connectivity: Connectivity,
    pub fallback: Fallback,
    pub truncation: Option<f64>,
    pub snap: SnapMode,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            connectivity: Connectivity::N16,
            fallback: Fallback::LabeledMean,
            truncation: None,
            snap: SnapMode::Strict,
        }
    }
}

/// Sorted training and validation indices: a seeded shuffle, then the first
/// `round(fraction n)` indices train.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Split(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let n_train = (fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::Split(format!("cannot split {n} labeled points with fraction {fraction}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed));
    let mut train = idx[..n_train].to_vec();
    let mut val = idx[n_train..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

pub fn split(labeled: &LabeledSet, fraction: f64, seed: u64) -> Result<(LabeledSet, LabeledSet)> {
    let (t, v) = split_indices(labeled.n(), fraction, seed)?;
    Ok((labeled.select(&t)?, labeled.select(&v)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateRisk {
    pub alpha: f64,
    pub h: f64,
    /// Validation mean squared error; infinite when the candidate failed.
    #[serde(with = "crate::adapt::float_or_null")]
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub chosen: EstimatorSpec,
    pub table: Vec<CandidateRisk>,
    pub n_train: usize,
    pub n_val: usize,
    pub seed: u64,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

impl SelectionReport {
    pub const SCHEMA_VERSION: u32 = 1;

    pub fn to_json(&self) -> Result<String> {
        let v = serde_json::json!({
            "schema_version": Self::SCHEMA_VERSION,
            "chosen": { "alpha": self.chosen.alpha, "h": self.chosen.h },
            "table": self.table,
            "n_train": self.n_train,
            "n_val": self.n_val,
            "seed": self.seed,
        });
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

/// Infinite risks serialize as `null`.
pub(crate) mod float_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Validation risk of a boxcar average for each bandwidth, given the distance
/// vectors from training points to every validation point.
fn risks_for_bandwidths(
    dists: &[Vec<f64>],
    val: &LabeledSet,
    train_labels: &[f64],
    bandwidths: &[f64],
    cfg: &FitConfig,
) -> Vec<f64> {
    bandwidths
        .iter()
        .map(|&h| {
            let mut sse = 0.0;
            for ((d, x), y) in dists.iter().zip(val.points()).zip(val.labels()) {
                match boxcar_average(d, train_labels, h, cfg.fallback, cfg.truncation, x) {
                    Ok(p) => sse += (p.value - y).powi(2),
                    Err(_) => return f64::INFINITY,
                }
            }
            sse / val.n() as f64
        })
        .collect()
}

/// Picks the finite-risk minimizer; ties go to the smallest `(alpha, h)`.
fn argmin(table: &[CandidateRisk], fallback: Fallback) -> Result<EstimatorSpec> {
    let best = table
        .iter()
        .filter(|c| c.risk.is_finite())
        .min_by(|a, b| {
            a.risk
                .total_cmp(&b.risk)
                .then(a.alpha.total_cmp(&b.alpha))
                .then(a.h.total_cmp(&b.h))
        })
        .ok_or_else(|| Error::Selection("every candidate failed".into()))?;
    EstimatorSpec::new(best.alpha, best.h, fallback)
}

/// Hold-out selection of `(alpha, h)` for the semisupervised estimator.
///
/// Each `alpha` gets its own graph; the training fields are shared across
/// bandwidths. A candidate whose graph cannot be built, or that leaves a
/// validation point uncovered under [`Fallback::Undefined`], scores infinity.
pub fn select(labeled: &LabeledSet, model: &DensityModel, grid: &CandidateGrid, cfg: &FitConfig) -> Result<SelectionReport> {
    grid.validate()?;
    let (ti, vi) = split_indices(labeled.n(), grid.split_fraction, grid.seed)?;
    let train = labeled.select(&ti)?;
    let val = labeled.select(&vi)?;
    let alphas = grid.sorted_alphas();

    let per_alpha: Vec<Vec<CandidateRisk>> = alphas
        .par_iter()
        .map(|&alpha| {
            let failed = |hs: &[f64]| hs.iter().map(|&h| CandidateRisk { alpha, h, risk: f64::INFINITY }).collect();
            let fixed = match &grid.bandwidths {
                BandwidthGrid::Fixed(h) => h.clone(),
                BandwidthGrid::Auto { .. } => vec![],
            };
            let graph = match build_graph(model, alpha, cfg.connectivity) {
                Ok(g) => g.with_snap_mode(cfg.snap),
                Err(_) => return failed(&fixed),
            };
            let spec = EstimatorSpec { alpha, h: 1.0, fallback: cfg.fallback };
            let reg: FittedRegressor<'_> = match fit(&train, &graph, spec) {
                Ok(r) => r,
                Err(_) => return failed(&fixed),
            };
            let n = train.n();
            let bandwidths = grid
                .bandwidths
                .resolve((0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| reg.labeled_distance(i, j)));
            let dists: Vec<Vec<f64>> = val.points().iter().map(|x| reg.neighbor_distances(x)).collect();
            let risks = risks_for_bandwidths(&dists, &val, train.labels(), &bandwidths, cfg);
            bandwidths.iter().zip(risks).map(|(&h, risk)| CandidateRisk { alpha, h, risk }).collect()
        })
        .collect();

    let mut table: Vec<CandidateRisk> = per_alpha.into_iter().flatten().collect();
    table.sort_by(|a, b| a.alpha.total_cmp(&b.alpha).then(a.h.total_cmp(&b.h)));
    let chosen = argmin(&table, cfg.fallback)?;
    Ok(SelectionReport {
        chosen,
        table,
        n_train: train.n(),
        n_val: val.n(),
        seed: grid.seed,
        train_indices: ti,
        val_indices: vi,
    })
}

/// Hold-out bandwidth selection for the Euclidean baseline (`alpha = 0`,
/// Euclidean distances, no unlabeled data).
pub fn select_euclidean(
    labeled: &LabeledSet,
    bandwidths: &BandwidthGrid,
    split_fraction: f64,
    seed: u64,
    cfg: &FitConfig,
) -> Result<SelectionReport> {
    let (ti, vi) = split_indices(labeled.n(), split_fraction, seed)?;
    let train = labeled.select(&ti)?;
    let val = labeled.select(&vi)?;
    let pts = train.points();
    let hs = bandwidths.resolve(pts.iter().flat_map(|a| pts.iter().map(move |b| a.euclidean(b))));
    let dists: Vec<Vec<f64>> = val.points().iter().map(|x| pts.iter().map(|p| p.euclidean(x)).collect()).collect();
    let risks = risks_for_bandwidths(&dists, &val, train.labels(), &hs, cfg);
    let table: Vec<CandidateRisk> = hs.iter().zip(risks).map(|(&h, risk)| CandidateRisk { alpha: 0.0, h, risk }).collect();
    let chosen = argmin(&table, cfg.fallback)?;
    Ok(SelectionReport {
        chosen,
        table,
        n_train: train.n(),
        n_val: val.n(),
        seed,
        train_indices: ti,
        val_indices: vi,
    })
}

/// Refits the Euclidean baseline on all labeled data with the chosen bandwidth.
pub fn euclidean_from_report(labeled: &LabeledSet, report: &SelectionReport, cfg: &FitConfig) -> Result<EuclideanRegressor> {
    EuclideanRegressor::new(labeled.clone(), report.chosen.h, cfg.fallback, cfg.truncation)
}

/// Monte-Carlo excess risk with the fraction of uncovered queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub excess_risk: f64,
    pub uncovered_fraction: f64,
    pub n_mc: usize,
}

/// `E[(f_hat(X) - f*(X))^2]` estimated from `n_mc` fresh draws of `X`.
pub fn evaluate(predictor: &impl Predictor, instance: &ProblemInstance, n_mc: usize, seed: u64) -> Result<Evaluation> {
    if n_mc == 0 {
        return Err(Error::Domain("n_mc must be >= 1".into()));
    }
    let xs: Vec<Point> = instance.sample_x(n_mc, &mut rng_for(seed));
    let preds = xs.par_iter().map(|x| predictor.predict(x)).collect::<Result<Vec<_>>>()?;
    let mut sse = 0.0;
    let mut uncovered = 0usize;
    for (x, p) in xs.iter().zip(&preds) {
        sse += (p.value - instance.f_star(x.coords())).powi(2);
        uncovered += usize::from(!p.covered);
    }
    Ok(Evaluation {
        excess_risk: sse / n_mc as f64,
        uncovered_fraction: uncovered as f64 / n_mc as f64,
        n_mc,
    })
}

pub fn excess_risk(predictor: &impl Predictor, instance: &ProblemInstance, n_mc: usize, seed: u64) -> Result<f64> {
    Ok(evaluate(predictor, instance, n_mc, seed)?.excess_risk)
}
