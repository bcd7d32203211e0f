//! Boxcar kernel regression over density-sensitive neighborhoods.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::{DistanceField, GeodesicGraph};
use crate::model::{EstimatorSpec, Fallback, LabeledSet, Point};

/// A prediction and whether any labeled point fell inside the bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub value: f64,
    pub covered: bool,
}

pub trait Predictor: Sync {
    fn predict(&self, x: &Point) -> Result<Prediction>;
}

/// Average of the labels whose distance is at most `h`.
///
/// Sums run in index order. The mean is clamped to the range of the averaged
/// labels so rounding can never push it outside. With no neighbors, the
/// fallback decides: labeled mean (uncovered) or an [`Error::Uncovered`].
pub fn boxcar_average(
    distances: &[f64],
    labels: &[f64],
    h: f64,
    fallback: Fallback,
    truncation: Option<f64>,
    query: &Point,
) -> Result<Prediction> {
    let mut sum = 0.0;
    let mut count = 0usize;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (&d, &y) in distances.iter().zip(labels) {
        if d <= h {
            sum += y;
            count += 1;
            lo = lo.min(y);
            hi = hi.max(y);
        }
    }
    let (value, covered) = if count > 0 {
        ((sum / count as f64).clamp(lo, hi), true)
    } else {
        match fallback {
            Fallback::LabeledMean => (labels.iter().sum::<f64>() / labels.len() as f64, false),
            Fallback::Undefined => {
                return Err(Error::Uncovered { point: query.coords().to_vec(), h });
            }
        }
    };
    Ok(Prediction { value: truncate(value, truncation), covered })
}

fn truncate(value: f64, truncation: Option<f64>) -> f64 {
    match truncation {
        Some(m) => value.clamp(-m, m),
        None => value,
    }
}

fn check_truncation(truncation: Option<f64>) -> Result<()> {
    match truncation {
        Some(m) if !(m > 0.0) => Err(Error::Domain(format!("truncation level must be > 0, got {m}"))),
        _ => Ok(()),
    }
}

/// A semisupervised regressor bound to a geodesic graph.
///
/// Holds one distance field per labeled point, so every prediction is a
/// lookup plus an average.
#[derive(Debug, Clone)]
pub struct FittedRegressor<'g> {
    spec: EstimatorSpec,
    labeled: LabeledSet,
    fields: Vec<DistanceField>,
    graph: &'g GeodesicGraph,
    truncation: Option<f64>,
}

/// Fits the estimator: one single-source field per labeled point.
pub fn fit<'g>(labeled: &LabeledSet, graph: &'g GeodesicGraph, spec: EstimatorSpec) -> Result<FittedRegressor<'g>> {
    if spec.alpha != graph.alpha() {
        return Err(Error::Config(format!(
            "estimator alpha {} does not match the graph's alpha {}",
            spec.alpha,
            graph.alpha()
        )));
    }
    if labeled.dim() != graph.grid().dim() {
        return Err(Error::Validation(format!(
            "labeled data are {}-dimensional but the grid is {}-dimensional",
            labeled.dim(),
            graph.grid().dim()
        )));
    }
    let fields = labeled.points().par_iter().map(|x| graph.distances_from(x)).collect();
    Ok(FittedRegressor { spec, labeled: labeled.clone(), fields, graph, truncation: None })
}

impl<'g> FittedRegressor<'g> {
    /// Clip predictions to `[-m, m]`.
    pub fn with_truncation(mut self, truncation: Option<f64>) -> Result<Self> {
        check_truncation(truncation)?;
        self.truncation = truncation;
        Ok(self)
    }

    /// Same fields, different bandwidth or fallback.
    pub fn with_spec(mut self, spec: EstimatorSpec) -> Result<Self> {
        if spec.alpha != self.spec.alpha {
            return Err(Error::Config("changing alpha requires refitting".into()));
        }
        self.spec = spec;
        Ok(self)
    }

    pub fn spec(&self) -> &EstimatorSpec {
        &self.spec
    }

    pub fn labeled(&self) -> &LabeledSet {
        &self.labeled
    }

    pub fn graph(&self) -> &'g GeodesicGraph {
        self.graph
    }

    /// Distances from every labeled point to `x` (infinite when `x` does not snap).
    pub fn neighbor_distances(&self, x: &Point) -> Vec<f64> {
        match self.graph.snap(x.coords()) {
            Some(node) => self.fields.iter().map(|f| f.at(node)).collect(),
            None => vec![f64::INFINITY; self.fields.len()],
        }
    }

    /// Distances between labeled points `i` and `j`.
    pub fn labeled_distance(&self, i: usize, j: usize) -> f64 {
        match self.graph.snap(self.labeled.points()[j].coords()) {
            Some(node) => self.fields[i].at(node),
            None => f64::INFINITY,
        }
    }

    /// Predictions for many queries (computed in parallel, returned in order).
    pub fn predict_many(&self, xs: &[Point]) -> Result<Vec<Prediction>> {
        xs.par_iter().map(|x| self.predict(x)).collect()
    }
}

impl Predictor for FittedRegressor<'_> {
    fn predict(&self, x: &Point) -> Result<Prediction> {
        let d = self.neighbor_distances(x);
        boxcar_average(&d, self.labeled.labels(), self.spec.h, self.spec.fallback, self.truncation, x)
    }
}

/// The supervised baseline: boxcar regression with Euclidean distances.
#[derive(Debug, Clone)]
pub struct EuclideanRegressor {
    labeled: LabeledSet,
    h: f64,
    fallback: Fallback,
    truncation: Option<f64>,
}

impl EuclideanRegressor {
    pub fn new(labeled: LabeledSet, h: f64, fallback: Fallback, truncation: Option<f64>) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Domain(format!("bandwidth must be > 0, got {h}")));
        }
        check_truncation(truncation)?;
        Ok(EuclideanRegressor { labeled, h, fallback, truncation })
    }

    pub fn distances(&self, x: &Point) -> Vec<f64> {
        self.labeled.points().iter().map(|p| p.euclidean(x)).collect()
    }

    pub fn h(&self) -> f64 {
        self.h
    }
}

impl Predictor for EuclideanRegressor {
    fn predict(&self, x: &Point) -> Result<Prediction> {
        boxcar_average(&self.distances(x), self.labeled.labels(), self.h, self.fallback, self.truncation, x)
    }
}

/// One-off Euclidean boxcar prediction.
pub fn predict_baseline(labeled: &LabeledSet, x: &Point, h: f64, fallback: Fallback) -> Result<Prediction> {
    EuclideanRegressor::new(labeled.clone(), h, fallback, None)?.predict(x)
}

/// Mean squared error of `predictor` on `eval`.
pub fn empirical_risk(predictor: &impl Predictor, eval: &LabeledSet) -> Result<f64> {
    let preds: Vec<Prediction> = eval.points().par_iter().map(|x| predictor.predict(x)).collect::<Result<_>>()?;
    let sse: f64 = preds.iter().zip(eval.labels()).map(|(p, y)| (p.value - y).powi(2)).sum();
    Ok(sse / eval.n() as f64)
}
