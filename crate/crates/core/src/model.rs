//! Shared value types: points, labeled/unlabeled samples, estimator settings,
//! the problem-class descriptor, and CSV dataset I/O.
//!
//! Datasets are plain CSV with a mandatory header `x1,...,xd` (plus a trailing
//! `y` column for labeled data). Coordinates are written in Rust's shortest
//! round-trip float representation, so `load(save(s)) == s` bit for bit.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in `R^d` with finite coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Validation("point must have at least one coordinate".into()));
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::Validation(format!("non-finite coordinate {c}")));
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn euclidean(&self, other: &Point) -> f64 {
        euclidean(&self.0, &other.0)
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Vec<f64> {
        p.0
    }
}

impl AsRef<[f64]> for Point {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn check_dims(points: &[Point]) -> Result<usize> {
    let d = points[0].dim();
    if let Some((i, p)) = points.iter().enumerate().find(|(_, p)| p.dim() != d) {
        return Err(Error::Validation(format!(
            "point {i} has dimension {} but the set has dimension {d}",
            p.dim()
        )));
    }
    Ok(d)
}

/// Labeled sample `{(X_i, Y_i)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    points: Vec<Point>,
    labels: Vec<f64>,
    dim: usize,
}

impl LabeledSet {
    pub fn new(points: Vec<Point>, labels: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Validation("labeled set must contain at least one point".into()));
        }
        if points.len() != labels.len() {
            return Err(Error::Validation(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        if let Some(y) = labels.iter().find(|y| !y.is_finite()) {
            return Err(Error::Validation(format!("non-finite label {y}")));
        }
        let dim = check_dims(&points)?;
        Ok(LabeledSet { points, labels, dim })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, f64)> {
        self.points.iter().zip(self.labels.iter().copied())
    }

    /// Mean label, summed in index order.
    pub fn mean_label(&self) -> f64 {
        self.labels.iter().sum::<f64>() / self.labels.len() as f64
    }

    /// Subset by indices, in the order given.
    pub fn select(&self, indices: &[usize]) -> Result<LabeledSet> {
        let points = indices.iter().map(|&i| self.points[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        LabeledSet::new(points, labels)
    }
}

/// Unlabeled sample `{X_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledSet {
    points: Vec<Point>,
    dim: usize,
}

impl UnlabeledSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Validation("unlabeled set must contain at least one point".into()));
        }
        let dim = check_dims(&points)?;
        Ok(UnlabeledSet { points, dim })
    }

    pub fn m(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }
}

/// Constants describing the distribution class a synthetic instance belongs to.
///
/// Carried as metadata only; nothing here is estimated from data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemClass {
    pub d: usize,
    /// Lower bound on the density over its support.
    pub lambda0: f64,
    /// Upper bound on the density.
    pub big_lambda0: f64,
    /// Bound on `|f*|`.
    pub m_bound: f64,
    /// Conditional noise standard deviation.
    pub sigma: f64,
    /// Maximum number of connected components of the support.
    pub k_components: usize,
    /// Condition number (reach) lower bound of the support.
    pub tau0: f64,
    /// Smoothness exponent of `f*` w.r.t. the density-sensitive metric.
    pub beta: f64,
    pub c1: f64,
    /// Euclidean Holder exponent of the density.
    pub eta: f64,
    pub c2: f64,
}

impl ProblemClass {
    pub fn validate(&self) -> Result<()> {
        let ok = self.d >= 1
            && self.lambda0 > 0.0
            && self.lambda0 <= self.big_lambda0
            && self.big_lambda0.is_finite()
            && self.m_bound > 0.0
            && self.sigma >= 0.0
            && self.k_components >= 1
            && self.tau0 > 0.0
            && self.beta > 0.0
            && self.eta > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid problem class {self:?}")))
        }
    }
}

/// What `predict` returns when no labeled point is within the bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Mean of all training labels, reported as uncovered.
    #[default]
    LabeledMean,
    /// Raise [`Error::Uncovered`].
    Undefined,
}

/// Density sensitivity `alpha`, bandwidth `h` (in units of the density-sensitive
/// distance) and the empty-neighborhood policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub alpha: f64,
    pub h: f64,
    #[serde(default)]
    pub fallback: Fallback,
}

impl EstimatorSpec {
    pub fn new(alpha: f64, h: f64, fallback: Fallback) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Domain(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        if !(h > 0.0) {
            return Err(Error::Domain(format!("bandwidth must be > 0, got {h}")));
        }
        Ok(EstimatorSpec { alpha, h, fallback })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Labeled,
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Labeled(LabeledSet),
    Unlabeled(UnlabeledSet),
}

impl Dataset {
    pub fn into_labeled(self) -> Result<LabeledSet> {
        match self {
            Dataset::Labeled(s) => Ok(s),
            Dataset::Unlabeled(_) => Err(Error::Schema("expected a labeled dataset".into())),
        }
    }

    pub fn into_unlabeled(self) -> Result<UnlabeledSet> {
        match self {
            Dataset::Unlabeled(s) => Ok(s),
            Dataset::Labeled(_) => Err(Error::Schema("expected an unlabeled dataset".into())),
        }
    }
}

impl From<LabeledSet> for Dataset {
    fn from(s: LabeledSet) -> Self {
        Dataset::Labeled(s)
    }
}

impl From<UnlabeledSet> for Dataset {
    fn from(s: UnlabeledSet) -> Self {
        Dataset::Unlabeled(s)
    }
}

/// Parses the header, returning `(d, has_y)`.
fn parse_header(path: &Path, header: &csv::StringRecord) -> Result<(usize, bool)> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let has_y = names.last() == Some(&"y");
    let d = if has_y { names.len() - 1 } else { names.len() };
    if d == 0 {
        return Err(Error::Schema(format!("{}: header has no coordinate columns", path.display())));
    }
    for (i, name) in names[..d].iter().enumerate() {
        if *name != format!("x{}", i + 1) {
            return Err(Error::Schema(format!(
                "{}: header column {} is `{name}`, expected `x{}`",
                path.display(),
                i + 1,
                i + 1
            )));
        }
    }
    Ok((d, has_y))
}

struct RawRows {
    d: usize,
    has_y: bool,
    rows: Vec<Vec<f64>>,
}

fn read_rows(path: &Path) -> Result<RawRows> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let header = reader
        .headers()
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?
        .clone();
    let (d, has_y) = parse_header(path, &header)?;
    let width = d + usize::from(has_y);

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Parse { path: path.to_path_buf(), line, message: e.to_string() }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let mut row = Vec::with_capacity(width);
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("cannot parse `{field}` as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Validation(format!(
                    "{}: line {line}: non-finite value `{field}`",
                    path.display()
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(RawRows { d, has_y, rows })
}

/// Loads a labeled or unlabeled dataset from CSV.
pub fn load_dataset(path: impl AsRef<Path>, kind: DatasetKind) -> Result<Dataset> {
    let path = path.as_ref();
    let RawRows { d, has_y, rows } = read_rows(path)?;
    match (kind, has_y) {
        (DatasetKind::Labeled, false) => {
            return Err(Error::Schema(format!("{}: labeled dataset has no `y` column", path.display())))
        }
        (DatasetKind::Unlabeled, true) => {
            return Err(Error::Schema(format!("{}: unlabeled dataset has a `y` column", path.display())))
        }
        _ => {}
    }
    let mut points = Vec::with_capacity(rows.len());
    let mut labels = Vec::new();
    for mut row in rows {
        if has_y {
            labels.push(row.pop().expect("row width checked"));
        }
        debug_assert_eq!(row.len(), d);
        points.push(Point::new(row)?);
    }
    match kind {
        DatasetKind::Labeled => Ok(Dataset::Labeled(LabeledSet::new(points, labels)?)),
        DatasetKind::Unlabeled => Ok(Dataset::Unlabeled(UnlabeledSet::new(points)?)),
    }
}

pub fn load_labeled(path: impl AsRef<Path>) -> Result<LabeledSet> {
    load_dataset(path, DatasetKind::Labeled)?.into_labeled()
}

pub fn load_unlabeled(path: impl AsRef<Path>) -> Result<UnlabeledSet> {
    load_dataset(path, DatasetKind::Unlabeled)?.into_unlabeled()
}

/// Loads query points (`x1,...,xd` header); zero rows is allowed.
pub fn load_points(path: impl AsRef<Path>) -> Result<(usize, Vec<Point>)> {
    let path = path.as_ref();
    let RawRows { d, has_y, rows } = read_rows(path)?;
    if has_y {
        return Err(Error::Schema(format!("{}: query file has a `y` column", path.display())));
    }
    let points = rows.into_iter().map(Point::new).collect::<Result<Vec<_>>>()?;
    Ok((d, points))
}

fn header(d: usize, with_y: bool) -> Vec<String> {
    let mut h: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    if with_y {
        h.push("y".into());
    }
    h
}

fn write_rows<'a>(
    path: &Path,
    d: usize,
    with_y: bool,
    rows: impl Iterator<Item = (&'a Point, Option<f64>)>,
) -> Result<()> {
    let wrap = |e: csv::Error| Error::Write {
        path: path.to_path_buf(),
        source: match e.into_kind() {
            csv::ErrorKind::Io(io) => io,
            other => std::io::Error::other(format!("{other:?}")),
        },
    };
    let mut writer = csv::Writer::from_path(path).map_err(wrap)?;
    writer.write_record(header(d, with_y)).map_err(wrap)?;
    let mut buf: Vec<String> = Vec::with_capacity(d + 1);
    for (p, y) in rows {
        buf.clear();
        buf.extend(p.coords().iter().map(|c| format!("{c}")));
        if let Some(y) = y {
            buf.push(format!("{y}"));
        }
        writer.write_record(&buf).map_err(wrap)?;
    }
    writer.flush().map_err(|e| Error::Write { path: path.to_path_buf(), source: e })
}

/// Writes a dataset as CSV.
pub fn save_dataset(set: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    match set {
        Dataset::Labeled(s) => save_labeled(s, path),
        Dataset::Unlabeled(s) => save_unlabeled(s, path),
    }
}

pub fn save_labeled(set: &LabeledSet, path: impl AsRef<Path>) -> Result<()> {
    write_rows(path.as_ref(), set.dim(), true, set.iter().map(|(p, y)| (p, Some(y))))
}

pub fn save_unlabeled(set: &UnlabeledSet, path: impl AsRef<Path>) -> Result<()> {
    write_rows(path.as_ref(), set.dim(), false, set.points().iter().map(|p| (p, None)))
}
