//! Sparse-row datasets: LibSVM parsing and synthetic problem generation.
//!
//! Feature indices are 1-based in the text format and 0-based in memory.

use std::fmt::Write as _;
use std::io::BufRead;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the labels of a file mean, as requested by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Binary,
    Multiclass,
}

/// Task of a constructed dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Binary,
    Multiclass { classes: usize },
}

impl Task {
    pub fn kind(&self) -> TaskKind {
        match self {
            Task::Regression => TaskKind::Regression,
            Task::Binary => TaskKind::Binary,
            Task::Multiclass { .. } => TaskKind::Multiclass,
        }
    }
}

/// A borrowed sparse row.
#[derive(Debug, Clone, Copy)]
pub struct SparseRow<'a> {
    pub indices: &'a [u32],
    pub values: &'a [f64],
}

impl SparseRow<'_> {
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(self.values)
            .map(|(&j, &v)| v * dense[j as usize])
            .sum()
    }

    /// `out += a * row`
    pub fn axpy(&self, a: f64, out: &mut [f64]) {
        for (&j, &v) in self.indices.iter().zip(self.values) {
            out[j as usize] += a * v;
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

/// An immutable CSR dataset with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_features: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    labels: Vec<f64>,
    task: Task,
    /// Original label text for each class id (multiclass only).
    class_names: Vec<String>,
}

impl Dataset {
    /// Build from 0-based sparse rows. Entries must be strictly increasing
    /// within a row and lie below `n_features`.
    pub fn from_sparse_rows(
        n_features: usize,
        rows: Vec<Vec<(u32, f64)>>,
        labels: Vec<f64>,
        task: Task,
    ) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            let mut prev: Option<u32> = None;
            for (j, v) in row {
                if (j as usize) >= n_features {
                    return Err(Error::InvalidSpec(format!(
                        "row {i}: feature {j} outside dimension {n_features}"
                    )));
                }
                if prev.is_some_and(|p| j <= p) {
                    return Err(Error::InvalidSpec(format!(
                        "row {i}: feature indices not strictly increasing"
                    )));
                }
                prev = Some(j);
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        let classes = match task {
            Task::Multiclass { classes } => classes,
            _ => 0,
        };
        let ds = Dataset {
            n_features,
            indptr,
            indices,
            values,
            labels,
            task,
            class_names: (0..classes).map(|k| k.to_string()).collect(),
        };
        ds.check_labels()?;
        Ok(ds)
    }

    /// Build from dense rows, dropping exact zeros.
    pub fn from_dense(rows: &[Vec<f64>], labels: Vec<f64>, task: Task) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut sparse = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            sparse.push(
                row.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, &v)| (j as u32, v))
                    .collect(),
            );
        }
        Self::from_sparse_rows(d, sparse, labels, task)
    }

    fn check_labels(&self) -> Result<()> {
        for (i, &y) in self.labels.iter().enumerate() {
            let ok = match self.task {
                Task::Regression => y.is_finite(),
                Task::Binary => y == 1.0 || y == -1.0,
                Task::Multiclass { classes } => {
                    y >= 0.0 && y.fract() == 0.0 && (y as usize) < classes
                }
            };
            if !ok {
                return Err(Error::InvalidSpec(format!(
                    "label {y} of row {i} outside the {:?} domain",
                    self.task
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.n_features
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    /// Original label strings for multiclass ids, in first-appearance order.
    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> SparseRow<'_> {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        SparseRow {
            indices: &self.indices[a..b],
            values: &self.values[a..b],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = SparseRow<'_>> + '_ {
        (0..self.n()).map(move |i| self.row(i))
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i < self.n() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.n(),
            })
        }
    }

    /// Dense `n x d` copy of the feature matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n(), self.d());
        for (i, row) in self.rows().enumerate() {
            for (&j, &v) in row.indices.iter().zip(row.values) {
                m[(i, j as usize)] = v;
            }
        }
        m
    }

    /// Same data with a different declared dimension (must cover every index).
    pub fn with_n_features(mut self, d: usize) -> Result<Self> {
        let max = self.indices.iter().map(|&j| j as usize + 1).max().unwrap_or(0);
        if d < max {
            return Err(Error::InvalidSpec(format!(
                "dimension {d} smaller than largest feature index {max}"
            )));
        }
        self.n_features = d;
        Ok(self)
    }

    /// Divide every column by its largest absolute value. Returns the scales
    /// (1.0 for all-zero columns).
    pub fn max_abs_scaled(&self) -> (Dataset, Vec<f64>) {
        let mut scale = vec![0.0f64; self.d()];
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            scale[j as usize] = scale[j as usize].max(v.abs());
        }
        for s in scale.iter_mut() {
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        let mut out = self.clone();
        for (j, v) in out.indices.iter().zip(out.values.iter_mut()) {
            *v /= scale[*j as usize];
        }
        (out, scale)
    }

    /// Rows `idx` (in that order) as a new dataset of the same dimension.
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        let mut rows = Vec::with_capacity(idx.len());
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            self.check_index(i)?;
            let r = self.row(i);
            rows.push(r.indices.iter().copied().zip(r.values.iter().copied()).collect());
            labels.push(self.labels[i]);
        }
        let mut ds = Self::from_sparse_rows(self.d(), rows, labels, self.task)?;
        ds.class_names = self.class_names.clone();
        Ok(ds)
    }

    /// Serialize back to LibSVM text.
    pub fn to_libsvm(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n() {
            let y = self.labels[i];
            match self.task {
                Task::Regression => write!(out, "{y:?}").unwrap(),
                Task::Binary => out.push_str(if y > 0.0 { "+1" } else { "-1" }),
                Task::Multiclass { .. } => out.push_str(&self.class_names[y as usize]),
            }
            let r = self.row(i);
            for (&j, &v) in r.indices.iter().zip(r.values) {
                write!(out, " {}:{v:?}", j + 1).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Parse LibSVM text (`<label> <idx>:<val> ...`, 1-based indices). Blank lines
/// and `#` comments are skipped. `n_features` overrides the inferred dimension.
pub fn parse_libsvm<R: BufRead>(
    reader: R,
    task: TaskKind,
    n_features: Option<usize>,
) -> Result<Dataset> {
    let mut rows: Vec<Vec<(u32, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let perr = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label = match task {
            TaskKind::Regression => {
                let y: f64 = label_tok
                    .parse()
                    .map_err(|_| perr(format!("malformed label {label_tok:?}")))?;
                if !y.is_finite() {
                    return Err(perr(format!("non-finite label {label_tok:?}")));
                }
                y
            }
            TaskKind::Binary => {
                let y: f64 = label_tok
                    .parse()
                    .map_err(|_| perr(format!("malformed label {label_tok:?}")))?;
                if y != 1.0 && y != -1.0 {
                    return Err(perr(format!("binary label {label_tok:?} not in {{-1,+1}}")));
                }
                y
            }
            TaskKind::Multiclass => match class_names.iter().position(|c| c == label_tok) {
                Some(k) => k as f64,
                None => {
                    class_names.push(label_tok.to_string());
                    (class_names.len() - 1) as f64
                }
            },
        };

        let mut row = Vec::new();
        let mut prev = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| perr(format!("malformed feature token {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| perr(format!("malformed feature index in {tok:?}")))?;
            let val: f64 = val
                .parse()
                .map_err(|_| perr(format!("malformed feature value in {tok:?}")))?;
            if idx == 0 {
                return Err(perr("feature indices are 1-based".into()));
            }
            if !val.is_finite() {
                return Err(perr(format!("non-finite feature value in {tok:?}")));
            }
            if idx <= prev {
                return Err(perr(format!(
                    "feature index {idx} does not increase (previous {prev})"
                )));
            }
            if idx > u32::MAX as usize {
                return Err(perr(format!("feature index {idx} too large")));
            }
            prev = idx;
            max_index = max_index.max(idx);
            row.push(((idx - 1) as u32, val));
        }
        rows.push(row);
        labels.push(label);
    }

    let d = match n_features {
        Some(d) if d < max_index => {
            return Err(Error::InvalidSpec(format!(
                "dimension override {d} smaller than largest feature index {max_index}"
            )))
        }
        Some(d) => d,
        None => max_index,
    };
    let task = match task {
        TaskKind::Regression => Task::Regression,
        TaskKind::Binary => Task::Binary,
        TaskKind::Multiclass => Task::Multiclass {
            classes: class_names.len(),
        },
    };
    let mut ds = Dataset::from_sparse_rows(d, rows, labels, task)?;
    ds.class_names = class_names;
    Ok(ds)
}

pub fn parse_libsvm_str(text: &str, task: TaskKind) -> Result<Dataset> {
    parse_libsvm(text.as_bytes(), task, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    LeastSquares,
    Logistic,
    CounterexampleQuadratics,
    Interpolating,
}

/// Recipe for a generated problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    pub d: usize,
    /// Target condition number of `X^T X`.
    #[serde(default = "one")]
    pub condition_number: f64,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn counterexample() -> Self {
        SyntheticSpec {
            kind: SyntheticKind::CounterexampleQuadratics,
            n: 2,
            d: 1,
            condition_number: 1.0,
            noise: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        // `!(x >= 1)` also rejects NaN.
        if !(self.condition_number >= 1.0) {
            return Err(Error::InvalidSpec("condition number must be >= 1".into()));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::InvalidSpec("noise must be a finite value >= 0".into()));
        }
        match self.kind {
            SyntheticKind::CounterexampleQuadratics => {
                if (self.n, self.d) != (2, 1) {
                    return Err(Error::InvalidSpec(
                        "counterexample quadratics have n = 2, d = 1".into(),
                    ));
                }
            }
            _ => {
                if self.n == 0 || self.d == 0 {
                    return Err(Error::InvalidSpec("n and d must be positive".into()));
                }
            }
        }
        if self.kind == SyntheticKind::Interpolating && self.noise != 0.0 {
            return Err(Error::InvalidSpec("interpolating instances are noiseless".into()));
        }
        Ok(())
    }
}

/// Generate a dataset; see [`generate_planted`] for the hidden parameter.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    generate_planted(spec).map(|(ds, _)| ds)
}

/// Generate a dataset together with the parameter vector used to produce the
/// labels.
///
/// The design matrix is `sqrt(n) * Q S V^T / s_max` with orthonormal `Q`, `V`
/// and singular values spaced geometrically, so `X^T X / n` has eigenvalues
/// in `[1/kappa, 1]`.
pub fn generate_planted(spec: &SyntheticSpec) -> Result<(Dataset, Vec<f64>)> {
    spec.validate()?;
    if spec.kind == SyntheticKind::CounterexampleQuadratics {
        let ds = Dataset::from_dense(&[vec![1.0], vec![2.0]], vec![1.0, -0.5], Task::Regression)?;
        return Ok((ds, vec![0.0]));
    }
    let (n, d) = (spec.n, spec.d);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut gauss = |r: usize, c: usize| {
        DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng))
    };
    let g = gauss(n, d);
    let h = gauss(d, d);
    let planted: Vec<f64> = gauss(d, 1).iter().copied().collect();
    let noise: Vec<f64> = gauss(n, 1).iter().copied().collect();

    let x = if n >= d {
        let q = g.qr().q(); // n x d
        let v = h.qr().q(); // d x d
        let sv_max = spec.condition_number.sqrt();
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |j, _| {
            if d == 1 {
                1.0
            } else {
                sv_max.powf(j as f64 / (d - 1) as f64)
            }
        }));
        (q * s * v.transpose()) * ((n as f64).sqrt() / sv_max)
    } else {
        // Wide problems: plain Gaussian design, scaled so rows have unit
        // mean-square norm per feature.
        g / (d as f64).sqrt()
    };

    let theta = nalgebra::DVector::from_vec(planted.clone());
    let z = &x * &theta;
    let (labels, task) = match spec.kind {
        SyntheticKind::LeastSquares => (
            (0..n).map(|i| z[i] + spec.noise * noise[i]).collect(),
            Task::Regression,
        ),
        SyntheticKind::Interpolating => ((0..n).map(|i| z[i]).collect(), Task::Regression),
        SyntheticKind::Logistic => (
            (0..n)
                .map(|i| if z[i] + spec.noise * noise[i] >= 0.0 { 1.0 } else { -1.0 })
                .collect(),
            Task::Binary,
        ),
        SyntheticKind::CounterexampleQuadratics => unreachable!(),
    };
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
    let mut ds = Dataset::from_dense(&rows, labels, task)?;
    ds.n_features = d;
    Ok((ds, planted))
}
