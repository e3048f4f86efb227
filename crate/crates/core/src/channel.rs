//! Channel matrices, input distributions and squeeze parameters.
//!
//! A [`ChannelMatrix`] is a validated row-stochastic `m×n` matrix `W`.
//! [`SqueezeParams`] bundles the floor vector `r`, the output shift `f` and
//! everything derived from them: the exponent gain `λ = (1+f₊)/(1−r₊)`, the
//! floor-adjusted matrix `W* = (I − 1r) W / (1−r₊)`, the squeezed matrix
//! `W̃ = (1+f₊) W* − 1f` and the per-row offsets `c`.

use std::ops::Deref;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::{row_entropy, vec_mat};

/// Row sums must be within this of one to be accepted as-is.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Default window inside which row sums are silently renormalized.
pub const RENORMALIZE_WINDOW: f64 = 1e-9;
/// Tolerance on identities satisfied by derived matrices.
pub const DERIVED_TOL: f64 = 1e-10;
/// Negative values of at most this magnitude are treated as rounding and clamped.
pub const CLAMP_TOL: f64 = 1e-12;
/// Distributions must sum to one within this.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidateOptions {
    /// Row sums deviating from one by less than this are renormalized.
    pub tolerance: f64,
    /// Remove all-zero columns instead of rejecting the matrix.
    pub drop_zero_columns: bool,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            tolerance: RENORMALIZE_WINDOW,
            drop_zero_columns: false,
        }
    }
}

/// A validated discrete memoryless channel `W_ij = P(output j | input i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    w: DMatrix<f64>,
    all_rows_equal: bool,
    dropped_columns: Vec<usize>,
}

/// Validate a raw `m×n` matrix given as rows.
pub fn validate_channel(rows: &[Vec<f64>], opts: ValidateOptions) -> Result<ChannelMatrix> {
    let m = rows.len();
    if m == 0 || rows[0].is_empty() {
        return Err(Error::EmptyMatrix);
    }
    if m < 2 {
        return Err(Error::TooFewInputs(m));
    }
    let n = rows[0].len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::RaggedRow {
                row: i,
                expected: n,
                found: row.len(),
            });
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index: i * n + j });
            }
            if v < 0.0 {
                return Err(Error::NegativeEntry {
                    index: i * n + j,
                    value: v,
                });
            }
        }
    }

    let mut keep = Vec::with_capacity(n);
    let mut dropped = Vec::new();
    for j in 0..n {
        if rows.iter().all(|row| row[j] == 0.0) {
            if opts.drop_zero_columns {
                dropped.push(j);
            } else {
                return Err(Error::ZeroColumn { col: j });
            }
        } else {
            keep.push(j);
        }
    }
    if keep.is_empty() {
        return Err(Error::EmptyMatrix);
    }

    let window = opts.tolerance.max(ROW_SUM_TOL);
    let mut w = DMatrix::zeros(m, keep.len());
    for (i, row) in rows.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > window {
            return Err(Error::RowSumOutOfTolerance { row: i, sum });
        }
        for (k, &j) in keep.iter().enumerate() {
            w[(i, k)] = row[j] / sum;
        }
    }

    let all_rows_equal =
        (1..m).all(|i| (0..keep.len()).all(|j| (w[(i, j)] - w[(0, j)]).abs() <= window));

    Ok(ChannelMatrix {
        w,
        all_rows_equal,
        dropped_columns: dropped,
    })
}

#[derive(Deserialize)]
struct MatrixFile {
    matrix: Vec<Vec<f64>>,
}

impl ChannelMatrix {
    /// Validate with default options.
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        validate_channel(rows, ValidateOptions::default())
    }

    /// Parse CSV text with one row per input letter. No header.
    pub fn from_csv_str(text: &str, opts: ValidateOptions) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row = record
                .iter()
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if !row.is_empty() {
                rows.push(row);
            }
        }
        validate_channel(&rows, opts)
    }

    /// Parse `{"matrix": [[...], ...]}`.
    pub fn from_json_str(text: &str, opts: ValidateOptions) -> Result<Self> {
        let file: MatrixFile = serde_json::from_str(text)?;
        validate_channel(&file.matrix, opts)
    }

    /// Load from a `.json` or CSV file; anything not ending in `.json` is read as CSV.
    pub fn load(path: &Path, opts: ValidateOptions) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"))
            || text.trim_start().starts_with('{');
        if is_json {
            Self::from_json_str(&text, opts)
        } else {
            Self::from_csv_str(&text, opts)
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.w.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn all_rows_equal(&self) -> bool {
        self.all_rows_equal
    }

    /// Original indices of columns removed in drop-zero-columns mode.
    pub fn dropped_columns(&self) -> &[usize] {
        &self.dropped_columns
    }

    /// `Σ_j min_i W_ij`, the overlap shared by all rows.
    pub fn column_min_sum(&self) -> f64 {
        self.column_minima().iter().sum()
    }

    pub fn column_minima(&self) -> Vec<f64> {
        (0..self.outputs())
            .map(|j| self.w.column(j).min())
            .collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.inputs())
            .map(|i| self.w.row(i).iter().copied().collect())
            .collect()
    }

    /// Output distribution `pW`.
    pub fn output_distribution(&self, p: &[f64]) -> Vec<f64> {
        vec_mat(p, &self.w)
    }
}

/// A point of the simplex, optionally constrained to lie above a floor `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    floor: Option<Vec<f64>>,
}

fn check_simplex(probs: &[f64], tol: f64) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    for (index, &value) in probs.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if value < 0.0 {
            return Err(Error::NegativeEntry { index, value });
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::NotNormalized { sum });
    }
    Ok(())
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_simplex(&probs, SIMPLEX_TOL)?;
        Ok(Self { probs, floor: None })
    }

    /// A member of `Ω(r)`: a distribution with `probs ≥ floor` elementwise.
    pub fn with_floor(probs: Vec<f64>, floor: Vec<f64>) -> Result<Self> {
        check_simplex(&probs, SIMPLEX_TOL)?;
        if floor.len() != probs.len() {
            return Err(Error::LengthMismatch {
                expected: probs.len(),
                found: floor.len(),
            });
        }
        for (index, (&value, &fl)) in probs.iter().zip(&floor).enumerate() {
            if value < fl {
                return Err(Error::BelowFloor {
                    index,
                    value,
                    floor: fl,
                });
            }
        }
        Ok(Self {
            probs,
            floor: Some(floor),
        })
    }

    /// Normalize nonnegative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite { index });
            }
            if value < 0.0 {
                return Err(Error::NegativeEntry { index, value });
            }
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self {
            probs: weights.iter().map(|w| w / sum).collect(),
            floor: None,
        })
    }

    pub fn uniform(m: usize) -> Self {
        Self {
            probs: vec![1.0 / m as f64; m],
            floor: None,
        }
    }

    /// Iterates produced by the solvers; the caller guarantees the invariants.
    pub(crate) fn from_parts_unchecked(probs: Vec<f64>, floor: Option<Vec<f64>>) -> Self {
        Self { probs, floor }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn floor(&self) -> Option<&[f64]> {
        self.floor.as_deref()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    pub fn is_interior(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }
}

impl Deref for Distribution {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.probs
    }
}

impl AsRef<[f64]> for Distribution {
    fn as_ref(&self) -> &[f64] {
        &self.probs
    }
}

/// Squeezing parameters and their derived matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SqueezeParams {
    pub r: Vec<f64>,
    pub f: Vec<f64>,
    pub lambda: f64,
    pub r_plus: f64,
    pub f_plus: f64,
    pub w_star: DMatrix<f64>,
    pub w_tilde: DMatrix<f64>,
    pub c: Vec<f64>,
    /// `W ≥ 1_m rW` holds.
    pub w_constraint_ok: bool,
    /// `W̃ ≥ 0` holds.
    pub w_tilde_ok: bool,
}

/// JSON form `{"r": [...], "f": [...], "lambda": x}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub r: Vec<f64>,
    pub f: Vec<f64>,
    pub lambda: f64,
}

fn check_vector(v: &[f64], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::LengthMismatch {
            expected: len,
            found: v.len(),
        });
    }
    for (index, &value) in v.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if value < 0.0 {
            return Err(Error::NegativeEntry { index, value });
        }
    }
    Ok(())
}

impl SqueezeParams {
    /// Plain Arimoto-Blahut: `r = 0`, `f = 0`.
    pub fn identity(w: &ChannelMatrix) -> Self {
        build_squeeze_params(w, &vec![0.0; w.inputs()], &vec![0.0; w.outputs()])
            .expect("zero squeeze parameters are always valid")
    }

    /// Build parameters without rejecting constraint violations; the
    /// `*_ok` flags record which constraints hold. Shapes, signs and
    /// `r₊ < 1` are still enforced.
    pub fn build_unchecked(w: &ChannelMatrix, r: &[f64], f: &[f64]) -> Result<Self> {
        check_vector(r, w.inputs())?;
        check_vector(f, w.outputs())?;
        let r_plus: f64 = r.iter().sum();
        if r_plus >= 1.0 {
            return Err(Error::RPlusNotLessThanOne { r_plus });
        }
        let f_plus: f64 = f.iter().sum();
        let lambda = (1.0 + f_plus) / (1.0 - r_plus);
        let (m, n) = (w.inputs(), w.outputs());
        let rw = w.output_distribution(r);
        let wm = w.matrix();

        let mut w_constraint_ok = true;
        let mut w_star = DMatrix::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let mut d = wm[(i, j)] - rw[j];
                if d < 0.0 {
                    if d < -CLAMP_TOL {
                        w_constraint_ok = false;
                    } else {
                        d = 0.0;
                    }
                }
                w_star[(i, j)] = d / (1.0 - r_plus);
            }
        }

        let mut w_tilde_ok = true;
        let mut w_tilde = DMatrix::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let mut v = (1.0 + f_plus) * w_star[(i, j)] - f[j];
                if v < 0.0 {
                    if v < -CLAMP_TOL {
                        w_tilde_ok = false;
                    } else {
                        v = 0.0;
                    }
                }
                w_tilde[(i, j)] = v;
            }
        }

        let c = (0..m)
            .map(|i| row_entropy(&w_tilde, i) - lambda * row_entropy(wm, i))
            .collect();

        Ok(Self {
            r: r.to_vec(),
            f: f.to_vec(),
            lambda,
            r_plus,
            f_plus,
            w_star,
            w_tilde,
            c,
            w_constraint_ok,
            w_tilde_ok,
        })
    }

    pub fn is_valid(&self) -> bool {
        self.w_constraint_ok && self.w_tilde_ok
    }

    pub fn inputs(&self) -> usize {
        self.r.len()
    }

    pub fn outputs(&self) -> usize {
        self.f.len()
    }

    /// Map a point of `Ω(r)` back to the unsqueezed simplex: `(p − r)/(1 − r₊)`.
    pub fn unsqueeze(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(&self.r)
            .map(|(&pi, &ri)| ((pi - ri) / (1.0 - self.r_plus)).max(0.0))
            .collect()
    }

    /// Map a point of the simplex into `Ω(r)`: `(1 − r₊) q + r`.
    pub fn squeeze(&self, q: &[f64]) -> Vec<f64> {
        q.iter()
            .zip(&self.r)
            .map(|(&qi, &ri)| (1.0 - self.r_plus) * qi + ri)
            .collect()
    }

    pub fn to_file(&self) -> ParamsFile {
        ParamsFile {
            r: self.r.clone(),
            f: self.f.clone(),
            lambda: self.lambda,
        }
    }
}

/// Build and validate squeeze parameters for `(r, f)`.
pub fn build_squeeze_params(w: &ChannelMatrix, r: &[f64], f: &[f64]) -> Result<SqueezeParams> {
    let params = SqueezeParams::build_unchecked(w, r, f)?;
    if !params.w_constraint_ok {
        let rw = w.output_distribution(r);
        let mut worst = (0, 0, 0.0);
        for i in 0..w.inputs() {
            for j in 0..w.outputs() {
                let v = rw[j] - w.matrix()[(i, j)];
                if v > worst.2 {
                    worst = (i, j, v);
                }
            }
        }
        return Err(Error::ConstraintW {
            row: worst.0,
            col: worst.1,
            violation: worst.2,
        });
    }
    if !params.w_tilde_ok {
        let mut worst = (0, 0, 0.0);
        for i in 0..w.inputs() {
            for j in 0..w.outputs() {
                let v = (1.0 + params.f_plus) * params.w_star[(i, j)] - f[j];
                if v < worst.2 {
                    worst = (i, j, v);
                }
            }
        }
        return Err(Error::ConstraintWTilde {
            row: worst.0,
            col: worst.1,
            value: worst.2,
        });
    }
    for i in 0..w.inputs() {
        let s: f64 = params.w_tilde.row(i).sum();
        if (s - 1.0).abs() > DERIVED_TOL {
            return Err(Error::RowSumOutOfTolerance { row: i, sum: s });
        }
    }
    Ok(params)
}

/// Range of admissible `λ` for floor `r`: `[1/(1−r₊), 1/(1 − Σ_j min_i W_ij)]`.
pub fn lambda_range(w: &ChannelMatrix, r_plus: f64) -> (f64, f64) {
    (1.0 / (1.0 - r_plus), 1.0 / (1.0 - w.column_min_sum()))
}

/// Build parameters from a floor `r` and gain `λ`, choosing
/// `f_j = [λ(1−r₊) − 1] · min_i W*_ij / Σ_k min_i W*_ik` so that
/// `λ = (1+f₊)/(1−r₊)`.
pub fn params_from_r_lambda(w: &ChannelMatrix, r: &[f64], lambda: f64) -> Result<SqueezeParams> {
    check_vector(r, w.inputs())?;
    let r_plus: f64 = r.iter().sum();
    if r_plus >= 1.0 {
        return Err(Error::RPlusNotLessThanOne { r_plus });
    }
    let (lower, upper) = lambda_range(w, r_plus);
    let slack = 1e-12 * lambda.abs().max(1.0);
    if !lambda.is_finite() || lambda < lower - slack || lambda > upper + slack {
        return Err(Error::LambdaOutOfRange {
            lambda,
            lower,
            upper,
        });
    }
    let base = SqueezeParams::build_unchecked(w, r, &vec![0.0; w.outputs()])?;
    if !base.w_constraint_ok {
        // reuse the strict builder for the diagnostic
        return build_squeeze_params(w, r, &vec![0.0; w.outputs()]);
    }
    let minima: Vec<f64> = (0..w.outputs())
        .map(|j| base.w_star.column(j).min())
        .collect();
    let total: f64 = minima.iter().sum();
    let excess = (lambda * (1.0 - r_plus) - 1.0).max(0.0);
    let f: Vec<f64> = if total > 0.0 {
        minima.iter().map(|&mj| excess * mj / total).collect()
    } else if excess <= slack {
        vec![0.0; w.outputs()]
    } else {
        return Err(Error::LambdaOutOfRange {
            lambda,
            lower,
            upper,
        });
    };
    build_squeeze_params(w, r, &f)
}
