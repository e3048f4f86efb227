//! Information measures in natural-log units.
//!
//! All functions take plain nonnegative vectors. Entropy and divergence do
//! not require their arguments to sum to one, which the squeezed objective
//! relies on (`f` and `pV + f` are not probability vectors).

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};

/// A quantity of information in nats. May be `+inf` for divergences.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Nats(pub f64);

impl Nats {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn to_bits(self) -> f64 {
        self.0 / std::f64::consts::LN_2
    }

    pub fn from_bits(bits: f64) -> Self {
        Nats(bits * std::f64::consts::LN_2)
    }
}

impl fmt::Display for Nats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} nats", self.0)
    }
}

/// Output unit for presentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Nats,
    Bits,
}

impl Units {
    pub fn convert(self, value: Nats) -> f64 {
        match self {
            Units::Nats => value.0,
            Units::Bits => value.to_bits(),
        }
    }
}

fn check_nonnegative(v: &[f64]) -> Result<()> {
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

/// `x ln x` with the convention `0 ln 0 = 0`.
#[inline]
pub(crate) fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `q ln(q/s)` with `0 ln(0/s) = 0` and `+inf` when `q > 0 = s`.
#[inline]
pub(crate) fn kl_term(q: f64, s: f64) -> f64 {
    if q == 0.0 {
        0.0
    } else if s == 0.0 {
        f64::INFINITY
    } else {
        q * (q / s).ln()
    }
}

pub(crate) fn row_entropy(m: &DMatrix<f64>, i: usize) -> f64 {
    -m.row(i).iter().map(|&x| xlogx(x)).sum::<f64>()
}

pub(crate) fn entropy_unchecked(q: &[f64]) -> f64 {
    -q.iter().map(|&x| xlogx(x)).sum::<f64>()
}

pub(crate) fn kl_unchecked<'a>(q: impl IntoIterator<Item = &'a f64>, s: &[f64]) -> f64 {
    q.into_iter().zip(s).map(|(&a, &b)| kl_term(a, b)).sum()
}

/// Shannon entropy `-Σ q_i ln q_i` of a nonnegative vector.
pub fn entropy(q: &[f64]) -> Result<Nats> {
    check_nonnegative(q)?;
    Ok(Nats(entropy_unchecked(q)))
}

/// Kullback-Leibler divergence `Σ q_i ln(q_i / s_i)` of nonnegative vectors.
///
/// Returns `+inf` when `q` puts mass where `s` has none.
pub fn kl_divergence(q: &[f64], s: &[f64]) -> Result<Nats> {
    if q.len() != s.len() {
        return Err(Error::LengthMismatch {
            expected: q.len(),
            found: s.len(),
        });
    }
    check_nonnegative(q)?;
    check_nonnegative(s)?;
    Ok(Nats(kl_unchecked(q, s)))
}

/// Row-vector times matrix: `(pV)_j = Σ_i p_i V_ij`.
pub(crate) fn vec_mat(p: &[f64], v: &DMatrix<f64>) -> Vec<f64> {
    (0..v.ncols())
        .map(|j| v.column(j).iter().zip(p).map(|(&vij, &pi)| pi * vij).sum())
        .collect()
}

/// The divergences `z_i = D(W_i || qW)` for every row of `w`.
pub(crate) fn row_divergences(w: &DMatrix<f64>, output: &[f64]) -> Vec<f64> {
    (0..w.nrows())
        .map(|i| kl_unchecked(w.row(i).iter(), output))
        .collect()
}

/// Mutual information `I(p) = Σ_i p_i D(W_i || pW)`.
pub fn mutual_information(w: &ChannelMatrix, p: &[f64]) -> Result<Nats> {
    if p.len() != w.inputs() {
        return Err(Error::DimensionMismatch(format!(
            "input distribution has length {}, channel has {} inputs",
            p.len(),
            w.inputs()
        )));
    }
    check_nonnegative(p)?;
    let output = vec_mat(p, w.matrix());
    let z = row_divergences(w.matrix(), &output);
    Ok(Nats(
        p.iter()
            .zip(&z)
            .map(|(&pi, &zi)| if pi == 0.0 { 0.0 } else { pi * zi })
            .sum(),
    ))
}

fn check_objective_dims(v: &DMatrix<f64>, f: &[f64], c: &[f64], p: &[f64]) -> Result<()> {
    let (m, n) = v.shape();
    if f.len() != n || c.len() != m || p.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "objective expects V {m}x{n}, f {n}, c {m}, p {m}; got f {}, c {}, p {}",
            f.len(),
            c.len(),
            p.len()
        )));
    }
    check_nonnegative(f)?;
    check_nonnegative(p)
}

/// The generalized objective `I(p|V,f,c) = H(pV+f) + Σ_i p_i (c_i − H(V_i)) − H(f)`.
///
/// `v` is any row-stochastic matrix; unlike [`ChannelMatrix`] it may have
/// zero columns, as squeezed matrices often do.
pub fn generalized_objective(v: &DMatrix<f64>, f: &[f64], c: &[f64], p: &[f64]) -> Result<Nats> {
    check_objective_dims(v, f, c, p)?;
    let mut out = vec_mat(p, v);
    for (o, &fj) in out.iter_mut().zip(f) {
        *o += fj;
    }
    let rows: f64 = (0..v.nrows())
        .map(|i| p[i] * (c[i] - row_entropy(v, i)))
        .sum();
    Ok(Nats(entropy_unchecked(&out) + rows - entropy_unchecked(f)))
}

/// Divergence form of the same objective:
/// `Σ_i p_i (D(V_i || f+pV) + c_i) + D(f || f+pV)`.
pub fn generalized_objective_divergence_form(
    v: &DMatrix<f64>,
    f: &[f64],
    c: &[f64],
    p: &[f64],
) -> Result<Nats> {
    check_objective_dims(v, f, c, p)?;
    let mut out = vec_mat(p, v);
    for (o, &fj) in out.iter_mut().zip(f) {
        *o += fj;
    }
    let rows: f64 = (0..v.nrows())
        .map(|i| {
            if p[i] == 0.0 {
                0.0
            } else {
                p[i] * (kl_unchecked(v.row(i).iter(), &out) + c[i])
            }
        })
        .sum();
    Ok(Nats(rows + kl_unchecked(f, &out)))
}
