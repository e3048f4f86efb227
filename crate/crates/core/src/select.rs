//! Choosing squeeze parameters.
//!
//! The combined squeeze `g = λ rW + f` (with `λ = (1+f₊)/(1−r₊) = 1 + g₊`)
//! has an optimum that does not depend on `r`:
//! `g_j = min_i W_ij / (1 − Σ_k min_i W_ik)`. For two inputs the best floor
//! `r` is also known in closed form; for more inputs a floor proportional to
//! a reference distribution `q` is used.

use serde::{Deserialize, Serialize};

use crate::channel::{build_squeeze_params, ChannelMatrix, Distribution, SqueezeParams, CLAMP_TOL};
use crate::error::{Error, Result};

/// Floor components are capped so that `r₊ ≤ 1 − R_PLUS_MARGIN`.
pub const R_PLUS_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "q", rename_all = "kebab-case")]
pub enum Strategy {
    /// Plain Arimoto-Blahut.
    None,
    /// `r = 0`, `g` optimal: the singly squeezed scheme at its largest `λ`.
    LambdaOnly,
    /// Exact optimum for two-input channels.
    OptimalM2,
    /// `r = δ q` with `δ` as large as the floor constraint allows.
    HeuristicDeltaQ(Vec<f64>),
}

impl Strategy {
    /// Optimal floor for two inputs, uniform-reference floor otherwise.
    pub fn auto(w: &ChannelMatrix) -> Self {
        if w.inputs() == 2 {
            Strategy::OptimalM2
        } else {
            Strategy::HeuristicDeltaQ(vec![1.0 / w.inputs() as f64; w.inputs()])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezePlan {
    pub r: Vec<f64>,
    pub g: Vec<f64>,
    pub f: Vec<f64>,
    pub lambda: f64,
    pub strategy: Strategy,
}

impl SqueezePlan {
    pub fn params(&self, w: &ChannelMatrix) -> Result<SqueezeParams> {
        build_squeeze_params(w, &self.r, &self.f)
    }
}

fn require_squeezable(w: &ChannelMatrix) -> Result<f64> {
    let overlap = w.column_min_sum();
    if w.all_rows_equal() || overlap >= 1.0 {
        return Err(Error::DegenerateChannel);
    }
    Ok(overlap)
}

/// `1/(1 − Σ_j min_i W_ij)`, the largest gain any squeeze allows.
pub fn lambda_upper_bound(w: &ChannelMatrix) -> Result<f64> {
    Ok(1.0 / (1.0 - require_squeezable(w)?))
}

/// `g_j = min_i W_ij / (1 − Σ_k min_i W_ik)`.
pub fn optimal_g(w: &ChannelMatrix) -> Result<Vec<f64>> {
    let overlap = require_squeezable(w)?;
    Ok(w.column_minima()
        .into_iter()
        .map(|mj| mj / (1.0 - overlap))
        .collect())
}

/// Largest floor for a two-input channel: both floor inequalities hold with
/// equality. With `a = min_{j: W_1j > W_2j} W_2j/(W_1j − W_2j)` and `b`
/// likewise with the rows swapped, `r = (a, b)/(1 + a + b)`.
pub fn optimal_r_m2(w: &ChannelMatrix) -> Result<Vec<f64>> {
    if w.inputs() != 2 {
        return Err(Error::NotTwoByN(w.inputs()));
    }
    require_squeezable(w)?;
    let wm = w.matrix();
    let bound = |hi: usize, lo: usize| -> Result<f64> {
        (0..w.outputs())
            .filter(|&j| wm[(hi, j)] > wm[(lo, j)])
            .map(|j| wm[(lo, j)] / (wm[(hi, j)] - wm[(lo, j)]))
            .min_by(f64::total_cmp)
            .ok_or(Error::NoStrictColumn { row: hi })
    };
    let a = bound(0, 1)?;
    let b = bound(1, 0)?;
    let total = 1.0 + a + b;
    let mut r = vec![a / total, b / total];
    let r_plus = r[0] + r[1];
    if r_plus > 1.0 - R_PLUS_MARGIN {
        let scale = (1.0 - R_PLUS_MARGIN) / r_plus;
        r.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(r)
}

/// `r = δ q` with `δ = min_{i,j} W_ij / (qW)_j`.
pub fn heuristic_r(w: &ChannelMatrix, q: &[f64]) -> Result<Vec<f64>> {
    if q.len() != w.inputs() {
        return Err(Error::DimensionMismatch(format!(
            "reference distribution has length {}, channel has {} inputs",
            q.len(),
            w.inputs()
        )));
    }
    Distribution::new(q.to_vec())?;
    let out = w.output_distribution(q);
    let wm = w.matrix();
    let mut delta = f64::INFINITY;
    for (j, &oj) in out.iter().enumerate() {
        if oj <= 0.0 {
            return Err(Error::DimensionMismatch(format!(
                "reference distribution gives zero probability to output {j}"
            )));
        }
        delta = delta.min(wm.column(j).min() / oj);
    }
    Ok(q.iter().map(|&qi| delta * qi).collect())
}

/// `f = g − (1 + g₊) rW`, clamping rounding-level negatives.
pub fn f_from_g(w: &ChannelMatrix, r: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    let g_plus: f64 = g.iter().sum();
    let rw = w.output_distribution(r);
    g.iter()
        .zip(&rw)
        .enumerate()
        .map(|(index, (&gj, &rwj))| {
            let v = gj - (1.0 + g_plus) * rwj;
            if v >= 0.0 {
                Ok(v)
            } else if v >= -CLAMP_TOL {
                Ok(0.0)
            } else {
                Err(Error::NegativeOutputWeight { index, value: v })
            }
        })
        .collect()
}

/// `g = (1+f₊)/(1−r₊) · rW + f`.
pub fn g_from_f(w: &ChannelMatrix, r: &[f64], f: &[f64]) -> Vec<f64> {
    let r_plus: f64 = r.iter().sum();
    let f_plus: f64 = f.iter().sum();
    let scale = (1.0 + f_plus) / (1.0 - r_plus);
    w.output_distribution(r)
        .iter()
        .zip(f)
        .map(|(&rwj, &fj)| scale * rwj + fj)
        .collect()
}

/// Assemble `(r, g, f, λ)` for a strategy and validate the result.
pub fn plan(w: &ChannelMatrix, strategy: Strategy) -> Result<SqueezePlan> {
    let (m, n) = (w.inputs(), w.outputs());
    let (r, g) = match &strategy {
        Strategy::None => (vec![0.0; m], vec![0.0; n]),
        Strategy::LambdaOnly => (vec![0.0; m], optimal_g(w)?),
        Strategy::OptimalM2 => (optimal_r_m2(w)?, optimal_g(w)?),
        Strategy::HeuristicDeltaQ(q) => (heuristic_r(w, q)?, optimal_g(w)?),
    };
    let f = f_from_g(w, &r, &g)?;
    let lambda = 1.0 + g.iter().sum::<f64>();
    build_squeeze_params(w, &r, &f)?;
    Ok(SqueezePlan {
        r,
        g,
        f,
        lambda,
        strategy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric_pair() -> ChannelMatrix {
        ChannelMatrix::new(&[vec![0.7, 0.2, 0.1], vec![0.1, 0.2, 0.7]]).unwrap()
    }

    fn identity(m: usize) -> ChannelMatrix {
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        ChannelMatrix::new(&rows).unwrap()
    }

    fn assert_vec(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn lambda_bound_examples() {
        assert!((lambda_upper_bound(&symmetric_pair()).unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(lambda_upper_bound(&identity(3)).unwrap(), 1.0);
        let flat = ChannelMatrix::new(&[vec![0.4, 0.6], vec![0.4, 0.6]]).unwrap();
        assert_eq!(lambda_upper_bound(&flat), Err(Error::DegenerateChannel));
    }

    #[test]
    fn optimal_g_examples() {
        assert_vec(
            &optimal_g(&symmetric_pair()).unwrap(),
            &[1.0 / 6.0, 1.0 / 3.0, 1.0 / 6.0],
            1e-15,
        );
        assert_eq!(optimal_g(&identity(3)).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn optimal_r_examples() {
        assert_vec(
            &optimal_r_m2(&symmetric_pair()).unwrap(),
            &[0.125, 0.125],
            1e-15,
        );
        assert_eq!(optimal_r_m2(&identity(2)).unwrap(), vec![0.0, 0.0]);
        assert_eq!(optimal_r_m2(&identity(3)), Err(Error::NotTwoByN(3)));
    }

    #[test]
    fn heuristic_examples() {
        assert_vec(
            &heuristic_r(&symmetric_pair(), &[0.5, 0.5]).unwrap(),
            &[0.125, 0.125],
            1e-15,
        );
        assert_eq!(
            heuristic_r(&identity(3), &[1.0 / 3.0; 3]).unwrap(),
            vec![0.0; 3]
        );
        assert!(matches!(
            heuristic_r(&identity(3), &[0.5, 0.5]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn plan_examples() {
        let w = symmetric_pair();
        let p = plan(&w, Strategy::OptimalM2).unwrap();
        assert_vec(&p.r, &[0.125, 0.125], 1e-15);
        assert_vec(&p.f, &[0.0, 0.25, 0.0], 1e-15);
        assert!((p.lambda - 5.0 / 3.0).abs() < 1e-15);

        let p = plan(&w, Strategy::None).unwrap();
        assert_eq!(p.lambda, 1.0);
        assert!(p.f.iter().chain(&p.r).all(|&v| v == 0.0));

        let p = plan(&w, Strategy::LambdaOnly).unwrap();
        assert_eq!(p.f, p.g);
        assert!((p.lambda - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn optimal_plan_separates_rows() {
        let p = plan(&symmetric_pair(), Strategy::OptimalM2).unwrap();
        let params = p.params(&symmetric_pair()).unwrap();
        for j in 0..3 {
            assert!(params.w_tilde[(0, j)] * params.w_tilde[(1, j)] < 1e-15);
        }
    }

    #[test]
    fn strategy_json_shape() {
        let s = serde_json::to_string(&Strategy::HeuristicDeltaQ(vec![0.5, 0.5])).unwrap();
        assert_eq!(s, r#"{"kind":"heuristic-delta-q","q":[0.5,0.5]}"#);
        let s = serde_json::to_string(&Strategy::OptimalM2).unwrap();
        assert_eq!(s, r#"{"kind":"optimal-m2"}"#);
    }
}
