//! Arimoto-Blahut iterations and their squeezed variants.
//!
//! Four schemes share one driver:
//!
//! * plain ABA, `p'_i ∝ p_i exp(z_i)`;
//! * singly squeezed, `p'_i ∝ p_i exp(λ z_i)`;
//! * doubly squeezed on the floored simplex `Ω(r)`,
//!   `p'_i = max{r_i, δ p_i exp(λ z_i)}` with `z` evaluated at
//!   `q = (p − r)/(1 − r₊)`;
//! * the same map written through the squeezed matrix `W̃`, offsets `c` and
//!   output shift `f`.
//!
//! Every scheme stops on `max_i z_i − Σ_i q_i z_i ≤ ε`, where `Σ q z = I(q)`
//! and `max z` bracket the capacity.

use std::io::Write;

use log::warn;
use serde::Serialize;

use crate::channel::{
    build_squeeze_params, lambda_range, params_from_r_lambda, ChannelMatrix, Distribution,
    SqueezeParams, SIMPLEX_TOL,
};
use crate::error::{Error, Result};
use crate::info::{kl_term, vec_mat, Nats};
use crate::waterfill::waterfill_log;

pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 1_000_000;
/// Allowed per-step decrease of the objective before it counts as a violation.
pub const MONOTONE_TOL: f64 = 1e-12;

/// Which iteration to run.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Method {
    Aba,
    Alg1 { lambda: f64 },
    Alg2 { r: Vec<f64>, lambda: f64 },
    Alg3 { r: Vec<f64>, f: Vec<f64> },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Aba => "aba",
            Method::Alg1 { .. } => "alg1",
            Method::Alg2 { .. } => "alg2",
            Method::Alg3 { .. } => "alg3",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Stopping threshold on the capacity gap, in nats.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Starting point in the unsqueezed simplex `Ω`. Floored methods start
    /// from `(1 − r₊) q + r`. Defaults to uniform.
    pub initial: Option<Distribution>,
    pub record_trace: bool,
    /// Accept parameters outside the convergence guarantees. Objective
    /// decreases are then logged instead of returned as errors.
    pub force: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            max_iters: DEFAULT_MAX_ITERS,
            initial: None,
            record_trace: false,
            force: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Current iterate in `Ω(r)`.
    pub p: Vec<f64>,
    /// `I(q)` at `q = (p − r)/(1 − r₊)`.
    pub objective: Nats,
    pub gap: Nats,
    pub z: Vec<f64>,
}

impl IterationRecord {
    pub fn upper(&self) -> Nats {
        Nats(self.z.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// Capacity-achieving input estimate in `Ω`.
    pub p_hat: Distribution,
    /// Last iterate in `Ω(r)`.
    pub final_iterate: Vec<f64>,
    pub capacity_lower: Nats,
    pub capacity_upper: Nats,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
    /// Objective decreases tolerated in force mode.
    pub monotonicity_warnings: usize,
}

impl SolveResult {
    pub fn gap(&self) -> Nats {
        Nats(self.capacity_upper.0 - self.capacity_lower.0)
    }

    /// Write the trace as CSV:
    /// `iter,objective_nats,gap_nats,lower_nats,upper_nats,p_1..p_m`.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        write_trace_csv(&self.trace, out)
    }
}

pub fn write_trace_csv<W: Write>(trace: &[IterationRecord], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let m = trace.first().map_or(0, |r| r.p.len());
    let mut header: Vec<String> = [
        "iter",
        "objective_nats",
        "gap_nats",
        "lower_nats",
        "upper_nats",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=m).map(|i| format!("p_{i}")));
    wtr.write_record(&header)?;
    for rec in trace {
        let mut row = vec![
            rec.iter.to_string(),
            rec.objective.0.to_string(),
            rec.gap.0.to_string(),
            rec.objective.0.to_string(),
            rec.upper().0.to_string(),
        ];
        row.extend(rec.p.iter().map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Quantities evaluated at one iterate.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub q: Vec<f64>,
    pub z: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub gap: f64,
}

/// `z_i = D(W_i || qW)` and the capacity bounds at `q`.
pub(crate) fn evaluate_q(w: &ChannelMatrix, q: Vec<f64>) -> Result<Evaluation> {
    let wm = w.matrix();
    let output = vec_mat(&q, wm);
    let mut z = Vec::with_capacity(w.inputs());
    for i in 0..w.inputs() {
        let mut zi = 0.0;
        for (j, &o) in output.iter().enumerate() {
            let t = kl_term(wm[(i, j)], o);
            if t.is_infinite() {
                return Err(Error::NumericalBreakdown { row: i, col: j });
            }
            zi += t;
        }
        z.push(zi);
    }
    let upper = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lower: f64 = q.iter().zip(&z).map(|(&qi, &zi)| qi * zi).sum();
    // each term is nonnegative, so the gap is too
    let gap: f64 = q.iter().zip(&z).map(|(&qi, &zi)| qi * (upper - zi)).sum();
    Ok(Evaluation {
        q,
        z,
        lower,
        upper,
        gap,
    })
}

fn unsqueeze(p: &[f64], r: &[f64], r_plus: f64) -> Vec<f64> {
    p.iter()
        .zip(r)
        .map(|(&pi, &ri)| ((pi - ri) / (1.0 - r_plus)).max(0.0))
        .collect()
}

fn check_interior(p: &[f64]) -> Result<()> {
    match p.iter().position(|&v| !(v > 0.0)) {
        Some(index) => Err(Error::NonInteriorStart {
            index,
            value: p[index],
        }),
        None => Ok(()),
    }
}

fn check_len(p: &[f64], m: usize) -> Result<()> {
    if p.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "iterate has length {}, channel has {m} inputs",
            p.len()
        )));
    }
    Ok(())
}

fn softmax_step(p: &[f64], z: &[f64], lambda: f64) -> Vec<f64> {
    let logs: Vec<f64> = p
        .iter()
        .zip(z)
        .map(|(&pi, &zi)| pi.ln() + lambda * zi)
        .collect();
    let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let x: Vec<f64> = logs.iter().map(|&l| (l - shift).exp()).collect();
    let total: f64 = x.iter().sum();
    x.into_iter().map(|v| v / total).collect()
}

fn floored_step(p: &[f64], z: &[f64], r: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let logs: Vec<f64> = p
        .iter()
        .zip(z)
        .map(|(&pi, &zi)| pi.ln() + lambda * zi)
        .collect();
    Ok(waterfill_log(r, &logs)?.p)
}

fn squeezed_step(params: &SqueezeParams, p: &[f64]) -> Result<Vec<f64>> {
    let wt = &params.w_tilde;
    let (m, n) = wt.shape();
    let denom: Vec<f64> = vec_mat(p, wt)
        .iter()
        .zip(&params.f)
        .map(|(&o, &fj)| o + fj)
        .collect();
    let mut logs = params.c.clone();
    for (i, log_i) in logs.iter_mut().enumerate() {
        let ln_p = p[i].ln();
        for j in 0..n {
            let wij = wt[(i, j)];
            if wij > 0.0 {
                // ln Φ_ji = ln p_i + ln W̃_ij − ln(f_j + (pW̃)_j)
                *log_i += wij * (ln_p + wij.ln() - denom[j].ln());
            }
        }
    }
    debug_assert_eq!(logs.len(), m);
    Ok(waterfill_log(&params.r, &logs)?.p)
}

/// One plain Arimoto-Blahut update.
pub fn aba_step(w: &ChannelMatrix, p: &[f64]) -> Result<Distribution> {
    check_len(p, w.inputs())?;
    check_interior(p)?;
    let ev = evaluate_q(w, p.to_vec())?;
    Ok(Distribution::from_parts_unchecked(
        softmax_step(p, &ev.z, 1.0),
        None,
    ))
}

/// One singly squeezed update `p'_i ∝ p_i exp(λ z_i)`.
///
/// Unless `force` is set, `λ` must lie in `[1, 1/(1 − Σ_j min_i W_ij)]`.
pub fn alg1_step(w: &ChannelMatrix, lambda: f64, p: &[f64], force: bool) -> Result<Distribution> {
    check_len(p, w.inputs())?;
    check_interior(p)?;
    if !force {
        check_lambda(w, 0.0, lambda)?;
    }
    let ev = evaluate_q(w, p.to_vec())?;
    Ok(Distribution::from_parts_unchecked(
        softmax_step(p, &ev.z, lambda),
        None,
    ))
}

/// One doubly squeezed update on `Ω(r)` using `params.r` and `params.lambda`.
pub fn alg2_step(w: &ChannelMatrix, params: &SqueezeParams, p: &[f64]) -> Result<Distribution> {
    check_len(p, w.inputs())?;
    check_interior(p)?;
    let q = unsqueeze(p, &params.r, params.r_plus);
    let ev = evaluate_q(w, q)?;
    let next = floored_step(p, &ev.z, &params.r, params.lambda)?;
    Ok(Distribution::from_parts_unchecked(
        next,
        Some(params.r.clone()),
    ))
}

/// One update through the squeezed matrix `W̃`.
pub fn alg3_step(params: &SqueezeParams, p: &[f64]) -> Result<Distribution> {
    check_len(p, params.inputs())?;
    check_interior(p)?;
    if !params.w_tilde_ok {
        return Err(Error::ConstraintWTilde {
            row: 0,
            col: 0,
            value: params.w_tilde.min(),
        });
    }
    let next = squeezed_step(params, p)?;
    Ok(Distribution::from_parts_unchecked(
        next,
        Some(params.r.clone()),
    ))
}

fn check_lambda(w: &ChannelMatrix, r_plus: f64, lambda: f64) -> Result<()> {
    let (lower, upper) = lambda_range(w, r_plus);
    let slack = 1e-12 * lambda.abs().max(1.0);
    if !lambda.is_finite() || lambda < lower - slack || lambda > upper + slack {
        return Err(Error::LambdaOutOfRange {
            lambda,
            lower,
            upper,
        });
    }
    Ok(())
}

enum Scheme {
    Softmax {
        lambda: f64,
    },
    Floored {
        r: Vec<f64>,
        r_plus: f64,
        lambda: f64,
    },
    Squeezed(Box<SqueezeParams>),
}

impl Scheme {
    fn floor(&self) -> (&[f64], f64) {
        match self {
            Scheme::Softmax { .. } => (&[], 0.0),
            Scheme::Floored { r, r_plus, .. } => (r, *r_plus),
            Scheme::Squeezed(p) => (&p.r, p.r_plus),
        }
    }
}

fn scheme_for(w: &ChannelMatrix, method: &Method, force: bool) -> Result<Scheme> {
    Ok(match method {
        Method::Aba => Scheme::Softmax { lambda: 1.0 },
        Method::Alg1 { lambda } => {
            if !force {
                check_lambda(w, 0.0, *lambda)?;
            } else if !lambda.is_finite() {
                return Err(Error::InvalidConfig(format!("lambda = {lambda}")));
            }
            Scheme::Softmax { lambda: *lambda }
        }
        Method::Alg2 { r, lambda } => {
            let params = if force {
                let p = SqueezeParams::build_unchecked(w, r, &vec![0.0; w.outputs()])?;
                if !p.w_constraint_ok {
                    warn!("floor r violates W >= 1 rW; convergence is not guaranteed");
                }
                p
            } else {
                params_from_r_lambda(w, r, *lambda)?
            };
            Scheme::Floored {
                r: params.r,
                r_plus: params.r_plus,
                lambda: *lambda,
            }
        }
        Method::Alg3 { r, f } => {
            let params = if force {
                let p = SqueezeParams::build_unchecked(w, r, f)?;
                if !p.w_constraint_ok {
                    warn!("floor r violates W >= 1 rW; convergence is not guaranteed");
                }
                if !p.w_tilde_ok {
                    // W̃ < 0 makes the logarithms undefined; report why
                    build_squeeze_params(w, r, f)?;
                }
                p
            } else {
                build_squeeze_params(w, r, f)?
            };
            Scheme::Squeezed(Box::new(params))
        }
    })
}

/// Run `method` on `w` until the capacity gap falls below `config.epsilon`.
///
/// Hitting `max_iters` is not an error; the result has `converged = false`.
pub fn solve(w: &ChannelMatrix, method: &Method, config: &SolverConfig) -> Result<SolveResult> {
    if !(config.epsilon > 0.0) {
        return Err(Error::InvalidConfig("epsilon must be positive".into()));
    }
    if config.max_iters == 0 {
        return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
    }
    let m = w.inputs();
    let scheme = scheme_for(w, method, config.force)?;

    if w.all_rows_equal() {
        let uniform = Distribution::uniform(m);
        let (r, r_plus) = scheme.floor();
        let start = if r.is_empty() {
            uniform.to_vec()
        } else {
            uniform
                .iter()
                .zip(r)
                .map(|(&u, &ri)| (1.0 - r_plus) * u + ri)
                .collect()
        };
        return Ok(SolveResult {
            p_hat: uniform,
            final_iterate: start,
            capacity_lower: Nats(0.0),
            capacity_upper: Nats(0.0),
            iterations: 0,
            converged: true,
            trace: Vec::new(),
            monotonicity_warnings: 0,
        });
    }

    let q0 = match &config.initial {
        Some(d) => {
            check_len(d, m)?;
            d.to_vec()
        }
        None => vec![1.0 / m as f64; m],
    };
    let (r, r_plus) = scheme.floor();
    let mut p: Vec<f64> = if r.is_empty() {
        q0
    } else {
        q0.iter()
            .zip(r)
            .map(|(&qi, &ri)| (1.0 - r_plus) * qi + ri)
            .collect()
    };
    check_interior(&p)?;

    let mut trace = Vec::new();
    let mut warnings = 0;
    let mut previous: Option<f64> = None;
    let mut iter = 0;
    // The update always runs at least once; the gap is checked after each
    // update, so `iterations` counts updates and is never zero.
    loop {
        let q = if r.is_empty() {
            p.clone()
        } else {
            unsqueeze(&p, r, r_plus)
        };
        let ev = evaluate_q(w, q)?;

        if let Some(prev) = previous {
            let drop = prev - ev.lower;
            if drop > MONOTONE_TOL * prev.abs().max(1.0) {
                if config.force {
                    warnings += 1;
                    warn!("objective decreased by {drop:e} at iteration {iter}");
                } else {
                    return Err(Error::MonotonicityViolation { iter, drop });
                }
            }
        }
        previous = Some(ev.lower);

        if config.record_trace {
            trace.push(IterationRecord {
                iter,
                p: p.clone(),
                objective: Nats(ev.lower),
                gap: Nats(ev.gap),
                z: ev.z.clone(),
            });
        }

        let converged = iter > 0 && ev.gap <= config.epsilon;
        if converged || iter >= config.max_iters {
            let total: f64 = ev.q.iter().sum();
            let p_hat: Vec<f64> = ev.q.iter().map(|v| v / total).collect();
            debug_assert!((total - 1.0).abs() < 1e3 * SIMPLEX_TOL);
            return Ok(SolveResult {
                p_hat: Distribution::from_parts_unchecked(p_hat, None),
                final_iterate: p,
                capacity_lower: Nats(ev.lower),
                capacity_upper: Nats(ev.upper),
                iterations: iter,
                converged,
                trace,
                monotonicity_warnings: warnings,
            });
        }

        p = match &scheme {
            Scheme::Softmax { lambda } => softmax_step(&p, &ev.z, *lambda),
            Scheme::Floored { r, lambda, .. } => floored_step(&p, &ev.z, r, *lambda)?,
            Scheme::Squeezed(params) => squeezed_step(params, &p)?,
        };
        check_interior(&p)?;
        iter += 1;
    }
}
