//! Local convergence rates of the squeezed iteration.
//!
//! At an interior fixed point `p*` of the map `M` on `Ω(r)`, the Jacobian is
//! `R = I − W̃Ψ` with `Ψ_ji = Φ_ji(p*) + p*_i Φ_j0(p*)`. Its spectral radius
//! (the global rate) is obtained from the symmetric matrix
//! `D_p^{1/2} W* D_s^{-1} W*ᵀ D_p^{1/2}` (with `s = p*W*`), whose eigenvalues
//! `μ` map to rates `d = 1 − (1 + f₊) μ` once the eigenvalue belonging to the
//! direction `1_m` is removed. Two independent cross-checks are kept: the
//! spectral radius of `R` from a general (Schur) eigensolver, and power
//! iteration on `R` restricted to the zero-sum subspace.

use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};

use crate::channel::{ChannelMatrix, SqueezeParams};
use crate::error::{Error, Result};
use crate::info::vec_mat;
use crate::jacobi::symmetric_eigen;
use crate::select::f_from_g;
use crate::solver::{alg3_step, solve, Method, SolverConfig};

/// Fixed points must clear their floors by at least this.
pub const INTERIOR_MARGIN: f64 = 1e-9;
/// Largest one-step displacement accepted at a fixed point.
pub const FIXED_POINT_TOL: f64 = 1e-7;
/// Gap at which the solver is considered to have found the fixed point.
pub const FIXED_POINT_EPSILON: f64 = 1e-13;
pub const POWER_MAX_ITERS: usize = 10_000;
pub const POWER_TOL: f64 = 1e-10;

fn serialize_matrix<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect();
    rows.serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    /// Fixed point in `Ω(r)`.
    pub p_star: Vec<f64>,
    /// Matrix rate `R = I − W̃Ψ`, `m×m`.
    #[serde(rename = "R", serialize_with = "serialize_matrix")]
    pub rate_matrix: DMatrix<f64>,
    /// Spectral radius of `R`, from the symmetric route.
    pub global_rate: f64,
    #[serde(rename = "Psi", serialize_with = "serialize_matrix")]
    pub psi: DMatrix<f64>,
    /// `s = p*W*`.
    pub s: Vec<f64>,
    /// Global rate with the same floor and `f = 0`.
    pub rate_r0: f64,
    /// `Σ_j min_i W_ij`, a lower bound on the plain ABA rate.
    pub aba_lower_bound: f64,
    pub f_plus: f64,
    /// Eigenvalues of `R` on the zero-sum subspace, descending.
    pub eigenvalues: Vec<f64>,
    /// Spectral radius of `R` from a general eigensolver applied to `R` itself.
    pub rate_direct: f64,
    /// Largest imaginary part among the eigenvalues of `R`.
    pub max_imaginary: f64,
    /// Power-iteration estimate on the zero-sum subspace.
    pub rate_power: f64,
}

impl RateReport {
    /// `|global_rate − [(1+f₊) rate_r0 − f₊]|`.
    pub fn affine_residual(&self) -> f64 {
        (self.global_rate - ((1.0 + self.f_plus) * self.rate_r0 - self.f_plus)).abs()
    }

    /// `R 1_m`, which should vanish.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rate_matrix.nrows())
            .map(|i| self.rate_matrix.row(i).sum())
            .collect()
    }
}

/// Eigen-decomposition of `D_p^{1/2} W* D_s^{-1} W*ᵀ D_p^{1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricRate {
    pub mu: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub sqrt_p: Vec<f64>,
    /// Index into `mu` of the eigenvalue belonging to the direction `1_m`.
    pub ones_index: usize,
}

impl SymmetricRate {
    /// Rebuild `I − K`, the matrix rate for `f = 0`, from the eigenpairs:
    /// `D_p^{-1/2} V diag(1 − μ) Vᵀ D_p^{1/2}`.
    pub fn reconstruct_r0(&self) -> DMatrix<f64> {
        let m = self.mu.len();
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            m,
            self.mu.iter().map(|&mu| 1.0 - mu),
        ));
        let inner = &self.vectors * d * self.vectors.transpose();
        DMatrix::from_fn(m, m, |i, k| inner[(i, k)] * self.sqrt_p[k] / self.sqrt_p[i])
    }

    /// Rates `1 − (1+f₊) μ` on the zero-sum subspace, descending.
    pub fn gamma_rates(&self, f_plus: f64) -> Vec<f64> {
        let mut d: Vec<f64> = self
            .mu
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != self.ones_index)
            .map(|(_, &mu)| 1.0 - (1.0 + f_plus) * mu)
            .collect();
        d.sort_by(|a, b| b.total_cmp(a));
        d
    }
}

fn check_interior(params: &SqueezeParams, p_star: &[f64]) -> Result<()> {
    if p_star.len() != params.inputs() {
        return Err(Error::DimensionMismatch(format!(
            "fixed point has length {}, channel has {} inputs",
            p_star.len(),
            params.inputs()
        )));
    }
    for (index, (&p, &r)) in p_star.iter().zip(&params.r).enumerate() {
        if p <= r + INTERIOR_MARGIN {
            return Err(Error::BoundaryFixedPoint { index });
        }
    }
    Ok(())
}

fn check_fixed_point(params: &SqueezeParams, p_star: &[f64]) -> Result<()> {
    let next = alg3_step(params, p_star)?;
    let displacement = next
        .iter()
        .zip(p_star)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if displacement > FIXED_POINT_TOL {
        return Err(Error::NotAFixedPoint { displacement });
    }
    Ok(())
}

/// Symmetrized form of `K = W* D_s^{-1} W*ᵀ D_p` and its eigenpairs.
pub fn symmetric_rate(params: &SqueezeParams, p_star: &[f64]) -> Result<SymmetricRate> {
    let m = params.inputs();
    let ws = &params.w_star;
    let s = vec_mat(p_star, ws);
    let sqrt_p: Vec<f64> = p_star.iter().map(|p| p.sqrt()).collect();
    let sym = DMatrix::from_fn(m, m, |i, k| {
        let mut acc = 0.0;
        for (j, &sj) in s.iter().enumerate() {
            if sj > 0.0 {
                acc += ws[(i, j)] * ws[(k, j)] / sj;
            }
        }
        sqrt_p[i] * sqrt_p[k] * acc
    });
    // exact symmetry for the rotation updates
    let sym = (&sym + sym.transpose()) * 0.5;
    let eig = symmetric_eigen(&sym)?;

    // K 1 = 1, so D_p^{1/2} 1 = sqrt(p*) is an eigenvector of the symmetric form
    let ones_index = (0..m)
        .max_by(|&a, &b| {
            let dot = |k: usize| {
                eig.vectors
                    .column(k)
                    .iter()
                    .zip(&sqrt_p)
                    .map(|(v, u)| v * u)
                    .sum::<f64>()
                    .abs()
            };
            dot(a).total_cmp(&dot(b))
        })
        .unwrap_or(0);

    Ok(SymmetricRate {
        mu: eig.values,
        vectors: eig.vectors,
        sqrt_p,
        ones_index,
    })
}

/// Global rate of convergence at `p_star` via the symmetric route.
pub fn global_rate(params: &SqueezeParams, p_star: &[f64]) -> Result<f64> {
    check_interior(params, p_star)?;
    let sym = symmetric_rate(params, p_star)?;
    Ok(spectral_radius(&sym.gamma_rates(params.f_plus)))
}

fn spectral_radius(values: &[f64]) -> f64 {
    values.iter().map(|d| d.abs()).fold(0.0, f64::max)
}

/// `Ψ_ji = Φ_ji(p) + p_i Φ_j0(p)`, an `n×m` matrix.
pub fn psi_matrix(params: &SqueezeParams, p: &[f64]) -> DMatrix<f64> {
    let wt = &params.w_tilde;
    let (m, n) = wt.shape();
    let out = vec_mat(p, wt);
    DMatrix::from_fn(n, m, |j, i| {
        let denom = params.f[j] + out[j];
        if denom > 0.0 {
            (p[i] * wt[(i, j)] + p[i] * params.f[j]) / denom
        } else {
            0.0
        }
    })
}

/// Spectral radius of `R` restricted to `{γ : γ 1 = 0}` by power iteration
/// on row vectors, started from `e_1 − e_2`.
pub fn power_rate(rate_matrix: &DMatrix<f64>) -> f64 {
    let m = rate_matrix.nrows();
    let mut g = DVector::<f64>::zeros(m);
    g[0] = 1.0;
    g[1] = -1.0;
    let project = |v: &mut DVector<f64>| {
        let mean = v.mean();
        v.add_scalar_mut(-mean);
    };
    project(&mut g);
    g /= g.norm();
    let rt = rate_matrix.transpose();
    let mut estimate = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let mut next = &rt * &g;
        project(&mut next);
        let norm = next.norm();
        if norm < 1e-300 {
            return 0.0;
        }
        let converged = (norm - estimate).abs() <= POWER_TOL * norm.max(1e-3);
        estimate = norm;
        g = next / norm;
        if converged {
            break;
        }
    }
    estimate
}

/// Matrix rate, global rate and cross-checks at an interior fixed point.
pub fn matrix_rate(
    w: &ChannelMatrix,
    params: &SqueezeParams,
    p_star: &[f64],
) -> Result<RateReport> {
    check_interior(params, p_star)?;
    check_fixed_point(params, p_star)?;
    let m = params.inputs();

    let psi = psi_matrix(params, p_star);
    let rate_matrix = DMatrix::identity(m, m) - &params.w_tilde * &psi;

    let sym = symmetric_rate(params, p_star)?;
    let eigenvalues = sym.gamma_rates(params.f_plus);
    let global = spectral_radius(&eigenvalues);
    let rate_r0 = spectral_radius(&sym.gamma_rates(0.0));

    let general = rate_matrix.complex_eigenvalues();
    let rate_direct = general.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let max_imaginary = general.iter().map(|z| z.im.abs()).fold(0.0, f64::max);

    Ok(RateReport {
        p_star: p_star.to_vec(),
        rate_power: power_rate(&rate_matrix),
        rate_matrix,
        global_rate: global,
        psi,
        s: vec_mat(p_star, &params.w_star),
        rate_r0,
        aba_lower_bound: w.column_min_sum(),
        f_plus: params.f_plus,
        eigenvalues,
        rate_direct,
        max_imaginary,
    })
}

/// Run the squeezed iteration for `params` until the gap is below
/// [`FIXED_POINT_EPSILON`], then keep stepping until the iterate stops moving.
/// Returns the fixed point in `Ω(r)`.
pub fn fixed_point(w: &ChannelMatrix, params: &SqueezeParams) -> Result<Vec<f64>> {
    let method = Method::Alg3 {
        r: params.r.clone(),
        f: params.f.clone(),
    };
    let cfg = SolverConfig {
        epsilon: FIXED_POINT_EPSILON,
        ..Default::default()
    };
    let res = solve(w, &method, &cfg)?;
    polish(params, res.final_iterate)
}

/// Iterate the squeezed map until the displacement stops shrinking.
pub fn polish(params: &SqueezeParams, start: Vec<f64>) -> Result<Vec<f64>> {
    let mut p = start;
    let mut last = f64::INFINITY;
    let mut stalls = 0;
    for _ in 0..100_000 {
        if p.iter().zip(&params.r).any(|(&pi, &ri)| pi <= ri) {
            break;
        }
        let next = alg3_step(params, &p)?.into_vec();
        let step = next
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        p = next;
        if step == 0.0 {
            break;
        }
        if step >= last {
            stalls += 1;
            if stalls > 5 {
                break;
            }
        } else {
            stalls = 0;
        }
        last = last.min(step);
    }
    Ok(p)
}

/// Map an output of the unsqueezed problem into `Ω(r)`.
pub fn squeeze_point(params: &SqueezeParams, p_hat: &[f64]) -> Vec<f64> {
    params.squeeze(p_hat)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffineRateCheck {
    pub rate: f64,
    pub rate_alt: f64,
    pub rate_r0: f64,
    pub f_plus: f64,
    pub f_alt_plus: f64,
    /// `|R(r,f) − [(1+f₊) R(r,0) − f₊]|` from independently computed matrix rates.
    pub residual: f64,
    pub residual_alt: f64,
    /// `f₊ ≥ f̃₊ ⇒ R(r,f) ≤ R(r,f̃)` (and symmetrically).
    pub ordering_holds: bool,
}

/// Compare rates for one floor and two output shifts.
///
/// Each rate is the spectral radius of its own matrix rate `R`, computed by a
/// general eigensolver, so the affine identity is checked across three
/// separate evaluations rather than inside one decomposition.
pub fn verify_affine_rate(
    w: &ChannelMatrix,
    r: &[f64],
    f: &[f64],
    f_alt: &[f64],
    p_hat: &[f64],
) -> Result<AffineRateCheck> {
    let params = crate::channel::build_squeeze_params(w, r, f)?;
    let params_alt = crate::channel::build_squeeze_params(w, r, f_alt)?;
    let params_zero = crate::channel::build_squeeze_params(w, r, &vec![0.0; w.outputs()])?;
    let p_star = params.squeeze(p_hat);
    let rate = matrix_rate(w, &params, &p_star)?.rate_direct;
    let rate_alt = matrix_rate(w, &params_alt, &p_star)?.rate_direct;
    let rate_r0 = matrix_rate(w, &params_zero, &p_star)?.rate_direct;
    let fp = params.f_plus;
    let fa = params_alt.f_plus;
    let slack = 1e-9;
    let ordering_holds = if fp >= fa {
        rate <= rate_alt + slack
    } else {
        rate_alt <= rate + slack
    };
    Ok(AffineRateCheck {
        rate,
        rate_alt,
        rate_r0,
        f_plus: fp,
        f_alt_plus: fa,
        residual: (rate - ((1.0 + fp) * rate_r0 - fp)).abs(),
        residual_alt: (rate_alt - ((1.0 + fa) * rate_r0 - fa)).abs(),
        ordering_holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbaBoundCheck {
    pub aba_rate: f64,
    pub overlap: f64,
    /// `R(0,0) − Σ_j min_i W_ij`.
    pub margin: f64,
    pub holds: bool,
}

/// `R(0,0) ≥ Σ_j min_i W_ij`.
pub fn verify_aba_bound(w: &ChannelMatrix, p_hat: &[f64]) -> Result<AbaBoundCheck> {
    let params = SqueezeParams::identity(w);
    let aba_rate = matrix_rate(w, &params, p_hat)?.global_rate;
    let overlap = w.column_min_sum();
    Ok(AbaBoundCheck {
        aba_rate,
        overlap,
        margin: aba_rate - overlap,
        holds: aba_rate >= overlap - 1e-9,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FloorOrderingCheck {
    pub rate: f64,
    pub rate_alt: f64,
    pub holds: bool,
}

/// For a fixed combined squeeze `g`, compare floors `r` and `r_alt` where
/// `r/(1−r₊) ≥ r_alt/(1−r_alt₊)` elementwise.
pub fn verify_floor_ordering(
    w: &ChannelMatrix,
    g: &[f64],
    r: &[f64],
    r_alt: &[f64],
    p_hat: &[f64],
) -> Result<FloorOrderingCheck> {
    let scaled = |v: &[f64]| -> Vec<f64> {
        let plus: f64 = v.iter().sum();
        v.iter().map(|x| x / (1.0 - plus)).collect()
    };
    let (a, b) = (scaled(r), scaled(r_alt));
    if a.len() != b.len() || a.iter().zip(&b).any(|(x, y)| x < y) {
        return Err(Error::InvalidConfig(
            "r/(1-r+) must dominate r_alt/(1-r_alt+) elementwise".into(),
        ));
    }
    let rate_for = |floor: &[f64]| -> Result<f64> {
        let f = f_from_g(w, floor, g)?;
        let params = crate::channel::build_squeeze_params(w, floor, &f)?;
        let p_star = params.squeeze(p_hat);
        Ok(matrix_rate(w, &params, &p_star)?.global_rate)
    };
    let rate = rate_for(r)?;
    let rate_alt = rate_for(r_alt)?;
    Ok(FloorOrderingCheck {
        rate,
        rate_alt,
        holds: rate <= rate_alt + 1e-9,
    })
}

/// `‖M(p* + h v) − p* − h vR‖`, the error of the linearization at `p*`.
pub fn linearization_residual(
    params: &SqueezeParams,
    p_star: &[f64],
    rate_matrix: &DMatrix<f64>,
    direction: &[f64],
    h: f64,
) -> Result<f64> {
    let moved: Vec<f64> = p_star
        .iter()
        .zip(direction)
        .map(|(p, v)| p + h * v)
        .collect();
    let image = alg3_step(params, &moved)?;
    let v = DVector::from_column_slice(direction);
    let predicted = rate_matrix.transpose() * v * h;
    Ok(image
        .iter()
        .zip(p_star)
        .zip(predicted.iter())
        .map(|((a, b), c)| (a - b - c).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Observed linear contraction `‖p_{t+1} − p*‖ / ‖p_t − p*‖` over the last
/// iterates of a trace (median of up to three ratios).
pub fn observed_rate(iterates: &[Vec<f64>], p_star: &[f64]) -> Option<f64> {
    let dist = |p: &Vec<f64>| -> f64 {
        p.iter()
            .zip(p_star)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let d: Vec<f64> = iterates.iter().map(dist).collect();
    let mut ratios: Vec<f64> = d
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    if ratios.is_empty() {
        return None;
    }
    let tail = ratios.split_off(ratios.len().saturating_sub(3));
    let mut tail = tail;
    tail.sort_by(f64::total_cmp);
    Some(tail[tail.len() / 2])
}
