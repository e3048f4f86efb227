#![allow(dead_code)]

use rand::Rng;
use squeeze_core::channel::{lambda_range, params_from_r_lambda, ChannelMatrix, SqueezeParams};
use squeeze_core::experiments::random_channel;
use squeeze_core::rate::polish;
use squeeze_core::select::{heuristic_r, plan, Strategy};
use squeeze_core::solver::{solve, Method, SolverConfig};

pub fn symmetric_pair() -> ChannelMatrix {
    ChannelMatrix::new(&[vec![0.7, 0.2, 0.1], vec![0.1, 0.2, 0.7]]).unwrap()
}

/// Strictly positive probability vector.
pub fn random_simplex<R: Rng>(m: usize, rng: &mut R) -> Vec<f64> {
    let u: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = u.iter().sum();
    u.into_iter().map(|x| x / s).collect()
}

/// Random `(r, f)` satisfying both floor and output-weight constraints:
/// `r` is a random fraction of a heuristic floor and `λ` is uniform on its
/// admissible interval.
pub fn random_params<R: Rng>(w: &ChannelMatrix, rng: &mut R) -> SqueezeParams {
    let q = random_simplex(w.inputs(), rng);
    let r: Vec<f64> = {
        let scale = rng.gen_range(0.0..1.0);
        heuristic_r(w, &q)
            .unwrap()
            .into_iter()
            .map(|v| scale * v)
            .collect()
    };
    let r_plus: f64 = r.iter().sum();
    let (lo, hi) = lambda_range(w, r_plus);
    let lambda = lo + rng.gen_range(0.0..1.0) * (hi - lo).max(0.0);
    params_from_r_lambda(w, &r, lambda).unwrap()
}

/// Capacity-achieving input in `Ω`, polished to a fixed point, when it is
/// interior with every component at least `min_component`.
pub fn interior_optimum(w: &ChannelMatrix, min_component: f64) -> Option<Vec<f64>> {
    let plan = plan(w, Strategy::auto(w)).ok()?;
    let params = plan.params(w).ok()?;
    let cfg = SolverConfig {
        epsilon: 1e-13,
        max_iters: 20_000,
        ..Default::default()
    };
    let res = solve(
        w,
        &Method::Alg3 {
            r: params.r.clone(),
            f: params.f.clone(),
        },
        &cfg,
    )
    .ok()?;
    if !res.converged || res.p_hat.iter().any(|&p| p < min_component) {
        return None;
    }
    let p_star = polish(&params, res.final_iterate).ok()?;
    let p_hat = params.unsqueeze(&p_star);
    // settle under plain ABA so every squeeze sees the same fixed point
    let identity = SqueezeParams::identity(w);
    let p_hat = polish(&identity, p_hat).ok()?;
    p_hat.iter().all(|&p| p >= min_component).then_some(p_hat)
}

/// Draw up to 200 `m×n` channels looking for one with an interior optimum.
/// With `m > n` optima generically sit on the boundary, so this can fail.
pub fn interior_channel<R: Rng>(
    m: usize,
    n: usize,
    min_component: f64,
    rng: &mut R,
) -> Option<(ChannelMatrix, Vec<f64>)> {
    (0..200).find_map(|_| {
        let w = random_channel(m, n, rng);
        interior_optimum(&w, min_component).map(|p| (w, p))
    })
}
