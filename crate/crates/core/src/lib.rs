//! Capacity of discrete memoryless channels by the Arimoto-Blahut iteration
//! and its squeezed, accelerated variants.
//!
//! ```
//! use squeeze_core::{solve, ChannelMatrix, Method, SolverConfig};
//!
//! let w = ChannelMatrix::new(&[vec![0.7, 0.2, 0.1], vec![0.1, 0.2, 0.7]]).unwrap();
//! let res = solve(&w, &Method::Aba, &SolverConfig::default()).unwrap();
//! assert!((res.p_hat[0] - 0.5).abs() < 1e-6);
//! ```

pub mod channel;
pub mod error;
pub mod experiments;
pub mod info;
pub mod jacobi;
pub mod rate;
pub mod select;
pub mod solver;
pub mod waterfill;

pub use channel::{
    build_squeeze_params, lambda_range, params_from_r_lambda, validate_channel, ChannelMatrix,
    Distribution, ParamsFile, SqueezeParams, ValidateOptions,
};
pub use error::{Error, Result};
pub use info::{entropy, kl_divergence, mutual_information, Nats, Units};
pub use rate::{matrix_rate, RateReport};
pub use select::{plan, SqueezePlan, Strategy};
pub use solver::{solve, IterationRecord, Method, SolveResult, SolverConfig};
pub use waterfill::{waterfill, WaterfillResult};
