//! History-aware curriculum sampling over a discretized 3-D command space.
//!
//! A run repeatedly picks a command bin, draws a command inside it, rolls one
//! episode in a synthetic environment and feeds the outcome back into a
//! reward predictor and a per-bin weight table. The pieces:
//!
//! - [`command_space`]: grid addressing, cell geometry and the expanding range
//! - [`predictor`]: recurrent and feedforward reward models trained online
//! - [`sampler`]: the weight update, meta-policy and bandit baselines
//! - [`proxy_env`]: frontier and drifting-bandit environments with oracles
//! - [`metrics`]: cost of transport, stability, success rate, regret
//! - [`harness`]: config, the episode loop, checkpoints, sweeps and outputs

pub mod command_space;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod par;
pub mod predictor;
pub mod proxy_env;
pub mod rng;
pub mod sampler;
pub mod tensor;

pub use command_space::{ActiveRange, AxisScale, BinCoords, BinId, Command, CommandGrid, SuccessCriterion};
pub use error::{Error, Result};
