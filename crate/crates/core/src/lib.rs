//! Robust fitted Q-iteration for offline reinforcement learning under
//! total-variation model uncertainty, together with exact tabular planners,
//! an offline dataset generator and an evaluation harness.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod data;
pub mod dual;
pub mod error;
pub mod eval;
pub mod planner;
pub mod rfqi;
pub mod rmdp;

pub use data::{exhaustive_dataset, generate_dataset, mu_from_policy, uniform_mu, Dataset, Transition};
pub use dual::{robust_bellman_apply, tv_inner_inf_dual, tv_inner_inf_primal, TvBall};
pub use error::{Error, Result, Violation};
pub use eval::{evaluate_policy, perturbation_sweep, Benchmark, EvalReport};
pub use planner::{nonrobust_vi, robust_policy_value, rqi, PlanResult};
pub use rfqi::{run_fqi, run_rfqi, theorem1_bound, MdpShape, RfqiConfig, RfqiResult};
pub use rmdp::{greedy_policy, occupancy, policy_value_nominal, Policy, QTable, SaTable, TabularRmdp, VTable};
