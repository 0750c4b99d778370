//! Constrained optimization: a dense QP solver, an SQP driver for smooth
//! inequality-constrained problems and the nested design loop.

pub mod nand;
pub mod qp;
pub mod sqp;

pub use nand::{auxiliary_spec, solve_auxiliary, solve_mdao, MdaoResult};
pub use sqp::{kkt_residual, sqp_solve, NlpSpec, RunRecord, RunStatus, SqpOptions, UNBOUNDED};
