//! Exact finite-state backend.

mod eigen;
mod gridworld;
mod mdp;
mod reach;

pub use eigen::{
    average_over_policy, exact_safety_dp, greedy_improve, improve_policy, power_iteration,
    power_iteration_from, power_step, state_action_eigpair, EigenPair, ImprovementRun,
};
pub use gridworld::{
    build_gridworld, gridworld_kernel, Cell, Direction, GridMap, GridWorld, EXAMPLE_MAP, P_ARROW, P_OTHER,
};
pub use mdp::{closed_loop_matrix, FiniteMdp, Kernel, LinearOperator, SparseRows, StateActionOperator, TabularPolicy};
pub use reach::{default_terminal_value, discounted_reachability_vi, ReachSolution};
