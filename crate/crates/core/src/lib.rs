//! Budgeted intervention allocation under network interference with bounds
//! on counterfactual group privilege.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

pub mod analysis;
pub mod bnb;
pub mod error;
mod factor;
pub mod estimation;
pub mod io;
pub mod graph;
pub mod lp;
pub mod milp;
pub mod outcome;
pub mod problem;
pub mod scalar;
pub mod synth;
pub mod units;

pub use analysis::{
    brute_force, geometric_tau_grid, group_allocation_summary, solution_path, tau_bracket, GroupAllocationSummary,
    SolutionPath,
};
pub use bnb::{branch_and_bound, Solution, SolveStatus, SolverConfig};
pub use error::{Error, Result};
pub use estimation::{fit_max_interference, FitDataset, FitResult};
pub use graph::{build_knn_graph, InterferenceGraph, KnnOptions};
pub use outcome::{
    LinearInterferenceModel, MaxInterferenceModel, OutcomeModel, Population, SemParams, StructuralOutcomeModel,
    TabularModel,
};
pub use milp::{encode, MilpProgram};
pub use problem::{AllocationProblem, PolicyReport, FEASIBILITY_TOL};
pub use scalar::Scalar;
pub use units::{GroupDomain, NeighborPattern, Unit};

pub type Problem = AllocationProblem<f64>;
pub type Graph = InterferenceGraph<f64>;
pub type Model = OutcomeModel<f64>;
