//! Hard instance generation for min-max robust combinatorial optimization.
//!
//! Instances are a nominal problem (selection or asymmetric TSP) with a finite
//! set of cost scenarios. Generators move each scenario within a box around
//! its seed costs so that the robust optimum, and with it the branch-and-bound
//! effort of the exact solver, goes up.

pub mod colgen;
pub mod deadline;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod instance;
pub mod ldr;
pub mod lp;
pub mod midgen;
pub mod mro;
pub mod problems;
pub mod robust;
pub mod rng;
pub mod uncertainty;

pub use colgen::colgen_master;
pub use error::{Error, Result};
pub use harness::{
    evaluate, generate, run_batch, BatchConfig, CellConfig, Evaluation, GenerationLog, HardnessReport, Method,
};
pub use instance::{sample_ru, Instance, ProblemKind};
pub use ldr::{ldr_solve, LdrRun};
pub use midgen::{mid_generate, mid_quality_report, MidQualityReport, MidResult};
pub use mro::{
    master_solve_alternating, master_solve_exact, mro_generate, CandidatePool, InnerKind, MasterKind,
    MasterSolution, MroOptions, MroRun, StopReason,
};
pub use problems::{NominalProblem, Selection, Solution, Tour, Tsp};
pub use robust::{robust_value, solve_exact, solve_heuristic, sorted_objective_vector, RobustResult};
pub use uncertainty::{build_uncertainty, UncertaintyBox};
