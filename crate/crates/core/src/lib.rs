//! Killed random walks on bounded lattice domains: Dirichlet Laplacians,
//! traces of their inverses, heat kernels and the experiments built on them.

pub mod domains;
pub mod error;
pub mod experiments;
pub mod kernel;
pub mod operator;
pub mod report;
pub mod solver;
pub mod spectra;
pub mod walks;

pub use domains::{boundary_layer, build_domain, path_domain, Domain, LayerPartition, Shape, Site};
pub use error::{Error, Result};
pub use experiments::{
    run_dimension_sanity, run_g_fit, run_ledger, run_pi_table, FitReport, LedgerRow, PiEstimate,
};
pub use kernel::{evolve_full, evolve_killed, fit_qh_rate, QhFit, ReturnSeries};
pub use operator::{assemble, symmetrize, DirichletOperator, SymmetrizedOperator};
pub use report::{Metadata, OutputFormat, Report, ResultRow};
pub use spectra::{
    dense_spectrum, kirchhoff_check, zeta_exact, zeta_hutchinson, KirchhoffReport, SimpleGraph,
    SpectralSummary, TraceMethod, TraceResult,
};
pub use walks::{
    builtin_walk, covariance, heat_constant, sample_environment, BuiltinWalk,
    ConductanceEnvironment, CovarianceMatrix, Extent, StepSet,
};
