//! Max-plus discrete-event model of a metro line with a junction.
//!
//! The crate models a line made of a central part and two branches joined at
//! a divergence and a convergence point. Train departures obey max-plus linear
//! dynamics; their asymptotic rate gives the headway, and closed forms over
//! the train count and its branch imbalance give the eight-phase traffic
//! diagram and the control laws built on it.

pub mod control;
pub mod line;
pub mod matrices;
pub mod maxplus;
pub mod phases;
pub mod sim;
pub mod steady;

pub use line::{
    place_trains, Aggregates, ConfigError, Demand, LineConfig, PlaceError, Placement, Segment,
    Topology,
};
pub use matrices::{
    matrix_headway,
    build_b, build_ring_matrix, build_step_matrices, check_b_preconditions, iterate_levels,
    verify_matrix_vs_simulation, BReport, LevelTrajectory, ModelError, ProductForm, StepMatrices,
    VerifyError,
};
pub use control::{
    demand_parameter, dwell_time, feedback_demand, feedback_fixed_f, feedback_fixed_m,
    required_and_feasible_headway, run_time, stability_check, ControlError, ControlPlan,
    PlatformStability, StabilityReport,
};
pub use phases::{
    classify, optimal_dm, plane_frequency, polygon_points, report_at, sweep, BoundaryLine,
    DmOptimum, Phase, PolygonGeometry, SweepRow,
};
pub use maxplus::{
    generalized_eigenpair, karp_cycle_mean, max_cycle_mean, to_dot, Arc, CycleMean, EigenOutcome,
    EventGraph, MaxPlusError, Mp, MpMatrix, PolyMatrix, SccEigen,
};
pub use steady::{
    demand_aggregates, headway, headway_junction, headway_junction_demand, headway_linear,
    headway_linear_demand, Binding, HeadwayReport,
};
pub use sim::{
    empirical_headway, initial_departures_from_headways, junction_order, passing_order_plan,
    seg_law, simulate, simulate_harmonized, trajectory_export, ConvergenceModel, DepartureLog,
    DwellRunLaw, EmpiricalHeadways, GammaSchedule, JunctionRule, OverrideRange, PerturbationSpec,
    PerturbationStart, SegLaw, SimError,
};
