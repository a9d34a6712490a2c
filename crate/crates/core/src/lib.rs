//! System-level Monte Carlo simulator for hybrid GNSS/cellular vehicle
//! positioning.
//!
//! The crate builds a deterministic world (hexagonal cellular layout, a
//! multi-lane road with an optional tunnel section, road-side units and a
//! satellite constellation), drops vehicle UEs onto the road, synthesizes
//! satellite pseudoranges and cellular time-of-arrival observations under a
//! parametric link model, and solves for position with a weighted MAP
//! estimator (plus a Gauss-Newton least-squares baseline). On top of the
//! estimators sit the technology-selection policies: a neighbor-ToA-gap
//! selector that switches between GNSS and cellular positioning per UE, its
//! location-aware tunnel variants, and plain measurement fusion.
//!
//! The [`runner`] module orchestrates campaigns and computes error CDFs,
//! availability and tail metrics; [`config`] and [`records`] provide the
//! declarative scenario format and the stable on-disk results format used by
//! the `hypos` command-line tool.

pub mod config;
pub mod estimator;
pub mod measurement;
pub mod policy;
pub mod records;
pub mod runner;
pub mod scenario;
pub mod seeds;

/// Speed of light in vacuum, meters per second.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub use config::ScenarioConfig;
pub use estimator::{
    least_squares_estimate, map_estimate, map_objective, KindParams, Method, PositionEstimate,
    SolveMode, SolverOptions, WeightTable,
};
pub use measurement::{
    cellular_toas, first_arriving_neighbors, gnss_pseudoranges, received_snr_db, Measurement,
    MeasurementKind, MeasurementSet, NeighborWindow, UereProfile,
};
pub use policy::{
    calibrate_eta, classify_ue, compute_zeta, e_fusion_select, e_spntv_select, refine_eta,
    spntv_select, PolicyKind, SelectionOutcome, SelectionReason, Technology, UeClass,
};
pub use runner::{
    availability, error_cdf, run_campaign, run_drop, tail_improvement, CampaignSummary, UeRecord,
};
pub use scenario::{
    assign_link_states, build_cellular_layout, build_constellation, drop_ues, Anchor, AnchorKind,
    AnchorSet, LinkState, RoadLayout, UeDrop, Vec3,
};
