//! Transient-stability analysis for droop-controlled inverter networks
//! governed by the heterogeneous Kuramoto dynamics
//! `D dtheta/dt = p - B A sin(B^T theta)`.
//!
//! The crate provides the network/model layer, torus geometry (winding
//! vectors and phase-cohesive sets), Lyapunov candidates with per-property
//! admissible bounds, trajectory simulation with constraint monitoring, an
//! LP relaxation that certifies invariance of winding cells, and the two
//! applications built on it: stability-margin curves and contingency
//! screening.

pub mod certify;
pub mod io;
pub mod lp;
pub mod lyapunov;
pub mod margins;
pub mod model;
pub mod network;
pub mod simulate;
pub mod torus;

pub use certify::{
    brute_force_v1, build_face_lp, certify, disturbance, sine_polytope, v2, Certificate,
    CertifyError, Disturbance, FaceValue, SinePolytope, Verdicts,
};
pub use io::{bundled_rts24, load_case, load_case_str, serialize_case, CaseData, IoError};
pub use lp::{LinearProgram, LpError, LpSolution, LpStatus};
pub use lyapunov::{
    freq_deviation, kappa, kappa_certified, threshold_bounds, v_d, v_inf, FrequencyDeviation,
    LyapunovError, ThresholdBounds, ToleranceSet,
};
pub use margins::{
    criticality_score, latin_hypercube, margin_curve, margin_u, screen_pairs, MarginCurve,
    MarginError, ScoreOutcome, ScreeningResult,
};
pub use model::{lambda2, Equilibrium, FrequencyConvention, KuramotoModel, ModelError};
pub use network::{CycleBasis, Edge, NetworkError, PowerNetwork};
pub use simulate::{
    detect_winding_escape, integrate, monitor, power_injections, ramping_rate, MonitorReport,
    PropertyStatus, SimulateError, Trajectory,
};
pub use torus::{
    ccw_difference, edge_differences, in_cohesive_set, signed_edge_differences, winding_number,
    winding_vector, wrap_angle, GammaEnvelope, TorusError, TorusState, WindingVector,
};
