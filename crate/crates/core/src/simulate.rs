//! Fixed-step RK4 integration of the network dynamics in the rotating
//! frame, with per-sample constraint monitoring.
//!
//! The integrator works on `phi(t) = theta(t) - omega_syn t`, whose field is
//! `D^{-1} f(phi) - omega_syn 1` (scaled by the frequency convention), so the
//! fast nominal rotation never has to be resolved. Angles are re-wrapped to
//! `(-pi, pi]` after every step.

use thiserror::Error;

use crate::lyapunov::{freq_deviation, v_d_of, FrequencyDeviation, LyapunovError, ToleranceSet};
use crate::model::{KuramotoModel, ModelError};
use crate::network::NetworkError;
use crate::torus::{
    edge_differences, in_cohesive_set, winding_vector, GammaEnvelope, TorusError, TorusState,
    WindingVector,
};

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("invalid step: dt = {dt}, t_end = {t_end}")]
    BadStep { dt: f64, t_end: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Torus(#[from] TorusError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
    #[error("trajectory is empty")]
    EmptyTrajectory,
}

/// Time-sampled simulation output with derived per-sample quantities.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<TorusState>,
    pub freq_dev: Vec<FrequencyDeviation>,
    /// Per-edge geodesic angle differences (rad) at each sample.
    pub edge_diffs: Vec<Vec<f64>>,
    pub winding: Vec<WindingVector>,
    /// Running per-node integral of `p_e(t) - p*` (MW s), trapezoidal.
    pub energy_dev: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &TorusState {
        self.states.last().expect("trajectory nonempty")
    }
}

/// Nodal active power injections `p_e,i = sum_j a_ij sin(theta_i - theta_j)`.
pub fn power_injections(model: &KuramotoModel, theta: &TorusState) -> Result<Vec<f64>, ModelError> {
    // p_e = p - f(theta) - omega* d + ... directly from the edge sum:
    let f = model.vector_field(theta)?;
    Ok(model
        .effective_injection()
        .iter()
        .zip(&f)
        .map(|(&pi, &fi)| pi - fi)
        .collect())
}

/// Analytic rate of change of nodal injections along the flow, in MW/s:
/// `dp_e,i/dt = sum_j a_ij cos(theta_i - theta_j)(dtheta_i - dtheta_j)`.
pub fn ramping_rate(model: &KuramotoModel, theta: &TorusState) -> Result<Vec<f64>, ModelError> {
    let f = model.vector_field(theta)?;
    let scale = model.convention.time_scale();
    let rate: Vec<f64> = f
        .iter()
        .zip(model.droop())
        .map(|(&fi, &di)| scale * fi / di)
        .collect();
    let angles = theta.angles();
    let mut out = vec![0.0; model.node_count()];
    for edge in model.network().edges() {
        let c = edge.weight * (angles[edge.i] - angles[edge.j]).cos();
        let dv = rate[edge.i] - rate[edge.j];
        out[edge.i] += c * dv;
        out[edge.j] -= c * dv;
    }
    Ok(out)
}

/// Winding vector with a tiny deterministic nudge if the sample lands
/// exactly on the branch set (a measure-zero event).
pub fn winding_with_nudge(
    theta: &TorusState,
    basis: &crate::network::CycleBasis,
    net: &crate::network::PowerNetwork,
) -> Result<WindingVector, TorusError> {
    match winding_vector(theta, basis, net) {
        Err(TorusError::BranchPoint { .. }) => {
            let nudged: Vec<f64> = theta
                .angles()
                .iter()
                .enumerate()
                .map(|(i, &a)| a + 1e-12 * (i as f64 + 1.0))
                .collect();
            winding_vector(&TorusState::new(&nudged), basis, net)
        }
        other => other,
    }
}

/// Classical fixed-step RK4 on the rotating-frame field, recording every step.
pub fn integrate(
    model: &KuramotoModel,
    theta0: &TorusState,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory, SimulateError> {
    if !(dt > 0.0) || t_end < dt {
        return Err(SimulateError::BadStep { dt, t_end });
    }
    let net = model.network();
    let basis = net.cycle_basis()?;
    let n = model.node_count();
    let wsyn = model.synchronous_frequency();
    let scale = model.convention.time_scale();
    let p_star = model.nominal_injection();

    let deriv = |phi: &[f64], out: &mut [f64]| {
        let mut f = model.effective_injection().to_vec();
        for edge in net.edges() {
            let flow = edge.weight * (phi[edge.i] - phi[edge.j]).sin();
            f[edge.i] -= flow;
            f[edge.j] += flow;
        }
        for i in 0..n {
            out[i] = scale * (f[i] / model.droop()[i] - wsyn);
        }
    };

    let steps = (t_end / dt).round() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut freq = Vec::with_capacity(steps + 1);
    let mut diffs = Vec::with_capacity(steps + 1);
    let mut winding = Vec::with_capacity(steps + 1);
    let mut energy = Vec::with_capacity(steps + 1);

    let mut phi: Vec<f64> = theta0.angles().to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    let mut gap_prev = vec![0.0; n];
    let mut e_prev = vec![0.0; n];
    let mut record = |step: usize,
                      phi: &[f64],
                      gap_prev: &mut Vec<f64>,
                      e_prev: &mut Vec<f64>|
     -> Result<(), SimulateError> {
        let t = step as f64 * dt;
        let state = TorusState::new(phi);
        if state.angles().iter().any(|a| !a.is_finite()) {
            return Err(SimulateError::NonFinite { t });
        }
        let dev = freq_deviation(model, &state)?;
        let pe = power_injections(model, &state)?;
        let gap: Vec<f64> = pe.iter().zip(p_star).map(|(&a, &b)| a - b).collect();
        let e_now: Vec<f64> = if step == 0 {
            vec![0.0; n]
        } else {
            (0..n)
                .map(|i| e_prev[i] + 0.5 * dt * (gap_prev[i] + gap[i]))
                .collect()
        };
        times.push(t);
        diffs.push(edge_differences(&state, net)?);
        winding.push(winding_with_nudge(&state, &basis, net)?);
        freq.push(dev);
        states.push(state);
        energy.push(e_now.clone());
        *gap_prev = gap;
        *e_prev = e_now;
        Ok(())
    };

    record(0, &phi, &mut gap_prev, &mut e_prev)?;
    for step in 1..=steps {
        deriv(&phi, &mut k1);
        for i in 0..n {
            tmp[i] = phi[i] + 0.5 * dt * k1[i];
        }
        deriv(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = phi[i] + 0.5 * dt * k2[i];
        }
        deriv(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = phi[i] + dt * k3[i];
        }
        deriv(&tmp, &mut k4);
        for i in 0..n {
            phi[i] = crate::torus::wrap_angle(
                phi[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]),
            );
        }
        record(step, &phi, &mut gap_prev, &mut e_prev)?;
    }

    Ok(Trajectory {
        times,
        states,
        freq_dev: freq,
        edge_diffs: diffs,
        winding,
        energy_dev: energy,
    })
}

/// Outcome of one monitored property over a finite horizon.
#[derive(Debug, Clone, PartialEq)]
pub enum PropertyStatus {
    Satisfied,
    /// A violation with its witness: time, node-or-edge index, offending value.
    ViolatedAt { time: f64, index: usize, value: f64 },
    /// Horizon ended without a violation but also without convergence.
    Undetermined,
}

impl PropertyStatus {
    pub fn is_violated(&self) -> bool {
        matches!(self, PropertyStatus::ViolatedAt { .. })
    }
}

/// Per-property verdicts and observed worst-case margins.
#[derive(Debug, Clone)]
pub struct MonitorReport {
    pub sync: PropertyStatus,
    pub frequency: PropertyStatus,
    pub angle: PropertyStatus,
    pub power: PropertyStatus,
    pub ramping: PropertyStatus,
    pub energy: PropertyStatus,
    pub max_freq_dev: f64,
    pub max_edge_diff: f64,
    pub max_power_dev: f64,
    pub max_ramp: f64,
    pub max_energy_dev: f64,
}

impl MonitorReport {
    pub fn all_satisfied(&self) -> bool {
        [
            &self.sync,
            &self.frequency,
            &self.angle,
            &self.power,
            &self.ramping,
            &self.energy,
        ]
        .iter()
        .all(|s| **s == PropertyStatus::Satisfied)
    }
}

/// Checks the six operating properties over a finite trajectory.
///
/// Synchronization is declared when the quadratic deviation stays below
/// `sync_tol * sqrt(d_sum)` over the last 10% of the horizon. The remaining
/// properties are pointwise bound checks; without a violation they are
/// `Satisfied` when the trajectory converged and `Undetermined` otherwise.
pub fn monitor(
    model: &KuramotoModel,
    traj: &Trajectory,
    tol: &ToleranceSet,
    sync_tol: f64,
) -> Result<MonitorReport, SimulateError> {
    if traj.is_empty() {
        return Err(SimulateError::EmptyTrajectory);
    }
    let d = model.droop();
    let t_end = *traj.times.last().unwrap();
    let hold_from = t_end - 0.1 * t_end;
    let vd_thresh = sync_tol * model.d_sum().sqrt();

    let mut synced = true;
    let mut freq_viol: Option<(f64, usize, f64)> = None;
    let mut angle_viol: Option<(f64, usize, f64)> = None;
    let mut power_viol: Option<(f64, usize, f64)> = None;
    let mut ramp_viol: Option<(f64, usize, f64)> = None;
    let mut energy_viol: Option<(f64, usize, f64)> = None;
    let mut max_freq = 0.0f64;
    let mut max_diff = 0.0f64;
    let mut max_power = 0.0f64;
    let mut max_ramp = 0.0f64;
    let mut max_energy = 0.0f64;

    let p_star = model.nominal_injection();
    for k in 0..traj.len() {
        let t = traj.times[k];
        let dev = &traj.freq_dev[k];
        if t >= hold_from && v_d_of(dev, d) > vd_thresh {
            synced = false;
        }
        for (i, &vi) in dev.v.iter().enumerate() {
            max_freq = max_freq.max(vi.abs());
            if freq_viol.is_none() && vi.abs() > tol.delta_bar[i] {
                freq_viol = Some((t, i, vi.abs()));
            }
        }
        for (e, &g) in traj.edge_diffs[k].iter().enumerate() {
            max_diff = max_diff.max(g);
            if angle_viol.is_none() && g > tol.gamma_bar.entries()[e] {
                angle_viol = Some((t, e, g));
            }
        }
        let pe = power_injections(model, &traj.states[k])?;
        for (i, (&p, &ps)) in pe.iter().zip(p_star).enumerate() {
            let gap = (p - ps).abs();
            max_power = max_power.max(gap);
            if power_viol.is_none() && gap > tol.p_bar[i] {
                power_viol = Some((t, i, gap));
            }
        }
        let ramp = ramping_rate(model, &traj.states[k])?;
        for (i, &r) in ramp.iter().enumerate() {
            max_ramp = max_ramp.max(r.abs());
            if ramp_viol.is_none() && r.abs() > tol.r_bar[i] {
                ramp_viol = Some((t, i, r.abs()));
            }
        }
        for (i, &s) in traj.energy_dev[k].iter().enumerate() {
            max_energy = max_energy.max(s.abs());
            if energy_viol.is_none() && s.abs() > tol.s_bar[i] {
                energy_viol = Some((t, i, s.abs()));
            }
        }
    }

    let sync_status = if synced {
        PropertyStatus::Satisfied
    } else {
        PropertyStatus::Undetermined
    };
    let settle = |viol: Option<(f64, usize, f64)>| match viol {
        Some((time, index, value)) => PropertyStatus::ViolatedAt { time, index, value },
        None if synced => PropertyStatus::Satisfied,
        None => PropertyStatus::Undetermined,
    };

    Ok(MonitorReport {
        sync: sync_status,
        frequency: settle(freq_viol),
        angle: settle(angle_viol),
        power: settle(power_viol),
        ramping: settle(ramp_viol),
        energy: settle(energy_viol),
        max_freq_dev: max_freq,
        max_edge_diff: max_diff,
        max_power_dev: max_power,
        max_ramp,
        max_energy_dev: max_energy,
    })
}

/// Earliest sample at which the trajectory is outside the cohesive set, if any.
pub fn detect_winding_escape(
    traj: &Trajectory,
    gamma: &GammaEnvelope,
    model: &KuramotoModel,
) -> Result<Option<f64>, SimulateError> {
    for k in 0..traj.len() {
        if !in_cohesive_set(&traj.states[k], gamma, model.network())? {
            return Ok(Some(traj.times[k]));
        }
    }
    Ok(None)
}
