//! The heterogeneous Kuramoto model of a droop-controlled inverter network:
//! `D dtheta/dt = f(theta) = p - B A sin(B^T theta)` with `p = p* + w* d`.
//!
//! Units follow the source data: angles in radians, droop denominators `d`
//! in MW/Hz, injections in MW, so `D^{-1} f(theta)` reads directly as a
//! frequency in Hz. Under the default convention the integrator treats that
//! value as `dtheta/dt`; the angular convention rescales time by `2 pi` so
//! that `dtheta/dt` is in rad/s. Steady-state quantities are identical under
//! both; only trajectory timescales differ.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::network::{NetworkError, PowerNetwork};
use crate::torus::TorusState;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parameter vector has {got} entries, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("nonpositive droop denominator {value} at node {node}")]
    NonpositiveDroop { node: usize, value: f64 },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("no equilibrium found from this start: Newton residual {residual:.3e} after {iterations} iterations")]
    NewtonDiverged { residual: f64, iterations: usize },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("second eigenvalue {0:.3e} is negative beyond tolerance; graph disconnected or input invalid")]
    NegativeLambda2(f64),
}

/// How `D^{-1} f(theta)` (a value in Hz) maps to `dtheta/dt` in the integrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrequencyConvention {
    /// `dtheta/dt` is read directly in Hz-equivalent units (source-data literal).
    #[default]
    PaperLiteral,
    /// `dtheta/dt` in rad/s: the field is scaled by `2 pi`.
    Angular,
}

impl FrequencyConvention {
    /// Multiplier applied to the Hz-valued field to obtain `dtheta/dt`.
    pub fn time_scale(self) -> f64 {
        match self {
            FrequencyConvention::PaperLiteral => 1.0,
            FrequencyConvention::Angular => 2.0 * std::f64::consts::PI,
        }
    }
}

/// Droop-controlled Kuramoto model over a power network.
#[derive(Debug, Clone, PartialEq)]
pub struct KuramotoModel {
    net: PowerNetwork,
    d: Vec<f64>,
    p_star: Vec<f64>,
    omega_star: f64,
    /// Effective injection `p = p* + omega* d`, fixed at construction.
    p: Vec<f64>,
    pub convention: FrequencyConvention,
}

/// Result of an equilibrium solve. `within_half_pi` flags whether the
/// converged point lies in the pi/2-cohesive set; outside is a warning,
/// not an error.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub theta: TorusState,
    pub within_half_pi: bool,
}

impl KuramotoModel {
    pub fn new(
        net: PowerNetwork,
        d: Vec<f64>,
        p_star: Vec<f64>,
        omega_star: f64,
        convention: FrequencyConvention,
    ) -> Result<Self, ModelError> {
        let n = net.node_count();
        if d.len() != n {
            return Err(ModelError::DimensionMismatch {
                got: d.len(),
                expected: n,
            });
        }
        if p_star.len() != n {
            return Err(ModelError::DimensionMismatch {
                got: p_star.len(),
                expected: n,
            });
        }
        for (i, &di) in d.iter().enumerate() {
            if di <= 0.0 {
                return Err(ModelError::NonpositiveDroop { node: i, value: di });
            }
        }
        let p = p_star
            .iter()
            .zip(&d)
            .map(|(&ps, &di)| ps + omega_star * di)
            .collect();
        Ok(Self {
            net,
            d,
            p_star,
            omega_star,
            p,
            convention,
        })
    }

    pub fn network(&self) -> &PowerNetwork {
        &self.net
    }

    pub fn node_count(&self) -> usize {
        self.net.node_count()
    }

    pub fn droop(&self) -> &[f64] {
        &self.d
    }

    pub fn nominal_injection(&self) -> &[f64] {
        &self.p_star
    }

    pub fn omega_star(&self) -> f64 {
        self.omega_star
    }

    /// Effective injection `p = p* + omega* d`.
    pub fn effective_injection(&self) -> &[f64] {
        &self.p
    }

    pub fn d_sum(&self) -> f64 {
        self.d.iter().sum()
    }

    pub fn d_min(&self) -> f64 {
        self.d.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn d_max(&self) -> f64 {
        self.d.iter().copied().fold(0.0, f64::max)
    }

    /// The unique synchronous frequency `omega* + p*_sum / d_sum` in Hz.
    pub fn synchronous_frequency(&self) -> f64 {
        let p_sum: f64 = self.p_star.iter().sum();
        self.omega_star + p_sum / self.d_sum()
    }

    /// Vector field `f(theta) = p - B A sin(B^T theta)` in MW. Depends only
    /// on the torus point, not the chosen representatives.
    pub fn vector_field(&self, theta: &TorusState) -> Result<Vec<f64>, ModelError> {
        self.check_state(theta)?;
        let angles = theta.angles();
        let mut f = self.p.clone();
        for edge in self.net.edges() {
            let flow = edge.weight * (angles[edge.i] - angles[edge.j]).sin();
            f[edge.i] -= flow;
            f[edge.j] += flow;
        }
        Ok(f)
    }

    /// State-dependent Laplacian `L(theta) = B A diag(cos(B^T theta)) B^T`.
    pub fn state_laplacian(&self, theta: &TorusState) -> Result<DMatrix<f64>, ModelError> {
        self.check_state(theta)?;
        let angles = theta.angles();
        let n = self.net.node_count();
        let mut l = DMatrix::zeros(n, n);
        for edge in self.net.edges() {
            let w = edge.weight * (angles[edge.i] - angles[edge.j]).cos();
            l[(edge.i, edge.i)] += w;
            l[(edge.j, edge.j)] += w;
            l[(edge.i, edge.j)] -= w;
            l[(edge.j, edge.i)] -= w;
        }
        Ok(l)
    }

    /// Constant Laplacian `L = B A B^T`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        self.state_laplacian(&TorusState::zeros(self.net.node_count()))
            .expect("zero state always valid")
    }

    /// New model with the given edges removed; nodal parameters unchanged.
    pub fn without_lines(&self, edge_ids: &[usize]) -> Result<Self, ModelError> {
        let net = self.net.without_edges(edge_ids)?;
        Ok(Self {
            net,
            d: self.d.clone(),
            p_star: self.p_star.clone(),
            omega_star: self.omega_star,
            p: self.p.clone(),
            convention: self.convention,
        })
    }

    /// Newton-Raphson solve of the synchronized-rotation balance
    /// `p* - B A sin(B^T theta) = (p*_sum / d_sum) d`, with node 0 pinned as
    /// the angle reference. Converged when the max residual is below
    /// 1e-10 MW.
    pub fn solve_equilibrium(&self, init: &TorusState) -> Result<Equilibrium, ModelError> {
        self.check_state(init)?;
        let comps = self.net.connected_components();
        if comps.len() > 1 {
            return Err(ModelError::Network(NetworkError::Disconnected(comps)));
        }
        let n = self.net.node_count();
        let p_sum: f64 = self.p_star.iter().sum();
        let d_sum = self.d_sum();
        // target: f(theta) = omega_syn * d, expressed without omega* terms
        let target: Vec<f64> = self.d.iter().map(|&di| (p_sum / d_sum) * di).collect();

        let mut theta: Vec<f64> = init.angles().to_vec();
        let shift = theta[0];
        for a in theta.iter_mut() {
            *a -= shift;
        }
        const MAX_ITER: usize = 50;
        const TOL: f64 = 1e-10;
        let mut residual = f64::INFINITY;
        for _ in 0..MAX_ITER {
            let state = TorusState::new(&theta);
            let f = self.vector_field(&state)?;
            // g_i = p*_i - (B A sin)_i - target_i = f_i - omega* d_i - target_i
            let g: Vec<f64> = (0..n)
                .map(|i| f[i] - self.omega_star * self.d[i] - target[i])
                .collect();
            residual = g.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            if residual < TOL {
                let within = crate::torus::edge_differences(&state, &self.net)
                    .map_err(|_| ModelError::DimensionMismatch {
                        got: state.len(),
                        expected: n,
                    })?
                    .iter()
                    .all(|&d| d < std::f64::consts::FRAC_PI_2);
                return Ok(Equilibrium {
                    theta: state,
                    within_half_pi: within,
                });
            }
            // Jacobian of g is -L(theta); solve the reduced system with
            // node 0 pinned (drop row and column 0).
            let l = self.state_laplacian(&state)?;
            let mut a = DMatrix::zeros(n - 1, n - 1);
            let mut rhs = DVector::zeros(n - 1);
            for r in 1..n {
                rhs[r - 1] = g[r];
                for c in 1..n {
                    a[(r - 1, c - 1)] = l[(r, c)];
                }
            }
            let lu = a.lu();
            let Some(step) = lu.solve(&rhs) else {
                return Err(ModelError::NewtonDiverged {
                    residual,
                    iterations: MAX_ITER,
                });
            };
            for r in 1..n {
                theta[r] += step[r - 1];
            }
        }
        Err(ModelError::NewtonDiverged {
            residual,
            iterations: MAX_ITER,
        })
    }

    fn check_state(&self, theta: &TorusState) -> Result<(), ModelError> {
        if theta.len() != self.net.node_count() {
            return Err(ModelError::DimensionMismatch {
                got: theta.len(),
                expected: self.net.node_count(),
            });
        }
        Ok(())
    }
}

/// Second-smallest eigenvalue of a symmetric PSD matrix with kernel
/// `span(1_n)`; positive exactly when the underlying graph is connected.
pub fn lambda2(l: &DMatrix<f64>) -> Result<f64, ModelError> {
    let n = l.nrows();
    let scale = l.iter().fold(1.0f64, |m, &v| m.max(v.abs()));
    for r in 0..n {
        for c in (r + 1)..n {
            if (l[(r, c)] - l[(c, r)]).abs() > 1e-9 * scale {
                return Err(ModelError::NotSymmetric);
            }
        }
    }
    let eig = l.clone().symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let l2 = if n >= 2 { vals[1] } else { 0.0 };
    if l2 < -1e-9 * scale.max(1.0) {
        return Err(ModelError::NegativeLambda2(l2));
    }
    Ok(l2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn triangle_model(p_star: [f64; 3]) -> KuramotoModel {
        let net = PowerNetwork::new(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        KuramotoModel::new(
            net,
            vec![1.0; 3],
            p_star.to_vec(),
            60.0,
            FrequencyConvention::default(),
        )
        .unwrap()
    }

    #[test]
    fn field_at_origin_is_p() {
        let m = triangle_model([1.0, -0.5, -0.5]);
        let f = m.vector_field(&TorusState::zeros(3)).unwrap();
        for (fi, pi) in f.iter().zip(m.effective_injection()) {
            assert_abs_diff_eq!(fi, pi, epsilon = 1e-12);
        }
    }

    #[test]
    fn splay_state_coupling_cancels() {
        let m = triangle_model([0.0, 0.0, 0.0]);
        let theta = TorusState::new(&[0.0, 2.0 * PI / 3.0, -2.0 * PI / 3.0]);
        let f = m.vector_field(&theta).unwrap();
        for (fi, pi) in f.iter().zip(m.effective_injection()) {
            assert_abs_diff_eq!(fi, pi, epsilon = 1e-12);
        }
    }

    #[test]
    fn synchronous_frequency_simple_cases() {
        let m = triangle_model([0.0, 0.0, 0.0]);
        assert_eq!(m.synchronous_frequency(), 60.0);

        let net = PowerNetwork::new(2, &[(0, 1, 1.0)]).unwrap();
        let m2 = KuramotoModel::new(
            net,
            vec![1.0, 1.0],
            vec![1.0, -1.0],
            60.0,
            FrequencyConvention::default(),
        )
        .unwrap();
        assert_eq!(m2.synchronous_frequency(), 60.0);
    }

    #[test]
    fn laplacian_at_zero_is_constant_laplacian() {
        let m = triangle_model([0.0; 3]);
        let l = m.laplacian();
        let l2 = lambda2(&l).unwrap();
        // complete graph on 3 nodes with unit weights: spectrum {0, 3, 3}
        assert_abs_diff_eq!(l2, 3.0, epsilon = 1e-10);
    }

    #[test]
    fn laplacian_row_sums_zero_everywhere() {
        let m = triangle_model([0.0; 3]);
        let theta = TorusState::new(&[0.4, -1.2, 2.8]);
        let l = m.state_laplacian(&theta).unwrap();
        for r in 0..3 {
            assert_abs_diff_eq!(l.row(r).sum(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn quarter_pi_difference_zeroes_weight() {
        let net = PowerNetwork::new(2, &[(0, 1, 2.0)]).unwrap();
        let m = KuramotoModel::new(
            net,
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            60.0,
            FrequencyConvention::default(),
        )
        .unwrap();
        let l = m
            .state_laplacian(&TorusState::new(&[PI / 2.0, 0.0]))
            .unwrap();
        assert_abs_diff_eq!(l[(0, 0)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lambda2_two_node_path() {
        let net = PowerNetwork::new(2, &[(0, 1, 2.5)]).unwrap();
        let m = KuramotoModel::new(
            net,
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            60.0,
            FrequencyConvention::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(lambda2(&m.laplacian()).unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn lambda2_rejects_asymmetric() {
        let mut l = DMatrix::zeros(2, 2);
        l[(0, 1)] = 1.0;
        assert!(matches!(lambda2(&l), Err(ModelError::NotSymmetric)));
    }

    #[test]
    fn equilibrium_zero_injection() {
        let m = triangle_model([0.0; 3]);
        let eq = m.solve_equilibrium(&TorusState::zeros(3)).unwrap();
        for &a in eq.theta.angles() {
            assert_abs_diff_eq!(a, 0.0, epsilon = 1e-9);
        }
        assert!(eq.within_half_pi);
    }

    #[test]
    fn equilibrium_two_node_half_sine() {
        let net = PowerNetwork::new(2, &[(0, 1, 1.0)]).unwrap();
        let m = KuramotoModel::new(
            net,
            vec![1.0, 1.0],
            vec![0.5, -0.5],
            60.0,
            FrequencyConvention::default(),
        )
        .unwrap();
        let eq = m.solve_equilibrium(&TorusState::zeros(2)).unwrap();
        let gap = eq.theta.angles()[0] - eq.theta.angles()[1];
        assert_abs_diff_eq!(gap, PI / 6.0, epsilon = 1e-9);
    }

    #[test]
    fn equilibrium_satisfies_synchrony() {
        let m = triangle_model([0.6, -0.2, -0.4]);
        let eq = m.solve_equilibrium(&TorusState::zeros(3)).unwrap();
        let f = m.vector_field(&eq.theta).unwrap();
        let wsyn = m.synchronous_frequency();
        for (fi, di) in f.iter().zip(m.droop()) {
            assert_abs_diff_eq!(fi / di, wsyn, epsilon = 1e-9);
        }
    }

    #[test]
    fn remove_no_lines_is_identity() {
        let m = triangle_model([0.0; 3]);
        let same = m.without_lines(&[]).unwrap();
        assert_eq!(m, same);
    }
}
