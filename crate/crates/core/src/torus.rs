//! Geometry on the n-torus: counterclockwise differences, winding numbers
//! and vectors over a cycle basis, and phase-cohesive sets.
//!
//! The counterclockwise difference is the signed representative in
//! `(-pi, pi]`; with a nonnegative arc-length convention a 3-cycle could
//! never produce winding numbers 0 or -1, so the signed convention is the
//! only consistent reading.

use std::f64::consts::PI;

use crate::network::{CycleBasis, PowerNetwork};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TorusError {
    #[error("degenerate state: angle difference on edge {edge} is exactly pi")]
    BranchPoint { edge: usize },
    #[error("winding number {value} along cycle {cycle} is not an integer")]
    NonIntegerWinding { cycle: usize, value: f64 },
    #[error("state has {got} angles, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// Wraps an angle to its unique representative in `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Counterclockwise difference from `alpha` to `beta`: the representative of
/// `beta - alpha` in `(-pi, pi]`.
pub fn ccw_difference(alpha: f64, beta: f64) -> f64 {
    wrap_angle(beta - alpha)
}

/// Angles on the n-torus, each stored in `(-pi, pi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusState {
    theta: Vec<f64>,
}

impl TorusState {
    pub fn new(angles: &[f64]) -> Self {
        Self {
            theta: angles.iter().map(|&a| wrap_angle(a)).collect(),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            theta: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn angles(&self) -> &[f64] {
        &self.theta
    }

    /// Uniform rotation by `c`; a torus symmetry of all the dynamics here.
    pub fn rotated(&self, c: f64) -> Self {
        Self::new(&self.theta.iter().map(|&a| a + c).collect::<Vec<_>>())
    }
}

/// Integer winding vector of a state along a cycle basis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindingVector(pub Vec<i64>);

impl WindingVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }
}

/// Per-edge angle bounds in `(0, pi/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaEnvelope {
    gamma: Vec<f64>,
}

#[derive(Debug, Error)]
#[error("gamma entry {value} at edge {edge} outside (0, pi/2]")]
pub struct GammaError {
    pub edge: usize,
    pub value: f64,
}

impl GammaEnvelope {
    pub fn new(gamma: Vec<f64>) -> Result<Self, GammaError> {
        for (e, &g) in gamma.iter().enumerate() {
            if !(g > 0.0 && g <= PI / 2.0 + 1e-15) {
                return Err(GammaError { edge: e, value: g });
            }
        }
        Ok(Self { gamma })
    }

    pub fn uniform(m: usize, value: f64) -> Result<Self, GammaError> {
        Self::new(vec![value; m])
    }

    pub fn entries(&self) -> &[f64] {
        &self.gamma
    }

    pub fn max(&self) -> f64 {
        self.gamma.iter().copied().fold(0.0, f64::max)
    }
}

/// Signed counterclockwise differences along every edge, `d_cc(theta_i, theta_j)`
/// for the canonical orientation `i -> j` of each edge. Errors on the branch
/// point (difference exactly pi).
pub fn signed_edge_differences(
    theta: &TorusState,
    net: &PowerNetwork,
) -> Result<Vec<f64>, TorusError> {
    check_dims(theta, net)?;
    let angles = theta.angles();
    net.edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let d = ccw_difference(angles[edge.i], angles[edge.j]);
            if d == PI {
                Err(TorusError::BranchPoint { edge: e })
            } else {
                Ok(d)
            }
        })
        .collect()
}

/// Per-edge geodesic distances `|B^T theta|`, each in `[0, pi]`.
pub fn edge_differences(theta: &TorusState, net: &PowerNetwork) -> Result<Vec<f64>, TorusError> {
    check_dims(theta, net)?;
    let angles = theta.angles();
    Ok(net
        .edges()
        .iter()
        .map(|edge| ccw_difference(angles[edge.i], angles[edge.j]).abs())
        .collect())
}

/// Winding number of `theta` along a signed cycle-edge vector: the sum of
/// counterclockwise differences around the cycle, divided by 2 pi. Always an
/// integer away from the branch set; near-integers within 1e-9 are rounded.
pub fn winding_number(
    theta: &TorusState,
    cycle: &[f64],
    net: &PowerNetwork,
) -> Result<i64, TorusError> {
    let diffs = signed_edge_differences(theta, net)?;
    let total: f64 = cycle.iter().zip(&diffs).map(|(&s, &d)| s * d).sum();
    let w = total / (2.0 * PI);
    let rounded = w.round();
    if (w - rounded).abs() > 1e-9 {
        return Err(TorusError::NonIntegerWinding { cycle: 0, value: w });
    }
    Ok(rounded as i64)
}

/// Componentwise winding numbers over the rows of a cycle basis.
pub fn winding_vector(
    theta: &TorusState,
    basis: &CycleBasis,
    net: &PowerNetwork,
) -> Result<WindingVector, TorusError> {
    let diffs = signed_edge_differences(theta, net)?;
    let mut u = Vec::with_capacity(basis.len());
    for (c, cyc) in basis.cycles().iter().enumerate() {
        let total: f64 = cyc.iter().zip(&diffs).map(|(&s, &d)| s * d).sum();
        let w = total / (2.0 * PI);
        let rounded = w.round();
        if (w - rounded).abs() > 1e-9 {
            return Err(TorusError::NonIntegerWinding { cycle: c, value: w });
        }
        u.push(rounded as i64);
    }
    Ok(WindingVector(u))
}

/// True iff every edge's geodesic distance is strictly below its bound.
pub fn in_cohesive_set(
    theta: &TorusState,
    gamma: &GammaEnvelope,
    net: &PowerNetwork,
) -> Result<bool, TorusError> {
    let diffs = edge_differences(theta, net)?;
    Ok(diffs.iter().zip(gamma.entries()).all(|(&d, &g)| d < g))
}

fn check_dims(theta: &TorusState, net: &PowerNetwork) -> Result<(), TorusError> {
    if theta.len() != net.node_count() {
        return Err(TorusError::DimensionMismatch {
            got: theta.len(),
            expected: net.node_count(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::PowerNetwork;

    fn triangle() -> PowerNetwork {
        PowerNetwork::new(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    #[test]
    fn ccw_difference_representatives() {
        assert_eq!(ccw_difference(0.0, PI / 2.0), PI / 2.0);
        assert!((ccw_difference(0.0, 3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(ccw_difference(1.3, 1.3), 0.0);
    }

    #[test]
    fn wrap_puts_pi_at_pi() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(3.0 * PI), PI);
    }

    #[test]
    fn triangle_winding_numbers() {
        let net = triangle();
        let basis = net.cycle_basis().unwrap();
        let cyc = &basis.cycles()[0];

        let flat = TorusState::new(&[0.0, 0.1, 0.2]);
        assert_eq!(winding_number(&flat, cyc, &net).unwrap(), 0);

        let ccw = TorusState::new(&[0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0]);
        let cw = TorusState::new(&[0.0, -2.0 * PI / 3.0, -4.0 * PI / 3.0]);
        let w_ccw = winding_number(&ccw, cyc, &net).unwrap();
        let w_cw = winding_number(&cw, cyc, &net).unwrap();
        // the basis cycle orientation fixes the sign; the two states are mirrors
        assert_eq!(w_ccw.abs(), 1);
        assert_eq!(w_cw, -w_ccw);
    }

    #[test]
    fn square_wound_state() {
        let net = PowerNetwork::new(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)])
            .unwrap();
        let basis = net.cycle_basis().unwrap();
        assert_eq!(basis.len(), 1);
        let theta = TorusState::new(&[0.0, PI / 2.0, PI - 1e-9, 3.0 * PI / 2.0]);
        let u = winding_vector(&theta, &basis, &net).unwrap();
        assert_eq!(u.0[0].abs(), 1);
    }

    #[test]
    fn zero_state_zero_winding() {
        let net = triangle();
        let basis = net.cycle_basis().unwrap();
        let u = winding_vector(&TorusState::zeros(3), &basis, &net).unwrap();
        assert_eq!(u, WindingVector::zeros(1));
    }

    #[test]
    fn branch_point_rejected() {
        let net = PowerNetwork::new(2, &[(0, 1, 1.0)]).unwrap();
        let theta = TorusState::new(&[0.0, PI]);
        assert!(matches!(
            signed_edge_differences(&theta, &net),
            Err(TorusError::BranchPoint { edge: 0 })
        ));
        // the geodesic distance itself is still defined
        assert_eq!(edge_differences(&theta, &net).unwrap()[0], PI);
    }

    #[test]
    fn cohesive_set_is_strict() {
        let net = PowerNetwork::new(2, &[(0, 1, 1.0)]).unwrap();
        let gamma = GammaEnvelope::uniform(1, 0.5).unwrap();
        let at_bound = TorusState::new(&[0.0, 0.5]);
        assert!(!in_cohesive_set(&at_bound, &gamma, &net).unwrap());
        let inside = TorusState::new(&[0.0, 0.49]);
        assert!(in_cohesive_set(&inside, &gamma, &net).unwrap());
        assert!(in_cohesive_set(&TorusState::zeros(2), &gamma, &net).unwrap());
    }

    #[test]
    fn gamma_envelope_range() {
        assert!(GammaEnvelope::new(vec![0.0]).is_err());
        assert!(GammaEnvelope::new(vec![2.0]).is_err());
        assert!(GammaEnvelope::new(vec![PI / 2.0]).is_ok());
    }

    #[test]
    fn winding_rotation_invariance() {
        let net = triangle();
        let basis = net.cycle_basis().unwrap();
        let theta = TorusState::new(&[0.3, 2.0, -1.4]);
        let u = winding_vector(&theta, &basis, &net).unwrap();
        for c in [0.7, -2.3, 5.0] {
            let v = winding_vector(&theta.rotated(c), &basis, &net).unwrap();
            assert_eq!(u, v);
        }
    }
}
