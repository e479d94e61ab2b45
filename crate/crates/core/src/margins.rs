//! Stability-margin estimation and contingency screening.
//!
//! The margin `U(gamma0) = max {v2(gamma) : gamma0 <= gamma <= pi/2}` is the
//! largest initial frequency deviation certifiable against an angle floor
//! `gamma0`. It is estimated by maximizing over a finite candidate set (a
//! 1-D ray grid toward `pi/2`, optionally enriched with Latin hypercube
//! samples); any sampled maximum is a valid lower bound on `U`, so the
//! estimate errs on the safe side.
//!
//! A contingency's criticality score is `s = delta0 - max_Gamma v2(gamma)`
//! under the post-fault model, where `delta0` is the frequency deviation the
//! pre-fault equilibrium exhibits once lines are dropped. Negative scores
//! certify post-fault transient stability; disconnecting contingencies carry
//! no score.

use std::f64::consts::FRAC_PI_2;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::certify::{disturbance, CertifyError, FaceContext};
use crate::model::{KuramotoModel, ModelError};
use crate::torus::{GammaEnvelope, TorusState, WindingVector};

#[derive(Debug, Error)]
pub enum MarginError {
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("sampling box invalid at coordinate {index}: lower {lower} > upper {upper}")]
    BadBox {
        index: usize,
        lower: f64,
        upper: f64,
    },
    #[error("gamma0 has {got} entries, expected {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("no admissible search candidates (budget 0 and gamma0 degenerate)")]
    NoCandidates,
}

/// Smallest admissible per-edge angle bound; keeps mapped candidates inside
/// the open-from-below envelope domain when `gamma0` has zero entries.
const GAMMA_FLOOR: f64 = 1e-9;

/// Latin hypercube sample of `k` points in the box `[lower, upper]`: each
/// coordinate is stratified into `k` equal bins with exactly one point per
/// bin, deterministic under the seed.
pub fn latin_hypercube(
    lower: &[f64],
    upper: &[f64],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, MarginError> {
    let dim = lower.len();
    for (i, (&l, &u)) in lower.iter().zip(upper).enumerate() {
        if l > u {
            return Err(MarginError::BadBox {
                index: i,
                lower: l,
                upper: u,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = vec![vec![0.0; dim]; k];
    let mut bins: Vec<usize> = (0..k).collect();
    for c in 0..dim {
        bins.shuffle(&mut rng);
        for (j, sample) in samples.iter_mut().enumerate() {
            let q = (bins[j] as f64 + rng.random::<f64>()) / k as f64;
            sample[c] = lower[c] + q * (upper[c] - lower[c]);
        }
    }
    Ok(samples)
}

/// Clamps a candidate envelope into the admissible domain `(0, pi/2]`.
fn clamp_envelope(raw: &[f64]) -> GammaEnvelope {
    let v: Vec<f64> = raw
        .iter()
        .map(|&g| g.clamp(GAMMA_FLOOR, FRAC_PI_2))
        .collect();
    GammaEnvelope::new(v).expect("clamped into the valid range")
}

/// Maximizes `v2` over a candidate list, pruning each evaluation against the
/// incumbent (a face optimum at or below the incumbent proves the candidate
/// cannot improve the maximum). Returns the best value and its witness.
fn max_v2_over(
    model: &KuramotoModel,
    u: &WindingVector,
    candidates: &[GammaEnvelope],
) -> Result<Option<(f64, GammaEnvelope)>, MarginError> {
    let mut best: Option<(f64, GammaEnvelope)> = None;
    let mut hint = None;
    for gamma in candidates {
        let ctx = FaceContext::build(model, u, gamma)?;
        let cutoff = best.as_ref().map_or(f64::NEG_INFINITY, |(v, _)| *v);
        let (value, face) = ctx.min_over_faces_with_cutoff(u, cutoff, hint)?;
        hint = Some(face);
        if best.as_ref().is_none_or(|(v, _)| value > *v) {
            best = Some((value, gamma.clone()));
        }
    }
    Ok(best)
}

/// Candidate envelopes for a floor `gamma0`: the floor itself (when
/// admissible) plus the ray `gamma(beta) = gamma0 + beta (pi/2 - gamma0)`
/// on a uniform grid of `budget` points. Grids nest under doubling of the
/// budget, so enlarging the budget never decreases the estimate.
fn ray_candidates(gamma0: &[f64], budget: usize) -> Vec<GammaEnvelope> {
    let mut out = Vec::with_capacity(budget + 1);
    if gamma0.iter().all(|&g| g > 0.0) {
        out.push(clamp_envelope(gamma0));
    }
    for i in 1..=budget {
        let beta = i as f64 / budget as f64;
        let raw: Vec<f64> = gamma0
            .iter()
            .map(|&g| g + beta * (FRAC_PI_2 - g))
            .collect();
        out.push(clamp_envelope(&raw));
    }
    out
}

/// Lower-bound estimate of the stability margin `U(gamma0)` with its
/// witness envelope. `extra` adds caller-supplied candidates (entries below
/// `gamma0` are clamped up to it).
pub fn margin_u(
    model: &KuramotoModel,
    u: &WindingVector,
    gamma0: &[f64],
    search_budget: usize,
    extra: &[GammaEnvelope],
) -> Result<(f64, GammaEnvelope), MarginError> {
    let m = model.network().edge_count();
    if gamma0.len() != m {
        return Err(MarginError::Dimension {
            got: gamma0.len(),
            expected: m,
        });
    }
    let mut candidates = ray_candidates(gamma0, search_budget);
    for g in extra {
        let raised: Vec<f64> = g
            .entries()
            .iter()
            .zip(gamma0)
            .map(|(&ge, &g0)| ge.max(g0))
            .collect();
        candidates.push(clamp_envelope(&raised));
    }
    max_v2_over(model, u, &candidates)?.ok_or(MarginError::NoCandidates)
}

/// Margin estimates along a ray of uniform angle floors.
#[derive(Debug, Clone)]
pub struct MarginCurve {
    /// Uniform angle floors (rad).
    pub alphas: Vec<f64>,
    /// `U(alpha * 1)` estimates (Hz).
    pub values: Vec<f64>,
    /// Envelope attaining each estimate.
    pub witnesses: Vec<GammaEnvelope>,
}

/// Estimates `U(alpha * 1)` over a grid of uniform floors. Floors are
/// processed in decreasing order and each estimate's witness is reused as a
/// candidate for the smaller floors, which makes the candidate sets nested
/// and the reported curve non-increasing in `alpha`.
pub fn margin_curve(
    model: &KuramotoModel,
    u: &WindingVector,
    alphas: &[f64],
    search_budget: usize,
) -> Result<MarginCurve, MarginError> {
    let m = model.network().edge_count();
    let mut order: Vec<usize> = (0..alphas.len()).collect();
    order.sort_by(|&a, &b| alphas[b].partial_cmp(&alphas[a]).unwrap());
    let mut values = vec![0.0; alphas.len()];
    let mut witnesses: Vec<Option<GammaEnvelope>> = vec![None; alphas.len()];
    let mut carried: Vec<GammaEnvelope> = Vec::new();
    for &idx in &order {
        let gamma0 = vec![alphas[idx]; m];
        let (value, witness) = margin_u(model, u, &gamma0, search_budget, &carried)?;
        values[idx] = value;
        witnesses[idx] = Some(witness.clone());
        carried.push(witness);
    }
    Ok(MarginCurve {
        alphas: alphas.to_vec(),
        values,
        witnesses: witnesses.into_iter().map(|w| w.unwrap()).collect(),
    })
}

/// Screening outcome of one contingency.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreOutcome {
    /// Criticality score `delta0 - max_Gamma v2` (Hz); negative certifies.
    Score(f64),
    /// The contingency disconnects the network.
    Disconnected,
}

/// Number of ray-grid candidates always included in a score's search set;
/// they dominate the sampled candidates on lightly loaded contingencies and
/// seed the incumbent for pruning.
const SCORE_RAY_BUDGET: usize = 8;

/// Criticality score of a line-failure contingency. The search set is the
/// ray grid from the post-fault gaps `gamma0` toward `pi/2` plus the given
/// test set: unit-box vectors indexed by pre-fault edge and affinely mapped
/// onto `[gamma0, pi/2]` per surviving edge, so the same draw is reused
/// across contingencies. A post-fault gap already past `pi/2` cannot be
/// certified at any envelope: the score is `+infinity`.
pub fn criticality_score(
    model_pre: &KuramotoModel,
    theta_pre: &TorusState,
    contingency: &[usize],
    unit_samples: &[Vec<f64>],
) -> Result<ScoreOutcome, MarginError> {
    let post = model_pre.without_lines(contingency)?;
    if !post.network().is_connected() {
        return Ok(ScoreOutcome::Disconnected);
    }
    let dist = disturbance(&post, theta_pre)?;
    if dist.gamma0.iter().any(|&g| g > FRAC_PI_2) {
        return Ok(ScoreOutcome::Score(f64::INFINITY));
    }
    let m_pre = model_pre.network().edge_count();
    let keep: Vec<usize> = (0..m_pre).filter(|e| !contingency.contains(e)).collect();
    let mut candidates = ray_candidates(&dist.gamma0, SCORE_RAY_BUDGET);
    for q in unit_samples {
        let raw: Vec<f64> = keep
            .iter()
            .zip(&dist.gamma0)
            .map(|(&pre_e, &g0)| g0 + q[pre_e] * (FRAC_PI_2 - g0))
            .collect();
        candidates.push(clamp_envelope(&raw));
    }
    let best = max_v2_over(&post, &dist.u, &candidates)?
        .map(|(v, _)| v)
        .unwrap_or(f64::NEG_INFINITY);
    Ok(ScoreOutcome::Score(dist.delta0 - best))
}

/// Symmetric screen over all single and pairwise line failures.
#[derive(Debug, Clone)]
pub struct ScreeningResult {
    /// `m x m` score matrix (Hz); diagonal holds single failures. Entries
    /// for disconnecting contingencies are NaN; consult `disconnected`.
    pub scores: Vec<Vec<f64>>,
    pub disconnected: Vec<Vec<bool>>,
    /// The unit-box Latin hypercube draw shared by every contingency.
    pub test_set: Vec<Vec<f64>>,
}

/// Screens every line pair (and every single line on the diagonal) of the
/// pre-fault model, scoring each against the same Latin hypercube test set.
pub fn screen_pairs(
    model_pre: &KuramotoModel,
    theta_pre: &TorusState,
    k_samples: usize,
    seed: u64,
) -> Result<ScreeningResult, MarginError> {
    let m = model_pre.network().edge_count();
    let test_set = latin_hypercube(&vec![0.0; m], &vec![1.0; m], k_samples, seed)?;
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|e1| (e1..m).map(move |e2| (e1, e2)))
        .collect();
    let outcomes: Vec<((usize, usize), ScoreOutcome)> = pairs
        .par_iter()
        .map(|&(e1, e2)| {
            let contingency: Vec<usize> = if e1 == e2 { vec![e1] } else { vec![e1, e2] };
            criticality_score(model_pre, theta_pre, &contingency, &test_set)
                .map(|o| ((e1, e2), o))
        })
        .collect::<Result<_, _>>()?;
    let mut scores = vec![vec![f64::NAN; m]; m];
    let mut disconnected = vec![vec![false; m]; m];
    for ((e1, e2), outcome) in outcomes {
        match outcome {
            ScoreOutcome::Score(s) => {
                scores[e1][e2] = s;
                scores[e2][e1] = s;
            }
            ScoreOutcome::Disconnected => {
                disconnected[e1][e2] = true;
                disconnected[e2][e1] = true;
            }
        }
    }
    Ok(ScreeningResult {
        scores,
        disconnected,
        test_set,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FrequencyConvention;
    use crate::network::PowerNetwork;

    fn triangle() -> KuramotoModel {
        let net = PowerNetwork::new(3, &[(0, 1, 1.0), (1, 2, 1.2), (0, 2, 0.8)]).unwrap();
        KuramotoModel::new(
            net,
            vec![1.0; 3],
            vec![0.3, -0.1, -0.2],
            60.0,
            FrequencyConvention::default(),
        )
        .unwrap()
    }

    #[test]
    fn lhs_one_sample_per_bin() {
        let k = 40;
        let samples = latin_hypercube(&[0.0, -1.0], &[1.0, 1.0], k, 7).unwrap();
        assert_eq!(samples.len(), k);
        for c in 0..2 {
            let (lo, hi) = if c == 0 { (0.0, 1.0) } else { (-1.0, 1.0) };
            let mut counts = vec![0usize; k];
            for s in &samples {
                let q = (s[c] - lo) / (hi - lo);
                let bin = ((q * k as f64) as usize).min(k - 1);
                counts[bin] += 1;
            }
            assert!(counts.iter().all(|&c| c == 1), "{counts:?}");
        }
    }

    #[test]
    fn lhs_deterministic_under_seed() {
        let a = latin_hypercube(&[0.0; 3], &[1.0; 3], 10, 42).unwrap();
        let b = latin_hypercube(&[0.0; 3], &[1.0; 3], 10, 42).unwrap();
        assert_eq!(a, b);
        let c = latin_hypercube(&[0.0; 3], &[1.0; 3], 10, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn lhs_single_sample_and_bad_box() {
        let s = latin_hypercube(&[2.0], &[3.0], 1, 0).unwrap();
        assert_eq!(s.len(), 1);
        assert!((2.0..=3.0).contains(&s[0][0]));
        assert!(matches!(
            latin_hypercube(&[1.0], &[0.0], 1, 0),
            Err(MarginError::BadBox { .. })
        ));
    }

    #[test]
    fn margin_budget_doubling_never_decreases() {
        let model = triangle();
        let u = WindingVector::zeros(1);
        let gamma0 = vec![0.2; 3];
        let (u5, _) = margin_u(&model, &u, &gamma0, 5, &[]).unwrap();
        let (u10, _) = margin_u(&model, &u, &gamma0, 10, &[]).unwrap();
        assert!(u10 >= u5 - 1e-12, "u5 {u5} u10 {u10}");
    }

    #[test]
    fn margin_curve_non_increasing() {
        let model = triangle();
        let u = WindingVector::zeros(1);
        let alphas: Vec<f64> = (0..6).map(|k| (k as f64 * 8.0).to_radians()).collect();
        let curve = margin_curve(&model, &u, &alphas, 8).unwrap();
        for w in curve.values.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", curve.values);
        }
    }

    #[test]
    fn empty_contingency_scores_negative_at_equilibrium() {
        let model = triangle();
        let eq = model.solve_equilibrium(&TorusState::zeros(3)).unwrap();
        let samples = latin_hypercube(&[0.0; 3], &[1.0; 3], 5, 1).unwrap();
        match criticality_score(&model, &eq.theta, &[], &samples).unwrap() {
            ScoreOutcome::Score(s) => assert!(s < 0.0, "score {s}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn disconnecting_contingency_flagged() {
        let net = PowerNetwork::new(2, &[(0, 1, 1.0)]).unwrap();
        let model = KuramotoModel::new(
            net,
            vec![1.0; 2],
            vec![0.1, -0.1],
            60.0,
            FrequencyConvention::default(),
        )
        .unwrap();
        let eq = model.solve_equilibrium(&TorusState::zeros(2)).unwrap();
        assert_eq!(
            criticality_score(&model, &eq.theta, &[0], &[]).unwrap(),
            ScoreOutcome::Disconnected
        );
    }

    #[test]
    fn triangle_screen_symmetry_and_mask() {
        let model = triangle();
        let eq = model.solve_equilibrium(&TorusState::zeros(3)).unwrap();
        let result = screen_pairs(&model, &eq.theta, 3, 11).unwrap();
        for e1 in 0..3 {
            for e2 in 0..3 {
                assert_eq!(result.disconnected[e1][e2], result.disconnected[e2][e1]);
                if !result.disconnected[e1][e2] {
                    assert_eq!(result.scores[e1][e2], result.scores[e2][e1]);
                }
            }
            // single-line failures keep the triangle connected; the score may
            // be -infinity when every face is unreachable, but never NaN
            assert!(!result.disconnected[e1][e1]);
            assert!(!result.scores[e1][e1].is_nan());
        }
        // every pairwise removal isolates a node
        for e1 in 0..3 {
            for e2 in 0..3 {
                if e1 != e2 {
                    assert!(result.disconnected[e1][e2]);
                    assert!(result.scores[e1][e2].is_nan());
                }
            }
        }
    }

    #[test]
    fn screen_deterministic() {
        let model = triangle();
        let eq = model.solve_equilibrium(&TorusState::zeros(3)).unwrap();
        let a = screen_pairs(&model, &eq.theta, 4, 5).unwrap();
        let b = screen_pairs(&model, &eq.theta, 4, 5).unwrap();
        for e1 in 0..3 {
            for e2 in 0..3 {
                assert_eq!(a.disconnected[e1][e2], b.disconnected[e1][e2]);
                if !a.disconnected[e1][e2] {
                    assert_eq!(a.scores[e1][e2], b.scores[e1][e2]);
                }
            }
        }
    }
}
