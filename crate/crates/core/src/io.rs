//! Case-file ingestion and result serialization.
//!
//! Cases are TOML documents: a list of buses (`id`, `p_star` in MW, `d` in
//! MW/Hz), a list of lines (`from`, `to`, `a` in MW), the rated frequency
//! `omega_star` in Hz, and an optional `[tolerances]` block (per-node or
//! scalar `delta_bar` Hz, `gamma_bar_deg` degrees, `p_bar` MW, `r_bar`
//! MW/s, `s_bar` MW s). Bus ids are arbitrary positive integers; internal
//! node indices follow ascending id order, and edge order is the canonical
//! sorted order of the index pairs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::Certificate;
use crate::lyapunov::{LyapunovError, ToleranceSet};
use crate::margins::{MarginCurve, ScreeningResult};
use crate::model::{FrequencyConvention, KuramotoModel, ModelError};
use crate::network::PowerNetwork;
use crate::simulate::Trajectory;
use crate::torus::{GammaEnvelope, GammaError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("duplicate bus id {0}")]
    DuplicateBusId(u64),
    #[error("line {from}-{to} references unknown bus {missing}")]
    UnknownBus { from: u64, to: u64, missing: u64 },
    #[error("case has no buses")]
    Empty,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tolerance(#[from] LyapunovError),
    #[error(transparent)]
    Gamma(#[from] GammaError),
    #[error("tolerance vector `{name}` has {got} entries, expected {expected}")]
    ToleranceLength {
        name: &'static str,
        got: usize,
        expected: usize,
    },
}

/// A loaded case: the model, its operating tolerances, and the original bus
/// ids in internal node order.
#[derive(Debug, Clone)]
pub struct CaseData {
    pub model: KuramotoModel,
    pub tolerances: ToleranceSet,
    pub bus_ids: Vec<u64>,
}

impl CaseData {
    /// Internal node index of a bus id.
    pub fn node_of_bus(&self, id: u64) -> Option<usize> {
        self.bus_ids.iter().position(|&b| b == id)
    }

    /// Canonical edge index of the line between two bus ids.
    pub fn edge_between_buses(&self, a: u64, b: u64) -> Option<usize> {
        let i = self.node_of_bus(a)?;
        let j = self.node_of_bus(b)?;
        self.model.network().edge_index(i, j)
    }

    /// Display label `from-to` (bus ids) of an edge.
    pub fn edge_label(&self, e: usize) -> String {
        let edge = self.model.network().edges()[e];
        format!("{}-{}", self.bus_ids[edge.i], self.bus_ids[edge.j])
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CaseFile {
    omega_star: f64,
    bus: Vec<BusEntry>,
    #[serde(default)]
    line: Vec<LineEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tolerances: Option<TolerancesEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BusEntry {
    id: u64,
    p_star: f64,
    d: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct LineEntry {
    from: u64,
    to: u64,
    a: f64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct TolerancesEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta_bar: Option<ScalarOrVec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma_bar_deg: Option<ScalarOrVec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_bar: Option<ScalarOrVec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r_bar: Option<ScalarOrVec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s_bar: Option<ScalarOrVec>,
}

/// A tolerance given either uniformly or entry by entry.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ScalarOrVec {
    Scalar(f64),
    Vec(Vec<f64>),
}

fn expand(
    field: &Option<ScalarOrVec>,
    name: &'static str,
    len: usize,
    default: f64,
) -> Result<Vec<f64>, IoError> {
    match field {
        None => Ok(vec![default; len]),
        Some(ScalarOrVec::Scalar(v)) => Ok(vec![*v; len]),
        Some(ScalarOrVec::Vec(v)) if v.len() == len => Ok(v.clone()),
        Some(ScalarOrVec::Vec(v)) => Err(IoError::ToleranceLength {
            name,
            got: v.len(),
            expected: len,
        }),
    }
}

/// Parses and validates a case document.
pub fn load_case_str(text: &str) -> Result<CaseData, IoError> {
    let file: CaseFile = toml::from_str(text)?;
    if file.bus.is_empty() {
        return Err(IoError::Empty);
    }
    // ascending bus id -> node index
    let mut by_id: BTreeMap<u64, &BusEntry> = BTreeMap::new();
    for b in &file.bus {
        if by_id.insert(b.id, b).is_some() {
            return Err(IoError::DuplicateBusId(b.id));
        }
    }
    let bus_ids: Vec<u64> = by_id.keys().copied().collect();
    let index_of = |id: u64| bus_ids.binary_search(&id).ok();
    let mut lines = Vec::with_capacity(file.line.len());
    for l in &file.line {
        let i = index_of(l.from).ok_or(IoError::UnknownBus {
            from: l.from,
            to: l.to,
            missing: l.from,
        })?;
        let j = index_of(l.to).ok_or(IoError::UnknownBus {
            from: l.from,
            to: l.to,
            missing: l.to,
        })?;
        lines.push((i, j, l.a));
    }
    let net = PowerNetwork::new(bus_ids.len(), &lines).map_err(ModelError::from)?;
    let m = net.edge_count();
    let n = bus_ids.len();
    let d: Vec<f64> = by_id.values().map(|b| b.d).collect();
    let p_star: Vec<f64> = by_id.values().map(|b| b.p_star).collect();
    let model = KuramotoModel::new(
        net,
        d,
        p_star,
        file.omega_star,
        FrequencyConvention::default(),
    )?;
    let tol_entry = file.tolerances.unwrap_or_default();
    let gamma_deg = expand(&tol_entry.gamma_bar_deg, "gamma_bar_deg", m, 90.0)?;
    let gamma_bar = GammaEnvelope::new(gamma_deg.iter().map(|g| g.to_radians()).collect())?;
    let tolerances = ToleranceSet::new(
        expand(&tol_entry.delta_bar, "delta_bar", n, f64::INFINITY)?,
        gamma_bar,
        expand(&tol_entry.p_bar, "p_bar", n, f64::INFINITY)?,
        expand(&tol_entry.r_bar, "r_bar", n, f64::INFINITY)?,
        expand(&tol_entry.s_bar, "s_bar", n, f64::INFINITY)?,
    )?;
    Ok(CaseData {
        model,
        tolerances,
        bus_ids,
    })
}

/// Loads a case from disk.
pub fn load_case(path: impl AsRef<Path>) -> Result<CaseData, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    load_case_str(&text)
}

/// Serializes a case back to the TOML format. Numeric fields survive a
/// round trip bit-for-bit (floats print in shortest round-trip form).
pub fn serialize_case(case: &CaseData) -> Result<String, IoError> {
    let model = &case.model;
    let bus: Vec<BusEntry> = case
        .bus_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| BusEntry {
            id,
            p_star: model.nominal_injection()[i],
            d: model.droop()[i],
        })
        .collect();
    let line: Vec<LineEntry> = model
        .network()
        .edges()
        .iter()
        .map(|e| LineEntry {
            from: case.bus_ids[e.i],
            to: case.bus_ids[e.j],
            a: e.weight,
        })
        .collect();
    let tol = &case.tolerances;
    let file = CaseFile {
        omega_star: model.omega_star(),
        bus,
        line,
        tolerances: Some(TolerancesEntry {
            delta_bar: Some(ScalarOrVec::Vec(tol.delta_bar.clone())),
            gamma_bar_deg: Some(ScalarOrVec::Vec(
                tol.gamma_bar.entries().iter().map(|g| g.to_degrees()).collect(),
            )),
            p_bar: Some(ScalarOrVec::Vec(tol.p_bar.clone())),
            r_bar: Some(ScalarOrVec::Vec(tol.r_bar.clone())),
            s_bar: Some(ScalarOrVec::Vec(tol.s_bar.clone())),
        }),
    };
    Ok(toml::to_string(&file)?)
}

/// Loads a standalone tolerance file: the same keys as the case-file
/// `[tolerances]` block, either bare at the top level or inside a
/// `[tolerances]` table. `n`/`m` are the node and edge counts the vectors
/// must match.
pub fn load_tolerances(path: impl AsRef<Path>, n: usize, m: usize) -> Result<ToleranceSet, IoError> {
    #[derive(Deserialize)]
    struct TolFile {
        #[serde(default)]
        tolerances: Option<TolerancesEntry>,
        #[serde(flatten)]
        bare: TolerancesEntry,
    }
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let file: TolFile = toml::from_str(&text)?;
    let entry = file.tolerances.unwrap_or(file.bare);
    let gamma_deg = expand(&entry.gamma_bar_deg, "gamma_bar_deg", m, 90.0)?;
    let gamma_bar = GammaEnvelope::new(gamma_deg.iter().map(|g| g.to_radians()).collect())?;
    Ok(ToleranceSet::new(
        expand(&entry.delta_bar, "delta_bar", n, f64::INFINITY)?,
        gamma_bar,
        expand(&entry.p_bar, "p_bar", n, f64::INFINITY)?,
        expand(&entry.r_bar, "r_bar", n, f64::INFINITY)?,
        expand(&entry.s_bar, "s_bar", n, f64::INFINITY)?,
    )?)
}

/// The bundled modified IEEE RTS 24-bus case.
pub fn bundled_rts24() -> CaseData {
    load_case_str(include_str!("../cases/ieee_rts24.toml")).expect("bundled case is valid")
}

/// Writes a trajectory as CSV with columns
/// `time, theta_1..theta_n, vdev_1..vdev_n, gap_e1..gap_em`.
pub fn write_trajectory_csv<W: Write>(w: &mut W, traj: &Trajectory) -> std::io::Result<()> {
    let n = traj.states.first().map_or(0, |s| s.len());
    let m = traj.edge_diffs.first().map_or(0, |d| d.len());
    let mut header = String::from("time");
    for i in 1..=n {
        write!(header, ",theta_{i}").unwrap();
    }
    for i in 1..=n {
        write!(header, ",vdev_{i}").unwrap();
    }
    for e in 1..=m {
        write!(header, ",gap_e{e}").unwrap();
    }
    writeln!(w, "{header}")?;
    for k in 0..traj.len() {
        let mut row = String::new();
        write!(row, "{}", traj.times[k]).unwrap();
        for &a in traj.states[k].angles() {
            write!(row, ",{a}").unwrap();
        }
        for &v in &traj.freq_dev[k].v {
            write!(row, ",{v}").unwrap();
        }
        for &g in &traj.edge_diffs[k] {
            write!(row, ",{g}").unwrap();
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}

/// Writes a margin curve as CSV with columns `alpha_deg, U_hz`.
pub fn write_margin_csv<W: Write>(w: &mut W, curve: &MarginCurve) -> std::io::Result<()> {
    writeln!(w, "alpha_deg,U_hz")?;
    for (a, v) in curve.alphas.iter().zip(&curve.values) {
        writeln!(w, "{},{}", a.to_degrees(), v)?;
    }
    Ok(())
}

/// Token marking a disconnecting contingency in the score matrix.
pub const DISCONNECTED_TOKEN: &str = "DISCONNECTED";

/// Writes the screening score matrix as CSV. Row/column headers are the
/// line labels; disconnecting entries carry the `DISCONNECTED` token.
pub fn write_scores_csv<W: Write>(
    w: &mut W,
    result: &ScreeningResult,
    labels: &[String],
) -> std::io::Result<()> {
    let m = labels.len();
    writeln!(w, "line,{}", labels.join(","))?;
    for e1 in 0..m {
        let mut row = labels[e1].clone();
        for e2 in 0..m {
            if result.disconnected[e1][e2] {
                write!(row, ",{DISCONNECTED_TOKEN}").unwrap();
            } else {
                write!(row, ",{}", result.scores[e1][e2]).unwrap();
            }
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}

/// Writes a certificate as an auditable key-value text with the per-face
/// optimum table. `labels` names each edge (one per edge, canonical order).
pub fn write_certificate<W: Write>(
    w: &mut W,
    cert: &Certificate,
    labels: &[String],
) -> std::io::Result<()> {
    writeln!(w, "winding_u = {:?}", cert.u.0)?;
    writeln!(w, "delta0_hz = {}", cert.delta0)?;
    writeln!(w, "v2_hz = {}", cert.v2)?;
    writeln!(w, "applicable = {}", cert.verdicts.applicable)?;
    writeln!(w, "p1_invariance = {}", cert.verdicts.p1)?;
    writeln!(w, "p2_frequency = {}", cert.verdicts.p2)?;
    writeln!(w, "p3_angle = {}", cert.verdicts.p3)?;
    writeln!(w, "p4_power = {}", cert.verdicts.p4)?;
    writeln!(w, "p5_ramping = {}", cert.verdicts.p5)?;
    writeln!(w, "p6_energy = {}", cert.verdicts.p6)?;
    let deg = |v: &[f64]| {
        v.iter()
            .map(|g| format!("{:.4}", g.to_degrees()))
            .collect::<Vec<_>>()
            .join(" ")
    };
    writeln!(w, "gamma_deg = [{}]", deg(cert.gamma.entries()))?;
    writeln!(w, "gamma0_deg = [{}]", deg(&cert.gamma0))?;
    writeln!(w, "faces:")?;
    writeln!(w, "line sign value_hz")?;
    for f in &cert.face_values {
        let label = labels
            .get(f.edge)
            .cloned()
            .unwrap_or_else(|| format!("e{}", f.edge));
        writeln!(w, "{label} {:+} {}", f.sign, f.value)?;
    }
    Ok(())
}
