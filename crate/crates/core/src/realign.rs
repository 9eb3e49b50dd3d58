//! Echo detection and shift-based realignment.
//!
//! A subset of rows carrying a motif one or more columns off its consensus
//! position leaves a copy of each strong dependency at the same offset and
//! category pair, displaced along the alignment: an echo. Matching rows
//! against the echoes tells how far each row is displaced, and translating
//! rows back consolidates the motif.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::alignment::{AlignmentMatrix, DEFAULT_GAP};
use crate::contingency::{all_pairs_scan, marginals, scan_pairs, DependencyEdge, EdgeKey, EdgeState};
use crate::error::{Error, Result};
use crate::metagraph::{FilterSpec, Metagraph};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EchoParams {
    /// Largest displacement considered, in columns.
    pub s_max: usize,
    /// Edges outside the visible set still join an echo as non-anchor
    /// members when positive and at least this significant.
    pub member_max_p: f64,
    /// Minimum summed |z| of the non-anchor members.
    pub min_echo_mass: f64,
}

impl Default for EchoParams {
    fn default() -> Self {
        Self {
            s_max: 3,
            member_max_p: 0.01,
            min_echo_mass: 4.0,
        }
    }
}

impl EchoParams {
    pub fn with_s_max(s_max: usize) -> Self {
        Self {
            s_max,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.s_max == 0 {
            return Err(Error::InvalidParameter("s_max must be at least 1".into()));
        }
        if !(self.member_max_p > 0.0 && self.member_max_p <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "member_max_p {} must lie in (0, 1]",
                self.member_max_p
            )));
        }
        let m = self.min_echo_mass;
        if !(m.is_finite() && m >= 0.0) {
            return Err(Error::InvalidParameter(format!("min_echo_mass {m} must be >= 0")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EchoMember {
    pub j: usize,
    pub k: usize,
    pub edge: DependencyEdge,
    /// Whether the edge passed the filter itself.
    pub visible: bool,
}

/// Displaced copies of one dependency: same category pair and offset, with
/// `j` advancing through a near-contiguous run.
#[derive(Clone, Debug, PartialEq)]
pub struct EchoGroup {
    pub cat_j: u8,
    pub cat_k: u8,
    pub offset: usize,
    /// Ascending by `j`.
    pub members: Vec<EchoMember>,
    /// Index of the strongest member, the group's reference position.
    pub anchor: usize,
    pub mass: f64,
}

impl EchoGroup {
    /// Group over the given column pairs of `graph`, all carrying
    /// `(cat_j, cat_k)`, anchored at the strongest one.
    pub fn from_pairs(graph: &Metagraph, cat_j: u8, cat_k: u8, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut members = Vec::with_capacity(pairs.len());
        for &(j, k) in pairs {
            let key = EdgeKey::new(j, cat_j, k, cat_k);
            let edge = graph.edge(&key).ok_or(Error::UnknownEdge(key))?.clone();
            members.push(EchoMember {
                j,
                k,
                edge,
                visible: true,
            });
        }
        members.sort_by_key(|m| m.j);
        let offset = members.first().map_or(0, |m| m.k - m.j);
        if members.iter().any(|m| m.k - m.j != offset) {
            return Err(Error::InvalidParameter("echo members must share one offset".into()));
        }
        let anchor = strongest(&members);
        let mass = members.iter().map(|m| m.edge.std_residual.abs()).sum();
        Ok(Self {
            cat_j,
            cat_k,
            offset,
            members,
            anchor,
            mass,
        })
    }

    pub fn anchor_member(&self) -> Option<&EchoMember> {
        self.members.get(self.anchor)
    }

    pub fn to_document(&self, graph_alphabet: &crate::alignment::Alphabet) -> Value {
        let members: Vec<Value> = self
            .members
            .iter()
            .map(|m| {
                json!({
                    "j": m.j,
                    "k": m.k,
                    "observed": m.edge.observed,
                    "expected": m.edge.expected,
                    "raw": m.edge.raw_residual,
                    "z": m.edge.std_residual,
                    "p": m.edge.p_value,
                    "visible": m.visible,
                })
            })
            .collect();
        json!({
            "cat_j": graph_alphabet.symbol(self.cat_j).to_string(),
            "cat_k": graph_alphabet.symbol(self.cat_k).to_string(),
            "offset": self.offset,
            "mass": self.mass,
            "anchor": self.anchor_member().map(|m| m.edge.key.label(graph_alphabet)),
            "members": members,
        })
    }
}

fn strongest(members: &[EchoMember]) -> usize {
    let mut best = 0;
    for (i, m) in members.iter().enumerate() {
        if m.edge.std_residual.abs() > members[best].edge.std_residual.abs() {
            best = i;
        }
    }
    best
}

/// Echo groups among the edges visible under `spec`, strongest first.
///
/// Each positive visible edge, taken in descending `z`, anchors a candidate
/// group; displaced copies `(j+d, M, k+d, N)` with `|d| <= s_max` join it
/// when positive and either visible or significant at `member_max_p`. The
/// members kept form the near-contiguous run through the anchor, within a
/// window of `s_max + 1` positions, carrying the most residual mass. An edge
/// belongs to at most one group.
pub fn detect_echoes(graph: &Metagraph, spec: &FilterSpec, params: &EchoParams) -> Result<Vec<EchoGroup>> {
    params.validate()?;
    spec.validate()?;
    let visible = graph.apply_filter(spec);
    let visible_keys: HashSet<EdgeKey> = visible.edges.iter().map(|e| e.key).collect();
    let mut anchors: Vec<&DependencyEdge> = visible
        .edges
        .iter()
        .filter(|e| e.raw_residual > 0.0 && e.std_residual > 0.0)
        .collect();
    anchors.sort_by(|a, b| b.std_residual.total_cmp(&a.std_residual).then(a.key.cmp(&b.key)));

    let s = params.s_max as i64;
    let len = graph.n_nodes() as i64;
    let mut used: HashSet<EdgeKey> = HashSet::new();
    let mut groups = Vec::new();
    for anchor in anchors {
        let a = anchor.key;
        if used.contains(&a) {
            continue;
        }
        let mut cand: BTreeMap<i64, (&DependencyEdge, bool)> = BTreeMap::new();
        cand.insert(0, (graph.edge(&a).expect("visible edge exists"), true));
        for d in -s..=s {
            let (j, k) = (a.j as i64 + d, a.k as i64 + d);
            if d == 0 || j < 0 || k >= len {
                continue;
            }
            let key = EdgeKey::new(j as usize, a.cat_j, k as usize, a.cat_k);
            let Some(e) = graph.edge(&key) else { continue };
            if used.contains(&key) || e.state == EdgeState::Removed || e.raw_residual <= 0.0 {
                continue;
            }
            let vis = visible_keys.contains(&key);
            if vis || e.p_value <= params.member_max_p {
                cand.insert(d, (e, vis));
            }
        }

        let mut best: Option<(f64, Vec<i64>)> = None;
        for lo in -s..=0 {
            let hi = lo + s;
            let mut right = vec![0i64];
            for &d in cand.keys().filter(|&&d| d > 0 && d <= hi) {
                if d - right[right.len() - 1] <= 2 {
                    right.push(d);
                } else {
                    break;
                }
            }
            let mut left = Vec::new();
            let mut last = 0;
            for &d in cand.keys().rev().filter(|&&d| d < 0 && d >= lo) {
                if last - d <= 2 {
                    left.push(d);
                    last = d;
                } else {
                    break;
                }
            }
            left.reverse();
            left.extend(right);
            let mass: f64 = left.iter().map(|d| cand[d].0.std_residual).sum();
            if best.as_ref().map_or(true, |(m, _)| mass > *m) {
                best = Some((mass, left));
            }
        }
        let (mass, ds) = best.expect("window search ran");
        if ds.len() < 2 || mass - anchor.std_residual < params.min_echo_mass {
            continue;
        }
        let members: Vec<EchoMember> = ds
            .iter()
            .map(|d| {
                let (e, vis) = cand[d];
                used.insert(e.key);
                EchoMember {
                    j: e.key.j,
                    k: e.key.k,
                    edge: e.clone(),
                    visible: vis,
                }
            })
            .collect();
        let anchor_idx = ds.iter().position(|&d| d == 0).expect("anchor in run");
        groups.push(EchoGroup {
            cat_j: a.cat_j,
            cat_k: a.cat_k,
            offset: a.k - a.j,
            members,
            anchor: anchor_idx,
            mass,
        });
    }
    groups.sort_by(|x, y| y.mass.total_cmp(&x.mass));
    Ok(groups)
}

/// Per-row displacement: row `i` carries the motif `shifts[i]` columns to
/// the right of the reference position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShiftAssignment {
    pub shifts: Vec<i32>,
    pub s_max: usize,
    pub pad: char,
}

impl ShiftAssignment {
    /// Analyst-chosen shifts, checked against the matrix and bound.
    pub fn manual(matrix: &AlignmentMatrix, shifts: Vec<i32>, s_max: usize) -> Result<Self> {
        if shifts.len() != matrix.n_rows() {
            return Err(Error::LengthMismatch {
                expected: matrix.n_rows(),
                found: shifts.len(),
            });
        }
        if let Some(s) = shifts.iter().find(|s| s.unsigned_abs() as usize > s_max) {
            return Err(Error::InvalidParameter(format!("shift {s} exceeds s_max {s_max}")));
        }
        Ok(Self {
            shifts,
            s_max,
            pad: matrix.alphabet().gap().unwrap_or(DEFAULT_GAP),
        })
    }

    pub fn is_identity(&self) -> bool {
        self.shifts.iter().all(|&s| s == 0)
    }

    pub fn histogram(&self) -> BTreeMap<i32, usize> {
        let mut h = BTreeMap::new();
        for &s in &self.shifts {
            *h.entry(s).or_insert(0) += 1;
        }
        h
    }
}

/// Chooses each row's shift in `[-s_max, s_max]` to maximize agreement with
/// the groups' anchors: a row agrees with a group at shift `d` when it
/// carries `M` at `j + d` and `N` at `k + d`, weighted by the anchor's `z`.
/// Ties go to 0, then to the smaller `|d|`, then to the negative side.
pub fn assign_shifts(matrix: &AlignmentMatrix, groups: &[EchoGroup], s_max: usize) -> Result<ShiftAssignment> {
    if groups.is_empty() {
        return Err(Error::AmbiguousAnchor);
    }
    let mut anchors = Vec::with_capacity(groups.len());
    for g in groups {
        let a = g.anchor_member().ok_or(Error::AmbiguousAnchor)?;
        anchors.push((a.j as i64, g.cat_j, a.k as i64, g.cat_k, a.edge.std_residual.abs()));
    }
    let s = s_max as i64;
    let mut order: Vec<i64> = (-s..=s).collect();
    order.sort_by_key(|d| (d.abs(), *d));
    let len = matrix.n_cols() as i64;
    let shifts = (0..matrix.n_rows())
        .into_par_iter()
        .map(|i| {
            let row = matrix.row(i);
            let mut best = (f64::NEG_INFINITY, 0i64);
            for &d in &order {
                let agreement: f64 = anchors
                    .iter()
                    .filter(|&&(j, m, k, n, _)| {
                        let (jd, kd) = (j + d, k + d);
                        jd >= 0 && kd < len && row[jd as usize] == m && row[kd as usize] == n
                    })
                    .map(|a| a.4)
                    .sum();
                if agreement > best.0 {
                    best = (agreement, d);
                }
            }
            best.1 as i32
        })
        .collect();
    Ok(ShiftAssignment {
        shifts,
        s_max,
        pad: matrix.alphabet().gap().unwrap_or(DEFAULT_GAP),
    })
}

/// Translates row `i` left by `shifts[i]` (right for negative shifts),
/// padding vacated cells with the gap symbol. A gap category is added to
/// the alphabet when any row moves and none exists.
pub fn apply_shifts(matrix: &AlignmentMatrix, assignment: &ShiftAssignment) -> AlignmentMatrix {
    assert_eq!(assignment.shifts.len(), matrix.n_rows(), "one shift per row");
    if assignment.is_identity() {
        return matrix.clone();
    }
    let alphabet = matrix.alphabet().with_gap(assignment.pad);
    let pad = alphabet.gap_code().expect("gap present");
    let l = matrix.n_cols();
    let mut cells = vec![pad; matrix.n_rows() * l];
    for (i, &s) in assignment.shifts.iter().enumerate() {
        let row = matrix.row(i);
        let out = &mut cells[i * l..(i + 1) * l];
        for (c, cell) in out.iter_mut().enumerate() {
            let src = c as i64 + s as i64;
            if (0..l as i64).contains(&src) {
                *cell = row[src as usize];
            }
        }
    }
    matrix.replace_cells(cells, alphabet)
}

/// Sum of |z| over edges passing `spec`, computed without keeping edges.
pub fn phi(matrix: &AlignmentMatrix, spec: &FilterSpec) -> f64 {
    let marg = marginals(matrix);
    let mut total = 0.0;
    scan_pairs(matrix, &marg, |pair| {
        total += pair
            .edges
            .iter()
            .filter(|e| spec.passes(e))
            .map(|e| e.std_residual.abs())
            .sum::<f64>();
    });
    total
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    /// Objective of the matrix entering the round.
    pub phi: f64,
    pub echoes: Vec<EchoGroup>,
    pub shifts_applied: BTreeMap<i32, usize>,
    /// Objective after applying this round's shifts, when any moved.
    pub phi_after: Option<f64>,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RealignReport {
    pub rounds: Vec<RoundRecord>,
    pub initial_phi: f64,
    pub final_phi: f64,
    /// Net shift applied to each row over all accepted rounds.
    pub shifts: Vec<i32>,
    pub pad: char,
}

impl RealignReport {
    /// Objective entering each round, then the final value.
    pub fn phi_history(&self) -> Vec<f64> {
        let mut h: Vec<f64> = self.rounds.iter().map(|r| r.phi).collect();
        if self.rounds.last().map_or(true, |r| r.accepted) {
            h.push(self.final_phi);
        }
        h
    }

    pub fn to_document(&self, alphabet: &crate::alignment::Alphabet) -> Value {
        let rounds: Vec<Value> = self
            .rounds
            .iter()
            .map(|r| {
                let hist: serde_json::Map<String, Value> = r
                    .shifts_applied
                    .iter()
                    .map(|(s, c)| (s.to_string(), json!(c)))
                    .collect();
                json!({
                    "phi": r.phi,
                    "phi_after": r.phi_after,
                    "accepted": r.accepted,
                    "echoes": r.echoes.iter().map(|g| g.to_document(alphabet)).collect::<Vec<_>>(),
                    "shifts_applied": hist,
                })
            })
            .collect();
        json!({
            "rounds": rounds,
            "initial_phi": self.initial_phi,
            "final_phi": self.final_phi,
            "shifts": self.shifts,
            "pad": self.pad.to_string(),
        })
    }
}

/// Repeats detect, assign and apply while the objective strictly increases.
/// A round whose shifts would not raise the objective is recorded and
/// discarded.
pub fn realign_iterate(
    matrix: &AlignmentMatrix,
    spec: &FilterSpec,
    params: &EchoParams,
    max_rounds: usize,
) -> Result<(AlignmentMatrix, RealignReport)> {
    if max_rounds == 0 {
        return Err(Error::InvalidParameter("max_rounds must be at least 1".into()));
    }
    params.validate()?;
    spec.validate()?;
    let mut current = matrix.clone();
    let mut current_phi = phi(&current, spec);
    let initial_phi = current_phi;
    let mut total = vec![0i32; matrix.n_rows()];
    let mut rounds = Vec::new();
    let mut pad = matrix.alphabet().gap().unwrap_or(DEFAULT_GAP);
    for _ in 0..max_rounds {
        let graph = Metagraph::build(all_pairs_scan(&current), marginals(&current))?;
        let echoes = detect_echoes(&graph, spec, params)?;
        let mut record = RoundRecord {
            phi: current_phi,
            echoes,
            shifts_applied: BTreeMap::new(),
            phi_after: None,
            accepted: false,
        };
        if record.echoes.is_empty() {
            rounds.push(record);
            break;
        }
        let assignment = assign_shifts(&current, &record.echoes, params.s_max)?;
        record.shifts_applied = assignment.histogram();
        if assignment.is_identity() {
            rounds.push(record);
            break;
        }
        let next = apply_shifts(&current, &assignment);
        let next_phi = phi(&next, spec);
        record.phi_after = Some(next_phi);
        record.accepted = next_phi > current_phi;
        let accepted = record.accepted;
        rounds.push(record);
        if !accepted {
            break;
        }
        for (t, s) in total.iter_mut().zip(&assignment.shifts) {
            *t += s;
        }
        pad = assignment.pad;
        current = next;
        current_phi = next_phi;
    }
    Ok((
        current,
        RealignReport {
            rounds,
            initial_phi,
            final_phi: current_phi,
            shifts: total,
            pad,
        },
    ))
}

/// Applies analyst-chosen shifts in a single round, reporting the objective
/// before and after. The round is applied whatever the objective does.
pub fn realign_manual(
    matrix: &AlignmentMatrix,
    spec: &FilterSpec,
    shifts: Vec<i32>,
    s_max: usize,
) -> Result<(AlignmentMatrix, RealignReport)> {
    spec.validate()?;
    let assignment = ShiftAssignment::manual(matrix, shifts, s_max)?;
    let before = phi(matrix, spec);
    let next = apply_shifts(matrix, &assignment);
    let after = phi(&next, spec);
    Ok((
        next,
        RealignReport {
            rounds: vec![RoundRecord {
                phi: before,
                echoes: Vec::new(),
                shifts_applied: assignment.histogram(),
                phi_after: Some(after),
                accepted: true,
            }],
            initial_phi: before,
            final_phi: after,
            shifts: assignment.shifts.clone(),
            pad: assignment.pad,
        },
    ))
}
