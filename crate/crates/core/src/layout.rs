//! Cylinder embedding: one categorical axis per column arrayed around a
//! cylinder, categories at fixed heights, glyphs sized by marginal weight
//! and dependency edges as straight chords.

use std::collections::HashMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metagraph::{document_string, Metagraph, VisibleSubgraph};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutParams {
    pub radius: f64,
    pub height_step: f64,
    pub glyph_scale: f64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            radius: 10.0,
            height_step: 1.0,
            glyph_scale: 1.0,
        }
    }
}

impl LayoutParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("radius", self.radius),
            ("height_step", self.height_step),
            ("glyph_scale", self.glyph_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} {v} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub index: usize,
    pub angle: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Glyph {
    pub j: usize,
    pub cat: String,
    /// Category code; doubles as the color index.
    pub color: u8,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEdge {
    pub key: String,
    pub x1: f64,
    pub y1: f64,
    pub z1: f64,
    pub x2: f64,
    pub y2: f64,
    pub z2: f64,
    pub width: f64,
    pub sign: String,
    pub cycle_id: Option<usize>,
}

impl SceneEdge {
    fn start(&self) -> [f64; 3] {
        [self.x1, self.y1, self.z1]
    }

    fn end(&self) -> [f64; 3] {
        [self.x2, self.y2, self.z2]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderScene {
    pub params: LayoutParams,
    /// Category heights by code, shared by every axis.
    pub heights: Vec<f64>,
    pub axes: Vec<Axis>,
    pub glyphs: Vec<Glyph>,
    pub edges: Vec<SceneEdge>,
    /// Number of edges whose endpoint heights were nudged to break a
    /// colinear overlap.
    pub jittered_edges: usize,
}

pub fn axis_angle(j: usize, len: usize) -> f64 {
    TAU * j as f64 / len as f64
}

pub fn compute_layout(graph: &Metagraph, sub: &VisibleSubgraph, params: &LayoutParams) -> Result<CylinderScene> {
    params.validate()?;
    let len = graph.n_nodes();
    let alphabet = graph.alphabet();
    let heights: Vec<f64> = (0..alphabet.n_categories())
        .map(|c| params.height_step * c as f64)
        .collect();
    let axes: Vec<Axis> = (0..len)
        .map(|j| Axis {
            index: j,
            angle: axis_angle(j, len),
        })
        .collect();
    let position = |j: usize, cat: u8| -> [f64; 3] {
        let a = axes[j].angle;
        [params.radius * a.cos(), heights[cat as usize], params.radius * a.sin()]
    };
    let mut glyphs = Vec::new();
    for j in 0..len {
        for (cat, w) in graph.subnodes(j) {
            let [x, y, z] = position(j, cat);
            glyphs.push(Glyph {
                j,
                cat: alphabet.symbol(cat).to_string(),
                color: cat,
                x,
                y,
                z,
                r: params.glyph_scale * w.sqrt(),
            });
        }
    }
    let n = graph.n_rows().max(1) as f64;
    let edges = sub
        .edges
        .iter()
        .zip(&sub.cycle_labels)
        .map(|(e, &cycle_id)| {
            let [x1, y1, z1] = position(e.key.j, e.key.cat_j);
            let [x2, y2, z2] = position(e.key.k, e.key.cat_k);
            let sign = if e.raw_residual > 0.0 {
                "positive"
            } else if e.raw_residual < 0.0 {
                "negative"
            } else {
                "zero"
            };
            SceneEdge {
                key: e.key.label(alphabet),
                x1,
                y1,
                z1,
                x2,
                y2,
                z2,
                width: params.glyph_scale * e.raw_residual.abs() / n,
                sign: sign.to_string(),
                cycle_id,
            }
        })
        .collect();
    let mut scene = CylinderScene {
        params: *params,
        heights,
        axes,
        glyphs,
        edges,
        jittered_edges: 0,
    };
    scene.separate_colinear();
    Ok(scene)
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

const PARALLEL_TOL: f64 = 1e-9;

fn unit(a: [f64; 3]) -> Option<[f64; 3]> {
    let l = norm(a);
    (l > 0.0).then(|| [a[0] / l, a[1] / l, a[2] / l])
}

fn same_point(a: [f64; 3], b: [f64; 3]) -> bool {
    a == b
}

/// Whether two segments lie on one line (within tolerance) with
/// overlapping extents. Segments sharing an endpoint never count.
pub fn colinear_overlap(p1: [f64; 3], p2: [f64; 3], q1: [f64; 3], q2: [f64; 3]) -> bool {
    if same_point(p1, q1) || same_point(p1, q2) || same_point(p2, q1) || same_point(p2, q2) {
        return false;
    }
    let (Some(u), Some(v)) = (unit(sub3(p2, p1)), unit(sub3(q2, q1))) else {
        return false;
    };
    if norm(cross(u, v)) > PARALLEL_TOL {
        return false;
    }
    let scale = norm(sub3(p2, p1)).max(norm(sub3(q2, q1)));
    // q1 must lie on the line through p1 along u
    let off = sub3(q1, p1);
    if norm(cross(off, u)) > PARALLEL_TOL * scale.max(1.0) {
        return false;
    }
    let (a0, a1) = (0.0f64, dot(sub3(p2, p1), u));
    let (b0, b1) = (dot(sub3(q1, p1), u), dot(sub3(q2, p1), u));
    let (bl, bh) = (b0.min(b1), b0.max(b1));
    a0.max(bl) < a1.min(bh)
}

/// Reference direction for choosing a sign; no lattice direction is
/// orthogonal to it.
const SIGN_REF: [f64; 3] = [0.577_215_664_9, 0.618_033_988_7, 0.531_128_874_1];
const BUCKET: f64 = 1e-6;

fn bucket_of(d: [f64; 3]) -> [i64; 3] {
    [
        (d[0] / BUCKET).floor() as i64,
        (d[1] / BUCKET).floor() as i64,
        (d[2] / BUCKET).floor() as i64,
    ]
}

impl CylinderScene {
    /// All pairs of edges that overlap colinearly. Candidates are found by
    /// bucketing edge directions, so near-parallel pairs are the only ones
    /// examined in full.
    pub fn colinear_pairs(&self) -> Vec<(usize, usize)> {
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        let mut dirs = Vec::with_capacity(self.edges.len());
        for (i, e) in self.edges.iter().enumerate() {
            let d = unit(sub3(e.end(), e.start())).map(|d| {
                if dot(d, SIGN_REF) < 0.0 {
                    [-d[0], -d[1], -d[2]]
                } else {
                    d
                }
            });
            if let Some(d) = d {
                buckets.entry(bucket_of(d)).or_default().push(i);
            }
            dirs.push(d);
        }
        let mut out = Vec::new();
        for (i, d) in dirs.iter().enumerate() {
            let Some(d) = *d else { continue };
            let mut seen: Vec<usize> = Vec::new();
            for probe in [d, [-d[0], -d[1], -d[2]]] {
                let b = bucket_of(probe);
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            if let Some(list) = buckets.get(&[b[0] + dx, b[1] + dy, b[2] + dz]) {
                                seen.extend(list.iter().copied().filter(|&o| o > i));
                            }
                        }
                    }
                }
            }
            seen.sort_unstable();
            seen.dedup();
            let a = &self.edges[i];
            for o in seen {
                let b = &self.edges[o];
                if colinear_overlap(a.start(), a.end(), b.start(), b.end()) {
                    out.push((i, o));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Exhaustive reference check over every pair.
    pub fn colinear_pairs_exhaustive(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.edges.len() {
            for o in (i + 1)..self.edges.len() {
                let (a, b) = (&self.edges[i], &self.edges[o]);
                if colinear_overlap(a.start(), a.end(), b.start(), b.end()) {
                    out.push((i, o));
                }
            }
        }
        out
    }

    /// Nudges endpoint heights of the later edge in each colinear pair by
    /// `1e-6 * height_step` in opposite directions, tilting it off the
    /// shared line, until no pair remains.
    pub fn separate_colinear(&mut self) {
        let eps = 1e-6 * self.params.height_step;
        for _ in 0..64 {
            let pairs = self.colinear_pairs();
            if pairs.is_empty() {
                return;
            }
            let mut moved: Vec<usize> = pairs.into_iter().map(|(_, b)| b).collect();
            moved.sort_unstable();
            moved.dedup();
            for b in moved {
                let e = &mut self.edges[b];
                e.y1 += eps;
                e.y2 -= eps;
                self.jittered_edges += 1;
            }
        }
    }

    pub fn to_json(&self) -> String {
        document_string(&serde_json::to_value(self).expect("serializable scene"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::SchemaViolation(e.to_string()))
    }
}
