//! The node/subnode dependency graph: filter state, pin/remove edits and
//! node-level cycle detection.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::alignment::Alphabet;
use crate::contingency::{DependencyEdge, EdgeKey, EdgeSet, EdgeState, MarginalProfile};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignFilter {
    #[default]
    Both,
    Positive,
    Negative,
}

impl SignFilter {
    pub fn as_str(&self) -> &'static str {
        match self {
            SignFilter::Both => "both",
            SignFilter::Positive => "positive",
            SignFilter::Negative => "negative",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(SignFilter::Both),
            "positive" => Ok(SignFilter::Positive),
            "negative" => Ok(SignFilter::Negative),
            other => Err(Error::InvalidFilter(format!("unknown sign {other:?}"))),
        }
    }

    fn admits(&self, raw: f64) -> bool {
        match self {
            SignFilter::Both => true,
            SignFilter::Positive => raw > 0.0,
            SignFilter::Negative => raw < 0.0,
        }
    }
}

/// Edge thresholds. The default shows everything.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub min_abs_std_residual: f64,
    pub max_p: f64,
    pub min_abs_raw: f64,
    pub sign: SignFilter,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            min_abs_std_residual: 0.0,
            max_p: 1.0,
            min_abs_raw: 0.0,
            sign: SignFilter::Both,
        }
    }
}

impl FilterSpec {
    pub fn new(min_abs_std_residual: f64, max_p: f64) -> Result<Self> {
        let spec = Self {
            min_abs_std_residual,
            max_p,
            ..Self::default()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidFilter(msg));
        if !(self.min_abs_std_residual.is_finite() && self.min_abs_std_residual >= 0.0) {
            return bad(format!("min_abs_std_residual {} must be finite and >= 0", self.min_abs_std_residual));
        }
        if !(self.max_p.is_finite() && self.max_p > 0.0 && self.max_p <= 1.0) {
            return bad(format!("max_p {} must lie in (0, 1]", self.max_p));
        }
        if !(self.min_abs_raw.is_finite() && self.min_abs_raw >= 0.0) {
            return bad(format!("min_abs_raw {} must be finite and >= 0", self.min_abs_raw));
        }
        Ok(())
    }

    /// Threshold test alone, ignoring pins and removals.
    pub fn passes(&self, e: &DependencyEdge) -> bool {
        e.std_residual.abs() >= self.min_abs_std_residual
            && e.p_value <= self.max_p
            && e.raw_residual.abs() >= self.min_abs_raw
            && self.sign.admits(e.raw_residual)
    }

    /// True when every edge passing `other` also passes `self`.
    pub fn at_least_as_permissive_as(&self, other: &FilterSpec) -> bool {
        self.min_abs_std_residual <= other.min_abs_std_residual
            && self.max_p >= other.max_p
            && self.min_abs_raw <= other.min_abs_raw
            && (self.sign == SignFilter::Both || self.sign == other.sign)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditAction {
    Pin,
    Remove,
    Reset,
}

impl EditAction {
    pub fn as_str(&self) -> &'static str {
        match self {
            EditAction::Pin => "pin",
            EditAction::Remove => "remove",
            EditAction::Reset => "reset",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pin" => Ok(EditAction::Pin),
            "remove" => Ok(EditAction::Remove),
            "reset" => Ok(EditAction::Reset),
            other => Err(Error::SchemaViolation(format!("unknown edit action {other:?}"))),
        }
    }

    fn target(&self) -> EdgeState {
        match self {
            EditAction::Pin => EdgeState::Pinned,
            EditAction::Remove => EdgeState::Removed,
            EditAction::Reset => EdgeState::Normal,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EditRecord {
    pub key: EdgeKey,
    pub action: EditAction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metagraph {
    marginals: MarginalProfile,
    edges: Vec<DependencyEdge>,
    index: HashMap<EdgeKey, usize>,
    filter: FilterSpec,
    edit_log: Vec<EditRecord>,
}

impl Metagraph {
    /// Builds the graph from a scan of the same matrix as `marg`. Edges are
    /// taken in key order; states other than normal are recorded as edits.
    pub fn build(edges: EdgeSet, marg: MarginalProfile) -> Result<Self> {
        Self::from_parts(marg, edges.edges, FilterSpec::default(), Vec::new())
    }

    fn from_parts(
        marginals: MarginalProfile,
        mut edges: Vec<DependencyEdge>,
        filter: FilterSpec,
        mut edit_log: Vec<EditRecord>,
    ) -> Result<Self> {
        filter.validate()?;
        edges.sort_by_key(|e| e.key);
        let len = marginals.n_cols();
        let k = marginals.alphabet().n_categories();
        let mut index = HashMap::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            let key = e.key;
            if key.j >= key.k || key.k >= len {
                return Err(Error::InconsistentInputs(format!(
                    "edge {key} does not join two distinct columns of {len}"
                )));
            }
            if key.cat_j as usize >= k || key.cat_k as usize >= k {
                return Err(Error::InconsistentInputs(format!("edge {key} outside alphabet")));
            }
            if marginals.count(key.j, key.cat_j) == 0 || marginals.count(key.k, key.cat_k) == 0 {
                return Err(Error::InconsistentInputs(format!(
                    "edge {key} references a zero-weight subnode"
                )));
            }
            if index.insert(key, i).is_some() {
                return Err(Error::SchemaViolation(format!("duplicate edge {key}")));
            }
        }
        // Carry edge states that arrive without a log into the log itself,
        // so replay from pristine always reproduces them.
        let mut graph = Self {
            marginals,
            edges,
            index,
            filter,
            edit_log: Vec::new(),
        };
        let mut implied = Vec::new();
        let expected_states = graph.edges.iter().map(|e| e.state).collect::<Vec<_>>();
        for e in graph.edges.iter_mut() {
            e.state = EdgeState::Normal;
        }
        for rec in &edit_log {
            graph.apply_edit(rec.key, rec.action)?;
        }
        if edit_log.is_empty() {
            for (i, state) in expected_states.iter().enumerate() {
                let action = match state {
                    EdgeState::Normal => continue,
                    EdgeState::Pinned => EditAction::Pin,
                    EdgeState::Removed => EditAction::Remove,
                };
                implied.push(EditRecord {
                    key: graph.edges[i].key,
                    action,
                });
            }
            for rec in &implied {
                graph.apply_edit(rec.key, rec.action)?;
            }
            edit_log = implied;
        } else {
            let replayed: Vec<EdgeState> = graph.edges.iter().map(|e| e.state).collect();
            if replayed != expected_states {
                return Err(Error::SchemaViolation(
                    "edge states disagree with the edit log".into(),
                ));
            }
        }
        graph.edit_log = edit_log;
        Ok(graph)
    }

    pub fn marginals(&self) -> &MarginalProfile {
        &self.marginals
    }

    pub fn alphabet(&self) -> &Alphabet {
        self.marginals.alphabet()
    }

    pub fn n_nodes(&self) -> usize {
        self.marginals.n_cols()
    }

    pub fn n_rows(&self) -> usize {
        self.marginals.n_rows()
    }

    /// Categories with nonzero weight at column `j`, as `(code, weight)`.
    pub fn subnodes(&self, j: usize) -> Vec<(u8, f64)> {
        self.marginals.freqs()[j]
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(c, &w)| (c as u8, w))
            .collect()
    }

    pub fn edges(&self) -> &[DependencyEdge] {
        &self.edges
    }

    pub fn edge(&self, key: &EdgeKey) -> Option<&DependencyEdge> {
        self.index.get(key).map(|&i| &self.edges[i])
    }

    pub fn filter(&self) -> &FilterSpec {
        &self.filter
    }

    pub fn set_filter(&mut self, spec: FilterSpec) -> Result<()> {
        spec.validate()?;
        self.filter = spec;
        Ok(())
    }

    pub fn edit_log(&self) -> &[EditRecord] {
        &self.edit_log
    }

    fn apply_edit(&mut self, key: EdgeKey, action: EditAction) -> Result<()> {
        let &i = self.index.get(&key).ok_or(Error::UnknownEdge(key))?;
        self.edges[i].state = action.target();
        Ok(())
    }

    /// Sets an edge's state and appends the action to the edit log.
    pub fn edit_edge(&mut self, key: EdgeKey, action: EditAction) -> Result<()> {
        self.apply_edit(key, action)?;
        self.edit_log.push(EditRecord { key, action });
        Ok(())
    }

    /// Edge states obtained by replaying the edit log on a pristine graph.
    pub fn replay(&self) -> Result<Metagraph> {
        let mut edges = self.edges.clone();
        for e in &mut edges {
            e.state = EdgeState::Normal;
        }
        let mut g = Metagraph {
            edges,
            edit_log: Vec::new(),
            ..self.clone()
        };
        for rec in &self.edit_log {
            g.edit_edge(rec.key, rec.action)?;
        }
        Ok(g)
    }

    pub fn is_visible(&self, e: &DependencyEdge, spec: &FilterSpec) -> bool {
        match e.state {
            EdgeState::Removed => false,
            EdgeState::Pinned => true,
            EdgeState::Normal => spec.passes(e),
        }
    }

    /// Visible subgraph under the graph's own filter.
    pub fn visible(&self) -> VisibleSubgraph {
        self.apply_filter(&self.filter)
    }

    pub fn apply_filter(&self, spec: &FilterSpec) -> VisibleSubgraph {
        let edges: Vec<DependencyEdge> = self
            .edges
            .iter()
            .filter(|e| self.is_visible(e, spec))
            .cloned()
            .collect();
        let cycle_labels = detect_cycles(&edges);
        VisibleSubgraph {
            filter: *spec,
            edges,
            cycle_labels,
        }
    }

    pub fn pinned_edges(&self) -> Vec<&DependencyEdge> {
        self.edges
            .iter()
            .filter(|e| e.state == EdgeState::Pinned)
            .collect()
    }

    /// JSON graph document. `filter` overrides the stored filter in the
    /// output when given.
    pub fn to_document(&self, filter: Option<&FilterSpec>) -> Value {
        let alphabet = self.alphabet();
        let nodes: Vec<Value> = (0..self.n_nodes())
            .map(|j| {
                let subnodes: Vec<Value> = self
                    .subnodes(j)
                    .into_iter()
                    .map(|(c, w)| {
                        json!({
                            "cat": alphabet.symbol(c).to_string(),
                            "weight": w,
                            "count": self.marginals.count(j, c),
                        })
                    })
                    .collect();
                json!({"index": j, "subnodes": subnodes})
            })
            .collect();
        let edges: Vec<Value> = self.edges.iter().map(|e| edge_json(e, alphabet)).collect();
        let log: Vec<Value> = self
            .edit_log
            .iter()
            .map(|r| {
                json!({
                    "key": r.key.label(alphabet),
                    "action": r.action.as_str(),
                })
            })
            .collect();
        json!({
            "n_rows": self.n_rows(),
            "alphabet": alphabet_json(alphabet),
            "nodes": nodes,
            "edges": edges,
            "filter": filter.unwrap_or(&self.filter),
            "edit_log": log,
        })
    }

    pub fn to_json(&self) -> String {
        document_string(&self.to_document(None))
    }

    pub fn from_document(doc: &Value) -> Result<Self> {
        let bad = |m: &str| Error::SchemaViolation(m.to_string());
        let obj = doc.as_object().ok_or_else(|| bad("graph document must be an object"))?;
        let n = obj
            .get("n_rows")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad("n_rows missing"))? as usize;
        let alphabet = alphabet_from_json(obj.get("alphabet").ok_or_else(|| bad("alphabet missing"))?)?;
        let code = |v: Option<&Value>| -> Result<u8> {
            let s = v.and_then(Value::as_str).ok_or_else(|| bad("category must be a string"))?;
            let mut it = s.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => alphabet.code(c).ok_or(Error::UnknownSymbol(c)),
                _ => Err(bad("category must be one character")),
            }
        };
        let nodes = obj
            .get("nodes")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("nodes missing"))?;
        let k = alphabet.n_categories();
        let mut counts = Vec::with_capacity(nodes.len());
        for (j, node) in nodes.iter().enumerate() {
            if node.get("index").and_then(Value::as_u64) != Some(j as u64) {
                return Err(bad("node indices must be 0..L in order"));
            }
            let mut col = vec![0u32; k];
            for sub in node
                .get("subnodes")
                .and_then(Value::as_array)
                .ok_or_else(|| bad("subnodes missing"))?
            {
                let c = code(sub.get("cat"))?;
                let count = sub
                    .get("count")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| bad("subnode count missing"))?;
                if col[c as usize] != 0 {
                    return Err(bad("duplicate subnode"));
                }
                col[c as usize] = u32::try_from(count).map_err(|_| bad("subnode count too large"))?;
            }
            counts.push(col);
        }
        let marginals = MarginalProfile::from_counts(n, alphabet.clone(), counts)
            .map_err(|e| Error::SchemaViolation(e.to_string()))?;
        let mut edges = Vec::new();
        for e in obj
            .get("edges")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("edges missing"))?
        {
            let int = |name: &str| -> Result<u64> {
                e.get(name)
                    .and_then(Value::as_u64)
                    .ok_or_else(|| Error::SchemaViolation(format!("edge field {name} missing")))
            };
            let key = EdgeKey::new(
                int("j")? as usize,
                code(e.get("cat_j"))?,
                int("k")? as usize,
                code(e.get("cat_k"))?,
            );
            if key.j >= key.k || key.k >= marginals.n_cols() {
                return Err(Error::SchemaViolation(format!("edge {key} out of range")));
            }
            let observed = u32::try_from(int("observed")?).map_err(|_| bad("observed too large"))?;
            let (cj, ck) = (marginals.count(key.j, key.cat_j), marginals.count(key.k, key.cat_k));
            if cj == 0 || ck == 0 || observed > cj.min(ck) {
                return Err(Error::SchemaViolation(format!("edge {key} inconsistent with subnodes")));
            }
            let mut edge = DependencyEdge::from_counts(key, observed, cj, ck, n);
            let state = e.get("state").and_then(Value::as_str).ok_or_else(|| bad("state missing"))?;
            edge.state = EdgeState::parse(state)?;
            edges.push(edge);
        }
        let filter: FilterSpec = serde_json::from_value(
            obj.get("filter").cloned().ok_or_else(|| bad("filter missing"))?,
        )
        .map_err(|e| Error::SchemaViolation(format!("filter: {e}")))?;
        let mut log = Vec::new();
        for r in obj
            .get("edit_log")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("edit_log missing"))?
        {
            let key = r.get("key").and_then(Value::as_str).ok_or_else(|| bad("edit key missing"))?;
            let action = r.get("action").and_then(Value::as_str).ok_or_else(|| bad("edit action missing"))?;
            log.push(EditRecord {
                key: EdgeKey::parse_label(key, &alphabet)?,
                action: EditAction::parse(action)?,
            });
        }
        Self::from_parts(marginals, edges, filter, log).map_err(|e| match e {
            Error::InconsistentInputs(m) => Error::SchemaViolation(m),
            Error::UnknownEdge(k) => Error::SchemaViolation(format!("edit log names unknown edge {k}")),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Value =
            serde_json::from_str(text).map_err(|e| Error::SchemaViolation(e.to_string()))?;
        Self::from_document(&doc)
    }
}

pub(crate) fn alphabet_json(alphabet: &Alphabet) -> Value {
    json!({
        "symbols": alphabet.symbols_string(),
        "gap": alphabet.gap().map(|g| g.to_string()),
    })
}

pub(crate) fn alphabet_from_json(v: &Value) -> Result<Alphabet> {
    let bad = || Error::SchemaViolation("alphabet must be {symbols, gap}".into());
    let symbols = v.get("symbols").and_then(Value::as_str).ok_or_else(bad)?;
    let gap = match v.get("gap") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if s.chars().count() == 1 => s.chars().next(),
        _ => return Err(bad()),
    };
    Alphabet::new(symbols.chars().collect(), gap).map_err(|e| Error::SchemaViolation(e.to_string()))
}

pub(crate) fn edge_json(e: &DependencyEdge, alphabet: &Alphabet) -> Value {
    json!({
        "j": e.key.j,
        "cat_j": alphabet.symbol(e.key.cat_j).to_string(),
        "k": e.key.k,
        "cat_k": alphabet.symbol(e.key.cat_k).to_string(),
        "observed": e.observed,
        "expected": e.expected,
        "raw": e.raw_residual,
        "z": e.std_residual,
        "p": e.p_value,
        "state": e.state.as_str(),
    })
}

/// Pretty JSON with a trailing newline, the shared on-disk and on-wire form.
pub fn document_string(doc: &Value) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("serializable document");
    s.push('\n');
    s
}

/// Filtered snapshot of the graph's edges with their cycle labels.
#[derive(Clone, Debug, PartialEq)]
pub struct VisibleSubgraph {
    pub filter: FilterSpec,
    pub edges: Vec<DependencyEdge>,
    /// Parallel to `edges`; `Some(id)` for edges on a node-level cycle.
    pub cycle_labels: Vec<Option<usize>>,
}

impl VisibleSubgraph {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, key: &EdgeKey) -> bool {
        self.edges.binary_search_by(|e| e.key.cmp(key)).is_ok()
    }

    pub fn phi(&self) -> f64 {
        self.edges.iter().map(|e| e.std_residual.abs()).sum()
    }

    pub fn to_document(&self, graph: &Metagraph) -> Value {
        let alphabet = graph.alphabet();
        let edges: Vec<Value> = self
            .edges
            .iter()
            .zip(&self.cycle_labels)
            .map(|(e, c)| {
                let mut v = edge_json(e, alphabet);
                v["key"] = Value::String(e.key.label(alphabet));
                v["cycle_id"] = json!(c);
                v
            })
            .collect();
        json!({
            "filter": self.filter,
            "n_visible": self.edges.len(),
            "n_cycles": self.cycle_labels.iter().flatten().max().map_or(0, |m| m + 1),
            "edges": edges,
        })
    }
}

/// Labels edges lying on an undirected cycle of the node-level projection.
///
/// Parallel subnode edges between one column pair collapse to a single node
/// edge. Labels identify biconnected components with a cycle, numbered in
/// order of their smallest column pair. `edges` must be sorted by key.
pub fn detect_cycles(edges: &[DependencyEdge]) -> Vec<Option<usize>> {
    let mut pairs: Vec<(usize, usize)> = edges.iter().map(|e| e.key.columns()).collect();
    pairs.dedup();
    let pair_labels = cyclic_components(&pairs);
    let lookup: HashMap<(usize, usize), usize> = pairs
        .iter()
        .zip(&pair_labels)
        .filter_map(|(p, l)| l.map(|l| (*p, l)))
        .collect();
    edges
        .iter()
        .map(|e| lookup.get(&e.key.columns()).copied())
        .collect()
}

/// Biconnected components of a simple graph given as sorted unique edges.
/// Components with more than one edge contain a cycle and get a label.
pub fn cyclic_components(pairs: &[(usize, usize)]) -> Vec<Option<usize>> {
    let mut node_ids: BTreeMap<usize, usize> = BTreeMap::new();
    for &(a, b) in pairs {
        let next = node_ids.len();
        node_ids.entry(a).or_insert(next);
        let next = node_ids.len();
        node_ids.entry(b).or_insert(next);
    }
    let nv = node_ids.len();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nv];
    for (ei, &(a, b)) in pairs.iter().enumerate() {
        let (a, b) = (node_ids[&a], node_ids[&b]);
        adj[a].push((b, ei));
        adj[b].push((a, ei));
    }

    let mut disc = vec![usize::MAX; nv];
    let mut low = vec![0usize; nv];
    let mut timer = 0;
    let mut edge_stack: Vec<usize> = Vec::new();
    let mut components: Vec<Vec<usize>> = Vec::new();

    // Iterative Tarjan: frames hold (vertex, parent edge, next adjacency index).
    for root in 0..nv {
        if disc[root] != usize::MAX {
            continue;
        }
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        while let Some(&mut (v, parent_edge, ref mut next)) = stack.last_mut() {
            if *next < adj[v].len() {
                let (w, ei) = adj[v][*next];
                *next += 1;
                if ei == parent_edge {
                    continue;
                }
                if disc[w] == usize::MAX {
                    edge_stack.push(ei);
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, ei, 0));
                } else if disc[w] < disc[v] {
                    edge_stack.push(ei);
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let Some(&(u, _, _)) = stack.last() {
                    low[u] = low[u].min(low[v]);
                    if low[v] >= disc[u] {
                        let mut comp = Vec::new();
                        while let Some(ei) = edge_stack.pop() {
                            comp.push(ei);
                            if ei == parent_edge {
                                break;
                            }
                        }
                        components.push(comp);
                    }
                }
            }
        }
    }

    let mut cyclic: Vec<Vec<usize>> = components.into_iter().filter(|c| c.len() > 1).collect();
    for c in &mut cyclic {
        c.sort_unstable();
    }
    cyclic.sort_by_key(|c| c[0]);
    let mut labels = vec![None; pairs.len()];
    for (id, comp) in cyclic.iter().enumerate() {
        for &ei in comp {
            labels[ei] = Some(id);
        }
    }
    labels
}
