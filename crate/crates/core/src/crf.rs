//! Log-linear scoring model built from a refined edge subset.
//!
//! A sequence scores the sum of smoothed log marginals at each column plus,
//! for every selected column pair, the smoothed log observed/expected ratio
//! of the category pair it carries there.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use crate::alignment::{encode_sequence, Alphabet};
use crate::contingency::{DependencyEdge, EdgeKey, EdgeState, MarginalProfile};
use crate::error::{Error, Result};
use crate::metagraph::{alphabet_from_json, alphabet_json, document_string, Metagraph};

pub const DEFAULT_KAPPA: f64 = 0.5;

/// Which edges a model is built from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Selection {
    /// Edges visible under the graph's current filter.
    Visible,
    PinnedOnly,
    Explicit(Vec<EdgeKey>),
    /// No edges: the model reduces to a smoothed profile.
    NodesOnly,
}

impl Selection {
    pub fn name(&self) -> &'static str {
        match self {
            Selection::Visible => "visible",
            Selection::PinnedOnly => "pinned",
            Selection::Explicit(_) => "explicit",
            Selection::NodesOnly => "nodes",
        }
    }

    /// Parses `visible`, `pinned`, `nodes` or a list of edge labels.
    pub fn from_json(v: &Value, alphabet: &Alphabet) -> Result<Self> {
        match v {
            Value::String(s) => match s.as_str() {
                "visible" => Ok(Selection::Visible),
                "pinned" | "pinned-only" | "pinned_only" => Ok(Selection::PinnedOnly),
                "nodes" | "nodes-only" | "nodes_only" => Ok(Selection::NodesOnly),
                other => Err(Error::SchemaViolation(format!("unknown selection {other:?}"))),
            },
            Value::Array(items) => items
                .iter()
                .map(|item| {
                    item.as_str()
                        .ok_or_else(|| Error::SchemaViolation("edge labels must be strings".into()))
                        .and_then(|s| EdgeKey::parse_label(s, alphabet))
                })
                .collect::<Result<Vec<_>>>()
                .map(Selection::Explicit),
            _ => Err(Error::SchemaViolation(
                "selection must be a name or a list of edge labels".into(),
            )),
        }
    }
}

/// Every edge of the graph joining any of the given column pairs.
pub fn edges_for_pairs(graph: &Metagraph, pairs: &[(usize, usize)]) -> Vec<EdgeKey> {
    let wanted: BTreeSet<(usize, usize)> = pairs
        .iter()
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect();
    graph
        .edges()
        .iter()
        .filter(|e| wanted.contains(&e.key.columns()))
        .map(|e| e.key)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeTerm {
    pub observed: u32,
    pub expected: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrfModel {
    alphabet: Alphabet,
    kappa: f64,
    training_n: usize,
    selection: String,
    /// `node_terms[j][cat]` over every category code.
    node_terms: Vec<Vec<f64>>,
    edge_terms: BTreeMap<EdgeKey, EdgeTerm>,
    pairs: Vec<(usize, usize)>,
    floor: f64,
}

fn node_terms(marg: &MarginalProfile, kappa: f64) -> Vec<Vec<f64>> {
    let n = marg.n_rows() as f64;
    let k = marg.alphabet().n_categories() as f64;
    let denom = n + kappa * k;
    marg.counts()
        .iter()
        .map(|col| col.iter().map(|&c| ((c as f64 + kappa) / denom).ln()).collect())
        .collect()
}

fn edge_weight(observed: u32, expected: f64, kappa: f64) -> f64 {
    ((observed as f64 + kappa) / (expected + kappa)).ln()
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa.is_finite() && kappa > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("pseudocount {kappa} must be positive")))
    }
}

impl CrfModel {
    pub fn build(graph: &Metagraph, selection: &Selection, kappa: f64) -> Result<Self> {
        check_kappa(kappa)?;
        let chosen: Vec<&DependencyEdge> = match selection {
            Selection::Visible => {
                let sub = graph.visible();
                sub.edges
                    .iter()
                    .map(|e| graph.edge(&e.key).expect("visible edge exists"))
                    .collect()
            }
            Selection::PinnedOnly => graph.pinned_edges(),
            Selection::Explicit(keys) => keys
                .iter()
                .map(|k| graph.edge(k).ok_or(Error::UnknownEdge(*k)))
                .collect::<Result<_>>()?,
            Selection::NodesOnly => Vec::new(),
        };
        if chosen.is_empty() && *selection != Selection::NodesOnly {
            return Err(Error::EmptySelection);
        }
        debug_assert!(chosen.iter().all(|e| e.state != EdgeState::Removed
            || matches!(selection, Selection::Explicit(_))));
        let edge_terms: BTreeMap<EdgeKey, EdgeTerm> = chosen
            .iter()
            .map(|e| {
                (
                    e.key,
                    EdgeTerm {
                        observed: e.observed,
                        expected: e.expected,
                        weight: edge_weight(e.observed, e.expected, kappa),
                    },
                )
            })
            .collect();
        Ok(Self::assemble(
            graph.alphabet().clone(),
            kappa,
            graph.n_rows(),
            selection.name().to_string(),
            node_terms(graph.marginals(), kappa),
            edge_terms,
        ))
    }

    /// Profile-only model straight from marginals.
    pub fn from_marginals(marg: &MarginalProfile, kappa: f64) -> Result<Self> {
        check_kappa(kappa)?;
        Ok(Self::assemble(
            marg.alphabet().clone(),
            kappa,
            marg.n_rows(),
            Selection::NodesOnly.name().to_string(),
            node_terms(marg, kappa),
            BTreeMap::new(),
        ))
    }

    fn assemble(
        alphabet: Alphabet,
        kappa: f64,
        training_n: usize,
        selection: String,
        node_terms: Vec<Vec<f64>>,
        edge_terms: BTreeMap<EdgeKey, EdgeTerm>,
    ) -> Self {
        let pairs: Vec<(usize, usize)> = edge_terms
            .keys()
            .map(|k| k.columns())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let e_min = edge_terms
            .values()
            .map(|t| t.expected)
            .fold(f64::INFINITY, f64::min);
        let floor = if e_min.is_finite() {
            (kappa / (e_min + kappa)).ln()
        } else {
            0.0
        };
        Self {
            alphabet,
            kappa,
            training_n,
            selection,
            node_terms,
            edge_terms,
            pairs,
            floor,
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn len(&self) -> usize {
        self.node_terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_terms.is_empty()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn training_n(&self) -> usize {
        self.training_n
    }

    pub fn node_term(&self, j: usize, cat: u8) -> f64 {
        self.node_terms[j][cat as usize]
    }

    pub fn edge_terms(&self) -> &BTreeMap<EdgeKey, EdgeTerm> {
        &self.edge_terms
    }

    pub fn selected_pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Contribution of a selected column pair carrying a category pair the
    /// model has no term for.
    pub fn unseen_pair_floor(&self) -> f64 {
        self.floor
    }

    /// Adds `delta` to every node term of column `j`.
    pub fn shift_node_terms(&mut self, j: usize, delta: f64) {
        for t in &mut self.node_terms[j] {
            *t += delta;
        }
    }

    /// Removes one edge term, keeping the unseen-pair floor as it was. The
    /// column pair stays selected while any other term for it remains.
    pub fn without_edge(&self, key: &EdgeKey) -> CrfModel {
        let mut terms = self.edge_terms.clone();
        terms.remove(key);
        let mut model = Self::assemble(
            self.alphabet.clone(),
            self.kappa,
            self.training_n,
            self.selection.clone(),
            self.node_terms.clone(),
            terms,
        );
        model.floor = self.floor;
        model
    }

    pub fn encode(&self, seq: &str) -> Result<Vec<u8>> {
        encode_sequence(&self.alphabet, self.len(), seq)
    }

    pub fn score(&self, seq: &str) -> Result<ScoreReport> {
        Ok(self.score_codes(&self.encode(seq)?))
    }

    pub fn score_codes(&self, codes: &[u8]) -> ScoreReport {
        assert_eq!(codes.len(), self.len(), "sequence length");
        let node_contribution: Vec<f64> = codes
            .iter()
            .enumerate()
            .map(|(j, &c)| self.node_terms[j][c as usize])
            .collect();
        let mut edge_contribution = Vec::with_capacity(self.pairs.len());
        for &(j, k) in &self.pairs {
            let key = EdgeKey::new(j, codes[j], k, codes[k]);
            let w = self.edge_terms.get(&key).map_or(self.floor, |t| t.weight);
            edge_contribution.push((key, w));
        }
        let violated_edges = self
            .edge_terms
            .iter()
            .filter(|(key, t)| {
                t.weight > 0.0 && ((codes[key.j] == key.cat_j) != (codes[key.k] == key.cat_k))
            })
            .map(|(key, _)| *key)
            .collect();
        let total = node_contribution.iter().sum::<f64>()
            + edge_contribution.iter().map(|(_, w)| w).sum::<f64>();
        ScoreReport {
            total_log_score: total,
            node_contribution,
            edge_contribution,
            violated_edges,
        }
    }

    /// Scores in descending order, ties kept in input order.
    pub fn rank_variants(&self, seqs: &[(String, String)]) -> Result<Vec<(String, f64)>> {
        let mut scored = seqs
            .iter()
            .map(|(id, s)| Ok((id.clone(), self.score(s)?.total_log_score)))
            .collect::<Result<Vec<_>>>()?;
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(scored)
    }

    pub fn to_document(&self) -> Value {
        let a = &self.alphabet;
        let categories: Vec<String> = (0..a.n_categories() as u8)
            .map(|c| a.symbol(c).to_string())
            .collect();
        let edge_terms: Vec<Value> = self
            .edge_terms
            .iter()
            .map(|(key, t)| {
                json!({
                    "key": key.label(a),
                    "observed": t.observed,
                    "expected": t.expected,
                    "weight": t.weight,
                })
            })
            .collect();
        json!({
            "alphabet": alphabet_json(a),
            "categories": categories,
            "L": self.len(),
            "kappa": self.kappa,
            "training_n": self.training_n,
            "selection": self.selection,
            "node_terms": self.node_terms,
            "edge_terms": edge_terms,
            "unseen_pair_floor": self.floor,
        })
    }

    pub fn to_json(&self) -> String {
        document_string(&self.to_document())
    }

    pub fn from_document(doc: &Value) -> Result<Self> {
        let bad = |m: &str| Error::SchemaViolation(format!("model document: {m}"));
        let alphabet = alphabet_from_json(doc.get("alphabet").ok_or_else(|| bad("alphabet missing"))?)?;
        let len = doc.get("L").and_then(Value::as_u64).ok_or_else(|| bad("L missing"))? as usize;
        let kappa = doc.get("kappa").and_then(Value::as_f64).ok_or_else(|| bad("kappa missing"))?;
        check_kappa(kappa).map_err(|e| Error::SchemaViolation(e.to_string()))?;
        let training_n = doc
            .get("training_n")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad("training_n missing"))? as usize;
        let selection = doc
            .get("selection")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("selection missing"))?
            .to_string();
        let node_terms: Vec<Vec<f64>> = serde_json::from_value(
            doc.get("node_terms").cloned().ok_or_else(|| bad("node_terms missing"))?,
        )
        .map_err(|e| Error::SchemaViolation(format!("node_terms: {e}")))?;
        if node_terms.len() != len
            || node_terms.iter().any(|c| c.len() != alphabet.n_categories())
        {
            return Err(bad("node_terms shape disagrees with L and alphabet"));
        }
        let mut edge_terms = BTreeMap::new();
        for t in doc
            .get("edge_terms")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("edge_terms missing"))?
        {
            let key = EdgeKey::parse_label(
                t.get("key").and_then(Value::as_str).ok_or_else(|| bad("edge key missing"))?,
                &alphabet,
            )?;
            if key.j >= key.k || key.k >= len {
                return Err(bad("edge key out of range"));
            }
            let term = EdgeTerm {
                observed: t
                    .get("observed")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| bad("observed missing"))? as u32,
                expected: t
                    .get("expected")
                    .and_then(Value::as_f64)
                    .ok_or_else(|| bad("expected missing"))?,
                weight: t.get("weight").and_then(Value::as_f64).ok_or_else(|| bad("weight missing"))?,
            };
            if edge_terms.insert(key, term).is_some() {
                return Err(bad("duplicate edge key"));
            }
        }
        Ok(Self::assemble(alphabet, kappa, training_n, selection, node_terms, edge_terms))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Value =
            serde_json::from_str(text).map_err(|e| Error::SchemaViolation(e.to_string()))?;
        Self::from_document(&doc)
    }
}

/// Itemized score of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreReport {
    /// Natural-log score.
    pub total_log_score: f64,
    pub node_contribution: Vec<f64>,
    /// One entry per selected column pair, keyed by the categories the
    /// sequence carries there.
    pub edge_contribution: Vec<(EdgeKey, f64)>,
    /// Selected positive edges where the sequence carries exactly one side.
    pub violated_edges: Vec<EdgeKey>,
}

impl ScoreReport {
    pub fn itemized_sum(&self) -> f64 {
        self.node_contribution.iter().sum::<f64>()
            + self.edge_contribution.iter().map(|(_, w)| w).sum::<f64>()
    }

    /// Base-10 log fold relative to `reference` (the reference itself is 0,
    /// i.e. fold 1).
    pub fn log10_relative_to(&self, reference: &ScoreReport) -> f64 {
        (self.total_log_score - reference.total_log_score) / std::f64::consts::LN_10
    }
}

/// Independence baseline: smoothed log marginals summed over columns.
pub fn pssm_score(marg: &MarginalProfile, seq: &str, kappa: f64) -> Result<f64> {
    let model = CrfModel::from_marginals(marg, kappa)?;
    Ok(model.score(seq)?.total_log_score)
}

/// Scores `(id, sequence)` pairs and renders the shared report document.
/// With a reference id, each report also carries its log10 fold relative to
/// that sequence.
pub fn score_document(
    model: &CrfModel,
    seqs: &[(String, String)],
    reference: Option<&str>,
) -> Result<Value> {
    let reports = seqs
        .iter()
        .map(|(_, s)| model.score(s))
        .collect::<Result<Vec<_>>>()?;
    let ref_report = match reference {
        None => None,
        Some(r) => {
            let i = seqs
                .iter()
                .position(|(id, _)| id == r)
                .ok_or_else(|| Error::InvalidParameter(format!("reference {r:?} not among sequences")))?;
            Some(&reports[i])
        }
    };
    let a = model.alphabet();
    let items: Vec<Value> = seqs
        .iter()
        .zip(&reports)
        .map(|((id, seq), r)| {
            let edges: Vec<Value> = r
                .edge_contribution
                .iter()
                .map(|(k, w)| json!({"key": k.label(a), "value": w}))
                .collect();
            let violated: Vec<String> = r.violated_edges.iter().map(|k| k.label(a)).collect();
            json!({
                "id": id,
                "sequence": seq,
                "total_log_score": r.total_log_score,
                "log10_relative": ref_report.map(|rr| r.log10_relative_to(rr)),
                "node_contribution": r.node_contribution,
                "edge_contribution": edges,
                "violated_edges": violated,
            })
        })
        .collect();
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    order.sort_by(|&x, &y| reports[y].total_log_score.total_cmp(&reports[x].total_log_score));
    let ranking: Vec<&str> = order.iter().map(|&i| seqs[i].0.as_str()).collect();
    Ok(json!({
        "reference": reference,
        "reports": items,
        "ranking": ranking,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::AlignmentMatrix;
    use crate::contingency::{all_pairs_scan, marginals};
    use crate::metagraph::FilterSpec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph_of(m: &AlignmentMatrix) -> Metagraph {
        Metagraph::build(all_pairs_scan(m), marginals(m)).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, l: usize, k: u8) -> AlignmentMatrix {
        let symbols: Vec<char> = "ACGT".chars().take(k as usize).collect();
        let cells = (0..n * l).map(|_| rng.gen_range(0..k)).collect();
        AlignmentMatrix::from_codes(n, l, cells, Alphabet::new(symbols, None).unwrap(), None).unwrap()
    }

    /// 100 rows: column 0 is G or C half and half, column 1 always pairs.
    fn stem_family() -> AlignmentMatrix {
        let mut rows = vec!["GCA"; 50];
        rows.extend(vec!["CGA"; 50]);
        AlignmentMatrix::from_rows(&rows, None).unwrap()
    }

    #[test]
    fn stem_edge_term_closed_form() {
        let m = stem_family();
        let g = graph_of(&m);
        let a = m.alphabet().clone();
        let gc = EdgeKey::new(0, a.code('G').unwrap(), 1, a.code('C').unwrap());
        let model = CrfModel::build(&g, &Selection::Explicit(vec![gc]), 0.5).unwrap();
        let t = &model.edge_terms()[&gc];
        assert_eq!(t.observed, 50);
        assert_eq!(t.expected, 25.0);
        assert_relative_eq!(t.weight, (50.5f64 / 25.5).ln(), epsilon = 1e-15);
        assert!((t.weight - 2f64.ln()).abs() < 0.02);
        // node term: (50 + .5) / (100 + .5 * 3)
        assert_relative_eq!(
            model.node_term(0, a.code('G').unwrap()),
            (50.5f64 / 101.5).ln(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn empty_selection_and_unknown_edge() {
        let m = stem_family();
        let mut g = graph_of(&m);
        assert!(matches!(
            CrfModel::build(&g, &Selection::PinnedOnly, 0.5),
            Err(Error::EmptySelection)
        ));
        assert!(matches!(
            CrfModel::build(&g, &Selection::Explicit(vec![]), 0.5),
            Err(Error::EmptySelection)
        ));
        g.set_filter(FilterSpec::new(1000.0, 1.0).unwrap()).unwrap();
        assert!(matches!(
            CrfModel::build(&g, &Selection::Visible, 0.5),
            Err(Error::EmptySelection)
        ));
        assert!(matches!(
            CrfModel::build(&g, &Selection::Explicit(vec![EdgeKey::new(0, 3, 1, 3)]), 0.5),
            Err(Error::UnknownEdge(_))
        ));
        assert!(CrfModel::build(&g, &Selection::NodesOnly, 0.5).is_ok());
        assert!(matches!(
            CrfModel::build(&g, &Selection::NodesOnly, 0.0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn score_errors() {
        let m = stem_family();
        let model = CrfModel::build(&graph_of(&m), &Selection::Visible, 0.5).unwrap();
        assert!(matches!(model.score("GC"), Err(Error::LengthMismatch { .. })));
        assert!(matches!(model.score("GCZ"), Err(Error::UnknownSymbol('Z'))));
    }

    #[test]
    fn stem_scoring_and_violations() {
        let m = stem_family();
        let g = graph_of(&m);
        let pairs = edges_for_pairs(&g, &[(0, 1)]);
        let model = CrfModel::build(&g, &Selection::Explicit(pairs), 0.5).unwrap();
        let good = model.score("GCA").unwrap();
        let bad = model.score("GGA").unwrap();
        assert!(good.total_log_score > bad.total_log_score);
        assert!(good.violated_edges.is_empty());
        assert!(!bad.violated_edges.is_empty());
        assert_eq!(model.selected_pairs(), &[(0, 1)]);
        // GG never occurs, so it takes the unseen-pair floor
        assert_eq!(bad.edge_contribution.len(), 1);
        let gg = bad.edge_contribution[0].1;
        assert_eq!(gg, model.edge_terms()[&bad.edge_contribution[0].0].weight);
        let e_min = model.edge_terms().values().map(|t| t.expected).fold(f64::INFINITY, f64::min);
        assert_relative_eq!(model.unseen_pair_floor(), (0.5 / (e_min + 0.5)).ln());
    }

    #[test]
    fn unseen_pair_takes_floor() {
        let m = stem_family();
        let g = graph_of(&m);
        let a = m.alphabet().clone();
        let gc = EdgeKey::new(0, a.code('G').unwrap(), 1, a.code('C').unwrap());
        let model = CrfModel::build(&g, &Selection::Explicit(vec![gc]), 0.5).unwrap();
        let r = model.score("CGA").unwrap();
        assert_eq!(r.edge_contribution[0].1, model.unseen_pair_floor());
        assert_relative_eq!(model.unseen_pair_floor(), (0.5f64 / 25.5).ln());
    }

    #[test]
    fn consensus_maximizes_node_terms_and_pssm() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_matrix(&mut rng, 30, 6, 4);
        let marg = marginals(&m);
        let model = CrfModel::from_marginals(&marg, 0.5).unwrap();
        let consensus: String = marg
            .consensus()
            .into_iter()
            .map(|c| m.alphabet().symbol(c))
            .collect();
        let best = model.score(&consensus).unwrap();
        for _ in 0..200 {
            let s: String = (0..6).map(|_| ['A', 'C', 'G', 'T'][rng.gen_range(0..4)]).collect();
            let r = model.score(&s).unwrap();
            for j in 0..6 {
                assert!(best.node_contribution[j] >= r.node_contribution[j]);
            }
            assert!(pssm_score(&marg, &consensus, 0.5).unwrap() >= pssm_score(&marg, &s, 0.5).unwrap());
        }
    }

    #[test]
    fn relative_score_of_reference_is_zero() {
        let m = stem_family();
        let model = CrfModel::build(&graph_of(&m), &Selection::Visible, 0.5).unwrap();
        let seqs = vec![("wt".to_string(), "GCA".to_string()), ("mut".to_string(), "GGA".to_string())];
        let doc = score_document(&model, &seqs, Some("wt")).unwrap();
        assert_eq!(doc["reports"][0]["log10_relative"].as_f64().unwrap(), 0.0);
        assert!(doc["reports"][1]["log10_relative"].as_f64().unwrap() < 0.0);
        assert_eq!(doc["ranking"][0], "wt");
        assert!(score_document(&model, &seqs, Some("nope")).is_err());
    }

    #[test]
    fn model_document_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_matrix(&mut rng, 40, 5, 3);
        let mut g = graph_of(&m);
        g.set_filter(FilterSpec::new(1.0, 0.5).unwrap()).unwrap();
        let model = CrfModel::build(&g, &Selection::Visible, 0.5).unwrap();
        let back = CrfModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_json(), model.to_json());
    }

    #[test]
    fn rank_ties_keep_input_order() {
        let m = stem_family();
        let model = CrfModel::build(&graph_of(&m), &Selection::Visible, 0.5).unwrap();
        let seqs: Vec<(String, String)> = ["a", "b", "c"]
            .iter()
            .map(|id| (id.to_string(), "GCA".to_string()))
            .collect();
        let ranked = model.rank_variants(&seqs).unwrap();
        let ids: Vec<&str> = ranked.iter().map(|r| r.0.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    /// Six coupled positions in three pairs; mutating 0, 2, 4, 6 of them to
    /// partner-inconsistent symbols lowers the score strictly.
    #[test]
    fn coupled_mutants_score_in_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pairs = [(1usize, 4usize), (2, 7), (5, 9)];
        let n = 400;
        let l = 10;
        let mut cells = vec![0u8; n * l];
        for i in 0..n {
            for j in 0..l {
                cells[i * l + j] = rng.gen_range(0..4);
            }
            for &(a, b) in &pairs {
                let x = rng.gen_range(0..4u8);
                cells[i * l + a] = x;
                cells[i * l + b] = 3 - x;
            }
        }
        let alphabet = Alphabet::new(vec!['A', 'C', 'G', 'T'], None).unwrap();
        let m = AlignmentMatrix::from_codes(n, l, cells, alphabet, None).unwrap();
        let g = graph_of(&m);
        let model = CrfModel::build(&g, &Selection::Explicit(edges_for_pairs(&g, &pairs)), 0.5).unwrap();
        let mut wt: Vec<u8> = m.row(0).to_vec();
        for &(a, b) in &pairs {
            wt[b] = 3 - wt[a];
        }
        let mut prev = model.score_codes(&wt).total_log_score;
        let mut seq = wt.clone();
        for &(a, _) in &pairs {
            // change the first member of the pair, breaking it
            let orig = seq[a];
            seq[a] = (orig + 1) % 4;
            let s2 = model.score_codes(&seq).total_log_score;
            assert!(s2 < prev, "{s2} !< {prev}");
            prev = s2;
        }
    }

    #[test]
    fn independence_null_bootstrap() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 300;
        let m = random_matrix(&mut rng, n, 6, 4);
        let g = graph_of(&m);
        let model = CrfModel::build(&g, &Selection::Visible, 0.5).unwrap();
        let reps = 60;
        let mut samples: BTreeMap<EdgeKey, Vec<f64>> = BTreeMap::new();
        for _ in 0..reps {
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let cells: Vec<u8> = rows.iter().flat_map(|&i| m.row(i).to_vec()).collect();
            let bm = AlignmentMatrix::from_codes(n, 6, cells, m.alphabet().clone(), None).unwrap();
            let bmodel = CrfModel::build(&graph_of(&bm), &Selection::Visible, 0.5).unwrap();
            for (k, t) in bmodel.edge_terms() {
                samples.entry(*k).or_default().push(t.weight);
            }
        }
        let mut within = 0;
        for (k, t) in model.edge_terms() {
            let s = &samples[k];
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            let sd = (s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (s.len() - 1) as f64).sqrt();
            if t.weight.abs() <= 3.0 * sd {
                within += 1;
            }
        }
        let total = model.edge_terms().len();
        assert!(within as f64 >= 0.95 * total as f64, "{within}/{total}");
    }

    fn arb_matrix() -> impl Strategy<Value = AlignmentMatrix> {
        prop::collection::vec(0u8..3, 60).prop_map(|cells| {
            let alphabet = Alphabet::new(vec!['A', 'C', 'G'], None).unwrap();
            AlignmentMatrix::from_codes(12, 5, cells, alphabet, None).unwrap()
        })
    }

    proptest! {
        #[test]
        fn decomposition_exact(m in arb_matrix(), seq in prop::collection::vec(0u8..3, 5)) {
            let g = graph_of(&m);
            let model = CrfModel::build(&g, &Selection::Visible, 0.5).unwrap();
            let r = model.score_codes(&seq);
            prop_assert!((r.total_log_score - r.itemized_sum()).abs() <= 1e-9);
            prop_assert_eq!(r.edge_contribution.len(), 10);
        }

        #[test]
        fn nodes_only_matches_pssm_ranking(
            m in arb_matrix(),
            seqs in prop::collection::vec(prop::collection::vec(0u8..3, 5), 1..8),
        ) {
            let g = graph_of(&m);
            let model = CrfModel::build(&g, &Selection::NodesOnly, 0.5).unwrap();
            let marg = marginals(&m);
            let named: Vec<(String, String)> = seqs
                .iter()
                .enumerate()
                .map(|(i, s)| (i.to_string(), s.iter().map(|&c| m.alphabet().symbol(c)).collect()))
                .collect();
            let ranked = model.rank_variants(&named).unwrap();
            let mut pssm: Vec<(String, f64)> = named
                .iter()
                .map(|(id, s)| (id.clone(), pssm_score(&marg, s, 0.5).unwrap()))
                .collect();
            pssm.sort_by(|a, b| b.1.total_cmp(&a.1));
            prop_assert_eq!(ranked, pssm);
        }

        #[test]
        fn translation_keeps_ranking(
            m in arb_matrix(),
            seqs in prop::collection::vec(prop::collection::vec(0u8..3, 5), 1..8),
            col in 0usize..5,
            delta in -5.0f64..5.0,
        ) {
            let g = graph_of(&m);
            let model = CrfModel::build(&g, &Selection::Visible, 0.5).unwrap();
            let mut shifted = model.clone();
            shifted.shift_node_terms(col, delta);
            let named: Vec<(String, String)> = seqs
                .iter()
                .enumerate()
                .map(|(i, s)| (i.to_string(), s.iter().map(|&c| m.alphabet().symbol(c)).collect()))
                .collect();
            let a: Vec<String> = model.rank_variants(&named).unwrap().into_iter().map(|r| r.0).collect();
            let b: Vec<String> = shifted.rank_variants(&named).unwrap().into_iter().map(|r| r.0).collect();
            // Equal-score ties may reorder by rounding; compare on distinct scores only.
            let scores: Vec<f64> = named.iter().map(|(_, s)| model.score(s).unwrap().total_log_score).collect();
            let distinct = scores.iter().enumerate().all(|(i, x)| {
                scores.iter().enumerate().all(|(j, y)| i == j || (x - y).abs() > 1e-9)
            });
            if distinct {
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn ablation_never_widens_gap(m in arb_matrix(), pick in 0usize..1000) {
            let g = graph_of(&m);
            let model = CrfModel::build(&g, &Selection::Visible, 0.5).unwrap();
            let positive: Vec<EdgeKey> = model
                .edge_terms()
                .iter()
                .filter(|(_, t)| t.weight > 0.0)
                .map(|(k, _)| *k)
                .collect();
            prop_assume!(!positive.is_empty());
            let key = positive[pick % positive.len()];
            let ablated = model.without_edge(&key);
            // satisfying: carries both sides; violating: only the j side.
            let mut sat = m.row(0).to_vec();
            sat[key.j] = key.cat_j;
            sat[key.k] = key.cat_k;
            let mut vio = sat.clone();
            vio[key.k] = (key.cat_k + 1) % 3;
            let gap_before = model.score_codes(&sat).total_log_score - model.score_codes(&vio).total_log_score;
            let gap_after = ablated.score_codes(&sat).total_log_score - ablated.score_codes(&vio).total_log_score;
            prop_assert!(gap_after <= gap_before + 1e-9, "{} > {}", gap_after, gap_before);
        }
    }
}
