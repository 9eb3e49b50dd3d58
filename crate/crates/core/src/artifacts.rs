//! On-disk and on-wire artifacts shared by every front end, so the same
//! inputs always render to the same bytes.

use serde_json::Value;

use crate::alignment::{AlignmentMatrix, Format};
use crate::contingency::{all_pairs_scan, edges_to_csv, marginals, MarginalProfile};
use crate::crf::{score_document, CrfModel};
use crate::error::{Error, Result};
use crate::layout::{compute_layout, LayoutParams};
use crate::metagraph::{document_string, FilterSpec, Metagraph, SignFilter};
use crate::realign::RealignReport;

/// Optional threshold overrides, as given on a command line or query string.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FilterOverrides {
    pub min_z: Option<f64>,
    pub max_p: Option<f64>,
    pub min_raw: Option<f64>,
    pub sign: Option<String>,
}

impl FilterOverrides {
    pub fn is_empty(&self) -> bool {
        self.min_z.is_none() && self.max_p.is_none() && self.min_raw.is_none() && self.sign.is_none()
    }

    /// `base` with the given fields replaced, validated.
    pub fn apply(&self, base: &FilterSpec) -> Result<FilterSpec> {
        let spec = FilterSpec {
            min_abs_std_residual: self.min_z.unwrap_or(base.min_abs_std_residual),
            max_p: self.max_p.unwrap_or(base.max_p),
            min_abs_raw: self.min_raw.unwrap_or(base.min_abs_raw),
            sign: match &self.sign {
                Some(s) => SignFilter::parse(s)?,
                None => base.sign,
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Number of edges a full scan produces: one per pair of observed
/// categories in every column pair.
pub fn edge_count(marg: &MarginalProfile) -> u128 {
    let (mut sum, mut sq) = (0u128, 0u128);
    for col in marg.counts() {
        let a = col.iter().filter(|&&c| c > 0).count() as u128;
        sum += a;
        sq += a * a;
    }
    (sum * sum - sq) / 2
}

pub fn build_graph(matrix: &AlignmentMatrix) -> Result<Metagraph> {
    Metagraph::build(all_pairs_scan(matrix), marginals(matrix))
}

/// Alignment text by export name: `txt`, `fasta` or `json`.
pub fn alignment_text(matrix: &AlignmentMatrix, kind: &str) -> Result<String> {
    match kind {
        "json" => {
            let mut s = matrix.to_json();
            s.push('\n');
            Ok(s)
        }
        other => Ok(match other.parse::<Format>()? {
            Format::Plain => matrix.to_plain(),
            Format::Fasta => matrix.to_fasta(),
        }),
    }
}

pub fn edges_csv(graph: &Metagraph) -> String {
    edges_to_csv(graph.edges(), graph.alphabet())
}

/// Graph document carrying `filter` as its filter state.
pub fn graph_json(graph: &Metagraph, filter: &FilterSpec) -> String {
    document_string(&graph.to_document(Some(filter)))
}

pub fn scene_json(graph: &Metagraph, filter: &FilterSpec, params: &LayoutParams) -> Result<String> {
    Ok(compute_layout(graph, &graph.apply_filter(filter), params)?.to_json())
}

pub fn model_json(model: &CrfModel) -> String {
    model.to_json()
}

pub fn score_json(model: &CrfModel, seqs: &[(String, String)], reference: Option<&str>) -> Result<String> {
    Ok(document_string(&score_document(model, seqs, reference)?))
}

pub fn realign_json(report: &RealignReport, matrix: &AlignmentMatrix) -> String {
    document_string(&report.to_document(matrix.alphabet()))
}

/// Candidate sequences from text: FASTA records, or one sequence per line
/// optionally preceded by an id and whitespace. Unnamed sequences are
/// numbered from 1 in input order.
pub fn parse_sequences(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    if text.trim_start().starts_with('>') {
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(h) = line.strip_prefix('>') {
                let id = h.split_whitespace().next().unwrap_or("").to_string();
                out.push((id, String::new()));
            } else {
                let last = out.last_mut().ok_or(Error::EmptyInput)?;
                last.1.push_str(line);
            }
        }
    } else {
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let mut parts = line.split_whitespace();
            let first = parts.next().expect("non-empty line");
            match (parts.next(), parts.next()) {
                (None, _) => out.push(((out.len() + 1).to_string(), first.to_string())),
                (Some(seq), None) => out.push((first.to_string(), seq.to_string())),
                _ => {
                    return Err(Error::SchemaViolation(format!(
                        "sequence line {line:?} has more than two fields"
                    )))
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

/// Sequences from a JSON array of strings or `{id, seq}` objects, numbered
/// like [`parse_sequences`] when unnamed.
pub fn sequences_from_json(v: &Value) -> Result<Vec<(String, String)>> {
    let items = v
        .as_array()
        .ok_or_else(|| Error::SchemaViolation("sequences must be an array".into()))?;
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        match item {
            Value::String(s) => out.push(((i + 1).to_string(), s.clone())),
            Value::Object(o) => {
                let seq = o
                    .get("seq")
                    .and_then(Value::as_str)
                    .ok_or_else(|| Error::SchemaViolation("sequence object needs seq".into()))?;
                let id = match o.get("id") {
                    None => (i + 1).to_string(),
                    Some(Value::String(s)) => s.clone(),
                    Some(_) => return Err(Error::SchemaViolation("sequence id must be a string".into())),
                };
                out.push((id, seq.to_string()));
            }
            _ => return Err(Error::SchemaViolation("sequence must be a string or {id, seq}".into())),
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}
