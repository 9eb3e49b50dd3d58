//! Marginal and pairwise joint distributions, independence residuals and
//! exact-test p-values: the statistics behind every edge.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{Alphabet, AlignmentMatrix};
use crate::error::{Error, Result};
use crate::fmt::sig_digits;

/// Per-column category counts (a position-specific scoring matrix before logs).
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalProfile {
    n: usize,
    alphabet: Alphabet,
    counts: Vec<Vec<u32>>,
    freqs: Vec<Vec<f64>>,
}

impl MarginalProfile {
    pub fn from_counts(n: usize, alphabet: Alphabet, counts: Vec<Vec<u32>>) -> Result<Self> {
        let k = alphabet.n_categories();
        for (j, col) in counts.iter().enumerate() {
            if col.len() != k {
                return Err(Error::InconsistentInputs(format!(
                    "column {j} has {} categories, alphabet has {k}",
                    col.len()
                )));
            }
            let total: u64 = col.iter().map(|&c| c as u64).sum();
            if total != n as u64 {
                return Err(Error::InconsistentInputs(format!(
                    "column {j} counts sum to {total}, expected {n}"
                )));
            }
        }
        let freqs = counts
            .iter()
            .map(|col| col.iter().map(|&c| c as f64 / n as f64).collect())
            .collect();
        Ok(Self {
            n,
            alphabet,
            counts,
            freqs,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.counts.len()
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn count(&self, col: usize, cat: u8) -> u32 {
        self.counts[col][cat as usize]
    }

    pub fn freq(&self, col: usize, cat: u8) -> f64 {
        self.freqs[col][cat as usize]
    }

    pub fn counts(&self) -> &[Vec<u32>] {
        &self.counts
    }

    pub fn freqs(&self) -> &[Vec<f64>] {
        &self.freqs
    }

    /// Most frequent category per column; ties go to the lower code.
    pub fn consensus(&self) -> Vec<u8> {
        self.counts
            .iter()
            .map(|col| {
                let mut best = 0;
                for (c, &v) in col.iter().enumerate() {
                    if v > col[best] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect()
    }
}

pub fn marginals(matrix: &AlignmentMatrix) -> MarginalProfile {
    let k = matrix.alphabet().n_categories();
    let mut counts = vec![vec![0u32; k]; matrix.n_cols()];
    for i in 0..matrix.n_rows() {
        for (j, &c) in matrix.row(i).iter().enumerate() {
            counts[j][c as usize] += 1;
        }
    }
    MarginalProfile::from_counts(matrix.n_rows(), matrix.alphabet().clone(), counts)
        .expect("tallies are consistent")
}

/// Co-occurrence counts for one column pair, `counts[m * K + n]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointTable {
    pub j: usize,
    pub k: usize,
    n_categories: usize,
    counts: Vec<u32>,
}

impl JointTable {
    pub fn get(&self, cat_j: u8, cat_k: u8) -> u32 {
        self.counts[cat_j as usize * self.n_categories + cat_k as usize]
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// The same table with the roles of the two columns exchanged.
    pub fn transposed(&self) -> JointTable {
        let k = self.n_categories;
        let mut counts = vec![0; k * k];
        for m in 0..k {
            for n in 0..k {
                counts[n * k + m] = self.counts[m * k + n];
            }
        }
        JointTable {
            j: self.k,
            k: self.j,
            n_categories: k,
            counts,
        }
    }
}

fn tally(col_j: &[u8], col_k: &[u8], n_categories: usize, j: usize, k: usize) -> JointTable {
    let mut counts = vec![0u32; n_categories * n_categories];
    for (&a, &b) in col_j.iter().zip(col_k) {
        counts[a as usize * n_categories + b as usize] += 1;
    }
    JointTable {
        j,
        k,
        n_categories,
        counts,
    }
}

pub fn joint_counts(matrix: &AlignmentMatrix, j: usize, k: usize) -> Result<JointTable> {
    let len = matrix.n_cols();
    if j >= k || k >= len {
        return Err(Error::ColumnOutOfRange { j, k, len });
    }
    Ok(tally(
        &matrix.column(j),
        &matrix.column(k),
        matrix.alphabet().n_categories(),
        j,
        k,
    ))
}

/// Identifies one subnode-to-subnode edge: category `cat_j` at column `j`
/// with category `cat_k` at column `k`. Ordered by `(j, k, cat_j, cat_k)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeKey {
    pub j: usize,
    pub cat_j: u8,
    pub k: usize,
    pub cat_k: u8,
}

impl EdgeKey {
    pub fn new(j: usize, cat_j: u8, k: usize, cat_k: u8) -> Self {
        Self { j, cat_j, k, cat_k }
    }

    pub fn columns(&self) -> (usize, usize) {
        (self.j, self.k)
    }

    /// Text form used in URLs and documents, e.g. `6.G.9.C`.
    pub fn label(&self, alphabet: &Alphabet) -> String {
        format!(
            "{}.{}.{}.{}",
            self.j,
            alphabet.symbol(self.cat_j),
            self.k,
            alphabet.symbol(self.cat_k)
        )
    }

    pub fn parse_label(label: &str, alphabet: &Alphabet) -> Result<Self> {
        let bad = || Error::SchemaViolation(format!("malformed edge key {label:?}"));
        let parts: Vec<&str> = label.split('.').collect();
        if parts.len() != 4 {
            return Err(bad());
        }
        let j = parts[0].parse().map_err(|_| bad())?;
        let k = parts[2].parse().map_err(|_| bad())?;
        if j >= k {
            return Err(Error::SchemaViolation(format!(
                "edge key {label:?} must name columns in increasing order"
            )));
        }
        let sym = |s: &str| -> Result<u8> {
            let mut chars = s.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => alphabet.code(c).ok_or(Error::UnknownSymbol(c)),
                _ => Err(bad()),
            }
        };
        Ok(Self::new(j, sym(parts[1])?, k, sym(parts[3])?))
    }
}

impl Ord for EdgeKey {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.j, self.k, self.cat_j, self.cat_k).cmp(&(other.j, other.k, other.cat_j, other.cat_k))
    }
}

impl PartialOrd for EdgeKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}:{})-({}:{})", self.j, self.cat_j, self.k, self.cat_k)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeState {
    #[default]
    Normal,
    Pinned,
    Removed,
}

impl EdgeState {
    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeState::Normal => "normal",
            EdgeState::Pinned => "pinned",
            EdgeState::Removed => "removed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(EdgeState::Normal),
            "pinned" => Ok(EdgeState::Pinned),
            "removed" => Ok(EdgeState::Removed),
            other => Err(Error::SchemaViolation(format!("unknown edge state {other:?}"))),
        }
    }
}

/// Observed-versus-expected statistics for one subnode pair.
#[derive(Clone, Debug, PartialEq)]
pub struct DependencyEdge {
    pub key: EdgeKey,
    pub observed: u32,
    pub expected: f64,
    pub raw_residual: f64,
    /// Adjusted Pearson residual.
    pub std_residual: f64,
    /// Two-sided Fisher exact p on the 2x2 presence/absence collapse.
    pub p_value: f64,
    pub state: EdgeState,
}

impl DependencyEdge {
    /// Statistics for a subnode pair from its joint count `observed`, the two
    /// marginal counts and the row count.
    pub fn from_counts(key: EdgeKey, observed: u32, count_j: u32, count_k: u32, n: usize) -> Self {
        let nf = n as f64;
        let expected = count_j as f64 * count_k as f64 / nf;
        let (lo, hi) = (count_j.min(count_k), count_j.max(count_k));
        let q_lo = 1.0 - lo as f64 / nf;
        let q_hi = 1.0 - hi as f64 / nf;
        let raw_residual = observed as f64 - expected;
        // Fixed factor order keeps the result identical when the columns swap.
        let denom = (expected * q_lo * q_hi).sqrt();
        // A constant column gives denom = 0, and then observed == expected exactly.
        let std_residual = if denom > 0.0 { raw_residual / denom } else { 0.0 };
        let (o, cj, ck, n) = (observed as u64, count_j as u64, count_k as u64, n as u64);
        let p_value = fisher_exact_p(o, cj - o, ck - o, n + o - cj - ck);
        Self {
            key,
            observed,
            expected,
            raw_residual,
            std_residual,
            p_value,
            state: EdgeState::Normal,
        }
    }
}

/// Edges for every `(M, N)` with nonzero marginal support at both columns.
pub fn edge_statistics(joint: &JointTable, marg: &MarginalProfile) -> Vec<DependencyEdge> {
    let k = joint.n_categories;
    let n = marg.n_rows();
    let mut out = Vec::new();
    for m in 0..k as u8 {
        let cm = marg.count(joint.j, m);
        if cm == 0 {
            continue;
        }
        for c in 0..k as u8 {
            let cn = marg.count(joint.k, c);
            if cn == 0 {
                continue;
            }
            let key = EdgeKey::new(joint.j, m, joint.k, c);
            out.push(DependencyEdge::from_counts(key, joint.get(m, c), cm, cn, n));
        }
    }
    out
}

const TIE_TOLERANCE: f64 = 1e-7;

/// Two-sided Fisher exact p-value for the 2x2 table `[[a, b], [c, d]]`.
///
/// Sums the hypergeometric probabilities of every table with the observed
/// margins that is no more likely than the observed one. Weights are taken
/// relative to the mode, so nothing overflows for large tables; see
/// [`fisher_exact_ln_p`] when the result is too small for an `f64`.
pub fn fisher_exact_p(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let t = Table::new(a, b, c, d);
    if t.lo == t.hi {
        return 1.0;
    }
    let ln_obs = t.ln_weight_from_mode(a);
    if ln_obs < -700.0 {
        return t.ln_p(a, ln_obs).exp();
    }
    let w_obs = ln_obs.exp() * (1.0 + TIE_TOLERANCE);
    let mut total = 1.0;
    let mut selected = if 1.0 <= w_obs { 1.0 } else { 0.0 };

    for dir in [Dir::Up, Dir::Down] {
        let mut x = t.mode;
        let mut w = 1.0;
        while let Some((next, ratio)) = t.step(x, dir) {
            w *= ratio;
            x = next;
            if w == 0.0 {
                break;
            }
            total += w;
            if w <= w_obs {
                selected += w;
                // Beyond this point every term is selected and the terms
                // decay at least geometrically with ratio <= `ratio`.
                if ratio < 1.0 && w * ratio / (1.0 - ratio) < 1e-17 * selected {
                    break;
                }
            }
        }
    }
    (selected / total).min(1.0)
}

/// Natural log of [`fisher_exact_p`], accurate even when `p` underflows.
pub fn fisher_exact_ln_p(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let t = Table::new(a, b, c, d);
    if t.lo == t.hi {
        return 0.0;
    }
    let ln_obs = t.ln_weight_from_mode(a);
    t.ln_p(a, ln_obs).min(0.0)
}

#[derive(Clone, Copy)]
enum Dir {
    Up,
    Down,
}

struct Table {
    n: u64,
    r1: u64,
    c1: u64,
    lo: u64,
    hi: u64,
    mode: u64,
}

impl Table {
    fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        let n = a + b + c + d;
        let r1 = a + b;
        let c1 = a + c;
        let lo = (r1 + c1).saturating_sub(n);
        let hi = r1.min(c1);
        let mode = (((r1 + 1) * (c1 + 1)) / (n + 2)).clamp(lo, hi);
        Self {
            n,
            r1,
            c1,
            lo,
            hi,
            mode,
        }
    }

    /// Ratio of hypergeometric weights for one step from `x`.
    fn step(&self, x: u64, dir: Dir) -> Option<(u64, f64)> {
        match dir {
            Dir::Up if x < self.hi => {
                let num = (self.r1 - x) * (self.c1 - x);
                let den = (x + 1) * (self.n + x + 1 - self.r1 - self.c1);
                Some((x + 1, num as f64 / den as f64))
            }
            Dir::Down if x > self.lo => {
                let num = x * (self.n + x - self.r1 - self.c1);
                let den = (self.r1 - x + 1) * (self.c1 - x + 1);
                Some((x - 1, num as f64 / den as f64))
            }
            _ => None,
        }
    }

    fn ln_weight_from_mode(&self, a: u64) -> f64 {
        let dir = if a >= self.mode { Dir::Up } else { Dir::Down };
        let mut x = self.mode;
        let mut lw = 0.0;
        while x != a {
            let (next, ratio) = self.step(x, dir).expect("observed cell within support");
            lw += ratio.ln();
            x = next;
        }
        lw
    }

    /// Log-space sum over the whole support.
    fn ln_p(&self, a: u64, ln_obs: f64) -> f64 {
        let cutoff = ln_obs + TIE_TOLERANCE.ln_1p();
        let mut all = vec![0.0f64];
        let mut sel = Vec::new();
        if 0.0 <= cutoff {
            sel.push(0.0);
        }
        for dir in [Dir::Up, Dir::Down] {
            let mut x = self.mode;
            let mut lw = 0.0;
            while let Some((next, ratio)) = self.step(x, dir) {
                lw += ratio.ln();
                x = next;
                all.push(lw);
                if lw <= cutoff || x == a {
                    sel.push(lw);
                }
            }
        }
        log_sum_exp(&sel) - log_sum_exp(&all)
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// All edges of one column pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairEdges {
    pub j: usize,
    pub k: usize,
    pub edges: Vec<DependencyEdge>,
}

/// Result of an all-pairs scan, ordered by `(j, k, cat_j, cat_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSet {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Number of column-pair contingency tables examined.
    pub n_tables: usize,
    pub edges: Vec<DependencyEdge>,
}

impl EdgeSet {
    /// Family size for a Bonferroni correction across every edge tested.
    pub fn family_size(&self) -> usize {
        self.edges.len()
    }

    /// Per-edge p threshold giving family-wise error `alpha`. Shown to the
    /// analyst only; nothing filters on it automatically.
    pub fn bonferroni_threshold(&self, alpha: f64) -> f64 {
        alpha / self.family_size().max(1) as f64
    }

    /// Distinct column pairs present.
    pub fn column_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().map(|e| e.key.columns()).collect()
    }
}

const PAIR_CHUNK_COLUMNS: usize = 8;

/// Streams the edges of every column pair `(j, k)`, `j < k`, in order.
///
/// Pairs are computed in parallel a few source columns at a time and handed
/// to `visit` sequentially, so the visiting order and contents are identical
/// to a sequential scan.
pub fn scan_pairs<F>(matrix: &AlignmentMatrix, marg: &MarginalProfile, mut visit: F)
where
    F: FnMut(PairEdges),
{
    let columns = matrix.columns();
    let k_cats = matrix.alphabet().n_categories();
    let len = matrix.n_cols();
    let sources: Vec<usize> = (0..len.saturating_sub(1)).collect();
    for chunk in sources.chunks(PAIR_CHUNK_COLUMNS) {
        let batch: Vec<Vec<PairEdges>> = chunk
            .par_iter()
            .map(|&j| {
                ((j + 1)..len)
                    .map(|k| {
                        let joint = tally(&columns[j], &columns[k], k_cats, j, k);
                        PairEdges {
                            j,
                            k,
                            edges: edge_statistics(&joint, marg),
                        }
                    })
                    .collect()
            })
            .collect();
        for pairs in batch {
            for pair in pairs {
                visit(pair);
            }
        }
    }
}

pub fn all_pairs_scan(matrix: &AlignmentMatrix) -> EdgeSet {
    let marg = marginals(matrix);
    let mut edges = Vec::new();
    let mut n_tables = 0;
    scan_pairs(matrix, &marg, |pair| {
        n_tables += 1;
        edges.extend(pair.edges);
    });
    EdgeSet {
        n_rows: matrix.n_rows(),
        n_cols: matrix.n_cols(),
        n_tables,
        edges,
    }
}

pub const CSV_HEADER: &str =
    "j,cat_j,k,cat_k,observed,expected,raw_residual,std_residual,p_value,state";

pub fn write_csv_row(out: &mut String, e: &DependencyEdge, alphabet: &Alphabet) {
    use std::fmt::Write;
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{}",
        e.key.j,
        alphabet.symbol(e.key.cat_j),
        e.key.k,
        alphabet.symbol(e.key.cat_k),
        e.observed,
        sig_digits(e.expected, 10),
        sig_digits(e.raw_residual, 10),
        sig_digits(e.std_residual, 10),
        sig_digits(e.p_value, 10),
        e.state.as_str()
    )
    .expect("string write");
}

/// Edge table as CSV, floating fields at 10 significant digits.
pub fn edges_to_csv(edges: &[DependencyEdge], alphabet: &Alphabet) -> String {
    let mut out = String::with_capacity(64 * (edges.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for e in edges {
        write_csv_row(&mut out, e, alphabet);
    }
    out
}

/// Parsed edge CSV: exact integer counts plus edit states. Floating columns
/// are recomputed from the counts rather than trusted.
#[derive(Clone, Debug)]
pub struct CsvEdges {
    pub alphabet: Alphabet,
    pub marginals: MarginalProfile,
    pub edges: EdgeSet,
}

/// Rebuilds the full statistics from an unfiltered edge CSV. Marginal counts
/// are recovered from the observed joint counts of each column pair.
pub fn edges_from_csv(text: &str) -> Result<CsvEdges> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::SchemaViolation("missing edge CSV header".into())),
    }
    struct Row {
        j: usize,
        cj: char,
        k: usize,
        ck: char,
        observed: u32,
        state: EdgeState,
    }
    let mut rows = Vec::new();
    for (line_no, line) in lines.enumerate() {
        let f: Vec<&str> = line.trim().split(',').collect();
        let bad = |what: &str| Error::SchemaViolation(format!("line {}: {what}", line_no + 2));
        if f.len() != 10 {
            return Err(bad("expected 10 fields"));
        }
        let one_char = |s: &str| -> Result<char> {
            let mut it = s.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(bad("category must be one character")),
            }
        };
        rows.push(Row {
            j: f[0].parse().map_err(|_| bad("bad j"))?,
            cj: one_char(f[1])?,
            k: f[2].parse().map_err(|_| bad("bad k"))?,
            ck: one_char(f[3])?,
            observed: f[4].parse().map_err(|_| bad("bad observed count"))?,
            state: EdgeState::parse(f[9])?,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut seen: BTreeSet<char> = BTreeSet::new();
    let mut len = 0;
    for r in &rows {
        seen.insert(r.cj);
        seen.insert(r.ck);
        len = len.max(r.k + 1);
    }
    let gap = seen.remove(&crate::alignment::DEFAULT_GAP).then_some(crate::alignment::DEFAULT_GAP);
    let alphabet = Alphabet::new(seen.into_iter().collect(), gap)?;
    let kc = alphabet.n_categories();
    let code = |c: char| alphabet.code(c).ok_or(Error::UnknownSymbol(c));

    // Row sums over cat_k give count(j, M); column sums give count(k, N).
    let mut counts: Vec<Option<Vec<u32>>> = vec![None; len];
    let mut per_pair: std::collections::BTreeMap<(usize, usize), (Vec<u32>, Vec<u32>)> =
        Default::default();
    for r in &rows {
        let entry = per_pair
            .entry((r.j, r.k))
            .or_insert_with(|| (vec![0; kc], vec![0; kc]));
        entry.0[code(r.cj)? as usize] += r.observed;
        entry.1[code(r.ck)? as usize] += r.observed;
    }
    let mut n: Option<u64> = None;
    for (&(j, k), (row_sums, col_sums)) in &per_pair {
        for (col, sums) in [(j, row_sums), (k, col_sums)] {
            let total: u64 = sums.iter().map(|&c| c as u64).sum();
            match n {
                None => n = Some(total),
                Some(t) if t != total => {
                    return Err(Error::InconsistentInputs(format!(
                        "column pair ({j}, {k}) totals {total}, expected {t}"
                    )))
                }
                _ => {}
            }
            match &counts[col] {
                None => counts[col] = Some(sums.clone()),
                Some(prev) if prev != sums => {
                    return Err(Error::InconsistentInputs(format!(
                        "marginal counts of column {col} disagree between pairs"
                    )))
                }
                _ => {}
            }
        }
    }
    let n = n.unwrap_or(0) as usize;
    let counts: Vec<Vec<u32>> = counts
        .into_iter()
        .enumerate()
        .map(|(j, c)| c.ok_or_else(|| Error::InconsistentInputs(format!("column {j} has no edges"))))
        .collect::<Result<_>>()?;
    let marg = MarginalProfile::from_counts(n, alphabet.clone(), counts)?;

    let expected_pairs = len * (len - 1) / 2;
    if per_pair.len() != expected_pairs {
        return Err(Error::InconsistentInputs(format!(
            "{} column pairs present, a full scan of {len} columns has {expected_pairs}",
            per_pair.len()
        )));
    }
    let mut edges = Vec::with_capacity(rows.len());
    for r in &rows {
        let key = EdgeKey::new(r.j, code(r.cj)?, r.k, code(r.ck)?);
        let mut e = DependencyEdge::from_counts(
            key,
            r.observed,
            marg.count(r.j, key.cat_j),
            marg.count(r.k, key.cat_k),
            n,
        );
        e.state = r.state;
        edges.push(e);
    }
    edges.sort_by_key(|e| e.key);
    let supported: usize = (0..len)
        .flat_map(|j| ((j + 1)..len).map(move |k| (j, k)))
        .map(|(j, k)| {
            let a = marg.counts()[j].iter().filter(|&&c| c > 0).count();
            let b = marg.counts()[k].iter().filter(|&&c| c > 0).count();
            a * b
        })
        .sum();
    if supported != edges.len() || edges.windows(2).any(|w| w[0].key == w[1].key) {
        return Err(Error::InconsistentInputs(
            "edge CSV is not a complete, duplicate-free scan".into(),
        ));
    }
    Ok(CsvEdges {
        alphabet,
        marginals: marg,
        edges: EdgeSet {
            n_rows: n,
            n_cols: len,
            n_tables: expected_pairs,
            edges,
        },
    })
}
