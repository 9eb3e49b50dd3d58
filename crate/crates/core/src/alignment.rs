//! Categorical alignments: parsing, validation and persistence.
//!
//! Cells are stored as compact category codes. Codes `0..symbols.len()` are
//! the alphabet's symbols in sorted order; the gap, when present, always takes
//! the last code so that adding a gap never renumbers existing categories.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GAP: char = '-';
pub const MAX_SYMBOLS: usize = 26;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Alphabet {
    symbols: Vec<char>,
    gap: Option<char>,
}

impl Alphabet {
    pub fn new(symbols: Vec<char>, gap: Option<char>) -> Result<Self> {
        if symbols.is_empty() && gap.is_none() {
            return Err(Error::InvalidAlphabet("no categories".into()));
        }
        if symbols.len() > MAX_SYMBOLS {
            return Err(Error::AlphabetOverflow(symbols.len()));
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(Error::InvalidAlphabet(format!("duplicate symbol {s:?}")));
            }
            if Some(*s) == gap {
                return Err(Error::InvalidAlphabet(format!(
                    "gap {s:?} doubles as a category symbol"
                )));
            }
        }
        Ok(Self { symbols, gap })
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn gap(&self) -> Option<char> {
        self.gap
    }

    /// Number of counted categories, gap included.
    pub fn n_categories(&self) -> usize {
        self.symbols.len() + usize::from(self.gap.is_some())
    }

    pub fn gap_code(&self) -> Option<u8> {
        self.gap.map(|_| self.symbols.len() as u8)
    }

    pub fn code(&self, symbol: char) -> Option<u8> {
        let symbol = symbol.to_ascii_uppercase();
        if Some(symbol) == self.gap {
            return self.gap_code();
        }
        self.symbols.iter().position(|&s| s == symbol).map(|p| p as u8)
    }

    pub fn symbol(&self, code: u8) -> char {
        let c = code as usize;
        if c < self.symbols.len() {
            self.symbols[c]
        } else {
            self.gap.expect("code outside alphabet")
        }
    }

    /// Same alphabet with a gap category, adding `gap` if none exists yet.
    pub fn with_gap(&self, gap: char) -> Alphabet {
        Alphabet {
            symbols: self.symbols.clone(),
            gap: Some(self.gap.unwrap_or(gap)),
        }
    }

    /// Concatenated symbols, e.g. `"ACGT"`.
    pub fn symbols_string(&self) -> String {
        self.symbols.iter().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Plain,
    Fasta,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plain" | "txt" => Ok(Format::Plain),
            "fasta" | "fa" => Ok(Format::Fasta),
            other => Err(Error::InvalidParameter(format!("unknown format {other:?}"))),
        }
    }
}

/// An `n x L` matrix of category codes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignmentMatrix {
    n_rows: usize,
    n_cols: usize,
    cells: Vec<u8>,
    alphabet: Alphabet,
    row_ids: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct AlignmentDoc {
    alphabet: String,
    gap: Option<char>,
    row_ids: Option<Vec<String>>,
    rows: Vec<String>,
}

fn is_symbol(c: char) -> bool {
    c.is_ascii_alphabetic()
}

impl AlignmentMatrix {
    /// Builds a matrix from raw rows, inferring the alphabet as the sorted set
    /// of letters present. `-` is the gap.
    pub fn from_rows<S: AsRef<str>>(rows: &[S], row_ids: Option<Vec<String>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut seen = [false; 26];
        let mut has_gap = false;
        for (i, row) in rows.iter().enumerate() {
            for (j, c) in row.as_ref().chars().enumerate() {
                let u = c.to_ascii_uppercase();
                if u == DEFAULT_GAP {
                    has_gap = true;
                } else if is_symbol(u) {
                    seen[(u as u8 - b'A') as usize] = true;
                } else {
                    return Err(Error::InvalidSymbol {
                        symbol: c,
                        row: i,
                        col: j,
                    });
                }
            }
        }
        let symbols: Vec<char> = (0..26u8)
            .filter(|&i| seen[i as usize])
            .map(|i| (b'A' + i) as char)
            .collect();
        let alphabet = Alphabet::new(symbols, has_gap.then_some(DEFAULT_GAP))?;
        Self::with_alphabet(rows, alphabet, row_ids)
    }

    /// Builds a matrix over a fixed alphabet; symbols outside it are errors.
    pub fn with_alphabet<S: AsRef<str>>(
        rows: &[S],
        alphabet: Alphabet,
        row_ids: Option<Vec<String>>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n_cols = rows[0].as_ref().chars().count();
        let mut cells = Vec::with_capacity(rows.len() * n_cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            let len = row.chars().count();
            if len != n_cols {
                return Err(Error::RaggedRows {
                    row: i,
                    expected: n_cols,
                    found: len,
                });
            }
            for (j, c) in row.chars().enumerate() {
                let code = alphabet.code(c).ok_or(Error::InvalidSymbol {
                    symbol: c,
                    row: i,
                    col: j,
                })?;
                cells.push(code);
            }
        }
        if let Some(ids) = &row_ids {
            if ids.len() != rows.len() {
                return Err(Error::InconsistentInputs(format!(
                    "{} row ids for {} rows",
                    ids.len(),
                    rows.len()
                )));
            }
        }
        Self::from_codes(rows.len(), n_cols, cells, alphabet, row_ids)
    }

    /// Builds a matrix directly from category codes (row-major).
    pub fn from_codes(
        n_rows: usize,
        n_cols: usize,
        cells: Vec<u8>,
        alphabet: Alphabet,
        row_ids: Option<Vec<String>>,
    ) -> Result<Self> {
        if n_rows < 2 || n_cols < 2 {
            return Err(Error::TooSmall {
                rows: n_rows,
                cols: n_cols,
            });
        }
        if cells.len() != n_rows * n_cols {
            return Err(Error::InconsistentInputs(format!(
                "{} cells for a {n_rows} x {n_cols} matrix",
                cells.len()
            )));
        }
        let k = alphabet.n_categories();
        if let Some(pos) = cells.iter().position(|&c| c as usize >= k) {
            return Err(Error::InconsistentInputs(format!(
                "category code {} at cell {pos} outside alphabet of {k}",
                cells[pos]
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            cells,
            alphabet,
            row_ids,
        })
    }

    pub fn parse(text: &str, format: Format) -> Result<Self> {
        match format {
            Format::Plain => {
                let rows: Vec<&str> = text
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .collect();
                if rows.is_empty() {
                    return Err(Error::EmptyInput);
                }
                Self::from_rows(&rows, None)
            }
            Format::Fasta => {
                let mut ids = Vec::new();
                let mut rows: Vec<String> = Vec::new();
                for line in text.lines() {
                    let line = line.trim();
                    if line.is_empty() {
                        continue;
                    }
                    if let Some(header) = line.strip_prefix('>') {
                        let id = header.split_whitespace().next().unwrap_or("").to_string();
                        ids.push(id);
                        rows.push(String::new());
                    } else {
                        match rows.last_mut() {
                            Some(seq) => seq.push_str(line),
                            None => {
                                return Err(Error::SchemaViolation(
                                    "sequence data before the first FASTA header".into(),
                                ))
                            }
                        }
                    }
                }
                if rows.is_empty() {
                    return Err(Error::EmptyInput);
                }
                Self::from_rows(&rows, Some(ids))
            }
        }
    }

    /// Guesses the format from the first non-blank character.
    pub fn parse_auto(text: &str) -> Result<Self> {
        let first = text.trim_start().chars().next().ok_or(Error::EmptyInput)?;
        if first == '{' {
            Self::from_json(text)
        } else if first == '>' {
            Self::parse(text, Format::Fasta)
        } else {
            Self::parse(text, Format::Plain)
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn row_ids(&self) -> Option<&[String]> {
        self.row_ids.as_deref()
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.n_cols + col]
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.cells[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn column(&self, col: usize) -> Vec<u8> {
        (0..self.n_rows).map(|i| self.get(i, col)).collect()
    }

    /// Column-major copy of the cells.
    pub fn columns(&self) -> Vec<Vec<u8>> {
        (0..self.n_cols).map(|j| self.column(j)).collect()
    }

    pub fn row_string(&self, row: usize) -> String {
        self.row(row).iter().map(|&c| self.alphabet.symbol(c)).collect()
    }

    pub fn rows_as_strings(&self) -> Vec<String> {
        (0..self.n_rows).map(|i| self.row_string(i)).collect()
    }

    /// Encodes an external sequence over this matrix's alphabet.
    pub fn encode(&self, seq: &str) -> Result<Vec<u8>> {
        encode_sequence(&self.alphabet, self.n_cols, seq)
    }

    pub fn to_plain(&self) -> String {
        let mut out = String::with_capacity(self.n_rows * (self.n_cols + 1));
        for i in 0..self.n_rows {
            out.push_str(&self.row_string(i));
            out.push('\n');
        }
        out
    }

    pub fn to_fasta(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n_rows {
            let id = self
                .row_ids
                .as_ref()
                .map(|ids| ids[i].clone())
                .unwrap_or_else(|| format!("seq{}", i + 1));
            out.push('>');
            out.push_str(&id);
            out.push('\n');
            out.push_str(&self.row_string(i));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let doc = AlignmentDoc {
            alphabet: self.alphabet.symbols_string(),
            gap: self.alphabet.gap(),
            row_ids: self.row_ids.clone(),
            rows: self.rows_as_strings(),
        };
        serde_json::to_string_pretty(&doc).expect("alignment serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: AlignmentDoc = serde_json::from_str(text)?;
        let symbols: Vec<char> = doc.alphabet.chars().map(|c| c.to_ascii_uppercase()).collect();
        let alphabet = Alphabet::new(symbols, doc.gap)?;
        Self::with_alphabet(&doc.rows, alphabet, doc.row_ids)
    }

    pub fn validate(&self) -> ValidationReport {
        let gap = self.alphabet.gap_code();
        let columns = (0..self.n_cols)
            .map(|j| {
                let mut counts = vec![0usize; self.alphabet.n_categories()];
                for i in 0..self.n_rows {
                    counts[self.get(i, j) as usize] += 1;
                }
                let distinct = counts.iter().filter(|&&c| c > 0).count();
                let gap_count = gap.map_or(0, |g| counts[g as usize]);
                let all_gap = gap_count == self.n_rows;
                let coverage = counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(code, &c)| (self.alphabet.symbol(code as u8), c))
                    .collect();
                ColumnReport {
                    index: j,
                    coverage,
                    distinct,
                    constant: distinct == 1 && !all_gap,
                    all_gap,
                }
            })
            .collect();
        ValidationReport {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            columns,
        }
    }

    /// Returns a copy carrying a gap category (added if missing).
    pub fn with_gap(&self, gap: char) -> AlignmentMatrix {
        AlignmentMatrix {
            alphabet: self.alphabet.with_gap(gap),
            ..self.clone()
        }
    }

    pub(crate) fn replace_cells(&self, cells: Vec<u8>, alphabet: Alphabet) -> AlignmentMatrix {
        debug_assert_eq!(cells.len(), self.cells.len());
        AlignmentMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            cells,
            alphabet,
            row_ids: self.row_ids.clone(),
        }
    }
}

pub(crate) fn encode_sequence(alphabet: &Alphabet, len: usize, seq: &str) -> Result<Vec<u8>> {
    let found = seq.chars().count();
    if found != len {
        return Err(Error::LengthMismatch {
            expected: len,
            found,
        });
    }
    seq.chars()
        .map(|c| alphabet.code(c).ok_or(Error::UnknownSymbol(c)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnReport {
    pub index: usize,
    pub coverage: BTreeMap<char, usize>,
    pub distinct: usize,
    /// Exactly one non-gap category.
    pub constant: bool,
    pub all_gap: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_rows: usize,
    pub n_cols: usize,
    pub columns: Vec<ColumnReport>,
}

impl ValidationReport {
    pub fn constant_columns(&self) -> Vec<usize> {
        self.columns.iter().filter(|c| c.constant).map(|c| c.index).collect()
    }

    pub fn all_gap_columns(&self) -> Vec<usize> {
        self.columns.iter().filter(|c| c.all_gap).map(|c| c.index).collect()
    }
}
