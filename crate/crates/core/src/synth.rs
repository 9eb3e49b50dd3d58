//! Synthetic families with planted structure, used for demos and for
//! checking that the pipeline recovers what was put in.

use rand::Rng;

use crate::alignment::{Alphabet, AlignmentMatrix};

pub const NUCLEOTIDES: [char; 4] = ['A', 'C', 'G', 'T'];

/// Watson-Crick partners as `(code, code)` over `ACGT`.
const COMPLEMENTS: [(u8, u8); 4] = [(0, 3), (3, 0), (2, 1), (1, 2)];

fn nucleotide_alphabet() -> Alphabet {
    Alphabet::new(NUCLEOTIDES.to_vec(), None).expect("valid alphabet")
}

/// Uniform random `ACGT` family of `n` rows and `l` columns with each column
/// pair in `pairs` forced to a complementary base pair in a `compliance`
/// fraction of rows.
pub fn stem_family<R: Rng>(
    rng: &mut R,
    n: usize,
    l: usize,
    pairs: &[(usize, usize)],
    compliance: f64,
) -> AlignmentMatrix {
    let mut cells: Vec<u8> = (0..n * l).map(|_| rng.gen_range(0..4)).collect();
    for i in 0..n {
        for &(a, b) in pairs {
            if rng.gen::<f64>() < compliance {
                let (x, y) = COMPLEMENTS[rng.gen_range(0..4)];
                cells[i * l + a] = x;
                cells[i * l + b] = y;
            }
        }
    }
    AlignmentMatrix::from_codes(n, l, cells, nucleotide_alphabet(), None).expect("valid shape")
}

/// Nine-column demo in the spirit of a small RNA alignment: two nested stems
/// (columns 1-7 and 2-6) plus a looser pair 0-8.
pub fn demo_nine<R: Rng>(rng: &mut R, n: usize) -> AlignmentMatrix {
    let mut m = stem_family(rng, n, 9, &[(1, 7), (2, 6)], 0.95);
    let coupled = stem_family(rng, n, 9, &[(0, 8)], 0.6);
    let mut cells = m.cells().to_vec();
    for i in 0..n {
        cells[i * 9] = coupled.get(i, 0);
        cells[i * 9 + 8] = coupled.get(i, 8);
    }
    m = AlignmentMatrix::from_codes(n, 9, cells, nucleotide_alphabet(), None).expect("valid shape");
    m
}

/// Family with a misaligned subset: after planting the couplings, a
/// `shifted_fraction` of rows is moved right by a shift drawn uniformly from
/// `shifts`, with random fill on the left.
pub struct EchoFamily {
    pub matrix: AlignmentMatrix,
    /// Shift each row received; realignment should recover these.
    pub truth: Vec<i32>,
    pub pairs: Vec<(usize, usize)>,
}

pub const ECHO_PAIRS: [(usize, usize); 8] = [
    (6, 8),
    (7, 11),
    (9, 10),
    (12, 15),
    (13, 17),
    (14, 19),
    (16, 18),
    (20, 22),
];

pub fn echo_family<R: Rng>(
    rng: &mut R,
    n: usize,
    l: usize,
    pairs: &[(usize, usize)],
    compliance: f64,
    shifted_fraction: f64,
    shifts: &[i32],
) -> EchoFamily {
    let aligned = stem_family(rng, n, l, pairs, compliance);
    let mut cells = aligned.cells().to_vec();
    let mut truth = vec![0i32; n];
    for i in 0..n {
        if rng.gen::<f64>() >= shifted_fraction {
            continue;
        }
        let s = shifts[rng.gen_range(0..shifts.len())];
        truth[i] = s;
        let row = &mut cells[i * l..(i + 1) * l];
        let src = aligned.row(i);
        for c in 0..l {
            let from = c as i64 - s as i64;
            row[c] = if (0..l as i64).contains(&from) {
                src[from as usize]
            } else {
                rng.gen_range(0..4)
            };
        }
    }
    EchoFamily {
        matrix: AlignmentMatrix::from_codes(n, l, cells, nucleotide_alphabet(), None)
            .expect("valid shape"),
        truth,
        pairs: pairs.to_vec(),
    }
}

/// Two-subfamily protein-like family with a six-residue coupled motif
/// (a four-residue lid "tetrad" plus two "di" residues), after the zinc
/// versus non-zinc lid variants of adenylate kinase.
pub struct AdkFamily {
    pub matrix: AlignmentMatrix,
    /// `(name, sequence)`: wild type first, then Di, Hexa, Tetra, Chim.
    pub variants: Vec<(String, String)>,
}

pub const ADK_SYMBOLS: &str = "ACDEGHKNQRSTWY";
pub const ADK_LEN: usize = 32;
pub const ADK_TETRAD: [usize; 4] = [4, 7, 24, 27];
pub const ADK_DI: [usize; 2] = [10, 29];
pub const ADK_CONTEXT: [usize; 2] = [14, 18];
pub const ADK_MOTIF: [usize; 6] = [4, 7, 10, 24, 27, 29];

/// Twelve column-pair dependencies spanning tetrad, di and context residues.
pub const ADK_PAIRS_12: [(usize, usize); 12] = [
    (4, 7),
    (24, 27),
    (4, 24),
    (4, 27),
    (7, 24),
    (7, 27),
    (4, 14),
    (18, 27),
    (4, 10),
    (7, 29),
    (10, 24),
    (27, 29),
];

/// The six tetrad-internal pairs only.
pub const ADK_PAIRS_TETRAD: [(usize, usize); 6] =
    [(4, 7), (4, 24), (4, 27), (7, 24), (7, 27), (24, 27)];

pub fn adk_family<R: Rng>(rng: &mut R, n: usize) -> AdkFamily {
    let symbols: Vec<char> = ADK_SYMBOLS.chars().collect();
    let di_choices: Vec<char> = "TGREKA".chars().collect();
    let mut rows: Vec<Vec<char>> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut r: Vec<char> = (0..ADK_LEN)
            .map(|_| symbols[rng.gen_range(0..symbols.len())])
            .collect();
        let mut motif: Vec<(usize, char)> = Vec::new();
        if rng.gen::<f64>() < 0.6 {
            motif.extend(ADK_TETRAD.iter().copied().zip("HSDT".chars()));
            motif.extend(ADK_DI.iter().copied().zip("RE".chars()));
            motif.extend(ADK_CONTEXT.iter().copied().zip("NQ".chars()));
        } else {
            let tetrad = if rng.gen::<f64>() < 0.25 { "CCCD" } else { "CCCC" };
            motif.extend(ADK_TETRAD.iter().copied().zip(tetrad.chars()));
            motif.extend(ADK_CONTEXT.iter().copied().zip("YW".chars()));
            for &d in &ADK_DI {
                motif.push((d, di_choices[rng.gen_range(0..di_choices.len())]));
            }
        }
        for (p, s) in motif {
            if rng.gen::<f64>() < 0.95 {
                r[p] = s;
            }
        }
        rows.push(r);
    }
    let mut wt = rows[n - 1].clone();
    for (&p, c) in ADK_MOTIF.iter().zip("CCTCDG".chars()) {
        wt[p] = c;
    }
    for (&p, c) in ADK_CONTEXT.iter().zip("YW".chars()) {
        wt[p] = c;
    }
    let variant = |name: &str, motif: &str| {
        let mut s = wt.clone();
        for (&p, c) in ADK_MOTIF.iter().zip(motif.chars()) {
            s[p] = c;
        }
        (name.to_string(), s.into_iter().collect::<String>())
    };
    let variants = vec![
        variant("wild-type", "CCTCDG"),
        variant("Di", "CCRCDE"),
        variant("Hexa", "HSRDTE"),
        variant("Tetra", "HSTDTG"),
        variant("Chim", "CCTDTG"),
    ];
    let text: Vec<String> = rows.into_iter().map(|r| r.into_iter().collect()).collect();
    let alphabet = Alphabet::new(symbols, None).expect("valid alphabet");
    AdkFamily {
        matrix: AlignmentMatrix::with_alphabet(&text, alphabet, None).expect("valid rows"),
        variants,
    }
}
