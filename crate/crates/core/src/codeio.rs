//! Nonbinary parity-check codes: the text file format, syndrome checks and a
//! systematic encoder derived by Gaussian elimination over GF(2^q).
//!
//! File format (UTF-8, whitespace separated, 1-based columns):
//!
//! ```text
//! n m q
//! deg  i1 h1  i2 h2 ... ideg hdeg      <- one line per check, m lines
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use thiserror::Error;

use crate::field::{FieldContext, FieldError, Symbol};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: malformed header, expected `n m q`")]
    MalformedHeader { line: usize },
    #[error("line {line}: {source}")]
    Field { line: usize, source: FieldError },
    #[error("line {line}: malformed check row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: coefficient {value} out of field GF(2^{q})")]
    CoefficientOutOfField { line: usize, value: u64, q: u32 },
    #[error("line {line}: zero coefficient at column {col}")]
    ZeroCoefficient { line: usize, col: usize },
    #[error("line {line}: column {col} out of range 1..={n}")]
    ColumnOutOfRange { line: usize, col: usize, n: usize },
    #[error("line {line}: duplicate entry for column {col}")]
    DuplicateEntry { line: usize, col: usize },
    #[error("line {line}: check touches fewer than 2 columns")]
    DegenerateCheck { line: usize },
    #[error("expected {expected} check rows, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodeError {
    #[error("word has length {got}, code length is {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid code: {0}")]
    Invalid(String),
}

/// Sparse `m x n` parity-check matrix over GF(2^q).
///
/// Each check keeps its entries in the order they were given, which fixes
/// the chain order used by the three-variable decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct ParityCheckCode {
    n: usize,
    field: Arc<FieldContext>,
    checks: Vec<Vec<(usize, Symbol)>>,
}

impl ParityCheckCode {
    /// Builds a code from per-check `(column, coefficient)` lists (0-based columns).
    pub fn new(
        n: usize,
        field: Arc<FieldContext>,
        checks: Vec<Vec<(usize, Symbol)>>,
    ) -> Result<Self, CodeError> {
        for (j, row) in checks.iter().enumerate() {
            let mut seen = HashSet::new();
            for &(col, h) in row {
                if col >= n {
                    return Err(CodeError::Invalid(format!(
                        "check {j}: column {col} out of range"
                    )));
                }
                if h == 0 || !field.contains(h as u32) {
                    return Err(CodeError::Invalid(format!(
                        "check {j}: coefficient {h} not a nonzero field element"
                    )));
                }
                if !seen.insert(col) {
                    return Err(CodeError::Invalid(format!(
                        "check {j}: duplicate column {col}"
                    )));
                }
            }
            if seen.len() < 2 {
                return Err(CodeError::Invalid(format!(
                    "check {j}: fewer than 2 columns"
                )));
            }
        }
        Ok(ParityCheckCode { n, field, checks })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.checks.len()
    }

    pub fn q(&self) -> u32 {
        self.field.q()
    }

    pub fn field(&self) -> &Arc<FieldContext> {
        &self.field
    }

    pub fn checks(&self) -> &[Vec<(usize, Symbol)>] {
        &self.checks
    }

    /// All nonzero entries as `(row, col, coefficient)`, 0-based.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Symbol)> + '_ {
        self.checks
            .iter()
            .enumerate()
            .flat_map(|(j, row)| row.iter().map(move |&(i, h)| (j, i, h)))
    }

    /// True iff every check equation evaluates to zero in the field.
    pub fn check_syndrome(&self, word: &[Symbol]) -> Result<bool, CodeError> {
        if word.len() != self.n {
            return Err(CodeError::LengthMismatch {
                expected: self.n,
                got: word.len(),
            });
        }
        Ok(self.syndrome_holds(word))
    }

    pub(crate) fn syndrome_holds(&self, word: &[Symbol]) -> bool {
        self.checks.iter().all(|row| {
            row.iter()
                .fold(0, |acc, &(i, h)| acc ^ self.field.mul(h, word[i]))
                == 0
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {}", self.n, self.m(), self.q());
        for row in &self.checks {
            let _ = write!(out, "{}", row.len());
            for &(i, h) in row {
                let _ = write!(out, "  {} {}", i + 1, h);
            }
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ParseError> {
        let text =
            std::fs::read_to_string(path.as_ref()).map_err(|e| ParseError::Io(e.to_string()))?;
        parse_code(&text)
    }
}

fn parse_int(tok: &str, line: usize, what: &str) -> Result<u64, ParseError> {
    tok.parse::<u64>().map_err(|_| ParseError::MalformedRow {
        line,
        reason: format!("{what} `{tok}` is not a nonnegative integer"),
    })
}

/// Parses the text code format; see the module docs.
pub fn parse_code(text: &str) -> Result<ParityCheckCode, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or(ParseError::MalformedHeader { line: 1 })?;
    let nums: Vec<u64> = header
        .split_whitespace()
        .map(|t| t.parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|_| ParseError::MalformedHeader { line: hline })?;
    let [n, m, q] = nums[..] else {
        return Err(ParseError::MalformedHeader { line: hline });
    };
    if n == 0 {
        return Err(ParseError::MalformedHeader { line: hline });
    }
    let (n, m) = (n as usize, m as usize);
    let field = FieldContext::new(q as u32).map_err(|source| ParseError::Field {
        line: hline,
        source,
    })?;
    let q = q as u32;

    let mut checks = Vec::with_capacity(m);
    for (line, l) in lines {
        if checks.len() == m {
            return Err(ParseError::RowCount {
                expected: m,
                found: m + 1,
            });
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        let deg = parse_int(toks[0], line, "degree")? as usize;
        if toks.len() != 1 + 2 * deg {
            return Err(ParseError::MalformedRow {
                line,
                reason: format!(
                    "degree {deg} needs {} column/coefficient tokens, found {}",
                    2 * deg,
                    toks.len() - 1
                ),
            });
        }
        let mut row = Vec::with_capacity(deg);
        let mut seen = HashSet::new();
        for pair in toks[1..].chunks(2) {
            let col = parse_int(pair[0], line, "column")? as usize;
            let value = parse_int(pair[1], line, "coefficient")?;
            if col == 0 || col > n {
                return Err(ParseError::ColumnOutOfRange { line, col, n });
            }
            if value >= (1u64 << q) {
                return Err(ParseError::CoefficientOutOfField { line, value, q });
            }
            if value == 0 {
                return Err(ParseError::ZeroCoefficient { line, col });
            }
            if !seen.insert(col) {
                return Err(ParseError::DuplicateEntry { line, col });
            }
            row.push((col - 1, value as Symbol));
        }
        if row.len() < 2 {
            return Err(ParseError::DegenerateCheck { line });
        }
        checks.push(row);
    }
    if checks.len() != m {
        return Err(ParseError::RowCount {
            expected: m,
            found: checks.len(),
        });
    }
    Ok(ParityCheckCode {
        n,
        field: Arc::new(field),
        checks,
    })
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncoderError {
    #[error("parity-check matrix has full column rank; the code contains only the zero word")]
    TrivialCode,
}

/// Systematic encoder: message symbols fill the free (non-pivot) columns of
/// the reduced row echelon form of H; pivot symbols are solved from them.
#[derive(Debug, Clone)]
pub struct Encoder {
    n: usize,
    field: Arc<FieldContext>,
    pivots: Vec<usize>,
    free: Vec<usize>,
    // rref rows restricted to the free columns, one per pivot
    parity: Vec<Vec<Symbol>>,
    dropped_rows: usize,
}

impl Encoder {
    /// Message length `n - rank`.
    pub fn k(&self) -> usize {
        self.free.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// Rows found linearly dependent during elimination.
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    /// Column positions carrying message symbols.
    pub fn message_positions(&self) -> &[usize] {
        &self.free
    }

    pub fn encode(&self, message: &[Symbol]) -> Vec<Symbol> {
        assert_eq!(message.len(), self.k(), "message length");
        let mut word = vec![0 as Symbol; self.n];
        for (&col, &s) in self.free.iter().zip(message) {
            word[col] = s;
        }
        // Pivot row: u_p + sum_f r_f u_f = 0, and -x = x in characteristic two.
        for (row, &p) in self.parity.iter().zip(&self.pivots) {
            word[p] = row
                .iter()
                .zip(message)
                .fold(0, |acc, (&r, &s)| acc ^ self.field.mul(r, s));
        }
        word
    }

    pub fn random_codeword<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Symbol> {
        let order = self.field.order();
        let msg: Vec<Symbol> = (0..self.k())
            .map(|_| rng.random_range(0..order) as Symbol)
            .collect();
        self.encode(&msg)
    }
}

/// Gaussian elimination over GF(2^q) into reduced row echelon form.
///
/// Dependent rows are dropped with a warning. A code whose H has rank `n`
/// contains only the zero word and yields [`EncoderError::TrivialCode`].
pub fn derive_encoder(code: &ParityCheckCode) -> Result<Encoder, EncoderError> {
    let f = code.field();
    let n = code.n();
    let mut rows: Vec<Vec<Symbol>> = code
        .checks()
        .iter()
        .map(|row| {
            let mut dense = vec![0 as Symbol; n];
            for &(i, h) in row {
                dense[i] = h;
            }
            dense
        })
        .collect();

    let mut pivots = Vec::new();
    let mut r = 0;
    // Pivots are taken from the right so the message occupies the leading columns.
    for col in (0..n).rev() {
        if r == rows.len() {
            break;
        }
        let Some(sel) = (r..rows.len()).find(|&k| rows[k][col] != 0) else {
            continue;
        };
        rows.swap(r, sel);
        let inv = f.inv(rows[r][col]).expect("nonzero pivot");
        for x in rows[r].iter_mut() {
            *x = f.mul(*x, inv);
        }
        let pivot_row = rows[r].clone();
        for (k, other) in rows.iter_mut().enumerate() {
            if k == r || other[col] == 0 {
                continue;
            }
            let factor = other[col];
            for (x, &p) in other.iter_mut().zip(&pivot_row) {
                *x ^= f.mul(factor, p);
            }
        }
        pivots.push(col);
        r += 1;
    }

    let dropped_rows = code.m() - pivots.len();
    if dropped_rows > 0 {
        log::warn!(
            "parity-check matrix is rank deficient: {dropped_rows} of {} rows dependent",
            code.m()
        );
    }
    if pivots.len() == n {
        return Err(EncoderError::TrivialCode);
    }
    let pivot_set: HashSet<usize> = pivots.iter().copied().collect();
    let free: Vec<usize> = (0..n).filter(|c| !pivot_set.contains(c)).collect();
    let parity = rows[..pivots.len()]
        .iter()
        .map(|row| free.iter().map(|&c| row[c]).collect())
        .collect();

    Ok(Encoder {
        n,
        field: Arc::clone(f),
        pivots,
        free,
        parity,
        dropped_rows,
    })
}

/// Random code with every column of degree `col_deg` and every check of
/// degree `row_deg`, coefficients uniform over the nonzero elements.
/// Sockets are matched by shuffling; rows that hit a column twice are
/// re-drawn. Intended for experiments and tests, not code design.
pub fn random_regular_code<R: Rng + ?Sized>(
    n: usize,
    col_deg: usize,
    row_deg: usize,
    field: Arc<FieldContext>,
    rng: &mut R,
) -> Result<ParityCheckCode, CodeError> {
    if row_deg < 2 || !(n * col_deg).is_multiple_of(row_deg) || row_deg > n {
        return Err(CodeError::Invalid(format!(
            "no ({col_deg},{row_deg})-regular code of length {n}"
        )));
    }
    let m = n * col_deg / row_deg;
    let mut sockets: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, col_deg)).collect();
    for _attempt in 0..1000 {
        sockets.shuffle(rng);
        let ok = sockets.chunks(row_deg).all(|c| {
            let mut s: Vec<_> = c.to_vec();
            s.sort_unstable();
            s.windows(2).all(|w| w[0] != w[1])
        });
        if !ok {
            continue;
        }
        let nz = field.nonzero();
        let checks = sockets
            .chunks(row_deg)
            .map(|c| {
                c.iter()
                    .map(|&i| (i, rng.random_range(1..=nz) as Symbol))
                    .collect()
            })
            .collect::<Vec<_>>();
        debug_assert_eq!(checks.len(), m);
        return ParityCheckCode::new(n, field, checks);
    }
    Err(CodeError::Invalid(
        "could not place sockets without repeated columns".into(),
    ))
}

/// Random code with `m` checks whose degrees are drawn from `degrees`,
/// placed on distinct random columns.
pub fn random_code<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    degrees: std::ops::RangeInclusive<usize>,
    field: Arc<FieldContext>,
    rng: &mut R,
) -> Result<ParityCheckCode, CodeError> {
    let nz = field.nonzero();
    let cols: Vec<usize> = (0..n).collect();
    let checks = (0..m)
        .map(|_| {
            let d = rng.random_range(degrees.clone()).min(n);
            cols.choose_multiple(rng, d)
                .map(|&i| (i, rng.random_range(1..=nz) as Symbol))
                .collect()
        })
        .collect();
    ParityCheckCode::new(n, field, checks)
}
