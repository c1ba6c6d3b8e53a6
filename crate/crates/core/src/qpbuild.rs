//! Builds the relaxed decoding model from a parity-check code.
//!
//! Every check of degree `d` is chained into `d - 2` three-variable checks
//! using `d - 3` auxiliary symbols. Each three-variable check contributes
//! `2^q - 1` groups of four inequalities, one group per nonzero `ell`:
//! the parity of the bits of `h_k u_k` selected by `ell` must satisfy the
//! binary three-variable parity polytope. After those come one simplex row
//! per extended variable (its one-hot block sums to at most 1).
//!
//! The constraint matrix has entries in {-1, 0, +1} only and is never
//! materialized: rows are generated from per-coefficient support tables,
//! and `A v` / `A^T y` are computed with signed gathers and scatters.

use std::io::{self, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::codeio::ParityCheckCode;
use crate::field::{FieldContext, Symbol};

/// Sign pattern of the four parity-polytope rows (columns are the three slots).
pub const PARITY_SIGNS: [[i8; 3]; 4] = [[1, -1, -1], [-1, 1, -1], [-1, -1, 1], [1, 1, 1]];
/// Right-hand side of the four parity-polytope rows.
pub const PARITY_RHS: [i32; 4] = [0, 0, 0, 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("check {check} has unsupported check degree {degree} (need at least 3)")]
    UnsupportedDegree { check: usize, degree: usize },
    #[error("proximal shift epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
}

/// `h1 u1 + h2 u2 + h3 u3 = 0` over three distinct extended variables.
/// Auxiliary slots always carry coefficient 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThreeVarCheck {
    pub vars: [usize; 3],
    pub coeffs: [Symbol; 3],
    /// Row of the original check this came from.
    pub origin: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub checks: Vec<ThreeVarCheck>,
    /// Auxiliary variables get indices `n..n + n_aux`.
    pub n_aux: usize,
}

/// Chains each check `(u_1, ..., u_d)` into
/// `(u_1, u_2, g_1)`, `(g_t, u_{t+2}, g_{t+1})` for `t = 1..=d-4`, and
/// `(g_{d-3}, u_{d-1}, u_d)`; a degree-3 check is emitted unchanged.
pub fn decompose(code: &ParityCheckCode) -> Result<Decomposition, ModelError> {
    let n = code.n();
    let mut checks = Vec::new();
    let mut next_aux = n;
    for (j, row) in code.checks().iter().enumerate() {
        let d = row.len();
        if d < 3 {
            return Err(ModelError::UnsupportedDegree {
                check: j,
                degree: d,
            });
        }
        if d == 3 {
            checks.push(ThreeVarCheck {
                vars: [row[0].0, row[1].0, row[2].0],
                coeffs: [row[0].1, row[1].1, row[2].1],
                origin: j,
            });
            continue;
        }
        let mut g = next_aux;
        next_aux += 1;
        checks.push(ThreeVarCheck {
            vars: [row[0].0, row[1].0, g],
            coeffs: [row[0].1, row[1].1, 1],
            origin: j,
        });
        for &(u, h) in &row[2..d - 2] {
            let g_next = next_aux;
            next_aux += 1;
            checks.push(ThreeVarCheck {
                vars: [g, u, g_next],
                coeffs: [1, h, 1],
                origin: j,
            });
            g = g_next;
        }
        checks.push(ThreeVarCheck {
            vars: [g, row[d - 2].0, row[d - 1].0],
            coeffs: [1, row[d - 2].1, row[d - 1].1],
            origin: j,
        });
    }
    Ok(Decomposition {
        checks,
        n_aux: next_aux - n,
    })
}

/// For a fixed coefficient `h`: for every nonzero `ell`, the offsets
/// `j - 1` with `parity(ell & (j*h)) = 1`. Each list has `2^(q-1)` entries.
#[derive(Debug, Clone)]
struct SupportTable {
    half: usize,
    offsets: Vec<u8>,
}

impl SupportTable {
    fn new(field: &FieldContext, h: Symbol) -> Self {
        let half = field.order() / 2;
        let mut offsets = Vec::with_capacity(field.nonzero() * half);
        for ell in 1..field.order() {
            let row = field.bit_row_after_permutation(ell as Symbol, h);
            offsets.extend(
                row.iter()
                    .enumerate()
                    .filter(|(_, &r)| r == 1)
                    .map(|(j, _)| j as u8),
            );
        }
        SupportTable { half, offsets }
    }

    #[inline]
    fn get(&self, ell: usize) -> &[u8] {
        &self.offsets[(ell - 1) * self.half..ell * self.half]
    }
}

/// One sparse row: `(sign, column)` pairs and its right-hand side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseRow {
    pub entries: Vec<(i8, usize)>,
    pub rhs: i32,
}

/// The `4(2^q-1)` rows of one three-variable check over its local columns
/// `slot * (2^q-1) + (j-1)`.
pub fn build_check_block(chk: &ThreeVarCheck, field: &FieldContext) -> Vec<SparseRow> {
    let k = field.nonzero();
    let mut rows = Vec::with_capacity(4 * k);
    for ell in 1..=k {
        let bits: Vec<Vec<u8>> = chk
            .coeffs
            .iter()
            .map(|&h| field.bit_row_after_permutation(ell as Symbol, h))
            .collect();
        for (signs, &rhs) in PARITY_SIGNS.iter().zip(&PARITY_RHS) {
            let mut entries = Vec::new();
            for (slot, (&s, r)) in signs.iter().zip(&bits).enumerate() {
                for (j, &bit) in r.iter().enumerate() {
                    if bit == 1 {
                        entries.push((s, slot * k + j));
                    }
                }
            }
            rows.push(SparseRow { entries, rhs });
        }
    }
    rows
}

/// Closed-form `(theta, omega)` such that the inverse of the block
/// `4 d Phi + 1 1^T + eps I` equals `(theta - omega) I + omega 1 1^T`.
///
/// The block has diagonal `2^(q+1) d + 1 + eps` and off-diagonal
/// `2^q d + 1`, so with `a = 2^q d + eps`, `c = 2^q d + 1` and
/// `K = 2^q - 1`: `theta - omega = 1/a` and `omega = -c / (a (a + K c))`.
pub fn compute_theta_omega(degree: u32, epsilon: f64, q: u32) -> Result<(f64, f64), ModelError> {
    if !(epsilon > 0.0) {
        return Err(ModelError::NonPositiveEpsilon(epsilon));
    }
    let scale = (1u64 << q) as f64 * degree as f64;
    let k = ((1u64 << q) - 1) as f64;
    let a = scale + epsilon;
    let c = scale + 1.0;
    let omega = -c / (a * (a + k * c));
    Ok((omega + 1.0 / a, omega))
}

/// The proximal shift `1 + rho/mu - alpha/mu` of the v-subproblem.
pub fn proximal_epsilon(mu: f64, alpha: f64, rho: f64) -> f64 {
    1.0 + rho / mu - alpha / mu
}

/// Decomposed checks plus everything the iteration needs about `A` and `b`.
#[derive(Debug, Clone)]
pub struct QpModel {
    code: ParityCheckCode,
    field: Arc<FieldContext>,
    checks: Vec<ThreeVarCheck>,
    n_aux: usize,
    supports: Vec<Option<SupportTable>>,
    degrees: Vec<u32>,
    theta: Vec<f64>,
    omega: Vec<f64>,
    epsilon: f64,
}

/// Decomposes the code and precomputes supports, degrees and the block
/// inverse coefficients for the given proximal shift.
pub fn assemble_model(code: &ParityCheckCode, epsilon: f64) -> Result<QpModel, ModelError> {
    if !(epsilon > 0.0) {
        return Err(ModelError::NonPositiveEpsilon(epsilon));
    }
    let Decomposition { checks, n_aux } = decompose(code)?;
    let field = Arc::clone(code.field());

    let mut supports: Vec<Option<SupportTable>> = vec![None; field.order()];
    let mut degrees = vec![0u32; code.n() + n_aux];
    for chk in &checks {
        for (&v, &h) in chk.vars.iter().zip(&chk.coeffs) {
            degrees[v] += 1;
            supports[h as usize].get_or_insert_with(|| SupportTable::new(&field, h));
        }
    }
    let (theta, omega) = degrees
        .iter()
        .map(|&d| compute_theta_omega(d, epsilon, field.q()))
        .collect::<Result<(Vec<_>, Vec<_>), _>>()?;

    Ok(QpModel {
        code: code.clone(),
        field,
        checks,
        n_aux,
        supports,
        degrees,
        theta,
        omega,
        epsilon,
    })
}

impl QpModel {
    pub fn code(&self) -> &ParityCheckCode {
        &self.code
    }

    pub fn field(&self) -> &Arc<FieldContext> {
        &self.field
    }

    pub fn checks(&self) -> &[ThreeVarCheck] {
        &self.checks
    }

    /// Original code length `n`.
    pub fn n(&self) -> usize {
        self.code.n()
    }

    pub fn gamma_a(&self) -> usize {
        self.n_aux
    }

    pub fn gamma_c(&self) -> usize {
        self.checks.len()
    }

    /// One-hot block length `2^q - 1`.
    pub fn block_len(&self) -> usize {
        self.field.nonzero()
    }

    /// Extended variable count `n + Gamma_a`.
    pub fn num_vars(&self) -> usize {
        self.code.n() + self.n_aux
    }

    /// `M = 4(2^q-1) Gamma_c + n + Gamma_a`.
    pub fn num_rows(&self) -> usize {
        4 * self.block_len() * self.checks.len() + self.num_vars()
    }

    /// `N = (2^q-1)(n + Gamma_a)`.
    pub fn num_cols(&self) -> usize {
        self.block_len() * self.num_vars()
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Index of the first simplex row.
    pub fn simplex_offset(&self) -> usize {
        4 * self.block_len() * self.checks.len()
    }

    pub fn rhs(&self, row: usize) -> f64 {
        if row >= self.simplex_offset() {
            1.0
        } else {
            PARITY_RHS[row % 4] as f64
        }
    }

    pub fn b(&self) -> Vec<f64> {
        (0..self.num_rows()).map(|r| self.rhs(r)).collect()
    }

    #[inline]
    fn support(&self, h: Symbol, ell: usize) -> &[u8] {
        self.supports[h as usize]
            .as_ref()
            .expect("support table for every used coefficient")
            .get(ell)
    }

    /// `out = A v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let k = self.block_len();
        debug_assert_eq!(v.len(), self.num_cols());
        debug_assert_eq!(out.len(), self.num_rows());
        let (parity_rows, simplex_rows) = out.split_at_mut(self.simplex_offset());
        for (chk, rows) in self.checks.iter().zip(parity_rows.chunks_exact_mut(4 * k)) {
            for (ell, group) in (1..=k).zip(rows.chunks_exact_mut(4)) {
                let mut s = [0.0f64; 3];
                for slot in 0..3 {
                    let base = chk.vars[slot] * k;
                    s[slot] = self
                        .support(chk.coeffs[slot], ell)
                        .iter()
                        .map(|&j| v[base + j as usize])
                        .sum();
                }
                group[0] = s[0] - s[1] - s[2];
                group[1] = -s[0] + s[1] - s[2];
                group[2] = -s[0] - s[1] + s[2];
                group[3] = s[0] + s[1] + s[2];
            }
        }
        for (r, block) in simplex_rows.iter_mut().zip(v.chunks_exact(k)) {
            *r = block.iter().sum();
        }
    }

    /// `out = A^T y`.
    pub fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        let k = self.block_len();
        debug_assert_eq!(y.len(), self.num_rows());
        debug_assert_eq!(out.len(), self.num_cols());
        let (parity_rows, simplex_rows) = y.split_at(self.simplex_offset());
        for (block, &ys) in out.chunks_exact_mut(k).zip(simplex_rows) {
            block.fill(ys);
        }
        for (chk, rows) in self.checks.iter().zip(parity_rows.chunks_exact(4 * k)) {
            for (ell, g) in (1..=k).zip(rows.chunks_exact(4)) {
                let c = [
                    g[0] - g[1] - g[2] + g[3],
                    -g[0] + g[1] - g[2] + g[3],
                    -g[0] - g[1] + g[2] + g[3],
                ];
                for slot in 0..3 {
                    let base = chk.vars[slot] * k;
                    for &j in self.support(chk.coeffs[slot], ell) {
                        out[base + j as usize] += c[slot];
                    }
                }
            }
        }
    }

    /// Row `r` of `A` as `(sign, column)` pairs.
    pub fn row(&self, r: usize) -> SparseRow {
        let k = self.block_len();
        if r >= self.simplex_offset() {
            let var = r - self.simplex_offset();
            return SparseRow {
                entries: (0..k).map(|j| (1, var * k + j)).collect(),
                rhs: 1,
            };
        }
        let chk = &self.checks[r / (4 * k)];
        let ell = (r % (4 * k)) / 4 + 1;
        let signs = PARITY_SIGNS[r % 4];
        let mut entries = Vec::new();
        for slot in 0..3 {
            let base = chk.vars[slot] * k;
            entries.extend(
                self.support(chk.coeffs[slot], ell)
                    .iter()
                    .map(|&j| (signs[slot], base + j as usize)),
            );
        }
        SparseRow {
            entries,
            rhs: PARITY_RHS[r % 4],
        }
    }

    /// All nonzero entries `(row, col, sign)` in row order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, i8)> + '_ {
        (0..self.num_rows()).flat_map(move |r| {
            self.row(r)
                .entries
                .into_iter()
                .map(move |(s, c)| (r, c, s))
        })
    }

    /// Extends a length `n(2^q-1)` cost vector with zeros for the auxiliaries.
    pub fn extend_cost(&self, gamma: &[f64]) -> Vec<f64> {
        assert_eq!(gamma.len(), self.n() * self.block_len(), "cost vector length");
        let mut lambda = gamma.to_vec();
        lambda.resize(self.num_cols(), 0.0);
        lambda
    }

    /// Writes `A` as Matrix-Market coordinate text (1-based `row col value`).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> io::Result<()> {
        let nnz: usize = (0..self.num_rows()).map(|r| self.row(r).entries.len()).sum();
        writeln!(w, "%%MatrixMarket matrix coordinate integer general")?;
        writeln!(w, "{} {} {}", self.num_rows(), self.num_cols(), nnz)?;
        for (r, c, s) in self.entries() {
            writeln!(w, "{} {} {}", r + 1, c + 1, s)?;
        }
        Ok(())
    }
}

/// A coordinate-format matrix read back from Matrix-Market text.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixDump {
    pub rows: usize,
    pub cols: usize,
    /// 0-based `(row, col, value)`.
    pub entries: Vec<(usize, usize, f64)>,
}

pub fn read_matrix_market(text: &str) -> Result<MatrixDump, String> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('%'));
    let (_, size) = lines.next().ok_or("missing size line")?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| format!("bad size line `{size}`")))
        .collect::<Result<_, _>>()?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(format!("bad size line `{size}`"));
    };
    let mut entries = Vec::with_capacity(nnz);
    for (ln, l) in lines {
        let toks: Vec<&str> = l.split_whitespace().collect();
        let bad = || format!("line {}: expected `row col value`", ln + 1);
        if toks.len() != 3 {
            return Err(bad());
        }
        let r: usize = toks[0].parse().map_err(|_| bad())?;
        let c: usize = toks[1].parse().map_err(|_| bad())?;
        let v: f64 = toks[2].parse().map_err(|_| bad())?;
        if r == 0 || c == 0 || r > rows || c > cols {
            return Err(format!("line {}: index ({r}, {c}) out of range", ln + 1));
        }
        entries.push((r - 1, c - 1, v));
    }
    if entries.len() != nnz {
        return Err(format!("declared {nnz} entries, found {}", entries.len()));
    }
    Ok(MatrixDump {
        rows,
        cols,
        entries,
    })
}
