//! Slow, independent reference computations used to arbitrate the fast
//! paths: exhaustive ML decoding, dense Gaussian elimination, solution
//! enumeration of a single three-variable check, and a literal dense
//! construction of the constraint matrix from its matrix-product definition.
//!
//! Nothing here depends on the model builder or the decoder.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::codeio::{derive_encoder, ParityCheckCode};
use crate::field::{FieldContext, Symbol};

/// Largest codebook the brute-force decoder will enumerate.
pub const MAX_CODEBOOK: u64 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("codebook of 2^{bits} words exceeds the 2^20 enumeration bound")]
    CodebookTooLarge { bits: u64 },
    #[error("matrix is singular (pivot {pivot:e} below 1e-12)")]
    Singular { pivot: f64 },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("inverse check failed: max |M M^-1 - I| = {0:e}")]
    InverseCheck(f64),
}

/// Row-major dense real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        DenseMatrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * x[j]).sum())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Gauss-Jordan inversion with partial pivoting. The result is verified:
/// `max |M M^-1 - I| <= 1e-9` or an error is returned.
pub fn dense_inverse(mat: &DenseMatrix) -> Result<DenseMatrix, OracleError> {
    if mat.rows != mat.cols {
        return Err(OracleError::NotSquare {
            rows: mat.rows,
            cols: mat.cols,
        });
    }
    let n = mat.rows;
    let mut a = mat.clone();
    let mut inv = DenseMatrix::identity(n);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[(x, col)].abs().total_cmp(&a[(y, col)].abs()))
            .unwrap();
        let pv = a[(piv, col)];
        if pv.abs() < 1e-12 {
            return Err(OracleError::Singular { pivot: pv.abs() });
        }
        if piv != col {
            for j in 0..n {
                a.data.swap(piv * n + j, col * n + j);
                inv.data.swap(piv * n + j, col * n + j);
            }
        }
        for j in 0..n {
            a[(col, j)] /= pv;
            inv[(col, j)] /= pv;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[(r, col)];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                a[(r, j)] -= f * a[(col, j)];
                inv[(r, j)] -= f * inv[(col, j)];
            }
        }
    }
    let err = mat.matmul(&inv).max_abs_diff(&DenseMatrix::identity(n));
    if err > 1e-9 {
        return Err(OracleError::InverseCheck(err));
    }
    Ok(inv)
}

/// Solves `M x = rhs` through [`dense_inverse`].
pub fn dense_solve(mat: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>, OracleError> {
    Ok(dense_inverse(mat)?.matvec(rhs))
}

/// Cost of a word under per-symbol costs in blocks of `2^q - 1`.
pub fn word_cost(gamma: &[f64], q: u32, word: &[Symbol]) -> f64 {
    let k = (1usize << q) - 1;
    word.iter()
        .enumerate()
        .filter(|(_, &u)| u != 0)
        .map(|(i, &u)| gamma[i * k + u as usize - 1])
        .sum()
}

fn better(cost: f64, word: &[Symbol], best: &Option<(f64, Vec<Symbol>)>) -> bool {
    match best {
        None => true,
        Some((bc, bw)) => cost < *bc || (cost == *bc && word < bw.as_slice()),
    }
}

/// Exhaustive ML decoding over the encoder's message space. Ties go to the
/// lexicographically smallest codeword.
pub fn ml_decode_bruteforce(
    code: &ParityCheckCode,
    gamma: &[f64],
) -> Result<Vec<Symbol>, OracleError> {
    let q = code.q();
    let Ok(enc) = derive_encoder(code) else {
        return Ok(vec![0; code.n()]);
    };
    let bits = q as u64 * enc.k() as u64;
    if bits > MAX_CODEBOOK.trailing_zeros() as u64 {
        return Err(OracleError::CodebookTooLarge { bits });
    }
    let order = code.field().order();
    let mut msg = vec![0 as Symbol; enc.k()];
    let mut best: Option<(f64, Vec<Symbol>)> = None;
    for idx in 0..1u64 << bits {
        let mut x = idx;
        for s in msg.iter_mut() {
            *s = (x % order as u64) as Symbol;
            x /= order as u64;
        }
        let word = enc.encode(&msg);
        let cost = word_cost(gamma, q, &word);
        if better(cost, &word, &best) {
            best = Some((cost, word));
        }
    }
    Ok(best.expect("nonempty codebook").1)
}

/// Second enumeration route: every word of `GF(2^q)^n`, filtered by the
/// syndrome. Only for very short codes.
pub fn ml_decode_exhaustive(
    code: &ParityCheckCode,
    gamma: &[f64],
) -> Result<Vec<Symbol>, OracleError> {
    let q = code.q();
    let bits = q as u64 * code.n() as u64;
    if bits > 24 {
        return Err(OracleError::CodebookTooLarge { bits });
    }
    let order = code.field().order() as u64;
    let mut best: Option<(f64, Vec<Symbol>)> = None;
    let mut word = vec![0 as Symbol; code.n()];
    for idx in 0..1u64 << bits {
        let mut x = idx;
        // Most significant symbol first: lexicographic enumeration order.
        for s in word.iter_mut().rev() {
            *s = (x % order) as Symbol;
            x /= order;
        }
        if !code.check_syndrome(&word).unwrap_or(false) {
            continue;
        }
        let cost = word_cost(gamma, q, &word);
        if better(cost, &word, &best) {
            best = Some((cost, word.clone()));
        }
    }
    Ok(best.expect("zero word is always a codeword").1)
}

/// All `(u1, u2, u3)` with `h1 u1 + h2 u2 + h3 u3 = 0`.
pub fn enumerate_three_var_solutions(
    h: [Symbol; 3],
    field: &FieldContext,
) -> BTreeSet<[Symbol; 3]> {
    let order = field.order();
    let mut out = BTreeSet::new();
    for u1 in 0..order {
        for u2 in 0..order {
            for u3 in 0..order {
                let u = [u1 as Symbol, u2 as Symbol, u3 as Symbol];
                let s = (0..3).fold(0, |acc, k| acc ^ field.mul(h[k], u[k]));
                if s == 0 {
                    out.insert(u);
                }
            }
        }
    }
    out
}

fn kron_rows_identity(sel: &[Vec<f64>], k: usize) -> DenseMatrix {
    // (Q (x) I_k) for a 0/1 selector Q given by rows.
    let rows = sel.len();
    let cols = sel.first().map_or(0, Vec::len);
    let mut out = DenseMatrix::zeros(rows * k, cols * k);
    for (i, row) in sel.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if x != 0.0 {
                for t in 0..k {
                    out[(i * k + t, j * k + t)] = x;
                }
            }
        }
    }
    out
}

fn block_diag(blocks: &[DenseMatrix]) -> DenseMatrix {
    let rows = blocks.iter().map(|b| b.rows).sum();
    let cols = blocks.iter().map(|b| b.cols).sum();
    let mut out = DenseMatrix::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        for i in 0..b.rows {
            for j in 0..b.cols {
                out[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
        r0 += b.rows;
        c0 += b.cols;
    }
    out
}

/// The `4(2^q-1) x 3(2^q-1)` tightened block of one three-variable check,
/// assembled from explicit `P`, `T_i = diag(b_i^T, b_i^T, b_i^T)` and
/// `D = diag(D(h1), D(h2), D(h3))`: row group `ell` is
/// `P ((sum_{i in bits(ell)} T_i) mod 2) D`.
///
/// The reduction mod 2 acts on the nonnegative bit combination before `P`
/// re-signs it; reducing after `P` would fold the `-1` entries.
pub fn dense_check_block(h: [Symbol; 3], field: &FieldContext) -> DenseMatrix {
    let k = field.nonzero();
    let q = field.q() as usize;
    let bm = field.bit_matrix();
    let p = DenseMatrix::from_rows(&[
        vec![1.0, -1.0, -1.0],
        vec![-1.0, 1.0, -1.0],
        vec![-1.0, -1.0, 1.0],
        vec![1.0, 1.0, 1.0],
    ]);
    let d = block_diag(
        &h.iter()
            .map(|&hk| {
                let perm = field.permutation(hk).expect("nonzero coefficient");
                DenseMatrix::from_rows(
                    &perm
                        .to_dense()
                        .into_iter()
                        .map(|r| r.into_iter().map(f64::from).collect())
                        .collect::<Vec<_>>(),
                )
            })
            .collect::<Vec<_>>(),
    );
    // T_i = diag(b_i^T, b_i^T, b_i^T): 3 x 3k
    let t: Vec<DenseMatrix> = (0..q)
        .map(|i| {
            let bi = DenseMatrix::from_rows(&[bm.row(i).iter().map(|&x| x as f64).collect()]);
            block_diag(&[bi.clone(), bi.clone(), bi])
        })
        .collect();

    let mut out = DenseMatrix::zeros(4 * k, 3 * k);
    for ell in 1..=k {
        // Row-combination of T_i over the bits of ell, reduced mod 2.
        let mut comb = DenseMatrix::zeros(3, 3 * k);
        for (i, ti) in t.iter().enumerate() {
            if (ell >> i) & 1 == 1 {
                for (c, x) in comb.data.iter_mut().zip(&ti.data) {
                    *c += x;
                }
            }
        }
        for c in comb.data.iter_mut() {
            *c = c.rem_euclid(2.0);
        }
        let rows = p.matmul(&comb).matmul(&d);
        for r in 0..4 {
            for c in 0..3 * k {
                out[((ell - 1) * 4 + r, c)] = rows[(r, c)];
            }
        }
    }
    out
}

/// Dense `A = [W^_1 (Q_1 (x) I); ...; W^_G (Q_G (x) I); S]` for a list of
/// three-variable checks `(variables, coefficients)` over `num_vars`
/// extended variables.
pub fn dense_constraint_matrix(
    checks: &[([usize; 3], [Symbol; 3])],
    num_vars: usize,
    field: &FieldContext,
) -> DenseMatrix {
    let k = field.nonzero();
    let mut blocks = Vec::new();
    for (vars, coeffs) in checks {
        let sel: Vec<Vec<f64>> = vars
            .iter()
            .map(|&v| (0..num_vars).map(|i| (i == v) as u8 as f64).collect())
            .collect();
        blocks.push(dense_check_block(*coeffs, field).matmul(&kron_rows_identity(&sel, k)));
    }
    let mut s = DenseMatrix::zeros(num_vars, num_vars * k);
    for i in 0..num_vars {
        for t in 0..k {
            s[(i, i * k + t)] = 1.0;
        }
    }
    blocks.push(s);
    let rows = blocks.iter().map(|b| b.rows).sum();
    let mut a = DenseMatrix::zeros(rows, num_vars * k);
    let mut r0 = 0;
    for b in blocks {
        a.data[r0 * a.cols..(r0 + b.rows) * a.cols].copy_from_slice(&b.data);
        r0 += b.rows;
    }
    a
}

/// The explicit `(2^q-1)`-square block `4 d Phi + 1 1^T + eps I`:
/// diagonal `4 d 2^(q-1) + 1 + eps`, off-diagonal `4 d 2^(q-2) + 1`.
pub fn explicit_gram_block(q: u32, degree: u32, epsilon: f64) -> DenseMatrix {
    let k = (1usize << q) - 1;
    let d = degree as f64;
    let diag = 4.0 * d * 2f64.powi(q as i32 - 1) + 1.0 + epsilon;
    let off = 4.0 * d * 2f64.powi(q as i32 - 2) + 1.0;
    let mut m = DenseMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            m[(i, j)] = if i == j { diag } else { off };
        }
    }
    m
}
