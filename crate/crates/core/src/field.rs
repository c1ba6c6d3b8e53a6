//! Arithmetic over GF(2^q) for 1 <= q <= 8, plus the small 0/1 structures
//! derived from it: the one-hot symbol embedding, the multiplication
//! permutation of the nonzero elements, and the bit-expansion matrix.
//!
//! Reduction polynomials are pinned per exponent (all primitive, so `x` is a
//! generator of the multiplicative group):
//!
//! | q | polynomial                  | mask    |
//! |---|-----------------------------|---------|
//! | 1 | x + 1 (degenerate, GF(2))   | `0x3`   |
//! | 2 | x^2 + x + 1                 | `0x7`   |
//! | 3 | x^3 + x + 1                 | `0xB`   |
//! | 4 | x^4 + x + 1                 | `0x13`  |
//! | 5 | x^5 + x^2 + 1               | `0x25`  |
//! | 6 | x^6 + x^4 + x^3 + x + 1     | `0x5B`  |
//! | 7 | x^7 + x + 1                 | `0x83`  |
//! | 8 | x^8 + x^4 + x^3 + x^2 + 1   | `0x11D` |
//!
//! Entries from q = 5 upward are the Conway polynomials. Addition is XOR.

use thiserror::Error;

/// A field element, always `< 2^q`.
pub type Symbol = u8;

pub const MAX_EXPONENT: u32 = 8;

const PRIMITIVE_POLYS: [u32; 9] = [0, 0x3, 0x7, 0xB, 0x13, 0x25, 0x5B, 0x83, 0x11D];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("field exponent {0} not supported (expected 1..=8)")]
    UnsupportedExponent(u32),
    #[error("zero has no multiplicative permutation")]
    ZeroMultiplier,
}

/// Log/antilog tables and a full product table for GF(2^q).
///
/// Immutable after construction; share it behind an `Arc` across workers.
#[derive(Clone)]
pub struct FieldContext {
    q: u32,
    poly: u32,
    log: Vec<u16>,
    antilog: Vec<Symbol>,
    mul: Vec<Symbol>,
}

impl std::fmt::Debug for FieldContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FieldContext")
            .field("q", &self.q)
            .field("poly", &format_args!("{:#x}", self.poly))
            .finish()
    }
}

impl PartialEq for FieldContext {
    fn eq(&self, other: &Self) -> bool {
        self.q == other.q && self.poly == other.poly
    }
}

impl FieldContext {
    pub fn new(q: u32) -> Result<Self, FieldError> {
        if q == 0 || q > MAX_EXPONENT {
            return Err(FieldError::UnsupportedExponent(q));
        }
        let poly = PRIMITIVE_POLYS[q as usize];
        let order = 1usize << q;
        let group = order - 1;

        let mut log = vec![0u16; order];
        let mut antilog = vec![0 as Symbol; group];
        let mut x: u32 = 1;
        for (k, slot) in antilog.iter_mut().enumerate() {
            *slot = x as Symbol;
            log[x as usize] = k as u16;
            x <<= 1;
            if x & (1 << q) != 0 {
                x ^= poly;
            }
        }
        // q = 1 reduces 2 -> 1 through the mask 0b11.
        debug_assert!(q == 1 || x == 1, "polynomial for q={q} is not primitive");

        let mut mul = vec![0 as Symbol; order * order];
        for a in 1..order {
            for b in 1..order {
                let k = (log[a] as usize + log[b] as usize) % group;
                mul[a * order + b] = antilog[k];
            }
        }

        Ok(FieldContext {
            q,
            poly,
            log,
            antilog,
            mul,
        })
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn primitive_poly(&self) -> u32 {
        self.poly
    }

    /// Number of field elements, `2^q`.
    pub fn order(&self) -> usize {
        1 << self.q
    }

    /// Number of nonzero elements, `2^q - 1`; also the one-hot block length.
    pub fn nonzero(&self) -> usize {
        (1 << self.q) - 1
    }

    #[inline]
    pub fn add(&self, a: Symbol, b: Symbol) -> Symbol {
        a ^ b
    }

    #[inline]
    pub fn mul(&self, a: Symbol, b: Symbol) -> Symbol {
        self.mul[((a as usize) << self.q) | b as usize]
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(&self, a: Symbol) -> Option<Symbol> {
        if a == 0 {
            return None;
        }
        let group = self.nonzero();
        Some(self.antilog[(group - self.log[a as usize] as usize) % group])
    }

    /// Discrete log base `x`. Panics on zero.
    pub fn log(&self, a: Symbol) -> usize {
        assert!(a != 0, "log of zero");
        self.log[a as usize] as usize
    }

    pub fn antilog(&self, k: usize) -> Symbol {
        self.antilog[k % self.nonzero()]
    }

    pub fn contains(&self, a: u32) -> bool {
        (a as usize) < self.order()
    }

    /// One-hot embedding of a symbol: position `u - 1` set for nonzero `u`,
    /// all zeros for `u = 0`.
    pub fn symbol_to_binary(&self, u: Symbol) -> Vec<u8> {
        let mut x = vec![0u8; self.nonzero()];
        if u != 0 {
            x[u as usize - 1] = 1;
        }
        x
    }

    /// The permutation `j -> j*h` on nonzero elements.
    pub fn permutation(&self, h: Symbol) -> Result<Permutation, FieldError> {
        if h == 0 {
            return Err(FieldError::ZeroMultiplier);
        }
        let image = (1..=self.nonzero())
            .map(|j| self.mul(j as Symbol, h))
            .collect();
        Ok(Permutation { image })
    }

    /// Row `r` with `r[j-1] = popcount(ell & (j*h)) mod 2` for `j = 1..2^q-1`.
    ///
    /// This is the parity-combined bit row (bits selected by `ell`) seen
    /// through the multiplication permutation of `h`. Exactly `2^(q-1)` ones.
    pub fn bit_row_after_permutation(&self, ell: Symbol, h: Symbol) -> Vec<u8> {
        debug_assert!(ell != 0 && h != 0);
        (1..=self.nonzero())
            .map(|j| (ell & self.mul(j as Symbol, h)).count_ones() as u8 & 1)
            .collect()
    }

    pub fn bit_matrix(&self) -> BitMatrix {
        BitMatrix::new(self.q)
    }
}

/// Index-map form of the 0/1 permutation matrix `D(h)` with
/// `D[i][j] = 1` iff `i = j*h` (indices are nonzero field elements).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    // image[j-1] = j*h
    image: Vec<Symbol>,
}

impl Permutation {
    pub fn len(&self) -> usize {
        self.image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image.is_empty()
    }

    /// Row index of the single 1 in column `j` (both nonzero elements).
    pub fn image(&self, j: Symbol) -> Symbol {
        self.image[j as usize - 1]
    }

    /// `D x` for a length-(2^q-1) vector indexed by nonzero elements.
    pub fn apply<T: Copy + Default>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.image.len());
        let mut out = vec![T::default(); x.len()];
        for (j, &xj) in x.iter().enumerate() {
            out[self.image[j] as usize - 1] = xj;
        }
        out
    }

    /// Dense row-major 0/1 matrix, mainly for cross-checks.
    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        let k = self.image.len();
        let mut d = vec![vec![0u8; k]; k];
        for (j, &i) in self.image.iter().enumerate() {
            d[i as usize - 1][j] = 1;
        }
        d
    }
}

/// The `q x (2^q-1)` matrix whose column `alpha` (1-based) is the binary
/// expansion of `alpha`. Row `i` holds the coefficient of `2^i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    q: u32,
    entries: Vec<u8>,
}

impl BitMatrix {
    pub fn new(q: u32) -> Self {
        let cols = (1usize << q) - 1;
        let mut entries = vec![0u8; q as usize * cols];
        for i in 0..q as usize {
            for alpha in 1..=cols {
                entries[i * cols + alpha - 1] = ((alpha >> i) & 1) as u8;
            }
        }
        BitMatrix { q, entries }
    }

    pub fn rows(&self) -> usize {
        self.q as usize
    }

    pub fn cols(&self) -> usize {
        (1 << self.q) - 1
    }

    pub fn get(&self, row: usize, alpha: usize) -> u8 {
        self.entries[row * self.cols() + alpha - 1]
    }

    pub fn row(&self, i: usize) -> &[u8] {
        let c = self.cols();
        &self.entries[i * c..(i + 1) * c]
    }

    /// Reads column `alpha` back as an integer.
    pub fn column_value(&self, alpha: usize) -> usize {
        (0..self.rows())
            .map(|i| (self.get(i, alpha) as usize) << i)
            .sum()
    }
}
