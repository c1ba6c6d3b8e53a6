//! Modulation, AWGN and the per-symbol cost vector.
//!
//! Noise convention: `Es = 1`, `N0 = 10^(-Es/N0 / 10)`, and each real
//! dimension carries variance `N0 / 2`.
//!
//! Labeling: BPSK maps 0 -> +1 and 1 -> -1. QPSK and 16QAM are Gray
//! labeled: the low bits of the symbol pick the in-phase level and the high
//! bits the quadrature level, each axis Gray coded.

use std::io::{self, Read, Write};
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::field::Symbol;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("{scheme} carries {bits} bits per symbol but the field has q = {q}")]
    SizeMismatch {
        scheme: Modulation,
        bits: u32,
        q: u32,
    },
    #[error("unknown modulation `{0}` (expected bpsk, qpsk or qam16)")]
    UnknownScheme(String),
    #[error("cost file: {0}")]
    CostFile(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modulation {
    Bpsk,
    Qpsk,
    Qam16,
}

impl std::fmt::Display for Modulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Modulation::Bpsk => "bpsk",
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "qam16",
        })
    }
}

impl FromStr for Modulation {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Modulation::Bpsk),
            "qpsk" => Ok(Modulation::Qpsk),
            "qam16" | "16qam" => Ok(Modulation::Qam16),
            _ => Err(ChannelError::UnknownScheme(s.to_string())),
        }
    }
}

// Gray-coded 4-PAM levels indexed by the two label bits.
const PAM4_GRAY: [f64; 4] = [-3.0, -1.0, 3.0, 1.0];

impl Modulation {
    pub fn bits_per_symbol(self) -> u32 {
        match self {
            Modulation::Bpsk => 1,
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
        }
    }

    /// The natural scheme for GF(2^q), if there is one.
    pub fn for_field(q: u32) -> Option<Self> {
        match q {
            1 => Some(Modulation::Bpsk),
            2 => Some(Modulation::Qpsk),
            4 => Some(Modulation::Qam16),
            _ => None,
        }
    }

    pub fn check_field(self, q: u32) -> Result<(), ChannelError> {
        if self.bits_per_symbol() == q {
            Ok(())
        } else {
            Err(ChannelError::SizeMismatch {
                scheme: self,
                bits: self.bits_per_symbol(),
                q,
            })
        }
    }

    /// Constellation point of a symbol (unit average energy).
    pub fn point(self, u: Symbol) -> Complex64 {
        match self {
            Modulation::Bpsk => Complex64::new(if u & 1 == 0 { 1.0 } else { -1.0 }, 0.0),
            Modulation::Qpsk => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let i = if u & 1 == 0 { s } else { -s };
                let q = if u & 2 == 0 { s } else { -s };
                Complex64::new(i, q)
            }
            Modulation::Qam16 => {
                let s = 1.0 / 10f64.sqrt();
                Complex64::new(
                    PAM4_GRAY[(u & 3) as usize] * s,
                    PAM4_GRAY[((u >> 2) & 3) as usize] * s,
                )
            }
        }
    }

    /// All points, indexed by symbol value.
    pub fn constellation(self) -> Vec<Complex64> {
        (0..1u32 << self.bits_per_symbol())
            .map(|u| self.point(u as Symbol))
            .collect()
    }
}

/// `N0` for a given Es/N0 in dB with `Es = 1`.
pub fn noise_density(esn0_db: f64) -> f64 {
    10f64.powf(-esn0_db / 10.0)
}

pub fn modulate(word: &[Symbol], scheme: Modulation, q: u32) -> Result<Vec<Complex64>, ChannelError> {
    scheme.check_field(q)?;
    Ok(word.iter().map(|&u| scheme.point(u)).collect())
}

/// Adds circular complex Gaussian noise with `E|n|^2 = N0`.
pub fn add_awgn<R: Rng + ?Sized>(samples: &[Complex64], esn0_db: f64, rng: &mut R) -> Vec<Complex64> {
    let sigma = (noise_density(esn0_db) / 2.0).sqrt();
    samples
        .iter()
        .map(|&s| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            s + Complex64::new(re * sigma, im * sigma)
        })
        .collect()
}

/// Seeded form of [`add_awgn`].
pub fn awgn(samples: &[Complex64], esn0_db: f64, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_awgn(samples, esn0_db, &mut rng)
}

/// Per-symbol costs in blocks of `2^q - 1`; entry `sigma - 1` of block `i`
/// is the log-likelihood ratio of symbol 0 against symbol `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVector {
    pub q: u32,
    pub gamma: Vec<f64>,
}

const COST_MAGIC: &[u8; 8] = b"NBQPCOST";

impl CostVector {
    pub fn block_len(&self) -> usize {
        (1 << self.q) - 1
    }

    pub fn n(&self) -> usize {
        self.gamma.len() / self.block_len()
    }

    /// Cost of a word: the sum of its one-hot entries.
    pub fn word_cost(&self, word: &[Symbol]) -> f64 {
        let k = self.block_len();
        word.iter()
            .enumerate()
            .filter(|(_, &u)| u != 0)
            .map(|(i, &u)| self.gamma[i * k + u as usize - 1])
            .sum()
    }

    /// Clamps every entry to `[-limit, limit]`.
    pub fn clip(&mut self, limit: f64) {
        for g in &mut self.gamma {
            *g = g.clamp(-limit, limit);
        }
    }

    /// Scales every entry by `limit / max|gamma|` when that maximum exceeds
    /// `limit`; returns the factor applied. A positive scaling leaves the
    /// minimum-cost codeword unchanged.
    pub fn rescale_to(&mut self, limit: f64) -> f64 {
        let peak = self.gamma.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if peak <= limit || !peak.is_finite() {
            return 1.0;
        }
        let factor = limit / peak;
        for g in &mut self.gamma {
            *g *= factor;
        }
        factor
    }

    /// Binary form: 8-byte magic, `n` and `q` as little-endian u32, then the
    /// entries as little-endian f64.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(COST_MAGIC)?;
        w.write_all(&(self.n() as u32).to_le_bytes())?;
        w.write_all(&self.q.to_le_bytes())?;
        for g in &self.gamma {
            w.write_all(&g.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, ChannelError> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)
            .map_err(|_| ChannelError::CostFile("truncated header".into()))?;
        if &header[..8] != COST_MAGIC {
            return Err(ChannelError::CostFile("bad magic".into()));
        }
        let n = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let q = u32::from_le_bytes(header[12..16].try_into().unwrap());
        if q == 0 || q > crate::field::MAX_EXPONENT {
            return Err(ChannelError::CostFile(format!("unsupported q = {q}")));
        }
        let len = n * ((1usize << q) - 1);
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() != 8 * len {
            return Err(ChannelError::CostFile(format!(
                "expected {len} entries, found {} bytes",
                body.len()
            )));
        }
        let gamma = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(CostVector { q, gamma })
    }
}

/// `gamma[i][sigma] = (|r_i - s_sigma|^2 - |r_i - s_0|^2) / N0`.
pub fn cost_vector(received: &[Complex64], scheme: Modulation, esn0_db: f64) -> CostVector {
    let n0 = noise_density(esn0_db);
    let points = scheme.constellation();
    let k = points.len() - 1;
    let mut gamma = Vec::with_capacity(received.len() * k);
    for r in received {
        let d0 = (r - points[0]).norm_sqr();
        gamma.extend(points[1..].iter().map(|s| ((r - s).norm_sqr() - d0) / n0));
    }
    CostVector {
        q: scheme.bits_per_symbol(),
        gamma,
    }
}

/// Nearest-point demapping.
pub fn demap_hard(received: &[Complex64], scheme: Modulation) -> Vec<Symbol> {
    let points = scheme.constellation();
    received
        .iter()
        .map(|r| {
            points
                .iter()
                .enumerate()
                .min_by(|a, b| (r - a.1).norm_sqr().total_cmp(&(r - b.1).norm_sqr()))
                .map(|(u, _)| u as Symbol)
                .unwrap()
        })
        .collect()
}
