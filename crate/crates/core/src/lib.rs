//! Nonbinary LDPC decoding over GF(2^q) by proximal ADMM on a quadratic
//! programming relaxation.
//!
//! The pipeline is [`codeio`] (parity-check codes) -> [`qpbuild`]
//! (three-variable decomposition and constraint operator) -> [`padmm`]
//! (decoder), with [`channel`] producing costs and [`sim`] running Monte
//! Carlo trials. [`oracle`] holds slow dense and brute-force references.

pub mod channel;
pub mod codeio;
pub mod field;
pub mod oracle;
pub mod padmm;
pub mod qpbuild;
pub mod sim;

pub use channel::{CostVector, Modulation};
pub use codeio::{parse_code, ParityCheckCode};
pub use field::{FieldContext, Symbol};
pub use padmm::{DecodeResult, Decoder, DecoderConfig};
pub use qpbuild::{assemble_model, QpModel};

/// Source text of the bundled `(6, 3)` GF(4) code.
pub const TINY_CODE_TEXT: &str = include_str!("../data/tiny_gf4.nbc");

/// The bundled `(6, 3)` GF(4) code.
pub fn tiny_code() -> ParityCheckCode {
    parse_code(TINY_CODE_TEXT).expect("bundled code parses")
}
