//! Monte Carlo frame/symbol error simulation.
//!
//! Frame `i` draws all of its randomness from a ChaCha8 stream keyed by
//! `(master_seed, i)`, so results do not depend on how frames are spread
//! across workers.

use std::fmt::Write as _;
use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{self, ChannelError, Modulation};
use crate::codeio::{derive_encoder, Encoder, ParityCheckCode};
use crate::field::Symbol;
use crate::padmm::{ConfigError, Decoder, DecoderConfig};
use crate::qpbuild::{assemble_model, ModelError, QpModel};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("frames must be at least 1")]
    NoFrames,
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    AllZeros,
    RandomCodeword,
}

impl std::str::FromStr for Source {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "zeros" => Ok(Source::AllZeros),
            "random" => Ok(Source::RandomCodeword),
            _ => Err(format!("unknown source `{s}` (expected zeros or random)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameResult {
    pub frame_index: u64,
    pub iterations: usize,
    pub converged: bool,
    pub syndrome_valid: bool,
    pub symbol_errors: usize,
    pub frame_error: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub frames: u64,
    pub frame_errors: u64,
    pub symbol_errors: u64,
    pub fer: f64,
    pub ser: f64,
    pub mean_iterations: f64,
    pub n: usize,
    pub esn0_db: f64,
    pub seed: u64,
    pub config: DecoderConfig,
    pub scheme: Modulation,
    pub source: Source,
    pub clip: Option<f64>,
    pub cost_limit: Option<f64>,
}

impl RunSummary {
    pub fn from_frames(frames: &[FrameResult], n: usize, spec: &TrialSpec) -> Self {
        let count = frames.len() as u64;
        let frame_errors = frames.iter().filter(|f| f.frame_error).count() as u64;
        let symbol_errors: u64 = frames.iter().map(|f| f.symbol_errors as u64).sum();
        let iters: u64 = frames.iter().map(|f| f.iterations as u64).sum();
        RunSummary {
            frames: count,
            frame_errors,
            symbol_errors,
            fer: frame_errors as f64 / count as f64,
            ser: symbol_errors as f64 / (count as f64 * n as f64),
            mean_iterations: iters as f64 / count as f64,
            n,
            esn0_db: spec.esn0_db,
            seed: spec.master_seed,
            config: spec.config,
            scheme: spec.scheme,
            source: spec.source,
            clip: spec.clip,
            cost_limit: spec.cost_limit,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialSpec {
    pub scheme: Modulation,
    pub esn0_db: f64,
    pub frames: u64,
    pub config: DecoderConfig,
    pub master_seed: u64,
    pub source: Source,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
    /// Costs are clamped to `[-clip, clip]` first, if set.
    pub clip: Option<f64>,
    /// Then rescaled so that no entry exceeds this magnitude, if set.
    pub cost_limit: Option<f64>,
}

/// Default for [`TrialSpec::cost_limit`]. The dual variables move by O(1)
/// per iteration, so costs far above this need far more than the default
/// iteration budget; at `Es/N0 <= 10` dB costs rarely reach it.
pub const DEFAULT_COST_LIMIT: f64 = 50.0;

impl TrialSpec {
    pub fn new(scheme: Modulation, esn0_db: f64, frames: u64, config: DecoderConfig, master_seed: u64) -> Self {
        TrialSpec {
            scheme,
            esn0_db,
            frames,
            config,
            master_seed,
            source: Source::RandomCodeword,
            workers: 0,
            clip: None,
            cost_limit: Some(DEFAULT_COST_LIMIT),
        }
    }

    /// Applies the clip and rescale settings to one frame's costs.
    pub fn condition(&self, cost: &mut channel::CostVector) {
        if let Some(c) = self.clip {
            cost.clip(c);
        }
        if let Some(l) = self.cost_limit {
            cost.rescale_to(l);
        }
    }
}

/// RNG for one frame.
pub fn frame_rng(master_seed: u64, frame_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(frame_index);
    rng
}

/// Transmitted word, received costs (length `n(2^q-1)`) for one frame.
pub fn frame_channel(
    code: &ParityCheckCode,
    encoder: Option<&Encoder>,
    scheme: Modulation,
    esn0_db: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Symbol>, channel::CostVector), ChannelError> {
    let word = match encoder {
        Some(enc) => enc.random_codeword(rng),
        None => vec![0; code.n()],
    };
    let tx = channel::modulate(&word, scheme, code.q())?;
    let rx = channel::add_awgn(&tx, esn0_db, rng);
    Ok((word, channel::cost_vector(&rx, scheme, esn0_db)))
}

fn run_frame(
    model: &QpModel,
    encoder: Option<&Encoder>,
    spec: &TrialSpec,
    decoder: &mut Decoder<'_>,
    index: u64,
) -> Result<FrameResult, ChannelError> {
    let mut rng = frame_rng(spec.master_seed, index);
    let (sent, mut cost) = frame_channel(model.code(), encoder, spec.scheme, spec.esn0_db, &mut rng)?;
    spec.condition(&mut cost);
    let lambda = model.extend_cost(&cost.gamma);
    let (res, _) = decoder.decode(&lambda);
    let symbol_errors = res.word.iter().zip(&sent).filter(|(a, b)| a != b).count();
    Ok(FrameResult {
        frame_index: index,
        iterations: res.iterations,
        converged: res.converged,
        syndrome_valid: res.syndrome_valid,
        symbol_errors,
        frame_error: symbol_errors > 0,
    })
}

/// Simulates `spec.frames` frames and returns the summary plus per-frame
/// records in frame order.
pub fn run_trials(
    code: &ParityCheckCode,
    spec: &TrialSpec,
) -> Result<(RunSummary, Vec<FrameResult>), SimError> {
    if spec.frames == 0 {
        return Err(SimError::NoFrames);
    }
    spec.config.validate()?;
    spec.scheme.check_field(code.q())?;
    let model = assemble_model(code, spec.config.epsilon())?;
    let encoder = match spec.source {
        Source::AllZeros => None,
        Source::RandomCodeword => match derive_encoder(code) {
            Ok(enc) => Some(enc),
            Err(e) => {
                log::warn!("{e}; transmitting the all-zeros word");
                None
            }
        },
    };

    let work = || -> Result<Vec<FrameResult>, SimError> {
        (0..spec.frames)
            .into_par_iter()
            .map_init(
                || Decoder::new(&model, spec.config).expect("validated config"),
                |dec, i| run_frame(&model, encoder.as_ref(), spec, dec, i),
            )
            .collect::<Result<Vec<_>, _>>()
            .map_err(SimError::from)
    };
    let frames = if spec.workers == 0 {
        work()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(spec.workers)
            .build()
            .map_err(|e| SimError::Pool(e.to_string()))?
            .install(work)?
    };

    let summary = RunSummary::from_frames(&frames, code.n(), spec);
    Ok((summary, frames))
}

pub const CSV_HEADER: &str = "frame,iterations,converged,syndrome_valid,symbol_errors,frame_error";

/// Per-frame CSV rows followed by a commented summary block.
pub fn write_csv<W: Write>(summary: &RunSummary, frames: &[FrameResult], mut w: W) -> io::Result<()> {
    let mut out = String::with_capacity(64 * (frames.len() + 8));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for f in frames {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            f.frame_index,
            f.iterations,
            f.converged as u8,
            f.syndrome_valid as u8,
            f.symbol_errors,
            f.frame_error as u8
        );
    }
    let c = &summary.config;
    let _ = writeln!(out, "# frames={}", summary.frames);
    let _ = writeln!(out, "# fer={:.6e}", summary.fer);
    let _ = writeln!(out, "# ser={:.6e}", summary.ser);
    let _ = writeln!(out, "# mean_iterations={:.4}", summary.mean_iterations);
    let _ = writeln!(
        out,
        "# esn0_db={} modulation={} source={} seed={} n={}",
        summary.esn0_db,
        summary.scheme,
        match summary.source {
            Source::AllZeros => "zeros",
            Source::RandomCodeword => "random",
        },
        summary.seed,
        summary.n
    );
    let _ = writeln!(
        out,
        "# mu={} alpha={} rho={} beta={} tol={:e} max_iter={}",
        c.mu, c.alpha, c.rho, c.beta, c.tol, c.max_iter
    );
    let opt = |x: Option<f64>| x.map_or_else(|| "none".to_string(), |v| v.to_string());
    let _ = writeln!(out, "# clip={} cost_limit={}", opt(summary.clip), opt(summary.cost_limit));
    w.write_all(out.as_bytes())
}
