use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nbldpc::channel::{CostVector, Modulation};
use nbldpc::codeio::{derive_encoder, ParityCheckCode};
use nbldpc::field::Symbol;
use nbldpc::oracle::{self, DenseMatrix};
use nbldpc::padmm::{self, Decoder, DecoderConfig};
use nbldpc::qpbuild::{self, assemble_model, QpModel};
use nbldpc::sim::{self, Source, TrialSpec};

#[derive(Parser)]
#[command(name = "nbldpc", version, about = "Nonbinary LDPC decoding by proximal ADMM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Structural checks on a code and its constraint matrix.
    Validate {
        #[arg(long)]
        code: PathBuf,
        /// Compare against a Matrix Market dump of the constraint matrix.
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Write the assembled constraint matrix in Matrix Market form.
        #[arg(long)]
        dump_matrix: Option<PathBuf>,
        #[command(flatten)]
        decoder: DecoderArgs,
    },
    /// Decode one cost vector and print the hard decision.
    Decode {
        #[arg(long)]
        code: PathBuf,
        #[arg(long)]
        cost: PathBuf,
        #[command(flatten)]
        decoder: DecoderArgs,
        #[command(flatten)]
        conditioning: CostArgs,
        #[arg(long)]
        dump_trajectory: Option<PathBuf>,
    },
    /// Monte Carlo simulation over AWGN; writes per-frame CSV.
    Simulate {
        #[arg(long)]
        code: PathBuf,
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long, default_value_t = 1000)]
        frames: u64,
        #[command(flatten)]
        decoder: DecoderArgs,
        #[command(flatten)]
        conditioning: CostArgs,
        /// CSV path; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Residual trajectory of frame 0 as CSV.
        #[arg(long)]
        dump_trajectory: Option<PathBuf>,
        /// Worker threads (0: all cores).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Decoder against brute-force ML on a small code.
    OracleCompare {
        /// Defaults to the bundled (6, 3) GF(4) code.
        #[arg(long)]
        code: Option<PathBuf>,
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long, default_value_t = 1000)]
        frames: u64,
        #[command(flatten)]
        decoder: DecoderArgs,
        #[command(flatten)]
        conditioning: CostArgs,
        /// Exit 1 when the agreement rate is below this.
        #[arg(long)]
        min_agreement: Option<f64>,
    },
    /// Write the cost vector of one simulated frame.
    GenCost {
        #[arg(long)]
        code: PathBuf,
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long, default_value_t = 0)]
        frame: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ChannelArgs {
    /// bpsk, qpsk or qam16; defaults to the scheme matching q.
    #[arg(long = "mod")]
    modulation: Option<Modulation>,
    #[arg(long, default_value_t = 8.0, allow_negative_numbers = true)]
    esn0: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// zeros or random.
    #[arg(long, default_value = "random")]
    source: Source,
}

#[derive(Args)]
struct DecoderArgs {
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Stop once the hard decision satisfies every check.
    #[arg(long)]
    stop_on_valid_syndrome: bool,
}

#[derive(Args)]
struct CostArgs {
    /// Clamp costs to [-CLIP, CLIP].
    #[arg(long)]
    clip: Option<f64>,
    /// Rescale costs whose peak magnitude exceeds this; 0 disables.
    #[arg(long, default_value_t = sim::DEFAULT_COST_LIMIT)]
    cost_limit: f64,
}

impl DecoderArgs {
    fn config(&self, q: u32) -> Result<DecoderConfig, Failure> {
        let mut c = DecoderConfig::for_field(q);
        c.mu = self.mu.unwrap_or(c.mu);
        c.alpha = self.alpha.unwrap_or(c.alpha);
        c.rho = self.rho.unwrap_or(c.rho);
        c.beta = self.beta.unwrap_or(c.beta);
        c.tol = self.tol.unwrap_or(c.tol);
        c.max_iter = self.max_iter.unwrap_or(c.max_iter);
        c.stop_on_valid_syndrome = self.stop_on_valid_syndrome;
        c.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(c)
    }
}

impl CostArgs {
    fn limit(&self) -> Option<f64> {
        (self.cost_limit > 0.0).then_some(self.cost_limit)
    }
}

enum Failure {
    Validation(String),
    Usage(String),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn load_code(path: &Path) -> Result<ParityCheckCode, Failure> {
    ParityCheckCode::load(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn scheme_for(code: &ParityCheckCode, requested: Option<Modulation>) -> Result<Modulation, Failure> {
    let scheme = match requested {
        Some(s) => s,
        None => Modulation::for_field(code.q()).ok_or_else(|| {
            Failure::Usage(format!("no built-in modulation for q = {}; pass --mod", code.q()))
        })?,
    };
    scheme.check_field(code.q()).map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(scheme)
}

fn build_model(code: &ParityCheckCode, cfg: &DecoderConfig) -> Result<QpModel, Failure> {
    assemble_model(code, cfg.epsilon()).map_err(|e| Failure::Validation(e.to_string()))
}

fn fail(invariant: &str, detail: String) -> Failure {
    Failure::Validation(format!("{invariant}: {detail}"))
}

/// Sparse columns of one variable's block, keyed by row.
fn block_columns(model: &QpModel) -> Vec<HashMap<usize, f64>> {
    let mut cols = vec![HashMap::new(); model.num_cols()];
    for (r, c, s) in model.entries() {
        cols[c].insert(r, s as f64);
    }
    cols
}

fn validate(model: &QpModel, matrix: Option<&Path>) -> Result<(), Failure> {
    let field = model.field();
    let k = model.block_len();
    let half = 1i64 << (model.code().q() - 1);

    let mut rows: Vec<Vec<(usize, i8)>> = vec![Vec::new(); model.num_rows()];
    for (r, c, s) in model.entries() {
        if !(s == 1 || s == -1) {
            return Err(fail("entries in {-1, 0, 1}", format!("A[{r}][{c}] = {s}")));
        }
        rows[r].push((c, s));
    }

    // Check-block rows carry 2^(q-1) entries per variable with the sign
    // pattern of their parity row; simplex rows are all ones over one block.
    let simplex = model.simplex_offset();
    for (r, row) in rows.iter().enumerate() {
        let sum: i64 = row.iter().map(|&(_, s)| s as i64).sum();
        let (len, want) = if r < simplex {
            let signs = qpbuild::PARITY_SIGNS[r % 4];
            (3 * half, signs.iter().map(|&s| s as i64).sum::<i64>() * half)
        } else {
            (k as i64, k as i64)
        };
        if row.len() as i64 != len || sum != want {
            return Err(fail(
                "row sums",
                format!("row {r} has {} entries summing to {sum}, expected {len} summing to {want}", row.len()),
            ));
        }
        if model.rhs(r) != if r < simplex { qpbuild::PARITY_RHS[r % 4] as f64 } else { 1.0 } {
            return Err(fail("right-hand side", format!("row {r} has b = {}", model.rhs(r))));
        }
    }

    // Each multiplier permutes one-hot vectors: D(h) x_u = x_{h u}.
    let coeffs: BTreeSet<Symbol> = model.checks().iter().flat_map(|c| c.coeffs).collect();
    for &h in &coeffs {
        let perm = field
            .permutation(h)
            .map_err(|e| fail("permutation", e.to_string()))?;
        for u in 1..=k {
            let mut x = vec![0u8; k];
            x[u - 1] = 1;
            let image = perm.apply(&x);
            let hu = field.mul(h, u as Symbol) as usize;
            if image.iter().position(|&b| b == 1) != Some(hu - 1) || image.iter().filter(|&&b| b == 1).count() != 1 {
                return Err(fail("one-hot permutation", format!("h = {h}, u = {u}")));
            }
        }
    }

    // The closed-form inverse of each variable's Gram block.
    let cols = block_columns(model);
    let eps = model.epsilon();
    for var in 0..model.num_vars() {
        let mut gram = DenseMatrix::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                let (ca, cb) = (&cols[var * k + a], &cols[var * k + b]);
                gram[(a, b)] = ca.iter().filter_map(|(r, s)| cb.get(r).map(|t| s * t)).sum();
            }
            gram[(a, a)] += eps;
        }
        let (theta, omega) = (model.theta()[var], model.omega()[var]);
        let mut inv = DenseMatrix::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                inv[(a, b)] = if a == b { theta } else { omega };
            }
        }
        let err = gram.matmul(&inv).max_abs_diff(&DenseMatrix::identity(k));
        if err > 1e-9 {
            return Err(fail("block inverse", format!("variable {var}: max |G G^-1 - I| = {err:e}")));
        }
    }

    if let Some(path) = matrix {
        let text = std::fs::read_to_string(path)?;
        let dump = qpbuild::read_matrix_market(&text)
            .map_err(|e| fail("matrix file", format!("{}: {e}", path.display())))?;
        if (dump.rows, dump.cols) != (model.num_rows(), model.num_cols()) {
            return Err(fail(
                "matrix shape",
                format!("{}x{} in file, {}x{} assembled", dump.rows, dump.cols, model.num_rows(), model.num_cols()),
            ));
        }
        let mut seen = HashMap::new();
        for &(r, c, v) in &dump.entries {
            if !(v == 1.0 || v == -1.0 || v == 0.0) {
                return Err(fail("entries in {-1, 0, 1}", format!("file entry ({}, {}) = {v}", r + 1, c + 1)));
            }
            if v != 0.0 {
                seen.insert((r, c), v);
            }
        }
        let assembled: HashMap<(usize, usize), f64> = model.entries().map(|(r, c, s)| ((r, c), s as f64)).collect();
        if seen != assembled {
            let diff = assembled
                .iter()
                .find(|(key, v)| seen.get(key) != Some(v))
                .map(|(key, _)| *key)
                .or_else(|| seen.keys().find(|key| !assembled.contains_key(key)).copied());
            return Err(fail(
                "matrix agreement",
                match diff {
                    Some((r, c)) => format!("entry ({}, {}) differs from the assembled matrix", r + 1, c + 1),
                    None => "entries differ".into(),
                },
            ));
        }
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { code, matrix, dump_matrix, decoder } => {
            let code = load_code(&code)?;
            let cfg = decoder.config(code.q())?;
            let model = build_model(&code, &cfg)?;
            validate(&model, matrix.as_deref())?;
            if let Some(path) = dump_matrix {
                let mut w = create(&path)?;
                model.write_matrix_market(&mut w)?;
                w.flush()?;
            }
            println!(
                "ok: n={} m={} q={} aux={} three_var_checks={} rows={} cols={} nnz={}",
                code.n(),
                code.m(),
                code.q(),
                model.gamma_a(),
                model.gamma_c(),
                model.num_rows(),
                model.num_cols(),
                model.entries().count()
            );
        }
        Command::Decode { code, cost, decoder, conditioning, dump_trajectory } => {
            let code = load_code(&code)?;
            let cfg = decoder.config(code.q())?;
            let file = File::open(&cost).map_err(|e| Failure::Validation(format!("{}: {e}", cost.display())))?;
            let mut costs = CostVector::read_from(io::BufReader::new(file))
                .map_err(|e| Failure::Validation(format!("{}: {e}", cost.display())))?;
            if costs.q != code.q() || costs.n() != code.n() {
                return Err(Failure::Validation(format!(
                    "cost file is for n={} q={}, code has n={} q={}",
                    costs.n(),
                    costs.q,
                    code.n(),
                    code.q()
                )));
            }
            if let Some(c) = conditioning.clip {
                costs.clip(c);
            }
            if let Some(l) = conditioning.limit() {
                costs.rescale_to(l);
            }
            let model = build_model(&code, &cfg)?;
            let lambda = model.extend_cost(&costs.gamma);
            let mut dec = Decoder::new(&model, cfg).map_err(|e| Failure::Usage(e.to_string()))?;
            let (res, _, trace) = dec.decode_traced(&lambda);
            if let Some(path) = dump_trajectory {
                let mut w = create(&path)?;
                padmm::write_trajectory(&trace, &mut w)?;
                w.flush()?;
            }
            let word: Vec<String> = res.word.iter().map(|s| s.to_string()).collect();
            println!("{}", word.join(" "));
            println!(
                "iterations={} converged={} syndrome_valid={} r1sq={:e} r2sq={:e}",
                res.iterations, res.converged, res.syndrome_valid, res.r1sq, res.r2sq
            );
        }
        Command::Simulate {
            code,
            channel,
            frames,
            decoder,
            conditioning,
            out,
            dump_trajectory,
            workers,
        } => {
            let code = load_code(&code)?;
            let cfg = decoder.config(code.q())?;
            let scheme = scheme_for(&code, channel.modulation)?;
            if frames == 0 {
                return Err(Failure::Usage("--frames must be at least 1".into()));
            }
            let spec = TrialSpec {
                source: channel.source,
                workers,
                clip: conditioning.clip,
                cost_limit: conditioning.limit(),
                ..TrialSpec::new(scheme, channel.esn0, frames, cfg, channel.seed)
            };
            let (summary, results) = sim::run_trials(&code, &spec).map_err(|e| Failure::Validation(e.to_string()))?;
            match out {
                Some(path) => {
                    let mut w = create(&path)?;
                    sim::write_csv(&summary, &results, &mut w)?;
                    w.flush()?;
                    eprintln!(
                        "fer={:.6e} ser={:.6e} mean_iterations={:.2} frames={}",
                        summary.fer, summary.ser, summary.mean_iterations, summary.frames
                    );
                }
                None => sim::write_csv(&summary, &results, io::stdout().lock())?,
            }
            if let Some(path) = dump_trajectory {
                let model = build_model(&code, &cfg)?;
                let encoder = match spec.source {
                    Source::RandomCodeword => derive_encoder(&code).ok(),
                    Source::AllZeros => None,
                };
                let mut rng = sim::frame_rng(spec.master_seed, 0);
                let (_, mut costs) = sim::frame_channel(&code, encoder.as_ref(), scheme, spec.esn0_db, &mut rng)
                    .map_err(|e| Failure::Validation(e.to_string()))?;
                spec.condition(&mut costs);
                let mut dec = Decoder::new(&model, cfg).map_err(|e| Failure::Usage(e.to_string()))?;
                let (_, _, trace) = dec.decode_traced(&model.extend_cost(&costs.gamma));
                let mut w = create(&path)?;
                padmm::write_trajectory(&trace, &mut w)?;
                w.flush()?;
            }
        }
        Command::OracleCompare {
            code,
            channel,
            frames,
            decoder,
            conditioning,
            min_agreement,
        } => {
            let code = match code {
                Some(p) => load_code(&p)?,
                None => nbldpc::tiny_code(),
            };
            let cfg = decoder.config(code.q())?;
            let scheme = scheme_for(&code, channel.modulation)?;
            let model = build_model(&code, &cfg)?;
            let spec = TrialSpec {
                source: channel.source,
                clip: conditioning.clip,
                cost_limit: conditioning.limit(),
                ..TrialSpec::new(scheme, channel.esn0, frames, cfg, channel.seed)
            };
            let encoder = match spec.source {
                Source::RandomCodeword => derive_encoder(&code).ok(),
                Source::AllZeros => None,
            };
            let mut dec = Decoder::new(&model, cfg).map_err(|e| Failure::Usage(e.to_string()))?;
            let (mut agree, mut below_ml) = (0u64, 0u64);
            for i in 0..frames {
                let mut rng = sim::frame_rng(spec.master_seed, i);
                let (_, mut costs) = sim::frame_channel(&code, encoder.as_ref(), scheme, spec.esn0_db, &mut rng)
                    .map_err(|e| Failure::Validation(e.to_string()))?;
                let ml = oracle::ml_decode_bruteforce(&code, &costs.gamma)
                    .map_err(|e| Failure::Usage(e.to_string()))?;
                let raw = costs.clone();
                spec.condition(&mut costs);
                let (res, _) = dec.decode(&model.extend_cost(&costs.gamma));
                if res.word == ml {
                    agree += 1;
                } else if res.syndrome_valid && raw.word_cost(&res.word) < raw.word_cost(&ml) - 1e-6 {
                    below_ml += 1;
                }
            }
            let rate = agree as f64 / frames.max(1) as f64;
            println!("agreement={rate:.4} ({agree}/{frames}) esn0={} modulation={scheme}", channel.esn0);
            if below_ml > 0 {
                return Err(Failure::Validation(format!(
                    "ML oracle: decoder found a cheaper codeword on {below_ml} frames"
                )));
            }
            if let Some(min) = min_agreement {
                if rate < min {
                    return Err(Failure::Validation(format!("agreement {rate:.4} below {min}")));
                }
            }
        }
        Command::GenCost { code, channel, frame, out } => {
            let code = load_code(&code)?;
            let scheme = scheme_for(&code, channel.modulation)?;
            let encoder = match channel.source {
                Source::RandomCodeword => derive_encoder(&code).ok(),
                Source::AllZeros => None,
            };
            let mut rng = sim::frame_rng(channel.seed, frame);
            let (word, costs) = sim::frame_channel(&code, encoder.as_ref(), scheme, channel.esn0, &mut rng)
                .map_err(|e| Failure::Validation(e.to_string()))?;
            let mut w = create(&out)?;
            costs.write_to(&mut w)?;
            w.flush()?;
            let word: Vec<String> = word.iter().map(|s| s.to_string()).collect();
            println!("{}", word.join(" "));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}
