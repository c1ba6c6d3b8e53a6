//! Proximal-ADMM iteration for the penalized QP relaxation
//!
//! ```text
//! min  lambda^T v - (alpha/2) ||v - 0.5||^2
//! s.t. A v + e1 = b, e1 >= 0,  v = e2, 0 <= e2 <= 1
//! ```
//!
//! One iteration updates, in order: `v` (closed-form block inverse), `e1`
//! and `e2` (projected scalar minimizers), then the relaxation points
//! `p, z1, z2` and the duals. The duals are kept scaled by `1/mu`.

use std::io::{self, Write};

use thiserror::Error;

use crate::field::Symbol;
use crate::qpbuild::QpModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("mu must be positive, got {0}")]
    Mu(f64),
    #[error("alpha must be positive, got {0}")]
    Alpha(f64),
    #[error("rho ({rho}) must exceed alpha ({alpha})")]
    RhoNotAboveAlpha { rho: f64, alpha: f64 },
    #[error("beta must lie in (0, 1], got {0}")]
    Beta(f64),
    #[error("tol must be nonnegative, got {0}")]
    Tol(f64),
    #[error("max_iter must be at least 1")]
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    pub mu: f64,
    pub alpha: f64,
    pub rho: f64,
    pub beta: f64,
    /// Threshold on both squared residuals.
    pub tol: f64,
    pub max_iter: usize,
    /// Stop as soon as the hard decision satisfies every check. Off by default.
    pub stop_on_valid_syndrome: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            mu: 0.8,
            alpha: 0.5,
            rho: 0.52,
            beta: 0.9,
            tol: 1e-5,
            max_iter: 500,
            stop_on_valid_syndrome: false,
        }
    }
}

impl DecoderConfig {
    /// Defaults with `mu = 0.8` for q <= 2 and `mu = 0.6` above.
    pub fn for_field(q: u32) -> Self {
        DecoderConfig {
            mu: if q <= 2 { 0.8 } else { 0.6 },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.mu > 0.0) {
            return Err(ConfigError::Mu(self.mu));
        }
        if !(self.alpha > 0.0) {
            return Err(ConfigError::Alpha(self.alpha));
        }
        if !(self.rho > self.alpha) {
            return Err(ConfigError::RhoNotAboveAlpha {
                rho: self.rho,
                alpha: self.alpha,
            });
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(ConfigError::Beta(self.beta));
        }
        if !(self.tol >= 0.0) {
            return Err(ConfigError::Tol(self.tol));
        }
        if self.max_iter == 0 {
            return Err(ConfigError::MaxIter);
        }
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        crate::qpbuild::proximal_epsilon(self.mu, self.alpha, self.rho)
    }
}

/// The eight iterate vectors. `y1`, `y2` hold the duals divided by `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub v: Vec<f64>,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub p: Vec<f64>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub iter: usize,
    /// `||A v + e1 - b||^2` after the latest iteration.
    pub r1sq: f64,
    /// `||v - e2||^2` after the latest iteration.
    pub r2sq: f64,
    // A v^k from the latest v-update.
    av: Vec<f64>,
}

pub fn init_state(model: &QpModel) -> DecoderState {
    let (m, n) = (model.num_rows(), model.num_cols());
    let b = model.b();
    DecoderState {
        v: vec![0.0; n],
        e1: vec![0.0; m],
        e2: vec![0.0; n],
        p: vec![0.0; n],
        z1: vec![0.0; m],
        z2: vec![0.0; n],
        y1: vec![0.0; m],
        y2: vec![0.0; n],
        iter: 0,
        r1sq: b.iter().map(|x| x * x).sum(),
        r2sq: 0.0,
        av: vec![0.0; m],
    }
}

impl DecoderState {
    /// Unscaled multipliers `(mu y1, mu y2)`.
    pub fn duals(&self, mu: f64) -> (Vec<f64>, Vec<f64>) {
        (
            self.y1.iter().map(|y| mu * y).collect(),
            self.y2.iter().map(|y| mu * y).collect(),
        )
    }
}

/// `(lambda + 0.5 alpha) / mu`, fixed for a frame.
pub fn cost_shift(lambda: &[f64], cfg: &DecoderConfig) -> Vec<f64> {
    lambda
        .iter()
        .map(|l| (l + 0.5 * cfg.alpha) / cfg.mu)
        .collect()
}

fn phi_into(
    state: &DecoderState,
    model: &QpModel,
    shift: &[f64],
    cfg: &DecoderConfig,
    scratch: &mut [f64],
    phi: &mut [f64],
) {
    for (r, s) in scratch.iter_mut().enumerate() {
        *s = model.rhs(r) - state.e1[r] - state.y1[r];
    }
    model.apply_transpose(scratch, phi);
    let rho_mu = cfg.rho / cfg.mu;
    for (l, out) in phi.iter_mut().enumerate() {
        *out += state.e2[l] - state.y2[l] + rho_mu * state.p[l] - shift[l];
    }
}

/// `A^T (b - e1 - y1/mu) + (e2 - y2/mu) + (rho/mu) p - (lambda + 0.5 alpha)/mu`.
pub fn phi_vector(
    state: &DecoderState,
    model: &QpModel,
    lambda: &[f64],
    cfg: &DecoderConfig,
) -> Vec<f64> {
    let shift = cost_shift(lambda, cfg);
    let mut scratch = vec![0.0; model.num_rows()];
    let mut phi = vec![0.0; model.num_cols()];
    phi_into(state, model, &shift, cfg, &mut scratch, &mut phi);
    phi
}

/// Solves `(A^T A + eps I) v = phi` block by block:
/// `v_i = (theta_i - omega_i) phi_i + omega_i (sum of phi_i) 1`.
pub fn v_update(model: &QpModel, phi: &[f64], v: &mut [f64]) {
    let k = model.block_len();
    for (i, (vb, pb)) in v.chunks_exact_mut(k).zip(phi.chunks_exact(k)).enumerate() {
        let diag = model.theta()[i] - model.omega()[i];
        let common = model.omega()[i] * pb.iter().sum::<f64>();
        for (x, &p) in vb.iter_mut().zip(pb) {
            *x = diag * p + common;
        }
    }
}

/// `e1 = max(0, mu/(rho+mu) (b - A v - y1/mu + (rho/mu) z1))`; expects
/// `state.av` to hold `A v` for the current `v`.
fn e1_update_from_av(state: &mut DecoderState, model: &QpModel, cfg: &DecoderConfig) {
    let scale = cfg.mu / (cfg.rho + cfg.mu);
    let rho_mu = cfg.rho / cfg.mu;
    for (r, e) in state.e1.iter_mut().enumerate() {
        let arg = model.rhs(r) - state.av[r] - state.y1[r] + rho_mu * state.z1[r];
        *e = (scale * arg).max(0.0);
    }
}

/// Recomputes `A v` and applies the projected `e1` update.
pub fn e1_update(state: &mut DecoderState, model: &QpModel, cfg: &DecoderConfig) {
    let mut av = std::mem::take(&mut state.av);
    model.apply(&state.v, &mut av);
    state.av = av;
    e1_update_from_av(state, model, cfg);
}

/// `e2 = clamp(mu/(rho+mu) (v + y2/mu + (rho/mu) z2), 0, 1)`.
pub fn e2_update(state: &mut DecoderState, cfg: &DecoderConfig) {
    let scale = cfg.mu / (cfg.rho + cfg.mu);
    let rho_mu = cfg.rho / cfg.mu;
    for (l, e) in state.e2.iter_mut().enumerate() {
        let arg = state.v[l] + state.y2[l] + rho_mu * state.z2[l];
        *e = (scale * arg).clamp(0.0, 1.0);
    }
}

/// Relaxation of `p, z1, z2` toward the new iterates, scaled dual ascent,
/// and both squared residuals from the same `A v`.
pub fn relax_and_dual_update(state: &mut DecoderState, model: &QpModel, cfg: &DecoderConfig) {
    let beta = cfg.beta;
    let mut r1sq = 0.0;
    for r in 0..state.e1.len() {
        state.z1[r] += beta * (state.e1[r] - state.z1[r]);
        let res = state.av[r] + state.e1[r] - model.rhs(r);
        state.y1[r] += res;
        r1sq += res * res;
    }
    let mut r2sq = 0.0;
    for l in 0..state.v.len() {
        state.p[l] += beta * (state.v[l] - state.p[l]);
        state.z2[l] += beta * (state.e2[l] - state.z2[l]);
        let res = state.v[l] - state.e2[l];
        state.y2[l] += res;
        r2sq += res * res;
    }
    state.r1sq = r1sq;
    state.r2sq = r2sq;
}

/// Per-block argmax of `v` over the original symbols; a block whose
/// maximum is below 0.5 decodes to 0. Ties go to the smaller index.
pub fn hard_decision(v: &[f64], model: &QpModel) -> Vec<Symbol> {
    let k = model.block_len();
    v.chunks_exact(k)
        .take(model.n())
        .map(|block| {
            let (arg, max) = block
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &x)| {
                    if x > best.1 {
                        (j, x)
                    } else {
                        best
                    }
                });
            if max >= 0.5 {
                arg as Symbol + 1
            } else {
                0
            }
        })
        .collect()
}

/// Outcome of decoding one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub word: Vec<Symbol>,
    pub iterations: usize,
    pub converged: bool,
    pub syndrome_valid: bool,
    pub r1sq: f64,
    pub r2sq: f64,
}

/// One `(iteration, r1sq, r2sq)` record per iteration.
pub type Trajectory = Vec<(usize, f64, f64)>;

/// Proximal-ADMM decoder bound to one model and configuration. Owns the
/// scratch buffers, so reuse one instance per worker.
pub struct Decoder<'m> {
    model: &'m QpModel,
    cfg: DecoderConfig,
    scratch: Vec<f64>,
    phi: Vec<f64>,
}

impl<'m> Decoder<'m> {
    pub fn new(model: &'m QpModel, cfg: DecoderConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        debug_assert!((model.epsilon() - cfg.epsilon()).abs() < 1e-12);
        Ok(Decoder {
            model,
            cfg,
            scratch: vec![0.0; model.num_rows()],
            phi: vec![0.0; model.num_cols()],
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.cfg
    }

    /// One full iteration; `shift` is [`cost_shift`] of the frame's costs.
    pub fn step(&mut self, state: &mut DecoderState, shift: &[f64]) {
        let model = self.model;
        phi_into(state, model, shift, &self.cfg, &mut self.scratch, &mut self.phi);
        v_update(model, &self.phi, &mut state.v);
        e1_update(state, model, &self.cfg);
        e2_update(state, &self.cfg);
        relax_and_dual_update(state, model, &self.cfg);
        state.iter += 1;
    }

    /// Runs from the all-zeros state until both squared residuals are at
    /// most `tol` or `max_iter` iterations have run.
    pub fn decode(&mut self, lambda: &[f64]) -> (DecodeResult, DecoderState) {
        self.run(lambda, None)
    }

    pub fn decode_traced(&mut self, lambda: &[f64]) -> (DecodeResult, DecoderState, Trajectory) {
        let mut trace = Vec::new();
        let (res, state) = self.run(lambda, Some(&mut trace));
        (res, state, trace)
    }

    fn run(
        &mut self,
        lambda: &[f64],
        mut trace: Option<&mut Trajectory>,
    ) -> (DecodeResult, DecoderState) {
        assert_eq!(lambda.len(), self.model.num_cols(), "cost length");
        let shift = cost_shift(lambda, &self.cfg);
        let mut state = init_state(self.model);
        let mut converged = false;
        while state.iter < self.cfg.max_iter {
            self.step(&mut state, &shift);
            if let Some(t) = trace.as_deref_mut() {
                t.push((state.iter, state.r1sq, state.r2sq));
            }
            if state.r1sq <= self.cfg.tol && state.r2sq <= self.cfg.tol {
                converged = true;
                break;
            }
            if self.cfg.stop_on_valid_syndrome
                && self
                    .model
                    .code()
                    .syndrome_holds(&hard_decision(&state.v, self.model))
            {
                break;
            }
        }
        let word = hard_decision(&state.v, self.model);
        let syndrome_valid = self.model.code().syndrome_holds(&word);
        (
            DecodeResult {
                word,
                iterations: state.iter,
                converged,
                syndrome_valid,
                r1sq: state.r1sq,
                r2sq: state.r2sq,
            },
            state,
        )
    }
}

/// Convenience wrapper: validate, decode one frame, return the result.
pub fn decode(
    model: &QpModel,
    lambda: &[f64],
    cfg: &DecoderConfig,
) -> Result<DecodeResult, ConfigError> {
    let mut dec = Decoder::new(model, *cfg)?;
    Ok(dec.decode(lambda).0)
}

/// Largest violation of the first-order condition
/// `(u - v)^T grad g(v) >= 0` along the `2N` coordinate directions of the
/// box, at `v = clamp(state.v, 0, 1)`, for
/// `g(v) = lambda^T v - (alpha/2) ||v - 0.5||^2` with the constraint
/// `A v <= b` priced by the decoder's multiplier `mu y1`.
///
/// With `G = grad g(v) + A^T (mu y1)`, coordinate `l` contributes the
/// projected-gradient step `|v_l - clamp(v_l - G_l, 0, 1)|`: `|G_l|` in the
/// interior, only the outward part of `G_l` at a bound, and never more
/// than the distance to the bound the step runs into. The box multiplier
/// `y2` is what the projection stands in for, so it does not enter.
pub fn stationarity_residual(
    state: &DecoderState,
    model: &QpModel,
    lambda: &[f64],
    cfg: &DecoderConfig,
) -> f64 {
    let y1: Vec<f64> = state.y1.iter().map(|y| cfg.mu * y).collect();
    let mut grad = vec![0.0; model.num_cols()];
    model.apply_transpose(&y1, &mut grad);
    let mut worst: f64 = 0.0;
    for (l, g) in grad.iter().enumerate() {
        let v = state.v[l].clamp(0.0, 1.0);
        let g = g + lambda[l] - cfg.alpha * (v - 0.5);
        worst = worst.max((v - (v - g).clamp(0.0, 1.0)).abs());
    }
    worst
}

/// Writes a trajectory as `iteration,r1sq,r2sq` CSV.
pub fn write_trajectory<W: Write>(trace: &Trajectory, mut w: W) -> io::Result<()> {
    writeln!(w, "iteration,r1sq,r2sq")?;
    for (k, r1, r2) in trace {
        writeln!(w, "{k},{r1:e},{r2:e}")?;
    }
    Ok(())
}
