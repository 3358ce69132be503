//! Normalized min-sum decoding of a [`GariModel`].
//!
//! One iteration updates the bottom rows as two layers (the `U` rows, then
//! the `V` rows) and then the `D_X` and `D_Z` rows, each in a fresh random
//! serial order. Posterior LLRs are positive for "no error". After every
//! iteration the hard decision on `ebar_X` is checked against `s_Z`.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gari::GariModel;
use crate::mask::ObsMask;
use crate::seed::{shuffle, stream_rng};

pub const ALPHA_DEFAULT: f64 = 0.96875;
pub const ALPHA_FINE: f64 = 0.9921875;
pub const MAX_ITERS_DEFAULT: usize = 400;
pub const MAGNITUDE_CAP_DEFAULT: f64 = 1e6;

/// Stream ids of the two top-part permutation generators.
const STREAM_TOP_X: u64 = 1;
const STREAM_TOP_Z: u64 = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecodeError {
    #[error("{what} has length {got}, expected {expected}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("invalid decoder configuration: {0}")]
    Config(String),
}

/// When decoding stops early.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCriterion {
    /// `D_Z ebar_X = s_Z`.
    #[default]
    MemorySyndrome,
    /// `D_Z ebar_X = s_Z` and `D_X ebar_Z = s_X`.
    BothSyndromes,
    /// Never stop early; `converged` reports whether the final decision
    /// satisfies `D_Z ebar_X = s_Z`.
    FixedIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub alpha: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub magnitude_cap: f64,
    pub stop: StopCriterion,
    /// Run the `D_X` and `D_Z` units on two rayon workers. The result does
    /// not depend on this flag.
    pub parallel_units: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            alpha: ALPHA_DEFAULT,
            max_iters: MAX_ITERS_DEFAULT,
            seed: 0,
            magnitude_cap: MAGNITUDE_CAP_DEFAULT,
            stop: StopCriterion::MemorySyndrome,
            parallel_units: false,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(DecodeError::Config(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if self.max_iters == 0 {
            return Err(DecodeError::Config("max_iters must be at least 1".into()));
        }
        if self.magnitude_cap.is_nan() || self.magnitude_cap <= 0.0 {
            return Err(DecodeError::Config(format!("magnitude_cap must be positive, got {}", self.magnitude_cap)));
        }
        Ok(())
    }
}

/// Syndromes of one shot, split by detector type.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DecodeInput {
    pub s_x: Vec<bool>,
    pub s_z: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeOutcome {
    pub converged: bool,
    pub iterations: usize,
    pub ex_hat: Vec<bool>,
    pub predicted_obs: ObsMask,
    /// Sum of `ln((1-p)/p)` over set `ebar_X` bits, with merged priors.
    pub weight: f64,
}

/// `ln((1-p)/p)` clipped to `±cap`.
pub fn prior_llr(p: f64, cap: f64) -> f64 {
    ((1.0 - p) / p).ln().clamp(-cap, cap)
}

/// Compressed rows with `u32` column indices into a slice of the LLR vector.
#[derive(Debug, Clone)]
struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
}

impl Csr {
    fn new<'a>(rows: impl Iterator<Item = &'a [usize]>, col_offset: usize) -> Self {
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        for r in rows {
            cols.extend(r.iter().map(|&c| (c - col_offset) as u32));
            row_ptr.push(cols.len());
        }
        Self { row_ptr, cols }
    }

    fn num_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    fn row_range(&self, r: usize) -> std::ops::Range<usize> {
        self.row_ptr[r]..self.row_ptr[r + 1]
    }

    /// Parity of the hard decisions `llr < 0` over row `r`.
    fn hard_parity(&self, r: usize, llr: &[f64]) -> bool {
        self.cols[self.row_range(r)].iter().fold(false, |a, &c| a ^ (llr[c as usize] < 0.0))
    }
}

/// The Tanner graph of a [`GariModel`] laid out for message passing.
///
/// Built once and shared read-only by any number of decoder states.
#[derive(Debug, Clone)]
pub struct DecoderGraph {
    bottom: Csr,
    num_u_rows: usize,
    /// Columns relative to the start of `ebar_Z`.
    top_x: Csr,
    /// Columns relative to the start of `ebar_X`.
    top_z: Csr,
    bar_z_start: usize,
    bar_x_start: usize,
    num_cols: usize,
    /// Unclipped `ln((1-p)/p)` of the original columns.
    prior_llrs: Vec<f64>,
    merged_priors_ex: Vec<f64>,
    obs_mask_ex: Vec<ObsMask>,
}

impl DecoderGraph {
    pub fn new(gm: &GariModel) -> Self {
        let l = gm.layout;
        Self {
            bottom: Csr::new(gm.bottom.rows(), 0),
            num_u_rows: l.bar_z,
            top_x: Csr::new(gm.top_x.rows(), 0),
            top_z: Csr::new(gm.top_z.rows(), 0),
            bar_z_start: l.bar_z_range().start,
            bar_x_start: l.bar_x_range().start,
            num_cols: l.total(),
            prior_llrs: gm.priors[..l.num_original()].iter().map(|&p| ((1.0 - p) / p).ln()).collect(),
            merged_priors_ex: gm.merged_priors_ex.clone(),
            obs_mask_ex: gm.obs_mask_ex.clone(),
        }
    }

    /// Message updates per iteration; equals the nonzeros of the augmented
    /// matrix.
    pub fn num_edges(&self) -> usize {
        self.bottom.cols.len() + self.top_x.cols.len() + self.top_z.cols.len()
    }

    pub fn num_x_checks(&self) -> usize {
        self.top_x.num_rows()
    }

    pub fn num_z_checks(&self) -> usize {
        self.top_z.num_rows()
    }

    pub fn num_bar_x(&self) -> usize {
        self.num_cols - self.bar_x_start
    }

    pub fn check_input(&self, input: &DecodeInput) -> Result<(), DecodeError> {
        if input.s_x.len() != self.num_x_checks() {
            return Err(DecodeError::Dimension { what: "s_X", expected: self.num_x_checks(), got: input.s_x.len() });
        }
        if input.s_z.len() != self.num_z_checks() {
            return Err(DecodeError::Dimension { what: "s_Z", expected: self.num_z_checks(), got: input.s_z.len() });
        }
        Ok(())
    }
}

/// Message-passing update of one check row.
///
/// `cols` index into `llr`; `msgs` holds the row's current check-to-column
/// messages; `flip` is the syndrome bit.
#[inline]
pub fn check_update(cols: &[u32], msgs: &mut [f64], llr: &mut [f64], flip: bool, alpha: f64, cap: f64) {
    let (mut min1, mut min2) = (f64::INFINITY, f64::INFINITY);
    let mut arg_min = usize::MAX;
    let mut negative = flip;
    // First pass: replace each message by the extrinsic value.
    for (k, (&c, m)) in cols.iter().zip(msgs.iter_mut()).enumerate() {
        let e = llr[c as usize] - *m;
        *m = e;
        negative ^= e < 0.0;
        let a = e.abs();
        if a < min1 {
            min2 = min1;
            min1 = a;
            arg_min = k;
        } else if a < min2 {
            min2 = a;
        }
    }
    let min1 = if min1.is_finite() { min1 } else { cap };
    let min2 = if min2.is_finite() { min2 } else { cap };
    for (k, (&c, m)) in cols.iter().zip(msgs.iter_mut()).enumerate() {
        let e = *m;
        let mag = alpha * if k == arg_min { min2 } else { min1 };
        let out = if negative ^ (e < 0.0) { -mag } else { mag }.clamp(-cap, cap);
        *m = out;
        llr[c as usize] = (e + out).clamp(-cap, cap);
    }
}

/// Decoder state of one member: LLRs, messages and permutation streams.
#[derive(Debug, Clone)]
pub struct DecoderState {
    pub llr: Vec<f64>,
    msgs_bottom: Vec<f64>,
    msgs_x: Vec<f64>,
    msgs_z: Vec<f64>,
    rng_x: ChaCha8Rng,
    rng_z: ChaCha8Rng,
    perm_x: Vec<u32>,
    perm_z: Vec<u32>,
    pub iteration: usize,
    pub converged: bool,
    alpha: f64,
    cap: f64,
    stop: StopCriterion,
    parallel_units: bool,
}

impl DecoderState {
    pub fn new(graph: &DecoderGraph, cfg: &DecoderConfig) -> Self {
        let mut st = Self {
            llr: vec![0.0; graph.num_cols],
            msgs_bottom: vec![0.0; graph.bottom.cols.len()],
            msgs_x: vec![0.0; graph.top_x.cols.len()],
            msgs_z: vec![0.0; graph.top_z.cols.len()],
            rng_x: stream_rng(cfg.seed, STREAM_TOP_X),
            rng_z: stream_rng(cfg.seed, STREAM_TOP_Z),
            perm_x: Vec::with_capacity(graph.top_x.num_rows()),
            perm_z: Vec::with_capacity(graph.top_z.num_rows()),
            iteration: 0,
            converged: false,
            alpha: cfg.alpha,
            cap: cfg.magnitude_cap,
            stop: cfg.stop,
            parallel_units: cfg.parallel_units,
        };
        st.reset(graph, cfg);
        st
    }

    /// Returns the state to its initial value for `cfg`, reusing buffers.
    /// `graph` must be the graph the state was created for.
    pub fn reset(&mut self, graph: &DecoderGraph, cfg: &DecoderConfig) {
        let cap = cfg.magnitude_cap;
        let (orig, bar) = self.llr.split_at_mut(graph.bar_z_start);
        for (l, &p) in orig.iter_mut().zip(&graph.prior_llrs) {
            *l = p.clamp(-cap, cap);
        }
        bar.fill(0.0);
        self.msgs_bottom.fill(0.0);
        self.msgs_x.fill(0.0);
        self.msgs_z.fill(0.0);
        self.rng_x = stream_rng(cfg.seed, STREAM_TOP_X);
        self.rng_z = stream_rng(cfg.seed, STREAM_TOP_Z);
        self.perm_x.clear();
        self.perm_x.extend(0..graph.top_x.num_rows() as u32);
        self.perm_z.clear();
        self.perm_z.extend(0..graph.top_z.num_rows() as u32);
        self.iteration = 0;
        self.converged = false;
        self.alpha = cfg.alpha;
        self.cap = cap;
        self.stop = cfg.stop;
        self.parallel_units = cfg.parallel_units;
    }

    /// Updates the `U` rows, then the `V` rows.
    pub fn iterate_bottom(&mut self, graph: &DecoderGraph) {
        let g = &graph.bottom;
        for r in 0..g.num_rows() {
            let range = g.row_range(r);
            check_update(
                &g.cols[range.clone()],
                &mut self.msgs_bottom[range],
                &mut self.llr,
                false,
                self.alpha,
                self.cap,
            );
        }
        debug_assert!(graph.num_u_rows <= g.num_rows());
    }

    /// Updates the `D_X` and `D_Z` rows in fresh random orders.
    pub fn iterate_top(&mut self, graph: &DecoderGraph, input: &DecodeInput) {
        let (alpha, cap) = (self.alpha, self.cap);
        let (head, llr_x) = self.llr.split_at_mut(graph.bar_x_start);
        let llr_z = &mut head[graph.bar_z_start..];
        let mut unit_x = || {
            shuffle(&mut self.perm_x, &mut self.rng_x);
            serial_pass(&graph.top_x, &self.perm_x, &mut self.msgs_x, llr_z, &input.s_x, alpha, cap)
        };
        let mut unit_z = || {
            shuffle(&mut self.perm_z, &mut self.rng_z);
            serial_pass(&graph.top_z, &self.perm_z, &mut self.msgs_z, llr_x, &input.s_z, alpha, cap)
        };
        if self.parallel_units {
            rayon::join(unit_x, unit_z);
        } else {
            unit_x();
            unit_z();
        }
    }

    /// Whether the current hard decision satisfies the stop criterion.
    pub fn is_solution(&self, graph: &DecoderGraph, input: &DecodeInput) -> bool {
        let bar_x = &self.llr[graph.bar_x_start..];
        let z_ok = (0..graph.top_z.num_rows()).all(|r| graph.top_z.hard_parity(r, bar_x) == input.s_z[r]);
        match self.stop {
            StopCriterion::MemorySyndrome | StopCriterion::FixedIterations => z_ok,
            StopCriterion::BothSyndromes => {
                let bar_z = &self.llr[graph.bar_z_start..graph.bar_x_start];
                z_ok && (0..graph.top_x.num_rows()).all(|r| graph.top_x.hard_parity(r, bar_z) == input.s_x[r])
            }
        }
    }

    /// Row orders used by the last top-part pass.
    pub fn permutations(&self) -> (&[u32], &[u32]) {
        (&self.perm_x, &self.perm_z)
    }

    fn halted(&self) -> bool {
        self.converged && self.stop != StopCriterion::FixedIterations
    }

    /// Runs one full iteration and returns whether the decoder has stopped.
    /// Does nothing once stopped.
    pub fn step(&mut self, graph: &DecoderGraph, input: &DecodeInput) -> bool {
        if self.halted() {
            return true;
        }
        self.iterate_bottom(graph);
        self.iterate_top(graph, input);
        self.iteration += 1;
        self.converged = self.is_solution(graph, input);
        self.halted()
    }

    pub fn outcome(&self, graph: &DecoderGraph) -> DecodeOutcome {
        let ex_hat: Vec<bool> = self.llr[graph.bar_x_start..].iter().map(|&l| l < 0.0).collect();
        let mut predicted_obs = ObsMask::new();
        let mut weight = 0.0;
        for (k, _) in ex_hat.iter().enumerate().filter(|(_, &b)| b) {
            predicted_obs.xor_assign(&graph.obs_mask_ex[k]);
            weight += prior_llr(graph.merged_priors_ex[k], self.cap);
        }
        DecodeOutcome { converged: self.converged, iterations: self.iteration, ex_hat, predicted_obs, weight }
    }
}

fn serial_pass(
    g: &Csr,
    order: &[u32],
    msgs: &mut [f64],
    llr: &mut [f64],
    syndrome: &[bool],
    alpha: f64,
    cap: f64,
) {
    for &r in order {
        let r = r as usize;
        let range = g.row_range(r);
        check_update(&g.cols[range.clone()], &mut msgs[range], llr, syndrome[r], alpha, cap);
    }
}

/// Decodes with a prebuilt graph.
pub fn decode_with_graph(
    graph: &DecoderGraph,
    input: &DecodeInput,
    cfg: &DecoderConfig,
) -> Result<DecodeOutcome, DecodeError> {
    decode_in(graph, input, cfg, &mut None)
}

/// Like [`decode_with_graph`], reusing the state in `slot` if there is one.
pub fn decode_in(
    graph: &DecoderGraph,
    input: &DecodeInput,
    cfg: &DecoderConfig,
    slot: &mut Option<DecoderState>,
) -> Result<DecodeOutcome, DecodeError> {
    cfg.validate()?;
    graph.check_input(input)?;
    let state = match slot {
        Some(st) => {
            st.reset(graph, cfg);
            st
        }
        None => slot.insert(DecoderState::new(graph, cfg)),
    };
    while state.iteration < cfg.max_iters && !state.step(graph, input) {}
    Ok(state.outcome(graph))
}

pub fn decode(gm: &GariModel, input: &DecodeInput, cfg: &DecoderConfig) -> Result<DecodeOutcome, DecodeError> {
    decode_with_graph(&DecoderGraph::new(gm), input, cfg)
}
