//! Phase-aware sampling.
//!
//! The denoising trajectory splits into a *sketching* phase, where every
//! block's input activation still changes step to step, and a *refinement*
//! phase, where only the top up-blocks keep moving. This module finds that
//! structure in measured shift-score traces and turns it into a per-timestep
//! depth schedule:
//!
//! 1. [`parse_trace_csv`] ingests per-image, per-block shift scores.
//! 2. [`normalize_scores`] averages across images and min-max scales each
//!    block's curve to `[0, 1]`.
//! 3. [`detect_outliers`] flags blocks whose normalized score stays high in
//!    the late window — they must keep executing during refinement.
//! 4. [`find_transition`] sweeps all two-segment splits of the mean curve
//!    and returns the SSE-minimizing transition step `D*`.
//! 5. [`build_schedule`] expands a parameter set into the depth schedule
//!    `l_t`; [`mac_reduction`] scores it; [`search_plan`] enumerates the
//!    parameter grid under constraints and ranks feasible plans.
//!
//! Timesteps are indexed forward: `t = 0` is the first denoising step from
//! pure noise. Trace rows carry `t ∈ [1, T−1]` (a shift score compares two
//! adjacent steps) and `T` is inferred as the largest timestep plus one.
//! Block ids are up-block indices 1–12; block 0 is accepted as the noise
//! curve and excluded from all statistics.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::rng::SplitMix64;

/// Depth of the full network in blocks: running all 13 levels (12 up-block
/// levels plus the middle) — `l_t = FULL_DEPTH` marks a full step.
pub const FULL_DEPTH: u32 = 13;
/// Number of up blocks carrying shift scores.
pub const BLOCK_COUNT: u32 = 12;
/// Fraction of trailing timesteps examined by outlier detection.
pub const DEFAULT_LATE_FRACTION: f64 = 0.25;
/// Late-window mean above this marks a block as an outlier.
pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 0.3;

const TRACE_HEADER: &str = "image_id,block_id,timestep,shift_score";

#[derive(Debug, Clone, PartialEq)]
pub enum PhaseError {
    Parse { line: usize, reason: String },
    Header { found: String },
    EmptyTrace,
    DuplicateCell { image: u32, block: u32, timestep: u32 },
    MissingCell { image: u32, block: u32, timestep: u32 },
    NegativeScore { image: u32, block: u32, timestep: u32 },
    NonFiniteScore { image: u32, block: u32, timestep: u32 },
    BlockOutOfRange { block: u32 },
    TimestepOutOfRange { timestep: u32 },
    TooFewTimesteps { t_total: u32 },
    PlanInvariant(String),
    EmptyConstraints,
    BadSynthParams(String),
}

impl core::fmt::Display for PhaseError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PhaseError::Parse { line, reason } => write!(f, "trace line {line}: {reason}"),
            PhaseError::Header { found } => {
                write!(f, "bad trace header {found:?}, expected {TRACE_HEADER:?}")
            }
            PhaseError::EmptyTrace => write!(f, "trace has no records"),
            PhaseError::DuplicateCell { image, block, timestep } => {
                write!(f, "duplicate record (image {image}, block {block}, t {timestep})")
            }
            PhaseError::MissingCell { image, block, timestep } => {
                write!(f, "missing record (image {image}, block {block}, t {timestep})")
            }
            PhaseError::NegativeScore { image, block, timestep } => {
                write!(f, "negative score at (image {image}, block {block}, t {timestep})")
            }
            PhaseError::NonFiniteScore { image, block, timestep } => {
                write!(f, "non-finite score at (image {image}, block {block}, t {timestep})")
            }
            PhaseError::BlockOutOfRange { block } => {
                write!(f, "block id {block} outside 0..={BLOCK_COUNT}")
            }
            PhaseError::TimestepOutOfRange { timestep } => {
                write!(f, "timestep {timestep} outside 1..=T-1")
            }
            PhaseError::TooFewTimesteps { t_total } => {
                write!(f, "need T >= 3 timesteps, trace implies T = {t_total}")
            }
            PhaseError::PlanInvariant(msg) => write!(f, "plan invariant violated: {msg}"),
            PhaseError::EmptyConstraints => write!(f, "search requires at least one constraint"),
            PhaseError::BadSynthParams(msg) => write!(f, "bad synthetic-trace parameters: {msg}"),
        }
    }
}

impl core::error::Error for PhaseError {}

/// One shift-score measurement: block `block_id`'s input changed by
/// (relative L2) `shift_score` between timesteps `timestep − 1` and
/// `timestep` of image `image_id`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub image_id: u32,
    pub block_id: u32,
    pub timestep: u32,
    pub shift_score: f64,
}

/// A dense shift-score grid: every (image, block, timestep) cell present.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub t_total: u32,
    pub scheduler_name: String,
}

impl Trace {
    /// Validate density, score domain and index ranges; infers `t_total`.
    pub fn new(records: Vec<TraceRecord>, scheduler_name: &str) -> Result<Trace, PhaseError> {
        if records.is_empty() {
            return Err(PhaseError::EmptyTrace);
        }
        let mut max_t = 0;
        for r in &records {
            if r.block_id > BLOCK_COUNT {
                return Err(PhaseError::BlockOutOfRange { block: r.block_id });
            }
            if r.timestep == 0 {
                return Err(PhaseError::TimestepOutOfRange { timestep: 0 });
            }
            if !r.shift_score.is_finite() {
                return Err(PhaseError::NonFiniteScore {
                    image: r.image_id,
                    block: r.block_id,
                    timestep: r.timestep,
                });
            }
            if r.shift_score < 0.0 {
                return Err(PhaseError::NegativeScore {
                    image: r.image_id,
                    block: r.block_id,
                    timestep: r.timestep,
                });
            }
            max_t = max_t.max(r.timestep);
        }
        let t_total = max_t + 1;
        if t_total < 3 {
            return Err(PhaseError::TooFewTimesteps { t_total });
        }

        let mut images: Vec<u32> = records.iter().map(|r| r.image_id).collect();
        images.sort_unstable();
        images.dedup();
        let mut blocks: Vec<u32> = records.iter().map(|r| r.block_id).collect();
        blocks.sort_unstable();
        blocks.dedup();

        // Dense-grid check via a presence bitmap over (image, block, t).
        let (ni, nb, nt) = (images.len(), blocks.len(), (t_total - 1) as usize);
        let idx_of = |v: &[u32], x: u32| v.binary_search(&x).expect("id collected above");
        let mut seen = vec![false; ni * nb * nt];
        for r in &records {
            let cell = (idx_of(&images, r.image_id) * nb + idx_of(&blocks, r.block_id)) * nt
                + (r.timestep - 1) as usize;
            if seen[cell] {
                return Err(PhaseError::DuplicateCell {
                    image: r.image_id,
                    block: r.block_id,
                    timestep: r.timestep,
                });
            }
            seen[cell] = true;
        }
        for (i, &img) in images.iter().enumerate() {
            for (b, &blk) in blocks.iter().enumerate() {
                for t in 0..nt {
                    if !seen[(i * nb + b) * nt + t] {
                        return Err(PhaseError::MissingCell {
                            image: img,
                            block: blk,
                            timestep: t as u32 + 1,
                        });
                    }
                }
            }
        }
        Ok(Trace { records, t_total, scheduler_name: scheduler_name.to_string() })
    }

    pub fn image_count(&self) -> usize {
        let mut ids: Vec<u32> = self.records.iter().map(|r| r.image_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

/// Parse a trace from CSV text (`image_id,block_id,timestep,shift_score`).
pub fn parse_trace_csv(text: &str) -> Result<Trace, PhaseError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == TRACE_HEADER => {}
        other => {
            return Err(PhaseError::Header { found: other.unwrap_or("").to_string() });
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut field = |name: &str| {
            fields.next().map(str::trim).filter(|s| !s.is_empty()).ok_or_else(|| {
                PhaseError::Parse { line: lineno, reason: format!("missing field {name}") }
            })
        };
        let parse_u32 = |s: &str, name: &str| {
            s.parse::<u32>().map_err(|_| PhaseError::Parse {
                line: lineno,
                reason: format!("bad {name} {s:?}"),
            })
        };
        let image_id = parse_u32(field("image_id")?, "image_id")?;
        let block_id = parse_u32(field("block_id")?, "block_id")?;
        let timestep = parse_u32(field("timestep")?, "timestep")?;
        let score_str = field("shift_score")?;
        let shift_score = score_str.parse::<f64>().map_err(|_| PhaseError::Parse {
            line: lineno,
            reason: format!("bad shift_score {score_str:?}"),
        })?;
        if fields.next().is_some() {
            return Err(PhaseError::Parse { line: lineno, reason: "extra fields".to_string() });
        }
        records.push(TraceRecord { image_id, block_id, timestep, shift_score });
    }
    Trace::new(records, "csv")
}

/// Serialize a trace to CSV (LF line endings, shortest round-trip floats).
pub fn trace_to_csv(trace: &Trace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        out.push_str(&format!("{},{},{},{}\n", r.image_id, r.block_id, r.timestep, r.shift_score));
    }
    out
}

/// Normalized per-block score curves plus derived statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    /// Up-block ids present, ascending (noise curve 0 excluded).
    pub blocks: Vec<u32>,
    pub t_total: u32,
    /// `normalized[b][k]` = block `blocks[b]`'s scaled score at `t = k + 1`.
    pub normalized: Vec<Vec<f64>>,
    /// Per-timestep mean over non-outlier blocks.
    pub mean_curve: Vec<f64>,
    pub outliers: Vec<u32>,
    /// Blocks whose averaged curve was constant (scaled to all zeros).
    pub constant_blocks: Vec<u32>,
}

impl ScoreMatrix {
    /// Normalized curve of one block, if present.
    pub fn curve(&self, block: u32) -> Option<&[f64]> {
        self.blocks.iter().position(|&b| b == block).map(|i| self.normalized[i].as_slice())
    }

    /// Rebuild the mean curve with `outliers` excluded. Falls back to all
    /// blocks if everything would be excluded.
    pub fn with_outliers(mut self, outliers: Vec<u32>) -> ScoreMatrix {
        let keep: Vec<usize> = (0..self.blocks.len())
            .filter(|&i| !outliers.contains(&self.blocks[i]))
            .collect();
        let keep = if keep.is_empty() { (0..self.blocks.len()).collect() } else { keep };
        let nt = (self.t_total - 1) as usize;
        let mut mean = vec![0.0; nt];
        for (k, m) in mean.iter_mut().enumerate() {
            *m = keep.iter().map(|&i| self.normalized[i][k]).sum::<f64>() / keep.len() as f64;
        }
        self.mean_curve = mean;
        self.outliers = outliers;
        self
    }
}

/// Average scores across images per (block, timestep), then min-max scale
/// each block curve to `[0, 1]`. Constant curves scale to all zeros and are
/// listed in `constant_blocks`.
pub fn normalize_scores(trace: &Trace) -> ScoreMatrix {
    let mut blocks: Vec<u32> =
        trace.records.iter().map(|r| r.block_id).filter(|&b| b != 0).collect();
    blocks.sort_unstable();
    blocks.dedup();
    let nt = (trace.t_total - 1) as usize;
    let n_images = trace.image_count() as f64;

    let mut sums = vec![vec![0.0; nt]; blocks.len()];
    for r in &trace.records {
        if r.block_id == 0 {
            continue;
        }
        let b = blocks.binary_search(&r.block_id).expect("collected above");
        sums[b][(r.timestep - 1) as usize] += r.shift_score;
    }

    let mut constant_blocks = Vec::new();
    let mut normalized = Vec::with_capacity(blocks.len());
    for (b, row) in sums.into_iter().enumerate() {
        let avg: Vec<f64> = row.into_iter().map(|s| s / n_images).collect();
        let lo = avg.iter().fold(f64::INFINITY, |a, &x| a.min(x));
        let hi = avg.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x));
        if hi == lo {
            constant_blocks.push(blocks[b]);
            normalized.push(vec![0.0; nt]);
        } else {
            normalized.push(avg.into_iter().map(|x| (x - lo) / (hi - lo)).collect());
        }
    }

    let matrix = ScoreMatrix {
        blocks,
        t_total: trace.t_total,
        normalized,
        mean_curve: Vec::new(),
        outliers: Vec::new(),
        constant_blocks,
    };
    matrix.with_outliers(Vec::new())
}

/// Blocks whose mean normalized score over the last
/// `⌈late_fraction·T⌉` timesteps exceeds `threshold`, ascending.
pub fn detect_outliers(matrix: &ScoreMatrix, late_fraction: f64, threshold: f64) -> Vec<u32> {
    let nt = (matrix.t_total - 1) as usize;
    let window = (libm::ceil(late_fraction * matrix.t_total as f64) as usize).clamp(1, nt);
    let mut out = Vec::new();
    for (i, &b) in matrix.blocks.iter().enumerate() {
        let tail = &matrix.normalized[i][nt - window..];
        if tail.iter().sum::<f64>() / window as f64 > threshold {
            out.push(b);
        }
    }
    out
}

/// SSE-minimizing two-segment split of a curve indexed by `t = 1..=len`:
/// returns `D` such that segments `t ≤ D` and `t > D` have minimal total
/// squared deviation from their own means. Ties take the smallest `D`.
pub fn transition_of_curve(curve: &[f64]) -> Result<u32, PhaseError> {
    // curve[k] is the score at t = k + 1; valid splits need both segments
    // non-empty: D ∈ [1, len − 1] i.e. [1, T − 2].
    if curve.len() < 2 {
        return Err(PhaseError::TooFewTimesteps { t_total: curve.len() as u32 + 1 });
    }
    if curve.iter().all(|&x| x == curve[0]) {
        // Exactly constant: every split scores zero; the tie takes D = 1.
        return Ok(1);
    }
    let n = curve.len();
    let mut prefix = vec![0.0; n + 1];
    let mut prefix_sq = vec![0.0; n + 1];
    for (k, &x) in curve.iter().enumerate() {
        prefix[k + 1] = prefix[k] + x;
        prefix_sq[k + 1] = prefix_sq[k] + x * x;
    }
    let seg_sse = |lo: usize, hi: usize| {
        let (s, sq, m) = (prefix[hi] - prefix[lo], prefix_sq[hi] - prefix_sq[lo], (hi - lo) as f64);
        (sq - s * s / m).max(0.0)
    };
    let mut best = f64::INFINITY;
    let mut best_d = 1;
    for d in 1..n {
        let sse = seg_sse(0, d) + seg_sse(d, n);
        if sse < best {
            best = sse;
            best_d = d;
        }
    }
    Ok(best_d as u32)
}

/// `D*` of a score matrix's mean curve.
pub fn find_transition(matrix: &ScoreMatrix) -> Result<u32, PhaseError> {
    if matrix.t_total < 3 {
        return Err(PhaseError::TooFewTimesteps { t_total: matrix.t_total });
    }
    transition_of_curve(&matrix.mean_curve)
}

/// The five schedule hyperparameters plus the run length they apply to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanParams {
    pub t_total: u32,
    pub t_sketch: u32,
    pub t_complete: u32,
    pub t_sparse: u32,
    pub l_sketch: u32,
    pub l_refine: u32,
}

/// A fully expanded sampling plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub params: PlanParams,
    pub d_star: u32,
    pub outliers: Vec<u32>,
    /// Depth `l_t` for `t = 0..t_total`; `FULL_DEPTH` marks full steps.
    pub depth_schedule: Vec<u32>,
}

fn check_params(p: &PlanParams, d_star: u32, n_outliers: u32) -> Result<(), PhaseError> {
    let fail = |msg: String| Err(PhaseError::PlanInvariant(msg));
    if p.t_sparse == 0 {
        return fail("t_sparse must be >= 1".to_string());
    }
    if p.t_complete > p.t_sketch {
        return fail(format!("t_complete {} > t_sketch {}", p.t_complete, p.t_sketch));
    }
    if p.t_sketch > p.t_total {
        return fail(format!("t_sketch {} > t_total {}", p.t_sketch, p.t_total));
    }
    if p.t_sketch < d_star {
        return fail(format!("t_sketch {} < transition step {}", p.t_sketch, d_star));
    }
    if p.l_refine > p.l_sketch {
        return fail(format!("l_refine {} > l_sketch {}", p.l_refine, p.l_sketch));
    }
    if p.l_sketch > FULL_DEPTH {
        return fail(format!("l_sketch {} > full depth {FULL_DEPTH}", p.l_sketch));
    }
    if p.l_refine == 0 {
        return fail("l_refine must be >= 1".to_string());
    }
    if p.l_refine < n_outliers {
        return fail(format!("l_refine {} < outlier count {}", p.l_refine, n_outliers));
    }
    Ok(())
}

/// Expand parameters into the depth schedule:
/// full depth for `t < t_complete`; in the sketch window full depth every
/// `t_sparse` steps (at `(t − t_complete) mod t_sparse = 0`) and `l_sketch`
/// otherwise; `l_refine` from `t_sketch` on.
pub fn build_schedule(
    params: &PlanParams,
    d_star: u32,
    outliers: &[u32],
) -> Result<SamplingPlan, PhaseError> {
    build_schedule_offset(params, d_star, outliers, false)
}

/// [`build_schedule`] with a choice of periodic full-step placement.
/// `offset_by_one` puts the full steps at the ends of each sparse window
/// (`t − T_complete ≡ T_sparse − 1`) instead of the starts.
pub fn build_schedule_offset(
    params: &PlanParams,
    d_star: u32,
    outliers: &[u32],
    offset_by_one: bool,
) -> Result<SamplingPlan, PhaseError> {
    check_params(params, d_star, outliers.len() as u32)?;
    let phase = if offset_by_one { params.t_sparse - 1 } else { 0 };
    let mut depth_schedule = Vec::with_capacity(params.t_total as usize);
    for t in 0..params.t_total {
        let l = if t < params.t_complete {
            FULL_DEPTH
        } else if t < params.t_sketch {
            if (t - params.t_complete) % params.t_sparse == phase {
                FULL_DEPTH
            } else {
                params.l_sketch
            }
        } else {
            params.l_refine
        };
        depth_schedule.push(l);
    }
    Ok(SamplingPlan {
        params: *params,
        d_star,
        outliers: outliers.to_vec(),
        depth_schedule,
    })
}

/// Overall MAC reduction `T / Σ_t f(l_t)` for a cost table `f` indexed by
/// depth − 1 with `f[FULL_DEPTH − 1] = 1`.
pub fn mac_reduction(plan: &SamplingPlan, cost: &[f64; 13]) -> f64 {
    let total: f64 = plan.depth_schedule.iter().map(|&l| cost[(l - 1) as usize]).sum();
    plan.params.t_total as f64 / total
}

/// Feasibility constraints for the plan search; at least one must be set.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchConstraints {
    /// Keep plans whose MAC reduction is at least this.
    pub min_reduction: Option<f64>,
    /// Keep plans whose total block evaluations `Σ_t l_t` fit this budget.
    pub max_block_evals: Option<u64>,
}

/// One feasible point of the search grid. The schedule itself is one
/// [`build_schedule`] call away; the search keeps candidates flat so large
/// grids stay cheap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCandidate {
    pub params: PlanParams,
    pub mac_reduction: f64,
    pub block_evals: u64,
    pub full_steps: u32,
    pub sketch_steps: u32,
    pub refine_steps: u32,
}

/// Exhaustive grid search: `t_complete ∈ [1,8]`, `t_sparse ∈ [1,8]`,
/// `t_sketch ∈ [D*, T]`, `l_sketch ≥ l_refine ∈ [max(1,|outliers|), 12]`.
/// Returns feasible plans sorted by MAC reduction descending, parameter
/// tuple ascending on ties. An empty result means no plan satisfies the
/// constraints — not an error.
pub fn search_plan(
    constraints: &SearchConstraints,
    cost: &[f64; 13],
    d_star: u32,
    outliers: &[u32],
    t_total: u32,
) -> Result<Vec<PlanCandidate>, PhaseError> {
    if constraints.min_reduction.is_none() && constraints.max_block_evals.is_none() {
        return Err(PhaseError::EmptyConstraints);
    }
    let l_min = (outliers.len() as u32).max(1);
    let mut out = Vec::new();
    for t_complete in 1..=8u32.min(t_total) {
        for t_sparse in 1..=8u32 {
            for t_sketch in d_star.max(t_complete)..=t_total {
                // Closed-form step counts for this window shape.
                let window = t_sketch - t_complete;
                let window_fulls = window.div_ceil(t_sparse);
                let full_steps = t_complete + window_fulls;
                let sketch_steps = window - window_fulls;
                let refine_steps = t_total - t_sketch;
                for l_sketch in l_min..=12 {
                    for l_refine in l_min..=l_sketch {
                        let params = PlanParams {
                            t_total,
                            t_sketch,
                            t_complete,
                            t_sparse,
                            l_sketch,
                            l_refine,
                        };
                        debug_assert!(check_params(&params, d_star, outliers.len() as u32).is_ok());
                        let total_cost = full_steps as f64 * cost[(FULL_DEPTH - 1) as usize]
                            + sketch_steps as f64 * cost[(l_sketch - 1) as usize]
                            + refine_steps as f64 * cost[(l_refine - 1) as usize];
                        let reduction = t_total as f64 / total_cost;
                        let block_evals = full_steps as u64 * FULL_DEPTH as u64
                            + sketch_steps as u64 * l_sketch as u64
                            + refine_steps as u64 * l_refine as u64;
                        if constraints.min_reduction.is_some_and(|m| reduction < m) {
                            continue;
                        }
                        if constraints.max_block_evals.is_some_and(|m| block_evals > m) {
                            continue;
                        }
                        out.push(PlanCandidate {
                            params,
                            mac_reduction: reduction,
                            block_evals,
                            full_steps,
                            sketch_steps,
                            refine_steps,
                        });
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| {
        b.mac_reduction
            .partial_cmp(&a.mac_reduction)
            .expect("reductions are finite")
            .then_with(|| {
                let ka = (a.params.t_complete, a.params.t_sparse, a.params.t_sketch, a.params.l_sketch, a.params.l_refine);
                let kb = (b.params.t_complete, b.params.t_sparse, b.params.t_sketch, b.params.l_sketch, b.params.l_refine);
                ka.cmp(&kb)
            })
    });
    Ok(out)
}

/// Deterministic synthetic trace with the measured curves' qualitative
/// shape: scores ramp up over the first steps, plateau until `d_true`, then
/// drop to a low floor — except outlier blocks, which stay high to the end.
/// Gaussian noise of `noise_sigma` is added per cell and clamped at zero.
pub fn synth_trace(
    t_total: u32,
    outlier_blocks: &[u32],
    d_true: u32,
    noise_sigma: f64,
    n_images: u32,
    rng_seed: u64,
) -> Result<Trace, PhaseError> {
    if t_total < 3 {
        return Err(PhaseError::BadSynthParams(format!("t_total {t_total} < 3")));
    }
    if d_true == 0 || d_true > t_total - 2 {
        return Err(PhaseError::BadSynthParams(format!(
            "d_true {d_true} outside [1, {}]",
            t_total - 2
        )));
    }
    if n_images == 0 {
        return Err(PhaseError::BadSynthParams("n_images must be >= 1".to_string()));
    }
    if let Some(&b) = outlier_blocks.iter().find(|&&b| b == 0 || b > BLOCK_COUNT) {
        return Err(PhaseError::BadSynthParams(format!("outlier block {b} outside 1..=12")));
    }

    let mut rng = SplitMix64::new(rng_seed);
    let ramp = |t: u32| (0.6 + 0.2 * (t - 1) as f64).min(1.0);
    let mut records = Vec::new();
    for image_id in 0..n_images {
        for block_id in 1..=BLOCK_COUNT {
            let hi = 2.0 + 0.1 * (block_id % 3) as f64;
            let is_outlier = outlier_blocks.contains(&block_id);
            for timestep in 1..t_total {
                let base = if is_outlier || timestep <= d_true { hi * ramp(timestep) } else { 0.2 };
                let noisy = if noise_sigma > 0.0 {
                    base + noise_sigma * rng.next_normal()
                } else {
                    base
                };
                records.push(TraceRecord {
                    image_id,
                    block_id,
                    timestep,
                    shift_score: noisy.max(0.0),
                });
            }
        }
    }
    Trace::new(records, "synthetic")
}
