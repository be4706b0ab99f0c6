//! Streaming nonlinear operators.
//!
//! Softmax and layernorm are evaluated in two decoupled stages so a vector
//! unit can overlap them with matmul streaming:
//!
//! 1. **NCA** (normalization-coefficient accumulation) folds each incoming
//!    tile into a tiny running state — [`SoftmaxState`] keeps the running
//!    max and the exponential partial sum rescaled to it; [`MomentState`]
//!    keeps sum and square-sum.
//! 2. **Norm** replays the row through the finalized state: divide by the
//!    exponential sum, or standardize by the closed-form mean/variance.
//!
//! Both stages touch each element once, so any tile partition of a row
//! finalizes to the same state as single-shot processing. Naive multi-pass
//! oracles ([`softmax_naive`], [`layernorm_two_pass`], [`gelu_erf`]) are
//! provided for equivalence testing.

use alloc::vec::Vec;

/// Tile width of the vector datapath.
pub const DEFAULT_TILE: usize = 32;
/// Variance stabilizer used by layernorm/groupnorm.
pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlinearError {
    /// Tile contained a NaN; streaming states would silently poison.
    NanInput,
    EmptyTile,
    /// Tile exceeds the configured tile width.
    TileTooLong { len: usize, tile_size: usize },
    /// Finalize called before any element was accumulated.
    EmptyState,
    /// Exponential sum collapsed to zero (non-finite inputs upstream).
    ZeroExpSum,
}

impl core::fmt::Display for NonlinearError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            NonlinearError::NanInput => write!(f, "NaN in input tile"),
            NonlinearError::EmptyTile => write!(f, "empty input tile"),
            NonlinearError::TileTooLong { len, tile_size } => {
                write!(f, "tile of {len} elements exceeds tile size {tile_size}")
            }
            NonlinearError::EmptyState => write!(f, "finalize on empty state"),
            NonlinearError::ZeroExpSum => write!(f, "exponential sum is zero"),
        }
    }
}

impl core::error::Error for NonlinearError {}

/// Online softmax accumulator.
///
/// After each [`update`](Self::update), `es = Σ_{j≤n1} exp(x_j −
/// running_max)` up to float rounding; a rise in the running max rescales
/// the previous sum by `exp(old_max − new_max)` instead of revisiting
/// elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftmaxState {
    pub running_max: f64,
    pub es: f64,
    pub n1: usize,
    pub tile_size: usize,
}

impl SoftmaxState {
    pub fn new(tile_size: usize) -> SoftmaxState {
        SoftmaxState { running_max: f64::NEG_INFINITY, es: 0.0, n1: 0, tile_size }
    }

    /// Fold one tile into the running state.
    pub fn update(&mut self, tile: &[f64]) -> Result<(), NonlinearError> {
        if tile.is_empty() {
            return Err(NonlinearError::EmptyTile);
        }
        if tile.len() > self.tile_size {
            return Err(NonlinearError::TileTooLong { len: tile.len(), tile_size: self.tile_size });
        }
        if tile.iter().any(|x| x.is_nan()) {
            return Err(NonlinearError::NanInput);
        }
        let tile_max = tile.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let new_max = self.running_max.max(tile_max);
        let mut es = if self.n1 == 0 { 0.0 } else { self.es * libm::exp(self.running_max - new_max) };
        for &x in tile {
            es += libm::exp(x - new_max);
        }
        self.running_max = new_max;
        self.es = es;
        self.n1 += tile.len();
        Ok(())
    }

    /// Norm stage: `y = exp(x − running_max) / es` for a finalized row.
    pub fn norm(&self, x: f64) -> Result<f64, NonlinearError> {
        if self.es <= 0.0 || !self.es.is_finite() {
            return Err(NonlinearError::ZeroExpSum);
        }
        Ok(libm::exp(x - self.running_max) / self.es)
    }
}

impl Default for SoftmaxState {
    fn default() -> Self {
        SoftmaxState::new(DEFAULT_TILE)
    }
}

/// Three-pass reference softmax: max, exponential sum, normalize.
pub fn softmax_naive(row: &[f64]) -> Vec<f64> {
    let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let es: f64 = row.iter().map(|&x| libm::exp(x - max)).sum();
    row.iter().map(|&x| libm::exp(x - max) / es).collect()
}

/// Single-pass moment accumulator for layernorm/groupnorm.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MomentState {
    pub sum: f64,
    pub sqsum: f64,
    pub n: usize,
}

impl MomentState {
    pub fn new() -> MomentState {
        MomentState::default()
    }

    pub fn update(&mut self, tile: &[f64]) -> Result<(), NonlinearError> {
        if tile.is_empty() {
            return Err(NonlinearError::EmptyTile);
        }
        if tile.iter().any(|x| x.is_nan()) {
            return Err(NonlinearError::NanInput);
        }
        for &x in tile {
            self.sum += x;
            self.sqsum += x * x;
        }
        self.n += tile.len();
        Ok(())
    }

    /// Combine two disjoint partial states.
    pub fn merge(&self, other: &MomentState) -> MomentState {
        MomentState { sum: self.sum + other.sum, sqsum: self.sqsum + other.sqsum, n: self.n + other.n }
    }

    /// `(mean, var)` with `var = sqsum/n − mean²`, clamped at 0 when
    /// rounding drives it negative.
    pub fn finalize(&self) -> Result<(f64, f64), NonlinearError> {
        if self.n == 0 {
            return Err(NonlinearError::EmptyState);
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = (self.sqsum / n - mean * mean).max(0.0);
        Ok((mean, var))
    }
}

/// Two-pass reference moments: mean first, then centered variance.
pub fn layernorm_two_pass(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean: f64 = row.iter().sum::<f64>() / n;
    let var: f64 = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Norm stage of layernorm: `gamma·(x − mean)/sqrt(var + eps) + beta`.
pub fn layernorm_norm(x: f64, mean: f64, var: f64, gamma: f64, beta: f64, eps: f64) -> f64 {
    gamma * (x - mean) / libm::sqrt(var + eps) + beta
}

/// Sigmoid-formulation GELU: `x · sigmoid(1.702·x)`.
pub fn gelu_sigmoid(x: f64) -> f64 {
    x / (1.0 + libm::exp(-1.702 * x))
}

/// Exact erf-based GELU, the reference the sigmoid form approximates.
pub fn gelu_erf(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / core::f64::consts::SQRT_2))
}

/// Latency tails of the two-stage datapath. Both are fixed small constants:
/// the norm stage waits one tile behind NCA, plus the pipeline depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonlinearTiming {
    pub tile_latency_cycles: u64,
    pub pipeline_latency_cycles: u64,
}

impl Default for NonlinearTiming {
    fn default() -> Self {
        NonlinearTiming { tile_latency_cycles: DEFAULT_TILE as u64, pipeline_latency_cycles: 16 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use alloc::vec;

    fn stream_row(row: &[f64], tile: usize) -> SoftmaxState {
        let mut st = SoftmaxState::new(tile);
        for chunk in row.chunks(tile) {
            st.update(chunk).unwrap();
        }
        st
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    // -- softmax NCA -------------------------------------------------------

    #[test]
    fn zeros_tile_gives_count() {
        let mut st = SoftmaxState::default();
        st.update(&[0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(st.running_max, 0.0);
        assert_eq!(st.es, 4.0);
        assert_eq!(st.n1, 4);
    }

    #[test]
    fn rescale_on_new_max() {
        let mut st = SoftmaxState::default();
        st.update(&[1.0, 2.0]).unwrap();
        st.update(&[10.0]).unwrap();
        assert_eq!(st.running_max, 10.0);
        let want = libm::exp(1.0 - 10.0) + libm::exp(2.0 - 10.0) + 1.0;
        assert!(rel_err(st.es, want) < 1e-12);
        assert_eq!(st.n1, 3);
    }

    #[test]
    fn tile_at_running_max_adds_count() {
        let mut st = SoftmaxState::default();
        st.update(&[3.0]).unwrap();
        let before = st.es;
        st.update(&[3.0, 3.0]).unwrap();
        assert_eq!(st.running_max, 3.0);
        assert_eq!(st.es, before + 2.0);
        assert_eq!(st.n1, 3);
    }

    #[test]
    fn rejects_bad_tiles() {
        let mut st = SoftmaxState::default();
        assert_eq!(st.update(&[]), Err(NonlinearError::EmptyTile));
        assert_eq!(st.update(&[f64::NAN]), Err(NonlinearError::NanInput));
        let long = vec![0.0; DEFAULT_TILE + 1];
        assert!(matches!(st.update(&long), Err(NonlinearError::TileTooLong { .. })));
    }

    // -- softmax norm --------------------------------------------------------

    #[test]
    fn constant_row_uniform() {
        let row = vec![7.5; 40];
        let st = stream_row(&row, DEFAULT_TILE);
        for &x in &row {
            assert!(rel_err(st.norm(x).unwrap(), 1.0 / 40.0) < 1e-12);
        }
    }

    #[test]
    fn zero_ln2_thirds() {
        let row = [0.0, core::f64::consts::LN_2];
        let st = stream_row(&row, DEFAULT_TILE);
        assert!(rel_err(st.norm(row[0]).unwrap(), 1.0 / 3.0) < 1e-12);
        assert!(rel_err(st.norm(row[1]).unwrap(), 2.0 / 3.0) < 1e-12);
    }

    #[test]
    fn matches_naive_on_random_rows() {
        // Lengths deliberately include non-multiples of the tile width; the
        // acceptance suite widens this to 500 rows up to length 5000.
        let mut r = SplitMix64::new(21);
        for &len in &[1usize, 2, 31, 32, 33, 77, 256, 1000, 4096] {
            let row: Vec<f64> = (0..len).map(|_| r.next_f64() * 20.0 - 10.0).collect();
            let st = stream_row(&row, DEFAULT_TILE);
            let want = softmax_naive(&row);
            let mut total = 0.0;
            for (x, w) in row.iter().zip(&want) {
                let y = st.norm(*x).unwrap();
                assert!(rel_err(y, *w) <= 1e-6, "len {len}");
                total += y;
            }
            assert!((total - 1.0).abs() <= 1e-6, "normalization len {len}");
        }
    }

    #[test]
    fn tile_partition_invariance() {
        let mut r = SplitMix64::new(22);
        let row: Vec<f64> = (0..300).map(|_| r.next_f64() * 8.0 - 4.0).collect();
        let whole = stream_row(&row, 512);
        for trial in 0..3 {
            let mut st = SoftmaxState::new(DEFAULT_TILE);
            let mut i = 0;
            while i < row.len() {
                let step = (r.next_range(1, DEFAULT_TILE as u64) as usize).min(row.len() - i);
                st.update(&row[i..i + step]).unwrap();
                i += step;
            }
            assert_eq!(st.running_max, whole.running_max, "trial {trial}");
            assert!(rel_err(st.es, whole.es) <= 1e-7, "trial {trial}");
            assert_eq!(st.n1, whole.n1);
        }
    }

    #[test]
    fn shift_invariance() {
        let mut r = SplitMix64::new(23);
        let row: Vec<f64> = (0..64).map(|_| r.next_f64() * 4.0 - 2.0).collect();
        let base = stream_row(&row, DEFAULT_TILE);
        for &c in &[-100.0, -3.5, 42.0, 100.0] {
            let shifted: Vec<f64> = row.iter().map(|x| x + c).collect();
            let st = stream_row(&shifted, DEFAULT_TILE);
            for (x, xs) in row.iter().zip(&shifted) {
                assert!(rel_err(st.norm(*xs).unwrap(), base.norm(*x).unwrap()) <= 1e-6);
            }
        }
    }

    // -- moments -------------------------------------------------------------

    #[test]
    fn constant_input_zero_variance() {
        let mut st = MomentState::new();
        st.update(&[5.0; 10]).unwrap();
        assert_eq!(st.finalize().unwrap(), (5.0, 0.0));
    }

    #[test]
    fn one_two_three_four() {
        let mut st = MomentState::new();
        st.update(&[1.0, 2.0]).unwrap();
        st.update(&[3.0, 4.0]).unwrap();
        assert_eq!(st.finalize().unwrap(), (2.5, 1.25));
    }

    #[test]
    fn matches_two_pass_on_random_rows() {
        let mut r = SplitMix64::new(24);
        for _ in 0..5 {
            let row: Vec<f64> = (0..768).map(|_| r.next_f64() * 6.0 - 3.0).collect();
            let mut st = MomentState::new();
            for chunk in row.chunks(DEFAULT_TILE) {
                st.update(chunk).unwrap();
            }
            let (mean, var) = st.finalize().unwrap();
            let (m2, v2) = layernorm_two_pass(&row);
            assert!(rel_err(mean, m2) <= 1e-6);
            assert!(rel_err(var, v2) <= 1e-6);
        }
    }

    #[test]
    fn merge_associative_on_integers() {
        let rows: [&[f64]; 3] = [&[1.0, 2.0], &[3.0], &[4.0, 5.0, 6.0]];
        let part: Vec<MomentState> = rows
            .iter()
            .map(|r| {
                let mut s = MomentState::new();
                s.update(r).unwrap();
                s
            })
            .collect();
        let left = part[0].merge(&part[1]).merge(&part[2]);
        let right = part[0].merge(&part[1].merge(&part[2]));
        assert_eq!(left, right);
        let mut whole = MomentState::new();
        whole.update(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(left, whole);
    }

    #[test]
    fn variance_clamped_at_zero() {
        // Large constant values make sqsum/n − mean² underflow negative.
        let mut st = MomentState::new();
        st.update(&[1e8 + 0.1; 7]).unwrap();
        let (_, var) = st.finalize().unwrap();
        assert!(var >= 0.0);
        assert_eq!(MomentState::new().finalize(), Err(NonlinearError::EmptyState));
    }

    // -- layernorm norm stage -----------------------------------------------

    #[test]
    fn norm_constant_gives_beta() {
        let mut st = MomentState::new();
        st.update(&[2.0; 16]).unwrap();
        let (mean, var) = st.finalize().unwrap();
        let y = layernorm_norm(2.0, mean, var, 1.3, 0.7, DEFAULT_EPS);
        assert!((y - 0.7).abs() < 1e-12);
    }

    #[test]
    fn norm_standardizes() {
        let mut r = SplitMix64::new(25);
        let row: Vec<f64> = (0..512).map(|_| r.next_f64() * 10.0 - 5.0).collect();
        let mut st = MomentState::new();
        st.update(&row).unwrap();
        let (mean, var) = st.finalize().unwrap();
        let out: Vec<f64> =
            row.iter().map(|&x| layernorm_norm(x, mean, var, 1.0, 0.0, 0.0)).collect();
        let (om, ov) = layernorm_two_pass(&out);
        assert!(om.abs() <= 1e-6);
        assert!((ov - 1.0).abs() <= 1e-6);
    }

    // -- GELU -----------------------------------------------------------------

    #[test]
    fn gelu_zero_and_saturation() {
        assert_eq!(gelu_sigmoid(0.0), 0.0);
        let g10 = gelu_sigmoid(10.0);
        assert!((9.999..=10.0).contains(&g10));
        assert!(gelu_sigmoid(-10.0).abs() < 1e-3);
    }

    #[test]
    fn sigmoid_form_tracks_erf_form() {
        // Coarse sweep here; the acceptance suite runs the 1e-3 grid.
        let mut worst = 0.0f64;
        let mut x = -10.0;
        while x <= 10.0 {
            worst = worst.max((gelu_sigmoid(x) - gelu_erf(x)).abs());
            x += 0.01;
        }
        assert!(worst <= 0.021, "max deviation {worst}");
        assert!(worst > 0.005);
    }

    #[test]
    fn default_timing_constants() {
        let t = NonlinearTiming::default();
        assert_eq!(t.tile_latency_cycles, 32);
        assert_eq!(t.pipeline_latency_cycles, 16);
    }
}
