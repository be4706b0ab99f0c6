//! Timing, traffic, energy, and roofline model.
//!
//! Every layer is scored with a small set of documented phase formulas
//! rather than event-level simulation:
//!
//! * **Matmul tiles.** A weight-stationary `sa_h × sa_w` array spends
//!   `K` cycles loading a tile, `M` cycles streaming rows, and
//!   `sa_h + sa_w` cycles filling/draining: a full `M×K×N` matmul over
//!   `⌈K/sa_w⌉ × ⌈N/sa_h⌉` tiles costs `⌈N/32⌉·(K + ⌈K/32⌉·(M + 64))` at
//!   the defaults. Address-centric convolution runs the K² kernel slices as
//!   sequential pointwise matmuls with scatter-add hidden in the VPU; the
//!   im2col baseline runs one lowered GEMM plus a serial conversion charge
//!   and reads inputs once per kernel tap.
//! * **Memory.** DRAM time is `⌈bytes / (bandwidth/frequency)⌉` cycles over
//!   the scheduler's per-layer traffic. With adaptive dataflow on, compute
//!   and memory phases double-buffer (`max`); off, they serialize (`+`).
//! * **Vector work.** Softmax, norms, activations and elementwise adds
//!   charge element touches to the VPU at `vpu_lanes` per cycle; under
//!   streaming the charge collapses to the tile + pipeline latency tail
//!   because NCA/Norm stages ride the array's own streams.
//! * **Energy.** `power_w · cycles / freq + dram_energy_per_byte · bytes`.
//!
//! Reports carry per-layer, per-block, and total aggregates plus optional
//! phase-aware-sampling run costs, and every layer is checked against the
//! roofline bound `min(peak, intensity · bandwidth)` at build time.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::phase::{SamplingPlan, FULL_DEPTH};
use crate::scheduler::{choose_reuse, fixed_traffic};
use crate::workload::{LayerDescriptor, LayerKind, NetworkGraph, Side};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Array, memory, and power parameters. Defaults follow the reference
/// design: 32×32 PEs at 200 MHz (204.8 GMAC/s peak), 38.4 GB/s DRAM,
/// fp16 tensors, a 2 MB global buffer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareConfig {
    pub sa_h: u32,
    pub sa_w: u32,
    pub vpu_lanes: u32,
    pub freq_hz: f64,
    pub dram_bw_bytes_per_s: f64,
    pub bytes_per_element: u32,
    pub global_buffer_bytes: u64,
    pub staging_buffer_bytes: u64,
    pub fifo_depth: u32,
    pub pipeline_latency_cycles: u32,
    pub power_w: f64,
    pub dram_energy_per_byte: f64,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        HardwareConfig {
            sa_h: 32,
            sa_w: 32,
            vpu_lanes: 32,
            freq_hz: 2.0e8,
            dram_bw_bytes_per_s: 38.4e9,
            bytes_per_element: 2,
            global_buffer_bytes: 2 * 1024 * 1024,
            staging_buffer_bytes: 64 * 1024,
            fifo_depth: 32,
            pipeline_latency_cycles: 16,
            power_w: 15.98,
            dram_energy_per_byte: 1.2e-10,
        }
    }
}

impl HardwareConfig {
    pub fn peak_mac_per_s(&self) -> f64 {
        self.sa_h as f64 * self.sa_w as f64 * self.freq_hz
    }

    /// DRAM bytes transferred per array cycle (192 at the defaults).
    pub fn bytes_per_cycle(&self) -> f64 {
        self.dram_bw_bytes_per_s / self.freq_hz
    }

    fn mem_cycles(&self, bytes: u64) -> u64 {
        libm::ceil(bytes as f64 / self.bytes_per_cycle()) as u64
    }

    fn energy_j(&self, cycles: u64, bytes: u64) -> f64 {
        self.power_w * cycles as f64 / self.freq_hz + self.dram_energy_per_byte * bytes as f64
    }
}

/// The im2col baseline the address-centric path is compared against.
/// `conversion_lanes` is the serial lowering throughput in elements per
/// cycle, calibrated against the reference ablation ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Im2colConfig {
    pub lowering_expansion: u32,
    pub conversion_lanes: u32,
    pub conversion_overlap: f64,
}

impl Default for Im2colConfig {
    fn default() -> Self {
        Im2colConfig { lowering_expansion: 9, conversion_lanes: 1, conversion_overlap: 0.5 }
    }
}

/// The three architecture ablations. All-false is the im2col baseline with
/// fixed weight reuse and blocking nonlinear ops; all-true is the full
/// design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSwitches {
    pub address_centric: bool,
    pub adaptive_dataflow: bool,
    pub streaming_nonlinear: bool,
}

impl Default for AblationSwitches {
    fn default() -> Self {
        AblationSwitches { address_centric: true, adaptive_dataflow: true, streaming_nonlinear: true }
    }
}

impl AblationSwitches {
    pub fn baseline() -> Self {
        AblationSwitches { address_centric: false, adaptive_dataflow: false, streaming_nonlinear: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    TileExceedsArray { k: u64, n: u64, sa_w: u32, sa_h: u32 },
    EmptyTile,
    BadDepth { depth: u32 },
    ScheduleLength { expected: u32, found: usize },
    RooflineViolation { layer_id: u32, attained: f64, bound: f64 },
}

impl core::fmt::Display for SimError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SimError::TileExceedsArray { k, n, sa_w, sa_h } => {
                write!(f, "tile {k}x{n} exceeds array {sa_w}x{sa_h}")
            }
            SimError::EmptyTile => write!(f, "tile dimensions must be >= 1"),
            SimError::BadDepth { depth } => {
                write!(f, "depth {depth} outside 1..={FULL_DEPTH}")
            }
            SimError::ScheduleLength { expected, found } => {
                write!(f, "depth schedule has {found} entries, plan says {expected} timesteps")
            }
            SimError::RooflineViolation { layer_id, attained, bound } => {
                write!(f, "layer {layer_id} attains {attained:.3e} MAC/s above roofline {bound:.3e}")
            }
        }
    }
}

impl core::error::Error for SimError {}

/// Timing/traffic/energy breakdown of one layer. The component cycles
/// always sum to `cycles_total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub layer_id: u32,
    pub kind: LayerKind,
    pub block: String,
    pub macs: u64,
    pub cycles_total: u64,
    pub cycles_sa_busy: u64,
    pub cycles_mem_bound: u64,
    pub cycles_nonlinear_stall: u64,
    pub cycles_other: u64,
    pub dram_bytes: u64,
    pub energy_j: f64,
    pub op_intensity: f64,
    pub attained_mac_per_s: f64,
}

/// Aggregate over one U-Net block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub block: String,
    pub macs: u64,
    pub cycles_total: u64,
    pub dram_bytes: u64,
    pub energy_j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimTotals {
    pub macs: u64,
    pub cycles_total: u64,
    pub cycles_sa_busy: u64,
    pub cycles_mem_bound: u64,
    pub cycles_nonlinear_stall: u64,
    pub cycles_other: u64,
    pub dram_bytes: u64,
    pub energy_j: f64,
    pub latency_s: f64,
}

/// Cost of executing the network cut to one depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthCost {
    pub depth: u32,
    pub cycles: u64,
    pub dram_bytes: u64,
    pub energy_j: f64,
}

/// A sampling plan priced against the simulated network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingReport {
    pub plan: SamplingPlan,
    pub per_depth: Vec<DepthCost>,
    pub run_cycles: u64,
    pub run_dram_bytes: u64,
    pub run_energy_j: f64,
    pub full_run_cycles: u64,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub schema_version: u32,
    pub model_id: String,
    pub switches: AblationSwitches,
    pub hardware: HardwareConfig,
    pub im2col: Im2colConfig,
    pub layers: Vec<LayerStats>,
    pub blocks: Vec<BlockStats>,
    pub totals: SimTotals,
    pub sampling: Option<SamplingReport>,
}

/// One weight residency: `K ≤ sa_w` input channels by `N ≤ sa_h` output
/// channels, streaming `M` rows. Costs `K + M + sa_h + sa_w` cycles.
pub fn simulate_matmul_tile(m: u64, k: u64, n: u64, hw: &HardwareConfig) -> Result<u64, SimError> {
    if m == 0 || k == 0 || n == 0 {
        return Err(SimError::EmptyTile);
    }
    if k > hw.sa_w as u64 || n > hw.sa_h as u64 {
        return Err(SimError::TileExceedsArray { k, n, sa_w: hw.sa_w, sa_h: hw.sa_h });
    }
    Ok(k + m + hw.sa_h as u64 + hw.sa_w as u64)
}

/// Full `M×K×N` matmul: weight tiles along K share one pass over the input
/// rows each, and the K(-dimension) load of a column of tiles is paid once
/// per N tile.
pub fn matmul_cycles(m: u64, k: u64, n: u64, hw: &HardwareConfig) -> u64 {
    let k_tiles = k.div_ceil(hw.sa_w as u64);
    let n_tiles = n.div_ceil(hw.sa_h as u64);
    let fill = hw.sa_h as u64 + hw.sa_w as u64;
    n_tiles * (k + k_tiles * (m + fill))
}

/// Element reads+writes the vector unit performs for a non-matmul layer.
///
/// Softmax makes three passes (max, exponential sum, normalize) over the
/// score matrix; norms make two (moments, normalize). SiLU reads and writes
/// each element; gated GELU reads the full double-width input, evaluates
/// and multiplies the gate half, and writes the output half. Residual adds
/// read two operands and write one; nearest-neighbor upsampling reads each
/// element and writes four copies.
pub fn vector_rw(layer: &LayerDescriptor) -> u64 {
    let l = layer.l;
    let (ci, co) = (layer.c_in as u64, layer.c_out as u64);
    match layer.kind {
        LayerKind::Softmax => 3 * layer.heads as u64 * layer.seq_len as u64 * layer.kv(),
        LayerKind::Layernorm | LayerKind::Groupnorm => 2 * l * ci,
        LayerKind::Silu => 2 * l * ci,
        LayerKind::Gelu => {
            let hadamard = if ci != co { co } else { 0 };
            l * (ci + 2 * co + hadamard)
        }
        LayerKind::Add => 3 * l * co,
        LayerKind::UpsampleNearest => 5 * l * ci,
        _ => 0,
    }
}

fn vector_cycles(layer: &LayerDescriptor, hw: &HardwareConfig, streaming: bool) -> u64 {
    let rw = vector_rw(layer);
    if rw == 0 {
        return 0;
    }
    let serialized = rw.div_ceil(hw.vpu_lanes as u64);
    if streaming {
        // NCA/Norm ride the matmul streams; only the tile + pipeline tail
        // remains visible. Streaming can never cost more than serializing.
        serialized.min(hw.vpu_lanes as u64 + hw.pipeline_latency_cycles as u64)
    } else {
        serialized
    }
}

/// Array-busy cycles plus (for the im2col path) the serial lowering charge.
fn compute_cycles(
    layer: &LayerDescriptor,
    hw: &HardwareConfig,
    im2col: &Im2colConfig,
    address_centric: bool,
) -> (u64, u64) {
    match layer.kind {
        LayerKind::Conv3x3 | LayerKind::DownsampleConv | LayerKind::Conv1x1 => {
            let taps = layer.kind.kernel_taps();
            let m = layer.out_len();
            let (ci, co) = (layer.c_in as u64, layer.c_out as u64);
            if address_centric || taps == 1 {
                (taps * matmul_cycles(m, ci, co, hw), 0)
            } else {
                let expansion = im2col.lowering_expansion as u64;
                let lowered = m * expansion * ci;
                let charged = (lowered as f64 * im2col.conversion_overlap) as u64;
                let conversion = charged.div_ceil(im2col.conversion_lanes as u64);
                (matmul_cycles(m, expansion * ci, co, hw), conversion)
            }
        }
        LayerKind::Linear => (matmul_cycles(layer.l, layer.c_in as u64, layer.c_out as u64, hw), 0),
        LayerKind::AttentionQk => {
            let c = matmul_cycles(layer.seq_len as u64, layer.head_dim as u64, layer.kv(), hw);
            (layer.heads as u64 * c, 0)
        }
        LayerKind::AttentionAv => {
            let c = matmul_cycles(layer.seq_len as u64, layer.kv(), layer.head_dim as u64, hw);
            (layer.heads as u64 * c, 0)
        }
        _ => (0, 0),
    }
}

/// Simulate one layer under the given switches.
pub fn simulate_layer(
    layer: &LayerDescriptor,
    hw: &HardwareConfig,
    im2col: &Im2colConfig,
    switches: &AblationSwitches,
) -> Result<LayerStats, SimError> {
    let macs = layer.macs();
    let fp = layer.footprint(hw.bytes_per_element);
    let (cycles_total, sa_busy, mem_bound, stall, other, dram_bytes);

    if layer.kind.is_matmul() {
        let (comp, conversion) = compute_cycles(layer, hw, im2col, switches.address_centric);
        let mut bytes = if switches.adaptive_dataflow {
            choose_reuse(&fp, hw.global_buffer_bytes).1.total()
        } else {
            fixed_traffic(&fp, hw.global_buffer_bytes).total()
        };
        if !switches.address_centric
            && matches!(layer.kind, LayerKind::Conv3x3 | LayerKind::DownsampleConv)
        {
            // Lowered inputs are read once per kernel tap instead of once.
            bytes += (im2col.lowering_expansion as u64 - 1) * fp.act_in_bytes;
        }
        let mem = hw.mem_cycles(bytes);
        let overlapped = if switches.adaptive_dataflow { comp.max(mem) } else { comp + mem };
        cycles_total = overlapped + conversion;
        sa_busy = comp;
        mem_bound = overlapped - comp;
        stall = 0;
        other = conversion;
        dram_bytes = bytes;
    } else {
        let v = vector_cycles(layer, hw, switches.streaming_nonlinear);
        if layer.kind == LayerKind::UpsampleNearest {
            let bytes = fp.act_in_bytes + fp.act_out_bytes;
            let mem = hw.mem_cycles(bytes);
            cycles_total = if switches.adaptive_dataflow { v.max(mem) } else { v + mem };
            mem_bound = cycles_total - v;
            dram_bytes = bytes;
        } else {
            cycles_total = v;
            mem_bound = 0;
            dram_bytes = 0;
        }
        sa_busy = 0;
        stall = v;
        other = 0;
    }

    let energy_j = hw.energy_j(cycles_total, dram_bytes);
    let op_intensity = if dram_bytes > 0 { macs as f64 / dram_bytes as f64 } else { 0.0 };
    let attained_mac_per_s =
        if cycles_total > 0 { macs as f64 * hw.freq_hz / cycles_total as f64 } else { 0.0 };
    if macs > 0 {
        let bound = roofline_bound(op_intensity, hw);
        if attained_mac_per_s > bound * (1.0 + 1e-9) {
            return Err(SimError::RooflineViolation {
                layer_id: layer.id,
                attained: attained_mac_per_s,
                bound,
            });
        }
    }
    Ok(LayerStats {
        layer_id: layer.id,
        kind: layer.kind,
        block: layer.block.label(),
        macs,
        cycles_total,
        cycles_sa_busy: sa_busy,
        cycles_mem_bound: mem_bound,
        cycles_nonlinear_stall: stall,
        cycles_other: other,
        dram_bytes,
        energy_j,
        op_intensity,
        attained_mac_per_s,
    })
}

pub fn roofline_bound(op_intensity: f64, hw: &HardwareConfig) -> f64 {
    hw.peak_mac_per_s().min(op_intensity * hw.dram_bw_bytes_per_s)
}

fn depth_runs_block(side: Side, index: u8, depth: u32) -> bool {
    match side {
        Side::Down | Side::Up => index as u32 <= depth,
        Side::Mid => depth == FULL_DEPTH,
    }
}

/// Simulate the whole network, and optionally a sampling plan on top of it.
///
/// Per-layer DRAM traffic is the unfused scheduler estimate (adaptive or
/// fixed per the switches); fusion savings are reported by the scheduler's
/// plan, not folded into layer timing. A sampling plan prices each depth
/// `l` as the subset of blocks it executes — down and up blocks of index
/// `≤ l`, plus the middle block on full steps — and sums over the depth
/// schedule.
pub fn simulate_network(
    graph: &NetworkGraph,
    hw: &HardwareConfig,
    im2col: &Im2colConfig,
    switches: &AblationSwitches,
    sampling: Option<&SamplingPlan>,
) -> Result<SimReport, SimError> {
    let mut layers = Vec::with_capacity(graph.layers.len());
    let mut totals = SimTotals::default();
    let mut blocks: Vec<BlockStats> = Vec::with_capacity(graph.blocks.len());
    for layer in &graph.layers {
        let stats = simulate_layer(layer, hw, im2col, switches)?;
        totals.macs += stats.macs;
        totals.cycles_total += stats.cycles_total;
        totals.cycles_sa_busy += stats.cycles_sa_busy;
        totals.cycles_mem_bound += stats.cycles_mem_bound;
        totals.cycles_nonlinear_stall += stats.cycles_nonlinear_stall;
        totals.cycles_other += stats.cycles_other;
        totals.dram_bytes += stats.dram_bytes;
        match blocks.last_mut() {
            Some(b) if b.block == stats.block => {
                b.macs += stats.macs;
                b.cycles_total += stats.cycles_total;
                b.dram_bytes += stats.dram_bytes;
                b.energy_j += stats.energy_j;
            }
            _ => blocks.push(BlockStats {
                block: stats.block.clone(),
                macs: stats.macs,
                cycles_total: stats.cycles_total,
                dram_bytes: stats.dram_bytes,
                energy_j: stats.energy_j,
            }),
        }
        layers.push(stats);
    }
    totals.energy_j = hw.energy_j(totals.cycles_total, totals.dram_bytes);
    totals.latency_s = totals.cycles_total as f64 / hw.freq_hz;

    let sampling = match sampling {
        None => None,
        Some(plan) => Some(price_sampling(graph, &layers, &totals, plan, hw)?),
    };

    Ok(SimReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model_id: graph.model_id.as_str().to_string(),
        switches: *switches,
        hardware: *hw,
        im2col: *im2col,
        layers,
        blocks,
        totals,
        sampling,
    })
}

fn price_sampling(
    graph: &NetworkGraph,
    layers: &[LayerStats],
    totals: &SimTotals,
    plan: &SamplingPlan,
    hw: &HardwareConfig,
) -> Result<SamplingReport, SimError> {
    if plan.depth_schedule.len() != plan.params.t_total as usize {
        return Err(SimError::ScheduleLength {
            expected: plan.params.t_total,
            found: plan.depth_schedule.len(),
        });
    }
    let mut depths: Vec<u32> = plan.depth_schedule.clone();
    depths.sort_unstable();
    depths.dedup();
    let mut per_depth = Vec::with_capacity(depths.len());
    for &depth in &depths {
        if depth == 0 || depth > FULL_DEPTH {
            return Err(SimError::BadDepth { depth });
        }
        let (mut cycles, mut bytes) = (0u64, 0u64);
        for (layer, stats) in graph.layers.iter().zip(layers) {
            if depth_runs_block(layer.block.side, layer.block.index, depth) {
                cycles += stats.cycles_total;
                bytes += stats.dram_bytes;
            }
        }
        per_depth.push(DepthCost { depth, cycles, dram_bytes: bytes, energy_j: hw.energy_j(cycles, bytes) });
    }
    let cost_of = |depth: u32| {
        per_depth
            .iter()
            .find(|d| d.depth == depth)
            .expect("every scheduled depth was priced")
    };
    let (mut run_cycles, mut run_bytes) = (0u64, 0u64);
    for &l in &plan.depth_schedule {
        let d = cost_of(l);
        run_cycles += d.cycles;
        run_bytes += d.dram_bytes;
    }
    let full_run_cycles = plan.params.t_total as u64 * totals.cycles_total;
    Ok(SamplingReport {
        plan: plan.clone(),
        per_depth,
        run_cycles,
        run_dram_bytes: run_bytes,
        run_energy_j: hw.energy_j(run_cycles, run_bytes),
        full_run_cycles,
        speedup: full_run_cycles as f64 / run_cycles as f64,
    })
}

/// Roofline coordinates of every MAC-carrying layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RooflinePoint {
    pub layer_id: u32,
    pub op_intensity: f64,
    pub attained_mac_per_s: f64,
    pub bound_mac_per_s: f64,
}

pub fn roofline_points(report: &SimReport) -> Vec<RooflinePoint> {
    report
        .layers
        .iter()
        .filter(|s| s.macs > 0)
        .map(|s| RooflinePoint {
            layer_id: s.layer_id,
            op_intensity: s.op_intensity,
            attained_mac_per_s: s.attained_mac_per_s,
            bound_mac_per_s: roofline_bound(s.op_intensity, &report.hardware),
        })
        .collect()
}
