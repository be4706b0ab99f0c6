//! Reuse and fusion planning.
//!
//! For each layer the planner keeps the smaller operand resident in the
//! global buffer — *input reuse* streams weights past a resident activation,
//! *weight reuse* streams activations past resident weights — so DRAM sees
//! each tensor once. When neither operand fits, *both-tiled* mode charges
//! one operand with a re-read multiplicity and picks the cheaper
//! orientation.
//!
//! On top of per-layer reuse, adjacent conv-stack layers fuse:
//!
//! * runs of input-reuse layers become **layer-by-layer** groups — each
//!   intermediate activation stays on-chip, saving its DRAM write and the
//!   next layer's read of it;
//! * runs of weight-reuse layers whose summed weights fit the buffer become
//!   **cross-layer** groups — partial activations stream straight into the
//!   next layer under full weight residency, with the same boundary saving.
//!
//! Groups grow greedily from the front of the stack and are only kept when
//! they shorten total modeled traffic. All counts are deterministic
//! integers; ties in reuse selection go to weight reuse.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::workload::{Footprint, LayerKind, NetworkGraph};

/// Global on-chip buffer available to reuse/fusion planning.
pub const DEFAULT_BUFFER_BYTES: u64 = 2 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReuseMode {
    InputReuse,
    WeightReuse,
    BothTiled,
}

impl ReuseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReuseMode::InputReuse => "input_reuse",
            ReuseMode::WeightReuse => "weight_reuse",
            ReuseMode::BothTiled => "both_tiled",
        }
    }
}

/// Tile extents of the inner matmul loop: `l0` output rows at a time against
/// a square `cin0 × cout0` channel tile matching the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileConfig {
    pub l0: u64,
    pub cin0: u32,
    pub cout0: u32,
}

impl TileConfig {
    pub fn for_layer(out_len: u64, array_dim: u32) -> TileConfig {
        TileConfig { l0: out_len.max(1), cin0: array_dim, cout0: array_dim }
    }
}

/// Modeled DRAM bytes per tensor class, re-read multiplicities folded in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrafficEstimate {
    pub weight_read_bytes: u64,
    pub act_read_bytes: u64,
    pub act_write_bytes: u64,
}

impl TrafficEstimate {
    pub fn total(&self) -> u64 {
        self.weight_read_bytes + self.act_read_bytes + self.act_write_bytes
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchedulerError {
    ZeroBuffer,
    PlanInvariant(String),
}

impl core::fmt::Display for SchedulerError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SchedulerError::ZeroBuffer => write!(f, "buffer budget must be positive"),
            SchedulerError::PlanInvariant(msg) => write!(f, "infeasible plan: {msg}"),
        }
    }
}

impl core::error::Error for SchedulerError {}

/// Pick the cheaper reuse mode for one layer. Single-residency modes charge
/// every tensor once; both-tiled re-reads whichever operand orientation is
/// cheaper: `min(⌈W/B⌉·I + W, ⌈I/B⌉·W + I) + O`.
pub fn choose_reuse(fp: &Footprint, buffer_bytes: u64) -> (ReuseMode, TrafficEstimate) {
    let Footprint { weight_bytes: w, act_in_bytes: i, act_out_bytes: o } = *fp;
    if w <= buffer_bytes {
        return (
            ReuseMode::WeightReuse,
            TrafficEstimate { weight_read_bytes: w, act_read_bytes: i, act_write_bytes: o },
        );
    }
    if i <= buffer_bytes {
        return (
            ReuseMode::InputReuse,
            TrafficEstimate { weight_read_bytes: w, act_read_bytes: i, act_write_bytes: o },
        );
    }
    let weight_tiles = w.div_ceil(buffer_bytes);
    let input_tiles = i.div_ceil(buffer_bytes);
    let est = if weight_tiles * i + w <= input_tiles * w + i {
        TrafficEstimate { weight_read_bytes: w, act_read_bytes: weight_tiles * i, act_write_bytes: o }
    } else {
        TrafficEstimate { weight_read_bytes: input_tiles * w, act_read_bytes: i, act_write_bytes: o }
    };
    (ReuseMode::BothTiled, est)
}

/// Traffic under the fixed weight-reuse policy (the adaptive-dataflow-off
/// dataflow): weights stream once, input activations re-read once per
/// weight tile that exceeds the buffer.
pub fn fixed_traffic(fp: &Footprint, buffer_bytes: u64) -> TrafficEstimate {
    let m = if fp.weight_bytes > 0 { fp.weight_bytes.div_ceil(buffer_bytes).max(1) } else { 1 };
    TrafficEstimate {
        weight_read_bytes: fp.weight_bytes,
        act_read_bytes: m * fp.act_in_bytes,
        act_write_bytes: fp.act_out_bytes,
    }
}

/// Reference traffic of the im2col design used as the savings baseline:
/// 3×3 convolutions read each input element once per kernel tap.
pub fn baseline_traffic(kind: LayerKind, fp: &Footprint) -> u64 {
    let expansion = match kind {
        LayerKind::Conv3x3 | LayerKind::DownsampleConv => 9,
        _ => 1,
    };
    expansion * fp.act_in_bytes + fp.weight_bytes + fp.act_out_bytes
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionKind {
    LayerByLayer,
    CrossLayer,
}

/// A fused run `layers[first..=last]` of the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionGroup {
    pub kind: FusionKind,
    pub first: usize,
    pub last: usize,
    /// DRAM bytes the group removes: per internal boundary, the
    /// intermediate's write plus the next layer's read of it.
    pub saved_bytes: u64,
}

/// Per-layer scheduling outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub layer_id: u32,
    pub kind: LayerKind,
    pub tile: TileConfig,
    pub mode: ReuseMode,
    pub weight_bytes: u64,
    pub act_in_bytes: u64,
    pub act_out_bytes: u64,
    pub traffic: TrafficEstimate,
    /// Index into [`SchedulePlan::groups`] when fused.
    pub group: Option<usize>,
}

/// Schedule over the convolution stack: reuse per layer plus fusion groups,
/// with unfused, fused, and reference totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulePlan {
    pub buffer_bytes: u64,
    pub layers: Vec<LayerPlan>,
    pub groups: Vec<FusionGroup>,
    /// Σ per-layer adaptive traffic, no fusion.
    pub total_bytes: u64,
    /// `total_bytes` minus all group savings.
    pub fused_total_bytes: u64,
    /// Σ per-layer im2col reference traffic.
    pub baseline_bytes: u64,
}

/// Indices of the convolution stack — the 3×3 spatial layers fusion
/// operates on — in network order.
pub fn conv_stack(graph: &NetworkGraph) -> Vec<usize> {
    graph
        .layers
        .iter()
        .enumerate()
        .filter(|(_, y)| matches!(y.kind, LayerKind::Conv3x3 | LayerKind::DownsampleConv))
        .map(|(i, _)| i)
        .collect()
}

/// Plan reuse and fusion for the conv stack of `graph`.
///
/// Fusion is greedy from the front: maximal runs of input-reuse layers whose
/// members keep `act_in + act_out` within budget become layer-by-layer
/// groups; maximal runs of weight-reuse layers become cross-layer groups as
/// long as cumulative weights fit. Single-layer runs stay ungrouped.
pub fn plan_schedule(
    graph: &NetworkGraph,
    buffer_bytes: u64,
    bytes_per_element: u32,
) -> Result<SchedulePlan, SchedulerError> {
    if buffer_bytes == 0 {
        return Err(SchedulerError::ZeroBuffer);
    }
    let stack = conv_stack(graph);
    let mut layers = Vec::with_capacity(stack.len());
    let mut total_bytes = 0u64;
    let mut baseline_bytes = 0u64;
    for &idx in &stack {
        let layer = &graph.layers[idx];
        let fp = layer.footprint(bytes_per_element);
        let (mode, traffic) = choose_reuse(&fp, buffer_bytes);
        total_bytes += traffic.total();
        baseline_bytes += baseline_traffic(layer.kind, &fp);
        layers.push(LayerPlan {
            layer_id: layer.id,
            kind: layer.kind,
            tile: TileConfig::for_layer(layer.out_len(), 32),
            mode,
            weight_bytes: fp.weight_bytes,
            act_in_bytes: fp.act_in_bytes,
            act_out_bytes: fp.act_out_bytes,
            traffic,
            group: None,
        });
    }

    let fits_resident = |y: &LayerPlan| y.act_in_bytes + y.act_out_bytes <= buffer_bytes;
    let boundary_saving =
        |a: &LayerPlan, b: &LayerPlan| a.act_out_bytes + a.act_out_bytes.min(b.act_in_bytes);

    let mut groups: Vec<FusionGroup> = Vec::new();
    let mut i = 0;
    while i < layers.len() {
        let (kind, j) = match layers[i].mode {
            ReuseMode::InputReuse if fits_resident(&layers[i]) => {
                let mut j = i;
                while j + 1 < layers.len()
                    && layers[j + 1].mode == ReuseMode::InputReuse
                    && fits_resident(&layers[j + 1])
                {
                    j += 1;
                }
                (FusionKind::LayerByLayer, j)
            }
            ReuseMode::WeightReuse => {
                let mut j = i;
                let mut weight_sum = layers[i].weight_bytes;
                while j + 1 < layers.len()
                    && layers[j + 1].mode == ReuseMode::WeightReuse
                    && weight_sum + layers[j + 1].weight_bytes <= buffer_bytes
                {
                    weight_sum += layers[j + 1].weight_bytes;
                    j += 1;
                }
                (FusionKind::CrossLayer, j)
            }
            _ => {
                i += 1;
                continue;
            }
        };
        if j > i {
            let saved_bytes =
                (i..j).map(|k| boundary_saving(&layers[k], &layers[k + 1])).sum();
            let gid = groups.len();
            for member in &mut layers[i..=j] {
                member.group = Some(gid);
            }
            groups.push(FusionGroup { kind, first: i, last: j, saved_bytes });
        }
        i = j + 1;
    }

    let fused_total_bytes = total_bytes - groups.iter().map(|g| g.saved_bytes).sum::<u64>();
    let plan = SchedulePlan {
        buffer_bytes,
        layers,
        groups,
        total_bytes,
        fused_total_bytes,
        baseline_bytes,
    };
    validate_plan(&plan)?;
    Ok(plan)
}

/// Check every schedule invariant, naming the first violated constraint:
/// single-residency feasibility per layer, group membership and ordering,
/// group residency budgets, positive savings, and total consistency.
pub fn validate_plan(plan: &SchedulePlan) -> Result<(), SchedulerError> {
    let fail = |msg: String| Err(SchedulerError::PlanInvariant(msg));
    for y in &plan.layers {
        match y.mode {
            ReuseMode::WeightReuse if y.weight_bytes > plan.buffer_bytes => {
                return fail(format!("layer {} weight residency exceeds buffer", y.layer_id));
            }
            ReuseMode::InputReuse if y.act_in_bytes > plan.buffer_bytes => {
                return fail(format!("layer {} input residency exceeds buffer", y.layer_id));
            }
            _ => {}
        }
    }
    let mut prev_end: Option<usize> = None;
    for (gid, g) in plan.groups.iter().enumerate() {
        if g.first >= g.last || g.last >= plan.layers.len() {
            return fail(format!("group {gid} range {}..={} malformed", g.first, g.last));
        }
        if prev_end.is_some_and(|e| g.first <= e) {
            return fail(format!("group {gid} overlaps its predecessor"));
        }
        prev_end = Some(g.last);
        for k in g.first..=g.last {
            if plan.layers[k].group != Some(gid) {
                return fail(format!("layer {} not tagged with group {gid}", plan.layers[k].layer_id));
            }
        }
        match g.kind {
            FusionKind::CrossLayer => {
                let mode_ok =
                    plan.layers[g.first..=g.last].iter().all(|y| y.mode == ReuseMode::WeightReuse);
                if !mode_ok {
                    return fail(format!("group {gid} mixes modes under cross-layer fusion"));
                }
                let weights: u64 =
                    plan.layers[g.first..=g.last].iter().map(|y| y.weight_bytes).sum();
                if weights > plan.buffer_bytes {
                    return fail(format!(
                        "group {gid} resident weights {weights} exceed buffer {}",
                        plan.buffer_bytes
                    ));
                }
            }
            FusionKind::LayerByLayer => {
                for y in &plan.layers[g.first..=g.last] {
                    if y.mode != ReuseMode::InputReuse {
                        return fail(format!("group {gid} mixes modes under layer-by-layer fusion"));
                    }
                    if y.act_in_bytes + y.act_out_bytes > plan.buffer_bytes {
                        return fail(format!(
                            "group {gid} member {} activations exceed buffer",
                            y.layer_id
                        ));
                    }
                }
            }
        }
        if g.saved_bytes == 0 {
            return fail(format!("group {gid} saves no traffic"));
        }
    }
    let total: u64 = plan.layers.iter().map(|y| y.traffic.total()).sum();
    if total != plan.total_bytes {
        return fail(format!("total {} != sum of layer traffic {total}", plan.total_bytes));
    }
    let saved: u64 = plan.groups.iter().map(|g| g.saved_bytes).sum();
    if plan.fused_total_bytes != plan.total_bytes - saved {
        return fail("fused total inconsistent with group savings".into());
    }
    Ok(())
}
