//! Parametric U-Net workloads: graph construction from topology data files,
//! MAC/parameter accounting, tensor footprints, and the cumulative depth
//! cost curve `f(l)`.
//!
//! Shapes only — this module never touches tensor contents. Activations are
//! carried in the merged `(L, C)` layout (`L = H·W`), so every layer reduces
//! to a small set of closed-form counts.
//!
//! The three built-in models ship as JSON data files embedded at compile
//! time; [`NetworkGraph::builtin`] parses and validates them exactly like a
//! user-supplied custom topology.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Topology file schema understood by [`NetworkGraph::from_topology_json`].
pub const TOPOLOGY_SCHEMA_VERSION: u32 = 1;

/// Layer operator kinds. MAC-carrying kinds are the convolutions, linear
/// projections, and the two attention matmuls; the rest are vector ops
/// tracked with zero MACs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv3x3,
    Conv1x1,
    Linear,
    AttentionQk,
    AttentionAv,
    Softmax,
    Layernorm,
    Groupnorm,
    Gelu,
    Silu,
    UpsampleNearest,
    DownsampleConv,
    Add,
    Concat,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv3x3 => "conv3x3",
            LayerKind::Conv1x1 => "conv1x1",
            LayerKind::Linear => "linear",
            LayerKind::AttentionQk => "attention_qk",
            LayerKind::AttentionAv => "attention_av",
            LayerKind::Softmax => "softmax",
            LayerKind::Layernorm => "layernorm",
            LayerKind::Groupnorm => "groupnorm",
            LayerKind::Gelu => "gelu",
            LayerKind::Silu => "silu",
            LayerKind::UpsampleNearest => "upsample_nearest",
            LayerKind::DownsampleConv => "downsample_conv",
            LayerKind::Add => "add",
            LayerKind::Concat => "concat",
        }
    }

    /// Number of 1×1 kernel taps for convolution kinds (9 for 3×3, 1 for
    /// 1×1), 0 for everything else.
    pub fn kernel_taps(self) -> u64 {
        match self {
            LayerKind::Conv3x3 | LayerKind::DownsampleConv => 9,
            LayerKind::Conv1x1 => 1,
            _ => 0,
        }
    }

    /// True for kinds executed on the systolic array.
    pub fn is_matmul(self) -> bool {
        matches!(
            self,
            LayerKind::Conv3x3
                | LayerKind::Conv1x1
                | LayerKind::Linear
                | LayerKind::AttentionQk
                | LayerKind::AttentionAv
                | LayerKind::DownsampleConv
        )
    }

    /// True for kinds whose MACs are counted in the depth cost curve.
    /// Attention score/context products carry no parameters and are
    /// excluded there (they remain in [`MacBreakdown`]).
    pub fn is_param_op(self) -> bool {
        self.is_matmul() && !matches!(self, LayerKind::AttentionQk | LayerKind::AttentionAv)
    }
}

/// U-Net side of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Down,
    Mid,
    Up,
}

/// Block position: down/up blocks are indexed 1..=12 from top (shallowest)
/// to bottom (deepest); the single mid block has index 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockId {
    pub side: Side,
    pub index: u8,
}

impl BlockId {
    pub fn label(&self) -> String {
        match self.side {
            Side::Down => format!("down.{}", self.index),
            Side::Mid => "mid.0".to_string(),
            Side::Up => format!("up.{}", self.index),
        }
    }
}

/// One layer of the graph, shapes merged to `(L, C)`.
///
/// `l` is the spatial element count (`h·w` for spatial layers, row count
/// for non-spatial linear layers such as the time embedding). Attention
/// layers additionally carry `seq_len` (query rows), `kv_len` (key/value
/// rows; equals `seq_len` for self-attention, the context length for
/// cross-attention), `heads`, and `head_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDescriptor {
    pub id: u32,
    pub kind: LayerKind,
    pub h: u32,
    pub w: u32,
    pub l: u64,
    pub c_in: u32,
    pub c_out: u32,
    pub stride: u8,
    pub seq_len: u32,
    pub kv_len: u32,
    pub heads: u32,
    pub head_dim: u32,
    pub block: BlockId,
}

impl LayerDescriptor {
    /// Key/value row count with the self-attention default applied.
    pub fn kv(&self) -> u64 {
        if self.kv_len != 0 {
            self.kv_len as u64
        } else {
            self.seq_len as u64
        }
    }

    /// Output row count in merged layout: `⌈h/stride⌉·⌈w/stride⌉` for
    /// stride-2 convolutions, `4·l` for nearest upsampling, `l` otherwise.
    pub fn out_len(&self) -> u64 {
        match self.kind {
            LayerKind::DownsampleConv => {
                let s = self.stride as u64;
                (self.h as u64).div_ceil(s) * (self.w as u64).div_ceil(s)
            }
            LayerKind::UpsampleNearest => self.l * 4,
            _ => self.l,
        }
    }

    /// MAC count (one multiply + one add = one MAC).
    pub fn macs(&self) -> u64 {
        let ci = self.c_in as u64;
        let co = self.c_out as u64;
        match self.kind {
            LayerKind::Conv3x3 | LayerKind::DownsampleConv => self.out_len() * ci * co * 9,
            LayerKind::Conv1x1 | LayerKind::Linear => self.l * ci * co,
            LayerKind::AttentionQk | LayerKind::AttentionAv => {
                self.heads as u64 * self.seq_len as u64 * self.kv() * self.head_dim as u64
            }
            _ => 0,
        }
    }

    /// Learned-parameter count (weights + biases for matmul kinds, affine
    /// scale/shift pairs for the norms).
    pub fn param_count(&self) -> u64 {
        let ci = self.c_in as u64;
        let co = self.c_out as u64;
        match self.kind {
            LayerKind::Conv3x3 | LayerKind::DownsampleConv => 9 * ci * co + co,
            LayerKind::Conv1x1 | LayerKind::Linear => ci * co + co,
            LayerKind::Layernorm | LayerKind::Groupnorm => 2 * ci,
            _ => 0,
        }
    }
}

/// Per-layer tensor sizes in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footprint {
    pub weight_bytes: u64,
    pub act_in_bytes: u64,
    pub act_out_bytes: u64,
}

impl LayerDescriptor {
    /// Weight / input / output sizes at `bpe` bytes per element. Attention
    /// score matrices count as activations: the QK product writes
    /// `heads·seq·kv` scores, the AV product reads them back plus V.
    pub fn footprint(&self, bpe: u32) -> Footprint {
        let bpe = bpe as u64;
        let ci = self.c_in as u64;
        let co = self.c_out as u64;
        let (w, i, o) = match self.kind {
            LayerKind::Conv3x3 | LayerKind::DownsampleConv => (
                9 * ci * co,
                self.l * ci,
                self.out_len() * co,
            ),
            LayerKind::Conv1x1 | LayerKind::Linear => (ci * co, self.l * ci, self.l * co),
            LayerKind::AttentionQk => {
                let c = self.heads as u64 * self.head_dim as u64;
                let scores = self.heads as u64 * self.seq_len as u64 * self.kv();
                (0, (self.seq_len as u64 + self.kv()) * c, scores)
            }
            LayerKind::AttentionAv => {
                let c = self.heads as u64 * self.head_dim as u64;
                let scores = self.heads as u64 * self.seq_len as u64 * self.kv();
                (0, scores + self.kv() * c, self.seq_len as u64 * c)
            }
            LayerKind::UpsampleNearest => (0, self.l * ci, self.out_len() * co),
            _ => (0, 0, 0),
        };
        Footprint {
            weight_bytes: w * bpe,
            act_in_bytes: i * bpe,
            act_out_bytes: o * bpe,
        }
    }
}

/// Built-in model identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    Sd14,
    Sd21Base,
    Sdxl,
    Custom,
}

impl ModelId {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Sd14 => "sd14",
            ModelId::Sd21Base => "sd21base",
            ModelId::Sdxl => "sdxl",
            ModelId::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<ModelId> {
        match s {
            "sd14" => Some(ModelId::Sd14),
            "sd21base" => Some(ModelId::Sd21Base),
            "sdxl" => Some(ModelId::Sdxl),
            "custom" => Some(ModelId::Custom),
            _ => None,
        }
    }
}

/// Ordered U-Net computation graph.
///
/// `layers` is in execution order: down blocks 1..=12, mid, then up blocks
/// deepest-first (12 down to 1). `blocks` lists the same order; every layer's
/// `block` field names its owner. `skips` are the concat edges from down
/// block `i` to up block `i`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkGraph {
    pub model_id: ModelId,
    pub layers: Vec<LayerDescriptor>,
    pub blocks: Vec<BlockId>,
    pub skips: Vec<(u8, u8)>,
    pub latent_h: u32,
    pub latent_w: u32,
    pub context_len: u32,
    pub context_dim: u32,
}

/// MAC totals per layer and per block. `per_layer` is indexed by layer id,
/// `per_block` parallels [`NetworkGraph::blocks`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MacBreakdown {
    pub per_layer: Vec<u64>,
    pub per_block: Vec<u64>,
    pub total: u64,
}

/// Errors from topology loading and cost evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorkloadError {
    UnknownModel(String),
    Parse(String),
    SchemaVersion { found: u32, expected: u32 },
    BadBlock(String),
    BadLayer { block: String, index: usize, reason: String },
    BadSkip(String),
    DepthOutOfRange(u8),
    Overflow,
}

impl core::fmt::Display for WorkloadError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            WorkloadError::UnknownModel(m) => write!(f, "unknown model id `{m}`"),
            WorkloadError::Parse(e) => write!(f, "topology parse error: {e}"),
            WorkloadError::SchemaVersion { found, expected } => {
                write!(f, "topology schema_version {found}, expected {expected}")
            }
            WorkloadError::BadBlock(e) => write!(f, "invalid block: {e}"),
            WorkloadError::BadLayer { block, index, reason } => {
                write!(f, "invalid layer {index} in block {block}: {reason}")
            }
            WorkloadError::BadSkip(e) => write!(f, "invalid skip edge: {e}"),
            WorkloadError::DepthOutOfRange(l) => {
                write!(f, "depth l={l} outside 1..=13")
            }
            WorkloadError::Overflow => write!(f, "MAC count exceeds u64 range"),
        }
    }
}

impl core::error::Error for WorkloadError {}

// ---------------------------------------------------------------------------
// Topology file schema
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct TopologyFile {
    schema_version: u32,
    model_id: String,
    latent_h: u32,
    latent_w: u32,
    context_len: u32,
    context_dim: u32,
    skips: Vec<SkipSpec>,
    blocks: Vec<BlockSpec>,
}

#[derive(Debug, Deserialize)]
struct SkipSpec {
    down: u8,
    up: u8,
}

#[derive(Debug, Deserialize)]
struct BlockSpec {
    side: String,
    index: u8,
    layers: Vec<LayerSpec>,
}

#[derive(Debug, Deserialize)]
struct LayerSpec {
    kind: String,
    #[serde(default)]
    h: u32,
    #[serde(default)]
    w: u32,
    #[serde(default)]
    l: u64,
    c_in: u32,
    c_out: u32,
    #[serde(default = "default_stride")]
    stride: u8,
    #[serde(default)]
    seq_len: u32,
    #[serde(default)]
    kv_len: u32,
    #[serde(default)]
    heads: u32,
    #[serde(default)]
    head_dim: u32,
}

fn default_stride() -> u8 {
    1
}

fn parse_kind(s: &str) -> Option<LayerKind> {
    Some(match s {
        "conv3x3" => LayerKind::Conv3x3,
        "conv1x1" => LayerKind::Conv1x1,
        "linear" => LayerKind::Linear,
        "attention_qk" => LayerKind::AttentionQk,
        "attention_av" => LayerKind::AttentionAv,
        "softmax" => LayerKind::Softmax,
        "layernorm" => LayerKind::Layernorm,
        "groupnorm" => LayerKind::Groupnorm,
        "gelu" => LayerKind::Gelu,
        "silu" => LayerKind::Silu,
        "upsample_nearest" => LayerKind::UpsampleNearest,
        "downsample_conv" => LayerKind::DownsampleConv,
        "add" => LayerKind::Add,
        "concat" => LayerKind::Concat,
        _ => return None,
    })
}

impl NetworkGraph {
    /// Embedded topology JSON for a built-in model.
    pub fn builtin_topology(model: ModelId) -> Option<&'static str> {
        match model {
            ModelId::Sd14 => Some(include_str!("../data/sd14.json")),
            ModelId::Sd21Base => Some(include_str!("../data/sd21base.json")),
            ModelId::Sdxl => Some(include_str!("../data/sdxl.json")),
            ModelId::Custom => None,
        }
    }

    /// Build one of the shipped models. The embedded data files are
    /// validated by the same path as custom topologies.
    pub fn builtin(model: ModelId) -> Result<NetworkGraph, WorkloadError> {
        let text = Self::builtin_topology(model)
            .ok_or_else(|| WorkloadError::UnknownModel("custom".to_string()))?;
        Self::from_topology_json(text)
    }

    /// Parse and validate a topology file.
    pub fn from_topology_json(text: &str) -> Result<NetworkGraph, WorkloadError> {
        let file: TopologyFile =
            serde_json::from_str(text).map_err(|e| WorkloadError::Parse(e.to_string()))?;
        if file.schema_version != TOPOLOGY_SCHEMA_VERSION {
            return Err(WorkloadError::SchemaVersion {
                found: file.schema_version,
                expected: TOPOLOGY_SCHEMA_VERSION,
            });
        }
        let model_id = ModelId::parse(&file.model_id).unwrap_or(ModelId::Custom);

        let mut blocks = Vec::new();
        let mut layers = Vec::new();
        let (mut n_down, mut n_mid, mut n_up) = (0u32, 0u32, 0u32);
        for spec in &file.blocks {
            let side = match spec.side.as_str() {
                "down" => Side::Down,
                "mid" => Side::Mid,
                "up" => Side::Up,
                other => return Err(WorkloadError::BadBlock(format!("unknown side `{other}`"))),
            };
            let block = BlockId { side, index: spec.index };
            match side {
                Side::Down | Side::Up => {
                    if !(1..=12).contains(&spec.index) {
                        return Err(WorkloadError::BadBlock(format!(
                            "{} index {} outside 1..=12",
                            spec.side, spec.index
                        )));
                    }
                    if side == Side::Down {
                        n_down += 1;
                    } else {
                        n_up += 1;
                    }
                }
                Side::Mid => {
                    if spec.index != 0 {
                        return Err(WorkloadError::BadBlock("mid index must be 0".to_string()));
                    }
                    n_mid += 1;
                }
            }
            for (i, ls) in spec.layers.iter().enumerate() {
                let layer = build_layer(ls, layers.len() as u32, block).map_err(|reason| {
                    WorkloadError::BadLayer { block: block.label(), index: i, reason }
                })?;
                layers.push(layer);
            }
            blocks.push(block);
        }
        if n_down != 12 || n_mid != 1 || n_up != 12 {
            return Err(WorkloadError::BadBlock(format!(
                "expected 12 down / 1 mid / 12 up blocks, found {n_down}/{n_mid}/{n_up}"
            )));
        }

        let mut skips = Vec::new();
        for s in &file.skips {
            if s.down != s.up || !(1..=12).contains(&s.down) {
                return Err(WorkloadError::BadSkip(format!(
                    "edge down.{} -> up.{} is not depth-mirrored",
                    s.down, s.up
                )));
            }
            skips.push((s.down, s.up));
        }

        let graph = NetworkGraph {
            model_id,
            layers,
            blocks,
            skips,
            latent_h: file.latent_h,
            latent_w: file.latent_w,
            context_len: file.context_len,
            context_dim: file.context_dim,
        };
        // Reject totals beyond u64 before anyone trusts the counts.
        let mut total: u64 = 0;
        for l in &graph.layers {
            total = total.checked_add(l.macs()).ok_or(WorkloadError::Overflow)?;
        }
        Ok(graph)
    }

    /// Spatially scaled copy: every layer carrying an `h × w` grid gets
    /// `h,w ← h·factor, w·factor`, with `l` and self-attention `seq_len`
    /// following. Non-spatial layers (time embedding, context projections)
    /// are untouched.
    pub fn scaled_spatial(&self, factor: u32) -> NetworkGraph {
        let mut g = self.clone();
        g.model_id = ModelId::Custom;
        g.latent_h *= factor;
        g.latent_w *= factor;
        for l in &mut g.layers {
            if l.h != 0 {
                l.h *= factor;
                l.w *= factor;
                l.l = l.h as u64 * l.w as u64;
                if l.seq_len != 0 {
                    l.seq_len = (l.seq_len as u64 * factor as u64 * factor as u64) as u32;
                }
            }
        }
        g
    }
}

fn build_layer(ls: &LayerSpec, id: u32, block: BlockId) -> Result<LayerDescriptor, String> {
    let kind = parse_kind(&ls.kind).ok_or_else(|| format!("unknown kind `{}`", ls.kind))?;
    let l = if ls.h != 0 {
        if ls.l != 0 && ls.l != ls.h as u64 * ls.w as u64 {
            return Err(format!("l={} inconsistent with h*w={}", ls.l, ls.h * ls.w));
        }
        ls.h as u64 * ls.w as u64
    } else {
        ls.l
    };
    if l == 0 {
        return Err("spatial length is zero".to_string());
    }
    if ls.c_in == 0 || ls.c_out == 0 {
        return Err("channel counts must be >= 1".to_string());
    }
    match ls.stride {
        1 => {}
        2 => {
            if kind != LayerKind::DownsampleConv {
                return Err("stride 2 is only valid for downsample_conv".to_string());
            }
            if ls.h == 0 {
                return Err("stride-2 layer needs h and w".to_string());
            }
        }
        s => return Err(format!("stride {s} not in {{1,2}}")),
    }
    if kind == LayerKind::DownsampleConv && ls.stride != 2 {
        return Err("downsample_conv requires stride 2".to_string());
    }
    let is_attn = matches!(kind, LayerKind::AttentionQk | LayerKind::AttentionAv | LayerKind::Softmax);
    if is_attn {
        if ls.seq_len == 0 || ls.heads == 0 || ls.head_dim == 0 {
            return Err("attention layer needs seq_len, heads, head_dim".to_string());
        }
    } else if ls.seq_len != 0 || ls.heads != 0 {
        return Err("non-attention layer carries attention fields".to_string());
    }
    Ok(LayerDescriptor {
        id,
        kind,
        h: ls.h,
        w: ls.w,
        l,
        c_in: ls.c_in,
        c_out: ls.c_out,
        stride: ls.stride,
        seq_len: ls.seq_len,
        kv_len: ls.kv_len,
        heads: ls.heads,
        head_dim: ls.head_dim,
        block,
    })
}

// ---------------------------------------------------------------------------
// Accounting
// ---------------------------------------------------------------------------

/// MAC totals over all matmul kinds (attention products included).
pub fn count_macs(graph: &NetworkGraph) -> MacBreakdown {
    breakdown(graph, |l| l.macs())
}

/// MAC totals over parameter-carrying kinds only (attention score/context
/// products excluded). This is the accounting behind [`cost_table`].
pub fn count_param_op_macs(graph: &NetworkGraph) -> MacBreakdown {
    breakdown(graph, |l| if l.kind.is_param_op() { l.macs() } else { 0 })
}

fn breakdown(graph: &NetworkGraph, f: impl Fn(&LayerDescriptor) -> u64) -> MacBreakdown {
    let per_layer: Vec<u64> = graph.layers.iter().map(f).collect();
    let per_block: Vec<u64> = graph
        .blocks
        .iter()
        .map(|b| {
            graph
                .layers
                .iter()
                .filter(|l| l.block == *b)
                .map(|l| per_layer[l.id as usize])
                .sum()
        })
        .collect();
    MacBreakdown { total: per_layer.iter().sum(), per_layer, per_block }
}

/// Total learned parameters.
pub fn param_count(graph: &NetworkGraph) -> u64 {
    graph.layers.iter().map(|l| l.param_count()).sum()
}

/// Per-layer tensor footprints at `bpe` bytes per element.
pub fn tensor_footprints(graph: &NetworkGraph, bpe: u32) -> Vec<Footprint> {
    graph.layers.iter().map(|l| l.footprint(bpe)).collect()
}

/// Cumulative cost curve: `f[l-1]` is the MAC fraction of running down
/// blocks `1..=l` plus up blocks `1..=l`, with the mid block included only
/// at `l = 13`. `f[12] = 1` exactly.
pub fn cost_table(graph: &NetworkGraph) -> [f64; 13] {
    let mb = count_param_op_macs(graph);
    let mut out = [0.0; 13];
    for l in 1..=13u8 {
        let mut macs: u64 = 0;
        for (b, m) in graph.blocks.iter().zip(&mb.per_block) {
            let executed = match b.side {
                Side::Down | Side::Up => b.index <= l,
                Side::Mid => l == 13,
            };
            if executed {
                macs += m;
            }
        }
        out[l as usize - 1] = macs as f64 / mb.total as f64;
    }
    out[12] = 1.0;
    out
}

/// `f(l)` for a single depth.
pub fn cost_function(graph: &NetworkGraph, l: u8) -> Result<f64, WorkloadError> {
    if !(1..=13).contains(&l) {
        return Err(WorkloadError::DepthOutOfRange(l));
    }
    Ok(cost_table(graph)[l as usize - 1])
}
