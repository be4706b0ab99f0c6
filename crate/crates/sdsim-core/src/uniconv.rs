//! Address-centric convolution.
//!
//! A K×K convolution over activations stored in the merged `(L, C_in)`
//! layout (`l = h·W + w`) decomposes into K² pointwise matmuls. Slice `f`
//! holds the 1×1 kernel at offset `(dr, ds) = (f/K − 1, f%K − 1)` from the
//! kernel center; its partial-sum rows land at a fixed address offset
//!
//! ```text
//! l_out = l_in + delta,   delta = −dr·W − ds
//! ```
//!
//! so the center slice maps `l → l` and the middle-left slice maps
//! `l → l+1`. Rows whose destination `(h−dr, w−ds)` would fall outside the
//! grid are masked by an edge flag (decoded from `l`, never by wrap-around).
//! The resulting operator — per-slice matmul overlapped with scatter-add —
//! is `uniconv_execute`, verified bit-exactly against a six-loop direct
//! convolution oracle on integer-valued data.
//!
//! Convention: cross-correlation (no kernel flip), zero padding anchored at
//! the kernel center ("same" for stride 1). Stride 2 keeps stride-1 output
//! rows at even `(p, q)`, packed as `l_out = (p/2)·⌈W/2⌉ + q/2`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Partial-sum address mapping for one kernel slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddressMap {
    /// Row offset from the kernel center, in `{-1, 0, +1}` for 3×3.
    pub dr: i32,
    /// Column offset from the kernel center.
    pub ds: i32,
    /// Element offset applied to merged addresses: `l_out = l_in + delta`.
    pub delta: i64,
    /// Row width the offset was derived for.
    pub w: u32,
}

impl AddressMap {
    pub fn new(dr: i32, ds: i32, w: u32) -> AddressMap {
        AddressMap { dr, ds, delta: -(dr as i64) * w as i64 - ds as i64, w }
    }
}

/// Supported kernel footprints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelSize {
    K1x1,
    K3x3,
}

impl KernelSize {
    pub fn taps(self) -> usize {
        match self {
            KernelSize::K1x1 => 1,
            KernelSize::K3x3 => 9,
        }
    }
}

/// Activations in merged `(L, C)` layout, row-major, `l = h·w_dim + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedActivation {
    pub data: Vec<f64>,
    pub l: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl PackedActivation {
    pub fn new(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self, UniconvError> {
        if data.len() != h * w * c {
            return Err(UniconvError::Shape(format!(
                "activation data length {} != h*w*c = {}",
                data.len(),
                h * w * c
            )));
        }
        Ok(PackedActivation { data, l: h * w, c, h, w })
    }

    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        PackedActivation { data: vec![0.0; h * w * c], l: h * w, c, h, w }
    }

    #[inline]
    pub fn row(&self, l: usize) -> &[f64] {
        &self.data[l * self.c..(l + 1) * self.c]
    }
}

/// Weights as `(F, C_out, C_in)`: `F` pointwise slices in row-major `(r, s)`
/// order over the kernel window.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedWeight {
    pub data: Vec<f64>,
    pub f: usize,
    pub c_out: usize,
    pub c_in: usize,
}

impl PackedWeight {
    pub fn new(f: usize, c_out: usize, c_in: usize, data: Vec<f64>) -> Result<Self, UniconvError> {
        if f != 1 && f != 9 {
            return Err(UniconvError::Kernel(f));
        }
        if data.len() != f * c_out * c_in {
            return Err(UniconvError::Shape(format!(
                "weight data length {} != f*c_out*c_in = {}",
                data.len(),
                f * c_out * c_in
            )));
        }
        Ok(PackedWeight { data, f, c_out, c_in })
    }

    #[inline]
    fn at(&self, f: usize, co: usize, ci: usize) -> f64 {
        self.data[(f * self.c_out + co) * self.c_in + ci]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UniconvError {
    Kernel(usize),
    Shape(String),
    Stride(u32),
    AddressRange { l_in: u64, l_max: u64 },
}

impl core::fmt::Display for UniconvError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            UniconvError::Kernel(k) => write!(f, "unsupported kernel tap count {k}"),
            UniconvError::Shape(e) => write!(f, "shape mismatch: {e}"),
            UniconvError::Stride(s) => write!(f, "unsupported stride {s}"),
            UniconvError::AddressRange { l_in, l_max } => {
                write!(f, "address {l_in} outside grid of {l_max} elements")
            }
        }
    }
}

impl core::error::Error for UniconvError {}

/// Slice decomposition: the `F` address maps of a kernel, in slice order
/// `f = 0..F`. A 1×1 kernel yields the single identity map.
pub fn decompose(kernel: KernelSize, w: u32) -> Vec<(usize, AddressMap)> {
    match kernel {
        KernelSize::K1x1 => vec![(0, AddressMap::new(0, 0, w))],
        KernelSize::K3x3 => (0..9)
            .map(|f| (f, AddressMap::new(f as i32 / 3 - 1, f as i32 % 3 - 1, w)))
            .collect(),
    }
}

/// True iff the partial sum of input element `l_in` has an in-grid
/// destination `(h − dr, w − ds)` under `map`.
pub fn edge_flag(map: &AddressMap, l_in: u64, h: u32, w: u32) -> Result<bool, UniconvError> {
    let l_max = h as u64 * w as u64;
    if l_in >= l_max {
        return Err(UniconvError::AddressRange { l_in, l_max });
    }
    let (row, col) = ((l_in / w as u64) as i64, (l_in % w as u64) as i64);
    let (p, q) = (row - map.dr as i64, col - map.ds as i64);
    Ok(p >= 0 && p < h as i64 && q >= 0 && q < w as i64)
}

/// All valid `(l_in, l_out)` scatter pairs of one slice, in visiting order.
/// Both columns are strictly increasing — the regularity the address
/// generator relies on.
pub fn valid_pairs(map: &AddressMap, h: u32, w: u32) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    for l_in in 0..h as u64 * w as u64 {
        if edge_flag(map, l_in, h, w).expect("l_in in range") {
            out.push((l_in, (l_in as i64 + map.delta) as u64));
        }
    }
    out
}

/// Execute a convolution as F slice-matmuls with scatter-add.
///
/// Accumulation order is fixed at slice order `f = 0..F`; on integer-valued
/// data the result is bit-exact regardless of order. Stride 2 subsamples the
/// stride-1 output grid at even `(p, q)`.
pub fn uniconv_execute(
    input: &PackedActivation,
    weight: &PackedWeight,
    stride: u32,
) -> Result<PackedActivation, UniconvError> {
    if weight.c_in != input.c {
        return Err(UniconvError::Shape(format!(
            "weight c_in {} != activation c {}",
            weight.c_in, input.c
        )));
    }
    let kernel = match weight.f {
        1 => KernelSize::K1x1,
        9 => KernelSize::K3x3,
        k => return Err(UniconvError::Kernel(k)),
    };
    match (stride, kernel) {
        (1, _) | (2, KernelSize::K3x3) => {}
        (2, KernelSize::K1x1) => return Err(UniconvError::Stride(2)),
        (s, _) => return Err(UniconvError::Stride(s)),
    }

    let (h, w, c_out) = (input.h, input.w, weight.c_out);
    let mut full = PackedActivation::zeros(h, w, c_out);
    for (f, map) in decompose(kernel, w as u32) {
        // Slice matmul: partial[l][co] = Σ_ci input[l][ci] · weight[f][co][ci],
        // scattered to l + delta where the edge flag holds.
        for l_in in 0..input.l {
            if !edge_flag(&map, l_in as u64, h as u32, w as u32)? {
                continue;
            }
            let l_out = (l_in as i64 + map.delta) as usize;
            let row_in = input.row(l_in);
            let row_out = &mut full.data[l_out * c_out..(l_out + 1) * c_out];
            for (co, acc) in row_out.iter_mut().enumerate() {
                let mut sum = 0.0;
                for (ci, &x) in row_in.iter().enumerate() {
                    sum += x * weight.at(f, co, ci);
                }
                *acc += sum;
            }
        }
    }
    if stride == 1 {
        return Ok(full);
    }

    let (ph, pw) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = PackedActivation::zeros(ph, pw, c_out);
    for p in 0..ph {
        for q in 0..pw {
            let src = (2 * p * w + 2 * q) * c_out;
            let dst = (p * pw + q) * c_out;
            out.data[dst..dst + c_out].copy_from_slice(&full.data[src..src + c_out]);
        }
    }
    Ok(out)
}

/// Reference six-loop convolution (cross-correlation, zero padding anchored
/// at the kernel center). Intended for tests; O(P·Q·F·C_in·C_out).
pub fn direct_conv_oracle(
    input: &PackedActivation,
    weight: &PackedWeight,
    stride: u32,
) -> Result<PackedActivation, UniconvError> {
    if weight.c_in != input.c {
        return Err(UniconvError::Shape(format!(
            "weight c_in {} != activation c {}",
            weight.c_in, input.c
        )));
    }
    let k = match weight.f {
        1 => 1i64,
        9 => 3i64,
        f => return Err(UniconvError::Kernel(f)),
    };
    if stride != 1 && (stride != 2 || k != 3) {
        return Err(UniconvError::Stride(stride));
    }
    let (h, w) = (input.h as i64, input.w as i64);
    let s = stride as i64;
    let (ph, pw) = (input.h.div_ceil(stride as usize), input.w.div_ceil(stride as usize));
    let mut out = PackedActivation::zeros(ph, pw, weight.c_out);
    for p in 0..ph as i64 {
        for q in 0..pw as i64 {
            for co in 0..weight.c_out {
                let mut sum = 0.0;
                for r in 0..k {
                    for sx in 0..k {
                        let (hi, wi) = (p * s + r - k / 2, q * s + sx - k / 2);
                        if hi < 0 || hi >= h || wi < 0 || wi >= w {
                            continue;
                        }
                        let row = input.row((hi * w + wi) as usize);
                        let f = (r * k + sx) as usize;
                        for (ci, &x) in row.iter().enumerate() {
                            sum += x * weight.at(f, co, ci);
                        }
                    }
                }
                out.data[(p as usize * pw + q as usize) * weight.c_out + co] = sum;
            }
        }
    }
    Ok(out)
}
