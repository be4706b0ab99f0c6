//! Acceptance suite: one test per shipped criterion, each printing a
//! single `criterion NN PASS|FAIL <name>` line (visible with
//! `cargo test -- --nocapture`). Tolerances are pinned here, next to the
//! checks that use them.

use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use sdsim_core::nonlinear::{
    gelu_erf, gelu_sigmoid, layernorm_norm, layernorm_two_pass, softmax_naive, MomentState,
    SoftmaxState, DEFAULT_TILE,
};
use sdsim_core::phase::{
    build_schedule, detect_outliers, find_transition, mac_reduction, normalize_scores, synth_trace,
    PlanParams, DEFAULT_LATE_FRACTION, DEFAULT_OUTLIER_THRESHOLD,
};
use sdsim_core::rng::SplitMix64;
use sdsim_core::scheduler::{fixed_traffic, plan_schedule, ReuseMode};
use sdsim_core::simcore::{
    roofline_points, simulate_layer, simulate_network, AblationSwitches, HardwareConfig,
    Im2colConfig,
};
use sdsim_core::uniconv::{direct_conv_oracle, uniconv_execute, PackedActivation, PackedWeight};
use sdsim_core::workload::{
    cost_table, param_count, Footprint, LayerKind, ModelId, NetworkGraph,
};

fn criterion(n: usize, name: &str, failures: Vec<String>) {
    let verdict = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!("criterion {n:02} {verdict} {name}");
    assert!(failures.is_empty(), "criterion {n} ({name}): {}", failures.join("; "));
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn sd14() -> NetworkGraph {
    NetworkGraph::builtin(ModelId::Sd14).unwrap()
}

fn hw() -> HardwareConfig {
    HardwareConfig::default()
}

fn switches(ac: bool, ad: bool, sc: bool) -> AblationSwitches {
    AblationSwitches { address_centric: ac, adaptive_dataflow: ad, streaming_nonlinear: sc }
}

#[test]
fn criterion_01_uniconv_equivalence() {
    let mut failures = Vec::new();
    let start = Instant::now();
    let mut rng = SplitMix64::new(0xC0FFEE);
    for case in 0..200 {
        let h = rng.next_range(1, 8) as usize;
        let w = rng.next_range(1, 8) as usize;
        let c_in = rng.next_range(1, 8) as usize;
        let c_out = rng.next_range(1, 8) as usize;
        let taps = if rng.next_range(0, 1) == 0 { 1 } else { 9 };
        let stride = if taps == 9 && rng.next_range(0, 1) == 1 { 2 } else { 1 };

        let act: Vec<f64> =
            (0..h * w * c_in).map(|_| rng.next_range(0, 8) as f64 - 4.0).collect();
        let wgt: Vec<f64> =
            (0..taps * c_out * c_in).map(|_| rng.next_range(0, 8) as f64 - 4.0).collect();
        let input = PackedActivation::new(h, w, c_in, act).unwrap();
        let weight = PackedWeight::new(taps, c_out, c_in, wgt).unwrap();

        let got = uniconv_execute(&input, &weight, stride).unwrap();
        let want = direct_conv_oracle(&input, &weight, stride).unwrap();
        if got.data != want.data || (got.h, got.w, got.c) != (want.h, want.w, want.c) {
            failures.push(format!(
                "case {case}: h={h} w={w} c={c_in}->{c_out} taps={taps} stride={stride} mismatch"
            ));
        }
    }
    if start.elapsed() >= Duration::from_secs(10) {
        failures.push(format!("runtime {:?} >= 10 s", start.elapsed()));
    }
    criterion(1, "address-centric convolution bit-exact vs direct oracle (200 cases)", failures);
}

#[test]
fn criterion_02_streaming_softmax_layernorm() {
    let mut failures = Vec::new();
    let start = Instant::now();
    let mut rng = SplitMix64::new(0xBADCAB);
    let tol = 1e-6;

    let partition = |rng: &mut SplitMix64, len: usize| -> Vec<usize> {
        let mut cuts = Vec::new();
        let mut rest = len;
        while rest > 0 {
            let take = (rng.next_range(1, DEFAULT_TILE as u64) as usize).min(rest);
            cuts.push(take);
            rest -= take;
        }
        cuts
    };

    for row_idx in 0..500 {
        let len = match row_idx {
            0..=7 => [1usize, 2, 31, 32, 33, 77, 4999, 5000][row_idx],
            _ => rng.next_range(1, 5000) as usize,
        };
        let row: Vec<f64> = (0..len).map(|_| rng.next_f64() * 20.0 - 10.0).collect();

        let naive = softmax_naive(&row);
        let (mean_ref, var_ref) = layernorm_two_pass(&row);

        let mut tilings: Vec<Vec<usize>> = vec![vec![DEFAULT_TILE; len.div_ceil(DEFAULT_TILE)]];
        for _ in 0..3 {
            tilings.push(partition(&mut rng, len));
        }
        for (p_idx, tiling) in tilings.iter().enumerate() {
            let mut sm = SoftmaxState::new(DEFAULT_TILE);
            let mut mom = MomentState::new();
            let mut offset = 0;
            for &take in tiling {
                let take = take.min(len - offset);
                if take == 0 {
                    break;
                }
                sm.update(&row[offset..offset + take]).unwrap();
                mom.update(&row[offset..offset + take]).unwrap();
                offset += take;
            }
            let softmax_bad = row
                .iter()
                .zip(&naive)
                .any(|(&x, &want)| rel(sm.norm(x).unwrap(), want) > tol);
            let (mean, var) = mom.finalize().unwrap();
            let layernorm_bad = row.iter().any(|&x| {
                let got = layernorm_norm(x, mean, var, 1.0, 0.0, 1e-5);
                let want = layernorm_norm(x, mean_ref, var_ref, 1.0, 0.0, 1e-5);
                rel(got, want) > tol
            });
            if softmax_bad || layernorm_bad {
                failures.push(format!("row {row_idx} len {len} partition {p_idx}"));
            }
        }
    }
    if start.elapsed() >= Duration::from_secs(30) {
        failures.push(format!("runtime {:?} >= 30 s", start.elapsed()));
    }
    criterion(2, "online softmax / single-pass layernorm vs two-pass oracles (500 rows)", failures);
}

#[test]
fn criterion_03_gelu_deviation() {
    let mut failures = Vec::new();
    let mut max_dev: f64 = 0.0;
    let mut i = 0i64;
    loop {
        let x = -10.0 + i as f64 * 1e-3;
        if x > 10.0 {
            break;
        }
        max_dev = max_dev.max((gelu_sigmoid(x) - gelu_erf(x)).abs());
        i += 1;
    }
    if max_dev > 0.021 {
        failures.push(format!("max deviation {max_dev:.6} > 0.021"));
    }
    criterion(3, "sigmoid-GELU within 0.021 of erf-GELU on [-10, 10]", failures);
}

#[test]
fn criterion_04_workload_fidelity() {
    let mut failures = Vec::new();
    let graph = sd14();

    let params = param_count(&graph) as f64;
    if rel(params, 860e6) > 0.05 {
        failures.push(format!("param count {params} outside 860e6 +- 5%"));
    }

    let cost = cost_table(&graph);
    if cost.windows(2).any(|w| w[0] > w[1]) {
        failures.push("cost table not non-decreasing".into());
    }
    if cost[12] != 1.0 {
        failures.push(format!("f(13) = {} != 1", cost[12]));
    }

    let doubled = graph.scaled_spatial(2);
    for (a, b) in graph.layers.iter().zip(&doubled.layers) {
        if a.kind.is_param_op() && a.h != 0 && b.macs() != 4 * a.macs() {
            failures.push(format!("layer {} MACs not 4x under 2x latent", a.id));
            break;
        }
    }
    criterion(4, "parameters near 860M, monotone cost table, spatial equivariance", failures);
}

#[test]
fn criterion_05_mac_reduction_table() {
    let mut failures = Vec::new();
    let start = Instant::now();
    let cost = cost_table(&sd14());
    let targets = [(2u32, 2.39), (3, 2.72), (4, 2.84), (5, 3.31)];
    let mut got = Vec::new();
    for (t_sparse, target) in targets {
        let params = PlanParams {
            t_total: 50,
            t_sketch: 25,
            t_complete: 4,
            t_sparse,
            l_sketch: 2,
            l_refine: 2,
        };
        let plan = build_schedule(&params, 19, &[1, 2]).unwrap();
        let reduction = mac_reduction(&plan, &cost);
        if rel(reduction, target) > 0.15 {
            failures.push(format!(
                "t_sparse={t_sparse}: reduction {reduction:.4} outside {target} +- 15%"
            ));
        }
        got.push(reduction);
    }
    if got.windows(2).any(|w| w[0] >= w[1]) {
        failures.push(format!("reductions not strictly increasing: {got:?}"));
    }
    if start.elapsed() >= Duration::from_secs(5) {
        failures.push(format!("runtime {:?} >= 5 s", start.elapsed()));
    }
    criterion(5, "MAC reductions for t_sparse 2-5 within 15% of reference", failures);
}

fn block_cycles(graph: &NetworkGraph, range: std::ops::RangeInclusive<usize>, sc: bool) -> u64 {
    range
        .map(|i| {
            simulate_layer(&graph.layers[i], &hw(), &Im2colConfig::default(), &switches(true, true, sc))
                .unwrap()
                .cycles_total
        })
        .sum()
}

#[test]
fn criterion_06_streaming_latency_reductions() {
    let mut failures = Vec::new();
    let graph = sd14();
    let attn_targets = [(4096u64, 39.0), (1024, 24.0), (256, 14.0)];
    let ffn_targets = [25.0, 14.0, 8.0];
    let mut attn_got = Vec::new();
    let mut ffn_got = Vec::new();

    for (i, (seq, attn_target)) in attn_targets.iter().enumerate() {
        let qk = graph
            .layers
            .iter()
            .position(|y| {
                y.kind == LayerKind::AttentionQk && y.seq_len as u64 == *seq && y.kv() == *seq
            })
            .expect("self-attention block present");
        let mut j = qk;
        while !(graph.layers[j].kind == LayerKind::Linear
            && graph.layers[j].c_out == 8 * graph.layers[j].c_in)
        {
            j += 1;
        }

        let attn_reduction =
            100.0 * (1.0 - block_cycles(&graph, qk..=qk + 2, true) as f64
                / block_cycles(&graph, qk..=qk + 2, false) as f64);
        let ffn_reduction =
            100.0 * (1.0 - block_cycles(&graph, j - 1..=j + 3, true) as f64
                / block_cycles(&graph, j - 1..=j + 3, false) as f64);
        if (attn_reduction - attn_target).abs() > 10.0 {
            failures.push(format!(
                "attention L={seq}: {attn_reduction:.1}% outside {attn_target}% +- 10 pp"
            ));
        }
        if (ffn_reduction - ffn_targets[i]).abs() > 10.0 {
            failures.push(format!(
                "ffn L={seq}: {ffn_reduction:.1}% outside {}% +- 10 pp",
                ffn_targets[i]
            ));
        }
        attn_got.push(attn_reduction);
        ffn_got.push(ffn_reduction);
    }
    if attn_got.windows(2).any(|w| w[0] <= w[1]) {
        failures.push(format!("attention reductions not strictly decreasing: {attn_got:?}"));
    }
    if ffn_got.windows(2).any(|w| w[0] <= w[1]) {
        failures.push(format!("ffn reductions not strictly decreasing: {ffn_got:?}"));
    }
    criterion(6, "streaming latency reductions vs blocking (attention and FFN)", failures);
}

#[test]
fn criterion_07_traffic_savings() {
    let mut failures = Vec::new();
    let graph = sd14();
    let plan = plan_schedule(&graph, hw().global_buffer_bytes, hw().bytes_per_element).unwrap();

    let reuse_saving = 100.0 * (1.0 - plan.total_bytes as f64 / plan.baseline_bytes as f64);
    let fused_saving = 100.0 * (1.0 - plan.fused_total_bytes as f64 / plan.baseline_bytes as f64);
    if (reuse_saving - 24.3).abs() > 8.0 {
        failures.push(format!("adaptive reuse saves {reuse_saving:.1}% vs 24.3% +- 8 pp"));
    }
    if (fused_saving - 30.5).abs() > 8.0 {
        failures.push(format!("reuse+fusion saves {fused_saving:.1}% vs 30.5% +- 8 pp"));
    }
    if fused_saving <= reuse_saving {
        failures.push("fusion added no saving".into());
    }

    for lp in &plan.layers {
        let fp = Footprint {
            weight_bytes: lp.weight_bytes,
            act_in_bytes: lp.act_in_bytes,
            act_out_bytes: lp.act_out_bytes,
        };
        let fixed = fixed_traffic(&fp, plan.buffer_bytes).total();
        let input_pure = fp.act_in_bytes.div_ceil(plan.buffer_bytes).max(1) * fp.weight_bytes
            + fp.act_in_bytes
            + fp.act_out_bytes;
        if lp.traffic.total() > fixed || lp.traffic.total() > input_pure {
            failures.push(format!(
                "layer {}: chosen mode {:?} not dominant (chosen {} fixed {} input {})",
                lp.layer_id,
                lp.mode,
                lp.traffic.total(),
                fixed,
                input_pure
            ));
        }
    }
    criterion(7, "conv-stack traffic savings and reuse-mode dominance", failures);
}

#[test]
fn criterion_08_ablation_ladder_and_pas() {
    let mut failures = Vec::new();
    let graph = sd14();
    let im = Im2colConfig::default();
    let run = |sw: AblationSwitches| {
        simulate_network(&graph, &hw(), &im, &sw, None).unwrap().totals.cycles_total
    };
    let base = run(switches(false, false, false));
    let ladder = [
        (run(switches(true, false, false)), 1.24),
        (run(switches(true, true, false)), 1.37),
        (run(switches(true, true, true)), 1.65),
    ];
    let mut last = base;
    for (cycles, target) in ladder {
        if cycles >= last {
            failures.push(format!("latency did not strictly decrease at target {target}"));
        }
        let speedup = base as f64 / cycles as f64;
        if rel(speedup, target) > 0.20 {
            failures.push(format!("cumulative speedup {speedup:.3} outside {target} +- 20%"));
        }
        last = cycles;
    }

    for (t_sparse, target) in [(2u32, 2.31), (3, 2.58), (4, 2.69), (5, 3.10)] {
        let params = PlanParams {
            t_total: 50,
            t_sketch: 25,
            t_complete: 4,
            t_sparse,
            l_sketch: 2,
            l_refine: 2,
        };
        let plan = build_schedule(&params, 19, &[1, 2]).unwrap();
        let report =
            simulate_network(&graph, &hw(), &im, &AblationSwitches::default(), Some(&plan)).unwrap();
        let speedup = report.sampling.unwrap().speedup;
        if rel(speedup, target) > 0.15 {
            failures.push(format!(
                "PAS t_sparse={t_sparse}: speedup {speedup:.3} outside {target} +- 15%"
            ));
        }
    }
    criterion(8, "ablation ladder ordering/magnitudes and PAS end-to-end speedups", failures);
}

/// Brute-force two-segment SSE minimizer, independent of the library's
/// prefix-sum implementation.
fn brute_force_transition(curve: &[f64]) -> u32 {
    let sse = |xs: &[f64]| -> f64 {
        if xs.is_empty() {
            return 0.0;
        }
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - mean) * (x - mean)).sum()
    };
    let mut best = (f64::INFINITY, 1u32);
    for d in 1..curve.len() as u32 {
        let cost = sse(&curve[..d as usize]) + sse(&curve[d as usize..]);
        if cost < best.0 {
            best = (cost, d);
        }
    }
    best.1
}

#[test]
fn criterion_09_phase_detection() {
    let mut failures = Vec::new();
    let start = Instant::now();

    let configs: [(u32, &[u32], u32); 5] =
        [(50, &[1, 2], 19), (30, &[1, 2], 10), (50, &[], 25), (20, &[3], 5), (10, &[1], 4)];
    for (t_total, outliers, d_true) in configs {
        let trace = synth_trace(t_total, outliers, d_true, 0.0, 2, 42).unwrap();
        let matrix = normalize_scores(&trace);
        let found_outliers =
            detect_outliers(&matrix, DEFAULT_LATE_FRACTION, DEFAULT_OUTLIER_THRESHOLD);
        if found_outliers != outliers {
            failures.push(format!(
                "T={t_total}: outliers {found_outliers:?} != {outliers:?} (noise-free)"
            ));
        }
        let matrix = matrix.with_outliers(found_outliers);
        let d_star = find_transition(&matrix).unwrap();
        if d_star != d_true {
            failures.push(format!("T={t_total}: D*={d_star} != {d_true} (noise-free)"));
        }
        if d_star != brute_force_transition(&matrix.mean_curve) {
            failures.push(format!("T={t_total}: sweep disagrees with brute-force oracle"));
        }
    }

    let mut hits = 0;
    for seed in 0..100u64 {
        let trace = synth_trace(50, &[1, 2], 19, 0.05, 4, 1000 + seed).unwrap();
        let matrix = normalize_scores(&trace);
        let outliers = detect_outliers(&matrix, DEFAULT_LATE_FRACTION, DEFAULT_OUTLIER_THRESHOLD);
        let matrix = matrix.with_outliers(outliers);
        let d_star = find_transition(&matrix).unwrap();
        if d_star.abs_diff(19) <= 1 {
            hits += 1;
        }
    }
    if hits < 95 {
        failures.push(format!("only {hits}/100 noisy trials within +-1 of D_true"));
    }
    if start.elapsed() >= Duration::from_secs(10) {
        failures.push(format!("runtime {:?} >= 10 s", start.elapsed()));
    }
    criterion(9, "transition and outlier recovery, noise-free and at sigma 0.05", failures);
}

#[test]
fn criterion_10_global_invariants() {
    let mut failures = Vec::new();
    let graph = sd14();
    let im = Im2colConfig::default();

    for ac in [false, true] {
        for ad in [false, true] {
            for sc in [false, true] {
                let report =
                    simulate_network(&graph, &hw(), &im, &switches(ac, ad, sc), None).unwrap();
                for p in roofline_points(&report) {
                    if p.attained_mac_per_s > p.bound_mac_per_s * (1.0 + 1e-9) {
                        failures.push(format!(
                            "layer {} violates roofline under ac={ac} ad={ad} sc={sc}",
                            p.layer_id
                        ));
                    }
                }
            }
        }
    }

    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let run = Command::new(env!("CARGO_BIN_EXE_sdsim"))
            .args(["simulate", "--model", "sd14", "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        if !run.status.success() {
            failures.push("simulate run failed".into());
        }
    }
    for name in ["report.json", "layers.csv", "roofline.csv", "schedule.json"] {
        let bytes_a = fs::read(a.join(name)).unwrap();
        let bytes_b = fs::read(b.join(name)).unwrap();
        if bytes_a != bytes_b {
            failures.push(format!("{name} not byte-identical across reruns"));
        }
    }

    let plan = plan_schedule(&graph, hw().global_buffer_bytes, hw().bytes_per_element).unwrap();
    for lp in &plan.layers {
        let resident = match lp.mode {
            ReuseMode::WeightReuse => lp.weight_bytes,
            ReuseMode::InputReuse => lp.act_in_bytes,
            ReuseMode::BothTiled => 0,
        };
        if resident > plan.buffer_bytes {
            failures.push(format!("layer {} residency exceeds buffer", lp.layer_id));
        }
    }
    for group in &plan.groups {
        let members = &plan.layers[group.first..=group.last];
        let weight_sum: u64 = members.iter().map(|m| m.weight_bytes).sum();
        let io_max = members.iter().map(|m| m.act_in_bytes + m.act_out_bytes).max().unwrap();
        let within = match group.kind {
            sdsim_core::scheduler::FusionKind::CrossLayer => weight_sum <= plan.buffer_bytes,
            sdsim_core::scheduler::FusionKind::LayerByLayer => io_max <= plan.buffer_bytes,
        };
        if !within {
            failures.push(format!(
                "fusion group {:?} [{}, {}] exceeds buffer budget",
                group.kind, group.first, group.last
            ));
        }
    }
    criterion(10, "roofline bound, byte-identical reruns, buffer budgets", failures);
}
