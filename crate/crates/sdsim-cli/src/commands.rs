//! The four subcommands. Each writes its artifacts into the run's output
//! directory and prints a one-line summary to stdout.

use std::fs;
use std::path::Path;

use sdsim_core::phase::{build_schedule_offset, mac_reduction, search_plan, SamplingPlan, SearchConstraints};
use sdsim_core::scheduler::{plan_schedule, SchedulePlan};
use sdsim_core::simcore::{
    roofline_points, simulate_network, AblationSwitches, HardwareConfig, Im2colConfig, SimReport,
};
use sdsim_core::workload::{cost_table, count_macs, count_param_op_macs, param_count, tensor_footprints};
use serde::Serialize;

use crate::config::{resolve_constraints, resolve_sampling, RunConfig};
use crate::CliError;

const SCHEMA_VERSION: u32 = 1;

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::write(dir.join(name), contents)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", dir.join(name).display())))
}

fn json_pretty<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct BlockMacs {
    block: String,
    macs: u64,
}

#[derive(Serialize)]
struct WorkloadSummary<'a> {
    schema_version: u32,
    model_id: &'a str,
    seed: u64,
    param_count: u64,
    mac_total: u64,
    param_op_mac_total: u64,
    per_block: Vec<BlockMacs>,
    hardware: &'a HardwareConfig,
    im2col: &'a Im2colConfig,
    switches: &'a AblationSwitches,
}

/// `workload`: MAC/parameter/footprint breakdown and the depth cost table.
pub fn cmd_workload(cfg: &RunConfig) -> Result<(), CliError> {
    let graph = &cfg.graph;
    let macs = count_macs(graph);
    let param_ops = count_param_op_macs(graph);

    let mut csv = String::from("layer_id,kind,block,macs\n");
    for (layer, m) in graph.layers.iter().zip(&macs.per_layer) {
        csv.push_str(&format!("{},{},{},{m}\n", layer.id, layer.kind.as_str(), layer.block.label()));
    }
    write_file(&cfg.out_dir, "macs.csv", &csv)?;

    let mut csv = String::from("layer_id,kind,block,weight_bytes,act_in_bytes,act_out_bytes\n");
    let footprints = tensor_footprints(graph, cfg.file.hardware.bytes_per_element);
    for (layer, fp) in graph.layers.iter().zip(&footprints) {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            layer.id,
            layer.kind.as_str(),
            layer.block.label(),
            fp.weight_bytes,
            fp.act_in_bytes,
            fp.act_out_bytes
        ));
    }
    write_file(&cfg.out_dir, "footprints.csv", &csv)?;

    let mut csv = String::from("l,f_l\n");
    for (i, f) in cost_table(graph).iter().enumerate() {
        csv.push_str(&format!("{},{f}\n", i + 1));
    }
    write_file(&cfg.out_dir, "cost_function.csv", &csv)?;

    let params = param_count(graph);
    let summary = WorkloadSummary {
        schema_version: SCHEMA_VERSION,
        model_id: graph.model_id.as_str(),
        seed: cfg.seed,
        param_count: params,
        mac_total: macs.total,
        param_op_mac_total: param_ops.total,
        per_block: graph
            .blocks
            .iter()
            .zip(&macs.per_block)
            .map(|(b, &m)| BlockMacs { block: b.label(), macs: m })
            .collect(),
        hardware: &cfg.file.hardware,
        im2col: &cfg.file.im2col,
        switches: &cfg.file.switches,
    };
    write_file(&cfg.out_dir, "summary.json", &json_pretty(&summary)?)?;

    println!(
        "model={} layers={} params={params} macs={}",
        graph.model_id.as_str(),
        graph.layers.len(),
        macs.total
    );
    Ok(())
}

#[derive(Serialize)]
struct PlanFile<'a> {
    schema_version: u32,
    model_id: &'a str,
    d_star: u32,
    outliers: &'a [u32],
    constraints: SearchConstraints,
    candidate_count: usize,
    chosen: Option<SamplingPlan>,
    mac_reduction: Option<f64>,
    reason: Option<String>,
}

const PLANS_HEADER: &str = "rank,t_total,t_complete,t_sparse,t_sketch,l_sketch,l_refine,\
                            full_steps,sketch_steps,refine_steps,block_evals,mac_reduction\n";

/// `plan`: exhaustive schedule search ranked by MAC reduction.
pub fn cmd_plan(cfg: &RunConfig) -> Result<(), CliError> {
    let sampling = resolve_sampling(cfg)?.ok_or_else(|| {
        CliError::Usage("plan requires a --trace or a [sampling] config section".into())
    })?;
    let constraints = resolve_constraints(cfg);
    let cost = cost_table(&cfg.graph);
    let candidates =
        search_plan(&constraints, &cost, sampling.d_star, &sampling.outliers, sampling.params.t_total)?;

    let mut csv = String::from(PLANS_HEADER);
    for (rank, c) in candidates.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{:.6}\n",
            rank + 1,
            c.params.t_total,
            c.params.t_complete,
            c.params.t_sparse,
            c.params.t_sketch,
            c.params.l_sketch,
            c.params.l_refine,
            c.full_steps,
            c.sketch_steps,
            c.refine_steps,
            c.block_evals,
            c.mac_reduction
        ));
    }
    write_file(&cfg.out_dir, "plans.csv", &csv)?;

    println!("d_star={} outliers={:?}", sampling.d_star, sampling.outliers);
    if candidates.is_empty() {
        let reason = "no feasible plan under the given constraints".to_string();
        let file = PlanFile {
            schema_version: SCHEMA_VERSION,
            model_id: cfg.graph.model_id.as_str(),
            d_star: sampling.d_star,
            outliers: &sampling.outliers,
            constraints,
            candidate_count: 0,
            chosen: None,
            mac_reduction: None,
            reason: Some(reason.clone()),
        };
        write_file(&cfg.out_dir, "plan.json", &json_pretty(&file)?)?;
        return Err(CliError::Infeasible(reason));
    }

    let top = &candidates[0];
    let plan = build_schedule_offset(
        &top.params,
        sampling.d_star,
        &sampling.outliers,
        sampling.offset_full_steps,
    )?;
    let reduction = mac_reduction(&plan, &cost);
    let file = PlanFile {
        schema_version: SCHEMA_VERSION,
        model_id: cfg.graph.model_id.as_str(),
        d_star: sampling.d_star,
        outliers: &sampling.outliers,
        constraints,
        candidate_count: candidates.len(),
        chosen: Some(plan),
        mac_reduction: Some(reduction),
        reason: None,
    };
    write_file(&cfg.out_dir, "plan.json", &json_pretty(&file)?)?;
    println!(
        "best: t_complete={} t_sparse={} t_sketch={} l_sketch={} l_refine={} reduction={:.4} ({} candidates)",
        top.params.t_complete,
        top.params.t_sparse,
        top.params.t_sketch,
        top.params.l_sketch,
        top.params.l_refine,
        reduction,
        candidates.len()
    );
    Ok(())
}

fn layers_csv(report: &SimReport) -> String {
    let mut csv = String::from("layer_id,cycles,dram_bytes,energy_j,intensity,attained\n");
    for s in &report.layers {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.layer_id, s.cycles_total, s.dram_bytes, s.energy_j, s.op_intensity, s.attained_mac_per_s
        ));
    }
    csv
}

fn roofline_csv(report: &SimReport) -> String {
    let mut csv = String::from("layer_id,op_intensity,attained_mac_per_s,bound_mac_per_s\n");
    for p in roofline_points(report) {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            p.layer_id, p.op_intensity, p.attained_mac_per_s, p.bound_mac_per_s
        ));
    }
    csv
}

fn run_simulation(
    cfg: &RunConfig,
    switches: &AblationSwitches,
    plan: Option<&SamplingPlan>,
) -> Result<SimReport, CliError> {
    Ok(simulate_network(&cfg.graph, &cfg.file.hardware, &cfg.file.im2col, switches, plan)?)
}

fn buffer_plan(cfg: &RunConfig) -> Result<SchedulePlan, CliError> {
    Ok(plan_schedule(
        &cfg.graph,
        cfg.file.hardware.global_buffer_bytes,
        cfg.file.hardware.bytes_per_element,
    )?)
}

/// `simulate`: one configuration, optionally under a sampling plan.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let plan = match resolve_sampling(cfg)? {
        Some(s) => Some(s.build_plan()?),
        None => None,
    };
    let report = run_simulation(cfg, &cfg.file.switches, plan.as_ref())?;
    write_file(&cfg.out_dir, "report.json", &json_pretty(&report)?)?;
    write_file(&cfg.out_dir, "layers.csv", &layers_csv(&report))?;
    write_file(&cfg.out_dir, "roofline.csv", &roofline_csv(&report))?;
    write_file(&cfg.out_dir, "schedule.json", &json_pretty(&buffer_plan(cfg)?)?)?;

    let t = &report.totals;
    match &report.sampling {
        Some(s) => println!(
            "cycles={} dram_bytes={} energy_j={:.4} run_cycles={} speedup={:.4}",
            t.cycles_total, t.dram_bytes, t.energy_j, s.run_cycles, s.speedup
        ),
        None => println!(
            "cycles={} dram_bytes={} energy_j={:.4} latency_s={:.6}",
            t.cycles_total, t.dram_bytes, t.energy_j, t.latency_s
        ),
    }
    Ok(())
}

/// The cumulative optimization ladder reported by `ablate`.
const LADDER: [(&str, AblationSwitches); 4] = [
    ("base", AblationSwitches { address_centric: false, adaptive_dataflow: false, streaming_nonlinear: false }),
    ("ac", AblationSwitches { address_centric: true, adaptive_dataflow: false, streaming_nonlinear: false }),
    ("ac_ad", AblationSwitches { address_centric: true, adaptive_dataflow: true, streaming_nonlinear: false }),
    ("full", AblationSwitches { address_centric: true, adaptive_dataflow: true, streaming_nonlinear: true }),
];

/// `ablate`: simulate the optimization ladder (config switches are
/// superseded by the grid) and, when sampling inputs are available, the
/// PAS speedup table over `t_sparse ∈ 2..=5`.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<(), CliError> {
    let mut reports = Vec::with_capacity(LADDER.len());
    for (label, switches) in &LADDER {
        let report = run_simulation(cfg, switches, None)?;
        write_file(&cfg.out_dir, &format!("report_{label}.json"), &json_pretty(&report)?)?;
        reports.push((*label, report));
    }
    let base_cycles = reports[0].1.totals.cycles_total;

    let mut csv = String::from(
        "config,address_centric,adaptive_dataflow,streaming_nonlinear,cycles,dram_bytes,energy_j,speedup_vs_base\n",
    );
    for (label, report) in &reports {
        let t = &report.totals;
        let sw = &report.switches;
        csv.push_str(&format!(
            "{label},{},{},{},{},{},{},{:.6}\n",
            sw.address_centric,
            sw.adaptive_dataflow,
            sw.streaming_nonlinear,
            t.cycles_total,
            t.dram_bytes,
            t.energy_j,
            base_cycles as f64 / t.cycles_total as f64
        ));
        println!("{label}: cycles={} speedup={:.4}", t.cycles_total, base_cycles as f64 / t.cycles_total as f64);
    }
    write_file(&cfg.out_dir, "speedups.csv", &csv)?;

    if let Some(sampling) = resolve_sampling(cfg)? {
        let mut csv = String::from("t_sparse,run_cycles,full_run_cycles,speedup\n");
        for t_sparse in 2..=5u32 {
            let mut params = sampling.params;
            params.t_sparse = t_sparse;
            let plan = build_schedule_offset(
                &params,
                sampling.d_star,
                &sampling.outliers,
                sampling.offset_full_steps,
            )?;
            let report = run_simulation(cfg, &AblationSwitches::default(), Some(&plan))?;
            let s = report.sampling.expect("sampling plan was supplied");
            csv.push_str(&format!(
                "{t_sparse},{},{},{:.6}\n",
                s.run_cycles, s.full_run_cycles, s.speedup
            ));
        }
        write_file(&cfg.out_dir, "pas_speedups.csv", &csv)?;
    }
    Ok(())
}
