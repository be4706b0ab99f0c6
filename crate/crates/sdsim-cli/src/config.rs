//! Run configuration: TOML file + `--set` overrides resolved against the
//! library defaults, plus trace-derived sampling inputs.

use std::fs;
use std::path::{Path, PathBuf};

use sdsim_core::phase::{
    detect_outliers, find_transition, normalize_scores, parse_trace_csv, PlanParams, SamplingPlan,
    Trace, DEFAULT_LATE_FRACTION, DEFAULT_OUTLIER_THRESHOLD,
};
use sdsim_core::phase::{build_schedule_offset, SearchConstraints};
use sdsim_core::simcore::{AblationSwitches, HardwareConfig, Im2colConfig};
use sdsim_core::workload::{ModelId, NetworkGraph};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything the config file may set. Sections and keys are type-checked
/// against the defaults; unknown keys are rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub hardware: HardwareConfig,
    pub im2col: Im2colConfig,
    pub switches: AblationSwitches,
    pub sampling: Option<SamplingConfig>,
    pub search: Option<SearchConfig>,
}

/// Sampling-plan parameters. Defaults are the reference PAS-25/4 settings;
/// `d_star`/`outliers` are only consulted when no trace supplies them.
/// `offset_full_steps` selects the alternative periodic-full placement at
/// the ends of each sparse window instead of the starts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub t_total: Option<u32>,
    pub t_sketch: u32,
    pub t_complete: u32,
    pub t_sparse: u32,
    pub l_sketch: u32,
    pub l_refine: u32,
    pub d_star: Option<u32>,
    pub outliers: Vec<u32>,
    pub offset_full_steps: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            t_total: None,
            t_sketch: 25,
            t_complete: 4,
            t_sparse: 4,
            l_sketch: 2,
            l_refine: 2,
            d_star: None,
            outliers: Vec::new(),
            offset_full_steps: false,
        }
    }
}

/// Plan-search constraints. With neither bound set the search runs
/// effectively unconstrained (every schedule has MAC reduction ≥ 1).
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub min_reduction: Option<f64>,
    pub max_block_evals: Option<u64>,
}

/// Fully resolved inputs for one command invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub graph: NetworkGraph,
    pub file: FileConfig,
    pub trace: Option<Trace>,
    pub out_dir: PathBuf,
    pub seed: u64,
}

/// Raw command-line inputs shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct RawArgs {
    pub model: Option<String>,
    pub topology: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub set: Vec<String>,
}

pub fn resolve(args: &RawArgs) -> Result<RunConfig, CliError> {
    let graph = load_graph(args)?;
    let file = load_file_config(args)?;
    let trace = match &args.trace {
        Some(path) => Some(parse_trace_csv(&read(path)?)?),
        None => None,
    };
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", args.out.display())))?;
    Ok(RunConfig { graph, file, trace, out_dir: args.out.clone(), seed: args.seed })
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_graph(args: &RawArgs) -> Result<NetworkGraph, CliError> {
    match (&args.model, &args.topology) {
        (Some(_), Some(_)) => {
            Err(CliError::Usage("pass either --model or --topology, not both".into()))
        }
        (None, Some(path)) => Ok(NetworkGraph::from_topology_json(&read(path)?)?),
        (model, None) => {
            let name = model.as_deref().unwrap_or("sd14");
            let id = ModelId::parse(name).ok_or_else(|| {
                CliError::Usage(format!("unknown model {name:?}; expected sd14, sd21base, or sdxl"))
            })?;
            Ok(NetworkGraph::builtin(id)?)
        }
    }
}

fn load_file_config(args: &RawArgs) -> Result<FileConfig, CliError> {
    let mut table: toml::Table = match &args.config {
        Some(path) => read(path)?
            .parse()
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?,
        None => toml::Table::new(),
    };
    for spec in &args.set {
        apply_set(&mut table, spec)?;
    }
    FileConfig::deserialize(table)
        .map_err(|e| CliError::Usage(format!("bad configuration: {e}")))
}

fn apply_set(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {spec:?}")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Usage(format!("--set key {path:?} has an empty segment")));
    }
    let mut current = table;
    for key in &keys[..keys.len() - 1] {
        current = current
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("--set key {key:?} is not a section")))?;
    }
    current.insert(keys[keys.len() - 1].to_string(), parse_value(raw));
    Ok(())
}

/// Parse a `--set` value with TOML scalar rules, falling back to a string.
fn parse_value(raw: &str) -> toml::Value {
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    if raw.starts_with('[') {
        if let Ok(t) = format!("v = {raw}").parse::<toml::Table>() {
            return t["v"].clone();
        }
    }
    toml::Value::String(raw.to_string())
}

/// Sampling inputs after merging the trace and the config section. The
/// trace wins for D* and outliers; an explicit `t_total` wins over the
/// trace's run length.
#[derive(Debug, Clone)]
pub struct ResolvedSampling {
    pub params: PlanParams,
    pub d_star: u32,
    pub outliers: Vec<u32>,
    pub offset_full_steps: bool,
}

impl ResolvedSampling {
    pub fn build_plan(&self) -> Result<SamplingPlan, CliError> {
        Ok(build_schedule_offset(&self.params, self.d_star, &self.outliers, self.offset_full_steps)?)
    }
}

/// `None` when neither a sampling section nor a trace was given — the
/// commands then simulate the full network every step.
pub fn resolve_sampling(cfg: &RunConfig) -> Result<Option<ResolvedSampling>, CliError> {
    if cfg.file.sampling.is_none() && cfg.trace.is_none() {
        return Ok(None);
    }
    let sc = cfg.file.sampling.clone().unwrap_or_default();
    let derived = match &cfg.trace {
        Some(trace) => {
            let matrix = normalize_scores(trace);
            let outliers =
                detect_outliers(&matrix, DEFAULT_LATE_FRACTION, DEFAULT_OUTLIER_THRESHOLD);
            let matrix = matrix.with_outliers(outliers.clone());
            let d_star = find_transition(&matrix)?;
            Some((d_star, outliers, trace.t_total))
        }
        None => None,
    };
    let d_star = derived
        .as_ref()
        .map(|(d, _, _)| *d)
        .or(sc.d_star)
        .ok_or_else(|| {
            CliError::Usage(
                "sampling requires a --trace to derive d_star from, or an explicit sampling.d_star"
                    .into(),
            )
        })?;
    let outliers = derived.as_ref().map(|(_, o, _)| o.clone()).unwrap_or_else(|| sc.outliers.clone());
    let t_total = sc.t_total.or(derived.map(|(_, _, t)| t)).unwrap_or(50);
    Ok(Some(ResolvedSampling {
        params: PlanParams {
            t_total,
            t_sketch: sc.t_sketch,
            t_complete: sc.t_complete,
            t_sparse: sc.t_sparse,
            l_sketch: sc.l_sketch,
            l_refine: sc.l_refine,
        },
        d_star,
        outliers,
        offset_full_steps: sc.offset_full_steps,
    }))
}

/// Constraints for `plan`, defaulting to the always-satisfiable reduction
/// bound so "no constraints" means an unconstrained ranking.
pub fn resolve_constraints(cfg: &RunConfig) -> SearchConstraints {
    let sc = cfg.file.search.unwrap_or_default();
    if sc.min_reduction.is_none() && sc.max_block_evals.is_none() {
        SearchConstraints { min_reduction: Some(1.0), max_block_evals: None }
    } else {
        SearchConstraints { min_reduction: sc.min_reduction, max_block_evals: sc.max_block_evals }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> toml::Table {
        toml::Table::new()
    }

    #[test]
    fn set_parses_scalars_and_paths() {
        let mut t = table();
        apply_set(&mut t, "hardware.sa_h=16").unwrap();
        apply_set(&mut t, "switches.address_centric=false").unwrap();
        apply_set(&mut t, "hardware.freq_hz=1.0e8").unwrap();
        apply_set(&mut t, "sampling.outliers=[1,2]").unwrap();
        let cfg = FileConfig::deserialize(t).unwrap();
        assert_eq!(cfg.hardware.sa_h, 16);
        assert!(!cfg.switches.address_centric);
        assert_eq!(cfg.hardware.freq_hz, 1.0e8);
        assert_eq!(cfg.sampling.unwrap().outliers, vec![1, 2]);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut t = table();
        apply_set(&mut t, "hardware.bogus=1").unwrap();
        assert!(FileConfig::deserialize(t).is_err());
        let mut t2 = table();
        apply_set(&mut t2, "nonsense.x=1").unwrap();
        assert!(FileConfig::deserialize(t2).is_err());
    }

    #[test]
    fn type_mismatch_rejected() {
        let mut t = table();
        apply_set(&mut t, "hardware.sa_h=wide").unwrap();
        assert!(FileConfig::deserialize(t).is_err());
    }

    #[test]
    fn set_requires_key_value_shape() {
        let mut t = table();
        assert!(apply_set(&mut t, "hardware.sa_h").is_err());
        assert!(apply_set(&mut t, "hardware..x=1").is_err());
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = FileConfig::default();
        assert_eq!(cfg.hardware, HardwareConfig::default());
        assert_eq!(cfg.im2col, Im2colConfig::default());
        assert_eq!(cfg.switches, AblationSwitches::default());
        assert!(cfg.sampling.is_none() && cfg.search.is_none());
        let sc = SamplingConfig::default();
        assert_eq!((sc.t_sketch, sc.t_complete, sc.t_sparse, sc.l_sketch, sc.l_refine), (25, 4, 4, 2, 2));
    }
}
