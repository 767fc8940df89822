//! Strategy sweeps and their line-delimited records.
//!
//! A sweep compiles one program per weight density and runs it under every
//! requested strategy. Results are written as JSON lines, one object per
//! line, each tagged by `record`:
//!
//! * `kernel`: per-kernel cycles and decision histogram of one run
//! * `summary`: totals of one run
//! * `compare`: makespans per strategy at one weight density, with
//!   `so_s1 = s1 / dynamic` and `so_s2 = s2 / dynamic`
//! * `geomean`: geometric means of the speedup columns
//!
//! Every record carries `schema_version`. The `latency_ms`, `mean_utilization`,
//! `compare` and `geomean` fields are derived and can be recomputed from the
//! rest with [`recompute`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compiler::{compile, CompileOptions, CompiledProgram, KernelType, ModelSpec, WeightSet};
use crate::error::{Error, Result};
use crate::generate::{random_features, seeded_rng, GraphParams};
use crate::matrix::{CooMatrix, DenseMatrix};
use crate::runtime::{cycles_to_ms, run_inference, DecisionHistogram, MappingStrategy, RunConfig, SimReport};

pub const RECORD_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_CLOCK_MHZ: f64 = 250.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum GraphSource {
    File { path: PathBuf },
    Generated(GraphParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum FeatureSource {
    File { path: PathBuf },
    Random { cols: usize, density: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ModelSource {
    File { path: PathBuf },
    Zoo { id: String, hidden: usize, out: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    pub features: FeatureSource,
    pub model: ModelSource,
    /// Weight file; when absent weights are drawn from `seed`.
    pub weights: Option<PathBuf>,
    /// Random weights are magnitude-pruned to each of these densities.
    pub weight_densities: Vec<f64>,
    pub strategies: Vec<MappingStrategy>,
    pub compile: CompileOptions,
    pub run: RunConfig,
    pub clock_mhz: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Two-layer GCN on a uniform random graph.
    pub fn synthetic_gcn(
        vertices: usize,
        adjacency_density: f64,
        feature_cols: usize,
        feature_density: f64,
        hidden: usize,
        weight_densities: Vec<f64>,
    ) -> Self {
        Self {
            graph: GraphSource::Generated(GraphParams::erdos_renyi(vertices, adjacency_density)),
            features: FeatureSource::Random {
                cols: feature_cols,
                density: feature_density,
            },
            model: ModelSource::Zoo {
                id: "gcn2".into(),
                hidden,
                out: hidden,
            },
            weights: None,
            weight_densities,
            strategies: MappingStrategy::ALL.to_vec(),
            compile: CompileOptions::default(),
            run: RunConfig::default(),
            clock_mhz: DEFAULT_CLOCK_MHZ,
            seed: 0,
        }
    }
}

/// Inputs shared by every cell of a sweep.
#[derive(Debug, Clone)]
pub struct Workload {
    pub spec: ModelSpec,
    pub adjacency: CooMatrix,
    pub features: DenseMatrix,
    /// Unpruned weights.
    pub weights: WeightSet,
    pub weights_fixed: bool,
}

impl Workload {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let adjacency = match &cfg.graph {
            GraphSource::File { path } => crate::io::load_graph(path)?,
            GraphSource::Generated(p) => p.generate(&mut seeded_rng(cfg.seed))?,
        };
        let features = match &cfg.features {
            FeatureSource::File { path } => crate::io::load_dense(path)?,
            FeatureSource::Random { cols, density } => random_features(
                adjacency.rows(),
                *cols,
                *density,
                &mut seeded_rng(cfg.seed.wrapping_add(1)),
            )?,
        };
        let spec = match &cfg.model {
            ModelSource::File { path } => ModelSpec::load(path)?,
            ModelSource::Zoo { id, hidden, out } => {
                ModelSpec::zoo(id, features.cols(), *hidden, *out)?
            }
        };
        let (weights, weights_fixed) = match &cfg.weights {
            Some(path) => (crate::io::load_weights(path)?, true),
            None => (
                WeightSet::random(&spec, 1.0, &mut seeded_rng(cfg.seed.wrapping_add(2)))?,
                false,
            ),
        };
        Ok(Self {
            spec,
            adjacency,
            features,
            weights,
            weights_fixed,
        })
    }

    pub fn weights_at(&self, density: f64) -> Result<WeightSet> {
        let mut w = self.weights.clone();
        if !self.weights_fixed {
            for m in w.weights.values_mut() {
                crate::generate::magnitude_prune(m, density)?;
            }
        }
        Ok(w)
    }

    pub fn compile_at(&self, density: f64, opts: &CompileOptions) -> Result<CompiledProgram> {
        compile(
            &self.spec,
            &self.adjacency,
            &self.features,
            &self.weights_at(density)?,
            opts,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRecord {
    pub schema_version: u32,
    pub run_id: String,
    pub strategy: MappingStrategy,
    pub weight_density: f64,
    pub kernel_id: usize,
    pub layer_type: KernelType,
    pub cycles: u64,
    pub predicted_cycles: u64,
    pub executed_cycles: u64,
    pub decisions: DecisionHistogram,
    pub makespan: u64,
    pub clock_mhz: f64,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub schema_version: u32,
    pub run_id: String,
    pub strategy: MappingStrategy,
    pub weight_density: f64,
    pub n_cores: usize,
    pub p_sys: usize,
    pub makespan: u64,
    pub predicted_cycles: u64,
    pub executed_cycles: u64,
    pub epilogue_cycles: u64,
    pub switch_cycles: u64,
    pub transform_cycles: u64,
    pub transfer_cycles: u64,
    pub analyzer_decisions: u64,
    pub decisions: DecisionHistogram,
    pub core_busy_cycles: Vec<u64>,
    pub clock_mhz: f64,
    pub latency_ms: f64,
    pub mean_utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRecord {
    pub schema_version: u32,
    pub weight_density: f64,
    pub makespans: BTreeMap<MappingStrategy, u64>,
    pub so_s1: Option<f64>,
    pub so_s2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeomeanRecord {
    pub schema_version: u32,
    pub so_s1: Option<f64>,
    pub so_s2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum Record {
    Kernel(KernelRecord),
    Summary(SummaryRecord),
    Compare(CompareRecord),
    Geomean(GeomeanRecord),
}

pub fn run_id(model: &str, density: f64, strategy: MappingStrategy) -> String {
    format!("{model}/w{density}/{strategy}")
}

fn mean_utilization(busy: &[u64], makespan: u64) -> f64 {
    if makespan == 0 || busy.is_empty() {
        return 0.0;
    }
    busy.iter().map(|&b| b as f64 / makespan as f64).sum::<f64>() / busy.len() as f64
}

pub fn run_records(
    model: &str,
    density: f64,
    report: &SimReport,
    clock_mhz: f64,
) -> (Vec<KernelRecord>, SummaryRecord) {
    let id = run_id(model, density, report.strategy);
    let latency = report.latency_ms(clock_mhz);
    let kernels = report
        .kernels
        .iter()
        .map(|k| KernelRecord {
            schema_version: RECORD_SCHEMA_VERSION,
            run_id: id.clone(),
            strategy: report.strategy,
            weight_density: density,
            kernel_id: k.kernel_id,
            layer_type: k.layer_type,
            cycles: k.makespan,
            predicted_cycles: k.predicted_cycles,
            executed_cycles: k.executed_cycles,
            decisions: k.histogram,
            makespan: report.makespan,
            clock_mhz,
            latency_ms: latency,
        })
        .collect();
    let busy: Vec<u64> = report.cores.iter().map(|c| c.busy_cycles).collect();
    let summary = SummaryRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        run_id: id,
        strategy: report.strategy,
        weight_density: density,
        n_cores: report.n_cores,
        p_sys: report.p_sys,
        makespan: report.makespan,
        predicted_cycles: report.predicted_cycles,
        executed_cycles: report.executed_cycles,
        epilogue_cycles: report.epilogue_cycles,
        switch_cycles: report.switch_cycles,
        transform_cycles: report.transform_cycles,
        transfer_cycles: report.transfer_cycles,
        analyzer_decisions: report.analyzer_decisions,
        decisions: report.histogram,
        mean_utilization: mean_utilization(&busy, report.makespan),
        core_busy_cycles: busy,
        clock_mhz,
        latency_ms: latency,
    };
    (kernels, summary)
}

fn ratio(num: Option<&u64>, den: Option<&u64>) -> Option<f64> {
    match (num, den) {
        (Some(&n), Some(&d)) if d > 0 => Some(n as f64 / d as f64),
        _ => None,
    }
}

fn geomean(vals: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = vals.collect::<Option<Vec<f64>>>()?;
    if v.is_empty() {
        return None;
    }
    Some((v.iter().map(|x| x.ln()).sum::<f64>() / v.len() as f64).exp())
}

/// Compare rows, in first-seen density order, plus their geometric mean.
pub fn compare_rows(summaries: &[SummaryRecord]) -> (Vec<CompareRecord>, GeomeanRecord) {
    let mut order: Vec<f64> = Vec::new();
    let mut cells: Vec<BTreeMap<MappingStrategy, u64>> = Vec::new();
    for s in summaries {
        let i = match order.iter().position(|&d| d == s.weight_density) {
            Some(i) => i,
            None => {
                order.push(s.weight_density);
                cells.push(BTreeMap::new());
                order.len() - 1
            }
        };
        cells[i].insert(s.strategy, s.makespan);
    }
    let rows: Vec<CompareRecord> = order
        .into_iter()
        .zip(cells)
        .map(|(d, m)| {
            let dy = m.get(&MappingStrategy::Dynamic);
            CompareRecord {
                schema_version: RECORD_SCHEMA_VERSION,
                weight_density: d,
                so_s1: ratio(m.get(&MappingStrategy::Static1), dy),
                so_s2: ratio(m.get(&MappingStrategy::Static2), dy),
                makespans: m,
            }
        })
        .collect();
    let g = GeomeanRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        so_s1: geomean(rows.iter().map(|r| r.so_s1)),
        so_s2: geomean(rows.iter().map(|r| r.so_s2)),
    };
    (rows, g)
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub records: Vec<Record>,
    pub summaries: Vec<SummaryRecord>,
    pub compare: Vec<CompareRecord>,
    pub geomean: GeomeanRecord,
    pub reports: Vec<(f64, SimReport)>,
}

/// Runs every (weight density, strategy) cell. Cells run on the rayon pool;
/// results come back in density order, then strategy order.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    if cfg.strategies.is_empty() {
        return Err(Error::config("no strategies requested"));
    }
    if cfg.weight_densities.is_empty() {
        return Err(Error::config("no weight densities requested"));
    }
    if !(cfg.clock_mhz > 0.0) {
        return Err(Error::config("clock must be positive"));
    }
    let work = Workload::load(cfg)?;
    let programs = cfg
        .weight_densities
        .par_iter()
        .map(|&d| work.compile_at(d, &cfg.compile))
        .collect::<Result<Vec<_>>>()?;
    let mut strategies = cfg.strategies.clone();
    strategies.sort();
    strategies.dedup();
    let cells: Vec<(usize, MappingStrategy)> = (0..programs.len())
        .flat_map(|i| strategies.iter().map(move |&s| (i, s)))
        .collect();
    let reports = cells
        .par_iter()
        .map(|&(i, s)| run_inference(&programs[i], s, &cfg.run).map(|r| (i, r.report)))
        .collect::<Result<Vec<_>>>()?;

    let model = work.spec.name.clone();
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for (i, rep) in &reports {
        let d = cfg.weight_densities[*i];
        let (ks, s) = run_records(&model, d, rep, cfg.clock_mhz);
        records.extend(ks.into_iter().map(Record::Kernel));
        records.push(Record::Summary(s.clone()));
        summaries.push(s);
    }
    let (compare, geomean) = compare_rows(&summaries);
    records.extend(compare.iter().cloned().map(Record::Compare));
    records.push(Record::Geomean(geomean.clone()));
    Ok(SweepResult {
        records,
        summaries,
        compare,
        geomean,
        reports: reports
            .into_iter()
            .map(|(i, r)| (cfg.weight_densities[i], r))
            .collect(),
    })
}

pub fn to_jsonl(records: &[Record]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_jsonl(text: &str) -> Result<Vec<Record>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let r: Record = serde_json::from_str(l)
                .map_err(|e| Error::Format(format!("record line {}: {e}", i + 1)))?;
            let v = match &r {
                Record::Kernel(k) => k.schema_version,
                Record::Summary(s) => s.schema_version,
                Record::Compare(c) => c.schema_version,
                Record::Geomean(g) => g.schema_version,
            };
            if v != RECORD_SCHEMA_VERSION {
                return Err(Error::Format(format!(
                    "record line {}: unsupported schema_version {v}",
                    i + 1
                )));
            }
            Ok(r)
        })
        .collect()
}

/// Rebuilds every derived field from the measured ones. Compare and geomean
/// records are regenerated from the summaries and placed after them.
pub fn recompute(records: &[Record]) -> Vec<Record> {
    let mut out = Vec::with_capacity(records.len());
    let mut summaries = Vec::new();
    for r in records {
        match r {
            Record::Kernel(k) => {
                let mut k = k.clone();
                k.latency_ms = cycles_to_ms(k.makespan, k.clock_mhz);
                out.push(Record::Kernel(k));
            }
            Record::Summary(s) => {
                let mut s = s.clone();
                s.latency_ms = cycles_to_ms(s.makespan, s.clock_mhz);
                s.mean_utilization = mean_utilization(&s.core_busy_cycles, s.makespan);
                summaries.push(s.clone());
                out.push(Record::Summary(s));
            }
            Record::Compare(_) | Record::Geomean(_) => {}
        }
    }
    let (rows, g) = compare_rows(&summaries);
    if records
        .iter()
        .any(|r| matches!(r, Record::Compare(_) | Record::Geomean(_)))
    {
        out.extend(rows.into_iter().map(Record::Compare));
        out.push(Record::Geomean(g));
    }
    out
}

fn fmt_speedup(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

/// Aligned human-readable comparison table.
pub fn compare_table(rows: &[CompareRecord], geo: &GeomeanRecord) -> String {
    let strategies: Vec<MappingStrategy> = MappingStrategy::ALL
        .into_iter()
        .filter(|s| rows.iter().any(|r| r.makespans.contains_key(s)))
        .collect();
    let mut header = vec!["w_density".to_string()];
    header.extend(strategies.iter().map(|s| format!("{s}_cycles")));
    header.push("SO-S1".into());
    header.push("SO-S2".into());
    let mut body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut line = vec![format!("{}", r.weight_density)];
            line.extend(strategies.iter().map(|s| {
                r.makespans
                    .get(s)
                    .map_or_else(|| "-".to_string(), |c| c.to_string())
            }));
            line.push(fmt_speedup(r.so_s1));
            line.push(fmt_speedup(r.so_s2));
            line
        })
        .collect();
    let mut geo_line = vec!["geomean".to_string()];
    geo_line.extend(strategies.iter().map(|_| String::new()));
    geo_line.push(fmt_speedup(geo.so_s1));
    geo_line.push(fmt_speedup(geo.so_s2));
    body.push(geo_line);
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            body.iter()
                .map(|l| l[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for line in std::iter::once(&header).chain(body.iter()) {
        let cells: Vec<String> = line
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, w))| {
                if c == 0 {
                    format!("{s:<w$}")
                } else {
                    format!("{s:>w$}")
                }
            })
            .collect();
        writeln!(out, "{}", cells.join("  ").trim_end()).unwrap();
    }
    out
}

/// `weight_density,so_s1,so_s2` rows for plotting.
pub fn plot_csv(rows: &[CompareRecord]) -> String {
    let mut out = String::from("weight_density,so_s1,so_s2\n");
    for r in rows {
        let f = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        writeln!(out, "{},{},{}", r.weight_density, f(r.so_s1), f(r.so_s2)).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::synthetic_gcn(96, 0.05, 16, 0.5, 16, vec![1.0, 0.1]);
        c.seed = 5;
        c
    }

    #[test]
    fn sweep_shapes() {
        let r = run_sweep(&small()).unwrap();
        assert_eq!(r.summaries.len(), 6);
        assert_eq!(r.compare.len(), 2);
        assert!(r.compare.iter().all(|c| c.so_s1.is_some() && c.so_s2.is_some()));
        let table = compare_table(&r.compare, &r.geomean);
        assert_eq!(table.lines().count(), 4);
        assert!(table.starts_with("w_density"));
    }

    #[test]
    fn records_recompute_exactly() {
        let r = run_sweep(&small()).unwrap();
        let text = to_jsonl(&r.records);
        let back = parse_jsonl(&text).unwrap();
        assert_eq!(to_jsonl(&recompute(&back)), text);
    }

    #[test]
    fn single_strategy_has_no_speedups() {
        let mut c = small();
        c.strategies = vec![MappingStrategy::Dynamic];
        let r = run_sweep(&c).unwrap();
        assert!(r.compare.iter().all(|c| c.so_s1.is_none()));
        assert_eq!(r.geomean.so_s1, None);
    }

    #[test]
    fn same_seed_same_records() {
        let a = to_jsonl(&run_sweep(&small()).unwrap().records);
        let b = to_jsonl(&run_sweep(&small()).unwrap().records);
        assert_eq!(a, b);
    }

    #[test]
    fn bad_version_rejected() {
        let line = r#"{"record":"geomean","schema_version":9,"so_s1":null,"so_s2":null}"#;
        assert!(parse_jsonl(line).is_err());
    }
}
