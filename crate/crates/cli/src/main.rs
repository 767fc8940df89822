use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use gnnsim::compiler::{CompileOptions, DensityGrid, PartitionedMatrix};
use gnnsim::experiment::{
    compare_table, plot_csv, run_records, run_sweep, to_jsonl, ExperimentConfig, FeatureSource,
    GraphSource, ModelSource, Record, Workload,
};
use gnnsim::generate::{seeded_rng, GraphKind, GraphParams};
use gnnsim::primitives::CoreConfig;
use gnnsim::runtime::{run_inference, MappingStrategy, RunConfig};

#[derive(Parser)]
#[command(name = "gnnsim", version, about = "Sparsity-aware GNN inference compiler and accelerator simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a model and graph into an IR file plus a density sidecar.
    Compile {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        hw: HwArgs,
        /// Density the random weights are pruned to.
        #[arg(long, default_value_t = 1.0)]
        weight_density: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run inference under one strategy and write the report and embeddings.
    Run {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        hw: HwArgs,
        #[arg(long, default_value = "dynamic")]
        strategy: MappingStrategy,
        #[arg(long, default_value_t = 1.0)]
        weight_density: f64,
        /// Write embeddings in the DGRD binary format instead of text.
        #[arg(long)]
        binary: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep weight densities and strategies, then tabulate speedups.
    Compare {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        hw: HwArgs,
        #[arg(long, value_delimiter = ',', default_value = "s1,s2,dynamic")]
        strategies: Vec<MappingStrategy>,
        #[arg(long, value_delimiter = ',', default_value = "1.0,0.5,0.3,0.1,0.05")]
        weight_densities: Vec<f64>,
        /// Also write plot.csv with the speedup columns.
        #[arg(long)]
        plot: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic graph, features, model and pruned weights.
    Gen {
        #[arg(long)]
        vertices: usize,
        /// Adjacency density.
        #[arg(long)]
        density: f64,
        #[arg(long)]
        power_law: bool,
        #[arg(long)]
        symmetric: bool,
        #[arg(long, default_value_t = 2.5)]
        exponent: f64,
        #[arg(long, default_value_t = 64)]
        feature_cols: usize,
        #[arg(long, default_value_t = 0.5)]
        feature_density: f64,
        #[arg(long, default_value = "gcn2")]
        zoo: String,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        #[arg(long)]
        out_dim: Option<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1.0")]
        weight_densities: Vec<f64>,
        #[arg(long)]
        binary: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the per-block density grid of a matrix file.
    Profile {
        /// Edge list, Matrix Market (.mtx), dense text or DGRD binary.
        matrix: PathBuf,
        #[arg(long, default_value_t = 16)]
        block_rows: usize,
        #[arg(long)]
        block_cols: Option<usize>,
        /// Treat the file as a graph edge list.
        #[arg(long)]
        graph: bool,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Edge list or Matrix Market file. Without it a graph is generated.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, default_value_t = 1024)]
    gen_vertices: usize,
    #[arg(long, default_value_t = 0.005)]
    gen_density: f64,
    #[arg(long)]
    gen_power_law: bool,
    /// Dense feature file (text or DGRD binary). Without it features are random.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    feature_cols: usize,
    #[arg(long, default_value_t = 0.5)]
    feature_density: f64,
    /// Model spec TOML file.
    #[arg(long, conflicts_with = "zoo")]
    model: Option<PathBuf>,
    /// Built-in model: gcn2, sage2, gin2 or sgc2.
    #[arg(long, default_value = "gcn2")]
    zoo: String,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long)]
    out_dim: Option<usize>,
    /// Weight bundle file. Without it weights are random.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct HwArgs {
    #[arg(long, default_value_t = gnnsim::compiler::DEFAULT_CORES)]
    cores: usize,
    #[arg(long, default_value_t = 16)]
    psys: usize,
    #[arg(long, default_value_t = gnnsim::compiler::DEFAULT_ETA)]
    eta: usize,
    /// On-chip bytes per core.
    #[arg(long, default_value_t = gnnsim::compiler::DEFAULT_MEM_BUDGET)]
    mem_budget: usize,
    /// Fixed partition sizes instead of the search; both must be given.
    #[arg(long, requires = "n2")]
    n1: Option<usize>,
    #[arg(long, requires = "n1")]
    n2: Option<usize>,
    /// Charge transfers and format transforms to task time.
    #[arg(long)]
    visible_overheads: bool,
    #[arg(long, default_value_t = gnnsim::experiment::DEFAULT_CLOCK_MHZ)]
    clock_mhz: f64,
}

impl HwArgs {
    fn compile_options(&self) -> CompileOptions {
        CompileOptions {
            n_cores: self.cores,
            eta: self.eta,
            mem_budget: self.mem_budget,
            partition: self.n1.zip(self.n2),
        }
    }

    fn run_config(&self) -> RunConfig {
        RunConfig {
            core: CoreConfig::with_p_sys(self.psys),
            n_cores: self.cores,
            visible_overheads: self.visible_overheads,
            ..RunConfig::default()
        }
    }
}

fn experiment(
    input: &InputArgs,
    hw: &HwArgs,
    strategies: Vec<MappingStrategy>,
    weight_densities: Vec<f64>,
) -> ExperimentConfig {
    let graph = match &input.graph {
        Some(path) => GraphSource::File { path: path.clone() },
        None => GraphSource::Generated(GraphParams {
            kind: if input.gen_power_law {
                GraphKind::PowerLaw
            } else {
                GraphKind::ErdosRenyi
            },
            ..GraphParams::erdos_renyi(input.gen_vertices, input.gen_density)
        }),
    };
    let features = match &input.features {
        Some(path) => FeatureSource::File { path: path.clone() },
        None => FeatureSource::Random {
            cols: input.feature_cols,
            density: input.feature_density,
        },
    };
    let model = match &input.model {
        Some(path) => ModelSource::File { path: path.clone() },
        None => ModelSource::Zoo {
            id: input.zoo.clone(),
            hidden: input.hidden,
            out: input.out_dim.unwrap_or(input.hidden),
        },
    };
    ExperimentConfig {
        graph,
        features,
        model,
        weights: input.weights.clone(),
        weight_densities,
        strategies,
        compile: hw.compile_options(),
        run: hw.run_config(),
        clock_mhz: hw.clock_mhz,
        seed: input.seed,
    }
}

fn create_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_compile(input: InputArgs, hw: HwArgs, weight_density: f64, out: PathBuf) -> Result<()> {
    let cfg = experiment(&input, &hw, vec![MappingStrategy::Dynamic], vec![weight_density]);
    let work = Workload::load(&cfg)?;
    let t = Instant::now();
    let program = work.compile_at(weight_density, &cfg.compile)?;
    let elapsed = t.elapsed();
    create_dir(&out)?;
    write(&out.join("ir.json"), program.ir.to_json())?;
    write(&out.join("densities.json"), program.sidecar.to_json())?;
    println!(
        "compiled {} kernels, {} tasks, N1={} N2={} in {:.3} ms",
        program.ir.kernels.len(),
        program.ir.task_count(),
        program.n1(),
        program.n2(),
        elapsed.as_secs_f64() * 1e3
    );
    Ok(())
}

fn cmd_run(
    input: InputArgs,
    hw: HwArgs,
    strategy: MappingStrategy,
    weight_density: f64,
    binary: bool,
    out: PathBuf,
) -> Result<()> {
    let cfg = experiment(&input, &hw, vec![strategy], vec![weight_density]);
    let work = Workload::load(&cfg)?;
    let program = work.compile_at(weight_density, &cfg.compile)?;
    let result = run_inference(&program, strategy, &cfg.run)?;
    let (kernels, summary) = run_records(&work.spec.name, weight_density, &result.report, cfg.clock_mhz);
    let mut records: Vec<Record> = kernels.into_iter().map(Record::Kernel).collect();
    records.push(Record::Summary(summary.clone()));
    create_dir(&out)?;
    write(&out.join("records.jsonl"), to_jsonl(&records))?;
    let emb = out.join(if binary { "embeddings.bin" } else { "embeddings.txt" });
    gnnsim::io::save_dense(&emb, &result.output)?;
    println!(
        "{}: makespan {} cycles ({:.4} ms at {} MHz), decisions gemm={} spdmm={} spmm={} skip={}",
        summary.run_id,
        summary.makespan,
        summary.latency_ms,
        cfg.clock_mhz,
        summary.decisions.gemm,
        summary.decisions.spdmm,
        summary.decisions.spmm,
        summary.decisions.skip
    );
    Ok(())
}

fn cmd_compare(
    input: InputArgs,
    hw: HwArgs,
    strategies: Vec<MappingStrategy>,
    weight_densities: Vec<f64>,
    plot: bool,
    out: PathBuf,
) -> Result<()> {
    let cfg = experiment(&input, &hw, strategies, weight_densities);
    let t = Instant::now();
    let sweep = run_sweep(&cfg)?;
    info!("sweep finished in {:.2?}", t.elapsed());
    let table = compare_table(&sweep.compare, &sweep.geomean);
    create_dir(&out)?;
    write(&out.join("records.jsonl"), to_jsonl(&sweep.records))?;
    write(&out.join("compare.txt"), &table)?;
    if plot {
        write(&out.join("plot.csv"), plot_csv(&sweep.compare))?;
    }
    print!("{table}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    vertices: usize,
    density: f64,
    power_law: bool,
    symmetric: bool,
    exponent: f64,
    feature_cols: usize,
    feature_density: f64,
    zoo: String,
    hidden: usize,
    out_dim: Option<usize>,
    weight_densities: Vec<f64>,
    binary: bool,
    seed: u64,
    out: PathBuf,
) -> Result<()> {
    let params = GraphParams {
        kind: if power_law {
            GraphKind::PowerLaw
        } else {
            GraphKind::ErdosRenyi
        },
        vertices,
        density,
        symmetric,
        exponent,
    };
    let graph = params.generate(&mut seeded_rng(seed))?;
    let features = gnnsim::generate::random_features(
        vertices,
        feature_cols,
        feature_density,
        &mut seeded_rng(seed.wrapping_add(1)),
    )?;
    let spec = gnnsim::compiler::ModelSpec::zoo(&zoo, feature_cols, hidden, out_dim.unwrap_or(hidden))?;
    let base = gnnsim::compiler::WeightSet::random(&spec, 1.0, &mut seeded_rng(seed.wrapping_add(2)))?;

    create_dir(&out)?;
    gnnsim::io::write_edge_list(&out.join("graph.txt"), &graph)?;
    let fpath = out.join(if binary { "features.bin" } else { "features.txt" });
    gnnsim::io::save_dense(&fpath, &features)?;
    write(&out.join("model.toml"), spec.to_toml_string())?;
    for d in &weight_densities {
        let mut w = base.clone();
        for m in w.weights.values_mut() {
            gnnsim::generate::magnitude_prune(m, *d)?;
        }
        gnnsim::io::save_weights(&out.join(format!("weights_w{d}.txt")), &w)?;
    }
    println!(
        "graph: {vertices} vertices, {} edges (density {:.6}); features {}x{} with {} nonzeros",
        graph.nnz(),
        graph.nnz() as f64 / (vertices as f64 * vertices as f64).max(1.0),
        features.rows(),
        features.cols(),
        features.nnz()
    );
    Ok(())
}

fn cmd_profile(
    matrix: PathBuf,
    block_rows: usize,
    block_cols: Option<usize>,
    graph: bool,
    json: bool,
) -> Result<()> {
    if block_rows == 0 || block_cols == Some(0) {
        bail!("block sizes must be positive");
    }
    let m = if graph {
        gnnsim::io::load_graph(&matrix)?.into()
    } else {
        gnnsim::io::load_matrix(&matrix)?
    };
    let bc = block_cols.unwrap_or(block_rows);
    let p = PartitionedMatrix::partition(matrix.display().to_string(), &m, block_rows, bc)?;
    let grid: &DensityGrid = &p.densities;
    if json {
        println!("{}", serde_json::to_string_pretty(grid)?);
        return Ok(());
    }
    let (gr, gc) = grid.grid_shape();
    let total = grid.total();
    println!(
        "{}x{} matrix, {}x{} blocks of {}x{}, nnz {} (density {:.6})",
        p.rows, p.cols, gr, gc, block_rows, bc, total.nnz, total.density
    );
    for bi in 0..gr {
        let row: Vec<String> = (0..gc)
            .map(|bj| format!("{:.4}", grid.cell(bi, bj).density))
            .collect();
        println!("{}", row.join(" "));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Compile {
            input,
            hw,
            weight_density,
            out,
        } => cmd_compile(input, hw, weight_density, out),
        Command::Run {
            input,
            hw,
            strategy,
            weight_density,
            binary,
            out,
        } => cmd_run(input, hw, strategy, weight_density, binary, out),
        Command::Compare {
            input,
            hw,
            strategies,
            weight_densities,
            plot,
            out,
        } => cmd_compare(input, hw, strategies, weight_densities, plot, out),
        Command::Gen {
            vertices,
            density,
            power_law,
            symmetric,
            exponent,
            feature_cols,
            feature_density,
            zoo,
            hidden,
            out_dim,
            weight_densities,
            binary,
            seed,
            out,
        } => cmd_gen(
            vertices,
            density,
            power_law,
            symmetric,
            exponent,
            feature_cols,
            feature_density,
            zoo,
            hidden,
            out_dim,
            weight_densities,
            binary,
            seed,
            out,
        ),
        Command::Profile {
            matrix,
            block_rows,
            block_cols,
            graph,
            json,
        } => cmd_profile(matrix, block_rows, block_cols, graph, json),
    }
}
