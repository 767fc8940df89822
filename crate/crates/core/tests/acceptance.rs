//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};
use rand::Rng;

use gnnsim::compiler::{
    compile, kernel_tasks, CompileOptions, CompiledProgram, KernelType, ModelSpec, Operand,
    PartitionSizes, PartitionedMatrix, WeightSet,
};
use gnnsim::experiment::{run_sweep, ExperimentConfig};
use gnnsim::generate::{random_features, seeded_rng};
use gnnsim::matrix::{
    dense_matmul_oracle, slice_block, CooMatrix, DenseMatrix, Layout, MatrixRef,
};
use gnnsim::perf_model::region_partition_check;
use gnnsim::primitives::{exec_gemm, exec_spdmm, exec_spdmm_rhs, exec_spmm, CoreConfig};
use gnnsim::runtime::{
    decide_pair, reference_inference, run_inference, InferenceResult, MappingStrategy, RunConfig,
    Scheduler, TaskWork,
};
use gnnsim::transform::{dense_to_sparse, transform_layout};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_int_matrix<R: Rng>(rows: usize, cols: usize, density: f64, rng: &mut R) -> DenseMatrix {
    let values = (0..rows * cols)
        .map(|_| {
            if rng.gen_bool(density) {
                rng.gen_range(-4..=4) as f32
            } else {
                0.0
            }
        })
        .collect();
    DenseMatrix::new(rows, cols, Layout::RowMajor, values).unwrap()
}

fn to_layout(m: &DenseMatrix, l: Layout) -> DenseMatrix {
    match transform_layout(&MatrixRef::Dense(m.clone()), l) {
        MatrixRef::Dense(d) => d,
        MatrixRef::Coo(_) => unreachable!(),
    }
}

fn row_major_coo(m: &DenseMatrix) -> CooMatrix {
    dense_to_sparse(&m.to_row_major())
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded_rng(11);
    let cfg = CoreConfig::default();
    let cases = 1000;
    for case in 0..cases {
        let (m, n, d) = (
            rng.gen_range(1..=64),
            rng.gen_range(1..=64),
            rng.gen_range(1..=64),
        );
        let dx = [1.0, 0.5, 0.1, 0.02, 0.0][rng.gen_range(0..5)];
        let dy = [1.0, 0.5, 0.1, 0.02, 0.0][rng.gen_range(0..5)];
        let x = random_int_matrix(m, n, dx, &mut rng);
        let y = random_int_matrix(n, d, dy, &mut rng);
        let acc = random_int_matrix(m, d, 0.3, &mut rng);
        let want = dense_matmul_oracle(&x, &y).map_err(e2s)?.add(&acc).map_err(e2s)?;
        let (xs, ys) = (row_major_coo(&x), row_major_coo(&y));
        let outs = [
            ("gemm", exec_gemm(&x, &to_layout(&y, Layout::ColMajor), &acc, &cfg)),
            ("spdmm", exec_spdmm(&xs, &y, &acc, &cfg)),
            ("spdmm_rhs", exec_spdmm_rhs(&x, &ys, &acc, &cfg)),
            ("spmm", exec_spmm(&xs, &ys, &acc, &cfg)),
        ];
        for (name, out) in outs {
            let out = out.map_err(e2s)?.output;
            ensure(out.same_elements(&want), || {
                format!("case {case}: {name} differs on {m}x{n}x{d}")
            })?;
        }
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(10), || format!("took {took:?}"))?;
    Ok(format!("{cases} cases x 4 primitives exact in {took:.2?}"))
}

fn criterion_2() -> Outcome {
    let mut points = 0;
    for p in [8, 16, 32] {
        let r = region_partition_check(p, 0.01).map_err(e2s)?;
        ensure(r.violations.is_empty(), || {
            format!("p={p}: {}", r.violations.join("; "))
        })?;
        ensure(
            r.gemm_points + r.spdmm_points + r.spmm_points + r.skip_points == r.points,
            || format!("p={p}: region counts do not cover the grid"),
        )?;
        points += r.points;
    }
    Ok(format!("{points} grid points, one region each, selector is argmin"))
}

fn gcn_program(v: usize, adj_d: f64, wd: f64, seed: u64) -> CompiledProgram {
    let cfg = ExperimentConfig {
        seed,
        ..ExperimentConfig::synthetic_gcn(v, adj_d, 64, 0.5, 64, vec![wd])
    };
    let work = gnnsim::experiment::Workload::load(&cfg).unwrap();
    work.compile_at(wd, &CompileOptions::default()).unwrap()
}

fn criterion_3() -> Outcome {
    let run = RunConfig::default();
    let mut pairs = 0usize;
    for (wd, seed) in [(1.0, 3), (0.3, 4), (0.05, 5)] {
        let prog = gcn_program(1024, 0.01, wd, seed);
        let res = |s| run_inference(&prog, s, &run).map_err(e2s);
        let dynamic = res(MappingStrategy::Dynamic)?;
        for t in &dynamic.report.trace {
            let kind = prog.ir.kernels[t.kernel].layer_type;
            for s in [MappingStrategy::Static1, MappingStrategy::Static2] {
                let st = decide_pair(s, kind, t.dims, t.x_density, t.y_density, &run.core)
                    .map_err(e2s)?;
                ensure(t.decision.predicted_cycles <= st.predicted_cycles, || {
                    format!(
                        "w={wd} kernel {} task {} pair {}: dynamic {} > {s} {}",
                        t.kernel, t.task, t.pair, t.decision.predicted_cycles, st.predicted_cycles
                    )
                })?;
            }
            pairs += 1;
        }
        for s in [MappingStrategy::Static1, MappingStrategy::Static2] {
            let st = res(s)?;
            ensure(dynamic.report.predicted_cycles <= st.report.predicted_cycles, || {
                format!(
                    "w={wd}: dynamic total {} > {s} total {}",
                    dynamic.report.predicted_cycles, st.report.predicted_cycles
                )
            })?;
        }
    }
    Ok(format!("{pairs} pairs, dynamic never predicted slower than s1 or s2"))
}

fn trend_config() -> ExperimentConfig {
    ExperimentConfig {
        seed: 1,
        ..ExperimentConfig::synthetic_gcn(4096, 0.005, 64, 0.5, 64, vec![1.0, 0.5, 0.3, 0.1, 0.05])
    }
}

fn criterion_4() -> Outcome {
    let sweep = run_sweep(&trend_config()).map_err(e2s)?;
    let rows = &sweep.compare;
    let table: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "w={} s1x{:.3} s2x{:.3}",
                r.weight_density,
                r.so_s1.unwrap_or(f64::NAN),
                r.so_s2.unwrap_or(f64::NAN)
            )
        })
        .collect();
    let table = table.join(", ");
    for pair in rows.windows(2) {
        ensure(pair[0].weight_density > pair[1].weight_density, || "densities not descending".into())?;
        let (a, b) = (pair[0].so_s1.unwrap_or(f64::NAN), pair[1].so_s1.unwrap_or(f64::NAN));
        ensure(b >= a, || format!("s1 speedup not monotone: {table}"))?;
    }
    let low: Vec<_> = rows.iter().filter(|r| r.weight_density <= 0.5).collect();
    ensure(!low.is_empty(), || "no densities <= 0.5".into())?;
    for r in &low {
        let so = r.so_s1.unwrap_or(f64::NAN);
        ensure(so > 2.0, || {
            format!("s1 speedup {so:.3} not above 2 at w={}: {table}", r.weight_density)
        })?;
    }
    Ok(table)
}

fn max_rel_err(got: &DenseMatrix, want: &DenseMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..want.rows() {
        for j in 0..want.cols() {
            let (g, w) = (got.get(i, j) as f64, want.get(i, j) as f64);
            worst = worst.max((g - w).abs() / w.abs().max(1.0));
        }
    }
    worst
}

fn criterion_5() -> Outcome {
    let v = 100;
    let adjacency = gnnsim::generate::erdos_renyi(v, 0.05, true, &mut seeded_rng(21)).map_err(e2s)?;
    let features = random_features(v, 32, 0.5, &mut seeded_rng(22)).map_err(e2s)?;
    let mut worst = 0.0f64;
    for id in ["gcn2", "gin2", "sgc2", "sage2"] {
        let spec = ModelSpec::zoo(id, 32, 24, 8).map_err(e2s)?;
        let weights = WeightSet::random(&spec, 0.5, &mut seeded_rng(23)).map_err(e2s)?;
        let want = reference_inference(&spec, &adjacency, &features, &weights).map_err(e2s)?;
        let prog = compile(&spec, &adjacency, &features, &weights, &CompileOptions::default())
            .map_err(e2s)?;
        let mut first: Option<DenseMatrix> = None;
        for s in MappingStrategy::ALL {
            let out = run_inference(&prog, s, &RunConfig::default()).map_err(e2s)?.output;
            let err = max_rel_err(&out, &want);
            ensure(err <= 1e-4, || format!("{id} {s}: error {err:e}"))?;
            worst = worst.max(err);
            match &first {
                None => first = Some(out),
                Some(f) => ensure(f.same_elements(&out), || format!("{id}: {s} output differs"))?,
            }
        }
    }
    Ok(format!("4 models x 3 strategies match the oracle, max rel err {worst:e}"))
}

fn criterion_6() -> Outcome {
    let mut runner = TestRunner::new(PtConfig {
        cases: 256,
        failure_persistence: None,
        ..PtConfig::default()
    });
    let strat = (prop::collection::vec(0u64..1000, 0..=500), 1usize..=16);
    runner
        .run(&strat, |(costs, n)| {
            let work: Vec<TaskWork> = costs.iter().map(|&c| TaskWork::compute_only(c)).collect();
            let mut s = Scheduler::new(n, false);
            let k = s.run_kernel(&work);
            let sum: u64 = costs.iter().sum();
            let max = costs.iter().copied().max().unwrap_or(0);
            let span = k.makespan();
            prop_assert_eq!(k.assignments.len(), costs.len());
            prop_assert!(span >= max);
            prop_assert!(span * n as u64 >= sum);
            prop_assert!(span <= sum.div_ceil(n as u64) + max);
            if n == 1 {
                prop_assert_eq!(span, sum);
            }
            for (t, a) in k.assignments.iter().enumerate() {
                prop_assert_eq!(a.task, t);
                prop_assert_eq!(a.end - a.start, costs[t]);
            }
            for c in 0..n {
                let mut on: Vec<_> = k.assignments.iter().filter(|a| a.core == c).collect();
                on.sort_by_key(|a| a.start);
                for w in on.windows(2) {
                    prop_assert!(w[0].end <= w[1].start, "overlap on core {}", c);
                }
            }
            Ok(())
        })
        .map_err(e2s)?;
    Ok("256 random kernels: bounds, coverage and no core overlap hold".into())
}

fn criterion_7() -> Outcome {
    let mut rng = seeded_rng(31);
    for (rows, cols, br, bc) in [(1000, 70, 64, 16), (37, 37, 16, 16), (64, 64, 64, 64), (5, 300, 16, 32)] {
        let m = random_int_matrix(rows, cols, 0.1, &mut rng);
        for mref in [MatrixRef::Dense(m.clone()), MatrixRef::Coo(dense_to_sparse(&m))] {
            let p = PartitionedMatrix::partition("m", &mref, br, bc).map_err(e2s)?;
            ensure(p.nnz() == m.nnz(), || format!("{rows}x{cols}: nnz {} != {}", p.nnz(), m.nnz()))?;
            ensure(p.densities.total().nnz == m.nnz(), || "profiled nnz differs".into())?;
            ensure(p.assemble().map_err(e2s)?.same_elements(&m), || {
                format!("{rows}x{cols} by {br}x{bc}: reassembly differs")
            })?;
        }
    }
    let spec = ModelSpec::zoo("gcn2", 70, 40, 24).map_err(e2s)?;
    let graph = gnnsim::compiler::build_computation_graph(&spec).map_err(e2s)?;
    let (v, n1, n2) = (1000usize, 64usize, 16usize);
    let sizes = PartitionSizes { n1, n2, n_max: 512 };
    for (id, node) in graph.kernels.iter().enumerate() {
        let tasks = kernel_tasks(node, v, sizes);
        let (count, k) = match node.kernel_type() {
            KernelType::Aggregate => (v.div_ceil(n1) * node.f_in.div_ceil(n2), v.div_ceil(n1)),
            KernelType::Update => (v.div_ceil(n2) * node.f_out.div_ceil(n2), node.f_in.div_ceil(n2)),
            KernelType::ElementwiseAdd => (v.div_ceil(n2) * node.f_out.div_ceil(n2), 0),
        };
        ensure(tasks.len() == count, || {
            format!("kernel {}: {} tasks, expected {count}", id, tasks.len())
        })?;
        ensure(tasks.iter().all(|t| t.k() == k), || format!("kernel {id}: chain length"))?;
        let covered: usize = tasks.iter().map(|t| t.out_elements()).sum();
        ensure(covered == v * node.f_out, || format!("kernel {id}: output not tiled"))?;
    }
    Ok("nnz conserved, blocks reassemble, ragged task counts match".into())
}

fn operand_matrix(prog: &CompiledProgram, res: &InferenceResult, op: &Operand) -> MatrixRef {
    match op {
        Operand::Adjacency { index } => MatrixRef::Dense(prog.adjacency[*index].assemble().unwrap()),
        Operand::Feature { index } => MatrixRef::Dense(res.features[*index].clone()),
        Operand::Weight { name } => MatrixRef::Dense(prog.weights[name].assemble().unwrap()),
    }
}

fn criterion_8() -> Outcome {
    let (v, clique) = (256usize, 64usize);
    let edges = (0..v).flat_map(|i| {
        let base = i / clique * clique;
        (base..base + clique).filter(move |&j| j != i).map(move |j| (i, j, 1.0f32))
    });
    let adjacency = CooMatrix::from_triplets(v, v, Layout::RowMajor, edges).map_err(e2s)?;
    let features = random_features(v, 64, 0.6, &mut seeded_rng(41)).map_err(e2s)?;
    let spec = ModelSpec::zoo("gcn2", 64, 64, 64).map_err(e2s)?;
    let weights = WeightSet::random(&spec, 1.0, &mut seeded_rng(42)).map_err(e2s)?;
    let opts = CompileOptions {
        partition: Some((clique, clique)),
        ..CompileOptions::default()
    };
    let prog = compile(&spec, &adjacency, &features, &weights, &opts).map_err(e2s)?;
    let grid = &prog.adjacency[0].densities;
    let empty = grid.cells.iter().filter(|c| c.nnz == 0).count();
    ensure(empty * 4 == grid.cells.len() * 3, || {
        format!("{empty} of {} adjacency blocks empty", grid.cells.len())
    })?;

    let run = RunConfig::default();
    let dynamic = run_inference(&prog, MappingStrategy::Dynamic, &run).map_err(e2s)?;
    let mut brute = 0u64;
    for k in &prog.ir.kernels {
        for t in &k.scheme.tasks {
            for p in &t.pairs {
                let x = slice_block(&operand_matrix(&prog, &dynamic, &p.x.operand), p.x.rows.clone(), p.x.cols.clone())
                    .map_err(e2s)?;
                let y = slice_block(&operand_matrix(&prog, &dynamic, &p.y.operand), p.y.rows.clone(), p.y.cols.clone())
                    .map_err(e2s)?;
                if x.nnz() == 0 || y.nnz() == 0 {
                    brute += 1;
                }
            }
        }
    }
    let skips = dynamic.report.histogram.skip;
    ensure(skips == brute, || format!("skipped {skips} pairs, {brute} are empty"))?;
    ensure(skips > 0, || "nothing skipped".into())?;
    let mut spans = Vec::new();
    for s in [MappingStrategy::Static1, MappingStrategy::Static2] {
        let st = run_inference(&prog, s, &run).map_err(e2s)?.report;
        ensure(st.histogram.skip == 0, || format!("{s} skipped a pair"))?;
        ensure(dynamic.report.makespan < st.makespan, || {
            format!("dynamic {} not below {s} {}", dynamic.report.makespan, st.makespan)
        })?;
        spans.push(st.makespan);
    }
    Ok(format!(
        "{skips} empty pairs skipped; makespan dynamic {} vs s1 {} s2 {}",
        dynamic.report.makespan, spans[0], spans[1]
    ))
}

fn criterion_9() -> Outcome {
    let v = 300;
    let adjacency = gnnsim::generate::erdos_renyi(v, 0.02, false, &mut seeded_rng(51)).map_err(e2s)?;
    let features = random_features(v, 48, 0.4, &mut seeded_rng(52)).map_err(e2s)?;
    let mut tasks = 0usize;
    for id in ["gcn2", "gin2", "sgc2", "sage2"] {
        let spec = ModelSpec::zoo(id, 48, 40, 16).map_err(e2s)?;
        let weights = WeightSet::random(&spec, 0.2, &mut seeded_rng(53)).map_err(e2s)?;
        let opts = CompileOptions {
            partition: Some((64, 16)),
            ..CompileOptions::default()
        };
        let prog = compile(&spec, &adjacency, &features, &weights, &opts).map_err(e2s)?;
        for s in MappingStrategy::ALL {
            let rep = run_inference(&prog, s, &RunConfig::default()).map_err(e2s)?.report;
            let expected: usize = prog.ir.kernels.iter().map(|k| k.scheme.tasks.len()).sum();
            ensure(rep.task_counters.len() == expected, || format!("{id} {s}: task count"))?;
            for c in &rep.task_counters {
                let k = prog.ir.kernels[c.kernel].scheme.tasks[c.task].k();
                ensure(c.k == k && c.decisions == k, || {
                    format!("{id} {s} kernel {} task {}: K={k} decisions={}", c.kernel, c.task, c.decisions)
                })?;
            }
            let total: usize = rep.task_counters.iter().map(|c| c.decisions).sum();
            ensure(total as u64 == rep.analyzer_decisions, || format!("{id} {s}: decision total"))?;
            ensure(rep.histogram.total() == rep.analyzer_decisions, || format!("{id} {s}: histogram total"))?;
            tasks += rep.task_counters.len();
        }
    }
    Ok(format!("{tasks} tasks, one decision per pair"))
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let sweep = run_sweep(&trend_config()).map_err(e2s)?;
    let took = start.elapsed();
    ensure(sweep.summaries.len() == 15, || format!("{} cells", sweep.summaries.len()))?;
    ensure(took < Duration::from_secs(300), || format!("took {took:?}"))?;
    Ok(format!("3 strategies x 5 densities in {took:.2?}"))
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "primitive equivalence", criterion_1),
        (2, "region partition", criterion_2),
        (3, "per-pair dominance", criterion_3),
        (4, "speedup trend", criterion_4),
        (5, "end-to-end correctness", criterion_5),
        (6, "scheduler properties", criterion_6),
        (7, "partition conservation", criterion_7),
        (8, "empty-block skipping", criterion_8),
        (9, "decision count", criterion_9),
        (10, "sweep runtime", criterion_10),
    ];
    let filter: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS criterion {n} ({name}): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
