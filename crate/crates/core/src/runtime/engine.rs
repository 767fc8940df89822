//! Kernel-by-kernel execution of a compiled program on the simulated cores.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::analyzer::{analyze_task, AnalyzedPair, DensityStore, MappingStrategy};
use super::report::{CoreReport, DecisionHistogram, KernelReport, PairTrace, SimReport, TaskCounter};
use super::scheduler::{Scheduler, TaskWork};
use crate::compiler::{
    BlockRef, CompiledProgram, DensityGrid, KernelIR, KernelType, Operand, TaskDescriptor,
};
use crate::error::{Error, Result};
use crate::matrix::{slice_block, CooMatrix, DenseMatrix, Layout, MatrixRef};
use crate::perf_model::SparseOperand;
use crate::primitives::{
    exec_gemm, exec_spdmm, exec_spdmm_rhs, exec_spmm, CoreConfig, ExecResult, PrimitiveKind,
};
use crate::transform::{
    dense_to_sparse, sparse_to_dense, transform_cycle_cost, transform_layout, TransformKind,
};

/// 77 GB/s of off-chip bandwidth at a 250 MHz core clock.
pub const DEFAULT_BYTES_PER_CYCLE: f64 = 308.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub core: CoreConfig,
    pub n_cores: usize,
    pub visible_overheads: bool,
    pub bytes_per_cycle: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            core: CoreConfig::default(),
            n_cores: crate::compiler::DEFAULT_CORES,
            visible_overheads: false,
            bytes_per_cycle: DEFAULT_BYTES_PER_CYCLE,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.core.validate()?;
        if self.n_cores == 0 {
            return Err(Error::config("at least one core is required"));
        }
        if !(self.bytes_per_cycle > 0.0) {
            return Err(Error::config("bandwidth must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub output: DenseMatrix,
    pub report: SimReport,
    /// Every feature slot, input first.
    pub features: Vec<DenseMatrix>,
    /// Densities as the runtime last saw them.
    pub densities: DensityStore,
}

struct Ctx<'a> {
    program: &'a CompiledProgram,
    features: &'a [Option<MatrixRef>],
    densities: &'a DensityStore,
    strategy: MappingStrategy,
    cfg: &'a RunConfig,
}

struct TaskOutcome {
    block: DenseMatrix,
    work: TaskWork,
    pairs: Vec<(AnalyzedPair, u64)>,
    predicted: u64,
    executed: u64,
    epilogue: u64,
}

fn matrix_bytes(m: &MatrixRef) -> u64 {
    match m {
        MatrixRef::Dense(d) => 4 * d.len() as u64,
        MatrixRef::Coo(c) => 12 * c.nnz() as u64,
    }
}

/// Format and layout conversions, with their streaming costs tallied.
struct Converter {
    lane: usize,
    cycles: u64,
}

impl Converter {
    fn charge(&mut self, kind: TransformKind, elements: usize) {
        self.cycles += transform_cycle_cost(kind, elements, self.lane);
    }

    fn dense<'m>(&mut self, m: &'m MatrixRef) -> Result<Cow<'m, DenseMatrix>> {
        let d = match m {
            MatrixRef::Dense(d) => Cow::Borrowed(d),
            MatrixRef::Coo(c) => {
                self.charge(TransformKind::S2D, c.rows() * c.cols());
                Cow::Owned(sparse_to_dense(c)?)
            }
        };
        if d.layout() == Layout::RowMajor {
            Ok(d)
        } else {
            self.charge(TransformKind::LayoutFlip, d.len());
            Ok(Cow::Owned(d.to_row_major()))
        }
    }

    fn col_major(&mut self, d: &DenseMatrix) -> DenseMatrix {
        self.charge(TransformKind::LayoutFlip, d.len());
        match transform_layout(&MatrixRef::Dense(d.clone()), Layout::ColMajor) {
            MatrixRef::Dense(c) => c,
            MatrixRef::Coo(_) => unreachable!(),
        }
    }

    fn coo<'m>(&mut self, m: &'m MatrixRef) -> Cow<'m, CooMatrix> {
        let c = match m {
            MatrixRef::Coo(c) => Cow::Borrowed(c),
            MatrixRef::Dense(d) => {
                self.charge(TransformKind::D2S, d.len());
                Cow::Owned(dense_to_sparse(d))
            }
        };
        if c.layout() == Layout::RowMajor {
            c
        } else {
            self.charge(TransformKind::LayoutFlip, c.nnz());
            match transform_layout(&MatrixRef::Coo(c.into_owned()), Layout::RowMajor) {
                MatrixRef::Coo(r) => Cow::Owned(r),
                MatrixRef::Dense(_) => unreachable!(),
            }
        }
    }
}

impl Ctx<'_> {
    fn fetch(&self, b: &BlockRef) -> Result<Cow<'_, MatrixRef>> {
        let m = match &b.operand {
            Operand::Adjacency { index } => {
                let p = self.program.adjacency.get(*index).ok_or_else(|| {
                    Error::shape(format!("no adjacency slot {index}"))
                })?;
                Cow::Borrowed(p.block_at(b.rows.start, b.cols.start)?)
            }
            Operand::Weight { name } => {
                let p = self
                    .program
                    .weights
                    .get(name)
                    .ok_or_else(|| Error::config(format!("missing weight matrix '{name}'")))?;
                Cow::Borrowed(p.block_at(b.rows.start, b.cols.start)?)
            }
            Operand::Feature { index } => {
                let h = self
                    .features
                    .get(*index)
                    .and_then(Option::as_ref)
                    .ok_or_else(|| {
                        Error::RuntimeOrder(format!("feature slot H{index} read before it was written"))
                    })?;
                Cow::Owned(slice_block(h, b.rows.clone(), b.cols.clone())?)
            }
        };
        if m.shape() != b.shape() {
            return Err(Error::shape(format!(
                "block {} {:?}x{:?} does not match the stored partition {:?}",
                b.operand,
                b.rows,
                b.cols,
                m.shape()
            )));
        }
        Ok(m)
    }

    fn run_task(&self, kernel: &KernelIR, task: &TaskDescriptor) -> Result<TaskOutcome> {
        let cfg = &self.cfg.core;
        let p2 = (cfg.p_sys * cfg.p_sys) as u64;
        let elems = task.out_elements();
        let mut conv = Converter {
            lane: cfg.lane_width,
            cycles: 0,
        };
        let mut bytes = 4 * elems as u64;
        let mut epilogue = 0u64;
        let mut kinds = Vec::with_capacity(task.k());
        let mut traced = Vec::with_capacity(task.k());
        let (mut predicted, mut executed) = (0u64, 0u64);

        let mut acc = DenseMatrix::zeros(task.out_rows.len(), task.out_cols.len());
        if kernel.layer_type == KernelType::ElementwiseAdd {
            for b in &task.addends {
                let m = self.fetch(b)?;
                bytes += matrix_bytes(&m);
                let md = conv.dense(&m)?;
                acc = acc.add(&md)?;
            }
            epilogue += (elems as u64).div_ceil(p2);
        }

        let analyzed = analyze_task(task, kernel.layer_type, self.densities, self.strategy, cfg)?;
        for (pair, a) in task.pairs.iter().zip(analyzed) {
            let d = a.decision;
            predicted += d.predicted_cycles;
            let Some(kind) = d.choice.primitive() else {
                traced.push((a, 0));
                continue;
            };
            let x = self.fetch(&pair.x)?;
            let y = self.fetch(&pair.y)?;
            bytes += matrix_bytes(&x) + matrix_bytes(&y);
            let res: ExecResult = match (kind, d.sparse_operand) {
                (PrimitiveKind::Gemm, _) => {
                    let xd = conv.dense(&x)?;
                    let yd = conv.dense(&y)?;
                    let yc = conv.col_major(&yd);
                    exec_gemm(&xd, &yc, &acc, cfg)?
                }
                (PrimitiveKind::Spdmm, SparseOperand::Right) => {
                    let xd = conv.dense(&x)?;
                    let yc = conv.coo(&y);
                    let r = exec_spdmm_rhs(&xd, &yc, &acc, cfg)?;
                    conv.charge(TransformKind::LayoutFlip, elems);
                    r
                }
                (PrimitiveKind::Spdmm, _) => {
                    let xc = conv.coo(&x);
                    let yd = conv.dense(&y)?;
                    exec_spdmm(&xc, &yd, &acc, cfg)?
                }
                (PrimitiveKind::Spmm, _) => {
                    let xc = conv.coo(&x);
                    let yc = conv.coo(&y);
                    exec_spmm(&xc, &yc, &acc, cfg)?
                }
            };
            acc = res.output;
            executed += res.compute_cycles;
            kinds.push(kind);
            traced.push((a, res.compute_cycles));
        }

        if !kernel.activation.is_identity() {
            for v in acc.values_mut() {
                *v = kernel.activation.apply_scalar(*v);
            }
            epilogue += (elems as u64).div_ceil(p2);
        }
        conv.charge(TransformKind::Profile, elems);

        let transfer = (bytes as f64 / self.cfg.bytes_per_cycle).ceil() as u64;
        Ok(TaskOutcome {
            block: acc,
            work: TaskWork {
                compute: executed + epilogue,
                kinds,
                transfer,
                transform: conv.cycles,
            },
            pairs: traced,
            predicted,
            executed,
            epilogue,
        })
    }
}

/// Runs every kernel of `program` under `strategy`. Tasks of a kernel are
/// computed on the host in parallel; their simulated schedule is computed
/// afterwards in descriptor order, so results do not depend on host timing.
pub fn run_inference(
    program: &CompiledProgram,
    strategy: MappingStrategy,
    cfg: &RunConfig,
) -> Result<InferenceResult> {
    cfg.validate()?;
    let ir = &program.ir;
    let mut features: Vec<Option<MatrixRef>> = vec![None; ir.features.len().max(1)];
    features[0] = Some(program.features.clone().into());
    let mut densities = DensityStore::from_sidecar(&program.sidecar);
    let mut sched = Scheduler::new(cfg.n_cores, cfg.visible_overheads);

    let mut kernels = Vec::with_capacity(ir.kernels.len());
    let mut task_counters = Vec::new();
    let mut trace = Vec::new();
    let mut histogram = DecisionHistogram::default();

    for kernel in &ir.kernels {
        let ctx = Ctx {
            program,
            features: &features,
            densities: &densities,
            strategy,
            cfg,
        };
        let outcomes = kernel
            .scheme
            .tasks
            .par_iter()
            .map(|t| ctx.run_task(kernel, t))
            .collect::<Result<Vec<_>>>()?;

        let work: Vec<TaskWork> = outcomes.iter().map(|o| o.work.clone()).collect();
        let schedule = sched.run_kernel(&work);

        let mut out = DenseMatrix::zeros(kernel.num_vertices, kernel.f_out);
        let mut kh = DecisionHistogram::default();
        let mut kr = KernelReport {
            kernel_id: kernel.id,
            layer_type: kernel.layer_type,
            layer_id: kernel.layer_id,
            tasks: outcomes.len(),
            start: schedule.start,
            end: schedule.end,
            makespan: schedule.makespan(),
            max_task: 0,
            sum_task: 0,
            predicted_cycles: 0,
            executed_cycles: 0,
            epilogue_cycles: 0,
            switch_cycles: 0,
            transform_cycles: 0,
            transfer_cycles: 0,
            histogram: kh,
        };
        for ((task, o), a) in kernel.scheme.tasks.iter().zip(&outcomes).zip(&schedule.assignments) {
            out.write_block(task.out_rows.start, task.out_cols.start, &o.block)?;
            let dur = a.end - a.start;
            kr.max_task = kr.max_task.max(dur);
            kr.sum_task += dur;
            kr.predicted_cycles += o.predicted;
            kr.executed_cycles += o.executed;
            kr.epilogue_cycles += o.epilogue;
            kr.switch_cycles += a.switch_cycles;
            kr.transform_cycles += o.work.transform;
            kr.transfer_cycles += o.work.transfer;
            for (i, (ap, cycles)) in o.pairs.iter().enumerate() {
                kh.record(ap.decision.choice);
                trace.push(PairTrace {
                    kernel: kernel.id,
                    task: task.id,
                    pair: i,
                    dims: ap.dims,
                    x_density: ap.x_density,
                    y_density: ap.y_density,
                    decision: ap.decision,
                    executed_cycles: *cycles,
                });
            }
            task_counters.push(TaskCounter {
                kernel: kernel.id,
                task: task.id,
                k: task.k(),
                decisions: o.pairs.len(),
            });
        }
        kr.histogram = kh;
        histogram.merge(&kh);
        kernels.push(kr);

        let out_ref = MatrixRef::Dense(out);
        densities.set_feature(
            kernel.output,
            DensityGrid::profile(&out_ref, kernel.scheme.n2, kernel.scheme.n2),
        );
        features[kernel.output] = Some(out_ref);
    }

    let makespan = sched.clock();
    let cores = sched
        .cores()
        .iter()
        .map(|c| CoreReport {
            id: c.id,
            busy_cycles: c.busy_cycles,
            switch_cycles: c.switch_cycles,
            tasks: c.tasks_run,
            utilization: if makespan == 0 {
                0.0
            } else {
                c.busy_cycles as f64 / makespan as f64
            },
        })
        .collect();
    let sum = |f: fn(&KernelReport) -> u64| kernels.iter().map(f).sum::<u64>();
    let report = SimReport {
        strategy,
        n_cores: cfg.n_cores,
        p_sys: cfg.core.p_sys,
        visible_overheads: cfg.visible_overheads,
        makespan,
        predicted_cycles: sum(|k| k.predicted_cycles),
        executed_cycles: sum(|k| k.executed_cycles),
        epilogue_cycles: sum(|k| k.epilogue_cycles),
        switch_cycles: sum(|k| k.switch_cycles),
        transform_cycles: sum(|k| k.transform_cycles),
        transfer_cycles: sum(|k| k.transfer_cycles),
        analyzer_decisions: histogram.total(),
        kernels,
        cores,
        histogram,
        task_counters,
        trace,
    };

    let features: Vec<DenseMatrix> = features
        .into_iter()
        .map(|f| match f {
            Some(MatrixRef::Dense(d)) => d,
            _ => DenseMatrix::zeros(0, 0),
        })
        .collect();
    let output = features[ir.output_feature()].clone();
    Ok(InferenceResult {
        output,
        report,
        features,
        densities,
    })
}
