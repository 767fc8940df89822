//! Discrete-event task dispatch onto simulated cores.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::primitives::{ModeTracker, PrimitiveKind};

/// Cost components of one task, independent of the core that runs it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskWork {
    /// Pair cycles plus elementwise epilogue cycles.
    pub compute: u64,
    /// Modes used, in order, for switch charging.
    pub kinds: Vec<PrimitiveKind>,
    pub transfer: u64,
    pub transform: u64,
}

impl TaskWork {
    pub fn compute_only(compute: u64) -> Self {
        Self {
            compute,
            ..Self::default()
        }
    }
}

/// Time a task occupies its core. Transfers and transforms are double
/// buffered unless `visible`.
pub fn task_duration(work: &TaskWork, switch: u64, visible: bool) -> u64 {
    let busy = work.compute + switch;
    if visible {
        busy.max(work.transfer) + work.transform
    } else {
        busy
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreState {
    pub id: usize,
    pub busy_until: u64,
    #[serde(skip)]
    pub mode: ModeTracker,
    pub busy_cycles: u64,
    pub switch_cycles: u64,
    pub tasks_run: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub task: usize,
    pub core: usize,
    pub start: u64,
    pub end: u64,
    pub switch_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSchedule {
    pub start: u64,
    pub end: u64,
    /// In dispatch (descriptor) order.
    pub assignments: Vec<Assignment>,
}

impl KernelSchedule {
    pub fn makespan(&self) -> u64 {
        self.end - self.start
    }
}

/// Cores plus a global clock. Every kernel starts at the barrier left by the
/// previous one.
#[derive(Debug, Clone)]
pub struct Scheduler {
    cores: Vec<CoreState>,
    clock: u64,
    visible: bool,
}

impl Scheduler {
    pub fn new(n_cores: usize, visible_overheads: bool) -> Self {
        assert!(n_cores >= 1, "at least one core");
        Self {
            cores: (0..n_cores)
                .map(|id| CoreState {
                    id,
                    busy_until: 0,
                    mode: ModeTracker::default(),
                    busy_cycles: 0,
                    switch_cycles: 0,
                    tasks_run: 0,
                })
                .collect(),
            clock: 0,
            visible: visible_overheads,
        }
    }

    pub fn cores(&self) -> &[CoreState] {
        &self.cores
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Runs one kernel: tasks go out in the given order, each to the core
    /// that becomes idle first (lowest id on ties). Returns once all of them
    /// finish.
    pub fn run_kernel(&mut self, tasks: &[TaskWork]) -> KernelSchedule {
        let start = self.clock;
        let mut idle: BinaryHeap<Reverse<(u64, usize)>> =
            self.cores.iter().map(|c| Reverse((start, c.id))).collect();
        let mut assignments = Vec::with_capacity(tasks.len());
        let mut end = start;
        for (t, work) in tasks.iter().enumerate() {
            let Reverse((at, id)) = idle.pop().expect("non-empty core set");
            let core = &mut self.cores[id];
            let switch = core.mode.charge_all(work.kinds.iter().copied());
            let dur = task_duration(work, switch, self.visible);
            let finish = at + dur;
            core.busy_until = finish;
            core.busy_cycles += dur;
            core.switch_cycles += switch;
            core.tasks_run += 1;
            end = end.max(finish);
            assignments.push(Assignment {
                task: t,
                core: id,
                start: at,
                end: finish,
                switch_cycles: switch,
            });
            idle.push(Reverse((finish, id)));
        }
        self.clock = end;
        for c in &mut self.cores {
            c.busy_until = end;
        }
        KernelSchedule {
            start,
            end,
            assignments,
        }
    }
}

/// Makespan of independent tasks with fixed costs on `n_cores` cores.
pub fn makespan_of(costs: &[u64], n_cores: usize) -> u64 {
    let work: Vec<TaskWork> = costs.iter().map(|&c| TaskWork::compute_only(c)).collect();
    Scheduler::new(n_cores, false).run_kernel(&work).makespan()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_tasks_two_cores() {
        let mut s = Scheduler::new(2, false);
        let k = s.run_kernel(&[10, 20, 30].map(TaskWork::compute_only));
        assert_eq!(k.makespan(), 40);
        assert_eq!(
            k.assignments.iter().map(|a| a.core).collect::<Vec<_>>(),
            [0, 1, 0]
        );
    }

    #[test]
    fn one_core_serializes() {
        assert_eq!(makespan_of(&[3, 4, 5], 1), 12);
    }

    #[test]
    fn perfect_parallelism() {
        assert_eq!(makespan_of(&[7; 5], 8), 7);
    }

    #[test]
    fn barrier_between_kernels() {
        let mut s = Scheduler::new(2, false);
        let a = s.run_kernel(&[5, 1].map(TaskWork::compute_only));
        let b = s.run_kernel(&[2].map(TaskWork::compute_only));
        assert_eq!(a.end, 5);
        // core 0 is lowest id and both cores wait on the barrier
        assert_eq!(b.assignments[0], Assignment { task: 0, core: 0, start: 5, end: 7, switch_cycles: 0 });
    }

    #[test]
    fn mode_switches_charged_per_core() {
        let mut s = Scheduler::new(1, false);
        let w = |k| TaskWork {
            compute: 10,
            kinds: vec![k],
            ..TaskWork::default()
        };
        let k = s.run_kernel(&[w(PrimitiveKind::Gemm), w(PrimitiveKind::Spdmm), w(PrimitiveKind::Spdmm)]);
        assert_eq!(k.makespan(), 31);
        assert_eq!(s.cores()[0].switch_cycles, 1);
    }

    #[test]
    fn visible_overheads() {
        let w = TaskWork {
            compute: 10,
            kinds: vec![],
            transfer: 25,
            transform: 3,
        };
        assert_eq!(task_duration(&w, 0, false), 10);
        assert_eq!(task_duration(&w, 0, true), 28);
    }

    #[test]
    fn empty_kernel() {
        let mut s = Scheduler::new(3, false);
        let k = s.run_kernel(&[]);
        assert_eq!(k.makespan(), 0);
    }
}
