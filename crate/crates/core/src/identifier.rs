//! Online instance identifier.
//!
//! Consumes a trace one event at a time and emits, for every event, the
//! instance it belongs to and its position in that instance (start,
//! end, or intermediate). The label for an event is available before the
//! next event is consumed, and the auxiliary state is bounded by the
//! maximum interrupt-nesting depth plus the OS task-queue length, so both
//! per-event time and space stay constant regardless of trace length.
//!
//! State:
//! - `cur_inst` — the instance of the instruction being executed;
//! - `preempted` — stack of instances suspended by interrupt handlers,
//!   pushed at `IHEntry`, popped at `IHExit` (one entry per nesting level);
//! - `pending` — FIFO queue mirroring the OS task queue, holding the
//!   instance of every successfully posted, not-yet-run task: enqueued at
//!   `PostOk`, dequeued at `RunTaskEntry`.
//!
//! An `IHExit` or `RunTaskExit` is the endpoint of its instance exactly
//! when the queue holds no entry of that instance (the instance has no
//! pending tasks left). The instance switch implied by an exit takes
//! effect after the exit's own label is emitted.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{Event, Inst, Label, PointKind, Pos};

/// Structural trace violations. Both indicate a malformed or truncated
/// trace; labeling aborts at the offending event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("event {seq}: IHExit without a matching IHEntry")]
    UnbalancedIhExit { seq: u64 },
    #[error("event {seq}: RunTaskEntry with no pending posted task")]
    OrphanRunTaskEntry { seq: u64 },
}

/// Running auxiliary-state maxima of an identifier, used to evidence the
/// constant-space behaviour. `history_len_max` is 0 for the online
/// identifier by construction; the legacy model reports its provisional
/// label buffer there.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateMetrics {
    pub stack_depth_max: usize,
    pub queue_len_max: usize,
    pub history_len_max: usize,
    pub events_processed: u64,
}

impl StateMetrics {
    /// Total auxiliary elements held across stack, queue, and history.
    pub fn aux_space_peak(&self) -> u64 {
        (self.stack_depth_max + self.queue_len_max + self.history_len_max) as u64
    }
}

/// Mutable state of the online identifier.
#[derive(Debug, Clone)]
pub struct IdentifierState {
    cur_inst: Inst,
    inst_num: u64,
    preempted: Vec<Inst>,
    pending: VecDeque<Inst>,
    metrics: StateMetrics,
}

impl Default for IdentifierState {
    fn default() -> Self {
        Self::new()
    }
}

impl IdentifierState {
    pub fn new() -> Self {
        IdentifierState {
            cur_inst: Inst::NON_INTERRUPT,
            inst_num: 0,
            preempted: Vec::new(),
            pending: VecDeque::new(),
            metrics: StateMetrics::default(),
        }
    }

    /// Number of instances created so far.
    pub fn instances(&self) -> u64 {
        self.inst_num
    }

    /// Current interrupt-nesting depth.
    pub fn nesting_depth(&self) -> usize {
        self.preempted.len()
    }

    /// Number of pending (posted, not yet run) tasks.
    pub fn pending_tasks(&self) -> usize {
        self.pending.len()
    }

    pub fn metrics(&self) -> StateMetrics {
        self.metrics
    }

    /// Labels one event. Must be fed the events of a single trace in order.
    pub fn step(&mut self, event: &Event) -> Result<Label, StepError> {
        let seq = event.seq();
        let mut pos = Pos::Interm;
        // The instance to switch to after an exit point's label is emitted.
        let mut inst_after_exit: Option<Inst> = None;

        match event.kind() {
            PointKind::IhEntry => {
                self.preempted.push(self.cur_inst);
                self.inst_num += 1;
                let irq = event.irq().expect("IHEntry carries an irq");
                self.cur_inst = Inst::ipi(self.inst_num, irq);
                pos = Pos::Start;
            }
            PointKind::IhExit => {
                let resumed = self
                    .preempted
                    .pop()
                    .ok_or(StepError::UnbalancedIhExit { seq })?;
                if !self.pending.contains(&self.cur_inst) {
                    pos = Pos::End;
                }
                inst_after_exit = Some(resumed);
            }
            PointKind::PostOk => {
                self.pending.push_back(self.cur_inst);
            }
            PointKind::RunTaskEntry => {
                self.cur_inst = self
                    .pending
                    .pop_front()
                    .ok_or(StepError::OrphanRunTaskEntry { seq })?;
            }
            PointKind::RunTaskExit => {
                if !self.pending.contains(&self.cur_inst) {
                    pos = Pos::End;
                }
                inst_after_exit = Some(Inst::NON_INTERRUPT);
            }
            PointKind::PostTaskEntry | PointKind::PostFail | PointKind::Other => {}
        }

        let label = Label::new(self.cur_inst, pos);
        if let Some(next) = inst_after_exit {
            self.cur_inst = next;
        }

        self.metrics.events_processed += 1;
        self.metrics.stack_depth_max = self.metrics.stack_depth_max.max(self.preempted.len());
        self.metrics.queue_len_max = self.metrics.queue_len_max.max(self.pending.len());
        Ok(label)
    }
}

/// Labels a whole trace with a fresh state.
pub fn run(events: &[Event]) -> Result<Vec<Label>, StepError> {
    run_with_metrics(events).map(|(labels, _)| labels)
}

/// Labels a whole trace and reports the state's running maxima.
pub fn run_with_metrics(events: &[Event]) -> Result<(Vec<Label>, StateMetrics), StepError> {
    let mut state = IdentifierState::new();
    let mut labels = Vec::with_capacity(events.len());
    for event in events {
        labels.push(state.step(event)?);
    }
    Ok((labels, state.metrics()))
}

/// Labels a whole trace discarding labels; used by the benchmark harness
/// to time the identifier without measuring output allocation.
pub fn run_metrics_only(events: &[Event]) -> Result<StateMetrics, StepError> {
    let mut state = IdentifierState::new();
    for event in events {
        state.step(event)?;
    }
    Ok(state.metrics())
}
