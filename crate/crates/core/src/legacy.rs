//! Legacy instance-identification model.
//!
//! Models the earlier identification approach by its two defects and
//! nothing else:
//!
//! 1. *Atomic-posting assumption* — a task is attributed to an instance at
//!    its `PostTaskEntry`, as if every posting completed successfully and
//!    without interruption. `PostOk`/`PostFail` are ignored. When a posting
//!    is preempted and another instance's `PostOk` lands first, or when a
//!    posting fails, the attribution queue drifts from the OS task queue.
//! 2. *Delayed endpoint determination* — an exit point whose instance still
//!    has pending attribution entries cannot be committed as an endpoint;
//!    a provisional label is buffered until a later event of that instance
//!    resolves it. Entries of instances that never resume (e.g. phantom
//!    attributions left by failed postings) stay buffered forever, so the
//!    buffer grows with running time.
//!
//! The returned labels are the model's final verdicts (unresolved
//! provisional endpoints stay intermediate); the buffering shows up in
//! `StateMetrics::history_len_max` and in the attribution queue length.

use std::collections::{HashMap, VecDeque};

use crate::event::{Event, Inst, Label, PointKind, Pos};
use crate::identifier::{StateMetrics, StepError};

#[derive(Debug, Clone, Default)]
pub struct LegacyIdentifier {
    cur_inst: Inst,
    inst_num: u64,
    preempted: Vec<Inst>,
    /// Task attributions in PostTaskEntry order (the model's task queue).
    post_order: VecDeque<Inst>,
    /// Entry count per instance in `post_order`. Kept so the membership
    /// test stays O(1); the modeled space cost is the queue itself.
    post_counts: HashMap<Inst, usize>,
    /// Buffered provisional endpoint labels per instance (event seqs).
    unresolved: HashMap<Inst, Vec<u64>>,
    unresolved_total: usize,
    metrics: StateMetrics,
}

impl LegacyIdentifier {
    pub fn new() -> Self {
        LegacyIdentifier {
            cur_inst: Inst::NON_INTERRUPT,
            ..Default::default()
        }
    }

    pub fn instances(&self) -> u64 {
        self.inst_num
    }

    pub fn metrics(&self) -> StateMetrics {
        self.metrics
    }

    fn has_pending(&self, inst: Inst) -> bool {
        self.post_counts.get(&inst).copied().unwrap_or(0) > 0
    }

    /// A later event of `inst` resolves its buffered endpoint candidates:
    /// the instance demonstrably continued, so they were intermediate.
    fn resolve(&mut self, inst: Inst) {
        if let Some(seqs) = self.unresolved.remove(&inst) {
            self.unresolved_total -= seqs.len();
        }
    }

    /// Labels one event under the legacy model.
    pub fn feed(&mut self, event: &Event) -> Result<Label, StepError> {
        let seq = event.seq();
        let mut pos = Pos::Interm;
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
                self.resolve(self.cur_inst);
                if self.has_pending(self.cur_inst) {
                    // Possible endpoint; determination postponed.
                    self.unresolved.entry(self.cur_inst).or_default().push(seq);
                    self.unresolved_total += 1;
                } else {
                    pos = Pos::End;
                }
                inst_after_exit = Some(resumed);
            }
            PointKind::PostTaskEntry => {
                // Attribution happens here, assuming the posting is atomic
                // and will succeed.
                self.post_order.push_back(self.cur_inst);
                *self.post_counts.entry(self.cur_inst).or_insert(0) += 1;
                self.resolve(self.cur_inst);
            }
            PointKind::RunTaskEntry => {
                let inst = self
                    .post_order
                    .pop_front()
                    .ok_or(StepError::OrphanRunTaskEntry { seq })?;
                if let Some(count) = self.post_counts.get_mut(&inst) {
                    *count -= 1;
                }
                self.cur_inst = inst;
                self.resolve(inst);
            }
            PointKind::RunTaskExit => {
                self.resolve(self.cur_inst);
                if self.has_pending(self.cur_inst) {
                    self.unresolved.entry(self.cur_inst).or_default().push(seq);
                    self.unresolved_total += 1;
                } else {
                    pos = Pos::End;
                }
                inst_after_exit = Some(Inst::NON_INTERRUPT);
            }
            PointKind::PostOk | PointKind::PostFail | PointKind::Other => {
                self.resolve(self.cur_inst);
            }
        }

        let label = Label::new(self.cur_inst, pos);
        if let Some(next) = inst_after_exit {
            self.cur_inst = next;
        }

        self.metrics.events_processed += 1;
        self.metrics.stack_depth_max = self.metrics.stack_depth_max.max(self.preempted.len());
        self.metrics.queue_len_max = self.metrics.queue_len_max.max(self.post_order.len());
        self.metrics.history_len_max = self.metrics.history_len_max.max(self.unresolved_total);
        Ok(label)
    }
}

/// Labels a whole trace under the legacy model.
pub fn legacy_run(events: &[Event]) -> Result<Vec<Label>, StepError> {
    legacy_run_with_metrics(events).map(|(labels, _)| labels)
}

pub fn legacy_run_with_metrics(events: &[Event]) -> Result<(Vec<Label>, StateMetrics), StepError> {
    let mut state = LegacyIdentifier::new();
    let mut labels = Vec::with_capacity(events.len());
    for event in events {
        labels.push(state.feed(event)?);
    }
    Ok((labels, state.metrics()))
}

/// Timing variant that discards labels.
pub fn legacy_run_metrics_only(events: &[Event]) -> Result<StateMetrics, StepError> {
    let mut state = LegacyIdentifier::new();
    for event in events {
        state.feed(event)?;
    }
    Ok(state.metrics())
}
