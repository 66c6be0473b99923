//! Deterministic, seedable generator of interrupt-driven execution traces.
//!
//! The simulated machine follows the TinyOS-style concurrency model:
//! interrupt handlers preempt whatever is running (up to a nesting bound)
//! and run to completion; handlers and tasks post tasks through a
//! non-atomic posting sequence (`PostTaskEntry`, a configurable gap of
//! instructions, then `PostOk` or `PostFail`); a posting fails exactly when
//! the task is already pending; successfully posted tasks are enqueued and
//! later run to completion in FIFO order, one at a time, outside handlers.
//!
//! Time advances in ticks. Before each tick's instruction at most one
//! interrupt may arrive (checked per irq in declaration order), landing
//! between any two emitted instructions, including inside posting gaps and
//! task bodies. Nothing is emitted while the machine is idle. After
//! `horizon` ticks arrivals stop and new postings are suppressed; whatever
//! is active runs to completion so the trace is always balanced, and with
//! `drain` set the pending tasks are run to quiescence as well.
//!
//! Every emitted event carries its ground-truth label: the instance of the
//! code executing it, where tasks inherit the instance current at their
//! successful `PostOk`. Truth endpoints are assigned in a second pass once
//! the whole trace is known.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{is_task_name, Event, Inst, Label, LabeledEvent, PointKind, Pos};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("config field `{field}`: {reason}")]
pub struct ConfigError {
    pub field: &'static str,
    pub reason: String,
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        field,
        reason: reason.into(),
    }
}

/// Inclusive integer range, serialized as `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LenRange(pub u32, pub u32);

impl LenRange {
    fn validate(&self, field: &'static str) -> Result<(), ConfigError> {
        if self.0 > self.1 {
            Err(invalid(
                field,
                format!("empty range [{}, {}]", self.0, self.1),
            ))
        } else {
            Ok(())
        }
    }

    fn sample(&self, rng: &mut SplitMix64) -> u32 {
        rng.range_u32(self.0, self.1)
    }
}

/// Per-instruction arrival probability: one value for every irq, or one
/// value per irq (aligned with `irqs`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArrivalProb {
    Uniform(f64),
    PerIrq(Vec<f64>),
}

impl ArrivalProb {
    fn get(&self, irq_index: usize) -> f64 {
        match self {
            ArrivalProb::Uniform(p) => *p,
            ArrivalProb::PerIrq(v) => v[irq_index],
        }
    }
}

/// Postable task names: one shared pool, or one pool per irq (aligned with
/// `irqs`). A task posting a task draws from its own instance's pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskNames {
    Shared(Vec<String>),
    PerIrq(Vec<Vec<String>>),
}

impl TaskNames {
    fn pool(&self, irq_index: usize) -> &[String] {
        match self {
            TaskNames::Shared(v) => v,
            TaskNames::PerIrq(v) => &v[irq_index],
        }
    }

    /// All distinct task names; bounds the OS task queue length.
    pub fn universe(&self) -> BTreeSet<&str> {
        match self {
            TaskNames::Shared(v) => v.iter().map(String::as_str).collect(),
            TaskNames::PerIrq(v) => v.iter().flatten().map(String::as_str).collect(),
        }
    }
}

/// Simulator parameters. All randomness flows from `seed`; identical
/// configs produce byte-identical traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Interrupt numbers (positive, distinct).
    pub irqs: Vec<u32>,
    /// Probability of an arrival per tick, per irq.
    pub arrival_prob: ArrivalProb,
    /// Maximum handler nesting depth.
    pub nest_depth_max: usize,
    /// Whether an irq may preempt its own handler.
    pub allow_self_nest: bool,
    /// Handler body length range (instructions outside posting sequences).
    pub handler_len: LenRange,
    /// Task body length range.
    pub task_len: LenRange,
    /// Probability that a handler body instruction starts a posting.
    pub post_prob: f64,
    /// Probability that a task body instruction starts a posting.
    pub post_in_task_prob: f64,
    /// Postable task names.
    pub task_names: TaskNames,
    /// Instructions between PostTaskEntry and its PostOk/PostFail; the
    /// window in which preemption can occur.
    pub post_gap: LenRange,
    /// Tick budget before arrivals stop.
    pub horizon: u64,
    /// Run pending tasks to quiescence after the horizon.
    pub drain: bool,
    /// RNG seed.
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            irqs: vec![1, 2],
            arrival_prob: ArrivalProb::Uniform(0.05),
            nest_depth_max: 2,
            allow_self_nest: false,
            handler_len: LenRange(2, 8),
            task_len: LenRange(2, 8),
            post_prob: 0.2,
            post_in_task_prob: 0.05,
            task_names: TaskNames::Shared(vec![
                "T1".to_owned(),
                "T2".to_owned(),
                "T3".to_owned(),
                "T4".to_owned(),
            ]),
            post_gap: LenRange(0, 3),
            horizon: 10_000,
            drain: true,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.irqs.is_empty() {
            return Err(invalid("irqs", "at least one interrupt is required"));
        }
        if self.irqs.contains(&0) {
            return Err(invalid("irqs", "interrupt numbers must be positive"));
        }
        let mut seen = BTreeSet::new();
        if !self.irqs.iter().all(|q| seen.insert(q)) {
            return Err(invalid("irqs", "interrupt numbers must be distinct"));
        }
        let probs: Vec<f64> = match &self.arrival_prob {
            ArrivalProb::Uniform(p) => vec![*p],
            ArrivalProb::PerIrq(v) => {
                if v.len() != self.irqs.len() {
                    return Err(invalid(
                        "arrival_prob",
                        format!("{} values for {} irqs", v.len(), self.irqs.len()),
                    ));
                }
                v.clone()
            }
        };
        for p in &probs {
            if !(0.0..=1.0).contains(p) {
                return Err(invalid(
                    "arrival_prob",
                    format!("probability {p} not in [0, 1]"),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.post_prob) {
            return Err(invalid("post_prob", "probability not in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.post_in_task_prob) {
            return Err(invalid("post_in_task_prob", "probability not in [0, 1]"));
        }
        if self.nest_depth_max == 0 {
            return Err(invalid("nest_depth_max", "must be at least 1"));
        }
        self.handler_len.validate("handler_len")?;
        self.task_len.validate("task_len")?;
        self.post_gap.validate("post_gap")?;
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be positive"));
        }
        if let TaskNames::PerIrq(pools) = &self.task_names {
            if pools.len() != self.irqs.len() {
                return Err(invalid(
                    "task_names",
                    format!("{} pools for {} irqs", pools.len(), self.irqs.len()),
                ));
            }
        }
        for name in self.task_names.universe() {
            if !is_task_name(name) {
                return Err(invalid(
                    "task_names",
                    format!("`{name}` is not a [A-Za-z0-9_$]+ token"),
                ));
            }
        }
        Ok(())
    }
}

/// An event as produced by the generator, before truth positions are known.
#[derive(Debug, Clone)]
pub(crate) struct RawEvent {
    pub kind: PointKind,
    pub irq: Option<u32>,
    pub task: Option<String>,
    pub inst: Inst,
}

/// Assigns truth positions with whole-trace knowledge and packs raw events
/// into labeled events. An instance's truth endpoint is its last event,
/// provided the instance completed (no pending tasks remain at trace end);
/// a task attributed to the non-interrupt instance ends at its RunTaskExit
/// when no non-interrupt-posted task is pending across it.
pub(crate) fn finalize_truth(raw: Vec<RawEvent>) -> Vec<LabeledEvent> {
    let mut last: HashMap<Inst, usize> = HashMap::new();
    let mut net_pending: HashMap<Inst, i64> = HashMap::new();
    for (i, r) in raw.iter().enumerate() {
        if !r.inst.is_non_interrupt() {
            last.insert(r.inst, i);
        }
        match r.kind {
            PointKind::PostOk => *net_pending.entry(r.inst).or_insert(0) += 1,
            PointKind::RunTaskEntry => *net_pending.entry(r.inst).or_insert(0) -= 1,
            _ => {}
        }
    }

    let mut boot_pending = 0i64;
    raw.into_iter()
        .enumerate()
        .map(|(i, r)| {
            match r.kind {
                PointKind::PostOk if r.inst.is_non_interrupt() => boot_pending += 1,
                PointKind::RunTaskEntry if r.inst.is_non_interrupt() => boot_pending -= 1,
                _ => {}
            }
            let complete = net_pending.get(&r.inst).copied().unwrap_or(0) == 0;
            let pos = match r.kind {
                PointKind::IhEntry => Pos::Start,
                _ if !r.inst.is_non_interrupt() && last[&r.inst] == i && complete => Pos::End,
                PointKind::RunTaskExit if r.inst.is_non_interrupt() && boot_pending == 0 => {
                    Pos::End
                }
                _ => Pos::Interm,
            };
            let truth = Label::new(r.inst, pos);
            let event = Event::new(i as u64, r.kind, r.irq, r.task)
                .expect("generator emits well-formed events");
            LabeledEvent {
                event,
                label: truth,
                truth: Some(truth),
            }
        })
        .collect()
}

/// An open posting: the gap still to run before PostOk/PostFail.
#[derive(Debug)]
struct Window {
    task: String,
    gap_left: u32,
}

#[derive(Debug)]
struct Frame {
    irq: u32,
    irq_index: usize,
    inst: Inst,
    remaining: u32,
    entered: bool,
    window: Option<Window>,
}

#[derive(Debug)]
struct TaskRun {
    name: String,
    irq_index: Option<usize>,
    inst: Inst,
    remaining: u32,
    window: Option<Window>,
}

struct Sim<'a> {
    config: &'a SimConfig,
    stack: Vec<Frame>,
    active: Option<TaskRun>,
    queue: VecDeque<(String, Inst)>,
    pending: BTreeSet<String>,
    raw: Vec<RawEvent>,
    next_inst_id: u64,
}

enum Step {
    Emit(PointKind, Option<u32>, Option<String>, Inst),
    Idle,
}

impl<'a> Sim<'a> {
    fn new(config: &'a SimConfig) -> Self {
        Sim {
            config,
            stack: Vec::new(),
            active: None,
            queue: VecDeque::new(),
            pending: BTreeSet::new(),
            raw: Vec::new(),
            next_inst_id: 0,
        }
    }

    fn can_preempt(&self, irq: u32) -> bool {
        self.stack.len() < self.config.nest_depth_max
            && (self.config.allow_self_nest || self.stack.iter().all(|f| f.irq != irq))
    }

    fn start_handler(&mut self, irq_index: usize, rng: &mut SplitMix64) {
        self.next_inst_id += 1;
        let irq = self.config.irqs[irq_index];
        self.stack.push(Frame {
            irq,
            irq_index,
            inst: Inst::ipi(self.next_inst_id, irq),
            remaining: self.config.handler_len.sample(rng),
            entered: false,
            window: None,
        });
    }

    /// The PostOk/PostFail completing an open posting: fails exactly when
    /// the task is already pending, otherwise sets the pending flag and
    /// enqueues the task with the posting instance.
    fn complete_post(&mut self, task: String, inst: Inst) -> Step {
        if self.pending.contains(&task) {
            Step::Emit(PointKind::PostFail, None, Some(task), inst)
        } else {
            self.pending.insert(task.clone());
            self.queue.push_back((task.clone(), inst));
            Step::Emit(PointKind::PostOk, None, Some(task), inst)
        }
    }

    fn pick_task(&self, irq_index: usize, rng: &mut SplitMix64) -> Option<String> {
        let pool = self.config.task_names.pool(irq_index);
        if pool.is_empty() {
            None
        } else {
            Some(pool[rng.below(pool.len() as u64) as usize].clone())
        }
    }

    fn handler_step(&mut self, rng: &mut SplitMix64, allow_posts: bool) -> Step {
        let frame = self.stack.last_mut().expect("caller checked");
        let inst = frame.inst;
        if !frame.entered {
            frame.entered = true;
            return Step::Emit(PointKind::IhEntry, Some(frame.irq), None, inst);
        }
        if let Some(window) = frame.window.as_mut() {
            if window.gap_left > 0 {
                window.gap_left -= 1;
                return Step::Emit(PointKind::Other, None, None, inst);
            }
            let task = frame.window.take().expect("window is open").task;
            return self.complete_post(task, inst);
        }
        if frame.remaining == 0 {
            let frame = self.stack.pop().expect("caller checked");
            return Step::Emit(PointKind::IhExit, Some(frame.irq), None, frame.inst);
        }
        frame.remaining -= 1;
        let irq_index = frame.irq_index;
        if allow_posts && rng.chance(self.config.post_prob) {
            if let Some(task) = self.pick_task(irq_index, rng) {
                let gap_left = self.config.post_gap.sample(rng);
                let frame = self.stack.last_mut().expect("caller checked");
                frame.window = Some(Window {
                    task: task.clone(),
                    gap_left,
                });
                return Step::Emit(PointKind::PostTaskEntry, None, Some(task), inst);
            }
        }
        Step::Emit(PointKind::Other, None, None, inst)
    }

    fn task_step(&mut self, rng: &mut SplitMix64, allow_posts: bool) -> Step {
        let task = self.active.as_mut().expect("caller checked");
        let inst = task.inst;
        if let Some(window) = task.window.as_mut() {
            if window.gap_left > 0 {
                window.gap_left -= 1;
                return Step::Emit(PointKind::Other, None, None, inst);
            }
            let posted = task.window.take().expect("window is open").task;
            return self.complete_post(posted, inst);
        }
        if task.remaining == 0 {
            let task = self.active.take().expect("caller checked");
            return Step::Emit(PointKind::RunTaskExit, None, Some(task.name), task.inst);
        }
        task.remaining -= 1;
        let irq_index = task.irq_index;
        if allow_posts && rng.chance(self.config.post_in_task_prob) {
            if let Some(idx) = irq_index {
                if let Some(posted) = self.pick_task(idx, rng) {
                    let gap_left = self.config.post_gap.sample(rng);
                    let task = self.active.as_mut().expect("caller checked");
                    task.window = Some(Window {
                        task: posted.clone(),
                        gap_left,
                    });
                    return Step::Emit(PointKind::PostTaskEntry, None, Some(posted), inst);
                }
            }
        }
        Step::Emit(PointKind::Other, None, None, inst)
    }

    /// Dequeues the head task and starts running it. The dequeue clears the
    /// pending flag and the RunTaskEntry executes in the same tick.
    fn dispatch(&mut self, rng: &mut SplitMix64) -> Step {
        let (name, inst) = self.queue.pop_front().expect("caller checked");
        self.pending.remove(&name);
        let irq_index = self.config.irqs.iter().position(|&q| q == inst.itype());
        self.active = Some(TaskRun {
            name: name.clone(),
            irq_index,
            inst,
            remaining: self.config.task_len.sample(rng),
            window: None,
        });
        Step::Emit(PointKind::RunTaskEntry, None, Some(name), inst)
    }
}

/// Generates one trace. With `drain` set the result is drained: every
/// posted task has run and every instance has ended.
pub fn simulate(config: &SimConfig) -> Result<Vec<LabeledEvent>, ConfigError> {
    config.validate()?;
    let mut rng = SplitMix64::new(config.seed);
    let mut sim = Sim::new(config);
    let mut ticks = 0u64;

    loop {
        let after_horizon = ticks >= config.horizon;
        if after_horizon {
            let idle = sim.stack.is_empty() && sim.active.is_none();
            if idle && (!config.drain || sim.queue.is_empty()) {
                break;
            }
        } else {
            for irq_index in 0..config.irqs.len() {
                if rng.chance(config.arrival_prob.get(irq_index))
                    && sim.can_preempt(config.irqs[irq_index])
                {
                    sim.start_handler(irq_index, &mut rng);
                    break;
                }
            }
        }

        let allow_posts = !after_horizon;
        let step = if !sim.stack.is_empty() {
            sim.handler_step(&mut rng, allow_posts)
        } else if sim.active.is_some() {
            sim.task_step(&mut rng, allow_posts)
        } else if !sim.queue.is_empty() && (!after_horizon || config.drain) {
            sim.dispatch(&mut rng)
        } else {
            Step::Idle
        };
        if let Step::Emit(kind, irq, task, inst) = step {
            sim.raw.push(RawEvent {
                kind,
                irq,
                task,
                inst,
            });
        }
        ticks += 1;
    }
    Ok(finalize_truth(sim.raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checks;
    use crate::format::write_trace;
    use crate::identifier;

    fn busy_config(seed: u64) -> SimConfig {
        SimConfig {
            arrival_prob: ArrivalProb::Uniform(0.1),
            nest_depth_max: 3,
            post_prob: 0.4,
            post_in_task_prob: 0.1,
            post_gap: LenRange(0, 4),
            horizon: 2_000,
            seed,
            ..SimConfig::default()
        }
    }

    #[test]
    fn no_arrivals_means_empty_trace() {
        let config = SimConfig {
            arrival_prob: ArrivalProb::Uniform(0.0),
            ..SimConfig::default()
        };
        assert!(simulate(&config).unwrap().is_empty());
    }

    #[test]
    fn identical_config_gives_byte_identical_traces() {
        let config = busy_config(42);
        let a = simulate(&config).unwrap();
        let b = simulate(&config).unwrap();
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        write_trace(&mut buf_a, &a, true).unwrap();
        write_trace(&mut buf_b, &b, true).unwrap();
        assert!(!buf_a.is_empty());
        assert_eq!(buf_a, buf_b);
    }

    #[test]
    fn structural_balance_and_post_soundness() {
        for seed in 0..20 {
            let labeled = simulate(&busy_config(seed)).unwrap();
            let mut depth = 0usize;
            let mut pending: BTreeSet<&str> = BTreeSet::new();
            let mut fifo: VecDeque<&str> = VecDeque::new();
            for le in &labeled {
                match le.event.kind() {
                    PointKind::IhEntry => depth += 1,
                    PointKind::IhExit => depth = depth.checked_sub(1).expect("balanced"),
                    PointKind::PostOk => {
                        let task = le.event.task().unwrap();
                        assert!(!pending.contains(task), "PostOk of a pending task");
                        pending.insert(task);
                        fifo.push_back(task);
                    }
                    PointKind::PostFail => {
                        let task = le.event.task().unwrap();
                        assert!(pending.contains(task), "PostFail of a non-pending task");
                    }
                    PointKind::RunTaskEntry => {
                        let task = le.event.task().unwrap();
                        assert_eq!(fifo.pop_front(), Some(task), "FIFO order");
                        assert!(pending.remove(task), "pending flag cleared at dequeue");
                    }
                    _ => {}
                }
                assert!(depth <= 3);
            }
            assert_eq!(depth, 0, "trace balanced");
            assert!(fifo.is_empty(), "trace drained");
        }
    }

    #[test]
    fn truth_satisfies_identifier_invariants() {
        let labeled = simulate(&busy_config(7)).unwrap();
        let events: Vec<Event> = labeled.iter().map(|le| le.event.clone()).collect();
        let truth: Vec<Label> = labeled.iter().map(|le| le.truth.unwrap()).collect();
        assert!(checks::switch_point_violations(&events, &truth).is_empty());
        assert!(checks::endpoint_violations(&events, &truth).is_empty());
    }

    #[test]
    fn identifier_matches_truth_on_random_traces() {
        for seed in 100..110 {
            let labeled = simulate(&busy_config(seed)).unwrap();
            let events: Vec<Event> = labeled.iter().map(|le| le.event.clone()).collect();
            let truth: Vec<Label> = labeled.iter().map(|le| le.truth.unwrap()).collect();
            assert_eq!(identifier::run(&events).unwrap(), truth);
        }
    }

    #[test]
    fn undrained_config_leaves_pending_tasks_but_stays_balanced() {
        let config = SimConfig {
            drain: false,
            ..busy_config(3)
        };
        let labeled = simulate(&config).unwrap();
        let events: Vec<Event> = labeled.iter().map(|le| le.event.clone()).collect();
        // Balance: the identifier runs cleanly even though tasks are pending.
        assert!(identifier::run(&events).is_ok());
        let ok = events
            .iter()
            .filter(|e| e.kind() == PointKind::PostOk)
            .count();
        let run = events
            .iter()
            .filter(|e| e.kind() == PointKind::RunTaskEntry)
            .count();
        assert!(ok >= run);
    }

    #[test]
    fn config_validation_names_the_field() {
        let bad = SimConfig {
            irqs: vec![],
            ..SimConfig::default()
        };
        assert_eq!(simulate(&bad).unwrap_err().field, "irqs");
        let bad = SimConfig {
            post_prob: 1.5,
            ..SimConfig::default()
        };
        assert_eq!(bad.validate().unwrap_err().field, "post_prob");
        let bad = SimConfig {
            handler_len: LenRange(5, 2),
            ..SimConfig::default()
        };
        assert_eq!(bad.validate().unwrap_err().field, "handler_len");
        let bad = SimConfig {
            horizon: 0,
            ..SimConfig::default()
        };
        assert_eq!(bad.validate().unwrap_err().field, "horizon");
    }

    #[test]
    fn config_json_round_trip_with_defaults() {
        let json = r#"{"irqs": [1, 2, 3], "arrival_prob": [0.1, 0.0, 0.2], "seed": 9}"#;
        let config: SimConfig = serde_json::from_str(json).unwrap();
        assert_eq!(config.irqs, vec![1, 2, 3]);
        assert_eq!(config.seed, 9);
        assert!(config.drain);
        assert!(simulate(&config).is_ok());
        assert!(serde_json::from_str::<SimConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
