//! Scripted trace generation.
//!
//! A script is an ordered list of machine actions executed by a checked
//! builder: arrivals, postings and their completions, handler/task exits,
//! and filler instructions. The builder enforces the concurrency model's
//! structural rules (one open posting per context, FIFO task scheduling,
//! balanced handler nesting) and attaches the same ground-truth labels as
//! the random generator, so a script is a reproducible, byte-stable trace.
//!
//! Scripts serialize as a JSON list of `{"action": ..., ...}` objects; see
//! [`Action`]. Two scenarios are built in under the names `fig1a` and
//! `fig1b`: a posting that fails because its task is already pending, and
//! a posting interrupted by a handler whose own posting completes first,
//! inverting the task execution order.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{is_task_name, Inst, LabeledEvent, PointKind};
use crate::simulator::{finalize_truth, RawEvent};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("action {index}: {reason}")]
pub struct ScenarioError {
    pub index: usize,
    pub reason: String,
}

/// One scripted machine action. The optional `at` field asserts the event
/// index the action's (first) event must land on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    /// An interrupt arrives; its handler starts executing immediately.
    IrqArrive {
        irq: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        at: Option<u64>,
    },
    /// The current context begins posting `task` (PostTaskEntry).
    Post {
        task: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        at: Option<u64>,
    },
    /// The open posting of the current context completes successfully.
    PostOk {
        task: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        at: Option<u64>,
    },
    /// The open posting of the current context is rejected.
    #[serde(alias = "post_fail_expected")]
    PostFail {
        task: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        at: Option<u64>,
    },
    /// The innermost handler finishes.
    IhExit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        at: Option<u64>,
    },
    /// The scheduler dequeues and starts the head task (must be `task`).
    RunTask {
        task: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        at: Option<u64>,
    },
    /// The running task finishes.
    TaskExit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        at: Option<u64>,
    },
    /// `n` ordinary body instructions in the current context.
    #[serde(alias = "body_len")]
    Other {
        #[serde(default = "default_body_len")]
        n: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        at: Option<u64>,
    },
}

fn default_body_len() -> u64 {
    1
}

impl Action {
    fn at(&self) -> Option<u64> {
        match self {
            Action::IrqArrive { at, .. }
            | Action::Post { at, .. }
            | Action::PostOk { at, .. }
            | Action::PostFail { at, .. }
            | Action::IhExit { at }
            | Action::RunTask { at, .. }
            | Action::TaskExit { at }
            | Action::Other { at, .. } => *at,
        }
    }
}

struct Context {
    irq: u32,
    task: Option<String>,
    inst: Inst,
    window: Option<String>,
}

/// Executes a scenario and returns the truth-labeled trace.
pub fn script(actions: &[Action]) -> Result<Vec<LabeledEvent>, ScenarioError> {
    let mut stack: Vec<Context> = Vec::new();
    let mut active: Option<Context> = None;
    // The non-interrupt context can hold an open posting too (boot code
    // posting a task before any interrupt fires).
    let mut boot_window: Option<String> = None;
    let mut pending: BTreeSet<String> = BTreeSet::new();
    let mut queue: VecDeque<(String, Inst)> = VecDeque::new();
    let mut raw: Vec<RawEvent> = Vec::new();
    let mut next_id = 0u64;

    for (index, action) in actions.iter().enumerate() {
        let fail = |reason: String| ScenarioError { index, reason };
        if let Some(at) = action.at() {
            if at != raw.len() as u64 {
                return Err(fail(format!(
                    "declared at={at} but the next event index is {}",
                    raw.len()
                )));
            }
        }

        // Current execution context: innermost handler, else the running
        // task, else the non-interrupt context.
        macro_rules! cur_inst {
            () => {
                stack
                    .last()
                    .map(|c| c.inst)
                    .or_else(|| active.as_ref().map(|c| c.inst))
                    .unwrap_or(Inst::NON_INTERRUPT)
            };
        }
        macro_rules! cur_window {
            () => {
                stack
                    .last_mut()
                    .map(|c| &mut c.window)
                    .or_else(|| active.as_mut().map(|c| &mut c.window))
                    .unwrap_or(&mut boot_window)
            };
        }

        match action {
            Action::IrqArrive { irq, .. } => {
                if *irq == 0 {
                    return Err(fail("irq must be positive".into()));
                }
                next_id += 1;
                let inst = Inst::ipi(next_id, *irq);
                stack.push(Context {
                    irq: *irq,
                    task: None,
                    inst,
                    window: None,
                });
                raw.push(RawEvent {
                    kind: PointKind::IhEntry,
                    irq: Some(*irq),
                    task: None,
                    inst,
                });
            }
            Action::Post { task, .. } => {
                if !is_task_name(task) {
                    return Err(fail(format!("invalid task name `{task}`")));
                }
                let inst = cur_inst!();
                let window = cur_window!();
                if let Some(open) = window {
                    return Err(fail(format!(
                        "context already has an open posting of `{open}`"
                    )));
                }
                *window = Some(task.clone());
                raw.push(RawEvent {
                    kind: PointKind::PostTaskEntry,
                    irq: None,
                    task: Some(task.clone()),
                    inst,
                });
            }
            Action::PostOk { task, .. } => {
                let inst = cur_inst!();
                let window = cur_window!();
                if window.as_deref() != Some(task.as_str()) {
                    return Err(fail(format!(
                        "no open posting of `{task}` in the current context"
                    )));
                }
                if pending.contains(task) {
                    return Err(fail(format!(
                        "posting of already-pending task `{task}` cannot succeed"
                    )));
                }
                *window = None;
                pending.insert(task.clone());
                queue.push_back((task.clone(), inst));
                raw.push(RawEvent {
                    kind: PointKind::PostOk,
                    irq: None,
                    task: Some(task.clone()),
                    inst,
                });
            }
            Action::PostFail { task, .. } => {
                let inst = cur_inst!();
                let window = cur_window!();
                if window.as_deref() != Some(task.as_str()) {
                    return Err(fail(format!(
                        "no open posting of `{task}` in the current context"
                    )));
                }
                *window = None;
                raw.push(RawEvent {
                    kind: PointKind::PostFail,
                    irq: None,
                    task: Some(task.clone()),
                    inst,
                });
            }
            Action::IhExit { .. } => {
                let top = stack
                    .last()
                    .ok_or_else(|| fail("IHExit with no active handler".into()))?;
                if let Some(open) = &top.window {
                    return Err(fail(format!(
                        "handler exits during an open posting of `{open}`"
                    )));
                }
                let top = stack.pop().expect("checked above");
                raw.push(RawEvent {
                    kind: PointKind::IhExit,
                    irq: Some(top.irq),
                    task: None,
                    inst: top.inst,
                });
            }
            Action::RunTask { task, .. } => {
                if !stack.is_empty() {
                    return Err(fail("tasks are scheduled only outside handlers".into()));
                }
                if active.is_some() {
                    return Err(fail("a task is already running".into()));
                }
                if boot_window.is_some() {
                    return Err(fail("cannot schedule a task during an open posting".into()));
                }
                match queue.front() {
                    Some((head, _)) if head == task => {}
                    Some((head, _)) => {
                        return Err(fail(format!(
                            "FIFO order: queue head is `{head}`, not `{task}`"
                        )));
                    }
                    None => return Err(fail(format!("no pending task `{task}` to run"))),
                }
                let (name, inst) = queue.pop_front().expect("checked above");
                pending.remove(&name);
                active = Some(Context {
                    irq: 0,
                    task: Some(name.clone()),
                    inst,
                    window: None,
                });
                raw.push(RawEvent {
                    kind: PointKind::RunTaskEntry,
                    irq: None,
                    task: Some(name),
                    inst,
                });
            }
            Action::TaskExit { .. } => {
                let task = active
                    .as_ref()
                    .ok_or_else(|| fail("RunTaskExit with no running task".into()))?;
                if let Some(open) = &task.window {
                    return Err(fail(format!(
                        "task exits during an open posting of `{open}`"
                    )));
                }
                let task = active.take().expect("checked above");
                raw.push(RawEvent {
                    kind: PointKind::RunTaskExit,
                    irq: None,
                    task: task.task,
                    inst: task.inst,
                });
            }
            Action::Other { n, .. } => {
                let inst = cur_inst!();
                for _ in 0..*n {
                    raw.push(RawEvent {
                        kind: PointKind::Other,
                        irq: None,
                        task: None,
                        inst,
                    });
                }
            }
        }
    }

    if let Some(open) = stack.last() {
        return Err(ScenarioError {
            index: actions.len(),
            reason: format!("scenario ends inside handler of irq {}", open.irq),
        });
    }
    if active.is_some() {
        return Err(ScenarioError {
            index: actions.len(),
            reason: "scenario ends inside a running task".into(),
        });
    }
    if let Some(open) = boot_window {
        return Err(ScenarioError {
            index: actions.len(),
            reason: format!("scenario ends with an open posting of `{open}`"),
        });
    }
    Ok(finalize_truth(raw))
}

/// Built-in scenario by name (`fig1a`, `fig1b`).
pub fn builtin(name: &str) -> Option<Vec<Action>> {
    match name {
        "fig1a" => Some(fig1a()),
        "fig1b" => Some(fig1b()),
        _ => None,
    }
}

/// Names of the built-in scenarios.
pub const BUILTIN_NAMES: [&str; 2] = ["fig1a", "fig1b"];

fn post(task: &str) -> Action {
    Action::Post {
        task: task.into(),
        at: None,
    }
}

fn post_ok(task: &str) -> Action {
    Action::PostOk {
        task: task.into(),
        at: None,
    }
}

/// An instance whose first posting succeeds and is later re-posted while
/// still pending, so the second posting fails; the instance ends at its
/// task's RunTaskExit.
fn fig1a() -> Vec<Action> {
    vec![
        Action::IrqArrive { irq: 1, at: None },
        post("T1"),
        post_ok("T1"),
        Action::IrqArrive { irq: 2, at: None },
        Action::IhExit { at: None },
        post("T2"),
        Action::PostFail {
            task: "T2".into(),
            at: None,
        },
        Action::IhExit { at: None },
        Action::RunTask {
            task: "T1".into(),
            at: None,
        },
        Action::TaskExit { at: None },
    ]
}

/// A posting interrupted mid-way by a second instance whose own posting
/// completes first: the preempting instance's task runs first, and the
/// first instance's handler exit is not its endpoint.
fn fig1b() -> Vec<Action> {
    vec![
        Action::IrqArrive { irq: 1, at: None },
        post("T1"),
        Action::IrqArrive { irq: 2, at: None },
        post("T2"),
        post_ok("T2"),
        Action::IhExit { at: None },
        post_ok("T1"),
        Action::IhExit { at: None },
        Action::RunTask {
            task: "T2".into(),
            at: None,
        },
        Action::TaskExit { at: None },
        Action::RunTask {
            task: "T1".into(),
            at: None,
        },
        Action::TaskExit { at: None },
    ]
}
