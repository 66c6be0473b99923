//! Independent offline labeler.
//!
//! Labels a whole trace with global matching instead of incremental state,
//! so it can serve as an equivalence oracle for the online identifier:
//!
//! - Pass 1 matches `IHEntry`/`IHExit` pairs by bracket matching and numbers
//!   instances in handler-arrival order; every event gets a context instance
//!   by interval containment (innermost handler interval wins), and the k-th
//!   `RunTaskEntry`..`RunTaskExit` span inherits the instance in effect at
//!   the k-th `PostOk` (global FIFO matching).
//! - Pass 2 marks, for each instance, its first event as the start and its
//!   last event as the end; everything else is intermediate.
//!
//! The oracle requires balanced, drained traces: on a drained trace an
//! instance's last event coincides with the endpoint the online identifier
//! derives from task-queue emptiness, and that agreement is exactly the
//! property the oracle exists to check.

use std::collections::HashMap;

use thiserror::Error;

use crate::event::{Event, Inst, Label, PointKind, Pos};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("event {seq}: unbalanced trace: {reason}")]
    Unbalanced { seq: u64, reason: String },
    #[error("event {seq}: undrained trace: PostOk without a later RunTaskEntry")]
    Undrained { seq: u64 },
    #[error("event {seq}: RunTaskEntry with no pending posted task")]
    OrphanRunTaskEntry { seq: u64 },
    #[error("label sequences have different lengths ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
}

fn unbalanced(seq: u64, reason: impl Into<String>) -> OracleError {
    OracleError::Unbalanced {
        seq,
        reason: reason.into(),
    }
}

/// Labels a balanced, drained trace offline.
pub fn label_offline(events: &[Event]) -> Result<Vec<Label>, OracleError> {
    let n = events.len();

    // Pass 1a: bracket-match handler intervals and number instances by
    // IHEntry arrival order. Validate task-point structure along the way.
    let mut handler_stack: Vec<(usize, Inst)> = Vec::new();
    let mut intervals: Vec<(usize, usize, Inst)> = Vec::new();
    let mut inst_counter = 0u64;
    let mut post_ok_at: Vec<usize> = Vec::new();
    let mut task_entry_at: Vec<usize> = Vec::new();
    let mut open_task: Option<usize> = None;
    let mut spans: Vec<(usize, usize)> = Vec::new();

    for (i, event) in events.iter().enumerate() {
        let seq = i as u64;
        match event.kind() {
            PointKind::IhEntry => {
                inst_counter += 1;
                let inst = Inst::ipi(inst_counter, event.irq().expect("IHEntry carries an irq"));
                handler_stack.push((i, inst));
            }
            PointKind::IhExit => {
                let (start, inst) = handler_stack
                    .pop()
                    .ok_or_else(|| unbalanced(seq, "IHExit without a matching IHEntry"))?;
                intervals.push((start, i, inst));
            }
            PointKind::PostOk => post_ok_at.push(i),
            PointKind::RunTaskEntry => {
                if !handler_stack.is_empty() {
                    return Err(unbalanced(seq, "task scheduled inside a handler"));
                }
                if open_task.is_some() {
                    return Err(unbalanced(seq, "task started inside another task"));
                }
                if task_entry_at.len() == post_ok_at.len() {
                    return Err(OracleError::OrphanRunTaskEntry { seq });
                }
                let k = task_entry_at.len();
                let posted = events[post_ok_at[k]].task().expect("PostOk carries a task");
                let run = event.task().expect("RunTaskEntry carries a task");
                if posted != run {
                    return Err(unbalanced(
                        seq,
                        format!("FIFO order: expected task {posted}, found {run}"),
                    ));
                }
                task_entry_at.push(i);
                open_task = Some(i);
            }
            PointKind::RunTaskExit => {
                let start = open_task
                    .take()
                    .ok_or_else(|| unbalanced(seq, "RunTaskExit without a running task"))?;
                spans.push((start, i));
            }
            _ => {}
        }
    }
    if let Some(&(start, _)) = handler_stack.first() {
        return Err(unbalanced(
            start as u64,
            "IHEntry without a matching IHExit",
        ));
    }
    if let Some(start) = open_task {
        return Err(unbalanced(
            start as u64,
            "RunTaskEntry without a RunTaskExit",
        ));
    }
    if task_entry_at.len() < post_ok_at.len() {
        return Err(OracleError::Undrained {
            seq: post_ok_at[task_entry_at.len()] as u64,
        });
    }

    // Pass 1b: context by interval containment. Handler intervals are
    // written outermost-first so inner handlers overwrite; task spans then
    // fill whatever handlers did not claim.
    let mut ctx: Vec<Option<Inst>> = vec![None; n];
    intervals.sort_by_key(|&(start, _, _)| start);
    for &(start, end, inst) in &intervals {
        for slot in &mut ctx[start..=end] {
            *slot = Some(inst);
        }
    }
    for (k, &(start, end)) in spans.iter().enumerate() {
        let inherited = ctx[post_ok_at[k]].unwrap_or(Inst::NON_INTERRUPT);
        for slot in &mut ctx[start..=end] {
            if slot.is_none() {
                *slot = Some(inherited);
            }
        }
    }
    let inst_of: Vec<Inst> = ctx
        .into_iter()
        .map(|c| c.unwrap_or(Inst::NON_INTERRUPT))
        .collect();

    // Pass 2: first event of an instance is its start, last is its end.
    let mut first: HashMap<Inst, usize> = HashMap::new();
    let mut last: HashMap<Inst, usize> = HashMap::new();
    for (i, inst) in inst_of.iter().enumerate() {
        if !inst.is_non_interrupt() {
            first.entry(*inst).or_insert(i);
            last.insert(*inst, i);
        }
    }

    // The non-interrupt instance has no start or end of its own, but a
    // task attributed to it still ends like any other task run: its
    // RunTaskExit is an endpoint when no non-interrupt-posted task is
    // still pending there. Mirrors the identifier's queue-emptiness rule.
    let mut boot_pending = vec![0i64; n];
    let mut delta = 0i64;
    for i in 0..n {
        match events[i].kind() {
            PointKind::PostOk if inst_of[i].is_non_interrupt() => delta += 1,
            PointKind::RunTaskEntry if inst_of[i].is_non_interrupt() => delta -= 1,
            _ => {}
        }
        boot_pending[i] = delta;
    }

    let labels = inst_of
        .iter()
        .enumerate()
        .map(|(i, &inst)| {
            let pos = if inst.is_non_interrupt() {
                if events[i].kind() == PointKind::RunTaskExit && boot_pending[i] == 0 {
                    Pos::End
                } else {
                    Pos::Interm
                }
            } else if first[&inst] == i {
                Pos::Start
            } else if last[&inst] == i {
                Pos::End
            } else {
                Pos::Interm
            };
            Label::new(inst, pos)
        })
        .collect();
    Ok(labels)
}

/// A position where two label sequences disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelDiff {
    pub seq: u64,
    pub a: Label,
    pub b: Label,
}

/// Returns every position where `a` and `b` differ; empty iff equal.
pub fn diff_labels(a: &[Label], b: &[Label]) -> Result<Vec<LabelDiff>, OracleError> {
    if a.len() != b.len() {
        return Err(OracleError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b.iter())
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, (&x, &y))| LabelDiff {
            seq: i as u64,
            a: x,
            b: y,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::PointKind as K;

    fn ev(seq: u64, kind: K, irq: Option<u32>, task: Option<&str>) -> Event {
        Event::new(seq, kind, irq, task.map(|t| t.to_owned())).unwrap()
    }

    fn label(id: u64, itype: u32, pos: Pos) -> Label {
        Label::new(Inst::from_parts(id, itype).unwrap(), pos)
    }

    #[test]
    fn minimal_instance() {
        let events = vec![
            ev(0, K::IhEntry, Some(3), None),
            ev(1, K::IhExit, Some(3), None),
        ];
        assert_eq!(
            label_offline(&events).unwrap(),
            vec![label(1, 3, Pos::Start), label(1, 3, Pos::End)]
        );
    }

    #[test]
    fn undrained_trace_is_rejected() {
        let events = vec![
            ev(0, K::IhEntry, Some(1), None),
            ev(1, K::PostTaskEntry, None, Some("T1")),
            ev(2, K::PostOk, None, Some("T1")),
            ev(3, K::IhExit, Some(1), None),
        ];
        assert_eq!(
            label_offline(&events).unwrap_err(),
            OracleError::Undrained { seq: 2 }
        );
    }

    #[test]
    fn unbalanced_traces_are_rejected() {
        let events = vec![ev(0, K::IhEntry, Some(1), None)];
        assert!(matches!(
            label_offline(&events).unwrap_err(),
            OracleError::Unbalanced { seq: 0, .. }
        ));
        let events = vec![ev(0, K::RunTaskEntry, None, Some("T1"))];
        assert_eq!(
            label_offline(&events).unwrap_err(),
            OracleError::OrphanRunTaskEntry { seq: 0 }
        );
    }

    #[test]
    fn diff_labels_is_empty_on_identical_sequences() {
        let a = vec![label(1, 1, Pos::Start), label(1, 1, Pos::End)];
        assert_eq!(diff_labels(&a, &a).unwrap(), vec![]);
    }

    #[test]
    fn diff_labels_reports_positions() {
        let a = vec![label(1, 1, Pos::Start), label(1, 1, Pos::End)];
        let b = vec![label(1, 1, Pos::Start), label(1, 1, Pos::Interm)];
        let diffs = diff_labels(&a, &b).unwrap();
        assert_eq!(diffs.len(), 1);
        assert_eq!(diffs[0].seq, 1);
        assert!(diff_labels(&a, &b[..1]).is_err());
    }

    #[test]
    fn boot_posted_task_gets_non_interrupt_instance() {
        let events = vec![
            ev(0, K::PostTaskEntry, None, Some("T1")),
            ev(1, K::PostOk, None, Some("T1")),
            ev(2, K::RunTaskEntry, None, Some("T1")),
            ev(3, K::RunTaskExit, None, Some("T1")),
        ];
        let labels = label_offline(&events).unwrap();
        assert!(labels.iter().all(|l| l.inst.is_non_interrupt()));
        assert_eq!(labels[3].pos, Pos::End);
        assert_eq!(labels[2].pos, Pos::Interm);
    }
}
