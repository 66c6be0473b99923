//! Property scanners over labeled traces.
//!
//! Each scanner walks a (events, labels) pair and collects violations of
//! one of the structural guarantees the identifier is supposed to provide.
//! Empty results mean the property holds.

use std::collections::HashMap;

use crate::event::{Event, Inst, Label, PointKind, Pos};

/// Instance switches may only happen at an `IHEntry`/`RunTaskEntry` event
/// or immediately after an `IHExit`/`RunTaskExit` event. Returns the seqs
/// of events whose instance differs from the predecessor's without such a
/// switch point.
pub fn switch_point_violations(events: &[Event], labels: &[Label]) -> Vec<u64> {
    assert_eq!(events.len(), labels.len());
    let mut violations = Vec::new();
    for k in 1..events.len() {
        if labels[k].inst == labels[k - 1].inst {
            continue;
        }
        let entering = matches!(
            events[k].kind(),
            PointKind::IhEntry | PointKind::RunTaskEntry
        );
        let leaving = matches!(
            events[k - 1].kind(),
            PointKind::IhExit | PointKind::RunTaskExit
        );
        if !(entering || leaving) {
            violations.push(k as u64);
        }
    }
    violations
}

/// Endpoint soundness on drained traces: every instance has exactly one
/// START (at an IHEntry, at its first event) and exactly one END (at an
/// IHExit/RunTaskExit, at its last event), with START preceding END.
/// Returns human-readable violation descriptions.
pub fn endpoint_violations(events: &[Event], labels: &[Label]) -> Vec<String> {
    assert_eq!(events.len(), labels.len());
    let mut violations = Vec::new();

    #[derive(Default)]
    struct Span {
        starts: Vec<usize>,
        ends: Vec<usize>,
        first: usize,
        last: usize,
    }
    let mut spans: HashMap<Inst, Span> = HashMap::new();

    for (i, (event, label)) in events.iter().zip(labels).enumerate() {
        match label.pos {
            Pos::Start => {
                if event.kind() != PointKind::IhEntry {
                    violations.push(format!("seq {i}: START at a {} event", event.kind()));
                }
            }
            Pos::End => {
                if !matches!(event.kind(), PointKind::IhExit | PointKind::RunTaskExit) {
                    violations.push(format!("seq {i}: END at a {} event", event.kind()));
                }
            }
            Pos::Interm => {}
        }
        if label.inst.is_non_interrupt() {
            continue;
        }
        let span = spans.entry(label.inst).or_insert(Span {
            first: i,
            ..Default::default()
        });
        span.last = i;
        match label.pos {
            Pos::Start => span.starts.push(i),
            Pos::End => span.ends.push(i),
            Pos::Interm => {}
        }
    }

    for (inst, span) in &spans {
        if span.starts.len() != 1 {
            violations.push(format!(
                "instance {inst}: {} START labels",
                span.starts.len()
            ));
        }
        if span.ends.len() != 1 {
            violations.push(format!("instance {inst}: {} END labels", span.ends.len()));
        }
        if let (Some(&start), Some(&end)) = (span.starts.first(), span.ends.first()) {
            if start > end {
                violations.push(format!(
                    "instance {inst}: START at {start} after END at {end}"
                ));
            }
            if start != span.first {
                violations.push(format!(
                    "instance {inst}: START at {start} is not its first event {}",
                    span.first
                ));
            }
            if end != span.last {
                violations.push(format!(
                    "instance {inst}: END at {end} is not its last event {}",
                    span.last
                ));
            }
        }
    }
    violations.sort();
    violations
}
