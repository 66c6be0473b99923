//! Instance-based profiling and the overhead benchmark harness.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::event::{Event, Inst, LabeledEvent, PointKind, Pos};
use crate::identifier::{self, StepError};
use crate::legacy;
use crate::simulator::{simulate, ConfigError, SimConfig};

/// Per-instance runtime profile computed from a labeled trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InstanceProfile {
    pub inst: Inst,
    /// Seq of the instance's first event (its start point).
    pub start_seq: u64,
    /// Seq of the instance's last event (its endpoint on drained traces).
    pub end_seq: u64,
    /// Events attributed to the instance.
    pub event_count: u64,
    /// Task runs belonging to the instance.
    pub task_runs: u64,
    /// Failed postings issued by the instance.
    pub failed_posts: u64,
    /// Times the instance was directly preempted by another instance's
    /// handler while still live.
    pub preemptions: u64,
    /// Peak number of simultaneously pending tasks of the instance.
    pub max_pending: u64,
}

#[derive(Default)]
struct Acc {
    start_seq: u64,
    end_seq: u64,
    event_count: u64,
    task_runs: u64,
    failed_posts: u64,
    preemptions: u64,
    pending: i64,
    max_pending: i64,
}

/// Builds one profile per distinct non-reserved instance, ordered by
/// instance id. Interleaving metrics come from label transitions.
pub fn profile(labeled: &[LabeledEvent]) -> Vec<InstanceProfile> {
    let mut accs: BTreeMap<Inst, Acc> = BTreeMap::new();

    for (i, le) in labeled.iter().enumerate() {
        let inst = le.label.inst;

        // Direct preemption: a handler entry for a different instance while
        // the predecessor's instance is still live (its label is not END).
        if le.event.kind() == PointKind::IhEntry && i > 0 {
            let prev = labeled[i - 1].label;
            if prev.inst != inst && !prev.inst.is_non_interrupt() && prev.pos != Pos::End {
                if let Some(acc) = accs.get_mut(&prev.inst) {
                    acc.preemptions += 1;
                }
            }
        }

        if inst.is_non_interrupt() {
            continue;
        }
        let seq = le.event.seq();
        let acc = accs.entry(inst).or_insert(Acc {
            start_seq: seq,
            ..Acc::default()
        });
        acc.end_seq = seq;
        acc.event_count += 1;
        match le.event.kind() {
            PointKind::RunTaskEntry => {
                acc.task_runs += 1;
                acc.pending -= 1;
            }
            PointKind::PostOk => {
                acc.pending += 1;
                acc.max_pending = acc.max_pending.max(acc.pending);
            }
            PointKind::PostFail => acc.failed_posts += 1,
            _ => {}
        }
    }

    accs.into_iter()
        .map(|(inst, acc)| InstanceProfile {
            inst,
            start_seq: acc.start_seq,
            end_seq: acc.end_seq,
            event_count: acc.event_count,
            task_runs: acc.task_runs,
            failed_posts: acc.failed_posts,
            preemptions: acc.preemptions,
            max_pending: acc.max_pending.max(0) as u64,
        })
        .collect()
}

/// CSV rendering of profiles (header row, LF line endings).
pub fn profiles_to_csv(profiles: &[InstanceProfile]) -> String {
    let mut out = String::from(
        "inst_id,inst_type,start_seq,end_seq,event_count,task_runs,failed_posts,preemptions,max_pending\n",
    );
    for p in profiles {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            p.inst.id(),
            p.inst.itype(),
            p.start_seq,
            p.end_seq,
            p.event_count,
            p.task_runs,
            p.failed_posts,
            p.preemptions,
            p.max_pending
        ));
    }
    out
}

/// Which identifier implementation a bench row measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    New,
    Legacy,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::New => "new",
            Algo::Legacy => "legacy",
        })
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "new" => Ok(Algo::New),
            "legacy" => Ok(Algo::Legacy),
            other => Err(format!("unknown algorithm `{other}` (expected new|legacy)")),
        }
    }
}

/// One measurement: a trace length, an algorithm, its peak auxiliary state
/// (stack + queue + history elements), and median wall times in seconds.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub trace_len: u64,
    pub algo: Algo,
    pub aux_space_peak: u64,
    pub wall_time_total: f64,
    pub wall_time_per_event: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("trace_len,algo,aux_space_peak,wall_time_total,wall_time_per_event\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.9},{:.12}\n",
                row.trace_len,
                row.algo,
                row.aux_space_peak,
                row.wall_time_total,
                row.wall_time_per_event
            ));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] StepError),
    #[error("bench: {0}")]
    Invalid(String),
}

/// Generates one trace per horizon in `lengths` and measures both
/// identifiers on it. Space numbers are exact and reproducible for a fixed
/// seed; wall times are medians over `reps` repetitions and machine
/// dependent. Identifiers run sequentially on the calling thread.
pub fn bench(config: &SimConfig, lengths: &[u64], reps: usize) -> Result<BenchReport, BenchError> {
    if lengths.is_empty() {
        return Err(BenchError::Invalid("lengths must be non-empty".into()));
    }
    if !lengths.windows(2).all(|w| w[0] < w[1]) {
        return Err(BenchError::Invalid(
            "lengths must be strictly ascending".into(),
        ));
    }
    if reps == 0 {
        return Err(BenchError::Invalid("reps must be at least 1".into()));
    }

    let mut rows = Vec::with_capacity(lengths.len() * 2);
    for &horizon in lengths {
        let cfg = SimConfig {
            horizon,
            ..config.clone()
        };
        let events: Vec<Event> = simulate(&cfg)?.into_iter().map(|le| le.event).collect();
        for algo in [Algo::New, Algo::Legacy] {
            // Untimed pass: warms caches and yields the (deterministic)
            // space metrics.
            let metrics = match algo {
                Algo::New => identifier::run_metrics_only(&events)?,
                Algo::Legacy => legacy::legacy_run_metrics_only(&events)?,
            };
            let mut times = Vec::with_capacity(reps);
            for _ in 0..reps {
                let t0 = Instant::now();
                match algo {
                    Algo::New => {
                        identifier::run_metrics_only(&events)?;
                    }
                    Algo::Legacy => {
                        legacy::legacy_run_metrics_only(&events)?;
                    }
                }
                times.push(t0.elapsed().as_secs_f64());
            }
            times.sort_by(f64::total_cmp);
            let total = times[times.len() / 2];
            rows.push(BenchRow {
                trace_len: events.len() as u64,
                algo,
                aux_space_peak: metrics.aux_space_peak(),
                wall_time_total: total,
                wall_time_per_event: if events.is_empty() {
                    0.0
                } else {
                    total / events.len() as f64
                },
            });
        }
    }
    Ok(BenchReport { rows })
}
