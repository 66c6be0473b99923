//! Event vocabulary, instance identity, and label types.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Kind of an execution point in a trace.
///
/// The first seven kinds are the key execution points of the concurrency
/// model; `Other` is any ordinary instruction between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PointKind {
    /// Entry of an interrupt handler.
    IhEntry,
    /// Exit of an interrupt handler.
    IhExit,
    /// Entry of a task's run function.
    RunTaskEntry,
    /// Exit of a task's run function.
    RunTaskExit,
    /// Entry of a task-posting operation.
    PostTaskEntry,
    /// Successful posting to the OS task queue.
    PostOk,
    /// Rejected posting (task already pending).
    PostFail,
    /// Any instruction that is none of the seven key points.
    Other,
}

impl PointKind {
    /// True for kinds that carry an interrupt number.
    pub fn requires_irq(self) -> bool {
        matches!(self, PointKind::IhEntry | PointKind::IhExit)
    }

    /// True for kinds that carry a task name.
    pub fn requires_task(self) -> bool {
        matches!(
            self,
            PointKind::RunTaskEntry
                | PointKind::RunTaskExit
                | PointKind::PostTaskEntry
                | PointKind::PostOk
                | PointKind::PostFail
        )
    }

    /// The token used for this kind in trace files.
    pub fn token(self) -> &'static str {
        match self {
            PointKind::IhEntry => "IHEntry",
            PointKind::IhExit => "IHExit",
            PointKind::RunTaskEntry => "RunTaskEntry",
            PointKind::RunTaskExit => "RunTaskExit",
            PointKind::PostTaskEntry => "PostTaskEntry",
            PointKind::PostOk => "PostOk",
            PointKind::PostFail => "PostFail",
            PointKind::Other => "Other",
        }
    }
}

impl fmt::Display for PointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for PointKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "IHEntry" => PointKind::IhEntry,
            "IHExit" => PointKind::IhExit,
            "RunTaskEntry" => PointKind::RunTaskEntry,
            "RunTaskExit" => PointKind::RunTaskExit,
            "PostTaskEntry" => PointKind::PostTaskEntry,
            "PostOk" => PointKind::PostOk,
            "PostFail" => PointKind::PostFail,
            "Other" => PointKind::Other,
            _ => return Err(()),
        })
    }
}

/// Instance identity: `id` is unique per trace, `itype` is the interrupt
/// number of the triggering interrupt. `0:0` is the reserved
/// non-interrupt instance covering boot, idle, and scheduler code.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Inst {
    id: u64,
    itype: u32,
}

impl Inst {
    /// The reserved non-interrupt instance `0:0`.
    pub const NON_INTERRUPT: Inst = Inst { id: 0, itype: 0 };

    /// A real interrupt procedure instance. Both parts must be non-zero.
    pub fn ipi(id: u64, itype: u32) -> Inst {
        assert!(id != 0 && itype != 0, "IPI identity parts must be non-zero");
        Inst { id, itype }
    }

    /// Builds an instance from raw parts, enforcing that `id == 0` iff
    /// `itype == 0`.
    pub fn from_parts(id: u64, itype: u32) -> Option<Inst> {
        if (id == 0) != (itype == 0) {
            None
        } else {
            Some(Inst { id, itype })
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn itype(&self) -> u32 {
        self.itype
    }

    pub fn is_non_interrupt(&self) -> bool {
        self.id == 0
    }
}

impl fmt::Display for Inst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.id, self.itype)
    }
}

/// Position of an event within its instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pos {
    Start,
    End,
    Interm,
}

impl Pos {
    pub fn token(self) -> &'static str {
        match self {
            Pos::Start => "START",
            Pos::End => "END",
            Pos::Interm => "INTERM",
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Pos {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "START" => Pos::Start,
            "END" => Pos::End,
            "INTERM" => Pos::Interm,
            _ => return Err(()),
        })
    }
}

/// Per-event verdict: which instance the event belongs to and where it sits
/// in that instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Label {
    pub inst: Inst,
    pub pos: Pos,
}

impl Label {
    pub fn new(inst: Inst, pos: Pos) -> Label {
        Label { inst, pos }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.inst, self.pos)
    }
}

/// Violation of the per-kind field presence rules.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventError {
    #[error("event {seq}: {kind} requires an irq field")]
    MissingIrq { seq: u64, kind: PointKind },
    #[error("event {seq}: {kind} does not take an irq field")]
    UnexpectedIrq { seq: u64, kind: PointKind },
    #[error("event {seq}: irq must be a positive interrupt number")]
    ZeroIrq { seq: u64 },
    #[error("event {seq}: {kind} requires a task field")]
    MissingTask { seq: u64, kind: PointKind },
    #[error("event {seq}: {kind} does not take a task field")]
    UnexpectedTask { seq: u64, kind: PointKind },
    #[error("event {seq}: task name must be a non-empty [A-Za-z0-9_$]+ token")]
    BadTaskName { seq: u64 },
}

/// True iff `name` is a valid task name token.
pub fn is_task_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'$')
}

/// One instruction-level occurrence in a trace.
///
/// Field presence is tied to the kind: `irq` is present iff the kind is
/// `IHEntry`/`IHExit`, `task` iff the kind is one of the task-related
/// points. The constructors enforce this, so no event with contradictory
/// fields can exist.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    seq: u64,
    kind: PointKind,
    irq: Option<u32>,
    task: Option<String>,
}

impl Event {
    /// Validating constructor used by the parser.
    pub fn new(
        seq: u64,
        kind: PointKind,
        irq: Option<u32>,
        task: Option<String>,
    ) -> Result<Event, EventError> {
        match (kind.requires_irq(), irq) {
            (true, None) => return Err(EventError::MissingIrq { seq, kind }),
            (true, Some(0)) => return Err(EventError::ZeroIrq { seq }),
            (false, Some(_)) => return Err(EventError::UnexpectedIrq { seq, kind }),
            _ => {}
        }
        match (kind.requires_task(), &task) {
            (true, None) => return Err(EventError::MissingTask { seq, kind }),
            (true, Some(t)) if !is_task_name(t) => {
                return Err(EventError::BadTaskName { seq });
            }
            (false, Some(_)) => return Err(EventError::UnexpectedTask { seq, kind }),
            _ => {}
        }
        Ok(Event {
            seq,
            kind,
            irq,
            task,
        })
    }

    pub fn ih_entry(seq: u64, irq: u32) -> Event {
        assert!(irq > 0, "irq must be positive");
        Event {
            seq,
            kind: PointKind::IhEntry,
            irq: Some(irq),
            task: None,
        }
    }

    pub fn ih_exit(seq: u64, irq: u32) -> Event {
        assert!(irq > 0, "irq must be positive");
        Event {
            seq,
            kind: PointKind::IhExit,
            irq: Some(irq),
            task: None,
        }
    }

    pub fn task_point(seq: u64, kind: PointKind, task: &str) -> Event {
        assert!(kind.requires_task(), "kind does not carry a task");
        assert!(is_task_name(task), "invalid task name");
        Event {
            seq,
            kind,
            irq: None,
            task: Some(task.to_owned()),
        }
    }

    pub fn other(seq: u64) -> Event {
        Event {
            seq,
            kind: PointKind::Other,
            irq: None,
            task: None,
        }
    }

    /// Position of the event in its trace (0-based).
    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn kind(&self) -> PointKind {
        self.kind
    }

    pub fn irq(&self) -> Option<u32> {
        self.irq
    }

    pub fn task(&self) -> Option<&str> {
        self.task.as_deref()
    }
}

/// An event with the identifier's verdict and, when produced by the
/// simulator, the ground-truth label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledEvent {
    pub event: Event,
    pub label: Label,
    pub truth: Option<Label>,
}
