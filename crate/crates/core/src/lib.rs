//! Identification and analysis of interrupt procedure instances in
//! interrupt-driven execution traces.
//!
//! An interrupt procedure instance (IPI) is one execution of an interrupt
//! procedure: the interrupt handler run plus every deferred task run whose
//! successful posting happened inside the instance. This crate bundles
//! everything needed to work with such instances at desk scale:
//!
//! - [`event`] / [`format`] — the event vocabulary and the line-oriented
//!   trace file format shared by all tools.
//! - [`identifier`] — the online, event-at-a-time instance identifier with
//!   constant auxiliary state.
//! - [`legacy`] — the delayed-identification model that assumes atomic task
//!   postings, kept for overhead and divergence comparisons.
//! - [`simulator`] / [`script`] — a deterministic, seedable generator of
//!   traces under the TinyOS-style concurrency model (preemptive handlers,
//!   non-atomic postings, per-task pending flags, FIFO deferred scheduling),
//!   emitting ground-truth labels.
//! - [`oracle`] — an independent offline labeler used as the equivalence
//!   oracle for the online identifier.
//! - [`checks`] — property scanners over labeled traces (switch points,
//!   endpoint soundness, uniqueness).
//! - [`analyzer`] — per-instance profiling and the space/time overhead
//!   benchmark harness.

pub mod analyzer;
pub mod checks;
pub mod event;
pub mod format;
pub mod identifier;
pub mod legacy;
pub mod oracle;
pub mod rng;
pub mod script;
pub mod simulator;

pub use event::{Event, Inst, Label, LabeledEvent, PointKind, Pos};
