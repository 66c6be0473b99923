//! Line-oriented trace file format.
//!
//! One event per line: the kind token followed by space-separated
//! `key=value` pairs. Recognized keys are `irq` (decimal, positive),
//! `task` (`[A-Za-z0-9_$]+`), an optional explicit `seq` (validated
//! against line order), and the label keys `inst=<id>:<itype>`,
//! `pos=<START|END|INTERM>`, `truth=<id>:<itype>:<pos>`. Lines beginning
//! with `#` are comments. LF line endings.
//!
//! Example: `IHExit irq=2 inst=2:2 pos=END`

use std::io::{self, BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::event::{Event, Inst, Label, LabeledEvent, PointKind, Pos};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One parsed trace line: the event plus whatever label columns were present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedRecord {
    pub event: Event,
    pub label: Option<Label>,
    pub truth: Option<Label>,
    /// 1-based source line (comments and blank lines count).
    pub line: usize,
}

fn malformed(line: usize, reason: impl Into<String>) -> ParseError {
    ParseError::MalformedLine {
        line,
        reason: reason.into(),
    }
}

fn parse_inst(s: &str) -> Option<Inst> {
    let (id, itype) = s.split_once(':')?;
    Inst::from_parts(id.parse().ok()?, itype.parse().ok()?)
}

fn parse_truth(s: &str) -> Option<Label> {
    let (inst, pos) = s.rsplit_once(':')?;
    Some(Label::new(parse_inst(inst)?, Pos::from_str(pos).ok()?))
}

/// Checks the positional constraints a label must satisfy at a given kind:
/// START only at IHEntry, END only at IHExit/RunTaskExit.
fn pos_allowed(kind: PointKind, pos: Pos) -> bool {
    match pos {
        Pos::Start => kind == PointKind::IhEntry,
        Pos::End => matches!(kind, PointKind::IhExit | PointKind::RunTaskExit),
        Pos::Interm => true,
    }
}

fn parse_line(line_no: usize, seq: u64, line: &str) -> Result<ParsedRecord, ParseError> {
    let mut tokens = line.split_ascii_whitespace();
    let kind_token = tokens.next().expect("caller skips blank lines");
    let kind = PointKind::from_str(kind_token)
        .map_err(|_| malformed(line_no, format!("unknown kind `{kind_token}`")))?;

    let mut irq: Option<u32> = None;
    let mut task: Option<String> = None;
    let mut explicit_seq: Option<u64> = None;
    let mut inst: Option<Inst> = None;
    let mut pos: Option<Pos> = None;
    let mut truth: Option<Label> = None;

    for token in tokens {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| malformed(line_no, format!("expected key=value, got `{token}`")))?;
        let dup = |line_no| malformed(line_no, format!("duplicate key `{key}`"));
        match key {
            "irq" => {
                let v: u32 = value
                    .parse()
                    .map_err(|_| malformed(line_no, format!("bad irq `{value}`")))?;
                if irq.replace(v).is_some() {
                    return Err(dup(line_no));
                }
            }
            "task" => {
                if task.replace(value.to_owned()).is_some() {
                    return Err(dup(line_no));
                }
            }
            "seq" => {
                let v: u64 = value
                    .parse()
                    .map_err(|_| malformed(line_no, format!("bad seq `{value}`")))?;
                if explicit_seq.replace(v).is_some() {
                    return Err(dup(line_no));
                }
            }
            "inst" => {
                let v = parse_inst(value)
                    .ok_or_else(|| malformed(line_no, format!("bad inst `{value}`")))?;
                if inst.replace(v).is_some() {
                    return Err(dup(line_no));
                }
            }
            "pos" => {
                let v = Pos::from_str(value)
                    .map_err(|_| malformed(line_no, format!("bad pos `{value}`")))?;
                if pos.replace(v).is_some() {
                    return Err(dup(line_no));
                }
            }
            "truth" => {
                let v = parse_truth(value)
                    .ok_or_else(|| malformed(line_no, format!("bad truth `{value}`")))?;
                if truth.replace(v).is_some() {
                    return Err(dup(line_no));
                }
            }
            _ => return Err(malformed(line_no, format!("unknown key `{key}`"))),
        }
    }

    if let Some(explicit) = explicit_seq {
        if explicit != seq {
            return Err(malformed(
                line_no,
                format!("explicit seq {explicit} does not match position {seq}"),
            ));
        }
    }

    let event = Event::new(seq, kind, irq, task).map_err(|e| malformed(line_no, e.to_string()))?;

    let label = match (inst, pos) {
        (Some(inst), Some(pos)) => Some(Label::new(inst, pos)),
        (None, None) => None,
        _ => return Err(malformed(line_no, "inst and pos must appear together")),
    };
    for l in label.iter().chain(truth.iter()) {
        if !pos_allowed(kind, l.pos) {
            return Err(malformed(
                line_no,
                format!("pos {} is not allowed at a {kind} event", l.pos),
            ));
        }
    }

    Ok(ParsedRecord {
        event,
        label,
        truth,
        line: line_no,
    })
}

/// Parses a trace, keeping any label columns found. `seq` is assigned from
/// line order (comments and blank lines are skipped and do not count).
pub fn parse_records<R: BufRead>(reader: R) -> Result<Vec<ParsedRecord>, ParseError> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        records.push(parse_line(idx + 1, records.len() as u64, trimmed)?);
    }
    Ok(records)
}

/// Parses a trace into bare events, ignoring any label columns.
pub fn parse_trace<R: BufRead>(reader: R) -> Result<Vec<Event>, ParseError> {
    Ok(parse_records(reader)?
        .into_iter()
        .map(|r| r.event)
        .collect())
}

/// Parses a labeled trace; every event line must carry `inst`/`pos`.
pub fn parse_labeled_trace<R: BufRead>(reader: R) -> Result<Vec<LabeledEvent>, ParseError> {
    parse_records(reader)?
        .into_iter()
        .map(|r| {
            let label = r
                .label
                .ok_or_else(|| malformed(r.line, "missing inst/pos label"))?;
            Ok(LabeledEvent {
                event: r.event,
                label,
                truth: r.truth,
            })
        })
        .collect()
}

fn event_line(event: &Event) -> String {
    let mut line = event.kind().token().to_owned();
    if let Some(irq) = event.irq() {
        line.push_str(&format!(" irq={irq}"));
    }
    if let Some(task) = event.task() {
        line.push_str(&format!(" task={task}"));
    }
    line
}

/// Writes a labeled trace. With `with_labels` unset only the event columns
/// are written; otherwise `inst`/`pos` and, where present, `truth` are
/// appended, so that parsing the output reproduces the input.
pub fn write_trace<W: Write>(
    writer: &mut W,
    events: &[LabeledEvent],
    with_labels: bool,
) -> io::Result<()> {
    for le in events {
        let mut line = event_line(&le.event);
        if with_labels {
            line.push_str(&format!(" inst={} pos={}", le.label.inst, le.label.pos));
            if let Some(truth) = &le.truth {
                line.push_str(&format!(" truth={truth}"));
            }
        }
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Writes bare events, one per line.
pub fn write_events<W: Write>(writer: &mut W, events: &[Event]) -> io::Result<()> {
    for event in events {
        writeln!(writer, "{}", event_line(event))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(s: &str) -> Result<Vec<Event>, ParseError> {
        parse_trace(s.as_bytes())
    }

    #[test]
    fn first_line_maps_directly() {
        let events = parse_str("IHEntry irq=1\n").unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].seq(), 0);
        assert_eq!(events[0].kind(), PointKind::IhEntry);
        assert_eq!(events[0].irq(), Some(1));
    }

    #[test]
    fn task_points_carry_names() {
        let events = parse_str("IHEntry irq=1\nPostOk task=T1\n").unwrap();
        assert_eq!(events[1].kind(), PointKind::PostOk);
        assert_eq!(events[1].task(), Some("T1"));
        assert_eq!(events[1].seq(), 1);
    }

    #[test]
    fn irq_required_task_forbidden_on_ih_entry() {
        let err = parse_str("IHEntry task=T1\n").unwrap_err();
        assert!(matches!(err, ParseError::MalformedLine { line: 1, .. }));
    }

    #[test]
    fn unknown_kind_and_key_rejected() {
        assert!(parse_str("Bogus irq=1\n").is_err());
        assert!(parse_str("Other color=red\n").is_err());
        assert!(parse_str("IHEntry irq=1 irq=2\n").is_err());
    }

    #[test]
    fn explicit_seq_must_match_position() {
        assert!(parse_str("IHEntry irq=1 seq=0\nIHExit irq=1 seq=1\n").is_ok());
        let err = parse_str("IHEntry irq=1 seq=0\nIHExit irq=1 seq=3\n").unwrap_err();
        assert!(err.to_string().contains("seq"));
    }

    #[test]
    fn comments_and_blanks_are_skipped() {
        let events = parse_str("# header\n\nIHEntry irq=1\n# mid\nIHExit irq=1\n").unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(events[1].seq(), 1);
    }

    #[test]
    fn labels_parse_and_validate() {
        let recs =
            parse_records("IHExit irq=2 inst=2:2 pos=END truth=2:2:END\n".as_bytes()).unwrap();
        assert_eq!(recs[0].label, Some(Label::new(Inst::ipi(2, 2), Pos::End)));
        assert_eq!(recs[0].truth, Some(Label::new(Inst::ipi(2, 2), Pos::End)));

        // START is only allowed at IHEntry.
        assert!(parse_records("IHExit irq=2 inst=2:2 pos=START\n".as_bytes()).is_err());
        // END is not allowed at a PostOk.
        assert!(parse_records("PostOk task=T1 inst=1:1 pos=END\n".as_bytes()).is_err());
        // inst without pos is malformed.
        assert!(parse_records("Other inst=1:1\n".as_bytes()).is_err());
        // 1:0 violates the id/itype zero pairing.
        assert!(parse_records("Other inst=1:0 pos=INTERM\n".as_bytes()).is_err());
    }

    #[test]
    fn empty_stream_round_trips() {
        let mut out = Vec::new();
        write_trace(&mut out, &[], true).unwrap();
        assert!(out.is_empty());
        assert!(parse_str("").unwrap().is_empty());
    }

    #[test]
    fn single_event_round_trips() {
        let le = LabeledEvent {
            event: Event::ih_entry(0, 1),
            label: Label::new(Inst::ipi(1, 1), Pos::Start),
            truth: Some(Label::new(Inst::ipi(1, 1), Pos::Start)),
        };
        let mut out = Vec::new();
        write_trace(&mut out, std::slice::from_ref(&le), true).unwrap();
        assert_eq!(
            String::from_utf8(out.clone()).unwrap(),
            "IHEntry irq=1 inst=1:1 pos=START truth=1:1:START\n"
        );
        let back = parse_labeled_trace(&out[..]).unwrap();
        assert_eq!(back, vec![le]);
    }
}
