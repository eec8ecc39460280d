use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::graph::{HamiltonianCycle, NodeId};
use crate::SimTime;

/// One line of the event trace: time, description and, when the cycle
/// changed, the new cycle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub time: SimTime,
    pub event: String,
    pub hc: Option<HamiltonianCycle>,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t", self.time, self.event)?;
        if let Some(hc) = &self.hc {
            write!(f, "{hc}")?;
        }
        Ok(())
    }
}

/// Tab-separated trace, one event per line.
pub fn format_trace(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("line {line}: malformed: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: inconsistent: {reason}")]
    Inconsistent { line: usize, reason: String },
}

impl TraceError {
    pub fn line(&self) -> usize {
        match self {
            TraceError::Malformed { line, .. } | TraceError::Inconsistent { line, .. } => *line,
        }
    }
}

/// How one cycle snapshot follows from the previous one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Splice {
    Insert(NodeId),
    Delete(NodeId),
}

/// Returns the single-vertex splice turning `prev` into `next`, if there is
/// one.
pub fn classify_splice(prev: &HamiltonianCycle, next: &HamiltonianCycle) -> Option<Splice> {
    let a: BTreeSet<NodeId> = prev.as_slice().iter().copied().collect();
    let b: BTreeSet<NodeId> = next.as_slice().iter().copied().collect();
    let added: Vec<NodeId> = b.difference(&a).copied().collect();
    let removed: Vec<NodeId> = a.difference(&b).copied().collect();
    match (added.as_slice(), removed.as_slice()) {
        ([v], []) if next.spliced_out(*v).ok()? == *prev => Some(Splice::Insert(*v)),
        ([], [v]) if prev.spliced_out(*v).ok()? == *next => Some(Splice::Delete(*v)),
        _ => None,
    }
}

fn parse_time(s: &str) -> Result<SimTime, String> {
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    let digits = |t: &str| !t.is_empty() && t.bytes().all(|c| c.is_ascii_digit());
    if !digits(whole) || !(frac.is_empty() || (digits(frac) && frac.len() <= 6)) {
        return Err(format!("bad time {s:?}"));
    }
    let secs: u64 = whole.parse().map_err(|_| format!("bad time {s:?}"))?;
    let micros: u64 = if frac.is_empty() {
        0
    } else {
        format!("{frac:0<6}").parse().expect("six digits")
    };
    secs.checked_mul(1_000_000)
        .and_then(|us| us.checked_add(micros))
        .map(SimTime::from_micros)
        .ok_or_else(|| format!("time {s:?} out of range"))
}

fn parse_cycle(s: &str) -> Result<HamiltonianCycle, String> {
    let ids = s
        .split(',')
        .map(|t| t.trim().parse::<u32>().map_err(|_| format!("bad node id {t:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    HamiltonianCycle::from_ids(&ids).map_err(|e| e.to_string())
}

/// Parses one trace line. `Err` carries the reason.
pub fn parse_line(line: &str) -> Result<TraceEvent, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    let [time, event, hc] = fields.as_slice() else {
        return Err(format!("expected 3 tab-separated fields, found {}", fields.len()));
    };
    if event.trim().is_empty() {
        return Err("empty event".into());
    }
    Ok(TraceEvent {
        time: parse_time(time.trim())?,
        event: event.to_string(),
        hc: if hc.trim().is_empty() {
            None
        } else {
            Some(parse_cycle(hc)?)
        },
    })
}

/// Summary of a consistent trace.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TraceCheck {
    pub events: usize,
    pub snapshots: usize,
    pub splices: Vec<Splice>,
}

/// Parses a whole trace and checks that time never runs backwards and that
/// each cycle snapshot is a one-vertex insertion or deletion of the one
/// before. Line numbers start at 1; blank lines are skipped.
pub fn check_trace(text: &str) -> Result<TraceCheck, TraceError> {
    let mut out = TraceCheck::default();
    let mut last_time = SimTime::ZERO;
    let mut last_hc: Option<HamiltonianCycle> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let e = parse_line(raw).map_err(|reason| TraceError::Malformed { line, reason })?;
        if e.time < last_time {
            return Err(TraceError::Inconsistent {
                line,
                reason: format!("time {} before {}", e.time, last_time),
            });
        }
        last_time = e.time;
        out.events += 1;
        let Some(hc) = e.hc else { continue };
        out.snapshots += 1;
        if let Some(prev) = &last_hc {
            let s = classify_splice(prev, &hc).ok_or_else(|| TraceError::Inconsistent {
                line,
                reason: format!("cycle {hc} is not a one-vertex splice of {prev}"),
            })?;
            out.splices.push(s);
        }
        last_hc = Some(hc);
    }
    Ok(out)
}
