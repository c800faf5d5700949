//! Trace export.
//!
//! JSON-lines: a header object on the first line, then one
//! `{"step", "node", "prev", "next"}` object per step.
//! Binary: `MLTRACE\0`, a little-endian u32 version, a u32-length-prefixed
//! JSON header, a u64 event count, then 5 bytes per event (u32 node, one byte
//! packing `prev` in the high nibble and `next` in the low nibble). Step
//! numbers are implicit in the binary form.

use std::io::{BufRead, Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Announcement, Event, RunTrace, Schedule, SignalAssignment, StopCondition};
use crate::graphgen::io::graph_hash;
use crate::graphgen::Graph;
use crate::{Error, Result};

pub const FORMAT: &str = "majority-lab-trace";
pub const VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MLTRACE\0";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub graph_hash: String,
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub delta: f64,
    /// Signal bits as a `0`/`1` string indexed by node.
    pub signals: String,
    pub signal_seed: Option<u64>,
    pub schedule: Schedule,
    pub stop: StopCondition,
    pub forced_incorrect: Vec<usize>,
    pub forced_correct: Option<usize>,
    pub steps: u64,
    pub stabilization_step: Option<u64>,
    pub truncated: bool,
}

impl TraceHeader {
    pub fn of(trace: &RunTrace) -> Self {
        TraceHeader {
            format: FORMAT.into(),
            version: VERSION,
            graph_hash: graph_hash(&trace.graph),
            n: trace.n(),
            edges: trace.graph.edges().collect(),
            delta: trace.signals.delta(),
            signals: trace.signals.to_bit_string(),
            signal_seed: trace.signals.seed(),
            schedule: trace.schedule.clone(),
            stop: trace.stop,
            forced_incorrect: trace.forced_incorrect.clone(),
            forced_correct: trace.forced_correct,
            steps: trace.steps(),
            stabilization_step: trace.stabilization_step,
            truncated: trace.truncated,
        }
    }

    fn check(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(Error::parse(0, format!("unknown trace format {:?}", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::parse(0, format!("unsupported trace version {}", self.version)));
        }
        Ok(())
    }

    fn into_trace(self, events: Vec<Event>) -> Result<RunTrace> {
        let graph = Graph::from_edges(self.n, &self.edges)?;
        if graph_hash(&graph) != self.graph_hash {
            return Err(Error::Structural("embedded graph does not match its hash".into()));
        }
        let mut signals = SignalAssignment::from_bit_string(&self.signals, self.delta)?;
        if let Some(seed) = self.signal_seed {
            let resampled = SignalAssignment::sample(self.n, self.delta, seed)?;
            if resampled.bits() != signals.bits() {
                return Err(Error::Structural("signal bits disagree with their seed".into()));
            }
            signals = resampled;
        }
        if signals.len() != self.n {
            return Err(Error::Structural("signal count differs from node count".into()));
        }
        if events.len() as u64 != self.steps {
            return Err(Error::IncompleteInput(format!(
                "header promises {} events, found {}",
                self.steps,
                events.len()
            )));
        }
        let mut trace = RunTrace {
            graph: Arc::new(graph),
            signals,
            schedule: self.schedule,
            stop: self.stop,
            forced_incorrect: self.forced_incorrect,
            forced_correct: self.forced_correct,
            events,
            final_state: Vec::new(),
            stabilization_step: self.stabilization_step,
            truncated: self.truncated,
        };
        let mut state = trace.initial_state();
        for (i, e) in trace.events.iter().enumerate() {
            if e.t != i as u64 + 1 {
                return Err(Error::Structural(format!("event {i} has step {}", e.t)));
            }
            if e.node >= trace.n() || state[e.node] != e.prev {
                return Err(Error::Structural(format!("event at step {} is inconsistent", e.t)));
            }
            state[e.node] = e.next;
        }
        trace.final_state = state;
        Ok(trace)
    }
}

pub fn write_jsonl<W: Write>(trace: &RunTrace, mut out: W) -> Result<()> {
    serde_json::to_writer(&mut out, &TraceHeader::of(trace))?;
    out.write_all(b"\n")?;
    for e in &trace.events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(mut input: R) -> Result<RunTrace> {
    let mut offset = 0u64;
    let mut line = String::new();
    let read = input.read_line(&mut line)?;
    if read == 0 {
        return Err(Error::IncompleteInput("empty trace".into()));
    }
    let header: TraceHeader =
        serde_json::from_str(&line).map_err(|e| Error::parse(0, format!("trace header: {e}")))?;
    header.check()?;
    offset += read as u64;
    let mut events = Vec::with_capacity(header.steps.min(1 << 24) as usize);
    loop {
        line.clear();
        let read = input.read_line(&mut line)?;
        if read == 0 {
            break;
        }
        if !line.trim().is_empty() {
            let e: Event =
                serde_json::from_str(&line).map_err(|err| Error::parse(offset, err.to_string()))?;
            events.push(e);
        }
        offset += read as u64;
    }
    header.into_trace(events)
}

pub fn write_binary<W: Write>(trace: &RunTrace, mut out: W) -> Result<()> {
    let header = serde_json::to_vec(&TraceHeader::of(trace))?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    let len = u32::try_from(header.len()).map_err(|_| Error::Capacity("trace header over 4 GiB".into()))?;
    out.write_all(&len.to_le_bytes())?;
    out.write_all(&header)?;
    out.write_all(&(trace.events.len() as u64).to_le_bytes())?;
    for e in &trace.events {
        let node = u32::try_from(e.node).map_err(|_| Error::Capacity("node id over 32 bits".into()))?;
        out.write_all(&node.to_le_bytes())?;
        out.write_all(&[(e.prev.code() << 4) | e.next.code()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<RunTrace> {
    let mut offset = 0u64;
    let mut take = |buf: &mut [u8], what: &str| -> Result<u64> {
        input.read_exact(buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => {
                Error::IncompleteInput(format!("trace ends inside {what} at byte {offset}"))
            }
            _ => Error::Io(e),
        })?;
        let at = offset;
        offset += buf.len() as u64;
        Ok(at)
    };
    let mut magic = [0u8; 8];
    take(&mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::parse(0, "not a binary trace"));
    }
    let mut word = [0u8; 4];
    let at = take(&mut word, "version")?;
    if u32::from_le_bytes(word) != VERSION {
        return Err(Error::parse(at, "unsupported trace version"));
    }
    take(&mut word, "header length")?;
    let mut header = vec![0u8; u32::from_le_bytes(word) as usize];
    let at = take(&mut header, "header")?;
    let header: TraceHeader = serde_json::from_slice(&header).map_err(|e| Error::parse(at, e.to_string()))?;
    header.check()?;
    let mut count = [0u8; 8];
    take(&mut count, "event count")?;
    let count = u64::from_le_bytes(count);
    let mut events = Vec::with_capacity(count.min(1 << 24) as usize);
    let mut record = [0u8; 5];
    for i in 0..count {
        let at = take(&mut record, "event")?;
        let node = u32::from_le_bytes([record[0], record[1], record[2], record[3]]) as usize;
        let decode = |c: u8| Announcement::from_code(c).ok_or_else(|| Error::parse(at + 4, "bad announcement code"));
        events.push(Event {
            t: i + 1,
            node,
            prev: decode(record[4] >> 4)?,
            next: decode(record[4] & 0x0f)?,
        });
    }
    header.into_trace(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run, DynamicsState};
    use crate::graphgen::gen_preferential_attachment;

    fn sample_trace() -> RunTrace {
        let g = Arc::new(gen_preferential_attachment(40, 3).unwrap());
        let n = g.node_count();
        let x = SignalAssignment::sample(n, 0.25, 8).unwrap();
        let s = DynamicsState::new(n).with_forced_incorrect(&[5]).unwrap();
        run(&g, &x, &Schedule::seeded(8), s, StopCondition::exactly(500)).unwrap()
    }

    fn same(a: &RunTrace, b: &RunTrace) {
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.signals.bits(), b.signals.bits());
        assert_eq!(a.events, b.events);
        assert_eq!(a.final_state, b.final_state);
        assert_eq!(a.stabilization_step, b.stabilization_step);
        assert_eq!(a.forced_incorrect, b.forced_incorrect);
        assert_eq!(a.schedule, b.schedule);
    }

    #[test]
    fn jsonl_round_trip() {
        let t = sample_trace();
        let mut buf = Vec::new();
        write_jsonl(&t, &mut buf).unwrap();
        same(&t, &read_jsonl(buf.as_slice()).unwrap());
    }

    #[test]
    fn binary_round_trip() {
        let t = sample_trace();
        let mut buf = Vec::new();
        write_binary(&t, &mut buf).unwrap();
        same(&t, &read_binary(buf.as_slice()).unwrap());
    }

    #[test]
    fn truncated_inputs_are_rejected() {
        let t = sample_trace();
        let mut buf = Vec::new();
        write_binary(&t, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_binary(buf.as_slice()), Err(Error::IncompleteInput(_))));

        let mut text = Vec::new();
        write_jsonl(&t, &mut text).unwrap();
        let cut = text.len() - 40;
        let cut = text[..cut].iter().rposition(|&b| b == b'\n').unwrap() + 1;
        assert!(matches!(read_jsonl(&text[..cut]), Err(Error::IncompleteInput(_))));
    }

    #[test]
    fn tampered_event_is_detected() {
        let t = sample_trace();
        let mut text = Vec::new();
        write_jsonl(&t, &mut text).unwrap();
        let s = String::from_utf8(text).unwrap();
        let bad = s.replacen("\"prev\":null", "\"prev\":1", 1);
        assert!(read_jsonl(bad.as_bytes()).is_err());
    }
}
