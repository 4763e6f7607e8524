//! Recorded executions and their text form.
//!
//! ```text
//! procs 2
//! object s intset
//! crashed 2
//! E 1 0 U s I(1)
//! E 1 1 Q s R -> {1}
//! E 1 2 Q s R -> {1} ω
//! ```
//!
//! Serialization is canonical (headers, then events by process then index)
//! and byte-stable; determinism tests compare these files directly.

mod check;

pub use check::{
    check_ec, check_uc, check_uc_bounded, reachable_converged_values,
    reachable_converged_values_bounded, verify_witness, CheckError, UcVerdict, WitnessStep,
    DEFAULT_SEARCH_BOUND,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::adt::{Adt, ObjectId, Op, QueryOp, UpdateOp, Value};
use crate::clock::{parse_nat, ProcessId};

/// The ω marker on converged reads.
pub const CONVERGED_MARK: &str = "ω";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HistoryError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid history: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub pid: ProcessId,
    pub index: usize,
    pub obj: ObjectId,
    pub op: Op,
    /// Present exactly for queries.
    pub returned: Option<Value>,
    /// The ω flag: a read that would be returned forever.
    pub converged: bool,
}

impl Event {
    pub fn is_update(&self) -> bool {
        matches!(self.op, Op::Update(_))
    }

    pub fn update_op(&self) -> Option<UpdateOp> {
        match self.op {
            Op::Update(u) => Some(u),
            Op::Query(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct History {
    procs: u32,
    objects: Vec<(ObjectId, Adt)>,
    crashed: BTreeSet<ProcessId>,
    events: BTreeMap<ProcessId, Vec<Event>>,
}

impl History {
    /// Empty history over processes `1..=procs`.
    pub fn new(procs: u32) -> Self {
        History {
            procs,
            ..Default::default()
        }
    }

    pub fn procs(&self) -> u32 {
        self.procs
    }

    pub fn pids(&self) -> impl Iterator<Item = ProcessId> {
        (1..=self.procs).map(ProcessId)
    }

    pub fn objects(&self) -> &[(ObjectId, Adt)] {
        &self.objects
    }

    pub fn adt_of(&self, obj: &ObjectId) -> Option<Adt> {
        self.objects.iter().find(|(o, _)| o == obj).map(|(_, a)| *a)
    }

    pub fn is_crashed(&self, pid: ProcessId) -> bool {
        self.crashed.contains(&pid)
    }

    pub fn crashed(&self) -> impl Iterator<Item = ProcessId> + '_ {
        self.crashed.iter().copied()
    }

    pub fn events(&self, pid: ProcessId) -> &[Event] {
        self.events.get(&pid).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn all_events(&self) -> impl Iterator<Item = &Event> {
        self.events.values().flatten()
    }

    /// Update events of one process, in issue order.
    pub fn updates(&self, pid: ProcessId) -> impl Iterator<Item = &Event> {
        self.events(pid).iter().filter(|e| e.is_update())
    }

    pub fn update_count(&self) -> usize {
        self.all_events().filter(|e| e.is_update()).count()
    }

    fn check_pid(&self, pid: ProcessId) -> Result<(), HistoryError> {
        if pid.0 == 0 || pid.0 > self.procs {
            return Err(HistoryError::Invalid(format!("process {pid} out of range 1..={}", self.procs)));
        }
        Ok(())
    }

    pub fn add_object(&mut self, obj: ObjectId, adt: Adt) -> Result<(), HistoryError> {
        if self.adt_of(&obj).is_some() {
            return Err(HistoryError::Invalid(format!("object {obj} declared twice")));
        }
        self.objects.push((obj, adt));
        Ok(())
    }

    pub fn mark_crashed(&mut self, pid: ProcessId) -> Result<(), HistoryError> {
        self.check_pid(pid)?;
        self.crashed.insert(pid);
        Ok(())
    }

    fn push(&mut self, pid: ProcessId, obj: &ObjectId, op: Op, returned: Option<Value>, converged: bool) -> Result<(), HistoryError> {
        self.check_pid(pid)?;
        let adt = self
            .adt_of(obj)
            .ok_or_else(|| HistoryError::Invalid(format!("undeclared object {obj}")))?;
        adt.check_op(&op).map_err(|e| HistoryError::Invalid(e.to_string()))?;
        if let Some(v) = &returned {
            let shape_ok = matches!(
                (adt, v),
                (Adt::IntSet, Value::Set(_)) | (Adt::Counter | Adt::Register { .. }, Value::Int(_))
            );
            if !shape_ok {
                return Err(HistoryError::Invalid(format!("value {v} is not a {adt} value")));
            }
        }
        let seq = self.events.entry(pid).or_default();
        if !converged && seq.last().is_some_and(|e| e.converged) {
            return Err(HistoryError::Invalid(format!(
                "process {pid}: event after a converged read"
            )));
        }
        if converged && seq.iter().any(|e| e.converged && &e.obj == obj) {
            return Err(HistoryError::Invalid(format!(
                "process {pid}: second converged read of {obj}"
            )));
        }
        let index = seq.len();
        seq.push(Event {
            pid,
            index,
            obj: obj.clone(),
            op,
            returned,
            converged,
        });
        Ok(())
    }

    pub fn push_update(&mut self, pid: ProcessId, obj: &ObjectId, op: UpdateOp) -> Result<(), HistoryError> {
        self.push(pid, obj, Op::Update(op), None, false)
    }

    pub fn push_query(
        &mut self,
        pid: ProcessId,
        obj: &ObjectId,
        op: QueryOp,
        returned: Value,
        converged: bool,
    ) -> Result<(), HistoryError> {
        self.push(pid, obj, Op::Query(op), Some(returned), converged)
    }

    /// Canonical text form.
    pub fn serialize(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str) -> Result<Self, HistoryError> {
        text.parse()
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "procs {}", self.procs)?;
        for (obj, adt) in &self.objects {
            writeln!(f, "object {obj} {adt}")?;
        }
        for pid in &self.crashed {
            writeln!(f, "crashed {pid}")?;
        }
        for e in self.all_events() {
            match &e.returned {
                None => writeln!(f, "E {} {} U {} {}", e.pid, e.index, e.obj, e.op)?,
                Some(v) => {
                    write!(f, "E {} {} Q {} {} -> {v}", e.pid, e.index, e.obj, e.op)?;
                    if e.converged {
                        write!(f, " {CONVERGED_MARK}")?;
                    }
                    writeln!(f)?;
                }
            }
        }
        Ok(())
    }
}

impl FromStr for History {
    type Err = HistoryError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut h: Option<History> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |msg: String| HistoryError::Parse { line, msg };
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            match (fields[0], h.as_mut()) {
                ("procs", None) => {
                    let [_, n] = fields[..] else {
                        return Err(err("expected `procs <n>`".into()));
                    };
                    let n = parse_nat(n)
                        .and_then(|n| u32::try_from(n).ok())
                        .ok_or_else(|| err(format!("bad process count `{n}`")))?;
                    h = Some(History::new(n));
                }
                ("procs", Some(_)) => return Err(err("duplicate `procs` line".into())),
                (_, None) => return Err(err("history must start with `procs <n>`".into())),
                ("object", Some(h)) => {
                    let [_, obj, adt] = fields[..] else {
                        return Err(err("expected `object <id> <adt>`".into()));
                    };
                    if h.events.values().any(|v| !v.is_empty()) {
                        return Err(err("`object` after events".into()));
                    }
                    let obj: ObjectId = obj.parse().map_err(|e| err(format!("{e}")))?;
                    let adt: Adt = adt.parse().map_err(|e| err(format!("{e}")))?;
                    h.add_object(obj, adt).map_err(|e| err(e.to_string()))?;
                }
                ("crashed", Some(h)) => {
                    let [_, pid] = fields[..] else {
                        return Err(err("expected `crashed <pid>`".into()));
                    };
                    let pid: ProcessId = pid.parse().map_err(|e| err(format!("{e}")))?;
                    h.mark_crashed(pid).map_err(|e| err(e.to_string()))?;
                }
                ("E", Some(h)) => parse_event(h, &fields).map_err(err)?,
                (other, Some(_)) => return Err(err(format!("unknown directive `{other}`"))),
            }
        }
        Ok(h.unwrap_or_default())
    }
}

fn parse_event(h: &mut History, fields: &[&str]) -> Result<(), String> {
    let (pid, index, kind, obj, op, rest) = match fields {
        ["E", pid, index, kind, obj, op, rest @ ..] => (*pid, *index, *kind, *obj, *op, rest),
        _ => return Err("expected `E <pid> <index> <U|Q> <obj> <op> ...`".into()),
    };
    let pid: ProcessId = pid.parse().map_err(|e| format!("{e}"))?;
    let index = parse_nat(index).ok_or_else(|| format!("bad index `{index}`"))? as usize;
    let obj: ObjectId = obj.parse().map_err(|e| format!("{e}"))?;
    let op: Op = op.parse().map_err(|e| format!("{e}"))?;
    let expected = h.events(pid).len();
    if index != expected {
        return Err(format!("process {pid}: expected index {expected}, found {index}"));
    }
    let res = match (kind, op, rest) {
        ("U", Op::Update(u), []) => h.push_update(pid, &obj, u),
        ("Q", Op::Query(q), ["->", value, mark @ ..]) => {
            let value: Value = value.parse().map_err(|e| format!("{e}"))?;
            let converged = match mark {
                [] => false,
                [m] if *m == CONVERGED_MARK => true,
                _ => return Err(format!("unexpected trailing tokens {mark:?}")),
            };
            h.push_query(pid, &obj, q, value, converged)
        }
        ("U", _, _) | ("Q", _, _) => return Err(format!("event kind `{kind}` does not match `{op}`")),
        _ => return Err(format!("unknown event kind `{kind}`")),
    };
    res.map_err(|e| e.to_string())
}
