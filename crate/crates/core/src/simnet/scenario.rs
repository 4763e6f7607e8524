//! Scenario scripts: client operations, faults and network parameters.
//!
//! Line-oriented text, one directive per line, `#` starts a comment:
//!
//! ```text
//! procs 2
//! object s intset
//! delay 1 2
//! drop 0.1
//! sync 4
//! seed 7
//! partition 0 3 1|2
//! crash 9 2
//! at 1 1 s I(1)
//! ```
//!
//! A partition's end tick is inclusive; `inf` marks a partition that never
//! heals.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::adt::{Adt, ObjectId, Op};
use crate::clock::{parse_nat, ProcessId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptEntry {
    pub at: u64,
    pub pid: ProcessId,
    pub obj: ObjectId,
    pub op: Op,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub start: u64,
    /// Inclusive; `None` never heals.
    pub end: Option<u64>,
    pub blocks: Vec<Vec<ProcessId>>,
}

impl Partition {
    pub fn active_at(&self, tick: u64) -> bool {
        self.start <= tick && self.end.is_none_or(|e| tick <= e)
    }

    /// Processes absent from every block are isolated.
    pub fn connected(&self, a: ProcessId, b: ProcessId) -> bool {
        a == b || self.blocks.iter().any(|blk| blk.contains(&a) && blk.contains(&b))
    }

    fn overlaps(&self, other: &Partition) -> bool {
        let ends_before = |x: &Partition, y: &Partition| x.end.is_some_and(|e| e < y.start);
        !(ends_before(self, other) || ends_before(other, self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Crash {
    pub at: u64,
    pub pid: ProcessId,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fault {
    Partition { end: Option<u64>, blocks: Vec<Vec<ProcessId>> },
    Heal,
    Crash(ProcessId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub procs: u32,
    pub objects: Vec<(ObjectId, Adt)>,
    pub script: Vec<ScriptEntry>,
    pub partitions: Vec<Partition>,
    pub crashes: Vec<Crash>,
    pub min_delay: u64,
    pub max_delay: u64,
    pub drop: f64,
    pub sync_period: u64,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            procs: 1,
            objects: Vec::new(),
            script: Vec::new(),
            partitions: Vec::new(),
            crashes: Vec::new(),
            min_delay: 1,
            max_delay: 1,
            drop: 0.0,
            sync_period: 4,
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn pids(&self) -> impl Iterator<Item = ProcessId> {
        (1..=self.procs).map(ProcessId)
    }

    pub fn adt_of(&self, obj: &ObjectId) -> Option<Adt> {
        self.objects.iter().find(|(o, _)| o == obj).map(|(_, a)| *a)
    }

    pub fn crash_tick(&self, pid: ProcessId) -> Option<u64> {
        self.crashes.iter().find(|c| c.pid == pid).map(|c| c.at)
    }

    pub fn partition_at(&self, tick: u64) -> Option<&Partition> {
        self.partitions.iter().find(|p| p.active_at(tick))
    }

    /// Last tick with anything scheduled: script entries, crashes and
    /// partition boundaries. Afterwards only dissemination remains.
    pub fn horizon(&self) -> u64 {
        let script = self.script.iter().map(|e| e.at);
        let crashes = self.crashes.iter().map(|c| c.at);
        let parts = self
            .partitions
            .iter()
            .map(|p| p.end.map_or(p.start, |e| e.saturating_add(1)));
        script.chain(crashes).chain(parts).max().unwrap_or(0)
    }

    fn check_pid(&self, pid: ProcessId, what: &str) -> Result<(), ScenarioError> {
        if pid.0 == 0 || pid.0 > self.procs {
            return invalid(format!("{what}: process {pid} out of range 1..={}", self.procs));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.procs == 0 {
            return invalid("procs: at least one process is required");
        }
        let mut seen = BTreeSet::new();
        for (obj, _) in &self.objects {
            if !seen.insert(obj) {
                return invalid(format!("object: `{obj}` declared twice"));
            }
        }
        if self.min_delay == 0 || self.min_delay > self.max_delay {
            return invalid("delay: need 1 <= min <= max");
        }
        if !(0.0..=1.0).contains(&self.drop) {
            return invalid("drop: probability must lie in [0,1]");
        }
        if self.sync_period == 0 {
            return invalid("sync: period must be positive");
        }
        for e in &self.script {
            self.check_pid(e.pid, "at")?;
            let adt = self
                .adt_of(&e.obj)
                .ok_or_else(|| ScenarioError::Invalid(format!("at: undeclared object `{}`", e.obj)))?;
            adt.check_op(&e.op)
                .map_err(|err| ScenarioError::Invalid(format!("at: {err}")))?;
        }
        for (i, p) in self.partitions.iter().enumerate() {
            if p.end.is_some_and(|e| e < p.start) {
                return invalid("partition: end before start");
            }
            let mut members = BTreeSet::new();
            for blk in &p.blocks {
                if blk.is_empty() {
                    return invalid("partition: empty block");
                }
                for pid in blk {
                    self.check_pid(*pid, "partition")?;
                    if !members.insert(*pid) {
                        return invalid(format!("partition: process {pid} in two blocks (blocks must be disjoint)"));
                    }
                }
            }
            if self.partitions[..i].iter().any(|q| q.overlaps(p)) {
                return invalid("partition: intervals overlap (at most one partition at any instant)");
            }
        }
        let mut crashed = BTreeSet::new();
        for c in &self.crashes {
            self.check_pid(c.pid, "crash")?;
            if !crashed.insert(c.pid) {
                return invalid(format!("crash: process {} crashes twice", c.pid));
            }
        }
        for e in &self.script {
            if self.crash_tick(e.pid).is_some_and(|t| e.at >= t) {
                return invalid(format!(
                    "at: process {} has a script entry at tick {} after crashing",
                    e.pid, e.at
                ));
            }
        }
        Ok(())
    }

    /// Adds a fault at `at`. Crashing drops the process's later script
    /// entries; healing cuts the partition active at `at` short.
    pub fn inject(&self, fault: Fault, at: u64) -> Result<Scenario, ScenarioError> {
        let mut sc = self.clone();
        match fault {
            Fault::Partition { end, blocks } => sc.partitions.push(Partition { start: at, end, blocks }),
            Fault::Heal => {
                if let Some(i) = sc.partitions.iter().position(|p| p.active_at(at)) {
                    if sc.partitions[i].start == at {
                        sc.partitions.remove(i);
                    } else {
                        sc.partitions[i].end = Some(at - 1);
                    }
                }
            }
            Fault::Crash(pid) => {
                sc.script.retain(|e| !(e.pid == pid && e.at >= at));
                sc.crashes.push(Crash { at, pid });
            }
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        text.parse()
    }
}

fn format_blocks(blocks: &[Vec<ProcessId>]) -> String {
    blocks
        .iter()
        .map(|b| b.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("|")
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "procs {}", self.procs)?;
        for (obj, adt) in &self.objects {
            writeln!(f, "object {obj} {adt}")?;
        }
        writeln!(f, "delay {} {}", self.min_delay, self.max_delay)?;
        writeln!(f, "drop {}", self.drop)?;
        writeln!(f, "sync {}", self.sync_period)?;
        writeln!(f, "seed {}", self.seed)?;
        for p in &self.partitions {
            let end = p.end.map_or_else(|| "inf".to_string(), |e| e.to_string());
            writeln!(f, "partition {} {end} {}", p.start, format_blocks(&p.blocks))?;
        }
        for c in &self.crashes {
            writeln!(f, "crash {} {}", c.at, c.pid)?;
        }
        for e in &self.script {
            writeln!(f, "at {} {} {} {}", e.at, e.pid, e.obj, e.op)?;
        }
        Ok(())
    }
}

fn nat(s: &str) -> Result<u64, String> {
    parse_nat(s).ok_or_else(|| format!("expected a natural number, found `{s}`"))
}

fn pid(s: &str) -> Result<ProcessId, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_blocks(s: &str) -> Result<Vec<Vec<ProcessId>>, String> {
    s.split('|')
        .map(|blk| blk.split(',').map(pid).collect())
        .collect()
}

impl FromStr for Scenario {
    type Err = ScenarioError;

    /// Parses and validates.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut sc = Scenario::default();
        let mut have_procs = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            parse_directive(&mut sc, &mut have_procs, &fields)
                .map_err(|msg| ScenarioError::Parse { line, msg })?;
        }
        if !have_procs {
            return Err(ScenarioError::Parse {
                line: text.lines().count().max(1),
                msg: "missing `procs <n>`".into(),
            });
        }
        sc.validate()?;
        Ok(sc)
    }
}

fn parse_directive(sc: &mut Scenario, have_procs: &mut bool, fields: &[&str]) -> Result<(), String> {
    match fields {
        ["procs", n] => {
            if *have_procs {
                return Err("duplicate `procs`".into());
            }
            sc.procs = u32::try_from(nat(n)?).map_err(|_| "process count too large".to_string())?;
            *have_procs = true;
        }
        ["object", obj, adt] => {
            let obj: ObjectId = obj.parse().map_err(|e| format!("{e}"))?;
            let adt: Adt = adt.parse().map_err(|e| format!("{e}"))?;
            sc.objects.push((obj, adt));
        }
        ["at", tick, p, obj, op] => {
            let obj: ObjectId = obj.parse().map_err(|e| format!("{e}"))?;
            let op: Op = op.parse().map_err(|e| format!("{e}"))?;
            sc.script.push(ScriptEntry {
                at: nat(tick)?,
                pid: pid(p)?,
                obj,
                op,
            });
        }
        ["partition", start, end, blocks] => {
            let end = if *end == "inf" { None } else { Some(nat(end)?) };
            sc.partitions.push(Partition {
                start: nat(start)?,
                end,
                blocks: parse_blocks(blocks)?,
            });
        }
        ["crash", tick, p] => sc.crashes.push(Crash {
            at: nat(tick)?,
            pid: pid(p)?,
        }),
        ["delay", lo, hi] => {
            sc.min_delay = nat(lo)?;
            sc.max_delay = nat(hi)?;
        }
        ["drop", p] => {
            let ok = !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit() || b == b'.');
            sc.drop = p
                .parse::<f64>()
                .ok()
                .filter(|_| ok)
                .ok_or_else(|| format!("bad probability `{p}`"))?;
        }
        ["sync", n] => sc.sync_period = nat(n)?,
        ["seed", n] => sc.seed = nat(n)?,
        [directive, ..] => {
            let known = ["procs", "object", "at", "partition", "crash", "delay", "drop", "sync", "seed"];
            return Err(if known.contains(directive) {
                format!("wrong number of arguments for `{directive}`")
            } else {
                format!("unknown directive `{directive}`")
            });
        }
        [] => {}
    }
    Ok(())
}
