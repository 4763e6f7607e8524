//! Deterministic discrete-event simulation of a partitionable network.
//!
//! Each tick runs, in this order: crashes scheduled for the tick, script
//! entries (by ascending pid, then script order), message deliveries due at
//! the tick (in send order), and, on multiples of the sync period, one
//! anti-entropy request from every live process to a randomly chosen peer.
//!
//! A message crossing partition blocks at send time is cut; messages already
//! in flight when a partition starts still arrive. Deliveries to crashed
//! processes are lost. Every message carries the sender's Lamport counter,
//! which the receiver observes.
//!
//! After the horizon the live processes sharing a component exchange
//! digests and diffs directly until a full round changes no log. If they
//! all share one component, each records one converged read per object.

pub mod gen;
mod scenario;

pub use scenario::{Crash, Fault, Partition, Scenario, ScenarioError, ScriptEntry};

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::adt::Op;
use crate::clock::{Comparator, ProcessId, Timestamp};
use crate::history::History;
use crate::replica::{Replica, ReplicaError, ReplicaMode, SyncDigest, Uid, UpdateRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("replica: {0}")]
    Replica(#[from] ReplicaError),
}

/// Run-wide replica configuration, identical at every process.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimConfig {
    pub comparator: Comparator,
    pub mode: ReplicaMode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    /// Best-effort broadcast at issue time.
    Update(UpdateRecord),
    SyncRequest(SyncDigest),
    SyncReply { records: Vec<UpdateRecord>, digest: SyncDigest },
    SyncPush(Vec<UpdateRecord>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub id: u64,
    pub from: ProcessId,
    pub to: ProcessId,
    /// Sender's Lamport counter at send time.
    pub clock: Timestamp,
    pub payload: Payload,
}

/// Why a sent message never arrived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Partitioned,
    Dropped,
    DestinationCrashed,
}

/// Everything observable about communication, in simulation order. Enough
/// to rebuild the happened-before relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    Issue { tick: u64, pid: ProcessId, uid: Uid, ts: Timestamp },
    Send { tick: u64, msg: u64, from: ProcessId, to: ProcessId },
    Receive { tick: u64, msg: u64, at: ProcessId },
    Lost { tick: u64, msg: u64, why: Loss },
    Crash { tick: u64, pid: ProcessId },
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub history: History,
    pub trace: Vec<TraceEvent>,
    /// `None` for crashed processes.
    pub replicas: BTreeMap<ProcessId, Option<Replica>>,
    /// Whether all live processes ended in one component and converged
    /// reads were recorded.
    pub quiescent: bool,
    /// Anti-entropy rounds of the final phase, including the last one that
    /// changed nothing.
    pub fixpoint_rounds: usize,
}

impl SimOutcome {
    pub fn live(&self) -> impl Iterator<Item = &Replica> {
        self.replicas.values().flatten()
    }

    /// The comparator-sorted log of the lowest live replica, as
    /// (process, 0-based update ordinal) pairs.
    pub fn timestamp_order(&self) -> Option<Vec<(ProcessId, usize)>> {
        let r = self.live().next()?;
        Some(
            r.sorted_log()
                .iter()
                .map(|rec| (rec.uid.origin, (rec.uid.seq - 1) as usize))
                .collect(),
        )
    }
}

pub struct Simulator {
    scenario: Scenario,
    tick: u64,
    replicas: BTreeMap<ProcessId, Option<Replica>>,
    in_flight: BTreeMap<(u64, u64), Envelope>,
    next_msg: u64,
    rng: ChaCha8Rng,
    history: History,
    trace: Vec<TraceEvent>,
}

impl Simulator {
    pub fn new(scenario: &Scenario, config: &SimConfig) -> Result<Self, SimError> {
        scenario.validate()?;
        let mut history = History::new(scenario.procs);
        let mut replicas = BTreeMap::new();
        for (obj, adt) in &scenario.objects {
            history
                .add_object(obj.clone(), *adt)
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        }
        for pid in scenario.pids() {
            let mut r = Replica::new(pid, config.comparator.clone(), config.mode);
            for (obj, adt) in &scenario.objects {
                r.register_object(obj.clone(), *adt)?;
            }
            replicas.insert(pid, Some(r));
        }
        Ok(Simulator {
            scenario: scenario.clone(),
            tick: 0,
            replicas,
            in_flight: BTreeMap::new(),
            next_msg: 0,
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            history,
            trace: Vec::new(),
        })
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn replica(&self, pid: ProcessId) -> Option<&Replica> {
        self.replicas.get(&pid).and_then(Option::as_ref)
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    pub fn active_partition(&self) -> Option<&Partition> {
        self.scenario.partition_at(self.tick)
    }

    fn is_live(&self, pid: ProcessId) -> bool {
        matches!(self.replicas.get(&pid), Some(Some(_)))
    }

    fn live_pids(&self) -> Vec<ProcessId> {
        self.replicas
            .iter()
            .filter(|(_, r)| r.is_some())
            .map(|(p, _)| *p)
            .collect()
    }

    fn replica_mut(&mut self, pid: ProcessId) -> &mut Replica {
        self.replicas
            .get_mut(&pid)
            .and_then(Option::as_mut)
            .expect("live replica")
    }

    /// Advances one tick.
    pub fn step(&mut self) -> Result<(), SimError> {
        let t = self.tick;

        let crashing: Vec<ProcessId> = self.scenario.crashes.iter().filter(|c| c.at == t).map(|c| c.pid).collect();
        for pid in crashing {
            if let Some(slot) = self.replicas.get_mut(&pid) {
                *slot = None;
                self.history.mark_crashed(pid).expect("pid validated");
                self.trace.push(TraceEvent::Crash { tick: t, pid });
            }
        }

        let mut entries: Vec<ScriptEntry> = self.scenario.script.iter().filter(|e| e.at == t).cloned().collect();
        entries.sort_by_key(|e| e.pid);
        for e in entries {
            self.execute(e)?;
        }

        let due: Vec<(u64, u64)> = self.in_flight.range((t, 0)..=(t, u64::MAX)).map(|(k, _)| *k).collect();
        for key in due {
            let env = self.in_flight.remove(&key).expect("due message");
            self.deliver(env)?;
        }

        if t.is_multiple_of(self.scenario.sync_period) && self.scenario.procs > 1 {
            for pid in self.live_pids() {
                let k = self.rng.gen_range(1..self.scenario.procs);
                // uniform over the other processes
                let peer = ProcessId((pid.0 - 1 + k) % self.scenario.procs + 1);
                let digest = self.replica_mut(pid).make_digest();
                self.send(pid, peer, Payload::SyncRequest(digest));
            }
        }

        self.tick += 1;
        Ok(())
    }

    fn execute(&mut self, e: ScriptEntry) -> Result<(), SimError> {
        let t = self.tick;
        match e.op {
            Op::Update(op) => {
                let rec = self.replica_mut(e.pid).local_update(&e.obj, op)?;
                self.history
                    .push_update(e.pid, &e.obj, op)
                    .map_err(|err| ScenarioError::Invalid(err.to_string()))?;
                self.trace.push(TraceEvent::Issue {
                    tick: t,
                    pid: e.pid,
                    uid: rec.uid,
                    ts: rec.ts,
                });
                for peer in self.scenario.pids().filter(|p| *p != e.pid) {
                    self.send(e.pid, peer, Payload::Update(rec.clone()));
                }
            }
            Op::Query(q) => {
                let value = self.replica_mut(e.pid).query(&e.obj, q)?;
                self.history
                    .push_query(e.pid, &e.obj, q, value, false)
                    .map_err(|err| ScenarioError::Invalid(err.to_string()))?;
            }
        }
        Ok(())
    }

    fn send(&mut self, from: ProcessId, to: ProcessId, payload: Payload) {
        let t = self.tick;
        let msg = self.next_msg;
        self.next_msg += 1;
        self.trace.push(TraceEvent::Send { tick: t, msg, from, to });
        if self.scenario.partition_at(t).is_some_and(|p| !p.connected(from, to)) {
            self.trace.push(TraceEvent::Lost { tick: t, msg, why: Loss::Partitioned });
            return;
        }
        let dropped = self.rng.gen_bool(self.scenario.drop);
        let delay = self.rng.gen_range(self.scenario.min_delay..=self.scenario.max_delay);
        if dropped {
            self.trace.push(TraceEvent::Lost { tick: t, msg, why: Loss::Dropped });
            return;
        }
        let clock = Timestamp::new(self.replicas[&from].as_ref().expect("live sender").clock().current(), from);
        let env = Envelope {
            id: msg,
            from,
            to,
            clock,
            payload,
        };
        self.in_flight.insert((t + delay, msg), env);
    }

    fn deliver(&mut self, env: Envelope) -> Result<(), SimError> {
        let t = self.tick;
        if !self.is_live(env.to) {
            self.trace.push(TraceEvent::Lost {
                tick: t,
                msg: env.id,
                why: Loss::DestinationCrashed,
            });
            return Ok(());
        }
        self.trace.push(TraceEvent::Receive {
            tick: t,
            msg: env.id,
            at: env.to,
        });
        let me = env.to;
        let r = self.replica_mut(me);
        r.observe(&env.clock);
        match env.payload {
            Payload::Update(rec) => {
                r.receive_update(rec)?;
            }
            Payload::SyncRequest(remote) => {
                let records = r.diff_since(&remote);
                let digest = r.make_digest();
                self.send(me, env.from, Payload::SyncReply { records, digest });
            }
            Payload::SyncReply { records, digest } => {
                for rec in records {
                    r.receive_update(rec)?;
                }
                let push = r.diff_since(&digest);
                if !push.is_empty() {
                    self.send(me, env.from, Payload::SyncPush(push));
                }
            }
            Payload::SyncPush(records) => {
                for rec in records {
                    r.receive_update(rec)?;
                }
            }
        }
        Ok(())
    }

    /// Components of the live processes under the partition in force after
    /// the horizon, each sorted, ordered by lowest member.
    fn final_components(&self, at: u64) -> Vec<Vec<ProcessId>> {
        let part = self.scenario.partition_at(at);
        let mut comps: Vec<Vec<ProcessId>> = Vec::new();
        for pid in self.live_pids() {
            match comps
                .iter_mut()
                .find(|c| part.is_none_or(|p| p.connected(c[0], pid)))
            {
                Some(c) => c.push(pid),
                None => comps.push(vec![pid]),
            }
        }
        comps
    }

    /// Reliable pairwise exchange inside each component until a whole round
    /// leaves every log unchanged. Traced like ordinary messages.
    fn sync_to_fixpoint(&mut self, comps: &[Vec<ProcessId>]) -> Result<usize, SimError> {
        let mut rounds = 0;
        loop {
            rounds += 1;
            let mut changed = false;
            for comp in comps {
                for (i, &a) in comp.iter().enumerate() {
                    for &b in &comp[i + 1..] {
                        changed |= self.direct_pull(a, b)?;
                        changed |= self.direct_pull(b, a)?;
                    }
                }
            }
            if !changed {
                return Ok(rounds);
            }
        }
    }

    /// `to` sends its digest to `from`, which answers with the diff.
    fn direct_pull(&mut self, to: ProcessId, from: ProcessId) -> Result<bool, SimError> {
        let t = self.tick;
        let request = self.replica_mut(to).make_digest();
        let req_id = self.next_msg;
        let reply_id = req_id + 1;
        self.next_msg += 2;
        let to_clock = Timestamp::new(self.replica_mut(to).clock().current(), to);
        self.trace.push(TraceEvent::Send { tick: t, msg: req_id, from: to, to: from });
        self.trace.push(TraceEvent::Receive { tick: t, msg: req_id, at: from });
        let src = self.replica_mut(from);
        src.observe(&to_clock);
        let records = src.diff_since(&request);
        let from_clock = Timestamp::new(src.clock().current(), from);
        self.trace.push(TraceEvent::Send { tick: t, msg: reply_id, from, to });
        self.trace.push(TraceEvent::Receive { tick: t, msg: reply_id, at: to });
        let dst = self.replica_mut(to);
        dst.observe(&from_clock);
        let before = dst.log_len();
        for rec in records {
            dst.receive_update(rec)?;
        }
        Ok(dst.log_len() != before)
    }

    /// Runs ticks through the horizon, then the final anti-entropy phase
    /// and converged reads.
    pub fn run_to_end(mut self) -> Result<SimOutcome, SimError> {
        let horizon = self.scenario.horizon();
        while self.tick <= horizon {
            self.step()?;
        }
        let comps = self.final_components(self.tick);
        let fixpoint_rounds = self.sync_to_fixpoint(&comps)?;
        let quiescent = comps.len() <= 1;
        if quiescent {
            for pid in self.live_pids() {
                let reads: Vec<_> = self
                    .scenario
                    .objects
                    .iter()
                    .map(|(obj, adt)| (obj.clone(), adt.read_query()))
                    .collect();
                for (obj, q) in reads {
                    let value = self.replicas[&pid].as_ref().expect("live").converged_value(&obj)?;
                    self.history
                        .push_query(pid, &obj, q, value, true)
                        .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
                }
            }
        }
        Ok(SimOutcome {
            history: self.history,
            trace: self.trace,
            replicas: self.replicas,
            quiescent,
            fixpoint_rounds,
        })
    }
}

/// Simulates `scenario` with the given replica configuration.
pub fn simulate(scenario: &Scenario, config: &SimConfig) -> Result<SimOutcome, SimError> {
    Simulator::new(scenario, config)?.run_to_end()
}

/// Simulates with update-consistent replicas ordered by Lamport timestamps
/// and returns the recorded history.
pub fn run(scenario: &Scenario) -> Result<History, SimError> {
    Ok(simulate(scenario, &SimConfig::default())?.history)
}

/// Process ids that issued at least one update.
pub fn updaters(h: &History) -> BTreeSet<ProcessId> {
    h.pids().filter(|p| h.updates(*p).next().is_some()).collect()
}
