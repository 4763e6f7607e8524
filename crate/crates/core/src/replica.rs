//! The universal update-consistent replica.
//!
//! A replica keeps a grow-only set of timestamped updates. Its visible
//! state for an object is the replay, from the initial state, of that
//! object's updates sorted by the run's [`Comparator`]. A late update with a
//! small key therefore rewrites the replayed history retroactively, and two
//! replicas holding the same set of updates always expose the same state.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::adt::{Adt, AdtError, ObjectId, Op, QueryOp, State, UpdateOp, Value};
use crate::clock::{parse_nat, Comparator, LamportClock, ProcessId, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplicaError {
    #[error("object `{0}` is already registered")]
    DuplicateObject(ObjectId),
    #[error("object `{0}` is not registered")]
    UnknownObject(ObjectId),
    #[error(transparent)]
    Type(#[from] AdtError),
    #[error("malformed record `{0}`")]
    BadRecord(String),
    #[error("malformed digest `{0}`")]
    BadDigest(String),
}

/// Globally unique update id: origin process and its per-origin sequence
/// number, starting at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Uid {
    pub origin: ProcessId,
    pub seq: u64,
}

impl fmt::Display for Uid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.origin, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UpdateRecord {
    pub uid: Uid,
    pub ts: Timestamp,
    pub obj: ObjectId,
    pub op: UpdateOp,
}

impl fmt::Display for UpdateRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "U {} {} {} {} {}",
            self.uid.origin, self.uid.seq, self.ts, self.obj, self.op
        )
    }
}

impl FromStr for UpdateRecord {
    type Err = ReplicaError;

    /// Parses `U <origin> <seq> <lamport>.<pid> <obj> <op-text>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ReplicaError::BadRecord(s.into());
        let fields: Vec<&str> = s.split(' ').collect();
        let ["U", origin, seq, ts, obj, op] = fields[..] else {
            return Err(bad());
        };
        let origin: ProcessId = origin.parse().map_err(|_| bad())?;
        let seq = parse_nat(seq).filter(|n| *n > 0).ok_or_else(bad)?;
        let ts: Timestamp = ts.parse().map_err(|_| bad())?;
        if ts.pid != origin || ts.lamport == 0 {
            return Err(bad());
        }
        Ok(UpdateRecord {
            uid: Uid { origin, seq },
            ts,
            obj: obj.parse().map_err(|_| bad())?,
            op: op.parse().map_err(|_| bad())?,
        })
    }
}

/// Per-origin highest sequence number held. Absent origins hold nothing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct SyncDigest(BTreeMap<ProcessId, u64>);

impl SyncDigest {
    pub fn get(&self, origin: ProcessId) -> u64 {
        self.0.get(&origin).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ProcessId, u64)> + '_ {
        self.0.iter().map(|(p, n)| (*p, *n))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn bump(&mut self, origin: ProcessId, seq: u64) {
        self.0.insert(origin, seq);
    }
}

impl FromIterator<(ProcessId, u64)> for SyncDigest {
    fn from_iter<T: IntoIterator<Item = (ProcessId, u64)>>(iter: T) -> Self {
        SyncDigest(iter.into_iter().filter(|(_, n)| *n > 0).collect())
    }
}

impl fmt::Display for SyncDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("G {")?;
        for (i, (p, n)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{p}:{n}")?;
        }
        f.write_str("}")
    }
}

impl FromStr for SyncDigest {
    type Err = ReplicaError;

    /// Parses `G {<pid>:<n>,...}` with strictly ascending pids and positive
    /// counts, the form produced by `Display`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ReplicaError::BadDigest(s.into());
        let inner = s
            .strip_prefix("G {")
            .and_then(|r| r.strip_suffix('}'))
            .ok_or_else(bad)?;
        let mut map = BTreeMap::new();
        if inner.is_empty() {
            return Ok(SyncDigest(map));
        }
        let mut last = None;
        for entry in inner.split(',') {
            let (p, n) = entry.split_once(':').ok_or_else(bad)?;
            let pid: ProcessId = p.parse().map_err(|_| bad())?;
            let n = parse_nat(n).filter(|n| *n > 0).ok_or_else(bad)?;
            if last.is_some_and(|l| l >= pid) {
                return Err(bad());
            }
            last = Some(pid);
            map.insert(pid, n);
        }
        Ok(SyncDigest(map))
    }
}

/// How a replica turns its log into visible state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReplicaMode {
    /// Replay of the sorted log.
    #[default]
    UpdateConsistent,
    /// Baseline that disseminates updates but never applies them, so every
    /// read returns the initial state. Eventually consistent, not update
    /// consistent.
    IgnoreUpdates,
}

impl fmt::Display for ReplicaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReplicaMode::UpdateConsistent => "uc",
            ReplicaMode::IgnoreUpdates => "ignore-updates",
        })
    }
}

impl FromStr for ReplicaMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uc" => Ok(ReplicaMode::UpdateConsistent),
            "ignore-updates" => Ok(ReplicaMode::IgnoreUpdates),
            _ => Err(format!("unknown replica mode `{s}`")),
        }
    }
}

/// Outcome of handing a record to [`Replica::receive_update`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    /// Already held; nothing changed.
    Duplicate,
    /// Arrived ahead of a missing predecessor from the same origin; parked
    /// until the gap fills.
    Buffered,
    /// The record and this many parked successors entered the log.
    Applied { drained: usize },
}

#[derive(Debug, Clone)]
pub struct Replica {
    pid: ProcessId,
    clock: LamportClock,
    comparator: Comparator,
    mode: ReplicaMode,
    next_seq: u64,
    log: BTreeMap<Uid, UpdateRecord>,
    pending: BTreeMap<Uid, UpdateRecord>,
    digest: SyncDigest,
    types: BTreeMap<ObjectId, Adt>,
    cache: BTreeMap<ObjectId, State>,
}

impl Replica {
    pub fn new(pid: ProcessId, comparator: Comparator, mode: ReplicaMode) -> Self {
        Replica {
            pid,
            clock: LamportClock::new(pid),
            comparator,
            mode,
            next_seq: 1,
            log: BTreeMap::new(),
            pending: BTreeMap::new(),
            digest: SyncDigest::default(),
            types: BTreeMap::new(),
            cache: BTreeMap::new(),
        }
    }

    pub fn pid(&self) -> ProcessId {
        self.pid
    }

    pub fn clock(&self) -> &LamportClock {
        &self.clock
    }

    pub fn comparator(&self) -> &Comparator {
        &self.comparator
    }

    pub fn register_object(&mut self, obj: ObjectId, adt: Adt) -> Result<(), ReplicaError> {
        if self.types.contains_key(&obj) {
            return Err(ReplicaError::DuplicateObject(obj));
        }
        self.cache.insert(obj.clone(), adt.initial());
        self.types.insert(obj, adt);
        Ok(())
    }

    pub fn objects(&self) -> impl Iterator<Item = (&ObjectId, &Adt)> {
        self.types.iter()
    }

    fn adt(&self, obj: &ObjectId) -> Result<Adt, ReplicaError> {
        self.types
            .get(obj)
            .copied()
            .ok_or_else(|| ReplicaError::UnknownObject(obj.clone()))
    }

    /// Issues a client update: fresh uid, fresh timestamp, logged and
    /// replayed locally. The returned record is what gets disseminated.
    pub fn local_update(&mut self, obj: &ObjectId, op: UpdateOp) -> Result<UpdateRecord, ReplicaError> {
        let adt = self.adt(obj)?;
        adt.check_op(&Op::Update(op))?;
        let rec = UpdateRecord {
            uid: Uid {
                origin: self.pid,
                seq: self.next_seq,
            },
            ts: self.clock.tick(),
            obj: obj.clone(),
            op,
        };
        self.next_seq += 1;
        self.insert(rec.clone());
        self.recompute(obj);
        Ok(rec)
    }

    /// Advances the clock past a timestamp carried by any incoming message.
    pub fn observe(&mut self, ts: &Timestamp) {
        self.clock.observe(ts);
    }

    /// Merges a remote record. Idempotent; arrival order does not matter.
    pub fn receive_update(&mut self, rec: UpdateRecord) -> Result<Delivery, ReplicaError> {
        let adt = self.adt(&rec.obj)?;
        adt.check_op(&Op::Update(rec.op))?;
        self.clock.observe(&rec.ts);

        let held = self.digest.get(rec.uid.origin);
        if rec.uid.seq <= held || self.pending.contains_key(&rec.uid) {
            return Ok(Delivery::Duplicate);
        }
        if rec.uid.seq > held + 1 {
            self.pending.insert(rec.uid, rec);
            return Ok(Delivery::Buffered);
        }

        let origin = rec.uid.origin;
        let mut touched = vec![rec.obj.clone()];
        self.insert(rec);
        let mut drained = 0;
        loop {
            let next = Uid {
                origin,
                seq: self.digest.get(origin) + 1,
            };
            let Some(parked) = self.pending.remove(&next) else {
                break;
            };
            if !touched.contains(&parked.obj) {
                touched.push(parked.obj.clone());
            }
            self.insert(parked);
            drained += 1;
        }
        for obj in &touched {
            self.recompute(obj);
        }
        Ok(Delivery::Applied { drained })
    }

    fn insert(&mut self, rec: UpdateRecord) {
        debug_assert_eq!(rec.uid.seq, self.digest.get(rec.uid.origin) + 1);
        self.digest.bump(rec.uid.origin, rec.uid.seq);
        self.log.insert(rec.uid, rec);
    }

    fn sort_key(&self, rec: &UpdateRecord) -> crate::clock::OrderKey {
        self.comparator.key(&rec.ts, rec.uid.origin, rec.uid.seq)
    }

    /// Full replay of the object's sorted projection.
    fn recompute(&mut self, obj: &ObjectId) {
        let adt = self.types[obj];
        let state = match self.mode {
            ReplicaMode::UpdateConsistent => {
                let ops: Vec<UpdateOp> = self.sorted_log().into_iter().filter(|r| &r.obj == obj).map(|r| r.op).collect();
                adt.fold(&ops)
            }
            ReplicaMode::IgnoreUpdates => adt.initial(),
        };
        self.cache.insert(obj.clone(), state);
    }

    pub fn query(&self, obj: &ObjectId, q: QueryOp) -> Result<Value, ReplicaError> {
        let adt = self.adt(obj)?;
        adt.check_op(&Op::Query(q))?;
        Ok(adt.eval(&self.cache[obj], &q))
    }

    /// The read this replica returns forever once no further update
    /// arrives.
    pub fn converged_value(&self, obj: &ObjectId) -> Result<Value, ReplicaError> {
        let adt = self.adt(obj)?;
        Ok(adt.read(&self.cache[obj]))
    }

    pub fn state(&self, obj: &ObjectId) -> Option<&State> {
        self.cache.get(obj)
    }

    pub fn make_digest(&self) -> SyncDigest {
        self.digest.clone()
    }

    /// Held records the remote side lacks, in timestamp order.
    pub fn diff_since(&self, remote: &SyncDigest) -> Vec<UpdateRecord> {
        let mut out: Vec<UpdateRecord> = self
            .log
            .values()
            .filter(|r| r.uid.seq > remote.get(r.uid.origin))
            .cloned()
            .collect();
        out.sort_by_key(|r| r.ts);
        out
    }

    /// Every logged record sorted by the run's comparator: the common
    /// sequential history this replica replays.
    pub fn sorted_log(&self) -> Vec<&UpdateRecord> {
        let mut out: Vec<&UpdateRecord> = self.log.values().collect();
        out.sort_by_key(|r| self.sort_key(r));
        out
    }

    pub fn log(&self) -> impl Iterator<Item = &UpdateRecord> {
        self.log.values()
    }

    pub fn log_len(&self) -> usize {
        self.log.len()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn holds(&self, uid: &Uid) -> bool {
        self.log.contains_key(uid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adt::set_value;

    const P1: ProcessId = ProcessId(1);
    const P2: ProcessId = ProcessId(2);

    fn oid(s: &str) -> ObjectId {
        ObjectId::new(s).unwrap()
    }

    fn replica(pid: ProcessId) -> Replica {
        let mut r = Replica::new(pid, Comparator::LamportPid, ReplicaMode::UpdateConsistent);
        r.register_object(oid("s"), Adt::IntSet).unwrap();
        r
    }

    #[test]
    fn registration() {
        let mut r = Replica::new(P1, Comparator::LamportPid, ReplicaMode::UpdateConsistent);
        r.register_object(oid("s"), Adt::IntSet).unwrap();
        r.register_object(oid("c"), Adt::Counter).unwrap();
        assert_eq!(r.query(&oid("s"), QueryOp::ReadSet).unwrap(), set_value([]));
        assert_eq!(r.query(&oid("c"), QueryOp::Read).unwrap(), Value::Int(0));
        assert_eq!(
            r.register_object(oid("s"), Adt::Counter),
            Err(ReplicaError::DuplicateObject(oid("s")))
        );
    }

    #[test]
    fn first_local_update() {
        let mut r = replica(P1);
        let rec = r.local_update(&oid("s"), UpdateOp::Insert(1)).unwrap();
        assert_eq!(rec.uid, Uid { origin: P1, seq: 1 });
        assert_eq!(rec.ts, Timestamp::new(1, P1));
        assert_eq!(r.query(&oid("s"), QueryOp::ReadSet).unwrap(), set_value([1]));
        r.local_update(&oid("s"), UpdateOp::Delete(2)).unwrap();
        assert_eq!(r.query(&oid("s"), QueryOp::ReadSet).unwrap(), set_value([1]));
    }

    #[test]
    fn unknown_object_and_wrong_op() {
        let mut r = replica(P1);
        assert!(matches!(
            r.local_update(&oid("x"), UpdateOp::Insert(1)),
            Err(ReplicaError::UnknownObject(_))
        ));
        assert!(matches!(
            r.local_update(&oid("s"), UpdateOp::Increment(1)),
            Err(ReplicaError::Type(_))
        ));
        assert!(r.query(&oid("x"), QueryOp::ReadSet).is_err());
        assert!(r.converged_value(&oid("x")).is_err());
    }

    #[test]
    fn timestamp_after_remote_observation() {
        let mut p2 = replica(P2);
        let mut last = None;
        for x in 0..4 {
            last = Some(p2.local_update(&oid("s"), UpdateOp::Insert(x)).unwrap());
        }
        let last = last.unwrap();
        assert_eq!(last.ts, Timestamp::new(4, P2));
        let mut p1 = replica(P1);
        for rec in p2.diff_since(&SyncDigest::default()) {
            p1.receive_update(rec).unwrap();
        }
        let mine = p1.local_update(&oid("s"), UpdateOp::Delete(0)).unwrap();
        assert!(mine.ts.lamport >= 5);
    }

    #[test]
    fn late_record_reorders_replay() {
        // p1: I(1)@1.1, D(2)@2.1 ; p2: I(2)@1.2, D(1)@2.2
        let mut p1 = replica(P1);
        let mut p2 = replica(P2);
        p1.local_update(&oid("s"), UpdateOp::Insert(1)).unwrap();
        p1.local_update(&oid("s"), UpdateOp::Delete(2)).unwrap();
        p2.local_update(&oid("s"), UpdateOp::Insert(2)).unwrap();
        p2.local_update(&oid("s"), UpdateOp::Delete(1)).unwrap();
        for rec in p2.diff_since(&p1.make_digest()) {
            p1.receive_update(rec).unwrap();
        }
        // sorted: I(1) I(2) D(2) D(1)
        let order: Vec<String> = p1.sorted_log().iter().map(|r| r.op.to_string()).collect();
        assert_eq!(order, ["I(1)", "I(2)", "D(2)", "D(1)"]);
        assert_eq!(p1.query(&oid("s"), QueryOp::ReadSet).unwrap(), set_value([]));
    }

    #[test]
    fn duplicate_delivery_is_a_noop() {
        let mut p2 = replica(P2);
        let rec = p2.local_update(&oid("s"), UpdateOp::Insert(2)).unwrap();
        let mut p1 = replica(P1);
        assert_eq!(p1.receive_update(rec.clone()).unwrap(), Delivery::Applied { drained: 0 });
        let digest = p1.make_digest();
        let state = p1.state(&oid("s")).cloned();
        assert_eq!(p1.receive_update(rec).unwrap(), Delivery::Duplicate);
        assert_eq!(p1.make_digest(), digest);
        assert_eq!(p1.state(&oid("s")).cloned(), state);
        assert_eq!(p1.log_len(), 1);
    }

    #[test]
    fn gap_is_buffered_then_drained() {
        let mut p2 = replica(P2);
        let a = p2.local_update(&oid("s"), UpdateOp::Insert(1)).unwrap();
        let b = p2.local_update(&oid("s"), UpdateOp::Insert(2)).unwrap();
        let mut p1 = replica(P1);
        assert_eq!(p1.receive_update(b.clone()).unwrap(), Delivery::Buffered);
        assert_eq!(p1.receive_update(b).unwrap(), Delivery::Duplicate);
        assert_eq!(p1.log_len(), 0);
        assert_eq!(p1.make_digest().get(P2), 0);
        assert_eq!(p1.receive_update(a).unwrap(), Delivery::Applied { drained: 1 });
        assert_eq!(p1.make_digest().get(P2), 2);
        assert_eq!(p1.query(&oid("s"), QueryOp::ReadSet).unwrap(), set_value([1, 2]));
    }

    #[test]
    fn digests_and_diffs() {
        let mut p1 = replica(P1);
        assert!(p1.make_digest().is_empty());
        assert_eq!(p1.make_digest().to_string(), "G {}");
        for x in 0..3 {
            p1.local_update(&oid("s"), UpdateOp::Insert(x)).unwrap();
        }
        let mut p2 = replica(P2);
        let r = p2.local_update(&oid("s"), UpdateOp::Insert(9)).unwrap();
        p1.receive_update(r).unwrap();
        assert_eq!(p1.make_digest().to_string(), "G {1:3,2:1}");

        assert!(p1.diff_since(&p1.make_digest()).is_empty());
        assert_eq!(p1.diff_since(&SyncDigest::default()).len(), 4);
        let remote: SyncDigest = [(P1, 1), (P2, 1)].into_iter().collect();
        let uids: Vec<Uid> = p1.diff_since(&remote).iter().map(|r| r.uid).collect();
        assert_eq!(uids, [Uid { origin: P1, seq: 2 }, Uid { origin: P1, seq: 3 }]);
    }

    #[test]
    fn receive_for_unknown_object() {
        let mut p1 = replica(P1);
        let rec: UpdateRecord = "U 2 1 1.2 other I(1)".parse().unwrap();
        assert!(matches!(p1.receive_update(rec), Err(ReplicaError::UnknownObject(_))));
    }

    #[test]
    fn ignore_updates_mode() {
        let mut r = Replica::new(P1, Comparator::LamportPid, ReplicaMode::IgnoreUpdates);
        r.register_object(oid("s"), Adt::IntSet).unwrap();
        r.local_update(&oid("s"), UpdateOp::Insert(1)).unwrap();
        assert_eq!(r.converged_value(&oid("s")).unwrap(), set_value([]));
        assert_eq!(r.log_len(), 1);
    }

    #[test]
    fn record_and_digest_text() {
        let text = "U 2 3 6.2 s D(-1)";
        let rec: UpdateRecord = text.parse().unwrap();
        assert_eq!(rec.to_string(), text);
        for bad in [
            "U 2 3 6.1 s D(1)",
            "U 2 0 6.2 s D(1)",
            "U 2 3 0.2 s D(1)",
            "U 2 3 6.2 s R",
            "U 2 3 6.2 s",
            "U  2 3 6.2 s D(1)",
            "V 2 3 6.2 s D(1)",
        ] {
            assert!(bad.parse::<UpdateRecord>().is_err(), "{bad:?}");
        }
        let d: SyncDigest = "G {1:2,2:1}".parse().unwrap();
        assert_eq!(d.get(ProcessId(1)), 2);
        assert_eq!(d.to_string(), "G {1:2,2:1}");
        for bad in ["G {2:1,1:2}", "G {1:0}", "G {1:1,1:2}", "G{}", "G {1:}", "G {1:2,}"] {
            assert!(bad.parse::<SyncDigest>().is_err(), "{bad:?}");
        }
    }
}
