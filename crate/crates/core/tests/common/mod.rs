//! Test-only oracles, written independently of the library's search and
//! replica code paths.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ucsim::adt::{Adt, ObjectId, QueryOp, UpdateOp, Value};
use ucsim::clock::ProcessId;
use ucsim::history::History;
use ucsim::simnet::TraceEvent;
use ucsim::replica::Uid;

/// Plain set semantics, no shared code with `Adt::apply`.
pub fn reference_set(ops: &[UpdateOp]) -> BTreeSet<i64> {
    let mut s = BTreeSet::new();
    for op in ops {
        match op {
            UpdateOp::Insert(x) => {
                s.insert(*x);
            }
            UpdateOp::Delete(x) => {
                s.remove(x);
            }
            _ => panic!("not a set op"),
        }
    }
    s
}

/// Reference read of a sequence of updates on a fresh object.
pub fn reference_read(adt: Adt, ops: &[UpdateOp]) -> Value {
    match adt {
        Adt::IntSet => Value::Set(reference_set(ops)),
        Adt::Counter => Value::Int(
            ops.iter()
                .map(|o| match o {
                    UpdateOp::Increment(d) => *d,
                    _ => panic!("not a counter op"),
                })
                .sum(),
        ),
        Adt::Register { default } => Value::Int(
            ops.iter()
                .rev()
                .find_map(|o| match o {
                    UpdateOp::Write(v) => Some(*v),
                    _ => None,
                })
                .unwrap_or(default),
        ),
    }
}

/// A complete linear extension, as (pid, ordinal) pairs.
pub type Order = Vec<(ProcessId, usize)>;

/// Every interleaving of the per-process update sequences, where crashed
/// processes may contribute any prefix. No memoization, no sharing.
pub fn all_interleavings(h: &History) -> Vec<Order> {
    let procs: Vec<(ProcessId, bool, usize)> = h
        .pids()
        .map(|p| (p, h.is_crashed(p), h.updates(p).count()))
        .collect();
    let mut out = Vec::new();
    let mut taken = vec![0usize; procs.len()];
    let mut cur = Vec::new();
    fn go(
        procs: &[(ProcessId, bool, usize)],
        taken: &mut Vec<usize>,
        cur: &mut Order,
        out: &mut Vec<Order>,
    ) {
        let complete = procs.iter().zip(taken.iter()).all(|((_, crashed, n), t)| *crashed || t == n);
        if complete {
            out.push(cur.clone());
        }
        for i in 0..procs.len() {
            if taken[i] < procs[i].2 {
                cur.push((procs[i].0, taken[i]));
                taken[i] += 1;
                go(procs, taken, cur, out);
                taken[i] -= 1;
                cur.pop();
            }
        }
    }
    go(&procs, &mut taken, &mut cur, &mut out);
    out
}

/// Per-object reads after replaying `order`.
pub fn replay(h: &History, order: &[(ProcessId, usize)]) -> BTreeMap<ObjectId, Value> {
    let mut per_obj: BTreeMap<ObjectId, Vec<UpdateOp>> =
        h.objects().iter().map(|(o, _)| (o.clone(), Vec::new())).collect();
    for (pid, ordinal) in order {
        let ev = h.updates(*pid).nth(*ordinal).expect("update exists");
        per_obj.get_mut(&ev.obj).unwrap().push(ev.update_op().unwrap());
    }
    h.objects()
        .iter()
        .map(|(o, adt)| (o.clone(), reference_read(*adt, &per_obj[o])))
        .collect()
}

/// Converged reads of live processes, per object.
pub fn converged(h: &History) -> BTreeMap<ObjectId, Vec<Value>> {
    let mut out: BTreeMap<ObjectId, Vec<Value>> = BTreeMap::new();
    for pid in h.pids().filter(|p| !h.is_crashed(*p)) {
        for e in h.events(pid).iter().filter(|e| e.converged) {
            out.entry(e.obj.clone()).or_default().push(e.returned.clone().unwrap());
        }
    }
    out
}

pub fn naive_ec(h: &History) -> bool {
    converged(h).values().all(|v| v.windows(2).all(|w| w[0] == w[1]))
}

pub fn naive_uc(h: &History) -> bool {
    if !naive_ec(h) {
        return false;
    }
    let targets = converged(h);
    all_interleavings(h).iter().any(|order| {
        let reads = replay(h, order);
        targets.iter().all(|(o, vals)| vals.first().is_none_or(|v| &reads[o] == v))
    })
}

pub fn naive_reachable(h: &History, obj: &ObjectId) -> BTreeSet<Value> {
    all_interleavings(h)
        .iter()
        .map(|order| replay(h, order)[obj].clone())
        .collect()
}

/// Independent witness check: linear extension (prefix for crashed
/// processes) whose replay gives every live converged read.
pub fn witness_ok(h: &History, order: &[(ProcessId, usize)]) -> bool {
    let mut next: BTreeMap<ProcessId, usize> = BTreeMap::new();
    for (pid, ordinal) in order {
        let n = next.entry(*pid).or_default();
        if *ordinal != *n {
            return false;
        }
        *n += 1;
    }
    for pid in h.pids() {
        let n = next.get(&pid).copied().unwrap_or(0);
        let total = h.updates(pid).count();
        if n > total || (!h.is_crashed(pid) && n != total) {
            return false;
        }
    }
    let reads = replay(h, order);
    converged(h)
        .iter()
        .all(|(o, vals)| vals.iter().all(|v| &reads[o] == v))
}

/// Random small history: at most `max_updates` updates. Converged values
/// come either from replaying a random interleaving (usually UC) or are
/// drawn at random (usually not).
pub fn random_history(seed: u64, max_updates: usize) -> History {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let procs = rng.gen_range(1..=3u32);
    let mut h = History::new(procs);
    let n_obj = rng.gen_range(1..=2);
    let adts = [Adt::IntSet, Adt::Counter, Adt::Register { default: 0 }];
    let mut objects = Vec::new();
    for i in 0..n_obj {
        let adt = *adts.choose(&mut rng).unwrap();
        let obj = ObjectId::new(format!("o{i}")).unwrap();
        h.add_object(obj.clone(), adt).unwrap();
        objects.push((obj, adt));
    }
    let total = rng.gen_range(0..=max_updates);
    let mut crashed = Vec::new();
    for pid in 1..=procs {
        if procs > 1 && rng.gen_bool(0.15) && crashed.len() + 1 < procs as usize {
            crashed.push(ProcessId(pid));
        }
    }
    for _ in 0..total {
        let pid = ProcessId(rng.gen_range(1..=procs));
        let (obj, adt) = objects.choose(&mut rng).unwrap().clone();
        let x = rng.gen_range(1..=3);
        let op = match adt {
            Adt::IntSet if rng.gen_bool(0.5) => UpdateOp::Insert(x),
            Adt::IntSet => UpdateOp::Delete(x),
            Adt::Counter => UpdateOp::Increment(x),
            Adt::Register { .. } => UpdateOp::Write(x),
        };
        h.push_update(pid, &obj, op).unwrap();
    }
    for pid in &crashed {
        h.mark_crashed(*pid).unwrap();
    }
    let orders = all_interleavings(&h);
    let picked = orders.choose(&mut rng).cloned().unwrap_or_default();
    let from_order = replay(&h, &picked);
    let honest = rng.gen_bool(0.5);
    let diverge = rng.gen_bool(0.1);
    for pid in h.pids().collect::<Vec<_>>() {
        if h.is_crashed(pid) {
            continue;
        }
        for (obj, adt) in &objects {
            let value = if honest {
                from_order[obj].clone()
            } else {
                match adt {
                    Adt::IntSet => {
                        let seed_val = if diverge { pid.0 as i64 } else { 0 };
                        Value::Set((1..=3).filter(|x| (x + seed_val + total as i64) % 2 == 0).collect())
                    }
                    _ => Value::Int(if diverge { pid.0 as i64 } else { (total as i64) % 4 }),
                }
            };
            let q = match adt {
                Adt::IntSet => QueryOp::ReadSet,
                _ => QueryOp::Read,
            };
            h.push_query(pid, obj, q, value, true).unwrap();
        }
    }
    h
}

/// Happened-before between issued updates, rebuilt from the trace with
/// vector clocks. Returns (earlier uid, later uid) pairs.
pub fn happened_before_pairs(trace: &[TraceEvent], procs: u32) -> Vec<(Uid, Uid)> {
    let n = procs as usize;
    let mut vc: Vec<Vec<u64>> = vec![vec![0; n]; n + 1];
    let mut in_msg: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    let mut issued: Vec<(Uid, Vec<u64>)> = Vec::new();
    for ev in trace {
        match ev {
            TraceEvent::Issue { pid, uid, .. } => {
                let p = pid.0 as usize;
                vc[p][p - 1] += 1;
                issued.push((*uid, vc[p].clone()));
            }
            TraceEvent::Send { msg, from, .. } => {
                let p = from.0 as usize;
                vc[p][p - 1] += 1;
                in_msg.insert(*msg, vc[p].clone());
            }
            TraceEvent::Receive { msg, at, .. } => {
                let p = at.0 as usize;
                let sent = &in_msg[msg];
                for i in 0..n {
                    vc[p][i] = vc[p][i].max(sent[i]);
                }
                vc[p][p - 1] += 1;
            }
            TraceEvent::Lost { .. } | TraceEvent::Crash { .. } => {}
        }
    }
    let leq = |a: &[u64], b: &[u64]| a.iter().zip(b).all(|(x, y)| x <= y);
    let mut pairs = Vec::new();
    for (u, vu) in &issued {
        for (v, vv) in &issued {
            if u != v && leq(vu, vv) {
                pairs.push((*u, *v));
            }
        }
    }
    pairs
}
