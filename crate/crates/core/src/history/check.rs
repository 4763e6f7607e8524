//! Eventual and update consistency checkers.
//!
//! Both checkers look only at the converged (ω) reads; intermediate reads
//! are ignored. A history is update consistent when some linear extension
//! of the per-process update orders, replayed through each object's
//! sequential type, produces every converged value at once. The search
//! walks per-process consumed-prefix vectors and memoizes the set of state
//! vectors reached at each, so interleavings that reach the same prefix in
//! the same states are explored once.
//!
//! Crashed processes impose no convergence constraint, and a linear
//! extension may include any prefix of a crashed process's updates: the
//! tail it issued just before crashing may never have left it.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

use super::History;
use crate::adt::{Adt, ObjectId, State, UpdateOp, Value};
use crate::clock::ProcessId;

pub const DEFAULT_SEARCH_BOUND: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("non-quiescent history: process {pid} has {found} converged reads of {obj}, expected 1")]
    NonQuiescent {
        pid: ProcessId,
        obj: ObjectId,
        found: usize,
    },
    #[error("history has {updates} updates, above the search bound of {bound}")]
    BoundExceeded { updates: usize, bound: usize },
}

/// One position of a witness order: the `ordinal`-th update (0-based) of
/// process `pid`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WitnessStep {
    pub pid: ProcessId,
    pub ordinal: usize,
    pub obj: ObjectId,
    pub op: UpdateOp,
}

impl fmt::Display for WitnessStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.pid, self.obj, self.op)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UcVerdict {
    pub holds: bool,
    pub witness: Option<Vec<WitnessStep>>,
    pub reason: Option<String>,
}

/// Converged value per (live process, object). Fails unless every live
/// process has exactly one converged read per object.
fn converged_reads(h: &History) -> Result<BTreeMap<ObjectId, Vec<(ProcessId, Value)>>, CheckError> {
    let mut out: BTreeMap<ObjectId, Vec<(ProcessId, Value)>> = BTreeMap::new();
    for pid in h.pids().filter(|p| !h.is_crashed(*p)) {
        for (obj, _) in h.objects() {
            let reads: Vec<&Value> = h
                .events(pid)
                .iter()
                .filter(|e| e.converged && &e.obj == obj)
                .filter_map(|e| e.returned.as_ref())
                .collect();
            if reads.len() != 1 {
                return Err(CheckError::NonQuiescent {
                    pid,
                    obj: obj.clone(),
                    found: reads.len(),
                });
            }
            out.entry(obj.clone()).or_default().push((pid, reads[0].clone()));
        }
    }
    Ok(out)
}

/// True iff, for every object, all live processes converged to one value.
pub fn check_ec(h: &History) -> Result<bool, CheckError> {
    let reads = converged_reads(h)?;
    Ok(reads
        .values()
        .all(|vals| vals.windows(2).all(|w| w[0].1 == w[1].1)))
}

pub fn check_uc(h: &History) -> Result<UcVerdict, CheckError> {
    check_uc_bounded(h, DEFAULT_SEARCH_BOUND)
}

pub fn check_uc_bounded(h: &History, bound: usize) -> Result<UcVerdict, CheckError> {
    let reads = converged_reads(h)?;
    let ec = reads
        .values()
        .all(|vals| vals.windows(2).all(|w| w[0].1 == w[1].1));
    if !ec {
        return Ok(UcVerdict {
            holds: false,
            witness: None,
            reason: Some("not EC: live processes converged to different values".into()),
        });
    }
    let search = Search::new(h, None, bound)?;
    // Per object: required converged value, if any live process read one.
    let targets: Vec<Option<Value>> = search
        .objects
        .iter()
        .map(|(obj, _)| reads.get(obj).and_then(|v| v.first()).map(|(_, v)| v.clone()))
        .collect();

    let found = search.run(|states| {
        search
            .objects
            .iter()
            .zip(states)
            .zip(&targets)
            .all(|(((_, adt), st), want)| want.as_ref().is_none_or(|w| &adt.read(st) == w))
    });
    if let Some(path) = found {
        return Ok(UcVerdict {
            holds: true,
            witness: Some(search.witness(&path)),
            reason: None,
        });
    }

    let mut reason = String::from("no linear extension of the per-process update orders reaches");
    for ((obj, _), want) in search.objects.iter().zip(&targets) {
        if let Some(w) = want {
            reason.push_str(&format!(" {obj}={w}"));
        }
    }
    for (obj, _) in &search.objects {
        let reachable = reachable_converged_values_bounded(h, obj, bound)?;
        let list: Vec<String> = reachable.iter().map(|v| v.to_string()).collect();
        reason.push_str(&format!("; reachable {obj}: {}", list.join(" ")));
    }
    let endings = search.possible_final_updates();
    if !endings.is_empty() {
        let list: Vec<String> = endings.iter().map(|s| s.to_string()).collect();
        reason.push_str(&format!("; every extension ends with one of: {}", list.join(" ")));
    }
    Ok(UcVerdict {
        holds: false,
        witness: None,
        reason: Some(reason),
    })
}

pub fn reachable_converged_values(h: &History, obj: &ObjectId) -> Result<BTreeSet<Value>, CheckError> {
    reachable_converged_values_bounded(h, obj, DEFAULT_SEARCH_BOUND)
}

/// Every value a converged read of `obj` may return in an update
/// consistent history with these updates. Empty for undeclared objects.
pub fn reachable_converged_values_bounded(
    h: &History,
    obj: &ObjectId,
    bound: usize,
) -> Result<BTreeSet<Value>, CheckError> {
    let Some(adt) = h.adt_of(obj) else {
        return Ok(BTreeSet::new());
    };
    let search = Search::new(h, Some(obj), bound)?;
    let mut out = BTreeSet::new();
    search.run(|states| {
        out.insert(adt.read(&states[0]));
        false
    });
    Ok(out)
}

/// Checks, independently of the search, that `order` is a linear extension
/// of the history's update orders (a prefix for crashed processes) whose
/// per-object replay yields every live converged read.
pub fn verify_witness(h: &History, order: &[(ProcessId, usize)]) -> Result<(), String> {
    let reads = converged_reads(h).map_err(|e| e.to_string())?;
    let mut next: BTreeMap<ProcessId, usize> = BTreeMap::new();
    let mut states: BTreeMap<&ObjectId, (Adt, State)> = h
        .objects()
        .iter()
        .map(|(o, a)| (o, (*a, a.initial())))
        .collect();
    let updates: BTreeMap<ProcessId, Vec<_>> = h.pids().map(|p| (p, h.updates(p).collect())).collect();
    for (pid, ordinal) in order {
        let expected = next.entry(*pid).or_insert(0);
        if *ordinal != *expected {
            return Err(format!("update {pid}#{ordinal} out of order, expected {pid}#{expected}"));
        }
        *expected += 1;
        let ev = updates
            .get(pid)
            .and_then(|u| u.get(*ordinal))
            .ok_or_else(|| format!("process {pid} has no update #{ordinal}"))?;
        let (adt, st) = states.get_mut(&ev.obj).expect("declared object");
        *st = adt.apply(st, &ev.update_op().expect("update event"));
    }
    for (pid, ups) in &updates {
        let taken = next.get(pid).copied().unwrap_or(0);
        if !h.is_crashed(*pid) && taken != ups.len() {
            return Err(format!("process {pid}: {taken} of {} updates ordered", ups.len()));
        }
    }
    for (obj, vals) in &reads {
        let (adt, st) = &states[obj];
        let got = adt.read(st);
        if let Some((pid, v)) = vals.iter().find(|(_, v)| v != &got) {
            return Err(format!("replay gives {obj}={got} but process {pid} converged to {v}"));
        }
    }
    Ok(())
}

/// (pid, crashed, [(object index, op)]).
type ProcUpdates = (ProcessId, bool, Vec<(usize, UpdateOp)>);

struct Search {
    objects: Vec<(ObjectId, Adt)>,
    /// One entry per process with updates.
    procs: Vec<ProcUpdates>,
}

type Node = (Vec<usize>, Vec<State>);

impl Search {
    /// Restricting to one object projects every process's update sequence
    /// onto it; the projection of a prefix is a prefix of the projection,
    /// so the reachable set for that object is unchanged.
    fn new(h: &History, only: Option<&ObjectId>, bound: usize) -> Result<Self, CheckError> {
        let updates = h.update_count();
        if updates > bound {
            return Err(CheckError::BoundExceeded { updates, bound });
        }
        let objects: Vec<(ObjectId, Adt)> = h
            .objects()
            .iter()
            .filter(|(o, _)| only.is_none_or(|x| x == o))
            .cloned()
            .collect();
        let procs = h
            .pids()
            .map(|pid| {
                let ups: Vec<(usize, UpdateOp)> = h
                    .updates(pid)
                    .filter_map(|e| {
                        let i = objects.iter().position(|(o, _)| o == &e.obj)?;
                        Some((i, e.update_op()?))
                    })
                    .collect();
                (pid, h.is_crashed(pid), ups)
            })
            .filter(|(_, _, ups)| !ups.is_empty())
            .collect();
        Ok(Search { objects, procs })
    }

    fn complete(&self, prefix: &[usize]) -> bool {
        self.procs
            .iter()
            .zip(prefix)
            .all(|((_, crashed, ups), taken)| *crashed || *taken == ups.len())
    }

    /// Breadth-first walk over (prefix vector, state vector). Calls `accept`
    /// on the states of every complete node; stops at the first `true` and
    /// returns the process choices that led there.
    fn run(&self, mut accept: impl FnMut(&[State]) -> bool) -> Option<Vec<usize>> {
        let start: Node = (
            vec![0; self.procs.len()],
            self.objects.iter().map(|(_, a)| a.initial()).collect(),
        );
        let mut parent: HashMap<Node, Option<(Node, usize)>> = HashMap::new();
        let mut queue = VecDeque::new();
        parent.insert(start.clone(), None);
        queue.push_back(start);
        while let Some(node) = queue.pop_front() {
            if self.complete(&node.0) && accept(&node.1) {
                let mut path = Vec::new();
                let mut cur = &node;
                while let Some(Some((prev, i))) = parent.get(cur) {
                    path.push(*i);
                    cur = prev;
                }
                path.reverse();
                return Some(path);
            }
            for (i, (_, _, ups)) in self.procs.iter().enumerate() {
                let taken = node.0[i];
                let Some((obj, op)) = ups.get(taken) else {
                    continue;
                };
                let mut prefix = node.0.clone();
                prefix[i] += 1;
                let mut states = node.1.clone();
                states[*obj] = self.objects[*obj].1.apply(&states[*obj], op);
                let next = (prefix, states);
                if !parent.contains_key(&next) {
                    parent.insert(next.clone(), Some((node.clone(), i)));
                    queue.push_back(next);
                }
            }
        }
        None
    }

    fn witness(&self, path: &[usize]) -> Vec<WitnessStep> {
        let mut taken = vec![0; self.procs.len()];
        path.iter()
            .map(|&i| {
                let (pid, _, ups) = &self.procs[i];
                let (obj, op) = ups[taken[i]];
                let step = WitnessStep {
                    pid: *pid,
                    ordinal: taken[i],
                    obj: self.objects[obj].0.clone(),
                    op,
                };
                taken[i] += 1;
                step
            })
            .collect()
    }

    /// Updates that can occupy the last position of a linear extension.
    fn possible_final_updates(&self) -> Vec<WitnessStep> {
        let mut out = Vec::new();
        for (pid, crashed, ups) in &self.procs {
            let candidates = if *crashed { 0..ups.len() } else { ups.len() - 1..ups.len() };
            for ordinal in candidates {
                let (obj, op) = ups[ordinal];
                out.push(WitnessStep {
                    pid: *pid,
                    ordinal,
                    obj: self.objects[obj].0.clone(),
                    op,
                });
            }
        }
        out
    }
}
