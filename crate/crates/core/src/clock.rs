//! Lamport clocks and the agreed total order over updates.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClockError {
    #[error("malformed process id `{0}`")]
    BadPid(String),
    #[error("malformed timestamp `{0}`")]
    BadTimestamp(String),
    #[error("unknown comparator `{0}`")]
    BadComparator(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcessId(pub u32);

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for ProcessId {
    type Err = ClockError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_nat(s)
            .and_then(|n| u32::try_from(n).ok())
            .map(ProcessId)
            .ok_or_else(|| ClockError::BadPid(s.into()))
    }
}

/// Plain decimal natural number without sign or leading `+`.
pub(crate) fn parse_nat(s: &str) -> Option<u64> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

/// `(lamport, pid)`, ordered lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp {
    pub lamport: u64,
    pub pid: ProcessId,
}

impl Timestamp {
    pub fn new(lamport: u64, pid: ProcessId) -> Self {
        Timestamp { lamport, pid }
    }
}

/// Lexicographic comparison: counter first, process id breaks ties.
pub fn compare(a: &Timestamp, b: &Timestamp) -> Ordering {
    a.cmp(b)
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.lamport, self.pid)
    }
}

impl FromStr for Timestamp {
    type Err = ClockError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ClockError::BadTimestamp(s.into());
        let (l, p) = s.split_once('.').ok_or_else(bad)?;
        let lamport = parse_nat(l).ok_or_else(bad)?;
        let pid = p.parse().map_err(|_| bad())?;
        Ok(Timestamp { lamport, pid })
    }
}

/// A logical clock owned by one process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LamportClock {
    pid: ProcessId,
    counter: u64,
}

impl LamportClock {
    pub fn new(pid: ProcessId) -> Self {
        LamportClock { pid, counter: 0 }
    }

    pub fn pid(&self) -> ProcessId {
        self.pid
    }

    /// Highest counter value issued or observed so far.
    pub fn current(&self) -> u64 {
        self.counter
    }

    /// Local event: returns a timestamp above everything issued or observed.
    pub fn tick(&mut self) -> Timestamp {
        self.counter += 1;
        Timestamp::new(self.counter, self.pid)
    }

    pub fn observe(&mut self, remote: &Timestamp) {
        self.counter = self.counter.max(remote.lamport);
    }
}

/// The run-wide ordering rule used to sort updates before replay.
///
/// Any rule works as long as every replica uses the same one and it extends
/// each origin's issue order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Comparator {
    /// Lamport counter, then process id.
    #[default]
    LamportPid,
    /// Static priority: process rank, then per-origin sequence number.
    /// Processes listed in `priority` come first in list order; the rest
    /// follow by ascending id.
    PidSeq { priority: Vec<ProcessId> },
}

/// Ordering key extracted from an update by a [`Comparator`]. Keys of
/// distinct updates are distinct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrderKey(u64, u64, u32);

impl Comparator {
    pub fn key(&self, ts: &Timestamp, origin: ProcessId, seq: u64) -> OrderKey {
        match self {
            Comparator::LamportPid => OrderKey(ts.lamport, 0, ts.pid.0),
            Comparator::PidSeq { priority } => {
                let rank = match priority.iter().position(|p| *p == origin) {
                    Some(i) => i as u64,
                    None => priority.len() as u64 + u64::from(origin.0),
                };
                OrderKey(rank, seq, origin.0)
            }
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Comparator::LamportPid => f.write_str("lamport-pid"),
            Comparator::PidSeq { priority } if priority.is_empty() => f.write_str("pid-seq"),
            Comparator::PidSeq { priority } => {
                let list: Vec<String> = priority.iter().map(|p| p.to_string()).collect();
                write!(f, "pid-seq:{}", list.join(","))
            }
        }
    }
}

impl FromStr for Comparator {
    type Err = ClockError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ClockError::BadComparator(s.into());
        match s {
            "lamport-pid" => Ok(Comparator::LamportPid),
            "pid-seq" => Ok(Comparator::PidSeq { priority: vec![] }),
            _ => {
                let list = s.strip_prefix("pid-seq:").ok_or_else(bad)?;
                let mut priority = Vec::new();
                for part in list.split(',') {
                    let pid: ProcessId = part.parse().map_err(|_| bad())?;
                    if priority.contains(&pid) {
                        return Err(bad());
                    }
                    priority.push(pid);
                }
                Ok(Comparator::PidSeq { priority })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P1: ProcessId = ProcessId(1);
    const P2: ProcessId = ProcessId(2);

    #[test]
    fn first_tick() {
        let mut c = LamportClock::new(P1);
        assert_eq!(c.tick(), Timestamp::new(1, P1));
        let next = c.tick();
        assert!(next.lamport > 1);
    }

    #[test]
    fn tick_after_observe() {
        let mut c = LamportClock::new(P2);
        c.observe(&Timestamp::new(5, P1));
        assert_eq!(c.tick(), Timestamp::new(6, P2));

        let mut c = LamportClock::new(P1);
        c.tick();
        c.tick();
        c.observe(&Timestamp::new(7, P2));
        assert_eq!(c.tick().lamport, 8);

        // stale observation does not lower the counter
        let mut c = LamportClock::new(P1);
        for _ in 0..9 {
            c.tick();
        }
        c.observe(&Timestamp::new(1, P2));
        assert_eq!(c.tick().lamport, 10);

        let mut c = LamportClock::new(P1);
        let own = c.tick();
        c.observe(&own);
        assert!(c.tick() > own);
    }

    #[test]
    fn lexicographic_order() {
        assert_eq!(compare(&Timestamp::new(3, P1), &Timestamp::new(3, P2)), Ordering::Less);
        assert_eq!(
            compare(&Timestamp::new(2, ProcessId(9)), &Timestamp::new(3, P1)),
            Ordering::Less
        );
        assert_eq!(compare(&Timestamp::new(4, P2), &Timestamp::new(4, P2)), Ordering::Equal);
    }

    #[test]
    fn timestamp_text() {
        let ts: Timestamp = "6.2".parse().unwrap();
        assert_eq!(ts, Timestamp::new(6, P2));
        assert_eq!(ts.to_string(), "6.2");
        for bad in ["6", "6.", ".2", "-1.2", "6.2.1", "a.b"] {
            assert!(bad.parse::<Timestamp>().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn pid_seq_priority() {
        let cmp: Comparator = "pid-seq:2,1".parse().unwrap();
        let ts = Timestamp::new(1, P1);
        // every update of p2 precedes every update of p1
        assert!(cmp.key(&ts, P2, 9) < cmp.key(&ts, P1, 1));
        assert!(cmp.key(&ts, P1, 1) < cmp.key(&ts, P1, 2));
        // unlisted processes come after listed ones
        assert!(cmp.key(&ts, P1, 5) < cmp.key(&ts, ProcessId(3), 1));
        assert_eq!(cmp.to_string(), "pid-seq:2,1");
        assert!("pid-seq:1,1".parse::<Comparator>().is_err());
        assert!("pid-seq:".parse::<Comparator>().is_err());
    }
}
