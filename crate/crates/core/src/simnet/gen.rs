//! Seeded random scenarios for property checks and batch runs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::{Crash, Partition, Scenario, ScriptEntry};
use crate::adt::{Adt, ObjectId, Op, QueryOp, UpdateOp};
use crate::clock::ProcessId;

#[derive(Debug, Clone)]
pub struct GenParams {
    pub min_procs: u32,
    pub max_procs: u32,
    pub max_updates: usize,
    pub max_objects: usize,
    pub adts: Vec<Adt>,
    pub max_partitions: usize,
    pub min_partitions: usize,
    pub max_crashes: usize,
    pub max_drop: f64,
    /// Client activity happens in ticks `0..script_span`.
    pub script_span: u64,
    /// Probability that one partition covers the whole client script.
    pub long_partition: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            min_procs: 3,
            max_procs: 5,
            max_updates: 12,
            max_objects: 2,
            adts: vec![Adt::IntSet, Adt::Counter],
            min_partitions: 1,
            max_partitions: 3,
            max_crashes: 2,
            max_drop: 0.3,
            script_span: 24,
            long_partition: 0.25,
        }
    }
}

/// Builds a valid scenario from `seed`. Every partition is finite, so the
/// survivors are reconnected once the schedule ends.
pub fn random_scenario(seed: u64, params: &GenParams) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let procs = rng.gen_range(params.min_procs..=params.max_procs);
    let pids: Vec<ProcessId> = (1..=procs).map(ProcessId).collect();

    let n_objects = rng.gen_range(1..=params.max_objects.max(1));
    let objects: Vec<(ObjectId, Adt)> = (0..n_objects)
        .map(|i| {
            let adt = *params.adts.choose(&mut rng).expect("at least one type");
            (ObjectId::new(format!("o{i}")).expect("valid id"), adt)
        })
        .collect();

    let span = params.script_span.max(1);
    let mut script = Vec::new();
    let n_updates = rng.gen_range(1..=params.max_updates.max(1));
    for _ in 0..n_updates {
        let (obj, adt) = objects.choose(&mut rng).expect("objects").clone();
        let x = rng.gen_range(1..=4);
        let op = match adt {
            Adt::IntSet if rng.gen_bool(0.5) => UpdateOp::Insert(x),
            Adt::IntSet => UpdateOp::Delete(x),
            Adt::Counter => UpdateOp::Increment(if rng.gen_bool(0.3) { -x } else { x }),
            Adt::Register { .. } => UpdateOp::Write(x),
        };
        script.push(ScriptEntry {
            at: rng.gen_range(0..span),
            pid: *pids.choose(&mut rng).expect("pids"),
            obj,
            op: Op::Update(op),
        });
    }
    for _ in 0..rng.gen_range(0..=3) {
        let (obj, adt) = objects.choose(&mut rng).expect("objects").clone();
        let q = match adt {
            Adt::IntSet => QueryOp::ReadSet,
            _ => QueryOp::Read,
        };
        script.push(ScriptEntry {
            at: rng.gen_range(0..span),
            pid: *pids.choose(&mut rng).expect("pids"),
            obj,
            op: Op::Query(q),
        });
    }
    script.sort_by_key(|e| e.at);

    let mut partitions = Vec::new();
    let n_parts = rng.gen_range(params.min_partitions..=params.max_partitions.max(params.min_partitions));
    let mut cursor = 0u64;
    for i in 0..n_parts {
        let (start, end) = if i == 0 && rng.gen_bool(params.long_partition) {
            (0, span + rng.gen_range(0..8))
        } else {
            let start = cursor + rng.gen_range(0..8);
            (start, start + rng.gen_range(0..10))
        };
        cursor = end + 1;
        let mut shuffled = pids.clone();
        shuffled.shuffle(&mut rng);
        // keep some processes out of every block (isolated)
        let members = rng.gen_range(2..=shuffled.len());
        shuffled.truncate(members);
        let n_blocks = rng.gen_range(1..=members.min(3));
        let mut blocks: Vec<Vec<ProcessId>> = vec![Vec::new(); n_blocks];
        for (j, pid) in shuffled.into_iter().enumerate() {
            blocks[j % n_blocks].push(pid);
        }
        for blk in &mut blocks {
            blk.sort();
        }
        partitions.push(Partition {
            start,
            end: Some(end),
            blocks,
        });
    }

    let mut crashes = Vec::new();
    let max_crashes = params.max_crashes.min(pids.len().saturating_sub(1));
    let mut victims = pids.clone();
    victims.shuffle(&mut rng);
    for pid in victims.into_iter().take(rng.gen_range(0..=max_crashes)) {
        let at = rng.gen_range(1..span + 8);
        crashes.push(Crash { at, pid });
    }
    script.retain(|e| crashes.iter().all(|c| c.pid != e.pid || e.at < c.at));

    let min_delay = rng.gen_range(1..=2);
    let max_delay = min_delay + rng.gen_range(0..=3);
    let drop = (rng.gen_range(0.0..=params.max_drop) * 100.0).round() / 100.0;
    Scenario {
        procs,
        objects,
        script,
        partitions,
        crashes,
        min_delay,
        max_delay,
        drop,
        sync_period: rng.gen_range(2..=6),
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_scenarios_are_valid_and_round_trip() {
        let params = GenParams::default();
        for seed in 0..300 {
            let sc = random_scenario(seed, &params);
            sc.validate().unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            assert!((3..=5).contains(&sc.procs));
            assert!(sc.crashes.len() <= 2);
            assert!((1..=3).contains(&sc.partitions.len()));
            assert!(sc.drop <= 0.3);
            let updates = sc.script.iter().filter(|e| matches!(e.op, Op::Update(_))).count();
            assert!(updates <= 12);
            assert_eq!(Scenario::parse(&sc.to_string()).unwrap(), sc);
        }
    }

    #[test]
    fn same_seed_same_scenario() {
        let p = GenParams::default();
        assert_eq!(random_scenario(42, &p), random_scenario(42, &p));
    }
}
