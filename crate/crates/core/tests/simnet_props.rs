mod common;

use std::collections::BTreeMap;

use ucsim::clock::ProcessId;
use ucsim::history::{check_ec, check_uc};
use ucsim::replica::ReplicaMode;
use ucsim::simnet::gen::{random_scenario, GenParams};
use ucsim::simnet::{simulate, Scenario, SimConfig, TraceEvent};

#[test]
fn survivors_share_every_update_after_healing() {
    let params = GenParams::default();
    for seed in 1000..1060 {
        let sc = random_scenario(seed, &params);
        let out = simulate(&sc, &SimConfig::default()).unwrap();
        assert!(out.quiescent, "seed {seed}");
        let live: Vec<_> = out.live().collect();
        for r in &live {
            assert_eq!(r.make_digest(), live[0].make_digest(), "seed {seed}");
        }
        // every update issued by a survivor reached all survivors
        for r in &live {
            let own = out.history.updates(r.pid()).count() as u64;
            assert_eq!(live[0].make_digest().get(r.pid()), own, "seed {seed}");
        }
    }
}

#[test]
fn crashed_processes_stay_silent() {
    let params = GenParams { max_crashes: 2, ..GenParams::default() };
    for seed in 0..80 {
        let sc = random_scenario(seed, &params);
        let out = simulate(&sc, &SimConfig::default()).unwrap();
        let crash_at: BTreeMap<ProcessId, u64> = sc.crashes.iter().map(|c| (c.pid, c.at)).collect();
        for ev in &out.trace {
            let (tick, pid) = match ev {
                TraceEvent::Issue { tick, pid, .. } => (*tick, *pid),
                TraceEvent::Send { tick, from, .. } => (*tick, *from),
                TraceEvent::Receive { tick, at, .. } => (*tick, *at),
                _ => continue,
            };
            if let Some(t) = crash_at.get(&pid) {
                assert!(tick < *t, "seed {seed}: {ev:?} after crash at {t}");
            }
        }
        for pid in crash_at.keys() {
            assert!(out.history.events(*pid).iter().all(|e| !e.converged));
        }
    }
}

#[test]
fn runs_are_reproducible() {
    let params = GenParams::default();
    for seed in 0..10 {
        let sc = random_scenario(seed, &params);
        let a = simulate(&sc, &SimConfig::default()).unwrap();
        let b = simulate(&sc, &SimConfig::default()).unwrap();
        assert_eq!(a.history.serialize(), b.history.serialize());
        assert_eq!(a.trace, b.trace);
    }
}

#[test]
fn lamport_order_respects_happened_before() {
    let params = GenParams::default();
    for seed in 0..60 {
        let sc = random_scenario(seed, &params);
        let out = simulate(&sc, &SimConfig::default()).unwrap();
        let ts: BTreeMap<_, _> = out
            .trace
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Issue { uid, ts, .. } => Some((*uid, *ts)),
                _ => None,
            })
            .collect();
        for (u, v) in common::happened_before_pairs(&out.trace, sc.procs) {
            assert!(ts[&u] < ts[&v], "seed {seed}: {u} -> {v} but {} >= {}", ts[&u], ts[&v]);
        }
    }
}

#[test]
fn every_comparator_yields_update_consistency() {
    let params = GenParams::default();
    for cmp in ["lamport-pid", "pid-seq", "pid-seq:3,2"] {
        let cfg = SimConfig { comparator: cmp.parse().unwrap(), mode: ReplicaMode::UpdateConsistent };
        for seed in 0..30 {
            let sc = random_scenario(seed, &params);
            let out = simulate(&sc, &cfg).unwrap();
            assert!(check_uc(&out.history).unwrap().holds, "{cmp} seed {seed}");
            let order = out.timestamp_order().unwrap();
            assert!(common::witness_ok(&out.history, &order), "{cmp} seed {seed}");
        }
    }
}

#[test]
fn ignoring_updates_is_only_eventually_consistent() {
    let cfg = SimConfig { mode: ReplicaMode::IgnoreUpdates, ..Default::default() };
    let sc = Scenario::parse("procs 3\nobject s intset\nat 1 2 s I(5)\nat 2 3 s D(9)\n").unwrap();
    let h = simulate(&sc, &cfg).unwrap().history;
    assert!(check_ec(&h).unwrap());
    assert!(!check_uc(&h).unwrap().holds);
}
