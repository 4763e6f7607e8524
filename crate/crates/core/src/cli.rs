//! Command implementations behind the `ucsim` binary.
//!
//! Machine-readable results go to `out`, diagnostics to `err`. Exit codes:
//! 0 success, 1 a requested criterion does not hold (or a batch run
//! failed), 2 unreadable or invalid input, 3 non-quiescent history,
//! 4 search bound exceeded.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::clock::Comparator;
use crate::history::{
    check_ec, check_uc_bounded, verify_witness, CheckError, History, UcVerdict,
    DEFAULT_SEARCH_BOUND,
};
use crate::replica::ReplicaMode;
use crate::simnet::gen::{random_scenario, GenParams};
use crate::simnet::{simulate, Scenario, SimConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NON_QUIESCENT: u8 = 3;
pub const EXIT_BOUND: u8 = 4;

pub const FIG1_SCENARIO: &str = include_str!("../figures/fig1.scn");
pub const FIG1A_HISTORY: &str = include_str!("../figures/fig1a.hist");
pub const FIG1B_HISTORY: &str = include_str!("../figures/fig1b.hist");
pub const FIG1C_HISTORY: &str = include_str!("../figures/fig1c.hist");

/// Comparator giving process 2 static priority over process 1, which
/// replays the two-process set example as I(2) D(1) I(1) D(2).
pub const FIG1C_COMPARATOR: &str = "pid-seq:2,1";

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: PathBuf,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mode: ReplicaMode,
    pub comparator: Comparator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Ec,
    Uc,
    Both,
}

impl std::str::FromStr for Criterion {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ec" => Ok(Criterion::Ec),
            "uc" => Ok(Criterion::Uc),
            "both" => Ok(Criterion::Both),
            _ => Err(format!("unknown criterion `{s}` (ec, uc, both)")),
        }
    }
}

pub fn cmd_run(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let text = match fs::read_to_string(&cfg.scenario) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", cfg.scenario.display());
            return EXIT_INPUT;
        }
    };
    let mut scenario = match Scenario::parse(&text) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", cfg.scenario.display());
            return EXIT_INPUT;
        }
    };
    if let Some(seed) = cfg.seed {
        scenario.seed = seed;
    }
    let sim = SimConfig {
        comparator: cfg.comparator.clone(),
        mode: cfg.mode,
    };
    let outcome = match simulate(&scenario, &sim) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INPUT;
        }
    };
    if !outcome.quiescent {
        let _ = writeln!(err, "warning: survivors remain partitioned; no converged reads recorded");
    }
    let text = outcome.history.serialize();
    match &cfg.output {
        Some(path) => {
            if let Err(e) = fs::write(path, text) {
                let _ = writeln!(err, "error: {}: {e}", path.display());
                return EXIT_INPUT;
            }
        }
        None => {
            let _ = out.write_all(text.as_bytes());
        }
    }
    EXIT_OK
}

fn check_error_code(e: &CheckError) -> u8 {
    match e {
        CheckError::NonQuiescent { .. } => EXIT_NON_QUIESCENT,
        CheckError::BoundExceeded { .. } => EXIT_BOUND,
    }
}

fn write_uc_details(out: &mut dyn Write, v: &UcVerdict) {
    if let Some(w) = &v.witness {
        let steps: Vec<String> = w.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "witness: {}", steps.join(" "));
    }
    if let Some(r) = &v.reason {
        let _ = writeln!(out, "reason: {r}");
    }
}

pub fn cmd_check(path: &Path, criterion: Criterion, bound: usize, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let h = match fs::read_to_string(path)
        .map_err(|e| e.to_string())
        .and_then(|t| History::parse(&t).map_err(|e| e.to_string()))
    {
        Ok(h) => h,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", path.display());
            return EXIT_INPUT;
        }
    };
    check_history(&h, criterion, bound, out, err)
}

pub fn check_history(h: &History, criterion: Criterion, bound: usize, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let ec = match check_ec(h) {
        Ok(ec) => ec,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return check_error_code(&e);
        }
    };
    if criterion == Criterion::Ec {
        let _ = writeln!(out, "EC: {ec}");
        return if ec { EXIT_OK } else { EXIT_FAILED };
    }
    let uc = match check_uc_bounded(h, bound) {
        Ok(v) => v,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return check_error_code(&e);
        }
    };
    let holds = match criterion {
        Criterion::Uc => {
            let _ = writeln!(out, "UC: {}", uc.holds);
            uc.holds
        }
        _ => {
            let _ = writeln!(out, "EC: {ec}, UC: {}", uc.holds);
            ec && uc.holds
        }
    };
    write_uc_details(out, &uc);
    if holds {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

/// Classification label for a pair of verdicts.
pub fn classify(ec: bool, uc: bool) -> &'static str {
    match (ec, uc) {
        (false, false) => "Not EC and not UC",
        (true, false) => "EC but not UC",
        (true, true) => "EC and UC",
        (false, true) => "UC but not EC",
    }
}

pub struct FigureRow {
    pub name: &'static str,
    pub history: History,
    pub ec: bool,
    pub uc: UcVerdict,
    pub expected: &'static str,
}

/// The three two-process set histories: two curated ones and one produced
/// by the update-consistent replicas under the static-priority comparator.
pub fn figure_rows() -> Vec<FigureRow> {
    let scenario = Scenario::parse(FIG1_SCENARIO).expect("bundled scenario");
    let cfg = SimConfig {
        comparator: FIG1C_COMPARATOR.parse().expect("bundled comparator"),
        mode: ReplicaMode::UpdateConsistent,
    };
    let generated = simulate(&scenario, &cfg).expect("bundled scenario runs").history;
    let inputs = [
        ("1a", History::parse(FIG1A_HISTORY).expect("bundled history"), "Not EC and not UC"),
        ("1b", History::parse(FIG1B_HISTORY).expect("bundled history"), "EC but not UC"),
        ("1c", generated, "EC and UC"),
    ];
    inputs
        .into_iter()
        .map(|(name, history, expected)| {
            let ec = check_ec(&history).expect("quiescent");
            let uc = check_uc_bounded(&history, DEFAULT_SEARCH_BOUND).expect("small");
            FigureRow {
                name,
                history,
                ec,
                uc,
                expected,
            }
        })
        .collect()
}

pub fn cmd_demo_figures(out: &mut dyn Write) -> u8 {
    let rows = figure_rows();
    let _ = writeln!(out, "{:<4} {:<6} {:<6} {:<18} match", "fig", "EC", "UC", "class");
    let mut all = true;
    for row in &rows {
        let class = classify(row.ec, row.uc.holds);
        let ok = class == row.expected;
        all &= ok;
        let _ = writeln!(
            out,
            "{:<4} {:<6} {:<6} {:<18} {}",
            row.name,
            row.ec,
            row.uc.holds,
            class,
            if ok { "ok" } else { "MISMATCH" }
        );
    }
    for row in &rows {
        if let Some(w) = &row.uc.witness {
            let steps: Vec<String> = w.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "{} witness: {}", row.name, steps.join(" "));
        }
        if let Some(r) = &row.uc.reason {
            let _ = writeln!(out, "{} reason: {r}", row.name);
        }
    }
    if all {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

/// Result of one randomized run in a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BatchResult {
    Pass,
    Fail(String),
}

pub fn batch_one(seed: u64, params: &GenParams, cfg: &SimConfig) -> BatchResult {
    let scenario = random_scenario(seed, params);
    let outcome = match simulate(&scenario, cfg) {
        Ok(o) => o,
        Err(e) => return BatchResult::Fail(e.to_string()),
    };
    let h = &outcome.history;
    match check_ec(h) {
        Ok(true) => {}
        Ok(false) => return BatchResult::Fail("not EC".into()),
        Err(e) => return BatchResult::Fail(e.to_string()),
    }
    match check_uc_bounded(h, DEFAULT_SEARCH_BOUND) {
        Ok(v) if v.holds => {}
        Ok(v) => return BatchResult::Fail(format!("not UC: {}", v.reason.unwrap_or_default())),
        Err(e) => return BatchResult::Fail(e.to_string()),
    }
    let order = outcome.timestamp_order().unwrap_or_default();
    if let Err(e) = verify_witness(h, &order) {
        return BatchResult::Fail(format!("timestamp order is not a witness: {e}"));
    }
    BatchResult::Pass
}

pub fn cmd_batch(count: u64, start_seed: u64, cfg: &SimConfig, out: &mut dyn Write) -> u8 {
    let params = GenParams::default();
    let mut failed = 0u64;
    for seed in start_seed..start_seed + count {
        match batch_one(seed, &params, cfg) {
            BatchResult::Pass => {
                let _ = writeln!(out, "seed {seed}: pass");
            }
            BatchResult::Fail(why) => {
                failed += 1;
                let _ = writeln!(out, "seed {seed}: FAIL {why}");
            }
        }
    }
    let _ = writeln!(out, "passed {} failed {failed}", count - failed);
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}
