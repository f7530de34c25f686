//! Acceptance battery. Runs every criterion in sequence so the timing limits are measured
//! without contention, prints one PASS/FAIL line per criterion and fails if any line fails.
//!
//! `cargo test -p nht-core --test acceptance -- --nocapture` shows the lines.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use nht_core::pairing::Scenario;
use nht_core::suites::*;

const SEED: u64 = 7;
/// Two replicas of the 144-instance grid of dimensions, depths, families and layouts.
const STOPPING_REPLICAS: u64 = 2;
const SWEEP_REPLICAS: u64 = 2;
const MIN_INSTANCES: usize = 100;
const MC_TRIALS: usize = 256;
const SURGERY_SEEDS: [u64; 4] = [1, 2, 3, 4];
const SURGERY_TRIALS: usize = 4;
const SCHUR_DEPTHS: (u32, u32) = (6, 8);
const SCHUR_TRIALS: usize = 8;

const STOPPING_LIMIT: Duration = Duration::from_secs(60);
const SWEEP_LIMIT: Duration = Duration::from_secs(600);
const MC_LIMIT: Duration = Duration::from_secs(120);

struct Verdicts(Vec<(usize, bool)>);

impl Verdicts {
    fn record(&mut self, n: usize, pass: bool, detail: String) {
        println!("{} criterion {n}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.0.push((n, pass));
    }
}

#[test]
fn acceptance_criteria() {
    let mut v = Verdicts(Vec::new());

    // 1-4 share one battery of stopping instances
    let specs = stopping_specs(SEED, STOPPING_REPLICAS);
    let start = Instant::now();
    let battery = run_instances::<f64>(&specs).expect("stopping battery");
    let elapsed = start.elapsed();

    let dims: BTreeSet<usize> = specs.iter().map(|s| s.dim).collect();
    let depths: BTreeSet<u32> = specs.iter().map(|s| s.depth).collect();
    let has = |f: BatteryFamily| specs.iter().any(|s| s.family == f);
    let cauchy = specs.iter().any(|s| matches!(s.kernel, BatteryKernel::Cauchy));
    let riesz = specs.iter().any(|s| matches!(s.kernel, BatteryKernel::Riesz { .. }));
    let covered = specs.len() >= MIN_INSTANCES
        && dims == BTreeSet::from([1, 2])
        && depths == BTreeSet::from([5, 6, 7, 8])
        && has(BatteryFamily::Indicator)
        && has(BatteryFamily::Perturbed)
        && cauchy
        && riesz;
    let branching = battery.records.iter().filter(|r| r.generations > 1).count();
    v.record(
        1,
        covered && battery.decay_pass && elapsed < STOPPING_LIMIT,
        format!(
            "decay <= 1 - 1/(8A) on {} instances ({branching} with several generations), worst margin {:.3e}, {:.1?}",
            specs.len(),
            battery.worst_decay_margin,
            elapsed
        ),
    );
    v.record(
        2,
        battery.carleson_pass,
        format!("Carleson <= 8A on every instance, worst margin {:.3e}", battery.worst_carleson_margin),
    );
    v.record(
        3,
        battery.reconstruction_pass(),
        format!(
            "reconstruction worst {:.3e} over {} instances, Pythagoras worst {:.3e} over {}",
            battery.worst_reconstruction,
            battery.reconstruction_checked,
            battery.worst_pythagoras,
            battery.pythagoras_checked
        ),
    );
    let hyp = battery
        .records
        .iter()
        .flat_map(|r| &r.level_sets)
        .filter(|l| l.hypothesis)
        .count();
    v.record(
        4,
        battery.level_set_pass(),
        format!("level-set tails within 2^(-(t-1)/2) on {hyp} fields meeting the hypothesis"),
    );

    let start = Instant::now();
    let sweeps = run_sweeps::<f64>(&sweep_specs(SEED, SWEEP_REPLICAS)).expect("sweeps");
    let elapsed = start.elapsed();
    let moves: Vec<String> = sweeps
        .ceilings
        .iter()
        .map(|c| format!("{:?} {:.4} -> {:.4} ({:+.1}%)", c.suite, c.base, c.refined, 100.0 * c.relative_move))
        .collect();
    v.record(
        5,
        sweeps.pass() && elapsed < SWEEP_LIMIT,
        format!("{}, {:.1?}", moves.join(", "), elapsed),
    );

    let start = Instant::now();
    let fits: Vec<BadDecay> = DECAY_CASES
        .iter()
        .map(|&(dim, gamma, r)| bad_decay(dim, gamma, r, MC_TRIALS, SEED).expect("bad decay"))
        .collect();
    let elapsed = start.elapsed();
    let detail: Vec<String> = fits
        .iter()
        .map(|b| {
            let widths = b.points.iter().map(|p| p.half_width).fold(0.0, f64::max);
            format!(
                "{}-d gamma {:.4} r {}: exponent {:.4} >= {:.4}, half-width <= {:.3}",
                b.dim,
                b.gamma,
                b.r,
                b.fit.map_or(f64::NAN, |f| f.exponent),
                b.required,
                widths
            )
        })
        .collect();
    v.record(
        6,
        fits.iter().all(|b| b.pass && b.points.iter().all(|p| p.half_width.is_finite())) && elapsed < MC_LIMIT,
        format!("{}; {:.1?}", detail.join("; "), elapsed),
    );

    let book = bookkeeping(&Scenario::default()).expect("bookkeeping");
    v.record(
        7,
        book.pass && book.antisymmetric.is_some(),
        format!(
            "resummation residual {:.3e} over {} trials, antisymmetric f = g {:?}",
            book.max_residual, book.trials, book.antisymmetric
        ),
    );

    let surg = surgery(&SURGERY_SEEDS, SURGERY_TRIALS).expect("surgery");
    let matched: usize = surg.seeds.iter().map(|s| s.matched_cells).sum();
    v.record(
        8,
        surg.pass,
        format!(
            "{matched} matched cells over {} seeds, smoothing ceiling {:.3e} with spread {:.3}",
            surg.seeds.len(),
            surg.smoothing_ceiling,
            surg.smoothing_spread
        ),
    );

    let sc = Scenario {
        trials: SCHUR_TRIALS,
        ..Default::default()
    };
    let sch = schur(&sc, SCHUR_DEPTHS.0, SCHUR_DEPTHS.1).expect("schur");
    let (amin, amax) = sch.trials.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), t| (lo.min(t.a_ratio), hi.max(t.a_ratio)));
    let (bmin, bmax) = sch.trials.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), t| (lo.min(t.b_ratio), hi.max(t.b_ratio)));
    v.record(
        9,
        sch.pass,
        format!(
            "depth {} -> {}: A ratio in [{amin:.3}, {amax:.3}], B ratio in [{bmin:.3}, {bmax:.3}], pairwise C {:.4}",
            SCHUR_DEPTHS.0, SCHUR_DEPTHS.1, sch.pairwise_c
        ),
    );

    let orc = oracles(SEED).expect("oracles");
    let worst = orc.cases.iter().map(|c| c.norm_relative).fold(0.0, f64::max);
    let mism: usize = orc.cases.iter().map(|c| c.centred_mismatches + c.dyadic_mismatches).sum();
    v.record(
        10,
        orc.pass,
        format!("{} cases, norm relative gap {worst:.3e}, maximal mismatches {mism}", orc.cases.len()),
    );

    let failed: Vec<usize> = v.0.iter().filter(|(_, p)| !p).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
