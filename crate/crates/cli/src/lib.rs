//! Runs the verification suites from a JSON configuration and emits deterministic reports.

pub mod config;
pub mod output;

use anyhow::{bail, Result};
use clap::ValueEnum;
use nht_core::pairing::{Scenario, Setup};
use nht_core::suites::*;
use serde::Serialize;
use serde_json::{json, Value};

pub use config::{Config, SCHEMA_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    VerifyKernel,
    Growth,
    Stopping,
    Martingale,
    McGoodbad,
    Surgery,
    Pairing,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::VerifyKernel,
        Suite::Growth,
        Suite::Stopping,
        Suite::Martingale,
        Suite::McGoodbad,
        Suite::Surgery,
        Suite::Pairing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::VerifyKernel => "verify-kernel",
            Suite::Growth => "growth",
            Suite::Stopping => "stopping",
            Suite::Martingale => "martingale",
            Suite::McGoodbad => "mc-goodbad",
            Suite::Surgery => "surgery",
            Suite::Pairing => "pairing",
        }
    }
}

/// A CSV file produced alongside the JSON report.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub file: String,
    pub content: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub pass: bool,
    pub summary: String,
    pub report: Value,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schema: u32,
    pub command: String,
    /// The configuration after defaults and command-line overrides.
    pub config: Config,
    pub suites: Vec<SuiteOutcome>,
    pub pass: bool,
}

/// Shared state, built on first use so that `all` computes each piece once.
struct Context<'a> {
    cfg: &'a Config,
    setup: Option<Setup>,
    trees: Option<ScenarioTrees>,
    battery: Option<InstanceBattery>,
}

impl<'a> Context<'a> {
    fn setup(&mut self) -> Result<&Setup> {
        if self.setup.is_none() {
            self.setup = Some(Setup::new(&self.cfg.scenario)?);
        }
        Ok(self.setup.as_ref().unwrap())
    }

    fn trees(&mut self) -> Result<&ScenarioTrees> {
        if self.trees.is_none() {
            let t = scenario_trees(self.setup()?)?;
            self.trees = Some(t);
        }
        Ok(self.trees.as_ref().unwrap())
    }

    fn battery(&mut self) -> Result<Option<&InstanceBattery>> {
        let b = &self.cfg.battery;
        if !b.enabled {
            return Ok(None);
        }
        if self.battery.is_none() {
            self.battery = Some(run_instances::<f64>(&stopping_specs(self.cfg.scenario.seed, b.replicas))?);
        }
        Ok(self.battery.as_ref())
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Serialized form of a small enum or struct, unquoted when it is a plain string.
fn label<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

fn verify_kernel(cx: &mut Context) -> Result<SuiteOutcome> {
    let (samples, seed) = (cx.cfg.kernel.samples, cx.cfg.scenario.seed);
    let k = kernel_check(cx.setup()?, samples, seed)?;
    let o = if cx.cfg.kernel.oracles { Some(oracles(seed)?) } else { None };
    let pass = k.pass && o.as_ref().is_none_or(|o| o.pass);
    let r = &k.report;
    let mut summary = format!(
        "size {:.4}, smoothness {:.4} / {:.4} over {} triples",
        r.size_ratio, r.holder_x_ratio, r.holder_y_ratio, r.samples
    );
    if let Some(o) = &o {
        let gap = o.cases.iter().map(|c| c.norm_relative).fold(0.0, f64::max);
        summary.push_str(&format!("; oracles {} (norm gap {gap:.2e})", verdict(o.pass)));
    }
    Ok(SuiteOutcome {
        suite: Suite::VerifyKernel,
        pass,
        summary,
        report: json!({ "kernel": k, "oracles": o }),
        tables: Vec::new(),
    })
}

fn growth(cx: &mut Context) -> Result<SuiteOutcome> {
    let g = growth_check(cx.setup()?);
    Ok(SuiteOutcome {
        suite: Suite::Growth,
        pass: g.pass,
        summary: format!("mu(B(x, r)) <= {:.4} r^{} over {} atoms", g.constant, g.exponent, g.atoms),
        report: serde_json::to_value(&g)?,
        tables: Vec::new(),
    })
}

/// Battery summary without the per-instance records, which go to the CSV.
fn battery_summary(b: &InstanceBattery) -> Value {
    json!({
        "instances": b.records.len(),
        "decay_pass": b.decay_pass,
        "carleson_pass": b.carleson_pass,
        "worst_decay_margin": b.worst_decay_margin,
        "worst_carleson_margin": b.worst_carleson_margin,
        "reconstruction_checked": b.reconstruction_checked,
        "worst_reconstruction": b.worst_reconstruction,
        "pythagoras_checked": b.pythagoras_checked,
        "worst_pythagoras": b.worst_pythagoras,
        "level_sets_checked": b.level_sets_checked,
        "level_sets_pass": b.level_sets_pass,
    })
}

fn instance_table(b: &InstanceBattery) -> Result<Table> {
    let rows: Vec<Vec<String>> = b
        .records
        .iter()
        .map(|r| {
            let s = &r.spec;
            vec![
                s.seed.to_string(),
                s.dim.to_string(),
                s.depth.to_string(),
                label(&s.layout),
                s.atoms.to_string(),
                label(&s.kernel),
                label(&s.family),
                output::float(s.eta),
                r.stops.to_string(),
                r.generations.to_string(),
                r.depth_capped.to_string(),
                output::float(r.decay.value),
                output::float(r.decay.bound),
                output::float(r.carleson.value),
                output::float(r.carleson.bound),
                r.reconstruction.map(output::float).unwrap_or_default(),
            ]
        })
        .collect();
    let header = [
        "seed",
        "dim",
        "depth",
        "layout",
        "atoms",
        "kernel",
        "family",
        "eta",
        "stops",
        "generations",
        "depth_capped",
        "decay",
        "decay_bound",
        "carleson",
        "carleson_bound",
        "reconstruction",
    ];
    Ok(Table {
        file: "instances.csv".into(),
        content: output::to_csv(&header, &rows)?,
    })
}

/// Fails only when every side hit the depth cap; capped sides are otherwise reported and skipped.
fn all_capped(t: &ScenarioTrees) -> bool {
    !t.stopping.is_empty() && t.stopping.iter().all(|s| s.depth_capped)
}

fn stopping(cx: &mut Context) -> Result<SuiteOutcome> {
    let trees = cx.trees()?.clone();
    let battery = cx.battery()?;
    let battery_pass = battery.is_none_or(|b| b.decay_pass && b.carleson_pass);
    let pass = trees.stopping_pass && !all_capped(&trees) && battery_pass;
    let max_stops = trees.stopping.iter().map(|s| s.stops).max().unwrap_or(0);
    let mut summary = format!("{} trees, at most {max_stops} stopping cubes", trees.stopping.len());
    if let Some(b) = battery {
        summary.push_str(&format!(
            "; battery of {} instances, decay margin {:.3e}, Carleson margin {:.3e}",
            b.records.len(),
            b.worst_decay_margin,
            b.worst_carleson_margin
        ));
    }
    let tables = battery.map(instance_table).transpose()?.into_iter().collect();
    Ok(SuiteOutcome {
        suite: Suite::Stopping,
        pass,
        summary,
        report: json!({
            "scenario": { "trees": trees.stopping, "pass": trees.stopping_pass },
            "battery": battery.map(battery_summary),
        }),
        tables,
    })
}

fn sweep_table(s: &SweepBattery) -> Result<Table> {
    let ceiling = |suite: SweepSuite, atoms: usize| {
        s.rows
            .iter()
            .filter(|r| r.suite == suite && r.spec.atoms == atoms)
            .map(|r| r.ratio)
            .fold(0.0, f64::max)
    };
    let rows: Vec<Vec<String>> = s
        .rows
        .iter()
        .map(|r| {
            let p = &r.spec;
            vec![
                label(&r.suite),
                p.seed.to_string(),
                p.dim.to_string(),
                p.depth.to_string(),
                label(&p.layout),
                p.atoms.to_string(),
                label(&p.kernel),
                label(&p.family),
                output::float(p.eta),
                output::float(r.ratio),
                output::float(ceiling(r.suite, p.atoms)),
            ]
        })
        .collect();
    let header = ["suite", "seed", "dim", "depth", "layout", "atoms", "kernel", "family", "eta", "ratio", "ceiling"];
    Ok(Table {
        file: "sweeps.csv".into(),
        content: output::to_csv(&header, &rows)?,
    })
}

fn martingale(cx: &mut Context) -> Result<SuiteOutcome> {
    let trees = cx.trees()?.clone();
    let battery = cx.battery()?.cloned();
    let b = &cx.cfg.battery;
    let sweeps = if b.enabled && b.sweeps {
        Some(run_sweeps::<f64>(&sweep_specs(cx.cfg.scenario.seed, b.sweep_replicas))?)
    } else {
        None
    };
    let battery_pass = battery.as_ref().is_none_or(|b| b.reconstruction_pass() && b.level_set_pass());
    let sweep_pass = sweeps.as_ref().is_none_or(SweepBattery::pass);
    let pass = trees.martingale_pass && !all_capped(&trees) && battery_pass && sweep_pass;
    let worst = trees.martingale.iter().filter_map(|m| m.reconstruction).fold(0.0, f64::max);
    let mut summary = format!("{} expansions, reconstruction {worst:.2e}", trees.martingale.len());
    if let Some(b) = &battery {
        summary.push_str(&format!(
            "; battery reconstruction {:.2e}, Pythagoras {:.2e}, {} level sets",
            b.worst_reconstruction, b.worst_pythagoras, b.level_sets_checked
        ));
    }
    if let Some(s) = &sweeps {
        for c in &s.ceilings {
            summary.push_str(&format!("; {} {:+.1}%", label(&c.suite), 100.0 * c.relative_move));
        }
    }
    let tables = sweeps.as_ref().map(sweep_table).transpose()?.into_iter().collect();
    Ok(SuiteOutcome {
        suite: Suite::Martingale,
        pass,
        summary,
        report: json!({
            "scenario": { "expansions": trees.martingale, "pass": trees.martingale_pass },
            "battery": battery.as_ref().map(battery_summary),
            "sweeps": sweeps.as_ref().map(|s| &s.ceilings),
        }),
        tables,
    })
}

fn mc_goodbad(cx: &mut Context) -> Result<SuiteOutcome> {
    let mc = cx.cfg.mc.clone();
    let seed = cx.cfg.scenario.seed;
    let fits: Vec<BadDecay> = mc
        .cases
        .iter()
        .map(|c| bad_decay(c.dim, c.gamma, c.r, mc.trials, seed))
        .collect::<nht_core::Result<_>>()?;
    let collar = collar_ladder(cx.setup()?, &mc.collar_widths, mc.collar_trials)?;
    let pass = fits.iter().all(|b| b.pass) && collar.pass;
    let mut rows = Vec::new();
    for b in &fits {
        for p in &b.points {
            rows.push(vec![
                b.dim.to_string(),
                output::float(b.gamma),
                b.r.to_string(),
                p.k.to_string(),
                output::float(p.estimate),
                output::float(p.half_width),
            ]);
        }
    }
    let collar_rows: Vec<Vec<String>> = collar
        .points
        .iter()
        .map(|p| vec![output::float(p.parameter), output::float(p.mean), output::float(p.half_width)])
        .collect();
    let fitted: Vec<String> = fits
        .iter()
        .map(|b| format!("{}-d exponent {:.4} vs {:.4}", b.dim, b.fit.map_or(f64::NAN, |f| f.exponent), b.required))
        .collect();
    Ok(SuiteOutcome {
        suite: Suite::McGoodbad,
        pass,
        summary: format!("{}; collar ladder {}", fitted.join(", "), verdict(collar.pass)),
        report: json!({ "bad_decay": fits, "collar": collar }),
        tables: vec![
            Table {
                file: "bad_decay.csv".into(),
                content: output::to_csv(&["dim", "gamma", "r", "k", "estimate", "half_width"], &rows)?,
            },
            Table {
                file: "collar.csv".into(),
                content: output::to_csv(&["u", "mean", "half_width"], &collar_rows)?,
            },
        ],
    })
}

fn surgery_suite(cx: &mut Context) -> Result<SuiteOutcome> {
    let s = &cx.cfg.surgery;
    let r = surgery(&s.seeds, s.trials)?;
    let matched: usize = r.seeds.iter().map(|s| s.matched_cells).sum();
    Ok(SuiteOutcome {
        suite: Suite::Surgery,
        pass: r.pass,
        summary: format!(
            "{matched} matched cells over {} seeds, smoothing ceiling {:.3e}, spread {:.3}",
            r.seeds.len(),
            r.smoothing_ceiling,
            r.smoothing_spread
        ),
        report: serde_json::to_value(&r)?,
        tables: Vec::new(),
    })
}

fn pairing(cx: &mut Context) -> Result<SuiteOutcome> {
    let sc = &cx.cfg.scenario;
    let book = bookkeeping(sc)?;
    let capped = book
        .report
        .as_ref()
        .is_some_and(|r| r.aggregates.trials > 0 && r.aggregates.depth_capped_trials == r.aggregates.trials);
    let s = &cx.cfg.schur;
    let sch = if s.enabled {
        let sc = Scenario {
            trials: s.trials,
            ..sc.clone()
        };
        Some(schur(&sc, s.shallow, s.deep)?)
    } else {
        None
    };
    let pass = book.pass && !capped && sch.as_ref().is_none_or(|s| s.pass);
    let mut summary = format!("residual {:.2e} over {} trials", book.max_residual, book.trials);
    if let Some((a, b)) = book.antisymmetric {
        summary.push_str(&format!(", f = g pairing {a:.2e} / {b:.2e}"));
    }
    if let Some(s) = &sch {
        summary.push_str(&format!("; Schur {} (pairwise C {:.4})", verdict(s.pass), s.pairwise_c));
    }
    Ok(SuiteOutcome {
        suite: Suite::Pairing,
        pass,
        summary,
        report: json!({ "bookkeeping": book, "schur": sch }),
        tables: Vec::new(),
    })
}

/// Runs the suites in order. Reports carry no timings, so equal inputs give equal bytes.
pub fn run(command: &str, cfg: &Config, suites: &[Suite]) -> Result<RunReport> {
    if suites.is_empty() {
        bail!("no suites selected");
    }
    let mut cx = Context {
        cfg,
        setup: None,
        trees: None,
        battery: None,
    };
    let mut out = Vec::new();
    for &s in suites {
        let o = match s {
            Suite::VerifyKernel => verify_kernel(&mut cx),
            Suite::Growth => growth(&mut cx),
            Suite::Stopping => stopping(&mut cx),
            Suite::Martingale => martingale(&mut cx),
            Suite::McGoodbad => mc_goodbad(&mut cx),
            Suite::Surgery => surgery_suite(&mut cx),
            Suite::Pairing => pairing(&mut cx),
        }?;
        out.push(o);
    }
    let pass = out.iter().all(|o| o.pass);
    Ok(RunReport {
        schema: SCHEMA_VERSION,
        command: command.into(),
        config: cfg.clone(),
        suites: out,
        pass,
    })
}

impl RunReport {
    pub fn summary_lines(&self) -> Vec<String> {
        self.suites
            .iter()
            .map(|o| format!("{} {}: {}", verdict(o.pass), o.suite.name(), o.summary))
            .collect()
    }
}
