//! Checks on the trees and expansions of a configured pairing scenario.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::czo::{verify_standard, StandardReport};
use crate::error::Result;
use crate::martingale::{dq_maximal_norm, half_twisted_field, jn_decompose, transform_norm};
use crate::measure::verify_growth;
use crate::pairing::{Setup, SideData};
use crate::stopping::BoundCheck;
use crate::testfns::Side;

use super::battery::{LevelSetRecord, LEVEL_SET_SCALES, RECONSTRUCTION_TOL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelCheck {
    pub atoms: usize,
    pub report: StandardReport,
    pub pass: bool,
}

/// Size and smoothness ratios of the scenario's kernel over seeded atom triples.
pub fn kernel_check(setup: &Setup, samples: usize, seed: u64) -> Result<KernelCheck> {
    let sc = &setup.scenario;
    let spec = sc.kernel.spec(sc.dim)?.scaled(sc.kernel_scale);
    let report = verify_standard(&spec, &setup.amb.mu, samples, seed)?;
    Ok(KernelCheck {
        atoms: setup.amb.n(),
        pass: report.pass,
        report,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthCheck {
    pub atoms: usize,
    pub exponent: f64,
    /// `sup mu(B(x, r)) / r^m` over the radius ladder.
    pub constant: f64,
    pub pass: bool,
}

pub fn growth_check(setup: &Setup) -> GrowthCheck {
    let mu = &setup.amb.mu;
    let constant = verify_growth(mu);
    GrowthCheck {
        atoms: mu.len(),
        exponent: mu.m,
        constant,
        pass: constant.is_finite() && constant > 0.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideStopping {
    pub trial: usize,
    pub side: Side,
    pub stops: usize,
    pub generations: u32,
    pub depth_capped: bool,
    pub decay: BoundCheck,
    pub carleson: BoundCheck,
    pub generation_masses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideMartingale {
    pub trial: usize,
    pub side: Side,
    /// `max |h - expansion| / max |h|`, when no leaf holds several atoms.
    pub reconstruction: Option<f64>,
    pub square_function: f64,
    /// Largest transform ratio under greedy signs over the stopping cubes.
    pub transform: f64,
    pub half_twisted_maximal: f64,
    pub level_sets: Vec<LevelSetRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTrees {
    pub stopping: Vec<SideStopping>,
    pub martingale: Vec<SideMartingale>,
    pub stopping_pass: bool,
    pub martingale_pass: bool,
}

fn side_stopping(trial: usize, d: &SideData) -> SideStopping {
    SideStopping {
        trial,
        side: d.side,
        stops: d.st.stops.len(),
        generations: d.st.n_generations(),
        depth_capped: d.st.depth_capped,
        decay: d.st.check_decay(&d.tree),
        carleson: d.st.check_carleson(&d.tree),
        generation_masses: d.st.generation_masses(&d.tree),
    }
}

fn side_martingale(trial: usize, d: &SideData, setup: &Setup) -> Result<SideMartingale> {
    let mu = &setup.amb.mu;
    let (tree, st, dec) = (&d.tree, &d.st, &d.dec);
    let max = d.h.max_abs();
    let reconstruction = (!st.depth_capped && max > 0.0).then(|| dec.reconstruction_residual / max);
    let mut transform: f64 = 0.0;
    let mut maximal: f64 = 0.0;
    for f in 0..st.stops.len() {
        let eps = dec.greedy_signs(tree, st, mu, f);
        transform = transform.max(transform_norm(tree, st, mu, dec, &d.h, f, &eps));
        maximal = maximal.max(dq_maximal_norm(tree, st, mu, f, &eps, &d.h, 2.0));
    }
    let ones = vec![1.0; tree.len()];
    let field = half_twisted_field(tree, st, mu, 0, &ones, &d.h);
    let sup = field.sup_norm();
    let mut level_sets = Vec::new();
    if sup > 0.0 {
        for &scale in &LEVEL_SET_SCALES {
            let rep = jn_decompose(tree, &field.scaled(scale / sup), 0)?;
            level_sets.push(LevelSetRecord {
                scale,
                hypothesis: rep.hypothesis_holds(),
                holds: rep.tail_holds(),
                tail: rep.tail,
            });
        }
    }
    Ok(SideMartingale {
        trial,
        side: d.side,
        reconstruction,
        square_function: dec.square_function_ratio(tree, mu),
        transform,
        half_twisted_maximal: maximal,
        level_sets,
    })
}

/// Stopping and expansion checks on both sides of every trial.
pub fn scenario_trees(setup: &Setup) -> Result<ScenarioTrees> {
    let per: Vec<(Vec<SideStopping>, Vec<SideMartingale>)> = (0..setup.scenario.trials)
        .into_par_iter()
        .map(|i| {
            let trial = setup.trial(i)?;
            let sides = [&trial.t, &trial.s];
            let stopping = sides.iter().map(|d| side_stopping(i, d)).collect();
            let martingale = sides.iter().map(|d| side_martingale(i, d, setup)).collect::<Result<_>>()?;
            Ok((stopping, martingale))
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let (stopping, martingale): (Vec<_>, Vec<_>) = per.into_iter().unzip();
    let stopping: Vec<SideStopping> = stopping.into_iter().flatten().collect();
    let martingale: Vec<SideMartingale> = martingale.into_iter().flatten().collect();
    let stopping_pass = stopping.iter().all(|s| s.decay.pass && s.carleson.pass);
    let martingale_pass = martingale.iter().all(|m| {
        m.reconstruction.is_none_or(|r| r <= RECONSTRUCTION_TOL) && m.level_sets.iter().all(|l| !l.hypothesis || l.holds)
    });
    Ok(ScenarioTrees {
        stopping,
        martingale,
        stopping_pass,
        martingale_pass,
    })
}
