//! Suites built on the pairing decomposition: bad-cube decay, bookkeeping, surgery and Schur.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{free_cube, GoodBadParams, FRAC_BITS, MAX_LOG2};
use crate::measure::inner;
use crate::pairing::{
    bad_probability_mc, collar_mass_mc, fit_decay, full_report, run_trial, schur_norm, separated_sum, split_pairs, BadProbability,
    DecayFit, FunctionSpec, LadderPoint, MeasureSpec, PairingReport, Scenario, SchurReport, Setup, TrialReport, BOOKKEEPING_TOL,
};
use crate::rng::SeedTree;

/// Fitted exponent must reach this fraction of `gamma`.
pub const DECAY_FRACTION: f64 = 0.75;
/// Scales `r ..= r + DECAY_SPAN` enter the fit.
pub const DECAY_SPAN: i32 = 6;
/// Scales between the last fitted `k` and the root, so the truncated sum over coarser
/// cubes barely steepens the fit.
pub const ROOT_MARGIN: i32 = 16;
/// `(dimension, gamma, r)` of the gated fits. Below `r` of about `4 / gamma` the estimates
/// saturate at 1, so the ladders start past that regime.
pub const DECAY_CASES: [(usize, f64, u32); 3] = [(1, 0.25, 24), (2, 0.25, 24), (2, 1.0 / 6.0, 36)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BadDecay {
    pub dim: usize,
    pub gamma: f64,
    pub r: u32,
    pub trials: usize,
    /// `log2` of the probe cube's side, with the root at the top of the dyadic range.
    pub cube_log2: i32,
    pub root_log2: i32,
    pub points: Vec<BadProbability>,
    pub fit: Option<DecayFit>,
    pub required: f64,
    pub pass: bool,
}

/// `P(a cube is bad at scale >= 2^k l(Q))` for `k = r ..= r + 6` against random grids whose
/// roots sit `ROOT_MARGIN` scales above the last `k`, and the fitted decay exponent.
pub fn bad_decay(dim: usize, gamma: f64, r: u32, trials: usize, seed: u64) -> Result<BadDecay> {
    let gb = GoodBadParams::new(gamma, r)?;
    let n_scale = MAX_LOG2 - 2;
    let root_log2 = n_scale + 1;
    let cube_log2 = root_log2 - (r as i32 + DECAY_SPAN + ROOT_MARGIN);
    if cube_log2 < 1 - FRAC_BITS {
        return Err(Error::InvalidParameter(format!("r = {r} leaves no room below the root")));
    }
    let mut q = free_cube(&vec![0.0; dim], 0);
    q.side_log2 = cube_log2;
    let ks: Vec<i32> = (r as i32..=r as i32 + DECAY_SPAN).collect();
    let points = bad_probability_mc(&q, &ks, n_scale, &gb, trials, &SeedTree::new(seed).child("bad-decay", dim as u64))?;
    let fit = fit_decay(&points);
    let required = DECAY_FRACTION * gamma;
    let pass = fit.is_some_and(|f| f.points == ks.len() && f.exponent >= required);
    Ok(BadDecay {
        dim,
        gamma,
        r,
        trials,
        cube_log2,
        root_log2,
        points,
        fit,
        required,
        pass,
    })
}

/// Collar widths of the default ladder, from the empty collar upwards.
pub const COLLAR_WIDTHS: [f64; 5] = [0.0, 1.0 / 256.0, 1.0 / 64.0, 1.0 / 16.0, 1.0 / 4.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollarLadder {
    pub trials: usize,
    pub points: Vec<LadderPoint>,
    /// Every step up the ladder is non-decreasing within the summed half-widths.
    pub monotone: bool,
    pub pass: bool,
}

/// Mass of the `(1 + u)` collar around the random top cube, for widths in increasing order.
pub fn collar_ladder(setup: &Setup, widths: &[f64], trials: usize) -> Result<CollarLadder> {
    if widths.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("collar widths must increase".into()));
    }
    let seeds = SeedTree::new(setup.scenario.seed).child("collar-ladder", 0);
    let points = collar_mass_mc(&setup.amb, widths, trials, &seeds)?;
    let monotone = points
        .windows(2)
        .all(|w| w[0].mean <= w[1].mean + w[0].half_width + w[1].half_width);
    let empty = points.iter().all(|p| p.parameter > 0.0 || p.mean == 0.0);
    Ok(CollarLadder {
        trials,
        pass: monotone && empty && points.iter().all(|p| p.mean.is_finite()),
        points,
        monotone,
    })
}

pub const ANTISYMMETRIC_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bookkeeping {
    pub trials: usize,
    /// Largest relative resummation residual over every checked bucket.
    pub max_residual: f64,
    /// Trial whose residual exceeded the tolerance, if any.
    pub failure: Option<String>,
    /// `max |<T f, f>| / (||T|| ||f||^2)` and the same for the sum of pieces, with `g = f`.
    pub antisymmetric: Option<(f64, f64)>,
    pub report: Option<PairingReport>,
    pub pass: bool,
}

/// `full_report` on the scenario; when its kernel is antisymmetric, also the `g = f` pairing.
pub fn bookkeeping(sc: &Scenario) -> Result<Bookkeeping> {
    let (max_residual, failure, report) = match full_report(sc) {
        Ok(rep) => (rep.aggregates.max_residual, None, Some(rep)),
        Err(Error::Bookkeeping { bucket, residual }) => (residual, Some(bucket), None),
        Err(e) => return Err(e),
    };
    let anti_sc = Scenario {
        g: FunctionSpec::SameAsF,
        ..sc.clone()
    };
    let setup = Setup::new(&anti_sc)?;
    let antisymmetric = if sc.kernel.spec(sc.dim)?.antisymmetric() {
        let scale = setup.amb.op_norm * inner(&setup.amb.mu, &setup.f, &setup.f);
        let reports: Vec<TrialReport> = (0..sc.trials)
            .into_par_iter()
            .map(|i| run_trial(&setup, i))
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<_>>()?;
        let norm = |x: f64| if scale > 0.0 { x.abs() / scale } else { x.abs() };
        let exact = reports.iter().map(|r| norm(r.exact)).fold(0.0, f64::max);
        let pieces = reports
            .iter()
            .map(|r| norm(r.pieces.iter().map(|p| p.piece.value).sum()))
            .fold(0.0, f64::max);
        Some((exact, pieces))
    } else {
        None
    };
    let pass = failure.is_none()
        && max_residual <= BOOKKEEPING_TOL
        && antisymmetric.is_none_or(|(a, b)| a <= ANTISYMMETRIC_TOL && b <= ANTISYMMETRIC_TOL);
    Ok(Bookkeeping {
        trials: sc.trials,
        max_residual,
        failure,
        antisymmetric,
        report,
        pass,
    })
}

/// The measure of the surgery suite: 24 clusters per axis of 4 points at spacing `2^-36`.
pub fn clustered_scenario(seed: u64, trials: usize) -> Scenario {
    Scenario {
        measure: MeasureSpec::Clustered {
            clusters_per_axis: 24,
            points_per_axis: 4,
            spacing_log2: -36,
        },
        trials,
        seed,
        ..Default::default()
    }
}

/// Relative residual allowed in the surgery identities.
pub const SURGERY_TOL: f64 = 1e-12;
/// Largest spread `max / min` of the per-seed smoothing ceilings.
pub const SMOOTHING_SPREAD: f64 = 4.0;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SurgerySeed {
    pub seed: u64,
    pub child_pairs: usize,
    pub matched_cells: usize,
    pub partition_violations: usize,
    pub five_h_violations: usize,
    pub boundary_outside_bad: usize,
    pub h_mismatch: usize,
    pub sigma_skipped: usize,
    pub terms_residual: f64,
    pub sigma_residual: f64,
    pub pivot_residual: f64,
    pub smoothing_ceiling: f64,
    pub piece_violations: usize,
}

impl SurgerySeed {
    pub fn sound(&self) -> bool {
        self.matched_cells > 0
            && self.partition_violations == 0
            && self.five_h_violations == 0
            && self.boundary_outside_bad == 0
            && self.h_mismatch == 0
            && self.piece_violations == 0
            && self.terms_residual <= SURGERY_TOL
            && self.sigma_residual <= SURGERY_TOL
            && self.pivot_residual <= SURGERY_TOL
            && self.smoothing_ceiling.is_finite()
            && self.smoothing_ceiling > 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surgery {
    pub seeds: Vec<SurgerySeed>,
    /// Recorded ceiling: the largest smoothing ratio over all seeds.
    pub smoothing_ceiling: f64,
    pub smoothing_spread: f64,
    pub pass: bool,
}

pub fn surgery(seeds: &[u64], trials: usize) -> Result<Surgery> {
    let per_seed: Vec<SurgerySeed> = seeds
        .iter()
        .map(|&seed| {
            let setup = Setup::new(&clustered_scenario(seed, trials))?;
            let reports: Vec<TrialReport> = (0..trials)
                .into_par_iter()
                .map(|i| run_trial(&setup, i))
                .collect::<Vec<_>>()
                .into_iter()
                .collect::<Result<_>>()?;
            let mut s = SurgerySeed {
                seed,
                ..Default::default()
            };
            for d in reports.iter().flat_map(|r| r.diagonal.iter()) {
                let c = &d.checks;
                s.child_pairs += c.child_pairs;
                s.matched_cells += c.matched_cells;
                s.partition_violations += c.partition_violations;
                s.five_h_violations += c.five_h_violations;
                s.boundary_outside_bad += c.boundary_outside_bad;
                s.h_mismatch += c.h_mismatch;
                s.sigma_skipped += c.sigma_skipped;
                s.terms_residual = s.terms_residual.max(c.terms_residual);
                s.sigma_residual = s.sigma_residual.max(c.sigma_residual);
                s.pivot_residual = s.pivot_residual.max(c.pivot_residual);
                s.smoothing_ceiling = s.smoothing_ceiling.max(c.smoothing_ratio);
                s.piece_violations += d.piece_violations;
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let hi = per_seed.iter().map(|s| s.smoothing_ceiling).fold(0.0, f64::max);
    let lo = per_seed.iter().map(|s| s.smoothing_ceiling).fold(f64::INFINITY, f64::min);
    let spread = hi / lo;
    let pass = !per_seed.is_empty() && per_seed.iter().all(SurgerySeed::sound) && spread <= SMOOTHING_SPREAD;
    Ok(Surgery {
        seeds: per_seed,
        smoothing_ceiling: hi,
        smoothing_spread: spread,
        pass,
    })
}

/// Largest admissible ratio between the Schur norms at the two depths.
pub const SCHUR_FACTOR: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchurTrial {
    pub trial: usize,
    pub shallow: SchurReport,
    pub deep: SchurReport,
    /// `deep / shallow` for the `A` and `B` matrices.
    pub a_ratio: f64,
    pub b_ratio: f64,
    /// Pairwise constants `C` at both depths.
    pub pairwise_c: (f64, f64),
    /// `sum |<T Delta_Q f, Delta_R g>| <= C sum A_QR ||..|| ||..||` at both depths.
    pub bound_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schur {
    pub depths: (u32, u32),
    pub trials: Vec<SchurTrial>,
    /// Recorded constant: the largest pairwise `C` seen.
    pub pairwise_c: f64,
    pub pass: bool,
}

fn schur_at(setup: &Setup, index: usize) -> Result<(SchurReport, f64, bool)> {
    let amb = &setup.amb;
    let p = &amb.params;
    let trial = setup.trial(index)?;
    let (t, s) = (&trial.t, &trial.s);
    let pairs = split_pairs(&t.tree, &s.tree, &p.goodbad(), |q, r| t.st.beta(q) < p.beta && s.st.beta(r) < p.beta);
    let rep = schur_norm(&pairs.separated, &t.tree, &s.tree, p, setup.scenario.dense_limit);
    let sep = separated_sum(&pairs.separated, &trial, amb);
    let holds = sep.abs_sum <= sep.bound * (1.0 + 1e-12);
    Ok((rep, sep.pairwise_c, holds))
}

/// Schur norms of the separated and nested matrices of the same trials at two depths.
pub fn schur(sc: &Scenario, shallow: u32, deep: u32) -> Result<Schur> {
    let a = Setup::new(&Scenario { depth: shallow, ..sc.clone() })?;
    let b = Setup::new(&Scenario { depth: deep, ..sc.clone() })?;
    let trials: Vec<SchurTrial> = (0..sc.trials)
        .into_par_iter()
        .map(|i| {
            let (sa, ca, ha) = schur_at(&a, i)?;
            let (sb, cb, hb) = schur_at(&b, i)?;
            Ok(SchurTrial {
                trial: i,
                a_ratio: sb.a_norm / sa.a_norm,
                b_ratio: sb.b_norm / sa.b_norm,
                shallow: sa,
                deep: sb,
                pairwise_c: (ca, cb),
                bound_holds: ha && hb,
            })
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let within = |x: f64| x.is_finite() && (1.0 / SCHUR_FACTOR..=SCHUR_FACTOR).contains(&x);
    let pairwise_c = trials
        .iter()
        .map(|t| t.pairwise_c.0.max(t.pairwise_c.1))
        .fold(0.0, f64::max);
    let pass = !trials.is_empty()
        && pairwise_c.is_finite()
        && trials.iter().all(|t| within(t.a_ratio) && within(t.b_ratio) && t.bound_holds);
    Ok(Schur {
        depths: (shallow, deep),
        trials,
        pairwise_c,
        pass,
    })
}
