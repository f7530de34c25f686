use proptest::prelude::*;

use super::*;
use crate::geometry::free_cube;

fn small_scenario() -> Scenario {
    Scenario {
        measure: MeasureSpec::Lattice { per_axis: 96 },
        depth: 6,
        trials: 2,
        ..Default::default()
    }
}

fn setup(sc: &Scenario) -> Setup {
    Setup::new(sc).expect("scenario builds")
}

fn pairs_of(trial: &Trial, p: &Params) -> PairSets {
    let (t, s) = (&trial.t, &trial.s);
    split_pairs(&t.tree, &s.tree, &p.goodbad(), |q, r| t.st.beta(q) < p.beta && s.st.beta(r) < p.beta)
}

/// Bucket from plain floating-point geometry.
fn brute_bucket(q: &crate::geometry::Cube, r: &crate::geometry::Cube, gb: &GoodBadParams) -> (Orientation, Bucket) {
    let (small, big, o) = if q.side_log2 < r.side_log2 { (q, r, Orientation::Forward) } else { (r, q, Orientation::Mirrored) };
    let d2: f64 = (0..q.dim())
        .map(|i| {
            let gap = (small.lo(i).to_f64() - big.hi(i).to_f64()).max(big.lo(i).to_f64() - small.hi(i).to_f64()).max(0.0);
            gap * gap
        })
        .sum();
    let thr = gb.threshold(small.side_f64(), big.side_f64());
    let b = if d2.sqrt() > thr {
        Bucket::Separated
    } else if small.side_log2 <= big.side_log2 - gb.r as i32 {
        Bucket::Nested
    } else {
        Bucket::Diagonal
    };
    (o, b)
}

#[test]
fn bucket_counts_match_brute_force() {
    let su = setup(&small_scenario());
    let p = su.amb.params;
    let gb = p.goodbad();
    for i in 0..3 {
        let trial = su.trial(i).unwrap();
        let (tq, tr) = (&trial.t.tree, &trial.s.tree);
        let ps = split_pairs(tq, tr, &gb, |_, _| true);
        let internal = |t: &crate::tree::CubeTree<f64>| (0..t.len()).filter(|&x| !t.is_leaf(x)).count();
        assert_eq!(ps.len(), internal(tq) * internal(tr));
        let mut counts = [0usize; 3];
        for q in (0..tq.len()).filter(|&x| !tq.is_leaf(x)) {
            for r in (0..tr.len()).filter(|&x| !tr.is_leaf(x)) {
                let (_, b) = brute_bucket(tq.cube(q), tr.cube(r), &gb);
                counts[b as usize] += 1;
            }
        }
        assert_eq!(counts, [ps.separated.len(), ps.nested.len(), ps.diagonal.len()]);
        for b in [Bucket::Separated, Bucket::Nested, Bucket::Diagonal] {
            for pair in ps.get(b) {
                let (q, r) = pair.qr();
                assert_eq!(brute_bucket(tq.cube(q), tr.cube(r), &gb), (pair.orientation, b));
            }
        }
    }
}

#[test]
fn deep_inside_is_nested() {
    let gb = GoodBadParams::new(0.25, 3).unwrap();
    let big = free_cube(&[0.0], 0);
    let small = free_cube(&[0.25], -4);
    assert_eq!(classify(&small, &big, &gb), Bucket::Nested);
    let near = free_cube(&[0.5], -2);
    assert_eq!(classify(&near, &big, &gb), Bucket::Diagonal);
    let far = free_cube(&[40.0], -1);
    assert_eq!(classify(&far, &big, &gb), Bucket::Separated);
}

#[test]
fn theta_bracketing() {
    assert_eq!(j_theta((-10f64).exp2()).unwrap(), -31);
    assert_eq!(j_theta((-8f64).exp2()).unwrap(), -29);
    assert!(j_theta(0.0).is_err());
}

proptest! {
    #[test]
    fn theta_bracket_holds(theta in 1e-6f64..0.0625) {
        let j = j_theta(theta).unwrap();
        let t = (j as f64).exp2();
        prop_assert!((-21f64).exp2() * theta <= t && t < (-20f64).exp2() * theta);
    }

    #[test]
    fn residual_is_scale_free(terms in prop::collection::vec(-1e3f64..1e3, 1..8), c in 1e-3f64..1e3) {
        let exact: f64 = terms.iter().sum();
        let scaled: Vec<f64> = terms.iter().map(|t| t * c).collect();
        let a = relative_residual(&terms, exact + 1.0, 0.0);
        let b = relative_residual(&scaled, (exact + 1.0) * c, 0.0);
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-300) + 1e-15);
        prop_assert!(relative_residual(&terms, exact, 0.0) <= 1e-12);
    }
}

#[test]
fn zero_f_gives_empty_separated_sum() {
    let sc = Scenario {
        f: FunctionSpec::Zero,
        ..small_scenario()
    };
    let su = setup(&sc);
    let trial = su.trial(0).unwrap();
    let ps = pairs_of(&trial, &su.amb.params);
    assert!(!ps.separated.is_empty());
    let rep = separated_sum(&ps.separated, &trial, &su.amb);
    assert_eq!((rep.value, rep.schur_sum), (0.0, 0.0));
}

#[test]
fn separated_pairwise_constant_dominates() {
    // separated pairs with both differences alive need cubes well inside Q0
    let su = setup(&Scenario { trials: 1, ..Default::default() });
    let trial = su.trial(0).unwrap();
    let ps = pairs_of(&trial, &su.amb.params);
    let rep = separated_sum(&ps.separated, &trial, &su.amb);
    assert!(rep.pairwise_c.is_finite() && rep.pairwise_c > 0.0);
    assert!(rep.abs_sum <= rep.bound * (1.0 + 1e-12));
    assert!(rep.value.abs() <= rep.abs_sum);
}

#[test]
fn schur_of_single_pair_is_its_entry() {
    let su = setup(&small_scenario());
    let p = su.amb.params;
    let trial = su.trial(0).unwrap();
    let ps = pairs_of(&trial, &p);
    let one = &ps.separated[..1];
    let rep = schur_norm(one, &trial.t.tree, &trial.s.tree, &p, 64);
    let (q, r) = one[0].qr();
    let (tq, tr) = (&trial.t.tree, &trial.s.tree);
    let a = separated::a_entry(tq.cube(q), tq.mass(q), tr.cube(r), tr.mass(r), p.alpha, p.m);
    assert!((rep.a_norm - a).abs() <= 1e-12 * a);
    assert_eq!(rep.a_pairs, 1);
    let none = schur_norm(&[], tq, tr, &p, 64);
    assert_eq!(none.a_norm, 0.0);
}

#[test]
fn zero_operator_kills_nested_and_diagonal() {
    let sc = Scenario {
        kernel: KernelConfig::Zero,
        ..small_scenario()
    };
    let su = setup(&sc);
    let trial = su.trial(0).unwrap();
    let ps = pairs_of(&trial, &su.amb.params);
    for o in Orientation::BOTH {
        let n = nested_sum(&ps.nested, &trial, o, &su.amb);
        assert_eq!((n.value, n.good, n.bad, n.lemma43, n.lemma42), (0.0, 0.0, 0.0, 0.0, 0.0));
        let d = diagonal_sum(&ps.diagonal, &trial, o, &su.amb).unwrap();
        assert!(d.pairs > 0);
        assert_eq!(d.branch_sums, [[0.0; 3]; 3]);
        assert_eq!(d.value, 0.0);
    }
    let rep = run_trial(&su, 0).unwrap();
    assert_eq!(rep.t_part, 0.0);
    assert_eq!(rep.t_coefficient, 0.0);
    assert!(rep.c_part.is_finite());
}

#[test]
fn nested_good_pairs_and_telescoped_paraproduct() {
    // a larger goodness exponent than the kernel's makes good pairs common at this depth
    let sc = Scenario {
        params: ParamSettings { r: 2, ..Default::default() },
        ..small_scenario()
    };
    let mut su = setup(&sc);
    su.amb.params.gamma = 0.45;
    let mut good = 0;
    for i in 0..4 {
        let trial = su.trial(i).unwrap();
        let ps = pairs_of(&trial, &su.amb.params);
        for o in Orientation::BOTH {
            let n = nested_sum(&ps.nested, &trial, o, &su.amb);
            good += n.good_pairs;
            assert_eq!(n.good_pairs + n.bad_pairs, n.pairs);
            assert!(relative_residual(&[n.good, n.bad], n.value, 0.0) <= 1e-9);
            let split = [n.lemma43, n.lemma42, n.paraproduct_pairs];
            assert!(relative_residual(&split, n.good, 0.0) <= 1e-9);
            let tele = paraproduct(&trial, o, &su.amb);
            assert!(relative_residual(&[tele.first, -tele.second], n.paraproduct_pairs, 0.0) <= 1e-9);
            assert_eq!(n.child_violations, 0);
            assert_eq!(tele.containment_violations, 0);
            assert!(tele.eps_holds);
            assert!(tele.generation_split_holds);
            assert!(tele.value.abs() <= tele.bound * (1.0 + 1e-9));
            assert!(n.bad.abs() <= n.bad_bound * (1.0 + 1e-9));
        }
    }
    assert!(good > 0);
}

#[test]
fn tails_vanish_beyond_deepest_generation() {
    let sc = Scenario {
        params: ParamSettings { beta: 60, ..Default::default() },
        ..small_scenario()
    };
    let su = setup(&sc);
    let trial = su.trial(0).unwrap();
    let tail = beta_tail(&trial, &su.amb);
    assert_eq!(tail.deep_f.value, 0.0);
    assert_eq!(tail.mixed.value, 0.0);
    assert_eq!(tail.deep_residual.value, 0.0);
    assert_eq!(tail.mass_form_f, 0.0);
}

#[test]
fn generation_masses_decay() {
    let su = setup(&small_scenario());
    let trial = su.trial(1).unwrap();
    for side in [&trial.t, &trial.s] {
        let masses = side.st.generation_masses(&side.tree);
        let tau = side.st.tau();
        for (j, m) in masses.iter().enumerate() {
            assert!(*m <= tau.powi(j as i32) * masses[0] * (1.0 + 1e-12));
        }
    }
}

#[test]
fn collar_vanishes_at_zero_width_and_grows() {
    let sc = Scenario {
        params: ParamSettings { u: 0.0, ..Default::default() },
        ..small_scenario()
    };
    let su = setup(&sc);
    let trial = su.trial(0).unwrap();
    let tail = beta_tail(&trial, &su.amb);
    assert_eq!(tail.collar_split.collar, 0.0);
    assert_eq!(tail.collar_split.collar_mass, 0.0);
    let seeds = crate::rng::SeedTree::new(3);
    let ladder = collar_mass_mc(&su.amb, &[0.0, 0.05, 0.1, 0.2], 16, &seeds).unwrap();
    assert_eq!(ladder[0].mean, 0.0);
    for w in ladder.windows(2) {
        assert!(w[0].mean <= w[1].mean);
    }
}

#[test]
fn bad_probability_beyond_root_is_zero_and_monotone() {
    let q = free_cube(&[0.0], -3);
    let gb = GoodBadParams::new(0.25, 3).unwrap();
    let seeds = crate::rng::SeedTree::new(11);
    let far = bad_probability_mc(&q, &[10, 12], 3, &gb, 8, &seeds).unwrap();
    assert!(far.iter().all(|b| b.estimate == 0.0));
    let ks: Vec<i32> = (3..=6).collect();
    let est = bad_probability_mc(&q, &ks, 3, &gb, 64, &seeds).unwrap();
    for w in est.windows(2) {
        assert!(w[1].estimate <= w[0].estimate);
    }
    assert!(bad_probability_mc(&q, &ks, 3, &gb, 0, &seeds).is_err());
}

fn surgery_ambient() -> (Setup, Trial) {
    let sc = Scenario {
        measure: MeasureSpec::Clustered {
            clusters_per_axis: 24,
            points_per_axis: 4,
            spacing_log2: -36,
        },
        trials: 1,
        ..Default::default()
    };
    let su = setup(&sc);
    let trial = su.trial(0).unwrap();
    (su, trial)
}

#[test]
fn theta_partition_is_exact_and_matched_cells_fit() {
    let (su, trial) = surgery_ambient();
    let amb = &su.amb;
    let p = amb.params;
    let ps = pairs_of(&trial, &p);
    let mut matched = 0;
    for pair in ps.diagonal.iter().take(200) {
        let view = trial.view(pair.orientation);
        let grids = SurgeryGrids {
            dstar: &trial.dstar,
            small_grid: &view.small.tree.grid,
            big_grid: &view.big.tree.grid,
        };
        for &xi in &view.small.tree.node(pair.small).children {
            for &yj in &view.big.tree.node(pair.big).children {
                let (cx, cy) = (view.small.tree.cube(xi), view.big.tree.cube(yj));
                let (xa, ya) = (view.small.tree.atoms(xi), view.big.tree.atoms(yj));
                let ts = theta_surgery(cx, xa, cy, ya, amb, &grids).unwrap();
                assert_eq!(ts.small.parts.len(), xa.len());
                assert_eq!(ts.big.parts.len(), ya.len());
                for (k, &a) in ts.small.atoms.iter().enumerate() {
                    let x = amb.mu.point(a);
                    match ts.small.parts[k] {
                        SurgeryPart::Separated => assert!(!cy.contains_point(x)),
                        SurgeryPart::Cell(c) => {
                            assert!(cy.contains_point(x));
                            assert!(ts.cells[c].contains_point(x));
                        }
                        SurgeryPart::Boundary => assert!(ts.small.bad[k]),
                    }
                }
                if !cx.intersects(cy) {
                    assert!(ts.small.parts.iter().all(|p| !matches!(p, SurgeryPart::Cell(_))));
                }
                assert!(ts.small.boundary_in_bad && ts.big.boundary_in_bad);
                assert!(ts.five_h_inside);
                matched += ts.matched.len();
            }
        }
    }
    assert!(matched > 0);
}

#[test]
fn sigma_terms_resum_and_vanish_for_zero_input() {
    let (su, trial) = surgery_ambient();
    let amb = &su.amb;
    let n = amb.n();
    // a cell around one cluster of the T-side tree
    let leaf = (0..trial.t.tree.len()).find(|&x| trial.t.tree.is_leaf(x) && trial.t.tree.atoms(x).len() > 1).unwrap();
    let atoms = trial.t.tree.atoms(leaf).to_vec();
    let c = amb.mu.point(atoms[0]).to_vec();
    let h = HCube {
        center: c,
        half: (-33f64).exp2(),
    };
    let u = AtomFn::new((0..n).map(|a| ((a % 7) as f64 - 3.0) / 3.0).collect());
    let v = AtomFn::new((0..n).map(|a| ((a % 5) as f64 - 2.0) / 2.0).collect());
    let b = AtomFn::new((0..n).map(|a| if h.contains(amb.mu.point(a), 1.0) { 1.0 } else { 0.0 }).collect());
    let s = sigma_surgery(&h, &u, &v, &b, &amb.op, amb, amb.params.sigma).unwrap();
    assert!(s.h_atoms > 1);
    assert!(s.residual <= 1e-12 * s.abs_scale);
    assert!(s.pivot_residual <= 1e-12);
    assert!(s.total.abs() <= (s.constant_bound + s.operator_bound) * (1.0 + 1e-9));
    assert!(s.smoothing_ratio.is_finite());
    let zero = sigma_surgery(&h, &AtomFn::zeros(n), &v, &b, &amb.op, amb, amb.params.sigma).unwrap();
    assert_eq!((zero.total, zero.whole, zero.far, zero.middle, zero.shell), (0.0, 0.0, 0.0, 0.0, 0.0));
    let empty = HCube {
        center: vec![crate::geometry::Dyadic::exact(0.3125).unwrap()],
        half: (-30f64).exp2(),
    };
    assert!(sigma_surgery(&empty, &u, &v, &b, &amb.op, amb, amb.params.sigma).is_none());
}

#[test]
fn diagonal_resummation_on_clustered_measure() {
    let (su, _) = surgery_ambient();
    let rep = run_trial(&su, 0).unwrap();
    for d in &rep.diagonal {
        assert_eq!(d.checks.partition_violations, 0);
        assert_eq!(d.checks.five_h_violations, 0);
        assert_eq!(d.checks.boundary_outside_bad, 0);
        assert_eq!(d.checks.h_mismatch, 0);
        assert!(d.checks.matched_cells > 0);
        assert!(d.checks.smoothing_ratio > 0.0 && d.checks.smoothing_ratio.is_finite());
        assert_eq!(d.piece_violations, 0);
    }
}

#[test]
fn bookkeeping_closes_on_default_scenario() {
    let su = setup(&small_scenario());
    for i in 0..2 {
        let rep = run_trial(&su, i).unwrap();
        assert!(rep.max_residual <= BOOKKEEPING_TOL);
        let sum: f64 = rep.pieces.iter().map(|p| p.piece.value).sum();
        assert!((sum - rep.exact).abs() <= 1e-8 * su.abs_pairing);
        assert!(rep.pieces.iter().all(|p| p.piece.holds()), "{:?}", rep.pieces);
    }
}

#[test]
fn antisymmetric_kernel_with_equal_functions_pairs_to_zero() {
    let sc = Scenario {
        g: FunctionSpec::SameAsF,
        ..small_scenario()
    };
    let su = setup(&sc);
    let rep = run_trial(&su, 0).unwrap();
    assert!(rep.exact.abs() <= 1e-9 * su.amb.lambda_mass);
    assert!(rep.pieces.iter().filter(|p| p.piece.value.abs() > 1e-6).count() > 1);
}

#[test]
fn reports_are_deterministic() {
    let sc = Scenario {
        trials: 3,
        ..small_scenario()
    };
    let a = serde_json::to_string(&full_report(&sc).unwrap()).unwrap();
    let b = serde_json::to_string(&full_report(&sc).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn scenario_rejects_unknown_keys() {
    assert!(serde_json::from_str::<Scenario>(r#"{"depth": 5, "bogus": 1}"#).is_err());
    let sc: Scenario = serde_json::from_str(r#"{"depth": 5, "measure": {"kind": "lattice", "per_axis": 48}}"#).unwrap();
    assert_eq!(sc.depth, 5);
    assert_eq!(sc.params, ParamSettings::default());
    assert!(Setup::new(&Scenario { trials: 0, ..sc }).is_err());
}
