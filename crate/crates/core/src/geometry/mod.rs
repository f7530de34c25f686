//! Exact dyadic cubes, shifted grids, skeleton distances and the good/bad classification.

mod cube;
mod dyadic;
mod goodbad;
mod grid;

pub use cube::{long_distance, skeleton_distance, skeleton_distance_sq, Cube, GridId};
pub use dyadic::{cmp_gap, gap_le, interval_gap, len_le, len_lt, norm_sq, sqrt_len, Dyadic, FRAC_BITS, MAX_LOG2};
pub use goodbad::{alpha_generation, bad_witness, boundary_collar, is_good, Collar, GoodBadParams};
pub use grid::{build_grid, ShiftedDyadicGrid};

/// Geometric cube used as a probe in tests: the one with the given corner and side `2^k`.
pub fn free_cube(corner: &[f64], k: i32) -> Cube {
    Cube {
        grid: GridId(u64::MAX),
        generation: 0,
        index: vec![0; corner.len()],
        corner: corner.iter().map(|&c| Dyadic::exact(c).expect("dyadic corner")).collect(),
        side_log2: k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(x: f64) -> Dyadic {
        Dyadic::snap(x).unwrap()
    }

    #[test]
    fn root_and_generation_sides() {
        let g = build_grid(&[0.0], 3, 3, 1).unwrap();
        let root = g.root();
        assert_eq!(root.lo(0).to_f64(), -8.0);
        assert_eq!(root.hi(0).to_f64(), 8.0);
        let sides: Vec<f64> = (0..=3).map(|k| (g.side_log2(k) as f64).exp2()).collect();
        assert_eq!(sides, vec![16.0, 8.0, 4.0, 2.0]);
    }

    #[test]
    fn translated_root() {
        let g = build_grid(&[2.0, -2.0], 3, 1, 2).unwrap();
        let r = g.root();
        assert_eq!((r.lo(0).to_f64(), r.hi(0).to_f64()), (-6.0, 10.0));
        assert_eq!((r.lo(1).to_f64(), r.hi(1).to_f64()), (-10.0, 6.0));
    }

    #[test]
    fn shift_out_of_box_is_rejected() {
        assert!(matches!(build_grid(&[5.0], 3, 2, 1), Err(crate::Error::ShiftOutOfRange { .. })));
        assert!(build_grid(&[4.0], 3, 2, 1).is_ok());
        assert!(build_grid(&[0.0], 3, 0, 1).is_err());
    }

    #[test]
    fn skeleton_distance_examples() {
        let q = free_cube(&[0.25], -3);
        let s = free_cube(&[0.0], 0);
        // oracle: min over skeleton points {0, 0.5, 1} of the gap to [0.25, 0.375]
        let oracle = [0.0f64, 0.5, 1.0]
            .iter()
            .map(|&p| (0.25 - p).max(p - 0.375).max(0.0))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(skeleton_distance(&q, &s), oracle);
        assert_eq!(oracle, 0.125);
        let touching = free_cube(&[0.375], -3);
        assert_eq!(skeleton_distance(&touching, &s), 0.0);
        assert_eq!(skeleton_distance(&s.child(1), &s), 0.0);
    }

    #[test]
    fn skeleton_distance_in_two_dimensions() {
        let s = free_cube(&[0.0, 0.0], 0);
        let q = free_cube(&[0.125, 0.125], -4);
        // nearest skeleton lines are x = 0 and y = 0 at distance 1/8
        assert_eq!(skeleton_distance(&q, &s), 0.125);
        let far = free_cube(&[3.0, 3.0], -2);
        let expected = ((2.0f64).powi(2) * 2.0).sqrt();
        assert!((skeleton_distance(&far, &s) - expected).abs() < 1e-15);
    }

    #[test]
    fn bad_example() {
        let other = build_grid(&[0.0], 1, 2, 1).unwrap(); // generation 2 contains [0, 1)
        let s = other.cube(2, vec![2]).unwrap();
        assert_eq!((s.lo(0).to_f64(), s.hi(0).to_f64()), (0.0, 1.0));
        let q = free_cube(&[0.25], -3);
        let p = GoodBadParams::new(0.25, 1).unwrap();
        let thr = p.threshold(q.side_f64(), 1.0);
        assert!((thr - 0.594_603_557_501_36).abs() < 1e-12);
        assert!(skeleton_distance(&q, &s) <= thr);
        assert!(!is_good(&q, &other, 1.0, &p));
    }

    #[test]
    fn equality_counts_as_bad() {
        // single cube [-1/2, 1/2) at side 1, skeleton {-1/2, 0, 1/2}; threshold 1^g 1^(1-g) = 1
        let other = build_grid(&[0.0], -1, 1, 1).unwrap();
        let p = GoodBadParams::new(0.25, 0).unwrap();
        assert_eq!(p.threshold(1.0, 1.0), 1.0);
        let q = free_cube(&[1.5], 0);
        assert_eq!(skeleton_distance(&q, &other.root()), 1.0);
        assert!(!is_good(&q, &other, 1.0, &p));
        let q = free_cube(&[1.5 + 1.0 / 64.0], 0);
        assert!(is_good(&q, &other, 1.0, &p));
    }

    #[test]
    fn vacuous_goodness() {
        let other = build_grid(&[0.0], 2, 3, 1).unwrap(); // root side 8
        let q = free_cube(&[0.0], -2);
        let p = GoodBadParams::new(0.25, 1).unwrap();
        assert!(is_good(&q, &other, 16.0, &p));
        // a cube far from the root is good at every scale
        let far = free_cube(&[1000.0], -2);
        assert!(is_good(&far, &other, 0.5, &p));
    }

    #[test]
    fn alpha_generation_matches_scan() {
        let p = GoodBadParams::new(0.3, 2).unwrap();
        let other = build_grid(&[0.3125], 3, 8, 1).unwrap();
        for start in 0..32 {
            let q = free_cube(&[-2.0 + start as f64 * 0.125], -4);
            let k_max = 8;
            let scan = (p.r as i32..=k_max).find(|&k| {
                let a = (k as f64).exp2() * q.side_f64();
                // exhaustive: every cube of every generation with side >= a
                (0..=other.depth).all(|g| {
                    let ls = (other.side_log2(g) as f64).exp2();
                    if ls < a {
                        return true;
                    }
                    let count = 1i64 << g;
                    (0..count).all(|i| {
                        let s = other.cube(g, vec![i]).unwrap();
                        skeleton_distance(&q, &s) > p.threshold(q.side_f64(), ls)
                    })
                })
            });
            assert_eq!(alpha_generation(&q, &other, &p, k_max), scan);
        }
    }

    #[test]
    fn alpha_generation_none_when_bad_everywhere() {
        let p = GoodBadParams::new(0.25, 1).unwrap();
        let other = build_grid(&[0.0], 3, 6, 1).unwrap();
        // touches the root's midpoint skeleton, so it is bad at every scale
        let q = free_cube(&[0.0], -2);
        assert_eq!(alpha_generation(&q, &other, &p, 6), None);
    }

    #[test]
    fn boundary_gap_cases() {
        let outer = free_cube(&[0.0, 0.0], 2); // [0, 4)^2
        let inner = free_cube(&[1.0, 0.5], -1);
        assert_eq!(sqrt_len(inner.boundary_gap_sq(&outer)), 0.5);
        let touching = free_cube(&[0.0, 1.0], -1);
        assert_eq!(touching.boundary_gap_sq(&outer), 0);
        let straddling = free_cube(&[3.75, 1.0], -1);
        assert_eq!(straddling.boundary_gap_sq(&outer), 0);
        let outside = free_cube(&[5.0, 1.0], -1);
        assert_eq!(sqrt_len(outside.boundary_gap_sq(&outer)), 1.0);
        assert_eq!(inner.center_dyadic(), vec![d(1.25), d(0.75)]);
    }

    #[test]
    fn long_distance_examples() {
        let q = free_cube(&[0.0], -2);
        let r = free_cube(&[0.5], -1);
        assert_eq!(long_distance(&q, &r), 1.0);
        assert_eq!(long_distance(&r, &q), 1.0);
        let big = free_cube(&[0.0], 0);
        assert_eq!(long_distance(&q, &big), 1.25);
    }

    #[test]
    fn collar_membership() {
        let g = build_grid(&[0.0], 3, 4, 1).unwrap();
        let k = g.generation_of_side(0).unwrap();
        let c = boundary_collar(&g, k, 0.1).unwrap();
        assert!(c.contains(&[d(0.05)]));
        assert!(!c.contains(&[d(0.5)]));
        assert!(c.contains(&[d(0.95)]));
        assert!(boundary_collar(&g, k, 0.6).is_err());
    }

    #[test]
    fn from_kernel_gamma() {
        let p = GoodBadParams::from_kernel(1.0, 1.0, 3).unwrap();
        assert_eq!(p.gamma, 0.25);
        assert!(p.check_kernel(1.0, 1.0).is_ok());
        assert!(p.check_kernel(0.5, 1.0).is_err());
    }

    fn arb_cube(dim: usize) -> impl Strategy<Value = Cube> {
        (prop::collection::vec(-64i64..64, dim), -3i32..2).prop_map(move |(c, k)| {
            free_cube(&c.iter().map(|&x| x as f64 / 8.0).collect::<Vec<_>>(), k)
        })
    }

    proptest! {
        #[test]
        fn children_partition_parent(dim in 1usize..4, idx in prop::collection::vec(0i64..4, 3), pts in prop::collection::vec(prop::collection::vec(0u32..1024, 3), 32)) {
            let g = build_grid(&vec![0.0; dim], 2, 4, dim).unwrap();
            let q = g.cube(2, idx[..dim].to_vec()).unwrap();
            let kids = q.children();
            prop_assert_eq!(kids.len(), 1 << dim);
            for k in &kids {
                prop_assert_eq!(k.side_log2 + 1, q.side_log2);
                prop_assert_eq!(k.generation, q.generation + 1);
                prop_assert!(q.contains_cube(k));
                prop_assert_eq!(k.parent().unwrap(), q.clone());
            }
            for p in pts {
                let x: Vec<Dyadic> = (0..dim).map(|i| q.lo(i) + Dyadic((p[i] as i64) << (FRAC_BITS + q.side_log2 - 10))).collect();
                prop_assert!(q.contains_point(&x));
                let hits = kids.iter().filter(|k| k.contains_point(&x)).count();
                prop_assert_eq!(hits, 1);
                prop_assert!(kids[q.child_number(&x)].contains_point(&x));
            }
        }

        #[test]
        fn skeleton_distance_zero_when_meeting_and_lipschitz(q in arb_cube(2), s in arb_cube(2), t in prop::collection::vec(-16i64..16, 2)) {
            let dq = skeleton_distance(&q, &s);
            let moved = Cube { corner: q.corner.iter().zip(&t).map(|(&c, &ti)| c + Dyadic(ti << (FRAC_BITS - 4))).collect(), ..q.clone() };
            let shift = ((t[0] * t[0] + t[1] * t[1]) as f64).sqrt() / 16.0;
            prop_assert!((skeleton_distance(&moved, &s) - dq).abs() <= shift + 1e-12);
            if q.intersects(&s.child(0)) && !s.child(0).contains_cube(&q) {
                prop_assert_eq!(dq, 0.0);
            }
        }

        #[test]
        fn good_is_monotone_and_translation_invariant(cx in -256i64..256, k in -5i32..-2, sx in -64i64..64, gamma in 0.05f64..0.45, a in 0i32..4) {
            let p = GoodBadParams::new(gamma, 1).unwrap();
            let other = ShiftedDyadicGrid::new(vec![Dyadic(sx << (FRAC_BITS - 5))], 2, 7, 1).unwrap();
            let q = free_cube(&[cx as f64 / 64.0], k);
            let lq = q.side_f64();
            let a_scale = (a as f64).exp2() * lq * 2.0;
            if is_good(&q, &other, a_scale, &p) {
                prop_assert!(is_good(&q, &other, 2.0 * a_scale, &p));
            }
            let t = Dyadic(3 << (FRAC_BITS - 5));
            let other2 = ShiftedDyadicGrid::new(vec![other.shift[0] + t], 2, 7, 1);
            if let Ok(other2) = other2 {
                let q2 = Cube { corner: vec![q.corner[0] + t], ..q.clone() };
                prop_assert_eq!(is_good(&q, &other, a_scale, &p), is_good(&q2, &other2, a_scale, &p));
            }
        }
    }
}
