mod common;

use common::{below, best_single_swap, objective_of, random_plane, rng};
use foodloc::kmedoids::{assign, brute_force_solve, solve, SolveParams, SwapMode};
use foodloc::matrix::SquareMatrix;
use foodloc::rng::SplitMix64;
use proptest::prelude::*;
use rand_xoshiro::rand_core::{RngCore, SeedableRng};

#[test]
fn splitmix_matches_reference_generator() {
    for seed in [0u64, 1, 42, u64::MAX] {
        let mut ours = SplitMix64::new(seed);
        let mut theirs = rand_xoshiro::SplitMix64::from_seed(seed.to_le_bytes());
        for _ in 0..1000 {
            assert_eq!(ours.next_u64(), theirs.next_u64());
        }
    }
}

#[test]
fn converged_solutions_are_swap_optimal_and_bounded_by_oracle() {
    let mut r = rng(11);
    for case in 0..60 {
        let n = 6 + below(&mut r, 25);
        let k = 1 + below(&mut r, 4.min(n - 1));
        let m = random_plane(n, &mut r);
        let w = vec![1.0; n];
        let c = solve(m.view(), &SolveParams::unweighted(k, n).with_seed(case)).unwrap();
        assert!(best_single_swap(&m, &c.medoids, &w) >= c.objective - 1e-6, "case {case}");
        if n <= 14 {
            let opt = brute_force_solve(m.view(), k, &w).unwrap();
            assert!(c.objective >= opt.objective - 1e-9, "case {case}");
        }
    }
}

#[test]
fn larger_instances_stay_swap_optimal() {
    let mut r = rng(12);
    for case in 0..4 {
        let n = 40 + below(&mut r, 21);
        let m = random_plane(n, &mut r);
        let c = solve(m.view(), &SolveParams::unweighted(4, n).with_seed(case)).unwrap();
        assert!(best_single_swap(&m, &c.medoids, &vec![1.0; n]) >= c.objective - 1e-6);
    }
}

#[test]
fn reported_objective_matches_assignment() {
    let mut r = rng(13);
    for _ in 0..20 {
        let n = 10 + below(&mut r, 20);
        let m = random_plane(n, &mut r);
        let w: Vec<f64> = (0..n).map(|_| 1.0 + below(&mut r, 4) as f64).collect();
        let c = solve(m.view(), &SolveParams::new(3, w.clone())).unwrap();
        let (a, obj) = assign(m.view(), &c.medoids, &w);
        assert_eq!(a, c.assignment);
        assert_eq!(obj, c.objective);
        for (i, &med) in c.assignment.iter().enumerate() {
            assert!(c.medoids.iter().all(|&o| m.get(i, med) <= m.get(i, o)));
        }
    }
}

/// Instance with `w_i` copies of each point, and the origin index of every copy.
pub fn duplicate(m: &SquareMatrix, w: &[usize]) -> (SquareMatrix, Vec<usize>) {
    let origin: Vec<usize> = w.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i, c)).collect();
    (SquareMatrix::from_fn(origin.len(), |a, b| m.get(origin[a], origin[b])), origin)
}

#[test]
fn weighted_equals_duplicated() {
    let mut r = rng(14);
    for case in 0..30 {
        let n = 6 + below(&mut r, 15);
        let k = 1 + below(&mut r, 3);
        let m = random_plane(n, &mut r);
        let counts: Vec<usize> = (0..n).map(|_| 1 + below(&mut r, 5)).collect();
        let w: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        let direct = solve(m.view(), &SolveParams::new(k, w).with_seed(case)).unwrap();
        let (dm, origin) = duplicate(&m, &counts);
        let dup = solve(dm.view(), &SolveParams::unweighted(k, dm.len()).with_seed(case)).unwrap();
        let dup_origins: Vec<usize> = dup.medoids.iter().map(|&i| origin[i]).collect();
        assert_eq!(dup_origins, direct.medoids, "case {case}");
        assert!((dup.objective - direct.objective).abs() <= 1e-6);
    }
}

#[test]
fn solve_is_deterministic_across_thread_counts() {
    let mut r = rng(15);
    let m = random_plane(400, &mut r);
    let params = SolveParams::unweighted(6, 400).with_seed(3);
    let reference = solve(m.view(), &params).unwrap();
    for threads in [1, 2, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let c = pool.install(|| solve(m.view(), &params).unwrap());
        assert_eq!(c, reference, "{threads} threads");
    }
}

#[test]
fn paper_literal_terminates_without_pass_cap() {
    let mut r = rng(16);
    for case in 0..20 {
        let n = 8 + below(&mut r, 20);
        let m = random_plane(n, &mut r);
        let params = SolveParams::unweighted(3, n).with_seed(case).with_mode(SwapMode::PaperLiteral);
        let c = solve(m.view(), &params).unwrap();
        let start = objective_of(&m, &[0, 1, 2], &vec![1.0; n]);
        assert!(c.objective <= start + 1e-9);
    }
}

#[test]
fn k_equals_n_is_zero() {
    let mut r = rng(17);
    let m = random_plane(9, &mut r);
    let c = solve(m.view(), &SolveParams::unweighted(9, 9)).unwrap();
    assert_eq!(c.objective, 0.0);
    assert_eq!(c.medoids, (0..9).collect::<Vec<_>>());
}

fn permuted(m: &SquareMatrix, perm: &[usize]) -> SquareMatrix {
    // New point i is old point perm[i].
    SquareMatrix::from_fn(m.len(), |i, j| m.get(perm[i], perm[j]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn assign_and_brute_force_are_permutation_equivariant(seed in any::<u64>(), n in 4usize..10, k in 1usize..4) {
        let mut r = rng(seed);
        let m = random_plane(n, &mut r);
        let mut perm: Vec<usize> = (0..n).collect();
        foodloc::rng::partial_shuffle(&mut perm, n, &mut SplitMix64::new(seed));
        let pm = permuted(&m, &perm);
        let w = vec![1.0; n];
        let k = k.min(n);

        let opt = brute_force_solve(m.view(), k, &w).unwrap();
        let popt = brute_force_solve(pm.view(), k, &w).unwrap();
        prop_assert!((opt.objective - popt.objective).abs() < 1e-6);
        // Two-point clusters tie, so compare the mapped set by its cost.
        let mapped: Vec<usize> = popt.medoids.iter().map(|&i| perm[i]).collect();
        prop_assert!((objective_of(&m, &mapped, &w) - opt.objective).abs() < 1e-6);

        let (a, obj) = assign(m.view(), &opt.medoids, &w);
        let pmed: Vec<usize> = opt.medoids.iter().map(|&o| perm.iter().position(|&x| x == o).unwrap()).collect();
        let (pa, pobj) = assign(pm.view(), &pmed, &w);
        prop_assert!((obj - pobj).abs() < 1e-6);
        for i in 0..n {
            prop_assert_eq!(perm[pa[i]], a[perm[i]]);
        }
    }

    #[test]
    fn same_seed_same_answer(seed in any::<u64>(), n in 6usize..30) {
        let m = random_plane(n, &mut rng(seed));
        let params = SolveParams::unweighted(2, n).with_seed(seed);
        prop_assert_eq!(solve(m.view(), &params).unwrap(), solve(m.view(), &params).unwrap());
    }
}
