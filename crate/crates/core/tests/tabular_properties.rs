use eigensafe::tabular::*;
use eigensafe::SimRng;
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Dense random sub-stochastic matrix with row sums drawn from `[lo, hi]`.
fn random_mdp(n: usize, rng: &mut SimRng, lo: f64, hi: f64) -> FiniteMdp {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
            let total: f64 = raw.iter().sum();
            let keep = rng.uniform_in(lo, hi);
            raw.iter().map(|v| v / total * keep).collect()
        })
        .collect();
    FiniteMdp::from_dense(&rows).unwrap()
}

/// Dense random kernel; every (state, action) row keeps a random fraction
/// of its mass inside the safe set.
fn random_kernel(n: usize, m: usize, rng: &mut SimRng) -> Kernel {
    let mut rows = SparseRows::new();
    let mut terminal = Vec::new();
    for _ in 0..n * m {
        let raw: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let total: f64 = raw.iter().sum();
        let keep = rng.uniform_in(0.2, 1.0);
        let row: Vec<f64> = raw.iter().map(|v| v / total * keep).collect();
        let exit = 1.0 - row.iter().sum::<f64>();
        rows.push_row(row.into_iter().enumerate());
        terminal.push(exit.max(0.0));
    }
    Kernel::new(n, m, rows, terminal).unwrap()
}

fn spectral_radius(m: &FiniteMdp) -> f64 {
    let n = m.n_states();
    let flat: Vec<f64> = m.dense().into_iter().flatten().collect();
    DMatrix::from_row_slice(n, n, &flat).complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn power_iteration_matches_dense_eigensolver() {
    let mut rng = SimRng::new(1);
    for _ in 0..20 {
        let n = 1 + rng.index(20);
        let m = random_mdp(n, &mut rng, 0.05, 1.0);
        let e = power_iteration(&m, 1e-13, 1_000_000).unwrap();
        let oracle = spectral_radius(&m);
        assert!((e.eigenvalue - oracle).abs() < 1e-8, "n={n}: {} vs {oracle}", e.eigenvalue);
        assert!(e.eigenvector.iter().all(|v| *v >= 0.0));
        assert_eq!(e.eigenvector.iter().cloned().fold(0.0, f64::max), 1.0);
    }
}

#[test]
fn example_map_slopes_converge_to_log_gamma() {
    let map = GridMap::parse(EXAMPLE_MAP).unwrap();
    assert!(map.cells.contains(&Cell::Gray));
    let m = build_gridworld(&map).unwrap();
    let e = power_iteration(&m, 1e-13, 100_000).unwrap();
    let z = exact_safety_dp(&m, 60);
    for t in 1..=60 {
        assert_eq!(z[t], m.mul_vec(&z[t - 1]));
        assert!(z[t].iter().zip(&z[t - 1]).all(|(a, b)| *a <= *b && *a >= 0.0));
    }
    for t in 30..=60 {
        for x in (0..m.n_states()).filter(|&x| e.eigenvector[x] > 1e-6) {
            let slope = (z[t][x] / z[t - 1][x]).ln();
            assert!((slope - e.eigenvalue.ln()).abs() <= 1e-3, "t={t} x={x}");
        }
    }
}

#[test]
fn state_action_eigenpair_agrees_with_state_operator() {
    let map = GridMap::parse(EXAMPLE_MAP).unwrap();
    let k = gridworld_kernel(&map).unwrap();
    let pi = map.arrow_policy();
    let sa = state_action_eigpair(&k, &pi, 1e-13, 100_000).unwrap();
    let s = power_iteration(&build_gridworld(&map).unwrap(), 1e-13, 100_000).unwrap();
    assert!((sa.eigenvalue - s.eigenvalue).abs() < 1e-10);
    let phi = average_over_policy(&sa.eigenvector, &pi);
    let scale = phi.iter().cloned().fold(0.0, f64::max);
    for (a, b) in phi.iter().zip(&s.eigenvector) {
        assert!((a / scale - b).abs() < 1e-9);
    }
}

#[test]
fn greedy_improvement_never_lowers_gamma() {
    let mut rng = SimRng::new(7);
    for _ in 0..20 {
        let n = 2 + rng.index(9);
        let k = random_kernel(n, 2, &mut rng);
        let init: Vec<usize> = (0..n).map(|_| rng.index(2)).collect();
        let run = improve_policy(&k, init, 1e-13, 1_000_000, 50).unwrap();
        for w in run.eigenvalues.windows(2) {
            assert!(w[1] >= w[0] - 1e-10, "{:?}", run.eigenvalues);
        }
        // The fixed point is greedy with respect to its own ψ.
        assert_eq!(greedy_improve(n, 2, &run.eigenpair.eigenvector).unwrap(), run.policy);
    }
}

#[test]
fn improved_policy_beats_every_deterministic_policy_on_small_systems() {
    let mut rng = SimRng::new(11);
    for _ in 0..5 {
        let n = 2 + rng.index(4);
        let k = random_kernel(n, 2, &mut rng);
        let run = improve_policy(&k, vec![0; n], 1e-13, 1_000_000, 50).unwrap();
        let mut best: f64 = 0.0;
        for mask in 0..(1usize << n) {
            let actions: Vec<usize> = (0..n).map(|x| (mask >> x) & 1).collect();
            let m = closed_loop_matrix(&k, &TabularPolicy::deterministic(&actions, 2).unwrap()).unwrap();
            best = best.max(spectral_radius(&m));
        }
        assert!((run.eigenvalues.last().unwrap() - best).abs() < 1e-8);
    }
}

fn mdp_strategy() -> impl Strategy<Value = (FiniteMdp, u64)> {
    (1usize..=12, any::<u64>()).prop_map(|(n, seed)| {
        let mut rng = SimRng::new(seed);
        (random_mdp(n, &mut rng, 0.0, 1.0), seed)
    })
}

fn vector(n: usize, rng: &mut SimRng, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform_in(lo, hi)).collect()
}

fn sup(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn operator_is_non_expansive((m, seed) in mdp_strategy()) {
        let mut rng = SimRng::stream(seed, 1);
        let b = vector(m.n_states(), &mut rng, -1.0, 1.0);
        prop_assert!(sup(&m.mul_vec(&b)) <= sup(&b) * (1.0 + 1e-12));
    }

    #[test]
    fn operator_is_linear((m, seed) in mdp_strategy(), c1 in -3.0..3.0f64, c2 in -3.0..3.0f64) {
        let mut rng = SimRng::stream(seed, 2);
        let n = m.n_states();
        let (b1, b2) = (vector(n, &mut rng, -1.0, 1.0), vector(n, &mut rng, -1.0, 1.0));
        let mix: Vec<f64> = b1.iter().zip(&b2).map(|(a, b)| c1 * a + c2 * b).collect();
        let lhs = m.mul_vec(&mix);
        let (m1, m2) = (m.mul_vec(&b1), m.mul_vec(&b2));
        for i in 0..n {
            prop_assert!((lhs[i] - (c1 * m1[i] + c2 * m2[i])).abs() <= 1e-14 * 8.0);
        }
    }

    #[test]
    fn operator_is_nonnegative((m, seed) in mdp_strategy()) {
        let mut rng = SimRng::stream(seed, 3);
        let b = vector(m.n_states(), &mut rng, 0.0, 1.0);
        prop_assert!(m.mul_vec(&b).iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn greedy_choice_is_scale_invariant(seed in any::<u64>(), c in 1e-6..1e6f64) {
        let mut rng = SimRng::new(seed);
        let psi = vector(12, &mut rng, 0.0, 1.0);
        let scaled: Vec<f64> = psi.iter().map(|v| v * c).collect();
        prop_assert_eq!(greedy_improve(4, 3, &psi).unwrap(), greedy_improve(4, 3, &scaled).unwrap());
    }
}
