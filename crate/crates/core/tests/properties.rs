use countbreaks::qmle::quasi_log_likelihood_gradient;
use countbreaks::segment::{argmin_k, segmentation_cost};
use countbreaks::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn families() -> Vec<MeanFamily> {
    vec![
        MeanFamily::inarch1(),
        MeanFamily::ingarch11(),
        MeanFamily::bin_inarch1(),
        MeanFamily::inarch_inf(),
    ]
}

/// A parameter inside the box, at least `margin` away from every face, with
/// moderate intercepts.
fn random_theta(fam: &MeanFamily, rng: &mut impl Rng, margin: f64) -> Vec<f64> {
    let s = fam.space();
    (0..fam.dim())
        .map(|k| {
            let lo = s.lower()[k] + margin;
            let hi = if k == 0 {
                s.upper()[k].min(5.0)
            } else {
                s.upper()[k]
            } - margin;
            rng.random_range(lo..hi)
        })
        .collect()
}

fn random_series(fam: &MeanFamily, rng: &mut impl Rng, n: usize) -> Vec<u64> {
    let top = if fam.kind() == FamilyKind::BinInarch1 {
        1
    } else {
        9
    };
    (0..n).map(|_| rng.random_range(0..=top)).collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn mean_path_examples() {
    let p = MeanFamily::inarch1()
        .truncated_mean_path(&[0.5, 0.6], &[2, 1, 3])
        .unwrap();
    assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 1.7).abs() < 1e-15 && (p[2] - 1.1).abs() < 1e-15);
    let p = MeanFamily::ingarch11()
        .truncated_mean_path(&[1.0, 0.2, 0.15], &[0, 0])
        .unwrap();
    assert!((p[0] - 1.0 / 0.85).abs() < 1e-12);
    let g = MeanFamily::ingarch11()
        .mean_gradient_path(&[1.0, 0.2, 0.15], &[0, 0])
        .unwrap();
    assert!((g[(0, 0)] - 1.176471).abs() < 1e-6);
    let g = MeanFamily::inarch1()
        .mean_gradient_path(&[0.3, 0.1], &[2, 1])
        .unwrap();
    assert_eq!((g[(1, 0)], g[(1, 1)]), (1.0, 2.0));
    let p = MeanFamily::inarch_inf()
        .truncated_mean_path(&[0.5], &[0; 20])
        .unwrap();
    assert!(p.iter().all(|&v| v == 0.5));
    let p = MeanFamily::bin_inarch1()
        .truncated_mean_path(&[0.15, 0.75], &[1, 0])
        .unwrap();
    assert!((p[0] - 0.15).abs() < 1e-15 && (p[1] - 0.90).abs() < 1e-15);
    assert!(MeanFamily::inarch1()
        .truncated_mean_path(&[0.5, 1.5], &[1])
        .is_err());
    assert!(MeanFamily::inarch1()
        .truncated_mean_path(&[0.5, 0.5], &[])
        .is_err());
}

#[test]
fn gradients_match_finite_differences() {
    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for fam in families() {
        for _ in 0..100 {
            let theta = random_theta(&fam, &mut rng, 1e-3);
            let n = rng.random_range(2..60);
            let y = random_series(&fam, &mut rng, n);
            let range = SegmentRange::new(1, n);
            let grad = fam.mean_gradient_path(&theta, &y).unwrap();
            let (_, qgrad) = quasi_log_likelihood_gradient(&y, range, &theta, &fam).unwrap();
            let (_, pgrad) =
                qmle::quasi_log_likelihood_from_paths(&y, range, &theta, &fam).unwrap();
            for k in 0..fam.dim() {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[k] += h;
                dn[k] -= h;
                let pu = fam.truncated_mean_path(&up, &y).unwrap();
                let pd = fam.truncated_mean_path(&dn, &y).unwrap();
                for t in 0..n {
                    let fd = (pu[t] - pd[t]) / (2.0 * h);
                    assert!(
                        rel_err(grad[(t, k)], fd) <= 1e-4,
                        "{:?} θ={theta:?} t={t} k={k}",
                        fam.kind()
                    );
                }
                let fu = quasi_log_likelihood(&y, range, &up, &fam).unwrap();
                let fdn = quasi_log_likelihood(&y, range, &dn, &fam).unwrap();
                let fd = (fu - fdn) / (2.0 * h);
                assert!(
                    rel_err(qgrad[k], fd) <= 1e-4,
                    "{:?} θ={theta:?} k={k}: {} vs {fd}",
                    fam.kind(),
                    qgrad[k]
                );
                assert!(rel_err(pgrad[k], qgrad[k]) <= 1e-9);
            }
        }
    }
}

#[test]
fn grouped_and_path_likelihoods_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for fam in families() {
        for _ in 0..50 {
            let theta = random_theta(&fam, &mut rng, 0.0);
            let y = random_series(&fam, &mut rng, 80);
            let i = rng.random_range(1..40);
            let range = SegmentRange::new(i, rng.random_range(i..=80));
            let a = quasi_log_likelihood(&y, range, &theta, &fam).unwrap();
            let (b, _) = qmle::quasi_log_likelihood_from_paths(&y, range, &theta, &fam).unwrap();
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mean_floor_holds(fam_idx in 0usize..4, seed in any::<u64>(), n in 1usize..80) {
        let fam = &families()[fam_idx];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = fam.space().lower().to_vec();
        let y = random_series(fam, &mut rng, n);
        let floor = fam.space().mean_floor();
        prop_assert!(fam.truncated_mean_path(&theta, &y).unwrap().iter().all(|&v| v >= floor));
        let theta = random_theta(fam, &mut rng, 0.0);
        prop_assert!(fam.truncated_mean_path(&theta, &y).unwrap().iter().all(|&v| v >= floor));
    }

    #[test]
    fn mean_paths_are_causal(fam_idx in 0usize..4, seed in any::<u64>(), n in 2usize..60, bump in 1u64..5) {
        let fam = &families()[fam_idx];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = random_theta(fam, &mut rng, 0.0);
        let y = random_series(fam, &mut rng, n);
        let s = rng.random_range(0..n);
        let mut z = y.clone();
        z[s] = if fam.kind() == FamilyKind::BinInarch1 { 1 - z[s] } else { z[s] + bump };
        let a = fam.truncated_mean_path(&theta, &y).unwrap();
        let b = fam.truncated_mean_path(&theta, &z).unwrap();
        prop_assert_eq!(&a[..=s], &b[..=s]);
    }

    #[test]
    fn linear_families_are_affine(seed in any::<u64>(), a in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for fam in [MeanFamily::inarch1(), MeanFamily::inarch_inf()] {
            let t1 = random_theta(&fam, &mut rng, 0.0);
            let t2 = random_theta(&fam, &mut rng, 0.0);
            let mix: Vec<f64> = t1.iter().zip(&t2).map(|(x, y)| a * x + (1.0 - a) * y).collect();
            let y = random_series(&fam, &mut rng, 40);
            let p1 = fam.truncated_mean_path(&t1, &y).unwrap();
            let p2 = fam.truncated_mean_path(&t2, &y).unwrap();
            let pm = fam.truncated_mean_path(&mix, &y).unwrap();
            for t in 0..40 {
                prop_assert!((pm[t] - (a * p1[t] + (1.0 - a) * p2[t])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn fit_never_worse_than_its_starts(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fam = MeanFamily::ingarch11();
        let y = random_series(&fam, &mut rng, 120);
        let warm = random_theta(&fam, &mut rng, 0.0);
        let range = SegmentRange::new(1, 120);
        let fit = fit_segment(&y, range, &fam, &FitOptions::default(), Some(&warm)).unwrap();
        prop_assert!(fam.space().contains(&fit.theta_hat));
        for start in [warm.clone(), fam.space().center()] {
            prop_assert!(fit.loglik >= quasi_log_likelihood(&y, range, &start, &fam).unwrap());
        }
        prop_assert_eq!(fit.loglik, quasi_log_likelihood(&y, range, &fit.theta_hat, &fam).unwrap());
    }
}

/// Exhaustive search over every segmentation into at most `k_max`
/// segments of length at least `u_min`, accumulated in DP order.
fn brute_force(ml: &LikelihoodMatrix, kappa: f64, k_max: usize) -> Vec<(f64, Vec<usize>)> {
    fn rec(
        ml: &LikelihoodMatrix,
        kappa: f64,
        start: usize,
        acc: f64,
        breaks: &mut Vec<usize>,
        left: usize,
        best: &mut [(f64, Vec<usize>)],
    ) {
        let n = ml.n();
        if let Some(v) = ml.get(start + 1, n) {
            let cost = (acc - 2.0 * v) + kappa;
            let k = breaks.len();
            if cost < best[k].0 {
                best[k] = (cost, breaks.clone());
            }
        }
        if left == 1 {
            return;
        }
        for end in start + 1..n {
            if let Some(v) = ml.get(start + 1, end) {
                breaks.push(end);
                rec(
                    ml,
                    kappa,
                    end,
                    (acc - 2.0 * v) + kappa,
                    breaks,
                    left - 1,
                    best,
                );
                breaks.pop();
            }
        }
    }
    let mut best = vec![(f64::INFINITY, Vec::new()); k_max];
    rec(ml, kappa, 0, 0.0, &mut Vec::new(), k_max, &mut best);
    best
}

fn random_matrix(rng: &mut impl Rng, n: usize, u_min: usize) -> LikelihoodMatrix {
    let cells: Vec<f64> = (0..(n + 1) * (n + 1))
        .map(|_| rng.random_range(-50.0..0.0))
        .collect();
    LikelihoodMatrix::from_fn(n, u_min, 1, |i, l| cells[i * (n + 1) + l]).unwrap()
}

#[test]
fn dp_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..200 {
        let n = rng.random_range(2..=14);
        let kappa = rng.random_range(0.1..20.0);
        let ml = random_matrix(&mut rng, n, 2);
        let tables = dp_solve(&ml, kappa, 3).unwrap();
        let oracle = brute_force(&ml, kappa, 3);
        for k in 1..=3 {
            let (cost, splits) = &oracle[k - 1];
            assert_eq!(tables.cost(k, n).unwrap(), *cost, "case {case} K={k}");
            if cost.is_finite() {
                let b = backtrack(&tables, k).unwrap();
                assert_eq!(&b, splits, "case {case} K={k}");
                assert_eq!(segmentation_cost(&ml, &b, kappa), Some(*cost));
            }
        }
    }
}

/// Holds for lag-one families while a segment can still be split after a
/// zero (which leaves the remaining means unchanged); near `K · u_min ≈ n`
/// the length constraint alone can make the contrast rise.
#[test]
fn unpenalized_contrast_is_nonincreasing() {
    for (name, seed) in [("IA2", 1), ("IA0", 2), ("BIN-IA1", 3), ("IA1", 4)] {
        let cfg = scenario_library()[name].clone().with_n(300).with_seed(seed);
        let y = simulate_piecewise(&cfg).unwrap();
        let dcfg = DetectionConfig::for_length(300, PenaltySpec::LogN).unwrap();
        let ml = build_ml_matrix(&y, &cfg.family, &dcfg).unwrap();
        let c = dp_solve(&ml, 0.0, dcfg.k_max).unwrap().final_costs();
        let roomy = 300 / (2 * dcfg.u_min);
        for w in c[..roomy].windows(2) {
            assert!(w[1] <= w[0], "{name}: {c:?}");
        }
    }
}

#[test]
fn selected_k_decreases_with_penalty() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let ml = random_matrix(&mut rng, 40, 3);
        let mut last = usize::MAX;
        for kappa in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
            let k = select_k(&dp_solve(&ml, kappa, 10).unwrap()).unwrap();
            assert!(k <= last);
            last = k;
        }
    }
}

#[test]
fn grid_coarsening_keeps_aligned_breaks() {
    // piecewise-constant means with breaks on multiples of 5; each segment's
    // value is the Poisson log-likelihood at the best single mean
    let n = 60;
    let truth = [20usize, 45];
    let level = |t: usize| {
        if t <= 20 {
            1.0
        } else if t <= 45 {
            4.0
        } else {
            2.0
        }
    };
    let ml_value = |i: usize, l: usize| {
        let mean = (i..=l).map(level).sum::<f64>() / (l - i + 1) as f64;
        (i..=l).map(|t| level(t) * mean.ln() - mean).sum::<f64>()
    };
    let fine = LikelihoodMatrix::from_fn(n, 5, 1, ml_value).unwrap();
    let coarse = LikelihoodMatrix::from_fn(n, 5, 5, ml_value).unwrap();
    for ml in [&fine, &coarse] {
        let t = dp_solve(ml, 1.0, 6).unwrap();
        let k = select_k(&t).unwrap();
        assert_eq!(backtrack(&t, k).unwrap(), truth.to_vec());
    }
}

#[test]
fn argmin_examples() {
    assert_eq!(argmin_k(&[5.0, 3.0, 4.0]), Some(2));
    assert_eq!(argmin_k(&[3.0, 3.0, 9.0]), Some(1));
}

#[test]
fn entry_count_formula() {
    let (n, u) = (500usize, 38usize);
    let ml = LikelihoodMatrix::from_fn(n, u, 1, |_, _| 0.0).unwrap();
    let formula: usize = (1..=n - u + 1).map(|i| n + 2 - u - i).sum();
    let enumerated = (1..=n)
        .flat_map(|i| (i..=n).map(move |l| (i, l)))
        .filter(|(i, l)| l + 1 - i >= u)
        .count();
    assert_eq!(formula, enumerated);
    assert_eq!(ml.entry_count(), formula);
}

/// Best point of the 0.01 grid over `[0.01, 10] × [0, 0.99]`.
fn grid_oracle(y: &[u64], fam: &MeanFamily) -> (Vec<f64>, f64) {
    let range = SegmentRange::new(1, y.len());
    let mut best = (vec![], f64::NEG_INFINITY);
    for a in 1..=1000 {
        for b in 0..=99 {
            let theta = [a as f64 * 0.01, b as f64 * 0.01];
            let v = quasi_log_likelihood(y, range, &theta, fam).unwrap();
            if v > best.1 {
                best = (theta.to_vec(), v);
            }
        }
    }
    best
}

#[test]
fn fit_matches_grid_oracle_on_iid_poisson() {
    let fam = MeanFamily::inarch1();
    let mut cfg = scenario_library()["IA0"].clone().with_n(200).with_seed(21);
    cfg.theta_star = vec![vec![2.0, 0.0]];
    let y = simulate_piecewise(&cfg).unwrap();
    let (theta, value) = grid_oracle(&y, &fam);
    let fit = fit_segment(
        &y,
        SegmentRange::new(1, 200),
        &fam,
        &FitOptions::default(),
        None,
    )
    .unwrap();
    for k in 0..2 {
        assert!(
            (fit.theta_hat[k] - theta[k]).abs() <= 0.02,
            "{:?} vs {theta:?}",
            fit.theta_hat
        );
    }
    assert!(fit.loglik >= value - 1e-9);
    assert!(fit.loglik - value <= 1e-3);

    // every matrix entry of a short iid series against its own grid
    let short = &y[..40];
    let dcfg = DetectionConfig::for_length(40, PenaltySpec::LogN)
        .unwrap()
        .with_u_min(30)
        .with_k_max(1);
    let ml = build_ml_matrix(short, &fam, &dcfg).unwrap();
    for (i, l) in [(1, 30), (1, 40), (6, 37), (11, 40)] {
        let (_, v) = grid_oracle(&short[i - 1..l], &fam);
        let m = ml.get(i, l).unwrap();
        assert!(m >= v - 1e-9 && m - v <= 1e-3, "({i}, {l}) {m} vs {v}");
    }
}

#[test]
fn fits_are_consistent() {
    let cfg = scenario_library()["IA0"].clone().with_n(2000).with_seed(42);
    let mut hits = 0;
    for rep in 0..100 {
        let y = simulate::simulate_replication(&cfg, rep).unwrap();
        let fit = fit_segment(
            &y,
            SegmentRange::new(1, 2000),
            &cfg.family,
            &FitOptions::default(),
            None,
        )
        .unwrap();
        let dist = ((fit.theta_hat[0] - 0.5).powi(2) + (fit.theta_hat[1] - 0.6).powi(2)).sqrt();
        hits += usize::from(dist <= 0.1);
    }
    assert!(hits >= 90, "{hits}");
}

#[test]
fn long_run_mean_of_inarch() {
    let cfg = scenario_library()["IA0"]
        .clone()
        .with_n(50_000)
        .with_seed(6);
    let hits = (0..100)
        .filter(|&rep| {
            let y = simulate::simulate_replication(&cfg, rep).unwrap();
            let m = y.iter().sum::<u64>() as f64 / y.len() as f64;
            (m / 1.25 - 1.0).abs() <= 0.05
        })
        .count();
    assert!(hits >= 95, "{hits}");
}

#[test]
fn sandwich_matches_inverse_information_under_poisson() {
    let cfg = scenario_library()["IA0"].clone().with_n(5000).with_seed(12);
    let y = simulate_piecewise(&cfg).unwrap();
    let range = SegmentRange::new(1, 5000);
    let fit = fit_segment(&y, range, &cfg.family, &FitOptions::default(), None).unwrap();
    let cov = sandwich_covariance(&y, range, &fit, &cfg.family).unwrap();
    let naive = cov.naive_std_errors();
    for k in 0..2 {
        let ratio = cov.std_errors[k].powi(2) / naive[k].powi(2);
        assert!((ratio - 1.0).abs() <= 0.2, "coordinate {k}: {ratio}");
        assert!(cov.std_errors[k].is_finite() && cov.std_errors[k] > 0.0);
    }
    let asym = (&cov.sigma_hat - cov.sigma_hat.transpose()).abs().max();
    assert!(asym <= 1e-10);
}

#[test]
fn intercept_only_sandwich_tends_to_mean() {
    // zero lag weights leave λ = α₀: Ĵ = 1/θ̂, Σ̂ = θ̂² Î → θ̂ for Poisson data
    let fam = MeanFamily::inarch_inf()
        .with_decay(models::Decay {
            scale: 0.0,
            exponent: 2.0,
        })
        .unwrap();
    let mut cfg = scenario_library()["IA-INF0"]
        .clone()
        .with_n(20_000)
        .with_seed(2);
    cfg.family = fam.clone();
    cfg.theta_star = vec![vec![3.0]];
    let y = simulate_piecewise(&cfg).unwrap();
    let range = SegmentRange::new(1, y.len());
    let fit = fit_segment(&y, range, &fam, &FitOptions::default(), None).unwrap();
    let cov = sandwich_covariance(&y, range, &fit, &fam).unwrap();
    let theta = fit.theta_hat[0];
    let i_hat = y
        .iter()
        .map(|&v| (v as f64 / theta - 1.0).powi(2))
        .sum::<f64>()
        / y.len() as f64;
    assert!((cov.j_hat[(0, 0)] - 1.0 / theta).abs() < 1e-12);
    assert!((cov.sigma_hat[(0, 0)] - theta * theta * i_hat).abs() < 1e-9);
    assert!((cov.sigma_hat[(0, 0)] / theta - 1.0).abs() < 0.05);
}

#[test]
fn constant_data_with_free_autoregression_is_singular_or_finite() {
    let y = vec![3u64; 100];
    let fam = MeanFamily::inarch1();
    let range = SegmentRange::new(1, 100);
    let fit = fit_segment(&y, range, &fam, &FitOptions::default(), None).unwrap();
    match sandwich_covariance(&y, range, &fit, &fam) {
        Err(Error::Singular { .. }) => {}
        Ok(cov) => assert!(cov.std_errors.iter().all(|s| s.is_finite())),
        Err(e) => panic!("unexpected error {e}"),
    }
}
