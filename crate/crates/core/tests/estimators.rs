mod common;

use common::*;
use perisig::estimators::*;
use perisig::inference::{fisher_quadrature, LambdaWeight};
use perisig::mcstudy::{normalized_errors, run_study, EstimatorKind, StudyConfig};
use perisig::model::{DiffusionSpec, Drift, ParameterDomain, SignalModel, Volatility};
use perisig::rng::CounterNormal;
use perisig::simulate::{noise_increments, simulate_path, Path};
use proptest::prelude::*;
use rayon::prelude::*;

#[test]
fn psi_hat_minus_psi_is_the_accumulated_noise() {
    let signal = triangular();
    let sigma = 0.5;
    let diff = ou(1.0, sigma);
    let n = 30;
    let p = simulate_path(&signal, &diff, &[3.0], n, STEPS, 8).unwrap();
    let psi = psi_hat(&p, &diff);
    let model = psi_theoretical(&signal, &[3.0], p.dt(), STEPS, PsiRule::LeftRiemann).unwrap();
    let db = noise_increments(&p, &signal, &diff, &[3.0]).unwrap();
    let mut noise = vec![0.0; STEPS + 1];
    for k in 0..n {
        let mut acc = 0.0;
        for j in 1..=STEPS {
            acc += sigma * db[k * STEPS + j - 1];
            noise[j] += acc / n as f64;
        }
    }
    assert_eq!(psi.samples[0], 0.0);
    let worst = (0..=STEPS)
        .map(|j| (psi.samples[j] - model[j] - noise[j]).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-12, "{worst}");
}

#[test]
fn psi_hat_variance_profile_is_sigma_squared_s() {
    let signal = triangular();
    let sigma = 0.5;
    let diff = ou(1.0, sigma);
    let n = 4;
    let m = 128;
    let reps = 10_000;
    let model = psi_theoretical(&signal, &[3.0], PERIOD / m as f64, m, PsiRule::LeftRiemann).unwrap();
    let devs: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let p = simulate_path(&signal, &diff, &[3.0], n, m, 1 + r as u64).unwrap();
            let psi = psi_hat(&p, &diff);
            psi.samples.iter().zip(&model).map(|(a, b)| a - b).collect()
        })
        .collect();
    for j in [16, 32, 64, 96, 128] {
        let col: Vec<f64> = devs.iter().map(|d| d[j]).collect();
        let (_, v) = mean_var(&col);
        let s = j as f64 * PERIOD / m as f64;
        let target = sigma * sigma * s;
        // sampling error of a variance from 10⁴ draws is about 1.4%
        assert!((n as f64 * v / target - 1.0).abs() < 0.06, "s = {s}: {} vs {target}", n as f64 * v);
    }
}

#[test]
fn psi_theoretical_area_and_phase_invariance() {
    let tri = psi_theoretical(&triangular(), &[3.0], 0.02, 500, PsiRule::Trapezoid).unwrap();
    assert!((tri[500] - 1.0).abs() < 1e-12);
    let pa = sine_phase_amplitude();
    let a = psi_theoretical(&pa, &[1.0, 2.0], PERIOD / 512.0, 512, PsiRule::LeftRiemann).unwrap();
    let b = psi_theoretical(&pa, &[6.3, 2.0], PERIOD / 512.0, 512, PsiRule::LeftRiemann).unwrap();
    assert!((a[512] - b[512]).abs() < 1e-12);
    let zero = SignalModel::constant(0.0, PERIOD).unwrap();
    let z = psi_theoretical(&zero, &[0.5], 0.1, 100, PsiRule::Trapezoid).unwrap();
    assert!(z.iter().all(|v| *v == 0.0));
}

#[test]
fn objective_matches_brute_force_double_loop() {
    // cell-by-cell loop over the grid, independent of the weighted sum
    let signal = triangular();
    let diff = ou(1.0, 0.5);
    let p = simulate_path(&signal, &diff, &[3.0], 20, STEPS, 2).unwrap();
    let psi = psi_hat(&p, &diff);
    for zeta in [2.5, 3.0, 7.0] {
        let model = psi_theoretical(&signal, &[zeta], p.dt(), STEPS, PsiRule::LeftRiemann).unwrap();
        let fast = h_distance_sq(&psi.samples, &model, p.dt());
        let mut brute = 0.0;
        for j in 0..STEPS {
            let d0 = psi.samples[j] - model[j];
            let d1 = psi.samples[j + 1] - model[j + 1];
            brute += 0.5 * (d0 * d0 + d1 * d1) * p.dt();
        }
        assert!((fast - brute).abs() <= 1e-12 * (1.0 + brute), "{fast} vs {brute}");
    }
}

#[test]
fn mde_never_worse_than_its_grid_phase() {
    let signal = triangular();
    let diff = ou(1.0, 0.5);
    for seed in 1..6 {
        let p = simulate_path(&signal, &diff, &[3.0], 25, STEPS, seed).unwrap();
        let fit = mde_estimate(&p, &signal, &diff, &SearchConfig::default()).unwrap();
        assert!(fit.objective <= fit.grid_objective);
        let psi = psi_hat(&p, &diff);
        for i in 0..32 {
            let z = (i as f64 + 0.5) * PERIOD / 32.0;
            let m = psi_theoretical(&signal, &[z], p.dt(), STEPS, PsiRule::LeftRiemann).unwrap();
            assert!(fit.objective <= h_distance_sq(&psi.samples, &m, p.dt()));
        }
    }
}

#[test]
fn mde_within_three_limit_sd_in_99_percent() {
    let signal = triangular();
    let diff = ou(1.0, 0.5);
    let n = 200;
    let cov = mde_asymptotic_covariance(&signal, &diff, &[3.0], PhiMode::ConstantSigma, 256).unwrap();
    let band = 3.0 * (cov.covariance[(0, 0)] / n as f64).sqrt();
    let reps = 500;
    let hits = (0..reps)
        .into_par_iter()
        .filter(|&r| {
            let p = simulate_path(&signal, &diff, &[3.0], n, STEPS, 10_000 + r as u64).unwrap();
            let fit = mde_estimate(&p, &signal, &diff, &SearchConfig::default()).unwrap();
            (fit.estimate[0] - 3.0).abs() <= band
        })
        .count();
    assert!(hits as f64 >= 0.99 * reps as f64, "{hits}/{reps}");
}

proptest! {
    #[test]
    fn dyadic_output_is_dyadic_interior_and_close(z in 0.001f64..9.999, level in 4u32..12) {
        let domain = ParameterDomain::new(vec![(0.0, PERIOD)]).unwrap();
        let d = dyadic_discretize(&[z], level, &[5.0], &domain, OutsideCube::NearestInterior).unwrap();
        let side = (-(level as f64)).exp2();
        prop_assert_eq!((d[0] / side).fract(), 0.0);
        prop_assert!(d[0] > 0.0 && d[0] + side <= PERIOD);
        prop_assert!((d[0] - z).abs() <= side);
        let again = dyadic_discretize(&d, level, &[5.0], &domain, OutsideCube::NearestInterior).unwrap();
        prop_assert_eq!(again, d);
    }
}

#[test]
fn limit_covariance_dominates_inverse_information() {
    let cases: Vec<(SignalModel, Vec<f64>, f64)> = vec![
        (triangular(), vec![3.0], 0.5),
        (power_pulse(2.0), vec![4.0], 1.0),
        (sine_phase_amplitude(), vec![2.0, 2.0], 1.0),
    ];
    for (signal, theta, sigma) in cases {
        let diff = ou(1.0, sigma);
        let cov = mde_asymptotic_covariance(&signal, &diff, &theta, PhiMode::ConstantSigma, 256).unwrap();
        let w = LambdaWeight::constant_sigma(&diff).unwrap();
        let inv = fisher_quadrature(&signal, &diff, &theta, &w, 256).unwrap().inverse().unwrap();
        let gap = &cov.covariance - inv;
        let min_eig = gap.symmetric_eigen().eigenvalues.min();
        assert!(min_eig >= -1e-8, "{}: {min_eig}", signal.name());
    }
}

#[test]
fn xi_matches_double_integral_oracle_for_constant_gradient() {
    let (c, sigma, period) = (1.5, 0.7, 4.0);
    let sig = SignalModel::from_fns(
        "linear",
        ParameterDomain::new(vec![(-10.0, 10.0)]).unwrap(),
        period,
        move |z, _| c * z[0],
        move |_, _, g| g[0] = c,
    )
    .unwrap();
    let dif = DiffusionSpec::new(Drift::Zero, Volatility::Constant(sigma), period, 0.0).unwrap();
    let cov = mde_asymptotic_covariance(&sig, &dif, &[1.0], PhiMode::ConstantSigma, 64).unwrap();
    let oracle = brute_force_double_integral(|s| c * s, |s| sigma * sigma * s, |s| c * s, period, 400);
    assert!((cov.xi[(0, 0)] - oracle).abs() <= 1e-6 * oracle, "{} vs {oracle}", cov.xi[(0, 0)]);
}

#[test]
fn mle_is_independent_of_reference_point() {
    let signal = triangular();
    let diff = ou(1.0, 0.5);
    let p = simulate_path(&signal, &diff, &[3.0], 40, STEPS, 21).unwrap();
    let a = grid_mle(&p, &signal, &diff, &SearchConfig::default(), &[5.0]).unwrap();
    let b = grid_mle(&p, &signal, &diff, &SearchConfig::default(), &[1.3]).unwrap();
    assert!((a.estimate[0] - b.estimate[0]).abs() < 1e-6, "{:?} {:?}", a.estimate, b.estimate);
    // llr(ζ, ζ₀) − llr(ζ, ζ₀′) does not depend on ζ
    use perisig::inference::log_likelihood_ratio as llr;
    let diffs: Vec<f64> = [1.0, 3.0, 6.5]
        .iter()
        .map(|&z| llr(&p, &signal, &diff, &[z], &[5.0]).unwrap() - llr(&p, &signal, &diff, &[z], &[1.3]).unwrap())
        .collect();
    assert!((diffs[0] - diffs[1]).abs() < 1e-9 && (diffs[1] - diffs[2]).abs() < 1e-9);
}

#[test]
fn mle_is_efficient_on_triangular_ou() {
    let cfg = StudyConfig {
        theta: vec![3.0],
        n_periods: 100,
        steps_per_period: STEPS,
        replicates: 500,
        base_seed: 1,
        directions: vec![],
        estimators: true,
        estimator: EstimatorConfig {
            mle: true,
            ..Default::default()
        },
    };
    let res = run_study(&triangular(), &ou(1.0, 0.5), &cfg).unwrap();
    let errs: Vec<f64> = normalized_errors(&res, EstimatorKind::Mle).iter().map(|e| e[0]).collect();
    let (_, v) = mean_var(&errs);
    assert!((v / 0.125 - 1.0).abs() <= 0.15, "{v}");
}

/// Path with `b ≡ 0` whose noise is the circular shift of a fixed stream.
fn shifted_path(theta: f64, shift: usize, n: usize, sigma: f64) -> Path {
    let signal = triangular();
    let h = PERIOD / STEPS as f64;
    let total = n * STEPS;
    let g = CounterNormal::new(77);
    let mut x = 0.0;
    let mut values = vec![x];
    for i in 0..total {
        let z = g.normal(((i + total - shift) % total) as u64);
        x += signal.value(&[theta], i as f64 * h).unwrap() * h + sigma * h.sqrt() * z;
        values.push(x);
    }
    Path::new(h, STEPS, n, values, 0).unwrap()
}

#[test]
fn one_step_is_translation_equivariant() {
    let signal = triangular();
    let sigma = 0.5;
    let diff = DiffusionSpec::new(Drift::Zero, Volatility::Constant(sigma), PERIOD, 0.0).unwrap();
    let shift = 4;
    let c = shift as f64 * PERIOD / STEPS as f64;
    let n = 20;
    let p1 = shifted_path(3.0, 0, n, sigma);
    let p2 = shifted_path(3.0 + c, shift, n, sigma);
    for start in [2.9375, 3.0625] {
        let a = one_step(&p1, &signal, &diff, &[start], FisherMode::Quadrature).unwrap();
        let b = one_step(&p2, &signal, &diff, &[start + c], FisherMode::Quadrature).unwrap();
        assert!((b.estimate[0] - a.estimate[0] - c).abs() < 1e-9, "{:?} {:?}", a.estimate, b.estimate);
    }
}
