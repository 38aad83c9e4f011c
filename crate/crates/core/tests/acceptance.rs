//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line
//! with the measured quantities, then asserts.

use std::time::{Duration, Instant};

use kmse_core::density::{density_experiment, kmm_gradient, kmm_objective, DensityConfig, MixtureModel};
use kmse_core::estimators::{landweber_path, landweber_weights, nu_method_path, spectral_weights, tikhonov_weights};
use kmse_core::filters::{check_admissibility, residual, shrinkage_factor, FilterSpec};
use kmse_core::kernels::{gram_matrix, normalize_gram, KernelSpec, NormalizedGram};
use kmse_core::risk::{
    draw_replication, experiment_params, fit_estimator, kernel_mean_inner, mixture_mean_sq_norm,
    run_benchmark, BenchmarkConfig, EstimatorConfig, Family, PairedComparison, Selection,
};
use kmse_core::synthetic::{MixtureParams, RngStream};
use kmse_core::theory::{
    admissibility_ratio, brute_force_admissibility_infimum, check_operator_equivalence, check_theorem1, component_risk_difference,
    component_shrinkage_bound, random_normalized_gram, rate_experiment, theorem1_admissibility_bound,
    RateExperimentConfig, RateSource,
};
use kmse_core::Dataset;
use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn report(criterion: u32, pass: bool, elapsed: Duration, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion}: {verdict} ({detail}; {:.2}s)", elapsed.as_secs_f64());
}

#[test]
fn criterion_01_spectral_equivalence() {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for k in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        rng.set_stream(k);
        let kbar = random_normalized_gram(30, &mut rng).unwrap();
        let lambda = 10f64.powf(rng.gen_range(-4.0..0.0));
        let mut iterates = Vec::new();
        landweber_path(&kbar, 50, 1.0, |_, b| iterates.push(b.clone())).unwrap();
        for (t, b) in iterates.iter().enumerate() {
            let s = spectral_weights(&kbar, &FilterSpec::landweber(t + 1, 1.0)).unwrap();
            worst = worst.max((b - &s.weights).amax());
        }
        iterates.clear();
        nu_method_path(&kbar, 20, 1.0, 1.0, |_, b| iterates.push(b.clone())).unwrap();
        for (t, b) in iterates.iter().enumerate() {
            let s = spectral_weights(&kbar, &FilterSpec::nu_method(t + 1, 1.0, 1.0)).unwrap();
            worst = worst.max((b - &s.weights).amax());
        }
        let spec = FilterSpec::IteratedTikhonov { iters: 3, lambda };
        let iterative = kmse_core::estimators::fit_weights(&kbar, &spec).unwrap();
        let spectral = spectral_weights(&kbar, &spec).unwrap();
        worst = worst.max((&iterative.weights - &spectral.weights).amax());
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-8 && elapsed < Duration::from_secs(10);
    report(1, pass, elapsed, &format!("max |iterative − spectral| = {worst:.3e}, limit 1e-8"));
    assert!(pass);
}

#[test]
fn criterion_02_operator_equivalence() {
    let start = Instant::now();
    let verdict = check_operator_equivalence(20, 2).unwrap();
    let elapsed = start.elapsed();
    let pass = verdict.pass && elapsed < Duration::from_secs(5);
    report(2, pass, elapsed, &format!("max pointwise gap = {:.3e}, limit 1e-8", verdict.metric));
    assert!(pass);
}

#[test]
fn criterion_03_filter_admissibility() {
    let start = Instant::now();
    let mut ok = true;
    let mut worst_tik = 0.0_f64;
    let mut worst_tsvd = 0.0_f64;
    let grid: Vec<f64> = (0..10_000).map(|i| i as f64 / 9_999.0).collect();
    for lambda in [1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
        let tik = FilterSpec::Tikhonov { lambda };
        let rep = check_admissibility(&tik, 1.0, 10_000, &[1.0]).unwrap();
        ok &= rep.sup_gamma_g <= 1.0 && rep.sup_residual <= 1.0 && rep.residual_eta_bounds[0].1 <= 1.0 + 1e-12;
        // second route: the scalar filter on the same grid
        for &g in &grid {
            let phi = shrinkage_factor(&tik, g).unwrap();
            let r = residual(&tik, g).unwrap();
            ok &= phi.abs() <= 1.0 && r.abs() <= 1.0 && r * g <= lambda * (1.0 + 1e-12);
            worst_tik = worst_tik.max(r * g / lambda);
        }
        let tsvd = FilterSpec::Tsvd { threshold: lambda };
        let rep = check_admissibility(&tsvd, 1.0, 10_000, &[1.0, 2.0, 4.0]).unwrap();
        for &(eta, sup) in &rep.residual_eta_bounds {
            ok &= sup <= 1.0;
            worst_tsvd = worst_tsvd.max(sup);
            for &g in &grid {
                ok &= residual(&tsvd, g).unwrap().abs() * g.powf(eta) <= lambda.powf(eta);
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = ok && elapsed < Duration::from_secs(5);
    report(
        3,
        pass,
        elapsed,
        &format!("tikhonov sup rγ/λ = {worst_tik:.6}, tsvd sup |r|γ^η/λ^η = {worst_tsvd:.6}"),
    );
    assert!(pass);
}

#[test]
fn criterion_04_theorem1_admissibility() {
    let start = Instant::now();
    let verdict = check_theorem1(10_000, 4).unwrap();
    let a = theorem1_admissibility_bound(1.0, 2.0).unwrap();
    let brute = brute_force_admissibility_infimum(1.0, 2.0);
    let integer_inf = (1..=1_000_000u32)
        .map(|n| admissibility_ratio(1.0, 2.0, n as f64))
        .fold(f64::INFINITY, f64::min);
    let exact = 2.0 * 2f64.sqrt() / (2.0 * 2f64.sqrt() + 1.0);
    let elapsed = start.elapsed();
    let signs_ok = verdict.pass;
    let decimal_ok = (a - 0.73877).abs() <= 1e-5;
    let brute_ok = (a - brute).abs() <= 1e-6;
    let pass = signs_ok && decimal_ok && brute_ok && elapsed < Duration::from_secs(10);
    report(
        4,
        pass,
        elapsed,
        &format!(
            "sign check {}, A(1,2) = {a:.10} (closed form 2√2/(2√2+1) = {exact:.10}) vs required 0.73877 ± 1e-5, \
             |A − real-n brute-force infimum| = {:.2e}, integer-n infimum = {integer_inf:.6}",
            if signs_ok { "ok" } else { "mismatch" },
            (a - brute).abs()
        ),
    );
    assert!((a - exact).abs() < 1e-12);
    assert!(signs_ok && brute_ok);
    assert!(decimal_ok, "A(1,2) = {a} is {:.2e} from 0.73877", (a - 0.73877).abs());
}

#[test]
fn criterion_05_theorem2_component_shrinkage() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0usize;
    for _ in 0..10_000 {
        let delta = 10f64.powf(rng.gen_range(-3.0..1.0));
        let f_star = rng.gen_range(-3.0..3.0);
        let mu = rng.gen_range(-3.0..3.0);
        let s = delta + (f_star - mu) * (f_star - mu);
        let bound = 2.0 * delta / s;
        assert!((bound - component_shrinkage_bound(delta, f_star, mu)).abs() <= 1e-15 * bound.max(1.0));
        for alpha in [0.0, bound, rng.gen_range(0.0..=bound)] {
            if component_risk_difference(alpha, delta, f_star, mu).unwrap() > 0.0 {
                violations += 1;
            }
        }
        for alpha in [-rng.gen_range(1e-6..1.0), bound + rng.gen_range(1e-6..1.0)] {
            let v = component_risk_difference(alpha, delta, f_star, mu).unwrap();
            // expanded form as a second route, away from the roots
            let expanded = alpha * alpha * s - 2.0 * alpha * delta;
            if !(v > 0.0 && expanded > 0.0) {
                violations += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = violations == 0 && elapsed < Duration::from_secs(5);
    report(5, pass, elapsed, &format!("{violations} sign violations over 10⁴ tuples"));
    assert!(pass);
}

fn random_spd(d: usize, scale: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    (&a * a.transpose()) * (scale / d as f64) + DMatrix::identity(d, d) * 0.05
}

fn gaussian_draw(mean: &DVector<f64>, chol: &DMatrix<f64>, rng: &mut impl Rng) -> DVector<f64> {
    let z = DVector::<f64>::from_fn(mean.len(), |_, _| rng.sample(StandardNormal));
    mean + chol * z
}

fn rbf(a: &DVector<f64>, b: &DVector<f64>, s2: f64) -> f64 {
    (-(a - b).norm_squared() / (2.0 * s2)).exp()
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn criterion_06_closed_form_loss_gate() {
    let start = Instant::now();
    let samples = 1_000_000;
    let mut worst_z = 0.0_f64;
    for cfg in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        rng.set_stream(cfg);
        let d = rng.gen_range(1..=5);
        let s2 = rng.gen_range(0.5..4.0);

        let mean = DVector::from_fn(d, |_, _| rng.gen_range(-1.5..1.5));
        let cov = random_spd(d, rng.gen_range(0.2..2.0), &mut rng);
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let xv = DVector::from_column_slice(&x);
        let chol = cov.clone().cholesky().unwrap().l();
        let vals: Vec<f64> = (0..samples).map(|_| rbf(&xv, &gaussian_draw(&mean, &chol, &mut rng), s2)).collect();
        let (m, se) = mean_stderr(&vals);
        let exact = kernel_mean_inner(&x, &mean, &cov, s2).unwrap();
        worst_z = worst_z.max((exact - m).abs() / se);

        let r = rng.gen_range(1..=3);
        let raw: Vec<f64> = (0..r).map(|_| rng.gen_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let means: Vec<DVector<f64>> = (0..r).map(|_| DVector::from_fn(d, |_, _| rng.gen_range(-1.5..1.5))).collect();
        let covs: Vec<DMatrix<f64>> = (0..r).map(|_| random_spd(d, rng.gen_range(0.2..2.0), &mut rng)).collect();
        let noise = 0.2;
        let params = MixtureParams::new(weights.clone(), means.clone(), covs.clone(), noise).unwrap();
        let chols: Vec<DMatrix<f64>> = covs
            .iter()
            .map(|c| (c + DMatrix::identity(d, d) * noise).cholesky().unwrap().l())
            .collect();
        let pick = WeightedIndex::new(&weights).unwrap();
        let vals: Vec<f64> = (0..samples)
            .map(|_| {
                let (j, l) = (pick.sample(&mut rng), pick.sample(&mut rng));
                let y = gaussian_draw(&means[j], &chols[j], &mut rng);
                let z = gaussian_draw(&means[l], &chols[l], &mut rng);
                rbf(&y, &z, s2)
            })
            .collect();
        let (m, se) = mean_stderr(&vals);
        let exact = mixture_mean_sq_norm(&params, s2).unwrap();
        worst_z = worst_z.max((exact - m).abs() / se);
    }
    let elapsed = start.elapsed();
    let pass = worst_z <= 3.0 && elapsed < Duration::from_secs(120);
    report(6, pass, elapsed, &format!("worst |closed form − Monte Carlo| = {worst_z:.2} stderr over 40 comparisons"));
    assert!(pass);
}

#[test]
fn criterion_07_synthetic_improvement() {
    let start = Instant::now();
    let mut estimators = vec![EstimatorConfig::default_for(Family::Kme)];
    for family in [
        Family::Skmse,
        Family::Tikhonov,
        Family::Landweber,
        Family::Nu { nu: 1.0 },
        Family::Itik { iters: 3 },
        Family::Tsvd,
    ] {
        estimators.push(EstimatorConfig::new(family, Selection::Oracle));
    }
    let cfg = BenchmarkConfig::new(50, 20, 200, 7);
    let outcome = run_benchmark(&estimators, &cfg).unwrap();
    let cmp: Vec<PairedComparison> =
        (1..estimators.len()).map(|i| PairedComparison::new(&outcome.losses[0], &outcome.losses[i])).collect();
    let skmse = cmp[0].improvement_percent;
    let mut ok = true;
    let mut parts = vec![format!("skmse {skmse:.2}%")];
    for (e, c) in estimators[2..].iter().zip(&cmp[1..]) {
        let better = c.improvement_percent > 0.0 && c.significantly_better(3.0);
        let beats_skmse = match e.family {
            Family::Tikhonov | Family::Landweber | Family::Nu { .. } => c.improvement_percent > skmse,
            _ => true,
        };
        ok &= better && beats_skmse;
        parts.push(format!(
            "{} {:.2}% (z {:.1})",
            e.family.name(),
            c.improvement_percent,
            c.mean_difference / c.stderr_difference
        ));
    }
    let elapsed = start.elapsed();
    let pass = ok && elapsed < Duration::from_secs(300);
    report(7, pass, elapsed, &format!("oracle improvements over kme: {}", parts.join(", ")));
    assert!(pass);
}

fn linear_risk(c: f64, b: f64, n: f64, mean: &[f64]) -> (f64, f64) {
    // P = N(mean, I): E‖μ̂ − μ‖² = d/n; shrinking by 1/(1+λ) adds bias λ²‖μ‖²/(1+λ)²
    let d = mean.len() as f64;
    let mu_sq: f64 = mean.iter().map(|m| m * m).sum();
    let lambda = c * n.powf(-b);
    let f = 1.0 / (1.0 + lambda);
    (f * f * d / n + (1.0 - f) * (1.0 - f) * mu_sq, d / n)
}

#[test]
fn criterion_08_rates() {
    let start = Instant::now();
    let mean = vec![1.0, -0.5, 0.25];
    let grid = vec![1_000, 10_000, 100_000];
    let run = |c: f64| {
        rate_experiment(&RateExperimentConfig {
            c,
            b: 1.0,
            n_grid: grid.clone(),
            source: RateSource::LinearGaussian { mean: mean.clone() },
        })
        .unwrap()
    };
    let main = run(1.0);
    let tiny = run(1e-12);
    let mut route_gap = 0.0_f64;
    for p in &main.points {
        let (r, _) = linear_risk(1.0, 1.0, p.n as f64, &mean);
        route_gap = route_gap.max((r - p.risk).abs() / r);
    }
    let coincide = tiny.points.iter().map(|p| (p.risk - p.kme_risk).abs()).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let pass = (main.slope + 1.0).abs() <= 0.05 && coincide <= 1e-10 && route_gap < 1e-12 && elapsed < Duration::from_secs(1);
    report(
        8,
        pass,
        elapsed,
        &format!("slope = {:.4}, max |risk − kme risk| at c=1e-12 = {coincide:.2e}", main.slope),
    );
    assert!(pass);
}

#[test]
fn criterion_09_loocv_gcv_sanity() {
    let start = Instant::now();
    let cfg = BenchmarkConfig::new(50, 20, 100, 9);
    let params = experiment_params(&cfg).unwrap();
    let landweber = EstimatorConfig::default_for(Family::Landweber);
    let tsvd = EstimatorConfig::default_for(Family::Tsvd);
    let mut lw_wins = 0;
    let mut tsvd_wins = 0;
    for r in 0..cfg.replications {
        let rep = draw_replication(&cfg, Some(&params), r).unwrap();
        let kbar = normalize_gram(&rep.gram);
        let chosen = fit_estimator(&landweber, &rep.gram, None).unwrap();
        let one = landweber_weights(&kbar, 1, 1.0 / rep.gram.kernel().kappa_sq()).unwrap();
        if rep.loss(&chosen.weights.weights) <= rep.loss(&one.weights) {
            lw_wins += 1;
        }
        let cut = fit_estimator(&tsvd, &rep.gram, None).unwrap();
        let kme = DVector::from_element(cfg.n, 1.0 / cfg.n as f64);
        if rep.loss(&cut.weights.weights) <= rep.loss(&kme) {
            tsvd_wins += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = lw_wins >= 90 && tsvd_wins >= 60 && elapsed < Duration::from_secs(300);
    report(
        9,
        pass,
        elapsed,
        &format!("LOOCV landweber ≤ t=1 risk in {lw_wins}/100, GCV tsvd ≤ kme risk in {tsvd_wins}/100"),
    );
    assert!(pass);
}

fn two_component_sample(seed: u64, n: usize) -> Dataset {
    let mut rng = RngStream::new(seed, 10).rng();
    let u = rng.gen_range(0.3..0.7);
    let means: Vec<[f64; 2]> = (0..2).map(|_| [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]).collect();
    let sds: Vec<f64> = (0..2).map(|_| rng.gen_range(0.5..1.2)).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let j = usize::from(rng.gen::<f64>() >= u);
            (0..2).map(|k| means[j][k] + sds[j] * rng.sample::<f64, _>(StandardNormal)).collect()
        })
        .collect();
    Dataset::from_rows(&rows).unwrap()
}

#[test]
fn criterion_10_kmm_density() {
    let start = Instant::now();
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..10u64 {
        let x = two_component_sample(seed, 200);
        let mut kme = DensityConfig::new("two-component", EstimatorConfig::default_for(Family::Kme), seed);
        kme.components = 2;
        let mut shrink = kme.clone();
        shrink.target = EstimatorConfig::new(Family::Tikhonov, Selection::Loocv);
        let a = density_experiment(&x, &kme).unwrap();
        let b = density_experiment(&x, &shrink).unwrap();
        if b.nll_test <= a.nll_test {
            wins += 1;
        }
        lines.push(format!("{:.4}/{:.4}", b.nll_test, a.nll_test));
    }

    // finite-difference gradient check
    let mut worst = 0.0_f64;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..100 {
        let (r, d, n) = (rng.gen_range(1..=3), rng.gen_range(1..=3), 10);
        let p: Vec<f64> = (0..r * (d + 2)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let model = MixtureModel::from_unconstrained(r, d, &p).unwrap();
        let x = Dataset::from_flat(n, d, (0..n * d).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
        let beta = DVector::from_fn(n, |_, _| rng.gen_range(0.0..0.2));
        let s2 = rng.gen_range(0.5..2.0);
        let g = kmm_gradient(&model, &beta, &x, s2).unwrap();
        let f = |q: &[f64]| kmm_objective(&MixtureModel::from_unconstrained(r, d, q).unwrap(), &beta, &x, s2).unwrap();
        let h = 1e-5;
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..p.len() {
            let (mut a, mut b) = (p.clone(), p.clone());
            a[k] += h;
            b[k] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            num += (g[k] - fd) * (g[k] - fd);
            den += fd * fd;
        }
        worst = worst.max(num.sqrt() / den.sqrt().max(1e-300));
    }
    let elapsed = start.elapsed();
    let pass = wins >= 6 && worst <= 1e-5 && elapsed < Duration::from_secs(180);
    report(
        10,
        pass,
        elapsed,
        &format!(
            "tikhonov-target NLL ≤ kme-target NLL in {wins}/10 seeds (test NLL tik/kme: {}), gradient rel. error {worst:.2e}",
            lines.join(" ")
        ),
    );
    assert!(worst <= 1e-5);
    assert!(pass, "only {wins}/10 seeds favour the shrinkage target");
}

#[test]
fn criterion_11_runtime_ordering() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 2000;
    let x = Dataset::from_flat(n, 5, (0..n * 5).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
    let gram = gram_matrix(&x, &KernelSpec::gaussian(5.0).unwrap()).unwrap();
    let kbar = normalize_gram(&gram);
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let mut iterative = Vec::new();
    let mut spectral = Vec::new();
    for _ in 0..5 {
        let t = Instant::now();
        let lw = landweber_weights(&kbar, 50, 1.0).unwrap();
        iterative.push(t.elapsed().as_secs_f64());
        // fresh copy so the eigendecomposition is not cached
        let fresh = NormalizedGram::from_normalized(kbar.matrix().clone(), kbar.kappa_sq()).unwrap();
        let t = Instant::now();
        let tk = spectral_weights(&fresh, &FilterSpec::Tikhonov { lambda: 1e-3 }).unwrap();
        spectral.push(t.elapsed().as_secs_f64());
        assert!(lw.weights.iter().all(|v| v.is_finite()) && tk.weights.iter().all(|v| v.is_finite()));
    }
    let (ti, ts) = (median(iterative), median(spectral));
    // the Cholesky route is the third one; timed for context only
    let t = Instant::now();
    tikhonov_weights(&kbar, 1e-3).unwrap();
    let tc = t.elapsed().as_secs_f64();
    let pass = ti < ts;
    report(
        11,
        pass,
        Duration::from_secs_f64(ti + ts),
        &format!("median landweber t=50 {ti:.4}s vs eigendecomposition tikhonov {ts:.4}s (cholesky {tc:.4}s)"),
    );
    assert!(pass);
}
