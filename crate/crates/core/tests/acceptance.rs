//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! per criterion and exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use effcov::bench::config::{EstimatorChoice, ExperimentConfig, ExperimentKind, PerComponent, SemiPath};
use effcov::bench::experiments::run_lan;
use effcov::bench::report::to_json;
use effcov::bench::{run_mc_parametric, run_mc_semiparametric, McReport};
use effcov::fisher::{asymptotic_eigenvalues, asymptotic_fisher, bm_efficient_covariance, spectral_window, FreqWindow, IntegralMode};
use effcov::lan::{spectrum_distance_trend, window_information_fraction, TrendCutoff, TrendVerdict};
use effcov::matcore::{rel_frobenius, Symmetriser, SymMatrix};
use effcov::model::ParamModel;
use effcov::spectra::Spectrum;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 42;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

fn sigma_half() -> Vec<Vec<f64>> {
    vec![vec![1.0, 0.5], vec![0.5, 1.0]]
}

fn criterion_1() -> Outcome {
    let (worst, secs) = timed(|| {
        let mut worst: f64 = 0.0;
        let grid = [0.1, 1.0, 4.0, 10.0];
        for delta in [1.5, 2.0, 3.0, 4.0] {
            for eta in [0.5, 1.0, 2.0] {
                for &si in &grid {
                    for &sj in &grid {
                        let s = [si, sj];
                        let a = asymptotic_eigenvalues(&s, delta, 1.0 / PI, eta, IntegralMode::ClosedForm).unwrap();
                        let b = asymptotic_eigenvalues(&s, delta, 1.0 / PI, eta, IntegralMode::Quadrature).unwrap();
                        for (x, y) in a.iter().zip(b.iter()) {
                            worst = worst.max((x - y).abs() / y.abs());
                        }
                    }
                }
            }
        }
        worst
    });
    Outcome {
        id: 1,
        name: "closed form vs quadrature Fisher eigenvalues",
        pass: worst < 1e-8 && secs < 1.0,
        detail: format!("max rel err {worst:.3e} (< 1e-8), {secs:.3} s (< 1 s)"),
    }
}

fn random_pd(rng: &mut ChaCha8Rng, d: usize) -> SymMatrix {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let m = &a * a.transpose() + DMatrix::identity(d, d) * 0.1;
    SymMatrix::symmetrised(&m).unwrap()
}

fn criterion_2() -> Outcome {
    let (worst, secs) = timed(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let mut worst: f64 = 0.0;
        for k in 0..50 {
            let d = 1 + k % 3;
            let sigma = random_pd(&mut rng, d);
            let eta = rng.random_range(0.5..2.0);
            let lhs = asymptotic_fisher(&sigma, 2.0, 1.0 / PI, eta).unwrap().quarter_inverse_z().unwrap();
            let rhs = bm_efficient_covariance(&sigma, eta).unwrap();
            worst = worst.max(rel_frobenius(&lhs, &rhs));
        }
        worst
    });
    Outcome {
        id: 2,
        name: "Brownian motion efficient covariance identity",
        pass: worst < 1e-10 && secs < 1.0,
        detail: format!("max rel Frobenius {worst:.3e} (< 1e-10) over 50 matrices, {secs:.3} s (< 1 s)"),
    }
}

fn criterion_3() -> Outcome {
    let ((e6, e8), secs) = timed(|| {
        let sigma = SymMatrix::from_rows(&sigma_half()).unwrap();
        let z = Symmetriser::new(2);
        // p_n⁻¹ I_n → I at ζ = 1
        let limit = asymptotic_fisher(&sigma, 2.0, 1.0, 1.0).unwrap().times_z();
        let err = |n: u64| {
            let model = ParamModel::with_default_bound(sigma.clone(), 1.0, n, Spectrum::brownian_motion()).unwrap();
            let p_n = model.balance_index().unwrap();
            let info = spectral_window(&model, &FreqWindow::Full).unwrap().to_dense();
            rel_frobenius(&(z.right_apply(&info) / p_n), &limit)
        };
        (err(1_000_000), err(100_000_000))
    });
    Outcome {
        id: 3,
        name: "finite-n information rate convergence",
        pass: e6 < 0.05 && e8 < 0.02 && secs < 10.0,
        detail: format!("n=1e6: {e6:.3e} (< 0.05), n=1e8: {e8:.3e} (< 0.02), {secs:.2} s (< 10 s)"),
    }
}

fn c4_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::new(ExperimentKind::McParametric);
    c.seed = SEED;
    c.replications = 5000;
    c.model.sigma = Some(sigma_half());
    c.model.eta = PerComponent::One(1.0);
    c.model.n = PerComponent::One(1_000_000);
    c.mc.estimator = EstimatorChoice::Oracle;
    c
}

fn criterion_4(r: &McReport, secs: f64) -> Outcome {
    let skew = r.normality.skewness.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    Outcome {
        id: 4,
        name: "oracle Monte Carlo covariance and normality",
        pass: r.rel_frobenius_error <= 0.10 && skew < 0.1 && secs < 300.0,
        detail: format!(
            "rel Frobenius {:.4} (<= 0.10), max |skewness| {skew:.4} (< 0.1, se {:.4}), {secs:.1} s (< 300 s)",
            r.rel_frobenius_error, r.normality.skewness_se
        ),
    }
}

fn c5_config(n: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(ExperimentKind::McParametric);
    c.seed = SEED;
    c.replications = 2000;
    c.model.sigma = Some(sigma_half());
    c.model.eta = PerComponent::One(1.0);
    c.model.n = PerComponent::One(n);
    c.mc.estimator = EstimatorChoice::Both;
    c.mc.keep_estimates = false;
    c
}

const C5_N: [u64; 3] = [10_000, 1_000_000, 100_000_000];

fn criterion_5(reps: &[McReport], secs: f64) -> Outcome {
    let gaps: Vec<f64> = reps.iter().map(|r| r.adaptive_oracle_gap.as_ref().unwrap().median).collect();
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    Outcome {
        id: 5,
        name: "adaptive estimator approaches the oracle",
        pass: decreasing && secs < 900.0,
        detail: format!(
            "median gap/r_n at n=1e4,1e6,1e8: {:.4}, {:.4}, {:.4} (strictly decreasing), {secs:.1} s (< 900 s)",
            gaps[0], gaps[1], gaps[2]
        ),
    }
}

fn c6_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::new(ExperimentKind::Lan);
    c.seed = SEED;
    c.replications = 10_000;
    c.model.sigma = Some(vec![vec![1.0]]);
    c.model.eta = PerComponent::One(1.0);
    c.model.n = PerComponent::One(1_000_000);
    c.lan.h = Some(vec![vec![1.0]]);
    c
}

fn criterion_6(r: &effcov::lan::LanReport, secs: f64) -> Outcome {
    let (tm, tv) = (-1.0 / 16.0, 1.0 / 8.0);
    let mean_rel = (r.mean - tm).abs() / tm.abs();
    let var_rel = (r.variance - tv).abs() / tv;
    Outcome {
        id: 6,
        name: "local asymptotic normality of the log-likelihood ratio",
        pass: mean_rel <= 0.05 && var_rel <= 0.05 && secs < 120.0,
        detail: format!(
            "mean {:.5} vs -0.0625 (rel {mean_rel:.3}, <= 0.05), variance {:.5} vs 0.125 (rel {var_rel:.3}, <= 0.05), {secs:.1} s (< 120 s)",
            r.mean, r.variance
        ),
    }
}

fn c7_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::new(ExperimentKind::McSemiparametric);
    c.seed = SEED;
    c.replications = 2000;
    c.model.sigma = Some(vec![vec![1.0, 0.3], vec![0.3, 1.0]]);
    c.model.sigma_end = Some(vec![vec![1.5, 0.3], vec![0.3, 1.0]]);
    c.model.eta = PerComponent::One(1.0);
    c.model.n = PerComponent::One(1_000_000);
    c.model.m = 50;
    c.mc.path = SemiPath::Fast;
    c
}

fn criterion_7(r: &McReport, secs: f64) -> Outcome {
    let zmax = r.z_scores.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    Outcome {
        id: 7,
        name: "semiparametric Monte Carlo (fast path)",
        pass: r.rel_frobenius_error <= 0.15 && zmax <= 3.0 && secs < 900.0,
        detail: format!(
            "rel Frobenius {:.4} (<= 0.15), max |mean/SE| {zmax:.2} (<= 3), {secs:.1} s (< 900 s)",
            r.rel_frobenius_error
        ),
    }
}

fn criterion_8() -> Outcome {
    let ((bb, fbm), secs) = timed(|| {
        let sigma = SymMatrix::from_rows(&sigma_half()).unwrap();
        let ns = [10_000, 1_000_000, 100_000_000];
        let bm = Spectrum::brownian_motion();
        let bb = spectrum_distance_trend(&bm, &Spectrum::brownian_bridge(), &sigma, 1.0, &ns, TrendCutoff::default()).unwrap();
        let fbm = spectrum_distance_trend(&bm, &Spectrum::fractional_bm(0.7).unwrap(), &sigma, 1.0, &ns, TrendCutoff::default()).unwrap();
        (bb, fbm)
    });
    let fmt = |r: &effcov::lan::TrendReport| r.points.iter().map(|p| format!("{:.4e}", p.distance)).collect::<Vec<_>>().join(", ");
    Outcome {
        id: 8,
        name: "equivalence trends",
        pass: bb.verdict == TrendVerdict::Vanishing && fbm.verdict == TrendVerdict::Diverging && secs < 60.0,
        detail: format!("BM vs BB [{}] decreasing, BM vs fBM(0.7) [{}] increasing, {secs:.2} s (< 60 s)", fmt(&bb), fmt(&fbm)),
    }
}

fn criterion_9() -> Outcome {
    let ((base, nested), secs) = timed(|| {
        let model = ParamModel::with_default_bound(SymMatrix::identity(1), 1.0, 1_000_000, Spectrum::brownian_motion()).unwrap();
        let p_n = model.balance_index().unwrap();
        let frac = |f: f64| window_information_fraction(&model, &FreqWindow::around(p_n, 1.0 / f, f).unwrap()).unwrap();
        (frac(10.0), [frac(10.0), frac(100.0), frac(1000.0)])
    });
    let increasing = nested.windows(2).all(|w| w[1] > w[0]);
    Outcome {
        id: 9,
        name: "window sufficiency",
        pass: base >= 0.90 && increasing && secs < 1.0,
        detail: format!(
            "fraction on [p_n/10, 10p_n] {base:.4} (>= 0.90), nested x10/x100/x1000: {:.4}, {:.4}, {:.4} (increasing), {secs:.3} s (< 1 s)",
            nested[0], nested[1], nested[2]
        ),
    }
}

fn main() -> ExitCode {
    let mut out = Vec::new();
    let mut report = |o: Outcome| {
        println!("criterion {:>2} {}: {} | {}", o.id, if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
        out.push(o);
    };
    report(criterion_1());
    report(criterion_2());
    report(criterion_3());

    let serial = pool(1);
    let (r4, s4) = timed(|| serial.install(|| run_mc_parametric(&c4_config()).unwrap()));
    report(criterion_4(&r4, s4));
    let (r5, s5) = timed(|| serial.install(|| C5_N.iter().map(|&n| run_mc_parametric(&c5_config(n)).unwrap()).collect::<Vec<_>>()));
    report(criterion_5(&r5, s5));
    let (r6, s6) = timed(|| serial.install(|| run_lan(&c6_config()).unwrap()));
    report(criterion_6(&r6.report, s6));
    let (r7, s7) = timed(|| serial.install(|| run_mc_semiparametric(&c7_config()).unwrap()));
    report(criterion_7(&r7, s7));
    report(criterion_8());
    report(criterion_9());

    // rerun every seeded experiment on eight threads and compare the encoded reports
    let wide = pool(8);
    let mut first = vec![to_json(&r4).unwrap()];
    first.extend(r5.iter().map(|r| to_json(r).unwrap()));
    first.push(to_json(&r6).unwrap());
    first.push(to_json(&r7).unwrap());
    let second = wide.install(|| {
        let mut v = vec![to_json(&run_mc_parametric(&c4_config()).unwrap()).unwrap()];
        v.extend(C5_N.iter().map(|&n| to_json(&run_mc_parametric(&c5_config(n)).unwrap()).unwrap()));
        v.push(to_json(&run_lan(&c6_config()).unwrap()).unwrap());
        v.push(to_json(&run_mc_semiparametric(&c7_config()).unwrap()).unwrap());
        v
    });
    let same = first.iter().zip(&second).filter(|(a, b)| a == b).count();
    report(Outcome {
        id: 10,
        name: "determinism across runs and thread counts",
        pass: same == first.len(),
        detail: format!("{same}/{} reports byte-identical between a 1-thread and an 8-thread rerun", first.len()),
    });

    let failed: Vec<u32> = out.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!("acceptance: {}/{} criteria passed", out.len() - failed.len(), out.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
