//! Monte Carlo runners for the parametric and semiparametric estimators.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::bench::config::{EstimatorChoice, ExperimentConfig, ExperimentKind, SemiPath};
use crate::bench::report::{median, moments, GapSummary, McReport, Normality};
use crate::error::{Error, Result};
use crate::estimate::{adaptive_estimate_data, block_p_max, integrated_covol_estimate, oracle_estimate_data, PreClamp, SeqDesign};
use crate::fisher::{asymptotic_fisher, integrated_bound};
use crate::matcore::rel_frobenius;
use crate::rng::{purpose, SeedStream};
use crate::simulate::{block_coeffs_from_ticks, fill_sequence, AsyncSampler, BlockSampler, SeqValues};

struct Rep {
    estimate: Vec<f64>,
    gap: Option<f64>,
    clamps: usize,
}

fn expect_kind(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    if cfg.kind != kind {
        return Err(Error::Config(format!("kind: expected `{}`, got `{}`", kind.label(), cfg.kind.label())));
    }
    cfg.validate()
}

fn assemble(cfg: &ExperimentConfig, reps: Vec<Rep>, truth: Vec<f64>, rate: f64, target: DMatrix<f64>, start: Instant) -> Result<McReport> {
    let r = reps.len();
    let z: Vec<Vec<f64>> = reps
        .iter()
        .map(|rep| rep.estimate.iter().zip(&truth).map(|(e, t)| (e - t) / rate).collect())
        .collect();
    let (mean, cov, skew, kurt) = moments(&z)?;
    let z_scores = mean
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let se = (cov[(i, i)] / r as f64).sqrt();
            if se > 0.0 {
                m / se
            } else {
                0.0
            }
        })
        .collect();
    let gaps: Vec<f64> = reps.iter().filter_map(|rep| rep.gap).collect();
    let adaptive_oracle_gap = (!gaps.is_empty()).then(|| GapSummary {
        median: median(&gaps),
        mean: gaps.iter().sum::<f64>() / gaps.len() as f64,
    });
    let clamp_events = reps.iter().map(|rep| rep.clamps).sum();
    let estimates = cfg.mc.keep_estimates.then(|| reps.into_iter().map(|rep| rep.estimate).collect());
    Ok(McReport {
        config: cfg.clone(),
        seed: cfg.seed,
        replications: r,
        rate,
        truth,
        estimates,
        mean_standardised: mean,
        rel_frobenius_error: rel_frobenius(&cov, &target),
        covariance_empirical: cov,
        covariance_target: target,
        z_scores,
        normality: Normality {
            skewness: skew,
            excess_kurtosis: kurt,
            skewness_se: (6.0 / r as f64).sqrt(),
            kurtosis_se: (24.0 / r as f64).sqrt(),
        },
        adaptive_oracle_gap,
        clamp_events,
        wall_ms: cfg.record_timing.then(|| start.elapsed().as_secs_f64() * 1e3),
    })
}

/// `R` seeded replications of the sequence model followed by the oracle or
/// adaptive estimator, standardised by `r_n` and compared with `¼I(Σ)⁻¹Z`.
pub fn run_mc_parametric(cfg: &ExperimentConfig) -> Result<McReport> {
    expect_kind(cfg, ExperimentKind::McParametric)?;
    let start = Instant::now();
    let model = cfg.model.param_model()?;
    let design = SeqDesign::from(&model);
    let window = cfg.window;
    let p_max = window.upper_index(&design)?;
    let stream = SeedStream::new(cfg.seed);
    let eig = model.sigma().eigen();
    let clamp = PreClamp::parametric(model.s_bound());
    let choice = cfg.mc.estimator;
    let reps = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| -> Result<Rep> {
            let mut rng = stream.substream(purpose::SEQUENCE, &[rep]);
            let mut buf = SeqValues::zeros(model.d(), p_max);
            fill_sequence(&model, &eig, &mut rng, &mut buf)?;
            let oracle = || oracle_estimate_data(&design, &buf, model.sigma(), &window);
            let adaptive = || adaptive_estimate_data(&design, &buf, &window, clamp);
            Ok(match choice {
                EstimatorChoice::Oracle => Rep {
                    estimate: oracle()?.estimate,
                    gap: None,
                    clamps: 0,
                },
                EstimatorChoice::Adaptive => {
                    let a = adaptive()?;
                    Rep {
                        clamps: a.diagnostics.clamp_events,
                        estimate: a.estimate,
                        gap: None,
                    }
                }
                EstimatorChoice::Both => {
                    let (a, o) = (adaptive()?, oracle()?);
                    let gap = a.estimate.iter().zip(&o.estimate).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                    Rep {
                        clamps: a.diagnostics.clamp_events,
                        estimate: a.estimate,
                        gap: Some(gap / model.spectrum().rate(model.n())),
                    }
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let s = model.spectrum();
    let target = asymptotic_fisher(model.sigma(), s.delta(), s.zeta_limit(), model.eta2().sqrt())?.quarter_inverse_z()?;
    let truth = model.sigma().vec().iter().copied().collect();
    assemble(cfg, reps, truth, s.rate(model.n()), target, start)
}

/// `R` replications of the block experiment (fast or end-to-end path)
/// followed by the integrated covolatility estimator, standardised by
/// `n_min^{1/4}` and compared with the integrated bound.
pub fn run_mc_semiparametric(cfg: &ExperimentConfig) -> Result<McReport> {
    expect_kind(cfg, ExperimentKind::McSemiparametric)?;
    if cfg.mc.estimator != EstimatorChoice::Adaptive {
        return Err(Error::Config("mc.estimator: the semiparametric run uses the adaptive estimator".into()));
    }
    let start = Instant::now();
    let (model, path, schedule) = cfg.model.block_model()?;
    let window = cfg.window;
    let p_max = block_p_max(&model, &window)?;
    let stream = SeedStream::new(cfg.seed);
    let truth: Vec<f64> = path
        .integral()
        .ok_or_else(|| Error::Config("model: the Σ path has no closed-form integral".into()))?
        .vec()
        .iter()
        .copied()
        .collect();
    let reps: Vec<Rep> = match cfg.mc.path {
        SemiPath::Fast => {
            let sampler = BlockSampler::new(&model)?;
            (0..cfg.replications as u64)
                .into_par_iter()
                .map(|rep| -> Result<Rep> {
                    let mut rng = stream.substream(purpose::BLOCK_SEQUENCE, &[rep]);
                    let data = sampler.sample(p_max, &mut rng)?;
                    let r = integrated_covol_estimate(&model, &data, &window, None)?;
                    Ok(Rep {
                        estimate: r.estimate,
                        gap: None,
                        clamps: r.diagnostics.clamp_events,
                    })
                })
                .collect::<Result<_>>()?
        }
        SemiPath::EndToEnd => {
            let grid = cfg.mc.grid_factor * schedule.n_max() as usize;
            let sampler = AsyncSampler::new(&model, &schedule, grid)?;
            (0..cfg.replications as u64)
                .into_par_iter()
                .map(|rep| -> Result<Rep> {
                    let mut path_rng = stream.substream(purpose::PATH, &[rep]);
                    let mut noise_rng = stream.substream(purpose::NOISE, &[rep]);
                    let ticks = sampler.sample(&mut path_rng, &mut noise_rng);
                    let data = block_coeffs_from_ticks(&ticks, &model, p_max)?;
                    let r = integrated_covol_estimate(&model, &data, &window, None)?;
                    Ok(Rep {
                        estimate: r.estimate,
                        gap: None,
                        clamps: r.diagnostics.clamp_events,
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    let target = integrated_bound(&model, None)?;
    let rate = (model.n_min() as f64).powf(-0.25);
    assemble(cfg, reps, truth, rate, target, start)
}

/// Runs whichever Monte Carlo experiment the config names.
pub fn run_mc(cfg: &ExperimentConfig) -> Result<McReport> {
    match cfg.kind {
        ExperimentKind::McParametric => run_mc_parametric(cfg),
        ExperimentKind::McSemiparametric => run_mc_semiparametric(cfg),
        other => Err(Error::Config(format!("kind: `{}` is not a Monte Carlo experiment", other.label()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::config::PerComponent;

    fn small_parametric() -> ExperimentConfig {
        let mut c = ExperimentConfig::new(ExperimentKind::McParametric);
        c.replications = 200;
        c.model.n = PerComponent::One(10_000);
        c.model.sigma = Some(vec![vec![1.0, 0.5], vec![0.5, 1.0]]);
        c
    }

    #[test]
    fn zero_replications_rejected() {
        let mut c = small_parametric();
        c.replications = 0;
        assert!(matches!(run_mc_parametric(&c), Err(Error::Config(_))));
    }

    #[test]
    fn wrong_kind_rejected() {
        let c = small_parametric();
        assert!(run_mc_semiparametric(&c).is_err());
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let c = small_parametric();
        let a = run_mc_parametric(&c).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_mc_parametric(&c)).unwrap();
        assert_eq!(a, b);
        assert!(a.wall_ms.is_none());
    }

    #[test]
    fn both_reports_gap() {
        let mut c = small_parametric();
        c.mc.estimator = EstimatorChoice::Both;
        let r = run_mc_parametric(&c).unwrap();
        let g = r.adaptive_oracle_gap.unwrap();
        assert!(g.median > 0.0 && g.median.is_finite());
    }

    #[test]
    fn constant_path_matches_parametric_scale() {
        let mut c = ExperimentConfig::new(ExperimentKind::McSemiparametric);
        c.replications = 200;
        c.model.n = PerComponent::One(100_000);
        c.model.m = 1;
        c.model.sigma = Some(vec![vec![1.0, 0.3], vec![0.3, 1.0]]);
        let r = run_mc_semiparametric(&c).unwrap();
        assert!(r.rel_frobenius_error < 0.3, "{}", r.rel_frobenius_error);
        assert!(r.z_scores.iter().all(|z| z.abs() < 4.0));
    }
}
