//! Non-Monte-Carlo experiment kinds: Fisher tables, LAN, equivalence trends,
//! single estimates and raw simulation dumps.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bench::config::{DumpKind, ExperimentConfig, ExperimentKind, PerComponent};
use crate::error::{Error, Result};
use crate::estimate::{adaptive_estimate_data, oracle_estimate_data, EstimateReport, PreClamp, SeqDesign};
use crate::fisher::{asymptotic_eigenvalues, asymptotic_fisher, dmatrix_rows, spectral_window, FreqWindow, IntegralMode};
use crate::lan::{lan_diagnostic, spectrum_distance_trend, LanReport, TrendReport};
use crate::matcore::rel_frobenius;
use crate::rng::{purpose, SeedLineage, SeedStream};
use crate::simulate::{sample_async, sample_discrete, sample_sequence, SeqValues};

fn expect_kind(cfg: &ExperimentConfig, kinds: &[ExperimentKind]) -> Result<()> {
    if !kinds.contains(&cfg.kind) {
        return Err(Error::Config(format!("kind: `{}` cannot run here", cfg.kind.label())));
    }
    cfg.validate()
}

/// Finite-`n` comparison `r_n² I_n(Σ) Z` against `I(Σ) Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteN {
    pub n: u64,
    pub p_n: f64,
    pub r_n: f64,
    pub zeta_n: f64,
    pub rel_frobenius_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherTable {
    pub config: ExperimentConfig,
    pub d: usize,
    pub delta: f64,
    pub zeta: f64,
    pub eta: f64,
    /// `v_ij` in the eigenbasis of `Σ`.
    #[serde(with = "dmatrix_rows")]
    pub eigenvalues: DMatrix<f64>,
    /// `I(Σ)`.
    #[serde(with = "dmatrix_rows")]
    pub info: DMatrix<f64>,
    /// `¼ I(Σ)⁻¹ Z`.
    #[serde(with = "dmatrix_rows")]
    pub quarter_inverse_z: DMatrix<f64>,
    pub finite_n: FiniteN,
}

pub fn run_fisher(cfg: &ExperimentConfig) -> Result<FisherTable> {
    expect_kind(cfg, &[ExperimentKind::FisherTable])?;
    let sigma = cfg.model.sigma()?;
    let spectrum = cfg.model.spectrum.build()?;
    let eta = match cfg.model.eta {
        PerComponent::One(e) => e,
        _ => unreachable!("validated"),
    };
    let (delta, zeta) = (spectrum.delta(), spectrum.zeta_limit());
    let info = asymptotic_fisher(&sigma, delta, zeta, eta)?;
    let eig = asymptotic_eigenvalues(&sigma.eigen().values, delta, zeta, eta, IntegralMode::ClosedForm)?;
    let finite_n = match cfg.model.n.first() {
        Some(n) if n >= 2 => {
            let model = crate::model::ParamModel::with_default_bound(sigma.clone(), eta * eta, n, spectrum.clone())?;
            let rate = spectrum.rate_and_zeta(n)?;
            let full = spectral_window(&model, &FreqWindow::Full)?.to_dense();
            let z = crate::matcore::Symmetriser::new(sigma.dim());
            let scaled = z.right_apply(&full) * (rate.r_n * rate.r_n);
            FiniteN {
                n,
                p_n: rate.p_n,
                r_n: rate.r_n,
                zeta_n: rate.zeta,
                rel_frobenius_error: rel_frobenius(&scaled, &info.times_z()),
            }
        }
        _ => return Err(Error::Config("n: must be >= 2".into())),
    };
    Ok(FisherTable {
        config: cfg.clone(),
        d: sigma.dim(),
        delta,
        zeta,
        eta,
        eigenvalues: eig,
        quarter_inverse_z: info.quarter_inverse_z()?,
        info: info.matrix,
        finite_n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanRun {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub report: LanReport,
    pub wall_ms: Option<f64>,
}

pub fn run_lan(cfg: &ExperimentConfig) -> Result<LanRun> {
    expect_kind(cfg, &[ExperimentKind::Lan])?;
    let start = Instant::now();
    let model = cfg.model.param_model()?;
    let h = cfg.lan_h()?;
    let report = lan_diagnostic(&model, &h, cfg.replications, &SeedStream::new(cfg.seed))?;
    Ok(LanRun {
        config: cfg.clone(),
        seed: cfg.seed,
        report,
        wall_ms: cfg.record_timing.then(|| start.elapsed().as_secs_f64() * 1e3),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivRun {
    pub config: ExperimentConfig,
    pub report: TrendReport,
}

pub fn run_equiv(cfg: &ExperimentConfig) -> Result<EquivRun> {
    expect_kind(cfg, &[ExperimentKind::EquivalenceTrend])?;
    let s1 = cfg.model.spectrum.build()?;
    let s2 = cfg.equiv.alternative.build()?;
    let sigma = cfg.model.sigma()?;
    let eta = cfg.model.eta.first().unwrap_or(1.0);
    let report = spectrum_distance_trend(&s1, &s2, &sigma, eta, &cfg.equiv.n_list, cfg.equiv.cutoff)?;
    Ok(EquivRun { config: cfg.clone(), report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRun {
    pub config: ExperimentConfig,
    pub seed: u64,
    /// Whether the data came from a file rather than the seeded simulator.
    pub external_data: bool,
    pub adaptive: EstimateReport,
    /// Oracle at the configured `Σ` (only for simulated data).
    pub oracle: Option<EstimateReport>,
}

/// Adaptive (and, for simulated data, oracle) estimate from one sample.
pub fn run_estimate(cfg: &ExperimentConfig, data: Option<SeqValues>) -> Result<EstimateRun> {
    expect_kind(cfg, &[ExperimentKind::Estimate, ExperimentKind::McParametric])?;
    let model = cfg.model.param_model()?;
    let design = SeqDesign::from(&model);
    let external = data.is_some();
    let data = match data {
        Some(d) => d,
        None => {
            let p_max = cfg.window.upper_index(&design)?;
            let lineage = SeedLineage::new(SeedStream::new(cfg.seed), purpose::SEQUENCE, &[0]);
            sample_sequence(&model, p_max, lineage)?.data
        }
    };
    let adaptive = adaptive_estimate_data(&design, &data, &cfg.window, PreClamp::parametric(model.s_bound()))?;
    let oracle = if external {
        None
    } else {
        Some(oracle_estimate_data(&design, &data, model.sigma(), &cfg.window)?)
    };
    Ok(EstimateRun {
        config: cfg.clone(),
        seed: cfg.seed,
        external_data: external,
        adaptive,
        oracle,
    })
}

/// Reads `p,y_1,…,y_d` rows (header required, `p` running from 1).
pub fn read_sequence_csv<R: std::io::Read>(r: R) -> Result<SeqValues> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("input: {e}")))?;
        let vals = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("input row {}: {e}", i + 1))))
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() < 2 || vals[0] != (i + 1) as f64 {
            return Err(Error::Config(format!("input row {}: expected `p,y_1,...` with p = {}", i + 1, i + 1)));
        }
        rows.push(vals[1..].to_vec());
    }
    if rows.is_empty() {
        return Err(Error::Config("input: no rows".into()));
    }
    SeqValues::from_rows(&rows).map_err(|e| Error::Config(format!("input: {e}")))
}

pub fn write_sequence_csv<W: Write>(data: &SeqValues, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["p".to_string()];
    header.extend((1..=data.d).map(|j| format!("y_{j}")));
    out.write_record(&header).map_err(crate::simulate::csv_err)?;
    for p in 1..=data.p_max {
        let mut rec = vec![p.to_string()];
        rec.extend(data.y(p).iter().map(|v| serde_json::Value::from(*v).to_string()));
        out.write_record(&rec).map_err(crate::simulate::csv_err)?;
    }
    out.flush().map_err(crate::bench::report::io_err)
}

/// Writes one seeded sample as CSV.
pub fn run_simulate<W: Write>(cfg: &ExperimentConfig, w: W) -> Result<()> {
    expect_kind(cfg, &[ExperimentKind::SimulateDump])?;
    let stream = SeedStream::new(cfg.seed);
    match cfg.simulate.what {
        DumpKind::Sequence => {
            let model = cfg.model.param_model()?;
            let p_max = match cfg.simulate.p_max {
                Some(p) => p,
                None => cfg.window.upper_index(&SeqDesign::from(&model))?,
            };
            let s = sample_sequence(&model, p_max, SeedLineage::new(stream, purpose::SEQUENCE, &[0]))?;
            write_sequence_csv(&s.data, w)
        }
        DumpKind::Discrete => {
            let model = cfg.model.param_model()?;
            let kernel = cfg.model.spectrum.kernel()?;
            let lineage = SeedLineage::new(stream, purpose::DISCRETE, &[0]);
            let s = sample_discrete(model.sigma(), kernel, model.n() as usize, model.eta2(), cfg.simulate.backend, &lineage)?;
            s.write_csv(w)
        }
        DumpKind::Ticks => {
            let (model, _, schedule) = cfg.model.block_model()?;
            let grid = cfg.mc.grid_factor * schedule.n_max() as usize;
            let path = SeedLineage::new(stream, purpose::PATH, &[0]);
            let noise = SeedLineage::new(stream, purpose::NOISE, &[0]);
            sample_async(&model, &schedule, grid, &path, &noise)?.write_csv(w)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::config::SpectrumConfig;

    #[test]
    fn fisher_table_bm_scalar() {
        let mut c = ExperimentConfig::new(ExperimentKind::FisherTable);
        c.model.n = PerComponent::One(1_000_000);
        let t = run_fisher(&c).unwrap();
        assert!((t.info[(0, 0)] - 0.0625).abs() < 1e-14);
        assert!((t.quarter_inverse_z[(0, 0)] - 8.0).abs() < 1e-12);
        assert!(t.finite_n.rel_frobenius_error < 0.01);
    }

    #[test]
    fn sequence_csv_round_trip() {
        let data = SeqValues::from_rows(&[vec![0.1, -2.5e-7], vec![1.0 / 3.0, 4.0]]).unwrap();
        let mut buf = Vec::new();
        write_sequence_csv(&data, &mut buf).unwrap();
        let back = read_sequence_csv(&buf[..]).unwrap();
        assert_eq!(back, data);
        assert!(read_sequence_csv("p,y_1\n2,1.0\n".as_bytes()).is_err());
    }

    #[test]
    fn equiv_defaults() {
        let c = ExperimentConfig::new(ExperimentKind::EquivalenceTrend);
        let r = run_equiv(&c).unwrap();
        assert_eq!(r.report.verdict, crate::lan::TrendVerdict::Vanishing);
        let mut c = c;
        c.equiv.alternative = SpectrumConfig {
            hurst: Some(0.7),
            ..SpectrumConfig::named(crate::bench::config::SpectrumName::Fbm)
        };
        assert_eq!(run_equiv(&c).unwrap().report.verdict, crate::lan::TrendVerdict::Diverging);
    }

    #[test]
    fn estimate_from_simulation() {
        let mut c = ExperimentConfig::new(ExperimentKind::Estimate);
        c.model.n = PerComponent::One(10_000);
        let r = run_estimate(&c, None).unwrap();
        assert!(r.oracle.is_some());
        assert!((r.adaptive.estimate[0] - 1.0).abs() < 0.5);
    }
}
