//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::WindowConfig;
use crate::lan::TrendCutoff;
use crate::matcore::SymMatrix;
use crate::model::{BlockModel, ComponentSchedule, ObservationSchedule, ParamModel, SigmaPath};
use crate::simulate::{DiscreteBackend, Kernel};
use crate::spectra::Spectrum;

/// Smallest replication count accepted without `force`.
pub const MIN_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    McParametric,
    McSemiparametric,
    Lan,
    FisherTable,
    EquivalenceTrend,
    SimulateDump,
    Estimate,
}

impl ExperimentKind {
    pub fn label(&self) -> &'static str {
        match self {
            ExperimentKind::McParametric => "mc-parametric",
            ExperimentKind::McSemiparametric => "mc-semiparametric",
            ExperimentKind::Lan => "lan",
            ExperimentKind::FisherTable => "fisher-table",
            ExperimentKind::EquivalenceTrend => "equivalence-trend",
            ExperimentKind::SimulateDump => "simulate-dump",
            ExperimentKind::Estimate => "estimate",
        }
    }
}

/// A scalar or one value per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerComponent<T> {
    One(T),
    Each(Vec<T>),
}

impl<T: Copy> PerComponent<T> {
    pub fn expand(&self, d: usize, name: &'static str) -> Result<Vec<T>> {
        match self {
            PerComponent::One(v) => Ok(vec![*v; d]),
            PerComponent::Each(v) if v.len() == d => Ok(v.clone()),
            PerComponent::Each(v) => Err(Error::param(name, format!("expected {d} values, got {}", v.len()))),
        }
    }

    pub fn first(&self) -> Option<T> {
        match self {
            PerComponent::One(v) => Some(*v),
            PerComponent::Each(v) => v.first().copied(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumName {
    #[default]
    Bm,
    Bb,
    Ou,
    Fbm,
    Ibm,
    Power,
}

impl std::str::FromStr for SpectrumName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "bm" => SpectrumName::Bm,
            "bb" => SpectrumName::Bb,
            "ou" => SpectrumName::Ou,
            "fbm" => SpectrumName::Fbm,
            "ibm" => SpectrumName::Ibm,
            "power" => SpectrumName::Power,
            _ => return Err(Error::Config(format!("spectrum: unknown name `{s}` (bm, bb, ou, fbm, ibm, power)"))),
        })
    }
}

/// Spectrum by name plus whichever parameters it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    #[serde(default)]
    pub name: SpectrumName,
    pub hurst: Option<f64>,
    pub beta: Option<f64>,
    pub folds: Option<u32>,
    pub c: Option<f64>,
    pub delta: Option<f64>,
}

fn need<T: Copy>(v: Option<T>, name: &'static str, spectrum: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("{name}: required for spectrum `{spectrum}`")))
}

impl SpectrumConfig {
    pub fn named(name: SpectrumName) -> Self {
        SpectrumConfig { name, ..Default::default() }
    }

    pub fn build(&self) -> Result<Spectrum> {
        match self.name {
            SpectrumName::Bm => Ok(Spectrum::brownian_motion()),
            SpectrumName::Bb => Ok(Spectrum::brownian_bridge()),
            SpectrumName::Ou => Spectrum::ornstein_uhlenbeck(need(self.beta, "beta", "ou")?),
            SpectrumName::Fbm => Spectrum::fractional_bm(need(self.hurst, "hurst", "fbm")?),
            SpectrumName::Ibm => Ok(Spectrum::integrated_bm(need(self.folds, "folds", "ibm")?)),
            SpectrumName::Power => Spectrum::power_law(need(self.c, "c", "power")?, need(self.delta, "delta", "power")?),
        }
    }

    /// Kernel of the driving process, where one exists.
    pub fn kernel(&self) -> Result<Kernel> {
        match self.name {
            SpectrumName::Bm => Ok(Kernel::BrownianMotion),
            SpectrumName::Bb => Ok(Kernel::BrownianBridge),
            SpectrumName::Ou => Ok(Kernel::OrnsteinUhlenbeck {
                beta: need(self.beta, "beta", "ou")?,
            }),
            SpectrumName::Fbm => Ok(Kernel::FractionalBm {
                hurst: need(self.hurst, "hurst", "fbm")?,
            }),
            _ => Err(Error::Config("spectrum: no time-domain kernel for this spectrum".into())),
        }
    }
}

/// Model parameters shared by all experiment kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    /// Dimension; inferred from `sigma` when omitted.
    pub d: Option<usize>,
    /// `Σ`, or `Σ(0)` for a semiparametric path. Default `I_d`.
    pub sigma: Option<Vec<Vec<f64>>>,
    /// `Σ(1)` of a linear path; constant path when omitted.
    pub sigma_end: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_eta")]
    pub eta: PerComponent<f64>,
    #[serde(default = "default_n")]
    pub n: PerComponent<u64>,
    /// Schedule shape `w_j` in `F_j(t) = (1−w_j)t + w_j t²`.
    #[serde(default = "default_w")]
    pub w: PerComponent<f64>,
    /// Block count of the semiparametric model.
    #[serde(default = "default_m")]
    pub m: usize,
    /// `S` of the parameter set; derived from `Σ` when omitted.
    pub s_bound: Option<f64>,
}

fn default_eta() -> PerComponent<f64> {
    PerComponent::One(1.0)
}
fn default_n() -> PerComponent<u64> {
    PerComponent::One(1_000_000)
}
fn default_w() -> PerComponent<f64> {
    PerComponent::One(0.0)
}
fn default_m() -> usize {
    20
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            spectrum: SpectrumConfig::default(),
            d: None,
            sigma: None,
            sigma_end: None,
            eta: default_eta(),
            n: default_n(),
            w: default_w(),
            m: default_m(),
            s_bound: None,
        }
    }
}

fn matrix(rows: &[Vec<f64>], name: &'static str) -> Result<SymMatrix> {
    let s = SymMatrix::from_rows(rows).map_err(|e| Error::Config(format!("{name}: {e}")))?;
    s.require_positive_definite().map_err(|e| Error::Config(format!("{name}: {e}")))?;
    Ok(s)
}

/// `max(2λ_max, 2/λ_min, 1)`-style bound that puts all given matrices strictly
/// inside `(1/S, S)`.
fn derived_bound(ms: &[&SymMatrix]) -> f64 {
    let mut s: f64 = 1.0;
    for m in ms {
        let e = m.eigen();
        s = s.max(2.0 * e.values[e.dim() - 1]).max(2.0 / e.values[0]);
    }
    s
}

impl ModelConfig {
    pub fn dim(&self) -> Result<usize> {
        let d = match (&self.d, &self.sigma) {
            (Some(d), Some(s)) if *d != s.len() => {
                return Err(Error::Config(format!("d: {d} disagrees with sigma of size {}", s.len())))
            }
            (Some(d), _) => *d,
            (None, Some(s)) => s.len(),
            (None, None) => 1,
        };
        if d == 0 {
            return Err(Error::Config("d: must be positive".into()));
        }
        Ok(d)
    }

    pub fn sigma(&self) -> Result<SymMatrix> {
        match &self.sigma {
            Some(rows) => matrix(rows, "sigma"),
            None => Ok(SymMatrix::identity(self.dim()?)),
        }
    }

    pub fn path(&self) -> Result<SigmaPath> {
        let s0 = self.sigma()?;
        match &self.sigma_end {
            None => Ok(SigmaPath::Constant(s0)),
            Some(rows) => {
                let s1 = matrix(rows, "sigma_end")?;
                SigmaPath::linear(s0, s1).map_err(|e| Error::Config(format!("sigma_end: {e}")))
            }
        }
    }

    fn scalar<T: Copy>(v: &PerComponent<T>, name: &'static str) -> Result<T> {
        match v {
            PerComponent::One(x) => Ok(*x),
            PerComponent::Each(_) => Err(Error::Config(format!("{name}: the parametric model takes a single value"))),
        }
    }

    pub fn param_model(&self) -> Result<ParamModel> {
        let sigma = self.sigma()?;
        let eta = Self::scalar(&self.eta, "eta")?;
        let n = Self::scalar(&self.n, "n")?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Config(format!("eta: must be positive, got {eta}")));
        }
        let spectrum = self.spectrum.build()?;
        let s = self.s_bound.unwrap_or_else(|| derived_bound(&[&sigma]));
        ParamModel::new(sigma, eta * eta, n, spectrum, s)
    }

    pub fn schedule(&self) -> Result<ObservationSchedule> {
        let d = self.dim()?;
        let eta = self.eta.expand(d, "eta")?;
        let n = self.n.expand(d, "n")?;
        let w = self.w.expand(d, "w")?;
        let comps = (0..d)
            .map(|j| ComponentSchedule::new(n[j], eta[j], w[j]))
            .collect::<Result<Vec<_>>>()?;
        ObservationSchedule::new(comps)
    }

    pub fn block_model(&self) -> Result<(BlockModel, SigmaPath, ObservationSchedule)> {
        let path = self.path()?;
        let schedule = self.schedule()?;
        let s = match self.s_bound {
            Some(s) => s,
            None => {
                let a = path.at(0.0);
                let b = path.at(1.0);
                derived_bound(&[&a, &b])
            }
        };
        let model = BlockModel::new(&path, &schedule, self.m, s)?;
        Ok((model, path, schedule))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorChoice {
    Oracle,
    #[default]
    Adaptive,
    /// Adaptive as the reported estimate, plus its distance to the oracle.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SemiPath {
    /// Sample the block sequence model directly.
    #[default]
    Fast,
    /// Simulate ticks and extract block coefficients.
    EndToEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default)]
    pub estimator: EstimatorChoice,
    #[serde(default)]
    pub path: SemiPath,
    /// Fine grid of the end-to-end path as a multiple of `max n_j`.
    #[serde(default = "default_grid_factor")]
    pub grid_factor: usize,
    /// Keep every replication's estimate in the report.
    #[serde(default = "default_true")]
    pub keep_estimates: bool,
}

fn default_grid_factor() -> usize {
    8
}
fn default_true() -> bool {
    true
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            estimator: EstimatorChoice::default(),
            path: SemiPath::default(),
            grid_factor: default_grid_factor(),
            keep_estimates: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LanConfig {
    /// Local perturbation `H`; default `I_d`.
    pub h: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivConfig {
    /// Spectrum compared against `model.spectrum`.
    #[serde(default = "default_alt")]
    pub alternative: SpectrumConfig,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<u64>,
    #[serde(default)]
    pub cutoff: TrendCutoff,
}

fn default_alt() -> SpectrumConfig {
    SpectrumConfig::named(SpectrumName::Bb)
}
fn default_n_list() -> Vec<u64> {
    vec![10_000, 1_000_000, 100_000_000]
}

impl Default for EquivConfig {
    fn default() -> Self {
        EquivConfig {
            alternative: default_alt(),
            n_list: default_n_list(),
            cutoff: TrendCutoff::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DumpKind {
    /// `Y_1..Y_P` of the sequence model.
    #[default]
    Sequence,
    /// Equidistant noisy observations.
    Discrete,
    /// Asynchronous tick series of the semiparametric model.
    Ticks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub what: DumpKind,
    /// Frequencies for `sequence`; defaults to the estimation window.
    pub p_max: Option<usize>,
    #[serde(default = "default_backend")]
    pub backend: DiscreteBackend,
}

fn default_backend() -> DiscreteBackend {
    DiscreteBackend::KarhunenLoeve
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            what: DumpKind::default(),
            p_max: None,
            backend: default_backend(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Accept fewer than 100 replications.
    #[serde(default)]
    pub force: bool,
    /// Record wall-clock time in reports (breaks byte-identity).
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub lan: LanConfig,
    #[serde(default)]
    pub equiv: EquivConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    /// Not part of the config echo: reports must not depend on where they go.
    #[serde(default, skip_serializing)]
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    42
}
fn default_replications() -> usize {
    1000
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            kind,
            seed: default_seed(),
            replications: default_replications(),
            force: false,
            record_timing: false,
            model: ModelConfig::default(),
            window: WindowConfig::default(),
            mc: McConfig::default(),
            lan: LanConfig::default(),
            equiv: EquivConfig::default(),
            simulate: SimulateConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn lan_h(&self) -> Result<SymMatrix> {
        match &self.lan.h {
            Some(rows) => SymMatrix::from_rows(rows).map_err(|e| Error::Config(format!("lan.h: {e}"))),
            None => Ok(SymMatrix::identity(self.model.dim()?)),
        }
    }

    /// Checks everything the run will need, in the order it is used, and
    /// reports the first violation.
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        let needs_reps = matches!(
            self.kind,
            ExperimentKind::McParametric | ExperimentKind::McSemiparametric | ExperimentKind::Lan
        );
        if needs_reps {
            if self.replications == 0 {
                return Err(Error::Config("replications: must be positive".into()));
            }
            if self.replications < MIN_REPLICATIONS && !self.force {
                return Err(Error::Config(format!(
                    "replications: {} is below {MIN_REPLICATIONS}; pass --force to run anyway",
                    self.replications
                )));
            }
        }
        match self.kind {
            ExperimentKind::McParametric | ExperimentKind::Estimate => {
                self.model.param_model()?;
            }
            ExperimentKind::McSemiparametric => {
                let (model, _, _) = self.model.block_model()?;
                if self.mc.grid_factor < 4 {
                    return Err(Error::Config("mc.grid_factor: must be at least 4".into()));
                }
                if self.window.split == crate::estimate::SplitMode::None {
                    return Err(Error::Config("window.split: the semiparametric estimator needs a split".into()));
                }
                crate::estimate::block_p_max(&model, &self.window)?;
            }
            ExperimentKind::Lan => {
                let m = self.model.param_model()?;
                let h = self.lan_h()?;
                if h.dim() != m.d() {
                    return Err(Error::Config(format!("lan.h: expected {}x{}", m.d(), m.d())));
                }
                let r = m.spectrum().rate(m.n());
                m.sigma().axpby(1.0, &h, r).require_positive_definite()?;
            }
            ExperimentKind::FisherTable => {
                self.model.sigma()?;
                self.model.spectrum.build()?;
                if let PerComponent::One(eta) = self.model.eta {
                    if !(eta > 0.0) {
                        return Err(Error::Config("eta: must be positive".into()));
                    }
                } else {
                    return Err(Error::Config("eta: the Fisher table takes a single value".into()));
                }
            }
            ExperimentKind::EquivalenceTrend => {
                self.model.spectrum.build()?;
                self.equiv.alternative.build()?;
                self.model.sigma()?;
                if self.equiv.n_list.len() < 2 || self.equiv.n_list.iter().any(|n| *n < 2) {
                    return Err(Error::Config("equiv.n_list: need at least two sizes, each >= 2".into()));
                }
            }
            ExperimentKind::SimulateDump => match self.simulate.what {
                DumpKind::Sequence => {
                    self.model.param_model()?;
                }
                DumpKind::Discrete => {
                    let m = self.model.param_model()?;
                    self.model.spectrum.kernel()?;
                    if m.n() > usize::MAX as u64 {
                        return Err(Error::Config("n: too large".into()));
                    }
                }
                DumpKind::Ticks => {
                    self.model.block_model()?;
                }
            },
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let c = ExperimentConfig::from_toml("kind = \"mc-parametric\"\n").unwrap();
        assert_eq!(c.kind, ExperimentKind::McParametric);
        assert_eq!(c.seed, 42);
        assert_eq!(c.replications, 1000);
        c.validate().unwrap();
    }

    #[test]
    fn parses_full_config() {
        let text = r#"
kind = "mc-semiparametric"
seed = 7
replications = 200

[model]
sigma = [[1.0, 0.3], [0.3, 1.0]]
sigma_end = [[1.5, 0.3], [0.3, 1.0]]
eta = [1.0, 0.5]
n = 1000000
m = 50

[model.spectrum]
name = "bm"

[window]
split = "parity"

[mc]
path = "end-to-end"
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        c.validate().unwrap();
        let (bm, _, sched) = c.model.block_model().unwrap();
        assert_eq!(bm.m(), 50);
        assert_eq!(sched.components()[1].eta, 0.5);
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejections_name_the_field() {
        let mut c = ExperimentConfig::new(ExperimentKind::McParametric);
        c.replications = 0;
        assert!(c.validate().unwrap_err().to_string().contains("replications"));
        c.replications = 50;
        assert!(c.validate().unwrap_err().to_string().contains("--force"));
        c.force = true;
        c.validate().unwrap();
        c.model.sigma = Some(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(c.validate().unwrap_err().to_string().contains("sigma"));
        assert!(ExperimentConfig::from_toml("kind = \"mc-parametric\"\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("kind = \"nope\"\n").is_err());
        let mut c = ExperimentConfig::new(ExperimentKind::McSemiparametric);
        c.model.n = PerComponent::One(100);
        c.model.m = 20;
        assert!(c.validate().unwrap_err().to_string().contains("m"));
    }

    #[test]
    fn spectrum_parameters_required() {
        let s = SpectrumConfig::named(SpectrumName::Fbm);
        assert!(s.build().unwrap_err().to_string().contains("hurst"));
        let s = SpectrumConfig {
            hurst: Some(0.7),
            ..s
        };
        assert!(s.build().is_ok());
    }
}
