//! Model descriptions: the parametric sequence experiment, observation
//! schedules and the semiparametric block model.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::SymMatrix;
use crate::spectra::Spectrum;

/// The parametric experiment `Y_p ~ N(0, Σλ_p + (η²/n) I_d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamModel {
    sigma: SymMatrix,
    eta2: f64,
    n: u64,
    spectrum: Spectrum,
    s_bound: f64,
}

impl ParamModel {
    /// Requires `0 < Σ < S·I`, `η² > 0` and `n >= 2`.
    pub fn new(sigma: SymMatrix, eta2: f64, n: u64, spectrum: Spectrum, s_bound: f64) -> Result<Self> {
        if !(eta2 > 0.0 && eta2.is_finite()) {
            return Err(Error::param("eta2", format!("must be positive, got {eta2}")));
        }
        if n < 2 {
            return Err(Error::param("n", format!("must be >= 2, got {n}")));
        }
        if !(s_bound > 0.0 && s_bound.is_finite()) {
            return Err(Error::param("s_bound", format!("must be positive, got {s_bound}")));
        }
        sigma.require_positive_definite()?;
        let top = *sigma.eigen().values.last().unwrap();
        if top >= s_bound {
            return Err(Error::param(
                "sigma",
                format!("largest eigenvalue {top} is not below the bound S = {s_bound}"),
            ));
        }
        Ok(ParamModel {
            sigma,
            eta2,
            n,
            spectrum,
            s_bound,
        })
    }

    /// Uses `S = 2·λ_max(Σ)` (at least 1).
    pub fn with_default_bound(sigma: SymMatrix, eta2: f64, n: u64, spectrum: Spectrum) -> Result<Self> {
        let top = sigma.eigen().values.last().copied().unwrap_or(1.0);
        Self::new(sigma, eta2, n, spectrum, (2.0 * top).max(1.0))
    }

    /// Same experiment at another parameter value.
    pub fn with_sigma(&self, sigma: SymMatrix) -> Result<Self> {
        if sigma.dim() != self.d() {
            return Err(Error::dims(self.d(), sigma.dim()));
        }
        sigma.require_positive_definite()?;
        Ok(ParamModel {
            sigma,
            ..self.clone()
        })
    }

    pub fn d(&self) -> usize {
        self.sigma.dim()
    }

    pub fn sigma(&self) -> &SymMatrix {
        &self.sigma
    }

    pub fn eta2(&self) -> f64 {
        self.eta2
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn s_bound(&self) -> f64 {
        self.s_bound
    }

    /// `η²/n`.
    pub fn noise_level(&self) -> f64 {
        self.eta2 / self.n as f64
    }

    pub fn eigenvalue(&self, p: usize) -> Result<f64> {
        self.spectrum.eigenvalue(p)
    }

    pub fn balance_index(&self) -> Result<f64> {
        self.spectrum.balance_index(self.n)
    }

    /// `C_p = Σλ_p + (η²/n) I_d`.
    pub fn cov_block(&self, p: usize) -> Result<SymMatrix> {
        let lam = self.eigenvalue(p)?;
        let d = self.d();
        let noise = SymMatrix::scaled_identity(d, self.noise_level());
        Ok(self.sigma.axpby(lam, &noise, 1.0))
    }
}

/// One component's sampling design: `n_j` ticks at `t_i = F⁻¹(i/n_j)` with
/// `F(t) = (1−w)t + wt²`, observed with noise standard deviation `η_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentSchedule {
    pub n: u64,
    pub eta: f64,
    #[serde(default)]
    pub w: f64,
}

impl ComponentSchedule {
    pub fn new(n: u64, eta: f64, w: f64) -> Result<Self> {
        let s = ComponentSchedule { n, eta, w };
        s.validate()?;
        Ok(s)
    }

    pub fn uniform(n: u64, eta: f64) -> Self {
        ComponentSchedule { n, eta, w: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::param("n_j", format!("must be >= 2, got {}", self.n)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::param("eta_j", format!("must be positive, got {}", self.eta)));
        }
        if !(0.0..1.0).contains(&self.w) {
            return Err(Error::param("w_j", format!("must lie in [0, 1), got {}", self.w)));
        }
        Ok(())
    }

    pub fn cdf(&self, t: f64) -> f64 {
        (1.0 - self.w) * t + self.w * t * t
    }

    pub fn density(&self, t: f64) -> f64 {
        (1.0 - self.w) + 2.0 * self.w * t
    }

    /// `F⁻¹(u)`, the positive root of `wt² + (1−w)t − u = 0`.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let b = 1.0 - self.w;
        2.0 * u / (b + (b * b + 4.0 * self.w * u).sqrt())
    }

    /// Tick times `t_1 < … < t_n = 1`.
    pub fn ticks(&self) -> Vec<f64> {
        let n = self.n as f64;
        let mut t: Vec<f64> = (1..=self.n).map(|i| self.inverse_cdf(i as f64 / n)).collect();
        *t.last_mut().unwrap() = 1.0;
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSchedule {
    components: Vec<ComponentSchedule>,
}

impl ObservationSchedule {
    pub fn new(components: Vec<ComponentSchedule>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::param("schedule", "needs at least one component"));
        }
        for c in &components {
            c.validate()?;
        }
        Ok(ObservationSchedule { components })
    }

    pub fn uniform(d: usize, n: u64, eta: f64) -> Self {
        ObservationSchedule {
            components: vec![ComponentSchedule::uniform(n, eta); d],
        }
    }

    pub fn d(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[ComponentSchedule] {
        &self.components
    }

    pub fn n_min(&self) -> u64 {
        self.components.iter().map(|c| c.n).min().unwrap()
    }

    pub fn n_max(&self) -> u64 {
        self.components.iter().map(|c| c.n).max().unwrap()
    }

    /// `ν_j = n_min / n_j`.
    pub fn nu(&self) -> Vec<f64> {
        let n_min = self.n_min() as f64;
        self.components.iter().map(|c| n_min / c.n as f64).collect()
    }

    /// Diagonal of `Ξ²(t) = diag(η_j² ν_j / F'_j(t))`.
    pub fn xi2(&self, t: f64) -> Vec<f64> {
        self.components
            .iter()
            .zip(self.nu())
            .map(|(c, nu)| c.eta * c.eta * nu / c.density(t))
            .collect()
    }
}

/// A covolatility path `t ↦ Σ(t)` on `[0, 1]`.
#[derive(Clone)]
pub enum SigmaPath {
    Constant(SymMatrix),
    /// `Σ(t) = (1−t)·at0 + t·at1`.
    Linear { at0: SymMatrix, at1: SymMatrix },
    Custom(Arc<dyn Fn(f64) -> SymMatrix + Send + Sync>),
}

impl fmt::Debug for SigmaPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaPath::Constant(s) => f.debug_tuple("Constant").field(s).finish(),
            SigmaPath::Linear { at0, at1 } => f.debug_struct("Linear").field("at0", at0).field("at1", at1).finish(),
            SigmaPath::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl SigmaPath {
    pub fn linear(at0: SymMatrix, at1: SymMatrix) -> Result<Self> {
        if at0.dim() != at1.dim() {
            return Err(Error::dims(at0.dim(), at1.dim()));
        }
        Ok(SigmaPath::Linear { at0, at1 })
    }

    pub fn at(&self, t: f64) -> SymMatrix {
        match self {
            SigmaPath::Constant(s) => s.clone(),
            SigmaPath::Linear { at0, at1 } => at0.axpby(1.0 - t, at1, t),
            SigmaPath::Custom(f) => f(t),
        }
    }

    pub fn d(&self) -> usize {
        self.at(0.0).dim()
    }

    /// `∫₀¹ Σ(t) dt` when it has a closed form.
    pub fn integral(&self) -> Option<SymMatrix> {
        match self {
            SigmaPath::Constant(s) => Some(s.clone()),
            SigmaPath::Linear { at0, at1 } => Some(at0.axpby(0.5, at1, 0.5)),
            SigmaPath::Custom(_) => None,
        }
    }
}

/// The semiparametric experiment on `m` blocks:
/// `Y_pk ~ N(0, Σ_k λ_mp + n_min⁻¹ Ξ_k²)` with `λ_mp = (πpm)⁻²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockModel {
    sigma: Vec<SymMatrix>,
    xi2: Vec<Vec<f64>>,
    n_min: u64,
    s_bound: f64,
}

impl BlockModel {
    /// Evaluates `Σ` and `Ξ²` at the block left endpoints `k/m`.
    pub fn new(path: &SigmaPath, schedule: &ObservationSchedule, m: usize, s_bound: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::param("m", "must be positive"));
        }
        if path.d() != schedule.d() {
            return Err(Error::dims(path.d(), schedule.d()));
        }
        let sigma = (0..m).map(|k| path.at(k as f64 / m as f64)).collect();
        let xi2 = (0..m).map(|k| schedule.xi2(k as f64 / m as f64)).collect();
        Self::from_parts(sigma, xi2, schedule.n_min(), s_bound)
    }

    pub fn from_parts(sigma: Vec<SymMatrix>, xi2: Vec<Vec<f64>>, n_min: u64, s_bound: f64) -> Result<Self> {
        let m = sigma.len();
        if m == 0 || xi2.len() != m {
            return Err(Error::dims(m, xi2.len()));
        }
        if !(s_bound > 1.0 && s_bound.is_finite()) {
            return Err(Error::param("s_bound", format!("must exceed 1, got {s_bound}")));
        }
        if (m as f64) >= (n_min as f64).sqrt() {
            return Err(Error::param(
                "m",
                format!("must satisfy m < sqrt(n_min) = {:.3}, got {m}", (n_min as f64).sqrt()),
            ));
        }
        let d = sigma[0].dim();
        for (k, (s, x)) in sigma.iter().zip(&xi2).enumerate() {
            if s.dim() != d || x.len() != d {
                return Err(Error::InBlock {
                    block: k,
                    source: Box::new(Error::dims(d, format!("{} / {}", s.dim(), x.len()))),
                });
            }
            if x.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InBlock {
                    block: k,
                    source: Box::new(Error::param("xi2", "entries must be positive")),
                });
            }
            let e = s.eigen();
            let (lo, hi) = (e.values[0], e.values[d - 1]);
            if !(lo > 1.0 / s_bound && hi < s_bound) {
                return Err(Error::InBlock {
                    block: k,
                    source: Box::new(Error::param(
                        "sigma",
                        format!("eigenvalues [{lo}, {hi}] leave (1/S, S) with S = {s_bound}"),
                    )),
                });
            }
        }
        Ok(BlockModel {
            sigma,
            xi2,
            n_min,
            s_bound,
        })
    }

    pub fn m(&self) -> usize {
        self.sigma.len()
    }

    pub fn d(&self) -> usize {
        self.sigma[0].dim()
    }

    pub fn n_min(&self) -> u64 {
        self.n_min
    }

    pub fn s_bound(&self) -> f64 {
        self.s_bound
    }

    pub fn sigma(&self, k: usize) -> &SymMatrix {
        &self.sigma[k]
    }

    pub fn sigmas(&self) -> &[SymMatrix] {
        &self.sigma
    }

    pub fn xi2(&self, k: usize) -> &[f64] {
        &self.xi2[k]
    }

    /// `λ_mp = (πpm)⁻²`.
    pub fn lambda(&self, p: usize) -> Result<f64> {
        if p < 1 {
            return Err(Error::InvalidFrequency(p));
        }
        Ok((PI * p as f64 * self.m() as f64).powi(-2))
    }

    /// The spectrum `p ↦ λ_mp`, i.e. a power law with `c = (πm)⁻²`, `δ = 2`.
    pub fn block_spectrum(&self) -> Spectrum {
        Spectrum::power_law((PI * self.m() as f64).powi(-2), 2.0).expect("valid power law")
    }

    /// `C_pk = Σ_k λ_mp + n_min⁻¹ Ξ_k²`.
    pub fn cov_block(&self, p: usize, k: usize) -> Result<SymMatrix> {
        let lam = self.lambda(p)?;
        let noise: Vec<f64> = self.xi2[k].iter().map(|x| x / self.n_min as f64).collect();
        Ok(self.sigma[k].axpby(lam, &SymMatrix::from_diagonal(&noise), 1.0))
    }

    /// `∫₀¹ Σ_m(t) dt = (1/m) Σ_k Σ_k` for the piecewise-constant path.
    pub fn mean_sigma(&self) -> SymMatrix {
        let m = self.m() as f64;
        let mut acc = self.sigma[0].scale(1.0 / m);
        for s in &self.sigma[1..] {
            acc = acc.axpby(1.0, s, 1.0 / m);
        }
        acc
    }
}
