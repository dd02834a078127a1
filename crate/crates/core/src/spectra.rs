//! Eigenvalue models for the covariance operator of the driving process,
//! together with the balance index `p_n`, the rate `r_n` and the constant `ζ`.
//!
//! Every built-in model is a (possibly shifted) power law `λ(p) ≈ c·p^{-δ}`;
//! only the leading term is modelled for fBM, OU and integrated BM.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Lower end of the Hurst range for which the discrete and sequence-space
/// experiments are known to be equivalent.
pub const FBM_VALIDATED_MIN_HURST: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectrumKind {
    /// `λ_p = (π(p − ½))^{-2}`
    BrownianMotion,
    /// `λ_p = (πp)^{-2}`
    BrownianBridge,
    /// Leading term `2β/(pπ)²`.
    OrnsteinUhlenbeck { beta: f64 },
    /// Leading term `sin(Hπ)Γ(2H+1)/(πp)^{2H+1}`.
    FractionalBm { hurst: f64 },
    /// Leading term `(πp)^{-(2m+2)}` for the `m`-fold integrated BM.
    IntegratedBm { folds: u32 },
    /// `λ_p = c·p^{-δ}`.
    PowerLaw { c: f64, delta: f64 },
    /// Explicit values for `p = 1..=values.len()`, then `c·p^{-δ}`.
    Tabulated { values: Vec<f64>, c: f64, delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    kind: SpectrumKind,
    /// Set when an fBM with `H <= 1/4` was requested explicitly.
    #[serde(default)]
    unvalidated_regime: bool,
}

impl Spectrum {
    pub fn brownian_motion() -> Self {
        Self::plain(SpectrumKind::BrownianMotion)
    }

    pub fn brownian_bridge() -> Self {
        Self::plain(SpectrumKind::BrownianBridge)
    }

    pub fn ornstein_uhlenbeck(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::param("beta", format!("must be positive, got {beta}")));
        }
        Ok(Self::plain(SpectrumKind::OrnsteinUhlenbeck { beta }))
    }

    /// fBM with `H ∈ (1/4, 1)`.
    pub fn fractional_bm(hurst: f64) -> Result<Self> {
        if !(hurst > FBM_VALIDATED_MIN_HURST && hurst < 1.0) {
            return Err(Error::param(
                "hurst",
                format!("must lie in (1/4, 1) (use fractional_bm_unvalidated below 1/4), got {hurst}"),
            ));
        }
        Ok(Self::plain(SpectrumKind::FractionalBm { hurst }))
    }

    /// fBM with any `H ∈ (0, 1)`; `H <= 1/4` is flagged as unvalidated.
    pub fn fractional_bm_unvalidated(hurst: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::param("hurst", format!("must lie in (0, 1), got {hurst}")));
        }
        Ok(Spectrum {
            kind: SpectrumKind::FractionalBm { hurst },
            unvalidated_regime: hurst <= FBM_VALIDATED_MIN_HURST,
        })
    }

    pub fn integrated_bm(folds: u32) -> Self {
        Self::plain(SpectrumKind::IntegratedBm { folds })
    }

    pub fn power_law(c: f64, delta: f64) -> Result<Self> {
        check_power(c, delta)?;
        Ok(Self::plain(SpectrumKind::PowerLaw { c, delta }))
    }

    /// Tabulated head followed by a `c·p^{-δ}` tail. The head must be
    /// positive and non-increasing and must not lie below the tail at the
    /// junction.
    pub fn tabulated(values: Vec<f64>, c: f64, delta: f64) -> Result<Self> {
        check_power(c, delta)?;
        if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::param("values", "entries must be positive and finite"));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::param("values", "entries must be non-increasing"));
        }
        if let Some(last) = values.last() {
            let next = c * ((values.len() + 1) as f64).powf(-delta);
            if next > *last {
                return Err(Error::param("values", "tail exceeds the last tabulated value"));
            }
        }
        Ok(Self::plain(SpectrumKind::Tabulated { values, c, delta }))
    }

    /// Re-checks the invariants of a deserialised spectrum.
    pub fn validated(self) -> Result<Self> {
        let unvalidated = self.unvalidated_regime;
        let s = match self.kind {
            SpectrumKind::BrownianMotion => Self::brownian_motion(),
            SpectrumKind::BrownianBridge => Self::brownian_bridge(),
            SpectrumKind::OrnsteinUhlenbeck { beta } => Self::ornstein_uhlenbeck(beta)?,
            SpectrumKind::FractionalBm { hurst } if unvalidated => Self::fractional_bm_unvalidated(hurst)?,
            SpectrumKind::FractionalBm { hurst } => Self::fractional_bm(hurst)?,
            SpectrumKind::IntegratedBm { folds } => Self::integrated_bm(folds),
            SpectrumKind::PowerLaw { c, delta } => Self::power_law(c, delta)?,
            SpectrumKind::Tabulated { values, c, delta } => Self::tabulated(values, c, delta)?,
        };
        Ok(s)
    }

    fn plain(kind: SpectrumKind) -> Self {
        Spectrum {
            kind,
            unvalidated_regime: false,
        }
    }

    pub fn kind(&self) -> &SpectrumKind {
        &self.kind
    }

    pub fn is_unvalidated_regime(&self) -> bool {
        self.unvalidated_regime
    }

    /// Regular-variation index `δ > 1`.
    pub fn delta(&self) -> f64 {
        match &self.kind {
            SpectrumKind::BrownianMotion
            | SpectrumKind::BrownianBridge
            | SpectrumKind::OrnsteinUhlenbeck { .. } => 2.0,
            SpectrumKind::FractionalBm { hurst } => 2.0 * hurst + 1.0,
            SpectrumKind::IntegratedBm { folds } => 2.0 * *folds as f64 + 2.0,
            SpectrumKind::PowerLaw { delta, .. } | SpectrumKind::Tabulated { delta, .. } => *delta,
        }
    }

    /// Constant `c` of the leading term `c·p^{-δ}`, i.e. `lim p^δ λ_p`.
    pub fn leading_constant(&self) -> f64 {
        match &self.kind {
            SpectrumKind::BrownianMotion | SpectrumKind::BrownianBridge => PI.powi(-2),
            SpectrumKind::OrnsteinUhlenbeck { beta } => 2.0 * beta / (PI * PI),
            SpectrumKind::FractionalBm { hurst } => {
                let h = *hurst;
                (h * PI).sin() * gamma(2.0 * h + 1.0) / PI.powf(2.0 * h + 1.0)
            }
            SpectrumKind::IntegratedBm { folds } => PI.powf(-(2.0 * *folds as f64 + 2.0)),
            SpectrumKind::PowerLaw { c, .. } | SpectrumKind::Tabulated { c, .. } => *c,
        }
    }

    /// `λ_p` for an integer frequency `p >= 1`.
    pub fn eigenvalue(&self, p: usize) -> Result<f64> {
        if p < 1 {
            return Err(Error::InvalidFrequency(p));
        }
        Ok(self.eigenvalue_at(p as f64))
    }

    /// Continuous, non-increasing interpolation `λ(x)` for real `x >= 1`
    /// (closed form for built-ins, log-linear between tabulated points).
    pub fn eigenvalue_at(&self, x: f64) -> f64 {
        match &self.kind {
            SpectrumKind::BrownianMotion => (PI * (x - 0.5)).powi(-2),
            SpectrumKind::Tabulated { values, c, delta } => {
                let k = values.len();
                if k == 0 || x > k as f64 {
                    // junction between the last tabulated point and the tail
                    if k > 0 && x < (k + 1) as f64 {
                        let lo = values[k - 1].ln();
                        let hi = (c * ((k + 1) as f64).powf(-delta)).ln();
                        let t = x - k as f64;
                        return (lo + t * (hi - lo)).exp();
                    }
                    return c * x.powf(-delta);
                }
                if x <= 1.0 {
                    return values[0];
                }
                let i = x.floor() as usize; // 1-based left point
                if i >= k {
                    return values[k - 1];
                }
                let t = x - i as f64;
                let lo = values[i - 1].ln();
                let hi = values[i].ln();
                (lo + t * (hi - lo)).exp()
            }
            _ => self.leading_constant() * x.powf(-self.delta()),
        }
    }

    /// `∫_x^∞ λ(t)² dt`, an upper bound for `Σ_{p>x} λ_p²` (λ non-increasing).
    pub fn tail_square_integral(&self, x: f64) -> f64 {
        let delta = self.delta();
        match &self.kind {
            SpectrumKind::BrownianMotion => PI.powi(-4) * (x - 0.5).powi(-3) / 3.0,
            SpectrumKind::Tabulated { values, c, .. } if x < (values.len() + 1) as f64 => {
                let k = values.len();
                let mut s: f64 = values.iter().skip(x.floor().max(0.0) as usize).map(|v| v * v).sum();
                s += values[k - 1].powi(2);
                let y = (k + 1) as f64;
                s + c * c * y.powf(1.0 - 2.0 * delta) / (2.0 * delta - 1.0)
            }
            _ => {
                let c = self.leading_constant();
                c * c * x.powf(1.0 - 2.0 * delta) / (2.0 * delta - 1.0)
            }
        }
    }

    fn closed_form_balance(&self, n: f64) -> Option<f64> {
        match &self.kind {
            SpectrumKind::BrownianMotion => Some(n.sqrt() / PI + 0.5),
            SpectrumKind::Tabulated { .. } => None,
            _ => Some((self.leading_constant() * n).powf(1.0 / self.delta())),
        }
    }

    /// Balance index `p_n` solving `λ(p_n) = 1/n` on the continuous
    /// interpolation. Closed form for power laws, bisection otherwise.
    pub fn balance_index(&self, n: u64) -> Result<f64> {
        if n < 2 {
            return Err(Error::param("n", format!("must be >= 2, got {n}")));
        }
        let n = n as f64;
        match self.closed_form_balance(n) {
            Some(p) => Ok(p),
            None => self.balance_index_bisection(n),
        }
    }

    /// Bisection on `[1, n]` to relative tolerance `1e-12`; exposed so the
    /// closed forms can be checked against it.
    pub fn balance_index_bisection(&self, n: f64) -> Result<f64> {
        let target = 1.0 / n;
        let f = |x: f64| self.eigenvalue_at(x).ln() - target.ln();
        let (mut lo, mut hi) = (1.0_f64, n.max(1.0));
        if f(lo) < 0.0 || f(hi) > 0.0 {
            return Err(Error::NoRoot { lo, hi });
        }
        while (hi - lo) > 1e-12 * hi {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `r_n = n^{-1/(2δ)}`.
    pub fn rate(&self, n: u64) -> f64 {
        (n as f64).powf(-1.0 / (2.0 * self.delta()))
    }

    /// Finite-n constant `ζ(n) = r_n²·p_n = n^{-1/δ}·p_n`.
    pub fn zeta_at(&self, n: u64) -> Result<f64> {
        Ok((n as f64).powf(-1.0 / self.delta()) * self.balance_index(n)?)
    }

    /// `lim ζ(n) = c^{1/δ}` for a leading term `c·p^{-δ}`.
    pub fn zeta_limit(&self) -> f64 {
        self.leading_constant().powf(1.0 / self.delta())
    }

    pub fn rate_and_zeta(&self, n: u64) -> Result<RateInfo> {
        let p_n = self.balance_index(n)?;
        let r_n = self.rate(n);
        let zeta = r_n * r_n * p_n;
        let mut convergence = Vec::with_capacity(3);
        for k in [1u64, 10, 100] {
            let nk = n.saturating_mul(k);
            convergence.push(ZetaPoint {
                n: nk,
                zeta: self.zeta_at(nk)?,
            });
        }
        Ok(RateInfo {
            n,
            p_n,
            r_n,
            zeta,
            zeta_limit: self.zeta_limit(),
            convergence,
        })
    }

    /// Empirical check of `λ_{⌊ap⌋}/λ_p → a^{-δ}` at `p = p_probe`, plus the
    /// closure properties for `λ²` (index `-2δ`) and `1/λ` (index `+δ`).
    pub fn check_regular_variation(&self, a_values: &[f64], p_probe: usize, tol: f64) -> Result<RegVarReport> {
        if p_probe < 1 {
            return Err(Error::InvalidFrequency(p_probe));
        }
        let delta = self.delta();
        let lam_p = self.eigenvalue(p_probe)?;
        let mut entries = Vec::new();
        for &a in a_values {
            if !(a > 0.0) {
                return Err(Error::param("a", format!("must be positive, got {a}")));
            }
            let q = ((a * p_probe as f64).floor() as usize).max(1);
            let ratio = self.eigenvalue(q)? / lam_p;
            for (transform, observed, expected) in [
                (Transform::Identity, ratio, a.powf(-delta)),
                (Transform::Square, ratio * ratio, a.powf(-2.0 * delta)),
                (Transform::Reciprocal, 1.0 / ratio, a.powf(delta)),
            ] {
                entries.push(RegVarEntry {
                    a,
                    transform,
                    observed,
                    expected,
                    pass: (observed - expected).abs() < tol * expected.max(1.0),
                });
            }
        }
        Ok(RegVarReport {
            p_probe,
            delta,
            tol,
            entries,
        })
    }
}

fn check_power(c: f64, delta: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param("c", format!("must be positive, got {c}")));
    }
    if !(delta > 1.0 && delta.is_finite()) {
        return Err(Error::param("delta", format!("must exceed 1, got {delta}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaPoint {
    pub n: u64,
    pub zeta: f64,
}

/// Balance index, rate and `ζ` at a given `n`, with `ζ(n)` at `n·{1,10,100}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateInfo {
    pub n: u64,
    pub p_n: f64,
    pub r_n: f64,
    pub zeta: f64,
    pub zeta_limit: f64,
    pub convergence: Vec<ZetaPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Square,
    Reciprocal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegVarEntry {
    pub a: f64,
    pub transform: Transform,
    pub observed: f64,
    pub expected: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegVarReport {
    pub p_probe: usize,
    pub delta: f64,
    pub tol: f64,
    pub entries: Vec<RegVarEntry>,
}

impl RegVarReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }
}
