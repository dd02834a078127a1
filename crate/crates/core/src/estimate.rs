//! Spectral estimators of `vec(Σ)`.
//!
//! All weighted averages are evaluated in the eigenbasis of the weighting
//! matrix `Σ_w = Qᵀ diag(s) Q`: with `Y'_p = Q Y_p` the weights `W_p(Σ_w)`
//! act entrywise on `Q θ̂_p Qᵀ` with factors `D_ij(p) / Σ_{p'} D_ij(p')`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::{dmatrix_rows, spectral_term, Compensated, SpectralFisher};
use crate::matcore::{kron, psd_sqrt, Eigen, SymMatrix, Symmetriser};
use crate::model::{BlockModel, ParamModel};
use crate::simulate::{BlockValues, SeqSample, SeqValues};
use crate::spectra::Spectrum;

/// Default lower clamp for the parametric pre-estimate.
pub const PRE_CLAMP_FLOOR: f64 = 1e-6;

/// What the estimators need to know about the experiment besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqDesign {
    pub d: usize,
    pub spectrum: Spectrum,
    pub eta2: f64,
    pub n: u64,
}

impl SeqDesign {
    pub fn noise_level(&self) -> f64 {
        self.eta2 / self.n as f64
    }
}

impl From<&ParamModel> for SeqDesign {
    fn from(m: &ParamModel) -> Self {
        SeqDesign {
            d: m.d(),
            spectrum: m.spectrum().clone(),
            eta2: m.eta2(),
            n: m.n(),
        }
    }
}

/// How the window is divided between main and pre-estimation frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// One window, no pre-estimation subset.
    None,
    /// Main = even indices, pre = odd indices.
    Parity,
    /// Even indices weighted by an odd-based pre-estimate and vice versa; the
    /// two halves are averaged.
    #[default]
    CrossFit,
}

/// Window `[a·p_c, b·p_c] ∩ ℕ` around a centre `p_c` (the balance index
/// unless overridden). `a = None` starts at `p = 1`, `b = None` means `ln n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct WindowConfig {
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub split: SplitMode,
    #[serde(default)]
    pub centre: Option<f64>,
    /// Block estimator only: pre-estimates are averaged over blocks
    /// `k − r ..= k + r`. `None` picks `r` from the design.
    #[serde(default)]
    pub pilot_radius: Option<usize>,
}

impl WindowConfig {
    pub fn new(a: Option<f64>, b: Option<f64>, split: SplitMode) -> Result<Self> {
        let w = WindowConfig {
            a,
            b,
            split,
            centre: None,
            pilot_radius: None,
        };
        w.validate()?;
        Ok(w)
    }

    /// `a = 1/ln n`, `b = ln n`.
    pub fn logarithmic(n: u64, split: SplitMode) -> Self {
        let l = (n as f64).ln();
        WindowConfig {
            a: Some(1.0 / l),
            b: Some(l),
            split,
            centre: None,
            pilot_radius: None,
        }
    }

    pub fn with_centre(mut self, centre: f64) -> Self {
        self.centre = Some(centre);
        self
    }

    pub fn with_split(mut self, split: SplitMode) -> Self {
        self.split = split;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.a {
            if !(0.0..1.0).contains(&a) {
                return Err(Error::param("a", format!("must lie in [0, 1), got {a}")));
            }
        }
        if let Some(b) = self.b {
            if !(b > 1.0 && b.is_finite()) {
                return Err(Error::param("b", format!("must exceed 1, got {b}")));
            }
        }
        if let Some(c) = self.centre {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::param("centre", format!("must be positive, got {c}")));
            }
        }
        Ok(())
    }

    /// Integer window for a design, intersected with `[1, p_max]`.
    pub fn resolve(&self, design: &SeqDesign, p_max: usize) -> Result<ResolvedWindow> {
        self.validate()?;
        let centre = match self.centre {
            Some(c) => c,
            None => design.spectrum.balance_index(design.n)?,
        };
        let a = self.a.unwrap_or(0.0);
        let b = self.b.unwrap_or_else(|| (design.n as f64).ln());
        let lo = (a * centre).ceil().max(1.0) as usize;
        let hi = ((b * centre).floor() as usize).min(p_max);
        if hi < lo {
            return Err(Error::EmptyWindow);
        }
        Ok(ResolvedWindow { lo, hi, split: self.split })
    }

    /// Largest frequency the window can touch for a design.
    pub fn upper_index(&self, design: &SeqDesign) -> Result<usize> {
        self.resolve(design, usize::MAX).map(|w| w.hi)
    }
}

/// Integer window `{lo..=hi}` with its split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedWindow {
    pub lo: usize,
    pub hi: usize,
    pub split: SplitMode,
}

/// Which frequencies of a window to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    All,
    Even,
    Odd,
}

impl ResolvedWindow {
    pub fn indices(&self, parity: Parity) -> impl Iterator<Item = usize> {
        let (start, step) = match parity {
            Parity::All => (self.lo, 1),
            Parity::Even => (self.lo + self.lo % 2, 2),
            Parity::Odd => (self.lo + (1 - self.lo % 2), 2),
        };
        (start..=self.hi).step_by(step)
    }

    pub fn count(&self, parity: Parity) -> usize {
        self.indices(parity).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub lo: usize,
    pub hi: usize,
    pub split: SplitMode,
    pub main_count: usize,
    pub pre_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Diagnostics {
    /// Number of pre-estimates whose eigenvalues were clamped.
    pub clamp_events: usize,
    /// Smallest eigenvalue of the unclamped pre-estimates.
    pub raw_pre_min_eigenvalue: Option<f64>,
    /// Largest eigenvalue of the unclamped pre-estimates.
    pub raw_pre_max_eigenvalue: Option<f64>,
}

/// Point estimate of `vec(Σ)` with its plug-in covariance `¼ I_π⁻¹ Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub d: usize,
    /// `vec(Σ̂)` (column-stacking).
    pub estimate: Vec<f64>,
    #[serde(with = "dmatrix_rows")]
    pub covariance: DMatrix<f64>,
    pub window: Option<WindowReport>,
    pub pre_estimates: Vec<SymMatrix>,
    pub diagnostics: Diagnostics,
}

impl EstimateReport {
    pub fn matrix(&self) -> SymMatrix {
        let d = self.d;
        SymMatrix::symmetrised(&DMatrix::from_column_slice(d, d, &self.estimate)).expect("square")
    }
}

/// `θ̂_p = λ_p⁻¹ vec(Y_p Y_pᵀ − (η²/n) I_d)`.
pub fn per_freq_estimate(y: &[f64], lambda: f64, eta2: f64, n: u64) -> Result<Vec<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::param("lambda", format!("must be positive, got {lambda}")));
    }
    let d = y.len();
    let noise = eta2 / n as f64;
    let mut out = vec![0.0; d * d];
    for j in 0..d {
        for i in 0..d {
            let mut v = y[i] * y[j];
            if i == j {
                v -= noise;
            }
            out[i + j * d] = v / lambda;
        }
    }
    Ok(out)
}

/// Weighted sums in a fixed eigenbasis: numerator `Σ_p D_p ∘ (Q θ̂_p Qᵀ)` and
/// denominator `Σ_p D_p`.
struct WeightedSum {
    num: Vec<Compensated>,
    den: Vec<Compensated>,
}

fn weighted_sum(design: &SeqDesign, data: &SeqValues, basis: &Eigen, idx: impl Iterator<Item = usize>) -> Result<WeightedSum> {
    let d = design.d;
    if data.d != d {
        return Err(Error::dims(d, data.d));
    }
    let noise = design.noise_level();
    let mut num = vec![Compensated::default(); d * d];
    let mut den = vec![Compensated::default(); d * d];
    let mut term = vec![0.0; d * d];
    let mut yr = vec![0.0; d];
    for p in idx {
        let lam = design.spectrum.eigenvalue(p)?;
        spectral_term(&basis.values, lam, noise, &mut term);
        let y = data.y(p);
        for (r, v) in yr.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in 0..d {
                acc += basis.q[(r, c)] * y[c];
            }
            *v = acc;
        }
        for j in 0..d {
            for i in 0..d {
                let k = i + j * d;
                let mut m = yr[i] * yr[j];
                if i == j {
                    m -= noise;
                }
                num[k].add(term[k] * m / lam);
                den[k].add(term[k]);
            }
        }
    }
    Ok(WeightedSum { num, den })
}

impl WeightedSum {
    fn estimate(&self, basis: &Eigen) -> Result<(SymMatrix, SpectralFisher)> {
        let d = basis.dim();
        if self.den.iter().any(|v| !(v.value() > 0.0)) {
            return Err(Error::EmptyWindow);
        }
        let rotated = DMatrix::from_fn(d, d, |i, j| self.num[i + j * d].value() / self.den[i + j * d].value());
        let back = basis.q.transpose() * rotated * &basis.q;
        let weights = DMatrix::from_fn(d, d, |i, j| self.den[i + j * d].value());
        Ok((
            SymMatrix::symmetrised(&back)?,
            SpectralFisher {
                q: basis.q.clone(),
                weights,
            },
        ))
    }
}

/// `Σ_{p∈idx} W_p(Σ_w) θ̂_p` and the information `I_idx(Σ_w)`.
pub fn weighted_estimate(design: &SeqDesign, data: &SeqValues, weighting: &SymMatrix, idx: impl Iterator<Item = usize>) -> Result<(SymMatrix, SpectralFisher)> {
    let basis = weighting.eigen();
    weighted_sum(design, data, &basis, idx)?.estimate(&basis)
}

fn check_p_max(data: &SeqValues, w: &ResolvedWindow) -> Result<()> {
    if w.hi > data.p_max {
        return Err(Error::param("p_max", format!("sample has {} frequencies, window needs {}", data.p_max, w.hi)));
    }
    Ok(())
}

fn report(d: usize, est: SymMatrix, cov: DMatrix<f64>, window: Option<WindowReport>, pre: Vec<SymMatrix>, diag: Diagnostics) -> EstimateReport {
    EstimateReport {
        d,
        estimate: est.vec().iter().copied().collect(),
        covariance: cov,
        window,
        pre_estimates: pre,
        diagnostics: diag,
    }
}

fn window_report(w: &ResolvedWindow, main: usize, pre: usize) -> WindowReport {
    WindowReport {
        lo: w.lo,
        hi: w.hi,
        split: w.split,
        main_count: main,
        pre_count: pre,
    }
}

/// Oracle estimator over the main window (all indices unless the split is
/// `Parity`, which keeps the even ones).
pub fn oracle_estimate_data(design: &SeqDesign, data: &SeqValues, sigma: &SymMatrix, window: &WindowConfig) -> Result<EstimateReport> {
    let w = window.resolve(design, data.p_max)?;
    check_p_max(data, &w)?;
    let parity = if w.split == SplitMode::Parity { Parity::Even } else { Parity::All };
    if w.count(parity) == 0 {
        return Err(Error::EmptyWindow);
    }
    let (est, info) = weighted_estimate(design, data, sigma, w.indices(parity))?;
    let cov = info.quarter_inverse_z()?;
    Ok(report(design.d, est, cov, Some(window_report(&w, w.count(parity), 0)), vec![], Diagnostics::default()))
}

pub fn oracle_estimate(sample: &SeqSample, sigma: &SymMatrix, window: &WindowConfig) -> Result<EstimateReport> {
    oracle_estimate_data(&SeqDesign::from(&sample.model), &sample.data, sigma, window)
}

/// Eigenvalue range the pre-estimate is projected onto.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreClamp {
    pub lo: f64,
    pub hi: f64,
}

impl PreClamp {
    /// `[1e-6, S]`.
    pub fn parametric(s_bound: f64) -> Self {
        PreClamp {
            lo: PRE_CLAMP_FLOOR.min(0.5 * s_bound),
            hi: s_bound,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo > 0.0 && self.hi > self.lo && self.hi.is_finite()) {
            return Err(Error::param("clamp", format!("need 0 < lo < hi, got [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreEstimate {
    pub raw: SymMatrix,
    pub clamped: SymMatrix,
    pub was_clamped: bool,
}

/// Weighted average over `idx` with weights at `S·I` (`S = clamp.hi`),
/// before any projection.
pub fn raw_pre_estimate(design: &SeqDesign, data: &SeqValues, idx: impl Iterator<Item = usize>, clamp: PreClamp) -> Result<SymMatrix> {
    clamp.validate()?;
    let weighting = SymMatrix::scaled_identity(design.d, clamp.hi);
    Ok(weighted_estimate(design, data, &weighting, idx)?.0)
}

impl PreEstimate {
    /// Projects the eigenvalues of `raw` into `[clamp.lo, clamp.hi]`.
    pub fn clamp(raw: SymMatrix, clamp: PreClamp) -> Self {
        let e = raw.eigen();
        let was_clamped = e.values.iter().any(|v| *v < clamp.lo || *v > clamp.hi);
        let clamped = if was_clamped {
            e.map_values(|v| v.clamp(clamp.lo, clamp.hi))
        } else {
            raw.clone()
        };
        PreEstimate {
            raw,
            clamped,
            was_clamped,
        }
    }
}

/// [`raw_pre_estimate`] followed by [`PreEstimate::clamp`].
pub fn pre_estimate_data(design: &SeqDesign, data: &SeqValues, idx: impl Iterator<Item = usize>, clamp: PreClamp) -> Result<PreEstimate> {
    Ok(PreEstimate::clamp(raw_pre_estimate(design, data, idx, clamp)?, clamp))
}

/// Pre-estimate from the odd indices of the window.
pub fn pre_estimate(sample: &SeqSample, window: &WindowConfig, s_bound: f64) -> Result<PreEstimate> {
    let design = SeqDesign::from(&sample.model);
    let w = window.resolve(&design, sample.data.p_max)?;
    check_p_max(&sample.data, &w)?;
    if w.count(Parity::Odd) == 0 {
        return Err(Error::EmptyWindow);
    }
    pre_estimate_data(&design, &sample.data, w.indices(Parity::Odd), PreClamp::parametric(s_bound))
}

fn note_pre(diag: &mut Diagnostics, pre: &PreEstimate) {
    if pre.was_clamped {
        diag.clamp_events += 1;
    }
    let e = pre.raw.eigen();
    let (lo, hi) = (e.values[0], *e.values.last().unwrap());
    diag.raw_pre_min_eigenvalue = Some(diag.raw_pre_min_eigenvalue.map_or(lo, |v| v.min(lo)));
    diag.raw_pre_max_eigenvalue = Some(diag.raw_pre_max_eigenvalue.map_or(hi, |v| v.max(hi)));
}

/// Pre-estimates built from the odd and the even half of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPilots {
    /// Built from the odd indices; weights the even ones.
    pub odd: PreEstimate,
    /// Built from the even indices; weights the odd ones. Unused by `Parity`.
    pub even: PreEstimate,
}

fn split_counts(w: &ResolvedWindow) -> Result<(usize, usize)> {
    let (even, odd) = (w.count(Parity::Even), w.count(Parity::Odd));
    if even == 0 || odd == 0 {
        return Err(Error::EmptyWindow);
    }
    Ok((even, odd))
}

/// Unclamped odd and even pre-estimates over a resolved window.
pub fn raw_split_pilots(design: &SeqDesign, data: &SeqValues, w: &ResolvedWindow, clamp: PreClamp) -> Result<(SymMatrix, SymMatrix)> {
    check_p_max(data, w)?;
    split_counts(w)?;
    Ok((
        raw_pre_estimate(design, data, w.indices(Parity::Odd), clamp)?,
        raw_pre_estimate(design, data, w.indices(Parity::Even), clamp)?,
    ))
}

/// Adaptive estimate over a resolved window with the weights taken at
/// supplied pilots. The pilots must not depend on the frequencies they weight.
pub fn adaptive_with_pilots(design: &SeqDesign, data: &SeqValues, w: &ResolvedWindow, pilots: &SplitPilots) -> Result<EstimateReport> {
    check_p_max(data, w)?;
    let (even, odd) = split_counts(w)?;
    let mut diag = Diagnostics::default();
    match w.split {
        SplitMode::None => Err(Error::param("split", "the adaptive estimator needs a split window")),
        SplitMode::Parity => {
            note_pre(&mut diag, &pilots.odd);
            let (est, info) = weighted_estimate(design, data, &pilots.odd.clamped, w.indices(Parity::Even))?;
            let cov = info.quarter_inverse_z()?;
            Ok(report(design.d, est, cov, Some(window_report(w, even, odd)), vec![pilots.odd.clamped.clone()], diag))
        }
        SplitMode::CrossFit => {
            note_pre(&mut diag, &pilots.odd);
            note_pre(&mut diag, &pilots.even);
            let (est_e, info_e) = weighted_estimate(design, data, &pilots.odd.clamped, w.indices(Parity::Even))?;
            let (est_o, info_o) = weighted_estimate(design, data, &pilots.even.clamped, w.indices(Parity::Odd))?;
            let est = est_e.axpby(0.5, &est_o, 0.5);
            let cov = (info_e.quarter_inverse_z()? + info_o.quarter_inverse_z()?) * 0.25;
            Ok(report(
                design.d,
                est,
                cov,
                Some(window_report(w, even + odd, even + odd)),
                vec![pilots.odd.clamped.clone(), pilots.even.clamped.clone()],
                diag,
            ))
        }
    }
}

/// Reweights each half at its clamped pilot: the odd half at `pilots.odd`,
/// the even half at `pilots.even`. Each result still depends only on its
/// own half.
pub fn refine_split_pilots(design: &SeqDesign, data: &SeqValues, w: &ResolvedWindow, pilots: &SplitPilots) -> Result<(SymMatrix, SymMatrix)> {
    check_p_max(data, w)?;
    split_counts(w)?;
    Ok((
        weighted_estimate(design, data, &pilots.odd.clamped, w.indices(Parity::Odd))?.0,
        weighted_estimate(design, data, &pilots.even.clamped, w.indices(Parity::Even))?.0,
    ))
}

fn clamp_pair((odd, even): (SymMatrix, SymMatrix), clamp: PreClamp) -> SplitPilots {
    SplitPilots {
        odd: PreEstimate::clamp(odd, clamp),
        even: PreEstimate::clamp(even, clamp),
    }
}

/// Adaptive estimator: weights at a pre-estimate from frequencies disjoint
/// from those being weighted. The pre-estimate is the `S·I`-weighted average
/// of its half, reweighted once at its own clamped value.
pub fn adaptive_estimate_data(design: &SeqDesign, data: &SeqValues, window: &WindowConfig, clamp: PreClamp) -> Result<EstimateReport> {
    let w = window.resolve(design, data.p_max)?;
    if w.split == SplitMode::None {
        return Err(Error::param("split", "the adaptive estimator needs a split window"));
    }
    let first = clamp_pair(raw_split_pilots(design, data, &w, clamp)?, clamp);
    let pilots = clamp_pair(refine_split_pilots(design, data, &w, &first)?, clamp);
    adaptive_with_pilots(design, data, &w, &pilots)
}

pub fn adaptive_estimate(sample: &SeqSample, window: &WindowConfig, s_bound: f64) -> Result<EstimateReport> {
    adaptive_estimate_data(&SeqDesign::from(&sample.model), &sample.data, window, PreClamp::parametric(s_bound))
}

/// Covariance `Σ_p w_p² λ_p⁻² Z (C_p ⊗ C_p)` of `Σ_p w_p θ̂_p` for scalar
/// weights; `w` must sum to one for an unbiased estimator.
pub fn scalar_weight_covariance(model: &ParamModel, idx: &[usize], w: &[f64]) -> Result<DMatrix<f64>> {
    if idx.len() != w.len() || idx.is_empty() {
        return Err(Error::dims(idx.len(), w.len()));
    }
    let d = model.d();
    let z = Symmetriser::new(d);
    let mut acc = DMatrix::zeros(d * d, d * d);
    for (&p, &wp) in idx.iter().zip(w) {
        let lam = model.eigenvalue(p)?;
        let c = model.cov_block(p)?;
        acc += kron(c.as_matrix(), c.as_matrix()) * (wp * wp / (lam * lam));
    }
    Ok(z.matrix() * acc)
}

/// Maps estimates of the whitened problem back to the original scale.
#[derive(Debug, Clone, PartialEq)]
pub struct BackMap {
    half: SymMatrix,
    inv_half: SymMatrix,
    half_kron: DMatrix<f64>,
}

impl BackMap {
    /// `H^{½} Σ' H^{½}`.
    pub fn matrix(&self, s: &SymMatrix) -> Result<SymMatrix> {
        s.congruence(self.half.as_matrix())
    }

    /// `H^{−½} Σ H^{−½}`, the inverse of [`BackMap::matrix`].
    pub fn whiten(&self, s: &SymMatrix) -> Result<SymMatrix> {
        s.congruence(self.inv_half.as_matrix())
    }

    /// `(H^{½} ⊗ H^{½}) v`.
    pub fn vector(&self, v: &[f64]) -> Vec<f64> {
        let x = nalgebra::DVector::from_column_slice(v);
        (&self.half_kron * x).iter().copied().collect()
    }

    /// `(H^{½} ⊗ H^{½}) C (H^{½} ⊗ H^{½})`.
    pub fn covariance(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        &self.half_kron * c * &self.half_kron
    }

    pub fn report(&self, r: &EstimateReport) -> Result<EstimateReport> {
        let est = self.vector(&r.estimate);
        let sym = SymMatrix::symmetrised(&DMatrix::from_column_slice(r.d, r.d, &est))?;
        Ok(EstimateReport {
            estimate: sym.vec().iter().copied().collect(),
            covariance: self.covariance(&r.covariance),
            pre_estimates: r.pre_estimates.iter().map(|p| self.matrix(p)).collect::<Result<_>>()?,
            ..r.clone()
        })
    }
}

/// `Y'_p = H^{−½} Y_p`: turns noise covariance `H·η_unit²/n` into `I/n`.
pub fn whiten_reduce(data: &SeqValues, h_noise: &SymMatrix) -> Result<(SeqValues, BackMap)> {
    if h_noise.dim() != data.d {
        return Err(Error::dims(data.d, h_noise.dim()));
    }
    let e = h_noise.eigen();
    if !(e.values[0] > 0.0) {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: e.values[0],
        });
    }
    let inv_half = e.map_values(|v| 1.0 / v.sqrt());
    let half = psd_sqrt(h_noise)?;
    let d = data.d;
    let mut out = SeqValues::zeros(d, data.p_max);
    for p in 1..=data.p_max {
        let y = data.y(p);
        let o = out.y_mut(p);
        for (r, or) in o.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in 0..d {
                acc += inv_half.as_matrix()[(r, c)] * y[c];
            }
            *or = acc;
        }
    }
    let half_kron = kron(half.as_matrix(), half.as_matrix());
    Ok((out, BackMap { half, inv_half, half_kron }))
}

/// `⌈m / √p_c⌉` with `p_c` the smallest block window centre, capped at
/// `m − 1`: the pooled span shrinks like `p_c^{−½}` while the pooled
/// information grows like `m √p_c`.
pub fn default_pilot_radius(model: &BlockModel, window: &WindowConfig) -> usize {
    let m = model.m();
    let p_c = (0..m)
        .filter_map(|k| block_window(model, k, window).0.centre)
        .fold(f64::INFINITY, f64::min)
        .max(1.0);
    ((m as f64 / p_c.sqrt()).ceil() as usize).min(m - 1)
}

/// Window and clamp used for block `k` of the semiparametric estimator.
pub fn block_window(model: &BlockModel, k: usize, window: &WindowConfig) -> (WindowConfig, PreClamp) {
    let s = model.s_bound();
    let xi2 = model.xi2(k);
    let min_xi2 = xi2.iter().copied().fold(f64::INFINITY, f64::min);
    let max_xi2 = xi2.iter().copied().fold(0.0, f64::max);
    let m = model.m() as f64;
    // λ_m(p)·S = min Ξ² / n_min
    let centre = (s * model.n_min() as f64 / min_xi2).sqrt() / (std::f64::consts::PI * m);
    let w = WindowConfig {
        centre: Some(window.centre.unwrap_or(centre)),
        ..*window
    };
    let clamp = PreClamp {
        lo: 1.0 / (s * max_xi2),
        hi: s / min_xi2,
    };
    (w, clamp)
}

/// Design of the whitened block problem: `λ_mp`, unit noise, `n = n_min`.
pub fn block_design(model: &BlockModel) -> SeqDesign {
    SeqDesign {
        d: model.d(),
        spectrum: model.block_spectrum(),
        eta2: 1.0,
        n: model.n_min(),
    }
}

/// Largest frequency any block window touches.
pub fn block_p_max(model: &BlockModel, window: &WindowConfig) -> Result<usize> {
    let design = block_design(model);
    let mut hi = 1;
    for k in 0..model.m() {
        let (w, _) = block_window(model, k, window);
        hi = hi.max(w.upper_index(&design)?);
    }
    Ok(hi)
}

/// `ψ̂ = (1/m) Σ_k ∇W_k vec(Σ̂_k)` with per-block adaptive estimates in
/// whitened coordinates; `grad = None` means `∇W = I`. Each half's pilot is
/// averaged over blocks `k − r ..= k + r` (see [`default_pilot_radius`])
/// before and after the reweighting pass, so the pilot weighting the even
/// frequencies of block `k` depends on odd frequencies only. The covariance
/// is the plug-in `(1/m²) Σ_k ∇W_k Cov_k ∇W_kᵀ`.
pub fn integrated_covol_estimate(
    model: &BlockModel,
    data: &BlockValues,
    window: &WindowConfig,
    grad: Option<&dyn Fn(usize) -> DMatrix<f64>>,
) -> Result<EstimateReport> {
    let m = model.m();
    let d = model.d();
    if data.m != m {
        return Err(Error::dims(m, data.m));
    }
    let design = block_design(model);
    let in_block = |k: usize| move |e: Error| Error::InBlock { block: k, source: Box::new(e) };
    let mut prepared = Vec::with_capacity(m);
    let mut raw_odd = Vec::with_capacity(m);
    let mut raw_even = Vec::with_capacity(m);
    for k in 0..m {
        let (w, clamp) = block_window(model, k, window);
        let h = SymMatrix::from_diagonal(model.xi2(k));
        let (white, back) = whiten_reduce(&data.blocks[k], &h).map_err(in_block(k))?;
        let resolved = w.resolve(&design, white.p_max).map_err(in_block(k))?;
        if resolved.split == SplitMode::None {
            return Err(in_block(k)(Error::param("split", "the adaptive estimator needs a split window")));
        }
        let (odd, even) = raw_split_pilots(&design, &white, &resolved, clamp).map_err(in_block(k))?;
        raw_odd.push(back.matrix(&odd)?);
        raw_even.push(back.matrix(&even)?);
        prepared.push((white, back, resolved, clamp));
    }
    let radius = window.pilot_radius.unwrap_or_else(|| default_pilot_radius(model, window));
    let pooled = |raw: &[SymMatrix], k: usize| -> Result<SymMatrix> {
        let (lo, hi) = (k.saturating_sub(radius), (k + radius).min(m - 1));
        let mut acc = DMatrix::zeros(d, d);
        for r in &raw[lo..=hi] {
            acc += r.as_matrix();
        }
        SymMatrix::symmetrised(&(acc / (hi - lo + 1) as f64))
    };
    let pilots = |odd: &[SymMatrix], even: &[SymMatrix], k: usize| -> Result<SplitPilots> {
        let (back, clamp) = (&prepared[k].1, prepared[k].3);
        Ok(clamp_pair((back.whiten(&pooled(odd, k)?)?, back.whiten(&pooled(even, k)?)?), clamp))
    };
    let mut next_odd = Vec::with_capacity(m);
    let mut next_even = Vec::with_capacity(m);
    for (k, (white, back, resolved, _)) in prepared.iter().enumerate() {
        let first = pilots(&raw_odd, &raw_even, k)?;
        let (o, e) = refine_split_pilots(&design, white, resolved, &first).map_err(in_block(k))?;
        next_odd.push(back.matrix(&o)?);
        next_even.push(back.matrix(&e)?);
    }
    let mut est = vec![0.0; d * d];
    let mut cov = DMatrix::zeros(d * d, d * d);
    let mut diag = Diagnostics::default();
    for (k, (white, back, resolved, _)) in prepared.iter().enumerate() {
        let p = pilots(&next_odd, &next_even, k)?;
        let r = adaptive_with_pilots(&design, white, resolved, &p).map_err(in_block(k))?;
        let r = back.report(&r).map_err(in_block(k))?;
        diag.clamp_events += r.diagnostics.clamp_events;
        let (v, c) = match grad {
            None => (r.estimate, r.covariance),
            Some(g) => {
                let gk = g(k);
                if gk.ncols() != d * d {
                    return Err(Error::dims(d * d, gk.ncols()));
                }
                let v = &gk * nalgebra::DVector::from_vec(r.estimate);
                (v.iter().copied().collect(), &gk * r.covariance * gk.transpose())
            }
        };
        if est.len() != v.len() {
            est = vec![0.0; v.len()];
            cov = DMatrix::zeros(v.len(), v.len());
        }
        for (e, x) in est.iter_mut().zip(&v) {
            *e += x / m as f64;
        }
        cov += c / (m * m) as f64;
    }
    let out_d = (est.len() as f64).sqrt() as usize;
    Ok(EstimateReport {
        d: out_d,
        estimate: est,
        covariance: cov,
        window: None,
        pre_estimates: vec![],
        diagnostics: diag,
    })
}
