//! Fisher information of the sequence experiment: per frequency, summed over a
//! window, and its asymptotic limit; plus the local information of the block
//! model and the integrated convolution bound.
//!
//! Every `C_p` shares the eigenvectors of `Σ`, so with `Σ = Qᵀ diag(s) Q` all
//! information matrices have the form `(Q⊗Q)ᵀ diag(vec D) (Q⊗Q)` for a
//! symmetric `d×d` array `D`. [`SpectralFisher`] stores `(Q, D)`; windowed sums
//! accumulate `D` only.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta;

use crate::error::{Error, Result};
use crate::matcore::{kron, psd_sqrt, Eigen, SymMatrix, Symmetriser};
use crate::model::{BlockModel, ParamModel};
use crate::quad;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherKind {
    PerFrequency,
    Windowed,
    Asymptotic,
}

/// A `d²×d²` information matrix. `matrix` never includes the symmetriser;
/// use [`FisherInfo::times_z`] for `I·Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherInfo {
    pub d: usize,
    pub kind: FisherKind,
    #[serde(with = "dmatrix_rows")]
    pub matrix: DMatrix<f64>,
}

impl FisherInfo {
    pub fn times_z(&self) -> DMatrix<f64> {
        Symmetriser::new(self.d).right_apply(&self.matrix)
    }

    /// `¼ I⁻¹ Z`.
    pub fn quarter_inverse_z(&self) -> Result<DMatrix<f64>> {
        let inv = crate::matcore::invert(&self.matrix)?;
        Ok(Symmetriser::new(self.d).right_apply(&inv) * 0.25)
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

/// `(Q⊗Q)ᵀ diag(vec D) (Q⊗Q)` with the rows of `Q` the eigenvectors of the
/// reference matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFisher {
    pub q: DMatrix<f64>,
    pub weights: DMatrix<f64>,
}

impl SpectralFisher {
    pub fn d(&self) -> usize {
        self.q.nrows()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let qq = kron(&self.q, &self.q);
        let diag = DMatrix::from_diagonal(&DVector::from_column_slice(self.weights.as_slice()));
        qq.transpose() * diag * qq
    }

    pub fn to_info(&self, kind: FisherKind) -> FisherInfo {
        FisherInfo {
            d: self.d(),
            kind,
            matrix: self.to_dense(),
        }
    }

    /// `¼ I⁻¹ Z` without a dense inversion.
    pub fn quarter_inverse_z(&self) -> Result<DMatrix<f64>> {
        if self.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Singular);
        }
        let inv = SpectralFisher {
            q: self.q.clone(),
            weights: self.weights.map(|w| 1.0 / w),
        };
        Ok(Symmetriser::new(self.d()).right_apply(&inv.to_dense()) * 0.25)
    }

    pub fn trace(&self) -> f64 {
        // (Q⊗Q) is orthogonal
        self.weights.sum()
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// `D_ij(p) = ¼ λ_p² / (c_i c_j)` with `c_i = s_i λ_p + noise`, written into
/// a column-major `d×d` buffer.
pub(crate) fn spectral_term(s: &[f64], lam: f64, noise: f64, out: &mut [f64]) {
    let d = s.len();
    for j in 0..d {
        let cj = s[j] * lam + noise;
        for i in 0..d {
            let ci = s[i] * lam + noise;
            out[i + j * d] = 0.25 * lam * lam / (ci * cj);
        }
    }
}

/// A set of frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FreqWindow {
    /// `{lo, …, hi}`, both ends included.
    Range { lo: usize, hi: usize },
    /// All frequencies, truncated where the tail is negligible.
    Full,
}

impl FreqWindow {
    pub fn range(lo: usize, hi: usize) -> Result<Self> {
        if lo < 1 || hi < lo {
            return Err(Error::EmptyWindow);
        }
        Ok(FreqWindow::Range { lo, hi })
    }

    /// `[a·p_n, b·p_n] ∩ ℕ`, clipped below at 1.
    pub fn around(p_n: f64, a: f64, b: f64) -> Result<Self> {
        let lo = (a * p_n).ceil().max(1.0) as usize;
        let hi = (b * p_n).floor() as usize;
        Self::range(lo, hi)
    }
}

/// Relative tail tolerance of the full-window truncation.
pub const FULL_TAIL_REL: f64 = 1e-8;

fn tail_bound(model: &ParamModel, p_max: usize) -> f64 {
    let inv_noise = 1.0 / model.noise_level();
    0.25 * inv_noise * inv_noise * model.spectrum().tail_square_integral(p_max as f64)
}

fn accumulate(model: &ParamModel, s: &[f64], lo: usize, hi: usize, acc: &mut [Compensated]) -> Result<()> {
    let d = s.len();
    let noise = model.noise_level();
    let mut term = vec![0.0; d * d];
    for p in lo..=hi {
        spectral_term(s, model.eigenvalue(p)?, noise, &mut term);
        for (a, t) in acc.iter_mut().zip(&term) {
            a.add(*t);
        }
    }
    Ok(())
}

/// Truncation index for the full window: start at `max(64 p_n, 1024)` and
/// double until the tail bound is below `1e-8` of the smallest weight.
pub fn full_truncation(model: &ParamModel) -> Result<usize> {
    Ok(full_spectral(model)?.1)
}

fn full_spectral(model: &ParamModel) -> Result<(SpectralFisher, usize)> {
    let e = model.sigma().eigen();
    let d = model.d();
    let mut p_max = (64.0 * model.balance_index()?).ceil().max(1024.0) as usize;
    let mut acc = vec![Compensated::default(); d * d];
    accumulate(model, &e.values, 1, p_max, &mut acc)?;
    loop {
        let min = acc.iter().map(|a| a.value()).fold(f64::INFINITY, f64::min);
        if tail_bound(model, p_max) < FULL_TAIL_REL * min {
            break;
        }
        accumulate(model, &e.values, p_max + 1, 2 * p_max, &mut acc)?;
        p_max *= 2;
    }
    let weights = DMatrix::from_iterator(d, d, acc.iter().map(|a| a.value()));
    Ok((SpectralFisher { q: e.q, weights }, p_max))
}

/// Spectral form of `I_π(Σ) = Σ_{p∈π} I_np(Σ)` at the model's `Σ`.
pub fn spectral_window(model: &ParamModel, window: &FreqWindow) -> Result<SpectralFisher> {
    match *window {
        FreqWindow::Full => Ok(full_spectral(model)?.0),
        FreqWindow::Range { lo, hi } => {
            if lo < 1 || hi < lo {
                return Err(Error::EmptyWindow);
            }
            let e = model.sigma().eigen();
            let d = model.d();
            let mut acc = vec![Compensated::default(); d * d];
            accumulate(model, &e.values, lo, hi, &mut acc)?;
            let weights = DMatrix::from_iterator(d, d, acc.iter().map(|a| a.value()));
            Ok(SpectralFisher { q: e.q, weights })
        }
    }
}

/// `C_p = Σλ_p + (η²/n) I_d`.
pub fn cov_block(model: &ParamModel, p: usize) -> Result<SymMatrix> {
    model.cov_block(p)
}

/// `I_np(Σ) = ¼ λ_p² (C_p⁻¹ ⊗ C_p⁻¹)`, computed densely.
pub fn fisher_block(model: &ParamModel, p: usize) -> Result<FisherInfo> {
    let lam = model.eigenvalue(p)?;
    let c_inv = model.cov_block(p)?.inverse()?;
    let m = kron(c_inv.as_matrix(), c_inv.as_matrix()) * (0.25 * lam * lam);
    Ok(FisherInfo {
        d: model.d(),
        kind: FisherKind::PerFrequency,
        matrix: m,
    })
}

/// `I_π(Σ)` over a window.
pub fn fisher_window(model: &ParamModel, window: &FreqWindow) -> Result<FisherInfo> {
    Ok(spectral_window(model, window)?.to_info(FisherKind::Windowed))
}

/// Dense reference implementation of [`fisher_window`] over a finite range.
pub fn fisher_window_dense(model: &ParamModel, lo: usize, hi: usize) -> Result<FisherInfo> {
    if lo < 1 || hi < lo {
        return Err(Error::EmptyWindow);
    }
    let d2 = model.d() * model.d();
    let mut m = DMatrix::zeros(d2, d2);
    for p in lo..=hi {
        m += fisher_block(model, p)?.matrix;
    }
    Ok(FisherInfo {
        d: model.d(),
        kind: FisherKind::Windowed,
        matrix: m,
    })
}

/// How the eigenvalue integral of the asymptotic information is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntegralMode {
    /// Closed form over `(0, ∞)`.
    #[default]
    ClosedForm,
    /// Adaptive quadrature over `(0, ∞)`.
    Quadrature,
    /// Adaptive quadrature over `(0, 1)`, for comparison only.
    UnitIntervalLiteral,
}

fn check_asymptotic_args(delta: f64, zeta: f64, eta: f64) -> Result<()> {
    if !(delta > 1.0 && delta.is_finite()) {
        return Err(Error::param("delta", format!("must exceed 1, got {delta}")));
    }
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(Error::param("zeta", format!("must be positive, got {zeta}")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::param("eta", format!("must be positive, got {eta}")));
    }
    Ok(())
}

/// `π / (δ sin(π/δ)) = ∫₀^∞ (1 + x^δ)⁻¹ dx`.
fn k_delta(delta: f64) -> f64 {
    PI / (delta * (PI / delta).sin())
}

/// `∫₀^∞ (s_i + x^δ)⁻¹ (s_j + x^δ)⁻¹ dx` in closed form.
pub fn pair_integral_closed(si: f64, sj: f64, delta: f64) -> f64 {
    let a = 1.0 / delta - 1.0;
    let k = k_delta(delta);
    if (si - sj).abs() < 1e-8 * si.max(sj) {
        let s = 0.5 * (si + sj);
        return k * (1.0 - 1.0 / delta) * s.powf(1.0 / delta - 2.0);
    }
    // (s_j^a − s_i^a)/(s_i − s_j) = −s_i^{a−1} expm1(aL)/expm1(L), L = ln(s_j/s_i)
    let l = (sj / si).ln();
    k * (-si.powf(a - 1.0) * (a * l).exp_m1() / l.exp_m1())
}

/// The same integral by adaptive quadrature over `(0, X]`, where the
/// neglected tail `X^{1−2δ}/(2δ−1)` is below `1e-14` of the integral.
pub fn pair_integral_quadrature(si: f64, sj: f64, delta: f64) -> f64 {
    let lower = 1.0 / ((si + 1.0) * (sj + 1.0));
    let x_max = (1e-14 * lower * (2.0 * delta - 1.0)).powf(1.0 / (1.0 - 2.0 * delta));
    let f = |x: f64| {
        let xd = x.powf(delta);
        1.0 / ((si + xd) * (sj + xd))
    };
    quad::integrate_geometric(f, x_max, 1e-15 * lower, 1e-13).value
}

fn pair_integral_unit(si: f64, sj: f64, delta: f64) -> f64 {
    let f = |x: f64| {
        let xd = x.powf(delta);
        1.0 / ((si + xd) * (sj + xd))
    };
    quad::integrate(f, 0.0, 1.0, 1e-15, 1e-13).value
}

/// The eigenvalue array `v_ij = ζ/(4η^{2/δ}) ∫ (s_i+x^δ)⁻¹(s_j+x^δ)⁻¹ dx`.
pub fn asymptotic_eigenvalues(s: &[f64], delta: f64, zeta: f64, eta: f64, mode: IntegralMode) -> Result<DMatrix<f64>> {
    check_asymptotic_args(delta, zeta, eta)?;
    if s.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Singular);
    }
    let scale = zeta / (4.0 * eta.powf(2.0 / delta));
    let d = s.len();
    let mut v = DMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..=j {
            let integral = match mode {
                IntegralMode::ClosedForm => pair_integral_closed(s[i], s[j], delta),
                IntegralMode::Quadrature => pair_integral_quadrature(s[i], s[j], delta),
                IntegralMode::UnitIntervalLiteral => pair_integral_unit(s[i], s[j], delta),
            };
            v[(i, j)] = scale * integral;
            v[(j, i)] = v[(i, j)];
        }
    }
    Ok(v)
}

/// Spectral form of the asymptotic information `I(Σ)`.
pub fn asymptotic_spectral(sigma: &SymMatrix, delta: f64, zeta: f64, eta: f64, mode: IntegralMode) -> Result<SpectralFisher> {
    sigma.require_positive_definite()?;
    let e = Eigen::of(sigma);
    let weights = asymptotic_eigenvalues(&e.values, delta, zeta, eta, mode)?;
    Ok(SpectralFisher { q: e.q, weights })
}

/// `I(Σ) = (Q⊗Q)ᵀ diag(v_ij) (Q⊗Q)` with the closed-form `v_ij`.
pub fn asymptotic_fisher(sigma: &SymMatrix, delta: f64, zeta: f64, eta: f64) -> Result<FisherInfo> {
    asymptotic_fisher_with(sigma, delta, zeta, eta, IntegralMode::ClosedForm)
}

pub fn asymptotic_fisher_with(sigma: &SymMatrix, delta: f64, zeta: f64, eta: f64, mode: IntegralMode) -> Result<FisherInfo> {
    Ok(asymptotic_spectral(sigma, delta, zeta, eta, mode)?.to_info(FisherKind::Asymptotic))
}

/// `∫₀^∞ (1 + x^δ)^{−b} dx = (1/δ) B(b − 1/δ, 1/δ)` for integer `b >= 1`.
pub fn beta_integral(b: u32, delta: f64) -> Result<f64> {
    if b < 1 {
        return Err(Error::param("b", "must be >= 1"));
    }
    if !(delta > 1.0) {
        return Err(Error::param("delta", format!("must exceed 1, got {delta}")));
    }
    Ok(beta(b as f64 - 1.0 / delta, 1.0 / delta) / delta)
}

/// Product form `π ∏_{j=1}^{b−1}(b − j − 1/δ) / (δ (b−1)! sin(π/δ))` of
/// [`beta_integral`].
pub fn beta_integral_product(b: u32, delta: f64) -> Result<f64> {
    if b < 1 {
        return Err(Error::param("b", "must be >= 1"));
    }
    let mut num = 1.0;
    let mut fact = 1.0;
    for j in 1..b {
        num *= (b - j) as f64 - 1.0 / delta;
        fact *= j as f64;
    }
    Ok(PI * num / (delta * fact * (PI / delta).sin()))
}

/// `¼ ∇ψ I(Σ)⁻¹ Z ∇ψᵀ` for a `k×d²` derivative `∇ψ`.
pub fn optimal_covariance(sigma: &SymMatrix, delta: f64, zeta: f64, eta: f64, grad: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = sigma.dim();
    if grad.ncols() != d * d {
        return Err(Error::dims(d * d, grad.ncols()));
    }
    let base = asymptotic_spectral(sigma, delta, zeta, eta, IntegralMode::ClosedForm)?.quarter_inverse_z()?;
    Ok(grad * base * grad.transpose())
}

/// `2η (Σ⊗Σ^{½} + Σ^{½}⊗Σ) Z`, the efficient covariance for Brownian motion.
pub fn bm_efficient_covariance(sigma: &SymMatrix, eta: f64) -> Result<DMatrix<f64>> {
    sigma.require_positive_definite()?;
    let root = psd_sqrt(sigma)?;
    let s = sigma.as_matrix();
    let r = root.as_matrix();
    let m = (kron(s, r) + kron(r, s)) * (2.0 * eta);
    Ok(Symmetriser::new(sigma.dim()).right_apply(&m))
}

fn check_xi(xi: &[f64], d: usize) -> Result<()> {
    if xi.len() != d {
        return Err(Error::dims(d, xi.len()));
    }
    if xi.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::param("xi", "diagonal entries must be positive"));
    }
    Ok(())
}

/// `Σ_Ξ^{½} = Ξ (Ξ⁻¹ Σ Ξ⁻¹)^{½} Ξ` for diagonal `Ξ = diag(xi)`.
pub fn sigma_xi_sqrt(sigma: &SymMatrix, xi: &[f64]) -> Result<SymMatrix> {
    let d = sigma.dim();
    check_xi(xi, d)?;
    let s = sigma.as_matrix();
    let inner = DMatrix::from_fn(d, d, |i, j| s[(i, j)] / (xi[i] * xi[j]));
    let root = psd_sqrt(&SymMatrix::symmetrised(&inner)?)?;
    let r = root.as_matrix();
    let out = DMatrix::from_fn(d, d, |i, j| xi[i] * r[(i, j)] * xi[j]);
    SymMatrix::symmetrised(&out)
}

/// Local information `I_Σ(t)` of the block experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFisher {
    pub t: f64,
    pub sigma: SymMatrix,
    pub xi: Vec<f64>,
    #[serde(with = "dmatrix_rows")]
    pub info: DMatrix<f64>,
    /// `8 (Σ_Ξ^{½} ⊗ Σ + Σ ⊗ Σ_Ξ^{½})`.
    #[serde(with = "dmatrix_rows")]
    pub inverse: DMatrix<f64>,
}

impl LocalFisher {
    /// `¼ I_Σ⁻¹ Z`.
    pub fn bound(&self) -> DMatrix<f64> {
        Symmetriser::new(self.sigma.dim()).right_apply(&self.inverse) * 0.25
    }
}

pub fn local_fisher(t: f64, sigma: &SymMatrix, xi: &[f64]) -> Result<LocalFisher> {
    sigma.require_positive_definite()?;
    let root = sigma_xi_sqrt(sigma, xi)?;
    let s = sigma.as_matrix();
    let r = root.as_matrix();
    let inverse = (kron(r, s) + kron(s, r)) * 8.0;
    let info = crate::matcore::invert(&inverse)?;
    Ok(LocalFisher {
        t,
        sigma: sigma.clone(),
        xi: xi.to_vec(),
        info,
        inverse,
    })
}

/// `(1/m) Σ_k ¼ ∇W_k I_Σ⁻¹(k/m) Z ∇W_kᵀ`; `grad = None` means `∇W = I`.
pub fn integrated_bound(model: &BlockModel, grad: Option<&dyn Fn(usize) -> DMatrix<f64>>) -> Result<DMatrix<f64>> {
    let m = model.m();
    let d2 = model.d() * model.d();
    let mut acc: Option<DMatrix<f64>> = None;
    for k in 0..m {
        let xi: Vec<f64> = model.xi2(k).iter().map(|x| x.sqrt()).collect();
        let lf = local_fisher(k as f64 / m as f64, model.sigma(k), &xi).map_err(|e| Error::InBlock {
            block: k,
            source: Box::new(e),
        })?;
        let b = lf.bound();
        let term = match grad {
            None => b,
            Some(g) => {
                let gk = g(k);
                if gk.ncols() != d2 {
                    return Err(Error::dims(d2, gk.ncols()));
                }
                &gk * b * gk.transpose()
            }
        };
        acc = Some(match acc {
            None => term,
            Some(a) => a + term,
        });
    }
    Ok(acc.unwrap() / m as f64)
}

pub(crate) mod dmatrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        if rows.iter().any(|x| x.len() != c) {
            return Err(serde::de::Error::custom("ragged matrix"));
        }
        Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
    }
}
