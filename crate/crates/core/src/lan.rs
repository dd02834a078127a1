//! Likelihood ratios, LAN diagnostics and distances between Gaussian
//! sequence experiments.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::{asymptotic_fisher, spectral_window, Compensated, FreqWindow};
use crate::matcore::{inv_sqrt, vec, SymMatrix};
use crate::model::ParamModel;
use crate::rng::{purpose, SeedStream};
use crate::simulate::{fill_sequence, SeqSample, SeqValues};
use crate::spectra::Spectrum;

/// Tolerance for the analytic bound on omitted likelihood-ratio terms.
pub const LR_TAIL_TOL: f64 = 1e-8;

fn chol(c: &SymMatrix) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(c.as_matrix().clone()).ok_or(Error::NotPositiveDefinite {
        min_eigenvalue: c.min_eigenvalue(),
    })
}

fn log_det(c: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// `log φ_{C'}(y) − log φ_C(y)` for centred normals.
pub fn freq_loglik_ratio(y: &[f64], c: &SymMatrix, c_alt: &SymMatrix) -> Result<f64> {
    if y.len() != c.dim() || c.dim() != c_alt.dim() {
        return Err(Error::dims(c.dim(), y.len()));
    }
    let (l, la) = (chol(c)?, chol(c_alt)?);
    let y = DVector::from_column_slice(y);
    let q = y.dot(&l.solve(&y));
    let qa = y.dot(&la.solve(&y));
    Ok(-0.5 * (log_det(&la) - log_det(&l)) - 0.5 * (qa - q))
}

/// Bound on `Σ_{p>P} ½‖C_p^{−½}(C'_p − C_p)C_p^{−½}‖²`, which controls both
/// the mean and the variance of the omitted terms.
pub fn lr_tail_bound(spectrum: &Spectrum, noise: f64, diff_frobenius: f64, p: usize) -> f64 {
    0.5 * diff_frobenius * diff_frobenius * spectrum.tail_square_integral(p as f64) / (noise * noise)
}

/// Smallest power-of-two multiple of 64 for which the tail bound is below
/// `tol`.
pub fn lr_truncation(spectrum: &Spectrum, noise: f64, diff_frobenius: f64, tol: f64) -> usize {
    let mut p = 64usize;
    while lr_tail_bound(spectrum, noise, diff_frobenius, p) >= tol && p < (1 << 40) {
        p *= 2;
    }
    p
}

/// Precomputed `A_p = C'_p⁻¹ − C_p⁻¹` and the log-determinant offset, so that
/// `log LR = −½ Σ_p (log|C'_p| − log|C_p|) − ½ Σ_p Y_pᵀ A_p Y_p`.
#[derive(Debug, Clone)]
pub struct LikelihoodRatio {
    d: usize,
    p_max: usize,
    a: Vec<f64>,
    offset: f64,
    tail_bound: f64,
    /// Exact mean and variance of the truncated log-LR under `P_Σ`.
    exact_mean: f64,
    exact_variance: f64,
}

impl LikelihoodRatio {
    pub fn new(spectrum: &Spectrum, eta2: f64, n: u64, sigma: &SymMatrix, alt: &SymMatrix) -> Result<Self> {
        let d = sigma.dim();
        if alt.dim() != d {
            return Err(Error::dims(d, alt.dim()));
        }
        sigma.require_positive_definite()?;
        alt.require_positive_definite()?;
        let noise = eta2 / n as f64;
        let diff = (alt.as_matrix() - sigma.as_matrix()).norm();
        let p_max = if diff == 0.0 { 1 } else { lr_truncation(spectrum, noise, diff, LR_TAIL_TOL) };
        let mut a = Vec::with_capacity(p_max * d * d);
        let mut offset = Compensated::default();
        let mut mean = Compensated::default();
        let mut var = Compensated::default();
        let eye = DMatrix::<f64>::identity(d, d);
        for p in 1..=p_max {
            let lam = spectrum.eigenvalue(p)?;
            let c = sigma.as_matrix() * lam + &eye * noise;
            let ca = alt.as_matrix() * lam + &eye * noise;
            let (l, la) = (
                Cholesky::new(c.clone()).ok_or(Error::Singular)?,
                Cholesky::new(ca).ok_or(Error::Singular)?,
            );
            let ap = la.inverse() - l.inverse();
            let ld = log_det(&la) - log_det(&l);
            offset.add(-0.5 * ld);
            let ac = &ap * &c;
            mean.add(-0.5 * ld - 0.5 * ac.trace());
            var.add(0.5 * (&ac * &ac).trace());
            a.extend(ap.iter());
        }
        Ok(LikelihoodRatio {
            d,
            p_max,
            a,
            offset: offset.value(),
            tail_bound: lr_tail_bound(spectrum, noise, diff, p_max),
            exact_mean: mean.value(),
            exact_variance: var.value(),
        })
    }

    pub fn p_max(&self) -> usize {
        self.p_max
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn exact_mean(&self) -> f64 {
        self.exact_mean
    }

    pub fn exact_variance(&self) -> f64 {
        self.exact_variance
    }

    pub fn eval(&self, data: &SeqValues) -> Result<f64> {
        if data.d != self.d {
            return Err(Error::dims(self.d, data.d));
        }
        if data.p_max < self.p_max {
            return Err(Error::param(
                "p_max",
                format!("sample has {} frequencies, the tail bound needs {}", data.p_max, self.p_max),
            ));
        }
        let d = self.d;
        let mut q = Compensated::default();
        for p in 1..=self.p_max {
            let y = data.y(p);
            let a = &self.a[(p - 1) * d * d..p * d * d];
            let mut s = 0.0;
            for j in 0..d {
                for i in 0..d {
                    s += y[i] * a[i + j * d] * y[j];
                }
            }
            q.add(s);
        }
        Ok(self.offset - 0.5 * q.value())
    }
}

/// `log dP_{Σ_alt}/dP_Σ` on the sample.
pub fn loglik_ratio(sample: &SeqSample, sigma: &SymMatrix, alt: &SymMatrix) -> Result<f64> {
    let m = &sample.model;
    if sigma == alt {
        sigma.require_positive_definite()?;
        return Ok(0.0);
    }
    LikelihoodRatio::new(m.spectrum(), m.eta2(), m.n(), sigma, alt)?.eval(&sample.data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanReport {
    pub n: u64,
    pub h: SymMatrix,
    pub r_n: f64,
    pub replications: usize,
    pub p_max: usize,
    pub mean: f64,
    pub variance: f64,
    /// `−½‖H‖²_{I(Σ)Z}`.
    pub target_mean: f64,
    /// `‖H‖²_{I(Σ)Z}`.
    pub target_variance: f64,
    /// Exact moments of the truncated log-LR at this `n`.
    pub finite_n_mean: f64,
    pub finite_n_variance: f64,
    pub tail_bound: f64,
}

impl LanReport {
    pub fn mean_gap(&self) -> f64 {
        (self.mean - self.target_mean).abs()
    }

    pub fn variance_gap(&self) -> f64 {
        (self.variance - self.target_variance).abs()
    }
}

/// `vec(H)ᵀ I(Σ) Z vec(H)` at `ζ = lim r_n² p_n`.
pub fn lan_norm_sq(model: &ParamModel, h: &SymMatrix) -> Result<f64> {
    let s = model.spectrum();
    let info = asymptotic_fisher(model.sigma(), s.delta(), s.zeta_limit(), model.eta2().sqrt())?;
    let v = vec(h.as_matrix());
    Ok(v.dot(&(info.times_z() * &v)))
}

/// Log-LR of `P_{Σ+r_n H}` against `P_Σ` over `replications` samples drawn
/// under `P_Σ`.
pub fn lan_diagnostic(model: &ParamModel, h: &SymMatrix, replications: usize, stream: &SeedStream) -> Result<LanReport> {
    if replications < 2 {
        return Err(Error::param("replications", "need at least 2"));
    }
    if h.dim() != model.d() {
        return Err(Error::dims(model.d(), h.dim()));
    }
    let r_n = model.spectrum().rate(model.n());
    let alt = model.sigma().axpby(1.0, h, r_n);
    let lr = LikelihoodRatio::new(model.spectrum(), model.eta2(), model.n(), model.sigma(), &alt)?;
    let eig = model.sigma().eigen();
    let values: Vec<f64> = (0..replications as u64)
        .into_par_iter()
        .map(|rep| -> Result<f64> {
            if lr.p_max == 1 && h.as_matrix().iter().all(|v| *v == 0.0) {
                return Ok(0.0);
            }
            let mut rng = stream.substream(purpose::LAN, &[rep]);
            let mut buf = SeqValues::zeros(model.d(), lr.p_max);
            fill_sequence(model, &eig, &mut rng, &mut buf)?;
            lr.eval(&buf)
        })
        .collect::<Result<_>>()?;
    let (mean, variance) = mean_var(&values);
    let v = lan_norm_sq(model, h)?;
    Ok(LanReport {
        n: model.n(),
        h: h.clone(),
        r_n,
        replications,
        p_max: lr.p_max,
        mean,
        variance,
        target_mean: -0.5 * v,
        target_variance: v,
        finite_n_mean: lr.exact_mean,
        finite_n_variance: lr.exact_variance,
        tail_bound: lr.tail_bound,
    })
}

pub(crate) fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mut s = Compensated::default();
    x.iter().for_each(|v| s.add(*v));
    let mean = s.value() / n;
    let mut q = Compensated::default();
    x.iter().for_each(|v| q.add((v - mean) * (v - mean)));
    (mean, q.value() / (n - 1.0))
}

/// `4‖Σ₁^{−½}(μ₁−μ₂)‖² + ½‖Σ₁^{−½}(Σ₂−Σ₁)Σ₁^{−½}‖²_F`, an upper bound on the
/// squared Hellinger distance `∫(√f − √g)²`.
pub fn hellinger_bound_gauss(mu1: &[f64], s1: &SymMatrix, mu2: &[f64], s2: &SymMatrix) -> Result<f64> {
    let d = s1.dim();
    if mu1.len() != d || mu2.len() != d || s2.dim() != d {
        return Err(Error::dims(d, mu1.len().max(mu2.len()).max(s2.dim())));
    }
    let e = s1.eigen();
    if !(e.values[0] > 0.0) {
        return Err(Error::Singular);
    }
    let w = inv_sqrt(s1)?;
    let dm = DVector::from_iterator(d, mu1.iter().zip(mu2).map(|(a, b)| a - b));
    let mean_term = (w.as_matrix() * dm).norm_squared();
    let cov_term = (w.as_matrix() * (s2.as_matrix() - s1.as_matrix()) * w.as_matrix()).norm_squared();
    Ok(4.0 * mean_term + 0.5 * cov_term)
}

/// Exact `∫(√f − √g)²` for two normal laws.
pub fn hellinger_sq_gauss(mu1: &[f64], s1: &SymMatrix, mu2: &[f64], s2: &SymMatrix) -> Result<f64> {
    let d = s1.dim();
    if mu1.len() != d || mu2.len() != d || s2.dim() != d {
        return Err(Error::dims(d, mu1.len().max(mu2.len()).max(s2.dim())));
    }
    let avg = s1.axpby(0.5, s2, 0.5);
    let (l1, l2, la) = (chol(s1)?, chol(s2)?, chol(&avg)?);
    let dm = DVector::from_iterator(d, mu1.iter().zip(mu2).map(|(a, b)| a - b));
    let quad = dm.dot(&la.solve(&dm));
    let log_bc = 0.25 * log_det(&l1) + 0.25 * log_det(&l2) - 0.5 * log_det(&la) - quad / 8.0;
    Ok(-2.0 * log_bc.exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendVerdict {
    Vanishing,
    Diverging,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub n: u64,
    pub lower: usize,
    pub upper: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub points: Vec<TrendPoint>,
    pub verdict: TrendVerdict,
}

/// Frequencies below `cutoff(n)·p_n` are left out of the aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrendCutoff {
    /// `a_n = 1/ln n`.
    #[default]
    InverseLog,
    /// Sum from `p = 1`.
    None,
}

/// `D_n = Σ_p ½‖C_p^{−½}(C'_p − C_p)C_p^{−½}‖²` with `C_p = Σλ_p + η²/n`,
/// `C'_p = Σλ'_p + η²/n`, summed from the cutoff until the remaining terms
/// are negligible.
pub fn spectrum_distance(s1: &Spectrum, s2: &Spectrum, sigma: &SymMatrix, eta: f64, n: u64, cutoff: TrendCutoff) -> Result<TrendPoint> {
    sigma.require_positive_definite()?;
    if !(eta > 0.0) {
        return Err(Error::param("eta", "must be positive"));
    }
    let noise = eta * eta / n as f64;
    let s = sigma.eigen().values;
    let p_n = s1.balance_index(n)?;
    let lower = match cutoff {
        TrendCutoff::InverseLog => (p_n / (n as f64).ln()).ceil().max(1.0) as usize,
        TrendCutoff::None => 1,
    };
    let mut total = Compensated::default();
    let term = |p: usize| -> Result<f64> {
        let (l1, l2) = (s1.eigenvalue(p)?, s2.eigenvalue(p)?);
        Ok(s.iter().map(|si| (si * (l2 - l1) / (si * l1 + noise)).powi(2)).sum::<f64>() * 0.5)
    };
    // sum dyadic blocks past p_n until one contributes < 1e-12 of the total
    let mut lo = lower;
    let mut hi = lower.max(p_n.ceil() as usize).max(16);
    loop {
        let mut block = Compensated::default();
        for p in lo..=hi {
            block.add(term(p)?);
        }
        total.add(block.value());
        let done = hi as f64 >= 4.0 * p_n && block.value() <= 1e-12 * total.value();
        if done || hi >= (1 << 36) {
            break;
        }
        lo = hi + 1;
        hi *= 2;
    }
    Ok(TrendPoint {
        n,
        lower,
        upper: hi,
        distance: total.value(),
    })
}

pub fn spectrum_distance_trend(s1: &Spectrum, s2: &Spectrum, sigma: &SymMatrix, eta: f64, n_list: &[u64], cutoff: TrendCutoff) -> Result<TrendReport> {
    if n_list.len() < 2 {
        return Err(Error::param("n_list", "need at least two sample sizes"));
    }
    let points = n_list
        .iter()
        .map(|&n| spectrum_distance(s1, s2, sigma, eta, n, cutoff))
        .collect::<Result<Vec<_>>>()?;
    let dec = points.windows(2).all(|w| w[1].distance < w[0].distance);
    let inc = points.windows(2).all(|w| w[1].distance > w[0].distance);
    let verdict = match (dec, inc) {
        (true, false) => TrendVerdict::Vanishing,
        (false, true) => TrendVerdict::Diverging,
        _ => TrendVerdict::Inconclusive,
    };
    Ok(TrendReport { points, verdict })
}

/// `tr I_window / tr I_full`.
pub fn window_information_fraction(model: &ParamModel, window: &FreqWindow) -> Result<f64> {
    let part = spectral_window(model, window)?.trace();
    let full = spectral_window(model, &FreqWindow::Full)?.trace();
    Ok((part / full).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fisher::full_truncation;
    use crate::rng::SeedLineage;
    use crate::simulate::sample_sequence;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sig(rows: &[Vec<f64>]) -> SymMatrix {
        SymMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn single_frequency_example() {
        let v = freq_loglik_ratio(&[1.0], &SymMatrix::identity(1), &SymMatrix::scaled_identity(1, 2.0)).unwrap();
        assert_relative_eq!(v, -0.5 * 2f64.ln() + 0.25, max_relative = 1e-14);
        assert!((v - (-0.0965736)).abs() < 1e-7);
    }

    #[test]
    fn equal_matrices_give_zero() {
        let m = ParamModel::new(SymMatrix::identity(2), 1.0, 10_000, Spectrum::brownian_motion(), 4.0).unwrap();
        let s = sample_sequence(&m, 10, SeedLineage::new(SeedStream::new(1), purpose::SEQUENCE, &[])).unwrap();
        assert_eq!(loglik_ratio(&s, m.sigma(), m.sigma()).unwrap(), 0.0);
        let h = SymMatrix::from_diagonal(&[0.0, 0.0]);
        let r = lan_diagnostic(&m, &h, 10, &SeedStream::new(1)).unwrap();
        assert_eq!((r.mean, r.variance), (0.0, 0.0));
    }

    #[test]
    fn agrees_with_termwise_densities() {
        let m = ParamModel::new(sig(&[vec![1.0, 0.3], vec![0.3, 0.8]]), 1.0, 100, Spectrum::brownian_motion(), 4.0).unwrap();
        let alt = sig(&[vec![1.2, 0.1], vec![0.1, 0.9]]);
        let lr = LikelihoodRatio::new(m.spectrum(), 1.0, 100, m.sigma(), &alt).unwrap();
        let s = sample_sequence(&m, lr.p_max(), SeedLineage::new(SeedStream::new(3), purpose::SEQUENCE, &[])).unwrap();
        let fast = loglik_ratio(&s, m.sigma(), &alt).unwrap();
        // independent path: explicit bivariate normal densities
        let logpdf = |y: &[f64], c: &DMatrix<f64>| {
            let det = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)];
            let q = (c[(1, 1)] * y[0] * y[0] - 2.0 * c[(0, 1)] * y[0] * y[1] + c[(0, 0)] * y[1] * y[1]) / det;
            -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * q
        };
        let mut slow = 0.0;
        for p in 1..=lr.p_max() {
            let lam = m.eigenvalue(p).unwrap();
            let c = m.sigma().as_matrix() * lam + DMatrix::identity(2, 2) * 0.01;
            let ca = alt.as_matrix() * lam + DMatrix::identity(2, 2) * 0.01;
            slow += logpdf(s.y(p), &ca) - logpdf(s.y(p), &c);
        }
        assert!((fast - slow).abs() < 1e-10 * slow.abs().max(1.0), "{fast} {slow}");
    }

    #[test]
    fn antisymmetry() {
        let m = ParamModel::new(SymMatrix::identity(1), 1.0, 1000, Spectrum::brownian_motion(), 4.0).unwrap();
        let alt = SymMatrix::scaled_identity(1, 1.3);
        let lr = LikelihoodRatio::new(m.spectrum(), 1.0, 1000, m.sigma(), &alt).unwrap();
        let s = sample_sequence(&m, lr.p_max(), SeedLineage::new(SeedStream::new(4), purpose::SEQUENCE, &[])).unwrap();
        let a = loglik_ratio(&s, m.sigma(), &alt).unwrap();
        let b = loglik_ratio(&s, &alt, m.sigma()).unwrap();
        assert!((a + b).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn short_sample_rejected() {
        let m = ParamModel::new(SymMatrix::identity(1), 1.0, 1000, Spectrum::brownian_motion(), 4.0).unwrap();
        let s = sample_sequence(&m, 5, SeedLineage::new(SeedStream::new(4), purpose::SEQUENCE, &[])).unwrap();
        assert!(loglik_ratio(&s, m.sigma(), &SymMatrix::scaled_identity(1, 2.0)).is_err());
        assert!(loglik_ratio(&s, m.sigma(), &SymMatrix::scaled_identity(1, -2.0)).is_err());
    }

    #[test]
    fn exact_moments_match_simulation() {
        let m = ParamModel::new(SymMatrix::identity(1), 1.0, 10_000, Spectrum::brownian_motion(), 4.0).unwrap();
        let r = lan_diagnostic(&m, &SymMatrix::identity(1), 4000, &SeedStream::new(11)).unwrap();
        let se_mean = (r.finite_n_variance / 4000.0).sqrt();
        assert!((r.mean - r.finite_n_mean).abs() < 4.0 * se_mean);
        assert!((r.variance / r.finite_n_variance - 1.0).abs() < 4.0 * (2.0 / 4000f64).sqrt());
        assert!(r.tail_bound < LR_TAIL_TOL);
    }

    #[test]
    fn lan_targets() {
        let m = ParamModel::new(SymMatrix::identity(1), 1.0, 1_000_000, Spectrum::brownian_motion(), 4.0).unwrap();
        let v = lan_norm_sq(&m, &SymMatrix::identity(1)).unwrap();
        assert_relative_eq!(v, 0.125, max_relative = 1e-12);
    }

    #[test]
    fn exact_moments_approach_limit() {
        let h = SymMatrix::identity(1);
        let mut gaps = vec![];
        for n in [10_000u64, 1_000_000, 100_000_000] {
            let m = ParamModel::new(SymMatrix::identity(1), 1.0, n, Spectrum::brownian_motion(), 4.0).unwrap();
            let r_n = m.spectrum().rate(n);
            let lr = LikelihoodRatio::new(m.spectrum(), 1.0, n, m.sigma(), &m.sigma().axpby(1.0, &h, r_n)).unwrap();
            gaps.push(((lr.exact_mean() + 1.0 / 16.0).abs(), (lr.exact_variance() - 0.125).abs()));
        }
        assert!(gaps.windows(2).all(|w| w[1].0 < w[0].0 && w[1].1 < w[0].1), "{gaps:?}");
    }

    #[test]
    fn hellinger_examples() {
        let one = SymMatrix::identity(1);
        assert_eq!(hellinger_bound_gauss(&[0.0], &one, &[0.0], &one).unwrap(), 0.0);
        assert_relative_eq!(hellinger_bound_gauss(&[0.1], &one, &[0.0], &one).unwrap(), 0.04, max_relative = 1e-12);
        assert!(hellinger_bound_gauss(&[0.0], &SymMatrix::from_diagonal(&[0.0]), &[0.0], &one).is_err());
        assert!(hellinger_sq_gauss(&[0.0], &one, &[0.0], &one).unwrap().abs() < 1e-16);
    }

    #[test]
    fn exact_hellinger_against_quadrature() {
        let (m1, v1, m2, v2) = (0.3, 1.5, -0.2, 0.7);
        let f = |x: f64, m: f64, v: f64| (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let q = crate::quad::integrate(|x| (f(x, m1, v1).sqrt() - f(x, m2, v2).sqrt()).powi(2), -30.0, 30.0, 1e-14, 1e-12);
        let h = hellinger_sq_gauss(&[m1], &SymMatrix::from_diagonal(&[v1]), &[m2], &SymMatrix::from_diagonal(&[v2])).unwrap();
        assert!((q.value - h).abs() < 1e-10);
    }

    #[test]
    fn bound_dominates_exact_on_moderate_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..2000 {
            let v1: f64 = rng.random_range(0.2..5.0);
            let ratio: f64 = rng.random_range(0.25..4.0);
            let dm: f64 = rng.random_range(-2.0..2.0);
            let (s1, s2) = (SymMatrix::from_diagonal(&[v1]), SymMatrix::from_diagonal(&[v1 * ratio]));
            let b = hellinger_bound_gauss(&[dm], &s1, &[0.0], &s2).unwrap();
            let h = hellinger_sq_gauss(&[dm], &s1, &[0.0], &s2).unwrap();
            assert!(b >= h, "v1={v1} ratio={ratio} dm={dm}");
        }
    }

    #[test]
    fn bound_fails_for_strong_contraction() {
        let one = SymMatrix::identity(1);
        let small = SymMatrix::from_diagonal(&[0.1]);
        let b = hellinger_bound_gauss(&[0.0], &one, &[0.0], &small).unwrap();
        let h = hellinger_sq_gauss(&[0.0], &one, &[0.0], &small).unwrap();
        assert_relative_eq!(b, 0.405, max_relative = 1e-12);
        assert!(h > 0.48 && h > b);
    }

    #[test]
    fn identical_spectra_have_zero_distance() {
        let s = Spectrum::brownian_motion();
        let r = spectrum_distance_trend(&s, &s, &SymMatrix::identity(1), 1.0, &[10_000, 1_000_000], TrendCutoff::default()).unwrap();
        assert!(r.points.iter().all(|p| p.distance == 0.0));
        assert_eq!(r.verdict, TrendVerdict::Inconclusive);
    }

    #[test]
    fn trend_directions() {
        let ns = [10_000u64, 1_000_000, 100_000_000];
        let one = SymMatrix::identity(1);
        let bm = Spectrum::brownian_motion();
        let bb = Spectrum::brownian_bridge();
        let fbm = Spectrum::fractional_bm(0.7).unwrap();
        assert_eq!(spectrum_distance_trend(&bm, &bb, &one, 1.0, &ns, TrendCutoff::default()).unwrap().verdict, TrendVerdict::Vanishing);
        assert_eq!(spectrum_distance_trend(&bm, &fbm, &one, 1.0, &ns, TrendCutoff::default()).unwrap().verdict, TrendVerdict::Diverging);
    }

    #[test]
    fn vanishing_relative_perturbation() {
        let c = std::f64::consts::PI.powi(-2);
        let base = Spectrum::power_law(c, 2.0).unwrap();
        let k = 200_000;
        let values: Vec<f64> = (1..=k).map(|p| c * (p as f64).powi(-2) * (1.0 + (p as f64).powf(-0.75))).collect();
        let pert = Spectrum::tabulated(values, c, 2.0).unwrap();
        let r = spectrum_distance_trend(&base, &pert, &SymMatrix::identity(1), 1.0, &[10_000, 1_000_000, 100_000_000], TrendCutoff::default()).unwrap();
        assert_eq!(r.verdict, TrendVerdict::Vanishing, "{r:?}");
    }

    #[test]
    fn window_fraction() {
        let m = ParamModel::new(SymMatrix::identity(1), 1.0, 1_000_000, Spectrum::brownian_motion(), 4.0).unwrap();
        assert_relative_eq!(window_information_fraction(&m, &FreqWindow::Full).unwrap(), 1.0, max_relative = 1e-15);
        let p = full_truncation(&m).unwrap();
        let f = window_information_fraction(&m, &FreqWindow::range(1, p).unwrap()).unwrap();
        assert!((f - 1.0).abs() < 1e-8);
        let p_n = m.balance_index().unwrap();
        let fr = |a: f64, b: f64| window_information_fraction(&m, &FreqWindow::around(p_n, a, b).unwrap()).unwrap();
        let (f1, f2, f3) = (fr(0.1, 10.0), fr(0.01, 100.0), fr(0.001, 1000.0));
        assert!(f1 < f2 && f2 < f3 && f3 <= 1.0);
    }
}
