//! Samplers for the sequence, discrete and asynchronous experiments, and the
//! projections of discrete data onto spectral coefficients.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{psd_sqrt, Eigen, SymMatrix};
use crate::model::{BlockModel, ObservationSchedule, ParamModel};
use crate::rng::SeedLineage;

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Vectors `Y_1, …, Y_P` in `ℝ^d`, stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqValues {
    pub d: usize,
    pub p_max: usize,
    pub values: Vec<f64>,
}

impl SeqValues {
    pub fn zeros(d: usize, p_max: usize) -> Self {
        SeqValues {
            d,
            p_max,
            values: vec![0.0; d * p_max],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.len());
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::param("rows", "need non-empty rows of equal length"));
        }
        Ok(SeqValues {
            d,
            p_max: rows.len(),
            values: rows.concat(),
        })
    }

    /// `Y_p`, `p >= 1`.
    pub fn y(&self, p: usize) -> &[f64] {
        &self.values[(p - 1) * self.d..p * self.d]
    }

    pub fn y_mut(&mut self, p: usize) -> &mut [f64] {
        &mut self.values[(p - 1) * self.d..p * self.d]
    }

    pub fn scaled(&self, c: f64) -> Self {
        SeqValues {
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }
}

/// A draw from the sequence experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqSample {
    pub model: ParamModel,
    pub data: SeqValues,
    pub lineage: Option<SeedLineage>,
}

impl SeqSample {
    pub fn p_max(&self) -> usize {
        self.data.p_max
    }

    pub fn y(&self, p: usize) -> &[f64] {
        self.data.y(p)
    }
}

/// Fills `out` with `Y_p ~ N(0, C_p)` for `p = 1..=p_max`, drawn as
/// `Qᵀ diag(√c_p) g` in the eigenbasis of `Σ` with `g` from `rng`.
pub fn fill_sequence<R: Rng + ?Sized>(model: &ParamModel, eig: &Eigen, rng: &mut R, out: &mut SeqValues) -> Result<()> {
    let d = model.d();
    let noise = model.noise_level();
    let mut g = vec![0.0; d];
    for p in 1..=out.p_max {
        let lam = model.eigenvalue(p)?;
        for (r, gr) in g.iter_mut().enumerate() {
            *gr = normal(rng) * (eig.values[r] * lam + noise).sqrt();
        }
        let y = out.y_mut(p);
        for (c, yc) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for r in 0..d {
                acc += eig.q[(r, c)] * g[r];
            }
            *yc = acc;
        }
    }
    Ok(())
}

/// Independent `Y_p ~ N(0, C_p)`, `p = 1..=p_max`, from the given substream.
pub fn sample_sequence(model: &ParamModel, p_max: usize, lineage: SeedLineage) -> Result<SeqSample> {
    if p_max < 1 {
        return Err(Error::param("p_max", "must be >= 1"));
    }
    let eig = model.sigma().eigen();
    let mut data = SeqValues::zeros(model.d(), p_max);
    fill_sequence(model, &eig, &mut lineage.rng(), &mut data)?;
    Ok(SeqSample {
        model: model.clone(),
        data,
        lineage: Some(lineage),
    })
}

/// Covariance kernel of the scalar driving process `G`.
#[derive(Clone)]
pub enum Kernel {
    BrownianMotion,
    BrownianBridge,
    /// Stationary OU, `k(s,t) = e^{−β|s−t|}/(2β)`.
    OrnsteinUhlenbeck { beta: f64 },
    FractionalBm { hurst: f64 },
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Kernel::BrownianMotion => f.write_str("BrownianMotion"),
            Kernel::BrownianBridge => f.write_str("BrownianBridge"),
            Kernel::OrnsteinUhlenbeck { beta } => write!(f, "OrnsteinUhlenbeck {{ beta: {beta} }}"),
            Kernel::FractionalBm { hurst } => write!(f, "FractionalBm {{ hurst: {hurst} }}"),
            Kernel::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Kernel {
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        match self {
            Kernel::BrownianMotion => s.min(t),
            Kernel::BrownianBridge => s.min(t) - s * t,
            Kernel::OrnsteinUhlenbeck { beta } => (-beta * (s - t).abs()).exp() / (2.0 * beta),
            Kernel::FractionalBm { hurst } => {
                let h2 = 2.0 * hurst;
                0.5 * (s.powf(h2) + t.powf(h2) - (s - t).abs().powf(h2))
            }
            Kernel::Custom(k) => k(s, t),
        }
    }

    pub fn label(&self) -> String {
        format!("{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscreteBackend {
    /// Factorisation of the `n×n` Gram matrix; any kernel, `n <= 20000`.
    Dense,
    /// Karhunen–Loève expansion with aliased frequencies aggregated in closed
    /// form (BM and BB only).
    KarhunenLoeve,
    /// Cumulative Gaussian increments (BM and BB only).
    Increments,
}

pub const DENSE_MAX_N: usize = 20_000;

enum Factor {
    /// Lower-triangular or symmetric `L` with `L Lᵀ = K`.
    Dense(DMatrix<f64>),
    /// `G(t_i) = Σ_q basis[i, q] √Λ_q g_q`.
    Spectral { basis: DMatrix<f64>, scale: Vec<f64> },
    Increments { bridge: bool },
}

/// Reusable sampler for `Ỹ_i = Σ^{½} G_{i/n} + ε_i`, `i = 1..n`.
pub struct DiscreteSampler {
    kernel: Kernel,
    n: usize,
    backend: DiscreteBackend,
    factor: Factor,
}

impl DiscreteSampler {
    pub fn new(kernel: Kernel, n: usize, backend: DiscreteBackend) -> Result<Self> {
        if n < 1 {
            return Err(Error::param("n", "must be >= 1"));
        }
        let closed_basis = matches!(kernel, Kernel::BrownianMotion | Kernel::BrownianBridge);
        let factor = match backend {
            DiscreteBackend::Dense => {
                if n > DENSE_MAX_N {
                    return Err(Error::param("n", format!("dense backend supports n <= {DENSE_MAX_N}, got {n}")));
                }
                let gram = DMatrix::from_fn(n, n, |i, j| kernel.eval((i + 1) as f64 / n as f64, (j + 1) as f64 / n as f64));
                match gram.clone().cholesky() {
                    Some(ch) => Factor::Dense(ch.l()),
                    None => Factor::Dense(psd_sqrt(&SymMatrix::symmetrised(&gram)?)?.into_matrix()),
                }
            }
            DiscreteBackend::KarhunenLoeve | DiscreteBackend::Increments if !closed_basis => {
                return Err(Error::UnsupportedBasis(format!(
                    "{backend:?} backend needs a Brownian motion or bridge kernel, got {}",
                    kernel.label()
                )));
            }
            DiscreteBackend::KarhunenLoeve => {
                let bridge = matches!(kernel, Kernel::BrownianBridge);
                let (basis, scale) = aliased_kl(n, bridge);
                Factor::Spectral { basis, scale }
            }
            DiscreteBackend::Increments => Factor::Increments {
                bridge: matches!(kernel, Kernel::BrownianBridge),
            },
        };
        Ok(DiscreteSampler {
            kernel,
            n,
            backend,
            factor,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn backend(&self) -> DiscreteBackend {
        self.backend
    }

    /// One path of the scalar process at `1/n, …, 1`.
    pub fn scalar_path<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.n;
        match &self.factor {
            Factor::Dense(l) => {
                let g = DVector::from_fn(n, |_, _| normal(rng));
                (l * g).iter().copied().collect()
            }
            Factor::Spectral { basis, scale } => {
                let g = DVector::from_fn(scale.len(), |q, _| normal(rng) * scale[q]);
                (basis * g).iter().copied().collect()
            }
            Factor::Increments { bridge } => {
                let h = (1.0 / n as f64).sqrt();
                let mut x = Vec::with_capacity(n);
                let mut acc = 0.0;
                for _ in 0..n {
                    acc += h * normal(rng);
                    x.push(acc);
                }
                if *bridge {
                    let end = acc;
                    for (i, v) in x.iter_mut().enumerate() {
                        *v -= (i + 1) as f64 / n as f64 * end;
                    }
                }
                x
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, sigma: &SymMatrix, eta2: f64, rng: &mut R) -> Result<DiscreteSample> {
        if !(eta2 >= 0.0 && eta2.is_finite()) {
            return Err(Error::param("eta2", format!("must be non-negative, got {eta2}")));
        }
        let d = sigma.dim();
        let root = psd_sqrt(sigma)?;
        let n = self.n;
        let paths: Vec<Vec<f64>> = (0..d).map(|_| self.scalar_path(rng)).collect();
        let eta = eta2.sqrt();
        let mut values = vec![0.0; n * d];
        for i in 0..n {
            for r in 0..d {
                let mut acc = 0.0;
                for c in 0..d {
                    acc += root.as_matrix()[(r, c)] * paths[c][i];
                }
                values[i * d + r] = acc;
            }
        }
        for v in values.iter_mut() {
            *v += eta * normal(rng);
        }
        Ok(DiscreteSample {
            d,
            n,
            eta2,
            kernel: self.kernel.label(),
            values,
        })
    }
}

/// Aliased KL factor on `t_i = i/n`: frequency `k` folds onto `q ∈ 1..n` and
/// the folded variances sum to `Λ_q = 1/(4n² sin²(π ω_q/(2n)))` with
/// `ω_q = q − ½` (BM) or `q` (BB).
fn aliased_kl(n: usize, bridge: bool) -> (DMatrix<f64>, Vec<f64>) {
    let nf = n as f64;
    let q_count = if bridge { n - 1 } else { n };
    let omega = |q: usize| if bridge { q as f64 } else { q as f64 - 0.5 };
    let scale: Vec<f64> = (1..=q_count)
        .map(|q| 1.0 / (2.0 * nf * (PI * omega(q) / (2.0 * nf)).sin()))
        .collect();
    let basis = DMatrix::from_fn(n, q_count, |i, q| SQRT_2 * (omega(q + 1) * PI * (i + 1) as f64 / nf).sin());
    (basis, scale)
}

/// Draws `n` observations at `t_i = i/n` with `dense` or KL backend.
pub fn sample_discrete(sigma: &SymMatrix, kernel: Kernel, n: usize, eta2: f64, backend: DiscreteBackend, lineage: &SeedLineage) -> Result<DiscreteSample> {
    DiscreteSampler::new(kernel, n, backend)?.sample(sigma, eta2, &mut lineage.rng())
}

/// Observations `Ỹ_i`, `i = 1..n`, at `t_i = i/n`, stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSample {
    pub d: usize,
    pub n: usize,
    pub eta2: f64,
    pub kernel: String,
    pub values: Vec<f64>,
}

impl DiscreteSample {
    pub fn from_values(d: usize, values: Vec<f64>, eta2: f64) -> Result<Self> {
        if d == 0 || values.len() % d != 0 {
            return Err(Error::dims(format!("multiple of {d}"), values.len()));
        }
        Ok(DiscreteSample {
            d,
            n: values.len() / d,
            eta2,
            kernel: "given".into(),
            values,
        })
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    /// `Ỹ_i`, `i >= 1`.
    pub fn y(&self, i: usize) -> &[f64] {
        &self.values[(i - 1) * self.d..i * self.d]
    }

    pub fn scaled(&self, c: f64) -> Self {
        DiscreteSample {
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    /// CSV with header `i,y_1,…,y_d`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["i".to_string()];
        header.extend((1..=self.d).map(|j| format!("y_{j}")));
        wr.write_record(&header).map_err(csv_err)?;
        for i in 1..=self.n {
            let mut rec = vec![i.to_string()];
            rec.extend(self.y(i).iter().map(|v| v.to_string()));
            wr.write_record(&rec).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Closed-form eigenbases with explicit antiderivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// `√2 sin((p − ½)πt)`
    BrownianMotion,
    /// `√2 sin(pπt)`
    BrownianBridge,
}

impl Basis {
    fn omega(&self, p: usize) -> f64 {
        match self {
            Basis::BrownianMotion => (p as f64 - 0.5) * PI,
            Basis::BrownianBridge => p as f64 * PI,
        }
    }

    pub fn eval(&self, p: usize, t: f64) -> f64 {
        SQRT_2 * (self.omega(p) * t).sin()
    }

    /// `∫_a^b φ_p(t) dt`.
    pub fn integral(&self, p: usize, a: f64, b: f64) -> f64 {
        let w = self.omega(p);
        SQRT_2 * ((w * a).cos() - (w * b).cos()) / w
    }

    pub fn for_kernel(kernel: &Kernel) -> Result<Self> {
        match kernel {
            Kernel::BrownianMotion => Ok(Basis::BrownianMotion),
            Kernel::BrownianBridge => Ok(Basis::BrownianBridge),
            other => Err(Error::UnsupportedBasis(other.label())),
        }
    }
}

/// `Ȳ_p[j] = Σ_i Ỹ_i[j] ∫_{((i−1)/n, i/n]} φ_p`, `p = 1..=p_max`.
pub fn extract_spectral_coeffs(sample: &DiscreteSample, basis: Basis, p_max: usize) -> Result<SeqValues> {
    if p_max < 1 {
        return Err(Error::param("p_max", "must be >= 1"));
    }
    let n = sample.n;
    let d = sample.d;
    let mut out = SeqValues::zeros(d, p_max);
    let mut w = vec![0.0; n];
    for p in 1..=p_max {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = basis.integral(p, i as f64 / n as f64, (i + 1) as f64 / n as f64);
        }
        let y = out.y_mut(p);
        for (i, wi) in w.iter().enumerate() {
            for (j, yj) in y.iter_mut().enumerate() {
                *yj += sample.values[i * d + j] * wi;
            }
        }
    }
    Ok(out)
}

/// Per-component tick series `(t_{i,j}, Y_{i,j})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentTicks {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickSeries {
    pub components: Vec<ComponentTicks>,
}

impl TickSeries {
    pub fn d(&self) -> usize {
        self.components.len()
    }

    /// CSV with header `t,component,value` (components numbered from 1).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "component", "value"]).map_err(csv_err)?;
        for (j, c) in self.components.iter().enumerate() {
            for (t, y) in c.t.iter().zip(&c.y) {
                wr.write_record([t.to_string(), (j + 1).to_string(), y.to_string()]).map_err(csv_err)?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Reusable sampler for `Y_{i,j} = (X_{t_{i,j}})_j + ε_{i,j}` with
/// `X_t = ∫₀ᵗ Σ_m^{½}(s) dB_s` and piecewise-constant `Σ_m`.
pub struct AsyncSampler {
    d: usize,
    /// Grid `0 = u_0 < u_1 < …` containing a uniform fine grid, every tick
    /// and every block boundary.
    steps: Vec<(f64, usize)>,
    roots: Vec<DMatrix<f64>>,
    /// For each component, the grid indices of its ticks.
    tick_index: Vec<Vec<usize>>,
    ticks: Vec<Vec<f64>>,
    eta: Vec<f64>,
}

impl AsyncSampler {
    pub fn new(model: &BlockModel, schedule: &ObservationSchedule, path_grid_size: usize) -> Result<Self> {
        let d = model.d();
        if schedule.d() != d {
            return Err(Error::dims(d, schedule.d()));
        }
        if schedule.n_min() != model.n_min() {
            return Err(Error::param(
                "schedule",
                format!("n_min {} differs from the block model's {}", schedule.n_min(), model.n_min()),
            ));
        }
        let need = 4 * schedule.n_max() as usize;
        if path_grid_size < need {
            return Err(Error::param("path_grid_size", format!("must be >= 4·max n_j = {need}, got {path_grid_size}")));
        }
        let m = model.m();
        let ticks: Vec<Vec<f64>> = schedule.components().iter().map(|c| c.ticks()).collect();
        let mut grid: Vec<f64> = (1..=path_grid_size).map(|i| i as f64 / path_grid_size as f64).collect();
        grid.extend((1..m).map(|k| k as f64 / m as f64));
        for t in &ticks {
            grid.extend_from_slice(t);
        }
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let mut steps = Vec::with_capacity(grid.len());
        let mut prev = 0.0;
        for &u in &grid {
            let block = ((0.5 * (prev + u) * m as f64).floor() as usize).min(m - 1);
            steps.push((u, block));
            prev = u;
        }
        let tick_index = ticks
            .iter()
            .map(|ts| {
                ts.iter()
                    .map(|t| grid.binary_search_by(|g| g.total_cmp(t)).expect("tick is on the grid"))
                    .collect()
            })
            .collect();
        let roots = model
            .sigmas()
            .iter()
            .map(|s| psd_sqrt(s).map(|r| r.into_matrix()))
            .collect::<Result<Vec<_>>>()?;
        Ok(AsyncSampler {
            d,
            steps,
            roots,
            tick_index,
            ticks,
            eta: schedule.components().iter().map(|c| c.eta).collect(),
        })
    }

    pub fn grid_len(&self) -> usize {
        self.steps.len()
    }

    /// Path increments use `path_rng`, observation noise uses `noise_rng`.
    pub fn sample<R1: Rng + ?Sized, R2: Rng + ?Sized>(&self, path_rng: &mut R1, noise_rng: &mut R2) -> TickSeries {
        let d = self.d;
        let mut x = vec![0.0; d];
        let mut g = vec![0.0; d];
        let mut path = vec![0.0; self.steps.len() * d];
        let mut prev = 0.0;
        for (idx, &(u, block)) in self.steps.iter().enumerate() {
            let h = (u - prev).sqrt();
            for gr in g.iter_mut() {
                *gr = h * normal(path_rng);
            }
            let root = &self.roots[block];
            for (r, xr) in x.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (c, gc) in g.iter().enumerate() {
                    acc += root[(r, c)] * gc;
                }
                *xr += acc;
            }
            path[idx * d..(idx + 1) * d].copy_from_slice(&x);
            prev = u;
        }
        let components = (0..d)
            .map(|j| {
                let y = self.tick_index[j]
                    .iter()
                    .map(|&idx| path[idx * d + j] + self.eta[j] * normal(noise_rng))
                    .collect();
                ComponentTicks {
                    t: self.ticks[j].clone(),
                    y,
                }
            })
            .collect();
        TickSeries { components }
    }
}

/// Simulates tick data for the block model with schedule `schedule`.
pub fn sample_async(model: &BlockModel, schedule: &ObservationSchedule, path_grid_size: usize, path: &SeedLineage, noise: &SeedLineage) -> Result<TickSeries> {
    Ok(AsyncSampler::new(model, schedule, path_grid_size)?.sample(&mut path.rng(), &mut noise.rng()))
}

/// Vectors `Y_pk ∈ ℝ^d`, `k = 0..m`, `p = 1..=P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockValues {
    pub m: usize,
    pub blocks: Vec<SeqValues>,
}

impl BlockValues {
    pub fn p_max(&self) -> usize {
        self.blocks[0].p_max
    }

    pub fn y(&self, p: usize, k: usize) -> &[f64] {
        self.blocks[k].y(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSeqSample {
    pub model: BlockModel,
    pub data: BlockValues,
    pub lineage: Option<SeedLineage>,
}

/// Per-block eigen-factors of `Ξ_k⁻¹ Σ_k Ξ_k⁻¹` for sampling `C_pk`.
pub struct BlockSampler {
    model: BlockModel,
    xi: Vec<Vec<f64>>,
    eig: Vec<Eigen>,
}

impl BlockSampler {
    pub fn new(model: &BlockModel) -> Result<Self> {
        let d = model.d();
        let mut xi = Vec::with_capacity(model.m());
        let mut eig = Vec::with_capacity(model.m());
        for k in 0..model.m() {
            let x: Vec<f64> = model.xi2(k).iter().map(|v| v.sqrt()).collect();
            let s = model.sigma(k).as_matrix();
            let w = DMatrix::from_fn(d, d, |i, j| s[(i, j)] / (x[i] * x[j]));
            eig.push(Eigen::of(&SymMatrix::symmetrised(&w)?));
            xi.push(x);
        }
        Ok(BlockSampler {
            model: model.clone(),
            xi,
            eig,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, p_max: usize, rng: &mut R) -> Result<BlockValues> {
        let d = self.model.d();
        let inv_n = 1.0 / self.model.n_min() as f64;
        let mut g = vec![0.0; d];
        let mut blocks = Vec::with_capacity(self.model.m());
        for k in 0..self.model.m() {
            let e = &self.eig[k];
            let mut vals = SeqValues::zeros(d, p_max);
            for p in 1..=p_max {
                let lam = self.model.lambda(p)?;
                for (r, gr) in g.iter_mut().enumerate() {
                    *gr = normal(rng) * (e.values[r] * lam + inv_n).sqrt();
                }
                let y = vals.y_mut(p);
                for (c, yc) in y.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for r in 0..d {
                        acc += e.q[(r, c)] * g[r];
                    }
                    *yc = self.xi[k][c] * acc;
                }
            }
            blocks.push(vals);
        }
        Ok(BlockValues {
            m: self.model.m(),
            blocks,
        })
    }
}

/// Independent `Y_pk ~ N(0, C_pk)`.
pub fn sample_block_sequence(model: &BlockModel, p_max: usize, lineage: SeedLineage) -> Result<BlockSeqSample> {
    if p_max < 1 {
        return Err(Error::param("p_max", "must be >= 1"));
    }
    let data = BlockSampler::new(model)?.sample(p_max, &mut lineage.rng())?;
    Ok(BlockSeqSample {
        model: model.clone(),
        data,
        lineage: Some(lineage),
    })
}

/// `S_pk[j] = ∫ φ_pk(t) Ỹ_j(t) dt` for the left-open step interpolation
/// `Ỹ_j = Y_{i,j}` on `(t_{i−1,j}, t_{i,j}]`, with
/// `φ_pk = √(2m) cos(pπ(tm−k))` on block `k`.
///
/// Summation by parts leaves `Σ_i F_pk(t_i)(Y_i − Y_{i+1})` over ticks inside
/// the block, with `F_pk(t) = √(2m) sin(pπ(tm−k))/(pπm)`.
pub fn block_coeffs_from_ticks(ticks: &TickSeries, model: &BlockModel, p_max: usize) -> Result<BlockValues> {
    let m = model.m();
    let d = model.d();
    if ticks.d() != d {
        return Err(Error::dims(d, ticks.d()));
    }
    if p_max < 1 {
        return Err(Error::param("p_max", "must be >= 1"));
    }
    let mf = m as f64;
    let amp = (2.0 * mf).sqrt() / (PI * mf);
    let mut blocks = vec![SeqValues::zeros(d, p_max); m];
    let mut sines = vec![0.0; p_max];
    for (j, comp) in ticks.components.iter().enumerate() {
        let mut counts = vec![0usize; m];
        for &t in &comp.t {
            let k = ((t * mf).ceil() as usize).clamp(1, m) - 1;
            counts[k] += 1;
        }
        for (k, &c) in counts.iter().enumerate() {
            if c < 2 * p_max {
                return Err(Error::UnderResolvedBlock {
                    block: k,
                    component: j,
                    ticks: c,
                    required: 2 * p_max,
                });
            }
        }
        let n = comp.t.len();
        for i in 0..n.saturating_sub(1) {
            let t = comp.t[i];
            let tm = t * mf;
            let k = tm.floor() as usize;
            let u = tm - k as f64;
            if u <= 0.0 || k >= m {
                continue;
            }
            let jump = comp.y[i] - comp.y[i + 1];
            // sin(pθ) by the Chebyshev recurrence
            let theta = PI * u;
            let two_cos = 2.0 * theta.cos();
            let (mut s_prev, mut s_cur) = (0.0, theta.sin());
            for sp in sines.iter_mut() {
                *sp = s_cur;
                let next = two_cos * s_cur - s_prev;
                s_prev = s_cur;
                s_cur = next;
            }
            let block = &mut blocks[k];
            for p in 1..=p_max {
                block.values[(p - 1) * d + j] += amp * sines[p - 1] / p as f64 * jump;
            }
        }
    }
    Ok(BlockValues { m, blocks })
}
