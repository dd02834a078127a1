//! Dense symmetric-matrix algebra used by every other module.
//!
//! Vectorisation is column-stacking throughout: `vec(A)[i + j*d] = A[(i, j)]`.
//! All `d²`-indexed objects in the crate (Fisher matrices, weights, estimates)
//! share this convention.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff below which [`psd_sqrt`] clamps to zero.
pub const PSD_CLAMP_REL: f64 = 1e-12;

/// A real symmetric `d×d` matrix. Symmetry is exact as stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps `m`, rejecting it unless `m[(i,j)] == m[(j,i)]` bit for bit.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dims("square matrix", format!("{}x{}", m.nrows(), m.ncols())));
        }
        let d = m.nrows();
        for j in 0..d {
            for i in (j + 1)..d {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(SymMatrix(m))
    }

    /// Replaces `m` by `(m + mᵀ)/2`.
    pub fn symmetrised(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dims("square matrix", format!("{}x{}", m.nrows(), m.ncols())));
        }
        let mut s = (m + m.transpose()) * 0.5;
        // enforce bitwise symmetry against rounding in the addition
        let d = s.nrows();
        for j in 0..d {
            for i in (j + 1)..d {
                s[(j, i)] = s[(i, j)];
            }
        }
        Ok(SymMatrix(s))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(Error::param("matrix", "empty"));
        }
        let mut m = DMatrix::zeros(d, d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::dims(format!("{d} columns"), format!("{} in row {i}", row.len())));
            }
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        Self::new(m)
    }

    pub fn identity(d: usize) -> Self {
        SymMatrix(DMatrix::identity(d, d))
    }

    pub fn scaled_identity(d: usize, c: f64) -> Self {
        SymMatrix(DMatrix::identity(d, d) * c)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..d).map(|i| (0..d).map(|j| self.0[(i, j)]).collect()).collect()
    }

    /// Eigendecomposition with ascending eigenvalues.
    pub fn eigen(&self) -> Eigen {
        Eigen::of(self)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().values[0]
    }

    pub fn is_positive_definite(&self, tol: f64) -> bool {
        self.min_eigenvalue() > tol
    }

    pub fn require_positive_definite(&self) -> Result<()> {
        let e = self.min_eigenvalue();
        if e > 0.0 {
            Ok(())
        } else {
            Err(Error::NotPositiveDefinite { min_eigenvalue: e })
        }
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|j| (0..d).all(|i| i == j || self.0[(i, j)] == 0.0))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)]).collect()
    }

    pub fn vec(&self) -> DVector<f64> {
        vec(&self.0)
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix(&self.0 * c)
    }

    /// `a·self + b·other`; symmetric by construction.
    pub fn axpby(&self, a: f64, other: &SymMatrix, b: f64) -> SymMatrix {
        SymMatrix(&self.0 * a + &other.0 * b)
    }

    /// `t · self · tᵀ` for an arbitrary square `t`.
    pub fn congruence(&self, t: &DMatrix<f64>) -> Result<SymMatrix> {
        if t.ncols() != self.dim() {
            return Err(Error::dims(self.dim(), t.ncols()));
        }
        SymMatrix::symmetrised(&(t * &self.0 * t.transpose()))
    }

    pub fn inverse(&self) -> Result<SymMatrix> {
        let e = self.eigen();
        if e.values.iter().any(|v| *v == 0.0) {
            return Err(Error::Singular);
        }
        Ok(e.map_values(|v| 1.0 / v))
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        SymMatrix::from_rows(&rows)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(s: SymMatrix) -> Self {
        s.to_rows()
    }
}

/// `S = Qᵀ diag(values) Q` with `Q` orthogonal; the rows of `q` are the
/// eigenvectors. Eigenvalues are ascending.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub q: DMatrix<f64>,
}

impl Eigen {
    pub fn of(s: &SymMatrix) -> Self {
        let d = s.dim();
        let se = SymmetricEigen::new(s.as_matrix().clone());
        let mut idx: Vec<usize> = (0..d).collect();
        idx.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
        let values = idx.iter().map(|&k| se.eigenvalues[k]).collect();
        let mut q = DMatrix::zeros(d, d);
        for (row, &k) in idx.iter().enumerate() {
            for c in 0..d {
                q[(row, c)] = se.eigenvectors[(c, k)];
            }
        }
        Eigen { values, q }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `Qᵀ diag(f(values)) Q`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let d = self.dim();
        let mut scaled = self.q.clone();
        for r in 0..d {
            let v = f(self.values[r]);
            for c in 0..d {
                scaled[(r, c)] *= v;
            }
        }
        let m = self.q.transpose() * scaled;
        SymMatrix::symmetrised(&m).expect("square by construction")
    }
}

/// Column-stacking vectorisation.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`] for a `d×d` matrix.
pub fn mat(v: &DVector<f64>, d: usize) -> Result<DMatrix<f64>> {
    if v.len() != d * d {
        return Err(Error::dims(d * d, v.len()));
    }
    Ok(DMatrix::from_column_slice(d, d, v.as_slice()))
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for l in 0..bc {
                for k in 0..br {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// The `d²×d²` matrix `Z` with `Z·vec(A) = vec(A + Aᵀ)`, i.e. identity plus
/// the commutation matrix. It is also `Cov(vec(ggᵀ))` for standard normal `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct Symmetriser {
    d: usize,
    z: DMatrix<f64>,
}

impl Symmetriser {
    pub fn new(d: usize) -> Self {
        let n = d * d;
        let mut z = DMatrix::identity(n, n);
        for i in 0..d {
            for j in 0..d {
                // vec index of (i,j) is i + j*d; its transpose sits at j + i*d
                z[(i + j * d, j + i * d)] += 1.0;
            }
        }
        Symmetriser { d, z }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    /// `Z·v` without forming the product: `vec(A + Aᵀ)` for `A = mat(v)`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let d = self.d;
        let mut out = v.clone();
        for i in 0..d {
            for j in 0..d {
                out[i + j * d] += v[j + i * d];
            }
        }
        out
    }

    /// `M·Z` for a `k×d²` matrix.
    pub fn right_apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m * &self.z
    }
}

/// Symmetric square root through the eigendecomposition.
///
/// Eigenvalues in `[-tol, tol]` with `tol = 1e-12 · λ_max` are clamped to
/// zero; anything more negative is rejected.
pub fn psd_sqrt(s: &SymMatrix) -> Result<SymMatrix> {
    let e = s.eigen();
    let largest = e.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tol = PSD_CLAMP_REL * largest;
    if let Some(&min) = e.values.first() {
        if min < -tol {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
    }
    Ok(e.map_values(|v| if v <= tol { 0.0 } else { v.sqrt() }))
}

/// Inverse symmetric square root of a positive-definite matrix.
pub fn inv_sqrt(s: &SymMatrix) -> Result<SymMatrix> {
    let e = s.eigen();
    if e.values[0] <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: e.values[0],
        });
    }
    Ok(e.map_values(|v| 1.0 / v.sqrt()))
}

/// `⟨A, B⟩_C = vec(A)ᵀ C vec(B)`.
pub fn inner_weighted(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() || !a.is_square() {
        return Err(Error::dims(format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    let n = a.nrows() * a.ncols();
    if c.shape() != (n, n) {
        return Err(Error::dims(format!("({n}, {n})"), format!("{:?}", c.shape())));
    }
    let va = vec(a);
    let vb = vec(b);
    Ok(va.dot(&(c * vb)))
}

/// Relative Frobenius distance `‖a − b‖_F / ‖b‖_F`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Solves `a x = b` for symmetric positive-definite `a`, falling back to LU.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    a.clone().lu().solve(b).ok_or(Error::Singular)
}

pub fn invert(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.inverse());
    }
    a.clone().try_inverse().ok_or(Error::Singular)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> SymMatrix {
        let a = random_matrix(rng, d, d);
        SymMatrix::symmetrised(&(&a * a.transpose() + DMatrix::identity(d, d) * 0.1)).unwrap()
    }

    #[test]
    fn vec_is_column_stacking() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(vec(&m).as_slice(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(vec(&DMatrix::identity(2, 2)).as_slice(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn mat_rejects_wrong_length() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(mat(&v, 2), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn kron_examples() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_eq!(kron(&i2, &i2), DMatrix::identity(4, 4));
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 4.0]));
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 4.0, 6.0, 8.0]));
        assert_eq!(kron(&a, &b), expect);
    }

    #[test]
    fn kron_vec_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 2, 2);
            let b = random_matrix(&mut rng, 2, 2);
            let c = random_matrix(&mut rng, 2, 2);
            let lhs = vec(&(&a * &b * &c));
            let rhs = kron(&c.transpose(), &a) * vec(&b);
            assert!((lhs - rhs).amax() < 1e-12);
        }
    }

    #[test]
    fn kron_mixed_product_and_associativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(&mut rng, 2, 3);
        let b = random_matrix(&mut rng, 3, 2);
        let c = random_matrix(&mut rng, 3, 2);
        let d = random_matrix(&mut rng, 2, 3);
        let lhs = kron(&a, &b) * kron(&c, &d);
        let rhs = kron(&(&a * &c), &(&b * &d));
        assert!((lhs - rhs).amax() < 1e-12);
        let lhs = kron(&kron(&a, &b), &c);
        let rhs = kron(&a, &kron(&b, &c));
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn symmetriser_examples() {
        assert_eq!(Symmetriser::new(1).matrix()[(0, 0)], 2.0);
        let z = Symmetriser::new(2);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((z.matrix() * vec(&a)).as_slice(), &[2.0, 5.0, 5.0, 8.0]);
        assert_eq!(z.apply(&vec(&a)).as_slice(), &[2.0, 5.0, 5.0, 8.0]);
    }

    #[test]
    fn symmetriser_is_psd_singular_and_commutes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 2..=4 {
            let z = Symmetriser::new(d);
            let zs = SymMatrix::new(z.matrix().clone()).unwrap();
            let e = zs.eigen();
            assert!(e.values[0].abs() < 1e-12, "singular for d >= 2");
            assert!(e.values.iter().all(|v| *v > -1e-12));
            let a = random_matrix(&mut rng, d, d);
            let aa = kron(&a, &a);
            assert!((&aa * z.matrix() - z.matrix() * &aa).amax() < 1e-10);
        }
    }

    #[test]
    fn symmetriser_matches_monte_carlo_covariance() {
        // Z = Cov(vec(g gᵀ)) for g ~ N(0, I_2); 10⁶ draws.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = 1_000_000usize;
        let mut mean = [0.0f64; 4];
        let mut second = [[0.0f64; 4]; 4];
        for _ in 0..r {
            let g0: f64 = rng.sample(StandardNormal);
            let g1: f64 = rng.sample(StandardNormal);
            let v = [g0 * g0, g1 * g0, g0 * g1, g1 * g1];
            for i in 0..4 {
                mean[i] += v[i];
                for j in 0..4 {
                    second[i][j] += v[i] * v[j];
                }
            }
        }
        let z = Symmetriser::new(2);
        for i in 0..4 {
            for j in 0..4 {
                let cov = second[i][j] / r as f64 - mean[i] * mean[j] / (r as f64).powi(2);
                assert!((cov - z.matrix()[(i, j)]).abs() < 0.02, "({i},{j}) {cov}");
            }
        }
    }

    #[test]
    fn psd_sqrt_examples() {
        let s = SymMatrix::from_diagonal(&[4.0, 9.0]);
        let r = psd_sqrt(&s).unwrap();
        assert_relative_eq!(r.as_matrix()[(0, 0)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(r.as_matrix()[(1, 1)], 3.0, epsilon = 1e-14);
        assert_relative_eq!(r.as_matrix()[(0, 1)], 0.0, epsilon = 1e-14);
        let i = psd_sqrt(&SymMatrix::identity(3)).unwrap();
        assert!((i.as_matrix() - DMatrix::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn psd_sqrt_multiplies_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let s = random_spd(&mut rng, 4);
            let r = psd_sqrt(&s).unwrap();
            let back = r.as_matrix() * r.as_matrix();
            assert!(rel_frobenius(&back, s.as_matrix()) < 1e-10);
            assert!(r.min_eigenvalue() >= 0.0);
        }
    }

    #[test]
    fn psd_sqrt_clamps_and_rejects() {
        let s = SymMatrix::from_diagonal(&[1.0, -1e-14]);
        let r = psd_sqrt(&s).unwrap();
        assert_eq!(r.as_matrix()[(1, 1)], 0.0);
        let bad = SymMatrix::from_diagonal(&[1.0, -1e-3]);
        assert!(matches!(psd_sqrt(&bad), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn psd_sqrt_idempotent_on_diagonal_structure() {
        let s = SymMatrix::from_diagonal(&[0.25, 1.0, 16.0]);
        let r = psd_sqrt(&s).unwrap();
        assert!(r.is_diagonal() || (r.as_matrix() - DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0, 4.0]))).amax() < 1e-14);
    }

    #[test]
    fn inner_weighted_examples() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_relative_eq!(inner_weighted(&i2, &i2, &DMatrix::identity(4, 4)).unwrap(), 2.0);
        let z = Symmetriser::new(2);
        assert_relative_eq!(inner_weighted(&i2, &i2, z.matrix()).unwrap(), 4.0);
        assert!(inner_weighted(&i2, &DMatrix::identity(3, 3), z.matrix()).is_err());
    }

    #[test]
    fn sym_matrix_rejects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0 + 1e-15, 1.0]);
        assert!(matches!(SymMatrix::new(m), Err(Error::NotSymmetric { .. })));
    }

    proptest! {
        #[test]
        fn mat_vec_round_trip(entries in prop::collection::vec(-1e3f64..1e3, 9)) {
            let m = DMatrix::from_column_slice(3, 3, &entries);
            prop_assert_eq!(mat(&vec(&m), 3).unwrap(), m.clone());
            prop_assert_eq!(vec(&mat(&vec(&m), 3).unwrap()), vec(&m));
        }

        #[test]
        fn z_doubles_symmetric(entries in prop::collection::vec(-10f64..10.0, 9)) {
            let a = DMatrix::from_column_slice(3, 3, &entries);
            let h = &a + a.transpose();
            let z = Symmetriser::new(3);
            prop_assert_eq!(z.apply(&vec(&h)), vec(&h) * 2.0);
            prop_assert_eq!(z.matrix() * vec(&a), vec(&h));
        }

        #[test]
        fn inner_weighted_symmetric(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, 2, 2);
            let b = random_matrix(&mut rng, 2, 2);
            let c0 = random_matrix(&mut rng, 4, 4);
            let c = &c0 * c0.transpose();
            let ab = inner_weighted(&a, &b, &c).unwrap();
            let ba = inner_weighted(&b, &a, &c).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-10 * (1.0 + ab.abs()));
            prop_assert!(inner_weighted(&a, &a, &c).unwrap() >= -1e-10);
        }
    }
}
