//! Structured spectral decompositions of real skew-symmetric matrices.
//!
//! For skew-symmetric `A` the eigenvalues come in conjugate pairs `±iλ_j`
//! plus zeros. This module computes
//!
//! * the paired complex eigensystem `A x = iλ x`, `x_{2j} = conj(x_{2j-1})`,
//!   from the Hermitian matrix `−iA`;
//! * a real orthogonal basis `B` with `B A Bᵀ = H₁`, where `H₁` is block
//!   diagonal with blocks `[[0, λ_j], [−λ_j, 0]]` followed by zeros;
//! * an SVD `A = U Σ Vᵀ` whose gauge is fixed so that
//!   `v_{2j-1} = u_{2j}` and `v_{2j} = −u_{2j-1}`.
//!
//! Indices in the docs are 1-based to match the usual notation; the code is
//! 0-based throughout.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{max_abs, norm_inf, orthogonality_defect, orthonormalize_rows, skew_part};

/// `‖A + Aᵀ‖∞ ≤ SKEW_TOL · ‖A‖∞`
pub const SKEW_TOL: f64 = 1e-10;
/// Relative threshold below which `λ` counts as zero.
pub const ZERO_REL: f64 = 1e-9;
/// Absolute zero threshold when the whole spectrum vanishes.
pub const ZERO_ABS: f64 = 1e-12;
/// Allowed asymmetry of the raw spectrum before pairing is forced.
pub const DRIFT_TOL: f64 = 1e-8;
/// Required orthonormality of the canonical basis.
pub const ORTHO_TOL: f64 = 1e-9;
/// Allowed pairing residual of the canonical SVD.
pub const PAIRING_TOL: f64 = 1e-8;
/// Pairs whose `λ` agree to this relative precision are treated as one
/// degenerate subspace.
pub const CLUSTER_TOL: f64 = 5e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not skew-symmetric: ‖A + Aᵀ‖∞ = {defect:e}, ‖A‖∞ = {scale:e}")]
    NotSkew { defect: f64, scale: f64 },
    #[error("spectrum is not paired: drift {drift:e} exceeds {limit:e}")]
    SpectrumDriftTooLarge { drift: f64, limit: f64 },
    #[error("canonical basis is not orthonormal after recombination (defect {defect:e})")]
    DegenerateRecombinationFailure { defect: f64 },
    #[error("SVD canonicalization failed: {reason} (residual {residual:e})")]
    CanonicalizationFailure { reason: &'static str, residual: f64 },
    #[error("pair {pair} is degenerate; its EVD/SVD relation is not unique")]
    DegeneratePair { pair: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

pub type Result<T, E = SpectralError> = std::result::Result<T, E>;

/// Validates skew-symmetry and returns the exactly skew part.
pub fn check_skew(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(SpectralError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let defect = norm_inf(&(a + a.transpose()));
    let scale = norm_inf(a);
    if defect > SKEW_TOL * scale || !defect.is_finite() {
        return Err(SpectralError::NotSkew { defect, scale });
    }
    Ok(skew_part(a))
}

/// The paired eigensystem of a skew-symmetric matrix together with the real
/// canonical basis built from it.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewEigen {
    lambdas: Vec<f64>,
    zero_dim: usize,
    eigvecs: DMatrix<Complex64>,
    basis: DMatrix<f64>,
    residual: f64,
}

impl SkewEigen {
    /// `λ_1 ≥ … ≥ λ_k > 0`
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Multiplicity of the zero eigenvalue, `n − 2k`.
    pub fn zero_dim(&self) -> usize {
        self.zero_dim
    }

    /// Eigenvalues in eigenvector order: `iλ_1, −iλ_1, …, iλ_k, −iλ_k, 0, …`.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.basis.nrows());
        for &l in &self.lambdas {
            out.push(Complex64::new(0.0, l));
            out.push(Complex64::new(0.0, -l));
        }
        out.resize(self.basis.nrows(), Complex64::new(0.0, 0.0));
        out
    }

    /// Unit eigenvectors as columns, ordered like [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<Complex64> {
        &self.eigvecs
    }

    /// `max ‖A x_ℓ − iλ_ℓ x_ℓ‖∞`
    pub fn residual(&self) -> f64 {
        self.residual
    }
}

/// Eigen-decomposition of a skew-symmetric matrix with exactly paired
/// imaginary eigenvalues.
///
/// The eigenvector of `iλ_j` is fixed in phase so that its largest-modulus
/// component is real and positive (first such index on ties).
pub fn skew_evd(a: &DMatrix<f64>) -> Result<SkewEigen> {
    let a = check_skew(a)?;
    let n = a.nrows();
    let scale = norm_inf(&a);

    let (mu, vecs) = hermitian_spectrum(&a);
    let drift = (0..n).map(|i| (mu[i] + mu[n - 1 - i]).abs()).fold(0.0, f64::max);
    let limit = DRIFT_TOL * scale;
    if drift > limit {
        return Err(SpectralError::SpectrumDriftTooLarge { drift, limit });
    }
    let lambda_max = mu.first().copied().unwrap_or(0.0).max(0.0);
    let threshold = if lambda_max > 0.0 { ZERO_REL * lambda_max } else { ZERO_ABS };
    let k = mu.iter().filter(|&&m| m >= threshold && m > 0.0).count();
    let k_neg = mu.iter().filter(|&&m| m <= -threshold && m < 0.0).count();
    if k != k_neg || 2 * k > n {
        return Err(SpectralError::SpectrumDriftTooLarge { drift, limit });
    }

    let sqrt2 = std::f64::consts::SQRT_2;
    let mut rows = DMatrix::<f64>::zeros(n, n);
    for j in 0..k {
        let x = fix_phase(vecs.column(j).clone_owned());
        for c in 0..n {
            rows[(2 * j, c)] = sqrt2 * x[c].re;
            rows[(2 * j + 1, c)] = sqrt2 * x[c].im;
        }
    }
    complete_basis(&mut rows, 2 * k);
    let basis = orthonormalize_rows(&rows).ok_or(SpectralError::DegenerateRecombinationFailure {
        defect: f64::INFINITY,
    })?;
    let defect = orthogonality_defect(&basis.transpose());
    if defect > ORTHO_TOL {
        return Err(SpectralError::DegenerateRecombinationFailure { defect });
    }

    let lambdas: Vec<f64> = mu[..k].to_vec();
    let eigvecs = eigenvectors_from_basis(&basis, k);
    let mut residual: f64 = 0.0;
    let evals = {
        let mut e = Vec::with_capacity(n);
        for &l in &lambdas {
            e.push(Complex64::new(0.0, l));
            e.push(Complex64::new(0.0, -l));
        }
        e.resize(n, Complex64::new(0.0, 0.0));
        e
    };
    let ac = a.map(|x| Complex64::new(x, 0.0));
    for (l, ev) in evals.iter().enumerate() {
        let x = eigvecs.column(l);
        let r = &ac * x - x * *ev;
        residual = residual.max(r.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }

    Ok(SkewEigen {
        lambdas,
        zero_dim: n - 2 * k,
        eigvecs,
        basis,
        residual,
    })
}

/// Eigenvalues of the Hermitian matrix `−iA` in descending order, with
/// matching eigenvector columns.
fn hermitian_spectrum(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let n = a.nrows();
    let h = a.map(|x| Complex64::new(0.0, -x));
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mu = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (mu, vecs)
}

fn fix_phase(x: DVector<Complex64>) -> DVector<Complex64> {
    let max = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let pivot = x
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-10))
        .unwrap_or(0);
    let p = x[pivot];
    let phase = p.conj() / p.norm();
    let x = x * phase;
    let norm = x.norm();
    x / Complex64::new(norm, 0.0)
}

/// Fills rows `filled..n` with an orthonormal complement, choosing at each
/// step the coordinate vector with the largest residual (lowest index on
/// ties) so the result is reproducible.
fn complete_basis(rows: &mut DMatrix<f64>, filled: usize) {
    let n = rows.ncols();
    for r in filled..n {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for i in 0..n {
            let mut v = DVector::<f64>::zeros(n);
            v[i] = 1.0;
            for _ in 0..2 {
                for p in 0..r {
                    let row = rows.row(p).transpose();
                    let proj = row.dot(&v);
                    v -= row * proj;
                }
            }
            let norm = v.norm();
            if best.as_ref().is_none_or(|(b, _)| norm > *b * (1.0 + 1e-12)) {
                best = Some((norm, v));
            }
        }
        let (norm, v) = best.expect("n > 0");
        rows.row_mut(r).copy_from(&(v / norm).transpose());
    }
}

fn eigenvectors_from_basis(basis: &DMatrix<f64>, k: usize) -> DMatrix<Complex64> {
    let n = basis.nrows();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut x = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..k {
        for c in 0..n {
            let z = Complex64::new(basis[(2 * j, c)] * s, basis[(2 * j + 1, c)] * s);
            x[(c, 2 * j)] = z;
            x[(c, 2 * j + 1)] = z.conj();
        }
    }
    for r in 2 * k..n {
        for c in 0..n {
            x[(c, r)] = Complex64::new(basis[(r, c)], 0.0);
        }
    }
    x
}

/// `H₁`: blocks `[[0, λ_j], [−λ_j, 0]]` then zeros.
pub fn canonical_block(lambdas: &[f64], n: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(n, n);
    for (j, &l) in lambdas.iter().enumerate() {
        h[(2 * j, 2 * j + 1)] = l;
        h[(2 * j + 1, 2 * j)] = -l;
    }
    h
}

/// `H̃₁`: blocks `[[0, 1], [−1, 0]]` on the first `k` pairs, zeros on the
/// kernel.
pub fn symplectic_unit(k: usize, n: usize) -> DMatrix<f64> {
    canonical_block(&vec![1.0; k], n)
}

/// The orthogonal `B` and block matrix `H₁ = B A Bᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalForm {
    pub basis: DMatrix<f64>,
    pub block: DMatrix<f64>,
    pub lambdas: Vec<f64>,
}

/// Real canonical form of a skew-symmetric matrix.
pub fn real_canonical_form(a: &DMatrix<f64>) -> Result<CanonicalForm> {
    let eig = skew_evd(a)?;
    let block = canonical_block(&eig.lambdas, a.nrows());
    Ok(CanonicalForm {
        basis: eig.basis,
        block,
        lambdas: eig.lambdas,
    })
}

/// Sign convention within each singular pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SvdGauge {
    /// `v_{2j-1} = u_{2j}`, `v_{2j} = −u_{2j-1}`, so `VᵀU = H̃₁` and `V = Bᵀ`.
    #[default]
    Symplectic,
    /// The symplectic gauge with `u_{2j-1}` and `v_{2j-1}` negated:
    /// `v_{2j-1} = −u_{2j}`, `v_{2j} = u_{2j-1}`. For `[[0, 1], [−1, 0]]`
    /// this gives `U = [[0, 1], [1, 0]]`, `V = [[−1, 0], [0, 1]]`.
    Reflected,
}

/// `A = U Σ Vᵀ` with paired singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
    pub gauge: SvdGauge,
}

impl SkewSvd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.sigma) * self.v.transpose()
    }
}

/// Everything the other modules need about one skew-symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewSpectrum {
    eigen: SkewEigen,
    block: DMatrix<f64>,
    svd: SkewSvd,
    clusters: Vec<Range<usize>>,
}

impl SkewSpectrum {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        Self::with_gauge(a, SvdGauge::Symplectic)
    }

    pub fn with_gauge(a: &DMatrix<f64>, gauge: SvdGauge) -> Result<Self> {
        let eigen = skew_evd(a)?;
        let a = skew_part(a);
        let clusters = pair_clusters(&eigen.lambdas);
        let svd = canonical_svd(&a, &eigen, &clusters, gauge)?;
        let block = canonical_block(&eigen.lambdas, a.nrows());
        Ok(Self {
            eigen,
            block,
            svd,
            clusters,
        })
    }

    pub fn n(&self) -> usize {
        self.block.nrows()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.eigen.lambdas
    }

    pub fn zero_dim(&self) -> usize {
        self.eigen.zero_dim
    }

    pub fn eigen(&self) -> &SkewEigen {
        &self.eigen
    }

    /// The real orthogonal `B`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.eigen.basis
    }

    /// `H₁`
    pub fn block(&self) -> &DMatrix<f64> {
        &self.block
    }

    pub fn svd(&self) -> &SkewSvd {
        &self.svd
    }

    /// `H̃₁`
    pub fn symplectic_unit(&self) -> DMatrix<f64> {
        symplectic_unit(self.lambdas().len(), self.n())
    }

    /// `(AᵀA)^{1/2} = V Σ Vᵀ`
    pub fn gram_sqrt(&self) -> DMatrix<f64> {
        let v = &self.svd.v;
        v * DMatrix::from_diagonal(&self.svd.sigma) * v.transpose()
    }

    /// `Σ_ℓ λ_ℓ²` over all `n` eigenvalues, i.e. `2 Σ_j λ_j²`.
    pub fn sum_lambda_squared(&self) -> f64 {
        2.0 * self.lambdas().iter().map(|l| l * l).sum::<f64>()
    }

    /// Whether pair `j` shares its `λ` with another pair.
    pub fn is_degenerate(&self, pair: usize) -> bool {
        self.clusters.iter().any(|c| c.contains(&pair) && c.len() > 1)
    }

    /// `VᵀU` as it should be in the chosen gauge: `±H̃₁` on the paired
    /// block and the identity on the kernel, where `U = V`.
    pub fn expected_vtu(&self) -> DMatrix<f64> {
        expected_vtu(self.lambdas().len(), self.n(), self.svd.gauge)
    }

    pub fn residuals(&self, a: &DMatrix<f64>) -> SpectralResiduals {
        let b = self.basis();
        let h1 = self.block();
        let svd = &self.svd;
        let k = self.lambdas().len();
        let n = self.n();
        let usv = svd.reconstruct();
        let bhb = b.transpose() * h1 * b;
        let vtu = svd.v.transpose() * &svd.u;
        let paired_block = if k > 0 {
            let m = 2 * k;
            let sign = match svd.gauge {
                SvdGauge::Symplectic => 1.0,
                SvdGauge::Reflected => -1.0,
            };
            let tilde = self.symplectic_unit() * sign;
            max_abs(&(vtu.view((0, 0), (m, m)) - tilde.view((0, 0), (m, m))))
        } else {
            0.0
        };
        let sigma_mat = DMatrix::from_diagonal(&svd.sigma);
        let mut moduli: Vec<f64> = self
            .eigen
            .eigenvalues()
            .iter()
            .map(|z| z.norm())
            .collect();
        moduli.sort_by(|x, y| y.total_cmp(x));
        let singular_vs_eigen = moduli
            .iter()
            .zip(svd.sigma.iter())
            .map(|(m, s)| (m - s).abs())
            .fold(0.0, f64::max);
        let gram = a.transpose() * a;
        SpectralResiduals {
            scale: norm_inf(a),
            canonical: max_abs(&(b * a * b.transpose() - h1)),
            orthogonality: orthogonality_defect(&b.transpose()),
            eigen: self.eigen.residual,
            svd_reconstruction: max_abs(&(a - &usv)),
            svd_orthogonality: orthogonality_defect(&svd.u).max(orthogonality_defect(&svd.v)),
            pairing: max_abs(&(&vtu - self.expected_vtu())),
            paired_block,
            block_product: if svd.gauge == SvdGauge::Symplectic {
                max_abs(&(self.symplectic_unit() * sigma_mat - h1))
            } else {
                max_abs(&(self.symplectic_unit() * sigma_mat * -1.0 - h1)).min(max_abs(
                    &(&vtu * DMatrix::from_diagonal(&svd.sigma) * -1.0 - h1),
                ))
            },
            singular_vs_eigen,
            trace: (gram.trace() - self.sum_lambda_squared()).abs(),
            round_trip: max_abs(&(&usv - &bhb))
                .max(max_abs(&(&usv - a)))
                .max(max_abs(&(&bhb - a))),
            gram_sqrt_square: max_abs(&({
                let g = self.gram_sqrt();
                &g * &g
            } - &gram)),
            kernel_dim: n - 2 * k,
        }
    }
}

/// Measured deviations from the structure a [`SkewSpectrum`] promises.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralResiduals {
    /// `‖A‖∞`
    pub scale: f64,
    /// `max |B A Bᵀ − H₁|`
    pub canonical: f64,
    /// `max |BᵀB − I|`
    pub orthogonality: f64,
    /// `max ‖A x − iλ x‖∞`
    pub eigen: f64,
    /// `max |A − U Σ Vᵀ|`
    pub svd_reconstruction: f64,
    pub svd_orthogonality: f64,
    /// `max |VᵀU − expected|` including the kernel block.
    pub pairing: f64,
    /// `max |VᵀU − H̃₁|` restricted to the paired block (sign per gauge).
    pub paired_block: f64,
    /// `max |H̃₁ Σ − H₁|`
    pub block_product: f64,
    /// Singular values against eigenvalue moduli.
    pub singular_vs_eigen: f64,
    /// `|Tr(AᵀA) − Σ λ_ℓ²|`
    pub trace: f64,
    /// Pairwise agreement of `U Σ Vᵀ`, `Bᵀ H₁ B` and `A`.
    pub round_trip: f64,
    /// `max |((AᵀA)^{1/2})² − AᵀA|`
    pub gram_sqrt_square: f64,
    pub kernel_dim: usize,
}

fn expected_vtu(k: usize, n: usize, gauge: SvdGauge) -> DMatrix<f64> {
    let sign = match gauge {
        SvdGauge::Symplectic => 1.0,
        SvdGauge::Reflected => -1.0,
    };
    let mut e = symplectic_unit(k, n) * sign;
    for i in 2 * k..n {
        e[(i, i)] = 1.0;
    }
    e
}

/// Groups consecutive pairs with numerically equal `λ`.
fn pair_clusters(lambdas: &[f64]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let Some(&lmax) = lambdas.first() else {
        return out;
    };
    let mut start = 0;
    for j in 1..=lambdas.len() {
        if j == lambdas.len() || lambdas[j - 1] - lambdas[j] > CLUSTER_TOL * lmax {
            out.push(start..j);
            start = j;
        }
    }
    out
}

/// Polar factor `W Zᵀ` of `M = W S Zᵀ`, the orthogonal matrix closest to `M`.
/// Here `M` is close to orthogonal, so `M (MᵀM)^{-1/2}` is well conditioned;
/// a singular `M` falls back to the identity and the pairing check reports it.
fn polar_factor(m: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.transpose() * &m);
    if eig.eigenvalues.min() <= 1e-12 {
        return DMatrix::identity(m.nrows(), m.ncols());
    }
    let w = &eig.eigenvectors;
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| 1.0 / x.sqrt()));
    m * w * inv_sqrt * w.transpose()
}

/// Factors sorted by descending singular value.
type SvdFactors = (DMatrix<f64>, DMatrix<f64>, Vec<f64>);

/// nalgebra's bidiagonal SVD, accepted only if it reconstructs `a`. On some
/// skew matrices with paired singular values it returns wrong factors.
fn generic_svd(a: &DMatrix<f64>) -> Option<SvdFactors> {
    let n = a.nrows();
    let svd = a.clone().svd(true, true);
    let u_raw = svd.u?;
    let v_raw = svd.v_t?.transpose();
    let recon = &u_raw * DMatrix::from_diagonal(&svd.singular_values) * v_raw.transpose();
    let scale = max_abs(a).max(f64::MIN_POSITIVE);
    let ok = max_abs(&(recon - a)) <= 1e-12 * scale * n as f64
        && orthogonality_defect(&u_raw) <= 1e-12 * n as f64
        && orthogonality_defect(&v_raw) <= 1e-12 * n as f64;
    if !ok {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = DMatrix::from_fn(n, n, |r, c| u_raw[(r, order[c])]);
    let v = DMatrix::from_fn(n, n, |r, c| v_raw[(r, order[c])]);
    Some((u, v, sv))
}

/// SVD from the symmetric eigenproblem of `[[0, A], [Aᵀ, 0]]`, whose
/// eigenpairs are `±σ` with vectors `(u, ±v)/√2`. Columns belonging to zero
/// singular values are not meaningful and are replaced by the caller.
fn augmented_svd(a: &DMatrix<f64>) -> SvdFactors {
    let n = a.nrows();
    let mut aug = DMatrix::zeros(2 * n, 2 * n);
    aug.view_mut((0, n), (n, n)).copy_from(a);
    aug.view_mut((n, 0), (n, n)).copy_from(&a.transpose());
    let eig = SymmetricEigen::new(aug);
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut u = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    let mut sv = Vec::with_capacity(n);
    for (c, &i) in order.iter().take(n).enumerate() {
        let w = eig.eigenvectors.column(i);
        let (x, y) = (w.rows(0, n), w.rows(n, n));
        let (nx, ny) = (x.norm(), y.norm());
        if nx > 0.0 {
            u.column_mut(c).copy_from(&(x / nx));
        }
        if ny > 0.0 {
            v.column_mut(c).copy_from(&(y / ny));
        }
        sv.push(eig.eigenvalues[i].max(0.0));
    }
    (u, v, sv)
}

/// Generic SVD followed by gauge fixing: inside every group of equal singular
/// values the right singular vectors are rotated (orthogonal Procrustes) onto
/// the matching rows of the canonical basis `B`.
fn canonical_svd(
    a: &DMatrix<f64>,
    eig: &SkewEigen,
    clusters: &[Range<usize>],
    gauge: SvdGauge,
) -> Result<SkewSvd> {
    let n = a.nrows();
    let k = eig.lambdas.len();
    let (u0, v0, sv) = match generic_svd(a) {
        Some(f) => f,
        None => augmented_svd(a),
    };

    let smax = sv.first().copied().unwrap_or(0.0);
    let tol = PAIRING_TOL * smax.max(f64::MIN_POSITIVE);
    for j in 0..k {
        let spread = (sv[2 * j] - sv[2 * j + 1]).abs().max((sv[2 * j] - eig.lambdas[j]).abs());
        if spread > tol {
            return Err(SpectralError::CanonicalizationFailure {
                reason: "singular values are not paired with the eigenvalues",
                residual: spread,
            });
        }
    }
    if let Some(&s) = sv[2 * k..].iter().find(|&&s| s > tol) {
        return Err(SpectralError::CanonicalizationFailure {
            reason: "kernel dimension disagrees between SVD and EVD",
            residual: s,
        });
    }

    let target = eig.basis.transpose();
    let mut u = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    for c in clusters {
        let cols = 2 * c.start..2 * c.end;
        let m = cols.len();
        let vc = v0.columns(cols.start, m);
        let r = polar_factor(vc.transpose() * target.columns(cols.start, m));
        v.columns_mut(cols.start, m).copy_from(&(vc * &r));
        u.columns_mut(cols.start, m).copy_from(&(u0.columns(cols.start, m) * &r));
    }
    // on the kernel any orthonormal basis is a valid singular basis; the
    // canonical one keeps U = V = Bᵀ there
    for c in 2 * k..n {
        u.column_mut(c).copy_from(&target.column(c));
        v.column_mut(c).copy_from(&target.column(c));
    }

    let mut sigma = DVector::zeros(n);
    for j in 0..k {
        let s = 0.5 * (sv[2 * j] + sv[2 * j + 1]);
        sigma[2 * j] = s;
        sigma[2 * j + 1] = s;
    }
    if gauge == SvdGauge::Reflected {
        for j in 0..k {
            u.column_mut(2 * j).neg_mut();
            v.column_mut(2 * j).neg_mut();
        }
    }

    let residual = max_abs(&(v.transpose() * &u - expected_vtu(k, n, gauge)));
    if residual > PAIRING_TOL {
        return Err(SpectralError::CanonicalizationFailure {
            reason: "pairing residual after rotation",
            residual,
        });
    }
    Ok(SkewSvd { u, sigma, v, gauge })
}

/// Canonical SVD of a skew-symmetric matrix in the symplectic gauge.
pub fn skew_svd(a: &DMatrix<f64>) -> Result<SkewSvd> {
    Ok(SkewSpectrum::new(a)?.svd)
}

/// `(AᵀA)^{1/2}`
pub fn gram_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(SkewSpectrum::new(a)?.gram_sqrt())
}

/// Coefficients expressing one singular pair in terms of one eigenpair:
/// `u_a = α₁₁ x_a + α₁₂ x_b`, `u_b = α₂₁ x_a + α₂₂ x_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRelation {
    pub alpha: Matrix2<Complex64>,
    /// `max ‖u − X α‖∞` over both vectors.
    pub residual: f64,
}

/// Least-squares projection of `(u_a, u_b)` onto `span{x_a, x_b}`.
///
/// The eigenvectors need not be normalized; `|det α|` scales with
/// `1 / (‖x_a‖ ‖x_b‖)`.
pub fn pair_relation(
    x_a: &DVector<Complex64>,
    x_b: &DVector<Complex64>,
    u_a: &DVector<f64>,
    u_b: &DVector<f64>,
) -> Result<PairRelation> {
    let n = x_a.len();
    for len in [x_b.len(), u_a.len(), u_b.len()] {
        if len != n {
            return Err(SpectralError::DimensionMismatch { expected: n, found: len });
        }
    }
    let gram = Matrix2::new(
        x_a.dotc(x_a),
        x_a.dotc(x_b),
        x_b.dotc(x_a),
        x_b.dotc(x_b),
    );
    let inv = gram.try_inverse().ok_or(SpectralError::DimensionMismatch {
        expected: 2,
        found: 1,
    })?;
    let mut alpha = Matrix2::zeros();
    let mut residual: f64 = 0.0;
    for (row, u) in [u_a, u_b].into_iter().enumerate() {
        let uc = u.map(|x| Complex64::new(x, 0.0));
        let rhs = Vector2::new(x_a.dotc(&uc), x_b.dotc(&uc));
        let c = inv * rhs;
        alpha[(row, 0)] = c[0];
        alpha[(row, 1)] = c[1];
        let recon = x_a * c[0] + x_b * c[1];
        residual = residual.max((recon - uc).iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    Ok(PairRelation { alpha, residual })
}

/// For every pair `j`, the 2×2 matrix relating `(u_{2j-1}, u_{2j})` to
/// `(x_{2j-1}, x_{2j})`. Degenerate pairs are reported instead.
pub fn evd_svd_relation(spectrum: &SkewSpectrum) -> Vec<Result<PairRelation>> {
    let x = spectrum.eigen().eigenvectors();
    let u = &spectrum.svd().u;
    (0..spectrum.lambdas().len())
        .map(|j| {
            if spectrum.is_degenerate(j) {
                return Err(SpectralError::DegeneratePair { pair: j });
            }
            pair_relation(
                &x.column(2 * j).clone_owned(),
                &x.column(2 * j + 1).clone_owned(),
                &u.column(2 * j).clone_owned(),
                &u.column(2 * j + 1).clone_owned(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rotation_generator(l: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, l, -l, 0.0])
    }

    fn three_cycle_flux() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 1.0, 1.0, 0.0, -1.0, -1.0, 1.0, 0.0])
    }

    #[test]
    fn two_by_two_eigensystem() {
        let e = skew_evd(&rotation_generator(1.0)).unwrap();
        assert_eq!(e.lambdas(), &[1.0]);
        let vals = e.eigenvalues();
        assert!((vals[0] - c(0.0, 1.0)).norm() < 1e-15);
        assert!((vals[1] - c(0.0, -1.0)).norm() < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let x = e.eigenvectors();
        assert!((x[(0, 0)] - c(s, 0.0)).norm() < 1e-15);
        assert!((x[(1, 0)] - c(0.0, s)).norm() < 1e-15);
        assert!((x[(0, 1)] - c(s, 0.0)).norm() < 1e-15);
        assert!((x[(1, 1)] - c(0.0, -s)).norm() < 1e-15);
    }

    #[test]
    fn zero_matrix() {
        let a = DMatrix::zeros(4, 4);
        let spec = SkewSpectrum::new(&a).unwrap();
        assert!(spec.lambdas().is_empty());
        assert_eq!(spec.zero_dim(), 4);
        assert_eq!(spec.svd().sigma, DVector::zeros(4));
        assert!((&spec.svd().u - DMatrix::<f64>::identity(4, 4)).amax() < 1e-15);
        assert!((&spec.svd().v - DMatrix::<f64>::identity(4, 4)).amax() < 1e-15);
        assert_eq!(gram_sqrt(&a).unwrap(), DMatrix::zeros(4, 4));
    }

    #[test]
    fn three_cycle_spectrum() {
        // characteristic polynomial μ³ + 3μ = 0
        let a = three_cycle_flux();
        let spec = SkewSpectrum::new(&a).unwrap();
        assert_eq!(spec.lambdas().len(), 1);
        assert!((spec.lambdas()[0] - 3f64.sqrt()).abs() < 1e-14);
        assert_eq!(spec.zero_dim(), 1);
        let expected_h1 = canonical_block(&[3f64.sqrt()], 3);
        assert!((spec.block() - &expected_h1).amax() < 1e-15);
        let b = spec.basis();
        assert!((b * &a * b.transpose() - &expected_h1).amax() < 1e-14);
        let sigma = &spec.svd().sigma;
        assert!((sigma[0] - 3f64.sqrt()).abs() < 1e-14);
        assert!((sigma[1] - 3f64.sqrt()).abs() < 1e-14);
        assert_eq!(sigma[2], 0.0);
        let g = spec.gram_sqrt();
        assert!((&g - g.transpose()).amax() < 1e-15);
        let ge = SymmetricEigen::new(g.clone()).eigenvalues;
        let mut ge: Vec<f64> = ge.iter().copied().collect();
        ge.sort_by(|x, y| y.total_cmp(x));
        assert!((ge[0] - 3f64.sqrt()).abs() < 1e-14 && (ge[1] - 3f64.sqrt()).abs() < 1e-14);
        assert!(ge[2].abs() < 1e-14);
        assert!((&g * &g - a.transpose() * &a).amax() < 1e-13);
    }

    #[test]
    fn already_canonical_input() {
        let a = rotation_generator(2.5);
        let form = real_canonical_form(&a).unwrap();
        assert!((&form.basis - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);
        assert_eq!(form.block, a);
        let g = gram_sqrt(&a).unwrap();
        assert!((g - DMatrix::<f64>::identity(2, 2) * 2.5).amax() < 1e-14);
    }

    #[test]
    fn svd_gauges_on_unit_rotation() {
        let a = rotation_generator(1.0);
        let sym = skew_svd(&a).unwrap();
        assert!((&sym.u - DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])).amax() < 1e-15);
        assert!((&sym.v - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);
        assert!((sym.v.transpose() * &sym.u - symplectic_unit(1, 2)).amax() < 1e-15);

        let refl = SkewSpectrum::with_gauge(&a, SvdGauge::Reflected).unwrap();
        let svd = refl.svd();
        assert!((&svd.u - DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).amax() < 1e-15);
        assert!((&svd.v - DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0])).amax() < 1e-15);
        assert!((svd.reconstruct() - &a).amax() < 1e-15);
    }

    #[test]
    fn not_skew_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(skew_evd(&a), Err(SpectralError::NotSkew { .. })));
        assert!(matches!(skew_svd(&a), Err(SpectralError::NotSkew { .. })));
        assert!(matches!(
            skew_evd(&DMatrix::zeros(2, 3)),
            Err(SpectralError::NotSquare { .. })
        ));
    }

    #[test]
    fn paper_pair_relation() {
        // eigenvectors as the columns of [[1, −i], [i, −1]], singular vectors
        // from U = [[0, 1], [1, 0]]
        let x1 = DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0)]);
        let x2 = DVector::from_vec(vec![c(0.0, -1.0), c(-1.0, 0.0)]);
        let u1 = DVector::from_vec(vec![0.0, 1.0]);
        let u2 = DVector::from_vec(vec![1.0, 0.0]);
        let rel = pair_relation(&x1, &x2, &u1, &u2).unwrap();
        let expected = Matrix2::new(c(0.0, -0.5), c(-0.5, 0.0), c(0.5, 0.0), c(0.0, 0.5));
        assert!((rel.alpha - expected).norm() < 1e-15);
        assert!((rel.alpha.determinant().norm() - 0.5).abs() < 1e-15);
        assert!(rel.residual < 1e-15);
    }

    #[test]
    fn normalized_pair_relation_has_unit_determinant() {
        let spec = SkewSpectrum::new(&three_cycle_flux()).unwrap();
        let rel = evd_svd_relation(&spec);
        assert_eq!(rel.len(), 1);
        let r = rel[0].as_ref().unwrap();
        assert!(r.residual < 1e-13);
        assert!((r.alpha.determinant().norm() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn degenerate_pairs_are_reported() {
        // two identical rotation blocks
        let mut a = DMatrix::zeros(4, 4);
        a[(0, 1)] = 1.0;
        a[(1, 0)] = -1.0;
        a[(2, 3)] = 1.0;
        a[(3, 2)] = -1.0;
        let spec = SkewSpectrum::new(&a).unwrap();
        assert!(spec.is_degenerate(0) && spec.is_degenerate(1));
        let rel = evd_svd_relation(&spec);
        assert_eq!(rel[0], Err(SpectralError::DegeneratePair { pair: 0 }));
        let r = spec.residuals(&a);
        assert!(r.canonical < 1e-14 && r.pairing < 1e-14 && r.svd_reconstruction < 1e-14);
    }
}
