//! Symmetric / skew-symmetric splitting of a generator.
//!
//! In the probability frame `Q = Q_S + Q_A` with
//! `Q_S = ½(Q + ΠQᵀΠ⁻¹)`. In the amplitude frame `u = Π^{-1/2} p` the
//! similar matrix `M = Π^{-1/2} Q Π^{1/2}` splits into a symmetric `S` and a
//! skew-symmetric `A`, with `du/dt = (S + A) u`.
//!
//! Two scalings of the skew part are kept side by side: `A = ½(M − Mᵀ)` drives
//! the dynamics, while the flux matrix `Ã = M − Mᵀ = 2A` has entries
//! `(q_ij π_j − q_ji π_i) / √(π_i π_j)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::linalg::{max_abs, norm_inf, skew_part, symmetric_part, vec_max_abs};
use crate::markov::{GeneratorMatrix, StationaryDistribution, STATIONARY_RESIDUAL_TOL};

/// The amplitude frame is refused below this stationary probability.
pub const MIN_STATIONARY_PROBABILITY: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecompositionError {
    #[error("stationary residual {residual:e} too large to trust Π (limit {limit:e})")]
    ToleranceViolation { residual: f64, limit: f64 },
    #[error("stationary probability {value:e} of state {index} is below the amplitude-frame guard")]
    SmallProbability { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

pub type Result<T, E = DecompositionError> = std::result::Result<T, E>;

/// The diagonal scalings `Π^{1/2}` and `Π^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTransform {
    pi: StationaryDistribution,
    sqrt_pi: DVector<f64>,
    inv_sqrt_pi: DVector<f64>,
}

impl FrameTransform {
    pub fn new(pi: &StationaryDistribution) -> Result<Self> {
        if let Some((index, &value)) = pi
            .pi()
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= MIN_STATIONARY_PROBABILITY))
        {
            return Err(DecompositionError::SmallProbability { index, value });
        }
        let sqrt_pi = pi.pi().map(f64::sqrt);
        let inv_sqrt_pi = sqrt_pi.map(|s| 1.0 / s);
        Ok(Self {
            pi: pi.clone(),
            sqrt_pi,
            inv_sqrt_pi,
        })
    }

    pub fn stationary(&self) -> &StationaryDistribution {
        &self.pi
    }

    /// The stationary amplitude `u^s = √π`.
    pub fn sqrt_pi(&self) -> &DVector<f64> {
        &self.sqrt_pi
    }

    pub fn inv_sqrt_pi(&self) -> &DVector<f64> {
        &self.inv_sqrt_pi
    }

    pub fn n(&self) -> usize {
        self.sqrt_pi.len()
    }

    /// `u = Π^{-1/2} p`
    pub fn to_u(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(p.len())?;
        Ok(p.component_mul(&self.inv_sqrt_pi))
    }

    /// `p = Π^{1/2} u`
    pub fn from_u(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(u.len())?;
        Ok(u.component_mul(&self.sqrt_pi))
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(DecompositionError::DimensionMismatch {
                expected: self.n(),
                found: len,
            });
        }
        Ok(())
    }
}

/// `Q = Q_S + Q_A` in the probability frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSplit {
    /// `Q_S`, itself the generator of a reversible chain with the same π.
    pub symmetric: DMatrix<f64>,
    /// `Q_A`; may have negative off-diagonal entries.
    pub skew: DMatrix<f64>,
}

fn check_stationary(q: &GeneratorMatrix, pi: &StationaryDistribution) -> Result<()> {
    if pi.n() != q.n() {
        return Err(DecompositionError::DimensionMismatch {
            expected: q.n(),
            found: pi.n(),
        });
    }
    let residual = vec_max_abs(&(q.rates() * pi.pi()));
    let limit = STATIONARY_RESIDUAL_TOL * q.norm_inf();
    if residual > limit {
        return Err(DecompositionError::ToleranceViolation { residual, limit });
    }
    Ok(())
}

/// `Q_S = ½(Q + ΠQᵀΠ⁻¹)`, `Q_A = ½(Q − ΠQᵀΠ⁻¹)`.
pub fn forward_split(q: &GeneratorMatrix, pi: &StationaryDistribution) -> Result<ForwardSplit> {
    check_stationary(q, pi)?;
    let n = q.n();
    let p = pi.pi();
    let adjoint = DMatrix::from_fn(n, n, |i, j| p[i] * q.rate(j, i) / p[j]);
    let symmetric = (q.rates() + &adjoint) * 0.5;
    // Q_A = Q − Q_S keeps the sum exact
    let skew = q.rates() - &symmetric;
    Ok(ForwardSplit { symmetric, skew })
}

/// The full decomposition in the amplitude frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    frame: FrameTransform,
    symmetric: DMatrix<f64>,
    skew: DMatrix<f64>,
    flux: DMatrix<f64>,
    forward: ForwardSplit,
}

impl Decomposition {
    pub fn frame(&self) -> &FrameTransform {
        &self.frame
    }

    /// `S`, the gradient (dissipative) part.
    pub fn symmetric(&self) -> &DMatrix<f64> {
        &self.symmetric
    }

    /// `A = ½(M − Mᵀ)`, the conservative part used for dynamics.
    pub fn skew(&self) -> &DMatrix<f64> {
        &self.skew
    }

    /// `Ã = M − Mᵀ = 2A`, the flux matrix.
    pub fn flux(&self) -> &DMatrix<f64> {
        &self.flux
    }

    pub fn forward(&self) -> &ForwardSplit {
        &self.forward
    }

    /// `S + A`
    pub fn generator(&self) -> DMatrix<f64> {
        &self.symmetric + &self.skew
    }

    pub fn n(&self) -> usize {
        self.symmetric.nrows()
    }

    pub fn residuals(&self, q: &GeneratorMatrix) -> DecompositionResiduals {
        let s = &self.symmetric;
        let a = &self.skew;
        let u_s = self.frame.sqrt_pi();
        let pi = self.frame.stationary().pi();
        let n = self.n();
        let similar = similar_generator(q, &self.frame);
        let flux_formula = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| {
                let direct = (q.rate(i, j) * pi[j] - q.rate(j, i) * pi[i]) / (pi[i] * pi[j]).sqrt();
                (self.flux[(i, j)] - direct).abs()
            })
            .fold(0.0, f64::max);
        let sqrt_h = DMatrix::from_diagonal(u_s);
        let inv_sqrt_h = DMatrix::from_diagonal(self.frame.inv_sqrt_pi());
        let frame_consistency = max_abs(&(&inv_sqrt_h * &self.forward.symmetric * &sqrt_h - s))
            .max(max_abs(&(&inv_sqrt_h * &self.forward.skew * &sqrt_h - a)));
        DecompositionResiduals {
            symmetry: max_abs(&(s - s.transpose())),
            skewness: max_abs(&(a + a.transpose())),
            reconstruction: max_abs(&(s + a - similar)),
            kernel_symmetric: vec_max_abs(&(s * u_s)),
            kernel_skew: vec_max_abs(&(a * u_s)),
            min_dissipation_eigenvalue: min_eigenvalue(&(-s)),
            flux_formula,
            frame_consistency,
            forward_kernel: vec_max_abs(&(&self.forward.symmetric * pi))
                .max(vec_max_abs(&(&self.forward.skew * pi))),
            scale: norm_inf(s).max(norm_inf(q.rates())),
        }
    }
}

/// Measured deviations from the structural invariants of a [`Decomposition`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DecompositionResiduals {
    /// `max |S − Sᵀ|`
    pub symmetry: f64,
    /// `max |A + Aᵀ|`
    pub skewness: f64,
    /// `max |S + A − Π^{-1/2} Q Π^{1/2}|`
    pub reconstruction: f64,
    /// `‖S √π‖∞`
    pub kernel_symmetric: f64,
    /// `‖A √π‖∞`
    pub kernel_skew: f64,
    /// Smallest eigenvalue of `−S`; should be `≥ 0` up to roundoff.
    pub min_dissipation_eigenvalue: f64,
    /// `max |Ã_ij − (q_ij π_j − q_ji π_i)/√(π_i π_j)|`
    pub flux_formula: f64,
    /// Both frames agree: `Π^{-1/2} Q_S Π^{1/2} = S`, likewise for the skew part.
    pub frame_consistency: f64,
    /// `‖Q_S π‖∞` and `‖Q_A π‖∞`
    pub forward_kernel: f64,
    /// `max(‖S‖∞, ‖Q‖∞)`, the reference scale for relative checks.
    pub scale: f64,
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

fn similar_generator(q: &GeneratorMatrix, frame: &FrameTransform) -> DMatrix<f64> {
    let n = q.n();
    let s = frame.sqrt_pi();
    let inv = frame.inv_sqrt_pi();
    DMatrix::from_fn(n, n, |i, j| inv[i] * q.rate(i, j) * s[j])
}

/// Forms `M = Π^{-1/2} Q Π^{1/2}` and splits it.
pub fn u_frame(q: &GeneratorMatrix, pi: &StationaryDistribution) -> Result<Decomposition> {
    let forward = forward_split(q, pi)?;
    let frame = FrameTransform::new(pi)?;
    let m = similar_generator(q, &frame);
    let symmetric = symmetric_part(&m);
    let skew = skew_part(&m);
    let flux = &skew * 2.0;
    Ok(Decomposition {
        frame,
        symmetric,
        skew,
        flux,
        forward,
    })
}

/// `Φ(u) = −½ uᵀ S u`
pub fn potential(s: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    -0.5 * u.dot(&(s * u))
}

/// `∇Φ(u) = −S u`
pub fn potential_gradient(s: &DMatrix<f64>, u: &DVector<f64>) -> DVector<f64> {
    -(s * u)
}
