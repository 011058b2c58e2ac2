//! Hamiltonian and Schrödinger-like views of the skew flow `du/dt = A u`,
//! flow integration in the amplitude frame and conservation diagnostics.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomposition::{potential, Decomposition, FrameTransform};
use crate::linalg::{max_abs, norm_inf, rk4_step, step_schedule, symmetric_part};
use crate::spectral::{check_skew, SkewSpectrum, SpectralError};

/// Commutation threshold for trusting `⟨u, Pu⟩` conservation, relative to
/// `max(1, ‖A‖∞ ‖P‖∞)`.
pub const COMMUTATION_TOL: f64 = 1e-10;
/// `‖A·1‖∞ ≤ HARMONIC_TOL · ‖A‖∞` counts as `1 ∈ ker A`.
pub const HARMONIC_TOL: f64 = 1e-10;
/// Rk4 trajectories are aborted when `‖u‖` exceeds this multiple of `‖u₀‖`.
pub const BLOWUP_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("time must be nonnegative and finite, got {0}")]
    NegativeTime(f64),
    #[error("state norm blew up at t = {time} (step {h}); reduce the step")]
    StepTooLarge { time: f64, h: f64 },
    #[error("conservation diagnostics need a trajectory of the skew flow, got {0:?}")]
    NotSkewFlow(GeneratorKind),
    #[error("symmetric part must be symmetric (defect {0:e})")]
    NotSymmetric(f64),
}

pub type Result<T, E = DynamicsError> = std::result::Result<T, E>;

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(DynamicsError::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// `ℋ = −iA`
pub fn hermitian_generator(a: &DMatrix<f64>) -> Result<DMatrix<Complex64>> {
    let a = check_skew(a)?;
    Ok(a.map(|x| Complex64::new(0.0, -x)))
}

/// `H(u) = ½ uᵀ (AᵀA)^{1/2} u`
pub fn hamiltonian(a: &DMatrix<f64>, u: &DVector<f64>) -> Result<f64> {
    check_len(a.nrows(), u.len())?;
    let g = SkewSpectrum::new(a)?.gram_sqrt();
    Ok(0.5 * u.dot(&(g * u)))
}

/// `½ Σ_j λ_j (x_j² + y_j²)` in canonical coordinates.
pub fn hamiltonian_canonical(spectrum: &SkewSpectrum, u: &DVector<f64>) -> Result<f64> {
    let cc = canonical_coordinates(spectrum, u)?;
    Ok(0.5
        * cc.pairs
            .iter()
            .zip(spectrum.lambdas())
            .map(|((x, y), l)| l * (x * x + y * y))
            .sum::<f64>())
}

/// `Tr[Σ B (u uᵀ) Bᵀ]`. Numerically this equals `uᵀ(AᵀA)^{1/2}u`, which is
/// twice [`hamiltonian`].
pub fn hamiltonian_heisenberg(sigma: &DVector<f64>, b: &DMatrix<f64>, u: &DVector<f64>) -> Result<f64> {
    check_len(b.nrows(), sigma.len())?;
    check_len(b.ncols(), u.len())?;
    let rho = u * u.transpose();
    let m = b * rho * b.transpose();
    Ok(sigma.iter().enumerate().map(|(i, s)| s * m[(i, i)]).sum())
}

/// Coordinates of `Bu`: one `(x_j, y_j)` per rotation block, then the kernel
/// components.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CanonicalCoordinates {
    pub pairs: Vec<(f64, f64)>,
    pub kernel: Vec<f64>,
}

impl CanonicalCoordinates {
    /// `x_j² + y_j²` per block; conserved along the skew flow.
    pub fn amplitudes(&self) -> Vec<f64> {
        self.pairs.iter().map(|(x, y)| x * x + y * y).collect()
    }
}

pub fn canonical_coordinates(spectrum: &SkewSpectrum, u: &DVector<f64>) -> Result<CanonicalCoordinates> {
    check_len(spectrum.n(), u.len())?;
    let w = spectrum.basis() * u;
    let k = spectrum.lambdas().len();
    Ok(CanonicalCoordinates {
        pairs: (0..k).map(|j| (w[2 * j], w[2 * j + 1])).collect(),
        kernel: w.iter().skip(2 * k).copied().collect(),
    })
}

/// The representations of one skew matrix used by the dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianRep {
    pub sqrt_gram: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub basis: DMatrix<f64>,
    pub hermitian: DMatrix<Complex64>,
}

impl HamiltonianRep {
    pub fn new(spectrum: &SkewSpectrum) -> Self {
        let a = spectrum.basis().transpose() * spectrum.block() * spectrum.basis();
        Self {
            sqrt_gram: spectrum.gram_sqrt(),
            sigma: spectrum.svd().sigma.clone(),
            basis: spectrum.basis().clone(),
            hermitian: a.map(|x| Complex64::new(0.0, -x)),
        }
    }

    pub fn hamiltonian(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.sqrt_gram * u))
    }

    pub fn heisenberg(&self, u: &DVector<f64>) -> f64 {
        let w = &self.basis * u;
        self.sigma.iter().zip(w.iter()).map(|(s, x)| s * x * x).sum()
    }

    /// `(max |ℋ − ℋ*|, max |A − iℋ|)` for the given `A`.
    pub fn hermitian_residuals(&self, a: &DMatrix<f64>) -> (f64, f64) {
        let h = &self.hermitian;
        let herm = (h - h.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let recon = h
            .map(|z| Complex64::i() * z)
            .zip_map(a, |z, x| Complex64::new(z.re - x, z.im).norm())
            .amax();
        (herm, recon)
    }
}

/// Which part of the amplitude-frame generator drives a flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    /// `S`: gradient flow of the potential.
    Symmetric,
    /// `A`: the conservative rotation.
    Skew,
    /// `S + A`: the master equation in the amplitude frame.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Exact propagators: block rotations for `A`, the symmetric
    /// eigendecomposition for `S`, a matrix exponential for `S + A`.
    Expm,
    /// Fixed-step classical Runge-Kutta.
    #[default]
    Rk4,
}

/// Sampled solution `u(t)` with per-sample diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: GeneratorKind,
    pub scheme: Scheme,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// `H(u)`
    pub hamiltonian: Vec<f64>,
    /// `‖u‖²`
    pub norm2: Vec<f64>,
    /// `Φ(u)`
    pub potential: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// `⟨u(t), P u(t)⟩` per sample.
    pub fn observe(&self, p: &DMatrix<f64>) -> Result<Vec<f64>> {
        check_len(self.states[0].len(), p.nrows())?;
        check_len(p.nrows(), p.ncols())?;
        Ok(self.states.iter().map(|u| u.dot(&(p * u))).collect())
    }

    /// Writes `time,u_1..u_n,H,norm2,Phi`. With a frame the state columns are
    /// mapped back to probabilities and named `p_1..p_n`.
    pub fn write_csv<W: Write>(&self, out: W, frame: Option<&FrameTransform>) -> csv::Result<()> {
        let n = self.states[0].len();
        let mut w = csv::Writer::from_writer(out);
        let prefix = if frame.is_some() { "p" } else { "u" };
        let mut header = vec!["time".to_string()];
        header.extend((1..=n).map(|i| format!("{prefix}_{i}")));
        header.extend(["H", "norm2", "Phi"].map(String::from));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let state = match frame {
                Some(f) => f.from_u(&self.states[i]).map_err(|e| {
                    csv::Error::from(std::io::Error::new(std::io::ErrorKind::InvalidInput, e))
                })?,
                None => self.states[i].clone(),
            };
            let mut rec = vec![self.times[i].to_string()];
            rec.extend(state.iter().map(|x| x.to_string()));
            rec.push(self.hamiltonian[i].to_string());
            rec.push(self.norm2[i].to_string());
            rec.push(self.potential[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The amplitude-frame generators `S` and `A` with the spectral data needed
/// to integrate and diagnose their flows.
#[derive(Debug, Clone)]
pub struct Dynamics {
    s: DMatrix<f64>,
    a: DMatrix<f64>,
    spectrum: SkewSpectrum,
    rep: HamiltonianRep,
    sym: SymmetricEigen<f64, nalgebra::Dyn>,
}

impl Dynamics {
    pub fn new(s: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<Self> {
        check_len(s.nrows(), a.nrows())?;
        if !s.is_square() {
            return Err(DynamicsError::DimensionMismatch {
                expected: s.nrows(),
                found: s.ncols(),
            });
        }
        let defect = max_abs(&(s - s.transpose()));
        if defect > 1e-10 * norm_inf(s).max(f64::MIN_POSITIVE) {
            return Err(DynamicsError::NotSymmetric(defect));
        }
        let s = symmetric_part(s);
        let spectrum = SkewSpectrum::new(a)?;
        let a = check_skew(a)?;
        let rep = HamiltonianRep::new(&spectrum);
        let sym = SymmetricEigen::new(s.clone());
        Ok(Self {
            s,
            a,
            spectrum,
            rep,
            sym,
        })
    }

    pub fn from_decomposition(d: &Decomposition) -> Result<Self> {
        Self::new(d.symmetric(), d.skew())
    }

    pub fn n(&self) -> usize {
        self.s.nrows()
    }

    pub fn symmetric(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn skew(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn spectrum(&self) -> &SkewSpectrum {
        &self.spectrum
    }

    pub fn representation(&self) -> &HamiltonianRep {
        &self.rep
    }

    pub fn generator(&self, kind: GeneratorKind) -> DMatrix<f64> {
        match kind {
            GeneratorKind::Symmetric => self.s.clone(),
            GeneratorKind::Skew => self.a.clone(),
            GeneratorKind::Full => &self.s + &self.a,
        }
    }

    pub fn hamiltonian(&self, u: &DVector<f64>) -> f64 {
        self.rep.hamiltonian(u)
    }

    /// `e^{At}` assembled as `Bᵀ e^{H₁t} B`.
    pub fn skew_propagator(&self, t: f64) -> DMatrix<f64> {
        let b = self.spectrum.basis();
        let mut r = DMatrix::<f64>::identity(self.n(), self.n());
        for (j, &l) in self.spectrum.lambdas().iter().enumerate() {
            let (s, c) = (l * t).sin_cos();
            r[(2 * j, 2 * j)] = c;
            r[(2 * j, 2 * j + 1)] = s;
            r[(2 * j + 1, 2 * j)] = -s;
            r[(2 * j + 1, 2 * j + 1)] = c;
        }
        b.transpose() * r * b
    }

    /// `e^{St}` from the symmetric eigendecomposition.
    pub fn symmetric_propagator(&self, t: f64) -> DMatrix<f64> {
        let w = &self.sym.eigenvectors;
        let d = self.sym.eigenvalues.map(|m| (m * t).exp());
        w * DMatrix::from_diagonal(&d) * w.transpose()
    }

    pub fn propagator(&self, kind: GeneratorKind, t: f64) -> DMatrix<f64> {
        match kind {
            GeneratorKind::Symmetric => self.symmetric_propagator(t),
            GeneratorKind::Skew => self.skew_propagator(t),
            GeneratorKind::Full => (self.generator(GeneratorKind::Full) * t).exp(),
        }
    }

    /// Integrates `du/dt = G u` on `[0, t_end]`, sampling at multiples of `h`
    /// (plus `t_end` itself).
    pub fn flow(
        &self,
        kind: GeneratorKind,
        u0: &DVector<f64>,
        t_end: f64,
        h: f64,
        scheme: Scheme,
    ) -> Result<Trajectory> {
        check_len(self.n(), u0.len())?;
        if !(t_end >= 0.0) || !t_end.is_finite() {
            return Err(DynamicsError::NegativeTime(t_end));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(DynamicsError::BadStep(h));
        }
        let steps = step_schedule(t_end, h);
        let mut times = Vec::with_capacity(steps.len() + 1);
        let mut states = Vec::with_capacity(steps.len() + 1);
        times.push(0.0);
        states.push(u0.clone());
        let g = self.generator(kind);
        let limit = BLOWUP_FACTOR * u0.norm();
        let mut t = 0.0;
        let mut u = u0.clone();
        match (scheme, kind) {
            (Scheme::Expm, GeneratorKind::Skew | GeneratorKind::Symmetric) => {
                // exact propagators evaluated at each sample time, no accumulation
                let (fwd, back, rates) = match kind {
                    GeneratorKind::Skew => (self.spectrum.basis().clone(), None, None),
                    _ => (
                        self.sym.eigenvectors.transpose(),
                        Some(self.sym.eigenvectors.clone()),
                        Some(self.sym.eigenvalues.clone()),
                    ),
                };
                let c0 = &fwd * u0;
                for (i, dt) in steps.iter().enumerate() {
                    t = if i + 1 == steps.len() { t_end } else { t + dt };
                    let c = match &rates {
                        None => rotate(&c0, self.spectrum.lambdas(), t),
                        Some(m) => c0.component_mul(&m.map(|m| (m * t).exp())),
                    };
                    u = match &back {
                        None => fwd.tr_mul(&c),
                        Some(w) => w * c,
                    };
                    times.push(t);
                    states.push(u.clone());
                }
            }
            (Scheme::Expm, GeneratorKind::Full) => {
                let step = (&g * h).exp();
                for (i, &dt) in steps.iter().enumerate() {
                    u = if dt == h { &step * &u } else { (&g * dt).exp() * &u };
                    t = if i + 1 == steps.len() { t_end } else { t + dt };
                    times.push(t);
                    states.push(u.clone());
                }
            }
            (Scheme::Rk4, _) => {
                for (i, &dt) in steps.iter().enumerate() {
                    u = rk4_step(&g, &u, dt);
                    t = if i + 1 == steps.len() { t_end } else { t + dt };
                    let norm = u.norm();
                    if !norm.is_finite() || norm > limit.max(f64::MIN_POSITIVE) {
                        return Err(DynamicsError::StepTooLarge { time: t, h });
                    }
                    times.push(t);
                    states.push(u.clone());
                }
            }
        }
        let hamiltonian = states.iter().map(|u| self.hamiltonian(u)).collect();
        let norm2 = states.iter().map(|u| u.norm_squared()).collect();
        let potential = states.iter().map(|u| potential(&self.s, u)).collect();
        Ok(Trajectory {
            kind,
            scheme,
            times,
            states,
            hamiltonian,
            norm2,
            potential,
        })
    }

    /// Drift of the conserved quantities along a skew-flow trajectory.
    pub fn conservation_report(&self, traj: &Trajectory, observables: &[DMatrix<f64>]) -> Result<ConservationReport> {
        if traj.kind != GeneratorKind::Skew {
            return Err(DynamicsError::NotSkewFlow(traj.kind));
        }
        check_len(self.n(), traj.states[0].len())?;
        let drift = |series: &[f64]| {
            let first = series[0];
            let abs = series.iter().map(|x| (x - first).abs()).fold(0.0, f64::max);
            (abs, abs / first.abs().max(f64::MIN_POSITIVE))
        };
        let (energy_drift, energy_relative) = drift(&traj.hamiltonian);
        let (norm_drift, norm_relative) = drift(&traj.norm2);
        let scale_a = norm_inf(&self.a);

        let mut checks = Vec::with_capacity(observables.len());
        for p in observables {
            check_len(self.n(), p.nrows())?;
            let commutator = max_abs(&(&self.a * p - p * &self.a));
            let commutes = commutator <= COMMUTATION_TOL * (scale_a * norm_inf(p)).max(1.0);
            let drift = if commutes {
                Some(drift(&traj.observe(p)?).0)
            } else {
                None
            };
            checks.push(ObservableCheck {
                commutator,
                commutes,
                drift,
            });
        }

        let ones = DVector::from_element(self.n(), 1.0);
        let a_ones = (&self.a * &ones).amax();
        let offset: Vec<f64> = traj.states.iter().map(|u| (u - &ones).norm_squared()).collect();
        let harmonic = HarmonicDiagnostic {
            a_ones,
            passes: a_ones <= HARMONIC_TOL * scale_a.max(f64::MIN_POSITIVE),
            drift: drift(&offset).0,
        };
        Ok(ConservationReport {
            energy_drift,
            energy_relative,
            norm_drift,
            norm_relative,
            observables: checks,
            harmonic,
        })
    }
}

fn rotate(c0: &DVector<f64>, lambdas: &[f64], t: f64) -> DVector<f64> {
    let mut c = c0.clone();
    for (j, &l) in lambdas.iter().enumerate() {
        let (s, co) = (l * t).sin_cos();
        let (x, y) = (c0[2 * j], c0[2 * j + 1]);
        c[2 * j] = co * x + s * y;
        c[2 * j + 1] = -s * x + co * y;
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableCheck {
    /// `max |AP − PA|`
    pub commutator: f64,
    pub commutes: bool,
    /// `max_t |⟨u,Pu⟩(t) − ⟨u,Pu⟩(0)|`, only when `P` commutes with `A`.
    pub drift: Option<f64>,
}

/// Whether `‖u − c·1‖²` is conserved, which requires `A·1 = 0`. Evaluated
/// with `c = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarmonicDiagnostic {
    /// `‖A·1‖∞`
    pub a_ones: f64,
    pub passes: bool,
    /// Observed `max_t |‖u(t) − 1‖² − ‖u(0) − 1‖²|`.
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservationReport {
    pub energy_drift: f64,
    pub energy_relative: f64,
    pub norm_drift: f64,
    pub norm_relative: f64,
    pub observables: Vec<ObservableCheck>,
    pub harmonic: HarmonicDiagnostic,
}

/// Solves `du/dt = iℋu` exactly at each requested time.
pub fn schrodinger_flow(
    h: &DMatrix<Complex64>,
    u0: &DVector<f64>,
    times: &[f64],
) -> Result<Vec<DVector<Complex64>>> {
    check_len(h.nrows(), u0.len())?;
    let eig = SymmetricEigen::new(h.clone());
    let w = &eig.eigenvectors;
    let c0 = w.adjoint() * u0.map(|x| Complex64::new(x, 0.0));
    Ok(times
        .iter()
        .map(|&t| {
            let c = DVector::from_iterator(
                c0.len(),
                c0.iter()
                    .zip(eig.eigenvalues.iter())
                    .map(|(c, &m)| c * Complex64::from_polar(1.0, m * t)),
            );
            w * c
        })
        .collect())
}

/// `i(ℋρ − ρℋ)`, the right-hand side of the density evolution under `A`.
pub fn commutator_rhs(h: &DMatrix<Complex64>, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (h * rho - rho * h) * Complex64::i()
}

/// `e^{At} ρ₀ e^{Aᵀt}`
pub fn density_flow(dynamics: &Dynamics, rho0: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let e = dynamics.skew_propagator(t);
    &e * rho0 * e.transpose()
}
