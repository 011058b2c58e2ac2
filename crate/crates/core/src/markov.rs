//! Continuous-time Markov chain generators, stationary distributions,
//! master-equation propagation and the Markov density matrix.
//!
//! Generators use the forward (column) convention: `q[(i, j)]` is the rate of
//! the transition `j -> i`, every column sums to zero and `dp/dt = Q p`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, norm_inf, vec_max_abs};

/// Relative tolerance on generator column sums.
pub const COLUMN_SUM_TOL: f64 = 1e-10;
/// Rates at or below this fraction of the largest rate count as absent edges.
pub const EDGE_THRESHOLD: f64 = 1e-14;
/// Numerical reducibility: second-smallest over largest singular value.
pub const SINGULAR_GAP_TOL: f64 = 1e-9;
/// Relative tolerance on `‖Qπ‖∞ / ‖Q‖∞`.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;
/// Propagated probabilities down to `-NEGATIVE_CLAMP` are roundoff.
pub const NEGATIVE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarkovError {
    #[error("generator must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("generator is empty")]
    Empty,
    #[error("entry ({i}, {j}) is not finite")]
    NonFinite { i: usize, j: usize },
    #[error("negative transition rate {value} at ({i}, {j})")]
    NegativeRate { i: usize, j: usize, value: f64 },
    #[error("column {j} sums to {value}, expected 0")]
    ColumnSumNonzero { j: usize, value: f64 },
    #[error("chain is reducible")]
    Reducible,
    #[error("null space of the generator is numerically larger than one (singular value ratio {ratio:e})")]
    SingularBeyondTolerance { ratio: f64 },
    #[error("stationary residual {residual:e} exceeds {limit:e}")]
    StationaryResidual { residual: f64, limit: f64 },
    #[error("stationary probability {value:e} of state {index} is not positive")]
    NonPositiveStationary { index: usize, value: f64 },
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("step size {0} must be positive and finite")]
    BadStep(f64),
    #[error("rk4 step {h} is unstable for this generator")]
    StepTooLarge { h: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),
    #[error("propagated probability {value:e} at state {index} is negative beyond roundoff")]
    ProbabilityLoss { index: usize, value: f64 },
    #[error("bad chain size {0}, need at least 2 states")]
    BadSize(usize),
    #[error("bad rate parameter: {0}")]
    BadRate(String),
    #[error("expected {expected} labels, found {found}")]
    BadLabels { expected: usize, found: usize },
}

pub type Result<T, E = MarkovError> = std::result::Result<T, E>;

/// How a raw rate matrix is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// `q[i][j]` is the rate `j -> i`; columns sum to zero.
    #[default]
    Column,
    /// `q[i][j]` is the rate `i -> j`; rows sum to zero.
    Row,
}

/// A validated Q-matrix in the column convention.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    rates: DMatrix<f64>,
    labels: Vec<String>,
    irreducible: bool,
}

impl GeneratorMatrix {
    pub fn n(&self) -> usize {
        self.rates.nrows()
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn is_irreducible(&self) -> bool {
        self.irreducible
    }

    /// Rate of the transition `from -> to`.
    pub fn rate(&self, to: usize, from: usize) -> f64 {
        self.rates[(to, from)]
    }

    pub fn norm_inf(&self) -> f64 {
        norm_inf(&self.rates)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(MarkovError::BadLabels {
                expected: self.n(),
                found: labels.len(),
            });
        }
        self.labels = labels;
        Ok(self)
    }

    /// The generator `c·Q` of the same chain run `c` times faster.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(MarkovError::BadRate(format!("scale {c} must be positive")));
        }
        Ok(Self {
            rates: &self.rates * c,
            labels: self.labels.clone(),
            irreducible: self.irreducible,
        })
    }

    /// Relabels states: new state `k` is old state `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(MarkovError::DimensionMismatch {
                expected: n,
                found: perm.len(),
            });
        }
        let rates = DMatrix::from_fn(n, n, |i, j| self.rates[(perm[i], perm[j])]);
        Ok(Self {
            rates,
            labels: perm.iter().map(|&p| self.labels[p].clone()).collect(),
            irreducible: self.irreducible,
        })
    }
}

fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("s{i}")).collect()
}

/// Checks the Q-matrix conditions and computes the irreducibility flag.
///
/// A reducible chain is still a valid generator; it is rejected later by
/// [`stationary_distribution`].
pub fn validate_generator(raw: DMatrix<f64>, convention: Convention) -> Result<GeneratorMatrix> {
    let (rows, cols) = raw.shape();
    if rows != cols {
        return Err(MarkovError::NotSquare { rows, cols });
    }
    if rows == 0 {
        return Err(MarkovError::Empty);
    }
    let q = match convention {
        Convention::Column => raw,
        Convention::Row => raw.transpose(),
    };
    let n = rows;
    for j in 0..n {
        for i in 0..n {
            let v = q[(i, j)];
            if !v.is_finite() {
                return Err(MarkovError::NonFinite { i, j });
            }
            if i != j && v < 0.0 {
                return Err(MarkovError::NegativeRate { i, j, value: v });
            }
        }
    }
    let max_rate = linalg::max_abs(&q);
    for j in 0..n {
        let sum: f64 = q.column(j).iter().sum();
        if sum.abs() > COLUMN_SUM_TOL * max_rate {
            return Err(MarkovError::ColumnSumNonzero { j, value: sum });
        }
    }
    let irreducible = strongly_connected(&q, EDGE_THRESHOLD * max_rate);
    Ok(GeneratorMatrix {
        rates: q,
        labels: default_labels(n),
        irreducible,
    })
}

/// The rate graph is strongly connected iff every state is reachable from
/// state 0 both along and against the edges.
fn strongly_connected(q: &DMatrix<f64>, threshold: f64) -> bool {
    let n = q.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(s) = stack.pop() {
            for t in 0..n {
                let rate = if forward { q[(t, s)] } else { q[(s, t)] };
                if t != s && !seen[t] && rate > threshold {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        seen.into_iter().all(|x| x)
    };
    reach(true) && reach(false)
}

/// A nonnegative vector summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(DVector<f64>);

impl ProbabilityVector {
    /// Accepts entries that are nonnegative and already sum to one (within
    /// `1e-8`), then renormalizes exactly.
    pub fn new(entries: DVector<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(MarkovError::InvalidProbability("empty vector".into()));
        }
        if let Some((i, v)) = entries.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(MarkovError::InvalidProbability(format!("entry {i} is {v}")));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > 1e-8 {
            return Err(MarkovError::InvalidProbability(format!("entries sum to {sum}")));
        }
        Ok(Self(entries / sum))
    }

    /// Normalizes arbitrary nonnegative weights with a positive total.
    pub fn from_weights(weights: DVector<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(MarkovError::InvalidProbability(format!("weights sum to {sum}")));
        }
        Self::new(weights / sum)
    }

    pub fn point_mass(n: usize, state: usize) -> Result<Self> {
        if state >= n {
            return Err(MarkovError::DimensionMismatch { expected: n, found: state });
        }
        let mut v = DVector::zeros(n);
        v[state] = 1.0;
        Ok(Self(v))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(DVector::from_element(n, 1.0 / n as f64))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    /// Clamps roundoff-level negatives produced by an integrator and
    /// renormalizes.
    fn settle(mut v: DVector<f64>) -> Result<Self> {
        for (index, x) in v.iter_mut().enumerate() {
            if !x.is_finite() {
                return Err(MarkovError::InvalidProbability(format!("entry {index} is {x}")));
            }
            if *x < 0.0 {
                if *x < -NEGATIVE_CLAMP {
                    return Err(MarkovError::ProbabilityLoss { index, value: *x });
                }
                *x = 0.0;
            }
        }
        Self::from_weights(v)
    }
}

impl std::ops::Deref for ProbabilityVector {
    type Target = DVector<f64>;
    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// The unique, strictly positive solution of `Qπ = 0`, `Σπ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pi: DVector<f64>,
    residual: f64,
}

impl StationaryDistribution {
    /// Wraps a caller-supplied candidate. The entries are normalized and must
    /// be positive; the residual `‖Qπ‖∞` is recorded but not judged here.
    pub fn from_candidate(q: &GeneratorMatrix, pi: DVector<f64>) -> Result<Self> {
        if pi.len() != q.n() {
            return Err(MarkovError::DimensionMismatch {
                expected: q.n(),
                found: pi.len(),
            });
        }
        let sum: f64 = pi.iter().sum();
        let pi = pi / sum;
        if let Some((index, &value)) = pi.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(MarkovError::NonPositiveStationary { index, value });
        }
        let residual = vec_max_abs(&(q.rates() * &pi));
        Ok(Self { pi, residual })
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    /// `‖Qπ‖∞`
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn n(&self) -> usize {
        self.pi.len()
    }

    pub fn min(&self) -> f64 {
        self.pi.min()
    }

    pub fn as_probability(&self) -> ProbabilityVector {
        ProbabilityVector(self.pi.clone())
    }
}

/// Solves `[Q; 1ᵀ] π = [0; 1]` in the least-squares sense.
pub fn stationary_distribution(q: &GeneratorMatrix) -> Result<StationaryDistribution> {
    if !q.is_irreducible() {
        return Err(MarkovError::Reducible);
    }
    let n = q.n();
    if n == 1 {
        return Ok(StationaryDistribution {
            pi: DVector::from_element(1, 1.0),
            residual: 0.0,
        });
    }
    let scale = q.norm_inf();
    let qs = q.rates() / scale;

    let sv = linalg::singular_values(&qs);
    let ratio = sv[n - 2] / sv[0];
    if ratio < SINGULAR_GAP_TOL {
        return Err(MarkovError::SingularBeyondTolerance { ratio });
    }

    let mut aug = DMatrix::zeros(n + 1, n);
    aug.view_mut((0, 0), (n, n)).copy_from(&qs);
    aug.row_mut(n).fill(1.0);
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    // Householder least squares: R π = (Qᴴ rhs)[..n]
    let qr = aug.clone().qr();
    let (qf, rf) = (qr.q(), qr.r());
    let solve = |b: &DVector<f64>| rf.solve_upper_triangular(&(qf.transpose() * b));
    let mut pi = solve(&rhs).ok_or(MarkovError::SingularBeyondTolerance { ratio })?;
    // one step of iterative refinement
    let r = &rhs - &aug * &pi;
    if let Some(corr) = solve(&r) {
        pi += corr;
    }

    let st = StationaryDistribution::from_candidate(q, pi)?;
    let limit = STATIONARY_RESIDUAL_TOL * scale;
    if st.residual > limit {
        return Err(MarkovError::StationaryResidual {
            residual: st.residual,
            limit,
        });
    }
    Ok(st)
}

/// How to evaluate `e^{Qt}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Propagation {
    /// Scaling-and-squaring Padé exponential.
    Expm,
    /// Fixed-step classical Runge-Kutta with step `h`.
    Rk4 { h: f64 },
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(MarkovError::NegativeTime(t));
    }
    Ok(())
}

/// `e^{Qt}` for a generator.
pub fn transition_matrix(q: &GeneratorMatrix, t: f64) -> Result<DMatrix<f64>> {
    check_time(t)?;
    Ok((q.rates() * t).exp())
}

/// Integrates the master equation `dp/dt = Qp` up to time `t`.
pub fn propagate(
    q: &GeneratorMatrix,
    p0: &ProbabilityVector,
    t: f64,
    method: Propagation,
) -> Result<ProbabilityVector> {
    check_time(t)?;
    if p0.len() != q.n() {
        return Err(MarkovError::DimensionMismatch {
            expected: q.n(),
            found: p0.len(),
        });
    }
    if t == 0.0 {
        return Ok(p0.clone());
    }
    let p = match method {
        Propagation::Expm => transition_matrix(q, t)? * p0.as_vector(),
        Propagation::Rk4 { h } => {
            if !(h > 0.0 && h.is_finite()) {
                return Err(MarkovError::BadStep(h));
            }
            let mut p = p0.as_vector().clone();
            for dt in linalg::step_schedule(t, h) {
                p = linalg::rk4_step(q.rates(), &p, dt);
                // exact solution keeps ‖p‖₁ = 1
                if !p.iter().all(|x| x.is_finite()) || p.lp_norm(1) > 10.0 {
                    return Err(MarkovError::StepTooLarge { h });
                }
            }
            p
        }
    };
    ProbabilityVector::settle(p)
}

/// A Markov density matrix `ρ`, evolving as `dρ/dt = Qρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovDensityMatrix {
    rho: DMatrix<f64>,
}

impl MarkovDensityMatrix {
    /// The identity initial condition, whose propagation yields the
    /// transition probability matrix.
    pub fn identity(n: usize) -> Self {
        Self {
            rho: DMatrix::identity(n, n),
        }
    }

    pub fn from_matrix(rho: DMatrix<f64>) -> Result<Self> {
        if !rho.is_square() {
            return Err(MarkovError::NotSquare {
                rows: rho.nrows(),
                cols: rho.ncols(),
            });
        }
        Ok(Self { rho })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rho
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace()
    }

    /// `max |ρ² − ρ|`
    pub fn idempotence_residual(&self) -> f64 {
        linalg::max_abs(&(&self.rho * &self.rho - &self.rho))
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.rho.column_iter().map(|c| c.sum()).collect()
    }
}

/// `ρ = p0 · 1ᵀ`
pub fn density_matrix_init(p0: &ProbabilityVector) -> MarkovDensityMatrix {
    let n = p0.len();
    MarkovDensityMatrix {
        rho: p0.as_vector() * DVector::from_element(n, 1.0).transpose(),
    }
}

/// `ρ(t) = e^{Qt} ρ0`
pub fn density_matrix_propagate(
    q: &GeneratorMatrix,
    rho0: &MarkovDensityMatrix,
    t: f64,
) -> Result<MarkovDensityMatrix> {
    if rho0.rho.nrows() != q.n() {
        return Err(MarkovError::DimensionMismatch {
            expected: q.n(),
            found: rho0.rho.nrows(),
        });
    }
    Ok(MarkovDensityMatrix {
        rho: transition_matrix(q, t)? * &rho0.rho,
    })
}

/// Families of generated test chains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ChainKind {
    /// Detailed balance by construction: `q_ij = c_ij / w_j` with symmetric
    /// conductances `c`, so `π ∝ w`.
    Reversible,
    /// Nearest-neighbour ring: `forward` is the rate `i -> i+1`, `backward`
    /// the rate `i -> i-1` (indices mod n).
    Cycle { forward: f64, backward: f64 },
    /// Independent positive off-diagonal rates.
    General,
}

/// Deterministically generates a chain for a given seed.
pub fn random_chain(n: usize, seed: u64, kind: ChainKind, rate_scale: f64) -> Result<GeneratorMatrix> {
    if n < 2 {
        return Err(MarkovError::BadSize(n));
    }
    if !(rate_scale > 0.0 && rate_scale.is_finite()) {
        return Err(MarkovError::BadRate(format!("rate scale {rate_scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = DMatrix::zeros(n, n);
    match kind {
        ChainKind::Reversible => {
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
            for i in 0..n {
                for j in (i + 1)..n {
                    let c = rate_scale * rng.random_range(0.1..1.0);
                    q[(i, j)] = c / w[j];
                    q[(j, i)] = c / w[i];
                }
            }
        }
        ChainKind::Cycle { forward, backward } => {
            if !(forward >= 0.0 && backward >= 0.0 && forward.is_finite() && backward.is_finite()) {
                return Err(MarkovError::BadRate(format!(
                    "cycle rates ({forward}, {backward}) must be nonnegative"
                )));
            }
            for j in 0..n {
                q[((j + 1) % n, j)] += rate_scale * forward;
                q[((j + n - 1) % n, j)] += rate_scale * backward;
            }
        }
        ChainKind::General => {
            for j in 0..n {
                for i in 0..n {
                    if i != j {
                        q[(i, j)] = rate_scale * rng.random_range(0.05..1.0);
                    }
                }
            }
        }
    }
    for j in 0..n {
        let out: f64 = (0..n).filter(|&i| i != j).map(|i| q[(i, j)]).sum();
        q[(j, j)] = -out;
    }
    validate_generator(q, Convention::Column)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_state(a: f64, b: f64) -> GeneratorMatrix {
        // a: rate 1 -> 2, b: rate 2 -> 1
        let q = DMatrix::from_row_slice(2, 2, &[-a, b, a, -b]);
        validate_generator(q, Convention::Column).unwrap()
    }

    fn three_cycle() -> GeneratorMatrix {
        random_chain(3, 0, ChainKind::Cycle { forward: 2.0, backward: 1.0 }, 1.0).unwrap()
    }

    #[test]
    fn validate_examples() {
        let sym = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        assert!(validate_generator(sym, Convention::Column).unwrap().is_irreducible());

        let q = DMatrix::from_row_slice(3, 3, &[-3.0, 1.0, 1.0, 2.0, -1.0, 0.0, 1.0, 0.0, -1.0]);
        let g = validate_generator(q, Convention::Column).unwrap();
        assert!(g.is_irreducible());

        let absorbing = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, 0.0]);
        let g = validate_generator(absorbing, Convention::Column).unwrap();
        assert!(!g.is_irreducible());
        assert_eq!(stationary_distribution(&g), Err(MarkovError::Reducible));
    }

    #[test]
    fn validate_errors() {
        assert_eq!(
            validate_generator(DMatrix::zeros(2, 3), Convention::Column),
            Err(MarkovError::NotSquare { rows: 2, cols: 3 })
        );
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, -1.0]);
        assert!(matches!(
            validate_generator(neg, Convention::Column),
            Err(MarkovError::NegativeRate { i: 1, j: 0, .. })
        ));
        let bad_sum = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -1.0]);
        assert!(matches!(
            validate_generator(bad_sum, Convention::Column),
            Err(MarkovError::ColumnSumNonzero { j: 0, .. })
        ));
    }

    #[test]
    fn row_convention_is_transposed() {
        let row = DMatrix::from_row_slice(2, 2, &[-2.0, 2.0, 1.0, -1.0]);
        let g = validate_generator(row, Convention::Row).unwrap();
        assert_eq!(g.rate(1, 0), 2.0);
        assert_eq!(*g.rates(), *two_state(2.0, 1.0).rates());
    }

    #[test]
    fn stationary_two_state_closed_form() {
        // π ∝ (b, a)
        let st = stationary_distribution(&two_state(2.0, 1.0)).unwrap();
        assert_abs_diff_eq!(st.pi()[0], 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(st.pi()[1], 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn stationary_three_cycle_uniform() {
        let g = three_cycle();
        let st = stationary_distribution(&g).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(st.pi()[i], 1.0 / 3.0, epsilon = 1e-14);
        }
        assert!(vec_max_abs(&(g.rates() * st.pi())) < 1e-14);
    }

    #[test]
    fn stationary_symmetric_generator_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let mut q = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let r = rng.random_range(0.1..2.0);
                q[(i, j)] = r;
                q[(j, i)] = r;
            }
        }
        for j in 0..n {
            q[(j, j)] = -(q.column(j).sum());
        }
        let st = stationary_distribution(&validate_generator(q, Convention::Column).unwrap()).unwrap();
        for &p in st.pi().iter() {
            assert_abs_diff_eq!(p, 1.0 / n as f64, epsilon = 1e-13);
        }
    }

    #[test]
    fn propagate_trivial_cases() {
        let g = random_chain(5, 11, ChainKind::General, 1.0).unwrap();
        let st = stationary_distribution(&g).unwrap();
        let p = propagate(&g, &st.as_probability(), 3.7, Propagation::Expm).unwrap();
        assert!((p.as_vector() - st.pi()).amax() < 1e-12);
        let p0 = ProbabilityVector::point_mass(5, 2).unwrap();
        assert_eq!(propagate(&g, &p0, 0.0, Propagation::Expm).unwrap(), p0);
        assert_eq!(
            propagate(&g, &p0, -1.0, Propagation::Expm),
            Err(MarkovError::NegativeTime(-1.0))
        );
    }

    #[test]
    fn propagate_two_state_relaxation() {
        // p₁(t) = 1/3 + (2/3) e^{-3t}
        let g = two_state(2.0, 1.0);
        let p0 = ProbabilityVector::point_mass(2, 0).unwrap();
        for &t in &[0.1f64, 0.5, 1.0, 2.0] {
            let exact = 1.0 / 3.0 + 2.0 / 3.0 * (-3.0 * t).exp();
            let p = propagate(&g, &p0, t, Propagation::Expm).unwrap();
            assert_abs_diff_eq!(p[0], exact, epsilon = 1e-13);
            let p = propagate(&g, &p0, t, Propagation::Rk4 { h: 1e-3 }).unwrap();
            assert_abs_diff_eq!(p[0], exact, epsilon = 1e-11);
        }
        let p = propagate(&g, &p0, 20.0, Propagation::Expm).unwrap();
        assert_abs_diff_eq!(p[0], 1.0 / 3.0, epsilon = 1e-8);
        assert_abs_diff_eq!(p[1], 2.0 / 3.0, epsilon = 1e-8);
    }

    #[test]
    fn rk4_instability_is_detected() {
        let g = random_chain(4, 1, ChainKind::General, 50.0).unwrap();
        let p0 = ProbabilityVector::point_mass(4, 0).unwrap();
        assert_eq!(
            propagate(&g, &p0, 5.0, Propagation::Rk4 { h: 1.0 }),
            Err(MarkovError::StepTooLarge { h: 1.0 })
        );
        assert_eq!(
            propagate(&g, &p0, 1.0, Propagation::Rk4 { h: 0.0 }),
            Err(MarkovError::BadStep(0.0))
        );
    }

    #[test]
    fn density_init_examples() {
        let rho = density_matrix_init(&ProbabilityVector::point_mass(2, 0).unwrap());
        assert_eq!(*rho.matrix(), DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]));
        assert_eq!(rho.trace(), 1.0);
        assert_eq!(rho.idempotence_residual(), 0.0);

        let rho = density_matrix_init(&ProbabilityVector::uniform(2).unwrap());
        assert_eq!(*rho.matrix(), DMatrix::from_element(2, 2, 0.5));

        let p = ProbabilityVector::from_weights(DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let rho = density_matrix_init(&p);
        for c in rho.matrix().column_iter() {
            assert_abs_diff_eq!(c[0], 1.0 / 3.0, epsilon = 1e-16);
            assert_abs_diff_eq!(c[1], 2.0 / 3.0, epsilon = 1e-16);
        }
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-15);
        assert!(rho.idempotence_residual() < 1e-15);
    }

    #[test]
    fn density_propagation() {
        let g = two_state(2.0, 1.0);
        let id = MarkovDensityMatrix::identity(2);
        assert_eq!(density_matrix_propagate(&g, &id, 0.0).unwrap(), id);
        for &t in &[0.1, 1.0, 10.0] {
            let p = density_matrix_propagate(&g, &id, t).unwrap();
            for s in p.column_sums() {
                assert_abs_diff_eq!(s, 1.0, epsilon = 1e-13);
            }
        }
        let g = random_chain(4, 5, ChainKind::General, 1.0).unwrap();
        let p0 = ProbabilityVector::point_mass(4, 1).unwrap();
        let rho = density_matrix_propagate(&g, &density_matrix_init(&p0), 2.0).unwrap();
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-12);
        assert!(rho.idempotence_residual() < 1e-12);
    }

    #[test]
    fn three_cycle_construction() {
        let g = three_cycle();
        let expected = DMatrix::from_row_slice(3, 3, &[-3.0, 1.0, 2.0, 2.0, -3.0, 1.0, 1.0, 2.0, -3.0]);
        assert_eq!(*g.rates(), expected);
    }

    #[test]
    fn random_chain_is_deterministic() {
        for kind in [ChainKind::Reversible, ChainKind::General] {
            assert_eq!(random_chain(7, 42, kind, 1.0), random_chain(7, 42, kind, 1.0));
            assert_ne!(random_chain(7, 42, kind, 1.0), random_chain(7, 43, kind, 1.0));
        }
        assert_eq!(random_chain(1, 0, ChainKind::General, 1.0), Err(MarkovError::BadSize(1)));
    }

    #[test]
    fn reversible_chain_detailed_balance() {
        for seed in 0..10 {
            let g = random_chain(2 + seed as usize % 9, seed, ChainKind::Reversible, 1.0).unwrap();
            let st = stationary_distribution(&g).unwrap();
            let pi = st.pi();
            let tol = 1e-10 * g.norm_inf();
            for i in 0..g.n() {
                for j in 0..g.n() {
                    let imbalance = g.rate(i, j) * pi[j] - g.rate(j, i) * pi[i];
                    assert!(imbalance.abs() <= tol, "seed {seed}: {imbalance}");
                }
            }
        }
    }

    #[test]
    fn permutation_relabels_states() {
        let g = random_chain(4, 9, ChainKind::General, 1.0).unwrap();
        let perm = [2, 0, 3, 1];
        let h = g.permuted(&perm).unwrap();
        let pg = stationary_distribution(&g).unwrap();
        let ph = stationary_distribution(&h).unwrap();
        for (k, &old) in perm.iter().enumerate() {
            assert_abs_diff_eq!(ph.pi()[k], pg.pi()[old], epsilon = 1e-13);
        }
        assert!(g.permuted(&[0, 0, 1, 2]).is_err());
    }
}
