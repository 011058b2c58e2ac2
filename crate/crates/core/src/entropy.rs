//! Entropy production of a stationary chain and the trace identity linking it
//! to the flux matrix `Ã`.
//!
//! All rates are in the column convention, `q_ij` being the rate `j -> i`.
//! Logarithms are natural, so entropy production is in nats per unit time.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::markov::{random_chain, validate_generator, ChainKind, Convention, GeneratorMatrix, MarkovError, StationaryDistribution};
use crate::spectral::SkewSpectrum;

/// Relative agreement required between the three trace computations.
pub const TRACE_IDENTITY_TOL: f64 = 1e-9;
/// Absolute floor of the trace comparison, in units of `‖Q‖∞²`. Below it the
/// three values are roundoff of an equilibrium chain.
pub const TRACE_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EntropyError {
    #[error("edge ({i}, {j}) has a rate in only one direction; entropy production is infinite")]
    InfiniteEntropyProduction { i: usize, j: usize },
    #[error("trace identity violated: Tr(ÃᵀÃ) = {trace_gram:e}, Σa² = {sum_a2:e}, Σλ² = {sum_lambda2:e}")]
    IdentityViolation {
        trace_gram: f64,
        sum_a2: f64,
        sum_lambda2: f64,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

pub type Result<T, E = EntropyError> = std::result::Result<T, E>;

/// Stationary flux and affinity of one unordered edge `i > j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeFlux {
    pub i: usize,
    pub j: usize,
    /// `J_ij = q_ij π_j − q_ji π_i`
    pub flux: f64,
    /// `ln(q_ij π_j / (q_ji π_i))`
    pub affinity: f64,
}

impl EdgeFlux {
    pub fn entropy_production(&self) -> f64 {
        self.flux * self.affinity
    }
}

fn check_dims(q: &GeneratorMatrix, pi: &StationaryDistribution) -> Result<()> {
    if q.n() != pi.n() {
        return Err(EntropyError::DimensionMismatch {
            expected: q.n(),
            found: pi.n(),
        });
    }
    Ok(())
}

/// All edges carrying a rate in either direction, `i > j`.
pub fn edge_fluxes(q: &GeneratorMatrix, pi: &StationaryDistribution) -> Result<Vec<EdgeFlux>> {
    check_dims(q, pi)?;
    let p = pi.pi();
    let mut out = Vec::new();
    for i in 0..q.n() {
        for j in 0..i {
            let (qij, qji) = (q.rate(i, j), q.rate(j, i));
            match (qij > 0.0, qji > 0.0) {
                (false, false) => continue,
                (true, true) => {}
                _ => return Err(EntropyError::InfiniteEntropyProduction { i, j }),
            }
            let (fwd, back) = (qij * p[j], qji * p[i]);
            out.push(EdgeFlux {
                i,
                j,
                flux: fwd - back,
                affinity: (fwd / back).ln(),
            });
        }
    }
    Ok(out)
}

/// `e_p = Σ_{i>j} J_ij ln(q_ij π_j / (q_ji π_i))`
pub fn entropy_production(q: &GeneratorMatrix, pi: &StationaryDistribution) -> Result<(f64, Vec<EdgeFlux>)> {
    let edges = edge_fluxes(q, pi)?;
    let ep = edges.iter().map(EdgeFlux::entropy_production).sum();
    Ok((ep, edges))
}

/// `½ Σ_{i≠j} J_ij² / (q_ji π_i)`, the quadratic expansion of `e_p` around
/// detailed balance.
pub fn near_equilibrium_ep(q: &GeneratorMatrix, pi: &StationaryDistribution) -> Result<f64> {
    let edges = edge_fluxes(q, pi)?;
    let p = pi.pi();
    let mut total = 0.0;
    for e in &edges {
        // ordered pair (i, j) has denominator q_ji π_i, pair (j, i) has q_ij π_j
        total += e.flux * e.flux / (q.rate(e.j, e.i) * p[e.i]);
        total += e.flux * e.flux / (q.rate(e.i, e.j) * p[e.j]);
    }
    Ok(0.5 * total)
}

/// `Σ_{i≠j} (q_ij π_j − q_ji π_i)² / (π_i π_j)`, straight from the rates.
pub fn flux_square_sum(q: &GeneratorMatrix, pi: &StationaryDistribution) -> Result<f64> {
    check_dims(q, pi)?;
    let p = pi.pi();
    let mut total = 0.0;
    for i in 0..q.n() {
        for j in 0..q.n() {
            if i != j {
                let f = q.rate(i, j) * p[j] - q.rate(j, i) * p[i];
                total += f * f / (p[i] * p[j]);
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyReport {
    /// nats per unit time
    pub ep: f64,
    /// nats per unit time
    pub ep_near_eq: f64,
    /// `e_p / ê_p`, dimensionless; `None` at equilibrium.
    pub near_eq_ratio: Option<f64>,
    /// `Tr(ÃᵀÃ)` by explicit product
    pub trace_gram: f64,
    /// `Σ a_ij²` from the rates
    pub sum_a2: f64,
    /// `Σ λ_ℓ²` from the spectrum of `Ã`
    pub sum_lambda2: f64,
    /// `Tr(AᵀA) = Tr(ÃᵀÃ)/4` for the dynamics-scale skew part `A = Ã/2`
    pub dynamics_trace: f64,
    /// Largest pairwise relative disagreement of the three traces.
    pub discrepancy: f64,
    pub per_edge: Vec<EdgeFlux>,
}

/// Computes the three traces independently and checks that they agree.
///
/// `flux` is `Ã` for `(q, pi)` and `spectrum` its skew spectrum.
pub fn trace_identity(
    q: &GeneratorMatrix,
    pi: &StationaryDistribution,
    flux: &DMatrix<f64>,
    spectrum: &SkewSpectrum,
) -> Result<EntropyReport> {
    check_dims(q, pi)?;
    for found in [flux.nrows(), spectrum.n()] {
        if found != q.n() {
            return Err(EntropyError::DimensionMismatch { expected: q.n(), found });
        }
    }
    let (ep, per_edge) = entropy_production(q, pi)?;
    let ep_near_eq = near_equilibrium_ep(q, pi)?;
    let trace_gram = (flux.transpose() * flux).trace();
    let sum_a2 = flux_square_sum(q, pi)?;
    let sum_lambda2 = spectrum.sum_lambda_squared();

    let floor = TRACE_FLOOR * q.norm_inf().powi(2).max(1.0);
    let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(floor);
    let discrepancy = rel(trace_gram, sum_a2)
        .max(rel(trace_gram, sum_lambda2))
        .max(rel(sum_a2, sum_lambda2));
    if !(discrepancy <= TRACE_IDENTITY_TOL) {
        return Err(EntropyError::IdentityViolation {
            trace_gram,
            sum_a2,
            sum_lambda2,
        });
    }
    Ok(EntropyReport {
        ep,
        ep_near_eq,
        near_eq_ratio: (ep_near_eq > 0.0).then(|| ep / ep_near_eq),
        trace_gram,
        sum_a2,
        sum_lambda2,
        dynamics_trace: trace_gram / 4.0,
        discrepancy,
        per_edge,
    })
}

/// A reversible chain driven out of equilibrium by a forward ring current of
/// strength `eps`: `Q(ε) = Q₀ + ε·C` with `C` the unit one-way cycle.
pub fn near_equilibrium_family(n: usize, seed: u64, eps: f64) -> Result<GeneratorMatrix, MarkovError> {
    let base = random_chain(n, seed, ChainKind::Reversible, 1.0)?;
    let ring = random_chain(
        n,
        seed,
        ChainKind::Cycle {
            forward: 1.0,
            backward: 0.0,
        },
        1.0,
    )?;
    validate_generator(base.rates() + ring.rates() * eps, Convention::Column)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::u_frame;
    use crate::markov::stationary_distribution;

    fn analyse(q: &GeneratorMatrix) -> EntropyReport {
        let pi = stationary_distribution(q).unwrap();
        let d = u_frame(q, &pi).unwrap();
        let spec = SkewSpectrum::new(d.flux()).unwrap();
        trace_identity(q, &pi, d.flux(), &spec).unwrap()
    }

    fn three_cycle(a: f64, b: f64) -> GeneratorMatrix {
        random_chain(3, 0, ChainKind::Cycle { forward: a, backward: b }, 1.0).unwrap()
    }

    #[test]
    fn three_cycle_values() {
        let r = analyse(&three_cycle(2.0, 1.0));
        assert!((r.ep - 2f64.ln()).abs() < 1e-12);
        assert!((r.ep_near_eq - 0.75).abs() < 1e-12);
        for v in [r.trace_gram, r.sum_a2, r.sum_lambda2] {
            assert!((v - 6.0).abs() < 1e-10);
        }
        assert!((r.dynamics_trace - 1.5).abs() < 1e-10);
        assert_eq!(r.per_edge.len(), 3);
        for e in &r.per_edge {
            assert!((e.flux.abs() - 1.0 / 3.0).abs() < 1e-12);
            assert!((e.affinity.abs() - 2f64.ln()).abs() < 1e-12);
            assert!(e.entropy_production() >= 0.0);
        }
    }

    #[test]
    fn symmetric_cycle_is_at_equilibrium() {
        for a in [0.5, 1.0, 7.0] {
            let r = analyse(&three_cycle(a, a));
            assert!(r.ep.abs() < 1e-15);
            assert!(r.ep_near_eq.abs() < 1e-15);
            assert!(r.trace_gram < 1e-20);
        }
    }

    #[test]
    fn reversible_chains_produce_no_entropy() {
        for seed in 0..10 {
            let r = analyse(&random_chain(6, seed, ChainKind::Reversible, 1.0).unwrap());
            assert!(r.ep <= 1e-18 && r.ep >= 0.0);
            assert!(r.per_edge.iter().all(|e| e.flux.abs() < 1e-12));
        }
    }

    #[test]
    fn one_way_edges_are_infinite() {
        let q = three_cycle(1.0, 0.0);
        let pi = stationary_distribution(&q).unwrap();
        assert!(matches!(
            entropy_production(&q, &pi),
            Err(EntropyError::InfiniteEntropyProduction { .. })
        ));
        assert!(near_equilibrium_ep(&q, &pi).is_err());
    }

    #[test]
    fn zero_rate_pairs_are_skipped() {
        // 4-ring: non-adjacent pairs carry no rate at all
        let q = random_chain(4, 0, ChainKind::Cycle { forward: 2.0, backward: 1.0 }, 1.0).unwrap();
        let r = analyse(&q);
        assert_eq!(r.per_edge.len(), 4);
        // each edge: flux 1/4, affinity ln 2
        assert!((r.ep - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn scale_covariance() {
        let q = random_chain(5, 4, ChainKind::General, 1.0).unwrap();
        let r = analyse(&q);
        let c = 3.5;
        let rc = analyse(&q.scaled(c).unwrap());
        assert!((rc.ep - c * r.ep).abs() < 1e-10 * rc.ep);
        assert!((rc.ep_near_eq - c * r.ep_near_eq).abs() < 1e-10 * rc.ep_near_eq);
        assert!((rc.trace_gram - c * c * r.trace_gram).abs() < 1e-10 * rc.trace_gram);
    }

    #[test]
    fn relabeling_invariance() {
        let q = random_chain(5, 8, ChainKind::General, 1.0).unwrap();
        let r = analyse(&q);
        let rp = analyse(&q.permuted(&[3, 0, 4, 2, 1]).unwrap());
        assert!((r.ep - rp.ep).abs() < 1e-12 * r.ep);
        assert!((r.trace_gram - rp.trace_gram).abs() < 1e-12 * r.trace_gram);
    }

    #[test]
    fn near_equilibrium_ratio_approaches_one() {
        let mut last = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3] {
            let q = near_equilibrium_family(5, 13, eps).unwrap();
            let r = analyse(&q);
            let dev = (r.near_eq_ratio.unwrap() - 1.0).abs();
            assert!(dev <= 10.0 * eps, "eps {eps}: deviation {dev}");
            assert!(dev < last);
            last = dev;
        }
    }
}
