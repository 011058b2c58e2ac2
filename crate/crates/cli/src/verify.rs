//! The `verify` command: invariant suites over seeded random chains.

use std::fmt::Write as _;

use markov_hamilton::decomposition::{potential, potential_gradient};
use markov_hamilton::dynamics::{hermitian_generator, schrodinger_flow};
use markov_hamilton::entropy::{entropy_production, flux_square_sum, near_equilibrium_family, TRACE_FLOOR};
use markov_hamilton::linalg::{max_abs, norm_inf, skew_part, vec_max_abs};
use markov_hamilton::markov::{
    density_matrix_init, density_matrix_propagate, propagate, random_chain, transition_matrix,
    MarkovDensityMatrix, Propagation,
};
use markov_hamilton::{
    analyse_chain, stationary_distribution, u_frame, ChainKind, Error, GeneratorKind, GeneratorMatrix,
    ProbabilityVector, Scheme, SkewSpectrum,
};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// One checked invariant; a trial passes it when `value <= tol`.
#[derive(Debug, Clone, Copy)]
pub struct Invariant {
    pub suite: &'static str,
    pub name: &'static str,
    pub tol: f64,
}

macro_rules! invariants {
    ($($id:ident => $suite:literal, $name:literal, $tol:expr;)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        #[repr(usize)]
        enum Id { $($id),* }

        pub const INVARIANTS: &[Invariant] = &[
            $(Invariant { suite: $suite, name: $name, tol: $tol }),*
        ];
    };
}

invariants! {
    StationaryResidual => "markov", "stationary_residual", 1e-10;
    ProbabilityConservation => "markov", "probability_conservation", 1e-10;
    DecompositionResiduals => "decomposition", "split_residuals", 1e-10;
    CanonicalForm => "spectral", "canonical_form", 1e-9;
    SvdReconstruction => "spectral", "svd_reconstruction", 1e-9;
    SvdPairing => "spectral", "svd_pairing", 1e-9;
    BasisOrthogonality => "spectral", "orthogonality", 1e-10;
    OddKernel => "spectral", "odd_dimension_kernel", 0.0;
    TraceIdentity => "trace-identity", "three_way_agreement", 1e-9;
    EpNonnegative => "entropy", "ep_nonnegative", 0.0;
    ReversibleFlux => "entropy", "reversible_flux", 1e-10;
    ReversibleEp => "entropy", "reversible_ep", 1e-18;
    ScaleCovariance => "entropy", "scale_covariance", 1e-9;
    PermutationInvariance => "entropy", "permutation_invariance", 1e-9;
    NearEquilibrium => "entropy", "near_equilibrium_limit", 1.0;
    ExpmEnergy => "conservation", "expm_energy", 1e-10;
    ExpmNorm => "conservation", "expm_norm", 1e-10;
    Rk4Energy => "conservation", "rk4_energy", 1e-6;
    Rk4Norm => "conservation", "rk4_norm", 1e-6;
    PairInvariant => "conservation", "pair_projector", 1e-10;
    PhiMonotone => "gradient", "phi_nonincreasing", 1e-9;
    DissipationPsd => "gradient", "dissipation_psd", 1e-9;
    GradientFd => "gradient", "gradient_finite_difference", 1e-6;
    MasterEquation => "frame", "master_equation", 1e-8;
    Schrodinger => "frame", "schrodinger", 1e-9;
    DensityIdempotence => "density", "idempotence_trace", 1e-10;
    TransitionStochastic => "density", "transition_stochastic", 1e-10;
}

const N_INVARIANTS: usize = INVARIANTS.len();

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub trials: usize,
    pub nmax: usize,
    pub seed: u64,
    /// Test hook: corrupts one entry of `Ã` before the trace-identity suite.
    pub inject_fault: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Worst {
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantSummary {
    pub suite: &'static str,
    pub name: &'static str,
    pub tol: f64,
    pub checked: usize,
    pub passed: usize,
    pub max_residual: f64,
    pub worst: Option<Worst>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteSummary {
    pub suite: &'static str,
    pub invariants: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialError {
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub suite: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifySummary {
    pub trials: usize,
    pub nmax: usize,
    pub seed: u64,
    pub suites: Vec<SuiteSummary>,
    pub invariants: Vec<InvariantSummary>,
    pub errors: Vec<TrialError>,
    pub pass: bool,
}

impl VerifySummary {
    pub fn suite(&self, name: &str) -> Option<&SuiteSummary> {
        self.suites.iter().find(|s| s.suite == name)
    }

    /// Human-readable table, one line per invariant and one per suite.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "verify: {} trials, n in [2, {}], seed {}",
            self.trials, self.nmax, self.seed
        );
        for inv in &self.invariants {
            let _ = writeln!(
                s,
                "{:<5} {:<15} {:<28} {:>4}/{:<4} max {:.3e} tol {:.1e}",
                if inv.pass { "PASS" } else { "FAIL" },
                inv.suite,
                inv.name,
                inv.passed,
                inv.checked,
                inv.max_residual,
                inv.tol
            );
        }
        for e in self.errors.iter().take(10) {
            let _ = writeln!(s, "error: trial {} (seed {}, n {}) in {}: {}", e.trial, e.seed, e.n, e.suite, e.message);
        }
        for suite in &self.suites {
            let _ = writeln!(s, "suite {:<15} {}", suite.suite, if suite.pass { "PASS" } else { "FAIL" });
        }
        let _ = writeln!(s, "overall {}", if self.pass { "PASS" } else { "FAIL" });
        s
    }
}

struct Record {
    values: [Option<f64>; N_INVARIANTS],
    errors: Vec<(&'static str, String)>,
}

impl Record {
    fn set(&mut self, id: Id, v: f64) {
        // NaN counts as a failure
        let v = if v.is_nan() { f64::INFINITY } else { v };
        let slot = &mut self.values[id as usize];
        *slot = Some(slot.map_or(v, |old| old.max(v)));
    }

    fn fail_suite(&mut self, suite: &'static str, message: String) {
        for (k, inv) in INVARIANTS.iter().enumerate() {
            if inv.suite == suite {
                self.values[k] = Some(f64::INFINITY);
            }
        }
        self.errors.push((suite, message));
    }
}

fn rel(x: f64, y: f64, floor: f64) -> f64 {
    (x - y).abs() / x.abs().max(y.abs()).max(floor)
}

fn random_probability(rng: &mut ChaCha8Rng, n: usize) -> Result<ProbabilityVector, Error> {
    let w = DVector::from_fn(n, |_, _| rng.random_range(0.05..1.0));
    Ok(ProbabilityVector::from_weights(w)?)
}

struct Trial<'a> {
    q: &'a GeneratorMatrix,
    seed: u64,
    n: usize,
    inject_fault: bool,
}

fn suite_markov(t: &Trial, rec: &mut Record, rng: &mut ChaCha8Rng) -> Result<(), Error> {
    let q = t.q;
    let pi = stationary_distribution(q)?;
    rec.set(Id::StationaryResidual, pi.residual() / q.norm_inf());
    let p0 = random_probability(rng, t.n)?;
    for time in [0.1, 1.0, 10.0] {
        let p = propagate(q, &p0, time, Propagation::Expm)?;
        let v = p.as_vector();
        let loss = (v.sum() - 1.0).abs().max(-v.min());
        rec.set(Id::ProbabilityConservation, loss);
    }
    Ok(())
}

fn suite_decomposition(t: &Trial, rec: &mut Record) -> Result<(), Error> {
    let pi = stationary_distribution(t.q)?;
    let d = u_frame(t.q, &pi)?;
    let r = d.residuals(t.q);
    let worst = [
        r.symmetry,
        r.skewness,
        r.reconstruction,
        r.kernel_symmetric,
        r.kernel_skew,
        r.flux_formula,
        r.frame_consistency,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    rec.set(Id::DecompositionResiduals, worst / r.scale);
    Ok(())
}

fn suite_spectral(t: &Trial, rec: &mut Record) -> Result<(), Error> {
    let pi = stationary_distribution(t.q)?;
    let d = u_frame(t.q, &pi)?;
    for a in [d.flux(), d.skew()] {
        let spec = SkewSpectrum::new(a)?;
        let r = spec.residuals(a);
        let scale = r.scale.max(f64::MIN_POSITIVE);
        rec.set(Id::CanonicalForm, r.canonical / scale);
        rec.set(Id::SvdReconstruction, r.svd_reconstruction / scale);
        rec.set(Id::SvdPairing, r.pairing);
        rec.set(Id::BasisOrthogonality, r.orthogonality.max(r.svd_orthogonality));
        let odd_without_kernel = t.n % 2 == 1 && spec.zero_dim() == 0;
        rec.set(Id::OddKernel, if odd_without_kernel { 1.0 } else { 0.0 });
    }
    Ok(())
}

fn suite_trace(t: &Trial, rec: &mut Record) -> Result<(), Error> {
    let q = t.q;
    let pi = stationary_distribution(q)?;
    let d = u_frame(q, &pi)?;
    let mut flux = d.flux().clone();
    if t.inject_fault && t.n > 1 {
        flux[(0, 1)] = -flux[(0, 1)];
    }
    let trace_gram = (flux.transpose() * &flux).trace();
    let sum_a2 = flux_square_sum(q, &pi)?;
    let sum_lambda2 = SkewSpectrum::new(&skew_part(&flux))?.sum_lambda_squared();
    let floor = TRACE_FLOOR * q.norm_inf().powi(2).max(1.0);
    let disc = rel(trace_gram, sum_a2, floor)
        .max(rel(trace_gram, sum_lambda2, floor))
        .max(rel(sum_a2, sum_lambda2, floor));
    rec.set(Id::TraceIdentity, disc);
    Ok(())
}

fn suite_entropy(t: &Trial, rec: &mut Record, rng: &mut ChaCha8Rng) -> Result<(), Error> {
    let q = t.q;
    let pi = stationary_distribution(q)?;
    let (ep, _) = entropy_production(q, &pi)?;
    rec.set(Id::EpNonnegative, (-ep).max(0.0));

    let rev = random_chain(t.n, t.seed, ChainKind::Reversible, 1.0)?;
    let rpi = stationary_distribution(&rev)?;
    let rd = u_frame(&rev, &rpi)?;
    rec.set(Id::ReversibleFlux, norm_inf(rd.flux()) / rev.norm_inf());
    rec.set(Id::ReversibleEp, entropy_production(&rev, &rpi)?.0);

    let c = rng.random_range(0.1..10.0);
    let qc = q.scaled(c)?;
    let (epc, _) = entropy_production(&qc, &stationary_distribution(&qc)?)?;
    rec.set(Id::ScaleCovariance, rel(epc, c * ep, 1e-18));

    let mut perm: Vec<usize> = (0..t.n).collect();
    perm.shuffle(rng);
    let qp = q.permuted(&perm)?;
    let (epp, _) = entropy_production(&qp, &stationary_distribution(&qp)?)?;
    rec.set(Id::PermutationInvariance, rel(epp, ep, 1e-18));

    // ratio e_p/ê_p must approach 1 monotonically with |ratio − 1| ≤ 10ε
    let m = t.n.max(3);
    let mut prev = f64::INFINITY;
    let mut worst: f64 = 0.0;
    for eps in [1e-1, 1e-2, 1e-3] {
        let qe = near_equilibrium_family(m, t.seed, eps)?;
        let report = analyse_chain(&qe)?.entropy;
        let dev = report.near_eq_ratio.map_or(f64::INFINITY, |r| (r - 1.0).abs());
        if dev > prev {
            worst = f64::INFINITY;
        }
        worst = worst.max(dev / (10.0 * eps));
        prev = dev;
    }
    rec.set(Id::NearEquilibrium, worst);
    Ok(())
}

fn suite_conservation(t: &Trial, rec: &mut Record, rng: &mut ChaCha8Rng) -> Result<(), Error> {
    let pi = stationary_distribution(t.q)?;
    let d = u_frame(t.q, &pi)?;
    let dynamics = markov_hamilton::Dynamics::from_decomposition(&d)?;
    let p0 = random_probability(rng, t.n)?;
    let u0 = d.frame().to_u(p0.as_vector())?;
    let b = dynamics.spectrum().basis();
    let pair = (!dynamics.spectrum().lambdas().is_empty()).then(|| {
        let rows = b.rows(0, 2);
        rows.transpose() * rows
    });
    let observables: Vec<DMatrix<f64>> = pair.into_iter().collect();

    let exact = dynamics.flow(GeneratorKind::Skew, &u0, 10.0, 0.1, Scheme::Expm)?;
    let report = dynamics.conservation_report(&exact, &observables)?;
    rec.set(Id::ExpmEnergy, report.energy_relative);
    rec.set(Id::ExpmNorm, report.norm_relative);
    for obs in &report.observables {
        let drift = if obs.commutes { obs.drift.unwrap_or(f64::INFINITY) } else { f64::INFINITY };
        rec.set(Id::PairInvariant, drift / u0.norm_squared());
    }

    let rk4 = dynamics.flow(GeneratorKind::Skew, &u0, 10.0, 1e-3, Scheme::Rk4)?;
    let report = dynamics.conservation_report(&rk4, &[])?;
    rec.set(Id::Rk4Energy, report.energy_relative);
    rec.set(Id::Rk4Norm, report.norm_relative);
    Ok(())
}

fn suite_gradient(t: &Trial, rec: &mut Record, rng: &mut ChaCha8Rng) -> Result<(), Error> {
    let pi = stationary_distribution(t.q)?;
    let d = u_frame(t.q, &pi)?;
    let dynamics = markov_hamilton::Dynamics::from_decomposition(&d)?;
    let s = d.symmetric();
    let u0 = DVector::from_fn(t.n, |_, _| rng.random_range(-1.0..1.0));

    let traj = dynamics.flow(GeneratorKind::Symmetric, &u0, 10.0, 0.1, Scheme::Expm)?;
    let phi0 = traj.potential[0].abs().max(f64::MIN_POSITIVE);
    let rise = traj
        .potential
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    rec.set(Id::PhiMonotone, rise / phi0);

    let min_eig = (-s).symmetric_eigenvalues().min();
    rec.set(Id::DissipationPsd, (-min_eig).max(0.0) / norm_inf(s));

    let grad = potential_gradient(s, &u0);
    let delta = 1e-5;
    let fd = DVector::from_fn(t.n, |i, _| {
        let mut up = u0.clone();
        let mut dn = u0.clone();
        up[i] += delta;
        dn[i] -= delta;
        (potential(s, &up) - potential(s, &dn)) / (2.0 * delta)
    });
    let scale = vec_max_abs(&grad).max(norm_inf(s) * 1e-12);
    rec.set(Id::GradientFd, vec_max_abs(&(fd - &grad)) / scale);
    Ok(())
}

fn suite_frame(t: &Trial, rec: &mut Record, rng: &mut ChaCha8Rng) -> Result<(), Error> {
    let pi = stationary_distribution(t.q)?;
    let d = u_frame(t.q, &pi)?;
    let dynamics = markov_hamilton::Dynamics::from_decomposition(&d)?;
    let p0 = random_probability(rng, t.n)?;
    let u0 = d.frame().to_u(p0.as_vector())?;
    let time = 5.0;
    let traj = dynamics.flow(GeneratorKind::Full, &u0, time, 1.0, Scheme::Expm)?;
    let p_frame = d.frame().from_u(traj.last_state())?;
    let p_master = propagate(t.q, &p0, time, Propagation::Expm)?;
    rec.set(Id::MasterEquation, vec_max_abs(&(p_frame - p_master.as_vector())));

    let herm = hermitian_generator(dynamics.skew())?;
    let times = [0.5, 1.0, 2.0, 5.0];
    let psi = schrodinger_flow(&herm, &u0, &times)?;
    for (time, psi) in times.iter().zip(&psi) {
        let real = dynamics.skew_propagator(*time) * &u0;
        let diff = psi
            .iter()
            .zip(real.iter())
            .map(|(z, x)| (z - x).norm())
            .fold(0.0, f64::max);
        rec.set(Id::Schrodinger, diff / u0.norm());
    }
    Ok(())
}

fn suite_density(t: &Trial, rec: &mut Record, rng: &mut ChaCha8Rng) -> Result<(), Error> {
    let p0 = random_probability(rng, t.n)?;
    let rho0 = density_matrix_init(&p0);
    let ident = MarkovDensityMatrix::identity(t.n);
    for time in [0.1, 1.0, 10.0] {
        let rho = density_matrix_propagate(t.q, &rho0, time)?;
        rec.set(
            Id::DensityIdempotence,
            rho.idempotence_residual().max((rho.trace() - 1.0).abs()),
        );
        let p = density_matrix_propagate(t.q, &ident, time)?;
        let sums = p.column_sums().into_iter().map(|c| (c - 1.0).abs()).fold(0.0, f64::max);
        let negative = (-p.matrix().min()).max(0.0);
        let direct = max_abs(&(p.matrix() - transition_matrix(t.q, time)?));
        rec.set(Id::TransitionStochastic, sums.max(negative).max(direct));
    }
    Ok(())
}

type Suite = fn(&Trial, &mut Record, &mut ChaCha8Rng) -> Result<(), Error>;

const SUITES: &[(&str, Suite)] = &[
    ("markov", suite_markov),
    ("decomposition", |t, r, _| suite_decomposition(t, r)),
    ("spectral", |t, r, _| suite_spectral(t, r)),
    ("trace-identity", |t, r, _| suite_trace(t, r)),
    ("entropy", suite_entropy),
    ("conservation", suite_conservation),
    ("gradient", suite_gradient),
    ("frame", suite_frame),
    ("density", suite_density),
];

fn run_trial(index: usize, seed: u64, n: usize, inject_fault: bool) -> Record {
    let mut rec = Record {
        values: [None; N_INVARIANTS],
        errors: Vec::new(),
    };
    let q = match random_chain(n, seed, ChainKind::General, 1.0) {
        Ok(q) => q,
        Err(e) => {
            for (name, _) in SUITES {
                rec.fail_suite(name, e.to_string());
            }
            return rec;
        }
    };
    let trial = Trial {
        q: &q,
        seed,
        n,
        inject_fault,
    };
    for (k, (name, suite)) in SUITES.iter().enumerate() {
        // each suite draws from its own stream so suites stay independent
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((index as u64) << 32) ^ (k as u64 + 1));
        if let Err(e) = suite(&trial, &mut rec, &mut rng) {
            rec.fail_suite(name, e.to_string());
        }
    }
    rec
}

/// Per-trial `(n, seed)` drawn from the master seed.
pub fn trial_plan(opts: &VerifyOptions) -> Vec<(usize, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    (0..opts.trials)
        .map(|_| (rng.random_range(2..=opts.nmax), rng.random::<u64>()))
        .collect()
}

pub fn run(opts: &VerifyOptions) -> VerifySummary {
    let plan = trial_plan(opts);
    let records: Vec<Record> = plan
        .par_iter()
        .enumerate()
        .map(|(i, &(n, seed))| run_trial(i, seed, n, opts.inject_fault))
        .collect();

    let mut invariants: Vec<InvariantSummary> = INVARIANTS
        .iter()
        .map(|inv| InvariantSummary {
            suite: inv.suite,
            name: inv.name,
            tol: inv.tol,
            checked: 0,
            passed: 0,
            max_residual: 0.0,
            worst: None,
            pass: true,
        })
        .collect();
    let mut errors = Vec::new();
    for (i, (rec, &(n, seed))) in records.iter().zip(&plan).enumerate() {
        for (k, v) in rec.values.iter().enumerate() {
            let Some(v) = *v else { continue };
            let s = &mut invariants[k];
            s.checked += 1;
            if v <= s.tol {
                s.passed += 1;
            }
            if s.worst.is_none() || v > s.max_residual {
                s.max_residual = v;
                s.worst = Some(Worst { trial: i, seed, n });
            }
        }
        for (suite, message) in &rec.errors {
            errors.push(TrialError {
                trial: i,
                seed,
                n,
                suite,
                message: message.clone(),
            });
        }
    }
    for s in &mut invariants {
        s.pass = s.passed == s.checked;
    }
    let suites: Vec<SuiteSummary> = SUITES
        .iter()
        .map(|(name, _)| {
            let members: Vec<_> = invariants.iter().filter(|s| s.suite == *name).collect();
            SuiteSummary {
                suite: name,
                invariants: members.len(),
                pass: members.iter().all(|s| s.pass),
            }
        })
        .collect();
    let pass = suites.iter().all(|s| s.pass) && errors.is_empty();
    VerifySummary {
        trials: opts.trials,
        nmax: opts.nmax,
        seed: opts.seed,
        suites,
        invariants,
        errors,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(trials: usize, nmax: usize, inject_fault: bool) -> VerifyOptions {
        VerifyOptions {
            trials,
            nmax,
            seed: 3,
            inject_fault,
        }
    }

    #[test]
    fn every_invariant_belongs_to_a_suite() {
        for inv in INVARIANTS {
            assert!(SUITES.iter().any(|(s, _)| *s == inv.suite), "{}", inv.name);
        }
    }

    #[test]
    fn small_run_passes() {
        let summary = run(&opts(6, 6, false));
        assert!(summary.pass, "{}", summary.render());
        assert!(summary.invariants.iter().all(|s| s.checked > 0));
    }

    #[test]
    fn plan_is_deterministic() {
        let a = trial_plan(&opts(20, 12, false));
        assert_eq!(a, trial_plan(&opts(20, 12, false)));
        assert!(a.iter().all(|&(n, _)| (2..=12).contains(&n)));
    }

    #[test]
    fn fault_breaks_only_the_trace_suite() {
        let summary = run(&opts(4, 6, true));
        assert!(!summary.pass);
        assert!(!summary.suite("trace-identity").unwrap().pass);
        for s in summary.suites.iter().filter(|s| s.suite != "trace-identity") {
            assert!(s.pass, "{}", s.suite);
        }
    }
}
