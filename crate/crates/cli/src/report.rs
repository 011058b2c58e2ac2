//! The `analyze` report.

use markov_hamilton::decomposition::DecompositionResiduals;
use markov_hamilton::dynamics::HarmonicDiagnostic;
use markov_hamilton::linalg::norm_inf;
use markov_hamilton::spectral::SpectralResiduals;
use markov_hamilton::{
    analyse_chain, Convention, EntropyReport, Error, GeneratorKind, GeneratorMatrix, MarkovError, Scheme,
};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Violation,
    Error,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Error => 1,
            Status::Violation => 2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputInfo {
    pub file: String,
    pub sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub convention: Convention,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

/// One tolerance check; `pass` is `value <= limit` unless stated otherwise.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &'static str, value: f64, limit: f64) -> Self {
        Self {
            name,
            value,
            limit,
            pass: value <= limit,
        }
    }

    fn at_least(name: &'static str, value: f64, limit: f64) -> Self {
        Self {
            name,
            value,
            limit,
            pass: value >= limit,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryInfo {
    pub pi: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Matrices {
    pub basis: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumInfo {
    /// `λ_j` of the flux matrix `Ã`.
    pub lambdas: Vec<f64>,
    pub zero_multiplicity: usize,
    /// `λ_j` of the dynamics skew part `A = Ã/2`.
    pub dynamics_lambdas: Vec<f64>,
    pub residuals: SpectralResiduals,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrices: Option<Matrices>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HeisenbergCheck {
    /// Probe state `u = e_1`.
    pub probe_state: usize,
    pub hamiltonian: f64,
    pub trace_form: f64,
    /// `trace_form / hamiltonian`; 2 within roundoff.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    /// `‖Ã‖∞ ≤ 1e-10·‖Q‖∞`: detailed balance holds numerically.
    pub equilibrium: bool,
    pub harmonic: HarmonicDiagnostic,
    pub heisenberg: HeisenbergCheck,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub module: &'static str,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub tool: Tool,
    pub status: Status,
    pub input: InputInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationary: Option<StationaryInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionResiduals>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy: Option<EntropyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn error_info(e: &Error) -> ErrorInfo {
    ErrorInfo {
        module: e.module(),
        kind: e.kind(),
        message: e.to_string(),
    }
}

/// Errors in reading or validating the input are input errors; anything
/// raised further down the pipeline is an invariant violation.
fn status_of(e: &Error) -> Status {
    match e {
        Error::Format(_) | Error::Markov(_) => Status::Error,
        _ => Status::Violation,
    }
}

/// Report for an input that could not be parsed.
pub fn failed_input(file: &str, bytes: &[u8], convention: Convention, err: &Error) -> AnalysisReport {
    AnalysisReport {
        tool: Tool {
            name: TOOL_NAME,
            version: TOOL_VERSION,
        },
        status: status_of(err),
        input: InputInfo {
            file: file.to_string(),
            sha256: sha256_hex(bytes),
            n: None,
            convention,
            labels: None,
        },
        stationary: None,
        decomposition: None,
        spectrum: None,
        entropy: None,
        diagnostics: None,
        checks: Vec::new(),
        error: Some(error_info(err)),
    }
}

/// Runs the full pipeline on a validated generator.
pub fn analyze(file: &str, bytes: &[u8], convention: Convention, q: &GeneratorMatrix, verbose: bool) -> AnalysisReport {
    let mut report = failed_input(file, bytes, convention, &Error::Markov(MarkovError::Empty));
    report.status = Status::Ok;
    report.error = None;
    report.input.n = Some(q.n());
    report.input.labels = Some(q.labels().to_vec());

    let analysis = match analyse_chain(q) {
        Ok(a) => a,
        Err(e) => {
            // keep what can still be computed for the report
            if let Ok(pi) = markov_hamilton::stationary_distribution(q) {
                report.stationary = Some(StationaryInfo {
                    pi: pi.pi().iter().copied().collect(),
                    residual: pi.residual(),
                });
            }
            report.status = status_of(&e);
            report.error = Some(error_info(&e));
            return report;
        }
    };
    let qn = q.norm_inf();
    let pi = &analysis.stationary;
    let d = &analysis.decomposition;
    let flux = d.flux();
    let spec = &analysis.flux_spectrum;
    let dec = d.residuals(q);
    let sres = spec.residuals(flux);
    let dynamics = &analysis.dynamics;

    let mut checks = vec![Check::at_most("stationary_residual", pi.residual(), 1e-10 * qn)];
    let dtol = 1e-10 * dec.scale;
    checks.extend([
        Check::at_most("symmetry", dec.symmetry, dtol),
        Check::at_most("skewness", dec.skewness, dtol),
        Check::at_most("reconstruction", dec.reconstruction, dtol),
        Check::at_most("kernel_symmetric", dec.kernel_symmetric, dtol),
        Check::at_most("kernel_skew", dec.kernel_skew, dtol),
        Check::at_least("psd_margin", dec.min_dissipation_eigenvalue, -1e-9 * dec.scale),
        Check::at_most("flux_formula", dec.flux_formula, dtol),
        Check::at_most("frame_consistency", dec.frame_consistency, dtol),
    ]);
    let stol = 1e-9 * sres.scale;
    checks.extend([
        Check::at_most("canonical_form", sres.canonical, stol),
        Check::at_most("basis_orthogonality", sres.orthogonality, 1e-10),
        Check::at_most("svd_reconstruction", sres.svd_reconstruction, stol),
        Check::at_most("svd_orthogonality", sres.svd_orthogonality, 1e-10),
        Check::at_most("svd_pairing", sres.pairing, 1e-9),
        Check::at_most("block_product", sres.block_product, stol),
        Check::at_most("singular_vs_eigen", sres.singular_vs_eigen, stol),
        Check::at_most("round_trip", sres.round_trip, stol),
        Check::at_most("trace_identity", analysis.entropy.discrepancy, 1e-9),
        Check::at_least("entropy_production", analysis.entropy.ep, 0.0),
    ]);

    let n = q.n();
    let mut probe = DVector::zeros(n);
    probe[0] = 1.0;
    let h = dynamics.hamiltonian(&probe);
    let trace_form = dynamics.representation().heisenberg(&probe);
    // harmonic diagnostic from an exact skew flow started off the ones vector
    let mut u0 = DVector::from_element(n, 1.0);
    u0[0] += 1.0;
    let harmonic = dynamics
        .flow(GeneratorKind::Skew, &u0, 10.0, 0.5, Scheme::Expm)
        .and_then(|traj| dynamics.conservation_report(&traj, &[]))
        .map(|c| c.harmonic);
    let harmonic = match harmonic {
        Ok(h) => h,
        Err(e) => {
            let e = Error::from(e);
            report.status = status_of(&e);
            report.error = Some(error_info(&e));
            return report;
        }
    };
    let diagnostics = Diagnostics {
        equilibrium: norm_inf(flux) <= 1e-10 * qn,
        harmonic,
        heisenberg: HeisenbergCheck {
            probe_state: 1,
            hamiltonian: h,
            trace_form,
            ratio: (h > 1e-300).then(|| trace_form / h),
        },
    };

    let mut entropy = analysis.entropy.clone();
    if !verbose {
        entropy.per_edge.clear();
    }
    let matrices = verbose.then(|| Matrices {
        basis: rows(spec.basis()),
        u: rows(&spec.svd().u),
        sigma: spec.svd().sigma.iter().copied().collect(),
        v: rows(&spec.svd().v),
    });

    report.status = if checks.iter().all(|c| c.pass) {
        Status::Ok
    } else {
        Status::Violation
    };
    report.stationary = Some(StationaryInfo {
        pi: pi.pi().iter().copied().collect(),
        residual: pi.residual(),
    });
    report.decomposition = Some(dec);
    report.spectrum = Some(SpectrumInfo {
        lambdas: spec.lambdas().to_vec(),
        zero_multiplicity: spec.zero_dim(),
        dynamics_lambdas: dynamics.spectrum().lambdas().to_vec(),
        residuals: sres,
        matrices,
    });
    report.entropy = Some(entropy);
    report.diagnostics = Some(diagnostics);
    report.checks = checks;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use markov_hamilton::markov::random_chain;
    use markov_hamilton::ChainKind;

    #[test]
    fn three_cycle_report() {
        let q = random_chain(3, 0, ChainKind::Cycle { forward: 2.0, backward: 1.0 }, 1.0).unwrap();
        let r = analyze("mem", b"x", Convention::Column, &q, false);
        assert_eq!(r.status, Status::Ok);
        let e = r.entropy.as_ref().unwrap();
        assert!((e.ep - 2f64.ln()).abs() < 1e-12);
        assert!(e.per_edge.is_empty());
        let s = r.spectrum.as_ref().unwrap();
        assert!((s.lambdas[0] - 3f64.sqrt()).abs() < 1e-12);
        let h = &r.diagnostics.as_ref().unwrap().heisenberg;
        assert!((h.ratio.unwrap() - 2.0).abs() < 1e-12);
        assert!(r.diagnostics.as_ref().unwrap().harmonic.passes);
        assert!(s.matrices.is_none());
        let verbose = analyze("mem", b"x", Convention::Column, &q, true);
        assert!(verbose.spectrum.unwrap().matrices.is_some());
        assert_eq!(verbose.entropy.unwrap().per_edge.len(), 3);
    }

    #[test]
    fn reversible_report_is_equilibrium() {
        let q = random_chain(5, 1, ChainKind::Reversible, 1.0).unwrap();
        let r = analyze("mem", b"x", Convention::Column, &q, false);
        assert_eq!(r.status, Status::Ok, "{:?}", r.checks);
        assert!(r.diagnostics.unwrap().equilibrium);
        assert!(r.entropy.unwrap().ep <= 1e-18);
    }

    #[test]
    fn hash_is_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
