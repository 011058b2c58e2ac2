//! Continuous-time Markov generators in the amplitude frame `u = Π^{-1/2}p`.
//!
//! There the generator splits as `S + A`: `S` symmetric and negative
//! semidefinite (a gradient flow that dissipates), `A` skew-symmetric (a
//! rotation that conserves a Hamiltonian). The skew part is analysed through
//! its paired spectrum, and its size is tied to entropy production through a
//! trace identity.
//!
//! ```
//! use markov_hamilton::{analyse_chain, markov::{random_chain, ChainKind}};
//!
//! let q = random_chain(3, 0, ChainKind::Cycle { forward: 2.0, backward: 1.0 }, 1.0)?;
//! let analysis = analyse_chain(&q)?;
//! assert!((analysis.entropy.ep - 2f64.ln()).abs() < 1e-12);
//! assert!((analysis.entropy.trace_gram - 6.0).abs() < 1e-10);
//! # Ok::<(), markov_hamilton::Error>(())
//! ```

// `!(x <= tol)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decomposition;
pub mod dynamics;
pub mod entropy;
pub mod format;
pub mod linalg;
pub mod markov;
pub mod spectral;

use thiserror::Error;

pub use decomposition::{u_frame, Decomposition, DecompositionError, FrameTransform};
pub use dynamics::{Dynamics, DynamicsError, GeneratorKind, Scheme, Trajectory};
pub use entropy::{EntropyError, EntropyReport};
pub use format::FormatError;
pub use markov::{
    stationary_distribution, ChainKind, Convention, GeneratorMatrix, MarkovError, ProbabilityVector,
    StationaryDistribution,
};
pub use spectral::{SkewSpectrum, SpectralError, SvdGauge};

#[derive(Debug, Error)]
pub enum Error {
    #[error("markov: {0}")]
    Markov(#[from] MarkovError),
    #[error("decomposition: {0}")]
    Decomposition(#[from] DecompositionError),
    #[error("spectral: {0}")]
    Spectral(#[from] SpectralError),
    #[error("dynamics: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("entropy: {0}")]
    Entropy(#[from] EntropyError),
    #[error("format: {0}")]
    Format(#[from] FormatError),
}

impl Error {
    /// The module the error originated in.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Markov(_) => "markov",
            Error::Decomposition(_) => "decomposition",
            Error::Spectral(_) => "spectral",
            Error::Dynamics(_) => "dynamics",
            Error::Entropy(_) => "entropy",
            Error::Format(_) => "format",
        }
    }

    /// Short variant name, e.g. `Reducible`.
    pub fn kind(&self) -> String {
        let debug = match self {
            Error::Markov(e) => format!("{e:?}"),
            Error::Decomposition(e) => format!("{e:?}"),
            Error::Spectral(e) => format!("{e:?}"),
            Error::Dynamics(e) => format!("{e:?}"),
            Error::Entropy(e) => format!("{e:?}"),
            Error::Format(FormatError::Markov(e)) => format!("{e:?}"),
            Error::Format(e) => format!("{e:?}"),
        };
        debug
            .split(|c: char| !c.is_alphanumeric() && c != '_')
            .next()
            .unwrap_or_default()
            .to_string()
    }
}

/// The full pipeline for one generator: stationary distribution, frame
/// split, spectra of `Ã` and `A`, and the entropy report.
#[derive(Debug, Clone)]
pub struct ChainAnalysis {
    pub stationary: StationaryDistribution,
    pub decomposition: Decomposition,
    /// Spectrum of the flux matrix `Ã`.
    pub flux_spectrum: SkewSpectrum,
    pub dynamics: Dynamics,
    pub entropy: EntropyReport,
}

pub fn analyse_chain(q: &GeneratorMatrix) -> Result<ChainAnalysis, Error> {
    let stationary = stationary_distribution(q)?;
    let decomposition = u_frame(q, &stationary)?;
    let flux_spectrum = SkewSpectrum::new(decomposition.flux())?;
    let dynamics = Dynamics::from_decomposition(&decomposition)?;
    let entropy = entropy::trace_identity(q, &stationary, decomposition.flux(), &flux_spectrum)?;
    Ok(ChainAnalysis {
        stationary,
        decomposition,
        flux_spectrum,
        dynamics,
        entropy,
    })
}
