//! The `simulate` command: amplitude-frame flows exported as CSV.

use std::io::Write;

use anyhow::{bail, Context};
use clap::ValueEnum;
use markov_hamilton::{
    stationary_distribution, u_frame, Dynamics, Error, GeneratorKind, GeneratorMatrix, ProbabilityVector, Scheme,
};
use nalgebra::DVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Frame {
    /// Amplitudes `u = Π^{-1/2} p`.
    U,
    /// Probabilities.
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FlowGenerator {
    /// Dissipative part `S`.
    #[value(name = "S")]
    S,
    /// Conservative part `A`.
    #[value(name = "A")]
    A,
    /// Full generator `S + A`.
    #[value(name = "SA")]
    Sa,
}

impl From<FlowGenerator> for GeneratorKind {
    fn from(g: FlowGenerator) -> Self {
        match g {
            FlowGenerator::S => GeneratorKind::Symmetric,
            FlowGenerator::A => GeneratorKind::Skew,
            FlowGenerator::Sa => GeneratorKind::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Rk4,
    Expm,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Rk4 => Scheme::Rk4,
            SchemeArg::Expm => Scheme::Expm,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub p0: Option<Vec<f64>>,
    pub u0: Option<Vec<f64>>,
    pub t: f64,
    pub h: f64,
    pub frame: Frame,
    pub generator: FlowGenerator,
    pub scheme: SchemeArg,
}

/// Runs the flow and writes the CSV. Errors carry the core error when the
/// failure came from the library.
pub fn run<W: Write>(q: &GeneratorMatrix, opts: &SimulateOptions, out: W) -> anyhow::Result<()> {
    if opts.u0.is_some() && (opts.frame != Frame::U || opts.generator != FlowGenerator::A) {
        bail!("--u0 requires --frame u and --generator A");
    }
    if opts.u0.is_some() && opts.p0.is_some() {
        bail!("--p0 and --u0 are mutually exclusive");
    }
    let pi = stationary_distribution(q).map_err(Error::from)?;
    let d = u_frame(q, &pi).map_err(Error::from)?;
    let dynamics = Dynamics::from_decomposition(&d).map_err(Error::from)?;
    let n = q.n();
    let u0 = match (&opts.u0, &opts.p0) {
        (Some(u), _) => {
            if u.len() != n {
                bail!("--u0 has {} entries, the chain has {n} states", u.len());
            }
            DVector::from_column_slice(u)
        }
        (None, p) => {
            let p0 = match p {
                Some(p) => {
                    if p.len() != n {
                        bail!("--p0 has {} entries, the chain has {n} states", p.len());
                    }
                    ProbabilityVector::new(DVector::from_column_slice(p)).map_err(Error::from)?
                }
                None => ProbabilityVector::point_mass(n, 0).map_err(Error::from)?,
            };
            d.frame().to_u(p0.as_vector()).map_err(Error::from)?
        }
    };
    let traj = dynamics
        .flow(opts.generator.into(), &u0, opts.t, opts.h, opts.scheme.into())
        .map_err(Error::from)?;
    let frame = (opts.frame == Frame::P).then(|| d.frame());
    traj.write_csv(out, frame).context("writing trajectory")?;
    Ok(())
}
