//! Characteristic foliations, limiting operators and leaf diffusions on
//! surfaces in three-dimensional contact sub-Riemannian manifolds.
//!
//! The crate is layered bottom-up:
//!
//! * [`jet`]: truncated Taylor arithmetic used for every derivative.
//! * [`geometry`]: vector fields, brackets and contact structures.
//! * [`foliation`]: characteristic points, the unit foliation field and leaves.
//! * [`operators`]: the operator family `Delta_eps`, its limit and curvatures.
//! * [`diffusion`]: leaf processes, Monte Carlo and boundary classification.
//! * [`models`]: Heisenberg, SU(2), SL(2,R) and the surfaces on them.
//! * [`expr`]: the expression grammar for user-supplied fields.

pub mod error;
pub mod expr;
pub mod foliation;
pub mod geometry;
pub mod io;
pub mod jet;
pub mod models;
pub mod operators;
pub mod quadrature;
pub mod diffusion;

pub use error::{Error, Result};

/// Caps the global rayon pool at `FOLIATION_THREADS` workers when the
/// variable is set. Must run before any parallel work.
pub fn init_threads_from_env() -> Result<()> {
    let Ok(raw) = std::env::var("FOLIATION_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidParameter(format!("FOLIATION_THREADS={raw}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}
