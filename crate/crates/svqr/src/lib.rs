//! # svqr
//!
//! Kernel quantile regression built on support-vector machinery. Three
//! model families share one dual solver:
//!
//! * **nu-SVQR** — trades the width of an asymmetric insensitive tube off
//!   automatically via a budget parameter `nu`, which upper-bounds the
//!   fraction of points outside the tube and lower-bounds the fraction of
//!   support vectors.
//! * **eps-SVQR** — fixes the tube width `eps` up front.
//! * **standard SVQR** — plain pinball-loss estimation (`eps = 0`).
//!
//! The duals are box-constrained convex QPs with one equality and (for the
//! nu model) one inequality; [`qp::solve_qp`] solves them with a pairwise
//! decomposition method and returns a KKT-certified solution.
//!
//! ```
//! use svqr::loss::Tau;
//! use svqr::kernel::KernelSpec;
//! use svqr::model::{fit, FitConfig};
//! use svqr::synth::{generate, SynthSpec};
//!
//! let data = generate(&SynthSpec::ad1(80, 0.2, 7)).unwrap();
//! let config = FitConfig::nu_svqr(Tau::new(0.5).unwrap(), 2.0 * 80.0, 0.5, KernelSpec::rbf(2.0));
//! let model = fit(&data, &config).unwrap();
//! let preds = model.predict(&data.x).unwrap();
//! assert_eq!(preds.len(), 80);
//! ```

pub mod data;
pub mod error;
pub mod kernel;
pub mod loss;
pub mod metrics;
pub mod model;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod qp;
pub mod synth;

pub use data::{Dataset, Mat};
pub use error::{Error, Result};
