//! Capacity bounds, posterior Fisher-information recursions and generalized
//! degrees of freedom for the oversampled Wiener phase noise (OWPN) channel
//!
//! ```text
//! Y_n = X_ceil(n/L) exp(j Theta_n) + W_n,   Theta_n = Theta_{n-1} + N_n,
//! N_n ~ N(0, sigma2 / L),   W_n ~ CN(0, 2),
//! ```
//!
//! together with Monte Carlo oracles that check each closed-form ingredient.
//! All rates are in nats unless converted through [`Units`].

pub mod bounds;
pub mod error;
pub mod gdof;
pub mod mioracle;
pub mod model;
pub mod riccati;
pub mod sim;

pub use bounds::{BoundKind, BoundResult, LimitTag};
pub use error::{Error, Result};
pub use gdof::{ExactRegime, GdofFamily, GdofValue, Regime};
pub use mioracle::MiEstimate;
pub use model::{ChannelParams, Coherence, GdofPoint, McEstimate, RateSplit, Units};
