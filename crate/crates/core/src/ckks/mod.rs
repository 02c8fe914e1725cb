//! Leveled approximate homomorphic encryption over `Z[X]/(X^N + 1)` with
//! power-of-two moduli.

mod arith;
pub mod cipher;
pub mod context;
pub mod encoding;
pub mod evaluator;
pub mod keys;
pub mod params;
pub mod ring;
pub mod security;
pub mod serialize;
pub mod stats;

pub use cipher::{Ciphertext, Depth, Plaintext};
pub use context::CkksContext;
pub use evaluator::Evaluator;
pub use keys::{EvaluationKey, KeySet, KeySwitchKey, PublicKey, RotationDirection, RotationKeySet, SecretKey};
pub use params::CkksParams;
pub use stats::{OpCounts, OpStats};
