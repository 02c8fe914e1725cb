//! Static parameter-sanity table. No lattice estimator is embedded; the
//! entries are fixed classifications for known `(log_n, log_l)` pairs.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SecurityLevel {
    Accepted,
    Warn(String),
    Unknown,
}

/// Largest `log_l` (fresh modulus bits, evaluation key at twice that)
/// treated as acceptable for each ring degree, for a sparse ternary secret.
const LIMITS: &[(u32, u32)] = &[
    (10, 27),
    (11, 54),
    (12, 109),
    (13, 218),
    (14, 438),
    (15, 881),
    (16, 1761),
    (17, 3524),
];

pub fn classify(log_n: u32, log_l: u32) -> SecurityLevel {
    if (log_n, log_l) == (17, 2440) {
        return SecurityLevel::Warn("about 93-bit with a sparse secret".into());
    }
    match LIMITS.iter().find(|(n, _)| *n == log_n) {
        Some(&(_, max)) if log_l <= max / 2 => SecurityLevel::Accepted,
        Some(_) => SecurityLevel::Warn(format!(
            "log_l = {log_l} is too large for log_n = {log_n}; toy security only"
        )),
        None => SecurityLevel::Unknown,
    }
}
