//! Operation counters shared by every evaluator clone.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Default)]
pub struct OpStats {
    ct_mults: AtomicU64,
    pt_mults: AtomicU64,
    const_mults: AtomicU64,
    rescales_log_p: AtomicU64,
    rescales_log_p_small: AtomicU64,
    key_switches: AtomicU64,
    conjugations: AtomicU64,
    /// Amounts passed to `rotate` (positive = right, negative = left).
    requested: Mutex<BTreeMap<i64, u64>>,
}

/// Plain snapshot of [`OpStats`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub ct_mults: u64,
    pub pt_mults: u64,
    pub const_mults: u64,
    pub rescales_log_p: u64,
    pub rescales_log_p_small: u64,
    pub key_switches: u64,
    pub conjugations: u64,
    pub rotations: u64,
    pub rotation_amounts: BTreeMap<i64, u64>,
}

impl OpCounts {
    pub fn all_rotations_power_of_two(&self) -> bool {
        self.rotation_amounts
            .keys()
            .all(|a| a.unsigned_abs().is_power_of_two())
    }

    /// Counts accrued since `earlier`.
    pub fn since(&self, earlier: &OpCounts) -> OpCounts {
        let mut amounts = self.rotation_amounts.clone();
        for (k, v) in &earlier.rotation_amounts {
            if let Some(x) = amounts.get_mut(k) {
                *x -= v;
            }
        }
        amounts.retain(|_, v| *v > 0);
        OpCounts {
            ct_mults: self.ct_mults - earlier.ct_mults,
            pt_mults: self.pt_mults - earlier.pt_mults,
            const_mults: self.const_mults - earlier.const_mults,
            rescales_log_p: self.rescales_log_p - earlier.rescales_log_p,
            rescales_log_p_small: self.rescales_log_p_small - earlier.rescales_log_p_small,
            key_switches: self.key_switches - earlier.key_switches,
            conjugations: self.conjugations - earlier.conjugations,
            rotations: self.rotations - earlier.rotations,
            rotation_amounts: amounts,
        }
    }
}

impl OpStats {
    pub(crate) fn ct_mult(&self) {
        self.ct_mults.fetch_add(1, Ordering::Relaxed);
    }
    pub(crate) fn pt_mult(&self) {
        self.pt_mults.fetch_add(1, Ordering::Relaxed);
    }
    pub(crate) fn const_mult(&self) {
        self.const_mults.fetch_add(1, Ordering::Relaxed);
    }
    pub(crate) fn rescale(&self, is_small: bool) {
        if is_small {
            self.rescales_log_p_small.fetch_add(1, Ordering::Relaxed);
        } else {
            self.rescales_log_p.fetch_add(1, Ordering::Relaxed);
        }
    }
    pub(crate) fn key_switch(&self) {
        self.key_switches.fetch_add(1, Ordering::Relaxed);
    }
    pub(crate) fn conjugation(&self) {
        self.conjugations.fetch_add(1, Ordering::Relaxed);
    }
    pub(crate) fn rotation(&self, signed_amount: i64) {
        *self.requested.lock().unwrap().entry(signed_amount).or_default() += 1;
    }

    pub fn snapshot(&self) -> OpCounts {
        let amounts = self.requested.lock().unwrap().clone();
        OpCounts {
            ct_mults: self.ct_mults.load(Ordering::Relaxed),
            pt_mults: self.pt_mults.load(Ordering::Relaxed),
            const_mults: self.const_mults.load(Ordering::Relaxed),
            rescales_log_p: self.rescales_log_p.load(Ordering::Relaxed),
            rescales_log_p_small: self.rescales_log_p_small.load(Ordering::Relaxed),
            key_switches: self.key_switches.load(Ordering::Relaxed),
            conjugations: self.conjugations.load(Ordering::Relaxed),
            rotations: amounts.values().sum(),
            rotation_amounts: amounts,
        }
    }

    /// Folds counts gathered elsewhere (e.g. another worker) into this sink.
    pub fn merge(&self, other: &OpCounts) {
        self.ct_mults.fetch_add(other.ct_mults, Ordering::Relaxed);
        self.pt_mults.fetch_add(other.pt_mults, Ordering::Relaxed);
        self.const_mults.fetch_add(other.const_mults, Ordering::Relaxed);
        self.rescales_log_p.fetch_add(other.rescales_log_p, Ordering::Relaxed);
        self.rescales_log_p_small
            .fetch_add(other.rescales_log_p_small, Ordering::Relaxed);
        self.key_switches.fetch_add(other.key_switches, Ordering::Relaxed);
        self.conjugations.fetch_add(other.conjugations, Ordering::Relaxed);
        let mut req = self.requested.lock().unwrap();
        for (k, v) in &other.rotation_amounts {
            *req.entry(*k).or_default() += v;
        }
    }
}
