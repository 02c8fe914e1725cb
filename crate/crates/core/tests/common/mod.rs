#![allow(dead_code)]

use std::sync::Arc;

use hegwas::ckks::{CkksContext, CkksParams, Evaluator, KeySet};
use hegwas::matrix::MatrixEvaluator;

pub struct Setup {
    pub ctx: Arc<CkksContext>,
    pub keys: KeySet,
    pub mev: MatrixEvaluator,
}

pub fn setup(log_n: u32, log_l: u32) -> Setup {
    setup_with(CkksParams::new(log_n, log_l, 45, 30).unwrap(), 11)
}

pub fn setup_with(params: CkksParams, seed: u64) -> Setup {
    let ctx = CkksContext::new(params).unwrap();
    let keys = ctx.keygen(seed).unwrap();
    let ev = Evaluator::new(ctx.clone(), Arc::new(keys.evaluation.clone()), Arc::new(keys.rotation.clone()));
    Setup {
        ctx,
        keys,
        mev: MatrixEvaluator::new(ev),
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
