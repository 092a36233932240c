use std::ffi::{CStr, CString};
use std::ptr;

use mtrbench_ffi::*;

const SMALL: &str = r#"{
    "mc": { "particles_per_batch": 150, "n_batches": 8, "n_inactive": 3, "seed": 5 },
    "jaya": { "pop_size": 4, "max_evals": 12 },
    "ppo_es": { "es_pop": 4, "steps_per_update": 3, "generations": 2, "hidden_layers": [8] }
}"#;

fn last_error() -> String {
    let p = mtrb_last_error_message();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn evaluator(json: &str) -> *mut MtrbEvaluator {
    let cfg = CString::new(json).unwrap();
    let mut ev = ptr::null_mut();
    assert_eq!(unsafe { mtrb_evaluator_new(cfg.as_ptr(), &mut ev) }, MtrbStatus::Ok);
    assert!(!ev.is_null());
    ev
}

#[test]
fn evaluate_single_and_batch_agree_with_indices() {
    let ev = evaluator(SMALL);
    let mut one = MtrbEvaluation::default();
    assert_eq!(unsafe { mtrb_evaluate(ev, 10.0, 0.001, &mut one) }, MtrbStatus::Ok);
    assert!(mtrb_last_error_message().is_null());
    assert_eq!(one.eval_index, 0);
    assert_eq!((one.u_density, one.w_density), (10.0, 0.001));
    assert!(one.k > 0.0 && one.k_std > 0.0 && one.fast_flux > 0.0);
    assert_eq!(one.fitness, mtrb_fitness(one.k, one.fast_flux));

    let u = [2.0, 10.0, 18.0];
    let w = [20.0, 0.001, 1.0];
    let mut out = [MtrbEvaluation::default(); 3];
    assert_eq!(
        unsafe { mtrb_evaluate_batch(ev, u.as_ptr(), w.as_ptr(), 3, out.as_mut_ptr()) },
        MtrbStatus::Ok
    );
    let idx: Vec<u64> = out.iter().map(|e| e.eval_index).collect();
    assert_eq!(idx, [1, 2, 3]);
    assert_eq!(out[1].u_density, 10.0);

    let mut count = 0;
    assert_eq!(unsafe { mtrb_evaluator_count(ev, &mut count) }, MtrbStatus::Ok);
    assert_eq!(count, 4);
    unsafe { mtrb_evaluator_free(ev) };
}

#[test]
fn same_config_gives_same_physics() {
    let (a, b) = (evaluator(SMALL), evaluator(SMALL));
    let (mut x, mut y) = (MtrbEvaluation::default(), MtrbEvaluation::default());
    unsafe {
        assert_eq!(mtrb_evaluate(a, 7.5, 3.0, &mut x), MtrbStatus::Ok);
        assert_eq!(mtrb_evaluate(b, 7.5, 3.0, &mut y), MtrbStatus::Ok);
        mtrb_evaluator_free(a);
        mtrb_evaluator_free(b);
    }
    assert_eq!((x.k, x.k_std, x.fast_flux, x.fitness), (y.k, y.k_std, y.fast_flux, y.fitness));
}

#[test]
fn error_codes_and_messages() {
    let mut ev = ptr::null_mut();
    let bad = CString::new("{ not json").unwrap();
    assert_eq!(unsafe { mtrb_evaluator_new(bad.as_ptr(), &mut ev) }, MtrbStatus::Parse);
    assert!(ev.is_null());
    assert!(last_error().contains("invalid JSON"));

    let unknown = CString::new(r#"{"nope": 1}"#).unwrap();
    assert_eq!(unsafe { mtrb_evaluator_new(unknown.as_ptr(), &mut ev) }, MtrbStatus::Parse);

    let missing = CString::new(r#"{"xs_library": "/no/such/lib.json"}"#).unwrap();
    assert_eq!(
        unsafe { mtrb_evaluator_new(missing.as_ptr(), &mut ev) },
        MtrbStatus::InvalidArgument
    );
    assert!(last_error().contains("/no/such/lib.json"));

    assert_eq!(unsafe { mtrb_evaluator_new(ptr::null(), ptr::null_mut()) }, MtrbStatus::NullPointer);

    let ev = evaluator(SMALL);
    let mut out = MtrbEvaluation::default();
    assert_eq!(unsafe { mtrb_evaluate(ev, 30.0, 1.0, &mut out) }, MtrbStatus::OutOfBounds);
    assert!(last_error().contains("outside bounds"));
    assert_eq!(unsafe { mtrb_evaluate(ptr::null(), 1.0, 1.0, &mut out) }, MtrbStatus::NullPointer);
    assert_eq!(unsafe { mtrb_evaluate(ev, 1.0, 1.0, ptr::null_mut()) }, MtrbStatus::NullPointer);

    let u = [1.0, 1.0];
    let w = [1.0, -2.0];
    let mut two = [MtrbEvaluation::default(); 2];
    assert_eq!(
        unsafe { mtrb_evaluate_batch(ev, u.as_ptr(), w.as_ptr(), 2, two.as_mut_ptr()) },
        MtrbStatus::OutOfBounds
    );
    assert!(last_error().starts_with("point 1:"));
    assert_eq!(
        unsafe { mtrb_evaluate_batch(ev, ptr::null(), ptr::null(), 0, ptr::null_mut()) },
        MtrbStatus::Ok
    );
    assert!(mtrb_last_error_message().is_null());
    unsafe { mtrb_evaluator_free(ev) };
    unsafe { mtrb_evaluator_free(ptr::null_mut()) };
}

#[test]
fn optimize_and_walk_history() {
    let cfg = CString::new(SMALL).unwrap();
    let algo = CString::new("jaya").unwrap();
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { mtrb_optimize(cfg.as_ptr(), algo.as_ptr(), 3, &mut run) }, MtrbStatus::Ok);
    let mut n = 0;
    assert_eq!(unsafe { mtrb_run_len(run, &mut n) }, MtrbStatus::Ok);
    assert_eq!(n, 12);
    assert!(unsafe { mtrb_run_failure(run) }.is_null());

    let mut best = MtrbHistoryEntry::default();
    assert_eq!(unsafe { mtrb_run_best(run, &mut best) }, MtrbStatus::Ok);
    let mut min = f64::INFINITY;
    for i in 0..n {
        let mut h = MtrbHistoryEntry::default();
        assert_eq!(unsafe { mtrb_run_get(run, i, &mut h) }, MtrbStatus::Ok);
        assert_eq!(h.eval.eval_index, i as u64);
        min = min.min(h.eval.fitness);
    }
    assert_eq!(best.eval.fitness, min);

    let mut h = MtrbHistoryEntry::default();
    assert_eq!(unsafe { mtrb_run_get(run, n, &mut h) }, MtrbStatus::OutOfBounds);

    // Same seed, same history.
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { mtrb_optimize(cfg.as_ptr(), algo.as_ptr(), 3, &mut again) }, MtrbStatus::Ok);
    let mut b2 = MtrbHistoryEntry::default();
    assert_eq!(unsafe { mtrb_run_best(again, &mut b2) }, MtrbStatus::Ok);
    assert_eq!(best.eval.fitness, b2.eval.fitness);
    unsafe {
        mtrb_run_free(run);
        mtrb_run_free(again);
    }
}

#[test]
fn ppo_es_run_and_bad_algorithm() {
    let cfg = CString::new(SMALL).unwrap();
    let mut run = ptr::null_mut();
    let ppo = CString::new("ppo-es").unwrap();
    assert_eq!(unsafe { mtrb_optimize(cfg.as_ptr(), ppo.as_ptr(), 1, &mut run) }, MtrbStatus::Ok);
    let mut n = 0;
    assert_eq!(unsafe { mtrb_run_len(run, &mut n) }, MtrbStatus::Ok);
    assert_eq!(n, 2 * 4 * 3);
    let mut last = MtrbHistoryEntry::default();
    assert_eq!(unsafe { mtrb_run_get(run, n - 1, &mut last) }, MtrbStatus::Ok);
    assert_eq!(last.generation, 1);
    unsafe { mtrb_run_free(run) };

    let sa = CString::new("sa").unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(
        unsafe { mtrb_optimize(cfg.as_ptr(), sa.as_ptr(), 1, &mut none) },
        MtrbStatus::InvalidArgument
    );
    assert!(none.is_null());
    assert!(last_error().contains("unknown algorithm"));
    assert_eq!(unsafe { mtrb_optimize(cfg.as_ptr(), ptr::null(), 1, &mut none) }, MtrbStatus::NullPointer);
}

#[test]
fn version_and_fitness() {
    let v = unsafe { CStr::from_ptr(mtrb_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    assert!((mtrb_fitness(0.990, 0.4966) - 0.674863).abs() < 1e-6);
}
