//! Fitness function and the evaluation pipeline: parameters -> model update
//! -> transport run -> fitness.

use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_unit_cell, update_densities, Bounds, GeometryConfig, ParamPoint, SlabModel};
use crate::rng;
use crate::transport::{run_keig, McConfig};
use crate::xslib::XsLibrary;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    /// Added to |k - 1| in the numerator.
    pub criticality_constant: f64,
    /// Added to the fast flux in the denominator.
    pub flux_constant: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            criticality_constant: 1.0,
            flux_constant: 1.0,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.criticality_constant > 0.0 && self.flux_constant > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "objective constants must be > 0, got a = {}, b = {}",
                self.criticality_constant, self.flux_constant
            )));
        }
        Ok(())
    }
}

/// `(|k - 1| + a) / (phi + b)`. Smaller is better.
pub fn fitness(k: f64, phi: f64, cfg: &ObjectiveConfig) -> f64 {
    ((k - 1.0).abs() + cfg.criticality_constant) / (phi + cfg.flux_constant)
}

/// One objective evaluation. Serialized as a flat JSONL record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "EvaluationRecord", into = "EvaluationRecord")]
pub struct Evaluation {
    pub params: ParamPoint,
    pub k: f64,
    pub k_std: f64,
    pub fast_flux: f64,
    pub fast_flux_std: f64,
    pub fitness: f64,
    pub eval_index: u64,
    pub wall_time_ms: f64,
}

#[derive(Serialize, Deserialize)]
struct EvaluationRecord {
    eval: u64,
    u: f64,
    w: f64,
    k: f64,
    k_std: f64,
    flux: f64,
    flux_std: f64,
    fitness: f64,
    /// Absent in history files, which keep timings separately.
    #[serde(default)]
    ms: f64,
}

impl From<EvaluationRecord> for Evaluation {
    fn from(r: EvaluationRecord) -> Self {
        Self {
            params: ParamPoint::new(r.u, r.w),
            k: r.k,
            k_std: r.k_std,
            fast_flux: r.flux,
            fast_flux_std: r.flux_std,
            fitness: r.fitness,
            eval_index: r.eval,
            wall_time_ms: r.ms,
        }
    }
}

impl From<Evaluation> for EvaluationRecord {
    fn from(e: Evaluation) -> Self {
        Self {
            eval: e.eval_index,
            u: e.params.u_density,
            w: e.params.w_density,
            k: e.k,
            k_std: e.k_std,
            flux: e.fast_flux,
            flux_std: e.fast_flux_std,
            fitness: e.fitness,
            ms: e.wall_time_ms,
        }
    }
}

impl Evaluation {
    /// True if the physics fields (everything but the wall time) match exactly.
    pub fn same_physics(&self, other: &Evaluation) -> bool {
        self.params == other.params
            && self.k.to_bits() == other.k.to_bits()
            && self.k_std.to_bits() == other.k_std.to_bits()
            && self.fast_flux.to_bits() == other.fast_flux.to_bits()
            && self.fast_flux_std.to_bits() == other.fast_flux_std.to_bits()
            && self.fitness.to_bits() == other.fitness.to_bits()
            && self.eval_index == other.eval_index
    }
}

/// Transport seed of evaluation `eval_index` in a run seeded with `mc.seed`.
pub fn eval_seed(mc: &McConfig, eval_index: u64) -> u64 {
    rng::mix(&[mc.seed, eval_index])
}

/// Updates `model` in place to `params`, runs the transport and scores it.
pub fn evaluate(
    params: ParamPoint,
    model: &mut SlabModel,
    lib: &XsLibrary,
    mc: &McConfig,
    obj: &ObjectiveConfig,
    eval_index: u64,
) -> Result<Evaluation> {
    let start = Instant::now();
    update_densities(model, params, lib)?;
    let mut e = score(params, model, mc, obj, eval_index)?;
    e.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(e)
}

/// Runs the transport on a model already set to `params` and scores it.
pub fn score(
    params: ParamPoint,
    model: &SlabModel,
    mc: &McConfig,
    obj: &ObjectiveConfig,
    eval_index: u64,
) -> Result<Evaluation> {
    let start = Instant::now();
    let run = run_keig(model, &mc.with_seed(eval_seed(mc, eval_index)))?;
    Ok(Evaluation {
        params,
        k: run.k_mean,
        k_std: run.k_std,
        fast_flux: run.fast_flux,
        fast_flux_std: run.fast_flux_std,
        fitness: fitness(run.k_mean, run.fast_flux, obj),
        eval_index,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Anything that can score a batch of parameter points. Results come back in
/// input order; the implementation may evaluate them concurrently.
pub trait FitnessOracle: Sync {
    fn bounds(&self) -> Bounds;
    fn evaluate_batch(&self, points: &[ParamPoint]) -> Vec<Result<Evaluation>>;
}

/// The benchmark objective bound to a library, geometry and transport settings.
///
/// Evaluation indices are handed out sequentially, so a fixed sequence of
/// batches always maps to the same seeds. Every evaluation is also appended to
/// an in-memory log.
pub struct Evaluator {
    lib: Arc<XsLibrary>,
    template: SlabModel,
    bounds: Bounds,
    mc: McConfig,
    obj: ObjectiveConfig,
    state: Mutex<EvalState>,
}

#[derive(Default)]
struct EvalState {
    next_index: u64,
    log: Vec<Evaluation>,
}

impl Evaluator {
    pub fn new(
        lib: Arc<XsLibrary>,
        geometry: &GeometryConfig,
        bounds: Bounds,
        mc: McConfig,
        obj: ObjectiveConfig,
    ) -> Result<Self> {
        mc.validate()?;
        obj.validate()?;
        let template = build_unit_cell(geometry, &bounds, bounds.center(), &lib)?;
        Ok(Self {
            lib,
            template,
            bounds,
            mc,
            obj,
            state: Mutex::new(EvalState::default()),
        })
    }

    pub fn mc(&self) -> &McConfig {
        &self.mc
    }

    pub fn objective(&self) -> &ObjectiveConfig {
        &self.obj
    }

    pub fn library(&self) -> &Arc<XsLibrary> {
        &self.lib
    }

    /// Number of evaluation indices handed out so far.
    pub fn evaluations(&self) -> u64 {
        self.state.lock().unwrap().next_index
    }

    /// Successful evaluations in index order.
    pub fn log(&self) -> Vec<Evaluation> {
        self.state.lock().unwrap().log.clone()
    }

    pub fn evaluate_one(&self, params: ParamPoint) -> Result<Evaluation> {
        self.evaluate_batch(&[params]).pop().unwrap()
    }

    fn reserve(&self, n: usize) -> u64 {
        let mut state = self.state.lock().unwrap();
        let first = state.next_index;
        state.next_index += n as u64;
        first
    }
}

impl FitnessOracle for Evaluator {
    fn bounds(&self) -> Bounds {
        self.bounds
    }

    fn evaluate_batch(&self, points: &[ParamPoint]) -> Vec<Result<Evaluation>> {
        let first = self.reserve(points.len());
        let results: Vec<Result<Evaluation>> = points
            .par_iter()
            .enumerate()
            .map_init(
                || self.template.clone(),
                |model, (i, &p)| evaluate(p, model, &self.lib, &self.mc, &self.obj, first + i as u64),
            )
            .collect();
        let mut state = self.state.lock().unwrap();
        state.log.extend(results.iter().filter_map(|r| r.as_ref().ok().cloned()));
        results
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xslib::default_library_path;
    use proptest::prelude::*;

    const UNIT: ObjectiveConfig = ObjectiveConfig {
        criticality_constant: 1.0,
        flux_constant: 1.0,
    };

    #[test]
    fn reference_rows() {
        assert!((fitness(1.000021, 0.00141, &UNIT) - 0.998613).abs() < 1e-6);
        assert!((fitness(0.990, 0.4966, &UNIT) - 0.674863).abs() < 1e-6);
        assert_eq!(fitness(1.0, 0.0, &UNIT), 1.0);
    }

    #[test]
    fn constants_must_be_positive() {
        let bad = ObjectiveConfig {
            criticality_constant: 0.0,
            ..UNIT
        };
        assert!(bad.validate().is_err());
        assert!(UNIT.validate().is_ok());
    }

    #[test]
    fn jsonl_schema() {
        let e = Evaluation {
            params: ParamPoint::new(3.0, 4.5),
            k: 1.01,
            k_std: 0.002,
            fast_flux: 0.3,
            fast_flux_std: 0.01,
            fitness: fitness(1.01, 0.3, &UNIT),
            eval_index: 7,
            wall_time_ms: 12.5,
        };
        let v: serde_json::Value = serde_json::to_value(&e).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["eval", "fitness", "flux", "flux_std", "k", "k_std", "ms", "u", "w"]);
        let back: Evaluation = serde_json::from_value(v).unwrap();
        assert_eq!(back, e);
    }

    fn evaluator(mc: McConfig) -> Evaluator {
        let lib = Arc::new(XsLibrary::from_file(&default_library_path()).unwrap());
        Evaluator::new(lib, &GeometryConfig::default(), Bounds::default(), mc, UNIT).unwrap()
    }

    fn small_mc() -> McConfig {
        McConfig {
            particles_per_batch: 300,
            n_batches: 12,
            n_inactive: 4,
            seed: 5,
        }
    }

    #[test]
    fn same_index_same_result() {
        let ev = evaluator(small_mc());
        let lib = ev.library().clone();
        let p = ParamPoint::new(8.0, 3.0);
        let mut m1 = build_unit_cell(&GeometryConfig::default(), &Bounds::default(), p, &lib).unwrap();
        let mut m2 = build_unit_cell(
            &GeometryConfig::default(),
            &Bounds::default(),
            ParamPoint::new(1.0, 20.0),
            &lib,
        )
        .unwrap();
        let a = evaluate(p, &mut m1, &lib, &small_mc(), &UNIT, 3).unwrap();
        let b = evaluate(p, &mut m2, &lib, &small_mc(), &UNIT, 3).unwrap();
        assert!(a.same_physics(&b));
        assert_eq!(a.fitness, fitness(a.k, a.fast_flux, &UNIT));
        let c = evaluate(p, &mut m2, &lib, &small_mc(), &UNIT, 4).unwrap();
        assert_ne!(a.k, c.k);
    }

    #[test]
    fn batch_matches_sequential_and_logs_in_order() {
        let points = [
            ParamPoint::new(0.5, 10.0),
            ParamPoint::new(12.0, 0.001),
            ParamPoint::new(18.0, 24.0),
        ];
        let batched = evaluator(small_mc());
        let res: Vec<_> = batched.evaluate_batch(&points).into_iter().map(|r| r.unwrap()).collect();
        let single = evaluator(small_mc());
        for (i, p) in points.iter().enumerate() {
            let e = single.evaluate_one(*p).unwrap();
            assert!(e.same_physics(&res[i]));
            assert_eq!(e.eval_index, i as u64);
        }
        let log = batched.log();
        assert_eq!(log.len(), 3);
        assert!(log.iter().zip(&res).all(|(a, b)| a.same_physics(b)));
        assert_eq!(batched.evaluations(), 3);
    }

    #[test]
    fn out_of_bounds_point_is_an_error() {
        let ev = evaluator(small_mc());
        assert!(matches!(
            ev.evaluate_one(ParamPoint::new(30.0, 1.0)),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn dilute_fuel_in_heavy_water_scores_worse_than_a_critical_point() {
        let ev = evaluator(McConfig {
            particles_per_batch: 1000,
            n_batches: 30,
            n_inactive: 8,
            seed: 2,
        });
        let dilute = ev.evaluate_one(ParamPoint::new(0.1, 25.0)).unwrap();
        assert!(dilute.k < 0.2, "k = {}", dilute.k);
        let critical = ev.evaluate_one(ParamPoint::new(14.0, 12.0)).unwrap();
        assert!((critical.k - 1.0).abs() < 0.1, "k = {}", critical.k);
        assert!(dilute.fitness > critical.fitness);
    }

    proptest! {
        #[test]
        fn decreasing_in_flux(k in 0.0..2.0f64, phi in 0.0..50.0f64, d in 1e-6..10.0f64) {
            prop_assert!(fitness(k, phi + d, &UNIT) < fitness(k, phi, &UNIT));
        }

        #[test]
        fn increasing_in_deviation(dev in 0.0..1.0f64, d in 1e-6..1.0f64, phi in 0.0..50.0f64) {
            prop_assert!(fitness(1.0 + dev + d, phi, &UNIT) > fitness(1.0 + dev, phi, &UNIT));
            prop_assert!(fitness(1.0 - dev - d, phi, &UNIT) > fitness(1.0 - dev, phi, &UNIT));
        }

        #[test]
        fn symmetric_about_one(k in 0.0..2.0f64, phi in 0.0..50.0f64) {
            let (a, b) = (fitness(k, phi, &UNIT), fitness(2.0 - k, phi, &UNIT));
            prop_assert!((a - b).abs() <= 1e-15 * a);
        }
    }
}
