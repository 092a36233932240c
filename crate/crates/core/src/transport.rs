//! Two-group Monte Carlo k-eigenvalue power iteration on a reflective slab.
//!
//! Each history is tracked analogously (free flight, absorption or scatter)
//! with implicit fission production at absorption sites. Every particle of
//! every batch owns an RNG stream keyed by `(seed, batch, index)`; batches are
//! split into fixed-size chunks whose tallies are reduced in chunk order, so
//! results do not depend on the number of worker threads.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RegionTag, SlabModel};
use crate::rng::{self, StreamRng};
use crate::xslib::{MaterialXs, FAST, N_GROUPS, THERMAL};

/// Total cross sections below this are treated as vacuum (ballistic flight).
pub const VOID_SIGMA_T: f64 = 1e-10;

/// Histories exceeding this many flights are reported as degenerate.
const MAX_EVENTS_PER_HISTORY: u64 = 10_000_000;

/// Particles per reduction chunk. Fixed so that the reduction tree is
/// independent of the thread pool.
const CHUNK: usize = 256;

pub const ENTROPY_BINS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub particles_per_batch: usize,
    pub n_batches: usize,
    /// Batches discarded before tallying.
    pub n_inactive: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            particles_per_batch: 2000,
            n_batches: 60,
            n_inactive: 10,
            seed: 1,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_inactive < 1 || self.n_batches <= self.n_inactive {
            return Err(Error::InvalidConfig(format!(
                "need n_batches > n_inactive >= 1, got {} / {}",
                self.n_batches, self.n_inactive
            )));
        }
        if self.particles_per_batch < 100 {
            return Err(Error::InvalidConfig(format!(
                "particles_per_batch must be >= 100, got {}",
                self.particles_per_batch
            )));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn active_batches(&self) -> usize {
        self.n_batches - self.n_inactive
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub x: f64,
    pub mu: f64,
    pub group: usize,
    pub alive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub batch: usize,
    pub k: f64,
    pub entropy: f64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub k_mean: f64,
    pub k_std: f64,
    /// Fast-group track-length flux in the tally region per source neutron.
    pub fast_flux: f64,
    pub fast_flux_std: f64,
    pub thermal_flux: f64,
    pub thermal_flux_std: f64,
    pub batches_used: usize,
    pub batches: Vec<BatchStats>,
}

#[derive(Debug, Clone, Copy)]
struct Site {
    x: f64,
    group: usize,
    layer: usize,
}

/// Per-layer data in the form the tracking loop wants it.
#[derive(Debug, Clone)]
struct Region {
    x_lo: f64,
    x_hi: f64,
    sigma_t: [f64; N_GROUPS],
    p_absorb: [f64; N_GROUPS],
    /// Expected fission neutrons per absorption.
    yield_per_abs: [f64; N_GROUPS],
    /// Probability that a scatter changes the group.
    p_transfer: [f64; N_GROUPS],
    chi_fast: f64,
    tally: bool,
}

impl Region {
    fn new(x_lo: f64, x_hi: f64, xs: &MaterialXs, tally: bool) -> Self {
        let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
        let mut p_absorb = [0.0; N_GROUPS];
        let mut yield_per_abs = [0.0; N_GROUPS];
        let mut p_transfer = [0.0; N_GROUPS];
        for g in 0..N_GROUPS {
            p_absorb[g] = ratio(xs.sigma_a[g], xs.sigma_t[g]);
            yield_per_abs[g] = ratio(xs.nu_sigma_f[g], xs.sigma_a[g]);
            let scatter: f64 = xs.sigma_s[g].iter().sum();
            p_transfer[g] = ratio(xs.sigma_s[g][1 - g], scatter);
        }
        let chi_sum: f64 = xs.chi.iter().sum();
        Self {
            x_lo,
            x_hi,
            sigma_t: xs.sigma_t,
            p_absorb,
            yield_per_abs,
            p_transfer,
            chi_fast: if chi_sum > 0.0 { xs.chi[FAST] / chi_sum } else { 1.0 },
            tally,
        }
    }
}

#[derive(Debug, Default, Clone)]
struct ChunkTally {
    bank: Vec<Site>,
    track: [f64; N_GROUPS],
}

/// Immutable tracking view of a [`SlabModel`].
struct Slab {
    regions: Vec<Region>,
    length: f64,
    tally_width: f64,
    /// Cumulative thickness of initial-source layers, for sampling.
    source_layers: Vec<(usize, f64)>,
    source_total: f64,
}

impl Slab {
    fn new(model: &SlabModel) -> Result<Self> {
        let mut regions = Vec::with_capacity(model.layers.len());
        let mut x = 0.0;
        for (i, layer) in model.layers.iter().enumerate() {
            let hi = x + layer.thickness_cm;
            regions.push(Region::new(x, hi, &layer.xs, i == model.tally_layer));
            x = hi;
        }
        // The last boundary must be exactly the slab length for reflection.
        let length = x;

        for g in 0..N_GROUPS {
            let removal = model.layers.iter().any(|l| {
                l.xs.sigma_a[g] > 0.0 || l.xs.sigma_s[g][1 - g] > 0.0
            });
            if !removal {
                return Err(Error::DegenerateMedium(format!(
                    "no layer absorbs or removes group {} neutrons",
                    g + 1
                )));
            }
        }
        if !model.layers.iter().any(|l| l.xs.sigma_a.iter().any(|&a| a > 0.0)) {
            return Err(Error::DegenerateMedium("no absorbing layer".into()));
        }
        if regions.iter().all(|r| r.sigma_t.iter().all(|&s| s < VOID_SIGMA_T)) {
            return Err(Error::DegenerateMedium("all layers are void".into()));
        }

        let mut source_layers: Vec<(usize, f64)> = Vec::new();
        let mut acc = 0.0;
        let fuel: Vec<usize> = model
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.region == RegionTag::Fuel)
            .map(|(i, _)| i)
            .collect();
        let chosen: Vec<usize> = if fuel.is_empty() {
            (0..model.layers.len()).collect()
        } else {
            fuel
        };
        for i in chosen {
            acc += model.layers[i].thickness_cm;
            source_layers.push((i, acc));
        }

        Ok(Self {
            regions,
            length,
            tally_width: model.tally_width_cm(),
            source_layers,
            source_total: acc,
        })
    }

    fn initial_site(&self, rng: &mut StreamRng) -> Site {
        let target = rng.gen::<f64>() * self.source_total;
        let pos = self
            .source_layers
            .iter()
            .position(|&(_, c)| target < c)
            .unwrap_or(self.source_layers.len() - 1);
        let layer = self.source_layers[pos].0;
        let r = &self.regions[layer];
        let x = r.x_lo + rng.gen::<f64>() * (r.x_hi - r.x_lo);
        Site {
            x: x.min(r.x_hi).max(r.x_lo),
            group: FAST,
            layer,
        }
    }

    /// Follows one history to absorption, appending fission sites to `out`.
    fn track(&self, rng: &mut StreamRng, site: Site, out: &mut ChunkTally) -> Result<()> {
        let last = self.regions.len() - 1;
        let mut x = site.x;
        let mut g = site.group;
        let mut i = site.layer;
        let mut mu: f64 = 2.0 * rng.gen::<f64>() - 1.0;

        for _ in 0..MAX_EVENTS_PER_HISTORY {
            let r = &self.regions[i];
            let st = r.sigma_t[g];
            let d_coll = if st < VOID_SIGMA_T {
                f64::INFINITY
            } else {
                -(1.0 - rng.gen::<f64>()).ln() / st
            };
            let d_bound = if mu > 0.0 {
                (r.x_hi - x) / mu
            } else if mu < 0.0 {
                (r.x_lo - x) / mu
            } else {
                f64::INFINITY
            };

            if d_coll < d_bound {
                if r.tally {
                    out.track[g] += d_coll;
                }
                x += d_coll * mu;
                let xi: f64 = rng.gen();
                if xi < r.p_absorb[g] {
                    let expected = r.yield_per_abs[g];
                    if expected > 0.0 {
                        let n = (expected + rng.gen::<f64>()).floor() as usize;
                        for _ in 0..n {
                            let group = if rng.gen::<f64>() < r.chi_fast { FAST } else { THERMAL };
                            out.bank.push(Site { x, group, layer: i });
                        }
                    }
                    return Ok(());
                }
                if rng.gen::<f64>() < r.p_transfer[g] {
                    g = 1 - g;
                }
                mu = 2.0 * rng.gen::<f64>() - 1.0;
            } else {
                if !d_bound.is_finite() {
                    return Err(Error::DegenerateMedium(format!(
                        "particle streaming parallel to layer {i} in vacuum"
                    )));
                }
                if r.tally {
                    out.track[g] += d_bound;
                }
                if mu > 0.0 {
                    x = r.x_hi;
                    if i == last {
                        mu = -mu;
                    } else {
                        i += 1;
                    }
                } else {
                    x = r.x_lo;
                    if i == 0 {
                        mu = -mu;
                    } else {
                        i -= 1;
                    }
                }
            }
        }
        Err(Error::DegenerateMedium(format!(
            "history exceeded {MAX_EVENTS_PER_HISTORY} events"
        )))
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Draws exactly `n` sites from `bank`: without replacement when the bank is
/// large enough, otherwise the whole bank topped up with replacement.
fn resample(bank: &[Site], n: usize, rng: &mut StreamRng) -> Vec<Site> {
    if bank.len() >= n {
        let mut idx: Vec<usize> = (0..bank.len()).collect();
        for k in 0..n {
            let j = rng.gen_range(k..idx.len());
            idx.swap(k, j);
        }
        idx[..n].iter().map(|&j| bank[j]).collect()
    } else {
        let mut out = bank.to_vec();
        while out.len() < n {
            out.push(bank[rng.gen_range(0..bank.len())]);
        }
        out
    }
}

/// Shannon entropy in bits of positions binned uniformly over `[lo, hi]`.
pub fn shannon_entropy(positions: &[f64], n_bins: usize, lo: f64, hi: f64) -> f64 {
    if positions.is_empty() || n_bins == 0 || !(hi > lo) {
        return 0.0;
    }
    let mut counts = vec![0usize; n_bins];
    for &x in positions {
        let b = (((x - lo) / (hi - lo)) * n_bins as f64).floor();
        counts[(b.max(0.0) as usize).min(n_bins - 1)] += 1;
    }
    let total = positions.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum()
}

pub fn run_keig(model: &SlabModel, cfg: &McConfig) -> Result<RunResult> {
    cfg.validate()?;
    let slab = Slab::new(model)?;
    let n = cfg.particles_per_batch;
    let n_chunks = n.div_ceil(CHUNK);
    let norm = slab.tally_width * n as f64;

    let mut source: Option<Vec<Site>> = None;
    let mut batches = Vec::with_capacity(cfg.n_batches);
    let mut active_k = Vec::with_capacity(cfg.active_batches());
    let mut active_fast = Vec::with_capacity(cfg.active_batches());
    let mut active_thermal = Vec::with_capacity(cfg.active_batches());
    let mut batches_used = 0;

    for batch in 0..cfg.n_batches {
        let active = batch >= cfg.n_inactive;
        let chunks: Vec<ChunkTally> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut tally = ChunkTally::default();
                for idx in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    let mut rng = rng::stream(&[cfg.seed, batch as u64, idx as u64]);
                    let site = match &source {
                        Some(s) => s[idx],
                        None => slab.initial_site(&mut rng),
                    };
                    slab.track(&mut rng, site, &mut tally)?;
                }
                Ok(tally)
            })
            .collect::<Result<Vec<_>>>()?;
        batches_used += 1;

        let mut bank = Vec::with_capacity(chunks.iter().map(|c| c.bank.len()).sum());
        let mut track = [0.0; N_GROUPS];
        for chunk in chunks {
            bank.extend(chunk.bank);
            for g in 0..N_GROUPS {
                track[g] += chunk.track[g];
            }
        }
        let k = bank.len() as f64 / n as f64;
        let positions: Vec<f64> = bank.iter().map(|s| s.x).collect();
        let entropy = shannon_entropy(&positions, ENTROPY_BINS, 0.0, slab.length);
        batches.push(BatchStats {
            batch,
            k,
            entropy,
            active,
        });
        if active {
            active_k.push(k);
            active_fast.push(track[FAST] / norm);
            active_thermal.push(track[THERMAL] / norm);
        }

        if bank.is_empty() {
            // Source extinct: every later generation is empty.
            for later in batch + 1..cfg.n_batches {
                let later_active = later >= cfg.n_inactive;
                batches.push(BatchStats {
                    batch: later,
                    k: 0.0,
                    entropy: 0.0,
                    active: later_active,
                });
                if later_active {
                    active_k.push(0.0);
                    active_fast.push(0.0);
                    active_thermal.push(0.0);
                }
            }
            break;
        }
        let mut rs = rng::stream(&[cfg.seed, batch as u64, u64::MAX]);
        source = Some(resample(&bank, n, &mut rs));
    }

    let (k_mean, k_std) = mean_and_stderr(&active_k);
    let (fast_flux, fast_flux_std) = mean_and_stderr(&active_fast);
    let (thermal_flux, thermal_flux_std) = mean_and_stderr(&active_thermal);
    Ok(RunResult {
        k_mean,
        k_std,
        fast_flux,
        fast_flux_std,
        thermal_flux,
        thermal_flux_std,
        batches_used,
        batches,
    })
}

/// Two-group infinite-medium multiplication factor for a material with all
/// fission neutrons born fast and no upscatter.
pub fn kinf_analytic(mat: &MaterialXs) -> Result<f64> {
    let down = mat.sigma_s[FAST][THERMAL];
    let removal_fast = mat.sigma_a[FAST] + down;
    let abs_thermal = mat.sigma_a[THERMAL];
    if mat.sigma_s[THERMAL][FAST] != 0.0 {
        return Err(Error::DegenerateMedium(format!(
            "'{}' has upscatter; closed form needs none",
            mat.name
        )));
    }
    if abs_thermal == 0.0 && down > 0.0 {
        return Err(Error::DegenerateMedium(format!(
            "'{}' has no thermal absorption: thermal flux unbounded",
            mat.name
        )));
    }
    if removal_fast == 0.0 {
        return Err(Error::DegenerateMedium(format!(
            "'{}' neither absorbs nor moderates fast neutrons",
            mat.name
        )));
    }
    let thermal_term = if down > 0.0 {
        mat.nu_sigma_f[THERMAL] * down / abs_thermal
    } else {
        0.0
    };
    Ok((mat.nu_sigma_f[FAST] + thermal_term) / removal_fast)
}

/// A material run as a reflected homogeneous slab next to its closed-form
/// multiplication factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub material: String,
    pub kinf: f64,
    pub k_mean: f64,
    pub k_std: f64,
}

impl OracleCheck {
    /// `|k_mean - kinf| <= n_sigma * k_std`.
    pub fn within(&self, n_sigma: f64) -> bool {
        (self.k_mean - self.kinf).abs() <= n_sigma * self.k_std
    }
}

/// Slab thickness of the homogeneous check; with reflective ends any
/// thickness is an infinite medium.
pub const HOMOGENEOUS_THICKNESS_CM: f64 = 1.0;

pub fn homogeneous_check(mat: &MaterialXs, cfg: &McConfig) -> Result<OracleCheck> {
    let kinf = kinf_analytic(mat)?;
    let model = SlabModel::homogeneous(mat, HOMOGENEOUS_THICKNESS_CM)?;
    let run = run_keig(&model, cfg)?;
    Ok(OracleCheck {
        material: mat.name.clone(),
        kinf,
        k_mean: run.k_mean,
        k_std: run.k_std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_unit_cell, Bounds, GeometryConfig, ParamPoint};
    use crate::xslib::{default_library_path, XsLibrary, FUEL};

    fn lib() -> XsLibrary {
        XsLibrary::from_file(&default_library_path()).unwrap()
    }

    fn one_group_like(nu_f_fast: f64, abs_fast: f64) -> MaterialXs {
        MaterialXs {
            name: "toy".into(),
            ref_density: 1.0,
            sigma_t: [abs_fast + 0.3, 0.5],
            sigma_a: [abs_fast, 0.1],
            nu_sigma_f: [nu_f_fast, 0.0],
            sigma_s: [[0.3, 0.0], [0.0, 0.4]],
            chi: [1.0, 0.0],
        }
    }

    fn small_cfg(seed: u64) -> McConfig {
        McConfig {
            particles_per_batch: 500,
            n_batches: 25,
            n_inactive: 5,
            seed,
        }
    }

    #[test]
    fn kinf_examples() {
        let mut m = one_group_like(0.0, 0.02);
        assert_eq!(kinf_analytic(&m).unwrap(), 0.0);
        m.nu_sigma_f = [0.03, 0.0];
        assert!((kinf_analytic(&m).unwrap() - 1.5).abs() < 1e-15);
        m.sigma_s[FAST][THERMAL] = 0.1;
        m.sigma_a[THERMAL] = 0.0;
        assert!(matches!(kinf_analytic(&m), Err(Error::DegenerateMedium(_))));
    }

    #[test]
    fn shannon_entropy_examples() {
        assert_eq!(shannon_entropy(&[0.5; 10], 8, 0.0, 1.0), 0.0);
        let uniform: Vec<f64> = (0..16).map(|i| (i as f64 + 0.5) / 16.0).collect();
        assert!((shannon_entropy(&uniform, 16, 0.0, 1.0) - 4.0).abs() < 1e-12);
        assert!((shannon_entropy(&uniform[..8], 8, 0.0, 0.5) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn homogeneous_fuel_matches_kinf() {
        let lib = lib();
        let fuel = lib.material(FUEL).unwrap();
        let kinf = kinf_analytic(fuel).unwrap();
        let model = SlabModel::homogeneous(fuel, 1.0).unwrap();
        let r = run_keig(&model, &McConfig::default()).unwrap();
        assert!(r.k_std > 0.0);
        assert!(
            (r.k_mean - kinf).abs() <= 3.0 * r.k_std,
            "k = {} +- {}, kinf = {}",
            r.k_mean,
            r.k_std,
            kinf
        );
    }

    #[test]
    fn no_fissile_material_gives_zero_k() {
        let lib = lib();
        let mut model = build_unit_cell(
            &GeometryConfig::default(),
            &Bounds::default(),
            ParamPoint::new(10.0, 1.0),
            &lib,
        )
        .unwrap();
        let al = lib.material("aluminum").unwrap().clone();
        for l in model.layers.iter_mut().filter(|l| l.region == RegionTag::Fuel) {
            l.xs = al.clone();
        }
        let r = run_keig(&model, &small_cfg(3)).unwrap();
        assert_eq!(r.k_mean, 0.0);
        assert_eq!(r.k_std, 0.0);
        assert_eq!(r.batches_used, 1);
        assert_eq!(r.batches.len(), 25);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let lib = lib();
        let model = build_unit_cell(
            &GeometryConfig::default(),
            &Bounds::default(),
            ParamPoint::new(12.0, 0.001),
            &lib,
        )
        .unwrap();
        let a = run_keig(&model, &small_cfg(11)).unwrap();
        let b = run_keig(&model, &small_cfg(11)).unwrap();
        assert_eq!(a, b);
        let c = run_keig(&model, &small_cfg(12)).unwrap();
        assert_ne!(a.k_mean, c.k_mean);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let lib = lib();
        let model = build_unit_cell(
            &GeometryConfig::default(),
            &Bounds::default(),
            ParamPoint::new(8.0, 3.0),
            &lib,
        )
        .unwrap();
        let run_with = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_keig(&model, &small_cfg(5)).unwrap())
        };
        assert_eq!(run_with(1), run_with(3));
    }

    #[test]
    fn pure_scatterer_is_degenerate() {
        let mat = MaterialXs {
            name: "scatterer".into(),
            ref_density: 1.0,
            sigma_t: [0.3, 0.3],
            sigma_a: [0.0, 0.0],
            nu_sigma_f: [0.0, 0.0],
            sigma_s: [[0.3, 0.0], [0.0, 0.3]],
            chi: [1.0, 0.0],
        };
        let model = SlabModel::homogeneous(&mat, 1.0).unwrap();
        assert!(matches!(
            run_keig(&model, &small_cfg(1)),
            Err(Error::DegenerateMedium(_))
        ));
    }

    #[test]
    fn invalid_config_rejected() {
        let lib = lib();
        let model = SlabModel::homogeneous(lib.material(FUEL).unwrap(), 1.0).unwrap();
        let bad = McConfig {
            n_inactive: 0,
            ..McConfig::default()
        };
        assert!(matches!(run_keig(&model, &bad), Err(Error::InvalidConfig(_))));
        let bad = McConfig {
            particles_per_batch: 50,
            ..McConfig::default()
        };
        assert!(matches!(run_keig(&model, &bad), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn resample_sizes() {
        let bank: Vec<Site> = (0..10)
            .map(|i| Site {
                x: i as f64,
                group: FAST,
                layer: 0,
            })
            .collect();
        let mut r = rng::stream(&[1]);
        let big = resample(&bank, 4, &mut r);
        assert_eq!(big.len(), 4);
        let mut xs: Vec<f64> = big.iter().map(|s| s.x).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        assert_eq!(xs.len(), 4, "sampling without replacement");
        assert_eq!(resample(&bank, 25, &mut r).len(), 25);
    }
}
