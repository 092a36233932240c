//! Two-group macroscopic cross-section data, the JSON library format, and the
//! in-memory library cache.
//!
//! Group index 0 is fast (above [`FAST_THERMAL_BOUNDARY_EV`]), index 1 is
//! thermal. The same convention holds everywhere in the crate.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const N_GROUPS: usize = 2;
pub const FAST: usize = 0;
pub const THERMAL: usize = 1;
pub const FAST_THERMAL_BOUNDARY_EV: f64 = 0.6;

/// Relative tolerance of the `sigma_t == sigma_a + sum(sigma_s)` check.
pub const CONSISTENCY_RTOL: f64 = 1e-9;

/// Names of the benchmark materials every library must provide.
pub const FUEL: &str = "fuel";
pub const ALUMINUM: &str = "aluminum";
pub const WATER: &str = "water";
pub const CADMIUM: &str = "cadmium";
pub const REQUIRED_MATERIALS: [&str; 4] = [FUEL, ALUMINUM, WATER, CADMIUM];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStructure {
    pub n_groups: usize,
    pub boundary_ev: f64,
}

impl Default for GroupStructure {
    fn default() -> Self {
        Self {
            n_groups: N_GROUPS,
            boundary_ev: FAST_THERMAL_BOUNDARY_EV,
        }
    }
}

/// Two-group macroscopic cross sections of one material at `ref_density`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialXs {
    pub name: String,
    /// g/cc
    pub ref_density: f64,
    pub sigma_t: [f64; N_GROUPS],
    pub sigma_a: [f64; N_GROUPS],
    pub nu_sigma_f: [f64; N_GROUPS],
    /// `sigma_s[from][to]`
    pub sigma_s: [[f64; N_GROUPS]; N_GROUPS],
    pub chi: [f64; N_GROUPS],
}

impl MaterialXs {
    pub fn is_fissile(&self) -> bool {
        self.nu_sigma_f.iter().any(|&v| v > 0.0)
    }

    /// Checks non-negativity, the total/partial sum rule and the fission
    /// spectrum normalization.
    pub fn validate(&self) -> Result<()> {
        let malformed = |field: &str, reason: String| Error::MalformedRecord {
            material: self.name.clone(),
            field: field.to_string(),
            reason,
        };
        if !(self.ref_density > 0.0) {
            return Err(malformed(
                "ref_density",
                format!("must be > 0, got {}", self.ref_density),
            ));
        }
        let vectors = [
            ("sigma_t", &self.sigma_t),
            ("sigma_a", &self.sigma_a),
            ("nu_sigma_f", &self.nu_sigma_f),
            ("sigma_s", &self.sigma_s[0]),
            ("sigma_s", &self.sigma_s[1]),
            ("chi", &self.chi),
        ];
        for (field, values) in vectors {
            if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(malformed(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        for g in 0..N_GROUPS {
            let sum = self.sigma_a[g] + self.sigma_s[g].iter().sum::<f64>();
            let scale = self.sigma_t[g].abs().max(sum.abs());
            if (self.sigma_t[g] - sum).abs() > CONSISTENCY_RTOL * scale {
                return Err(Error::Inconsistent {
                    material: self.name.clone(),
                    group: g + 1,
                    sigma_t: self.sigma_t[g],
                    sum,
                });
            }
        }
        if self.is_fissile() {
            let chi_sum: f64 = self.chi.iter().sum();
            if (chi_sum - 1.0).abs() > 1e-12 {
                return Err(malformed("chi", format!("must sum to 1, got {chi_sum}")));
            }
        }
        Ok(())
    }
}

/// Linear macroscopic scaling to a new mass density at fixed composition.
pub fn scale_to_density(mat: &MaterialXs, density: f64) -> Result<MaterialXs> {
    if density < 0.0 || density.is_nan() {
        return Err(Error::NegativeDensity(density));
    }
    let f = density / mat.ref_density;
    let scale = |v: [f64; N_GROUPS]| v.map(|x| x * f);
    Ok(MaterialXs {
        name: mat.name.clone(),
        ref_density: density,
        sigma_t: scale(mat.sigma_t),
        sigma_a: scale(mat.sigma_a),
        nu_sigma_f: scale(mat.nu_sigma_f),
        sigma_s: mat.sigma_s.map(scale),
        chi: mat.chi,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct XsLibrary {
    pub groups: GroupStructure,
    pub materials: BTreeMap<String, MaterialXs>,
    /// Hex SHA-256 of the file contents the library was parsed from.
    pub source_digest: String,
}

impl XsLibrary {
    pub fn material(&self, name: &str) -> Result<&MaterialXs> {
        self.materials
            .get(name)
            .ok_or_else(|| Error::MissingMaterial(name.to_string()))
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let root: Value = serde_json::from_str(text).map_err(|source| Error::Json {
            path: origin.to_path_buf(),
            source,
        })?;
        let top = |field: &str, reason: &str| Error::MalformedRecord {
            material: "<library>".into(),
            field: field.into(),
            reason: reason.into(),
        };
        let root = root.as_object().ok_or_else(|| top("<root>", "must be an object"))?;
        let boundary_ev = root
            .get("boundary_ev")
            .and_then(Value::as_f64)
            .ok_or_else(|| top("boundary_ev", "missing or not a number"))?;
        if boundary_ev != FAST_THERMAL_BOUNDARY_EV {
            return Err(top("boundary_ev", "must be 0.6 (two-group fast/thermal split)"));
        }
        let entries = root
            .get("materials")
            .and_then(Value::as_object)
            .ok_or_else(|| top("materials", "missing or not an object"))?;

        let mut materials = BTreeMap::new();
        for (name, record) in entries {
            let mat = parse_material(name, record)?;
            mat.validate()?;
            materials.insert(name.clone(), mat);
        }
        for required in REQUIRED_MATERIALS {
            if !materials.contains_key(required) {
                return Err(Error::MissingMaterial(required.to_string()));
            }
        }

        let digest = Sha256::digest(text.as_bytes());
        Ok(Self {
            groups: GroupStructure {
                n_groups: N_GROUPS,
                boundary_ev,
            },
            materials,
            source_digest: format!("{digest:x}"),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Serializes back into the on-disk JSON layout.
    pub fn to_json(&self) -> Value {
        let materials: Map<String, Value> = self
            .materials
            .iter()
            .map(|(name, m)| {
                let record = serde_json::json!({
                    "ref_density": m.ref_density,
                    "sigma_t": m.sigma_t,
                    "sigma_a": m.sigma_a,
                    "nu_sigma_f": m.nu_sigma_f,
                    "sigma_s": m.sigma_s,
                    "chi": m.chi,
                });
                (name.clone(), record)
            })
            .collect();
        serde_json::json!({ "boundary_ev": self.groups.boundary_ev, "materials": materials })
    }
}

fn parse_material(name: &str, record: &Value) -> Result<MaterialXs> {
    let malformed = |field: &str, reason: &str| Error::MalformedRecord {
        material: name.to_string(),
        field: field.to_string(),
        reason: reason.to_string(),
    };
    let obj = record
        .as_object()
        .ok_or_else(|| malformed("<record>", "must be an object"))?;
    let number = |field: &str, v: &Value| -> Result<f64> {
        v.as_f64().ok_or_else(|| malformed(field, "must be a number"))
    };
    let pair = |field: &str| -> Result<[f64; N_GROUPS]> {
        let arr = obj
            .get(field)
            .ok_or_else(|| malformed(field, "is missing"))?
            .as_array()
            .filter(|a| a.len() == N_GROUPS)
            .ok_or_else(|| malformed(field, "must be an array of 2 numbers"))?;
        Ok([number(field, &arr[0])?, number(field, &arr[1])?])
    };

    let ref_density = number(
        "ref_density",
        obj.get("ref_density")
            .ok_or_else(|| malformed("ref_density", "is missing"))?,
    )?;
    let rows = obj
        .get("sigma_s")
        .ok_or_else(|| malformed("sigma_s", "is missing"))?
        .as_array()
        .filter(|a| a.len() == N_GROUPS)
        .ok_or_else(|| malformed("sigma_s", "must be a 2x2 array"))?;
    let mut sigma_s = [[0.0; N_GROUPS]; N_GROUPS];
    for (g, row) in rows.iter().enumerate() {
        let row = row
            .as_array()
            .filter(|a| a.len() == N_GROUPS)
            .ok_or_else(|| malformed("sigma_s", "must be a 2x2 array"))?;
        for (h, v) in row.iter().enumerate() {
            sigma_s[g][h] = number("sigma_s", v)?;
        }
    }

    Ok(MaterialXs {
        name: name.to_string(),
        ref_density,
        sigma_t: pair("sigma_t")?,
        sigma_a: pair("sigma_a")?,
        nu_sigma_f: pair("nu_sigma_f")?,
        sigma_s,
        chi: pair("chi")?,
    })
}

/// Process-wide store of parsed libraries keyed by path.
///
/// A path is parsed at most once; later loads hand out the same `Arc`.
#[derive(Debug, Default)]
pub struct XsCache {
    entries: Mutex<HashMap<PathBuf, Arc<XsLibrary>>>,
    parse_count: AtomicUsize,
    hit_count: AtomicUsize,
}

impl XsCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse_count(&self) -> usize {
        self.parse_count.load(Ordering::SeqCst)
    }

    pub fn hit_count(&self) -> usize {
        self.hit_count.load(Ordering::SeqCst)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("xs cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The lock is held across the parse so concurrent first loads of one
    /// path parse exactly once.
    pub fn load(&self, path: &Path) -> Result<Arc<XsLibrary>> {
        let mut entries = self.entries.lock().expect("xs cache poisoned");
        if let Some(lib) = entries.get(path) {
            self.hit_count.fetch_add(1, Ordering::SeqCst);
            return Ok(Arc::clone(lib));
        }
        let lib = Arc::new(XsLibrary::from_file(path)?);
        self.parse_count.fetch_add(1, Ordering::SeqCst);
        entries.insert(path.to_path_buf(), Arc::clone(&lib));
        Ok(lib)
    }
}

/// Loads through `cache`; see [`XsCache::load`].
pub fn load_library(path: &Path, cache: &XsCache) -> Result<Arc<XsLibrary>> {
    cache.load(path)
}

/// Path of the library shipped with the crate.
pub fn default_library_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/default.xs.json")
}
