//! MTR unit-cell slab geometry.
//!
//! The cell is layered along x with reflective planes at both ends:
//!
//! ```text
//! x=0 |water gap|Al|clad|fuel|clad|chan|clad|fuel|clad|chan|...|clad|fuel|clad|Al|Cd| x=L
//!      ^ tally region (opposite the cadmium)
//! ```
//!
//! Water density stands in for plate spacing, so the geometry is frozen once
//! built and only the fuel and water cross sections change between
//! evaluations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::xslib::{self, scale_to_density, MaterialXs, XsLibrary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    pub n_fuel_plates: usize,
    pub fuel_meat_cm: f64,
    /// Per side of each plate.
    pub clad_cm: f64,
    pub water_channel_cm: f64,
    pub side_plate_cm: f64,
    pub cadmium_cm: f64,
    pub water_gap_cm: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            n_fuel_plates: 3,
            fuel_meat_cm: 0.07,
            clad_cm: 0.04,
            water_channel_cm: 0.30,
            side_plate_cm: 0.50,
            cadmium_cm: 0.10,
            water_gap_cm: 1.00,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_fuel_plates == 0 {
            return Err(Error::InvalidConfig("n_fuel_plates must be >= 1".into()));
        }
        let thicknesses = [
            ("fuel_meat_cm", self.fuel_meat_cm),
            ("clad_cm", self.clad_cm),
            ("water_channel_cm", self.water_channel_cm),
            ("side_plate_cm", self.side_plate_cm),
            ("cadmium_cm", self.cadmium_cm),
            ("water_gap_cm", self.water_gap_cm),
        ];
        for (name, t) in thicknesses {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {t}")));
            }
        }
        Ok(())
    }

    pub fn total_thickness_cm(&self) -> f64 {
        let n = self.n_fuel_plates as f64;
        self.water_gap_cm
            + 2.0 * self.side_plate_cm
            + n * (self.fuel_meat_cm + 2.0 * self.clad_cm)
            + (n - 1.0) * self.water_channel_cm
            + self.cadmium_cm
    }

    pub fn layer_count(&self) -> usize {
        1 + 1 + (3 * self.n_fuel_plates + self.n_fuel_plates - 1) + 1 + 1
    }
}

/// Box of admissible (U, W) densities in g/cc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub u_min: f64,
    pub u_max: f64,
    pub w_min: f64,
    pub w_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            u_min: 0.1,
            u_max: 19.0,
            w_min: 0.001,
            w_max: 25.0,
        }
    }
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        let ok = self.u_min >= 0.0
            && self.w_min >= 0.0
            && self.u_min < self.u_max
            && self.w_min < self.w_max
            && self.u_max.is_finite()
            && self.w_max.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid parameter bounds {self:?}")))
        }
    }

    pub fn contains(&self, p: ParamPoint) -> bool {
        (self.u_min..=self.u_max).contains(&p.u_density)
            && (self.w_min..=self.w_max).contains(&p.w_density)
    }

    pub fn check(&self, p: ParamPoint) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                u: p.u_density,
                w: p.w_density,
                u_min: self.u_min,
                u_max: self.u_max,
                w_min: self.w_min,
                w_max: self.w_max,
            })
        }
    }

    pub fn clip(&self, p: ParamPoint) -> ParamPoint {
        ParamPoint {
            u_density: p.u_density.clamp(self.u_min, self.u_max),
            w_density: p.w_density.clamp(self.w_min, self.w_max),
        }
    }

    pub fn lower(&self) -> [f64; 2] {
        [self.u_min, self.w_min]
    }

    pub fn upper(&self) -> [f64; 2] {
        [self.u_max, self.w_max]
    }

    pub fn center(&self) -> ParamPoint {
        ParamPoint::new(
            0.5 * (self.u_min + self.u_max),
            0.5 * (self.w_min + self.w_max),
        )
    }

    /// Maps a point to [-1, 1]^2.
    pub fn normalize(&self, p: ParamPoint) -> [f64; 2] {
        let lo = self.lower();
        let hi = self.upper();
        let v = p.to_array();
        [0, 1].map(|j| 2.0 * (v[j] - lo[j]) / (hi[j] - lo[j]) - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    /// Fuel meat density, g/cc.
    pub u_density: f64,
    /// Density of every water region, g/cc.
    pub w_density: f64,
}

impl ParamPoint {
    pub fn new(u_density: f64, w_density: f64) -> Self {
        Self {
            u_density,
            w_density,
        }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.u_density, self.w_density]
    }

    pub fn from_array(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionTag {
    WaterGap,
    SidePlate,
    Clad,
    Fuel,
    WaterChannel,
    Cadmium,
    /// Layers of hand-built models (homogeneous test media and the like).
    Other,
}

/// Which density parameter, if any, drives a layer's cross sections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DensityKnob {
    Uranium,
    Water,
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub material: String,
    pub thickness_cm: f64,
    pub region: RegionTag,
    pub knob: DensityKnob,
    /// Cross sections at the layer's current density.
    pub xs: MaterialXs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlabModel {
    pub layers: Vec<Layer>,
    /// Index into `layers` of the flux tally region.
    pub tally_layer: usize,
    /// Parameters the density-driven layers currently reflect, if any.
    pub params: Option<ParamPoint>,
    pub bounds: Bounds,
    /// Digest of the library the model was built from.
    pub library_digest: String,
}

impl SlabModel {
    /// Builds a model from explicit layers; both ends are reflective.
    pub fn from_layers(layers: Vec<Layer>, tally_layer: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("model has no layers".into()));
        }
        if tally_layer >= layers.len() {
            return Err(Error::InvalidConfig(format!(
                "tally layer {tally_layer} out of range for {} layers",
                layers.len()
            )));
        }
        if let Some(l) = layers.iter().find(|l| !(l.thickness_cm > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "layer '{}' has non-positive thickness",
                l.material
            )));
        }
        Ok(Self {
            layers,
            tally_layer,
            params: None,
            bounds: Bounds::default(),
            library_digest: String::new(),
        })
    }

    /// One reflective layer of `mat`: an infinite homogeneous medium.
    pub fn homogeneous(mat: &MaterialXs, thickness_cm: f64) -> Result<Self> {
        Self::from_layers(
            vec![Layer {
                material: mat.name.clone(),
                thickness_cm,
                region: RegionTag::Other,
                knob: DensityKnob::Fixed,
                xs: mat.clone(),
            }],
            0,
        )
    }

    pub fn total_thickness_cm(&self) -> f64 {
        self.layers.iter().map(|l| l.thickness_cm).sum()
    }

    pub fn tally_width_cm(&self) -> f64 {
        self.layers[self.tally_layer].thickness_cm
    }
}

fn material_at(lib: &XsLibrary, name: &str, knob: DensityKnob, p: ParamPoint) -> Result<MaterialXs> {
    let base = lib.material(name)?;
    match knob {
        DensityKnob::Uranium => scale_to_density(base, p.u_density),
        DensityKnob::Water => scale_to_density(base, p.w_density),
        DensityKnob::Fixed => Ok(base.clone()),
    }
}

pub fn build_unit_cell(
    geom: &GeometryConfig,
    bounds: &Bounds,
    params: ParamPoint,
    lib: &XsLibrary,
) -> Result<SlabModel> {
    geom.validate()?;
    bounds.check(params)?;

    let mut plan: Vec<(&str, f64, RegionTag, DensityKnob)> = Vec::with_capacity(geom.layer_count());
    plan.push((xslib::WATER, geom.water_gap_cm, RegionTag::WaterGap, DensityKnob::Water));
    plan.push((xslib::ALUMINUM, geom.side_plate_cm, RegionTag::SidePlate, DensityKnob::Fixed));
    for plate in 0..geom.n_fuel_plates {
        plan.push((xslib::ALUMINUM, geom.clad_cm, RegionTag::Clad, DensityKnob::Fixed));
        plan.push((xslib::FUEL, geom.fuel_meat_cm, RegionTag::Fuel, DensityKnob::Uranium));
        plan.push((xslib::ALUMINUM, geom.clad_cm, RegionTag::Clad, DensityKnob::Fixed));
        if plate + 1 < geom.n_fuel_plates {
            plan.push((xslib::WATER, geom.water_channel_cm, RegionTag::WaterChannel, DensityKnob::Water));
        }
    }
    plan.push((xslib::ALUMINUM, geom.side_plate_cm, RegionTag::SidePlate, DensityKnob::Fixed));
    plan.push((xslib::CADMIUM, geom.cadmium_cm, RegionTag::Cadmium, DensityKnob::Fixed));

    let layers = plan
        .into_iter()
        .map(|(name, thickness_cm, region, knob)| {
            Ok(Layer {
                material: name.to_string(),
                thickness_cm,
                region,
                knob,
                xs: material_at(lib, name, knob, params)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SlabModel {
        layers,
        tally_layer: 0,
        params: Some(params),
        bounds: *bounds,
        library_digest: lib.source_digest.clone(),
    })
}

/// Replaces the fuel and water cross sections in place. The result equals a
/// fresh [`build_unit_cell`] with the same inputs.
pub fn update_densities(model: &mut SlabModel, params: ParamPoint, lib: &XsLibrary) -> Result<()> {
    model.bounds.check(params)?;
    if model.library_digest != lib.source_digest {
        return Err(Error::InvalidConfig(
            "model was built from a different cross-section library".into(),
        ));
    }
    if model.params == Some(params) {
        return Ok(());
    }
    for layer in model.layers.iter_mut().filter(|l| l.knob != DensityKnob::Fixed) {
        layer.xs = material_at(lib, &layer.material, layer.knob, params)?;
    }
    model.params = Some(params);
    Ok(())
}
