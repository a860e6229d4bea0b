//! Operating conditions, their normalization, and the map to the
//! nondimensional coefficients of the regenerator equations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of sectors: gas, primary air, secondary air.
pub const SECTORS: usize = 3;

pub const SECTOR_NAMES: [&str; SECTORS] = ["gas", "primary_air", "secondary_air"];

const VARIABLE_NAMES: [&str; 4] = ["t_in_gas", "t_in_primary_air", "t_in_secondary_air", "gas_flow"];

/// Field operating condition: three inlet temperatures (°C) and the gas mass flow (kg/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingCondition {
    pub t_in_gas: f64,
    pub t_in_primary_air: f64,
    pub t_in_secondary_air: f64,
    pub gas_flow: f64,
}

impl OperatingCondition {
    pub fn new(t_in_gas: f64, t_in_primary_air: f64, t_in_secondary_air: f64, gas_flow: f64) -> Self {
        Self {
            t_in_gas,
            t_in_primary_air,
            t_in_secondary_air,
            gas_flow,
        }
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [
            self.t_in_gas,
            self.t_in_primary_air,
            self.t_in_secondary_air,
            self.gas_flow,
        ]
    }

    /// Inlet temperatures in sector order.
    pub fn inlet_temperatures(&self) -> [f64; SECTORS] {
        [self.t_in_gas, self.t_in_primary_air, self.t_in_secondary_air]
    }

    /// Checks finiteness and positive flow. Envelope membership is checked by
    /// [`PhysicalRanges::check_envelope`].
    pub fn validate(&self) -> Result<()> {
        for (name, v) in VARIABLE_NAMES.iter().zip(self.to_array()) {
            if !v.is_finite() {
                return Err(Error::validation(format!("{name} is not finite ({v})")));
            }
        }
        if self.gas_flow <= 0.0 {
            return Err(Error::validation(format!(
                "gas_flow must be positive, got {}",
                self.gas_flow
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarRange {
    pub min: f64,
    pub max: f64,
}

impl VarRange {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }
}

/// Per-variable bounds of the operating box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalRanges {
    pub t_in_gas: VarRange,
    pub t_in_primary_air: VarRange,
    pub t_in_secondary_air: VarRange,
    pub gas_flow: VarRange,
}

impl Default for PhysicalRanges {
    fn default() -> Self {
        Self {
            t_in_gas: VarRange::new(200.0, 400.0),
            t_in_primary_air: VarRange::new(10.0, 80.0),
            t_in_secondary_air: VarRange::new(10.0, 80.0),
            gas_flow: VarRange::new(600.0, 800.0),
        }
    }
}

impl PhysicalRanges {
    pub fn as_array(&self) -> [VarRange; 4] {
        [
            self.t_in_gas,
            self.t_in_primary_air,
            self.t_in_secondary_air,
            self.gas_flow,
        ]
    }

    pub fn from_array(r: [VarRange; 4]) -> Self {
        Self {
            t_in_gas: r[0],
            t_in_primary_air: r[1],
            t_in_secondary_air: r[2],
            gas_flow: r[3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in VARIABLE_NAMES.iter().zip(self.as_array()) {
            if !(r.min.is_finite() && r.max.is_finite() && r.min < r.max) {
                return Err(Error::validation(format!(
                    "range for {name} must satisfy min < max, got [{}, {}]",
                    r.min, r.max
                )));
            }
        }
        Ok(())
    }

    pub fn center(&self) -> OperatingCondition {
        OperatingCondition::from_array(self.as_array().map(|r| r.midpoint()))
    }

    /// Ranges widened by `margin` times the span on both sides.
    pub fn extended(&self, margin: f64) -> Self {
        Self::from_array(
            self.as_array()
                .map(|r| VarRange::new(r.min - margin * r.span(), r.max + margin * r.span())),
        )
    }

    /// Largest excursion outside the box, in units of the span (0 inside).
    pub fn excursion(&self, c: &OperatingCondition) -> f64 {
        self.as_array()
            .iter()
            .zip(c.to_array())
            .map(|(r, v)| ((r.min - v).max(v - r.max) / r.span()).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Fails naming the first component that lies outside the box widened by `margin`.
    pub fn check_envelope(&self, c: &OperatingCondition, margin: f64) -> Result<()> {
        c.validate()?;
        let env = self.extended(margin);
        for ((name, r), v) in VARIABLE_NAMES.iter().zip(env.as_array()).zip(c.to_array()) {
            // Tolerate the rounding of the envelope bounds themselves.
            let slack = 1e-12 * r.span();
            if v < r.min - slack || v > r.max + slack {
                return Err(Error::validation(format!(
                    "{name} = {v} lies outside the validity envelope [{}, {}]",
                    r.min, r.max
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, c: &OperatingCondition) -> bool {
        self.excursion(c) == 0.0
    }
}

/// Default envelope margin around the operating box (fraction of each span).
pub const DEFAULT_ENVELOPE_MARGIN: f64 = 0.10;

/// Maps a condition to unit coordinates `(v - min) / (max - min)`.
///
/// Conditions outside the default envelope are rejected.
pub fn normalize_condition(c: &OperatingCondition, r: &PhysicalRanges) -> Result<[f64; 4]> {
    r.validate()?;
    r.check_envelope(c, DEFAULT_ENVELOPE_MARGIN)?;
    Ok(normalize_unchecked(c, r))
}

pub(crate) fn normalize_unchecked(c: &OperatingCondition, r: &PhysicalRanges) -> [f64; 4] {
    let ranges = r.as_array();
    let v = c.to_array();
    std::array::from_fn(|i| (v[i] - ranges[i].min) / ranges[i].span())
}

pub fn denormalize_condition(u: &[f64; 4], r: &PhysicalRanges) -> Result<OperatingCondition> {
    r.validate()?;
    for (name, &ui) in VARIABLE_NAMES.iter().zip(u) {
        if !(0.0..=1.0).contains(&ui) {
            return Err(Error::validation(format!(
                "normalized {name} = {ui} is outside [0, 1]"
            )));
        }
    }
    let ranges = r.as_array();
    Ok(OperatingCondition::from_array(std::array::from_fn(|i| {
        ranges[i].min + u[i] * ranges[i].span()
    })))
}

/// Affine map between °C and the nondimensional temperature θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureScale {
    pub t_ref: f64,
    pub t_span: f64,
}

impl Default for TemperatureScale {
    fn default() -> Self {
        Self {
            t_ref: 0.0,
            t_span: 500.0,
        }
    }
}

impl TemperatureScale {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_ref.is_finite() && self.t_span.is_finite() && self.t_span > 0.0) {
            return Err(Error::validation(format!(
                "temperature scale needs finite t_ref and t_span > 0, got ({}, {})",
                self.t_ref, self.t_span
            )));
        }
        Ok(())
    }

    pub fn to_theta(&self, t: f64) -> f64 {
        (t - self.t_ref) / self.t_span
    }

    /// θ back to °C.
    pub fn from_nondim_temperature(&self, theta: f64) -> f64 {
        self.t_ref + theta * self.t_span
    }

    /// Temperature difference in °C for a nondimensional difference.
    pub fn delta_to_celsius(&self, d: f64) -> f64 {
        d * self.t_span
    }
}

pub fn from_nondim_temperature(theta: f64, scale: &TemperatureScale) -> f64 {
    scale.from_nondim_temperature(theta)
}

/// How the gas flow rate enters the transfer-unit counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMap {
    pub ntu_ref: [f64; SECTORS],
    pub pe_ref: [f64; SECTORS],
    pub flow_ref: f64,
    pub flow_exponent: f64,
}

impl Default for CoefficientMap {
    fn default() -> Self {
        // h ∝ m^0.8 for turbulent convection, so NTU = hA/(m c) ∝ m^-0.2.
        Self {
            ntu_ref: [3.0, 2.5, 2.5],
            pe_ref: [50.0, 50.0, 50.0],
            flow_ref: 700.0,
            flow_exponent: -0.2,
        }
    }
}

impl CoefficientMap {
    pub fn validate(&self) -> Result<()> {
        if self.ntu_ref.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::validation("ntu_ref entries must be finite and >= 0"));
        }
        if self.pe_ref.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::validation("pe_ref entries must be finite and > 0"));
        }
        if !(self.flow_ref.is_finite() && self.flow_ref > 0.0) {
            return Err(Error::validation("flow_ref must be > 0"));
        }
        if !self.flow_exponent.is_finite() {
            return Err(Error::validation("flow_exponent must be finite"));
        }
        Ok(())
    }
}

/// Coefficients of the nondimensional three-sector system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: crate::Scalar")]
pub struct NondimParams<T> {
    pub ntu: [T; SECTORS],
    pub pe: [T; SECTORS],
    pub theta_in: [T; SECTORS],
}

impl<T: Scalar> NondimParams<T> {
    pub fn new(ntu: [T; SECTORS], pe: [T; SECTORS], theta_in: [T; SECTORS]) -> Result<Self> {
        let p = Self { ntu, pe, theta_in };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for j in 0..SECTORS {
            if !(self.ntu[j].is_finite() && self.ntu[j] >= T::zero()) {
                return Err(Error::validation(format!("ntu[{j}] must be finite and >= 0")));
            }
            if !(self.pe[j].is_finite() && self.pe[j] > T::zero()) {
                return Err(Error::validation(format!("pe[{j}] must be finite and > 0")));
            }
            let th = self.theta_in[j];
            if !(th >= T::zero() && th <= T::one()) {
                return Err(Error::validation(format!(
                    "theta_in[{j}] = {th} is outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn theta_bounds(&self) -> (T, T) {
        let lo = self.theta_in.iter().copied().fold(T::infinity(), T::min);
        let hi = self.theta_in.iter().copied().fold(T::neg_infinity(), T::max);
        (lo, hi)
    }

    pub fn cast<U: Scalar>(&self) -> NondimParams<U> {
        NondimParams {
            ntu: self.ntu.map(|v| U::of(v.f64())),
            pe: self.pe.map(|v| U::of(v.f64())),
            theta_in: self.theta_in.map(|v| U::of(v.f64())),
        }
    }
}

/// Maps a condition to PDE coefficients.
///
/// Only the gas flow varies; the two air streams sit at `flow_ref`.
pub fn to_nondim<T: Scalar>(
    c: &OperatingCondition,
    scale: &TemperatureScale,
    cmap: &CoefficientMap,
) -> Result<NondimParams<T>> {
    c.validate()?;
    scale.validate()?;
    cmap.validate()?;
    let temps = c.inlet_temperatures();
    let flows = [c.gas_flow, cmap.flow_ref, cmap.flow_ref];
    let mut theta_in = [T::zero(); SECTORS];
    let mut ntu = [T::zero(); SECTORS];
    let mut pe = [T::zero(); SECTORS];
    for j in 0..SECTORS {
        let th = scale.to_theta(temps[j]);
        if !(0.0..=1.0).contains(&th) {
            return Err(Error::validation(format!(
                "{} inlet {} °C maps to θ = {th}, outside [0, 1]; widen the temperature scale",
                SECTOR_NAMES[j], temps[j]
            )));
        }
        theta_in[j] = T::of(th);
        let ratio = flows[j] / cmap.flow_ref;
        ntu[j] = T::of(cmap.ntu_ref[j] * ratio.powf(cmap.flow_exponent));
        pe[j] = T::of(cmap.pe_ref[j]);
    }
    NondimParams::new(ntu, pe, theta_in)
}

/// Everything needed to turn a physical condition into a solvable problem.
/// This is the schema of the `[model]` table in the configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub ranges: PhysicalRanges,
    pub scale: TemperatureScale,
    pub coefficients: CoefficientMap,
    /// Envelope half-width beyond `ranges`, as a fraction of each span.
    pub envelope_margin: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            ranges: PhysicalRanges::default(),
            scale: TemperatureScale::default(),
            coefficients: CoefficientMap::default(),
            envelope_margin: DEFAULT_ENVELOPE_MARGIN,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.ranges.validate()?;
        self.scale.validate()?;
        self.coefficients.validate()?;
        if !(self.envelope_margin >= 0.0) {
            return Err(Error::validation("envelope_margin must be >= 0"));
        }
        // Every admissible temperature must land in [0, 1].
        let env = self.ranges.extended(self.envelope_margin);
        for r in [env.t_in_gas, env.t_in_primary_air, env.t_in_secondary_air] {
            for t in [r.min, r.max] {
                let th = self.scale.to_theta(t);
                if !(-1e-12..=1.0 + 1e-12).contains(&th) {
                    return Err(Error::validation(format!(
                        "temperature scale maps envelope bound {t} °C to θ = {th}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Envelope check followed by [`to_nondim`].
    pub fn nondim<T: Scalar>(&self, c: &OperatingCondition) -> Result<NondimParams<T>> {
        self.ranges.check_envelope(c, self.envelope_margin)?;
        to_nondim(c, &self.scale, &self.coefficients)
    }

    pub fn normalize(&self, c: &OperatingCondition) -> Result<[f64; 4]> {
        self.ranges.check_envelope(c, self.envelope_margin)?;
        Ok(normalize_unchecked(c, &self.ranges))
    }
}
