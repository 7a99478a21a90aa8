//! Scenario files.
//!
//! ```toml
//! mode = "esc"              # esc | target | averaged
//!
//! [plant]
//! name = "general_nonlinear"
//! x0 = [1.0, 2.0]
//!
//! [params]
//! T = 5.0
//! A = 25.0
//! omega = 150.0
//! omega_h = 2000.0
//! omega_l = 3.0
//! k = 25.0
//! tau_I = 0.5
//! # u_hat0 = 0.0, stop_fraction = 1e-3, gain_clamp = 1e6
//!
//! [integrator]              # every key optional
//! method = "rk45"
//!
//! [outputs]
//! dir = "out/general_nonlinear"
//!
//! [assumptions]             # used by `validate`
//! lo = [-1.0, -1.0]
//! hi = [1.0, 1.0]
//! samples = 1000
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use ptesc::plant::{builtin, StateBox};
use ptesc::timescale::{PrescribedTime, DEFAULT_STOP_FRACTION};
use ptesc::{EscParams, IntegratorConfig, Mode, PlantModel};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_mode")]
    pub mode: Mode,
    pub plant: PlantSection,
    pub params: ParamsSection,
    #[serde(default)]
    pub integrator: IntegratorConfig<f64>,
    #[serde(default)]
    pub outputs: OutputsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assumptions: Option<AssumptionsSection>,
}

fn default_mode() -> Mode {
    Mode::Esc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub name: String,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "A")]
    pub amplitude: f64,
    pub omega: f64,
    pub omega_h: f64,
    pub omega_l: f64,
    pub k: f64,
    #[serde(rename = "tau_I")]
    pub tau_i: f64,
    #[serde(default)]
    pub u_hat0: f64,
    #[serde(default = "default_stop_fraction")]
    pub stop_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_clamp: Option<f64>,
}

fn default_stop_fraction() -> f64 {
    DEFAULT_STOP_FRACTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    pub trajectory: bool,
    pub report: bool,
    pub plots: bool,
}

impl Default for OutputsSection {
    fn default() -> Self {
        Self {
            dir: None,
            trajectory: true,
            report: true,
            plots: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    1000
}

/// A configuration whose every field has been checked, with the library
/// objects it describes.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub plant: PlantModel<f64>,
    pub params: EscParams<f64>,
    /// Non-fatal remarks, e.g. unusual filter ordering.
    pub warnings: Vec<String>,
}

fn invalid(field: &str, message: impl Into<String>) -> CliError {
    CliError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs always serialize")
    }

    /// Checks every field and builds the plant and controller parameters.
    pub fn validate(&self) -> Result<Scenario, CliError> {
        let plant = builtin::by_name::<f64>(&self.plant.name).ok_or_else(|| {
            invalid(
                "plant.name",
                format!(
                    "unknown plant `{}` (expected one of: {})",
                    self.plant.name,
                    builtin::BUILTIN_NAMES.join(", ")
                ),
            )
        })?;
        if self.plant.x0.len() != plant.dim() {
            return Err(invalid(
                "plant.x0",
                format!(
                    "expected {} components for `{}`, got {}",
                    plant.dim(),
                    plant.name(),
                    self.plant.x0.len()
                ),
            ));
        }
        if let Some(i) = self.plant.x0.iter().position(|v| !v.is_finite()) {
            return Err(invalid("plant.x0", format!("component {} is not finite", i + 1)));
        }

        let p = &self.params;
        let positive = [
            ("params.T", "T", p.horizon),
            ("params.omega", "omega", p.omega),
            ("params.omega_h", "omega_h", p.omega_h),
            ("params.omega_l", "omega_l", p.omega_l),
            ("params.tau_I", "tau_I", p.tau_i),
        ];
        for (field, name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(field, format!("{name} must be > 0 (got {v})")));
            }
        }
        if !(p.k.is_finite() && p.k >= 0.0) {
            return Err(invalid("params.k", format!("k must be >= 0 (got {})", p.k)));
        }
        if !(p.amplitude.is_finite() && p.amplitude >= 0.0) {
            return Err(invalid("params.A", format!("A must be >= 0 (got {})", p.amplitude)));
        }
        if self.mode == Mode::Esc && p.amplitude <= 0.0 {
            return Err(invalid("params.A", "A must be > 0 in esc mode"));
        }
        if !p.u_hat0.is_finite() {
            return Err(invalid("params.u_hat0", "u_hat0 must be finite"));
        }
        if !(p.stop_fraction > 0.0 && p.stop_fraction < 1.0) {
            return Err(invalid(
                "params.stop_fraction",
                format!("stop_fraction must lie in (0, 1) (got {})", p.stop_fraction),
            ));
        }
        if let Some(c) = p.gain_clamp {
            if !(c.is_finite() && c >= 1.0) {
                return Err(invalid(
                    "params.gain_clamp",
                    format!("gain_clamp must be >= 1 (got {c})"),
                ));
            }
        }
        let pt = PrescribedTime::with_policy(p.horizon, p.stop_fraction, p.gain_clamp)
            .map_err(|e| invalid("params", e.to_string()))?;
        let params = EscParams::new(pt, p.amplitude, p.omega, p.omega_h, p.omega_l, p.k, p.tau_i)
            .map_err(|e| invalid("params", e.to_string()))?
            .with_u_hat0(p.u_hat0);

        self.integrator.validate().map_err(|e| match e {
            ptesc::Error::InvalidParameter {
                field,
                value,
                constraint,
            } => invalid(
                &format!("integrator.{field}"),
                format!("{field} {constraint} (got {value})"),
            ),
            other => invalid("integrator", other.to_string()),
        })?;

        if let Some(a) = &self.assumptions {
            self.assumption_box_for(&plant, a)?;
            if a.samples < 100 {
                return Err(invalid(
                    "assumptions.samples",
                    format!("samples must be >= 100 (got {})", a.samples),
                ));
            }
        }

        let mut warnings = Vec::new();
        if let Some(w) = params.ordering_warning() {
            warnings.push(w);
        }
        Ok(Scenario {
            config: self.clone(),
            plant,
            params,
            warnings,
        })
    }

    fn assumption_box_for(&self, plant: &PlantModel<f64>, a: &AssumptionsSection) -> Result<StateBox<f64>, CliError> {
        let default = plant.search_box();
        let lo = a.lo.clone().unwrap_or_else(|| default.lo.clone());
        let hi = a.hi.clone().unwrap_or_else(|| default.hi.clone());
        for (field, v) in [("assumptions.lo", &lo), ("assumptions.hi", &hi)] {
            if v.len() != plant.dim() {
                return Err(invalid(
                    field,
                    format!("expected {} components, got {}", plant.dim(), v.len()),
                ));
            }
        }
        StateBox::new(lo, hi).map_err(|e| invalid("assumptions", e.to_string()))
    }
}

impl Scenario {
    /// State box audited by `validate`: the `[assumptions]` bounds, or the
    /// plant's steady-state search box.
    pub fn assumption_box(&self) -> StateBox<f64> {
        match &self.config.assumptions {
            Some(a) => self
                .config
                .assumption_box_for(&self.plant, a)
                .expect("checked during validation"),
            None => self.plant.search_box().clone(),
        }
    }

    pub fn assumption_samples(&self) -> usize {
        self.config
            .assumptions
            .as_ref()
            .map_or_else(default_samples, |a| a.samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [plant]
        name = "scalar_quadratic"
        x0 = [3.0]

        [params]
        T = 5.0
        A = 0.1
        omega = 150.0
        omega_h = 2000.0
        omega_l = 3.0
        k = 1.0
        tau_I = 0.5
    "#;

    #[test]
    fn defaults_fill_optional_sections() {
        let c = ScenarioConfig::from_toml(MINIMAL, "inline").unwrap();
        assert_eq!(c.mode, Mode::Esc);
        assert_eq!(c.integrator, IntegratorConfig::default());
        assert_eq!(c.outputs, OutputsSection::default());
        assert_eq!(c.params.stop_fraction, 1e-3);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let text = MINIMAL.replace("omega_l = 3.0", "omega_1 = 3.0");
        let err = ScenarioConfig::from_toml(&text, "inline").unwrap_err().to_string();
        assert!(err.contains("omega_1"), "{err}");
        assert!(err.contains("line"), "{err}");
        let text = format!("{MINIMAL}\n[integrator]\nrtoll = 1e-6\n");
        assert!(ScenarioConfig::from_toml(&text, "inline").is_err());
    }

    #[test]
    fn amplitude_zero_only_outside_esc_mode() {
        let text = MINIMAL.replace("A = 0.1", "A = 0.0");
        let c = ScenarioConfig::from_toml(&text, "inline").unwrap();
        let err = c.validate().err().unwrap().to_string();
        assert!(err.contains("A must be > 0"), "{err}");
        let target = ScenarioConfig::from_toml(&format!("mode = \"target\"\n{text}"), "inline").unwrap();
        assert!(target.validate().is_ok());
    }

    #[test]
    fn field_errors_name_the_field() {
        let cases = [
            (MINIMAL.replace("x0 = [3.0]", "x0 = [3.0, 1.0]"), "plant.x0"),
            (MINIMAL.replace("scalar_quadratic", "nope"), "plant.name"),
            (MINIMAL.replace("omega_h = 2000.0", "omega_h = -1.0"), "params.omega_h"),
            (MINIMAL.replace("tau_I = 0.5", "tau_I = 0.0"), "params.tau_I"),
            (
                format!("{MINIMAL}\n[integrator]\ndither_resolution = 4\n"),
                "integrator.dither_resolution",
            ),
        ];
        for (text, field) in cases {
            let c = ScenarioConfig::from_toml(&text, "inline").unwrap();
            let err = c.validate().err().unwrap().to_string();
            assert!(err.starts_with(field), "{field}: {err}");
        }
    }

    #[test]
    fn serialization_round_trips() {
        let mut c = ScenarioConfig::from_toml(MINIMAL, "inline").unwrap();
        c.params.gain_clamp = Some(1e6);
        c.outputs.dir = Some("somewhere".into());
        c.assumptions = Some(AssumptionsSection {
            lo: Some(vec![-3.0]),
            hi: None,
            samples: 200,
        });
        let again = ScenarioConfig::from_toml(&c.to_toml(), "round trip").unwrap();
        assert_eq!(c, again);
    }
}
