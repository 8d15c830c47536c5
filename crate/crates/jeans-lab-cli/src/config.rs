//! Serializable run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use jeans_lab::fuchsian::CheckControls;
use jeans_lab::ode::ToleranceSpec;
use jeans_lab::pde::{DataProfile, EvolveControls, Shape};
use jeans_lab::{build_params, ModelParams, ParamsInput};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// The subcommand a configuration drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Iota,
    Ode,
    Blowup,
    Residuals,
    Simulate,
    FuchsianCheck,
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Iota => "iota",
            Command::Ode => "ode",
            Command::Blowup => "blowup",
            Command::Residuals => "residuals",
            Command::Simulate => "simulate",
            Command::FuchsianCheck => "fuchsian-check",
            Command::Report => "report",
        }
    }
}

/// Initial data for `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileSpec {
    /// d ≡ 1, v ≡ −1.
    Homogeneous,
    /// d = 1 + ε cos 2πζ.
    Cosine { eps: f64 },
    /// d = 1 + ε tanh(s cos 2πζ)/tanh(s).
    SquareWave { eps: f64, sharpness: f64 },
    /// Periodic table with columns `zeta,d,v` on [0,1), interpolated linearly.
    Table { path: PathBuf },
}

impl Default for ProfileSpec {
    fn default() -> Self {
        ProfileSpec::Cosine { eps: 1e-3 }
    }
}

impl ProfileSpec {
    /// The built-in profile, or `None` for a table.
    pub fn built_in(&self) -> Option<DataProfile> {
        match *self {
            ProfileSpec::Homogeneous => Some(DataProfile::homogeneous()),
            ProfileSpec::Cosine { eps } => Some(DataProfile::cosine(eps)),
            ProfileSpec::SquareWave { eps, sharpness } => {
                Some(DataProfile { d_amp: eps, d_shape: Shape::SmoothSquare { sharpness }, v_amp: 0.0, v_shape: Shape::Flat })
            }
            ProfileSpec::Table { .. } => None,
        }
    }

    /// Perturbation amplitude, used to scale the monitor thresholds.
    pub fn amplitude(&self) -> Option<f64> {
        match *self {
            ProfileSpec::Homogeneous => Some(0.0),
            ProfileSpec::Cosine { eps } | ProfileSpec::SquareWave { eps, .. } => Some(eps.abs()),
            ProfileSpec::Table { .. } => None,
        }
    }
}

/// Which exact solution `residuals` evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyChoice {
    Background,
    Homogeneous,
    Both,
}

/// Sampling for `residuals`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResidualSpec {
    pub family: FamilyChoice,
    pub times: Vec<f64>,
    pub points: usize,
    pub h: f64,
}

impl Default for ResidualSpec {
    fn default() -> Self {
        Self { family: FamilyChoice::Both, times: vec![1.2, 1.5, 2.0], points: 32, h: 1e-3 }
    }
}

/// Equivalence diagnostic attached to `fuchsian-check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EquivalenceSpec {
    pub t_centre: f64,
    pub dt: f64,
}

impl Default for EquivalenceSpec {
    fn default() -> Self {
        Self { t_centre: 1.5, dt: 0.01 }
    }
}

/// A complete, reproducible description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub command: Command,
    pub params: ParamsInput,
    /// When set, replaces `params.k_tilde` by the value giving this ι³.
    pub iota3: Option<f64>,
    pub profile: ProfileSpec,
    pub grid: usize,
    /// Contrast cap of the reference ODE integration.
    pub f_cap: f64,
    pub tolerances: ToleranceSpec,
    pub evolve: EvolveControls,
    pub check: CheckControls,
    pub residuals: ResidualSpec,
    /// K̃ values for `iota`.
    pub k_values: Vec<f64>,
    /// Run the PDE–Fuchsian equivalence diagnostic in `fuchsian-check`.
    pub equivalence: Option<EquivalenceSpec>,
    /// Parameter sets run in parallel, each in its own subdirectory.
    pub sweep: Vec<ParamsInput>,
    pub output_dir: PathBuf,
    /// Single source of all quasi-random sampling.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Report,
            params: ParamsInput::default(),
            iota3: None,
            profile: ProfileSpec::default(),
            grid: 64,
            f_cap: 1e6,
            tolerances: ToleranceSpec::default(),
            evolve: EvolveControls::default(),
            check: CheckControls::default(),
            residuals: ResidualSpec::default(),
            k_values: (0..50).map(|i| 10f64.powf(-8.0 + 9.0 * i as f64 / 49.0)).collect(),
            equivalence: None,
            sweep: Vec::new(),
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Parameter input after the ι³ override.
    pub fn params_input(&self) -> Result<ParamsInput, CliError> {
        match self.iota3 {
            Some(i3) => Ok(self.params.with_iota3(i3)?),
            None => Ok(self.params),
        }
    }

    /// Validates the configuration and derives the model constants.
    pub fn validate(&self) -> Result<ModelParams, CliError> {
        if self.grid < 16 || !self.grid.is_multiple_of(2) {
            return Err(CliError::Usage(format!("grid must be even and at least 16, got {}", self.grid)));
        }
        if !(self.f_cap > 1.0) {
            return Err(CliError::Usage(format!("f_cap must exceed 1, got {}", self.f_cap)));
        }
        if self.command == Command::Iota && self.k_values.iter().any(|k| !(*k > 0.0)) {
            return Err(CliError::Usage("k_values must be positive".into()));
        }
        if self.command == Command::Residuals && (self.residuals.points == 0 || !(self.residuals.h > 0.0)) {
            return Err(CliError::Usage("residuals need at least one point and h > 0".into()));
        }
        Ok(build_params(&self.params_input()?)?)
    }

    /// Reads a configuration, or the configuration echoed in a manifest.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid JSON in {}: {e}", path.display())))?;
        let inner = match value.get("config") {
            Some(c) if value.get("digests").is_some() => c.clone(),
            _ => value,
        };
        serde_json::from_value(inner).map_err(|e| CliError::Usage(format!("invalid config in {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_json() {
        let c = RunConfig { profile: ProfileSpec::SquareWave { eps: 1e-3, sharpness: 3.0 }, ..Default::default() };
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"command":"blowup","params":{"gamma":0.7}}"#).unwrap();
        assert_eq!(c.command, Command::Blowup);
        assert_eq!(c.params.gamma, 0.7);
        assert_eq!(c.params.beta, 0.1);
        assert_eq!(c.grid, 64);
    }

    #[test]
    fn odd_grid_is_a_usage_error() {
        let c = RunConfig { grid: 33, ..Default::default() };
        assert!(matches!(c.validate(), Err(CliError::Usage(_))));
    }

    #[test]
    fn iota3_override_reaches_the_params() {
        let c = RunConfig { iota3: Some(0.1), ..Default::default() };
        let p = c.validate().unwrap();
        assert!((p.iota3 - 0.1).abs() < 1e-12);
    }
}
