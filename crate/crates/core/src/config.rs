//! Run configuration read from TOML.
//!
//! Every quantity carries its unit in the key name (`_cm`, `_au`, `_fs`,
//! `_tper`, `_wcm2`, `_k`). Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::angular::{Basis, BasisKind};
use crate::dynamics::{FieldTrace, TimeGrid};
use crate::model::{HamiltonianModel, ModelKind, MoleculeParams};
use crate::observables::ReferencePolicy;
use crate::optim::{Method, Settings, DEFAULT_STAGNATION_EPS};
use crate::targets::TargetSpec;
use crate::units::{fwhm_to_sigma, PenaltyFieldUnit, UNITS};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    #[serde(default)]
    pub molecule: MoleculeConfig,
    pub basis: BasisConfig,
    pub model: ModelKind,
    pub time: TimeConfig,
    pub task: TaskConfig,
    #[serde(default)]
    pub guess: Vec<GaussianPulse>,
    pub optimizer: OptimizerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Repeat the run once per penalty weight (quoted in the optimizer's
/// penalty unit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub lambdas: Vec<f64>,
}

/// Molecular constants; defaults are carbon monoxide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoleculeConfig {
    pub b_cm: f64,
    pub mu0_au: f64,
    pub alpha_par_au: f64,
    pub alpha_perp_au: f64,
    pub beta_par_au: f64,
    pub beta_perp_au: f64,
}

impl Default for MoleculeConfig {
    fn default() -> Self {
        MoleculeConfig {
            b_cm: 1.9312,
            mu0_au: 0.112,
            alpha_par_au: 15.65,
            alpha_perp_au: 11.73,
            beta_par_au: 28.35,
            beta_perp_au: 6.64,
        }
    }
}

impl MoleculeConfig {
    pub fn params(&self) -> Result<MoleculeParams> {
        MoleculeParams::from_wavenumber(
            self.b_cm,
            self.mu0_au,
            self.alpha_par_au,
            self.alpha_perp_au,
            self.beta_par_au,
            self.beta_perp_au,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub j_max: u32,
    /// Keep only this m-block; all m when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<i32>,
}

impl BasisConfig {
    pub fn basis(&self) -> Result<Basis> {
        let kind = match self.m {
            Some(m) => BasisKind::FixedM(m),
            None => BasisKind::Full,
        };
        Basis::new(self.j_max, kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// Final time in rotational periods.
    pub t_final_tper: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    Orientation { j_f: u32 },
    Delocalization { j: u32, m: i32 },
    Thermal { temperature_k: f64, j_f: u32 },
}

impl TaskConfig {
    pub fn target_spec(&self) -> TargetSpec {
        match *self {
            TaskConfig::Orientation { j_f } => TargetSpec::Orientation { j_f },
            TaskConfig::Delocalization { j, m } => TargetSpec::Ket { j, m },
            TaskConfig::Thermal { temperature_k, j_f } => {
                TargetSpec::ThermalAlignment { temperature_k, j_f }
            }
        }
    }
}

/// One Gaussian envelope of the guess field. Give exactly one of
/// `peak_intensity_wcm2` and `amplitude_au`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianPulse {
    pub channel: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_intensity_wcm2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude_au: Option<f64>,
    pub center_tper: f64,
    pub fwhm_fs: f64,
}

impl GaussianPulse {
    pub fn amplitude(&self) -> Result<f64> {
        match (self.peak_intensity_wcm2, self.amplitude_au) {
            (Some(i), None) if i.is_finite() && i >= 0.0 => Ok(UNITS.intensity_to_field(i)),
            (None, Some(a)) if a.is_finite() => Ok(a),
            (Some(_), Some(_)) | (None, None) => Err(Error::validation(
                "guess",
                "give exactly one of peak_intensity_wcm2 and amplitude_au",
            )),
            _ => Err(Error::validation("guess", "amplitude must be finite and intensity non-negative")),
        }
    }

    pub fn sigma_au(&self) -> Result<f64> {
        if !(self.fwhm_fs.is_finite() && self.fwhm_fs > 0.0) {
            return Err(Error::validation("guess.fwhm_fs", "must be positive"));
        }
        Ok(fwhm_to_sigma(UNITS.fs_to_au(self.fwhm_fs)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub method: Method,
    /// Penalty weight, quoted per `penalty_field_unit`^(2n).
    pub lambda: f64,
    #[serde(default)]
    pub penalty_field_unit: PenaltyFieldUnit,
    pub iterations: usize,
    #[serde(default = "default_stagnation_eps")]
    pub stagnation_eps: f64,
    #[serde(default)]
    pub reference: ReferencePolicy,
    /// Drop initial-ensemble members below this weight.
    #[serde(default)]
    pub population_cutoff: f64,
}

fn default_stagnation_eps() -> f64 {
    DEFAULT_STAGNATION_EPS
}

impl OptimizerConfig {
    /// λ converted to atomic units.
    pub fn lambda_au(&self) -> f64 {
        self.lambda * self.penalty_field_unit.lambda_scale(self.method.exponent() as i32)
    }

    pub fn settings(&self) -> Result<Settings> {
        let mut s = Settings::new(self.method, self.lambda_au(), self.reference, self.iterations)?;
        if !(self.stagnation_eps.is_finite() && self.stagnation_eps >= 0.0) {
            return Err(Error::validation("optimizer.stagnation_eps", "must be non-negative"));
        }
        s.stagnation_eps = self.stagnation_eps;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Write every `stride`-th time sample to dynamics.csv.
    pub stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { stride: 16 }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.molecule.params()?;
        if !(self.time.t_final_tper.is_finite() && self.time.t_final_tper > 0.0) {
            return Err(Error::validation("time.t_final_tper", "must be positive"));
        }
        if self.time.n_steps == 0 {
            return Err(Error::validation("time.n_steps", "must be at least 1"));
        }
        if self.output.stride == 0 {
            return Err(Error::validation("output.stride", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.optimizer.population_cutoff) {
            return Err(Error::validation("optimizer.population_cutoff", "must lie in [0, 1)"));
        }
        let names = self.model.channel_names();
        for g in &self.guess {
            if !names.contains(&g.channel.as_str()) {
                return Err(Error::validation(
                    "guess.channel",
                    format!("`{}` is not one of {:?}", g.channel, names),
                ));
            }
            g.amplitude()?;
            g.sigma_au()?;
            if !g.center_tper.is_finite() {
                return Err(Error::validation("guess.center_tper", "must be finite"));
            }
        }
        self.optimizer.settings()?;
        if let Some(scan) = &self.scan {
            if scan.lambdas.is_empty() || scan.lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
                return Err(Error::validation("scan.lambdas", "must be a non-empty list of positive weights"));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<MoleculeParams> {
        self.molecule.params()
    }

    pub fn grid(&self, params: &MoleculeParams) -> Result<TimeGrid> {
        TimeGrid::new(self.time.t_final_tper * params.rotational_period(), self.time.n_steps)
    }

    pub fn build_model(&self, params: &MoleculeParams) -> Result<HamiltonianModel> {
        HamiltonianModel::build(self.model, params, &self.basis.basis()?)
    }

    /// Sum of the configured Gaussians, sampled at step midpoints.
    pub fn guess_field(&self, params: &MoleculeParams, grid: &TimeGrid) -> Result<FieldTrace> {
        let names = self.model.channel_names();
        let t_per = params.rotational_period();
        let pulses = self
            .guess
            .iter()
            .map(|g| {
                let c = names.iter().position(|n| *n == g.channel).ok_or_else(|| {
                    Error::validation("guess.channel", format!("unknown channel `{}`", g.channel))
                })?;
                Ok((c, g.amplitude()?, g.center_tper * t_per, g.sigma_au()?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FieldTrace::from_fn(grid, names.len(), |c, t| {
            pulses
                .iter()
                .filter(|p| p.0 == c)
                .map(|&(_, a, t0, s)| a * (-(t - t0).powi(2) / (2.0 * s * s)).exp())
                .sum()
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
name = "sample"

[basis]
j_max = 15
m = 0

[model]
kind = "z_full"

[time]
t_final_tper = 1.0
n_steps = 4096

[task]
kind = "orientation"
j_f = 4

[[guess]]
channel = "z"
peak_intensity_wcm2 = 1e12
center_tper = 0.2
fwhm_fs = 144.0

[optimizer]
method = "krotov"
lambda = 5e-2
penalty_field_unit = "V/A"
iterations = 20

[scan]
lambdas = [5e-1, 5e-2]
"#;

    #[test]
    fn round_trip_is_identity() {
        let a = RunConfig::parse(SAMPLE).unwrap();
        let b = RunConfig::parse(&a.to_toml().unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = SAMPLE.replace("j_max = 15", "j_max = 15\nl_max = 3");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("l_max"), "{err}");
    }

    #[test]
    fn parse_error_reports_line() {
        let text = SAMPLE.replace("n_steps = 4096", "n_steps = \"many\"");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn conversions_match_hand_values() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        let amp = cfg.guess[0].amplitude().unwrap();
        assert!((amp - 5.338e-3).abs() < 1e-6);
        let sigma_fs = UNITS.au_to_fs(cfg.guess[0].sigma_au().unwrap());
        assert!((sigma_fs - 61.15).abs() < 0.01);
        let p = cfg.params().unwrap();
        let tf = cfg.grid(&p).unwrap().t_final();
        assert!((tf / 3.571e5 - 1.0).abs() < 1e-3);
        assert!((UNITS.au_to_fs(tf) / 1000.0 - 8.64).abs() < 0.01);
        assert!((cfg.optimizer.lambda_au() / 5e-2 - 2644.2).abs() < 0.1);
    }

    #[test]
    fn validation_names_the_field() {
        let text = SAMPLE.replace("channel = \"z\"", "channel = \"x\"");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("guess.channel"), "{err}");
        let text = SAMPLE.replace("peak_intensity_wcm2 = 1e12", "peak_intensity_wcm2 = 1e12\namplitude_au = 1e-3");
        assert!(RunConfig::parse(&text).is_err());
    }
}
