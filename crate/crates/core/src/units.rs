//! Conversions between laboratory units and atomic units.

use serde::{Deserialize, Serialize};

/// Conversion constants. All internal computation is in atomic units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitContext {
    /// Wavenumbers per Hartree.
    pub cm_per_hartree: f64,
    /// Femtoseconds per atomic unit of time.
    pub fs_per_au: f64,
    /// Boltzmann constant in Hartree per kelvin.
    pub kb_hartree_per_k: f64,
    /// Intensity (W/cm²) of a field with unit atomic amplitude.
    pub intensity_per_au2: f64,
    /// V/Å per atomic unit of field.
    pub volt_per_angstrom_per_au: f64,
}

pub const UNITS: UnitContext = UnitContext {
    cm_per_hartree: 219474.63,
    fs_per_au: 0.0241888,
    kb_hartree_per_k: 3.16681e-6,
    intensity_per_au2: 3.50945e16,
    volt_per_angstrom_per_au: 51.4220674763,
};

impl Default for UnitContext {
    fn default() -> Self {
        UNITS
    }
}

impl UnitContext {
    pub fn cm_to_hartree(&self, cm: f64) -> f64 {
        cm / self.cm_per_hartree
    }

    pub fn hartree_to_cm(&self, e: f64) -> f64 {
        e * self.cm_per_hartree
    }

    pub fn fs_to_au(&self, fs: f64) -> f64 {
        fs / self.fs_per_au
    }

    pub fn au_to_fs(&self, t: f64) -> f64 {
        t * self.fs_per_au
    }

    pub fn kelvin_to_hartree(&self, t: f64) -> f64 {
        t * self.kb_hartree_per_k
    }

    pub fn hartree_to_kelvin(&self, e: f64) -> f64 {
        e / self.kb_hartree_per_k
    }

    /// Peak field amplitude for a peak intensity in W/cm².
    pub fn intensity_to_field(&self, intensity: f64) -> f64 {
        (intensity / self.intensity_per_au2).sqrt()
    }

    pub fn field_to_intensity(&self, e: f64) -> f64 {
        e * e * self.intensity_per_au2
    }
}

/// Field unit in which the running cost penalty is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PenaltyFieldUnit {
    #[default]
    #[serde(rename = "au")]
    Atomic,
    #[serde(rename = "V/A")]
    VoltPerAngstrom,
}

impl PenaltyFieldUnit {
    /// Factor converting a penalty weight quoted per (unit)^power into atomic units.
    pub fn lambda_scale(self, power: i32) -> f64 {
        match self {
            PenaltyFieldUnit::Atomic => 1.0,
            PenaltyFieldUnit::VoltPerAngstrom => UNITS.volt_per_angstrom_per_au.powi(power),
        }
    }
}

/// Standard deviation of a Gaussian from its full width at half maximum.
pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn round_trips() {
        let u = UNITS;
        for x in [1e-3, 0.7, 3.5, 1.9312, 1e4] {
            assert_relative_eq!(u.hartree_to_cm(u.cm_to_hartree(x)), x, max_relative = 1e-12);
            assert_relative_eq!(u.au_to_fs(u.fs_to_au(x)), x, max_relative = 1e-12);
            assert_relative_eq!(u.hartree_to_kelvin(u.kelvin_to_hartree(x)), x, max_relative = 1e-12);
            assert_relative_eq!(u.field_to_intensity(u.intensity_to_field(x)), x, max_relative = 1e-12);
        }
    }

    #[test]
    fn peak_intensity_to_amplitude() {
        assert_relative_eq!(UNITS.intensity_to_field(1e12), 5.338023e-3, max_relative = 1e-6);
    }

    #[test]
    fn fwhm_144fs() {
        assert_relative_eq!(fwhm_to_sigma(144.0), 61.151, max_relative = 1e-4);
    }

    #[test]
    fn penalty_scale() {
        assert_eq!(PenaltyFieldUnit::Atomic.lambda_scale(2), 1.0);
        assert_relative_eq!(
            PenaltyFieldUnit::VoltPerAngstrom.lambda_scale(2),
            2644.229,
            max_relative = 1e-6
        );
    }
}
