//! Electromagnetic material records, loss conversion and the tissue table.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::EPS0;
use crate::error::{ensure_positive, invalid, Error, Result};

/// Dielectric loss, given either as a loss tangent or directly as a conductivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Dimensionless loss tangent, converted to a conductivity at a reference frequency.
    TanDelta(f64),
    /// Conductivity in S/m, frequency independent.
    Sigma(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    pub eps_r: f64,
    pub loss: Loss,
    /// Mass density in kg/m³; required for tissues.
    pub density: Option<f64>,
    pub is_conductor: bool,
    /// Cells of this material take part in SAR evaluation.
    pub is_tissue: bool,
}

impl Material {
    pub fn dielectric(name: &str, eps_r: f64, tan_delta: f64) -> Self {
        Self {
            name: name.to_string(),
            eps_r,
            loss: Loss::TanDelta(tan_delta),
            density: None,
            is_conductor: false,
            is_tissue: false,
        }
    }

    pub fn tissue(name: &str, eps_r: f64, sigma: f64, density: f64) -> Self {
        Self {
            name: name.to_string(),
            eps_r,
            loss: Loss::Sigma(sigma),
            density: Some(density),
            is_conductor: false,
            is_tissue: true,
        }
    }

    /// Conductor with a finite bulk conductivity (used by the optional resistive-sheet mode).
    pub fn conductor(name: &str, sigma: f64) -> Self {
        Self {
            name: name.to_string(),
            eps_r: 1.0,
            loss: Loss::Sigma(sigma),
            density: None,
            is_conductor: true,
            is_tissue: false,
        }
    }

    pub fn vacuum() -> Self {
        Self {
            name: "vacuum".to_string(),
            eps_r: 1.0,
            loss: Loss::Sigma(0.0),
            density: None,
            is_conductor: false,
            is_tissue: false,
        }
    }

    /// Alias of vacuum, kept separate so scene dumps read naturally.
    pub fn air() -> Self {
        Self {
            name: "air".to_string(),
            ..Self::vacuum()
        }
    }

    pub fn pec() -> Self {
        Self::conductor("pec", f64::INFINITY)
    }

    /// ShieldIt conductive textile used for the ground sheet.
    pub fn shieldit() -> Self {
        Self::conductor("shieldit", 1.18e5)
    }

    /// Copper cladding of the PCB.
    pub fn copper() -> Self {
        Self::conductor("copper", 5.8e7)
    }

    pub fn felt() -> Self {
        Self::dielectric("felt", 1.4, 0.044)
    }

    /// RT/duroid 5880 substrate.
    pub fn rogers_5880() -> Self {
        Self::dielectric("rogers_5880", 2.2, 0.0009)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive(&format!("eps_r of {}", self.name), self.eps_r)?;
        match self.loss {
            Loss::TanDelta(t) | Loss::Sigma(t) if t < 0.0 || t.is_nan() => {
                return Err(Error::InvalidMaterial(format!(
                    "{}: loss must be non-negative, got {t}",
                    self.name
                )))
            }
            _ => {}
        }
        if self.is_tissue {
            match self.density {
                Some(rho) if rho > 0.0 && rho.is_finite() => {}
                _ => {
                    return Err(Error::InvalidMaterial(format!(
                        "tissue {} needs a positive density",
                        self.name
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Converts the material loss into a conductivity at `f_ref` (Hz).
///
/// Loss tangents map to σ = 2π·f·ε₀·ε_r·tanδ; conductivities pass through unchanged.
pub fn effective_conductivity(material: &Material, f_ref: f64) -> Result<f64> {
    if !(f_ref.is_finite() && f_ref > 0.0) {
        return Err(invalid(format!("reference frequency must be positive, got {f_ref}")));
    }
    Ok(match material.loss {
        Loss::Sigma(s) => s,
        Loss::TanDelta(t) => 2.0 * PI * f_ref * EPS0 * material.eps_r * t,
    })
}

/// One dielectric property set of a tissue, valid around `frequency` (Hz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueProperties {
    pub frequency: f64,
    pub eps_r: f64,
    pub sigma: f64,
    pub density: f64,
}

/// Skin, fat and muscle properties; each tissue may carry several frequency points.
///
/// Skin and fat defaults are engineering values at 2.45 GHz. Muscle carries the
/// 2.4 GHz and 5.6 GHz points. A lookup returns the entry closest to the
/// requested frequency (ties go to the lower frequency).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TissueTable {
    pub skin: Vec<TissueProperties>,
    pub fat: Vec<TissueProperties>,
    pub muscle: Vec<TissueProperties>,
}

impl Default for TissueTable {
    fn default() -> Self {
        Self {
            skin: vec![TissueProperties {
                frequency: 2.45e9,
                eps_r: 38.0,
                sigma: 1.46,
                density: 1109.0,
            }],
            fat: vec![TissueProperties {
                frequency: 2.45e9,
                eps_r: 5.28,
                sigma: 0.10,
                density: 911.0,
            }],
            muscle: vec![
                TissueProperties {
                    frequency: 2.4e9,
                    eps_r: 52.7,
                    sigma: 1.95,
                    density: 1090.0,
                },
                TissueProperties {
                    frequency: 5.6e9,
                    eps_r: 48.2,
                    sigma: 6.0,
                    density: 1090.0,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tissue {
    Skin,
    Fat,
    Muscle,
}

impl Tissue {
    pub fn name(self) -> &'static str {
        match self {
            Tissue::Skin => "skin",
            Tissue::Fat => "fat",
            Tissue::Muscle => "muscle",
        }
    }
}

impl TissueTable {
    fn entries(&self, tissue: Tissue) -> &[TissueProperties] {
        match tissue {
            Tissue::Skin => &self.skin,
            Tissue::Fat => &self.fat,
            Tissue::Muscle => &self.muscle,
        }
    }

    pub fn properties(&self, tissue: Tissue, frequency: f64) -> Result<TissueProperties> {
        let entries = self.entries(tissue);
        let mut best: Option<&TissueProperties> = None;
        for e in entries {
            let better = match best {
                None => true,
                Some(b) => {
                    let (de, db) = ((e.frequency - frequency).abs(), (b.frequency - frequency).abs());
                    de < db || (de == db && e.frequency < b.frequency)
                }
            };
            if better {
                best = Some(e);
            }
        }
        best.copied()
            .ok_or_else(|| Error::InvalidMaterial(format!("no {} entry in tissue table", tissue.name())))
    }

    pub fn material(&self, tissue: Tissue, frequency: f64) -> Result<Material> {
        let p = self.properties(tissue, frequency)?;
        let m = Material::tissue(tissue.name(), p.eps_r, p.sigma, p.density);
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for t in [Tissue::Skin, Tissue::Fat, Tissue::Muscle] {
            for e in self.entries(t) {
                Material::tissue(t.name(), e.eps_r, e.sigma, e.density).validate()?;
                ensure_positive("tissue table frequency", e.frequency)?;
            }
            if self.entries(t).is_empty() {
                return Err(Error::InvalidMaterial(format!("tissue table has no {} entry", t.name())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values evaluated by hand: 2π·f·ε0·εr·tanδ.
    #[test]
    fn felt_conductivity_at_2g45() {
        let s = effective_conductivity(&Material::felt(), 2.45e9).unwrap();
        assert!((s / 8.40e-3 - 1.0).abs() < 0.01, "{s}");
    }

    #[test]
    fn rogers_conductivity_at_2g45() {
        let s = effective_conductivity(&Material::rogers_5880(), 2.45e9).unwrap();
        assert!((s / 2.70e-4 - 1.0).abs() < 0.01, "{s}");
    }

    #[test]
    fn lossless_and_passthrough() {
        let m = Material::dielectric("x", 3.0, 0.0);
        assert_eq!(effective_conductivity(&m, 2.45e9).unwrap(), 0.0);
        let t = Material::tissue("muscle", 52.7, 1.95, 1090.0);
        assert_eq!(effective_conductivity(&t, 5.6e9).unwrap(), 1.95);
    }

    #[test]
    fn rejects_non_positive_frequency() {
        assert!(matches!(
            effective_conductivity(&Material::felt(), 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(effective_conductivity(&Material::felt(), -1.0).is_err());
    }

    #[test]
    fn muscle_band_selection() {
        let t = TissueTable::default();
        let lo = t.properties(Tissue::Muscle, 2.45e9).unwrap();
        assert_eq!((lo.eps_r, lo.sigma), (52.7, 1.95));
        let hi = t.properties(Tissue::Muscle, 5.5e9).unwrap();
        assert_eq!((hi.eps_r, hi.sigma), (48.2, 6.0));
        // equidistant picks the lower entry
        assert_eq!(t.properties(Tissue::Muscle, 4.0e9).unwrap().eps_r, 52.7);
    }

    #[test]
    fn tissue_needs_density() {
        let mut m = Material::tissue("skin", 38.0, 1.46, 1109.0);
        m.density = None;
        assert!(matches!(m.validate(), Err(Error::InvalidMaterial(_))));
    }

    proptest::proptest! {
        #[test]
        fn conductivity_is_linear(t in 0.0f64..0.1, f in 1e8f64..1e10, k in 0.1f64..10.0) {
            let a = effective_conductivity(&Material::dielectric("d", 2.0, t), f).unwrap();
            let b = effective_conductivity(&Material::dielectric("d", 2.0, k * t), f).unwrap();
            let c = effective_conductivity(&Material::dielectric("d", 2.0, t), k * f).unwrap();
            proptest::prop_assert!((b - k * a).abs() <= 1e-12 * b.abs().max(1e-300));
            proptest::prop_assert!((c - k * a).abs() <= 1e-12 * c.abs().max(1e-300));
        }
    }
}
