//! Scenario files: TOML with lengths in mm and frequencies in GHz.

use std::path::Path;

use buttonsim_core::fdtd::{BoundarySpec, ExcitationSpec, FaceKind, StopCriterion};
use buttonsim_core::geometry::{StackupParams, ARM_RADIUS};
use buttonsim_core::link::RadioParams;
use buttonsim_core::material::TissueTable;
use buttonsim_core::voxel::SheetModel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

const MM: f64 = 1e-3;
const GHZ: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    #[default]
    FreeSpace,
    Chest,
    Arm,
}

impl PhantomKind {
    pub fn label(self) -> &'static str {
        match self {
            PhantomKind::FreeSpace => "free_space",
            PhantomKind::Chest => "chest",
            PhantomKind::Arm => "arm",
        }
    }
}

/// Antenna stack-up in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AntennaConfig {
    pub ground_size_mm: f64,
    pub ground_thickness_mm: f64,
    pub ground_sigma: f64,
    pub felt_thickness_mm: f64,
    pub felt_eps_r: f64,
    pub felt_tan_delta: f64,
    pub air_gap_mm: f64,
    pub substrate_thickness_mm: f64,
    pub substrate_radius_mm: f64,
    pub substrate_eps_r: f64,
    pub substrate_tan_delta: f64,
    pub patch_radius_mm: f64,
    pub top_patch_offset_mm: [f64; 2],
    pub bottom_patch_radius_mm: f64,
    pub feed_offset_mm: f64,
    pub feed_angle_deg: f64,
    pub probe_diameter_mm: f64,
    pub shorting_via: bool,
    pub via_diameter_mm: f64,
    pub via_position_mm: [f64; 2],
    pub slot_length_mm: f64,
    pub slot_width_mm: f64,
    pub slot_offset_mm: [f64; 2],
    pub stair_steps: u32,
    pub stair_step_mm: f64,
    pub port_gap_mm: f64,
    pub port_impedance_ohm: f64,
    pub sheet_model: SheetModel,
}

impl Default for AntennaConfig {
    fn default() -> Self {
        let p = StackupParams::default();
        let mm2 = |v: [f64; 2]| [v[0] * 1e3, v[1] * 1e3];
        Self {
            ground_size_mm: p.ground_size * 1e3,
            ground_thickness_mm: p.ground_thickness * 1e3,
            ground_sigma: p.ground_sigma,
            felt_thickness_mm: p.felt_thickness * 1e3,
            felt_eps_r: p.felt_eps_r,
            felt_tan_delta: p.felt_tan_delta,
            air_gap_mm: p.air_gap * 1e3,
            substrate_thickness_mm: p.substrate_thickness * 1e3,
            substrate_radius_mm: p.substrate_radius * 1e3,
            substrate_eps_r: p.substrate_eps_r,
            substrate_tan_delta: p.substrate_tan_delta,
            patch_radius_mm: p.patch_radius * 1e3,
            top_patch_offset_mm: mm2(p.top_patch_offset),
            bottom_patch_radius_mm: p.bottom_patch_radius * 1e3,
            feed_offset_mm: p.feed_offset * 1e3,
            feed_angle_deg: p.feed_angle_deg,
            probe_diameter_mm: p.probe_diameter * 1e3,
            shorting_via: p.shorting_via,
            via_diameter_mm: p.via_diameter * 1e3,
            via_position_mm: mm2(p.via_position),
            slot_length_mm: p.slot_length * 1e3,
            slot_width_mm: p.slot_width * 1e3,
            slot_offset_mm: mm2(p.slot_offset),
            stair_steps: p.stair_steps,
            stair_step_mm: p.stair_step * 1e3,
            port_gap_mm: p.port_gap * 1e3,
            port_impedance_ohm: p.port_impedance,
            sheet_model: SheetModel::Pec,
        }
    }
}

impl AntennaConfig {
    pub fn to_params(&self) -> StackupParams {
        let si2 = |v: [f64; 2]| [v[0] / 1e3, v[1] / 1e3];
        StackupParams {
            ground_size: self.ground_size_mm / 1e3,
            ground_thickness: self.ground_thickness_mm / 1e3,
            ground_sigma: self.ground_sigma,
            felt_thickness: self.felt_thickness_mm / 1e3,
            felt_eps_r: self.felt_eps_r,
            felt_tan_delta: self.felt_tan_delta,
            air_gap: self.air_gap_mm / 1e3,
            substrate_thickness: self.substrate_thickness_mm / 1e3,
            substrate_radius: self.substrate_radius_mm / 1e3,
            substrate_eps_r: self.substrate_eps_r,
            substrate_tan_delta: self.substrate_tan_delta,
            patch_radius: self.patch_radius_mm / 1e3,
            top_patch_offset: si2(self.top_patch_offset_mm),
            bottom_patch_radius: self.bottom_patch_radius_mm / 1e3,
            feed_offset: self.feed_offset_mm / 1e3,
            feed_angle_deg: self.feed_angle_deg,
            probe_diameter: self.probe_diameter_mm / 1e3,
            shorting_via: self.shorting_via,
            via_diameter: self.via_diameter_mm / 1e3,
            via_position: si2(self.via_position_mm),
            slot_length: self.slot_length_mm / 1e3,
            slot_width: self.slot_width_mm / 1e3,
            slot_offset: si2(self.slot_offset_mm),
            stair_steps: self.stair_steps,
            stair_step: self.stair_step_mm / 1e3,
            port_gap: self.port_gap_mm / 1e3,
            port_impedance: self.port_impedance_ohm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Cell size (dx, dy, dz) in mm.
    pub cell_mm: [f64; 3],
    /// Free space kept between the antenna and the absorbing layer.
    pub padding_mm: f64,
    /// Tissue depth kept inside the grid below the skin or arm surface.
    pub body_depth_mm: f64,
    pub pml_cells: usize,
    /// Cells between the absorbing layer and the far-field surface.
    pub surface_margin_cells: usize,
    pub memory_budget_mb: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            cell_mm: [1.0, 1.0, 0.5],
            padding_mm: 10.0,
            body_depth_mm: 25.0,
            pml_cells: 10,
            surface_margin_cells: 3,
            memory_budget_mb: 4096.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_steps: usize,
    pub energy_floor_db: f64,
    pub courant_safety: f64,
    pub excitation_center_ghz: f64,
    pub excitation_bandwidth_ghz: f64,
    pub excitation_delay: f64,
    pub boundary: FaceKind,
    pub cpml_order: f64,
    pub cpml_sigma_scale: f64,
    pub cpml_kappa_max: f64,
    pub cpml_alpha_max: f64,
    /// Run once per band with tissue properties at that band's reference
    /// frequency; otherwise one run at the analysis band centre.
    pub tissue_per_band: bool,
    /// Frequencies (GHz) whose tissue properties are used for each band run.
    pub tissue_reference_ghz: [f64; 2],
    /// Boundary between the lower and upper band runs (GHz).
    pub band_split_ghz: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let exc = ExcitationSpec::default();
        let stop = StopCriterion::default();
        let b = BoundarySpec::default();
        Self {
            max_steps: stop.max_steps,
            energy_floor_db: stop.energy_floor_db,
            courant_safety: buttonsim_core::fdtd::DEFAULT_COURANT_SAFETY,
            excitation_center_ghz: exc.f_center / GHZ,
            excitation_bandwidth_ghz: exc.bandwidth / GHZ,
            excitation_delay: exc.delay,
            boundary: FaceKind::Cpml,
            cpml_order: b.order,
            cpml_sigma_scale: b.sigma_scale,
            cpml_kappa_max: b.kappa_max,
            cpml_alpha_max: b.alpha_max,
            tissue_per_band: true,
            tissue_reference_ghz: [2.45, 5.6],
            band_split_ghz: 4.0,
        }
    }
}

impl SolverConfig {
    pub fn excitation(&self) -> ExcitationSpec {
        ExcitationSpec {
            f_center: self.excitation_center_ghz * GHZ,
            bandwidth: self.excitation_bandwidth_ghz * GHZ,
            amplitude: 1.0,
            delay: self.excitation_delay,
        }
    }

    pub fn boundary(&self, pml_cells: usize) -> BoundarySpec {
        BoundarySpec {
            faces: [self.boundary; 6],
            cpml_cells: pml_cells,
            order: self.cpml_order,
            sigma_scale: self.cpml_sigma_scale,
            kappa_max: self.cpml_kappa_max,
            alpha_max: self.cpml_alpha_max,
        }
    }

    pub fn stop(&self) -> StopCriterion {
        StopCriterion {
            max_steps: self.max_steps,
            energy_floor_db: self.energy_floor_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandConfig {
    pub f_min_ghz: f64,
    pub f_max_ghz: f64,
    pub points: usize,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            f_min_ghz: 1.0,
            f_max_ghz: 7.0,
            points: 601,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub s11: bool,
    pub resonance_threshold_db: f64,
    /// Pattern frequencies (GHz); free-space scenarios only.
    pub pattern_ghz: Vec<f64>,
    pub sar: bool,
    pub sar_ghz: f64,
    pub link: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            s11: true,
            resonance_threshold_db: -10.0,
            pattern_ghz: Vec::new(),
            sar: false,
            sar_ghz: 2.45,
            link: false,
        }
    }
}

/// Radio parameters for the range table; `tx_gain_dbi` may be taken from the
/// simulated directivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub tx_power_dbm: f64,
    pub tx_gain_dbi: f64,
    /// Replace `tx_gain_dbi` with the simulated lower-band directivity when a pattern is available.
    pub gain_from_pattern: bool,
    pub rx_gain_dbi: f64,
    pub frequency_ghz: f64,
    pub rx_sensitivity_dbm: f64,
    pub path_loss_exponent: f64,
    pub reference_distance_m: f64,
    pub fade_margin_db: f64,
    pub distances_m: Vec<f64>,
}

impl Default for LinkConfig {
    fn default() -> Self {
        let p = RadioParams::wearable_preset(2.0);
        Self {
            tx_power_dbm: p.tx_power_dbm,
            tx_gain_dbi: p.tx_gain_dbi,
            gain_from_pattern: true,
            rx_gain_dbi: p.rx_gain_dbi,
            frequency_ghz: p.frequency_hz / GHZ,
            rx_sensitivity_dbm: p.rx_sensitivity_dbm,
            path_loss_exponent: p.path_loss_exponent,
            reference_distance_m: p.reference_distance_m,
            fade_margin_db: p.fade_margin_db,
            distances_m: vec![1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 75.0, 100.0],
        }
    }
}

impl LinkConfig {
    pub fn radio(&self, tx_gain_dbi: f64) -> RadioParams {
        RadioParams {
            tx_power_dbm: self.tx_power_dbm,
            tx_gain_dbi,
            rx_gain_dbi: self.rx_gain_dbi,
            frequency_hz: self.frequency_ghz * GHZ,
            rx_sensitivity_dbm: self.rx_sensitivity_dbm,
            path_loss_exponent: self.path_loss_exponent,
            reference_distance_m: self.reference_distance_m,
            fade_margin_db: self.fade_margin_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Dotted path of a numeric scenario field, e.g. `antenna.feed_offset_mm`.
    pub parameter: String,
    pub values: Vec<f64>,
    #[serde(default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

fn default_gap() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub phantom: PhantomKind,
    /// Antenna-to-body separation (mm).
    #[serde(default = "default_gap")]
    pub gap_mm: f64,
    /// Bend radius for the arm (mm); resolved to arm radius + gap.
    #[serde(default)]
    pub bend_radius_mm: Option<f64>,
    #[serde(default)]
    pub antenna: AntennaConfig,
    #[serde(default)]
    pub tissues: TissueTable,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub band: BandConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

fn parse_error(path: &str, msg: impl Into<String>) -> CliError {
    CliError::Parse(format!("{path}: {}", msg.into()))
}

impl Scenario {
    /// Parses and validates scenario text; `origin` names the source in messages.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, CliError> {
        let mut s: Scenario = toml::from_str(text).map_err(|e| parse_error(origin, e.to_string()))?;
        s.resolve(origin)?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| parse_error(&path.display().to_string(), e.to_string()))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// Fills derived values and checks cross-field rules.
    pub fn resolve(&mut self, origin: &str) -> Result<(), CliError> {
        let err = |m: String| Err(parse_error(origin, m));
        if self.name.trim().is_empty() {
            return err("name must not be empty".into());
        }
        if !(self.gap_mm >= 0.0) {
            return err(format!("gap_mm must be non-negative, got {}", self.gap_mm));
        }
        if self.phantom == PhantomKind::Arm {
            let r = ARM_RADIUS / MM + self.gap_mm;
            match self.bend_radius_mm {
                Some(b) if (b - r).abs() > 1e-9 => {
                    return err(format!(
                        "bend_radius_mm = {b} contradicts the arm radius {} mm plus gap {} mm",
                        ARM_RADIUS / MM,
                        self.gap_mm
                    ))
                }
                _ => self.bend_radius_mm = Some(r),
            }
        } else if self.bend_radius_mm.is_some() {
            return err("bend_radius_mm applies only to the arm phantom".into());
        }
        let b = &self.band;
        if !(b.f_min_ghz > 0.0 && b.f_max_ghz > b.f_min_ghz && b.points >= 2) {
            return err("band needs 0 < f_min_ghz < f_max_ghz and at least 2 points".into());
        }
        let inside = |f: f64| f >= b.f_min_ghz && f <= b.f_max_ghz;
        for &f in &self.outputs.pattern_ghz {
            if !inside(f) {
                return err(format!(
                    "pattern frequency {f} GHz lies outside the analysis band {}-{} GHz",
                    b.f_min_ghz, b.f_max_ghz
                ));
            }
        }
        if self.outputs.sar && !inside(self.outputs.sar_ghz) {
            return err(format!(
                "SAR frequency {} GHz lies outside the analysis band {}-{} GHz",
                self.outputs.sar_ghz, b.f_min_ghz, b.f_max_ghz
            ));
        }
        if self.outputs.sar && self.phantom == PhantomKind::FreeSpace {
            return err("SAR needs a chest or arm phantom".into());
        }
        if !self.outputs.pattern_ghz.is_empty() && self.phantom != PhantomKind::FreeSpace {
            return err("radiation patterns need a closed vacuum surface and are available in free space only".into());
        }
        if self.grid.cell_mm.iter().any(|c| !(*c > 0.0)) || !(self.grid.padding_mm >= 0.0) {
            return err("grid cells must be positive and padding non-negative".into());
        }
        if self.grid.surface_margin_cells < 1 {
            return err("surface_margin_cells must be at least 1".into());
        }
        let s = &self.solver;
        if s.tissue_per_band && !(s.band_split_ghz > b.f_min_ghz && s.band_split_ghz < b.f_max_ghz) {
            return err("band_split_ghz must lie inside the analysis band".into());
        }
        self.solver.boundary(self.grid.pml_cells).validate().map_err(|e| parse_error(origin, e.to_string()))?;
        self.solver.stop().validate().map_err(|e| parse_error(origin, e.to_string()))?;
        self.solver.excitation().validate().map_err(|e| parse_error(origin, e.to_string()))?;
        self.tissues.validate().map_err(|e| parse_error(origin, e.to_string()))?;
        if self.outputs.link {
            let lk = self.link.radio(self.link.tx_gain_dbi);
            lk.validate().map_err(|e| parse_error(origin, e.to_string()))?;
            if self.link.distances_m.iter().any(|d| *d < self.link.reference_distance_m) {
                return err("link distances must not be below the reference distance".into());
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return err("sweep needs at least one value".into());
            }
            if sw.workers == 0 {
                return err("sweep workers must be at least 1".into());
            }
        }
        Ok(())
    }

    /// Canonical text of the resolved scenario (the sweep block excluded).
    pub fn canonical(&self) -> String {
        let mut s = self.clone();
        s.sweep = None;
        toml::to_string(&s).expect("scenario serialises")
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    /// Copy with a numeric field replaced, addressed by a dotted path.
    pub fn with_parameter(&self, path: &str, value: f64) -> Result<Scenario, CliError> {
        let mut root = toml::Value::try_from(self).map_err(|e| CliError::Parse(e.to_string()))?;
        let sweep_err = |m: String| CliError::Parse(format!("sweep parameter `{path}`: {m}"));
        let mut node = &mut root;
        let parts: Vec<&str> = path.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| sweep_err(format!("`{}` is not a table", parts[..i].join("."))))?;
            node = table
                .get_mut(*part)
                .ok_or_else(|| sweep_err(format!("no field `{part}`")))?;
        }
        *node = match node {
            toml::Value::Float(_) => toml::Value::Float(value),
            toml::Value::Integer(_) => {
                if value.fract() != 0.0 {
                    return Err(sweep_err(format!("integer field cannot take {value}")));
                }
                toml::Value::Integer(value as i64)
            }
            _ => return Err(sweep_err("not a numeric field".into())),
        };
        let mut out: Scenario = root.try_into().map_err(|e: toml::de::Error| sweep_err(e.to_string()))?;
        if path == "gap_mm" {
            // the arm bend follows the gap
            out.bend_radius_mm = None;
        }
        out.resolve(&format!("sweep {path}={value}"))?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = Scenario::from_toml("name = \"fs\"\nphantom = \"free_space\"\n", "test").unwrap();
        assert_eq!(s.grid, GridConfig::default());
        assert_eq!(s.antenna, AntennaConfig::default());
        assert_eq!(s.band.f_min_ghz, 1.0);
        assert_eq!(s.band.f_max_ghz, 7.0);
        assert_eq!(s.gap_mm, 5.0);
        assert!(s.sweep.is_none());
    }

    #[test]
    fn antenna_defaults_round_trip() {
        assert_eq!(AntennaConfig::default().to_params(), StackupParams::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = Scenario::from_toml("name = \"x\"\ncolour = 3\n", "t").unwrap_err();
        assert!(e.to_string().contains("colour"), "{e}");
        let e = Scenario::from_toml("name = \"x\"\n[grid]\ncell = 1\n", "t").unwrap_err();
        assert!(e.to_string().contains("cell"), "{e}");
    }

    #[test]
    fn out_of_band_pattern_is_rejected() {
        let e = Scenario::from_toml("name = \"x\"\n[outputs]\npattern_ghz = [9.0]\n", "t").unwrap_err();
        assert!(e.to_string().contains("outside the analysis band"), "{e}");
    }

    #[test]
    fn arm_bend_radius_follows_gap() {
        let s = Scenario::from_toml("name = \"a\"\nphantom = \"arm\"\ngap_mm = 3\n", "t").unwrap();
        assert_eq!(s.bend_radius_mm, Some(53.0));
        assert!(Scenario::from_toml("name = \"a\"\nphantom = \"arm\"\ngap_mm = 3\nbend_radius_mm = 60\n", "t").is_err());
    }

    #[test]
    fn hash_tracks_every_parameter() {
        let a = Scenario::from_toml("name = \"a\"\n", "t").unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.antenna.feed_offset_mm += 0.5;
        assert_ne!(a.hash(), b.hash());
        let c = a.with_parameter("grid.pml_cells", 12.0).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn sweep_paths_are_checked() {
        let a = Scenario::from_toml("name = \"a\"\n", "t").unwrap();
        assert_eq!(a.with_parameter("gap_mm", 2.0).unwrap().gap_mm, 2.0);
        assert!(a.with_parameter("antenna.nothing", 1.0).is_err());
        assert!(a.with_parameter("name", 1.0).is_err());
        assert!(a.with_parameter("grid.pml_cells", 2.5).is_err());
    }
}
