//! The `ppc-bundle/1` model document and its loaded, threshold-resolved
//! runtime form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ppc::{DetectabilityCurve, LogEccentricityCurve, PcCurve};
use crate::satisfaction::{ChannelThresholds, SatisfactionConfig};
use crate::sdt::{self, DetectionIndices};
use crate::setting::Setting;
use crate::surface::{CurveFamily, GridGeometry, SurfaceRenderer, TimeCurves};

pub const BUNDLE_SCHEMA: &str = "ppc-bundle/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingModel {
    pub setting: Setting,
    pub time: PcCurve,
    pub eye_movements: PcCurve,
    pub detectability: DetectabilityCurve,
    pub eccentricity: TimeCurves,
    /// Informational copy of the thresholds at the bundle's satisfaction
    /// config; recomputed on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<ChannelThresholds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleDocument {
    pub schema: String,
    pub geometry: GridGeometry,
    pub satisfaction: SatisfactionConfig,
    pub settings: Vec<SettingModel>,
}

impl BundleDocument {
    pub fn new(geometry: GridGeometry, satisfaction: SatisfactionConfig, settings: Vec<SettingModel>) -> Self {
        Self { schema: BUNDLE_SCHEMA.to_string(), geometry, satisfaction, settings }
    }

    pub fn parse(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            schema: String,
        }
        let header: Header = serde_json::from_str(text).map_err(|e| Error::Parse(format!("bundle: {e}")))?;
        if header.schema != BUNDLE_SCHEMA {
            return Err(Error::UnsupportedVersion { expected: BUNDLE_SCHEMA, found: header.schema });
        }
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("bundle: {e}")))
    }

    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }

    /// Fill the informational threshold table, failing on any unattainable
    /// setting.
    pub fn with_thresholds(mut self) -> Result<Self> {
        for entry in &mut self.settings {
            entry.thresholds = Some(
                thresholds_for(entry, &self.satisfaction)
                    .map_err(|e| Error::InvalidInput(format!("{}: {e}", entry.setting)))?,
            );
        }
        Ok(self)
    }
}

fn thresholds_for(entry: &SettingModel, cfg: &SatisfactionConfig) -> Result<ChannelThresholds> {
    ChannelThresholds::from_curves(&entry.time, &entry.eye_movements, &entry.detectability, cfg)
}

fn check_pc_max(curve: &PcCurve, setting: &Setting) -> Result<()> {
    let expected = sdt::pc_from_indices(DetectionIndices::new(curve.dprime.alpha, curve.lambda), curve.weights);
    if (expected - curve.pc_max).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "{setting}: stored pc_max {} disagrees with the curve limit {expected}",
            curve.pc_max
        )));
    }
    Ok(())
}

/// Runtime model for one setting.
#[derive(Debug, Clone)]
pub struct ResolvedSetting {
    pub model: SettingModel,
    pub thresholds: ChannelThresholds,
}

/// A loaded bundle with thresholds computed at the active satisfaction
/// config. Immutable once built; share behind an `Arc`.
#[derive(Debug, Clone)]
pub struct Model {
    pub geometry: GridGeometry,
    pub satisfaction: SatisfactionConfig,
    settings: BTreeMap<Setting, ResolvedSetting>,
    rejected: Vec<(Setting, String)>,
    family: CurveFamily,
    renderer: SurfaceRenderer,
    decimation: u32,
}

impl Model {
    pub fn load(text: &str) -> Result<Self> {
        Self::from_document(BundleDocument::parse(text)?, None, 1)
    }

    /// Resolve thresholds; `satisfaction` overrides the bundle's config and
    /// `decimation` coarsens the surface grid.
    pub fn from_document(doc: BundleDocument, satisfaction: Option<SatisfactionConfig>, decimation: u32) -> Result<Self> {
        let satisfaction = satisfaction.unwrap_or(doc.satisfaction);
        satisfaction.validate()?;
        let geometry = doc.geometry.decimated(decimation)?;
        let mut settings = BTreeMap::new();
        let mut rejected = Vec::new();
        let mut family = CurveFamily::new();
        for entry in doc.settings {
            let setting = entry.setting;
            if settings.contains_key(&setting) {
                return Err(Error::InvalidInput(format!("duplicate setting {setting}")));
            }
            check_pc_max(&entry.time, &setting)?;
            check_pc_max(&entry.eye_movements, &setting)?;
            family.insert(setting, entry.eccentricity.clone());
            match thresholds_for(&entry, &satisfaction) {
                Ok(thresholds) => {
                    settings.insert(setting, ResolvedSetting { model: entry, thresholds });
                }
                Err(e) => rejected.push((setting, e.to_string())),
            }
        }
        Ok(Self { renderer: SurfaceRenderer::new(geometry), geometry, satisfaction, settings, rejected, family, decimation })
    }

    pub fn setting(&self, setting: &Setting) -> Result<&ResolvedSetting> {
        self.settings.get(setting).ok_or(Error::UnknownSetting(*setting))
    }

    pub fn settings(&self) -> impl Iterator<Item = &ResolvedSetting> {
        self.settings.values()
    }

    /// Settings dropped at load time because a threshold was unattainable.
    pub fn rejected(&self) -> &[(Setting, String)] {
        &self.rejected
    }

    pub fn family(&self) -> &CurveFamily {
        &self.family
    }

    pub fn renderer(&self) -> &SurfaceRenderer {
        &self.renderer
    }

    pub fn decimation(&self) -> u32 {
        self.decimation
    }

    /// Map a full-resolution stimulus position onto the (possibly
    /// decimated) surface grid, clamped to its bounds.
    pub fn to_grid(&self, x_px: f64, y_px: f64) -> (f64, f64) {
        let d = self.decimation as f64;
        (
            (x_px / d).clamp(0.0, (self.geometry.width_px - 1) as f64),
            (y_px / d).clamp(0.0, (self.geometry.height_px - 1) as f64),
        )
    }
}

/// Convenience for building eccentricity families in code.
pub fn time_curves(points: &[(f64, f64, f64)]) -> Result<TimeCurves> {
    TimeCurves::new(
        points
            .iter()
            .map(|&(time_condition_ms, alpha_e, beta_e)| LogEccentricityCurve { alpha_e, beta_e, time_condition_ms })
            .collect(),
    )
}
