//! Pipeline configuration, read from a TOML document. Relative paths are
//! taken relative to the document's directory.
//!
//! ```toml
//! [input]
//! ifc = "pavd2.ifc"
//! site = "site.features"
//! schedule = "schedule.csv"
//! visibility = "visibility.txt"
//! function_tags = "tags.txt"
//! built_map = "built.yaml"
//!
//! [model]
//! cut_height = 1.0
//! storey = "NIVEAU 2"
//!
//! [grid]
//! resolution = 0.05
//! bounds = [0.0, 0.0, 60.0, 40.0]
//! map = "out/map.yaml"
//!
//! [transform]
//! scale = 0.9996
//! rotation = 0.3
//! tx = 12.0
//! ty = -4.0
//!
//! [progress]
//! as_of = "2026-10-19"
//! min_cluster_area = 0.05
//!
//! [service]
//! listen = "127.0.0.1:7464"
//! ```

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer};
use thiserror::Error;

use crate::geometry::Rect;
use crate::gis::SimilarityTransform2D;
use crate::grid::{RasterOptions, DEFAULT_MAX_CELLS, DEFAULT_MIN_CLUSTER_AREA, DEFAULT_RESOLUTION};
use crate::progress::{ProgressOptions, DEFAULT_MATCH_THRESHOLD, DEFAULT_OFFICE_TAG};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:7464";
pub const ADDR_ENV: &str = "BIRS_ADDR";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{key}: file {path} does not exist")]
    MissingFile { key: &'static str, path: String },
    #[error("{key}: {message}")]
    Invalid { key: &'static str, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub input: InputConfig,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub transform: TransformConfig,
    pub progress: ProgressConfig,
    pub service: ServiceConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub ifc: Option<PathBuf>,
    pub site: Option<PathBuf>,
    pub schedule: Option<PathBuf>,
    pub visibility: Option<PathBuf>,
    pub function_tags: Option<PathBuf>,
    /// As-built map YAML used by progress reports.
    pub built_map: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Cut plane height above the storey elevation, meters.
    pub cut_height: f64,
    pub storey: Option<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            cut_height: 1.0,
            storey: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub resolution: f64,
    /// `[min_x, min_y, max_x, max_y]`
    pub bounds: Option<[f64; 4]>,
    pub max_cells: usize,
    /// Map YAML served by the service (and written by `grid` by default).
    pub map: Option<PathBuf>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            resolution: DEFAULT_RESOLUTION,
            bounds: None,
            max_cells: DEFAULT_MAX_CELLS,
            map: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformConfig {
    pub scale: f64,
    pub rotation: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig {
            scale: 1.0,
            rotation: 0.0,
            tx: 0.0,
            ty: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProgressConfig {
    #[serde(deserialize_with = "date_or_string")]
    pub as_of: Option<NaiveDate>,
    pub min_cluster_area: f64,
    pub match_threshold: f64,
    pub office_tag: String,
}

impl Default for ProgressConfig {
    fn default() -> Self {
        ProgressConfig {
            as_of: None,
            min_cluster_area: DEFAULT_MIN_CLUSTER_AREA,
            match_threshold: DEFAULT_MATCH_THRESHOLD,
            office_tag: DEFAULT_OFFICE_TAG.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: DEFAULT_LISTEN.to_string(),
        }
    }
}

/// Accepts a TOML date literal or a `YYYY-MM-DD` string.
fn date_or_string<'de, D: Deserializer<'de>>(d: D) -> Result<Option<NaiveDate>, D::Error> {
    let v = toml::Value::deserialize(d)?;
    let text = match v {
        toml::Value::String(s) => s,
        toml::Value::Datetime(dt) => dt.to_string(),
        other => return Err(serde::de::Error::custom(format!("expected a date, got {other}"))),
    };
    parse_date(&text).map(Some).map_err(serde::de::Error::custom)
}

pub fn parse_date(text: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d").map_err(|_| format!("bad date `{text}`, expected YYYY-MM-DD"))
}

impl Config {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Config, ConfigError> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: base_dir.display().to_string(),
            message: e.to_string(),
        })?;
        cfg.rebase(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Config::from_toml(&text, base).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        let i = &mut self.input;
        for p in [
            &mut i.ifc,
            &mut i.site,
            &mut i.schedule,
            &mut i.visibility,
            &mut i.function_tags,
            &mut i.built_map,
            &mut self.grid.map,
        ] {
            fix(p);
        }
    }

    /// Input paths that are set, with their key names.
    pub fn input_paths(&self) -> Vec<(&'static str, &Path)> {
        let i = &self.input;
        [
            ("input.ifc", &i.ifc),
            ("input.site", &i.site),
            ("input.schedule", &i.schedule),
            ("input.visibility", &i.visibility),
            ("input.function_tags", &i.function_tags),
            ("input.built_map", &i.built_map),
        ]
        .into_iter()
        .filter_map(|(k, p)| p.as_deref().map(|p| (k, p)))
        .collect()
    }

    /// Check numeric ranges and that every configured input exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, path) in self.input_paths() {
            if !path.is_file() {
                return Err(ConfigError::MissingFile {
                    key,
                    path: path.display().to_string(),
                });
            }
        }
        let invalid = |key, message: String| Err(ConfigError::Invalid { key, message });
        if !(self.grid.resolution > 0.0 && self.grid.resolution.is_finite()) {
            return invalid(
                "grid.resolution",
                format!("must be positive, got {}", self.grid.resolution),
            );
        }
        if !(self.transform.scale > 0.0 && self.transform.scale.is_finite()) {
            return invalid(
                "transform.scale",
                format!("must be positive, got {}", self.transform.scale),
            );
        }
        if let Some([x0, y0, x1, y1]) = self.grid.bounds {
            if !(x1 > x0 && y1 > y0) {
                return invalid("grid.bounds", "expected [min_x, min_y, max_x, max_y]".into());
            }
        }
        if self.progress.min_cluster_area.is_nan() || self.progress.min_cluster_area < 0.0 {
            return invalid("progress.min_cluster_area", "must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.progress.match_threshold) {
            return invalid("progress.match_threshold", "must be within [0, 1]".into());
        }
        Ok(())
    }

    pub fn transform(&self) -> SimilarityTransform2D {
        let t = &self.transform;
        SimilarityTransform2D {
            scale: t.scale,
            rotation: t.rotation,
            tx: t.tx,
            ty: t.ty,
        }
    }

    pub fn raster_options(&self) -> RasterOptions {
        RasterOptions {
            resolution: self.grid.resolution,
            bounds: self.grid.bounds.map(|[a, b, c, d]| Rect::new(a, b, c, d)),
            max_cells: self.grid.max_cells,
        }
    }

    pub fn progress_options(&self) -> ProgressOptions {
        ProgressOptions {
            match_threshold: self.progress.match_threshold,
            office_tag: self.progress.office_tag.clone(),
        }
    }

    /// Listen address: `BIRS_ADDR` wins over the configured value.
    pub fn listen_addr(&self) -> String {
        std::env::var(ADDR_ENV)
            .ok()
            .filter(|s| !s.trim().is_empty())
            .unwrap_or_else(|| self.service.listen.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = Config::from_toml("", Path::new("/base")).unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.grid.resolution, 0.05);
        assert_eq!(c.model.cut_height, 1.0);
        assert_eq!(c.service.listen, DEFAULT_LISTEN);
        c.validate().unwrap();
    }

    #[test]
    fn relative_paths_and_dates() {
        let c = Config::from_toml(
            "[input]\nifc = \"a/b.ifc\"\nsite = \"/abs/site.txt\"\n[progress]\nas_of = 2026-10-19\n",
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(c.input.ifc.as_deref(), Some(Path::new("/base/a/b.ifc")));
        assert_eq!(c.input.site.as_deref(), Some(Path::new("/abs/site.txt")));
        assert_eq!(c.progress.as_of, NaiveDate::from_ymd_opt(2026, 10, 19));
        let c = Config::from_toml("[progress]\nas_of = \"2026-10-19\"\n", Path::new(".")).unwrap();
        assert_eq!(c.progress.as_of, NaiveDate::from_ymd_opt(2026, 10, 19));
        assert!(Config::from_toml("[progress]\nas_of = \"19/10/2026\"\n", Path::new(".")).is_err());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(
            Config::from_toml("[grid]\nresolutoin = 0.1\n", Path::new(".")),
            Err(ConfigError::Parse { .. })
        ));
        let c = Config::from_toml("[grid]\nresolution = 0.0\n", Path::new(".")).unwrap();
        assert!(matches!(
            c.validate(),
            Err(ConfigError::Invalid {
                key: "grid.resolution",
                ..
            })
        ));
        let c = Config::from_toml("[input]\nifc = \"nope.ifc\"\n", Path::new("/definitely/missing")).unwrap();
        assert!(matches!(
            c.validate(),
            Err(ConfigError::MissingFile { key: "input.ifc", .. })
        ));
    }
}
