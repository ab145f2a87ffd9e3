//! Loading configured inputs into the in-memory artifacts shared by the
//! command-line driver and the service.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::gis::{self, GisError, SiteModel};
use crate::grid::{self, DiffCluster, DiffLattice, GridError, OccupancyGrid};
use crate::model::{
    self, BuildingModel, DocumentError, ExtractOptions, Extraction, ExtractionIssue, FunctionTagRules, VisibilityTable,
};
use crate::ontology::{self, OntologyError, TripleStore};
use crate::progress::{self, Finding, ProgressError, Schedule};
use crate::step::{self, EntityGraph, StepError};
use crate::topo::{self, TopoError, TopoMap};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {source}")]
    Step { path: String, source: StepError },
    #[error("{path}: {source}")]
    Document { path: String, source: DocumentError },
    #[error("{path}: {source}")]
    Gis { path: String, source: GisError },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Progress(#[from] ProgressError),
    #[error(transparent)]
    Topo(#[from] TopoError),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error("{0} is not configured")]
    NotConfigured(&'static str),
}

impl PipelineError {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Io { .. } => "io",
            PipelineError::Step { .. } => "step",
            PipelineError::Document { .. } => "document",
            PipelineError::Gis { .. } => "gis",
            PipelineError::Grid(_) => "grid",
            PipelineError::Progress(_) => "progress",
            PipelineError::Topo(TopoError::UnknownSpace(_)) => "unknown_room",
            PipelineError::Topo(TopoError::AmbiguousName { .. }) => "ambiguous_room",
            PipelineError::Topo(TopoError::NoRoute(..)) => "no_route",
            PipelineError::Topo(_) => "topo",
            PipelineError::Ontology(_) => "ontology",
            PipelineError::NotConfigured(_) => "not_configured",
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| PipelineError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
    }
    fs::write(path, text).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn required<'a>(p: &'a Option<PathBuf>, key: &'static str) -> Result<&'a Path> {
    p.as_deref().ok_or(PipelineError::NotConfigured(key))
}

pub fn parse_graph(path: &Path) -> Result<EntityGraph> {
    step::parse_spf(&read_text(path)?).map_err(|source| PipelineError::Step {
        path: path.display().to_string(),
        source,
    })
}

pub fn extract_options(cfg: &Config) -> Result<ExtractOptions> {
    let doc_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| PipelineError::Document { path, source }
    };
    let visibility = match &cfg.input.visibility {
        Some(p) => VisibilityTable::parse(&read_text(p)?).map_err(doc_err(p))?,
        None => VisibilityTable::default(),
    };
    let function_tags = match &cfg.input.function_tags {
        Some(p) => FunctionTagRules::default()
            .with_overrides(&read_text(p)?)
            .map_err(doc_err(p))?,
        None => FunctionTagRules::default(),
    };
    Ok(ExtractOptions {
        cut_offset: cfg.model.cut_height,
        visibility,
        function_tags,
        storey: cfg.model.storey.clone(),
    })
}

/// Parse and extract the configured IFC file.
pub fn load_model(cfg: &Config) -> Result<Extraction> {
    let graph = parse_graph(required(&cfg.input.ifc, "input.ifc")?)?;
    Ok(model::extract_model_with(&graph, &extract_options(cfg)?))
}

/// The building plus configured site obstacles in the local frame.
pub fn load_site(cfg: &Config, building: BuildingModel) -> Result<SiteModel> {
    match &cfg.input.site {
        Some(p) => gis::load_site(building, &read_text(p)?, &cfg.transform()).map_err(|source| PipelineError::Gis {
            path: p.display().to_string(),
            source,
        }),
        None => Ok(SiteModel::building_only(building)),
    }
}

pub fn load_schedule(cfg: &Config) -> Result<Option<Schedule>> {
    cfg.input
        .schedule
        .as_deref()
        .map(|p| progress::load_schedule(&read_text(p)?).map_err(PipelineError::from))
        .transpose()
}

/// A map file pair loaded for serving.
#[derive(Debug, Clone, PartialEq)]
pub struct ServedGrid {
    pub grid: OccupancyGrid,
    pub meta_path: PathBuf,
    pub image_path: PathBuf,
}

pub fn load_served_grid(meta_path: &Path) -> Result<ServedGrid> {
    let meta = grid::MapMeta::from_yaml(&read_text(meta_path)?)?;
    let image_path = meta_path.parent().unwrap_or(Path::new(".")).join(&meta.image);
    Ok(ServedGrid {
        grid: grid::import_map(&image_path, meta_path)?,
        meta_path: meta_path.to_path_buf(),
        image_path,
    })
}

/// Everything derived from one configuration, immutable once loaded.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub config: Config,
    pub issues: Vec<ExtractionIssue>,
    pub site: SiteModel,
    pub store: TripleStore,
    pub topo: TopoMap,
    pub schedule: Option<Schedule>,
    pub grid: Option<ServedGrid>,
    pub built: Option<OccupancyGrid>,
}

#[derive(Debug, Clone)]
pub struct ProgressOutcome {
    pub diff: DiffLattice,
    pub clusters: Vec<DiffCluster>,
    pub findings: Vec<Finding>,
}

impl Artifacts {
    pub fn load(config: &Config) -> Result<Artifacts> {
        config.validate()?;
        let extraction = load_model(config)?;
        Artifacts::from_extraction(config, extraction)
    }

    pub fn from_extraction(config: &Config, extraction: Extraction) -> Result<Artifacts> {
        let site = load_site(config, extraction.model)?;
        let grid = match &config.grid.map {
            Some(p) if p.is_file() => Some(load_served_grid(p)?),
            _ => None,
        };
        let built = config
            .input
            .built_map
            .as_deref()
            .map(grid::import_map_from_meta)
            .transpose()?;
        Ok(Artifacts {
            config: config.clone(),
            issues: extraction.issues,
            store: ontology::classify_site(&site),
            topo: topo::build_topological_map(&site.building),
            schedule: load_schedule(config)?,
            site,
            grid,
            built,
        })
    }

    pub fn model(&self) -> &BuildingModel {
        &self.site.building
    }

    /// Compare the as-built map with the plan as it should stand on `as_of`.
    pub fn progress(&self, as_of: NaiveDate) -> Result<ProgressOutcome> {
        let built = self
            .built
            .as_ref()
            .ok_or(PipelineError::NotConfigured("input.built_map"))?;
        let empty = Schedule::default();
        let schedule = self.schedule.as_ref().unwrap_or(&empty);
        progress_against(&self.site, &self.topo, schedule, built, as_of, &self.config)
    }
}

/// Rasterize the plan on the built map's lattice, diff, cluster and classify.
pub fn progress_against(
    site: &SiteModel,
    topo: &TopoMap,
    schedule: &Schedule,
    built: &OccupancyGrid,
    as_of: NaiveDate,
    cfg: &Config,
) -> Result<ProgressOutcome> {
    let planned = grid::rasterize_frame(&progress::planned_site(site, schedule, as_of), *built.frame());
    let diff = grid::diff_grids(&planned, built)?;
    let clusters = grid::cluster_diff(&diff, cfg.progress.min_cluster_area);
    let findings = progress::classify_clusters(
        &clusters,
        &diff.frame,
        &site.building,
        topo,
        schedule,
        as_of,
        &cfg.progress_options(),
    );
    Ok(ProgressOutcome {
        diff,
        clusters,
        findings,
    })
}
