//! Construction progress: turns as-planned vs. as-built grid clusters into
//! findings using the installation schedule.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::Point2;
use crate::gis::SiteModel;
use crate::grid::{DiffCluster, DiffKind, GridFrame};
use crate::model::{BuildingModel, LandmarkClass};
use crate::topo::{room_of_point, Route, TopoError, TopoMap};

pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.5;
pub const DEFAULT_OFFICE_TAG: &str = "contractor_office";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProgressError {
    #[error("line {line}: bad date `{text}`")]
    BadDate { line: usize, text: String },
    #[error("element {0} is scheduled twice")]
    DuplicateElement(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("no space is tagged `{0}`")]
    NoTaggedSpace(String),
    #[error("point ({}, {}) is outside every space", .0.x, .0.y)]
    PointOutsideBuilding(Point2),
    #[error("no space tagged `{0}` is reachable")]
    Unreachable(String),
    #[error(transparent)]
    Topo(#[from] TopoError),
}

pub type Result<T> = std::result::Result<T, ProgressError>;

/// Planned installation date per element GlobalId.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Schedule {
    entries: BTreeMap<String, NaiveDate>,
}

impl Schedule {
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    pub fn get(&self, global_id: &str) -> Option<NaiveDate> {
        self.entries.get(global_id).copied()
    }
    pub fn iter(&self) -> impl Iterator<Item = (&str, NaiveDate)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }
    pub fn insert(&mut self, global_id: &str, date: NaiveDate) -> Result<()> {
        if self.entries.insert(global_id.to_string(), date).is_some() {
            return Err(ProgressError::DuplicateElement(global_id.to_string()));
        }
        Ok(())
    }
}

/// `global_id,YYYY-MM-DD` per line; `#` comments and an optional
/// `global_id,date` header are skipped.
pub fn load_schedule(doc: &str) -> Result<Schedule> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(doc.as_bytes());
    let mut schedule = Schedule::default();
    for record in reader.records() {
        let record = record.map_err(|e| ProgressError::Syntax {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let fields: Vec<&str> = record.iter().collect();
        match fields.as_slice() {
            [""] => continue,
            ["global_id", "date"] if schedule.is_empty() => continue,
            [id, date] if !id.is_empty() => {
                let d = NaiveDate::parse_from_str(date, "%Y-%m-%d").map_err(|_| ProgressError::BadDate {
                    line,
                    text: date.to_string(),
                })?;
                schedule.insert(id, d)?;
            }
            _ => {
                return Err(ProgressError::Syntax {
                    line,
                    message: "expected `global_id,YYYY-MM-DD`".into(),
                })
            }
        }
    }
    Ok(schedule)
}

/// The site as it should stand on `as_of`: elements scheduled later are
/// removed.
pub fn planned_site(site: &SiteModel, schedule: &Schedule, as_of: NaiveDate) -> SiteModel {
    let mut out = site.clone();
    out.building
        .landmarks
        .retain(|l| schedule.get(&l.global_id).is_none_or(|d| d <= as_of));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum Verdict {
    AheadOfSchedule { element: String },
    Anomaly,
    MissingPlanned { element: String },
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::AheadOfSchedule { .. } => "AheadOfSchedule",
            Verdict::Anomaly => "Anomaly",
            Verdict::MissingPlanned { .. } => "MissingPlanned",
        }
    }

    pub fn element(&self) -> Option<&str> {
        match self {
            Verdict::AheadOfSchedule { element } | Verdict::MissingPlanned { element } => Some(element),
            Verdict::Anomaly => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OfficeRoute {
    pub space: String,
    pub name: String,
    pub route: Route,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub cluster: DiffCluster,
    pub verdict: Verdict,
    pub matched_overlap: f64,
    /// Storey name.
    pub storey: Option<String>,
    pub nearest_office: Option<OfficeRoute>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgressOptions {
    pub match_threshold: f64,
    pub office_tag: String,
}

impl Default for ProgressOptions {
    fn default() -> Self {
        ProgressOptions {
            match_threshold: DEFAULT_MATCH_THRESHOLD,
            office_tag: DEFAULT_OFFICE_TAG.to_string(),
        }
    }
}

/// Share of `cluster` cells that fall inside `footprint`.
fn overlap(cluster: &DiffCluster, footprint: &[(usize, usize)]) -> f64 {
    if cluster.cells.is_empty() {
        return 0.0;
    }
    let mut fp: Vec<(usize, usize)> = footprint.iter().map(|&(c, r)| (r, c)).collect();
    fp.sort_unstable();
    let hits = cluster
        .cells
        .iter()
        .filter(|&&(c, r)| fp.binary_search(&(r, c)).is_ok())
        .count();
    hits as f64 / cluster.cells.len() as f64
}

/// Best (overlap, element) among kept footprints; with footprints sorted by
/// id, ties go to the smaller id.
fn best_match<'a>(
    cluster: &DiffCluster,
    footprints: &'a [(String, Vec<(usize, usize)>)],
    keep: impl Fn(&str) -> bool,
) -> Option<(f64, &'a str)> {
    footprints
        .iter()
        .filter(|(id, _)| keep(id))
        .map(|(id, cells)| (overlap(cluster, cells), id.as_str()))
        .fold(None, |best, (o, id)| match best {
            Some((bo, _)) if bo >= o => best,
            _ => Some((o, id)),
        })
}

fn storey_name(model: &BuildingModel, storey_gid: Option<&str>) -> Option<String> {
    storey_gid.map(|g| model.storey(g).map_or_else(|| g.to_string(), |s| s.name.clone()))
}

/// Verdicts for each cluster. `frame` is the lattice the clusters were
/// labelled on.
pub fn classify_clusters(
    clusters: &[DiffCluster],
    frame: &GridFrame,
    model: &BuildingModel,
    topo: &TopoMap,
    schedule: &Schedule,
    as_of: NaiveDate,
    opts: &ProgressOptions,
) -> Vec<Finding> {
    let mut footprints: Vec<(String, Vec<(usize, usize)>)> = model
        .landmarks
        .iter()
        .filter(|l| l.ifc_class != LandmarkClass::IfcDoor)
        .map(|l| (l.global_id.clone(), frame.cells_inside(&l.footprint)))
        .collect();
    footprints.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = Vec::new();
    for cluster in clusters {
        let (verdict, overlap) = match cluster.kind {
            DiffKind::Extra => match best_match(cluster, &footprints, |id| schedule.get(id).is_some()) {
                Some((o, id)) if o >= opts.match_threshold => {
                    if schedule.get(id).unwrap() > as_of {
                        (
                            Verdict::AheadOfSchedule {
                                element: id.to_string(),
                            },
                            o,
                        )
                    } else {
                        continue;
                    }
                }
                best => (Verdict::Anomaly, best.map_or(0.0, |(o, _)| o)),
            },
            DiffKind::Missing => match best_match(cluster, &footprints, |_| true) {
                // unscheduled elements are due from the start
                Some((o, id)) if o >= opts.match_threshold && schedule.get(id).is_none_or(|d| d <= as_of) => (
                    Verdict::MissingPlanned {
                        element: id.to_string(),
                    },
                    o,
                ),
                _ => continue,
            },
        };
        let room = room_of_point(model, cluster.centroid);
        let storey = room
            .and_then(|s| model.space(s))
            .and_then(|s| storey_name(model, s.storey.as_deref()))
            .or_else(|| {
                verdict
                    .element()
                    .and_then(|e| model.landmark(e))
                    .and_then(|l| storey_name(model, l.storey.as_deref()))
            });
        let nearest_office = match verdict {
            Verdict::Anomaly => nearest_office(topo, model, cluster.centroid, &opts.office_tag).ok(),
            _ => None,
        };
        out.push(Finding {
            cluster: cluster.clone(),
            verdict,
            matched_overlap: overlap,
            storey,
            nearest_office,
        });
    }
    out
}

/// The tagged space with the cheapest route from the room containing
/// `from`; ties go to the smaller GlobalId.
pub fn nearest_office(topo: &TopoMap, model: &BuildingModel, from: Point2, tag: &str) -> Result<OfficeRoute> {
    let start = room_of_point(model, from).ok_or(ProgressError::PointOutsideBuilding(from))?;
    let tagged: Vec<_> = topo
        .nodes
        .iter()
        .filter(|n| n.function_tags.iter().any(|t| t == tag))
        .collect();
    if tagged.is_empty() {
        return Err(ProgressError::NoTaggedSpace(tag.to_string()));
    }
    let mut best: Option<OfficeRoute> = None;
    for node in tagged {
        let route = match topo.plan_path(start, &node.id) {
            Ok(r) => r,
            Err(TopoError::NoRoute(..)) => continue,
            Err(e) => return Err(e.into()),
        };
        // nodes are sorted by id, so strict improvement keeps the smaller id
        if best.as_ref().is_none_or(|b| route.total_cost < b.route.total_cost) {
            best = Some(OfficeRoute {
                space: node.id.clone(),
                name: node.long_name.clone(),
                route,
            });
        }
    }
    best.ok_or_else(|| ProgressError::Unreachable(tag.to_string()))
}

/// Tab-separated findings listing.
pub fn findings_report(findings: &[Finding], as_of: NaiveDate) -> String {
    let mut out = String::from("# birs findings report v1\n");
    let _ = writeln!(out, "# as_of {}", as_of.format("%Y-%m-%d"));
    out.push_str("# cluster\tkind\tverdict\telement\toverlap\tstorey\tcentroid_x\tcentroid_y\tarea_m2\toffice\toffice_name\troute_cost\n");
    for f in findings {
        let (office, name, cost) = match &f.nearest_office {
            Some(o) => (o.space.as_str(), o.name.as_str(), format!("{:.3}", o.route.total_cost)),
            None => ("-", "-", "-".to_string()),
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.3}\t{}\t{:.3}\t{:.3}\t{:.4}\t{}\t{}\t{}",
            f.cluster.id,
            f.cluster.kind.name(),
            f.verdict.name(),
            f.verdict.element().unwrap_or("-"),
            f.matched_overlap,
            f.storey.as_deref().unwrap_or("-"),
            f.cluster.centroid.x,
            f.cluster.centroid.y,
            f.cluster.area,
            office,
            name,
            cost
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Polygon2D, Pose2D};
    use crate::grid::{cluster_diff, diff_grids, rasterize, RasterOptions};
    use crate::model::{BoundaryKind, BoundaryRel, DoorRec, Landmark, SpaceRec, VisibilityTable};
    use crate::topo::build_topological_map;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn schedule_parsing() {
        let s = load_schedule("# walls\nglobal_id,date\nW1,2026-11-15\n W2 , 2026-11-16\n\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.get("W2"), Some(date("2026-11-16")));
        assert!(load_schedule("").unwrap().is_empty());
        assert_eq!(
            load_schedule("W1,2026-13-01\n"),
            Err(ProgressError::BadDate {
                line: 1,
                text: "2026-13-01".into()
            })
        );
        assert_eq!(
            load_schedule("W1,2026-11-15\nW1,2026-11-16\n"),
            Err(ProgressError::DuplicateElement("W1".into()))
        );
        assert!(matches!(load_schedule("W1\n"), Err(ProgressError::Syntax { .. })));
    }

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon2D {
        Polygon2D::rectangle(Point2::new(x0, y0), Point2::new(x1, y1)).unwrap()
    }

    fn space(id: &str, name: &str, poly: Polygon2D, tags: &[&str]) -> SpaceRec {
        SpaceRec {
            entity_id: 0,
            global_id: id.into(),
            long_name: name.into(),
            centroid: poly.centroid(),
            polygon: poly,
            storey: None,
            function_tags: tags.iter().map(|t| t.to_string()).collect(),
        }
    }

    fn wall(id: &str, poly: Polygon2D) -> Landmark {
        Landmark {
            entity_id: 0,
            global_id: id.into(),
            ifc_class: LandmarkClass::IfcWall,
            footprint: poly,
            pose: Pose2D::IDENTITY,
            elevation: 0.0,
            material: VisibilityTable::default().material("Concrete"),
            storey: None,
        }
    }

    /// Hall (0..10 x 0..4) with an office east of it through a door.
    fn model() -> BuildingModel {
        BuildingModel {
            spaces: vec![
                space("H", "HALL", rect(0.0, 0.0, 10.0, 4.0), &[]),
                space("O", "OFFICE", rect(10.0, 0.0, 14.0, 4.0), &["contractor_office"]),
            ],
            landmarks: vec![
                wall("W1", rect(2.0, 1.0, 2.2, 3.0)),
                wall("W2", rect(7.0, 1.0, 7.2, 3.0)),
            ],
            doors: vec![DoorRec {
                global_id: "D".into(),
                width: 0.9,
                height: 2.1,
                center: Point2::new(10.0, 2.0),
                host_wall: None,
            }],
            boundaries: ["H", "O"]
                .iter()
                .map(|s| BoundaryRel {
                    global_id: format!("b{s}"),
                    space: s.to_string(),
                    element: Some("D".into()),
                    kind: BoundaryKind::Physical,
                    shared_geometry: None,
                })
                .collect(),
            ..Default::default()
        }
    }

    fn scenario(built_extra: Option<Polygon2D>) -> (Vec<DiffCluster>, GridFrame) {
        let m = model();
        let schedule = load_schedule("W1,2026-11-15\nW2,2026-11-15\n").unwrap();
        let site = SiteModel::building_only(m.clone());
        let opts = RasterOptions {
            resolution: 0.1,
            bounds: Some(crate::geometry::Rect::new(0.0, 0.0, 14.0, 4.0)),
            ..Default::default()
        };
        let planned = rasterize(&planned_site(&site, &schedule, date("2026-10-19")), &opts).unwrap();
        let mut built_model = m;
        if let Some(p) = built_extra {
            built_model.landmarks.push(wall("COL", p));
        }
        let built = rasterize(&SiteModel::building_only(built_model), &opts).unwrap();
        let d = diff_grids(&planned, &built).unwrap();
        (cluster_diff(&d, 0.05), d.frame)
    }

    #[test]
    fn walls_ahead_of_schedule() {
        let m = model();
        let topo = build_topological_map(&m);
        let schedule = load_schedule("W1,2026-11-15\nW2,2026-11-15\n").unwrap();
        let (clusters, frame) = scenario(None);
        assert_eq!(clusters.len(), 2);
        let f = classify_clusters(
            &clusters,
            &frame,
            &m,
            &topo,
            &schedule,
            date("2026-10-19"),
            &Default::default(),
        );
        let mut elements: Vec<_> = f.iter().map(|f| f.verdict.element().unwrap()).collect();
        elements.sort();
        assert_eq!(elements, vec!["W1", "W2"]);
        assert!(f.iter().all(|f| f.matched_overlap == 1.0));
        // once the dates pass the walls are expected, not findings
        let later = classify_clusters(
            &clusters,
            &frame,
            &m,
            &topo,
            &schedule,
            date("2027-01-01"),
            &Default::default(),
        );
        assert!(later.is_empty());
    }

    #[test]
    fn unplanned_column_is_an_anomaly() {
        let m = model();
        let topo = build_topological_map(&m);
        let schedule = load_schedule("W1,2026-11-15\nW2,2026-11-15\n").unwrap();
        let (clusters, frame) = scenario(Some(rect(4.5, 1.5, 5.0, 2.0)));
        let f = classify_clusters(
            &clusters,
            &frame,
            &m,
            &topo,
            &schedule,
            date("2026-10-19"),
            &Default::default(),
        );
        let anomalies: Vec<_> = f.iter().filter(|f| f.verdict == Verdict::Anomaly).collect();
        assert_eq!(anomalies.len(), 1);
        let office = anomalies[0].nearest_office.as_ref().unwrap();
        assert_eq!(office.space, "O");
        assert_eq!(office.route.nodes, vec!["H", "O"]);
        let report = findings_report(&f, date("2026-10-19"));
        assert_eq!(report.lines().filter(|l| l.contains("\tAnomaly\t")).count(), 1);
        assert!(classify_clusters(
            &[],
            &frame,
            &m,
            &topo,
            &schedule,
            date("2026-10-19"),
            &Default::default()
        )
        .is_empty());
    }

    #[test]
    fn missing_planned_element() {
        let m = model();
        let topo = build_topological_map(&m);
        let opts = RasterOptions {
            resolution: 0.1,
            bounds: Some(crate::geometry::Rect::new(0.0, 0.0, 14.0, 4.0)),
            ..Default::default()
        };
        let planned = rasterize(&SiteModel::building_only(m.clone()), &opts).unwrap();
        let mut built_model = m.clone();
        built_model.landmarks.retain(|l| l.global_id != "W2");
        let built = rasterize(&SiteModel::building_only(built_model), &opts).unwrap();
        let d = diff_grids(&planned, &built).unwrap();
        let clusters = cluster_diff(&d, 0.05);
        let f = classify_clusters(
            &clusters,
            &d.frame,
            &m,
            &topo,
            &Schedule::default(),
            date("2026-10-19"),
            &Default::default(),
        );
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].verdict, Verdict::MissingPlanned { element: "W2".into() });
    }

    #[test]
    fn office_lookup() {
        let m = model();
        let topo = build_topological_map(&m);
        let o = nearest_office(&topo, &m, Point2::new(12.0, 2.0), DEFAULT_OFFICE_TAG).unwrap();
        assert_eq!(
            (o.space.as_str(), o.route.nodes.len(), o.route.total_cost),
            ("O", 1, 0.0)
        );
        assert_eq!(
            nearest_office(&topo, &m, Point2::new(1.0, 1.0), "crane_operator"),
            Err(ProgressError::NoTaggedSpace("crane_operator".into()))
        );
        assert!(matches!(
            nearest_office(&topo, &m, Point2::new(-5.0, 1.0), DEFAULT_OFFICE_TAG),
            Err(ProgressError::PointOutsideBuilding(_))
        ));
    }
}
