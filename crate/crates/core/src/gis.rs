//! Site-context obstacles: parsing, geo-to-local registration and merging
//! with the building model.
//!
//! Site-feature files are line oriented:
//!
//! ```text
//! # comment
//! FEATURE <id> <category> <crs-label>
//! <x> <y>
//! <x> <y>
//! ...
//! END
//! ```
//!
//! `<category>` is one of `ExistingBuilding`, `WaterSurface`, `Vegetation`
//! (case-insensitive). Ids and CRS labels contain no whitespace.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Point2, Polygon2D};
use crate::model::BuildingModel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GisError {
    #[error("line {line}: unknown obstacle category `{category}`")]
    UnknownCategory { line: usize, category: String },
    #[error("feature {0} has fewer than 3 vertices")]
    TooFewVertices(String),
    #[error("feature {0} degenerates after transform")]
    DegenerateAfterTransform(String),
    #[error("feature {id}: {source}")]
    BadPolygon { id: String, source: GeometryError },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("scale must be positive and finite, got {0}")]
    BadScale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ObstacleCategory {
    ExistingBuilding,
    WaterSurface,
    Vegetation,
}

impl ObstacleCategory {
    pub const ALL: [ObstacleCategory; 3] = [
        ObstacleCategory::ExistingBuilding,
        ObstacleCategory::WaterSurface,
        ObstacleCategory::Vegetation,
    ];

    /// Local name of the ontology class under `birs:Topography`.
    pub fn class_name(self) -> &'static str {
        match self {
            ObstacleCategory::ExistingBuilding => "ExistingBuilding",
            ObstacleCategory::WaterSurface => "WaterSurface",
            ObstacleCategory::Vegetation => "Vegetation",
        }
    }
}

impl fmt::Display for ObstacleCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.class_name())
    }
}

impl FromStr for ObstacleCategory {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        ObstacleCategory::ALL
            .into_iter()
            .find(|c| c.class_name().eq_ignore_ascii_case(s))
            .ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeoFeature {
    pub id: String,
    pub category: ObstacleCategory,
    /// Source CRS vertices in file order.
    pub vertices: Vec<Point2>,
    pub source_crs: String,
}

pub fn parse_site_features(doc: &str) -> Result<Vec<GeoFeature>, GisError> {
    let mut out = Vec::new();
    let mut open: Option<GeoFeature> = None;
    let mut last_line = 0;
    for (i, raw) in doc.lines().enumerate() {
        let line = i + 1;
        last_line = line;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        let syntax = |message: &str| GisError::Syntax {
            line,
            message: message.to_string(),
        };
        match (fields[0], open.as_mut()) {
            ("FEATURE", None) => {
                let [_, id, category, crs] = fields[..] else {
                    return Err(syntax("expected `FEATURE <id> <category> <crs>`"));
                };
                let category = category.parse().map_err(|_| GisError::UnknownCategory {
                    line,
                    category: category.to_string(),
                })?;
                if out.iter().any(|f: &GeoFeature| f.id == id) {
                    return Err(syntax("duplicate feature id"));
                }
                open = Some(GeoFeature {
                    id: id.to_string(),
                    category,
                    vertices: Vec::new(),
                    source_crs: crs.to_string(),
                });
            }
            ("FEATURE", Some(_)) => return Err(syntax("FEATURE inside an open feature")),
            ("END", Some(_)) if fields.len() == 1 => {
                let f = open.take().unwrap();
                if f.vertices.len() < 3 {
                    return Err(GisError::TooFewVertices(f.id));
                }
                out.push(f);
            }
            (_, Some(f)) => {
                let [x, y] = fields[..] else {
                    return Err(syntax("expected `<x> <y>`"));
                };
                let parse = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite());
                match (parse(x), parse(y)) {
                    (Some(x), Some(y)) => f.vertices.push(Point2::new(x, y)),
                    _ => return Err(syntax("bad coordinate")),
                }
            }
            (_, None) => return Err(syntax("expected FEATURE")),
        }
    }
    if open.is_some() {
        return Err(GisError::Syntax {
            line: last_line,
            message: "missing END".into(),
        });
    }
    Ok(out)
}

pub fn write_site_features(features: &[GeoFeature]) -> String {
    let mut out = String::new();
    for f in features {
        out.push_str(&format!("FEATURE {} {} {}\n", f.id, f.category, f.source_crs));
        for v in &f.vertices {
            out.push_str(&format!("{:?} {:?}\n", v.x, v.y));
        }
        out.push_str("END\n");
    }
    out
}

/// `v ↦ scale · R(rotation) · v + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform2D {
    pub scale: f64,
    pub rotation: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for SimilarityTransform2D {
    fn default() -> Self {
        SimilarityTransform2D::IDENTITY
    }
}

impl SimilarityTransform2D {
    pub const IDENTITY: SimilarityTransform2D = SimilarityTransform2D {
        scale: 1.0,
        rotation: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn new(scale: f64, rotation: f64, tx: f64, ty: f64) -> Result<Self, GisError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(GisError::BadScale(scale));
        }
        Ok(SimilarityTransform2D {
            scale,
            rotation,
            tx,
            ty,
        })
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let (s, c) = self.rotation.sin_cos();
        Point2::new(
            self.scale * (c * p.x - s * p.y) + self.tx,
            self.scale * (s * p.x + c * p.y) + self.ty,
        )
    }

    pub fn inverse(&self) -> SimilarityTransform2D {
        let k = 1.0 / self.scale;
        let (s, c) = (-self.rotation).sin_cos();
        SimilarityTransform2D {
            scale: k,
            rotation: -self.rotation,
            tx: -k * (c * self.tx - s * self.ty),
            ty: -k * (s * self.tx + c * self.ty),
        }
    }
}

/// Polygon area below which a transformed feature is rejected.
pub const MIN_LOCAL_AREA: f64 = 1e-12;

pub fn to_local(feature: &GeoFeature, t: &SimilarityTransform2D) -> Result<Polygon2D, GisError> {
    let pts = feature.vertices.iter().map(|&v| t.apply(v));
    let poly = Polygon2D::new(pts).map_err(|e| match e {
        GeometryError::Degenerate => GisError::DegenerateAfterTransform(feature.id.clone()),
        GeometryError::TooFewVertices(_) => GisError::TooFewVertices(feature.id.clone()),
        source => GisError::BadPolygon {
            id: feature.id.clone(),
            source,
        },
    })?;
    if poly.area() <= MIN_LOCAL_AREA {
        return Err(GisError::DegenerateAfterTransform(feature.id.clone()));
    }
    Ok(poly)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Obstacle {
    pub id: String,
    pub category: ObstacleCategory,
    pub polygon: Polygon2D,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SiteModel {
    pub building: BuildingModel,
    pub obstacles: Vec<Obstacle>,
}

impl SiteModel {
    pub fn building_only(building: BuildingModel) -> SiteModel {
        SiteModel {
            building,
            obstacles: Vec::new(),
        }
    }
}

/// Attach obstacles to the model. Overlapping obstacles are kept as-is.
pub fn merge_obstacles(model: BuildingModel, obstacles: Vec<Obstacle>) -> SiteModel {
    SiteModel {
        building: model,
        obstacles,
    }
}

/// Parse, transform and merge in one step.
pub fn load_site(model: BuildingModel, doc: &str, t: &SimilarityTransform2D) -> Result<SiteModel, GisError> {
    let obstacles = parse_site_features(doc)?
        .into_iter()
        .map(|f| {
            Ok(Obstacle {
                polygon: to_local(&f, t)?,
                id: f.id,
                category: f.category,
            })
        })
        .collect::<Result<Vec<_>, GisError>>()?;
    Ok(merge_obstacles(model, obstacles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::signed_area;

    const NINE: &str = "# north planting\n\
        FEATURE veg-1 Vegetation SITE\n\
        0 0\n4 0\n6 1\n7 3\n6 5\n4 6\n2 6\n0 5\n-1 2\n\
        END\n";

    fn square() -> GeoFeature {
        GeoFeature {
            id: "sq".into(),
            category: ObstacleCategory::WaterSurface,
            vertices: vec![
                (0.0, 0.0).into(),
                (1.0, 0.0).into(),
                (1.0, 1.0).into(),
                (0.0, 1.0).into(),
            ],
            source_crs: "SITE".into(),
        }
    }

    #[test]
    fn parses_nine_vertex_feature() {
        let f = parse_site_features(NINE).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].vertices.len(), 9);
        assert_eq!(f[0].vertices[8], Point2::new(-1.0, 2.0));
        assert_eq!(f[0].category, ObstacleCategory::Vegetation);
        assert_eq!(parse_site_features(&write_site_features(&f)).unwrap(), f);
    }

    #[test]
    fn empty_and_bad_documents() {
        assert!(parse_site_features("").unwrap().is_empty());
        assert!(parse_site_features("# nothing\n\n").unwrap().is_empty());
        assert_eq!(
            parse_site_features("FEATURE r1 road SITE\n0 0\n1 0\n1 1\nEND\n"),
            Err(GisError::UnknownCategory {
                line: 1,
                category: "road".into()
            })
        );
        assert_eq!(
            parse_site_features("FEATURE t Vegetation SITE\n0 0\n1 0\nEND\n"),
            Err(GisError::TooFewVertices("t".into()))
        );
        assert!(matches!(
            parse_site_features("FEATURE t Vegetation SITE\n0 0\n"),
            Err(GisError::Syntax { .. })
        ));
        assert!(matches!(
            parse_site_features("FEATURE t Vegetation SITE\n0 zero\nEND\n"),
            Err(GisError::Syntax { line: 2, .. })
        ));
    }

    #[test]
    fn identity_and_scaling() {
        let sq = square();
        let p = to_local(&sq, &SimilarityTransform2D::IDENTITY).unwrap();
        assert_eq!(p.vertices(), &sq.vertices[..]);
        let t = SimilarityTransform2D::new(2.0, 0.0, 0.0, 0.0).unwrap();
        let p = to_local(&sq, &t).unwrap();
        assert_eq!(p.area(), 4.0);
        assert_eq!(p.vertices()[2], Point2::new(2.0, 2.0));
    }

    #[test]
    fn area_scales_by_square_of_scale() {
        let f = &parse_site_features(NINE).unwrap()[0];
        let t = SimilarityTransform2D::new(0.9996, 0.3, 1250.5, -310.25).unwrap();
        let p = to_local(f, &t).unwrap();
        assert_eq!(p.len(), 9);
        let src = signed_area(&f.vertices);
        assert!((p.area() - 0.9996f64.powi(2) * src).abs() <= 1e-9 * src);
    }

    #[test]
    fn inverse_round_trips() {
        let t = SimilarityTransform2D::new(0.9996, 0.3, 1250.5, -310.25).unwrap();
        let inv = t.inverse();
        for v in parse_site_features(NINE).unwrap()[0].vertices.iter() {
            let back = inv.apply(t.apply(*v));
            assert!(back.distance(*v) < 1e-9);
        }
        assert!(SimilarityTransform2D::new(0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn collapsed_feature_is_rejected() {
        let t = SimilarityTransform2D::new(1e-7, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(
            to_local(&square(), &t),
            Err(GisError::DegenerateAfterTransform("sq".into()))
        );
    }

    #[test]
    fn merge_keeps_every_obstacle() {
        let t = SimilarityTransform2D::IDENTITY;
        let a = square();
        let mut b = square();
        b.id = "sq2".into();
        let obstacles: Vec<Obstacle> = [a, b]
            .iter()
            .map(|f| Obstacle {
                id: f.id.clone(),
                category: f.category,
                polygon: to_local(f, &t).unwrap(),
            })
            .collect();
        let site = merge_obstacles(BuildingModel::default(), obstacles);
        assert_eq!(site.obstacles.len(), 2);
        assert!(merge_obstacles(BuildingModel::default(), vec![]).obstacles.is_empty());
    }
}
