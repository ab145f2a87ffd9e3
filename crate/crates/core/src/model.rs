//! Resolve an IFC [`EntityGraph`] into a plan-view [`BuildingModel`].
//!
//! Geometry is cut horizontally: each product contributes the footprint of its
//! extruded body at the cut height (storey elevation plus an offset), placed
//! in one world plan frame in meters.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{GeometryError, Point2, Polygon2D, Pose2D};
use crate::step::{EntityGraph, StepEntity, StepError, StepValue};

/// Tolerance on unit-vector components when checking for vertical axes.
const AXIS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("placement chain loops through {0:?}")]
    PlacementCycle(Vec<u64>),
    #[error("placement #{0} has an axis that is not +z")]
    NonPlanarAxis(u64),
    #[error("extrusion #{0} is not vertical")]
    NonVerticalExtrusion(u64),
    #[error("unsupported representation {0}")]
    UnsupportedRepresentation(String),
    #[error("profile #{0} has no area")]
    DegenerateProfile(u64),
    #[error("product #{0} has no representation")]
    MissingRepresentation(u64),
    #[error("#{id}: {what}")]
    Malformed { id: u64, what: String },
    #[error("#{0} is not cut by the plan at its cut height")]
    NotAtCutHeight(u64),
    #[error("#{id} is a {type_name}, not a landmark class")]
    NotALandmark { id: u64, type_name: String },
    #[error("door #{0} has no positive width/height")]
    DoorWithoutSize(u64),
}

pub type Result<T> = std::result::Result<T, ModelError>;

fn malformed(id: u64, what: impl Into<String>) -> ModelError {
    ModelError::Malformed { id, what: what.into() }
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// The six IFC building-element classes used as navigation landmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum LandmarkClass {
    IfcWall,
    IfcCurtainWall,
    IfcColumn,
    IfcDoor,
    IfcRailing,
    IfcStair,
}

impl LandmarkClass {
    pub const ALL: [LandmarkClass; 6] = [
        LandmarkClass::IfcWall,
        LandmarkClass::IfcCurtainWall,
        LandmarkClass::IfcColumn,
        LandmarkClass::IfcDoor,
        LandmarkClass::IfcRailing,
        LandmarkClass::IfcStair,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LandmarkClass::IfcWall => "IfcWall",
            LandmarkClass::IfcCurtainWall => "IfcCurtainWall",
            LandmarkClass::IfcColumn => "IfcColumn",
            LandmarkClass::IfcDoor => "IfcDoor",
            LandmarkClass::IfcRailing => "IfcRailing",
            LandmarkClass::IfcStair => "IfcStair",
        }
    }

    /// STEP type names mapped onto each class (standard-case subtypes fold in).
    pub fn step_types(self) -> &'static [&'static str] {
        match self {
            LandmarkClass::IfcWall => &["IFCWALL", "IFCWALLSTANDARDCASE", "IFCWALLELEMENTEDCASE"],
            LandmarkClass::IfcCurtainWall => &["IFCCURTAINWALL"],
            LandmarkClass::IfcColumn => &["IFCCOLUMN", "IFCCOLUMNSTANDARDCASE"],
            LandmarkClass::IfcDoor => &["IFCDOOR", "IFCDOORSTANDARDCASE"],
            LandmarkClass::IfcRailing => &["IFCRAILING"],
            LandmarkClass::IfcStair => &["IFCSTAIR"],
        }
    }

    pub fn from_step_type(type_name: &str) -> Option<LandmarkClass> {
        LandmarkClass::ALL
            .into_iter()
            .find(|c| c.step_types().iter().any(|t| t.eq_ignore_ascii_case(type_name)))
    }
}

/// Material name plus whether range sensors can be expected to see it.
/// Only [`VisibilityTable::material`] builds one, so the flag always agrees
/// with the table in use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MaterialInfo {
    name: String,
    sensor_visible: bool,
}

impl MaterialInfo {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sensor_visible(&self) -> bool {
        self.sensor_visible
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Storey {
    pub global_id: String,
    pub name: String,
    pub elevation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Landmark {
    pub entity_id: u64,
    pub global_id: String,
    pub ifc_class: LandmarkClass,
    pub footprint: Polygon2D,
    pub pose: Pose2D,
    pub elevation: f64,
    pub material: MaterialInfo,
    pub storey: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpaceRec {
    pub entity_id: u64,
    pub global_id: String,
    pub long_name: String,
    pub polygon: Polygon2D,
    pub centroid: Point2,
    pub storey: Option<String>,
    pub function_tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoorRec {
    pub global_id: String,
    pub width: f64,
    pub height: f64,
    pub center: Point2,
    pub host_wall: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum BoundaryKind {
    Physical,
    Virtual,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct BoundaryRel {
    pub global_id: String,
    pub space: String,
    pub element: Option<String>,
    pub kind: BoundaryKind,
    /// Entity shared by the two sides of a virtual boundary: the virtual
    /// element when present, otherwise the connection geometry.
    pub shared_geometry: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BuildingModel {
    pub project_name: String,
    pub unit_scale: f64,
    pub storeys: Vec<Storey>,
    pub spaces: Vec<SpaceRec>,
    pub landmarks: Vec<Landmark>,
    pub doors: Vec<DoorRec>,
    pub boundaries: Vec<BoundaryRel>,
}

impl BuildingModel {
    pub fn space(&self, global_id: &str) -> Option<&SpaceRec> {
        self.spaces.iter().find(|s| s.global_id == global_id)
    }

    pub fn space_by_name(&self, long_name: &str) -> Option<&SpaceRec> {
        self.spaces.iter().find(|s| s.long_name == long_name)
    }

    pub fn landmark(&self, global_id: &str) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.global_id == global_id)
    }

    pub fn door(&self, global_id: &str) -> Option<&DoorRec> {
        self.doors.iter().find(|d| d.global_id == global_id)
    }

    pub fn storey(&self, global_id: &str) -> Option<&Storey> {
        self.storeys.iter().find(|s| s.global_id == global_id)
    }

    pub fn boundaries_of<'a>(&'a self, space: &'a str) -> impl Iterator<Item = &'a BoundaryRel> {
        self.boundaries.iter().filter(move |b| b.space == space)
    }

    /// True when some physical boundary landmark of `space` is invisible to
    /// range sensors, so the prior map should be trusted over live scans.
    pub fn has_invisible_boundary(&self, space: &str) -> bool {
        self.boundaries_of(space)
            .filter(|b| b.kind == BoundaryKind::Physical)
            .filter_map(|b| b.element.as_deref())
            .filter_map(|e| self.landmark(e))
            .any(|l| !l.material.sensor_visible())
    }
}

// ---------------------------------------------------------------------------
// Configuration documents
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct DocumentError {
    pub line: usize,
    pub message: String,
}

/// Parse `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(doc: &str) -> std::result::Result<Vec<(String, String)>, DocumentError> {
    let mut out = Vec::new();
    for (i, raw) in doc.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| DocumentError {
            line: i + 1,
            message: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(DocumentError {
                line: i + 1,
                message: "empty key".into(),
            });
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// Case-insensitive glob with `*` and `?`.
fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.to_lowercase().chars().collect();
    let t: Vec<char> = text.to_lowercase().chars().collect();
    let (mut pi, mut ti) = (0, 0);
    let (mut star, mut mark) = (None, 0);
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some(pi);
            mark = ti;
            pi += 1;
        } else if let Some(s) = star {
            pi = s + 1;
            mark += 1;
            ti = mark;
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '*')
}

/// Material-name pattern → sensor visibility. First matching rule wins;
/// names matching no rule are visible.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityTable {
    rules: Vec<(String, bool)>,
}

impl Default for VisibilityTable {
    fn default() -> Self {
        VisibilityTable {
            rules: vec![("Glass*".to_string(), false)],
        }
    }
}

impl VisibilityTable {
    pub fn parse(doc: &str) -> std::result::Result<Self, DocumentError> {
        let mut rules = Vec::new();
        for (i, (pattern, value)) in parse_key_values(doc)?.into_iter().enumerate() {
            let visible = match value.to_ascii_lowercase().as_str() {
                "true" | "visible" => true,
                "false" | "invisible" => false,
                other => {
                    return Err(DocumentError {
                        line: i + 1,
                        message: format!("expected true/false, got `{other}`"),
                    })
                }
            };
            rules.push((pattern, visible));
        }
        Ok(VisibilityTable { rules })
    }

    pub fn is_visible(&self, material_name: &str) -> bool {
        self.rules
            .iter()
            .find(|(pattern, _)| glob_match(pattern, material_name))
            .is_none_or(|(_, visible)| *visible)
    }

    pub fn material(&self, name: &str) -> MaterialInfo {
        MaterialInfo {
            name: name.to_string(),
            sensor_visible: self.is_visible(name),
        }
    }
}

/// Derives space function labels from long names, with per-name overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionTagRules {
    keywords: Vec<(String, Vec<String>)>,
    overrides: BTreeMap<String, Vec<String>>,
}

impl Default for FunctionTagRules {
    fn default() -> Self {
        let table: &[(&str, &[&str])] = &[
            ("CORRIDOR", &["corridor"]),
            ("VESTIBULE", &["vestibule"]),
            ("HALL", &["hall"]),
            ("W.C.", &["restroom"]),
            ("TOILET", &["restroom"]),
            ("BUREAU", &["office"]),
            ("OFFICE", &["office"]),
            ("ENTREPRENEUR", &["contractor"]),
            ("CONTRACTOR", &["contractor"]),
            ("ESPACE C", &["collaborative"]),
            ("ESCALIER", &["stair"]),
        ];
        FunctionTagRules {
            keywords: table
                .iter()
                .map(|(k, tags)| (k.to_string(), tags.iter().map(|t| t.to_string()).collect()))
                .collect(),
            overrides: BTreeMap::new(),
        }
    }
}

impl FunctionTagRules {
    /// Override document: `<long name> = tag1, tag2`. Listed names get
    /// exactly these tags.
    pub fn with_overrides(mut self, doc: &str) -> std::result::Result<Self, DocumentError> {
        for (name, tags) in parse_key_values(doc)? {
            let tags = tags
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect();
            self.overrides.insert(name, tags);
        }
        Ok(self)
    }

    pub fn tags_for(&self, long_name: &str) -> Vec<String> {
        if let Some(tags) = self.overrides.get(long_name) {
            let mut tags = tags.clone();
            tags.sort();
            tags.dedup();
            return tags;
        }
        let upper = long_name.to_uppercase();
        let mut tags: BTreeSet<String> = self
            .keywords
            .iter()
            .filter(|(k, _)| upper.contains(k.as_str()))
            .flat_map(|(_, t)| t.iter().cloned())
            .collect();
        if tags.contains("office") && tags.contains("contractor") {
            tags.insert("contractor_office".to_string());
        }
        tags.into_iter().collect()
    }
}

// ---------------------------------------------------------------------------
// Resolver
// ---------------------------------------------------------------------------

/// Length-unit factor to meters declared by the file (1.0 when absent).
pub fn length_unit_scale(graph: &EntityGraph) -> f64 {
    for &id in graph.entities_of_type("IFCUNITASSIGNMENT") {
        let Some(units) = graph.get(id).and_then(|e| e.arg(0)).and_then(StepValue::as_list) else {
            continue;
        };
        for unit in units.iter().filter_map(StepValue::as_ref_id) {
            if let Some(scale) = unit_scale(graph, unit, 0) {
                return scale;
            }
        }
    }
    1.0
}

fn si_prefix(prefix: &str) -> f64 {
    match prefix {
        "EXA" => 1e18,
        "PETA" => 1e15,
        "TERA" => 1e12,
        "GIGA" => 1e9,
        "MEGA" => 1e6,
        "KILO" => 1e3,
        "HECTO" => 1e2,
        "DECA" => 1e1,
        "DECI" => 1e-1,
        "CENTI" => 1e-2,
        "MILLI" => 1e-3,
        "MICRO" => 1e-6,
        "NANO" => 1e-9,
        _ => 1.0,
    }
}

fn unit_scale(graph: &EntityGraph, id: u64, depth: usize) -> Option<f64> {
    let e = graph.get(id)?;
    if depth > 8 {
        return None;
    }
    if e.is("IFCSIUNIT") {
        // IfcSIUnit(Dimensions, UnitType, Prefix, Name)
        if e.arg(1)?.as_enum()? != "LENGTHUNIT" {
            return None;
        }
        let prefix = e.arg(2).and_then(StepValue::as_enum).unwrap_or("");
        return Some(si_prefix(prefix));
    }
    if e.is("IFCCONVERSIONBASEDUNIT") || e.is("IFCCONVERSIONBASEDUNITWITHOFFSET") {
        // IfcConversionBasedUnit(Dimensions, UnitType, Name, ConversionFactor)
        if e.arg(1)?.as_enum()? != "LENGTHUNIT" {
            return None;
        }
        let measure = graph.get(e.arg(3)?.as_ref_id()?)?;
        // IfcMeasureWithUnit(ValueComponent, UnitComponent)
        let value = measure.arg(0)?.as_f64()?;
        let base = measure
            .arg(1)
            .and_then(StepValue::as_ref_id)
            .and_then(|u| unit_scale(graph, u, depth + 1))
            .unwrap_or(1.0);
        return Some(value * base);
    }
    None
}

/// World plan pose plus accumulated elevation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Placement {
    pub pose: Pose2D,
    pub elevation: f64,
}

impl Placement {
    const IDENTITY: Placement = Placement {
        pose: Pose2D::IDENTITY,
        elevation: 0.0,
    };

    fn then(&self, inner: &Placement) -> Placement {
        Placement {
            pose: self.pose.compose(&inner.pose),
            elevation: self.elevation + inner.elevation,
        }
    }
}

/// Graph view with the file's length unit applied.
pub struct Resolver<'g> {
    pub graph: &'g EntityGraph,
    pub scale: f64,
}

impl<'g> Resolver<'g> {
    pub fn new(graph: &'g EntityGraph) -> Self {
        Resolver {
            graph,
            scale: length_unit_scale(graph),
        }
    }

    fn entity(&self, id: u64) -> Result<&'g StepEntity> {
        Ok(self.graph.resolve_ref(id)?)
    }

    fn ref_arg(&self, e: &StepEntity, index: usize) -> Option<u64> {
        e.arg(index).and_then(StepValue::as_ref_id)
    }

    fn coords(&self, id: u64) -> Result<Vec<f64>> {
        let e = self.entity(id)?;
        let list = e
            .arg(0)
            .and_then(StepValue::as_list)
            .ok_or_else(|| malformed(id, "coordinate list"))?;
        list.iter()
            .map(|v| v.as_f64().ok_or_else(|| malformed(id, "numeric coordinate")))
            .collect()
    }

    fn point(&self, id: u64) -> Result<[f64; 3]> {
        let c = self.coords(id)?;
        if c.len() < 2 {
            return Err(malformed(id, "point needs 2 or 3 coordinates"));
        }
        Ok([
            c[0] * self.scale,
            c[1] * self.scale,
            c.get(2).copied().unwrap_or(0.0) * self.scale,
        ])
    }

    fn direction(&self, id: u64) -> Result<[f64; 3]> {
        let c = self.coords(id)?;
        if c.len() < 2 {
            return Err(malformed(id, "direction needs 2 or 3 ratios"));
        }
        let v = [c[0], c[1], c.get(2).copied().unwrap_or(0.0)];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm == 0.0 {
            return Err(malformed(id, "zero direction"));
        }
        Ok([v[0] / norm, v[1] / norm, v[2] / norm])
    }

    /// IfcAxis2Placement2D/3D as a plan placement. 3D axes must be +z.
    pub fn axis_placement(&self, id: u64) -> Result<Placement> {
        let e = self.entity(id)?;
        let [x, y, z] = match self.ref_arg(e, 0) {
            Some(loc) => self.point(loc)?,
            None => [0.0; 3],
        };
        let ref_dir_index = if e.is("IFCAXIS2PLACEMENT3D") {
            if let Some(axis) = self.ref_arg(e, 1) {
                let a = self.direction(axis)?;
                if a[0].abs() > AXIS_TOL || a[1].abs() > AXIS_TOL || a[2] <= 0.0 {
                    return Err(ModelError::NonPlanarAxis(id));
                }
            }
            2
        } else if e.is("IFCAXIS2PLACEMENT2D") {
            1
        } else {
            return Err(ModelError::UnsupportedRepresentation(e.type_name.clone()));
        };
        let theta = match self.ref_arg(e, ref_dir_index) {
            Some(d) => {
                let d = self.direction(d)?;
                d[1].atan2(d[0])
            }
            None => 0.0,
        };
        Ok(Placement {
            pose: Pose2D::new(x, y, theta),
            elevation: z,
        })
    }

    /// Compose an IfcLocalPlacement chain up to its root.
    pub fn compose_placement(&self, placement_id: u64) -> Result<Placement> {
        let mut chain = Vec::new();
        let mut seen = BTreeSet::new();
        let mut cursor = Some(placement_id);
        while let Some(id) = cursor {
            if !seen.insert(id) {
                chain.push(id);
                return Err(ModelError::PlacementCycle(chain));
            }
            chain.push(id);
            let e = self.entity(id)?;
            if !e.is("IFCLOCALPLACEMENT") {
                return Err(malformed(
                    id,
                    format!("expected IFCLOCALPLACEMENT, found {}", e.type_name),
                ));
            }
            cursor = self.ref_arg(e, 0);
        }
        let mut world = Placement::IDENTITY;
        for &id in chain.iter().rev() {
            let e = self.entity(id)?;
            let local = match self.ref_arg(e, 1) {
                Some(rel) => self.axis_placement(rel)?,
                None => Placement::IDENTITY,
            };
            world = world.then(&local);
        }
        Ok(world)
    }

    pub fn product_placement(&self, product_id: u64) -> Result<Placement> {
        let e = self.entity(product_id)?;
        match self.ref_arg(e, 5) {
            Some(p) => self.compose_placement(p),
            None => Ok(Placement::IDENTITY),
        }
    }

    /// Profile outline in the profile's own coordinates.
    fn profile_polygon(&self, id: u64) -> Result<Polygon2D> {
        let e = self.entity(id)?;
        let local = if e.is("IFCRECTANGLEPROFILEDEF") {
            let dim = |i| {
                e.arg(i)
                    .and_then(StepValue::as_f64)
                    .map(|v| v * self.scale)
                    .ok_or_else(|| malformed(id, "rectangle dimension"))
            };
            let (hx, hy) = (dim(3)? / 2.0, dim(4)? / 2.0);
            Polygon2D::rectangle(Point2::new(-hx, -hy), Point2::new(hx, hy))
        } else if e.is("IFCARBITRARYCLOSEDPROFILEDEF") {
            let curve_id = self.ref_arg(e, 2).ok_or_else(|| malformed(id, "outer curve"))?;
            let curve = self.entity(curve_id)?;
            if !curve.is("IFCPOLYLINE") {
                return Err(ModelError::UnsupportedRepresentation(curve.type_name.clone()));
            }
            let pts = curve
                .arg(0)
                .and_then(StepValue::as_list)
                .ok_or_else(|| malformed(curve_id, "polyline points"))?
                .iter()
                .map(|v| {
                    let pid = v.as_ref_id().ok_or_else(|| malformed(curve_id, "point reference"))?;
                    let [x, y, _] = self.point(pid)?;
                    Ok(Point2::new(x, y))
                })
                .collect::<Result<Vec<_>>>()?;
            Polygon2D::new(pts)
        } else {
            return Err(ModelError::UnsupportedRepresentation(e.type_name.clone()));
        };
        let mut poly = local.map_err(|err| match err {
            GeometryError::SelfIntersecting(..) => malformed(id, "self-intersecting profile"),
            _ => ModelError::DegenerateProfile(id),
        })?;
        if e.is("IFCRECTANGLEPROFILEDEF") {
            if let Some(pos) = self.ref_arg(e, 2) {
                poly = poly.transformed(&self.axis_placement(pos)?.pose);
            }
        }
        Ok(poly)
    }

    /// First extruded solid among a product's body items, unwrapping
    /// boolean clipping results to their first operand.
    fn find_extrusion(&self, product_id: u64) -> Result<u64> {
        let e = self.entity(product_id)?;
        let shape_id = self
            .ref_arg(e, 6)
            .ok_or(ModelError::MissingRepresentation(product_id))?;
        let shape = self.entity(shape_id)?;
        let reps = shape
            .arg(2)
            .and_then(StepValue::as_list)
            .ok_or_else(|| malformed(shape_id, "representations"))?;
        let mut reps: Vec<&StepEntity> = reps
            .iter()
            .filter_map(StepValue::as_ref_id)
            .map(|r| self.entity(r))
            .collect::<Result<_>>()?;
        // body representations first
        reps.sort_by_key(|r| r.arg(1).and_then(StepValue::as_text) != Some("Body"));

        let mut first_unsupported = None;
        for rep in reps {
            let items = rep.arg(3).and_then(StepValue::as_list).unwrap_or(&[]);
            for item in items.iter().filter_map(StepValue::as_ref_id) {
                let mut cur = self.entity(item)?;
                let mut hops = 0;
                while (cur.is("IFCBOOLEANCLIPPINGRESULT") || cur.is("IFCBOOLEANRESULT")) && hops < 16 {
                    let first = self
                        .ref_arg(cur, 1)
                        .ok_or_else(|| malformed(cur.id, "boolean operand"))?;
                    cur = self.entity(first)?;
                    hops += 1;
                }
                if cur.is("IFCEXTRUDEDAREASOLID") {
                    return Ok(cur.id);
                }
                first_unsupported.get_or_insert_with(|| cur.type_name.clone());
            }
        }
        Err(ModelError::UnsupportedRepresentation(
            first_unsupported.unwrap_or_else(|| "IFCPRODUCTDEFINITIONSHAPE".into()),
        ))
    }

    /// World footprint of a product's extruded body plus the body's world
    /// z-interval.
    pub fn body_footprint(&self, product_id: u64) -> Result<(Polygon2D, (f64, f64))> {
        let placement = self.product_placement(product_id)?;
        let solid_id = self.find_extrusion(product_id)?;
        let solid = self.entity(solid_id)?;
        // IfcExtrudedAreaSolid(SweptArea, Position, ExtrudedDirection, Depth)
        let profile_id = self
            .ref_arg(solid, 0)
            .ok_or_else(|| malformed(solid_id, "swept area"))?;
        let position = match self.ref_arg(solid, 1) {
            Some(p) => self.axis_placement(p)?,
            None => Placement::IDENTITY,
        };
        let dir_id = self
            .ref_arg(solid, 2)
            .ok_or_else(|| malformed(solid_id, "extrusion direction"))?;
        let dir = self.direction(dir_id)?;
        if dir[0].abs() > AXIS_TOL || dir[1].abs() > AXIS_TOL {
            return Err(ModelError::NonVerticalExtrusion(solid_id));
        }
        let depth = solid
            .arg(3)
            .and_then(StepValue::as_f64)
            .ok_or_else(|| malformed(solid_id, "depth"))?
            * self.scale;

        let world = placement.then(&position);
        let profile = self.profile_polygon(profile_id)?;
        let footprint = profile.transformed(&world.pose);
        let end = world.elevation + depth * dir[2].signum();
        let z_range = (world.elevation.min(end), world.elevation.max(end));
        Ok((footprint, z_range))
    }

    pub fn footprint(&self, product_id: u64, cut_height: f64) -> Result<Option<Polygon2D>> {
        let (poly, (lo, hi)) = self.body_footprint(product_id)?;
        Ok((lo <= cut_height && cut_height <= hi).then_some(poly))
    }
}

/// World plan pose and elevation of an IfcLocalPlacement chain.
pub fn compose_placement(graph: &EntityGraph, placement_id: u64) -> Result<Placement> {
    Resolver::new(graph).compose_placement(placement_id)
}

/// Plan footprint of a product cut at `cut_height`, or `None` when the body
/// does not reach that height.
pub fn footprint(graph: &EntityGraph, product_id: u64, cut_height: f64) -> Result<Option<Polygon2D>> {
    Resolver::new(graph).footprint(product_id, cut_height)
}

fn global_id(e: &StepEntity) -> Result<String> {
    e.arg(0)
        .and_then(StepValue::as_text)
        .map(str::to_string)
        .ok_or_else(|| malformed(e.id, "GlobalId"))
}

fn text_arg(e: &StepEntity, index: usize) -> Option<String> {
    e.arg(index).and_then(StepValue::as_text).map(str::to_string)
}

/// product id → relating material entity id.
fn material_links(graph: &EntityGraph) -> HashMap<u64, u64> {
    let mut links = HashMap::new();
    for &rel_id in graph.entities_of_type("IFCRELASSOCIATESMATERIAL") {
        let rel = graph.get(rel_id).unwrap();
        let Some(material) = rel.arg(5).and_then(StepValue::as_ref_id) else {
            continue;
        };
        for obj in rel.arg(4).and_then(StepValue::as_list).unwrap_or(&[]) {
            if let Some(id) = obj.as_ref_id() {
                links.entry(id).or_insert(material);
            }
        }
    }
    links
}

fn material_name(graph: &EntityGraph, id: u64, depth: usize) -> Option<String> {
    let e = graph.get(id)?;
    if depth > 6 {
        return None;
    }
    let follow = |index: usize| {
        let v = e.arg(index)?;
        let first = match v {
            StepValue::List(items) => items.first()?.as_ref_id()?,
            other => other.as_ref_id()?,
        };
        material_name(graph, first, depth + 1)
    };
    match e.type_name.as_str() {
        "IFCMATERIAL" => text_arg(e, 0),
        "IFCMATERIALLAYERSETUSAGE" | "IFCMATERIALPROFILESETUSAGE" => follow(0),
        "IFCMATERIALLAYERSET" | "IFCMATERIALLIST" | "IFCMATERIALPROFILESET" => follow(0).or_else(|| follow(2)),
        "IFCMATERIALLAYER" => follow(0),
        "IFCMATERIALPROFILE" => follow(2),
        "IFCMATERIALCONSTITUENTSET" => follow(2),
        "IFCMATERIALCONSTITUENT" => follow(2),
        _ => None,
    }
}

/// Material of a product via IfcRelAssociatesMaterial, looked up in
/// `table`. Products without an association are `UNKNOWN` and visible.
pub fn material_of(graph: &EntityGraph, product_id: u64, table: &VisibilityTable) -> MaterialInfo {
    let name = material_links(graph)
        .get(&product_id)
        .and_then(|&m| material_name(graph, m, 0))
        .unwrap_or_else(|| "UNKNOWN".to_string());
    table.material(&name)
}

/// One [`BoundaryRel`] per IfcRelSpaceBoundary record (and its level
/// subtypes), in ascending entity order.
pub fn space_boundaries(graph: &EntityGraph) -> Result<Vec<BoundaryRel>> {
    boundary_records(graph).into_iter().map(|(_, r)| r).collect()
}

fn boundary_records(graph: &EntityGraph) -> Vec<(u64, Result<BoundaryRel>)> {
    let mut ids: Vec<u64> = [
        "IFCRELSPACEBOUNDARY",
        "IFCRELSPACEBOUNDARY1STLEVEL",
        "IFCRELSPACEBOUNDARY2NDLEVEL",
    ]
    .iter()
    .flat_map(|t| graph.entities_of_type(t).iter().copied())
    .collect();
    ids.sort_unstable();
    ids.into_iter().map(|id| (id, boundary_record(graph, id))).collect()
}

fn boundary_record(graph: &EntityGraph, id: u64) -> Result<BoundaryRel> {
    let rel = graph.resolve_ref(id)?;
    let space_id = rel
        .arg(4)
        .and_then(StepValue::as_ref_id)
        .ok_or_else(|| malformed(id, "relating space"))?;
    let space = global_id(graph.resolve_ref(space_id)?)?;
    let flagged_virtual = rel.arg(7).and_then(StepValue::as_enum) == Some("VIRTUAL");
    let geometry = rel.arg(6).and_then(StepValue::as_ref_id);

    let (element, kind, shared) = match rel.arg(5).and_then(StepValue::as_ref_id) {
        None => (None, BoundaryKind::Virtual, geometry),
        Some(el) => {
            let e = graph.resolve_ref(el)?;
            if e.is("IFCVIRTUALELEMENT") {
                (None, BoundaryKind::Virtual, Some(el))
            } else if flagged_virtual {
                (Some(global_id(e)?), BoundaryKind::Virtual, geometry)
            } else {
                (Some(global_id(e)?), BoundaryKind::Physical, None)
            }
        }
    };
    Ok(BoundaryRel {
        global_id: global_id(rel)?,
        space,
        element,
        kind,
        shared_geometry: shared,
    })
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ExtractOptions {
    /// Cut plane height above each element's storey elevation.
    pub cut_offset: f64,
    pub visibility: VisibilityTable,
    pub function_tags: FunctionTagRules,
    /// Restrict to one storey (matched by name or GlobalId).
    pub storey: Option<String>,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            cut_offset: 1.0,
            visibility: VisibilityTable::default(),
            function_tags: FunctionTagRules::default(),
            storey: None,
        }
    }
}

/// One element that could not be (fully) extracted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtractionIssue {
    pub entity: u64,
    pub global_id: Option<String>,
    #[serde(serialize_with = "serialize_display")]
    pub error: ModelError,
}

fn serialize_display<S: serde::Serializer>(e: &ModelError, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(e)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub model: BuildingModel,
    pub issues: Vec<ExtractionIssue>,
}

pub fn extract_model(graph: &EntityGraph) -> Extraction {
    extract_model_with(graph, &ExtractOptions::default())
}

struct Extractor<'g> {
    r: Resolver<'g>,
    opts: &'g ExtractOptions,
    parents: HashMap<u64, u64>,
    storey_ids: HashMap<u64, String>,
    storey_elevation: HashMap<String, f64>,
    issues: Vec<ExtractionIssue>,
}

impl<'g> Extractor<'g> {
    fn issue(&mut self, entity: u64, error: ModelError) {
        let global_id = self.r.graph.get(entity).and_then(|e| global_id(e).ok());
        self.issues.push(ExtractionIssue {
            entity,
            global_id,
            error,
        });
    }

    fn storey_of(&self, id: u64) -> Option<String> {
        let mut cur = id;
        for _ in 0..64 {
            if let Some(s) = self.storey_ids.get(&cur) {
                return Some(s.clone());
            }
            cur = *self.parents.get(&cur)?;
        }
        None
    }

    fn cut_height(&self, storey: Option<&String>) -> f64 {
        storey
            .and_then(|s| self.storey_elevation.get(s))
            .copied()
            .unwrap_or(0.0)
            + self.opts.cut_offset
    }

    fn in_scope(&self, storey: Option<&String>, storeys: &[Storey]) -> bool {
        match &self.opts.storey {
            None => true,
            Some(wanted) => storey
                .and_then(|gid| storeys.iter().find(|s| &s.global_id == gid))
                .is_some_and(|s| &s.name == wanted || &s.global_id == wanted),
        }
    }
}

pub fn extract_model_with(graph: &EntityGraph, opts: &ExtractOptions) -> Extraction {
    let r = Resolver::new(graph);
    let mut parents = HashMap::new();
    for &rel_id in graph.entities_of_type("IFCRELAGGREGATES") {
        let rel = graph.get(rel_id).unwrap();
        if let Some(parent) = rel.arg(4).and_then(StepValue::as_ref_id) {
            for child in rel.arg(5).and_then(StepValue::as_list).unwrap_or(&[]) {
                if let Some(c) = child.as_ref_id() {
                    parents.insert(c, parent);
                }
            }
        }
    }
    for &rel_id in graph.entities_of_type("IFCRELCONTAINEDINSPATIALSTRUCTURE") {
        let rel = graph.get(rel_id).unwrap();
        if let Some(parent) = rel.arg(5).and_then(StepValue::as_ref_id) {
            for child in rel.arg(4).and_then(StepValue::as_list).unwrap_or(&[]) {
                if let Some(c) = child.as_ref_id() {
                    parents.entry(c).or_insert(parent);
                }
            }
        }
    }

    let mut ex = Extractor {
        r,
        opts,
        parents,
        storey_ids: HashMap::new(),
        storey_elevation: HashMap::new(),
        issues: Vec::new(),
    };
    let mut model = BuildingModel {
        unit_scale: ex.r.scale,
        project_name: graph
            .entities_of_type("IFCPROJECT")
            .first()
            .and_then(|&id| graph.get(id))
            .and_then(|p| text_arg(p, 2).or_else(|| text_arg(p, 7)))
            .unwrap_or_default(),
        ..Default::default()
    };

    for &id in graph.entities_of_type("IFCBUILDINGSTOREY") {
        let e = graph.get(id).unwrap();
        let gid = match global_id(e) {
            Ok(g) => g,
            Err(err) => {
                ex.issue(id, err);
                continue;
            }
        };
        let elevation = match ex.r.product_placement(id) {
            Ok(p) => p.elevation,
            Err(_) => e.arg(9).and_then(StepValue::as_f64).unwrap_or(0.0) * ex.r.scale,
        };
        ex.storey_ids.insert(id, gid.clone());
        ex.storey_elevation.insert(gid.clone(), elevation);
        model.storeys.push(Storey {
            global_id: gid,
            name: text_arg(e, 2).unwrap_or_default(),
            elevation,
        });
    }

    // element (entity id) -> global id, for everything we extract
    let mut extracted: BTreeMap<String, u64> = BTreeMap::new();

    for &id in graph.entities_of_type("IFCSPACE") {
        let e = graph.get(id).unwrap();
        let storey = ex.storey_of(id);
        if !ex.in_scope(storey.as_ref(), &model.storeys) {
            continue;
        }
        let gid = match global_id(e) {
            Ok(g) => g,
            Err(err) => {
                ex.issue(id, err);
                continue;
            }
        };
        match ex.r.footprint(id, ex.cut_height(storey.as_ref())) {
            Ok(Some(polygon)) => {
                let long_name = text_arg(e, 7).or_else(|| text_arg(e, 2)).unwrap_or_default();
                extracted.insert(gid.clone(), id);
                model.spaces.push(SpaceRec {
                    entity_id: id,
                    function_tags: opts.function_tags.tags_for(&long_name),
                    global_id: gid,
                    long_name,
                    centroid: polygon.centroid(),
                    polygon,
                    storey,
                });
            }
            Ok(None) => ex.issue(id, ModelError::NotAtCutHeight(id)),
            Err(err) => ex.issue(id, err),
        }
    }

    let materials = material_links(graph);
    let mut host_of_opening = HashMap::new();
    for &rel_id in graph.entities_of_type("IFCRELVOIDSELEMENT") {
        let rel = graph.get(rel_id).unwrap();
        if let (Some(wall), Some(opening)) = (
            rel.arg(4).and_then(StepValue::as_ref_id),
            rel.arg(5).and_then(StepValue::as_ref_id),
        ) {
            host_of_opening.insert(opening, wall);
        }
    }
    let mut host_of_door = HashMap::new();
    for &rel_id in graph.entities_of_type("IFCRELFILLSELEMENT") {
        let rel = graph.get(rel_id).unwrap();
        if let (Some(opening), Some(filler)) = (
            rel.arg(4).and_then(StepValue::as_ref_id),
            rel.arg(5).and_then(StepValue::as_ref_id),
        ) {
            if let Some(wall) = host_of_opening.get(&opening) {
                host_of_door.insert(filler, *wall);
            }
        }
    }

    let mut landmark_ids: Vec<(u64, LandmarkClass)> = LandmarkClass::ALL
        .iter()
        .flat_map(|&c| {
            c.step_types()
                .iter()
                .flat_map(move |t| graph.entities_of_type(t).iter().map(move |&id| (id, c)))
        })
        .collect();
    landmark_ids.sort_unstable();

    for (id, class) in landmark_ids {
        let e = graph.get(id).unwrap();
        let storey = ex.storey_of(id);
        if !ex.in_scope(storey.as_ref(), &model.storeys) {
            continue;
        }
        let gid = match global_id(e) {
            Ok(g) => g,
            Err(err) => {
                ex.issue(id, err);
                continue;
            }
        };
        let placement = match ex.r.product_placement(id) {
            Ok(p) => p,
            Err(err) => {
                ex.issue(id, err);
                continue;
            }
        };
        let footprint = match ex.r.footprint(id, ex.cut_height(storey.as_ref())) {
            Ok(Some(f)) => f,
            Ok(None) => {
                ex.issue(id, ModelError::NotAtCutHeight(id));
                continue;
            }
            Err(err) => {
                ex.issue(id, err);
                continue;
            }
        };
        let material = opts.visibility.material(
            &materials
                .get(&id)
                .and_then(|&m| material_name(graph, m, 0))
                .unwrap_or_else(|| "UNKNOWN".to_string()),
        );

        if class == LandmarkClass::IfcDoor {
            let scaled = |i| e.arg(i).and_then(StepValue::as_f64).map(|v| v * ex.r.scale);
            match (scaled(9), scaled(8)) {
                (Some(width), Some(height)) if width > 0.0 && height > 0.0 => {
                    model.doors.push(DoorRec {
                        global_id: gid.clone(),
                        width,
                        height,
                        center: footprint.centroid(),
                        host_wall: host_of_door
                            .get(&id)
                            .and_then(|w| graph.get(*w))
                            .and_then(|w| global_id(w).ok()),
                    });
                }
                _ => {
                    ex.issue(id, ModelError::DoorWithoutSize(id));
                    continue;
                }
            }
        }

        extracted.insert(gid.clone(), id);
        model.landmarks.push(Landmark {
            entity_id: id,
            global_id: gid,
            ifc_class: class,
            footprint,
            pose: placement.pose,
            elevation: placement.elevation,
            material,
            storey,
        });
    }

    let space_ids: BTreeSet<&str> = model.spaces.iter().map(|s| s.global_id.as_str()).collect();
    let mut boundaries = Vec::new();
    for (rel_id, record) in boundary_records(graph) {
        let rel = match record {
            Ok(rel) => rel,
            Err(err) => {
                ex.issue(rel_id, err);
                continue;
            }
        };
        if !space_ids.contains(rel.space.as_str()) {
            // space outside the storey filter or failed; reported above
            continue;
        }
        if let Some(element) = &rel.element {
            if !extracted.contains_key(element) {
                let reason = graph
                    .resolve_ref(rel_id)
                    .ok()
                    .and_then(|e| e.arg(5).and_then(StepValue::as_ref_id))
                    .and_then(|el| graph.get(el))
                    .filter(|el| LandmarkClass::from_step_type(&el.type_name).is_none())
                    .map(|el| ModelError::NotALandmark {
                        id: el.id,
                        type_name: el.type_name.clone(),
                    });
                if let Some(reason) = reason {
                    ex.issue(rel_id, reason);
                }
                // landmark-class elements that failed already have an issue
                continue;
            }
        }
        boundaries.push(rel);
    }
    model.boundaries = boundaries;

    Extraction {
        model,
        issues: ex.issues,
    }
}
