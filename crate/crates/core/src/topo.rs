//! Topological map: spaces as nodes, doors and virtual openings as edges,
//! with a uniform-cost route planner over it.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::Point2;
use crate::model::{BoundaryKind, BuildingModel};

/// Points within this distance of a space edge count as on its boundary.
pub const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopoError {
    #[error("unknown space `{0}`")]
    UnknownSpace(String),
    #[error("no route from {0} to {1}")]
    NoRoute(String, String),
    #[error("space name `{name}` is ambiguous: {ids:?}")]
    AmbiguousName { name: String, ids: Vec<String> },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, TopoError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopoNode {
    pub id: String,
    pub long_name: String,
    pub centroid: Point2,
    pub storey: Option<String>,
    pub function_tags: Vec<String>,
    /// Some boundary landmark is invisible to range sensors, so the prior
    /// grid should be trusted over live scans inside this room.
    pub grid_trust: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", content = "id", rename_all = "lowercase")]
pub enum Via {
    Door(String),
    Virtual,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopoEdge {
    /// Endpoints, `a < b`.
    pub a: String,
    pub b: String,
    pub via: Via,
    pub door_center: Option<Point2>,
    pub width: Option<f64>,
    pub height: Option<f64>,
    pub length_cost: f64,
}

impl TopoEdge {
    pub fn other(&self, id: &str) -> &str {
        if self.a == id {
            &self.b
        } else {
            &self.a
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TopoMap {
    /// Sorted by id.
    pub nodes: Vec<TopoNode>,
    /// Sorted by (a, b, via).
    pub edges: Vec<TopoEdge>,
    #[serde(skip)]
    adjacency: Vec<Vec<usize>>,
}

/// Edges with a non-positive geometric cost (coincident centroids) get this.
const MIN_EDGE_COST: f64 = 1e-9;

pub fn build_topological_map(model: &BuildingModel) -> TopoMap {
    let storey_name = |gid: &Option<String>| {
        gid.as_deref()
            .map(|g| model.storey(g).map_or_else(|| g.to_string(), |s| s.name.clone()))
    };
    let nodes: Vec<TopoNode> = model
        .spaces
        .iter()
        .map(|s| TopoNode {
            id: s.global_id.clone(),
            long_name: s.long_name.clone(),
            centroid: s.centroid,
            storey: storey_name(&s.storey),
            function_tags: s.function_tags.clone(),
            grid_trust: model.has_invisible_boundary(&s.global_id),
        })
        .collect();

    // door id -> spaces it bounds; shared geometry -> spaces
    let mut door_spaces: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut virtual_spaces: BTreeMap<u64, BTreeSet<&str>> = BTreeMap::new();
    for b in &model.boundaries {
        if model.space(&b.space).is_none() {
            continue;
        }
        match (b.kind, b.element.as_deref()) {
            (BoundaryKind::Physical, Some(el)) if model.door(el).is_some() => {
                door_spaces.entry(el).or_default().insert(&b.space);
            }
            (BoundaryKind::Virtual, _) => {
                if let Some(g) = b.shared_geometry {
                    virtual_spaces.entry(g).or_default().insert(&b.space);
                }
            }
            _ => {}
        }
    }

    let centroid = |id: &str| model.space(id).map(|s| s.centroid).unwrap();
    let mut edges = BTreeMap::new();
    for (door_id, spaces) in &door_spaces {
        let door = model.door(door_id).unwrap();
        for (a, b) in pairs(spaces) {
            let cost = centroid(a).distance(door.center) + door.center.distance(centroid(b));
            let via = Via::Door(door_id.to_string());
            edges.insert(
                (a.to_string(), b.to_string(), via.clone()),
                TopoEdge {
                    a: a.to_string(),
                    b: b.to_string(),
                    via,
                    door_center: Some(door.center),
                    width: Some(door.width),
                    height: Some(door.height),
                    length_cost: cost.max(MIN_EDGE_COST),
                },
            );
        }
    }
    for spaces in virtual_spaces.values() {
        for (a, b) in pairs(spaces) {
            let cost = centroid(a).distance(centroid(b));
            edges.insert(
                (a.to_string(), b.to_string(), Via::Virtual),
                TopoEdge {
                    a: a.to_string(),
                    b: b.to_string(),
                    via: Via::Virtual,
                    door_center: None,
                    width: None,
                    height: None,
                    length_cost: cost.max(MIN_EDGE_COST),
                },
            );
        }
    }
    TopoMap::from_parts(nodes, edges.into_values().collect())
}

fn pairs<'a>(set: &BTreeSet<&'a str>) -> Vec<(&'a str, &'a str)> {
    let v: Vec<&str> = set.iter().copied().collect();
    let mut out = Vec::new();
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            out.push((v[i], v[j]));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Waypoint {
    Room {
        space: String,
        name: String,
        point: Point2,
    },
    Door {
        door: String,
        point: Point2,
        width: f64,
        height: f64,
        /// Applies to the room being entered.
        grid_trust: bool,
    },
}

impl Waypoint {
    pub fn point(&self) -> Point2 {
        match self {
            Waypoint::Room { point, .. } | Waypoint::Door { point, .. } => *point,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Route {
    pub nodes: Vec<String>,
    /// `vias[i]` joins `nodes[i]` and `nodes[i + 1]`.
    pub vias: Vec<Via>,
    pub total_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Label {
    cost: f64,
    path: Vec<usize>,
    vias: Vec<usize>,
}

impl Eq for Label {}

impl Ord for Label {
    // reversed so BinaryHeap pops the cheapest, then lexicographically smallest
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.path.cmp(&self.path))
            .then_with(|| other.vias.cmp(&self.vias))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl TopoMap {
    pub fn from_parts(mut nodes: Vec<TopoNode>, mut edges: Vec<TopoEdge>) -> TopoMap {
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        for e in &mut edges {
            if e.a > e.b {
                std::mem::swap(&mut e.a, &mut e.b);
            }
        }
        edges.sort_by(|x, y| (&x.a, &x.b, &x.via).cmp(&(&y.a, &y.b, &y.via)));
        let mut map = TopoMap {
            nodes,
            edges,
            adjacency: Vec::new(),
        };
        map.adjacency = vec![Vec::new(); map.nodes.len()];
        for (i, e) in map.edges.iter().enumerate() {
            if let (Some(a), Some(b)) = (map.index(&e.a), map.index(&e.b)) {
                if a != b {
                    map.adjacency[a].push(i);
                    map.adjacency[b].push(i);
                }
            }
        }
        map
    }

    fn index(&self, id: &str) -> Option<usize> {
        self.nodes.binary_search_by(|n| n.id.as_str().cmp(id)).ok()
    }

    pub fn node(&self, id: &str) -> Option<&TopoNode> {
        self.index(id).map(|i| &self.nodes[i])
    }

    pub fn neighbours(&self, id: &str) -> impl Iterator<Item = &TopoEdge> {
        self.index(id)
            .into_iter()
            .flat_map(move |i| self.adjacency[i].iter().map(|&e| &self.edges[e]))
    }

    /// Look a space up by GlobalId, then by long name.
    pub fn resolve(&self, key: &str) -> Result<&TopoNode> {
        if let Some(n) = self.node(key) {
            return Ok(n);
        }
        let hits: Vec<&TopoNode> = self.nodes.iter().filter(|n| n.long_name == key).collect();
        match hits.as_slice() {
            [one] => Ok(one),
            [] => Err(TopoError::UnknownSpace(key.to_string())),
            many => Err(TopoError::AmbiguousName {
                name: key.to_string(),
                ids: many.iter().map(|n| n.id.clone()).collect(),
            }),
        }
    }

    /// Long names repeated within one storey.
    pub fn duplicate_names(&self) -> Vec<TopoError> {
        let mut seen: BTreeMap<(Option<&str>, &str), Vec<String>> = BTreeMap::new();
        for n in &self.nodes {
            seen.entry((n.storey.as_deref(), &n.long_name))
                .or_default()
                .push(n.id.clone());
        }
        seen.into_iter()
            .filter(|(_, ids)| ids.len() > 1)
            .map(|((_, name), ids)| TopoError::AmbiguousName {
                name: name.to_string(),
                ids,
            })
            .collect()
    }

    /// Uniform-cost search. Ties are broken by the smallest node-id sequence.
    pub fn plan_path(&self, start: &str, goal: &str) -> Result<Route> {
        let s = self.index(start).ok_or_else(|| TopoError::UnknownSpace(start.into()))?;
        let g = self.index(goal).ok_or_else(|| TopoError::UnknownSpace(goal.into()))?;
        let mut best: Vec<Option<Label>> = vec![None; self.nodes.len()];
        let mut done = vec![false; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        heap.push(Label {
            cost: 0.0,
            path: vec![s],
            vias: Vec::new(),
        });
        while let Some(label) = heap.pop() {
            let u = *label.path.last().unwrap();
            if done[u] {
                continue;
            }
            done[u] = true;
            if u == g {
                return Ok(Route {
                    nodes: label.path.iter().map(|&i| self.nodes[i].id.clone()).collect(),
                    vias: label.vias.iter().map(|&e| self.edges[e].via.clone()).collect(),
                    total_cost: label.cost,
                });
            }
            for &ei in &self.adjacency[u] {
                let e = &self.edges[ei];
                let v = self.index(e.other(&self.nodes[u].id)).unwrap();
                if done[v] {
                    continue;
                }
                let mut path = label.path.clone();
                path.push(v);
                let mut vias = label.vias.clone();
                vias.push(ei);
                let next = Label {
                    cost: label.cost + e.length_cost,
                    path,
                    vias,
                };
                // `Ord` is reversed: greater means cheaper
                if best[v].as_ref().is_none_or(|b| next > *b) {
                    best[v] = Some(next.clone());
                    heap.push(next);
                }
            }
        }
        Err(TopoError::NoRoute(start.into(), goal.into()))
    }

    /// Centroid, door, centroid, ... for a route. Virtual openings add no
    /// intermediate point.
    pub fn waypoints(&self, route: &Route) -> Vec<Waypoint> {
        let room = |id: &str| {
            let n = self.node(id).expect("route nodes come from this map");
            Waypoint::Room {
                space: n.id.clone(),
                name: n.long_name.clone(),
                point: n.centroid,
            }
        };
        let mut out = vec![room(&route.nodes[0])];
        for (i, via) in route.vias.iter().enumerate() {
            let (a, b) = (&route.nodes[i], &route.nodes[i + 1]);
            if let Via::Door(door) = via {
                let e = self
                    .neighbours(a)
                    .find(|e| e.other(a) == b && &e.via == via)
                    .expect("route edges come from this map");
                out.push(Waypoint::Door {
                    door: door.clone(),
                    point: e.door_center.unwrap(),
                    width: e.width.unwrap_or(0.0),
                    height: e.height.unwrap_or(0.0),
                    grid_trust: self.node(b).is_some_and(|n| n.grid_trust),
                });
            }
            out.push(room(b));
        }
        out
    }

    /// Tab-separated waypoint listing for a route.
    pub fn route_report(&self, route: &Route) -> String {
        let name = |id: &str| self.node(id).map_or("-", |n| n.long_name.as_str()).to_string();
        let mut out = String::from("# birs route v1\n");
        let (first, last) = (&route.nodes[0], route.nodes.last().unwrap());
        let _ = writeln!(out, "# from {first}\t{}", name(first));
        let _ = writeln!(out, "# to {last}\t{}", name(last));
        let _ = writeln!(out, "# total_cost {:.6}", route.total_cost);
        out.push_str("# step\tkind\tid\tname\tx\ty\twidth\theight\tgrid_trust\n");
        for (i, w) in self.waypoints(route).iter().enumerate() {
            let p = w.point();
            let _ = match w {
                Waypoint::Room { space, name, .. } => {
                    writeln!(out, "{i}\troom\t{space}\t{name}\t{:.3}\t{:.3}\t-\t-\t-", p.x, p.y)
                }
                Waypoint::Door {
                    door,
                    width,
                    height,
                    grid_trust,
                    ..
                } => writeln!(
                    out,
                    "{i}\tdoor\t{door}\t-\t{:.3}\t{:.3}\t{width:.3}\t{height:.3}\t{grid_trust}",
                    p.x, p.y
                ),
            };
        }
        out
    }

    /// Line-oriented, tab-separated export: node records then edge records.
    pub fn to_document(&self) -> String {
        let mut out = String::from("# birs topological map v1\n");
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| v.to_string());
        for n in &self.nodes {
            let _ = writeln!(
                out,
                "NODE\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                n.id,
                n.long_name,
                n.centroid.x,
                n.centroid.y,
                n.storey.as_deref().unwrap_or("-"),
                if n.function_tags.is_empty() {
                    "-".to_string()
                } else {
                    n.function_tags.join(",")
                },
                n.grid_trust
            );
        }
        for e in &self.edges {
            let via = match &e.via {
                Via::Door(d) => d.as_str(),
                Via::Virtual => "VIRTUAL",
            };
            let _ = writeln!(
                out,
                "EDGE\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                e.a,
                e.b,
                via,
                opt(e.door_center.map(|p| p.x)),
                opt(e.door_center.map(|p| p.y)),
                opt(e.width),
                opt(e.height),
                e.length_cost
            );
        }
        out
    }

    pub fn from_document(doc: &str) -> Result<TopoMap> {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for (i, line) in doc.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: &str| TopoError::Syntax {
                line: i + 1,
                message: m.to_string(),
            };
            let num = |s: &str| s.parse::<f64>().map_err(|_| err("bad number"));
            let opt = |s: &str| if s == "-" { Ok(None) } else { num(s).map(Some) };
            let f: Vec<&str> = line.split('\t').collect();
            match f.as_slice() {
                ["NODE", id, name, x, y, storey, tags, trust] => nodes.push(TopoNode {
                    id: id.to_string(),
                    long_name: name.to_string(),
                    centroid: Point2::new(num(x)?, num(y)?),
                    storey: (*storey != "-").then(|| storey.to_string()),
                    function_tags: if *tags == "-" {
                        Vec::new()
                    } else {
                        tags.split(',').map(str::to_string).collect()
                    },
                    grid_trust: trust.parse().map_err(|_| err("bad flag"))?,
                }),
                ["EDGE", a, b, via, cx, cy, w, h, cost] => {
                    let center = match (opt(cx)?, opt(cy)?) {
                        (Some(x), Some(y)) => Some(Point2::new(x, y)),
                        _ => None,
                    };
                    edges.push(TopoEdge {
                        a: a.to_string(),
                        b: b.to_string(),
                        via: if *via == "VIRTUAL" {
                            Via::Virtual
                        } else {
                            Via::Door(via.to_string())
                        },
                        door_center: center,
                        width: opt(w)?,
                        height: opt(h)?,
                        length_cost: num(cost)?,
                    })
                }
                _ => return Err(err("expected a NODE or EDGE record")),
            }
        }
        Ok(TopoMap::from_parts(nodes, edges))
    }
}

/// The space containing `p`. Points on a shared edge go to the smallest
/// GlobalId.
pub fn room_of_point(model: &BuildingModel, p: Point2) -> Option<&str> {
    model
        .spaces
        .iter()
        .filter(|s| s.polygon.contains(p) || s.polygon.on_boundary(p, BOUNDARY_TOL))
        .map(|s| s.global_id.as_str())
        .min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon2D;
    use crate::model::{BoundaryRel, DoorRec, SpaceRec};

    fn space(id: &str, x0: f64, y0: f64, x1: f64, y1: f64) -> SpaceRec {
        let polygon = Polygon2D::rectangle(Point2::new(x0, y0), Point2::new(x1, y1)).unwrap();
        SpaceRec {
            entity_id: 0,
            global_id: id.into(),
            long_name: format!("ROOM {id}"),
            centroid: polygon.centroid(),
            polygon,
            storey: None,
            function_tags: vec![],
        }
    }

    fn door(id: &str, x: f64, y: f64) -> DoorRec {
        DoorRec {
            global_id: id.into(),
            width: 0.9,
            height: 2.1,
            center: Point2::new(x, y),
            host_wall: None,
        }
    }

    fn bound(space: &str, el: &str) -> BoundaryRel {
        BoundaryRel {
            global_id: format!("{space}-{el}"),
            space: space.into(),
            element: Some(el.into()),
            kind: BoundaryKind::Physical,
            shared_geometry: None,
        }
    }

    fn virt(space: &str, geom: u64) -> BoundaryRel {
        BoundaryRel {
            global_id: format!("{space}-v{geom}"),
            space: space.into(),
            element: None,
            kind: BoundaryKind::Virtual,
            shared_geometry: Some(geom),
        }
    }

    /// A  B  C in a row; A-B via door d1, B-C via d2, A-C via virtual.
    fn row() -> BuildingModel {
        BuildingModel {
            spaces: vec![
                space("A", 0.0, 0.0, 2.0, 2.0),
                space("B", 2.0, 0.0, 4.0, 2.0),
                space("C", 4.0, 0.0, 6.0, 2.0),
            ],
            doors: vec![door("d1", 2.0, 1.0), door("d2", 4.0, 1.0), door("lonely", 6.0, 1.0)],
            boundaries: vec![
                bound("A", "d1"),
                bound("B", "d1"),
                bound("B", "d2"),
                bound("C", "d2"),
                bound("C", "lonely"),
            ],
            ..Default::default()
        }
    }

    #[test]
    fn door_edges() {
        let m = build_topological_map(&row());
        assert_eq!(m.nodes.len(), 3);
        assert_eq!(m.edges.len(), 2);
        assert_eq!(m.edges[0].length_cost, 2.0);
        assert_eq!(m.edges[0].via, Via::Door("d1".into()));
    }

    #[test]
    fn single_space_has_no_edges() {
        let model = BuildingModel {
            spaces: vec![space("A", 0.0, 0.0, 1.0, 1.0)],
            ..Default::default()
        };
        let m = build_topological_map(&model);
        assert_eq!((m.nodes.len(), m.edges.len()), (1, 0));
    }

    #[test]
    fn virtual_edges_pair_by_geometry() {
        let mut model = row();
        model.boundaries.push(virt("A", 77));
        model.boundaries.push(virt("C", 77));
        model.boundaries.push(virt("B", 78));
        let m = build_topological_map(&model);
        assert_eq!(m.edges.len(), 3);
        let v = m.edges.iter().find(|e| e.via == Via::Virtual).unwrap();
        assert_eq!((v.a.as_str(), v.b.as_str(), v.length_cost), ("A", "C", 4.0));
        // equal cost to the door route, and A,B,C sorts before A,C
        let r = m.plan_path("A", "C").unwrap();
        assert_eq!(r.nodes, vec!["A", "B", "C"]);
        let r = m.plan_path("C", "A").unwrap();
        assert_eq!(r.nodes, vec!["C", "A"]);
        assert_eq!(r.vias, vec![Via::Virtual]);
        assert_eq!(m.waypoints(&r).len(), 2);
    }

    #[test]
    fn plan_and_waypoints() {
        let m = build_topological_map(&row());
        let r = m.plan_path("A", "C").unwrap();
        assert_eq!(r.nodes, vec!["A", "B", "C"]);
        assert_eq!(r.total_cost, 4.0);
        let w = m.waypoints(&r);
        assert_eq!(w.len(), 5);
        assert_eq!(w[1].point(), Point2::new(2.0, 1.0));
        let same = m.plan_path("B", "B").unwrap();
        assert_eq!((same.nodes.len(), same.total_cost), (1, 0.0));
        assert_eq!(m.waypoints(&same).len(), 1);
        assert_eq!(m.plan_path("A", "Z"), Err(TopoError::UnknownSpace("Z".into())));
    }

    #[test]
    fn disconnected_is_no_route() {
        let mut model = row();
        model.spaces.push(space("D", 10.0, 0.0, 11.0, 1.0));
        let m = build_topological_map(&model);
        assert_eq!(m.plan_path("A", "D"), Err(TopoError::NoRoute("A".into(), "D".into())));
    }

    #[test]
    fn room_lookup() {
        let model = row();
        assert_eq!(room_of_point(&model, Point2::new(1.0, 1.0)), Some("A"));
        assert_eq!(room_of_point(&model, Point2::new(2.0, 1.0)), Some("A"));
        assert_eq!(room_of_point(&model, Point2::new(4.0, 0.5)), Some("B"));
        assert_eq!(room_of_point(&model, Point2::new(-1.0, 1.0)), None);
    }

    #[test]
    fn document_round_trip() {
        let mut model = row();
        model.boundaries.push(virt("A", 77));
        model.boundaries.push(virt("C", 77));
        model.spaces[0].function_tags = vec!["office".into(), "contractor_office".into()];
        let m = build_topological_map(&model);
        let doc = m.to_document();
        assert!(doc.contains("EDGE\tA\tB\td1\t2\t1\t0.9\t2.1\t2\n"));
        assert_eq!(TopoMap::from_document(&doc).unwrap(), m);
    }

    #[test]
    fn name_resolution() {
        let mut model = row();
        let m = build_topological_map(&model);
        assert_eq!(m.resolve("ROOM B").unwrap().id, "B");
        assert_eq!(m.resolve("B").unwrap().id, "B");
        assert!(m.duplicate_names().is_empty());
        model.spaces[2].long_name = "ROOM B".into();
        let m = build_topological_map(&model);
        assert!(matches!(m.resolve("ROOM B"), Err(TopoError::AmbiguousName { .. })));
        assert_eq!(m.duplicate_names().len(), 1);
    }
}
