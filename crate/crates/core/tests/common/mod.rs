#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use birs_core::geometry::{Point2, Polygon2D, Pose2D};
use birs_core::grid::{Cell, GridFrame, OccupancyGrid};
use birs_core::step::{EntityGraph, StepEntity, StepHeader, StepValue};
use birs_core::topo::{TopoEdge, TopoMap, TopoNode, Via};
use proptest::prelude::*;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// GlobalIds recorded next to the fixtures, by label.
pub fn fixture_id(label: &str) -> String {
    let text = std::fs::read_to_string(fixture("ids.txt")).unwrap();
    text.lines()
        .find_map(|l| {
            l.split_once('\t')
                .filter(|(k, _)| *k == label)
                .map(|(_, v)| v.to_string())
        })
        .unwrap_or_else(|| panic!("no id for {label}"))
}

/// Cheapest simple path by exhaustive depth-first enumeration.
pub fn brute_force(map: &TopoMap, from: &str, to: &str) -> Option<f64> {
    fn walk(map: &TopoMap, at: &str, to: &str, seen: &mut BTreeSet<String>, cost: f64, best: &mut Option<f64>) {
        if at == to {
            *best = Some(best.map_or(cost, |b: f64| b.min(cost)));
            return;
        }
        for e in map.edges.iter().filter(|e| e.a == at || e.b == at) {
            let next = e.other(at).to_string();
            if seen.insert(next.clone()) {
                walk(map, &next, to, seen, cost + e.length_cost, best);
                seen.remove(&next);
            }
        }
    }
    let mut best = None;
    let mut seen = BTreeSet::from([from.to_string()]);
    walk(map, from, to, &mut seen, 0.0, &mut best);
    best
}

pub fn step_value(depth: u32) -> BoxedStrategy<StepValue> {
    let leaf = prop_oneof![
        any::<i32>().prop_map(|v| StepValue::Integer(v as i64)),
        (-1e9f64..1e9).prop_map(StepValue::Real),
        prop_oneof![Just(1e-12), Just(-2.5e17), Just(0.0)].prop_map(StepValue::Real),
        "[ -~]{0,12}".prop_map(StepValue::Text),
        "[a-zé'\\\\ ]{0,6}".prop_map(StepValue::Text),
        "[A-Z][A-Z_]{0,8}".prop_map(StepValue::Enum),
        (1u64..40).prop_map(StepValue::Ref),
        Just(StepValue::Unset),
        Just(StepValue::Inherited),
    ];
    if depth == 0 {
        return leaf.boxed();
    }
    prop_oneof![
        3 => leaf,
        1 => prop::collection::vec(step_value(depth - 1), 0..4).prop_map(StepValue::List),
        1 => ("IFC[A-Z]{2,10}", (-1e3f64..1e3)).prop_map(|(t, v)| StepValue::Typed(t, Box::new(StepValue::Real(v)))),
    ]
    .boxed()
}

pub fn step_graph() -> impl Strategy<Value = EntityGraph> {
    prop::collection::btree_map(
        1u64..60,
        ("IFC[A-Z]{3,12}", prop::collection::vec(step_value(2), 0..6)),
        1..12,
    )
    .prop_map(|entities| {
        let header = StepHeader {
            file_description: vec![
                StepValue::List(vec![StepValue::Text("ViewDefinition".into())]),
                StepValue::Text("2;1".into()),
            ],
            file_name: vec![StepValue::Text("random.ifc".into())],
            file_schema: vec![StepValue::List(vec![StepValue::Text("IFC4".into())])],
        };
        EntityGraph::from_entities(
            header,
            entities
                .into_iter()
                .map(|(id, (type_name, args))| StepEntity { id, type_name, args }),
        )
        .unwrap()
    })
}

/// The canonical text with extra whitespace and comments between tokens.
pub fn loosen(canonical: &str, seed: u64) -> String {
    let mut out = String::new();
    let mut n = seed;
    let mut in_string = false;
    for ch in canonical.chars() {
        if ch == '\'' {
            in_string = !in_string;
        }
        out.push(ch);
        if !in_string && matches!(ch, ',' | '(' | ';' | '=') {
            n = n.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            match n >> 61 {
                0 => out.push(' '),
                1 => out.push_str("\n  "),
                2 => out.push_str("/* note */"),
                _ => {}
            }
        }
    }
    out
}

/// Star-shaped polygon around a centre: always simple.
pub fn star_polygon(extent: f64) -> impl Strategy<Value = Polygon2D> {
    (
        0.0..extent,
        0.0..extent,
        prop::collection::vec((0.0f64..1.0, 0.05f64..1.0), 3..9),
        0.25..extent / 2.0,
    )
        .prop_filter_map("degenerate", |(cx, cy, spokes, radius)| {
            let mut spokes = spokes;
            spokes.sort_by(|a, b| a.0.total_cmp(&b.0));
            let pts: Vec<Point2> = spokes
                .iter()
                .enumerate()
                .map(|(i, &(frac, r))| {
                    // keep angles strictly increasing
                    let a = (i as f64 + frac) / spokes.len() as f64 * std::f64::consts::TAU;
                    Point2::new(cx + radius * r * a.cos(), cy + radius * r * a.sin())
                })
                .collect();
            Polygon2D::new(pts).ok()
        })
}

/// Even-odd point-in-polygon, one test per cell.
pub fn inside(poly: &Polygon2D, p: Point2) -> bool {
    let v = poly.vertices();
    let mut odd = false;
    let mut j = v.len() - 1;
    for i in 0..v.len() {
        let (a, b) = (v[i], v[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if p.x < x {
                odd = !odd;
            }
        }
        j = i;
    }
    odd
}

pub fn layers() -> impl Strategy<Value = (GridFrame, Vec<Polygon2D>, Vec<Polygon2D>, Vec<Polygon2D>)> {
    (
        1usize..=100,
        1usize..=100,
        prop_oneof![Just(0.05), Just(0.1), Just(0.25), Just(0.3)],
        -20.0f64..20.0,
        -20.0f64..20.0,
    )
        .prop_flat_map(|(w, h, res, ox, oy)| {
            let frame = GridFrame {
                width: w,
                height: h,
                resolution: res,
                origin: Point2::new(ox, oy),
            };
            let extent = (w.max(h) as f64 * res).max(1.0);
            let shifted = move |v: Vec<Polygon2D>| -> Vec<Polygon2D> {
                let t = Pose2D::new(ox, oy, 0.0);
                v.into_iter().map(|p| p.transformed(&t)).collect()
            };
            (
                Just(frame),
                prop::collection::vec(star_polygon(extent), 0..4).prop_map(shifted),
                prop::collection::vec(star_polygon(extent), 0..3).prop_map(shifted),
                prop::collection::vec(star_polygon(extent), 0..3).prop_map(shifted),
            )
        })
}

pub fn random_map() -> impl Strategy<Value = TopoMap> {
    (2usize..=8)
        .prop_flat_map(|n| {
            let coords = prop::collection::vec((0.0f64..20.0, 0.0f64..20.0), n);
            let edges = prop::collection::vec((0..n, 0..n, 0.1f64..10.0, any::<bool>()), 0..(n * 2));
            (coords, edges)
        })
        .prop_map(|(coords, edges)| {
            let id = |i: usize| format!("N{i:02}");
            let nodes = coords
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| TopoNode {
                    id: id(i),
                    long_name: format!("ROOM {i}"),
                    centroid: Point2::new(x, y),
                    storey: None,
                    function_tags: vec![],
                    grid_trust: false,
                })
                .collect();
            let edges = edges
                .into_iter()
                .enumerate()
                .filter(|(_, (a, b, _, _))| a != b)
                .map(|(k, (a, b, cost, door))| {
                    let (a, b) = (a.min(b), a.max(b));
                    TopoEdge {
                        a: id(a),
                        b: id(b),
                        via: if door {
                            Via::Door(format!("D{k:02}"))
                        } else {
                            Via::Virtual
                        },
                        door_center: door.then(|| Point2::new(0.0, 0.0)),
                        width: door.then_some(0.9),
                        height: door.then_some(2.1),
                        length_cost: cost,
                    }
                })
                .collect();
            TopoMap::from_parts(nodes, edges)
        })
}

/// Cell state the layer rules give at `p`: doors carve, occupied wins
/// over free, nothing known is unknown.
pub fn expected_cell(occ: &[Polygon2D], doors: &[Polygon2D], free: &[Polygon2D], p: Point2) -> Cell {
    let in_door = doors.iter().any(|d| inside(d, p));
    if !in_door && occ.iter().any(|o| inside(o, p)) {
        Cell::Occupied
    } else if in_door || free.iter().any(|f| inside(f, p)) {
        Cell::Free
    } else {
        Cell::Unknown
    }
}

/// Cells where the rasterizer disagrees with [`expected_cell`].
pub fn raster_mismatches(frame: GridFrame, occ: &[Polygon2D], doors: &[Polygon2D], free: &[Polygon2D]) -> usize {
    let (o, d, f): (Vec<_>, Vec<_>, Vec<_>) = (occ.iter().collect(), doors.iter().collect(), free.iter().collect());
    let grid = OccupancyGrid::from_layers(frame, &o, &d, &f);
    (0..frame.height)
        .flat_map(|r| (0..frame.width).map(move |c| (c, r)))
        .filter(|&(c, r)| grid.get(c, r) != expected_cell(occ, doors, free, frame.cell_center(c, r)))
        .count()
}

/// Planner costs against exhaustive search for every pair, plus symmetry
/// and the triangle inequality.
pub fn check_planner(map: &TopoMap) -> Result<(), String> {
    let ids: Vec<&str> = map.nodes.iter().map(|n| n.id.as_str()).collect();
    let cost = |a: &str, b: &str| map.plan_path(a, b).ok().map(|r| r.total_cost);
    for &a in &ids {
        for &b in &ids {
            let got = cost(a, b);
            match (got, brute_force(map, a, b)) {
                (Some(x), Some(y)) if (x - y).abs() < 1e-9 => {}
                (None, None) => {}
                other => return Err(format!("{a} -> {b}: planner vs exhaustive {other:?}")),
            }
            match (got, cost(b, a)) {
                (Some(x), Some(y)) if (x - y).abs() < 1e-9 => {}
                (None, None) => {}
                other => return Err(format!("{a} <-> {b}: asymmetric {other:?}")),
            }
            for &c in &ids {
                if let (Some(ac), Some(ab), Some(bc)) = (cost(a, c), got, cost(b, c)) {
                    if ac > ab + bc + 1e-9 {
                        return Err(format!("{a} -> {c} costs {ac} > {ab} + {bc} via {b}"));
                    }
                }
            }
        }
    }
    Ok(())
}
