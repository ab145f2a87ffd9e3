mod common;

use birs_core::config::Config;
use birs_core::geometry::Point2;
use birs_core::gis::{parse_site_features, to_local, ObstacleCategory};
use birs_core::grid::{self, Cell, DiffKind, GridFrame, MapMeta, OccupancyGrid};
use birs_core::model::LandmarkClass;
use birs_core::ontology::{class, parse_patterns, Iri, Namespace, Predicate, Term, Triple, TripleStore};
use birs_core::pipeline::{self, Artifacts};
use birs_core::progress::Verdict;
use birs_core::step::parse_spf;
use birs_core::topo::{room_of_point, TopoMap, Waypoint};
use chrono::NaiveDate;
use common::{brute_force, fixture, fixture_id};

fn artifacts(config: &str) -> Artifacts {
    Artifacts::load(&Config::load(&fixture(config)).unwrap()).unwrap()
}

fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

#[test]
fn fixture_model_extracts_cleanly() {
    let a = artifacts("birs.toml");
    let m = a.model();
    assert!(a.issues.is_empty(), "{:?}", a.issues);
    assert_eq!(m.spaces.len(), 9);
    assert_eq!(m.doors.len(), 8);
    assert_eq!(m.storeys.len(), 1);
    assert_eq!(m.storeys[0].name, "NIVEAU 2");
    assert!(m
        .spaces
        .iter()
        .all(|s| s.storey.as_deref() == Some(m.storeys[0].global_id.as_str())));
    let office = m.space(&fixture_id("space 2004")).unwrap();
    assert_eq!(office.function_tags, ["collaborative", "meeting"]);
    for class in [
        LandmarkClass::IfcColumn,
        LandmarkClass::IfcStair,
        LandmarkClass::IfcRailing,
        LandmarkClass::IfcCurtainWall,
    ] {
        assert!(m.landmarks.iter().any(|l| l.ifc_class == class), "{class:?}");
    }
}

#[test]
fn every_space_contains_its_centroid() {
    let a = artifacts("birs.toml");
    for s in &a.model().spaces {
        assert_eq!(
            room_of_point(a.model(), s.centroid),
            Some(s.global_id.as_str()),
            "{}",
            s.long_name
        );
    }
    assert_eq!(room_of_point(a.model(), Point2::new(-5.0, -5.0)), None);
}

#[test]
fn curtain_wall_bounds_the_hall_and_hides_it_from_sensors() {
    let a = artifacts("birs.toml");
    let hall = fixture_id("space 2044");
    let wall = fixture_id("MUR-RIDEAU-2044");
    assert!(a
        .model()
        .boundaries_of(&hall)
        .any(|b| b.element.as_deref() == Some(wall.as_str())));
    let lm = a.model().landmark(&wall).unwrap();
    assert_eq!(lm.material.name(), "Glass - Clear");
    assert!(!lm.material.sensor_visible());
    assert!(a.model().has_invisible_boundary(&hall));
    assert!(a.store.contains(&Triple::new(
        Iri::inst(&hall),
        Predicate::BoundedBy,
        Term::Iri(Iri::inst(&wall))
    )));
    assert!(a.store.contains(&Triple::new(
        Iri::inst(&wall),
        Predicate::SensorVisible,
        Term::boolean(false)
    )));
}

#[test]
fn fixture_census() {
    let g = pipeline::parse_graph(&fixture("pavd2.ifc")).unwrap();
    assert!(g.dangling_references().is_empty());
    assert_eq!(g.header.schemas(), ["IFC4"]);
    let census: std::collections::BTreeMap<_, _> = g.census().into_iter().collect();
    assert_eq!(census["IFCSPACE"], 9);
    assert_eq!(census["IFCDOOR"], 8);
    assert_eq!(census["IFCCOLUMN"], 2);
    assert_eq!(census["IFCCURTAINWALL"], 1);
    let asbuilt = pipeline::parse_graph(&fixture("pavd2_asbuilt_uc4.ifc")).unwrap();
    assert!(asbuilt.census().contains(&("IFCCOLUMN", 3)));
}

#[test]
fn fixture_files_survive_canonical_reserialization() {
    for name in ["pavd2.ifc", "pavd2_asbuilt_uc4.ifc", "empty.ifc"] {
        let g = pipeline::parse_graph(&fixture(name)).unwrap();
        let text = g.to_canonical_string();
        assert_eq!(parse_spf(&text).unwrap(), g, "{name}");
    }
}

#[test]
fn route_from_west_corridor_to_washroom() {
    let a = artifacts("birs.toml");
    let id = |name| a.topo.resolve(name).unwrap().id.as_str();
    let route = a
        .topo
        .plan_path(id("CORRIDOR OUEST 2019"), id("W.C. HOMMES 2002"))
        .unwrap();
    let names: Vec<&str> = route
        .nodes
        .iter()
        .map(|id| a.topo.node(id).unwrap().long_name.as_str())
        .collect();
    assert_eq!(
        names,
        [
            "CORRIDOR OUEST 2019",
            "VESTIBULE 2043",
            "HALL 2044",
            "VESTIBULE 2042",
            "CORRIDOR EST 2007",
            "ESPACE CLLABORATIF 2004",
            "W.C. HOMMES 2002",
        ]
    );
    let doors: Vec<(Point2, bool)> = a
        .topo
        .waypoints(&route)
        .into_iter()
        .filter_map(|w| match w {
            Waypoint::Door { point, grid_trust, .. } => Some((point, grid_trust)),
            _ => None,
        })
        .collect();
    assert_eq!(doors.len(), 6);
    // only the door into the hall warns about the glass wall
    let trusted: Vec<Point2> = doors.iter().filter(|d| d.1).map(|d| d.0).collect();
    assert_eq!(trusted, [Point2::new(15.0, 11.5)]);
    assert_eq!(
        Some(route.total_cost),
        brute_force(&a.topo, &route.nodes[0], route.nodes.last().unwrap())
    );
}

#[test]
fn hall_and_south_corridor_join_through_a_virtual_opening() {
    let a = artifacts("birs.toml");
    let route = a
        .topo
        .plan_path(&fixture_id("space 2044"), &fixture_id("space 2010"))
        .unwrap();
    assert_eq!(route.nodes.len(), 2);
    assert_eq!(a.topo.waypoints(&route).len(), 2);
}

#[test]
fn planner_matches_exhaustive_search_on_fixture() {
    for config in ["birs.toml", "uc4.toml"] {
        let topo = artifacts(config).topo;
        assert!(topo.nodes.len() <= 12);
        for a in &topo.nodes {
            for b in &topo.nodes {
                let got = topo.plan_path(&a.id, &b.id).ok().map(|r| r.total_cost);
                assert_eq!(got.is_some(), brute_force(&topo, &a.id, &b.id).is_some());
                if let (Some(x), Some(y)) = (got, brute_force(&topo, &a.id, &b.id)) {
                    assert!((x - y).abs() < 1e-9, "{} -> {}", a.long_name, b.long_name);
                }
            }
        }
    }
}

#[test]
fn topo_document_round_trips() {
    let topo = artifacts("birs.toml").topo;
    let doc = topo.to_document();
    let back = TopoMap::from_document(&doc).unwrap();
    assert_eq!(back.to_document(), doc);
    assert_eq!(back.nodes.len(), 9);
}

#[test]
fn hedge_lands_on_occupied_cells() {
    let a = artifacts("birs.toml");
    let cfg = &a.config;
    let features = parse_site_features(&std::fs::read_to_string(fixture("site.features")).unwrap()).unwrap();
    let hedge = features.iter().find(|f| f.id == "HAIE-NORD-01").unwrap();
    assert_eq!(hedge.category, ObstacleCategory::Vegetation);
    assert_eq!(hedge.vertices.len(), 9);

    let t = cfg.transform();
    let local = to_local(hedge, &t).unwrap();
    for (v, l) in hedge.vertices.iter().zip(local.vertices()) {
        assert!(t.inverse().apply(*l).distance(*v) < 1e-9);
    }

    let map = grid::rasterize(&a.site, &cfg.raster_options()).unwrap();
    let f = map.frame();
    let reach = f.resolution * 2f64.sqrt();
    for v in local.vertices() {
        let near = (0..f.height)
            .flat_map(|r| (0..f.width).map(move |c| (c, r)))
            .any(|(c, r)| map.get(c, r) == Cell::Occupied && f.cell_center(c, r).distance(*v) <= reach);
        assert!(near, "vertex {v:?}");
    }
}

#[test]
fn early_walls_in_south_corridor_are_ahead_of_schedule() {
    let a = artifacts("birs.toml");
    let as_of = a.config.progress.as_of.unwrap();
    assert_eq!(as_of, date("2026-10-19"));

    // the checked-in planned crop agrees with the plan rasterized for that day
    let planned = grid::import_map_from_meta(&fixture("uc3_planned.yaml")).unwrap();
    let built = a.built.as_ref().unwrap();
    let diff = grid::diff_grids(&planned, built).unwrap();
    let clusters = grid::cluster_diff(&diff, a.config.progress.min_cluster_area);
    assert_eq!(clusters.len(), 2);
    assert!(clusters.iter().all(|c| c.kind == DiffKind::Extra));

    let outcome = a.progress(as_of).unwrap();
    assert_eq!(outcome.clusters, clusters);
    let mut named: Vec<String> = outcome
        .findings
        .iter()
        .map(|f| match &f.verdict {
            Verdict::AheadOfSchedule { element } => element.clone(),
            other => panic!("{other:?}"),
        })
        .collect();
    named.sort();
    let mut expected = vec![fixture_id("MUR-SUD-EST"), fixture_id("MUR-SUD-OUEST")];
    expected.sort();
    assert_eq!(named, expected);

    // once the walls are due nothing remains to report
    assert!(a.progress(date("2026-11-15")).unwrap().findings.is_empty());
}

#[test]
fn unplanned_column_is_an_anomaly_routed_to_the_contractor() {
    let a = artifacts("uc4.toml");
    let outcome = a.progress(a.config.progress.as_of.unwrap()).unwrap();
    assert_eq!(outcome.findings.len(), 1);
    let f = &outcome.findings[0];
    assert_eq!(f.verdict, Verdict::Anomaly);
    assert!(f.cluster.centroid.distance(Point2::new(27.6, 11.5)) < 0.05);
    assert!((f.cluster.area - 0.16).abs() < 1e-9);
    assert_eq!(
        room_of_point(a.model(), f.cluster.centroid),
        Some(fixture_id("space 2042").as_str())
    );

    let office = f.nearest_office.as_ref().unwrap();
    assert_eq!(office.name, "BUREAU ENTREPRENEUR 2050");
    assert_eq!(office.space, fixture_id("space 2050"));
    let best = brute_force(&a.topo, &fixture_id("space 2042"), &office.space).unwrap();
    assert!((office.route.total_cost - best).abs() < 1e-9);

    // the column is in the as-built model only, and never scheduled
    let column = fixture_id("C-IMPREVU");
    let asbuilt = birs_core::model::extract_model(&pipeline::parse_graph(&fixture("pavd2_asbuilt_uc4.ifc")).unwrap());
    assert!(asbuilt.model.landmark(&column).is_some());
    assert!(a.model().landmark(&column).is_none());
    assert!(a.schedule.as_ref().unwrap().get(&column).is_none());
}

#[test]
fn maps_round_trip_through_pgm_and_yaml() {
    let dir = tempfile::tempdir().unwrap();
    for name in [
        "uc3_built.yaml",
        "uc3_planned.yaml",
        "uc4_built.yaml",
        "golden/pavd2.yaml",
    ] {
        let meta = fixture(name);
        let g = grid::import_map_from_meta(&meta).unwrap();
        let (img, yaml) = (dir.path().join("m.pgm"), dir.path().join("m.yaml"));
        grid::export_map(&g, &img, &yaml).unwrap();
        assert_eq!(grid::import_map(&img, &yaml).unwrap(), g, "{name}");
        assert_eq!(
            std::fs::read(&img).unwrap(),
            std::fs::read(meta.with_extension("pgm")).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn rasterized_fixture_matches_golden_files() {
    let a = artifacts("birs.toml");
    let map = grid::rasterize(&a.site, &a.config.raster_options()).unwrap();
    let golden = fixture("golden/pavd2.yaml");
    assert_eq!(
        grid::encode_pgm(&map),
        std::fs::read(golden.with_extension("pgm")).unwrap()
    );
    assert_eq!(
        MapMeta::for_grid(&map, "pavd2.pgm").to_yaml(),
        std::fs::read_to_string(&golden).unwrap()
    );
}

#[test]
fn two_cell_map_payload() {
    let frame = GridFrame {
        width: 2,
        height: 1,
        resolution: 0.05,
        origin: Point2::new(0.0, 0.0),
    };
    let g = OccupancyGrid::new(frame, 0.0, vec![Cell::Occupied, Cell::Free]).unwrap();
    assert!(grid::encode_pgm(&g).ends_with(&[0x00, 0xFE]));
}

#[test]
fn store_queries_on_fixture() {
    let a = artifacts("birs.toml");
    let store: &TripleStore = &a.store;
    let walls = store.instances_of(&class(Namespace::Ifc, "IfcWall"), true).unwrap();
    let landmarks = store.instances_of(&class(Namespace::Birs, "Landmark"), true).unwrap();
    assert!(!walls.is_empty() && walls.is_subset(&landmarks));
    assert_eq!(landmarks.len(), a.model().landmarks.len());
    let vegetation = store.instances_of(&class(Namespace::Birs, "Vegetation"), true).unwrap();
    assert_eq!(vegetation.len(), 1);

    let patterns = parse_patterns("?s type Space . ?s longName \"HALL 2044\"").unwrap();
    let rows = store.query(&patterns).unwrap();
    assert_eq!(rows.len(), 1);

    let back = TripleStore::from_ntriples(&store.to_ntriples()).unwrap();
    assert_eq!(back.to_ntriples(), store.to_ntriples());
}
