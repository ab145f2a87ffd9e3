use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use birs_core::service::{Client, Kind};
use serde_json::json;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn birs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_birs"))
        .current_dir(dir)
        .env_remove("BIRS_ADDR")
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn id(label: &str) -> String {
    let text = std::fs::read_to_string(fixtures().join("ids.txt")).unwrap();
    text.lines()
        .find_map(|l| {
            l.split_once('\t')
                .filter(|(k, _)| *k == label)
                .map(|(_, v)| v.to_string())
        })
        .unwrap()
}

#[test]
fn plan_lists_rooms_and_doors() {
    let text = stdout(&birs(
        &fixtures(),
        &["plan", "--from", "CORRIDOR OUEST 2019", "--to", "W.C. HOMMES 2002"],
    ));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# birs route v1"));
    let rows: Vec<Vec<&str>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').collect())
        .collect();
    let rooms: Vec<&str> = rows.iter().filter(|r| r[1] == "room").map(|r| r[3]).collect();
    assert_eq!(
        rooms,
        [
            "CORRIDOR OUEST 2019",
            "VESTIBULE 2043",
            "HALL 2044",
            "VESTIBULE 2042",
            "CORRIDOR EST 2007",
            "ESPACE CLLABORATIF 2004",
            "W.C. HOMMES 2002"
        ]
    );
    let doors: Vec<(&str, &str, &str)> = rows
        .iter()
        .filter(|r| r[1] == "door")
        .map(|r| (r[4], r[5], r[8]))
        .collect();
    assert_eq!(doors.len(), 6);
    assert_eq!(
        doors.iter().filter(|d| d.2 == "true").collect::<Vec<_>>(),
        [&("15.000", "11.500", "true")]
    );
    assert!(text.contains("# total_cost 46.431575\n"));
}

#[test]
fn report_names_early_walls() {
    let text = stdout(&birs(&fixtures(), &["report"]));
    assert!(text.starts_with("# birs findings report v1\n# as_of 2026-10-19\n"));
    let rows: Vec<Vec<&str>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').collect())
        .collect();
    assert_eq!(rows.len(), 2);
    let mut walls: Vec<&str> = rows.iter().map(|r| r[3]).collect();
    walls.sort();
    let mut expected = [id("MUR-SUD-EST"), id("MUR-SUD-OUEST")];
    expected.sort();
    assert_eq!(walls, expected);
    assert!(rows.iter().all(|r| r[1] == "EXTRA" && r[2] == "AheadOfSchedule"));
}

#[test]
fn report_on_column_picks_contractor_office() {
    let text = stdout(&birs(&fixtures(), &["--config", "uc4.toml", "report"]));
    let rows: Vec<Vec<&str>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').collect())
        .collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][2], "Anomaly");
    assert_eq!(rows[0][10], "BUREAU ENTREPRENEUR 2050");
}

#[test]
fn diff_of_corridor_crops() {
    let text = stdout(&birs(
        &fixtures(),
        &["diff", "--planned", "uc3_planned.yaml", "--built", "uc3_built.yaml"],
    ));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2, "{text}");
    assert!(rows.iter().all(|r| r.contains("EXTRA")));
}

#[test]
fn failures_exit_with_codes() {
    let o = birs(&fixtures(), &["plan", "--from", "NOWHERE", "--to", "HALL 2044"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error\tunknown_room\t"));

    let o = birs(&fixtures(), &["plan", "--from", "HALL 2044"]);
    assert_eq!(o.status.code(), Some(2));

    let o = birs(
        &fixtures(),
        &["grid", "--bounds", "1,2,3", "--out", "/nonexistent/x.yaml"],
    );
    assert_eq!(o.status.code(), Some(2));

    let o = birs(&fixtures(), &["parse", "missing.ifc"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error\tio\t"));
}

#[test]
fn grid_of_empty_model_in_clean_directory() {
    let dir = tempfile::tempdir().unwrap();
    let ifc = fixtures().join("empty.ifc");
    stdout(&birs(
        dir.path(),
        &["grid", "--ifc", ifc.to_str().unwrap(), "--bounds", "0,0,1,1"],
    ));
    let pgm = std::fs::read(dir.path().join("map.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n"));
    // nothing known: every cell unknown
    assert!(pgm.ends_with(&[205u8; 100]));
    assert!(std::fs::read_to_string(dir.path().join("map.yaml"))
        .unwrap()
        .starts_with("image: map.pgm\n"));
}

#[test]
fn grid_command_reproduces_golden_map() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pavd2.yaml");
    let cfg = fixtures().join("birs.toml");
    stdout(&birs(
        dir.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "grid",
            "--out",
            out.to_str().unwrap(),
        ],
    ));
    let golden = fixtures().join("golden");
    assert_eq!(
        std::fs::read(&out).unwrap(),
        std::fs::read(golden.join("pavd2.yaml")).unwrap()
    );
    assert_eq!(
        std::fs::read(dir.path().join("pavd2.pgm")).unwrap(),
        std::fs::read(golden.join("pavd2.pgm")).unwrap()
    );
}

#[test]
fn build_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixtures().join("birs.toml");
    let cfg = cfg.to_str().unwrap();
    for sub in ["a", "b"] {
        stdout(&birs(dir.path(), &["--config", cfg, "build", "--out-dir", sub]));
    }
    for f in ["model.json", "store.nt", "topo.txt", "issues.txt"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }

    let stamped = stdout(&birs(&fixtures(), &["--deterministic=false", "parse", "pavd2.ifc"]));
    assert!(stamped.starts_with("# generated_at "));
    let plain = stdout(&birs(&fixtures(), &["parse", "pavd2.ifc"]));
    assert!(plain.starts_with("# birs entity census v1\n# schema IFC4\n"));
    assert_eq!(stamped.split_once('\n').unwrap().1, plain);
}

#[test]
fn query_lists_bindings() {
    let text = stdout(&birs(&fixtures(), &["query", "?s type Space . ?s longName ?n"]));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# birs query bindings v1"));
    assert_eq!(lines.next(), Some("# ?n\t?s"));
    assert_eq!(lines.count(), 9);
}

struct Served(std::process::Child);

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn serve_takes_address_from_environment() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_birs"))
        .current_dir(fixtures())
        .env("BIRS_ADDR", "127.0.0.1:0")
        .arg("serve")
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let _guard = Served(child);
    let addr = line.trim().strip_prefix("listening ").unwrap().to_string();

    let mut c = Client::connect(&addr).unwrap();
    c.set_timeout(Some(Duration::from_secs(5))).unwrap();
    let (res, _) = c.request("room_info", json!({"name": "HALL 2044"})).unwrap();
    assert_eq!(res.kind, Kind::Res);
    assert_eq!(res.payload["global_id"], id("space 2044"));
    assert_eq!(res.payload["grid_trust"], true);
    let (err, _) = c.request("room_info", json!({"name": "ATTIC"})).unwrap();
    assert_eq!(err.error_code(), Some("unknown_room"));
}
