"""Smoke test for the birs Python extension.

Build and install it first:

    pip install --no-build-isolation -e crates/python
    python3 python/smoke_test.py
"""

import os
import sys
import tempfile

import birs

HERE = os.path.dirname(os.path.abspath(__file__))
FIXTURES = os.path.join(HERE, "..", "crates", "core", "tests", "fixtures")


def fixture(name):
    return os.path.join(FIXTURES, name)


def main():
    counts = birs.census(fixture("pavd2.ifc"))
    assert counts["IFCSPACE"] == 9, counts

    site = birs.Site(fixture("birs.toml"))
    print(site)
    assert len(site.spaces) == 9
    assert site.issues == []

    route = site.path("CORRIDOR OUEST 2019", "W.C. HOMMES 2002")
    names = [n["name"] for n in route["nodes"]]
    assert names[1:-1] == [
        "VESTIBULE 2043",
        "HALL 2044",
        "VESTIBULE 2042",
        "CORRIDOR EST 2007",
        "ESPACE CLLABORATIF 2004",
    ], names
    warned = [w for w in route["waypoints"] if w["kind"] == "door" and w["grid_trust"]]
    assert len(warned) == 1 and warned[0]["point"] == {"x": 15.0, "y": 11.5}, warned
    print("route cost %.3f over %d rooms" % (route["total_cost"], len(names)))
    assert site.route_report("CORRIDOR OUEST 2019", "W.C. HOMMES 2002").startswith("# birs route v1\n")

    hall = site.room_info("HALL 2044")
    assert hall["grid_trust"] is True
    assert site.locate(20.0, 12.0)["name"] == "HALL 2044"
    assert site.locate(-10.0, -10.0)["space"] is None

    rows = site.query("?s type Space . ?s longName ?n")
    assert len(rows) == 9, rows
    assert {"n": '"HALL 2044"', "s": "inst:" + hall["global_id"]} in rows, rows

    findings = site.progress_report("2026-10-19")
    assert [f["verdict"] for f in findings] == ["AheadOfSchedule"] * 2, findings

    try:
        site.room_info("ATTIC")
    except birs.BirsError as e:
        assert str(e).startswith("unknown_room:"), e
    else:
        raise AssertionError("expected BirsError")

    grid = site.grid()
    print(grid, grid.counts())
    assert (grid.width, grid.height) == (560, 180)
    with open(fixture("golden/pavd2.pgm"), "rb") as f:
        assert grid.pgm() == f.read()

    planned = birs.Grid.load(fixture("uc3_planned.yaml"))
    built = birs.Grid.load(fixture("uc3_built.yaml"))
    clusters = planned.diff(built)
    assert [c["kind"] for c in clusters] == ["EXTRA", "EXTRA"], clusters

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "copy.yaml")
        built.save(path)
        again = birs.Grid.load(path)
        assert again.pgm() == built.pgm()
        assert again.origin == built.origin

    print("ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
