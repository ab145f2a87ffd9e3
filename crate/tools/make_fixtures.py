#!/usr/bin/env python3
"""Regenerate the test fixtures under crates/core/tests/fixtures.

The building is Pavilion D, level 2: a west-east corridor chain with a
glazed hall, a south corridor and a contractor office. Every wall is an
axis-aligned box so the occupancy crops written here can be rasterized
with a plain point-in-polygon test, independent of the Rust code.

    python3 tools/make_fixtures.py
"""

import hashlib
import math
from pathlib import Path

from shapely.geometry import LineString, Point, Polygon, box
from shapely.ops import unary_union

OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "tests" / "fixtures"

WALL_T = 0.2
WALL_H = 3.0
DOOR_W = 0.9
DOOR_H = 2.1
STOREY_Z = 4.0

ROOMS = [
    ("2019", "CORRIDOR OUEST 2019", (0, 10, 12, 13)),
    ("2043", "VESTIBULE 2043", (12, 10, 15, 13)),
    ("2044", "HALL 2044", (15, 10, 27, 16)),
    ("2042", "VESTIBULE 2042", (27, 10, 30, 13)),
    ("2007", "CORRIDOR EST 2007", (30, 10, 42, 13)),
    ("2004", "ESPACE CLLABORATIF 2004", (42, 8, 50, 16)),
    ("2002", "W.C. HOMMES 2002", (50, 10, 54, 13)),
    ("2010", "CORRIDOR SUD 2010", (19, 2, 23, 10)),
    ("2050", "BUREAU ENTREPRENEUR 2050", (23, 4, 33, 10)),
]

# (name, centre, axis, rooms joined)
DOORS = [
    ("P2019", (12.0, 11.5), "x", ("2019", "2043")),
    ("P2043", (15.0, 11.5), "x", ("2043", "2044")),
    ("P2042W", (27.0, 11.5), "x", ("2044", "2042")),
    ("P2042E", (30.0, 11.5), "x", ("2042", "2007")),
    ("P2007", (42.0, 11.5), "x", ("2007", "2004")),
    ("P2004", (50.0, 11.5), "x", ("2004", "2002")),
    ("P2010", (23.0, 6.0), "x", ("2010", "2050")),
    ("P2050", (31.5, 10.0), "y", ("2050", "2007")),
]

# open passage between the hall and the south corridor
VIRTUAL = (("2044", "2010"), ((19.0, 10.0), (23.0, 10.0)))
CURTAIN = ((15.0, 16.0), (27.0, 16.0))

# walls installed after the survey date, inside CORRIDOR SUD
SCHEDULED_WALLS = [
    ("MUR-SUD-OUEST", (19.3, 3.0, 19.5, 9.0)),
    ("MUR-SUD-EST", (22.5, 3.0, 22.7, 9.0)),
]
WALL_DATE = "2026-11-15"
SURVEY_DATE = "2026-10-19"
LATE_SURVEY_DATE = "2026-12-01"

COLUMNS = [("C-HALL-1", (18.0, 14.0)), ("C-HALL-2", (24.0, 14.0))]
UNPLANNED_COLUMN = ("C-IMPREVU", (27.6, 11.5))
COLUMN_SIDE = 0.4

# L-shaped stair in the collaborative space's north-east corner
STAIR = [(47.0, 13.5), (49.8, 13.5), (49.8, 15.8), (48.6, 15.8), (48.6, 14.7), (47.0, 14.7)]
RAILING = (47.0, 14.7, 48.6, 14.8)

# site obstacles in the local building frame; written in source CRS
TRANSFORM = dict(scale=0.9996, rotation=0.3, tx=-48.0, ty=25.0)
VEGETATION = [(2.0, 3.0), (5.0, 1.5), (8.0, 2.0), (10.5, 3.5), (11.0, 6.0),
              (9.0, 8.0), (6.0, 8.5), (3.5, 7.5), (1.5, 5.5)]
EXISTING = [(36.0, 0.5), (46.0, 0.5), (46.0, 6.0), (36.0, 6.0)]

GUID_ALPHABET = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz_$"


def guid(name):
    n = int.from_bytes(hashlib.sha1(name.encode()).digest()[:16], "big")
    out = []
    for _ in range(21):
        out.append(GUID_ALPHABET[n % 64])
        n //= 64
    # the leading character carries the top two bits
    out.append(GUID_ALPHABET[n])
    return "".join(reversed(out))


def real(x):
    x = round(float(x), 9) + 0.0
    s = repr(x)
    return s if ("." in s or "e" in s) else s + "."


class Step:
    def __init__(self):
        self.lines = []

    def add(self, text):
        self.lines.append(text)
        return f"#{len(self.lines)}"

    def render(self, file_name):
        head = (
            "ISO-10303-21;\nHEADER;\n"
            "FILE_DESCRIPTION(('ViewDefinition [ReferenceView_V1.2]'),'2;1');\n"
            f"FILE_NAME('{file_name}','2026-09-01T09:00:00',('BIRS'),('Pavillon D'),'make_fixtures','make_fixtures','');\n"
            "FILE_SCHEMA(('IFC4'));\nENDSEC;\nDATA;\n"
        )
        body = "".join(f"#{i + 1}={line};\n" for i, line in enumerate(self.lines))
        return head + body + "ENDSEC;\nEND-ISO-10303-21;\n"


def ref_list(refs):
    return "(" + ",".join(refs) + ")"


class Building:
    def __init__(self, extra_column=False):
        self.s = Step()
        s = self.s
        self.origin = s.add("IFCCARTESIANPOINT((0.,0.,0.))")
        self.zdir = s.add("IFCDIRECTION((0.,0.,1.))")
        self.xdir = s.add("IFCDIRECTION((1.,0.,0.))")
        self.ydir = s.add("IFCDIRECTION((0.,1.,0.))")
        world = s.add(f"IFCAXIS2PLACEMENT3D({self.origin},{self.zdir},{self.xdir})")
        self.ctx = s.add(f"IFCGEOMETRICREPRESENTATIONCONTEXT($,'Model',3,1.E-05,{world},$)")
        unit = s.add("IFCSIUNIT(*,.LENGTHUNIT.,$,.METRE.)")
        units = s.add(f"IFCUNITASSIGNMENT(({unit}))")
        self.project = s.add(f"IFCPROJECT('{guid('project')}',$,'Pavillon D',$,$,$,$,({self.ctx}),{units})")
        site_plc = s.add(f"IFCLOCALPLACEMENT($,{world})")
        self.site = s.add(f"IFCSITE('{guid('site')}',$,'Campus',$,$,{site_plc},$,$,.ELEMENT.,$,$,$,$,$)")
        bldg_plc = s.add(f"IFCLOCALPLACEMENT({site_plc},{self.axis(0, 0, 0)})")
        self.building = s.add(f"IFCBUILDING('{guid('building')}',$,'Pavillon D',$,$,{bldg_plc},$,$,.ELEMENT.,$,$,$)")
        self.storey_plc = s.add(f"IFCLOCALPLACEMENT({bldg_plc},{self.axis(0, 0, STOREY_Z)})")
        self.storey = s.add(
            f"IFCBUILDINGSTOREY('{guid('storey-2')}',$,'NIVEAU 2',$,$,{self.storey_plc},$,$,.ELEMENT.,{real(STOREY_Z)})"
        )
        self.contained = []
        self.spaces = {}
        self.space_rects = {}
        self.materials = {}
        self.material_links = {}
        self.boundaries = []
        self.landmarks = []  # (guid, kind, shapely polygon)
        self.build_rooms()
        self.build_doors()
        self.build_walls()
        self.build_interior(extra_column)
        self.finish()

    def axis(self, x, y, z, dx=1.0, dy=0.0):
        p = self.s.add(f"IFCCARTESIANPOINT(({real(x)},{real(y)},{real(z)}))")
        if (dx, dy) == (1.0, 0.0):
            d = self.xdir
        elif (dx, dy) == (0.0, 1.0):
            d = self.ydir
        else:
            d = self.s.add(f"IFCDIRECTION(({real(dx)},{real(dy)},0.))")
        return self.s.add(f"IFCAXIS2PLACEMENT3D({p},{self.zdir},{d})")

    def placement(self, x, y, dx=1.0, dy=0.0):
        return self.s.add(f"IFCLOCALPLACEMENT({self.storey_plc},{self.axis(x, y, 0.0, dx, dy)})")

    def body(self, profile, depth):
        solid = self.s.add(f"IFCEXTRUDEDAREASOLID({profile},{self.axis(0, 0, 0)},{self.zdir},{real(depth)})")
        rep = self.s.add(f"IFCSHAPEREPRESENTATION({self.ctx},'Body','SweptSolid',({solid}))")
        return self.s.add(f"IFCPRODUCTDEFINITIONSHAPE($,$,({rep}))")

    def rect_body(self, length, width, depth):
        prof = self.s.add(f"IFCRECTANGLEPROFILEDEF(.AREA.,$,$,{real(length)},{real(width)})")
        return self.body(prof, depth)

    def poly_body(self, pts, depth):
        refs = [self.s.add(f"IFCCARTESIANPOINT(({real(x)},{real(y)}))") for x, y in pts]
        line = self.s.add(f"IFCPOLYLINE({ref_list(refs + [refs[0]])})")
        prof = self.s.add(f"IFCARBITRARYCLOSEDPROFILEDEF(.AREA.,$,{line})")
        return self.body(prof, depth)

    def material(self, element, name):
        if name not in self.materials:
            self.materials[name] = self.s.add(f"IFCMATERIAL('{name}',$,$)")
        self.material_links.setdefault(name, []).append(element)

    def boundary(self, name, space, element, kind, geometry="$"):
        self.boundaries.append(
            f"IFCRELSPACEBOUNDARY('{guid('rsb-' + name)}',$,$,$,{self.spaces[space]},{element},{geometry},.{kind}.,.INTERNAL.)"
        )

    def build_rooms(self):
        for number, long_name, (x0, y0, x1, y1) in ROOMS:
            plc = self.placement(0.0, 0.0)
            shape = self.poly_body([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], WALL_H)
            self.spaces[number] = self.s.add(
                f"IFCSPACE('{guid('space-' + number)}',$,'{number}',$,$,{plc},{shape},'{long_name}',.ELEMENT.,.INTERNAL.,$)"
            )
            self.space_rects[number] = box(x0, y0, x1, y1)

    def element(self, ifc_type, name, x, y, shape, dx=1.0, dy=0.0, tail="$,$"):
        plc = self.placement(x, y, dx, dy)
        e = self.s.add(f"{ifc_type}('{guid(name)}',$,'{name}',$,$,{plc},{shape},{tail})")
        self.contained.append(e)
        return e

    def box_landmark(self, ifc_type, name, rect, material, kind):
        x0, y0, x1, y1 = rect
        shape = self.rect_body(x1 - x0, y1 - y0, WALL_H)
        e = self.element(ifc_type, name, (x0 + x1) / 2, (y0 + y1) / 2, shape)
        self.material(e, material)
        self.landmarks.append((guid(name), kind, box(x0, y0, x1, y1)))
        return e

    def build_doors(self):
        self.door_gaps = []
        for name, (cx, cy), axis, (a, b) in DOORS:
            # door leaves are local-x long; rotate doors in walls along y
            dx, dy = (0.0, 1.0) if axis == "x" else (1.0, 0.0)
            shape = self.rect_body(DOOR_W, WALL_T, DOOR_H)
            door = self.element(
                "IFCDOOR", name, cx, cy, shape, dx, dy, tail=f"$,{real(DOOR_H)},{real(DOOR_W)},.DOOR.,.SINGLE_SWING_LEFT.,$"
            )
            self.material(door, "Wood")
            if axis == "x":
                rect = (cx - WALL_T / 2, cy - DOOR_W / 2, cx + WALL_T / 2, cy + DOOR_W / 2)
                gap = LineString([(cx, cy - DOOR_W / 2), (cx, cy + DOOR_W / 2)])
            else:
                rect = (cx - DOOR_W / 2, cy - WALL_T / 2, cx + DOOR_W / 2, cy + WALL_T / 2)
                gap = LineString([(cx - DOOR_W / 2, cy), (cx + DOOR_W / 2, cy)])
            self.landmarks.append((guid(name), "door", box(*rect)))
            self.door_gaps.append(gap)
            for space in (a, b):
                self.boundary(f"{name}-{space}", space, door, "PHYSICAL")

    def build_walls(self):
        edges = unary_union([r.exterior for r in self.space_rects.values()])
        cut = unary_union(
            [g.buffer(1e-6, cap_style="flat") for g in self.door_gaps]
            + [LineString(VIRTUAL[1]).buffer(1e-6, cap_style="flat"), LineString(CURTAIN).buffer(1e-6, cap_style="flat")]
        )
        pieces = []
        for seg in edges.geoms:
            rest = seg.difference(cut)
            for part in getattr(rest, "geoms", [rest]):
                if part.length > 1e-3:
                    coords = list(part.coords)
                    for p, q in zip(coords, coords[1:]):
                        pieces.append((tuple(round(v, 6) for v in p), tuple(round(v, 6) for v in q)))
        pieces.sort()
        for i, (p, q) in enumerate(pieces):
            (x0, y0), (x1, y1) = sorted([p, q])
            h = WALL_T / 2
            # walls overlap by half a thickness at each end to close corners
            rect = (x0 - h, y0 - h, x1 + h, y1 + h)
            e = self.box_landmark("IFCWALL", f"MUR-{i:02d}", rect, "Concrete", "wall")
            line = LineString([p, q])
            for number, r in sorted(self.space_rects.items()):
                if r.exterior.buffer(1e-6).contains(line):
                    self.boundary(f"MUR-{i:02d}-{number}", number, e, "PHYSICAL")

        (x0, y0), (x1, y1) = CURTAIN
        cw = self.box_landmark(
            "IFCCURTAINWALL", "MUR-RIDEAU-2044", (x0 - 0.1, y0 - 0.1, x1 + 0.1, y1 + 0.1), "Glass - Clear", "curtain"
        )
        self.boundary("MUR-RIDEAU-2044", "2044", cw, "PHYSICAL")

        (a, b), seg = VIRTUAL
        pts = [self.s.add(f"IFCCARTESIANPOINT(({real(x)},{real(y)}))") for x, y in seg]
        curve = self.s.add(f"IFCPOLYLINE({ref_list(pts)})")
        geom = self.s.add(f"IFCCONNECTIONCURVEGEOMETRY({curve},$)")
        for space in (a, b):
            self.boundary(f"virtual-{space}", space, "$", "VIRTUAL", geom)

    def build_interior(self, extra_column):
        h = COLUMN_SIDE / 2
        cols = list(COLUMNS) + ([UNPLANNED_COLUMN] if extra_column else [])
        for name, (x, y) in cols:
            self.box_landmark("IFCCOLUMN", name, (x - h, y - h, x + h, y + h), "Concrete", "column")
        for name, rect in SCHEDULED_WALLS:
            self.box_landmark("IFCWALL", name, rect, "Concrete", "scheduled")
        shape = self.poly_body(STAIR, WALL_H)
        stair = self.element("IFCSTAIR", "ESCALIER-2004", 0.0, 0.0, shape, tail="$,.L_SHAPED_STAIR.")
        self.material(stair, "Concrete")
        self.landmarks.append((guid("ESCALIER-2004"), "stair", Polygon(STAIR)))
        self.box_landmark("IFCRAILING", "GARDE-CORPS-2004", RAILING, "Steel", "railing")

    def finish(self):
        s = self.s
        s.add(f"IFCRELAGGREGATES('{guid('agg-project')}',$,$,$,{self.project},({self.site}))")
        s.add(f"IFCRELAGGREGATES('{guid('agg-site')}',$,$,$,{self.site},({self.building}))")
        s.add(f"IFCRELAGGREGATES('{guid('agg-building')}',$,$,$,{self.building},({self.storey}))")
        s.add(f"IFCRELAGGREGATES('{guid('agg-storey')}',$,$,$,{self.storey},{ref_list(self.spaces.values())})")
        s.add(f"IFCRELCONTAINEDINSPATIALSTRUCTURE('{guid('contained')}',$,$,$,{ref_list(self.contained)},{self.storey})")
        for name in sorted(self.material_links):
            s.add(
                f"IFCRELASSOCIATESMATERIAL('{guid('mat-' + name)}',$,$,$,{ref_list(self.material_links[name])},{self.materials[name]})"
            )
        for b in self.boundaries:
            s.add(b)

    def footprints(self, include_scheduled=True):
        spaces = list(self.space_rects.values())
        doors = [p for _, k, p in self.landmarks if k == "door"]
        solid = [p for _, k, p in self.landmarks if k != "door" and (include_scheduled or k != "scheduled")]
        return spaces, doors, solid


def rasterize_crop(bounds, res, spaces, doors, solid):
    """Cell-centre classification: 0 occupied, 254 free, 205 unknown.
    Rows are returned top (highest y) first, as written to PGM."""
    x0, y0, x1, y1 = bounds
    w = int(math.ceil((x1 - x0) / res - 1e-9))
    h = int(math.ceil((y1 - y0) / res - 1e-9))
    rows = []
    for r in reversed(range(h)):
        row = bytearray()
        y = y0 + (r + 0.5) * res
        for c in range(w):
            p = Point(x0 + (c + 0.5) * res, y)
            in_door = any(d.contains(p) for d in doors)
            occupied = not in_door and any(s.contains(p) for s in solid)
            free = not occupied and (in_door or any(s.contains(p) for s in spaces))
            row.append(0 if occupied else 254 if free else 205)
        rows.append(bytes(row))
    return w, h, b"".join(rows)


def write_map(stem, bounds, res, layers):
    w, h, payload = rasterize_crop(bounds, res, *layers)
    (OUT / f"{stem}.pgm").write_bytes(f"P5\n{w} {h}\n255\n".encode() + payload)
    (OUT / f"{stem}.yaml").write_text(
        f"image: {stem}.pgm\nresolution: {res}\norigin: [{real(bounds[0])}, {real(bounds[1])}, 0.0]\n"
        "negate: 0\noccupied_thresh: 0.65\nfree_thresh: 0.196\n"
    )


def to_source(p):
    """Inverse of the fixture similarity transform, rounded to the mm."""
    t = TRANSFORM
    x, y = p[0] - t["tx"], p[1] - t["ty"]
    c, s = math.cos(-t["rotation"]), math.sin(-t["rotation"])
    return (round((c * x - s * y) / t["scale"], 3), round((s * x + c * y) / t["scale"], 3))


def write_site():
    out = ["# Pavillon D surroundings, surveyed in the campus grid", ""]
    for fid, cat, pts in [("HAIE-NORD-01", "Vegetation", VEGETATION), ("PAVILLON-E", "ExistingBuilding", EXISTING)]:
        out.append(f"FEATURE {fid} {cat} CAMPUS-GRID")
        out += [f"{x:.3f} {y:.3f}" for x, y in map(to_source, pts)]
        out += ["END", ""]
    (OUT / "site.features").write_text("\n".join(out))


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    plan = Building()
    (OUT / "pavd2.ifc").write_text(plan.s.render("pavd2.ifc"))
    built = Building(extra_column=True)
    (OUT / "pavd2_asbuilt_uc4.ifc").write_text(built.s.render("pavd2_asbuilt_uc4.ifc"))

    empty = Step()
    unit = empty.add("IFCSIUNIT(*,.LENGTHUNIT.,$,.METRE.)")
    units = empty.add(f"IFCUNITASSIGNMENT(({unit}))")
    empty.add(f"IFCPROJECT('{guid('empty')}',$,'Empty',$,$,$,$,$,{units})")
    (OUT / "empty.ifc").write_text(empty.render("empty.ifc"))

    lines = ["global_id,date", f"{guid('MUR-RIDEAU-2044')},2026-03-02"]
    lines += [f"{guid(name)},{WALL_DATE}" for name, _ in SCHEDULED_WALLS]
    (OUT / "schedule.csv").write_text("\n".join(lines) + "\n")

    (OUT / "visibility.txt").write_text("# material pattern = visible to lidar\nGlass* = false\n* = true\n")
    (OUT / "function_tags.txt").write_text("# long name = tags\nESPACE CLLABORATIF 2004 = collaborative, meeting\n")
    write_site()

    # corridor sud survey: planned without the late walls, built with them
    sud = (19.0, 2.0, 23.0, 10.0)
    write_map("uc3_planned", sud, 0.05, plan.footprints(include_scheduled=False))
    write_map("uc3_built", sud, 0.05, plan.footprints())
    # vestibule survey with the unplanned column
    write_map("uc4_built", (24.0, 8.0, 33.0, 14.0), 0.05, built.footprints())

    common = (
        "[input]\nifc = \"pavd2.ifc\"\nsite = \"site.features\"\nschedule = \"schedule.csv\"\n"
        "visibility = \"visibility.txt\"\nfunction_tags = \"function_tags.txt\"\nbuilt_map = \"{built}\"\n\n"
        "[model]\ncut_height = 1.0\n\n"
        "[grid]\nresolution = 0.1\nbounds = [-1.0, -1.0, 55.0, 17.0]\n\n"
        "[transform]\nscale = {scale}\nrotation = {rotation}\ntx = {tx}\nty = {ty}\n\n"
        "[progress]\nas_of = {as_of}\nmin_cluster_area = 0.05\n"
    )
    (OUT / "birs.toml").write_text(common.format(built="uc3_built.yaml", as_of=SURVEY_DATE, **TRANSFORM))
    (OUT / "uc4.toml").write_text(common.format(built="uc4_built.yaml", as_of=LATE_SURVEY_DATE, **TRANSFORM))

    ids = {name: guid(name) for name in ["MUR-RIDEAU-2044", UNPLANNED_COLUMN[0]] + [n for n, _ in SCHEDULED_WALLS]}
    ids.update({f"space {n}": guid("space-" + n) for n, _, _ in ROOMS})
    (OUT / "ids.txt").write_text("".join(f"{k}\t{v}\n" for k, v in sorted(ids.items())))


if __name__ == "__main__":
    main()
