//! Occupancy grids: rasterization of the site model, the map-server PGM/YAML
//! file pair, and as-planned vs. as-built differencing.
//!
//! A cell is decided by its center. Cell `(c, r)` covers
//! `[ox + c·res, ox + (c+1)·res) × [oy + r·res, oy + (r+1)·res)`; rows are
//! stored bottom-up, while the PGM image is written top row first.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{edge_crossing_x, Point2, Polygon2D, Pose2D, Rect};
use crate::gis::SiteModel;
use crate::model::LandmarkClass;

pub const DEFAULT_RESOLUTION: f64 = 0.05;
pub const DEFAULT_MAX_CELLS: usize = 100_000_000;
pub const DEFAULT_PADDING: f64 = 1.0;
pub const DEFAULT_MIN_CLUSTER_AREA: f64 = 0.05;
pub const OCCUPIED_THRESH: f64 = 0.65;
pub const FREE_THRESH: f64 = 0.196;

pub const PIXEL_OCCUPIED: u8 = 0;
pub const PIXEL_FREE: u8 = 254;
pub const PIXEL_UNKNOWN: u8 = 205;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("resolution must be positive and finite, got {0}")]
    BadResolution(f64),
    #[error("grid of {cells} cells exceeds the limit of {limit}")]
    GridTooLarge { cells: u128, limit: usize },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("not a binary PGM (P5) image")]
    BadMagic,
    #[error("image dimensions: {0}")]
    DimensionMismatch(String),
    #[error("map metadata lacks `{0}`")]
    MissingMetaKey(&'static str),
    #[error("map metadata: {0}")]
    BadMeta(String),
    #[error("resolutions differ: {0} vs {1}")]
    ResolutionMismatch(f64, f64),
    #[error("grids cannot be registered: {0}")]
    RegistrationError(String),
}

pub type Result<T> = std::result::Result<T, GridError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> GridError {
    GridError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Cell {
    Free,
    Occupied,
    Unknown,
}

impl Cell {
    pub fn pixel(self) -> u8 {
        match self {
            Cell::Occupied => PIXEL_OCCUPIED,
            Cell::Free => PIXEL_FREE,
            Cell::Unknown => PIXEL_UNKNOWN,
        }
    }
}

/// Cell lattice geometry without contents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridFrame {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    /// Lower-left corner of cell (0, 0).
    pub origin: Point2,
}

impl GridFrame {
    /// Smallest lattice anchored at the lower-left of `bounds` covering it.
    pub fn covering(bounds: Rect, resolution: f64, max_cells: usize) -> Result<GridFrame> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(GridError::BadResolution(resolution));
        }
        let count = |extent: f64| ((extent / resolution) - 1e-9).ceil().max(1.0);
        let (w, h) = (count(bounds.max_x - bounds.min_x), count(bounds.max_y - bounds.min_y));
        let cells = w * h;
        if !cells.is_finite() || cells > max_cells as f64 {
            return Err(GridError::GridTooLarge {
                cells: if cells.is_finite() { cells as u128 } else { u128::MAX },
                limit: max_cells,
            });
        }
        Ok(GridFrame {
            width: w as usize,
            height: h as usize,
            resolution,
            origin: Point2::new(bounds.min_x, bounds.min_y),
        })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, c: usize, r: usize) -> usize {
        r * self.width + c
    }

    pub fn center_x(&self, c: usize) -> f64 {
        self.origin.x + (c as f64 + 0.5) * self.resolution
    }

    pub fn center_y(&self, r: usize) -> f64 {
        self.origin.y + (r as f64 + 0.5) * self.resolution
    }

    pub fn cell_center(&self, c: usize, r: usize) -> Point2 {
        Point2::new(self.center_x(c), self.center_y(r))
    }

    /// Cell containing a world point, if inside the lattice.
    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        let c = ((p.x - self.origin.x) / self.resolution).floor();
        let r = ((p.y - self.origin.y) / self.resolution).floor();
        (c >= 0.0 && r >= 0.0 && (c as usize) < self.width && (r as usize) < self.height)
            .then_some((c as usize, r as usize))
    }

    pub fn extent(&self) -> Rect {
        Rect::new(
            self.origin.x,
            self.origin.y,
            self.origin.x + self.width as f64 * self.resolution,
            self.origin.y + self.height as f64 * self.resolution,
        )
    }

    fn span(&self, lo: f64, hi: f64, origin: f64, limit: usize) -> (usize, usize) {
        let to_cell = |v: f64| (v - origin) / self.resolution - 0.5;
        let a = (to_cell(lo).floor() - 1.0).max(0.0);
        let b = (to_cell(hi).ceil() + 2.0).max(0.0);
        ((a as usize).min(limit), (b as usize).min(limit))
    }

    /// Scanline fill: set `mask` for every cell whose center is inside
    /// `poly` under the even-odd rule. Agrees exactly with
    /// [`Polygon2D::contains`] evaluated at cell centers.
    pub fn fill(&self, mask: &mut [bool], poly: &Polygon2D) {
        debug_assert_eq!(mask.len(), self.len());
        let ring = poly.vertices();
        let n = ring.len();
        let bb = poly.bbox();
        let (r0, r1) = self.span(bb.min_y, bb.max_y, self.origin.y, self.height);
        let mut xs: Vec<f64> = Vec::new();
        for r in r0..r1 {
            let y = self.center_y(r);
            xs.clear();
            let mut j = n - 1;
            for i in 0..n {
                let (a, b) = (ring[i], ring[j]);
                if (a.y > y) != (b.y > y) {
                    xs.push(edge_crossing_x(a, b, y));
                }
                j = i;
            }
            if xs.is_empty() {
                continue;
            }
            xs.sort_by(f64::total_cmp);
            let (c0, c1) = self.span(xs[0], xs[xs.len() - 1], self.origin.x, self.width);
            // `passed` counts crossings at or left of the center; the center
            // is inside when an odd number lie strictly to its right
            let mut passed = 0;
            for c in c0..c1 {
                let px = self.center_x(c);
                while passed < xs.len() && xs[passed] <= px {
                    passed += 1;
                }
                if (xs.len() - passed) % 2 == 1 {
                    mask[r * self.width + c] = true;
                }
            }
        }
    }

    pub fn cells_inside(&self, poly: &Polygon2D) -> Vec<(usize, usize)> {
        let mut mask = vec![false; self.len()];
        self.fill(&mut mask, poly);
        mask.iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| (i % self.width, i / self.width))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    frame: GridFrame,
    yaw: f64,
    cells: Vec<Cell>,
}

impl OccupancyGrid {
    pub fn new(frame: GridFrame, yaw: f64, cells: Vec<Cell>) -> Result<OccupancyGrid> {
        if !(frame.resolution > 0.0 && frame.resolution.is_finite()) {
            return Err(GridError::BadResolution(frame.resolution));
        }
        if cells.len() != frame.len() {
            return Err(GridError::DimensionMismatch(format!(
                "{}x{} grid needs {} cells, got {}",
                frame.width,
                frame.height,
                frame.len(),
                cells.len()
            )));
        }
        Ok(OccupancyGrid { frame, yaw, cells })
    }

    pub fn filled(frame: GridFrame, cell: Cell) -> OccupancyGrid {
        OccupancyGrid {
            frame,
            yaw: 0.0,
            cells: vec![cell; frame.len()],
        }
    }

    pub fn frame(&self) -> &GridFrame {
        &self.frame
    }
    pub fn width(&self) -> usize {
        self.frame.width
    }
    pub fn height(&self) -> usize {
        self.frame.height
    }
    pub fn resolution(&self) -> f64 {
        self.frame.resolution
    }
    pub fn origin(&self) -> Pose2D {
        Pose2D {
            x: self.frame.origin.x,
            y: self.frame.origin.y,
            theta: self.yaw,
        }
    }
    /// Row-major from the bottom-left.
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn get(&self, c: usize, r: usize) -> Cell {
        self.cells[self.frame.index(c, r)]
    }

    pub fn set(&mut self, c: usize, r: usize, cell: Cell) {
        let i = self.frame.index(c, r);
        self.cells[i] = cell;
    }

    pub fn count(&self, cell: Cell) -> usize {
        self.cells.iter().filter(|&&c| c == cell).count()
    }

    /// Cell states from polygon layers. Door footprints win over walls so
    /// openings stay traversable.
    pub fn from_layers(
        frame: GridFrame,
        occupied: &[&Polygon2D],
        doors: &[&Polygon2D],
        free: &[&Polygon2D],
    ) -> OccupancyGrid {
        let layer = |polys: &[&Polygon2D]| {
            let mut mask = vec![false; frame.len()];
            for p in polys {
                frame.fill(&mut mask, p);
            }
            mask
        };
        let (occ, door, space) = (layer(occupied), layer(doors), layer(free));
        let cells = (0..frame.len())
            .map(|i| {
                if occ[i] && !door[i] {
                    Cell::Occupied
                } else if space[i] || door[i] {
                    Cell::Free
                } else {
                    Cell::Unknown
                }
            })
            .collect();
        OccupancyGrid { frame, yaw: 0.0, cells }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterOptions {
    pub resolution: f64,
    pub bounds: Option<Rect>,
    pub max_cells: usize,
}

impl Default for RasterOptions {
    fn default() -> Self {
        RasterOptions {
            resolution: DEFAULT_RESOLUTION,
            bounds: None,
            max_cells: DEFAULT_MAX_CELLS,
        }
    }
}

/// Bounding box of every space, landmark and obstacle, padded by 1 m. An
/// empty site gets the origin padded by 1 m.
pub fn site_bounds(site: &SiteModel) -> Rect {
    let b = &site.building;
    b.spaces
        .iter()
        .map(|s| s.polygon.bbox())
        .chain(b.landmarks.iter().map(|l| l.footprint.bbox()))
        .chain(site.obstacles.iter().map(|o| o.polygon.bbox()))
        .reduce(Rect::union)
        .unwrap_or(Rect::new(0.0, 0.0, 0.0, 0.0))
        .padded(DEFAULT_PADDING)
}

pub fn rasterize(site: &SiteModel, opts: &RasterOptions) -> Result<OccupancyGrid> {
    let bounds = opts.bounds.unwrap_or_else(|| site_bounds(site));
    let frame = GridFrame::covering(bounds, opts.resolution, opts.max_cells)?;
    Ok(rasterize_frame(site, frame))
}

/// Rasterize onto a given lattice, e.g. to match an imported map.
pub fn rasterize_frame(site: &SiteModel, frame: GridFrame) -> OccupancyGrid {
    let b = &site.building;
    let is_door = |c: LandmarkClass| c == LandmarkClass::IfcDoor;
    let occupied: Vec<&Polygon2D> = b
        .landmarks
        .iter()
        .filter(|l| !is_door(l.ifc_class))
        .map(|l| &l.footprint)
        .chain(site.obstacles.iter().map(|o| &o.polygon))
        .collect();
    let doors: Vec<&Polygon2D> = b
        .landmarks
        .iter()
        .filter(|l| is_door(l.ifc_class))
        .map(|l| &l.footprint)
        .collect();
    let spaces: Vec<&Polygon2D> = b.spaces.iter().map(|s| &s.polygon).collect();
    OccupancyGrid::from_layers(frame, &occupied, &doors, &spaces)
}

// ---------------------------------------------------------------------------
// PGM + YAML
// ---------------------------------------------------------------------------

/// Binary PGM, top image row = highest grid row.
pub fn encode_pgm(grid: &OccupancyGrid) -> Vec<u8> {
    let (w, h) = (grid.width(), grid.height());
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.reserve(w * h);
    for r in (0..h).rev() {
        out.extend(grid.cells[r * w..(r + 1) * w].iter().map(|c| c.pixel()));
    }
    out
}

/// Width, height and pixels (top row first) of a binary PGM.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    if !bytes.starts_with(b"P5") {
        return Err(GridError::BadMagic);
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments between header fields
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| GridError::DimensionMismatch("malformed PGM header".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(GridError::DimensionMismatch("malformed PGM header".into()));
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(GridError::DimensionMismatch(format!("maxval {maxval}, expected 255")));
    }
    let payload = &bytes[pos..];
    if payload.len() != w * h {
        return Err(GridError::DimensionMismatch(format!(
            "{w}x{h} image needs {} bytes, found {}",
            w * h,
            payload.len()
        )));
    }
    Ok((w, h, payload.to_vec()))
}

/// Decimal without exponent; shortest representation that round-trips.
fn fmt_decimal(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v}")
}

fn fmt_origin(v: f64) -> String {
    let s = fmt_decimal(v);
    if s.contains('.') {
        s
    } else {
        s + ".0"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapMeta {
    pub image: String,
    pub resolution: f64,
    pub origin: [f64; 3],
    pub negate: bool,
    pub occupied_thresh: f64,
    pub free_thresh: f64,
}

impl MapMeta {
    pub fn for_grid(grid: &OccupancyGrid, image: &str) -> MapMeta {
        let o = grid.origin();
        MapMeta {
            image: image.to_string(),
            resolution: grid.resolution(),
            origin: [o.x, o.y, o.theta],
            negate: false,
            occupied_thresh: OCCUPIED_THRESH,
            free_thresh: FREE_THRESH,
        }
    }

    pub fn to_yaml(&self) -> String {
        format!(
            "image: {}\nresolution: {}\norigin: [{}, {}, {}]\nnegate: {}\noccupied_thresh: {}\nfree_thresh: {}\n",
            self.image,
            fmt_decimal(self.resolution),
            fmt_origin(self.origin[0]),
            fmt_origin(self.origin[1]),
            fmt_origin(self.origin[2]),
            u8::from(self.negate),
            fmt_decimal(self.occupied_thresh),
            fmt_decimal(self.free_thresh),
        )
    }

    pub fn from_yaml(text: &str) -> Result<MapMeta> {
        #[derive(Deserialize)]
        struct Doc {
            image: Option<String>,
            resolution: Option<f64>,
            origin: Option<Vec<f64>>,
            negate: Option<u8>,
            occupied_thresh: Option<f64>,
            free_thresh: Option<f64>,
        }
        let doc: Doc = serde_yaml::from_str(text).map_err(|e| GridError::BadMeta(e.to_string()))?;
        let origin = doc.origin.ok_or(GridError::MissingMetaKey("origin"))?;
        let origin: [f64; 3] = origin
            .try_into()
            .map_err(|_| GridError::BadMeta("origin must have 3 entries".into()))?;
        Ok(MapMeta {
            image: doc.image.ok_or(GridError::MissingMetaKey("image"))?,
            resolution: doc.resolution.ok_or(GridError::MissingMetaKey("resolution"))?,
            origin,
            negate: doc.negate.unwrap_or(0) != 0,
            occupied_thresh: doc.occupied_thresh.unwrap_or(OCCUPIED_THRESH),
            free_thresh: doc.free_thresh.unwrap_or(FREE_THRESH),
        })
    }

    pub fn classify(&self, pixel: u8) -> Cell {
        let p = if self.negate { 255 - pixel } else { pixel };
        let occ = (255.0 - p as f64) / 255.0;
        if occ > self.occupied_thresh {
            Cell::Occupied
        } else if occ < self.free_thresh {
            Cell::Free
        } else {
            Cell::Unknown
        }
    }
}

/// Rebuild a grid from decoded pixels and its metadata.
pub fn grid_from_pixels(meta: &MapMeta, width: usize, height: usize, pixels: &[u8]) -> Result<OccupancyGrid> {
    if pixels.len() != width * height {
        return Err(GridError::DimensionMismatch(format!(
            "{} pixels for {width}x{height}",
            pixels.len()
        )));
    }
    let frame = GridFrame {
        width,
        height,
        resolution: meta.resolution,
        origin: Point2::new(meta.origin[0], meta.origin[1]),
    };
    let mut cells = vec![Cell::Unknown; width * height];
    for (row_from_top, row) in pixels.chunks(width.max(1)).enumerate().take(height) {
        let r = height - 1 - row_from_top;
        for (c, &p) in row.iter().enumerate() {
            cells[r * width + c] = meta.classify(p);
        }
    }
    OccupancyGrid::new(frame, meta.origin[2], cells)
}

/// Write `image_path` (PGM) and `meta_path` (YAML). The YAML references the
/// image by file name.
pub fn export_map(grid: &OccupancyGrid, image_path: &Path, meta_path: &Path) -> Result<()> {
    let name = image_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    fs::write(image_path, encode_pgm(grid)).map_err(|e| io_err(image_path, e))?;
    fs::write(meta_path, MapMeta::for_grid(grid, &name).to_yaml()).map_err(|e| io_err(meta_path, e))
}

pub fn import_map(image_path: &Path, meta_path: &Path) -> Result<OccupancyGrid> {
    let text = fs::read_to_string(meta_path).map_err(|e| io_err(meta_path, e))?;
    let meta = MapMeta::from_yaml(&text)?;
    let bytes = fs::read(image_path).map_err(|e| io_err(image_path, e))?;
    let (w, h, pixels) = decode_pgm(&bytes)?;
    grid_from_pixels(&meta, w, h, &pixels)
}

/// Import using the image named inside the YAML, relative to its directory.
pub fn import_map_from_meta(meta_path: &Path) -> Result<OccupancyGrid> {
    let text = fs::read_to_string(meta_path).map_err(|e| io_err(meta_path, e))?;
    let meta = MapMeta::from_yaml(&text)?;
    let image = meta_path.parent().unwrap_or(Path::new(".")).join(&meta.image);
    import_map(&image, meta_path)
}

/// 8-bit grayscale PNG with the same pixel values as the PGM.
pub fn export_png(grid: &OccupancyGrid, path: &Path) -> Result<()> {
    let bytes = encode_pgm(grid);
    let (w, h, pixels) = decode_pgm(&bytes)?;
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| io_err(path, e))?;
    writer.write_image_data(&pixels).map_err(|e| io_err(path, e))?;
    writer.finish().map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------------
// Differencing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DiffKind {
    /// Built occupied where the plan is free.
    Extra,
    /// Planned occupied where the site is free.
    Missing,
}

impl DiffKind {
    pub fn name(self) -> &'static str {
        match self {
            DiffKind::Extra => "EXTRA",
            DiffKind::Missing => "MISSING",
        }
    }
}

/// Per-cell marks over the overlap of two registered grids.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffLattice {
    pub frame: GridFrame,
    pub marks: Vec<Option<DiffKind>>,
}

impl DiffLattice {
    pub fn count(&self, kind: DiffKind) -> usize {
        self.marks.iter().filter(|m| **m == Some(kind)).count()
    }

    pub fn get(&self, c: usize, r: usize) -> Option<DiffKind> {
        self.marks[self.frame.index(c, r)]
    }
}

/// Cell offset of `b`'s origin relative to `a`'s along one axis.
fn cell_offset(a: f64, b: f64, res: f64, axis: &str) -> Result<i64> {
    let k = (b - a) / res;
    let ki = k.round();
    if (k - ki).abs() > 1e-6 || !ki.is_finite() {
        return Err(GridError::RegistrationError(format!(
            "{axis} origins differ by {} cells, not a whole number",
            k
        )));
    }
    Ok(ki as i64)
}

pub fn diff_grids(planned: &OccupancyGrid, built: &OccupancyGrid) -> Result<DiffLattice> {
    let res = planned.resolution();
    if (res - built.resolution()).abs() > 1e-12 * res {
        return Err(GridError::ResolutionMismatch(res, built.resolution()));
    }
    if planned.yaw != built.yaw {
        return Err(GridError::RegistrationError("origins differ in yaw".into()));
    }
    let (po, bo) = (planned.frame.origin, built.frame.origin);
    let dx = cell_offset(po.x, bo.x, res, "x")?;
    let dy = cell_offset(po.y, bo.y, res, "y")?;
    // overlap in planned cell coordinates
    let c0 = dx.max(0);
    let c1 = (planned.width() as i64).min(dx + built.width() as i64);
    let r0 = dy.max(0);
    let r1 = (planned.height() as i64).min(dy + built.height() as i64);
    if c0 >= c1 || r0 >= r1 {
        return Err(GridError::RegistrationError("grids do not overlap".into()));
    }
    let frame = GridFrame {
        width: (c1 - c0) as usize,
        height: (r1 - r0) as usize,
        resolution: res,
        origin: Point2::new(po.x + c0 as f64 * res, po.y + r0 as f64 * res),
    };
    let mut marks = Vec::with_capacity(frame.len());
    for r in r0..r1 {
        for c in c0..c1 {
            let p = planned.get(c as usize, r as usize);
            let b = built.get((c - dx) as usize, (r - dy) as usize);
            marks.push(match (p, b) {
                (Cell::Free, Cell::Occupied) => Some(DiffKind::Extra),
                (Cell::Occupied, Cell::Free) => Some(DiffKind::Missing),
                _ => None,
            });
        }
    }
    Ok(DiffLattice { frame, marks })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffCluster {
    pub id: usize,
    pub kind: DiffKind,
    /// `(c, r)` in the diff lattice, sorted by row then column.
    pub cells: Vec<(usize, usize)>,
    pub area: f64,
    pub centroid: Point2,
    pub bbox: Rect,
}

impl DiffCluster {
    fn min_rc(&self) -> (usize, usize) {
        self.cells.iter().map(|&(c, r)| (r, c)).min().unwrap()
    }
}

/// 4-connected components per kind, dropping those below `min_area`.
/// Ordered by area descending, then lowest (row, column); ids count from 1.
pub fn cluster_diff(diff: &DiffLattice, min_area: f64) -> Vec<DiffCluster> {
    let f = &diff.frame;
    let cell_area = f.resolution * f.resolution;
    let mut seen = vec![false; f.len()];
    let mut out = Vec::new();
    for start in 0..f.len() {
        let Some(kind) = diff.marks[start] else { continue };
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut cells = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (c, r) = (i % f.width, i / f.width);
            cells.push((c, r));
            let mut visit = |j: usize| {
                if !seen[j] && diff.marks[j] == Some(kind) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < f.width {
                visit(i + 1);
            }
            if r > 0 {
                visit(i - f.width);
            }
            if r + 1 < f.height {
                visit(i + f.width);
            }
        }
        let area = cells.len() as f64 * cell_area;
        if area < min_area {
            continue;
        }
        cells.sort_by_key(|&(c, r)| (r, c));
        let n = cells.len() as f64;
        let (sx, sy) = cells
            .iter()
            .fold((0.0, 0.0), |(sx, sy), &(c, r)| (sx + f.center_x(c), sy + f.center_y(r)));
        let bbox = cells
            .iter()
            .map(|&(c, r)| {
                let x = f.origin.x + c as f64 * f.resolution;
                let y = f.origin.y + r as f64 * f.resolution;
                Rect::new(x, y, x + f.resolution, y + f.resolution)
            })
            .reduce(Rect::union)
            .unwrap();
        out.push(DiffCluster {
            id: 0,
            kind,
            cells,
            area,
            centroid: Point2::new(sx / n, sy / n),
            bbox,
        });
    }
    out.sort_by(|a, b| {
        b.cells
            .len()
            .cmp(&a.cells.len())
            .then_with(|| a.min_rc().cmp(&b.min_rc()))
            .then_with(|| a.kind.cmp(&b.kind))
    });
    for (i, c) in out.iter_mut().enumerate() {
        c.id = i + 1;
    }
    out
}

/// Tab-separated cluster listing.
pub fn diff_report(diff: &DiffLattice, clusters: &[DiffCluster]) -> String {
    let f = &diff.frame;
    let mut out = String::from("# birs diff report v1\n");
    let _ = writeln!(
        out,
        "# lattice {}x{} resolution {} origin {} {}",
        f.width,
        f.height,
        fmt_decimal(f.resolution),
        fmt_origin(f.origin.x),
        fmt_origin(f.origin.y)
    );
    out.push_str("# id\tkind\tarea_m2\tcentroid_x\tcentroid_y\tmin_x\tmin_y\tmax_x\tmax_y\tcells\n");
    for c in clusters {
        let _ = writeln!(
            out,
            "{}\t{}\t{:.4}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{}",
            c.id,
            c.kind.name(),
            c.area,
            c.centroid.x,
            c.centroid.y,
            c.bbox.min_x,
            c.bbox.min_y,
            c.bbox.max_x,
            c.bbox.max_y,
            c.cells.len()
        );
    }
    out
}
