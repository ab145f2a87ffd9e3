use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use birs_core::config::{self, Config};
use birs_core::geometry::Rect;
use birs_core::grid::{self, GridError, OccupancyGrid};
use birs_core::ontology::{self, parse_patterns};
use birs_core::pipeline::{self, Artifacts, PipelineError};
use birs_core::progress;
use birs_core::service::{Server, ServiceError};
use clap::{ArgAction, Args, Parser, Subcommand};

const DEFAULT_CONFIG: &str = "birs.toml";

#[derive(Parser)]
#[command(
    name = "birs",
    version,
    about = "Building models to robot maps: parse, classify, rasterize, diff, plan, serve"
)]
struct Cli {
    /// Configuration file (default: ./birs.toml when present)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Fixed orderings and no run-specific header lines
    #[arg(long, global = true, default_value_t = true, action = ArgAction::Set, value_name = "BOOL")]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Inputs {
    #[arg(long)]
    ifc: Option<PathBuf>,
    #[arg(long)]
    site: Option<PathBuf>,
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(long)]
    visibility: Option<PathBuf>,
    #[arg(long)]
    function_tags: Option<PathBuf>,
    /// Only extract this storey (name or GlobalId)
    #[arg(long)]
    storey: Option<String>,
    /// Cut plane height above the storey elevation, meters
    #[arg(long)]
    cut_height: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Entity census of a STEP file
    Parse {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract the building model, ontology store and topological map
    Build {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value = "birs-out")]
        out_dir: PathBuf,
    },
    /// Rasterize the site into a PGM/YAML map pair
    Grid {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        resolution: Option<f64>,
        /// min_x,min_y,max_x,max_y
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        bounds: Option<Vec<f64>>,
        /// Leave out elements scheduled after this date
        #[arg(long)]
        as_of: Option<String>,
        /// Map YAML to write; the image goes next to it
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        png: Option<PathBuf>,
    },
    /// Compare a planned and a built map
    Diff {
        #[arg(long)]
        planned: PathBuf,
        #[arg(long)]
        built: PathBuf,
        #[arg(long)]
        min_area: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify differences between the plan and the as-built map
    Report {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        built: Option<PathBuf>,
        #[arg(long)]
        as_of: Option<String>,
        #[arg(long)]
        min_area: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the cluster report here
        #[arg(long)]
        diff_out: Option<PathBuf>,
    },
    /// Route between two rooms (GlobalId or long name)
    Plan {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Match triple patterns, e.g. '?s type Landmark . ?s sensorVisible false'
    Query {
        #[command(flatten)]
        inputs: Inputs,
        pattern: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve maps and queries over TCP (BIRS_ADDR overrides the configured address)
    Serve {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        listen: Option<String>,
        /// Map YAML to publish
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        built: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    code: &'static str,
    message: String,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure {
            code: e.code(),
            message: e.to_string(),
        }
    }
}

impl From<GridError> for Failure {
    fn from(e: GridError) -> Self {
        PipelineError::from(e).into()
    }
}

impl From<ServiceError> for Failure {
    fn from(e: ServiceError) -> Self {
        Failure {
            code: "service",
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: "usage",
        message: message.into(),
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error\t{}\t{}", f.code, f.message.replace(['\n', '\t'], " "));
            ExitCode::from(if f.code == "usage" { 2 } else { 1 })
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    let cfg = match path {
        Some(p) => Config::load(p),
        None if Path::new(DEFAULT_CONFIG).is_file() => Config::load(Path::new(DEFAULT_CONFIG)),
        None => Ok(Config::default()),
    };
    cfg.map_err(|e| PipelineError::from(e).into())
}

fn apply_inputs(cfg: &mut Config, i: Inputs) {
    let set = |slot: &mut Option<PathBuf>, v: Option<PathBuf>| {
        if v.is_some() {
            *slot = v;
        }
    };
    set(&mut cfg.input.ifc, i.ifc);
    set(&mut cfg.input.site, i.site);
    set(&mut cfg.input.schedule, i.schedule);
    set(&mut cfg.input.visibility, i.visibility);
    set(&mut cfg.input.function_tags, i.function_tags);
    if i.storey.is_some() {
        cfg.model.storey = i.storey;
    }
    if let Some(h) = i.cut_height {
        cfg.model.cut_height = h;
    }
}

fn date(text: Option<&str>, cfg: &Config) -> Result<chrono::NaiveDate> {
    match text {
        Some(t) => config::parse_date(t).map_err(usage),
        None => cfg
            .progress
            .as_of
            .ok_or_else(|| usage("--as-of is required (or progress.as_of in the config)")),
    }
}

struct Output {
    deterministic: bool,
}

impl Output {
    fn emit(&self, path: Option<&Path>, text: &str) -> Result<()> {
        let mut text = text.to_string();
        let is_json = path.is_some_and(|p| p.extension().is_some_and(|e| e == "json"));
        if !self.deterministic && !is_json {
            let now = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs());
            text = format!("# generated_at {now}\n{text}");
        }
        match path {
            Some(p) => pipeline::write_text(p, &text).map_err(Failure::from),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())
                    .and_then(|_| out.flush())
                    .map_err(|e| Failure {
                        code: "io",
                        message: e.to_string(),
                    })
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let out = Output {
        deterministic: cli.deterministic,
    };
    let config_path = cli.config.as_deref();
    match cli.command {
        Command::Parse { file, out: dest } => {
            let graph = pipeline::parse_graph(&file)?;
            let mut text = String::from("# birs entity census v1\n");
            text.push_str(&format!("# schema {}\n", graph.header.schemas().join(",")));
            text.push_str(&format!("# entities {}\n", graph.len()));
            for (ty, n) in graph.census() {
                text.push_str(&format!("{ty}\t{n}\n"));
            }
            let dangling = graph.dangling_references();
            for (from, to) in &dangling {
                text.push_str(&format!("# dangling #{from} -> #{to}\n"));
            }
            out.emit(dest.as_deref(), &text)
        }
        Command::Build { inputs, out_dir } => {
            let mut cfg = load_config(config_path)?;
            apply_inputs(&mut cfg, inputs);
            let a = Artifacts::load(&cfg)?;
            let model = serde_json::to_string_pretty(a.model()).expect("model serializes") + "\n";
            out.emit(Some(&out_dir.join("model.json")), &model)?;
            out.emit(Some(&out_dir.join("store.nt")), &a.store.to_ntriples())?;
            out.emit(Some(&out_dir.join("topo.txt")), &a.topo.to_document())?;
            let mut issues = String::from("# entity\tissue\n");
            for i in &a.issues {
                issues.push_str(&format!("#{}\t{}\n", i.entity, i.error));
            }
            out.emit(Some(&out_dir.join("issues.txt")), &issues)?;
            let m = a.model();
            eprintln!(
                "built {} spaces, {} landmarks, {} doors, {} triples, {} topo edges, {} issues",
                m.spaces.len(),
                m.landmarks.len(),
                m.doors.len(),
                a.store.len(),
                a.topo.edges.len(),
                a.issues.len()
            );
            Ok(())
        }
        Command::Grid {
            inputs,
            resolution,
            bounds,
            as_of,
            out: dest,
            png,
        } => {
            let mut cfg = load_config(config_path)?;
            apply_inputs(&mut cfg, inputs);
            if let Some(r) = resolution {
                cfg.grid.resolution = r;
            }
            if let Some(b) = bounds {
                if b.len() != 4 {
                    return Err(usage("--bounds takes min_x,min_y,max_x,max_y"));
                }
                cfg.grid.bounds = Some([b[0], b[1], b[2], b[3]]);
            }
            cfg.validate().map_err(PipelineError::from)?;
            let extraction = pipeline::load_model(&cfg)?;
            let mut site = pipeline::load_site(&cfg, extraction.model)?;
            if let Some(text) = as_of {
                let d = config::parse_date(&text).map_err(usage)?;
                let schedule = pipeline::load_schedule(&cfg)?.unwrap_or_default();
                site = progress::planned_site(&site, &schedule, d);
            }
            let g = grid::rasterize(&site, &cfg.raster_options())?;
            let meta = dest
                .or(cfg.grid.map.clone())
                .unwrap_or_else(|| PathBuf::from("map.yaml"));
            write_map(&g, &meta, png.as_deref())
        }
        Command::Diff {
            planned,
            built,
            min_area,
            out: dest,
        } => {
            let cfg = load_config(config_path)?;
            let p = grid::import_map_from_meta(&planned)?;
            let b = grid::import_map_from_meta(&built)?;
            let diff = grid::diff_grids(&p, &b)?;
            let clusters = grid::cluster_diff(&diff, min_area.unwrap_or(cfg.progress.min_cluster_area));
            out.emit(dest.as_deref(), &grid::diff_report(&diff, &clusters))
        }
        Command::Report {
            inputs,
            built,
            as_of,
            min_area,
            out: dest,
            diff_out,
        } => {
            let mut cfg = load_config(config_path)?;
            apply_inputs(&mut cfg, inputs);
            if built.is_some() {
                cfg.input.built_map = built;
            }
            if let Some(a) = min_area {
                cfg.progress.min_cluster_area = a;
            }
            let as_of = date(as_of.as_deref(), &cfg)?;
            let a = Artifacts::load(&cfg)?;
            let outcome = a.progress(as_of)?;
            if let Some(p) = diff_out {
                out.emit(Some(&p), &grid::diff_report(&outcome.diff, &outcome.clusters))?;
            }
            out.emit(dest.as_deref(), &progress::findings_report(&outcome.findings, as_of))
        }
        Command::Plan {
            inputs,
            from,
            to,
            out: dest,
        } => {
            let mut cfg = load_config(config_path)?;
            apply_inputs(&mut cfg, inputs);
            let a = Artifacts::load(&cfg)?;
            let start = a.topo.resolve(&from).map_err(PipelineError::from)?.id.clone();
            let goal = a.topo.resolve(&to).map_err(PipelineError::from)?.id.clone();
            let route = a.topo.plan_path(&start, &goal).map_err(PipelineError::from)?;
            out.emit(dest.as_deref(), &a.topo.route_report(&route))
        }
        Command::Query {
            inputs,
            pattern,
            out: dest,
        } => {
            let mut cfg = load_config(config_path)?;
            apply_inputs(&mut cfg, inputs);
            let patterns = parse_patterns(&pattern).map_err(|e| usage(e.to_string()))?;
            let a = Artifacts::load(&cfg)?;
            let rows = a.store.query(&patterns).map_err(PipelineError::from)?;
            out.emit(dest.as_deref(), &bindings_report(&patterns, &rows))
        }
        Command::Serve {
            inputs,
            listen,
            map,
            built,
        } => {
            let mut cfg = load_config(config_path)?;
            apply_inputs(&mut cfg, inputs);
            if map.is_some() {
                cfg.grid.map = map;
            }
            if built.is_some() {
                cfg.input.built_map = built;
            }
            let addr = listen.unwrap_or_else(|| cfg.listen_addr());
            let a = Arc::new(Artifacts::load(&cfg)?);
            let server = Server::bind(&addr, a)?;
            let local = server.local_addr().map_err(ServiceError::from)?;
            println!("listening {local}");
            let _ = std::io::stdout().flush();
            server.run();
            Ok(())
        }
    }
}

fn write_map(g: &OccupancyGrid, meta: &Path, png: Option<&Path>) -> Result<()> {
    let image = meta.with_extension("pgm");
    if let Some(dir) = meta.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure {
            code: "io",
            message: format!("{}: {e}", dir.display()),
        })?;
    }
    grid::export_map(g, &image, meta)?;
    if let Some(p) = png {
        grid::export_png(g, p)?;
    }
    let f = g.frame();
    let Rect { min_x, min_y, .. } = f.extent();
    eprintln!(
        "wrote {} ({}x{} cells at {} m, origin {min_x} {min_y})",
        meta.display(),
        f.width,
        f.height,
        f.resolution
    );
    Ok(())
}

fn bindings_report(patterns: &[ontology::TriplePattern], rows: &[ontology::Bindings]) -> String {
    let mut vars: Vec<String> = patterns.iter().flat_map(|p| p.variables()).collect();
    vars.sort();
    vars.dedup();
    let mut text = String::from("# birs query bindings v1\n");
    text.push_str(&format!("# ?{}\n", vars.join("\t?")));
    for row in rows {
        let cells: Vec<String> = vars
            .iter()
            .map(|v| row.get(v).map_or("-".to_string(), |t| t.to_string()))
            .collect();
        text.push_str(&cells.join("\t"));
        text.push('\n');
    }
    text
}
