//! Command-line driver.
//!
//! A run is described by a TOML file:
//!
//! ```toml
//! seed = 7
//! out_dir = "runs/waymo_to_kitti"
//! min_support = 0.25
//!
//! [source]
//! preset = "waymo_like"      # or "kitti_like"
//! frames = 300
//! [source.spec]              # optional overrides of preset fields
//! clutter_rate = 2000.0
//!
//! [target]
//! cache = "domains/kitti.json"   # a domain written by `gen`, instead of a preset
//!
//! [gate]
//! tau = 0.6
//! [em]
//! k = 8
//! [[sweep]]
//! axis = "w"
//! relative_range = 0.5
//! steps = 21
//! [de]
//! population = 16
//! ```
//!
//! Every section is optional except `source` and `target`. Seeds that are
//! not given explicitly (domain specs, `em.seed`, `de.seed`) are derived from
//! the global `seed`, so `--seed` reseeds the whole run.
//!
//! Each command writes into the output directory and reuses what earlier
//! commands left there. `config.stamp.json` records the resolved
//! configuration; when it differs from the current one, earlier outputs are
//! ignored and recomputed.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extractor::{build_reference_db, build_target_db, FeatureExtractor, GateConfig};
use crate::gmm::{fit_em, EmConfig, Gmm};
use crate::io;
use crate::optimizer::{
    calibrate_with_model, linear_sweep, min_target_features, CalibrationConfig, CalibrationResult,
    CurvePoint, DeConfig, SweepConfig, SweepCurve, TargetObjective,
};
use crate::synthdet::{generate_domain, SyntheticDomain, SyntheticExtractor};
use crate::types::{AnchorSizes, Axis, FeatureDatabase};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NO_FEATURES: i32 = 4;
pub const EXIT_DIM_MISMATCH: i32 = 5;

/// Process exit code for a pipeline error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig { .. } | Error::UnknownClass(_) => EXIT_INVALID_CONFIG,
        Error::Io { .. } | Error::Format { .. } => EXIT_IO,
        Error::ZeroFeatures { .. }
        | Error::EmptyDatabase
        | Error::InsufficientSamples { .. }
        | Error::SweepExhausted { .. }
        | Error::NoViableCandidate => EXIT_NO_FEATURES,
        Error::DimensionMismatch { .. } => EXIT_DIM_MISMATCH,
        Error::NonFiniteFeature { .. } | Error::UnknownFrame(_) => EXIT_FAILURE,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "anchor-calib",
    version,
    about = "Unsupervised anchor-size calibration on synthetic detection domains"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Global seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker thread cap. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Score gate threshold; overrides `gate.tau`.
    #[arg(long, global = true)]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate the source and target domains and cache them.
    Gen,
    /// Build the reference feature database per class.
    Refdb,
    /// Fit the mixture model per class.
    Fit,
    /// Per-axis fitness sweep on the target domain.
    Sweep,
    /// Full calibration: sweep followed by differential evolution.
    Calibrate,
    /// Summarize calibration results.
    Report,
}

/// Command-line overrides applied while loading a config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tau: Option<f64>,
}

/// Where a domain comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainSource {
    Synthetic {
        spec: SyntheticDomain,
        frames: usize,
    },
    Cached {
        manifest: PathBuf,
    },
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub source: DomainSource,
    pub target: DomainSource,
    pub calibration: CalibrationConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    out_dir: Option<PathBuf>,
    source: RawDomain,
    target: RawDomain,
    #[serde(default)]
    gate: GateConfig,
    #[serde(default)]
    em: EmConfig,
    #[serde(default = "SweepConfig::all")]
    sweep: Vec<SweepConfig>,
    #[serde(default)]
    de: DeConfig,
    min_support: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    preset: Option<String>,
    frames: Option<usize>,
    cache: Option<PathBuf>,
    spec: Option<toml::Table>,
}

const DEFAULT_FRAMES: usize = 100;
const STREAM_SOURCE: u64 = 1;
const STREAM_TARGET: u64 = 2;
const STREAM_EM: u64 = 3;
const STREAM_DE: u64 = 4;

/// Independent seed for one consumer of the global seed (splitmix64).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn preset(name: &str, seed: u64, field: &str) -> Result<SyntheticDomain> {
    match name {
        "kitti_like" => Ok(SyntheticDomain::kitti_like(seed)),
        "waymo_like" => Ok(SyntheticDomain::waymo_like(seed)),
        other => Err(Error::invalid(
            field,
            format!("unknown preset `{other}`, expected kitti_like or waymo_like"),
        )),
    }
}

fn prefixed(prefix: &str, e: Error) -> Error {
    match e {
        Error::InvalidConfig { field, reason } => {
            Error::invalid(format!("{prefix}.{field}"), reason)
        }
        other => other,
    }
}

fn resolve_domain(raw: RawDomain, name: &str, base_dir: &Path) -> Result<DomainSource> {
    if let Some(cache) = raw.cache {
        if raw.preset.is_some() || raw.spec.is_some() || raw.frames.is_some() {
            return Err(Error::invalid(
                format!("{name}.cache"),
                "a cached domain cannot be combined with preset, spec or frames",
            ));
        }
        let manifest = base_dir.join(cache);
        if !manifest.is_file() {
            return Err(Error::invalid(
                format!("{name}.cache"),
                format!("{} does not exist", manifest.display()),
            ));
        }
        return Ok(DomainSource::Cached { manifest });
    }
    // the seed always comes from the spec table, filled in by the loader
    let base = preset(
        raw.preset.as_deref().unwrap_or("kitti_like"),
        0,
        &format!("{name}.preset"),
    )?;
    let mut table = toml::Table::try_from(&base)
        .map_err(|e| Error::invalid(format!("{name}.spec"), e.to_string()))?;
    for (k, v) in raw.spec.unwrap_or_default() {
        table.insert(k, v);
    }
    let spec: SyntheticDomain = table.try_into().map_err(|e: toml::de::Error| {
        Error::invalid(format!("{name}.spec"), e.message().to_string())
    })?;
    spec.validate()
        .map_err(|e| prefixed(&format!("{name}.spec"), e))?;
    let frames = raw.frames.unwrap_or(DEFAULT_FRAMES);
    if frames == 0 {
        return Err(Error::invalid(format!("{name}.frames"), "must be >= 1"));
    }
    Ok(DomainSource::Synthetic { spec, frames })
}

/// TOML integers are signed 64-bit; derived seeds keep 63 bits.
fn toml_seed(seed: u64) -> toml::Value {
    toml::Value::Integer((seed >> 1) as i64)
}

/// Fills `section.seed` with `value` unless the config sets it.
fn default_seed(root: &mut toml::Table, section: &str, value: u64) {
    let entry = root
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    if let toml::Value::Table(t) = entry {
        t.entry("seed".to_string()).or_insert(toml_seed(value));
    }
}

impl RunConfig {
    /// Parses a TOML config. Relative paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path, overrides: &Overrides) -> Result<RunConfig> {
        let bad = |e: toml::de::Error| Error::invalid("config", e.to_string());
        let mut root: toml::Table = text.parse().map_err(bad)?;
        let seed = match root.remove("seed") {
            None => 0,
            Some(toml::Value::Integer(s)) if s >= 0 => s as u64,
            Some(_) => return Err(Error::invalid("seed", "must be a non-negative integer")),
        };
        let seed = overrides.seed.unwrap_or(seed);
        // domain seeds are filled below, after the preset is chosen
        for (name, stream) in [("source", STREAM_SOURCE), ("target", STREAM_TARGET)] {
            if let Some(toml::Value::Table(d)) = root.get_mut(name) {
                if d.get("cache").is_none() {
                    let spec = d
                        .entry("spec".to_string())
                        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                    if let toml::Value::Table(s) = spec {
                        s.entry("seed".to_string())
                            .or_insert(toml_seed(derive_seed(seed, stream)));
                    }
                }
            }
        }
        default_seed(&mut root, "em", derive_seed(seed, STREAM_EM));
        default_seed(&mut root, "de", derive_seed(seed, STREAM_DE));
        let raw: RawConfig = root.try_into().map_err(bad)?;

        let source = resolve_domain(raw.source, "source", base_dir)?;
        let target = resolve_domain(raw.target, "target", base_dir)?;
        let mut gate = raw.gate;
        if let Some(tau) = overrides.tau {
            gate.tau = tau;
        }
        let calibration = CalibrationConfig {
            gate,
            em: raw.em,
            sweep: raw.sweep,
            de: raw.de,
            min_support: raw
                .min_support
                .unwrap_or(CalibrationConfig::default().min_support),
        };
        calibration.validate()?;
        let out_dir = match (&overrides.out, raw.out_dir) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => base_dir.join(o),
            (None, None) => base_dir.join("out"),
        };
        Ok(RunConfig {
            seed,
            out_dir,
            source,
            target,
            calibration,
        })
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::from_toml(&text, base, overrides)
    }

    /// Resolved configuration without the output directory; identical runs
    /// in different directories share it.
    fn stamp(&self) -> Vec<u8> {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let serde_json::Value::Object(m) = &mut v {
            m.remove("out_dir");
        }
        let mut s = serde_json::to_string_pretty(&v).expect("config serializes");
        s.push('\n');
        s.into_bytes()
    }
}

fn load_domain(
    src: &DomainSource,
    out: &Path,
    stem: &str,
    fresh: bool,
) -> Result<SyntheticExtractor> {
    match src {
        DomainSource::Cached { manifest } => SyntheticExtractor::load(manifest),
        DomainSource::Synthetic { spec, frames } => {
            let cached = out.join(format!("{stem}.json"));
            if fresh && cached.is_file() {
                let ex = SyntheticExtractor::load(&cached)?;
                if ex.spec() == spec && ex.num_frames() == *frames {
                    return Ok(ex);
                }
            }
            generate_domain(spec, *frames)
        }
    }
}

/// Loaded domains plus the output directory state for one command.
pub struct Workspace {
    pub cfg: RunConfig,
    pub source: SyntheticExtractor,
    pub target: SyntheticExtractor,
    /// False when the output directory holds results of another config.
    fresh: bool,
}

impl Workspace {
    /// Loads domains and records the config stamp in the output directory.
    pub fn open(cfg: RunConfig) -> Result<Workspace> {
        let out = &cfg.out_dir;
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let stamp_path = out.join("config.stamp.json");
        let stamp = cfg.stamp();
        let fresh = std::fs::read(&stamp_path).is_ok_and(|old| old == stamp);
        let source = load_domain(&cfg.source, out, "source", fresh)?;
        let target = load_domain(&cfg.target, out, "target", fresh)?;
        let (ns, nt) = (source.spec().classes.len(), target.spec().classes.len());
        if ns != nt {
            return Err(Error::invalid(
                "target.spec.classes",
                format!("source has {ns} classes, target has {nt}"),
            ));
        }
        for c in &source.spec().classes {
            let ok = !c.name.is_empty()
                && c.name
                    .chars()
                    .all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-');
            if !ok {
                return Err(Error::invalid(
                    "source.spec.classes",
                    format!("class name `{}` must be non-empty [A-Za-z0-9_-]", c.name),
                ));
            }
        }
        if !fresh {
            io::write_bytes(&stamp_path, &stamp)?;
        }
        Ok(Workspace {
            cfg,
            source,
            target,
            fresh,
        })
    }

    pub fn out(&self) -> &Path {
        &self.cfg.out_dir
    }

    pub fn class_names(&self) -> Vec<String> {
        self.source
            .spec()
            .classes
            .iter()
            .map(|c| c.name.clone())
            .collect()
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out().join(name)
    }

    /// Path of an earlier output, if it exists and belongs to this config.
    fn reusable(&self, name: &str) -> Option<PathBuf> {
        let p = self.artifact(name);
        (self.fresh && p.is_file()).then_some(p)
    }

    pub fn source_sizes(&self, class: usize) -> Result<AnchorSizes> {
        Ok(self.source.anchor(class)?.sizes)
    }

    /// Reference database for `class`, loaded or built.
    pub fn reference(&self, class: usize) -> Result<FeatureDatabase> {
        let name = format!("reference_{}.sfdb", self.class_names()[class]);
        if let Some(p) = self.reusable(&name) {
            let db = io::read_sfdb(&p)?;
            if db.dim() != self.source.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.source.dim(),
                    actual: db.dim(),
                });
            }
            return Ok(db);
        }
        build_reference_db(
            &self.source,
            &self.source.frames(),
            class,
            &self.cfg.calibration.gate,
        )
    }

    /// Mixture for `class`, loaded or fitted on `reference`.
    pub fn model(&self, class: usize, reference: &FeatureDatabase) -> Result<Gmm> {
        let name = format!("gmm_{}.json", self.class_names()[class]);
        if let Some(p) = self.reusable(&name) {
            let g: Gmm = io::read_json(&p)?;
            if g.dim() != reference.dim() {
                return Err(Error::DimensionMismatch {
                    expected: reference.dim(),
                    actual: g.dim(),
                });
            }
            return Ok(g);
        }
        fit_em(reference, &self.cfg.calibration.em)
    }

    /// Sweep curves left by an earlier `sweep` or `calibrate`.
    pub fn stored_curves(&self, class: usize) -> Result<Vec<SweepCurve>> {
        let mut curves = Vec::new();
        for axis in Axis::ALL {
            let name = format!("sweep_{}_{}.csv", self.class_names()[class], axis);
            if let Some(p) = self.reusable(&name) {
                let points = io::read_curve_csv(&p)?
                    .into_iter()
                    .map(|(value, fitness)| CurvePoint { value, fitness })
                    .collect();
                curves.push(SweepCurve { axis, points });
            }
        }
        Ok(curves)
    }

    fn write_reference(&self, class: usize, db: &FeatureDatabase) -> Result<PathBuf> {
        let p = self.artifact(&format!("reference_{}.sfdb", self.class_names()[class]));
        io::write_sfdb(&p, db)?;
        Ok(p)
    }

    fn write_model(&self, class: usize, g: &Gmm) -> Result<PathBuf> {
        let p = self.artifact(&format!("gmm_{}.json", self.class_names()[class]));
        io::write_json(&p, g)?;
        Ok(p)
    }

    fn write_curves(&self, class: usize, curves: &[SweepCurve]) -> Result<()> {
        for c in curves {
            let p = self.artifact(&format!(
                "sweep_{}_{}.csv",
                self.class_names()[class],
                c.axis
            ));
            let pts: Vec<(f64, f64)> = c.points.iter().map(|p| (p.value, p.fitness)).collect();
            io::write_curve_csv(&p, &pts)?;
        }
        Ok(())
    }

    /// Calibration for `class`, loaded from an earlier run or computed and
    /// written with all its artifacts.
    pub fn calibration(&self, class: usize) -> Result<CalibrationResult> {
        let name = format!("calibration_{}.json", self.class_names()[class]);
        if let Some(p) = self.reusable(&name) {
            return io::read_json(&p);
        }
        self.run_calibration(class)
    }

    fn run_calibration(&self, class: usize) -> Result<CalibrationResult> {
        let reference = self.reference(class)?;
        let model = self.model(class, &reference)?;
        let reuse = self.stored_curves(class)?;
        let cal = calibrate_with_model(
            &self.target,
            &self.target.frames(),
            class,
            &self.cfg.calibration,
            self.source_sizes(class)?,
            reference,
            model,
            &reuse,
        )?;
        let cname = &self.class_names()[class];
        self.write_reference(class, &cal.reference)?;
        self.write_model(class, &cal.model)?;
        self.write_curves(class, &cal.result.sweep_curves)?;
        io::write_trace_csv(
            &self.artifact(&format!("de_trace_{cname}.csv")),
            &cal.result.de_trace,
        )?;
        io::write_json(
            &self.artifact(&format!("calibration_{cname}.json")),
            &cal.result,
        )?;
        Ok(cal.result)
    }
}

fn log(msg: impl AsRef<str>) {
    eprintln!("anchor-calib: {}", msg.as_ref());
}

pub fn cmd_gen(ws: &Workspace) -> Result<()> {
    for (ex, stem) in [(&ws.source, "source"), (&ws.target, "target")] {
        let p = ex.save(ws.out(), stem)?;
        log(format!(
            "{stem}: {} frames -> {}",
            ex.num_frames(),
            p.display()
        ));
    }
    Ok(())
}

pub fn cmd_refdb(ws: &Workspace) -> Result<()> {
    for class in 0..ws.class_names().len() {
        let db = ws.reference(class)?;
        let p = ws.write_reference(class, &db)?;
        log(format!(
            "{} features (D = {}) -> {}",
            db.len(),
            db.dim(),
            p.display()
        ));
    }
    Ok(())
}

pub fn cmd_fit(ws: &Workspace) -> Result<()> {
    for class in 0..ws.class_names().len() {
        let db = ws.reference(class)?;
        ws.write_reference(class, &db)?;
        let g = ws.model(class, &db)?;
        let p = ws.write_model(class, &g)?;
        log(format!(
            "K = {} mixture on {} features -> {}",
            g.k(),
            db.len(),
            p.display()
        ));
    }
    Ok(())
}

pub fn cmd_sweep(ws: &Workspace) -> Result<()> {
    let cfg = &ws.cfg.calibration;
    for class in 0..ws.class_names().len() {
        let db = ws.reference(class)?;
        ws.write_reference(class, &db)?;
        let model = ws.model(class, &db)?;
        ws.write_model(class, &model)?;
        if model.dim() != ws.target.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                actual: ws.target.dim(),
            });
        }
        let frames = ws.target.frames();
        let source = ws.source_sizes(class)?;
        let at_source = build_target_db(&ws.target, &frames, class, source, &cfg.gate)?;
        let objective = TargetObjective {
            extractor: &ws.target,
            frames: &frames,
            class,
            gate: &cfg.gate,
            model: &model,
            min_features: min_target_features(at_source.len(), cfg.min_support),
        };
        let eval = |s: AnchorSizes| objective.evaluate(s);
        let out = linear_sweep(&eval, source, &cfg.sweep, &ws.stored_curves(class)?)?;
        ws.write_curves(class, &out.curves)?;
        log(format!(
            "{}: sweep winners {} ({} evaluations)",
            ws.class_names()[class],
            out.initial,
            out.evaluations
        ));
    }
    Ok(())
}

pub fn cmd_calibrate(ws: &Workspace) -> Result<()> {
    for class in 0..ws.class_names().len() {
        let r = ws.run_calibration(class)?;
        log(format!(
            "{}: {} -> {} (fitness {:.3} -> {:.3}, {} evaluations)",
            ws.class_names()[class],
            r.source,
            r.calibrated,
            r.source_fitness,
            r.calibrated_fitness,
            r.evaluations
        ));
    }
    Ok(())
}

/// Writes `summary.csv` (one row per class and axis) and prints it.
pub fn cmd_report(ws: &Workspace) -> Result<()> {
    let mut csv = String::from("class,axis,source,calibrated,target_mean,relative_error,source_fitness,calibrated_fitness\n");
    for (class, name) in ws.class_names().iter().enumerate() {
        let r = ws.calibration(class)?;
        let truth = ws.target.spec().classes[class].mean_size;
        for axis in Axis::ALL {
            let (s, c, t) = (r.source.get(axis), r.calibrated.get(axis), truth.get(axis));
            csv.push_str(&format!(
                "{name},{axis},{s},{c},{t},{},{},{}\n",
                (c - t) / t,
                r.source_fitness,
                r.calibrated_fitness
            ));
        }
        println!(
            "{name}: source {} -> calibrated {} (target mean {}, max relative error {:.2}%)",
            r.source,
            r.calibrated,
            truth,
            100.0 * r.calibrated.max_relative_error(&truth)
        );
        println!(
            "  fitness {:.4} -> {:.4}; {} generations ({:?}), {} evaluations",
            r.source_fitness, r.calibrated_fitness, r.generations, r.termination, r.evaluations
        );
    }
    io::write_bytes(&ws.artifact("summary.csv"), csv.as_bytes())
}

/// Runs one command with already-parsed arguments.
pub fn run(cli: &Cli) -> Result<()> {
    let Some(config) = &cli.config else {
        return Err(Error::invalid(
            "--config",
            "a run configuration is required",
        ));
    };
    let overrides = Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
        tau: cli.tau,
    };
    let cfg = RunConfig::load(config, &overrides)?;
    let go = || -> Result<()> {
        let ws = Workspace::open(cfg)?;
        match cli.command {
            Command::Gen => cmd_gen(&ws),
            Command::Refdb => cmd_refdb(&ws),
            Command::Fit => cmd_fit(&ws),
            Command::Sweep => cmd_sweep(&ws),
            Command::Calibrate => cmd_calibrate(&ws),
            Command::Report => cmd_report(&ws),
        }
    };
    match cli.threads {
        None => go(),
        Some(0) => Err(Error::invalid("--threads", "must be >= 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid("--threads", e.to_string()))?
            .install(go),
    }
}

/// Parses `args` (including the program name), runs, reports errors on
/// stderr and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("anchor-calib: error: {e}");
            exit_code(&e)
        }
    }
}
