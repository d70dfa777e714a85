//! Command-line interface: track, eval, simulate, stats and batch.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use crate::association::{track_sequence, AssociationError, TrackOutput, TrackerConfig, TrackerStats};
use crate::geometry::AssocMetric;
use crate::io::{self, Config, IoError, SequenceBundle};
use crate::metrics::{evaluate, EvalReport, DEFAULT_IOU_THRESHOLD};
use crate::motion::{MotionError, MotionKind};
use crate::sim::{self, KinematicStats, SimError, DEFAULT_DIRECTION_BINS};
use crate::trajectory::TrajectorySet;

#[derive(Debug, Parser)]
#[command(name = "sut", version, about = "Multi-object fish tracker with simulation and evaluation tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track one detection file and write MOT results.
    Track(TrackArgs),
    /// Score a result file against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic ground-truth and detection pair.
    Simulate(SimulateArgs),
    /// Per-frame speed and angular-velocity series of a ground-truth file.
    Stats(StatsArgs),
    /// Track many detection files in parallel.
    Batch(BatchArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML config with [tracker], [fishiou], [ukf] and [sim] sections.
    #[arg(long, env = "SUT_CONFIG")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrackerOverrides {
    #[arg(long, value_enum)]
    pub motion: Option<MotionKind>,
    #[arg(long, value_enum)]
    pub assoc: Option<AssocMetric>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// MOT detection file.
    #[arg(long)]
    pub dets: PathBuf,
    /// Result file to write.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Embedding sidecar (`frame,det_index,v1,...`); used when reid_enabled.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub overrides: TrackerOverrides,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    pub iou_threshold: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub out_gt: PathBuf,
    #[arg(long)]
    pub out_dets: PathBuf,
    /// Overrides `[sim] seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub gt: PathBuf,
    /// Number of heading bins over (−π, π].
    #[arg(long, default_value_t = DEFAULT_DIRECTION_BINS)]
    pub bins: usize,
    /// CSV destination; standard output when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    /// Detection files; each result is written to OUT_DIR under the same file name.
    #[arg(required = true)]
    pub dets: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub overrides: TrackerOverrides,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<AssociationError> for CliError {
    fn from(e: AssociationError) -> Self {
        match e {
            AssociationError::Motion(MotionError::NumericalDegeneracy(_)) => CliError::Numerical(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Track(a) => cmd_track(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Stats(a) => cmd_stats(&a),
        Command::Batch(a) => cmd_batch(&a),
    }
}

fn load_config(args: &ConfigArgs) -> Result<Config, CliError> {
    match &args.config {
        Some(path) => Ok(io::load_config(path)?),
        None => Ok(Config::default()),
    }
}

fn tracker_config(args: &ConfigArgs, overrides: &TrackerOverrides) -> Result<TrackerConfig, CliError> {
    let mut cfg = load_config(args)?.tracker;
    if let Some(m) = overrides.motion {
        cfg.motion = m;
    }
    if let Some(a) = overrides.assoc {
        cfg.assoc = a;
    }
    Ok(cfg)
}

fn emitted_ids(outputs: &[TrackOutput]) -> usize {
    outputs.iter().map(|o| o.id).collect::<BTreeSet<_>>().len()
}

fn summary(stats: &TrackerStats, outputs: &[TrackOutput]) -> String {
    format!(
        "tracks born {}, emitted {} ({} boxes), removed {}",
        stats.born,
        emitted_ids(outputs),
        outputs.len(),
        stats.removed
    )
}

pub fn cmd_track(a: &TrackArgs) -> Result<(), CliError> {
    let cfg = tracker_config(&a.config, &a.overrides)?;
    let detections = io::read_detections(&a.dets)?;
    let embeddings = match &a.embeddings {
        Some(path) if cfg.reid_enabled => Some(io::read_embeddings(path)?),
        Some(path) => {
            log::warn!("ignoring embeddings {}: reid_enabled is false", path.display());
            None
        }
        None => None,
    };
    let bundle = SequenceBundle::new(detections, embeddings.as_ref(), None)?;
    log::info!("tracking {} frames from {}", bundle.frame_count, a.dets.display());
    let (outputs, stats) = track_sequence(&cfg, &bundle.detections)?;
    io::write_results(&outputs, &a.out)?;
    println!("{}", summary(&stats, &outputs));
    Ok(())
}

pub fn format_report(r: &EvalReport) -> String {
    let (c, i) = (&r.clear, &r.id);
    let mut s = String::new();
    let rows: [(&str, String); 12] = [
        ("MOTA", format!("{:.4}", c.mota)),
        ("IDF1", format!("{:.4}", i.idf1)),
        ("IDP", format!("{:.4}", i.idp)),
        ("IDR", format!("{:.4}", i.idr)),
        ("IDSW", c.idsw.to_string()),
        ("IDFP", i.idfp.to_string()),
        ("IDFN", i.idfn.to_string()),
        ("IDTP", i.idtp.to_string()),
        ("Frag", c.frag.to_string()),
        ("FP", c.fp.to_string()),
        ("FN", c.fn_.to_string()),
        ("GT", c.gt_count.to_string()),
    ];
    for (name, value) in rows {
        writeln!(s, "{name:<5} {value:>12}").expect("writing to a String cannot fail");
    }
    writeln!(s).expect("writing to a String cannot fail");
    writeln!(s, "{}", EvalReport::CSV_HEADER).expect("writing to a String cannot fail");
    writeln!(s, "{}", r.csv_row()).expect("writing to a String cannot fail");
    s
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    if !(a.iou_threshold > 0.0 && a.iou_threshold <= 1.0) {
        return Err(CliError::Usage(format!("--iou-threshold must lie in (0, 1], got {}", a.iou_threshold)));
    }
    let gt = io::read_gt(&a.gt)?;
    let pred = io::read_results(&a.pred)?;
    print!("{}", format_report(&evaluate(&gt, &pred, a.iou_threshold)));
    Ok(())
}

fn kinematic_summary(k: &KinematicStats) -> String {
    let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"));
    format!(
        "mean speed {} px/frame, mean |angular velocity| {} rad/frame",
        show(k.mean_speed),
        show(k.mean_abs_angular_velocity)
    )
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let mut params = load_config(&a.config)?.sim;
    if let Some(seed) = a.seed {
        params.seed = seed;
    }
    let gt = sim::simulate(&params)?;
    let dets = sim::corrupt(&gt, &params)?;
    io::write_gt(&gt, &a.out_gt)?;
    io::write_detections(&dets, &a.out_dets)?;
    let det_count: usize = dets.values().map(Vec::len).sum();
    println!(
        "{} fish, {} frames, {} gt boxes, {} detections",
        params.n_fish,
        params.n_frames,
        gt.len(),
        det_count
    );
    println!("{}", kinematic_summary(&sim::kinematic_stats(&gt, DEFAULT_DIRECTION_BINS)));
    Ok(())
}

/// Per-frame CSV followed, after a blank line, by the direction histogram.
/// Undefined values are left empty; an empty set yields only the header.
pub fn format_stats(k: &KinematicStats) -> String {
    let mut s = String::from("frame,mean_speed,mean_abs_angular_velocity\n");
    if k.series.is_empty() {
        return s;
    }
    let cell = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
    for f in &k.series {
        writeln!(s, "{},{},{}", f.frame, cell(f.mean_speed), cell(f.mean_abs_angular_velocity))
            .expect("writing to a String cannot fail");
    }
    let bins = k.direction_histogram.len();
    let width = 2.0 * std::f64::consts::PI / bins as f64;
    s.push_str("\nbin_start,bin_end,count\n");
    for (i, count) in k.direction_histogram.iter().enumerate() {
        let lo = -std::f64::consts::PI + i as f64 * width;
        writeln!(s, "{:.6},{:.6},{count}", lo, lo + width).expect("writing to a String cannot fail");
    }
    s
}

pub fn cmd_stats(a: &StatsArgs) -> Result<(), CliError> {
    if a.bins == 0 {
        return Err(CliError::Usage("--bins must be at least 1".into()));
    }
    let gt: TrajectorySet = io::read_gt(&a.gt)?;
    let k = sim::kinematic_stats(&gt, a.bins);
    let text = format_stats(&k);
    match &a.out {
        Some(path) => {
            std::fs::write(path, text).map_err(|source| IoError::Io { path: path.clone(), source })?;
            println!("{}", kinematic_summary(&k));
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn batch_one(cfg: &TrackerConfig, dets: &Path, out_dir: &Path) -> Result<String, CliError> {
    let name = dets.file_name().ok_or_else(|| CliError::Usage(format!("{} has no file name", dets.display())))?;
    let detections = io::read_detections(dets)?;
    let (outputs, stats) = track_sequence(cfg, &detections)?;
    io::write_results(&outputs, &out_dir.join(name))?;
    Ok(format!("{}: {}", dets.display(), summary(&stats, &outputs)))
}

pub fn cmd_batch(a: &BatchArgs) -> Result<(), CliError> {
    if a.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let names: BTreeSet<_> = a.dets.iter().filter_map(|p| p.file_name()).collect();
    if names.len() != a.dets.len() {
        return Err(CliError::Usage("detection files must have distinct file names".into()));
    }
    let cfg = tracker_config(&a.config, &a.overrides)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", a.jobs)))?;
    let results: Vec<Result<String, CliError>> =
        pool.install(|| a.dets.par_iter().map(|d| batch_one(&cfg, d, &a.out_dir)).collect());
    for r in results {
        println!("{}", r?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;

    fn path(points: impl Iterator<Item = (f64, f64)>) -> TrajectorySet {
        let mut t = TrajectorySet::new();
        for (k, (x, y)) in points.enumerate() {
            t.insert(k as u32 + 1, 1, BoundingBox::from_center(x, y, 10.0, 4.0).unwrap(), None).unwrap();
        }
        t
    }

    #[test]
    fn empty_stats_is_header_only() {
        let k = sim::kinematic_stats(&TrajectorySet::new(), 8);
        assert_eq!(format_stats(&k), "frame,mean_speed,mean_abs_angular_velocity\n");
    }

    #[test]
    fn circular_stats_column_is_constant() {
        let t = path((0..50).map(|k| {
            let a = 0.1 * k as f64;
            (100.0 + 60.0 * a.cos(), 100.0 + 60.0 * a.sin())
        }));
        let text = format_stats(&sim::kinematic_stats(&t, 8));
        let cols: Vec<&str> = text
            .lines()
            .skip(3)
            .take_while(|l| !l.is_empty())
            .map(|l| l.rsplit(',').next().unwrap())
            .collect();
        assert_eq!(cols.len(), 48);
        assert!(cols.iter().all(|c| *c == "0.100000"));
    }

    #[test]
    fn straight_stats_column_is_zero() {
        let t = path((0..20).map(|k| (2.0 * k as f64, 5.0)));
        let text = format_stats(&sim::kinematic_stats(&t, 8));
        assert!(text.lines().skip(3).take_while(|l| !l.is_empty()).all(|l| l.ends_with(",0.000000")));
    }

    #[test]
    fn report_contains_table_and_csv() {
        let t = path((0..10).map(|k| (3.0 * k as f64, 5.0)));
        let text = format_report(&evaluate(&t, &t, 0.5));
        assert!(text.contains("MOTA        1.0000"));
        assert!(text.contains(EvalReport::CSV_HEADER));
        assert!(text.trim_end().ends_with("1.000000,1.000000,1.000000,1.000000,0,0,0,10,0,0,0,10"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 1);
        assert_eq!(CliError::from(AssociationError::ZeroFrame).exit_code(), 2);
        let degenerate = AssociationError::Motion(MotionError::NumericalDegeneracy("x".into()));
        assert_eq!(CliError::from(degenerate).exit_code(), 3);
        assert_eq!(run_from(["sut", "bogus"]), 1);
        assert_eq!(run_from(["sut", "eval", "--gt", "/nonexistent/gt.txt", "--pred", "/nonexistent/p.txt"]), 2);
    }
}
