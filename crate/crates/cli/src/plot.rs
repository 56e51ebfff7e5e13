//! `gpcbf plot`: SVG figures with their CSV data.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use gpcbf::benchmark::published_kernels;
use gpcbf::confidence::monte_carlo_containment;
use gpcbf::contour::{zero_level_segments, Segment};
use gpcbf::dynamics::{generate_training_data, Measurement};
use gpcbf::gp::{default_initial_kernels, fit_hyperparameters, max_std_bound, BoundMode, HyperOptions};
use gpcbf::io::{read_json, read_problem};
use gpcbf::{BarrierCandidate, ConfidenceBox, GpPosterior, ProblemSpec};
use serde::Serialize;

use crate::common::{load_model, parse_probability, true_system, Outcome};
use crate::manifest::{RunManifest, Stage};
use crate::svg::{colormap, Frame, Svg};

#[derive(Args, Clone, Debug, Serialize)]
pub struct PlotArgs {
    #[command(subcommand)]
    pub kind: PlotKind,
}

#[derive(Subcommand, Clone, Debug, Serialize)]
pub enum PlotKind {
    /// Learned vector field colored by posterior standard deviation.
    Field(FieldArgs),
    /// Standard deviation bound and containment lower bound against sample count.
    Sweep(SweepArgs),
    /// Trajectories with the zero level set of `B` and the regions.
    Trajectories(TrajectoriesArgs),
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct FieldArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub problem: PathBuf,
    /// Arrows per axis.
    #[arg(long, default_value_t = 25)]
    pub grid: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKernels {
    /// Hyperparameters fit to each data set.
    Fitted,
    /// The published jet-engine hyperparameters.
    Published,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,35,50,100")]
    pub counts: Vec<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, value_enum, default_value_t = SweepKernels::Fitted)]
    pub kernels: SweepKernels,
    /// Half-width of the error box on every axis.
    #[arg(long, default_value_t = 0.05)]
    pub half_width: f64,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    #[arg(long, default_value = "1-1e-10", value_parser = parse_probability)]
    pub confidence: f64,
    #[arg(long, default_value_t = 100)]
    pub std_grid: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct TrajectoriesArgs {
    #[arg(long)]
    pub barrier: PathBuf,
    #[arg(long)]
    pub problem: PathBuf,
    /// Directory of `traj_*.csv` files; without it only regions and contour are drawn.
    #[arg(long)]
    pub traj_dir: Option<PathBuf>,
    /// Grid points per axis for the contour.
    #[arg(long, default_value_t = 400)]
    pub contour_grid: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 560.0;

fn state_frame(spec: &ProblemSpec) -> Frame {
    Frame {
        x: (spec.state_box.lower[0], spec.state_box.upper[0]),
        y: (spec.state_box.lower[1], spec.state_box.upper[1]),
        left: 70.0,
        top: 30.0,
        width: WIDTH - 100.0,
        height: HEIGHT - 90.0,
    }
}

fn planar(spec: &ProblemSpec) -> Result<()> {
    if spec.n != 2 {
        bail!("plots need a planar problem, got n = {}", spec.n);
    }
    Ok(())
}

fn draw_regions(svg: &mut Svg, f: &Frame, spec: &ProblemSpec) {
    for b in &spec.initial_boxes {
        svg.rect(f, [b.lower[0], b.lower[1]], [b.upper[0], b.upper[1]], "#2ca02c", "#2ca02c", 0.25);
    }
    for b in &spec.unsafe_boxes {
        svg.rect(f, [b.lower[0], b.lower[1]], [b.upper[0], b.upper[1]], "#d62728", "#d62728", 0.25);
    }
}

fn write_text(path: &Path, text: &str, stage: &mut Stage) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    stage.output(path);
    Ok(())
}

pub fn run(args: &PlotArgs, manifest: &mut RunManifest) -> Result<(Outcome, PathBuf)> {
    match &args.kind {
        PlotKind::Field(a) => field(a, manifest).map(|o| (o, a.out_dir.clone())),
        PlotKind::Sweep(a) => sweep(a, manifest).map(|o| (o, a.out_dir.clone())),
        PlotKind::Trajectories(a) => trajectories(a, manifest).map(|o| (o, a.out_dir.clone())),
    }
}

pub fn field(args: &FieldArgs, manifest: &mut RunManifest) -> Result<Outcome> {
    let mut stage = Stage::start("plot-field", args)?;
    stage.input(&args.problem);
    stage.input(&args.model);
    let spec = read_problem(&args.problem)?;
    planar(&spec)?;
    let gp = load_model(&args.model, &spec)?;
    if args.grid < 2 {
        bail!("--grid must be at least 2");
    }
    let points = spec.state_box.grid(args.grid);
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = points
        .iter()
        .map(|x| Ok((x.clone(), gp.mean(x), gp.std_dev(x)?)))
        .collect::<gpcbf::Result<_>>()?;

    let mut csv = String::from("x1,x2,mu1,mu2,sd1,sd2\n");
    for (x, mu, sd) in &rows {
        csv.push_str(&format!("{},{},{},{},{},{}\n", x[0], x[1], mu[0], mu[1], sd[0], sd[1]));
    }
    fs::create_dir_all(&args.out_dir)?;
    write_text(&args.out_dir.join("field.csv"), &csv, &mut stage)?;

    let f = state_frame(&spec);
    let mut svg = Svg::new(WIDTH, HEIGHT);
    draw_regions(&mut svg, &f, &spec);
    let sd_norm = |sd: &[f64]| sd.iter().map(|s| s * s).sum::<f64>().sqrt();
    let sd_max = rows.iter().map(|r| sd_norm(&r.2)).fold(0.0, f64::max);
    let cell = [
        spec.state_box.widths()[0] / args.grid as f64,
        spec.state_box.widths()[1] / args.grid as f64,
    ];
    for (x, mu, sd) in &rows {
        // Direction in pixel space, length fixed to most of a cell.
        let scaled = [mu[0] / cell[0], mu[1] / cell[1]];
        let len = (scaled[0] * scaled[0] + scaled[1] * scaled[1]).sqrt();
        if len == 0.0 {
            continue;
        }
        let tip = [x[0] + 0.8 * cell[0] * scaled[0] / len, x[1] + 0.8 * cell[1] * scaled[1] / len];
        let t = if sd_max > 0.0 { sd_norm(sd) / sd_max } else { 0.0 };
        svg.arrow(&f, [x[0], x[1]], tip, &colormap(t));
    }
    svg.axes(&f, "x1", "x2");
    svg.text(WIDTH / 2.0, 18.0, 13.0, "middle", &format!("posterior mean, std dev up to {sd_max:.3e}"));
    write_text(&args.out_dir.join("field.svg"), &svg.finish(), &mut stage)?;
    stage.finish(manifest, "success")?;
    Ok(Outcome::Success)
}

#[derive(Clone, Debug, Serialize)]
struct SweepRow {
    count: usize,
    rho_bar: Vec<f64>,
    lower_bound: f64,
    upper_bound: f64,
}

pub fn sweep(args: &SweepArgs, manifest: &mut RunManifest) -> Result<Outcome> {
    let mut stage = Stage::start("plot-sweep", args)?;
    stage.input(&args.problem);
    let spec = read_problem(&args.problem)?;
    let truth = true_system(&spec)?;
    manifest.seed("sweep", args.seed);
    let dbox = ConfidenceBox::with_half_widths(vec![args.half_width; spec.n])?;
    let mut rows = Vec::with_capacity(args.counts.len());
    for &count in &args.counts {
        let data = generate_training_data(&truth, &spec, count, args.noise, args.seed, Measurement::DirectDrift)?;
        let kernels = match args.kernels {
            SweepKernels::Published => published_kernels(),
            SweepKernels::Fitted => {
                fit_hyperparameters(&data, &default_initial_kernels(&data), &HyperOptions::with_seed(args.seed))?.kernels
            }
        };
        let gp = GpPosterior::fit(&data, &kernels)?.with_domain(spec.state_box.clone());
        let bound = max_std_bound(&gp, &spec, args.std_grid, BoundMode::LipschitzGrid)?;
        let est = monte_carlo_containment(&gp, &truth.drift, &spec, &dbox, args.trials, args.confidence, args.seed)?;
        log::info!("N = {count}: std bound {:?}, containment lower bound {}", bound.per_dim, est.lower_bound);
        rows.push(SweepRow {
            count,
            rho_bar: bound.per_dim,
            lower_bound: est.lower_bound,
            upper_bound: est.upper_bound,
        });
    }

    let mut csv = String::from("count");
    for j in 1..=spec.n {
        csv.push_str(&format!(",rho_bar_{j}"));
    }
    csv.push_str(",rho_bar_max,lower_bound,upper_bound\n");
    for r in &rows {
        csv.push_str(&r.count.to_string());
        for v in &r.rho_bar {
            csv.push_str(&format!(",{v}"));
        }
        let max = r.rho_bar.iter().copied().fold(0.0, f64::max);
        csv.push_str(&format!(",{max},{},{}\n", r.lower_bound, r.upper_bound));
    }
    fs::create_dir_all(&args.out_dir)?;
    write_text(&args.out_dir.join("sweep.csv"), &csv, &mut stage)?;

    let mut svg = Svg::new(WIDTH, HEIGHT);
    let counts: Vec<f64> = rows.iter().map(|r| r.count as f64).collect();
    let x_range = (
        counts.iter().copied().fold(f64::INFINITY, f64::min),
        counts.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let rho: Vec<f64> = rows.iter().map(|r| r.rho_bar.iter().copied().fold(0.0, f64::max)).collect();
    let lower: Vec<f64> = rows.iter().map(|r| r.lower_bound).collect();
    let panel = |top: f64, ys: &[f64]| -> Frame {
        let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * hi.abs().max(1e-3) };
        let span = if x_range.1 > x_range.0 { x_range } else { (x_range.0 - 1.0, x_range.0 + 1.0) };
        Frame {
            x: span,
            y: (lo - pad, hi + pad),
            left: 80.0,
            top,
            width: WIDTH - 110.0,
            height: 190.0,
        }
    };
    if !rows.is_empty() {
        for (top, ys, label, color) in [(40.0, &rho, "max std bound", "#1f77b4"), (310.0, &lower, "containment lower bound", "#d62728")] {
            let f = panel(top, ys);
            let pts: Vec<[f64; 2]> = counts.iter().zip(ys.iter()).map(|(x, y)| [*x, *y]).collect();
            svg.polyline(&f, &pts, color, 2.0);
            for p in &pts {
                svg.circle(&f, *p, 3.0, color);
            }
            svg.axes(&f, "N", "");
            svg.text(f.left + f.width / 2.0, top - 10.0, 13.0, "middle", label);
        }
    }
    write_text(&args.out_dir.join("sweep.svg"), &svg.finish(), &mut stage)?;
    stage.finish(manifest, "success")?;
    Ok(Outcome::Success)
}

/// `(x1, x2)` columns of a trajectory CSV.
fn read_trajectory_states(path: &Path) -> Result<Vec<[f64; 2]>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{} has no column {name}", path.display()))
    };
    let (i1, i2) = (col("x1")?, col("x2")?);
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let get = |i: usize| -> Result<f64> {
            rec.get(i)
                .unwrap_or("")
                .parse()
                .with_context(|| format!("{} line {}: bad number", path.display(), k + 2))
        };
        out.push([get(i1)?, get(i2)?]);
    }
    Ok(out)
}

fn trajectory_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            name.starts_with("traj_") && name.ends_with(".csv")
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Keeps at most `limit` evenly spaced points, always including the last.
fn thin(points: &[[f64; 2]], limit: usize) -> Vec<[f64; 2]> {
    if points.len() <= limit {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(limit);
    let mut out: Vec<[f64; 2]> = points.iter().step_by(stride).copied().collect();
    if let Some(last) = points.last() {
        if out.last() != Some(last) {
            out.push(*last);
        }
    }
    out
}

pub fn trajectories(args: &TrajectoriesArgs, manifest: &mut RunManifest) -> Result<Outcome> {
    let mut stage = Stage::start("plot-trajectories", args)?;
    stage.input(&args.problem);
    stage.input(&args.barrier);
    let spec = read_problem(&args.problem)?;
    planar(&spec)?;
    let barrier: BarrierCandidate = read_json(&args.barrier)?;
    barrier.validate()?;
    if barrier.dim() != spec.n {
        bail!("barrier has dimension {} but the problem has {}", barrier.dim(), spec.n);
    }
    let segments: Vec<Segment> = zero_level_segments(|x| barrier.value(x), &spec.state_box, args.contour_grid)?;
    let files = match &args.traj_dir {
        Some(dir) => trajectory_files(dir)?,
        None => Vec::new(),
    };
    let mut paths = Vec::with_capacity(files.len());
    for file in &files {
        stage.input(file);
        paths.push(read_trajectory_states(file)?);
    }

    fs::create_dir_all(&args.out_dir)?;
    let mut csv = String::from("ax,ay,bx,by\n");
    for s in &segments {
        csv.push_str(&format!("{},{},{},{}\n", s[0][0], s[0][1], s[1][0], s[1][1]));
    }
    write_text(&args.out_dir.join("contour.csv"), &csv, &mut stage)?;

    let f = state_frame(&spec);
    let mut svg = Svg::new(WIDTH, HEIGHT);
    draw_regions(&mut svg, &f, &spec);
    for p in &paths {
        svg.polyline(&f, &thin(p, 2000), "#1f77b4", 1.0);
        if let Some(start) = p.first() {
            svg.circle(&f, *start, 2.0, "#1f77b4");
        }
    }
    for s in &segments {
        svg.line(&f, s[0], s[1], "#000000", 1.5);
    }
    svg.axes(&f, "x1", "x2");
    svg.text(WIDTH / 2.0, 18.0, 13.0, "middle", &format!("{} trajectories and B(x) = 0", paths.len()));
    write_text(&args.out_dir.join("trajectories.svg"), &svg.finish(), &mut stage)?;
    stage.finish(manifest, "success")?;
    Ok(Outcome::Success)
}
