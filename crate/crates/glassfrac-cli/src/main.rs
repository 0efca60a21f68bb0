//! `glassfrac` command line: simulate crack patterns, overlay them onto
//! images, export growth animations, and run distribution / timing analysis.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use glassfrac::analysis::{self, DEFAULT_EPSILON, HISTOGRAM_BINS};
use glassfrac::pipeline::{self, PipelineConfig};
use glassfrac::raster::rasterize;
use glassfrac::render::{FocusMode, LightSource, RenderConfig, RgbImage};
use glassfrac::stress::{extract_crack_pattern, propagate, ImpactSpec};
use glassfrac::{Extent, NeighborIndex, ParticleSet, Point2, TriMesh};

#[derive(Parser)]
#[command(
    name = "glassfrac",
    version,
    about = "Physically plausible glass-fracture overlays for camera imagery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a crack pattern and write it as JSON (optionally a PNG).
    Simulate(SimulateArgs),
    /// Overlay simulated cracks onto one image or a whole directory.
    Overlay(OverlayArgs),
    /// Export crack-growth frames for one image (or a black canvas).
    Animate(AnimateArgs),
    /// Distribution analysis over image sets.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Per-stage timing benchmark.
    Bench(BenchArgs),
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Kullback-Leibler divergence between two image directories.
    Kl(KlArgs),
}

/// Simulation and render settings shared by the subcommands. Unset flags
/// fall back to the config file, then to built-in defaults.
#[derive(Args, Debug, Default, Clone)]
struct SimFlags {
    /// Config file (TOML) providing defaults for all of these flags.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Base RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of glass particles.
    #[arg(long)]
    particles: Option<usize>,
    /// Impact force in stress units.
    #[arg(long)]
    force: Option<f64>,
    /// Stress level below which propagation halts.
    #[arg(long)]
    threshold: Option<f64>,
    /// Critical material stress.
    #[arg(long)]
    critical_stress: Option<f64>,
    /// Safety factor dividing the critical stress.
    #[arg(long)]
    safety_factor: Option<f64>,
    /// Neighbor radius in pixels (default: derived from particle spacing).
    #[arg(long)]
    radius: Option<f64>,
    /// Crack arms leaving the impact point.
    #[arg(long)]
    branch_k: Option<usize>,
    /// Crack opacity in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Gaussian defocus sigma in pixels.
    #[arg(long)]
    blur_sigma: Option<f64>,
    /// Focus mode: "far" (scene sharp) or "short" (crack sharp).
    #[arg(long)]
    focus: Option<String>,
    /// Stroke width at the impact, in pixels.
    #[arg(long)]
    stroke_width: Option<f32>,
    /// Mask dilation radius in pixels.
    #[arg(long)]
    dilation: Option<u32>,
    /// Light color as "r,g,b" (0-255 per channel).
    #[arg(long, value_name = "R,G,B")]
    light_color: Option<String>,
    /// Azimuth light direction as "x,y".
    #[arg(long, value_name = "X,Y")]
    azimuth: Option<String>,
    /// Zenith light direction as "x,y".
    #[arg(long, value_name = "X,Y")]
    zenith: Option<String>,
    /// Worker pool width (capped by GLASSFRAC_THREADS).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    flags: SimFlags,
    /// Frame width in pixels.
    #[arg(long, default_value_t = 1242)]
    width: u32,
    /// Frame height in pixels.
    #[arg(long, default_value_t = 375)]
    height: u32,
    /// Impact x coordinate (default: drawn from the seed).
    #[arg(long)]
    impact_x: Option<f64>,
    /// Impact y coordinate (default: drawn from the seed).
    #[arg(long)]
    impact_y: Option<f64>,
    /// Impact direction in degrees (default: drawn from the seed).
    #[arg(long)]
    impact_angle: Option<f64>,
    /// Output pattern JSON path.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Also rasterize the crack to this grayscale PNG.
    #[arg(long, value_name = "FILE")]
    png: Option<PathBuf>,
    /// Also export the triangulated mesh to this JSON file.
    #[arg(long, value_name = "FILE")]
    mesh_json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OverlayArgs {
    #[command(flatten)]
    flags: SimFlags,
    /// Input image file or directory.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Output directory (adversarial images, masks, patterns, manifest).
    #[arg(long = "out", value_name = "DIR")]
    output: PathBuf,
    /// Directory of KITTI-layout label files named like the images.
    #[arg(long, value_name = "DIR")]
    annotations: Option<PathBuf>,
    /// Keep only objects whose box overlaps the crack mask at this fraction.
    #[arg(long)]
    overlap_threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct AnimateArgs {
    #[command(flatten)]
    flags: SimFlags,
    /// Source image; omitted means a black canvas of --width x --height.
    #[arg(long = "in", value_name = "FILE")]
    input: Option<PathBuf>,
    /// Output directory for the frame sequence.
    #[arg(long = "out", value_name = "DIR")]
    output: PathBuf,
    /// Number of growth frames.
    #[arg(long, default_value_t = 12)]
    frames: usize,
    #[arg(long, default_value_t = 1242)]
    width: u32,
    #[arg(long, default_value_t = 375)]
    height: u32,
}

#[derive(Args, Debug)]
struct KlArgs {
    /// First image directory.
    #[arg(long, value_name = "DIR")]
    set_a: PathBuf,
    /// Second image directory.
    #[arg(long, value_name = "DIR")]
    set_b: PathBuf,
    /// Additive smoothing epsilon.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// Write the result as JSON to this path.
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    flags: SimFlags,
    /// Timed runs per report (after one discarded warm-up).
    #[arg(long, default_value_t = 20)]
    runs: usize,
    /// Sweep over these particle counts instead of a single report.
    #[arg(long, value_name = "N,N,...")]
    sweep: Option<String>,
    /// Benchmark against this image (default: synthetic 1242x375 frame).
    #[arg(long, value_name = "FILE")]
    image: Option<PathBuf>,
    /// Write the report(s) as JSON to this path.
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,
}

/// TOML mirror of `PipelineConfig`; every field optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    particle_count: Option<usize>,
    force: Option<f64>,
    critical_stress: Option<f64>,
    safety_factor: Option<f64>,
    stop_threshold: Option<f64>,
    radius: Option<f64>,
    branch_k: Option<usize>,
    seed: Option<u64>,
    input_dir: Option<PathBuf>,
    annotation_dir: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    frame_count: Option<usize>,
    overlap_threshold: Option<f64>,
    workers: Option<usize>,
    render: Option<RenderFileConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RenderFileConfig {
    focus_mode: Option<String>,
    blur_sigma: Option<f64>,
    alpha: Option<f64>,
    stroke_width: Option<f32>,
    dilation: Option<u32>,
    light_intensity: Option<[f64; 3]>,
    azimuth: Option<[f64; 2]>,
    zenith: Option<[f64; 2]>,
}

fn main() {
    env_logger::init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Overlay(args) => overlay(args),
        Command::Animate(args) => animate(args),
        Command::Analyze(AnalyzeCommand::Kl(args)) => analyze_kl(args),
        Command::Bench(args) => bench(args),
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = build_config(&args.flags)?;
    let extent = Extent::new(args.width as f64, args.height as f64)?;
    let particles = ParticleSet::sample(cfg.particle_count, extent, cfg.seed)?;
    let index = NeighborIndex::build(&particles);
    let mesh = TriMesh::triangulate_framed(&particles)?;

    let impact = match (args.impact_x, args.impact_y, args.impact_angle) {
        (None, None, None) => pipeline::draw_impact(cfg.seed, extent, &cfg)?,
        (x, y, angle) => {
            let drawn = pipeline::draw_impact(cfg.seed, extent, &cfg)?;
            let point = Point2::new(
                x.unwrap_or(drawn.impact_point.x),
                y.unwrap_or(drawn.impact_point.y),
            );
            let vector = match angle {
                Some(deg) => {
                    let rad = deg.to_radians();
                    Point2::new(rad.cos(), rad.sin())
                }
                None => drawn.impact_vector,
            };
            ImpactSpec::new(point, cfg.force, vector)?.with_thresholds(
                cfg.critical_stress,
                cfg.safety_factor,
                cfg.stop_threshold,
            )?
        }
    };

    let radius = cfg.derived_radius(extent);
    let field = propagate(&mesh, &index, &impact, radius, cfg.branch_k)?;
    let pattern = extract_crack_pattern(&field, &particles, &impact);
    pattern.write_json(&args.out)?;
    if let Some(png) = &args.png {
        let crack = rasterize(&pattern, args.width, args.height, cfg.render.stroke_width)?;
        crack.save_png(png)?;
    }
    if let Some(mesh_path) = &args.mesh_json {
        mesh.write_json(mesh_path)?;
    }
    println!(
        "pattern: {} nodes, {} edges, impact ({:.1}, {:.1}) -> {}",
        pattern.nodes.len(),
        pattern.edges.len(),
        impact.impact_point.x,
        impact.impact_point.y,
        args.out.display()
    );
    Ok(())
}

fn overlay(args: OverlayArgs) -> Result<()> {
    let mut cfg = build_config(&args.flags)?;
    cfg.input_dir = args.input;
    cfg.output_dir = args.output;
    if args.annotations.is_some() {
        cfg.annotation_dir = args.annotations;
    }
    if let Some(t) = args.overlap_threshold {
        cfg.overlap_threshold = t;
    }
    let manifest = pipeline::run_batch(&cfg)?;
    let processed = manifest.images.iter().filter(|e| e.skipped.is_none()).count();
    let skipped = manifest.images.len() - processed;
    for entry in &manifest.images {
        match (&entry.output, &entry.skipped) {
            (Some(out), _) => println!("{} -> {}", entry.input, out),
            (_, Some(reason)) => println!("{} skipped: {}", entry.input, reason),
            _ => {}
        }
    }
    println!(
        "{processed} processed, {skipped} skipped; manifest at {}",
        cfg.output_dir.join("manifest.json").display()
    );
    Ok(())
}

fn animate(args: AnimateArgs) -> Result<()> {
    let cfg = build_config(&args.flags)?;
    let (source, stem) = match &args.input {
        Some(path) => {
            let img = image::open(path)
                .with_context(|| format!("cannot read {}", path.display()))?
                .to_rgb8();
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "frame".into());
            (img, stem)
        }
        None => (RgbImage::new(args.width, args.height), "lens".to_string()),
    };
    std::fs::create_dir_all(&args.output)?;
    let frames = pipeline::animate_image(&source, cfg.seed, &cfg, args.frames)?;
    for (i, frame) in frames.iter().enumerate() {
        let path = args.output.join(format!("{stem}_frame_{i:03}.png"));
        frame.image.save(&path)?;
    }
    println!("{} frames written to {}", frames.len(), args.output.display());
    Ok(())
}

fn analyze_kl(args: KlArgs) -> Result<()> {
    let a = load_gray_dir(&args.set_a)?;
    let b = load_gray_dir(&args.set_b)?;
    let dist_a = analysis::intensity_histogram(&a, args.epsilon)?;
    let dist_b = analysis::intensity_histogram(&b, args.epsilon)?;
    let kl_ab = analysis::kl_divergence(&dist_a, &dist_b)?;
    let kl_ba = analysis::kl_divergence(&dist_b, &dist_a)?;

    println!("set A: {} images, {} pixels", a.len(), dist_a.sample_count());
    println!("set B: {} images, {} pixels", b.len(), dist_b.sample_count());
    println!("bins: {HISTOGRAM_BINS}  epsilon: {}", args.epsilon);
    println!("KL(A||B) = {kl_ab:.6} nats");
    println!("KL(B||A) = {kl_ba:.6} nats");

    if let Some(path) = &args.json {
        let doc = serde_json::json!({
            "kl_ab": kl_ab,
            "kl_ba": kl_ba,
            "bins": HISTOGRAM_BINS,
            "epsilon": args.epsilon,
        });
        write_json(path, &doc)?;
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let cfg = build_config(&args.flags)?;
    let source = match &args.image {
        Some(path) => image::open(path)
            .with_context(|| format!("cannot read {}", path.display()))?
            .to_rgb8(),
        None => pipeline::synthetic_image(1242, 375),
    };

    let reports = match &args.sweep {
        Some(spec) => {
            let counts: Vec<usize> = spec
                .split(',')
                .map(|s| s.trim().parse().context("bad sweep entry"))
                .collect::<Result<_>>()?;
            analysis::timing_sweep(&cfg, &source, args.runs, &counts)?
        }
        None => vec![analysis::timing_report(&cfg, &source, args.runs)?],
    };

    println!(
        "{:>10} {:>6} {:>12} {:>12} {:>12} {:>12}",
        "particles", "runs", "stage", "min ms", "mean ms", "max ms"
    );
    for r in &reports {
        for (name, s) in [
            ("simulate", r.simulate),
            ("rasterize", r.rasterize),
            ("render", r.render),
        ] {
            println!(
                "{:>10} {:>6} {:>12} {:>12.2} {:>12.2} {:>12.2}",
                r.particle_count, r.runs, name, s.min, s.mean, s.max
            );
        }
        println!(
            "{:>10} {:>6} {:>12} {:>12} {:>12.2} {:>12}",
            r.particle_count, r.runs, "total-mean", "", r.total_mean(), ""
        );
    }
    if let Some(path) = &args.json {
        write_json(path, &reports)?;
    }
    Ok(())
}

fn load_gray_dir(dir: &Path) -> Result<Vec<image::GrayImage>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot read directory {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension()
                        .map(|e| e.to_string_lossy().to_ascii_lowercase())
                        .unwrap_or_default()
                        .as_str(),
                    "png" | "jpg" | "jpeg"
                )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no images in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| {
            Ok(image::open(p)
                .with_context(|| format!("cannot read {}", p.display()))?
                .to_luma8())
        })
        .collect()
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Defaults, overlaid by the config file, overlaid by explicit flags.
fn build_config(flags: &SimFlags) -> Result<PipelineConfig> {
    let file: FileConfig = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("bad config {}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let mut cfg = PipelineConfig::default();
    // File layer.
    set(&mut cfg.particle_count, file.particle_count);
    set(&mut cfg.force, file.force);
    set(&mut cfg.critical_stress, file.critical_stress);
    set(&mut cfg.safety_factor, file.safety_factor);
    set(&mut cfg.stop_threshold, file.stop_threshold);
    if file.radius.is_some() {
        cfg.radius = file.radius;
    }
    set(&mut cfg.branch_k, file.branch_k);
    set(&mut cfg.seed, file.seed);
    set(&mut cfg.overlap_threshold, file.overlap_threshold);
    set(&mut cfg.workers, file.workers);
    if let Some(dir) = file.input_dir {
        cfg.input_dir = dir;
    }
    if file.annotation_dir.is_some() {
        cfg.annotation_dir = file.annotation_dir;
    }
    if let Some(dir) = file.output_dir {
        cfg.output_dir = dir;
    }
    if file.frame_count.is_some() {
        cfg.frame_count = file.frame_count;
    }
    if let Some(render) = file.render {
        apply_render_file(&mut cfg.render, render)?;
    }

    // Flag layer.
    set(&mut cfg.particle_count, flags.particles);
    set(&mut cfg.force, flags.force);
    set(&mut cfg.critical_stress, flags.critical_stress);
    set(&mut cfg.safety_factor, flags.safety_factor);
    set(&mut cfg.stop_threshold, flags.threshold);
    if flags.radius.is_some() {
        cfg.radius = flags.radius;
    }
    set(&mut cfg.branch_k, flags.branch_k);
    set(&mut cfg.seed, flags.seed);
    set(&mut cfg.workers, flags.workers);
    set(&mut cfg.render.alpha, flags.alpha);
    set(&mut cfg.render.blur_sigma, flags.blur_sigma);
    set(&mut cfg.render.stroke_width, flags.stroke_width);
    set(&mut cfg.render.dilation, flags.dilation);
    if let Some(mode) = &flags.focus {
        cfg.render.focus_mode = parse_focus(mode)?;
        // Short focus defaults to a stronger defocus unless overridden.
        if flags.blur_sigma.is_none() && cfg.render.focus_mode == FocusMode::ShortFocus {
            cfg.render.blur_sigma = RenderConfig::short_focus().blur_sigma;
        }
    }

    let mut intensity = cfg.render.light.mean_intensity();
    let mut azimuth = cfg.render.light.azimuth_dir();
    let mut zenith = cfg.render.light.zenith_dir();
    if let Some(rgb) = &flags.light_color {
        intensity = parse_triplet(rgb).context("bad --light-color")?;
    }
    if let Some(az) = &flags.azimuth {
        azimuth = parse_point(az).context("bad --azimuth")?;
    }
    if let Some(ze) = &flags.zenith {
        zenith = parse_point(ze).context("bad --zenith")?;
    }
    cfg.render.light = LightSource::new(intensity, azimuth, zenith)?;

    cfg.render = cfg.render.validated()?;
    Ok(cfg)
}

fn apply_render_file(render: &mut RenderConfig, file: RenderFileConfig) -> Result<()> {
    if let Some(mode) = &file.focus_mode {
        render.focus_mode = parse_focus(mode)?;
        if file.blur_sigma.is_none() && render.focus_mode == FocusMode::ShortFocus {
            render.blur_sigma = RenderConfig::short_focus().blur_sigma;
        }
    }
    set(&mut render.blur_sigma, file.blur_sigma);
    set(&mut render.alpha, file.alpha);
    set(&mut render.stroke_width, file.stroke_width);
    set(&mut render.dilation, file.dilation);
    let intensity = file
        .light_intensity
        .unwrap_or(render.light.mean_intensity());
    let azimuth = file
        .azimuth
        .map(|v| Point2::new(v[0], v[1]))
        .unwrap_or(render.light.azimuth_dir());
    let zenith = file
        .zenith
        .map(|v| Point2::new(v[0], v[1]))
        .unwrap_or(render.light.zenith_dir());
    render.light = LightSource::new(intensity, azimuth, zenith)?;
    Ok(())
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_focus(s: &str) -> Result<FocusMode> {
    match s.to_ascii_lowercase().as_str() {
        "far" | "far_focus" | "far-focus" => Ok(FocusMode::FarFocus),
        "short" | "short_focus" | "short-focus" => Ok(FocusMode::ShortFocus),
        other => bail!("unknown focus mode {other:?}, expected \"far\" or \"short\""),
    }
}

fn parse_triplet(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse().context("not a number"))
        .collect::<Result<_>>()?;
    if parts.len() != 3 {
        bail!("expected three comma-separated values");
    }
    Ok([parts[0], parts[1], parts[2]])
}

fn parse_point(s: &str) -> Result<Point2> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse().context("not a number"))
        .collect::<Result<_>>()?;
    if parts.len() != 2 {
        bail!("expected two comma-separated values");
    }
    Ok(Point2::new(parts[0], parts[1]))
}
