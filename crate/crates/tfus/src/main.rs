use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use clap::{Args, Parser, Subcommand};
use tfus::config::{generate_configs, GenerationParams, SimConfig};
use tfus::io::image::{export_slice_image, Axis, ColorScale};
use tfus::io::nifti::{read_nifti, write_nifti, NiftiType};
use tfus::io::npy::read_npz;
use tfus::pipeline::{evaluate, run_simulation, Preprocessing, RunOptions};
use tfus::{Error, Result};
use tfus_core::metrics::MetricParams;
use tfus_core::phantom::make_skull_phantom;
use tfus_core::{GridSpec, Units};

#[derive(Parser)]
#[command(name = "tfus", version, about = "Transcranial focused ultrasound simulation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate seeded simulation configs for one subject.
    GenConfig(GenConfigArgs),
    /// Run one or more simulation configs.
    Run(RunArgs),
    /// Compare predicted and reference pressure fields.
    Evaluate(EvaluateArgs),
    /// Write a spherical-shell skull phantom as NIfTI.
    Phantom(PhantomArgs),
    /// Export one slice of an npz member as a PGM or PNG image.
    Slice(SliceArgs),
    /// Check config files against the schema.
    Validate {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct GenConfigArgs {
    /// Subject CT volume (NIfTI, HU).
    #[arg(long)]
    ct: PathBuf,
    #[arg(long)]
    subject: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long)]
    out_dir: PathBuf,
    /// YAML config whose non-placement fields are copied.
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    crop_size: usize,
    /// mm, as LO,HI
    #[arg(long, value_parser = parse_range, default_value = "55,75")]
    roc_range: [f64; 2],
    /// mm, as LO,HI
    #[arg(long, value_parser = parse_range, default_value = "55,75")]
    diameter_range: [f64; 2],
    /// voxels, as LO,HI
    #[arg(long, value_parser = parse_range, default_value = "40,60")]
    offset_range: [f64; 2],
    /// voxels
    #[arg(long, default_value_t = 10.0)]
    boundary_pad: f64,
    /// HU
    #[arg(long, default_value_t = 50.0)]
    surface_threshold: f64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(required = true)]
    configs: Vec<PathBuf>,
    /// Solver threads per run; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Recording memory before spilling to disk, e.g. 512M or 2G.
    #[arg(long, value_parser = parse_bytes, default_value = "2G")]
    ram_cap: usize,
    /// Independent runs executed in parallel as child processes.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted npz file or directory.
    pred: PathBuf,
    /// Reference npz file or directory.
    gt: PathBuf,
    /// Apply log(1 + x) after max normalization.
    #[arg(long)]
    log: bool,
    #[arg(long, default_value_t = 5.0)]
    alpha_weight: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// mm
    #[arg(long, default_value_t = 0.5)]
    spacing: f64,
    #[arg(long)]
    physical_gradients: bool,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// mm
    #[arg(long, default_value_t = 0.5)]
    spacing: f64,
    /// mm
    #[arg(long, default_value_t = 14.0)]
    radius: f64,
    /// mm
    #[arg(long, default_value_t = 3.0)]
    thickness: f64,
    #[arg(long, default_value_t = 1200.0)]
    hu: f32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SliceArgs {
    npz: PathBuf,
    #[arg(long, default_value = "pressure")]
    member: String,
    #[arg(long, default_value = "z")]
    axis: Axis,
    /// Defaults to the middle slice.
    #[arg(long)]
    index: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    log: bool,
    /// mm
    #[arg(long, default_value_t = 0.5)]
    spacing: f64,
}

fn parse_range(s: &str) -> std::result::Result<[f64; 2], String> {
    let (a, b) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo},{hi}"));
    }
    Ok([lo, hi])
}

fn parse_bytes(s: &str) -> std::result::Result<usize, String> {
    let s = s.trim();
    let (num, mult) = match s.char_indices().last() {
        Some((i, 'K' | 'k')) => (&s[..i], 1usize << 10),
        Some((i, 'M' | 'm')) => (&s[..i], 1 << 20),
        Some((i, 'G' | 'g')) => (&s[..i], 1 << 30),
        _ => (s, 1),
    };
    let v: f64 = num.parse().map_err(|e| format!("{e}"))?;
    if !(v >= 0.0) {
        return Err("must be >= 0".into());
    }
    Ok((v * mult as f64) as usize)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    tfus::io::write_atomic(path, |w| {
        use std::io::Write;
        w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    })
}

fn gen_config(a: GenConfigArgs) -> Result<()> {
    let ct = read_nifti(&a.ct)?;
    let mut template = match &a.template {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::template(&a.subject, &a.ct, a.crop_size),
    };
    template.subject_id = a.subject.clone();
    template.ct_path = std::path::absolute(&a.ct).map_err(|e| Error::io(&a.ct, e))?;
    let params = GenerationParams {
        roc_range: a.roc_range,
        diameter_range: a.diameter_range,
        offset_range: a.offset_range,
        boundary_pad: a.boundary_pad,
        surface_threshold: a.surface_threshold,
        ..GenerationParams::default()
    };
    let configs = generate_configs(&ct, &template, a.count, a.seed, &params)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    for (i, cfg) in configs.iter().enumerate() {
        let path = a.out_dir.join(format!("{}_{i:03}.yaml", a.subject));
        write_text(&path, &cfg.to_yaml()?)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn run_one(path: &Path, opts: &RunOptions) -> Result<()> {
    let cfg = SimConfig::load(path)?;
    let out = run_simulation(&cfg, Some(path), opts)?;
    println!("{}", out.npz_path.display());
    Ok(())
}

/// Runs each config in its own child process, at most `jobs` at a time.
fn run_parallel(a: &RunArgs) -> Result<()> {
    for c in &a.configs {
        SimConfig::load(c)?;
    }
    let exe = std::env::current_exe().map_err(|e| Error::io("current executable", e))?;
    let mut pending = a.configs.iter();
    let mut running = Vec::new();
    let mut failed = Vec::new();
    loop {
        while running.len() < a.jobs {
            let Some(cfg) = pending.next() else { break };
            let mut cmd = Command::new(&exe);
            cmd.arg("run").arg(cfg).arg("--threads").arg(a.threads.to_string()).arg("--ram-cap").arg(a.ram_cap.to_string());
            if a.quiet {
                cmd.arg("--quiet");
            }
            let child = cmd.spawn().map_err(|e| Error::io(&exe, e))?;
            running.push((cfg, child));
        }
        if running.is_empty() {
            break;
        }
        let (cfg, mut child) = running.remove(0);
        let status = child.wait().map_err(|e| Error::io(&exe, e))?;
        if !status.success() {
            failed.push(cfg.display().to_string());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::io(exe, std::io::Error::other(format!("runs failed: {}", failed.join(", ")))))
    }
}

fn run(a: RunArgs) -> Result<()> {
    if a.jobs == 0 {
        return Err(Error::Argument("--jobs must be >= 1".into()));
    }
    if a.jobs > 1 && a.configs.len() > 1 {
        return run_parallel(&a);
    }
    if a.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(a.threads)
            .build_global()
            .map_err(|e| Error::Argument(e.to_string()))?;
    }
    let opts = RunOptions { ram_cap: a.ram_cap, progress: !a.quiet };
    for c in &a.configs {
        run_one(c, &opts)?;
    }
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let params = MetricParams {
        alpha_weight: a.alpha_weight,
        lambda: a.lambda,
        spacing: [a.spacing; 3],
        physical_gradients: a.physical_gradients,
    };
    let prep = if a.log { Preprocessing::LogCompressed } else { Preprocessing::Raw };
    let report = evaluate(&a.pred, &a.gt, &params, prep)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    match &a.out {
        Some(p) => write_text(p, &text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn phantom(a: PhantomArgs) -> Result<()> {
    let grid = GridSpec::isotropic([a.size; 3], a.spacing)?;
    let ct = make_skull_phantom(grid, a.radius, a.thickness, a.hu)?;
    write_nifti(&a.out, &ct, NiftiType::I16)
}

fn slice(a: SliceArgs) -> Result<()> {
    let mut members = read_npz(&a.npz)?;
    let arr = members
        .remove(&a.member)
        .ok_or_else(|| Error::format(&a.npz, format!("missing member '{}'", a.member)))?;
    let field = arr.to_field(a.spacing, Units::Dimensionless)?;
    let n = field.dims()[a.axis as usize];
    let index = a.index.unwrap_or(n / 2);
    let scale = if a.log { ColorScale::Log } else { ColorScale::Linear };
    export_slice_image(&field, a.axis, index, &a.out, scale)
}

fn validate(configs: Vec<PathBuf>) -> Result<()> {
    for c in configs {
        SimConfig::load(&c)?;
        println!("{}: ok", c.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Cmd::GenConfig(a) => gen_config(a),
        Cmd::Run(a) => run(a),
        Cmd::Evaluate(a) => evaluate_cmd(a),
        Cmd::Phantom(a) => phantom(a),
        Cmd::Slice(a) => slice(a),
        Cmd::Validate { configs } => validate(configs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}
