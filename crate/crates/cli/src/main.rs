use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{ArgGroup, Args, Parser, Subcommand};
use lfbp_core::bench::{self, first_difference};
use lfbp_core::config::KvConfig;
use lfbp_core::io::{self, export_pgm};
use lfbp_core::projector::dot;
use lfbp_core::{
    backproject_via_ht, compute_backprojection, compute_psf_from_backprojection, forward_project, oracle_backprojection,
    random_psf, rl_run, synth_psf, BackprojArray, Dims5, Dtype, Error, Image, LayoutKind, LoadOptions, MlaLayout,
    Optics, Plane, PsfArray, RlOptions, Volume,
};

#[derive(Parser)]
#[command(name = "lfbp", version, about = "Light-field PSF and backprojection array tools")]
struct Cli {
    /// Flat key = value file with defaults for unset options.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute H' from H (or H from H' with --inverse).
    Transform {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        inverse: bool,
        /// Output element type; defaults to the input's.
        #[arg(long, value_parser = parse_dtype)]
        dtype: Option<Dtype>,
    },
    /// Check the fast transform against the brute-force oracle.
    Verify {
        /// PSF array H.
        input: PathBuf,
        /// Check this precomputed H' instead of running the fast transform.
        #[arg(long, value_name = "PATH")]
        ht: Option<PathBuf>,
    },
    /// Write a synthetic PSF.
    Synth(SynthArgs),
    /// Apply the forward projection or the backprojection.
    Project(ProjectArgs),
    /// Richardson-Lucy deconvolution.
    Deconv {
        psf: PathBuf,
        image: PathBuf,
        output: PathBuf,
        #[arg(long)]
        iters: Option<usize>,
        /// Precomputed H'; computed from H when omitted.
        #[arg(long, value_name = "PATH")]
        ht: Option<PathBuf>,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Export one plane as a 16-bit PGM.
    Export(ExportArgs),
    /// Time the fast transform against the oracle.
    Bench {
        /// Sizes file (five numbers per line) or a preset: smoke, ladder,
        /// paper-small, paper.
        #[arg(long)]
        sizes: String,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run cases as given even if they exceed available memory.
        #[arg(long)]
        no_fit: bool,
        output: PathBuf,
    },
}

#[derive(Args)]
struct SynthArgs {
    /// rect, hex, hex3, or random (uniform values, uses --seed and --density).
    #[arg(long)]
    layout: Option<String>,
    /// n_s,n_t,n_z (cell from the layout) or n_s,n_t,n_x,n_y,n_z.
    #[arg(long, value_delimiter = ',')]
    dims: Vec<usize>,
    #[arg(long)]
    pitch: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long, value_parser = parse_dtype)]
    dtype: Option<Dtype>,
    output: PathBuf,
}

#[derive(Args)]
#[command(group(ArgGroup::new("direction").required(true).args(["forward", "backward"])))]
struct ProjectArgs {
    /// Volume (N_X,N_Y,1,1,N_Z) to image.
    #[arg(long)]
    forward: bool,
    /// Image (N_S,N_T,1,1,1) to volume.
    #[arg(long)]
    backward: bool,
    /// PSF array H, or H' when --ht is given.
    array: PathBuf,
    input: PathBuf,
    /// Required unless --check-adjoint.
    output: Option<PathBuf>,
    /// `array` holds H' (backward only).
    #[arg(long)]
    ht: bool,
    /// Print the relative error of <Hg, f> against <g, H'f> for random g, f
    /// shaped like the input.
    #[arg(long)]
    check_adjoint: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("sum").args(["sum_forward", "sum_backward"])))]
struct ExportArgs {
    #[arg(long, default_value_t = 1)]
    plane: usize,
    input: PathBuf,
    output: PathBuf,
    /// Input is H; export the summed forward plane.
    #[arg(long)]
    sum_forward: bool,
    /// Input is H'; export the summed backward plane.
    #[arg(long)]
    sum_backward: bool,
}

/// Command failures that are not library errors.
enum Failure {
    /// Exit 1: the check ran and did not pass.
    Check,
    /// Exit 2.
    Error(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(Error::Io(e))
    }
}

type CmdResult = Result<(), Failure>;

fn parse_dtype(s: &str) -> Result<Dtype, String> {
    match s {
        "f32" => Ok(Dtype::F32),
        "f64" => Ok(Dtype::F64),
        _ => Err(format!("unknown dtype '{s}', expected f32 or f64")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Error(e)) => {
            eprintln!("{}: {e}", e.kind_name());
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    let cfg = match &cli.config {
        Some(path) => KvConfig::load(path)?,
        None => KvConfig::default(),
    };
    init_threads(&cfg)?;
    match cli.command {
        Command::Transform { input, output, inverse, dtype } => cmd_transform(&cfg, &input, &output, inverse, dtype),
        Command::Verify { input, ht } => cmd_verify(&input, ht.as_deref()),
        Command::Synth(args) => cmd_synth(&cfg, args),
        Command::Project(args) => cmd_project(&cfg, args),
        Command::Deconv { psf, image, output, iters, ht, eps } => {
            cmd_deconv(&cfg, &psf, &image, &output, iters, ht.as_deref(), eps)
        }
        Command::Export(args) => cmd_export(args),
        Command::Bench { sizes, repeats, seed, no_fit, output } => cmd_bench(&cfg, &sizes, repeats, seed, no_fit, &output),
    }
}

/// LFBP_THREADS wins over the `threads` config key.
fn init_threads(cfg: &KvConfig) -> Result<(), Error> {
    let threads = match std::env::var("LFBP_THREADS") {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| Error::Config(format!("LFBP_THREADS='{v}' is not a count")))?),
        Err(_) => cfg.get::<usize>("threads")?,
    };
    if let Some(n) = threads.filter(|&n| n > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn cfg_dtype(cfg: &KvConfig) -> Result<Option<Dtype>, Error> {
    cfg.get_str("dtype").map(|s| parse_dtype(s).map_err(Error::Config)).transpose()
}

fn cmd_transform(cfg: &KvConfig, input: &Path, output: &Path, inverse: bool, dtype: Option<Dtype>) -> CmdResult {
    let file = io::read_lf5(input, LoadOptions::default())?;
    let dtype = dtype.or(cfg_dtype(cfg)?).unwrap_or(file.dtype);
    let start = Instant::now();
    let (dims, out) = if inverse {
        let ht = BackprojArray::from_lf5(file)?;
        let h = compute_psf_from_backprojection(&ht)?;
        (h.dims(), h.to_lf5(dtype))
    } else {
        let h = PsfArray::from_lf5(file)?;
        let ht = compute_backprojection(&h);
        (ht.dims(), ht.to_lf5(dtype))
    };
    let elapsed = start.elapsed();
    io::write_lf5(output, &out)?;
    eprintln!(
        "{} {dims} in {:.4} s",
        if inverse { "H' -> H" } else { "H -> H'" },
        elapsed.as_secs_f64()
    );
    Ok(())
}

fn cmd_verify(input: &Path, ht_path: Option<&Path>) -> CmdResult {
    let h = PsfArray::load(input)?;
    let fast = match ht_path {
        Some(p) => BackprojArray::load(p)?,
        None => compute_backprojection(&h),
    };
    let slow = oracle_backprojection(&h);
    if fast.dims() != slow.dims() {
        println!("FAIL dims {} vs oracle {}", fast.dims(), slow.dims());
        return Err(Failure::Check);
    }
    match first_difference(fast.data(), slow.data()) {
        None => {
            println!("PASS {} elements identical, dims {}", slow.data().len(), h.dims());
            Ok(())
        }
        Some(o) => {
            let [s, t, x, y, z] = h.dims().index_of(o)?;
            println!(
                "FAIL first difference at (s,t,x,y,z)=({s},{t},{x},{y},{z}) offset {o}: {} vs oracle {}",
                fast.data()[o],
                slow.data()[o]
            );
            Err(Failure::Check)
        }
    }
}

fn cmd_synth(cfg: &KvConfig, args: SynthArgs) -> CmdResult {
    let layout_name = args.layout.or_else(|| cfg.get_str("layout").map(String::from)).unwrap_or_else(|| "rect".into());
    let dtype = args.dtype.or(cfg_dtype(cfg)?).unwrap_or(Dtype::F64);
    let h = if layout_name == "random" {
        let [n_s, n_t, n_x, n_y, n_z] = match args.dims[..] {
            [a, b, c, d, e] => [a, b, c, d, e],
            _ => return Err(Error::InvalidArgument("random layout needs --dims n_s,n_t,n_x,n_y,n_z".into()).into()),
        };
        let density = match args.density {
            Some(d) => d,
            None => cfg.get_or("density", 0.5)?,
        };
        let seed = match args.seed {
            Some(s) => s,
            None => cfg.get_or("seed", 0)?,
        };
        random_psf(Dims5::new(n_s, n_t, n_x, n_y, n_z)?, density, seed)?
    } else {
        let kind: LayoutKind = layout_name.parse()?;
        let mut layout_cfg = cfg.clone();
        layout_cfg.set("layout", &layout_name);
        if let Some(p) = args.pitch {
            layout_cfg.set("pitch", p);
        }
        let layout = MlaLayout::from_config(&layout_cfg)?;
        debug_assert_eq!(layout.kind(), kind);
        let (n_x, n_y) = layout.cell();
        let dims = match args.dims[..] {
            [n_s, n_t, n_z] => Dims5::new(n_s, n_t, n_x, n_y, n_z)?,
            [n_s, n_t, a, b, n_z] => Dims5::new(n_s, n_t, a, b, n_z)?,
            _ => return Err(Error::InvalidArgument("--dims takes n_s,n_t,n_z or n_s,n_t,n_x,n_y,n_z".into()).into()),
        };
        synth_psf(&layout, dims, &Optics::from_config(cfg)?)?
    };
    h.save(&args.output, dtype)?;
    if layout_name == "random" {
        eprintln!("wrote random PSF {}", h.dims());
        return Ok(());
    }
    let d = h.dims();
    let mut worst: f64 = 0.0;
    for z in 1..=d.n_z() {
        for y in 1..=d.n_y() {
            for x in 1..=d.n_x() {
                let base = d.offset(1, 1, x, y, z);
                let sum: f64 = h.data()[base..base + d.pixel_count()].iter().sum();
                worst = worst.max((sum - 1.0).abs());
            }
        }
    }
    eprintln!("wrote {layout_name} PSF {d}; max |pattern sum - 1| = {worst:.3e}");
    Ok(())
}

fn cmd_project(cfg: &KvConfig, args: ProjectArgs) -> CmdResult {
    if args.ht && args.forward {
        return Err(Error::InvalidArgument("--ht applies to --backward only".into()).into());
    }
    if args.check_adjoint {
        if args.ht {
            return Err(Error::InvalidArgument("--check-adjoint needs H, not H'".into()).into());
        }
        let seed = match args.seed {
            Some(s) => s,
            None => cfg.get_or("seed", 0)?,
        };
        return check_adjoint(&args.array, &args.input, args.forward, seed);
    }
    let output = args
        .output
        .ok_or_else(|| Error::InvalidArgument("missing output path".into()))?;
    if args.forward {
        let h = PsfArray::load(&args.array)?;
        let g = Volume::load(&args.input)?;
        forward_project(&h, &g)?.save(&output, Dtype::F64)?;
    } else {
        let ht = if args.ht {
            BackprojArray::load(&args.array)?
        } else {
            compute_backprojection(&PsfArray::load(&args.array)?)
        };
        let f = Image::load(&args.input)?;
        backproject_via_ht(&ht, &f)?.save(&output, Dtype::F64)?;
    }
    Ok(())
}

/// Random nonnegative test vectors shaped like the input file.
fn check_adjoint(array: &Path, input: &Path, input_is_volume: bool, seed: u64) -> CmdResult {
    let h = PsfArray::load(array)?;
    let n_z = h.dims().n_z();
    let [n_s, n_t] = if input_is_volume {
        let [a, b, _] = Volume::load(input)?.shape();
        [a, b]
    } else {
        Image::load(input)?.shape()
    };
    let noise = |n_z: usize, seed: u64| random_psf(Dims5::new(n_s, n_t, 1, 1, n_z).expect("unit cell"), 1.0, seed);
    let g = Volume::from_vec(n_s, n_t, n_z, noise(n_z, seed)?.into_vec())?;
    let f = Image::from_vec(n_s, n_t, noise(1, seed.wrapping_add(1))?.into_vec())?;
    let lhs = dot(forward_project(&h, &g)?.data(), f.data());
    let rhs = dot(g.data(), backproject_via_ht(&compute_backprojection(&h), &f)?.data());
    let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    println!("<Hg,f> = {lhs:.17e}");
    println!("<g,H'f> = {rhs:.17e}");
    println!("relative error {rel:.3e}");
    Ok(())
}

fn cmd_deconv(
    cfg: &KvConfig,
    psf: &Path,
    image: &Path,
    output: &Path,
    iters: Option<usize>,
    ht_path: Option<&Path>,
    eps: Option<f64>,
) -> CmdResult {
    let h = PsfArray::load(psf)?;
    let f = Image::load(image)?;
    let ht = match ht_path {
        Some(p) => BackprojArray::load(p)?,
        None => compute_backprojection(&h),
    };
    let defaults = RlOptions::default();
    let opts = RlOptions {
        iters: match iters {
            Some(n) => n,
            None => cfg.get_or("iters", defaults.iters)?,
        },
        eps: match eps {
            Some(e) => e,
            None => cfg.get_or("eps", defaults.eps)?,
        },
        initial: None,
    };
    let state = rl_run(&h, &ht, &f, &opts)?;
    println!("iteration,mse");
    for (k, e) in state.history.iter().enumerate() {
        println!("{k},{e:.9e}");
    }
    if state.zero_normalizer > 0 {
        eprintln!("{} voxels have no backprojection weight and stay zero", state.zero_normalizer);
    }
    state.estimate.save(output, Dtype::F64)?;
    Ok(())
}

fn cmd_export(args: ExportArgs) -> CmdResult {
    let file = io::read_lf5(&args.input, LoadOptions { allow_foreign_dims: true })?;
    let plane = if args.sum_forward {
        PsfArray::from_lf5(file)?.sum_forward_plane(args.plane)?
    } else if args.sum_backward {
        BackprojArray::from_lf5(file)?.sum_backward_plane(args.plane)?
    } else {
        // images and volumes: (rows, cols, 1, 1, planes)
        let [rows, cols, a, b, planes] = file.shape;
        if (a, b) != (1, 1) {
            return Err(Error::InvalidArgument(
                "5-D input needs --sum-forward or --sum-backward".into(),
            )
            .into());
        }
        if !(1..=planes).contains(&args.plane) {
            return Err(Error::Index { index: args.plane, max: planes }.into());
        }
        let len = rows * cols;
        let start = (args.plane - 1) * len;
        Plane::from_vec(rows, cols, file.data[start..start + len].to_vec())?
    };
    export_pgm(&plane, &args.output)?;
    Ok(())
}

fn cmd_bench(cfg: &KvConfig, sizes: &str, repeats: Option<usize>, seed: Option<u64>, no_fit: bool, output: &Path) -> CmdResult {
    let cases = match bench::preset(sizes) {
        Some(c) => c,
        None => bench::parse_sizes(&std::fs::read_to_string(sizes)?)?,
    };
    let cases = match bench::available_memory() {
        Some(avail) if !no_fit => {
            // leave headroom for the allocator and the rest of the process
            let (fitted, notes) = bench::fit_to_memory(&cases, avail / 10 * 7);
            for note in notes {
                eprintln!("{note}");
            }
            fitted
        }
        _ => cases,
    };
    let repeats = match repeats {
        Some(r) => r,
        None => cfg.get_or("repeats", 3)?,
    };
    let seed = match seed {
        Some(s) => s,
        None => cfg.get_or("seed", 0)?,
    };
    let report = bench::run_benchmark(&cases, repeats, seed)?;
    std::fs::write(output, report.to_csv())?;
    print!("{}", report.to_table());
    if report.failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}
