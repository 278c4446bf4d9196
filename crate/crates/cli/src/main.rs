use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Parser;
use npsynth::driver::DEFAULT_SCALES;
use npsynth::image_io::{read_image, read_mask, write_image, RgbImage};
use npsynth::metrics::{compute_metrics, MetricsReport};
use npsynth::network::DEFAULT_TAPS;
use npsynth::{inpaint, load_weights, InpaintReport, InpaintRequest, JointConfig, Networks, Real};
use serde_json::json;

/// Fill a hole in an image, coarse to fine, by matching deep-feature patches.
#[derive(Debug, Parser)]
#[command(
    name = "inpaint",
    version,
    after_help = "Exit status: 0 on success, 1 on input errors, 2 when optimization stopped early (the best-effort output is still written)."
)]
struct Args {
    /// Input image (binary PPM or 8-bit PNG).
    #[arg(long)]
    image: PathBuf,
    /// Hole mask (PGM or grayscale PNG, nonzero = hole), same size as the image.
    #[arg(long)]
    mask: PathBuf,
    /// Texture network weights (NPSW).
    #[arg(long)]
    vgg_weights: PathBuf,
    /// Content network weights (NPSW); without them the coarsest hole starts from the mean colour.
    #[arg(long)]
    content_weights: Option<PathBuf>,
    /// Output image; PNG when the extension is `.png`, PPM otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SCALES)]
    scales: usize,
    /// Texture weight.
    #[arg(long, default_value_t = JointConfig::default().alpha)]
    alpha: f64,
    /// Total-variation weight.
    #[arg(long, default_value_t = JointConfig::default().beta)]
    beta: f64,
    #[arg(long, default_value_t = JointConfig::default().patch_size)]
    patch_size: usize,
    /// Optimizer iterations per scale.
    #[arg(long, default_value_t = JointConfig::default().iterations)]
    iters: usize,
    /// Iterations between nearest-neighbour refreshes.
    #[arg(long, default_value_t = JointConfig::default().nn_refresh)]
    nn_refresh: usize,
    /// Restrict patch matches to this many feature cells around each query.
    #[arg(long)]
    window: Option<usize>,
    /// Comma-separated texture layers.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_TAPS.map(String::from))]
    taps: Vec<String>,
    /// Ground truth for L1/L2/PSNR.
    #[arg(long)]
    metrics_gt: Option<PathBuf>,
    /// Evaluate metrics over the whole image instead of the hole.
    #[arg(long)]
    metrics_full: bool,
    /// JSON report path.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Amplitude of seeded uniform noise added to the coarsest initialization.
    #[arg(long, default_value_t = 0.0)]
    init_noise: f64,
    /// Run in 64-bit floating point.
    #[arg(long)]
    f64_check: bool,
}

fn default_out(image: &Path) -> PathBuf {
    let stem = image.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    let ext = image.extension().and_then(|s| s.to_str()).unwrap_or("ppm");
    image.with_file_name(format!("{stem}.inpainted.{ext}"))
}

struct Run {
    out_path: PathBuf,
    report: InpaintReport,
}

fn execute<T: Real>(args: &Args, request: &InpaintRequest) -> Result<(RgbImage, InpaintReport)> {
    let vgg = load_weights(&args.vgg_weights).with_context(|| format!("loading {}", args.vgg_weights.display()))?;
    let content = args
        .content_weights
        .as_ref()
        .map(|p| load_weights(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let nets = Networks::<T>::from_tables(&vgg, content.as_ref(), &request.config)?;
    Ok(inpaint(request, &nets.feature, nets.content.as_ref())?)
}

fn run(args: &Args) -> Result<Run> {
    let image = read_image(&args.image).with_context(|| format!("reading {}", args.image.display()))?;
    let mask = read_mask(&args.mask, (image.height, image.width)).with_context(|| format!("reading {}", args.mask.display()))?;
    let truth = args
        .metrics_gt
        .as_ref()
        .map(|p| read_image(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;

    let mut request = InpaintRequest::new(image, mask);
    request.scales = args.scales;
    request.seed = args.seed;
    request.init_noise = args.init_noise;
    request.config = JointConfig {
        alpha: args.alpha,
        beta: args.beta,
        taps: args.taps.clone(),
        patch_size: args.patch_size,
        nn_refresh: args.nn_refresh,
        iterations: args.iters,
        window: args.window,
        ..JointConfig::default()
    };
    request.validate()?;

    let started = Instant::now();
    let (output, report) = if args.f64_check {
        execute::<f64>(args, &request)?
    } else {
        execute::<f32>(args, &request)?
    };
    let elapsed = started.elapsed().as_secs_f64();

    let out_path = args.out.clone().unwrap_or_else(|| default_out(&args.image));
    write_image(&out_path, &output).with_context(|| format!("writing {}", out_path.display()))?;

    let metrics: Option<MetricsReport> = truth
        .map(|gt| compute_metrics(&output, &gt, (!args.metrics_full).then_some(&request.mask)))
        .transpose()?;
    if let Some(m) = &metrics {
        println!("L1 {:.3}%  L2 {:.3}%  PSNR {:.3} dB ({:?}, {} px)", m.l1_percent, m.l2_percent, m.psnr_db, m.region, m.pixels);
    }
    if let Some(path) = &args.report {
        let doc = json!({
            "image": args.image,
            "mask": args.mask,
            "output": out_path,
            "elapsed_seconds": elapsed,
            "metrics": metrics,
            "run": report,
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(Run { out_path, report })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&args) {
        Ok(r) if r.report.warning => {
            log::warn!("optimization did not converge cleanly; best-effort output written to {}", r.out_path.display());
            ExitCode::from(2)
        }
        Ok(r) => {
            log::info!("wrote {}", r.out_path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
