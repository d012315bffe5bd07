//! Command-line surface: training, evaluation, inference, proxy-label
//! generation, the finite-difference suite, runtime benchmarks, and
//! synthetic dataset generation behind one binary.
//!
//! Every failure is a single-line cause on stderr plus a nonzero exit
//! status. Outputs are deterministic in the arguments and seed.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{bench_table, bench_variants};
use crate::data::{
    disp_value_encodable, encode_disp_png, encode_flow_png, encode_pfm, encode_pfm_flow,
    flow_value_encodable, generate_scene, load_manifest, make_proxy_sample, DatasetWriter,
    GtFormat, Image, ProxyNoise, SceneFlowField, SceneSpec,
};
use crate::error::{DwarfError, Result};
use crate::metrics::MetricAccumulator;
use crate::network::{Dwarf, Variant};
use crate::tensor::Scalar;
use crate::training::{make_schedule, train, write_step_log, TrainSchedule};
use crate::verify::run_gradient_suite;
use crate::viz::{colorize_flow, colorize_scalar, max_flow_magnitude};

/// The network accepts inputs whose sides are multiples of this; `infer`
/// and `eval` pad frames up to it and crop predictions back.
const NET_STRIDE: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Precision {
    #[value(name = "32")]
    F32,
    #[value(name = "64")]
    F64,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: DwarfError| e.to_string())
}

fn parse_format(s: &str) -> std::result::Result<GtFormat, String> {
    s.parse().map_err(|e: DwarfError| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "dwarf", about = "Stereo scene flow estimation", disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model on a dataset manifest under a schedule
    Train(TrainArgs),
    /// Evaluate a checkpoint on the labelled entries of a manifest
    Eval(EvalArgs),
    /// Predict flow and disparities for one four-image scene
    Infer(InferArgs),
    /// Corrupt ground-truth labels into teacher-style proxy labels
    Distill(DistillArgs),
    /// Check every differentiable op against central finite differences
    Gradcheck(GradcheckArgs),
    /// Time forward passes for the ablation variants
    Bench(BenchArgs),
    /// Generate a synthetic stereo-pair dataset
    Gen(GenArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset manifest
    #[arg(long)]
    manifest: PathBuf,
    /// Preset name (flyingthings, kitti_ft, distilled_ft) or schedule file
    #[arg(long)]
    schedule: String,
    /// Directory for model.ckpt and train_log.csv
    #[arg(long)]
    out_dir: PathBuf,
    /// Start from these weights instead of a fresh initialization
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Model variant: base, dense, dense3d or full
    #[arg(long, default_value = "full", value_parser = parse_variant)]
    variant: Variant,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Float width for parameters and arithmetic
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Dataset manifest; unlabelled entries are skipped
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Variant the checkpoint was trained with
    #[arg(long, default_value = "full", value_parser = parse_variant)]
    variant: Variant,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
    /// Also write the key=value lines to <out-dir>/metrics.txt
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InferArgs {
    /// First left, first right, second left, second right frame
    #[arg(value_name = "IMAGE", num_args = 4)]
    images: Vec<PathBuf>,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory for the three predicted maps
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "full", value_parser = parse_variant)]
    variant: Variant,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
    /// Map encoding: kitti (sparse 16-bit PNG) or pfm (exact floats)
    #[arg(long, default_value = "kitti", value_parser = parse_format)]
    format: GtFormat,
    /// Also write color renders of the three fields
    #[arg(long)]
    colorize: bool,
}

#[derive(Debug, Args)]
struct DistillArgs {
    /// Manifest whose ground-truth entries get corrupted copies
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for the proxy dataset and its manifest
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-pixel jitter applied to both flow components
    #[arg(long, default_value_t = ProxyNoise::default().sigma_flow)]
    sigma_flow: f32,
    #[arg(long, default_value_t = ProxyNoise::default().sigma_disp)]
    sigma_disp: f32,
    #[arg(long, default_value_t = ProxyNoise::default().sigma_change)]
    sigma_change: f32,
    /// Fraction of the frame covered by coherent error patches
    #[arg(long, default_value_t = ProxyNoise::default().outlier_rate)]
    outlier_rate: f64,
    #[arg(long, default_value_t = ProxyNoise::default().outlier_min)]
    outlier_min: f32,
    #[arg(long, default_value_t = ProxyNoise::default().outlier_max)]
    outlier_max: f32,
}

#[derive(Debug, Args)]
struct GradcheckArgs {}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Input width, a multiple of 64
    #[arg(long, default_value_t = 256)]
    width: usize,
    /// Input height, a multiple of 64
    #[arg(long, default_value_t = 128)]
    height: usize,
    /// Untimed runs before measurement starts
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    #[arg(long, default_value_t = 3)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Single variant instead of all four
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Directory for the frames, labels and manifest
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 128)]
    height: usize,
    /// Moving rectangles per scene
    #[arg(long, default_value_t = 3)]
    objects: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Label encoding on disk
    #[arg(long, default_value = "pfm", value_parser = parse_format)]
    format: GtFormat,
}

/// Parse and run, returning the process exit status. Errors print as one
/// line; clap handles help and usage output itself.
pub fn run_cli<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = err.exit_code();
            let _ = err.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            1
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Distill(args) => cmd_distill(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Gen(args) => cmd_gen(args),
    }
}

/// A preset name, otherwise a schedule file.
fn resolve_schedule(arg: &str) -> Result<TrainSchedule> {
    if let Ok(schedule) = make_schedule(arg) {
        return Ok(schedule);
    }
    let path = Path::new(arg);
    if path.exists() {
        return TrainSchedule::from_text(&std::fs::read_to_string(path)?);
    }
    Err(DwarfError::invalid(format!(
        "schedule {arg:?} is neither a preset (flyingthings, kitti_ft, distilled_ft) nor a file"
    )))
}

fn build_model<T: Scalar>(
    variant: Variant,
    seed: u64,
    checkpoint: Option<&Path>,
) -> Result<Dwarf<T>> {
    let mut model = Dwarf::new(variant.config(), seed)?;
    if let Some(path) = checkpoint {
        model.load(path)?;
    }
    Ok(model)
}

fn ceil_to_stride(v: usize) -> usize {
    v.div_ceil(NET_STRIDE) * NET_STRIDE
}

/// Pad the views up to the network stride, run the model, and crop the
/// full-resolution prediction back to the input size.
fn predict<T: Scalar>(model: &Dwarf<T>, views: [&Image; 4]) -> Result<SceneFlowField> {
    let (w, h) = (views[0].width, views[0].height);
    let (pw, ph) = (ceil_to_stride(w), ceil_to_stride(h));
    let mut tensors = Vec::with_capacity(4);
    for view in views {
        let tensor = if (view.width, view.height) == (pw, ph) {
            view.to_tensor::<T>()
        } else {
            view.pad(pw, ph)?.to_tensor::<T>()
        };
        tensors.push(tensor);
    }
    let output = model.forward(&tensors[0], &tensors[1], &tensors[2], &tensors[3])?;
    let full = &output.full_res;
    let field = SceneFlowField::from_tensors(&full.flow, &full.disp, &full.change)?;
    if (field.width, field.height) == (w, h) {
        Ok(field)
    } else {
        field.crop(0, 0, w, h)
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    match args.precision {
        Precision::F32 => train_run::<f32>(&args),
        Precision::F64 => train_run::<f64>(&args),
    }
}

fn train_run<T: Scalar>(args: &TrainArgs) -> Result<()> {
    let dataset = load_manifest(&args.manifest)?;
    let schedule = resolve_schedule(&args.schedule)?;
    let mut model = build_model::<T>(args.variant, args.seed, args.checkpoint.as_deref())?;
    std::fs::create_dir_all(&args.out_dir)?;

    let every = (schedule.steps / 10).max(1);
    let records = train(&mut model, &dataset, &schedule, args.seed, |r| {
        if r.step % every == 0 || r.step + 1 == schedule.steps {
            println!(
                "step {:>6}  loss {:.6}  lr {:.2e}  pool {}",
                r.step, r.loss, r.lr, r.pool
            );
        }
    })?;

    let ckpt = args.out_dir.join("model.ckpt");
    model.save(&ckpt)?;
    write_step_log(&records, &args.out_dir.join("train_log.csv"))?;
    println!("{} steps done, checkpoint {}", records.len(), ckpt.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    match args.precision {
        Precision::F32 => eval_run::<f32>(&args),
        Precision::F64 => eval_run::<f64>(&args),
    }
}

fn eval_run<T: Scalar>(args: &EvalArgs) -> Result<()> {
    let dataset = load_manifest(&args.manifest)?;
    let model = build_model::<T>(args.variant, 0, Some(&args.checkpoint))?;

    let mut acc = MetricAccumulator::new();
    let mut skipped = 0usize;
    for index in 0..dataset.len() {
        if dataset.entries[index].gt.is_none() {
            skipped += 1;
            continue;
        }
        let sample = dataset.load_sample(index)?;
        let pred = predict(&model, [&sample.l1, &sample.r1, &sample.l2, &sample.r2])?;
        acc.add(&pred, &sample.gt, sample.noc.as_deref())?;
    }
    if acc.samples() == 0 {
        return Err(DwarfError::invalid(
            "eval: manifest has no labelled samples",
        ));
    }
    if skipped > 0 {
        eprintln!("skipped {skipped} unlabelled samples");
    }

    let report = acc.report();
    print!("{}", report.lines());
    println!();
    print!("{}", report.table());
    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.txt"), report.lines())?;
    }
    Ok(())
}

fn cmd_infer(args: InferArgs) -> Result<()> {
    match args.precision {
        Precision::F32 => infer_run::<f32>(&args),
        Precision::F64 => infer_run::<f64>(&args),
    }
}

fn infer_run<T: Scalar>(args: &InferArgs) -> Result<()> {
    let mut views = Vec::with_capacity(4);
    for path in &args.images {
        views.push(Image::load(path)?);
    }
    for (view, path) in views[1..].iter().zip(&args.images[1..]) {
        if (view.width, view.height) != (views[0].width, views[0].height) {
            return Err(DwarfError::shape(
                "infer",
                format!(
                    "{} is {}x{}, expected {}x{}",
                    path.display(),
                    view.width,
                    view.height,
                    views[0].width,
                    views[0].height
                ),
            ));
        }
    }

    let model = build_model::<T>(args.variant, 0, Some(&args.checkpoint))?;
    let pred = predict(&model, [&views[0], &views[1], &views[2], &views[3]])?;
    let (w, h) = (pred.width, pred.height);
    std::fs::create_dir_all(&args.out_dir)?;

    match args.format {
        GtFormat::Kitti => {
            // The sparse formats cannot carry every float; unrepresentable
            // predictions become the invalid code rather than an error.
            let flow_valid: Vec<bool> = (0..pred.len())
                .map(|i| flow_value_encodable(pred.u[i]) && flow_value_encodable(pred.v[i]))
                .collect();
            let d1_valid: Vec<bool> = pred.d1.iter().map(|&d| disp_value_encodable(d)).collect();
            let d2_valid: Vec<bool> = pred.d2.iter().map(|&d| disp_value_encodable(d)).collect();
            let dropped = [&flow_valid, &d1_valid, &d2_valid]
                .iter()
                .flat_map(|m| m.iter())
                .filter(|&&ok| !ok)
                .count();
            if dropped > 0 {
                eprintln!(
                    "warning: {dropped} predicted values outside the 16-bit PNG range \
                     were written as invalid"
                );
            }
            for (name, bytes) in [
                ("flow.png", encode_flow_png(&pred.u, &pred.v, &flow_valid, w, h)?),
                ("disp1.png", encode_disp_png(&pred.d1, &d1_valid, w, h)?),
                ("disp2.png", encode_disp_png(&pred.d2, &d2_valid, w, h)?),
            ] {
                std::fs::write(args.out_dir.join(name), bytes)?;
            }
        }
        GtFormat::Pfm => {
            for (name, bytes) in [
                ("flow.pfm", encode_pfm_flow(&pred.u, &pred.v, w, h)?),
                ("disp1.pfm", encode_pfm(&pred.d1, w, h)?),
                ("disp2.pfm", encode_pfm(&pred.d2, w, h)?),
            ] {
                std::fs::write(args.out_dir.join(name), bytes)?;
            }
        }
    }

    if args.colorize {
        let max = max_flow_magnitude(&pred.u, &pred.v);
        colorize_flow(&pred.u, &pred.v, w, h, max)?.save(&args.out_dir.join("flow_color.png"))?;
        for (name, map) in [("disp1_color.png", &pred.d1), ("disp2_color.png", &pred.d2)] {
            colorize_scalar(map, None, w, h, value_range(map))?.save(&args.out_dir.join(name))?;
        }
    }
    println!("wrote predictions to {}", args.out_dir.display());
    Ok(())
}

/// Finite min and max of a map, widened to a nonempty interval so constant
/// maps still colorize.
fn value_range(map: &[f32]) -> (f32, f32) {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in map {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if hi > lo {
        (lo, hi)
    } else if lo.is_finite() {
        (lo, lo + 1.0)
    } else {
        (0.0, 1.0)
    }
}

fn cmd_distill(args: DistillArgs) -> Result<()> {
    let dataset = load_manifest(&args.manifest)?;
    let noise = ProxyNoise {
        sigma_flow: args.sigma_flow,
        sigma_disp: args.sigma_disp,
        sigma_change: args.sigma_change,
        outlier_rate: args.outlier_rate,
        outlier_min: args.outlier_min,
        outlier_max: args.outlier_max,
    };
    let (gt, _) = dataset.pools();
    if gt.is_empty() {
        return Err(DwarfError::invalid(
            "distill: manifest has no ground-truth samples",
        ));
    }

    // Corrupted labels can leave the sparse PNG range, so proxies always
    // go to disk as float maps.
    let mut writer = DatasetWriter::create(&args.out_dir, GtFormat::Pfm)?;
    for (k, &index) in gt.iter().enumerate() {
        let sample = dataset.load_sample(index)?;
        let proxy = make_proxy_sample(&sample, &noise, args.seed.wrapping_add(index as u64))?;
        writer.push(&format!("px{k:04}"), &proxy)?;
    }
    let manifest = writer.finish()?;
    println!("{} proxy samples, manifest {}", gt.len(), manifest.display());
    Ok(())
}

fn cmd_gradcheck(_args: GradcheckArgs) -> Result<()> {
    let report = run_gradient_suite()?;
    print!("{}", report.table());
    if !report.passed() {
        return Err(DwarfError::invalid(format!(
            "gradient suite failed: max relative error {:.3e}",
            report.max_rel_err()
        )));
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let variants = match args.variant {
        Some(v) => vec![v],
        None => Variant::all().to_vec(),
    };
    let results = bench_variants(
        &variants,
        args.width,
        args.height,
        args.warmup,
        args.runs,
        args.seed,
    )?;
    print!("{}", bench_table(&results));
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    if args.count == 0 {
        return Err(DwarfError::invalid("gen: count must be positive"));
    }
    let mut rng = StdRng::seed_from_u64(args.seed);
    let mut writer = DatasetWriter::create(&args.out_dir, args.format)?;
    for k in 0..args.count {
        let spec = SceneSpec::random(args.width, args.height, args.objects, &mut rng);
        let sample = generate_scene(&spec, args.seed.wrapping_add(k as u64))?;
        writer.push(&format!("scene{k:04}"), &sample)?;
    }
    let manifest = writer.finish()?;
    println!("{} scenes, manifest {}", args.count, manifest.display());
    Ok(())
}
