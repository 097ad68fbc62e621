//! The `medvl` command line. Exit codes: 0 success, 1 usage error,
//! 2 validation error, 3 runtime or network error.

mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use config::{EncoderSection, PathsSection, ProvidersSection, RunConfig, TrainSection};

use crate::connector::{self, FreezeMask, MlpParams, Stage};
use crate::encoder::{self, EncoderKind};
use crate::eval::{self, SourceFormat, Split};
use crate::pyramid::{self, ImageF32, ScaleSet};
use crate::synth::{
    self, HttpTransport, MockTransport, NoSleep, Provider, ProviderClient, Sleeper, ThreadSleeper,
    Transport,
};
use crate::tensorio;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "medvl", version, about = "Biomedical vision-language data and training tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScaleArgs {
    /// Encoder input side (overrides scale_set.base).
    #[arg(long)]
    base: Option<usize>,
    /// Comma-separated pyramid sides (overrides scale_set.scales).
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    PatchMean,
    SeededLinear,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StatsKind {
    Instruct,
    Vqa,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split an image pyramid into base-resolution tiles.
    Tile {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        scale: ScaleArgs,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Encode an image (or precomputed per-scale features) into a multi-scale feature grid.
    Encode {
        #[arg(long, required_unless_present = "precomputed")]
        image: Option<PathBuf>,
        /// Per-scale `[h, w, dim]` feature files, smallest scale first.
        #[arg(long, conflicts_with = "image")]
        precomputed: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        encoder: Option<KindArg>,
        #[arg(long)]
        patch: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        scale: ScaleArgs,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Train the MLP connector on feature/target rows.
    TrainConnector {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// 1 / pretrain or 2 / finetune.
        #[arg(long, value_parser = parse_stage)]
        stage: Option<Stage>,
        /// Checkpoint directory to start from.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        warmup_ratio: Option<f64>,
        #[arg(long)]
        weight_decay: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Generate instruct conversations from caption JSONL.
    Synthesize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the offline canned transport for both providers.
        #[arg(long)]
        mock: bool,
        #[arg(long)]
        ratio_a: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        fewshots: Option<PathBuf>,
        /// Write the successful records even when some samples fail.
        #[arg(long)]
        skip_failed: bool,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Count QA pairs and images in an instruct file or a VQA dataset.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: Option<StatsKind>,
        #[arg(long, value_parser = parse_format)]
        format: Option<SourceFormat>,
        #[arg(long, value_parser = parse_split)]
        split: Option<Split>,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Score predictions against a VQA dataset.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_parser = parse_format, default_value = "normalized")]
        format: SourceFormat,
        /// Only score items of this split.
        #[arg(long, value_parser = parse_split)]
        split: Option<Split>,
        #[arg(long)]
        name: Option<String>,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Concatenate two instruct files, rejecting duplicate ids.
    Merge {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Convert a released VQA dataset file into normalized JSONL.
    Ingest {
        #[arg(long, value_parser = parse_format)]
        format: SourceFormat,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Split label for formats that do not carry one.
        #[arg(long, value_parser = parse_split, default_value = "test")]
        split: Split,
        #[command(flatten)]
        cfg: ConfigArg,
    },
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    match s.to_ascii_lowercase().replace('_', "-").as_str() {
        "1" | "pretrain" | "connector-pretrain" | "connectorpretrain" => Ok(Stage::ConnectorPretrain),
        "2" | "finetune" | "instruct-finetune" | "instructfinetune" => Ok(Stage::InstructFinetune),
        _ => Err(format!("unknown stage {s:?} (use 1/pretrain or 2/finetune)")),
    }
}

fn parse_format(s: &str) -> Result<SourceFormat, String> {
    s.parse()
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse()
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) => m,
        }
    }
}

fn invalid<E: std::fmt::Display>(ctx: impl std::fmt::Display) -> impl FnOnce(E) -> Failure {
    move |e| Failure::Validation(format!("{ctx}: {e}"))
}

fn runtime<E: std::fmt::Display>(ctx: impl std::fmt::Display) -> impl FnOnce(E) -> Failure {
    move |e| Failure::Runtime(format!("{ctx}: {e}"))
}

/// Parses `argv` (program name first) and runs the subcommand against the
/// process's stdout and stderr.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Like [`dispatch`] with explicit output streams.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.code()
        }
    }
}

fn load_config(arg: &ConfigArg) -> Result<RunConfig, Failure> {
    match &arg.config {
        Some(path) => RunConfig::load(path).map_err(invalid("--config")),
        None => Ok(RunConfig::default()),
    }
}

fn apply_scales(cfg: &mut RunConfig, s: &ScaleArgs) -> Result<(), Failure> {
    if s.base.is_none() && s.scales.is_none() {
        return Ok(());
    }
    let base = s.base.unwrap_or(cfg.scale_set.base());
    let scales = s.scales.clone().unwrap_or_else(|| cfg.scale_set.scales().to_vec());
    cfg.scale_set = ScaleSet::new(base, scales).map_err(invalid("--base/--scales"))?;
    Ok(())
}

fn announce(err: &mut dyn Write, cfg: &RunConfig, seed: Option<u64>) -> Result<(), Failure> {
    cfg.validate().map_err(|e| Failure::Validation(format!("config: {e}")))?;
    let json = serde_json::to_string(cfg).map_err(runtime("config"))?;
    let _ = writeln!(err, "effective config: {json}");
    match seed {
        Some(s) => writeln!(err, "seed: {s}"),
        None => writeln!(err, "seed: unused"),
    }
    .map_err(runtime("stderr"))
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let ctx = path.display().to_string();
    let mut tmp = tempfile::NamedTempFile::new_in(parent_dir(path)).map_err(runtime(&ctx))?;
    tmp.write_all(bytes).map_err(runtime(&ctx))?;
    tmp.as_file().sync_all().map_err(runtime(&ctx))?;
    tmp.persist(path).map_err(runtime(&ctx))?;
    Ok(())
}

fn check_out_dir(dir: &Path, flag: &str) -> Result<(), Failure> {
    if dir.exists() {
        let empty = fs::read_dir(dir)
            .map(|mut d| d.next().is_none())
            .unwrap_or(false);
        if !empty {
            return Err(Failure::Validation(format!(
                "{flag} {}: exists and is not an empty directory",
                dir.display()
            )));
        }
    }
    Ok(())
}

fn staging_dir(dest: &Path) -> Result<tempfile::TempDir, Failure> {
    let parent = parent_dir(dest);
    fs::create_dir_all(parent).map_err(runtime(parent.display()))?;
    tempfile::Builder::new()
        .prefix(".medvl-staging")
        .tempdir_in(parent)
        .map_err(runtime(parent.display()))
}

/// Moves a fully written staging directory to `dest`.
fn persist_dir(tmp: tempfile::TempDir, dest: &Path) -> Result<(), Failure> {
    if dest.exists() {
        fs::remove_dir(dest).map_err(runtime(dest.display()))?;
    }
    let path = tmp.keep();
    fs::rename(&path, dest).map_err(runtime(dest.display()))
}

fn load_square_image(path: &Path) -> Result<ImageF32, Failure> {
    let raw = tensorio::load_image_rgb8(path).map_err(invalid(format!("--image {}", path.display())))?;
    let img = ImageF32::from_u8(&raw);
    if img.is_square() {
        Ok(img)
    } else {
        let side = img.height().max(img.width());
        Ok(pyramid::prepare_square(&img, side))
    }
}

#[derive(Serialize)]
struct TileEntry {
    scale: usize,
    row: usize,
    col: usize,
    file: String,
}

#[derive(Serialize)]
struct TileManifest<'a> {
    image: String,
    base: usize,
    scales: &'a [usize],
    tiles: Vec<TileEntry>,
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Tile {
            image,
            out_dir,
            scale,
            cfg,
        } => {
            let mut run_cfg = load_config(&cfg)?;
            apply_scales(&mut run_cfg, &scale)?;
            announce(err, &run_cfg, None)?;
            check_out_dir(&out_dir, "--out-dir")?;
            let img = load_square_image(&image)?;
            let levels = pyramid::build_pyramid(&img, &run_cfg.scale_set).map_err(invalid("--image"))?;
            let staging = staging_dir(&out_dir)?;
            let base = run_cfg.scale_set.base();
            let mut tiles = Vec::new();
            for (level, &s) in levels.iter().zip(run_cfg.scale_set.scales()) {
                let grid = pyramid::split_tiles(level, base).map_err(invalid("tiling"))?;
                for r in 0..grid.rows {
                    for c in 0..grid.cols {
                        let file = format!("s{s}_r{r}_c{c}.mstf");
                        tensorio::write_mstf(staging.path().join(&file), &grid.tile(r, c).to_tensor())
                            .map_err(runtime(&file))?;
                        tiles.push(TileEntry { scale: s, row: r, col: c, file });
                    }
                }
            }
            let manifest = TileManifest {
                image: image.display().to_string(),
                base,
                scales: run_cfg.scale_set.scales(),
                tiles,
            };
            let n = manifest.tiles.len();
            let json = serde_json::to_string_pretty(&manifest).map_err(runtime("manifest"))?;
            fs::write(staging.path().join("manifest.json"), json + "\n").map_err(runtime("manifest"))?;
            persist_dir(staging, &out_dir)?;
            let _ = writeln!(out, "wrote {n} tiles to {}", out_dir.display());
            Ok(())
        }

        Command::Encode {
            image,
            precomputed,
            out: out_path,
            encoder,
            patch,
            dim,
            seed,
            scale,
            cfg,
        } => {
            let mut run_cfg = load_config(&cfg)?;
            apply_scales(&mut run_cfg, &scale)?;
            let e = &mut run_cfg.encoder;
            match encoder {
                Some(KindArg::PatchMean) => {
                    e.kind = EncoderKind::PatchMean;
                    e.dim = 3;
                }
                Some(KindArg::SeededLinear) => e.kind = EncoderKind::SeededLinear,
                None => {}
            }
            if !precomputed.is_empty() {
                e.kind = EncoderKind::Precomputed;
            }
            if let Some(v) = patch {
                e.patch = v;
            }
            if let Some(v) = dim {
                e.dim = v;
            }
            if let Some(v) = seed {
                e.seed = v;
            }
            announce(err, &run_cfg, Some(run_cfg.encoder.seed))?;
            let spec = run_cfg.encoder_spec();
            let scales = &run_cfg.scale_set;
            let features = if precomputed.is_empty() {
                let image = image.expect("clap requires --image without --precomputed");
                if spec.kind == EncoderKind::Precomputed {
                    return Err(Failure::Validation(
                        "encoder kind Precomputed needs --precomputed feature files".into(),
                    ));
                }
                let img = load_square_image(&image)?;
                encoder::encode_multiscale(&img, scales, &spec).map_err(invalid("encode"))?
            } else {
                let g = spec.grid_side();
                let levels = precomputed
                    .iter()
                    .zip(scales.scales().iter().chain(std::iter::repeat(&0)))
                    .map(|(path, &s)| {
                        let side = s / scales.base() * g;
                        encoder::load_precomputed_features(path, (side, side, spec.dim))
                            .map_err(invalid(format!("--precomputed {}", path.display())))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                encoder::combine_precomputed(&levels, scales, g).map_err(invalid("--precomputed"))?
            };
            let tensor = features.to_tensor();
            write_atomic(&out_path, &tensorio::encode_mstf(&tensor))?;
            if precomputed.is_empty() {
                let _ = writeln!(out, "tiles encoded: {}", scales.tile_count());
            }
            let _ = writeln!(out, "wrote {} with shape {:?}", out_path.display(), tensor.dims());
            Ok(())
        }

        Command::TrainConnector {
            features,
            targets,
            out_dir,
            stage,
            init,
            hidden,
            epochs,
            batch,
            lr,
            warmup_ratio,
            weight_decay,
            seed,
            cfg,
        } => {
            let mut run_cfg = load_config(&cfg)?;
            let t = &mut run_cfg.train;
            if let Some(s) = stage {
                if s != t.stage {
                    // stage defaults apply unless the flags below override them
                    *t = TrainSection {
                        stage: s,
                        hidden: t.hidden,
                        init_seed: t.init_seed,
                        seed: t.seed,
                        ..TrainSection::default()
                    };
                }
            }
            if let Some(v) = hidden {
                t.hidden = v;
            }
            t.epochs = epochs.or(t.epochs);
            t.global_batch = batch.or(t.global_batch);
            t.learning_rate = lr.or(t.learning_rate);
            t.warmup_ratio = warmup_ratio.or(t.warmup_ratio);
            t.weight_decay = weight_decay.or(t.weight_decay);
            t.seed = seed.or(t.seed);
            let train_cfg = run_cfg.train.resolve();
            announce(err, &run_cfg, Some(train_cfg.seed))?;
            check_out_dir(&out_dir, "--out-dir")?;

            let read_rows = |path: &Path, flag: &str| {
                let ctx = format!("{flag} {}", path.display());
                let t = tensorio::read_mstf(path).map_err(invalid(&ctx))?;
                connector::tensor_rows(&t).map_err(invalid(&ctx))
            };
            let x = read_rows(&features, "--features")?;
            let y = read_rows(&targets, "--targets")?;
            if x.nrows() != y.nrows() {
                return Err(Failure::Validation(format!(
                    "--features has {} rows but --targets has {}",
                    x.nrows(),
                    y.nrows()
                )));
            }
            let p0 = match &init {
                Some(dir) => connector::load_checkpoint(dir)
                    .map_err(invalid(format!("--init {}", dir.display())))?
                    .0,
                None => MlpParams::init(x.ncols(), run_cfg.train.hidden, y.ncols(), run_cfg.train.init_seed),
            };
            let mask = FreezeMask::for_stage(train_cfg.stage);
            let outcome = connector::train_stage(&x, &y, &train_cfg, &mask, &p0).map_err(|e| match e {
                connector::ConnectorError::NonFinite(_) => Failure::Runtime(format!("training: {e}")),
                _ => Failure::Validation(format!("training: {e}")),
            })?;

            let staging = staging_dir(&out_dir)?;
            connector::save_checkpoint(staging.path(), &outcome.params, train_cfg.seed, train_cfg.stage, outcome.steps())
                .map_err(runtime("checkpoint"))?;
            let mut csv_bytes = Vec::new();
            connector::write_loss_csv(&mut csv_bytes, &outcome.trace).map_err(runtime("loss.csv"))?;
            fs::write(staging.path().join("loss.csv"), csv_bytes).map_err(runtime("loss.csv"))?;
            persist_dir(staging, &out_dir)?;
            let last = outcome.trace.last().map(|r| r.loss).unwrap_or(f64::NAN);
            let _ = writeln!(
                out,
                "trained {} steps on {} rows; final loss {last:.6}; checkpoint in {}",
                outcome.steps(),
                x.nrows(),
                out_dir.display()
            );
            Ok(())
        }

        Command::Synthesize {
            input,
            out: out_path,
            mock,
            ratio_a,
            seed,
            fewshots,
            skip_failed,
            cfg,
        } => {
            let mut run_cfg = load_config(&cfg)?;
            if let Some(r) = ratio_a {
                run_cfg.mix.ratio_a = r;
            }
            if let Some(s) = seed {
                run_cfg.mix.seed = s;
            }
            if fewshots.is_some() {
                run_cfg.paths.fewshots = fewshots;
            }
            announce(err, &run_cfg, Some(run_cfg.mix.seed))?;

            let samples = synth::read_caption_jsonl(&input).map_err(invalid(format!("--in {}", input.display())))?;
            let shots = match &run_cfg.paths.fewshots {
                Some(p) => synth::read_fewshots(p).map_err(invalid(format!("--fewshots {}", p.display())))?,
                None => Vec::new(),
            };
            let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
            let assignment = synth::assign_providers(&ids, &run_cfg.mix).map_err(invalid("--in"))?;

            let http;
            let canned = MockTransport::canned();
            let (transport, sleeper): (&dyn Transport, &dyn Sleeper) = if mock {
                (&canned, &NoSleep)
            } else {
                for (which, pc) in [(Provider::A, &run_cfg.providers.a), (Provider::B, &run_cfg.providers.b)] {
                    let used = assignment.values().any(|&p| p == which);
                    if used && std::env::var(&pc.auth_env_var).map(|v| v.is_empty()).unwrap_or(true) {
                        return Err(Failure::Validation(format!(
                            "credential variable {} for provider {which:?} is not set",
                            pc.auth_env_var
                        )));
                    }
                }
                http = HttpTransport::new().map_err(runtime("http client"))?;
                (&http, &ThreadSleeper)
            };
            let client_a = ProviderClient::new(run_cfg.providers.a.clone(), transport, sleeper);
            let client_b = ProviderClient::new(run_cfg.providers.b.clone(), transport, sleeper);
            let outcomes = synth::synthesize(&samples, &shots, &run_cfg.mix, &client_a, &client_b)
                .map_err(invalid("synthesize"))?;

            let mut done = Vec::new();
            let mut failed = 0usize;
            let (mut n_a, mut n_b) = (0usize, 0usize);
            for (sample, o) in samples.iter().zip(outcomes) {
                match o.result {
                    Ok((conv, _)) => {
                        match o.provider {
                            Provider::A => n_a += 1,
                            Provider::B => n_b += 1,
                        }
                        done.push((sample.clone(), conv));
                    }
                    Err(e) => {
                        failed += 1;
                        let _ = writeln!(err, "sample {} (provider {:?}) failed: {e}", o.id, o.provider);
                    }
                }
            }
            if failed > 0 && !skip_failed {
                return Err(Failure::Runtime(format!(
                    "{failed} of {} samples failed; nothing written (pass --skip-failed to keep the rest)",
                    samples.len()
                )));
            }
            let json = synth::to_instruct_json(&done).map_err(runtime("instruct json"))?;
            write_atomic(&out_path, (json + "\n").as_bytes())?;
            let _ = writeln!(
                out,
                "wrote {} records to {} (provider A: {n_a}, provider B: {n_b}, failed: {failed})",
                done.len(),
                out_path.display()
            );
            Ok(())
        }

        Command::Stats {
            input,
            kind,
            format,
            split,
            json,
            cfg,
        } => {
            let run_cfg = load_config(&cfg)?;
            announce(err, &run_cfg, None)?;
            let ctx = format!("--input {}", input.display());
            let kind = match (kind, format) {
                (Some(k), _) => k,
                (None, Some(_)) => StatsKind::Vqa,
                (None, None) => {
                    let text = fs::read_to_string(&input).map_err(invalid(&ctx))?;
                    if text.trim_start().starts_with('[') {
                        StatsKind::Instruct
                    } else {
                        StatsKind::Vqa
                    }
                }
            };
            match kind {
                StatsKind::Instruct => {
                    let records = synth::read_instruct_file(&input).map_err(invalid(&ctx))?;
                    let stats = eval::instruct_stats(&records);
                    let text = if json {
                        serde_json::to_string_pretty(&stats).map_err(runtime("stats"))? + "\n"
                    } else {
                        eval::render_instruct_stats(&stats)
                    };
                    let _ = write!(out, "{text}");
                }
                StatsKind::Vqa => {
                    let items = eval::ingest_file(format.unwrap_or(SourceFormat::Normalized), &input, split.unwrap_or(Split::Test))
                        .map_err(invalid(&ctx))?;
                    let stats = eval::dataset_stats(&items);
                    let text = if json {
                        serde_json::to_string_pretty(&stats).map_err(runtime("stats"))? + "\n"
                    } else {
                        let name = input.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                        eval::render_dataset_stats(&name, &stats)
                    };
                    let _ = write!(out, "{text}");
                }
            }
            Ok(())
        }

        Command::Evaluate {
            predictions,
            dataset,
            format,
            split,
            name,
            out: report_path,
            cfg,
        } => {
            let run_cfg = load_config(&cfg)?;
            announce(err, &run_cfg, None)?;
            let mut items = eval::ingest_file(format, &dataset, split.unwrap_or(Split::Test))
                .map_err(invalid(format!("--dataset {}", dataset.display())))?;
            if let Some(s) = split {
                items.retain(|i| i.split == s);
            }
            let preds = eval::read_predictions(&predictions)
                .map_err(invalid(format!("--predictions {}", predictions.display())))?;
            let report = eval::evaluate(&preds, &items).map_err(invalid("evaluate"))?;
            let name = name.unwrap_or_else(|| {
                dataset.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
            });
            let _ = write!(out, "{}", eval::render_report(&name, &report));
            if let Some(path) = report_path {
                let json = serde_json::to_string_pretty(&report).map_err(runtime("report"))?;
                write_atomic(&path, (json + "\n").as_bytes())?;
            }
            Ok(())
        }

        Command::Merge { a, b, out: out_path, cfg } => {
            let run_cfg = load_config(&cfg)?;
            announce(err, &run_cfg, None)?;
            let ra = synth::read_instruct_file(&a).map_err(invalid(format!("--a {}", a.display())))?;
            let rb = synth::read_instruct_file(&b).map_err(invalid(format!("--b {}", b.display())))?;
            let (merged, counts) = synth::merge_instruct(ra, rb).map_err(invalid("merge"))?;
            let json = synth::records_to_json(&merged).map_err(runtime("merge"))?;
            write_atomic(&out_path, (json + "\n").as_bytes())?;
            let _ = writeln!(
                out,
                "wrote {} records to {} ({} from --a, {} from --b)",
                merged.len(),
                out_path.display(),
                counts.from_a,
                counts.from_b
            );
            Ok(())
        }

        Command::Ingest {
            format,
            input,
            out: out_path,
            split,
            cfg,
        } => {
            let run_cfg = load_config(&cfg)?;
            announce(err, &run_cfg, None)?;
            let items = eval::ingest_file(format, &input, split)
                .map_err(invalid(format!("--input {}", input.display())))?;
            write_atomic(&out_path, eval::items_to_jsonl(&items).as_bytes())?;
            let _ = writeln!(out, "wrote {} items to {}", items.len(), out_path.display());
            Ok(())
        }
    }
}
