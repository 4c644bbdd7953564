//! `blpr`: command-line front end for plate recognition.
//!
//! Exit status: 0 on success, 1 on a domain error (message on stderr),
//! 2 on a usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use blpr::dataset::{self, PlateStyle};
use blpr::enhance::{self, EnhanceMode};
use blpr::evalkit::{self, Normalize};
use blpr::imgcore;
use blpr::nnet::{self, Architecture, Optimizer, TrainConfig};
use blpr::pipeline::{self, DataSource, PipelineConfig};
use blpr::segment::Connectivity;
use clap::{Args, Parser, Subcommand};

type BoxError = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(name = "blpr", version, about = "Two-line license plate recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Upscale and sharpen a plate photo.
    Enhance {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        pipe: PipelineArgs,
    },
    /// Run the binarization stages; optionally write every stage image.
    Preprocess {
        input: PathBuf,
        #[arg(long, value_name = "DIR")]
        dump_stages: Option<PathBuf>,
        #[command(flatten)]
        pipe: PipelineArgs,
    },
    /// Segment a plate and write `glyph_<line>_<pos>.png` crops.
    Segment {
        input: PathBuf,
        #[arg(short, long, value_name = "DIR")]
        output: PathBuf,
        /// Treat the input as a dumped working-size image (skip enhance/resize).
        #[arg(long)]
        from_working: bool,
        #[command(flatten)]
        pipe: PipelineArgs,
    },
    /// Train a glyph classifier and save the model.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(short, long, default_value = "model.bin")]
        output: PathBuf,
        /// Also write per-epoch loss/accuracy as CSV.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Classify 32×32 glyph images.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Recognize plates; prints the reading, then the JSON result, per plate.
    Recognize {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Plate images or directories of them (processed in sorted order).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Treat inputs as dumped working-size images (skip enhance/resize).
        #[arg(long)]
        from_working: bool,
        #[command(flatten)]
        pipe: PipelineArgs,
    },
    /// Score `generated<TAB>desired` lines; prints a JSON report.
    Evaluate {
        pairs: PathBuf,
        #[arg(long, default_value = "casefold")]
        normalize: Normalize,
    },
    /// Train, test and report metrics, confusion matrix and history.
    Experiment {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(short, long, value_name = "DIR", default_value = "experiment")]
        output: PathBuf,
    },
    /// Generate synthetic data.
    Synth {
        #[command(subcommand)]
        what: SynthCommand,
    },
}

#[derive(Subcommand)]
enum SynthCommand {
    /// A glyph dataset in the train/valid/test directory layout.
    Glyphs {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        train: usize,
        #[arg(long, default_value_t = 35)]
        valid: usize,
        #[arg(long, default_value_t = 22)]
        test: usize,
    },
    /// Plate photos plus `truth.tsv` (file name, reading).
    Plates {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        count: usize,
    },
}

#[derive(Args)]
struct PipelineArgs {
    /// key=value pipeline config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    connectivity: Option<Connectivity>,
    #[arg(long)]
    no_matra_merge: bool,
    /// min_h,max_h,min_w,max_w,min_area (fractions of plate size, area in px).
    #[arg(long, value_name = "SPEC")]
    box_filter: Option<String>,
    #[arg(long)]
    enhance_mode: Option<EnhanceMode>,
    /// Working-image height in pixels.
    #[arg(long)]
    working_height: Option<usize>,
}

impl PipelineArgs {
    fn load(&self) -> Result<PipelineConfig, BoxError> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::from_file(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(c) = self.connectivity {
            cfg.connectivity = c;
        }
        if self.no_matra_merge {
            cfg.matra_merge = false;
        }
        if let Some(spec) = &self.box_filter {
            let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
            if parts.len() != 5 {
                return Err("--box-filter expects min_h,max_h,min_w,max_w,min_area".into());
            }
            for (key, v) in ["box_min_h", "box_max_h", "box_min_w", "box_max_w", "box_min_area"]
                .iter()
                .zip(parts)
            {
                cfg.set(key, v)?;
            }
        }
        if let Some(m) = self.enhance_mode {
            cfg.enhance.mode = m;
        }
        if let Some(h) = self.working_height {
            cfg.working_height = h;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct DataArgs {
    /// Dataset root with train/valid/test directories.
    #[arg(long, conflicts_with = "synth")]
    data: Option<PathBuf>,
    /// Use the synthetic generator instead (per-class train,valid,test sizes).
    #[arg(long, value_name = "TRAIN,VALID,TEST")]
    synth: Option<String>,
    /// Seed of the synthetic dataset.
    #[arg(long, default_value_t = 42)]
    data_seed: u64,
}

impl DataArgs {
    fn source(&self) -> Result<DataSource, BoxError> {
        match (&self.data, &self.synth) {
            (Some(p), _) => Ok(DataSource::Directory(p.clone())),
            (None, spec) => {
                let spec = spec.as_deref().unwrap_or("100,35,22");
                let n: Vec<usize> = spec
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<_, _>>()
                    .map_err(|_| format!("bad --synth sizes `{spec}`"))?;
                if n.len() != 3 {
                    return Err(format!("--synth expects TRAIN,VALID,TEST, got `{spec}`").into());
                }
                Ok(DataSource::Synthetic {
                    seed: self.data_seed,
                    train: n[0],
                    valid: n[1],
                    test: n[2],
                })
            }
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value = "blpr-cnn")]
    arch: Architecture,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long, default_value = "adam")]
    optimizer: Optimizer,
    /// Seed for weight initialization and shuffling.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            batch_size: self.batch,
            epochs: self.epochs,
            optimizer: self.optimizer,
            seed: self.seed,
        }
    }
}

fn print_epoch(e: &nnet::EpochStats) {
    eprintln!(
        "epoch {:>3}  loss {:.4}  acc {:.4}  val_loss {:.4}  val_acc {:.4}",
        e.epoch, e.train_loss, e.train_accuracy, e.valid_loss, e.valid_accuracy
    );
}

fn load_model(path: Option<&PathBuf>, cfg: &PipelineConfig) -> Result<nnet::Network, BoxError> {
    let path = path
        .or(cfg.model.as_ref())
        .ok_or("no model given (use --model or model= in the config)")?;
    let net = nnet::load_model(path)?;
    pipeline::check_model(&net)?;
    Ok(net)
}

fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, BoxError> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            files.retain(|f| {
                f.is_file()
                    && matches!(
                        f.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                        Some("png" | "ppm" | "pgm")
                    )
            });
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<(), BoxError> {
    let workdir = std::env::temp_dir();
    match cli.command {
        Command::Enhance { input, output, pipe } => {
            let cfg = pipe.load()?;
            let img = imgcore::load_image(&input)?;
            let out = enhance::enhance(&img, &cfg.enhance, &workdir)?;
            imgcore::save_image(&out, &output)?;
            println!("{}x{} -> {}x{}", img.width(), img.height(), out.width(), out.height());
        }
        Command::Preprocess {
            input,
            dump_stages,
            pipe,
        } => {
            let cfg = pipe.load()?;
            let img = imgcore::load_image(&input)?;
            let stages = pipeline::preprocess_plate(&img, &cfg, &workdir)?;
            println!(
                "working {}x{}  threshold {}  inverted {}  foreground {}",
                stages.working.width(),
                stages.working.height(),
                stages.threshold,
                stages.inverted,
                stages.dilated.count_foreground()
            );
            if let Some(dir) = dump_stages {
                for p in stages.dump(&dir)? {
                    println!("{}", p.display());
                }
            }
        }
        Command::Segment {
            input,
            output,
            from_working,
            pipe,
        } => {
            let cfg = pipe.load()?;
            let img = imgcore::load_image(&input)?;
            let stages = if from_working {
                pipeline::preprocess_working(&img, img.clone(), &cfg)?
            } else {
                pipeline::preprocess_plate(&img, &cfg, &workdir)?
            };
            let seg = pipeline::segment_working(&stages.working, &stages.dilated, &cfg)?;
            std::fs::create_dir_all(&output)?;
            for g in &seg.glyphs {
                let name = format!("glyph_{}_{}.png", g.line_index, g.position_in_line);
                imgcore::save_image(&g.image, output.join(&name))?;
                let b = g.source_box;
                println!("{name}\t{}\t{}\t{}\t{}", b.x, b.y, b.w, b.h);
            }
        }
        Command::Train {
            data,
            train,
            output,
            history,
        } => {
            let splits = data.source()?.load()?;
            eprint!("{}", splits.counts.to_table());
            let report = pipeline::run_experiment(&splits, train.arch, &train.config(), print_epoch)?;
            nnet::save_model(&report.network, &output)?;
            if let Some(h) = history {
                std::fs::write(h, report.history.to_csv())?;
            }
            println!("{}", report.summary());
        }
        Command::Classify { model, images } => {
            let net = nnet::load_model(&model)?;
            for path in images {
                let img = imgcore::load_image(&path)?;
                let img = if img.width() == 32 && img.height() == 32 {
                    img
                } else {
                    imgcore::resize(&img, 32, 32)?
                };
                let (class, probs) = nnet::predict(&net, &img)?;
                println!("{}\t{}\t{:.6}", path.display(), net.classes()[class], probs[class]);
            }
        }
        Command::Recognize {
            model,
            inputs,
            from_working,
            pipe,
        } => {
            let cfg = pipe.load()?;
            let net = load_model(model.as_ref(), &cfg)?;
            for path in expand_inputs(&inputs)? {
                let img = imgcore::load_image(&path)?;
                let reading = if from_working {
                    pipeline::recognize_working(&img, &net, &cfg)?
                } else {
                    pipeline::recognize_plate_in(&img, &net, &cfg, &workdir)?
                };
                println!("{}", reading.reading);
                println!("{}", reading.to_json());
            }
        }
        Command::Evaluate { pairs, normalize } => {
            let text = std::fs::read_to_string(&pairs)?;
            let pairs = evalkit::parse_pairs_tsv(&text)?;
            let report = evalkit::evaluate_plates(&pairs, normalize)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Experiment { data, train, output } => {
            let splits = data.source()?.load()?;
            eprint!("{}", splits.counts.to_table());
            let report = pipeline::run_experiment(&splits, train.arch, &train.config(), print_epoch)?;
            report.write(&output)?;
            println!("{}", report.summary());
            println!("outputs written to {}", output.display());
        }
        Command::Synth { what } => match what {
            SynthCommand::Glyphs {
                output,
                seed,
                train,
                valid,
                test,
            } => {
                let splits = dataset::synth_glyphs(seed, train, valid, test);
                splits.write(&output)?;
                print!("{}", splits.counts.to_table());
            }
            SynthCommand::Plates { output, seed, count } => {
                std::fs::create_dir_all(&output)?;
                let mut truth = String::new();
                for (i, plate) in dataset::synth_plates(seed, count, &PlateStyle::default()).iter().enumerate() {
                    let name = format!("plate_{i:03}.png");
                    imgcore::save_image(&plate.image, output.join(&name))?;
                    truth.push_str(&format!("{name}\t{}\n", plate.truth));
                }
                std::fs::write(output.join("truth.tsv"), truth)?;
                println!("{count} plates written to {}", output.display());
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

