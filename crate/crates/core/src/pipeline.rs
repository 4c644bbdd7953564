//! End-to-end plate recognition and the train/evaluate experiment.
//!
//! Stage order: enhance, resize to the working height, grayscale, contrast
//! stretch, Otsu binarization (inverted when the foreground covers more than
//! half the plate, so dark-on-light text becomes foreground), dilation,
//! masking, component boxes on the dilated mask, size filter, line split,
//! upper-line fragment merge, crop, classify, assemble.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{self, transliterate, DatasetError, DatasetSplits, LabelVocab};
use crate::enhance::{self, EnhanceConfig, EnhanceError, EnhanceMode};
use crate::evalkit::{self, ClassMetrics, ConfusionMatrix, EvalError, Normalize};
use crate::imgcore::{self, BinaryImage, GrayImage, ImageError, RgbImage};
use crate::nnet::{self, Architecture, EpochStats, Network, NnetError, Sample, TrainConfig, TrainHistory};
use crate::platefind::{component_boxes, filter_character_boxes, Box2D, BoxFilterConfig};
use crate::preprocess::{self, PreprocessError, StructuringElement};
use crate::segment::{self, Connectivity, Glyph, SegmentError, GLYPH_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Enhance,
    Resize,
    Preprocess,
    Segment,
    Classify,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Enhance => "enhance",
            Self::Resize => "resize",
            Self::Preprocess => "preprocess",
            Self::Segment => "segment",
            Self::Classify => "classify",
        })
    }
}

#[derive(Debug, Error)]
pub enum StageFailure {
    #[error(transparent)]
    Enhance(#[from] EnhanceError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Nnet(#[from] NnetError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: StageFailure,
    },
    #[error("no character regions found on the plate")]
    NoGlyphsFound,
    #[error("model classes do not match the plate vocabulary")]
    ModelVocabMismatch,
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Nnet(#[from] NnetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn at<T, E: Into<StageFailure>>(stage: Stage, r: Result<T, E>) -> Result<T, PipelineError> {
    r.map_err(|e| PipelineError::Stage {
        stage,
        source: e.into(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub enhance: EnhanceConfig,
    /// Enhance before establishing the working size (otherwise after).
    pub enhance_first: bool,
    pub working_height: usize,
    pub stretch_low: f64,
    pub stretch_high: f64,
    /// Stretch the gray image before Otsu (otherwise Otsu runs on the raw
    /// gray image and the stretch only feeds the masked output).
    pub stretch_before_otsu: bool,
    pub se_width: usize,
    pub se_height: usize,
    pub dilate_iterations: usize,
    pub connectivity: Connectivity,
    pub box_filter: BoxFilterConfig,
    pub matra_merge: bool,
    pub margin_frac: f64,
    pub auto_invert: bool,
    pub model: Option<PathBuf>,
    pub normalize: Normalize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            enhance: EnhanceConfig::default(),
            enhance_first: true,
            working_height: 128,
            stretch_low: 2.0,
            stretch_high: 98.0,
            stretch_before_otsu: true,
            se_width: 3,
            se_height: 3,
            dilate_iterations: 1,
            connectivity: Connectivity::Eight,
            box_filter: BoxFilterConfig::default(),
            matra_merge: true,
            margin_frac: 0.08,
            auto_invert: true,
            model: None,
            normalize: Normalize::Casefold,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, PipelineError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| PipelineError::InvalidConfig(format!("{key}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, PipelineError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(PipelineError::InvalidConfig(format!("{key}: expected true or false, got `{value}`"))),
    }
}

impl PipelineConfig {
    /// Sets one `key=value` entry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let v = value.trim();
        match key.trim() {
            "enhance_mode" => self.enhance.mode = parse_value(key, v)?,
            "enhance_scale" => self.enhance.scale = parse_value(key, v)?,
            "sharpen_amount" => self.enhance.sharpen_amount = parse_value(key, v)?,
            "sharpen_radius" => self.enhance.sharpen_radius = parse_value(key, v)?,
            "external_command" => self.enhance.external_command = Some(v.to_string()),
            "external_timeout_secs" => {
                self.enhance.timeout = Duration::from_secs_f64(parse_value::<f64>(key, v)?.max(0.0))
            }
            "enhance_first" => self.enhance_first = parse_bool(key, v)?,
            "working_height" => self.working_height = parse_value(key, v)?,
            "stretch_low" => self.stretch_low = parse_value(key, v)?,
            "stretch_high" => self.stretch_high = parse_value(key, v)?,
            "stretch_before_otsu" => self.stretch_before_otsu = parse_bool(key, v)?,
            "se_width" => self.se_width = parse_value(key, v)?,
            "se_height" => self.se_height = parse_value(key, v)?,
            "dilate_iterations" => self.dilate_iterations = parse_value(key, v)?,
            "connectivity" => self.connectivity = parse_value(key, v)?,
            "box_min_h" => self.box_filter.min_h_frac = parse_value(key, v)?,
            "box_max_h" => self.box_filter.max_h_frac = parse_value(key, v)?,
            "box_min_w" => self.box_filter.min_w_frac = parse_value(key, v)?,
            "box_max_w" => self.box_filter.max_w_frac = parse_value(key, v)?,
            "box_min_area" => self.box_filter.min_area_px = parse_value(key, v)?,
            "matra_merge" => self.matra_merge = parse_bool(key, v)?,
            "margin_frac" => self.margin_frac = parse_value(key, v)?,
            "auto_invert" => self.auto_invert = parse_bool(key, v)?,
            "model" => self.model = Some(PathBuf::from(v)),
            "normalize" => self.normalize = parse_value(key, v)?,
            other => return Err(PipelineError::InvalidConfig(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parses `key=value` lines over the defaults. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::InvalidConfig(format!("line {}: expected key=value", n + 1)))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The config as `key=value` lines that [`PipelineConfig::parse`] reads back.
    pub fn to_config_text(&self) -> String {
        let mode = match self.enhance.mode {
            EnhanceMode::Builtin => "builtin",
            EnhanceMode::External => "external",
            EnhanceMode::None => "none",
        };
        let mut lines = vec![
            format!("enhance_mode={mode}"),
            format!("enhance_scale={}", self.enhance.scale),
            format!("sharpen_amount={}", self.enhance.sharpen_amount),
            format!("sharpen_radius={}", self.enhance.sharpen_radius),
        ];
        if let Some(c) = &self.enhance.external_command {
            lines.push(format!("external_command={c}"));
        }
        lines.extend([
            format!("external_timeout_secs={}", self.enhance.timeout.as_secs_f64()),
            format!("enhance_first={}", self.enhance_first),
            format!("working_height={}", self.working_height),
            format!("stretch_low={}", self.stretch_low),
            format!("stretch_high={}", self.stretch_high),
            format!("stretch_before_otsu={}", self.stretch_before_otsu),
            format!("se_width={}", self.se_width),
            format!("se_height={}", self.se_height),
            format!("dilate_iterations={}", self.dilate_iterations),
            format!("connectivity={}", self.connectivity),
            format!("box_min_h={}", self.box_filter.min_h_frac),
            format!("box_max_h={}", self.box_filter.max_h_frac),
            format!("box_min_w={}", self.box_filter.min_w_frac),
            format!("box_max_w={}", self.box_filter.max_w_frac),
            format!("box_min_area={}", self.box_filter.min_area_px),
            format!("matra_merge={}", self.matra_merge),
            format!("margin_frac={}", self.margin_frac),
            format!("auto_invert={}", self.auto_invert),
        ]);
        if let Some(m) = &self.model {
            lines.push(format!("model={}", m.display()));
        }
        lines.push(format!("normalize={}", self.normalize));
        lines.join("\n") + "\n"
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.enhance
            .validate()
            .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        if self.working_height < 8 {
            return Err(PipelineError::InvalidConfig("working_height must be >= 8".into()));
        }
        let pct_ok = (0.0..=100.0).contains(&self.stretch_low)
            && (0.0..=100.0).contains(&self.stretch_high)
            && self.stretch_low < self.stretch_high;
        if !pct_ok {
            return Err(PipelineError::InvalidConfig(
                "stretch percentiles need 0 <= low < high <= 100".into(),
            ));
        }
        self.structuring_element()?;
        self.box_filter.validate().map_err(PipelineError::InvalidConfig)?;
        if !(0.0..=1.0).contains(&self.margin_frac) {
            return Err(PipelineError::InvalidConfig("margin_frac must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn structuring_element(&self) -> Result<StructuringElement, PipelineError> {
        StructuringElement::rect(self.se_width, self.se_height)
            .map_err(|e| PipelineError::InvalidConfig(e.to_string()))
    }
}

/// Intermediate images of the preprocessing stages, all at working size
/// except `enhanced`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stages {
    pub enhanced: RgbImage,
    pub working: RgbImage,
    pub gray: GrayImage,
    pub stretched: GrayImage,
    pub threshold: u8,
    pub inverted: bool,
    pub binary: BinaryImage,
    pub dilated: BinaryImage,
    pub masked: GrayImage,
}

impl Stages {
    /// Writes every stage as a PNG into `dir` (`01_enhanced.png` …).
    pub fn dump(&self, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut save = |name: &str, img: imgcore::ImageRef<'_>| -> Result<(), PipelineError> {
            let p = dir.join(name);
            at(Stage::Preprocess, imgcore::save_image(img, &p))?;
            written.push(p);
            Ok(())
        };
        save("01_enhanced.png", (&self.enhanced).into())?;
        save("02_working.png", (&self.working).into())?;
        save("03_gray.png", (&self.gray).into())?;
        save("04_stretched.png", (&self.stretched).into())?;
        save("05_binary.png", (&self.binary).into())?;
        save("06_dilated.png", (&self.dilated).into())?;
        save("07_masked.png", (&self.masked).into())?;
        Ok(written)
    }
}

fn resize_to_height(img: &RgbImage, height: usize) -> Result<RgbImage, ImageError> {
    if img.height() == height {
        return Ok(img.clone());
    }
    let w = ((img.width() as f64 * height as f64 / img.height() as f64).round() as usize).max(1);
    imgcore::resize(img, w, height)
}

/// Enhancement plus working-size resize.
pub fn prepare_working(img: &RgbImage, cfg: &PipelineConfig, workdir: &Path) -> Result<(RgbImage, RgbImage), PipelineError> {
    if cfg.enhance_first {
        let enhanced = at(Stage::Enhance, enhance::enhance(img, &cfg.enhance, workdir))?;
        let working = at(Stage::Resize, resize_to_height(&enhanced, cfg.working_height))?;
        Ok((enhanced, working))
    } else {
        let resized = at(Stage::Resize, resize_to_height(img, cfg.working_height))?;
        let enhanced = at(Stage::Enhance, enhance::enhance(&resized, &cfg.enhance, workdir))?;
        let working = at(Stage::Resize, resize_to_height(&enhanced, cfg.working_height))?;
        Ok((enhanced, working))
    }
}

/// Binarization and morphology on a working-size image.
pub fn preprocess_working(
    working: &RgbImage,
    enhanced: RgbImage,
    cfg: &PipelineConfig,
) -> Result<Stages, PipelineError> {
    let gray = imgcore::to_grayscale(working);
    let stretched = at(
        Stage::Preprocess,
        preprocess::stretch_contrast(&gray, cfg.stretch_low, cfg.stretch_high),
    )?;
    let otsu_input = if cfg.stretch_before_otsu { &stretched } else { &gray };
    let threshold = match preprocess::otsu_threshold(otsu_input) {
        Ok(t) => t,
        Err(PreprocessError::ConstantImage(_)) => return Err(PipelineError::NoGlyphsFound),
        Err(e) => return Err(at::<(), _>(Stage::Preprocess, Err(e)).unwrap_err()),
    };
    let mut binary = preprocess::binarize(otsu_input, threshold);
    let inverted = cfg.auto_invert && binary.count_foreground() * 2 > binary.as_raw().len();
    if inverted {
        binary = binary.inverted();
    }
    let dilated = preprocess::dilate_n(&binary, &cfg.structuring_element()?, cfg.dilate_iterations);
    let masked = at(Stage::Preprocess, preprocess::mask_multiply(&dilated, &stretched))?;
    Ok(Stages {
        enhanced,
        working: working.clone(),
        gray,
        stretched,
        threshold,
        inverted,
        binary,
        dilated,
        masked,
    })
}

/// All preprocessing stages for a raw plate photo.
pub fn preprocess_plate(img: &RgbImage, cfg: &PipelineConfig, workdir: &Path) -> Result<Stages, PipelineError> {
    cfg.validate()?;
    let (enhanced, working) = prepare_working(img, cfg, workdir)?;
    preprocess_working(&working, enhanced, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub line1: Vec<Box2D>,
    pub line2: Vec<Box2D>,
    pub glyphs: Vec<Glyph>,
}

/// Boxes, lines and 32×32 crops from the working image and its mask.
pub fn segment_working(
    working: &RgbImage,
    mask: &BinaryImage,
    cfg: &PipelineConfig,
) -> Result<Segmentation, PipelineError> {
    let boxes = component_boxes(mask, cfg.connectivity);
    let boxes = filter_character_boxes(&boxes, mask.width(), mask.height(), &cfg.box_filter);
    if boxes.is_empty() {
        return Err(PipelineError::NoGlyphsFound);
    }
    let (mut line1, line2) = at(Stage::Segment, segment::split_lines(&boxes, mask.height()))?;
    if cfg.matra_merge {
        let median = segment::median_box_width(&line1, &line2);
        line1 = segment::merge_matra_fragments(&line1, median);
    }
    let glyphs = at(
        Stage::Segment,
        segment::order_and_crop(working, &line1, &line2, cfg.margin_frac),
    )?;
    Ok(Segmentation { line1, line2, glyphs })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlyphReading {
    #[serde(rename = "box")]
    pub source_box: Box2D,
    pub class_token: String,
    pub prob: f64,
}

/// Recognition result; serialized as the documented JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlateReading {
    pub reading: String,
    pub glyphs: Vec<GlyphReading>,
    /// Glyph indices per text line, upper line first.
    pub lines: Vec<Vec<usize>>,
}

impl PlateReading {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("reading serializes")
    }
}

/// Fails unless the network classifies 32×32 RGB glyphs into the plate
/// vocabulary.
pub fn check_model(net: &Network) -> Result<(), PipelineError> {
    if !LabelVocab.matches(net.classes()) || net.input_shape() != [3, GLYPH_SIZE, GLYPH_SIZE] {
        return Err(PipelineError::ModelVocabMismatch);
    }
    Ok(())
}

/// Classifies cropped glyphs and assembles the reading.
pub fn classify_glyphs(glyphs: &[Glyph], net: &Network) -> Result<PlateReading, PipelineError> {
    check_model(net)?;
    let mut reading = String::new();
    let mut out = Vec::with_capacity(glyphs.len());
    let mut lines: Vec<Vec<usize>> = Vec::new();
    for (i, g) in glyphs.iter().enumerate() {
        let (class, probs) = at(Stage::Classify, nnet::predict(net, &g.image))?;
        reading.push_str(transliterate(class)?);
        out.push(GlyphReading {
            source_box: g.source_box,
            class_token: net.classes()[class].clone(),
            prob: probs[class],
        });
        if lines.len() <= g.line_index {
            lines.resize(g.line_index + 1, Vec::new());
        }
        lines[g.line_index].push(i);
    }
    Ok(PlateReading {
        reading,
        glyphs: out,
        lines,
    })
}

/// Recognition starting from a dumped working-size image.
pub fn recognize_working(working: &RgbImage, net: &Network, cfg: &PipelineConfig) -> Result<PlateReading, PipelineError> {
    cfg.validate()?;
    check_model(net)?;
    let stages = preprocess_working(working, working.clone(), cfg)?;
    let seg = segment_working(&stages.working, &stages.dilated, cfg)?;
    classify_glyphs(&seg.glyphs, net)
}

/// Full recognition of a plate photo. `workdir` holds temporary files of
/// the external enhancer.
pub fn recognize_plate_in(
    img: &RgbImage,
    net: &Network,
    cfg: &PipelineConfig,
    workdir: &Path,
) -> Result<PlateReading, PipelineError> {
    check_model(net)?;
    let stages = preprocess_plate(img, cfg, workdir)?;
    let seg = segment_working(&stages.working, &stages.dilated, cfg)?;
    classify_glyphs(&seg.glyphs, net)
}

pub fn recognize_plate(img: &RgbImage, net: &Network, cfg: &PipelineConfig) -> Result<PlateReading, PipelineError> {
    recognize_plate_in(img, net, cfg, &std::env::temp_dir())
}

/// Where experiment data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Directory(PathBuf),
    Synthetic {
        seed: u64,
        train: usize,
        valid: usize,
        test: usize,
    },
}

impl DataSource {
    pub fn load(&self) -> Result<DatasetSplits, PipelineError> {
        Ok(match self {
            Self::Directory(p) => dataset::load_dataset(p)?,
            Self::Synthetic {
                seed,
                train,
                valid,
                test,
            } => dataset::synth_glyphs(*seed, *train, *valid, *test),
        })
    }
}

/// Published reference figures for the plain CNN on real plate glyphs,
/// printed next to experiment results for comparison.
pub const REFERENCE_BASELINE: &str = "reference baseline (CNN, real plates): accuracy 92.38%  precision 0.9667  recall 0.9162  F1 0.9476";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub architecture: Architecture,
    pub network: Network,
    pub history: TrainHistory,
    pub confusion: ConfusionMatrix,
    pub metrics: ClassMetrics,
    pub test_samples: usize,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    architecture: &'a str,
    test_samples: usize,
    metrics: &'a ClassMetrics,
}

impl ExperimentReport {
    pub fn summary(&self) -> String {
        let m = &self.metrics;
        format!(
            "{}: test accuracy {:.2}%  precision {:.4}  recall {:.4}  F1 {:.4} (macro, {} test samples)\n{}",
            self.architecture.name(),
            100.0 * m.accuracy,
            m.macro_precision,
            m.macro_recall,
            m.macro_f1,
            self.test_samples,
            REFERENCE_BASELINE
        )
    }

    pub fn metrics_json(&self) -> String {
        serde_json::to_string_pretty(&ReportJson {
            architecture: self.architecture.name(),
            test_samples: self.test_samples,
            metrics: &self.metrics,
        })
        .expect("report serializes")
    }

    /// Writes `model.bin`, `metrics.json`, `confusion.csv` and `history.csv`.
    pub fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        std::fs::create_dir_all(dir)?;
        nnet::save_model(&self.network, dir.join("model.bin"))?;
        std::fs::write(dir.join("metrics.json"), self.metrics_json())?;
        std::fs::write(
            dir.join("confusion.csv"),
            self.confusion.to_csv(self.network.classes()),
        )?;
        std::fs::write(dir.join("history.csv"), self.history.to_csv())?;
        Ok(())
    }
}

fn samples(set: &[dataset::LabeledGlyph]) -> Vec<Sample> {
    set.iter().map(|g| g.to_sample()).collect()
}

/// Trains `arch` (weights drawn from `cfg.seed`) and evaluates on the test split.
pub fn run_experiment(
    data: &DatasetSplits,
    arch: Architecture,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<ExperimentReport, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let net = Network::build(arch, LabelVocab.tokens(), &mut rng);
    let train = samples(&data.train);
    let valid = samples(&data.valid);
    let (network, history) = nnet::train_with_progress(net, &train, &valid, cfg, on_epoch)?;
    let test = samples(&data.test);
    let mut pairs = Vec::with_capacity(test.len());
    for s in &test {
        pairs.push((s.label, network.forward(&s.input)?.argmax()));
    }
    let confusion = evalkit::confusion_matrix(&pairs, LabelVocab.len())?;
    let metrics = evalkit::metrics(&confusion)?;
    Ok(ExperimentReport {
        architecture: arch,
        network,
        history,
        confusion,
        metrics,
        test_samples: test.len(),
    })
}
