//! Label vocabulary, on-disk dataset loading and the synthetic generator.
//!
//! On disk a dataset is `<root>/{train,valid,test}/<class_token>/*.{png,ppm,pgm}`.
//! An optional `<root>/labels.map` holds `dirname=class_token` lines for
//! directories that are not named by their token.

mod synth;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::imgcore::{self, ImageError, RgbImage};
use crate::nnet::{image_to_tensor, Sample};
use crate::segment::GLYPH_SIZE;

pub use synth::{
    random_plate_spec, render_glyph, render_plate, synth_glyphs, synth_plates, GlyphJitter, PlateSpec, PlateStyle,
    RenderedPlate,
};

/// Class tokens in index order: digits, registration letters, city names.
const TOKENS: [&str; 17] = [
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "ka", "ga", "jha", "la", "dhaka", "narayanganj", "metro",
];

/// Text emitted for each class in an assembled plate string.
const TRANSLITERATIONS: [&str; 17] = [
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "ka", "ga", "jha", "la", "dhaka", "narayanganj", "matro",
];

pub const NUM_CLASSES: usize = 17;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("label {0} out of range (vocabulary has {NUM_CLASSES} classes)")]
    LabelOutOfRange(usize),
    #[error("dataset split directory missing: {0}")]
    MissingSplit(PathBuf),
    #[error("directory {0} does not name a known class")]
    UnknownClassDir(PathBuf),
    #[error("cannot read image {0}: {1}")]
    UnreadableImage(PathBuf, ImageError),
    #[error("bad labels.map line {0}: {1}")]
    BadLabelsMap(usize, String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// The fixed 17-class vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LabelVocab;

impl LabelVocab {
    pub fn len(&self) -> usize {
        NUM_CLASSES
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> Vec<String> {
        TOKENS.iter().map(|s| s.to_string()).collect()
    }

    pub fn token(&self, label: usize) -> Result<&'static str, DatasetError> {
        TOKENS.get(label).copied().ok_or(DatasetError::LabelOutOfRange(label))
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        TOKENS.iter().position(|t| *t == token)
    }

    pub fn is_digit(&self, label: usize) -> bool {
        label < 10
    }

    /// Whether a network's class list is exactly this vocabulary, in order.
    pub fn matches(&self, classes: &[String]) -> bool {
        classes.len() == NUM_CLASSES && classes.iter().zip(TOKENS).all(|(a, b)| a == b)
    }
}

pub fn transliterate(label: usize) -> Result<&'static str, DatasetError> {
    TRANSLITERATIONS
        .get(label)
        .copied()
        .ok_or(DatasetError::LabelOutOfRange(label))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledGlyph {
    pub image: RgbImage,
    pub label: usize,
}

impl LabeledGlyph {
    pub fn to_sample(&self) -> Sample {
        Sample {
            input: image_to_tensor(&self.image),
            label: self.label,
        }
    }
}

/// Per-class image counts for each split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitCounts {
    pub train: [usize; NUM_CLASSES],
    pub valid: [usize; NUM_CLASSES],
    pub test: [usize; NUM_CLASSES],
}

impl SplitCounts {
    fn from_splits(train: &[LabeledGlyph], valid: &[LabeledGlyph], test: &[LabeledGlyph]) -> Self {
        let tally = |set: &[LabeledGlyph]| {
            let mut c = [0usize; NUM_CLASSES];
            for g in set {
                c[g.label] += 1;
            }
            c
        };
        Self {
            train: tally(train),
            valid: tally(valid),
            test: tally(test),
        }
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<12} {:>6} {:>6} {:>6}\n", "class", "train", "valid", "test");
        for (i, t) in TOKENS.iter().enumerate() {
            s.push_str(&format!("{:<12} {:>6} {:>6} {:>6}\n", t, self.train[i], self.valid[i], self.test[i]));
        }
        let sum = |a: &[usize; NUM_CLASSES]| a.iter().sum::<usize>();
        s.push_str(&format!(
            "{:<12} {:>6} {:>6} {:>6}\n",
            "total",
            sum(&self.train),
            sum(&self.valid),
            sum(&self.test)
        ));
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplits {
    pub train: Vec<LabeledGlyph>,
    pub valid: Vec<LabeledGlyph>,
    pub test: Vec<LabeledGlyph>,
    pub counts: SplitCounts,
}

impl DatasetSplits {
    pub fn new(train: Vec<LabeledGlyph>, valid: Vec<LabeledGlyph>, test: Vec<LabeledGlyph>) -> Self {
        let counts = SplitCounts::from_splits(&train, &valid, &test);
        Self {
            train,
            valid,
            test,
            counts,
        }
    }

    /// Writes the splits in the loader's directory layout.
    pub fn write(&self, root: &Path) -> Result<(), DatasetError> {
        for (name, set) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            for t in TOKENS {
                std::fs::create_dir_all(root.join(name).join(t))?;
            }
            let mut per_class = [0usize; NUM_CLASSES];
            for g in set.iter() {
                let idx = per_class[g.label];
                per_class[g.label] += 1;
                let path = root.join(name).join(TOKENS[g.label]).join(format!("{:05}.png", idx));
                imgcore::save_image(&g.image, path)?;
            }
        }
        Ok(())
    }
}

const SPLITS: [&str; 3] = ["train", "valid", "test"];

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("png" | "ppm" | "pgm")
    )
}

fn read_labels_map(root: &Path) -> Result<BTreeMap<String, usize>, DatasetError> {
    let mut map = BTreeMap::new();
    let path = root.join("labels.map");
    if !path.exists() {
        return Ok(map);
    }
    let text = std::fs::read_to_string(path)?;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (dir, token) = line
            .split_once('=')
            .ok_or_else(|| DatasetError::BadLabelsMap(n + 1, "expected dirname=class_token".into()))?;
        let label = LabelVocab
            .index_of(token.trim())
            .ok_or_else(|| DatasetError::BadLabelsMap(n + 1, format!("unknown class token `{}`", token.trim())))?;
        map.insert(dir.trim().to_string(), label);
    }
    Ok(map)
}

fn load_split(dir: &Path, remap: &BTreeMap<String, usize>) -> Result<Vec<LabeledGlyph>, DatasetError> {
    let mut classes: Vec<(usize, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if !path.is_dir() {
            continue;
        }
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let label = remap
            .get(&name)
            .copied()
            .or_else(|| LabelVocab.index_of(&name))
            .ok_or_else(|| DatasetError::UnknownClassDir(path.clone()))?;
        classes.push((label, path));
    }
    classes.sort();
    let mut out = Vec::new();
    for (label, class_dir) in classes {
        let mut files: Vec<PathBuf> = std::fs::read_dir(&class_dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        files.retain(|p| p.is_file() && is_image_file(p));
        files.sort();
        for f in files {
            let img = imgcore::load_image(&f).map_err(|e| DatasetError::UnreadableImage(f.clone(), e))?;
            let img = if img.width() == GLYPH_SIZE && img.height() == GLYPH_SIZE {
                img
            } else {
                imgcore::resize(&img, GLYPH_SIZE, GLYPH_SIZE)?
            };
            out.push(LabeledGlyph { image: img, label });
        }
    }
    Ok(out)
}

/// Loads all three splits, resizing images to 32×32 where needed.
/// Samples are ordered by class index, then file name.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<DatasetSplits, DatasetError> {
    let root = root.as_ref();
    let remap = read_labels_map(root)?;
    let mut sets = Vec::with_capacity(3);
    for split in SPLITS {
        let dir = root.join(split);
        if !dir.is_dir() {
            return Err(DatasetError::MissingSplit(dir));
        }
        sets.push(load_split(&dir, &remap)?);
    }
    let test = sets.pop().expect("three splits");
    let valid = sets.pop().expect("three splits");
    let train = sets.pop().expect("three splits");
    Ok(DatasetSplits::new(train, valid, test))
}
