//! Labeled text corpora: examples, label sets, splits and TSV I/O.

mod synth;
mod tokenize;
mod vocab;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{self, AugmentMethod};
use crate::error::{Error, Result};
use crate::math::derived_rng;

pub use synth::{synth_corpus, PlantedWords, SynthConfig, SynthCorpus};
pub use tokenize::{detokenize, norms, remove_positions, tokenize, Token};
pub use vocab::{build_vocab, Vocabulary, PAD, UNK};

/// Name of the sentinel label given to augmented examples.
pub const AUG_LABEL: &str = "AUG";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label(pub String);

impl Label {
    pub fn new(name: impl Into<String>) -> Self {
        Label(name.into())
    }

    pub fn aug() -> Self {
        Label(AUG_LABEL.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Base labels in declared order plus the optional AUG sentinel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    base: Vec<Label>,
    aug: Option<Label>,
}

impl LabelSet {
    pub fn new<S: AsRef<str>>(base: &[S]) -> Result<Self> {
        let base: Vec<Label> = base.iter().map(|s| Label::new(s.as_ref())).collect();
        if base.len() < 2 {
            return Err(Error::Config("a label set needs at least two base labels".into()));
        }
        if base.iter().any(|l| l.as_str() == AUG_LABEL) {
            return Err(Error::Config(format!("`{AUG_LABEL}` is reserved")));
        }
        for (i, l) in base.iter().enumerate() {
            if base[..i].contains(l) {
                return Err(Error::Config(format!("duplicate label `{l}`")));
            }
        }
        Ok(LabelSet { base, aug: None })
    }

    pub fn with_aug(mut self) -> Self {
        self.aug = Some(Label::aug());
        self
    }

    pub fn base(&self) -> &[Label] {
        &self.base
    }

    pub fn aug(&self) -> Option<&Label> {
        self.aug.as_ref()
    }

    pub fn has_aug(&self) -> bool {
        self.aug.is_some()
    }

    /// Base labels followed by AUG when present; this is the head order of a model.
    pub fn all(&self) -> Vec<Label> {
        self.base.iter().cloned().chain(self.aug.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.base.len() + usize::from(self.aug.is_some())
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, label: &Label) -> Option<usize> {
        self.base.iter().position(|l| l == label).or_else(|| {
            self.aug
                .as_ref()
                .filter(|a| *a == label)
                .map(|_| self.base.len())
        })
    }

    pub fn contains(&self, label: &Label) -> bool {
        self.index_of(label).is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    Original,
    AugEk,
    AugAdv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn of_id(id: &str) -> Option<Split> {
        let head = id.split('-').next()?;
        Split::ALL.into_iter().find(|s| s.name() == head)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub text: String,
    pub tokens: Vec<Token>,
    pub label: Label,
    pub origin: Origin,
    pub source_id: Option<String>,
    /// Source positions deleted to build an augmented example; empty otherwise.
    #[serde(default)]
    pub removed_positions: Vec<usize>,
}

impl Example {
    pub fn original(id: impl Into<String>, text: &str, label: Label) -> Result<Self> {
        Ok(Example {
            id: id.into(),
            text: text.trim_end().to_string(),
            tokens: tokenize(text)?,
            label,
            origin: Origin::Original,
            source_id: None,
            removed_positions: Vec::new(),
        })
    }

    pub fn words(&self) -> Vec<&str> {
        norms(&self.tokens)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
    pub labels: LabelSet,
}

impl Dataset {
    pub fn empty(labels: LabelSet) -> Self {
        Dataset {
            train: Vec::new(),
            dev: Vec::new(),
            test: Vec::new(),
            labels,
        }
    }

    pub fn split(&self, split: Split) -> &[Example] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut Vec<Example> {
        match split {
            Split::Train => &mut self.train,
            Split::Dev => &mut self.dev,
            Split::Test => &mut self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn find(&self, id: &str) -> Option<(Split, &Example)> {
        Split::ALL.into_iter().find_map(|s| {
            self.split(s)
                .iter()
                .find(|e| e.id == id)
                .map(|e| (s, e))
        })
    }

    pub fn count_augmented(&self, split: Split) -> usize {
        self.split(split)
            .iter()
            .filter(|e| e.origin != Origin::Original)
            .count()
    }

    /// Checks the structural invariants every dataset in the toolkit must satisfy.
    pub fn validate(&self) -> Result<()> {
        for split in Split::ALL {
            for e in self.split(split) {
                if e.tokens.is_empty() {
                    return Err(Error::Config(format!("example `{}` has no tokens", e.id)));
                }
                if (e.origin == Origin::Original) != e.source_id.is_none() {
                    return Err(Error::Config(format!(
                        "example `{}` has inconsistent origin/source",
                        e.id
                    )));
                }
                if !self.labels.contains(&e.label) {
                    return Err(Error::Config(format!(
                        "example `{}` has label `{}` outside the label set",
                        e.id, e.label
                    )));
                }
                if split == Split::Test && e.origin != Origin::Original {
                    return Err(Error::TestSplitSource(e.id.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        format!(
            "train {} (+{} aug), dev {} (+{} aug), test {}",
            self.train.len() - self.count_augmented(Split::Train),
            self.count_augmented(Split::Train),
            self.dev.len() - self.count_augmented(Split::Dev),
            self.count_augmented(Split::Dev),
            self.test.len()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Tsv,
}

pub fn split_path(prefix: &Path, split: Split) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(format!(".{}.tsv", split.name()));
    PathBuf::from(name)
}

pub fn augment_log_path(prefix: &Path) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(".augment.log");
    PathBuf::from(name)
}

/// Parses one `label<TAB>text` split file.
pub fn read_split(path: &Path, labels: &LabelSet, split: Split) -> Result<Vec<Example>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_split(&content, &path.display().to_string(), labels, split)
}

pub(crate) fn parse_split(
    content: &str,
    source: &str,
    labels: &LabelSet,
    split: Split,
) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        let lineno = lineno + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let (label, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(source, lineno, "expected `label<TAB>text`"))?;
        let label = Label::new(label.trim());
        if !labels.contains(&label) && label.as_str() != AUG_LABEL {
            return Err(Error::UnknownLabel {
                label: label.0,
                line: lineno,
            });
        }
        let id = format!("{}-{}", split.name(), out.len());
        let ex = Example::original(id, text, label)
            .map_err(|_| Error::parse(source, lineno, "empty text"))?;
        out.push(ex);
    }
    Ok(out)
}

/// Loads `<prefix>.{train,dev,test}.tsv`.
///
/// A missing dev file is replaced by a seeded 90/10 split of train. Lines
/// labeled `AUG` are matched, in order, against `<prefix>.augment.log`.
pub fn load_corpus<S: AsRef<str>>(
    prefix: &Path,
    format: CorpusFormat,
    base_labels: &[S],
    seed: u64,
) -> Result<Dataset> {
    let CorpusFormat::Tsv = format;
    let labels = LabelSet::new(base_labels)?;
    let mut ds = Dataset::empty(labels.clone());
    ds.train = read_split(&split_path(prefix, Split::Train), &labels, Split::Train)?;
    let dev_path = split_path(prefix, Split::Dev);
    ds.dev = if dev_path.exists() {
        read_split(&dev_path, &labels, Split::Dev)?
    } else {
        carve_dev(&mut ds.train, seed)
    };
    ds.test = read_split(&split_path(prefix, Split::Test), &labels, Split::Test)?;
    if ds.test.iter().any(|e| e.label.as_str() == AUG_LABEL) {
        return Err(Error::TestSplitSource("test split contains AUG lines".into()));
    }

    let has_aug = ds
        .train
        .iter()
        .chain(&ds.dev)
        .any(|e| e.label.as_str() == AUG_LABEL);
    if has_aug {
        let log_path = augment_log_path(prefix);
        let content = fs::read_to_string(&log_path).map_err(|e| Error::io(&log_path, e))?;
        let entries = augment::parse_log(&content)?;
        attach_augmentations(&mut ds, &entries)?;
        ds.labels = ds.labels.with_aug();
    }
    ds.validate()?;
    log::info!("loaded corpus {}: {}", prefix.display(), ds.summary());
    Ok(ds)
}

fn carve_dev(train: &mut Vec<Example>, seed: u64) -> Vec<Example> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut derived_rng(seed, "dev-split", 0));
    let n_dev = train.len() / 10;
    let mut is_dev = vec![false; train.len()];
    for &i in &order[..n_dev] {
        is_dev[i] = true;
    }
    let all = std::mem::take(train);
    let mut dev = Vec::with_capacity(n_dev);
    for (i, e) in all.into_iter().enumerate() {
        if is_dev[i] {
            dev.push(e);
        } else {
            train.push(e);
        }
    }
    for (i, e) in train.iter_mut().enumerate() {
        e.id = format!("train-{i}");
    }
    for (i, e) in dev.iter_mut().enumerate() {
        e.id = format!("dev-{i}");
    }
    dev
}

/// Rewrites AUG lines of a freshly-read dataset into augmented examples,
/// verifying each against its source.
fn attach_augmentations(ds: &mut Dataset, entries: &[augment::LogEntry]) -> Result<()> {
    for split in [Split::Train, Split::Dev] {
        let mut wanted: Vec<&augment::LogEntry> = entries
            .iter()
            .filter(|e| Split::of_id(&e.source_id) == Some(split))
            .collect();
        wanted.reverse();
        let examples = ds.split_mut(split);
        let originals: Vec<Example> = examples
            .iter()
            .filter(|e| e.label.as_str() != AUG_LABEL)
            .cloned()
            .collect();
        let mut renumber = 0;
        for e in examples.iter_mut() {
            if e.label.as_str() != AUG_LABEL {
                e.id = format!("{}-{renumber}", split.name());
                renumber += 1;
                continue;
            }
            let entry = wanted.pop().ok_or_else(|| {
                Error::Config(format!("{} AUG line without augmentation log entry", split.name()))
            })?;
            let source = originals
                .iter()
                .find(|o| o.id == entry.source_id)
                .ok_or_else(|| Error::Config(format!("unknown source `{}`", entry.source_id)))?;
            let expected = remove_positions(&source.tokens, &entry.removed_positions);
            if norms(&expected) != norms(&e.tokens) {
                return Err(Error::Config(format!(
                    "AUG line for `{}` does not match its augmentation log entry",
                    entry.source_id
                )));
            }
            e.id = augment::augmented_id(&entry.source_id, entry.method);
            e.origin = match entry.method {
                AugmentMethod::Ek => Origin::AugEk,
                AugmentMethod::Adv => Origin::AugAdv,
            };
            e.source_id = Some(entry.source_id.clone());
            e.removed_positions = entry.removed_positions.clone();
        }
        if !wanted.is_empty() {
            return Err(Error::Config(format!(
                "augmentation log has {} unmatched {} entries",
                wanted.len(),
                split.name()
            )));
        }
    }
    Ok(())
}

pub fn render_split(examples: &[Example]) -> String {
    let mut out = String::new();
    for e in examples {
        out.push_str(e.label.as_str());
        out.push('\t');
        out.push_str(&e.text);
        out.push('\n');
    }
    out
}

/// Writes the three split files (and the augmentation log when needed).
pub fn write_corpus(ds: &Dataset, prefix: &Path) -> Result<()> {
    if let Some(dir) = prefix.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    for split in Split::ALL {
        let path = split_path(prefix, split);
        fs::write(&path, render_split(ds.split(split))).map_err(|e| Error::io(&path, e))?;
    }
    let entries = augment::log_entries(ds);
    if !entries.is_empty() {
        let path = augment_log_path(prefix);
        fs::write(&path, augment::render_log(&entries)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> LabelSet {
        LabelSet::new(&["pos", "neg"]).unwrap()
    }

    #[test]
    fn three_line_split() {
        let content = "pos\tgreat fun\nneg\tdull\n# comment\npos\tnice one\n";
        let ex = parse_split(content, "mem", &labels(), Split::Train).unwrap();
        assert_eq!(ex.len(), 3);
        assert!(ex.iter().all(|e| e.origin == Origin::Original));
        assert_eq!(ex[2].id, "train-2");
    }

    #[test]
    fn missing_tab_names_the_line() {
        let err = parse_split("pos\tok\nneg no tab\n", "f.tsv", &labels(), Split::Train)
            .unwrap_err()
            .to_string();
        assert!(err.contains("f.tsv:2"), "{err}");
    }

    #[test]
    fn unknown_label_is_rejected() {
        let err = parse_split("meh\ttext\n", "f", &labels(), Split::Train).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { line: 1, .. }));
    }

    #[test]
    fn label_set_rules() {
        assert!(LabelSet::new(&["pos"]).is_err());
        assert!(LabelSet::new(&["pos", "AUG"]).is_err());
        let ls = labels().with_aug();
        assert_eq!(ls.len(), 3);
        assert_eq!(ls.index_of(&Label::aug()), Some(2));
        assert_eq!(ls.index_of(&Label::new("neg")), Some(1));
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("toy");
        let files = [
            "pos\tmichel piccoli's moving  performance\nneg\tthe cat sat .\n",
            "neg\tno, really\n",
            "pos\tI like this movie\n",
        ];
        for (split, body) in Split::ALL.iter().zip(files) {
            fs::write(split_path(&prefix, *split), body).unwrap();
        }
        let ds = load_corpus(&prefix, CorpusFormat::Tsv, &["pos", "neg"], 0).unwrap();
        let out = dir.path().join("copy");
        write_corpus(&ds, &out).unwrap();
        for (split, body) in Split::ALL.iter().zip(files) {
            assert_eq!(fs::read_to_string(split_path(&out, *split)).unwrap(), body);
        }
    }

    #[test]
    fn missing_dev_is_carved_from_train() {
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("mr");
        let train: String = (0..50).map(|i| format!("pos\tword{i}\n")).collect();
        fs::write(split_path(&prefix, Split::Train), train).unwrap();
        fs::write(split_path(&prefix, Split::Test), "neg\tbad\n").unwrap();
        let ds = load_corpus(&prefix, CorpusFormat::Tsv, &["pos", "neg"], 3).unwrap();
        assert_eq!(ds.train.len(), 45);
        assert_eq!(ds.dev.len(), 5);
        let again = load_corpus(&prefix, CorpusFormat::Tsv, &["pos", "neg"], 3).unwrap();
        assert_eq!(ds, again);
    }
}
