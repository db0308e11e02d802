//! Domain types shared across the engine.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// Descriptor text that stands for "no descriptors": the class is scored by
/// its bare template prompt instead.
pub const BARE_PLACEHOLDER: &str = "{classname}";

/// Name of a class. Compared byte-wise and case-sensitively.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ClassLabel(String);

impl ClassLabel {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(Error::Validation("class label is empty".into()));
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for ClassLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ClassLabel::new(s).map_err(serde::de::Error::custom)
    }
}

/// One line of visual description attached to a class.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Descriptor(String);

impl Descriptor {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::Validation("descriptor is empty".into()));
        }
        if text.contains(['\n', '\r']) {
            return Err(Error::Validation(format!(
                "descriptor contains a newline: {text:?}"
            )));
        }
        Ok(Self(text))
    }

    /// The placeholder descriptor that selects bare-template scoring.
    pub fn bare() -> Self {
        Self(BARE_PLACEHOLDER.to_string())
    }

    pub fn is_bare(&self) -> bool {
        self.0 == BARE_PLACEHOLDER
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Descriptor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Descriptor::new(s).map_err(serde::de::Error::custom)
    }
}

/// Class label to ordered descriptor list. On disk: a JSON object mapping
/// class names to arrays of strings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DescriptorSet {
    entries: BTreeMap<ClassLabel, Vec<Descriptor>>,
}

/// A single problem found by [`validate_descriptor_set`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MissingClass(ClassLabel),
    EmptyList(ClassLabel),
    Duplicate { class: ClassLabel, text: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingClass(c) => write!(f, "missing {c}"),
            Violation::EmptyList(c) => write!(f, "empty list for {c}"),
            Violation::Duplicate { class, text } => write!(f, "duplicate in {class}: {text:?}"),
        }
    }
}

impl DescriptorSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a set from string pairs, validating every label and descriptor.
    pub fn from_pairs<C, D, I>(pairs: impl IntoIterator<Item = (C, I)>) -> Result<Self>
    where
        C: Into<String>,
        D: Into<String>,
        I: IntoIterator<Item = D>,
    {
        let mut set = Self::new();
        for (class, descs) in pairs {
            let descs = descs
                .into_iter()
                .map(Descriptor::new)
                .collect::<Result<Vec<_>>>()?;
            set.insert(ClassLabel::new(class)?, descs);
        }
        Ok(set)
    }

    /// Every class scored by its bare template prompt.
    pub fn bare(classes: &[ClassLabel]) -> Self {
        let entries = classes
            .iter()
            .map(|c| (c.clone(), vec![Descriptor::bare()]))
            .collect();
        Self { entries }
    }

    pub fn insert(&mut self, class: ClassLabel, descriptors: Vec<Descriptor>) {
        self.entries.insert(class, descriptors);
    }

    pub fn get(&self, class: &ClassLabel) -> Option<&[Descriptor]> {
        self.entries.get(class).map(Vec::as_slice)
    }

    pub fn contains(&self, class: &ClassLabel) -> bool {
        self.entries.contains_key(class)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Classes in ascending name order.
    pub fn classes(&self) -> impl Iterator<Item = &ClassLabel> {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ClassLabel, &[Descriptor])> {
        self.entries.iter().map(|(c, d)| (c, d.as_slice()))
    }

    /// Sub-set containing only the given classes (those present).
    pub fn restrict(&self, classes: &[ClassLabel]) -> Self {
        let entries = classes
            .iter()
            .filter_map(|c| self.entries.get(c).map(|d| (c.clone(), d.clone())))
            .collect();
        Self { entries }
    }

    /// Copy of `self` with every class of `part` replaced by `part`'s list.
    pub fn splice(&self, part: &DescriptorSet) -> Self {
        let mut out = self.clone();
        for (c, d) in &part.entries {
            out.entries.insert(c.clone(), d.clone());
        }
        out
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("descriptor set: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json_pretty();
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Checks that every class in `classes` has a non-empty, duplicate-free list.
///
/// Violations are reported in class-name order: for each class, a missing or
/// empty entry, then duplicates in list order.
pub fn validate_descriptor_set(
    ds: &DescriptorSet,
    classes: &[ClassLabel],
) -> std::result::Result<(), Vec<Violation>> {
    let wanted: BTreeSet<&ClassLabel> = classes.iter().collect();
    let mut violations = Vec::new();
    for class in wanted {
        match ds.get(class) {
            None => violations.push(Violation::MissingClass(class.clone())),
            Some([]) => violations.push(Violation::EmptyList(class.clone())),
            Some(list) => {
                let mut seen = BTreeSet::new();
                for d in list {
                    if !seen.insert(d.as_str()) {
                        violations.push(Violation::Duplicate {
                            class: class.clone(),
                            text: d.as_str().to_string(),
                        });
                    }
                }
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// An image (ground truth label) or a text prompt (owning class) with its vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbedding {
    pub label: ClassLabel,
    pub key: String,
    pub vector: Vec<f32>,
}

/// One entry of a confusion row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionEntry {
    pub class: ClassLabel,
    pub count: u32,
}

/// Accuracy and improved-confusion summary for one descriptor set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualFeedback {
    pub overall_accuracy: f64,
    pub per_class_accuracy: BTreeMap<ClassLabel, f64>,
    pub confusion_rows: BTreeMap<ClassLabel, Vec<ConfusionEntry>>,
}

impl VisualFeedback {
    /// Keeps only the rows and per-class accuracies of `classes`.
    pub fn restrict_rows(&self, classes: &[ClassLabel]) -> Self {
        let keep: BTreeSet<&ClassLabel> = classes.iter().collect();
        Self {
            overall_accuracy: self.overall_accuracy,
            per_class_accuracy: self
                .per_class_accuracy
                .iter()
                .filter(|(c, _)| keep.contains(c))
                .map(|(c, a)| (c.clone(), *a))
                .collect(),
            confusion_rows: self
                .confusion_rows
                .iter()
                .filter(|(c, _)| keep.contains(c))
                .map(|(c, r)| (c.clone(), r.clone()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub class: ClassLabel,
    pub descriptor: Descriptor,
    pub iteration: u32,
    pub polarity: Polarity,
}

/// How descriptor prompts are rendered for the text encoder.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    /// `"{name}, which {descriptor}"`
    #[default]
    Plain,
    /// `"A photo of a {name}, which {descriptor}"`
    PhotoPrefix,
}

/// Which images and classes judge a cluster's candidates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionScope {
    /// Images of the cluster's classes, classified among the cluster's classes.
    #[default]
    Cluster,
    /// All images, classified among all classes.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_iterations: u32,
    pub n_init: usize,
    pub n_change: usize,
    pub n_mutants: usize,
    pub lambda: f64,
    pub top_m: usize,
    pub cluster_target_size: usize,
    pub temperature: f64,
    pub rng_seed: u64,
    pub max_tokens: u32,
    pub prompt_style: PromptStyle,
    pub selection_scope: SelectionScope,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_iterations: 10,
            n_init: 30,
            n_change: 15,
            n_mutants: 4,
            lambda: 0.9,
            top_m: 3,
            cluster_target_size: 10,
            temperature: 1.0,
            rng_seed: 0,
            max_tokens: 4096,
            prompt_style: PromptStyle::Plain,
            selection_scope: SelectionScope::Cluster,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.n_init == 0 || self.n_change == 0 || self.n_mutants == 0 {
            return bad("n_init, n_change and n_mutants must be positive");
        }
        if self.n_change > self.n_init {
            return bad("n_change must not exceed n_init");
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("lambda must lie in (0, 1]");
        }
        if self.top_m == 0 {
            return bad("top_m must be at least 1");
        }
        if self.cluster_target_size == 0 {
            return bad("cluster_target_size must be positive");
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return bad("temperature must be non-negative");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        Ok(())
    }
}
