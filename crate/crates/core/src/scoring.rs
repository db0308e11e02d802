//! Descriptor-ensemble classification and the feedback computed from it.
//!
//! A class score is the mean cosine between the image and every descriptor
//! prompt of the class. All vectors are unit length, so cosine is a dot
//! product. Sums are accumulated in f64 in descriptor-list order.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::embed::TextEmbeddings;
use crate::error::{Error, Result};
use crate::types::{
    ClassLabel, ConfusionEntry, Descriptor, DescriptorSet, LabeledEmbedding, PromptStyle,
    VisualFeedback,
};

/// Text fed to the text encoder for one (class, descriptor) pair.
///
/// The bare placeholder renders the plain class template.
pub fn render_prompt(class: &ClassLabel, descriptor: &Descriptor, style: PromptStyle) -> String {
    if descriptor.is_bare() {
        return format!("A photo of a {class}");
    }
    match style {
        PromptStyle::Plain => format!("{class}, which {descriptor}"),
        PromptStyle::PhotoPrefix => format!("A photo of a {class}, which {descriptor}"),
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// A descriptor set with every prompt resolved to its embedding.
pub struct PreparedSet<'a> {
    classes: Vec<ClassLabel>,
    prompts: Vec<Vec<&'a [f32]>>,
}

impl<'a> PreparedSet<'a> {
    pub fn new(ds: &DescriptorSet, emb: &'a TextEmbeddings, style: PromptStyle) -> Result<Self> {
        let mut classes = Vec::with_capacity(ds.len());
        let mut prompts = Vec::with_capacity(ds.len());
        for (class, descs) in ds.iter() {
            if descs.is_empty() {
                return Err(Error::Validation(format!("empty list for {class}")));
            }
            let vecs = descs
                .iter()
                .map(|d| emb.get(&render_prompt(class, d, style)))
                .collect::<Result<Vec<_>>>()?;
            classes.push(class.clone());
            prompts.push(vecs);
        }
        Ok(Self { classes, prompts })
    }

    /// Classes in ascending name order; score vectors are aligned to this.
    pub fn classes(&self) -> &[ClassLabel] {
        &self.classes
    }

    pub fn position(&self, class: &ClassLabel) -> Option<usize> {
        self.classes.binary_search(class).ok()
    }

    pub fn scores(&self, image: &[f32]) -> Result<Vec<f64>> {
        if let Some(first) = self.prompts.first().and_then(|p| p.first()) {
            if first.len() != image.len() {
                return Err(Error::Data(format!(
                    "image dimension {} does not match text dimension {}",
                    image.len(),
                    first.len()
                )));
            }
        }
        Ok(self
            .prompts
            .iter()
            .map(|vecs| {
                let total: f64 = vecs.iter().map(|v| dot(image, v)).sum();
                total / vecs.len() as f64
            })
            .collect())
    }

    /// Index of the best class; ties go to the smaller class name.
    pub fn argmax(scores: &[f64]) -> usize {
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = i;
            }
        }
        best
    }
}

/// Mean descriptor cosine per class.
pub fn class_scores(
    image: &LabeledEmbedding,
    ds: &DescriptorSet,
    emb: &TextEmbeddings,
    style: PromptStyle,
) -> Result<BTreeMap<ClassLabel, f64>> {
    let prepared = PreparedSet::new(ds, emb, style)?;
    let scores = prepared.scores(&image.vector)?;
    Ok(prepared.classes.into_iter().zip(scores).collect())
}

pub fn classify(
    image: &LabeledEmbedding,
    ds: &DescriptorSet,
    emb: &TextEmbeddings,
    style: PromptStyle,
) -> Result<ClassLabel> {
    let prepared = PreparedSet::new(ds, emb, style)?;
    if prepared.classes.is_empty() {
        return Err(Error::Validation("descriptor set has no classes".into()));
    }
    let scores = prepared.scores(&image.vector)?;
    Ok(prepared.classes[PreparedSet::argmax(&scores)].clone())
}

/// Per-image score vectors plus ground-truth positions, the raw material of
/// every metric below.
struct Scored<'a> {
    prepared: PreparedSet<'a>,
    rows: Vec<(usize, Vec<f64>)>,
}

fn score_images<'a>(
    images: &[LabeledEmbedding],
    ds: &DescriptorSet,
    emb: &'a TextEmbeddings,
    style: PromptStyle,
) -> Result<Scored<'a>> {
    if images.is_empty() {
        return Err(Error::Data("no images to evaluate".into()));
    }
    let prepared = PreparedSet::new(ds, emb, style)?;
    let rows = images
        .par_iter()
        .map(|img| {
            let gt = prepared.position(&img.label).ok_or_else(|| {
                Error::Data(format!(
                    "image {:?} has class {} which has no descriptors",
                    img.key, img.label
                ))
            })?;
            Ok((gt, prepared.scores(&img.vector)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Scored { prepared, rows })
}

impl Scored<'_> {
    fn accuracy(&self) -> (f64, BTreeMap<ClassLabel, f64>) {
        let n = self.prepared.classes.len();
        let mut correct = vec![0usize; n];
        let mut total = vec![0usize; n];
        for (gt, scores) in &self.rows {
            total[*gt] += 1;
            if PreparedSet::argmax(scores) == *gt {
                correct[*gt] += 1;
            }
        }
        let overall = correct.iter().sum::<usize>() as f64 / self.rows.len() as f64;
        let per_class = self
            .prepared
            .classes
            .iter()
            .enumerate()
            .filter(|(i, _)| total[*i] > 0)
            .map(|(i, c)| (c.clone(), correct[i] as f64 / total[i] as f64))
            .collect();
        (overall, per_class)
    }

    fn confusion(&self, lambda: f64, top_m: usize) -> BTreeMap<ClassLabel, Vec<ConfusionEntry>> {
        let classes = &self.prepared.classes;
        let n = classes.len();
        let mut matrix = vec![vec![0u32; n]; n];
        for (gt, scores) in &self.rows {
            let threshold = lambda * scores[*gt];
            for (j, &s) in scores.iter().enumerate() {
                if s > threshold {
                    matrix[*gt][j] += 1;
                }
            }
        }
        classes
            .iter()
            .enumerate()
            .map(|(g, class)| {
                let mut row: Vec<(usize, u32)> = matrix[g]
                    .iter()
                    .enumerate()
                    .filter(|&(j, &k)| j != g && k > 0)
                    .map(|(j, &k)| (j, k))
                    .collect();
                // Class indices are already in name order, so a stable sort
                // on count alone breaks ties by name.
                row.sort_by_key(|&(_, k)| std::cmp::Reverse(k));
                row.truncate(top_m);
                let entries = row
                    .into_iter()
                    .map(|(j, count)| ConfusionEntry {
                        class: classes[j].clone(),
                        count,
                    })
                    .collect();
                (class.clone(), entries)
            })
            .collect()
    }
}

/// Overall and per-class top-1 accuracy. Classes without images are omitted
/// from the per-class map.
pub fn accuracy(
    images: &[LabeledEmbedding],
    ds: &DescriptorSet,
    emb: &TextEmbeddings,
    style: PromptStyle,
) -> Result<(f64, BTreeMap<ClassLabel, f64>)> {
    Ok(score_images(images, ds, emb, style)?.accuracy())
}

/// Overall accuracy only.
pub fn overall_accuracy(
    images: &[LabeledEmbedding],
    ds: &DescriptorSet,
    emb: &TextEmbeddings,
    style: PromptStyle,
) -> Result<f64> {
    accuracy(images, ds, emb, style).map(|(overall, _)| overall)
}

/// Improved confusion rows: for each image of class g, every other class c'
/// with s(c') > lambda * s(g) gains one count in row g. Each row keeps its top
/// `top_m` non-zero entries, by count descending then name ascending. Every
/// class of `ds` gets a row, possibly empty.
pub fn improved_confusion(
    images: &[LabeledEmbedding],
    ds: &DescriptorSet,
    emb: &TextEmbeddings,
    style: PromptStyle,
    lambda: f64,
    top_m: usize,
) -> Result<BTreeMap<ClassLabel, Vec<ConfusionEntry>>> {
    check_feedback_params(lambda, top_m)?;
    Ok(score_images(images, ds, emb, style)?.confusion(lambda, top_m))
}

/// Accuracy, per-class accuracy and improved confusion rows in one pass.
pub fn visual_feedback(
    images: &[LabeledEmbedding],
    ds: &DescriptorSet,
    emb: &TextEmbeddings,
    style: PromptStyle,
    lambda: f64,
    top_m: usize,
) -> Result<VisualFeedback> {
    check_feedback_params(lambda, top_m)?;
    let scored = score_images(images, ds, emb, style)?;
    let (overall_accuracy, per_class_accuracy) = scored.accuracy();
    Ok(VisualFeedback {
        overall_accuracy,
        per_class_accuracy,
        confusion_rows: scored.confusion(lambda, top_m),
    })
}

fn check_feedback_params(lambda: f64, top_m: usize) -> Result<()> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Config(format!("lambda {lambda} outside (0, 1]")));
    }
    if top_m == 0 {
        return Err(Error::Config("top_m must be at least 1".into()));
    }
    Ok(())
}

/// Selection fitness of a candidate.
pub fn fitness(feedback: &VisualFeedback) -> f64 {
    feedback.overall_accuracy
}

/// Renders feedback as the text embedded into LLM prompts.
pub fn feedback_to_text(feedback: &VisualFeedback) -> String {
    let mut out = format!(
        "Overall accuracy: {:.1}%\n",
        feedback.overall_accuracy * 100.0
    );
    let mut classes: Vec<&ClassLabel> = feedback
        .per_class_accuracy
        .keys()
        .chain(feedback.confusion_rows.keys())
        .collect();
    classes.sort();
    classes.dedup();
    for class in classes {
        let acc = match feedback.per_class_accuracy.get(class) {
            Some(a) => format!("{:.1}%", a * 100.0),
            None => "n/a".to_string(),
        };
        let row = feedback
            .confusion_rows
            .get(class)
            .map(Vec::as_slice)
            .unwrap_or_default();
        if row.is_empty() {
            let _ = writeln!(out, "{class} (acc={acc}): confused with: none");
        } else {
            let list: Vec<String> = row
                .iter()
                .map(|e| format!("{}({})", e.class, e.count))
                .collect();
            let _ = writeln!(out, "{class} (acc={acc}): confused with {}", list.join(", "));
        }
    }
    out
}
