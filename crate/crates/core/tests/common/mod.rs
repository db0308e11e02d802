//! Shared test support: brute-force scoring oracles, synthetic instances and
//! scripted LLM stand-ins.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use descopt_core::embed::{mock_embed, TextEmbedder, TextEmbeddings};
use descopt_core::llm::{ChatRequest, Completion, LlmProvider};
use descopt_core::{ClassLabel, DescriptorSet, LabeledEmbedding, ProviderError};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

pub fn label(s: &str) -> ClassLabel {
    ClassLabel::new(s).unwrap()
}

pub fn labels(names: &[&str]) -> Vec<ClassLabel> {
    names.iter().map(|n| label(n)).collect()
}

// ---------------------------------------------------------------------------
// Oracles. These re-derive every quantity from the definitions with plain
// loops over (image, class, descriptor) and never call the library's scorer.
// ---------------------------------------------------------------------------

pub type Table = HashMap<String, Vec<f32>>;

pub fn oracle_prompt(class: &str, descriptor: &str) -> String {
    if descriptor == "{classname}" {
        format!("A photo of a {class}")
    } else {
        format!("{class}, which {descriptor}")
    }
}

/// (class name, mean cosine) for every class, in class-name order.
pub fn oracle_scores(image: &[f32], ds: &DescriptorSet, table: &Table) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (class, descs) in ds.iter() {
        let mut total = 0.0f64;
        for d in descs {
            let v = &table[&oracle_prompt(class.as_str(), d.as_str())];
            let mut dotp = 0.0f64;
            for i in 0..image.len() {
                dotp += f64::from(image[i]) * f64::from(v[i]);
            }
            total += dotp;
        }
        out.push((class.as_str().to_string(), total / descs.len() as f64));
    }
    out
}

pub fn oracle_classify(image: &[f32], ds: &DescriptorSet, table: &Table) -> String {
    let scores = oracle_scores(image, ds, table);
    let best = scores.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
    let mut winners: Vec<&String> = scores.iter().filter(|(_, s)| *s == best).map(|(c, _)| c).collect();
    winners.sort();
    winners[0].clone()
}

pub fn oracle_accuracy(images: &[LabeledEmbedding], ds: &DescriptorSet, table: &Table) -> (f64, BTreeMap<String, f64>) {
    let mut hit: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut correct = 0;
    for img in images {
        let ok = oracle_classify(&img.vector, ds, table) == img.label.as_str();
        let e = hit.entry(img.label.as_str().to_string()).or_default();
        e.1 += 1;
        if ok {
            e.0 += 1;
            correct += 1;
        }
    }
    (
        correct as f64 / images.len() as f64,
        hit.into_iter().map(|(c, (k, n))| (c, k as f64 / n as f64)).collect(),
    )
}

/// Full |C| x |C| improved confusion matrix, then top-m of each row.
pub fn oracle_confusion(
    images: &[LabeledEmbedding],
    ds: &DescriptorSet,
    table: &Table,
    lambda: f64,
    m: usize,
) -> BTreeMap<String, Vec<(String, u32)>> {
    let names: Vec<String> = ds.classes().map(|c| c.as_str().to_string()).collect();
    let mut matrix: BTreeMap<(String, String), u32> = BTreeMap::new();
    for img in images {
        let scores: HashMap<String, f64> = oracle_scores(&img.vector, ds, table).into_iter().collect();
        let gt = img.label.as_str();
        for other in &names {
            if scores[other] > lambda * scores[gt] {
                *matrix.entry((gt.to_string(), other.clone())).or_default() += 1;
            }
        }
    }
    names
        .iter()
        .map(|row| {
            let mut entries: Vec<(String, u32)> = names
                .iter()
                .filter(|col| *col != row)
                .map(|col| (col.clone(), *matrix.get(&(row.clone(), col.clone())).unwrap_or(&0)))
                .filter(|(_, k)| *k > 0)
                .collect();
            entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            entries.truncate(m);
            (row.clone(), entries)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Random scoring instances.
// ---------------------------------------------------------------------------

pub struct Instance {
    pub ds: DescriptorSet,
    pub table: Table,
    pub emb: TextEmbeddings,
    pub images: Vec<LabeledEmbedding>,
    pub lambda: f64,
    pub m: usize,
}

const NAME_POOL: &[&str] = &["owl", "Hen", "crow", "eagle", "Zebra", "ant", "bee", "cat", "dog"];

/// Random instance with at most `max_classes` classes, `max_images` images and
/// 5 descriptors per class. Some classes copy another class's vectors and
/// some images sit exactly on a descriptor vector, so ties occur.
pub fn random_instance(seed: u64, max_classes: usize, max_images: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = rng.random_range(1..=max_classes);
    let dim = rng.random_range(2..=12);
    let mut pool: Vec<&str> = NAME_POOL.to_vec();
    pool.shuffle(&mut rng);
    let names: Vec<&str> = pool[..n_classes].to_vec();

    let mut pairs: Vec<(String, Vec<String>)> = Vec::new();
    let mut table = Table::new();
    for (ci, name) in names.iter().enumerate() {
        let n_desc = rng.random_range(1..=5);
        let descs: Vec<String> = (0..n_desc).map(|j| format!("trait {}", (j * 7 + ci) % 11)).collect();
        let copy_from = if ci > 0 && rng.random_bool(0.2) { Some(rng.random_range(0..ci)) } else { None };
        for (j, d) in descs.iter().enumerate() {
            let prompt = oracle_prompt(name, d);
            let v = match copy_from {
                Some(src) => {
                    let (src_name, src_descs) = &pairs[src];
                    let sd = &src_descs[j % src_descs.len()];
                    table[&oracle_prompt(src_name, sd)].clone()
                }
                None => mock_embed(&format!("{seed}/{prompt}"), dim),
            };
            table.insert(prompt, v);
        }
        pairs.push((name.to_string(), descs));
    }
    let ds = DescriptorSet::from_pairs(pairs.clone()).unwrap();

    let n_images = rng.random_range(1..=max_images);
    let mut images = Vec::with_capacity(n_images);
    for i in 0..n_images {
        let ci = rng.random_range(0..n_classes);
        let vector = if rng.random_bool(0.2) {
            let (n, d) = &pairs[rng.random_range(0..n_classes)];
            table[&oracle_prompt(n, &d[0])].clone()
        } else {
            let (n, d) = &pairs[ci];
            let base = &table[&oracle_prompt(n, &d[rng.random_range(0..d.len())])];
            let noise = mock_embed(&format!("{seed}/noise/{i}"), dim);
            let mix = rng.random_range(0.0..1.5f32);
            let mut v: Vec<f32> = base.iter().zip(&noise).map(|(a, b)| a + mix * b).collect();
            if !descopt_core::embed::normalize(&mut v) {
                v = base.clone();
            }
            v
        };
        images.push(LabeledEmbedding {
            label: label(names[ci]),
            key: format!("img{i}"),
            vector,
        });
    }
    let mut emb = TextEmbeddings::new();
    for (k, v) in &table {
        emb.insert(k.clone(), v.clone()).unwrap();
    }
    // The cache stores exactly what the oracle reads.
    for (k, v) in table.iter_mut() {
        *v = emb.get(k).unwrap().to_vec();
    }
    let lambda = [0.5, 0.9, 1.0, rng.random_range(0.05..1.0)][rng.random_range(0..4)];
    let m = rng.random_range(1..=4);
    Instance { ds, table, emb, images, lambda, m }
}

// ---------------------------------------------------------------------------
// Planted geometry: images cluster around each class's bare-prompt embedding;
// descriptors whose text starts with "signal" embed near that centroid, all
// others embed in random directions.
// ---------------------------------------------------------------------------

pub struct PlantedEmbedder {
    pub dimension: usize,
    pub jitter: f32,
}

impl PlantedEmbedder {
    pub fn centroid(&self, class: &ClassLabel) -> Vec<f32> {
        mock_embed(&format!("A photo of a {class}"), self.dimension)
    }
}

impl TextEmbedder for PlantedEmbedder {
    fn embed_batch(&self, prompts: &[(ClassLabel, String)]) -> descopt_core::Result<Vec<Vec<f32>>> {
        Ok(prompts
            .iter()
            .map(|(class, prompt)| {
                let signal = prompt
                    .split_once(", which ")
                    .is_some_and(|(_, d)| d.starts_with("signal"));
                if signal {
                    let noise = mock_embed(prompt, self.dimension);
                    self.centroid(class)
                        .iter()
                        .zip(&noise)
                        .map(|(c, n)| c + self.jitter * n)
                        .collect()
                } else {
                    mock_embed(prompt, self.dimension)
                }
            })
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Scripted LLM stand-in that reads the request and edits descriptor sets.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Behavior {
    /// Replaces `n_change` descriptors per class; each new one is a signal
    /// descriptor with probability `signal_prob`. Crossover keeps signal
    /// descriptors from all candidates first.
    Improving { signal_prob: f64 },
    /// Returns the current descriptors unchanged; crossover returns candidate 1.
    Echo,
    /// Replaces every signal descriptor with noise, answers garbage with
    /// probability `garbage_prob`, and crosses over to the weakest-looking set.
    Adversarial { garbage_prob: f64 },
}

pub struct EvolvingProvider {
    rng: Mutex<ChaCha8Rng>,
    next_id: AtomicU64,
    pub behavior: Behavior,
    pub n_init: usize,
    pub n_change: usize,
    pub init_signal: usize,
}

impl EvolvingProvider {
    pub fn new(seed: u64, behavior: Behavior, n_init: usize, n_change: usize) -> Self {
        Self {
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            next_id: AtomicU64::new(0),
            behavior,
            n_init,
            n_change,
            init_signal: 0,
        }
    }

    /// Number of signal descriptors per class in the initial reply.
    pub fn with_init_signal(mut self, n: usize) -> Self {
        self.init_signal = n;
        self
    }

    fn fresh(&self, signal: bool) -> String {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        if signal {
            format!("signal cue {id}")
        } else {
            format!("noise feature {id}")
        }
    }

    fn init_reply(&self, user: &str) -> String {
        let classes: Vec<&str> = user.lines().filter_map(|l| l.strip_prefix("- ")).collect();
        let map: BTreeMap<&str, Vec<String>> = classes
            .iter()
            .map(|c| {
                let list = (0..self.n_init).map(|j| self.fresh(j < self.init_signal)).collect();
                (*c, list)
            })
            .collect();
        serde_json::to_string(&map).unwrap()
    }

    fn mutate(&self, current: BTreeMap<String, Vec<String>>) -> String {
        let mut rng = self.rng.lock().unwrap();
        let out: BTreeMap<String, Vec<String>> = current
            .into_iter()
            .map(|(class, mut list)| {
                match self.behavior {
                    Behavior::Improving { signal_prob } => {
                        let mut idx: Vec<usize> = (0..list.len()).collect();
                        idx.shuffle(&mut *rng);
                        for &i in idx.iter().take(self.n_change) {
                            let signal = rng.random_bool(signal_prob);
                            list[i] = self.fresh(signal);
                        }
                    }
                    Behavior::Adversarial { .. } => {
                        for d in list.iter_mut() {
                            if d.starts_with("signal") || rng.random_bool(0.3) {
                                *d = self.fresh(false);
                            }
                        }
                    }
                    Behavior::Echo => {}
                }
                (class, list)
            })
            .collect();
        serde_json::to_string_pretty(&out).unwrap()
    }

    fn crossover(&self, candidates: Vec<BTreeMap<String, Vec<String>>>) -> String {
        let chosen = match self.behavior {
            Behavior::Echo => candidates[0].clone(),
            Behavior::Improving { .. } => {
                let mut merged: BTreeMap<String, Vec<String>> = BTreeMap::new();
                for cand in &candidates {
                    for (class, list) in cand {
                        let slot = merged.entry(class.clone()).or_default();
                        for d in list {
                            if !slot.contains(d) {
                                slot.push(d.clone());
                            }
                        }
                    }
                }
                for list in merged.values_mut() {
                    list.sort_by_key(|d| !d.starts_with("signal"));
                    list.truncate(self.n_init);
                }
                merged
            }
            Behavior::Adversarial { .. } => candidates
                .iter()
                .min_by_key(|c| c.values().flatten().filter(|d| d.starts_with("signal")).count())
                .unwrap()
                .clone(),
        };
        serde_json::to_string(&chosen).unwrap()
    }
}

/// Every JSON object that follows a line starting with `marker`.
pub fn objects_after(text: &str, marker: &str) -> Vec<BTreeMap<String, Vec<String>>> {
    let mut out = Vec::new();
    for (pos, _) in text.match_indices(marker) {
        let rest = &text[pos..];
        if let Some(open) = rest.find('{') {
            let mut stream = serde_json::Deserializer::from_str(&rest[open..]).into_iter::<Value>();
            if let Some(Ok(v)) = stream.next() {
                if let Ok(map) = serde_json::from_value(v) {
                    out.push(map);
                }
            }
        }
    }
    out
}

impl LlmProvider for EvolvingProvider {
    fn complete(&self, req: &ChatRequest) -> Result<Completion, ProviderError> {
        if let Behavior::Adversarial { garbage_prob } = self.behavior {
            let garbage = self.rng.lock().unwrap().random_bool(garbage_prob);
            if garbage && !req.user.starts_with("Classes:") {
                return Ok(Completion::text("I would rather not."));
            }
        }
        let text = if req.user.starts_with("Classes:") {
            self.init_reply(&req.user)
        } else if req.user.starts_with("Current descriptors:") {
            let current = objects_after(&req.user, "Current descriptors:").remove(0);
            self.mutate(current)
        } else if req.user.starts_with("Candidate 1") {
            self.crossover(objects_after(&req.user, "Candidate "))
        } else {
            return Err(ProviderError::Malformed(format!("unrecognized request: {}", &req.user[..40.min(req.user.len())])));
        };
        Ok(Completion::text(text))
    }
}

/// Counts calls to the wrapped provider.
pub struct Counting<P> {
    pub inner: P,
    pub calls: AtomicU64,
}

impl<P> Counting<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, calls: AtomicU64::new(0) }
    }

    pub fn count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<P: LlmProvider> LlmProvider for Counting<P> {
    fn complete(&self, req: &ChatRequest) -> Result<Completion, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(req)
    }

    fn concurrent(&self) -> bool {
        self.inner.concurrent()
    }
}

// ---------------------------------------------------------------------------
// Memory-update geometry.
//
// Classes A and B in R^3. A's images sit at angle atan(0.3) and atan(0.6) in
// the e1/e2 plane, B's image is e2. B's only descriptor embeds to e2 and is
// kept. An A descriptor with parameter t embeds to t e1 + sqrt(1 - t^2) e3, so
// an A image with slope q is classified A iff the mean t of A's list exceeds q.
// Overall accuracy is therefore (1 + #{q in {0.3, 0.6} : mean t > q}) / 3.
// ---------------------------------------------------------------------------

pub struct MemoryCase {
    pub name: &'static str,
    /// Parameter of the kept A descriptor; `None` leaves A with no kept
    /// descriptor, so the bare prompt (t = 0.45) stands in.
    pub kept: Option<f32>,
    pub deleted: f32,
    pub added: f32,
    pub added_polarity: descopt_core::Polarity,
    pub deleted_polarity: descopt_core::Polarity,
}

pub fn memory_cases() -> Vec<MemoryCase> {
    use descopt_core::Polarity::{Negative as N, Positive as P};
    let case = |name, kept, deleted, added, added_polarity, deleted_polarity| MemoryCase {
        name,
        kept,
        deleted,
        added,
        added_polarity,
        deleted_polarity,
    };
    vec![
        // a_u = 1/3, a_prev = 2/3, a_new = 2/3
        case("new > u, prev > u", Some(0.1), 0.9, 0.9, P, N),
        // a_u = 2/3, a_prev = 1/3, a_new = 1
        case("new > u, prev < u", Some(0.45), 0.0, 0.95, P, P),
        // a_u = 2/3, a_prev = 1, a_new = 1/3
        case("new < u, prev > u", Some(0.45), 0.95, 0.0, N, N),
        // a_u = 2/3, a_prev = 1/3, a_new = 1/3
        case("new < u, prev < u", Some(0.45), 0.0, 0.0, N, P),
        // a_u = 2/3, a_new = 2/3
        case("new == u", Some(0.45), 0.0, 0.5, N, P),
        // a_u = 2/3, a_prev = 2/3
        case("prev == u", Some(0.45), 0.5, 0.95, P, P),
        // bare fallback: a_u = 2/3, a_prev = 1/3, a_new = 1
        case("no kept descriptor", None, 0.0, 0.95, P, P),
    ]
}

fn a_vec(t: f32) -> Vec<f32> {
    vec![t, 0.0, (1.0 - t * t).sqrt()]
}

/// Runs one case and returns the records as (descriptor, polarity) pairs
/// plus a check that nothing was recorded for class B.
pub fn run_memory_case(case: &MemoryCase) -> (Vec<(String, descopt_core::Polarity)>, bool) {
    use descopt_core::evolution::update_memory;
    use descopt_core::PromptStyle;

    let mut emb = TextEmbeddings::new();
    emb.insert("B, which is upright", vec![0.0, 1.0, 0.0]).unwrap();
    emb.insert("A photo of a A", a_vec(0.45)).unwrap();
    emb.insert("A, which kept", a_vec(case.kept.unwrap_or(0.0))).unwrap();
    emb.insert("A, which old", a_vec(case.deleted)).unwrap();
    emb.insert("A, which fresh", a_vec(case.added)).unwrap();

    let mut prev_a = vec![];
    let mut new_a = vec![];
    if case.kept.is_some() {
        prev_a.push("kept");
        new_a.push("kept");
    }
    prev_a.push("old");
    new_a.push("fresh");
    let prev = DescriptorSet::from_pairs([("A", prev_a), ("B", vec!["is upright"])]).unwrap();
    let new = DescriptorSet::from_pairs([("A", new_a), ("B", vec!["is upright"])]).unwrap();

    let img = |l: &str, k: &str, q: f32| {
        let n = (1.0 + q * q).sqrt();
        LabeledEmbedding { label: label(l), key: k.into(), vector: vec![1.0 / n, q / n, 0.0] }
    };
    let images = vec![
        img("A", "a-shallow", 0.3),
        img("A", "a-steep", 0.6),
        LabeledEmbedding { label: label("B"), key: "b".into(), vector: vec![0.0, 1.0, 0.0] },
    ];
    let records = update_memory(&prev, &new, &images, &emb, PromptStyle::Plain, 4).unwrap();
    let b_clean = records.iter().all(|r| r.class.as_str() == "A" && r.iteration == 4);
    (
        records.into_iter().map(|r| (r.descriptor.as_str().to_string(), r.polarity)).collect(),
        b_clean,
    )
}

/// True when a case yields exactly one record for "fresh" and one for "old"
/// with the expected polarities.
pub fn memory_case_holds(case: &MemoryCase) -> bool {
    let (records, b_clean) = run_memory_case(case);
    b_clean
        && records
            == vec![
                ("fresh".to_string(), case.added_polarity),
                ("old".to_string(), case.deleted_polarity),
            ]
}

// ---------------------------------------------------------------------------
// Bundled replay fixture.
// ---------------------------------------------------------------------------

pub fn replay_fixture_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/replay3")
}

/// Runs the fixture config with its output redirected to `out`.
pub fn run_replay_fixture(out: &std::path::Path) -> descopt_core::Result<descopt_core::evolution::RunOutcome> {
    use descopt_core::config::{ConfigFile, Session};
    let mut config = ConfigFile::load(&replay_fixture_dir().join("config.json"))?;
    config.out_dir = out.to_path_buf();
    Session::open(config)?.run(None)
}

/// (final descriptors, run log) bytes written by a fixture run.
pub fn replay_fixture_outputs(out: &std::path::Path) -> (Vec<u8>, Vec<u8>) {
    run_replay_fixture(out).unwrap();
    (
        std::fs::read(out.join("final_descriptors.json")).unwrap(),
        std::fs::read(out.join("run_log.jsonl")).unwrap(),
    )
}

/// Compares every library scoring quantity against the oracles.
pub fn oracle_mismatch(inst: &Instance, style: descopt_core::PromptStyle) -> Result<(), String> {
    use descopt_core::scoring::{accuracy, class_scores, classify, improved_confusion};
    let err = |e: descopt_core::Error| e.to_string();
    for img in &inst.images {
        let got = class_scores(img, &inst.ds, &inst.emb, style).map_err(err)?;
        let want = oracle_scores(&img.vector, &inst.ds, &inst.table);
        if got.len() != want.len() {
            return Err(format!("{}: {} classes scored, expected {}", img.key, got.len(), want.len()));
        }
        for ((c, s), (wc, ws)) in got.iter().zip(&want) {
            if c.as_str() != wc || (s - ws).abs() > 1e-9 {
                return Err(format!("{}: score {c}={s} vs {wc}={ws}", img.key));
            }
        }
        let pred = classify(img, &inst.ds, &inst.emb, style).map_err(err)?;
        let want_pred = oracle_classify(&img.vector, &inst.ds, &inst.table);
        if pred.as_str() != want_pred {
            return Err(format!("{}: predicted {pred}, oracle {want_pred}", img.key));
        }
    }
    let (overall, per_class) = accuracy(&inst.images, &inst.ds, &inst.emb, style).map_err(err)?;
    let (want_overall, want_per_class) = oracle_accuracy(&inst.images, &inst.ds, &inst.table);
    if (overall - want_overall).abs() > 1e-9 {
        return Err(format!("accuracy {overall} vs {want_overall}"));
    }
    let per_class: BTreeMap<String, f64> = per_class.into_iter().map(|(c, a)| (c.as_str().to_string(), a)).collect();
    if per_class.len() != want_per_class.len()
        || per_class.iter().any(|(c, a)| (a - want_per_class[c]).abs() > 1e-9)
    {
        return Err(format!("per-class accuracy {per_class:?} vs {want_per_class:?}"));
    }
    let rows = improved_confusion(&inst.images, &inst.ds, &inst.emb, style, inst.lambda, inst.m).map_err(err)?;
    let want_rows = oracle_confusion(&inst.images, &inst.ds, &inst.table, inst.lambda, inst.m);
    let rows: BTreeMap<String, Vec<(String, u32)>> = rows
        .into_iter()
        .map(|(c, r)| (c.as_str().to_string(), r.into_iter().map(|e| (e.class.as_str().to_string(), e.count)).collect()))
        .collect();
    if rows != want_rows {
        return Err(format!("confusion rows {rows:?} vs {want_rows:?}"));
    }
    Ok(())
}
