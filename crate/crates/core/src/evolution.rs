//! The optimization loop: cluster, mutate, cross over, select, remember.
//!
//! Each iteration re-clusters classes on their current descriptor embeddings,
//! then for every cluster asks the LLM for `n_mutants` mutated candidates and
//! one crossover of those, and keeps the fittest of the pool. The assembled
//! set becomes the new current set; the best set seen so far is the output.

use std::collections::BTreeSet;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::{class_representatives, default_k, kmeans, ClusterAssignment, Representatives};
use crate::embed::{derive_seed, TextEmbedder, TextEmbeddings};
use crate::error::{Error, Result};
use crate::llm::{parse_descriptor_response, render_memory, ChatRequest, LlmProvider, PromptBuilder};
use crate::scoring::{feedback_to_text, fitness, overall_accuracy, render_prompt, visual_feedback};
use crate::types::{
    ClassLabel, Descriptor, DescriptorSet, LabeledEmbedding, MemoryRecord, Polarity, PromptStyle,
    RunConfig, SelectionScope, VisualFeedback,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub iteration: u32,
    pub current: DescriptorSet,
    pub global_best: DescriptorSet,
    pub global_best_fitness: f64,
    pub memory: Vec<MemoryRecord>,
    pub rng_seed: u64,
    pub clusters: ClusterAssignment,
    pub tokens_used: u64,
}

impl RunState {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("checkpoint {}: {e}", path.display())))
    }

    pub fn memory_counts(&self) -> MemoryCounts {
        let positive = self
            .memory
            .iter()
            .filter(|r| r.polarity == Polarity::Positive)
            .count();
        MemoryCounts {
            positive,
            negative: self.memory.len() - positive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryCounts {
    pub positive: usize,
    pub negative: usize,
}

/// Per-cluster record of one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLog {
    pub classes: Vec<ClassLabel>,
    /// Fitness of every pool member; the last one is the crossover.
    pub candidate_fitness: Vec<f64>,
    pub winner: usize,
    pub fallbacks: Vec<String>,
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: u32,
    pub fitness: f64,
    pub global_best_fitness: f64,
    pub feedback: VisualFeedback,
    pub clusters: Vec<Vec<ClassLabel>>,
    pub candidates: Vec<ClusterLog>,
    pub memory: MemoryCounts,
    pub tokens: u64,
    pub warnings: Vec<String>,
}

/// Where a run writes its artifacts.
#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub dir: PathBuf,
}

impl RunOutputs {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join("run_log.jsonl")
    }

    pub fn final_descriptors_path(&self) -> PathBuf {
        self.dir.join("final_descriptors.json")
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.dir.join("checkpoints")
    }

    pub fn checkpoint_path(&self, iteration: u32) -> PathBuf {
        self.checkpoint_dir().join(format!("iter_{iteration:04}.json"))
    }

    /// Highest-numbered checkpoint in the checkpoint directory, if any.
    pub fn latest_checkpoint(&self) -> Result<Option<PathBuf>> {
        let dir = self.checkpoint_dir();
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&dir, e)),
        };
        let mut best: Option<(u32, PathBuf)> = None;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            let num = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_prefix("iter_"))
                .and_then(|n| n.strip_suffix(".json"))
                .and_then(|n| n.parse::<u32>().ok());
            if let Some(n) = num {
                if best.as_ref().is_none_or(|(b, _)| n > *b) {
                    best = Some((n, path));
                }
            }
        }
        Ok(best.map(|(_, p)| p))
    }

    fn write_checkpoint(&self, state: &RunState) -> Result<()> {
        let dir = self.checkpoint_dir();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = self.checkpoint_path(state.iteration);
        let tmp = path.with_extension("json.tmp");
        let mut text = serde_json::to_string_pretty(state).expect("state serializes");
        text.push('\n');
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    fn append_log(&self, record: &IterationLog) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.log_path();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let line = serde_json::to_string(record).expect("log serializes");
        writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
    }
}

/// Result of a full run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub best: DescriptorSet,
    pub best_fitness: f64,
    pub state: RunState,
    pub log: Vec<IterationLog>,
}

/// Outcome of natural selection within one cluster.
#[derive(Debug, Clone)]
pub struct Selection {
    pub winner: usize,
    pub feedback: Vec<VisualFeedback>,
}

/// Feedback for one cluster candidate, evaluated in the configured scope.
///
/// Cluster scope classifies the cluster's images among the cluster's classes
/// only; global scope splices the candidate into `current` and evaluates
/// every image against every class. A scope with no images scores zero.
pub fn evaluate_candidate(
    candidate: &DescriptorSet,
    current: &DescriptorSet,
    cluster: &[ClassLabel],
    images: &[LabeledEmbedding],
    emb: &TextEmbeddings,
    config: &RunConfig,
) -> Result<VisualFeedback> {
    let spliced = current.splice(candidate);
    let (ds, subset): (DescriptorSet, Vec<LabeledEmbedding>) = match config.selection_scope {
        SelectionScope::Cluster => (
            spliced.restrict(cluster),
            images
                .iter()
                .filter(|img| cluster.contains(&img.label))
                .cloned()
                .collect(),
        ),
        SelectionScope::Global => (spliced, images.to_vec()),
    };
    if subset.is_empty() {
        return Ok(VisualFeedback {
            overall_accuracy: 0.0,
            per_class_accuracy: Default::default(),
            confusion_rows: Default::default(),
        });
    }
    visual_feedback(&subset, &ds, emb, config.prompt_style, config.lambda, config.top_m)
}

/// Picks the fittest candidate; ties go to the lowest index.
pub fn select_cluster(
    candidates: &[DescriptorSet],
    current: &DescriptorSet,
    cluster: &[ClassLabel],
    images: &[LabeledEmbedding],
    emb: &TextEmbeddings,
    config: &RunConfig,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::Validation("no candidates to select from".into()));
    }
    let feedback = candidates
        .iter()
        .map(|c| evaluate_candidate(c, current, cluster, images, emb, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(Selection {
        winner: argmax_first(feedback.iter().map(fitness)),
        feedback,
    })
}

fn argmax_first(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map_or(0, |(i, _)| i)
}

/// Compares consecutive descriptor sets and returns the new memory records.
///
/// Per class the lists split into unchanged, added and deleted descriptors.
/// `a_u` is the overall accuracy of the set made of every class's unchanged
/// descriptors (a class with none falls back to its bare template prompt).
/// Added descriptors are positive iff `a_new > a_u`; deleted descriptors are
/// negative iff `a_prev > a_u`. Classes without changes yield nothing.
pub fn update_memory(
    prev: &DescriptorSet,
    new: &DescriptorSet,
    images: &[LabeledEmbedding],
    emb: &TextEmbeddings,
    style: PromptStyle,
    iteration: u32,
) -> Result<Vec<MemoryRecord>> {
    let mut unchanged_set = DescriptorSet::new();
    let mut diffs: Vec<(ClassLabel, Vec<Descriptor>, Vec<Descriptor>)> = Vec::new();
    for (class, new_list) in new.iter() {
        let prev_list = prev
            .get(class)
            .ok_or_else(|| Error::Validation(format!("class {class} missing from previous set")))?;
        let unchanged: Vec<Descriptor> = new_list
            .iter()
            .filter(|d| prev_list.contains(d))
            .cloned()
            .collect();
        let added: Vec<Descriptor> = new_list
            .iter()
            .filter(|d| !prev_list.contains(d))
            .cloned()
            .collect();
        let deleted: Vec<Descriptor> = prev_list
            .iter()
            .filter(|d| !new_list.contains(d))
            .cloned()
            .collect();
        unchanged_set.insert(
            class.clone(),
            if unchanged.is_empty() { vec![Descriptor::bare()] } else { unchanged },
        );
        if !added.is_empty() || !deleted.is_empty() {
            diffs.push((class.clone(), added, deleted));
        }
    }
    if prev.len() != new.len() {
        return Err(Error::Validation("previous and new sets cover different classes".into()));
    }
    if diffs.is_empty() {
        return Ok(Vec::new());
    }
    let a_u = overall_accuracy(images, &unchanged_set, emb, style)?;
    let a_new = overall_accuracy(images, new, emb, style)?;
    let a_prev = overall_accuracy(images, prev, emb, style)?;
    let added_polarity = if a_new > a_u { Polarity::Positive } else { Polarity::Negative };
    let deleted_polarity = if a_prev > a_u { Polarity::Negative } else { Polarity::Positive };
    let mut records = Vec::new();
    for (class, added, deleted) in diffs {
        for (list, polarity) in [(added, added_polarity), (deleted, deleted_polarity)] {
            records.extend(list.into_iter().map(|descriptor| MemoryRecord {
                class: class.clone(),
                descriptor,
                iteration,
                polarity,
            }));
        }
    }
    Ok(records)
}

/// Drives a run against one LLM provider, text embedder and image split.
pub struct Optimizer<'a> {
    config: RunConfig,
    llm: &'a dyn LlmProvider,
    embedder: &'a dyn TextEmbedder,
    prompts: PromptBuilder,
    images: &'a [LabeledEmbedding],
    cache: TextEmbeddings,
    outputs: Option<RunOutputs>,
}

impl<'a> Optimizer<'a> {
    pub fn new(
        config: RunConfig,
        llm: &'a dyn LlmProvider,
        embedder: &'a dyn TextEmbedder,
        prompts: PromptBuilder,
        images: &'a [LabeledEmbedding],
    ) -> Result<Self> {
        config.validate()?;
        if images.is_empty() {
            return Err(Error::Data("optimization split has no images".into()));
        }
        Ok(Self {
            config,
            llm,
            embedder,
            prompts,
            images,
            cache: TextEmbeddings::new(),
            outputs: None,
        })
    }

    /// Seeds the embedding cache, e.g. with a precomputed text archive.
    pub fn with_embeddings(mut self, cache: TextEmbeddings) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_outputs(mut self, outputs: RunOutputs) -> Self {
        self.outputs = Some(outputs);
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn embeddings(&self) -> &TextEmbeddings {
        &self.cache
    }

    fn style(&self) -> PromptStyle {
        self.config.prompt_style
    }

    fn ensure_bare(&mut self, classes: &[ClassLabel]) -> Result<()> {
        let style = self.style();
        let prompts: Vec<(ClassLabel, String)> = classes
            .iter()
            .map(|c| (c.clone(), render_prompt(c, &Descriptor::bare(), style)))
            .collect();
        self.cache.ensure(prompts, self.embedder)
    }

    fn ensure_sets<'s>(&mut self, sets: impl IntoIterator<Item = &'s DescriptorSet>) -> Result<()> {
        let style = self.style();
        let prompts: Vec<(ClassLabel, String)> = sets
            .into_iter()
            .flat_map(|ds| {
                ds.iter()
                    .flat_map(move |(c, descs)| {
                        descs.iter().map(move |d| (c.clone(), render_prompt(c, d, style)))
                    })
            })
            .collect();
        self.cache.ensure(prompts, self.embedder)
    }

    fn check_images(&self, classes: &[ClassLabel]) -> Result<()> {
        let known: BTreeSet<&ClassLabel> = classes.iter().collect();
        if let Some(img) = self.images.iter().find(|i| !known.contains(&i.label)) {
            return Err(Error::Data(format!(
                "image {:?} has class {} which is not being optimized",
                img.key, img.label
            )));
        }
        for c in classes {
            if !self.images.iter().any(|i| &i.label == c) {
                log::warn!("class {c} has no optimization images");
            }
        }
        Ok(())
    }

    fn global_feedback(&self, ds: &DescriptorSet) -> Result<VisualFeedback> {
        visual_feedback(self.images, ds, &self.cache, self.style(), self.config.lambda, self.config.top_m)
    }

    fn cluster(&self, source: Representatives<'_>, n_classes: usize, iteration: u32) -> Result<ClusterAssignment> {
        let reps = class_representatives(source, &self.cache, self.style())?;
        let k = default_k(n_classes, self.config.cluster_target_size).min(n_classes);
        kmeans(&reps, k, derive_seed(self.config.rng_seed, "kmeans", u64::from(iteration)))
    }

    /// Clusters classes by name, asks the LLM for `n_init` descriptors per
    /// class cluster by cluster, and scores the result.
    pub fn initialize(&mut self, classes: &[ClassLabel]) -> Result<(RunState, IterationLog)> {
        let mut sorted = classes.to_vec();
        sorted.sort();
        if sorted.is_empty() {
            return Err(Error::Config("no classes to optimize".into()));
        }
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("class labels are not unique".into()));
        }
        self.check_images(&sorted)?;
        self.ensure_bare(&sorted)?;
        let clusters = self.cluster(Representatives::Bare(&sorted), sorted.len(), 0)?;

        let mut current = DescriptorSet::new();
        let mut tokens = 0;
        let mut warnings = Vec::new();
        for (j, cluster) in clusters.clusters.iter().enumerate() {
            let req = self.prompts.init(cluster, self.config.n_init);
            let reply = self.llm.complete(&req)?;
            tokens += reply.tokens;
            let parsed = parse_descriptor_response(&reply.text, cluster, Some(self.config.n_init))
                .map_err(|e| Error::Parse(format!("initial descriptors for cluster {j}: {e}")))?;
            warnings.extend(parsed.warnings);
            current = current.splice(&parsed.set);
        }
        self.ensure_sets([&current])?;
        let feedback = self.global_feedback(&current)?;
        let fit = fitness(&feedback);
        let state = RunState {
            iteration: 0,
            global_best: current.clone(),
            current,
            global_best_fitness: fit,
            memory: Vec::new(),
            rng_seed: self.config.rng_seed,
            clusters: clusters.clone(),
            tokens_used: tokens,
        };
        let log = IterationLog {
            iteration: 0,
            fitness: fit,
            global_best_fitness: fit,
            feedback,
            clusters: clusters.clusters,
            candidates: Vec::new(),
            memory: state.memory_counts(),
            tokens,
            warnings,
        };
        Ok((state, log))
    }

    /// Sends one request, retrying once when the reply does not parse.
    /// `Ok(None)` means both attempts failed to parse.
    fn ask(
        &self,
        req: &ChatRequest,
        cluster: &[ClassLabel],
        tokens: &mut u64,
        notes: &mut Vec<String>,
        what: &str,
    ) -> Result<Option<DescriptorSet>> {
        for attempt in 0..2 {
            let reply = self.llm.complete(req)?;
            *tokens += reply.tokens;
            match parse_descriptor_response(&reply.text, cluster, Some(self.config.n_init)) {
                Ok(parsed) => {
                    notes.extend(parsed.warnings.into_iter().map(|w| format!("{what}: {w}")));
                    return Ok(Some(parsed.set));
                }
                Err(e) => notes.push(format!("{what} attempt {}: {e}", attempt + 1)),
            }
        }
        Ok(None)
    }

    /// K mutation requests for one cluster. Unparseable candidates fall back
    /// to a copy of the cluster's current descriptors.
    pub fn mutate_cluster(
        &self,
        state: &RunState,
        cluster: &[ClassLabel],
        feedback: &VisualFeedback,
        tokens: &mut u64,
        notes: &mut Vec<String>,
    ) -> Result<Vec<DescriptorSet>> {
        let scoped = state.current.restrict(cluster);
        let fb_text = feedback_to_text(&feedback.restrict_rows(cluster));
        let mem_text = render_memory(&state.memory, cluster);
        let req = self
            .prompts
            .mutation(&scoped, &fb_text, &mem_text, self.config.n_change, self.config.n_init);
        let k = self.config.n_mutants;

        let answers: Vec<(Result<Option<DescriptorSet>>, u64, Vec<String>)> = if self.llm.concurrent() {
            std::thread::scope(|s| {
                let handles: Vec<_> = (0..k)
                    .map(|j| {
                        let req = &req;
                        s.spawn(move || {
                            let mut t = 0;
                            let mut n = Vec::new();
                            let r = self.ask(req, cluster, &mut t, &mut n, &format!("mutant {j}"));
                            (r, t, n)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("mutation thread panicked"))
                    .collect()
            })
        } else {
            (0..k)
                .map(|j| {
                    let mut t = 0;
                    let mut n = Vec::new();
                    let r = self.ask(&req, cluster, &mut t, &mut n, &format!("mutant {j}"));
                    (r, t, n)
                })
                .collect()
        };

        let mut out = Vec::with_capacity(k);
        let mut failures = 0;
        for (j, (result, t, n)) in answers.into_iter().enumerate() {
            *tokens += t;
            notes.extend(n);
            match result? {
                Some(ds) => out.push(ds),
                None => {
                    failures += 1;
                    notes.push(format!("mutant {j}: fell back to current descriptors"));
                    out.push(scoped.clone());
                }
            }
        }
        if failures == k {
            return Err(Error::Iteration {
                iteration: state.iteration + 1,
                reason: format!("all {k} mutation replies for cluster {cluster:?} failed to parse"),
            });
        }
        Ok(out)
    }

    /// One crossover request over the mutants; falls back to the fittest mutant.
    pub fn crossover_cluster(
        &self,
        mutants: &[(DescriptorSet, VisualFeedback)],
        cluster: &[ClassLabel],
        tokens: &mut u64,
        notes: &mut Vec<String>,
    ) -> Result<DescriptorSet> {
        let req = self.prompts.crossover(mutants, self.config.n_init);
        match self.ask(&req, cluster, tokens, notes, "crossover")? {
            Some(ds) => Ok(ds),
            None => {
                let best = argmax_first(mutants.iter().map(|(_, fb)| fitness(fb)));
                notes.push(format!("crossover: fell back to mutant {best}"));
                Ok(mutants[best].0.clone())
            }
        }
    }

    /// One full iteration. The returned state has `iteration + 1`.
    pub fn step(&mut self, state: &RunState) -> Result<(RunState, IterationLog)> {
        let iteration = state.iteration + 1;
        let classes: Vec<ClassLabel> = state.current.classes().cloned().collect();
        let clusters = self.cluster(Representatives::Descriptors(&state.current), classes.len(), iteration)?;
        let prev_feedback = self.global_feedback(&state.current)?;

        let mut tokens = 0;
        let mut warnings = Vec::new();
        let mut next = state.current.clone();
        let mut cluster_logs = Vec::with_capacity(clusters.clusters.len());
        for cluster in &clusters.clusters {
            let mut notes = Vec::new();
            let mutants = self.mutate_cluster(state, cluster, &prev_feedback, &mut tokens, &mut notes)?;
            self.ensure_sets(&mutants)?;
            let mut scored = Vec::with_capacity(mutants.len());
            for m in mutants {
                let fb = evaluate_candidate(&m, &state.current, cluster, self.images, &self.cache, &self.config)?;
                scored.push((m, fb));
            }
            let child = self.crossover_cluster(&scored, cluster, &mut tokens, &mut notes)?;
            self.ensure_sets([&child])?;
            let child_fb = evaluate_candidate(&child, &state.current, cluster, self.images, &self.cache, &self.config)?;
            scored.push((child, child_fb));

            let winner = argmax_first(scored.iter().map(|(_, fb)| fitness(fb)));
            next = next.splice(&scored[winner].0);
            let fallbacks = notes.iter().filter(|n| n.contains("fell back")).cloned().collect();
            warnings.extend(notes.into_iter().filter(|n| !n.contains("fell back")));
            cluster_logs.push(ClusterLog {
                classes: cluster.clone(),
                candidate_fitness: scored.iter().map(|(_, fb)| fitness(fb)).collect(),
                winner,
                fallbacks,
            });
        }

        let mut memory = state.memory.clone();
        memory.extend(update_memory(&state.current, &next, self.images, &self.cache, self.style(), iteration)?);
        let feedback = self.global_feedback(&next)?;
        let fit = fitness(&feedback);
        let (global_best, global_best_fitness) = if fit > state.global_best_fitness {
            (next.clone(), fit)
        } else {
            (state.global_best.clone(), state.global_best_fitness)
        };
        let new_state = RunState {
            iteration,
            current: next,
            global_best,
            global_best_fitness,
            memory,
            rng_seed: state.rng_seed,
            clusters: clusters.clone(),
            tokens_used: state.tokens_used + tokens,
        };
        let log = IterationLog {
            iteration,
            fitness: fit,
            global_best_fitness,
            feedback,
            clusters: clusters.clusters,
            candidates: cluster_logs,
            memory: new_state.memory_counts(),
            tokens,
            warnings,
        };
        if let Some(out) = &self.outputs {
            out.write_checkpoint(&new_state)?;
        }
        Ok((new_state, log))
    }

    /// Initializes and iterates `n_iterations` times.
    pub fn run(&mut self, classes: &[ClassLabel]) -> Result<RunOutcome> {
        let (state, log) = self.initialize(classes)?;
        if let Some(out) = &self.outputs {
            // A fresh run starts a fresh log.
            let path = out.log_path();
            if path.exists() {
                fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
            }
            out.append_log(&log)?;
        }
        self.continue_run(state, vec![log])
    }

    /// Continues from a checkpoint until `n_iterations` are done. New log
    /// lines are appended to the existing log.
    pub fn resume(&mut self, state: RunState) -> Result<RunOutcome> {
        let classes: Vec<ClassLabel> = state.current.classes().cloned().collect();
        self.check_images(&classes)?;
        self.ensure_bare(&classes)?;
        self.ensure_sets([&state.current, &state.global_best])?;
        self.continue_run(state, Vec::new())
    }

    fn continue_run(&mut self, mut state: RunState, mut log: Vec<IterationLog>) -> Result<RunOutcome> {
        while state.iteration < self.config.n_iterations {
            let (next, record) = self.step(&state)?;
            if let Some(out) = &self.outputs {
                out.append_log(&record)?;
            }
            log::info!(
                "iteration {}: fitness {:.4}, best {:.4}",
                record.iteration,
                record.fitness,
                record.global_best_fitness
            );
            log.push(record);
            state = next;
        }
        if let Some(out) = &self.outputs {
            state.global_best.save(&out.final_descriptors_path())?;
        }
        Ok(RunOutcome {
            best: state.global_best.clone(),
            best_fitness: state.global_best_fitness,
            state,
            log,
        })
    }
}
