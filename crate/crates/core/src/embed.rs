//! `EMB1` embedding archives, the text-embedding cache, and text embedders.
//!
//! Archive layout, all integers little-endian:
//!
//! ```text
//! b"EMB1" | u32 dimension | u32 record count
//! per record: u32 label len | label utf-8 | u32 key len | key utf-8 | dimension x f32
//! ```
//!
//! Vectors are stored as written and L2-normalized when read.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scoring::render_prompt;
use crate::types::{ClassLabel, Descriptor, DescriptorSet, LabeledEmbedding, PromptStyle};

pub const MAGIC: &[u8; 4] = b"EMB1";

/// Vectors whose norm is already this close to 1 are left untouched on load,
/// which keeps read/write round trips bit-exact.
const UNIT_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingArchive {
    dimension: u32,
    records: Vec<LabeledEmbedding>,
}

impl EmbeddingArchive {
    pub fn new(dimension: u32, records: Vec<LabeledEmbedding>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Validation("archive dimension must be positive".into()));
        }
        if let Some(r) = records.iter().find(|r| r.vector.len() != dimension as usize) {
            return Err(Error::Validation(format!(
                "record {:?} has dimension {}, archive dimension is {dimension}",
                r.key,
                r.vector.len()
            )));
        }
        Ok(Self { dimension, records })
    }

    pub fn dimension(&self) -> usize {
        self.dimension as usize
    }

    pub fn records(&self) -> &[LabeledEmbedding] {
        &self.records
    }

    pub fn into_records(self) -> Vec<LabeledEmbedding> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct labels, ascending.
    pub fn classes(&self) -> Vec<ClassLabel> {
        let mut out: Vec<ClassLabel> = self.records.iter().map(|r| r.label.clone()).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let per_vec = self.dimension as usize * 4;
        let mut out = Vec::with_capacity(12 + self.records.len() * (per_vec + 16));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.dimension.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            for field in [r.label.as_str(), r.key.as_str()] {
                out.extend_from_slice(&(field.len() as u32).to_le_bytes());
                out.extend_from_slice(field.as_bytes());
            }
            for v in &r.vector {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Decodes an archive and normalizes every vector.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic, expected EMB1".into()));
        }
        let mut cur = Cursor { bytes, pos: 4 };
        let dimension = cur.u32("dimension")?;
        let count = cur.u32("record count")?;
        if dimension == 0 {
            return Err(Error::Format("archive dimension is zero".into()));
        }
        let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
        for index in 0..count {
            let label = cur.string(index)?;
            let key = cur.string(index)?;
            let raw = cur.take(dimension as usize * 4, index)?;
            let mut vector: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if !normalize(&mut vector) {
                return Err(Error::Data(format!("zero-norm vector for record {key:?}")));
            }
            let label = ClassLabel::new(label)
                .map_err(|_| Error::Data(format!("record {key:?} has an empty label")))?;
            records.push(LabeledEmbedding { label, key, vector });
        }
        if cur.pos != bytes.len() {
            return Err(Error::Corruption(format!(
                "{} trailing bytes after {count} records",
                bytes.len() - cur.pos
            )));
        }
        Ok(Self { dimension, records })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take_raw(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn take(&mut self, n: usize, record: u32) -> Result<&'a [u8]> {
        self.take_raw(n)
            .ok_or_else(|| Error::Corruption(format!("truncated record {record}")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self
            .take_raw(4)
            .ok_or_else(|| Error::Corruption(format!("truncated header ({what})")))?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self, record: u32) -> Result<String> {
        let len = self.take(4, record)?;
        let len = u32::from_le_bytes([len[0], len[1], len[2], len[3]]) as usize;
        let raw = self.take(len, record)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::Corruption(format!("record {record} holds invalid UTF-8")))
    }
}

/// Scales `v` to unit length in place. Returns false for a zero vector.
pub fn normalize(v: &mut [f32]) -> bool {
    let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    if (norm - 1.0).abs() > UNIT_SLACK {
        for x in v.iter_mut() {
            *x = (f64::from(*x) / norm) as f32;
        }
    }
    true
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// splitmix64 generator: advance by the golden gamma, then mix.
#[derive(Debug, Clone)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

/// Deterministic stand-in for a text encoder: FNV-1a-64 of the text seeds a
/// splitmix64 stream, each draw is mapped to [-1, 1), and the result is
/// L2-normalized.
pub fn mock_embed(text: &str, dimension: usize) -> Vec<f32> {
    assert!(dimension >= 1, "mock_embed needs dimension >= 1");
    let mut seed = fnv1a64(text.as_bytes());
    loop {
        let mut rng = SplitMix64::new(seed);
        let raw: Vec<f64> = (0..dimension)
            .map(|_| {
                let unit = rng.next_u64() as f64 / 18_446_744_073_709_551_616.0;
                2.0 * unit - 1.0
            })
            .collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return raw.iter().map(|x| (x / norm) as f32).collect();
        }
        seed = seed.wrapping_add(1);
    }
}

/// Derives a sub-seed for one consumer of the run seed.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    let mut mix = SplitMix64::new(seed ^ fnv1a64(label.as_bytes()) ^ index.rotate_left(32));
    mix.next_u64()
}

/// Text-prompt embeddings keyed by the rendered prompt string.
#[derive(Debug, Clone, Default)]
pub struct TextEmbeddings {
    dimension: Option<usize>,
    vectors: HashMap<String, Vec<f32>>,
}

impl TextEmbeddings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keys of the archive become prompts; the first record for a key wins.
    pub fn from_archive(archive: &EmbeddingArchive) -> Self {
        let mut out = Self {
            dimension: Some(archive.dimension()),
            vectors: HashMap::with_capacity(archive.len()),
        };
        for r in archive.records() {
            out.vectors.entry(r.key.clone()).or_insert_with(|| r.vector.clone());
        }
        out
    }

    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, prompt: &str) -> bool {
        self.vectors.contains_key(prompt)
    }

    /// Stores a vector, normalizing it. Rejects zero vectors and dimension changes.
    pub fn insert(&mut self, prompt: impl Into<String>, mut vector: Vec<f32>) -> Result<()> {
        let prompt = prompt.into();
        match self.dimension {
            Some(d) if d != vector.len() => {
                return Err(Error::Data(format!(
                    "embedding for {prompt:?} has dimension {}, expected {d}",
                    vector.len()
                )))
            }
            _ => self.dimension = Some(vector.len()),
        }
        if !normalize(&mut vector) {
            return Err(Error::Data(format!("zero-norm embedding for {prompt:?}")));
        }
        self.vectors.insert(prompt, vector);
        Ok(())
    }

    pub fn get(&self, prompt: &str) -> Result<&[f32]> {
        self.vectors
            .get(prompt)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingEmbedding(prompt.to_string()))
    }

    /// Embeds every prompt of `ds` (under `style`) that is not cached yet.
    pub fn ensure_set(
        &mut self,
        ds: &DescriptorSet,
        style: PromptStyle,
        embedder: &dyn TextEmbedder,
    ) -> Result<()> {
        let wanted = ds.iter().flat_map(|(c, descs)| {
            descs.iter().map(move |d| (c.clone(), render_prompt(c, d, style)))
        });
        self.ensure(wanted, embedder)
    }

    /// Embeds the given (class, prompt) pairs that are not cached yet.
    pub fn ensure(
        &mut self,
        prompts: impl IntoIterator<Item = (ClassLabel, String)>,
        embedder: &dyn TextEmbedder,
    ) -> Result<()> {
        let mut missing: Vec<(ClassLabel, String)> = Vec::new();
        for (c, p) in prompts {
            if !self.contains(&p) && !missing.iter().any(|(_, q)| q == &p) {
                missing.push((c, p));
            }
        }
        if missing.is_empty() {
            return Ok(());
        }
        let vectors = embedder.embed_batch(&missing)?;
        if vectors.len() != missing.len() {
            return Err(Error::Data(format!(
                "text embedder returned {} vectors for {} prompts",
                vectors.len(),
                missing.len()
            )));
        }
        for ((_, p), v) in missing.into_iter().zip(vectors) {
            self.insert(p, v)?;
        }
        Ok(())
    }
}

/// Turns rendered prompts into vectors.
pub trait TextEmbedder: Send + Sync {
    fn embed_batch(&self, prompts: &[(ClassLabel, String)]) -> Result<Vec<Vec<f32>>>;
}

/// [`mock_embed`] at a fixed dimension.
#[derive(Debug, Clone, Copy)]
pub struct MockEmbedder {
    pub dimension: usize,
}

impl TextEmbedder for MockEmbedder {
    fn embed_batch(&self, prompts: &[(ClassLabel, String)]) -> Result<Vec<Vec<f32>>> {
        Ok(prompts
            .iter()
            .map(|(_, p)| mock_embed(p, self.dimension))
            .collect())
    }
}

/// Looks prompts up in a precomputed text archive; never computes new vectors.
#[derive(Debug, Clone)]
pub struct ArchiveEmbedder {
    table: TextEmbeddings,
}

impl ArchiveEmbedder {
    pub fn new(archive: &EmbeddingArchive) -> Self {
        Self {
            table: TextEmbeddings::from_archive(archive),
        }
    }
}

impl TextEmbedder for ArchiveEmbedder {
    fn embed_batch(&self, prompts: &[(ClassLabel, String)]) -> Result<Vec<Vec<f32>>> {
        prompts
            .iter()
            .map(|(_, p)| self.table.get(p).map(<[f32]>::to_vec))
            .collect()
    }
}

/// Runs an external exporter: writes `class<TAB>prompt` lines, invokes
/// `program args... --prompts <file> --out <file>`, then reads the archive.
#[derive(Debug, Clone)]
pub struct ExternalEmbedder {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl ExternalEmbedder {
    /// Splits a command line on whitespace.
    pub fn from_command_line(line: &str) -> Result<Self> {
        let mut parts = line.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::Config("empty embed command".into()))?;
        Ok(Self {
            program: PathBuf::from(program),
            args: parts.map(str::to_string).collect(),
        })
    }
}

impl TextEmbedder for ExternalEmbedder {
    fn embed_batch(&self, prompts: &[(ClassLabel, String)]) -> Result<Vec<Vec<f32>>> {
        let dir = tempfile::tempdir().map_err(|e| Error::io(Path::new("<tempdir>"), e))?;
        let list = dir.path().join("prompts.tsv");
        let out = dir.path().join("texts.emb");
        let mut body = String::new();
        for (c, p) in prompts {
            if c.as_str().contains(['\t', '\n']) || p.contains(['\t', '\n']) {
                return Err(Error::Data(format!("prompt {p:?} cannot be written as a TSV line")));
            }
            body.push_str(c.as_str());
            body.push('\t');
            body.push_str(p);
            body.push('\n');
        }
        fs::write(&list, body).map_err(|e| Error::io(&list, e))?;
        let status = Command::new(&self.program)
            .args(&self.args)
            .arg("--prompts")
            .arg(&list)
            .arg("--out")
            .arg(&out)
            .status()
            .map_err(|e| Error::io(&self.program, e))?;
        if !status.success() {
            return Err(Error::Data(format!(
                "embed command {} exited with {status}",
                self.program.display()
            )));
        }
        let table = TextEmbeddings::from_archive(&EmbeddingArchive::read(&out)?);
        prompts
            .iter()
            .map(|(_, p)| table.get(p).map(<[f32]>::to_vec))
            .collect()
    }
}

/// Settings for [`mock_archives`].
#[derive(Debug, Clone)]
pub struct MockArchiveSpec {
    pub dimension: usize,
    pub images_per_class: usize,
    pub sigma: f64,
    pub seed: u64,
    pub style: PromptStyle,
}

/// Synthetic text and image archives.
///
/// The text archive holds the mock embedding of every bare-template prompt and
/// of every descriptor prompt in `descriptors`. Each image is the mock
/// embedding of its class's bare-template prompt plus per-component Gaussian
/// noise of standard deviation `sigma`, renormalized.
pub fn mock_archives(
    classes: &[ClassLabel],
    descriptors: Option<&DescriptorSet>,
    spec: &MockArchiveSpec,
) -> Result<(EmbeddingArchive, EmbeddingArchive)> {
    if spec.dimension < 2 {
        return Err(Error::Config("mock archives need dimension >= 2".into()));
    }
    if !spec.sigma.is_finite() || spec.sigma < 0.0 {
        return Err(Error::Config("noise sigma must be a non-negative number".into()));
    }
    let dim = spec.dimension as u32;
    let mut texts = Vec::new();
    let mut push_text = |label: &ClassLabel, prompt: String| {
        if !texts.iter().any(|r: &LabeledEmbedding| r.key == prompt) {
            let vector = mock_embed(&prompt, spec.dimension);
            texts.push(LabeledEmbedding {
                label: label.clone(),
                key: prompt,
                vector,
            });
        }
    };
    for c in classes {
        push_text(c, render_prompt(c, &Descriptor::bare(), spec.style));
    }
    if let Some(ds) = descriptors {
        for (c, descs) in ds.iter() {
            for d in descs {
                push_text(c, render_prompt(c, d, spec.style));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "mock-images", 0));
    let noise = Normal::new(0.0, spec.sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut images = Vec::with_capacity(classes.len() * spec.images_per_class);
    for c in classes {
        let center = mock_embed(&render_prompt(c, &Descriptor::bare(), spec.style), spec.dimension);
        for i in 0..spec.images_per_class {
            let mut vector: Vec<f32> = center
                .iter()
                .map(|&x| (f64::from(x) + noise.sample(&mut rng)) as f32)
                .collect();
            if !normalize(&mut vector) {
                vector = center.clone();
            }
            images.push(LabeledEmbedding {
                label: c.clone(),
                key: format!("{}/{i:04}", c.as_str()),
                vector,
            });
        }
    }
    Ok((
        EmbeddingArchive::new(dim, texts)?,
        EmbeddingArchive::new(dim, images)?,
    ))
}
