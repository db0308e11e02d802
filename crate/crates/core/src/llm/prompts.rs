//! Chat requests for initialization, mutation and crossover.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ClassLabel, DescriptorSet, MemoryRecord, Polarity, VisualFeedback};

/// Most recent memory records shown per polarity.
pub const MEMORY_PROMPT_LIMIT: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

/// The six prompt texts. `{name}` placeholders are filled at build time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub init_system: String,
    pub init_user: String,
    pub mutation_system: String,
    pub mutation_user: String,
    pub crossover_system: String,
    pub crossover_user: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            init_system: include_str!("../../prompts/init_system.txt").to_string(),
            init_user: include_str!("../../prompts/init_user.txt").to_string(),
            mutation_system: include_str!("../../prompts/mutation_system.txt").to_string(),
            mutation_user: include_str!("../../prompts/mutation_user.txt").to_string(),
            crossover_system: include_str!("../../prompts/crossover_system.txt").to_string(),
            crossover_user: include_str!("../../prompts/crossover_user.txt").to_string(),
        }
    }
}

impl PromptTemplates {
    /// Loads `<name>.txt` files from `dir`; files that are absent keep the
    /// built-in text.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut t = Self::default();
        for (name, slot) in [
            ("init_system", &mut t.init_system),
            ("init_user", &mut t.init_user),
            ("mutation_system", &mut t.mutation_system),
            ("mutation_user", &mut t.mutation_user),
            ("crossover_system", &mut t.crossover_system),
            ("crossover_user", &mut t.crossover_user),
        ] {
            let path = dir.join(format!("{name}.txt"));
            match std::fs::read_to_string(&path) {
                Ok(text) => *slot = text,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(Error::io(&path, e)),
            }
        }
        Ok(t)
    }
}

/// Substitutes `{key}` placeholders in one pass; substituted text is not
/// rescanned and unknown placeholders are left alone.
fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let key = &after[..close];
            vars.iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Renders the memory banks for the given classes, newest 50 per polarity.
pub fn render_memory(memory: &[MemoryRecord], classes: &[ClassLabel]) -> String {
    let mut sections = Vec::new();
    for (polarity, title, sign) in [
        (Polarity::Positive, "Helpful descriptors", '+'),
        (Polarity::Negative, "Harmful descriptors", '-'),
    ] {
        let picked: Vec<&MemoryRecord> = memory
            .iter()
            .filter(|r| r.polarity == polarity && classes.contains(&r.class))
            .collect();
        if picked.is_empty() {
            continue;
        }
        let start = picked.len().saturating_sub(MEMORY_PROMPT_LIMIT);
        let mut section = format!("{title}:\n");
        for r in &picked[start..] {
            section.push_str(&format!("{}: {} ({sign})\n", r.class, r.descriptor));
        }
        sections.push(section);
    }
    if sections.is_empty() {
        "none\n".to_string()
    } else {
        sections.join("\n")
    }
}

/// Builds chat requests from templates.
#[derive(Debug, Clone)]
pub struct PromptBuilder {
    pub templates: PromptTemplates,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl PromptBuilder {
    pub fn new(templates: PromptTemplates, temperature: f64, max_tokens: u32) -> Self {
        Self {
            templates,
            temperature,
            max_tokens,
        }
    }

    fn request(&self, system: String, user: String) -> ChatRequest {
        ChatRequest {
            system,
            user,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        }
    }

    pub fn init(&self, classes: &[ClassLabel], n_init: usize) -> ChatRequest {
        let list: Vec<String> = classes.iter().map(|c| format!("- {c}")).collect();
        let list = list.join("\n");
        let n = n_init.to_string();
        let vars = [("class_list", list.as_str()), ("n_init", n.as_str())];
        self.request(
            fill(&self.templates.init_system, &vars),
            fill(&self.templates.init_user, &vars),
        )
    }

    pub fn mutation(
        &self,
        current: &DescriptorSet,
        feedback_text: &str,
        memory_text: &str,
        n_change: usize,
        n_total: usize,
    ) -> ChatRequest {
        let current = current.to_json_pretty();
        let n_change = n_change.to_string();
        let n_total = n_total.to_string();
        let vars = [
            ("current", current.as_str()),
            ("feedback", feedback_text),
            ("memory", memory_text),
            ("n_change", n_change.as_str()),
            ("n_total", n_total.as_str()),
        ];
        self.request(
            fill(&self.templates.mutation_system, &vars),
            fill(&self.templates.mutation_user, &vars),
        )
    }

    pub fn crossover(&self, candidates: &[(DescriptorSet, VisualFeedback)], n_total: usize) -> ChatRequest {
        let mut listing = String::new();
        for (i, (ds, fb)) in candidates.iter().enumerate() {
            let per_class: Vec<String> = fb
                .per_class_accuracy
                .iter()
                .map(|(c, a)| format!("{c}={:.1}%", a * 100.0))
                .collect();
            listing.push_str(&format!(
                "Candidate {} (accuracy {:.1}%; per class: {}):\n{}\n\n",
                i + 1,
                fb.overall_accuracy * 100.0,
                if per_class.is_empty() { "n/a".to_string() } else { per_class.join(", ") },
                ds.to_json_pretty()
            ));
        }
        let k = candidates.len().to_string();
        let n_total = n_total.to_string();
        let vars = [
            ("candidates", listing.as_str()),
            ("n_candidates", k.as_str()),
            ("n_total", n_total.as_str()),
        ];
        self.request(
            fill(&self.templates.crossover_system, &vars),
            fill(&self.templates.crossover_user, &vars),
        )
    }
}
