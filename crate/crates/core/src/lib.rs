//! Evolutionary optimization of per-class text descriptors for zero-shot
//! image classification with precomputed vision-language embeddings.
//!
//! Candidates are proposed by an LLM (mutation and crossover) and selected by
//! the accuracy they reach on an optimization split of image embeddings. The
//! classifier scores a class by averaging the cosine similarity between an
//! image and each of the class's descriptor prompts.

pub mod clustering;
pub mod config;
pub mod embed;
pub mod error;
pub mod evolution;
pub mod llm;
pub mod scoring;
pub mod types;

pub use error::{Error, ProviderError, Result};
pub use types::{
    validate_descriptor_set, ClassLabel, ConfusionEntry, Descriptor, DescriptorSet,
    LabeledEmbedding, MemoryRecord, Polarity, PromptStyle, RunConfig, SelectionScope, Violation,
    VisualFeedback,
};
