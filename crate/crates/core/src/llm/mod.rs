//! Prompt construction, LLM backends, and reply parsing.

mod parse;
mod prompts;
mod provider;

pub use parse::{parse_descriptor_response, ParsedResponse};
pub use prompts::{render_memory, ChatRequest, PromptBuilder, PromptTemplates, MEMORY_PROMPT_LIMIT};
pub use provider::{
    default_backoff, request_digest, Completion, HttpProvider, LlmProvider, ProviderKind,
    RecordingProvider, ReplayEntry, ReplayProvider, ScriptedProvider,
};
