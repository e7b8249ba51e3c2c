//! Prompt assembly, analyst model clients and structured report parsing.

mod chat;
mod prompts;
mod query;
mod report;

pub use chat::{chat_complete, ChatBackend, ChatMessage, ChatModel, MockChat, MockRule, OpenAiChat, Role};
pub use prompts::{
    assemble_system_prompt, assemble_user_prompt, assemble_visual_user_prompt, render_template, EvidenceBundle,
    EvidenceItem, FemaPrior, PromptError, PromptTemplates, SensorEvidence, SystemMode, TileRef, TEMPLATE_FILES,
};
pub use query::{parse_user_query, ParsedQuery, QueryParse};
pub use report::{extract_json_object, parse_report, AnalystReport, EvidenceRefs, RecessionHint, ReportError, ReportFlags};
