//! Slice-stack reconstruction: iterative multi-term refinement of back-lit
//! sections, registration of stained sections into the result, and mapping
//! of a volume onto a template.

mod backlit;
mod ish;
mod schedule;
mod stack;
mod template;

pub use backlit::{reconstruct_backlit, ReconConfig, ReconstructionState};
pub use ish::{map_masks, reconstruct_ish, IshConfig};
pub use schedule::{IterationSchedule, Phase, TkPolicy, TransformKind, Weights};
pub use stack::{read_log_jsonl, render_stack, write_log_jsonl, IterationRecord};
pub use template::{map_to_template, TemplateConfig, TemplateMapping};
