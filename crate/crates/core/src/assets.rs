//! Versioned prompt and instruction assets.
//!
//! Every text the pipeline sends to a model backend lives here as a file so
//! it can be reviewed and diffed like code. Placeholders use `{name}` and are
//! filled by the owning module.

/// Annotation protocol prompt; placeholder: `{text}`.
pub const ANNOTATION_PROMPT: &str = include_str!("assets/annotation_prompt.txt");

/// Direct-prompt introduction generation; placeholders: `{title}`,
/// `{abstract}`, `{figures}`, `{tables}`, `{baseline_references}`.
pub const PURE_PROMPT: &str = include_str!("assets/pure_prompt.txt");

/// Four-paragraph constrained prompt; same placeholders as [`PURE_PROMPT`].
pub const ELABORATE_PROMPT: &str = include_str!("assets/elaborate_prompt.txt");

/// Task instruction for eight-stage staged-output records and inference.
pub const STIG_INSTRUCTION_EIGHT: &str = include_str!("assets/stig_instruction_eight.txt");

/// Task instruction for the four-stage (content only) variant.
pub const STIG_INSTRUCTION_FOUR: &str = include_str!("assets/stig_instruction_four.txt");

/// Task instruction for plain (token-free) fine-tuning records.
pub const FT_PLAIN_INSTRUCTION: &str = include_str!("assets/ftplain_instruction.txt");

/// Per-stage outline instruction; placeholder: `{subsection}`.
pub const STAGE_OUTLINE_INSTRUCTION: &str = include_str!("assets/stage_outline_instruction.txt");

/// Per-stage content instruction; placeholder: `{subsection}`.
pub const STAGE_CONTENT_INSTRUCTION: &str = include_str!("assets/stage_content_instruction.txt");

/// First call of the outline-writing workflow.
pub const OUTLINE_WRITING_PROMPT: &str = include_str!("assets/outline_prompt.txt");

/// Per-point expansion call of the outline-writing workflow; placeholders:
/// `{title}`, `{abstract}`, `{point}`.
pub const PARAGRAPH_WRITING_PROMPT: &str = include_str!("assets/paragraph_prompt.txt");

/// Sentence-labeling prompt for model-backed structural-rationality scoring;
/// placeholders: `{document}`, `{sentence}`.
pub const CLASSIFIER_PROMPT: &str = include_str!("assets/classifier_prompt.txt");

/// Header line that introduces the prior-stage history section in
/// stage-writing inputs. The text after this header is exactly the
/// concatenation of the prior stages' outputs.
pub const STAGE_HISTORY_HEADER: &str = "Previously completed stages:";
