//! The five generation workflows.
//!
//! Each workflow fills its prompt assets from the core materials, drives the
//! backend, and accounts every call in the token ledger. The staged workflow
//! issues exactly one call; outline writing issues one per outline point plus
//! the outline call; stage writing issues eight.

use std::collections::BTreeMap;

use crate::assets;
use crate::corpus::CoreMaterials;
use crate::dataset::{build_input_prompt, render_figures, render_references, render_tables};
use crate::stage::{parse, ParseMode, StageRole, StageSchema, SubsectionKind};

use super::{
    Completion, GenerateOptions, GenerationBackend, TokenLedger, WorkflowError, WorkflowResult,
};

/// Workflow selector, named as on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Workflow {
    Stig,
    Pure,
    Elaborate,
    Outline,
    StageWriting,
}

impl Workflow {
    pub const ALL: [Workflow; 5] = [
        Workflow::Stig,
        Workflow::Pure,
        Workflow::Elaborate,
        Workflow::Outline,
        Workflow::StageWriting,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Workflow::Stig => "stig",
            Workflow::Pure => "pure",
            Workflow::Elaborate => "elaborate",
            Workflow::Outline => "outline",
            Workflow::StageWriting => "stage_writing",
        }
    }

    pub fn from_str_name(name: &str) -> Option<Workflow> {
        Self::ALL.into_iter().find(|w| w.as_str() == name)
    }

    pub fn run(
        &self,
        core: &CoreMaterials,
        backend: &dyn GenerationBackend,
        schema: &StageSchema,
        options: &GenerateOptions,
    ) -> Result<WorkflowResult, WorkflowError> {
        match self {
            Workflow::Stig => run_stig(core, backend, schema, options),
            Workflow::Pure => run_pure_prompt(core, backend, options),
            Workflow::Elaborate => run_elaborate_prompt(core, backend, options),
            Workflow::Outline => run_outline_writing(core, backend, options),
            Workflow::StageWriting => run_stage_writing(core, backend, options),
        }
    }
}

fn fill_material_template(template: &str, core: &CoreMaterials) -> String {
    template
        .replace("{title}", &core.title)
        .replace("{abstract}", &core.abstract_text)
        .replace("{figures}", &render_figures(core))
        .replace("{tables}", &render_tables(core))
        .replace("{baseline_references}", &render_references(core))
}

/// The inference prompt for the staged workflow: the training instruction for
/// the schema's granularity plus the core-materials input block.
pub fn stig_prompt(core: &CoreMaterials, schema: &StageSchema) -> String {
    let instruction = match schema.granularity() {
        crate::stage::Granularity::EightStage => assets::STIG_INSTRUCTION_EIGHT,
        crate::stage::Granularity::FourStage => assets::STIG_INSTRUCTION_FOUR,
    };
    format!("{}\n\n{}", instruction.trim_end(), build_input_prompt(core))
}

fn generate_step(
    backend: &dyn GenerationBackend,
    ledger: &mut TokenLedger,
    step: &str,
    prompt: &str,
    options: &GenerateOptions,
) -> Result<Completion, WorkflowError> {
    let completion = backend.generate(prompt, options)?;
    ledger.record(step, &completion);
    Ok(completion)
}

/// Single-inference staged generation: one backend call, lenient parse,
/// outline sections removed, content sections concatenated. Effective tokens
/// are the content bodies re-tokenized under the backend's accounting;
/// delimiters and outlines are excluded.
pub fn run_stig(
    core: &CoreMaterials,
    backend: &dyn GenerationBackend,
    schema: &StageSchema,
    options: &GenerateOptions,
) -> Result<WorkflowResult, WorkflowError> {
    let prompt = stig_prompt(core, schema);
    let mut ledger = TokenLedger::default();
    let completion = generate_step(backend, &mut ledger, "stig", &prompt, options)?;

    let parsed = parse(&completion.text, schema, ParseMode::Lenient)
        .expect("lenient parse always succeeds");
    let mut diagnostics: Vec<String> = parsed.diagnostics.iter().map(|d| d.to_string()).collect();

    let granularity = schema.granularity();
    let mut sections = BTreeMap::new();
    for kind in SubsectionKind::ALL {
        let stage = granularity
            .stage_for(kind, StageRole::Content)
            .expect("every subsection has a content stage");
        match parsed.sequence.segment(stage) {
            Some(segment) => {
                let body = segment.body.trim().to_string();
                if !body.is_empty() {
                    sections.insert(kind, body);
                }
            }
            None => diagnostics.push(format!("missing subsection: {}", kind.label())),
        }
    }
    if sections.is_empty() {
        return Err(WorkflowError::NoRecoverableStages {
            raw: completion.text,
        });
    }

    let introduction = sections.values().cloned().collect::<Vec<_>>().join("\n\n");
    ledger.effective_tokens = sections.values().map(|b| backend.count_tokens(b)).sum();

    Ok(WorkflowResult {
        workflow: Workflow::Stig.as_str().into(),
        introduction,
        sections: Some(sections),
        ledger,
        intermediates: BTreeMap::from([("00_staged_output".to_string(), completion.text)]),
        diagnostics,
    })
}

/// Direct prompting with the plain template; the completion is the
/// introduction and every completion token counts as effective.
pub fn run_pure_prompt(
    core: &CoreMaterials,
    backend: &dyn GenerationBackend,
    options: &GenerateOptions,
) -> Result<WorkflowResult, WorkflowError> {
    run_single_prompt(Workflow::Pure, assets::PURE_PROMPT, core, backend, options, |_, _| Vec::new())
}

/// Four-paragraph constrained prompting. Diagnostics note a paragraph count
/// other than four and any paragraph outside 100-150 words.
pub fn run_elaborate_prompt(
    core: &CoreMaterials,
    backend: &dyn GenerationBackend,
    options: &GenerateOptions,
) -> Result<WorkflowResult, WorkflowError> {
    run_single_prompt(
        Workflow::Elaborate,
        assets::ELABORATE_PROMPT,
        core,
        backend,
        options,
        |introduction, _| {
            let paragraphs: Vec<&str> = introduction
                .split("\n\n")
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .collect();
            let mut diagnostics = Vec::new();
            if paragraphs.len() != 4 {
                diagnostics.push(format!(
                    "paragraph count {} differs from the required 4",
                    paragraphs.len()
                ));
            }
            for (i, paragraph) in paragraphs.iter().enumerate() {
                let words = paragraph.split_whitespace().count();
                if !(100..=150).contains(&words) {
                    diagnostics.push(format!(
                        "paragraph {} has {words} words, outside 100-150",
                        i + 1
                    ));
                }
            }
            diagnostics
        },
    )
}

fn run_single_prompt(
    workflow: Workflow,
    template: &str,
    core: &CoreMaterials,
    backend: &dyn GenerationBackend,
    options: &GenerateOptions,
    diagnose: impl Fn(&str, &CoreMaterials) -> Vec<String>,
) -> Result<WorkflowResult, WorkflowError> {
    let prompt = fill_material_template(template, core);
    let mut ledger = TokenLedger::default();
    let completion = generate_step(backend, &mut ledger, workflow.as_str(), &prompt, options)?;
    let introduction = completion.text.trim().to_string();
    if introduction.is_empty() {
        return Err(WorkflowError::EmptyCompletion {
            step: workflow.as_str().into(),
        });
    }
    let diagnostics = diagnose(&introduction, core);
    ledger.effective_tokens = completion.completion_token_count;
    Ok(WorkflowResult {
        workflow: workflow.as_str().into(),
        introduction,
        sections: None,
        ledger,
        intermediates: BTreeMap::new(),
        diagnostics,
    })
}

/// Accepts "-", "--", "*", "•", and numbered prefixes; one point per
/// non-empty line.
pub fn parse_outline_points(outline_text: &str) -> Vec<String> {
    outline_text
        .lines()
        .map(|line| {
            let line = line.trim();
            let stripped = line
                .trim_start_matches(['-', '*', '•'])
                .trim_start();
            // Numbered prefixes: "1." / "1)" / "(1)".
            let stripped = match stripped
                .trim_start_matches('(')
                .split_once(|c: char| c == '.' || c == ')')
            {
                Some((digits, rest)) if !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()) => {
                    rest.trim_start()
                }
                _ => stripped,
            };
            stripped.trim().to_string()
        })
        .filter(|p| !p.is_empty())
        .collect()
}

/// Two-phase outline writing: one call produces the outline, then one call
/// per point produces its paragraph; the merge joins the paragraphs with
/// blank lines. The ledger carries n+1 calls for n outline points.
pub fn run_outline_writing(
    core: &CoreMaterials,
    backend: &dyn GenerationBackend,
    options: &GenerateOptions,
) -> Result<WorkflowResult, WorkflowError> {
    let outline_prompt = format!(
        "{}\n\n{}",
        assets::OUTLINE_WRITING_PROMPT.trim_end(),
        build_input_prompt(core)
    );
    let mut ledger = TokenLedger::default();
    let outline = generate_step(backend, &mut ledger, "outline", &outline_prompt, options)?;
    let points = parse_outline_points(&outline.text);
    if points.is_empty() {
        return Err(WorkflowError::EmptyOutline { raw: outline.text });
    }

    let mut intermediates = BTreeMap::from([("00_outline".to_string(), outline.text.clone())]);
    let mut paragraphs = Vec::with_capacity(points.len());
    let mut effective = 0u64;
    for (i, point) in points.iter().enumerate() {
        let prompt = assets::PARAGRAPH_WRITING_PROMPT
            .replace("{title}", &core.title)
            .replace("{abstract}", &core.abstract_text)
            .replace("{point}", point);
        let step = format!("paragraph_{}", i + 1);
        let completion = generate_step(backend, &mut ledger, &step, &prompt, options)?;
        let paragraph = completion.text.trim().to_string();
        if paragraph.is_empty() {
            return Err(WorkflowError::EmptyCompletion { step });
        }
        effective += completion.completion_token_count;
        intermediates.insert(format!("{:02}_paragraph_{}", i + 1, i + 1), paragraph.clone());
        paragraphs.push(paragraph);
    }

    ledger.effective_tokens = effective;
    Ok(WorkflowResult {
        workflow: Workflow::Outline.as_str().into(),
        introduction: paragraphs.join("\n\n"),
        sections: None,
        ledger,
        intermediates,
        diagnostics: Vec::new(),
    })
}

/// Agentic stage writing: eight sequential calls, outline then content per
/// subsection in canonical order, each prompt carrying all prior steps'
/// outputs. The introduction joins the four content outputs; outline outputs
/// and re-sent context make the difference between total and effective
/// tokens.
pub fn run_stage_writing(
    core: &CoreMaterials,
    backend: &dyn GenerationBackend,
    options: &GenerateOptions,
) -> Result<WorkflowResult, WorkflowError> {
    let base_prompt = build_input_prompt(core);
    let mut ledger = TokenLedger::default();
    let mut intermediates = BTreeMap::new();
    let mut history: Vec<(String, String)> = Vec::new();
    let mut sections = BTreeMap::new();
    let mut effective = 0u64;

    let mut step_index = 0usize;
    for kind in SubsectionKind::ALL {
        for role in [StageRole::Outline, StageRole::Content] {
            let instruction = match role {
                StageRole::Outline => assets::STAGE_OUTLINE_INSTRUCTION,
                StageRole::Content => assets::STAGE_CONTENT_INSTRUCTION,
            }
            .replace("{subsection}", kind.label());
            let mut prompt = format!("{}\n\n{}", instruction.trim_end(), base_prompt);
            if !history.is_empty() {
                prompt.push_str("\n\n");
                prompt.push_str(assets::STAGE_HISTORY_HEADER);
                for (step, text) in &history {
                    prompt.push_str(&format!("\n[{step}]\n{text}"));
                }
            }
            let role_name = match role {
                StageRole::Outline => "outline",
                StageRole::Content => "content",
            };
            let step = format!("{}_{role_name}", kind.slug());
            let completion = generate_step(backend, &mut ledger, &step, &prompt, options)?;
            let text = completion.text.trim().to_string();
            if text.is_empty() {
                return Err(WorkflowError::EmptyCompletion { step });
            }
            if role == StageRole::Content {
                effective += completion.completion_token_count;
                sections.insert(kind, text.clone());
            }
            intermediates.insert(format!("{step_index:02}_{step}"), text.clone());
            history.push((step, text));
            step_index += 1;
        }
    }

    ledger.effective_tokens = effective;
    let introduction = sections.values().cloned().collect::<Vec<_>>().join("\n\n");
    Ok(WorkflowResult {
        workflow: Workflow::StageWriting.as_str().into(),
        introduction,
        sections: Some(sections),
        ledger,
        intermediates,
        diagnostics: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BaselineReference, ResolutionStatus, TableMaterial};
    use crate::generation::{MockBackend, ScriptedBackend};

    pub(crate) fn core() -> CoreMaterials {
        CoreMaterials {
            title: "A Study of Staged Drafting".into(),
            abstract_text: "We examine staged drafting for long-form text.".into(),
            figure_descriptions: vec!["Pipeline overview.".into()],
            table_materials: vec![TableMaterial {
                description: "Main results.".into(),
                content: "a | b".into(),
            }],
            baseline_abstracts: vec![BaselineReference {
                citation_key: "Prior et al., 2021".into(),
                title: "Prior Work".into(),
                abstract_text: "Prior work abstract.".into(),
                resolution_status: ResolutionStatus::Resolved,
            }],
        }
    }

    fn staged_text(bodies: &[&str]) -> String {
        bodies
            .iter()
            .enumerate()
            .map(|(k, b)| format!("<STAGE{k}>{b}<END{k}>"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn stig_makes_exactly_one_call_and_joins_content() {
        let text = staged_text(&["o0", "B text", "o1", "P text", "o2", "M text", "o3", "C text"]);
        let backend = ScriptedBackend::new(vec![text]);
        let result = run_stig(
            &core(),
            &backend,
            &StageSchema::eight(),
            &GenerateOptions::default(),
        )
        .unwrap();
        assert_eq!(result.ledger.calls.len(), 1);
        assert_eq!(result.introduction, "B text\n\nP text\n\nM text\n\nC text");
        assert!(!result.introduction.contains("<STAGE"));
        assert_eq!(result.sections.as_ref().unwrap().len(), 4);
        assert!(result.diagnostics.is_empty());
        // Effective tokens: the eight-word content total, not the outlines.
        assert_eq!(result.ledger.effective_tokens, 8);
    }

    #[test]
    fn stig_recovers_partial_output_with_diagnostics() {
        let text = (0..6)
            .map(|k| format!("<STAGE{k}>body {k}<END{k}>"))
            .collect::<Vec<_>>()
            .join("\n");
        let backend = ScriptedBackend::new(vec![text]);
        let result = run_stig(
            &core(),
            &backend,
            &StageSchema::eight(),
            &GenerateOptions::default(),
        )
        .unwrap();
        let sections = result.sections.unwrap();
        assert_eq!(sections.len(), 3);
        assert!(result
            .diagnostics
            .iter()
            .any(|d| d.contains("Our Contributions")));
    }

    #[test]
    fn stig_with_no_stages_is_a_generation_failure() {
        let backend = ScriptedBackend::new(vec!["plain prose, no tokens".into()]);
        let err = run_stig(
            &core(),
            &backend,
            &StageSchema::eight(),
            &GenerateOptions::default(),
        )
        .unwrap_err();
        match err {
            WorkflowError::NoRecoverableStages { raw } => {
                assert!(raw.contains("plain prose"));
            }
            other => panic!("expected NoRecoverableStages, got {other:?}"),
        }
    }

    #[test]
    fn pure_prompt_fills_the_template_verbatim_requirements() {
        let backend = ScriptedBackend::new(vec!["An introduction.".into()]);
        let result = run_pure_prompt(&core(), &backend, &GenerateOptions::default()).unwrap();
        assert_eq!(result.ledger.calls.len(), 1);
        let prompts = backend.prompts();
        assert!(prompts[0].contains("between 600 and 1100 words"));
        assert!(prompts[0].contains("Given title: A Study of Staged Drafting"));
        assert_eq!(result.ledger.effective_tokens, 2);
    }

    #[test]
    fn pure_prompt_renders_none_for_empty_references() {
        let mut materials = core();
        materials.baseline_abstracts.clear();
        let backend = ScriptedBackend::new(vec!["text".into()]);
        run_pure_prompt(&materials, &backend, &GenerateOptions::default()).unwrap();
        let prompt = backend.prompts().remove(0);
        assert!(prompt.contains("Given references (These baseline references only exist in experiments): None"));
    }

    #[test]
    fn elaborate_flags_wrong_paragraph_count() {
        let three = "One paragraph.\n\nTwo paragraph.\n\nThree paragraph.";
        let backend = ScriptedBackend::new(vec![three.into()]);
        let result = run_elaborate_prompt(&core(), &backend, &GenerateOptions::default()).unwrap();
        assert!(result.diagnostics.iter().any(|d| d.contains("paragraph count 3")));
        assert!(backend.prompts()[0].contains("EXACTLY FOUR PARAGRAPHS"));
        assert_eq!(result.ledger.calls.len(), 1);
    }

    #[test]
    fn elaborate_four_good_paragraphs_yield_no_count_diagnostic() {
        let paragraph = "word ".repeat(120).trim_end().to_string();
        let text = vec![paragraph; 4].join("\n\n");
        let backend = ScriptedBackend::new(vec![text]);
        let result = run_elaborate_prompt(&core(), &backend, &GenerateOptions::default()).unwrap();
        assert!(result.diagnostics.is_empty());
    }

    #[test]
    fn outline_writing_issues_n_plus_one_calls() {
        let outline = "- point one\n- point two\n- point three\n- point four";
        let backend = ScriptedBackend::new(vec![
            outline.into(),
            "Paragraph one.".into(),
            "Paragraph two.".into(),
            "Paragraph three.".into(),
            "Paragraph four.".into(),
        ]);
        let result = run_outline_writing(&core(), &backend, &GenerateOptions::default()).unwrap();
        assert_eq!(result.ledger.calls.len(), 5);
        assert_eq!(
            result.introduction,
            "Paragraph one.\n\nParagraph two.\n\nParagraph three.\n\nParagraph four."
        );
    }

    #[test]
    fn outline_writing_single_point_issues_two_calls() {
        let backend = ScriptedBackend::new(vec!["1. only point".into(), "Paragraph.".into()]);
        let result = run_outline_writing(&core(), &backend, &GenerateOptions::default()).unwrap();
        assert_eq!(result.ledger.calls.len(), 2);
    }

    #[test]
    fn outline_writing_rejects_empty_outline() {
        let backend = ScriptedBackend::new(vec!["\n\n".into()]);
        let err = run_outline_writing(&core(), &backend, &GenerateOptions::default()).unwrap_err();
        assert!(matches!(err, WorkflowError::EmptyOutline { .. }));
    }

    #[test]
    fn outline_point_prefixes_are_tolerated() {
        let points = parse_outline_points("- a\n-- b\n* c\n• d\n1. e\n2) f\n(3) g\n\n");
        assert_eq!(points, vec!["a", "b", "c", "d", "e", "f", "g"]);
    }

    #[test]
    fn stage_writing_issues_eight_accumulating_calls() {
        let replies: Vec<String> = (0..8).map(|i| format!("step text {i}")).collect();
        let backend = ScriptedBackend::new(replies);
        let result = run_stage_writing(&core(), &backend, &GenerateOptions::default()).unwrap();
        assert_eq!(result.ledger.calls.len(), 8);
        let prompts = backend.prompts();
        // Step 3 (problem content) sees steps 0-2 outputs.
        assert!(prompts[3].contains("step text 0"));
        assert!(prompts[3].contains("step text 1"));
        assert!(prompts[3].contains("step text 2"));
        assert!(!prompts[3].contains("step text 3"));
        // Outline outputs (even steps) never reach the introduction.
        assert_eq!(
            result.introduction,
            "step text 1\n\nstep text 3\n\nstep text 5\n\nstep text 7"
        );
        // Effective counts only the four content completions.
        assert_eq!(result.ledger.effective_tokens, 4 * 3);
    }

    #[test]
    fn stage_writing_names_the_empty_step() {
        let backend = ScriptedBackend::new(vec![
            "outline text".into(),
            "content text".into(),
            "  ".into(),
        ]);
        let err = run_stage_writing(&core(), &backend, &GenerateOptions::default()).unwrap_err();
        match err {
            WorkflowError::EmptyCompletion { step } => {
                assert_eq!(step, "problem_and_limitations_outline");
            }
            other => panic!("expected EmptyCompletion, got {other:?}"),
        }
    }

    #[test]
    fn ledger_sums_match_backend_reported_totals() {
        let backend = MockBackend::default();
        let result = run_stage_writing(&core(), &backend, &GenerateOptions::default()).unwrap();
        assert_eq!(
            result.ledger.total_tokens(),
            backend.reported_prompt_tokens() + backend.reported_completion_tokens()
        );
        assert_eq!(
            result.ledger.completion_tokens(),
            backend.reported_completion_tokens()
        );
    }

    #[test]
    fn stig_is_cheaper_than_stage_writing_under_equal_bodies() {
        let stig_backend = MockBackend::default();
        let stig = run_stig(
            &core(),
            &stig_backend,
            &StageSchema::eight(),
            &GenerateOptions::default(),
        )
        .unwrap();
        let sw_backend = MockBackend::default();
        let stage_writing =
            run_stage_writing(&core(), &sw_backend, &GenerateOptions::default()).unwrap();
        assert!(stig.ledger.total_tokens() < stage_writing.ledger.total_tokens());
        assert_eq!(stig.ledger.calls.len(), 1);
        assert_eq!(stage_writing.ledger.calls.len(), 8);
        assert!(stig.ledger.effectiveness_ratio().unwrap()
            > stage_writing.ledger.effectiveness_ratio().unwrap());
    }

    #[test]
    fn mock_backend_drives_every_workflow_deterministically() {
        for workflow in Workflow::ALL {
            let a = workflow
                .run(
                    &core(),
                    &MockBackend::default(),
                    &StageSchema::eight(),
                    &GenerateOptions::default(),
                )
                .unwrap();
            let b = workflow
                .run(
                    &core(),
                    &MockBackend::default(),
                    &StageSchema::eight(),
                    &GenerateOptions::default(),
                )
                .unwrap();
            assert_eq!(a, b, "workflow {} must be deterministic", workflow.as_str());
            assert!(!a.introduction.is_empty());
        }
    }
}
