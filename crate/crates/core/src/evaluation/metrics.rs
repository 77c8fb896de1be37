//! The five evaluation metrics: semantic similarity, structural rationality,
//! content coverage, narrative quality, and the quotation constraint.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::AnnotatedIntroduction;
use crate::stage::SubsectionKind;
use crate::text::{split_sentences, AUTHOR_ETAL, AUTHOR_PAIR, BRACKET_CITATION};

use super::backends::{
    ClassifyContext, EmbeddingScorer, EvalBackendError, PerplexityModel, SentenceClassifier,
};

/// Perplexity above this marks weak readability in reports.
pub const READABILITY_PPL_LINE: f64 = 25.0;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error(transparent)]
    Backend(#[from] EvalBackendError),
}

/// Generated text under evaluation: per-subsection content when the workflow
/// produced it, an undifferentiated document otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratedText {
    Sectioned(BTreeMap<SubsectionKind, String>),
    Plain(String),
}

impl GeneratedText {
    pub fn full_text(&self) -> String {
        match self {
            GeneratedText::Sectioned(sections) => {
                sections.values().cloned().collect::<Vec<_>>().join("\n\n")
            }
            GeneratedText::Plain(text) => text.clone(),
        }
    }
}

/// One generated sentence with its structural label: the subsection it was
/// emitted under (sectioned input only), the classifier's prediction, and the
/// resulting rationality bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceLabel {
    pub sentence: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub emitted_under: Option<SubsectionKind>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub predicted: Option<SubsectionKind>,
    pub rational: bool,
}

impl SentenceLabel {
    /// The subsection this sentence is scored against for coverage.
    pub fn assigned_section(&self) -> Option<SubsectionKind> {
        self.emitted_under.or(self.predicted)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrOutcome {
    pub sr: f64,
    pub labels: Vec<SentenceLabel>,
    /// Subsections with no generated content at all.
    pub missing_subsections: usize,
}

/// Passes the document pair through the scorer. Both texts must be non-empty.
pub fn score_semantic_similarity(
    generated: &str,
    reference: &str,
    scorer: &dyn EmbeddingScorer,
) -> Result<f64, MetricError> {
    if generated.trim().is_empty() || reference.trim().is_empty() {
        return Err(MetricError::Undefined("empty text".into()));
    }
    Ok(scorer.score_pair(generated, reference)?)
}

/// Labels every sentence and scores `1 - C_mis / C_total`.
///
/// Sectioned input: a sentence is misclassified when the classifier's label
/// differs from the subsection it was emitted under. Undifferentiated input:
/// the classifier assigns each sentence a subsection and any sentence whose
/// label breaks the non-decreasing canonical order counts as misclassified.
pub fn score_structural_rationality(
    generated: &GeneratedText,
    classifier: &dyn SentenceClassifier,
) -> Result<SrOutcome, MetricError> {
    let labels = match generated {
        GeneratedText::Sectioned(sections) => {
            let document = generated.full_text();
            let sentences: Vec<(SubsectionKind, String)> = SubsectionKind::ALL
                .iter()
                .flat_map(|kind| {
                    sections
                        .get(kind)
                        .map(String::as_str)
                        .unwrap_or("")
                        .pipe_sentences(*kind)
                })
                .collect();
            let total = sentences.len();
            let mut labels = Vec::with_capacity(total);
            for (position, (kind, sentence)) in sentences.into_iter().enumerate() {
                let predicted = classifier.classify(
                    &sentence,
                    &ClassifyContext {
                        document: &document,
                        position,
                        total,
                    },
                )?;
                labels.push(SentenceLabel {
                    rational: predicted == kind,
                    sentence,
                    emitted_under: Some(kind),
                    predicted: Some(predicted),
                });
            }
            labels
        }
        GeneratedText::Plain(text) => {
            let sentences = split_sentences(text);
            let total = sentences.len();
            let mut predictions = Vec::with_capacity(total);
            for (position, sentence) in sentences.iter().enumerate() {
                predictions.push(classifier.classify(
                    sentence,
                    &ClassifyContext {
                        document: text,
                        position,
                        total,
                    },
                )?);
            }
            // Misfit against the canonical monotone order: a sentence whose
            // label falls below the running maximum breaks the progression.
            let mut running_max: Option<SubsectionKind> = None;
            sentences
                .into_iter()
                .zip(predictions)
                .map(|(sentence, predicted)| {
                    let rational = running_max.map_or(true, |m| predicted.index() >= m.index());
                    if running_max.map_or(true, |m| predicted.index() > m.index()) {
                        running_max = Some(predicted);
                    }
                    SentenceLabel {
                        sentence,
                        emitted_under: None,
                        predicted: Some(predicted),
                        rational,
                    }
                })
                .collect()
        }
    };

    if labels.is_empty() {
        return Err(MetricError::Undefined("no sentences to label".into()));
    }
    let total = labels.len();
    let misfits = labels.iter().filter(|l| !l.rational).count();
    let missing = missing_subsections(generated, &labels);
    Ok(SrOutcome {
        sr: (total - misfits) as f64 / total as f64,
        labels,
        missing_subsections: missing,
    })
}

trait PipeSentences {
    fn pipe_sentences(&self, kind: SubsectionKind) -> Vec<(SubsectionKind, String)>;
}

impl PipeSentences for &str {
    fn pipe_sentences(&self, kind: SubsectionKind) -> Vec<(SubsectionKind, String)> {
        split_sentences(self).into_iter().map(|s| (kind, s)).collect()
    }
}

/// Count of subsections with no generated content: empty or absent sections
/// for sectioned input, never-predicted subsections for plain input.
pub fn missing_subsections(generated: &GeneratedText, labels: &[SentenceLabel]) -> usize {
    match generated {
        GeneratedText::Sectioned(sections) => SubsectionKind::ALL
            .iter()
            .filter(|kind| sections.get(kind).map_or(true, |t| t.trim().is_empty()))
            .count(),
        GeneratedText::Plain(_) => SubsectionKind::ALL
            .iter()
            .filter(|kind| !labels.iter().any(|l| l.predicted == Some(**kind)))
            .count(),
    }
}

/// The missing-subsection coefficient: 1 with nothing missing, 0.75 for one,
/// extended linearly with a floor of 0 beyond that.
pub fn missing_coefficient(missing: usize) -> f64 {
    (1.0 - 0.25 * missing as f64).max(0.0)
}

/// Rationality-weighted mean sentence similarity against the reference
/// subsection, scaled by the missing coefficient:
/// `CC = (1/m) * sum(s_j * r_j) * k` over all `m` generated sentences.
pub fn score_content_coverage(
    labels: &[SentenceLabel],
    reference: &AnnotatedIntroduction,
    embedder: &dyn EmbeddingScorer,
    missing: usize,
) -> Result<f64, MetricError> {
    if labels.is_empty() {
        return Err(MetricError::Undefined("no sentences to score".into()));
    }
    let mut weighted_sum = 0.0;
    for label in labels {
        if !label.rational {
            continue;
        }
        let Some(section) = label.assigned_section() else {
            continue;
        };
        let reference_text = reference.section(section);
        if reference_text.trim().is_empty() {
            continue;
        }
        weighted_sum += embedder.score_pair(&label.sentence, reference_text)?;
    }
    Ok(weighted_sum / labels.len() as f64 * missing_coefficient(missing))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NqOutcome {
    pub ppl: f64,
    pub above_readability_line: bool,
    pub truncated: bool,
}

/// Perplexity as the exponential of the mean per-token negative
/// log-likelihood, accumulated in log space. Lower is better; values above
/// the readability line are flagged.
pub fn score_narrative_quality(
    text: &str,
    model: &dyn PerplexityModel,
) -> Result<NqOutcome, MetricError> {
    let series = model.token_nlls(text)?;
    if series.nlls.len() < 2 {
        return Err(MetricError::Undefined(
            "text tokenizes to fewer than 2 tokens".into(),
        ));
    }
    let mean_nll = series.nlls.iter().sum::<f64>() / series.nlls.len() as f64;
    let ppl = mean_nll.exp();
    Ok(NqOutcome {
        ppl,
        above_readability_line: ppl > READABILITY_PPL_LINE,
        truncated: series.truncated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcMatch {
    pub offset: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcOutcome {
    /// True iff no citation marker was detected.
    pub qc: bool,
    pub matches: Vec<QcMatch>,
}

/// Words that make a following bracketed numeral a cross-reference rather
/// than a citation.
const BRACKET_EXEMPT_WORDS: [&str; 4] = ["eq", "eqs", "table", "tables"];

fn bracket_is_exempt(text: &str, offset: usize) -> bool {
    let before = text[..offset].trim_end();
    let word_start = before
        .rfind(|c: char| !(c.is_alphanumeric() || c == '.'))
        .map(|i| i + 1)
        .unwrap_or(0);
    let word = before[word_start..].trim_end_matches('.').to_lowercase();
    BRACKET_EXEMPT_WORDS.contains(&word.as_str())
}

/// Scans for citation markers: author-year mentions and bracketed numeric
/// citations, with bracketed numerals in mathematical contexts exempt.
/// `qc` is 1 exactly when no marker matches.
pub fn check_quotation_constraint(text: &str) -> QcOutcome {
    let mut matches: Vec<QcMatch> = Vec::new();
    for regex in [&*AUTHOR_ETAL, &*AUTHOR_PAIR] {
        for m in regex.find_iter(text) {
            matches.push(QcMatch {
                offset: m.start(),
                text: m.as_str().to_string(),
            });
        }
    }
    for m in BRACKET_CITATION.find_iter(text) {
        if !bracket_is_exempt(text, m.start()) {
            matches.push(QcMatch {
                offset: m.start(),
                text: m.as_str().to_string(),
            });
        }
    }
    matches.sort_by(|a, b| a.offset.cmp(&b.offset).then(a.text.cmp(&b.text)));
    matches.dedup();
    QcOutcome {
        qc: matches.is_empty(),
        matches,
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;
    use std::sync::Mutex;

    use super::*;
    use crate::evaluation::backends::{ConstScorer, ScriptedPerplexity, UniformPerplexity};

    /// Classifier that echoes a fixed sentence-to-kind table.
    pub(crate) struct TableClassifier(pub HashMap<String, SubsectionKind>);

    impl SentenceClassifier for TableClassifier {
        fn classify(
            &self,
            sentence: &str,
            _context: &ClassifyContext<'_>,
        ) -> Result<SubsectionKind, EvalBackendError> {
            self.0
                .get(sentence)
                .copied()
                .ok_or_else(|| EvalBackendError::Backend(format!("unlabeled: {sentence}")))
        }

        fn name(&self) -> &str {
            "table"
        }
    }

    /// Embedder that maps each sentence to a preset similarity.
    struct TableEmbedder(Mutex<HashMap<String, f64>>);

    impl EmbeddingScorer for TableEmbedder {
        fn score_pair(&self, a: &str, _b: &str) -> Result<f64, EvalBackendError> {
            self.0
                .lock()
                .unwrap()
                .get(a)
                .copied()
                .ok_or_else(|| EvalBackendError::Backend(format!("no sim for {a}")))
        }

        fn name(&self) -> &str {
            "table"
        }
    }

    fn sectioned_fixture(
        counts: [usize; 4],
    ) -> (GeneratedText, HashMap<String, SubsectionKind>) {
        let mut sections = BTreeMap::new();
        let mut truth = HashMap::new();
        for (kind, count) in SubsectionKind::ALL.into_iter().zip(counts) {
            let sentences: Vec<String> = (0..count)
                .map(|i| format!("Sentence {i} about {}.", kind.slug()))
                .collect();
            for s in &sentences {
                truth.insert(s.clone(), kind);
            }
            sections.insert(kind, sentences.join(" "));
        }
        (GeneratedText::Sectioned(sections), truth)
    }

    #[test]
    fn sr_with_two_misfits_in_ten_is_exactly_point_eight() {
        let (generated, mut truth) = sectioned_fixture([3, 3, 2, 2]);
        // Mislabel two specific sentences.
        let mislabeled: Vec<String> = truth.keys().cloned().collect();
        let mut flipped = 0;
        for sentence in mislabeled {
            if flipped == 2 {
                break;
            }
            let actual = truth[&sentence];
            let wrong = SubsectionKind::ALL
                .into_iter()
                .find(|k| *k != actual)
                .unwrap();
            truth.insert(sentence, wrong);
            flipped += 1;
        }
        let outcome =
            score_structural_rationality(&generated, &TableClassifier(truth)).unwrap();
        assert_eq!(outcome.labels.len(), 10);
        assert_eq!(outcome.sr, 0.8);
    }

    #[test]
    fn sr_is_one_when_classifier_echoes_ground_truth() {
        let (generated, truth) = sectioned_fixture([2, 3, 4, 2]);
        let outcome =
            score_structural_rationality(&generated, &TableClassifier(truth)).unwrap();
        assert_eq!(outcome.sr, 1.0);
        assert_eq!(outcome.missing_subsections, 0);
    }

    #[test]
    fn sr_is_zero_when_everything_is_misplaced() {
        let (generated, truth) = sectioned_fixture([2, 2, 3, 3]);
        let wrong: HashMap<String, SubsectionKind> = truth
            .into_iter()
            .map(|(s, kind)| {
                let wrong = SubsectionKind::ALL.into_iter().find(|k| *k != kind).unwrap();
                (s, wrong)
            })
            .collect();
        let outcome =
            score_structural_rationality(&generated, &TableClassifier(wrong)).unwrap();
        assert_eq!(outcome.sr, 0.0);
    }

    #[test]
    fn sr_plain_path_counts_order_breaks() {
        let text = "First about background. We propose a method here. \
                    However existing work fails. In summary we contribute.";
        let labels = [
            SubsectionKind::Background,
            SubsectionKind::MethodOverviewAndResults,
            SubsectionKind::ProblemAndLimitations,
            SubsectionKind::Contributions,
        ];
        let truth: HashMap<String, SubsectionKind> = split_sentences(text)
            .into_iter()
            .zip(labels)
            .collect();
        let outcome = score_structural_rationality(
            &GeneratedText::Plain(text.into()),
            &TableClassifier(truth),
        )
        .unwrap();
        // The problem-labeled sentence breaks the monotone order.
        assert_eq!(outcome.sr, 0.75);
        assert_eq!(outcome.labels[2].rational, false);
        assert!(outcome.labels[2].emitted_under.is_none());
    }

    #[test]
    fn sr_rejects_empty_input() {
        let generated = GeneratedText::Plain("   ".into());
        assert!(matches!(
            score_structural_rationality(&generated, &HeuristicNoop),
            Err(MetricError::Undefined(_))
        ));
    }

    struct HeuristicNoop;
    impl SentenceClassifier for HeuristicNoop {
        fn classify(
            &self,
            _s: &str,
            _c: &ClassifyContext<'_>,
        ) -> Result<SubsectionKind, EvalBackendError> {
            Ok(SubsectionKind::Background)
        }
        fn name(&self) -> &str {
            "noop"
        }
    }

    fn reference_annotation() -> AnnotatedIntroduction {
        let mut sections = BTreeMap::new();
        let mut outline = BTreeMap::new();
        for kind in SubsectionKind::ALL {
            sections.insert(kind, format!("Reference text for {}.", kind.label()));
            outline.insert(kind, vec!["Point.".into(), "Point.".into()]);
        }
        AnnotatedIntroduction { sections, outline }
    }

    fn label(sentence: &str, kind: SubsectionKind, rational: bool) -> SentenceLabel {
        SentenceLabel {
            sentence: sentence.into(),
            emitted_under: Some(kind),
            predicted: Some(kind),
            rational,
        }
    }

    #[test]
    fn cc_matches_the_worked_example() {
        let labels = vec![
            label("s0", SubsectionKind::Background, true),
            label("s1", SubsectionKind::Background, false),
        ];
        let sims = HashMap::from([("s0".to_string(), 0.8), ("s1".to_string(), 0.6)]);
        let cc = score_content_coverage(
            &labels,
            &reference_annotation(),
            &TableEmbedder(Mutex::new(sims)),
            0,
        )
        .unwrap();
        assert!((cc - 0.4).abs() < 1e-9);
    }

    #[test]
    fn cc_reaches_one_at_the_maximum() {
        let labels: Vec<SentenceLabel> = (0..4)
            .map(|i| label(&format!("s{i}"), SubsectionKind::Background, true))
            .collect();
        let cc = score_content_coverage(
            &labels,
            &reference_annotation(),
            &ConstScorer(1.0),
            0,
        )
        .unwrap();
        assert!((cc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cc_scales_by_the_missing_coefficient() {
        let labels: Vec<SentenceLabel> = (0..4)
            .map(|i| label(&format!("s{i}"), SubsectionKind::Background, true))
            .collect();
        let cc = score_content_coverage(
            &labels,
            &reference_annotation(),
            &ConstScorer(1.0),
            1,
        )
        .unwrap();
        assert!((cc - 0.75).abs() < 1e-12);
        assert_eq!(missing_coefficient(0), 1.0);
        assert_eq!(missing_coefficient(1), 0.75);
        assert_eq!(missing_coefficient(4), 0.0);
        assert_eq!(missing_coefficient(5), 0.0);
    }

    #[test]
    fn cc_matches_direct_summation_oracle_on_random_instances() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(20240817);
        for _ in 0..500 {
            let m = rng.gen_range(1..=5usize);
            let sims: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..=1.0)).collect();
            let rationals: Vec<bool> = (0..m).map(|_| rng.gen_bool(0.5)).collect();
            let missing = usize::from(rng.gen_bool(0.5));

            let labels: Vec<SentenceLabel> = (0..m)
                .map(|j| {
                    let kind = SubsectionKind::from_index(j % 4).unwrap();
                    label(&format!("sentence {j}"), kind, rationals[j])
                })
                .collect();
            let table: HashMap<String, f64> = (0..m)
                .map(|j| (format!("sentence {j}"), sims[j]))
                .collect();
            let cc = score_content_coverage(
                &labels,
                &reference_annotation(),
                &TableEmbedder(Mutex::new(table)),
                missing,
            )
            .unwrap();

            // Independent direct summation.
            let k = if missing == 0 { 1.0 } else { 0.75 };
            let oracle: f64 = sims
                .iter()
                .zip(&rationals)
                .map(|(s, r)| s * if *r { 1.0 } else { 0.0 })
                .sum::<f64>()
                / m as f64
                * k;
            assert!((cc - oracle).abs() < 1e-9, "cc {cc} oracle {oracle}");
        }
    }

    #[test]
    fn nq_of_uniform_model_equals_vocab_size() {
        let text = "seven words of plain test prose here";
        let outcome = score_narrative_quality(text, &UniformPerplexity { vocab_size: 64 }).unwrap();
        assert!((outcome.ppl - 64.0).abs() < 1e-6);
        assert!(outcome.above_readability_line);
        let outcome = score_narrative_quality(text, &UniformPerplexity { vocab_size: 8 }).unwrap();
        assert!((outcome.ppl - 8.0).abs() < 1e-9);
        assert!(!outcome.above_readability_line);
    }

    #[test]
    fn nq_of_deterministic_model_is_one() {
        let outcome = score_narrative_quality(
            "two tokens",
            &ScriptedPerplexity {
                per_token_probability: 1.0,
            },
        )
        .unwrap();
        assert_eq!(outcome.ppl, 1.0);
    }

    #[test]
    fn nq_of_one_eighth_probability_is_eight() {
        let outcome = score_narrative_quality(
            "a few more words here",
            &ScriptedPerplexity {
                per_token_probability: 0.125,
            },
        )
        .unwrap();
        assert!((outcome.ppl - 8.0).abs() < 1e-9);
    }

    #[test]
    fn nq_rejects_too_short_text() {
        let err = score_narrative_quality("one", &UniformPerplexity { vocab_size: 4 }).unwrap_err();
        assert!(matches!(err, MetricError::Undefined(_)));
    }

    #[test]
    fn qc_flags_the_exemplar_markers() {
        let outcome = check_quotation_constraint("as Smith et al., 2023 showed");
        assert!(!outcome.qc);
        assert_eq!(outcome.matches.len(), 1);
        assert!(outcome.matches[0].text.starts_with("Smith et al."));

        let outcome = check_quotation_constraint("this improves accuracy [12].");
        assert!(!outcome.qc);
        assert_eq!(outcome.matches[0].text, "[12]");
    }

    #[test]
    fn qc_passes_citation_free_text() {
        let outcome = check_quotation_constraint(
            "The proposed approach improves coverage while keeping cost low.",
        );
        assert!(outcome.qc);
        assert!(outcome.matches.is_empty());
    }

    #[test]
    fn qc_flags_paired_author_and_parenthesized_forms() {
        assert!(!check_quotation_constraint("after Smith and Jones (2024)").qc);
        assert!(!check_quotation_constraint("shown in (Smith et al. 2023)").qc);
        assert!(!check_quotation_constraint("see [3,7] for details").qc);
    }

    #[test]
    fn qc_exempts_math_context_brackets() {
        assert!(check_quotation_constraint("as defined in Eq. [3]").qc);
        assert!(check_quotation_constraint("reported in Table [2]").qc);
        assert!(!check_quotation_constraint("reported in prior work [2]").qc);
    }

    #[test]
    fn qc_match_offsets_point_at_the_markers() {
        let text = "First [4] then Smith et al., 2021.";
        let outcome = check_quotation_constraint(text);
        assert_eq!(outcome.matches.len(), 2);
        assert_eq!(&text[outcome.matches[0].offset..outcome.matches[0].offset + 3], "[4]");
        assert!(text[outcome.matches[1].offset..].starts_with("Smith"));
    }
}
