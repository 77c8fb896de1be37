//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured numbers (visible with `--nocapture`).

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use common::{assert_success, fixture_paper, run_cli, write_papers_jsonl};
use stig_core::corpus::{
    build_corpus, parse_annotation_reply, validate_annotation, AnnotationViolationCode,
    BuildConfig, MockAnnotatorClient, MockMetadataClient, ResolveConfig,
};
use stig_core::dataset::{
    emit_ft_plain_record, emit_stage_writing_groups, emit_stig_record,
};
use stig_core::evaluation::{
    check_quotation_constraint, score_content_coverage, score_narrative_quality,
    score_structural_rationality, ClassifyContext, EmbeddingScorer, EvalBackendError,
    GeneratedText, ScriptedPerplexity, SentenceClassifier, SentenceLabel, UniformPerplexity,
};
use stig_core::generation::{
    run_outline_writing, run_stage_writing, run_stig, GenerateOptions, MockBackend,
};
use stig_core::stage::{
    parse, ParseError, ParseErrorKind, ParseMode, StageId, StageSchema, StageSegment,
    StagedSequence, SubsectionKind,
};
use stig_core::text::normalize_whitespace;

struct Xorshift(u64);

impl Xorshift {
    fn next(&mut self) -> u64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        self.0
    }

    fn below(&mut self, bound: u64) -> u64 {
        self.next() % bound
    }
}

fn random_body(rng: &mut Xorshift) -> String {
    const CHARSET: &[u8] = b"abcdefghijklmnopqrstuvwxyz ABCDEFGH0123456789.,;:-<>()\n ";
    let len = rng.below(40) as usize;
    let raw: String = (0..len)
        .map(|_| CHARSET[rng.below(CHARSET.len() as u64) as usize] as char)
        .collect();
    // Bodies must stay free of stage-token literals.
    raw.replace("<STAGE", "(stage").replace("<END", "(end")
}

fn random_sequence(rng: &mut Xorshift) -> StagedSequence {
    let schema = if rng.below(2) == 0 {
        StageSchema::eight()
    } else {
        StageSchema::four()
    };
    let segments = (0..schema.stage_count())
        .map(|k| StageSegment::new(StageId::new(k as u8), random_body(rng)))
        .collect();
    StagedSequence::new(schema, segments)
}

fn eight_block_text() -> String {
    (0..8)
        .map(|k| format!("<STAGE{k}>body {k}<END{k}>"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn criterion_1_stage_grammar_round_trip_and_malformations() {
    let started = Instant::now();

    let mut rng = Xorshift(0x5eed_0001);
    for case in 0..1000 {
        let seq = random_sequence(&mut rng);
        let rendered = seq.render().expect("generator bodies renderable");
        let parsed = parse(&rendered, &seq.schema, ParseMode::Strict)
            .unwrap_or_else(|e| panic!("case {case}: strict parse failed: {e}"));
        assert_eq!(parsed.sequence, seq, "case {case}: round trip mismatch");
    }

    let schema = StageSchema::eight();
    let valid = eight_block_text();
    let malformations: Vec<(&str, String, fn(&ParseError) -> bool)> = vec![
        (
            "missing close",
            valid.replacen("<END3>", "", 1),
            |e| matches!(e.kind, ParseErrorKind::MissingClose { stage } if stage == StageId::new(3)),
        ),
        (
            "out-of-order",
            [0, 1, 3, 2, 4, 5, 6, 7]
                .iter()
                .map(|k| format!("<STAGE{k}>body {k}<END{k}>"))
                .collect::<Vec<_>>()
                .join("\n"),
            |e| matches!(e.kind, ParseErrorKind::OutOfOrderStage { .. }),
        ),
        (
            "duplicate",
            valid.replacen(
                "<STAGE4>body 4<END4>",
                "<STAGE4>body 4<END4>\n<STAGE4>body 4 again<END4>",
                1,
            ),
            |e| matches!(e.kind, ParseErrorKind::DuplicateStage { stage } if stage == StageId::new(4)),
        ),
        (
            "interleaved",
            format!(
                "<STAGE0>a<STAGE1>b<END0>c<END1>\n{}",
                (2..8)
                    .map(|k| format!("<STAGE{k}>body {k}<END{k}>"))
                    .collect::<Vec<_>>()
                    .join("\n")
            ),
            |e| matches!(e.kind, ParseErrorKind::InterleavedToken { .. }),
        ),
        (
            "trailing garbage",
            format!("{valid} and some trailing prose"),
            |e| matches!(e.kind, ParseErrorKind::TrailingGarbage),
        ),
    ];

    for (name, text, expected_kind) in &malformations {
        let err = parse(text, &schema, ParseMode::Strict)
            .expect_err(&format!("{name}: strict must reject"));
        assert!(
            expected_kind(&err),
            "{name}: wrong strict error kind: {err:?}"
        );
        let recovered = parse(text, &schema, ParseMode::Lenient).expect("lenient never fails");
        assert!(
            !recovered.diagnostics.is_empty(),
            "{name}: lenient must report recoveries"
        );
        assert!(
            !recovered.sequence.segments.is_empty(),
            "{name}: lenient must recover blocks"
        );
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5s");
    println!(
        "acceptance 1 PASS: 1000 round trips and 5 malformation classes in {elapsed:?}"
    );
}

struct TableClassifier(BTreeMap<String, SubsectionKind>);

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

struct TableEmbedder(BTreeMap<String, f64>);

impl EmbeddingScorer for TableEmbedder {
    fn score_pair(&self, a: &str, _b: &str) -> Result<f64, EvalBackendError> {
        self.0
            .get(a)
            .copied()
            .ok_or_else(|| EvalBackendError::Backend(format!("no similarity for {a}")))
    }

    fn name(&self) -> &str {
        "table"
    }
}

#[test]
fn criterion_2_metric_oracle_equivalence() {
    let started = Instant::now();

    // Content coverage against an independently coded direct summation.
    let mut rng = Xorshift(0x5eed_0002);
    let reference = {
        let mut sections = BTreeMap::new();
        let mut outline = BTreeMap::new();
        for kind in SubsectionKind::ALL {
            sections.insert(kind, format!("Reference text for {}.", kind.label()));
            outline.insert(kind, vec!["Point.".to_string(), "Point.".to_string()]);
        }
        stig_core::corpus::AnnotatedIntroduction { sections, outline }
    };
    for case in 0..500 {
        let m = 1 + rng.below(5) as usize;
        let sims: Vec<f64> = (0..m).map(|_| rng.below(10_000) as f64 / 10_000.0).collect();
        let rationals: Vec<bool> = (0..m).map(|_| rng.below(2) == 1).collect();
        let missing = rng.below(2) as usize;

        let labels: Vec<SentenceLabel> = (0..m)
            .map(|j| SentenceLabel {
                sentence: format!("sentence {j}"),
                emitted_under: Some(SubsectionKind::ALL[j % 4]),
                predicted: Some(SubsectionKind::ALL[j % 4]),
                rational: rationals[j],
            })
            .collect();
        let table: BTreeMap<String, f64> = (0..m)
            .map(|j| (format!("sentence {j}"), sims[j]))
            .collect();
        let cc = score_content_coverage(&labels, &reference, &TableEmbedder(table), missing)
            .unwrap();

        let k = if missing == 0 { 1.0 } else { 0.75 };
        let oracle = sims
            .iter()
            .zip(&rationals)
            .map(|(s, r)| if *r { *s } else { 0.0 })
            .sum::<f64>()
            / m as f64
            * k;
        assert!(
            (cc - oracle).abs() < 1e-9,
            "case {case}: cc {cc} vs oracle {oracle}"
        );
    }

    // Structural rationality on a 10-sentence fixture with 2 misfits.
    let mut sections = BTreeMap::new();
    let mut truth: BTreeMap<String, SubsectionKind> = BTreeMap::new();
    let counts = [3usize, 3, 2, 2];
    for (kind, count) in SubsectionKind::ALL.into_iter().zip(counts) {
        let sentences: Vec<String> = (0..count)
            .map(|i| format!("Sentence {i} about {}.", kind.slug()))
            .collect();
        for s in &sentences {
            truth.insert(s.clone(), kind);
        }
        sections.insert(kind, sentences.join(" "));
    }
    // Flip exactly two labels.
    truth.insert(
        "Sentence 0 about background.".into(),
        SubsectionKind::Contributions,
    );
    truth.insert(
        "Sentence 1 about problem_and_limitations.".into(),
        SubsectionKind::Background,
    );
    let outcome = score_structural_rationality(
        &GeneratedText::Sectioned(sections),
        &TableClassifier(truth),
    )
    .unwrap();
    assert_eq!(outcome.labels.len(), 10);
    assert_eq!(outcome.sr, 0.8, "sr must be exactly 0.8");

    // Perplexity identities.
    let text = "ten tokens of deterministic prose for the perplexity check";
    let uniform = score_narrative_quality(text, &UniformPerplexity { vocab_size: 64 }).unwrap();
    assert!(
        (uniform.ppl - 64.0).abs() < 1e-6,
        "uniform vocab-64 ppl {}",
        uniform.ppl
    );
    let deterministic = score_narrative_quality(
        text,
        &ScriptedPerplexity {
            per_token_probability: 1.0,
        },
    )
    .unwrap();
    assert_eq!(deterministic.ppl, 1.0);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5s");
    println!(
        "acceptance 2 PASS: 500 CC oracle cases, SR 0.8 fixture, PPL 64/1 identities in {elapsed:?}"
    );
}

#[test]
fn criterion_3_quotation_constraint_fixtures() {
    let flagged = check_quotation_constraint("as Smith et al., 2023 demonstrated");
    assert!(!flagged.qc);
    assert!(flagged.matches[0].text.contains("Smith et al."));
    let flagged = check_quotation_constraint("this improves accuracy [12] overall");
    assert!(!flagged.qc);
    assert_eq!(flagged.matches[0].text, "[12]");

    // A 500-word citation-free fixture.
    let pool = [
        "staged", "drafting", "keeps", "structure", "coherent", "across", "long", "form",
        "academic", "text", "while", "planning", "separates", "from", "realization", "the",
        "pipeline", "improves", "coverage", "quality", "without", "extra", "cost",
    ];
    let mut words = Vec::with_capacity(500);
    let mut rng = Xorshift(0x5eed_0003);
    for i in 0..500 {
        let mut word = pool[rng.below(pool.len() as u64) as usize].to_string();
        if i % 9 == 0 {
            word = {
                let mut chars = word.chars();
                let first = chars.next().unwrap().to_ascii_uppercase();
                format!("{first}{}", chars.as_str())
            };
        }
        words.push(if i % 9 == 8 { format!("{word}.") } else { word });
    }
    let fixture = words.join(" ");
    assert_eq!(fixture.split_whitespace().count(), 500);
    let outcome = check_quotation_constraint(&fixture);
    assert!(outcome.qc, "citation-free fixture flagged: {:?}", outcome.matches);

    // Monotonicity: appending any marker flips qc to 0.
    let surnames = ["Smith", "Jones", "Lee", "Garcia", "Chen"];
    for case in 0..100 {
        let base: String = (0..(5 + rng.below(20)))
            .map(|_| pool[rng.below(pool.len() as u64) as usize])
            .collect::<Vec<_>>()
            .join(" ");
        assert!(check_quotation_constraint(&base).qc, "base text not clean");
        let surname = surnames[rng.below(5) as usize];
        let year = 1990 + rng.below(40);
        let marker = match case % 4 {
            0 => format!("{surname} et al., {year}"),
            1 => format!("({surname} et al. {year})"),
            2 => format!("{surname} and {surname}, {year}"),
            _ => format!("[{}]", 1 + rng.below(150)),
        };
        let appended = format!("{base} as reported in {marker}.");
        assert!(
            !check_quotation_constraint(&appended).qc,
            "case {case}: marker {marker:?} not flagged"
        );
    }
    println!("acceptance 3 PASS: exemplar markers flagged, 500-word fixture clean, 100 append tests monotone");
}

#[test]
fn criterion_4_annotation_validator_on_the_published_sample() {
    let data = include_str!("../../core/tests/fixtures/annotation_sample.json");
    let annotation = parse_annotation_reply(data).expect("fixture parses");
    let original = SubsectionKind::ALL
        .iter()
        .map(|k| annotation.section(*k))
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ");

    let sizes: Vec<usize> = SubsectionKind::ALL
        .iter()
        .map(|k| annotation.points(*k).len())
        .collect();
    assert_eq!(sizes, vec![3, 4, 7, 3]);
    let bounds = [(2, 4), (2, 6), (4, 8), (2, 3)];
    for (size, (min, max)) in sizes.iter().zip(bounds) {
        assert!((min..=max).contains(size));
    }
    assert_eq!(validate_annotation(&annotation, &original), vec![]);

    // Out-of-bounds fixture: background padded to five points.
    let mut out_of_bounds = annotation.clone();
    out_of_bounds
        .outline
        .get_mut(&SubsectionKind::Background)
        .unwrap()
        .extend(["Extra.".to_string(), "Extra again.".to_string()]);
    let violations = validate_annotation(&out_of_bounds, &original);
    assert!(
        violations
            .iter()
            .any(|v| v.code == AnnotationViolationCode::PointCountOutOfBounds
                && v.section == Some(SubsectionKind::Background)),
        "expected a point-count violation, got {violations:?}"
    );

    // Out-of-order fixture: problem and method section texts swapped.
    let mut out_of_order = annotation.clone();
    let problem = out_of_order.section(SubsectionKind::ProblemAndLimitations).to_string();
    let method = out_of_order.section(SubsectionKind::MethodOverviewAndResults).to_string();
    out_of_order
        .sections
        .insert(SubsectionKind::ProblemAndLimitations, method);
    out_of_order
        .sections
        .insert(SubsectionKind::MethodOverviewAndResults, problem);
    let violations = validate_annotation(&out_of_order, &original);
    assert!(
        violations
            .iter()
            .any(|v| v.code == AnnotationViolationCode::SectionOutOfOrder),
        "expected an out-of-order violation, got {violations:?}"
    );
    println!("acceptance 4 PASS: sample validates with outline sizes 3/4/7/3; violation codes correct");
}

fn built_samples(count: usize) -> Vec<stig_core::corpus::CorpusSample> {
    let papers: Vec<_> = (0..count).map(fixture_paper).collect();
    let config = BuildConfig {
        resolve: ResolveConfig::immediate(),
        ..BuildConfig::default()
    };
    let (samples, report) =
        build_corpus(&papers, &MockAnnotatorClient, &MockMetadataClient, &config);
    assert_eq!(report.succeeded, count);
    samples
}

#[test]
fn criterion_5_dataset_cross_variant_consistency() {
    let samples = built_samples(10);
    assert_eq!(samples.len(), 10);
    for sample in &samples {
        let stig = emit_stig_record(sample, &StageSchema::eight()).unwrap();
        let parsed = parse(&stig.output, &StageSchema::eight(), ParseMode::Strict).unwrap();
        let extracted = parsed.sequence.extract_introduction().unwrap();
        let plain = emit_ft_plain_record(sample).unwrap();
        assert_eq!(
            normalize_whitespace(&extracted),
            normalize_whitespace(&plain.output),
            "paper {}",
            sample.paper.paper_id
        );

        let groups = emit_stage_writing_groups(sample).unwrap();
        assert_eq!(groups.len(), 8);
        let bodies: Vec<&str> = parsed.sequence.segments.iter().map(|s| s.body.as_str()).collect();
        let outputs: Vec<&str> = groups.iter().map(|g| g.output.as_str()).collect();
        assert_eq!(outputs, bodies, "paper {}", sample.paper.paper_id);
    }
    println!("acceptance 5 PASS: 10 samples consistent across stig8, ftplain, and stage groups");
}

#[test]
fn criterion_6_workflow_call_count_law() {
    let samples = built_samples(1);
    let core = samples[0].core();
    let options = GenerateOptions::default();

    let backend = MockBackend::default();
    let stig = run_stig(&core, &backend, &StageSchema::eight(), &options).unwrap();
    assert_eq!(backend.calls(), 1, "staged workflow must issue exactly 1 call");
    assert_eq!(stig.ledger.calls.len(), 1);
    let stig_total = stig.ledger.total_tokens();

    let backend = MockBackend::default();
    let stage_writing = run_stage_writing(&core, &backend, &options).unwrap();
    assert_eq!(backend.calls(), 8, "stage writing must issue exactly 8 calls");
    assert_eq!(stage_writing.ledger.calls.len(), 8);

    let backend = MockBackend::default();
    assert_eq!(backend.outline_points, 4);
    let outline = run_outline_writing(&core, &backend, &options).unwrap();
    assert_eq!(backend.calls(), 5, "outline writing must issue n+1 = 5 calls");
    assert_eq!(outline.ledger.calls.len(), 5);

    assert!(
        stig_total < stage_writing.ledger.total_tokens(),
        "single-inference total {} must undercut stage-writing total {}",
        stig_total,
        stage_writing.ledger.total_tokens()
    );
    println!(
        "acceptance 6 PASS: calls 1/8/5; totals {} < {}",
        stig_total,
        stage_writing.ledger.total_tokens()
    );
}

#[test]
fn criterion_7_four_stage_granularity_parity() {
    let dir = tempfile::tempdir().unwrap();
    let papers = dir.path().join("papers.jsonl");
    write_papers_jsonl(&papers, 4);
    let corpus_dir = dir.path().join("corpus");
    let out = run_cli(&[
        "build-corpus",
        "--input",
        papers.to_str().unwrap(),
        "--out",
        corpus_dir.to_str().unwrap(),
        "--test-ids",
        "p002,p003",
        "--backoff-ms",
        "0",
    ]);
    assert_success(&out, "build-corpus");
    let corpus = corpus_dir.join("corpus.jsonl");

    // Four-stage dataset emission.
    let dataset_dir = dir.path().join("dataset4");
    let out = run_cli(&[
        "emit-dataset",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        dataset_dir.to_str().unwrap(),
        "--schema",
        "four",
    ]);
    assert_success(&out, "emit-dataset --schema four");
    let registry = std::fs::read_to_string(dataset_dir.join("special_tokens.txt")).unwrap();
    assert_eq!(registry.lines().count(), 8);

    // Four-stage generation and evaluation.
    let runs = dir.path().join("runs4");
    let out = run_cli(&[
        "generate",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        runs.to_str().unwrap(),
        "--workflow",
        "stig",
        "--schema",
        "four",
        "--backend",
        "mock",
    ]);
    assert_success(&out, "generate --schema four");
    let eval_dir = dir.path().join("eval4");
    let out = run_cli(&[
        "evaluate",
        "--runs",
        runs.to_str().unwrap(),
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    assert_success(&out, "evaluate");

    let reports = std::fs::read_to_string(eval_dir.join("reports.jsonl")).unwrap();
    let mut rows = 0;
    for line in reports.lines() {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        rows += 1;
        for metric in ["ss", "sr", "cc", "nq", "qc"] {
            assert!(
                value[metric]["value"].is_number(),
                "metric {metric} not populated in {line}"
            );
        }
    }
    assert_eq!(rows, 2);
    println!("acceptance 7 PASS: four-stage pipeline end-to-end with all five metrics populated");
}

fn hash_tree(root: &Path) -> BTreeMap<String, String> {
    use sha2::{Digest, Sha256};
    let mut hashes = BTreeMap::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.unwrap();
        if entry.file_type().is_file() {
            let rel = entry
                .path()
                .strip_prefix(root)
                .unwrap()
                .to_string_lossy()
                .to_string();
            let mut hasher = Sha256::new();
            hasher.update(std::fs::read(entry.path()).unwrap());
            hashes.insert(rel, format!("{:x}", hasher.finalize()));
        }
    }
    hashes
}

fn run_full_pipeline(root: &Path, papers: &Path) {
    let corpus_dir = root.join("corpus");
    let out = run_cli(&[
        "build-corpus",
        "--input",
        papers.to_str().unwrap(),
        "--out",
        corpus_dir.to_str().unwrap(),
        "--test-ids",
        "p005,p006,p007,p008,p009",
        "--backoff-ms",
        "0",
    ]);
    assert_success(&out, "build-corpus");
    let corpus = corpus_dir.join("corpus.jsonl");

    let out = run_cli(&[
        "emit-dataset",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        root.join("dataset").to_str().unwrap(),
        "--variants",
        "stig8,stig4,ftplain,stagegroups",
    ]);
    assert_success(&out, "emit-dataset");

    for workflow in ["stig", "pure", "elaborate", "outline", "stage_writing"] {
        let out = run_cli(&[
            "generate",
            "--corpus",
            corpus.to_str().unwrap(),
            "--out",
            root.join("runs").to_str().unwrap(),
            "--workflow",
            workflow,
            "--backend",
            "mock",
            "--jobs",
            "2",
        ]);
        assert_success(&out, &format!("generate {workflow}"));
    }

    let out = run_cli(&[
        "evaluate",
        "--runs",
        root.join("runs").to_str().unwrap(),
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        root.join("eval").to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert_success(&out, "evaluate");

    let out = run_cli(&[
        "ledger",
        "--runs",
        root.join("runs").to_str().unwrap(),
        "--out",
        root.join("ledger").to_str().unwrap(),
    ]);
    assert_success(&out, "ledger");
}

#[test]
fn criterion_8_end_to_end_smoke_is_deterministic() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let papers = dir.path().join("papers.jsonl");
    write_papers_jsonl(&papers, 10);

    // Two runs at the same path; every byte must match.
    let root = dir.path().join("pipeline");
    run_full_pipeline(&root, &papers);
    let first = hash_tree(&root);
    std::fs::remove_dir_all(&root).unwrap();
    run_full_pipeline(&root, &papers);
    let second = hash_tree(&root);
    assert!(!first.is_empty());
    assert_eq!(first, second, "pipeline outputs differ across runs");

    // Expected artifact inventory.
    assert!(first.keys().any(|k| k.ends_with("corpus.jsonl")));
    assert_eq!(
        first.keys().filter(|k| k.starts_with("dataset/") && k.ends_with(".jsonl")).count(),
        11
    );
    for workflow in ["stig", "pure", "elaborate", "outline", "stage_writing"] {
        assert_eq!(
            first
                .keys()
                .filter(|k| k.starts_with(&format!("runs/{workflow}/")) && k.ends_with("introduction.txt"))
                .count(),
            5,
            "workflow {workflow} run count"
        );
    }
    assert!(first.contains_key("eval/summary.tsv"));
    assert!(first.contains_key("ledger/ledger.tsv"));
    assert!(first.contains_key("ledger/ledger_chart.svg"));

    // The summary covers all five methods.
    let summary = std::fs::read_to_string(root.join("eval/summary.tsv")).unwrap();
    assert_eq!(summary.lines().count(), 6);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 60s");
    println!("acceptance 8 PASS: two identical end-to-end runs in {elapsed:?}");
}
