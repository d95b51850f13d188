//! Benchmark runner: journal resume, judge failures, concurrency, reports.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use num_rational::Ratio;
use proptest::prelude::*;
use strata_core::benchmark::*;
use strata_core::font::FontCatalog;
use strata_core::pipeline::{MockBm, MockPm};
use strata_core::protocol::CanvasSize;

const METHODS: [&str; 2] = ["alpha", "beta"];

fn methods() -> Vec<String> {
    METHODS.iter().map(|m| m.to_string()).collect()
}

/// Small suite with mock outputs for two methods at two canvas sizes.
fn setup(dir: &Path) -> Vec<BenchmarkCase> {
    let split = SuiteSplit { prompt_only: 3, single_asset: 2, multi_asset: 1 };
    let cases = write_test_suite(dir.join("suite"), 5, split).unwrap();
    let fonts = FontCatalog::embedded();
    for (m, size) in METHODS.iter().zip([(96, 128), (128, 96)]) {
        let size = CanvasSize::new(size.0, size.1).unwrap();
        generate_outputs(&cases, m, &dir.join("out"), size, &MockPm, &MockBm, &fonts).unwrap();
    }
    cases
}

/// Counts calls and fails on request.
struct Counting<F> {
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    fail: F,
}

impl<F: Fn(&str, Dimension) -> bool + Sync> Counting<F> {
    fn new(fail: F) -> Self {
        Counting { calls: AtomicUsize::new(0), in_flight: AtomicUsize::new(0), peak: AtomicUsize::new(0), fail }
    }
}

impl<F: Fn(&str, Dimension) -> bool + Sync> JudgeBackend for Counting<F> {
    fn score(&self, png: &[u8], prompt: &str, dim: Dimension, sample: u32) -> Result<u8, JudgeError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(std::time::Duration::from_micros(200));
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        if (self.fail)(prompt, dim) {
            return Err(JudgeError::NoScore("no digits".into()));
        }
        MockJudge.score(png, prompt, dim, sample)
    }
}

fn records_bytes(r: &[ScoreRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    write_records(r, &mut out).unwrap();
    out
}

#[test]
fn runs_are_reproducible_and_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cases = setup(dir.path());
    let out = dir.path().join("out");
    let one = run_benchmark(&cases, &out, &methods(), &MockJudge, &RunOptions { workers: 1, ..Default::default() }).unwrap();
    let many = run_benchmark(&cases, &out, &methods(), &MockJudge, &RunOptions { workers: 7, ..Default::default() }).unwrap();
    assert_eq!(one.len(), cases.len() * 2 * 4);
    assert_eq!(records_bytes(&one), records_bytes(&many));
    let t = aggregate(&one);
    assert_eq!(markdown_report(&t, None, Some(10)), markdown_report(&aggregate(&many), None, Some(10)));
    // methods differ in output, so the mock judge sees different images
    assert_ne!(t.row("alpha"), t.row("beta"));
}

#[test]
fn worker_count_bounds_concurrency() {
    let dir = tempfile::tempdir().unwrap();
    let cases = setup(dir.path());
    let judge = Counting::new(|_, _| false);
    run_benchmark(&cases, &dir.path().join("out"), &methods(), &judge, &RunOptions { n_samples: 2, workers: 3, journal: None }).unwrap();
    assert!(judge.peak.load(Ordering::SeqCst) <= 3);
    assert_eq!(judge.calls.load(Ordering::SeqCst), cases.len() * 2 * 4 * 2);
}

#[test]
fn journal_resume_skips_completed_work() {
    let dir = tempfile::tempdir().unwrap();
    let cases = setup(dir.path());
    let out = dir.path().join("out");
    let journal = dir.path().join("journal.jsonl");
    let opts = RunOptions { journal: Some(journal.clone()), ..Default::default() };
    let full = run_benchmark(&cases, &out, &methods(), &MockJudge, &opts).unwrap();
    let total = full.len();

    // simulate an interrupted run: keep 10 lines plus half of the 11th
    let text = std::fs::read_to_string(&journal).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), total);
    let mut cut = lines[..10].join("\n");
    cut.push('\n');
    cut.push_str(&lines[10][..lines[10].len() / 2]);
    std::fs::write(&journal, cut).unwrap();

    let judge = Counting::new(|_, _| false);
    let resumed = run_benchmark(&cases, &out, &methods(), &judge, &opts).unwrap();
    assert_eq!(resumed, full);
    assert_eq!(judge.calls.load(Ordering::SeqCst), (total - 10) * 10);
    assert_eq!(read_records(&journal).unwrap().len(), total);

    let judge = Counting::new(|_, _| false);
    assert_eq!(run_benchmark(&cases, &out, &methods(), &judge, &opts).unwrap(), full);
    assert_eq!(judge.calls.load(Ordering::SeqCst), 0);
}

#[test]
fn inconsistent_journal_records_are_requeried() {
    let dir = tempfile::tempdir().unwrap();
    let cases = setup(dir.path());
    let out = dir.path().join("out");
    let journal = dir.path().join("journal.jsonl");
    let opts = RunOptions { journal: Some(journal.clone()), ..Default::default() };
    let full = run_benchmark(&cases, &out, &methods(), &MockJudge, &opts).unwrap();
    let mut recs = read_records(&journal).unwrap();
    recs[0].final_score = Some(if recs[0].final_score == Some(1) { 2 } else { 1 });
    let mut bytes = records_bytes(&recs);
    bytes.extend_from_slice(b"not json\n");
    std::fs::write(&journal, bytes).unwrap();
    let judge = Counting::new(|_, _| false);
    assert_eq!(run_benchmark(&cases, &out, &methods(), &judge, &opts).unwrap(), full);
    assert_eq!(judge.calls.load(Ordering::SeqCst), 10);
}

#[test]
fn judge_failures_leave_missing_records() {
    let dir = tempfile::tempdir().unwrap();
    let cases = setup(dir.path());
    let out = dir.path().join("out");
    let journal = dir.path().join("journal.jsonl");
    let opts = RunOptions { journal: Some(journal.clone()), ..Default::default() };
    let bad_prompt = cases[0].prompt.clone();
    let flaky = Counting::new(move |p, d| p == bad_prompt && d == Dimension::Color);
    let recs = run_benchmark(&cases, &out, &methods(), &flaky, &opts).unwrap();
    let missing: Vec<_> = recs.iter().filter(|r| r.is_missing()).collect();
    assert_eq!(missing.len(), 2);
    assert!(missing.iter().all(|r| r.samples.is_empty() && r.error.is_some() && r.case_id == cases[0].id));

    let t = aggregate(&recs);
    assert_eq!(t.notes.len(), 2);
    assert!(t.notes[0].starts_with(&format!("missing: {} / alpha / Color", cases[0].id)));
    assert!(t.to_markdown().contains("- missing: "));
    assert_eq!(read_records(&journal).unwrap().len(), recs.len() - 2);

    let judge = Counting::new(|_, _| false);
    let healed = run_benchmark(&cases, &out, &methods(), &judge, &opts).unwrap();
    assert_eq!(judge.calls.load(Ordering::SeqCst), 20);
    assert!(healed.iter().all(|r| !r.is_missing()));
}

#[test]
fn missing_outputs_are_reported_up_front() {
    let dir = tempfile::tempdir().unwrap();
    let cases = setup(dir.path());
    std::fs::remove_file(output_path(&dir.path().join("out"), "beta", &cases[2].id)).unwrap();
    let judge = Counting::new(|_, _| false);
    let e = run_benchmark(&cases, &dir.path().join("out"), &methods(), &judge, &RunOptions::default()).unwrap_err();
    assert!(matches!(e, BenchError::MissingOutput { ref method, .. } if method == "beta"));
    assert_eq!(judge.calls.load(Ordering::SeqCst), 0);
}

#[test]
fn manifest_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cases.jsonl");
    std::fs::write(&path, "{\"id\":\"a\",\"mode\":\"prompt_only\",\"prompt\":\"p\",\"assets\":[]}\n\n{\"id\":\"a\",\"mode\":\"prompt_only\",\"prompt\":\"q\",\"assets\":[]}\n").unwrap();
    assert!(matches!(read_manifest(&path), Err(BenchError::Manifest { line: 3, .. })));
    std::fs::write(&path, "{\"id\":\"a b\",\"mode\":\"prompt_only\",\"prompt\":\"p\",\"assets\":[]}\n").unwrap();
    assert!(read_manifest(&path).is_err());
}

/// Mean of `scores` as hundredths, rounded half up, via exact rationals.
fn oracle_mean(scores: &[u8]) -> u32 {
    let sum: i64 = scores.iter().map(|&s| i64::from(s)).sum();
    (Ratio::new(100 * sum, scores.len() as i64) + Ratio::new(1, 2)).floor().to_integer() as u32
}

fn oracle_vote(samples: &[u8]) -> u8 {
    let mut counts: HashMap<u8, usize> = HashMap::new();
    for &s in samples {
        *counts.entry(s).or_default() += 1;
    }
    let top = *counts.values().max().unwrap();
    *counts.iter().filter(|(_, &c)| c == top).map(|(s, _)| s).min().unwrap()
}

#[test]
fn majority_vote_examples() {
    assert_eq!(majority_vote(&[5; 10]).unwrap(), 5);
    assert_eq!(majority_vote(&[3, 3, 3, 4, 4, 4, 4, 5, 5, 2]).unwrap(), 4);
    assert_eq!(majority_vote(&[3, 3, 3, 3, 3, 4, 4, 4, 4, 4]).unwrap(), 3);
}

#[test]
fn published_means_format_with_ranks() {
    let cols: Vec<&str> = Dimension::ALL.iter().map(|d| d.name()).collect();
    let t = ScoreTable::from_decimals(
        &cols,
        &[
            ("model-S", &["2.89", "4.33", "4.24", "3.73"]),
            ("model-F", &["2.71", "4.36", "3.97", "3.67"]),
            ("baseline-A", &["1.60", "4.57", "2.33", "3.03"]),
            ("baseline-B", &["2.61", "3.55", "3.64", "2.38"]),
            ("baseline-C", &["2.85", "4.11", "3.68", "3.20"]),
        ],
    )
    .unwrap();
    let md = t.to_markdown();
    assert!(md.contains("| model-S | **2.89** | 4.33 | **4.24** | **3.73** |"), "{md}");
    assert!(md.contains("| model-F | 2.71 | <u>4.36</u> | <u>3.97</u> | <u>3.67</u> |"), "{md}");
    assert!(md.contains("| baseline-A | 1.60 | **4.57** | 2.33 | 3.03 |"), "{md}");
    assert!(md.contains("| baseline-C | <u>2.85</u> |"), "{md}");
    let csv = csv_report(&t, None);
    assert!(csv.contains("judge,model-S,Graphic Style,4.24,1\n"));
}

#[test]
fn shared_first_place_is_bold_for_both() {
    let t = ScoreTable::from_decimals(&["Graphic Style"], &[("a", &["3.92"]), ("b", &["3.92"]), ("c", &["3.50"])]).unwrap();
    let md = t.to_markdown();
    assert!(md.contains("| a | **3.92** |") && md.contains("| b | **3.92** |") && md.contains("| c | 3.50 |"));
}

#[test]
fn human_csv_overall() {
    let csv = "case_id,method,score\nc1, m1 ,3\nc2,m1,2\nc1,m2,1\n";
    let t = human_overall(&read_human_csv(csv.as_bytes()).unwrap());
    assert_eq!(t.row("m1"), Some(&[Some(250)][..]));
    assert_eq!(t.row("m2"), Some(&[Some(100)][..]));
    let bad = "case_id,method,score\nc1,m1,x\n";
    assert!(matches!(read_human_csv(bad.as_bytes()), Err(BenchError::HumanCsv { line: 2, .. })));
}

fn record(case: usize, method: &str, d: Dimension, samples: Vec<u8>) -> ScoreRecord {
    let f = majority_vote(&samples).unwrap();
    ScoreRecord { case_id: format!("c{case}"), method: method.into(), dimension: d, samples, final_score: Some(f), error: None }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn vote_matches_counting_oracle(s in proptest::collection::vec(1u8..=5, 1..20)) {
        prop_assert_eq!(majority_vote(&s).unwrap(), oracle_vote(&s));
    }

    #[test]
    fn aggregate_matches_rational_mean(finals in proptest::collection::vec((1u8..=5, 0usize..4, 0usize..2), 1..200)) {
        let recs: Vec<_> = finals
            .iter()
            .enumerate()
            .map(|(i, &(f, d, m))| record(i, ["m0", "m1"][m], Dimension::ALL[d], vec![f; 3]))
            .collect();
        let t = aggregate(&recs);
        let mut rev = recs.clone();
        rev.reverse();
        prop_assert_eq!(&aggregate(&rev), &t);
        for (m, row) in &t.rows {
            for (d, cell) in row.iter().enumerate() {
                let scores: Vec<u8> = finals.iter().filter(|&&(_, dd, mm)| dd == d && ["m0", "m1"][mm] == m).map(|x| x.0).collect();
                prop_assert_eq!(*cell, (!scores.is_empty()).then(|| oracle_mean(&scores)));
            }
        }
    }

    #[test]
    fn cents_round_trip(c in 0u32..100_000) {
        prop_assert_eq!(parse_cents(&format_cents(c)), Some(c));
    }
}
