//! Judge-based evaluation: test cases, sampled 1..5 judge scores per
//! dimension with a majority vote, a resumable run journal, aggregation and
//! table reports.
//!
//! Method outputs are read from `<outputs>/<method>/<case_id>.png`.

pub mod judge;
pub mod report;
pub mod suite;

pub use judge::{judge_prompt, parse_score, HttpJudge, JudgeBackend, JudgeError, MockJudge, PROMPT_TEMPLATE, PROMPT_VERSION};
pub use report::{aggregate, csv_report, format_cents, human_overall, markdown_report, parse_cents, read_human_csv, HumanScore, ScoreTable};
pub use suite::{compose_case, generate_outputs, write_test_suite, SuiteSplit};

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("majority vote over an empty sample list")]
    EmptyVote,
    #[error("score {0} is outside 1..=5")]
    ScoreRange(u8),
    #[error("{path}:{line}: {msg}")]
    Manifest { path: PathBuf, line: usize, msg: String },
    #[error("case {id}: {msg}")]
    Case { id: String, msg: String },
    #[error("no output for case {case_id} / method {method} at {path}")]
    MissingOutput { case_id: String, method: String, path: PathBuf },
    #[error("human scores line {line}: {msg}")]
    HumanCsv { line: usize, msg: String },
    #[error("invalid run options: {0}")]
    Options(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ------------------------------------------------------------------ cases

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseMode {
    PromptOnly,
    SingleAsset,
    MultiAsset,
}

impl CaseMode {
    pub fn for_asset_count(n: usize) -> Self {
        match n {
            0 => CaseMode::PromptOnly,
            1 => CaseMode::SingleAsset,
            _ => CaseMode::MultiAsset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkCase {
    pub id: String,
    pub mode: CaseMode,
    pub prompt: String,
    #[serde(default)]
    pub assets: Vec<PathBuf>,
}

impl BenchmarkCase {
    pub fn check(&self) -> Result<(), BenchError> {
        let bad = |msg: String| Err(BenchError::Case { id: self.id.clone(), msg });
        if self.id.is_empty() || !self.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return bad("id must be non-empty and use only [A-Za-z0-9_-]".into());
        }
        let expect = CaseMode::for_asset_count(self.assets.len());
        if self.mode != expect {
            return bad(format!("mode {:?} does not match {} asset(s)", self.mode, self.assets.len()));
        }
        Ok(())
    }
}

/// Reads a JSON-lines manifest. Relative asset paths resolve against the
/// manifest's directory. Blank lines are skipped; ids must be unique.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<BenchmarkCase>, BenchError> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let reader = BufReader::new(File::open(path)?);
    let mut cases: Vec<BenchmarkCase> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| BenchError::Manifest { path: path.to_path_buf(), line: i + 1, msg };
        let mut case: BenchmarkCase = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        case.check().map_err(|e| err(e.to_string()))?;
        if !seen.insert(case.id.clone()) {
            return Err(err(format!("duplicate case id {}", case.id)));
        }
        for a in &mut case.assets {
            if a.is_relative() {
                *a = base.join(&*a);
            }
        }
        cases.push(case);
    }
    Ok(cases)
}

pub fn write_manifest(cases: &[BenchmarkCase], mut out: impl Write) -> std::io::Result<()> {
    for c in cases {
        serde_json::to_writer(&mut out, c)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

// ------------------------------------------------------------- dimensions

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Layout,
    Color,
    GraphicStyle,
    Compliance,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [Dimension::Layout, Dimension::Color, Dimension::GraphicStyle, Dimension::Compliance];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Layout => "Layout",
            Dimension::Color => "Color",
            Dimension::GraphicStyle => "Graphic Style",
            Dimension::Compliance => "Compliance",
        }
    }

    /// Rubric text shown to the judge.
    pub fn description(self) -> &'static str {
        match self {
            Dimension::Layout => "Focuses on layout and compositional appropriateness.",
            Dimension::Color => {
                "Evaluates whether the color scheme aligns with the poster content and whether the colors are coordinated."
            }
            Dimension::GraphicStyle => {
                "Evaluate how well the fonts, decorative elements, assets, and backgrounds work together, as well as the overall style of the poster."
            }
            Dimension::Compliance => "Evaluate how well the poster generation results follow the prompt.",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name().eq_ignore_ascii_case(s) || serde_json::to_value(d).ok().as_ref().and_then(|v| v.as_str()) == Some(s))
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

// ----------------------------------------------------------------- scores

/// The most frequent score; equally frequent scores resolve to the lower one.
pub fn majority_vote(samples: &[u8]) -> Result<u8, BenchError> {
    if samples.is_empty() {
        return Err(BenchError::EmptyVote);
    }
    let mut counts = [0usize; 6];
    for &s in samples {
        if !(1..=5).contains(&s) {
            return Err(BenchError::ScoreRange(s));
        }
        counts[s as usize] += 1;
    }
    // strict > keeps the lowest score among ties
    let mut best = 1;
    for s in 2..=5 {
        if counts[s] > counts[best] {
            best = s;
        }
    }
    Ok(best as u8)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub case_id: String,
    pub method: String,
    pub dimension: Dimension,
    pub samples: Vec<u8>,
    /// `None` when the judge failed; `error` then says why.
    #[serde(rename = "final")]
    pub final_score: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ScoreRecord {
    pub fn is_missing(&self) -> bool {
        self.final_score.is_none()
    }

    fn key(&self) -> (String, String, Dimension) {
        (self.case_id.clone(), self.method.clone(), self.dimension)
    }

    /// Complete, with `n` samples in range and the right majority.
    fn is_consistent(&self, n: usize) -> bool {
        self.error.is_none() && self.samples.len() == n && majority_vote(&self.samples).ok() == self.final_score
    }
}

pub fn write_records(records: &[ScoreRecord], mut out: impl Write) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<ScoreRecord>, BenchError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path.as_ref())?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| BenchError::Manifest {
            path: path.as_ref().to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

// -------------------------------------------------------------------- run

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub n_samples: usize,
    /// Concurrent judge workers.
    pub workers: usize,
    /// Append-only progress journal; completed records found there are not
    /// re-queried.
    pub journal: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { n_samples: 10, workers: 4, journal: None }
    }
}

/// Path of a method's output for a case.
pub fn output_path(outputs: &Path, method: &str, case_id: &str) -> PathBuf {
    outputs.join(method).join(format!("{case_id}.png"))
}

/// Opens the journal for appending and returns the records already in it.
/// A torn final line (from an interrupted write) is cut off; other lines
/// that do not parse are ignored.
fn open_journal(path: &Path) -> Result<(File, Vec<ScoreRecord>), BenchError> {
    let mut f = OpenOptions::new().read(true).create(true).truncate(false).write(true).open(path)?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    if keep < bytes.len() {
        tracing::warn!(journal = %path.display(), dropped = bytes.len() - keep, "dropping torn journal tail");
        f.set_len(keep as u64)?;
    }
    f.seek(SeekFrom::Start(keep as u64))?;
    let records = bytes[..keep]
        .split(|&b| b == b'\n')
        .filter(|l| !l.is_empty())
        .filter_map(|l| serde_json::from_slice(l).ok())
        .collect();
    Ok((f, records))
}

/// Scores every (case, method, dimension) `n_samples` times.
///
/// Records come back in case, method, dimension order. A judge failure gives
/// a missing record; missing records are not journaled, so a resumed run
/// asks again.
pub fn run_benchmark(
    cases: &[BenchmarkCase],
    outputs: &Path,
    methods: &[String],
    judge: &dyn JudgeBackend,
    opts: &RunOptions,
) -> Result<Vec<ScoreRecord>, BenchError> {
    if opts.n_samples == 0 || opts.workers == 0 {
        return Err(BenchError::Options("n_samples and workers must be positive".into()));
    }
    let mut images: HashMap<(&str, &str), Vec<u8>> = HashMap::new();
    for c in cases {
        for m in methods {
            let path = output_path(outputs, m, &c.id);
            let bytes = std::fs::read(&path).map_err(|_| BenchError::MissingOutput {
                case_id: c.id.clone(),
                method: m.clone(),
                path: path.clone(),
            })?;
            images.insert((c.id.as_str(), m.as_str()), bytes);
        }
    }

    let (journal, done) = match &opts.journal {
        Some(p) => {
            let (f, recs) = open_journal(p)?;
            (Some(Mutex::new(f)), recs)
        }
        None => (None, Vec::new()),
    };
    let mut done: BTreeMap<_, ScoreRecord> =
        done.into_iter().filter(|r| r.is_consistent(opts.n_samples)).map(|r| (r.key(), r)).collect();

    let mut tasks = Vec::new();
    for c in cases {
        for m in methods {
            for d in Dimension::ALL {
                tasks.push((c, m, d));
            }
        }
    }
    let pending: Vec<_> = tasks.iter().filter(|(c, m, d)| !done.contains_key(&(c.id.clone(), (*m).clone(), *d))).collect();
    tracing::info!(total = tasks.len(), pending = pending.len(), "benchmark run");

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| BenchError::Options(e.to_string()))?;
    let journal_err: Mutex<Option<std::io::Error>> = Mutex::new(None);
    let fresh: Vec<ScoreRecord> = pool.install(|| {
        pending
            .par_iter()
            .map(|(c, m, d)| {
                let png = &images[&(c.id.as_str(), m.as_str())];
                let rec = score_one(judge, png, c, m, *d, opts.n_samples);
                if let (Some(j), false) = (&journal, rec.is_missing()) {
                    let mut line = serde_json::to_vec(&rec).expect("record serializes");
                    line.push(b'\n');
                    let mut f = j.lock().expect("journal lock");
                    if let Err(e) = f.write_all(&line).and_then(|_| f.flush()) {
                        journal_err.lock().expect("error slot").get_or_insert(e);
                    }
                }
                rec
            })
            .collect()
    });
    if let Some(e) = journal_err.into_inner().expect("error slot") {
        return Err(e.into());
    }
    for r in fresh {
        done.insert(r.key(), r);
    }
    Ok(tasks
        .iter()
        .filter_map(|(c, m, d)| done.remove(&(c.id.clone(), (*m).clone(), *d)))
        .collect())
}

fn score_one(judge: &dyn JudgeBackend, png: &[u8], case: &BenchmarkCase, method: &str, dim: Dimension, n: usize) -> ScoreRecord {
    let mut samples = Vec::with_capacity(n);
    let mut error = None;
    for k in 0..n {
        match judge.score(png, &case.prompt, dim, k as u32) {
            Ok(s) => samples.push(s.clamp(1, 5)),
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        }
    }
    if let Some(e) = &error {
        tracing::warn!(case = %case.id, method, dimension = %dim, error = %e, "judge failed; record missing");
        samples.clear();
    }
    let final_score = if error.is_none() { majority_vote(&samples).ok() } else { None };
    ScoreRecord { case_id: case.id.clone(), method: method.to_string(), dimension: dim, samples, final_score, error }
}
