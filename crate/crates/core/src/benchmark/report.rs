//! Mean tables and their Markdown / CSV renderings.
//!
//! Means are kept as integer hundredths, rounded half up, so the printed
//! two-decimal value is exact.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{BenchError, Dimension, ScoreRecord};

/// Methods as rows, one column per dimension (or one "Overall" column for
/// human scores). Cells are means in hundredths; `None` when nothing was
/// scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScoreTable {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<u32>>)>,
    /// Footnote lines, e.g. excluded records.
    pub notes: Vec<String>,
}

/// `round_half_up(100 * sum / n)` without floating point.
fn mean_cents(sum: u64, n: u64) -> u32 {
    ((200 * sum + n) / (2 * n)) as u32
}

pub fn format_cents(c: u32) -> String {
    format!("{}.{:02}", c / 100, c % 100)
}

/// Parses `3`, `3.5` or `3.50` into hundredths.
pub fn parse_cents(s: &str) -> Option<u32> {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 2 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let f = match frac.len() {
        0 => 0,
        1 => frac.parse::<u32>().ok()? * 10,
        _ => frac.parse::<u32>().ok()?,
    };
    int.parse::<u32>().ok()?.checked_mul(100)?.checked_add(f)
}

/// Mean final score per (method, dimension). Missing records are excluded
/// and listed in the notes. The result does not depend on record order.
pub fn aggregate(records: &[ScoreRecord]) -> ScoreTable {
    let mut acc: BTreeMap<&str, [(u64, u64); 4]> = BTreeMap::new();
    let mut missing = Vec::new();
    for r in records {
        let cells = acc.entry(r.method.as_str()).or_default();
        match r.final_score {
            Some(s) => {
                let c = &mut cells[r.dimension as usize];
                c.0 += u64::from(s);
                c.1 += 1;
            }
            None => missing.push(format!(
                "missing: {} / {} / {}{}",
                r.case_id,
                r.method,
                r.dimension,
                r.error.as_deref().map(|e| format!(" ({e})")).unwrap_or_default()
            )),
        }
    }
    missing.sort();
    missing.dedup();
    ScoreTable {
        columns: Dimension::ALL.iter().map(|d| d.name().to_string()).collect(),
        rows: acc
            .into_iter()
            .map(|(m, cells)| (m.to_string(), cells.iter().map(|&(s, n)| (n > 0).then(|| mean_cents(s, n))).collect()))
            .collect(),
        notes: missing,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanScore {
    pub case_id: String,
    pub method: String,
    pub score: u32,
}

/// Reads `case_id,method,score` rows (with that header).
pub fn read_human_csv(input: impl Read) -> Result<Vec<HumanScore>, BenchError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        out.push(row.map_err(|e: csv::Error| BenchError::HumanCsv { line: i + 2, msg: e.to_string() })?);
    }
    Ok(out)
}

/// One "Overall" column: mean human score per method.
pub fn human_overall(scores: &[HumanScore]) -> ScoreTable {
    let mut acc: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for s in scores {
        let c = acc.entry(s.method.as_str()).or_default();
        c.0 += u64::from(s.score);
        c.1 += 1;
    }
    ScoreTable {
        columns: vec!["Overall".into()],
        rows: acc.into_iter().map(|(m, (s, n))| (m.to_string(), vec![Some(mean_cents(s, n))])).collect(),
        notes: Vec::new(),
    }
}

impl ScoreTable {
    /// Builds a table from decimal strings ("2.89"); `None` for unparsable.
    pub fn from_decimals(columns: &[&str], rows: &[(&str, &[&str])]) -> Option<Self> {
        Some(ScoreTable {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: rows
                .iter()
                .map(|(m, vals)| Some((m.to_string(), vals.iter().map(|v| parse_cents(v).map(Some)).collect::<Option<Vec<_>>>()?)))
                .collect::<Option<Vec<_>>>()?,
            notes: Vec::new(),
        })
    }

    /// Puts the named methods first, in the given order; others keep their
    /// relative order after them.
    pub fn reorder(&mut self, order: &[String]) {
        let pos = |m: &str| order.iter().position(|o| o == m).unwrap_or(usize::MAX);
        self.rows.sort_by_key(|(m, _)| pos(m));
    }

    pub fn row(&self, method: &str) -> Option<&[Option<u32>]> {
        self.rows.iter().find(|(m, _)| m == method).map(|(_, v)| v.as_slice())
    }

    /// Competition ranking per cell within its column (1 = highest; equal
    /// values share a rank and the next rank is skipped).
    pub fn ranks(&self, col: usize) -> Vec<Option<usize>> {
        let vals: Vec<Option<u32>> = self.rows.iter().map(|(_, v)| v[col]).collect();
        vals.iter()
            .map(|v| v.map(|x| 1 + vals.iter().filter(|o| matches!(o, Some(y) if *y > x)).count()))
            .collect()
    }

    /// Markdown table; rank 1 is bold and rank 2 underlined in each column.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        s.push_str("| Method |");
        for c in &self.columns {
            s.push_str(&format!(" {c} |"));
        }
        s.push_str("\n|---|");
        s.push_str(&"---:|".repeat(self.columns.len()));
        s.push('\n');
        let ranks: Vec<_> = (0..self.columns.len()).map(|c| self.ranks(c)).collect();
        for (i, (m, vals)) in self.rows.iter().enumerate() {
            s.push_str(&format!("| {m} |"));
            for (c, v) in vals.iter().enumerate() {
                let cell = match (v, ranks[c][i]) {
                    (None, _) => "n/a".to_string(),
                    (Some(x), Some(1)) => format!("**{}**", format_cents(*x)),
                    (Some(x), Some(2)) => format!("<u>{}</u>", format_cents(*x)),
                    (Some(x), _) => format_cents(*x),
                };
                s.push_str(&format!(" {cell} |"));
            }
            s.push('\n');
        }
        for n in &self.notes {
            s.push_str(&format!("\n- {n}"));
        }
        if !self.notes.is_empty() {
            s.push('\n');
        }
        s
    }
}

/// Full Markdown report: judge scores, then human scores when given.
pub fn markdown_report(judge: &ScoreTable, human: Option<&ScoreTable>, n_samples: Option<usize>) -> String {
    let mut s = String::from("# Evaluation report\n\n## Scores from judge\n\n");
    s.push_str(&judge.to_markdown());
    s.push_str("\nBold marks the best value in a column and underline the second.");
    match n_samples {
        Some(n) => s.push_str(&format!(
            " Each final score is the most frequent of {n} judge samples; equally frequent scores resolve to the lower one.\n"
        )),
        None => s.push('\n'),
    }
    if let Some(h) = human {
        s.push_str("\n## Scores from human\n\n");
        s.push_str(&h.to_markdown());
    }
    s
}

/// Long-format CSV: `section,method,column,score,rank`.
pub fn csv_report(judge: &ScoreTable, human: Option<&ScoreTable>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["section", "method", "column", "score", "rank"]).expect("in-memory csv");
    let sections = [("judge", Some(judge)), ("human", human)];
    for (name, table) in sections {
        let Some(t) = table else { continue };
        let ranks: Vec<_> = (0..t.columns.len()).map(|c| t.ranks(c)).collect();
        for (i, (m, vals)) in t.rows.iter().enumerate() {
            for (c, v) in vals.iter().enumerate() {
                let score = v.map(format_cents).unwrap_or_default();
                let rank = ranks[c][i].map(|r| r.to_string()).unwrap_or_default();
                w.write_record([name, m, &t.columns[c], &score, &rank]).expect("in-memory csv");
            }
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}
