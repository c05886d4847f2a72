//! Report tables and their CSV/JSON bundle.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ingest::store::write_atomic;

/// Every table and figure the report covers, in index order.
pub const ARTIFACTS: [(&str, &str); 14] = [
    ("fig2a_representation", "Fig 2A"),
    ("fig2b_area", "Fig 2B"),
    ("fig3_emotion_shares", "Fig 3"),
    ("fig4_sentiment_balance", "Fig 4"),
    ("fig5_topic_top_race", "Fig 5"),
    ("fig6_temporal", "Fig 6"),
    ("fig7_vp_matrix", "Fig 7"),
    ("fig10_age_representation", "Fig 10"),
    ("table6_validation", "Table 6"),
    ("table7_chi2_representation", "Table 7"),
    ("table8_emotion_counts", "Table 8"),
    ("table9_chi2_emotion", "Table 9"),
    ("table10_nyt_topics", "Table 10"),
    ("table11_fox_topics", "Table 11"),
];

pub fn artifact_for(name: &str) -> Option<&'static str> {
    ARTIFACTS.iter().find(|(n, _)| *n == name).map(|(_, a)| *a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    Empty,
}

impl Cell {
    /// Non-finite numbers become empty cells.
    pub fn num(x: f64) -> Self {
        if x.is_finite() {
            Cell::Num(x)
        } else {
            Cell::Empty
        }
    }

    pub fn opt(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::num)
    }

    pub fn int(x: u64) -> Self {
        Cell::Int(x as i64)
    }

    pub fn text(s: impl ToString) -> Self {
        Cell::Text(s.to_string())
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Num(x) => Some(*x),
            _ => None,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Num(x) => write!(f, "{x:?}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Empty => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub name: String,
    pub artifact: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl ReportTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            artifact: artifact_for(name).unwrap_or("").to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory csv");
        for row in &self.rows {
            w.write_record(row.iter().map(ToString::to_string)).expect("in-memory csv");
        }
        w.into_inner().expect("in-memory csv")
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("tables serialize");
        v.push(b'\n');
        v
    }

    /// Long format: one record per numeric cell, keyed by the row's text cells.
    pub fn plot_data(&self) -> serde_json::Value {
        let mut out = Vec::new();
        for row in &self.rows {
            let keys: serde_json::Map<String, serde_json::Value> = self
                .columns
                .iter()
                .zip(row)
                .filter_map(|(c, v)| match v {
                    Cell::Text(s) => Some((c.clone(), serde_json::Value::String(s.clone()))),
                    _ => None,
                })
                .collect();
            for (c, v) in self.columns.iter().zip(row) {
                if let Some(x) = v.as_f64() {
                    let mut rec = keys.clone();
                    rec.insert("variable".into(), c.clone().into());
                    rec.insert("value".into(), serde_json::json!(x));
                    out.push(serde_json::Value::Object(rec));
                }
            }
        }
        serde_json::json!({ "name": self.name, "artifact": self.artifact, "records": out })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    #[default]
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

/// Writes tables in one format, plus long-format plot data when asked.
pub fn write_tables(dir: &Path, tables: &[ReportTable], format: OutputFormat, plot_data: bool) -> std::io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for t in tables {
        let path = match format {
            OutputFormat::Csv => {
                let p = dir.join(format!("{}.csv", t.name));
                write_atomic(&p, &t.to_csv())?;
                p
            }
            OutputFormat::Json => {
                let p = dir.join(format!("{}.json", t.name));
                write_atomic(&p, &t.to_json())?;
                p
            }
        };
        written.push(path);
        if plot_data {
            let p = dir.join(format!("{}.plot.json", t.name));
            write_atomic(&p, &serde_json::to_vec_pretty(&t.plot_data()).expect("plot data serializes"))?;
            written.push(p);
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub csv: String,
    pub json: String,
    pub artifact: String,
    pub rows: usize,
}

/// Reads every table JSON under `inputs` and writes the CSV + JSON bundle
/// with `index.json`. Returns the index, keyed by table name.
pub fn emit_report(inputs: &[&Path], report_dir: &Path) -> std::io::Result<BTreeMap<String, IndexEntry>> {
    let mut tables: BTreeMap<String, ReportTable> = BTreeMap::new();
    for dir in inputs {
        if !dir.is_dir() {
            continue;
        }
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        paths.sort();
        for p in paths {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let Some(stem) = name.strip_suffix(".json") else { continue };
            if artifact_for(stem).is_none() {
                continue;
            }
            let t: ReportTable = serde_json::from_slice(&fs::read(&p)?)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", p.display())))?;
            tables.insert(t.name.clone(), t);
        }
    }
    fs::create_dir_all(report_dir)?;
    if tables.is_empty() {
        tracing::warn!(dir = %report_dir.display(), "no statistics found; report bundle is empty");
    }
    let mut index = BTreeMap::new();
    for t in tables.values() {
        write_atomic(&report_dir.join(format!("{}.csv", t.name)), &t.to_csv())?;
        write_atomic(&report_dir.join(format!("{}.json", t.name)), &t.to_json())?;
        index.insert(
            t.name.clone(),
            IndexEntry {
                csv: format!("{}.csv", t.name),
                json: format!("{}.json", t.name),
                artifact: t.artifact.clone(),
                rows: t.rows.len(),
            },
        );
    }
    let mut bytes = serde_json::to_vec_pretty(&index).expect("index serializes");
    bytes.push(b'\n');
    write_atomic(&report_dir.join("index.json"), &bytes)?;
    Ok(index)
}

/// Parses a CSV produced by [`ReportTable::to_csv`] back into strings.
pub fn read_csv(bytes: &[u8]) -> Result<(Vec<String>, Vec<Vec<String>>), csv::Error> {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r.records().map(|rec| rec.map(|r| r.iter().map(str::to_string).collect())).collect::<Result<_, _>>()?;
    Ok((header, rows))
}
