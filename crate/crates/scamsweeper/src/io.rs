//! Transaction and label files: CSV and JSONL ingest and export.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use scamsweeper_core::graph::{GraphBuilder, GraphError, GraphSummary, Label, TemporalMultigraph};
use scamsweeper_core::synth::MotifEdge;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: line {line}: {reason}", path.display())]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("{}: {source}", path.display())]
    Graph {
        path: PathBuf,
        #[source]
        source: GraphError,
    },
}

impl IoError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            IoError::NotFound(path.to_path_buf())
        } else {
            IoError::Io { path: path.to_path_buf(), source }
        }
    }

    /// True when the error comes from file contents rather than the file system.
    pub fn is_invalid_input(&self) -> bool {
        matches!(self, IoError::Malformed { .. } | IoError::Graph { .. })
    }
}

pub fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|e| IoError::io(path, e))
}

pub fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| IoError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxFormat {
    Csv,
    Jsonl,
}

impl TxFormat {
    /// `.jsonl`/`.json` means JSONL, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => TxFormat::Jsonl,
            _ => TxFormat::Csv,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            TxFormat::Csv => "csv",
            TxFormat::Jsonl => "jsonl",
        }
    }
}

/// One transaction row as stored on disk. `value` is decimal wei.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRow {
    pub from: String,
    pub to: String,
    pub value: String,
    pub timestamp: u64,
    pub block: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct LabelRow {
    address: String,
    label: String,
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> IoError {
    IoError::Malformed { path: path.to_path_buf(), line, reason: reason.into() }
}

fn graph_err(path: &Path, source: GraphError) -> IoError {
    IoError::Graph { path: path.to_path_buf(), source }
}

fn add_row(b: &mut GraphBuilder, path: &Path, line: usize, row: &TxRow) -> Result<(), IoError> {
    let value: u128 = row
        .value
        .trim()
        .parse()
        .map_err(|_| malformed(path, line, format!("value {:?} is not a decimal wei amount", row.value)))?;
    b.add_transaction(&row.from, &row.to, value, row.timestamp, row.block, line)
        .map_err(|e| graph_err(path, e))
}

fn csv_line(path: &Path, e: &csv::Error, fallback: usize) -> IoError {
    let line = e.position().map_or(fallback, |p| p.line() as usize);
    let reason = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => e.to_string(),
    };
    malformed(path, line, reason)
}

/// Adds every transaction in `path` to `b`. Line numbers are 1-based with the
/// header on line 1 (CSV) or the first object on line 1 (JSONL).
pub fn read_transactions(b: &mut GraphBuilder, path: &Path, format: TxFormat) -> Result<usize, IoError> {
    let file = open(path)?;
    let mut rows = 0;
    match format {
        TxFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
            let headers = reader.headers().map_err(|e| csv_line(path, &e, 1))?.clone();
            if !headers.is_empty() {
                let want = ["from", "to", "value", "timestamp", "block"];
                if headers.len() != want.len() || headers.iter().zip(want).any(|(h, w)| h != w) {
                    return Err(malformed(path, 1, format!("expected header {}", want.join(","))));
                }
            }
            let mut record = csv::StringRecord::new();
            loop {
                match reader.read_record(&mut record) {
                    Ok(false) => break,
                    Ok(true) => {}
                    Err(e) => return Err(csv_line(path, &e, rows + 2)),
                }
                let line = record.position().map_or(rows + 2, |p| p.line() as usize);
                let row: TxRow = record.deserialize(Some(&headers)).map_err(|e| csv_line(path, &e, line))?;
                add_row(b, path, line, &row)?;
                rows += 1;
            }
        }
        TxFormat::Jsonl => {
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let text = line.map_err(|e| IoError::io(path, e))?;
                if text.trim().is_empty() {
                    continue;
                }
                let row: TxRow = serde_json::from_str(&text).map_err(|e| malformed(path, i + 1, e.to_string()))?;
                add_row(b, path, i + 1, &row)?;
                rows += 1;
            }
        }
    }
    Ok(rows)
}

/// Applies `address,label` rows. Unrecognized label text leaves the account unknown.
pub fn read_labels(b: &mut GraphBuilder, path: &Path) -> Result<usize, IoError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let headers = reader.headers().map_err(|e| csv_line(path, &e, 1))?.clone();
    if !headers.is_empty() && (headers.len() != 2 || &headers[0] != "address" || &headers[1] != "label") {
        return Err(malformed(path, 1, "expected header address,label"));
    }
    let mut rows = 0;
    for (i, rec) in reader.deserialize::<LabelRow>().enumerate() {
        let row = rec.map_err(|e| csv_line(path, &e, i + 2))?;
        let line = i + 2;
        let label = Label::parse(&row.label.to_ascii_lowercase()).unwrap_or(Label::Unknown);
        b.label(&row.address, label, line).map_err(|e| graph_err(path, e))?;
        rows += 1;
    }
    Ok(rows)
}

/// Reads a transaction file and an optional label file into a graph.
pub fn ingest(transactions: &Path, labels: Option<&Path>) -> Result<(TemporalMultigraph, GraphSummary), IoError> {
    let mut b = GraphBuilder::new();
    read_transactions(&mut b, transactions, TxFormat::from_path(transactions))?;
    if let Some(l) = labels {
        read_labels(&mut b, l)?;
    }
    let g = b.finish().map_err(|e| graph_err(transactions, e))?;
    let summary = g.summary();
    Ok((g, summary))
}

fn tx_rows(g: &TemporalMultigraph) -> impl Iterator<Item = TxRow> + '_ {
    g.edges().iter().map(|e| TxRow {
        from: g.accounts()[e.from].address.clone(),
        to: g.accounts()[e.to].address.clone(),
        value: e.value.to_string(),
        timestamp: e.timestamp,
        block: e.block,
    })
}

pub fn write_transactions(g: &TemporalMultigraph, path: &Path, format: TxFormat) -> Result<(), IoError> {
    let mut out = create(path)?;
    let io = |e: std::io::Error| IoError::io(path, e);
    match format {
        TxFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut out);
            w.write_record(["from", "to", "value", "timestamp", "block"]).map_err(|e| io(e.into()))?;
            for row in tx_rows(g) {
                w.serialize(row).map_err(|e| io(e.into()))?;
            }
            w.flush().map_err(io)?;
        }
        TxFormat::Jsonl => {
            for row in tx_rows(g) {
                serde_json::to_writer(&mut out, &row).map_err(|e| io(e.into()))?;
                out.write_all(b"\n").map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)
}

/// Writes `address,label` for every account labeled normal, phishing or scam.
pub fn write_labels(g: &TemporalMultigraph, path: &Path) -> Result<(), IoError> {
    let mut out = create(path)?;
    let io = |e: std::io::Error| IoError::io(path, e);
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(["address", "label"]).map_err(|e| io(e.into()))?;
    for a in g.accounts().iter().filter(|a| a.label != Label::Unknown) {
        w.write_record([a.address.as_str(), a.label.as_str()]).map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)?;
    drop(w);
    out.flush().map_err(io)
}

#[derive(Serialize)]
struct MotifLine<'a> {
    edge: usize,
    kind: &'a str,
    role: String,
    principal: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    chain: Option<u32>,
}

/// Motif log: one JSON object per injected edge.
pub fn write_motif_log(g: &TemporalMultigraph, motifs: &[MotifEdge], path: &Path) -> Result<(), IoError> {
    let mut out = create(path)?;
    let io = |e: std::io::Error| IoError::io(path, e);
    for m in motifs {
        let line = MotifLine {
            edge: m.edge,
            kind: m.kind.as_str(),
            role: m.role.name(),
            principal: &g.accounts()[m.principal].address,
            chain: m.chain,
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}
