//! Frame dissection, timestamp-window labeling and the dataset CSV format.
//!
//! Every dissected frame becomes one row of a fixed, flat schema named after
//! Wireshark display fields, followed by the `type` label column. CoAP fields
//! are empty whenever the UDP payload is not a decodable CoAP message.
//! Options that can occur several times report their last occurrence,
//! except `coap.opt.uri_path`, which joins every segment with `/`.
//!
//! CSV dialect: comma separated, double-quote quoting, UTF-8, LF line ends,
//! mandatory header row. An empty cell is a null value. The reader accepts
//! any set of columns, so captures exported with a wider field list load
//! unchanged.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::IpAddr;
use std::path::Path;

use thiserror::Error;

use crate::coap_wire::{content_format_name, decode_message, CoapMessage};
use crate::traffic_synth::{AttackKind, Label, LabeledFrame};

pub const TYPE_COLUMN: &str = "type";
pub const TIME_RELATIVE_COLUMN: &str = "frame.time_relative";

/// Epoch second the synthetic captures start at (2024-01-01T00:00:00Z).
pub const CAPTURE_EPOCH_S: f64 = 1_704_067_200.0;

/// Feature columns produced by [`dissect`], in order. `type` follows them.
pub const FRAME_COLUMNS: [&str; 20] = [
    "frame.time_epoch",
    "frame.time_relative",
    "frame.len",
    "eth.src",
    "eth.dst",
    "udp.srcport",
    "udp.dstport",
    "coap.version",
    "coap.type",
    "coap.code",
    "coap.mid",
    "coap.token",
    "coap.opt.ctype",
    "coap.opt.desc",
    "coap.opt.name",
    "coap.opt.uri_path",
    "coap.payload_desc",
    "coap.opt.observe",
    "coap.opt.block_size",
    "coap.payload_length",
];

const ETHERNET_HEADER: usize = 14;
const UDP_HEADER: usize = 8;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: row has {found} cells but the header has {expected}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("table has no `type` column")]
    MissingTypeColumn,
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("windows [{first_start}, {first_end}) ({first}) and [{second_start}, {second_end}) ({second}) overlap")]
    OverlappingWindows {
        first: AttackKind,
        first_start: f64,
        first_end: f64,
        second: AttackKind,
        second_start: f64,
        second_end: f64,
    },
    #[error("row {row}: missing or unparseable {TIME_RELATIVE_COLUMN}")]
    MissingTimestamp { row: usize },
    #[error("frame log line {line}: {reason}")]
    BadFrameLog { line: u64, reason: String },
}

/// A dissected field value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Int(i64),
    Float(f64),
    Text(String),
}

impl Value {
    /// CSV cell text; `None` is an empty cell. Empty text is also written as null.
    pub fn to_cell(&self) -> Option<String> {
        match self {
            Value::Null => None,
            Value::Int(v) => Some(v.to_string()),
            Value::Float(v) => Some(format!("{v:.6}")),
            Value::Text(s) if s.is_empty() => None,
            Value::Text(s) => Some(s.clone()),
        }
    }

    fn text(s: Option<String>) -> Value {
        s.map_or(Value::Null, Value::Text)
    }

    fn int(v: Option<impl Into<i64>>) -> Value {
        v.map_or(Value::Null, |v| Value::Int(v.into()))
    }
}

/// One dissected frame: values aligned with [`FRAME_COLUMNS`] plus its label.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub values: Vec<Value>,
    pub label: String,
}

impl FrameRecord {
    pub fn columns(&self) -> &'static [&'static str] {
        &FRAME_COLUMNS
    }

    pub fn get(&self, column: &str) -> Option<&Value> {
        let idx = FRAME_COLUMNS.iter().position(|c| *c == column)?;
        self.values.get(idx)
    }

    fn time_relative(&self) -> Option<f64> {
        match self.get(TIME_RELATIVE_COLUMN)? {
            Value::Float(t) => Some(*t),
            Value::Int(t) => Some(*t as f64),
            Value::Text(s) => s.parse().ok(),
            Value::Null => None,
        }
    }
}

pub fn format_mac(mac: &[u8; 6]) -> String {
    mac.iter()
        .map(|b| format!("{b:02x}"))
        .collect::<Vec<_>>()
        .join(":")
}

pub fn parse_mac(text: &str) -> Option<[u8; 6]> {
    let mut mac = [0u8; 6];
    let mut parts = text.split(':');
    for byte in mac.iter_mut() {
        let part = parts.next()?;
        if part.len() != 2 {
            return None;
        }
        *byte = u8::from_str_radix(part, 16).ok()?;
    }
    parts.next().is_none().then_some(mac)
}

/// Flattens a frame into the fixed record schema.
pub fn dissect(frame: &LabeledFrame) -> FrameRecord {
    let ip_header = match frame.src_ip {
        IpAddr::V4(_) => 20,
        IpAddr::V6(_) => 40,
    };
    let mut values = vec![
        Value::Float(CAPTURE_EPOCH_S + frame.timestamp_s),
        Value::Float(frame.timestamp_s),
        Value::Int((ETHERNET_HEADER + ip_header + UDP_HEADER + frame.udp_payload.len()) as i64),
        Value::Text(format_mac(&frame.src_mac)),
        Value::Text(format_mac(&frame.dst_mac)),
        Value::Int(frame.src_port.into()),
        Value::Int(frame.dst_port.into()),
    ];
    match decode_message(&frame.udp_payload) {
        Ok(msg) => values.extend(coap_values(&msg)),
        Err(_) => values.resize(FRAME_COLUMNS.len(), Value::Null),
    }
    debug_assert_eq!(values.len(), FRAME_COLUMNS.len());
    FrameRecord {
        values,
        label: frame.label.to_string(),
    }
}

fn coap_values(msg: &CoapMessage) -> Vec<Value> {
    let ctype = msg
        .content_format()
        .map(|id| content_format_name(id).map_or_else(|| id.to_string(), str::to_string));
    let last = msg.options.last();
    let payload_desc = (!msg.payload.is_empty()).then(|| {
        ctype
            .clone()
            .unwrap_or_else(|| "application/octet-stream".to_string())
    });
    let block_size = msg.block2().or_else(|| msg.block1()).and_then(|b| b.size());
    vec![
        Value::Int(msg.version.into()),
        Value::Int(msg.msg_type.as_u8().into()),
        Value::Text(msg.code.to_string()),
        Value::Int(msg.message_id.into()),
        Value::text((!msg.token.is_empty()).then(|| hex::encode(&msg.token))),
        Value::text(ctype),
        Value::text(last.map(|o| o.describe())),
        Value::text(last.map(|o| {
            o.name()
                .map_or_else(|| format!("Unknown Option {}", o.number), str::to_string)
        })),
        Value::text(msg.uri_path()),
        Value::text(payload_desc),
        Value::int(msg.observe()),
        Value::int(block_size),
        Value::Int(msg.payload.len() as i64),
    ]
}

/// A labeling interval `[start_s, end_s)` on the relative capture clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelWindow {
    pub kind: AttackKind,
    pub start_s: f64,
    pub end_s: f64,
}

impl LabelWindow {
    pub fn new(kind: AttackKind, start_s: f64, end_s: f64) -> Self {
        LabelWindow {
            kind,
            start_s,
            end_s,
        }
    }

    fn contains(&self, t: f64) -> bool {
        self.start_s <= t && t < self.end_s
    }
}

fn check_windows(windows: &[LabelWindow]) -> Result<(), IngestError> {
    for (i, a) in windows.iter().enumerate() {
        for b in &windows[i + 1..] {
            if a.kind != b.kind && a.start_s < b.end_s && b.start_s < a.end_s {
                return Err(IngestError::OverlappingWindows {
                    first: a.kind,
                    first_start: a.start_s,
                    first_end: a.end_s,
                    second: b.kind,
                    second_start: b.start_s,
                    second_end: b.end_s,
                });
            }
        }
    }
    Ok(())
}

fn window_label(t: f64, windows: &[LabelWindow]) -> Label {
    windows
        .iter()
        .find(|w| w.contains(t))
        .map_or(Label::Normal, |w| Label::Attack(w.kind))
}

/// Relabels records by capture time: the kind of the first window holding
/// `frame.time_relative`, else `normal`.
pub fn label_by_window(
    mut records: Vec<FrameRecord>,
    windows: &[LabelWindow],
) -> Result<Vec<FrameRecord>, IngestError> {
    check_windows(windows)?;
    for (row, record) in records.iter_mut().enumerate() {
        let t = record
            .time_relative()
            .ok_or(IngestError::MissingTimestamp { row })?;
        record.label = window_label(t, windows).to_string();
    }
    Ok(records)
}

/// [`label_by_window`] over a loaded table; adds a `type` column if missing.
pub fn label_table_by_window(
    table: &mut DatasetTable,
    windows: &[LabelWindow],
) -> Result<(), IngestError> {
    check_windows(windows)?;
    let time_idx = table
        .column_index(TIME_RELATIVE_COLUMN)
        .ok_or(IngestError::MissingTimestamp { row: 0 })?;
    let type_idx = match table.column_index(TYPE_COLUMN) {
        Some(idx) => idx,
        None => {
            table.columns.push(TYPE_COLUMN.to_string());
            table.rows.iter_mut().for_each(|r| r.push(None));
            table.columns.len() - 1
        }
    };
    for (row, cells) in table.rows.iter_mut().enumerate() {
        let t: f64 = cells[time_idx]
            .as_deref()
            .and_then(|s| s.parse().ok())
            .ok_or(IngestError::MissingTimestamp { row })?;
        cells[type_idx] = Some(window_label(t, windows).to_string());
    }
    Ok(())
}

pub type Cell = Option<String>;

/// A rectangular table of text cells with unique column names.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl DatasetTable {
    pub fn new(columns: Vec<String>) -> Result<Self, IngestError> {
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].contains(c) {
                return Err(IngestError::DuplicateColumn(c.clone()));
            }
        }
        Ok(DatasetTable {
            columns,
            rows: Vec::new(),
        })
    }

    /// The dissection schema: [`FRAME_COLUMNS`] followed by `type`.
    pub fn frame_schema() -> Self {
        let mut columns: Vec<String> = FRAME_COLUMNS.iter().map(|c| c.to_string()).collect();
        columns.push(TYPE_COLUMN.to_string());
        DatasetTable {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn from_records(records: &[FrameRecord]) -> Self {
        let mut table = Self::frame_schema();
        table.rows = records
            .iter()
            .map(|r| {
                let mut row: Vec<Cell> = r.values.iter().map(Value::to_cell).collect();
                row.push(Some(r.label.clone()));
                row
            })
            .collect();
        table
    }

    pub fn from_frames(frames: &[LabeledFrame]) -> Self {
        let records: Vec<_> = frames.iter().map(dissect).collect();
        Self::from_records(&records)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Label of every row, or `None` if there is no `type` column.
    pub fn labels(&self) -> Option<Vec<Option<&str>>> {
        let idx = self.column_index(TYPE_COLUMN)?;
        Some(self.rows.iter().map(|r| r[idx].as_deref()).collect())
    }

    /// A table with the same columns holding the given rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        DatasetTable {
            columns: self.columns.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Appends the rows of `other`, which must have identical columns.
    pub fn append(&mut self, other: DatasetTable) -> Result<(), IngestError> {
        if other.columns != self.columns {
            return Err(IngestError::RaggedRow {
                line: 1,
                expected: self.columns.len(),
                found: other.columns.len(),
            });
        }
        self.rows.extend(other.rows);
        Ok(())
    }
}

pub fn read_csv(path: impl AsRef<Path>, strict_labels: bool) -> Result<DatasetTable, IngestError> {
    let file = File::open(path)?;
    read_csv_from(BufReader::new(file), strict_labels)
}

/// Reads a table. With `strict_labels`, a missing `type` column is an error.
pub fn read_csv_from(reader: impl Read, strict_labels: bool) -> Result<DatasetTable, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut table = DatasetTable::new(columns)?;
    if strict_labels && table.column_index(TYPE_COLUMN).is_none() {
        return Err(IngestError::MissingTypeColumn);
    }
    let width = table.columns.len();
    for record in rdr.records() {
        let record = record?;
        if record.len() != width {
            return Err(IngestError::RaggedRow {
                line: record.position().map_or(0, |p| p.line()),
                expected: width,
                found: record.len(),
            });
        }
        table.rows.push(
            record
                .iter()
                .map(|cell| (!cell.is_empty()).then(|| cell.to_string()))
                .collect(),
        );
    }
    Ok(table)
}

pub fn write_csv(table: &DatasetTable, path: impl AsRef<Path>) -> Result<(), IngestError> {
    let file = File::create(path)?;
    write_csv_to(table, BufWriter::new(file))
}

pub fn write_csv_to(table: &DatasetTable, writer: impl Write) -> Result<(), IngestError> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    wtr.write_record(&table.columns)?;
    for row in &table.rows {
        wtr.write_record(row.iter().map(|c| c.as_deref().unwrap_or("")))?;
    }
    wtr.flush()?;
    Ok(())
}

const FRAME_LOG_COLUMNS: [&str; 9] = [
    "timestamp_s",
    "src_mac",
    "dst_mac",
    "src_ip",
    "dst_ip",
    "src_port",
    "dst_port",
    "udp_payload",
    "label",
];

/// Writes raw frames: addressing, hex-encoded UDP payload and label.
pub fn write_frame_log_to(frames: &[LabeledFrame], writer: impl Write) -> Result<(), IngestError> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    wtr.write_record(FRAME_LOG_COLUMNS)?;
    for f in frames {
        wtr.write_record([
            f.timestamp_s.to_string(),
            format_mac(&f.src_mac),
            format_mac(&f.dst_mac),
            f.src_ip.to_string(),
            f.dst_ip.to_string(),
            f.src_port.to_string(),
            f.dst_port.to_string(),
            hex::encode(&f.udp_payload),
            f.label.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_frame_log_from(reader: impl Read) -> Result<Vec<LabeledFrame>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != FRAME_LOG_COLUMNS {
        return Err(IngestError::BadFrameLog {
            line: 1,
            reason: format!("expected header {}", FRAME_LOG_COLUMNS.join(",")),
        });
    }
    let mut frames = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |field: &str| IngestError::BadFrameLog {
            line,
            reason: format!("bad {field}"),
        };
        let get = |i: usize| record.get(i).ok_or_else(|| bad(FRAME_LOG_COLUMNS[i]));
        frames.push(LabeledFrame {
            timestamp_s: get(0)?.parse().map_err(|_| bad("timestamp_s"))?,
            src_mac: parse_mac(get(1)?).ok_or_else(|| bad("src_mac"))?,
            dst_mac: parse_mac(get(2)?).ok_or_else(|| bad("dst_mac"))?,
            src_ip: get(3)?.parse().map_err(|_| bad("src_ip"))?,
            dst_ip: get(4)?.parse().map_err(|_| bad("dst_ip"))?,
            src_port: get(5)?.parse().map_err(|_| bad("src_port"))?,
            dst_port: get(6)?.parse().map_err(|_| bad("dst_port"))?,
            udp_payload: hex::decode(get(7)?).map_err(|_| bad("udp_payload"))?,
            label: get(8)?.parse().map_err(|_| bad("label"))?,
        });
    }
    Ok(frames)
}
