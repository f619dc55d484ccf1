//! Line-oriented parsers and writers for the toolkit's file formats.
//!
//! Formats (all comma separated, LF or CRLF, 1-based frames):
//! - detections:   `frame,id,left,top,width,height,score[,x,y,z]`, id is -1
//! - ground truth: `frame,id,left,top,width,height,active[,class,visibility]`
//! - tracks:       `frame,id,left,top,width,height,score,-1,-1,-1`
//! - sales:        header `date,store,item,sales`, dates `M/D/YYYY` or `YYYY-MM-DD`
//! - forecasts:    header `date,store,item,predicted_sales`
//! - camera motion: `frame,a11,a12,a21,a22,tx,ty`, missing frames mean identity
//!
//! Parsers never silently drop input: every line is either parsed or reported
//! with its 1-based line number.

use crate::geometry::{BBox, Detection, PERSON_CLASS_ID};
use crate::kalman::AffineTransform;
use chrono::NaiveDate;
use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub enum ParseError {
    MalformedLine { line: usize, content: String },
    NonPositiveBox { line: usize },
    ScoreOutOfRange { line: usize },
    NonPositiveId { line: usize },
    BadDate { line: usize },
    DuplicateKey { line: usize },
    SingularTransform { line: usize },
}

impl ParseError {
    /// 1-based line number the error points at.
    pub fn line(&self) -> usize {
        match self {
            ParseError::MalformedLine { line, .. }
            | ParseError::NonPositiveBox { line }
            | ParseError::ScoreOutOfRange { line }
            | ParseError::NonPositiveId { line }
            | ParseError::BadDate { line }
            | ParseError::DuplicateKey { line }
            | ParseError::SingularTransform { line } => *line,
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::MalformedLine { line, content } => {
                write!(f, "line {line}: malformed record: `{content}`")
            }
            ParseError::NonPositiveBox { line } => {
                write!(f, "line {line}: box width/height must be positive")
            }
            ParseError::ScoreOutOfRange { line } => {
                write!(f, "line {line}: score outside [0, 1]")
            }
            ParseError::NonPositiveId { line } => {
                write!(f, "line {line}: id must be a positive integer")
            }
            ParseError::BadDate { line } => write!(f, "line {line}: unparseable calendar date"),
            ParseError::DuplicateKey { line } => write!(f, "line {line}: duplicate key"),
            ParseError::SingularTransform { line } => {
                write!(f, "line {line}: singular camera-motion transform")
            }
        }
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
pub enum WriteError {
    UnsortedInput { index: usize },
}

impl fmt::Display for WriteError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WriteError::UnsortedInput { index } => {
                write!(f, "record {index} out of (frame, id) order")
            }
        }
    }
}

impl std::error::Error for WriteError {}

/// One annotated ground-truth box. `active = false` rows are kept but are
/// excluded from evaluation downstream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEntry {
    pub frame: u32,
    pub track_id: u32,
    pub bbox: BBox,
    pub active: bool,
}

/// One tracker output row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub frame: u32,
    pub track_id: u32,
    pub bbox: BBox,
    pub score: f64,
}

/// Daily sales of one item at one store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SalesRecord {
    pub date: NaiveDate,
    pub store: u32,
    pub item: u32,
    pub sales: u32,
}

/// One forecast value; `predicted_sales` is real-valued.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastPoint {
    pub date: NaiveDate,
    pub store: u32,
    pub item: u32,
    pub predicted_sales: f64,
}

fn split_fields(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

fn malformed(line_no: usize, line: &str) -> ParseError {
    ParseError::MalformedLine { line: line_no, content: line.to_string() }
}

fn real(s: &str, line_no: usize, line: &str) -> Result<f64, ParseError> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(malformed(line_no, line)),
    }
}

fn integer(s: &str, line_no: usize, line: &str) -> Result<i64, ParseError> {
    s.parse::<i64>().map_err(|_| malformed(line_no, line))
}

fn frame_index(s: &str, line_no: usize, line: &str) -> Result<u32, ParseError> {
    match integer(s, line_no, line)? {
        v if v >= 1 && v <= u32::MAX as i64 => Ok(v as u32),
        _ => Err(malformed(line_no, line)),
    }
}

/// Non-empty trimmed lines with their 1-based line numbers; accepts CRLF.
fn content_lines(input: &str) -> impl Iterator<Item = (usize, &str)> {
    input
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Parse a detector output file. The id column is ignored (detectors emit -1).
pub fn parse_detections(input: &str) -> Result<Vec<Detection>, ParseError> {
    let mut out = Vec::new();
    for (line_no, line) in content_lines(input) {
        let f = split_fields(line);
        if f.len() < 7 {
            return Err(malformed(line_no, line));
        }
        let frame = frame_index(f[0], line_no, line)?;
        integer(f[1], line_no, line)?; // id, ignored
        let left = real(f[2], line_no, line)?;
        let top = real(f[3], line_no, line)?;
        let width = real(f[4], line_no, line)?;
        let height = real(f[5], line_no, line)?;
        let score = real(f[6], line_no, line)?;
        if !(width > 0.0 && height > 0.0) {
            return Err(ParseError::NonPositiveBox { line: line_no });
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(ParseError::ScoreOutOfRange { line: line_no });
        }
        let bbox = BBox::new(left, top, width, height)
            .map_err(|_| ParseError::NonPositiveBox { line: line_no })?;
        out.push(Detection { frame, bbox, score, class_id: PERSON_CLASS_ID });
    }
    Ok(out)
}

/// Parse an annotation file; rows with the active flag 0 are retained but flagged.
pub fn parse_ground_truth(input: &str) -> Result<Vec<GroundTruthEntry>, ParseError> {
    let mut out = Vec::new();
    for (line_no, line) in content_lines(input) {
        let f = split_fields(line);
        if f.len() < 7 {
            return Err(malformed(line_no, line));
        }
        let frame = frame_index(f[0], line_no, line)?;
        let id = integer(f[1], line_no, line)?;
        if id < 1 {
            return Err(ParseError::NonPositiveId { line: line_no });
        }
        let left = real(f[2], line_no, line)?;
        let top = real(f[3], line_no, line)?;
        let width = real(f[4], line_no, line)?;
        let height = real(f[5], line_no, line)?;
        let active = match f[6] {
            "0" => false,
            "1" => true,
            _ => return Err(malformed(line_no, line)),
        };
        if !(width > 0.0 && height > 0.0) {
            return Err(ParseError::NonPositiveBox { line: line_no });
        }
        let bbox = BBox::new(left, top, width, height)
            .map_err(|_| ParseError::NonPositiveBox { line: line_no })?;
        out.push(GroundTruthEntry { frame, track_id: id as u32, bbox, active });
    }
    Ok(out)
}

/// Parse a tracker output file; (frame, id) pairs must be unique.
pub fn parse_tracks(input: &str) -> Result<Vec<TrackRecord>, ParseError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (line_no, line) in content_lines(input) {
        let f = split_fields(line);
        if f.len() < 7 {
            return Err(malformed(line_no, line));
        }
        let frame = frame_index(f[0], line_no, line)?;
        let id = integer(f[1], line_no, line)?;
        if id < 1 {
            return Err(ParseError::NonPositiveId { line: line_no });
        }
        let left = real(f[2], line_no, line)?;
        let top = real(f[3], line_no, line)?;
        let width = real(f[4], line_no, line)?;
        let height = real(f[5], line_no, line)?;
        let score = real(f[6], line_no, line)?;
        if !(width > 0.0 && height > 0.0) {
            return Err(ParseError::NonPositiveBox { line: line_no });
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(ParseError::ScoreOutOfRange { line: line_no });
        }
        if !seen.insert((frame, id as u32)) {
            return Err(ParseError::DuplicateKey { line: line_no });
        }
        let bbox = BBox::new(left, top, width, height)
            .map_err(|_| ParseError::NonPositiveBox { line: line_no })?;
        out.push(TrackRecord { frame, track_id: id as u32, bbox, score });
    }
    Ok(out)
}

/// Serialize track records, which must be strictly sorted by (frame, id).
/// Scores are printed with 6 decimal digits; box coordinates round-trip exactly.
pub fn write_tracks(records: &[TrackRecord]) -> Result<String, WriteError> {
    for i in 1..records.len() {
        let prev = (records[i - 1].frame, records[i - 1].track_id);
        let cur = (records[i].frame, records[i].track_id);
        if cur <= prev {
            return Err(WriteError::UnsortedInput { index: i });
        }
    }
    let mut out = String::new();
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.6},-1,-1,-1",
            r.frame, r.track_id, r.bbox.left, r.bbox.top, r.bbox.width, r.bbox.height, r.score
        )
        .expect("string write");
    }
    Ok(out)
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    if s.contains('/') {
        NaiveDate::parse_from_str(s, "%m/%d/%Y").ok()
    } else {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
    }
}

fn check_header(input: &str, last_column: &[&str]) -> Result<usize, ParseError> {
    let (line_no, line) = content_lines(input)
        .next()
        .ok_or(ParseError::MalformedLine { line: 1, content: String::new() })?;
    let f = split_fields(line);
    let ok = f.len() == 4
        && f[0].eq_ignore_ascii_case("date")
        && f[1].eq_ignore_ascii_case("store")
        && f[2].eq_ignore_ascii_case("item")
        && last_column.iter().any(|c| f[3].eq_ignore_ascii_case(c));
    if !ok {
        return Err(malformed(line_no, line));
    }
    Ok(line_no)
}

/// Parse a daily sales file. Month-first (`M/D/YYYY`) and ISO (`YYYY-MM-DD`)
/// dates are both accepted; duplicate (date, store, item) keys are rejected.
pub fn parse_sales_csv(input: &str) -> Result<Vec<SalesRecord>, ParseError> {
    let header_line = check_header(input, &["sales"])?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (line_no, line) in content_lines(input).skip_while(|(n, _)| *n <= header_line) {
        let f = split_fields(line);
        if f.len() != 4 {
            return Err(malformed(line_no, line));
        }
        let date = parse_date(f[0]).ok_or(ParseError::BadDate { line: line_no })?;
        let store = f[1].parse::<u32>().map_err(|_| malformed(line_no, line))?;
        let item = f[2].parse::<u32>().map_err(|_| malformed(line_no, line))?;
        let sales = f[3].parse::<u32>().map_err(|_| malformed(line_no, line))?;
        if !seen.insert((date, store, item)) {
            return Err(ParseError::DuplicateKey { line: line_no });
        }
        out.push(SalesRecord { date, store, item, sales });
    }
    Ok(out)
}

/// Serialize sales records with ISO dates; inverse of [`parse_sales_csv`].
pub fn write_sales_csv(records: &[SalesRecord]) -> String {
    let mut out = String::from("date,store,item,sales\n");
    for r in records {
        writeln!(out, "{},{},{},{}", r.date.format("%Y-%m-%d"), r.store, r.item, r.sales)
            .expect("string write");
    }
    out
}

/// Parse a forecast file. The value column may be headed `predicted_sales` or
/// `sales` and holds reals, so model output files and plain sales files both load.
pub fn parse_forecast_csv(input: &str) -> Result<Vec<ForecastPoint>, ParseError> {
    let header_line = check_header(input, &["predicted_sales", "sales"])?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (line_no, line) in content_lines(input).skip_while(|(n, _)| *n <= header_line) {
        let f = split_fields(line);
        if f.len() != 4 {
            return Err(malformed(line_no, line));
        }
        let date = parse_date(f[0]).ok_or(ParseError::BadDate { line: line_no })?;
        let store = f[1].parse::<u32>().map_err(|_| malformed(line_no, line))?;
        let item = f[2].parse::<u32>().map_err(|_| malformed(line_no, line))?;
        let predicted_sales = real(f[3], line_no, line)?;
        if !seen.insert((date, store, item)) {
            return Err(ParseError::DuplicateKey { line: line_no });
        }
        out.push(ForecastPoint { date, store, item, predicted_sales });
    }
    Ok(out)
}

/// Serialize forecast points; inverse of [`parse_forecast_csv`].
pub fn write_forecast_csv(points: &[ForecastPoint]) -> String {
    let mut out = String::from("date,store,item,predicted_sales\n");
    for p in points {
        writeln!(
            out,
            "{},{},{},{}",
            p.date.format("%Y-%m-%d"),
            p.store,
            p.item,
            p.predicted_sales
        )
        .expect("string write");
    }
    out
}

/// Parse a per-frame camera-motion file into a frame-indexed map.
/// Frames absent from the file mean the identity transform.
pub fn parse_cmc_file(input: &str) -> Result<BTreeMap<u32, AffineTransform>, ParseError> {
    let mut out = BTreeMap::new();
    for (line_no, line) in content_lines(input) {
        let f = split_fields(line);
        if f.len() != 7 {
            return Err(malformed(line_no, line));
        }
        let frame = frame_index(f[0], line_no, line)?;
        let a11 = real(f[1], line_no, line)?;
        let a12 = real(f[2], line_no, line)?;
        let a21 = real(f[3], line_no, line)?;
        let a22 = real(f[4], line_no, line)?;
        let tx = real(f[5], line_no, line)?;
        let ty = real(f[6], line_no, line)?;
        let transform =
            AffineTransform::new(Matrix2::new(a11, a12, a21, a22), Vector2::new(tx, ty))
                .map_err(|_| ParseError::SingularTransform { line: line_no })?;
        if out.insert(frame, transform).is_some() {
            return Err(ParseError::DuplicateKey { line: line_no });
        }
    }
    Ok(out)
}
