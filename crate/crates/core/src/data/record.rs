use std::fmt::Write as _;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use super::DataError;

pub const NUM_JOINTS: usize = 17;

/// COCO keypoint order, as emitted by common 2-D pose estimators.
pub const COCO_JOINTS: [&str; NUM_JOINTS] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

pub type Point = [f64; 2];

/// One video frame: both players' centroids and joints plus the ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub timestamp_ms: f64,
    pub p1_centroid: Point,
    pub p1_joints: [Point; NUM_JOINTS],
    pub p2_centroid: Point,
    pub p2_joints: [Point; NUM_JOINTS],
    pub ball: Option<Point>,
    pub ball_visible: bool,
    /// Set when the ball position was reconstructed by gap filling.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub ball_interpolated: bool,
}

impl FrameRecord {
    pub fn centroid(&self, player: Player) -> Point {
        match player {
            Player::One => self.p1_centroid,
            Player::Two => self.p2_centroid,
        }
    }

    pub fn joints(&self, player: Player) -> &[Point; NUM_JOINTS] {
        match player {
            Player::One => &self.p1_joints,
            Player::Two => &self.p2_joints,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Player {
    One,
    Two,
}

impl Player {
    pub fn from_number(n: u8) -> Result<Self, DataError> {
        match n {
            1 => Ok(Player::One),
            2 => Ok(Player::Two),
            other => Err(DataError::InvalidParams(format!(
                "target player must be 1 or 2, got {other}"
            ))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Player::One => 1,
            Player::Two => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSize {
    pub width: f64,
    pub height: f64,
}

impl Default for FrameSize {
    /// 1280×720, used when the input does not say otherwise.
    fn default() -> Self {
        FrameSize {
            width: 1280.0,
            height: 720.0,
        }
    }
}

/// Contents of the leading metadata line. Both fields are optional in input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_size: Option<FrameSize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
}

impl SeriesMeta {
    pub fn frame_size_or_default(&self) -> FrameSize {
        self.frame_size.unwrap_or_default()
    }

    pub fn fps_or_default(&self) -> f64 {
        self.fps.unwrap_or(60.0)
    }
}

/// A parsed record file: metadata plus frames in `frame_index` order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecordFile {
    pub meta: SeriesMeta,
    pub records: Vec<FrameRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordFormat {
    Csv,
    Jsonl,
}

impl std::str::FromStr for RecordFormat {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(RecordFormat::Csv),
            "jsonl" | "json" => Ok(RecordFormat::Jsonl),
            other => Err(DataError::Schema {
                line: 0,
                message: format!("unknown record format `{other}`"),
            }),
        }
    }
}

impl RecordFormat {
    pub fn from_path(path: &std::path::Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(RecordFormat::Csv),
            "jsonl" | "json" => Some(RecordFormat::Jsonl),
            _ => None,
        }
    }
}

/// CSV header, 77 columns.
pub fn csv_header() -> Vec<String> {
    let mut cols = vec!["frame_index".to_string(), "timestamp_ms".to_string()];
    for p in ["p1", "p2"] {
        cols.push(format!("{p}_cx"));
        cols.push(format!("{p}_cy"));
        for j in 0..NUM_JOINTS {
            cols.push(format!("{p}_j{j:02}_x"));
            cols.push(format!("{p}_j{j:02}_y"));
        }
    }
    cols.extend(["ball_x", "ball_y", "ball_visible"].map(String::from));
    cols
}

const CSV_COLUMNS: usize = 2 + 2 * (2 + 2 * NUM_JOINTS) + 3;

pub fn parse_frame_records<R: Read>(
    mut source: R,
    format: RecordFormat,
) -> Result<RecordFile, DataError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let file = match format {
        RecordFormat::Csv => parse_csv(&text)?,
        RecordFormat::Jsonl => parse_jsonl(&text)?,
    };
    for (i, pair) in file.records.windows(2).enumerate() {
        if pair[1].frame_index <= pair[0].frame_index {
            return Err(DataError::NonMonotoneFrames {
                position: i + 1,
                previous: pair[0].frame_index,
                found: pair[1].frame_index,
            });
        }
    }
    Ok(file)
}

fn parse_csv_meta(line: &str) -> Result<SeriesMeta, DataError> {
    let mut meta = SeriesMeta::default();
    let body = line.trim_start_matches('#');
    for token in body.split_whitespace() {
        let Some((key, value)) = token.split_once('=') else {
            continue;
        };
        let bad = |what: &str| DataError::Schema {
            line: 1,
            message: format!("bad metadata {what} `{value}`"),
        };
        match key {
            "frame_size" => {
                let (w, h) = value.split_once('x').ok_or_else(|| bad("frame_size"))?;
                meta.frame_size = Some(FrameSize {
                    width: w.parse().map_err(|_| bad("frame_size"))?,
                    height: h.parse().map_err(|_| bad("frame_size"))?,
                });
            }
            "fps" => meta.fps = Some(value.parse().map_err(|_| bad("fps"))?),
            _ => {}
        }
    }
    Ok(meta)
}

fn parse_csv(text: &str) -> Result<RecordFile, DataError> {
    let mut meta = SeriesMeta::default();
    if let Some(first) = text.lines().next() {
        if first.starts_with('#') {
            meta = parse_csv_meta(first)?;
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header_line = reader.position().line();
    let headers = reader.headers().map_err(|e| DataError::Schema {
        line: header_line,
        message: e.to_string(),
    })?;
    let expected = csv_header();
    if headers.len() != CSV_COLUMNS || headers.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(DataError::Schema {
            line: reader.position().line().max(1),
            message: format!(
                "header must list the {CSV_COLUMNS} columns frame_index, timestamp_ms, p1_cx, ... ball_visible in order"
            ),
        });
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| DataError::Schema {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        records.push(csv_row_to_record(&row, line)?);
    }
    Ok(RecordFile { meta, records })
}

fn csv_row_to_record(row: &csv::StringRecord, line: u64) -> Result<FrameRecord, DataError> {
    if row.len() != CSV_COLUMNS {
        return Err(DataError::Schema {
            line,
            message: format!("expected {CSV_COLUMNS} columns, found {}", row.len()),
        });
    }
    let header = csv_header();
    let num = |i: usize| -> Result<f64, DataError> {
        row[i].trim().parse::<f64>().map_err(|_| DataError::Schema {
            line,
            message: format!("column `{}`: `{}` is not a number", header[i], &row[i]),
        })
    };
    let frame_index = row[0].trim().parse::<u64>().map_err(|_| DataError::Schema {
        line,
        message: format!("frame_index `{}` is not a non-negative integer", &row[0]),
    })?;
    let timestamp_ms = num(1)?;
    let mut col = 2;
    let mut player = || -> Result<(Point, [Point; NUM_JOINTS]), DataError> {
        let c = [num(col)?, num(col + 1)?];
        col += 2;
        let mut joints = [[0.0; 2]; NUM_JOINTS];
        for j in joints.iter_mut() {
            *j = [num(col)?, num(col + 1)?];
            col += 2;
        }
        Ok((c, joints))
    };
    let (p1_centroid, p1_joints) = player()?;
    let (p2_centroid, p2_joints) = player()?;
    let b = CSV_COLUMNS - 3;
    let ball_visible = match row[b + 2].trim() {
        "1" => true,
        "0" => false,
        other => {
            return Err(DataError::Schema {
                line,
                message: format!("ball_visible must be 0 or 1, got `{other}`"),
            })
        }
    };
    let empty = row[b].trim().is_empty() && row[b + 1].trim().is_empty();
    let ball = match (ball_visible, empty) {
        (true, false) => Some([num(b)?, num(b + 1)?]),
        (false, true) => None,
        (true, true) => {
            return Err(DataError::Schema {
                line,
                message: "ball_visible=1 but ball cells are empty".into(),
            })
        }
        (false, false) => {
            return Err(DataError::Schema {
                line,
                message: "ball cells must be empty when ball_visible=0".into(),
            })
        }
    };
    Ok(FrameRecord {
        frame_index,
        timestamp_ms,
        p1_centroid,
        p1_joints,
        p2_centroid,
        p2_joints,
        ball,
        ball_visible,
        ball_interpolated: false,
    })
}

#[derive(Serialize, Deserialize)]
struct JsonMetaLine {
    meta: SeriesMeta,
}

fn parse_jsonl(text: &str) -> Result<RecordFile, DataError> {
    let mut meta = SeriesMeta::default();
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if i == 0 && line.trim_start().starts_with("{\"meta\"") {
            let m: JsonMetaLine = serde_json::from_str(line).map_err(|e| DataError::Schema {
                line: line_no,
                message: e.to_string(),
            })?;
            meta = m.meta;
            continue;
        }
        let rec: FrameRecord = serde_json::from_str(line).map_err(|e| DataError::Schema {
            line: line_no,
            message: e.to_string(),
        })?;
        if rec.ball_visible != rec.ball.is_some() {
            return Err(DataError::Schema {
                line: line_no,
                message: "ball must be present exactly when ball_visible is true".into(),
            });
        }
        records.push(rec);
    }
    Ok(RecordFile { meta, records })
}

pub fn write_frame_records<W: Write>(
    file: &RecordFile,
    format: RecordFormat,
    sink: W,
) -> Result<(), DataError> {
    write_frame_records_annotated(file, format, "", sink)
}

/// Like [`write_frame_records`], with each line of `notes` written as a `#`
/// comment right after the metadata line. Both readers skip such lines.
pub fn write_frame_records_annotated<W: Write>(
    file: &RecordFile,
    format: RecordFormat,
    notes: &str,
    mut sink: W,
) -> Result<(), DataError> {
    match format {
        RecordFormat::Csv => {
            writeln!(sink, "{}", csv_meta_line(&file.meta))?;
            for line in notes.lines() {
                writeln!(sink, "# {line}")?;
            }
            writeln!(sink, "{}", csv_header().join(","))?;
            let mut line = String::new();
            for r in &file.records {
                line.clear();
                write_csv_row(r, &mut line);
                writeln!(sink, "{line}")?;
            }
        }
        RecordFormat::Jsonl => {
            let meta = JsonMetaLine { meta: file.meta };
            writeln!(sink, "{}", serde_json::to_string(&meta)?)?;
            for line in notes.lines() {
                writeln!(sink, "# {line}")?;
            }
            for r in &file.records {
                writeln!(sink, "{}", serde_json::to_string(r)?)?;
            }
        }
    }
    Ok(())
}

fn csv_meta_line(meta: &SeriesMeta) -> String {
    let mut s = String::from("#");
    if let Some(fs) = meta.frame_size {
        write!(s, " frame_size={}x{}", fs.width, fs.height).unwrap();
    }
    if let Some(fps) = meta.fps {
        write!(s, " fps={fps}").unwrap();
    }
    s
}

fn write_csv_row(r: &FrameRecord, out: &mut String) {
    write!(out, "{},{}", r.frame_index, r.timestamp_ms).unwrap();
    for (c, joints) in [(r.p1_centroid, &r.p1_joints), (r.p2_centroid, &r.p2_joints)] {
        write!(out, ",{},{}", c[0], c[1]).unwrap();
        for j in joints {
            write!(out, ",{},{}", j[0], j[1]).unwrap();
        }
    }
    match r.ball {
        Some(b) => write!(out, ",{},{},1", b[0], b[1]).unwrap(),
        None => out.push_str(",,,0"),
    }
}

/// Reads just the metadata line, if present, without parsing frames.
pub fn peek_meta<R: BufRead>(mut source: R) -> Result<SeriesMeta, DataError> {
    let mut first = String::new();
    source.read_line(&mut first)?;
    let first = first.trim_end();
    if first.starts_with('#') {
        parse_csv_meta(first)
    } else if first.starts_with("{\"meta\"") {
        let m: JsonMetaLine = serde_json::from_str(first)?;
        Ok(m.meta)
    } else {
        Ok(SeriesMeta::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(i: u64, ball: Option<Point>) -> FrameRecord {
        let mut j1 = [[0.0; 2]; NUM_JOINTS];
        let mut j2 = [[0.0; 2]; NUM_JOINTS];
        for k in 0..NUM_JOINTS {
            j1[k] = [100.0 + k as f64, 400.5 - k as f64 * 0.25];
            j2[k] = [600.0 + k as f64 * 0.5, 120.125 + k as f64];
        }
        FrameRecord {
            frame_index: i,
            timestamp_ms: i as f64 * 1000.0 / 60.0,
            p1_centroid: [110.0, 420.0],
            p1_joints: j1,
            p2_centroid: [605.5, 130.0],
            p2_joints: j2,
            ball,
            ball_visible: ball.is_some(),
            ball_interpolated: false,
        }
    }

    fn file(records: Vec<FrameRecord>) -> RecordFile {
        RecordFile {
            meta: SeriesMeta {
                frame_size: Some(FrameSize {
                    width: 1280.0,
                    height: 720.0,
                }),
                fps: Some(60.0),
            },
            records,
        }
    }

    fn render(f: &RecordFile, fmt: RecordFormat) -> Vec<u8> {
        let mut out = Vec::new();
        write_frame_records(f, fmt, &mut out).unwrap();
        out
    }

    #[test]
    fn header_has_77_columns() {
        let h = csv_header();
        assert_eq!(h.len(), 77);
        assert_eq!(h[2], "p1_cx");
        assert_eq!(h[4], "p1_j00_x");
        assert_eq!(h[37], "p1_j16_y");
        assert_eq!(h[38], "p2_cx");
        assert_eq!(&h[74..], &["ball_x", "ball_y", "ball_visible"]);
    }

    #[test]
    fn single_row_csv() {
        let f = file(vec![sample(0, Some([640.0, 200.0]))]);
        let bytes = render(&f, RecordFormat::Csv);
        let back = parse_frame_records(&bytes[..], RecordFormat::Csv).unwrap();
        assert_eq!(back.records.len(), 1);
        assert_eq!(back.records[0].p1_joints.len(), 17);
        assert_eq!(back, f);
    }

    #[test]
    fn empty_ball_cells_mean_absent_ball() {
        let f = file(vec![sample(3, None)]);
        let bytes = render(&f, RecordFormat::Csv);
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.lines().nth(2).unwrap().ends_with(",,,0"));
        let back = parse_frame_records(&bytes[..], RecordFormat::Csv).unwrap();
        assert_eq!(back.records[0].ball, None);
        assert!(!back.records[0].ball_visible);
    }

    #[test]
    fn canonical_files_round_trip_bytewise() {
        let f = file(vec![
            sample(0, Some([0.1, 1e-7])),
            sample(1, None),
            sample(5, Some([1279.999, 3.0])),
        ]);
        for fmt in [RecordFormat::Csv, RecordFormat::Jsonl] {
            let bytes = render(&f, fmt);
            let parsed = parse_frame_records(&bytes[..], fmt).unwrap();
            assert_eq!(render(&parsed, fmt), bytes, "{fmt:?}");
        }
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let f = file(vec![sample(0, None), sample(1, None)]);
        let text = String::from_utf8(render(&f, RecordFormat::Csv)).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[3].push_str(",9");
        let broken = lines.join("\n");
        match parse_frame_records(broken.as_bytes(), RecordFormat::Csv) {
            Err(DataError::Schema { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reordered_header_is_rejected() {
        let f = file(vec![sample(0, None)]);
        let text = String::from_utf8(render(&f, RecordFormat::Csv)).unwrap();
        let broken = text.replacen("p1_cx,p1_cy", "p1_cy,p1_cx", 1);
        assert!(matches!(
            parse_frame_records(broken.as_bytes(), RecordFormat::Csv),
            Err(DataError::Schema { .. })
        ));
    }

    #[test]
    fn visible_flag_must_agree_with_cells() {
        let f = file(vec![sample(0, None)]);
        let text = String::from_utf8(render(&f, RecordFormat::Csv)).unwrap();
        let broken = text.replace(",,,0", ",,,1");
        assert!(matches!(
            parse_frame_records(broken.as_bytes(), RecordFormat::Csv),
            Err(DataError::Schema { line: 3, .. })
        ));
    }

    #[test]
    fn non_monotone_frames_rejected() {
        let f = file(vec![sample(4, None), sample(4, None)]);
        for fmt in [RecordFormat::Csv, RecordFormat::Jsonl] {
            let bytes = render(&f, fmt);
            assert!(matches!(
                parse_frame_records(&bytes[..], fmt),
                Err(DataError::NonMonotoneFrames { .. })
            ));
        }
    }

    #[test]
    fn jsonl_joint_count_is_enforced() {
        let f = file(vec![sample(0, None)]);
        let text = String::from_utf8(render(&f, RecordFormat::Jsonl)).unwrap();
        let broken = text.replacen("[100.0,400.5],", "", 1);
        assert!(matches!(
            parse_frame_records(broken.as_bytes(), RecordFormat::Jsonl),
            Err(DataError::Schema { line: 2, .. })
        ));
    }

    #[test]
    fn metadata_is_optional() {
        let f = file(vec![sample(0, None)]);
        let text = String::from_utf8(render(&f, RecordFormat::Csv)).unwrap();
        let bare: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
        let back = parse_frame_records(bare.as_bytes(), RecordFormat::Csv).unwrap();
        assert_eq!(back.meta, SeriesMeta::default());
        assert_eq!(back.meta.frame_size_or_default(), FrameSize::default());
        assert_eq!(peek_meta(text.as_bytes()).unwrap(), f.meta);
    }

    #[test]
    fn notes_are_skipped_by_both_readers() {
        let f = file(vec![sample(0, Some([1.0, 2.0])), sample(1, None)]);
        for fmt in [RecordFormat::Csv, RecordFormat::Jsonl] {
            let mut out = Vec::new();
            write_frame_records_annotated(&f, fmt, "context=10\ndegree=2", &mut out).unwrap();
            let text = String::from_utf8(out.clone()).unwrap();
            assert_eq!(text.lines().nth(1), Some("# context=10"));
            assert_eq!(parse_frame_records(&out[..], fmt).unwrap(), f);
            assert_eq!(peek_meta(&out[..]).unwrap(), f.meta);
        }
    }
}
