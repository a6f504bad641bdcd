//! File formats: PGM images, ground-truth and detection CSVs, key-value
//! parameter files and the binary ratio-map layout.

pub mod kv;
pub mod pgm;

use std::path::Path;

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};

pub use kv::KeyValues;
pub use pgm::{load_image, read_label_pgm, read_pgm, write_label_pgm, write_pgm, PgmImage};

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, ctx: &str, line: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse(ctx, format!("row {line}: bad field {}", i + 1)))
}

/// Parse ground-truth rows `x0,y0,w,h` (no header).
pub fn parse_truth(text: &str, context: &str) -> Result<Vec<BoundingBox>> {
    let mut out = Vec::new();
    for (i, rec) in csv_reader(text).records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(context, e.to_string()))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != 4 {
            return Err(Error::parse(context, format!("row {}: expected 4 fields", i + 1)));
        }
        let w: u32 = field(&rec, 2, context, i + 1)?;
        let h: u32 = field(&rec, 3, context, i + 1)?;
        if w == 0 || h == 0 {
            return Err(Error::parse(context, format!("row {}: empty box", i + 1)));
        }
        out.push(BoundingBox::new(
            field(&rec, 0, context, i + 1)?,
            field(&rec, 1, context, i + 1)?,
            w,
            h,
        ));
    }
    Ok(out)
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<Vec<BoundingBox>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_truth(&text, &path.display().to_string())
}

pub fn format_truth(boxes: &[BoundingBox]) -> String {
    boxes
        .iter()
        .map(|b| format!("{},{},{},{}\n", b.x0, b.y0, b.w, b.h))
        .collect()
}

pub fn write_truth(path: impl AsRef<Path>, boxes: &[BoundingBox]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_truth(boxes)).map_err(|e| Error::io(path, e))
}

/// One detection row of the per-frame detection CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionRow {
    pub frame_id: usize,
    pub bbox: BoundingBox,
}

pub const DETECTION_HEADER: &str = "frame_id,x0,y0,w,h,score";

pub fn format_detections(rows: &[DetectionRow]) -> String {
    let mut s = String::from(DETECTION_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.frame_id, r.bbox.x0, r.bbox.y0, r.bbox.w, r.bbox.h, r.bbox.score
        ));
    }
    s
}

pub fn parse_detections(text: &str, context: &str) -> Result<Vec<DetectionRow>> {
    let mut out = Vec::new();
    for (i, rec) in csv_reader(text).records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(context, e.to_string()))?;
        if i == 0 && rec.get(0) == Some("frame_id") {
            continue;
        }
        if rec.len() != 6 {
            return Err(Error::parse(context, format!("row {}: expected 6 fields", i + 1)));
        }
        out.push(DetectionRow {
            frame_id: field(&rec, 0, context, i + 1)?,
            bbox: BoundingBox::scored(
                field(&rec, 1, context, i + 1)?,
                field(&rec, 2, context, i + 1)?,
                field(&rec, 3, context, i + 1)?,
                field(&rec, 4, context, i + 1)?,
                field(&rec, 5, context, i + 1)?,
            ),
        });
    }
    Ok(out)
}

pub fn write_detections(path: impl AsRef<Path>, rows: &[DetectionRow]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_detections(rows)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_rows_parse_without_header() {
        let boxes = parse_truth("1,2,3,4\n\n 5, 6, 7, 8\n", "t").unwrap();
        assert_eq!(boxes, vec![BoundingBox::new(1, 2, 3, 4), BoundingBox::new(5, 6, 7, 8)]);
        assert_eq!(parse_truth(&format_truth(&boxes), "t").unwrap(), boxes);
        assert!(parse_truth("1,2,3\n", "t").is_err());
        assert!(parse_truth("1,2,0,4\n", "t").is_err());
        assert!(parse_truth("", "t").unwrap().is_empty());
    }

    #[test]
    fn detections_round_trip_with_header() {
        let rows = vec![
            DetectionRow { frame_id: 0, bbox: BoundingBox::scored(1, 2, 3, 4, 1.25) },
            DetectionRow { frame_id: 3, bbox: BoundingBox::scored(0, 0, 9, 9, -0.5) },
        ];
        let text = format_detections(&rows);
        assert!(text.starts_with(DETECTION_HEADER));
        assert_eq!(parse_detections(&text, "t").unwrap(), rows);
    }
}
