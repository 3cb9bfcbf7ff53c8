//! Bounding-box annotations as CSV: header `frame_id,x0,y0,x1,y1`, one box per line.

use std::path::Path;

use super::{Annotation, BBox};
use crate::error::{Error, Result};
use crate::io;

const HEADER: [&str; 5] = ["frame_id", "x0", "y0", "x1", "y1"];

pub fn load_annotations(path: &Path) -> Result<Vec<Annotation>> {
    let bytes = io::read(path)?;
    parse_annotations(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parses annotation CSV, grouping boxes by frame id in order of first appearance and
/// preserving file order within each frame.
pub fn parse_annotations(bytes: &[u8]) -> Result<Vec<Annotation>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(format!("bad annotation header: {e}")))?;
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(Error::format(format!(
            "unknown annotation header {:?}, expected {}",
            headers.iter().collect::<Vec<_>>(),
            HEADER.join(",")
        )));
    }

    let mut out: Vec<Annotation> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let line = line + 2;
        let rec = rec.map_err(|e| Error::format(format!("line {line}: {e}")))?;
        let coord = |i: usize| -> Result<i64> {
            rec[i].parse::<i64>().map_err(|_| {
                Error::format(format!(
                    "line {line}: non-integer coordinate {} = {:?}",
                    HEADER[i], &rec[i]
                ))
            })
        };
        let (x0, y0, x1, y1) = (coord(1)?, coord(2)?, coord(3)?, coord(4)?);
        let bbox = BBox::new(x0, y0, x1, y1)
            .map_err(|_| Error::format(format!("line {line}: degenerate box")))?;
        let id = &rec[0];
        let slot = *index.entry(id.to_string()).or_insert_with(|| {
            out.push(Annotation {
                frame_id: id.to_string(),
                boxes: Vec::new(),
            });
            out.len() - 1
        });
        out[slot].boxes.push(bbox);
    }
    Ok(out)
}

pub fn encode_annotations(annotations: &[Annotation]) -> Vec<u8> {
    let mut s = HEADER.join(",");
    s.push('\n');
    for a in annotations {
        for b in &a.boxes {
            s.push_str(&format!("{},{},{},{},{}\n", a.frame_id, b.x0, b.y0, b.x1, b.y1));
        }
    }
    s.into_bytes()
}

/// Writes annotations. Frames with no boxes produce no lines.
pub fn save_annotations(annotations: &[Annotation], path: &Path) -> Result<()> {
    io::write_atomic(path, &encode_annotations(annotations))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_by_frame_preserving_order() {
        let csv = b"frame_id,x0,y0,x1,y1\na,0,0,2,2\nb,1,1,3,3\na,4,4,6,7\n";
        let anns = parse_annotations(csv).unwrap();
        assert_eq!(anns.len(), 2);
        assert_eq!(anns[0].frame_id, "a");
        assert_eq!(anns[0].boxes.len(), 2);
        assert_eq!(anns[0].boxes[1], BBox::new(4, 4, 6, 7).unwrap());
        assert_eq!(anns[1].boxes.len(), 1);
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_annotations(b"frame_id,x0,y0,x1,y1\n").unwrap().is_empty());
    }

    #[test]
    fn degenerate_box() {
        let e = parse_annotations(b"frame_id,x0,y0,x1,y1\na,5,5,5,9\n").unwrap_err();
        assert!(e.to_string().contains("degenerate box"), "{e}");
    }

    #[test]
    fn non_integer_and_bad_header() {
        let e = parse_annotations(b"frame_id,x0,y0,x1,y1\na,1.5,0,3,3\n").unwrap_err();
        assert!(e.to_string().contains("non-integer"), "{e}");
        let e = parse_annotations(b"id,x0,y0,x1,y1\n").unwrap_err();
        assert!(e.to_string().contains("unknown annotation header"), "{e}");
    }

    #[test]
    fn encode_then_parse() {
        let anns = vec![
            Annotation {
                frame_id: "f0".into(),
                boxes: vec![BBox::new(-1, 2, 3, 4).unwrap()],
            },
            Annotation {
                frame_id: "f1".into(),
                boxes: vec![BBox::new(0, 0, 1, 1).unwrap(), BBox::new(5, 5, 9, 8).unwrap()],
            },
        ];
        assert_eq!(parse_annotations(&encode_annotations(&anns)).unwrap(), anns);
    }
}
