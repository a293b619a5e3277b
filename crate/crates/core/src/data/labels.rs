//! YOLO-format text files: label lines `class cx cy w h` and prediction
//! lines `class confidence cx cy w h`, all normalized floats serialized with
//! six decimal places.

use std::fmt::Write as _;

use crate::boxloss::BBox;
use crate::{Error, Result};

fn parse_field(line_no: usize, field: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>().map_err(|_| Error::Parse {
        line: line_no,
        msg: format!("field {field}: {raw:?} is not a number"),
    })
}

fn check_range(line_no: usize, field: &str, v: f64, lo_open: bool) -> Result<f64> {
    let ok = if lo_open {
        v > 0.0 && v <= 1.0
    } else {
        (0.0..=1.0).contains(&v)
    };
    if !ok {
        return Err(Error::Parse {
            line: line_no,
            msg: format!("field {field} out of range: {v}"),
        });
    }
    Ok(v)
}

fn parse_box(line_no: usize, parts: &[&str]) -> Result<BBox<f64>> {
    let cx = check_range(line_no, "cx", parse_field(line_no, "cx", parts[0])?, false)?;
    let cy = check_range(line_no, "cy", parse_field(line_no, "cy", parts[1])?, false)?;
    let w = check_range(line_no, "w", parse_field(line_no, "w", parts[2])?, true)?;
    let h = check_range(line_no, "h", parse_field(line_no, "h", parts[3])?, true)?;
    BBox::new(cx, cy, w, h)
}

fn parse_class(line_no: usize, raw: &str) -> Result<usize> {
    raw.parse::<usize>().map_err(|_| Error::Parse {
        line: line_no,
        msg: format!("field class: {raw:?} is not a non-negative integer"),
    })
}

/// Parse label lines `class cx cy w h`. Blank lines are skipped; an empty
/// file yields an empty list.
pub fn parse_labels(text: &str) -> Result<Vec<(usize, BBox<f64>)>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 5 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 5 fields (class cx cy w h), got {}", parts.len()),
            });
        }
        let class = parse_class(line_no, parts[0])?;
        out.push((class, parse_box(line_no, &parts[1..])?));
    }
    Ok(out)
}

pub fn write_labels(labels: &[(usize, BBox<f64>)]) -> String {
    let mut out = String::new();
    for (class, b) in labels {
        let _ = writeln!(out, "{class} {:.6} {:.6} {:.6} {:.6}", b.cx, b.cy, b.w, b.h);
    }
    out
}

/// Parse prediction lines `class confidence cx cy w h`.
pub fn parse_predictions(text: &str) -> Result<Vec<(usize, f64, BBox<f64>)>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 6 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!(
                    "expected 6 fields (class confidence cx cy w h), got {}",
                    parts.len()
                ),
            });
        }
        let class = parse_class(line_no, parts[0])?;
        let conf = check_range(
            line_no,
            "confidence",
            parse_field(line_no, "confidence", parts[1])?,
            false,
        )?;
        out.push((class, conf, parse_box(line_no, &parts[2..])?));
    }
    Ok(out)
}

pub fn write_predictions(preds: &[(usize, f64, BBox<f64>)]) -> String {
    let mut out = String::new();
    for (class, conf, b) in preds {
        let _ = writeln!(
            out,
            "{class} {conf:.6} {:.6} {:.6} {:.6} {:.6}",
            b.cx, b.cy, b.w, b.h
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_direct_field_mapping() {
        let labels = parse_labels("0 0.5 0.5 0.1 0.2\n").unwrap();
        assert_eq!(labels.len(), 1);
        let (class, b) = labels[0];
        assert_eq!(class, 0);
        assert_eq!((b.cx, b.cy, b.w, b.h), (0.5, 0.5, 0.1, 0.2));
    }

    #[test]
    fn empty_file_is_empty_list() {
        assert!(parse_labels("").unwrap().is_empty());
        assert!(parse_labels("\n\n").unwrap().is_empty());
    }

    #[test]
    fn errors_carry_line_numbers_and_field_names() {
        let err = parse_labels("0 0.5 0.5 0.1 0.2\n1 0.5 0.5\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_labels("0 0.5 1.5 0.1 0.2\n").unwrap_err().to_string();
        assert!(err.contains("field cy"), "{err}");
        let err = parse_labels("0 0.5 0.5 0.0 0.2\n").unwrap_err().to_string();
        assert!(err.contains("field w"), "{err}");
        let err = parse_labels("x 0.5 0.5 0.1 0.2\n").unwrap_err().to_string();
        assert!(err.contains("field class"), "{err}");
    }

    #[test]
    fn predictions_parse_confidence() {
        let preds = parse_predictions("2 0.75 0.5 0.5 0.1 0.2\n").unwrap();
        assert_eq!(preds[0].0, 2);
        assert_eq!(preds[0].1, 0.75);
        let err = parse_predictions("2 1.75 0.5 0.5 0.1 0.2\n").unwrap_err().to_string();
        assert!(err.contains("confidence"), "{err}");
    }

    proptest! {
        #[test]
        fn label_round_trip(
            entries in proptest::collection::vec(
                (0usize..6, 0.0f64..=1.0, 0.0f64..=1.0, 0.001f64..=1.0, 0.001f64..=1.0),
                0..20,
            )
        ) {
            // quantize to the serialized precision first
            let labels: Vec<(usize, BBox<f64>)> = entries
                .into_iter()
                .map(|(c, cx, cy, w, h)| {
                    let q = |v: f64| (v * 1e6).round() / 1e6;
                    (c, BBox { cx: q(cx), cy: q(cy), w: q(w).max(1e-6), h: q(h).max(1e-6) })
                })
                .collect();
            let text = write_labels(&labels);
            let parsed = parse_labels(&text).unwrap();
            prop_assert_eq!(parsed, labels);
        }
    }
}
