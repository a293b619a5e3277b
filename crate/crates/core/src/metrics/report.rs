//! Text renderings of an evaluation report: a human-readable aligned table
//! and a machine-readable flat key/value document. Both are byte-stable for
//! fixed inputs.

use std::fmt::Write as _;

use super::eval::EvalReport;

fn class_name(names: &[String], id: usize) -> String {
    names
        .get(id)
        .cloned()
        .unwrap_or_else(|| format!("class{id}"))
}

/// Aligned table with one row per ground-truth class plus an `all` row.
pub fn render_table(report: &EvalReport, names: &[String]) -> String {
    let name_width = report
        .per_class
        .iter()
        .map(|m| class_name(names, m.class_id).len())
        .chain(["class".len(), "all".len()])
        .max()
        .unwrap_or(5)
        .max(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<name_width$} {:>9} {:>9} {:>9} {:>9}",
        "class", "P", "R", "AP50", "AP50-95"
    );
    for m in &report.per_class {
        let _ = writeln!(
            out,
            "{:<name_width$} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
            class_name(names, m.class_id),
            m.precision,
            m.recall,
            m.ap50,
            m.ap50_95
        );
    }
    let _ = writeln!(
        out,
        "{:<name_width$} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
        "all", report.precision, report.recall, report.map50, report.map50_95
    );
    out
}

/// Flat `key value` lines, one fact per line.
pub fn render_key_value(report: &EvalReport, names: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "aggregate.precision {:.6}", report.precision);
    let _ = writeln!(out, "aggregate.recall {:.6}", report.recall);
    let _ = writeln!(out, "aggregate.map50 {:.6}", report.map50);
    let _ = writeln!(out, "aggregate.map50_95 {:.6}", report.map50_95);
    let _ = writeln!(out, "counts.tp {}", report.tp);
    let _ = writeln!(out, "counts.fp {}", report.fp);
    let _ = writeln!(out, "counts.fn {}", report.fn_count);
    let _ = writeln!(out, "counts.detections {}", report.num_detections);
    let _ = writeln!(out, "counts.ground_truths {}", report.num_ground_truths);
    let _ = writeln!(
        out,
        "reporting_confidence {:.6}",
        report.reporting_confidence
    );
    for m in &report.per_class {
        let id = m.class_id;
        let _ = writeln!(out, "class.{id}.name {}", class_name(names, id));
        let _ = writeln!(out, "class.{id}.gt {}", m.num_gt);
        let _ = writeln!(out, "class.{id}.precision {:.6}", m.precision);
        let _ = writeln!(out, "class.{id}.recall {:.6}", m.recall);
        let _ = writeln!(out, "class.{id}.ap50 {:.6}", m.ap50);
        let _ = writeln!(out, "class.{id}.ap50_95 {:.6}", m.ap50_95);
    }
    out
}
