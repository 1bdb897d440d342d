//! Deterministic JSON export of statistics and CSV export of loss traces.
//! Serialization is hand-rolled so field order and float formatting are
//! byte-stable across runs.

use std::fmt::Write as _;

use crate::auditory::AuditoryStats;
use crate::optimizer::TransferReport;
use crate::shallow::GramStats;

/// 17 significant digits: round-trips every f64 exactly.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_array(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&fmt_f64(*v));
    }
    out.push(']');
}

/// Auditory statistics as JSON. The `statistics` object holds exactly the
/// flat statistic vector (829 numeric leaves under the default config), in
/// canonical class order.
pub fn auditory_stats_json(stats: &AuditoryStats) -> String {
    let mut out = String::from("{\"model\":\"auditory\",\"statistics\":{");
    for (i, (name, values)) in stats.classes().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        if *name == "mod_power" {
            // keep the [cochlear band][modulation band] nesting
            out.push_str("\"mod_power\":[");
            for (r, row) in stats.mod_power.iter().enumerate() {
                if r > 0 {
                    out.push(',');
                }
                push_array(&mut out, row);
            }
            out.push(']');
        } else {
            let _ = write!(out, "\"{name}\":");
            push_array(&mut out, values);
        }
    }
    out.push_str("}}\n");
    out
}

/// Gram statistics as JSON; the symmetric matrix is stored as its upper
/// triangle in row-major order, `k*(k+1)/2` entries.
pub fn gram_stats_json(stats: &GramStats) -> String {
    let k = stats.gram.nrows();
    let mut upper = Vec::with_capacity(k * (k + 1) / 2);
    for i in 0..k {
        for j in i..k {
            upper.push(stats.gram[[i, j]]);
        }
    }
    let mut out = String::from("{\"model\":\"shallow\",");
    let _ = write!(
        out,
        "\"num_filters\":{k},\"frame_count\":{},\"gram_upper\":",
        stats.frame_count
    );
    push_array(&mut out, &upper);
    out.push_str("}\n");
    out
}

/// Loss trace as `iteration,loss,wall_ms` CSV lines with a header row.
pub fn loss_trace_csv(report: &TransferReport) -> String {
    let mut out = String::from("iteration,loss,wall_ms\n");
    for (i, (loss, ms)) in report
        .loss_trace
        .iter()
        .zip(&report.wall_ms_trace)
        .enumerate()
    {
        let _ = writeln!(out, "{i},{},{ms:.3}", fmt_f64(*loss));
    }
    out
}

/// Counts numeric leaves in a JSON string; test helper for the export
/// contracts, kept here so integration tests can share it.
pub fn count_numeric_leaves(json: &str) -> usize {
    // numbers are exactly the comma/bracket-delimited tokens starting with a
    // digit or minus sign outside of strings
    let mut count = 0;
    let mut in_string = false;
    let mut prev_struct = true;
    for c in json.chars() {
        match c {
            '"' => in_string = !in_string,
            '[' | ',' | ':' | '{' => {
                if !in_string {
                    prev_struct = true;
                }
            }
            c if !in_string && prev_struct && (c.is_ascii_digit() || c == '-') => {
                count += 1;
                prev_struct = false;
            }
            c if !c.is_whitespace() => prev_struct = false,
            _ => {}
        }
    }
    count
}
