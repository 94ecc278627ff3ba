//! Plain-text and JSON rendering of metrics reports.

use std::fmt::Write;

use ctrieve_core::metrics::{MetricsReport, RankSummary};

pub fn to_json(reports: &[MetricsReport]) -> String {
    let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
    s.push('\n');
    s
}

fn rank_cells(r: &RankSummary) -> [String; 5] {
    [
        format!("{:.1}", 100.0 * r.r1),
        format!("{:.1}", 100.0 * r.r5),
        format!("{:.1}", 100.0 * r.r10),
        r.median_rank.to_string(),
        format!("{:.1}", r.mean_rank),
    ]
}

fn render(header: &[String], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut out, &rule);
    for r in rows {
        line(&mut out, r);
    }
    out
}

/// One row per report: recall (in percent), MdR and MnR for both directions,
/// followed by a keyword precision table when any report has keyword queries.
pub fn to_table(reports: &[MetricsReport]) -> String {
    let mut header = vec!["config".to_string()];
    for dir in ["t2i", "i2t"] {
        for m in ["R@1", "R@5", "R@10", "MdR", "MnR"] {
            header.push(format!("{dir} {m}"));
        }
    }
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![r.label.clone()];
            row.extend(rank_cells(&r.text_to_image));
            row.extend(rank_cells(&r.image_to_text));
            row
        })
        .collect();
    let mut out = render(&header, &rows);

    let keyword_rows: Vec<Vec<String>> = reports
        .iter()
        .flat_map(|r| {
            r.keywords.iter().map(move |k| {
                let mut row = vec![r.label.clone(), k.keyword.clone(), k.pool_size.to_string()];
                row.extend(
                    k.precision
                        .iter()
                        .map(|p| p.value.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))),
                );
                row
            })
        })
        .collect();
    if let Some(first) = reports.iter().find_map(|r| r.keywords.first()) {
        let mut header = vec!["config".to_string(), "keyword".to_string(), "pool".to_string()];
        header.extend(first.precision.iter().map(|p| format!("P@{}", p.k)));
        out.push('\n');
        out.push_str(&render(&header, &keyword_rows));
    }
    out
}
