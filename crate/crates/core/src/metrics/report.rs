//! Plain-text tables and CSV curves for evaluation reports.

use std::fmt::Write;

use super::depth::DepthErrorReport;
use super::reconstruction::ReconstructionReport;
use super::segmentation::SegmentationReport;

fn table(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: Vec<String>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        writeln!(out, "{}", padded.join(" | ").trim_end()).expect("string write");
    };
    line(&mut out, header.iter().map(|h| h.to_string()).collect());
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    writeln!(out, "{}", rule.join("-+-")).expect("string write");
    for row in rows {
        line(&mut out, row);
    }
    out
}

pub fn depth_table(rows: &[(&str, &DepthErrorReport)]) -> String {
    table(
        &["Depth", "Abs. error", "RMS (m)", "Pixels"],
        rows.iter()
            .map(|(name, r)| {
                vec![
                    name.to_string(),
                    format!("{:.4}", r.abs_rel),
                    format!("{:.4}", r.rms),
                    r.n_valid.to_string(),
                ]
            })
            .collect(),
    )
}

pub fn segmentation_table(rows: &[(&str, &SegmentationReport)]) -> String {
    table(
        &["Segmentation", "Overall Acc.", "Average Acc.", "Average IoU"],
        rows.iter()
            .map(|(name, r)| {
                vec![
                    name.to_string(),
                    format!("{:.4}", r.overall_acc),
                    format!("{:.4}", r.average_acc),
                    format!("{:.4}", r.average_iou),
                ]
            })
            .collect(),
    )
}

pub fn reconstruction_table(rows: &[(&str, &ReconstructionReport)]) -> String {
    table(
        &[
            "Reconstruction",
            "GT->Recon avg (m)",
            "Completeness d90 (m)",
            "Recon->GT avg (m)",
            "Accuracy % < 5cm",
        ],
        rows.iter()
            .map(|(name, r)| {
                vec![
                    name.to_string(),
                    format!("{:.4}", r.gt_to_recon.avg_dist),
                    format!("{:.4}", r.gt_to_recon.completeness_d90),
                    format!("{:.4}", r.recon_to_gt.avg_dist),
                    format!("{:.2}", r.recon_to_gt.accuracy_pct),
                ]
            })
            .collect(),
    )
}

pub fn deviation_curve_csv(report: &DepthErrorReport) -> String {
    let mut out = String::from("threshold_m,fraction\n");
    for (t, f) in &report.deviation_curve {
        writeln!(out, "{t:.1},{f:.6}").expect("string write");
    }
    out
}

pub fn rms_by_distance_csv(report: &DepthErrorReport) -> String {
    let mut out = String::from("distance_m,rms_m\n");
    for (d, r) in &report.rms_by_distance {
        writeln!(out, "{d:.2},{r:.6}").expect("string write");
    }
    out
}
