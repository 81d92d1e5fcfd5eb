//! Cross-seed aggregation: CSV table and an SVG learning-curve plot.

use std::path::Path;

use crate::{Error, Result};

use super::train::read_metrics_file;
use super::MilestoneRecord;

/// Per-milestone aggregate across seeds.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub milestone: usize,
    pub dialogues: u64,
    pub mean_success: f64,
    pub std_success: f64,
    pub mean_turns: f64,
}

pub fn read_metrics(path: &Path) -> Result<Vec<MilestoneRecord>> {
    read_metrics_file(path)
}

/// Aggregate several seeds' records; all runs must share the milestone grid.
pub fn build_report(runs: &[Vec<MilestoneRecord>]) -> Result<Vec<ReportRow>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::MilestoneGrid("no metrics files".into()))?;
    for (i, run) in runs.iter().enumerate() {
        if run.len() != first.len() {
            return Err(Error::MilestoneGrid(format!(
                "run 0 has {} milestones, run {i} has {}",
                first.len(),
                run.len()
            )));
        }
        for (a, b) in first.iter().zip(run) {
            if a.milestone != b.milestone || a.dialogues != b.dialogues {
                return Err(Error::MilestoneGrid(format!(
                    "milestone {} at {} dialogues vs milestone {} at {}",
                    a.milestone, a.dialogues, b.milestone, b.dialogues
                )));
            }
        }
    }
    let n = runs.len() as f64;
    Ok((0..first.len())
        .map(|i| {
            let succ: Vec<f64> = runs.iter().map(|r| r[i].success_rate).collect();
            let mean = succ.iter().sum::<f64>() / n;
            let var = succ.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
            ReportRow {
                milestone: first[i].milestone,
                dialogues: first[i].dialogues,
                mean_success: mean,
                std_success: var.sqrt(),
                mean_turns: runs.iter().map(|r| r[i].mean_turns).sum::<f64>() / n,
            }
        })
        .collect())
}

/// CSV with one row per milestone.
pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("milestone,dialogues,mean_success,std_success,mean_turns\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.3}\n",
            r.milestone, r.dialogues, r.mean_success, r.std_success, r.mean_turns
        ));
    }
    out
}

/// Learning-curve plot: mean success over training dialogues with a ±1
/// standard-deviation band.
pub fn learning_curve_svg(rows: &[ReportRow], title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const ML: f64 = 60.0; // margins
    const MR: f64 = 20.0;
    const MT: f64 = 40.0;
    const MB: f64 = 50.0;
    let plot_w = W - ML - MR;
    let plot_h = H - MT - MB;
    let max_x = rows.last().map_or(1.0, |r| r.dialogues as f64).max(1.0);
    let x = |d: f64| ML + d / max_x * plot_w;
    let y = |s: f64| MT + (1.0 - s.clamp(0.0, 1.0)) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{title}</text>\n",
        W / 2.0
    ));
    // Axes and grid.
    for tick in 0..=5 {
        let s = tick as f64 / 5.0;
        let yy = y(s);
        svg.push_str(&format!(
            "<line x1=\"{ML}\" y1=\"{yy:.1}\" x2=\"{:.1}\" y2=\"{yy:.1}\" stroke=\"#ddd\"/>\n",
            W - MR
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{s:.1}</text>\n",
            ML - 6.0,
            yy + 4.0
        ));
    }
    for tick in 0..=4 {
        let d = max_x * tick as f64 / 4.0;
        let xx = x(d);
        svg.push_str(&format!(
            "<text x=\"{xx:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{:.0}</text>\n",
            H - MB + 18.0,
            d
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        H - MB
    ));
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        H - MB,
        W - MR,
        H - MB
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">training dialogues</text>\n",
        ML + plot_w / 2.0,
        H - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">success rate</text>\n",
        MT + plot_h / 2.0,
        MT + plot_h / 2.0
    ));

    if !rows.is_empty() {
        // ±1 std band.
        let mut band = String::from("<polygon fill=\"#4a90d922\" stroke=\"none\" points=\"");
        for r in rows {
            band.push_str(&format!(
                "{:.1},{:.1} ",
                x(r.dialogues as f64),
                y(r.mean_success + r.std_success)
            ));
        }
        for r in rows.iter().rev() {
            band.push_str(&format!(
                "{:.1},{:.1} ",
                x(r.dialogues as f64),
                y(r.mean_success - r.std_success)
            ));
        }
        band.push_str("\"/>\n");
        svg.push_str(&band);

        let mut line = String::from(
            "<polyline fill=\"none\" stroke=\"#4a90d9\" stroke-width=\"2\" points=\"",
        );
        for r in rows {
            line.push_str(&format!(
                "{:.1},{:.1} ",
                x(r.dialogues as f64),
                y(r.mean_success)
            ));
        }
        line.push_str("\"/>\n");
        svg.push_str(&line);
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(milestone: usize, success: f64) -> MilestoneRecord {
        MilestoneRecord {
            milestone,
            dialogues: (milestone * 200) as u64,
            success_rate: success,
            mean_turns: 12.0,
            mean_return_e: 0.5,
            mean_return_i: 0.5,
            wall_clock_secs: 0.0,
        }
    }

    #[test]
    fn stddev_is_nonnegative_and_zero_for_single_run() {
        let runs = vec![vec![record(1, 0.2), record(2, 0.6)]];
        let rows = build_report(&runs).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].std_success, 0.0);

        let runs = vec![
            vec![record(1, 0.2), record(2, 0.6)],
            vec![record(1, 0.4), record(2, 0.8)],
            vec![record(1, 0.3), record(2, 0.7)],
        ];
        let rows = build_report(&runs).unwrap();
        assert!(rows.iter().all(|r| r.std_success >= 0.0));
        assert!((rows[0].mean_success - 0.3).abs() < 1e-12);
    }

    #[test]
    fn csv_row_count_matches_milestones() {
        let runs = vec![vec![record(1, 0.2), record(2, 0.6), record(3, 0.9)]];
        let rows = build_report(&runs).unwrap();
        let csv = report_csv(&rows);
        assert_eq!(csv.lines().count(), 4); // header + 3
        assert!(csv.starts_with("milestone,dialogues,"));
    }

    #[test]
    fn mismatched_grids_error() {
        let runs = vec![
            vec![record(1, 0.2), record(2, 0.6)],
            vec![record(1, 0.2)],
        ];
        assert!(matches!(
            build_report(&runs),
            Err(Error::MilestoneGrid(_))
        ));
    }

    #[test]
    fn svg_contains_curve_points() {
        let runs = vec![vec![record(1, 0.2), record(2, 0.6), record(3, 0.9)]];
        let rows = build_report(&runs).unwrap();
        let svg = learning_curve_svg(&rows, "demo");
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("polygon"));
    }
}
