//! CSV serialization of evaluation reports: a one-row summary plus the
//! 255-point precision/recall/F curves.

use std::io::Write as _;
use std::path::Path;

use sod_core::metrics::MetricsReport;

use crate::error::{IoContext, Result};

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f =
        std::fs::File::create(path).io_ctx(format!("writing {}", path.display()))?;
    f.write_all(text.as_bytes()).io_ctx(format!("writing {}", path.display()))?;
    Ok(())
}

pub fn summary_row(report: &MetricsReport) -> String {
    format!(
        "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
        report.s_alpha, report.f_max, report.f_avg, report.f_weighted, report.e_xi, report.mae
    )
}

pub const SUMMARY_HEADER: &str = "s_alpha,f_max,f_avg,f_weighted,e_xi,mae";

/// `metrics.csv`: one header row and one value row, plus image counts.
pub fn write_metrics(dir: &Path, report: &MetricsReport) -> Result<()> {
    std::fs::create_dir_all(dir).io_ctx(format!("creating {}", dir.display()))?;
    let text = format!(
        "{SUMMARY_HEADER},images,degenerate_images\n{},{},{}\n",
        summary_row(report),
        report.images,
        report.degenerate_images
    );
    write_text(&dir.join("metrics.csv"), &text)
}

/// `curves.csv`: one row per threshold 1..=255 with the dataset-averaged
/// precision, recall, and F-measure at that threshold.
pub fn write_curves(dir: &Path, report: &MetricsReport) -> Result<()> {
    std::fs::create_dir_all(dir).io_ctx(format!("creating {}", dir.display()))?;
    let mut text = String::from("threshold,precision,recall,f_measure\n");
    for t in 0..report.precision.len() {
        text.push_str(&format!(
            "{},{:.10},{:.10},{:.10}\n",
            t + 1,
            report.precision[t],
            report.recall[t],
            report.f_curve[t]
        ));
    }
    write_text(&dir.join("curves.csv"), &text)
}
