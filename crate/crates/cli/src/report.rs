//! CSV renderers for training histories and evaluation reports.

use ddcn_core::metrics::MetricReport;
use ddcn_core::train::EpochStats;

pub fn loss_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,l_ir,l_up,total,lr\n");
    for s in history {
        out.push_str(&format!("{},{},{},{},{}\n", s.epoch, s.l_ir, s.l_up, s.total, s.lr));
    }
    out
}

pub struct MetricRow {
    pub sequence: String,
    pub frame: String,
    pub report: MetricReport,
}

/// Per-frame rows followed by a mean summary row.
pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("sequence,frame,psnr_db,ssim\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.sequence, row.frame, row.report.psnr_db, row.report.ssim
        ));
    }
    if !rows.is_empty() {
        let n = rows.len() as f64;
        let psnr: f64 = rows.iter().map(|r| r.report.psnr_db).sum::<f64>() / n;
        let ssim: f64 = rows.iter().map(|r| r.report.ssim).sum::<f64>() / n;
        out.push_str(&format!("mean,all,{psnr},{ssim}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_rows_follow_the_header() {
        let history = vec![
            EpochStats { epoch: 0, l_ir: 0.5, l_up: 0.25, total: 0.5025, lr: 1e-4 },
            EpochStats { epoch: 1, l_ir: 0.25, l_up: 0.25, total: 0.2525, lr: 1e-4 },
        ];
        let csv = loss_csv(&history);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,l_ir,l_up,total,lr");
        assert_eq!(lines[1], "0,0.5,0.25,0.5025,0.0001");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn metric_summary_is_the_mean() {
        let rows = vec![
            MetricRow {
                sequence: "a".into(),
                frame: "frame_0000".into(),
                report: MetricReport { psnr_db: 30.0, ssim: 0.5 },
            },
            MetricRow {
                sequence: "a".into(),
                frame: "frame_0001".into(),
                report: MetricReport { psnr_db: 40.0, ssim: 1.0 },
            },
        ];
        let csv = metrics_csv(&rows);
        let last = csv.lines().last().unwrap();
        assert_eq!(last, "mean,all,35,0.75");
    }
}
