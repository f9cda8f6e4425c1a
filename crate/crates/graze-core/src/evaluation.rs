//! Confusion-matrix accounting and the metric definitions behind the report
//! tables: accuracy, per-class precision/recall, and macro (unweighted
//! per-class mean) precision/recall/F1, plus mean/median aggregation over
//! splits and the CSV/JSON report shapes.

use crate::dataset::Label;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Counts with grazing as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Grazing predicted grazing.
    pub tp_gz: u64,
    /// Grazing predicted no-activity.
    pub fn_gz: u64,
    /// No-activity predicted grazing.
    pub fp_gz: u64,
    /// No-activity predicted no-activity.
    pub tn_gz: u64,
}

impl ConfusionMatrix {
    pub fn new(tp_gz: u64, fn_gz: u64, fp_gz: u64, tn_gz: u64) -> Self {
        Self { tp_gz, fn_gz, fp_gz, tn_gz }
    }

    pub fn total(&self) -> u64 {
        self.tp_gz + self.fn_gz + self.fp_gz + self.tn_gz
    }

    pub fn count(&mut self, label: Label, prediction: Label) {
        match (label, prediction) {
            (Label::Grazing, Label::Grazing) => self.tp_gz += 1,
            (Label::Grazing, Label::NoActivity) => self.fn_gz += 1,
            (Label::NoActivity, Label::Grazing) => self.fp_gz += 1,
            (Label::NoActivity, Label::NoActivity) => self.tn_gz += 1,
        }
    }
}

pub fn confusion(predictions: &[Label], labels: &[Label]) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() || predictions.is_empty() {
        return Err(Error::Evaluation(format!(
            "need equal non-empty prediction/label lists, got {} and {}",
            predictions.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(0, 0, 0, 0);
    for (&p, &l) in predictions.iter().zip(labels) {
        cm.count(l, p);
    }
    Ok(cm)
}

/// All values in [0, 1]. `f1`, `prec` and `rec` are unweighted means of the
/// two per-class values; per-class F1 is the harmonic mean of that class's
/// precision and recall. `zero_division` flags any precision whose predicted
/// count was zero (the value is then defined as 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub f1: f64,
    pub prec: f64,
    pub rec: f64,
    pub prec_gz: f64,
    pub prec_no: f64,
    pub rec_gz: f64,
    pub rec_no: f64,
    #[serde(default)]
    pub zero_division: bool,
}

fn ratio(num: u64, den: u64, warn: &mut bool) -> f64 {
    if den == 0 {
        *warn = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let ConfusionMatrix { tp_gz: tp, fn_gz: fng, fp_gz: fp, tn_gz: tn } = *cm;
    if tp + fng == 0 || tn + fp == 0 {
        return Err(Error::Evaluation(
            "metrics need at least one ground-truth sample per class".into(),
        ));
    }
    let mut zero_division = false;
    let prec_gz = ratio(tp, tp + fp, &mut zero_division);
    let prec_no = ratio(tn, tn + fng, &mut zero_division);
    let rec_gz = tp as f64 / (tp + fng) as f64;
    let rec_no = tn as f64 / (tn + fp) as f64;
    Ok(MetricsReport {
        acc: (tp + tn) as f64 / cm.total() as f64,
        f1: 0.5 * (harmonic(prec_gz, rec_gz) + harmonic(prec_no, rec_no)),
        prec: 0.5 * (prec_gz + prec_no),
        rec: 0.5 * (rec_gz + rec_no),
        prec_gz,
        prec_no,
        rec_gz,
        rec_no,
        zero_division,
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-metric arithmetic mean and median over splits.
pub fn aggregate(reports: &[MetricsReport]) -> Result<(MetricsReport, MetricsReport)> {
    if reports.is_empty() {
        return Err(Error::Evaluation("aggregate needs at least one report".into()));
    }
    let n = reports.len() as f64;
    let fields: [fn(&MetricsReport) -> f64; 8] = [
        |r| r.acc,
        |r| r.f1,
        |r| r.prec,
        |r| r.rec,
        |r| r.prec_gz,
        |r| r.prec_no,
        |r| r.rec_gz,
        |r| r.rec_no,
    ];
    let mut means = [0.0f64; 8];
    let mut medians = [0.0f64; 8];
    for (k, get) in fields.iter().enumerate() {
        means[k] = reports.iter().map(|r| get(r)).sum::<f64>() / n;
        let mut col: Vec<f64> = reports.iter().map(|r| get(r)).collect();
        medians[k] = median(&mut col);
    }
    let zero_division = reports.iter().any(|r| r.zero_division);
    let build = |v: [f64; 8]| MetricsReport {
        acc: v[0],
        f1: v[1],
        prec: v[2],
        rec: v[3],
        prec_gz: v[4],
        prec_no: v[5],
        rec_gz: v[6],
        rec_no: v[7],
        zero_division,
    };
    Ok((build(means), build(medians)))
}

/// Table column order used by every CSV artifact.
pub const CSV_HEADER: &str = "split,acc,f1,prec,rec,prec_gz,prec_no,rec_gz,rec_no";

/// Renders labeled rows (splits first, then aggregates) at 3 decimals, the
/// precision the source tables use.
pub fn render_csv(rows: &[(String, MetricsReport)]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (name, r) in rows {
        out.push_str(&format!(
            "{name},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}\n",
            r.acc, r.f1, r.prec, r.rec, r.prec_gz, r.prec_no, r.rec_gz, r.rec_no
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 0.0005;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= TOL
    }

    #[test]
    fn split_one_row_reproduced_from_reconstructed_counts() {
        // Validation fold of 59 sites, 30 grazing / 29 no-activity; counts
        // reconstructed from the published per-class recalls.
        let cm = ConfusionMatrix::new(27, 3, 9, 20);
        assert_eq!(cm.total(), 59);
        let m = metrics(&cm).unwrap();
        assert!(close(m.acc, 0.797), "acc {}", m.acc);
        assert!(close(m.f1, 0.794), "f1 {}", m.f1);
        assert!(close(m.prec, 0.810), "prec {}", m.prec);
        assert!(close(m.rec, 0.795), "rec {}", m.rec);
        assert!(close(m.prec_gz, 0.750), "prec_gz {}", m.prec_gz);
        assert!(close(m.prec_no, 0.870), "prec_no {}", m.prec_no);
        assert!(close(m.rec_gz, 0.900), "rec_gz {}", m.rec_gz);
        assert!(close(m.rec_no, 0.690), "rec_no {}", m.rec_no);
        assert!(!m.zero_division);
    }

    #[test]
    fn published_accuracy_column_aggregates() {
        let accs = [0.797, 0.770, 0.772, 0.733, 0.807];
        let reports: Vec<MetricsReport> = accs
            .iter()
            .map(|&a| MetricsReport {
                acc: a,
                f1: a,
                prec: a,
                rec: a,
                prec_gz: a,
                prec_no: a,
                rec_gz: a,
                rec_no: a,
                zero_division: false,
            })
            .collect();
        let (mean, med) = aggregate(&reports).unwrap();
        assert!(close(mean.acc, 0.776), "mean {}", mean.acc);
        assert!(close(med.acc, 0.772), "median {}", med.acc);
    }

    #[test]
    fn perfect_predictor_scores_one_everywhere() {
        let m = metrics(&ConfusionMatrix::new(10, 0, 0, 15)).unwrap();
        for v in [m.acc, m.f1, m.prec, m.rec, m.prec_gz, m.prec_no, m.rec_gz, m.rec_no] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn confusion_counts_by_label_and_prediction() {
        let g = Label::Grazing;
        let n = Label::NoActivity;
        let labels = [g, g, g, n, n];
        let preds = [g, n, g, g, n];
        let cm = confusion(&preds, &labels).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(2, 1, 1, 1));

        // Anti-predictor: diagonal empty.
        let flipped: Vec<Label> = labels
            .iter()
            .map(|&l| if l == g { n } else { g })
            .collect();
        let cm = confusion(&flipped, &labels).unwrap();
        assert_eq!(cm.tp_gz + cm.tn_gz, 0);
        assert_eq!(cm.total(), 5);
    }

    #[test]
    fn confusion_rejects_mismatched_or_empty() {
        assert!(confusion(&[Label::Grazing], &[]).is_err());
        assert!(confusion(&[], &[]).is_err());
    }

    #[test]
    fn class_swap_symmetry() {
        let cm = ConfusionMatrix::new(27, 3, 9, 20);
        // Swapping class roles: positives<->negatives swaps tp<->tn, fn<->fp.
        let swapped = ConfusionMatrix::new(20, 9, 3, 27);
        let a = metrics(&cm).unwrap();
        let b = metrics(&swapped).unwrap();
        assert_eq!(a.acc, b.acc);
        assert_eq!(a.prec, b.prec);
        assert_eq!(a.rec, b.rec);
        assert_eq!(a.f1, b.f1);
        assert_eq!(a.prec_gz, b.prec_no);
        assert_eq!(a.rec_gz, b.rec_no);
    }

    #[test]
    fn zero_division_precision_is_zero_with_flag() {
        // Everything predicted no-activity: no predicted positives.
        let m = metrics(&ConfusionMatrix::new(0, 5, 0, 5)).unwrap();
        assert_eq!(m.prec_gz, 0.0);
        assert!(m.zero_division);
        assert_eq!(m.rec_gz, 0.0);
        assert_eq!(m.f1, 0.5 * harmonic(0.5, 1.0));
    }

    #[test]
    fn empty_ground_truth_class_rejected() {
        assert!(metrics(&ConfusionMatrix::new(0, 0, 2, 3)).is_err());
        assert!(metrics(&ConfusionMatrix::new(2, 3, 0, 0)).is_err());
    }

    #[test]
    fn metric_ranges_and_f1_bound_hold_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..200 {
            let cm = ConfusionMatrix::new(
                rng.random_range(0..30),
                rng.random_range(1..30),
                rng.random_range(0..30),
                rng.random_range(1..30),
            );
            let m = metrics(&cm).unwrap();
            for v in [m.acc, m.f1, m.prec, m.rec, m.prec_gz, m.prec_no, m.rec_gz, m.rec_no] {
                assert!((0.0..=1.0).contains(&v));
            }
            let f1_gz = harmonic(m.prec_gz, m.rec_gz);
            assert!(f1_gz <= m.prec_gz.max(m.rec_gz) + 1e-12);
        }
    }

    #[test]
    fn aggregate_degenerate_and_permutation_cases() {
        let one = metrics(&ConfusionMatrix::new(27, 3, 9, 20)).unwrap();
        let (mean, med) = aggregate(&[one]).unwrap();
        assert_eq!(mean, one);
        assert_eq!(med, one);

        let two = metrics(&ConfusionMatrix::new(20, 10, 4, 25)).unwrap();
        let three = metrics(&ConfusionMatrix::new(5, 2, 7, 11)).unwrap();
        let (m1, d1) = aggregate(&[one, two, three]).unwrap();
        let (m2, d2) = aggregate(&[three, one, two]).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(d1, d2);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn even_count_median_averages_middle_pair() {
        let mut v = [0.4, 0.1, 0.3, 0.2];
        assert_eq!(median(&mut v), 0.25);
    }

    #[test]
    fn csv_layout_matches_column_order() {
        let r = metrics(&ConfusionMatrix::new(27, 3, 9, 20)).unwrap();
        let text = render_csv(&[("1".into(), r)]);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let row = lines.next().unwrap();
        assert!(row.starts_with("1,0.797,0.794,0.810,0.795,"), "{row}");
        assert!(row.ends_with("0.750,0.870,0.900,0.690"), "{row}");
    }

    #[test]
    fn json_roundtrip_preserves_fields() {
        let r = metrics(&ConfusionMatrix::new(27, 3, 9, 20)).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"prec_gz\""));
        let back: MetricsReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
