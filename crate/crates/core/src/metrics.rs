//! Evaluation metrics: confusion matrix, overall accuracy, Cohen's kappa.

use crate::error::{Error, Result};
use ndarray::Array2;

/// Confusion counts with rows = true class, columns = predicted class.
pub fn confusion_matrix(truth: &[u8], pred: &[u8], classes: usize) -> Result<Array2<u64>> {
    if truth.len() != pred.len() {
        return Err(Error::argument(format!(
            "{} truth labels vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    let mut conf = Array2::zeros((classes, classes));
    for (&t, &p) in truth.iter().zip(pred) {
        if usize::from(t) >= classes || usize::from(p) >= classes {
            return Err(Error::argument(format!(
                "label pair ({t}, {p}) outside 0..{classes}"
            )));
        }
        conf[[usize::from(t), usize::from(p)]] += 1;
    }
    Ok(conf)
}

/// Fraction of correct predictions: trace over total.
pub fn overall_accuracy(conf: &Array2<u64>) -> f64 {
    let total: u64 = conf.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let trace: u64 = conf.diag().iter().sum();
    trace as f64 / total as f64
}

/// Cohen's kappa `(p_o - p_e) / (1 - p_e)`, with expected agreement from the
/// marginal products. Returns 0 by convention when `p_e = 1`.
pub fn kappa(conf: &Array2<u64>) -> Result<f64> {
    if conf.is_empty() {
        return Err(Error::argument("empty confusion matrix"));
    }
    let total: u64 = conf.iter().sum();
    if total == 0 {
        return Err(Error::argument("confusion matrix has zero total"));
    }
    let total = total as f64;
    let k = conf.nrows();
    let p_o = conf.diag().iter().sum::<u64>() as f64 / total;
    let mut p_e = 0.0;
    for i in 0..k {
        let row: u64 = conf.row(i).iter().sum();
        let col: u64 = conf.column(i).iter().sum();
        p_e += row as f64 * col as f64;
    }
    p_e /= total * total;
    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(0.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Per-class recall (diagonal over row sum); classes with no test samples
/// report 0.
pub fn per_class_accuracy(conf: &Array2<u64>) -> Vec<f64> {
    (0..conf.nrows())
        .map(|i| {
            let row: u64 = conf.row(i).iter().sum();
            if row == 0 {
                0.0
            } else {
                conf[[i, i]] as f64 / row as f64
            }
        })
        .collect()
}

/// Metrics bundle for one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    pub kappa: f64,
    pub confusion: Array2<u64>,
    pub per_class_accuracy: Vec<f64>,
}

impl EvalReport {
    pub fn from_predictions(truth: &[u8], pred: &[u8], classes: usize) -> Result<EvalReport> {
        let confusion = confusion_matrix(truth, pred, classes)?;
        Ok(EvalReport {
            overall_accuracy: overall_accuracy(&confusion),
            kappa: kappa(&confusion)?,
            per_class_accuracy: per_class_accuracy(&confusion),
            confusion,
        })
    }

    /// Structured text form: metrics then one confusion row per class.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("overall_accuracy={}\n", self.overall_accuracy));
        out.push_str(&format!("kappa={}\n", self.kappa));
        let pca: Vec<String> = self.per_class_accuracy.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("per_class_accuracy={}\n", pca.join(",")));
        out.push_str("confusion_rows_true_by_predicted:\n");
        let k = self.confusion.nrows();
        for i in 0..k {
            let row: Vec<String> = self.confusion.row(i).iter().map(|v| v.to_string()).collect();
            let label = if k == crate::data::CLASS_COUNT {
                crate::data::paper_class_id(i as u8).to_string()
            } else {
                i.to_string()
            };
            out.push_str(&format!("{label}:{}\n", row.join(",")));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Definition-level kappa: recompute p_o and p_e from scratch.
    fn kappa_oracle(conf: &Array2<u64>) -> f64 {
        let n: u64 = conf.iter().sum();
        let n = n as f64;
        let mut p_o = 0.0;
        for i in 0..conf.nrows() {
            p_o += conf[[i, i]] as f64;
        }
        p_o /= n;
        let mut p_e = 0.0;
        for i in 0..conf.nrows() {
            let mut row = 0.0;
            let mut col = 0.0;
            for j in 0..conf.ncols() {
                row += conf[[i, j]] as f64;
                col += conf[[j, i]] as f64;
            }
            p_e += (row / n) * (col / n);
        }
        if (1.0 - p_e).abs() < 1e-15 {
            0.0
        } else {
            (p_o - p_e) / (1.0 - p_e)
        }
    }

    #[test]
    fn perfect_agreement_scores_one() {
        let conf = array![[4u64, 0, 0], [0, 7, 0], [0, 0, 2]];
        assert_eq!(kappa(&conf).unwrap(), 1.0);
        assert_eq!(overall_accuracy(&conf), 1.0);
    }

    #[test]
    fn uniform_confusion_scores_zero() {
        let conf = Array2::from_elem((4, 4), 3u64);
        assert!(kappa(&conf).unwrap().abs() < 1e-12);
        assert!((overall_accuracy(&conf) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn worked_two_class_case() {
        let conf = array![[5u64, 0], [2, 3]];
        assert!((overall_accuracy(&conf) - 0.8).abs() < 1e-12);
        assert!((kappa(&conf).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn kappa_matches_the_definition_oracle_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let k = rng.gen_range(2..=5);
            let conf = Array2::from_shape_simple_fn((k, k), || rng.gen_range(0u64..=20));
            if conf.iter().sum::<u64>() == 0 {
                continue;
            }
            let got = kappa(&conf).unwrap();
            let want = kappa_oracle(&conf);
            assert!((got - want).abs() < 1e-12, "{conf:?}: {got} vs {want}");
        }
    }

    #[test]
    fn degenerate_matrices_are_handled() {
        let empty: Array2<u64> = Array2::zeros((0, 0));
        assert!(kappa(&empty).is_err());
        let zeros: Array2<u64> = Array2::zeros((3, 3));
        assert!(kappa(&zeros).is_err());
        // Single populated cell: p_e = 1, kappa 0 by convention.
        let mut conf = Array2::zeros((2, 2));
        conf[[0, 0]] = 5;
        assert_eq!(kappa(&conf).unwrap(), 0.0);
    }

    #[test]
    fn constant_predictor_on_balanced_classes() {
        // Everything predicted as class 0 over k balanced classes.
        let k = 4;
        let truth: Vec<u8> = (0..k).flat_map(|c| std::iter::repeat(c as u8).take(5)).collect();
        let pred = vec![0u8; truth.len()];
        let report = EvalReport::from_predictions(&truth, &pred, k).unwrap();
        assert!((report.overall_accuracy - 1.0 / k as f64).abs() < 1e-12);
        assert!(report.kappa.abs() < 1e-12);
    }

    #[test]
    fn report_row_sums_match_class_counts() {
        let truth = [0u8, 0, 1, 2, 2, 2];
        let pred = [0u8, 1, 1, 2, 0, 2];
        let report = EvalReport::from_predictions(&truth, &pred, 3).unwrap();
        let row_sums: Vec<u64> = (0..3).map(|i| report.confusion.row(i).iter().sum()).collect();
        assert_eq!(row_sums, vec![2, 1, 3]);
        assert_eq!(report.per_class_accuracy, vec![0.5, 1.0, 2.0 / 3.0]);
        let text = report.to_text();
        assert!(text.contains("overall_accuracy="));
        assert!(text.lines().count() >= 7);
    }
}
