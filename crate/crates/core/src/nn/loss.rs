//! Smoothed cross-entropy and prediction entropy with their logit gradients.

use nalgebra::DMatrix;

use super::NnError;

/// Stable softmax of one logit row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Target `(1 - smoothing)` on the labelled mass and `smoothing / (C - 1)` spread over the rest.
///
/// For a one-hot `label` this is the usual smoothed target; soft labels are
/// smoothed entrywise with the same rule.
pub fn smooth_target(label: &[f64], smoothing: f64) -> Vec<f64> {
    let c = label.len() as f64;
    label
        .iter()
        .map(|&t| (1.0 - smoothing) * t + smoothing * (1.0 - t) / (c - 1.0))
        .collect()
}

fn check_smoothing(smoothing: f64) -> Result<(), NnError> {
    if (0.0..1.0).contains(&smoothing) {
        Ok(())
    } else {
        Err(NnError::Smoothing(smoothing))
    }
}

/// Cross-entropy of one logit row against the smoothed one-hot target of `class`.
pub fn loss_smoothed_ce(logits: &[f64], class: usize, smoothing: f64) -> Result<f64, NnError> {
    check_smoothing(smoothing)?;
    if class >= logits.len() {
        return Err(NnError::ClassOutOfRange {
            class,
            classes: logits.len(),
        });
    }
    let mut onehot = vec![0.0; logits.len()];
    onehot[class] = 1.0;
    let target = smooth_target(&onehot, smoothing);
    let lp = log_softmax(logits);
    Ok(-target.iter().zip(&lp).map(|(t, l)| t * l).sum::<f64>())
}

/// Mean smoothed cross-entropy over a batch of soft labels, with its gradient.
pub fn batch_smoothed_ce(
    logits: &DMatrix<f64>,
    labels: &[&[f64]],
    smoothing: f64,
) -> Result<(f64, DMatrix<f64>), NnError> {
    check_smoothing(smoothing)?;
    let (b, c) = logits.shape();
    if labels.len() != b || labels.iter().any(|l| l.len() != c) {
        return Err(NnError::Shape("labels do not match logits".into()));
    }
    let mut grad = DMatrix::zeros(b, c);
    let mut total = 0.0;
    for (s, label) in labels.iter().enumerate() {
        let row: Vec<f64> = logits.row(s).iter().copied().collect();
        let target = smooth_target(label, smoothing);
        let lp = log_softmax(&row);
        total -= target.iter().zip(&lp).map(|(t, l)| t * l).sum::<f64>();
        // target sums to one, so d/dz = softmax - target
        for k in 0..c {
            grad[(s, k)] = (lp[k].exp() - target[k]) / b as f64;
        }
    }
    Ok((total / b as f64, grad))
}

/// Mean softmax entropy of the batch and its gradient.
pub fn batch_entropy(logits: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let (b, c) = logits.shape();
    let mut grad = DMatrix::zeros(b, c);
    let mut total = 0.0;
    for s in 0..b {
        let row: Vec<f64> = logits.row(s).iter().copied().collect();
        let lp = log_softmax(&row);
        let h: f64 = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
        total += h;
        for k in 0..c {
            let pk = lp[k].exp();
            grad[(s, k)] = -pk * (lp[k] + h) / b as f64;
        }
    }
    (total / b as f64, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_c() {
        for class in [0, 17, 39] {
            let l = loss_smoothed_ce(&[0.25; 40], class, 0.2).unwrap();
            assert!((l - 40f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_smoothing_is_plain_ce() {
        let z = [1.0, -2.0, 0.5];
        let p = softmax(&z);
        assert!((loss_smoothed_ce(&z, 2, 0.0).unwrap() + p[2].ln()).abs() < 1e-14);
    }

    #[test]
    fn gibbs_bound() {
        let t = smooth_target(&[0.0, 1.0, 0.0, 0.0], 0.2);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((t[0] - 0.2 / 3.0).abs() < 1e-15);
        let h: f64 = -t.iter().map(|v| v * v.ln()).sum::<f64>();
        for z in [[3.0, 0.0, -1.0, 2.0], [0.0, 9.0, 0.0, 0.0], [0.0; 4]] {
            assert!(loss_smoothed_ce(&z, 1, 0.2).unwrap() >= h - 1e-12);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(loss_smoothed_ce(&[0.0; 3], 3, 0.1), Err(NnError::ClassOutOfRange { .. })));
        assert!(loss_smoothed_ce(&[0.0; 3], 0, 1.0).is_err());
    }

    #[test]
    fn batch_gradients_match_differences() {
        let logits = DMatrix::from_row_slice(2, 3, &[0.3, -1.2, 2.0, 0.0, 0.5, -0.5]);
        let labels: Vec<Vec<f64>> = vec![vec![0.0, 1.0, 0.0], vec![0.5, 0.0, 0.5]];
        let refs: Vec<&[f64]> = labels.iter().map(|l| l.as_slice()).collect();
        let (_, g) = batch_smoothed_ce(&logits, &refs, 0.2).unwrap();
        let (_, ge) = batch_entropy(&logits);
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..3 {
                let mut up = logits.clone();
                let mut dn = logits.clone();
                up[(i, j)] += h;
                dn[(i, j)] -= h;
                let fd = (batch_smoothed_ce(&up, &refs, 0.2).unwrap().0 - batch_smoothed_ce(&dn, &refs, 0.2).unwrap().0) / (2.0 * h);
                assert!((fd - g[(i, j)]).abs() < 1e-8);
                let fe = (batch_entropy(&up).0 - batch_entropy(&dn).0) / (2.0 * h);
                assert!((fe - ge[(i, j)]).abs() < 1e-8);
            }
        }
    }
}
