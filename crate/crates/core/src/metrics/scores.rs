use crate::imagecore::{ensure_same_dims, Mask};
use crate::metrics::ProbTable;
use crate::{Error, Result};

/// Intersection over union of two binary masks. Two empty masks agree
/// perfectly and score 1.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    if !a.is_binary() || !b.is_binary() {
        return Err(Error::param("mask", "IoU needs binary masks"));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.alpha().iter().zip(b.alpha()) {
        let (p, q) = (p > 0.5, q > 0.5);
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose most probable class equals the row label.
pub fn top1_accuracy(p: &ProbTable) -> Result<f64> {
    let mut correct = 0usize;
    for row in p.rows() {
        let label = row.label.ok_or_else(|| Error::Parse {
            context: format!("row `{}`", row.id),
            message: "top-1 accuracy needs a label column".into(),
        })?;
        correct += (argmax(&row.probs) == label) as usize;
    }
    Ok(correct as f64 / p.len() as f64)
}

fn split_score(rows: &[&[f64]]) -> f64 {
    let c = rows[0].len();
    let n = rows.len() as f64;
    let mut marginal = vec![0.0; c];
    for r in rows {
        for (m, &v) in marginal.iter_mut().zip(r.iter()) {
            *m += v / n;
        }
    }
    let mean_kl: f64 = rows
        .iter()
        .map(|r| {
            r.iter()
                .zip(&marginal)
                .filter(|(&v, _)| v > 0.0)
                .map(|(&v, &m)| v * (v / m).ln())
                .sum::<f64>()
        })
        .sum::<f64>()
        / n;
    // Rounding can push a zero divergence slightly negative.
    mean_kl.max(0.0).exp()
}

/// `exp(mean KL(p(y|x) || p(y)))`. With `splits > 1` the rows are cut into
/// contiguous chunks, scored independently and averaged.
pub fn inception_score(p: &ProbTable, splits: usize) -> Result<f64> {
    if splits == 0 || splits > p.len() {
        return Err(Error::param(
            "inception splits",
            format!("{splits} splits for {} rows", p.len()),
        ));
    }
    let rows: Vec<&[f64]> = p.rows().iter().map(|r| r.probs.as_slice()).collect();
    let n = rows.len();
    let total: f64 = (0..splits)
        .map(|k| split_score(&rows[k * n / splits..(k + 1) * n / splits]))
        .sum();
    Ok(total / splits as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ProbRow;

    fn table(rows: Vec<(Option<usize>, Vec<f64>)>) -> ProbTable {
        ProbTable::new(
            rows.into_iter()
                .enumerate()
                .map(|(i, (label, probs))| ProbRow {
                    id: format!("r{i}"),
                    label,
                    probs,
                })
                .collect(),
        )
        .unwrap()
    }

    fn mask(w: usize, on: &[usize]) -> Mask {
        Mask::from_fn(w, w, |x, y| if on.contains(&(y * w + x)) { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = mask(4, &[0, 1, 2, 3]);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &mask(4, &[8, 9])).unwrap(), 0.0);
        let b = mask(4, &[2, 3, 4, 5]);
        assert!((iou(&a, &b).unwrap() - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(iou(&mask(4, &[]), &mask(4, &[])).unwrap(), 1.0);
        assert!(iou(&a, &mask(3, &[])).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let hit = table(vec![(Some(0), vec![1.0, 0.0]), (Some(1), vec![0.0, 1.0])]);
        assert_eq!(top1_accuracy(&hit).unwrap(), 1.0);
        let miss = table(vec![(Some(1), vec![1.0, 0.0]), (Some(0), vec![0.0, 1.0])]);
        assert_eq!(top1_accuracy(&miss).unwrap(), 0.0);
        let mixed = table(vec![
            (Some(0), vec![0.7, 0.3]),
            (Some(1), vec![0.2, 0.8]),
            (Some(1), vec![0.9, 0.1]),
        ]);
        assert!((top1_accuracy(&mixed).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let tie = table(vec![(Some(0), vec![0.5, 0.5])]);
        assert_eq!(top1_accuracy(&tie).unwrap(), 1.0);
        let unlabeled = table(vec![(None, vec![0.5, 0.5])]);
        assert!(top1_accuracy(&unlabeled).is_err());
    }

    #[test]
    fn inception_examples() {
        let uniform = table(vec![(None, vec![0.25; 4]); 5]);
        assert_eq!(inception_score(&uniform, 1).unwrap(), 1.0);
        let one_hot = table(
            (0..3)
                .map(|k| (None, (0..3).map(|j| (j == k) as u8 as f64).collect()))
                .collect(),
        );
        assert!((inception_score(&one_hot, 1).unwrap() - 3.0).abs() < 1e-12);
        let single = table(vec![(None, vec![0.2, 0.3, 0.5])]);
        assert!((inception_score(&single, 1).unwrap() - 1.0).abs() < 1e-15);
        assert!(inception_score(&single, 2).is_err());
    }
}
