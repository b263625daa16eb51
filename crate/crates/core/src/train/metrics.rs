use crate::data::{Dataset, Labels};
use crate::error::{Error, Result};
use crate::model::{self, ModelParams, Task};

/// Fraction of predictions equal to the label.
pub fn accuracy(predicted: &[usize], labels: &[usize]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != labels.len() {
        return Err(Error::invalid("accuracy: need equally many, and at least one, predictions and labels"));
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// IoU `TP/(TP+FP+FN)` of one sample, averaged over the classes present in
/// the ground truth.
pub fn sample_iou(predicted: &[usize], truth: &[usize], num_classes: usize) -> Result<f64> {
    if truth.is_empty() || predicted.len() != truth.len() {
        return Err(Error::invalid("sample_iou: prediction and ground truth differ in length"));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p >= num_classes || t >= num_classes {
            return Err(Error::invalid(format!("sample_iou: label out of range for {num_classes} classes")));
        }
        if p == t {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let present: Vec<usize> = (0..num_classes).filter(|&c| tp[c] + fn_[c] > 0).collect();
    let sum: f64 = present
        .iter()
        .map(|&c| tp[c] as f64 / (tp[c] + fp[c] + fn_[c]) as f64)
        .sum();
    Ok(sum / present.len() as f64)
}

/// Per-sample IoU averaged over samples.
pub fn mean_iou(predicted: &[Vec<usize>], truth: &[Vec<usize>], num_classes: usize) -> Result<f64> {
    if truth.is_empty() || predicted.len() != truth.len() {
        return Err(Error::invalid("mean_iou: need equally many, and at least one, samples"));
    }
    let mut total = 0.0;
    for (p, t) in predicted.iter().zip(truth) {
        total += sample_iou(p, t, num_classes)?;
    }
    Ok(total / truth.len() as f64)
}

/// Accuracy (classification) or mean IoU (segmentation) on a labelled dataset.
pub fn evaluate(params: &ModelParams, dataset: &Dataset, batch: usize) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::invalid("evaluate: empty dataset"));
    }
    if params.arch().task != dataset.task || params.arch().num_classes != dataset.num_classes {
        return Err(Error::invalid("evaluate: model and dataset disagree on task or class count"));
    }
    match (&dataset.labels, params.arch().task) {
        (Labels::Classes(y), Task::Classification) => {
            accuracy(&model::predict_classes(params, &dataset.clouds, batch)?, y)
        }
        (Labels::Parts(y), Task::Segmentation) => {
            mean_iou(&model::predict_parts(params, &dataset.clouds, batch)?, y, dataset.num_classes)
        }
        _ => Err(Error::invalid("evaluate: labels do not match the task")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn perfect_predictions() {
        assert_eq!(accuracy(&[1, 2, 0], &[1, 2, 0]).unwrap(), 1.0);
        let y = vec![vec![0, 1, 2, 2], vec![1, 1, 0, 0]];
        assert_eq!(mean_iou(&y, &y, 3).unwrap(), 1.0);
    }

    #[test]
    fn half_covered_class() {
        // class 1 has four points, two predicted correctly, no false positives
        let truth = [1, 1, 1, 1];
        let pred = [1, 1, 0, 0];
        let iou = sample_iou(&pred, &truth, 2).unwrap();
        assert_eq!(iou, 0.5);
    }

    #[test]
    fn absent_classes_are_not_averaged() {
        // class 2 never appears in the truth: only classes 0 and 1 count
        let truth = [0, 0, 1, 1];
        let pred = [0, 0, 1, 2];
        let iou = sample_iou(&pred, &truth, 3).unwrap();
        assert!((iou - (1.0 + 0.5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn random_ten_class_predictions() {
        let mut r = crate::rng::seeded(17);
        let labels: Vec<usize> = (0..1000).map(|i| i % 10).collect();
        let pred: Vec<usize> = (0..1000).map(|_| r.random_range(0..10)).collect();
        let acc = accuracy(&pred, &labels).unwrap();
        assert!((acc - 0.1).abs() < 0.03, "{acc}");
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(accuracy(&[], &[]).is_err());
        assert!(mean_iou(&[], &[], 3).is_err());
    }
}
