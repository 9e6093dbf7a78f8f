//! Precision, recall and F1 from TP/FP/FN counts, IoU box matching, and
//! stratified reports. No true-negative based metric is computed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SvannError};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Counts { tp, fp, fn_ }
    }
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_ }
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), |a, b| a + b)
    }
}

/// A ratio that may be undefined (zero denominator); undefined values read as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub defined: bool,
}

impl Score {
    fn ratio(num: f64, den: f64) -> Score {
        if den > 0.0 {
            Score { value: num / den, defined: true }
        } else {
            Score { value: 0.0, defined: false }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: Score,
    pub recall: Score,
    pub f1: Score,
}

/// Harmonic mean of precision and recall.
pub fn f1_from(precision: f64, recall: f64) -> Score {
    Score::ratio(2.0 * precision * recall, precision + recall)
}

pub fn prf1(c: Counts) -> Prf1 {
    let precision = Score::ratio(c.tp as f64, (c.tp + c.fp) as f64);
    let recall = Score::ratio(c.tp as f64, (c.tp + c.fn_) as f64);
    let f1 =
        if precision.defined && recall.defined { f1_from(precision.value, recall.value) } else { Score { value: 0.0, defined: false } };
    Prf1 { precision, recall, f1 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub counts: Counts,
    pub precision: Score,
    pub recall: Score,
    pub f1: Score,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub strata: BTreeMap<String, EvalReport>,
}

impl EvalReport {
    pub fn from_counts(counts: Counts) -> Self {
        let Prf1 { precision, recall, f1 } = prf1(counts);
        EvalReport { counts, precision, recall, f1, strata: BTreeMap::new() }
    }

    /// Pooled report whose counts are the sums of the per-stratum counts.
    pub fn stratified(strata: BTreeMap<String, Counts>) -> Self {
        let total: Counts = strata.values().copied().sum();
        let mut report = EvalReport::from_counts(total);
        report.strata = strata.into_iter().map(|(k, c)| (k, EvalReport::from_counts(c))).collect();
        report
    }

    /// `stratum,tp,fp,fn,precision,recall,f1` rows, pooled (`all`) first.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stratum,tp,fp,fn,precision,recall,f1\n");
        let row = |name: &str, r: &EvalReport| {
            let c = r.counts;
            format!("{name},{},{},{},{},{},{}\n", c.tp, c.fp, c.fn_, r.precision.value, r.recall.value, r.f1.value)
        };
        out.push_str(&row("all", self));
        for (name, r) in &self.strata {
            out.push_str(&row(name, r));
        }
        out
    }
}

/// `(x, y)` is the top-left corner; `w`, `h` are positive extents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = BoundingBox { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite());
        if !finite || self.w <= 0.0 || self.h <= 0.0 {
            return Err(SvannError::InvalidInput(format!("invalid bounding box {self:?}")));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return Ok(0.0);
    }
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub confidence: f64,
}

/// Greedy one-to-one matching: predictions in descending confidence each take
/// the unmatched truth box of highest IoU, provided it reaches `iou_threshold`.
pub fn match_detections(preds: &[Detection], truth: &[BoundingBox], iou_threshold: f64) -> Result<Counts> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(SvannError::InvalidArgument(format!("IoU threshold {iou_threshold} must lie in (0, 1]")));
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence).then(a.cmp(&b)));
    let mut taken = vec![false; truth.len()];
    let mut tp = 0u64;
    for i in order {
        let mut best: Option<(usize, f64)> = None;
        for (j, t) in truth.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let v = iou(&preds[i].bbox, t)?;
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        if let Some((j, _)) = best {
            taken[j] = true;
            tp += 1;
        }
    }
    Ok(Counts { tp, fp: preds.len() as u64 - tp, fn_: truth.len() as u64 - tp })
}

/// One-vs-rest counts for `positive`.
pub fn classify_counts(pred: &[usize], truth: &[usize], positive: usize) -> Result<Counts> {
    if pred.len() != truth.len() {
        return Err(SvannError::InvalidInput(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    let mut c = Counts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == positive, t == positive) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

/// Per-class one-vs-rest reports and their unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub per_class: Vec<EvalReport>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// Macro-averaged report over classes `0..class_count`; undefined scores count as 0.
pub fn classification_report(pred: &[usize], truth: &[usize], class_count: usize) -> Result<ClassificationReport> {
    if class_count == 0 {
        return Err(SvannError::InvalidArgument("class count must be positive".into()));
    }
    let per_class = (0..class_count).map(|c| classify_counts(pred, truth, c).map(EvalReport::from_counts)).collect::<Result<Vec<_>>>()?;
    let n = class_count as f64;
    let mean = |f: fn(&EvalReport) -> f64| per_class.iter().map(f).sum::<f64>() / n;
    Ok(ClassificationReport {
        macro_precision: mean(|r| r.precision.value),
        macro_recall: mean(|r| r.recall.value),
        macro_f1: mean(|r| r.f1.value),
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn det(b: BoundingBox, confidence: f64) -> Detection {
        Detection { bbox: b, confidence }
    }

    #[test]
    fn degenerate_counts_are_flagged() {
        let r = prf1(Counts::new(0, 0, 0));
        assert!(!r.precision.defined && !r.recall.defined && !r.f1.defined);
        assert_eq!((r.precision.value, r.recall.value, r.f1.value), (0.0, 0.0, 0.0));
        let r = prf1(Counts::new(0, 3, 2));
        assert!(r.precision.defined && r.recall.defined && !r.f1.defined);
    }

    #[test]
    fn prf1_simple() {
        let r = prf1(Counts::new(1, 1, 1));
        assert_eq!((r.precision.value, r.recall.value, r.f1.value), (0.5, 0.5, 0.5));
        let r = prf1(Counts::new(3, 1, 2));
        assert_eq!(r.precision.value, 0.75);
        assert_eq!(r.recall.value, 0.6);
        assert!((r.f1.value - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-15);
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &bx(5.0, 5.0, 1.0, 1.0)).unwrap(), 0.0);
        assert_eq!(iou(&a, &bx(2.0, 0.0, 1.0, 1.0)).unwrap(), 0.0);
        assert!((iou(&a, &bx(1.0, 0.0, 2.0, 2.0)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        let bad = BoundingBox { x: 0.0, y: 0.0, w: -1.0, h: 1.0 };
        assert!(matches!(iou(&a, &bad), Err(SvannError::InvalidInput(_))));
    }

    #[test]
    fn matching_examples() {
        let truth = vec![bx(0.0, 0.0, 2.0, 2.0), bx(10.0, 10.0, 3.0, 3.0)];
        let perfect: Vec<Detection> = truth.iter().map(|b| det(*b, 0.9)).collect();
        assert_eq!(match_detections(&perfect, &truth, 0.6).unwrap(), Counts::new(2, 0, 0));
        assert_eq!(match_detections(&[], &truth, 0.6).unwrap(), Counts::new(0, 0, 2));
        let one = vec![bx(0.0, 0.0, 2.0, 2.0)];
        let dup = vec![det(bx(0.0, 0.0, 2.0, 2.0), 0.8), det(bx(0.1, 0.0, 2.0, 2.0), 0.9)];
        assert_eq!(match_detections(&dup, &one, 0.6).unwrap(), Counts::new(1, 1, 0));
        assert!(match_detections(&dup, &one, 0.0).is_err());
        assert!(match_detections(&dup, &one, 1.5).is_err());
    }

    #[test]
    fn greedy_picks_highest_iou_truth() {
        let truth = vec![bx(0.0, 0.0, 2.0, 2.0), bx(0.2, 0.0, 2.0, 2.0)];
        // the confident prediction overlaps truth 1 better, leaving truth 0 for the other
        let preds = vec![det(bx(0.25, 0.0, 2.0, 2.0), 0.9), det(bx(0.0, 0.0, 2.0, 2.0), 0.5)];
        assert_eq!(match_detections(&preds, &truth, 0.6).unwrap(), Counts::new(2, 0, 0));
    }

    #[test]
    fn classification_counts() {
        let c = classify_counts(&[1, 1, 0, 0], &[1, 0, 0, 1], 1).unwrap();
        assert_eq!(c, Counts::new(1, 1, 1));
        let r = prf1(c);
        assert_eq!((r.precision.value, r.recall.value, r.f1.value), (0.5, 0.5, 0.5));
        let same = classification_report(&[0, 1, 1, 0], &[0, 1, 1, 0], 2).unwrap();
        assert_eq!(same.macro_f1, 1.0);
        for r in &same.per_class {
            assert_eq!((r.counts.fp, r.counts.fn_), (0, 0));
        }
        let wrong = classify_counts(&[1, 0, 1], &[0, 1, 0], 1).unwrap();
        assert_eq!(wrong.tp, 0);
        let r = prf1(wrong);
        assert_eq!((r.precision.value, r.recall.value), (0.0, 0.0));
        assert!(!r.f1.defined);
        assert!(classify_counts(&[1], &[1, 0], 1).is_err());
    }

    #[test]
    fn strata_sum_to_pooled() {
        let strata: BTreeMap<String, Counts> = [
            ("axis_parallel".to_string(), Counts::new(4, 1, 2)),
            ("occluded".to_string(), Counts::new(1, 2, 5)),
            ("raised".to_string(), Counts::new(0, 0, 1)),
        ]
        .into_iter()
        .collect();
        let r = EvalReport::stratified(strata.clone());
        assert_eq!(r.counts, Counts::new(5, 3, 8));
        let summed: Counts = r.strata.values().map(|s| s.counts).sum();
        assert_eq!(summed, r.counts);
        assert_eq!(r.strata.len(), 3);
    }
}
