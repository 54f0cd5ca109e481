//! IoU, per-class average precision and mAP over externally produced
//! detections.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{BoundingBox, Dataset};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T> {
    pub image_id: String,
    pub class_id: u32,
    pub bbox: BoundingBox<T>,
    pub confidence: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult<T> {
    pub iou_threshold: T,
    /// Only classes with at least one ground-truth box appear here.
    pub per_class_ap: BTreeMap<u32, T>,
    pub truth_counts: BTreeMap<u32, usize>,
    pub map50: T,
}

/// How the precision/recall curve is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Area under the monotone precision envelope at every recall step.
    #[default]
    AllPoints,
    /// Mean of the envelope sampled at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

/// Intersection over union of two `[x0, y0, x1, y1]` boxes.
pub fn iou_xyxy<T: Real>(a: [T; 4], b: [T; 4]) -> T {
    let zero = T::zero();
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(zero);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(zero);
    let inter = iw * ih;
    if inter <= zero {
        return zero;
    }
    let area = |r: [T; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    inter / (area(a) + area(b) - inter)
}

/// IoU of two normalized boxes. Scaling both axes by the image size does
/// not change the ratio, so this equals the pixel-space IoU.
pub fn iou<T: Real>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> T {
    iou_xyxy(a.to_xyxy(), b.to_xyxy())
}

/// mAP at the given IoU threshold with all-points interpolation.
pub fn evaluate<T: Real>(preds: &[Detection<T>], truth: &Dataset, iou_threshold: T) -> Result<EvalResult<T>> {
    evaluate_with(preds, truth, iou_threshold, Interpolation::AllPoints)
}

pub fn evaluate_with<T: Real>(
    preds: &[Detection<T>],
    truth: &Dataset,
    iou_threshold: T,
    interpolation: Interpolation,
) -> Result<EvalResult<T>> {
    let (zero, one) = (T::zero(), T::one());
    if !(iou_threshold > zero && iou_threshold <= one) {
        return Err(Error::contract(format!(
            "IoU threshold must lie in (0, 1], got {iou_threshold}"
        )));
    }
    if let Some(d) = preds.iter().find(|d| !(d.confidence >= zero && d.confidence <= one)) {
        return Err(Error::contract(format!(
            "confidence {} of a detection in '{}' is outside [0, 1]",
            d.confidence, d.image_id
        )));
    }

    // (class, image) -> pixel-space truth boxes
    let mut gt: BTreeMap<(u32, &str), Vec<[T; 4]>> = BTreeMap::new();
    let mut truth_counts: BTreeMap<u32, usize> = BTreeMap::new();
    for rec in truth.records() {
        for b in &rec.boxes {
            gt.entry((b.class_id, rec.id.as_str()))
                .or_default()
                .push(b.cast::<T>().to_pixels(rec.width, rec.height));
            *truth_counts.entry(b.class_id).or_default() += 1;
        }
    }
    if truth_counts.is_empty() {
        return Err(Error::contract("ground truth contains no boxes"));
    }

    let mut per_class_ap = BTreeMap::new();
    for (&class, &n_truth) in &truth_counts {
        let flags = match_class(preds, truth, &gt, class, iou_threshold);
        per_class_ap.insert(class, average_precision(&flags, n_truth, interpolation));
    }
    let map50 = per_class_ap.values().fold(zero, |acc, &ap| acc + ap) / T::of_u64(per_class_ap.len() as u64);
    Ok(EvalResult {
        iou_threshold,
        per_class_ap,
        truth_counts,
        map50,
    })
}

/// True-positive flags for one class, in descending-confidence order.
///
/// Ties in confidence are ordered by image id, then input position. Each
/// prediction claims the unmatched same-image truth box with the highest
/// IoU, provided it reaches the threshold.
fn match_class<T: Real>(
    preds: &[Detection<T>],
    truth: &Dataset,
    gt: &BTreeMap<(u32, &str), Vec<[T; 4]>>,
    class: u32,
    iou_threshold: T,
) -> Vec<bool> {
    let mut order: Vec<usize> = (0..preds.len()).filter(|&i| preds[i].class_id == class).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .confidence
            .partial_cmp(&preds[a].confidence)
            .expect("confidences are finite")
            .then_with(|| preds[a].image_id.cmp(&preds[b].image_id))
            .then_with(|| a.cmp(&b))
    });

    let mut claimed: BTreeMap<&str, Vec<bool>> = BTreeMap::new();
    order
        .into_iter()
        .map(|i| {
            let p = &preds[i];
            let (Some(boxes), Some(rec)) = (gt.get(&(class, p.image_id.as_str())), truth.get(&p.image_id)) else {
                return false;
            };
            let pb = p.bbox.to_pixels(rec.width, rec.height);
            let used = claimed
                .entry(rec.id.as_str())
                .or_insert_with(|| vec![false; boxes.len()]);
            let best = boxes
                .iter()
                .enumerate()
                .filter(|(j, _)| !used[*j])
                .map(|(j, tb)| (j, iou_xyxy(pb, *tb)))
                .filter(|(_, v)| *v >= iou_threshold)
                .fold(None::<(usize, T)>, |best, cand| match best {
                    Some((_, bv)) if bv >= cand.1 => best,
                    _ => Some(cand),
                });
            match best {
                Some((j, _)) => {
                    used[j] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Average precision of a ranked list of TP/FP flags against `n_truth` boxes.
pub fn average_precision<T: Real>(flags: &[bool], n_truth: usize, interpolation: Interpolation) -> T {
    let zero = T::zero();
    if n_truth == 0 || flags.is_empty() {
        return zero;
    }
    let mut recall = Vec::with_capacity(flags.len());
    let mut precision = Vec::with_capacity(flags.len());
    let mut tp = 0u64;
    for (k, &hit) in flags.iter().enumerate() {
        tp += hit as u64;
        recall.push(T::of_u64(tp) / T::of_u64(n_truth as u64));
        precision.push(T::of_u64(tp) / T::of_u64(k as u64 + 1));
    }
    match interpolation {
        Interpolation::AllPoints => {
            let mut mrec = vec![zero];
            mrec.extend(&recall);
            mrec.push(T::one());
            let mut mpre = vec![zero];
            mpre.extend(&precision);
            mpre.push(zero);
            for i in (0..mpre.len() - 1).rev() {
                mpre[i] = mpre[i].max(mpre[i + 1]);
            }
            (0..mrec.len() - 1)
                .filter(|&i| mrec[i + 1] != mrec[i])
                .fold(zero, |acc, i| acc + (mrec[i + 1] - mrec[i]) * mpre[i + 1])
        }
        Interpolation::ElevenPoint => {
            let total = (0..=10u64).fold(zero, |acc, t| {
                let level = T::of_u64(t) / T::of_u64(10);
                let best = recall
                    .iter()
                    .zip(&precision)
                    .filter(|(r, _)| **r >= level)
                    .fold(zero, |m, (_, p)| m.max(*p));
                acc + best
            });
            total / T::of_u64(11)
        }
    }
}

#[derive(Debug, Deserialize)]
struct PredictionRow {
    image_id: String,
    class_id: u32,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    confidence: f64,
}

/// Reads `image_id,class_id,cx,cy,w,h,confidence` rows (normalized boxes).
pub fn read_predictions(path: &Path) -> Result<Vec<Detection<f64>>> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, row) in reader.deserialize::<PredictionRow>().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        let (bbox, _) =
            BoundingBox::clamped(row.class_id, row.cx, row.cy, row.w, row.h).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "box lies outside the image".into(),
            })?;
        out.push(Detection {
            image_id: row.image_id,
            class_id: row.class_id,
            bbox,
            confidence: row.confidence,
        });
    }
    Ok(out)
}

pub fn write_predictions(path: &Path, preds: &[Detection<f64>]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["image_id", "class_id", "cx", "cy", "w", "h", "confidence"])
        .map_err(csv_err)?;
    for d in preds {
        let b = &d.bbox;
        w.write_record([
            d.image_id.clone(),
            d.class_id.to_string(),
            format!("{:.6}", b.cx),
            format!("{:.6}", b.cy),
            format!("{:.6}", b.w),
            format!("{:.6}", b.h),
            format!("{:.6}", d.confidence),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
