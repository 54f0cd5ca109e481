//! Straightforward reference implementations used as test oracles.
//!
//! Written for obviousness, not speed, and sharing no code with the crate.
#![allow(dead_code)]

use std::collections::BTreeSet;

/// Mean of `pixels / max`, one pixel at a time.
pub fn brightness(rows: &[Vec<u16>], max: u16) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for row in rows {
        for &p in row {
            sum += p as f64;
            count += 1;
        }
    }
    sum / (max as f64 * count as f64)
}

/// Differing bit positions of two 64-bit words.
pub fn hamming_u64(a: u64, b: u64) -> u32 {
    let mut d = 0;
    for i in 0..64 {
        if (a >> i) & 1 != (b >> i) & 1 {
            d += 1;
        }
    }
    d
}

pub fn bits_of(v: u64) -> Vec<bool> {
    (0..64).map(|i| (v >> i) & 1 == 1).collect()
}

/// IoU of two `[x0, y0, x1, y1]` boxes.
pub fn iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let ix = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let iy = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = ix * iy;
    let union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Debug, Clone)]
pub struct Truth {
    pub image: usize,
    pub class: u32,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct Pred {
    pub image: usize,
    pub class: u32,
    pub bbox: [f64; 4],
    pub conf: f64,
}

/// Mean over classes with truth boxes of the all-points AP.
///
/// Builds the full precision/recall table and, for every row, takes the best
/// precision at that recall or higher.
pub fn mean_ap(truth: &[Truth], preds: &[Pred], threshold: f64) -> f64 {
    let classes: BTreeSet<u32> = truth.iter().map(|t| t.class).collect();
    let mut total = 0.0;
    for &class in &classes {
        let n_truth = truth.iter().filter(|t| t.class == class).count();
        let mut ranked: Vec<(usize, &Pred)> = preds.iter().enumerate().filter(|(_, p)| p.class == class).collect();
        ranked.sort_by(|(ia, a), (ib, b)| {
            b.conf
                .partial_cmp(&a.conf)
                .unwrap()
                .then(a.image.cmp(&b.image))
                .then(ia.cmp(ib))
        });

        let mut used = vec![false; truth.len()];
        let mut tp_flags = Vec::new();
        for (_, p) in &ranked {
            let mut best: Option<(usize, f64)> = None;
            for (j, t) in truth.iter().enumerate() {
                if used[j] || t.class != class || t.image != p.image {
                    continue;
                }
                let v = iou(p.bbox, t.bbox);
                if v >= threshold && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                used[j] = true;
            }
            tp_flags.push(best.is_some());
        }

        let mut table = Vec::new();
        let (mut tp, mut fp) = (0.0, 0.0);
        for &hit in &tp_flags {
            if hit {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            table.push((tp / n_truth as f64, tp / (tp + fp)));
        }
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for k in 0..table.len() {
            let (recall, _) = table[k];
            let best_precision = table[k..].iter().map(|&(_, p)| p).fold(0.0, f64::max);
            ap += (recall - prev_recall) * best_precision;
            prev_recall = recall;
        }
        total += ap;
    }
    total / classes.len() as f64
}
