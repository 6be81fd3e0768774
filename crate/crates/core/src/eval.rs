//! Temporal IoU and mAP over IoU thresholds.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{Annotations, Predictions};

/// Intersection over union of two closed intervals. Degenerate intervals
/// give 0.
pub fn temporal_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    if !(a.1 > a.0) || !(b.1 > b.0) {
        return 0.0;
    }
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    inter / union
}

/// 0.5, 0.55, ..., 0.95.
pub fn anet_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

/// 0.3, 0.4, ..., 0.7.
pub fn thumos_thresholds() -> Vec<f64> {
    (0..5).map(|i| 0.3 + 0.1 * i as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    /// AP per class, one entry per threshold.
    pub class_ap: BTreeMap<String, Vec<f64>>,
    /// `None` when there is no ground truth at all.
    pub map: Vec<Option<f64>>,
    pub average_map: Option<f64>,
    pub num_predictions: usize,
    pub num_gt: usize,
    pub empty: bool,
}

impl EvalReport {
    pub fn map_at(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|&t| (t - threshold).abs() < 1e-9)
            .and_then(|i| self.map[i])
    }

    /// Header plus one row: `name,<map per threshold>,average`.
    pub fn csv_row(&self, name: &str) -> String {
        let mut s = String::from(name);
        for m in &self.map {
            let _ = write!(s, ",{}", m.map_or("nan".to_string(), |v| format!("{v:.4}")));
        }
        let _ = write!(s, ",{}", self.average_map.map_or("nan".to_string(), |v| format!("{v:.4}")));
        s
    }

    pub fn csv_header(&self) -> String {
        let mut s = String::from("config");
        for t in &self.thresholds {
            let _ = write!(s, ",map@{t:.2}");
        }
        s.push_str(",average");
        s
    }
}

/// All-point interpolated AP from a ranked list of hit flags.
pub fn average_precision(hits: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(hits.len());
    let mut recall = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (i, &h) in hits.iter().enumerate() {
        tp += h as usize;
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / num_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

struct Ranked<'a> {
    video: &'a str,
    segment: (f64, f64),
    score: f64,
}

/// Greedy score-ordered matching per class, then AP per threshold.
pub fn compute_map(preds: &Predictions, anns: &Annotations, thresholds: &[f64]) -> EvalReport {
    let mut gt: BTreeMap<&str, BTreeMap<&str, Vec<(f64, f64)>>> = BTreeMap::new();
    let mut num_gt = 0;
    for (vid, a) in anns {
        for inst in &a.instances {
            gt.entry(inst.label.as_str())
                .or_default()
                .entry(vid.as_str())
                .or_default()
                .push((inst.start, inst.end));
            num_gt += 1;
        }
    }
    let mut by_class: BTreeMap<&str, Vec<Ranked>> = BTreeMap::new();
    let mut num_predictions = 0;
    for (vid, list) in preds {
        for p in list {
            num_predictions += 1;
            by_class.entry(p.label.as_str()).or_default().push(Ranked {
                video: vid,
                segment: (p.segment[0], p.segment[1]),
                score: p.score,
            });
        }
    }
    for list in by_class.values_mut() {
        // Stable: equal scores keep (video, input) order.
        list.sort_by(|a, b| b.score.total_cmp(&a.score));
    }

    let mut class_ap = BTreeMap::new();
    for (&class, videos) in &gt {
        let class_gt: usize = videos.values().map(Vec::len).sum();
        let ranked = by_class.get(class).map(Vec::as_slice).unwrap_or(&[]);
        let aps = thresholds
            .iter()
            .map(|&thr| {
                let mut used: BTreeMap<&str, Vec<bool>> =
                    videos.iter().map(|(v, g)| (*v, vec![false; g.len()])).collect();
                let hits: Vec<bool> = ranked
                    .iter()
                    .map(|p| {
                        let (Some(g), Some(u)) = (videos.get(p.video), used.get_mut(p.video)) else {
                            return false;
                        };
                        let mut best: Option<(usize, f64)> = None;
                        for (k, &seg) in g.iter().enumerate() {
                            if u[k] {
                                continue;
                            }
                            let iou = temporal_iou(p.segment, seg);
                            if iou >= thr && best.is_none_or(|(_, b)| iou > b) {
                                best = Some((k, iou));
                            }
                        }
                        best.map(|(k, _)| u[k] = true).is_some()
                    })
                    .collect();
                average_precision(&hits, class_gt)
            })
            .collect::<Vec<_>>();
        class_ap.insert(class.to_string(), aps);
    }

    let empty = class_ap.is_empty();
    let map: Vec<Option<f64>> = (0..thresholds.len())
        .map(|i| {
            (!empty).then(|| class_ap.values().map(|v| v[i]).sum::<f64>() / class_ap.len() as f64)
        })
        .collect();
    let average_map = if empty || map.is_empty() {
        None
    } else {
        Some(map.iter().flatten().sum::<f64>() / map.len() as f64)
    };
    EvalReport {
        thresholds: thresholds.to_vec(),
        class_ap,
        map,
        average_map,
        num_predictions,
        num_gt,
        empty,
    }
}
