//! From voting and boundary scores to ranked, class-labelled proposals.

use serde::{Deserialize, Serialize};

use crate::data::{index_to_sec, ClassScore, Prediction};
use crate::error::Result;
use crate::eval::temporal_iou;
use crate::tem::BoundaryScores;
use crate::vem::{min_max, VotingScores};

/// Which evidence generates and scores proposals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Voting candidates, scored with votes plus weighted boundary scores.
    Full,
    /// Voting candidates, scored with votes only.
    VotingOnly,
    /// Candidates and scores from the naive boundary scores alone.
    BoundaryOnly,
}

pub const UNKNOWN_LABEL: &str = "unknown";

/// Local maxima of `v` that reach `xi`. A flat run counts once, at its
/// leftmost index, when both neighbours of the run are lower; the sequence
/// ends only need the inner neighbour to be lower.
pub fn extract_candidates(v: &[f64], xi: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut a = 0;
    while a < v.len() {
        let mut b = a;
        while b + 1 < v.len() && v[b + 1] == v[a] {
            b += 1;
        }
        let left_ok = a == 0 || v[a - 1] < v[a];
        let right_ok = b + 1 == v.len() || v[b + 1] < v[a];
        if left_ok && right_ok && v[a] >= xi {
            out.push(a);
        }
        a = b + 1;
    }
    out
}

/// Every `(s, e)` with `s < e` and `e - s <= tau`.
pub fn pair_proposals(starts: &[usize], ends: &[usize], tau: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for &s in starts {
        for &e in ends {
            if s < e && e - s <= tau {
                out.push((s, e));
            }
        }
    }
    out
}

/// `(vs + alpha*bs) * (ve + alpha*be) * p`.
pub fn fuse_confidence(vs: f64, ve: f64, bs: f64, be: f64, p: f64, alpha: f64) -> f64 {
    (vs + alpha * bs) * (ve + alpha * be) * p
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredProposal {
    pub start: usize,
    pub end: usize,
    pub score: f64,
    pub v_start: f64,
    pub v_end: f64,
    pub b_start: f64,
    pub b_end: f64,
    pub p: f64,
}

impl ScoredProposal {
    pub fn interval(&self) -> (f64, f64) {
        (self.start as f64, self.end as f64)
    }
}

/// Keeps the best-scoring copy of each `(start, end)`, in first-seen order.
pub fn dedup_max(props: Vec<ScoredProposal>) -> Vec<ScoredProposal> {
    let mut seen = std::collections::HashMap::new();
    let mut out: Vec<ScoredProposal> = Vec::with_capacity(props.len());
    for p in props {
        match seen.get(&(p.start, p.end)) {
            Some(&i) => {
                let kept: &mut ScoredProposal = &mut out[i];
                if p.score > kept.score {
                    *kept = p;
                }
            }
            None => {
                seen.insert((p.start, p.end), out.len());
                out.push(p);
            }
        }
    }
    out
}

/// Gaussian Soft-NMS. Repeatedly takes the highest remaining score (lowest
/// index on ties) and multiplies every other remaining score by
/// `exp(-iou^2 / sigma)`. Stops after `top_k` picks.
pub fn soft_nms(props: &[ScoredProposal], sigma: f64, top_k: usize) -> Vec<ScoredProposal> {
    let mut rest = props.to_vec();
    let mut out = Vec::with_capacity(top_k.min(rest.len()));
    while !rest.is_empty() && out.len() < top_k {
        let mut best = 0;
        for (i, p) in rest.iter().enumerate().skip(1) {
            if p.score > rest[best].score {
                best = i;
            }
        }
        let sel = rest.remove(best);
        let a = sel.interval();
        for p in &mut rest {
            let iou = temporal_iou(a, p.interval());
            p.score *= (-(iou * iou) / sigma).exp();
        }
        out.push(sel);
    }
    out
}

/// One prediction per proposal and top class, score times class score,
/// times converted to seconds. Sorted by score, best first.
pub fn assign_classes(
    props: &[ScoredProposal],
    classes: &[ClassScore],
    top_c: usize,
    ratio: f64,
) -> Vec<Prediction> {
    let segment = |p: &ScoredProposal| {
        [index_to_sec(p.start as f64, ratio), index_to_sec(p.end as f64, ratio)]
    };
    let mut out: Vec<Prediction> = if classes.is_empty() {
        props
            .iter()
            .map(|p| Prediction {
                segment: segment(p),
                score: p.score,
                label: UNKNOWN_LABEL.into(),
            })
            .collect()
    } else {
        props
            .iter()
            .flat_map(|p| {
                classes.iter().take(top_c).map(move |c| Prediction {
                    segment: segment(p),
                    score: p.score * c.score,
                    label: c.label.clone(),
                })
            })
            .collect()
    };
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProposalParams {
    pub xi: f64,
    pub tau: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub top_k: usize,
    pub mode: ScoreMode,
    pub use_boundary: bool,
}

/// Candidate extraction, pairing, confidence fusion and Soft-NMS for one
/// video. `pem` scores a list of `(s, e)` frame pairs.
pub fn generate_proposals(
    votes: &VotingScores,
    bounds: &BoundaryScores,
    pem: impl Fn(&[(usize, usize)]) -> Result<Vec<f64>>,
    params: &ProposalParams,
) -> Result<Vec<ScoredProposal>> {
    let (cs, ce) = match params.mode {
        ScoreMode::BoundaryOnly => (min_max(&bounds.start), min_max(&bounds.end)),
        _ => (min_max(&votes.start), min_max(&votes.end)),
    };
    let pairs = pair_proposals(
        &extract_candidates(&cs, params.xi),
        &extract_candidates(&ce, params.xi),
        params.tau,
    );
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let ps = pem(&pairs)?;
    let alpha = match params.mode {
        ScoreMode::Full if params.use_boundary => params.alpha,
        _ => 0.0,
    };
    let props: Vec<ScoredProposal> = pairs
        .iter()
        .zip(ps)
        .map(|(&(s, e), p)| {
            let (bs, be) = (bounds.start[s], bounds.end[e]);
            let (vs, ve) = (cs[s], ce[e]);
            let score = match params.mode {
                ScoreMode::BoundaryOnly => bs * be * p,
                _ => fuse_confidence(vs, ve, bs, be, p, alpha),
            };
            ScoredProposal {
                start: s,
                end: e,
                score,
                v_start: vs,
                v_end: ve,
                b_start: bs,
                b_end: be,
                p,
            }
        })
        .collect();
    Ok(soft_nms(&dedup_max(props), params.sigma, params.top_k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prop(s: usize, e: usize, score: f64) -> ScoredProposal {
        ScoredProposal {
            start: s,
            end: e,
            score,
            v_start: 0.0,
            v_end: 0.0,
            b_start: 0.0,
            b_end: 0.0,
            p: 1.0,
        }
    }

    #[test]
    fn candidate_examples() {
        assert_eq!(extract_candidates(&[0.0, 0.2, 0.5, 1.0], 0.3), vec![3]);
        assert_eq!(extract_candidates(&[0.0, 1.0, 0.0, 1.0, 0.0], 0.3), vec![1, 3]);
        assert_eq!(extract_candidates(&[0.0, 0.8, 0.8, 0.8, 0.1], 0.3), vec![1]);
        // A shoulder is not a maximum.
        assert_eq!(extract_candidates(&[0.0, 0.5, 0.5, 1.0, 0.0], 0.3), vec![3]);
        assert_eq!(extract_candidates(&[1.0, 0.0, 0.2], 0.3), vec![0]);
    }

    #[test]
    fn pairing_examples() {
        assert_eq!(pair_proposals(&[10], &[50, 200], 100), vec![(10, 50)]);
        assert!(pair_proposals(&[60], &[10, 50], 100).is_empty());
    }

    #[test]
    fn fusion_arithmetic() {
        assert!((fuse_confidence(0.5, 0.5, 0.5, 0.5, 1.0, 0.6) - 0.64).abs() < 1e-12);
        assert_eq!(fuse_confidence(0.5, 0.4, 0.9, 0.9, 0.5, 0.0), 0.5 * 0.4 * 0.5);
    }

    #[test]
    fn soft_nms_decay() {
        let out = soft_nms(&[prop(0, 10, 1.0), prop(20, 30, 0.5)], 0.5, 10);
        assert_eq!(out.iter().map(|p| p.score).collect::<Vec<_>>(), vec![1.0, 0.5]);
        let dup = soft_nms(&[prop(0, 10, 1.0), prop(0, 10, 1.0)], 0.5, 10);
        assert_eq!(dup[1].score, (-2.0f64).exp());
        assert_eq!(soft_nms(&[prop(0, 10, 1.0), prop(0, 10, 1.0)], 0.5, 1).len(), 1);
    }

    #[test]
    fn class_assignment() {
        let classes = vec![
            ClassScore { label: "a".into(), score: 0.8 },
            ClassScore { label: "b".into(), score: 0.2 },
        ];
        let out = assign_classes(&[prop(1, 3, 0.5)], &classes, 2, 2.0);
        assert_eq!(out.len(), 2);
        assert_eq!((out[0].score, out[1].score), (0.4, 0.1));
        assert_eq!(out[0].segment, [2.0, 6.0]);
        let one = assign_classes(&[prop(1, 3, 0.5)], &classes[..1], 1, 1.0);
        assert_eq!(one[0].label, "a");
        let none = assign_classes(&[prop(1, 3, 0.5)], &[], 2, 1.0);
        assert_eq!((none[0].label.as_str(), none[0].score), ("unknown", 0.5));
    }

    #[test]
    fn dedup_keeps_max() {
        let d = dedup_max(vec![prop(1, 5, 0.2), prop(1, 5, 0.7), prop(2, 5, 0.1)]);
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].score, 0.7);
    }
}
