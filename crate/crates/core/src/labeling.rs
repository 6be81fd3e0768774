//! Training targets for the three learned modules.

use serde::{Deserialize, Serialize};

use crate::data::FrameInstance;
use crate::error::{Error, Result};
use crate::eval::temporal_iou;

/// Distance (in frames) that maps to a relative distance of 1 before
/// clamping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelScale {
    /// Divide by the window length J.
    Window,
    /// Divide by a fixed number of frames.
    Frames(f64),
}

impl Default for LabelScale {
    fn default() -> Self {
        LabelScale::Frames(1.0)
    }
}

impl LabelScale {
    pub fn divisor(self, j: usize) -> f64 {
        match self {
            LabelScale::Window => j as f64,
            LabelScale::Frames(f) => f,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowLabels {
    pub start: usize,
    pub r_start: Vec<f64>,
    pub r_end: Vec<f64>,
    /// Loss weight; below one for videos without any instance.
    pub weight: f64,
}

/// Closest point to `t`, preferring the earlier one on ties. `points` must
/// be sorted.
pub fn closest(points: &[usize], t: usize) -> Option<usize> {
    let i = points.partition_point(|&p| p < t);
    let after = points.get(i).copied();
    let before = i.checked_sub(1).map(|k| points[k]);
    match (before, after) {
        (Some(b), Some(a)) => Some(if t - b <= a - t { b } else { a }),
        (b, a) => b.or(a),
    }
}

fn boundaries(instances: &[FrameInstance]) -> (Vec<usize>, Vec<usize>) {
    let mut starts: Vec<usize> = instances.iter().map(|i| i.start).collect();
    let mut ends: Vec<usize> = instances.iter().map(|i| i.end).collect();
    starts.sort_unstable();
    ends.sort_unstable();
    (starts, ends)
}

/// Per-frame relative distances `(r_start, r_end)` over the whole sequence.
/// `offset` moves the zero crossing that many frames past each boundary
/// frame; 0 puts it on the boundary frame.
/// Without instances both are the sentinel `+1`.
pub fn frame_relative_distances(
    instances: &[FrameInstance],
    t_len: usize,
    divisor: f64,
    offset: f64,
) -> (Vec<f64>, Vec<f64>) {
    let (starts, ends) = boundaries(instances);
    let rel = |points: &[usize], t: usize, sign: f64| match closest(points, t) {
        Some(p) => (sign * (t as f64 - p as f64 - offset) / divisor).clamp(-1.0, 1.0),
        None => 1.0,
    };
    let rs = (0..t_len).map(|t| rel(&starts, t, 1.0)).collect();
    let re = (0..t_len).map(|t| rel(&ends, t, -1.0)).collect();
    (rs, re)
}

/// Relative-distance targets for every window of length `j` taken every
/// `stride` frames.
pub fn make_window_labels(
    instances: &[FrameInstance],
    t_len: usize,
    j: usize,
    stride: usize,
    scale: LabelScale,
    offset: f64,
    empty_weight: f64,
) -> Result<Vec<WindowLabels>> {
    if j < 2 || t_len < j {
        return Err(Error::InvalidArgument(format!(
            "window length {j} needs 2 <= J <= T (T = {t_len})"
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("window stride must be positive".into()));
    }
    let (rs, re) = frame_relative_distances(instances, t_len, scale.divisor(j), offset);
    let weight = if instances.is_empty() { empty_weight } else { 1.0 };
    Ok((0..=t_len - j)
        .step_by(stride)
        .map(|n| WindowLabels {
            start: n,
            r_start: rs[n..n + j].to_vec(),
            r_end: re[n..n + j].to_vec(),
            weight,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameLabels {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub action: Vec<f64>,
}

/// Binary per-frame targets. Boundaries are dilated by
/// `max(1, round(dilation * (e - s)))` frames on each side.
pub fn make_tem_labels(instances: &[FrameInstance], t_len: usize, dilation: f64) -> FrameLabels {
    let mut labels = FrameLabels {
        start: vec![0.0; t_len],
        end: vec![0.0; t_len],
        action: vec![0.0; t_len],
    };
    let last = t_len.saturating_sub(1);
    for inst in instances {
        let d = ((dilation * (inst.end - inst.start) as f64).round() as usize).max(1);
        labels.action[inst.start..=inst.end.min(last)].fill(1.0);
        let mark = |v: &mut Vec<f64>, c: usize| {
            v[c.saturating_sub(d)..=(c + d).min(last)].fill(1.0);
        };
        mark(&mut labels.start, inst.start);
        mark(&mut labels.end, inst.end);
    }
    labels
}

/// Best IoU of each proposal (in frames) against the instances.
pub fn make_pem_labels(proposals: &[(f64, f64)], instances: &[FrameInstance]) -> Vec<f64> {
    proposals
        .iter()
        .map(|&p| {
            instances
                .iter()
                .map(|g| temporal_iou(p, (g.start as f64, g.end as f64)))
                .fold(0.0, f64::max)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(s: usize, e: usize) -> FrameInstance {
        FrameInstance { start: s, end: e, label: "a".into() }
    }

    #[test]
    fn window_formula_examples() {
        let w = make_window_labels(&[inst(10, 40)], 100, 10, 1, LabelScale::Window, 0.0, 0.1).unwrap();
        assert_eq!(w.len(), 91);
        // Window starting at 5 holds frames 5..15; j = 12 is index 7.
        assert!((w[5].r_start[7] - 0.2).abs() < 1e-12);
        assert_eq!(w[5].r_start[5], 0.0);
        // 30 frames past the start saturates.
        assert_eq!(w[40].r_start[0], 1.0);
        assert_eq!(w[0].r_start[0], -1.0);
    }

    #[test]
    fn ties_go_to_the_earlier_boundary() {
        assert_eq!(closest(&[10, 20], 15), Some(10));
        assert_eq!(closest(&[10, 20], 16), Some(20));
        assert_eq!(closest(&[], 3), None);
    }

    #[test]
    fn empty_video_gets_sentinel_and_low_weight() {
        let w = make_window_labels(&[], 20, 5, 1, LabelScale::Window, 0.0, 0.1).unwrap();
        assert!(w.iter().all(|x| x.weight == 0.1 && x.r_start.iter().all(|&v| v == 1.0)));
        assert!(make_window_labels(&[], 4, 5, 1, LabelScale::Window, 0.0, 0.1).is_err());
    }

    #[test]
    fn tem_label_examples() {
        let l = make_tem_labels(&[inst(20, 60)], 100, 0.05);
        let ones: Vec<usize> = (0..100).filter(|&t| l.start[t] == 1.0).collect();
        assert_eq!(ones, vec![18, 19, 20, 21, 22]);
        assert_eq!(l.action.iter().sum::<f64>(), 41.0);
        let full = make_tem_labels(&[inst(0, 99)], 100, 0.05);
        assert!(full.action.iter().all(|&v| v == 1.0));
        let none = make_tem_labels(&[], 10, 0.05);
        assert!(none.start.iter().chain(&none.action).all(|&v| v == 0.0));
    }

    #[test]
    fn pem_label_examples() {
        let g = [inst(5, 15)];
        let t = make_pem_labels(&[(5.0, 15.0), (20.0, 30.0), (0.0, 10.0)], &g);
        assert_eq!(t[0], 1.0);
        assert_eq!(t[1], 0.0);
        assert!((t[2] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(make_pem_labels(&[(0.0, 1.0)], &[]), vec![0.0]);
    }
}
