//! Vote accumulation over sliding windows and fusion of window scales.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Start,
    End,
}

impl Boundary {
    pub fn name(self) -> &'static str {
        match self {
            Boundary::Start => "start",
            Boundary::End => "end",
        }
    }
}

/// Post-processing of the accumulated sums.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteNorm {
    /// Raw sum over covering windows.
    Sum,
    /// Sum divided by the number of windows covering each location.
    MeanPerWindow,
}

/// How voting scores from several window lengths are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Min-max normalize each, then average.
    MinMaxMean,
    /// Plain elementwise sum.
    Sum,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VotingScores {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub windows: Vec<usize>,
    pub norm: VoteNorm,
}

fn check(preds: &[f64], t_len: usize, j: usize) -> Result<usize> {
    if j == 0 || t_len < j {
        return Err(Error::InvalidArgument(format!("window length {j} with T = {t_len}")));
    }
    let n = t_len - j + 1;
    if preds.len() != n * j {
        return Err(Error::shape(
            "accumulate_votes",
            format!("{} predictions for {n} windows of length {j}", preds.len()),
        ));
    }
    Ok(n)
}

/// For every location `t` and every stride-1 window `n` covering it, with
/// 1-based in-window position `k = t - n + 1`, adds
/// `-sum(r[1..=k]) + sum(r[k+1..=J])` for starts and the negation for ends.
/// `preds` holds window `n` at `preds[n*J..(n+1)*J]`.
///
/// Runs in O(T J) using one prefix sum per window.
pub fn accumulate_votes(preds: &[f64], t_len: usize, j: usize, boundary: Boundary) -> Result<Vec<f64>> {
    let n = check(preds, t_len, j)?;
    let sign = match boundary {
        Boundary::Start => 1.0,
        Boundary::End => -1.0,
    };
    let mut v = vec![0.0; t_len];
    let mut prefix = vec![0.0; j + 1];
    for w in 0..n {
        let r = &preds[w * j..(w + 1) * j];
        for k in 0..j {
            prefix[k + 1] = prefix[k] + r[k];
        }
        let total = prefix[j];
        for k in 0..j {
            v[w + k] += sign * (total - 2.0 * prefix[k + 1]);
        }
    }
    Ok(v)
}

/// Direct triple loop over locations, covering windows and in-window
/// positions. Reference for [`accumulate_votes`].
pub fn accumulate_votes_naive(
    preds: &[f64],
    t_len: usize,
    j: usize,
    boundary: Boundary,
) -> Result<Vec<f64>> {
    let n = check(preds, t_len, j)?;
    let mut v = vec![0.0; t_len];
    for (t, out) in v.iter_mut().enumerate() {
        for w in t.saturating_sub(j - 1)..=t.min(n - 1) {
            let k = t - w + 1;
            for jj in 1..=j {
                let r = preds[w * j + jj - 1];
                let s = if jj <= k { -r } else { r };
                *out += match boundary {
                    Boundary::Start => s,
                    Boundary::End => -s,
                };
            }
        }
    }
    Ok(v)
}

/// Number of stride-1 windows of length `j` covering each location.
pub fn coverage(t_len: usize, j: usize) -> Vec<usize> {
    let n = t_len + 1 - j;
    (0..t_len).map(|t| t.min(n - 1) + 1 - t.saturating_sub(j - 1)).collect()
}

pub fn normalize_votes(mut v: Vec<f64>, j: usize, norm: VoteNorm) -> Vec<f64> {
    if norm == VoteNorm::MeanPerWindow {
        let cov = coverage(v.len(), j);
        for (x, n) in v.iter_mut().zip(cov) {
            *x /= n as f64;
        }
    }
    v
}

/// Rescales to [0, 1]. A constant sequence maps to zeros.
pub fn min_max(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        if !v.is_empty() {
            warn!("constant voting sequence normalized to zeros");
        }
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

/// Min-max normalizes both sequences and averages them.
pub fn fuse_window_scales(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    fuse(&[a.to_vec(), b.to_vec()], Fusion::MinMaxMean)
}

pub fn fuse(seqs: &[Vec<f64>], fusion: Fusion) -> Result<Vec<f64>> {
    let Some(first) = seqs.first() else {
        return Err(Error::InvalidArgument("nothing to fuse".into()));
    };
    if seqs.iter().any(|s| s.len() != first.len()) {
        return Err(Error::shape("fuse_window_scales", "sequences differ in length"));
    }
    let mut out = vec![0.0; first.len()];
    for s in seqs {
        let s = match fusion {
            Fusion::MinMaxMean => min_max(s),
            Fusion::Sum => s.clone(),
        };
        for (o, x) in out.iter_mut().zip(s) {
            *o += x;
        }
    }
    if fusion == Fusion::MinMaxMean {
        let k = seqs.len() as f64;
        out.iter_mut().for_each(|o| *o /= k);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_predictions_give_zero_votes() {
        let v = accumulate_votes(&[0.0; 18 * 3], 20, 3, Boundary::Start).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_window_three_positions() {
        let a = 0.7;
        let v = accumulate_votes(&[-a, 0.0, a], 3, 3, Boundary::Start).unwrap();
        // Position 1: a + 0 + a; position 2: a - 0 + a; position 3: a - 0 - a.
        assert_eq!(v, vec![2.0 * a, 2.0 * a, 0.0]);
        assert_eq!(accumulate_votes_naive(&[-a, 0.0, a], 3, 3, Boundary::Start).unwrap(), v);
    }

    #[test]
    fn coverage_counts() {
        assert_eq!(coverage(6, 3), vec![1, 2, 3, 3, 2, 1]);
        assert_eq!(coverage(3, 3), vec![1, 1, 1]);
    }

    #[test]
    fn fusion_examples() {
        let a = vec![0.0, 2.0, 4.0];
        let n = min_max(&a);
        assert_eq!(fuse_window_scales(&n, &n).unwrap(), n);
        assert_eq!(min_max(&[3.0, 3.0]), vec![0.0, 0.0]);
        assert!(fuse_window_scales(&a, &[1.0]).is_err());
    }
}
