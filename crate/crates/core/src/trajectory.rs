use crate::error::{Error, Result};
use crate::geometry::{FramePair, Point2H};

/// K feature trajectories over L frames, with optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    /// Row-major `[feature][frame]` coordinates.
    points: Vec<[f64; 2]>,
    feature_count: usize,
    frame_count: usize,
    ground_truth: Option<Vec<usize>>,
    /// Number of independent motions; 0 when unknown.
    num_motions: usize,
}

impl TrajectorySet {
    pub fn new(
        points: Vec<[f64; 2]>,
        feature_count: usize,
        frame_count: usize,
        ground_truth: Option<Vec<usize>>,
        num_motions: usize,
    ) -> Result<Self> {
        if feature_count == 0 {
            return Err(Error::InvalidInput("trajectory set needs K >= 1".into()));
        }
        if frame_count < 2 {
            return Err(Error::InvalidInput("trajectory set needs L >= 2".into()));
        }
        if points.len() != feature_count * frame_count {
            return Err(Error::InvalidInput(format!(
                "expected {} points, got {}",
                feature_count * frame_count,
                points.len()
            )));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("coordinates must be finite".into()));
        }
        if let Some(gt) = &ground_truth {
            if gt.len() != feature_count {
                return Err(Error::InvalidInput(format!(
                    "ground truth has {} labels for {feature_count} features",
                    gt.len()
                )));
            }
            if num_motions == 0 {
                return Err(Error::InvalidInput(
                    "ground truth given but motion count is 0".into(),
                ));
            }
            if let Some(bad) = gt.iter().find(|&&g| g >= num_motions) {
                return Err(Error::InvalidInput(format!(
                    "ground-truth label {bad} outside [0, {num_motions})"
                )));
            }
        }
        Ok(Self {
            points,
            feature_count,
            frame_count,
            ground_truth,
            num_motions,
        })
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn num_motions(&self) -> usize {
        self.num_motions
    }

    pub fn ground_truth(&self) -> Option<&[usize]> {
        self.ground_truth.as_deref()
    }

    pub fn point(&self, feature: usize, frame: usize) -> Point2H {
        let [x, y] = self.points[feature * self.frame_count + frame];
        Point2H::new(x, y)
    }

    pub fn raw(&self, feature: usize, frame: usize) -> [f64; 2] {
        self.points[feature * self.frame_count + frame]
    }

    pub fn raw_points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Points of `features` in frame `frame`, in the given order.
    pub fn points_at(&self, features: &[usize], frame: usize) -> Vec<Point2H> {
        features.iter().map(|&k| self.point(k, frame)).collect()
    }

    pub fn with_points(&self, points: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(
            points,
            self.feature_count,
            self.frame_count,
            self.ground_truth.clone(),
            self.num_motions,
        )
    }

    pub fn with_num_motions(mut self, c: usize) -> Result<Self> {
        if let Some(gt) = &self.ground_truth {
            if gt.iter().any(|&g| g >= c) {
                return Err(Error::InvalidInput(format!(
                    "ground truth uses labels outside [0, {c})"
                )));
            }
        }
        self.num_motions = c;
        Ok(self)
    }

    /// Robust estimate of the per-coordinate measurement noise, from the
    /// median absolute temporal difference of order `n = min(4, L - 1)`.
    /// Smooth motion contributes almost nothing to high-order differences,
    /// while i.i.d. noise of standard deviation s yields differences of
    /// standard deviation s * sqrt(binom(2n, n)).
    pub fn noise_sigma_estimate(&self) -> f64 {
        let order = (self.frame_count - 1).min(4);
        let coeffs: Vec<f64> = (0..=order)
            .map(|i| {
                let b = binomial(order, i) as f64;
                if (order - i).is_multiple_of(2) {
                    b
                } else {
                    -b
                }
            })
            .collect();
        let mut diffs = Vec::with_capacity(self.feature_count * (self.frame_count - order) * 2);
        for k in 0..self.feature_count {
            for t in 0..self.frame_count - order {
                for d in 0..2 {
                    let v: f64 = coeffs
                        .iter()
                        .enumerate()
                        .map(|(i, c)| c * self.raw(k, t + i)[d])
                        .sum();
                    diffs.push(v.abs());
                }
            }
        }
        let mid = diffs.len() / 2;
        let (_, median, _) = diffs.select_nth_unstable_by(mid, f64::total_cmp);
        let scale = (binomial(2 * order, order) as f64).sqrt();
        *median / (0.674_489_750_196_081_7 * scale)
    }
}

fn binomial(n: usize, k: usize) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Every frame pair `(l, r)` with `r - l >= min_sep`, in lexicographic order.
pub fn separated_frame_pairs(frame_count: usize, min_sep: usize) -> Vec<FramePair> {
    let sep = min_sep.clamp(1, frame_count.saturating_sub(1).max(1));
    let mut out = Vec::new();
    for l in 0..frame_count {
        for r in l + sep..frame_count {
            out.push(FramePair::new(l, r));
        }
    }
    out
}

/// Default frame separation: a third of the sequence, at least 2 frames, and
/// never more than the sequence allows.
pub fn default_frame_separation(frame_count: usize) -> usize {
    (frame_count / 3).max(2).min(frame_count.saturating_sub(1)).max(1)
}
