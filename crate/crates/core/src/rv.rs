//! Randomized-voting refinement of per-feature labels.
//!
//! Every iteration, each group samples a few of its features, fits a
//! fundamental matrix on one frame pair, and every feature gets a vote
//! `exp(-lambda * sampson)` for every group. Votes accumulate in a histogram
//! that decays by `alpha` per iteration, and labels follow the histogram.
//! Features that arrive with a label ("locked") are favored in sampling and
//! voting, and only give up their label when another group wins by a clear
//! margin.

use rand::seq::index::sample_weighted;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{estimate_fundamental, FramePair, FundamentalMatrix};
use crate::seed::{derive_indexed, derive_seed, rng_from};
use crate::trajectory::{default_frame_separation, separated_frame_pairs, TrajectorySet};

/// Correspondences needed to fit a fundamental matrix.
pub const MIN_GROUP_SAMPLE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    AtomDerived,
    RvAssigned,
}

impl LabelSource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::AtomDerived => "atom",
            Self::RvAssigned => "rv",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "atom" => Some(Self::AtomDerived),
            "rv" => Some(Self::RvAssigned),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labeling {
    pub labels: Vec<usize>,
    /// Share of the winning label in the feature's histogram row.
    pub confidence: Vec<f64>,
    pub source: Vec<LabelSource>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RvParams {
    /// Features sampled per group per iteration.
    pub m: usize,
    pub lambda_vote: f64,
    /// Histogram forgetting factor.
    pub alpha: f64,
    pub max_iterations: usize,
    pub max_trials: usize,
    /// Vote and sampling multiplier for features holding their initial
    /// label. `f64::INFINITY` freezes those labels.
    pub locked_weight: f64,
    /// A locked label is given up only when another group's score exceeds
    /// the held group's score by this factor.
    pub flip_ratio: f64,
    /// Consecutive iterations without a label change that count as converged.
    pub stable_iterations: usize,
    /// `None` picks a third of the sequence (at least two frames).
    pub min_frame_separation: Option<usize>,
    pub seed: u64,
}

impl Default for RvParams {
    fn default() -> Self {
        Self {
            m: 12,
            lambda_vote: 4.0,
            alpha: 0.9,
            max_iterations: 150,
            max_trials: 10,
            locked_weight: 5.0,
            flip_ratio: 2.0,
            stable_iterations: 3,
            min_frame_separation: None,
            seed: 0,
        }
    }
}

impl RvParams {
    pub fn validate(&self) -> Result<()> {
        if self.m < MIN_GROUP_SAMPLE {
            return Err(Error::InvalidInput(format!("m must be >= 8, got {}", self.m)));
        }
        if !(self.lambda_vote > 0.0 && self.lambda_vote.is_finite()) {
            return Err(Error::InvalidInput("lambda_vote must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidInput(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if !(self.locked_weight >= 1.0) {
            return Err(Error::InvalidInput("locked_weight must be >= 1".into()));
        }
        if !(self.flip_ratio >= 1.0) {
            return Err(Error::InvalidInput("flip_ratio must be >= 1".into()));
        }
        if self.max_iterations == 0 || self.max_trials == 0 || self.stable_iterations == 0 {
            return Err(Error::InvalidInput(
                "max_iterations, max_trials and stable_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// K x C vote scores plus the label each locked feature holds.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteHistogram {
    scores: Vec<f64>,
    groups: usize,
    locked_weight: f64,
    held: Vec<Option<usize>>,
}

impl VoteHistogram {
    pub fn new(feature_count: usize, groups: usize, locked_weight: f64, held: Vec<Option<usize>>) -> Result<Self> {
        if held.len() != feature_count {
            return Err(Error::InvalidInput(format!(
                "{} held labels for {feature_count} features",
                held.len()
            )));
        }
        if held.iter().flatten().any(|&h| h >= groups) {
            return Err(Error::InvalidInput(format!("held label outside [0, {groups})")));
        }
        Ok(Self {
            scores: vec![0.0; feature_count * groups],
            groups,
            locked_weight,
            held,
        })
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn row(&self, feature: usize) -> &[f64] {
        &self.scores[feature * self.groups..(feature + 1) * self.groups]
    }

    pub fn held(&self, feature: usize) -> Option<usize> {
        self.held[feature]
    }

    pub fn release(&mut self, feature: usize) {
        self.held[feature] = None;
    }

    /// Winning group (ties to the lowest id) and its score.
    pub fn argmax(&self, feature: usize) -> (usize, f64) {
        let row = self.row(feature);
        let mut best = (0, row[0]);
        for (c, &v) in row.iter().enumerate().skip(1) {
            if v > best.1 {
                best = (c, v);
            }
        }
        best
    }

    pub fn share(&self, feature: usize, group: usize) -> f64 {
        let row = self.row(feature);
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row[group] / total
        } else {
            0.0
        }
    }
}

/// Decays the histogram by `alpha` and adds `exp(-lambda * sampson)` for each
/// feature and group, scaled by the locked weight on a feature's held group.
/// Groups without a model, and features whose Sampson distance is undefined,
/// receive no vote this round.
pub fn vote_round(
    hist: &mut VoteHistogram,
    models: &[Option<FundamentalMatrix>],
    traj: &TrajectorySet,
    frames: FramePair,
    lambda_vote: f64,
    alpha: f64,
) {
    let boost = if hist.locked_weight.is_finite() {
        hist.locked_weight
    } else {
        1.0
    };
    for v in &mut hist.scores {
        *v *= alpha;
    }
    for k in 0..traj.feature_count() {
        let (yl, yr) = (traj.point(k, frames.l), traj.point(k, frames.r));
        for (c, f) in models.iter().enumerate().take(hist.groups) {
            let Some(f) = f else { continue };
            let Ok(sd) = f.sampson(&yl, &yr) else { continue };
            let mut vote = (-lambda_vote * sd).exp();
            if hist.held[k] == Some(c) {
                vote *= boost;
            }
            hist.scores[k * hist.groups + c] += vote;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOutcome {
    pub labeling: Labeling,
    /// Iterations summed over all trials.
    pub iterations: usize,
    pub trials: usize,
    pub converged: bool,
}

/// Refines labels starting from `initial` (`None` for unlabeled features).
/// With every entry `None` this is plain randomized voting from a random
/// grouping. When a group becomes too small to sample, the trial ends and
/// the next trial drops the initial labels of that group, or all initial
/// labels if the group had none.
pub fn finetune(
    traj: &TrajectorySet,
    initial: &[Option<usize>],
    num_motions: usize,
    params: &RvParams,
) -> Result<FinetuneOutcome> {
    params.validate()?;
    let k = traj.feature_count();
    let c = num_motions;
    if c == 0 {
        return Err(Error::InvalidInput("motion count must be positive".into()));
    }
    if initial.len() != k {
        return Err(Error::InvalidInput(format!("{} initial labels for {k} features", initial.len())));
    }
    if initial.iter().flatten().any(|&l| l >= c) {
        return Err(Error::InvalidInput(format!("initial label outside [0, {c})")));
    }
    let sep = params
        .min_frame_separation
        .unwrap_or_else(|| default_frame_separation(traj.frame_count()));
    let pairs = separated_frame_pairs(traj.frame_count(), sep);
    let base = derive_seed(params.seed, "rv");

    let mut total_iterations = 0;
    let mut last = None;
    let mut initial = initial.to_vec();
    for trial in 0..params.max_trials {
        let mut rng = rng_from(derive_indexed(base, trial as u64));
        let mut labels: Vec<usize> = initial
            .iter()
            .map(|l| l.unwrap_or_else(|| rng.random_range(0..c)))
            .collect();
        // unlabeled features join the sampling pools once they have been voted on
        let mut voted: Vec<bool> = initial.iter().map(Option::is_some).collect();
        let mut hist = VoteHistogram::new(k, c, params.locked_weight, initial.to_vec())?;
        let mut stable = 0;
        let mut converged = false;
        for _ in 0..params.max_iterations {
            total_iterations += 1;
            let frames = pairs[rng.random_range(0..pairs.len())];
            let mut models = Vec::with_capacity(c);
            let mut collapsed = None;
            for g in 0..c {
                match sample_group(&mut rng, &labels, &voted, &hist, g, params) {
                    Some(ids) => models.push(
                        estimate_fundamental(
                            &traj.points_at(&ids, frames.l),
                            &traj.points_at(&ids, frames.r),
                            frames,
                        )
                        .ok(),
                    ),
                    None => {
                        collapsed = Some(g);
                        break;
                    }
                }
            }
            if let Some(g) = collapsed {
                if initial.contains(&Some(g)) {
                    for l in initial.iter_mut().filter(|l| **l == Some(g)) {
                        *l = None;
                    }
                } else {
                    initial.fill(None);
                }
                break;
            }
            vote_round(&mut hist, &models, traj, frames, params.lambda_vote, params.alpha);

            let mut changed = 0;
            for f in 0..k {
                let (winner, score) = hist.argmax(f);
                if score <= 0.0 {
                    continue;
                }
                voted[f] = true;
                match hist.held(f) {
                    None => {
                        if labels[f] != winner {
                            labels[f] = winner;
                            changed += 1;
                        }
                    }
                    Some(h) => {
                        let held_score = hist.row(f)[h];
                        if winner != h
                            && params.locked_weight.is_finite()
                            && score > params.flip_ratio * held_score
                        {
                            labels[f] = winner;
                            hist.release(f);
                            changed += 1;
                        }
                    }
                }
            }
            stable = if changed == 0 { stable + 1 } else { 0 };
            if stable >= params.stable_iterations {
                converged = true;
                break;
            }
        }
        let labeling = Labeling {
            confidence: (0..k).map(|f| hist.share(f, labels[f])).collect(),
            source: (0..k)
                .map(|f| match hist.held(f) {
                    Some(_) => LabelSource::AtomDerived,
                    None => LabelSource::RvAssigned,
                })
                .collect(),
            labels,
        };
        last = Some(FinetuneOutcome {
            labeling,
            iterations: total_iterations,
            trials: trial + 1,
            converged,
        });
        if converged {
            break;
        }
    }
    Ok(last.expect("max_trials is positive"))
}

/// Up to `m` members of group `g`, drawn with locked members weighted by the
/// locked weight. Voted members are preferred; if fewer than eight of them
/// exist the whole group is used. `None` when the group is too small to fit
/// a fundamental matrix.
fn sample_group<R: Rng>(
    rng: &mut R,
    labels: &[usize],
    voted: &[bool],
    hist: &VoteHistogram,
    g: usize,
    params: &RvParams,
) -> Option<Vec<usize>> {
    let members: Vec<usize> = (0..labels.len()).filter(|&f| labels[f] == g).collect();
    let ready: Vec<usize> = members.iter().copied().filter(|&f| voted[f]).collect();
    let pool = if ready.len() >= MIN_GROUP_SAMPLE { ready } else { members };
    if pool.len() < MIN_GROUP_SAMPLE {
        return None;
    }
    let amount = params.m.min(pool.len());
    let weight = |i: usize| {
        if hist.held(pool[i]) == Some(g) {
            params.locked_weight.min(1e12)
        } else {
            1.0
        }
    };
    let picked = sample_weighted(rng, pool.len(), weight, amount).ok()?;
    let mut ids: Vec<usize> = picked.into_iter().map(|i| pool[i]).collect();
    ids.sort_unstable();
    Some(ids)
}
