//! Merging fine motion models into coarse motions.
//!
//! Two fine models on the same rigid body share a fundamental matrix, so a
//! matrix fitted on a few atoms from both explains both models' features.
//! Repeated random draws of atoms give an epipolar distance per model pair,
//! which together with the difference of the models' image velocities is
//! turned into an affinity. Spectral clustering of the affinity matrix gives
//! the coarse labels.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;

use crate::atoms::Atom;
use crate::error::{Error, Result};
use crate::geometry::{estimate_fundamental, FramePair};
use crate::numerics::{eigen_symmetric, kmeans, SymmetricMatrix};
use crate::seed::{derive_indexed, derive_seed, rng_from};
use crate::trajectory::{default_frame_separation, separated_frame_pairs, TrajectorySet};

/// Floor on the per-frame flow scale, in pixels.
const MIN_FLOW_SIGMA: f64 = 0.1;
const KMEANS_RESTARTS: u64 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    pub id: usize,
    pub atom_ids: Vec<usize>,
    /// Sorted union of the member atoms' features.
    pub feature_ids: Vec<usize>,
    /// Average of the member atoms' centroid trajectories.
    pub mean_trajectory: Vec<[f64; 2]>,
}

/// Groups atoms by model label. Labels must cover `0..model_count`.
pub fn build_motion_models(atoms: &[Atom], atom_labels: &[usize], model_count: usize) -> Result<Vec<MotionModel>> {
    if atoms.len() != atom_labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} atoms",
            atom_labels.len(),
            atoms.len()
        )));
    }
    let mut models = Vec::with_capacity(model_count);
    for id in 0..model_count {
        let atom_ids: Vec<usize> = (0..atoms.len()).filter(|&a| atom_labels[a] == id).collect();
        if atom_ids.is_empty() {
            return Err(Error::InvalidInput(format!("motion model {id} has no atoms")));
        }
        let features: BTreeSet<usize> = atom_ids
            .iter()
            .flat_map(|&a| atoms[a].feature_ids.iter().copied())
            .collect();
        let frames = atoms[atom_ids[0]].centroid_per_frame.len();
        let n = atom_ids.len() as f64;
        let mean_trajectory = (0..frames)
            .map(|t| {
                let (sx, sy) = atom_ids.iter().fold((0.0, 0.0), |(sx, sy), &a| {
                    let [x, y] = atoms[a].centroid_per_frame[t];
                    (sx + x, sy + y)
                });
                [sx / n, sy / n]
            })
            .collect();
        models.push(MotionModel {
            id,
            atom_ids,
            feature_ids: features.into_iter().collect(),
            mean_trajectory,
        });
    }
    if let Some(&bad) = atom_labels.iter().find(|&&l| l >= model_count) {
        return Err(Error::InvalidInput(format!("model label {bad} outside [0, {model_count})")));
    }
    Ok(models)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VotingParams {
    /// Strength of the per-atom votes `exp(-lambda_vote * d)`.
    pub lambda_vote: f64,
    /// Forgetting factor of the affinity `exp(-lambda_affinity * d_ep * d_mot)`.
    pub lambda_affinity: f64,
    /// Random draws per model pair.
    pub rounds: usize,
    /// Frame pairs drawn for the whole accumulation.
    pub frames_used: usize,
    /// `None` picks a third of the sequence (at least two frames).
    pub min_frame_separation: Option<usize>,
    pub seed: u64,
}

impl Default for VotingParams {
    fn default() -> Self {
        Self {
            lambda_vote: 2.0,
            lambda_affinity: 0.5,
            rounds: 30,
            frames_used: 7,
            min_frame_separation: None,
            seed: 0,
        }
    }
}

impl VotingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_vote > 0.0 && self.lambda_affinity > 0.0) {
            return Err(Error::InvalidInput("voting strengths must be positive".into()));
        }
        if self.rounds == 0 || self.frames_used < 2 {
            return Err(Error::InvalidInput("need rounds >= 1 and frames_used >= 2".into()));
        }
        Ok(())
    }
}

/// Epipolar distance of one random draw: two atoms from each model (fewer
/// when a model has only one), a fundamental matrix fitted on their pooled
/// features, and the larger of the two models' mean Sampson distances.
/// Symmetric in the two models.
pub fn epipolar_pair_distance(
    model_j: &MotionModel,
    model_k: &MotionModel,
    atoms: &[Atom],
    frames: FramePair,
    traj: &TrajectorySet,
    seed: u64,
) -> Result<f64> {
    let (a, b) = if model_j.id <= model_k.id {
        (model_j, model_k)
    } else {
        (model_k, model_j)
    };
    let mut rng = rng_from(seed);
    let mut pooled = BTreeSet::new();
    for m in [a, b] {
        let take = m.atom_ids.len().min(2);
        for i in sample(&mut rng, m.atom_ids.len(), take) {
            pooled.extend(atoms[m.atom_ids[i]].feature_ids.iter().copied());
        }
    }
    if pooled.len() < 8 {
        return Err(Error::DegenerateConfiguration(format!(
            "{} pooled features, need 8",
            pooled.len()
        )));
    }
    let ids: Vec<usize> = pooled.into_iter().collect();
    let f = estimate_fundamental(
        &traj.points_at(&ids, frames.l),
        &traj.points_at(&ids, frames.r),
        frames,
    )?;
    let mean_sd = |m: &MotionModel| -> Result<f64> {
        let (sum, n) = m.feature_ids.iter().fold((0.0, 0usize), |(s, n), &fid| {
            match f.sampson(&traj.point(fid, frames.l), &traj.point(fid, frames.r)) {
                Ok(d) => (s + d, n + 1),
                Err(_) => (s, n),
            }
        });
        if n == 0 {
            return Err(Error::ZeroDenominator);
        }
        Ok(sum / n as f64)
    };
    Ok(mean_sd(a)?.max(mean_sd(b)?))
}

/// Vote an atom receives for lying at epipolar distance `d`.
pub fn atom_vote(d: f64, lambda_vote: f64) -> f64 {
    (-lambda_vote * d).exp()
}

/// RMS of the atoms' centroid displacements from frame `t - 1` to `t`,
/// floored at 0.1 px.
pub fn flow_sigma(atoms: &[Atom], t: usize) -> f64 {
    if atoms.is_empty() || t == 0 {
        return MIN_FLOW_SIGMA;
    }
    let ms = atoms
        .iter()
        .map(|a| {
            let ([x0, y0], [x1, y1]) = (a.centroid_per_frame[t - 1], a.centroid_per_frame[t]);
            (x1 - x0).powi(2) + (y1 - y0).powi(2)
        })
        .sum::<f64>()
        / atoms.len() as f64;
    ms.sqrt().max(MIN_FLOW_SIGMA)
}

/// Difference of the two models' mean displacements into frame `t`,
/// normalized by `sigma_t`.
pub fn motion_distance(a: &MotionModel, b: &MotionModel, t: usize, sigma_t: f64) -> f64 {
    let d = |m: &MotionModel| {
        let ([x0, y0], [x1, y1]) = (m.mean_trajectory[t - 1], m.mean_trajectory[t]);
        [x1 - x0, y1 - y0]
    };
    let (da, db) = (d(a), d(b));
    ((da[0] - db[0]).powi(2) + (da[1] - db[1]).powi(2)).sqrt() / sigma_t
}

/// Affinity contribution of one round.
pub fn round_affinity(d_epipolar: f64, d_motion: f64, lambda_affinity: f64) -> f64 {
    (-lambda_affinity * d_epipolar * d_motion).exp()
}

/// Affinity matrix over the models. Each unordered pair accumulates
/// `round_affinity` over `rounds` random draws on frame pairs chosen once up
/// front; the motion distance is averaged over those frame pairs' later
/// frames. Rounds whose fundamental matrix cannot be fitted are skipped. The
/// diagonal holds the largest off-diagonal entry (1 if all are zero).
pub fn accumulate_affinity(
    models: &[MotionModel],
    atoms: &[Atom],
    traj: &TrajectorySet,
    params: &VotingParams,
) -> Result<SymmetricMatrix> {
    params.validate()?;
    let n = models.len();
    let sep = params
        .min_frame_separation
        .unwrap_or_else(|| default_frame_separation(traj.frame_count()));
    let all_pairs = separated_frame_pairs(traj.frame_count(), sep);
    let base = derive_seed(params.seed, "affinity");
    let mut rng = rng_from(derive_seed(base, "frames"));
    let selected: Vec<FramePair> = sample(&mut rng, all_pairs.len(), params.frames_used.min(all_pairs.len()))
        .into_iter()
        .map(|i| all_pairs[i])
        .collect();
    let sigmas: Vec<f64> = selected.iter().map(|p| flow_sigma(atoms, p.r)).collect();

    let mut z = SymmetricMatrix::zeros(n);
    for j in 0..n {
        for k in j + 1..n {
            let d_mot = selected
                .iter()
                .zip(&sigmas)
                .map(|(p, &s)| motion_distance(&models[j], &models[k], p.r, s))
                .sum::<f64>()
                / selected.len() as f64;
            let mut rng = rng_from(derive_indexed(base, (j * n + k) as u64));
            let mut total = 0.0;
            for _ in 0..params.rounds {
                let frames = selected[rng.random_range(0..selected.len())];
                let draw = rng.random::<u64>();
                if let Ok(d_ep) = epipolar_pair_distance(&models[j], &models[k], atoms, frames, traj, draw) {
                    total += round_affinity(d_ep, d_mot, params.lambda_affinity);
                }
            }
            z.set(j, k, total);
        }
    }
    let mut diag = 0.0f64;
    for j in 0..n {
        for k in j + 1..n {
            diag = diag.max(z.get(j, k));
        }
    }
    if diag == 0.0 {
        diag = 1.0;
    }
    for j in 0..n {
        z.set(j, j, diag);
    }
    Ok(z)
}

/// Normalized spectral clustering of `z` into `num_motions` groups. Labels
/// are numbered in order of first appearance and every label is used.
pub fn coarsen(z: &SymmetricMatrix, num_motions: usize, seed: u64) -> Result<Vec<usize>> {
    let n = z.dim();
    if num_motions == 0 || num_motions > n {
        return Err(Error::InvalidInput(format!(
            "cannot split {n} models into {num_motions} motions"
        )));
    }
    if num_motions == 1 {
        return Ok(vec![0; n]);
    }
    let deg: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| z.get(i, j)).sum::<f64>().max(1e-300))
        .collect();
    let mut m = SymmetricMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            m.set(i, j, z.get(i, j) / (deg[i] * deg[j]).sqrt());
        }
    }
    let eig = eigen_symmetric(&m)?;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let r: Vec<f64> = (0..num_motions).map(|c| eig.vectors[(i, c)]).collect();
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                r.iter().map(|v| v / norm).collect()
            } else {
                r
            }
        })
        .collect();
    let base = derive_seed(seed, "coarsen");
    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..KMEANS_RESTARTS {
        let km = kmeans(&rows, num_motions, derive_indexed(base, restart), 100)?;
        if best.as_ref().is_none_or(|(i, _)| km.inertia < *i) {
            best = Some((km.inertia, km.labels));
        }
    }
    let labels = best.expect("at least one restart").1;
    let mut order = Vec::new();
    Ok(labels
        .iter()
        .map(|&l| match order.iter().position(|&o| o == l) {
            Some(p) => p,
            None => {
                order.push(l);
                order.len() - 1
            }
        })
        .collect())
}
