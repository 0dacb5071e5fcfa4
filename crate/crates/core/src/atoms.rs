//! Atom construction: small neighborhoods of features that move under one
//! affine transform between a pair of frames.
//!
//! Atoms are built sequentially. For each seed feature a random frame pair is
//! drawn, every feature within `r2` of the seed (at the first frame of the
//! pair) becomes a candidate, and the candidates are tested for affine
//! consensus with RANSAC. Members that lie within `r1` of the seed are then
//! locked to that atom; members in the `(r1, r2]` annulus stay available to
//! later atoms, which is what makes atoms overlap.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{fit_affine, AffineTransform, FramePair, Point2H};
use crate::numerics::{ransac, Estimator, RansacConfig};
use crate::seed::{derive_seed, rng_from};
use crate::trajectory::{default_frame_separation, separated_frame_pairs, TrajectorySet};

#[derive(Debug, Clone, PartialEq)]
pub struct AtomConstructionConfig {
    /// Inner radius; members this close to the seed join no later atom.
    pub r1: f64,
    /// Outer radius bounding every atom.
    pub r2: f64,
    /// `None` picks a third of the sequence (at least two frames).
    pub min_frame_separation: Option<usize>,
    pub ransac: RansacConfig,
    pub max_passes: usize,
    /// Neighbors required around a seed before RANSAC is attempted.
    pub min_neighbors: usize,
    /// Derive the RANSAC threshold from the noise level estimated from the
    /// trajectories instead of using `ransac.inlier_threshold`.
    pub noise_adaptive_threshold: bool,
    /// Lower bound on the noise-derived threshold, in pixels.
    pub min_inlier_threshold: f64,
    pub seed: u64,
}

impl Default for AtomConstructionConfig {
    fn default() -> Self {
        Self {
            r1: 20.0,
            r2: 40.0,
            min_frame_separation: None,
            ransac: RansacConfig::default(),
            max_passes: 3,
            min_neighbors: 3,
            noise_adaptive_threshold: true,
            min_inlier_threshold: 0.05,
            seed: 0,
        }
    }
}

impl AtomConstructionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r1 > 0.0 && self.r1 <= self.r2) {
            return Err(Error::InvalidInput(format!(
                "need 0 < r1 <= r2 (r1={}, r2={})",
                self.r1, self.r2
            )));
        }
        if !(self.min_inlier_threshold > 0.0) {
            return Err(Error::InvalidInput("min_inlier_threshold must be positive".into()));
        }
        if self.min_frame_separation == Some(0) {
            return Err(Error::InvalidInput("min_frame_separation must be >= 1".into()));
        }
        self.ransac.validate()
    }

    pub fn frame_separation(&self, frame_count: usize) -> usize {
        self.min_frame_separation
            .unwrap_or_else(|| default_frame_separation(frame_count))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub id: usize,
    /// Sorted member feature ids (at least 3).
    pub feature_ids: Vec<usize>,
    pub origin_feature: usize,
    pub frames: FramePair,
    pub transform: AffineTransform,
    /// Mean member position in every frame.
    pub centroid_per_frame: Vec<[f64; 2]>,
}

impl Atom {
    /// Affine transform of this atom's members between an arbitrary frame pair.
    pub fn transform_between(&self, traj: &TrajectorySet, frames: FramePair) -> Result<AffineTransform> {
        fit_affine(
            &traj.points_at(&self.feature_ids, frames.l),
            &traj.points_at(&self.feature_ids, frames.r),
            frames,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomBuild {
    pub atoms: Vec<Atom>,
    /// Features that ended up in no atom, sorted.
    pub unassigned: Vec<usize>,
    /// RANSAC threshold actually used (after noise adaptation).
    pub inlier_threshold: f64,
}

pub(crate) struct AffineEstimator {
    pub frames: FramePair,
}

impl Estimator for AffineEstimator {
    type Datum = (Point2H, Point2H);
    type Model = AffineTransform;

    fn min_samples(&self) -> usize {
        3
    }

    fn fit(&self, sample: &[&(Point2H, Point2H)]) -> Result<AffineTransform> {
        let src: Vec<Point2H> = sample.iter().map(|d| d.0).collect();
        let dst: Vec<Point2H> = sample.iter().map(|d| d.1).collect();
        fit_affine(&src, &dst, self.frames)
    }

    fn residual(&self, model: &AffineTransform, datum: &(Point2H, Point2H)) -> f64 {
        model.apply(&datum.0).dist(&datum.1)
    }
}

/// Inlier threshold covering ~99% of pure-noise affine residuals: a residual
/// combines noise from both frames, so its per-axis deviation is about
/// `sigma * sqrt(2)`, and the 99% Rayleigh quantile sits near 3 of those.
pub fn noise_adapted_threshold(sigma: f64, floor: f64) -> f64 {
    floor.max(3.0 * std::f64::consts::SQRT_2 * sigma)
}

fn centroids(traj: &TrajectorySet, members: &[usize]) -> Vec<[f64; 2]> {
    let n = members.len() as f64;
    (0..traj.frame_count())
        .map(|t| {
            let (sx, sy) = members.iter().fold((0.0, 0.0), |(sx, sy), &k| {
                let [x, y] = traj.raw(k, t);
                (sx + x, sy + y)
            });
            [sx / n, sy / n]
        })
        .collect()
}

/// Builds atoms from `traj`. Deterministic given `cfg.seed`.
pub fn build_atoms(traj: &TrajectorySet, cfg: &AtomConstructionConfig) -> Result<AtomBuild> {
    cfg.validate()?;
    let k = traj.feature_count();
    let l = traj.frame_count();
    let sep = cfg.frame_separation(l);
    if sep >= l {
        return Err(Error::InvalidInput(format!(
            "need more than {sep} frames for the configured separation, got {l}"
        )));
    }
    let threshold = if cfg.noise_adaptive_threshold {
        noise_adapted_threshold(traj.noise_sigma_estimate(), cfg.min_inlier_threshold)
    } else {
        cfg.ransac.inlier_threshold
    };
    let mut atoms = Vec::new();
    if k < 3 {
        return Ok(AtomBuild {
            atoms,
            unassigned: (0..k).collect(),
            inlier_threshold: threshold,
        });
    }

    let pairs = separated_frame_pairs(l, sep);
    let mut rng = rng_from(derive_seed(cfg.seed, "atoms"));
    let mut excluded = vec![false; k];
    let mut joined = vec![false; k];
    let r2sq = cfg.r2 * cfg.r2;

    for _pass in 0..cfg.max_passes {
        let mut seeds: Vec<usize> = (0..k).filter(|&f| !joined[f] && !excluded[f]).collect();
        if seeds.is_empty() {
            break;
        }
        seeds.shuffle(&mut rng);
        for seed_feature in seeds {
            if joined[seed_feature] || excluded[seed_feature] {
                continue;
            }
            let frames = pairs[rng.random_range(0..pairs.len())];
            let ransac_seed = rng.random::<u64>();
            let center = traj.point(seed_feature, frames.l);
            let candidates: Vec<usize> = (0..k)
                .filter(|&f| {
                    if excluded[f] {
                        return false;
                    }
                    let p = traj.point(f, frames.l);
                    let (dx, dy) = (p.x - center.x, p.y - center.y);
                    dx * dx + dy * dy <= r2sq
                })
                .collect();
            if candidates.len() < 1 + cfg.min_neighbors {
                continue;
            }
            let data: Vec<(Point2H, Point2H)> = candidates
                .iter()
                .map(|&f| (traj.point(f, frames.l), traj.point(f, frames.r)))
                .collect();
            let estimator = AffineEstimator { frames };
            let rcfg = RansacConfig {
                inlier_threshold: threshold,
                seed: ransac_seed,
                ..cfg.ransac.clone()
            };
            let Ok(outcome) = ransac(&data, &estimator, &rcfg) else {
                continue;
            };
            let mut members: Vec<usize> = candidates
                .iter()
                .zip(&outcome.inliers)
                .filter(|(_, &inl)| inl)
                .map(|(&f, _)| f)
                .collect();
            if members.len() < 3 || !members.contains(&seed_feature) {
                continue;
            }
            // refit on the consensus set; keep the hypothesis if the refit
            // would push a member over the threshold
            let mut transform = outcome.model;
            if let Ok(refit) = fit_affine(
                &traj.points_at(&members, frames.l),
                &traj.points_at(&members, frames.r),
                frames,
            ) {
                let ok = members.iter().all(|&f| {
                    refit.apply(&traj.point(f, frames.l)).dist(&traj.point(f, frames.r)) <= threshold
                });
                if ok {
                    transform = refit;
                }
            }
            members.sort_unstable();
            for &f in &members {
                joined[f] = true;
                if traj.point(f, frames.l).dist(&center) < cfg.r1 {
                    excluded[f] = true;
                }
            }
            atoms.push(Atom {
                id: atoms.len(),
                centroid_per_frame: centroids(traj, &members),
                feature_ids: members,
                origin_feature: seed_feature,
                frames,
                transform,
            });
        }
    }

    let unassigned = (0..k).filter(|&f| !joined[f]).collect();
    Ok(AtomBuild {
        atoms,
        unassigned,
        inlier_threshold: threshold,
    })
}

fn centroid_dist2(a: &Atom, b: &Atom, frame: usize) -> f64 {
    let [ax, ay] = a.centroid_per_frame[frame];
    let [bx, by] = b.centroid_per_frame[frame];
    (ax - bx).powi(2) + (ay - by).powi(2)
}

/// Edges of the atom graph: each atom linked to its `k_neighbors` nearest
/// atoms (centroid distance in the first frame) plus every pair of atoms that
/// share a feature. Sorted, `i < j`, no duplicates.
pub fn atom_overlap_graph_edges(atoms: &[Atom], k_neighbors: usize) -> Vec<(usize, usize)> {
    let n = atoms.len();
    let mut edges = BTreeSet::new();
    if n < 2 {
        return Vec::new();
    }
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (centroid_dist2(&atoms[i], &atoms[j], 0), j))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(k_neighbors) {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    let max_feature = atoms
        .iter()
        .flat_map(|a| a.feature_ids.iter())
        .max()
        .copied()
        .unwrap_or(0);
    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); max_feature + 1];
    for (i, a) in atoms.iter().enumerate() {
        for &f in &a.feature_ids {
            owners[f].push(i);
        }
    }
    for list in owners {
        for (x, &i) in list.iter().enumerate() {
            for &j in &list[x + 1..] {
                edges.insert((i.min(j), i.max(j)));
            }
        }
    }
    edges.into_iter().collect()
}
