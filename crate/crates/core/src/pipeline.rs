//! End-to-end segmentation: atoms, fine models, coarse motions, refinement.

use crate::atoms::{build_atoms, AtomBuild, AtomConstructionConfig};
use crate::error::{Error, Result};
use crate::fine2coarse::{accumulate_affinity, build_motion_models, coarsen, VotingParams};
use crate::multicut::{fine_models_from_atoms, FineModelConfig};
use crate::numerics::SymmetricMatrix;
use crate::rv::{finetune, Labeling, RvParams, MIN_GROUP_SAMPLE};
use crate::seed::derive_seed;
use crate::trajectory::TrajectorySet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RvInit {
    /// Start from the labels of atom-covered features.
    Atoms,
    /// Start from a random grouping of all features.
    Random,
}

impl RvInit {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "atoms" => Some(Self::Atoms),
            "random" => Some(Self::Random),
            _ => None,
        }
    }
}

/// Configuration of every stage. Stage seeds are derived from `seed`; the
/// `seed` fields inside the stage configs are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// `None` takes the motion count from the trajectory set.
    pub num_motions: Option<usize>,
    pub seed: u64,
    pub atoms: AtomConstructionConfig,
    pub fine: FineModelConfig,
    pub voting: VotingParams,
    pub rv: RvParams,
    pub rv_init: RvInit,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            num_motions: None,
            seed: 0,
            atoms: AtomConstructionConfig::default(),
            fine: FineModelConfig::default(),
            voting: VotingParams::default(),
            rv: RvParams::default(),
            rv_init: RvInit::Atoms,
        }
    }
}

/// Per-stage seeds derived from one top-level seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSeeds {
    pub atoms: u64,
    pub voting: u64,
    pub coarsen: u64,
    pub rv: u64,
}

impl StageSeeds {
    pub fn derive(seed: u64) -> Self {
        Self {
            atoms: derive_seed(seed, "atoms"),
            voting: derive_seed(seed, "fine2coarse"),
            coarsen: derive_seed(seed, "coarsen"),
            rv: derive_seed(seed, "rv"),
        }
    }
}

/// Intermediate results, one snapshot per stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Stages {
    pub atoms: AtomBuild,
    /// Fine model per atom (empty when too few atoms were found).
    pub fine_atom_labels: Vec<usize>,
    pub affinity: Option<SymmetricMatrix>,
    /// Coarse motion per fine model.
    pub coarse_model_labels: Vec<usize>,
    /// Per-feature fine model, `None` for features in no atom.
    pub fine_feature_labels: Vec<Option<usize>>,
    /// Per-feature coarse motion before refinement.
    pub coarse_feature_labels: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub labeling: Labeling,
    pub num_motions: usize,
    pub iterations: usize,
    pub trials: usize,
    pub converged: bool,
    /// Refinement started from a random grouping because the atom stages
    /// could not produce labels.
    pub random_fallback: bool,
    pub stages: Stages,
}

/// Majority label over the atoms containing each feature (ties to the lowest
/// label); `None` for features in no atom.
pub fn feature_labels_from_atoms(
    feature_count: usize,
    atoms: &AtomBuild,
    atom_labels: &[usize],
    label_count: usize,
) -> Vec<Option<usize>> {
    let mut votes = vec![vec![0usize; label_count]; feature_count];
    for (atom, &l) in atoms.atoms.iter().zip(atom_labels) {
        for &f in &atom.feature_ids {
            votes[f][l] += 1;
        }
    }
    votes
        .iter()
        .map(|v| {
            let (best, &count) = v.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
            (count > 0).then_some(best)
        })
        .collect()
}

pub fn segment(traj: &TrajectorySet, cfg: &PipelineConfig) -> Result<Segmentation> {
    let c = cfg.num_motions.unwrap_or(traj.num_motions());
    if c == 0 {
        return Err(Error::InvalidInput("motion count unknown: supply it or put it in the file".into()));
    }
    let k = traj.feature_count();
    if k < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 features to form atoms, got {k}")));
    }
    if k < MIN_GROUP_SAMPLE * c {
        return Err(Error::InvalidInput(format!(
            "need at least {} features for {c} motions, got {k}",
            MIN_GROUP_SAMPLE * c
        )));
    }
    let seeds = StageSeeds::derive(cfg.seed);
    let atoms = build_atoms(
        traj,
        &AtomConstructionConfig {
            seed: seeds.atoms,
            ..cfg.atoms.clone()
        },
    )?;

    let mut stages = Stages {
        atoms,
        fine_atom_labels: Vec::new(),
        affinity: None,
        coarse_model_labels: Vec::new(),
        fine_feature_labels: vec![None; k],
        coarse_feature_labels: vec![None; k],
    };
    let random_fallback = stages.atoms.atoms.len() < 2 * c;
    if !random_fallback {
        let atom_list = &stages.atoms.atoms;
        let fine_cfg = FineModelConfig {
            weight_scale: cfg.fine.effective_scale(stages.atoms.inlier_threshold),
            ..cfg.fine.clone()
        };
        let fine = fine_models_from_atoms(atom_list, traj, c, &fine_cfg)?;
        let models = build_motion_models(atom_list, &fine.atom_labels, fine.model_count)?;
        let voting = VotingParams {
            seed: seeds.voting,
            ..cfg.voting.clone()
        };
        let z = accumulate_affinity(&models, atom_list, traj, &voting)?;
        let coarse = coarsen(&z, c.min(models.len()), seeds.coarsen)?;
        let coarse_atoms: Vec<usize> = fine.atom_labels.iter().map(|&m| coarse[m]).collect();
        stages.fine_feature_labels = feature_labels_from_atoms(k, &stages.atoms, &fine.atom_labels, fine.model_count);
        stages.coarse_feature_labels = feature_labels_from_atoms(k, &stages.atoms, &coarse_atoms, c);
        stages.fine_atom_labels = fine.atom_labels;
        stages.affinity = Some(z);
        stages.coarse_model_labels = coarse;
    }

    let initial = match (cfg.rv_init, random_fallback) {
        (RvInit::Atoms, false) => stages.coarse_feature_labels.clone(),
        _ => vec![None; k],
    };
    let rv = RvParams {
        seed: seeds.rv,
        ..cfg.rv.clone()
    };
    let out = finetune(traj, &initial, c, &rv)?;
    Ok(Segmentation {
        labeling: out.labeling,
        num_motions: c,
        iterations: out.iterations,
        trials: out.trials,
        converged: out.converged,
        random_fallback,
        stages,
    })
}
