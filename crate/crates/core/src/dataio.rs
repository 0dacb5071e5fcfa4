//! Trajectory and label files, synthetic scenes, noise, and the
//! misclassification metric.
//!
//! Trajectory files are UTF-8 text:
//!
//! ```text
//! LAAV-TRAJ 1
//! K L C
//! x_1 y_1 x_2 y_2 ... x_L y_L | g     (K rows, "| g" optional)
//! ```
//!
//! Lines starting with `#` and blank lines are ignored. `C` may be 0 when
//! the motion count is unknown and no labels are given.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rv::{LabelSource, Labeling};
use crate::seed::{derive_seed, rng_from};
use crate::trajectory::TrajectorySet;

pub const TRAJ_MAGIC: &str = "LAAV-TRAJ 1";
pub const LABELS_MAGIC: &str = "LAAV-LABELS 1";

/// Non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| {
            let t = l.trim_start();
            !t.is_empty() && !t.starts_with('#')
        })
}

/// Whitespace-separated tokens with their 1-based byte columns.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s + 1, &line[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn parse_usize(line: usize, (col, tok): (usize, &str), what: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| parse_err(line, col, format!("expected {what}, found {tok:?}")))
}

pub fn parse_trajectories(text: &str) -> Result<TrajectorySet> {
    let mut lines = content_lines(text);
    let (ln, magic) = lines
        .next()
        .ok_or_else(|| parse_err(1, 1, "empty file"))?;
    if magic.trim() != TRAJ_MAGIC {
        return Err(parse_err(ln, 1, format!("expected header {TRAJ_MAGIC:?}")));
    }
    let (ln, dims) = lines
        .next()
        .ok_or_else(|| parse_err(ln + 1, 1, "missing 'K L C' line"))?;
    let toks = tokens(dims);
    if toks.len() != 3 {
        return Err(parse_err(ln, 1, "expected three integers 'K L C'"));
    }
    let k = parse_usize(ln, toks[0], "feature count K")?;
    let l = parse_usize(ln, toks[1], "frame count L")?;
    let c = parse_usize(ln, toks[2], "motion count C")?;
    if k == 0 || l < 2 {
        return Err(parse_err(ln, 1, "need K >= 1 and L >= 2"));
    }

    let mut points = Vec::with_capacity(k * l);
    let mut labels: Vec<Option<usize>> = Vec::with_capacity(k);
    let mut last_line = ln;
    for row in 0..k {
        let Some((ln, text)) = lines.next() else {
            return Err(parse_err(
                last_line + 1,
                1,
                format!("expected {k} feature rows, found {row}"),
            ));
        };
        last_line = ln;
        let toks = tokens(text);
        let bar = toks.iter().position(|&(_, t)| t == "|");
        let coords = &toks[..bar.unwrap_or(toks.len())];
        if coords.len() != 2 * l {
            return Err(Error::DimensionMismatch {
                line: ln,
                row,
                expected: 2 * l,
                found: coords.len(),
            });
        }
        for pair in coords.chunks(2) {
            let mut xy = [0.0; 2];
            for (slot, &(col, tok)) in xy.iter_mut().zip(pair) {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(ln, col, format!("bad coordinate {tok:?}")))?;
                if !v.is_finite() {
                    return Err(parse_err(ln, col, "coordinate is not finite"));
                }
                *slot = v;
            }
            points.push(xy);
        }
        labels.push(match bar {
            None => None,
            Some(b) => {
                let rest = &toks[b + 1..];
                if rest.len() != 1 {
                    let col = rest.get(1).or(toks.get(b)).map_or(1, |t| t.0);
                    return Err(parse_err(ln, col, "expected one label after '|'"));
                }
                let g = parse_usize(ln, rest[0], "ground-truth label")?;
                if g >= c {
                    return Err(parse_err(ln, rest[0].0, format!("label {g} outside [0, {c})")));
                }
                Some(g)
            }
        });
    }
    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(ln, 1, format!("more than {k} feature rows")));
    }
    let ground_truth = match labels.iter().filter(|g| g.is_some()).count() {
        0 => None,
        n if n == k => Some(labels.into_iter().map(Option::unwrap).collect()),
        _ => {
            return Err(parse_err(ln, 1, "ground-truth labels must be given on all rows or none"));
        }
    };
    TrajectorySet::new(points, k, l, ground_truth, c)
}

pub fn format_trajectories(traj: &TrajectorySet) -> String {
    let (k, l) = (traj.feature_count(), traj.frame_count());
    let mut s = String::with_capacity(k * l * 24);
    let _ = writeln!(s, "{TRAJ_MAGIC}");
    let _ = writeln!(s, "{k} {l} {}", traj.num_motions());
    for f in 0..k {
        for t in 0..l {
            let [x, y] = traj.raw(f, t);
            if t > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{x} {y}");
        }
        if let Some(gt) = traj.ground_truth() {
            let _ = write!(s, " | {}", gt[f]);
        }
        s.push('\n');
    }
    s
}

pub fn load_trajectories(path: &Path) -> Result<TrajectorySet> {
    parse_trajectories(&fs::read_to_string(path)?)
}

pub fn save_trajectories(traj: &TrajectorySet, path: &Path) -> Result<()> {
    fs::write(path, format_trajectories(traj))?;
    Ok(())
}

pub fn format_labels(labeling: &Labeling) -> String {
    let mut s = format!("{LABELS_MAGIC}\n");
    for (i, ((l, c), src)) in labeling
        .labels
        .iter()
        .zip(&labeling.confidence)
        .zip(&labeling.source)
        .enumerate()
    {
        let _ = writeln!(s, "{i} {l} {c:.6} {}", src.as_str());
    }
    s
}

pub fn parse_labels(text: &str) -> Result<Labeling> {
    let mut lines = content_lines(text);
    match lines.next() {
        Some((_, m)) if m.trim() == LABELS_MAGIC => {}
        Some((ln, _)) => return Err(parse_err(ln, 1, format!("expected header {LABELS_MAGIC:?}"))),
        None => return Err(parse_err(1, 1, "empty labels file")),
    }
    let mut out = Labeling {
        labels: Vec::new(),
        confidence: Vec::new(),
        source: Vec::new(),
    };
    for (ln, text) in lines {
        let toks = tokens(text);
        if toks.len() != 4 {
            return Err(parse_err(ln, 1, "expected 'id label confidence source'"));
        }
        let id = parse_usize(ln, toks[0], "feature id")?;
        if id != out.labels.len() {
            return Err(parse_err(ln, toks[0].0, format!("expected feature id {}", out.labels.len())));
        }
        out.labels.push(parse_usize(ln, toks[1], "label")?);
        let conf: f64 = toks[2]
            .1
            .parse()
            .ok()
            .filter(|c: &f64| c.is_finite())
            .ok_or_else(|| parse_err(ln, toks[2].0, "bad confidence"))?;
        out.confidence.push(conf);
        out.source.push(
            LabelSource::parse(toks[3].1)
                .ok_or_else(|| parse_err(ln, toks[3].0, format!("unknown source {:?}", toks[3].1)))?,
        );
    }
    Ok(out)
}

pub fn load_labels(path: &Path) -> Result<Labeling> {
    parse_labels(&fs::read_to_string(path)?)
}

pub fn save_labels(labeling: &Labeling, path: &Path) -> Result<()> {
    fs::write(path, format_labels(labeling))?;
    Ok(())
}

/// Evaluation summary written as `name value` lines; missing values are
/// written as `nan`.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Misclassification error; `None` when no ground truth is available.
    pub error_total: Option<f64>,
    pub num_motions: usize,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub seed: Option<u64>,
}

pub fn format_metrics(m: &Metrics) -> String {
    fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
        v.map_or_else(|| "nan".to_string(), |x| x.to_string())
    }
    let err = |v: Option<f64>| opt(v.map(|e| format!("{e:.6}")));
    let by_count = |c: usize| if m.num_motions == c { m.error_total } else { None };
    format!(
        "error_total {}\nerror_2motion {}\nerror_3motion {}\niterations {}\nconverged {}\nseed {}\n",
        err(m.error_total),
        err(by_count(2)),
        err(by_count(3)),
        opt(m.iterations),
        opt(m.converged.map(u8::from)),
        opt(m.seed)
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionKind {
    Translation,
    RotationTranslation,
    AffineDrift,
}

impl MotionKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "translation" => Some(Self::Translation),
            "rotation" | "rotation+translation" => Some(Self::RotationTranslation),
            "affine" | "affine-drift" => Some(Self::AffineDrift),
            _ => None,
        }
    }

    /// Default kind of the motion at `index`: one translation, then
    /// alternating rotations and drifts. Two pure translations share a
    /// fundamental matrix, so only the first motion is one.
    pub fn cycled(index: usize) -> Self {
        match index {
            0 => Self::Translation,
            i if i % 2 == 1 => Self::RotationTranslation,
            _ => Self::AffineDrift,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub features_per_motion: Vec<usize>,
    pub frames: usize,
    /// One per motion; empty means [`MotionKind::cycled`].
    pub motion_kinds: Vec<MotionKind>,
    /// `(width, height)` in pixels; `None` sizes the view for one feature
    /// per 400 px² on average.
    pub field_of_view: Option<(f64, f64)>,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(features_per_motion: Vec<usize>, frames: usize, seed: u64) -> Self {
        Self {
            features_per_motion,
            frames,
            motion_kinds: Vec::new(),
            field_of_view: None,
            seed,
        }
    }

    pub fn num_motions(&self) -> usize {
        self.features_per_motion.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.num_motions();
        if c == 0 {
            return Err(Error::InvalidInput("scene needs at least one motion".into()));
        }
        if let Some(&n) = self.features_per_motion.iter().find(|&&n| n < 10) {
            return Err(Error::InvalidInput(format!(
                "every motion needs at least 10 features, got {n}"
            )));
        }
        if self.frames < 5 {
            return Err(Error::InvalidInput(format!(
                "scene needs at least 5 frames, got {}",
                self.frames
            )));
        }
        if !self.motion_kinds.is_empty() && self.motion_kinds.len() != c {
            return Err(Error::InvalidInput(format!(
                "{} motion kinds for {c} motions",
                self.motion_kinds.len()
            )));
        }
        if let Some((w, h)) = self.field_of_view {
            if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
                return Err(Error::InvalidInput("field of view must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn kind(&self, m: usize) -> MotionKind {
        self.motion_kinds.get(m).copied().unwrap_or(MotionKind::cycled(m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearPart {
    Identity,
    /// Rotation by `omega` radians per frame.
    Rotation(f64),
    /// Per-frame linear step `M`, applied `t` times by frame `t`.
    Drift([[f64; 2]; 2]),
}

/// A planar motion `p_t = A_t (p_0 - c) + c + t v`, where `A_t` is the
/// linear part accumulated over `t` frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarMotion {
    pub linear: LinearPart,
    pub center: [f64; 2],
    pub velocity: [f64; 2],
}

impl PlanarMotion {
    pub fn position(&self, p0: [f64; 2], t: usize) -> [f64; 2] {
        let mut q = [p0[0] - self.center[0], p0[1] - self.center[1]];
        match self.linear {
            LinearPart::Identity => {}
            LinearPart::Rotation(w) => {
                let (s, c) = (w * t as f64).sin_cos();
                q = [c * q[0] - s * q[1], s * q[0] + c * q[1]];
            }
            LinearPart::Drift(m) => {
                for _ in 0..t {
                    q = [m[0][0] * q[0] + m[0][1] * q[1], m[1][0] * q[0] + m[1][1] * q[1]];
                }
            }
        }
        let tf = t as f64;
        [
            q[0] + self.center[0] + tf * self.velocity[0],
            q[1] + self.center[1] + tf * self.velocity[1],
        ]
    }
}

fn signed_magnitude<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let v = rng.random_range(lo..hi);
    if rng.random::<bool>() {
        v
    } else {
        -v
    }
}

/// Angular rates in rad/frame: zero for translations, otherwise in
/// [0.02, 0.05] with random sign, resampled until every pair involving a
/// non-translation differs by at least `MIN_RATE_GAP`. Motions whose linear
/// parts rotate at the same rate are nearly indistinguishable epipolarly.
fn angular_rates<R: Rng>(rng: &mut R, kinds: &[MotionKind]) -> Vec<f64> {
    const MIN_RATE_GAP: f64 = 0.02;
    let mut rates = vec![0.0; kinds.len()];
    for _ in 0..1000 {
        for (r, &kind) in rates.iter_mut().zip(kinds) {
            *r = match kind {
                MotionKind::Translation => 0.0,
                _ => signed_magnitude(rng, 0.02, 0.05),
            };
        }
        let separated = (0..kinds.len()).all(|i| {
            (i + 1..kinds.len()).all(|j| {
                let both_translations =
                    kinds[i] == MotionKind::Translation && kinds[j] == MotionKind::Translation;
                both_translations || (rates[i] - rates[j]).abs() >= MIN_RATE_GAP
            })
        });
        if separated {
            break;
        }
    }
    rates
}

fn random_motion<R: Rng>(rng: &mut R, kind: MotionKind, rate: f64, center: [f64; 2], velocity: [f64; 2]) -> PlanarMotion {
    let linear = match kind {
        MotionKind::Translation => LinearPart::Identity,
        MotionKind::RotationTranslation => LinearPart::Rotation(rate),
        MotionKind::AffineDrift => {
            // rotation composed with an anisotropic stretch along a random axis
            let (l1, l2) = loop {
                let a = signed_magnitude(rng, 0.004, 0.012);
                let b = signed_magnitude(rng, 0.004, 0.012);
                if (a - b).abs() >= 0.004 {
                    break (a, b);
                }
            };
            let th: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let (c, s) = (th.cos(), th.sin());
            let st = [
                [1.0 + l1 * c * c + l2 * s * s, (l1 - l2) * c * s],
                [(l1 - l2) * c * s, 1.0 + l1 * s * s + l2 * c * c],
            ];
            let (rs, rc) = rate.sin_cos();
            LinearPart::Drift([
                [rc * st[0][0] - rs * st[1][0], rc * st[0][1] - rs * st[1][1]],
                [rs * st[0][0] + rc * st[1][0], rs * st[0][1] + rc * st[1][1]],
            ])
        }
    };
    PlanarMotion {
        linear,
        center,
        velocity,
    }
}

/// Per-motion velocities on a regular polygon of random phase and radius in
/// [3.5, 5] px/frame, so distinct motions differ by at least 4 px/frame for
/// up to 5 motions.
fn motion_velocities<R: Rng>(rng: &mut R, c: usize) -> Vec<[f64; 2]> {
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let radius: f64 = rng.random_range(3.5..5.0);
    (0..c)
        .map(|m| {
            let a = phase + std::f64::consts::TAU * m as f64 / c as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect()
}

/// A generated scene with its motion parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub trajectories: TrajectorySet,
    pub motions: Vec<PlanarMotion>,
}

/// Motions occupy side-by-side vertical strips (widths proportional to their
/// feature counts) and features are drawn uniformly inside their strip at
/// frame 0. Feature order is shuffled.
pub fn synth_scene_detailed(spec: &SceneSpec) -> Result<SynthScene> {
    spec.validate()?;
    let c = spec.num_motions();
    let k: usize = spec.features_per_motion.iter().sum();
    let l = spec.frames;
    let (width, height) = spec.field_of_view.unwrap_or_else(|| {
        let area = k as f64 * 400.0;
        let h = (area / c as f64).sqrt();
        (area / h, h)
    });
    let mut rng = rng_from(derive_seed(spec.seed, "synth"));
    let velocities = motion_velocities(&mut rng, c);
    let kinds: Vec<MotionKind> = (0..c).map(|m| spec.kind(m)).collect();
    let rates = angular_rates(&mut rng, &kinds);

    let mut rows: Vec<(usize, [f64; 2])> = Vec::with_capacity(k);
    let mut motions = Vec::with_capacity(c);
    let mut x0 = 0.0;
    for (m, &n) in spec.features_per_motion.iter().enumerate() {
        let w = width * n as f64 / k as f64;
        let center = [x0 + w / 2.0, height / 2.0];
        motions.push(random_motion(&mut rng, kinds[m], rates[m], center, velocities[m]));
        for _ in 0..n {
            rows.push((m, [x0 + rng.random_range(0.0..w), rng.random_range(0.0..height)]));
        }
        x0 += w;
    }
    rows.shuffle(&mut rng);

    let mut points = Vec::with_capacity(k * l);
    for &(m, p0) in &rows {
        for t in 0..l {
            points.push(motions[m].position(p0, t));
        }
    }
    let gt = rows.iter().map(|r| r.0).collect();
    Ok(SynthScene {
        trajectories: TrajectorySet::new(points, k, l, Some(gt), c)?,
        motions,
    })
}

pub fn synth_scene(spec: &SceneSpec) -> Result<TrajectorySet> {
    synth_scene_detailed(spec).map(|s| s.trajectories)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma` to every
/// coordinate. `sigma == 0` returns the input unchanged.
pub fn add_noise(traj: &TrajectorySet, noise: &NoiseSpec) -> Result<TrajectorySet> {
    if !(noise.sigma >= 0.0 && noise.sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("noise sigma must be >= 0, got {}", noise.sigma)));
    }
    if noise.sigma == 0.0 {
        return Ok(traj.clone());
    }
    let normal = Normal::new(0.0, noise.sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = rng_from(derive_seed(noise.seed, "noise"));
    let points = traj
        .raw_points()
        .iter()
        .map(|&[x, y]| [x + normal.sample(&mut rng), y + normal.sample(&mut rng)])
        .collect();
    traj.with_points(points)
}

/// Fraction of features mislabeled under the best one-to-one relabeling of
/// `predicted`, found by trying every permutation.
pub fn misclassification_error(predicted: &[usize], truth: &[usize], num_motions: usize) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "{} predicted labels for {} features",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let n = predicted
        .iter()
        .chain(truth)
        .map(|&l| l + 1)
        .max()
        .unwrap_or(0)
        .max(num_motions);
    if n > 8 {
        return Err(Error::InvalidInput(format!("{n} label values is too many to permute")));
    }
    let mut confusion = vec![vec![0usize; n]; n];
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[p][t] += 1;
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = 0;
    for_each_permutation(&mut perm, 0, &mut |p| {
        let hits: usize = (0..n).map(|i| confusion[i][p[i]]).sum();
        best = best.max(hits);
    });
    Ok((truth.len() - best) as f64 / truth.len() as f64)
}

fn for_each_permutation(perm: &mut [usize], k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == perm.len() {
        f(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        for_each_permutation(perm, k + 1, f);
        perm.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{estimate_fundamental, FramePair};

    #[test]
    fn minimal_file_parses() {
        let t = parse_trajectories("LAAV-TRAJ 1\n3 2 0\n0 0 1 1\n2 2 3 3\n4 4 5 5\n").unwrap();
        assert_eq!((t.feature_count(), t.frame_count()), (3, 2));
        assert!(t.ground_truth().is_none());
    }

    #[test]
    fn labels_column_and_comments() {
        let text = "# header comment\nLAAV-TRAJ 1\n2 2 2\n\n0 0 1 1 | 1\n# mid\n2 2 3 3 | 0\n";
        let t = parse_trajectories(text).unwrap();
        assert_eq!(t.ground_truth(), Some(&[1, 0][..]));
    }

    #[test]
    fn truncated_row_names_the_row() {
        let err = parse_trajectories("LAAV-TRAJ 1\n2 2 0\n0 0 1 1\n2 2 3\n").unwrap_err();
        assert_eq!(
            err,
            Error::DimensionMismatch {
                line: 4,
                row: 1,
                expected: 4,
                found: 3
            }
        );
    }

    #[test]
    fn parse_errors_have_positions() {
        let err = parse_trajectories("LAAV-TRAJ 1\n1 2 0\n0 x 1 1\n").unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                line: 3,
                column: 3,
                message: "bad coordinate \"x\"".into()
            }
        );
        assert!(matches!(parse_trajectories("LAAV-TRAJ 2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_trajectories("LAAV-TRAJ 1\n2 2 0\n0 0 1 1\n"),
            Err(Error::Parse { line: 4, .. })
        ));
        assert!(parse_trajectories("LAAV-TRAJ 1\n1 2 1\n0 0 1 1 | 1\n").is_err());
        assert!(parse_trajectories("LAAV-TRAJ 1\n2 2 1\n0 0 1 1 | 0\n0 0 1 1\n").is_err());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut spec = SceneSpec::new(vec![12, 15], 6, 3);
        spec.field_of_view = Some((333.3, 171.7));
        let t = add_noise(&synth_scene(&spec).unwrap(), &NoiseSpec { sigma: 0.7, seed: 1 }).unwrap();
        let back = parse_trajectories(&format_trajectories(&t)).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn labels_round_trip() {
        let lab = Labeling {
            labels: vec![0, 1, 1],
            confidence: vec![1.0, 0.5, 0.25],
            source: vec![LabelSource::AtomDerived, LabelSource::RvAssigned, LabelSource::AtomDerived],
        };
        let text = format_labels(&lab);
        assert!(text.starts_with("LAAV-LABELS 1\n0 0 1.000000 atom\n1 1 0.500000 rv\n"));
        assert_eq!(parse_labels(&text).unwrap(), lab);
    }

    #[test]
    fn metrics_lines() {
        let m = Metrics {
            error_total: Some(0.0125),
            num_motions: 2,
            iterations: Some(7),
            converged: Some(true),
            seed: Some(9),
        };
        assert_eq!(
            format_metrics(&m),
            "error_total 0.012500\nerror_2motion 0.012500\nerror_3motion nan\niterations 7\nconverged 1\nseed 9\n"
        );
        let bare = Metrics {
            error_total: None,
            num_motions: 3,
            iterations: None,
            converged: None,
            seed: None,
        };
        assert_eq!(
            format_metrics(&bare),
            "error_total nan\nerror_2motion nan\nerror_3motion nan\niterations nan\nconverged nan\nseed nan\n"
        );
    }

    #[test]
    fn single_translation_scene() {
        let mut spec = SceneSpec::new(vec![20], 8, 1);
        spec.motion_kinds = vec![MotionKind::Translation];
        let s = synth_scene_detailed(&spec).unwrap();
        let v = s.motions[0].velocity;
        let t = &s.trajectories;
        for f in 0..t.feature_count() {
            for fr in 1..t.frame_count() {
                let (a, b) = (t.raw(f, fr - 1), t.raw(f, fr));
                assert!((b[0] - a[0] - v[0]).abs() < 1e-12 && (b[1] - a[1] - v[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rotation_field_matches_closed_form() {
        let mut spec = SceneSpec::new(vec![15, 15, 15], 10, 4);
        spec.motion_kinds = vec![MotionKind::Translation, MotionKind::RotationTranslation, MotionKind::Translation];
        let s = synth_scene_detailed(&spec).unwrap();
        let t = &s.trajectories;
        let m = s.motions[1];
        let LinearPart::Rotation(omega) = m.linear else {
            panic!("expected a rotation");
        };
        let gt = t.ground_truth().unwrap();
        for f in (0..t.feature_count()).filter(|&f| gt[f] == 1) {
            let p0 = t.raw(f, 0);
            let (qx, qy) = (p0[0] - m.center[0], p0[1] - m.center[1]);
            for fr in 0..t.frame_count() - 1 {
                let a = omega * fr as f64;
                let (rx, ry) = (a.cos() * qx - a.sin() * qy, a.sin() * qx + a.cos() * qy);
                let dx = (omega.cos() - 1.0) * rx - omega.sin() * ry + m.velocity[0];
                let dy = omega.sin() * rx + (omega.cos() - 1.0) * ry + m.velocity[1];
                let (p, q) = (t.raw(f, fr), t.raw(f, fr + 1));
                assert!((q[0] - p[0] - dx).abs() < 1e-12, "{} vs {dx}", q[0] - p[0]);
                assert!((q[1] - p[1] - dy).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn velocities_are_separated() {
        for c in 2..=5 {
            let mut rng = rng_from(c as u64);
            let v = motion_velocities(&mut rng, c);
            for i in 0..c {
                for j in i + 1..c {
                    let d = ((v[i][0] - v[j][0]).powi(2) + (v[i][1] - v[j][1]).powi(2)).sqrt();
                    assert!(d >= 4.0, "{c}: {d}");
                }
            }
        }
    }

    #[test]
    fn each_motion_satisfies_an_epipolar_constraint() {
        let t = synth_scene(&SceneSpec::new(vec![30, 30, 30], 12, 5)).unwrap();
        let gt = t.ground_truth().unwrap();
        let fp = FramePair::new(1, 9);
        for m in 0..3 {
            let ids: Vec<usize> = (0..t.feature_count()).filter(|&f| gt[f] == m).collect();
            let (a, b) = (t.points_at(&ids, fp.l), t.points_at(&ids, fp.r));
            let f = estimate_fundamental(&a, &b, fp).unwrap();
            for (p, q) in a.iter().zip(&b) {
                assert!(f.sampson(p, q).unwrap() < 1e-6);
            }
        }
    }

    #[test]
    fn synth_validation() {
        assert!(synth_scene(&SceneSpec::new(vec![9], 10, 0)).is_err());
        assert!(synth_scene(&SceneSpec::new(vec![10], 4, 0)).is_err());
        assert!(synth_scene(&SceneSpec::new(vec![], 10, 0)).is_err());
    }

    #[test]
    fn synth_is_deterministic_and_shuffled() {
        let spec = SceneSpec::new(vec![40, 40], 10, 11);
        let a = synth_scene(&spec).unwrap();
        assert_eq!(a, synth_scene(&spec).unwrap());
        let gt = a.ground_truth().unwrap();
        assert!(gt[..40].contains(&1));
    }

    #[test]
    fn noise_statistics() {
        let pts = vec![[0.0, 0.0]; 50_000];
        let t = TrajectorySet::new(pts, 25_000, 2, None, 0).unwrap();
        assert_eq!(add_noise(&t, &NoiseSpec { sigma: 0.0, seed: 3 }).unwrap(), t);
        let n = add_noise(&t, &NoiseSpec { sigma: 1.0, seed: 3 }).unwrap();
        let v: Vec<f64> = n.raw_points().iter().flatten().copied().collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        assert!(mean.abs() < 0.05 && (0.95..=1.05).contains(&std), "{mean} {std}");
        assert_eq!(n, add_noise(&t, &NoiseSpec { sigma: 1.0, seed: 3 }).unwrap());
        assert!(add_noise(&t, &NoiseSpec { sigma: -1.0, seed: 3 }).is_err());
    }

    #[test]
    fn error_metric_examples() {
        let truth = [0, 0, 1, 1, 0, 1, 0, 1, 0, 1];
        assert_eq!(misclassification_error(&truth, &truth, 2).unwrap(), 0.0);
        let swapped: Vec<usize> = truth.iter().map(|&l| 1 - l).collect();
        assert_eq!(misclassification_error(&swapped, &truth, 2).unwrap(), 0.0);
        let mut one_off = truth;
        one_off[3] = 0;
        assert!((misclassification_error(&one_off, &truth, 2).unwrap() - 0.1).abs() < 1e-15);
        assert!(misclassification_error(&[0], &truth, 2).is_err());
    }
}
