//! Affine and epipolar two-view geometry.

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};
use crate::numerics::{solve_least_squares, Mat3};

/// Ordered pair of frame indices `(l, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FramePair {
    pub l: usize,
    pub r: usize,
}

impl FramePair {
    pub fn new(l: usize, r: usize) -> Self {
        Self { l, r }
    }

    pub fn reversed(self) -> Self {
        Self {
            l: self.r,
            r: self.l,
        }
    }
}

/// Image point in pixels; the homogeneous coordinate is implicitly 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2H {
    pub x: f64,
    pub y: f64,
}

impl Point2H {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn homogeneous(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, 1.0)
    }

    pub fn dist(&self, other: &Point2H) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// 2x3 affine map `p -> L p + t` between two frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    linear: [[f64; 2]; 2],
    translation: [f64; 2],
    frames: FramePair,
}

const MIN_AFFINE_DET: f64 = 1e-12;

impl AffineTransform {
    pub fn new(linear: [[f64; 2]; 2], translation: [f64; 2], frames: FramePair) -> Result<Self> {
        let det = linear[0][0] * linear[1][1] - linear[0][1] * linear[1][0];
        if !(det.abs() > MIN_AFFINE_DET) {
            return Err(Error::DegenerateConfiguration(format!(
                "affine linear part is singular (det {det:e})"
            )));
        }
        if frames.l == frames.r {
            return Err(Error::InvalidInput("affine transform needs distinct frames".into()));
        }
        if linear.iter().flatten().chain(&translation).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("affine parameters must be finite".into()));
        }
        Ok(Self {
            linear,
            translation,
            frames,
        })
    }

    pub fn identity(frames: FramePair) -> Result<Self> {
        Self::new([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0], frames)
    }

    pub fn translation(dx: f64, dy: f64, frames: FramePair) -> Result<Self> {
        Self::new([[1.0, 0.0], [0.0, 1.0]], [dx, dy], frames)
    }

    pub fn linear(&self) -> [[f64; 2]; 2] {
        self.linear
    }

    pub fn offset(&self) -> [f64; 2] {
        self.translation
    }

    pub fn frames(&self) -> FramePair {
        self.frames
    }

    /// The six parameters in row-major 2x3 order.
    pub fn params(&self) -> [f64; 6] {
        let [[a, b], [c, d]] = self.linear;
        let [tx, ty] = self.translation;
        [a, b, tx, c, d, ty]
    }

    pub fn apply(&self, p: &Point2H) -> Point2H {
        let [[a, b], [c, d]] = self.linear;
        Point2H::new(
            a * p.x + b * p.y + self.translation[0],
            c * p.x + d * p.y + self.translation[1],
        )
    }

    pub fn inverse(&self) -> AffineTransform {
        let [[a, b], [c, d]] = self.linear;
        let det = a * d - b * c;
        let inv = [[d / det, -b / det], [-c / det, a / det]];
        let [tx, ty] = self.translation;
        AffineTransform {
            linear: inv,
            translation: [
                -(inv[0][0] * tx + inv[0][1] * ty),
                -(inv[1][0] * tx + inv[1][1] * ty),
            ],
            frames: self.frames.reversed(),
        }
    }

    pub fn to_mat3(&self) -> Mat3 {
        let [[a, b], [c, d]] = self.linear;
        let [tx, ty] = self.translation;
        Mat3::new(a, b, tx, c, d, ty, 0.0, 0.0, 1.0)
    }
}

pub fn apply_affine(t: &AffineTransform, p: &Point2H) -> Point2H {
    t.apply(p)
}

/// Least-squares affine map taking `src[i]` to `dst[i]`.
pub fn fit_affine(src: &[Point2H], dst: &[Point2H], frames: FramePair) -> Result<AffineTransform> {
    if src.len() != dst.len() {
        return Err(Error::InvalidInput(format!(
            "fit_affine: {} source vs {} target points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::DegenerateConfiguration(format!(
            "affine fit needs >= 3 points, got {}",
            src.len()
        )));
    }
    let n = src.len();
    // center the source points so the design matrix is well conditioned
    let cx = src.iter().map(|p| p.x).sum::<f64>() / n as f64;
    let cy = src.iter().map(|p| p.y).sum::<f64>() / n as f64;
    let a = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => src[i].x - cx,
        1 => src[i].y - cy,
        _ => 1.0,
    });
    let bx: Vec<f64> = dst.iter().map(|p| p.x).collect();
    let by: Vec<f64> = dst.iter().map(|p| p.y).collect();
    let degenerate =
        |_| Error::DegenerateConfiguration("collinear or coincident source points".into());
    let rx = solve_least_squares(&a, &bx).map_err(degenerate)?;
    let ry = solve_least_squares(&a, &by).map_err(degenerate)?;
    let linear = [[rx.x[0], rx.x[1]], [ry.x[0], ry.x[1]]];
    let translation = [
        rx.x[2] - rx.x[0] * cx - rx.x[1] * cy,
        ry.x[2] - ry.x[0] * cx - ry.x[1] * cy,
    ];
    AffineTransform::new(linear, translation, frames)
}

/// Mean round-trip displacement `|t_ba(t_ab(p)) - p|` over `src`, and the same
/// in the other direction over `dst`; the larger of the two is returned.
pub fn forward_backward_error(
    t_ab: &AffineTransform,
    src: &[Point2H],
    dst: &[Point2H],
    t_ba: &AffineTransform,
) -> f64 {
    let mean = |pts: &[Point2H], first: &AffineTransform, second: &AffineTransform| {
        if pts.is_empty() {
            return 0.0;
        }
        pts.iter()
            .map(|p| second.apply(&first.apply(p)).dist(p))
            .sum::<f64>()
            / pts.len() as f64
    };
    mean(src, t_ab, t_ba).max(mean(dst, t_ba, t_ab))
}

/// Rank-2 fundamental matrix with unit Frobenius norm, relating points of
/// frame `l` (right-multiplied) to frame `r` (left-multiplied): `y_r^T F y_l = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix {
    m: Mat3,
    frames: FramePair,
}

impl FundamentalMatrix {
    /// Projects an arbitrary 3x3 matrix onto rank 2 and fixes its scale.
    pub fn from_matrix(m: Mat3, frames: FramePair) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("fundamental matrix must be finite".into()));
        }
        let svd = m.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut s = svd.singular_values;
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        if !(s[idx[1]] > 1e-12 * s[idx[0]]) {
            return Err(Error::DegenerateConfiguration(
                "fundamental matrix has rank < 2".into(),
            ));
        }
        s[idx[2]] = 0.0;
        let f = u * Mat3::from_diagonal(&s) * vt;
        let norm = f.norm();
        Ok(Self {
            m: f / norm,
            frames,
        })
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.m
    }

    pub fn frames(&self) -> FramePair {
        self.frames
    }

    /// Epipolar line `F y_l` in frame `r`.
    pub fn epipolar_line(&self, y_l: &Point2H) -> Vector3<f64> {
        self.m * y_l.homogeneous()
    }

    pub fn sampson(&self, y_l: &Point2H, y_r: &Point2H) -> Result<f64> {
        sampson_distance(&self.m, y_l, y_r)
    }

    /// Singular values, largest first.
    pub fn singular_values(&self) -> [f64; 3] {
        let s = self.m.singular_values();
        let mut v = [s[0], s[1], s[2]];
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }
}

/// First-order geometric error of the correspondence `y1 -> y2` under `f`:
/// `(y2^T F y1)^2 / ((F y1)_1^2 + (F y1)_2^2 + (F^T y2)_1^2 + (F^T y2)_2^2)`.
pub fn sampson_distance(f: &Mat3, y1: &Point2H, y2: &Point2H) -> Result<f64> {
    let h1 = y1.homogeneous();
    let h2 = y2.homogeneous();
    let fy1 = f * h1;
    let fty2 = f.transpose() * h2;
    let num = h2.dot(&fy1);
    let denom = fy1[0] * fy1[0] + fy1[1] * fy1[1] + fty2[0] * fty2[0] + fty2[1] * fty2[1];
    if !(denom > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    Ok(num * num / denom)
}

/// Similarity taking the centroid to the origin and the RMS radius to sqrt(2).
fn hartley_normalization(pts: &[Point2H]) -> Result<Mat3> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let ms = pts
        .iter()
        .map(|p| (p.x - cx).powi(2) + (p.y - cy).powi(2))
        .sum::<f64>()
        / n;
    if !(ms > 0.0) {
        return Err(Error::DegenerateConfiguration("all points coincide".into()));
    }
    let s = (2.0 / ms).sqrt();
    Ok(Mat3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

/// Smallest design-matrix rank accepted by [`estimate_fundamental`]. A single
/// planar (homography-related) motion yields rank 6, which still pins every
/// correspondence to zero residual, so only configurations below that count
/// as degenerate.
const MIN_DESIGN_RANK: usize = 6;

/// Normalized 8-point estimate with rank-2 enforcement.
pub fn estimate_fundamental(
    pts_l: &[Point2H],
    pts_r: &[Point2H],
    frames: FramePair,
) -> Result<FundamentalMatrix> {
    if pts_l.len() != pts_r.len() {
        return Err(Error::InvalidInput(format!(
            "estimate_fundamental: {} vs {} points",
            pts_l.len(),
            pts_r.len()
        )));
    }
    let n = pts_l.len();
    if n < 8 {
        return Err(Error::InvalidInput(format!(
            "fundamental matrix needs >= 8 correspondences, got {n}"
        )));
    }
    let t_l = hartley_normalization(pts_l)?;
    let t_r = hartley_normalization(pts_r)?;

    // zero rows pad the system to 9 so the SVD exposes the full right basis
    let rows = n.max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (pl, pr)) in pts_l.iter().zip(pts_r).enumerate() {
        let u = t_l * pl.homogeneous();
        let v = t_r * pr.homogeneous();
        let (x1, y1) = (u[0] / u[2], u[1] / u[2]);
        let (x2, y2) = (v[0] / v[2], v[1] / v[2]);
        let row = [x2 * x1, x2 * y1, x2, y2 * x1, y2 * y1, y2, x1, y1, 1.0];
        for (j, val) in row.into_iter().enumerate() {
            a[(i, j)] = val;
        }
    }
    let svd = a.svd(false, true);
    let vt = svd
        .v_t
        .ok_or_else(|| Error::DegenerateConfiguration("svd failed".into()))?;
    let sv = &svd.singular_values;
    let smax = sv.max();
    let rank = sv.iter().filter(|&&s| s > 1e-10 * smax).count();
    if rank < MIN_DESIGN_RANK {
        return Err(Error::DegenerateConfiguration(format!(
            "design matrix rank {rank} < {MIN_DESIGN_RANK}"
        )));
    }
    let min_idx = (0..sv.len())
        .min_by(|&i, &j| sv[i].total_cmp(&sv[j]).then(j.cmp(&i)))
        .unwrap();
    let f = vt.row(min_idx);
    let f_norm = Mat3::new(f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8]);
    let f_rank2 = *FundamentalMatrix::from_matrix(f_norm, frames)?.matrix();
    // the similarity transforms preserve rank; only the scale needs fixing
    let f = t_r.transpose() * f_rank2 * t_l;
    Ok(FundamentalMatrix {
        m: f / f.norm(),
        frames,
    })
}
