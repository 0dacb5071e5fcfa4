//! Dense linear-algebra kernels, a generic RANSAC driver, a cyclic Jacobi
//! eigen-solver and k-means.
//!
//! Problem sizes are small (affine fits on a handful of points, affinity
//! matrices of a few dozen rows), so everything here is written for
//! robustness rather than throughput.

use nalgebra::{DMatrix, Matrix3};
use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::rng_from;

/// Row-major 3x3 real matrix (fundamental matrices, homogeneous affine maps).
pub type Mat3 = Matrix3<f64>;

/// Square symmetric matrix. Writes go through [`SymmetricMatrix::set`], which
/// mirrors the entry, so `get(i, j) == get(j, i)` holds bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Builds from full rows, rejecting anything that is not exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!("entry ({i},{j}) not finite")));
                }
                if rows[j][i] != v {
                    return Err(Error::InvalidInput(format!("entry ({i},{j}) breaks symmetry")));
                }
                m.data[i * n + j] = v;
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let cur = self.get(i, j);
        self.set(i, j, cur + v);
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }
}

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub x: Vec<f64>,
    /// Euclidean norm of `A x - b`.
    pub residual: f64,
}

/// Minimizes `||A x - b||` with Householder QR and column pivoting.
///
/// Columns whose remaining norm falls below `1e-10 * ||A||_F` are treated as
/// dependent and reported as [`Error::DegenerateSystem`].
pub fn solve_least_squares(a: &DMatrix<f64>, b: &[f64]) -> Result<LeastSquares> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::InvalidInput(format!(
            "rhs has {} rows, matrix has {m}",
            b.len()
        )));
    }
    if m < n {
        return Err(Error::DegenerateSystem { rank: m, cols: n });
    }
    let tol = 1e-10 * a.norm();
    let mut r = a.clone();
    let mut qtb = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut v = vec![0.0; m];

    for k in 0..n {
        let mut pivot = k;
        let mut best = -1.0;
        for j in k..n {
            let s: f64 = (k..m).map(|i| r[(i, j)] * r[(i, j)]).sum();
            if s > best {
                best = s;
                pivot = j;
            }
        }
        if pivot != k {
            r.swap_columns(k, pivot);
            perm.swap(k, pivot);
        }
        let alpha = best.sqrt();
        if alpha <= tol || alpha == 0.0 {
            return Err(Error::DegenerateSystem { rank: k, cols: n });
        }
        let sign = if r[(k, k)] >= 0.0 { 1.0 } else { -1.0 };
        for i in k..m {
            v[i] = r[(i, k)];
        }
        v[k] += sign * alpha;
        let vnorm2: f64 = (k..m).map(|i| v[i] * v[i]).sum();
        for j in k..n {
            let dot: f64 = (k..m).map(|i| v[i] * r[(i, j)]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                r[(i, j)] -= f * v[i];
            }
        }
        let dot: f64 = (k..m).map(|i| v[i] * qtb[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in k..m {
            qtb[i] -= f * v[i];
        }
    }

    let mut z = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = qtb[i];
        for j in i + 1..n {
            s -= r[(i, j)] * z[j];
        }
        z[i] = s / r[(i, i)];
    }
    let mut x = vec![0.0; n];
    for (i, &p) in perm.iter().enumerate() {
        x[p] = z[i];
    }
    let residual = residual_norm(a, &x, b);
    Ok(LeastSquares { x, residual })
}

pub(crate) fn residual_norm(a: &DMatrix<f64>, x: &[f64], b: &[f64]) -> f64 {
    let (m, n) = a.shape();
    (0..m)
        .map(|i| {
            let ax: f64 = (0..n).map(|j| a[(i, j)] * x[j]).sum();
            (ax - b[i]) * (ax - b[i])
        })
        .sum::<f64>()
        .sqrt()
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Sorted in descending order.
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: DMatrix<f64>,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi diagonalization.
pub fn eigen_symmetric(m: &SymmetricMatrix) -> Result<SymmetricEigen> {
    let n = m.dim();
    let mut a = m.data.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = m.frobenius_norm();
    let stop = 1e-14 * scale;

    let mut converged = n <= 1 || scale == 0.0;
    let mut sweep = 0;
    while !converged {
        if sweep == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps: JACOBI_MAX_SWEEPS,
            });
        }
        sweep += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        converged = off <= stop;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[r * n + order[c]]);
    Ok(SymmetricEigen { values, vectors })
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after the initial assignment and after every Lloyd iteration.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's k-means with k-means++ seeding. Empty clusters are repaired by
/// moving the point farthest from its center into them.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    let n = points.len();
    if k == 0 || n < k {
        return Err(Error::InvalidInput(format!("kmeans needs n >= k >= 1 (n={n}, k={k})")));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::InvalidInput("kmeans points have mixed dimension".into()));
    }
    let mut rng = rng_from(seed);

    let mut chosen = vec![rng.random_range(0..n)];
    while chosen.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                chosen
                    .iter()
                    .map(|&c| sq_dist(p, &points[c]))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            if d2[pick] == 0.0 {
                // rounding pushed us past the end; take the last positive weight
                pick = d2.iter().rposition(|&w| w > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
    }
    let mut centers: Vec<Vec<f64>> = chosen.iter().map(|&i| points[i].clone()).collect();

    let mut labels = vec![0usize; n];
    let assign = |centers: &[Vec<f64>], labels: &mut [usize]| -> bool {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let dd = sq_dist(p, center);
                if dd < best_d {
                    best_d = dd;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        changed
    };
    let repair = |centers: &mut [Vec<f64>], labels: &mut [usize]| {
        loop {
            let mut counts = vec![0usize; k];
            for &l in labels.iter() {
                counts[l] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let mut far = None;
            let mut far_d = -1.0;
            for (i, p) in points.iter().enumerate() {
                if counts[labels[i]] < 2 {
                    continue;
                }
                let dd = sq_dist(p, &centers[labels[i]]);
                if dd > far_d {
                    far_d = dd;
                    far = Some(i);
                }
            }
            let i = far.expect("n >= k guarantees a donor cluster");
            labels[i] = empty;
            centers[empty] = points[i].clone();
        }
    };
    let inertia_of = |centers: &[Vec<f64>], labels: &[usize]| -> f64 {
        points
            .iter()
            .zip(labels)
            .map(|(p, &l)| sq_dist(p, &centers[l]))
            .sum()
    };

    assign(&centers, &mut labels);
    repair(&mut centers, &mut labels);
    let mut history = vec![inertia_of(&centers, &labels)];

    for _ in 0..max_iter {
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            for s in sums[c].iter_mut() {
                *s /= counts[c] as f64;
            }
        }
        centers = sums;
        let changed = assign(&centers, &mut labels);
        repair(&mut centers, &mut labels);
        history.push(inertia_of(&centers, &labels));
        if !changed {
            break;
        }
    }
    let inertia = *history.last().unwrap();
    Ok(KMeansResult {
        labels,
        centers,
        inertia,
        inertia_history: history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacConfig {
    pub max_iterations: usize,
    /// Residual at or below which a datum counts as an inlier.
    pub inlier_threshold: f64,
    pub min_inlier_ratio: f64,
    /// Adaptive early termination confidence; 1.0 disables it.
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            inlier_threshold: 1.0,
            min_inlier_ratio: 0.8,
            confidence: 0.999,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("ransac max_iterations must be >= 1".into()));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::InvalidInput("ransac inlier_threshold must be > 0".into()));
        }
        if !(self.min_inlier_ratio > 0.0 && self.min_inlier_ratio <= 1.0) {
            return Err(Error::InvalidInput("ransac min_inlier_ratio must be in (0, 1]".into()));
        }
        if !(self.confidence > 0.0 && self.confidence <= 1.0) {
            return Err(Error::InvalidInput("ransac confidence must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// A model that can be hypothesized from a minimal sample and scored per datum.
pub trait Estimator {
    type Datum;
    type Model: Clone;

    fn min_samples(&self) -> usize;
    fn fit(&self, sample: &[&Self::Datum]) -> Result<Self::Model>;
    fn residual(&self, model: &Self::Model, datum: &Self::Datum) -> f64;
}

#[derive(Debug, Clone)]
pub struct RansacOutcome<M> {
    pub model: M,
    pub inliers: Vec<bool>,
    pub inlier_count: usize,
    pub iterations: usize,
}

/// Random sample consensus. The returned model is the hypothesis with the
/// most inliers among those sampled (first one wins ties).
pub fn ransac<E: Estimator>(
    data: &[E::Datum],
    estimator: &E,
    cfg: &RansacConfig,
) -> Result<RansacOutcome<E::Model>> {
    cfg.validate()?;
    let n = data.len();
    let s = estimator.min_samples();
    if n < s {
        return Err(Error::InvalidInput(format!(
            "ransac needs at least {s} data, got {n}"
        )));
    }
    let mut rng = rng_from(cfg.seed);
    let mut best: Option<(E::Model, Vec<bool>, usize)> = None;
    let mut last_err = None;
    let mut budget = cfg.max_iterations;
    let mut it = 0;
    let mut sample = Vec::with_capacity(s);

    while it < budget {
        it += 1;
        sample.clear();
        sample.extend(index::sample(&mut rng, n, s).into_iter().map(|i| &data[i]));
        let model = match estimator.fit(&sample) {
            Ok(m) => m,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let mask: Vec<bool> = data
            .iter()
            .map(|d| estimator.residual(&model, d) <= cfg.inlier_threshold)
            .collect();
        let count = mask.iter().filter(|&&b| b).count();
        if best.as_ref().is_none_or(|(_, _, c)| count > *c) {
            best = Some((model, mask, count));
            if count == n {
                break;
            }
            if cfg.confidence < 1.0 {
                let w = count as f64 / n as f64;
                let p_good = w.powi(s as i32);
                if p_good > 0.0 {
                    let needed = ((1.0 - cfg.confidence).ln() / (1.0 - p_good).ln()).ceil();
                    if needed.is_finite() && needed >= 0.0 {
                        budget = budget.min(needed as usize);
                    }
                }
            }
        }
    }

    let Some((model, inliers, inlier_count)) = best else {
        return Err(last_err.unwrap_or(Error::NoConsensus {
            best_ratio: 0.0,
            required: cfg.min_inlier_ratio,
        }));
    };
    let ratio = inlier_count as f64 / n as f64;
    if ratio < cfg.min_inlier_ratio {
        return Err(Error::NoConsensus {
            best_ratio: ratio,
            required: cfg.min_inlier_ratio,
        });
    }
    Ok(RansacOutcome {
        model,
        inliers,
        inlier_count,
        iterations: it,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn least_squares_identity() {
        let a = DMatrix::identity(2, 2);
        let ls = solve_least_squares(&a, &[3.0, 4.0]).unwrap();
        assert!((ls.x[0] - 3.0).abs() < 1e-15 && (ls.x[1] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn least_squares_consistent_overdetermined() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let ls = solve_least_squares(&a, &[1.0, 1.0, 2.0]).unwrap();
        assert!((ls.x[0] - 1.0).abs() < 1e-14);
        assert!((ls.x[1] - 1.0).abs() < 1e-14);
        assert!(ls.residual < 1e-14);
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let a = random_matrix(6, 4, 11);
        let b: Vec<f64> = (0..6).map(|i| (i as f64).sin()).collect();
        let ls = solve_least_squares(&a, &b).unwrap();
        // oracle: (A^T A) x = A^T b solved by nalgebra's LU
        let ata = a.transpose() * &a;
        let atb = a.transpose() * nalgebra::DVector::from_column_slice(&b);
        let x_ne = ata.lu().solve(&atb).unwrap();
        for i in 0..4 {
            assert!((ls.x[i] - x_ne[i]).abs() < 1e-9, "{} vs {}", ls.x[i], x_ne[i]);
        }
    }

    #[test]
    fn least_squares_rank_deficient() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(
            solve_least_squares(&a, &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateSystem { rank: 1, cols: 2 })
        ));
    }

    #[test]
    fn least_squares_local_optimality() {
        let a = random_matrix(8, 3, 5);
        let b: Vec<f64> = (0..8).map(|i| i as f64 * 0.3 - 1.0).collect();
        let ls = solve_least_squares(&a, &b).unwrap();
        let mut rng = rng_from(99);
        for _ in 0..1000 {
            let xp: Vec<f64> = ls.x.iter().map(|v| v + rng.random_range(-1e-3..1e-3)).collect();
            assert!(residual_norm(&a, &xp, &b) >= ls.residual - 1e-15);
        }
    }

    #[test]
    fn eigen_diagonal() {
        let m = SymmetricMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let e = eigen_symmetric(&m).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert_eq!(e.vectors[(0, 0)].abs(), 1.0);
        assert_eq!(e.vectors[(1, 1)].abs(), 1.0);
    }

    #[test]
    fn eigen_two_by_two_characteristic_polynomial() {
        // det([[2-l,1],[1,2-l]]) = (2-l)^2 - 1 = 0  =>  l in {3, 1}
        let m = SymmetricMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = eigen_symmetric(&m).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
    }

    fn random_symmetric(n: usize, seed: u64) -> SymmetricMatrix {
        let mut rng = rng_from(seed);
        let mut m = SymmetricMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, rng.random_range(-5.0..5.0));
            }
        }
        m
    }

    fn check_decomposition(m: &SymmetricMatrix) {
        let e = eigen_symmetric(m).unwrap();
        let md = m.to_dmatrix();
        let n = m.dim();
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(e.values.clone()));
        let tol = 1e-8 * m.frobenius_norm().max(1.0);
        let recon = &e.vectors * &lambda * e.vectors.transpose();
        assert!((recon - &md).norm() <= tol);
        assert!((&md * &e.vectors - &e.vectors * &lambda).norm() <= tol);
        let gram = e.vectors.transpose() * &e.vectors;
        assert!((gram - DMatrix::<f64>::identity(n, n)).norm() <= 1e-8);
        for w in e.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn eigen_random_reconstruction() {
        check_decomposition(&random_symmetric(5, 3));
        check_decomposition(&random_symmetric(20, 4));
        check_decomposition(&random_symmetric(60, 5));
    }

    #[test]
    fn eigen_repeated_eigenvalues() {
        let mut m = SymmetricMatrix::zeros(4);
        for i in 0..4 {
            for j in i..4 {
                m.set(i, j, 1.0);
            }
        }
        check_decomposition(&m);
        let e = eigen_symmetric(&m).unwrap();
        assert!((e.values[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_rejects_asymmetry() {
        assert!(SymmetricMatrix::from_rows(&[vec![1.0, 2.0], vec![2.5, 1.0]]).is_err());
    }

    #[test]
    fn kmeans_separated_pairs() {
        let pts = vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![10.0, 10.0], vec![10.1, 10.0]];
        let r = kmeans(&pts, 2, 1, 50).unwrap();
        assert_eq!(r.labels[0], r.labels[1]);
        assert_eq!(r.labels[2], r.labels[3]);
        assert_ne!(r.labels[0], r.labels[2]);
    }

    #[test]
    fn kmeans_single_cluster() {
        let pts: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64]).collect();
        let r = kmeans(&pts, 1, 9, 10).unwrap();
        assert!(r.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn kmeans_rejects_k_above_n() {
        assert!(kmeans(&[vec![0.0]], 2, 0, 10).is_err());
    }

    fn blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        use rand_distr::{Distribution, Normal};
        let mut rng = rng_from(seed);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let centers = [[0.0, 0.0], [10.0, 0.0], [5.0, 8.660254037844386]];
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for i in 0..30 {
            let c = i % 3;
            pts.push(vec![
                centers[c][0] + noise.sample(&mut rng),
                centers[c][1] + noise.sample(&mut rng),
            ]);
            truth.push(c);
        }
        (pts, truth)
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    #[test]
    fn kmeans_recovers_gaussian_blobs() {
        let (pts, truth) = blobs(21);
        for seed in 0..5 {
            let r = kmeans(&pts, 3, seed, 100).unwrap();
            assert!(same_partition(&r.labels, &truth));
        }
    }

    #[test]
    fn kmeans_matches_exhaustive_oracle_on_subsample() {
        let (pts, _) = blobs(22);
        let sub: Vec<Vec<f64>> = pts[..12].to_vec();
        // exhaustive: every assignment of 12 points to 3 labels
        let mut best = f64::INFINITY;
        let mut best_lab = vec![0; 12];
        let mut lab = vec![0usize; 12];
        for code in 0..3usize.pow(12) {
            let mut c = code;
            for l in lab.iter_mut() {
                *l = c % 3;
                c /= 3;
            }
            let mut inertia = 0.0;
            for k in 0..3 {
                let members: Vec<&Vec<f64>> =
                    sub.iter().zip(&lab).filter(|(_, &l)| l == k).map(|(p, _)| p).collect();
                if members.is_empty() {
                    inertia = f64::INFINITY;
                    break;
                }
                let mx = members.iter().map(|p| p[0]).sum::<f64>() / members.len() as f64;
                let my = members.iter().map(|p| p[1]).sum::<f64>() / members.len() as f64;
                inertia += members
                    .iter()
                    .map(|p| (p[0] - mx).powi(2) + (p[1] - my).powi(2))
                    .sum::<f64>();
            }
            if inertia < best {
                best = inertia;
                best_lab = lab.clone();
            }
        }
        let r = kmeans(&sub, 3, 4, 100).unwrap();
        assert!(same_partition(&r.labels, &best_lab));
        assert!((r.inertia - best).abs() < 1e-9);
    }

    #[test]
    fn kmeans_inertia_non_increasing() {
        let mut rng = rng_from(8);
        let pts: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
            .collect();
        for seed in 0..10 {
            let r = kmeans(&pts, 5, seed, 100).unwrap();
            for w in r.inertia_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
            let mut counts = [0; 5];
            for &l in &r.labels {
                counts[l] += 1;
            }
            assert!(counts.iter().all(|&c| c > 0));
        }
    }

    #[test]
    fn kmeans_repairs_empty_clusters_with_duplicates() {
        let pts = vec![vec![1.0], vec![1.0], vec![1.0], vec![5.0]];
        let r = kmeans(&pts, 3, 0, 10).unwrap();
        let mut counts = [0; 3];
        for &l in &r.labels {
            counts[l] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0));
    }

    /// 1D line model y = a x + b for exercising the RANSAC driver.
    struct Line;
    impl Estimator for Line {
        type Datum = (f64, f64);
        type Model = (f64, f64);
        fn min_samples(&self) -> usize {
            2
        }
        fn fit(&self, s: &[&(f64, f64)]) -> Result<(f64, f64)> {
            let (x0, y0) = *s[0];
            let (x1, y1) = *s[1];
            if x0 == x1 {
                return Err(Error::DegenerateSystem { rank: 1, cols: 2 });
            }
            let a = (y1 - y0) / (x1 - x0);
            Ok((a, y0 - a * x0))
        }
        fn residual(&self, m: &(f64, f64), d: &(f64, f64)) -> f64 {
            (m.0 * d.0 + m.1 - d.1).abs()
        }
    }

    #[test]
    fn ransac_line_with_outliers_and_determinism() {
        let mut data: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        data.push((3.0, 50.0));
        data.push((7.0, -40.0));
        let cfg = RansacConfig {
            seed: 17,
            ..Default::default()
        };
        let a = ransac(&data, &Line, &cfg).unwrap();
        let b = ransac(&data, &Line, &cfg).unwrap();
        assert_eq!(a.inlier_count, 20);
        assert!(!a.inliers[20] && !a.inliers[21]);
        assert_eq!(a.model.0.to_bits(), b.model.0.to_bits());
        assert_eq!(a.inliers, b.inliers);
    }

    #[test]
    fn ransac_reports_no_consensus() {
        let data: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, ((i * 37) % 11) as f64 * 10.0)).collect();
        let cfg = RansacConfig {
            seed: 1,
            ..Default::default()
        };
        assert!(matches!(ransac(&data, &Line, &cfg), Err(Error::NoConsensus { .. })));
    }

    #[test]
    fn ransac_config_validation() {
        let bad = RansacConfig {
            max_iterations: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = RansacConfig {
            min_inlier_ratio: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
