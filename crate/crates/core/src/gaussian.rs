//! Gaussian fit to training features, Mahalanobis scoring, and covariance
//! ellipses.
//!
//! Distances are computed as `‖L⁻¹ (x − μ)‖₂` where `L` is the Cholesky
//! factor of the (optionally ridge-regularized) covariance. The explicit
//! inverse is only ever built by [`GaussianModel::invert_covariance_timed`].

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{OodError, Result};
use crate::linalg;
use crate::tensor_io::npy;

/// Ridge added to the covariance before factorization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum EpsilonPolicy {
    None,
    /// Add `ε·I`.
    Absolute(f64),
    /// Add `ρ·(tr Σ / d)·I`.
    Relative(f64),
}

impl Default for EpsilonPolicy {
    fn default() -> Self {
        EpsilonPolicy::Relative(1e-6)
    }
}

impl EpsilonPolicy {
    fn epsilon_for(&self, cov: &Array2<f64>) -> Result<f64> {
        match *self {
            EpsilonPolicy::None => Ok(0.0),
            EpsilonPolicy::Absolute(e) if e >= 0.0 && e.is_finite() => Ok(e),
            EpsilonPolicy::Relative(r) if r >= 0.0 && r.is_finite() => {
                Ok(r * cov.diag().sum() / cov.nrows() as f64)
            }
            other => Err(OodError::Config(format!("invalid epsilon policy {other:?}"))),
        }
    }
}

/// Refuse dense covariance work beyond this many bytes instead of aborting
/// on allocation failure.
pub const MAX_DENSE_BYTES: f64 = 64e9;

/// Anything that scores feature rows by Mahalanobis distance.
pub trait DistanceModel: Send + Sync {
    fn dim(&self) -> usize;

    fn mean(&self) -> ArrayView1<'_, f64>;

    fn mahalanobis(&self, x: ArrayView1<'_, f64>) -> Result<f64>;

    fn mahalanobis_batch(&self, m: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if m.ncols() != self.dim() {
            return Err(OodError::Dimension {
                expected: self.dim(),
                found: m.ncols(),
            });
        }
        m.rows().into_iter().map(|r| self.mahalanobis(r)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct GaussianModel {
    mean: Array1<f64>,
    covariance: Array2<f64>,
    factor: Array2<f64>,
    epsilon: f64,
    n_fit: usize,
}

/// First column of the centered data that is linearly dependent on the
/// columns before it. In exact arithmetic this is where an unpivoted
/// Cholesky of the sample covariance breaks down.
fn dependent_column(centered: ArrayView2<'_, f64>) -> usize {
    let n = centered.nrows();
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(n);
    for (j, col) in centered.columns().into_iter().enumerate() {
        let norm0 = col.dot(&col).sqrt();
        let mut r = col.to_owned();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&r);
                r.scaled_add(-c, q);
            }
        }
        let norm = r.dot(&r).sqrt();
        if norm0 == 0.0 || norm <= 1e-10 * norm0 {
            return j;
        }
        basis.push(r / norm);
    }
    centered.ncols()
}

/// Fit mean and sample covariance (divisor `n − 1`) and factor `Σ + εI`.
///
/// Under [`EpsilonPolicy::None`] a singular covariance is an error; it is
/// never silently regularized. When `n − 1 < d` the covariance is singular
/// by rank alone and the error is raised without forming the `d × d` matrix.
pub fn fit_gaussian(features: ArrayView2<'_, f64>, policy: EpsilonPolicy) -> Result<GaussianModel> {
    let (n, d) = features.dim();
    if n < 2 {
        return Err(OodError::SampleSize {
            required: 2,
            actual: n,
        });
    }
    if d == 0 {
        return Err(OodError::Dimension {
            expected: 1,
            found: 0,
        });
    }
    let mean = linalg::column_means(features);
    if policy == EpsilonPolicy::None && n - 1 < d {
        let centered = &features - &mean.view().insert_axis(Axis(0));
        let pivot = dependent_column(centered.view());
        return Err(OodError::SingularCovariance { d, n, pivot });
    }
    let bytes = (d as f64).powi(2) * 8.0 * 3.0;
    if bytes > MAX_DENSE_BYTES {
        return Err(OodError::Degenerate(format!(
            "a full covariance at d = {d} needs about {:.0} GB; reduce dimensionality or use the pseudo-inverse model",
            bytes / 1e9
        )));
    }
    if bytes > 4e9 {
        log::warn!(
            "fitting a full covariance at d = {d} needs about {:.1} GB",
            bytes / 1e9
        );
    }
    let covariance = linalg::sample_covariance(features, mean.view());
    from_covariance(mean, covariance, policy, n)
}

fn from_covariance(
    mean: Array1<f64>,
    covariance: Array2<f64>,
    policy: EpsilonPolicy,
    n_fit: usize,
) -> Result<GaussianModel> {
    let epsilon = policy.epsilon_for(&covariance)?;
    let factor = factorize(&covariance, epsilon, n_fit)?;
    Ok(GaussianModel {
        mean,
        covariance,
        factor,
        epsilon,
        n_fit,
    })
}

fn regularized(covariance: &Array2<f64>, epsilon: f64) -> Array2<f64> {
    let mut a = covariance.clone();
    a.diag_mut().mapv_inplace(|v| v + epsilon);
    a
}

fn factorize(covariance: &Array2<f64>, epsilon: f64, n_fit: usize) -> Result<Array2<f64>> {
    let mut l = regularized(covariance, epsilon);
    linalg::cholesky_in_place(&mut l).map_err(|pivot| OodError::SingularCovariance {
        d: covariance.nrows(),
        n: n_fit,
        pivot,
    })?;
    Ok(l)
}

#[derive(Serialize, Deserialize)]
struct GaussianMeta {
    format_version: u32,
    kind: String,
    epsilon: f64,
    d: usize,
    n_fit: usize,
}

impl GaussianModel {
    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    pub fn factor(&self) -> &Array2<f64> {
        &self.factor
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n_fit(&self) -> usize {
        self.n_fit
    }

    /// `Σ + εI`, the matrix the distances are actually taken against.
    pub fn regularized_covariance(&self) -> Array2<f64> {
        regularized(&self.covariance, self.epsilon)
    }

    /// Explicit dense inverse of `Σ + εI` and the wall-clock seconds spent
    /// factoring and inverting it.
    pub fn invert_covariance_timed(&self) -> Result<(Array2<f64>, f64)> {
        let start = Instant::now();
        let l = factorize(&self.covariance, self.epsilon, self.n_fit)?;
        let inverse = linalg::spd_inverse_from_cholesky(l.view());
        Ok((inverse, start.elapsed().as_secs_f64()))
    }

    /// Level-`n_std` ellipse of a 2-D model (of `Σ + εI`).
    pub fn covariance_ellipse(&self, n_std: f64) -> Result<Ellipse> {
        if self.dim() != 2 {
            return Err(OodError::Dimension {
                expected: 2,
                found: self.dim(),
            });
        }
        if !(n_std > 0.0) {
            return Err(OodError::Config(format!("n_std must be positive, got {n_std}")));
        }
        let s = self.regularized_covariance();
        let (a, b, c) = (s[[0, 0]], s[[0, 1]], s[[1, 1]]);
        let half_trace = 0.5 * (a + c);
        let radius = (0.25 * (a - c).powi(2) + b * b).sqrt();
        let major = half_trace + radius;
        let minor = (half_trace - radius).max(0.0);
        let mut angle = if radius == 0.0 { 0.0 } else { 0.5 * (2.0 * b).atan2(a - c) };
        if angle <= -FRAC_PI_2 {
            angle += std::f64::consts::PI;
        }
        Ok(Ellipse {
            center: [self.mean[0], self.mean[1]],
            semi_axes: [n_std * major.sqrt(), n_std * minor.sqrt()],
            angle,
            n_std,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| OodError::io(dir, e))?;
        let d = self.dim();
        npy::write_npy(&dir.join("mean.npy"), &[d], self.mean.as_slice().unwrap())?;
        npy::write_npy(
            &dir.join("covariance.npy"),
            &[d, d],
            self.covariance.as_slice().unwrap(),
        )?;
        let meta = GaussianMeta {
            format_version: 1,
            kind: "cholesky".into(),
            epsilon: self.epsilon,
            d,
            n_fit: self.n_fit,
        };
        write_json(&dir.join("meta.json"), &meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: GaussianMeta = read_json(&dir.join("meta.json"))?;
        let mean = npy::read_npy(&dir.join("mean.npy"))?;
        let cov = npy::read_npy(&dir.join("covariance.npy"))?;
        if mean.shape != [meta.d] || cov.shape != [meta.d, meta.d] {
            return Err(OodError::ShapeMismatch {
                expected: vec![meta.d, meta.d],
                found: cov.shape,
            });
        }
        let covariance = Array2::from_shape_vec((meta.d, meta.d), cov.data).expect("checked shape");
        let factor = factorize(&covariance, meta.epsilon, meta.n_fit)?;
        Ok(Self {
            mean: Array1::from(mean.data),
            covariance,
            factor,
            epsilon: meta.epsilon,
            n_fit: meta.n_fit,
        })
    }
}

impl DistanceModel for GaussianModel {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn mean(&self) -> ArrayView1<'_, f64> {
        self.mean.view()
    }

    fn mahalanobis(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(OodError::Dimension {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let mut z: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        linalg::solve_lower_in_place(self.factor.view(), &mut z);
        Ok(z.iter().map(|v| v * v).sum::<f64>().sqrt())
    }
}

/// Mahalanobis model against the Moore–Penrose pseudo-inverse of the sample
/// covariance, built from the `n × n` Gram matrix. Emulates scoring at full
/// embedding dimension without a `d × d` allocation.
#[derive(Debug, Clone)]
pub struct PseudoInverseGaussian {
    mean: Array1<f64>,
    /// `r × d`, orthonormal rows spanning the training data.
    directions: Array2<f64>,
    /// Covariance eigenvalues for each direction.
    variances: Array1<f64>,
    n_fit: usize,
}

impl PseudoInverseGaussian {
    pub fn fit(features: ArrayView2<'_, f64>) -> Result<Self> {
        let (n, d) = features.dim();
        if n < 2 {
            return Err(OodError::SampleSize {
                required: 2,
                actual: n,
            });
        }
        let mean = linalg::column_means(features);
        let centered = &features - &mean.view().insert_axis(Axis(0));
        let denom = (n - 1) as f64;
        let (directions, variances) = if n <= d {
            let gram = centered.dot(&centered.t()) / denom;
            let (vals, vecs) = linalg::symmetric_eigen(gram.view());
            let tol = vals[0].max(0.0) * (n.max(d) as f64) * f64::EPSILON;
            let keep: Vec<usize> = (0..n).filter(|&i| vals[i] > tol).collect();
            let mut dirs = Array2::zeros((keep.len(), d));
            for (row, &i) in keep.iter().enumerate() {
                let v = centered.t().dot(&vecs.column(i));
                let norm = v.dot(&v).sqrt();
                dirs.row_mut(row).assign(&(v / norm));
            }
            let vars = Array1::from_iter(keep.iter().map(|&i| vals[i]));
            (dirs, vars)
        } else {
            let cov = linalg::sample_covariance(features, mean.view());
            let (vals, vecs) = linalg::symmetric_eigen(cov.view());
            let tol = vals[0].max(0.0) * (n.max(d) as f64) * f64::EPSILON;
            let keep: Vec<usize> = (0..d).filter(|&i| vals[i] > tol).collect();
            let mut dirs = Array2::zeros((keep.len(), d));
            for (row, &i) in keep.iter().enumerate() {
                dirs.row_mut(row).assign(&vecs.column(i));
            }
            (dirs, Array1::from_iter(keep.iter().map(|&i| vals[i])))
        };
        Ok(Self {
            mean,
            directions,
            variances,
            n_fit: n,
        })
    }

    pub fn rank(&self) -> usize {
        self.variances.len()
    }

    pub fn n_fit(&self) -> usize {
        self.n_fit
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| OodError::io(dir, e))?;
        let d = self.dim();
        let r = self.rank();
        npy::write_npy(&dir.join("mean.npy"), &[d], self.mean.as_slice().unwrap())?;
        npy::write_npy(
            &dir.join("directions.npy"),
            &[r, d],
            self.directions.as_slice().unwrap(),
        )?;
        npy::write_npy(&dir.join("variances.npy"), &[r], self.variances.as_slice().unwrap())?;
        let meta = GaussianMeta {
            format_version: 1,
            kind: "pseudo_inverse".into(),
            epsilon: 0.0,
            d,
            n_fit: self.n_fit,
        };
        write_json(&dir.join("meta.json"), &meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: GaussianMeta = read_json(&dir.join("meta.json"))?;
        let mean = npy::read_npy(&dir.join("mean.npy"))?;
        let dirs = npy::read_npy(&dir.join("directions.npy"))?;
        let vars = npy::read_npy(&dir.join("variances.npy"))?;
        let r = vars.data.len();
        if dirs.shape != [r, meta.d] || mean.shape != [meta.d] {
            return Err(OodError::ShapeMismatch {
                expected: vec![r, meta.d],
                found: dirs.shape,
            });
        }
        Ok(Self {
            mean: Array1::from(mean.data),
            directions: Array2::from_shape_vec((r, meta.d), dirs.data).expect("checked shape"),
            variances: Array1::from(vars.data),
            n_fit: meta.n_fit,
        })
    }
}

impl DistanceModel for PseudoInverseGaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn mean(&self) -> ArrayView1<'_, f64> {
        self.mean.view()
    }

    fn mahalanobis(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(OodError::Dimension {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let z = &x - &self.mean;
        let proj = self.directions.dot(&z);
        Ok(proj
            .iter()
            .zip(&self.variances)
            .map(|(p, v)| p * p / v)
            .sum::<f64>()
            .sqrt())
    }
}

/// Fitted model of either kind, as stored in a model directory.
#[derive(Debug, Clone)]
pub enum FittedGaussian {
    Cholesky(GaussianModel),
    PseudoInverse(PseudoInverseGaussian),
}

impl FittedGaussian {
    pub fn as_model(&self) -> &dyn DistanceModel {
        match self {
            FittedGaussian::Cholesky(m) => m,
            FittedGaussian::PseudoInverse(m) => m,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        match self {
            FittedGaussian::Cholesky(m) => m.save(dir),
            FittedGaussian::PseudoInverse(m) => m.save(dir),
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: GaussianMeta = read_json(&dir.join("meta.json"))?;
        match meta.kind.as_str() {
            "cholesky" => GaussianModel::load(dir).map(FittedGaussian::Cholesky),
            "pseudo_inverse" => PseudoInverseGaussian::load(dir).map(FittedGaussian::PseudoInverse),
            other => Err(OodError::Config(format!("unknown gaussian model kind {other:?}"))),
        }
    }
}

/// Level set `{x : (x − c)ᵀ Σ⁻¹ (x − c) = n_std²}` of a 2-D Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    /// Major then minor semi-axis length.
    pub semi_axes: [f64; 2],
    /// Major axis angle from the first coordinate axis, in (−π/2, π/2].
    pub angle: f64,
    pub n_std: f64,
}

impl Ellipse {
    /// Point on the boundary at parameter `t` (radians).
    pub fn point_at(&self, t: f64) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        let u = self.semi_axes[0] * t.cos();
        let v = self.semi_axes[1] * t.sin();
        [self.center[0] + c * u - s * v, self.center[1] + s * u + c * v]
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| OodError::Config(format!("serializing {}: {e}", path.display())))?;
    fs::write(path, text + "\n").map_err(|e| OodError::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| OodError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| OodError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::test_support::{random_matrix, random_spd};
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array};

    /// A model with an exactly prescribed covariance, bypassing the fit.
    fn model_with(mean: Array1<f64>, cov: Array2<f64>) -> GaussianModel {
        from_covariance(mean, cov, EpsilonPolicy::None, 100).unwrap()
    }

    #[test]
    fn fit_four_corners() {
        let m = array![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]];
        let g = fit_gaussian(m.view(), EpsilonPolicy::None).unwrap();
        assert_eq!(g.mean().to_vec(), vec![1.0, 1.0]);
        assert_abs_diff_eq!(g.covariance()[[0, 0]], 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.covariance()[[1, 1]], 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.covariance()[[0, 1]], 0.0, epsilon = 1e-15);
        assert_eq!(g.epsilon(), 0.0);
    }

    #[test]
    fn rank_deficient_fit_fails_without_policy() {
        let m = random_matrix(20, 50, 3);
        match fit_gaussian(m.view(), EpsilonPolicy::None) {
            Err(OodError::SingularCovariance { d, n, pivot }) => {
                assert_eq!((d, n), (50, 20));
                // centered rows live in a 19-dim subspace
                assert_eq!(pivot, 19);
            }
            other => panic!("unexpected {other:?}"),
        }
        let g = fit_gaussian(m.view(), EpsilonPolicy::Relative(1e-3)).unwrap();
        assert!(g.factor().diag().iter().all(|&v| v > 0.0));
        let expected = 1e-3 * g.covariance().diag().sum() / 50.0;
        assert_abs_diff_eq!(g.epsilon(), expected, epsilon = 1e-18);
    }

    #[test]
    fn collinear_square_data_fails_at_cholesky() {
        // n > d but the two columns are identical
        let m = array![[1.0, 1.0], [2.0, 2.0], [4.0, 4.0], [0.0, 0.0]];
        assert!(matches!(
            fit_gaussian(m.view(), EpsilonPolicy::None),
            Err(OodError::SingularCovariance { pivot: 1, .. })
        ));
        assert!(fit_gaussian(m.view(), EpsilonPolicy::Absolute(1e-3)).is_ok());
    }

    #[test]
    fn too_few_samples() {
        let m = array![[1.0, 2.0]];
        assert!(matches!(
            fit_gaussian(m.view(), EpsilonPolicy::None),
            Err(OodError::SampleSize { required: 2, actual: 1 })
        ));
    }

    #[test]
    fn distance_examples() {
        let g = model_with(array![0.0, 0.0], Array2::eye(2));
        assert_eq!(g.mahalanobis(array![0.0, 0.0].view()).unwrap(), 0.0);
        assert_abs_diff_eq!(g.mahalanobis(array![3.0, 4.0].view()).unwrap(), 5.0, epsilon = 1e-15);

        let g = model_with(array![1.0, 1.0], Array2::from_diag(&array![2.0, 8.0]));
        assert_abs_diff_eq!(g.mahalanobis(array![3.0, 5.0].view()).unwrap(), 2.0, epsilon = 1e-15);
        assert!(matches!(
            g.mahalanobis(array![1.0].view()),
            Err(OodError::Dimension { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn batch_examples() {
        let mu = array![0.5, -1.0];
        let g = model_with(mu.clone(), Array2::from_diag(&array![4.0, 1.0]));
        let one = mu.clone().insert_axis(Axis(0));
        assert_eq!(g.mahalanobis_batch(one.view()).unwrap(), vec![0.0]);
        let offsets = array![[mu[0] + 2.0, mu[1]], [mu[0], mu[1] + 1.0]];
        let d = g.mahalanobis_batch(offsets.view()).unwrap();
        assert_abs_diff_eq!(d[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 1.0, epsilon = 1e-15);

        let x = random_matrix(30, 2, 9);
        let batch = g.mahalanobis_batch(x.view()).unwrap();
        for (row, b) in x.rows().into_iter().zip(batch) {
            assert_eq!(g.mahalanobis(row).unwrap(), b);
        }
    }

    #[test]
    fn timed_inverse() {
        let g = model_with(Array1::zeros(3), Array2::eye(3));
        let (inv, secs) = g.invert_covariance_timed().unwrap();
        assert_eq!(inv, Array2::<f64>::eye(3));
        assert!(secs > 0.0);

        let g = model_with(Array1::zeros(2), Array2::from_diag(&array![2.0, 8.0]));
        let (inv, _) = g.invert_covariance_timed().unwrap();
        assert_abs_diff_eq!(inv, Array2::from_diag(&array![0.5, 0.125]), epsilon = 1e-15);

        let s = random_spd(64, 11);
        let g = model_with(Array1::zeros(64), s.clone());
        let (inv, _) = g.invert_covariance_timed().unwrap();
        let resid = s.dot(&inv) - Array2::<f64>::eye(64);
        assert!(resid.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn ellipse_examples() {
        let g = model_with(array![0.0, 0.0], Array2::eye(2));
        let e = g.covariance_ellipse(1.0).unwrap();
        assert_eq!(e.semi_axes, [1.0, 1.0]);
        assert_eq!(e.angle, 0.0);

        let g = model_with(array![3.0, -2.0], Array2::from_diag(&array![4.0, 1.0]));
        let e = g.covariance_ellipse(1.0).unwrap();
        assert_eq!((e.semi_axes, e.angle, e.center), ([2.0, 1.0], 0.0, [3.0, -2.0]));
        let e = g.covariance_ellipse(2.0).unwrap();
        assert_eq!(e.semi_axes, [4.0, 2.0]);

        let g = model_with(array![0.0, 0.0], Array2::from_diag(&array![1.0, 4.0]));
        let e = g.covariance_ellipse(1.0).unwrap();
        assert_abs_diff_eq!(e.angle, FRAC_PI_2, epsilon = 1e-15);

        let g3 = model_with(Array1::zeros(3), Array2::eye(3));
        assert!(matches!(g3.covariance_ellipse(1.0), Err(OodError::Dimension { found: 3, .. })));
    }

    #[test]
    fn points_on_ellipse_have_distance_n_std() {
        for seed in 0..20 {
            let s = random_spd(2, seed);
            let g = model_with(array![seed as f64, -1.0], s);
            for n_std in [0.5, 1.0, 2.0] {
                let e = g.covariance_ellipse(n_std).unwrap();
                assert!(e.semi_axes[0] >= e.semi_axes[1]);
                assert!(e.angle > -FRAC_PI_2 && e.angle <= FRAC_PI_2);
                for k in 0..16 {
                    let p = e.point_at(k as f64 * 0.4);
                    let d = g.mahalanobis(array![p[0], p[1]].view()).unwrap();
                    assert_abs_diff_eq!(d, n_std, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn save_load_is_bit_exact() {
        let x = random_matrix(40, 5, 2);
        let g = fit_gaussian(x.view(), EpsilonPolicy::Relative(1e-6)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        FittedGaussian::Cholesky(g.clone()).save(dir.path()).unwrap();
        let FittedGaussian::Cholesky(back) = FittedGaussian::load(dir.path()).unwrap() else {
            panic!("wrong kind")
        };
        assert_eq!(back.covariance(), g.covariance());
        assert_eq!(back.factor(), g.factor());
        assert_eq!(back.epsilon().to_bits(), g.epsilon().to_bits());
        let probe = random_matrix(5, 5, 3);
        assert_eq!(
            back.mahalanobis_batch(probe.view()).unwrap(),
            g.mahalanobis_batch(probe.view()).unwrap()
        );
    }

    #[test]
    fn pseudo_inverse_matches_cholesky_when_full_rank() {
        let x = random_matrix(60, 6, 4);
        let g = fit_gaussian(x.view(), EpsilonPolicy::None).unwrap();
        let p = PseudoInverseGaussian::fit(x.view()).unwrap();
        assert_eq!(p.rank(), 6);
        let probe = random_matrix(10, 6, 5);
        for row in probe.rows() {
            assert_abs_diff_eq!(
                g.mahalanobis(row).unwrap(),
                p.mahalanobis(row).unwrap(),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn pseudo_inverse_gram_route_high_dim() {
        let x = random_matrix(15, 200, 6);
        let p = PseudoInverseGaussian::fit(x.view()).unwrap();
        assert_eq!(p.rank(), 14);
        // a training point sits at the distance implied by the pseudo-inverse,
        // and the mean at zero
        assert_eq!(p.mahalanobis(p.mean()).unwrap(), 0.0);
        // sum of squared training distances equals (n - 1) * rank
        let total: f64 = p
            .mahalanobis_batch(x.view())
            .unwrap()
            .iter()
            .map(|d| d * d)
            .sum();
        assert_abs_diff_eq!(total, 14.0 * 14.0, epsilon = 1e-8);

        let dir = tempfile::tempdir().unwrap();
        FittedGaussian::PseudoInverse(p.clone()).save(dir.path()).unwrap();
        let back = FittedGaussian::load(dir.path()).unwrap();
        let probe = Array::from_elem((1, 200), 0.3);
        assert_eq!(
            back.as_model().mahalanobis_batch(probe.view()).unwrap(),
            p.mahalanobis_batch(probe.view()).unwrap()
        );
    }
}
