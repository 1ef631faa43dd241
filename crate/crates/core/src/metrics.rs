//! Sample-quality and diversity measures.
//!
//! The Fréchet score fits a Gaussian to each sample set in raw data space and
//! returns the squared 2-Wasserstein distance between the fits. It stands in
//! for Inception-feature FID, so its values are only comparable with each
//! other, never with published FID numbers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::l2_distance;

/// Half the L1 distance between two histograms after normalizing each.
pub fn tvd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!("histograms have {} and {} bins", p.len(), q.len())));
    }
    if p.iter().chain(q).any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("histogram counts must be finite and nonnegative".into()));
    }
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    if sp <= 0.0 || sq <= 0.0 {
        return Err(Error::InvalidArgument("empty histogram".into()));
    }
    let d = p.iter().zip(q).map(|(a, b)| (a / sp - b / sq).abs()).sum::<f64>() / 2.0;
    Ok(d.clamp(0.0, 1.0))
}

const EIGEN_TOLERANCE: f64 = 1e-10;

fn gaussian_fit(samples: &Matrix) -> (DVector<f64>, DMatrix<f64>) {
    let (n, d) = (samples.rows(), samples.cols());
    let mut mean = DVector::zeros(d);
    for row in samples.iter_rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for row in samples.iter_rows() {
        let c = DVector::from_iterator(d, row.iter().zip(mean.iter()).map(|(v, m)| v - m));
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= (n - 1) as f64;
    (mean, cov)
}

/// Eigenvalues of a symmetric matrix with tiny negatives clamped to zero.
fn psd_eigen(m: DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let sym = (&m + m.transpose()) * 0.5;
    let mut eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.amax().max(1.0);
    for l in eig.eigenvalues.iter_mut() {
        if *l < 0.0 {
            if *l < -EIGEN_TOLERANCE * scale {
                return Err(Error::DegenerateCovariance(format!("{what} has eigenvalue {l}")));
            }
            *l = 0.0;
        }
    }
    Ok(eig)
}

/// `|mu_a - mu_b|^2 + Tr(C_a + C_b - 2 (C_a C_b)^{1/2})`.
///
/// The trace of the square root is taken through the symmetric product
/// `C_a^{1/2} C_b C_a^{1/2}`, which has the same spectrum as `C_a C_b`.
pub fn frechet_score(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.cols() != b.cols() {
        return Err(Error::Dimension(format!("sample dims {} and {}", a.cols(), b.cols())));
    }
    let d = a.cols();
    if a.rows() < d + 1 || b.rows() < d + 1 {
        return Err(Error::InvalidArgument(format!("need at least {} samples per set", d + 1)));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite("frechet samples"));
    }
    let (mu_a, cov_a) = gaussian_fit(a);
    let (mu_b, cov_b) = gaussian_fit(b);
    let eig_a = psd_eigen(cov_a.clone(), "covariance")?;
    let sqrt_vals = eig_a.eigenvalues.map(f64::sqrt);
    let sqrt_a = &eig_a.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig_a.eigenvectors.transpose();
    let inner = &sqrt_a * &cov_b * &sqrt_a;
    let eig_inner = psd_eigen(inner, "covariance product")?;
    let tr_sqrt: f64 = eig_inner.eigenvalues.iter().map(|l| l.sqrt()).sum();
    let mean_term = (&mu_a - &mu_b).norm_squared();
    let score = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
    Ok(score.max(0.0))
}

/// Pairwise L2 distances between flattened generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityMatrix {
    size: usize,
    values: Vec<f64>,
}

impl DiversityMatrix {
    pub fn from_params(params: &[&[f64]]) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::InvalidArgument("diversity needs at least one genome".into()));
        }
        let len = params[0].len();
        if params.iter().any(|p| p.len() != len) {
            return Err(Error::Dimension("genomes have mismatched architectures".into()));
        }
        let z = params.len();
        let mut values = vec![0.0; z * z];
        for i in 0..z {
            for j in i + 1..z {
                let d = l2_distance(params[i], params[j]);
                values[i * z + j] = d;
                values[j * z + i] = d;
            }
        }
        Ok(Self { size: z, values })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    /// Mean over unordered distinct pairs; zero for a single genome.
    pub fn mean_pairwise(&self) -> f64 {
        let z = self.size;
        if z < 2 {
            return 0.0;
        }
        let mut sum = 0.0;
        for i in 0..z {
            for j in i + 1..z {
                sum += self.get(i, j);
            }
        }
        sum / (z * (z - 1) / 2) as f64
    }
}

/// Nearest-mode histogram with the high-quality (within threshold) tally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeHistogram {
    pub counts: Vec<usize>,
    /// High-quality samples assigned to each mode.
    pub high_quality: Vec<usize>,
}

impl ModeHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn high_quality_fraction(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.high_quality.iter().sum::<usize>() as f64 / total as f64
        }
    }

    /// Modes with at least one high-quality sample.
    pub fn covered_modes(&self) -> usize {
        self.high_quality.iter().filter(|&&c| c > 0).count()
    }

    pub fn counts_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// TVD against the uniform distribution over modes.
    pub fn tvd_to_uniform(&self) -> Result<f64> {
        tvd(&self.counts_f64(), &vec![1.0; self.counts.len()])
    }
}

pub fn mode_histogram(samples: &Matrix, modes: &Matrix, threshold: f64) -> Result<ModeHistogram> {
    if modes.rows() == 0 {
        return Err(Error::InvalidArgument("mode_histogram needs at least one mode".into()));
    }
    if samples.cols() != modes.cols() {
        return Err(Error::Dimension("samples and modes differ in dimension".into()));
    }
    let k = modes.rows();
    let mut counts = vec![0; k];
    let mut high_quality = vec![0; k];
    let t2 = threshold * threshold;
    for x in samples.iter_rows() {
        let mut best = (0, f64::INFINITY);
        for m in 0..k {
            let d2: f64 = modes.row(m).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best.1 {
                best = (m, d2);
            }
        }
        counts[best.0] += 1;
        if best.1 <= t2 {
            high_quality[best.0] += 1;
        }
    }
    Ok(ModeHistogram { counts, high_quality })
}
