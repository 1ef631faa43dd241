//! Training data: synthetic Gaussian-mixture targets, uniform latent noise,
//! epoch batching, and the IDX container used by MNIST.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const IDX_MAGIC_IMAGES: u32 = 0x0000_0803;
pub const IDX_MAGIC_LABELS: u32 = 0x0000_0801;

/// `n` centers evenly spaced on a circle of the given radius, starting at angle 0.
pub fn ring_centers(n: usize, radius: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            vec![radius * a.cos(), radius * a.sin()]
        })
        .collect()
}

fn default_centers() -> Vec<Vec<f64>> {
    ring_centers(8, 1.0)
}

fn default_sigma() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    GaussianMixture {
        #[serde(default = "default_centers")]
        centers: Vec<Vec<f64>>,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    Idx {
        path: PathBuf,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::GaussianMixture { centers: default_centers(), sigma: default_sigma() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSpec {
    pub source: DataSource,
    pub batch_size: usize,
    /// Size of the training set drawn from a synthetic source; one
    /// generation loops over all of its batches.
    pub train_samples: usize,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self { source: DataSource::default(), batch_size: 100, train_samples: 1000 }
    }
}

impl DataSpec {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("data.batch_size must be >= 1".into()));
        }
        if self.train_samples == 0 {
            return Err(Error::Config("data.train_samples must be >= 1".into()));
        }
        if let DataSource::GaussianMixture { centers, sigma } = &self.source {
            if centers.is_empty() {
                return Err(Error::Config("data.source.centers needs at least one center".into()));
            }
            let dim = centers[0].len();
            if dim == 0 || centers.iter().any(|c| c.len() != dim) {
                return Err(Error::Config("data.source.centers must share one positive dimension".into()));
            }
            if !(*sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::Config(format!("data.source.sigma must be > 0, got {sigma}")));
            }
        }
        Ok(())
    }

    /// Resolves the source into something samples can be drawn from.
    pub fn load(&self) -> Result<Target> {
        self.validate()?;
        Ok(match &self.source {
            DataSource::GaussianMixture { centers, sigma } => Target::Mixture {
                centers: Matrix::from_rows(centers)?,
                sigma: *sigma,
            },
            DataSource::Idx { path } => Target::Empirical(load_idx(path)?),
        })
    }
}

/// A loaded target distribution.
#[derive(Debug, Clone)]
pub enum Target {
    Mixture { centers: Matrix, sigma: f64 },
    Empirical(Matrix),
}

impl Target {
    pub fn dim(&self) -> usize {
        match self {
            Target::Mixture { centers, .. } => centers.cols(),
            Target::Empirical(m) => m.cols(),
        }
    }

    /// Mode centers, when the target is a known mixture.
    pub fn modes(&self) -> Option<&Matrix> {
        match self {
            Target::Mixture { centers, .. } => Some(centers),
            Target::Empirical(_) => None,
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match self {
            Target::Mixture { sigma, .. } => Some(*sigma),
            Target::Empirical(_) => None,
        }
    }
}

/// Mixture: uniform center plus isotropic Gaussian noise. Empirical: uniform
/// draw with replacement.
pub fn sample_real<R: Rng + ?Sized>(target: &Target, n: usize, rng: &mut R) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample_real needs n >= 1".into()));
    }
    let dim = target.dim();
    let mut out = Matrix::zeros(n, dim);
    match target {
        Target::Mixture { centers, sigma } => {
            for i in 0..n {
                let c = centers.row(rng.random_range(0..centers.rows()));
                for (o, &cv) in out.row_mut(i).iter_mut().zip(c) {
                    let e: f64 = StandardNormal.sample(rng);
                    *o = cv + sigma * e;
                }
            }
        }
        Target::Empirical(data) => {
            if data.rows() == 0 {
                return Err(Error::InvalidArgument("empty dataset".into()));
            }
            for i in 0..n {
                let j = rng.random_range(0..data.rows());
                out.row_mut(i).copy_from_slice(data.row(j));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentSpec {
    pub dim: usize,
}

/// I.i.d. uniform `[-1, 1]` latent vectors, one per row.
pub fn sample_latent<R: Rng + ?Sized>(spec: LatentSpec, n: usize, rng: &mut R) -> Matrix {
    let data = (0..n * spec.dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Matrix::from_vec(n, spec.dim, data).expect("shape matches by construction")
}

/// One epoch over `dataset`: a seeded permutation cut into batches; the last
/// batch may be short.
pub struct Batches<'a> {
    data: &'a Matrix,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for Batches<'_> {
    type Item = Matrix;

    fn next(&mut self) -> Option<Matrix> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.data.select_rows(&self.order[self.pos..end]);
        self.pos = end;
        Some(batch)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (n, Some(n))
    }
}

impl ExactSizeIterator for Batches<'_> {}

pub fn batch_iterator<'a, R: Rng + ?Sized>(dataset: &'a Matrix, batch_size: usize, rng: &mut R) -> Result<Batches<'a>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
    }
    if dataset.rows() == 0 {
        return Err(Error::InvalidArgument("cannot batch an empty dataset".into()));
    }
    let mut order: Vec<usize> = (0..dataset.rows()).collect();
    order.shuffle(rng);
    Ok(Batches { data: dataset, order, batch_size, pos: 0 })
}

fn idx_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::IdxFormat { path: path.to_path_buf(), reason: reason.into() }
}

/// Parses a big-endian IDX file of unsigned bytes. Image tensors become one
/// row per image; label vectors one column. Bytes are scaled to `[-1, 1]`.
pub fn load_idx(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    parse_idx(&bytes).map_err(|reason| idx_err(path, reason))
}

fn parse_idx(bytes: &[u8]) -> std::result::Result<Matrix, String> {
    let word = |i: usize| -> std::result::Result<u32, String> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| "truncated header".to_string())
    };
    let magic = word(0)?;
    let ndims = match magic {
        IDX_MAGIC_IMAGES => 3,
        IDX_MAGIC_LABELS => 1,
        other => return Err(format!("bad magic 0x{other:08x}")),
    };
    let dims = (1..=ndims).map(|i| word(i).map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
    let count = dims[0];
    let features = dims[1..].iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or("dimension overflow")?;
    let total = count.checked_mul(features).ok_or("dimension overflow")?;
    let header = 4 * (ndims + 1);
    let payload = &bytes[header..];
    if payload.len() < total {
        return Err(format!("truncated payload: expected {total} bytes, found {}", payload.len()));
    }
    if payload.len() > total {
        return Err(format!("{} trailing bytes after payload", payload.len() - total));
    }
    let data = payload.iter().map(|&p| pixel_to_unit(p)).collect();
    Matrix::from_vec(count, features, data).map_err(|e| e.to_string())
}

#[inline]
pub fn pixel_to_unit(p: u8) -> f64 {
    p as f64 / 127.5 - 1.0
}

#[inline]
pub fn unit_to_pixel(v: f64) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Writes `count` images of `rows x cols` bytes as an IDX image tensor.
pub fn write_idx_images(path: impl AsRef<Path>, count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if pixels.len() != count * rows * cols {
        return Err(idx_err(path, "pixel count does not match dimensions"));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    for w in [IDX_MAGIC_IMAGES, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&w.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    fs::write(path, out)?;
    Ok(())
}
