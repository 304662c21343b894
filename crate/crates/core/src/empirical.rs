//! Drawing samples from a tree model and forming empirical second moments.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Edge, GaussianTreeModel};

/// Rows drawn from one RNG stream.
pub const BLOCK_ROWS: usize = 4096;

/// `|ρ̂|` at or above `1 - PERFECT_CORRELATION_EPS` is treated as perfect correlation.
pub const PERFECT_CORRELATION_EPS: f64 = 1e-12;

/// Child seed for stream `index` of `seed` (SplitMix64 finaliser).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn block_rng(seed: u64, block: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// `n × d` sample matrix, one sample per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub data: DMatrix<f64>,
    pub seed: u64,
}

impl SampleBatch {
    pub fn from_rows(rows: &[Vec<f64>], seed: u64) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidInput("sample batch is empty".into()));
        }
        let d = rows[0].len();
        let mut data = DMatrix::zeros(n, d);
        for (k, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: row.len() });
            }
            for (i, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::InvalidInput(format!("non-finite value in row {}", k + 1)));
                }
                data[(k, i)] = x;
            }
        }
        Ok(SampleBatch { data, seed })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }
}

/// Reusable sampler holding the Cholesky factor of the model covariance.
#[derive(Clone, Debug)]
pub struct Sampler {
    d: usize,
    /// Lower-triangular Cholesky factor packed by rows.
    factor: Vec<f64>,
}

impl Sampler {
    pub fn new(model: &GaussianTreeModel) -> Self {
        let l = model.cholesky_factor();
        let d = l.nrows();
        let factor = (0..d).flat_map(|i| (0..=i).map(move |k| (i, k))).map(|ik| l[ik]).collect();
        Sampler { d, factor }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Visits `n` samples in order; the visitor sees one row at a time.
    fn for_each_row(&self, rng: &mut ChaCha20Rng, rows: usize, mut visit: impl FnMut(&[f64])) {
        let d = self.d();
        let mut z = vec![0.0; d];
        let mut x = vec![0.0; d];
        for _ in 0..rows {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(rng);
            }
            let mut row = self.factor.as_slice();
            for (i, xi) in x.iter_mut().enumerate() {
                let (li, rest) = row.split_at(i + 1);
                *xi = li.iter().zip(&z).map(|(l, z)| l * z).sum();
                row = rest;
            }
            visit(&x);
        }
    }

    fn blocks(n: usize) -> impl Iterator<Item = (u64, usize)> {
        (0..n.div_ceil(BLOCK_ROWS)).map(move |b| (b as u64, BLOCK_ROWS.min(n - b * BLOCK_ROWS)))
    }

    /// Draws `n` samples; row blocks are generated in parallel from independent streams.
    pub fn batch(&self, n: usize, seed: u64) -> SampleBatch {
        let d = self.d();
        let blocks: Vec<(u64, usize)> = Self::blocks(n).collect();
        let parts: Vec<Vec<f64>> = blocks
            .par_iter()
            .map(|&(b, rows)| {
                let mut rng = block_rng(seed, b);
                let mut out = Vec::with_capacity(rows * d);
                self.for_each_row(&mut rng, rows, |x| out.extend_from_slice(x));
                out
            })
            .collect();
        let flat: Vec<f64> = parts.concat();
        SampleBatch { data: DMatrix::from_row_slice(n, d, &flat), seed }
    }

    /// Empirical moments of `batch(n, seed)` without materialising the samples.
    pub fn moments(&self, n: usize, seed: u64) -> EmpiricalMoments {
        let d = self.d();
        let mut acc = OuterAccumulator::new(d);
        for (b, rows) in Self::blocks(n) {
            let mut rng = block_rng(seed, b);
            self.for_each_row(&mut rng, rows, |x| acc.add(x));
        }
        acc.finish(n)
    }
}

/// Running sum of `x xᵀ` over the upper triangle.
struct OuterAccumulator {
    d: usize,
    sums: Vec<f64>,
}

impl OuterAccumulator {
    fn new(d: usize) -> Self {
        OuterAccumulator { d, sums: vec![0.0; d * (d + 1) / 2] }
    }

    fn add(&mut self, x: &[f64]) {
        let mut k = 0;
        for i in 0..self.d {
            let xi = x[i];
            for &xj in &x[i..] {
                self.sums[k] += xi * xj;
                k += 1;
            }
        }
    }

    fn finish(self, n: usize) -> EmpiricalMoments {
        let mut sigma_hat = DMatrix::zeros(self.d, self.d);
        let mut k = 0;
        for i in 0..self.d {
            for j in i..self.d {
                let v = self.sums[k] / n as f64;
                sigma_hat[(i, j)] = v;
                sigma_hat[(j, i)] = v;
                k += 1;
            }
        }
        EmpiricalMoments { sigma_hat, n }
    }
}

/// I.i.d. zero-mean Gaussian samples with the model covariance; deterministic in `seed`.
pub fn sample(model: &GaussianTreeModel, n: usize, seed: u64) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    Ok(Sampler::new(model).batch(n, seed))
}

/// Empirical covariance with known zero mean.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMoments {
    pub sigma_hat: DMatrix<f64>,
    pub n: usize,
}

/// Empirical mutual information; `saturated` marks a perfectly correlated pair
/// whose value was capped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmpiricalMi {
    pub nats: f64,
    pub saturated: bool,
}

impl EmpiricalMoments {
    pub fn new(sigma_hat: DMatrix<f64>, n: usize) -> Result<Self> {
        if sigma_hat.nrows() != sigma_hat.ncols() {
            return Err(Error::DimensionMismatch {
                expected: sigma_hat.nrows(),
                found: sigma_hat.ncols(),
            });
        }
        Ok(EmpiricalMoments { sigma_hat, n })
    }

    pub fn d(&self) -> usize {
        self.sigma_hat.nrows()
    }

    pub fn check_variances(&self) -> Result<()> {
        for i in 0..self.d() {
            if !(self.sigma_hat[(i, i)] > 0.0) {
                return Err(Error::DegenerateVariance(i + 1));
            }
        }
        Ok(())
    }

    /// `ρ̂ = Σ̂(i,j) / sqrt(Σ̂(i,i) Σ̂(j,j))`.
    pub fn correlation(&self, pair: Edge) -> Result<f64> {
        let (i, j) = (pair.lo(), pair.hi());
        if j >= self.d() {
            return Err(Error::NodeOutOfRange { node: j + 1, d: self.d() });
        }
        for v in [i, j] {
            if !(self.sigma_hat[(v, v)] > 0.0) {
                return Err(Error::DegenerateVariance(v + 1));
            }
        }
        Ok(self.sigma_hat[(i, j)] / (self.sigma_hat[(i, i)] * self.sigma_hat[(j, j)]).sqrt())
    }

    /// Squared correlation of every pair, row-major upper triangle.
    pub(crate) fn squared_correlations(&self) -> Result<Vec<(Edge, f64)>> {
        self.check_variances()?;
        let d = self.d();
        let mut out = Vec::with_capacity(d * (d - 1) / 2);
        for i in 0..d {
            for j in i + 1..d {
                let s = self.sigma_hat[(i, j)];
                out.push((Edge::new(i, j), s * s / (self.sigma_hat[(i, i)] * self.sigma_hat[(j, j)])));
            }
        }
        Ok(out)
    }
}

/// Empirical covariance `(1/n) Σ_k x_k x_kᵀ`; no centring.
pub fn empirical_covariance(batch: &SampleBatch) -> EmpiricalMoments {
    let mut acc = OuterAccumulator::new(batch.d());
    let mut row = vec![0.0; batch.d()];
    for k in 0..batch.n() {
        for (i, x) in row.iter_mut().enumerate() {
            *x = batch.data[(k, i)];
        }
        acc.add(&row);
    }
    acc.finish(batch.n())
}

/// `-½ ln(1 - ρ̂²)` for the pair. Perfectly correlated pairs are capped at
/// `|ρ̂|² = 1 - PERFECT_CORRELATION_EPS` and flagged.
pub fn empirical_mi(moments: &EmpiricalMoments, pair: Edge) -> Result<EmpiricalMi> {
    let rho = moments.correlation(pair)?;
    let r2 = rho * rho;
    let cap = 1.0 - PERFECT_CORRELATION_EPS;
    if rho.abs() >= cap {
        Ok(EmpiricalMi { nats: -0.5 * (1.0 - cap * cap).ln(), saturated: true })
    } else {
        Ok(EmpiricalMi { nats: -0.5 * (-r2).ln_1p(), saturated: false })
    }
}
