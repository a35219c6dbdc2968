use rand::Rng;
use rand_distr::StandardNormal;

use super::DataMatrix;
use crate::error::{GlimmerError, Result};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticKind {
    /// i.i.d. values in `[0, 1)`.
    UniformRandom,
    /// Dimension `j` is dimension `j - 1` plus a Gaussian step of `step_scale`.
    SmoothTemporalWalk { step_scale: f64 },
    /// Points on a random `intrinsic`-dimensional affine subspace plus
    /// isotropic Gaussian noise of scale `noise`.
    PlaneEmbedded { intrinsic: usize, noise: f64 },
}

impl SyntheticKind {
    pub fn name(&self) -> &'static str {
        match self {
            SyntheticKind::UniformRandom => "uniform",
            SyntheticKind::SmoothTemporalWalk { .. } => "walk",
            SyntheticKind::PlaneEmbedded { .. } => "plane",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub point_count: usize,
    pub dimension_count: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn uniform(point_count: usize, dimension_count: usize, seed: u64) -> Self {
        Self {
            kind: SyntheticKind::UniformRandom,
            point_count,
            dimension_count,
            seed,
        }
    }

    pub fn walk(point_count: usize, dimension_count: usize, step_scale: f64, seed: u64) -> Self {
        Self {
            kind: SyntheticKind::SmoothTemporalWalk { step_scale },
            point_count,
            dimension_count,
            seed,
        }
    }

    pub fn plane(
        point_count: usize,
        dimension_count: usize,
        intrinsic: usize,
        noise: f64,
        seed: u64,
    ) -> Self {
        Self {
            kind: SyntheticKind::PlaneEmbedded { intrinsic, noise },
            point_count,
            dimension_count,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.point_count == 0 || self.dimension_count == 0 {
            return Err(GlimmerError::InvalidConfig(
                "synthetic data needs at least one point and one dimension".into(),
            ));
        }
        match self.kind {
            SyntheticKind::SmoothTemporalWalk { step_scale }
                if !(step_scale.is_finite() && step_scale >= 0.0) =>
            {
                Err(GlimmerError::InvalidConfig("walk step scale must be >= 0".into()))
            }
            SyntheticKind::PlaneEmbedded { intrinsic, noise } => {
                if intrinsic == 0 || intrinsic > self.dimension_count {
                    Err(GlimmerError::InvalidConfig(format!(
                        "intrinsic dimension {intrinsic} not in 1..={}",
                        self.dimension_count
                    )))
                } else if !(noise.is_finite() && noise >= 0.0) {
                    Err(GlimmerError::InvalidConfig("noise must be >= 0".into()))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Row-major `point_count x dimension_count` values, computed in `f64`.
    pub fn sample(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let (n, d) = (self.point_count, self.dimension_count);
        let tag = match self.kind {
            SyntheticKind::UniformRandom => 1,
            SyntheticKind::SmoothTemporalWalk { .. } => 2,
            SyntheticKind::PlaneEmbedded { .. } => 3,
        };
        let mut rng = rng::stream(self.seed, &[tag]);
        let mut out = Vec::with_capacity(n * d);
        match self.kind {
            SyntheticKind::UniformRandom => {
                out.extend((0..n * d).map(|_| rng.random::<f64>()));
            }
            SyntheticKind::SmoothTemporalWalk { step_scale } => {
                for _ in 0..n {
                    let mut v: f64 = rng.random();
                    out.push(v);
                    for _ in 1..d {
                        let step: f64 = rng.sample(StandardNormal);
                        v += step_scale * step;
                        out.push(v);
                    }
                }
            }
            SyntheticKind::PlaneEmbedded { intrinsic, noise } => {
                let offset: Vec<f64> = (0..d).map(|_| rng.random()).collect();
                let basis: Vec<f64> = (0..intrinsic * d)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let mut coords = vec![0.0; intrinsic];
                for _ in 0..n {
                    for c in coords.iter_mut() {
                        *c = rng.random();
                    }
                    for j in 0..d {
                        let mut v = offset[j];
                        for (a, c) in coords.iter().enumerate() {
                            v += c * basis[a * d + j];
                        }
                        if noise > 0.0 {
                            v += noise * rng.sample::<f64, _>(StandardNormal);
                        }
                        out.push(v);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Generate a dataset as one width-1 chunk per dimension (none active).
/// Use [`DataMatrix::rechunk`] for wider chunks.
pub fn generate<T: Scalar>(spec: &SyntheticSpec) -> Result<DataMatrix<T>> {
    let values: Vec<T> = spec.sample()?.into_iter().map(T::of).collect();
    DataMatrix::from_row_major(&values, spec.point_count, spec.dimension_count, 1, None)
}
