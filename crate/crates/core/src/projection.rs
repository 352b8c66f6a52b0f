//! Coordinate-sampling projections.
//!
//! A projection sequence is a list of 1-based coordinate indices. Applying it
//! to a point extracts those coordinates in order. Two points collide under a
//! sequence when they agree on every sampled coordinate, which depends only on
//! the *set* of indices; [`ProjectionSeq::uniq`] exploits that.
//!
//! Samplers:
//!
//! - [`sample_dp`]: each coordinate independently with probability `p`.
//! - [`sample_dp_t`]: concatenation of `t` independent [`sample_dp`] draws.
//! - [`sample_uniq_direct`]: the index set of a [`sample_dp_t`] draw, sampled
//!   in one pass. A coordinate is absent from all `t` blocks with probability
//!   `(1-p)^t`, independently across coordinates, so each coordinate is kept
//!   with probability `1 - (1-p)^t`.

use rand::distributions::{Bernoulli, Distribution};
use rand::Rng;

use crate::bitvec::{words_for, BitVector};
use crate::error::{param_err, Error, Result};

/// An ordered list of coordinate indices in `1..=dim`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ProjectionSeq {
    dim: usize,
    indices: Vec<u32>,
    deduped: bool,
}

/// Bits of a point at the indices of a sequence, packed like [`BitVector`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ProjectedKey {
    pub len: usize,
    pub words: Vec<u64>,
}

fn check_dim_p(d: usize, p: f64) -> Result<Bernoulli> {
    if d == 0 {
        return Err(Error::ZeroDimension);
    }
    if d > u32::MAX as usize {
        return param_err(format!("dimension {d} exceeds the supported maximum"));
    }
    if !(p > 0.0 && p < 1.0) {
        return param_err(format!("inclusion probability must lie in (0,1), got {p}"));
    }
    Bernoulli::new(p).map_err(|e| Error::Parameter(e.to_string()))
}

fn is_strictly_increasing(indices: &[u32]) -> bool {
    indices.windows(2).all(|w| w[0] < w[1])
}

impl ProjectionSeq {
    /// Validates that every index lies in `1..=dim`.
    pub fn new(dim: usize, indices: Vec<u32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if let Some(&bad) = indices.iter().find(|&&i| i == 0 || i as usize > dim) {
            return param_err(format!("index {bad} outside 1..={dim}"));
        }
        let deduped = is_strictly_increasing(&indices);
        Ok(Self {
            dim,
            indices,
            deduped,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// 1-based coordinate indices.
    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// True when the indices are strictly increasing.
    pub fn is_deduped(&self) -> bool {
        self.deduped
    }

    /// Distinct indices, ascending.
    pub fn uniq(&self) -> Self {
        if self.deduped {
            return self.clone();
        }
        let mut indices = self.indices.clone();
        indices.sort_unstable();
        indices.dedup();
        Self {
            dim: self.dim,
            indices,
            deduped: true,
        }
    }

    /// Bits of `v` at the sequence's indices, in sequence order.
    pub fn apply(&self, v: &BitVector) -> Result<ProjectedKey> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.dim(),
            });
        }
        let mut words = vec![0u64; self.indices.len().div_ceil(64)];
        for (k, &idx) in self.indices.iter().enumerate() {
            if v.get(idx as usize - 1) {
                words[k / 64] |= 1 << (k % 64);
            }
        }
        Ok(ProjectedKey {
            len: self.indices.len(),
            words,
        })
    }

    /// Packed indicator of the sampled coordinate set. Two points collide
    /// under this sequence iff their words agree under the mask.
    pub fn mask(&self) -> Vec<u64> {
        let mut mask = vec![0u64; words_for(self.dim)];
        for &idx in &self.indices {
            let i = idx as usize - 1;
            mask[i / 64] |= 1 << (i % 64);
        }
        mask
    }
}

/// One draw from the coordinate-inclusion distribution: each coordinate of
/// `1..=d` independently with probability `p`, in increasing order.
pub fn sample_dp<R: Rng + ?Sized>(d: usize, p: f64, rng: &mut R) -> Result<ProjectionSeq> {
    let coin = check_dim_p(d, p)?;
    let indices = (1..=d as u32).filter(|_| coin.sample(rng)).collect();
    Ok(ProjectionSeq {
        dim: d,
        indices,
        deduped: true,
    })
}

/// Concatenation of `t` independent [`sample_dp`] draws.
pub fn sample_dp_t<R: Rng + ?Sized>(
    d: usize,
    p: f64,
    t: usize,
    rng: &mut R,
) -> Result<ProjectionSeq> {
    let coin = check_dim_p(d, p)?;
    if t == 0 {
        return param_err("repetition count t must be at least 1");
    }
    let mut indices = Vec::with_capacity((d as f64 * p * t as f64).ceil() as usize);
    for _ in 0..t {
        indices.extend((1..=d as u32).filter(|_| coin.sample(rng)));
    }
    let deduped = is_strictly_increasing(&indices);
    Ok(ProjectionSeq {
        dim: d,
        indices,
        deduped,
    })
}

/// `1 - (1-p)^t`: the probability that a coordinate appears at least once in
/// `t` independent inclusion draws. `t` may be fractional.
pub fn inclusion_probability(p: f64, t: f64) -> f64 {
    -(t * (-p).ln_1p()).exp_m1()
}

/// Samples the index set of a `t`-fold concatenated draw directly, in one
/// pass over the coordinates. `t` may be any positive real; for integer `t`
/// the result has the same distribution as `sample_dp_t(..).uniq()`.
pub fn sample_uniq_direct<R: Rng + ?Sized>(
    d: usize,
    p: f64,
    t: f64,
    rng: &mut R,
) -> Result<ProjectionSeq> {
    check_dim_p(d, p)?;
    if !(t.is_finite() && t > 0.0) {
        return param_err(format!("repetition count t must be positive, got {t}"));
    }
    let keep = inclusion_probability(p, t);
    let coin = Bernoulli::new(keep.min(1.0)).map_err(|e| Error::Parameter(e.to_string()))?;
    let indices = (1..=d as u32).filter(|_| coin.sample(rng)).collect();
    Ok(ProjectionSeq {
        dim: d,
        indices,
        deduped: true,
    })
}
