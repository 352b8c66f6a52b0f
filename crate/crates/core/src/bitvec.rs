//! Packed binary vectors.
//!
//! Coordinate `i` (0-based) lives in word `i / 64` at bit `i % 64`. Bits past
//! the dimension are always zero, so equality and hashing work word-wise.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

/// A point of `{0,1}^d`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVector {
    dim: usize,
    words: Vec<u64>,
}

#[inline]
pub(crate) fn words_for(dim: usize) -> usize {
    dim.div_ceil(WORD_BITS)
}

/// Mask of the valid bits in the last word of a `dim`-bit vector.
#[inline]
fn tail_mask(dim: usize) -> u64 {
    match dim % WORD_BITS {
        0 => u64::MAX,
        rem => (1u64 << rem) - 1,
    }
}

impl BitVector {
    /// The all-zero vector.
    pub fn zeros(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        Ok(Self {
            dim,
            words: vec![0; words_for(dim)],
        })
    }

    /// Packs a list of 0/1 values, coordinate 0 first.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let mut v = Self::zeros(bits.len())?;
        for (i, &b) in bits.iter().enumerate() {
            match b {
                0 => {}
                1 => v.words[i / WORD_BITS] |= 1 << (i % WORD_BITS),
                other => {
                    return Err(Error::InvalidBit {
                        position: i,
                        value: other.to_string(),
                    })
                }
            }
        }
        Ok(v)
    }

    pub fn from_bools(bits: &[bool]) -> Result<Self> {
        let mut v = Self::zeros(bits.len())?;
        for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
            v.words[i / WORD_BITS] |= 1 << (i % WORD_BITS);
        }
        Ok(v)
    }

    /// Builds a vector from packed words. Fails if the word count is wrong or
    /// any padding bit is set.
    pub fn from_words(dim: usize, words: Vec<u64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if words.len() != words_for(dim) {
            return Err(Error::Parameter(format!(
                "{} words cannot hold a {dim}-bit vector",
                words.len()
            )));
        }
        if words[words.len() - 1] & !tail_mask(dim) != 0 {
            return Err(Error::Parameter(
                "padding bits beyond dimension are set".into(),
            ));
        }
        Ok(Self { dim, words })
    }

    /// Parses a run of `'0'`/`'1'` characters, coordinate 0 first.
    pub fn parse(text: &str) -> Result<Self> {
        let mut v = Self::zeros(text.len())?;
        for (i, ch) in text.bytes().enumerate() {
            match ch {
                b'0' => {}
                b'1' => v.words[i / WORD_BITS] |= 1 << (i % WORD_BITS),
                _ => {
                    return Err(Error::InvalidBit {
                        position: i,
                        value: text[i..].chars().next().unwrap_or('?').to_string(),
                    })
                }
            }
        }
        Ok(v)
    }

    /// Uniformly random vector.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Self> {
        let mut v = Self::zeros(dim)?;
        for w in v.words.iter_mut() {
            *w = rng.gen();
        }
        let last = v.words.len() - 1;
        v.words[last] &= tail_mask(dim);
        Ok(v)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Bit at 0-based coordinate `i`.
    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(
            i < self.dim,
            "coordinate {i} out of range for dimension {}",
            self.dim
        );
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    pub fn to_bits(&self) -> Vec<u8> {
        (0..self.dim).map(|i| self.get(i) as u8).collect()
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Copy with the given 0-based coordinates flipped.
    pub fn flipped(&self, coords: impl IntoIterator<Item = usize>) -> Self {
        let mut out = self.clone();
        for i in coords {
            assert!(
                i < self.dim,
                "coordinate {i} out of range for dimension {}",
                self.dim
            );
            out.words[i / WORD_BITS] ^= 1 << (i % WORD_BITS);
        }
        out
    }

    pub fn complement(&self) -> Self {
        let mut out = self.clone();
        for w in out.words.iter_mut() {
            *w = !*w;
        }
        let last = out.words.len() - 1;
        out.words[last] &= tail_mask(self.dim);
        out
    }

    /// Hamming distance.
    pub fn hamming(&self, other: &Self) -> Result<usize> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(self.hamming_unchecked(other))
    }

    /// Hamming distance without the dimension check. Vectors of different
    /// dimension give a meaningless (but memory-safe) answer.
    #[inline]
    pub(crate) fn hamming_unchecked(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Row bytes: `ceil(d/8)` bytes, coordinate `i` at byte `i/8`, bit `i%8`.
    pub fn to_packed_bytes(&self) -> Vec<u8> {
        let len = self.dim.div_ceil(8);
        self.words
            .iter()
            .flat_map(|w| w.to_le_bytes())
            .take(len)
            .collect()
    }

    /// Inverse of [`to_packed_bytes`](Self::to_packed_bytes); rejects nonzero
    /// padding bits.
    pub fn from_packed_bytes(dim: usize, bytes: &[u8]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if bytes.len() != dim.div_ceil(8) {
            return Err(Error::Parameter(format!(
                "{} bytes cannot hold a {dim}-bit row",
                bytes.len()
            )));
        }
        let words = bytes
            .chunks(8)
            .map(|chunk| {
                let mut buf = [0u8; 8];
                buf[..chunk.len()].copy_from_slice(chunk);
                u64::from_le_bytes(buf)
            })
            .collect();
        Self::from_words(dim, words)
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (0..self.dim)
            .map(|i| if self.get(i) { '1' } else { '0' })
            .collect();
        f.write_str(&s)
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector(d={}, {})", self.dim, self)
    }
}
