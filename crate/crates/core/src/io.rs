//! Dataset file formats and synthetic instance generators.
//!
//! Text format: one vector per line, a run of `'0'`/`'1'`, coordinate 0 first,
//! every line newline-terminated on write.
//!
//! Binary format (`HBD1`):
//!
//! ```text
//! magic  "HBD1"                 4 bytes
//! n      u32 LE                 4 bytes
//! d      u32 LE                 4 bytes
//! rows   n * ceil(d/8) bytes    coordinate i at byte i/8, bit i%8 (LSB first)
//! ```
//!
//! Padding bits in the last byte of a row must be zero.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;

use crate::bitvec::BitVector;
use crate::error::{param_err, Error, Result};
use crate::rng::seeded;

pub const BIN_MAGIC: &[u8; 4] = b"HBD1";
const BIN_HEADER_LEN: usize = 12;

/// Attempts allowed when drawing far points by rejection.
pub const MAX_REJECTIONS: usize = 1_000_000;

/// A set of equal-dimension binary vectors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    dim: usize,
    vectors: Vec<BitVector>,
    labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(vectors: Vec<BitVector>) -> Result<Self> {
        let first = vectors.first().ok_or(Error::Empty)?;
        let dim = first.dim();
        if let Some(v) = vectors.iter().find(|v| v.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.dim(),
            });
        }
        Ok(Self {
            dim,
            vectors,
            labels: None,
        })
    }

    /// Attaches one unique label per vector.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.vectors.len() {
            return param_err(format!(
                "{} labels for {} vectors",
                labels.len(),
                self.vectors.len()
            ));
        }
        let mut seen = HashSet::with_capacity(labels.len());
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return param_err(format!("duplicate label {dup:?}"));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[BitVector] {
        &self.vectors
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn into_vectors(self) -> Vec<BitVector> {
        self.vectors
    }

    /// The first `n` vectors (labels are dropped).
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return param_err(format!("prefix {n} of a {}-point dataset", self.len()));
        }
        Self::new(self.vectors[..n].to_vec())
    }
}

// ---------------------------------------------------------------------------
// Text format

pub fn read_text_from<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut vectors = Vec::new();
    let mut dim = None;
    for (lineno, line) in reader.split(b'\n').enumerate() {
        let line = line?;
        let line_no = lineno + 1;
        if let Some(pos) = line.iter().position(|&b| b != b'0' && b != b'1') {
            return Err(Error::Text {
                line: line_no,
                reason: format!(
                    "invalid character {:?} at column {}",
                    line[pos] as char,
                    pos + 1
                ),
            });
        }
        match dim {
            None if line.is_empty() => {
                return Err(Error::Text {
                    line: line_no,
                    reason: "empty line".into(),
                })
            }
            None => dim = Some(line.len()),
            Some(d) if d != line.len() => {
                return Err(Error::Text {
                    line: line_no,
                    reason: format!("expected {d} bits, found {}", line.len()),
                })
            }
            Some(_) => {}
        }
        // Only '0'/'1' bytes remain, so this is valid UTF-8.
        let text = std::str::from_utf8(&line).expect("ascii digits");
        vectors.push(BitVector::parse(text)?);
    }
    if vectors.is_empty() {
        return Err(Error::Empty);
    }
    Dataset::new(vectors)
}

pub fn write_text_to<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    for v in ds.vectors() {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_text(path: impl AsRef<Path>) -> Result<Dataset> {
    read_text_from(BufReader::new(fs::File::open(path)?))
}

pub fn write_text(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    write_text_to(ds, std::io::BufWriter::new(fs::File::create(path)?))
}

// ---------------------------------------------------------------------------
// Binary format

pub fn encode_bin(ds: &Dataset) -> Vec<u8> {
    let row_len = ds.dim().div_ceil(8);
    let mut out = Vec::with_capacity(BIN_HEADER_LEN + ds.len() * row_len);
    out.extend_from_slice(BIN_MAGIC);
    out.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    out.extend_from_slice(&(ds.dim() as u32).to_le_bytes());
    for v in ds.vectors() {
        out.extend_from_slice(&v.to_packed_bytes());
    }
    out
}

fn format_err<T>(offset: usize, reason: impl Into<String>) -> Result<T> {
    Err(Error::Format {
        offset: offset as u64,
        reason: reason.into(),
    })
}

/// Decodes one binary dataset from the front of `bytes`, returning it with the
/// number of bytes consumed. `base` is added to reported error offsets.
pub fn decode_bin_prefix(bytes: &[u8], base: usize) -> Result<(Dataset, usize)> {
    if bytes.len() < BIN_HEADER_LEN {
        return format_err(base + bytes.len(), "truncated dataset header");
    }
    if &bytes[..4] != BIN_MAGIC {
        return format_err(base, "bad dataset magic");
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if n == 0 {
        return format_err(base + 4, "dataset has no vectors");
    }
    if d == 0 {
        return format_err(base + 8, "dataset has dimension 0");
    }
    let row_len = d.div_ceil(8);
    let body_len = n.checked_mul(row_len).ok_or(Error::Format {
        offset: (base + 4) as u64,
        reason: "dataset size overflows".into(),
    })?;
    let end = BIN_HEADER_LEN + body_len;
    if bytes.len() < end {
        return format_err(
            base + bytes.len(),
            format!("truncated dataset: need {end} bytes, have {}", bytes.len()),
        );
    }
    let mut vectors = Vec::with_capacity(n);
    for (i, row) in bytes[BIN_HEADER_LEN..end].chunks_exact(row_len).enumerate() {
        let offset = base + BIN_HEADER_LEN + i * row_len;
        match BitVector::from_packed_bytes(d, row) {
            Ok(v) => vectors.push(v),
            Err(_) => return format_err(offset, format!("row {i} has nonzero padding bits")),
        }
    }
    Ok((Dataset::new(vectors)?, end))
}

/// Decodes a whole binary file; trailing bytes are an error.
pub fn decode_bin(bytes: &[u8]) -> Result<Dataset> {
    let (ds, used) = decode_bin_prefix(bytes, 0)?;
    if used != bytes.len() {
        return format_err(used, format!("{} trailing bytes", bytes.len() - used));
    }
    Ok(ds)
}

pub fn read_bin(path: impl AsRef<Path>) -> Result<Dataset> {
    decode_bin(&fs::read(path)?)
}

pub fn write_bin(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    fs::write(path, encode_bin(ds))?;
    Ok(())
}

/// Reads either format, choosing by the leading magic bytes.
pub fn read_any_from<R: Read>(mut reader: R) -> Result<Dataset> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.starts_with(BIN_MAGIC) {
        decode_bin(&bytes)
    } else {
        read_text_from(bytes.as_slice())
    }
}

pub fn read_any(path: impl AsRef<Path>) -> Result<Dataset> {
    read_any_from(fs::File::open(path)?)
}

// ---------------------------------------------------------------------------
// Generators

/// Output of [`gen_planted`].
#[derive(Clone, Debug)]
pub struct PlantedInstance {
    pub dataset: Dataset,
    pub query: BitVector,
    pub planted_id: usize,
}

fn flip_random<R: Rng + ?Sized>(v: &BitVector, count: usize, rng: &mut R) -> BitVector {
    v.flipped(sample(rng, v.dim(), count))
}

/// A uniform random query, one point at exactly `plant_distance` from it, and
/// `n - 1` uniform random points redrawn while they fall within
/// `max(r, plant_distance)` of the query.
pub fn gen_planted(
    n: usize,
    d: usize,
    r: usize,
    plant_distance: usize,
    seed: u64,
) -> Result<PlantedInstance> {
    if n < 2 {
        return param_err(format!("a planted instance needs n >= 2, got {n}"));
    }
    if d == 0 {
        return Err(Error::ZeroDimension);
    }
    if plant_distance > d {
        return param_err(format!(
            "plant distance {plant_distance} exceeds dimension {d}"
        ));
    }
    let mut rng = seeded(seed);
    let query = BitVector::random(d, &mut rng)?;
    let planted_id = rng.gen_range(0..n);
    let threshold = r.max(plant_distance);
    let mut rejections = 0usize;
    let mut vectors = Vec::with_capacity(n);
    for id in 0..n {
        if id == planted_id {
            vectors.push(flip_random(&query, plant_distance, &mut rng));
            continue;
        }
        loop {
            let v = BitVector::random(d, &mut rng)?;
            if v.hamming_unchecked(&query) > threshold {
                vectors.push(v);
                break;
            }
            rejections += 1;
            if rejections >= MAX_REJECTIONS {
                return Err(Error::Generation(format!(
                    "rejection sampling failed {MAX_REJECTIONS} times; d={d} is too small for radius {threshold}"
                )));
            }
        }
    }
    Ok(PlantedInstance {
        dataset: Dataset::new(vectors)?,
        query,
        planted_id,
    })
}

/// `n` uniform random points.
pub fn gen_uniform(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    let mut rng = seeded(seed);
    let vectors = (0..n)
        .map(|_| BitVector::random(d, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(vectors)
}

/// A uniform random query and `n` points each at exactly `distance` from it.
pub fn gen_shell(n: usize, d: usize, distance: usize, seed: u64) -> Result<(Dataset, BitVector)> {
    if distance > d {
        return param_err(format!("distance {distance} exceeds dimension {d}"));
    }
    let mut rng = seeded(seed);
    let query = BitVector::random(d, &mut rng)?;
    let vectors = (0..n)
        .map(|_| flip_random(&query, distance, &mut rng))
        .collect();
    Ok((Dataset::new(vectors)?, query))
}
