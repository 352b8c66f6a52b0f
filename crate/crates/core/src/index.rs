//! The near-neighbor index.
//!
//! `L` projection sequences are drawn up front from the seed. Every point is
//! hashed into every table under the fingerprint of its projection. A query
//! probes tables `1..=L` in order, verifies each colliding candidate by exact
//! Hamming distance and stops at the first one within `(1+eps)·r`.
//!
//! Parameters follow `c = 1/(1+eps)`, `p = 1 - e^{-1/r}`, `t = ceil(c ln n)`.
//! With integer `t` the per-table collision probability of a pair at distance
//! `r` is exactly `q_near = (1-p)^{r t} = e^{-t}`, and choosing
//! `L = ceil(ln(1/delta_fail) / q_near)` gives `(1 - q_near)^L <= delta_fail`.

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use xxhash_rust::xxh3::xxh3_128_with_seed;

use crate::bitvec::BitVector;
use crate::error::{param_err, Error, Result};
use crate::io::{decode_bin_prefix, encode_bin, Dataset};
use crate::projection::{inclusion_probability, sample_uniq_direct, ProjectionSeq};
use crate::rng::seeded;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"LSH1";
pub const SNAPSHOT_VERSION: u16 = 1;

/// Seed of the bucket fingerprint hash. Part of the snapshot format.
const FINGERPRINT_SEED: u64 = 0x6269_746c_7368_0001;

/// Scheme parameters, inputs and derived values together.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexParams {
    pub n: usize,
    pub d: usize,
    /// Near radius.
    pub r: usize,
    /// Approximation slack: answers within `(1+eps)·r` are accepted.
    pub eps: f64,
    /// `1/(1+eps)`.
    pub c: f64,
    /// Per-coordinate inclusion probability of one block, `1 - e^{-1/r}`.
    pub p: f64,
    /// Blocks per sequence.
    pub t: u64,
    /// Number of tables.
    pub l: usize,
    /// Per-table collision probability of a pair at distance exactly `r`.
    pub q_near: f64,
    pub delta_fail: f64,
}

/// Failure probability used when none is given: `1/n`, capped at `1/2`.
pub fn default_delta(n: usize) -> f64 {
    (1.0 / n.max(2) as f64).min(0.5)
}

/// Derives the full parameter set from the problem inputs.
pub fn derive_params(
    n: usize,
    d: usize,
    r: usize,
    eps: f64,
    delta_fail: f64,
) -> Result<IndexParams> {
    if n == 0 {
        return param_err("point count n must be at least 1");
    }
    if n > u32::MAX as usize {
        return param_err(format!("point count {n} exceeds the supported maximum"));
    }
    if d == 0 {
        return Err(Error::ZeroDimension);
    }
    if r == 0 {
        return param_err("radius r must be at least 1 (p = 1 - e^{-1/r} is undefined at r = 0)");
    }
    if r > d {
        return param_err(format!("radius r = {r} exceeds dimension d = {d}"));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return param_err(format!("eps must be a positive finite number, got {eps}"));
    }
    if !(delta_fail > 0.0 && delta_fail < 1.0) {
        return param_err(format!("delta_fail must lie in (0,1), got {delta_fail}"));
    }
    let c = 1.0 / (1.0 + eps);
    let p = -(-1.0 / r as f64).exp_m1();
    let t = ((c * (n as f64).ln()).ceil() as u64).max(1);
    let q_near = near_collision_probability(p, r, t as f64);
    let l = ((1.0 / delta_fail).ln() / q_near).ceil().max(1.0);
    if l > u32::MAX as f64 {
        return param_err(format!("table count {l} is too large"));
    }
    Ok(IndexParams {
        n,
        d,
        r,
        eps,
        c,
        p,
        t,
        l: l as usize,
        q_near,
        delta_fail,
    })
}

/// `(1-p)^{r t}`.
fn near_collision_probability(p: f64, r: usize, t: f64) -> f64 {
    ((-p).ln_1p() * r as f64 * t).exp()
}

impl IndexParams {
    /// Largest distance accepted as an answer: `floor((1+eps)·r)`, with a
    /// small tolerance so that products like `1.1 · 10` land on the integer.
    pub fn accept_radius(&self) -> usize {
        ((1.0 + self.eps) * self.r as f64 + 1e-9).floor() as usize
    }

    /// Probability that a coordinate appears in a sequence, `1 - (1-p)^t`.
    pub fn inclusion_probability(&self) -> f64 {
        inclusion_probability(self.p, self.t as f64)
    }

    /// `(1 - q_near)^L`, the chance that a distance-`r` point collides in no table.
    pub fn miss_bound(&self) -> f64 {
        (self.l as f64 * (-self.q_near).ln_1p()).exp()
    }

    fn validate(&self) -> Result<()> {
        let ok = self.n >= 1
            && self.n <= u32::MAX as usize
            && self.d >= 1
            && self.r >= 1
            && self.r <= self.d
            && self.eps.is_finite()
            && self.eps > 0.0
            && (self.c - 1.0 / (1.0 + self.eps)).abs() <= 1e-12
            && (self.p + (-1.0 / self.r as f64).exp_m1()).abs() <= 1e-12
            && self.t >= 1
            && self.l >= 1
            && self.q_near > 0.0
            && self.q_near <= 1.0
            && self.delta_fail > 0.0
            && self.delta_fail < 1.0;
        if ok {
            Ok(())
        } else {
            param_err(format!("inconsistent index parameters: {self:?}"))
        }
    }
}

/// What a query found.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Answer {
    /// A stored point within `(1+eps)·r`, with its verified distance.
    Found { id: usize, distance: usize },
    /// No colliding point was within `(1+eps)·r`.
    NoneWithinR,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QueryOutcome {
    pub answer: Answer,
    /// Candidate verifications, counting a point once per table it collided in.
    pub candidates_scanned: u64,
    pub tables_probed: u64,
    /// Indexes abandoned over budget before this answer (bank queries only).
    pub restarts: u32,
}

impl QueryOutcome {
    pub fn is_found(&self) -> bool {
        matches!(self.answer, Answer::Found { .. })
    }
}

/// Result of a scan with a candidate budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BudgetedScan {
    Completed(QueryOutcome),
    Aborted {
        candidates_scanned: u64,
        tables_probed: u64,
    },
}

/// One hash table: buckets sorted by fingerprint, members stored contiguously.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Table {
    keys: Vec<u128>,
    offsets: Vec<u32>,
    members: Vec<u32>,
    lookup: FxHashMap<u128, u32>,
}

impl Table {
    fn from_sorted(entries: &[(u128, u32)]) -> Self {
        let mut keys = Vec::new();
        let mut offsets = Vec::new();
        let mut members = Vec::with_capacity(entries.len());
        for (i, &(fp, id)) in entries.iter().enumerate() {
            if i == 0 || entries[i - 1].0 != fp {
                keys.push(fp);
                offsets.push(i as u32);
            }
            members.push(id);
        }
        offsets.push(members.len() as u32);
        Self::assemble(keys, offsets, members)
    }

    fn assemble(keys: Vec<u128>, offsets: Vec<u32>, members: Vec<u32>) -> Self {
        let mut lookup = FxHashMap::default();
        lookup.reserve(keys.len());
        for (b, &k) in keys.iter().enumerate() {
            lookup.insert(k, b as u32);
        }
        Self {
            keys,
            offsets,
            members,
            lookup,
        }
    }

    fn bucket(&self, b: usize) -> &[u32] {
        &self.members[self.offsets[b] as usize..self.offsets[b + 1] as usize]
    }

    fn get(&self, fp: u128) -> &[u32] {
        match self.lookup.get(&fp) {
            Some(&b) => self.bucket(b as usize),
            None => &[],
        }
    }
}

/// Fingerprint of a point's projection. For a fixed mask, the masked words
/// determine the projected bits and vice versa.
fn fingerprint(buf: &mut Vec<u8>, mask: &[u64], v: &BitVector) -> u128 {
    buf.clear();
    for (w, m) in v.words().iter().zip(mask) {
        buf.extend_from_slice(&(w & m).to_le_bytes());
    }
    xxh3_128_with_seed(buf, FINGERPRINT_SEED)
}

/// The bank of `L` hash tables over a fixed point set. Immutable once built.
#[derive(Clone, Debug)]
pub struct LshIndex {
    params: IndexParams,
    points: Vec<BitVector>,
    seqs: Vec<ProjectionSeq>,
    masks: Vec<Vec<u64>>,
    tables: Vec<Table>,
    seed: u64,
}

impl LshIndex {
    /// Draws `L` sequences from `seed` and hashes every point into every table.
    pub fn build(points: Vec<BitVector>, params: IndexParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let mut rng = seeded(seed);
        let seqs = (0..params.l)
            .map(|_| sample_uniq_direct(params.d, params.p, params.t as f64, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_sequences(points, params, seqs, seed)
    }

    /// Builds the tables for externally drawn sequences. `params.l` must equal
    /// the number of sequences; the sequences may come from any sampler.
    pub fn from_sequences(
        points: Vec<BitVector>,
        params: IndexParams,
        seqs: Vec<ProjectionSeq>,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        if points.len() != params.n {
            return param_err(format!(
                "params expect n = {} points, got {}",
                params.n,
                points.len()
            ));
        }
        if let Some(p) = points.iter().find(|p| p.dim() != params.d) {
            return Err(Error::DimensionMismatch {
                expected: params.d,
                found: p.dim(),
            });
        }
        if seqs.len() != params.l {
            return param_err(format!(
                "params expect L = {} sequences, got {}",
                params.l,
                seqs.len()
            ));
        }
        if let Some(s) = seqs.iter().find(|s| s.dim() != params.d) {
            return Err(Error::DimensionMismatch {
                expected: params.d,
                found: s.dim(),
            });
        }
        let masks: Vec<Vec<u64>> = seqs.iter().map(ProjectionSeq::mask).collect();
        let tables = masks
            .par_iter()
            .map(|mask| {
                let mut buf = Vec::new();
                let mut entries: Vec<(u128, u32)> = points
                    .iter()
                    .enumerate()
                    .map(|(id, p)| (fingerprint(&mut buf, mask, p), id as u32))
                    .collect();
                entries.sort_unstable();
                Table::from_sorted(&entries)
            })
            .collect();
        Ok(Self {
            params,
            points,
            seqs,
            masks,
            tables,
            seed,
        })
    }

    pub fn params(&self) -> &IndexParams {
        &self.params
    }

    pub fn points(&self) -> &[BitVector] {
        &self.points
    }

    pub fn sequences(&self) -> &[ProjectionSeq] {
        &self.seqs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_tables(&self) -> usize {
        self.tables.len()
    }

    /// Bucket sizes of one table, in fingerprint order.
    pub fn bucket_sizes(&self, table: usize) -> Vec<usize> {
        let t = &self.tables[table];
        (0..t.keys.len()).map(|b| t.bucket(b).len()).collect()
    }

    /// Ids colliding with `q` in table `table`.
    pub fn candidates(&self, table: usize, q: &BitVector) -> Result<&[u32]> {
        self.check_query(q)?;
        let mut buf = Vec::new();
        Ok(self.tables[table].get(fingerprint(&mut buf, &self.masks[table], q)))
    }

    /// Total size of the candidate lists of `q` over all tables, counting a
    /// point once per table it collides in.
    pub fn count_candidates(&self, q: &BitVector) -> Result<u64> {
        self.check_query(q)?;
        let mut buf = Vec::new();
        Ok(self
            .tables
            .iter()
            .zip(&self.masks)
            .map(|(t, m)| t.get(fingerprint(&mut buf, m, q)).len() as u64)
            .sum())
    }

    fn check_query(&self, q: &BitVector) -> Result<()> {
        if q.dim() != self.params.d {
            return Err(Error::DimensionMismatch {
                expected: self.params.d,
                found: q.dim(),
            });
        }
        Ok(())
    }

    fn scan(&self, q: &BitVector, limit: Option<u64>) -> BudgetedScan {
        let accept = self.params.accept_radius();
        let mut buf = Vec::with_capacity(q.words().len() * 8);
        let mut scanned = 0u64;
        let mut probed = 0u64;
        for (table, mask) in self.tables.iter().zip(&self.masks) {
            probed += 1;
            for &id in table.get(fingerprint(&mut buf, mask, q)) {
                if limit.is_some_and(|lim| scanned >= lim) {
                    return BudgetedScan::Aborted {
                        candidates_scanned: scanned,
                        tables_probed: probed,
                    };
                }
                scanned += 1;
                let distance = self.points[id as usize].hamming_unchecked(q);
                if distance <= accept {
                    return BudgetedScan::Completed(QueryOutcome {
                        answer: Answer::Found {
                            id: id as usize,
                            distance,
                        },
                        candidates_scanned: scanned,
                        tables_probed: probed,
                        restarts: 0,
                    });
                }
            }
        }
        BudgetedScan::Completed(QueryOutcome {
            answer: Answer::NoneWithinR,
            candidates_scanned: scanned,
            tables_probed: probed,
            restarts: 0,
        })
    }

    /// Probes the tables in order and returns the first candidate within
    /// `(1+eps)·r`.
    pub fn query(&self, q: &BitVector) -> Result<QueryOutcome> {
        self.check_query(q)?;
        match self.scan(q, None) {
            BudgetedScan::Completed(out) => Ok(out),
            BudgetedScan::Aborted { .. } => unreachable!("unbudgeted scan cannot abort"),
        }
    }

    /// Like [`query`](Self::query) but gives up instead of verifying more than
    /// `max_candidates` candidates.
    pub fn query_budgeted(&self, q: &BitVector, max_candidates: u64) -> Result<BudgetedScan> {
        self.check_query(q)?;
        Ok(self.scan(q, Some(max_candidates)))
    }

    /// Checks that every point sits exactly once in every table, in the bucket
    /// its projection hashes to.
    pub fn verify_consistency(&self) -> Result<()> {
        let mut buf = Vec::new();
        for (ti, (table, mask)) in self.tables.iter().zip(&self.masks).enumerate() {
            let mut seen = vec![false; self.points.len()];
            for b in 0..table.keys.len() {
                for &id in table.bucket(b) {
                    let id = id as usize;
                    if id >= seen.len() || std::mem::replace(&mut seen[id], true) {
                        return param_err(format!("table {ti}: point {id} misplaced"));
                    }
                    if fingerprint(&mut buf, mask, &self.points[id]) != table.keys[b] {
                        return param_err(format!("table {ti}: point {id} in the wrong bucket"));
                    }
                }
            }
            if seen.iter().any(|s| !s) {
                return param_err(format!("table {ti} is missing points"));
            }
        }
        Ok(())
    }

    /// Serializes the index. See [`restore`](Self::restore).
    pub fn snapshot(&self) -> Vec<u8> {
        let p = &self.params;
        let mut out = Vec::new();
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        for v in [p.n as u64, p.d as u64, p.r as u64] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [p.eps, p.p, p.q_near, p.delta_fail] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [p.t, p.l as u64, self.seed] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for s in &self.seqs {
            out.extend_from_slice(&(s.dim() as u32).to_le_bytes());
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            for &i in s.indices() {
                out.extend_from_slice(&i.to_le_bytes());
            }
        }
        let ds = Dataset::new(self.points.clone()).expect("index holds at least one point");
        out.extend_from_slice(&encode_bin(&ds));
        for t in &self.tables {
            out.extend_from_slice(&(t.keys.len() as u32).to_le_bytes());
            for (b, key) in t.keys.iter().enumerate() {
                let bucket = t.bucket(b);
                out.extend_from_slice(&key.to_le_bytes());
                out.extend_from_slice(&(bucket.len() as u32).to_le_bytes());
                for id in bucket {
                    out.extend_from_slice(&id.to_le_bytes());
                }
            }
        }
        out
    }

    /// Reads a snapshot written by [`snapshot`](Self::snapshot).
    ///
    /// Layout, all integers little-endian:
    ///
    /// ```text
    /// "LSH1" | version u16
    /// n u64 | d u64 | r u64 | eps f64 | p f64 | q_near f64 | delta_fail f64 | t u64 | L u64 | seed u64
    /// L x (dim u32 | count u32 | count x index u32)       1-based indices
    /// HBD1 dataset block
    /// L x (buckets u32 | buckets x (fingerprint u128 | members u32 | members x id u32))
    /// ```
    pub fn restore(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(4)? != SNAPSHOT_MAGIC {
            return Err(rd.err_at(0, "bad snapshot magic"));
        }
        let version = rd.u16()?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::Version {
                found: version,
                supported: SNAPSHOT_VERSION,
            });
        }
        let params_at = rd.pos;
        let n = rd.u64()? as usize;
        let d = rd.u64()? as usize;
        let r = rd.u64()? as usize;
        let eps = rd.f64()?;
        let p = rd.f64()?;
        let q_near = rd.f64()?;
        let delta_fail = rd.f64()?;
        let t = rd.u64()?;
        let l = rd.u64()? as usize;
        let seed = rd.u64()?;
        let params = IndexParams {
            n,
            d,
            r,
            eps,
            c: 1.0 / (1.0 + eps),
            p,
            t,
            l,
            q_near,
            delta_fail,
        };
        params
            .validate()
            .map_err(|e| rd.err_at(params_at, e.to_string()))?;

        let mut seqs = Vec::with_capacity(l.min(bytes.len() / 8));
        for _ in 0..l {
            let at = rd.pos;
            let dim = rd.u32()? as usize;
            let count = rd.u32()? as usize;
            rd.ensure(count.saturating_mul(4))?;
            let indices = (0..count).map(|_| rd.u32()).collect::<Result<Vec<_>>>()?;
            if dim != d {
                return Err(rd.err_at(at, format!("sequence dimension {dim}, expected {d}")));
            }
            let seq = ProjectionSeq::new(dim, indices).map_err(|e| rd.err_at(at, e.to_string()))?;
            seqs.push(seq);
        }

        let points_at = rd.pos;
        let (ds, used) = decode_bin_prefix(&bytes[rd.pos..], rd.pos)?;
        rd.pos += used;
        if ds.len() != n || ds.dim() != d {
            return Err(rd.err_at(
                points_at,
                format!(
                    "point block is {}x{}, params say {n}x{d}",
                    ds.len(),
                    ds.dim()
                ),
            ));
        }
        let points = ds.into_vectors();

        let mut tables = Vec::with_capacity(l);
        for ti in 0..l {
            let at = rd.pos;
            let buckets = rd.u32()? as usize;
            rd.ensure(buckets.saturating_mul(20))?;
            let mut keys = Vec::with_capacity(buckets);
            let mut offsets = Vec::with_capacity(buckets + 1);
            let mut members = Vec::with_capacity(n);
            let mut seen = vec![false; n];
            for _ in 0..buckets {
                let key_at = rd.pos;
                let key = rd.u128()?;
                if keys.last().is_some_and(|&prev| prev >= key) {
                    return Err(rd.err_at(key_at, "bucket fingerprints not strictly increasing"));
                }
                let count = rd.u32()? as usize;
                if count == 0 {
                    return Err(rd.err_at(key_at, "empty bucket"));
                }
                rd.ensure(count.saturating_mul(4))?;
                keys.push(key);
                offsets.push(members.len() as u32);
                for _ in 0..count {
                    let id_at = rd.pos;
                    let id = rd.u32()? as usize;
                    if id >= n || std::mem::replace(&mut seen[id], true) {
                        return Err(
                            rd.err_at(id_at, format!("table {ti}: bad or repeated point id {id}"))
                        );
                    }
                    members.push(id as u32);
                }
            }
            if members.len() != n {
                return Err(rd.err_at(
                    at,
                    format!("table {ti} holds {} of {n} points", members.len()),
                ));
            }
            offsets.push(members.len() as u32);
            tables.push(Table::assemble(keys, offsets, members));
        }
        if rd.pos != bytes.len() {
            return Err(rd.err_at(rd.pos, format!("{} trailing bytes", bytes.len() - rd.pos)));
        }
        let masks = seqs.iter().map(ProjectionSeq::mask).collect();
        Ok(Self {
            params,
            points,
            seqs,
            masks,
            tables,
            seed,
        })
    }
}

/// Queries a bank of independently built indexes, abandoning any index whose
/// scan would verify more than `budget_factor · L` candidates and retrying on
/// the next one. If every index runs over budget the last one is scanned to
/// completion. Counters in the outcome add up the work of all attempts.
pub fn query_hp(bank: &[LshIndex], q: &BitVector, budget_factor: f64) -> Result<QueryOutcome> {
    let (last, rest) = match bank.split_last() {
        Some(split) => split,
        None => return param_err("query bank is empty"),
    };
    if !(budget_factor.is_finite() && budget_factor > 0.0) {
        return param_err(format!(
            "budget factor must be positive, got {budget_factor}"
        ));
    }
    let params = &bank[0].params;
    if bank.iter().any(|ix| &ix.params != params) {
        return param_err("indexes in a bank must share parameters");
    }
    bank[0].check_query(q)?;

    let limit = (budget_factor * params.l as f64).floor() as u64;
    let mut scanned = 0;
    let mut probed = 0;
    for (attempt, ix) in bank.iter().enumerate() {
        match ix.scan(q, Some(limit)) {
            BudgetedScan::Completed(out) => {
                return Ok(QueryOutcome {
                    candidates_scanned: scanned + out.candidates_scanned,
                    tables_probed: probed + out.tables_probed,
                    restarts: attempt as u32,
                    ..out
                })
            }
            BudgetedScan::Aborted {
                candidates_scanned,
                tables_probed,
            } => {
                scanned += candidates_scanned;
                probed += tables_probed;
            }
        }
    }
    let out = last.query(q)?;
    Ok(QueryOutcome {
        candidates_scanned: scanned + out.candidates_scanned,
        tables_probed: probed + out.tables_probed,
        restarts: rest.len() as u32 + 1,
        ..out
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err_at(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::Format {
            offset: offset as u64,
            reason: reason.into(),
        }
    }

    fn ensure(&self, len: usize) -> Result<()> {
        if self.bytes.len() - self.pos < len {
            return Err(self.err_at(self.bytes.len(), "truncated snapshot"));
        }
        Ok(())
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        self.ensure(len)?;
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{gen_planted, gen_shell, gen_uniform};
    use crate::oracle;
    use crate::rng::{seeded, substream};
    use rand::Rng;

    #[test]
    fn derive_params_reference_values() {
        // Each field recomputed from its closed form.
        let p = derive_params(1024, 128, 8, 1.0, 1.0 / 1024.0).unwrap();
        assert_eq!(p.c, 0.5);
        let c_ln_n = 0.5 * 1024f64.ln();
        assert!((c_ln_n - 3.4657359).abs() < 1e-6);
        assert_eq!(p.t, 4);
        assert!((p.p - (1.0 - (-0.125f64).exp())).abs() < 1e-15);
        assert!((p.p - 0.117_503).abs() < 1e-6);
        assert!((p.q_near - (-4.0f64).exp()).abs() < 1e-15);
        assert!((p.q_near - 0.018_316).abs() < 1e-6);
        assert_eq!(p.l, 379);
        assert_eq!(p.l, (1024f64.ln() / (-4.0f64).exp()).ceil() as usize);
        assert!(p.miss_bound() <= p.delta_fail);
        assert_eq!(p.accept_radius(), 16);
    }

    #[test]
    fn derive_params_clamps_and_rejects() {
        let p = derive_params(3, 16, 2, 1e3, 0.5).unwrap();
        assert!((p.c - 1.0 / 1001.0).abs() < 1e-15);
        assert_eq!(p.t, 1);
        let one = derive_params(1, 16, 2, 1.0, 0.1).unwrap();
        assert_eq!(one.t, 1);
        assert!(one.l >= 1);
        assert_eq!(one.l, ((10f64).ln() / one.q_near).ceil() as usize);

        assert!(derive_params(0, 16, 2, 1.0, 0.1).is_err());
        assert!(derive_params(10, 16, 0, 1.0, 0.1).is_err());
        assert!(derive_params(10, 16, 17, 1.0, 0.1).is_err());
        assert!(derive_params(10, 16, 2, 0.0, 0.1).is_err());
        assert!(derive_params(10, 16, 2, 1.0, 1.0).is_err());
        assert!(derive_params(10, 16, 2, 1.0, 0.0).is_err());
    }

    #[test]
    fn accept_radius_tolerates_rounding() {
        let p = derive_params(10, 64, 10, 0.1, 0.1).unwrap();
        assert_eq!(p.accept_radius(), 11);
        let p = derive_params(10, 64, 3, 0.5, 0.1).unwrap();
        assert_eq!(p.accept_radius(), 4);
    }

    fn small_index(n: usize, d: usize, r: usize, seed: u64) -> LshIndex {
        let ds = gen_uniform(n, d, seed).unwrap();
        let params = derive_params(n, d, r, 1.0, default_delta(n)).unwrap();
        LshIndex::build(ds.into_vectors(), params, seed).unwrap()
    }

    #[test]
    fn single_point_tables() {
        let ix = small_index(1, 32, 2, 1);
        for t in 0..ix.num_tables() {
            assert_eq!(ix.bucket_sizes(t), vec![1]);
        }
    }

    #[test]
    fn duplicates_share_buckets() {
        let mut rng = seeded(4);
        let v = BitVector::random(40, &mut rng).unwrap();
        let w = BitVector::random(40, &mut rng).unwrap();
        let params = derive_params(3, 40, 3, 1.0, 0.1).unwrap();
        let ix = LshIndex::build(vec![v.clone(), w, v.clone()], params, 2).unwrap();
        for t in 0..ix.num_tables() {
            let c = ix.candidates(t, &v).unwrap();
            assert!(c.contains(&0) && c.contains(&2));
        }
        ix.verify_consistency().unwrap();
    }

    #[test]
    fn build_validates_inputs() {
        let ds = gen_uniform(5, 16, 0).unwrap();
        let params = derive_params(6, 16, 2, 1.0, 0.1).unwrap();
        assert!(LshIndex::build(ds.vectors().to_vec(), params, 0).is_err());
        let mut pts = ds.into_vectors();
        pts.push(BitVector::zeros(17).unwrap());
        let params = derive_params(6, 16, 2, 1.0, 0.1).unwrap();
        assert!(matches!(
            LshIndex::build(pts, params, 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn member_query_finds_distance_zero() {
        let ix = small_index(100, 64, 4, 8);
        for id in [0, 17, 99] {
            let out = ix.query(&ix.points()[id].clone()).unwrap();
            match out.answer {
                Answer::Found { distance, .. } => assert_eq!(distance, 0),
                Answer::NoneWithinR => panic!("member query missed"),
            }
            assert_eq!(out.restarts, 0);
        }
        let wrong = BitVector::zeros(63).unwrap();
        assert!(matches!(
            ix.query(&wrong),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn far_only_instance_never_found() {
        let (ds, q) = gen_shell(50, 64, 32, 3).unwrap();
        let params = derive_params(50, 64, 2, 1.0, 0.01).unwrap();
        let ix = LshIndex::build(ds.into_vectors(), params, 3).unwrap();
        let out = ix.query(&q).unwrap();
        assert_eq!(out.answer, Answer::NoneWithinR);
        assert_eq!(out.tables_probed, ix.num_tables() as u64);
        assert_eq!(out.candidates_scanned, ix.count_candidates(&q).unwrap());
    }

    #[test]
    fn tables_are_consistent() {
        let ix = small_index(200, 70, 5, 11);
        ix.verify_consistency().unwrap();
        for s in ix.sequences() {
            assert!(s.is_deduped());
        }
    }

    #[test]
    fn per_table_near_collision_rate() {
        // A distance-r pair collides in a table with probability (1-p)^{rt}.
        let params = derive_params(64, 96, 6, 1.0, 0.01).unwrap();
        let mut rng = seeded(77);
        let mut hits = 0usize;
        let tables = 40_000;
        let u = BitVector::random(96, &mut rng).unwrap();
        let v = u.flipped(0..6);
        for _ in 0..tables {
            let s = sample_uniq_direct(96, params.p, params.t as f64, &mut rng).unwrap();
            if s.apply(&u).unwrap() == s.apply(&v).unwrap() {
                hits += 1;
            }
        }
        let est = hits as f64 / tables as f64;
        let se = (params.q_near * (1.0 - params.q_near) / tables as f64).sqrt();
        assert!(
            (est - params.q_near).abs() <= 3.0 * se,
            "{est} vs {}",
            params.q_near
        );
    }

    #[test]
    fn snapshot_round_trip_is_byte_identical() {
        let ix = small_index(100, 64, 4, 21);
        let bytes = ix.snapshot();
        let back = LshIndex::restore(&bytes).unwrap();
        assert_eq!(back.snapshot(), bytes);
        assert_eq!(back.params(), ix.params());
        back.verify_consistency().unwrap();

        let again = small_index(100, 64, 4, 21);
        assert_eq!(again.snapshot(), bytes);
    }

    #[test]
    fn snapshot_errors() {
        let ix = small_index(20, 33, 3, 5);
        let bytes = ix.snapshot();
        for cut in [0, 3, 5, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(LshIndex::restore(&bytes[..cut]), Err(Error::Format { .. })),
                "cut at {cut}"
            );
        }
        let mut v = bytes.clone();
        v[4] = 9;
        assert!(matches!(
            LshIndex::restore(&v),
            Err(Error::Version { found: 9, .. })
        ));

        let mut m = bytes.clone();
        m[0] = b'X';
        assert!(matches!(
            LshIndex::restore(&m),
            Err(Error::Format { offset: 0, .. })
        ));

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(LshIndex::restore(&trailing).is_err());

        // Corrupt the last member id of the last table.
        let mut bad = bytes.clone();
        let at = bad.len() - 4;
        bad[at..].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(LshIndex::restore(&bad), Err(Error::Format { .. })));
    }

    #[test]
    fn sparse_index_restores_and_agrees() {
        let mut rng = seeded(13);
        let pts: Vec<_> = (0..2)
            .map(|_| BitVector::random(48, &mut rng).unwrap())
            .collect();
        let params = derive_params(2, 48, 6, 1.0, 1e-6).unwrap();
        let ix = LshIndex::build(pts.clone(), params, 13).unwrap();
        assert!(ix.num_tables() > 20);
        let back = LshIndex::restore(&ix.snapshot()).unwrap();
        for i in 0..100 {
            let q = if i % 3 == 0 {
                pts[i % 2].flipped([rng.gen_range(0..48)])
            } else {
                BitVector::random(48, &mut rng).unwrap()
            };
            assert_eq!(ix.query(&q).unwrap(), back.query(&q).unwrap());
        }
    }

    #[test]
    fn budgeted_scan_aborts_and_bank_falls_back() {
        let (ds, q) = gen_shell(200, 32, 9, 1).unwrap();
        let params = derive_params(200, 32, 4, 1.0, 0.01).unwrap();
        let pts = ds.into_vectors();
        let bank: Vec<_> = (0..3)
            .map(|i| LshIndex::build(pts.clone(), params.clone(), 100 + i).unwrap())
            .collect();
        assert!(bank[0].count_candidates(&q).unwrap() > 0);
        match bank[0].query_budgeted(&q, 0).unwrap() {
            BudgetedScan::Aborted {
                candidates_scanned, ..
            } => assert_eq!(candidates_scanned, 0),
            other => panic!("expected abort, got {other:?}"),
        }
        // A tiny budget aborts everywhere; the answer is the last index's full scan.
        let out = query_hp(&bank, &q, 1e-9).unwrap();
        assert_eq!(out.restarts, 3);
        assert_eq!(out.answer, bank[2].query(&q).unwrap().answer);

        let huge = query_hp(&bank[..1], &q, 1e9).unwrap();
        assert_eq!(huge, bank[0].query(&q).unwrap());

        assert!(query_hp(&[], &q, 2.0).is_err());
        assert!(query_hp(&bank, &q, 0.0).is_err());
        let other = derive_params(200, 32, 5, 1.0, 0.01).unwrap();
        let odd = LshIndex::build(pts, other, 5).unwrap();
        assert!(query_hp(&[bank[0].clone(), odd], &q, 2.0).is_err());
    }

    #[test]
    fn found_answers_are_verified_against_oracle() {
        for seed in 0..30u64 {
            let mut rng = substream(seed, 1);
            let n = rng.gen_range(2..150);
            let d = rng.gen_range(16..64);
            let r = rng.gen_range(1..=4);
            let plant = rng.gen_range(0..=r);
            let inst = gen_planted(n, d, r, plant, seed).unwrap();
            let params = derive_params(n, d, r, 1.0, default_delta(n)).unwrap();
            let pts = inst.dataset.into_vectors();
            let ix = LshIndex::build(pts.clone(), params.clone(), seed).unwrap();
            let out = ix.query(&inst.query).unwrap();
            if let Answer::Found { id, distance } = out.answer {
                assert_eq!(pts[id].hamming(&inst.query).unwrap(), distance);
                assert!(distance <= params.accept_radius());
            }
            let (_, nn) = oracle::nearest(&pts, &inst.query).unwrap();
            if nn > params.accept_radius() {
                assert_eq!(out.answer, Answer::NoneWithinR);
            }
        }
    }
}
