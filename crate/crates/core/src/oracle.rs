//! Brute-force ground truth. Deliberately a plain linear scan.

use crate::bitvec::BitVector;
use crate::error::{Error, Result};

fn check(points: &[BitVector], q: &BitVector) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Empty);
    }
    if let Some(p) = points.iter().find(|p| p.dim() != q.dim()) {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            found: p.dim(),
        });
    }
    Ok(())
}

/// Nearest point to `q` as `(id, distance)`; ties go to the smallest id.
pub fn nearest(points: &[BitVector], q: &BitVector) -> Result<(usize, usize)> {
    check(points, q)?;
    let mut best = (0, usize::MAX);
    for (id, p) in points.iter().enumerate() {
        let dist = p.hamming(q)?;
        if dist < best.1 {
            best = (id, dist);
        }
    }
    Ok(best)
}

/// Number of points within Hamming distance `radius` of `q` (inclusive).
pub fn range_count(points: &[BitVector], q: &BitVector, radius: usize) -> Result<usize> {
    check(points, q)?;
    let mut count = 0;
    for p in points {
        if p.hamming(q)? <= radius {
            count += 1;
        }
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn nearest_reverse(points: &[BitVector], q: &BitVector) -> (usize, usize) {
        let mut best = (usize::MAX, usize::MAX);
        for id in (0..points.len()).rev() {
            let dist = points[id].hamming(q).unwrap();
            if dist <= best.1 {
                best = (id, dist);
            }
        }
        best
    }

    #[test]
    fn member_query_is_distance_zero() {
        let pts: Vec<_> = ["0000", "0110", "1111"]
            .iter()
            .map(|s| BitVector::parse(s).unwrap())
            .collect();
        assert_eq!(nearest(&pts, &pts[1]).unwrap(), (1, 0));
    }

    #[test]
    fn picks_closer_point_and_breaks_ties_low() {
        let q = BitVector::zeros(8).unwrap();
        let far = q.flipped([0, 1, 2, 3, 4]);
        let near = q.flipped([5, 6, 7]);
        assert_eq!(nearest(&[far.clone(), near.clone()], &q).unwrap(), (1, 3));
        let tie = q.flipped([0, 1, 2]);
        assert_eq!(nearest(&[far, near, tie], &q).unwrap(), (1, 3));
    }

    #[test]
    fn errors() {
        let q = BitVector::zeros(4).unwrap();
        assert!(matches!(nearest(&[], &q), Err(Error::Empty)));
        assert!(matches!(range_count(&[], &q, 1), Err(Error::Empty)));
        let other = BitVector::zeros(5).unwrap();
        assert!(matches!(
            nearest(&[other], &q),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn range_count_edges() {
        let mut rng = seeded(2);
        let pts: Vec<_> = (0..50)
            .map(|_| BitVector::random(32, &mut rng).unwrap())
            .collect();
        let q = BitVector::random(32, &mut rng).unwrap();
        assert_eq!(range_count(&pts, &q, 32).unwrap(), 50);
        if !pts.contains(&q) {
            assert_eq!(range_count(&pts, &q, 0).unwrap(), 0);
        }
        let mut last = 0;
        for radius in 0..=32 {
            let c = range_count(&pts, &q, radius).unwrap();
            assert!(c >= last);
            last = c;
        }
    }

    #[test]
    fn agrees_with_reverse_scan_and_range_count() {
        let mut rng = seeded(7);
        for _ in 0..20 {
            let pts: Vec<_> = (0..200)
                .map(|_| BitVector::random(64, &mut rng).unwrap())
                .collect();
            let q = BitVector::random(64, &mut rng).unwrap();
            let (id, dist) = nearest(&pts, &q).unwrap();
            assert_eq!((id, dist), nearest_reverse(&pts, &q));
            for _ in 0..100 {
                let j = rng.gen_range(0..pts.len());
                assert!(dist <= pts[j].hamming(&q).unwrap());
            }
            for radius in [dist.saturating_sub(1), dist, dist + 1] {
                let c = range_count(&pts, &q, radius).unwrap();
                assert_eq!(c >= 1, dist <= radius);
            }
        }
    }
}
