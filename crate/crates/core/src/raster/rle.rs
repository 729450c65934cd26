//! Row-major run-length encoding of binary masks.
//!
//! Runs alternate zero/one starting with the zero run, which may be 0 when
//! the first pixel is set. An empty 2x2 mask is `[4]`, a full one `[0, 4]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::BitMask;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rle {
    pub counts: Vec<u64>,
}

impl Rle {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Area without decoding: the sum of the odd-indexed runs.
    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).sum()
    }
}

pub fn rle_encode(mask: &BitMask) -> Rle {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for bit in mask.iter() {
        if bit != current {
            counts.push(run);
            run = 0;
            current = bit;
        }
        run += 1;
    }
    counts.push(run);
    Rle { counts }
}

pub fn rle_decode(rle: &Rle, width: usize, height: usize) -> Result<BitMask> {
    let expected = (width * height) as u64;
    let total = rle
        .counts
        .iter()
        .try_fold(0u64, |acc, &c| acc.checked_add(c))
        .ok_or_else(|| Error::CorruptData("run lengths overflow".into()))?;
    if total != expected {
        return Err(Error::CorruptData(format!(
            "run lengths sum to {total}, expected {expected} for {width}x{height}"
        )));
    }
    let mut bits = vec![false; width * height];
    let mut pos = 0usize;
    for (i, &c) in rle.counts.iter().enumerate() {
        let end = pos + c as usize;
        if i % 2 == 1 {
            bits[pos..end].iter_mut().for_each(|b| *b = true);
        }
        pos = end;
    }
    BitMask::from_bools(width, height, &bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tiny_cases() {
        assert_eq!(rle_encode(&BitMask::empty(2, 2)).counts, vec![4]);
        assert_eq!(rle_encode(&BitMask::full(2, 2)).counts, vec![0, 4]);
        let diag = BitMask::from_fn(2, 2, |x, y| x == y);
        assert_eq!(rle_encode(&diag).counts, vec![0, 1, 2, 1]);
        assert_eq!(
            rle_decode(&Rle::new(vec![0, 4]), 2, 2).unwrap(),
            BitMask::full(2, 2)
        );
    }

    #[test]
    fn sum_mismatch_is_corrupt() {
        let err = rle_decode(&Rle::new(vec![1, 2]), 2, 2).unwrap_err();
        assert!(matches!(err, Error::CorruptData(_)));
        let err = rle_decode(&Rle::new(vec![u64::MAX, 5]), 2, 2).unwrap_err();
        assert!(matches!(err, Error::CorruptData(_)));
    }

    #[test]
    fn area_without_decoding() {
        let m = BitMask::from_fn(7, 5, |x, y| (x + 2 * y) % 3 == 0);
        assert_eq!(rle_encode(&m).area(), m.area());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn round_trip_is_identity(
            (w, h, bits) in (1usize..24, 1usize..24).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), proptest::collection::vec(any::<bool>(), w * h))
            })
        ) {
            let mask = BitMask::from_bools(w, h, &bits).unwrap();
            let rle = rle_encode(&mask);
            prop_assert_eq!(rle.total(), (w * h) as u64);
            prop_assert!(rle.counts.iter().skip(1).all(|&c| c > 0));
            prop_assert_eq!(rle_decode(&rle, w, h).unwrap(), mask);
        }
    }
}
