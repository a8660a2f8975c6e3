use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Row ids of one mini-batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Split `0..n` into batches of `batch_size`, keeping the final partial
/// batch. With `shuffle` the order is a permutation fixed by `seed`.
///
/// # Panics
///
/// If `batch_size` is zero.
pub fn make_batches(n: usize, batch_size: usize, seed: u64, shuffle: bool) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order
        .chunks(batch_size)
        .map(|c| Batch { indices: c.to_vec() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_order() {
        let b = make_batches(10, 3, 0, true);
        assert_eq!(b.iter().map(Batch::len).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        assert_eq!(b, make_batches(10, 3, 0, true));
        let plain = make_batches(10, 3, 0, false);
        let flat: Vec<usize> = plain.iter().flat_map(|b| b.indices.clone()).collect();
        assert_eq!(flat, (0..10).collect::<Vec<_>>());
        assert!(make_batches(0, 4, 0, true).is_empty());
    }

    #[test]
    fn every_sample_once() {
        for seed in 0..5 {
            let mut flat: Vec<usize> = make_batches(37, 8, seed, true)
                .into_iter()
                .flat_map(|b| b.indices)
                .collect();
            flat.sort_unstable();
            assert_eq!(flat, (0..37).collect::<Vec<_>>());
        }
    }
}
