use super::{augment_pair, AugmentSpec, DataError, Unlabeled};
use crate::numerics::{Matrix, Rng};

/// Two augmented views of the same source rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPair {
    pub x1: Matrix,
    pub x2: Matrix,
    /// Source row of each pair.
    pub pair_index: Vec<usize>,
}

impl BatchPair {
    pub fn len(&self) -> usize {
        self.pair_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pair_index.is_empty()
    }
}

/// Shuffled sample order for one epoch.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    Rng::derived(seed, &[0, epoch]).permutation(n)
}

/// One epoch of paired-view batches.
///
/// The order comes from [`epoch_order`], and a trailing batch shorter than
/// `batch_size` is dropped. The views of sample `i` use their own generator
/// seeded from `(seed, epoch, i)`, so results do not depend on batch layout.
pub fn epoch_batches(
    data: Unlabeled<'_>,
    batch_size: usize,
    spec: &AugmentSpec,
    seed: u64,
    epoch: u64,
) -> Result<Vec<BatchPair>, DataError> {
    if batch_size < 2 {
        return Err(DataError::Invalid(format!("batch size {batch_size} is below 2")));
    }
    spec.check_dim(data.dim())?;
    let order = epoch_order(data.len(), seed, epoch);
    order
        .chunks_exact(batch_size)
        .map(|chunk| {
            let mut x1 = Vec::with_capacity(batch_size * data.dim());
            let mut x2 = Vec::with_capacity(batch_size * data.dim());
            for &i in chunk {
                let mut rng = Rng::derived(seed, &[1, epoch, i as u64]);
                let (a, b) = augment_pair(data.row(i), spec, &mut rng)?;
                x1.extend(a);
                x2.extend(b);
            }
            Ok(BatchPair {
                x1: Matrix::from_vec(batch_size, data.dim(), x1)?,
                x2: Matrix::from_vec(batch_size, data.dim(), x2)?,
                pair_index: chunk.to_vec(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AugmentKind, Dataset};

    fn ten_rows() -> Dataset {
        Dataset::new(Matrix::from_fn(10, 3, |i, k| (i * 3 + k) as f64), vec![0; 10]).unwrap()
    }

    #[test]
    fn drops_the_short_tail() {
        let d = ten_rows();
        let b = epoch_batches(d.unlabeled(), 4, &AugmentSpec::vector(), 1, 0).unwrap();
        assert_eq!(b.iter().map(BatchPair::len).collect::<Vec<_>>(), vec![4, 4]);
    }

    #[test]
    fn pair_indices_follow_the_shuffled_order() {
        let d = ten_rows();
        let b = epoch_batches(d.unlabeled(), 4, &AugmentSpec::vector(), 2, 3).unwrap();
        let emitted: Vec<usize> = b.iter().flat_map(|p| p.pair_index.clone()).collect();
        assert_eq!(emitted, epoch_order(10, 2, 3)[..8].to_vec());
    }

    #[test]
    fn identity_views_are_the_source_rows() {
        let d = ten_rows();
        let b = epoch_batches(d.unlabeled(), 5, &AugmentSpec::identity(AugmentKind::Vector), 3, 0).unwrap();
        for p in &b {
            assert_eq!(p.x1, d.samples().select_rows(&p.pair_index));
            assert_eq!(p.x2, p.x1);
        }
    }

    #[test]
    fn epochs_replay_and_differ() {
        let d = ten_rows();
        let spec = AugmentSpec::vector();
        let e0 = epoch_batches(d.unlabeled(), 2, &spec, 4, 0).unwrap();
        assert_eq!(e0, epoch_batches(d.unlabeled(), 2, &spec, 4, 0).unwrap());
        assert_ne!(e0, epoch_batches(d.unlabeled(), 2, &spec, 4, 1).unwrap());
    }

    #[test]
    fn views_do_not_depend_on_batch_size() {
        let d = ten_rows();
        let spec = AugmentSpec::vector();
        let a = epoch_batches(d.unlabeled(), 2, &spec, 5, 0).unwrap();
        let b = epoch_batches(d.unlabeled(), 5, &spec, 5, 0).unwrap();
        let row_of = |bs: &[BatchPair], src: usize| {
            bs.iter()
                .find_map(|p| p.pair_index.iter().position(|&i| i == src).map(|r| p.x1.row(r).to_vec()))
                .unwrap()
        };
        for src in 0..10 {
            assert_eq!(row_of(&a, src), row_of(&b, src));
        }
    }

    #[test]
    fn rejects_tiny_batches_and_non_square_images() {
        let d = ten_rows();
        assert!(epoch_batches(d.unlabeled(), 1, &AugmentSpec::vector(), 0, 0).is_err());
        assert!(epoch_batches(d.unlabeled(), 2, &AugmentSpec::image(), 0, 0).is_err());
    }
}
