//! Seeded, balanced mini-batch pairing of the two domains.
//!
//! Each epoch reshuffles source and target independently with an RNG
//! derived from `(seed, epoch)`. Steps per epoch is
//! `floor(min(n_src, n_tgt) / batch_size)`: the longer domain is subsampled
//! for that epoch, and the final partial batch is dropped so every step
//! sees the same balanced batch shape.

use ndarray::Array3;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

use super::DomainDataset;

/// One step's worth of data: an equal-sized source batch (with labels) and
/// target batch, plus the dataset indices they came from.
#[derive(Debug, Clone)]
pub struct BatchPair {
    pub x_src: Array3<f64>,
    pub y_src: Vec<usize>,
    pub x_tgt: Array3<f64>,
    pub src_indices: Vec<usize>,
    pub tgt_indices: Vec<usize>,
}

impl BatchPair {
    pub fn batch_size(&self) -> usize {
        self.y_src.len()
    }

    /// Combined view `[2B, C, T]`: source block first, then target block.
    pub fn combined(&self) -> Array3<f64> {
        ndarray::concatenate(
            ndarray::Axis(0),
            &[self.x_src.view(), self.x_tgt.view()],
        )
        .unwrap()
    }

    /// Domain labels aligned with [`BatchPair::combined`]: 0 = source,
    /// 1 = target.
    pub fn domain_labels(&self) -> Vec<u8> {
        let b = self.batch_size();
        let mut l = vec![0u8; 2 * b];
        l[b..].fill(1);
        l
    }

    /// Dataset indices aligned with [`BatchPair::combined`].
    pub fn combined_indices(&self) -> Vec<usize> {
        let mut idx = self.src_indices.clone();
        idx.extend_from_slice(&self.tgt_indices);
        idx
    }
}

/// Iterator over one epoch of [`BatchPair`]s.
pub struct BatchIterator<'a> {
    dataset: &'a DomainDataset,
    src_order: Vec<usize>,
    tgt_order: Vec<usize>,
    batch_size: usize,
    steps: usize,
    pos: usize,
}

impl<'a> Iterator for BatchIterator<'a> {
    type Item = BatchPair;

    fn next(&mut self) -> Option<BatchPair> {
        if self.pos >= self.steps {
            return None;
        }
        let b = self.batch_size;
        let lo = self.pos * b;
        let src_indices = self.src_order[lo..lo + b].to_vec();
        let tgt_indices = self.tgt_order[lo..lo + b].to_vec();
        self.pos += 1;
        Some(BatchPair {
            x_src: self.dataset.gather(&src_indices),
            y_src: self.dataset.labels(&src_indices).expect("source block is labeled"),
            x_tgt: self.dataset.gather(&tgt_indices),
            src_indices,
            tgt_indices,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.steps - self.pos;
        (left, Some(left))
    }
}

/// Plan one epoch of balanced batches.
pub fn batch_iterator(
    dataset: &DomainDataset,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<BatchIterator<'_>> {
    if batch_size == 0 {
        return Err(Error::config("batch_size must be >= 1"));
    }
    let shortest = dataset.n_src().min(dataset.n_tgt());
    if batch_size > shortest {
        return Err(Error::config(format!(
            "batch_size {batch_size} exceeds the smaller domain ({shortest} samples)"
        )));
    }
    let mut src_order: Vec<usize> = dataset.source_indices().collect();
    let mut tgt_order: Vec<usize> = dataset.target_indices().collect();
    src_order.shuffle(&mut stream_rng(seed, &format!("shuffle-src-{epoch}")));
    tgt_order.shuffle(&mut stream_rng(seed, &format!("shuffle-tgt-{epoch}")));
    Ok(BatchIterator {
        dataset,
        src_order,
        tgt_order,
        batch_size,
        steps: shortest / batch_size,
        pos: 0,
    })
}
