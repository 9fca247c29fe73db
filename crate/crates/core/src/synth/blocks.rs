//! Piecewise-constant feature streams with known boundaries and classes,
//! used to probe segmentation and clustering in isolation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::features::orthonormal_prototypes;
use super::SynthError;
use crate::trajectory::{Demonstration, Frame, OracleLabels};

/// One demo whose frame features are `prototypes[classes[b]]` plus noise
/// inside block `b`.
pub fn block_demo(
    demo_id: &str,
    task_id: &str,
    prototypes: &[Vec<f64>],
    classes: &[usize],
    lengths: &[usize],
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Demonstration {
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    let mut frames = Vec::new();
    for (b, (&class, &len)) in classes.iter().zip(lengths).enumerate() {
        for i in 0..len {
            let mut feature = prototypes[class].clone();
            if sigma > 0.0 {
                feature.iter_mut().for_each(|x| *x += noise.sample(rng));
            }
            let t = frames.len() as u64;
            frames.push(
                Frame::new(t, feature, vec![0.0], vec![0.0]).with_oracle(OracleLabels {
                    skill: Some(class as u32),
                    boundary: Some(b > 0 && i == 0),
                }),
            );
        }
    }
    Demonstration {
        demo_id: demo_id.to_string(),
        task_id: task_id.to_string(),
        frames,
    }
}

/// Block boundaries (start indices of blocks after the first).
pub fn block_boundaries(lengths: &[usize]) -> Vec<usize> {
    lengths
        .iter()
        .scan(0, |acc, &l| {
            *acc += l;
            Some(*acc)
        })
        .take(lengths.len().saturating_sub(1))
        .collect()
}

/// A random block layout: `blocks` blocks drawn from `k` classes with no
/// class repeated back to back, lengths drawn from `lengths`.
pub fn random_blocks(
    k: usize,
    blocks: usize,
    lengths: &[usize],
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut classes: Vec<usize> = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        let c = loop {
            let c = rng.random_range(0..k);
            if classes.last() != Some(&c) {
                break c;
            }
        };
        classes.push(c);
    }
    let lens = (0..blocks).map(|_| lengths[rng.random_range(0..lengths.len())]).collect();
    (classes, lens)
}

/// A set of block demos over `k` orthonormal classes, every class used at
/// least once.
pub fn block_corpus(
    k: usize,
    demos: usize,
    blocks_per_demo: std::ops::RangeInclusive<usize>,
    lengths: &[usize],
    dim: usize,
    sigma: f64,
    seed: u64,
) -> Result<Vec<Demonstration>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes = orthonormal_prototypes(k, dim, &mut rng)?;
    loop {
        let mut used = vec![false; k];
        let corpus: Vec<Demonstration> = (0..demos)
            .map(|d| {
                let n = rng.random_range(blocks_per_demo.clone());
                let (classes, lens) = random_blocks(k, n, lengths, &mut rng);
                classes.iter().for_each(|&c| used[c] = true);
                block_demo(&format!("demo_{d:03}"), "blocks", &prototypes, &classes, &lens, sigma, &mut rng)
            })
            .collect();
        if used.iter().all(|&u| u) {
            return Ok(corpus);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries_are_block_starts() {
        assert_eq!(block_boundaries(&[10, 5, 7]), vec![10, 15]);
        assert!(block_boundaries(&[4]).is_empty());
    }

    #[test]
    fn corpus_covers_every_class() {
        let corpus = block_corpus(5, 6, 3..=4, &[10, 15], 16, 0.0, 2).unwrap();
        let mut seen: Vec<u32> = corpus
            .iter()
            .flat_map(|d| d.frames.iter().filter_map(|f| f.oracle().skill))
            .collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn no_repeated_neighbours() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let (c, _) = random_blocks(2, 6, &[8], &mut rng);
            assert!(c.windows(2).all(|w| w[0] != w[1]));
        }
    }
}
