use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::math::{exp, log};
use crate::par;
use crate::rng::CellStreams;
use crate::tensor::{CountTensor, TTCores};

/// Marginal totals of the latent allocation: `s1` is `N x H1`, `s2` is
/// `T x H1 x H2` (h2 fastest), `s3` is `K x H2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentStats {
    pub s1: Vec<u64>,
    pub s2: Vec<u64>,
    pub s3: Vec<u64>,
}

impl LatentStats {
    pub fn zeros(n: usize, t: usize, k: usize, h1: usize, h2: usize) -> Self {
        Self {
            s1: vec![0; n * h1],
            s2: vec![0; t * h1 * h2],
            s3: vec![0; k * h2],
        }
    }

    /// Grand totals of the three statistics; all equal the total count.
    pub fn totals(&self) -> [u64; 3] {
        [self.s1.iter().sum(), self.s2.iter().sum(), self.s3.iter().sum()]
    }
}

/// Allocation probabilities `pi[h1 * H2 + h2]` for one cell.
pub fn compute_pi(cores: &TTCores, i: usize, t: usize, k: usize) -> Result<Vec<f64>> {
    cores.dims().check(i, t, k)?;
    let mut pi = vec![0.0; cores.ranks().components()];
    fill_pi(cores, i, t, k, &mut pi);
    Ok(pi)
}

pub(crate) fn fill_pi(cores: &TTCores, i: usize, t: usize, k: usize, pi: &mut [f64]) {
    let h2 = cores.ranks().h2;
    let l1 = cores.row1(i);
    let slab = cores.slab2(t);
    let l3 = cores.row3(k);
    let mut max = 0.0f64;
    for (j, v) in pi.iter_mut().enumerate() {
        *v = l1[j / h2] * slab[j] * l3[j % h2];
        max = max.max(*v);
    }
    if max >= f64::MIN_POSITIVE && max.is_finite() {
        let sum: f64 = pi.iter().map(|v| v / max).sum();
        pi.iter_mut().for_each(|v| *v = (*v / max) / sum);
        return;
    }
    // products under- or overflowed: redo in log space
    let mut lmax = f64::NEG_INFINITY;
    for (j, v) in pi.iter_mut().enumerate() {
        *v = log(l1[j / h2]) + log(slab[j]) + log(l3[j % h2]);
        lmax = lmax.max(*v);
    }
    pi.iter_mut().for_each(|v| *v = exp(*v - lmax));
    let sum: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= sum);
}

/// Draws `Multinomial(total, pi)` into `out` by sequential binomial thinning.
pub fn multinomial_split<R: Rng + ?Sized>(total: u64, pi: &[f64], rng: &mut R, out: &mut [u64]) {
    debug_assert_eq!(pi.len(), out.len());
    out.iter_mut().for_each(|v| *v = 0);
    let mut left = total;
    let mut mass = 1.0;
    let last = pi.len() - 1;
    for j in 0..last {
        if left == 0 {
            break;
        }
        let p = if mass > 0.0 {
            (pi[j] / mass).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let draw = if p >= 1.0 {
            left
        } else if p <= 0.0 {
            0
        } else {
            Binomial::new(left, p).map(|b| b.sample(rng)).unwrap_or(0)
        };
        out[j] = draw;
        left -= draw;
        mass -= pi[j];
    }
    out[last] += left;
    debug_assert_eq!(out.iter().sum::<u64>(), total);
}

/// Splits every observed count across the latent components and returns only
/// the three marginal statistics. Cell `c` draws from `streams.for_cell(c)`.
pub fn allocate_latent(counts: &CountTensor, cores: &TTCores, streams: &CellStreams) -> Result<LatentStats> {
    let dims = counts.dims();
    if cores.dims() != dims {
        return Err(Error::Shape {
            what: "core cells",
            expected: dims.cells(),
            found: cores.dims().cells(),
        });
    }
    let ranks = cores.ranks();
    let (h1, h2) = (ranks.h1, ranks.h2);
    let comps = ranks.components();
    let rows = par::map_range(dims.n, |i| {
        let mut s1 = vec![0u64; h1];
        let mut s2 = vec![0u64; dims.t * comps];
        let mut s3 = vec![0u64; dims.k * h2];
        let mut pi = vec![0.0; comps];
        let mut draw = vec![0u64; comps];
        for t in 0..dims.t {
            for k in 0..dims.k {
                let cell = dims.cell(i, t, k);
                let y = counts.as_slice()[cell];
                if y == 0 {
                    continue;
                }
                fill_pi(cores, i, t, k, &mut pi);
                let mut rng = streams.for_cell(cell);
                multinomial_split(y, &pi, &mut rng, &mut draw);
                debug_assert_eq!(draw.iter().sum::<u64>(), y, "thinning broke at cell {cell}");
                for (j, &c) in draw.iter().enumerate() {
                    if c == 0 {
                        continue;
                    }
                    s1[j / h2] += c;
                    s2[t * comps + j] += c;
                    s3[k * h2 + j % h2] += c;
                }
            }
        }
        (s1, s2, s3)
    });
    let mut stats = LatentStats::zeros(dims.n, dims.t, dims.k, h1, h2);
    for (i, (s1, s2, s3)) in rows.into_iter().enumerate() {
        stats.s1[i * h1..(i + 1) * h1].copy_from_slice(&s1);
        stats.s2.iter_mut().zip(&s2).for_each(|(a, b)| *a += b);
        stats.s3.iter_mut().zip(&s3).for_each(|(a, b)| *a += b);
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::tensor::{Dims, Ranks};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_cores(dims: Dims, ranks: Ranks, seed: u64) -> TTCores {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |len: usize| (0..len).map(|_| rng.random_range(0.05..2.0)).collect::<Vec<_>>();
        let c1 = draw(dims.n * ranks.h1);
        let c2 = draw(dims.t * ranks.h1 * ranks.h2);
        let c3 = draw(dims.k * ranks.h2);
        TTCores::new(dims, ranks, c1, c2, c3).unwrap()
    }

    #[test]
    fn pi_uniform_for_equal_cores() {
        let c = TTCores::constant(Dims::new(1, 1, 1), Ranks::new(2, 3), 0.7).unwrap();
        let pi = compute_pi(&c, 0, 0, 0).unwrap();
        for v in pi {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
        let c = TTCores::constant(Dims::new(1, 1, 1), Ranks::new(1, 1), 3.0).unwrap();
        assert_eq!(compute_pi(&c, 0, 0, 0).unwrap(), vec![1.0]);
    }

    #[test]
    fn pi_matches_normalized_triple_products() {
        let dims = Dims::new(2, 2, 2);
        let c = random_cores(dims, Ranks::new(2, 2), 11);
        for cell in 0..dims.cells() {
            let (i, t, k) = dims.unravel(cell);
            let mut num = Vec::new();
            for a in 0..2 {
                for b in 0..2 {
                    num.push(c.core1()[i * 2 + a] * c.core2()[(t * 2 + a) * 2 + b] * c.core3()[k * 2 + b]);
                }
            }
            let s: f64 = num.iter().sum();
            let pi = compute_pi(&c, i, t, k).unwrap();
            assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (p, n) in pi.iter().zip(&num) {
                assert!((p - n / s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn pi_survives_underflow() {
        let dims = Dims::new(1, 1, 1);
        let c = TTCores::new(
            dims,
            Ranks::new(1, 2),
            vec![1e-200],
            vec![1e-200, 2e-200],
            vec![1e-20, 1e-20],
        )
        .unwrap();
        let pi = compute_pi(&c, 0, 0, 0).unwrap();
        assert!((pi[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((pi[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_counts_give_zero_stats() {
        let dims = Dims::new(2, 3, 2);
        let counts = CountTensor::new(dims, vec![0; dims.cells()]).unwrap();
        let c = random_cores(dims, Ranks::new(2, 2), 1);
        let s = allocate_latent(&counts, &c, &CellStreams::new(1, 0)).unwrap();
        assert_eq!(s, LatentStats::zeros(2, 3, 2, 2, 2));
    }

    #[test]
    fn two_way_split_frequencies() {
        let mut rng = stream(5, 0, 0);
        let mut tally = [0u32; 3];
        let mut out = [0u64; 2];
        let n = 100_000;
        for _ in 0..n {
            multinomial_split(2, &[0.5, 0.5], &mut rng, &mut out);
            tally[out[0] as usize] += 1;
        }
        for (count, p) in tally.iter().zip([0.25, 0.5, 0.25]) {
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*count as f64 - n as f64 * p).abs() < 3.0 * sd, "{tally:?}");
        }
    }

    #[test]
    fn uniform_split_component_is_binomial() {
        let mut rng = stream(6, 0, 0);
        let mut out = [0u64; 4];
        let n = 100_000;
        let mut sums = [0u64; 4];
        for _ in 0..n {
            multinomial_split(7, &[0.25; 4], &mut rng, &mut out);
            for (s, o) in sums.iter_mut().zip(out) {
                *s += o;
            }
        }
        // Binomial(7, 0.25): mean 1.75, var 1.3125; four checks, so 4 se
        let se = (1.3125f64 / n as f64).sqrt();
        for s in sums {
            assert!((s as f64 / n as f64 - 1.75).abs() < 4.0 * se, "{sums:?} {se}");
        }
    }

    #[test]
    fn stats_totals_equal_count_total() {
        let dims = Dims::new(3, 4, 2);
        let c = random_cores(dims, Ranks::new(3, 2), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y: Vec<u64> = (0..dims.cells()).map(|_| rng.random_range(0..50)).collect();
        let counts = CountTensor::new(dims, y).unwrap();
        let s = allocate_latent(&counts, &c, &CellStreams::new(3, 17)).unwrap();
        assert_eq!(s.totals(), [counts.total(); 3]);
    }
}
