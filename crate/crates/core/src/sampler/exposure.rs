//! Rate sums for the gamma full conditionals. The per-cell exposure
//! `u * exp(x . beta)` varies across cells, so it sits inside every sum.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{DesignData, TTCores};

#[derive(Debug, Clone, PartialEq)]
pub struct Exposures {
    /// `N x H1`
    pub e1: Vec<f64>,
    /// `T x H1 x H2`
    pub e2: Vec<f64>,
    /// `K x H2`
    pub e3: Vec<f64>,
}

fn check_weights(weights: &[f64], cores: &TTCores) -> Result<()> {
    let cells = cores.dims().cells();
    if weights.len() != cells {
        return Err(Error::Shape {
            what: "exposure weights",
            expected: cells,
            found: weights.len(),
        });
    }
    Ok(())
}

/// `E1[i,h1] = sum_{t,k} w[i,t,k] sum_{h2} core2[t,h1,h2] core3[k,h2]`.
pub fn exposure1(weights: &[f64], cores: &TTCores) -> Result<Vec<f64>> {
    check_weights(weights, cores)?;
    let dims = cores.dims();
    let (h1, h2) = (cores.ranks().h1, cores.ranks().h2);
    let tk = dims.t * dims.k;
    let mut m = vec![0.0; tk * h1];
    for t in 0..dims.t {
        let slab = cores.slab2(t);
        for k in 0..dims.k {
            let l3 = cores.row3(k);
            for a in 0..h1 {
                m[(t * dims.k + k) * h1 + a] = slab[a * h2..(a + 1) * h2].iter().zip(l3).map(|(x, y)| x * y).sum();
            }
        }
    }
    let rows = par::map_range(dims.n, |i| {
        let mut e = vec![0.0; h1];
        let w = &weights[i * tk..(i + 1) * tk];
        for (j, &wj) in w.iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            for (ea, ma) in e.iter_mut().zip(&m[j * h1..(j + 1) * h1]) {
                *ea += wj * ma;
            }
        }
        e
    });
    Ok(rows.concat())
}

/// `E2[t,h1,h2] = sum_{i,k} w[i,t,k] core1[i,h1] core3[k,h2]`.
pub fn exposure2(weights: &[f64], cores: &TTCores) -> Result<Vec<f64>> {
    check_weights(weights, cores)?;
    let dims = cores.dims();
    let (h1, h2) = (cores.ranks().h1, cores.ranks().h2);
    let slabs = par::map_range(dims.t, |t| {
        let mut e = vec![0.0; h1 * h2];
        let mut a_row = vec![0.0; h2];
        for i in 0..dims.n {
            a_row.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..dims.k {
                let w = weights[dims.cell(i, t, k)];
                if w == 0.0 {
                    continue;
                }
                for (a, l) in a_row.iter_mut().zip(cores.row3(k)) {
                    *a += w * l;
                }
            }
            for (a, l1) in cores.row1(i).iter().enumerate() {
                for (b, ab) in a_row.iter().enumerate() {
                    e[a * h2 + b] += l1 * ab;
                }
            }
        }
        e
    });
    Ok(slabs.concat())
}

/// `E3[k,h2] = sum_{i,t} w[i,t,k] sum_{h1} core1[i,h1] core2[t,h1,h2]`.
pub fn exposure3(weights: &[f64], cores: &TTCores) -> Result<Vec<f64>> {
    check_weights(weights, cores)?;
    let dims = cores.dims();
    let (h1, h2) = (cores.ranks().h1, cores.ranks().h2);
    let nt = dims.n * dims.t;
    let mut b = vec![0.0; nt * h2];
    for i in 0..dims.n {
        let l1 = cores.row1(i);
        for t in 0..dims.t {
            let slab = cores.slab2(t);
            let dst = &mut b[(i * dims.t + t) * h2..(i * dims.t + t + 1) * h2];
            for a in 0..h1 {
                for (d, s) in dst.iter_mut().zip(&slab[a * h2..(a + 1) * h2]) {
                    *d += l1[a] * s;
                }
            }
        }
    }
    let rows = par::map_range(dims.k, |k| {
        let mut e = vec![0.0; h2];
        for it in 0..nt {
            let w = weights[it * dims.k + k];
            if w == 0.0 {
                continue;
            }
            for (ev, bv) in e.iter_mut().zip(&b[it * h2..(it + 1) * h2]) {
                *ev += w * bv;
            }
        }
        e
    });
    Ok(rows.concat())
}

/// All three exposure arrays at the given `beta` and cores.
pub fn exposure_sums(beta: &[f64], cores: &TTCores, data: &DesignData) -> Result<Exposures> {
    if cores.dims() != data.dims() {
        return Err(Error::Shape {
            what: "design cells",
            expected: cores.dims().cells(),
            found: data.dims().cells(),
        });
    }
    let w = data.exposure_weights(beta)?;
    Ok(Exposures {
        e1: exposure1(&w, cores)?,
        e2: exposure2(&w, cores)?,
        e3: exposure3(&w, cores)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Dims, Ranks};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_case_counts_pairs() {
        let dims = Dims::new(2, 2, 2);
        let cores = TTCores::constant(dims, Ranks::new(1, 1), 1.0).unwrap();
        let data = DesignData::new(dims, 1, vec![0.3; 8], vec![1.0; 8]).unwrap();
        let e = exposure_sums(&[0.0], &cores, &data).unwrap();
        assert_eq!(e.e1, vec![4.0, 4.0]);
        assert_eq!(e.e2, vec![4.0, 4.0]);
        assert_eq!(e.e3, vec![4.0, 4.0]);
    }

    #[test]
    fn zero_offsets_zero_exposure() {
        let dims = Dims::new(2, 2, 2);
        let cores = TTCores::constant(dims, Ranks::new(2, 2), 1.3).unwrap();
        let data = DesignData::new(dims, 1, vec![1.0; 8], vec![0.0; 8]).unwrap();
        let e = exposure_sums(&[2.0], &cores, &data).unwrap();
        assert!(e.e1.iter().chain(&e.e2).chain(&e.e3).all(|v| *v == 0.0));
    }

    #[test]
    fn matches_quadruple_loop() {
        let dims = Dims::new(3, 2, 4);
        let ranks = Ranks::new(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut draw = |len: usize, lo: f64, hi: f64| (0..len).map(|_| rng.random_range(lo..hi)).collect::<Vec<_>>();
        let cores = TTCores::new(
            dims,
            ranks,
            draw(dims.n * 2, 0.1, 2.0),
            draw(dims.t * 6, 0.1, 2.0),
            draw(dims.k * 3, 0.1, 2.0),
        )
        .unwrap();
        let x = draw(dims.cells() * 2, -1.0, 1.0);
        let u = draw(dims.cells(), 0.0, 3.0);
        let data = DesignData::new(dims, 2, x.clone(), u.clone()).unwrap();
        let beta = [0.4, -0.7];
        let e = exposure_sums(&beta, &cores, &data).unwrap();

        let c1 = |i: usize, a: usize| cores.core1()[i * 2 + a];
        let c2 = |t: usize, a: usize, b: usize| cores.core2()[(t * 2 + a) * 3 + b];
        let c3 = |k: usize, b: usize| cores.core3()[k * 3 + b];
        let w = |i: usize, t: usize, k: usize| {
            let c = (i * dims.t + t) * dims.k + k;
            u[c] * (x[2 * c] * beta[0] + x[2 * c + 1] * beta[1]).exp()
        };
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-10 * b.abs();
        for i in 0..dims.n {
            for a in 0..2 {
                let mut s = 0.0;
                for t in 0..dims.t {
                    for k in 0..dims.k {
                        for b in 0..3 {
                            s += w(i, t, k) * c2(t, a, b) * c3(k, b);
                        }
                    }
                }
                assert!(close(e.e1[i * 2 + a], s));
            }
        }
        for t in 0..dims.t {
            for a in 0..2 {
                for b in 0..3 {
                    let mut s = 0.0;
                    for i in 0..dims.n {
                        for k in 0..dims.k {
                            s += w(i, t, k) * c1(i, a) * c3(k, b);
                        }
                    }
                    assert!(close(e.e2[(t * 2 + a) * 3 + b], s));
                }
            }
        }
        for k in 0..dims.k {
            for b in 0..3 {
                let mut s = 0.0;
                for i in 0..dims.n {
                    for t in 0..dims.t {
                        for a in 0..2 {
                            s += w(i, t, k) * c1(i, a) * c2(t, a, b);
                        }
                    }
                }
                assert!(close(e.e3[k * 3 + b], s));
            }
        }
    }
}
