use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    Manhattan,
}

impl Metric {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()),
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

/// Dense symmetric dissimilarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_points(points: &[Vec<f64>], metric: Metric) -> Result<Self> {
        let n = points.len();
        let width = points.first().map_or(0, Vec::len);
        let mut d = vec![0.0; n * n];
        for (a, p) in points.iter().enumerate() {
            if p.len() != width {
                return Err(Error::Shape {
                    what: "point dimension",
                    expected: width,
                    found: p.len(),
                });
            }
            if let Some(j) = p.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidValue {
                    what: "point coordinate",
                    index: a * width + j,
                    value: p[j],
                });
            }
            for b in 0..a {
                let v = metric.distance(p, &points[b]);
                d[a * n + b] = v;
                d[b * n + a] = v;
            }
        }
        Ok(Self { n, d })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.d[a * self.n + b]
    }

    /// Total distance of every point to its nearest medoid.
    pub fn cost(&self, medoids: &[usize]) -> f64 {
        (0..self.n)
            .map(|p| medoids.iter().map(|&m| self.get(p, m)).fold(f64::INFINITY, f64::min))
            .sum()
    }

    fn assign(&self, medoids: &[usize]) -> Vec<usize> {
        (0..self.n)
            .map(|p| {
                let mut best = 0;
                for (c, &m) in medoids.iter().enumerate() {
                    if self.get(p, m) < self.get(p, medoids[best]) {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PamResult {
    pub k: usize,
    /// Indices into the input points, in BUILD order after swaps.
    pub medoids: Vec<usize>,
    /// Cluster number (position in `medoids`) for each point.
    pub assignment: Vec<usize>,
    pub cost: f64,
    pub swaps: usize,
}

fn check_k(dist: &DistanceMatrix, k: usize) -> Result<()> {
    if k == 0 || k > dist.len() {
        return Err(Error::TooManyClusters { k, points: dist.len() });
    }
    Ok(())
}

/// Classic PAM: greedy BUILD, then best-improvement SWAP until no swap
/// lowers the total dissimilarity.
pub fn pam(dist: &DistanceMatrix, k: usize) -> Result<PamResult> {
    check_k(dist, k)?;
    Ok(swap(dist, build(dist, k)))
}

fn build(dist: &DistanceMatrix, k: usize) -> Vec<usize> {
    let n = dist.len();
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let mut nearest = vec![f64::INFINITY; n];
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for c in (0..n).filter(|c| !medoids.contains(c)) {
            let total: f64 = (0..n).map(|p| nearest[p].min(dist.get(p, c))).sum();
            if best.is_none_or(|(_, b)| total < b) {
                best = Some((c, total));
            }
        }
        let (c, _) = best.expect("k <= n leaves a candidate");
        medoids.push(c);
        for (p, v) in nearest.iter_mut().enumerate() {
            *v = v.min(dist.get(p, c));
        }
    }
    medoids
}

fn swap(dist: &DistanceMatrix, mut medoids: Vec<usize>) -> PamResult {
    let n = dist.len();
    let k = medoids.len();
    let mut cost = dist.cost(&medoids);
    let mut swaps = 0;
    let mut trial = medoids.clone();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for slot in 0..k {
            for o in (0..n).filter(|o| !medoids.contains(o)) {
                trial.copy_from_slice(&medoids);
                trial[slot] = o;
                let c = dist.cost(&trial);
                if c < best.map_or(cost, |b| b.2) {
                    best = Some((slot, o, c));
                }
            }
        }
        let Some((slot, o, c)) = best else { break };
        // a relative guard keeps rounding noise from cycling
        if cost - c <= 1e-14 * cost.abs() {
            break;
        }
        assert!(c <= cost, "PAM objective increased from {cost} to {c}");
        medoids[slot] = o;
        cost = c;
        swaps += 1;
    }

    PamResult {
        k,
        assignment: dist.assign(&medoids),
        medoids,
        cost,
        swaps,
    }
}

/// PAM from the BUILD start plus `restarts` seeded random starts, keeping
/// the lowest objective. SWAP alone stops at single-swap local optima.
pub fn pam_multistart(dist: &DistanceMatrix, k: usize, restarts: usize, seed: u64) -> Result<PamResult> {
    check_k(dist, k)?;
    let mut best = swap(dist, build(dist, k));
    let mut rng = crate::rng::stream(seed, crate::rng::tag::PAM, k as u64);
    let mut pool: Vec<usize> = (0..dist.len()).collect();
    for _ in 0..restarts {
        for j in 0..k {
            let r = rng.random_range(j..pool.len());
            pool.swap(j, r);
        }
        let run = swap(dist, pool[..k].to_vec());
        if run.cost < best.cost {
            best = run;
        }
    }
    Ok(best)
}

/// Minimum total dissimilarity over all medoid subsets of size `k`.
pub fn exhaustive_cost(dist: &DistanceMatrix, k: usize) -> f64 {
    fn rec(dist: &DistanceMatrix, start: usize, k: usize, chosen: &mut Vec<usize>, best: &mut f64) {
        if chosen.len() == k {
            *best = best.min(dist.cost(chosen));
            return;
        }
        for c in start..dist.len() {
            chosen.push(c);
            rec(dist, c + 1, k, chosen, best);
            chosen.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(dist, 0, k, &mut Vec::with_capacity(k), &mut best);
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    pub options: PamOptions,
    /// One PAM run per requested `k`, sorted by `k`.
    pub runs: Vec<PamResult>,
    /// Advisory knee of the elbow curve: the interior `k` with the
    /// largest second difference of the objective.
    pub suggested_k: Option<usize>,
}

impl ClusterReport {
    pub fn elbow(&self) -> Vec<(usize, f64)> {
        self.runs.iter().map(|r| (r.k, r.cost)).collect()
    }

    pub fn run(&self, k: usize) -> Option<&PamResult> {
        self.runs.iter().find(|r| r.k == k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PamOptions {
    pub metric: Metric,
    /// Random starts in addition to BUILD.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for PamOptions {
    fn default() -> Self {
        Self {
            metric: Metric::Euclidean,
            restarts: DEFAULT_RESTARTS,
            seed: 0,
        }
    }
}

pub const DEFAULT_RESTARTS: usize = 32;

pub fn pam_cluster(points: &[Vec<f64>], k_candidates: &[usize], options: &PamOptions) -> Result<ClusterReport> {
    let dist = DistanceMatrix::from_points(points, options.metric)?;
    let mut ks = k_candidates.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let runs = ks
        .iter()
        .map(|&k| pam_multistart(&dist, k, options.restarts, options.seed))
        .collect::<Result<Vec<_>>>()?;
    let suggested_k = runs
        .windows(3)
        .map(|w| (w[1].k, w[0].cost - 2.0 * w[1].cost + w[2].cost))
        .fold(None, |best: Option<(usize, f64)>, (k, d2)| match best {
            Some((_, b)) if b >= d2 => best,
            _ => Some((k, d2)),
        })
        .map(|(k, _)| k);
    Ok(ClusterReport {
        options: *options,
        runs,
        suggested_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn line(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn separated_pairs() {
        let r = pam_cluster(&line(&[0.0, 0.1, 10.0, 10.1]), &[2], &PamOptions::default()).unwrap();
        let a = &r.runs[0].assignment;
        assert_eq!(a[0], a[1]);
        assert_eq!(a[2], a[3]);
        assert_ne!(a[0], a[2]);
        assert!((r.runs[0].cost - 0.2).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n_is_free() {
        let pts = line(&[3.0, -1.0, 7.5, 2.2, 0.0]);
        let d = DistanceMatrix::from_points(&pts, Metric::Euclidean).unwrap();
        assert_eq!(pam(&d, 5).unwrap().cost, 0.0);
    }

    #[test]
    fn too_many_clusters() {
        let d = DistanceMatrix::from_points(&line(&[1.0, 2.0]), Metric::Euclidean).unwrap();
        assert_eq!(pam(&d, 3), Err(Error::TooManyClusters { k: 3, points: 2 }));
    }

    #[test]
    fn matches_brute_force_on_small_instances() {
        let mut rng = crate::rng::ChainRng::seed_from_u64(99);
        for _ in 0..20 {
            let pts: Vec<Vec<f64>> = (0..12).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
            let d = DistanceMatrix::from_points(&pts, Metric::Euclidean).unwrap();
            let r = pam_multistart(&d, 3, DEFAULT_RESTARTS, 0).unwrap();
            let best = exhaustive_cost(&d, 3);
            assert!(
                (r.cost - best).abs() <= 1e-12 * r.cost,
                "{} vs {best} {:?}",
                r.cost,
                r.medoids
            );
            assert!((r.cost - d.cost(&r.medoids)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_start_can_stall_in_a_local_optimum() {
        let mut rng = crate::rng::ChainRng::seed_from_u64(99);
        let stalled = (0..40).any(|_| {
            let pts: Vec<Vec<f64>> = (0..12).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
            let d = DistanceMatrix::from_points(&pts, Metric::Euclidean).unwrap();
            pam(&d, 3).unwrap().cost > exhaustive_cost(&d, 3) * (1.0 + 1e-12)
        });
        assert!(stalled);
    }

    #[test]
    fn assignment_is_nearest_medoid() {
        let mut rng = crate::rng::ChainRng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random(), rng.random()]).collect();
        let d = DistanceMatrix::from_points(&pts, Metric::Manhattan).unwrap();
        let r = pam(&d, 4).unwrap();
        for (p, &c) in r.assignment.iter().enumerate() {
            for &m in &r.medoids {
                assert!(d.get(p, r.medoids[c]) <= d.get(p, m));
            }
        }
    }

    #[test]
    fn elbow_knee_on_four_blobs() {
        let mut pts = Vec::new();
        for (cx, cy) in [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (10.0, 10.0)] {
            for j in 0..5 {
                pts.push(vec![cx + 0.1 * j as f64, cy - 0.05 * j as f64]);
            }
        }
        let r = pam_cluster(&pts, &[1, 2, 3, 4, 5, 6], &PamOptions::default()).unwrap();
        assert_eq!(r.suggested_k, Some(4));
        let e = r.elbow();
        assert!(e.windows(2).all(|w| w[1].1 <= w[0].1));
    }
}
