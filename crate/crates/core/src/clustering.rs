//! Spectral clustering of a fused affinity graph: symmetric-normalized
//! embedding with row normalization, then k-means with k-means++ seeding.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::solver::FusedGraph;

/// Eigenvalue gap below which the leading subspace is reported as degenerate.
pub const EIGEN_GAP_TOL: f64 = 1e-10;
pub const LLOYD_MAX_ITER: usize = 100;
pub const DEFAULT_RESTARTS: usize = 20;

#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    /// `n × c`; every nonzero row has unit norm.
    pub y: DMatrix<f64>,
    /// Leading eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// The `c`-th and `(c+1)`-th eigenvalues coincide, so the basis is arbitrary.
    pub degenerate: bool,
    /// Vertices with zero degree (treated as degree 1).
    pub isolated: Vec<usize>,
}

pub fn spectral_embed(h: &FusedGraph, c: usize) -> Result<SpectralEmbedding> {
    let n = h.n();
    if c < 2 {
        return Err(Error::Config(format!("need at least 2 clusters, got {c}")));
    }
    if c > n {
        return Err(Error::Shape(format!("{c} clusters requested for {n} vertices")));
    }
    let h = h.matrix();
    let mut isolated = Vec::new();
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = h.row(i).sum();
            if deg > 0.0 {
                deg.sqrt().recip()
            } else {
                isolated.push(i);
                1.0
            }
        })
        .collect();
    let l = DMatrix::from_fn(n, n, |i, j| inv_sqrt_deg[i] * h[(i, j)] * inv_sqrt_deg[j]);
    let eig = SymmetricEigen::new(l);

    let mut order: Vec<usize> = (0..n).collect();
    // stable sort: ties keep the solver's ascending index order
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order[..c].iter().map(|&i| eig.eigenvalues[i]).collect();
    let degenerate = c < n && eig.eigenvalues[order[c - 1]] - eig.eigenvalues[order[c]] < EIGEN_GAP_TOL;

    let mut y = DMatrix::zeros(n, c);
    for (col, &src) in order[..c].iter().enumerate() {
        let mut vec = eig.eigenvectors.column(src).into_owned();
        // fix the sign so the largest-magnitude entry is positive
        let pivot = vec.iamax();
        if vec[pivot] < 0.0 {
            vec.neg_mut();
        }
        y.set_column(col, &vec);
    }
    for mut row in y.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    Ok(SpectralEmbedding {
        y,
        eigenvalues,
        degenerate,
        isolated,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub inertia: f64,
    /// Restart that produced the result.
    pub restart: usize,
    /// Inertia after each assignment step of the winning restart.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(y: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, k: usize) -> f64 {
    y.row(i)
        .iter()
        .zip(centers.row(k).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn plus_plus_init(y: &DMatrix<f64>, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = y.nrows();
    let mut centers = DMatrix::zeros(c, y.ncols());
    centers.set_row(0, &y.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(y, i, &centers, 0)).collect();
    for k in 1..c {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // rounding can exhaust the loop; fall back to the last positive weight
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(0);
            }
            chosen
        } else {
            0
        };
        centers.set_row(k, &y.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(y, i, &centers, k));
        }
    }
    centers
}

/// Nearest center per point (lowest index on ties) and the resulting inertia.
fn assign(y: &DMatrix<f64>, centers: &DMatrix<f64>) -> (Vec<usize>, Vec<f64>) {
    (0..y.nrows())
        .map(|i| {
            (0..centers.nrows())
                .map(|k| (k, sq_dist(y, i, centers, k)))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
        })
        .unzip()
}

fn lloyd(y: &DMatrix<f64>, c: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64, Vec<f64>) {
    let (n, dim) = y.shape();
    let mut centers = plus_plus_init(y, c, rng);
    let (mut labels, mut dists) = assign(y, &centers);
    let mut trace = vec![dists.iter().sum::<f64>()];
    for _ in 0..LLOYD_MAX_ITER {
        let mut sums = DMatrix::<f64>::zeros(c, dim);
        let mut counts = vec![0usize; c];
        for (i, &k) in labels.iter().enumerate() {
            counts[k] += 1;
            let mut row = sums.row_mut(k);
            row += y.row(i);
        }
        for (k, &count) in counts.iter().enumerate() {
            if count > 0 {
                let mean = sums.row(k) / count as f64;
                centers.set_row(k, &mean);
            }
        }
        for (k, &count) in counts.iter().enumerate() {
            if count == 0 {
                // re-seed to the point farthest from its own center, if any is
                let (far, d) = dists
                    .iter()
                    .enumerate()
                    .fold((0, 0.0), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
                if d > 0.0 {
                    centers.set_row(k, &y.row(far));
                    dists[far] = 0.0;
                }
            }
        }
        let (next, next_dists) = assign(y, &centers);
        trace.push(next_dists.iter().sum());
        dists = next_dists;
        if next == labels {
            break;
        }
        labels = next;
    }
    debug_assert_eq!(labels.len(), n);
    let inertia = *trace.last().unwrap_or(&0.0);
    (labels, inertia, trace)
}

/// Best of `restarts` k-means++ / Lloyd runs. Restart `r` draws from stream
/// `r` of a ChaCha8 generator seeded with `seed`, so results do not depend on
/// execution order.
pub fn kmeans(y: &DMatrix<f64>, c: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    let n = y.nrows();
    if restarts == 0 {
        return Err(Error::Config("k-means needs at least one restart".into()));
    }
    if c == 0 || c > n {
        return Err(Error::Shape(format!("{c} clusters requested for {n} points")));
    }
    if y.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("k-means input".into()));
    }
    let runs: Vec<KMeansResult> = (0..restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(restart as u64);
            let (labels, inertia, inertia_trace) = lloyd(y, c, &mut rng);
            KMeansResult {
                labels,
                inertia,
                restart,
                inertia_trace,
            }
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|best, cur| if cur.inertia < best.inertia { cur } else { best })
        .expect("restarts ≥ 1");
    Ok(best)
}

/// Embeds `h` and runs k-means on the embedding.
pub fn spectral_cluster(h: &FusedGraph, c: usize, restarts: usize, seed: u64) -> Result<Vec<usize>> {
    let emb = spectral_embed(h, c)?;
    if emb.degenerate {
        log::warn!("spectral embedding has a degenerate leading eigenspace");
    }
    if !emb.isolated.is_empty() {
        log::warn!("{} isolated vertices in the fused graph", emb.isolated.len());
    }
    Ok(kmeans(&emb.y, c, restarts, seed)?.labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_graph(sizes: &[usize]) -> FusedGraph {
        let n: usize = sizes.iter().sum();
        let mut block = Vec::with_capacity(n);
        for (b, &s) in sizes.iter().enumerate() {
            block.extend(std::iter::repeat_n(b, s));
        }
        FusedGraph::new(DMatrix::from_fn(n, n, |i, j| f64::from(u8::from(block[i] == block[j])))).unwrap()
    }

    /// Cyclic Jacobi eigenvalue iteration, used as an independent oracle.
    fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        let mut a = a.clone();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)].powi(2))
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let cs = 1.0 / (t * t + 1.0).sqrt();
                    let sn = t * cs;
                    let mut rot = DMatrix::<f64>::identity(n, n);
                    rot[(p, p)] = cs;
                    rot[(q, q)] = cs;
                    rot[(p, q)] = sn;
                    rot[(q, p)] = -sn;
                    a = rot.transpose() * &a * &rot;
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        ev.sort_by(|x, y| y.total_cmp(x));
        ev
    }

    #[test]
    fn ideal_blocks_embed_identically_and_are_recovered() {
        let h = block_graph(&[4, 3, 5]);
        let emb = spectral_embed(&h, 3).unwrap();
        assert!(!emb.degenerate);
        for i in 0..4 {
            assert!((emb.y.row(i) - emb.y.row(0)).norm() < 1e-10);
        }
        let labels = kmeans(&emb.y, 3, 5, 1).unwrap().labels;
        assert!(labels[..4].iter().all(|&l| l == labels[0]));
        assert!(labels[4..7].iter().all(|&l| l == labels[4]));
        assert!(labels[7..].iter().all(|&l| l == labels[7]));
        assert!(labels[0] != labels[4] && labels[4] != labels[7] && labels[0] != labels[7]);
    }

    #[test]
    fn identity_graph_is_degenerate() {
        let h = FusedGraph::new(DMatrix::identity(5, 5)).unwrap();
        let emb = spectral_embed(&h, 2).unwrap();
        assert!(emb.degenerate);
        assert!(emb.eigenvalues.iter().all(|&e| (e - 1.0).abs() < 1e-12));
        let gram = emb.y.transpose() * &emb.y;
        assert!(gram.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn eigenvalues_match_jacobi_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let b = DMatrix::<f64>::from_fn(8, 8, |_, _| rng.random::<f64>());
            let h = FusedGraph::new(&b * b.transpose()).unwrap();
            let emb = spectral_embed(&h, 2).unwrap();
            let deg: Vec<f64> = (0..8).map(|i| h.matrix().row(i).sum()).collect();
            let l = DMatrix::from_fn(8, 8, |i, j| h.matrix()[(i, j)] / (deg[i] * deg[j]).sqrt());
            let oracle = jacobi_eigenvalues(&l);
            for (got, want) in emb.eigenvalues.iter().zip(&oracle) {
                assert!((got - want).abs() < 1e-8, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn isolated_vertices_are_flagged() {
        let mut m = block_graph(&[3, 3]).into_inner();
        m.row_mut(5).fill(0.0);
        m.column_mut(5).fill(0.0);
        let emb = spectral_embed(&FusedGraph::new(m).unwrap(), 2).unwrap();
        assert_eq!(emb.isolated, vec![5]);
        assert!(emb.y.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn too_many_clusters_is_an_error() {
        let h = block_graph(&[2, 2]);
        assert!(spectral_embed(&h, 5).is_err());
        assert!(spectral_embed(&h, 1).is_err());
        assert!(kmeans(&DMatrix::zeros(3, 2), 4, 1, 0).is_err());
        assert!(kmeans(&DMatrix::zeros(3, 2), 2, 0, 0).is_err());
    }

    #[test]
    fn separated_groups_are_recovered() {
        let y = DMatrix::from_row_slice(6, 2, &[0.0, 0.0, 0.1, 0.0, 0.0, 0.1, 5.0, 5.0, 5.1, 5.0, 5.0, 5.1]);
        let labels = kmeans(&y, 2, 3, 4).unwrap().labels;
        assert_eq!(labels[0], labels[1]);
        assert_eq!(labels[0], labels[2]);
        assert_eq!(labels[3], labels[4]);
        assert_eq!(labels[3], labels[5]);
        assert_ne!(labels[0], labels[3]);
    }

    #[test]
    fn identical_points_share_a_label() {
        let y = DMatrix::from_element(5, 2, 0.3);
        let res = kmeans(&y, 3, 4, 9).unwrap();
        assert!(res.labels.iter().all(|&l| l == res.labels[0]));
        assert_eq!(res.inertia, 0.0);
    }

    #[test]
    fn one_dimensional_matches_exhaustive_partition() {
        let xs = [0.0, 0.4, 1.1, 3.0, 3.2, 7.5];
        let y = DMatrix::from_column_slice(6, 1, &xs);
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << 6) - 1 {
            let mut cost = 0.0;
            for side in [true, false] {
                let part: Vec<f64> = (0..6)
                    .filter(|&i| ((mask >> i) & 1 == 1) == side)
                    .map(|i| xs[i])
                    .collect();
                let mean = part.iter().sum::<f64>() / part.len() as f64;
                cost += part.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
            }
            best = best.min(cost);
        }
        let res = kmeans(&y, 2, 20, 3).unwrap();
        assert!((res.inertia - best).abs() < 1e-12, "{} vs {best}", res.inertia);
    }

    #[test]
    fn inertia_never_increases_and_seed_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = DMatrix::<f64>::from_fn(40, 3, |_, _| rng.random::<f64>());
        let a = kmeans(&y, 4, 8, 21).unwrap();
        let b = kmeans(&y, 4, 8, 21).unwrap();
        assert_eq!(a, b);
        for w in a.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }
}
