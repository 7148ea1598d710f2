//! Block texture analysis: descriptor features, k-means clustering with
//! Calinski-Harabasz model selection, and the per-block strength coefficient
//! xi in [0.6, 1].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{BlockGrid, Plane};

/// Gabor filter bank: one scale, four orientations, unit-L2 complex kernels.
pub struct GaborBank {
    pub orientations: Vec<f64>,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub frequency: f64,
    kernels: Vec<GaborKernel>,
}

struct GaborKernel {
    side: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl GaborBank {
    /// Four orientations at 0/45/90/135 degrees, f = 0.25 cycles/pixel,
    /// sigma_x = sigma_y = 2.
    pub fn standard() -> Self {
        Self::new(
            vec![
                0.0,
                std::f64::consts::FRAC_PI_4,
                std::f64::consts::FRAC_PI_2,
                3.0 * std::f64::consts::FRAC_PI_4,
            ],
            2.0,
            2.0,
            0.25,
        )
    }

    pub fn new(orientations: Vec<f64>, sigma_x: f64, sigma_y: f64, frequency: f64) -> Self {
        assert!(orientations.len() >= 4, "bank needs at least 4 orientations");
        let half = (3.0 * sigma_x.max(sigma_y)).ceil() as isize;
        let side = (2 * half + 1) as usize;
        let kernels = orientations
            .iter()
            .map(|&theta| {
                let (sin_t, cos_t) = theta.sin_cos();
                let mut re = Vec::with_capacity(side * side);
                let mut im = Vec::with_capacity(side * side);
                for dy in -half..=half {
                    for dx in -half..=half {
                        let (x, y) = (dx as f64, dy as f64);
                        // rotate into the filter frame
                        let xr = x * cos_t + y * sin_t;
                        let yr = -x * sin_t + y * cos_t;
                        let env = (-0.5
                            * (xr * xr / (sigma_x * sigma_x) + yr * yr / (sigma_y * sigma_y)))
                            .exp()
                            / (2.0 * std::f64::consts::PI * sigma_x * sigma_y);
                        let phase = 2.0 * std::f64::consts::PI * frequency * xr;
                        re.push(env * phase.cos());
                        im.push(env * phase.sin());
                    }
                }
                let norm: f64 = re
                    .iter()
                    .zip(&im)
                    .map(|(a, b)| a * a + b * b)
                    .sum::<f64>()
                    .sqrt();
                for v in re.iter_mut().chain(im.iter_mut()) {
                    *v /= norm;
                }
                GaborKernel { side, re, im }
            })
            .collect();
        Self {
            orientations,
            sigma_x,
            sigma_y,
            frequency,
            kernels,
        }
    }

    /// Mean response magnitude over all orientations, computed per pixel
    /// with replicate border padding.
    fn response_magnitude(&self, plane: &Plane) -> Plane {
        let mut out = Plane::zeros(plane.rows, plane.cols);
        for kernel in &self.kernels {
            let half = (kernel.side / 2) as isize;
            for r in 0..plane.rows {
                for c in 0..plane.cols {
                    let mut acc_re = 0.0;
                    let mut acc_im = 0.0;
                    let mut k = 0usize;
                    for dy in -half..=half {
                        let rr = (r as isize + dy).clamp(0, plane.rows as isize - 1) as usize;
                        for dx in -half..=half {
                            let cc = (c as isize + dx).clamp(0, plane.cols as isize - 1) as usize;
                            let v = plane.at(rr, cc);
                            acc_re += v * kernel.re[k];
                            acc_im += v * kernel.im[k];
                            k += 1;
                        }
                    }
                    let mag = (acc_re * acc_re + acc_im * acc_im).sqrt();
                    out.data[r * plane.cols + c] += mag;
                }
            }
        }
        let scale = 1.0 / self.kernels.len() as f64;
        for v in out.data.iter_mut() {
            *v *= scale;
        }
        out
    }
}

/// Rotation-invariant uniform LBP code (8 neighbors, radius 1): the number
/// of set bits for uniform patterns, 9 for non-uniform ones.
fn lbp_code(plane: &Plane, r: usize, c: usize) -> u8 {
    const OFFSETS: [(isize, isize); 8] = [
        (-1, -1),
        (-1, 0),
        (-1, 1),
        (0, 1),
        (1, 1),
        (1, 0),
        (1, -1),
        (0, -1),
    ];
    let center = plane.at(r, c);
    let mut bits = [0u8; 8];
    for (k, (dy, dx)) in OFFSETS.iter().enumerate() {
        let rr = (r as isize + dy).clamp(0, plane.rows as isize - 1) as usize;
        let cc = (c as isize + dx).clamp(0, plane.cols as isize - 1) as usize;
        bits[k] = (plane.at(rr, cc) >= center) as u8;
    }
    let transitions = (0..8).filter(|&k| bits[k] != bits[(k + 1) % 8]).count();
    if transitions <= 2 {
        bits.iter().sum()
    } else {
        9
    }
}

/// 256-bin Shannon entropy in bits of one block, on rounded 8-bit values.
pub fn block_entropy(plane: &Plane, r0: usize, c0: usize, side: usize) -> f64 {
    let mut hist = [0u32; 256];
    for r in r0..r0 + side {
        for c in c0..c0 + side {
            let v = plane.at(r, c).round().clamp(0.0, 255.0) as usize;
            hist[v] += 1;
        }
    }
    let n = (side * side) as f64;
    let mut h = 0.0;
    for &count in hist.iter() {
        if count > 0 {
            let p = count as f64 / n;
            h -= p * p.log2();
        }
    }
    h
}

/// Per-block descriptor means, one row per block in row-major block order:
/// [LBP, entropy, STD, Gabor magnitude], min-max normalized per column.
#[derive(Debug, Clone)]
pub struct BlockFeatures {
    pub grid: BlockGrid,
    /// row-major blocks x 4 features
    pub rows: Vec<[f64; 4]>,
}

pub fn block_features(plane: &Plane, grid: &BlockGrid) -> Result<BlockFeatures> {
    if grid.block_rows * grid.side != plane.rows || grid.block_cols * grid.side != plane.cols {
        return Err(Error::ShapeMismatch("grid does not cover plane".into()));
    }
    let gabor = GaborBank::standard().response_magnitude(plane);
    let m = grid.side;
    let mut rows = Vec::with_capacity(grid.total());
    for bi in 0..grid.block_rows {
        for bj in 0..grid.block_cols {
            let (r0, c0) = grid.origin(bi, bj);
            let mut lbp_sum = 0.0;
            let mut gab_sum = 0.0;
            for r in r0..r0 + m {
                for c in c0..c0 + m {
                    lbp_sum += lbp_code(plane, r, c) as f64;
                    gab_sum += gabor.at(r, c);
                }
            }
            let area = (m * m) as f64;
            rows.push([
                lbp_sum / area,
                block_entropy(plane, r0, c0, m),
                plane.block_std(r0, c0, m),
                gab_sum / area,
            ]);
        }
    }
    // per-image min-max normalization; constant columns collapse to zero
    for f in 0..4 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in &rows {
            lo = lo.min(row[f]);
            hi = hi.max(row[f]);
        }
        let range = hi - lo;
        for row in rows.iter_mut() {
            row[f] = if range > 0.0 { (row[f] - lo) / range } else { 0.0 };
        }
    }
    Ok(BlockFeatures { grid: *grid, rows })
}

/// Lloyd's k-means with seeded k-means++ initialization. At most 300
/// iterations, stopping early when no centroid moves more than 1e-6.
/// Empty clusters are repaired by stealing the point farthest from its
/// centroid, so every returned cluster is nonempty.
pub fn kmeans(points: &[[f64; 4]], k: usize, seed: u64) -> Result<(Vec<usize>, Vec<[f64; 4]>)> {
    let distinct = {
        let mut sorted: Vec<[f64; 4]> = points.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted.dedup_by(|a, b| a == b);
        sorted.len()
    };
    if k == 0 || k > distinct {
        return Err(Error::InvalidParameter(format!(
            "k = {k} with {distinct} distinct points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kpp_init(points, k, &mut rng);
    let mut labels = vec![0usize; points.len()];
    for _ in 0..300 {
        for (i, p) in points.iter().enumerate() {
            labels[i] = nearest(p, &centroids).0;
        }
        repair_empty_clusters(points, &mut labels, &centroids, k);
        let mut next = vec![[0.0f64; 4]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for f in 0..4 {
                next[l][f] += p[f];
            }
        }
        for (c, &n) in next.iter_mut().zip(&counts) {
            for f in 0..4 {
                c[f] /= n as f64;
            }
        }
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| dist2(a, b).sqrt())
            .fold(0.0f64, f64::max);
        centroids = next;
        if shift < 1e-6 {
            break;
        }
    }
    for (i, p) in points.iter().enumerate() {
        labels[i] = nearest(p, &centroids).0;
    }
    repair_empty_clusters(points, &mut labels, &centroids, k);
    Ok((labels, centroids))
}

fn dist2(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let mut s = 0.0;
    for f in 0..4 {
        let d = a[f] - b[f];
        s += d * d;
    }
    s
}

fn nearest(p: &[f64; 4], centroids: &[[f64; 4]]) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn kpp_init(points: &[[f64; 4]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 4]> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())]];
    while centroids.len() < k {
        let d2: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // all remaining points coincide with a centroid; take any new one
            points
                .iter()
                .position(|p| centroids.iter().all(|c| dist2(p, c) > 0.0))
                .unwrap_or(0)
        } else {
            let mut target = rng.gen_range(0.0..total);
            let mut idx = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        };
        centroids.push(points[next]);
    }
    centroids
}

fn repair_empty_clusters(
    points: &[[f64; 4]],
    labels: &mut [usize],
    centroids: &[[f64; 4]],
    k: usize,
) {
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let farthest = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| counts[l] > 1)
            .max_by(|(i, &la), (j, &lb)| {
                dist2(&points[*i], &centroids[la])
                    .partial_cmp(&dist2(&points[*j], &centroids[lb]))
                    .unwrap()
                    .then(i.cmp(j))
            })
            .map(|(i, _)| i)
            .expect("some cluster has more than one point");
        labels[farthest] = empty;
    }
}

/// Calinski-Harabasz index of a labeled clustering.
pub fn calinski_harabasz(points: &[[f64; 4]], labels: &[usize], k: usize) -> f64 {
    let n = points.len();
    let mut grand = [0.0f64; 4];
    for p in points {
        for f in 0..4 {
            grand[f] += p[f];
        }
    }
    for g in grand.iter_mut() {
        *g /= n as f64;
    }
    let mut centroids = vec![[0.0f64; 4]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for f in 0..4 {
            centroids[l][f] += p[f];
        }
    }
    for (c, &cnt) in centroids.iter_mut().zip(&counts) {
        for f in 0..4 {
            *c = {
                let mut v = *c;
                v[f] /= cnt.max(1) as f64;
                v
            };
        }
    }
    let mut between = 0.0;
    for (c, &cnt) in centroids.iter().zip(&counts) {
        between += cnt as f64 * dist2(c, &grand);
    }
    let mut within = 0.0;
    for (p, &l) in points.iter().zip(labels) {
        within += dist2(p, &centroids[l]);
    }
    if within <= 0.0 {
        return f64::INFINITY;
    }
    (between / (k - 1) as f64) / (within / (n - k) as f64)
}

/// Picks the cluster count maximizing Calinski-Harabasz over k in [2, tau],
/// breaking ties toward smaller k.
pub fn select_k(points: &[[f64; 4]], tau: usize, seed: u64) -> Result<usize> {
    if tau < 2 {
        return Err(Error::InvalidParameter("tau must be at least 2".into()));
    }
    if points.len() <= tau {
        return Err(Error::InvalidParameter(format!(
            "need more than tau = {tau} blocks, got {}",
            points.len()
        )));
    }
    let mut best = (2usize, f64::NEG_INFINITY);
    for k in 2..=tau {
        let Ok((labels, _)) = kmeans(points, k, seed.wrapping_add(k as u64)) else {
            // fewer distinct rows than k: larger k cannot do better
            break;
        };
        let ch = calinski_harabasz(points, &labels, k);
        if ch > best.1 {
            best = (k, ch);
        }
    }
    Ok(best.0)
}

/// Per-block texture strength map.
#[derive(Debug, Clone)]
pub struct TextureMap {
    pub grid: BlockGrid,
    pub labels: Vec<usize>,
    pub k_star: usize,
    /// mean block entropy per cluster, in bits
    pub cluster_entropy: Vec<f64>,
    /// strength coefficient per block, row-major, in [0.6, 1]
    pub xi: Vec<f64>,
}

impl TextureMap {
    #[inline]
    pub fn xi_at(&self, block_row: usize, block_col: usize) -> f64 {
        self.xi[block_row * self.grid.block_cols + block_col]
    }
}

/// Maps cluster mean entropy (bits, range [0, 8]) linearly onto [0.6, 1].
pub fn xi_from_entropy(mean_entropy: f64) -> f64 {
    0.6 + 0.05 * mean_entropy.clamp(0.0, 8.0)
}

/// Assigns every block its cluster's mean entropy, scaled to [0.6, 1].
pub fn texture_coefficients(
    plane: &Plane,
    grid: &BlockGrid,
    labels: &[usize],
    k_star: usize,
) -> Result<TextureMap> {
    if labels.len() != grid.total() {
        return Err(Error::ShapeMismatch(
            "labels do not cover the block grid".into(),
        ));
    }
    let mut sums = vec![0.0f64; k_star];
    let mut counts = vec![0usize; k_star];
    for bi in 0..grid.block_rows {
        for bj in 0..grid.block_cols {
            let (r0, c0) = grid.origin(bi, bj);
            let l = labels[bi * grid.block_cols + bj];
            sums[l] += block_entropy(plane, r0, c0, grid.side);
            counts[l] += 1;
        }
    }
    let cluster_entropy: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let xi = labels
        .iter()
        .map(|&l| xi_from_entropy(cluster_entropy[l]))
        .collect();
    Ok(TextureMap {
        grid: *grid,
        labels: labels.to_vec(),
        k_star,
        cluster_entropy,
        xi,
    })
}

/// Full texture stage: features, model selection up to tau clusters, final
/// clustering, and the xi map.
pub fn analyze(plane: &Plane, grid: &BlockGrid, tau: usize, seed: u64) -> Result<TextureMap> {
    let features = block_features(plane, grid)?;
    let k_star = select_k(&features.rows, tau, seed)?;
    let (labels, _) = kmeans(&features.rows, k_star, seed.wrapping_add(k_star as u64))?;
    texture_coefficients(plane, grid, &labels, k_star)
}
