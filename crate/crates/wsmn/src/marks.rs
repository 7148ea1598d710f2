//! Watermark generation, encryption, shuffling, and tiling.
//!
//! The copyright logo is XOR-masked with a keyed bit stream, bit-shuffled by
//! a chaotic permutation, and tiled 2x2 so every logo bit gets four carrier
//! positions. The authentication mark is an independent keyed sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::Image;

/// Three independent 64-bit seeds: key1 drives the XOR stream, key2 the
/// shuffle permutation, key3 the authentication sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeySet {
    pub key1: u64,
    pub key2: u64,
    pub key3: u64,
}

/// Dense binary matrix with 0/1 bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    pub rows: usize,
    pub cols: usize,
    pub bits: Vec<u8>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![0; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> u8 {
        self.bits[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u8) {
        self.bits[r * self.cols + c] = v & 1;
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn density(&self) -> f64 {
        self.bits.iter().map(|&b| b as usize).sum::<usize>() as f64 / self.len() as f64
    }

    /// Thresholds an 8-bit image at 128 into bits; color inputs use the
    /// first channel.
    pub fn from_image(img: &Image) -> Self {
        let mut m = BitMatrix::zeros(img.height(), img.width());
        for r in 0..img.height() {
            for c in 0..img.width() {
                m.set(r, c, (img.at(r, c, 0) >= 128) as u8);
            }
        }
        m
    }

    pub fn to_image(&self) -> Image {
        let data = self.bits.iter().map(|&b| if b != 0 { 255 } else { 0 }).collect();
        Image::new(self.cols, self.rows, 1, data).expect("bit matrix is non-empty")
    }
}

/// Keyed pseudorandom bits: standard-normal draws thresholded at their
/// median (zero), so density is 1/2 in expectation.
pub fn gen_binary_sequence(seed: u64, rows: usize, cols: usize) -> BitMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = BitMatrix::zeros(rows, cols);
    for b in m.bits.iter_mut() {
        let x: f64 = StandardNormal.sample(&mut rng);
        *b = (x > 0.0) as u8;
    }
    m
}

/// Bit-wise XOR of two equal-shape marks; applying the same mask twice is
/// the identity.
pub fn xor_mask(mark: &BitMatrix, mask: &BitMatrix) -> Result<BitMatrix> {
    if mark.rows != mask.rows || mark.cols != mask.cols {
        return Err(Error::ShapeMismatch(format!(
            "xor_mask {}x{} vs {}x{}",
            mark.rows, mark.cols, mask.rows, mask.cols
        )));
    }
    let bits = mark
        .bits
        .iter()
        .zip(&mask.bits)
        .map(|(a, b)| a ^ b)
        .collect();
    Ok(BitMatrix {
        rows: mark.rows,
        cols: mark.cols,
        bits,
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Chaotic permutation of length `len`: logistic map x' = 3.99 x (1 - x)
/// seeded from a hash of the key (nearby keys must not collapse to the same
/// f64 seed), first 1000 iterates discarded, positions given by the
/// ascending argsort of the sequence.
pub fn ccs_permutation(key: u64, len: usize) -> Vec<usize> {
    let spread = (splitmix64(key) >> 11) as f64 / (1u64 << 53) as f64;
    let mut x = 0.05 + 0.9 * spread;
    for _ in 0..1000 {
        x = 3.99 * x * (1.0 - x);
    }
    let mut seq = Vec::with_capacity(len);
    for _ in 0..len {
        x = 3.99 * x * (1.0 - x);
        seq.push(x);
    }
    let mut perm: Vec<usize> = (0..len).collect();
    perm.sort_by(|&a, &b| seq[a].partial_cmp(&seq[b]).unwrap().then(a.cmp(&b)));
    perm
}

/// Row-major bit shuffle by the key2 chaotic permutation.
pub fn ccs_shuffle(mark: &BitMatrix, key2: u64) -> BitMatrix {
    let perm = ccs_permutation(key2, mark.len());
    let bits = perm.iter().map(|&p| mark.bits[p]).collect();
    BitMatrix {
        rows: mark.rows,
        cols: mark.cols,
        bits,
    }
}

pub fn ccs_unshuffle(shuffled: &BitMatrix, key2: u64) -> BitMatrix {
    let perm = ccs_permutation(key2, shuffled.len());
    let mut bits = vec![0u8; shuffled.len()];
    for (i, &p) in perm.iter().enumerate() {
        bits[p] = shuffled.bits[i];
    }
    BitMatrix {
        rows: shuffled.rows,
        cols: shuffled.cols,
        bits,
    }
}

/// 2x2 tiling: each bit of the input appears at four fixed carrier
/// positions of the doubled matrix.
pub fn tile_four(mark: &BitMatrix) -> BitMatrix {
    let mut out = BitMatrix::zeros(mark.rows * 2, mark.cols * 2);
    for r in 0..mark.rows {
        for c in 0..mark.cols {
            let b = mark.at(r, c);
            out.set(r, c, b);
            out.set(r + mark.rows, c, b);
            out.set(r, c + mark.cols, b);
            out.set(r + mark.rows, c + mark.cols, b);
        }
    }
    out
}

/// The four carrier positions of logo bit (r, c) in the tiled mark.
pub fn copy_positions(
    logo_rows: usize,
    logo_cols: usize,
    r: usize,
    c: usize,
) -> [(usize, usize); 4] {
    [
        (r, c),
        (r + logo_rows, c),
        (r, c + logo_cols),
        (r + logo_rows, c + logo_cols),
    ]
}

/// Everything the embedder consumes: the processing chain of the logo plus
/// the keyed authentication sequence.
#[derive(Debug, Clone)]
pub struct MarkSet {
    pub logo: BitMatrix,
    pub keystream: BitMatrix,
    pub encrypted: BitMatrix,
    pub shuffled: BitMatrix,
    pub copyright: BitMatrix,
    pub auth: BitMatrix,
}

/// Runs the full mark-processing chain for a host of `rows x cols` pixels
/// and block side `m`: the logo must be (rows/2m) x (cols/2m); the tiled
/// copyright mark and the authentication mark are both (rows/m) x (cols/m).
pub fn prepare_marks(
    logo: &BitMatrix,
    keys: &KeySet,
    rows: usize,
    cols: usize,
    m: usize,
) -> Result<MarkSet> {
    let (lr, lc) = (rows / (2 * m), cols / (2 * m));
    if logo.rows != lr || logo.cols != lc {
        return Err(Error::ShapeMismatch(format!(
            "logo must be {lr}x{lc} for a {rows}x{cols} host with block side {m}, got {}x{}",
            logo.rows, logo.cols
        )));
    }
    let keystream = gen_binary_sequence(keys.key1, lr, lc);
    let encrypted = xor_mask(logo, &keystream)?;
    let shuffled = ccs_shuffle(&encrypted, keys.key2);
    let copyright = tile_four(&shuffled);
    let auth = gen_binary_sequence(keys.key3, rows / m, cols / m);
    Ok(MarkSet {
        logo: logo.clone(),
        keystream,
        encrypted,
        shuffled,
        copyright,
        auth,
    })
}

/// Inverse of the logo processing chain: unshuffle then decrypt.
pub fn invert_logo_chain(shuffled: &BitMatrix, keys: &KeySet) -> BitMatrix {
    let encrypted = ccs_unshuffle(shuffled, keys.key2);
    let keystream = gen_binary_sequence(keys.key1, shuffled.rows, shuffled.cols);
    xor_mask(&encrypted, &keystream).expect("keystream shaped from input")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_mark(rows: usize, cols: usize, seed: u64) -> BitMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = BitMatrix::zeros(rows, cols);
        for b in m.bits.iter_mut() {
            *b = rng.gen_range(0..2u8);
        }
        m
    }

    #[test]
    fn keyed_sequences_are_deterministic_and_balanced() {
        let a = gen_binary_sequence(42, 64, 64);
        let b = gen_binary_sequence(42, 64, 64);
        assert_eq!(a, b);
        assert_eq!(a.len(), 4096);
        assert!((a.density() - 0.5).abs() <= 0.02, "density {}", a.density());
    }

    #[test]
    fn different_seeds_give_half_hamming_distance() {
        let mut total = 0.0;
        let pairs = 100;
        for i in 0..pairs {
            let a = gen_binary_sequence(1000 + i, 64, 64);
            let b = gen_binary_sequence(5000 + i, 64, 64);
            let dist: usize = a
                .bits
                .iter()
                .zip(&b.bits)
                .map(|(x, y)| (x ^ y) as usize)
                .sum();
            total += dist as f64 / a.len() as f64;
        }
        let mean = total / pairs as f64;
        assert!((mean - 0.5).abs() <= 0.02, "mean distance {mean}");
    }

    #[test]
    fn xor_involution_and_degenerate_cases() {
        let m = random_mark(32, 32, 3);
        let zero = BitMatrix::zeros(32, 32);
        assert_eq!(xor_mask(&m, &zero).unwrap(), m);
        assert_eq!(xor_mask(&m, &m).unwrap(), zero);
        let chi = gen_binary_sequence(9, 32, 32);
        assert_eq!(xor_mask(&xor_mask(&m, &chi).unwrap(), &chi).unwrap(), m);
        assert!(xor_mask(&m, &BitMatrix::zeros(16, 16)).is_err());
    }

    #[test]
    fn shuffle_is_a_key_dependent_bijection() {
        let m = random_mark(32, 32, 4);
        let s = ccs_shuffle(&m, 77);
        assert_eq!(ccs_unshuffle(&s, 77), m);

        let perm = ccs_permutation(77, 1024);
        let mut seen = vec![false; 1024];
        for &p in &perm {
            assert!(!seen[p]);
            seen[p] = true;
        }

        let mut differing = 0usize;
        let mut pairs = 0usize;
        for i in 0..100u64 {
            let pa = ccs_permutation(i * 2 + 1, 1024);
            let pb = ccs_permutation(i * 2 + 2, 1024);
            differing += pa.iter().zip(&pb).filter(|(a, b)| a != b).count();
            pairs += 1024;
        }
        let frac = differing as f64 / pairs as f64;
        assert!(frac > 0.95, "permutations agree too often: {frac}");
    }

    #[test]
    fn tiling_quadruples_every_bit() {
        let m = random_mark(32, 32, 5);
        let t = tile_four(&m);
        assert_eq!((t.rows, t.cols), (64, 64));
        for r in 0..32 {
            for c in 0..32 {
                for (pr, pc) in copy_positions(32, 32, r, c) {
                    assert_eq!(t.at(pr, pc), m.at(r, c));
                }
            }
        }
        let ones = BitMatrix {
            rows: 2,
            cols: 2,
            bits: vec![1; 4],
        };
        assert!(tile_four(&ones).bits.iter().all(|&b| b == 1));
    }

    #[test]
    fn prepare_then_invert_recovers_logo() {
        let keys = KeySet {
            key1: 111,
            key2: 222,
            key3: 333,
        };
        let logo = random_mark(32, 32, 6);
        let set = prepare_marks(&logo, &keys, 512, 512, 8).unwrap();
        assert_eq!((set.copyright.rows, set.copyright.cols), (64, 64));
        assert_eq!((set.auth.rows, set.auth.cols), (64, 64));
        assert_eq!(invert_logo_chain(&set.shuffled, &keys), logo);

        let wrong = random_mark(30, 30, 7);
        assert!(prepare_marks(&wrong, &keys, 512, 512, 8).is_err());
    }

    #[test]
    fn each_key_matters() {
        let keys = KeySet {
            key1: 1,
            key2: 2,
            key3: 3,
        };
        let logo = random_mark(32, 32, 8);
        let base = prepare_marks(&logo, &keys, 512, 512, 8).unwrap();
        let k1 = prepare_marks(&logo, &KeySet { key1: 9, ..keys }, 512, 512, 8).unwrap();
        let k2 = prepare_marks(&logo, &KeySet { key2: 9, ..keys }, 512, 512, 8).unwrap();
        let k3 = prepare_marks(&logo, &KeySet { key3: 9, ..keys }, 512, 512, 8).unwrap();
        assert_ne!(base.keystream, k1.keystream);
        assert_ne!(base.shuffled, k2.shuffled);
        assert_ne!(base.auth, k3.auth);
    }
}
