//! Blind extraction: MLP-based authentication-mark recovery with tamper
//! localization, and copyright recovery via dequantization with
//! entropy-weighted four-copy voting. No operation here reads the cover
//! image; inputs are the received image, the keys, and the sidecar metadata.

pub mod mlp;

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::embed::{dequantize_bit, preprocess, Mode};
use crate::error::{Error, Result};
use crate::image::{luminance, partition, BlockGrid, Image, Plane};
use crate::marks::{copy_positions, invert_logo_chain, BitMatrix, KeySet};
use crate::texture::block_entropy;
use crate::transforms::{dct_block, lwt_forward, zigzag_index, ShearletSystem, DIRECTIONS};

pub use mlp::{
    extract_bits, fine_tune, pretrain, train_extractor, MlpConfig, MlpModel, TrainedExtractor,
    FEATURES,
};

/// Per-block feature vectors for the extractor: the six directional
/// carrier coefficients of the received image plus the block spatial mean
/// and STD, z-scored per column over the image. Every direction of a block
/// receives a same-sign write at embedding, so the readout works directly
/// on the direction bands without re-deriving the embedder's STD ordering.
pub fn block_feature_vectors(
    sys: &ShearletSystem,
    plane: &Plane,
    block_side: usize,
) -> Result<Vec<[f64; FEATURES]>> {
    let grid = partition(plane.rows, plane.cols, block_side)?;
    let pyramid = sys.forward(plane)?;
    let stamps = sys.block_carriers(block_side);
    let mut rows = Vec::with_capacity(grid.total());
    for bi in 0..grid.block_rows {
        for bj in 0..grid.block_cols {
            let (r0, c0) = grid.origin(bi, bj);
            let mut row = [0.0; FEATURES];
            for (d, band) in pyramid.details.iter().enumerate() {
                let stamp = &stamps[d];
                let mut acc = 0.0;
                let mut k = 0;
                for r in r0..r0 + block_side {
                    for c in c0..c0 + block_side {
                        acc += band.at(r, c) * stamp[k];
                        k += 1;
                    }
                }
                row[d] = acc;
            }
            row[DIRECTIONS] = plane.block_mean(r0, c0, block_side);
            row[DIRECTIONS + 1] = plane.block_std(r0, c0, block_side);
            rows.push(row);
        }
    }
    zscore(&mut rows);
    Ok(rows)
}

fn zscore(rows: &mut [[f64; FEATURES]]) {
    let n = rows.len() as f64;
    for f in 0..FEATURES {
        let mean = rows.iter().map(|r| r[f]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-12);
        for r in rows.iter_mut() {
            r[f] = (r[f] - mean) / std;
        }
    }
}

/// Trains the per-image extractor on the received image and reads the
/// authentication mark back out of it.
pub fn extract_auth(
    sys: &ShearletSystem,
    plane: &Plane,
    keys: &KeySet,
    block_side: usize,
    seed: u64,
    cfg: &MlpConfig,
) -> Result<(BitMatrix, TrainedExtractor)> {
    let grid = partition(plane.rows, plane.cols, block_side)?;
    let auth = crate::marks::gen_binary_sequence(keys.key3, grid.block_rows, grid.block_cols);
    let features = block_feature_vectors(sys, plane, block_side)?;
    let trained = train_extractor(&features, &auth, seed, cfg)?;
    let extracted = extract_bits(&trained.model, &features, grid.block_rows, grid.block_cols);
    Ok((extracted, trained))
}

/// Binary tamper map before and after post-processing.
#[derive(Debug, Clone)]
pub struct TamperReport {
    /// raw per-block mismatch map
    pub raw: BitMatrix,
    /// after isolated-pixel removal and 5x5 closing
    pub map: BitMatrix,
}

impl TamperReport {
    pub fn tampered_blocks(&self) -> usize {
        self.map.bits.iter().map(|&b| b as usize).sum()
    }
}

/// XOR mismatch map, with 8-connected components smaller than 3 removed and
/// a morphological closing by a 5x5 square.
pub fn tamper_map(extracted: &BitMatrix, original: &BitMatrix) -> Result<TamperReport> {
    let raw = crate::marks::xor_mask(extracted, original)?;
    let filtered = remove_small_components(&raw, 3);
    let map = close_5x5(&filtered);
    Ok(TamperReport { raw, map })
}

fn remove_small_components(map: &BitMatrix, min_area: usize) -> BitMatrix {
    let (rows, cols) = (map.rows, map.cols);
    let mut out = map.clone();
    let mut visited = vec![false; rows * cols];
    let mut stack = Vec::new();
    let mut component = Vec::new();
    for start in 0..rows * cols {
        if map.bits[start] == 0 || visited[start] {
            continue;
        }
        stack.push(start);
        visited[start] = true;
        component.clear();
        while let Some(p) = stack.pop() {
            component.push(p);
            let (r, c) = (p / cols, p % cols);
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                        continue;
                    }
                    let q = nr as usize * cols + nc as usize;
                    if map.bits[q] == 1 && !visited[q] {
                        visited[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        if component.len() < min_area {
            for &p in &component {
                out.bits[p] = 0;
            }
        }
    }
    out
}

fn morph_5x5(map: &BitMatrix, dilate: bool) -> BitMatrix {
    let (rows, cols) = (map.rows as i64, map.cols as i64);
    let mut out = BitMatrix::zeros(map.rows, map.cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut hit = !dilate;
            'scan: for dr in -2..=2 {
                for dc in -2..=2 {
                    let (nr, nc) = (r + dr, c + dc);
                    // outside the map counts as background
                    let v = if nr < 0 || nc < 0 || nr >= rows || nc >= cols {
                        0
                    } else {
                        map.bits[(nr * cols + nc) as usize]
                    };
                    if dilate && v == 1 {
                        hit = true;
                        break 'scan;
                    }
                    if !dilate && v == 0 {
                        hit = false;
                        break 'scan;
                    }
                }
            }
            out.bits[(r * cols + c) as usize] = hit as u8;
        }
    }
    out
}

fn close_5x5(map: &BitMatrix) -> BitMatrix {
    morph_5x5(&morph_5x5(map, true), false)
}

/// Extracted logo plus the raw signals that produced it.
#[derive(Debug, Clone)]
pub struct CopyrightExtraction {
    pub logo: BitMatrix,
    /// dequantized tiled bits before voting
    pub tiled: BitMatrix,
    /// entropy-based reliability weight per mark position
    pub weights: Vec<f64>,
    /// how many of the four copies agreed with the voted bit, per logo bit
    pub copy_agreement: Vec<u8>,
}

/// Dequantizes the tiled copyright bits from the approximate-band carrier of
/// the received image only.
pub fn extract_tiled_bits(
    sys: &ShearletSystem,
    plane: &Plane,
    block_side: usize,
    delta_prime: f64,
) -> Result<BitMatrix> {
    let grid = partition(plane.rows, plane.cols, block_side)?;
    let approx = sys.forward_band(plane, 0)?;
    let quad = lwt_forward(&approx)?;
    let dct_side = block_side / 2;
    let coeffs = dct_block(&quad.ll, dct_side)?;
    let (ac_r, ac_c) = zigzag_index(dct_side, 2)?;
    let mut bits = BitMatrix::zeros(grid.block_rows, grid.block_cols);
    for bi in 0..grid.block_rows {
        for bj in 0..grid.block_cols {
            let coeff = coeffs.at(bi * dct_side + ac_r, bj * dct_side + ac_c);
            bits.set(bi, bj, dequantize_bit(coeff, delta_prime));
        }
    }
    Ok(bits)
}

/// Full blind copyright recovery: dequantize, weight each carrier position
/// by one minus the normalized spatial entropy of its block, vote across
/// the four copies (ties go to 1), unshuffle, decrypt.
pub fn extract_copyright(
    img: &Image,
    keys: &KeySet,
    block_side: usize,
    delta_prime: f64,
) -> Result<CopyrightExtraction> {
    let plane = luminance(img)?;
    let sys = ShearletSystem::new(plane.rows, plane.cols)?;
    extract_copyright_with_system(&sys, &plane, keys, block_side, delta_prime)
}

pub fn extract_copyright_with_system(
    sys: &ShearletSystem,
    plane: &Plane,
    keys: &KeySet,
    block_side: usize,
    delta_prime: f64,
) -> Result<CopyrightExtraction> {
    if delta_prime <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "delta_prime must be positive, got {delta_prime}"
        )));
    }
    let grid = partition(plane.rows, plane.cols, block_side)?;
    let tiled = extract_tiled_bits(sys, plane, block_side, delta_prime)?;
    let weights = reliability_weights(plane, &grid);
    let (logo_rows, logo_cols) = (grid.block_rows / 2, grid.block_cols / 2);
    let mut voted = BitMatrix::zeros(logo_rows, logo_cols);
    let mut copy_agreement = Vec::with_capacity(logo_rows * logo_cols);
    for r in 0..logo_rows {
        for c in 0..logo_cols {
            let mut vote = [0.0f64; 2];
            let positions = copy_positions(logo_rows, logo_cols, r, c);
            for (pr, pc) in positions {
                let bit = tiled.at(pr, pc) as usize;
                vote[bit] += weights[pr * grid.block_cols + pc];
            }
            let bit = (vote[1] >= vote[0]) as u8;
            voted.set(r, c, bit);
            copy_agreement
                .push(positions.iter().filter(|&&(pr, pc)| tiled.at(pr, pc) == bit).count() as u8);
        }
    }
    let logo = invert_logo_chain(&voted, keys);
    Ok(CopyrightExtraction {
        logo,
        tiled,
        weights,
        copy_agreement,
    })
}

/// P = 1 - normalized entropy of the co-located spatial block of the
/// received image: busier blocks are likelier to have been damaged, so they
/// carry less voting weight.
pub fn reliability_weights(plane: &Plane, grid: &BlockGrid) -> Vec<f64> {
    let mut weights = Vec::with_capacity(grid.total());
    for bi in 0..grid.block_rows {
        for bj in 0..grid.block_cols {
            let (r0, c0) = grid.origin(bi, bj);
            let entropy = block_entropy(plane, r0, c0, grid.side);
            weights.push(1.0 - entropy / 8.0);
        }
    }
    weights
}

// ---------------------------------------------------------------------------
// Sidecar metadata
// ---------------------------------------------------------------------------

/// Plain-text key=value sidecar that travels with the watermarked image;
/// extraction needs the quantization step and block side from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sidecar {
    pub delta_prime: f64,
    pub delta_dprime: f64,
    pub mode: Mode,
    pub block_side: usize,
    pub image_hash: String,
}

/// Hex SHA-256 over dimensions and raw samples.
pub fn image_hash(img: &Image) -> String {
    let mut hasher = Sha256::new();
    hasher.update(img.width().to_le_bytes());
    hasher.update(img.height().to_le_bytes());
    hasher.update([img.channels() as u8]);
    hasher.update(img.data());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl Sidecar {
    pub fn to_text(&self) -> String {
        format!(
            "delta_prime={}\ndelta_dprime={}\nmode={}\nblock_side={}\nimage_hash={}\n",
            self.delta_prime,
            self.delta_dprime,
            self.mode.as_str(),
            self.block_side,
            self.image_hash
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut delta_prime = None;
        let mut delta_dprime = None;
        let mut mode = None;
        let mut block_side = None;
        let mut image_hash = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::MissingMetadata(format!("malformed sidecar line: {line}"))
            })?;
            match key.trim() {
                "delta_prime" => delta_prime = value.trim().parse::<f64>().ok(),
                "delta_dprime" => delta_dprime = value.trim().parse::<f64>().ok(),
                "mode" => mode = value.trim().parse::<Mode>().ok(),
                "block_side" => block_side = value.trim().parse::<usize>().ok(),
                "image_hash" => image_hash = Some(value.trim().to_string()),
                _ => {}
            }
        }
        let missing = |field: &str| Error::MissingMetadata(format!("sidecar lacks {field}"));
        Ok(Self {
            delta_prime: delta_prime.ok_or_else(|| missing("delta_prime"))?,
            delta_dprime: delta_dprime.ok_or_else(|| missing("delta_dprime"))?,
            mode: mode.ok_or_else(|| missing("mode"))?,
            block_side: block_side.ok_or_else(|| missing("block_side"))?,
            image_hash: image_hash.ok_or_else(|| missing("image_hash"))?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::MissingMetadata(format!("cannot read sidecar {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tamper_map_empty_when_marks_match() {
        let a = crate::marks::gen_binary_sequence(1, 64, 64);
        let report = tamper_map(&a, &a).unwrap();
        assert_eq!(report.tampered_blocks(), 0);
    }

    #[test]
    fn isolated_pixels_are_removed() {
        let a = BitMatrix::zeros(64, 64);
        let mut b = BitMatrix::zeros(64, 64);
        b.set(10, 10, 1); // single isolated mismatch
        b.set(40, 40, 1);
        b.set(40, 41, 1); // pair: still below the area-3 cutoff
        let report = tamper_map(&b, &a).unwrap();
        assert_eq!(report.tampered_blocks(), 0);
        assert_eq!(report.raw.bits.iter().map(|&v| v as usize).sum::<usize>(), 3);
    }

    #[test]
    fn closing_fills_interior_holes() {
        let truth = BitMatrix::zeros(64, 64);
        let mut pred = BitMatrix::zeros(64, 64);
        for r in 20..32 {
            for c in 20..32 {
                pred.set(r, c, 1);
            }
        }
        pred.set(25, 25, 0);
        pred.set(28, 27, 0);
        let report = tamper_map(&pred, &truth).unwrap();
        assert_eq!(report.map.at(25, 25), 1, "hole filled by closing");
        assert_eq!(report.map.at(28, 27), 1);
        // solid region survives
        for r in 21..31 {
            for c in 21..31 {
                assert_eq!(report.map.at(r, c), 1);
            }
        }
    }

    #[test]
    fn weighted_vote_rule() {
        // copies [1,1,0,0] with P = [0.9,0.8,0.1,0.2] -> 1.7 >= 0.3 -> bit 1
        let votes = [(1u8, 0.9), (1, 0.8), (0, 0.1), (0, 0.2)];
        let mut tally = [0.0f64; 2];
        for (bit, w) in votes {
            tally[bit as usize] += w;
        }
        assert_eq!((tally[1] >= tally[0]) as u8, 1);
        // exact tie goes to 1
        let mut tally = [0.5f64, 0.5];
        tally[0] += 0.0;
        assert_eq!((tally[1] >= tally[0]) as u8, 1);
    }

    #[test]
    fn sidecar_round_trip_and_missing_fields() {
        let meta = Sidecar {
            delta_prime: 42.5,
            delta_dprime: 1.25,
            mode: Mode::Dual,
            block_side: 8,
            image_hash: "abc123".into(),
        };
        let parsed = Sidecar::parse(&meta.to_text()).unwrap();
        assert_eq!(parsed, meta);
        let err = Sidecar::parse("delta_prime=40\n").unwrap_err();
        assert!(matches!(err, Error::MissingMetadata(_)));
    }

    #[test]
    fn reliability_weight_floor_from_block_size() {
        // an 8x8 block has at most 64 distinct values, so normalized
        // entropy cannot exceed 6/8 and every weight is >= 0.25
        let plane = Plane::from_fn(16, 16, |r, c| ((r * 16 + c) % 256) as f64);
        let grid = partition(16, 16, 8).unwrap();
        let weights = reliability_weights(&plane, &grid);
        assert!(weights.iter().all(|&w| w >= 0.25 - 1e-12));
    }
}
