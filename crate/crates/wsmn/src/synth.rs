//! Seeded synthetic test images: the hermetic stand-in corpus used when the
//! standard test set cannot be downloaded. Each image mixes smooth shading,
//! band-limited texture fields with spatially varying strength, and a few
//! hard-edged structures, so block-entropy and directional statistics vary
//! the way they do in natural photographs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::{from_ycocg, ColorPlanes, Image, Plane};

/// The fifteen standard test-image names; the first eight render in color,
/// the rest grayscale.
pub const CORPUS_NAMES: [&str; 15] = [
    "baboon", "barbara", "lena", "pepper", "girl", "lake", "f16", "house", "elaine", "goldhill",
    "boat", "camera", "toys", "zelda", "crowd",
];

pub const COLOR_COUNT: usize = 8;

fn name_seed(name: &str, seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Smooth random field from a handful of low-frequency cosines.
fn smooth_field(size: usize, rng: &mut ChaCha8Rng, terms: usize, max_cycles: f64) -> Plane {
    let mut waves = Vec::with_capacity(terms);
    for _ in 0..terms {
        waves.push((
            rng.gen_range(0.3..max_cycles) * std::f64::consts::TAU / size as f64,
            rng.gen_range(0.3..max_cycles) * std::f64::consts::TAU / size as f64,
            rng.gen_range(0.0..std::f64::consts::TAU),
            rng.gen_range(0.4..1.0),
        ));
    }
    let mut plane = Plane::zeros(size, size);
    for r in 0..size {
        for c in 0..size {
            let mut v = 0.0;
            for &(fy, fx, phase, amp) in &waves {
                v += amp * (fy * r as f64 + fx * c as f64 + phase).cos();
            }
            plane.set(r, c, v);
        }
    }
    plane
}

/// Noise with a photographic falloff: white noise spectrally shaped to
/// roughly 1/f so fine scales stay much weaker than coarse ones.
fn texture_field(size: usize, rng: &mut ChaCha8Rng) -> Plane {
    use rustfft::num_complex::Complex;
    let noise = Plane::from_fn(size, size, |_, _| rng.gen_range(-1.0..1.0));
    let fft = crate::transforms::fft::Fft2::new(size, size);
    let mut spectrum = fft.forward(&noise);
    let knee = 0.02; // c/s where the falloff starts
    for r in 0..size {
        let fy = crate::transforms::fft::bin_freq(r, size);
        for c in 0..size {
            let fx = crate::transforms::fft::bin_freq(c, size);
            let f = (fx * fx + fy * fy).sqrt();
            let gain = knee / (knee + f);
            spectrum[r * size + c] *= Complex::new(gain, 0.0);
        }
    }
    let shaped = fft.inverse_real(spectrum);
    let rms = (shaped.data.iter().map(|v| v * v).sum::<f64>() / shaped.data.len() as f64).sqrt();
    Plane {
        rows: size,
        cols: size,
        data: shaped.data.iter().map(|v| v / rms.max(1e-12)).collect(),
    }
}

/// Grayscale luminance plane for one named corpus member.
pub fn synth_plane(name: &str, size: usize, seed: u64) -> Plane {
    let mut rng = ChaCha8Rng::seed_from_u64(name_seed(name, seed));
    let shading = smooth_field(size, &mut rng, 5, 3.0);
    let envelope = smooth_field(size, &mut rng, 3, 2.0);
    let grain = texture_field(size, &mut rng);
    let fine = texture_field(size, &mut rng);

    let mut plane = Plane::zeros(size, size);
    for r in 0..size {
        for c in 0..size {
            // envelope in [0, 1] gates the grain: flat and rough regions
            let gate = (envelope.at(r, c) * 0.35 + 0.5).clamp(0.0, 1.0);
            let v = 125.0
                + 42.0 * shading.at(r, c)
                + 34.0 * gate * grain.at(r, c)
                + 3.0 * fine.at(r, c);
            plane.set(r, c, v);
        }
    }

    // hard-edged structures: axis-aligned and rotated bars with offsets
    let structures = rng.gen_range(6..10);
    for _ in 0..structures {
        let cx = rng.gen_range(0.0..size as f64);
        let cy = rng.gen_range(0.0..size as f64);
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        let half_len = rng.gen_range(size as f64 * 0.08..size as f64 * 0.3);
        let half_wid = rng.gen_range(size as f64 * 0.02..size as f64 * 0.12);
        let offset = rng.gen_range(-45.0..45.0);
        let (sin_a, cos_a) = angle.sin_cos();
        let r0 = ((cy - half_len - half_wid).floor().max(0.0)) as usize;
        let r1 = ((cy + half_len + half_wid).ceil().min(size as f64 - 1.0)) as usize;
        for r in r0..=r1 {
            for c in 0..size {
                let dx = c as f64 - cx;
                let dy = r as f64 - cy;
                let u = dx * cos_a + dy * sin_a;
                let v = -dx * sin_a + dy * cos_a;
                if u.abs() <= half_len && v.abs() <= half_wid {
                    let cur = plane.at(r, c);
                    plane.set(r, c, cur + offset);
                }
            }
        }
    }

    for v in plane.data.iter_mut() {
        *v = v.round().clamp(0.0, 255.0);
    }
    plane
}

/// Full corpus member: color for the first eight names, grayscale for the
/// rest. Deterministic in (name, size, seed).
pub fn synth_image(name: &str, size: usize, seed: u64) -> Image {
    let is_color = CORPUS_NAMES
        .iter()
        .position(|&n| n == name)
        .map(|i| i < COLOR_COUNT)
        .unwrap_or(false);
    let y = synth_plane(name, size, seed);
    if !is_color {
        return Image::from_plane(&y);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(name_seed(name, seed ^ 0x00c0_10e5));
    let co_field = smooth_field(size, &mut rng, 3, 2.0);
    let cg_field = smooth_field(size, &mut rng, 3, 2.0);
    let co = Plane {
        rows: size,
        cols: size,
        data: co_field.data.iter().map(|v| (v * 28.0).round()).collect(),
    };
    let cg = Plane {
        rows: size,
        cols: size,
        data: cg_field.data.iter().map(|v| (v * 22.0).round()).collect(),
    };
    from_ycocg(&ColorPlanes { y, co, cg }).expect("planes share one shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::partition;
    use crate::texture::block_entropy;

    #[test]
    fn corpus_is_deterministic_and_mixed() {
        let a = synth_image("lena", 128, 1);
        let b = synth_image("lena", 128, 1);
        assert_eq!(a, b);
        assert_eq!(a.channels(), 3, "lena is in the color half");
        assert_eq!(synth_image("camera", 128, 1).channels(), 1);
        assert_ne!(
            synth_image("boat", 128, 1).data(),
            synth_image("zelda", 128, 1).data()
        );
    }

    #[test]
    fn blocks_span_flat_and_rough_entropy() {
        let plane = synth_plane("goldhill", 256, 3);
        let grid = partition(256, 256, 8).unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for bi in 0..grid.block_rows {
            for bj in 0..grid.block_cols {
                let (r0, c0) = grid.origin(bi, bj);
                let h = block_entropy(&plane, r0, c0, 8);
                lo = lo.min(h);
                hi = hi.max(h);
            }
        }
        assert!(lo < 3.0, "expected some flat blocks, min entropy {lo}");
        assert!(hi > 5.0, "expected some rough blocks, max entropy {hi}");
    }
}
