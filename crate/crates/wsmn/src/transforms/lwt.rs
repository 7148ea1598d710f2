//! One-level 2-D Haar lifting wavelet transform.
//!
//! Lifting convention per pair (even a, odd b): detail d = b - a,
//! approximate l = a + d/2, so the LL of a constant plane is that constant
//! and the inverse undoes the forward exactly on integer-valued input.

use crate::error::{Error, Result};
use crate::image::Plane;

/// Quarter-size sub-bands of one lifting level.
#[derive(Debug, Clone)]
pub struct WaveletQuad {
    pub ll: Plane,
    pub lh: Plane,
    pub hl: Plane,
    pub hh: Plane,
}

fn check_even(plane_rows: usize, plane_cols: usize) -> Result<()> {
    if plane_rows % 2 != 0 || plane_cols % 2 != 0 {
        return Err(Error::BadDimensions(format!(
            "lifting needs even dimensions, got {plane_rows}x{plane_cols}"
        )));
    }
    Ok(())
}

pub fn lwt_forward(plane: &Plane) -> Result<WaveletQuad> {
    check_even(plane.rows, plane.cols)?;
    let (hr, hc) = (plane.rows / 2, plane.cols / 2);
    // columns pass: split each row into low/high halves
    let mut low = Plane::zeros(plane.rows, hc);
    let mut high = Plane::zeros(plane.rows, hc);
    for r in 0..plane.rows {
        for j in 0..hc {
            let a = plane.at(r, 2 * j);
            let b = plane.at(r, 2 * j + 1);
            let d = b - a;
            high.set(r, j, d);
            low.set(r, j, a + d / 2.0);
        }
    }
    // rows pass on both halves
    let mut quad = WaveletQuad {
        ll: Plane::zeros(hr, hc),
        lh: Plane::zeros(hr, hc),
        hl: Plane::zeros(hr, hc),
        hh: Plane::zeros(hr, hc),
    };
    for j in 0..hc {
        for i in 0..hr {
            let a = low.at(2 * i, j);
            let b = low.at(2 * i + 1, j);
            let d = b - a;
            quad.hl.set(i, j, d);
            quad.ll.set(i, j, a + d / 2.0);

            let a = high.at(2 * i, j);
            let b = high.at(2 * i + 1, j);
            let d = b - a;
            quad.hh.set(i, j, d);
            quad.lh.set(i, j, a + d / 2.0);
        }
    }
    Ok(quad)
}

pub fn lwt_inverse(quad: &WaveletQuad) -> Result<Plane> {
    let (hr, hc) = (quad.ll.rows, quad.ll.cols);
    for band in [&quad.lh, &quad.hl, &quad.hh] {
        if !band.same_shape(&quad.ll) {
            return Err(Error::ShapeMismatch("wavelet quad bands differ".into()));
        }
    }
    let (rows, cols) = (hr * 2, hc * 2);
    let mut low = Plane::zeros(rows, hc);
    let mut high = Plane::zeros(rows, hc);
    for j in 0..hc {
        for i in 0..hr {
            let d = quad.hl.at(i, j);
            let a = quad.ll.at(i, j) - d / 2.0;
            low.set(2 * i, j, a);
            low.set(2 * i + 1, j, a + d);

            let d = quad.hh.at(i, j);
            let a = quad.lh.at(i, j) - d / 2.0;
            high.set(2 * i, j, a);
            high.set(2 * i + 1, j, a + d);
        }
    }
    let mut plane = Plane::zeros(rows, cols);
    for r in 0..rows {
        for j in 0..hc {
            let d = high.at(r, j);
            let a = low.at(r, j) - d / 2.0;
            plane.set(r, 2 * j, a);
            plane.set(r, 2 * j + 1, a + d);
        }
    }
    Ok(plane)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_plane_keeps_mean_in_ll() {
        let quad = lwt_forward(&Plane::from_fn(8, 8, |_, _| 42.5)).unwrap();
        assert!(quad.ll.data.iter().all(|&v| (v - 42.5).abs() < 1e-12));
        for band in [&quad.lh, &quad.hl, &quad.hh] {
            assert!(band.data.iter().all(|&v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn integer_round_trip_is_exact() {
        let mut rng = StdRng::seed_from_u64(11);
        let plane = Plane::from_fn(32, 24, |_, _| rng.gen_range(0..256) as f64);
        let back = lwt_inverse(&lwt_forward(&plane).unwrap()).unwrap();
        assert_eq!(plane.data, back.data);
    }

    #[test]
    fn float_round_trip_within_tolerance() {
        let mut rng = StdRng::seed_from_u64(12);
        let plane = Plane::from_fn(64, 64, |_, _| rng.gen_range(-1000.0..1000.0));
        let back = lwt_inverse(&lwt_forward(&plane).unwrap()).unwrap();
        assert!(plane.max_abs_diff(&back) < 1e-9);
    }

    #[test]
    fn quad_shapes_halve() {
        let quad = lwt_forward(&Plane::zeros(512, 512)).unwrap();
        for band in [&quad.ll, &quad.lh, &quad.hl, &quad.hh] {
            assert_eq!((band.rows, band.cols), (256, 256));
        }
        assert!(lwt_forward(&Plane::zeros(9, 8)).is_err());
    }
}
