//! Orthonormal block DCT-II and the JPEG zigzag ordering.

use crate::error::{Error, Result};
use crate::image::Plane;

/// Orthonormal DCT-II basis for one block side, cached as a dense matrix.
pub struct DctBasis {
    side: usize,
    // basis[u * side + x] = alpha(u) * cos(pi (2x+1) u / (2 side))
    basis: Vec<f64>,
}

impl DctBasis {
    pub fn new(side: usize) -> Self {
        let mut basis = vec![0.0; side * side];
        let n = side as f64;
        for u in 0..side {
            let alpha = if u == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            };
            for x in 0..side {
                basis[u * side + x] =
                    alpha * ((std::f64::consts::PI * (2 * x + 1) as f64 * u as f64) / (2.0 * n)).cos();
            }
        }
        Self { side, basis }
    }

    fn apply_block(&self, src: &Plane, dst: &mut Plane, r0: usize, c0: usize, inverse: bool) {
        let n = self.side;
        let mut tmp = vec![0.0; n * n];
        // rows: tmp = block * B^T (forward) or block * B (inverse)
        for r in 0..n {
            for u in 0..n {
                let mut s = 0.0;
                for x in 0..n {
                    let b = if inverse {
                        self.basis[x * n + u]
                    } else {
                        self.basis[u * n + x]
                    };
                    s += src.at(r0 + r, c0 + x) * b;
                }
                tmp[r * n + u] = s;
            }
        }
        // columns
        for u in 0..n {
            for v in 0..n {
                let mut s = 0.0;
                for x in 0..n {
                    let b = if inverse {
                        self.basis[x * n + u]
                    } else {
                        self.basis[u * n + x]
                    };
                    s += tmp[x * n + v] * b;
                }
                dst.set(r0 + u, c0 + v, s);
            }
        }
    }
}

fn blocked(plane: &Plane, side: usize) -> Result<()> {
    if side == 0 || plane.rows % side != 0 || plane.cols % side != 0 {
        return Err(Error::BadDimensions(format!(
            "block side {side} does not divide {}x{}",
            plane.rows, plane.cols
        )));
    }
    Ok(())
}

/// Forward orthonormal 2-D DCT-II applied independently per side-by-side
/// block; the DC lands at block-local index (0, 0).
pub fn dct_block(plane: &Plane, side: usize) -> Result<Plane> {
    blocked(plane, side)?;
    let basis = DctBasis::new(side);
    let mut out = Plane::zeros(plane.rows, plane.cols);
    for r0 in (0..plane.rows).step_by(side) {
        for c0 in (0..plane.cols).step_by(side) {
            basis.apply_block(plane, &mut out, r0, c0, false);
        }
    }
    Ok(out)
}

pub fn idct_block(plane: &Plane, side: usize) -> Result<Plane> {
    blocked(plane, side)?;
    let basis = DctBasis::new(side);
    let mut out = Plane::zeros(plane.rows, plane.cols);
    for r0 in (0..plane.rows).step_by(side) {
        for c0 in (0..plane.cols).step_by(side) {
            basis.apply_block(plane, &mut out, r0, c0, true);
        }
    }
    Ok(out)
}

/// (row, col) of the k-th entry of the standard JPEG zigzag walk over a
/// side-by-side block; k = 0 is DC, k = 2 is the second AC coefficient.
pub fn zigzag_index(side: usize, k: usize) -> Result<(usize, usize)> {
    if k >= side * side {
        return Err(Error::InvalidParameter(format!(
            "zigzag index {k} out of range for side {side}"
        )));
    }
    let (mut r, mut c) = (0usize, 0usize);
    let mut up = true;
    for _ in 0..k {
        if up {
            if c + 1 == side {
                r += 1;
                up = false;
            } else if r == 0 {
                c += 1;
                up = false;
            } else {
                r -= 1;
                c += 1;
            }
        } else if r + 1 == side {
            c += 1;
            up = true;
        } else if c == 0 {
            r += 1;
            up = true;
        } else {
            r += 1;
            c -= 1;
        }
    }
    Ok((r, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_block_concentrates_in_dc() {
        let out = dct_block(&Plane::from_fn(4, 4, |_, _| 3.0), 4).unwrap();
        assert!((out.at(0, 0) - 12.0).abs() < 1e-12, "DC = 4v for side 4");
        for r in 0..4 {
            for c in 0..4 {
                if (r, c) != (0, 0) {
                    assert!(out.at(r, c).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn parseval_per_block() {
        let mut rng = StdRng::seed_from_u64(5);
        let plane = Plane::from_fn(16, 16, |_, _| rng.gen_range(-200.0..200.0));
        let coeffs = dct_block(&plane, 4).unwrap();
        for r0 in (0..16).step_by(4) {
            for c0 in (0..16).step_by(4) {
                let mut pix = 0.0;
                let mut spec = 0.0;
                for r in 0..4 {
                    for c in 0..4 {
                        pix += plane.at(r0 + r, c0 + c).powi(2);
                        spec += coeffs.at(r0 + r, c0 + c).powi(2);
                    }
                }
                assert!((pix - spec).abs() < 1e-9, "{pix} vs {spec}");
            }
        }
    }

    #[test]
    fn round_trip() {
        let mut rng = StdRng::seed_from_u64(6);
        let plane = Plane::from_fn(32, 24, |_, _| rng.gen_range(-100.0..100.0));
        let back = idct_block(&dct_block(&plane, 4).unwrap(), 4).unwrap();
        assert!(plane.max_abs_diff(&back) < 1e-9);
        assert!(dct_block(&Plane::zeros(10, 8), 4).is_err());
    }

    #[test]
    fn zigzag_prefix_matches_jpeg_order() {
        let expect = [
            (0, 0),
            (0, 1),
            (1, 0),
            (2, 0),
            (1, 1),
            (0, 2),
            (0, 3),
            (1, 2),
            (2, 1),
            (3, 0),
            (3, 1),
            (2, 2),
            (1, 3),
            (2, 3),
            (3, 2),
            (3, 3),
        ];
        for (k, want) in expect.iter().enumerate() {
            assert_eq!(zigzag_index(4, k).unwrap(), *want, "k={k}");
        }
        assert!(zigzag_index(4, 16).is_err());
        // every cell visited exactly once
        let mut seen = std::collections::HashSet::new();
        for k in 0..64 {
            assert!(seen.insert(zigzag_index(8, k).unwrap()));
        }
    }
}
