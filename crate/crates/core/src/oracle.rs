//! Brute-force backprojection array by simulated forward projection.
//!
//! A unit-intensity voxel grid is projected pattern by pattern; for a set of
//! reference pixels covering every pixel phase once, each voxel's contribution
//! is stored at its offset from the pixel. This is deliberately slow and shares
//! no code with [`crate::transform`].

use rayon::prelude::*;

use crate::array::{BackprojArray, Dims5, PsfArray};
use crate::error::{Error, Result};

/// Pattern index of the voxel itself: a voxel at `X` lands on pixel `X` via
/// pattern element `c`. `ceil(n / 2)` for both parities.
pub fn centering(n_pix: usize) -> usize {
    n_pix.div_ceil(2)
}

/// Lateral phase of an absolute 1-based coordinate; coordinate 1 has phase 1.
pub fn phase(coord: i64, n_cell: usize) -> usize {
    (coord - 1).rem_euclid(n_cell as i64) as usize + 1
}

/// Smallest accepted grid padding along an axis.
pub fn min_padding(n_pix: usize, n_cell: usize) -> usize {
    n_pix.div_ceil(2) + n_cell
}

pub fn oracle_backprojection(h: &PsfArray) -> BackprojArray {
    let d = h.dims();
    oracle_backprojection_padded(h, min_padding(d.n_s(), d.n_x()), min_padding(d.n_t(), d.n_y()))
        .expect("minimum padding is always accepted")
}

/// Same as [`oracle_backprojection`] with explicit grid padding. The result
/// does not depend on the padding once it is at least [`min_padding`].
pub fn oracle_backprojection_padded(h: &PsfArray, pad_s: usize, pad_t: usize) -> Result<BackprojArray> {
    let d = h.dims();
    if pad_s < min_padding(d.n_s(), d.n_x()) || pad_t < min_padding(d.n_t(), d.n_y()) {
        return Err(Error::InvalidArgument(format!(
            "padding ({pad_s}, {pad_t}) below minimum ({}, {})",
            min_padding(d.n_s(), d.n_x()),
            min_padding(d.n_t(), d.n_y())
        )));
    }
    let mut out = BackprojArray::zeros(d);
    fill_planes(h, out.data_mut(), pad_s, pad_t);
    Ok(out)
}

/// Like [`oracle_backprojection`], writing into an existing array of the
/// same dims.
pub fn oracle_backprojection_into(h: &PsfArray, out: &mut BackprojArray) -> Result<()> {
    let d = h.dims();
    if d != out.dims() {
        return Err(Error::DimMismatch(format!("H {d} vs output {}", out.dims())));
    }
    let dst = out.data_mut();
    dst.fill(0.0);
    fill_planes(h, dst, min_padding(d.n_s(), d.n_x()), min_padding(d.n_t(), d.n_y()));
    Ok(())
}

fn fill_planes(h: &PsfArray, out: &mut [f64], pad_s: usize, pad_t: usize) {
    let d = h.dims();
    out.par_chunks_mut(d.plane_len()).enumerate().for_each(|(zi, dst)| {
        let src = h.plane(zi + 1).expect("plane index in range");
        oracle_plane(d, src, dst, pad_s, pad_t);
    });
}

fn oracle_plane(d: Dims5, src: &[f64], dst: &mut [f64], pad_s: usize, pad_t: usize) {
    let (n_s, n_t, n_x, n_y) = (d.n_s() as i64, d.n_t() as i64, d.n_x() as i64, d.n_y() as i64);
    let (c_s, c_t) = (centering(d.n_s()) as i64, centering(d.n_t()) as i64);
    let grid_x = 2 * pad_s as i64 + n_x;
    let grid_y = 2 * pad_t as i64 + n_y;
    let h_at = |s: i64, t: i64, x: i64, y: i64| {
        src[((s - 1) + n_s * ((t - 1) + n_t * ((x - 1) + n_x * (y - 1)))) as usize]
    };

    // reference pixels: n_x by n_y consecutive pixels in the middle of the grid
    for k in 1..=n_x {
        for l in 1..=n_y {
            let (px, py) = (pad_s as i64 + k, pad_t as i64 + l);
            let xp = phase(px, d.n_x()) as i64;
            let yp = phase(py, d.n_y()) as i64;
            for vy in 1..=grid_y {
                for vx in 1..=grid_x {
                    // pattern element of voxel (vx, vy) that lands on (px, py)
                    let s = px - vx + c_s;
                    let t = py - vy + c_t;
                    if s < 1 || s > n_s || t < 1 || t > n_t {
                        continue;
                    }
                    let value = h_at(s, t, phase(vx, d.n_x()) as i64, phase(vy, d.n_y()) as i64);
                    // voxel offset from the pixel, recentred
                    let sp = vx - px + c_s;
                    let tp = vy - py + c_t;
                    if sp < 1 || sp > n_s || tp < 1 || tp > n_t {
                        continue;
                    }
                    let o = (sp - 1) + n_s * ((tp - 1) + n_t * ((xp - 1) + n_x * (yp - 1)));
                    dst[o as usize] += value;
                }
            }
        }
    }
}
