//! Backprojection array from PSF by index rearrangement.
//!
//! Every element of `H'` is a copy of exactly one element of `H` (or zero);
//! no arithmetic touches the values. The mapping is separable: the `(s, x)`
//! and `(t, y)` axes are handled independently by an [`AxisMap`], and depth
//! planes never interact.
//!
//! For a pixel index `s` and loop variable `m`:
//!
//! ```text
//! alpha = m - floor((n_s - n_x) / 2)
//! x     = alpha wrapped into 1..=n_x
//! x'    = s - n_x + alpha + floor((n_x - 1) / 2) - floor((n_s - n_x) / 2)
//! s'    = n_s - s + (n_s mod 2)
//! H'(s', t', x', y', z) = H(s, t, x, y, z)   when 0 < x' <= n_x and 0 < s'
//! ```
//!
//! With `m` restricted to `1..=n_s` ([`SourceWindow::Pattern`]) the pixels at
//! the pattern edges only collect the voxels of one extended cell, leaving part
//! of their slice zero. [`SourceWindow::Full`] extends `m` by one elementary
//! cell on each side, so every `x'` is reached for every `s`; for odd pixel
//! dims the map is then a bijection, equals the exact adjoint of the
//! shift-variant forward model, and is its own inverse.

use rayon::prelude::*;

use crate::array::{BackprojArray, Dims5, PsfArray};
use crate::error::{Error, Result};

/// `alpha = m - floor((n_pix - n_cell) / 2)`.
pub fn aux_alpha(m: i64, n_pix: usize, n_cell: usize) -> i64 {
    m - (n_pix as i64 - n_cell as i64).div_euclid(2)
}

/// Wraps an auxiliary index into `1..=n_cell` (1-based circular indexing).
pub fn wrap_phase(alpha: i64, n_cell: usize) -> usize {
    let n = n_cell as i64;
    let x = if alpha > n {
        alpha - (alpha - 1) / n * n
    } else if alpha <= 0 {
        // ceil((1 - alpha) / n) with 1 - alpha >= 1
        alpha + (1 - alpha + n - 1) / n * n
    } else {
        alpha
    };
    x as usize
}

/// Target spatial index `x'` for source pixel `s`. Only `0 < x' <= n_cell`
/// produces an assignment.
pub fn target_spatial(s: usize, alpha: i64, n_pix: usize, n_cell: usize) -> i64 {
    let half_cell = (n_cell as i64 - 1).div_euclid(2);
    let margin = (n_pix as i64 - n_cell as i64).div_euclid(2);
    s as i64 - n_cell as i64 + alpha + half_cell - margin
}

/// Target pixel index `s' = n_pix - s + (n_pix mod 2)`. Only `s' > 0`
/// produces an assignment, so even `n_pix` drops `s = n_pix`.
pub fn target_pixel(s: usize, n_pix: usize) -> i64 {
    n_pix as i64 - s as i64 + (n_pix % 2) as i64
}

/// Range of the loop variable `m`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SourceWindow {
    /// `m` spans the pattern plus one elementary cell on either side; every
    /// `(s', x')` with a valid `s'` is assigned.
    #[default]
    Full,
    /// `m = 1..=n_pix`, the window of a single extended cell. Edge slices
    /// stay partly zero.
    Pattern,
}

impl SourceWindow {
    fn range(self, n_pix: usize, n_cell: usize) -> std::ops::RangeInclusive<i64> {
        match self {
            SourceWindow::Full => (1 - n_cell as i64)..=(n_pix + n_cell) as i64,
            SourceWindow::Pattern => 1..=n_pix as i64,
        }
    }
}

/// Precomputed index relations for one lateral axis.
#[derive(Clone, Debug)]
pub struct AxisMap {
    n_pix: usize,
    n_cell: usize,
    // s -> s', 0 when dropped
    target: Vec<usize>,
    // (s, x') -> x, 0 when unassigned; row-major in s
    phase: Vec<usize>,
}

impl AxisMap {
    pub fn new(n_pix: usize, n_cell: usize, window: SourceWindow) -> Self {
        let mut target = vec![0; n_pix];
        let mut phase = vec![0; n_pix * n_cell];
        for s in 1..=n_pix {
            let sp = target_pixel(s, n_pix);
            if sp > 0 {
                target[s - 1] = sp as usize;
            }
            for m in window.range(n_pix, n_cell) {
                let alpha = aux_alpha(m, n_pix, n_cell);
                let x = wrap_phase(alpha, n_cell);
                let xp = target_spatial(s, alpha, n_pix, n_cell);
                if xp > 0 && xp <= n_cell as i64 {
                    let slot = &mut phase[(s - 1) * n_cell + xp as usize - 1];
                    debug_assert!(*slot == 0 || *slot == x);
                    *slot = x;
                }
            }
        }
        AxisMap { n_pix, n_cell, target, phase }
    }

    pub fn n_pix(&self) -> usize {
        self.n_pix
    }

    pub fn n_cell(&self) -> usize {
        self.n_cell
    }

    /// `s'` for source pixel `s`, if it is kept.
    pub fn target_pixel(&self, s: usize) -> Option<usize> {
        Some(self.target[s - 1]).filter(|&v| v > 0)
    }

    /// Source phase `x` copied into `(s', x')` from pixel `s`.
    pub fn source_phase(&self, s: usize, xp: usize) -> Option<usize> {
        Some(self.phase[(s - 1) * self.n_cell + xp - 1]).filter(|&v| v > 0)
    }

    /// Number of `(s, x)` pairs that end up in the output.
    pub fn assigned(&self) -> usize {
        (1..=self.n_pix)
            .filter(|&s| self.target_pixel(s).is_some())
            .map(|s| (1..=self.n_cell).filter(|&xp| self.source_phase(s, xp).is_some()).count())
            .sum()
    }
}

/// Bookkeeping from a forward transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransformStats {
    /// Elements of `H'` written per depth plane.
    pub assigned_per_plane: usize,
    /// Elements of `H` never read per depth plane (nonzero only for even
    /// pixel dims or the pattern window).
    pub dropped_per_plane: usize,
}

#[derive(Clone, Copy)]
enum Direction {
    /// `H'(s', t', x', y') = H(s, t, x, y)`
    Forward,
    /// `H(s, t, x, y) = H'(s', t', x', y')`
    Inverse,
}

/// Computes `H'` from `H` with the full source window.
pub fn compute_backprojection(h: &PsfArray) -> BackprojArray {
    compute_backprojection_with(h, SourceWindow::Full).0
}

pub fn compute_backprojection_with(h: &PsfArray, window: SourceWindow) -> (BackprojArray, TransformStats) {
    let mut out = BackprojArray::zeros(h.dims());
    let stats = transform_into(h, &mut out, window);
    (out, stats)
}

/// Like [`compute_backprojection`], writing into an existing array of the
/// same dims.
pub fn compute_backprojection_into(h: &PsfArray, out: &mut BackprojArray) -> Result<TransformStats> {
    if h.dims() != out.dims() {
        return Err(Error::DimMismatch(format!("H {} vs output {}", h.dims(), out.dims())));
    }
    Ok(transform_into(h, out, SourceWindow::Full))
}

fn transform_into(h: &PsfArray, out: &mut BackprojArray, window: SourceWindow) -> TransformStats {
    let dims = h.dims();
    let xmap = AxisMap::new(dims.n_s(), dims.n_x(), window);
    let ymap = AxisMap::new(dims.n_t(), dims.n_y(), window);
    let assigned = xmap.assigned() * ymap.assigned();
    let dst = out.data_mut();
    if assigned < dims.plane_len() {
        dst.fill(0.0);
    }
    rearrange(dims, h.data(), dst, &xmap, &ymap, Direction::Forward);
    TransformStats { assigned_per_plane: assigned, dropped_per_plane: dims.plane_len() - assigned }
}

/// Recovers `H` from `H'` by running the same index relation with source and
/// target exchanged. Even pixel dims are refused: the forward map drops one
/// pixel row/column there and the original cannot be restored.
pub fn compute_psf_from_backprojection(ht: &BackprojArray) -> Result<PsfArray> {
    let dims = ht.dims();
    if !dims.has_odd_pixel_dims() {
        return Err(Error::EvenPixelDims { n_s: dims.n_s(), n_t: dims.n_t() });
    }
    let xmap = AxisMap::new(dims.n_s(), dims.n_x(), SourceWindow::Full);
    let ymap = AxisMap::new(dims.n_t(), dims.n_y(), SourceWindow::Full);
    let mut out = vec![0.0; dims.len()];
    rearrange(dims, ht.data(), &mut out, &xmap, &ymap, Direction::Inverse);
    Ok(PsfArray::from_vec_unchecked(dims, out))
}

fn rearrange(dims: Dims5, src: &[f64], dst: &mut [f64], xmap: &AxisMap, ymap: &AxisMap, dir: Direction) {
    let plane_len = dims.plane_len();
    dst.par_chunks_mut(plane_len)
        .zip(src.par_chunks(plane_len))
        .for_each(|(dst, src)| rearrange_plane(dims, src, dst, xmap, ymap, dir));
}

fn rearrange_plane(dims: Dims5, src: &[f64], dst: &mut [f64], xmap: &AxisMap, ymap: &AxisMap, dir: Direction) {
    let (n_s, n_t, n_x, n_y) = (dims.n_s(), dims.n_t(), dims.n_x(), dims.n_y());
    let pattern = n_s * n_t;
    // per x': (offset of (s, x) from the start of pattern row block, s' - 1)
    let rows: Vec<Vec<(u32, u32)>> = (1..=n_x)
        .map(|xp| {
            (1..=n_s)
                .filter_map(|s| {
                    let sp = xmap.target_pixel(s)?;
                    let x = xmap.source_phase(s, xp)?;
                    Some(((s - 1 + pattern * (x - 1)) as u32, (sp - 1) as u32))
                })
                .collect()
        })
        .collect();
    // one t-row across all x phases
    let span = pattern * (n_x - 1) + n_s;
    // (t, y) -> y', 0 when unassigned
    let mut yp_of = vec![0usize; n_t * n_y];
    for t in 1..=n_t {
        for yp in 1..=n_y {
            if let Some(y) = ymap.source_phase(t, yp) {
                yp_of[(t - 1) * n_y + y - 1] = yp;
            }
        }
    }
    for y in 1..=n_y {
        for t in 1..=n_t {
            let yp = yp_of[(t - 1) * n_y + y - 1];
            let Some(tp) = ymap.target_pixel(t).filter(|_| yp > 0) else {
                continue;
            };
            let orig_base = n_s * (t - 1) + pattern * n_x * (y - 1);
            for (xp, row) in rows.iter().enumerate() {
                let prime_base = n_s * ((tp - 1) + n_t * (xp + n_x * (yp - 1)));
                match dir {
                    Direction::Forward => {
                        let from = &src[orig_base..orig_base + span];
                        let out = &mut dst[prime_base..prime_base + n_s];
                        for &(o, sp0) in row {
                            out[sp0 as usize] = from[o as usize];
                        }
                    }
                    Direction::Inverse => {
                        let from = &src[prime_base..prime_base + n_s];
                        let out = &mut dst[orig_base..orig_base + span];
                        for &(o, sp0) in row {
                            out[o as usize] = from[sp0 as usize];
                        }
                    }
                }
            }
        }
    }
}
