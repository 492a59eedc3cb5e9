//! Shift-variant forward projection, backprojection and Richardson-Lucy.
//!
//! A voxel at lateral position `(X, Y)` with phase `(phi_x(X), phi_y(Y))`
//! stamps its pattern `H(., ., phi_x, phi_y, Z)` so that pattern element
//! `(c_s, c_t)` lands on pixel `(X, Y)`. Image and volume share lateral
//! dims. Pattern parts falling outside the image are discarded.

use rayon::prelude::*;

use crate::array::{BackprojArray, Dims5, Image, PsfArray, Volume};
use crate::error::{Error, Result};
use crate::oracle::{centering, phase};

/// Inclusive 1-based range `[lo, hi]` clipped to `1..=n`, as an iterator.
fn clipped(lo: i64, hi: i64, n: usize) -> std::ops::RangeInclusive<usize> {
    let lo = lo.max(1);
    let hi = hi.min(n as i64);
    if lo > hi {
        #[allow(clippy::reversed_empty_ranges)]
        return 1..=0;
    }
    lo as usize..=hi as usize
}

struct Geometry {
    d: Dims5,
    c_s: i64,
    c_t: i64,
}

impl Geometry {
    fn new(d: Dims5) -> Self {
        Geometry { d, c_s: centering(d.n_s()) as i64, c_t: centering(d.n_t()) as i64 }
    }

    #[inline]
    fn at(&self, data: &[f64], s: usize, t: usize, x: usize, y: usize, z: usize) -> f64 {
        data[self.d.offset(s, t, x, y, z)]
    }
}

/// `f(S, T) = sum g(X, Y, Z) H(S-X+c_s, T-Y+c_t, phi_x(X), phi_y(Y), Z)`.
pub fn forward_project(h: &PsfArray, g: &Volume) -> Result<Image> {
    let d = h.dims();
    let [n_vx, n_vy, n_vz] = g.shape();
    if n_vz != d.n_z() {
        return Err(Error::DimMismatch(format!("volume has {n_vz} planes, PSF has {}", d.n_z())));
    }
    let geo = Geometry::new(d);
    let (n_img_s, n_img_t) = (n_vx, n_vy);
    let mut out = vec![0.0; n_img_s * n_img_t];
    if n_img_s == 0 {
        return Image::from_vec(n_img_s, n_img_t, out);
    }
    out.par_chunks_mut(n_img_s).enumerate().for_each(|(ti, col)| {
        let big_t = ti as i64 + 1;
        for (si, px) in col.iter_mut().enumerate() {
            let big_s = si as i64 + 1;
            let mut acc = 0.0;
            for z in 1..=d.n_z() {
                for vy in clipped(big_t + geo.c_t - d.n_t() as i64, big_t + geo.c_t - 1, n_vy) {
                    let t = (big_t - vy as i64 + geo.c_t) as usize;
                    let py = phase(vy as i64, d.n_y());
                    for vx in clipped(big_s + geo.c_s - d.n_s() as i64, big_s + geo.c_s - 1, n_vx) {
                        let gv = g.get(vx, vy, z);
                        if gv == 0.0 {
                            continue;
                        }
                        let s = (big_s - vx as i64 + geo.c_s) as usize;
                        acc += gv * geo.at(h.data(), s, t, phase(vx as i64, d.n_x()), py, z);
                    }
                }
            }
            *px = acc;
        }
    });
    Image::from_vec(n_img_s, n_img_t, out)
}

/// Exact adjoint of [`forward_project`]:
/// `g(X, Y, Z) = sum f(S, T) H(S-X+c_s, T-Y+c_t, phi_x(X), phi_y(Y), Z)`.
pub fn backproject_adjoint(h: &PsfArray, f: &Image) -> Result<Volume> {
    let d = h.dims();
    let geo = Geometry::new(d);
    let [n_is, n_it] = f.shape();
    let mut out = vec![0.0; n_is * n_it * d.n_z()];
    if n_is == 0 {
        return Volume::from_vec(n_is, n_it, d.n_z(), out);
    }
    out.par_chunks_mut(n_is).enumerate().for_each(|(row, line)| {
        let vy = row % n_it + 1;
        let z = row / n_it + 1;
        let py = phase(vy as i64, d.n_y());
        for (xi, gv) in line.iter_mut().enumerate() {
            let vx = xi + 1;
            let px = phase(vx as i64, d.n_x());
            let mut acc = 0.0;
            for big_t in clipped(vy as i64 - geo.c_t + 1, vy as i64 - geo.c_t + d.n_t() as i64, n_it) {
                let t = (big_t as i64 - vy as i64 + geo.c_t) as usize;
                for big_s in clipped(vx as i64 - geo.c_s + 1, vx as i64 - geo.c_s + d.n_s() as i64, n_is) {
                    let fv = f.get(big_s, big_t);
                    if fv == 0.0 {
                        continue;
                    }
                    let s = (big_s as i64 - vx as i64 + geo.c_s) as usize;
                    acc += fv * geo.at(h.data(), s, t, px, py, z);
                }
            }
            *gv = acc;
        }
    });
    Volume::from_vec(n_is, n_it, d.n_z(), out)
}

/// Backprojection through `H'`:
/// `g(X, Y, Z) = sum f(S, T) H'(X-S+c_s, Y-T+c_t, phi_x(S), phi_y(T), Z)`.
///
/// Matches [`backproject_adjoint`] for odd pattern dims. With even `n_s` or
/// `n_t` the transform drops one pattern row/column and this path misses
/// the corresponding contributions.
pub fn backproject_via_ht(ht: &BackprojArray, f: &Image) -> Result<Volume> {
    let d = ht.dims();
    let geo = Geometry::new(d);
    let [n_is, n_it] = f.shape();
    let mut out = vec![0.0; n_is * n_it * d.n_z()];
    if n_is == 0 {
        return Volume::from_vec(n_is, n_it, d.n_z(), out);
    }
    out.par_chunks_mut(n_is).enumerate().for_each(|(row, line)| {
        let vy = (row % n_it + 1) as i64;
        let z = row / n_it + 1;
        for (xi, gv) in line.iter_mut().enumerate() {
            let vx = xi as i64 + 1;
            let mut acc = 0.0;
            for big_t in clipped(vy + geo.c_t - d.n_t() as i64, vy + geo.c_t - 1, n_it) {
                let tp = (vy - big_t as i64 + geo.c_t) as usize;
                let yp = phase(big_t as i64, d.n_y());
                for big_s in clipped(vx + geo.c_s - d.n_s() as i64, vx + geo.c_s - 1, n_is) {
                    let fv = f.get(big_s, big_t);
                    if fv == 0.0 {
                        continue;
                    }
                    let sp = (vx - big_s as i64 + geo.c_s) as usize;
                    acc += fv * geo.at(ht.data(), sp, tp, phase(big_s as i64, d.n_x()), yp, z);
                }
            }
            *gv = acc;
        }
    });
    Volume::from_vec(n_is, n_it, d.n_z(), out)
}

/// `H' 1`: backprojection of an all-ones image of the given `(N_S, N_T)`.
pub fn normalizer(ht: &BackprojArray, image_dims: [usize; 2]) -> Result<Volume> {
    backproject_via_ht(ht, &Image::filled(image_dims[0], image_dims[1], 1.0))
}

#[derive(Clone, Debug)]
pub struct RlOptions {
    pub iters: usize,
    /// Divisors below `eps * max(divisor)` give a zero quotient.
    pub eps: f64,
    /// Starting estimate; all ones when `None`.
    pub initial: Option<Volume>,
}

impl Default for RlOptions {
    fn default() -> Self {
        RlOptions { iters: 20, eps: 1e-12, initial: None }
    }
}

#[derive(Clone, Debug)]
pub struct RlState {
    /// Current estimate `g^(k)`.
    pub estimate: Volume,
    /// Completed iterations `k`.
    pub iteration: usize,
    pub normalizer: Volume,
    /// Voxels whose normalizer fell below the division threshold; these
    /// stay at zero.
    pub zero_normalizer: usize,
    /// Reprojection MSE of `g^(0) ..= g^(k)`.
    pub history: Vec<f64>,
}

/// Richardson-Lucy iteration driver holding the operators and data.
pub struct Deconvolution<'a> {
    h: &'a PsfArray,
    ht: &'a BackprojArray,
    f: &'a Image,
    eps: f64,
    state: RlState,
    // forward projection of the current estimate
    reprojection: Image,
}

impl<'a> Deconvolution<'a> {
    pub fn new(h: &'a PsfArray, ht: &'a BackprojArray, f: &'a Image, opts: &RlOptions) -> Result<Self> {
        if h.dims() != ht.dims() {
            return Err(Error::DimMismatch(format!("H {} vs H' {}", h.dims(), ht.dims())));
        }
        if !(opts.eps > 0.0 && opts.eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("eps must be positive, got {}", opts.eps)));
        }
        check_nonnegative(f.data(), "image")?;
        let [n_s, n_t] = f.shape();
        let estimate = match &opts.initial {
            Some(g) => {
                if g.shape() != [n_s, n_t, h.dims().n_z()] {
                    return Err(Error::DimMismatch(format!(
                        "initial estimate {:?} vs expected {:?}",
                        g.shape(),
                        [n_s, n_t, h.dims().n_z()]
                    )));
                }
                check_nonnegative(g.data(), "initial estimate")?;
                g.clone()
            }
            None => Volume::filled(n_s, n_t, h.dims().n_z(), 1.0),
        };
        let norm = normalizer(ht, [n_s, n_t])?;
        let threshold = opts.eps * max_of(norm.data());
        let zero_normalizer = norm.data().iter().filter(|&&b| below(b, threshold)).count();
        let reprojection = forward_project(h, &estimate)?;
        let history = vec![mse(f.data(), reprojection.data())];
        let state = RlState { estimate, iteration: 0, normalizer: norm, zero_normalizer, history };
        Ok(Deconvolution { h, ht, f, eps: opts.eps, state, reprojection })
    }

    /// One multiplicative update `g <- g / (H' 1) * H'(f / (H g))`.
    pub fn step(&mut self) -> Result<()> {
        let hg = self.reprojection.data();
        let threshold = self.eps * max_of(hg);
        let ratio: Vec<f64> = self.f.data().iter().zip(hg).map(|(&a, &b)| safe_div(a, b, threshold)).collect();
        let [n_s, n_t] = self.f.shape();
        let correction = backproject_via_ht(self.ht, &Image::from_vec(n_s, n_t, ratio)?)?;

        let norm = self.state.normalizer.data();
        let norm_threshold = self.eps * max_of(norm);
        for ((g, &c), &b) in self.state.estimate.data_mut().iter_mut().zip(correction.data()).zip(norm) {
            *g = safe_div(*g, b, norm_threshold) * c;
        }
        self.reprojection = forward_project(self.h, &self.state.estimate)?;
        self.state.history.push(mse(self.f.data(), self.reprojection.data()));
        self.state.iteration += 1;
        Ok(())
    }

    pub fn state(&self) -> &RlState {
        &self.state
    }

    pub fn into_state(self) -> RlState {
        self.state
    }
}

/// Runs `opts.iters` Richardson-Lucy iterations from `opts.initial` (or ones).
pub fn rl_run(h: &PsfArray, ht: &BackprojArray, f: &Image, opts: &RlOptions) -> Result<RlState> {
    if opts.iters == 0 {
        return Err(Error::InvalidArgument("iters must be at least 1".into()));
    }
    let mut rl = Deconvolution::new(h, ht, f, opts)?;
    for _ in 0..opts.iters {
        rl.step()?;
    }
    Ok(rl.into_state())
}

#[inline]
fn below(b: f64, threshold: f64) -> bool {
    b <= 0.0 || b < threshold
}

#[inline]
fn safe_div(a: f64, b: f64, threshold: f64) -> f64 {
    if below(b, threshold) {
        0.0
    } else {
        a / b
    }
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(0.0, f64::max)
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

fn check_nonnegative(values: &[f64], what: &str) -> Result<()> {
    for (offset, &value) in values.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFiniteInput(format!("{what} element {offset} is {value}")));
        }
        if value < 0.0 {
            return Err(Error::InvalidValue { offset, value });
        }
    }
    Ok(())
}

/// Plain inner product, used by adjointness checks.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::random_psf;
    use crate::transform::compute_backprojection;

    /// Scatter-form reference: stamp every voxel's pattern into the image.
    fn naive_forward(h: &PsfArray, g: &Volume) -> Image {
        let d = h.dims();
        let [nx, ny, nz] = g.shape();
        let mut f = Image::zeros(nx, ny);
        let (c_s, c_t) = (centering(d.n_s()) as i64, centering(d.n_t()) as i64);
        for z in 1..=nz {
            for vy in 1..=ny {
                for vx in 1..=nx {
                    let gv = g.get(vx, vy, z);
                    for t in 1..=d.n_t() {
                        for s in 1..=d.n_s() {
                            let big_s = vx as i64 + s as i64 - c_s;
                            let big_t = vy as i64 + t as i64 - c_t;
                            if big_s < 1 || big_t < 1 || big_s > nx as i64 || big_t > ny as i64 {
                                continue;
                            }
                            let (bs, bt) = (big_s as usize, big_t as usize);
                            let px = (vx - 1) % d.n_x() + 1;
                            let py = (vy - 1) % d.n_y() + 1;
                            f.set(bs, bt, f.get(bs, bt) + gv * h.get(s, t, px, py, z));
                        }
                    }
                }
            }
        }
        f
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn zero_volume_gives_zero_image() {
        let h = random_psf(Dims5::new(5, 5, 3, 3, 2).unwrap(), 1.0, 1).unwrap();
        let f = forward_project(&h, &Volume::zeros(9, 9, 2)).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
        let g = backproject_adjoint(&h, &Image::zeros(9, 9)).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_voxel_stamps_its_pattern() {
        let d = Dims5::new(5, 7, 3, 3, 2).unwrap();
        let h = random_psf(d, 0.7, 3).unwrap();
        let mut g = Volume::zeros(15, 17, 2);
        let (x0, y0, z0) = (8, 9, 2);
        g.set(x0, y0, z0, 1.0);
        let f = forward_project(&h, &g).unwrap();
        let (px, py) = ((x0 - 1) % 3 + 1, (y0 - 1) % 3 + 1);
        for bt in 1..=17 {
            for bs in 1..=15 {
                let s = bs as i64 - x0 as i64 + 3;
                let t = bt as i64 - y0 as i64 + 4;
                let expected = if (1..=5).contains(&s) && (1..=7).contains(&t) {
                    h.get(s as usize, t as usize, px, py, z0)
                } else {
                    0.0
                };
                assert_eq!(f.get(bs, bt), expected);
            }
        }
    }

    #[test]
    fn forward_matches_scatter_reference() {
        let d = Dims5::new(7, 5, 3, 5, 2).unwrap();
        let h = random_psf(d, 0.8, 5).unwrap();
        let mut g = Volume::zeros(13, 11, 2);
        g.set(6, 5, 1, 1.0);
        g.set(7, 6, 1, 1.0);
        g.set(2, 10, 2, 0.5);
        let fast = forward_project(&h, &g).unwrap();
        let slow = naive_forward(&h, &g);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!(rel_close(*a, *b, 1e-14), "{a} vs {b}");
        }
    }

    #[test]
    fn via_ht_equals_adjoint() {
        let d = Dims5::new(9, 9, 3, 3, 2).unwrap();
        let h = random_psf(d, 1.0, 11).unwrap();
        let ht = compute_backprojection(&h);
        let f = Image::from_vec(21, 21, (0..441).map(|i| ((i * 37) % 101) as f64 / 101.0).collect()).unwrap();
        let a = backproject_adjoint(&h, &f).unwrap();
        let b = backproject_via_ht(&ht, &f).unwrap();
        let scale = max_of(a.data());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-12 * scale, "{x} vs {y}");
        }
    }

    #[test]
    fn single_pixel_backprojects_to_one_ht_slice() {
        let d = Dims5::new(5, 5, 3, 3, 1).unwrap();
        let h = random_psf(d, 1.0, 2).unwrap();
        let ht = compute_backprojection(&h);
        let mut f = Image::zeros(12, 12);
        let (s0, t0) = (6, 7);
        f.set(s0, t0, 1.0);
        let g = backproject_adjoint(&h, &f).unwrap();
        let (xp, yp) = ((s0 - 1) % 3 + 1, (t0 - 1) % 3 + 1);
        for vy in 1..=12 {
            for vx in 1..=12 {
                let sp = vx as i64 - s0 as i64 + 3;
                let tp = vy as i64 - t0 as i64 + 3;
                let expected = if (1..=5).contains(&sp) && (1..=5).contains(&tp) {
                    ht.get(sp as usize, tp as usize, xp, yp, 1)
                } else {
                    0.0
                };
                assert_eq!(g.get(vx, vy, 1), expected);
            }
        }
    }

    #[test]
    fn zero_ht_plane_gives_zero_volume_plane() {
        let d = Dims5::new(5, 5, 3, 3, 2).unwrap();
        let ht = BackprojArray::from_fn(d, |s, t, _, _, z| if z == 2 { 0.0 } else { (s + t) as f64 }).unwrap();
        let f = Image::filled(9, 9, 1.0);
        let g = backproject_via_ht(&ht, &f).unwrap();
        for vy in 1..=9 {
            for vx in 1..=9 {
                assert_eq!(g.get(vx, vy, 2), 0.0);
                assert!(g.get(vx, vy, 1) > 0.0);
            }
        }
    }

    #[test]
    fn normalizer_constant_inside_smaller_at_border() {
        let d = Dims5::new(5, 5, 3, 3, 1).unwrap();
        let ht = BackprojArray::new(d, 1.0).unwrap();
        let n = normalizer(&ht, [15, 15]).unwrap();
        for vy in 3..=13 {
            for vx in 3..=13 {
                assert_eq!(n.get(vx, vy, 1), 25.0);
            }
        }
        assert_eq!(n.get(1, 1, 1), 9.0);
        assert_eq!(n.get(2, 8, 1), 20.0);

        let h = random_psf(d, 1.0, 9).unwrap();
        let ht = compute_backprojection(&h);
        let a = normalizer(&ht, [15, 15]).unwrap();
        let b = backproject_adjoint(&h, &Image::filled(15, 15, 1.0)).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!(rel_close(*x, *y, 1e-12));
        }
    }

    #[test]
    fn symmetric_psf_gives_symmetric_backprojection() {
        let d = Dims5::new(5, 5, 1, 1, 1).unwrap();
        let h = PsfArray::from_fn(d, |s, t, _, _, _| {
            let (ds, dt) = (s as f64 - 3.0, t as f64 - 3.0);
            (-(ds * ds + dt * dt) / 3.0).exp()
        })
        .unwrap();
        let ht = compute_backprojection(&h);
        let mut f = Image::zeros(11, 11);
        f.set(6, 6, 1.0);
        let g = backproject_via_ht(&ht, &f).unwrap();
        for vy in 1..=11 {
            for vx in 1..=11 {
                assert_eq!(g.get(vx, vy, 1), g.get(12 - vx, vy, 1));
                assert_eq!(g.get(vx, vy, 1), g.get(vy, vx, 1));
            }
        }
    }

    #[test]
    fn dim_mismatch_errors() {
        let h = random_psf(Dims5::new(5, 5, 3, 3, 2).unwrap(), 1.0, 1).unwrap();
        assert!(matches!(forward_project(&h, &Volume::zeros(9, 9, 3)), Err(Error::DimMismatch(_))));
        let ht = compute_backprojection(&random_psf(Dims5::new(5, 5, 3, 3, 1).unwrap(), 1.0, 1).unwrap());
        assert!(matches!(rl_run(&h, &ht, &Image::zeros(9, 9), &RlOptions::default()), Err(Error::DimMismatch(_))));
    }

    #[test]
    fn rl_rejects_bad_input() {
        let h = random_psf(Dims5::new(5, 5, 3, 3, 1).unwrap(), 1.0, 1).unwrap();
        let ht = compute_backprojection(&h);
        let mut f = Image::filled(9, 9, 1.0);
        f.set(2, 2, f64::NAN);
        assert!(matches!(rl_run(&h, &ht, &f, &RlOptions::default()), Err(Error::NonFiniteInput(_))));
        f.set(2, 2, -1.0);
        assert!(matches!(rl_run(&h, &ht, &f, &RlOptions::default()), Err(Error::InvalidValue { .. })));
        let zero_iters = RlOptions { iters: 0, ..Default::default() };
        assert!(rl_run(&h, &ht, &Image::zeros(9, 9), &zero_iters).is_err());
    }

    #[test]
    fn rl_zero_image_is_zero_fixed_point() {
        let h = random_psf(Dims5::new(5, 5, 3, 3, 2).unwrap(), 1.0, 4).unwrap();
        let ht = compute_backprojection(&h);
        let state = rl_run(&h, &ht, &Image::zeros(11, 11), &RlOptions { iters: 3, ..Default::default() }).unwrap();
        assert!(state.estimate.data().iter().all(|&v| v == 0.0));
        assert_eq!(state.history.len(), 4);
        assert_eq!(state.history[3], 0.0);
    }

    #[test]
    fn rl_locates_single_voxel() {
        let d = Dims5::new(9, 9, 3, 3, 1).unwrap();
        let h = random_psf(d, 1.0, 21).unwrap();
        let ht = compute_backprojection(&h);
        let mut g_true = Volume::zeros(15, 15, 1);
        g_true.set(8, 8, 1, 1.0);
        let f = forward_project(&h, &g_true).unwrap();
        let state = rl_run(&h, &ht, &f, &RlOptions::default()).unwrap();
        let (argmax, _) = state
            .estimate
            .data()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert_eq!(state.estimate.coords(argmax), (8, 8, 1));
        assert!(state.estimate.data().iter().all(|&v| v >= 0.0));
    }
}
