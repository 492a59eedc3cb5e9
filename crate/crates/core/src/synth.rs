//! Synthetic light-field PSFs.
//!
//! [`random_psf`] produces arbitrary sparse arrays for exercising the
//! value-agnostic transform. [`synth_psf`] renders a geometric spot model of
//! a plenoptic camera: a point at lateral position `p` and depth `z` lights
//! the lenslets inside an aperture disc around `p` whose radius grows with
//! defocus; behind each lit lenslet `L` a Gaussian spot appears at
//! `L + parallax(z) * (p - L)`. No diffraction, no vignetting.
//!
//! The lenslet lattice is periodic with the elementary cell, so patterns of
//! voxels one cell apart are identical up to the lateral shift.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::array::{Dims5, PsfArray};
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::oracle::centering;

/// Seeded random PSF: each element is nonzero with probability `density`,
/// nonzero values uniform in `(0, 1]`.
pub fn random_psf(dims: Dims5, density: f64, seed: u64) -> Result<PsfArray> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidArgument(format!("density must be in (0, 1], got {density}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..dims.len())
        .map(|_| {
            let keep = density >= 1.0 || rng.random::<f64>() < density;
            let value = 1.0 - rng.random::<f64>();
            if keep {
                value
            } else {
                0.0
            }
        })
        .collect();
    PsfArray::from_vec(dims, data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayoutKind {
    /// Square grid, one lens type.
    Rect,
    /// Hexagonal grid, one lens type.
    Hex,
    /// Hexagonal grid with three lens types of different focus.
    Hex3,
}

impl std::str::FromStr for LayoutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rect" => Ok(LayoutKind::Rect),
            "hex" => Ok(LayoutKind::Hex),
            "hex3" => Ok(LayoutKind::Hex3),
            other => Err(Error::Config(format!("unknown layout '{other}' (rect, hex, hex3)"))),
        }
    }
}

fn nearest_odd(v: f64) -> usize {
    let v = v.max(1.0);
    (2.0 * ((v - 1.0) / 2.0).round() + 1.0) as usize
}

/// Lenslet grid geometry.
///
/// Rect: lenslets on a square grid with spacing `cell = nearest odd(pitch)`.
/// Hex: rows of lenslets spaced `cell_x` apart, alternate rows shifted by
/// half a lenslet, two rows every `cell_y = nearest odd(pitch * sqrt 3)`
/// pixels. Hex3: as hex but lens types cycle along each row, tripling the
/// cell in `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlaLayout {
    kind: LayoutKind,
    pitch: f64,
    cell: (usize, usize),
    /// Focus plane offset (in planes, relative to the native plane) per lens type.
    focus_offsets: Vec<f64>,
}

impl MlaLayout {
    pub fn new(kind: LayoutKind, pitch: f64) -> Result<Self> {
        if !(pitch >= 1.0 && pitch.is_finite()) {
            return Err(Error::InvalidArgument(format!("pitch must be >= 1 pixel, got {pitch}")));
        }
        let px = nearest_odd(pitch);
        let (cell, focus_offsets) = match kind {
            LayoutKind::Rect => ((px, px), vec![0.0]),
            LayoutKind::Hex => ((px, nearest_odd(pitch * 3f64.sqrt())), vec![0.0]),
            LayoutKind::Hex3 => ((3 * px, nearest_odd(pitch * 3f64.sqrt())), vec![-1.0, 0.0, 1.0]),
        };
        Ok(MlaLayout { kind, pitch, cell, focus_offsets })
    }

    pub fn rect(pitch: f64) -> Result<Self> {
        Self::new(LayoutKind::Rect, pitch)
    }

    pub fn hex(pitch: f64) -> Result<Self> {
        Self::new(LayoutKind::Hex, pitch)
    }

    pub fn hex3(pitch: f64) -> Result<Self> {
        Self::new(LayoutKind::Hex3, pitch)
    }

    /// Replaces the per-type focus offsets (one per lens type).
    pub fn with_focus_offsets(mut self, offsets: Vec<f64>) -> Result<Self> {
        if offsets.len() != self.lens_types() {
            return Err(Error::InvalidArgument(format!(
                "{} focus offsets for {} lens types",
                offsets.len(),
                self.lens_types()
            )));
        }
        self.focus_offsets = offsets;
        Ok(self)
    }

    pub fn kind(&self) -> LayoutKind {
        self.kind
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    /// Elementary cell `(n_x, n_y)`, both odd.
    pub fn cell(&self) -> (usize, usize) {
        self.cell
    }

    pub fn lens_types(&self) -> usize {
        self.focus_offsets.len()
    }

    pub fn focus_offsets(&self) -> &[f64] {
        &self.focus_offsets
    }

    /// Horizontal lenslet spacing in pixels.
    fn spacing_x(&self) -> f64 {
        match self.kind {
            LayoutKind::Rect | LayoutKind::Hex => self.cell.0 as f64,
            LayoutKind::Hex3 => self.cell.0 as f64 / 3.0,
        }
    }

    /// Vertical spacing between lenslet rows.
    fn spacing_y(&self) -> f64 {
        match self.kind {
            LayoutKind::Rect => self.cell.1 as f64,
            LayoutKind::Hex | LayoutKind::Hex3 => self.cell.1 as f64 / 2.0,
        }
    }

    /// Lenslet `(i, j)` centre relative to the lattice origin, and its type.
    fn lenslet(&self, i: i64, j: i64) -> ((f64, f64), usize) {
        let (sx, sy) = (self.spacing_x(), self.spacing_y());
        let shift = match self.kind {
            LayoutKind::Rect => 0.0,
            LayoutKind::Hex | LayoutKind::Hex3 => j.rem_euclid(2) as f64 * sx / 2.0,
        };
        let kind = match self.kind {
            LayoutKind::Hex3 => (i + 2 * j.rem_euclid(2)).rem_euclid(3) as usize,
            _ => 0,
        };
        ((i as f64 * sx + shift, j as f64 * sy), kind)
    }

    /// All lenslets whose centre lies within `radius` of `p`.
    fn lenslets_near(&self, origin: (f64, f64), p: (f64, f64), radius: f64) -> Vec<((f64, f64), usize)> {
        let (sx, sy) = (self.spacing_x(), self.spacing_y());
        let (rx, ry) = (p.0 - origin.0, p.1 - origin.1);
        let (j0, j1) = (((ry - radius) / sy).floor() as i64 - 1, ((ry + radius) / sy).ceil() as i64 + 1);
        let (i0, i1) = (((rx - radius) / sx).floor() as i64 - 1, ((rx + radius) / sx).ceil() as i64 + 1);
        let mut out = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                let ((lx, ly), kind) = self.lenslet(i, j);
                let c = (lx + origin.0, ly + origin.1);
                if (c.0 - p.0).hypot(c.1 - p.1) <= radius {
                    out.push((c, kind));
                }
            }
        }
        out
    }

    fn nearest_distance(&self, origin: (f64, f64), p: (f64, f64)) -> f64 {
        let reach = self.spacing_x().max(self.spacing_y()) * 1.5;
        self.lenslets_near(origin, p, reach)
            .iter()
            .map(|(c, _)| (c.0 - p.0).hypot(c.1 - p.1))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let kind: LayoutKind = cfg.get_or("layout", LayoutKind::Rect)?;
        let pitch: f64 = cfg.get_or("pitch", 5.0)?;
        let layout = MlaLayout::new(kind, pitch)?;
        match cfg.get_list::<f64>("focus_offsets")? {
            Some(offsets) => layout.with_focus_offsets(offsets),
            None => Ok(layout),
        }
    }
}

/// Optical parameters of the spot model. Lengths in pixels, depths in planes.
#[derive(Clone, Debug, PartialEq)]
pub struct Optics {
    /// 1-based plane of best focus for lens type 0.
    pub native_plane: f64,
    /// Main-lens f-number proxy: aperture disc radius grows by
    /// `z_spacing / (2 f_number)` per plane of defocus.
    pub f_number: f64,
    /// Axial distance between planes, in pixel units.
    pub z_spacing: f64,
    /// Spot sigma at the focus plane of a lens type.
    pub spot_sigma: f64,
    /// Spot sigma increase per plane away from a lens type's focus.
    pub sigma_per_plane: f64,
    /// Spot offset factor: a point at `p` puts its spot behind lenslet `L`
    /// at `L + k (p - L)`, with `k = parallax` at the native plane.
    pub parallax: f64,
    /// Growth of `|k|` per plane of defocus.
    pub parallax_per_plane: f64,
}

impl Default for Optics {
    fn default() -> Self {
        Optics {
            native_plane: 2.0,
            f_number: 1.0,
            z_spacing: 12.0,
            spot_sigma: 0.6,
            sigma_per_plane: 0.25,
            parallax: 0.5,
            parallax_per_plane: 0.15,
        }
    }
}

impl Optics {
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let d = Optics::default();
        Ok(Optics {
            native_plane: cfg.get_or("native_plane", d.native_plane)?,
            f_number: cfg.get_or("f_number", d.f_number)?,
            z_spacing: cfg.get_or("z_spacing", d.z_spacing)?,
            spot_sigma: cfg.get_or("spot_sigma", d.spot_sigma)?,
            sigma_per_plane: cfg.get_or("sigma_per_plane", d.sigma_per_plane)?,
            parallax: cfg.get_or("parallax", d.parallax)?,
            parallax_per_plane: cfg.get_or("parallax_per_plane", d.parallax_per_plane)?,
        })
    }

    fn validate(&self) -> Result<()> {
        let ok = self.f_number > 0.0
            && self.z_spacing >= 0.0
            && self.spot_sigma > 0.0
            && self.sigma_per_plane >= 0.0
            && [self.native_plane, self.parallax, self.parallax_per_plane].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid optics {self:?}")))
        }
    }

    fn aperture_radius(&self, z: usize) -> f64 {
        (z as f64 - self.native_plane).abs() * self.z_spacing / (2.0 * self.f_number)
    }

    /// Microimages are mirrored behind the native plane, so the factor
    /// changes sign there.
    fn parallax_at(&self, z: usize) -> f64 {
        let dz = z as f64 - self.native_plane;
        let k = self.parallax + self.parallax_per_plane * dz.abs();
        if dz > 0.0 {
            -k
        } else {
            k
        }
    }
}

/// Renders a PSF for `layout` and `optics`. `dims` must use the layout's
/// elementary cell as `(n_x, n_y)`. Every `(x, y, z)` pattern sums to 1.
pub fn synth_psf(layout: &MlaLayout, dims: Dims5, optics: &Optics) -> Result<PsfArray> {
    optics.validate()?;
    if (dims.n_x(), dims.n_y()) != layout.cell() {
        return Err(Error::LayoutMismatch(format!(
            "dims cell ({}, {}) but {:?} layout with pitch {} has cell {:?}",
            dims.n_x(),
            dims.n_y(),
            layout.kind(),
            layout.pitch(),
            layout.cell()
        )));
    }
    let mut data = vec![0.0; dims.len()];
    for z in 1..=dims.n_z() {
        for y in 1..=dims.n_y() {
            for x in 1..=dims.n_x() {
                let pattern = render_pattern(layout, dims, optics, x as f64, y as f64, z);
                let base = dims.offset(1, 1, x, y, z);
                data[base..base + pattern.len()].copy_from_slice(&pattern);
            }
        }
    }
    PsfArray::from_vec(dims, data)
}

/// Lattice origin: one lenslet sits on the cell centre, so phase `c` of each
/// axis is lens-centred.
fn lattice_origin(dims: Dims5) -> (f64, f64) {
    (dims.n_x().div_ceil(2) as f64, dims.n_y().div_ceil(2) as f64)
}

/// Pattern of a point at absolute position `(px, py)`, `n_s * n_t` values
/// with `s` fastest, normalized to unit sum.
fn render_pattern(layout: &MlaLayout, dims: Dims5, optics: &Optics, px: f64, py: f64, z: usize) -> Vec<f64> {
    let origin = lattice_origin(dims);
    let p = (px, py);
    let radius = optics.aperture_radius(z).max(layout.nearest_distance(origin, p) + 1e-9);
    let kappa = optics.parallax_at(z);
    let spots: Vec<((f64, f64), f64)> = layout
        .lenslets_near(origin, p, radius)
        .into_iter()
        .map(|(c, kind)| {
            let centre = (c.0 + kappa * (p.0 - c.0), c.1 + kappa * (p.1 - c.1));
            let defocus = (z as f64 - optics.native_plane - layout.focus_offsets()[kind]).abs();
            (centre, optics.spot_sigma + optics.sigma_per_plane * defocus)
        })
        .collect();

    let (c_s, c_t) = (centering(dims.n_s()) as f64, centering(dims.n_t()) as f64);
    let mut out = vec![0.0; dims.n_s() * dims.n_t()];
    for t in 1..=dims.n_t() {
        let v = py + t as f64 - c_t;
        for s in 1..=dims.n_s() {
            let u = px + s as f64 - c_s;
            out[(s - 1) + dims.n_s() * (t - 1)] = spots
                .iter()
                .map(|&((cx, cy), sigma)| {
                    let r2 = (u - cx).powi(2) + (v - cy).powi(2);
                    (-r2 / (2.0 * sigma * sigma)).exp() / (sigma * sigma)
                })
                .sum();
        }
    }
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|v| *v /= total);
    }
    out
}
