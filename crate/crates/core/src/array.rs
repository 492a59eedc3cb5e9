//! Dense light-field arrays.
//!
//! All index arguments in the public API are 1-based, matching the loop
//! conventions of the transform (`s = 1..=n_s` and so on). The mapping to
//! storage lives in [`Dims5::offset`] and nowhere else:
//!
//! ```text
//! offset(s, t, x, y, z) = (s-1) + n_s*((t-1) + n_t*((x-1) + n_x*((y-1) + n_y*(z-1))))
//! ```
//!
//! `s` varies fastest and `z` slowest, so every depth plane is one contiguous
//! block of `n_s*n_t*n_x*n_y` elements. The LF5 container uses the same order.

use std::fmt;
use std::marker::PhantomData;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{self, Dtype, LoadOptions, Lf5};

/// Shape of a PSF or backprojection array.
///
/// `n_s, n_t` are the pattern (pixel) dims, `n_x, n_y` the elementary cell
/// and `n_z` the number of depth planes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims5 {
    n_s: usize,
    n_t: usize,
    n_x: usize,
    n_y: usize,
    n_z: usize,
}

impl Dims5 {
    pub fn new(n_s: usize, n_t: usize, n_x: usize, n_y: usize, n_z: usize) -> Result<Self> {
        let dims = [n_s, n_t, n_x, n_y, n_z];
        match Self::violation(dims) {
            Some(reason) => Err(Error::InvalidDims { dims, reason }),
            None => Ok(Dims5 { n_s, n_t, n_x, n_y, n_z }),
        }
    }

    pub fn from_array(dims: [usize; 5]) -> Result<Self> {
        Self::new(dims[0], dims[1], dims[2], dims[3], dims[4])
    }

    /// Returns the first violated invariant, if any.
    pub(crate) fn violation(dims: [usize; 5]) -> Option<&'static str> {
        let [n_s, n_t, n_x, n_y, _] = dims;
        if dims.contains(&0) {
            Some("all dims must be at least 1")
        } else if n_x % 2 == 0 || n_y % 2 == 0 {
            Some("elementary cell dims n_x and n_y must be odd")
        } else if n_s < n_x || n_t < n_y {
            Some("pattern dims must cover the elementary cell (n_s >= n_x, n_t >= n_y)")
        } else {
            None
        }
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }
    pub fn n_t(&self) -> usize {
        self.n_t
    }
    pub fn n_x(&self) -> usize {
        self.n_x
    }
    pub fn n_y(&self) -> usize {
        self.n_y
    }
    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn to_array(&self) -> [usize; 5] {
        [self.n_s, self.n_t, self.n_x, self.n_y, self.n_z]
    }

    /// Pixels per pattern, `N_p = n_s * n_t`.
    pub fn pixel_count(&self) -> usize {
        self.n_s * self.n_t
    }

    /// Voxels in the elementary cell stack, `N_v = n_x * n_y * n_z`.
    pub fn voxel_count(&self) -> usize {
        self.n_x * self.n_y * self.n_z
    }

    /// Elements in one depth plane.
    pub fn plane_len(&self) -> usize {
        self.n_s * self.n_t * self.n_x * self.n_y
    }

    pub fn len(&self) -> usize {
        self.plane_len() * self.n_z
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn has_odd_pixel_dims(&self) -> bool {
        self.n_s % 2 == 1 && self.n_t % 2 == 1
    }

    /// Storage offset of a 1-based index tuple. Panics in debug builds when
    /// an index is out of range.
    #[inline]
    pub fn offset(&self, s: usize, t: usize, x: usize, y: usize, z: usize) -> usize {
        debug_assert!((1..=self.n_s).contains(&s) && (1..=self.n_t).contains(&t));
        debug_assert!((1..=self.n_x).contains(&x) && (1..=self.n_y).contains(&y));
        debug_assert!((1..=self.n_z).contains(&z));
        (s - 1) + self.n_s * ((t - 1) + self.n_t * ((x - 1) + self.n_x * ((y - 1) + self.n_y * (z - 1))))
    }

    /// 1-based `[s, t, x, y, z]` of a storage offset.
    pub fn index_of(&self, offset: usize) -> Result<[usize; 5]> {
        if offset >= self.len() {
            return Err(Error::Index { index: offset, max: self.len() - 1 });
        }
        let mut rest = offset;
        let mut out = [0; 5];
        for (slot, n) in out.iter_mut().zip(self.to_array()) {
            *slot = rest % n + 1;
            rest /= n;
        }
        Ok(out)
    }

    pub(crate) fn check_plane(&self, z: usize) -> Result<()> {
        if (1..=self.n_z).contains(&z) {
            Ok(())
        } else {
            Err(Error::Index { index: z, max: self.n_z })
        }
    }

    /// Same dims with a different number of depth planes.
    pub fn with_n_z(&self, n_z: usize) -> Result<Self> {
        Self::new(self.n_s, self.n_t, self.n_x, self.n_y, n_z)
    }
}

impl fmt::Display for Dims5 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{},{})", self.n_s, self.n_t, self.n_x, self.n_y, self.n_z)
    }
}

/// Marker for arrays indexed `(s, t, x, y, z)`: one pixel pattern per voxel phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Psf;

/// Marker for arrays indexed `(s', t', x', y', z)`: one voxel pattern per pixel phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Backproj;

/// Dense nonnegative 5-D array. See [`PsfArray`] and [`BackprojArray`].
#[derive(Clone, PartialEq)]
pub struct LfArray<K> {
    dims: Dims5,
    data: Vec<f64>,
    kind: PhantomData<K>,
}

/// Light-field PSF `H(s, t, x, y, z)`.
pub type PsfArray = LfArray<Psf>;

/// Backprojection array `H'(s', t', x', y', z)`. Same shape as the PSF it came
/// from; the slice `(.., .., x', y', z)` is the object-space pattern seen by a
/// pixel with lateral phase `(x', y')`.
pub type BackprojArray = LfArray<Backproj>;

impl<K> fmt::Debug for LfArray<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LfArray").field("dims", &self.dims).field("len", &self.data.len()).finish()
    }
}

impl<K> LfArray<K> {
    pub fn new(dims: Dims5, fill: f64) -> Result<Self> {
        check_value(0, fill)?;
        Ok(Self::filled(dims, fill))
    }

    pub(crate) fn filled(dims: Dims5, fill: f64) -> Self {
        LfArray { dims, data: vec![fill; dims.len()], kind: PhantomData }
    }

    pub fn zeros(dims: Dims5) -> Self {
        Self::filled(dims, 0.0)
    }

    /// Wraps existing storage. Every element must be finite and nonnegative.
    pub fn from_vec(dims: Dims5, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::DimMismatch(format!(
                "{} elements supplied for dims {dims} ({} expected)",
                data.len(),
                dims.len()
            )));
        }
        for (offset, &value) in data.iter().enumerate() {
            check_value(offset, value)?;
        }
        Ok(LfArray { dims, data, kind: PhantomData })
    }

    /// Builds an array by evaluating `f(s, t, x, y, z)` at every 1-based index.
    pub fn from_fn(dims: Dims5, mut f: impl FnMut(usize, usize, usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.len());
        for z in 1..=dims.n_z {
            for y in 1..=dims.n_y {
                for x in 1..=dims.n_x {
                    for t in 1..=dims.n_t {
                        for s in 1..=dims.n_s {
                            data.push(f(s, t, x, y, z));
                        }
                    }
                }
            }
        }
        Self::from_vec(dims, data)
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub(crate) fn from_vec_unchecked(dims: Dims5, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims.len());
        LfArray { dims, data, kind: PhantomData }
    }

    pub fn dims(&self) -> Dims5 {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, s: usize, t: usize, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.dims.offset(s, t, x, y, z)]
    }

    /// Contiguous storage of depth plane `z` (1-based).
    pub fn plane(&self, z: usize) -> Result<&[f64]> {
        self.dims.check_plane(z)?;
        let len = self.dims.plane_len();
        Ok(&self.data[(z - 1) * len..z * len])
    }

    /// Multiplies every element by `c >= 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_vec(self.dims, self.data.iter().map(|v| v * c).collect())
    }

    /// Drops all depth planes except `z_range` (1-based, inclusive).
    pub fn z_slab(&self, first: usize, last: usize) -> Result<Self> {
        self.dims.check_plane(first)?;
        self.dims.check_plane(last)?;
        if last < first {
            return Err(Error::InvalidArgument(format!("empty z range {first}..={last}")));
        }
        let dims = self.dims.with_n_z(last - first + 1)?;
        let len = self.dims.plane_len();
        Ok(Self::from_vec_unchecked(dims, self.data[(first - 1) * len..last * len].to_vec()))
    }

    /// Per-pixel sums over the elementary cell: `out(s, t) = sum_{x,y} A(s, t, x, y, z)`.
    ///
    /// Each sum runs over the sorted cell values, so any two arrays holding
    /// the same multiset of values in a pattern produce bitwise equal sums.
    pub(crate) fn cell_sums(&self, z: usize) -> Result<Plane> {
        let plane = self.plane(z)?;
        let Dims5 { n_s, n_t, n_x, n_y, .. } = self.dims;
        let pix = n_s * n_t;
        let mut buf = Vec::with_capacity(n_x * n_y);
        let mut out = Vec::with_capacity(pix);
        for p in 0..pix {
            buf.clear();
            buf.extend((0..n_x * n_y).map(|c| plane[p + pix * c]));
            out.push(canonical_sum(&mut buf));
        }
        Ok(Plane { rows: n_s, cols: n_t, data: out })
    }

    /// Sum of all elements of depth plane `z` in canonical order.
    pub fn plane_total(&self, z: usize) -> Result<f64> {
        let mut values = self.plane(z)?.to_vec();
        Ok(canonical_sum(&mut values))
    }

    pub fn to_lf5(&self, dtype: Dtype) -> Lf5 {
        Lf5 { dtype, shape: self.dims.to_array(), data: self.data.clone() }
    }

    /// Writes the array as an LF5 container. Saving as `F32` rounds values.
    pub fn save(&self, path: impl AsRef<Path>, dtype: Dtype) -> Result<()> {
        io::write_lf5(path, &self.to_lf5(dtype))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = io::read_lf5(path, LoadOptions::default())?;
        Self::from_lf5(file)
    }

    pub fn from_lf5(file: Lf5) -> Result<Self> {
        if let Some(reason) = Dims5::violation(file.shape) {
            return Err(Error::Dims { dims: file.shape, reason });
        }
        Self::from_vec(Dims5::from_array(file.shape)?, file.data)
    }
}

impl PsfArray {
    /// `out(s, t) = sum_{x,y} H(s, t, x, y, z)`: the recorded image of a
    /// uniformly lit elementary cell at depth `z`.
    pub fn sum_forward_plane(&self, z: usize) -> Result<Plane> {
        self.cell_sums(z)
    }
}

impl BackprojArray {
    /// `out(s', t') = sum_{x',y'} H'(s', t', x', y', z)`.
    pub fn sum_backward_plane(&self, z: usize) -> Result<Plane> {
        self.cell_sums(z)
    }
}

fn check_value(offset: usize, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidValue { offset, value })
    }
}

/// Sums values in ascending order. Equal multisets give bitwise equal results.
pub fn canonical_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
}

/// 2-D real array, element `(i, j)` (1-based) stored at `(i-1) + rows*(j-1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Plane { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch(format!("{} elements for a {rows}x{cols} plane", data.len())));
        }
        Ok(Plane { rows, cols, data })
    }

    /// Builds a plane from row slices, `rows[i-1][j-1] = P(i, j)`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != n_cols) {
            return Err(Error::DimMismatch("ragged rows".into()));
        }
        let mut plane = Plane::zeros(n_rows, n_cols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.as_ref().iter().enumerate() {
                plane.data[i + n_rows * j] = v;
            }
        }
        Ok(plane)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i - 1) + self.rows * (j - 1)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[(i - 1) + self.rows * (j - 1)] = value;
    }

    /// `out(i, j) = in(rows+1-i, cols+1-j)`.
    pub fn rotate180_lateral(&self) -> Plane {
        let mut data = self.data.clone();
        data.reverse();
        Plane { rows: self.rows, cols: self.cols, data }
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

/// Object-space volume `g(X, Y, Z)`, X fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    n_x: usize,
    n_y: usize,
    n_z: usize,
    data: Vec<f64>,
}

impl Volume {
    pub fn zeros(n_x: usize, n_y: usize, n_z: usize) -> Self {
        Self::filled(n_x, n_y, n_z, 0.0)
    }

    pub fn filled(n_x: usize, n_y: usize, n_z: usize, value: f64) -> Self {
        Volume { n_x, n_y, n_z, data: vec![value; n_x * n_y * n_z] }
    }

    pub fn from_vec(n_x: usize, n_y: usize, n_z: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_x * n_y * n_z {
            return Err(Error::DimMismatch(format!(
                "{} elements for a {n_x}x{n_y}x{n_z} volume",
                data.len()
            )));
        }
        Ok(Volume { n_x, n_y, n_z, data })
    }

    /// Lateral and depth counts `(N_X, N_Y, n_z)`.
    pub fn shape(&self) -> [usize; 3] {
        [self.n_x, self.n_y, self.n_z]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn offset(&self, x: usize, y: usize, z: usize) -> usize {
        (x - 1) + self.n_x * ((y - 1) + self.n_y * (z - 1))
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.offset(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: f64) {
        let o = self.offset(x, y, z);
        self.data[o] = value;
    }

    /// 1-based coordinates of a storage offset.
    pub fn coords(&self, offset: usize) -> (usize, usize, usize) {
        let x = offset % self.n_x;
        let y = (offset / self.n_x) % self.n_y;
        let z = offset / (self.n_x * self.n_y);
        (x + 1, y + 1, z + 1)
    }

    /// Stored as LF5 with dims `(N_X, N_Y, 1, 1, n_z)`.
    pub fn to_lf5(&self, dtype: Dtype) -> Lf5 {
        Lf5 { dtype, shape: [self.n_x, self.n_y, 1, 1, self.n_z], data: self.data.clone() }
    }

    pub fn from_lf5(file: Lf5) -> Result<Self> {
        match file.shape {
            [n_x, n_y, 1, 1, n_z] => Volume::from_vec(n_x, n_y, n_z, file.data),
            shape => Err(Error::DimMismatch(format!("{shape:?} is not a volume (expected n_x=n_y=1)"))),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>, dtype: Dtype) -> Result<()> {
        io::write_lf5(path, &self.to_lf5(dtype))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_lf5(io::read_lf5(path, LoadOptions::default())?)
    }
}

/// Sensor image `f(S, T)`, S fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    n_s: usize,
    n_t: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(n_s: usize, n_t: usize) -> Self {
        Self::filled(n_s, n_t, 0.0)
    }

    pub fn filled(n_s: usize, n_t: usize, value: f64) -> Self {
        Image { n_s, n_t, data: vec![value; n_s * n_t] }
    }

    pub fn from_vec(n_s: usize, n_t: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_s * n_t {
            return Err(Error::DimMismatch(format!("{} elements for a {n_s}x{n_t} image", data.len())));
        }
        Ok(Image { n_s, n_t, data })
    }

    /// `(N_S, N_T)`.
    pub fn shape(&self) -> [usize; 2] {
        [self.n_s, self.n_t]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.data[(s - 1) + self.n_s * (t - 1)]
    }

    pub fn set(&mut self, s: usize, t: usize, value: f64) {
        self.data[(s - 1) + self.n_s * (t - 1)] = value;
    }

    /// Stored as LF5 with dims `(N_S, N_T, 1, 1, 1)`.
    pub fn to_lf5(&self, dtype: Dtype) -> Lf5 {
        Lf5 { dtype, shape: [self.n_s, self.n_t, 1, 1, 1], data: self.data.clone() }
    }

    pub fn from_lf5(file: Lf5) -> Result<Self> {
        match file.shape {
            [n_s, n_t, 1, 1, 1] => Image::from_vec(n_s, n_t, file.data),
            shape => Err(Error::DimMismatch(format!("{shape:?} is not an image (expected (N_S,N_T,1,1,1))"))),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>, dtype: Dtype) -> Result<()> {
        io::write_lf5(path, &self.to_lf5(dtype))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_lf5(io::read_lf5(path, LoadOptions::default())?)
    }
}
