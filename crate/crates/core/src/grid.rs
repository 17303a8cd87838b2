//! Stacks, patches and masks, mode-n unfolding, and the
//! `(rows × cols × T) -> (pixels × nd × ny)` rearrangement.
//!
//! Unfoldings follow the Kolda–Bader column ordering: the remaining two
//! indices enumerate columns in increasing mode order with the lower mode
//! varying fastest. For a tensor of shape `(I1, I2, I3)`:
//!
//! ```text
//! mode 1: row i, column j + k*I2
//! mode 2: row j, column i + k*I1
//! mode 3: row k, column i + j*I1
//! ```

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-sample quality code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Reliability {
    Good = 0,
    Marginal = 1,
    Cloudy = 3,
    /// Stored as 255; the product convention writes it as -1.
    NoData = 255,
}

impl Reliability {
    pub const fn code(self) -> u8 {
        self as u8
    }

    /// Good and marginal samples are observations; cloudy and no-data are gaps.
    pub const fn is_valid(self) -> bool {
        matches!(self, Reliability::Good | Reliability::Marginal)
    }
}

impl TryFrom<u8> for Reliability {
    type Error = u8;

    fn try_from(code: u8) -> std::result::Result<Self, u8> {
        match code {
            0 => Ok(Reliability::Good),
            1 => Ok(Reliability::Marginal),
            3 => Ok(Reliability::Cloudy),
            255 => Ok(Reliability::NoData),
            other => Err(other),
        }
    }
}

impl fmt::Display for Reliability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Reliability::Good => "GOOD",
            Reliability::Marginal => "MARGINAL",
            Reliability::Cloudy => "CLOUDY",
            Reliability::NoData => "NODATA",
        };
        f.write_str(name)
    }
}

/// Dense three-way array, row-major: the last index varies fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3<T> {
    shape: [usize; 3],
    data: Vec<T>,
}

impl<T: Clone> Tensor3<T> {
    pub fn filled(shape: [usize; 3], value: T) -> Self {
        Tensor3 {
            shape,
            data: vec![value; shape[0] * shape[1] * shape[2]],
        }
    }
}

impl<T> Tensor3<T> {
    pub fn from_vec(shape: [usize; 3], data: Vec<T>) -> Result<Self> {
        let expected = shape[0] * shape[1] * shape[2];
        if data.len() != expected {
            return Err(Error::shape(format!(
                "tensor of shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor3 { shape, data })
    }

    pub fn from_fn(shape: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(shape[0] * shape[1] * shape[2]);
        for i in 0..shape[0] {
            for j in 0..shape[1] {
                for k in 0..shape[2] {
                    data.push(f(i, j, k));
                }
            }
        }
        Tensor3 { shape, data }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.shape[0] && j < self.shape[1] && k < self.shape[2]);
        (i * self.shape[1] + j) * self.shape[2] + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> &T {
        &self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn get_mut(&mut self, i: usize, j: usize, k: usize) -> &mut T {
        let o = self.offset(i, j, k);
        &mut self.data[o]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Tensor3<U> {
        Tensor3 {
            shape: self.shape,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl Tensor3<f64> {
    pub fn zeros(shape: [usize; 3]) -> Self {
        Tensor3::filled(shape, 0.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Tensor mode, 1-based as in the usual notation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::One, Mode::Two, Mode::Three];

    pub fn index(self) -> usize {
        match self {
            Mode::One => 0,
            Mode::Two => 1,
            Mode::Three => 2,
        }
    }

    /// Row count and column count of the unfolding of a tensor of `shape`.
    pub fn unfolded_dims(self, shape: [usize; 3]) -> (usize, usize) {
        let [a, b, c] = shape;
        match self {
            Mode::One => (a, b * c),
            Mode::Two => (b, a * c),
            Mode::Three => (c, a * b),
        }
    }

    /// (row, column) of element `(i, j, k)` in the unfolding.
    #[inline]
    fn locate(self, shape: [usize; 3], i: usize, j: usize, k: usize) -> (usize, usize) {
        match self {
            Mode::One => (i, j + k * shape[1]),
            Mode::Two => (j, i + k * shape[0]),
            Mode::Three => (k, i + j * shape[0]),
        }
    }
}

impl TryFrom<usize> for Mode {
    type Error = Error;

    fn try_from(n: usize) -> Result<Mode> {
        match n {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            other => Err(Error::param(format!("tensor mode must be 1, 2 or 3, got {other}"))),
        }
    }
}

/// Mode-n unfolding: mode-n fibers become columns.
pub fn unfold(tensor: &Tensor3<f64>, mode: Mode) -> DMatrix<f64> {
    let shape = tensor.shape();
    let (rows, cols) = mode.unfolded_dims(shape);
    let mut out = DMatrix::zeros(rows, cols);
    let mut src = tensor.as_slice().iter();
    for i in 0..shape[0] {
        for j in 0..shape[1] {
            for k in 0..shape[2] {
                let (r, c) = mode.locate(shape, i, j, k);
                out[(r, c)] = *src.next().unwrap();
            }
        }
    }
    out
}

/// Inverse of [`unfold`] for a tensor of the given shape.
pub fn fold(matrix: &DMatrix<f64>, mode: Mode, shape: [usize; 3]) -> Result<Tensor3<f64>> {
    let (rows, cols) = mode.unfolded_dims(shape);
    if matrix.nrows() != rows || matrix.ncols() != cols {
        return Err(Error::shape(format!(
            "cannot fold a {}x{} matrix along {mode:?} into {shape:?} (needs {rows}x{cols})",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    Ok(Tensor3::from_fn(shape, |i, j, k| {
        let (r, c) = mode.locate(shape, i, j, k);
        matrix[(r, c)]
    }))
}

/// Validity mask from reliability codes; true exactly for GOOD and MARGINAL.
pub fn omega_from_reliability(codes: &Tensor3<u8>) -> Result<Tensor3<bool>> {
    let [_, b, c] = codes.shape();
    let mut out = Vec::with_capacity(codes.len());
    for (flat, &code) in codes.as_slice().iter().enumerate() {
        let rel = Reliability::try_from(code).map_err(|code| Error::InvalidCode {
            code,
            location: format!("({}, {}, {})", flat / (b * c), (flat / c) % b, flat % c),
        })?;
        out.push(rel.is_valid());
    }
    Tensor3::from_vec(codes.shape(), out)
}

/// An `(rows × cols × T)` block of a stack with its observation mask.
///
/// Interior tiles are square; tiles on the right and bottom edges of a scene
/// may be narrower.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub data: Tensor3<f64>,
    pub omega: Tensor3<bool>,
}

impl Patch {
    pub fn new(data: Tensor3<f64>, omega: Tensor3<bool>) -> Result<Self> {
        if data.shape() != omega.shape() {
            return Err(Error::shape(format!(
                "patch data {:?} and mask {:?} differ",
                data.shape(),
                omega.shape()
            )));
        }
        Ok(Patch { data, omega })
    }

    pub fn rows(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn time_len(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn valid_count(&self) -> usize {
        self.omega.as_slice().iter().filter(|&&v| v).count()
    }
}

/// `(pixels × nd × ny)` form of a patch: pixel `p = i*cols + j`,
/// time `t = y*nd + d`.
#[derive(Clone, Debug, PartialEq)]
pub struct RearrangedTensor {
    pub data: Tensor3<f64>,
    pub omega: Tensor3<bool>,
}

impl RearrangedTensor {
    pub fn shape(&self) -> [usize; 3] {
        self.data.shape()
    }
}

fn rearrange_one<T: Copy>(src: &Tensor3<T>, nd: usize) -> Tensor3<T> {
    let [rows, cols, t_len] = src.shape();
    let ny = t_len / nd;
    Tensor3::from_fn([rows * cols, nd, ny], |p, d, y| {
        *src.get(p / cols, p % cols, y * nd + d)
    })
}

fn restore_one<T: Copy>(src: &Tensor3<T>, rows: usize, cols: usize) -> Tensor3<T> {
    let [_, nd, ny] = src.shape();
    Tensor3::from_fn([rows, cols, nd * ny], |i, j, t| {
        *src.get(i * cols + j, t % nd, t / nd)
    })
}

pub fn rearrange(patch: &Patch, nd: usize) -> Result<RearrangedTensor> {
    let t_len = patch.time_len();
    if nd == 0 || t_len % nd != 0 {
        return Err(Error::shape(format!(
            "series length {t_len} is not a whole number of years of {nd} steps"
        )));
    }
    Ok(RearrangedTensor {
        data: rearrange_one(&patch.data, nd),
        omega: rearrange_one(&patch.omega, nd),
    })
}

pub fn inverse_rearrange(rt: &RearrangedTensor, rows: usize, cols: usize) -> Result<Patch> {
    let pixels = rt.shape()[0];
    if rows * cols != pixels {
        return Err(Error::shape(format!(
            "rearranged tensor holds {pixels} pixels, not {rows}x{cols}"
        )));
    }
    Ok(Patch {
        data: restore_one(&rt.data, rows, cols),
        omega: restore_one(&rt.omega, rows, cols),
    })
}

/// A scene: `height × width` pixels over `T = nd·ny` time steps.
///
/// Samples are stored in `(t, row, col)` order with `t` slowest, the same
/// layout as the on-disk container. Values are unit-scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Stack {
    height: usize,
    width: usize,
    nd: usize,
    ny: usize,
    /// Trailing NODATA steps appended to complete the final year.
    pad: usize,
    pub fill_value: f32,
    pub values: Vec<f32>,
    pub reliability: Vec<Reliability>,
}

impl Stack {
    /// Builds a stack from unpadded data, appending NODATA steps when the
    /// series length is not a multiple of `nd`.
    pub fn new(
        height: usize,
        width: usize,
        nd: usize,
        mut values: Vec<f32>,
        mut reliability: Vec<Reliability>,
        fill_value: f32,
    ) -> Result<Self> {
        let plane = height * width;
        if plane == 0 || nd == 0 {
            return Err(Error::param("stack dimensions and nd must be positive"));
        }
        if values.len() != reliability.len() {
            return Err(Error::shape(format!(
                "{} values but {} reliability codes",
                values.len(),
                reliability.len()
            )));
        }
        if values.is_empty() || values.len() % plane != 0 {
            return Err(Error::shape(format!(
                "{} samples do not form whole {height}x{width} frames",
                values.len()
            )));
        }
        let t_len = values.len() / plane;
        let pad = (nd - t_len % nd) % nd;
        values.resize((t_len + pad) * plane, fill_value);
        reliability.resize((t_len + pad) * plane, Reliability::NoData);
        Ok(Stack {
            height,
            width,
            nd,
            ny: (t_len + pad) / nd,
            pad,
            fill_value,
            values,
            reliability,
        })
    }

    /// Stack of the given shape with every sample NODATA.
    pub fn empty(height: usize, width: usize, nd: usize, ny: usize, fill_value: f32) -> Result<Self> {
        let n = height * width * nd * ny;
        Stack::new(height, width, nd, vec![fill_value; n], vec![Reliability::NoData; n], fill_value)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn nd(&self) -> usize {
        self.nd
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    /// Total time steps including padding.
    pub fn time_len(&self) -> usize {
        self.nd * self.ny
    }

    /// Time steps carrying real data.
    pub fn data_len(&self) -> usize {
        self.time_len() - self.pad
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn index(&self, t: usize, row: usize, col: usize) -> usize {
        (t * self.height + row) * self.width + col
    }

    /// Same shape, nd, pad and fill value.
    pub fn same_grid(&self, other: &Stack) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.nd == other.nd
            && self.ny == other.ny
            && self.pad == other.pad
    }

    pub fn series(&self, row: usize, col: usize) -> Vec<f32> {
        (0..self.time_len())
            .map(|t| self.values[self.index(t, row, col)])
            .collect()
    }

    pub fn reliability_series(&self, row: usize, col: usize) -> Vec<Reliability> {
        (0..self.time_len())
            .map(|t| self.reliability[self.index(t, row, col)])
            .collect()
    }

    pub fn set_series(&mut self, row: usize, col: usize, values: &[f32], codes: &[Reliability]) {
        for t in 0..self.time_len() {
            let o = self.index(t, row, col);
            self.values[o] = values[t];
            self.reliability[o] = codes[t];
        }
    }

    /// Number of valid samples per pixel, row-major over the plane.
    pub fn valid_counts(&self) -> Vec<usize> {
        let plane = self.pixels();
        let mut counts = vec![0; plane];
        for (o, r) in self.reliability.iter().enumerate() {
            if r.is_valid() {
                counts[o % plane] += 1;
            }
        }
        counts
    }

    /// Copy of the `rows × cols` block whose top-left pixel is `(row0, col0)`.
    pub fn extract_patch(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Patch {
        let t_len = self.time_len();
        let data = Tensor3::from_fn([rows, cols, t_len], |i, j, t| {
            self.values[self.index(t, row0 + i, col0 + j)] as f64
        });
        let omega = Tensor3::from_fn([rows, cols, t_len], |i, j, t| {
            self.reliability[self.index(t, row0 + i, col0 + j)].is_valid()
        });
        Patch { data, omega }
    }

    /// Writes `patch` values back at `(row0, col0)`; reliability is untouched.
    pub fn insert_patch(&mut self, row0: usize, col0: usize, patch: &Patch) {
        let [rows, cols, t_len] = patch.data.shape();
        for i in 0..rows {
            for j in 0..cols {
                for t in 0..t_len {
                    let o = self.index(t, row0 + i, col0 + j);
                    self.values[o] = *patch.data.get(i, j, t) as f32;
                }
            }
        }
    }

    /// Resets the padding region to fill value and NODATA.
    pub(crate) fn clear_pad(&mut self) {
        let start = self.data_len() * self.pixels();
        for o in start..self.values.len() {
            self.values[o] = self.fill_value;
            self.reliability[o] = Reliability::NoData;
        }
    }
}
