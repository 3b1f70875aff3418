//! Dense per-pixel containers: scalar grids (depth, confidence, weights),
//! multi-channel grids (point maps, pixel maps) and validity masks.
//!
//! All grids are row-major with pixel index `p = row * width + col`;
//! multi-channel grids interleave channels per pixel. Library math runs in
//! f64; the on-disk format stores f32 and widens on read (see the io module).

use crate::error::{Error, Result};

/// Row-major H x W grid of f64 scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarGrid {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "scalar grid {}x{} expects {} values, got {}",
                height,
                width,
                height * width,
                values.len()
            )));
        }
        Ok(Self { height, width, values })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self { height, width, values: vec![value; height * width] }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
}

/// Row-major H x W grid of C-channel f64 vectors, channels interleaved:
/// element (p, c) lives at `values[p * channels + c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VecGrid {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl VecGrid {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::ShapeMismatch("vector grid needs at least one channel".into()));
        }
        if values.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "vector grid {}x{}x{} expects {} values, got {}",
                height,
                width,
                channels,
                height * width * channels,
                values.len()
            )));
        }
        Ok(Self { height, width, channels, values })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self { height, width, channels, values: vec![value; height * width * channels] }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.values[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn pixel(&self, p: usize) -> &[f64] {
        &self.values[p * self.channels..(p + 1) * self.channels]
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
}

/// Per-pixel validity flags. Pixels flagged false are excluded from every
/// reduction; grids may hold NaN there.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidMask {
    pub height: usize,
    pub width: usize,
    pub flags: Vec<bool>,
}

impl ValidMask {
    pub fn new(height: usize, width: usize, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "mask {}x{} expects {} flags, got {}",
                height,
                width,
                height * width,
                flags.len()
            )));
        }
        Ok(Self { height, width, flags })
    }

    pub fn all_valid(height: usize, width: usize) -> Self {
        Self { height, width, flags: vec![true; height * width] }
    }

    #[inline]
    pub fn is_set(&self, p: usize) -> bool {
        self.flags[p]
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> bool {
        self.flags[row * self.width + col]
    }

    pub fn count_valid(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// Indices of valid pixels in row-major order.
    pub fn valid_indices(&self) -> Vec<usize> {
        (0..self.flags.len()).filter(|&p| self.flags[p]).collect()
    }

    /// Elementwise AND of two masks of equal shape.
    pub fn intersect(&self, other: &ValidMask) -> Result<ValidMask> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::ShapeMismatch(format!(
                "mask {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        let flags = self
            .flags
            .iter()
            .zip(&other.flags)
            .map(|(&a, &b)| a && b)
            .collect();
        Ok(ValidMask { height: self.height, width: self.width, flags })
    }
}

/// Uniform read access for loss and alignment code that treats depth grids
/// as one-channel vector grids.
pub trait Grid {
    fn height(&self) -> usize;
    fn width(&self) -> usize;
    fn channels(&self) -> usize;
    /// Value at pixel index `p` (row-major), channel `ch`.
    fn value(&self, p: usize, ch: usize) -> f64;

    fn pixels(&self) -> usize {
        self.height() * self.width()
    }
}

impl Grid for ScalarGrid {
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
    fn channels(&self) -> usize {
        1
    }
    #[inline]
    fn value(&self, p: usize, _ch: usize) -> f64 {
        self.values[p]
    }
}

impl Grid for VecGrid {
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
    fn channels(&self) -> usize {
        self.channels
    }
    #[inline]
    fn value(&self, p: usize, ch: usize) -> f64 {
        self.values[p * self.channels + ch]
    }
}

impl<G: Grid> Grid for &G {
    fn height(&self) -> usize {
        (**self).height()
    }
    fn width(&self) -> usize {
        (**self).width()
    }
    fn channels(&self) -> usize {
        (**self).channels()
    }
    #[inline]
    fn value(&self, p: usize, ch: usize) -> f64 {
        (**self).value(p, ch)
    }
}

/// Checks that two grids share height, width and channel count.
pub(crate) fn check_same_shape<A: Grid, B: Grid>(a: &A, b: &B, what: &str) -> Result<()> {
    if a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels() {
        return Err(Error::ShapeMismatch(format!(
            "{what}: {}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    Ok(())
}

/// Checks that a grid and a mask share height and width.
pub(crate) fn check_mask_shape<A: Grid>(a: &A, mask: &ValidMask, what: &str) -> Result<()> {
    if a.height() != mask.height || a.width() != mask.width {
        return Err(Error::ShapeMismatch(format!(
            "{what}: grid {}x{} vs mask {}x{}",
            a.height(),
            a.width(),
            mask.height,
            mask.width
        )));
    }
    Ok(())
}
