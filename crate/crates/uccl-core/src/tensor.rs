//! Dense row-major arrays in the few fixed ranks the pipeline uses.
//!
//! `Tensor4` is `(batch, channel, row, col)`, `Tensor3` drops the channel
//! axis, and `LabelMap` holds per-pixel class indices. Plane accessors hand
//! out contiguous `h*w` slices so the hot loops stay on slices.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub data: Vec<f64>,
    pub b: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Tensor4 {
    pub fn zeros(b: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor4 {
            data: vec![0.0; b * c * h * w],
            b,
            c,
            h,
            w,
        }
    }

    pub fn from_vec(data: Vec<f64>, b: usize, c: usize, h: usize, w: usize) -> Self {
        assert_eq!(data.len(), b * c * h * w, "tensor data length mismatch");
        Tensor4 { data, b, c, h, w }
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[((b * self.c + c) * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, b: usize, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.data[((b * self.c + c) * self.h + y) * self.w + x]
    }

    /// Contiguous `h*w` plane for `(batch, channel)`.
    #[inline]
    pub fn plane(&self, b: usize, c: usize) -> &[f64] {
        let start = (b * self.c + c) * self.h * self.w;
        &self.data[start..start + self.h * self.w]
    }

    #[inline]
    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [f64] {
        let start = (b * self.c + c) * self.h * self.w;
        &mut self.data[start..start + self.h * self.w]
    }

    pub fn same_shape(&self, other: &Tensor4) -> bool {
        self.b == other.b && self.c == other.c && self.h == other.h && self.w == other.w
    }

    /// Stack along the batch axis; channel and spatial dims must match.
    pub fn concat_batch(a: &Tensor4, b: &Tensor4) -> Tensor4 {
        assert!(
            a.c == b.c && a.h == b.h && a.w == b.w,
            "concat shape mismatch"
        );
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Tensor4::from_vec(data, a.b + b.b, a.c, a.h, a.w)
    }

    /// Copy of batches `[lo, hi)`.
    pub fn slice_batch(&self, lo: usize, hi: usize) -> Tensor4 {
        assert!(lo <= hi && hi <= self.b);
        let stride = self.c * self.h * self.w;
        Tensor4::from_vec(
            self.data[lo * stride..hi * stride].to_vec(),
            hi - lo,
            self.c,
            self.h,
            self.w,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub data: Vec<f64>,
    pub b: usize,
    pub h: usize,
    pub w: usize,
}

impl Tensor3 {
    pub fn zeros(b: usize, h: usize, w: usize) -> Self {
        Tensor3 {
            data: vec![0.0; b * h * w],
            b,
            h,
            w,
        }
    }

    pub fn from_vec(data: Vec<f64>, b: usize, h: usize, w: usize) -> Self {
        assert_eq!(data.len(), b * h * w, "tensor data length mismatch");
        Tensor3 { data, b, h, w }
    }

    #[inline]
    pub fn at(&self, b: usize, y: usize, x: usize) -> f64 {
        self.data[(b * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, b: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.data[(b * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn plane(&self, b: usize) -> &[f64] {
        let start = b * self.h * self.w;
        &self.data[start..start + self.h * self.w]
    }

    #[inline]
    pub fn plane_mut(&mut self, b: usize) -> &mut [f64] {
        let start = b * self.h * self.w;
        &mut self.data[start..start + self.h * self.w]
    }
}

/// Per-pixel class indices (or 0/1 flags when used as a mask).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub data: Vec<u8>,
    pub b: usize,
    pub h: usize,
    pub w: usize,
}

impl LabelMap {
    pub fn zeros(b: usize, h: usize, w: usize) -> Self {
        LabelMap {
            data: vec![0; b * h * w],
            b,
            h,
            w,
        }
    }

    pub fn from_vec(data: Vec<u8>, b: usize, h: usize, w: usize) -> Self {
        assert_eq!(data.len(), b * h * w, "label data length mismatch");
        LabelMap { data, b, h, w }
    }

    #[inline]
    pub fn at(&self, b: usize, y: usize, x: usize) -> u8 {
        self.data[(b * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, b: usize, y: usize, x: usize) -> &mut u8 {
        &mut self.data[(b * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn plane(&self, b: usize) -> &[u8] {
        let start = b * self.h * self.w;
        &self.data[start..start + self.h * self.w]
    }

    #[inline]
    pub fn plane_mut(&mut self, b: usize) -> &mut [u8] {
        let start = b * self.h * self.w;
        &mut self.data[start..start + self.h * self.w]
    }
}

/// Nearest-neighbor downsample with the top-left convention: the output
/// pixel `(y, x)` samples the input at `(y*fy, x*fx)`. Input dims must be
/// integer multiples of the output dims.
pub fn nn_downsample_labels(src: &LabelMap, h: usize, w: usize) -> LabelMap {
    assert!(src.h % h == 0 && src.w % w == 0, "non-divisible downsample");
    let (fy, fx) = (src.h / h, src.w / w);
    let mut out = LabelMap::zeros(src.b, h, w);
    for b in 0..src.b {
        for y in 0..h {
            for x in 0..w {
                *out.at_mut(b, y, x) = src.at(b, y * fy, x * fx);
            }
        }
    }
    out
}

/// Same convention as [`nn_downsample_labels`], for float maps.
pub fn nn_downsample_values(src: &Tensor3, h: usize, w: usize) -> Tensor3 {
    assert!(src.h % h == 0 && src.w % w == 0, "non-divisible downsample");
    let (fy, fx) = (src.h / h, src.w / w);
    let mut out = Tensor3::zeros(src.b, h, w);
    for b in 0..src.b {
        for y in 0..h {
            for x in 0..w {
                *out.at_mut(b, y, x) = src.at(b, y * fy, x * fx);
            }
        }
    }
    out
}

/// Nearest-neighbor upsample: output `(y, x)` reads input `(y/fy, x/fx)`.
/// Exact inverse of the top-left downsample on block-constant maps.
pub fn nn_upsample_values(src: &Tensor3, h: usize, w: usize) -> Tensor3 {
    assert!(h % src.h == 0 && w % src.w == 0, "non-divisible upsample");
    let (fy, fx) = (h / src.h, w / src.w);
    let mut out = Tensor3::zeros(src.b, h, w);
    for b in 0..src.b {
        for y in 0..h {
            for x in 0..w {
                *out.at_mut(b, y, x) = src.at(b, y / fy, x / fx);
            }
        }
    }
    out
}
