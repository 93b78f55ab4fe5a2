//! Dense row-major tensors of ring elements and the local kernels (matmul,
//! im2col convolution) that every party runs on its own share components.
//! Convolution inputs are channel-major `(C, H, W)`.

use serde::{Deserialize, Serialize};

use crate::error::ShapeError;
use crate::ring::{Ring, RingElem};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<RingElem>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<RingElem>) -> Result<Self, ShapeError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(ShapeError::Length {
                shape,
                expected,
                got: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], v: RingElem) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn vector(data: Vec<RingElem>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[RingElem] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [RingElem] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<RingElem> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Same elements under a new shape.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor, ShapeError> {
        Tensor::new(shape.to_vec(), self.data.clone())
    }

    pub fn check_same_shape(&self, other: &Tensor) -> Result<(), ShapeError> {
        if self.shape != other.shape {
            return Err(ShapeError::Mismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn add(&self, ring: Ring, other: &Tensor) -> Result<Tensor, ShapeError> {
        self.zip(other, |a, b| ring.add(a, b))
    }

    pub fn sub(&self, ring: Ring, other: &Tensor) -> Result<Tensor, ShapeError> {
        self.zip(other, |a, b| ring.sub(a, b))
    }

    pub fn mul_elem(&self, ring: Ring, other: &Tensor) -> Result<Tensor, ShapeError> {
        self.zip(other, |a, b| ring.mul(a, b))
    }

    pub fn neg(&self, ring: Ring) -> Tensor {
        self.map(|a| ring.neg(a))
    }

    pub fn map(&self, f: impl Fn(RingElem) -> RingElem) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&a| f(a)).collect(),
        }
    }

    pub fn zip(
        &self,
        other: &Tensor,
        f: impl Fn(RingElem, RingElem) -> RingElem,
    ) -> Result<Tensor, ShapeError> {
        self.check_same_shape(other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

/// A tensor of bits, one byte per bit (values 0 or 1).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitTensor {
    shape: Vec<usize>,
    data: Vec<u8>,
}

impl BitTensor {
    pub fn new(shape: Vec<usize>, data: Vec<u8>) -> Result<Self, ShapeError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(ShapeError::Length {
                shape,
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            shape,
            data: data.into_iter().map(|b| b & 1).collect(),
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn xor(&self, other: &BitTensor) -> Result<BitTensor, ShapeError> {
        if self.shape != other.shape {
            return Err(ShapeError::Mismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(BitTensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a ^ b).collect(),
        })
    }

    pub fn not(&self) -> BitTensor {
        BitTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|b| b ^ 1).collect(),
        }
    }
}

/// 2-D convolution geometry. `groups == in_ch == out_ch` is a depthwise
/// convolution; a 1x1 kernel with `groups == 1` is pointwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvGeom {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvGeom {
    pub fn standard(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding,
            groups: 1,
        }
    }

    pub fn depthwise(channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            in_ch: channels,
            out_ch: channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding,
            groups: channels,
        }
    }

    pub fn pointwise(in_ch: usize, out_ch: usize) -> Self {
        Self::standard(in_ch, out_ch, 1, 1, 0)
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        let bad = |m: &str| Err(ShapeError::Geometry(m.to_string()));
        if self.in_ch == 0 || self.out_ch == 0 || self.kernel_h == 0 || self.kernel_w == 0 {
            return bad("zero-sized channel or kernel dimension");
        }
        if self.stride == 0 {
            return bad("stride must be positive");
        }
        if self.groups == 0 || self.in_ch % self.groups != 0 || self.out_ch % self.groups != 0 {
            return bad("groups must divide both channel counts");
        }
        Ok(())
    }

    pub fn in_per_group(&self) -> usize {
        self.in_ch / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_ch / self.groups
    }

    /// Weight count for layout `[out_ch, in_ch / groups, kh, kw]`.
    pub fn weight_len(&self) -> usize {
        self.out_ch * self.in_per_group() * self.kernel_h * self.kernel_w
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize), ShapeError> {
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if ph < self.kernel_h || pw < self.kernel_w {
            return Err(ShapeError::Geometry(format!(
                "kernel {}x{} larger than padded input {}x{}",
                self.kernel_h, self.kernel_w, ph, pw
            )));
        }
        Ok((
            (ph - self.kernel_h) / self.stride + 1,
            (pw - self.kernel_w) / self.stride + 1,
        ))
    }

    /// Output shape `[out_ch, oh, ow]` for an input of shape `[in_ch, h, w]`.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, ShapeError> {
        self.validate()?;
        if input.len() != 3 || input[0] != self.in_ch {
            return Err(ShapeError::Geometry(format!(
                "expected input [{}, H, W], got {:?}",
                self.in_ch, input
            )));
        }
        let (oh, ow) = self.output_hw(input[1], input[2])?;
        Ok(vec![self.out_ch, oh, ow])
    }
}

/// `a[m x k] * b[k x n]` in the ring.
pub fn matmul(ring: Ring, a: &[RingElem], b: &[RingElem], m: usize, k: usize, n: usize) -> Vec<RingElem> {
    assert_eq!(a.len(), m * k, "lhs length");
    assert_eq!(b.len(), k * n, "rhs length");
    // Wrapping arithmetic mod 2^64 reduces correctly to any 2^l.
    let mut out = vec![0u64; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o = o.wrapping_add(av.wrapping_mul(bv));
            }
        }
    }
    out.iter_mut().for_each(|v| *v = ring.reduce(*v));
    out
}

/// Unfold channels `c0..c0+channels` of a `(C, H, W)` input into columns
/// `[channels * kh * kw, oh * ow]`, zero-padding the border.
pub fn im2col(
    x: &[RingElem],
    h: usize,
    w: usize,
    c0: usize,
    channels: usize,
    geom: &ConvGeom,
    oh: usize,
    ow: usize,
) -> Vec<RingElem> {
    let (kh, kw) = (geom.kernel_h, geom.kernel_w);
    let cols = oh * ow;
    let mut out = vec![0u64; channels * kh * kw * cols];
    for c in 0..channels {
        let plane = &x[(c0 + c) * h * w..(c0 + c + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (c * kh + ki) * kw + kj;
                let dst = &mut out[row * cols..(row + 1) * cols];
                for oy in 0..oh {
                    let iy = (oy * geom.stride + ki) as isize - geom.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * geom.stride + kj) as isize - geom.padding as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        dst[oy * ow + ox] = plane[iy as usize * w + ix as usize];
                    }
                }
            }
        }
    }
    out
}

/// Grouped convolution via im2col + matmul. `weights` is laid out
/// `[out_ch, in_ch / groups, kh, kw]`.
pub fn conv2d(ring: Ring, weights: &[RingElem], x: &Tensor, geom: &ConvGeom) -> Result<Tensor, ShapeError> {
    let out_shape = geom.output_shape(x.shape())?;
    if weights.len() != geom.weight_len() {
        return Err(ShapeError::Length {
            shape: vec![geom.out_ch, geom.in_per_group(), geom.kernel_h, geom.kernel_w],
            expected: geom.weight_len(),
            got: weights.len(),
        });
    }
    let (h, w) = (x.shape()[1], x.shape()[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let cin = geom.in_per_group();
    let cout = geom.out_per_group();
    let kdim = cin * geom.kernel_h * geom.kernel_w;
    let mut data = Vec::with_capacity(geom.out_ch * oh * ow);
    for g in 0..geom.groups {
        let cols = im2col(x.data(), h, w, g * cin, cin, geom, oh, ow);
        let wg = &weights[g * cout * kdim..(g + 1) * cout * kdim];
        data.extend(matmul(ring, wg, &cols, cout, kdim, oh * ow));
    }
    Tensor::new(out_shape, data)
}
