//! File formats: models, input tensors and run reports. All integers are
//! little-endian. Layouts are documented in `docs/FORMATS.md`.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::FormatError;
use crate::model::{BnParams, Layer, ModelGraph, NumericConfig};
use crate::ring::{Ring, RingElem};
use crate::tensor::{ConvGeom, Tensor};

pub const MODEL_MAGIC: [u8; 4] = *b"CBNN";
pub const MODEL_VERSION: u16 = 1;
pub const TENSOR_MAGIC: [u8; 4] = *b"CBRT";
const CHECKSUM_LEN: usize = 32;

/// How parameter payloads are stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadEncoding {
    /// IEEE-754 doubles; lossless.
    Real64,
    /// Ring words of `l/8` bytes at `2^f`; exact for values already on the grid.
    Raw,
}

mod tag {
    pub const FC: u8 = 1;
    pub const CONV: u8 = 2;
    pub const BATCHNORM: u8 = 3;
    pub const THRESHOLD: u8 = 4;
    pub const SIGN: u8 = 5;
    pub const RELU: u8 = 6;
    pub const MAXPOOL: u8 = 7;
    pub const SIGN_MAXPOOL: u8 = 8;
    pub const FLATTEN: u8 = 9;
}

const ENC_REAL64: u8 = 0;
const ENC_RAW: u8 = 1;

struct Writer {
    buf: Vec<u8>,
    cfg: NumericConfig,
    enc: PayloadEncoding,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) {
        self.buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn reals(&mut self, v: &[f64]) {
        self.u32(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }

    fn payload(&mut self, v: &[f64]) -> Result<(), FormatError> {
        match self.enc {
            PayloadEncoding::Real64 => {
                self.u8(ENC_REAL64);
                self.u8(0);
                self.reals(v);
            }
            PayloadEncoding::Raw => {
                let codec = self
                    .cfg
                    .codec()
                    .map_err(|e| FormatError::Invalid { offset: 0, msg: e.to_string() })?;
                let ring = codec.ring();
                self.u8(ENC_RAW);
                self.u8(codec.frac_bits() as u8);
                self.u32(v.len());
                for &x in v {
                    let r = codec.encode(x).map_err(|e| FormatError::Invalid {
                        offset: self.buf.len(),
                        msg: e.to_string(),
                    })?;
                    self.buf.extend_from_slice(&r.to_le_bytes()[..ring.bytes_per_elem()]);
                }
            }
        }
        Ok(())
    }
}

/// Serialises a model graph.
pub fn encode_model(g: &ModelGraph, enc: PayloadEncoding) -> Result<Vec<u8>, FormatError> {
    let mut w = Writer {
        buf: Vec::new(),
        cfg: g.config,
        enc,
    };
    w.buf.extend_from_slice(&MODEL_MAGIC);
    w.u16(MODEL_VERSION);
    let c = g.config;
    for v in [c.ring_bits, c.frac_bits, c.mask_bits, c.input_frac] {
        w.u8(v as u8);
    }
    w.u8(g.input_shape.len() as u8);
    g.input_shape.iter().for_each(|&d| w.u32(d));
    w.u32(g.layers.len());
    for l in &g.layers {
        match l {
            Layer::Fc {
                in_features,
                out_features,
                weight,
                bias,
            } => {
                w.u8(tag::FC);
                w.u32(*in_features);
                w.u32(*out_features);
                w.payload(weight)?;
                w.payload(bias)?;
            }
            Layer::Conv { geom, weight, bias } => {
                w.u8(tag::CONV);
                for v in [geom.in_ch, geom.out_ch, geom.kernel_h, geom.kernel_w, geom.stride, geom.padding, geom.groups] {
                    w.u32(v);
                }
                w.payload(weight)?;
                w.payload(bias)?;
            }
            Layer::BatchNorm(bn) => {
                w.u8(tag::BATCHNORM);
                w.f64(bn.eps);
                for v in [&bn.gamma, &bn.beta, &bn.mean, &bn.var] {
                    w.reals(v);
                }
            }
            Layer::Threshold { t } => {
                w.u8(tag::THRESHOLD);
                w.payload(t)?;
            }
            Layer::Sign => w.u8(tag::SIGN),
            Layer::Relu => w.u8(tag::RELU),
            Layer::MaxPool { kernel, stride } | Layer::SignMaxPool { kernel, stride } => {
                w.u8(if matches!(l, Layer::MaxPool { .. }) { tag::MAXPOOL } else { tag::SIGN_MAXPOOL });
                w.u32(*kernel);
                w.u32(*stride);
            }
            Layer::Flatten => w.u8(tag::FLATTEN),
        }
    }
    let digest = Sha256::digest(&w.buf);
    w.buf.extend_from_slice(&digest);
    Ok(w.buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.buf.len() - self.pos < n {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: n - (self.buf.len() - self.pos),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<usize, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn invalid(&self, at: usize, msg: impl Into<String>) -> FormatError {
        FormatError::Invalid { offset: at, msg: msg.into() }
    }
    /// A count that must fit in what is left, at `width` bytes per item.
    fn count(&mut self, width: usize) -> Result<usize, FormatError> {
        let at = self.pos;
        let n = self.u32()?;
        let left = self.buf.len() - self.pos;
        if n.saturating_mul(width) > left {
            return Err(FormatError::Truncated {
                offset: at + 4,
                needed: n.saturating_mul(width) - left,
            });
        }
        Ok(n)
    }
    fn reals(&mut self) -> Result<Vec<f64>, FormatError> {
        let n = self.count(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn payload(&mut self, ring: Ring, expected: Option<usize>) -> Result<Vec<f64>, FormatError> {
        let at = self.pos;
        let enc = self.u8()?;
        let scale = self.u8()?;
        let v = match enc {
            ENC_REAL64 => self.reals()?,
            ENC_RAW => {
                let width = ring.bytes_per_elem();
                let n = self.count(width)?;
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    let mut word = [0u8; 8];
                    word[..width].copy_from_slice(self.take(width)?);
                    let raw: RingElem = u64::from_le_bytes(word);
                    out.push(ring.to_signed(raw) as f64 / (scale as f64).exp2());
                }
                out
            }
            e => return Err(self.invalid(at, format!("unknown payload encoding {e}"))),
        };
        if let Some(n) = expected.filter(|&n| n != v.len()) {
            return Err(self.invalid(at, format!("payload holds {} values, geometry needs {n}", v.len())));
        }
        Ok(v)
    }
}

/// Parses a model file, checking the trailer checksum.
pub fn decode_model(buf: &[u8]) -> Result<ModelGraph, FormatError> {
    let mut r = Reader { buf, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MODEL_MAGIC {
        return Err(FormatError::BadMagic { found: magic });
    }
    let version = r.u16()?;
    if version != MODEL_VERSION {
        return Err(FormatError::Version(version));
    }
    let at = r.pos;
    let [ring_bits, frac_bits, mask_bits, input_frac] = [r.u8()?, r.u8()?, r.u8()?, r.u8()?].map(u32::from);
    let config = NumericConfig {
        ring_bits,
        frac_bits,
        mask_bits,
        input_frac,
    };
    config.validate().map_err(|e| r.invalid(at, e.to_string()))?;
    let ring = config.ring().map_err(|e| r.invalid(at, e.to_string()))?;
    let rank = r.u8()? as usize;
    let input_shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    let n_layers = r.count(1)?;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let at = r.pos;
        let layer = match r.u8()? {
            tag::FC => {
                let (i, o) = (r.u32()?, r.u32()?);
                let weight = r.payload(ring, Some(i * o))?;
                let bias = r.payload(ring, Some(o))?;
                Layer::Fc {
                    in_features: i,
                    out_features: o,
                    weight,
                    bias,
                }
            }
            tag::CONV => {
                let v = (0..7).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
                let geom = ConvGeom {
                    in_ch: v[0],
                    out_ch: v[1],
                    kernel_h: v[2],
                    kernel_w: v[3],
                    stride: v[4],
                    padding: v[5],
                    groups: v[6],
                };
                geom.validate().map_err(|e| r.invalid(at, e.to_string()))?;
                let weight = r.payload(ring, Some(geom.weight_len()))?;
                let bias = r.payload(ring, Some(geom.out_ch))?;
                Layer::Conv { geom, weight, bias }
            }
            tag::BATCHNORM => {
                let eps = r.f64()?;
                let (gamma, beta, mean, var) = (r.reals()?, r.reals()?, r.reals()?, r.reals()?);
                Layer::BatchNorm(BnParams {
                    gamma,
                    beta,
                    mean,
                    var,
                    eps,
                })
            }
            tag::THRESHOLD => {
                Layer::Threshold { t: r.payload(ring, None)? }
            }
            tag::SIGN => Layer::Sign,
            tag::RELU => Layer::Relu,
            t @ (tag::MAXPOOL | tag::SIGN_MAXPOOL) => {
                let (kernel, stride) = (r.u32()?, r.u32()?);
                if t == tag::MAXPOOL {
                    Layer::MaxPool { kernel, stride }
                } else {
                    Layer::SignMaxPool { kernel, stride }
                }
            }
            tag::FLATTEN => Layer::Flatten,
            t => return Err(r.invalid(at, format!("unknown layer tag {t}"))),
        };
        layers.push(layer);
    }
    let body_end = r.pos;
    let stored = r.take(CHECKSUM_LEN)?;
    if r.pos != buf.len() {
        return Err(r.invalid(r.pos, format!("{} trailing bytes", buf.len() - r.pos)));
    }
    if Sha256::digest(&buf[..body_end]).as_slice() != stored {
        return Err(FormatError::Checksum { start: 0, end: body_end });
    }
    let g = ModelGraph {
        config,
        input_shape,
        layers,
    };
    g.shapes().map_err(|e| FormatError::Invalid {
        offset: 0,
        msg: format!("layers do not chain: {e}"),
    })?;
    Ok(g)
}

pub fn save_model(path: &Path, g: &ModelGraph) -> Result<(), FormatError> {
    std::fs::write(path, encode_model(g, PayloadEncoding::Real64)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelGraph, FormatError> {
    decode_model(&std::fs::read(path)?)
}

/// A raw ring tensor dump: magic, `l`, rank, dims, then `l/8`-byte words.
pub fn encode_raw_tensor(ring: Ring, t: &Tensor) -> Vec<u8> {
    let mut out = TENSOR_MAGIC.to_vec();
    out.push(ring.bits() as u8);
    out.push(t.shape().len() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend(ring.encode_words(t.data()));
    out
}

pub fn decode_raw_tensor(buf: &[u8]) -> Result<(Ring, Tensor), FormatError> {
    let mut r = Reader { buf, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != TENSOR_MAGIC {
        return Err(FormatError::BadMagic { found: magic });
    }
    let bits = r.u8()? as u32;
    let ring = Ring::new(bits).map_err(|e| r.invalid(4, e.to_string()))?;
    let rank = r.u8()? as usize;
    let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    let n: usize = shape.iter().product();
    let at = r.pos;
    let words = ring.decode_words(r.take(n * ring.bytes_per_elem())?).map_err(|e| r.invalid(at, e.to_string()))?;
    if r.pos != buf.len() {
        return Err(r.invalid(r.pos, "trailing bytes"));
    }
    let t = Tensor::new(shape, words).map_err(|e| r.invalid(at, e.to_string()))?;
    Ok((ring, t))
}

/// Real values separated by commas, whitespace or newlines.
pub fn parse_csv_reals(text: &str) -> Result<Vec<f64>, FormatError> {
    let mut offset = 0;
    let mut out = Vec::new();
    for tok in text.split(|c: char| c == ',' || c.is_whitespace()) {
        if !tok.is_empty() {
            let v: f64 = tok.parse().map_err(|_| FormatError::Invalid {
                offset,
                msg: format!("not a number: {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(FormatError::Invalid {
                    offset,
                    msg: format!("non-finite value {tok}"),
                });
            }
            out.push(v);
        }
        offset += tok.len() + 1;
    }
    Ok(out)
}

/// An input as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum InputData {
    Real(Vec<f64>),
    Raw(Ring, Tensor),
}

/// Reads a raw tensor dump (by magic) or a CSV of reals.
pub fn load_input(path: &Path) -> Result<InputData, FormatError> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(&TENSOR_MAGIC) {
        let (ring, t) = decode_raw_tensor(&bytes)?;
        return Ok(InputData::Raw(ring, t));
    }
    let text = String::from_utf8(bytes).map_err(|e| FormatError::Invalid {
        offset: e.utf8_error().valid_up_to(),
        msg: "input is neither a raw tensor nor UTF-8 text".into(),
    })?;
    Ok(InputData::Real(parse_csv_reals(&text)?))
}

/// Serialises with object keys sorted and two-space indentation.
pub fn to_stable_json<T: Serialize>(v: &T) -> String {
    // serde_json::Value keeps objects in a BTreeMap, so keys come out sorted.
    let value = serde_json::to_value(v).expect("report types serialise");
    let mut s = serde_json::to_string_pretty(&value).expect("values serialise");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;

    #[test]
    fn model_round_trip() {
        for g in [zoo::mnistnet3_like(1, 8), zoo::relu_mlp(2, &[3, 4, 2]), zoo::exact_net(5)] {
            let bytes = encode_model(&g, PayloadEncoding::Real64).unwrap();
            assert_eq!(decode_model(&bytes).unwrap(), g);
        }
    }

    #[test]
    fn raw_payload_round_trips_grid_values() {
        let mut g = zoo::relu_mlp(2, &[3, 4, 2]);
        let codec = g.config.codec().unwrap();
        for l in &mut g.layers {
            if let Layer::Fc { weight, bias, .. } = l {
                for v in weight.iter_mut().chain(bias.iter_mut()) {
                    *v = codec.decode(codec.encode(*v).unwrap());
                }
            }
        }
        let bytes = encode_model(&g, PayloadEncoding::Raw).unwrap();
        assert_eq!(decode_model(&bytes).unwrap(), g);
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = encode_model(&zoo::relu_mlp(2, &[3, 4, 2]), PayloadEncoding::Real64).unwrap();
        let cut = &bytes[..bytes.len() - 40];
        assert!(matches!(decode_model(cut), Err(FormatError::Truncated { .. })));
        let mut flip = bytes.clone();
        flip[40] ^= 0x01;
        assert!(matches!(
            decode_model(&flip),
            Err(FormatError::Checksum { .. } | FormatError::Invalid { .. })
        ));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(decode_model(&magic), Err(FormatError::BadMagic { .. })));
        let mut ver = bytes;
        ver[4] = 9;
        assert_eq!(decode_model(&ver), Err(FormatError::Version(9)));
    }

    #[test]
    fn raw_tensor_round_trip() {
        let ring = Ring::new(16).unwrap();
        let t = Tensor::new(vec![2, 3], vec![0, 1, 2, 0xffff, 7, 9]).unwrap();
        let b = encode_raw_tensor(ring, &t);
        assert_eq!(decode_raw_tensor(&b).unwrap(), (ring, t));
        assert!(matches!(decode_raw_tensor(&b[..b.len() - 1]), Err(FormatError::Truncated { .. })));
    }

    #[test]
    fn csv_parsing() {
        assert_eq!(parse_csv_reals("1, -2.5\n3e-1 ").unwrap(), vec![1.0, -2.5, 0.3]);
        assert!(matches!(parse_csv_reals("1,x"), Err(FormatError::Invalid { offset: 2, .. })));
    }

    #[test]
    fn stable_json_sorts_keys() {
        #[derive(Serialize)]
        struct S {
            zeta: u8,
            alpha: u8,
        }
        assert_eq!(to_stable_json(&S { zeta: 1, alpha: 2 }), "{\n  \"alpha\": 2,\n  \"zeta\": 1\n}\n");
    }
}
