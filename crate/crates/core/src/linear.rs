//! Secure linear layers and truncation.
//!
//! Each party computes `Z_i = f(W_i, X_i) + f(W_i, X_{i+1}) + f(W_{i+1}, X_i)`
//! plus its bias component and a zero share, then reshares: one round.
//! Since `f` is linear in its second argument this is evaluated as
//! `f(W_i, X_i + X_{i+1}) + f(W_{i+1}, X_i)`.

use rand::Rng;

use crate::error::{ProtocolError, Result, ShapeError};
use crate::party::Party;
use crate::ring::{Ring, RingElem};
use crate::sharing::ops::{helper_deal_send, open_between, reshare};
use crate::sharing::{RandKind, RssShare};
use crate::tensor::{conv2d, matmul, ConvGeom, Tensor};
use crate::transport::{tags, PartyId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearKind {
    /// `W` is `[out, in]`; the input is flattened.
    Fc { in_features: usize, out_features: usize },
    /// `W` is `[out_ch, in_ch / groups, kh, kw]`; the input is `(C, H, W)`.
    Conv(ConvGeom),
}

impl LinearKind {
    pub fn weight_len(&self) -> usize {
        match self {
            LinearKind::Fc { in_features, out_features } => in_features * out_features,
            LinearKind::Conv(g) => g.weight_len(),
        }
    }

    pub fn bias_len(&self) -> usize {
        match self {
            LinearKind::Fc { out_features, .. } => *out_features,
            LinearKind::Conv(g) => g.out_ch,
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, ShapeError> {
        match self {
            LinearKind::Fc { in_features, out_features } => {
                let n: usize = input.iter().product();
                if n != *in_features {
                    return Err(ShapeError::Geometry(format!(
                        "fully connected layer expects {in_features} inputs, got {input:?}"
                    )));
                }
                Ok(vec![*out_features])
            }
            LinearKind::Conv(g) => g.output_shape(input),
        }
    }

    /// The plaintext map on ring values, without bias.
    pub fn apply(&self, ring: Ring, w: &[RingElem], x: &Tensor) -> Result<Tensor, ShapeError> {
        match self {
            LinearKind::Fc { in_features, out_features } => {
                self.output_shape(x.shape())?;
                if w.len() != in_features * out_features {
                    return Err(ShapeError::Length {
                        shape: vec![*out_features, *in_features],
                        expected: in_features * out_features,
                        got: w.len(),
                    });
                }
                Ok(Tensor::vector(matmul(ring, w, x.data(), *out_features, *in_features, 1)))
            }
            LinearKind::Conv(g) => conv2d(ring, w, x, g),
        }
    }

    /// Adds a per-output-channel bias to an output tensor.
    pub fn add_bias(&self, ring: Ring, z: &mut [RingElem], bias: &[RingElem]) {
        let per = z.len() / bias.len().max(1);
        for (k, v) in z.iter_mut().enumerate() {
            *v = ring.add(*v, bias[k / per]);
        }
    }
}

/// A linear layer's shared parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearParams {
    pub kind: LinearKind,
    pub weight: RssShare,
    pub bias: RssShare,
}

impl LinearParams {
    pub fn check(&self) -> Result<(), ShapeError> {
        if self.weight.len() != self.kind.weight_len() || self.bias.len() != self.kind.bias_len() {
            return Err(ShapeError::Geometry(format!(
                "parameters ({} weights, {} biases) do not fit {:?}",
                self.weight.len(),
                self.bias.len(),
                self.kind
            )));
        }
        Ok(())
    }
}

/// This party's additive component of `W·X + b`, before masking.
pub fn linear_local(ring: Ring, params: &LinearParams, x: &RssShare) -> Result<Tensor, ShapeError> {
    params.check()?;
    let (w0, w1) = (params.weight.first().data(), params.weight.second().data());
    let xs = x.first().add(ring, x.second())?;
    let mut z = params.kind.apply(ring, w0, &xs)?;
    let cross = params.kind.apply(ring, w1, x.first())?;
    z = z.add(ring, &cross)?;
    params.kind.add_bias(ring, z.data_mut(), params.bias.first().data());
    Ok(z)
}

/// `W·X + b` (fully connected) or `Conv(W, X) + b`. One round.
pub fn linear_infer(p: &mut Party, params: &LinearParams, x: &RssShare) -> Result<RssShare> {
    let z = linear_local(p.ring(), params, x)?;
    let shape = z.shape().to_vec();
    reshare(p, z.into_data(), &shape)
}

/// Convolution on a `(C, H, W)` share. One round.
pub fn conv2d_infer(p: &mut Party, params: &LinearParams, x: &RssShare) -> Result<RssShare> {
    if !matches!(params.kind, LinearKind::Conv(_)) {
        return Err(ProtocolError::Precondition("conv2d_infer needs convolution parameters".into()).into());
    }
    linear_infer(p, params, x)
}

/// Depthwise then pointwise convolution: two rounds, plus two per
/// truncation when `truncate_bits` is set.
pub fn separable_conv_infer(
    p: &mut Party,
    dw: &LinearParams,
    pw: &LinearParams,
    x: &RssShare,
    truncate_bits: Option<u32>,
) -> Result<RssShare> {
    let (LinearKind::Conv(dg), LinearKind::Conv(pg)) = (dw.kind, pw.kind) else {
        return Err(ProtocolError::Precondition("separable convolution needs two convolutions".into()).into());
    };
    if dg.groups != dg.in_ch || pg.kernel_h != 1 || pg.kernel_w != 1 || pg.groups != 1 {
        return Err(ProtocolError::Precondition("expected a depthwise then a pointwise convolution".into()).into());
    }
    let mut h = linear_infer(p, dw, x)?;
    if let Some(f) = truncate_bits {
        h = truncate(p, &h, f)?;
    }
    let mut y = linear_infer(p, pw, &h)?;
    if let Some(f) = truncate_bits {
        y = truncate(p, &y, f)?;
    }
    Ok(y)
}

/// Largest `|x|` (raw) that [`truncate`] handles: `2^(l-2)`.
pub fn truncation_budget(ring: Ring) -> u64 {
    1u64 << (ring.bits() - 2)
}

/// Divides by `2^f` with the result `⌊x/2^f⌋` or one less.
///
/// `P_2` samples `r < 2^(l-1)` and deals shares of `r` and `⌊r/2^f⌋`
/// (round 1). `x + r` is opened to `P_0` and `P_1` (round 2); shifted by
/// the public offset `2^(l-2)` it cannot wrap for `|x| < 2^(l-2)`, so
/// `⌊(x + 2^(l-2) + r)/2^f⌋ − ⌊r/2^f⌋ − 2^(l-2-f) − 1` is off by at most
/// one from `⌊x/2^f⌋`, never by a wrap.
pub fn truncate(p: &mut Party, x: &RssShare, f: u32) -> Result<RssShare> {
    let ring = p.ring();
    let l = ring.bits();
    if f == 0 || f + 2 > l {
        return Err(ProtocolError::Precondition(format!("cannot truncate {f} bits in a {l}-bit ring")).into());
    }
    let n = x.len();
    let shape = x.shape().to_vec();

    let vals: Option<Vec<RingElem>> = (p.id() == PartyId::P2).then(|| {
        let r: Vec<RingElem> = (0..n).map(|_| p.rng.gen_range(0..1u64 << (l - 1))).collect();
        r.iter().copied().chain(r.iter().map(|&v| v >> f)).collect()
    });
    let deal = helper_deal_send(p, RandKind::Trunc, tags::TRUNC_DEAL, vals.as_deref(), &[2 * n])?;
    let both = deal.recv(p)?;
    p.net.round();
    let split = |t: &Tensor| -> Result<(Tensor, Tensor), ShapeError> {
        Ok((
            Tensor::new(shape.clone(), t.data()[..n].to_vec())?,
            Tensor::new(shape.clone(), t.data()[n..].to_vec())?,
        ))
    };
    let (r0, rs0) = split(both.first())?;
    let (r1, rs1) = split(both.second())?;
    let r = RssShare::new(p.id(), r0, r1)?;
    let r_shift = RssShare::new(p.id(), rs0, rs1)?;

    let masked = x.add(ring, &r)?;
    let opened = open_between(p, &masked, PartyId::P0, tags::TRUNC_OPEN)?;
    let offset = ring.pow2(l - 2);
    let public = match opened {
        Some(c) => c.map(|v| {
            let c = ring.add(v, offset);
            ring.sub(ring.sub(c >> f, ring.pow2(l - 2 - f)), 1)
        }),
        None => Tensor::zeros(&shape),
    };
    // The public part is known to P_0 and P_1, the holders of component 1.
    Ok(r_shift.neg(ring).add_const_at(ring, 1, &public)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sharing::{reconstruct_all, share_secret, SetupSeeds};
    use crate::transport::{run_three_parties, Mode, RunOutput};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ring() -> Ring {
        Ring::new(32).unwrap()
    }

    fn run<T: Send>(seed: u64, f: impl Fn(&mut Party) -> Result<T> + Sync) -> RunOutput<T> {
        run_three_parties(SetupSeeds::from_u64(seed), ring(), Mode::InProcess, f).unwrap()
    }

    fn deal(t: &Tensor, seed: u64) -> [RssShare; 3] {
        share_secret(ring(), t, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn params(kind: LinearKind, w: &Tensor, b: &Tensor, seed: u64) -> [LinearParams; 3] {
        let (ws, bs) = (deal(w, seed), deal(b, seed + 1));
        [0, 1, 2].map(|i| LinearParams {
            kind,
            weight: ws[i].clone(),
            bias: bs[i].clone(),
        })
    }

    fn signed(vals: &[i64]) -> Tensor {
        Tensor::vector(vals.iter().map(|&v| ring().from_signed(v)).collect())
    }

    /// Plain integer matmul on signed values, reduced at the end.
    fn oracle_fc(w: &[i64], x: &[i64], b: &[i64], out: usize) -> Vec<u64> {
        let k = x.len();
        (0..out)
            .map(|o| {
                let acc: i128 = (0..k).map(|j| w[o * k + j] as i128 * x[j] as i128).sum::<i128>() + b[o] as i128;
                (acc.rem_euclid(1 << 32)) as u64
            })
            .collect()
    }

    #[test]
    fn identity_weights_return_input() {
        let kind = LinearKind::Fc { in_features: 3, out_features: 3 };
        let w = Tensor::vector(vec![1, 0, 0, 0, 1, 0, 0, 0, 1]);
        let ps = params(kind, &w, &Tensor::zeros(&[3]), 1);
        let x = signed(&[8192, -12288, 7]);
        let xs = deal(&x, 3);
        let out = run(1, |p| linear_infer(p, &ps[p.id().index()], &xs[p.id().index()]));
        assert_eq!(reconstruct_all(ring(), &out.outputs).unwrap(), x);
        assert!(out.stats.iter().all(|s| s.rounds() == 1 && s.bytes() == 12));
    }

    #[test]
    fn zero_weights_return_bias() {
        let kind = LinearKind::Fc { in_features: 2, out_features: 2 };
        let b = signed(&[-5, 77]);
        let ps = params(kind, &Tensor::zeros(&[4]), &b, 4);
        let xs = deal(&signed(&[3, 4]), 6);
        let out = run(2, |p| linear_infer(p, &ps[p.id().index()], &xs[p.id().index()]));
        assert_eq!(reconstruct_all(ring(), &out.outputs).unwrap(), b);
    }

    #[test]
    fn random_fc_matches_integer_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w: Vec<i64> = (0..12).map(|_| rng.gen_range(-20_000..20_000)).collect();
        let x: Vec<i64> = (0..3).map(|_| rng.gen_range(-20_000..20_000)).collect();
        let b: Vec<i64> = (0..4).map(|_| rng.gen_range(-1 << 26..1 << 26)).collect();
        let kind = LinearKind::Fc { in_features: 3, out_features: 4 };
        let ps = params(kind, &signed(&w), &signed(&b), 8);
        let xs = deal(&signed(&x), 10);
        let out = run(3, |p| linear_infer(p, &ps[p.id().index()], &xs[p.id().index()]));
        assert_eq!(reconstruct_all(ring(), &out.outputs).unwrap().data(), &oracle_fc(&w, &x, &b, 4)[..]);
    }

    /// Direct-loop convolution on signed integers.
    fn oracle_conv(w: &[i64], x: &[i64], b: &[i64], shape: [usize; 3], g: &ConvGeom) -> Vec<u64> {
        let [_, h, wd] = shape;
        let (oh, ow) = g.output_hw(h, wd).unwrap();
        let mut out = Vec::new();
        for o in 0..g.out_ch {
            let grp = o / g.out_per_group();
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[o] as i128;
                    for ci in 0..g.in_per_group() {
                        let c = grp * g.in_per_group() + ci;
                        for ky in 0..g.kernel_h {
                            for kx in 0..g.kernel_w {
                                let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                                let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let wv = w[((o * g.in_per_group() + ci) * g.kernel_h + ky) * g.kernel_w + kx];
                                acc += wv as i128 * x[(c * h + iy as usize) * wd + ix as usize] as i128;
                            }
                        }
                    }
                    out.push(acc.rem_euclid(1 << 32) as u64);
                }
            }
        }
        out
    }

    #[test]
    fn random_conv_matches_direct_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = ConvGeom::standard(1, 2, 3, 1, 1);
        let w: Vec<i64> = (0..g.weight_len()).map(|_| rng.gen_range(-9000..9000)).collect();
        let x: Vec<i64> = (0..64).map(|_| rng.gen_range(-9000..9000)).collect();
        let b = vec![100, -100];
        let ps = params(LinearKind::Conv(g), &signed(&w), &signed(&b), 12);
        let xs = deal(&signed(&x).reshape(&[1, 8, 8]).unwrap(), 14);
        let out = run(4, |p| conv2d_infer(p, &ps[p.id().index()], &xs[p.id().index()]));
        let y = reconstruct_all(ring(), &out.outputs).unwrap();
        assert_eq!(y.shape(), &[2, 8, 8]);
        assert_eq!(y.data(), &oracle_conv(&w, &x, &b, [1, 8, 8], &g)[..]);
    }

    #[test]
    fn unit_kernel_and_zero_input() {
        let g = ConvGeom::pointwise(2, 2);
        let ps = params(LinearKind::Conv(g), &Tensor::vector(vec![1, 0, 0, 1]), &signed(&[3, -4]), 15);
        let x = signed(&[1, 2, 3, 4, 5, 6, 7, 8]).reshape(&[2, 2, 2]).unwrap();
        let xs = deal(&x, 17);
        let zs = deal(&Tensor::zeros(&[2, 2, 2]), 18);
        let out = run(5, |p| {
            let i = p.id().index();
            Ok((linear_infer(p, &ps[i], &xs[i])?, linear_infer(p, &ps[i], &zs[i])?))
        });
        let [a, b, c] = out.outputs;
        let id = reconstruct_all(ring(), &[a.0, b.0, c.0]).unwrap();
        assert_eq!(id.data(), &signed(&[4, 5, 6, 7, 1, 2, 3, 4]).data()[..]);
        let bias = reconstruct_all(ring(), &[a.1, b.1, c.1]).unwrap();
        assert_eq!(bias.data(), &signed(&[3, 3, 3, 3, -4, -4, -4, -4]).data()[..]);
    }

    #[test]
    fn separable_is_composition_of_convs() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let dg = ConvGeom::depthwise(3, 3, 1, 1);
        let pg = ConvGeom::pointwise(3, 4);
        let dw: Vec<i64> = (0..dg.weight_len()).map(|_| rng.gen_range(-50..50)).collect();
        let pw: Vec<i64> = (0..pg.weight_len()).map(|_| rng.gen_range(-50..50)).collect();
        let x: Vec<i64> = (0..3 * 25).map(|_| rng.gen_range(-50..50)).collect();
        let db = vec![1, 2, 3];
        let pb = vec![-1, 0, 1, 2];
        let dps = params(LinearKind::Conv(dg), &signed(&dw), &signed(&db), 20);
        let pps = params(LinearKind::Conv(pg), &signed(&pw), &signed(&pb), 22);
        let xs = deal(&signed(&x).reshape(&[3, 5, 5]).unwrap(), 24);
        let out = run(6, |p| {
            let i = p.id().index();
            separable_conv_infer(p, &dps[i], &pps[i], &xs[i], None)
        });
        let mid: Vec<i64> = oracle_conv(&dw, &x, &db, [3, 5, 5], &dg)
            .into_iter()
            .map(|v| ring().to_signed(v))
            .collect();
        let want = oracle_conv(&pw, &mid, &pb, [3, 5, 5], &pg);
        assert_eq!(reconstruct_all(ring(), &out.outputs).unwrap().data(), &want[..]);
        assert!(out.stats.iter().all(|s| s.rounds() == 2));
    }

    #[test]
    fn truncation_examples() {
        let x = signed(&[16384, 0, -16384, 8191]);
        let xs = deal(&x, 30);
        for seed in 0..20 {
            let out = run(seed, |p| truncate(p, &xs[p.id().index()], 13));
            let y: Vec<i64> = reconstruct_all(ring(), &out.outputs)
                .unwrap()
                .data()
                .iter()
                .map(|&v| ring().to_signed(v))
                .collect();
            assert!(y[0] == 2 || y[0] == 1, "{y:?}");
            assert!(y[1] == 0 || y[1] == -1, "{y:?}");
            assert!(y[2] == -2 || y[2] == -3, "{y:?}");
            assert!(y[3] == 0 || y[3] == -1, "{y:?}");
            assert!(out.stats.iter().all(|s| s.rounds() == 2));
        }
    }

    #[test]
    fn truncation_within_one_ulp_of_shift() {
        let r = ring();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 10_000;
        // Products of two fixed-point values at scale 2^26, within the budget.
        let vals: Vec<i64> = (0..n)
            .map(|_| {
                let a = rng.gen_range(-3.9..3.9f64);
                let b = rng.gen_range(-3.9..3.9f64);
                ((a * 8192.0).round() as i64) * ((b * 8192.0).round() as i64)
            })
            .collect();
        assert!(vals.iter().all(|v| v.unsigned_abs() < truncation_budget(r)));
        let xs = deal(&signed(&vals), 32);
        let out = run(33, |p| truncate(p, &xs[p.id().index()], 13));
        let y = reconstruct_all(r, &out.outputs).unwrap();
        let bad = vals
            .iter()
            .zip(y.data())
            .filter(|(&v, &got)| (r.to_signed(got) - (v >> 13)).abs() > 1)
            .count();
        assert_eq!(bad, 0);
    }
}
