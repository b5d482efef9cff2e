use std::sync::Arc;

use super::params::{expect_rank4, Init, ParamId, ParamStore, Session};
use crate::error::{shape_err, Result};
use crate::tensor::{gemm, BackwardOp, MatRef, Scalar, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ConvGeom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn new(x: &[usize], wt: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let [n, c, h, w] = expect_rank4(x, "conv2d input")?;
        let [o, wc, kh, kw] = expect_rank4(wt, "conv2d weight")?;
        if wc != c {
            return Err(shape_err!("conv2d weight expects {wc} input channels, input has {c}"));
        }
        if stride == 0 {
            return Err(shape_err!("conv2d stride must be positive"));
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(shape_err!(
                "conv2d kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * pad,
                w + 2 * pad
            ));
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        Ok(Self {
            n,
            c,
            h,
            w,
            o,
            kh,
            kw,
            stride,
            pad,
            oh,
            ow,
        })
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }

    fn in_sample(&self) -> usize {
        self.c * self.h * self.w
    }

    fn out_dims(&self) -> Vec<usize> {
        vec![self.n, self.o, self.oh, self.ow]
    }

    /// Unfolds one sample into a `[C*KH*KW, OH*OW]` column matrix.
    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let l = self.out_plane();
        for ci in 0..self.c {
            let plane = &x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ci * self.kh + ki) * self.kw + kj;
                    let dst = &mut cols[row * l..(row + 1) * l];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        let seg = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        if iy < 0 || iy >= self.h as isize {
                            seg.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, v) in seg.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            *v = if ix < 0 || ix >= self.w as isize {
                                T::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatters columns back, summing overlaps.
    fn col2im<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let l = self.out_plane();
        for ci in 0..self.c {
            let plane = &mut dx[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ci * self.kh + ki) * self.kw + kj;
                    let src = &cols[row * l..(row + 1) * l];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for ox in 0..self.ow {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                dst[ix as usize] += src[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

struct ConvBack<T> {
    geom: ConvGeom,
    x: Arc<Vec<T>>,
    w: Arc<Vec<T>>,
    has_bias: bool,
}

impl<T: Scalar> BackwardOp<T> for ConvBack<T> {
    fn backward(&self, g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let geo = &self.geom;
        let (patch, l) = (geo.patch(), geo.out_plane());
        let want_x = needs[0];
        let want_w = needs[1];
        let mut gx = want_x.then(|| vec![T::zero(); self.x.len()]);
        let mut gw = want_w.then(|| vec![T::zero(); self.w.len()]);
        let mut cols = if geo.is_pointwise() {
            Vec::new()
        } else {
            vec![T::zero(); patch * l]
        };
        for ni in 0..geo.n {
            let gy = &g[ni * geo.o * l..(ni + 1) * geo.o * l];
            let xs = &self.x[ni * geo.in_sample()..(ni + 1) * geo.in_sample()];
            if let Some(gw) = gw.as_mut() {
                let col_ref = if geo.is_pointwise() {
                    xs
                } else {
                    geo.im2col(xs, &mut cols);
                    &cols
                };
                gemm(MatRef::new(gy, geo.o, l), MatRef::t(col_ref, patch, l), T::one(), gw);
            }
            if let Some(gx) = gx.as_mut() {
                let dst = &mut gx[ni * geo.in_sample()..(ni + 1) * geo.in_sample()];
                if geo.is_pointwise() {
                    gemm(MatRef::t(&self.w, geo.o, patch), MatRef::new(gy, geo.o, l), T::zero(), dst);
                } else {
                    gemm(MatRef::t(&self.w, geo.o, patch), MatRef::new(gy, geo.o, l), T::zero(), &mut cols);
                    geo.col2im(&cols, dst);
                }
            }
        }
        let mut out = vec![gx, gw];
        if self.has_bias {
            out.push(needs[2].then(|| {
                let mut gb = vec![T::zero(); geo.o];
                for ni in 0..geo.n {
                    for (oi, b) in gb.iter_mut().enumerate() {
                        let start = (ni * geo.o + oi) * l;
                        *b += g[start..start + l].iter().copied().sum::<T>();
                    }
                }
                gb
            }));
        }
        out
    }
}

impl<T: Scalar> Tape<T> {
    /// Zero-padded 2D cross-correlation. `x` is NCHW, `w` is OIHW, `b` is `[O]`.
    pub fn conv2d(
        &mut self,
        x: &Var<T>,
        w: &Var<T>,
        b: Option<&Var<T>>,
        stride: usize,
        padding: usize,
    ) -> Result<Var<T>> {
        let geo = ConvGeom::new(x.dims(), w.dims(), stride, padding)?;
        if let Some(b) = b {
            if b.dims() != [geo.o] {
                return Err(shape_err!("conv2d bias must be [{}], got {:?}", geo.o, b.dims()));
            }
        }
        let (patch, l) = (geo.patch(), geo.out_plane());
        let mut out = vec![T::zero(); geo.n * geo.o * l];
        let mut cols = if geo.is_pointwise() {
            Vec::new()
        } else {
            vec![T::zero(); patch * l]
        };
        let xd = x.data();
        for ni in 0..geo.n {
            let xs = &xd[ni * geo.in_sample()..(ni + 1) * geo.in_sample()];
            let col_ref = if geo.is_pointwise() {
                xs
            } else {
                geo.im2col(xs, &mut cols);
                &cols
            };
            let dst = &mut out[ni * geo.o * l..(ni + 1) * geo.o * l];
            gemm(MatRef::new(w.data(), geo.o, patch), MatRef::new(col_ref, patch, l), T::zero(), dst);
            if let Some(b) = b {
                for (oi, &bv) in b.data().iter().enumerate() {
                    dst[oi * l..(oi + 1) * l].iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.record("conv2d", &inputs, geo.out_dims(), out, || {
            Box::new(ConvBack {
                geom: geo,
                x: x.shared(),
                w: w.shared(),
                has_bias: b.is_some(),
            })
        }))
    }
}

/// Convolution layer; weights OIHW with He-uniform fan-in initialization.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Result<Self> {
        let fan_in = in_channels * kernel * kernel;
        let weight = store.register(
            format!("{name}.weight"),
            &[out_channels, in_channels, kernel, kernel],
            Init::HeUniform { fan_in },
            true,
        )?;
        let bias = if bias {
            Some(store.register(format!("{name}.bias"), &[out_channels], Init::Zeros, true)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        })
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        let w = s.param(self.weight);
        let b = self.bias.map(|id| s.param(id));
        s.tape.conv2d(x, &w, b.as_ref(), self.stride, self.padding)
    }

    pub fn output_size(&self, input: usize) -> usize {
        (input + 2 * self.padding - self.kernel) / self.stride + 1
    }
}
