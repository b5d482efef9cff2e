use super::params::expect_rank4;
use crate::error::{shape_err, Result};
use crate::tensor::{BackwardOp, Scalar, Tape, Var};

struct MaxPoolBack {
    in_len: usize,
    argmax: Vec<usize>,
}

impl<T: Scalar> BackwardOp<T> for MaxPoolBack {
    fn backward(&self, g: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let mut gx = vec![T::zero(); self.in_len];
        for (&src, &gi) in self.argmax.iter().zip(g) {
            gx[src] += gi;
        }
        vec![Some(gx)]
    }
}

struct AvgPoolBack {
    plane: usize,
}

impl<T: Scalar> BackwardOp<T> for AvgPoolBack {
    fn backward(&self, g: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let inv = T::lit(1.0 / self.plane as f64);
        let gx = g
            .iter()
            .flat_map(|&gi| std::iter::repeat_n(gi * inv, self.plane))
            .collect();
        vec![Some(gx)]
    }
}

impl<T: Scalar> Tape<T> {
    /// Window maximum with implicit `-inf` padding.
    ///
    /// Ties resolve to the first position in row-major window order, which
    /// is also where the gradient is routed.
    pub fn max_pool2d(
        &mut self,
        x: &Var<T>,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Var<T>> {
        let [n, c, h, w] = expect_rank4(x.dims(), "max_pool2d")?;
        if kernel == 0 || stride == 0 {
            return Err(shape_err!("max_pool2d kernel and stride must be positive"));
        }
        if padding >= kernel {
            return Err(shape_err!("max_pool2d padding {padding} must be below kernel {kernel}"));
        }
        if h + 2 * padding < kernel || w + 2 * padding < kernel {
            return Err(shape_err!(
                "max_pool2d window {kernel} larger than input {h}x{w} (padding {padding})"
            ));
        }
        let oh = (h + 2 * padding - kernel) / stride + 1;
        let ow = (w + 2 * padding - kernel) / stride + 1;
        let xd = x.data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                let y0 = (oy * stride) as isize - padding as isize;
                for ox in 0..ow {
                    let x0 = (ox * stride) as isize - padding as isize;
                    let mut best = T::neg_infinity();
                    let mut best_idx = usize::MAX;
                    for ky in 0..kernel as isize {
                        let iy = y0 + ky;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kernel as isize {
                            let ix = x0 + kx;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let idx = base + iy as usize * w + ix as usize;
                            if best_idx == usize::MAX || xd[idx] > best {
                                best = xd[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_idx);
                }
            }
        }
        let in_len = x.numel();
        Ok(self.record("max_pool2d", &[x], vec![n, c, oh, ow], out, || {
            Box::new(MaxPoolBack { in_len, argmax })
        }))
    }

    /// Per-channel spatial mean, `[N,C,H,W] -> [N,C,1,1]`.
    pub fn global_avg_pool(&mut self, x: &Var<T>) -> Result<Var<T>> {
        let [n, c, h, w] = expect_rank4(x.dims(), "global_avg_pool")?;
        let plane = h * w;
        let inv = T::lit(1.0 / plane as f64);
        let out = x
            .data()
            .chunks_exact(plane)
            .map(|p| p.iter().copied().sum::<T>() * inv)
            .collect();
        Ok(self.record("global_avg_pool", &[x], vec![n, c, 1, 1], out, || {
            Box::new(AvgPoolBack { plane })
        }))
    }
}
