use super::params::expect_rank4;
use crate::error::{contract_err, shape_err, Result};
use crate::tensor::{BackwardOp, Scalar, Tape, Var};

struct UpsampleBack {
    dims: [usize; 4],
    factor: usize,
}

impl<T: Scalar> BackwardOp<T> for UpsampleBack {
    fn backward(&self, g: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let [n, c, h, w] = self.dims;
        let f = self.factor;
        let ow = w * f;
        let mut gx = vec![T::zero(); n * c * h * w];
        for plane in 0..n * c {
            let src = &g[plane * h * f * ow..(plane + 1) * h * f * ow];
            let dst = &mut gx[plane * h * w..(plane + 1) * h * w];
            for oy in 0..h * f {
                let row = &src[oy * ow..(oy + 1) * ow];
                let drow = &mut dst[(oy / f) * w..(oy / f + 1) * w];
                for (ox, &v) in row.iter().enumerate() {
                    drow[ox / f] += v;
                }
            }
        }
        vec![Some(gx)]
    }
}

struct ConcatBack {
    n: usize,
    a_chunk: usize,
    b_chunk: usize,
}

impl<T: Scalar> BackwardOp<T> for ConcatBack {
    fn backward(&self, g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let stride = self.a_chunk + self.b_chunk;
        let split = |offset: usize, len: usize| -> Vec<T> {
            (0..self.n)
                .flat_map(|ni| g[ni * stride + offset..ni * stride + offset + len].iter().copied())
                .collect()
        };
        vec![
            needs[0].then(|| split(0, self.a_chunk)),
            needs[1].then(|| split(self.a_chunk, self.b_chunk)),
        ]
    }
}

impl<T: Scalar> Tape<T> {
    /// Nearest-neighbour upsampling: every pixel becomes a `factor x factor` block.
    pub fn upsample_nearest(&mut self, x: &Var<T>, factor: usize) -> Result<Var<T>> {
        if factor < 1 {
            return Err(contract_err!("upsample factor must be at least 1"));
        }
        let dims = expect_rank4(x.dims(), "upsample_nearest")?;
        let [n, c, h, w] = dims;
        let f = factor;
        let ow = w * f;
        let mut out = Vec::with_capacity(x.numel() * f * f);
        for plane in x.data().chunks_exact(h * w) {
            for oy in 0..h * f {
                let row = &plane[(oy / f) * w..(oy / f + 1) * w];
                out.extend((0..ow).map(|ox| row[ox / f]));
            }
        }
        Ok(self.record("upsample_nearest", &[x], vec![n, c, h * f, ow], out, || {
            Box::new(UpsampleBack { dims, factor })
        }))
    }

    /// Channels of `a` followed by channels of `b`.
    pub fn concat_channels(&mut self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        let [n, ca, h, w] = expect_rank4(a.dims(), "concat_channels")?;
        let [nb, cb, hb, wb] = expect_rank4(b.dims(), "concat_channels")?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(shape_err!(
                "concat_channels needs matching batch and spatial dims, got {:?} and {:?}",
                a.dims(),
                b.dims()
            ));
        }
        let (a_chunk, b_chunk) = (ca * h * w, cb * h * w);
        let mut out = Vec::with_capacity(a.numel() + b.numel());
        for ni in 0..n {
            out.extend_from_slice(&a.data()[ni * a_chunk..(ni + 1) * a_chunk]);
            out.extend_from_slice(&b.data()[ni * b_chunk..(ni + 1) * b_chunk]);
        }
        Ok(self.record("concat_channels", &[a, b], vec![n, ca + cb, h, w], out, || {
            Box::new(ConcatBack {
                n,
                a_chunk,
                b_chunk,
            })
        }))
    }
}
