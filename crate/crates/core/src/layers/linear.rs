use crate::bitcore::DenseTensor;
use crate::error::{Error, Result};
use crate::real::Real;

/// `y = x·Wᵀ + b` for `x: [N, in]`, `W: [out, in]`.
pub fn linear<T: Real>(x: &DenseTensor<T>, weights: &DenseTensor<T>, bias: Option<&DenseTensor<T>>) -> Result<DenseTensor<T>> {
    let (n, fin) = dims2(x)?;
    let (fout, win) = dims2(weights)?;
    if fin != win {
        return Err(Error::shape(format!("input width {fin}, weights expect {win}")));
    }
    let mut out = vec![T::zero(); n * fout];
    if let Some(b) = bias {
        if b.len() != fout {
            return Err(Error::shape("bias length mismatch"));
        }
        for row in out.chunks_mut(fout) {
            row.copy_from_slice(b.data());
        }
    }
    let beta = if bias.is_some() { T::one() } else { T::zero() };
    T::gemm(n, fin, fout, T::one(), x.data(), fin as isize, 1, weights.data(), 1, fin as isize, beta, &mut out, fout as isize, 1);
    DenseTensor::new(vec![n, fout], out)
}

pub struct LinearGrads<T> {
    pub dx: DenseTensor<T>,
    pub dw: DenseTensor<T>,
    pub dbias: Option<DenseTensor<T>>,
}

pub fn linear_backward<T: Real>(x: &DenseTensor<T>, weights: &DenseTensor<T>, has_bias: bool, dout: &DenseTensor<T>) -> Result<LinearGrads<T>> {
    let (n, fin) = dims2(x)?;
    let (fout, _) = dims2(weights)?;
    if dout.shape() != [n, fout] {
        return Err(Error::shape("upstream gradient shape mismatch"));
    }
    let mut dx = vec![T::zero(); n * fin];
    T::gemm(n, fout, fin, T::one(), dout.data(), fout as isize, 1, weights.data(), fin as isize, 1, T::zero(), &mut dx, fin as isize, 1);
    let mut dw = vec![T::zero(); fout * fin];
    T::gemm(fout, n, fin, T::one(), dout.data(), 1, fout as isize, x.data(), fin as isize, 1, T::zero(), &mut dw, fin as isize, 1);
    let dbias = has_bias.then(|| {
        let mut db = vec![T::zero(); fout];
        for row in dout.data().chunks(fout) {
            for (d, &g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }
        DenseTensor::new(vec![fout], db).expect("bias length")
    });
    Ok(LinearGrads {
        dx: DenseTensor::new(vec![n, fin], dx)?,
        dw: DenseTensor::new(vec![fout, fin], dw)?,
        dbias,
    })
}

fn dims2<T: Real>(t: &DenseTensor<T>) -> Result<(usize, usize)> {
    match *t.shape() {
        [a, b] => Ok((a, b)),
        _ => Err(Error::shape(format!("expected rank-2 tensor, got {:?}", t.shape()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_product() {
        let x = DenseTensor::new(vec![1, 2], vec![1.0f64, 2.0]).unwrap();
        let w = DenseTensor::new(vec![3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let b = DenseTensor::new(vec![3], vec![0.5, 0.5, 0.5]).unwrap();
        assert_eq!(linear(&x, &w, Some(&b)).unwrap().data(), &[1.5, 2.5, 3.5]);
    }
}
