use crate::error::{Error, Result};
use crate::real::Real;

/// Dense 4-D array laid out as (batch, channels, height, width), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: [usize; 4], value: T) -> Self {
        Tensor {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::shape("Tensor::from_vec", n, data.len()));
        }
        Ok(Tensor { dims, data })
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for b in 0..dims[0] {
            for c in 0..dims[1] {
                for y in 0..dims[2] {
                    for x in 0..dims[3] {
                        data.push(f([b, c, y, x]));
                    }
                }
            }
        }
        Tensor { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.dims[2]
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.dims[3]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn offset(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        ((b * self.dims[1] + c) * self.dims[2] + y) * self.dims[3] + x
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.offset(b, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, y: usize, x: usize, v: T) {
        let o = self.offset(b, c, y, x);
        self.data[o] = v;
    }

    /// Same data, new dims of equal element count.
    pub fn reshape(self, dims: [usize; 4]) -> Result<Self> {
        Self::from_vec(dims, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    /// `self += s · other`
    pub fn add_scaled(&mut self, other: &Tensor<T>, s: T) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape("Tensor::add_scaled", self.dims, other.dims));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Tensor<T>) -> Result<T> {
        if self.dims != other.dims {
            return Err(Error::shape("Tensor::dot", self.dims, other.dims));
        }
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }

    /// Copy of the sub-window `[top, top+h) × [left, left+w)` of every plane.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Self> {
        if top + h > self.height() || left + w > self.width() {
            return Err(Error::RegionOutOfBounds {
                region: format!("({top},{left},{h},{w})"),
                height: self.height(),
                width: self.width(),
            });
        }
        let [n, c, _, _] = self.dims;
        Ok(Tensor::from_fn([n, c, h, w], |[b, ch, y, x]| self.get(b, ch, top + y, left + x)))
    }

    /// Replicate-pads on the bottom and right up to `(h, w)`.
    pub fn pad_replicate(&self, h: usize, w: usize) -> Self {
        let [n, c, sh, sw] = self.dims;
        Tensor::from_fn([n, c, h, w], |[b, ch, y, x]| self.get(b, ch, y.min(sh - 1), x.min(sw - 1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Tensor::<f32>::from_vec([1, 1, 2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::<f32>::from_vec([1, 1, 2, 2], vec![0.0; 4]).is_ok());
    }

    #[test]
    fn offset_is_batch_major() {
        let t = Tensor::<f64>::from_fn([2, 3, 4, 5], |[b, c, y, x]| (((b * 3 + c) * 4 + y) * 5 + x) as f64);
        for (i, v) in t.data().iter().enumerate() {
            assert_eq!(*v, i as f64);
        }
    }

    #[test]
    fn crop_and_pad() {
        let t = Tensor::<f64>::from_fn([1, 1, 3, 3], |[_, _, y, x]| (y * 3 + x) as f64);
        let c = t.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.data(), &[4.0, 5.0, 7.0, 8.0]);
        assert!(t.crop(2, 2, 2, 2).is_err());
        let p = t.pad_replicate(4, 4);
        assert_eq!(p.get(0, 0, 3, 3), 8.0);
        assert_eq!(p.get(0, 0, 3, 0), 6.0);
    }
}
