//! Bilinear resampling with half-pixel centres and clamped borders.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resample {
    Up2,
    Down2,
}

pub fn resample<T: Real>(input: &Tensor<T>, factor: Resample) -> Result<Tensor<T>> {
    match factor {
        Resample::Up2 => upsample2x(input),
        Resample::Down2 => downsample2x(input),
    }
}

/// ×2 downsampling. At exactly half resolution the bilinear sample sits on
/// the centre of each 2×2 block, i.e. a box average.
pub fn downsample2x<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.dims();
    if h < 2 || w < 2 || h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "downsample needs even dims of at least 2, got {h}x{w}"
        )));
    }
    let quarter = T::from_f64_lossy(0.25);
    Ok(Tensor::from_fn([n, c, h / 2, w / 2], |[b, ch, y, x]| {
        let (y0, x0) = (2 * y, 2 * x);
        (input.get(b, ch, y0, x0) + input.get(b, ch, y0, x0 + 1) + input.get(b, ch, y0 + 1, x0) + input.get(b, ch, y0 + 1, x0 + 1))
            * quarter
    }))
}

pub fn upsample2x<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    resize_bilinear(input, input.height() * 2, input.width() * 2)
}

/// One source-axis tap pair: `(i0, i1, weight of i1)`.
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let p = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = p.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, p - i0 as f64)
        })
        .collect()
}

/// General bilinear resize to `(out_h, out_w)`.
pub fn resize_bilinear<T: Real>(input: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.dims();
    if h == 0 || w == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::EmptyTensor("resize_bilinear"));
    }
    let ty = axis_taps(h, out_h);
    let tx = axis_taps(w, out_w);
    Ok(Tensor::from_fn([n, c, out_h, out_w], |[b, ch, y, x]| {
        let (y0, y1, fy) = ty[y];
        let (x0, x1, fx) = tx[x];
        let (fy, fx) = (T::from_f64_lossy(fy), T::from_f64_lossy(fx));
        let one = T::one();
        let top = input.get(b, ch, y0, x0) * (one - fx) + input.get(b, ch, y0, x1) * fx;
        let bottom = input.get(b, ch, y1, x0) * (one - fx) + input.get(b, ch, y1, x1) * fx;
        top * (one - fy) + bottom * fy
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_survives_up_and_down() {
        let x = Tensor::<f64>::full([1, 3, 5, 6], 0.5);
        let up = upsample2x(&x).unwrap();
        assert_eq!(up.dims(), [1, 3, 10, 12]);
        assert!(up.data().iter().all(|&v| v == 0.5));
        assert_eq!(downsample2x(&up).unwrap(), x);
    }

    #[test]
    fn box_average_of_half_split() {
        let x = Tensor::<f64>::from_vec([1, 1, 2, 2], vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(downsample2x(&x).unwrap().data(), &[0.5]);
    }

    #[test]
    fn downsample_rejects_odd_or_tiny() {
        assert!(downsample2x(&Tensor::<f32>::zeros([1, 1, 3, 4])).is_err());
        assert!(downsample2x(&Tensor::<f32>::zeros([1, 1, 1, 1])).is_err());
        assert!(resample(&Tensor::<f32>::zeros([1, 1, 4, 4]), Resample::Down2).is_ok());
    }

    #[test]
    fn upsample_weights_are_quarter_three_quarter() {
        let x = Tensor::<f64>::from_vec([1, 1, 1, 2], vec![0.0, 1.0]).unwrap();
        let up = upsample2x(&x).unwrap();
        assert_eq!(up.data(), &[0.0, 0.25, 0.75, 1.0, 0.0, 0.25, 0.75, 1.0]);
    }
}
