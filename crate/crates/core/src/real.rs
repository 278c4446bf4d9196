//! Floating-point abstraction shared by every kernel.
//!
//! Production runs use `f32`; gradient verification runs the same code in
//! `f64`. The only precision-specific piece is the dense matrix product,
//! which dispatches to the matching `matrixmultiply` routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Element type of a [`Tensor`](crate::Tensor).
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Short name used in reports (`"f32"` / `"f64"`).
    const NAME: &'static str;

    /// `c = a · b + beta · c` for row-major `a` (m × k), `b` (k × n), `c` (m × n)
    /// with explicit row strides. Column strides are always 1.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_row_stride: usize,
        a_col_stride: usize,
        b: &[Self],
        b_row_stride: usize,
        b_col_stride: usize,
        beta: Self,
        c: &mut [Self],
        c_row_stride: usize,
    );

    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to any Real")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, rs: usize, cs: usize) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) * rs + (cols - 1) * cs;
    assert!(last < len, "gemm operand too short: need {} elements, have {len}", last + 1);
}

macro_rules! impl_real {
    ($ty:ty, $name:literal, $gemm:path) => {
        impl Real for $ty {
            const NAME: &'static str = $name;

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_row_stride: usize,
                a_col_stride: usize,
                b: &[Self],
                b_row_stride: usize,
                b_col_stride: usize,
                beta: Self,
                c: &mut [Self],
                c_row_stride: usize,
            ) {
                check_extent(a.len(), m, k, a_row_stride, a_col_stride);
                check_extent(b.len(), k, n, b_row_stride, b_col_stride);
                check_extent(c.len(), m, n, c_row_stride, 1);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every operand extent was checked above against its slice.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        a_row_stride as isize,
                        a_col_stride as isize,
                        b.as_ptr(),
                        b_row_stride as isize,
                        b_col_stride as isize,
                        beta,
                        c.as_mut_ptr(),
                        c_row_stride as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, "f32", matrixmultiply::sgemm);
impl_real!(f64, "f64", matrixmultiply::dgemm);
