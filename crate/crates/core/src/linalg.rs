//! Small dense-matrix helpers shared by the assembly routines.

use nalgebra::{DMatrix, DMatrixViewMut};

use crate::scalar::Scalar;

/// `target += scale * source` on a mutable matrix view.
pub(crate) fn add_scaled_view<T: Scalar>(
    mut target: DMatrixViewMut<'_, T>,
    scale: T,
    source: &DMatrix<T>,
) {
    debug_assert_eq!(target.nrows(), source.nrows());
    debug_assert_eq!(target.ncols(), source.ncols());
    for c in 0..source.ncols() {
        for r in 0..source.nrows() {
            target[(r, c)] += scale * source[(r, c)];
        }
    }
}

/// `target += scale * source` on an owned matrix.
pub(crate) fn add_scaled<T: Scalar>(target: &mut DMatrix<T>, scale: T, source: &DMatrix<T>) {
    add_scaled_view(target.view_range_mut(.., ..), scale, source);
}
