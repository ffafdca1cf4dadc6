//! Small dense helpers shared by the tensor and proximal code.

use nalgebra::{ComplexField, DMatrix};

/// Extends the orthonormal columns of `q` (n × r, r ≤ n) to a full n × n
/// unitary matrix by Gram–Schmidt against the standard basis.
pub(crate) fn complete_basis<T: ComplexField>(q: &DMatrix<T>) -> DMatrix<T> {
    let n = q.nrows();
    let mut cols: Vec<nalgebra::DVector<T>> = q.column_iter().map(|c| c.into_owned()).collect();
    let tol = nalgebra::convert::<f64, T::RealField>(1e-8);
    for e in 0..n {
        if cols.len() == n {
            break;
        }
        let mut v = nalgebra::DVector::<T>::zeros(n);
        v[e] = T::one();
        // two passes keep the result orthogonal to working precision
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dotc(&v);
                v.axpy(-proj, c, T::one());
            }
        }
        let norm = v.norm();
        if norm > tol {
            v.unscale_mut(norm);
            cols.push(v);
        }
    }
    DMatrix::from_columns(&cols)
}

/// ‖Q Qᴴ − I‖_max for a matrix with (supposedly) orthonormal rows.
pub fn row_orthonormality_error<T: ComplexField>(q: &DMatrix<T>) -> T::RealField {
    let gram = q * q.adjoint();
    let mut worst = nalgebra::zero::<T::RealField>();
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { T::one() } else { T::zero() };
            let d = (gram[(i, j)].clone() - target).modulus();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

pub(crate) fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}
