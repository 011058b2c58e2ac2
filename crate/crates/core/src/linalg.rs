//! Small dense helpers shared by the numerical modules.

use nalgebra::{ComplexField, DMatrix, DVector};

/// Induced infinity norm (maximum absolute row sum).
pub fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn vec_max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// `(m + mᵀ) / 2`
pub fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `(m - mᵀ) / 2`
pub fn skew_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m - m.transpose()) * 0.5
}

/// `‖mᵀm - I‖` measured entrywise.
pub fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    let n = m.ncols();
    max_abs(&(m.transpose() * m - DMatrix::<f64>::identity(n, n)))
}

/// Modified Gram-Schmidt on the rows of `m`, in order. Returns `None` when a
/// row collapses to (numerically) zero.
pub fn orthonormalize_rows(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut out = m.clone();
    for i in 0..out.nrows() {
        // two passes for stability
        for _ in 0..2 {
            for j in 0..i {
                let proj = out.row(i).dot(&out.row(j));
                let rj = out.row(j).clone_owned();
                let mut ri = out.row_mut(i);
                ri -= rj * proj;
            }
        }
        let norm = out.row(i).norm();
        if !(norm > 1e-8) {
            return None;
        }
        let mut ri = out.row_mut(i);
        ri /= norm;
    }
    Some(out)
}

/// Singular values of a square matrix in descending order, from the
/// symmetric eigenproblem of `[[0, M], [Mᵀ, 0]]`. Absolute accuracy is about
/// `ε‖M‖`, including for the smallest values.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut aug = DMatrix::zeros(2 * n, 2 * n);
    aug.view_mut((0, n), (n, n)).copy_from(m);
    aug.view_mut((n, 0), (n, n)).copy_from(&m.transpose());
    let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(aug).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev.truncate(n);
    ev.iter().map(|x| x.max(0.0)).collect()
}

/// One classical fourth-order Runge-Kutta step of `dx/dt = g x`.
pub fn rk4_step<T: ComplexField + Copy>(g: &DMatrix<T>, x: &DVector<T>, h: T) -> DVector<T> {
    let half = T::from_real(nalgebra::convert(0.5));
    let sixth = T::from_real(nalgebra::convert(1.0 / 6.0));
    let two = T::from_real(nalgebra::convert(2.0));
    let k1 = g * x;
    let k2 = g * (x + &k1 * (h * half));
    let k3 = g * (x + &k2 * (h * half));
    let k4 = g * (x + &k3 * h);
    x + (k1 + k2 * two + k3 * two + k4) * (h * sixth)
}

/// Splits `[0, t]` into steps of length `h`, with a shorter final step when
/// `t` is not a multiple of `h`.
pub fn step_schedule(t: f64, h: f64) -> Vec<f64> {
    if t <= 0.0 {
        return Vec::new();
    }
    let full = (t / h * (1.0 + 1e-12)).floor() as usize;
    let mut steps = vec![h; full];
    let rem = t - full as f64 * h;
    if rem > h * 1e-9 {
        steps.push(rem);
    } else if let Some(last) = steps.last_mut() {
        *last += rem;
    }
    steps
}
