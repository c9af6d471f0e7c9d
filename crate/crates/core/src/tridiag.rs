//! Thomas algorithm for symmetric tridiagonal systems.

/// Solves `A x = rhs` in place for a symmetric tridiagonal `A` with main
/// diagonal `diag` and off-diagonal `off` (`off[i]` couples rows `i`, `i+1`).
///
/// No pivoting: callers guarantee diagonal dominance.
pub fn solve_symmetric(diag: &[f64], off: &[f64], rhs: &mut [f64]) {
    let m = diag.len();
    assert_eq!(rhs.len(), m, "rhs length");
    assert_eq!(off.len() + 1, m.max(1), "off-diagonal length");
    if m == 0 {
        return;
    }
    let mut c = vec![0.0; m];
    let mut beta = diag[0];
    assert!(beta != 0.0, "singular tridiagonal system");
    rhs[0] /= beta;
    for i in 1..m {
        c[i - 1] = off[i - 1] / beta;
        beta = diag[i] - off[i - 1] * c[i - 1];
        assert!(beta != 0.0, "singular tridiagonal system");
        rhs[i] = (rhs[i] - off[i - 1] * rhs[i - 1]) / beta;
    }
    for i in (0..m - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}
