use nalgebra::{DMatrix, SymmetricEigen};

/// Relative tolerance for treating a negative pivot as roundoff.
const PIVOT_TOL: f64 = 1e-12;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Lower-triangular `L` with `L Lᵀ = m` for symmetric positive semi-definite
/// input. Zero (or roundoff-negative) pivots produce zero columns instead of
/// failing, so singular covariances factor cleanly. Returns `None` when a
/// pivot is clearly negative.
pub fn psd_factor(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !d.is_finite() {
            return None;
        }
        if d < -PIVOT_TOL * scale * 1e3 {
            return None;
        }
        if d <= PIVOT_TOL * scale {
            // column stays zero; consistency requires the rest of it to vanish
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if s.abs() > 1e-6 * scale {
                    return None;
                }
            }
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Symmetrizes `p` and lifts any negative eigenvalue to a small positive
/// floor of `1e-9 · |trace| / n`. Positive semi-definite input comes back
/// symmetrized but otherwise untouched.
pub fn psd_repair(p: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = symmetrize(p);
    let n = sym.nrows();
    if n == 0 {
        return sym;
    }
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        return sym;
    }
    let floor = {
        let f = 1e-9 * sym.trace().abs() / n as f64;
        if f > 0.0 { f } else { 1e-12 }
    };
    let clamped = eig.eigenvalues.map(|v| if v < 0.0 { floor } else { v });
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    symmetrize(&rebuilt)
}

pub fn min_eigenvalue(p: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(p)).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn asymmetry(p: &DMatrix<f64>) -> f64 {
    (p - p.transpose()).abs().max()
}
