//! Dense vector helpers shared by the sampler, the ETF builder and the
//! estimators. Vectors are plain `f64` slices; matrices are lists of columns.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

/// Orthonormalizes `columns` in place by modified Gram-Schmidt with one
/// reorthogonalization pass. Equivalent to the Q factor of a thin QR
/// decomposition whose R has a positive diagonal.
///
/// Returns `false` if the columns are numerically rank deficient.
pub fn orthonormalize(columns: &mut [Vec<f64>]) -> bool {
    for j in 0..columns.len() {
        let (done, rest) = columns.split_at_mut(j);
        let col = &mut rest[0];
        for _pass in 0..2 {
            for q in done.iter() {
                let r = dot(q, col);
                axpy(-r, q, col);
            }
        }
        let n = norm(col);
        if !(n > 1e-12) {
            return false;
        }
        scale(1.0 / n, col);
    }
    true
}

/// Applies the Householder reflection that maps `e_1` onto the unit vector
/// `target` to `x` in place.
pub fn reflect_e1_onto(target: &[f64], x: &mut [f64]) {
    // u = e_1 - target; H = I - 2 u u^T / (u^T u). H e_1 = target.
    let uu = 2.0 * (1.0 - target[0]);
    if uu <= 1e-300 {
        return;
    }
    let ux = x[0] - dot(target, x);
    let c = 2.0 * ux / uu;
    x[0] -= c;
    axpy(c, target, x);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormalize_produces_orthonormal_columns() {
        let mut cols = vec![vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]];
        assert!(orthonormalize(&mut cols));
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&cols[i], &cols[j]) - expect).abs() < 1e-14);
            }
        }
        // positive R diagonal: first column keeps its direction
        assert!(cols[0][0] > 0.0 && cols[0][1] > 0.0);
    }

    #[test]
    fn rank_deficient_columns_are_reported() {
        let mut cols = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(!orthonormalize(&mut cols));
    }

    #[test]
    fn reflection_maps_e1_to_target() {
        let target = [0.0, 0.6, 0.8];
        let mut x = [1.0, 0.0, 0.0];
        reflect_e1_onto(&target, &mut x);
        for (a, b) in x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-15);
        }
        // norm preserving
        let mut y = [0.3, -0.2, 0.5];
        let before = norm(&y);
        reflect_e1_onto(&target, &mut y);
        assert!((norm(&y) - before).abs() < 1e-15);
    }
}
