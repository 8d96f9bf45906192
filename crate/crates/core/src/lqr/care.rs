use super::Linearization;
use crate::error::{Error, Result};
use nalgebra::{Complex, DMatrix, DVector};

type C64 = Complex<f64>;

#[derive(Clone, Debug)]
pub struct LqrSolution {
    /// m × n
    pub k: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Eigenvalues of `A − BK` as `(re, im)`.
    pub closed_loop_eigenvalues: Vec<(f64, f64)>,
    /// Frobenius norm of `AᵀP + PA − PBR⁻¹BᵀP + Q`.
    pub residual: f64,
}

fn residual(lin: &Linearization, p: &DMatrix<f64>, q: &DMatrix<f64>, r_inv: &DMatrix<f64>) -> f64 {
    let a = &lin.a;
    let b = &lin.b;
    (a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q).norm()
}

/// Solves `AᵀX + XA + W = 0` through the Kronecker system.
pub fn lyapunov_equation(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    // vec(AᵀX + XA) = (I ⊗ Aᵀ + Aᵀ ⊗ I) vec(X) for column-major vec.
    let at = a.transpose();
    let mut big = DMatrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    big[(i * n + k, j * n + l)] += eye[(i, j)] * at[(k, l)] + at[(i, j)] * eye[(k, l)];
                }
            }
        }
    }
    let rhs = DVector::from_iterator(n * n, w.iter().map(|v| -v));
    let x = big
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singularity("Lyapunov equation has no unique solution".into()))?;
    let x = DMatrix::from_column_slice(n, n, x.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

/// Eigenvector of `h` for the eigenvalue estimate `lambda` by inverse
/// iteration in complex arithmetic.
fn eigenvector(h: &DMatrix<f64>, lambda: C64) -> Option<DVector<C64>> {
    let n = h.nrows();
    let scale = h.norm().max(1.0);
    let shift = lambda + C64::new(scale * 1e-10, scale * 1e-10);
    let m = DMatrix::from_fn(n, n, |i, j| {
        let v = C64::new(h[(i, j)], 0.0);
        if i == j {
            v - shift
        } else {
            v
        }
    });
    let lu = m.lu();
    let mut v = DVector::from_fn(n, |i, _| C64::new(1.0 + i as f64 * 0.1, 0.3));
    for _ in 0..8 {
        let w = lu.solve(&v)?;
        let nrm = w.norm();
        if !nrm.is_finite() || nrm == 0.0 {
            return None;
        }
        v = w / C64::new(nrm, 0.0);
    }
    Some(v)
}

/// Stabilizing solution of the CARE `AᵀP + PA − PBR⁻¹BᵀP + Q = 0` from
/// the stable invariant subspace of the Hamiltonian, followed by Newton
/// (Kleinman) refinement. `K = R⁻¹BᵀP`.
pub fn solve_care(lin: &Linearization, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<LqrSolution> {
    let n = lin.a.nrows();
    let m = lin.b.ncols();
    if lin.a.ncols() != n || lin.b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::Dimension("CARE: inconsistent A, B, Q, R shapes".into()));
    }
    let r_inv = if m == 0 {
        DMatrix::zeros(0, 0)
    } else {
        r.clone()
            .cholesky()
            .ok_or_else(|| Error::Riccati("R must be positive definite".into()))?
            .inverse()
    };
    let s = &lin.b * &r_inv * lin.b.transpose();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&lin.a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&s));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-lin.a.transpose()));

    let eig = h.clone().complex_eigenvalues();
    let tol = 1e-9 * h.norm().max(1.0);
    let stable: Vec<C64> = eig.iter().copied().filter(|l| l.re < -tol).collect();
    if stable.len() != n {
        return Err(Error::NotStabilizing(format!(
            "Hamiltonian has {} stable eigenvalues, need {n}",
            stable.len()
        )));
    }
    let mut u = DMatrix::<C64>::zeros(2 * n, n);
    for (c, &l) in stable.iter().enumerate() {
        let v = eigenvector(&h, l).ok_or_else(|| Error::Riccati("eigenvector iteration failed".into()))?;
        u.set_column(c, &v);
    }
    let u1 = u.rows(0, n).into_owned();
    let u2 = u.rows(n, n).into_owned();
    let u1_inv = u1
        .try_inverse()
        .ok_or_else(|| Error::NotStabilizing("stable subspace is not a graph (U₁ singular)".into()))?;
    let pc = u2 * u1_inv;
    let mut p = DMatrix::from_fn(n, n, |i, j| pc[(i, j)].re);
    p = (&p + p.transpose()) * 0.5;

    // Kleinman iterations polish the eigenvector solution.
    for _ in 0..3 {
        let k = &r_inv * lin.b.transpose() * &p;
        let acl = &lin.a - &lin.b * &k;
        let w = q + k.transpose() * r * &k;
        match lyapunov_equation(&acl, &w) {
            Ok(next) => {
                if residual(lin, &next, q, &r_inv) <= residual(lin, &p, q, &r_inv) {
                    p = next;
                } else {
                    break;
                }
            }
            Err(_) => break,
        }
    }
    let k = &r_inv * lin.b.transpose() * &p;
    let acl = &lin.a - &lin.b * &k;
    let eigs: Vec<(f64, f64)> = acl.clone().complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect();
    if eigs.iter().any(|e| e.0 >= 0.0) {
        return Err(Error::NotStabilizing(format!("A − BK has eigenvalues {eigs:?}")));
    }
    let res = residual(lin, &p, q, &r_inv);
    Ok(LqrSolution {
        k,
        p,
        q: q.clone(),
        r: r.clone(),
        closed_loop_eigenvalues: eigs,
        residual: res,
    })
}
