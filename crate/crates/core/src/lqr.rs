//! Continuous algebraic Riccati solver and LQR gain synthesis.
//!
//! The stabilizing solution is obtained from the matrix sign function of the
//! Hamiltonian (Roberts' method) and refined with Newton-Kleinman steps
//! until the residual drops below tolerance. Dimensions here are small
//! (2m <= 16 states), so the dense Kronecker Lyapunov solve inside the
//! refinement is cheap.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statespace::PlatoonModel;

/// Residual tolerance relative to max(1, ||Q||_F).
pub const CARE_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrWeights {
    pub q_diag: Vec<f64>,
    pub r: f64,
}

impl LqrWeights {
    /// Uniform state penalty `q` over `dim` states.
    pub fn uniform(q: f64, r: f64, dim: usize) -> Self {
        Self {
            q_diag: vec![q; dim],
            r,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r <= 0.0 {
            return Err(Error::InvalidInput("LQR weight r must be > 0".into()));
        }
        if self.q_diag.iter().any(|&q| q < 0.0) || self.q_diag.iter().all(|&q| q == 0.0) {
            return Err(Error::InvalidInput(
                "LQR q_diag must be nonnegative with at least one positive entry".into(),
            ));
        }
        Ok(())
    }

    pub fn q_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(self.q_diag.clone()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub p_mat: DMatrix<f64>,
    /// Frobenius norm of A'P + PA - P B R^-1 B' P + Q.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gain {
    pub k_vec: RowDVector<f64>,
}

/// Largest eigenvalue real part.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn care_residual(a: &DMatrix<f64>, b: &DVector<f64>, q: &DMatrix<f64>, r: f64, p: &DMatrix<f64>) -> f64 {
    let pb = p * b;
    (a.transpose() * p + p * a - &pb * pb.transpose() / r + q).norm()
}

/// Solve AᵀX + XA = -W for symmetric W via the Kronecker-product system.
fn solve_lyapunov(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let sys = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_column_slice((-w).as_slice());
    let sol = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Synthesis("singular Lyapunov operator".into()))?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

/// Stabilizing solution of AᵀP + PA - P B R⁻¹ Bᵀ P + Q = 0.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    q: &DMatrix<f64>,
    r: f64,
) -> Result<RiccatiSolution> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n || q.shape() != (n, n) {
        return Err(Error::InvalidInput("CARE dimension mismatch".into()));
    }
    if r <= 0.0 {
        return Err(Error::InvalidInput("CARE requires r > 0".into()));
    }

    // Hamiltonian [[A, -B R^-1 B'], [-Q, -A']]
    let bbr = b * b.transpose() / r;
    let mut ham = DMatrix::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(a);
    ham.view_mut((0, n), (n, n)).copy_from(&(-&bbr));
    ham.view_mut((n, 0), (n, n)).copy_from(&(-q));
    ham.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    // matrix sign iteration with determinant scaling
    let mut z = ham;
    let mut converged = false;
    for _ in 0..100 {
        let lu = z.clone().lu();
        let det: f64 = lu.determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Synthesis(
                "Hamiltonian sign iteration hit a singular iterate (pair may not be stabilizable)"
                    .into(),
            ));
        }
        let z_inv = lu
            .try_inverse()
            .ok_or_else(|| Error::Synthesis("Hamiltonian iterate not invertible".into()))?;
        let c = det.abs().powf(1.0 / (2.0 * n as f64));
        let z_next = (&z / c + z_inv * c) * 0.5;
        let delta = (&z_next - &z).norm() / z_next.norm().max(1.0);
        z = z_next;
        if delta < 1e-12 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Synthesis(
            "matrix sign iteration did not converge".into(),
        ));
    }

    // stable subspace: (Z + I) [I; P] = 0, solved in least squares
    let z11 = z.view((0, 0), (n, n)) + DMatrix::<f64>::identity(n, n);
    let z12 = z.view((0, n), (n, n)).into_owned();
    let z21 = z.view((n, 0), (n, n)).into_owned();
    let z22 = z.view((n, n), (n, n)) + DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&z12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&z22);
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-z11));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-z21));
    let svd = lhs.svd(true, true);
    let p0 = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Synthesis(format!("stable-subspace solve failed: {e}")))?;
    let mut p = (&p0 + p0.transpose()) * 0.5;

    // Newton-Kleinman refinement
    let tol = CARE_RESIDUAL_TOL * q.norm().max(1.0);
    let mut residual = care_residual(a, b, q, r, &p);
    for _ in 0..20 {
        if residual <= tol {
            break;
        }
        let k = (b.transpose() * &p / r).transpose(); // column vector
        let a_cl = a - b * k.transpose();
        if spectral_abscissa(&a_cl) >= 0.0 {
            return Err(Error::Synthesis(
                "Newton-Kleinman iterate lost the stabilizing property".into(),
            ));
        }
        let w = q + &k * k.transpose() * r;
        p = solve_lyapunov(&a_cl, &w)?;
        residual = care_residual(a, b, q, r, &p);
    }
    if residual > tol {
        return Err(Error::Synthesis(format!(
            "CARE residual {residual:.3e} above tolerance {tol:.3e}"
        )));
    }
    Ok(RiccatiSolution { p_mat: p, residual })
}

/// Feedback gain K = R⁻¹BᵀP for the control law u = -Kx. The closed loop
/// A - BK is verified Hurwitz before returning.
pub fn feedback_gain(
    sol: &RiccatiSolution,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    r: f64,
) -> Result<Gain> {
    let k_vec = RowDVector::from_iterator(
        b.len(),
        (b.transpose() * &sol.p_mat / r).iter().copied(),
    );
    let a_cl = a - b * &k_vec;
    let abscissa = spectral_abscissa(&a_cl);
    // zero gain on an already-Hurwitz plant is fine; anything synthesized
    // from a nonzero P must stabilize
    if k_vec.norm() > 0.0 || sol.p_mat.norm() > 0.0 {
        if abscissa >= 0.0 {
            return Err(Error::Synthesis(format!(
                "closed loop not Hurwitz: spectral abscissa {abscissa:.3e}"
            )));
        }
    } else if abscissa >= 0.0 {
        return Err(Error::Synthesis(
            "zero gain on a non-Hurwitz plant".into(),
        ));
    }
    Ok(Gain { k_vec })
}

/// Closed-loop matrix A - B k.
pub fn closed_loop(model: &PlatoonModel, gain: &Gain) -> Result<DMatrix<f64>> {
    if gain.k_vec.len() != model.a.ncols() {
        return Err(Error::InvalidInput(format!(
            "gain length {} does not match state dimension {}",
            gain.k_vec.len(),
            model.a.ncols()
        )));
    }
    Ok(&model.a - &model.b * &gain.k_vec)
}

/// Full synthesis for one platoon model: CARE, gain, closed loop.
pub fn synthesize(model: &PlatoonModel, weights: &LqrWeights) -> Result<(Gain, DMatrix<f64>)> {
    weights.validate()?;
    if weights.q_diag.len() != model.a.nrows() {
        return Err(Error::InvalidInput(format!(
            "q_diag length {} does not match state dimension {}",
            weights.q_diag.len(),
            model.a.nrows()
        )));
    }
    let q = weights.q_matrix();
    let sol = solve_care(&model.a, &model.b, &q, weights.r)?;
    let gain = feedback_gain(&sol, &model.a, &model.b, weights.r)?;
    let a_cl = closed_loop(model, &gain)?;
    Ok((gain, a_cl))
}
