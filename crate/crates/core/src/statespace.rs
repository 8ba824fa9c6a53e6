//! Block assembly of the linearized mixed-platoon state-space matrices.
//!
//! State ordering stacks one `[spacing deviation; velocity deviation]` pair
//! per vehicle, front of traffic first. Under MPF the CAV occupies the last
//! block (pure double integrator driven by the control input); under MSL the
//! CAV occupies the first block and keeps the linearized car-following
//! dynamics with the control added on top.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::composition::Topology;
use crate::error::{Error, Result};
use crate::models::LinearCoeffs;

#[derive(Debug, Clone, PartialEq)]
pub struct PlatoonModel {
    /// System matrix, 2m x 2m, block lower bidiagonal.
    pub a: DMatrix<f64>,
    /// Control input column; single 1 at the CAV's velocity row.
    pub b: DVector<f64>,
    /// Disturbance input column; `[1; a3]` in the first block, zero elsewhere.
    pub h: DVector<f64>,
    /// Output row selecting the last vehicle's velocity deviation.
    pub c: RowDVector<f64>,
    pub m: usize,
    pub topology: Topology,
}

/// Assemble the platoon matrices for `m` vehicles under the given topology.
pub fn build_platoon_model(
    coeffs: &LinearCoeffs,
    m: usize,
    topology: Topology,
) -> Result<PlatoonModel> {
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "platoon size {m} < 2: size-1 entities are independent vehicles"
        )));
    }
    let (a1, a2, a3) = (coeffs.a1, coeffs.a2, coeffs.a3);
    let dim = 2 * m;
    let mut a = DMatrix::zeros(dim, dim);
    let mut b = DVector::zeros(dim);
    let mut h = DVector::zeros(dim);
    let mut c = RowDVector::zeros(dim);

    // own-dynamics block of a car-following vehicle
    let set_follower = |a: &mut DMatrix<f64>, k: usize| {
        a[(2 * k, 2 * k + 1)] = -1.0;
        a[(2 * k + 1, 2 * k)] = a1;
        a[(2 * k + 1, 2 * k + 1)] = -a2;
    };
    // coupling block from the predecessor's velocity
    let set_coupling = |a: &mut DMatrix<f64>, k: usize| {
        a[(2 * k, 2 * k - 1)] = 1.0;
        a[(2 * k + 1, 2 * k - 1)] = a3;
    };

    match topology {
        Topology::Mpf => {
            for k in 0..m - 1 {
                set_follower(&mut a, k);
            }
            for k in 1..m - 1 {
                set_coupling(&mut a, k);
            }
            // CAV tail block: spacing integrator only, acceleration = input
            let k = m - 1;
            a[(2 * k, 2 * k + 1)] = -1.0;
            a[(2 * k, 2 * k - 1)] = 1.0;
            b[dim - 1] = 1.0;
        }
        Topology::Msl => {
            for k in 0..m {
                set_follower(&mut a, k);
            }
            for k in 1..m {
                set_coupling(&mut a, k);
            }
            b[1] = 1.0;
        }
    }
    h[0] = 1.0;
    h[1] = a3;
    c[dim - 1] = 1.0;

    Ok(PlatoonModel {
        a,
        b,
        h,
        c,
        m,
        topology,
    })
}
