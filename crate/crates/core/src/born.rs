//! Born (single scattering) data from the ROM wave factors.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::wavesim::DataCube;

#[derive(Debug, Clone)]
pub struct BornInputs {
    /// Data simulated in the known kinematic model with q = 0.
    pub data_ref: DataCube,
    /// Wave factor from the measured data.
    pub l_q: DMatrix<f64>,
    /// Wave factor from the reference data.
    pub l_0: DMatrix<f64>,
    /// b^ROM of the reference ROM.
    pub b_rom0: DMatrix<f64>,
    pub tau: f64,
}

/// bᵀ · d/dε T_j(P0 + ε dP)|₀ · b for j < nsteps.
pub fn chebyshev_directional_derivative(
    p0: &DMatrix<f64>,
    dp: &DMatrix<f64>,
    b: &DMatrix<f64>,
    nsteps: usize,
) -> Result<Vec<DMatrix<f64>>> {
    let nm = p0.nrows();
    if p0.ncols() != nm || dp.shape() != (nm, nm) || b.nrows() != nm {
        return Err(Error::Argument("propagator, direction and b dimensions disagree".into()));
    }
    let m = b.ncols();
    let mut out = Vec::with_capacity(nsteps);
    let (mut u_prev, mut u_cur) = (b.clone(), p0 * b);
    let (mut w_prev, mut w_cur) = (DMatrix::zeros(nm, m), dp * b);
    for j in 0..nsteps {
        match j {
            0 => out.push(DMatrix::zeros(m, m)),
            1 => out.push(b.tr_mul(&w_cur)),
            _ => {
                let w_next = 2.0 * (dp * &u_cur) + 2.0 * (p0 * &w_cur) - &w_prev;
                let u_next = 2.0 * (p0 * &u_cur) - &u_prev;
                out.push(b.tr_mul(&w_next));
                w_prev = std::mem::replace(&mut w_cur, w_next);
                u_prev = std::mem::replace(&mut u_cur, u_next);
            }
        }
    }
    Ok(out)
}

/// D^Born_j = D_j(0) + b^ROMᵀ · d/dε T_j(P_ε)|₀ · b^ROM along
/// P_ε = I − (τ²/2) L_ε L_εᵀ with L_ε = L_0 + ε(L_q − L_0).
pub fn born_data(inputs: &BornInputs) -> Result<DataCube> {
    let (l_q, l_0) = (&inputs.l_q, &inputs.l_0);
    if l_q.shape() != l_0.shape() {
        return Err(Error::Argument(format!(
            "wave factors differ in shape: {:?} vs {:?}",
            l_q.shape(),
            l_0.shape()
        )));
    }
    let nm = l_0.nrows();
    if inputs.b_rom0.nrows() != nm {
        return Err(Error::Argument("reference b^ROM does not match the wave factors".into()));
    }
    let half = 0.5 * inputs.tau * inputs.tau;
    let dl = l_q - l_0;
    let cross = &dl * l_0.transpose();
    let dp = -(&cross + cross.transpose()) * half;
    let mut p0 = DMatrix::identity(nm, nm) - l_0 * l_0.transpose() * half;
    symmetrize(&mut p0);
    let nsteps = inputs.data_ref.nsteps();
    let deriv = chebyshev_directional_derivative(&p0, &dp, &inputs.b_rom0, nsteps)?;
    let d = inputs
        .data_ref
        .d
        .iter()
        .zip(deriv)
        .map(|(d0, w)| {
            let mut x = d0 + w;
            symmetrize(&mut x);
            x
        })
        .collect();
    DataCube::new(inputs.data_ref.tau, d)
}
