//! Discrete inf-sup and Korn constants by dense generalized eigensolves.

use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{get_global_parallelism, Side};
use serde::{Deserialize, Serialize};

use super::dense::{check_size, complement_basis, generalized_eigen};
use super::AnalysisError;
use crate::assembly::{
    assemble_div, assemble_gradgrad, assemble_mass, assemble_pressure_mass,
    assemble_symmetric_gradient,
};
use crate::space::{PressureDiscretization, VelocityDiscretization};

/// Norm on the velocity side of the inf-sup quotient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VelocityNorm {
    /// `‖v‖²_{1,h} = |v|²_{1,h} + ‖v‖²₀`.
    #[default]
    Full,
    /// `|v|_{1,h}` only.
    Seminorm,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InfSupEstimate {
    /// `β_h = sqrt(λ_min)`.
    pub beta: f64,
    /// Lowest eigenvalues of `B H⁻¹ Bᵀ q = λ M_p q` (ascending).
    pub lowest: Vec<f64>,
    pub residual: f64,
    pub velocity_dofs: usize,
    pub pressure_dofs: usize,
    /// Whether the problem was restricted to mean-zero pressures.
    pub mean_zero: bool,
}

/// Smallest singular value of the divergence between the free velocity
/// DOFs and the pressure space, measured in `‖·‖_{1,h}` and `‖·‖₀`.
///
/// Mean-zero pressure spaces are handled by restricting to `{q : ∫q = 0}`.
pub fn estimate_inf_sup(
    v: &(impl VelocityDiscretization + ?Sized),
    p: &(impl PressureDiscretization + ?Sized),
    norm: VelocityNorm,
) -> Result<InfSupEstimate, AnalysisError> {
    let free = v.free_dofs();
    let nf = free.len();
    check_size(nf, "free velocity space")?;
    let mut np = p.num_dofs();
    check_size(np, "pressure space")?;
    let gram = match norm {
        VelocityNorm::Full => crate::sparse::CsrMatrix::linear_combination(&[
            (1.0, &assemble_gradgrad(v)),
            (1.0, &assemble_mass(v)),
        ]),
        VelocityNorm::Seminorm => assemble_gradgrad(v),
    };
    let h = gram.submatrix(&free, &free).to_dense();
    let all_p: Vec<usize> = (0..np).collect();
    let b = assemble_div(v, p).submatrix(&all_p, &free).to_dense();
    let mut mp = assemble_pressure_mass(p).to_dense();

    let par = get_global_parallelism();
    let llt = h
        .llt(Side::Lower)
        .map_err(|_| AnalysisError::NotPositiveDefinite)?;
    // Y = L⁻¹ Bᵀ, S = Yᵀ Y = B H⁻¹ Bᵀ
    let mut y = b.transpose().to_owned();
    solve_lower_triangular_in_place(llt.L(), y.as_mut(), par);
    let mut s = y.transpose() * &y;

    let mean_zero = p.mean_zero();
    if mean_zero {
        let c: Vec<f64> = (0..np).map(|i| (0..np).map(|j| mp[(i, j)]).sum()).collect();
        let q = complement_basis(&c);
        s = q.transpose() * &s * &q;
        mp = q.transpose() * &mp * &q;
        np -= 1;
    }
    let (values, residual) = generalized_eigen(&s, &mp)?;
    let lowest: Vec<f64> = values.iter().take(5).copied().collect();
    Ok(InfSupEstimate {
        beta: values[0].max(0.0).sqrt(),
        lowest,
        residual,
        velocity_dofs: nf,
        pressure_dofs: np,
        mean_zero,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KornEstimate {
    /// Smallest `λ` of `E v = λ K v`: `Σ_T ‖ε(v)‖²_T ≥ λ |v|²_{1,h}`.
    pub constant: f64,
    pub lowest: Vec<f64>,
    pub residual: f64,
    pub dofs: usize,
}

/// Discrete Korn constant on the free velocity DOFs.
pub fn estimate_korn(
    v: &(impl VelocityDiscretization + ?Sized),
) -> Result<KornEstimate, AnalysisError> {
    let free = v.free_dofs();
    check_size(free.len(), "free velocity space")?;
    if free.len() == v.num_dofs() {
        return Err(AnalysisError::NoDirichletBoundary);
    }
    let e = assemble_symmetric_gradient(v)
        .submatrix(&free, &free)
        .to_dense();
    let k = assemble_gradgrad(v).submatrix(&free, &free).to_dense();
    let (values, residual) = generalized_eigen(&e, &k)?;
    Ok(KornEstimate {
        constant: values[0].max(0.0),
        lowest: values.iter().take(5).copied().collect(),
        residual,
        dofs: free.len(),
    })
}

/// Inf-sup and Korn constants of one mesh.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityReport {
    pub mesh: String,
    pub h: f64,
    pub inf_sup: Option<InfSupEstimate>,
    pub korn: Option<KornEstimate>,
}
