//! Mutual information, conditional mutual information and the data-processing
//! check `I(A:S)` before vs. after `id_A ⊗ Ad_{U_SE}` and discarding `E`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::tensor::{
    self, haar_unitary_matrix, DensityMatrix, Factor, Operator, SpaceLayout, UnitaryOperator,
};

/// Entropy of the marginal on `keep` (nats).
pub fn marginal_entropy(rho: &Operator, keep: &[Factor]) -> Result<f64> {
    Ok(tensor::von_neumann_entropy(tensor::partial_trace(rho, keep)?.matrix()))
}

fn check_parts(layout: &SpaceLayout, parts: &[&[Factor]]) -> Result<()> {
    let mut seen: Vec<Factor> = Vec::new();
    for part in parts {
        if part.is_empty() {
            return Err(Error::InvalidLayout("empty part in split".into()));
        }
        for f in *part {
            layout.position(*f)?;
            if seen.contains(f) {
                return Err(Error::InvalidLayout(format!("factor {f} appears in two parts")));
            }
            seen.push(*f);
        }
    }
    Ok(())
}

/// `I(X:Y) = S(X) + S(Y) − S(XY)`; factors outside `x ∪ y` are traced out.
pub fn mutual_information(rho: &DensityMatrix, x: &[Factor], y: &[Factor]) -> Result<f64> {
    check_parts(rho.layout(), &[x, y])?;
    let xy: Vec<Factor> = x.iter().chain(y).copied().collect();
    let op = rho.operator();
    Ok(marginal_entropy(op, x)? + marginal_entropy(op, y)? - marginal_entropy(op, &xy)?)
}

/// `I(X:Z|Y) = S(XY) + S(YZ) − S(Y) − S(XYZ)`.
pub fn conditional_mutual_information_of(
    rho: &DensityMatrix,
    x: &[Factor],
    y: &[Factor],
    z: &[Factor],
) -> Result<f64> {
    check_parts(rho.layout(), &[x, y, z])?;
    let op = rho.operator();
    let xy: Vec<Factor> = x.iter().chain(y).copied().collect();
    let yz: Vec<Factor> = y.iter().chain(z).copied().collect();
    let xyz: Vec<Factor> = xy.iter().chain(z).copied().collect();
    Ok(marginal_entropy(op, &xy)? + marginal_entropy(op, &yz)?
        - marginal_entropy(op, y)?
        - marginal_entropy(op, &xyz)?)
}

/// `I(A:E|S)` of a state on `A ⊗ S ⊗ E`.
pub fn conditional_mutual_information(omega_ase: &DensityMatrix) -> Result<f64> {
    conditional_mutual_information_of(omega_ase, &[Factor::A], &[Factor::S], &[Factor::E])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoReport {
    /// `I(A:S)` of the input (nats).
    pub i_before: f64,
    /// `I(A:S)` after `id_A ⊗ Ad_{U_SE}`.
    pub i_after: f64,
    /// `i_before − i_after`; negative values violate data processing.
    pub delta: f64,
    pub cmi: Option<f64>,
}

fn ase_dims(omega_ase: &DensityMatrix) -> Result<(usize, usize, usize)> {
    let layout = omega_ase.layout();
    let order: Vec<Factor> = layout.factors().iter().map(|(f, _)| *f).collect();
    if order != [Factor::A, Factor::S, Factor::E] {
        return Err(Error::InvalidLayout(format!("expected factors A, S, E in that order, got {order:?}")));
    }
    Ok((layout.dim_of(Factor::A)?, layout.dim_of(Factor::S)?, layout.dim_of(Factor::E)?))
}

/// `id_A ⊗ Ad_U` applied to a state on `A ⊗ S ⊗ E`.
pub fn evolve_se(omega_ase: &DensityMatrix, u_se: &CMatrix) -> Result<DensityMatrix> {
    let (d_a, d_s, d_e) = ase_dims(omega_ase)?;
    if u_se.shape() != (d_s * d_e, d_s * d_e) {
        return Err(Error::DimensionMismatch(format!(
            "U_SE is {:?}, S⊗E has dimension {}",
            u_se.shape(),
            d_s * d_e
        )));
    }
    let u = linalg::kron(&linalg::identity(d_a), u_se);
    let after = &u * omega_ase.matrix() * u.adjoint();
    DensityMatrix::from_matrix(omega_ase.layout().clone(), linalg::hermitian_part(&after))
}

pub fn dpi_check(omega_ase: &DensityMatrix, u_se: &UnitaryOperator) -> Result<InfoReport> {
    dpi_check_matrix(omega_ase, u_se.matrix())
}

pub fn dpi_check_matrix(omega_ase: &DensityMatrix, u_se: &CMatrix) -> Result<InfoReport> {
    let after = evolve_se(omega_ase, u_se)?;
    let i_before = mutual_information(omega_ase, &[Factor::A], &[Factor::S])?;
    let i_after = mutual_information(&after, &[Factor::A], &[Factor::S])?;
    Ok(InfoReport {
        i_before,
        i_after,
        delta: i_before - i_after,
        cmi: Some(conditional_mutual_information(omega_ase)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpiSearch {
    pub draws: usize,
    pub best_delta: f64,
    pub best_draw: usize,
    /// `best_delta < threshold`. `false` means "not found", not a proof of
    /// Markovianity.
    pub violation_found: bool,
    pub threshold: f64,
}

/// Draw `draws` Haar unitaries on `S ⊗ E` and keep the most negative delta.
pub fn dpi_search<R: Rng + ?Sized>(
    omega_ase: &DensityMatrix,
    draws: usize,
    threshold: f64,
    rng: &mut R,
) -> Result<DpiSearch> {
    let (_, d_s, d_e) = ase_dims(omega_ase)?;
    let i_before = mutual_information(omega_ase, &[Factor::A], &[Factor::S])?;
    let mut best = f64::INFINITY;
    let mut best_draw = 0;
    for k in 0..draws {
        let u = haar_unitary_matrix(d_s * d_e, rng);
        let after = evolve_se(omega_ase, &u)?;
        let delta = i_before - mutual_information(&after, &[Factor::A], &[Factor::S])?;
        if delta < best {
            best = delta;
            best_draw = k;
        }
    }
    Ok(DpiSearch { draws, best_delta: best, best_draw, violation_found: best < threshold, threshold })
}

/// `(|000⟩ + |111⟩)/√2` on qubits `A ⊗ S ⊗ E`.
pub fn ghz_state() -> DensityMatrix {
    let v = (linalg::ket(8, 0) + linalg::ket(8, 7)).scale(std::f64::consts::FRAC_1_SQRT_2);
    let layout =
        SpaceLayout::new(vec![(Factor::A, 2), (Factor::S, 2), (Factor::E, 2)]).expect("fixed qubit layout");
    DensityMatrix::from_matrix(layout, linalg::projector(&v)).expect("GHZ projector is a state")
}
