//! Families of system–environment initial states.
//!
//! Each family separates its fixed data (environment states, block layout,
//! tripartite seed state) from the free parameters that pick one member
//! (probabilities, local system states, a positive operator on the ancilla,
//! a kernel shift). Every variant except `Steered` and `KernelExtended` is a
//! special case of the block form `⊕ᵢ pᵢ ρ_{Lᵢ} ⊗ ω̃_{RᵢE}` and reports it
//! through [`FamilySpec::markov_form`].

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::consistency::{span_from_states, OperatorSubspace};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::tensor::{
    haar_unitary_matrix, random_density_matrix, BlockStructure, DensityMatrix, Factor, SpaceLayout,
};

/// `ρ_S ⊗ ω̃_E` with `ω̃_E` fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factorized {
    pub d_s: usize,
    pub d_e: usize,
    #[serde(with = "crate::serde_matrix")]
    pub omega_e: CMatrix,
}

/// `Σᵢ pᵢ |ĩ⟩⟨ĩ| ⊗ ω̃ᵢ` for a fixed orthonormal basis (the columns of `basis`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalQuantum {
    pub d_e: usize,
    #[serde(with = "crate::serde_matrix")]
    pub basis: CMatrix,
    #[serde(with = "crate::serde_matrix::vec")]
    pub omegas: Vec<CMatrix>,
}

/// `⊕ᵢ pᵢ ρ_S^{(i)} ⊗ ω̃ᵢ` over `H_S = ⊕ᵢ H_S^{(i)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectSumFactorized {
    pub d_e: usize,
    pub block_dims: Vec<usize>,
    #[serde(with = "crate::serde_matrix::vec")]
    pub omegas: Vec<CMatrix>,
}

/// `⊕_{i≤m′} pᵢ ω̃_SE^{(i)} + ⊕_{i>m′} pᵢ ρ_S^{(i)} ⊗ ω̃ᵢ`; `m′ = fixed_joint.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedDirectSum {
    pub d_e: usize,
    pub block_dims: Vec<usize>,
    #[serde(with = "crate::serde_matrix::vec")]
    pub fixed_joint: Vec<CMatrix>,
    #[serde(with = "crate::serde_matrix::vec")]
    pub omegas: Vec<CMatrix>,
}

/// `⊕ᵢ pᵢ ρ_{Lᵢ} ⊗ ω̃_{RᵢE}` over `H_S = ⊕ᵢ H_{Lᵢ} ⊗ H_{Rᵢ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovBlocks {
    pub d_e: usize,
    pub blocks: BlockStructure,
    #[serde(with = "crate::serde_matrix::vec")]
    pub omega_re: Vec<CMatrix>,
}

/// States steered from a fixed `ω̃_ASE` by positive operators on `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Steered {
    pub d_a: usize,
    pub d_s: usize,
    pub d_e: usize,
    #[serde(with = "crate::serde_matrix")]
    pub omega_ase: CMatrix,
}

/// A base family shifted by elements of a subspace of `ker Tr_E`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelExtended {
    pub base: Box<FamilySpec>,
    pub kernel: OperatorSubspace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum FamilySpec {
    Factorized(Factorized),
    ClassicalQuantum(ClassicalQuantum),
    DirectSumFactorized(DirectSumFactorized),
    MixedDirectSum(MixedDirectSum),
    MarkovBlocks(MarkovBlocks),
    Steered(Steered),
    KernelExtended(KernelExtended),
}

/// Real coefficients on a Hermitian basis of the kernel subspace. With
/// `scale = Some(s)` the shift direction is normalized and pushed to 90 % of
/// the largest step `t·s` (`t ∈ [0, 1]`) that keeps the state PSD; with
/// `scale = None` the shift is applied as given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelShift {
    pub coeffs: Vec<f64>,
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FamilyParams {
    #[serde(default)]
    pub probs: Vec<f64>,
    #[serde(default, with = "crate::serde_matrix::vec")]
    pub states: Vec<CMatrix>,
    #[serde(default, with = "crate::serde_matrix::option")]
    pub p_a: Option<CMatrix>,
    #[serde(default)]
    pub kernel: Option<KernelShift>,
}

fn check_density(m: &CMatrix, dim: usize, what: &str) -> Result<()> {
    if m.shape() != (dim, dim) {
        return Err(Error::DimensionMismatch(format!("{what} is {:?}, expected {dim}x{dim}", m.shape())));
    }
    DensityMatrix::from_matrix(SpaceLayout::single(Factor::S, dim), m.clone()).map(|_| ())
}

fn check_distribution(p: &[f64], len: usize) -> Result<()> {
    if p.len() != len {
        return Err(Error::InvalidDistribution(format!("expected {len} probabilities, got {}", p.len())));
    }
    if let Some(x) = p.iter().find(|&&x| x < -1e-12 || !x.is_finite()) {
        return Err(Error::InvalidDistribution(format!("negative entry {x}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
    }
    Ok(())
}

pub fn random_distribution<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Embed an operator on `A ⊗ B ⊗ E` (with `B` a block of dimension
/// `block_dim`) into `A ⊗ S ⊗ E`, placing `B` at `offset` inside `S`.
pub fn embed_block(
    x: &CMatrix,
    d_a: usize,
    d_s: usize,
    d_e: usize,
    offset: usize,
    block_dim: usize,
) -> CMatrix {
    let n = d_a * d_s * d_e;
    let mut out = CMatrix::zeros(n, n);
    let map = |idx: usize| {
        let e = idx % d_e;
        let b = (idx / d_e) % block_dim;
        let a = idx / (d_e * block_dim);
        (a * d_s + offset + b) * d_e + e
    };
    let m = d_a * block_dim * d_e;
    for i in 0..m {
        let gi = map(i);
        for j in 0..m {
            out[(gi, map(j))] = x[(i, j)];
        }
    }
    out
}

/// Extract the `A ⊗ B ⊗ E` block of an `A ⊗ S ⊗ E` operator (inverse of
/// [`embed_block`] on block-supported operators).
pub fn extract_block(
    x: &CMatrix,
    d_a: usize,
    d_s: usize,
    d_e: usize,
    offset: usize,
    block_dim: usize,
) -> CMatrix {
    let m = d_a * block_dim * d_e;
    let map = |idx: usize| {
        let e = idx % d_e;
        let b = (idx / d_e) % block_dim;
        let a = idx / (d_e * block_dim);
        (a * d_s + offset + b) * d_e + e
    };
    CMatrix::from_fn(m, m, |i, j| x[(map(i), map(j))])
}

fn block_offsets(dims: &[usize]) -> Vec<usize> {
    dims.iter()
        .scan(0, |acc, &d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect()
}

impl Factorized {
    pub fn random<R: Rng + ?Sized>(d_s: usize, d_e: usize, rng: &mut R) -> Self {
        Self { d_s, d_e, omega_e: random_density_matrix(d_e, d_e, rng) }
    }
}

impl ClassicalQuantum {
    pub fn random<R: Rng + ?Sized>(d_s: usize, d_e: usize, rng: &mut R) -> Self {
        let basis = haar_unitary_matrix(d_s, rng);
        let omegas = (0..d_s).map(|_| random_density_matrix(d_e, d_e, rng)).collect();
        Self { d_e, basis, omegas }
    }

    pub fn d_s(&self) -> usize {
        self.basis.nrows()
    }
}

impl DirectSumFactorized {
    pub fn random<R: Rng + ?Sized>(block_dims: Vec<usize>, d_e: usize, rng: &mut R) -> Self {
        let omegas = block_dims.iter().map(|_| random_density_matrix(d_e, d_e, rng)).collect();
        Self { d_e, block_dims, omegas }
    }
}

impl MixedDirectSum {
    pub fn random<R: Rng + ?Sized>(block_dims: Vec<usize>, m_prime: usize, d_e: usize, rng: &mut R) -> Self {
        let m_prime = m_prime.min(block_dims.len());
        let fixed_joint =
            block_dims[..m_prime].iter().map(|&d| random_density_matrix(d * d_e, d * d_e, rng)).collect();
        let omegas = block_dims[m_prime..].iter().map(|_| random_density_matrix(d_e, d_e, rng)).collect();
        Self { d_e, block_dims, fixed_joint, omegas }
    }
}

impl MarkovBlocks {
    pub fn random<R: Rng + ?Sized>(blocks: BlockStructure, d_e: usize, rng: &mut R) -> Self {
        let omega_re = blocks.0.iter().map(|&(_, r)| random_density_matrix(r * d_e, r * d_e, rng)).collect();
        Self { d_e, blocks, omega_re }
    }

    pub fn d_s(&self) -> usize {
        self.blocks.total_dim()
    }

    /// `ω̃_{Rᵢ} = Tr_E ω̃_{RᵢE}`.
    pub fn reduced_r(&self) -> Vec<CMatrix> {
        self.blocks
            .0
            .iter()
            .zip(&self.omega_re)
            .map(|(&(_, r), w)| linalg::ptrace_e(w, r, self.d_e))
            .collect()
    }
}

impl FamilySpec {
    pub fn name(&self) -> &'static str {
        match self {
            FamilySpec::Factorized(_) => "factorized",
            FamilySpec::ClassicalQuantum(_) => "classical_quantum",
            FamilySpec::DirectSumFactorized(_) => "direct_sum_factorized",
            FamilySpec::MixedDirectSum(_) => "mixed_direct_sum",
            FamilySpec::MarkovBlocks(_) => "markov_blocks",
            FamilySpec::Steered(_) => "steered",
            FamilySpec::KernelExtended(_) => "kernel_extended",
        }
    }

    pub fn d_s(&self) -> usize {
        match self {
            FamilySpec::Factorized(f) => f.d_s,
            FamilySpec::ClassicalQuantum(f) => f.d_s(),
            FamilySpec::DirectSumFactorized(f) => f.block_dims.iter().sum(),
            FamilySpec::MixedDirectSum(f) => f.block_dims.iter().sum(),
            FamilySpec::MarkovBlocks(f) => f.d_s(),
            FamilySpec::Steered(f) => f.d_s,
            FamilySpec::KernelExtended(f) => f.base.d_s(),
        }
    }

    pub fn d_e(&self) -> usize {
        match self {
            FamilySpec::Factorized(f) => f.d_e,
            FamilySpec::ClassicalQuantum(f) => f.d_e,
            FamilySpec::DirectSumFactorized(f) => f.d_e,
            FamilySpec::MixedDirectSum(f) => f.d_e,
            FamilySpec::MarkovBlocks(f) => f.d_e,
            FamilySpec::Steered(f) => f.d_e,
            FamilySpec::KernelExtended(f) => f.base.d_e(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FamilySpec::Factorized(f) => check_density(&f.omega_e, f.d_e, "omega_e"),
            FamilySpec::ClassicalQuantum(f) => {
                let d = f.d_s();
                let gram = f.basis.adjoint() * &f.basis;
                if !f.basis.is_square() || linalg::frob(&(gram - linalg::identity(d))) > 1e-9 {
                    return Err(Error::InvalidParams("basis is not orthonormal".into()));
                }
                if f.omegas.len() != d {
                    return Err(Error::DimensionMismatch(format!(
                        "{} environment states for {d} basis vectors",
                        f.omegas.len()
                    )));
                }
                f.omegas.iter().try_for_each(|w| check_density(w, f.d_e, "omega_i"))
            }
            FamilySpec::DirectSumFactorized(f) => {
                if f.omegas.len() != f.block_dims.len() || f.block_dims.contains(&0) {
                    return Err(Error::DimensionMismatch("blocks and states disagree".into()));
                }
                f.omegas.iter().try_for_each(|w| check_density(w, f.d_e, "omega_i"))
            }
            FamilySpec::MixedDirectSum(f) => {
                let mp = f.fixed_joint.len();
                if mp + f.omegas.len() != f.block_dims.len() || f.block_dims.contains(&0) {
                    return Err(Error::DimensionMismatch("blocks and states disagree".into()));
                }
                for (w, &d) in f.fixed_joint.iter().zip(&f.block_dims) {
                    check_density(w, d * f.d_e, "omega_SE^(i)")?;
                }
                f.omegas.iter().try_for_each(|w| check_density(w, f.d_e, "omega_i"))
            }
            FamilySpec::MarkovBlocks(f) => {
                if f.omega_re.len() != f.blocks.len() {
                    return Err(Error::DimensionMismatch("blocks and states disagree".into()));
                }
                for (w, &(_, r)) in f.omega_re.iter().zip(&f.blocks.0) {
                    check_density(w, r * f.d_e, "omega_RE")?;
                }
                Ok(())
            }
            FamilySpec::Steered(f) => check_density(&f.omega_ase, f.d_a * f.d_s * f.d_e, "omega_ASE"),
            FamilySpec::KernelExtended(f) => {
                f.base.validate()?;
                if f.kernel.d_s != f.base.d_s() || f.kernel.d_e != f.base.d_e() {
                    return Err(Error::DimensionMismatch("kernel ambient space differs".into()));
                }
                let tr = f.kernel.partial_trace_image_norm();
                if tr > 1e-9 {
                    return Err(Error::OutsideKernel(tr));
                }
                Ok(())
            }
        }
    }

    /// Block form `(layout, ω̃_{RᵢE})` when the family is a special case of
    /// `⊕ᵢ pᵢ ρ_{Lᵢ} ⊗ ω̃_{RᵢE}` in the computational basis.
    pub fn markov_form(&self) -> Option<MarkovBlocks> {
        match self {
            FamilySpec::Factorized(f) => Some(MarkovBlocks {
                d_e: f.d_e,
                blocks: BlockStructure(vec![(f.d_s, 1)]),
                omega_re: vec![f.omega_e.clone()],
            }),
            FamilySpec::ClassicalQuantum(f) => {
                let d = f.d_s();
                // Only the computational basis (up to phases) is in block form as-is.
                let diag = (0..d).all(|i| {
                    (0..d).all(|j| (f.basis[(i, j)].norm() - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12)
                });
                diag.then(|| MarkovBlocks {
                    d_e: f.d_e,
                    blocks: BlockStructure(vec![(1, 1); d]),
                    omega_re: f.omegas.clone(),
                })
            }
            FamilySpec::DirectSumFactorized(f) => Some(MarkovBlocks {
                d_e: f.d_e,
                blocks: BlockStructure(f.block_dims.iter().map(|&d| (d, 1)).collect()),
                omega_re: f.omegas.clone(),
            }),
            FamilySpec::MixedDirectSum(f) => {
                let mp = f.fixed_joint.len();
                let blocks = f
                    .block_dims
                    .iter()
                    .enumerate()
                    .map(|(i, &d)| if i < mp { (1, d) } else { (d, 1) })
                    .collect();
                let omega_re = f.fixed_joint.iter().chain(&f.omegas).cloned().collect();
                Some(MarkovBlocks { d_e: f.d_e, blocks: BlockStructure(blocks), omega_re })
            }
            FamilySpec::MarkovBlocks(f) => Some(f.clone()),
            FamilySpec::Steered(_) | FamilySpec::KernelExtended(_) => None,
        }
    }

    /// Operators whose complex span equals the span of the family.
    pub fn generators(&self) -> Vec<CMatrix> {
        let (d_s, d_e) = (self.d_s(), self.d_e());
        match self {
            FamilySpec::Factorized(f) => (0..d_s * d_s)
                .map(|k| linalg::kron(&linalg::unit(d_s, k / d_s, k % d_s), &f.omega_e))
                .collect(),
            FamilySpec::ClassicalQuantum(f) => f
                .omegas
                .iter()
                .enumerate()
                .map(|(i, w)| linalg::kron(&linalg::projector(&f.basis.column(i).into_owned()), w))
                .collect(),
            FamilySpec::Steered(f) => (0..f.d_a * f.d_a)
                .map(|k| {
                    let p = linalg::unit(f.d_a, k / f.d_a, k % f.d_a);
                    let pi = linalg::kron(&p, &linalg::identity(d_s * d_e));
                    linalg::partial_trace(&(pi * &f.omega_ase), &[f.d_a, d_s * d_e], &[false, true])
                })
                .collect(),
            FamilySpec::KernelExtended(f) => {
                let mut gens = f.base.generators();
                gens.extend((0..f.kernel.dim()).map(|k| f.kernel.element(k)));
                gens
            }
            _ => {
                let mb = self.markov_form().expect("block form");
                let offsets = block_offsets(&mb.blocks.0.iter().map(|(l, r)| l * r).collect::<Vec<_>>());
                let mut gens = Vec::new();
                for (i, &(l, r)) in mb.blocks.0.iter().enumerate() {
                    for k in 0..l * l {
                        let local = linalg::kron(&linalg::unit(l, k / l, k % l), &mb.omega_re[i]);
                        gens.push(embed_block(&local, 1, d_s, d_e, offsets[i], l * r));
                    }
                }
                gens
            }
        }
    }

    /// The subspace `V` spanned by the family.
    pub fn subspace(&self) -> OperatorSubspace {
        span_from_states(&self.generators(), self.d_s(), self.d_e())
    }

    /// Random free parameters for this family: full-rank local states, a
    /// random probability vector, a full-rank `P_A`, and a boundary-scaled
    /// kernel shift.
    pub fn random_params<R: Rng + ?Sized>(&self, rng: &mut R) -> FamilyParams {
        match self {
            FamilySpec::Factorized(f) => FamilyParams {
                probs: vec![1.0],
                states: vec![random_density_matrix(f.d_s, f.d_s, rng)],
                ..Default::default()
            },
            FamilySpec::ClassicalQuantum(f) => {
                FamilyParams { probs: random_distribution(f.d_s(), rng), ..Default::default() }
            }
            FamilySpec::DirectSumFactorized(f) => FamilyParams {
                probs: random_distribution(f.block_dims.len(), rng),
                states: f.block_dims.iter().map(|&d| random_density_matrix(d, d, rng)).collect(),
                ..Default::default()
            },
            FamilySpec::MixedDirectSum(f) => FamilyParams {
                probs: random_distribution(f.block_dims.len(), rng),
                states: f.block_dims[f.fixed_joint.len()..]
                    .iter()
                    .map(|&d| random_density_matrix(d, d, rng))
                    .collect(),
                ..Default::default()
            },
            FamilySpec::MarkovBlocks(f) => FamilyParams {
                probs: random_distribution(f.blocks.len(), rng),
                states: f.blocks.0.iter().map(|&(l, _)| random_density_matrix(l, l, rng)).collect(),
                ..Default::default()
            },
            FamilySpec::Steered(f) => {
                let scale = 0.5 + rng.random::<f64>();
                FamilyParams {
                    p_a: Some(random_density_matrix(f.d_a, f.d_a, rng).scale(scale)),
                    ..Default::default()
                }
            }
            FamilySpec::KernelExtended(f) => {
                let mut params = f.base.random_params(rng);
                let n = f.kernel.hermitian_basis().len();
                let coeffs = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
                params.kernel = Some(KernelShift { coeffs, scale: Some(1.0) });
                params
            }
        }
    }
}

/// Assemble the family member selected by `params`.
pub fn sample_member(spec: &FamilySpec, params: &FamilyParams) -> Result<DensityMatrix> {
    spec.validate()?;
    let (d_s, d_e) = (spec.d_s(), spec.d_e());
    let layout = SpaceLayout::se(d_s, d_e);
    let m = match spec {
        FamilySpec::Factorized(f) => {
            if !params.probs.is_empty() {
                check_distribution(&params.probs, 1)?;
            }
            let rho = params
                .states
                .first()
                .ok_or_else(|| Error::InvalidParams("factorized family needs rho_S".into()))?;
            check_density(rho, d_s, "rho_S")?;
            linalg::kron(rho, &f.omega_e)
        }
        FamilySpec::ClassicalQuantum(f) => {
            check_distribution(&params.probs, d_s)?;
            let mut m = CMatrix::zeros(d_s * d_e, d_s * d_e);
            for (i, w) in f.omegas.iter().enumerate() {
                let pi = linalg::projector(&f.basis.column(i).into_owned());
                m += linalg::kron(&pi, w).scale(params.probs[i]);
            }
            m
        }
        FamilySpec::Steered(f) => {
            let omega = DensityMatrix::from_matrix(steered_layout(f)?, f.omega_ase.clone())?;
            let p_a =
                params.p_a.as_ref().ok_or_else(|| Error::InvalidParams("steered family needs P_A".into()))?;
            return steer(&omega, p_a);
        }
        FamilySpec::KernelExtended(f) => {
            let base = sample_member(&f.base, &FamilyParams { kernel: None, ..params.clone() })?;
            let shift = params
                .kernel
                .as_ref()
                .ok_or_else(|| Error::InvalidParams("kernel-extended family needs a shift".into()))?;
            apply_kernel_shift(base.matrix(), &f.kernel, shift)?
        }
        _ => {
            let mb = spec.markov_form().expect("block form");
            let free: Vec<CMatrix> = match spec {
                FamilySpec::MixedDirectSum(f) => {
                    // Fixed joint blocks have a trivial one-dimensional L factor.
                    let mut s = vec![linalg::identity(1); f.fixed_joint.len()];
                    s.extend(params.states.iter().cloned());
                    s
                }
                _ => params.states.clone(),
            };
            markov_member(&mb, &params.probs, &free)?
        }
    };
    DensityMatrix::from_matrix(layout, linalg::hermitian_part(&m))
}

fn markov_member(mb: &MarkovBlocks, probs: &[f64], states: &[CMatrix]) -> Result<CMatrix> {
    check_distribution(probs, mb.blocks.len())?;
    if states.len() != mb.blocks.len() {
        return Err(Error::InvalidParams(format!(
            "expected {} block states, got {}",
            mb.blocks.len(),
            states.len()
        )));
    }
    let d_s = mb.d_s();
    let mut m = CMatrix::zeros(d_s * mb.d_e, d_s * mb.d_e);
    for (i, &(l, r)) in mb.blocks.0.iter().enumerate() {
        check_density(&states[i], l, "rho_L")?;
        let local = linalg::kron(&states[i], &mb.omega_re[i]).scale(probs[i]);
        m += embed_block(&local, 1, d_s, mb.d_e, mb.blocks.offset(i), l * r);
    }
    Ok(m)
}

fn apply_kernel_shift(base: &CMatrix, kernel: &OperatorSubspace, shift: &KernelShift) -> Result<CMatrix> {
    let herm = kernel.hermitian_basis();
    if shift.coeffs.len() != herm.len() {
        return Err(Error::InvalidParams(format!(
            "kernel shift has {} coefficients, kernel has real dimension {}",
            shift.coeffs.len(),
            herm.len()
        )));
    }
    let mut y = CMatrix::zeros(base.nrows(), base.ncols());
    for (h, &c) in herm.iter().zip(&shift.coeffs) {
        y += h.scale(c);
    }
    match shift.scale {
        None => {
            let x = base + y;
            let min = linalg::min_eigenvalue(&x);
            if min < -linalg::psd_threshold(&x) {
                return Err(Error::NotPositive(min));
            }
            Ok(x)
        }
        Some(cap) => {
            let norm = linalg::frob(&y);
            if norm == 0.0 {
                return Ok(base.clone());
            }
            let step = y.unscale(norm).scale(cap);
            let psd = |t: f64| linalg::min_eigenvalue(&(base + step.scale(t))) >= 0.0;
            let t = if psd(1.0) {
                1.0
            } else {
                let (mut lo, mut hi) = (0.0, 1.0);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if psd(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            };
            Ok(base + step.scale(0.9 * t))
        }
    }
}

fn steered_layout(f: &Steered) -> Result<SpaceLayout> {
    SpaceLayout::new(vec![(Factor::A, f.d_a), (Factor::S, f.d_s), (Factor::E, f.d_e)])
}

/// Tripartite Markov state `⊕ᵢ q̃ᵢ ω̃_{ALᵢ} ⊗ ω̃_{RᵢE}` on `A ⊗ S ⊗ E`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovStateSpec {
    pub d_a: usize,
    pub d_e: usize,
    pub blocks: BlockStructure,
    pub q: Vec<f64>,
    #[serde(with = "crate::serde_matrix::vec")]
    pub omega_al: Vec<CMatrix>,
    #[serde(with = "crate::serde_matrix::vec")]
    pub omega_re: Vec<CMatrix>,
}

impl MarkovStateSpec {
    /// Random instance; `rank = 1` gives pure (generically entangled)
    /// `ω̃_{ALᵢ}` and `ω̃_{RᵢE}`.
    pub fn random<R: Rng + ?Sized>(
        d_a: usize,
        blocks: BlockStructure,
        d_e: usize,
        rank: Option<usize>,
        rng: &mut R,
    ) -> Self {
        let pick = |d: usize| rank.map_or(d, |r| r.clamp(1, d));
        let q = random_distribution(blocks.len(), rng);
        let omega_al =
            blocks.0.iter().map(|&(l, _)| random_density_matrix(d_a * l, pick(d_a * l), rng)).collect();
        let omega_re =
            blocks.0.iter().map(|&(_, r)| random_density_matrix(r * d_e, pick(r * d_e), rng)).collect();
        Self { d_a, d_e, blocks, q, omega_al, omega_re }
    }

    pub fn d_s(&self) -> usize {
        self.blocks.total_dim()
    }

    pub fn layout(&self) -> Result<SpaceLayout> {
        SpaceLayout::new(vec![(Factor::A, self.d_a), (Factor::S, self.d_s()), (Factor::E, self.d_e)])?
            .with_blocks(self.blocks.clone())
    }

    /// The steered family generated by this state, with its block form.
    pub fn steered_family(&self) -> Result<(FamilySpec, MarkovBlocks)> {
        let rho = build_markov_state(self)?;
        let f = Steered { d_a: self.d_a, d_s: self.d_s(), d_e: self.d_e, omega_ase: rho.matrix().clone() };
        let mb = MarkovBlocks { d_e: self.d_e, blocks: self.blocks.clone(), omega_re: self.omega_re.clone() };
        Ok((FamilySpec::Steered(f), mb))
    }
}

pub fn build_markov_state(spec: &MarkovStateSpec) -> Result<DensityMatrix> {
    check_distribution(&spec.q, spec.blocks.len())?;
    if spec.omega_al.len() != spec.blocks.len() || spec.omega_re.len() != spec.blocks.len() {
        return Err(Error::DimensionMismatch("block count and state count disagree".into()));
    }
    let d_s = spec.d_s();
    let n = spec.d_a * d_s * spec.d_e;
    let mut m = CMatrix::zeros(n, n);
    for (i, &(l, r)) in spec.blocks.0.iter().enumerate() {
        check_density(&spec.omega_al[i], spec.d_a * l, "omega_AL")?;
        check_density(&spec.omega_re[i], r * spec.d_e, "omega_RE")?;
        let local = linalg::kron(&spec.omega_al[i], &spec.omega_re[i]).scale(spec.q[i]);
        m += embed_block(&local, spec.d_a, d_s, spec.d_e, spec.blocks.offset(i), l * r);
    }
    DensityMatrix::from_matrix(spec.layout()?, linalg::hermitian_part(&m))
}

/// `Tr_A[(P_A ⊗ I_SE) ω̃_ASE] / tr[(P_A ⊗ I_SE) ω̃_ASE]`.
pub fn steer(omega_ase: &DensityMatrix, p_a: &CMatrix) -> Result<DensityMatrix> {
    let layout = omega_ase.layout();
    let pos_a = layout.position(Factor::A)?;
    let d_a = layout.dim_of(Factor::A)?;
    if p_a.shape() != (d_a, d_a) {
        return Err(Error::DimensionMismatch(format!(
            "P_A is {:?}, ancilla has dimension {d_a}",
            p_a.shape()
        )));
    }
    let defect = linalg::hermiticity_defect(p_a);
    if defect > linalg::HERM_REL_TOL * linalg::frob(p_a).max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    let min = linalg::min_eigenvalue(p_a);
    if min < -linalg::psd_threshold(p_a) {
        return Err(Error::NotPositive(min));
    }
    let parts: Vec<CMatrix> = layout
        .factors()
        .iter()
        .enumerate()
        .map(|(k, &(_, d))| if k == pos_a { p_a.clone() } else { linalg::identity(d) })
        .collect();
    let lifted = linalg::kron_all(&parts.iter().collect::<Vec<_>>()) * omega_ase.matrix();
    let norm = lifted.trace();
    if norm.re <= 1e-14 {
        return Err(Error::ZeroNormalization(norm.re));
    }
    let keep: Vec<bool> = (0..layout.factors().len()).map(|k| k != pos_a).collect();
    let reduced = linalg::partial_trace(&lifted, &layout.dims(), &keep).unscale(norm.re);
    let rest = SpaceLayout::new(layout.factors().iter().filter(|(l, _)| *l != Factor::A).cloned().collect())?;
    let rest = match layout.blocks() {
        Some(b) if rest.contains(Factor::S) => rest.with_blocks(b.clone())?,
        _ => rest,
    };
    DensityMatrix::from_matrix(rest, linalg::hermitian_part(&reduced))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureFit {
    pub probs: Vec<f64>,
    #[serde(with = "crate::serde_matrix::vec")]
    pub states: Vec<CMatrix>,
    /// Frobenius norm of `ρ_SE − ⊕ᵢ pᵢ ρ_{Lᵢ} ⊗ ω̃_{RᵢE}`.
    pub residual: f64,
}

/// Least-squares fit of `ρ_SE` to the block form `⊕ᵢ pᵢ ρ_{Lᵢ} ⊗ ω̃_{RᵢE}`.
pub fn structure_fit(rho_se: &CMatrix, form: &MarkovBlocks) -> Result<StructureFit> {
    let (d_s, d_e) = (form.d_s(), form.d_e);
    if rho_se.shape() != (d_s * d_e, d_s * d_e) || form.omega_re.len() != form.blocks.len() {
        return Err(Error::DimensionMismatch(format!(
            "state is {:?}, block layout needs {}x{}",
            rho_se.shape(),
            d_s * d_e,
            d_s * d_e
        )));
    }
    let mut model = CMatrix::zeros(d_s * d_e, d_s * d_e);
    let mut probs = Vec::with_capacity(form.blocks.len());
    let mut states = Vec::with_capacity(form.blocks.len());
    for (i, &(l, r)) in form.blocks.0.iter().enumerate() {
        let off = form.blocks.offset(i);
        let block = extract_block(rho_se, 1, d_s, d_e, off, l * r);
        let w = &form.omega_re[i];
        let wn = linalg::hs_inner(w, w).re;
        let m = r * d_e;
        // A[l1, l2] = ⟨ω, block_{l1 l2}⟩ / ⟨ω, ω⟩
        let a = CMatrix::from_fn(l, l, |l1, l2| {
            let mut acc = linalg::ZERO;
            for x in 0..m {
                for y in 0..m {
                    acc += w[(x, y)].conj() * block[(l1 * m + x, l2 * m + y)];
                }
            }
            acc / wn
        });
        let p = a.trace().re;
        model += embed_block(&linalg::kron(&a, w), 1, d_s, d_e, off, l * r);
        states.push(if p.abs() > 1e-14 { a.unscale(p) } else { linalg::identity(l).unscale(l as f64) });
        probs.push(p);
    }
    let residual = linalg::frob(&(rho_se - model));
    Ok(StructureFit { probs, states, residual })
}
