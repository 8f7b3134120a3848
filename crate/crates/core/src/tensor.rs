//! Operators over explicitly laid-out tensor-product spaces.
//!
//! A [`SpaceLayout`] names every tensor factor (`A`, `S`, `E`, `C`, or the
//! block factors `L_i`, `R_i`) and fixes the basis ordering: row-major across
//! factors, and for a system with block structure `H_S = ⊕ᵢ H_{Lᵢ} ⊗ H_{Rᵢ}`
//! the blocks are concatenated in declaration order with each `L ⊗ R` block
//! row-major internally.

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix};

/// Name of one tensor factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Factor {
    A,
    S,
    E,
    C,
    L(usize),
    R(usize),
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Factor::A => write!(f, "A"),
            Factor::S => write!(f, "S"),
            Factor::E => write!(f, "E"),
            Factor::C => write!(f, "C"),
            Factor::L(i) => write!(f, "L{i}"),
            Factor::R(i) => write!(f, "R{i}"),
        }
    }
}

/// Dimensions of the blocks `(dim Lᵢ, dim Rᵢ)` of a direct-sum system space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockStructure(pub Vec<(usize, usize)>);

impl BlockStructure {
    pub fn total_dim(&self) -> usize {
        self.0.iter().map(|(l, r)| l * r).sum()
    }

    /// Offset of block `i` inside the system basis.
    pub fn offset(&self, i: usize) -> usize {
        self.0[..i].iter().map(|(l, r)| l * r).sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Parse `"1x2,2x1"`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut blocks = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (l, r) = part
                .split_once(['x', 'X'])
                .ok_or_else(|| Error::InvalidLayout(format!("bad block {part:?}")))?;
            let parse = |t: &str| {
                t.trim().parse::<usize>().map_err(|_| Error::InvalidLayout(format!("bad block {part:?}")))
            };
            let (l, r) = (parse(l)?, parse(r)?);
            if l == 0 || r == 0 {
                return Err(Error::InvalidLayout(format!("zero block dimension in {part:?}")));
            }
            blocks.push((l, r));
        }
        if blocks.is_empty() {
            return Err(Error::InvalidLayout("empty block list".into()));
        }
        Ok(BlockStructure(blocks))
    }
}

impl fmt::Display for BlockStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(l, r)| format!("{l}x{r}")).collect();
        write!(f, "{}", parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceLayout {
    factors: Vec<(Factor, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blocks: Option<BlockStructure>,
}

impl SpaceLayout {
    pub fn new(factors: Vec<(Factor, usize)>) -> Result<Self> {
        for (k, (label, dim)) in factors.iter().enumerate() {
            if *dim == 0 {
                return Err(Error::InvalidLayout(format!("factor {label} has dimension 0")));
            }
            if factors[..k].iter().any(|(l, _)| l == label) {
                return Err(Error::InvalidLayout(format!("duplicate factor {label}")));
            }
        }
        Ok(Self { factors, blocks: None })
    }

    /// Layout of the two-party `S ⊗ E` space.
    pub fn se(d_s: usize, d_e: usize) -> Self {
        Self::new(vec![(Factor::S, d_s), (Factor::E, d_e)]).expect("valid S⊗E layout")
    }

    pub fn single(label: Factor, dim: usize) -> Self {
        Self::new(vec![(label, dim)]).expect("valid single-factor layout")
    }

    /// Attach a direct-sum block structure to the `S` factor.
    pub fn with_blocks(mut self, blocks: BlockStructure) -> Result<Self> {
        let d_s = self.dim_of(Factor::S)?;
        if blocks.total_dim() != d_s {
            return Err(Error::InvalidLayout(format!(
                "blocks {blocks} have total dimension {} but dim S = {d_s}",
                blocks.total_dim()
            )));
        }
        self.blocks = Some(blocks);
        Ok(self)
    }

    pub fn factors(&self) -> &[(Factor, usize)] {
        &self.factors
    }

    pub fn blocks(&self) -> Option<&BlockStructure> {
        self.blocks.as_ref()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|(_, d)| *d).collect()
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|(_, d)| d).product()
    }

    pub fn position(&self, label: Factor) -> Result<usize> {
        self.factors.iter().position(|(l, _)| *l == label).ok_or(Error::UnknownFactor(label))
    }

    pub fn dim_of(&self, label: Factor) -> Result<usize> {
        Ok(self.factors[self.position(label)?].1)
    }

    pub fn contains(&self, label: Factor) -> bool {
        self.factors.iter().any(|(l, _)| *l == label)
    }

    pub fn concat(&self, other: &SpaceLayout) -> Result<SpaceLayout> {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        let mut out = SpaceLayout::new(factors)?;
        out.blocks = self.blocks.clone().or_else(|| other.blocks.clone());
        Ok(out)
    }

    fn restrict(&self, keep: &[Factor]) -> SpaceLayout {
        let factors: Vec<_> = self.factors.iter().filter(|(l, _)| keep.contains(l)).cloned().collect();
        let blocks = if keep.contains(&Factor::S) { self.blocks.clone() } else { None };
        SpaceLayout { factors, blocks }
    }
}

/// A square complex matrix on a laid-out tensor-product space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    layout: SpaceLayout,
    matrix: CMatrix,
}

impl Operator {
    pub fn new(layout: SpaceLayout, matrix: CMatrix) -> Result<Self> {
        let n = linalg::check_square(&matrix, "operator")?;
        if n != layout.dim() {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {n}x{n} but layout has dimension {}",
                layout.dim()
            )));
        }
        Ok(Self { layout, matrix })
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> num_complex::Complex64 {
        self.matrix.trace()
    }
}

/// A validated density operator: Hermitian, unit trace, PSD within tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Operator);

impl DensityMatrix {
    pub fn new(op: Operator) -> Result<Self> {
        let m = op.matrix();
        let defect = linalg::hermiticity_defect(m);
        if defect > linalg::HERM_REL_TOL * linalg::frob(m).max(1.0) {
            return Err(Error::NotHermitian(defect));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(Error::BadTrace(tr.re));
        }
        let min = linalg::min_eigenvalue(m);
        if min < -linalg::psd_threshold(m) {
            return Err(Error::NotPositive(min));
        }
        Ok(Self(op))
    }

    pub fn from_matrix(layout: SpaceLayout, m: CMatrix) -> Result<Self> {
        Self::new(Operator::new(layout, m)?)
    }

    pub fn operator(&self) -> &Operator {
        &self.0
    }

    pub fn matrix(&self) -> &CMatrix {
        self.0.matrix()
    }

    pub fn layout(&self) -> &SpaceLayout {
        self.0.layout()
    }

    pub fn purity(&self) -> f64 {
        let m = self.matrix();
        (m * m).trace().re
    }
}

/// A validated unitary operator.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryOperator(Operator);

impl UnitaryOperator {
    pub fn new(op: Operator) -> Result<Self> {
        let defect = linalg::unitarity_defect(op.matrix());
        if defect > 1e-9 * (op.dim() as f64).sqrt().max(1.0) {
            return Err(Error::NotUnitary(defect));
        }
        Ok(Self(op))
    }

    pub fn from_matrix(layout: SpaceLayout, m: CMatrix) -> Result<Self> {
        Self::new(Operator::new(layout, m)?)
    }

    pub fn identity(layout: SpaceLayout) -> Self {
        let d = layout.dim();
        Self(Operator { layout, matrix: linalg::identity(d) })
    }

    /// The swap `|ψ⟩_S|φ⟩_E ↦ |φ⟩_S|ψ⟩_E`; requires `d_s == d_e`.
    pub fn swap(d: usize) -> Self {
        Self(Operator { layout: SpaceLayout::se(d, d), matrix: linalg::swap(d, d) })
    }

    pub fn operator(&self) -> &Operator {
        &self.0
    }

    pub fn matrix(&self) -> &CMatrix {
        self.0.matrix()
    }

    pub fn layout(&self) -> &SpaceLayout {
        self.0.layout()
    }
}

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Descending eigenvalues.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: CMatrix,
}

impl SpectralDecomposition {
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.vectors.nrows();
        let mut out = CMatrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let v = self.vectors.column(k);
            out += (v * v.adjoint()).scale(lam);
        }
        out
    }
}

pub fn kron(a: &Operator, b: &Operator) -> Result<Operator> {
    Operator::new(a.layout.concat(&b.layout)?, linalg::kron(&a.matrix, &b.matrix))
}

/// Trace out every factor not listed in `keep`.
pub fn partial_trace(m: &Operator, keep: &[Factor]) -> Result<Operator> {
    for label in keep {
        m.layout.position(*label)?;
    }
    let mask: Vec<bool> = m.layout.factors.iter().map(|(l, _)| keep.contains(l)).collect();
    let reduced = linalg::partial_trace(&m.matrix, &m.layout.dims(), &mask);
    Ok(Operator { layout: m.layout.restrict(keep), matrix: reduced })
}

/// `U m U†`.
pub fn ad_u(u: &UnitaryOperator, m: &Operator) -> Result<Operator> {
    if u.0.dim() != m.dim() {
        return Err(Error::DimensionMismatch(format!(
            "unitary is {0}x{0}, operator is {1}x{1}",
            u.0.dim(),
            m.dim()
        )));
    }
    let um = u.matrix() * m.matrix() * u.matrix().adjoint();
    Ok(Operator { layout: m.layout.clone(), matrix: um })
}

pub fn eig_hermitian(m: &CMatrix) -> Result<SpectralDecomposition> {
    linalg::check_square(m, "eig_hermitian input")?;
    let defect = linalg::hermiticity_defect(m);
    if defect > linalg::HERM_REL_TOL * linalg::frob(m).max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    let (values, vectors) = linalg::eigh(m);
    Ok(SpectralDecomposition { values, vectors })
}

/// Eigenvalues below this are dropped from entropy sums.
pub const ENTROPY_CUTOFF: f64 = 1e-12;

/// Von Neumann entropy `−tr ρ ln ρ` in nats.
pub fn von_neumann_entropy(rho: &CMatrix) -> f64 {
    linalg::eigvalsh(rho).into_iter().filter(|&l| l > ENTROPY_CUTOFF).map(|l| -l * l.ln()).sum()
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `dim × cols` complex Ginibre matrix with entries of unit variance.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re * s, im * s)
    })
}

/// Haar-distributed unitary: QR of a Ginibre matrix with the phases of `R`'s
/// diagonal pushed back into `Q`.
pub fn haar_unitary_matrix<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let qr = ginibre(dim, dim, rng).qr();
    let (mut q, r) = qr.unpack();
    for k in 0..dim {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { linalg::ONE };
        let col = q.column(k) * phase;
        q.set_column(k, &col);
    }
    q
}

pub fn random_haar_unitary<R: Rng + ?Sized>(layout: SpaceLayout, rng: &mut R) -> UnitaryOperator {
    let m = haar_unitary_matrix(layout.dim(), rng);
    UnitaryOperator(Operator { layout, matrix: m })
}

/// `G G† / tr(G G†)` with `G` a `dim × rank` Ginibre matrix.
pub fn random_density_matrix<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> CMatrix {
    assert!(rank >= 1 && rank <= dim, "rank must be in 1..=dim");
    let g = ginibre(dim, rank, rng);
    let rho = &g * g.adjoint();
    let tr = rho.trace().re;
    linalg::hermitian_part(&rho.unscale(tr))
}

pub fn random_density<R: Rng + ?Sized>(
    layout: SpaceLayout,
    rank: usize,
    rng: &mut R,
) -> Result<DensityMatrix> {
    if rank == 0 || rank > layout.dim() {
        return Err(Error::InvalidParams(format!("rank {rank} outside 1..={}", layout.dim())));
    }
    let m = random_density_matrix(layout.dim(), rank, rng);
    Ok(DensityMatrix(Operator { layout, matrix: m }))
}

/// Random Hermitian matrix with Frobenius norm of order `dim`.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let g = ginibre(dim, dim, rng);
    linalg::hermitian_part(&g)
}
