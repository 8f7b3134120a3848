//! Linear maps on operator spaces, their Choi matrices and operator-sum forms.
//!
//! A [`ChannelMap`] from `L(C^{d_in})` to `L(C^{d_out})` is stored as the
//! `d_out² × d_in²` matrix acting on row-major vectorized operators: column
//! `i·d_in + j` is `vec(Ψ(|i⟩⟨j|))`. The Choi matrix is the unnormalized
//! `C = Σ_ij |i⟩⟨j| ⊗ Ψ(|i⟩⟨j|)` on `C^{d_in} ⊗ C^{d_out}`.

use serde::{Deserialize, Serialize};

use crate::consistency::AssignmentMap;
use crate::error::{Error, Result};
use crate::families::ClassicalQuantum;
use crate::linalg::{self, CMatrix, CVector};
use crate::tensor::{eig_hermitian, DensityMatrix, UnitaryOperator};

/// Tolerance for map equalities (closure, trace preservation, Choi distance).
pub const EQ_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMap {
    pub d_in: usize,
    pub d_out: usize,
    #[serde(with = "crate::serde_matrix")]
    pub matrix: CMatrix,
}

impl ChannelMap {
    pub fn new(d_in: usize, d_out: usize, matrix: CMatrix) -> Result<Self> {
        if matrix.shape() != (d_out * d_out, d_in * d_in) {
            return Err(Error::DimensionMismatch(format!(
                "channel matrix is {:?}, expected {:?}",
                matrix.shape(),
                (d_out * d_out, d_in * d_in)
            )));
        }
        Ok(Self { d_in, d_out, matrix })
    }

    /// Build the matrix representation by evaluating `f` on every matrix unit.
    pub fn from_fn(d_in: usize, d_out: usize, f: impl Fn(&CMatrix) -> CMatrix) -> Self {
        let mut matrix = CMatrix::zeros(d_out * d_out, d_in * d_in);
        for i in 0..d_in {
            for j in 0..d_in {
                let out = f(&linalg::unit(d_in, i, j));
                assert_eq!(out.shape(), (d_out, d_out), "map output has wrong shape");
                matrix.set_column(i * d_in + j, &linalg::vec_rm(&out));
            }
        }
        Self { d_in, d_out, matrix }
    }

    pub fn identity(d: usize) -> Self {
        Self { d_in: d, d_out: d, matrix: linalg::identity(d * d) }
    }

    /// `x ↦ U x U†`.
    pub fn unitary(u: &CMatrix) -> Self {
        let d = u.nrows();
        Self { d_in: d, d_out: d, matrix: linalg::kron(u, &u.map(|z| z.conj())) }
    }

    /// `Tr_E` on `S ⊗ E`.
    pub fn partial_trace_e(d_s: usize, d_e: usize) -> Self {
        let n = d_s * d_e;
        let mut matrix = CMatrix::zeros(d_s * d_s, n * n);
        for s in 0..d_s {
            for t in 0..d_s {
                for e in 0..d_e {
                    matrix[(s * d_s + t, (s * d_e + e) * n + (t * d_e + e))] = linalg::ONE;
                }
            }
        }
        Self { d_in: n, d_out: d_s, matrix }
    }

    pub fn transpose(d: usize) -> Self {
        Self::from_fn(d, d, |x| x.transpose())
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        assert_eq!(x.shape(), (self.d_in, self.d_in), "channel input has wrong shape");
        linalg::unvec_rm(&(&self.matrix * linalg::vec_rm(x)), self.d_out, self.d_out)
    }

    /// `self ∘ before`.
    pub fn compose(&self, before: &ChannelMap) -> Result<ChannelMap> {
        if before.d_out != self.d_in {
            return Err(Error::DimensionMismatch(format!(
                "cannot compose map on dim {} after map into dim {}",
                self.d_in, before.d_out
            )));
        }
        Ok(ChannelMap { d_in: before.d_in, d_out: self.d_out, matrix: &self.matrix * &before.matrix })
    }

    pub fn add(&self, other: &ChannelMap) -> Result<ChannelMap> {
        if (self.d_in, self.d_out) != (other.d_in, other.d_out) {
            return Err(Error::DimensionMismatch("cannot add maps of different shape".into()));
        }
        Ok(ChannelMap { d_in: self.d_in, d_out: self.d_out, matrix: &self.matrix + &other.matrix })
    }

    /// Frobenius norm of the Choi difference. The Choi matrix is a reshuffle of
    /// the representation matrix, so this equals the Frobenius distance of the
    /// representation matrices.
    pub fn distance(&self, other: &ChannelMap) -> f64 {
        assert_eq!((self.d_in, self.d_out), (other.d_in, other.d_out));
        linalg::frob(&(&self.matrix - &other.matrix))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiMatrix {
    pub d_in: usize,
    pub d_out: usize,
    #[serde(with = "crate::serde_matrix")]
    pub matrix: CMatrix,
}

impl ChoiMatrix {
    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.matrix)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::eigvalsh(&self.matrix)
    }

    pub fn to_channel(&self) -> ChannelMap {
        let (di, dout) = (self.d_in, self.d_out);
        let mut matrix = CMatrix::zeros(dout * dout, di * di);
        for i in 0..di {
            for j in 0..di {
                for a in 0..dout {
                    for b in 0..dout {
                        matrix[(a * dout + b, i * di + j)] = self.matrix[(i * dout + a, j * dout + b)];
                    }
                }
            }
        }
        ChannelMap { d_in: di, d_out: dout, matrix }
    }
}

pub fn choi(c: &ChannelMap) -> ChoiMatrix {
    let (di, dout) = (c.d_in, c.d_out);
    let mut m = CMatrix::zeros(di * dout, di * dout);
    for i in 0..di {
        for j in 0..di {
            for a in 0..dout {
                for b in 0..dout {
                    m[(i * dout + a, j * dout + b)] = c.matrix[(a * dout + b, i * di + j)];
                }
            }
        }
    }
    ChoiMatrix { d_in: di, d_out: dout, matrix: m }
}

pub fn is_cp(ch: &ChoiMatrix) -> bool {
    linalg::is_psd(&ch.matrix)
}

pub fn is_hermitian_preserving(c: &ChannelMap) -> bool {
    linalg::is_hermitian(&choi(c).matrix)
}

/// Deviation `‖Tr_out(C) − I_in‖_F`.
pub fn trace_defect(c: &ChannelMap) -> f64 {
    let t = CMatrix::from_fn(c.d_in, c.d_in, |i, j| {
        let col = c.matrix.column(i * c.d_in + j);
        // Row-major trace of the output: diagonal entries a·d_out + a.
        (0..c.d_out).map(|a| col[a * c.d_out + a]).sum()
    });
    linalg::frob(&(t - linalg::identity(c.d_in)))
}

pub fn is_tp(c: &ChannelMap) -> bool {
    trace_defect(c) <= EQ_TOL * (c.d_in as f64).max(1.0)
}

/// Largest trace deviation `|tr Ψ(x) − tr x|` over an orthonormal basis of a
/// domain subspace (columns are vectorized `d_in × d_in` operators).
pub fn trace_defect_on(c: &ChannelMap, domain: &CMatrix) -> f64 {
    domain
        .column_iter()
        .map(|col| {
            let x = linalg::unvec_rm(&col.into_owned(), c.d_in, c.d_in);
            (c.apply(&x).trace() - x.trace()).norm()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrausTerm {
    pub coeff: f64,
    #[serde(with = "crate::serde_matrix")]
    pub op: CMatrix,
}

/// Signed operator-sum representation `Ψ(x) = Σᵢ eᵢ Ẽᵢ x Ẽᵢ†`, with `Ẽᵢ` of
/// shape `d_out × d_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrausSet {
    pub d_in: usize,
    pub d_out: usize,
    pub terms: Vec<KrausTerm>,
    pub all_positive: bool,
}

impl KrausSet {
    pub fn new(d_in: usize, d_out: usize, terms: Vec<KrausTerm>) -> Result<Self> {
        for t in &terms {
            if t.op.shape() != (d_out, d_in) {
                return Err(Error::DimensionMismatch(format!(
                    "Kraus operator is {:?}, expected {:?}",
                    t.op.shape(),
                    (d_out, d_in)
                )));
            }
        }
        let all_positive = terms.iter().all(|t| t.coeff >= 0.0);
        Ok(Self { d_in, d_out, terms, all_positive })
    }

    /// `Σᵢ eᵢ Ẽᵢ† Ẽᵢ`.
    pub fn closure(&self) -> CMatrix {
        let mut acc = CMatrix::zeros(self.d_in, self.d_in);
        for t in &self.terms {
            acc += (t.op.adjoint() * &t.op).scale(t.coeff);
        }
        acc
    }

    pub fn closure_error(&self) -> f64 {
        linalg::frob(&(self.closure() - linalg::identity(self.d_in)))
    }

    /// Number of terms with `|eᵢ| > tol`.
    pub fn effective_len(&self, tol: f64) -> usize {
        self.terms.iter().filter(|t| t.coeff.abs() > tol).count()
    }

    /// Kraus operators `Eᵢ = √eᵢ Ẽᵢ` of a positive set.
    pub fn positive_operators(&self) -> Result<Vec<CMatrix>> {
        if !self.all_positive {
            return Err(Error::SignedKraus);
        }
        Ok(self.terms.iter().map(|t| t.op.scale(t.coeff.sqrt())).collect())
    }

    pub fn to_channel(&self) -> ChannelMap {
        let mut matrix = CMatrix::zeros(self.d_out * self.d_out, self.d_in * self.d_in);
        for t in &self.terms {
            matrix += linalg::kron(&t.op, &t.op.map(|z| z.conj())).scale(t.coeff);
        }
        ChannelMap { d_in: self.d_in, d_out: self.d_out, matrix }
    }
}

/// Eigenvalues with `|e| ≤ RANK_TOL_CHOI · d_in` are discarded.
pub const RANK_TOL_CHOI: f64 = 1e-10;

pub fn kraus_from_choi(ch: &ChoiMatrix) -> Result<KrausSet> {
    let spec = eig_hermitian(&ch.matrix)?;
    let cutoff = RANK_TOL_CHOI * ch.d_in as f64;
    let mut terms = Vec::new();
    for (k, &e) in spec.values.iter().enumerate() {
        if e.abs() <= cutoff {
            continue;
        }
        let v = spec.vectors.column(k);
        // Choi index (i, a) = i·d_out + a holds Ẽ[a, i].
        let op = CMatrix::from_fn(ch.d_out, ch.d_in, |a, i| v[i * ch.d_out + a]);
        terms.push(KrausTerm { coeff: e, op });
    }
    let all_positive = terms.iter().all(|t| t.coeff > 0.0);
    Ok(KrausSet { d_in: ch.d_in, d_out: ch.d_out, terms, all_positive })
}

/// `⟨k_E| U |μ⟩` as an operator on `H_S`, for `U` on `S ⊗ E`.
fn env_matrix_element(u: &CMatrix, d_s: usize, d_e: usize, k: usize, mu: &CVector) -> CMatrix {
    CMatrix::from_fn(d_s, d_s, |s, t| (0..d_e).map(|f| u[(s * d_e + k, t * d_e + f)] * mu[f]).sum())
}

fn split_dims(u: &UnitaryOperator, d_e: usize) -> Result<usize> {
    let n = u.matrix().nrows();
    if d_e == 0 || !n.is_multiple_of(d_e) {
        return Err(Error::DimensionMismatch(format!(
            "unitary dimension {n} is not a multiple of d_E = {d_e}"
        )));
    }
    Ok(n / d_e)
}

/// Operator-sum form of `ρ_S ↦ Tr_E(U (ρ_S ⊗ ω_E) U†)`:
/// terms `(λ_l, ⟨k_E|U|μ_l⟩)` from the eigen-decomposition `ω_E = Σ λ_l |μ_l⟩⟨μ_l|`.
pub fn kraus_factorized(u: &UnitaryOperator, omega_e: &DensityMatrix) -> Result<KrausSet> {
    let d_e = omega_e.matrix().nrows();
    let d_s = split_dims(u, d_e)?;
    let spec = eig_hermitian(omega_e.matrix())?;
    let mut terms = Vec::with_capacity(d_e * d_e);
    for (l, &lam) in spec.values.iter().enumerate() {
        let mu = spec.vectors.column(l).into_owned();
        for k in 0..d_e {
            terms.push(KrausTerm {
                coeff: lam.max(0.0),
                op: env_matrix_element(u.matrix(), d_s, d_e, k, &mu),
            });
        }
    }
    KrausSet::new(d_s, d_s, terms)
}

/// Operator-sum form for the classical-quantum family: terms
/// `(λ_il, ⟨k_E|U|μ_il⟩ Π̃ᵢ)` with `Π̃ᵢ = |ĩ⟩⟨ĩ|` and `ω̃ᵢ = Σ_l λ_il |μ_il⟩⟨μ_il|`.
///
/// Off the basis-diagonal domain this is one particular extension: it equals
/// the factorized construction precomposed with dephasing in `{|ĩ⟩}`.
pub fn kraus_classical_quantum(u: &UnitaryOperator, spec: &ClassicalQuantum) -> Result<KrausSet> {
    let d_e = spec.d_e;
    let d_s = split_dims(u, d_e)?;
    if spec.basis.nrows() != d_s {
        return Err(Error::DimensionMismatch(format!(
            "basis has dimension {}, unitary implies d_S = {d_s}",
            spec.basis.nrows()
        )));
    }
    let mut terms = Vec::new();
    for (i, omega) in spec.omegas.iter().enumerate() {
        let pi = linalg::projector(&spec.basis.column(i).into_owned());
        let eig = eig_hermitian(omega)?;
        for (l, &lam) in eig.values.iter().enumerate() {
            let mu = eig.vectors.column(l).into_owned();
            for k in 0..d_e {
                let d = env_matrix_element(u.matrix(), d_s, d_e, k, &mu);
                terms.push(KrausTerm { coeff: lam.max(0.0), op: d * &pi });
            }
        }
    }
    KrausSet::new(d_s, d_s, terms)
}

/// `Tr_E ∘ Ad_U ∘ Λ` as a matrix on vectorized operators.
pub fn reduced_dynamics_of(u: &CMatrix, lambda: &ChannelMap, d_s: usize, d_e: usize) -> Result<ChannelMap> {
    let n = d_s * d_e;
    if u.shape() != (n, n) || lambda.d_out != n {
        return Err(Error::DimensionMismatch(format!(
            "unitary {:?} and assignment output dim {} must act on S⊗E of dim {n}",
            u.shape(),
            lambda.d_out
        )));
    }
    ChannelMap::partial_trace_e(d_s, d_e).compose(&ChannelMap::unitary(u))?.compose(lambda)
}

pub fn reduced_dynamics(u: &UnitaryOperator, assign: &AssignmentMap) -> Result<ChannelMap> {
    reduced_dynamics_of(u.matrix(), &assign.map, assign.d_s, assign.d_e)
}

/// Unitary dilation of a trace-preserving CP map `L(C^{d_in}) → L(C^{d_in} ⊗ C^{d_env})`:
/// `Λ(x) = Tr_C(V (x ⊗ |0_E⟩⟨0_E| ⊗ |0_C⟩⟨0_C|) V†)` with `V` on `S ⊗ E ⊗ C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StinespringDilation {
    pub d_in: usize,
    pub d_env: usize,
    pub d_anc: usize,
    #[serde(with = "crate::serde_matrix")]
    pub unitary: CMatrix,
}

impl StinespringDilation {
    fn input_embedding(&self, x: &CMatrix) -> CMatrix {
        let e0 = linalg::unit(self.d_env, 0, 0);
        let c0 = linalg::unit(self.d_anc, 0, 0);
        linalg::kron_all(&[x, &e0, &c0])
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        let big = &self.unitary * self.input_embedding(x) * self.unitary.adjoint();
        linalg::partial_trace(&big, &[self.d_in * self.d_env, self.d_anc], &[true, false])
    }

    pub fn channel(&self) -> ChannelMap {
        ChannelMap::from_fn(self.d_in, self.d_in * self.d_env, |x| self.apply(x))
    }
}

pub fn stinespring(k: &KrausSet) -> Result<StinespringDilation> {
    let ops = k.positive_operators()?;
    if !k.d_out.is_multiple_of(k.d_in) {
        return Err(Error::DimensionMismatch(format!(
            "output dim {} is not a multiple of input dim {}",
            k.d_out, k.d_in
        )));
    }
    let closure = k.closure_error();
    if closure > EQ_TOL * (k.d_in as f64).max(1.0) {
        return Err(Error::NotTracePreserving(closure));
    }
    let d_env = k.d_out / k.d_in;
    let d_anc = ops.len().max(1);
    let n = k.d_out * d_anc;

    // Isometry W|s⟩ = Σ_c E_c|s⟩ ⊗ |c⟩, placed in the columns of the inputs
    // |s⟩|0_E⟩|0_C⟩; the remaining columns complete it to a unitary.
    let mut w = CMatrix::zeros(n, k.d_in);
    for (cidx, e) in ops.iter().enumerate() {
        for o in 0..k.d_out {
            for s in 0..k.d_in {
                w[(o * d_anc + cidx, s)] = e[(o, s)];
            }
        }
    }
    let completed = linalg::complete_unitary(&w);
    let stride = d_env * d_anc;
    let mut unitary = CMatrix::zeros(n, n);
    let mut rest = k.d_in;
    for col in 0..n {
        if col % stride == 0 {
            unitary.set_column(col, &completed.column(col / stride));
        } else {
            unitary.set_column(col, &completed.column(rest));
            rest += 1;
        }
    }
    Ok(StinespringDilation { d_in: k.d_in, d_env, d_anc, unitary })
}

/// Largest `‖Tr_E(Λ(ρ)) − ρ‖_F` over the given system states.
pub fn verify_fixed_point(assign: &AssignmentMap, samples: &[CMatrix]) -> f64 {
    samples
        .iter()
        .map(|rho| {
            let joint = assign.map.apply(rho);
            linalg::frob(&(linalg::ptrace_e(&joint, assign.d_s, assign.d_e) - rho))
        })
        .fold(0.0, f64::max)
}

/// Random CP trace-preserving channel on `C^d` with `r` Kraus operators,
/// obtained from the first `d` columns of a Haar unitary on `C^{d r}`.
pub fn random_channel<R: rand::Rng + ?Sized>(d: usize, r: usize, rng: &mut R) -> ChannelMap {
    let u = crate::tensor::haar_unitary_matrix(d * r, rng);
    let terms = (0..r)
        .map(|k| KrausTerm { coeff: 1.0, op: CMatrix::from_fn(d, d, |a, s| u[(a * r + k, s)]) })
        .collect();
    KrausSet { d_in: d, d_out: d, terms, all_positive: true }.to_channel()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, frob, identity};
    use crate::tensor::{random_density_matrix, random_haar_unitary, seeded_rng, SpaceLayout};

    fn density(m: CMatrix) -> DensityMatrix {
        let d = m.nrows();
        DensityMatrix::from_matrix(SpaceLayout::single(crate::tensor::Factor::E, d), m).unwrap()
    }

    #[test]
    fn identity_channel_choi_is_max_entangled() {
        let id = ChannelMap::identity(2);
        let ch = choi(&id);
        let omega = linalg::ket(4, 0) + linalg::ket(4, 3);
        assert!(frob(&(&ch.matrix - linalg::projector(&omega))) < 1e-15);
        assert!(is_cp(&ch) && is_tp(&id));
        let k = kraus_from_choi(&ch).unwrap();
        assert_eq!(k.terms.len(), 1);
        assert!((k.terms[0].coeff - 2.0).abs() < 1e-12);
        assert!(k.closure_error() < 1e-12);
    }

    #[test]
    fn transpose_is_not_cp() {
        let t = ChannelMap::transpose(2);
        let ch = choi(&t);
        assert!(is_hermitian_preserving(&t));
        assert!(is_tp(&t));
        assert!(!is_cp(&ch));
        // Choi of the transpose is the swap: eigenvalues (1, 1, 1, -1).
        assert!((ch.min_eigenvalue() + 1.0).abs() < 1e-12);
        assert!(!kraus_from_choi(&ch).unwrap().all_positive);
    }

    #[test]
    fn unitary_channel_has_single_kraus() {
        let mut rng = seeded_rng(5);
        let v = crate::tensor::haar_unitary_matrix(3, &mut rng);
        let k = kraus_from_choi(&choi(&ChannelMap::unitary(&v))).unwrap();
        assert_eq!(k.terms.len(), 1);
        let e = k.terms[0].op.scale(k.terms[0].coeff.sqrt());
        // E = e^{iφ} V
        let phase = (v.adjoint() * &e).trace() / c(3.0, 0.0);
        assert!((phase.norm() - 1.0).abs() < 1e-10);
        assert!(frob(&(e - &v * phase)) < 1e-9);
    }

    #[test]
    fn factorized_swap_and_identity() {
        let mut rng = seeded_rng(6);
        let omega = density(random_density_matrix(2, 2, &mut rng));
        let k = kraus_factorized(&UnitaryOperator::swap(2), &omega).unwrap();
        let rho = random_density_matrix(2, 2, &mut rng);
        let out = k.to_channel().apply(&rho);
        assert!(frob(&(out - omega.matrix())) < 1e-12);

        let id = UnitaryOperator::identity(SpaceLayout::se(2, 2));
        let k = kraus_factorized(&id, &omega).unwrap();
        assert!(k.to_channel().distance(&ChannelMap::identity(2)) < 1e-12);
    }

    #[test]
    fn factorized_pure_env_gives_d_e_terms() {
        let mut rng = seeded_rng(7);
        let omega = density(random_density_matrix(3, 1, &mut rng));
        let u = random_haar_unitary(SpaceLayout::se(2, 3), &mut rng);
        let k = kraus_factorized(&u, &omega).unwrap();
        assert_eq!(k.effective_len(1e-10), 3);
        assert!(k.closure_error() < 1e-10);
    }

    #[test]
    fn stinespring_of_pure_attachment_has_trivial_ancilla() {
        let mut rng = seeded_rng(8);
        let psi = random_density_matrix(2, 1, &mut rng);
        let lambda = ChannelMap::from_fn(2, 4, |x| linalg::kron(x, &psi));
        let k = kraus_from_choi(&choi(&lambda)).unwrap();
        let dil = stinespring(&k).unwrap();
        assert_eq!(dil.d_anc, 1);
        assert_eq!(dil.d_env, 2);
        assert!(linalg::unitarity_defect(&dil.unitary) < 1e-10);
        assert!(dil.channel().distance(&lambda) < 1e-9);
    }

    #[test]
    fn stinespring_rejects_signed_and_non_tp() {
        let k = kraus_from_choi(&choi(&ChannelMap::transpose(2))).unwrap();
        assert!(matches!(stinespring(&k), Err(Error::SignedKraus)));
        let half = KrausSet::new(2, 2, vec![KrausTerm { coeff: 0.5, op: identity(2) }]).unwrap();
        assert!(matches!(stinespring(&half), Err(Error::NotTracePreserving(_))));
    }

    #[test]
    fn partial_trace_channel_matches_direct() {
        let mut rng = seeded_rng(9);
        let rho = random_density_matrix(6, 6, &mut rng);
        let tr = ChannelMap::partial_trace_e(2, 3);
        assert!(frob(&(tr.apply(&rho) - linalg::ptrace_e(&rho, 2, 3))) < 1e-14);
    }

    #[test]
    fn choi_round_trip() {
        let mut rng = seeded_rng(10);
        let ch = random_channel(3, 2, &mut rng);
        assert!(choi(&ch).to_channel().distance(&ch) == 0.0);
    }
}
