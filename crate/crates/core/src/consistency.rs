//! Operator subspaces, the partial-trace kernel `V₀ = V ∩ ker Tr_E`,
//! U-/G-consistency, assignment maps and the CP check for consistent subspaces.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{self, choi, reduced_dynamics_of, ChannelMap, EQ_TOL};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, RANK_REL_TOL};
use crate::tensor::{ginibre, haar_unitary_matrix};

/// Consistency violations `‖Tr_E(U Y U†)‖_F` above this fail.
pub const CONSISTENCY_TOL: f64 = 1e-9;

/// Subspace of `L(H_S ⊗ H_E)` with an orthonormal basis of row-major
/// vectorized operators in the columns of `basis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSubspace {
    pub d_s: usize,
    pub d_e: usize,
    #[serde(with = "crate::serde_matrix")]
    pub basis: CMatrix,
}

impl OperatorSubspace {
    pub fn zero(d_s: usize, d_e: usize) -> Self {
        let n = d_s * d_e;
        Self { d_s, d_e, basis: CMatrix::zeros(n * n, 0) }
    }

    /// All of `L(H_S ⊗ H_E)`.
    pub fn full(d_s: usize, d_e: usize) -> Self {
        let n = d_s * d_e;
        Self { d_s, d_e, basis: linalg::identity(n * n) }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.d_s * self.d_e
    }

    pub fn element(&self, k: usize) -> CMatrix {
        let n = self.ambient_dim();
        linalg::unvec_rm(&self.basis.column(k).into_owned(), n, n)
    }

    pub fn elements(&self) -> Vec<CMatrix> {
        (0..self.dim()).map(|k| self.element(k)).collect()
    }

    /// `‖Bᴴ B − I‖_F`.
    pub fn gram_defect(&self) -> f64 {
        linalg::frob(&(self.basis.adjoint() * &self.basis - linalg::identity(self.dim())))
    }

    /// Distance from `x` to the subspace.
    pub fn residual(&self, x: &CMatrix) -> f64 {
        let v = linalg::vec_rm(x);
        let proj = &self.basis * (self.basis.adjoint() * &v);
        (v - proj).norm()
    }

    pub fn contains(&self, x: &CMatrix, tol: f64) -> bool {
        self.residual(x) <= tol * linalg::frob(x).max(1.0)
    }

    /// Largest distance from `Y†` to the subspace over basis elements `Y`.
    pub fn adjoint_closure_defect(&self) -> f64 {
        self.elements().iter().map(|y| self.residual(&y.adjoint())).fold(0.0, f64::max)
    }

    /// `max ‖Tr_E Y‖_F` over basis elements.
    pub fn partial_trace_image_norm(&self) -> f64 {
        self.elements()
            .iter()
            .map(|y| linalg::frob(&linalg::ptrace_e(y, self.d_s, self.d_e)))
            .fold(0.0, f64::max)
    }

    /// Real-orthonormal basis (w.r.t. `Re tr(A† B)`) of the Hermitian
    /// elements of the subspace.
    pub fn hermitian_basis(&self) -> Vec<CMatrix> {
        let mut out: Vec<CMatrix> = Vec::new();
        let i = linalg::c(0.0, 1.0);
        for y in self.elements() {
            for cand in [linalg::hermitian_part(&y), linalg::hermitian_part(&(y * i))] {
                let mut h = cand;
                for _ in 0..2 {
                    for q in &out {
                        let proj = linalg::hs_inner(q, &h).re;
                        h -= q.scale(proj);
                    }
                }
                let norm = linalg::frob(&h);
                if norm > 1e-8 {
                    out.push(h.unscale(norm));
                }
            }
        }
        out
    }
}

/// Orthonormal basis of the span of `states` (numerical rank with singular
/// values `≤ 1e−9 · σ_max` discarded).
pub fn span_from_states(states: &[CMatrix], d_s: usize, d_e: usize) -> OperatorSubspace {
    let n = d_s * d_e;
    if states.is_empty() {
        return OperatorSubspace::zero(d_s, d_e);
    }
    let cols: Vec<_> = states
        .iter()
        .map(|s| {
            assert_eq!(s.shape(), (n, n), "state does not live on S⊗E");
            linalg::vec_rm(s)
        })
        .collect();
    let m = CMatrix::from_columns(&cols);
    OperatorSubspace { d_s, d_e, basis: linalg::range_basis(&m, RANK_REL_TOL) }
}

/// `Tr_E V` as a subspace of `L(H_S)` (stored with `d_e = 1`).
pub fn trace_image(v: &OperatorSubspace) -> OperatorSubspace {
    let t = ChannelMap::partial_trace_e(v.d_s, v.d_e).matrix;
    OperatorSubspace { d_s: v.d_s, d_e: 1, basis: linalg::range_basis(&(t * &v.basis), RANK_REL_TOL) }
}

/// `V₀ = V ∩ ker Tr_E`.
pub fn kernel_tr_e(v: &OperatorSubspace) -> OperatorSubspace {
    if v.dim() == 0 {
        return v.clone();
    }
    let t = ChannelMap::partial_trace_e(v.d_s, v.d_e).matrix;
    let coeffs = linalg::null_space(&(t * &v.basis), RANK_REL_TOL);
    OperatorSubspace { d_s: v.d_s, d_e: v.d_e, basis: &v.basis * coeffs }
}

/// `max_Y ‖Tr_E(U Y U†)‖_F` over the kernel basis.
pub fn consistency_violation(kernel: &OperatorSubspace, u: &CMatrix) -> f64 {
    kernel
        .elements()
        .iter()
        .map(|y| linalg::frob(&linalg::ptrace_e(&(u * y * u.adjoint()), kernel.d_s, kernel.d_e)))
        .fold(0.0, f64::max)
}

/// `Ad_U(V₀) ⊆ ker Tr_E`.
pub fn is_u_consistent(v: &OperatorSubspace, u: &CMatrix) -> bool {
    consistency_violation(&kernel_tr_e(v), u) <= CONSISTENCY_TOL
}

/// `V = {X : Tr_S X = tr(X) ω_E}` on `C^{d_s} ⊗ C^{d_e}`.
pub fn marginal_locked_subspace(d_s: usize, omega_e: &CMatrix) -> OperatorSubspace {
    let d_e = omega_e.nrows();
    let n = d_s * d_e;
    let cols: Vec<_> = (0..n * n)
        .map(|k| {
            let x = linalg::unit(n, k / n, k % n);
            linalg::vec_rm(&(linalg::ptrace_s(&x, d_s, d_e) - omega_e * x.trace()))
        })
        .collect();
    let constraint = CMatrix::from_columns(&cols);
    OperatorSubspace { d_s, d_e, basis: linalg::null_space(&constraint, RANK_REL_TOL) }
}

/// Span of `k` random Hermitian operators `H − Tr_E(H) ⊗ I_E/d_E`, a
/// subspace of `ker Tr_E` closed under adjoints.
pub fn random_kernel_subspace<R: Rng + ?Sized>(
    d_s: usize,
    d_e: usize,
    k: usize,
    rng: &mut R,
) -> OperatorSubspace {
    let id_e = linalg::identity(d_e).unscale(d_e as f64);
    let ys: Vec<CMatrix> = (0..k)
        .map(|_| {
            let h = crate::tensor::random_hermitian(d_s * d_e, rng);
            let tr = linalg::ptrace_e(&h, d_s, d_e);
            &h - linalg::kron(&tr, &id_e)
        })
        .collect();
    span_from_states(&ys, d_s, d_e)
}

/// A set `G` of joint unitaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UnitarySetSpec {
    ExplicitList {
        #[serde(with = "crate::serde_matrix::vec")]
        unitaries: Vec<CMatrix>,
    },
    AllUnitaries {
        samples: usize,
    },
    LocalProducts {
        samples: usize,
    },
    SwapOnly,
}

impl UnitarySetSpec {
    pub fn label(&self) -> &'static str {
        match self {
            UnitarySetSpec::ExplicitList { .. } => "explicit",
            UnitarySetSpec::AllUnitaries { .. } => "all",
            UnitarySetSpec::LocalProducts { .. } => "local",
            UnitarySetSpec::SwapOnly => "swap",
        }
    }

    pub fn validate(&self, d_s: usize, d_e: usize) -> Result<()> {
        match self {
            UnitarySetSpec::ExplicitList { unitaries } => {
                for u in unitaries {
                    if u.shape() != (d_s * d_e, d_s * d_e) {
                        return Err(Error::DimensionMismatch(format!(
                            "unitary is {:?}, S⊗E has dimension {}",
                            u.shape(),
                            d_s * d_e
                        )));
                    }
                    let defect = linalg::unitarity_defect(u);
                    if defect > 1e-9 * (u.nrows() as f64).sqrt() {
                        return Err(Error::NotUnitary(defect));
                    }
                }
                Ok(())
            }
            UnitarySetSpec::SwapOnly if d_s != d_e => {
                Err(Error::DimensionMismatch(format!("swap needs d_S = d_E, got {d_s} and {d_e}")))
            }
            _ => Ok(()),
        }
    }

    /// The unitaries to check: the full list for finite sets, seeded draws
    /// otherwise.
    pub fn sample<R: Rng + ?Sized>(&self, d_s: usize, d_e: usize, rng: &mut R) -> Result<Vec<CMatrix>> {
        self.validate(d_s, d_e)?;
        Ok(match self {
            UnitarySetSpec::ExplicitList { unitaries } => unitaries.clone(),
            UnitarySetSpec::AllUnitaries { samples } => {
                (0..*samples).map(|_| haar_unitary_matrix(d_s * d_e, rng)).collect()
            }
            UnitarySetSpec::LocalProducts { samples } => (0..*samples)
                .map(|_| {
                    let us = haar_unitary_matrix(d_s, rng);
                    let ue = haar_unitary_matrix(d_e, rng);
                    linalg::kron(&us, &ue)
                })
                .collect(),
            UnitarySetSpec::SwapOnly => vec![linalg::swap(d_s, d_e)],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GConsistencyReport {
    pub set: String,
    pub consistent: bool,
    pub worst_violation: f64,
    pub checked: usize,
    /// Algebraic verdict where one is available: `V₀ = {0}` is consistent for
    /// every `U`, and local products always map `ker Tr_E` into itself.
    pub exact: Option<bool>,
    pub method: String,
}

pub fn is_g_consistent<R: Rng + ?Sized>(
    v: &OperatorSubspace,
    g: &UnitarySetSpec,
    rng: &mut R,
) -> Result<GConsistencyReport> {
    let kernel = kernel_tr_e(v);
    let unitaries = g.sample(v.d_s, v.d_e, rng)?;
    g_consistency_with(&kernel, g, &unitaries)
}

fn g_consistency_with(
    kernel: &OperatorSubspace,
    g: &UnitarySetSpec,
    unitaries: &[CMatrix],
) -> Result<GConsistencyReport> {
    let worst = unitaries.iter().map(|u| consistency_violation(kernel, u)).fold(0.0, f64::max);
    let (exact, method) = if kernel.dim() == 0 {
        (Some(true), "trivial kernel")
    } else {
        match g {
            UnitarySetSpec::LocalProducts { .. } => (
                Some(kernel.partial_trace_image_norm() <= CONSISTENCY_TOL),
                "local products preserve ker Tr_E",
            ),
            UnitarySetSpec::ExplicitList { .. } | UnitarySetSpec::SwapOnly => {
                (Some(worst <= CONSISTENCY_TOL), "enumerated")
            }
            UnitarySetSpec::AllUnitaries { .. } => (None, "sampled"),
        }
    };
    Ok(GConsistencyReport {
        set: g.label().to_string(),
        consistent: worst <= CONSISTENCY_TOL && exact != Some(false),
        worst_violation: worst,
        checked: unitaries.len(),
        exact,
        method: method.to_string(),
    })
}

/// A linear map `L(H_S) → L(H_S ⊗ H_E)` together with its domain `Tr_E V`
/// and the kernel `V₀` it may be shifted by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentMap {
    pub d_s: usize,
    pub d_e: usize,
    pub map: ChannelMap,
    pub domain: OperatorSubspace,
    pub kernel: OperatorSubspace,
    pub trace_consistent: bool,
    pub hermitian: bool,
    pub cp: bool,
}

impl AssignmentMap {
    /// Wrap `map` as an assignment for the subspace `v`, computing flags.
    pub fn new(map: ChannelMap, v: &OperatorSubspace) -> Result<Self> {
        if map.d_in != v.d_s || map.d_out != v.ambient_dim() {
            return Err(Error::DimensionMismatch(format!(
                "assignment maps dim {} → {}, subspace needs {} → {}",
                map.d_in,
                map.d_out,
                v.d_s,
                v.ambient_dim()
            )));
        }
        Ok(Self::with_parts(map, trace_image(v), kernel_tr_e(v), v.d_s, v.d_e))
    }

    fn with_parts(
        map: ChannelMap,
        domain: OperatorSubspace,
        kernel: OperatorSubspace,
        d_s: usize,
        d_e: usize,
    ) -> Self {
        let ch = choi(&map);
        let mut out = Self {
            d_s,
            d_e,
            hermitian: linalg::is_hermitian(&ch.matrix),
            cp: channel::is_cp(&ch),
            map,
            domain,
            kernel,
            trace_consistent: false,
        };
        out.trace_consistent = out.trace_consistency_defect() <= EQ_TOL;
        out
    }

    /// `‖(Tr_E ∘ Λ − id)|_domain‖_F`.
    pub fn trace_consistency_defect(&self) -> f64 {
        let t = ChannelMap::partial_trace_e(self.d_s, self.d_e).matrix;
        linalg::frob(&(t * &self.map.matrix * &self.domain.basis - &self.domain.basis))
    }

    /// Largest distance of `Λ(x)` from `v` over the domain basis.
    pub fn range_defect(&self, v: &OperatorSubspace) -> f64 {
        (0..self.domain.dim())
            .map(|k| v.residual(&self.map.apply(&self.domain.element(k))))
            .fold(0.0, f64::max)
    }

    pub fn min_choi_eigenvalue(&self) -> f64 {
        choi(&self.map).min_eigenvalue()
    }
}

/// Minimum-norm section: `Λ = B (T B)⁺`, with `B` the basis of `V` and `T`
/// the matrix of `Tr_E`.
pub fn canonical_assignment(v: &OperatorSubspace) -> AssignmentMap {
    let t = ChannelMap::partial_trace_e(v.d_s, v.d_e).matrix;
    let section = &v.basis * linalg::pinv(&(t * &v.basis), RANK_REL_TOL);
    let map = ChannelMap { d_in: v.d_s, d_out: v.ambient_dim(), matrix: section };
    AssignmentMap::with_parts(map, trace_image(v), kernel_tr_e(v), v.d_s, v.d_e)
}

/// `Λ̃ = Λ + δ` where `δ` must take values in `V₀`.
pub fn perturb_assignment(base: &AssignmentMap, delta: &ChannelMap) -> Result<AssignmentMap> {
    if (delta.d_in, delta.d_out) != (base.map.d_in, base.map.d_out) {
        return Err(Error::DimensionMismatch("perturbation shape differs from assignment".into()));
    }
    let k = &base.kernel.basis;
    let escaped = &delta.matrix - k * (k.adjoint() * &delta.matrix);
    let residual = linalg::frob(&escaped);
    if residual > 1e-9 * linalg::frob(&delta.matrix).max(1.0) {
        return Err(Error::OutsideKernel(residual));
    }
    Ok(AssignmentMap::with_parts(
        base.map.add(delta)?,
        base.domain.clone(),
        base.kernel.clone(),
        base.d_s,
        base.d_e,
    ))
}

/// Random linear map `L(H_S) → V₀` (zero when the kernel is trivial).
pub fn random_kernel_delta<R: Rng + ?Sized>(
    kernel: &OperatorSubspace,
    scale: f64,
    rng: &mut R,
) -> ChannelMap {
    let d_in = kernel.d_s;
    let coeffs = ginibre(kernel.dim(), d_in * d_in, rng);
    ChannelMap { d_in, d_out: kernel.ambient_dim(), matrix: (&kernel.basis * coeffs).scale(scale) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitaryVerdict {
    pub index: usize,
    pub cp: bool,
    pub tp_on_domain: bool,
    pub min_choi_eigenvalue: f64,
    pub perturbed_cp: bool,
    /// Largest Choi distance between `Ψ̃` (perturbed assignment) and `Ψ`.
    pub perturbation_distance: f64,
    pub consistency_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub inputs_hash: String,
    pub dim_v: usize,
    pub dim_domain: usize,
    pub dim_kernel: usize,
    pub g_consistency: GConsistencyReport,
    pub canonical_cp: bool,
    pub canonical_min_choi_eigenvalue: f64,
    /// `"canonical"` or `"supplied"`.
    pub assignment_source: String,
    pub assignment_cp: bool,
    pub assignment_valid: bool,
    pub verdicts: Vec<UnitaryVerdict>,
    pub hypotheses_hold: bool,
    pub conclusion_holds: bool,
    pub passes: bool,
}

fn inputs_hash(v: &OperatorSubspace, g: &UnitarySetSpec) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(v).unwrap_or_default());
    h.update(serde_json::to_vec(g).unwrap_or_default());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn theorem1_verify<R: Rng + ?Sized>(
    v: &OperatorSubspace,
    g: &UnitarySetSpec,
    rng: &mut R,
) -> Result<Theorem1Report> {
    theorem1_verify_with(v, g, None, 3, rng)
}

/// Check the implication "G-consistent `V` and CP assignment ⇒ every
/// `Ψ = Tr_E ∘ Ad_U ∘ Λ̃` (`U ∈ G`) is CP and independent of the `V₀` shift".
///
/// `assignment` may supply a CP representative of the class `Λ + V₀` when the
/// minimum-norm section is not itself CP; it must be a trace-consistent map
/// into `V` and differ from the canonical section by a `V₀`-valued map.
pub fn theorem1_verify_with<R: Rng + ?Sized>(
    v: &OperatorSubspace,
    g: &UnitarySetSpec,
    assignment: Option<&AssignmentMap>,
    perturbations: usize,
    rng: &mut R,
) -> Result<Theorem1Report> {
    let canonical = canonical_assignment(v);
    let (lambda, source) = match assignment {
        Some(a) => (a.clone(), "supplied"),
        None => (canonical.clone(), "canonical"),
    };
    let assignment_valid = match assignment {
        None => lambda.trace_consistent,
        Some(a) => {
            let diff = a.map.add(&ChannelMap {
                d_in: canonical.map.d_in,
                d_out: canonical.map.d_out,
                matrix: -&canonical.map.matrix,
            })?;
            // On the domain the two sections may only differ inside V₀.
            let k = &canonical.kernel.basis;
            let on_domain = &diff.matrix * &canonical.domain.basis;
            let escaped = &on_domain - k * (k.adjoint() * &on_domain);
            a.trace_consistent
                && a.range_defect(v) <= 1e-9
                && linalg::frob(&escaped) <= 1e-9 * linalg::frob(&on_domain).max(1.0)
        }
    };

    let unitaries = g.sample(v.d_s, v.d_e, rng)?;
    let g_report = g_consistency_with(&canonical.kernel, g, &unitaries)?;
    let deltas: Vec<ChannelMap> =
        (0..perturbations).map(|_| random_kernel_delta(&canonical.kernel, 1.0, rng)).collect();

    let mut verdicts = Vec::with_capacity(unitaries.len());
    for (index, u) in unitaries.iter().enumerate() {
        let psi = reduced_dynamics_of(u, &lambda.map, v.d_s, v.d_e)?;
        let ch = choi(&psi);
        let mut perturbation_distance: f64 = 0.0;
        let mut perturbed_cp = true;
        for delta in &deltas {
            let tilde = perturb_assignment(&lambda, delta)?;
            let psi_t = reduced_dynamics_of(u, &tilde.map, v.d_s, v.d_e)?;
            perturbation_distance = perturbation_distance.max(psi_t.distance(&psi));
            perturbed_cp &= channel::is_cp(&choi(&psi_t));
        }
        verdicts.push(UnitaryVerdict {
            index,
            cp: channel::is_cp(&ch),
            tp_on_domain: channel::trace_defect_on(&psi, &lambda.domain.basis) <= EQ_TOL,
            min_choi_eigenvalue: ch.min_eigenvalue(),
            perturbed_cp,
            perturbation_distance,
            consistency_violation: consistency_violation(&canonical.kernel, u),
        });
    }

    let hypotheses_hold = g_report.consistent && lambda.cp && assignment_valid;
    let conclusion_holds =
        verdicts.iter().all(|r| r.cp && r.perturbed_cp && r.perturbation_distance <= EQ_TOL);
    Ok(Theorem1Report {
        inputs_hash: inputs_hash(v, g),
        dim_v: v.dim(),
        dim_domain: canonical.domain.dim(),
        dim_kernel: canonical.kernel.dim(),
        canonical_cp: canonical.cp,
        canonical_min_choi_eigenvalue: canonical.min_choi_eigenvalue(),
        g_consistency: g_report,
        assignment_source: source.to_string(),
        assignment_cp: lambda.cp,
        assignment_valid,
        verdicts,
        hypotheses_hold,
        conclusion_holds,
        passes: !hypotheses_hold || conclusion_holds,
    })
}

/// `Λ_γ(x) = x ⊗ ω̃_E + γ (x − tr(x) I_S/d_S) ⊗ Δ` with `Δ` traceless
/// Hermitian: trace-consistent and Hermitian for every `γ`.
pub fn witness_assignment(d_s: usize, omega_e: &CMatrix, delta: &CMatrix, gamma: f64) -> ChannelMap {
    let id = linalg::identity(d_s).unscale(d_s as f64);
    ChannelMap::from_fn(d_s, d_s * omega_e.nrows(), |x| {
        let centered = x - id.clone() * x.trace();
        linalg::kron(x, omega_e) + linalg::kron(&centered, delta).scale(gamma)
    })
}

/// Largest `γ ∈ [0, gamma_max]` for which `Λ_γ` is CP (bisection on the
/// smallest Choi eigenvalue, which is concave in `γ`).
pub fn witness_cp_threshold(d_s: usize, omega_e: &CMatrix, delta: &CMatrix, gamma_max: f64) -> f64 {
    let cp = |g: f64| channel::is_cp(&choi(&witness_assignment(d_s, omega_e, delta, g)));
    if !cp(0.0) {
        return 0.0;
    }
    if cp(gamma_max) {
        return gamma_max;
    }
    let (mut lo, mut hi) = (0.0, gamma_max);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if cp(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessSearch {
    pub draws: usize,
    pub best_min_eigenvalue: f64,
    pub best_index: usize,
    pub found: bool,
}

/// Search Haar unitaries for one making `Tr_E ∘ Ad_U ∘ Λ` clearly non-CP
/// (smallest Choi eigenvalue `≤ threshold`). Stops at the first hit.
pub fn search_non_cp<R: Rng + ?Sized>(
    lambda: &ChannelMap,
    d_s: usize,
    d_e: usize,
    draws: usize,
    threshold: f64,
    rng: &mut R,
) -> Result<WitnessSearch> {
    let mut best = f64::INFINITY;
    let mut best_index = 0;
    for k in 0..draws {
        let u = haar_unitary_matrix(d_s * d_e, rng);
        let ev = choi(&reduced_dynamics_of(&u, lambda, d_s, d_e)?).min_eigenvalue();
        if ev < best {
            best = ev;
            best_index = k;
        }
        if best <= threshold {
            return Ok(WitnessSearch { draws: k + 1, best_min_eigenvalue: best, best_index, found: true });
        }
    }
    Ok(WitnessSearch { draws, best_min_eigenvalue: best, best_index, found: false })
}
