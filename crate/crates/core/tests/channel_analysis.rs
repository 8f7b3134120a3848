use cpreduce::channel::{
    self, choi, is_cp, is_hermitian_preserving, is_tp, kraus_classical_quantum, kraus_factorized,
    kraus_from_choi, random_channel, reduced_dynamics, stinespring, verify_fixed_point, ChannelMap,
};
use cpreduce::consistency::{canonical_assignment, AssignmentMap, OperatorSubspace};
use cpreduce::families::{sample_member, ClassicalQuantum, FamilySpec, MarkovBlocks};
use cpreduce::linalg::{self, CMatrix};
use cpreduce::tensor::{
    haar_unitary_matrix, random_density_matrix, seeded_rng, BlockStructure, DensityMatrix, Factor,
    SpaceLayout, UnitaryOperator,
};
use proptest::prelude::*;

/// `x ↦ Tr_E(U (x ⊗ ω) U†)` evaluated entry by entry, independent of the
/// superoperator code path.
fn direct_factorized(u: &CMatrix, omega: &CMatrix, d_s: usize) -> ChannelMap {
    let d_e = omega.nrows();
    ChannelMap::from_fn(d_s, d_s, |x| {
        let joint = u * linalg::kron(x, omega) * u.adjoint();
        CMatrix::from_fn(d_s, d_s, |a, b| (0..d_e).map(|e| joint[(a * d_e + e, b * d_e + e)]).sum())
    })
}

fn unitary(u: CMatrix, d_s: usize, d_e: usize) -> UnitaryOperator {
    UnitaryOperator::from_matrix(SpaceLayout::se(d_s, d_e), u).unwrap()
}

fn env_state(m: CMatrix) -> DensityMatrix {
    DensityMatrix::from_matrix(SpaceLayout::single(Factor::E, m.nrows()), m).unwrap()
}

#[test]
fn factorized_kraus_matches_reduced_dynamics() {
    let mut rng = seeded_rng(100);
    for k in 0..200 {
        let d = 2 + k % 2;
        let omega = random_density_matrix(d, 1 + k % d, &mut rng);
        let u = haar_unitary_matrix(d * d, &mut rng);
        let kraus = kraus_factorized(&unitary(u.clone(), d, d), &env_state(omega.clone())).unwrap();
        assert!(kraus.all_positive);
        assert!(kraus.closure_error() <= 1e-10, "closure {}", kraus.closure_error());

        let psi = kraus.to_channel();
        let ch = choi(&psi);
        assert!(ch.min_eigenvalue() >= -1e-9);
        assert!(is_tp(&psi));
        assert!(psi.distance(&direct_factorized(&u, &omega, d)) <= 1e-9);

        let attach = ChannelMap::from_fn(d, d * d, |x| linalg::kron(x, &omega));
        let lambda = AssignmentMap::new(attach, &OperatorSubspace::full(d, d)).unwrap();
        let via_assignment = reduced_dynamics(&unitary(u, d, d), &lambda).unwrap();
        assert!(via_assignment.distance(&psi) <= 1e-9);
    }
}

#[test]
fn swap_gives_constant_channel() {
    let mut rng = seeded_rng(3);
    let omega = random_density_matrix(3, 3, &mut rng);
    let k = kraus_factorized(&UnitaryOperator::swap(3), &env_state(omega.clone())).unwrap();
    let rho = random_density_matrix(3, 2, &mut rng);
    assert!(linalg::frob(&(k.to_channel().apply(&rho) - &omega)) < 1e-12);
}

#[test]
fn classical_quantum_agrees_on_diagonal_states() {
    let mut rng = seeded_rng(200);
    for k in 0..100 {
        let (d_s, d_e) = (2 + k % 2, 2 + (k / 2) % 2);
        let cq = ClassicalQuantum::random(d_s, d_e, &mut rng);
        let u = haar_unitary_matrix(d_s * d_e, &mut rng);
        let kraus = kraus_classical_quantum(&unitary(u.clone(), d_s, d_e), &cq).unwrap();
        assert!(kraus.all_positive);
        assert!(kraus.closure_error() <= 1e-10);
        let psi = kraus.to_channel();
        assert!(is_cp(&choi(&psi)) && is_tp(&psi));

        // Oracle: evolve the actual family member and trace out E.
        let spec = FamilySpec::ClassicalQuantum(cq.clone());
        let params = spec.random_params(&mut rng);
        let member = sample_member(&spec, &params).unwrap();
        let evolved = linalg::ptrace_e(&(&u * member.matrix() * u.adjoint()), d_s, d_e);
        let rho_s = linalg::ptrace_e(member.matrix(), d_s, d_e);
        assert!(linalg::frob(&(psi.apply(&rho_s) - evolved)) <= 1e-10);
    }
}

#[test]
fn classical_quantum_with_equal_states_is_dephased_factorized() {
    let mut rng = seeded_rng(4);
    let (d_s, d_e) = (3, 2);
    let mut cq = ClassicalQuantum::random(d_s, d_e, &mut rng);
    let omega = random_density_matrix(d_e, d_e, &mut rng);
    cq.omegas = vec![omega.clone(); d_s];
    let u = haar_unitary_matrix(d_s * d_e, &mut rng);
    let cq_channel = kraus_classical_quantum(&unitary(u.clone(), d_s, d_e), &cq).unwrap().to_channel();

    let basis = cq.basis.clone();
    let dephase = ChannelMap::from_fn(d_s, d_s, |x| {
        (0..d_s).fold(CMatrix::zeros(d_s, d_s), |acc, i| {
            let p = linalg::projector(&basis.column(i).into_owned());
            acc + &p * x * &p
        })
    });
    let expected = direct_factorized(&u, &omega, d_s).compose(&dephase).unwrap();
    assert!((&choi(&cq_channel).matrix - &choi(&expected).matrix).norm() < 1e-10);
}

#[test]
fn identity_case_of_classical_quantum() {
    let mut rng = seeded_rng(6);
    let cq = ClassicalQuantum::random(2, 2, &mut rng);
    let k = kraus_classical_quantum(&UnitaryOperator::identity(SpaceLayout::se(2, 2)), &cq).unwrap();
    let p = linalg::projector(&cq.basis.column(1).into_owned());
    let rho = p.scale(0.3) + linalg::projector(&cq.basis.column(0).into_owned()).scale(0.7);
    assert!(linalg::frob(&(k.to_channel().apply(&rho) - &rho)) < 1e-12);
}

/// `t · id + (1 − t) · transpose`, Hermitian and trace preserving for every `t`.
fn mixed_transpose(d: usize, t: f64) -> ChannelMap {
    let id = ChannelMap::identity(d);
    let tr = ChannelMap::transpose(d);
    ChannelMap { d_in: d, d_out: d, matrix: id.matrix.scale(t) + tr.matrix.scale(1.0 - t) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kraus_round_trip(seed in any::<u64>(), d in 1usize..4, r in 1usize..4) {
        let mut rng = seeded_rng(seed);
        let c = random_channel(d, r, &mut rng);
        let k = kraus_from_choi(&choi(&c)).unwrap();
        prop_assert!(k.to_channel().distance(&c) <= 1e-9);
        prop_assert!(k.all_positive);
        prop_assert!(k.effective_len(1e-9) <= r.min(d * d));
    }

    #[test]
    fn cp_iff_positive_kraus(t in -1.0f64..2.0, d in 2usize..4) {
        let c = mixed_transpose(d, t);
        let ch = choi(&c);
        let k = kraus_from_choi(&ch).unwrap();
        prop_assert_eq!(is_cp(&ch), k.all_positive);
        prop_assert!(is_hermitian_preserving(&c) && is_tp(&c));
        prop_assert!(k.closure_error() <= 1e-9);
        prop_assert!(k.to_channel().distance(&c) <= 1e-9);
    }

    #[test]
    fn dilation_round_trip(seed in any::<u64>(), d in 1usize..4, r in 1usize..4) {
        let mut rng = seeded_rng(seed);
        let c = random_channel(d, r, &mut rng);
        let dil = stinespring(&kraus_from_choi(&choi(&c)).unwrap()).unwrap();
        prop_assert!(linalg::unitarity_defect(&dil.unitary) < 1e-9);
        prop_assert!(dil.channel().distance(&c) <= 1e-9);
    }
}

#[test]
fn mixed_transpose_threshold_matches_eigen_oracle() {
    // Choi is t·|Φ⟩⟨Φ| + (1−t)·SWAP with unnormalised Φ: eigenvalue 1 + t on Φ,
    // 1 − t on the rest of the symmetric part, t − 1 on the antisymmetric part.
    for &t in &[-0.5, 0.0, 0.5, 0.9, 1.0, 1.5] {
        let ch = choi(&mixed_transpose(2, t));
        let oracle = (t - 1.0_f64).min(1.0 - t).min(1.0 + t);
        assert!((ch.min_eigenvalue() - oracle).abs() < 1e-12, "t = {t}");
    }
}

#[test]
fn dilation_of_attachment_channel() {
    let mut rng = seeded_rng(12);
    let psi = haar_unitary_matrix(2, &mut rng).column(0).into_owned();
    let omega = linalg::projector(&psi);
    let attach = ChannelMap::from_fn(3, 6, |x| linalg::kron(x, &omega));
    let dil = stinespring(&kraus_from_choi(&choi(&attach)).unwrap()).unwrap();
    assert_eq!(dil.d_anc, 1);
    assert!(dil.channel().distance(&attach) < 1e-9);

    // Mixed environment needs an ancilla of dimension rank(ω).
    let omega = random_density_matrix(2, 2, &mut rng);
    let attach = ChannelMap::from_fn(2, 4, |x| linalg::kron(x, &omega));
    let dil = stinespring(&kraus_from_choi(&choi(&attach)).unwrap()).unwrap();
    assert_eq!(dil.d_anc, 2);
    assert!(dil.channel().distance(&attach) < 1e-9);
}

#[test]
fn markov_canonical_assignment_is_a_fixed_point_on_members() {
    let mut rng = seeded_rng(13);
    let mb = MarkovBlocks::random(BlockStructure(vec![(1, 2), (2, 1)]), 2, &mut rng);
    let spec = FamilySpec::MarkovBlocks(mb);
    let assign = canonical_assignment(&spec.subspace());
    assert!(assign.cp);
    let samples: Vec<CMatrix> = (0..100)
        .map(|_| {
            let m = sample_member(&spec, &spec.random_params(&mut rng)).unwrap();
            linalg::ptrace_e(m.matrix(), 4, 2)
        })
        .collect();
    assert!(verify_fixed_point(&assign, &samples) <= 1e-10);
    // And the assignment reproduces the members themselves.
    let m = sample_member(&spec, &spec.random_params(&mut rng)).unwrap();
    let back = assign.map.apply(&linalg::ptrace_e(m.matrix(), 4, 2));
    assert!(linalg::frob(&(back - m.matrix())) < 1e-10);
}

#[test]
fn trace_defect_is_zero_for_channels() {
    let mut rng = seeded_rng(14);
    let c = random_channel(3, 2, &mut rng);
    assert!(channel::trace_defect(&c) < 1e-12);
    let scaled = ChannelMap { d_in: 3, d_out: 3, matrix: c.matrix.scale(0.5) };
    assert!(!is_tp(&scaled));
}
