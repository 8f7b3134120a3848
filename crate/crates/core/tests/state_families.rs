use cpreduce::consistency::{random_kernel_subspace, span_from_states};
use cpreduce::families::{
    build_markov_state, sample_member, steer, structure_fit, ClassicalQuantum, DirectSumFactorized,
    Factorized, FamilySpec, KernelExtended, MarkovBlocks, MarkovStateSpec, MixedDirectSum,
};
use cpreduce::linalg::{self, CMatrix};
use cpreduce::tensor::{random_density_matrix, seeded_rng, BlockStructure};
use rand::Rng;

fn blocks(b: &[(usize, usize)]) -> BlockStructure {
    BlockStructure(b.to_vec())
}

fn all_families<R: Rng>(rng: &mut R) -> Vec<FamilySpec> {
    let mb = MarkovBlocks::random(blocks(&[(1, 2), (2, 1)]), 2, rng);
    let (steered, _) =
        MarkovStateSpec::random(2, blocks(&[(1, 2), (2, 1)]), 2, None, rng).steered_family().unwrap();
    let base = FamilySpec::Factorized(Factorized::random(2, 2, rng));
    vec![
        FamilySpec::Factorized(Factorized::random(3, 2, rng)),
        FamilySpec::ClassicalQuantum(ClassicalQuantum::random(3, 2, rng)),
        FamilySpec::DirectSumFactorized(DirectSumFactorized::random(vec![1, 2], 2, rng)),
        FamilySpec::MixedDirectSum(MixedDirectSum::random(vec![2, 1], 1, 2, rng)),
        FamilySpec::MarkovBlocks(mb),
        steered,
        FamilySpec::KernelExtended(KernelExtended {
            base: Box::new(base),
            kernel: random_kernel_subspace(2, 2, 2, rng),
        }),
    ]
}

#[test]
fn members_are_states_inside_the_family_span() {
    let mut rng = seeded_rng(21);
    for spec in all_families(&mut rng) {
        spec.validate().unwrap();
        let v = spec.subspace();
        for _ in 0..20 {
            let m = sample_member(&spec, &spec.random_params(&mut rng)).unwrap();
            let x = m.matrix();
            assert!((x.trace().re - 1.0).abs() < 1e-10, "{}", spec.name());
            assert!(linalg::hermiticity_defect(x) < 1e-12);
            assert!(linalg::min_eigenvalue(x) >= -1e-9, "{}", spec.name());
            assert!(v.residual(x) <= 1e-9, "{} member outside span", spec.name());
        }
    }
}

/// Off-diagonal blocks vanish and tracing `Lᵢ` out of block `i` leaves a
/// multiple of `ω̃_{RᵢE}`.
fn check_block_form(x: &CMatrix, mb: &MarkovBlocks) {
    let (d_s, d_e) = (mb.d_s(), mb.d_e);
    let proj = |i: usize| {
        let off = mb.blocks.offset(i);
        let (l, r) = mb.blocks.0[i];
        CMatrix::from_fn(d_s, d_s, |a, b| {
            if a == b && a >= off && a < off + l * r {
                linalg::ONE
            } else {
                linalg::ZERO
            }
        })
    };
    for i in 0..mb.blocks.len() {
        for j in 0..mb.blocks.len() {
            let pi = linalg::kron(&proj(i), &linalg::identity(d_e));
            let pj = linalg::kron(&proj(j), &linalg::identity(d_e));
            let part = &pi * x * &pj;
            if i != j {
                assert!(linalg::frob(&part) < 1e-12);
                continue;
            }
            let (l, r) = mb.blocks.0[i];
            let off = mb.blocks.offset(i);
            let m = r * d_e;
            let reduced = CMatrix::from_fn(m, m, |a, b| {
                (0..l).map(|k| x[((off + k * r) * d_e + a, (off + k * r) * d_e + b)]).sum()
            });
            let p = reduced.trace().re;
            assert!(linalg::frob(&(reduced - mb.omega_re[i].scale(p))) < 1e-10);
        }
    }
}

#[test]
fn block_families_have_block_marginals() {
    let mut rng = seeded_rng(22);
    for spec in all_families(&mut rng) {
        let Some(mb) = spec.markov_form() else { continue };
        for _ in 0..10 {
            let m = sample_member(&spec, &spec.random_params(&mut rng)).unwrap();
            check_block_form(m.matrix(), &mb);
            assert!(structure_fit(m.matrix(), &mb).unwrap().residual <= 1e-9);
        }
    }
}

#[test]
fn steering_lands_in_block_form_with_predicted_weights() {
    let mut rng = seeded_rng(23);
    for k in 0..100 {
        let layout = if k % 2 == 0 { blocks(&[(1, 2), (2, 1)]) } else { blocks(&[(2, 2)]) };
        let spec = MarkovStateSpec::random(2, layout, 2, Some(1 + k % 3), &mut rng);
        let omega = build_markov_state(&spec).unwrap();
        let p_a = random_density_matrix(2, 2, &mut rng);
        let steered = steer(&omega, &p_a).unwrap();
        let (_, mb) = spec.steered_family().unwrap();
        let fit = structure_fit(steered.matrix(), &mb).unwrap();
        assert!(fit.residual <= 1e-9, "trial {k}: residual {}", fit.residual);

        // pᵢ ∝ q̃ᵢ tr[(P_A ⊗ I) ω̃_{ALᵢ}].
        let weights: Vec<f64> = spec
            .blocks
            .0
            .iter()
            .enumerate()
            .map(|(i, &(l, _))| {
                let lifted = linalg::kron(&p_a, &linalg::identity(l)) * &spec.omega_al[i];
                spec.q[i] * lifted.trace().re
            })
            .collect();
        let total: f64 = weights.iter().sum();
        for (p, w) in fit.probs.iter().zip(&weights) {
            assert!((p - w / total).abs() < 1e-9);
        }
    }
}

#[test]
fn block_form_is_convex() {
    let mut rng = seeded_rng(24);
    let mb = MarkovBlocks::random(blocks(&[(2, 1), (1, 2)]), 2, &mut rng);
    let spec = FamilySpec::MarkovBlocks(mb.clone());
    for _ in 0..20 {
        let a = sample_member(&spec, &spec.random_params(&mut rng)).unwrap();
        let b = sample_member(&spec, &spec.random_params(&mut rng)).unwrap();
        let t: f64 = rng.random();
        let mix = a.matrix().scale(t) + b.matrix().scale(1.0 - t);
        assert!(structure_fit(&mix, &mb).unwrap().residual <= 1e-9);
    }
}

#[test]
fn bell_state_is_outside_factorized_family() {
    let mut rng = seeded_rng(25);
    let bell = (linalg::ket(4, 0) + linalg::ket(4, 3)).scale(std::f64::consts::FRAC_1_SQRT_2);
    let bell = linalg::projector(&bell);
    for _ in 0..10 {
        let f = Factorized::random(2, 2, &mut rng);
        let mb = FamilySpec::Factorized(f.clone()).markov_form().unwrap();
        assert!(structure_fit(&bell, &mb).unwrap().residual > 0.01);
        assert!(FamilySpec::Factorized(f).subspace().residual(&bell) > 0.01);
    }
}

#[test]
fn span_dimensions_of_simple_families() {
    let mut rng = seeded_rng(26);
    for d in 2..4 {
        let spec = FamilySpec::Factorized(Factorized::random(d, 2, &mut rng));
        let members: Vec<CMatrix> = (0..3 * d * d)
            .map(|_| sample_member(&spec, &spec.random_params(&mut rng)).unwrap().matrix().clone())
            .collect();
        assert_eq!(span_from_states(&members, d, 2).dim(), d * d);
        assert_eq!(spec.subspace().dim(), d * d);

        let cq = FamilySpec::ClassicalQuantum(ClassicalQuantum::random(d, 2, &mut rng));
        assert_eq!(cq.subspace().dim(), d);
    }
}

#[test]
fn specs_survive_json() {
    let mut rng = seeded_rng(27);
    for spec in all_families(&mut rng) {
        let text = serde_json::to_string(&spec).unwrap();
        let back: FamilySpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
