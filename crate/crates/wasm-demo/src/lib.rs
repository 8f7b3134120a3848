//! Browser bindings: three small interactive computations over the core
//! crate, each returning a JSON string for the page in `www/` to plot.

use cpreduce::channel::{choi, reduced_dynamics_of};
use cpreduce::consistency::witness_assignment;
use cpreduce::families::{build_markov_state, sample_member, MarkovStateSpec};
use cpreduce::harness::{random_family, random_traceless, Command, FamilyKind, RunConfig};
use cpreduce::info::{dpi_check_matrix, ghz_state};
use cpreduce::tensor::BlockStructure;
use cpreduce::tensor::{haar_unitary_matrix, random_density_matrix, seeded_rng};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct WitnessPoint {
    pub gamma: f64,
    /// Smallest Choi eigenvalue of the assignment itself.
    pub assignment: f64,
    /// Most negative Choi eigenvalue of `Ψ` over the sampled unitaries.
    pub dynamics: f64,
}

/// Sweep `γ` over `[0, gamma_max]` for the witness assignment on qubits.
pub fn witness_curve(seed: u64, gamma_max: f64, steps: usize, draws: usize) -> Vec<WitnessPoint> {
    let (d_s, d_e) = (2, 2);
    let mut rng = seeded_rng(seed);
    let omega = random_density_matrix(d_e, d_e, &mut rng);
    let delta = random_traceless(d_e, &mut rng);
    let unitaries: Vec<_> = (0..draws.max(1)).map(|_| haar_unitary_matrix(d_s * d_e, &mut rng)).collect();
    (0..=steps.max(1))
        .map(|k| {
            let gamma = gamma_max * k as f64 / steps.max(1) as f64;
            let lambda = witness_assignment(d_s, &omega, &delta, gamma);
            let dynamics = unitaries
                .iter()
                .map(|u| {
                    reduced_dynamics_of(u, &lambda, d_s, d_e)
                        .map(|psi| choi(&psi).min_eigenvalue())
                        .unwrap_or(f64::NAN)
                })
                .fold(f64::INFINITY, f64::min);
            WitnessPoint { gamma, assignment: choi(&lambda).min_eigenvalue(), dynamics }
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct Spectrum {
    pub family: String,
    pub d_s: usize,
    pub d_e: usize,
    pub eigenvalues: Vec<f64>,
    pub member_residual: f64,
}

/// Choi spectrum of `Ψ = Tr_E ∘ Ad_U ∘ Λ` for one random family instance and
/// Haar `U`.
pub fn family_spectrum(family: &str, d_e: usize, blocks: &str, seed: u64) -> Result<Spectrum, String> {
    let mut cfg = RunConfig::new(Command::VerifyFamily);
    cfg.family = Some(family.parse().map_err(|e: cpreduce::Error| e.to_string())?);
    cfg.d_e = d_e;
    if cfg.family.is_some_and(FamilyKind::uses_blocks) && !blocks.trim().is_empty() {
        cfg.blocks = Some(blocks.trim().to_string());
    }
    cfg.seed = seed;
    cfg.validate().map_err(|e| e.to_string())?;
    let mut rng = seeded_rng(seed);
    let inst = random_family(&cfg, &mut rng).map_err(|e| e.to_string())?;
    let (d_s, d_e) = (inst.spec.d_s(), inst.spec.d_e());
    let member = sample_member(&inst.spec, &inst.spec.random_params(&mut rng)).map_err(|e| e.to_string())?;
    let u = if cfg.family == Some(FamilyKind::KernelExtended) {
        // Kernel shifts are only invisible to local unitaries.
        cpreduce::linalg::kron(&haar_unitary_matrix(d_s, &mut rng), &haar_unitary_matrix(d_e, &mut rng))
    } else {
        haar_unitary_matrix(d_s * d_e, &mut rng)
    };
    let assign = inst.assignment();
    let psi = reduced_dynamics_of(&u, &assign.map, d_s, d_e).map_err(|e| e.to_string())?;
    let rho_s = cpreduce::linalg::ptrace_e(member.matrix(), d_s, d_e);
    let evolved = cpreduce::linalg::ptrace_e(&(&u * member.matrix() * u.adjoint()), d_s, d_e);
    Ok(Spectrum {
        family: inst.spec.name().to_string(),
        d_s,
        d_e,
        eigenvalues: choi(&psi).eigenvalues(),
        member_residual: cpreduce::linalg::frob(&(evolved - psi.apply(&rho_s))),
    })
}

#[derive(Debug, Serialize)]
pub struct DeltaSample {
    pub markov: Vec<f64>,
    pub ghz: Vec<f64>,
}

/// `I(A:S)` loss under `draws` Haar `U_SE` for a random qubit Markov state
/// (blocks `1x2,2x1`) and for the GHZ state.
pub fn dpi_deltas(seed: u64, draws: usize) -> Result<DeltaSample, String> {
    let mut rng = seeded_rng(seed);
    let spec = MarkovStateSpec::random(2, BlockStructure(vec![(1, 2), (2, 1)]), 2, None, &mut rng);
    let markov = build_markov_state(&spec).map_err(|e| e.to_string())?;
    let ghz = ghz_state();
    let mut out = DeltaSample { markov: Vec::with_capacity(draws), ghz: Vec::with_capacity(draws) };
    for _ in 0..draws {
        let u = haar_unitary_matrix(8, &mut rng);
        out.markov.push(dpi_check_matrix(&markov, &u).map_err(|e| e.to_string())?.delta);
        let u = haar_unitary_matrix(4, &mut rng);
        out.ghz.push(dpi_check_matrix(&ghz, &u).map_err(|e| e.to_string())?.delta);
    }
    Ok(out)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsValue> {
    serde_json::to_string(v).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen(js_name = witnessCurve)]
pub fn witness_curve_js(seed: u32, gamma_max: f64, steps: u32, draws: u32) -> Result<String, JsValue> {
    to_json(&witness_curve(seed as u64, gamma_max, steps as usize, draws as usize))
}

#[wasm_bindgen(js_name = familySpectrum)]
pub fn family_spectrum_js(family: &str, d_e: u32, blocks: &str, seed: u32) -> Result<String, JsValue> {
    let s = family_spectrum(family, d_e as usize, blocks, seed as u64).map_err(|e| JsValue::from_str(&e))?;
    to_json(&s)
}

#[wasm_bindgen(js_name = dpiDeltas)]
pub fn dpi_deltas_js(seed: u32, draws: u32) -> Result<String, JsValue> {
    let d = dpi_deltas(seed as u64, draws.min(2000) as usize).map_err(|e| JsValue::from_str(&e))?;
    to_json(&d)
}
