//! Exact Born-rule engine for the linear network `A - B - C`.
//!
//! Source 1 feeds `A ⊗ B1`, source 2 feeds `B2 ⊗ C`, so `ρ₁ ⊗ ρ₂` is already
//! in the global order `A ⊗ B1 ⊗ B2 ⊗ C` and no permutation is needed.

use crate::error::{Error, Result};
use crate::measurements::{Povm, Scenario, ScenarioSettings};
use crate::qcore::{partial_trace_matrix, ComplexMatrix, DensityMatrix};

/// Roundoff allowance below zero before a probability is rejected.
pub const NEGATIVE_PROB_TOL: f64 = 1e-12;

/// Normalization and no-signaling tolerance.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Herald probabilities below this are treated as impossible events.
pub const HERALD_MIN_PROB: f64 = 1e-12;

/// Read access to a table `P(a, b, c | x, z)` with binary `x, z, a, c`.
///
/// Implemented by exact distributions and by empirical frequency tables so
/// the same correlator code serves both.
pub trait OutcomeTable {
    fn b_arity(&self) -> usize;
    fn labels(&self) -> &[String];
    fn prob(&self, x: usize, z: usize, a: usize, b: usize, c: usize) -> f64;
}

/// Flat index of cell `[x][z][a][b][c]`.
#[inline]
pub fn cell_index(arity: usize, x: usize, z: usize, a: usize, b: usize, c: usize) -> usize {
    (((x * 2 + z) * 2 + a) * arity + b) * 2 + c
}

/// Number of `(a, b, c)` cells per setting pair.
#[inline]
pub fn cells_per_setting(arity: usize) -> usize {
    4 * arity
}

/// Validated conditional distribution `P(a, b, c | x, z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TripartiteDistribution {
    scenario: Scenario,
    labels: Vec<String>,
    table: Vec<f64>,
}

impl TripartiteDistribution {
    /// Takes the flat `[x][z][a][b][c]` table. Entries within
    /// [`NEGATIVE_PROB_TOL`] below zero are clamped to zero.
    pub fn new(scenario: Scenario, labels: Vec<String>, mut table: Vec<f64>) -> Result<Self> {
        let arity = labels.len();
        if !(3..=4).contains(&arity) {
            return Err(Error::InvalidDistribution(format!("Bob arity {arity} not in {{3, 4}}")));
        }
        if table.len() != 4 * cells_per_setting(arity) {
            return Err(Error::InvalidDistribution(format!(
                "table has {} entries, expected {}",
                table.len(),
                4 * cells_per_setting(arity)
            )));
        }
        for p in table.iter_mut() {
            if !p.is_finite() || *p < -NEGATIVE_PROB_TOL {
                return Err(Error::InvalidDistribution(format!("entry {p} is not a probability")));
            }
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let dist = Self { scenario, labels, table };
        let reference = dist.b_marginal(0, 0);
        for x in 0..2 {
            for z in 0..2 {
                let total: f64 = dist.setting_slice(x, z).iter().sum();
                if (total - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(Error::InvalidDistribution(format!("setting ({x}, {z}) sums to {total}")));
                }
                let marginal = dist.b_marginal(x, z);
                if marginal.iter().zip(&reference).any(|(p, q)| (p - q).abs() > NORMALIZATION_TOL) {
                    return Err(Error::InvalidDistribution(format!(
                        "Bob's marginal depends on the setting ({x}, {z})"
                    )));
                }
            }
        }
        Ok(dist)
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Cells of one setting pair, ordered `[a][b][c]`.
    pub fn setting_slice(&self, x: usize, z: usize) -> &[f64] {
        let n = cells_per_setting(self.b_arity());
        let start = (x * 2 + z) * n;
        &self.table[start..start + n]
    }

    pub fn b_marginal(&self, x: usize, z: usize) -> Vec<f64> {
        let arity = self.b_arity();
        (0..arity)
            .map(|b| (0..2).flat_map(|a| (0..2).map(move |c| (a, c))).map(|(a, c)| self.prob(x, z, a, b, c)).sum())
            .collect()
    }

    /// Largest absolute entrywise difference to another table of the same shape.
    pub fn max_abs_diff(&self, other: &TripartiteDistribution) -> f64 {
        assert_eq!(self.table.len(), other.table.len());
        self.table.iter().zip(&other.table).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
    }
}

impl OutcomeTable for TripartiteDistribution {
    fn b_arity(&self) -> usize {
        self.labels.len()
    }

    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn prob(&self, x: usize, z: usize, a: usize, b: usize, c: usize) -> f64 {
        self.table[cell_index(self.b_arity(), x, z, a, b, c)]
    }
}

fn check_inputs(rho1: &DensityMatrix, rho2: &DensityMatrix, bob: &Povm) -> Result<()> {
    if rho1.dim() != 4 || rho2.dim() != 4 {
        return Err(Error::Dimension(format!(
            "sources must be two-qubit states, got dimensions {} and {}",
            rho1.dim(),
            rho2.dim()
        )));
    }
    if bob.dim() != 4 {
        return Err(Error::Dimension(format!("Bob's POVM acts on dimension {}", bob.dim())));
    }
    Ok(())
}

/// `P(a,b,c|x,z) = Tr[(A_{a|x} ⊗ E_b ⊗ C_{c|z}) (ρ₁ ⊗ ρ₂)]`.
pub fn tripartite_distribution(
    rho1: &DensityMatrix,
    rho2: &DensityMatrix,
    settings: &ScenarioSettings,
    bob: &Povm,
) -> Result<TripartiteDistribution> {
    check_inputs(rho1, rho2, bob)?;
    let joint = rho1.matrix().tensor(rho2.matrix());
    let arity = bob.arity();
    let mut table = vec![0.0; 4 * cells_per_setting(arity)];
    for x in 0..2 {
        for a in 0..2 {
            let alice = settings.alice[x].effect(a);
            for b in 0..arity {
                let ab = alice.tensor(bob.effect(b));
                for z in 0..2 {
                    for c in 0..2 {
                        let op = ab.tensor(settings.charlie[z].effect(c));
                        table[cell_index(arity, x, z, a, b, c)] = joint.trace_product(&op).re;
                    }
                }
            }
        }
    }
    TripartiteDistribution::new(settings.scenario, bob.labels().to_vec(), table)
}

/// Alice–Charlie state after Bob reports a given outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionedPair {
    pub herald_label: String,
    pub herald_probability: f64,
    pub state: DensityMatrix,
}

/// Unnormalized `Tr_{B1B2}[(𝟙 ⊗ E_b ⊗ 𝟙)(ρ₁ ⊗ ρ₂)]`.
fn heralded_operator(joint: &ComplexMatrix, effect: &ComplexMatrix) -> Result<ComplexMatrix> {
    let id2 = ComplexMatrix::identity(2);
    let op = id2.tensor(effect).tensor(&id2);
    partial_trace_matrix(&(&op * joint), &[0, 3])
}

fn condition(joint: &ComplexMatrix, bob: &Povm, b: usize) -> Result<ConditionedPair> {
    let unnormalized = heralded_operator(joint, bob.effect(b))?;
    let p = unnormalized.trace().re;
    if p < HERALD_MIN_PROB {
        return Err(Error::HeraldNeverFires { label: bob.label(b).to_string(), probability: p });
    }
    // Hermitian part only; the product above is Hermitian up to roundoff.
    let scaled = unnormalized.scale(1.0 / p);
    let herm = (&scaled + &scaled.adjoint()).scale(0.5);
    let state = DensityMatrix::new(herm)?;
    Ok(ConditionedPair { herald_label: bob.label(b).to_string(), herald_probability: p, state })
}

/// Entanglement swapping: the A–C state conditioned on Bob's outcome `label`.
pub fn swapped_state(rho1: &DensityMatrix, rho2: &DensityMatrix, bob: &Povm, label: &str) -> Result<ConditionedPair> {
    check_inputs(rho1, rho2, bob)?;
    let b = bob.index_of(label)?;
    let joint = rho1.matrix().tensor(rho2.matrix());
    condition(&joint, bob, b)
}

/// Conditioned pairs for every outcome that fires, in POVM order.
pub fn swapped_states(rho1: &DensityMatrix, rho2: &DensityMatrix, bob: &Povm) -> Result<Vec<ConditionedPair>> {
    check_inputs(rho1, rho2, bob)?;
    let joint = rho1.matrix().tensor(rho2.matrix());
    let mut pairs = Vec::with_capacity(bob.arity());
    for b in 0..bob.arity() {
        match condition(&joint, bob, b) {
            Ok(pair) => pairs.push(pair),
            Err(Error::HeraldNeverFires { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(pairs)
}

/// `P(a, c | x, z)` stored as `[x][z][a][c]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcTable(pub [[[[f64; 2]; 2]; 2]; 2]);

impl AcTable {
    pub fn prob(&self, x: usize, z: usize, a: usize, c: usize) -> f64 {
        self.0[x][z][a][c]
    }

    /// `⟨A_x C_z⟩ = Σ (−1)^{a+c} P(a, c | x, z)`.
    pub fn correlator(&self, x: usize, z: usize) -> f64 {
        let t = &self.0[x][z];
        t[0][0] - t[0][1] - t[1][0] + t[1][1]
    }
}

/// Born rule on a conditioned two-qubit state.
pub fn conditional_ac_distribution(pair: &ConditionedPair, settings: &ScenarioSettings) -> AcTable {
    let mut out = [[[[0.0; 2]; 2]; 2]; 2];
    for (x, alice) in settings.alice.iter().enumerate() {
        for (z, charlie) in settings.charlie.iter().enumerate() {
            for a in 0..2 {
                for c in 0..2 {
                    let op = alice.effect(a).tensor(charlie.effect(c));
                    let p = pair.state.expectation(&op).re;
                    out[x][z][a][c] = if p < 0.0 && p > -NEGATIVE_PROB_TOL { 0.0 } else { p };
                }
            }
        }
    }
    AcTable(out)
}

/// Convenience: ideal Werner sources of visibilities `v1`, `v2` (both `Φ⁺`).
pub fn werner_sources(v1: f64, v2: f64) -> Result<(DensityMatrix, DensityMatrix)> {
    use crate::qcore::{werner, BellState};
    Ok((werner(BellState::PhiPlus, v1)?, werner(BellState::PhiPlus, v2)?))
}

/// Exact distribution for a catalog scenario with Werner sources and a
/// white-noise BSM of visibility `v_b`.
pub fn scenario_distribution(scenario: Scenario, v1: f64, v2: f64, v_b: f64) -> Result<TripartiteDistribution> {
    let (rho1, rho2) = werner_sources(v1, v2)?;
    let bob = crate::measurements::bsm_noisy(&scenario.default_bob(), v_b)?;
    tripartite_distribution(&rho1, &rho2, &crate::measurements::settings_catalog(scenario), &bob)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurements::{bell_for_label, bsm_full, bsm_noisy, settings_catalog};
    use crate::qcore::{bell_state, werner, BellState, C64};

    #[test]
    fn ideal_full_bsm_marginal_is_uniform() {
        let phi = bell_state(BellState::PhiPlus);
        let d = tripartite_distribution(&phi, &phi, &settings_catalog(Scenario::Fourteen), &bsm_full()).unwrap();
        for x in 0..2 {
            for z in 0..2 {
                for p in d.b_marginal(x, z) {
                    assert!((p - 0.25).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn maximally_mixed_sources_give_uniform_ac() {
        let mixed = DensityMatrix::maximally_mixed(2);
        let bob = bsm_full();
        let d = tripartite_distribution(&mixed, &mixed, &settings_catalog(Scenario::Fourteen), &bob).unwrap();
        for x in 0..2 {
            for z in 0..2 {
                for a in 0..2 {
                    for b in 0..4 {
                        for c in 0..2 {
                            let expected = 0.25 * bob.effect(b).trace().re / 4.0;
                            assert!((d.prob(x, z, a, b, c) - expected).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn swapping_bell_sources_yields_labelled_bell_state() {
        let phi = bell_state(BellState::PhiPlus);
        for pair in swapped_states(&phi, &phi, &bsm_full()).unwrap() {
            let expected = bell_for_label(&pair.herald_label).unwrap();
            assert!((pair.herald_probability - 0.25).abs() < 1e-12);
            assert!(pair.state.matrix().approx_eq(bell_state(expected).matrix(), 1e-12));
        }
    }

    #[test]
    fn swapping_werner_sources_multiplies_visibility() {
        let (v1, v2) = (0.9, 0.7);
        let (r1, r2) = werner_sources(v1, v2).unwrap();
        for pair in swapped_states(&r1, &r2, &bsm_full()).unwrap() {
            let kind = bell_for_label(&pair.herald_label).unwrap();
            let expected = werner(kind, v1 * v2).unwrap();
            assert!(pair.state.matrix().approx_eq(expected.matrix(), 1e-12));
        }
    }

    #[test]
    fn impossible_herald_is_an_error() {
        let phi = bell_state(BellState::PhiPlus);
        // |00> sources leave Bob's qubits in |00>, orthogonal to both Ψ states.
        let zero =
            DensityMatrix::from_pure(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)])
                .unwrap();
        let err = swapped_state(&zero, &zero, &bsm_full(), "10").unwrap_err();
        assert!(matches!(err, Error::HeraldNeverFires { .. }));
        assert!(swapped_state(&phi, &phi, &bsm_full(), "xx").is_err());
    }

    #[test]
    fn singlet_conditional_anticorrelation() {
        let pair = ConditionedPair {
            herald_label: "11".into(),
            herald_probability: 1.0,
            state: bell_state(BellState::PsiMinus),
        };
        let t = conditional_ac_distribution(&pair, &settings_catalog(Scenario::Fourteen));
        assert!(t.prob(0, 0, 0, 0).abs() < 1e-12 && t.prob(0, 0, 1, 1).abs() < 1e-12);
        assert!((t.prob(0, 0, 0, 1) - 0.5).abs() < 1e-12);
        assert!((t.prob(0, 0, 1, 0) - 0.5).abs() < 1e-12);

        let mixed = ConditionedPair { state: DensityMatrix::maximally_mixed(2), ..pair };
        let t = conditional_ac_distribution(&mixed, &settings_catalog(Scenario::Chsh));
        for x in 0..2 {
            for z in 0..2 {
                for a in 0..2 {
                    for c in 0..2 {
                        assert!((t.prob(x, z, a, c) - 0.25).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let one = DensityMatrix::maximally_mixed(1);
        let two = DensityMatrix::maximally_mixed(2);
        let s = settings_catalog(Scenario::Fourteen);
        assert!(matches!(tripartite_distribution(&one, &two, &s, &bsm_full()), Err(Error::Dimension(_))));
    }

    #[test]
    fn distribution_validation() {
        let labels: Vec<String> = ["00", "01", "10", "11"].iter().map(|s| s.to_string()).collect();
        let mut table = vec![1.0 / 16.0; 64];
        assert!(TripartiteDistribution::new(Scenario::Fourteen, labels.clone(), table.clone()).is_ok());
        table[0] = -1e-13;
        table[1] += 1.0 / 16.0 + 1e-13;
        let d = TripartiteDistribution::new(Scenario::Fourteen, labels.clone(), table.clone()).unwrap();
        assert_eq!(d.table()[0], 0.0);
        table[0] = -1e-6;
        table[1] += 1e-6 - 1e-13;
        assert!(TripartiteDistribution::new(Scenario::Fourteen, labels.clone(), table).is_err());
        // signalling to Bob
        let mut table = vec![0.0; 64];
        for x in 0..2 {
            for z in 0..2 {
                let b = if x == 0 { 0 } else { 1 };
                table[cell_index(4, x, z, 0, b, 0)] = 1.0;
            }
        }
        assert!(TripartiteDistribution::new(Scenario::Fourteen, labels, table).is_err());
    }

    #[test]
    fn noisy_bsm_scenario_distribution_is_valid() {
        let d = scenario_distribution(Scenario::Thirteen, 0.9, 0.8, 0.7).unwrap();
        assert_eq!(d.b_arity(), 3);
        let d = bsm_noisy(&bsm_full(), 0.3).unwrap();
        assert_eq!(d.arity(), 4);
    }
}
