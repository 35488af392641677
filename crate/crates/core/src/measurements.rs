//! Measurement catalogs for the end nodes and Bob's joint measurements.
//!
//! Bob's outcome labels are the two-bit strings `b⁰b¹` with
//! `00 → Φ⁺`, `01 → Φ⁻`, `10 → Ψ⁺`, `11 → Ψ⁻`. The partial measurement merges
//! the last two into the single label [`GROUPED_LABEL`].

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{
    bell_state, bloch_observable, check_visibility, tensor, BellState, BinaryObservable, ComplexMatrix, DensityMatrix,
    STATE_TOL,
};

/// Label of the outcome that groups `10` and `11` in the partial measurement.
pub const GROUPED_LABEL: &str = "10|11";

/// The three measurement scenarios of the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Full four-outcome Bell-state measurement.
    #[serde(rename = "14")]
    Fourteen,
    /// Partial three-outcome Bell-state measurement.
    #[serde(rename = "13")]
    Thirteen,
    /// Event-ready CHSH test between Alice and Charlie.
    #[serde(rename = "chsh")]
    Chsh,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Fourteen => "14",
            Scenario::Thirteen => "13",
            Scenario::Chsh => "chsh",
        }
    }

    /// Number of Bob outcomes in the scenario's default measurement.
    pub fn b_arity(self) -> usize {
        match self {
            Scenario::Thirteen => 3,
            Scenario::Fourteen | Scenario::Chsh => 4,
        }
    }

    /// Bob's default measurement for the scenario.
    pub fn default_bob(self) -> Povm {
        match self {
            Scenario::Thirteen => bsm_partial(),
            Scenario::Fourteen | Scenario::Chsh => bsm_full(),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "14" => Ok(Scenario::Fourteen),
            "13" => Ok(Scenario::Thirteen),
            "chsh" => Ok(Scenario::Chsh),
            other => Err(Error::InvalidParameter(format!("unknown scenario {other:?}"))),
        }
    }
}

/// Binary measurements of Alice and Charlie, indexed by their inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSettings {
    pub scenario: Scenario,
    pub alice: [BinaryObservable; 2],
    pub charlie: [BinaryObservable; 2],
}

impl ScenarioSettings {
    /// Same observables, different inequality tag.
    pub fn with_scenario(mut self, scenario: Scenario) -> Self {
        self.scenario = scenario;
        self
    }
}

fn axis_xz(x: f64, z: f64) -> [f64; 3] {
    [x, 0.0, z]
}

fn observable(axis: [f64; 3]) -> BinaryObservable {
    bloch_observable(axis).expect("catalog axes are unit length")
}

/// Settings that give the optimal violations in each scenario.
pub fn settings_catalog(scenario: Scenario) -> ScenarioSettings {
    match scenario {
        Scenario::Fourteen => {
            let plus = observable(axis_xz(FRAC_1_SQRT_2, FRAC_1_SQRT_2));
            let minus = observable(axis_xz(-FRAC_1_SQRT_2, FRAC_1_SQRT_2));
            ScenarioSettings { scenario, alice: [plus.clone(), minus.clone()], charlie: [plus, minus] }
        }
        Scenario::Thirteen => {
            let x = 1.0 / 3f64.sqrt();
            let z = (2.0 / 3.0f64).sqrt();
            let plus = observable(axis_xz(x, z));
            let minus = observable(axis_xz(-x, z));
            ScenarioSettings { scenario, alice: [plus.clone(), minus.clone()], charlie: [plus, minus] }
        }
        Scenario::Chsh => ScenarioSettings {
            scenario,
            alice: [observable(axis_xz(0.0, 1.0)), observable(axis_xz(1.0, 0.0))],
            charlie: [
                observable(axis_xz(FRAC_1_SQRT_2, FRAC_1_SQRT_2)),
                observable(axis_xz(-FRAC_1_SQRT_2, FRAC_1_SQRT_2)),
            ],
        },
    }
}

/// Positive operator-valued measure on Bob's two qubits `B1 ⊗ B2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    effects: Vec<ComplexMatrix>,
    labels: Vec<String>,
}

impl Povm {
    pub fn new(effects: Vec<ComplexMatrix>, labels: Vec<String>) -> Result<Self> {
        if effects.is_empty() {
            return Err(Error::InvalidPovm("no effects".into()));
        }
        if effects.len() != labels.len() {
            return Err(Error::InvalidPovm(format!("{} effects but {} labels", effects.len(), labels.len())));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidPovm(format!("duplicate label {l:?}")));
            }
        }
        let dim = effects[0].dim();
        let mut sum = ComplexMatrix::zeros(dim);
        for (e, l) in effects.iter().zip(&labels) {
            if e.dim() != dim {
                return Err(Error::InvalidPovm(format!("effect {l} has dimension {}", e.dim())));
            }
            if !e.is_hermitian(STATE_TOL) || e.min_eigenvalue() < -STATE_TOL {
                return Err(Error::InvalidPovm(format!("effect {l} is not positive")));
            }
            sum = &sum + e;
        }
        if !sum.approx_eq(&ComplexMatrix::identity(dim), STATE_TOL) {
            return Err(Error::InvalidPovm("effects do not sum to identity".into()));
        }
        Ok(Self { effects, labels })
    }

    pub fn arity(&self) -> usize {
        self.effects.len()
    }

    pub fn dim(&self) -> usize {
        self.effects[0].dim()
    }

    pub fn effects(&self) -> &[ComplexMatrix] {
        &self.effects
    }

    pub fn effect(&self, b: usize) -> &ComplexMatrix {
        &self.effects[b]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, b: usize) -> &str {
        &self.labels[b]
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels.iter().position(|l| l == label).ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Merges outcomes `10` and `11` into [`GROUPED_LABEL`] (appended last).
    pub fn group_partial(&self) -> Result<Povm> {
        let i10 = self.index_of("10")?;
        let i11 = self.index_of("11")?;
        let mut effects = Vec::with_capacity(self.arity() - 1);
        let mut labels = Vec::with_capacity(self.arity() - 1);
        for (b, (e, l)) in self.effects.iter().zip(&self.labels).enumerate() {
            if b != i10 && b != i11 {
                effects.push(e.clone());
                labels.push(l.clone());
            }
        }
        effects.push(&self.effects[i10] + &self.effects[i11]);
        labels.push(GROUPED_LABEL.to_string());
        Povm::new(effects, labels)
    }
}

/// Bob's label for a Bell state under the canonical label map.
pub fn bell_label(state: BellState) -> &'static str {
    match state {
        BellState::PhiPlus => "00",
        BellState::PhiMinus => "01",
        BellState::PsiPlus => "10",
        BellState::PsiMinus => "11",
    }
}

/// Inverse of [`bell_label`].
pub fn bell_for_label(label: &str) -> Option<BellState> {
    BellState::ALL.into_iter().find(|&s| bell_label(s) == label)
}

/// Bits `(b⁰, b¹)` of a two-bit label; `None` for the grouped outcome.
pub fn label_bits(label: &str) -> Option<(u8, u8)> {
    match label.as_bytes() {
        [b0 @ (b'0' | b'1'), b1 @ (b'0' | b'1')] => Some((b0 - b'0', b1 - b'0')),
        _ => None,
    }
}

/// Ideal four-outcome Bell-state measurement.
pub fn bsm_full() -> Povm {
    let effects = BellState::ALL.iter().map(|b| b.projector()).collect();
    let labels = BellState::ALL.iter().map(|&b| bell_label(b).to_string()).collect();
    Povm::new(effects, labels).expect("Bell projectors form a POVM")
}

/// Three-outcome measurement resolving `Φ⁺`, `Φ⁻` and grouping `Ψ±`.
pub fn bsm_partial() -> Povm {
    bsm_full().group_partial().expect("full BSM has outcomes 10 and 11")
}

/// White-noise admixture on every effect:
/// `E → v_b E + (1 − v_b) Tr(E)/d · 𝟙`.
pub fn bsm_noisy(povm: &Povm, v_b: f64) -> Result<Povm> {
    check_visibility(v_b)?;
    let dim = povm.dim();
    let id = ComplexMatrix::identity(dim);
    let effects = povm
        .effects()
        .iter()
        .map(|e| {
            let tr = e.trace().re;
            &e.scale(v_b) + &id.scale((1.0 - v_b) * tr / dim as f64)
        })
        .collect();
    Povm::new(effects, povm.labels().to_vec())
}

fn real_projector(rows: [f64; 4]) -> ComplexMatrix {
    ComplexMatrix::from_real_rows(2, &rows)
}

/// Separable measurement: read `B2` in the computational basis, then measure
/// `σz` on `B1` for `b⁰` (outcome `0`) or `σx` on `B1` for `b¹` (outcome
/// `1`). The unmeasured bit is uniformly random, folded in as the ½ weights.
pub fn counterexample_bob() -> Povm {
    let pz = [real_projector([1.0, 0.0, 0.0, 0.0]), real_projector([0.0, 0.0, 0.0, 1.0])];
    let px = [real_projector([0.5, 0.5, 0.5, 0.5]), real_projector([0.5, -0.5, -0.5, 0.5])];
    let ket0 = real_projector([1.0, 0.0, 0.0, 0.0]);
    let ket1 = real_projector([0.0, 0.0, 0.0, 1.0]);
    let mut effects = Vec::with_capacity(4);
    let mut labels = Vec::with_capacity(4);
    for b0 in 0..2 {
        for b1 in 0..2 {
            let e = &tensor(&pz[b0], &ket0).scale(0.5) + &tensor(&px[b1], &ket1).scale(0.5);
            effects.push(e);
            labels.push(format!("{b0}{b1}"));
        }
    }
    Povm::new(effects, labels).expect("counter-example effects form a POVM")
}

/// Sources, settings and Bob measurement of the separable-measurement
/// counter-example.
#[derive(Clone, Debug)]
pub struct CounterExample {
    pub rho_ab: DensityMatrix,
    pub rho_bc: DensityMatrix,
    pub settings: ScenarioSettings,
    pub bob: Povm,
}

pub fn counterexample_scenario() -> CounterExample {
    let rho_bc = DensityMatrix::new(ComplexMatrix::from_real_rows(
        4,
        &[
            0.5, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.5,
        ],
    ))
    .expect("classically correlated state is valid");
    let alice = [observable(axis_xz(FRAC_1_SQRT_2, FRAC_1_SQRT_2)), observable(axis_xz(-FRAC_1_SQRT_2, FRAC_1_SQRT_2))];
    let charlie = [BinaryObservable::trivial(), observable(axis_xz(0.0, 1.0))];
    CounterExample {
        rho_ab: bell_state(BellState::PhiPlus),
        rho_bc,
        settings: ScenarioSettings { scenario: Scenario::Fourteen, alice, charlie },
        bob: counterexample_bob(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::DensityMatrix;

    #[test]
    fn catalog_axes() {
        let s14 = settings_catalog(Scenario::Fourteen);
        let a0 = s14.alice[0].axis().unwrap();
        assert!((a0[0] - FRAC_1_SQRT_2).abs() < 1e-15 && a0[1] == 0.0);
        assert!((a0[2] - FRAC_1_SQRT_2).abs() < 1e-15);

        let s13 = settings_catalog(Scenario::Thirteen);
        let a0 = s13.alice[0].axis().unwrap();
        assert!((a0[0] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((a0[2] - 2f64.sqrt() / 3f64.sqrt()).abs() < 1e-15);

        let chsh = settings_catalog(Scenario::Chsh);
        assert_eq!(chsh.alice[1].axis().unwrap(), [1.0, 0.0, 0.0]);
        assert_eq!(chsh.alice[0].axis().unwrap(), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn catalog_alice_equals_charlie_except_chsh() {
        for s in [Scenario::Fourteen, Scenario::Thirteen] {
            let c = settings_catalog(s);
            assert_eq!(c.alice, c.charlie);
        }
        let c = settings_catalog(Scenario::Chsh);
        assert_ne!(c.alice, c.charlie);
    }

    #[test]
    fn scenario_parsing() {
        assert_eq!("14".parse::<Scenario>().unwrap(), Scenario::Fourteen);
        assert_eq!("CHSH".parse::<Scenario>().unwrap(), Scenario::Chsh);
        assert!("12".parse::<Scenario>().is_err());
    }

    #[test]
    fn full_bsm_is_orthogonal_bell_basis() {
        let p = bsm_full();
        assert_eq!(p.arity(), 4);
        assert!(p.effect(p.index_of("00").unwrap()).approx_eq(bell_state(BellState::PhiPlus).matrix(), 1e-15));
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!((p.effect(i) * p.effect(j)).approx_eq(&ComplexMatrix::zeros(4), 1e-12));
                }
            }
        }
    }

    #[test]
    fn partial_bsm_groups_psi_states() {
        let p = bsm_partial();
        let full = bsm_full();
        assert_eq!(p.labels(), &["00", "01", GROUPED_LABEL]);
        assert_eq!(p.effect(0), full.effect(0));
        assert_eq!(p.effect(1), full.effect(1));
        assert_eq!(p.effect(2).rank(1e-10), 2);
        assert!((p.effect(2).trace().re - 2.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_bsm_limits() {
        let full = bsm_full();
        assert_eq!(bsm_noisy(&full, 1.0).unwrap(), full);
        let depolarized = bsm_noisy(&full, 0.0).unwrap();
        for e in depolarized.effects() {
            assert!(e.approx_eq(&ComplexMatrix::identity(4).scale(0.25), 1e-15));
        }
        assert_eq!(bsm_noisy(&full, 1.5), Err(Error::Visibility(1.5)));
    }

    #[test]
    fn noisy_bsm_keeps_labels_on_grid() {
        for base in [bsm_full(), bsm_partial(), counterexample_bob()] {
            for i in 0..100 {
                let v = i as f64 / 99.0;
                let noisy = bsm_noisy(&base, v).unwrap();
                assert_eq!(noisy.labels(), base.labels());
            }
        }
    }

    #[test]
    fn counterexample_bob_is_separable() {
        let p = counterexample_bob();
        for e in p.effects() {
            assert!((e.trace().re - 1.0).abs() < 1e-12);
            assert!(e.partial_transpose(2).min_eigenvalue() >= -1e-10);
        }
    }

    #[test]
    fn counterexample_sources() {
        let ce = counterexample_scenario();
        let diag: Vec<f64> = (0..4).map(|i| ce.rho_bc.matrix().get(i, i).re).collect();
        assert_eq!(diag, vec![0.5, 0.0, 0.0, 0.5]);
        assert!(ce.rho_bc.is_ppt().unwrap());
        let rho = DensityMatrix::new(ComplexMatrix::from_real_rows(2, &[0.2, 0.3, 0.3, 0.8])).unwrap();
        let c0 = &ce.settings.charlie[0];
        assert!((rho.expectation(c0.effect(0)).re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn label_helpers() {
        assert_eq!(label_bits("01"), Some((0, 1)));
        assert_eq!(label_bits(GROUPED_LABEL), None);
        assert_eq!(bell_for_label("11"), Some(BellState::PsiMinus));
        assert!(bsm_full().index_of("22").is_err());
    }

    #[test]
    fn povm_validation() {
        let id = ComplexMatrix::identity(4);
        assert!(Povm::new(vec![id.scale(0.5)], vec!["0".into()]).is_err());
        assert!(Povm::new(vec![id.scale(0.5), id.scale(0.5)], vec!["0".into(), "0".into()]).is_err());
        assert!(Povm::new(vec![id.scale(1.5), id.scale(-0.5)], vec!["0".into(), "1".into()]).is_err());
    }
}
