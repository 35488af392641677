//! Correlators, the bilocal parameter `B = √|I| + √|J|` and event-ready CHSH.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurements::{label_bits, Scenario, ScenarioSettings, GROUPED_LABEL};
use crate::network::{conditional_ac_distribution, ConditionedPair, OutcomeTable, HERALD_MIN_PROB};
use crate::qcore::check_visibility;

/// Visibility above which `B₁₄ > 1`.
pub const V_THRESHOLD_14: f64 = 0.5;
/// Visibility above which `B₁₃ > 1`.
pub const V_THRESHOLD_13: f64 = 2.0 / 3.0;
/// Visibility above which the event-ready CHSH value exceeds 2.
pub const V_THRESHOLD_CHSH: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Bilocal bound on `B`.
pub const BILOCAL_BOUND: f64 = 1.0;
/// Local bound on the CHSH expression.
pub const CHSH_BOUND: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IJPair {
    pub i_value: f64,
    pub j_value: f64,
    pub scenario: Scenario,
}

fn sign(bit: usize) -> f64 {
    if bit == 0 {
        1.0
    } else {
        -1.0
    }
}

fn check_arity<T: OutcomeTable + ?Sized>(t: &T, expected: usize) -> Result<()> {
    if t.b_arity() != expected {
        return Err(Error::Arity { expected, found: t.b_arity() });
    }
    Ok(())
}

/// `⟨A_x B^j C_z⟩ = Σ (−1)^{a + b^j + c} P(a, b⁰b¹, c | x, z)`.
pub fn correlator_14<T: OutcomeTable + ?Sized>(t: &T, x: usize, j: usize, z: usize) -> Result<f64> {
    check_arity(t, 4)?;
    let mut acc = 0.0;
    for (b, label) in t.labels().iter().enumerate() {
        let (b0, b1) = label_bits(label).ok_or_else(|| Error::UnknownLabel(label.clone()))?;
        let bj = if j == 0 { b0 } else { b1 } as usize;
        for a in 0..2 {
            for c in 0..2 {
                acc += sign(a ^ bj ^ c) * t.prob(x, z, a, b, c);
            }
        }
    }
    Ok(acc)
}

pub fn ij_14<T: OutcomeTable + ?Sized>(t: &T) -> Result<IJPair> {
    let mut i = 0.0;
    let mut j = 0.0;
    for x in 0..2 {
        for z in 0..2 {
            i += correlator_14(t, x, 0, z)?;
            j += sign(x ^ z) * correlator_14(t, x, 1, z)?;
        }
    }
    Ok(IJPair { i_value: i / 4.0, j_value: j / 4.0, scenario: Scenario::Fourteen })
}

fn index_of<T: OutcomeTable + ?Sized>(t: &T, label: &str) -> Result<usize> {
    t.labels().iter().position(|l| l == label).ok_or_else(|| Error::UnknownLabel(label.to_string()))
}

/// `(⟨A_x B⁰ C_z⟩, ⟨A_x B¹ C_z⟩ restricted to b⁰ = 0)` for the three-outcome
/// measurement. The restricted correlator is the plain sum over `b ∈ {00, 01}`,
/// not renormalized by `P(b⁰ = 0)`.
pub fn correlators_13<T: OutcomeTable + ?Sized>(t: &T, x: usize, z: usize) -> Result<(f64, f64)> {
    check_arity(t, 3)?;
    let b00 = index_of(t, "00")?;
    let b01 = index_of(t, "01")?;
    let bg = index_of(t, GROUPED_LABEL)?;
    let mut c0 = 0.0;
    let mut c1 = 0.0;
    for a in 0..2 {
        for c in 0..2 {
            let s = sign(a ^ c);
            let (p00, p01, pg) = (t.prob(x, z, a, b00, c), t.prob(x, z, a, b01, c), t.prob(x, z, a, bg, c));
            c0 += s * (p00 + p01 - pg);
            c1 += s * (p00 - p01);
        }
    }
    Ok((c0, c1))
}

pub fn ij_13<T: OutcomeTable + ?Sized>(t: &T) -> Result<IJPair> {
    let mut i = 0.0;
    let mut j = 0.0;
    for x in 0..2 {
        for z in 0..2 {
            let (c0, c1) = correlators_13(t, x, z)?;
            i += c0;
            j += sign(x ^ z) * c1;
        }
    }
    Ok(IJPair { i_value: i / 4.0, j_value: j / 4.0, scenario: Scenario::Thirteen })
}

/// `I` and `J` for the table's Bob arity: four outcomes use the full-BSM
/// expressions, three outcomes the partial-BSM ones.
pub fn ij_auto<T: OutcomeTable + ?Sized>(t: &T) -> Result<IJPair> {
    match t.b_arity() {
        4 => ij_14(t),
        3 => ij_13(t),
        found => Err(Error::Arity { expected: 4, found }),
    }
}

/// `B = √|I| + √|J|`.
pub fn bilocal_parameter(ij: &IJPair) -> f64 {
    ij.i_value.abs().sqrt() + ij.j_value.abs().sqrt()
}

/// Herald and sign pattern of an event-ready CHSH expression.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChshConfig {
    pub herald: String,
    /// Signs on `⟨A₀C₀⟩, ⟨A₀C₁⟩, ⟨A₁C₀⟩, ⟨A₁C₁⟩`.
    pub signs: [i8; 4],
}

impl Default for ChshConfig {
    /// Herald `01` (`Φ⁻`) with signs `(+, +, −, +)`.
    fn default() -> Self {
        Self { herald: "01".to_string(), signs: [1, 1, -1, 1] }
    }
}

impl ChshConfig {
    pub fn new(herald: impl Into<String>, signs: [i8; 4]) -> Result<Self> {
        if signs.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::InvalidParameter(format!("CHSH signs must be ±1, got {signs:?}")));
        }
        let negatives = signs.iter().filter(|&&s| s == -1).count();
        if negatives != 1 && negatives != 3 {
            return Err(Error::InvalidParameter(format!(
                "CHSH sign pattern needs one or three minus signs, got {signs:?}"
            )));
        }
        Ok(Self { herald: herald.into(), signs })
    }

    /// The eight sign patterns with an odd number of minus signs.
    pub fn sign_patterns() -> Vec<[i8; 4]> {
        (0u8..16)
            .filter(|m| m.count_ones() % 2 == 1)
            .map(|m| std::array::from_fn(|k| if (m >> k) & 1 == 1 { -1 } else { 1 }))
            .collect()
    }

    fn combine(&self, corr: impl Fn(usize, usize) -> f64) -> f64 {
        (0..4).map(|k| f64::from(self.signs[k]) * corr(k / 2, k % 2)).sum()
    }
}

/// Signed sum of the conditioned correlators `⟨A_x C_z⟩_{|herald}`.
pub fn chsh(pairs: &[ConditionedPair], settings: &ScenarioSettings, config: &ChshConfig) -> Result<f64> {
    let pair = pairs
        .iter()
        .find(|p| p.herald_label == config.herald)
        .ok_or_else(|| Error::UnknownLabel(config.herald.clone()))?;
    if pair.herald_probability < HERALD_MIN_PROB {
        return Err(Error::HeraldNeverFires { label: config.herald.clone(), probability: pair.herald_probability });
    }
    let table = conditional_ac_distribution(pair, settings);
    Ok(config.combine(|x, z| table.correlator(x, z)))
}

/// Event-ready CHSH value computed from a tripartite table by conditioning
/// on Bob's herald outcome.
pub fn chsh_from_table<T: OutcomeTable + ?Sized>(t: &T, config: &ChshConfig) -> Result<f64> {
    let b = index_of(t, &config.herald)?;
    let mut corr = [[0.0; 2]; 2];
    for x in 0..2 {
        for z in 0..2 {
            let mut norm = 0.0;
            let mut acc = 0.0;
            for a in 0..2 {
                for c in 0..2 {
                    let p = t.prob(x, z, a, b, c);
                    norm += p;
                    acc += sign(a ^ c) * p;
                }
            }
            if norm < HERALD_MIN_PROB {
                return Err(Error::HeraldNeverFires { label: config.herald.clone(), probability: norm });
            }
            corr[x][z] = acc / norm;
        }
    }
    Ok(config.combine(|x, z| corr[x][z]))
}

/// The (herald, signs) configuration with the largest CHSH value over all
/// heralds that fire and all eight sign patterns. Ties keep the first found
/// in POVM order, then sign-pattern order.
pub fn best_chsh(pairs: &[ConditionedPair], settings: &ScenarioSettings) -> Result<(ChshConfig, f64)> {
    let mut best: Option<(ChshConfig, f64)> = None;
    for pair in pairs.iter().filter(|p| p.herald_probability >= HERALD_MIN_PROB) {
        for signs in ChshConfig::sign_patterns() {
            let config = ChshConfig { herald: pair.herald_label.clone(), signs };
            let value = chsh(pairs, settings, &config)?;
            if best.as_ref().is_none_or(|(_, v)| value > *v) {
                best = Some((config, value));
            }
        }
    }
    best.ok_or_else(|| Error::InvalidParameter("no herald fires".into()))
}

/// Closed-form values at white-noise visibility `v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedCurves {
    pub b14: f64,
    pub b13: f64,
    pub chsh: f64,
}

/// `(√(2v), √(3v/2), 2√2·v)`.
pub fn predicted_curves(v: f64) -> Result<PredictedCurves> {
    check_visibility(v)?;
    Ok(PredictedCurves { b14: (2.0 * v).sqrt(), b13: (1.5 * v).sqrt(), chsh: 2.0 * SQRT_2 * v })
}

/// Nonbilocal/nonlocal flags at visibility `v`, decided on the visibility
/// thresholds so that boundary points are classified exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionFlags {
    pub nonbilocal_14: bool,
    pub nonbilocal_13: bool,
    pub nonlocal: bool,
}

impl RegionFlags {
    pub fn at(v: f64) -> Self {
        Self { nonbilocal_14: v > V_THRESHOLD_14, nonbilocal_13: v > V_THRESHOLD_13, nonlocal: v > V_THRESHOLD_CHSH }
    }

    /// Nonbilocality without a CHSH violation.
    pub fn grey_14(&self) -> bool {
        self.nonbilocal_14 && !self.nonlocal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurements::{bsm_full, settings_catalog};
    use crate::network::{scenario_distribution, swapped_states, TripartiteDistribution};
    use crate::qcore::{bell_state, BellState, DensityMatrix};

    fn uniform(arity: usize, labels: &[&str]) -> TripartiteDistribution {
        let n = 16 * arity;
        TripartiteDistribution::new(
            Scenario::Fourteen,
            labels.iter().map(|s| s.to_string()).collect(),
            vec![1.0 / (4.0 * arity as f64); n],
        )
        .unwrap()
    }

    #[test]
    fn ideal_14_correlators() {
        let d = scenario_distribution(Scenario::Fourteen, 1.0, 1.0, 1.0).unwrap();
        for x in 0..2 {
            for z in 0..2 {
                assert!((correlator_14(&d, x, 0, z).unwrap() - 0.5).abs() < 1e-12);
                assert!((correlator_14(&d, x, 1, z).unwrap() - sign(x ^ z) * 0.5).abs() < 1e-12);
            }
        }
        let ij = ij_14(&d).unwrap();
        assert!((ij.i_value - 0.5).abs() < 1e-12 && (ij.j_value - 0.5).abs() < 1e-12);
        assert!((bilocal_parameter(&ij) - SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn ideal_13_correlators() {
        let d = scenario_distribution(Scenario::Thirteen, 1.0, 1.0, 1.0).unwrap();
        for x in 0..2 {
            for z in 0..2 {
                let (c0, c1) = correlators_13(&d, x, z).unwrap();
                assert!((c0 - 2.0 / 3.0).abs() < 1e-12);
                assert!((c1 - sign(x ^ z) / 6.0).abs() < 1e-12);
            }
        }
        let ij = ij_13(&d).unwrap();
        assert!((ij.i_value - 2.0 / 3.0).abs() < 1e-12);
        assert!((ij.j_value - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_tables_have_zero_correlators() {
        let d4 = uniform(4, &["00", "01", "10", "11"]);
        assert_eq!(correlator_14(&d4, 0, 0, 1).unwrap(), 0.0);
        let d3 = uniform(3, &["00", "01", GROUPED_LABEL]);
        assert_eq!(correlators_13(&d3, 1, 0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn arity_mismatch_is_an_error() {
        let d3 = uniform(3, &["00", "01", GROUPED_LABEL]);
        assert_eq!(ij_14(&d3), Err(Error::Arity { expected: 4, found: 3 }));
        let d4 = uniform(4, &["00", "01", "10", "11"]);
        assert_eq!(ij_13(&d4), Err(Error::Arity { expected: 3, found: 4 }));
    }

    #[test]
    fn measured_visibility_13() {
        let d = scenario_distribution(Scenario::Thirteen, 1.0, 1.0, 0.85).unwrap();
        let ij = ij_13(&d).unwrap();
        assert!((ij.i_value - 0.85 * 2.0 / 3.0).abs() < 1e-9);
        assert!((ij.j_value - 0.85 / 6.0).abs() < 1e-9);
    }

    #[test]
    fn bilocal_parameter_values() {
        let b = |i, j| bilocal_parameter(&IJPair { i_value: i, j_value: j, scenario: Scenario::Fourteen });
        assert!((b(0.5, 0.5) - SQRT_2).abs() < 1e-12);
        assert!((b(0.432, 0.356) - 1.2540).abs() < 1e-4);
        assert_eq!(b(0.0, 0.0), 0.0);
        assert_eq!(b(-0.25, 0.25), 1.0);
    }

    #[test]
    fn chsh_ideal_at_phi_minus() {
        let phi = bell_state(BellState::PhiPlus);
        let pairs = swapped_states(&phi, &phi, &bsm_full()).unwrap();
        let settings = settings_catalog(Scenario::Chsh);
        let s = chsh(&pairs, &settings, &ChshConfig::default()).unwrap();
        assert!((s - 2.0 * SQRT_2).abs() < 1e-12);

        // Singlet heralding with the same sign pattern gives zero.
        let singlet = ChshConfig::new("11", [1, 1, -1, 1]).unwrap();
        assert!(chsh(&pairs, &settings, &singlet).unwrap().abs() < 1e-12);
    }

    #[test]
    fn chsh_of_mixed_state_vanishes() {
        let pairs = vec![ConditionedPair {
            herald_label: "01".into(),
            herald_probability: 0.25,
            state: DensityMatrix::maximally_mixed(2),
        }];
        let s = chsh(&pairs, &settings_catalog(Scenario::Chsh), &ChshConfig::default()).unwrap();
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn every_herald_reaches_tsirelson_with_some_pattern() {
        let phi = bell_state(BellState::PhiPlus);
        let pairs = swapped_states(&phi, &phi, &bsm_full()).unwrap();
        let settings = settings_catalog(Scenario::Chsh);
        let mut max = 0.0f64;
        for p in &pairs {
            for signs in ChshConfig::sign_patterns() {
                let cfg = ChshConfig::new(p.herald_label.clone(), signs).unwrap();
                max = max.max(chsh(&pairs, &settings, &cfg).unwrap().abs());
            }
        }
        assert!((max - 2.0 * SQRT_2).abs() < 1e-12);
        let (cfg, value) = best_chsh(&pairs, &settings).unwrap();
        assert!((value - 2.0 * SQRT_2).abs() < 1e-12);
        assert_eq!(chsh(&pairs, &settings, &cfg).unwrap(), value);
    }

    #[test]
    fn chsh_config_validation() {
        assert_eq!(ChshConfig::sign_patterns().len(), 8);
        assert!(ChshConfig::new("01", [1, 1, 1, 1]).is_err());
        assert!(ChshConfig::new("01", [-1, -1, 1, 1]).is_err());
        assert!(ChshConfig::new("01", [-1, -1, -1, 1]).is_ok());
        assert!(ChshConfig::new("01", [2, 1, 1, -1]).is_err());
    }

    #[test]
    fn chsh_from_table_matches_pairs() {
        let d = scenario_distribution(Scenario::Chsh, 0.9, 0.95, 0.92).unwrap();
        let (r1, r2) = crate::network::werner_sources(0.9, 0.95).unwrap();
        let bob = crate::measurements::bsm_noisy(&bsm_full(), 0.92).unwrap();
        let pairs = swapped_states(&r1, &r2, &bob).unwrap();
        for signs in ChshConfig::sign_patterns() {
            for herald in ["00", "01", "10", "11"] {
                let cfg = ChshConfig::new(herald, signs).unwrap();
                let a = chsh_from_table(&d, &cfg).unwrap();
                let b = chsh(&pairs, &settings_catalog(Scenario::Chsh), &cfg).unwrap();
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn predicted_curve_values() {
        let c = predicted_curves(1.0).unwrap();
        assert!((c.b14 - SQRT_2).abs() < 1e-12);
        assert!((c.b13 - 1.22474).abs() < 1e-5);
        assert!((c.chsh - 2.82843).abs() < 1e-5);
        assert_eq!(predicted_curves(0.5).unwrap().b14, 1.0);
        assert!((predicted_curves(V_THRESHOLD_CHSH).unwrap().chsh - 2.0).abs() < 1e-15);
        assert!(predicted_curves(1.01).is_err());
    }

    #[test]
    fn region_flags_flip_at_thresholds() {
        for (t, pick) in [
            (V_THRESHOLD_14, (|f: RegionFlags| f.nonbilocal_14) as fn(RegionFlags) -> bool),
            (V_THRESHOLD_13, |f: RegionFlags| f.nonbilocal_13),
            (V_THRESHOLD_CHSH, |f: RegionFlags| f.nonlocal),
        ] {
            assert!(!pick(RegionFlags::at(t - 1e-6)));
            assert!(!pick(RegionFlags::at(t)));
            assert!(pick(RegionFlags::at(t + 1e-6)));
        }
        assert!(RegionFlags::at(0.6).grey_14());
    }
}
