//! Finite-statistics layer: multinomial counts, flip noise, detector-bias
//! symmetrization and bootstrap error bars.
//!
//! Flip probability: to take a measured visibility `v_max` down to
//! `v_target`, every Alice outcome is flipped with `p = (1 − v_target/v_max)/2`,
//! so every correlator involving Alice scales by `1 − 2p = v_target/v_max`.
//! `p = 1 − v/2` would not give that scaling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inequalities::{bilocal_parameter, chsh_from_table, ij_auto, ChshConfig};
use crate::measurements::Scenario;
use crate::network::{cell_index, cells_per_setting, OutcomeTable, TripartiteDistribution};

/// Default number of bootstrap resamples.
pub const DEFAULT_BOOTSTRAP_ROUNDS: usize = 1000;

/// Minimum number of bootstrap resamples accepted by [`estimate`].
pub const MIN_BOOTSTRAP_ROUNDS: usize = 100;

/// Independent ChaCha8 stream `stream` under `seed`.
pub fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Coincidence counts `N[x][z][a][b][c]`, laid out like [`TripartiteDistribution`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountsTable {
    scenario: Scenario,
    labels: Vec<String>,
    counts: Vec<u64>,
    trials_per_setting: u64,
}

impl CountsTable {
    pub fn new(scenario: Scenario, labels: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        let arity = labels.len();
        let per = cells_per_setting(arity);
        if counts.len() != 4 * per {
            return Err(Error::Dimension(format!("expected {} cells, found {}", 4 * per, counts.len())));
        }
        let totals: Vec<u64> = counts.chunks(per).map(|s| s.iter().sum()).collect();
        if totals.iter().any(|&t| t != totals[0]) {
            return Err(Error::Counts(format!("unequal trials per setting: {totals:?}")));
        }
        Ok(Self { scenario, labels, counts, trials_per_setting: totals[0] })
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn trials_per_setting(&self) -> u64 {
        self.trials_per_setting
    }

    pub fn count(&self, x: usize, z: usize, a: usize, b: usize, c: usize) -> u64 {
        self.counts[cell_index(self.b_arity(), x, z, a, b, c)]
    }

    pub fn setting_slice(&self, x: usize, z: usize) -> &[u64] {
        let per = cells_per_setting(self.b_arity());
        let start = (x * 2 + z) * per;
        &self.counts[start..start + per]
    }

    /// Counts produced by `n · P` exactly, rounded to the nearest integer.
    /// Fails unless the rounded cells of every setting add up to `n`.
    pub fn from_expected(dist: &TripartiteDistribution, n: u64) -> Result<Self> {
        let counts = dist.table().iter().map(|p| (p * n as f64).round() as u64).collect();
        Self::new(dist.scenario(), dist.labels().to_vec(), counts)
    }

    fn with_counts(&self, counts: Vec<u64>) -> Self {
        Self { counts, ..self.clone() }
    }
}

impl OutcomeTable for CountsTable {
    fn b_arity(&self) -> usize {
        self.labels.len()
    }

    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn prob(&self, x: usize, z: usize, a: usize, b: usize, c: usize) -> f64 {
        self.count(x, z, a, b, c) as f64 / self.trials_per_setting as f64
    }
}

/// One multinomial draw of size `n` over `probs`, by sequential binomials.
fn multinomial<R: Rng + ?Sized>(rng: &mut R, n: u64, probs: &[f64]) -> Vec<u64> {
    let mut out = vec![0; probs.len()];
    let mut remaining_n = n;
    let mut remaining_p: f64 = probs.iter().sum();
    for (k, &p) in probs.iter().enumerate() {
        if remaining_n == 0 {
            break;
        }
        if k + 1 == probs.len() {
            out[k] = remaining_n;
            break;
        }
        let q = if remaining_p > 0.0 { (p / remaining_p).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(remaining_n, q).expect("q in [0, 1]").sample(rng);
        out[k] = draw;
        remaining_n -= draw;
        remaining_p -= p;
    }
    out
}

/// Independent multinomial draw of `n` trials for each of the four settings.
pub fn simulate_counts<R: Rng + ?Sized>(dist: &TripartiteDistribution, n: u64, rng: &mut R) -> Result<CountsTable> {
    sample_table(dist, dist.table(), n, rng)
}

/// Samples `table`, which need not be no-signaling, with the shape of `dist`.
fn sample_table<R: Rng + ?Sized>(
    dist: &TripartiteDistribution,
    table: &[f64],
    n: u64,
    rng: &mut R,
) -> Result<CountsTable> {
    if n == 0 {
        return Err(Error::InvalidParameter("trials per setting must be at least 1".into()));
    }
    let per = cells_per_setting(dist.b_arity());
    let counts = table.chunks(per).flat_map(|s| multinomial(rng, n, s)).collect();
    CountsTable::new(dist.scenario(), dist.labels().to_vec(), counts)
}

fn check_flip(p: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&p) {
        return Err(Error::InvalidParameter(format!("flip probability {p} outside [0, 1/2]")));
    }
    Ok(())
}

/// Flip probability taking correlators from visibility `v_max` to `v_target`.
pub fn flip_probability(v_target: f64, v_max: f64) -> Result<f64> {
    if !(v_max > 0.0 && v_max <= 1.0) {
        return Err(Error::Visibility(v_max));
    }
    if !(0.0..=v_max).contains(&v_target) {
        return Err(Error::InvalidParameter(format!("target visibility {v_target} outside [0, {v_max}]")));
    }
    Ok((1.0 - v_target / v_max) / 2.0)
}

/// Relabels each recorded event `a → 1 − a` independently with probability `p`.
pub fn flip_noise<R: Rng + ?Sized>(counts: &CountsTable, p: f64, rng: &mut R) -> Result<CountsTable> {
    check_flip(p)?;
    let arity = counts.b_arity();
    let mut out = vec![0; counts.counts.len()];
    for x in 0..2 {
        for z in 0..2 {
            for a in 0..2 {
                for b in 0..arity {
                    for c in 0..2 {
                        let k = counts.count(x, z, a, b, c);
                        let moved = if k == 0 { 0 } else { Binomial::new(k, p).expect("p checked").sample(rng) };
                        out[cell_index(arity, x, z, a, b, c)] += k - moved;
                        out[cell_index(arity, x, z, 1 - a, b, c)] += moved;
                    }
                }
            }
        }
    }
    Ok(counts.with_counts(out))
}

/// Index of the cell reached by `a → 1 − a`, `c → 1 − c`. Bob's outcome is
/// kept, since flipping his bits would reverse the sign of every correlator.
fn mirror_index(arity: usize, cell: usize) -> usize {
    let c = cell % 2;
    let rest = cell / 2;
    let b = rest % arity;
    let rest = rest / arity;
    let a = rest % 2;
    let setting = rest / 2;
    ((setting * 2 + (1 - a)) * arity + b) * 2 + (1 - c)
}

/// Relabels the first half of each setting's events by `a → 1 − a`,
/// `c → 1 − c`. Each cell gives up half its events; cells with an odd count
/// alternately round up and down in index order so exactly `n/2` events per
/// setting are relabeled.
pub fn symmetrize(counts: &CountsTable) -> Result<CountsTable> {
    if !counts.trials_per_setting.is_multiple_of(2) {
        return Err(Error::Counts(format!(
            "symmetrization needs an even number of trials, found {}",
            counts.trials_per_setting
        )));
    }
    let arity = counts.b_arity();
    let per = cells_per_setting(arity);
    let mut out = vec![0; counts.counts.len()];
    for setting in 0..4 {
        let mut round_up = true;
        for cell in setting * per..(setting + 1) * per {
            let k = counts.counts[cell];
            let mut moved = k / 2;
            if k % 2 == 1 {
                if round_up {
                    moved += 1;
                }
                round_up = !round_up;
            }
            out[cell] += k - moved;
            out[mirror_index(arity, cell)] += moved;
        }
    }
    Ok(counts.with_counts(out))
}

/// Relative detection efficiencies of Alice's and Charlie's two detectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorBias {
    pub alice: [f64; 2],
    pub charlie: [f64; 2],
}

impl Default for DetectorBias {
    fn default() -> Self {
        Self { alice: [1.0; 2], charlie: [1.0; 2] }
    }
}

impl DetectorBias {
    /// Alice's outcome-0 detector over-counts by `factor`.
    pub fn alice_zero(factor: f64) -> Self {
        Self { alice: [factor, 1.0], ..Self::default() }
    }

    /// Reweights `P(a,b,c|x,z)` by the detector efficiencies and renormalizes
    /// each setting. The result is generally signaling, so it stays a raw table.
    pub fn apply(&self, dist: &TripartiteDistribution) -> Result<Vec<f64>> {
        self.reweight(dist.b_arity(), dist.table())
    }

    fn reweight(&self, arity: usize, table: &[f64]) -> Result<Vec<f64>> {
        if self.alice.iter().chain(&self.charlie).any(|e| !e.is_finite() || *e <= 0.0) {
            return Err(Error::InvalidParameter("detector efficiencies must be positive".into()));
        }
        let mut table = table.to_vec();
        for (cell, p) in table.iter_mut().enumerate() {
            let c = cell % 2;
            let a = (cell / (2 * arity)) % 2;
            *p *= self.alice[a] * self.charlie[c];
        }
        for setting in table.chunks_mut(cells_per_setting(arity)) {
            let total: f64 = setting.iter().sum();
            setting.iter_mut().for_each(|p| *p /= total);
        }
        Ok(table)
    }
}

/// Biased acquisition without symmetrization: `n` trials per setting seen
/// through `bias`.
pub fn simulate_biased<R: Rng + ?Sized>(
    dist: &TripartiteDistribution,
    bias: &DetectorBias,
    n: u64,
    rng: &mut R,
) -> Result<CountsTable> {
    sample_table(dist, &bias.apply(dist)?, n, rng)
}

/// Symmetrized acquisition: for the first `n/2` trials of each setting the
/// end nodes swap their detector assignment, so the relabeling happens before
/// the biased detectors and is undone in post-processing.
pub fn simulate_symmetrized<R: Rng + ?Sized>(
    dist: &TripartiteDistribution,
    bias: &DetectorBias,
    n: u64,
    rng: &mut R,
) -> Result<CountsTable> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::Counts(format!("symmetrization needs an even number of trials, found {n}")));
    }
    let arity = dist.b_arity();
    let mut mirrored = vec![0.0; dist.table().len()];
    for (cell, p) in dist.table().iter().enumerate() {
        mirrored[mirror_index(arity, cell)] = *p;
    }
    let swapped = sample_table(dist, &bias.reweight(arity, &mirrored)?, n / 2, rng)?;
    let direct = sample_table(dist, &bias.apply(dist)?, n / 2, rng)?;
    let mut counts = direct.counts.clone();
    for (cell, k) in swapped.counts.iter().enumerate() {
        counts[mirror_index(arity, cell)] += k;
    }
    CountsTable::new(dist.scenario(), dist.labels().to_vec(), counts)
}

/// Point estimates and bootstrap uncertainty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub scenario: Scenario,
    pub i_hat: f64,
    pub j_hat: f64,
    pub b_hat: f64,
    pub b_sigma: f64,
    pub chsh_hat: Option<f64>,
    pub chsh_sigma: Option<f64>,
    pub effective_visibility: f64,
    pub seed: u64,
    pub trials_per_setting: u64,
    pub bootstrap_rounds: usize,
}

struct PointEstimate {
    i: f64,
    j: f64,
    b: f64,
    chsh: Option<f64>,
}

fn point_estimate(counts: &CountsTable, config: &ChshConfig) -> Result<PointEstimate> {
    let ij = ij_auto(counts)?;
    let chsh = match counts.scenario {
        Scenario::Chsh => Some(chsh_from_table(counts, config)?),
        _ => None,
    };
    Ok(PointEstimate { i: ij.i_value, j: ij.j_value, b: bilocal_parameter(&ij), chsh })
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn resample(counts: &CountsTable, rng: &mut ChaCha8Rng) -> CountsTable {
    let n = counts.trials_per_setting;
    let per = cells_per_setting(counts.b_arity());
    let resampled = counts
        .counts
        .chunks(per)
        .flat_map(|s| {
            let probs: Vec<f64> = s.iter().map(|&k| k as f64 / n as f64).collect();
            multinomial(rng, n, &probs)
        })
        .collect();
    counts.with_counts(resampled)
}

/// Estimates with the default CHSH configuration.
pub fn estimate(counts: &CountsTable, bootstrap_rounds: usize, seed: u64) -> Result<EstimateReport> {
    estimate_with(counts, bootstrap_rounds, seed, &ChshConfig::default())
}

/// Point estimates from empirical frequencies; `b_sigma` (and `chsh_sigma`)
/// is the standard deviation over per-setting multinomial resamples.
/// For the CHSH scenario `I` and `J` are the same formulas evaluated on the
/// CHSH settings, and the effective visibility is read off the CHSH value.
pub fn estimate_with(
    counts: &CountsTable,
    bootstrap_rounds: usize,
    seed: u64,
    config: &ChshConfig,
) -> Result<EstimateReport> {
    if counts.trials_per_setting == 0 {
        return Err(Error::Counts("empty counts table".into()));
    }
    if bootstrap_rounds < MIN_BOOTSTRAP_ROUNDS {
        return Err(Error::InvalidParameter(format!(
            "at least {MIN_BOOTSTRAP_ROUNDS} bootstrap rounds required, found {bootstrap_rounds}"
        )));
    }
    let point = point_estimate(counts, config)?;
    let rounds: Vec<(f64, Option<f64>)> = (0..bootstrap_rounds)
        .into_par_iter()
        .map(|r| {
            let mut rng = seeded_stream(seed, r as u64);
            let sample = resample(counts, &mut rng);
            // A resample can lose every herald event; its CHSH is then undefined.
            let ij = ij_auto(&sample).map(|ij| bilocal_parameter(&ij)).unwrap_or(f64::NAN);
            let chsh = point.chsh.map(|_| chsh_from_table(&sample, config).unwrap_or(f64::NAN));
            (ij, chsh)
        })
        .collect();
    let bs: Vec<f64> = rounds.iter().map(|r| r.0).filter(|v| v.is_finite()).collect();
    let chsh_sigma = point.chsh.map(|_| {
        let cs: Vec<f64> = rounds.iter().filter_map(|r| r.1).filter(|v| v.is_finite()).collect();
        std_dev(&cs)
    });
    let effective_visibility = match counts.scenario {
        Scenario::Fourteen => point.b * point.b / 2.0,
        Scenario::Thirteen => 2.0 * point.b * point.b / 3.0,
        Scenario::Chsh => point.chsh.unwrap_or(0.0) / (2.0 * std::f64::consts::SQRT_2),
    };
    Ok(EstimateReport {
        scenario: counts.scenario,
        i_hat: point.i,
        j_hat: point.j,
        b_hat: point.b,
        b_sigma: std_dev(&bs),
        chsh_hat: point.chsh,
        chsh_sigma,
        effective_visibility,
        seed,
        trials_per_setting: counts.trials_per_setting,
        bootstrap_rounds,
    })
}
