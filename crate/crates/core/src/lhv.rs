//! Explicit local and bilocal hidden-variable models.
//!
//! Alice's and Charlie's responses are deterministic functions of their input
//! and hidden variable; Bob's response is a distribution over his outcomes.
//! A bilocal model carries one weight vector per source and never a joint
//! table: the weight of `(λ₁, λ₂)` is always the product `q₁(λ₁) q₂(λ₂)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurements::{Scenario, GROUPED_LABEL};
use crate::network::{cell_index, cells_per_setting, TripartiteDistribution};
use crate::sampler::seeded_stream;

/// Deterministic binary response `[f(0), f(1)]`.
pub type Response = [u8; 2];

/// The four deterministic responses for a binary input and output.
pub const RESPONSES: [Response; 4] = [[0, 0], [0, 1], [1, 0], [1, 1]];

const SIMPLEX_TOL: f64 = 1e-9;

/// Golden-section iterations per blend search.
pub const GOLDEN_ITERATIONS: usize = 48;

/// A sweep improving `B` by less than this ends the ascent.
pub const CONVERGENCE_TOL: f64 = 1e-10;

/// Bob's outcome labels for a given arity.
pub fn labels_for_arity(arity: usize) -> Result<Vec<String>> {
    match arity {
        4 => Ok(["00", "01", "10", "11"].iter().map(|s| s.to_string()).collect()),
        3 => Ok(["00", "01", GROUPED_LABEL].iter().map(|s| s.to_string()).collect()),
        other => Err(Error::Arity { expected: 4, found: other }),
    }
}

fn scenario_for_arity(arity: usize) -> Scenario {
    if arity == 3 {
        Scenario::Thirteen
    } else {
        Scenario::Fourteen
    }
}

/// Sign weights of Bob's outcomes in the `I` and `J` correlators.
fn bob_signs(arity: usize) -> (&'static [f64], &'static [f64]) {
    match arity {
        3 => (&[1.0, 1.0, -1.0], &[1.0, -1.0, 0.0]),
        _ => (&[1.0, 1.0, -1.0, -1.0], &[1.0, -1.0, 1.0, -1.0]),
    }
}

fn check_simplex(name: &str, w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::InvalidModel(format!("{name} is empty")));
    }
    if w.iter().any(|p| !p.is_finite() || *p < -SIMPLEX_TOL) {
        return Err(Error::InvalidModel(format!("{name} has a negative entry")));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidModel(format!("{name} sums to {total}")));
    }
    Ok(())
}

fn check_responses(name: &str, table: &[Response], k: usize) -> Result<()> {
    if table.len() != k {
        return Err(Error::InvalidModel(format!("{name} has {} rows, expected {k}", table.len())));
    }
    if table.iter().flatten().any(|&o| o > 1) {
        return Err(Error::InvalidModel(format!("{name} has a non-binary output")));
    }
    Ok(())
}

/// `½ Σ_x (−1)^{f(x)}` and `½ Σ_x (−1)^{x + f(x)}`.
fn response_moments(f: Response) -> (f64, f64) {
    let s = |bit: u8| if bit == 0 { 1.0 } else { -1.0 };
    (0.5 * (s(f[0]) + s(f[1])), 0.5 * (s(f[0]) - s(f[1])))
}

fn row_moments(row: &[f64]) -> (f64, f64) {
    let (si, sj) = bob_signs(row.len());
    let dot = |s: &[f64]| s.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
    (dot(si), dot(sj))
}

fn b_value(i: f64, j: f64) -> f64 {
    i.abs().sqrt() + j.abs().sqrt()
}

/// Uniform sample from the probability simplex of dimension `k`.
pub fn sample_simplex<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|p| *p /= total);
    w
}

fn sample_response<R: Rng + ?Sized>(rng: &mut R) -> Response {
    RESPONSES[rng.random_range(0..4)]
}

/// Single hidden variable shared by all three parties.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalModel {
    pub weights: Vec<f64>,
    pub alice: Vec<Response>,
    pub bob: Vec<Vec<f64>>,
    pub charlie: Vec<Response>,
}

impl LocalModel {
    pub fn cardinality(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self, arity: usize) -> Result<()> {
        let k = self.cardinality();
        check_simplex("weights", &self.weights)?;
        check_responses("alice table", &self.alice, k)?;
        check_responses("charlie table", &self.charlie, k)?;
        if self.bob.len() != k {
            return Err(Error::InvalidModel(format!("bob table has {} rows, expected {k}", self.bob.len())));
        }
        for row in &self.bob {
            if row.len() != arity {
                return Err(Error::Arity { expected: arity, found: row.len() });
            }
            check_simplex("bob row", row)?;
        }
        Ok(())
    }

    /// `(I, J)` in closed form from the response tables.
    pub fn ij(&self) -> (f64, f64) {
        let mut i = 0.0;
        let mut j = 0.0;
        for l in 0..self.cardinality() {
            let (ai, aj) = response_moments(self.alice[l]);
            let (ci, cj) = response_moments(self.charlie[l]);
            let (bi, bj) = row_moments(&self.bob[l]);
            i += self.weights[l] * ai * ci * bi;
            j += self.weights[l] * aj * cj * bj;
        }
        (i, j)
    }

    pub fn b_value(&self) -> f64 {
        let (i, j) = self.ij();
        b_value(i, j)
    }
}

/// Two independent hidden variables, one per source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilocalModel {
    pub weights1: Vec<f64>,
    pub weights2: Vec<f64>,
    pub alice: Vec<Response>,
    /// Row `λ₁ · K₂ + λ₂` is `P(b | λ₁, λ₂)`.
    pub bob: Vec<Vec<f64>>,
    pub charlie: Vec<Response>,
}

impl BilocalModel {
    pub fn cardinalities(&self) -> (usize, usize) {
        (self.weights1.len(), self.weights2.len())
    }

    pub fn bob_row(&self, l1: usize, l2: usize) -> &[f64] {
        &self.bob[l1 * self.weights2.len() + l2]
    }

    pub fn validate(&self, arity: usize) -> Result<()> {
        let (k1, k2) = self.cardinalities();
        check_simplex("weights1", &self.weights1)?;
        check_simplex("weights2", &self.weights2)?;
        check_responses("alice table", &self.alice, k1)?;
        check_responses("charlie table", &self.charlie, k2)?;
        if self.bob.len() != k1 * k2 {
            return Err(Error::InvalidModel(format!("bob table has {} rows, expected {}", self.bob.len(), k1 * k2)));
        }
        for row in &self.bob {
            if row.len() != arity {
                return Err(Error::Arity { expected: arity, found: row.len() });
            }
            check_simplex("bob row", row)?;
        }
        Ok(())
    }

    /// `(I, J)` in closed form from the response tables.
    pub fn ij(&self) -> (f64, f64) {
        let (k1, k2) = self.cardinalities();
        let mut i = 0.0;
        let mut j = 0.0;
        for l1 in 0..k1 {
            let (ai, aj) = response_moments(self.alice[l1]);
            for l2 in 0..k2 {
                let (ci, cj) = response_moments(self.charlie[l2]);
                let (bi, bj) = row_moments(self.bob_row(l1, l2));
                let w = self.weights1[l1] * self.weights2[l2];
                i += w * ai * ci * bi;
                j += w * aj * cj * bj;
            }
        }
        (i, j)
    }

    pub fn b_value(&self) -> f64 {
        let (i, j) = self.ij();
        b_value(i, j)
    }

    /// Unvalidated flat table `[x][z][a][b][c]`.
    fn raw_table(&self, arity: usize) -> Vec<f64> {
        let (k1, k2) = self.cardinalities();
        let mut table = vec![0.0; 4 * cells_per_setting(arity)];
        for l1 in 0..k1 {
            for l2 in 0..k2 {
                let w = self.weights1[l1] * self.weights2[l2];
                if w == 0.0 {
                    continue;
                }
                let row = self.bob_row(l1, l2);
                for x in 0..2 {
                    let a = self.alice[l1][x] as usize;
                    for z in 0..2 {
                        let c = self.charlie[l2][z] as usize;
                        for (b, p) in row.iter().enumerate() {
                            table[cell_index(arity, x, z, a, b, c)] += w * p;
                        }
                    }
                }
            }
        }
        table
    }
}

/// `P(a,b,c|x,z) = Σ q₁(λ₁) q₂(λ₂) [a = f_A(x,λ₁)] P(b|λ₁,λ₂) [c = f_C(z,λ₂)]`.
pub fn eval_bilocal(model: &BilocalModel, b_arity: usize) -> Result<TripartiteDistribution> {
    let labels = labels_for_arity(b_arity)?;
    model.validate(b_arity)?;
    TripartiteDistribution::new(scenario_for_arity(b_arity), labels, model.raw_table(b_arity))
}

/// `P(a,b,c|x,z) = Σ q(λ) [a = f_A(x,λ)] P(b|λ) [c = f_C(z,λ)]`.
pub fn eval_local(model: &LocalModel, b_arity: usize) -> Result<TripartiteDistribution> {
    let labels = labels_for_arity(b_arity)?;
    model.validate(b_arity)?;
    let mut table = vec![0.0; 4 * cells_per_setting(b_arity)];
    for l in 0..model.cardinality() {
        for x in 0..2 {
            let a = model.alice[l][x] as usize;
            for z in 0..2 {
                let c = model.charlie[l][z] as usize;
                for (b, p) in model.bob[l].iter().enumerate() {
                    table[cell_index(b_arity, x, z, a, b, c)] += model.weights[l] * p;
                }
            }
        }
    }
    TripartiteDistribution::new(scenario_for_arity(b_arity), labels, table)
}

/// Random bilocal model: simplex-uniform weights and Bob rows, uniformly
/// chosen deterministic Alice/Charlie responses.
pub fn sample_bilocal<R: Rng + ?Sized>(rng: &mut R, k1: usize, k2: usize, b_arity: usize) -> BilocalModel {
    assert!(k1 >= 1 && k2 >= 1, "cardinalities must be positive");
    BilocalModel {
        weights1: sample_simplex(rng, k1),
        weights2: sample_simplex(rng, k2),
        alice: (0..k1).map(|_| sample_response(rng)).collect(),
        bob: (0..k1 * k2).map(|_| sample_simplex(rng, b_arity)).collect(),
        charlie: (0..k2).map(|_| sample_response(rng)).collect(),
    }
}

/// Random local model, drawn like [`sample_bilocal`].
pub fn sample_local<R: Rng + ?Sized>(rng: &mut R, k: usize, b_arity: usize) -> LocalModel {
    assert!(k >= 1, "cardinality must be positive");
    LocalModel {
        weights: sample_simplex(rng, k),
        alice: (0..k).map(|_| sample_response(rng)).collect(),
        bob: (0..k).map(|_| sample_simplex(rng, b_arity)).collect(),
        charlie: (0..k).map(|_| sample_response(rng)).collect(),
    }
}

/// Budget and seed of a multi-restart search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub restarts: usize,
    /// Maximum number of full sweeps per restart.
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { restarts: 64, iterations: 200, seed: 0 }
    }
}

impl SearchConfig {
    fn check(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("at least one restart is required".into()));
        }
        Ok(())
    }
}

/// Golden-section maximization of `f` on `[0, 1]`.
fn golden_max(f: impl Fn(f64) -> f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..GOLDEN_ITERATIONS {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

fn blend(w: &[f64], vertex: usize, t: f64) -> Vec<f64> {
    w.iter().enumerate().map(|(k, p)| (1.0 - t) * p + if k == vertex { t } else { 0.0 }).collect()
}

/// Improves the simplex vector `w` in place along vertex blends. Only strict
/// improvements replace the incumbent.
fn ascend_simplex(w: &mut Vec<f64>, current: &mut f64, objective: impl Fn(&[f64]) -> f64) {
    for vertex in 0..w.len() {
        let (t, value) = golden_max(|t| objective(&blend(w, vertex, t)));
        let at_vertex = objective(&blend(w, vertex, 1.0));
        let (t, value) = if at_vertex > value { (1.0, at_vertex) } else { (t, value) };
        if value > *current {
            *w = blend(w, vertex, t);
            *current = value;
        }
    }
}

fn ascend_responses(table: &mut [Response], current: &mut f64, objective: impl Fn(usize, Response) -> f64) {
    for l in 0..table.len() {
        for candidate in RESPONSES {
            let value = objective(l, candidate);
            if value > *current {
                table[l] = candidate;
                *current = value;
            }
        }
    }
}

fn bilocal_sweep(m: &mut BilocalModel, current: &mut f64) {
    let mut w = m.weights1.clone();
    ascend_simplex(&mut w, current, |q| BilocalModel { weights1: q.to_vec(), ..m.clone() }.b_value());
    m.weights1 = w;
    let mut w = m.weights2.clone();
    ascend_simplex(&mut w, current, |q| BilocalModel { weights2: q.to_vec(), ..m.clone() }.b_value());
    m.weights2 = w;

    let mut table = m.alice.clone();
    ascend_responses(&mut table, current, |l, f| {
        let mut trial = m.clone();
        trial.alice[l] = f;
        trial.b_value()
    });
    m.alice = table;
    let mut table = m.charlie.clone();
    ascend_responses(&mut table, current, |l, f| {
        let mut trial = m.clone();
        trial.charlie[l] = f;
        trial.b_value()
    });
    m.charlie = table;

    for r in 0..m.bob.len() {
        let mut row = m.bob[r].clone();
        ascend_simplex(&mut row, current, |p| {
            let mut trial = m.clone();
            trial.bob[r] = p.to_vec();
            trial.b_value()
        });
        m.bob[r] = row;
    }
}

fn local_sweep(m: &mut LocalModel, current: &mut f64) {
    let mut w = m.weights.clone();
    ascend_simplex(&mut w, current, |q| LocalModel { weights: q.to_vec(), ..m.clone() }.b_value());
    m.weights = w;

    let mut table = m.alice.clone();
    ascend_responses(&mut table, current, |l, f| {
        let mut trial = m.clone();
        trial.alice[l] = f;
        trial.b_value()
    });
    m.alice = table;
    let mut table = m.charlie.clone();
    ascend_responses(&mut table, current, |l, f| {
        let mut trial = m.clone();
        trial.charlie[l] = f;
        trial.b_value()
    });
    m.charlie = table;

    for r in 0..m.bob.len() {
        let mut row = m.bob[r].clone();
        ascend_simplex(&mut row, current, |p| {
            let mut trial = m.clone();
            trial.bob[r] = p.to_vec();
            trial.b_value()
        });
        m.bob[r] = row;
    }
}

fn run_ascent<M: Clone>(
    mut model: M,
    value: impl Fn(&M) -> f64,
    sweep: impl Fn(&mut M, &mut f64),
    iterations: usize,
) -> (M, f64) {
    let mut current = value(&model);
    for _ in 0..iterations {
        let before = current;
        sweep(&mut model, &mut current);
        if current - before < CONVERGENCE_TOL {
            break;
        }
    }
    (model, current)
}

/// Keeps the best `(index, model, value)`; ties go to the lower restart index.
fn best_of<M: Send>(results: Vec<(usize, M, f64)>) -> (M, f64) {
    results
        .into_iter()
        .reduce(|a, b| if b.2 > a.2 || (b.2 == a.2 && b.0 < a.0) { b } else { a })
        .map(|(_, m, v)| (m, v))
        .expect("at least one restart")
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    seeded_stream(seed, restart as u64)
}

/// Multi-restart coordinate ascent of `B` over bilocal models.
pub fn maximize_b_bilocal(
    scenario: Scenario,
    k1: usize,
    k2: usize,
    config: &SearchConfig,
) -> Result<(BilocalModel, f64)> {
    config.check()?;
    let arity = scenario.b_arity();
    let results: Vec<_> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = restart_rng(config.seed, r);
            let start = sample_bilocal(&mut rng, k1, k2, arity);
            let (m, v) = run_ascent(start, BilocalModel::b_value, bilocal_sweep, config.iterations);
            (r, m, v)
        })
        .collect();
    Ok(best_of(results))
}

/// Multi-restart coordinate ascent of `B` over single-variable local models.
pub fn maximize_b_local(scenario: Scenario, k: usize, config: &SearchConfig) -> Result<(LocalModel, f64)> {
    config.check()?;
    let arity = scenario.b_arity();
    let results: Vec<_> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = restart_rng(config.seed, r);
            let start = sample_local(&mut rng, k, arity);
            let (m, v) = run_ascent(start, LocalModel::b_value, local_sweep, config.iterations);
            (r, m, v)
        })
        .collect();
    Ok(best_of(results))
}

// ---------------------------------------------------------------------------
// Least-squares fitting

/// Inner projected-gradient steps per block and sweep.
const FIT_INNER_STEPS: usize = 25;

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &mut [f64]) {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (k as f64 + 1.0);
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter_mut().for_each(|p| *p = (*p - theta).max(0.0));
}

fn squared_residual(model: &BilocalModel, target: &[f64], arity: usize) -> f64 {
    model.raw_table(arity).iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum()
}

struct Gradients {
    weights1: Vec<f64>,
    weights2: Vec<f64>,
    bob: Vec<Vec<f64>>,
}

fn gradients(model: &BilocalModel, target: &[f64], arity: usize) -> Gradients {
    let (k1, k2) = model.cardinalities();
    let residual: Vec<f64> = model.raw_table(arity).iter().zip(target).map(|(p, t)| 2.0 * (p - t)).collect();
    let mut g1 = vec![0.0; k1];
    let mut g2 = vec![0.0; k2];
    let mut gb = vec![vec![0.0; arity]; k1 * k2];
    for l1 in 0..k1 {
        for l2 in 0..k2 {
            let row = model.bob_row(l1, l2);
            let w = model.weights1[l1] * model.weights2[l2];
            let mut inner = 0.0;
            for x in 0..2 {
                let a = model.alice[l1][x] as usize;
                for z in 0..2 {
                    let c = model.charlie[l2][z] as usize;
                    for b in 0..arity {
                        let r = residual[cell_index(arity, x, z, a, b, c)];
                        inner += r * row[b];
                        gb[l1 * k2 + l2][b] += w * r;
                    }
                }
            }
            g1[l1] += model.weights2[l2] * inner;
            g2[l2] += model.weights1[l1] * inner;
        }
    }
    Gradients { weights1: g1, weights2: g2, bob: gb }
}

#[derive(Clone, Copy)]
enum Block {
    Weights1,
    Weights2,
    Bob,
}

/// Projected gradient step on one block with backtracking; returns the new loss.
fn pg_step(model: &mut BilocalModel, block: Block, step: &mut f64, loss: f64, target: &[f64], arity: usize) -> f64 {
    let g = gradients(model, target, arity);
    loop {
        let mut trial = model.clone();
        let mut moved_sq = 0.0;
        let mut gdot = 0.0;
        let mut apply = |w: &mut Vec<f64>, grad: &[f64]| {
            let old = w.clone();
            for (p, d) in w.iter_mut().zip(grad) {
                *p -= *step * d;
            }
            project_simplex(w);
            for ((new, old), d) in w.iter().zip(&old).zip(grad) {
                moved_sq += (new - old) * (new - old);
                gdot += d * (new - old);
            }
        };
        match block {
            Block::Weights1 => apply(&mut trial.weights1, &g.weights1),
            Block::Weights2 => apply(&mut trial.weights2, &g.weights2),
            Block::Bob => {
                for (row, grad) in trial.bob.iter_mut().zip(&g.bob) {
                    apply(row, grad);
                }
            }
        }
        if moved_sq == 0.0 {
            return loss;
        }
        let new_loss = squared_residual(&trial, target, arity);
        // Sufficient decrease for the projected step.
        if new_loss <= loss + gdot + moved_sq / (2.0 * *step) {
            *model = trial;
            *step *= 1.5;
            return new_loss;
        }
        *step *= 0.5;
        if *step < 1e-14 {
            return loss;
        }
    }
}

fn fit_sweep(m: &mut BilocalModel, loss: &mut f64, steps: &mut [f64; 3], target: &[f64], arity: usize) {
    for (k, block) in [Block::Bob, Block::Weights1, Block::Weights2].into_iter().enumerate() {
        for _ in 0..FIT_INNER_STEPS {
            *loss = pg_step(m, block, &mut steps[k], *loss, target, arity);
        }
    }
    // Discrete moves on the deterministic responses.
    for l in 0..m.alice.len() {
        for f in RESPONSES {
            let mut trial = m.clone();
            trial.alice[l] = f;
            let v = squared_residual(&trial, target, arity);
            if v < *loss {
                *m = trial;
                *loss = v;
            }
        }
    }
    for l in 0..m.charlie.len() {
        for f in RESPONSES {
            let mut trial = m.clone();
            trial.charlie[l] = f;
            let v = squared_residual(&trial, target, arity);
            if v < *loss {
                *m = trial;
                *loss = v;
            }
        }
    }
}

/// Starting point for fitting: responses cycle through all four
/// deterministic strategies, weights and Bob rows are random.
fn fit_start<R: Rng + ?Sized>(rng: &mut R, k1: usize, k2: usize, arity: usize) -> BilocalModel {
    let mut m = sample_bilocal(rng, k1, k2, arity);
    let offset1 = rng.random_range(0..4);
    let offset2 = rng.random_range(0..4);
    for l in 0..k1.min(4) {
        m.alice[l] = RESPONSES[(l + offset1) % 4];
    }
    for l in 0..k2.min(4) {
        m.charlie[l] = RESPONSES[(l + offset2) % 4];
    }
    m
}

/// Least-squares fit of a bilocal model to `target`. Returns the best model
/// and the Euclidean distance `‖P_model − P_target‖₂` over all cells.
pub fn fit_bilocal(
    target: &TripartiteDistribution,
    k1: usize,
    k2: usize,
    config: &SearchConfig,
) -> Result<(BilocalModel, f64)> {
    use crate::network::OutcomeTable;
    config.check()?;
    let arity = target.b_arity();
    let goal = target.table().to_vec();
    let results: Vec<_> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = restart_rng(config.seed, r);
            let mut m = fit_start(&mut rng, k1, k2, arity);
            let mut loss = squared_residual(&m, &goal, arity);
            let mut steps = [1.0; 3];
            for _ in 0..config.iterations {
                let before = loss;
                fit_sweep(&mut m, &mut loss, &mut steps, &goal, arity);
                if before - loss < 1e-16 * before.max(1e-30) || loss < 1e-24 {
                    break;
                }
            }
            (r, m, -loss)
        })
        .collect();
    let (model, neg_loss) = best_of(results);
    Ok((model, (-neg_loss).max(0.0).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inequalities::{bilocal_parameter, ij_auto};
    use rand::SeedableRng;

    fn all_zero_bilocal(arity: usize) -> BilocalModel {
        let mut row = vec![0.0; arity];
        row[0] = 1.0;
        BilocalModel {
            weights1: vec![1.0],
            weights2: vec![1.0],
            alice: vec![[0, 0]],
            bob: vec![row],
            charlie: vec![[0, 0]],
        }
    }

    #[test]
    fn all_zero_model_saturates_i() {
        for arity in [3, 4] {
            let d = eval_bilocal(&all_zero_bilocal(arity), arity).unwrap();
            let ij = ij_auto(&d).unwrap();
            assert_eq!((ij.i_value, ij.j_value), (1.0, 0.0));
            assert_eq!(bilocal_parameter(&ij), 1.0);
        }
    }

    #[test]
    fn uniform_bob_with_constant_ends_has_zero_j() {
        let m = BilocalModel { bob: vec![vec![0.25; 4]], ..all_zero_bilocal(4) };
        let ij = ij_auto(&eval_bilocal(&m, 4).unwrap()).unwrap();
        assert_eq!(ij.j_value, 0.0);
    }

    #[test]
    fn product_model_factorizes() {
        let m = BilocalModel {
            weights1: vec![1.0],
            weights2: vec![1.0],
            alice: vec![[0, 1]],
            bob: vec![vec![0.1, 0.2, 0.3, 0.4]],
            charlie: vec![[1, 1]],
        };
        let d = eval_bilocal(&m, 4).unwrap();
        use crate::network::OutcomeTable;
        for x in 0..2 {
            for z in 0..2 {
                for a in 0..2 {
                    for b in 0..4 {
                        for c in 0..2 {
                            let pa = if a == x { 1.0 } else { 0.0 };
                            let pc = if c == 1 { 1.0 } else { 0.0 };
                            assert!((d.prob(x, z, a, b, c) - pa * m.bob[0][b] * pc).abs() < 1e-15);
                        }
                    }
                }
            }
        }
    }

    fn witness_local() -> LocalModel {
        // λ = 0 saturates I with b¹ uniform, λ = 1 saturates J with b⁰ uniform.
        LocalModel {
            weights: vec![0.5, 0.5],
            alice: vec![[0, 0], [0, 1]],
            bob: vec![vec![0.5, 0.5, 0.0, 0.0], vec![0.5, 0.0, 0.5, 0.0]],
            charlie: vec![[0, 0], [0, 1]],
        }
    }

    #[test]
    fn local_witness_reaches_root_two() {
        let m = witness_local();
        let ij = ij_auto(&eval_local(&m, 4).unwrap()).unwrap();
        assert!((ij.i_value - 0.5).abs() < 1e-15 && (ij.j_value - 0.5).abs() < 1e-15);
        assert!((m.b_value() - std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn point_mass_local_model() {
        let m = LocalModel {
            weights: vec![1.0],
            alice: vec![[1, 0]],
            bob: vec![vec![0.0, 0.0, 1.0]],
            charlie: vec![[0, 1]],
        };
        let d = eval_local(&m, 3).unwrap();
        for x in 0..2 {
            for z in 0..2 {
                let slice = d.setting_slice(x, z);
                assert_eq!(slice.iter().filter(|&&p| p == 1.0).count(), 1);
                assert_eq!(slice.iter().sum::<f64>(), 1.0);
            }
        }
    }

    #[test]
    fn closed_form_matches_table_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for arity in [3, 4] {
            for _ in 0..200 {
                let m = sample_bilocal(&mut rng, 3, 2, arity);
                let ij = ij_auto(&eval_bilocal(&m, arity).unwrap()).unwrap();
                let (i, j) = m.ij();
                assert!((ij.i_value - i).abs() < 1e-12 && (ij.j_value - j).abs() < 1e-12);
                let l = sample_local(&mut rng, 5, arity);
                let ij = ij_auto(&eval_local(&l, arity).unwrap()).unwrap();
                let (i, j) = l.ij();
                assert!((ij.i_value - i).abs() < 1e-12 && (ij.j_value - j).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampled_models_are_valid_and_reproducible() {
        let a = sample_bilocal(&mut ChaCha8Rng::seed_from_u64(5), 4, 4, 4);
        let b = sample_bilocal(&mut ChaCha8Rng::seed_from_u64(5), 4, 4, 4);
        assert_eq!(a, b);
        a.validate(4).unwrap();
        assert!((a.weights1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((a.weights2.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn malformed_models_are_rejected() {
        let mut m = all_zero_bilocal(4);
        m.weights1 = vec![0.7];
        assert!(matches!(eval_bilocal(&m, 4), Err(Error::InvalidModel(_))));
        let m = all_zero_bilocal(4);
        assert!(matches!(eval_bilocal(&m, 3), Err(Error::Arity { .. })));
        let mut m = all_zero_bilocal(4);
        m.alice = vec![[0, 2]];
        assert!(eval_bilocal(&m, 4).is_err());
        assert!(eval_bilocal(&all_zero_bilocal(4), 5).is_err());
    }

    #[test]
    fn k2_one_with_constant_charlie_forces_zero_j() {
        for fa in RESPONSES {
            for fc in [[0u8, 0u8], [1, 1]] {
                for b in 0..4 {
                    let mut row = vec![0.0; 4];
                    row[b] = 1.0;
                    let m = BilocalModel {
                        weights1: vec![1.0],
                        weights2: vec![1.0],
                        alice: vec![fa],
                        bob: vec![row],
                        charlie: vec![fc],
                    };
                    let ij = ij_auto(&eval_bilocal(&m, 4).unwrap()).unwrap();
                    assert_eq!(ij.j_value, 0.0);
                }
            }
        }
    }

    #[test]
    fn golden_section_finds_interior_max() {
        let (t, v) = golden_max(|t| -(t - 0.3) * (t - 0.3));
        assert!((t - 0.3).abs() < 1e-8 && v.abs() < 1e-15);
    }

    #[test]
    fn simplex_projection() {
        let mut v = vec![0.5, 0.5, 0.5];
        project_simplex(&mut v);
        assert!(v.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        let mut v = vec![2.0, -1.0, 0.0];
        project_simplex(&mut v);
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn search_rejects_zero_restarts() {
        let cfg = SearchConfig { restarts: 0, ..SearchConfig::default() };
        assert!(maximize_b_bilocal(Scenario::Fourteen, 2, 2, &cfg).is_err());
    }
}
