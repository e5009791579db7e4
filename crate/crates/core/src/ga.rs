//! Real-valued genetic algorithm with elitist selection.
//!
//! Population 50, 10 parents kept verbatim, uniform crossover and gaussian
//! per-variable mutation (σ = 5% of range, probability 0.1), offspring
//! clamped into range. Runs are deterministic for a given rng seed: all
//! random draws happen on one thread in a fixed order, only fitness
//! evaluations are parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentinel fitness for genes that produce no feasible state.
pub const INFEASIBLE: f64 = f64::NEG_INFINITY;

const INIT_RETRIES: usize = 10;

fn default_population() -> usize {
    50
}
fn default_parents() -> usize {
    10
}
fn default_max_generations() -> usize {
    300
}
fn default_stagnation() -> usize {
    100
}
fn default_mutation_prob() -> f64 {
    0.1
}
fn default_mutation_sigma() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaParams {
    #[serde(default = "default_population")]
    pub population: usize,
    /// Number of best genes carried into the next generation unchanged.
    #[serde(default = "default_parents")]
    pub parents: usize,
    #[serde(default = "default_max_generations")]
    pub max_generations: usize,
    /// Stop after this many consecutive generations without improvement.
    #[serde(default = "default_stagnation")]
    pub stagnation: usize,
    #[serde(default)]
    pub rng_seed: u64,
    /// Per-variable mutation probability.
    #[serde(default = "default_mutation_prob")]
    pub mutation_prob: f64,
    /// Mutation σ as a fraction of the variable's range.
    #[serde(default = "default_mutation_sigma")]
    pub mutation_sigma: f64,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population: default_population(),
            parents: default_parents(),
            max_generations: default_max_generations(),
            stagnation: default_stagnation(),
            rng_seed: 0,
            mutation_prob: default_mutation_prob(),
            mutation_sigma: default_mutation_sigma(),
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::ScenarioInvalid("ga population must be ≥ 2".into()));
        }
        if self.parents == 0 || self.parents > self.population {
            return Err(Error::ScenarioInvalid(
                "ga parents must be in 1..=population".into(),
            ));
        }
        if self.max_generations == 0 {
            return Err(Error::ScenarioInvalid("ga max_generations must be ≥ 1".into()));
        }
        if self.stagnation == 0 {
            return Err(Error::ScenarioInvalid("ga stagnation must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(Error::ScenarioInvalid(
                "ga mutation_prob must be in [0, 1]".into(),
            ));
        }
        if !(self.mutation_sigma > 0.0) {
            return Err(Error::ScenarioInvalid("ga mutation_sigma must be > 0".into()));
        }
        Ok(())
    }
}

/// A best-so-far snapshot: the generation (1-based) where the run's best
/// fitness improved, the fitness reached, and the gene reaching it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Improvement {
    pub generation: usize,
    pub fitness: f64,
    pub gene: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GaRun {
    pub best_gene: Vec<f64>,
    pub best_fitness: f64,
    /// Best fitness per generation (index 0 = generation 1). Non-decreasing
    /// by elitism.
    pub history: Vec<f64>,
    pub improvements: Vec<Improvement>,
    pub generations: usize,
}

impl GaRun {
    /// Best gene known at the end of the given 1-based generation.
    pub fn gene_at_generation(&self, generation: usize) -> Option<&Improvement> {
        self.improvements
            .iter()
            .rev()
            .find(|imp| imp.generation <= generation)
    }
}

/// Runs the GA, maximizing `fitness` over the box `ranges`.
///
/// Genes whose fitness is `NEG_INFINITY` (or NaN, folded into it) never
/// become parents while a finite gene exists. If ten fresh initial
/// populations in a row contain no finite gene, the problem is reported
/// infeasible.
pub fn run_ga<F>(ranges: &[[f64; 2]], params: &GaParams, fitness: F) -> Result<GaRun>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    params.validate()?;
    if ranges.is_empty() {
        return Err(Error::ScenarioInvalid("ga needs at least one variable".into()));
    }
    for r in ranges {
        if !(r[0] < r[1]) {
            return Err(Error::ScenarioInvalid(format!(
                "ga variable range [{}, {}] is empty",
                r[0], r[1]
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let eval = |pop: &[Vec<f64>]| -> Vec<f64> {
        pop.par_iter()
            .map(|g| {
                let f = fitness(g);
                if f.is_nan() {
                    INFEASIBLE
                } else {
                    f
                }
            })
            .collect()
    };

    // Initialization with retries against all-infeasible draws.
    let mut population: Vec<Vec<f64>> = Vec::new();
    let mut scores: Vec<f64> = Vec::new();
    let mut feasible = false;
    for _ in 0..INIT_RETRIES {
        population = (0..params.population)
            .map(|_| ranges.iter().map(|r| rng.gen_range(r[0]..=r[1])).collect())
            .collect();
        scores = eval(&population);
        if scores.iter().any(|f| f.is_finite()) {
            feasible = true;
            break;
        }
    }
    if !feasible {
        return Err(Error::Infeasible(INIT_RETRIES));
    }

    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut history = Vec::new();
    let mut improvements: Vec<Improvement> = Vec::new();
    let mut best_fitness = INFEASIBLE;
    let mut best_gene = Vec::new();
    let mut stale = 0usize;
    let mut generation = 0usize;

    loop {
        generation += 1;

        // Rank by fitness, stable on the original order.
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

        let gen_best = scores[order[0]];
        if gen_best > best_fitness {
            best_fitness = gen_best;
            best_gene = population[order[0]].clone();
            improvements.push(Improvement {
                generation,
                fitness: best_fitness,
                gene: best_gene.clone(),
            });
            stale = 0;
        } else {
            stale += 1;
        }
        history.push(best_fitness);

        if generation >= params.max_generations || stale >= params.stagnation {
            break;
        }

        let finite = order
            .iter()
            .take_while(|&&i| scores[i].is_finite())
            .count()
            .max(1);
        let parent_pool: Vec<usize> = order[..finite.min(params.parents)].to_vec();

        let mut next: Vec<Vec<f64>> = parent_pool
            .iter()
            .map(|&i| population[i].clone())
            .collect();
        while next.len() < params.population {
            let a = &population[parent_pool[rng.gen_range(0..parent_pool.len())]];
            let b = &population[parent_pool[rng.gen_range(0..parent_pool.len())]];
            let mut child: Vec<f64> = (0..ranges.len())
                .map(|v| if rng.gen_bool(0.5) { a[v] } else { b[v] })
                .collect();
            for (v, r) in ranges.iter().enumerate() {
                if rng.gen_bool(params.mutation_prob) {
                    let sigma = params.mutation_sigma * (r[1] - r[0]);
                    child[v] += sigma * normal.sample(&mut rng);
                }
                child[v] = child[v].clamp(r[0], r[1]);
            }
            next.push(child);
        }
        population = next;
        scores = eval(&population);
    }

    Ok(GaRun {
        best_gene,
        best_fitness,
        history,
        improvements,
        generations: generation,
    })
}
