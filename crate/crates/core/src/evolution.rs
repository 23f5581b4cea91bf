//! Evolution engines: a generational tree-GP loop with tournament selection
//! and elitism, and a (1+λ) loop for Cartesian genomes.

use std::fmt::Write as _;

use rand::Rng;

use crate::cgp::{point_mutate, random_genome, CgpConfig, CgpGenome};
use crate::error::{Error, Result};
use crate::expr::{random_population, subtree_crossover, subtree_mutation, ExprTree, TreeInitConfig};
use crate::par;

#[derive(Clone, Debug, PartialEq)]
pub struct EvoConfig {
    pub n_pop: usize,
    pub n_gens: usize,
    pub tournament_size: usize,
    pub p_crossover: f64,
    pub p_mutation: f64,
    /// Offspring per generation in the (1+λ) engine.
    pub lambda: usize,
    /// Generation cap for the (1+λ) engine.
    pub maxiter: usize,
    /// Evaluate fitness on the rayon pool when the `parallel` feature is on.
    pub parallel: bool,
}

impl Default for EvoConfig {
    fn default() -> Self {
        Self {
            n_pop: 100,
            n_gens: 20,
            tournament_size: 7,
            p_crossover: 0.9,
            p_mutation: 0.05,
            lambda: 4,
            maxiter: 100,
            parallel: true,
        }
    }
}

impl EvoConfig {
    pub fn validate_tree(&self) -> Result<()> {
        if self.n_pop < 2 || self.n_gens < 1 {
            return Err(Error::arg(format!(
                "need n_pop >= 2 and n_gens >= 1, got {} and {}",
                self.n_pop, self.n_gens
            )));
        }
        if self.tournament_size < 1 || self.tournament_size > self.n_pop {
            return Err(Error::arg(format!(
                "tournament size {} outside [1, {}]",
                self.tournament_size, self.n_pop
            )));
        }
        let probability = |p: f64| (0.0..=1.0).contains(&p);
        if !probability(self.p_crossover) || !probability(self.p_mutation) || self.p_crossover + self.p_mutation > 1.0 {
            return Err(Error::arg(format!(
                "operator rates {} + {} do not form a distribution",
                self.p_crossover, self.p_mutation
            )));
        }
        Ok(())
    }

    pub fn validate_one_plus_lambda(&self) -> Result<()> {
        if self.lambda < 1 || self.maxiter < 1 {
            return Err(Error::arg(format!(
                "need lambda >= 1 and maxiter >= 1, got {} and {}",
                self.lambda, self.maxiter
            )));
        }
        Ok(())
    }
}

/// Scalar loss of an individual, lower is better. Must be pure.
pub trait Fitness<I>: Sync {
    fn loss(&self, individual: &I) -> f64;
}

impl<I, F> Fitness<I> for F
where
    F: Fn(&I) -> f64 + Sync,
{
    fn loss(&self, individual: &I) -> f64 {
        self(individual)
    }
}

/// NaN losses rank below everything else.
fn quarantine(loss: f64) -> f64 {
    if loss.is_nan() {
        f64::INFINITY
    } else {
        loss
    }
}

/// Losses for `individuals`, in order, NaN mapped to +inf.
pub fn evaluate_all<I: Sync, F: Fitness<I>>(individuals: &[I], fitness: &F, parallel: bool) -> Vec<f64> {
    par::map(individuals, parallel, |ind| quarantine(fitness.loss(ind)))
}

/// Index of the smallest loss, lowest index on ties.
pub fn best_index(losses: &[f64]) -> usize {
    let mut best = 0;
    for (i, &l) in losses.iter().enumerate().skip(1) {
        if l < losses[best] {
            best = i;
        }
    }
    best
}

/// Samples `k` indices uniformly with replacement and returns the one with
/// the smallest loss, preferring the lowest index on ties.
pub fn tournament_select<R: Rng + ?Sized>(losses: &[f64], k: usize, rng: &mut R) -> Result<usize> {
    if losses.is_empty() {
        return Err(Error::arg("tournament over an empty population"));
    }
    if k < 1 || k > losses.len() {
        return Err(Error::arg(format!("tournament size {k} outside [1, {}]", losses.len())));
    }
    Ok(tournament(losses, k, rng))
}

fn tournament<R: Rng + ?Sized>(losses: &[f64], k: usize, rng: &mut R) -> usize {
    let mut best = rng.gen_range(0..losses.len());
    for _ in 1..k {
        let i = rng.gen_range(0..losses.len());
        let (li, lb) = (quarantine(losses[i]), quarantine(losses[best]));
        if li < lb || (li == lb && i < best) {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generation<I> {
    pub index: usize,
    pub best_loss: f64,
    pub best: I,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionTrace<I> {
    pub generations: Vec<Generation<I>>,
}

impl<I> EvolutionTrace<I> {
    fn new() -> Self {
        Self {
            generations: Vec::new(),
        }
    }

    fn record(&mut self, best_loss: f64, best: I) {
        let index = self.generations.len();
        self.generations.push(Generation { index, best_loss, best });
    }

    pub fn champion(&self) -> &I {
        &self.generations.last().expect("trace has at least one generation").best
    }

    pub fn champion_loss(&self) -> f64 {
        self.generations.last().map_or(f64::INFINITY, |g| g.best_loss)
    }

    pub fn best_losses(&self) -> Vec<f64> {
        self.generations.iter().map(|g| g.best_loss).collect()
    }

    /// One `generation<TAB>best_loss` line per generation.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for g in &self.generations {
            let _ = writeln!(out, "{}\t{:?}", g.index, g.best_loss);
        }
        out
    }

    pub fn into_champion(mut self) -> I {
        self.generations.pop().expect("trace has at least one generation").best
    }
}

/// A generational tree population that can be stepped one generation at a
/// time, so several populations can advance in lockstep.
#[derive(Clone, Debug)]
pub struct TreePopulation {
    individuals: Vec<ExprTree>,
    config: EvoConfig,
    tree_config: TreeInitConfig,
    n_features: usize,
}

impl TreePopulation {
    /// Ramped half-and-half initial population.
    pub fn random<R: Rng + ?Sized>(
        config: &EvoConfig,
        tree_config: &TreeInitConfig,
        n_features: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate_tree()?;
        tree_config.validate()?;
        if n_features == 0 {
            return Err(Error::arg("tree population needs at least one feature"));
        }
        Ok(Self {
            individuals: random_population(tree_config, config.n_pop, n_features, rng),
            config: config.clone(),
            tree_config: tree_config.clone(),
            n_features,
        })
    }

    pub fn individuals(&self) -> &[ExprTree] {
        &self.individuals
    }

    pub fn evaluate<F: Fitness<ExprTree>>(&self, fitness: &F) -> Vec<f64> {
        evaluate_all(&self.individuals, fitness, self.config.parallel)
    }

    /// Replaces the population with the next generation: the best individual
    /// is copied unchanged into slot 0 and the rest are bred from tournament
    /// winners.
    pub fn breed<R: Rng + ?Sized>(&mut self, losses: &[f64], rng: &mut R) {
        debug_assert_eq!(losses.len(), self.individuals.len());
        let c = &self.config;
        let k = c.tournament_size;
        let mut next = Vec::with_capacity(c.n_pop);
        next.push(self.individuals[best_index(losses)].clone());
        while next.len() < c.n_pop {
            let r: f64 = rng.gen();
            let parent = &self.individuals[tournament(losses, k, rng)];
            let child = if r < c.p_crossover {
                let donor = &self.individuals[tournament(losses, k, rng)];
                subtree_crossover(parent, donor, self.tree_config.max_depth, rng)
            } else if r < c.p_crossover + c.p_mutation {
                subtree_mutation(parent, &self.tree_config, self.n_features, rng)
            } else {
                parent.clone()
            };
            next.push(child);
        }
        self.individuals = next;
    }
}

/// Runs `n_gens` generations of the tree engine and records the best
/// individual of each evaluated generation.
pub fn evolve_tree_population<F, R>(
    config: &EvoConfig,
    tree_config: &TreeInitConfig,
    fitness: &F,
    n_features: usize,
    rng: &mut R,
) -> Result<EvolutionTrace<ExprTree>>
where
    F: Fitness<ExprTree>,
    R: Rng + ?Sized,
{
    let mut population = TreePopulation::random(config, tree_config, n_features, rng)?;
    let mut trace = EvolutionTrace::new();
    for gen in 0..config.n_gens {
        let losses = population.evaluate(fitness);
        let best = best_index(&losses);
        trace.record(losses[best], population.individuals[best].clone());
        if gen + 1 < config.n_gens {
            population.breed(&losses, rng);
        }
    }
    Ok(trace)
}

/// (1+λ) evolution from a single random genome.
///
/// Generation 0 of the trace is the initial parent; each of the `maxiter`
/// following entries is the parent after that generation's replacement step.
/// The best offspring replaces the parent when its loss is no worse.
pub fn evolve_one_plus_lambda<F, R>(
    config: &EvoConfig,
    fitness: &F,
    cgp_config: &CgpConfig,
    rng: &mut R,
) -> Result<EvolutionTrace<CgpGenome>>
where
    F: Fitness<CgpGenome>,
    R: Rng + ?Sized,
{
    config.validate_one_plus_lambda()?;
    cgp_config.validate()?;
    let mut parent = random_genome(cgp_config, rng);
    let mut parent_loss = quarantine(fitness.loss(&parent));
    let mut trace = EvolutionTrace::new();
    trace.record(parent_loss, parent.clone());
    for _ in 0..config.maxiter {
        let offspring: Vec<CgpGenome> = (0..config.lambda).map(|_| point_mutate(&parent, rng)).collect();
        let losses = evaluate_all(&offspring, fitness, config.parallel);
        let best = best_index(&losses);
        if losses[best] <= parent_loss {
            parent_loss = losses[best];
            parent = offspring.into_iter().nth(best).expect("best index in range");
        }
        trace.record(parent_loss, parent.clone());
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mse(pred: &[f64], target: &[f64]) -> f64 {
        pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64
    }

    #[test]
    fn tournament_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(tournament_select(&[], 1, &mut rng).is_err());
        assert!(tournament_select(&[1.0], 0, &mut rng).is_err());
        assert!(tournament_select(&[1.0], 2, &mut rng).is_err());
    }

    #[test]
    fn tournament_full_sample_returns_argmin() {
        let losses = [0.5, 0.2, 0.9];
        // find seeds where all three indices are drawn, then the winner is fixed
        let mut covered = 0;
        for seed in 0..200 {
            let mut probe = ChaCha8Rng::seed_from_u64(seed);
            let drawn: Vec<usize> = (0..3).map(|_| probe.gen_range(0..3)).collect();
            if (0..3).all(|i| drawn.contains(&i)) {
                let winner = tournament_select(&losses, 3, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                assert_eq!(winner, 1);
                covered += 1;
            }
        }
        assert!(covered > 0);
    }

    #[test]
    fn tournament_ties_prefer_lowest_index() {
        let losses = [0.1, 0.1, 0.1, 0.1];
        for seed in 0..100 {
            let mut probe = ChaCha8Rng::seed_from_u64(seed);
            let drawn: Vec<usize> = (0..4).map(|_| probe.gen_range(0..4)).collect();
            let winner = tournament_select(&losses, 4, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(winner, *drawn.iter().min().unwrap());
        }
    }

    #[test]
    fn tournament_of_one_is_uniform() {
        let losses = [3.0, 2.0, 1.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 4];
        for _ in 0..8000 {
            counts[tournament_select(&losses, 1, &mut rng).unwrap()] += 1;
        }
        // binomial(8000, 1/4): sd ~ 39
        assert!(counts.iter().all(|&c| (c as f64 - 2000.0).abs() < 200.0), "{counts:?}");
    }

    #[test]
    fn nan_losses_never_win() {
        let losses = [f64::NAN, 1.0];
        for seed in 0..50 {
            let mut probe = ChaCha8Rng::seed_from_u64(seed);
            let drawn: Vec<usize> = (0..2).map(|_| probe.gen_range(0..2)).collect();
            let winner = tournament_select(&losses, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            if drawn.contains(&1) {
                assert_eq!(winner, 1);
            }
        }
        assert_eq!(best_index(&[quarantine(f64::NAN), 5.0]), 1);
    }

    #[test]
    fn single_generation_trace() {
        let config = EvoConfig {
            n_pop: 2,
            n_gens: 1,
            tournament_size: 2,
            ..EvoConfig::default()
        };
        let trace = evolve_tree_population(
            &config,
            &TreeInitConfig::default(),
            &|_: &ExprTree| 1.0,
            2,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert_eq!(trace.generations.len(), 1);
    }

    #[test]
    fn constant_fitness_champion() {
        let config = EvoConfig {
            n_pop: 10,
            n_gens: 5,
            ..EvoConfig::default()
        };
        let trace = evolve_tree_population(
            &config,
            &TreeInitConfig::default(),
            &|_: &ExprTree| 0.25,
            3,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert_eq!(trace.champion_loss(), 0.25);
    }

    #[test]
    fn nan_fitness_is_quarantined() {
        let config = EvoConfig {
            n_pop: 20,
            n_gens: 3,
            ..EvoConfig::default()
        };
        // odd-sized trees score NaN, the rest score their size
        let fitness = |t: &ExprTree| if t.len() % 2 == 1 { f64::NAN } else { t.len() as f64 };
        let trace = evolve_tree_population(
            &config,
            &TreeInitConfig::default(),
            &fitness,
            2,
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap();
        for g in &trace.generations {
            assert!(!g.best_loss.is_nan());
            if g.best_loss.is_finite() {
                assert_eq!(g.best.len() % 2, 0);
            }
        }
    }

    #[test]
    fn tree_engine_improves_on_regression() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let rows: Vec<[f64; 2]> = (0..20)
            .map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let target = x.column(0);
        let columns = x.columns();
        let fitness = |t: &ExprTree| mse(&t.eval_columns(&columns).unwrap(), &target);
        let config = EvoConfig {
            n_pop: 50,
            n_gens: 30,
            ..EvoConfig::default()
        };
        let trace = evolve_tree_population(&config, &TreeInitConfig::default(), &fitness, 2, &mut rng).unwrap();
        let losses = trace.best_losses();
        assert_eq!(losses.len(), 30);
        assert!(losses.windows(2).all(|w| w[1] <= w[0]));
        assert!(losses[29] <= losses[0]);
    }

    #[test]
    fn tree_engine_keeps_population_size() {
        let config = EvoConfig {
            n_pop: 13,
            n_gens: 4,
            ..EvoConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pop = TreePopulation::random(&config, &TreeInitConfig::default(), 2, &mut rng).unwrap();
        for _ in 0..4 {
            let losses = pop.evaluate(&|t: &ExprTree| t.len() as f64);
            pop.breed(&losses, &mut rng);
            assert_eq!(pop.individuals().len(), 13);
        }
    }

    #[test]
    fn one_plus_lambda_draw_prefers_offspring() {
        let config = EvoConfig {
            maxiter: 30,
            ..EvoConfig::default()
        };
        let cgp = CgpConfig::new(2, 5, 2).unwrap();
        let trace =
            evolve_one_plus_lambda(&config, &|_: &CgpGenome| 1.0, &cgp, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert_eq!(trace.generations.len(), 31);
        for w in trace.generations.windows(2) {
            assert_eq!(w[0].best.hamming(&w[1].best), 1);
        }
    }

    #[test]
    fn one_plus_lambda_improves_on_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let rows: Vec<[f64; 2]> = (0..20)
            .map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let target: Vec<f64> = x.rows().map(|r| r[0] * r[1]).collect();
        let columns = x.columns();
        let fitness = |g: &CgpGenome| mse(&g.eval_columns(&columns).unwrap(), &target);
        let config = EvoConfig {
            maxiter: 200,
            ..EvoConfig::default()
        };
        let cgp = CgpConfig::new(1, 10, 2).unwrap();
        let trace = evolve_one_plus_lambda(&config, &fitness, &cgp, &mut rng).unwrap();
        let losses = trace.best_losses();
        assert!(losses.windows(2).all(|w| w[1] <= w[0]));
        assert!(losses.last().unwrap() <= &losses[0]);
    }

    #[test]
    fn engines_are_deterministic() {
        let config = EvoConfig {
            n_pop: 20,
            n_gens: 5,
            maxiter: 20,
            ..EvoConfig::default()
        };
        let fit_tree = |t: &ExprTree| (t.len() as f64 - 9.0).abs();
        let a = evolve_tree_population(
            &config,
            &TreeInitConfig::default(),
            &fit_tree,
            3,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let b = evolve_tree_population(
            &config,
            &TreeInitConfig::default(),
            &fit_tree,
            3,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(a, b);
        let cgp = CgpConfig::new(2, 4, 3).unwrap();
        let fit_cgp = |g: &CgpGenome| g.active_nodes().len() as f64;
        let a = evolve_one_plus_lambda(&config, &fit_cgp, &cgp, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let b = evolve_one_plus_lambda(&config, &fit_cgp, &cgp, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_lines().lines().count(), 21);
    }

    #[test]
    fn config_validation() {
        assert!(EvoConfig {
            n_pop: 1,
            ..EvoConfig::default()
        }
        .validate_tree()
        .is_err());
        assert!(EvoConfig {
            tournament_size: 101,
            ..EvoConfig::default()
        }
        .validate_tree()
        .is_err());
        assert!(EvoConfig {
            p_crossover: 0.9,
            p_mutation: 0.2,
            ..EvoConfig::default()
        }
        .validate_tree()
        .is_err());
        assert!(EvoConfig {
            lambda: 0,
            ..EvoConfig::default()
        }
        .validate_one_plus_lambda()
        .is_err());
        assert!(EvoConfig::default().validate_tree().is_ok());
    }
}
