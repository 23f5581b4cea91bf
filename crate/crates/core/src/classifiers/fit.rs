use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ClaSyCoModel, ClassifierKind, ClassifierSpec, Hyperparams, Individuals, Model, OvRModel};
use crate::cgp::{CgpConfig, CgpGenome};
use crate::data::one_hot;
use crate::error::{Error, Result};
use crate::evolution::{best_index, evolve_one_plus_lambda, evolve_tree_population, EvoConfig, TreePopulation};
use crate::expr::{ExprTree, TreeInitConfig};
use crate::matrix::Matrix;
use crate::metrics::{binary_cross_entropy, onehot_class, sigmoid, Epsilon};
use crate::par;

/// Settings shared by every classifier that the hyperparameter search does
/// not tune.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitOptions {
    /// Operator rates, tournament size, λ and the parallel switch.
    /// Population size and generation counts come from the spec.
    pub evo: EvoConfig,
    pub tree: TreeInitConfig,
    /// CGP connectivity; `None` means every earlier column.
    pub levels_back: Option<usize>,
    pub eps: Epsilon,
}

impl FitOptions {
    fn tree_evo(&self, n_pop: usize, n_gens: usize) -> EvoConfig {
        EvoConfig {
            n_pop,
            n_gens,
            tournament_size: self.evo.tournament_size.min(n_pop),
            ..self.evo.clone()
        }
    }
}

struct Prepared {
    columns: Vec<Vec<f64>>,
    onehot: Matrix,
    n_classes: usize,
}

fn prepare(x: &Matrix, y: &[usize], class_labels: &[String]) -> Result<Prepared> {
    if x.n_rows() != y.len() {
        return Err(Error::Dimension {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    if x.n_cols() == 0 || x.n_rows() == 0 {
        return Err(Error::arg("training data is empty"));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("training data contains non-finite values"));
    }
    let n_classes = class_labels.len();
    let onehot = one_hot(y, n_classes)?;
    let mut present = vec![false; n_classes];
    for &c in y {
        present[c] = true;
    }
    let distinct = present.iter().filter(|&&p| p).count();
    if distinct < 2 {
        return Err(Error::arg(format!(
            "training labels must cover at least 2 classes, found {distinct}"
        )));
    }
    Ok(Prepared {
        columns: x.columns(),
        onehot,
        n_classes,
    })
}

/// One independent seed per class population, drawn up front so that class
/// populations never share a random stream.
fn class_seeds<R: Rng + ?Sized>(n_classes: usize, rng: &mut R) -> Vec<u64> {
    (0..n_classes).map(|_| rng.gen()).collect()
}

fn ovr_loss(outputs: &[f64], target: &[f64], eps: Epsilon) -> f64 {
    let p: Vec<f64> = outputs.iter().map(|&z| sigmoid(z)).collect();
    binary_cross_entropy(target, &p, eps).unwrap_or(f64::INFINITY)
}

/// One tree population per class, each fitted by log loss to its
/// one-vs-rest target column.
pub fn fit_ovr_gp<R: Rng + ?Sized>(
    x: &Matrix,
    y: &[usize],
    class_labels: &[String],
    n_pop: usize,
    n_gens: usize,
    options: &FitOptions,
    rng: &mut R,
) -> Result<OvRModel> {
    let prep = prepare(x, y, class_labels)?;
    let evo = options.tree_evo(n_pop, n_gens);
    evo.validate_tree()?;
    options.tree.validate()?;
    let seeds = class_seeds(prep.n_classes, rng);
    let champions = par::map_range(prep.n_classes, options.evo.parallel, |c| {
        let target = prep.onehot.column(c);
        let fitness = |t: &ExprTree| match t.eval_columns(&prep.columns) {
            Ok(out) => ovr_loss(&out, &target, options.eps),
            Err(_) => f64::INFINITY,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seeds[c]);
        evolve_tree_population(&evo, &options.tree, &fitness, x.n_cols(), &mut rng).map(|t| t.into_champion())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(OvRModel {
        kind: ClassifierKind::GPLearnClf,
        per_class: Individuals::Trees(champions),
        class_labels: class_labels.to_vec(),
        n_features: x.n_cols(),
    })
}

/// One (1+λ) Cartesian GP run per class, fitted by log loss.
#[allow(clippy::too_many_arguments)]
pub fn fit_ovr_cgp<R: Rng + ?Sized>(
    x: &Matrix,
    y: &[usize],
    class_labels: &[String],
    n_rows: usize,
    n_columns: usize,
    maxiter: usize,
    options: &FitOptions,
    rng: &mut R,
) -> Result<OvRModel> {
    let prep = prepare(x, y, class_labels)?;
    let mut cgp = CgpConfig::new(n_rows, n_columns, x.n_cols())?;
    if let Some(lb) = options.levels_back {
        cgp.levels_back = lb.min(n_columns);
    }
    cgp.function_set = options.tree.function_set.clone();
    cgp.validate()?;
    let evo = EvoConfig {
        maxiter,
        ..options.evo.clone()
    };
    evo.validate_one_plus_lambda()?;
    let seeds = class_seeds(prep.n_classes, rng);
    let champions = par::map_range(prep.n_classes, options.evo.parallel, |c| {
        let target = prep.onehot.column(c);
        let fitness = |g: &CgpGenome| match g.eval_columns(&prep.columns) {
            Ok(out) => ovr_loss(&out, &target, options.eps),
            Err(_) => f64::INFINITY,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seeds[c]);
        evolve_one_plus_lambda(&evo, &fitness, &cgp, &mut rng).map(|t| t.into_champion())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(OvRModel {
        kind: ClassifierKind::CartesianClf,
        per_class: Individuals::Genomes(champions),
        class_labels: class_labels.to_vec(),
        n_features: x.n_cols(),
    })
}

/// Mean softmax cross-entropy over samples of the team `outputs`
/// (one column per class), column passes throughout.
fn team_loss(outputs: &[&[f64]], labels: &[usize], eps: Epsilon) -> f64 {
    let n = labels.len();
    let mut max = outputs[0].to_vec();
    for col in &outputs[1..] {
        for (m, &v) in max.iter_mut().zip(col.iter()) {
            *m = m.max(v);
        }
    }
    let mut sum = vec![0.0; n];
    for col in outputs {
        for ((s, &v), &m) in sum.iter_mut().zip(col.iter()).zip(&max) {
            *s += (v - m).exp();
        }
    }
    let (lo, hi) = (eps.get(), 1.0 - eps.get());
    let total: f64 = (0..n)
        .map(|i| {
            let p = (outputs[labels[i]][i] - max[i]).exp() / sum[i];
            -p.clamp(lo, hi).ln()
        })
        .sum();
    total / n as f64
}

/// Cooperative fitness of one candidate in population `class`.
///
/// Per sample the candidate's output is placed at position `class` among the
/// representatives' outputs (given in class order, skipping `class`), the
/// C-vector goes through a softmax and the cross-entropy against the one-hot
/// target is taken. Returns the mean over samples.
pub fn clasyco_fitness(
    candidate: &[f64],
    representatives: &[&[f64]],
    onehot: &Matrix,
    class: usize,
    eps: Epsilon,
) -> Result<f64> {
    let n_classes = representatives.len() + 1;
    if onehot.n_cols() != n_classes {
        return Err(Error::Dimension {
            expected: n_classes,
            got: onehot.n_cols(),
        });
    }
    if class >= n_classes {
        return Err(Error::arg(format!("class {class} outside {n_classes} classes")));
    }
    let n = candidate.len();
    if n == 0 {
        return Err(Error::arg("empty candidate outputs"));
    }
    for len in representatives.iter().map(|r| r.len()).chain([onehot.n_rows()]) {
        if len != n {
            return Err(Error::Dimension { expected: n, got: len });
        }
    }
    let labels = onehot.rows().map(onehot_class).collect::<Result<Vec<_>>>()?;
    let team = assemble(candidate, representatives, class);
    Ok(team_loss(&team, &labels, eps))
}

fn assemble<'a>(candidate: &'a [f64], representatives: &[&'a [f64]], class: usize) -> Vec<&'a [f64]> {
    let mut team = Vec::with_capacity(representatives.len() + 1);
    team.extend_from_slice(&representatives[..class]);
    team.push(candidate);
    team.extend_from_slice(&representatives[class..]);
    team
}

/// ClaSyCo fit returning, alongside the model, the team cross-entropy of
/// each generation's champions.
pub fn fit_clasyco_with_trace<R: Rng + ?Sized>(
    x: &Matrix,
    y: &[usize],
    class_labels: &[String],
    n_pop: usize,
    n_gens: usize,
    options: &FitOptions,
    rng: &mut R,
) -> Result<(ClaSyCoModel, Vec<f64>)> {
    let prep = prepare(x, y, class_labels)?;
    let n_classes = prep.n_classes;
    let evo = options.tree_evo(n_pop, n_gens);
    let mut rngs: Vec<ChaCha8Rng> = class_seeds(n_classes, rng)
        .into_iter()
        .map(ChaCha8Rng::seed_from_u64)
        .collect();
    let mut populations = rngs
        .iter_mut()
        .map(|r| TreePopulation::random(&evo, &options.tree, x.n_cols(), r))
        .collect::<Result<Vec<_>>>()?;
    let labels = y;
    let eval = |t: &ExprTree| t.eval_columns(&prep.columns).expect("features checked at init");

    // generation 0 cooperates with each population's first individual
    let mut reps: Vec<Vec<f64>> = populations.iter().map(|p| eval(&p.individuals()[0])).collect();
    let mut team_losses = Vec::with_capacity(n_gens);
    let mut champions: Vec<ExprTree> = Vec::new();
    for gen in 0..n_gens {
        let mut losses = Vec::with_capacity(n_classes);
        let mut next_reps = Vec::with_capacity(n_classes);
        champions.clear();
        for (c, population) in populations.iter().enumerate() {
            let others: Vec<&[f64]> = reps
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != c)
                .map(|(_, r)| r.as_slice())
                .collect();
            let fitness = |t: &ExprTree| {
                let out = eval(t);
                team_loss(&assemble(&out, &others, c), labels, options.eps)
            };
            let l = population.evaluate(&fitness);
            let best = population.individuals()[best_index(&l)].clone();
            next_reps.push(eval(&best));
            champions.push(best);
            losses.push(l);
        }
        let team: Vec<&[f64]> = next_reps.iter().map(Vec::as_slice).collect();
        team_losses.push(team_loss(&team, labels, options.eps));
        if gen + 1 < n_gens {
            for ((population, l), r) in populations.iter_mut().zip(&losses).zip(rngs.iter_mut()) {
                population.breed(l, r);
            }
        }
        reps = next_reps;
    }
    Ok((
        ClaSyCoModel {
            per_class: champions,
            class_labels: class_labels.to_vec(),
            n_features: x.n_cols(),
        },
        team_losses,
    ))
}

/// C tree populations evolved in lockstep with cooperative fitness.
pub fn fit_clasyco<R: Rng + ?Sized>(
    x: &Matrix,
    y: &[usize],
    class_labels: &[String],
    n_pop: usize,
    n_gens: usize,
    options: &FitOptions,
    rng: &mut R,
) -> Result<ClaSyCoModel> {
    fit_clasyco_with_trace(x, y, class_labels, n_pop, n_gens, options, rng).map(|(m, _)| m)
}

/// Fits whichever classifier `spec` names.
pub fn fit<R: Rng + ?Sized>(
    spec: &ClassifierSpec,
    x: &Matrix,
    y: &[usize],
    class_labels: &[String],
    options: &FitOptions,
    rng: &mut R,
) -> Result<Model> {
    spec.validate()?;
    match (spec.kind, spec.hyperparams) {
        (ClassifierKind::GPLearnClf, Hyperparams::Tree { n_pop, n_gens }) => {
            fit_ovr_gp(x, y, class_labels, n_pop, n_gens, options, rng).map(Model::OvR)
        }
        (ClassifierKind::ClaSyCo, Hyperparams::Tree { n_pop, n_gens }) => {
            fit_clasyco(x, y, class_labels, n_pop, n_gens, options, rng).map(Model::ClaSyCo)
        }
        (
            ClassifierKind::CartesianClf,
            Hyperparams::Cartesian {
                n_rows,
                n_columns,
                maxiter,
            },
        ) => fit_ovr_cgp(x, y, class_labels, n_rows, n_columns, maxiter, options, rng).map(Model::OvR),
        _ => unreachable!("validated above"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{balanced_accuracy, categorical_cross_entropy, softmax};
    use approx::assert_abs_diff_eq;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|c| c.to_string()).collect()
    }

    fn threshold_data(seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<[f64; 1]> = (0..100).map(|_| [rng.gen_range(-2.0..2.0)]).collect();
        let y = xs.iter().map(|r| usize::from(r[0] > 0.0)).collect();
        (Matrix::from_rows(&xs).unwrap(), y)
    }

    /// Per-sample loop: softmax then categorical cross-entropy.
    fn naive_fitness(cand: &[f64], reps: &[Vec<f64>], onehot: &Matrix, class: usize) -> f64 {
        let n = cand.len();
        let mut total = 0.0;
        for i in 0..n {
            let mut z = Vec::new();
            let mut r = reps.iter();
            for k in 0..onehot.n_cols() {
                z.push(if k == class { cand[i] } else { r.next().unwrap()[i] });
            }
            let p = softmax(&z).unwrap();
            total += categorical_cross_entropy(onehot.row(i), &p, Epsilon::default()).unwrap();
        }
        total / n as f64
    }

    #[test]
    fn clasyco_fitness_uniform_outputs() {
        for n_classes in 2..6 {
            let onehot = one_hot(&[0, n_classes - 1, 1], n_classes).unwrap();
            let zeros = vec![0.0; 3];
            let reps: Vec<&[f64]> = vec![&zeros; n_classes - 1];
            let l = clasyco_fitness(&zeros, &reps, &onehot, 0, Epsilon::default()).unwrap();
            assert_abs_diff_eq!(l, (n_classes as f64).ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn clasyco_fitness_two_class_example() {
        let onehot = one_hot(&[0], 2).unwrap();
        let l = clasyco_fitness(&[2.0], &[&[0.0]], &onehot, 0, Epsilon::default()).unwrap();
        let e2 = 2f64.exp();
        assert_abs_diff_eq!(l, -(e2 / (e2 + 1.0)).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(l, 0.126928, epsilon = 1e-6);
    }

    #[test]
    fn clasyco_fitness_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let n_classes = rng.gen_range(2..6);
            let n = rng.gen_range(1..30);
            let class = rng.gen_range(0..n_classes);
            let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n_classes)).collect();
            let onehot = one_hot(&y, n_classes).unwrap();
            let cand: Vec<f64> = (0..n).map(|_| rng.gen_range(-20.0..20.0)).collect();
            let reps: Vec<Vec<f64>> = (1..n_classes)
                .map(|_| (0..n).map(|_| rng.gen_range(-20.0..20.0)).collect())
                .collect();
            let rep_refs: Vec<&[f64]> = reps.iter().map(Vec::as_slice).collect();
            let fast = clasyco_fitness(&cand, &rep_refs, &onehot, class, Epsilon::default()).unwrap();
            assert!((fast - naive_fitness(&cand, &reps, &onehot, class)).abs() <= 1e-12);
        }
    }

    #[test]
    fn clasyco_fitness_depends_on_representatives() {
        let onehot = one_hot(&[0, 1], 2).unwrap();
        let cand = [1.0, -1.0];
        let a = clasyco_fitness(&cand, &[&[0.0, 0.0]], &onehot, 0, Epsilon::default()).unwrap();
        let b = clasyco_fitness(&cand, &[&[-3.0, 3.0]], &onehot, 0, Epsilon::default()).unwrap();
        assert!(b < a);
    }

    #[test]
    fn clasyco_fitness_errors() {
        let onehot = one_hot(&[0, 1], 2).unwrap();
        let e = Epsilon::default();
        assert!(clasyco_fitness(&[0.0, 0.0], &[&[0.0]], &onehot, 0, e).is_err());
        assert!(clasyco_fitness(&[0.0, 0.0], &[&[0.0, 0.0]], &onehot, 2, e).is_err());
        assert!(clasyco_fitness(&[0.0, 0.0], &[&[0.0, 0.0], &[0.0, 0.0]], &onehot, 0, e).is_err());
    }

    #[test]
    fn single_class_is_rejected() {
        let x = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let o = FitOptions::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(fit_ovr_gp(&x, &[1, 1], &labels(2), 10, 2, &o, &mut rng).is_err());
        assert!(fit_ovr_cgp(&x, &[0, 0], &labels(2), 1, 5, 5, &o, &mut rng).is_err());
        assert!(fit_clasyco(&x, &[0, 0], &labels(3), 10, 2, &o, &mut rng).is_err());
    }

    #[test]
    fn ovr_gp_learns_threshold() {
        let (x, y) = threshold_data(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let model = fit_ovr_gp(&x, &y, &labels(2), 50, 30, &FitOptions::default(), &mut rng).unwrap();
        let pred = Model::OvR(model).predict(&x).unwrap();
        assert!(balanced_accuracy(&y, &pred).unwrap() >= 0.95);
    }

    #[test]
    fn ovr_classes_do_not_interact() {
        // relabelling samples between classes 1 and 2 leaves class 0's target
        // column and seed untouched, so its champion must not change
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<[f64; 2]> = (0..60)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let y_swapped: Vec<usize> = y.iter().map(|&c| [0, 2, 1][c]).collect();
        let fit = |y: &[usize]| {
            fit_ovr_gp(
                &x,
                y,
                &labels(3),
                20,
                5,
                &FitOptions::default(),
                &mut ChaCha8Rng::seed_from_u64(8),
            )
            .unwrap()
        };
        let (a, b) = (fit(&y), fit(&y_swapped));
        match (a.per_class, b.per_class) {
            (Individuals::Trees(a), Individuals::Trees(b)) => assert_eq!(a[0], b[0]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn fits_are_deterministic() {
        let (x, y) = threshold_data(5);
        let o = FitOptions::default();
        for spec in [
            ClassifierSpec::gplearn(10, 4),
            ClassifierSpec::cartesian(2, 5, 20),
            ClassifierSpec::clasyco(10, 4),
        ] {
            let a = fit(&spec, &x, &y, &labels(2), &o, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
            let b = fit(&spec, &x, &y, &labels(2), &o, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
            assert_eq!(a, b, "{:?}", spec.kind);
            assert_eq!(a.kind(), spec.kind);
        }
    }

    #[test]
    fn parallel_and_sequential_fits_agree() {
        let (x, y) = threshold_data(7);
        let par_opts = FitOptions::default();
        let seq_opts = FitOptions {
            evo: EvoConfig {
                parallel: false,
                ..EvoConfig::default()
            },
            ..FitOptions::default()
        };
        for spec in [
            ClassifierSpec::gplearn(12, 3),
            ClassifierSpec::clasyco(12, 3),
            ClassifierSpec::cartesian(1, 6, 10),
        ] {
            let a = fit(&spec, &x, &y, &labels(2), &par_opts, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let b = fit(&spec, &x, &y, &labels(2), &seq_opts, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn clasyco_team_loss_is_finite() {
        let (x, y) = threshold_data(9);
        let (_, trace) = fit_clasyco_with_trace(
            &x,
            &y,
            &labels(2),
            15,
            6,
            &FitOptions::default(),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert_eq!(trace.len(), 6);
        assert!(trace.iter().all(|l| l.is_finite()));
    }
}
