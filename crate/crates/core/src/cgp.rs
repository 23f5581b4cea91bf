//! Cartesian GP: a fixed grid of two-input function nodes addressed by
//! integer genes.
//!
//! Addresses `0..n_features` name input features; address `n_features + k`
//! names grid node `k`, where nodes are numbered column by column
//! (`k = column * n_rows + row`). The genome is a flat gene list:
//! `[function, input0, input1]` for each node in address order, followed by
//! a single output gene.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::expr::FuncSymbol;
use crate::matrix::Matrix;

pub const GENES_PER_NODE: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CgpConfig {
    pub n_rows: usize,
    pub n_columns: usize,
    pub levels_back: usize,
    pub n_features: usize,
    pub function_set: Vec<FuncSymbol>,
}

impl CgpConfig {
    /// Full-connectivity grid (`levels_back = n_columns`) over every function.
    pub fn new(n_rows: usize, n_columns: usize, n_features: usize) -> Result<Self> {
        let config = Self {
            n_rows,
            n_columns,
            levels_back: n_columns,
            n_features,
            function_set: FuncSymbol::ALL.to_vec(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 || self.n_columns == 0 || self.n_features == 0 {
            return Err(Error::arg(format!(
                "grid needs n_rows, n_columns, n_features >= 1, got {}x{} over {} features",
                self.n_rows, self.n_columns, self.n_features
            )));
        }
        if self.levels_back == 0 || self.levels_back > self.n_columns {
            return Err(Error::arg(format!(
                "levels_back must lie in [1, {}], got {}",
                self.n_columns, self.levels_back
            )));
        }
        if self.function_set.is_empty() {
            return Err(Error::arg("empty function set"));
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.n_rows * self.n_columns
    }

    pub fn n_genes(&self) -> usize {
        GENES_PER_NODE * self.n_nodes() + 1
    }

    fn output_gene(&self) -> usize {
        GENES_PER_NODE * self.n_nodes()
    }

    /// First node index an input gene of `column` may address.
    fn first_reachable_node(&self, column: usize) -> usize {
        column.saturating_sub(self.levels_back) * self.n_rows
    }

    /// Number of values gene `g` may take.
    pub fn gene_choices(&self, g: usize) -> usize {
        if g == self.output_gene() {
            return self.n_features + self.n_nodes();
        }
        let node = g / GENES_PER_NODE;
        if g.is_multiple_of(GENES_PER_NODE) {
            return self.function_set.len();
        }
        let column = node / self.n_rows;
        self.n_features + column * self.n_rows - self.first_reachable_node(column)
    }

    /// The `r`-th admissible value of gene `g`, `r < gene_choices(g)`.
    fn gene_value(&self, g: usize, r: usize) -> usize {
        if g == self.output_gene() || g.is_multiple_of(GENES_PER_NODE) || r < self.n_features {
            return r;
        }
        let column = (g / GENES_PER_NODE) / self.n_rows;
        self.n_features + self.first_reachable_node(column) + (r - self.n_features)
    }

    fn check_gene(&self, g: usize, value: usize) -> Result<()> {
        let ok = if g == self.output_gene() || g.is_multiple_of(GENES_PER_NODE) {
            value < self.gene_choices(g)
        } else {
            let column = (g / GENES_PER_NODE) / self.n_rows;
            value < self.n_features
                || (value >= self.n_features + self.first_reachable_node(column)
                    && value < self.n_features + column * self.n_rows)
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Address {
                address: value,
                limit: self.gene_choices(g),
            })
        }
    }

    fn draw_gene<R: Rng + ?Sized>(&self, g: usize, rng: &mut R) -> usize {
        self.gene_value(g, rng.gen_range(0..self.gene_choices(g)))
    }
}

impl fmt::Display for CgpConfig {
    /// `n_rows n_columns levels_back n_features f1,f2,...`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.function_set.iter().map(|s| s.name()).collect();
        write!(
            f,
            "{} {} {} {} {}",
            self.n_rows,
            self.n_columns,
            self.levels_back,
            self.n_features,
            names.join(",")
        )
    }
}

impl std::str::FromStr for CgpConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let fields: Vec<&str> = s.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Parse(format!("cgp header needs 5 fields, got '{s}'")));
        }
        let int = |i: usize| {
            fields[i]
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("cgp header field {i}: {e}")))
        };
        let function_set = fields[4]
            .split(',')
            .map(|n| FuncSymbol::from_name(n).ok_or_else(|| Error::Parse(format!("unknown function '{n}'"))))
            .collect::<Result<Vec<_>>>()?;
        let config = Self {
            n_rows: int(0)?,
            n_columns: int(1)?,
            levels_back: int(2)?,
            n_features: int(3)?,
            function_set,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CgpGenome {
    config: CgpConfig,
    genes: Vec<usize>,
}

impl CgpGenome {
    /// Validates every gene against the grid's connectivity rules.
    pub fn from_genes(config: CgpConfig, genes: Vec<usize>) -> Result<Self> {
        config.validate()?;
        if genes.len() != config.n_genes() {
            return Err(Error::Dimension {
                expected: config.n_genes(),
                got: genes.len(),
            });
        }
        for (g, &v) in genes.iter().enumerate() {
            config.check_gene(g, v)?;
        }
        Ok(Self { config, genes })
    }

    pub fn config(&self) -> &CgpConfig {
        &self.config
    }

    pub fn genes(&self) -> &[usize] {
        &self.genes
    }

    pub fn output(&self) -> usize {
        self.genes[self.config.output_gene()]
    }

    fn function(&self, node: usize) -> FuncSymbol {
        self.config.function_set[self.genes[GENES_PER_NODE * node]]
    }

    fn inputs(&self, node: usize) -> [usize; 2] {
        let base = GENES_PER_NODE * node;
        [self.genes[base + 1], self.genes[base + 2]]
    }

    /// Node indices reachable from the output gene, ascending. Inputs always
    /// point to earlier columns, so ascending order is evaluable.
    /// A unary node's second input is not followed.
    pub fn active_nodes(&self) -> Vec<usize> {
        let n_features = self.config.n_features;
        let mut active = vec![false; self.config.n_nodes()];
        let mut pending = Vec::new();
        if self.output() >= n_features {
            pending.push(self.output() - n_features);
        }
        while let Some(node) = pending.pop() {
            if active[node] {
                continue;
            }
            active[node] = true;
            let arity = self.function(node).arity();
            for &addr in &self.inputs(node)[..arity] {
                if addr >= n_features {
                    pending.push(addr - n_features);
                }
            }
        }
        active.iter().enumerate().filter_map(|(i, &a)| a.then_some(i)).collect()
    }

    pub fn eval(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.config.n_features {
            return Err(Error::Dimension {
                expected: self.config.n_features,
                got: x.n_cols(),
            });
        }
        Ok(self.eval_columns_unchecked(&x.columns(), x.n_rows()))
    }

    pub fn eval_columns(&self, columns: &[Vec<f64>]) -> Result<Vec<f64>> {
        if columns.len() != self.config.n_features {
            return Err(Error::Dimension {
                expected: self.config.n_features,
                got: columns.len(),
            });
        }
        let n = columns.first().map_or(0, Vec::len);
        Ok(self.eval_columns_unchecked(columns, n))
    }

    fn eval_columns_unchecked(&self, columns: &[Vec<f64>], n: usize) -> Vec<f64> {
        let n_features = self.config.n_features;
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); self.config.n_nodes()];
        for node in self.active_nodes() {
            let f = self.function(node);
            let [a, b] = self.inputs(node);
            let out = {
                let fetch = |addr: usize| -> &[f64] {
                    if addr < n_features {
                        &columns[addr]
                    } else {
                        &values[addr - n_features]
                    }
                };
                let a = fetch(a);
                if f.arity() == 1 {
                    a.iter().map(|&v| f.apply(v, 0.0)).collect()
                } else {
                    let b = fetch(b);
                    a.iter().zip(b).map(|(&u, &v)| f.apply(u, v)).collect()
                }
            };
            values[node] = out;
        }
        let out = self.output();
        if out < n_features {
            columns[out][..n].to_vec()
        } else {
            std::mem::take(&mut values[out - n_features])
        }
    }

    /// Space-separated gene list.
    pub fn genes_string(&self) -> String {
        let parts: Vec<String> = self.genes.iter().map(usize::to_string).collect();
        parts.join(" ")
    }

    pub fn parse_genes(config: CgpConfig, s: &str) -> Result<Self> {
        let genes = s
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("gene '{t}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_genes(config, genes)
    }

    /// Number of genes that differ from `other`.
    pub fn hamming(&self, other: &CgpGenome) -> usize {
        self.genes.iter().zip(&other.genes).filter(|(a, b)| a != b).count()
    }
}

/// Draws every gene uniformly from its admissible range.
pub fn random_genome<R: Rng + ?Sized>(config: &CgpConfig, rng: &mut R) -> CgpGenome {
    let genes = (0..config.n_genes()).map(|g| config.draw_gene(g, rng)).collect();
    CgpGenome {
        config: config.clone(),
        genes,
    }
}

/// Copy of `genome` with exactly one gene changed.
///
/// The gene is chosen uniformly among those with more than one admissible
/// value (the output gene always qualifies) and re-drawn until it differs.
pub fn point_mutate<R: Rng + ?Sized>(genome: &CgpGenome, rng: &mut R) -> CgpGenome {
    let config = &genome.config;
    let mutable: Vec<usize> = (0..config.n_genes()).filter(|&g| config.gene_choices(g) > 1).collect();
    let g = mutable[rng.gen_range(0..mutable.len())];
    let mut child = genome.clone();
    loop {
        let v = config.draw_gene(g, rng);
        if v != genome.genes[g] {
            child.genes[g] = v;
            return child;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::FuncSymbol as F;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn idx(f: F) -> usize {
        FuncSymbol::ALL.iter().position(|&s| s == f).unwrap()
    }

    /// node0 = add(x0, x1), node1 = mul(node0, x0), output = node1
    fn two_node_genome() -> CgpGenome {
        let config = CgpConfig::new(1, 2, 2).unwrap();
        CgpGenome::from_genes(config, vec![idx(F::Add), 0, 1, idx(F::Mul), 2, 0, 3]).unwrap()
    }

    /// Naive recursion from the output gene.
    fn eval_recursive(genome: &CgpGenome, row: &[f64], addr: usize) -> f64 {
        let n_features = genome.config().n_features;
        if addr < n_features {
            return row[addr];
        }
        let node = addr - n_features;
        let f = genome.function(node);
        let [a, b] = genome.inputs(node);
        let a = eval_recursive(genome, row, a);
        let b = if f.arity() == 2 {
            eval_recursive(genome, row, b)
        } else {
            0.0
        };
        f.apply(a, b)
    }

    fn valid(genome: &CgpGenome) -> bool {
        CgpGenome::from_genes(genome.config.clone(), genome.genes.clone()).is_ok()
    }

    #[test]
    fn single_cell_inputs_are_features() {
        let config = CgpConfig::new(1, 1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let g = random_genome(&config, &mut rng);
            assert!(g.inputs(0).iter().all(|&a| a < 3));
        }
    }

    #[test]
    fn random_genome_is_seeded_and_valid() {
        let config = CgpConfig {
            levels_back: 2,
            ..CgpConfig::new(3, 6, 4).unwrap()
        };
        let a = random_genome(&config, &mut ChaCha8Rng::seed_from_u64(21));
        let b = random_genome(&config, &mut ChaCha8Rng::seed_from_u64(21));
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..1000 {
            assert!(valid(&random_genome(&config, &mut rng)));
        }
    }

    #[test]
    fn decode_examples() {
        let g = two_node_genome();
        assert_eq!(g.active_nodes(), vec![0, 1]);

        let mut genes = g.genes().to_vec();
        *genes.last_mut().unwrap() = 1;
        let direct = CgpGenome::from_genes(g.config().clone(), genes).unwrap();
        assert!(direct.active_nodes().is_empty());
    }

    #[test]
    fn eval_examples() {
        let g = two_node_genome();
        let x = Matrix::from_rows(&[[2.0, 3.0]]).unwrap();
        assert_eq!(g.eval(&x).unwrap(), vec![10.0]);

        let config = CgpConfig::new(1, 1, 2).unwrap();
        let feature = CgpGenome::from_genes(config.clone(), vec![0, 0, 0, 0]).unwrap();
        let x = Matrix::from_rows(&[[4.0, 1.0], [-2.0, 9.0]]).unwrap();
        assert_eq!(feature.eval(&x).unwrap(), vec![4.0, -2.0]);

        let div = CgpGenome::from_genes(config, vec![idx(F::Div), 0, 1, 2]).unwrap();
        let x = Matrix::from_rows(&[[5.0, 0.0]]).unwrap();
        assert_eq!(div.eval(&x).unwrap(), vec![1.0]);
    }

    #[test]
    fn eval_rejects_wrong_width() {
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(two_node_genome().eval(&x), Err(Error::Dimension { .. })));
    }

    #[test]
    fn from_genes_rejects_forward_references() {
        let config = CgpConfig::new(1, 2, 2).unwrap();
        // node0 reading node1
        let err = CgpGenome::from_genes(config.clone(), vec![0, 3, 0, 0, 0, 0, 3]).unwrap_err();
        assert!(matches!(err, Error::Address { address: 3, .. }));
        assert!(CgpGenome::from_genes(config.clone(), vec![0, 0, 0, 0, 0, 0, 4]).is_err());
        assert!(CgpGenome::from_genes(config, vec![10, 0, 0, 0, 0, 0, 3]).is_err());
    }

    #[test]
    fn levels_back_limits_connections() {
        let config = CgpConfig {
            levels_back: 1,
            ..CgpConfig::new(2, 5, 1).unwrap()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let g = random_genome(&config, &mut rng);
            for node in 0..config.n_nodes() {
                let column = node / config.n_rows;
                for a in g.inputs(node) {
                    if a >= 1 {
                        let src_col = (a - 1) / config.n_rows;
                        assert_eq!(src_col + 1, column);
                    }
                }
            }
        }
    }

    #[test]
    fn decode_matches_recursive_oracle() {
        let config = CgpConfig::new(3, 8, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Matrix::from_rows(&[[0.5, -2.0, 3.0], [1.5, 0.0, -0.25]]).unwrap();
        for _ in 0..200 {
            let g = random_genome(&config, &mut rng);
            let fast = g.eval(&x).unwrap();
            for (i, row) in x.rows().enumerate() {
                assert_eq!(fast[i].to_bits(), eval_recursive(&g, row, g.output()).to_bits());
            }
            assert!(g.active_nodes().len() <= config.n_nodes());
        }
    }

    #[test]
    fn mutation_changes_one_gene() {
        let config = CgpConfig::new(2, 5, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let parent = random_genome(&config, &mut rng);
            let child = point_mutate(&parent, &mut rng);
            assert_eq!(parent.hamming(&child), 1);
            assert!(valid(&child));
        }
        let parent = random_genome(&config, &mut rng);
        let a = point_mutate(&parent, &mut ChaCha8Rng::seed_from_u64(1));
        let b = point_mutate(&parent, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
    }

    #[test]
    fn inactive_mutations_are_neutral() {
        let config = CgpConfig::new(2, 6, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = Matrix::from_rows(&[[0.3, -1.2], [2.0, 5.0], [-4.0, 0.1]]).unwrap();
        let mut checked = 0;
        for _ in 0..300 {
            let parent = random_genome(&config, &mut rng);
            let child = point_mutate(&parent, &mut rng);
            let changed = (0..config.n_genes())
                .find(|&g| parent.genes[g] != child.genes[g])
                .unwrap();
            let active = parent.active_nodes();
            if changed != config.output_gene() && !active.contains(&(changed / GENES_PER_NODE)) {
                let a = parent.eval(&x).unwrap();
                let b = child.eval(&x).unwrap();
                assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
                checked += 1;
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn config_and_genes_round_trip() {
        let config = CgpConfig {
            levels_back: 3,
            function_set: vec![F::Add, F::Neg, F::Max],
            ..CgpConfig::new(2, 4, 3).unwrap()
        };
        let g = random_genome(&config, &mut ChaCha8Rng::seed_from_u64(0));
        let parsed_config: CgpConfig = config.to_string().parse().unwrap();
        assert_eq!(parsed_config, config);
        let parsed = CgpGenome::parse_genes(parsed_config, &g.genes_string()).unwrap();
        assert_eq!(parsed, g);
    }
}
