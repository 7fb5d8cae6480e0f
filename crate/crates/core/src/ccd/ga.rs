use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::time::Instant;

use super::{evaluate_design, CcdError, DesignScenario, ObjectiveReport, ObjectiveWeights, Result};
use crate::hev::{DesignPoint, HevModel, Phi, DT_CATALOG, EPS_CATALOG, THETA_MAX, THETA_MIN, WEIGHT_CATALOG};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// θ free, φ frozen.
    #[serde(alias = "plant")]
    PlantOnly,
    /// θ frozen at a plant optimum, φ free.
    Sequential,
    /// θ and φ free.
    Simultaneous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gene {
    Continuous { lo: f64, hi: f64 },
    /// Stored as an index into `values`.
    Categorical { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    pub mode: Mode,
    /// Defaults to 10 × the number of free variables.
    pub population: Option<usize>,
    pub generations: usize,
    pub seed: u64,
    pub tournament: usize,
    pub crossover_rate: f64,
    /// BLX-α extension of the parents' interval.
    pub blend_alpha: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    /// Mutation standard deviation as a fraction of the gene range.
    pub mutation_sigma: f64,
    pub elite: usize,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    /// Controller parameters used when φ is not a design variable.
    pub fixed_phi: Phi,
    /// Plant optimum consumed by the sequential mode.
    pub fixed_theta: Option<[f64; 6]>,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            mode: Mode::PlantOnly,
            population: None,
            generations: 5,
            seed: 0,
            tournament: 2,
            crossover_rate: 0.8,
            blend_alpha: 0.5,
            mutation_rate: 0.1,
            mutation_sigma: 0.05,
            elite: 1,
            jobs: None,
            fixed_phi: Phi::default(),
            fixed_theta: None,
        }
    }
}

fn theta_genes() -> Vec<Gene> {
    (0..6).map(|i| Gene::Continuous { lo: THETA_MIN[i], hi: THETA_MAX[i] }).collect()
}

fn phi_genes() -> Vec<Gene> {
    [&DT_CATALOG[..], &EPS_CATALOG[..], &WEIGHT_CATALOG[..]]
        .iter()
        .map(|c| Gene::Categorical { values: c.to_vec() })
        .collect()
}

impl GaConfig {
    pub fn genes(&self) -> Vec<Gene> {
        match self.mode {
            Mode::PlantOnly => theta_genes(),
            Mode::Sequential => phi_genes(),
            Mode::Simultaneous => theta_genes().into_iter().chain(phi_genes()).collect(),
        }
    }

    pub fn population_size(&self) -> usize {
        self.population.unwrap_or(10 * self.genes().len())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CcdError::Config(m.into()));
        if self.population_size() == 0 {
            return bad("population must be positive");
        }
        if self.tournament == 0 {
            return bad("tournament size must be positive");
        }
        if self.elite > self.population_size() {
            return bad("more elites than individuals");
        }
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if !unit(self.crossover_rate) || !unit(self.mutation_rate) {
            return bad("rates must lie in [0, 1]");
        }
        if !(self.mutation_sigma >= 0.0 && self.blend_alpha >= 0.0) {
            return bad("mutation sigma and blend alpha must be non-negative");
        }
        if self.mode == Mode::Sequential && self.fixed_theta.is_none() {
            return bad("sequential mode needs a plant optimum");
        }
        Ok(())
    }

    /// Design point encoded by a gene vector.
    pub fn decode(&self, v: &[f64]) -> DesignPoint {
        let cat = |c: &[f64], k: f64| c[k as usize];
        let phi_at = |o: usize| Phi { dt: cat(&DT_CATALOG, v[o]), eps: cat(&EPS_CATALOG, v[o + 1]), w_vel: cat(&WEIGHT_CATALOG, v[o + 2]) };
        let theta = |v: &[f64]| core::array::from_fn(|i| v[i]);
        match self.mode {
            Mode::PlantOnly => DesignPoint { theta: theta(v), z: vec![], phi: self.fixed_phi },
            Mode::Sequential => DesignPoint { theta: self.fixed_theta.expect("validated"), z: vec![], phi: phi_at(0) },
            Mode::Simultaneous => DesignPoint { theta: theta(v), z: vec![], phi: phi_at(6) },
        }
    }
}

/// One distinct evaluated individual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation<T> {
    /// Generation in which the individual was first seen.
    pub generation: usize,
    pub genes: Vec<f64>,
    pub fitness: f64,
    pub wall_seconds: f64,
    pub record: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaHistory<T> {
    /// Best fitness after each generation, the initial population first.
    pub best_per_generation: Vec<f64>,
    pub evaluations: Vec<Evaluation<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaResult<T> {
    /// Index into `history.evaluations` of the overall best.
    pub best: usize,
    /// Index of the best member of the initial population.
    pub initial_best: usize,
    pub history: GaHistory<T>,
}

impl<T> GaResult<T> {
    pub fn best(&self) -> &Evaluation<T> {
        &self.history.evaluations[self.best]
    }

    pub fn initial_best(&self) -> &Evaluation<T> {
        &self.history.evaluations[self.initial_best]
    }
}

fn key(v: &[f64]) -> Vec<u64> {
    v.iter().map(|a| a.to_bits()).collect()
}

struct Breeder<'a> {
    genes: &'a [Gene],
    cfg: &'a GaConfig,
    rng: ChaCha8Rng,
}

impl Breeder<'_> {
    fn random(&mut self) -> Vec<f64> {
        self.genes
            .iter()
            .map(|g| match g {
                Gene::Continuous { lo, hi } => self.rng.random_range(*lo..=*hi),
                Gene::Categorical { values } => self.rng.random_range(0..values.len()) as f64,
            })
            .collect()
    }

    fn tournament(&mut self, fit: &[f64]) -> usize {
        let mut best = self.rng.random_range(0..fit.len());
        for _ in 1..self.cfg.tournament {
            let k = self.rng.random_range(0..fit.len());
            if fit[k] < fit[best] {
                best = k;
            }
        }
        best
    }

    fn crossover(&mut self, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut c, mut d) = (a.to_vec(), b.to_vec());
        for (i, g) in self.genes.iter().enumerate() {
            match g {
                Gene::Continuous { lo, hi } => {
                    let (p, q) = (a[i].min(b[i]), a[i].max(b[i]));
                    let ext = self.cfg.blend_alpha * (q - p);
                    if ext > 0.0 {
                        let (l, h) = ((p - ext).max(*lo), (q + ext).min(*hi));
                        c[i] = self.rng.random_range(l..=h);
                        d[i] = self.rng.random_range(l..=h);
                    }
                }
                Gene::Categorical { .. } => {
                    if self.rng.random_bool(0.5) {
                        c[i] = b[i];
                        d[i] = a[i];
                    }
                }
            }
        }
        (c, d)
    }

    fn mutate(&mut self, v: &mut [f64]) {
        for (i, g) in self.genes.iter().enumerate() {
            if !self.rng.random_bool(self.cfg.mutation_rate) {
                continue;
            }
            match g {
                Gene::Continuous { lo, hi } => {
                    let sd = self.cfg.mutation_sigma * (hi - lo);
                    if sd > 0.0 {
                        let n = Normal::new(0.0, sd).expect("positive deviation");
                        v[i] = (v[i] + n.sample(&mut self.rng)).clamp(*lo, *hi);
                    }
                }
                Gene::Categorical { values } => v[i] = self.rng.random_range(0..values.len()) as f64,
            }
        }
    }
}

/// Real-coded GA over `genes`, minimizing the first element returned by
/// `eval`. Identical gene vectors are evaluated once; non-finite fitness
/// ranks last.
pub fn ga_search<T, F>(genes: &[Gene], cfg: &GaConfig, eval: F) -> Result<GaResult<T>>
where
    T: Send,
    F: Fn(&[f64]) -> (f64, T) + Sync,
{
    cfg.validate()?;
    if genes.is_empty() {
        return Err(CcdError::Config("no free design variables".into()));
    }
    let n = cfg.population.unwrap_or(10 * genes.len());
    let mut br = Breeder { genes, cfg, rng: ChaCha8Rng::seed_from_u64(cfg.seed) };
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut evals: Vec<Evaluation<T>> = Vec::new();
    let mut best_per_generation = Vec::new();

    let pool = match cfg.jobs {
        Some(j) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| CcdError::Config(format!("thread pool: {e}")))?,
        ),
        None => None,
    };
    let run = |pop: &[Vec<f64>], gen: usize, seen: &mut HashMap<Vec<u64>, usize>, evals: &mut Vec<Evaluation<T>>| {
        let mut fresh: Vec<Vec<f64>> = Vec::new();
        for v in pop {
            let k = key(v);
            if !seen.contains_key(&k) && !fresh.iter().any(|f| key(f) == k) {
                fresh.push(v.clone());
            }
        }
        let work = || -> Vec<(f64, f64, T)> {
            fresh
                .par_iter()
                .map(|v| {
                    let t0 = Instant::now();
                    let (f, r) = eval(v);
                    (if f.is_nan() { f64::INFINITY } else { f }, t0.elapsed().as_secs_f64(), r)
                })
                .collect()
        };
        let done = match &pool {
            Some(p) => p.install(work),
            None => work(),
        };
        for (v, (fitness, wall_seconds, record)) in fresh.into_iter().zip(done) {
            seen.insert(key(&v), evals.len());
            evals.push(Evaluation { generation: gen, genes: v, fitness, wall_seconds, record });
        }
        pop.iter().map(|v| seen[&key(v)]).collect::<Vec<usize>>()
    };

    let mut pop: Vec<Vec<f64>> = (0..n).map(|_| br.random()).collect();
    let mut idx = run(&pop, 0, &mut seen, &mut evals);
    let argmin = |idx: &[usize], evals: &[Evaluation<T>]| {
        let mut b = idx[0];
        for &i in idx {
            if evals[i].fitness < evals[b].fitness {
                b = i;
            }
        }
        b
    };
    let initial_best = argmin(&idx, &evals);
    let mut best = initial_best;
    best_per_generation.push(evals[best].fitness);

    for gen in 1..=cfg.generations {
        let fit: Vec<f64> = idx.iter().map(|&i| evals[i].fitness).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]));
        let mut next: Vec<Vec<f64>> = order.iter().take(cfg.elite).map(|&k| pop[k].clone()).collect();
        while next.len() < n {
            let a = pop[br.tournament(&fit)].clone();
            let b = pop[br.tournament(&fit)].clone();
            let (mut c, mut d) = if br.rng.random_bool(cfg.crossover_rate) { br.crossover(&a, &b) } else { (a, b) };
            br.mutate(&mut c);
            br.mutate(&mut d);
            next.push(c);
            if next.len() < n {
                next.push(d);
            }
        }
        pop = next;
        idx = run(&pop, gen, &mut seen, &mut evals);
        let b = argmin(&idx, &evals);
        if evals[b].fitness < evals[best].fitness {
            best = b;
        }
        best_per_generation.push(evals[best].fitness);
    }
    Ok(GaResult { best, initial_best, history: GaHistory { best_per_generation, evaluations: evals } })
}

/// GA study over the vehicle: fitness is J_tot(m_opt) of the closed-loop
/// evaluation, and every record is the full objective report.
pub fn ga_optimize(
    model: &HevModel,
    cfg: &GaConfig,
    sc: &DesignScenario,
    w: &ObjectiveWeights,
) -> Result<GaResult<ObjectiveReport>> {
    cfg.validate()?;
    ga_search(&cfg.genes(), cfg, |v| {
        let r = evaluate_design(model, &cfg.decode(v), sc, w);
        (r.total(w, w.m_opt), r)
    })
}
