//! NSGA-II threshold tuning: from-scratch non-dominated sorting, crowding
//! distance, tournament selection, arithmetic crossover, uniform mutation,
//! and the watermark tuning problem (copyright robustness, authentication
//! robustness, embedding distortion).

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::attacks::{apply_attack, optimization_attack_set, AttackSpec};
use crate::embed::{embed_all_with_system, Mode, ThresholdPair};
use crate::error::{Error, Result};
use crate::extract::{block_feature_vectors, extract_bits, extract_tiled_bits, fine_tune, pretrain, MlpConfig};
use crate::image::{luminance, partition, Image};
use crate::marks::MarkSet;
use crate::metrics;
use crate::texture::TextureMap;
use crate::transforms::ShearletSystem;

/// One candidate solution with its objectives and NSGA-II bookkeeping.
#[derive(Debug, Clone)]
pub struct Individual {
    pub x: Vec<f64>,
    pub objectives: Vec<f64>,
    pub rank: usize,
    pub crowding: f64,
}

/// Parameters of the genetic run. Defaults follow the tuning protocol:
/// population 50, 100 generations, arithmetic crossover at 0.7, uniform
/// mutation at 0.2, tournament size 5, robustness cap 0.1.
#[derive(Debug, Clone, Copy)]
pub struct OptimizerConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub tournament: usize,
    pub robustness_cap: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            population: 50,
            generations: 100,
            crossover_rate: 0.7,
            mutation_rate: 0.2,
            tournament: 5,
            robustness_cap: 0.1,
            seed: 0,
        }
    }
}

/// Strict Pareto dominance for minimization.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    let mut strictly_better = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly_better = true;
        }
    }
    strictly_better
}

/// Fronts of indices: front 0 is the non-dominated set, front k+1 is
/// non-dominated once fronts <= k are removed.
pub fn fast_nondominated_sort(objectives: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = objectives.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&objectives[i], &objectives[j]) {
                dominated_by[i].push(j);
                domination_count[j] += 1;
            } else if dominates(&objectives[j], &objectives[i]) {
                dominated_by[j].push(i);
                domination_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    fronts
}

/// Crowding distances of one front: boundary individuals per objective get
/// infinity, interior ones the normalized neighbor gap summed over
/// objectives.
pub fn crowding_distance(objectives: &[Vec<f64>], front: &[usize]) -> Vec<f64> {
    let m = front.len();
    let mut distance = vec![0.0f64; m];
    if m == 0 {
        return distance;
    }
    let dims = objectives[front[0]].len();
    for obj in 0..dims {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            objectives[front[a]][obj]
                .partial_cmp(&objectives[front[b]][obj])
                .unwrap()
                .then(front[a].cmp(&front[b]))
        });
        let lo = objectives[front[order[0]]][obj];
        let hi = objectives[front[order[m - 1]]][obj];
        distance[order[0]] = f64::INFINITY;
        distance[order[m - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue; // duplicate objective values contribute no gap
        }
        for w in 1..m - 1 {
            let gap = objectives[front[order[w + 1]]][obj] - objectives[front[order[w - 1]]][obj];
            distance[order[w]] += gap / range;
        }
    }
    distance
}

/// Per-generation snapshot of front 1 for trace files and plots.
#[derive(Debug, Clone)]
pub struct GenerationRecord {
    pub generation: usize,
    pub front: Vec<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub struct Nsga2Result {
    /// final first front
    pub front: Vec<Individual>,
    pub trace: Vec<GenerationRecord>,
    /// every (x, objectives) pair evaluated during the run
    pub archive: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Runs the generational loop. The objective function must be pure; batches
/// of unevaluated candidates are evaluated in parallel, so results must not
/// depend on evaluation order.
pub fn nsga2_run<F>(bounds: &[(f64, f64)], cfg: &OptimizerConfig, eval: F) -> Nsga2Result
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = bounds.len();
    let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        bounds
            .iter()
            .map(|&(lo, hi)| rng.gen_range(lo..=hi))
            .collect()
    };

    let evaluate_batch = |xs: &[Vec<f64>]| -> Vec<Vec<f64>> {
        xs.par_iter().map(|x| eval(x)).collect()
    };

    let mut population: Vec<Individual> = {
        let xs: Vec<Vec<f64>> = (0..cfg.population).map(|_| sample(&mut rng)).collect();
        let objs = evaluate_batch(&xs);
        xs.into_iter()
            .zip(objs)
            .map(|(x, objectives)| Individual {
                x,
                objectives,
                rank: 0,
                crowding: 0.0,
            })
            .collect()
    };
    let mut archive: Vec<(Vec<f64>, Vec<f64>)> = population
        .iter()
        .map(|ind| (ind.x.clone(), ind.objectives.clone()))
        .collect();

    assign_rank_and_crowding(&mut population);
    let mut trace = Vec::with_capacity(cfg.generations);

    for generation in 0..cfg.generations {
        // offspring by tournament selection, arithmetic crossover, uniform
        // mutation
        let mut offspring_x = Vec::with_capacity(cfg.population);
        while offspring_x.len() < cfg.population {
            let a = tournament(&population, cfg.tournament, &mut rng);
            let b = tournament(&population, cfg.tournament, &mut rng);
            let (mut c1, mut c2) = if rng.gen::<f64>() < cfg.crossover_rate {
                let lambda: f64 = rng.gen();
                let mix = |p: &[f64], q: &[f64]| {
                    p.iter()
                        .zip(q)
                        .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
                        .collect::<Vec<f64>>()
                };
                (mix(&population[a].x, &population[b].x), mix(&population[b].x, &population[a].x))
            } else {
                (population[a].x.clone(), population[b].x.clone())
            };
            for child in [&mut c1, &mut c2] {
                for d in 0..dims {
                    if rng.gen::<f64>() < cfg.mutation_rate {
                        child[d] = rng.gen_range(bounds[d].0..=bounds[d].1);
                    }
                }
            }
            offspring_x.push(c1);
            if offspring_x.len() < cfg.population {
                offspring_x.push(c2);
            }
        }
        let offspring_objs = evaluate_batch(&offspring_x);
        for (x, objectives) in offspring_x.into_iter().zip(offspring_objs) {
            archive.push((x.clone(), objectives.clone()));
            population.push(Individual {
                x,
                objectives,
                rank: 0,
                crowding: 0.0,
            });
        }

        // elitist truncation of the combined 2N pool
        assign_rank_and_crowding(&mut population);
        population.sort_by(|a, b| {
            a.rank
                .cmp(&b.rank)
                .then(b.crowding.partial_cmp(&a.crowding).unwrap())
                .then(a.x.partial_cmp(&b.x).unwrap())
        });
        population.truncate(cfg.population);
        assign_rank_and_crowding(&mut population);

        trace.push(GenerationRecord {
            generation,
            front: population
                .iter()
                .filter(|ind| ind.rank == 0)
                .map(|ind| (ind.x.clone(), ind.objectives.clone()))
                .collect(),
        });
    }

    let front = population
        .iter()
        .filter(|ind| ind.rank == 0)
        .cloned()
        .collect();
    Nsga2Result {
        front,
        trace,
        archive,
    }
}

fn assign_rank_and_crowding(population: &mut [Individual]) {
    let objectives: Vec<Vec<f64>> = population.iter().map(|i| i.objectives.clone()).collect();
    let fronts = fast_nondominated_sort(&objectives);
    for (rank, front) in fronts.iter().enumerate() {
        let dist = crowding_distance(&objectives, front);
        for (&i, &d) in front.iter().zip(&dist) {
            population[i].rank = rank;
            population[i].crowding = d;
        }
    }
}

fn tournament(population: &[Individual], size: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut best = rng.gen_range(0..population.len());
    for _ in 1..size {
        let challenger = rng.gen_range(0..population.len());
        let a = &population[challenger];
        let b = &population[best];
        if a.rank < b.rank || (a.rank == b.rank && a.crowding > b.crowding) {
            best = challenger;
        }
    }
    best
}

/// Picks the operating point from a front: among members whose mean
/// robustness error (f1+f2)/2 stays within the cap, the one with the
/// largest mean (best quality inside the budget). Falls back to the
/// feasibility-minimizing member with a warning flag when nothing fits.
pub fn select_operating_point(front: &[Individual], cap: f64) -> Result<(usize, bool)> {
    if front.is_empty() {
        return Err(Error::InvalidParameter("empty Pareto front".into()));
    }
    let mean = |ind: &Individual| (ind.objectives[0] + ind.objectives[1]) / 2.0;
    let admissible = front
        .iter()
        .enumerate()
        .filter(|(_, ind)| mean(ind) <= cap)
        .max_by(|(i, a), (j, b)| {
            mean(a)
                .partial_cmp(&mean(b))
                .unwrap()
                .then(j.cmp(i))
        });
    if let Some((idx, _)) = admissible {
        return Ok((idx, false));
    }
    let (idx, _) = front
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| mean(a).partial_cmp(&mean(b)).unwrap().then(i.cmp(j)))
        .expect("front is nonempty");
    Ok((idx, true))
}

/// Watermark tuning objectives: f1/f2 are attack-averaged BERs of the tiled
/// copyright mark and the authentication mark, f3 the embedding MSE. The
/// extractor model is pre-trained once per candidate on the unattacked
/// watermarked image and fine-tuned per attack.
pub struct TuningProblem<'a> {
    image: &'a Image,
    marks: &'a MarkSet,
    texture: &'a TextureMap,
    system: ShearletSystem,
    attacks: Vec<AttackSpec>,
    pretrain_cfg: MlpConfig,
    finetune_cfg: MlpConfig,
    seed: u64,
    cache: Mutex<HashMap<(i64, i64), Vec<f64>>>,
}

impl<'a> TuningProblem<'a> {
    pub fn new(
        image: &'a Image,
        marks: &'a MarkSet,
        texture: &'a TextureMap,
        seed: u64,
    ) -> Result<Self> {
        let system = ShearletSystem::new(image.height(), image.width())?;
        Ok(Self {
            image,
            marks,
            texture,
            system,
            attacks: optimization_attack_set(),
            pretrain_cfg: MlpConfig {
                max_epochs: 150,
                patience: 10,
                ..MlpConfig::default()
            },
            finetune_cfg: MlpConfig {
                max_epochs: 40,
                patience: 10,
                ..MlpConfig::default()
            },
            seed,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn bounds() -> Vec<(f64, f64)> {
        vec![
            crate::embed::DELTA_PRIME_BOUNDS,
            crate::embed::DELTA_DPRIME_BOUNDS,
        ]
    }

    /// Evaluation runs at the cache key's resolution (two decimals), so an
    /// objective vector never depends on which nearby query arrived first.
    pub fn objectives(&self, x: &[f64]) -> Vec<f64> {
        let key = ((x[0] * 100.0).round() as i64, (x[1] * 100.0).round() as i64);
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return hit.clone();
        }
        let thresholds = ThresholdPair {
            delta_prime: (key.0 as f64 / 100.0).clamp(30.0, 50.0),
            delta_dprime: (key.1 as f64 / 100.0).clamp(0.0, 2.0),
        };
        let objectives = self
            .evaluate(&thresholds)
            .unwrap_or_else(|_| vec![1.0, 1.0, f64::MAX]);
        self.cache
            .lock()
            .unwrap()
            .insert(key, objectives.clone());
        objectives
    }

    fn evaluate(&self, thresholds: &ThresholdPair) -> Result<Vec<f64>> {
        let block_side = self.texture.grid.side;
        let watermarked = embed_all_with_system(
            &self.system,
            self.image,
            self.marks,
            self.texture,
            thresholds,
            Mode::Dual,
        )?;
        let f3 = metrics::mse(self.image, &watermarked)?;

        let wm_plane = luminance(&watermarked)?;
        let grid = partition(wm_plane.rows, wm_plane.cols, block_side)?;
        let base_features = block_feature_vectors(&self.system, &wm_plane, block_side)?;
        let base_model = pretrain(&base_features, &self.marks.auth, self.seed, &self.pretrain_cfg);

        let mut copyright_ber = 0.0;
        let mut auth_ber = 0.0;
        for spec in &self.attacks {
            let attacked = apply_attack(&watermarked, spec)?;
            let plane = luminance(&attacked)?;
            let tiled =
                extract_tiled_bits(&self.system, &plane, block_side, thresholds.delta_prime)?;
            copyright_ber += metrics::ber(&self.marks.copyright, &tiled)?;

            let features = block_feature_vectors(&self.system, &plane, block_side)?;
            let tuned = fine_tune(&base_model, &features, &self.marks.auth, &self.finetune_cfg);
            let extracted = extract_bits(&tuned, &features, grid.block_rows, grid.block_cols);
            auth_ber += metrics::ber(&self.marks.auth, &extracted)?;
        }
        let n = self.attacks.len() as f64;
        Ok(vec![copyright_ber / n, auth_ber / n, f3])
    }

    pub fn evaluated_count(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}

/// Full per-image tuning: NSGA-II over (delta', delta'') followed by the
/// capped operating-point rule. Returns the chosen pair, the run trace, and
/// whether the fallback fired.
pub fn optimize_thresholds(
    image: &Image,
    marks: &MarkSet,
    texture: &TextureMap,
    cfg: &OptimizerConfig,
) -> Result<(ThresholdPair, Nsga2Result, bool)> {
    let problem = TuningProblem::new(image, marks, texture, cfg.seed)?;
    let result = nsga2_run(&TuningProblem::bounds(), cfg, |x| problem.objectives(x));
    let (idx, warned) = select_operating_point(&result.front, cfg.robustness_cap)?;
    let chosen = &result.front[idx];
    let pair = ThresholdPair {
        delta_prime: chosen.x[0].clamp(30.0, 50.0),
        delta_dprime: chosen.x[1].clamp(0.0, 2.0),
    };
    Ok((pair, result, warned))
}
