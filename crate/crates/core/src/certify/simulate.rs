use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CertifyError, Exercise, PricePath, RegimeModel};
use crate::bound::Variant;
use crate::payoff::AmericanPayoffGrid;

/// Per-path generator: stream `index` of the ChaCha8 generator keyed by `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

/// Sampling tables for the in-grid chain. In the extended variant the masses
/// toward the tail state vanish in the limit, so the chain stays on the grid.
struct Sampler {
    initial: WeightedIndex<f64>,
    kernels: [Vec<Vec<Option<WeightedIndex<f64>>>>; 2],
    q: Vec<Vec<f64>>,
    nn: usize,
}

impl Sampler {
    fn new(m: &RegimeModel) -> Result<Self, CertifyError> {
        let grid = m.grid_len();
        let w0: Vec<f64> = (0..grid).map(|j| m.marginals[j][0].max(0.0)).collect();
        let initial = WeightedIndex::new(&w0).map_err(|e| CertifyError::InconsistentModel(format!("first marginal: {e}")))?;
        let kernel = |g: &Vec<Vec<Vec<f64>>>| -> Vec<Vec<Option<WeightedIndex<f64>>>> {
            g.iter()
                .map(|block| (0..grid).map(|j| WeightedIndex::new((0..grid).map(|k| block[j][k].max(0.0))).ok()).collect())
                .collect()
        };
        Ok(Sampler { initial, kernels: [kernel(&m.g1), kernel(&m.g2)], q: m.q.clone(), nn: m.num_maturities() })
    }

    /// Writes state indices into `path` and returns the exercise maturity.
    fn sample(&self, rng: &mut ChaCha8Rng, path: &mut [usize]) -> usize {
        let mut j = self.initial.sample(rng);
        let mut exercised: Option<usize> = None;
        for n in 0..self.nn {
            path[n] = j;
            if exercised.is_none() && (n + 1 == self.nn || rng.random::<f64>() < self.q[j][n]) {
                exercised = Some(n);
            }
            if n + 1 < self.nn {
                let r = if exercised.is_some() { 1 } else { 0 };
                let pick = self.kernels[r][n][j].as_ref().or(self.kernels[1 - r][n][j].as_ref());
                if let Some(w) = pick {
                    j = w.sample(rng);
                }
            }
        }
        exercised.unwrap_or(self.nn - 1)
    }
}

pub fn simulate(model: &RegimeModel, paths: usize, seed: u64) -> Result<Vec<PricePath>, CertifyError> {
    let sampler = Sampler::new(model)?;
    let nn = model.num_maturities();
    Ok((0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i as u64);
            let mut idx = vec![0; nn];
            let m = sampler.sample(&mut rng, &mut idx);
            PricePath { values: idx.iter().map(|&j| model.states[j]).collect(), exercise: Exercise::Maturity(m) }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub paths: usize,
    /// Deterministic contribution of the tail state in the extended variant.
    pub tail_term: f64,
}

const BLOCK: usize = 4096;

/// Monte Carlo value of the payoff under the model, exercising where the
/// model's regime switches.
pub fn mc_price(model: &RegimeModel, payoff: &AmericanPayoffGrid, paths: usize, seed: u64) -> Result<McEstimate, CertifyError> {
    if paths == 0 {
        return Err(CertifyError::Invalid("need at least one path".into()));
    }
    let sampler = Sampler::new(model)?;
    let nn = model.num_maturities();
    let values: Vec<f64> = (0..paths.div_ceil(BLOCK))
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut idx = vec![0; nn];
            let sampler = &sampler;
            (b * BLOCK..((b + 1) * BLOCK).min(paths)).map(move |i| {
                let mut rng = path_rng(seed, i as u64);
                let m = sampler.sample(&mut rng, &mut idx);
                payoff.values[idx[m]][m]
            })
        })
        .collect();
    let mean = values.iter().sum::<f64>() / paths as f64;
    let var = if paths > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (paths - 1) as f64 } else { 0.0 };
    let tail_term = match model.variant {
        Variant::Bounded => 0.0,
        Variant::Extended => {
            let t = model.grid_len();
            (0..nn).map(|n| payoff.tail_slopes[n] * model.f[t][n]).sum()
        }
    };
    Ok(McEstimate { estimate: mean + tail_term, stderr: (var / paths as f64).sqrt(), paths, tail_term })
}
