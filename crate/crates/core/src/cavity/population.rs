use super::CavityError;
use crate::model::ModelParams;
use crate::potential::PotentialSpec;
use crate::rng::Seed;
use crate::stats::{compact_w1, quantile_sorted, sorted, Scale};
use num_complex::Complex64;
use rand::distributions::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const MIN_POOL: usize = 10_000;
const CHUNK: usize = 4096;

/// Scalar type of a cavity pool: real at eta = 0, complex otherwise.
pub trait CavityValue: Copy + Send + Sync + Default + std::ops::AddAssign + std::fmt::Debug + 'static {
    const COMPLEX: bool;
    /// 1 / (v - e - i eta - t2sum), or None for a vanishing denominator.
    fn cavity(v_minus_e: f64, eta: f64, t2sum: Self) -> Option<Self>;
    fn scale(self, c: f64) -> Self;
    fn re(self) -> f64;
    fn im(self) -> f64;
}

impl CavityValue for f64 {
    const COMPLEX: bool = false;
    #[inline]
    fn cavity(v_minus_e: f64, _eta: f64, t2sum: f64) -> Option<f64> {
        let d = v_minus_e - t2sum;
        (d != 0.0).then(|| 1.0 / d)
    }
    #[inline]
    fn scale(self, c: f64) -> f64 {
        self * c
    }
    fn re(self) -> f64 {
        self
    }
    fn im(self) -> f64 {
        0.0
    }
}

impl CavityValue for Complex64 {
    const COMPLEX: bool = true;
    #[inline]
    fn cavity(v_minus_e: f64, eta: f64, t2sum: Complex64) -> Option<Complex64> {
        let d = Complex64::new(v_minus_e - t2sum.re, -eta - t2sum.im);
        (d.norm_sqr() != 0.0).then(|| d.inv())
    }
    #[inline]
    fn scale(self, c: f64) -> Complex64 {
        self * c
    }
    fn re(self) -> f64 {
        self.re
    }
    fn im(self) -> f64 {
        self.im
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population<T> {
    pub samples: Vec<T>,
    pub energy: f64,
    pub eta: f64,
    pub generation: usize,
    pub convergence_history: Vec<f64>,
}

impl<T: CavityValue> Population<T> {
    /// The t = 0 law 1 / (V - E - i eta).
    pub fn initial(spec: &PotentialSpec, energy: f64, eta: f64, n: usize, seed: Seed) -> Self {
        let mut samples = vec![T::default(); n];
        samples.par_chunks_mut(CHUNK).enumerate().for_each(|(c, out)| {
            let mut rng = seed.split("init", c as u64).rng();
            for s in out.iter_mut() {
                *s = loop {
                    if let Some(v) = T::cavity(spec.draw(&mut rng) - energy, eta, T::default()) {
                        break v;
                    }
                };
            }
        });
        Population { samples, energy, eta, generation: 0, convergence_history: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.re()).collect()
    }

    pub fn imag_parts(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.im()).collect()
    }
}

/// One sweep of the recursion. Each output draws V and K uniform indices
/// into the old pool; chunk c uses the stream `seed.split("step", c)`, so
/// the result does not depend on the number of worker threads.
pub fn population_step<T: CavityValue>(pop: &Population<T>, params: &ModelParams, spec: &PotentialSpec, seed: Seed) -> Population<T> {
    let n = pop.samples.len();
    let t2 = params.t() * params.t();
    let k = params.k;
    let old = &pop.samples;
    let pick = Uniform::new(0, n);
    let mut next = vec![T::default(); n];
    next.par_chunks_mut(CHUNK).enumerate().for_each(|(c, out)| {
        let mut rng = seed.split("step", c as u64).rng();
        for s in out.iter_mut() {
            let v = spec.draw(&mut rng) - pop.energy;
            let mut sum = T::default();
            for _ in 0..k {
                sum += old[pick.sample(&mut rng)];
            }
            let t2sum = sum.scale(t2);
            // exact zero has probability zero; redraw V only
            *s = match T::cavity(v, pop.eta, t2sum) {
                Some(g) => g,
                None => loop {
                    let v = spec.draw(&mut rng) - pop.energy;
                    if let Some(g) = T::cavity(v, pop.eta, t2sum) {
                        break g;
                    }
                },
            };
        }
    });
    Population {
        samples: next,
        energy: pop.energy,
        eta: pop.eta,
        generation: pop.generation + 1,
        convergence_history: pop.convergence_history.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdeConfig {
    pub n: usize,
    pub max_iters: usize,
    /// Target distance in IQR units.
    pub tol: f64,
    pub window: usize,
    /// Run exactly this many generations (no stopping rule); used to keep
    /// pools at neighbouring energies coupled.
    pub generations: Option<usize>,
}

impl Default for RdeConfig {
    fn default() -> Self {
        RdeConfig { n: 200_000, max_iters: 500, tol: 5e-3, window: 3, generations: None }
    }
}

impl RdeConfig {
    /// The successive-generation distance cannot drop below the sampling
    /// floor of two independent N-samples, so the target is raised to it.
    pub fn effective_tol(&self) -> f64 {
        self.tol.max(NOISE_FLOOR / (self.n as f64).sqrt())
    }
}

/// Successive-pool distance of two independent N-samples of one law sits
/// near 0.5/sqrt(N) in compactified IQR units; 1.5 leaves headroom.
pub const NOISE_FLOOR: f64 = 1.5;

fn distance<T: CavityValue>(a: &[T], b: &[T]) -> f64 {
    let ra: Vec<f64> = a.iter().map(|s| s.re()).collect();
    let rb: Vec<f64> = b.iter().map(|s| s.re()).collect();
    let d = compact_w1(&ra, &rb, Scale::of_sorted(&sorted(&rb)));
    if !T::COMPLEX {
        return d;
    }
    let ia: Vec<f64> = a.iter().map(|s| s.im()).collect();
    let ib: Vec<f64> = b.iter().map(|s| s.im()).collect();
    d.max(compact_w1(&ia, &ib, Scale::of_sorted(&sorted(&ib))))
}

fn iterate<T: CavityValue>(
    spec: &PotentialSpec,
    params: &ModelParams,
    energy: f64,
    eta: f64,
    config: &RdeConfig,
    seed: Seed,
) -> Result<Population<T>, CavityError> {
    if config.n < MIN_POOL {
        return Err(CavityError::PoolTooSmall(config.n));
    }
    if !params.is_valid() {
        return Err(CavityError::InvalidParams(format!("{params:?}")));
    }
    spec.validate()?;
    let mut pop = Population::<T>::initial(spec, energy, eta, config.n, seed.split("rde", 0));
    let tol = config.effective_tol();
    let max = config.generations.unwrap_or(config.max_iters);
    for gen in 1..=max {
        let next = population_step(&pop, params, spec, seed.split("generation", gen as u64));
        let d = distance(&pop.samples, &next.samples);
        pop = next;
        pop.convergence_history.push(d);
        if config.generations.is_none() && gen >= config.window {
            let h = &pop.convergence_history;
            let avg = h[h.len() - config.window..].iter().sum::<f64>() / config.window as f64;
            if avg < tol {
                return Ok(pop);
            }
        }
    }
    if config.generations.is_some() {
        return Ok(pop);
    }
    Err(CavityError::NoConvergence {
        iterations: max,
        last: pop.convergence_history.last().copied().unwrap_or(f64::NAN),
        history: pop.convergence_history,
    })
}

/// Real pool at eta = 0, started from the t = 0 law.
pub fn solve_rde(spec: &PotentialSpec, params: &ModelParams, energy: f64, config: &RdeConfig, seed: Seed) -> Result<Population<f64>, CavityError> {
    iterate::<f64>(spec, params, energy, 0.0, config, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImSummary {
    pub mean: f64,
    pub median: f64,
    pub frac_above_10eta: f64,
}

pub fn im_summary(pop: &Population<Complex64>) -> ImSummary {
    let im = sorted(&pop.imag_parts());
    ImSummary {
        mean: im.iter().sum::<f64>() / im.len() as f64,
        median: quantile_sorted(&im, 0.5),
        frac_above_10eta: im.iter().filter(|&&v| v > 10.0 * pop.eta).count() as f64 / im.len() as f64,
    }
}

/// Complex pool at z = E + i eta.
pub fn solve_rde_complex(
    spec: &PotentialSpec,
    params: &ModelParams,
    energy: f64,
    eta: f64,
    config: &RdeConfig,
    seed: Seed,
) -> Result<(Population<Complex64>, ImSummary), CavityError> {
    if !(eta > 0.0) {
        return Err(CavityError::InvalidParams("complex pool needs eta > 0".into()));
    }
    let pop = iterate::<Complex64>(spec, params, energy, eta, config, seed)?;
    let s = im_summary(&pop);
    Ok((pop, s))
}
