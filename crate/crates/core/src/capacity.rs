//! Monte-Carlo ergodic capacity, relay placement sweeps and variance-mode
//! comparisons.
//!
//! All estimates are driven by a [`CommonDraws`] table of standard-normal
//! triples. The table depends only on `(seed, n_samples)`, so every grid
//! point and every variance mode sees the same fading draws. Draws are
//! generated in fixed-size chunks, chunk `k` from stream `k` of the seed, and
//! per-chunk statistics are merged in chunk order, so results do not depend on
//! the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{fading_stream, standard_normal_triple, TripleHop};
use crate::error::{invalid, Error, Result};
use crate::params::SystemParams;
use crate::relay::{destination_stats, VarianceMode};

/// Samples per random substream and per reduction chunk.
pub const CHUNK_SIZE: usize = 4096;

pub const MIN_SAMPLES: usize = 100;
pub const DEFAULT_SWEEP_SAMPLES: usize = 20_000;
pub const DEFAULT_POINT_SAMPLES: usize = 200_000;

/// Distance-sum tolerance for a placement (m).
const GEOMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Bits,
    Nats,
}

impl LogBase {
    pub fn unit(&self) -> &'static str {
        match self {
            LogBase::Bits => "bits",
            LogBase::Nats => "nats",
        }
    }
}

/// `log(1 + snr)` in the chosen unit.
#[inline]
pub fn capacity_in(snr: f64, base: LogBase) -> f64 {
    match base {
        LogBase::Bits => snr.ln_1p() / std::f64::consts::LN_2,
        LogBase::Nats => snr.ln_1p(),
    }
}

/// `log₂(1 + snr)`, bits per channel use.
pub fn instantaneous_capacity(snr: f64) -> f64 {
    capacity_in(snr, LogBase::Bits)
}

/// Table of standard-normal triples shared by every configuration evaluated
/// under one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonDraws {
    seed: u64,
    normals: Vec<[f64; 3]>,
}

impl CommonDraws {
    pub fn generate(seed: u64, n_samples: usize) -> Self {
        let n_chunks = n_samples.div_ceil(CHUNK_SIZE);
        let chunks: Vec<Vec<[f64; 3]>> = (0..n_chunks)
            .into_par_iter()
            .map(|k| {
                let len = CHUNK_SIZE.min(n_samples - k * CHUNK_SIZE);
                let mut rng = fading_stream(seed, k as u64);
                (0..len).map(|_| standard_normal_triple(&mut rng)).collect()
            })
            .collect();
        Self {
            seed,
            normals: chunks.concat(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    pub fn normals(&self) -> &[[f64; 3]] {
        &self.normals
    }
}

/// Running mean and sum of squared deviations (Welford), mergeable in a
/// fixed order (Chan et al.).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        Moments {
            n,
            mean: self.mean + delta * w,
            m2: self.m2 + other.m2 + delta * delta * self.n as f64 * w,
        }
    }

    fn std_error(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let var = self.m2 / (self.n - 1) as f64;
        (var / self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityEstimate {
    /// Ergodic capacity per channel use, in `base` units.
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub mode: VarianceMode,
    pub base: LogBase,
}

impl CapacityEstimate {
    /// Throughput in units per second at the given symbol rate.
    pub fn per_second(&self, symbol_rate: f64) -> f64 {
        self.mean * symbol_rate
    }
}

/// Monte-Carlo settings shared by the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimator {
    pub mode: VarianceMode,
    pub n_samples: usize,
    pub seed: u64,
    pub base: LogBase,
}

impl Estimator {
    pub fn new(mode: VarianceMode, n_samples: usize, seed: u64) -> Self {
        Self {
            mode,
            n_samples,
            seed,
            base: LogBase::Bits,
        }
    }

    pub fn with_base(mut self, base: LogBase) -> Self {
        self.base = base;
        self
    }

    fn check(&self) -> Result<()> {
        if self.n_samples < MIN_SAMPLES {
            return Err(invalid("n_samples", format!("need at least {MIN_SAMPLES}, got {}", self.n_samples)));
        }
        Ok(())
    }

    pub fn draws(&self) -> CommonDraws {
        CommonDraws::generate(self.seed, self.n_samples)
    }
}

/// A relay placement: the three hop lengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub d_sr: f64,
    pub d_rr: f64,
    pub d_rd: f64,
}

impl Placement {
    pub fn new(d_sr: f64, d_rr: f64, d_rd: f64) -> Self {
        Self { d_sr, d_rr, d_rd }
    }

    /// Checks all hops are positive and sum to `d_sd`.
    pub fn validate(&self, d_sd: f64) -> Result<()> {
        let Placement { d_sr, d_rr, d_rd } = *self;
        if !(d_sr > 0.0 && d_rr > 0.0 && d_rd > 0.0) || !(d_sr + d_rr + d_rd).is_finite() {
            return Err(Error::Geometry(format!(
                "hop lengths must be positive, got ({d_sr}, {d_rr}, {d_rd}) m"
            )));
        }
        let sum = d_sr + d_rr + d_rd;
        if (sum - d_sd).abs() > GEOMETRY_TOL {
            return Err(Error::Geometry(format!(
                "hop lengths sum to {sum} m but the link is {d_sd} m"
            )));
        }
        Ok(())
    }
}

fn estimate_on_draws(hops: &TripleHop, params: &SystemParams, est: &Estimator, draws: &CommonDraws) -> Result<CapacityEstimate> {
    // Per-chunk partials are independent of how rayon schedules them; the
    // merge runs sequentially in chunk order.
    let partials: Vec<Moments> = draws
        .normals
        .par_chunks(CHUNK_SIZE)
        .map(|chunk| {
            let mut m = Moments::default();
            for z in chunk {
                let fading = hops.realize(*z);
                let stats = destination_stats(&fading, params, est.mode)?;
                m.push(capacity_in(stats.snr, est.base));
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let total = partials.into_iter().fold(Moments::default(), Moments::merge);
    if !total.mean.is_finite() {
        return Err(Error::Degenerate(format!("capacity estimate is {}", total.mean)));
    }
    Ok(CapacityEstimate {
        mean: total.mean,
        std_error: total.std_error(),
        n_samples: total.n as usize,
        seed: draws.seed,
        mode: est.mode,
        base: est.base,
    })
}

/// Ergodic capacity at one placement using a caller-supplied draw table.
pub fn ergodic_capacity_with(
    placement: Placement,
    params: &SystemParams,
    est: &Estimator,
    draws: &CommonDraws,
) -> Result<CapacityEstimate> {
    est.check()?;
    placement.validate(params.d_sd)?;
    if draws.len() != est.n_samples || draws.seed != est.seed {
        return Err(invalid("draws", "draw table does not match the estimator's seed and sample count"));
    }
    let hops = TripleHop::new(placement.d_sr, placement.d_rr, placement.d_rd, params)?;
    estimate_on_draws(&hops, params, est, draws)
}

/// Ergodic capacity `E[log(1 + γ)]` over independent log-normal hop gains.
pub fn ergodic_capacity(
    d_sr: f64,
    d_rr: f64,
    d_rd: f64,
    params: &SystemParams,
    mode: VarianceMode,
    n_samples: usize,
    seed: u64,
) -> Result<CapacityEstimate> {
    let est = Estimator::new(mode, n_samples, seed);
    est.check()?;
    ergodic_capacity_with(Placement::new(d_sr, d_rr, d_rd), params, &est, &est.draws())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementPoint {
    pub d_sr: f64,
    pub d_rr: f64,
    pub d_rd: f64,
    pub estimate: CapacityEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid_step: f64,
    /// Ordered by `d_sr`, then `d_rr`.
    pub points: Vec<PlacementPoint>,
    pub optimum: PlacementPoint,
}

/// Grid placements `(i·step, j·step, rest)` with `i, j >= 1` and `rest >= step`.
pub fn placement_grid(d_sd: f64, grid_step: f64) -> Result<Vec<Placement>> {
    if !(grid_step.is_finite() && grid_step > 0.0) {
        return Err(invalid("grid_step", format!("must be positive, got {grid_step}")));
    }
    let max_index = (d_sd / grid_step).floor() as usize;
    let mut grid = Vec::new();
    for i in 1..=max_index {
        for j in 1..=max_index {
            let d_sr = i as f64 * grid_step;
            let d_rr = j as f64 * grid_step;
            let d_rd = d_sd - d_sr - d_rr;
            if d_rd >= grid_step - GEOMETRY_TOL {
                grid.push(Placement::new(d_sr, d_rr, d_rd));
            }
        }
    }
    if grid.is_empty() {
        return Err(Error::Geometry(format!(
            "grid step {grid_step} m leaves no placement on a {d_sd} m link"
        )));
    }
    Ok(grid)
}

/// Evaluates every grid placement under common random numbers and returns
/// the surface with its argmax (ties go to the smallest `d_sr`, then `d_rr`).
pub fn sweep(params: &SystemParams, grid_step: f64, est: &Estimator) -> Result<SweepResult> {
    est.check()?;
    let grid = placement_grid(params.d_sd, grid_step)?;
    let draws = est.draws();
    let points: Vec<PlacementPoint> = grid
        .par_iter()
        .map(|pl| {
            let hops = TripleHop::new(pl.d_sr, pl.d_rr, pl.d_rd, params)?;
            let estimate = estimate_on_draws(&hops, params, est, &draws)?;
            Ok(PlacementPoint {
                d_sr: pl.d_sr,
                d_rr: pl.d_rr,
                d_rd: pl.d_rd,
                estimate,
            })
        })
        .collect::<Result<_>>()?;
    let mut optimum = points[0];
    for p in &points[1..] {
        if p.estimate.mean > optimum.estimate.mean {
            optimum = *p;
        }
    }
    Ok(SweepResult {
        grid_step,
        points,
        optimum,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub d_rd: f64,
    pub mode: VarianceMode,
    pub estimate: CapacityEstimate,
}

/// Capacity versus `d_rd` with the two relay hops equal, one estimate per
/// `(d_rd, mode)`, all on the same draws. Rows are ordered by `d_rd` as
/// given, then by `modes` as given.
pub fn compare_modes(
    params: &SystemParams,
    d_rd_grid: &[f64],
    modes: &[VarianceMode],
    n_samples: usize,
    seed: u64,
    base: LogBase,
) -> Result<Vec<ModeComparison>> {
    let probe = Estimator::new(VarianceMode::default(), n_samples, seed).with_base(base);
    probe.check()?;
    for &d_rd in d_rd_grid {
        if !(d_rd > 0.0 && d_rd < params.d_sd) {
            return Err(Error::Geometry(format!(
                "d_rd = {d_rd} m must lie strictly inside (0, {}) m",
                params.d_sd
            )));
        }
    }
    let draws = probe.draws();
    let jobs: Vec<(f64, VarianceMode)> = d_rd_grid
        .iter()
        .flat_map(|&d| modes.iter().map(move |&m| (d, m)))
        .collect();
    jobs.par_iter()
        .map(|&(d_rd, mode)| {
            let half = (params.d_sd - d_rd) / 2.0;
            let hops = TripleHop::new(half, half, d_rd, params)?;
            let est = Estimator { mode, ..probe };
            Ok(ModeComparison {
                d_rd,
                mode,
                estimate: estimate_on_draws(&hops, params, &est, &draws)?,
            })
        })
        .collect()
}
