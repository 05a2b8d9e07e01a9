use std::collections::BTreeMap;
use std::io::{self, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_power_law, mean_sd, wilson_interval, PowerLawFit};
use crate::error::{Error, Result};
use crate::model::{build_sequence, materialize, ModelParams};
use crate::stats::{degree_histogram, vertex_stats, CountTables};

pub const ENSEMBLE_SCHEMA: &str = "second-degree/ensemble/1";

const WILSON_Z: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub params: ModelParams,
    pub replicas: u32,
    pub base_seed: u64,
    /// Strictly increasing second-degree thresholds.
    pub k_grid: Vec<u32>,
    /// Restricts the reported (l, k) means to these degrees when present.
    #[serde(default)]
    pub l_grid: Option<Vec<u32>>,
    /// Exponent slack of the concentration probe.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    0.2
}

impl EnsembleSpec {
    pub fn new(params: ModelParams, replicas: u32, base_seed: u64, k_grid: Vec<u32>) -> Self {
        Self {
            params,
            replicas,
            base_seed,
            k_grid,
            l_grid: None,
            epsilon: default_epsilon(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.replicas == 0 {
            return Err(Error::Parameter("replicas must be at least 1".into()));
        }
        if self.k_grid.is_empty() {
            return Err(Error::Parameter("k_grid must not be empty".into()));
        }
        if self.k_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter(
                "k_grid must be strictly increasing".into(),
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Parameter(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn seed(&self, replica: u32) -> u64 {
        self.base_seed.wrapping_add(replica as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSummary {
    pub k: u32,
    pub y_mean: f64,
    pub y_sd: f64,
    pub x_mean: f64,
    pub x_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LkMean {
    pub l: u32,
    pub k: u32,
    pub mean: f64,
    pub sd: f64,
}

/// Fraction of replicas whose count strays from the sample mean by more than
/// `mean^(1 - epsilon)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationRow {
    pub k: u32,
    pub epsilon: f64,
    pub y_threshold: f64,
    pub y_exceed: u64,
    pub y_rate: f64,
    pub y_wilson: (f64, f64),
    pub x_threshold: f64,
    pub x_exceed: u64,
    pub x_rate: f64,
    pub x_wilson: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub wall_seconds: f64,
    /// Sum of per-replica generation and statistics time.
    pub replica_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleReport {
    pub schema: &'static str,
    pub spec: EnsembleSpec,
    pub seeds: Vec<u64>,
    pub k: Vec<KSummary>,
    /// `y_samples[j][r]` is Y(k_grid[j]) in replica r.
    pub y_samples: Vec<Vec<u64>>,
    pub x_samples: Vec<Vec<u64>>,
    pub n_means: Vec<LkMean>,
    pub p_means: Vec<LkMean>,
    /// Mean number of vertices of each observed degree.
    pub degree_means: Vec<(u32, f64)>,
    /// Slope fit over the grid points with `k <= n^(1/(2+a))`.
    pub fit: Option<PowerLawFit>,
    pub fit_k_limit: f64,
    pub concentration: Vec<ConcentrationRow>,
    pub timing: Timing,
}

struct Replica {
    y: Vec<u64>,
    x: Vec<u64>,
    tables: CountTables,
    degrees: BTreeMap<u32, u64>,
    seconds: f64,
}

fn run_replica(spec: &EnsembleSpec, seed: u64) -> Result<Replica> {
    let start = Instant::now();
    let seq = build_sequence(&spec.params, seed)?;
    let g = materialize(&seq, &spec.params)?;
    let tables = CountTables::from_stats(&vertex_stats(&g));
    let y_dense = tables.y_dense();
    let y = spec
        .k_grid
        .iter()
        .map(|&k| y_dense.get(k as usize).copied().unwrap_or(0))
        .collect();
    let x = spec.k_grid.iter().map(|&k| tables.x(k)).collect();
    Ok(Replica {
        y,
        x,
        tables,
        degrees: degree_histogram(&g),
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn lk_means<'a>(
    cells: impl Iterator<Item = &'a BTreeMap<(u32, u32), u64>>,
    replicas: f64,
    l_grid: Option<&[u32]>,
) -> Vec<LkMean> {
    let mut sums: BTreeMap<(u32, u32), (f64, f64)> = BTreeMap::new();
    for table in cells {
        for (&key, &c) in table {
            if l_grid.is_some_and(|ls| !ls.contains(&key.0)) {
                continue;
            }
            let e = sums.entry(key).or_default();
            e.0 += c as f64;
            e.1 += (c as f64).powi(2);
        }
    }
    sums.into_iter()
        .map(|((l, k), (s, ss))| {
            let mean = s / replicas;
            let sd = if replicas > 1.0 {
                ((ss - replicas * mean * mean).max(0.0) / (replicas - 1.0)).sqrt()
            } else {
                0.0
            };
            LkMean { l, k, mean, sd }
        })
        .collect()
}

fn concentration_rows(
    k_grid: &[u32],
    y_samples: &[Vec<u64>],
    x_samples: &[Vec<u64>],
    epsilon: f64,
) -> Vec<ConcentrationRow> {
    let probe = |samples: &[u64]| {
        let mean = samples.iter().sum::<u64>() as f64 / samples.len() as f64;
        let threshold = mean.powf(1.0 - epsilon);
        let exceed = samples
            .iter()
            .filter(|&&v| (v as f64 - mean).abs() > threshold)
            .count() as u64;
        (threshold, exceed)
    };
    let trials = y_samples.first().map_or(0, |s| s.len()) as u64;
    k_grid
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let (y_threshold, y_exceed) = probe(&y_samples[j]);
            let (x_threshold, x_exceed) = probe(&x_samples[j]);
            ConcentrationRow {
                k,
                epsilon,
                y_threshold,
                y_exceed,
                y_rate: y_exceed as f64 / trials as f64,
                y_wilson: wilson_interval(y_exceed, trials, WILSON_Z),
                x_threshold,
                x_exceed,
                x_rate: x_exceed as f64 / trials as f64,
                x_wilson: wilson_interval(x_exceed, trials, WILSON_Z),
            }
        })
        .collect()
}

/// Runs `spec.replicas` independent realizations in parallel; replica `r` uses
/// seed `base_seed + r`. Aggregation runs in replica order, so the report
/// (apart from timing) depends only on the spec.
pub fn run_ensemble(spec: &EnsembleSpec) -> Result<EnsembleReport> {
    spec.validate()?;
    let start = Instant::now();
    let seeds: Vec<u64> = (0..spec.replicas).map(|r| spec.seed(r)).collect();
    let replicas: Vec<Replica> = seeds
        .par_iter()
        .enumerate()
        .map(|(r, &seed)| {
            run_replica(spec, seed).map_err(|e| Error::Replica {
                replica: r as u64,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let count = replicas.len() as f64;
    let per_k = |pick: fn(&Replica) -> &Vec<u64>| -> Vec<Vec<u64>> {
        (0..spec.k_grid.len())
            .map(|j| replicas.iter().map(|r| pick(r)[j]).collect())
            .collect()
    };
    let y_samples = per_k(|r| &r.y);
    let x_samples = per_k(|r| &r.x);
    let k = spec
        .k_grid
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let (y_mean, y_sd) = mean_sd(y_samples[j].iter().map(|&v| v as f64));
            let (x_mean, x_sd) = mean_sd(x_samples[j].iter().map(|&v| v as f64));
            KSummary {
                k,
                y_mean,
                y_sd,
                x_mean,
                x_sd,
            }
        })
        .collect::<Vec<_>>();

    let l_grid = spec.l_grid.as_deref();
    let n_means = lk_means(replicas.iter().map(|r| &r.tables.n), count, l_grid);
    let p_means = lk_means(replicas.iter().map(|r| &r.tables.p), count, l_grid);
    let mut degree_sums: BTreeMap<u32, u64> = BTreeMap::new();
    for r in &replicas {
        for (&d, &c) in &r.degrees {
            *degree_sums.entry(d).or_default() += c;
        }
    }
    let degree_means = degree_sums
        .into_iter()
        .map(|(d, s)| (d, s as f64 / count))
        .collect();

    let fit_k_limit = (spec.params.n as f64).powf(1.0 / (2.0 + spec.params.a));
    let fit_points: Vec<(f64, f64)> = k
        .iter()
        .filter(|s| s.k as f64 <= fit_k_limit)
        .map(|s| (s.k as f64, s.y_mean))
        .collect();
    let concentration = concentration_rows(&spec.k_grid, &y_samples, &x_samples, spec.epsilon);

    Ok(EnsembleReport {
        schema: ENSEMBLE_SCHEMA,
        spec: spec.clone(),
        seeds,
        k,
        y_samples,
        x_samples,
        n_means,
        p_means,
        degree_means,
        fit: fit_power_law(&fit_points),
        fit_k_limit,
        concentration,
        timing: Timing {
            wall_seconds: start.elapsed().as_secs_f64(),
            replica_seconds: replicas.iter().map(|r| r.seconds).sum(),
        },
    })
}

/// Exceedance rates of Y and X around their sample means for every `k` in the grid.
pub fn concentration_probe(spec: &EnsembleSpec, epsilon: f64) -> Result<Vec<ConcentrationRow>> {
    let spec = EnsembleSpec {
        epsilon,
        ..spec.clone()
    };
    Ok(run_ensemble(&spec)?.concentration)
}

impl EnsembleReport {
    pub fn summary(&self, k: u32) -> Option<&KSummary> {
        self.k.iter().find(|s| s.k == k)
    }

    pub fn degree_mean(&self, d: u32) -> f64 {
        self.degree_means
            .iter()
            .find(|&&(dd, _)| dd == d)
            .map_or(0.0, |&(_, m)| m)
    }

    fn lookup(cells: &[LkMean], l: u32, k: u32) -> Option<&LkMean> {
        cells
            .binary_search_by_key(&(l, k), |c| (c.l, c.k))
            .ok()
            .map(|i| &cells[i])
    }

    pub fn n_mean(&self, l: u32, k: u32) -> Option<&LkMean> {
        Self::lookup(&self.n_means, l, k)
    }

    pub fn p_mean(&self, l: u32, k: u32) -> Option<&LkMean> {
        Self::lookup(&self.p_means, l, k)
    }

    /// Rows `k,y_mean,y_sd,x_mean,x_sd,y_exceed_rate,x_exceed_rate`.
    pub fn write_k_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# schema: {ENSEMBLE_SCHEMA}")?;
        writeln!(w, "k,y_mean,y_sd,x_mean,x_sd,y_exceed_rate,x_exceed_rate")?;
        for (s, c) in self.k.iter().zip(&self.concentration) {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                s.k, s.y_mean, s.y_sd, s.x_mean, s.x_sd, c.y_rate, c.x_rate
            )?;
        }
        Ok(())
    }

    /// Rows `l,k,n_mean,n_sd,p_mean,p_sd` over the union of observed cells.
    pub fn write_lk_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# schema: {ENSEMBLE_SCHEMA}")?;
        writeln!(w, "l,k,n_mean,n_sd,p_mean,p_sd")?;
        let mut keys: Vec<(u32, u32)> = self
            .n_means
            .iter()
            .chain(&self.p_means)
            .map(|c| (c.l, c.k))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        for (l, k) in keys {
            let n = self.n_mean(l, k).map_or((0.0, 0.0), |c| (c.mean, c.sd));
            let p = self.p_mean(l, k).map_or((0.0, 0.0), |c| (c.mean, c.sd));
            writeln!(w, "{l},{k},{},{},{},{}", n.0, n.1, p.0, p.1)?;
        }
        Ok(())
    }

    /// One row per replica: `replica,seed,Y(k)...,X(k)...`.
    pub fn write_samples_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# schema: {ENSEMBLE_SCHEMA}")?;
        let ys = self.spec.k_grid.iter().map(|k| format!("Y{k}"));
        let xs = self.spec.k_grid.iter().map(|k| format!("X{k}"));
        let header: Vec<String> = ["replica".to_string(), "seed".to_string()]
            .into_iter()
            .chain(ys)
            .chain(xs)
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (r, seed) in self.seeds.iter().enumerate() {
            let mut row = vec![r.to_string(), seed.to_string()];
            row.extend(self.y_samples.iter().map(|s| s[r].to_string()));
            row.extend(self.x_samples.iter().map(|s| s[r].to_string()));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}
