//! Seeded synthetic datasets with known structure.
//!
//! Features are uniform on `[0, 1]^d` (`d >= 3`); only the first three
//! carry signal. The generators are:
//!
//! - multi-fidelity: `y_low = f(x)` and `y_high = f(x) + g(x) + eps` where
//!   `f` is piecewise linear in `x1` with a jump plus `2 x2 x3`, `g` is
//!   affine in `x1` and `eps ~ N(0, noise_std)`.
//! - threshold class: the multi-fidelity data plus a 7-class task whose
//!   class is the quantile bin of the row's `y_high` value.
//! - correlated energies: `e1 = h(x)`, `e2 = 0.4 e1 + 1.2 + eta2(x)`,
//!   `e3 = 1.8 e1 - 0.8 + eta3(x)` with smooth perturbations of amplitude
//!   `noise_std`. `e3` rows are a subset of `e2` rows.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label, TaskSpec};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

pub const LOW_TASK: &str = "y_low";
pub const HIGH_TASK: &str = "y_high";
pub const CLASS_TASK: &str = "class";
pub const ENERGY_TASKS: [&str; 3] = ["e1", "e2", "e3"];
pub const N_CLASSES: usize = 7;
pub const MIN_CLASS_COUNT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    MultiFidelity,
    ThresholdClass,
    CorrelatedEnergies,
}

/// The systematic low-to-high fidelity error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    #[default]
    Affine,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub generator: Generator,
    /// `y_low` labels, or `e1` labels for energies.
    pub n_low: usize,
    /// `y_high` labels, or `e2` labels for energies.
    pub n_high: usize,
    /// `e3` labels.
    #[serde(default)]
    pub n_third: usize,
    /// Class labels for the threshold generator.
    #[serde(default)]
    pub n_class: usize,
    pub d: usize,
    pub noise_std: f64,
    /// Share of `y_high` (or `e2`) rows that also carry `y_low` (or `e1`).
    pub overlap_fraction: f64,
    #[serde(default)]
    pub correction: Correction,
    pub seed: u64,
}

impl SynthConfig {
    pub fn multifidelity(n_low: usize, n_high: usize, seed: u64) -> Self {
        Self {
            generator: Generator::MultiFidelity,
            n_low,
            n_high,
            n_third: 0,
            n_class: 0,
            d: 3,
            noise_std: 0.2,
            overlap_fraction: 1.0,
            correction: Correction::Affine,
            seed,
        }
    }

    pub fn threshold_class(n_high: usize, n_class: usize, seed: u64) -> Self {
        Self {
            generator: Generator::ThresholdClass,
            n_low: 0,
            n_class,
            overlap_fraction: 0.0,
            ..Self::multifidelity(0, n_high, seed)
        }
    }

    pub fn correlated_energies(counts: [usize; 3], seed: u64) -> Self {
        Self {
            generator: Generator::CorrelatedEnergies,
            n_low: counts[0],
            n_high: counts[1],
            n_third: counts[2],
            n_class: 0,
            d: 3,
            noise_std: 0.05,
            overlap_fraction: 1.0,
            correction: Correction::Affine,
            seed,
        }
    }

    pub fn with_noise(mut self, noise_std: f64) -> Self {
        self.noise_std = noise_std;
        self
    }

    pub fn with_overlap(mut self, overlap: f64) -> Self {
        self.overlap_fraction = overlap;
        self
    }

    pub fn with_dim(mut self, d: usize) -> Self {
        self.d = d;
        self
    }

    pub fn with_correction(mut self, correction: Correction) -> Self {
        self.correction = correction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 3 {
            return Err(Error::InvalidParam("synthetic data needs d >= 3".into()));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::InvalidParam("noise_std must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.overlap_fraction) {
            return Err(Error::InvalidParam("overlap_fraction must lie in [0, 1]".into()));
        }
        if self.n_low < self.shared() {
            return Err(Error::InvalidParam(format!(
                "n_low = {} cannot cover {} shared rows",
                self.n_low,
                self.shared()
            )));
        }
        Ok(())
    }

    fn shared(&self) -> usize {
        (self.n_high as f64 * self.overlap_fraction).round() as usize
    }

    pub fn generate(&self) -> Result<Dataset> {
        match self.generator {
            Generator::MultiFidelity => gen_multifidelity(self),
            Generator::ThresholdClass => gen_threshold_class(self),
            Generator::CorrelatedEnergies => gen_correlated_energies(self),
        }
    }
}

/// Low-fidelity signal: piecewise linear in `x1` plus an interaction.
pub fn low_fidelity(x: &[f64]) -> f64 {
    let t = x[0];
    let pw = if t < 0.4 {
        4.0 * t
    } else if t < 0.75 {
        1.6 - 2.0 * (t - 0.4)
    } else {
        1.4 + 3.0 * (t - 0.75)
    };
    pw + 2.0 * x[1] * x[2]
}

/// Systematic high-minus-low error.
pub fn correction(kind: Correction, x: &[f64]) -> f64 {
    match kind {
        Correction::Affine => 0.8 * x[0] - 0.3,
        Correction::Zero => 0.0,
    }
}

/// Baseline energy for the correlated-energy generator.
pub fn base_energy(x: &[f64]) -> f64 {
    0.3 + 2.4 * (0.55 * x[0] + 0.45 * x[1] * x[1]) + 0.3 * (2.0 * PI * x[2]).sin()
}

fn energy_perturbations(x: &[f64]) -> [f64; 2] {
    [(2.0 * PI * (x[1] + x[2])).sin(), (2.0 * PI * (x[0] - x[2])).cos()]
}

pub fn energies(x: &[f64], noise_std: f64) -> [f64; 3] {
    let e1 = base_energy(x);
    let eta = energy_perturbations(x);
    [e1, 0.4 * e1 + 1.2 + noise_std * eta[0], 1.8 * e1 - 0.8 + noise_std * eta[1]]
}

fn features(rng: &mut Rng, n: usize, d: usize) -> Vec<f64> {
    (0..n * d).map(|_| rng.random::<f64>()).collect()
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("m{i:05}")).collect()
}

/// Rows `0..shared` carry both labels, then `y_high`-only rows, then
/// `y_low`-only rows. Also returns the `y_high` value of every row.
fn multifidelity_parts(cfg: &SynthConfig, rng: &mut Rng) -> Result<(Dataset, Vec<f64>)> {
    cfg.validate()?;
    let shared = cfg.shared();
    let n = cfg.n_low + cfg.n_high - shared;
    let x = features(rng, n, cfg.d);
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::InvalidParam(e.to_string()))?;
    let mut high_values = Vec::with_capacity(n);
    let mut low = BTreeMap::new();
    let mut high = BTreeMap::new();
    for r in 0..n {
        let row = &x[r * cfg.d..(r + 1) * cfg.d];
        let yl = low_fidelity(row);
        let yh = yl + correction(cfg.correction, row) + noise.sample(rng);
        high_values.push(yh);
        if r < cfg.n_high {
            high.insert(r, Label::Real(yh));
        }
        if r < shared || r >= cfg.n_high {
            low.insert(r, Label::Real(yl));
        }
    }
    let mut tasks = Vec::new();
    let mut labels = Vec::new();
    if cfg.n_low > 0 {
        tasks.push(TaskSpec::real(LOW_TASK));
        labels.push(low);
    }
    if cfg.n_high > 0 {
        tasks.push(TaskSpec::real(HIGH_TASK));
        labels.push(high);
    }
    let names = (1..=cfg.d).map(|i| format!("x{i}")).collect();
    Ok((Dataset::new(ids(n), names, x, tasks, labels)?, high_values))
}

pub fn gen_multifidelity(cfg: &SynthConfig) -> Result<Dataset> {
    let mut rng = seed::rng(cfg.seed);
    Ok(multifidelity_parts(cfg, &mut rng)?.0)
}

/// Upper edges of the quantile bins (the last bin is open).
pub fn quantile_edges(values: &[f64], bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    (1..bins).map(|k| sorted[k * sorted.len() / bins]).collect()
}

pub fn bin_of(edges: &[f64], v: f64) -> usize {
    edges.iter().take_while(|&&e| v >= e).count()
}

pub fn gen_threshold_class(cfg: &SynthConfig) -> Result<Dataset> {
    if cfg.n_class < N_CLASSES * MIN_CLASS_COUNT {
        return Err(Error::InvalidParam(format!(
            "need at least {} class labels for {N_CLASSES} classes of {MIN_CLASS_COUNT}",
            N_CLASSES * MIN_CLASS_COUNT
        )));
    }
    let mut rng = seed::rng(cfg.seed);
    let (ds, high_values) = multifidelity_parts(cfg, &mut rng)?;
    let n = ds.n_rows();
    if cfg.n_class > n {
        return Err(Error::InvalidParam(format!("{} class labels requested for {n} rows", cfg.n_class)));
    }
    let edges = quantile_edges(&high_values, N_CLASSES);
    let classes: Vec<usize> = high_values.iter().map(|&v| bin_of(&edges, v)).collect();
    for _ in 0..10_000 {
        let rows = index::sample(&mut rng, n, cfg.n_class).into_vec();
        let mut counts = [0usize; N_CLASSES];
        for &r in &rows {
            counts[classes[r]] += 1;
        }
        if counts.iter().all(|&c| c >= MIN_CLASS_COUNT) {
            let labels = rows.iter().map(|&r| (r, Label::Class(classes[r]))).collect();
            let spec = TaskSpec::categorical(CLASS_TASK, (0..N_CLASSES).map(|c| format!("c{c}")));
            return ds.with_task(spec, labels);
        }
    }
    Err(Error::InvalidParam("could not draw class labels with every class populated".into()))
}

/// `e2` rows are `0..n_high`; the first `round(overlap * n_high)` of them
/// and all rows from `n_high` on carry `e1`; `e3` rows are `0..n_third`.
pub fn gen_correlated_energies(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let shared = cfg.shared();
    let n = (cfg.n_low + cfg.n_high - shared).max(cfg.n_third);
    let mut rng = seed::rng(cfg.seed);
    let x = features(&mut rng, n, cfg.d);
    let mut labels = vec![BTreeMap::new(), BTreeMap::new(), BTreeMap::new()];
    let mut e1_count = 0;
    for r in 0..n {
        let e = energies(&x[r * cfg.d..(r + 1) * cfg.d], cfg.noise_std);
        if (r < shared || r >= cfg.n_high) && e1_count < cfg.n_low {
            labels[0].insert(r, Label::Real(e[0]));
            e1_count += 1;
        }
        if r < cfg.n_high {
            labels[1].insert(r, Label::Real(e[1]));
        }
        if r < cfg.n_third {
            labels[2].insert(r, Label::Real(e[2]));
        }
    }
    let names = (1..=cfg.d).map(|i| format!("x{i}")).collect();
    let tasks = ENERGY_TASKS.iter().map(|t| TaskSpec::real(*t)).collect();
    Dataset::new(ids(n), names, x, tasks, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composite::{composite_ground_truth, CompositeRule, CompositeTaskSpec};

    fn shared_rows(ds: &Dataset) -> Vec<(usize, f64, f64)> {
        let l = ds.task_index(LOW_TASK).unwrap();
        let h = ds.task_index(HIGH_TASK).unwrap();
        ds.labels(h)
            .iter()
            .filter_map(|(&r, y)| Some((r, ds.label(r, l)?.as_real()?, y.as_real()?)))
            .collect()
    }

    #[test]
    fn noise_free_difference_is_the_correction() {
        let ds = gen_multifidelity(&SynthConfig::multifidelity(100, 40, 3).with_noise(0.0)).unwrap();
        let rows = shared_rows(&ds);
        assert_eq!(rows.len(), 40);
        for (r, yl, yh) in rows {
            // exact up to the rounding of one addition and one subtraction
            assert!((yh - yl - correction(Correction::Affine, ds.row(r))).abs() <= 4.0 * f64::EPSILON * yh.abs().max(1.0));
        }
    }

    #[test]
    fn label_counts_and_overlap() {
        let cfg = SynthConfig::multifidelity(100, 40, 3).with_overlap(0.5);
        let ds = gen_multifidelity(&cfg).unwrap();
        assert_eq!(ds.n_rows(), 120);
        assert_eq!(ds.label_count(ds.task_index(LOW_TASK).unwrap()), 100);
        assert_eq!(ds.label_count(ds.task_index(HIGH_TASK).unwrap()), 40);
        assert_eq!(shared_rows(&ds).len(), 20);
        assert!(gen_multifidelity(&SynthConfig::multifidelity(10, 40, 3)).is_err());
    }

    #[test]
    fn same_seed_same_data() {
        for cfg in [
            SynthConfig::multifidelity(50, 20, 1),
            SynthConfig::threshold_class(120, 60, 1),
            SynthConfig::correlated_energies([60, 20, 15], 1),
        ] {
            assert_eq!(cfg.generate().unwrap(), cfg.generate().unwrap());
            let other = SynthConfig { seed: 2, ..cfg.clone() };
            assert_ne!(cfg.generate().unwrap(), other.generate().unwrap());
        }
    }

    #[test]
    fn residual_variance_matches_noise() {
        let cfg = SynthConfig::multifidelity(1000, 1000, 5).with_noise(0.3);
        let ds = gen_multifidelity(&cfg).unwrap();
        let res: Vec<f64> = shared_rows(&ds)
            .iter()
            .map(|&(r, yl, yh)| yh - yl - correction(Correction::Affine, ds.row(r)))
            .collect();
        let m = res.iter().sum::<f64>() / res.len() as f64;
        let var = res.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (res.len() - 1) as f64;
        assert!((var / 0.09 - 1.0).abs() < 0.2, "{var}");
    }

    #[test]
    fn zero_correction_leaves_pure_noise() {
        let cfg = SynthConfig::multifidelity(500, 500, 6)
            .with_noise(0.1)
            .with_correction(Correction::Zero);
        let ds = gen_multifidelity(&cfg).unwrap();
        let d: Vec<f64> = shared_rows(&ds).iter().map(|&(_, l, h)| h - l).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        assert!(mean.abs() < 3.0 * 0.1 / (d.len() as f64).sqrt());
    }

    #[test]
    fn classes_follow_high_fidelity_bins() {
        let cfg = SynthConfig::threshold_class(374, 60, 7);
        let ds = gen_threshold_class(&cfg).unwrap();
        let c = ds.task_index(CLASS_TASK).unwrap();
        let h = ds.task_index(HIGH_TASK).unwrap();
        assert_eq!(ds.label_count(c), 60);
        assert_eq!(ds.label_count(h), 374);
        let mut counts = [0; N_CLASSES];
        let mut pairs = Vec::new();
        for (&r, l) in ds.labels(c) {
            let class = l.as_class().unwrap();
            counts[class] += 1;
            pairs.push((ds.label(r, h).unwrap().as_real().unwrap(), class));
        }
        assert!(counts.iter().all(|&n| n >= MIN_CLASS_COUNT), "{counts:?}");
        // a pure, monotone function of y_high
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1));
        assert!(gen_threshold_class(&SynthConfig::threshold_class(374, 20, 7)).is_err());
    }

    #[test]
    fn bins() {
        let edges = quantile_edges(&[5.0, 1.0, 3.0, 2.0, 4.0, 6.0], 3);
        assert_eq!(edges, vec![3.0, 5.0]);
        assert_eq!(bin_of(&edges, 2.9), 0);
        assert_eq!(bin_of(&edges, 3.0), 1);
        assert_eq!(bin_of(&edges, 9.0), 2);
    }

    #[test]
    fn energy_counts_and_scaling_relations() {
        let ds = gen_correlated_energies(&SynthConfig::correlated_energies([333, 54, 50], 4).with_noise(0.0)).unwrap();
        let counts: Vec<usize> = (0..3).map(|t| ds.label_count(t)).collect();
        assert_eq!(counts, vec![333, 54, 50]);
        for r in 0..ds.n_rows() {
            let e: Vec<Option<f64>> = (0..3).map(|t| ds.label(r, t).and_then(Label::as_real)).collect();
            if let (Some(e1), Some(e2)) = (e[0], e[1]) {
                assert_eq!(e2, 0.4 * e1 + 1.2);
            }
            if let (Some(e1), Some(e3)) = (e[0], e[2]) {
                assert_eq!(e3, 1.8 * e1 - 0.8);
            }
        }
        let spec = CompositeTaskSpec::new("rds", &ENERGY_TASKS, CompositeRule::ArgMin);
        let truth = composite_ground_truth(&ds, &spec).unwrap();
        assert_eq!(truth.len(), 50);
        let mut seen = [false; 3];
        for (&r, &c) in &truth {
            let e = energies(ds.row(r), 0.0);
            assert_eq!(c, spec.select(&e));
            seen[c] = true;
        }
        assert!(seen.iter().filter(|&&s| s).count() >= 2, "composite should not be constant");
    }
}
