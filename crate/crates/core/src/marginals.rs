//! Per-column empirical marginals.
//!
//! Each column is mapped to a uniform score `u` in `(0, 1)` through a
//! privatized empirical CDF, then to a latent `z = Φ⁻¹(u)`. Observed values
//! occupy `(0, 1 − f_nan)` and the top interval `(1 − f_nan, 1)` encodes a
//! missing cell. Discrete values (integers and categories) are dequantized:
//! a value owning CDF interval `(F(x⁻), F(x)]` maps to a uniform draw inside
//! it. The inverse maps a latent back through `Φ` and the stored anchor.
//!
//! At fit time continuous columns are scored against the exact empirical
//! CDF of the training values ([`fit_transform`]); the released anchor is
//! the privatized histogram, or the sorted values themselves when no noise
//! is applied.

use serde::{Deserialize, Serialize};

use crate::numkernels::{laplace, phi, phi_inv, Epsilon, Rng, U_CLAMP};
use crate::table::{Cell, Column, ColumnKind, ColumnSchema};
use crate::{Error, Result};

const MIN_BINS: usize = 16;
const MAX_BINS: usize = 512;

/// Histogram-anchored marginal for a real-valued column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousMarginal {
    /// `K + 1` ascending edges spanning the observed range. A constant
    /// column has the two equal edges `[c, c]`.
    pub bin_edges: Vec<f64>,
    /// Privatized mass per bin; sums to `1 − f_nan`.
    pub bin_mass: Vec<f64>,
    /// Prefix sums of `bin_mass` with a leading zero (`K + 1` values).
    pub cum_mass: Vec<f64>,
    /// Sorted observed values, kept only for noiseless fits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sorted_values: Option<Vec<f64>>,
    pub f_nan: f64,
}

/// Marginal over the distinct observed integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegerMarginal {
    pub support: Vec<i64>,
    pub noisy_pmf: Vec<f64>,
    /// Prefix sums of `noisy_pmf` with a leading zero.
    pub cum_mass: Vec<f64>,
    pub f_nan: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalMarginal {
    pub categories: Vec<String>,
    pub noisy_mass: Vec<f64>,
    /// Prefix sums of `noisy_mass` with a leading zero.
    pub cum_mass: Vec<f64>,
    pub f_nan: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MarginalModel {
    Continuous(ContinuousMarginal),
    Integer(IntegerMarginal),
    Categorical(CategoricalMarginal),
}

/// One observation handed to the forward transform. Categories are indices
/// into the model's own category list.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Obs {
    Missing,
    Real(f64),
    Int(i64),
    Category(usize),
}

/// Adds Lap(1/ε) noise to every count. Returns the raw perturbed counts
/// (before clipping), or the counts unchanged when ε is infinite.
pub fn perturb_counts(counts: &[f64], epsilon: Epsilon, rng: &mut Rng) -> Result<Vec<f64>> {
    match epsilon.laplace_scale(1.0) {
        None => Ok(counts.to_vec()),
        Some(b) => counts.iter().map(|&c| Ok(c + laplace(rng, b)?)).collect(),
    }
}

/// Perturbs, clips at zero and rescales the counts to total `share`.
fn privatized_mass(counts: &[f64], epsilon: Epsilon, share: f64, rng: &mut Rng, column: &str) -> Result<Vec<f64>> {
    let mut noisy = perturb_counts(counts, epsilon, rng)?;
    for c in noisy.iter_mut() {
        *c = c.max(0.0);
    }
    let total: f64 = noisy.iter().sum();
    if !(total > 0.0) {
        log::warn!(
            "column `{column}`: every privatized count is zero; falling back to uniform mass over {} cells",
            noisy.len()
        );
        noisy.iter_mut().for_each(|c| *c = 1.0);
        let k = noisy.len() as f64;
        return Ok(noisy.iter().map(|_| share / k).collect());
    }
    Ok(noisy.iter().map(|c| c / total * share).collect())
}

fn prefix_sums(mass: &[f64], share: f64) -> Vec<f64> {
    let mut cum = Vec::with_capacity(mass.len() + 1);
    let mut acc = 0.0;
    cum.push(0.0);
    for m in mass {
        acc += m;
        cum.push(acc);
    }
    // Pin the end point so rounding never leaks into the missing interval.
    *cum.last_mut().unwrap() = share;
    cum
}

/// Index `k` of the interval `(cum[k], cum[k+1]]` containing `u`.
fn interval_of(cum: &[f64], u: f64) -> usize {
    let k = cum[1..].partition_point(|&c| c < u);
    k.min(cum.len() - 2)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Histogram bin count: the Freedman–Diaconis estimate (or `⌈√n⌉` when the
/// IQR is zero), clamped to `[16, 512]`.
pub fn bin_count(sorted: &[f64]) -> usize {
    let n = sorted.len();
    let range = sorted[n - 1] - sorted[0];
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let raw = if iqr > 0.0 {
        let width = 2.0 * iqr / (n as f64).cbrt();
        (range / width).ceil()
    } else {
        (n as f64).sqrt().ceil()
    };
    (raw as usize).clamp(MIN_BINS, MAX_BINS)
}

/// Empirical CDF score of `x` against `sorted`, dequantizing ties: a value
/// occupying ranks `lo..hi` maps uniformly into `(lo/N, hi/N]`. Values not
/// in `sorted` land on the boundary between their neighbours.
fn ecdf_score(sorted: &[f64], x: f64, rng: &mut Rng) -> f64 {
    let n = sorted.len() as f64;
    let lo = sorted.partition_point(|&v| v < x);
    let hi = lo + sorted[lo..].partition_point(|&v| v <= x);
    let r = rng.uniform();
    (hi as f64 - r * (hi - lo) as f64) / n
}

fn clamp_u(u: f64) -> f64 {
    u.clamp(U_CLAMP, 1.0 - U_CLAMP)
}

impl ContinuousMarginal {
    fn is_constant(&self) -> bool {
        self.bin_edges[0] == self.bin_edges[self.bin_edges.len() - 1]
    }

    fn bin_of(&self, x: f64) -> usize {
        let k = self.bin_mass.len();
        let lo = self.bin_edges[0];
        let hi = self.bin_edges[k];
        (((x - lo) / (hi - lo) * k as f64).floor().max(0.0) as usize).min(k - 1)
    }

    fn fit(values: &mut Vec<f64>, f_nan: f64, epsilon: Epsilon, rng: &mut Rng, name: &str) -> Result<Self> {
        values.sort_by(f64::total_cmp);
        let share = 1.0 - f_nan;
        let (lo, hi) = (values[0], values[values.len() - 1]);
        if lo == hi {
            let bin_mass = privatized_mass(&[values.len() as f64], epsilon, share, rng, name)?;
            return Ok(Self {
                bin_edges: vec![lo, hi],
                cum_mass: prefix_sums(&bin_mass, share),
                bin_mass,
                sorted_values: epsilon.is_infinite().then(|| values.clone()),
                f_nan,
            });
        }
        let k = bin_count(values);
        let mut bin_edges: Vec<f64> = (0..=k).map(|i| lo + (hi - lo) * i as f64 / k as f64).collect();
        bin_edges[k] = hi;
        let mut model = Self { bin_edges, bin_mass: vec![0.0; k], cum_mass: Vec::new(), sorted_values: None, f_nan };
        let mut counts = vec![0.0; k];
        for &x in values.iter() {
            counts[model.bin_of(x)] += 1.0;
        }
        model.bin_mass = privatized_mass(&counts, epsilon, share, rng, name)?;
        model.cum_mass = prefix_sums(&model.bin_mass, share);
        if epsilon.is_infinite() {
            model.sorted_values = Some(std::mem::take(values));
        }
        Ok(model)
    }

    fn forward(&self, x: f64, rng: &mut Rng) -> f64 {
        if let Some(sorted) = &self.sorted_values {
            return (1.0 - self.f_nan) * ecdf_score(sorted, x, rng);
        }
        if self.is_constant() {
            return self.bin_mass[0] * rng.uniform_open();
        }
        let k = self.bin_mass.len();
        if x <= self.bin_edges[0] {
            return 0.0;
        }
        if x >= self.bin_edges[k] {
            return self.cum_mass[k];
        }
        let b = self.bin_of(x);
        let (e0, e1) = (self.bin_edges[b], self.bin_edges[b + 1]);
        let frac = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
        self.cum_mass[b] + self.bin_mass[b] * frac
    }

    fn inverse(&self, u: f64) -> f64 {
        if self.is_constant() {
            return self.bin_edges[0];
        }
        if let Some(sorted) = &self.sorted_values {
            // Order statistic owning the rank cell ((i)/N, (i+1)/N].
            let t = (u / (1.0 - self.f_nan)).clamp(0.0, 1.0);
            let n = sorted.len();
            let i = ((t * n as f64).ceil() as usize).clamp(1, n) - 1;
            return sorted[i];
        }
        let b = interval_of(&self.cum_mass, u);
        let (e0, e1) = (self.bin_edges[b], self.bin_edges[b + 1]);
        let mass = self.bin_mass[b];
        if mass <= 0.0 {
            return e0;
        }
        let frac = ((u - self.cum_mass[b]) / mass).clamp(0.0, 1.0);
        e0 + frac * (e1 - e0)
    }
}

impl IntegerMarginal {
    fn fit(values: &mut [i64], f_nan: f64, epsilon: Epsilon, rng: &mut Rng, name: &str) -> Result<Self> {
        values.sort_unstable();
        let mut support = Vec::new();
        let mut counts = Vec::new();
        for &v in values.iter() {
            if support.last() == Some(&v) {
                *counts.last_mut().unwrap() += 1.0;
            } else {
                support.push(v);
                counts.push(1.0);
            }
        }
        let share = 1.0 - f_nan;
        let noisy_pmf = privatized_mass(&counts, epsilon, share, rng, name)?;
        Ok(Self { support, cum_mass: prefix_sums(&noisy_pmf, share), noisy_pmf, f_nan })
    }

    fn forward(&self, x: i64, rng: &mut Rng) -> f64 {
        let r = rng.uniform();
        match self.support.binary_search(&x) {
            Ok(i) => self.cum_mass[i + 1] - r * self.noisy_pmf[i],
            // Unseen integer: the CDF boundary between its neighbours.
            Err(i) => self.cum_mass[i],
        }
    }

    fn inverse(&self, u: f64) -> i64 {
        self.support[interval_of(&self.cum_mass, u)]
    }
}

impl CategoricalMarginal {
    fn fit(
        codes: &[usize],
        categories: &[String],
        f_nan: f64,
        epsilon: Epsilon,
        rng: &mut Rng,
        name: &str,
    ) -> Result<Self> {
        let mut counts = vec![0.0; categories.len()];
        for &c in codes {
            counts[c] += 1.0;
        }
        let share = 1.0 - f_nan;
        let noisy_mass = privatized_mass(&counts, epsilon, share, rng, name)?;
        Ok(Self { categories: categories.to_vec(), cum_mass: prefix_sums(&noisy_mass, share), noisy_mass, f_nan })
    }

    fn forward(&self, code: usize, rng: &mut Rng) -> f64 {
        let r = rng.uniform();
        self.cum_mass[code + 1] - r * self.noisy_mass[code]
    }

    fn inverse(&self, u: f64) -> usize {
        interval_of(&self.cum_mass, u)
    }
}

/// Fits the privatized marginal of one column. Counts (histogram bins,
/// integer values or categories) receive Lap(1/ε_m) noise, are clipped at
/// zero and renormalized to `1 − f_nan`; `f_nan` is the exact missing share.
pub fn fit_marginal(
    schema: &ColumnSchema,
    column: &Column,
    epsilon_m: Epsilon,
    rng: &mut Rng,
) -> Result<MarginalModel> {
    let n = column.len();
    let missing = column.missing_count();
    if missing == n {
        return Err(Error::Schema(format!("column `{}` has no observed values", schema.name)));
    }
    if column.kind() != schema.kind {
        return Err(Error::Schema(format!("column `{}` data does not match its {} schema", schema.name, schema.kind)));
    }
    let f_nan = missing as f64 / n as f64;
    let name = schema.name.as_str();
    Ok(match column {
        Column::Continuous(v) => {
            let mut values: Vec<f64> = v.iter().flatten().copied().collect();
            MarginalModel::Continuous(ContinuousMarginal::fit(&mut values, f_nan, epsilon_m, rng, name)?)
        }
        Column::Integer(v) => {
            let mut values: Vec<i64> = v.iter().flatten().copied().collect();
            MarginalModel::Integer(IntegerMarginal::fit(&mut values, f_nan, epsilon_m, rng, name)?)
        }
        Column::Categorical(v) => {
            let codes: Vec<usize> = v.iter().flatten().map(|&c| c as usize).collect();
            MarginalModel::Categorical(CategoricalMarginal::fit(
                &codes,
                &schema.categories,
                f_nan,
                epsilon_m,
                rng,
                name,
            )?)
        }
    })
}

/// Fits the marginal and returns it with the column's latent scores. A
/// continuous column is scored against the exact empirical CDF of its own
/// values (randomized over ties) rather than the privatized histogram; the
/// scores stay on the fit side and only the marginal is released.
pub fn fit_transform(
    schema: &ColumnSchema,
    column: &Column,
    epsilon_m: Epsilon,
    fit_rng: &mut Rng,
    score_rng: &mut Rng,
) -> Result<(MarginalModel, Vec<f64>)> {
    let model = fit_marginal(schema, column, epsilon_m, fit_rng)?;
    let z = match (&model, column) {
        (MarginalModel::Continuous(m), Column::Continuous(v)) if m.sorted_values.is_none() => {
            let mut sorted: Vec<f64> = v.iter().flatten().copied().collect();
            sorted.sort_by(f64::total_cmp);
            let exact = MarginalModel::Continuous(ContinuousMarginal { sorted_values: Some(sorted), ..m.clone() });
            exact.forward_z(schema, column, score_rng)?
        }
        _ => model.forward_z(schema, column, score_rng)?,
    };
    Ok((model, z))
}

impl MarginalModel {
    pub fn kind(&self) -> ColumnKind {
        match self {
            MarginalModel::Continuous(_) => ColumnKind::Continuous,
            MarginalModel::Integer(_) => ColumnKind::Integer,
            MarginalModel::Categorical(_) => ColumnKind::Categorical,
        }
    }

    pub fn f_nan(&self) -> f64 {
        match self {
            MarginalModel::Continuous(m) => m.f_nan,
            MarginalModel::Integer(m) => m.f_nan,
            MarginalModel::Categorical(m) => m.f_nan,
        }
    }

    /// CDF anchor with its leading zero.
    pub fn cum_mass(&self) -> &[f64] {
        match self {
            MarginalModel::Continuous(m) => &m.cum_mass,
            MarginalModel::Integer(m) => &m.cum_mass,
            MarginalModel::Categorical(m) => &m.cum_mass,
        }
    }

    fn observed_share(&self) -> f64 {
        1.0 - self.f_nan()
    }

    fn forward_obs(&self, obs: Obs, rng: &mut Rng) -> f64 {
        let u = match (self, obs) {
            (_, Obs::Missing) => {
                let f = self.f_nan();
                self.observed_share() + f * rng.uniform_open()
            }
            (MarginalModel::Continuous(m), Obs::Real(x)) => m.forward(x, rng),
            (MarginalModel::Continuous(m), Obs::Int(x)) => m.forward(x as f64, rng),
            (MarginalModel::Integer(m), Obs::Int(x)) => m.forward(x, rng),
            (MarginalModel::Categorical(m), Obs::Category(c)) => m.forward(c, rng),
            _ => unreachable!("observation kind checked by callers"),
        };
        clamp_u(u)
    }

    /// Uniform score of one cell.
    pub fn forward_u(&self, cell: &Cell, rng: &mut Rng) -> Result<f64> {
        let obs = match (self, cell) {
            (_, Cell::Missing) => Obs::Missing,
            (MarginalModel::Continuous(_), Cell::Real(x)) => Obs::Real(*x),
            (MarginalModel::Continuous(_) | MarginalModel::Integer(_), Cell::Int(x)) => Obs::Int(*x),
            (MarginalModel::Categorical(m), Cell::Label(l)) => Obs::Category(
                m.categories
                    .iter()
                    .position(|c| c == l)
                    .ok_or_else(|| Error::Domain(format!("category `{l}` was not seen at fit time")))?,
            ),
            (model, cell) => {
                return Err(Error::Domain(format!("cell {cell:?} does not match a {} marginal", model.kind())));
            }
        };
        Ok(self.forward_obs(obs, rng))
    }

    /// Latent scores `Φ⁻¹(u)` for a whole column.
    pub fn forward_z(&self, schema: &ColumnSchema, column: &Column, rng: &mut Rng) -> Result<Vec<f64>> {
        let to_z = |u: f64| phi_inv(u).expect("u is clamped into (0, 1)");
        match (self, column) {
            (MarginalModel::Continuous(_), Column::Continuous(v)) => {
                Ok(v.iter().map(|x| to_z(self.forward_obs(x.map_or(Obs::Missing, Obs::Real), rng))).collect())
            }
            (MarginalModel::Continuous(_) | MarginalModel::Integer(_), Column::Integer(v)) => {
                Ok(v.iter().map(|x| to_z(self.forward_obs(x.map_or(Obs::Missing, Obs::Int), rng))).collect())
            }
            (MarginalModel::Categorical(m), Column::Categorical(v)) => {
                let remap: Vec<Option<usize>> =
                    schema.categories.iter().map(|l| m.categories.iter().position(|c| c == l)).collect();
                v.iter()
                    .map(|code| {
                        let obs = match code {
                            None => Obs::Missing,
                            Some(c) => Obs::Category(remap[*c as usize].ok_or_else(|| {
                                Error::Domain(format!(
                                    "category `{}` of column `{}` was not seen at fit time",
                                    schema.categories[*c as usize], schema.name
                                ))
                            })?),
                        };
                        Ok(to_z(self.forward_obs(obs, rng)))
                    })
                    .collect()
            }
            _ => Err(Error::Domain(format!(
                "column `{}` holds {} data but the marginal is {}",
                schema.name,
                column.kind(),
                self.kind()
            ))),
        }
    }

    /// Maps one latent back to a cell.
    pub fn inverse(&self, z: f64) -> Cell {
        let u = phi(z);
        if u > self.observed_share() {
            return Cell::Missing;
        }
        match self {
            MarginalModel::Continuous(m) => Cell::Real(m.inverse(u)),
            MarginalModel::Integer(m) => Cell::Int(m.inverse(u)),
            MarginalModel::Categorical(m) => Cell::Label(m.categories[m.inverse(u)].clone()),
        }
    }

    /// Maps a latent column back to table storage (category codes follow
    /// the model's category order).
    pub fn inverse_column(&self, z: &[f64]) -> Column {
        let share = self.observed_share();
        let us = z.iter().map(|&z| phi(z)).map(move |u| (u <= share).then_some(u));
        match self {
            MarginalModel::Continuous(m) => Column::Continuous(us.map(|u| u.map(|u| m.inverse(u))).collect()),
            MarginalModel::Integer(m) => Column::Integer(us.map(|u| u.map(|u| m.inverse(u))).collect()),
            MarginalModel::Categorical(m) => Column::Categorical(us.map(|u| u.map(|u| m.inverse(u) as u32)).collect()),
        }
    }

    /// Structural checks used when a model is loaded from disk.
    pub fn validate(&self, name: &str) -> Result<()> {
        let bad = |what: &str| Err(Error::Schema(format!("marginal for `{name}`: {what}")));
        let f = self.f_nan();
        if !(0.0..1.0).contains(&f) {
            return bad("missing fraction outside [0, 1)");
        }
        let (mass, cum) = match self {
            MarginalModel::Continuous(m) => {
                if m.bin_edges.len() != m.bin_mass.len() + 1 || m.bin_edges.windows(2).any(|w| !(w[0] <= w[1])) {
                    return bad("bin edges malformed");
                }
                if matches!(&m.sorted_values, Some(v) if v.is_empty()) {
                    return bad("empty value anchor");
                }
                (&m.bin_mass, &m.cum_mass)
            }
            MarginalModel::Integer(m) => {
                if m.support.len() != m.noisy_pmf.len() || m.support.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("integer support malformed");
                }
                (&m.noisy_pmf, &m.cum_mass)
            }
            MarginalModel::Categorical(m) => {
                if m.categories.len() != m.noisy_mass.len() {
                    return bad("category list and masses differ in length");
                }
                (&m.noisy_mass, &m.cum_mass)
            }
        };
        if mass.is_empty() || cum.len() != mass.len() + 1 || mass.iter().any(|m| !(*m >= 0.0)) {
            return bad("masses malformed");
        }
        if cum.windows(2).any(|w| !(w[0] <= w[1])) || (cum[cum.len() - 1] - (1.0 - f)).abs() > 1e-9 {
            return bad("cumulative masses malformed");
        }
        Ok(())
    }
}
