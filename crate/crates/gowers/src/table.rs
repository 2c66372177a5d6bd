//! Dense function tables on a product group and generators for test instances.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::group::{GroupSpec, Point};
use crate::poly::Polynomial;

/// Slack allowed on the unit-disc constraint.
pub const DISC_TOL: f64 = 1e-9;

/// Identifier of the pseudo-random generator behind every `seed` argument.
pub const RNG_ALGORITHM: &str = "chacha8/rand_chacha-0.3";

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A function `G -> D` stored in index order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct FunctionTable {
    group: GroupSpec,
    values: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct RawTable {
    group: GroupSpec,
    values: Vec<[f64; 2]>,
}

impl TryFrom<RawTable> for FunctionTable {
    type Error = Error;
    fn try_from(raw: RawTable) -> Result<Self> {
        let values = raw.values.iter().map(|v| Complex64::new(v[0], v[1])).collect();
        FunctionTable::new(raw.group, values)
    }
}

impl From<FunctionTable> for RawTable {
    fn from(t: FunctionTable) -> Self {
        RawTable { group: t.group, values: pairs(&t.values) }
    }
}

pub(crate) fn pairs(values: &[Complex64]) -> Vec<[f64; 2]> {
    values.iter().map(|v| [v.re, v.im]).collect()
}

impl FunctionTable {
    /// Checks length and the `|v| <= 1` constraint.
    pub fn new(group: GroupSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != group.order() {
            return Err(Error::input(format!(
                "table has {} values, group order is {}",
                values.len(),
                group.order()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.norm() <= 1.0 + DISC_TOL)) {
            return Err(Error::input(format!("value {v} at index {i} lies outside the unit disc")));
        }
        Ok(FunctionTable { group, values })
    }

    /// Builds a table without the disc check; callers guarantee boundedness.
    pub(crate) fn from_raw(group: GroupSpec, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), group.order());
        FunctionTable { group, values }
    }

    pub fn from_fn(group: &GroupSpec, f: impl Fn(usize) -> Complex64 + Sync + Send) -> Result<Self> {
        let values = (0..group.order()).into_par_iter().map(f).collect();
        FunctionTable::new(group.clone(), values)
    }

    pub fn constant(group: &GroupSpec, c: Complex64) -> Result<Self> {
        FunctionTable::new(group.clone(), vec![c; group.order()])
    }

    pub fn ones(group: &GroupSpec) -> Self {
        FunctionTable::from_raw(group.clone(), vec![Complex64::new(1.0, 0.0); group.order()])
    }

    pub fn zeros(group: &GroupSpec) -> Self {
        FunctionTable::from_raw(group.clone(), vec![Complex64::new(0.0, 0.0); group.order()])
    }

    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    #[inline]
    pub fn get(&self, idx: usize) -> Complex64 {
        self.values[idx]
    }

    pub fn at(&self, x: &Point) -> Result<Complex64> {
        Ok(self.values[self.group.index_of(x)?])
    }

    pub fn same_group(&self, other: &FunctionTable) -> Result<()> {
        if self.group != other.group {
            return Err(Error::mismatch(format!(
                "tables live on different groups ({:?} vs {:?})",
                self.group.dims(),
                other.group.dims()
            )));
        }
        Ok(())
    }

    pub fn conj(&self) -> FunctionTable {
        FunctionTable::from_raw(self.group.clone(), self.values.iter().map(|v| v.conj()).collect())
    }

    /// Pointwise product.
    pub fn mul(&self, other: &FunctionTable) -> Result<FunctionTable> {
        self.same_group(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Ok(FunctionTable::from_raw(self.group.clone(), values))
    }

    /// Multiplies by `ω^{phase(x)}` for an `F_p`-valued table.
    pub fn twist(&self, phase: &[u32]) -> FunctionTable {
        let g = &self.group;
        let values = self.values.iter().zip(phase).map(|(v, &t)| v * g.omega(t)).collect();
        FunctionTable::from_raw(g.clone(), values)
    }

    /// `E_x f(x)`.
    pub fn mean(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() / self.values.len() as f64
    }

    /// `E_x f(x) conj g(x)`.
    pub fn inner(&self, other: &FunctionTable) -> Result<Complex64> {
        self.same_group(other)?;
        let s: Complex64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum();
        Ok(s / self.values.len() as f64)
    }

    /// `(E |f|^2)^{1/2}`.
    pub fn l2(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.values.len() as f64).sqrt()
    }

    pub fn l2_distance(&self, other: &FunctionTable) -> Result<f64> {
        self.same_group(other)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm_sqr()).sum();
        Ok((s / self.values.len() as f64).sqrt())
    }

    pub fn max_abs_diff(&self, other: &FunctionTable) -> Result<f64> {
        self.same_group(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    /// Same values viewed on another group of equal order.
    pub fn regroup(&self, group: &GroupSpec) -> Result<FunctionTable> {
        if group.order() != self.group.order() || group.p() != self.group.p() {
            return Err(Error::mismatch("regrouping needs the same field and order"));
        }
        Ok(FunctionTable::from_raw(group.clone(), self.values.clone()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// `x -> f(x + h) conj f(x)`.
pub fn mult_derivative(f: &FunctionTable, h: &Point) -> Result<FunctionTable> {
    let hi = f.group().index_of(h)?;
    Ok(mult_derivative_idx(f, hi))
}

pub fn mult_derivative_idx(f: &FunctionTable, h: usize) -> FunctionTable {
    let g = f.group();
    let values = (0..g.order()).map(|x| f.get(g.add_idx(x, h)) * f.get(x).conj()).collect();
    FunctionTable::from_raw(g.clone(), values)
}

/// `x -> ω^{P(x)}`.
pub fn gen_polynomial_phase(g: &GroupSpec, poly: &Polynomial) -> Result<FunctionTable> {
    let vals = poly.eval_all(g)?;
    Ok(FunctionTable::from_raw(g.clone(), vals.into_iter().map(|t| g.omega(t)).collect()))
}

/// Independent uniform phases `e^{iθ}`.
pub fn gen_random_unimodular(g: &GroupSpec, seed: u64) -> FunctionTable {
    let mut r = rng(seed);
    let values = (0..g.order())
        .map(|_| Complex64::from_polar(1.0, r.gen_range(0.0..std::f64::consts::TAU)))
        .collect();
    FunctionTable::from_raw(g.clone(), values)
}

/// Independent points uniform in the closed unit disc.
pub fn gen_random_bounded(g: &GroupSpec, seed: u64) -> FunctionTable {
    let mut r = rng(seed);
    let values = (0..g.order())
        .map(|_| {
            let rad: f64 = r.gen::<f64>().sqrt();
            Complex64::from_polar(rad, r.gen_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    FunctionTable::from_raw(g.clone(), values)
}

/// `ω^{P} Π g_i` with each `g_i` a random unimodular function of the blocks other than `i`.
pub fn gen_structured(g: &GroupSpec, poly: &Polynomial, seed: u64) -> Result<FunctionTable> {
    let mut vals = gen_polynomial_phase(g, poly)?.into_values();
    let mut r = rng(seed);
    for i in 0..g.k() {
        let stride = g.block_stride(i);
        let lo = g.block_order(i);
        let rest = g.order() / lo;
        let phases: Vec<Complex64> =
            (0..rest).map(|_| Complex64::from_polar(1.0, r.gen_range(0.0..std::f64::consts::TAU))).collect();
        for (x, v) in vals.iter_mut().enumerate() {
            let y = x % stride + (x / (stride * lo)) * stride;
            *v *= phases[y];
        }
    }
    Ok(FunctionTable::from_raw(g.clone(), vals))
}

/// Independent `p`-th roots of unity.
pub fn gen_random_root_phase(g: &GroupSpec, seed: u64) -> FunctionTable {
    let mut r = rng(seed);
    let values = (0..g.order()).map(|_| g.omega(r.gen_range(0..g.p()))).collect();
    FunctionTable::from_raw(g.clone(), values)
}

/// Indicator of a set of points.
pub fn gen_indicator(g: &GroupSpec, set: &[Point]) -> Result<FunctionTable> {
    let mut values = vec![Complex64::new(0.0, 0.0); g.order()];
    for x in set {
        values[g.index_of(x)?] = Complex64::new(1.0, 0.0);
    }
    Ok(FunctionTable::from_raw(g.clone(), values))
}

/// A unimodular `g̃` with `|E f conj g̃| >= c`, by independent randomized rounding of `g`.
///
/// Each value `v` becomes `±v/|v|` with probabilities `(1 ± |v|)/2` (or `±1` evenly when
/// `v = 0`), so the correlation is preserved in expectation. The best of `retries`
/// draws is kept.
pub fn round_to_unimodular(
    g: &FunctionTable,
    f: &FunctionTable,
    c: f64,
    seed: u64,
    retries: usize,
) -> Result<FunctionTable> {
    g.same_group(f)?;
    let mut r = rng(seed);
    let one = Complex64::new(1.0, 0.0);
    let mut best: Option<(f64, FunctionTable)> = None;
    for _ in 0..retries.max(1) {
        let values: Vec<Complex64> = g
            .values()
            .iter()
            .map(|&v| {
                let m = v.norm();
                let u = if m > 0.0 { v / m } else { one };
                let keep = r.gen::<f64>() < (1.0 + m.min(1.0)) / 2.0;
                if keep {
                    u
                } else {
                    -u
                }
            })
            .collect();
        let cand = FunctionTable::from_raw(g.group().clone(), values);
        let corr = f.inner(&cand)?.norm();
        if best.as_ref().is_none_or(|(b, _)| corr > *b) {
            best = Some((corr, cand));
        }
        if corr >= c - 1e-9 {
            break;
        }
    }
    let (corr, table) = best.expect("at least one draw");
    if corr >= c - 1e-9 {
        Ok(table)
    } else {
        Err(Error::NotFound(format!(
            "rounding reached correlation {corr:.6} after {retries} draws, target {c}"
        )))
    }
}

/// Mean of `k` uniform draws with replacement, and its distance to the true mean.
pub fn sample_average(values: &[Complex64], k: usize, seed: u64) -> Result<(Complex64, f64)> {
    if values.is_empty() {
        return Err(Error::input("cannot sample from an empty sequence"));
    }
    if k == 0 {
        return Err(Error::input("need at least one sample"));
    }
    let truth = values.iter().sum::<Complex64>() / values.len() as f64;
    let mut r = rng(seed);
    let s: Complex64 = (0..k).map(|_| values[r.gen_range(0..values.len())]).sum();
    let est = s / k as f64;
    Ok((est, (est - truth).norm()))
}

/// The `2^k` functions `f_I`, indexed by bitmask (bit `i` is block `i`).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawFamily", into = "RawFamily")]
pub struct CubicalFamily {
    group: GroupSpec,
    tables: Vec<FunctionTable>,
}

#[derive(Serialize, Deserialize)]
struct RawFamily {
    group: GroupSpec,
    tables: BTreeMap<String, Vec<[f64; 2]>>,
}

impl CubicalFamily {
    pub fn new(group: &GroupSpec, tables: Vec<FunctionTable>) -> Result<Self> {
        let want = 1usize << group.k();
        if tables.len() != want {
            return Err(Error::input(format!("family needs {want} tables, got {}", tables.len())));
        }
        for t in &tables {
            if t.group() != group {
                return Err(Error::mismatch("family member on a different group"));
            }
        }
        Ok(CubicalFamily { group: group.clone(), tables })
    }

    /// Every member equal to `f`.
    pub fn uniform(f: &FunctionTable) -> Self {
        let n = 1usize << f.group().k();
        CubicalFamily { group: f.group().clone(), tables: vec![f.clone(); n] }
    }

    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    pub fn k(&self) -> usize {
        self.group.k()
    }

    pub fn get(&self, mask: usize) -> &FunctionTable {
        &self.tables[mask]
    }

    pub fn tables(&self) -> &[FunctionTable] {
        &self.tables
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl From<CubicalFamily> for RawFamily {
    fn from(fam: CubicalFamily) -> Self {
        let tables = fam.tables.iter().enumerate().map(|(m, t)| (m.to_string(), pairs(t.values()))).collect();
        RawFamily { group: fam.group, tables }
    }
}

impl TryFrom<RawFamily> for CubicalFamily {
    type Error = Error;
    fn try_from(raw: RawFamily) -> Result<Self> {
        let n = 1usize << raw.group.k();
        let mut tables = Vec::with_capacity(n);
        for m in 0..n {
            let vals = raw
                .tables
                .get(&m.to_string())
                .ok_or_else(|| Error::input(format!("family is missing mask {m}")))?;
            let values = vals.iter().map(|v| Complex64::new(v[0], v[1])).collect();
            tables.push(FunctionTable::new(raw.group.clone(), values)?);
        }
        CubicalFamily::new(&raw.group, tables)
    }
}
