//! Box, uniformity, directional and mixed norms.
//!
//! Multiplicative derivatives keep the top vertex unconjugated:
//! `∂_{h_1..h_r} f(x) = Π_{ω ⊆ [r]} Conj^{r-|ω|} f(x + Σ_{i∈ω} h_i)`.
//! Conjugating every vertex instead gives the complex conjugate, and every
//! norm below is real, so the convention does not affect values.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Budget, Error, Result};
use crate::group::{GroupSpec, Subspace};
use crate::table::{mult_derivative_idx, FunctionTable};

/// Power averages below `-NEG_TOL` abort instead of being clamped.
pub const NEG_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormResult {
    pub value: f64,
    pub power_average: f64,
    pub imag_residual: f64,
}

impl NormResult {
    /// Takes the `2^r`-th root of a raw average.
    pub fn from_average(avg: Complex64, r: usize) -> Result<Self> {
        let mut pa = avg.re;
        if pa < -NEG_TOL {
            return Err(Error::Numerical(format!("power average {pa:e} is negative")));
        }
        if pa < 0.0 {
            pa = 0.0;
        }
        Ok(NormResult { value: pa.powf(1.0 / (1u64 << r) as f64), power_average: pa, imag_residual: avg.im.abs() })
    }
}

fn block_subspaces(g: &GroupSpec) -> Vec<Subspace> {
    (0..g.k()).map(|b| Subspace::block(g, b)).collect()
}

/// `H = (G_1, ..., G_k, G, ..., G)` with `r` copies of the whole group.
pub fn mixed_directions(g: &GroupSpec, r: usize) -> Vec<Subspace> {
    let mut h = block_subspaces(g);
    h.extend((0..r).map(|_| Subspace::full(g)));
    h
}

fn sum_ordered(v: Vec<Complex64>) -> Complex64 {
    v.into_iter().sum()
}

/// `E_{h_1∈H_1} ... E_{h_r∈H_r} E_x ∂_{h_1..h_r} f(x)` by peeling one direction at a time.
fn directional_average(f: &FunctionTable, dirs: &[Vec<usize>], full_last: bool) -> Complex64 {
    if dirs.is_empty() {
        return f.mean();
    }
    if dirs.len() == 1 && full_last {
        return Complex64::new(f.mean().norm_sqr(), 0.0);
    }
    let parts: Vec<Complex64> = dirs[0]
        .par_iter()
        .map(|&h| directional_average(&mult_derivative_idx(f, h), &dirs[1..], full_last))
        .collect();
    sum_ordered(parts) / dirs[0].len() as f64
}

fn tuple_count(f: &FunctionTable, hs: &[Subspace]) -> u128 {
    hs.iter().fold(f.group().order() as u128, |acc, h| acc.saturating_mul(h.order() as u128))
}

fn check_dirs(f: &FunctionTable, hs: &[Subspace]) -> Result<()> {
    if hs.is_empty() {
        return Err(Error::input("at least one direction subspace is required"));
    }
    for h in hs {
        if h.group() != f.group() {
            return Err(Error::mismatch("direction subspace from a different group"));
        }
    }
    Ok(())
}

/// `‖f‖_{U(H_1..H_r)}` through `‖f‖^{2^r} = E_{h_1} ‖∂_{h_1} f‖_{U(H_2..H_r)}^{2^{r-1}}`.
pub fn directional_norm(f: &FunctionTable, hs: &[Subspace], budget: Budget) -> Result<NormResult> {
    check_dirs(f, hs)?;
    budget.check("directional norm tuples", tuple_count(f, hs))?;
    let dirs: Vec<Vec<usize>> = hs.iter().map(|h| h.indices()).collect();
    let full_last = hs.last().is_some_and(|h| h.order() == f.group().order());
    NormResult::from_average(directional_average(f, &dirs, full_last), hs.len())
}

/// The same average by expanding all `2^r` vertices for every difference tuple.
pub fn directional_norm_direct(f: &FunctionTable, hs: &[Subspace], budget: Budget) -> Result<NormResult> {
    check_dirs(f, hs)?;
    let g = f.group();
    let r = hs.len();
    budget.check("directional norm tuples", tuple_count(f, hs).saturating_mul(1 << r))?;
    let dirs: Vec<Vec<usize>> = hs.iter().map(|h| h.indices()).collect();
    let n_tuples: usize = dirs.iter().map(|d| d.len()).product();
    let parts: Vec<Complex64> = (0..n_tuples)
        .into_par_iter()
        .map(|mut t| {
            let mut hv = Vec::with_capacity(r);
            for d in &dirs {
                hv.push(d[t % d.len()]);
                t /= d.len();
            }
            let mut shifts = vec![0usize; 1 << r];
            for w in 1..(1usize << r) {
                let low = w.trailing_zeros() as usize;
                shifts[w] = g.add_idx(shifts[w & (w - 1)], hv[low]);
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for x in 0..g.order() {
                let mut prod = Complex64::new(1.0, 0.0);
                for (w, &s) in shifts.iter().enumerate() {
                    let v = f.get(g.add_idx(x, s));
                    prod *= if (r - w.count_ones() as usize) % 2 == 1 { v.conj() } else { v };
                }
                acc += prod;
            }
            acc / g.order() as f64
        })
        .collect();
    NormResult::from_average(sum_ordered(parts) / n_tuples as f64, r)
}

/// `‖f‖_{U^k}` on the whole group.
pub fn uniformity_norm(f: &FunctionTable, k: usize, budget: Budget) -> Result<NormResult> {
    if k == 0 {
        return Err(Error::input("k must be at least 1"));
    }
    let hs: Vec<Subspace> = (0..k).map(|_| Subspace::full(f.group())).collect();
    directional_norm(f, &hs, budget)
}

/// `‖f‖_{U(G_1, ..., G_k, G, ..., G)}` with `r` copies of `G`.
pub fn mixed_norm(f: &FunctionTable, r: usize, budget: Budget) -> Result<NormResult> {
    if r == 0 {
        return Err(Error::input("r must be at least 1"));
    }
    directional_norm(f, &mixed_directions(f.group(), r), budget)
}

/// Generalized inner product `E_{h,x} Π_ω Conj^{r-|ω|} f_ω(x + Σ_{i∈ω} h_i)`.
pub fn gcs_inner_product(family: &[FunctionTable], hs: &[Subspace], budget: Budget) -> Result<Complex64> {
    let r = hs.len();
    if family.len() != 1 << r {
        return Err(Error::input(format!("need {} functions for {r} directions, got {}", 1 << r, family.len())));
    }
    let f0 = &family[0];
    for f in family {
        f.same_group(f0)?;
    }
    check_dirs(f0, hs)?;
    let g = f0.group();
    budget.check("inner product tuples", tuple_count(f0, hs).saturating_mul(1 << r))?;
    let dirs: Vec<Vec<usize>> = hs.iter().map(|h| h.indices()).collect();
    let n_tuples: usize = dirs.iter().map(|d| d.len()).product();
    let parts: Vec<Complex64> = (0..n_tuples)
        .into_par_iter()
        .map(|mut t| {
            let mut shifts = vec![0usize; 1 << r];
            let mut hv = Vec::with_capacity(r);
            for d in &dirs {
                hv.push(d[t % d.len()]);
                t /= d.len();
            }
            for w in 1..(1usize << r) {
                let low = w.trailing_zeros() as usize;
                shifts[w] = g.add_idx(shifts[w & (w - 1)], hv[low]);
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for x in 0..g.order() {
                let mut prod = Complex64::new(1.0, 0.0);
                for (w, &s) in shifts.iter().enumerate() {
                    let v = family[w].get(g.add_idx(x, s));
                    prod *= if (r - w.count_ones() as usize) % 2 == 1 { v.conj() } else { v };
                }
                acc += prod;
            }
            acc / g.order() as f64
        })
        .collect();
    Ok(sum_ordered(parts) / n_tuples as f64)
}

/// Box inner product over the block structure: `E_{x,y} Π_I Conj^{k-|I|} f_I(x_I, y_{∖I})`.
pub fn box_inner_product(family: &[FunctionTable], budget: Budget) -> Result<Complex64> {
    let g = family.first().ok_or_else(|| Error::input("empty family"))?.group().clone();
    gcs_inner_product(family, &block_subspaces(&g), budget)
}

/// `‖f‖_{□^k}` over the blocks of `f.group()`.
///
/// Peels the last block: with `F_{s,t}(z) = f(z, s) conj f(z, t)` on the remaining blocks,
/// `‖f‖^{2^k} = E_{s,t} ‖F_{s,t}‖^{2^{k-1}}`, ending at `|E F|²`.
pub fn box_norm(f: &FunctionTable) -> Result<NormResult> {
    let g = f.group();
    let k = g.k();
    let orders: Vec<usize> = (0..k).map(|b| g.block_order(b)).collect();
    let avg = box_rec(f.values(), &orders);
    NormResult::from_average(Complex64::new(avg, 0.0), k)
}

fn box_rec(vals: &[Complex64], orders: &[usize]) -> f64 {
    let k = orders.len();
    if k == 1 {
        return (vals.iter().sum::<Complex64>() / vals.len() as f64).norm_sqr();
    }
    let last = orders[k - 1];
    let inner = vals.len() / last;
    let parts: Vec<f64> = (0..last * last)
        .into_par_iter()
        .map(|st| {
            let (s, t) = (st % last, st / last);
            let slice: Vec<Complex64> = (0..inner).map(|z| vals[z + s * inner] * vals[z + t * inner].conj()).collect();
            if k == 2 {
                (slice.iter().sum::<Complex64>() / inner as f64).norm_sqr()
            } else {
                box_rec(&slice, &orders[..k - 1])
            }
        })
        .collect();
    parts.into_iter().sum::<f64>() / (last * last) as f64
}

/// Box norm from the cube average over all `Π |G_i|²` tuples.
pub fn box_norm_naive(f: &FunctionTable, budget: Budget) -> Result<NormResult> {
    let g = f.group();
    let k = g.k();
    let fam = vec![f.clone(); 1 << k];
    let needed = (g.order() as u128).saturating_pow(2).saturating_mul(1 << k);
    budget.check("box norm tuples", needed)?;
    NormResult::from_average(box_inner_product(&fam, budget)?, k)
}

/// Group of the lifted function: blocks `G_1..G_k` followed by `r - 1` copies of `G`.
pub fn lifted_group(g: &GroupSpec, r: usize, cap: usize) -> Result<GroupSpec> {
    let mut dims = g.dims().to_vec();
    dims.extend(std::iter::repeat_n(g.n(), r.saturating_sub(1)));
    GroupSpec::with_cap(g.p(), dims, cap)
}

/// `f̃(x, y^{(1)}, ..., y^{(r-1)}) = f(x + y^{(1)} + ... + y^{(r-1)})`.
///
/// The mixed norm of `f` with `r` whole-group directions equals the mixed norm of
/// `f̃` with one whole-group direction over the lifted blocks.
pub fn lift_tilde(f: &FunctionTable, r: usize, cap: usize) -> Result<FunctionTable> {
    if r < 1 {
        return Err(Error::input("r must be at least 1"));
    }
    let g = f.group();
    let h = lifted_group(g, r, cap).map_err(|e| match e {
        Error::Budget { needed, cap, .. } => Error::Budget { what: "lifted group order".into(), needed, cap },
        e => e,
    })?;
    let n = g.order();
    let values = (0..h.order())
        .map(|mut idx| {
            let mut z = idx % n;
            idx /= n;
            while idx > 0 {
                z = g.add_idx(z, idx % n);
                idx /= n;
            }
            f.get(z)
        })
        .collect();
    Ok(FunctionTable::from_raw(h, values))
}
