//! Inverse theorem pipeline for `‖f‖_{U(G_1, .., G_k, G⊕ x r)}`.
//!
//! Sign convention: twists are `f ω^μ`, so a planted phase `ω^{μ0}` is recovered as
//! `μ = -μ0`, and a witness for `f = ω^{P0}` carries `P = -P0` up to lower-order terms.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::cubical::{multconv_approx, MultconvOptions, Strategy};
use crate::error::{Budget, Error, Result};
use crate::forms::MultilinearForm;
use crate::group::{GroupSpec, DEFAULT_ORDER_CAP};
use crate::norms::{box_norm, lift_tilde, mixed_norm};
use crate::poly::Polynomial;
use crate::spectrum::{twisted_box_value, ENUMERATION_CAP};
use crate::symmetry::{extract_p_q, psi_order, psi_polynomial, symmetrize};
use crate::table::{mult_derivative_idx, CubicalFamily, FunctionTable};

const TIE_TOL: f64 = 1e-12;
const SMALL_BIAS: f64 = 1e-6;

/// One level of the recursion.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogEntry {
    pub r: usize,
    pub mixed_norm: f64,
    pub psi: Option<MultilinearForm>,
    pub ml_correlation: Option<f64>,
    pub bias_psi_minus_rho: Option<f64>,
    #[serde(rename = "P")]
    pub poly: Polynomial,
}

/// `P`, `g_1..g_k` and `E f ω^P Π g_i`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Witness {
    #[serde(rename = "P")]
    pub poly: Polynomial,
    /// `g_i` on the full group, constant along block `i`.
    pub g: Vec<FunctionTable>,
    pub correlation: Complex64,
    pub r: usize,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default)]
    pub log: Vec<LogEntry>,
}

impl Witness {
    /// Re-checks the degree bound, `|g_i| <= 1`, block constancy and the stored correlation.
    pub fn verify(&self, f: &FunctionTable) -> Result<()> {
        let g = f.group();
        if self.g.len() != g.k() {
            return Err(Error::Verification(format!("{} functions g_i for {} blocks", self.g.len(), g.k())));
        }
        if self.poly.degree() as usize > g.k() + self.r - 1 {
            return Err(Error::Verification(format!("deg P = {} exceeds k + r - 1", self.poly.degree())));
        }
        for (i, gi) in self.g.iter().enumerate() {
            gi.same_group(f)?;
            if gi.values().iter().any(|v| v.norm() > 1.0 + 1e-9) {
                return Err(Error::Verification(format!("g_{i} leaves the unit disc")));
            }
            let keep = full_mask(g.k()) & !(1 << i);
            if (0..g.order()).any(|x| gi.get(x) != gi.get(restrict(g, x, keep))) {
                return Err(Error::Verification(format!("g_{i} depends on block {i}")));
            }
        }
        let c = witness_correlation(f, self)?;
        if (c - self.correlation).norm() > 1e-9 {
            return Err(Error::Verification(format!("stored correlation {} but recomputed {c}", self.correlation)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// A candidate `ψ` with its verified multilinear correlation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PsiCandidate {
    pub psi: MultilinearForm,
    pub ml_correlation: f64,
    pub strategy: PsiStrategy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum R1Strategy {
    Exhaustive,
    Constructive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsiStrategy {
    Exhaustive,
    Lifted,
}

impl FromStr for R1Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(R1Strategy::Exhaustive),
            "constructive" => Ok(R1Strategy::Constructive),
            _ => Err(Error::input(format!("unknown r = 1 strategy {s:?}"))),
        }
    }
}

impl FromStr for PsiStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(PsiStrategy::Exhaustive),
            "lifted" => Ok(PsiStrategy::Lifted),
            _ => Err(Error::input(format!("unknown psi strategy {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InverseConfig {
    pub r1: R1Strategy,
    pub psi: PsiStrategy,
    /// Inputs with a smaller mixed norm are rejected.
    pub min_norm: f64,
    /// Witnesses whose `|correlation|` falls below this are flagged.
    pub correlation_floor: f64,
    /// Require `p >= k + r` on top of `p >= r + 1`.
    pub strict_characteristic: bool,
    pub budget: Budget,
    pub multconv_strategy: Strategy,
    pub multconv: MultconvOptions,
}

impl Default for InverseConfig {
    fn default() -> Self {
        InverseConfig {
            r1: R1Strategy::Exhaustive,
            psi: PsiStrategy::Exhaustive,
            min_norm: 0.0,
            correlation_floor: 0.0,
            strict_characteristic: true,
            budget: Budget::default(),
            multconv_strategy: Strategy::Exhaustive,
            multconv: MultconvOptions::default(),
        }
    }
}

fn full_mask(k: usize) -> usize {
    (1 << k) - 1
}

/// Index of the point agreeing with `x` on the blocks in `keep` and zero elsewhere.
fn restrict(g: &GroupSpec, x: usize, keep: usize) -> usize {
    (0..g.k()).filter(|b| keep >> b & 1 == 1).map(|b| g.block_index(x, b) * g.block_stride(b)).sum()
}

/// Smallest block outside `mask`.
fn first_missing(mask: usize) -> usize {
    (!mask).trailing_zeros() as usize
}

/// `E_x f(x) ω^{P(x)} Π g_i(x)`.
pub fn witness_correlation(f: &FunctionTable, w: &Witness) -> Result<Complex64> {
    let g = f.group();
    let phase = w.poly.eval_all(g)?;
    let mut vals = f.twist(&phase).into_values();
    for gi in &w.g {
        gi.same_group(f)?;
        for (v, u) in vals.iter_mut().zip(gi.values()) {
            *v *= u;
        }
    }
    Ok(vals.iter().sum::<Complex64>() / g.order() as f64)
}

/// `ψ(a^{(1)}, .., a^{(r-1)}, ·)` as a form on the blocks of `G`.
fn fix_leading(psi: &MultilinearForm, lead: usize, args: &[&[u8]]) -> MultilinearForm {
    let p = psi.p();
    let tail = psi.blocks()[lead..].to_vec();
    let mut out = vec![0u32; tail.iter().product()];
    let stride: usize = psi.blocks()[..lead].iter().product();
    for (idx, &c) in psi.coeffs().iter().enumerate() {
        if c == 0 {
            continue;
        }
        let cs = psi.unflat(idx);
        let w = cs[..lead].iter().zip(args).fold(c as u32, |acc, (&ci, a)| acc * a[ci] as u32 % p);
        out[idx / stride] = (out[idx / stride] + w) % p;
    }
    MultilinearForm::new(p, tail, out.into_iter().map(|v| v as u8).collect()).expect("reduced")
}

/// `E_{a, b, x} ∂_{a^{(1)}..a^{(r-1)}} ∂_{b_1..b_k} f(x) ω^{ψ(a, b)}`, evaluated as
/// `E_a ‖∂_a f · ω^{ψ(a, ·)}‖_{□^k}^{2^k}`, which is real and nonnegative.
pub fn ml_correlation(f: &FunctionTable, psi: &MultilinearForm, r: usize, budget: Budget) -> Result<f64> {
    let g = f.group();
    if psi.p() != g.p() || psi_order(psi, g.dims())? != r {
        return Err(Error::mismatch(format!("form blocks {:?} do not match r = {r} on {:?}", psi.blocks(), g.dims())));
    }
    let lead = r - 1;
    let n = g.order();
    let tuples = (n as u128).saturating_pow(lead as u32);
    budget.check("ml correlation tuples", tuples.saturating_mul(n as u128).saturating_mul(n as u128))?;
    let vals: Vec<f64> = (0..tuples as usize)
        .into_par_iter()
        .map(|mut t| -> Result<f64> {
            let mut d = f.clone();
            let mut coords = Vec::with_capacity(lead);
            for _ in 0..lead {
                let a = t % n;
                t /= n;
                d = mult_derivative_idx(&d, a);
                coords.push(g.point_of(a)?.coords);
            }
            let args: Vec<&[u8]> = coords.iter().map(|c| c.as_slice()).collect();
            let form = fix_leading(psi, lead, &args);
            Ok(box_norm(&d.twist(&form.eval_all_on(g)))?.power_average)
        })
        .collect::<Result<_>>()?;
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Picks the `y` with the largest cube-slice correlation and groups the proper-subset
/// factors `f(x_I, y_{∖I})` by their smallest missing block.
pub fn box_dual_witness(f: &FunctionTable, budget: Budget) -> Result<(usize, Vec<FunctionTable>, Complex64)> {
    let g = f.group();
    let k = g.k();
    if k < 2 {
        return Err(Error::input("the dual witness needs at least two blocks"));
    }
    let n = g.order();
    budget.check("box dual tuples", (n as u128).pow(2) << k)?;
    let full = full_mask(k);
    let factor = |x: usize, y: usize, mask: usize| {
        let v = f.get(restrict(g, x, mask) + restrict(g, y, full & !mask));
        if (k - (mask.count_ones() as usize)) % 2 == 1 {
            v.conj()
        } else {
            v
        }
    };
    let slice = |y: usize| -> Complex64 {
        (0..n).map(|x| (0..=full).map(|m| factor(x, y, m)).product::<Complex64>()).sum::<Complex64>() / n as f64
    };
    let values: Vec<Complex64> = (0..n).into_par_iter().map(slice).collect();
    let best = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let y = values.iter().position(|v| v.norm() >= best - TIE_TOL).expect("nonempty group");
    let us = (0..k)
        .map(|i| {
            let vals = (0..n)
                .map(|x| {
                    (0..full)
                        .filter(|&m| first_missing(m) == i)
                        .map(|m| factor(x, y, m))
                        .product::<Complex64>()
                })
                .collect();
            FunctionTable::from_raw(g.clone(), vals)
        })
        .collect::<Vec<_>>();
    let corr = (0..n).map(|x| f.get(x) * us.iter().map(|u| u.get(x)).product::<Complex64>()).sum::<Complex64>()
        / n as f64;
    Ok((y, us, corr))
}

/// Splits an `F_p`-valued table with no component depending on every block into
/// `k` phases, the `i`-th constant along block `i`.
fn lower_order_split(g: &GroupSpec, phase: &[u32]) -> Result<Vec<Vec<u32>>> {
    let k = g.k();
    let p = g.p();
    let full = full_mask(k);
    let n = g.order();
    let mut parts = vec![vec![0u32; n]; k];
    for j in 0..=full {
        let comp: Vec<u32> = (0..n)
            .map(|x| {
                let mut s = 0u32;
                let mut sub = j;
                loop {
                    let v = phase[restrict(g, x, sub)];
                    s = if (j & !sub).count_ones() % 2 == 1 { (s + p - v) % p } else { (s + v) % p };
                    if sub == 0 {
                        break;
                    }
                    sub = (sub - 1) & j;
                }
                s
            })
            .collect();
        if j == full {
            if comp.iter().any(|&v| v != 0) {
                return Err(Error::Verification("phase has a component depending on every block".into()));
            }
        } else {
            let part = &mut parts[first_missing(j)];
            for (a, b) in part.iter_mut().zip(comp) {
                *a = (*a + b) % p;
            }
        }
    }
    Ok(parts)
}

/// Multiplies `g_0` by a unit constant so that the correlation is real and nonnegative.
fn rotate(mut w: Witness) -> Witness {
    let c = w.correlation;
    if c.norm() > 0.0 {
        let u = c.conj() / c.norm();
        let g0 = &w.g[0];
        w.g[0] = FunctionTable::from_raw(g0.group().clone(), g0.values().iter().map(|v| v * u).collect());
        w.correlation = Complex64::new(c.norm(), 0.0);
    }
    w
}

fn finish(f: &FunctionTable, poly: Polynomial, g: Vec<FunctionTable>, r: usize) -> Result<Witness> {
    let mut w = Witness { poly, g, correlation: Complex64::new(0.0, 0.0), r, flags: Vec::new(), log: Vec::new() };
    w.correlation = witness_correlation(f, &w)?;
    let w = rotate(w);
    let w = Witness { correlation: witness_correlation(f, &w)?, ..w };
    w.verify(f)?;
    Ok(w)
}

/// Best twist `μ` over all multilinear forms, lexicographic tie-break.
fn best_twist(f: &FunctionTable, budget: Budget) -> Result<(MultilinearForm, f64)> {
    let g = f.group();
    let blocks = g.dims().to_vec();
    let total = MultilinearForm::count(g.p(), &blocks).unwrap_or(u128::MAX);
    Budget(budget.0.min(ENUMERATION_CAP)).check("multilinear forms", total)?;
    let vals: Vec<f64> = (0..total as u64)
        .into_par_iter()
        .map(|i| twisted_box_value(f, &MultilinearForm::from_index(g.p(), blocks.clone(), i as u128)))
        .collect::<Result<_>>()?;
    let best = vals.iter().copied().fold(0.0, f64::max);
    let i = vals.iter().position(|&v| v >= best - TIE_TOL).expect("at least the zero form");
    Ok((MultilinearForm::from_index(g.p(), blocks, i as u128), vals[i]))
}

fn form_poly(form: &MultilinearForm, g: &GroupSpec) -> Result<Polynomial> {
    psi_polynomial(form, g.dims())
}

fn r1_exhaustive(f: &FunctionTable, budget: Budget) -> Result<(MultilinearForm, Witness)> {
    let g = f.group();
    let (mu, _) = best_twist(f, budget)?;
    let phase = mu.eval_all_on(g);
    let us = if g.k() == 1 {
        vec![FunctionTable::ones(g)]
    } else {
        box_dual_witness(&f.twist(&phase), budget)?.1
    };
    let w = finish(f, form_poly(&mu, g)?, us, 1)?;
    Ok((mu, w))
}

fn r1_constructive(f: &FunctionTable, cfg: &InverseConfig) -> Result<(MultilinearForm, Witness)> {
    let g = f.group();
    let k = g.k();
    let p = g.p();
    let n = g.order();
    let c = mixed_norm(f, 1, cfg.budget)?.value;
    let eps = (0.5 * c.powi(1 << (k + 1))).max(1e-9);
    let fam = CubicalFamily::uniform(f);
    let fit = multconv_approx(&fam, eps, cfg.multconv_strategy, &cfg.multconv)?.fit;
    let comps: Vec<Vec<u32>> = fit.map.components().iter().map(|a| a.eval_all()).collect::<Result<_>>()?;
    let m = comps.len();
    let boxf = crate::cubical::cubical_convolution(&fam, cfg.budget)?;
    let n_mu = (p as u128).pow(m as u32);
    cfg.budget.check("frequency vectors", n_mu.saturating_mul(n as u128))?;
    let decode = |mut t: usize| -> Vec<u32> {
        (0..m)
            .map(|_| {
                let d = (t % p as usize) as u32;
                t /= p as usize;
                d
            })
            .collect()
    };
    let mu_phase = |mu: &[u32], h: usize| -> u32 {
        let s: u32 = mu.iter().zip(&comps).map(|(&u, a)| u * a[h] % p).sum::<u32>() % p;
        (p - s) % p
    };
    let scores: Vec<f64> = (0..n_mu as usize)
        .into_par_iter()
        .map(|t| {
            let mu = decode(t);
            let s: Complex64 = (0..n).map(|h| boxf.get(h) * g.omega(mu_phase(&mu, h))).sum();
            (s / n as f64).norm()
        })
        .collect();
    let best = scores.iter().copied().fold(0.0, f64::max);
    let mu = decode(scores.iter().position(|&v| v >= best - TIE_TOL).expect("nonempty"));

    cfg.budget.check("constructive averaging tuples", (n as u128).pow(2) << k)?;
    let full = full_mask(k);
    let factor = |h: usize, x: usize, mask: usize| {
        let v = f.get(restrict(g, h, mask) + restrict(g, x, full & !mask));
        if (k - mask.count_ones() as usize) % 2 == 1 {
            v.conj()
        } else {
            v
        }
    };
    let t_of = |x: usize| -> Complex64 {
        (0..n)
            .map(|h| g.omega(mu_phase(&mu, g.sub_idx(h, x))) * (0..=full).map(|mm| factor(h, x, mm)).product::<Complex64>())
            .sum::<Complex64>()
            / n as f64
    };
    let tv: Vec<Complex64> = (0..n).into_par_iter().map(t_of).collect();
    let best_t = tv.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let x = tv.iter().position(|v| v.norm() >= best_t - TIE_TOL).expect("nonempty");

    let mut top = MultilinearForm::zero(p, g.dims().to_vec());
    for (&u, a) in mu.iter().zip(fit.map.components()) {
        top = top.add(&a.multilinear_part().scale(p - u))?;
    }
    let top_vals = top.eval_all_on(g);
    let residual: Vec<u32> = (0..n).map(|h| (mu_phase(&mu, g.sub_idx(h, x)) + p - top_vals[h]) % p).collect();
    let split = lower_order_split(g, &residual)?;
    let us = (0..k)
        .map(|i| {
            let vals = (0..n)
                .map(|h| {
                    let fs: Complex64 =
                        (0..full).filter(|&mm| first_missing(mm) == i).map(|mm| factor(h, x, mm)).product();
                    fs * g.omega(split[i][h])
                })
                .collect();
            FunctionTable::from_raw(g.clone(), vals)
        })
        .collect();
    let w = finish(f, form_poly(&top, g)?, us, 1)?;
    Ok((top, w))
}

fn r1_search(f: &FunctionTable, strategy: R1Strategy, cfg: &InverseConfig) -> Result<(MultilinearForm, Witness)> {
    match strategy {
        R1Strategy::Exhaustive => r1_exhaustive(f, cfg.budget),
        R1Strategy::Constructive => r1_constructive(f, cfg),
    }
}

/// Base case: a multilinear `P = μ` and `g_i` with a verified correlation.
pub fn inverse_r1(f: &FunctionTable, strategy: R1Strategy, cfg: &InverseConfig) -> Result<Witness> {
    Ok(r1_search(f, strategy, cfg)?.1)
}

/// A form `ψ` on `(G⊕)^{r-1} x G_{[k]}` with large multilinear correlation.
pub fn find_psi(f: &FunctionTable, r: usize, strategy: PsiStrategy, cfg: &InverseConfig) -> Result<PsiCandidate> {
    let g = f.group();
    if r < 2 {
        return Err(Error::input("a form psi needs r >= 2"));
    }
    let k = g.k();
    let psi = match strategy {
        PsiStrategy::Exhaustive => {
            let blocks: Vec<usize> =
                std::iter::repeat_n(g.n(), r - 1).chain(g.dims().iter().copied()).collect();
            let total = MultilinearForm::count(g.p(), &blocks).unwrap_or(u128::MAX);
            Budget(cfg.budget.0.min(ENUMERATION_CAP)).check("forms psi", total)?;
            let per = (g.order() as u128).saturating_pow(r as u32 + 1);
            cfg.budget.check("psi search tuples", total.saturating_mul(per))?;
            let vals: Vec<f64> = (0..total as u64)
                .into_par_iter()
                .map(|i| {
                    let psi = MultilinearForm::from_index(g.p(), blocks.clone(), i as u128);
                    ml_correlation(f, &psi, r, cfg.budget)
                })
                .collect::<Result<_>>()?;
            let best = vals.iter().copied().fold(0.0, f64::max);
            let i = vals.iter().position(|&v| v >= best - TIE_TOL).expect("zero form present");
            MultilinearForm::from_index(g.p(), blocks, i as u128)
        }
        PsiStrategy::Lifted => {
            let cap = usize::try_from(cfg.budget.0).unwrap_or(usize::MAX).max(DEFAULT_ORDER_CAP);
            let lifted = lift_tilde(f, r, cap)?;
            let (mu, _) = r1_search(&lifted, cfg.r1, cfg)?;
            let perm: Vec<usize> = (k..k + r - 1).chain(0..k).collect();
            mu.permute_blocks(&perm)
        }
    };
    let ml = ml_correlation(f, &psi, r, cfg.budget)?;
    Ok(PsiCandidate { psi, ml_correlation: ml, strategy })
}

/// Full pipeline: find `ψ`, symmetrize, extract `P`, recurse on `ω^P f`.
pub fn inverse_theorem(f: &FunctionTable, r: usize, cfg: &InverseConfig) -> Result<Witness> {
    let g = f.group();
    let k = g.k();
    let p = g.p() as usize;
    if r == 0 {
        return Err(Error::input("r must be at least 1"));
    }
    let need = if cfg.strict_characteristic { (r + 1).max(k + r) } else { r + 1 };
    if r >= 2 && p < need {
        return Err(Error::input(format!("p = {p} is below the required characteristic {need}")));
    }
    let norm = mixed_norm(f, r, cfg.budget)?.value;
    if norm < cfg.min_norm {
        return Err(Error::input(format!("mixed norm {norm:.6} is below the floor {}", cfg.min_norm)));
    }
    let mut w = if r == 1 {
        let mut w = inverse_r1(f, cfg.r1, cfg)?;
        w.log.push(LogEntry {
            r,
            mixed_norm: norm,
            psi: None,
            ml_correlation: None,
            bias_psi_minus_rho: None,
            poly: w.poly.clone(),
        });
        w
    } else {
        let cand = find_psi(f, r, cfg.psi, cfg)?;
        let rho = symmetrize(&cand.psi, g.dims())?;
        let bias = cand.psi.sub(&rho)?.bias()?;
        let (big_p, _q) = extract_p_q(&rho, g.dims())?;
        let twisted = f.twist(&big_p.eval_all(g)?);
        let inner = inverse_theorem(&twisted, r - 1, cfg)?;
        let poly = big_p.add(&inner.poly);
        let mut w = finish(f, poly, inner.g, r)?;
        w.flags = inner.flags;
        if bias < SMALL_BIAS {
            w.flags.push(format!("bias(psi - rho) = {bias:e} at r = {r}"));
        }
        w.log = inner.log;
        w.log.push(LogEntry {
            r,
            mixed_norm: norm,
            psi: Some(cand.psi),
            ml_correlation: Some(cand.ml_correlation),
            bias_psi_minus_rho: Some(bias),
            poly: big_p,
        });
        w
    };
    if w.correlation.norm() < cfg.correlation_floor {
        w.flags.push(format!("correlation {:.6} below floor {} at r = {r}", w.correlation.norm(), cfg.correlation_floor));
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmetry::derivative_form;
    use crate::table::{gen_random_bounded, gen_random_unimodular};

    fn phase_table(g: &GroupSpec, poly: &Polynomial) -> FunctionTable {
        crate::table::gen_polynomial_phase(g, poly).unwrap()
    }

    /// Direct `E_{a,b,x}` sum.
    fn ml_correlation_naive(f: &FunctionTable, psi: &MultilinearForm, r: usize) -> Complex64 {
        let g = f.group();
        let n = g.order();
        let k = g.k();
        let bsz: Vec<usize> = (0..k).map(|i| g.block_order(i)).collect();
        let nb: usize = bsz.iter().product();
        let na = n.pow(r as u32 - 1);
        let mut total = Complex64::new(0.0, 0.0);
        for at in 0..na {
            let a: Vec<usize> = (0..r - 1).map(|l| at / n.pow(l as u32) % n).collect();
            for bt in 0..nb {
                let mut rem = bt;
                let b: Vec<usize> = (0..k)
                    .map(|i| {
                        let v = rem % bsz[i];
                        rem /= bsz[i];
                        g.embed_block(i, v)
                    })
                    .collect();
                let dirs: Vec<usize> = a.iter().chain(&b).copied().collect();
                let mut args: Vec<Vec<u8>> = a.iter().map(|&x| g.point_of(x).unwrap().coords).collect();
                for (i, &bi) in b.iter().enumerate() {
                    let pt = g.point_of(bi).unwrap().coords;
                    let o = g.block_offset(i);
                    args.push(pt[o..o + g.dims()[i]].to_vec());
                }
                let refs: Vec<&[u8]> = args.iter().map(|v| v.as_slice()).collect();
                let ph = g.omega(psi.eval(&refs).unwrap());
                for x in 0..n {
                    let mut prod = Complex64::new(1.0, 0.0);
                    for mask in 0..1usize << dirs.len() {
                        let mut y = x;
                        for (j, &d) in dirs.iter().enumerate() {
                            if mask >> j & 1 == 1 {
                                y = g.add_idx(y, d);
                            }
                        }
                        let v = f.get(y);
                        prod *= if (dirs.len() - mask.count_ones() as usize) % 2 == 1 { v.conj() } else { v };
                    }
                    total += prod * ph;
                }
            }
        }
        total / (na * nb * n) as f64
    }

    fn cfg() -> InverseConfig {
        InverseConfig::default()
    }

    #[test]
    fn ml_correlation_matches_naive() {
        let g = GroupSpec::new(3, vec![1, 1]).unwrap();
        let f = gen_random_bounded(&g, 3);
        let psi = MultilinearForm::random(3, vec![2, 1, 1], 4);
        let fast = ml_correlation(&f, &psi, 2, Budget::default()).unwrap();
        let slow = ml_correlation_naive(&f, &psi, 2);
        assert!((fast - slow.re).abs() < 1e-9 && slow.im.abs() < 1e-9);
        let ones = FunctionTable::ones(&g);
        let zero = MultilinearForm::zero(3, vec![2, 1, 1]);
        assert!((ml_correlation(&ones, &zero, 2, Budget::default()).unwrap() - 1.0).abs() < 1e-12);
        let v = ml_correlation(&ones, &psi, 2, Budget::default()).unwrap();
        assert!(v <= 1.0 + 1e-12);
    }

    #[test]
    fn ml_correlation_of_polynomial_phase() {
        let g = GroupSpec::new(5, vec![1, 1]).unwrap();
        let p0 = Polynomial::from_terms(5, [(vec![(0, 0, 2), (1, 0, 1)], 1), (vec![(0, 0, 1), (1, 0, 2)], 3)]).unwrap();
        let f = phase_table(&g, &p0);
        let psi = derivative_form(&p0, g.dims(), 2).unwrap().neg();
        assert!((ml_correlation(&f, &psi, 2, Budget::default()).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dual_witness_bounds() {
        let g = GroupSpec::new(3, vec![1, 1]).unwrap();
        let f = gen_random_bounded(&g, 5);
        let (_, us, c) = box_dual_witness(&f, Budget::default()).unwrap();
        assert!(c.norm() >= box_norm(&f).unwrap().power_average - 1e-9);
        for (i, u) in us.iter().enumerate() {
            let keep = full_mask(2) & !(1 << i);
            assert!((0..g.order()).all(|x| u.get(x) == u.get(restrict(&g, x, keep))));
        }
        let (_, us1, c1) = box_dual_witness(&FunctionTable::ones(&g), Budget::default()).unwrap();
        assert!((c1 - 1.0).norm() < 1e-12 && us1.iter().all(|u| u.values().iter().all(|v| (v - 1.0).norm() < 1e-12)));
        let g2 = GroupSpec::new(2, vec![1, 1]).unwrap();
        let mu = MultilinearForm::new(2, vec![1, 1], vec![1]).unwrap();
        let fm = FunctionTable::ones(&g2).twist(&mu.eval_all_on(&g2));
        // A genuinely bilinear phase has box norm below 1, so the slice correlation is
        // exactly ‖f‖^4 = 1/2 here; phases of lower order give 1.
        assert!((box_dual_witness(&fm, Budget::default()).unwrap().2.norm() - 0.5).abs() < 1e-12);
        let lin = Polynomial::from_terms(2, [(vec![(0, 0, 1)], 1)]).unwrap();
        let fl = FunctionTable::ones(&g2).twist(&lin.eval_all(&g2).unwrap());
        assert!((box_dual_witness(&fl, Budget::default()).unwrap().2.norm() - 1.0).abs() < 1e-12);
        assert!(box_dual_witness(&FunctionTable::ones(&GroupSpec::new(3, vec![2]).unwrap()), Budget::default()).is_err());
    }

    #[test]
    fn lower_order_split_reassembles() {
        let g = GroupSpec::new(3, vec![1, 1, 1]).unwrap();
        let poly = Polynomial::from_terms(3, [(vec![(0, 0, 2), (1, 0, 1)], 1), (vec![(2, 0, 1)], 2), (vec![], 1)]).unwrap();
        let phase = poly.eval_all(&g).unwrap();
        let parts = lower_order_split(&g, &phase).unwrap();
        for x in 0..g.order() {
            assert_eq!(parts.iter().map(|t| t[x]).sum::<u32>() % 3, phase[x]);
        }
        let full = Polynomial::from_terms(3, [(vec![(0, 0, 1), (1, 0, 1), (2, 0, 1)], 1)]).unwrap();
        assert!(lower_order_split(&g, &full.eval_all(&g).unwrap()).is_err());
    }

    #[test]
    fn r1_recovers_planted_form() {
        let g = GroupSpec::new(2, vec![1, 1]).unwrap();
        let mu0 = MultilinearForm::new(2, vec![1, 1], vec![1]).unwrap();
        let f = FunctionTable::ones(&g).twist(&mu0.eval_all_on(&g));
        let (mu, w) = r1_exhaustive(&f, Budget::default()).unwrap();
        assert_eq!(mu, mu0.neg());
        assert!((w.correlation.re - 1.0).abs() < 1e-12);
        let w1 = inverse_r1(&FunctionTable::ones(&g), R1Strategy::Exhaustive, &cfg()).unwrap();
        assert!(w1.poly.is_zero() && (w1.correlation.re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn r1_matches_best_over_all_forms() {
        let g = GroupSpec::new(2, vec![1, 1]).unwrap();
        let f = gen_random_unimodular(&g, 17);
        let w = inverse_r1(&f, R1Strategy::Exhaustive, &cfg()).unwrap();
        let best = (0..2u128)
            .map(|i| twisted_box_value(&f, &MultilinearForm::from_index(2, vec![1, 1], i)).unwrap())
            .fold(0.0, f64::max);
        assert!(w.correlation.norm() >= best.powi(4) - 1e-9);
    }

    #[test]
    fn r1_constructive_on_phase() {
        let g = GroupSpec::new(3, vec![1, 1]).unwrap();
        let poly = Polynomial::from_terms(3, [(vec![(0, 0, 1), (1, 0, 1)], 2), (vec![(0, 0, 2)], 1)]).unwrap();
        let f = phase_table(&g, &poly);
        let w = inverse_r1(&f, R1Strategy::Constructive, &cfg()).unwrap();
        assert!((w.correlation.norm() - 1.0).abs() < 1e-9, "{}", w.correlation);
    }

    #[test]
    fn pipeline_on_planted_polynomial() {
        let g = GroupSpec::new(5, vec![1, 1]).unwrap();
        let p0 = Polynomial::from_terms(
            5,
            [(vec![(0, 0, 2), (1, 0, 1)], 2), (vec![(0, 0, 1), (1, 0, 1)], 1), (vec![(1, 0, 3)], 4)],
        )
        .unwrap();
        let f = phase_table(&g, &p0);
        let w = inverse_theorem(&f, 2, &cfg()).unwrap();
        assert!(w.correlation.norm() >= 0.9, "{}", w.correlation);
        w.verify(&f).unwrap();
        let ones = inverse_theorem(&FunctionTable::ones(&g), 2, &cfg()).unwrap();
        assert!(ones.poly.is_zero() && (ones.correlation.re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lifted_agrees_with_exhaustive() {
        let g = GroupSpec::new(5, vec![1, 1]).unwrap();
        let p0 = Polynomial::from_terms(5, [(vec![(0, 0, 1), (1, 0, 2)], 3)]).unwrap();
        let f = phase_table(&g, &p0);
        let a = find_psi(&f, 2, PsiStrategy::Exhaustive, &cfg()).unwrap();
        let b = find_psi(&f, 2, PsiStrategy::Lifted, &cfg()).unwrap();
        assert!((a.ml_correlation - 1.0).abs() < 1e-9);
        assert!((a.ml_correlation - b.ml_correlation).abs() < 0.05);
    }

    #[test]
    fn characteristic_check() {
        let g = GroupSpec::new(3, vec![1, 1]).unwrap();
        assert!(inverse_theorem(&FunctionTable::ones(&g), 2, &cfg()).is_err());
    }
}
