//! The large multilinear spectrum: membership, enumeration, packing and Chang-type checks,
//! and the greedy approximation of cubical convolutions by spectrum phases.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cubical::{cubical_convolution, exhaustive_fit, FiberFit, MultconvOptions, MultiaffineMap};
use crate::error::{Budget, Error, Result};
use crate::forms::{MultiaffineForm, MultilinearForm};
use crate::norms::box_norm;
use crate::table::{CubicalFamily, FunctionTable};

/// Default cap on the number of forms visited by [`mls_enumerate`].
pub const ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub form: MultilinearForm,
    pub box_value: f64,
}

fn check_on(f: &FunctionTable, mu: &MultilinearForm) -> Result<()> {
    if mu.p() != f.group().p() || mu.blocks() != f.group().dims() {
        return Err(Error::mismatch("form does not live on the blocks of the function"));
    }
    Ok(())
}

/// `‖f ω^μ‖_{□^k}`.
pub fn twisted_box_value(f: &FunctionTable, mu: &MultilinearForm) -> Result<f64> {
    check_on(f, mu)?;
    Ok(box_norm(&f.twist(&mu.eval_all()?))?.value)
}

/// Whether `‖f ω^μ‖_{□^k} >= eps`, with the value.
pub fn mls_membership(f: &FunctionTable, mu: &MultilinearForm, eps: f64) -> Result<(bool, f64)> {
    if !(eps > 0.0) {
        return Err(Error::input("eps must be positive"));
    }
    let v = twisted_box_value(f, mu)?;
    Ok((v >= eps - 1e-12, v))
}

/// All members of `mls_eps(f)`, by decreasing box value then lexicographically.
pub fn mls_enumerate(f: &FunctionTable, eps: f64, budget: Budget) -> Result<Vec<SpectrumEntry>> {
    if !(eps > 0.0) {
        return Err(Error::input("eps must be positive"));
    }
    let g = f.group();
    let blocks = g.dims().to_vec();
    let total = MultilinearForm::count(g.p(), &blocks).unwrap_or(u128::MAX);
    Budget(budget.0.min(ENUMERATION_CAP)).check("multilinear forms", total)?;
    let mut out: Vec<SpectrumEntry> = (0..total as u64)
        .into_par_iter()
        .map(|i| {
            let form = MultilinearForm::from_index(g.p(), blocks.clone(), i as u128);
            let box_value = twisted_box_value(f, &form)?;
            Ok(SpectrumEntry { form, box_value })
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|e| e.box_value >= eps - 1e-12)
        .collect();
    out.sort_by(|a, b| {
        let key = |v: f64| (v * 1e12).round() as i64;
        key(b.box_value).cmp(&key(a.box_value)).then_with(|| a.form.cmp(&b.form))
    });
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CloseFormReport {
    pub bias_difference: f64,
    pub alpha_value: f64,
    pub alpha_prime_value: f64,
    pub alpha_member: bool,
    /// `α'` lies in the spectrum at some positive level.
    pub transfer_holds: bool,
}

/// Measured quantities around the transfer of spectrum membership to a close form.
pub fn close_form_transfer_check(f: &FunctionTable, alpha: &MultilinearForm, alpha_prime: &MultilinearForm, eps: f64) -> Result<CloseFormReport> {
    let (alpha_member, alpha_value) = mls_membership(f, alpha, eps)?;
    let alpha_prime_value = twisted_box_value(f, alpha_prime)?;
    let bias_difference = alpha.sub(alpha_prime)?.bias()?;
    Ok(CloseFormReport {
        bias_difference,
        alpha_value,
        alpha_prime_value,
        alpha_member,
        transfer_holds: alpha_prime_value > 1e-12,
    })
}

/// `n(ε) = ⌈10 ε^{-2^{k+1}}⌉`.
pub fn packing_n(eps: f64, k: usize) -> f64 {
    (10.0 * eps.powf(-(2f64.powi(k as i32 + 1)))).ceil()
}

/// `log10 b(ε)` with `b(ε) = (ε/1000)^{2^{2k+2}}`.
pub fn packing_log10_b(eps: f64, k: usize) -> f64 {
    2f64.powi(2 * k as i32 + 2) * (eps / 1000.0).log10()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PackingVerdict {
    pub n: usize,
    pub n_bound: f64,
    pub log10_b: f64,
    pub values: Vec<f64>,
    pub all_members: bool,
    pub max_pairwise_bias: f64,
    pub premises_hold: bool,
    /// Premises hold but `n >= n(ε)`.
    pub violation: bool,
}

/// Checks the premises of the packing bound and the bound itself.
pub fn packing_check(f: &FunctionTable, entries: &[MultilinearForm], eps: f64) -> Result<PackingVerdict> {
    let k = f.group().k();
    let n_bound = packing_n(eps, k);
    let log10_b = packing_log10_b(eps, k);
    let mut values = Vec::with_capacity(entries.len());
    let mut all_members = true;
    for mu in entries {
        let (m, v) = mls_membership(f, mu, eps)?;
        all_members &= m;
        values.push(v);
    }
    let mut max_pairwise_bias: f64 = 0.0;
    for i in 0..entries.len() {
        for j in i + 1..entries.len() {
            max_pairwise_bias = max_pairwise_bias.max(entries[i].sub(&entries[j])?.bias()?);
        }
    }
    let bias_ok = entries.len() < 2 || max_pairwise_bias.log10() <= log10_b;
    let premises_hold = all_members && bias_ok;
    let violation = premises_hold && entries.len() as f64 >= n_bound;
    Ok(PackingVerdict { n: entries.len(), n_bound, log10_b, values, all_members, max_pairwise_bias, premises_hold, violation })
}

/// `s_i = ω^{μ_i} Π_j u_j`, each `u_j` a table on the full group that ignores block `j`.
fn chang_phases(f: &FunctionTable, forms: &[MultilinearForm], us: &[Vec<FunctionTable>]) -> Result<Vec<Vec<Complex64>>> {
    let g = f.group();
    if forms.len() != us.len() {
        return Err(Error::input("need one list of u functions per form"));
    }
    forms
        .iter()
        .zip(us)
        .map(|(mu, u)| {
            check_on(f, mu)?;
            if u.len() != g.k() {
                return Err(Error::input("need one u function per block"));
            }
            for (j, t) in u.iter().enumerate() {
                t.same_group(f)?;
                check_ignores_block(t, j)?;
            }
            let vals = mu.eval_all()?;
            Ok((0..g.order())
                .map(|x| u.iter().fold(g.omega(vals[x]), |acc, t| acc * t.get(x)))
                .collect())
        })
        .collect()
}

fn check_ignores_block(t: &FunctionTable, j: usize) -> Result<()> {
    let g = t.group();
    let stride = g.block_stride(j);
    for x in 0..g.order() {
        let base = x - g.block_index(x, j) * stride;
        if (t.get(x) - t.get(base)).norm() > 1e-12 {
            return Err(Error::input(format!("u function {j} depends on block {j}")));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChangVerdict {
    /// `E|f|`.
    pub alpha: f64,
    pub n: usize,
    pub c0: f64,
    pub n_bound: f64,
    pub b: f64,
    pub correlations: Vec<f64>,
    pub correlation_premise: bool,
    pub max_combination_bias: f64,
    pub bias_premise: bool,
    /// False when `α >= 1`, where `log α^{-1} <= 0` leaves no room for the bound.
    pub applicable: bool,
    pub premises_hold: bool,
    pub violation: bool,
}

/// Premises and conclusion of the Chang-type bound with a configured constant `C_0`.
pub fn chang_check(
    f: &FunctionTable,
    forms: &[MultilinearForm],
    us: &[Vec<FunctionTable>],
    eps: f64,
    c0: f64,
    budget: Budget,
) -> Result<ChangVerdict> {
    let g = f.group();
    let k = g.k();
    let n = forms.len();
    let alpha = f.values().iter().map(|v| v.norm()).sum::<f64>() / g.order() as f64;
    let applicable = alpha < 1.0 - 1e-12 && alpha > 0.0;
    let n_bound = if applicable { c0 * eps.powi(-2) * (1.0 / alpha).ln() } else { 0.0 };
    let b = if applicable {
        3f64.powf(-(2f64.powi(k as i32))) * (eps * eps * alpha * alpha / n_bound).powf(2f64.powi(k as i32))
    } else {
        0.0
    };
    let phases = chang_phases(f, forms, us)?;
    let correlations: Vec<f64> = phases
        .iter()
        .map(|s| (f.values().iter().zip(s).map(|(a, b)| a * b).sum::<Complex64>() / g.order() as f64).norm())
        .collect();
    let correlation_premise = correlations.iter().all(|&c| c >= eps * alpha - 1e-12);
    let p = g.p() as u128;
    let combos = p.checked_pow(n as u32).unwrap_or(u128::MAX);
    budget.check("Chang form combinations", combos)?;
    let mut max_combination_bias: f64 = 0.0;
    for idx in 1..combos {
        let mut rest = idx;
        let mut comb = MultilinearForm::zero(g.p(), g.dims().to_vec());
        for mu in forms {
            comb = comb.add(&mu.scale((rest % p) as u32))?;
            rest /= p;
        }
        max_combination_bias = max_combination_bias.max(comb.bias()?);
    }
    let bias_premise = n == 0 || max_combination_bias <= b;
    let premises_hold = applicable && correlation_premise && bias_premise;
    let violation = premises_hold && n as f64 >= n_bound;
    Ok(ChangVerdict {
        alpha,
        n,
        c0,
        n_bound,
        b,
        correlations,
        correlation_premise,
        max_combination_bias,
        bias_premise,
        applicable,
        premises_hold,
        violation,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentReport {
    pub moment: f64,
    pub bound: f64,
    /// `C` normalizing `g = C^{-1} Σ c_i s_i` to unit `L²` norm.
    pub c_norm: f64,
}

/// `E exp(σ Re Σ θ c_i s_i / C)` against `2 e^{σ²}`.
pub fn dissociated_moment(
    f: &FunctionTable,
    forms: &[MultilinearForm],
    us: &[Vec<FunctionTable>],
    sigma: f64,
    theta: Complex64,
) -> Result<MomentReport> {
    let g = f.group();
    let phases = chang_phases(f, forms, us)?;
    let cs: Vec<Complex64> = phases
        .iter()
        .map(|s| f.values().iter().zip(s).map(|(a, b)| a * b.conj()).sum::<Complex64>() / g.order() as f64)
        .collect();
    let sum: Vec<Complex64> = (0..g.order()).map(|x| cs.iter().zip(&phases).map(|(c, s)| c * s[x]).sum()).collect();
    let c_norm = (sum.iter().map(|v| v.norm_sqr()).sum::<f64>() / g.order() as f64).sqrt();
    let moment = if c_norm == 0.0 {
        1.0
    } else {
        sum.iter().map(|v| (sigma * (theta * v / c_norm).re).exp()).sum::<f64>() / g.order() as f64
    };
    Ok(MomentReport { moment, bound: 2.0 * (sigma * sigma).exp(), c_norm })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GreedyStep {
    /// `μ ∈ F_p^m`, little-endian.
    pub mu: Vec<u32>,
    /// `"initial"`, `"correlation"` or `"close"`.
    pub reason: String,
    pub entry: SpectrumEntry,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GreedyResult {
    pub fit: FiberFit,
    pub base: FiberFit,
    pub steps: Vec<GreedyStep>,
    /// Smallest spectrum level among the selected forms.
    pub xi_achieved: f64,
    pub success: bool,
    pub evaluated: u128,
}

impl GreedyResult {
    pub fn residuals(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.residual).collect()
    }

    pub fn entries(&self) -> Vec<SpectrumEntry> {
        self.steps.iter().map(|s| s.entry.clone()).collect()
    }
}

fn digits(mut idx: usize, p: usize, m: usize) -> Vec<u32> {
    (0..m)
        .map(|_| {
            let d = (idx % p) as u32;
            idx /= p;
            d
        })
        .collect()
}

/// Grows `S ⊆ F_p^m` from `{0}`, adding the `μ` that passes the correlation-or-closeness
/// test and lowers the residual most, until `‖□f - Σ_{μ∈S} s_μ‖ <= eps`.
///
/// The returned fit uses the components `μ·α` for `μ ∈ S` with conditional means, so its
/// error is at most the last residual. Spectrum levels are measured on `f_{[k]}`.
pub fn greedy_spectrum_approx(fam: &CubicalFamily, eps: f64, base: Option<&FiberFit>, opts: &MultconvOptions) -> Result<GreedyResult> {
    if !(eps > 0.0) {
        return Err(Error::input("eps must be positive"));
    }
    let g = fam.group().clone();
    let boxf = cubical_convolution(fam, opts.budget)?;
    let mut evaluated = 0u128;
    let base = match base {
        Some(b) => {
            if b.map.group() != &g {
                return Err(Error::mismatch("base fit on a different group"));
            }
            b.clone()
        }
        None => {
            let r = exhaustive_fit(&boxf, eps / 2.0, opts)?;
            evaluated += r.evaluated;
            r.fit
        }
    };
    let p = g.p() as usize;
    let m = base.map.m();
    let space = p.checked_pow(m as u32).ok_or_else(|| Error::input("base map too large"))?;
    opts.budget.check("greedy spectrum steps", (space as u128).pow(2) * g.order() as u128)?;
    let labels = base.map.labels()?;
    let lam: Vec<Vec<u32>> = labels.iter().map(|&l| digits(l, p, m)).collect();
    let pm = (p as f64).powi(m as i32);
    // s_μ(x) = c'_μ ω^{μ·λ(x)}, c'_μ = p^{-m} Σ_λ c(λ) ω^{-λ·μ}
    let s_tables: Vec<Vec<Complex64>> = (0..space)
        .map(|mu| {
            let md = digits(mu, p, m);
            let dot = |l: &[u32]| l.iter().zip(&md).map(|(a, b)| a * b).sum::<u32>() % p as u32;
            let coef: Complex64 = base
                .c
                .iter()
                .map(|(&l, &c)| c * g.omega((p as u32 - dot(&digits(l, p, m))) % p as u32))
                .sum::<Complex64>()
                / pm;
            lam.iter().map(|l| coef * g.omega(dot(l))).collect()
        })
        .collect();
    let n = g.order() as f64;
    let inner = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(x, y)| x * y.conj()).sum::<Complex64>() / n;
    let residual_of = |approx: &[Complex64]| {
        (boxf.values().iter().zip(approx).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / n).sqrt()
    };
    let top = fam.get((1 << g.k()) - 1).clone();
    let entry_for = |mu: usize| -> Result<SpectrumEntry> {
        let md = digits(mu, p, m);
        let mut form = MultiaffineForm::zero(g.p(), g.dims().to_vec());
        for (c, d) in base.map.components().iter().zip(&md) {
            form = form.add(&c.scale(*d))?;
        }
        let ml = form.multilinear_part();
        let box_value = twisted_box_value(&top, &ml)?;
        Ok(SpectrumEntry { form: ml, box_value })
    };

    let mut in_s = vec![false; space];
    in_s[0] = true;
    let mut approx = s_tables[0].clone();
    let mut residual = residual_of(&approx);
    let mut steps = vec![GreedyStep { mu: digits(0, p, m), reason: "initial".into(), entry: entry_for(0)?, residual }];
    let corr_thr = eps * eps / (8.0 * pm);
    let close_thr = eps * eps / (8.0 * pm * pm);
    while residual > eps {
        let cands: Vec<(f64, usize, &'static str)> = (0..space)
            .into_par_iter()
            .filter(|&mu| !in_s[mu])
            .filter_map(|mu| {
                let corr = inner(boxf.values(), &s_tables[mu]).norm();
                let reason = if corr >= corr_thr {
                    "correlation"
                } else if (0..space).any(|l| in_s[l] && inner(&s_tables[l], &s_tables[mu]).norm() >= close_thr) {
                    "close"
                } else {
                    return None;
                };
                let next: Vec<Complex64> = approx.iter().zip(&s_tables[mu]).map(|(a, b)| a + b).collect();
                Some((residual_of(&next), mu, reason))
            })
            .collect();
        evaluated += (space - in_s.iter().filter(|&&b| b).count()) as u128;
        let Some(&(next_res, mu, reason)) = cands.iter().min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))) else {
            break;
        };
        if next_res > residual + 1e-12 {
            break;
        }
        in_s[mu] = true;
        for (a, b) in approx.iter_mut().zip(&s_tables[mu]) {
            *a += b;
        }
        residual = next_res;
        steps.push(GreedyStep { mu: digits(mu, p, m), reason: reason.into(), entry: entry_for(mu)?, residual });
    }
    let mut comps = Vec::new();
    for (mu, &inside) in in_s.iter().enumerate().skip(1) {
        if inside {
            let md = digits(mu, p, m);
            let mut form = MultiaffineForm::zero(g.p(), g.dims().to_vec());
            for (c, d) in base.map.components().iter().zip(&md) {
                form = form.add(&c.scale(*d))?;
            }
            comps.push(form);
        }
    }
    let fit = crate::cubical::conditional_mean_fit(&boxf, &MultiaffineMap::new(&g, comps)?)?;
    let xi_achieved = steps.iter().map(|s| s.entry.box_value).fold(f64::INFINITY, f64::min);
    let success = residual <= eps;
    Ok(GreedyResult { fit, base, steps, xi_achieved, success, evaluated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupSpec;
    use crate::table::gen_random_bounded;

    fn phase(g: &GroupSpec, mu: &MultilinearForm, neg: bool) -> FunctionTable {
        let vals = mu.eval_all().unwrap();
        let p = g.p();
        FunctionTable::from_fn(g, |x| g.omega(if neg { (p - vals[x]) % p } else { vals[x] })).unwrap()
    }

    #[test]
    fn membership_examples() {
        let g = GroupSpec::new(3, vec![1, 2]).unwrap();
        let mu = MultilinearForm::random(3, vec![1, 2], 2);
        let (m, v) = mls_membership(&phase(&g, &mu, true), &mu, 1.0).unwrap();
        assert!(m && (v - 1.0).abs() < 1e-9);
        let g2 = GroupSpec::new(2, vec![1, 1]).unwrap();
        let xy = MultilinearForm::new(2, vec![1, 1], vec![1]).unwrap();
        let (_, v) = mls_membership(&FunctionTable::ones(&g2), &xy, 0.5).unwrap();
        assert!((v - 0.5f64.powf(0.25)).abs() < 1e-9);
        assert!(!mls_membership(&FunctionTable::ones(&g2), &xy, 0.841).unwrap().0);
        assert!(mls_membership(&FunctionTable::ones(&g2), &xy, 0.84).unwrap().0);
    }

    #[test]
    fn enumeration_examples() {
        let g = GroupSpec::new(2, vec![1, 1]).unwrap();
        let e = mls_enumerate(&FunctionTable::ones(&g), 0.9, Budget::default()).unwrap();
        assert_eq!(e.len(), 1);
        assert!(e[0].form.is_zero());
        assert!(mls_enumerate(&FunctionTable::ones(&g), 1.01, Budget::default()).unwrap().is_empty());
        let g = GroupSpec::new(3, vec![1, 1]).unwrap();
        let mu = MultilinearForm::new(3, vec![1, 1], vec![2]).unwrap();
        let e = mls_enumerate(&phase(&g, &mu, true), 0.1, Budget::default()).unwrap();
        assert_eq!(e[0].form, mu);
        assert!((e[0].box_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn packing_constants() {
        assert_eq!(packing_n(0.5, 2), 2560.0);
        assert!((packing_log10_b(0.5, 2) - 64.0 * (1.0f64 / 2000.0).log10()).abs() < 1e-9);
        let g = GroupSpec::new(2, vec![1, 1]).unwrap();
        let v = packing_check(&FunctionTable::ones(&g), &[], 0.5).unwrap();
        assert!(v.premises_hold && !v.violation);
    }

    #[test]
    fn moment_examples() {
        let g = GroupSpec::new(2, vec![2, 2]).unwrap();
        let f = gen_random_bounded(&g, 1);
        let mu = MultilinearForm::new(2, vec![2, 2], vec![1, 0, 0, 1]).unwrap();
        let us = vec![vec![FunctionTable::ones(&g), FunctionTable::ones(&g)]];
        let r = dissociated_moment(&f, std::slice::from_ref(&mu), &us, 0.0, Complex64::new(1.0, 0.0)).unwrap();
        assert!((r.moment - 1.0).abs() < 1e-12);
        let r = dissociated_moment(&f, &[mu], &us, 0.5, Complex64::new(1.0, 0.0)).unwrap();
        assert!(r.moment <= r.bound);
    }

    #[test]
    fn greedy_examples() {
        let g = GroupSpec::new(2, vec![1, 1]).unwrap();
        let opts = MultconvOptions::default();
        let r = greedy_spectrum_approx(&CubicalFamily::uniform(&FunctionTable::ones(&g)), 0.1, None, &opts).unwrap();
        assert!(r.success && r.steps.len() == 1);
        let g = GroupSpec::new(3, vec![1, 1]).unwrap();
        let mu = MultilinearForm::new(3, vec![1, 1], vec![1]).unwrap();
        let fam = CubicalFamily::uniform(&phase(&g, &mu, false));
        let r = greedy_spectrum_approx(&fam, 1e-6, None, &opts).unwrap();
        assert!(r.success);
        assert!(r.residuals().last().unwrap() < &1e-9);
        assert!(r.residuals().windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
}
