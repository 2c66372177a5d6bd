//! Cubical convolutions and their approximation by functions of multiaffine maps.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::str::FromStr;

use crate::error::{Budget, Error, Result};
use crate::forms::MultiaffineForm;
use crate::fourier::{fourier_transform, large_spectrum_of};
use crate::group::GroupSpec;
use crate::table::{pairs, CubicalFamily, FunctionTable};

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `□f(a) = E_x Π_{I ⊆ [k]} Conj^{k-|I|} f_I((x+a)_I, x_{∖I})`.
pub fn cubical_convolution(fam: &CubicalFamily, budget: Budget) -> Result<FunctionTable> {
    let g = fam.group();
    let k = g.k();
    let n = g.order();
    budget.check("cubical convolution tuples", (n as u128) * (n as u128) * (1u128 << k))?;
    let tables: Vec<Vec<Complex64>> = (0..1usize << k)
        .map(|m| {
            let t = fam.get(m).values();
            if (k - m.count_ones() as usize) % 2 == 1 {
                t.iter().map(|v| v.conj()).collect()
            } else {
                t.to_vec()
            }
        })
        .collect();
    let strides: Vec<usize> = (0..k).map(|b| g.block_stride(b)).collect();
    let values: Vec<Complex64> = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut acc = ZERO;
            let mut diff = vec![0usize; k];
            for x in 0..n {
                let xa = g.add_idx(x, a);
                for b in 0..k {
                    diff[b] = g.block_index(xa, b) * strides[b];
                }
                let mut prod = ONE;
                for (m, t) in tables.iter().enumerate() {
                    let mut idx = x;
                    for b in 0..k {
                        if m >> b & 1 == 1 {
                            idx = idx - g.block_index(x, b) * strides[b] + diff[b];
                        }
                    }
                    prod *= t[idx];
                }
                acc += prod;
            }
            acc / n as f64
        })
        .collect();
    Ok(FunctionTable::from_raw(g.clone(), values))
}

/// A multiaffine map `G_{[k]} -> F_p^m`, one form per component.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiaffineMap {
    group: GroupSpec,
    components: Vec<MultiaffineForm>,
}

impl MultiaffineMap {
    pub fn new(group: &GroupSpec, components: Vec<MultiaffineForm>) -> Result<Self> {
        for c in &components {
            if c.p() != group.p() || c.blocks() != group.dims() {
                return Err(Error::mismatch("map component does not live on the group"));
            }
        }
        Ok(MultiaffineMap { group: group.clone(), components })
    }

    pub fn trivial(group: &GroupSpec) -> Self {
        MultiaffineMap { group: group.clone(), components: vec![] }
    }

    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    pub fn components(&self) -> &[MultiaffineForm] {
        &self.components
    }

    pub fn m(&self) -> usize {
        self.components.len()
    }

    /// `λ = α(x)` encoded as `Σ_i α_i(x) p^i`, for every point.
    pub fn labels(&self) -> Result<Vec<usize>> {
        let p = self.group.p() as usize;
        p.checked_pow(self.m() as u32).ok_or_else(|| Error::input("too many map components to encode"))?;
        let mut out = vec![0usize; self.group.order()];
        let mut w = 1;
        for c in &self.components {
            for (o, v) in out.iter_mut().zip(c.eval_all()?) {
                *o += v as usize * w;
            }
            w *= p;
        }
        Ok(out)
    }
}

/// `c ∘ α` together with its distance to the fitted table.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberFit {
    pub map: MultiaffineMap,
    /// Values on nonempty fibers; absent labels mean 0.
    pub c: BTreeMap<usize, Complex64>,
    pub l2_error: f64,
}

#[derive(Serialize, Deserialize)]
struct RawFit {
    group: GroupSpec,
    map: Vec<MultiaffineForm>,
    c: BTreeMap<String, [f64; 2]>,
    l2_error: f64,
}

impl Serialize for FiberFit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawFit {
            group: self.map.group.clone(),
            map: self.map.components.clone(),
            c: self.c.iter().map(|(k, v)| (k.to_string(), [v.re, v.im])).collect(),
            l2_error: self.l2_error,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FiberFit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawFit::deserialize(d)?;
        let map = MultiaffineMap::new(&raw.group, raw.map).map_err(serde::de::Error::custom)?;
        let mut c = BTreeMap::new();
        for (k, v) in raw.c {
            c.insert(k.parse().map_err(serde::de::Error::custom)?, Complex64::new(v[0], v[1]));
        }
        Ok(FiberFit { map, c, l2_error: raw.l2_error })
    }
}

impl FiberFit {
    /// The table `c ∘ α`.
    pub fn predict(&self) -> Result<FunctionTable> {
        let labels = self.map.labels()?;
        let vals = labels.iter().map(|l| self.c.get(l).copied().unwrap_or(ZERO)).collect();
        Ok(FunctionTable::from_raw(self.map.group.clone(), vals))
    }

    /// `‖t - c ∘ α‖_{L²}` recomputed from scratch.
    pub fn error_against(&self, t: &FunctionTable) -> Result<f64> {
        t.l2_distance(&self.predict()?)
    }
}

fn fiber_means(values: &[Complex64], labels: &[usize]) -> (BTreeMap<usize, Complex64>, f64) {
    let mut sums: HashMap<usize, (Complex64, usize)> = HashMap::new();
    for (v, &l) in values.iter().zip(labels) {
        let e = sums.entry(l).or_insert((ZERO, 0));
        e.0 += v;
        e.1 += 1;
    }
    let c: BTreeMap<usize, Complex64> = sums.into_iter().map(|(l, (s, n))| (l, s / n as f64)).collect();
    let err = values.iter().zip(labels).map(|(v, l)| (v - c[l]).norm_sqr()).sum::<f64>() / values.len() as f64;
    (c, err.sqrt())
}

/// Best `c` for a fixed map: the mean of `t` on each fiber.
pub fn conditional_mean_fit(t: &FunctionTable, map: &MultiaffineMap) -> Result<FiberFit> {
    if t.group() != map.group() {
        return Err(Error::mismatch("table and map live on different groups"));
    }
    let labels = map.labels()?;
    let (c, l2_error) = fiber_means(t.values(), &labels);
    Ok(FiberFit { map: map.clone(), c, l2_error })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Exhaustive,
    Spectrum,
    Constructive,
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(Strategy::Exhaustive),
            "spectrum" => Ok(Strategy::Spectrum),
            "constructive" => Ok(Strategy::Constructive),
            _ => Err(Error::input(format!("unknown strategy {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultconvOptions {
    /// Cap on the number of map components.
    pub max_components: usize,
    pub budget: Budget,
    /// Spectral threshold of the constructive strategy; defaults to `sqrt(eps) / 2`.
    pub rho: Option<f64>,
    /// Frequency threshold of the constructive strategy; defaults to `eps² / 16`.
    pub xi: Option<f64>,
}

impl Default for MultconvOptions {
    fn default() -> Self {
        MultconvOptions { max_components: 3, budget: Budget::default(), rho: None, xi: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultconvResult {
    pub fit: FiberFit,
    pub success: bool,
    pub strategy: Strategy,
    /// Number of candidate maps whose fit was evaluated.
    pub evaluated: u128,
}

/// Finds `α` and `c` with `‖□f - c ∘ α‖_{L²} <= eps`, or the best fit seen.
pub fn multconv_approx(fam: &CubicalFamily, eps: f64, strategy: Strategy, opts: &MultconvOptions) -> Result<MultconvResult> {
    if !(eps > 0.0) {
        return Err(Error::input("eps must be positive"));
    }
    let boxf = cubical_convolution(fam, opts.budget)?;
    match strategy {
        Strategy::Exhaustive => exhaustive_fit(&boxf, eps, opts),
        Strategy::Spectrum => {
            let g = crate::spectrum::greedy_spectrum_approx(fam, eps, None, opts)?;
            Ok(MultconvResult { success: g.fit.l2_error <= eps, fit: g.fit, strategy, evaluated: g.evaluated })
        }
        Strategy::Constructive => constructive_fit(fam, &boxf, eps, opts),
    }
}

/// Non-constant multiaffine forms with leading coefficient 1, by weight then lexicographically.
pub fn candidate_forms(g: &GroupSpec, budget: Budget) -> Result<Vec<MultiaffineForm>> {
    let p = g.p();
    let len = MultiaffineForm::flat_len(g.dims());
    let free = len - 1;
    let total = (p as u128).checked_pow(free as u32).unwrap_or(u128::MAX);
    budget.check("candidate multiaffine forms", total)?;
    let mut vecs: Vec<Vec<u8>> = Vec::new();
    for mut idx in 0..total {
        let mut v = vec![0u8; len];
        for c in v[1..].iter_mut().rev() {
            *c = (idx % p as u128) as u8;
            idx /= p as u128;
        }
        if v.iter().find(|&&c| c != 0) == Some(&1) {
            vecs.push(v);
        }
    }
    vecs.sort_by_key(|v| (v.iter().filter(|&&c| c != 0).count(), v.clone()));
    vecs.iter().map(|v| MultiaffineForm::from_flat(p, g.dims().to_vec(), v)).collect()
}

/// Greedy over components, exhaustive over each new component.
pub(crate) fn exhaustive_fit(boxf: &FunctionTable, eps: f64, opts: &MultconvOptions) -> Result<MultconvResult> {
    let g = boxf.group();
    let p = g.p() as usize;
    let mut map = MultiaffineMap::trivial(g);
    let mut fit = conditional_mean_fit(boxf, &map)?;
    let mut evaluated = 1u128;
    if fit.l2_error <= eps {
        return Ok(MultconvResult { fit, success: true, strategy: Strategy::Exhaustive, evaluated });
    }
    let cands = candidate_forms(g, opts.budget)?;
    let per_round = cands.len() as u128 * g.order() as u128;
    opts.budget.check("exhaustive fit evaluations", per_round.saturating_mul(opts.max_components as u128))?;
    let mut labels = map.labels()?;
    for m in 0..opts.max_components {
        let w = p.pow(m as u32);
        let best = cands
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let vals = c.eval_all().expect("candidate on the group");
                let lab: Vec<usize> = labels.iter().zip(&vals).map(|(l, &v)| l + v as usize * w).collect();
                let (_, err) = fiber_means(boxf.values(), &lab);
                (err, i)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .expect("nonempty candidates");
        evaluated += cands.len() as u128;
        if best.0 >= fit.l2_error - 1e-12 {
            break;
        }
        let mut comps = map.components.clone();
        comps.push(cands[best.1].clone());
        map = MultiaffineMap::new(g, comps)?;
        labels = map.labels()?;
        fit = conditional_mean_fit(boxf, &map)?;
        if fit.l2_error <= eps {
            break;
        }
    }
    let success = fit.l2_error <= eps;
    Ok(MultconvResult { fit, success, strategy: Strategy::Exhaustive, evaluated })
}

/// Group of the first `k - 1` blocks (trivial when `k = 1`).
pub fn prefix_group(g: &GroupSpec) -> GroupSpec {
    let k = g.k();
    let dims = if k == 1 { vec![0] } else { g.dims()[..k - 1].to_vec() };
    GroupSpec::with_cap(g.p(), dims, usize::MAX).expect("prefix of a valid group")
}

/// The two slice functions on `G_k` whose convolution, averaged over `x`, is the slice of `□f` at `a`.
///
/// Returns `(Π_I Conj^{k-1-|I|} f_{I∪{k}}, Π_I Conj^{k-1-|I|} f_I)` evaluated at `((x+a)_I, x_{∖I}, y)`.
pub fn slice_functions(fam: &CubicalFamily, a_prefix: usize, x_prefix: usize) -> Result<(FunctionTable, FunctionTable)> {
    let g = fam.group();
    let k = g.k();
    let pg = prefix_group(g);
    if a_prefix >= pg.order() || x_prefix >= pg.order() {
        return Err(Error::input("prefix index out of range"));
    }
    let last = k - 1;
    let gk = g.block_group(last);
    let stride = g.block_stride(last);
    let xa = pg.add_idx(x_prefix, a_prefix);
    let top = 1usize << last;
    let mut fv = vec![ONE; gk.order()];
    let mut gv = vec![ONE; gk.order()];
    for mask in 0..top {
        let mut base = 0;
        for b in 0..last {
            let src = if mask >> b & 1 == 1 { xa } else { x_prefix };
            base += g.block_index(src, b) * g.block_stride(b);
        }
        let conj = (last - mask.count_ones() as usize) % 2 == 1;
        for y in 0..gk.order() {
            let idx = base + y * stride;
            let (u, v) = (fam.get(mask | top).get(idx), fam.get(mask).get(idx));
            fv[y] *= if conj { u.conj() } else { u };
            gv[y] *= if conj { v.conj() } else { v };
        }
    }
    Ok((FunctionTable::from_raw(gk.clone(), fv), FunctionTable::from_raw(gk, gv)))
}

/// `S_{x,a}`: frequencies where both slice transforms have magnitude at least `rho`.
pub fn slice_large_fc_sets(fam: &CubicalFamily, a_prefix: usize, x_prefix: usize, rho: f64) -> Result<Vec<usize>> {
    if !(rho > 0.0) {
        return Err(Error::input("rho must be positive"));
    }
    let (f, h) = slice_functions(fam, a_prefix, x_prefix)?;
    let fs: BTreeSet<usize> = large_spectrum_of(&fourier_transform(&f), rho).into_iter().collect();
    Ok(large_spectrum_of(&fourier_transform(&h), rho).into_iter().filter(|r| fs.contains(r)).collect())
}

/// `R_a`: frequencies lying in `S_{x,a}` for at least a `xi` fraction of `x`.
pub fn frequent_freq_set(fam: &CubicalFamily, a_prefix: usize, rho: f64, xi: f64) -> Result<Vec<usize>> {
    if !(xi > 0.0) {
        return Err(Error::input("xi must be positive"));
    }
    let pg = prefix_group(fam.group());
    let sets: Vec<Vec<usize>> =
        (0..pg.order()).into_par_iter().map(|x| slice_large_fc_sets(fam, a_prefix, x, rho)).collect::<Result<_>>()?;
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for s in &sets {
        for &r in s {
            *counts.entry(r).or_default() += 1;
        }
    }
    let need = xi * pg.order() as f64 - 1e-9;
    Ok(counts.into_iter().filter(|&(_, c)| c as f64 >= need).map(|(r, _)| r).collect())
}

/// `‖Σ_{r ∈ set} E_d ω^{r·(a_k - d)} □f(a, d)‖_{L², a_k}`, i.e. the spectral mass of the slice on `set`.
pub fn slice_spectral_mass(boxf: &FunctionTable, a_prefix: usize, set: &[usize]) -> Result<f64> {
    let g = boxf.group();
    let last = g.k() - 1;
    let gk = g.block_group(last);
    let stride = g.block_stride(last);
    let slice: Vec<Complex64> = (0..gk.order()).map(|y| boxf.get(a_prefix + y * stride)).collect();
    let hat = fourier_transform(&FunctionTable::from_raw(gk.clone(), slice));
    let mut mass = 0.0;
    for &r in set {
        if r >= gk.order() {
            return Err(Error::input("frequency out of range"));
        }
        mass += hat.get(r).norm_sqr();
    }
    Ok(mass.sqrt())
}

/// Mass of `□f`'s slice outside `R_a` next to `min(1, ρ² + ξ ρ^{-2})`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrequentSetReport {
    pub set: Vec<usize>,
    pub outside_mass: f64,
    pub bound: f64,
}

pub fn frequent_set_check(fam: &CubicalFamily, boxf: &FunctionTable, a_prefix: usize, rho: f64, xi: f64) -> Result<FrequentSetReport> {
    let set = frequent_freq_set(fam, a_prefix, rho, xi)?;
    let gk = fam.group().block_group(fam.group().k() - 1);
    let inside: BTreeSet<usize> = set.iter().copied().collect();
    let outside: Vec<usize> = (0..gk.order()).filter(|r| !inside.contains(r)).collect();
    let outside_mass = slice_spectral_mass(boxf, a_prefix, &outside)?;
    let bound = (rho * rho + xi / (rho * rho)).min(1.0);
    Ok(FrequentSetReport { set, outside_mass, bound })
}

/// `(total, respected)` `d`-additive quadruples of `dom(phi)`; `phi` maps indices of `domain` to indices of `target`.
pub fn count_d_additive_quadruples(domain: &GroupSpec, target: &GroupSpec, phi: &BTreeMap<usize, usize>, d: usize) -> Result<(u64, u64)> {
    if d >= domain.k() {
        return Err(Error::input(format!("direction {d} out of range")));
    }
    if phi.keys().any(|&x| x >= domain.order()) || phi.values().any(|&y| y >= target.order()) {
        return Err(Error::input("map point out of range"));
    }
    let stride = domain.block_stride(d);
    let mut lines: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &x in phi.keys() {
        let off = x - domain.block_index(x, d) * stride;
        lines.entry(off).or_default().push(x);
    }
    let (mut total, mut respected) = (0u64, 0u64);
    for pts in lines.values() {
        for &x1 in pts {
            for &x2 in pts {
                for &x3 in pts {
                    let x4 = domain.add_idx(domain.sub_idx(x1, x2), x3);
                    if let Some(&y4) = phi.get(&x4) {
                        total += 1;
                        let s = target.add_idx(target.sub_idx(phi[&x1], phi[&x2]), phi[&x3]);
                        if s == y4 {
                            respected += 1;
                        }
                    }
                }
            }
        }
    }
    Ok((total, respected))
}

/// `x ↦ M x + s` between coordinate spaces over `F_p`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffineMap {
    pub p: u32,
    /// `cod × dom`, row-major.
    pub matrix: Vec<Vec<u8>>,
    pub shift: Vec<u8>,
}

impl AffineMap {
    pub fn apply(&self, x: &[u8]) -> Vec<u8> {
        self.matrix
            .iter()
            .zip(&self.shift)
            .map(|(row, &s)| {
                let v: u32 = row.iter().zip(x).map(|(&a, &b)| a as u32 * b as u32).sum::<u32>() + s as u32;
                (v % self.p) as u8
            })
            .collect()
    }

    /// The `idx`-th map in lexicographic order of (matrix rows, shift).
    pub fn from_index(p: u32, dom: usize, cod: usize, mut idx: u128) -> Self {
        let mut flat = vec![0u8; cod * (dom + 1)];
        for c in flat.iter_mut().rev() {
            *c = (idx % p as u128) as u8;
            idx /= p as u128;
        }
        let matrix = (0..cod).map(|i| flat[i * dom..(i + 1) * dom].to_vec()).collect();
        AffineMap { p, matrix, shift: flat[cod * dom..].to_vec() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AffineFit {
    pub map: AffineMap,
    pub agreement: usize,
}

/// Global affine map agreeing with `phi` on the most points, by exhaustive search.
pub fn freiman_affine_fit(domain: &GroupSpec, target: &GroupSpec, phi: &BTreeMap<usize, usize>, budget: Budget) -> Result<AffineFit> {
    if domain.p() != target.p() {
        return Err(Error::mismatch("domain and target over different fields"));
    }
    let p = domain.p();
    let (dn, cn) = (domain.n(), target.n());
    let total = (p as u128).checked_pow((cn * (dn + 1)) as u32).unwrap_or(u128::MAX);
    budget.check("affine maps", total.saturating_mul(phi.len().max(1) as u128))?;
    let pts: Vec<(Vec<u8>, Vec<u8>)> = phi
        .iter()
        .map(|(&x, &y)| Ok((domain.point_of(x)?.coords, target.point_of(y)?.coords)))
        .collect::<Result<_>>()?;
    let (agree, Reverse(best)) = (0..total as u64)
        .into_par_iter()
        .map(|t| {
            let m = AffineMap::from_index(p, dn, cn, t as u128);
            let a = pts.iter().filter(|(x, y)| &m.apply(x) == y).count();
            (a, Reverse(t))
        })
        .max()
        .expect("at least one map");
    Ok(AffineFit { map: AffineMap::from_index(p, dn, cn, best as u128), agreement: agree })
}

/// One signed term `(-1)^{|I|} 1(Φ_j = Φ_i for j ∈ I)` with `I ⊆ [i-1]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IeTerm {
    pub i: usize,
    pub subset: Vec<usize>,
    pub sign: i8,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IeSchedule {
    pub terms: Vec<IeTerm>,
}

/// Signed terms turning `Σ_i h(Φ_i(a))` into a sum over the distinct values `{Φ_i(a)}`.
pub fn inclusion_exclusion_fibers(m: usize, budget: Budget) -> Result<IeSchedule> {
    if m == 0 {
        return Err(Error::input("need at least one map"));
    }
    budget.check("inclusion-exclusion terms", (1u128 << m.min(127)) - 1)?;
    let mut terms = Vec::new();
    for i in 0..m {
        for mask in 0u64..(1 << i) {
            let subset: Vec<usize> = (0..i).filter(|j| mask >> j & 1 == 1).collect();
            let sign = if subset.len().is_multiple_of(2) { 1 } else { -1 };
            terms.push(IeTerm { i, subset, sign });
        }
    }
    Ok(IeSchedule { terms })
}

impl IeSchedule {
    /// `Σ_terms sign · 1(coincidence) · h(Φ_i(a))`, where `values[i]` is `Φ_i(a)`.
    pub fn apply(&self, values: &[usize], h: impl Fn(usize) -> Complex64) -> Complex64 {
        self.terms
            .iter()
            .filter(|t| t.subset.iter().all(|&j| values[j] == values[t.i]))
            .map(|t| h(values[t.i]) * t.sign as f64)
            .sum()
    }
}

/// `a ↦ Φ(a_1) · a_2` as a form on two blocks.
fn pairing_form(g: &GroupSpec, phi: &AffineMap) -> Result<MultiaffineForm> {
    let p = g.p();
    let (n1, n2) = (g.dims()[0], g.dims()[1]);
    let mut flat = vec![0u8; MultiaffineForm::flat_len(g.dims())];
    // parts by mask: ∅ (1), {0} (n1), {1} (n2), {0,1} (n1 n2)
    for c2 in 0..n2 {
        flat[1 + n1 + c2] = phi.shift[c2];
        for c1 in 0..n1 {
            flat[1 + n1 + n2 + c1 + n1 * c2] = phi.matrix[c2][c1];
        }
    }
    MultiaffineForm::from_flat(p, g.dims().to_vec(), &flat)
}

fn linear_form(g: &GroupSpec, r: usize) -> Result<MultiaffineForm> {
    let n = g.dims()[0];
    let mut flat = vec![0u8; n + 1];
    let coords = g.point_of(r)?.coords;
    flat[1..].copy_from_slice(&coords);
    MultiaffineForm::from_flat(g.p(), g.dims().to_vec(), &flat)
}

/// Desk-scale version of the slicing pipeline, for `k <= 2`.
fn constructive_fit(fam: &CubicalFamily, boxf: &FunctionTable, eps: f64, opts: &MultconvOptions) -> Result<MultconvResult> {
    let g = fam.group();
    let k = g.k();
    if k > 2 {
        return Err(Error::input("constructive strategy supports at most two blocks"));
    }
    let mut comps = Vec::new();
    let mut evaluated = 0u128;
    if k == 1 {
        let hat = fourier_transform(boxf);
        let mut freqs: Vec<usize> = (0..g.order()).collect();
        freqs.sort_by(|&a, &b| hat.get(b).norm().total_cmp(&hat.get(a).norm()).then(a.cmp(&b)));
        let mut tail: f64 = hat.coeffs().iter().map(|c| c.norm_sqr()).sum();
        for r in freqs {
            if tail.max(0.0).sqrt() <= eps || comps.len() >= opts.max_components {
                break;
            }
            tail -= hat.get(r).norm_sqr();
            if r != 0 {
                comps.push(linear_form(g, r)?);
            }
            evaluated += 1;
        }
    } else {
        let rho = opts.rho.unwrap_or(eps.sqrt() / 2.0);
        let xi = opts.xi.unwrap_or(eps * eps / 16.0);
        let pg = prefix_group(g);
        let gk = g.block_group(1);
        let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
        for a in 0..pg.order() {
            for r in frequent_freq_set(fam, a, rho, xi)? {
                pairs.insert((a, r));
            }
        }
        while !pairs.is_empty() && comps.len() < opts.max_components {
            let mut psi: BTreeMap<usize, usize> = BTreeMap::new();
            for &(a, r) in &pairs {
                psi.entry(a).or_insert(r);
            }
            let fit = freiman_affine_fit(&pg, &gk, &psi, opts.budget)?;
            evaluated += 1;
            let map = fit.map;
            let before = pairs.len();
            pairs.retain(|&(a, r)| {
                let img = gk.index_of_coords(&map.apply(&pg.point_of(a).expect("prefix point").coords));
                img != r
            });
            if pairs.len() == before {
                break;
            }
            comps.push(pairing_form(g, &map)?);
        }
    }
    let map = MultiaffineMap::new(g, comps)?;
    let fit = conditional_mean_fit(boxf, &map)?;
    Ok(MultconvResult { success: fit.l2_error <= eps, fit, strategy: Strategy::Constructive, evaluated })
}

/// JSON-friendly pairs for a fit's prediction.
pub fn fit_values(fit: &FiberFit) -> Result<Vec<[f64; 2]>> {
    Ok(pairs(fit.predict()?.values()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::MultilinearForm;
    use crate::fourier::convolve;
    use crate::table::{gen_random_bounded, rng};
    use rand::Rng;

    fn phase_family(g: &GroupSpec, mu: &MultilinearForm) -> CubicalFamily {
        let vals = mu.eval_all().unwrap();
        let f = FunctionTable::from_fn(g, |x| g.omega(vals[x])).unwrap();
        CubicalFamily::uniform(&f)
    }

    fn naive_box(fam: &CubicalFamily) -> Vec<Complex64> {
        let g = fam.group();
        let k = g.k();
        (0..g.order())
            .map(|a| {
                let mut acc = ZERO;
                for x in 0..g.order() {
                    let xs = g.point_of(x).unwrap();
                    let xa = g.add(&xs, &g.point_of(a).unwrap()).unwrap();
                    let mut prod = ONE;
                    for m in 0..1usize << k {
                        let mut c = xs.coords.clone();
                        for b in 0..k {
                            if m >> b & 1 == 1 {
                                let o = g.block_offset(b);
                                c[o..o + g.dims()[b]].copy_from_slice(&xa.coords[o..o + g.dims()[b]]);
                            }
                        }
                        let v = fam.get(m).get(g.index_of_coords(&c));
                        prod *= if (k - m.count_ones() as usize) % 2 == 1 { v.conj() } else { v };
                    }
                    acc += prod;
                }
                acc / g.order() as f64
            })
            .collect()
    }

    #[test]
    fn convolution_matches_naive() {
        let g = GroupSpec::new(3, vec![1, 1]).unwrap();
        let tables = (0..4).map(|s| gen_random_bounded(&g, s)).collect();
        let fam = CubicalFamily::new(&g, tables).unwrap();
        let fast = cubical_convolution(&fam, Budget::default()).unwrap();
        for (a, b) in fast.values().iter().zip(naive_box(&fam)) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn convolution_examples() {
        let g = GroupSpec::new(2, vec![1, 1]).unwrap();
        let ones = cubical_convolution(&CubicalFamily::uniform(&FunctionTable::ones(&g)), Budget::default()).unwrap();
        assert!(ones.values().iter().all(|v| (v - 1.0).norm() < 1e-12));
        for (p, dims) in [(2, vec![1, 1]), (3, vec![1, 1]), (2, vec![2, 1])] {
            let g = GroupSpec::new(p, dims.clone()).unwrap();
            let mu = MultilinearForm::random(p, dims, 5);
            let vals = mu.eval_all().unwrap();
            let b = cubical_convolution(&phase_family(&g, &mu), Budget::default()).unwrap();
            for a in 0..g.order() {
                assert!((b.get(a) - g.omega(vals[a])).norm() < 1e-12);
            }
        }
        let g1 = GroupSpec::new(3, vec![2]).unwrap();
        let f = gen_random_bounded(&g1, 9);
        let h = gen_random_bounded(&g1, 10);
        let fam = CubicalFamily::new(&g1, vec![h.clone(), f.clone()]).unwrap();
        let b = cubical_convolution(&fam, Budget::default()).unwrap();
        assert!(b.max_abs_diff(&convolve(&f, &h).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn conditional_mean_examples() {
        let g = GroupSpec::new(3, vec![1, 1]).unwrap();
        let c = FunctionTable::constant(&g, Complex64::new(0.3, 0.1)).unwrap();
        let fit = conditional_mean_fit(&c, &MultiaffineMap::trivial(&g)).unwrap();
        assert!(fit.l2_error < 1e-12 && (fit.c[&0] - Complex64::new(0.3, 0.1)).norm() < 1e-12);
        let t = gen_random_bounded(&g, 2);
        let fit = conditional_mean_fit(&t, &MultiaffineMap::trivial(&g)).unwrap();
        let mean = t.mean();
        let dev = t.values().iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / 9.0;
        assert!((fit.l2_error - dev.sqrt()).abs() < 1e-12);
        let mu = MultilinearForm::random(3, vec![1, 1], 1);
        let vals = mu.eval_all().unwrap();
        let t = FunctionTable::from_fn(&g, |x| g.omega(vals[x])).unwrap();
        let map = MultiaffineMap::new(&g, vec![MultiaffineForm::from_multilinear(&mu)]).unwrap();
        let fit = conditional_mean_fit(&t, &map).unwrap();
        assert!(fit.l2_error < 1e-9);
        assert!((fit.error_against(&t).unwrap() - fit.l2_error).abs() < 1e-9);
    }

    #[test]
    fn conditional_mean_is_optimal() {
        let g = GroupSpec::new(2, vec![1, 2]).unwrap();
        let t = gen_random_bounded(&g, 4);
        let map = MultiaffineMap::new(&g, vec![MultiaffineForm::random(2, vec![1, 2], 3)]).unwrap();
        let fit = conditional_mean_fit(&t, &map).unwrap();
        for &l in fit.c.keys() {
            for d in [Complex64::new(0.01, 0.0), Complex64::new(-0.01, 0.0), Complex64::new(0.0, 0.01)] {
                let mut other = fit.clone();
                *other.c.get_mut(&l).unwrap() += d;
                assert!(other.error_against(&t).unwrap() >= fit.l2_error - 1e-12);
            }
        }
    }

    #[test]
    fn multconv_examples() {
        let g = GroupSpec::new(2, vec![1, 1]).unwrap();
        let opts = MultconvOptions::default();
        let ones = CubicalFamily::uniform(&FunctionTable::ones(&g));
        let r = multconv_approx(&ones, 0.01, Strategy::Exhaustive, &opts).unwrap();
        assert!(r.success && r.fit.map.m() == 0);
        let g = GroupSpec::new(3, vec![1, 1]).unwrap();
        let mu = MultilinearForm::new(3, vec![1, 1], vec![1]).unwrap();
        let fam = phase_family(&g, &mu);
        for s in [Strategy::Exhaustive, Strategy::Constructive] {
            let r = multconv_approx(&fam, 1e-6, s, &opts).unwrap();
            assert!(r.success, "{s:?}");
            assert!(r.fit.l2_error < 1e-9);
        }
    }

    #[test]
    fn slice_set_examples() {
        let g = GroupSpec::new(2, vec![1, 1]).unwrap();
        let ones = CubicalFamily::uniform(&FunctionTable::ones(&g));
        assert_eq!(slice_large_fc_sets(&ones, 1, 0, 1.0).unwrap(), vec![0]);
        assert!(slice_large_fc_sets(&ones, 1, 0, 1.01).unwrap().is_empty());
        assert_eq!(frequent_freq_set(&ones, 0, 0.5, 0.5).unwrap(), vec![0]);
        assert!(frequent_freq_set(&ones, 0, 0.5, 1.5).unwrap().is_empty());
        let mu = MultilinearForm::new(2, vec![1, 1], vec![1]).unwrap();
        let fam = phase_family(&g, &mu);
        for a in 0..2 {
            assert_eq!(frequent_freq_set(&fam, a, 0.5, 0.5).unwrap(), vec![a]);
        }
    }

    #[test]
    fn quadruple_counts_match_brute_force() {
        let dom = GroupSpec::new(2, vec![1, 1, 2]).unwrap();
        let tgt = GroupSpec::new(2, vec![1]).unwrap();
        let mut r = rng(3);
        let phi: BTreeMap<usize, usize> = (0..dom.order())
            .filter(|_| r.gen_bool(0.5))
            .map(|x| {
                let c = dom.point_of(x).unwrap().coords;
                (x, ((c[0] + c[2] + c[3] + 1) % 2) as usize)
            })
            .collect();
        for d in 0..3 {
            let (total, respected) = count_d_additive_quadruples(&dom, &tgt, &phi, d).unwrap();
            assert_eq!(total, respected);
            let keys: Vec<usize> = phi.keys().copied().collect();
            let mut brute = 0;
            for &a in &keys {
                for &b in &keys {
                    for &c in &keys {
                        for &e in &keys {
                            let same = (0..3).filter(|&j| j != d).all(|j| {
                                dom.block_index(a, j) == dom.block_index(b, j)
                                    && dom.block_index(a, j) == dom.block_index(c, j)
                                    && dom.block_index(a, j) == dom.block_index(e, j)
                            });
                            if same && dom.add_idx(dom.sub_idx(a, b), dom.sub_idx(c, e)) == 0 {
                                brute += 1;
                            }
                        }
                    }
                }
            }
            assert_eq!(total, brute);
        }
        assert_eq!(count_d_additive_quadruples(&dom, &tgt, &BTreeMap::new(), 0).unwrap(), (0, 0));
    }

    #[test]
    fn freiman_fit_recovers_corrupted_map() {
        let dom = GroupSpec::new(2, vec![3]).unwrap();
        let tgt = GroupSpec::new(2, vec![1]).unwrap();
        let truth = AffineMap { p: 2, matrix: vec![vec![1, 0, 1]], shift: vec![1] };
        let mut phi: BTreeMap<usize, usize> =
            (0..8).map(|x| (x, truth.apply(&dom.point_of(x).unwrap().coords)[0] as usize)).collect();
        let fit = freiman_affine_fit(&dom, &tgt, &phi, Budget::default()).unwrap();
        assert_eq!(fit.agreement, 8);
        assert_eq!(fit.map, truth);
        *phi.get_mut(&5).unwrap() ^= 1;
        let fit = freiman_affine_fit(&dom, &tgt, &phi, Budget::default()).unwrap();
        assert!(fit.agreement >= 7);
        let single: BTreeMap<usize, usize> = [(3, 1)].into_iter().collect();
        assert_eq!(freiman_affine_fit(&dom, &tgt, &single, Budget::default()).unwrap().agreement, 1);
    }

    #[test]
    fn inclusion_exclusion_counts_distinct_values() {
        let s = inclusion_exclusion_fibers(1, Budget::default()).unwrap();
        assert_eq!(s.terms.len(), 1);
        let s = inclusion_exclusion_fibers(3, Budget::default()).unwrap();
        let h = |r: usize| Complex64::new(r as f64 + 1.0, 0.0);
        for vals in [[0usize, 0, 0], [0, 1, 0], [2, 1, 3], [1, 1, 2]] {
            let set: BTreeSet<usize> = vals.iter().copied().collect();
            let direct: Complex64 = set.iter().map(|&r| h(r)).sum();
            assert!((s.apply(&vals, h) - direct).norm() < 1e-12);
        }
    }
}
