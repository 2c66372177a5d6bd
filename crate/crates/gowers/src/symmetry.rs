//! Symmetry defects of forms `ψ` on `(G⊕)^{r-1} x G_1 x ... x G_k` and the passage
//! from an exactly symmetric `ψ` to a polynomial.
//!
//! `ψ` is stored as a [`MultilinearForm`] with blocks `[N; r-1] ++ dims`, `N = Σ dims`.
//! Coordinate `c < N` of an `a`-block is coordinate `c - off_d` of block `d`.
//! Polynomials use blocks `0..k` for `x` and `l·k .. (l+1)·k` for `a^{(l)}`.

use itertools::Itertools;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::forms::MultilinearForm;
use crate::group::{inv_mod, GroupSpec};
use crate::poly::{Monomial, Polynomial};

fn offsets(dims: &[usize]) -> Vec<usize> {
    dims.iter()
        .scan(0, |acc, &n| {
            let o = *acc;
            *acc += n;
            Some(o)
        })
        .collect()
}

fn locate(dims: &[usize], mut c: usize) -> (usize, usize) {
    for (b, &n) in dims.iter().enumerate() {
        if c < n {
            return (b, c);
        }
        c -= n;
    }
    panic!("coordinate past the end of the group");
}

/// The `r` for which `psi` has the shape `[N; r-1] ++ dims`.
pub fn psi_order(psi: &MultilinearForm, dims: &[usize]) -> Result<usize> {
    let k = dims.len();
    let n: usize = dims.iter().sum();
    let b = psi.blocks();
    if k == 0 || b.len() < k || b[b.len() - k..] != *dims || b[..b.len() - k].iter().any(|&m| m != n) {
        return Err(Error::mismatch(format!("form blocks {b:?} are not [{n}; r-1] ++ {dims:?}")));
    }
    Ok(b.len() - k + 1)
}

/// Group on which polynomials in `x, a^{(1)}, ..., a^{(r-1)}` are evaluated.
pub fn extended_group(p: u32, dims: &[usize], r: usize) -> Result<GroupSpec> {
    GroupSpec::new(p, dims.iter().copied().cycle().take(dims.len() * r).collect())
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    (0..n).permutations(n).collect()
}

fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (j, &v) in perm.iter().enumerate() {
        inv[v] = j;
    }
    inv
}

fn check_perm(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n || perm.iter().any(|&v| v >= n || std::mem::replace(&mut seen[v], true)) {
        return Err(Error::input(format!("{perm:?} is not a permutation of 0..{n}")));
    }
    Ok(())
}

fn factorial_mod(n: usize, p: u32) -> u32 {
    (1..=n as u32).fold(1, |acc, v| acc * (v % p) % p)
}

/// `ψ_ij`: `ψ` minus `ψ` with `a^{(i)}` and `a^{(j)}` exchanged.
pub fn psi_swap_defect(psi: &MultilinearForm, dims: &[usize], i: usize, j: usize) -> Result<MultilinearForm> {
    let r = psi_order(psi, dims)?;
    if i >= j || j >= r - 1 {
        return Err(Error::input(format!("swap indices need i < j < {}, got ({i}, {j})", r - 1)));
    }
    let mut perm: Vec<usize> = (0..psi.arity()).collect();
    perm.swap(i, j);
    psi.sub(&psi.permute_blocks(&perm))
}

/// `ψ'_ij` on blocks where `a^{(i)}` is replaced by a variable `u` of `G_j`:
/// `ψ(.., e_j(u), .., d) - ψ(.., e_j(d_j), .., d with d_j -> u)`.
pub fn psi_mixed_defect(psi: &MultilinearForm, dims: &[usize], i: usize, j: usize) -> Result<MultilinearForm> {
    let r = psi_order(psi, dims)?;
    if i >= r - 1 || j >= dims.len() {
        return Err(Error::input(format!("mixed defect indices ({i}, {j}) out of range")));
    }
    let off = offsets(dims)[j];
    let xj = r - 1 + j;
    let mut blocks = psi.blocks().to_vec();
    blocks[i] = dims[j];
    let mut out = MultilinearForm::zero(psi.p(), blocks);
    let p = psi.p();
    for idx in 0..out.coeffs().len() {
        let cs = out.unflat(idx);
        let (s, t) = (cs[i], cs[xj]);
        let mut c1 = cs.clone();
        c1[i] = off + s;
        let mut c2 = cs.clone();
        c2[i] = off + t;
        c2[xj] = s;
        out.set(&cs, psi.coeff(&c1) + p - psi.coeff(&c2));
    }
    Ok(out)
}

/// True when every `ψ_ij` and every `ψ'_ij` is the zero form.
pub fn is_exactly_symmetric(psi: &MultilinearForm, dims: &[usize]) -> Result<bool> {
    let r = psi_order(psi, dims)?;
    for i in 0..r.saturating_sub(1) {
        for j in i + 1..r - 1 {
            if !psi_swap_defect(psi, dims, i, j)?.is_zero() {
                return Ok(false);
            }
        }
        for j in 0..dims.len() {
            if !psi_mixed_defect(psi, dims, i, j)?.is_zero() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// The slices `ψ_i(b_1, .., b_{r-1}, x) = ψ(e_{i_1}(b_1), .., e_{i_{r-1}}(b_{r-1}), x)`
/// for `i ∈ [k]^{r-1}`; `ψ` is their sum over `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymmetricSlice {
    p: u32,
    dims: Vec<usize>,
    r: usize,
    slices: BTreeMap<Vec<usize>, MultilinearForm>,
}

/// A permutation acting on a slice family.
#[derive(Clone, Debug)]
pub enum BlockAction {
    /// `σ ∈ Sym_{r-1}` acting on every slice: `(σψ)_i(b, x) = ψ_{iσ}(bσ, x)`.
    Sigma(Vec<usize>),
    /// `τ ∈ Sym(i)` acting on the single slice `i`: `(τψ_i)(y) = ψ_i(yτ)`.
    Tau { index: Vec<usize>, perm: Vec<usize> },
}

fn slice_indices(k: usize, len: usize) -> Vec<Vec<usize>> {
    let total = k.pow(len as u32);
    (0..total)
        .map(|mut t| {
            (0..len)
                .map(|_| {
                    let d = t % k;
                    t /= k;
                    d
                })
                .collect()
        })
        .collect()
}

impl SymmetricSlice {
    pub fn from_psi(psi: &MultilinearForm, dims: &[usize]) -> Result<Self> {
        let r = psi_order(psi, dims)?;
        let offs = offsets(dims);
        let mut slices = BTreeMap::new();
        for index in slice_indices(dims.len(), r - 1) {
            let blocks: Vec<usize> = index.iter().map(|&d| dims[d]).chain(dims.iter().copied()).collect();
            let mut s = MultilinearForm::zero(psi.p(), blocks);
            for idx in 0..s.coeffs().len() {
                let mut full = s.unflat(idx);
                for (l, &d) in index.iter().enumerate() {
                    full[l] += offs[d];
                }
                s.set(&s.unflat(idx), psi.coeff(&full));
            }
            slices.insert(index, s);
        }
        Ok(SymmetricSlice { p: psi.p(), dims: dims.to_vec(), r, slices })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn slices(&self) -> &BTreeMap<Vec<usize>, MultilinearForm> {
        &self.slices
    }

    pub fn slice(&self, index: &[usize]) -> Option<&MultilinearForm> {
        self.slices.get(index)
    }

    /// Reassembles `ψ = Σ_i ψ_i(a^{(1)}_{i_1}, .., x)`.
    pub fn reconstruct(&self) -> MultilinearForm {
        let n: usize = self.dims.iter().sum();
        let blocks: Vec<usize> = std::iter::repeat_n(n, self.r - 1).chain(self.dims.iter().copied()).collect();
        let mut psi = MultilinearForm::zero(self.p, blocks);
        let offs = offsets(&self.dims);
        for (index, s) in &self.slices {
            for idx in 0..s.coeffs().len() {
                let mut cs = s.unflat(idx);
                for (l, &d) in index.iter().enumerate() {
                    cs[l] += offs[d];
                }
                psi.set(&cs, s.coeffs()[idx] as u32);
            }
        }
        psi
    }

    /// Extended label sequence `i_1, .., i_{r-1}, 0, .., k-1`.
    fn labels(&self, index: &[usize]) -> Vec<usize> {
        index.iter().copied().chain(0..self.dims.len()).collect()
    }

    fn act_sigma(&self, sigma: &[usize]) -> Result<SymmetricSlice> {
        check_perm(sigma, self.r - 1)?;
        let k = self.dims.len();
        let mut perm = inverse_perm(sigma);
        perm.extend(self.r - 1..self.r - 1 + k);
        let slices = self
            .slices
            .keys()
            .map(|index| {
                let src: Vec<usize> = sigma.iter().map(|&s| index[s]).collect();
                (index.clone(), self.slices[&src].permute_blocks(&perm))
            })
            .collect();
        Ok(SymmetricSlice { p: self.p, dims: self.dims.clone(), r: self.r, slices })
    }

    fn act_tau(&self, index: &[usize], tau: &[usize]) -> Result<MultilinearForm> {
        let s = self.slices.get(index).ok_or_else(|| Error::input(format!("no slice {index:?}")))?;
        let labels = self.labels(index);
        check_perm(tau, labels.len())?;
        if tau.iter().enumerate().any(|(j, &t)| labels[t] != labels[j]) {
            return Err(Error::input(format!("{tau:?} does not preserve the labels {labels:?}")));
        }
        Ok(s.permute_blocks(&inverse_perm(tau)))
    }

    pub fn act(&self, action: &BlockAction) -> Result<SymmetricSlice> {
        match action {
            BlockAction::Sigma(sigma) => self.act_sigma(sigma),
            BlockAction::Tau { index, perm } => {
                let mut out = self.clone();
                let form = self.act_tau(index, perm)?;
                out.slices.insert(index.clone(), form);
                Ok(out)
            }
        }
    }

    /// All of `Sym(i)`: permutations of `0..k+r-1` preserving the extended labels.
    pub fn stabilizer(&self, index: &[usize]) -> Vec<Vec<usize>> {
        let labels = self.labels(index);
        let groups: Vec<Vec<usize>> =
            (0..self.dims.len()).map(|s| (0..labels.len()).filter(|&j| labels[j] == s).collect()).collect();
        let mut out = vec![(0..labels.len()).collect::<Vec<usize>>()];
        for g in &groups {
            let mut next = Vec::new();
            for base in &out {
                for perm in all_permutations(g.len()) {
                    let mut t = base.clone();
                    for (a, &b) in perm.iter().enumerate() {
                        t[g[a]] = g[b];
                    }
                    next.push(t);
                }
            }
            out = next;
        }
        out
    }
}

/// Free-standing form of [`SymmetricSlice::act`].
pub fn act_block_permutation(slices: &SymmetricSlice, action: &BlockAction) -> Result<SymmetricSlice> {
    slices.act(action)
}

fn accumulate(acc: &mut [u32], form: &MultilinearForm, p: u32) {
    for (a, &c) in acc.iter_mut().zip(form.coeffs()) {
        *a = (*a + c as u32) % p;
    }
}

fn scaled_form(p: u32, blocks: Vec<usize>, acc: &[u32], factor: u32) -> MultilinearForm {
    let coeffs = acc.iter().map(|&a| (a * factor % p) as u8).collect();
    MultilinearForm::new(p, blocks, coeffs).expect("reduced coefficients")
}

fn require_factorials(p: u32, r: usize) -> Result<()> {
    if (p as usize) < r + 1 {
        return Err(Error::input(format!("need p >= r + 1 to invert factorials up to {r}, got p = {p}")));
    }
    Ok(())
}

/// Exact symmetrization: average the slices over `Sym(i)`, then over `Sym_{r-1}`.
/// Errors with a verification failure if the result has a nonzero defect.
pub fn symmetrize(psi: &MultilinearForm, dims: &[usize]) -> Result<MultilinearForm> {
    let r = psi_order(psi, dims)?;
    let p = psi.p();
    require_factorials(p, r)?;
    let fam = SymmetricSlice::from_psi(psi, dims)?;

    let mut inner = fam.clone();
    for (index, s) in &fam.slices {
        let stab = fam.stabilizer(index);
        let mut acc = vec![0u32; s.coeffs().len()];
        for tau in &stab {
            accumulate(&mut acc, &fam.act_tau(index, tau)?, p);
        }
        let inv = inv_mod(stab.len() as u32 % p, p);
        inner.slices.insert(index.clone(), scaled_form(p, s.blocks().to_vec(), &acc, inv));
    }

    let sigmas = all_permutations(r - 1);
    let mut sums: BTreeMap<Vec<usize>, Vec<u32>> =
        inner.slices.iter().map(|(i, s)| (i.clone(), vec![0u32; s.coeffs().len()])).collect();
    for sigma in &sigmas {
        let moved = inner.act_sigma(sigma)?;
        for (i, s) in &moved.slices {
            accumulate(sums.get_mut(i).expect("same index set"), s, p);
        }
    }
    let inv = inv_mod(factorial_mod(r - 1, p), p);
    let slices = sums
        .into_iter()
        .map(|(i, acc)| {
            let blocks = inner.slices[&i].blocks().to_vec();
            (i, scaled_form(p, blocks, &acc, inv))
        })
        .collect();
    let rho = SymmetricSlice { p, dims: dims.to_vec(), r, slices }.reconstruct();
    if !is_exactly_symmetric(&rho, dims)? {
        return Err(Error::Verification("symmetrized form has a nonzero defect".into()));
    }
    Ok(rho)
}

/// `ψ` as a polynomial in `x` (blocks `0..k`) and `a^{(l)}` (blocks `l·k..(l+1)·k`).
pub fn psi_polynomial(psi: &MultilinearForm, dims: &[usize]) -> Result<Polynomial> {
    let r = psi_order(psi, dims)?;
    let k = dims.len();
    let mut terms = Vec::new();
    for idx in 0..psi.coeffs().len() {
        let c = psi.coeffs()[idx] as u32;
        if c == 0 {
            continue;
        }
        let cs = psi.unflat(idx);
        let mut m: Monomial = Vec::with_capacity(k + r - 1);
        for (l, &v) in cs[..r - 1].iter().enumerate() {
            let (d, cc) = locate(dims, v);
            m.push(((l + 1) * k + d, cc, 1));
        }
        for (j, &v) in cs[r - 1..].iter().enumerate() {
            m.push((j, v, 1));
        }
        terms.push((m, c));
    }
    Polynomial::from_terms(psi.p(), terms)
}

/// Symbolic `Δ_{a^{(1)}} .. Δ_{a^{(t)}} P` with `a^{(l)}` in blocks `l·k..(l+1)·k`.
pub fn symbolic_derivatives(poly: &Polynomial, k: usize, t: usize) -> Polynomial {
    (1..=t).fold(poly.clone(), |acc, l| {
        let map: Vec<usize> = (0..k).map(|b| l * k + b).collect();
        acc.delta_symbolic(&map)
    })
}

/// The part of `Δ_{a^{(1)}..a^{(r-1)}} P` that is linear in each `a^{(l)}` and each `x_j`,
/// read as a form on `(G⊕)^{r-1} x G_{[k]}`.
pub fn derivative_form(poly: &Polynomial, dims: &[usize], r: usize) -> Result<MultilinearForm> {
    let k = dims.len();
    if r == 0 || k == 0 {
        return Err(Error::input("need r >= 1 and k >= 1"));
    }
    poly.check_vars(&GroupSpec::new(poly.p(), dims.to_vec())?)?;
    let d = symbolic_derivatives(poly, k, r - 1);
    let n: usize = dims.iter().sum();
    let offs = offsets(dims);
    let blocks: Vec<usize> = std::iter::repeat_n(n, r - 1).chain(dims.iter().copied()).collect();
    let mut psi = MultilinearForm::zero(poly.p(), blocks);
    for (m, &c) in d.terms() {
        if m.len() != k + r - 1 || m.iter().any(|v| v.2 != 1) {
            continue;
        }
        let mut cs = vec![usize::MAX; k + r - 1];
        let mut ok = true;
        for &(b, i, _) in m {
            let slot = if b < k { r - 1 + b } else { b / k - 1 };
            let val = if b < k { i } else { offs[b % k] + i };
            if cs[slot] != usize::MAX {
                ok = false;
                break;
            }
            cs[slot] = val;
        }
        if ok {
            psi.set(&cs, c);
        }
    }
    Ok(psi)
}

/// For an exactly symmetric `ψ`, polynomials `P ∈ 𝒫_{k,r}` and `Q` with
/// `ψ(a, x) = Δ_{a^{(1)}..a^{(r-1)}} P(x) + Q(a, x)` and every monomial of `Q`
/// free of some block `x_i`.
pub fn extract_p_q(psi: &MultilinearForm, dims: &[usize]) -> Result<(Polynomial, Polynomial)> {
    let r = psi_order(psi, dims)?;
    let p = psi.p();
    let k = dims.len();
    require_factorials(p, r)?;
    if !is_exactly_symmetric(psi, dims)? {
        return Err(Error::input("form is not exactly symmetric"));
    }
    let mut lambda: BTreeMap<Vec<(usize, usize)>, u32> = BTreeMap::new();
    for idx in 0..psi.coeffs().len() {
        let cs = psi.unflat(idx);
        let mut mon: Vec<(usize, usize)> = cs[..r - 1].iter().map(|&v| locate(dims, v)).collect();
        mon.extend(cs[r - 1..].iter().enumerate().map(|(j, &c)| (j, c)));
        mon.sort_unstable();
        let c = psi.coeffs()[idx] as u32;
        if let Some(&prev) = lambda.get(&mon) {
            if prev != c {
                return Err(Error::Verification(format!("coefficients disagree on the monomial {mon:?}")));
            }
        } else {
            lambda.insert(mon, c);
        }
    }
    let mut terms = Vec::new();
    for (mon, c) in lambda {
        if c == 0 {
            continue;
        }
        let norm: u32 = mon
            .iter()
            .chunk_by(|v| **v)
            .into_iter()
            .fold(1, |acc, (_, run)| acc * factorial_mod(run.count(), p) % p);
        let vars: Monomial = mon.iter().dedup_with_count().map(|(e, &(b, i))| (b, i, e as u32)).collect();
        terms.push((vars, c * inv_mod(norm, p) % p));
    }
    let big_p = Polynomial::from_terms(p, terms)?;
    let q = psi_polynomial(psi, dims)?.sub(&symbolic_derivatives(&big_p, k, r - 1));
    if !big_p.in_pkr(k, r) {
        return Err(Error::Verification("extracted P is not in the class P_{k,r}".into()));
    }
    if let Some(m) = q.terms().keys().find(|m| (0..k).all(|b| Polynomial::block_degree(m, b) > 0)) {
        return Err(Error::Verification(format!("remainder monomial {m:?} touches every block")));
    }
    Ok((big_p, q))
}
