//! Multilinear and multiaffine forms over `F_p`, bias, analytic rank, partition rank and varieties.
//!
//! A form on blocks `(n_1, ..., n_B)` stores one coefficient per coordinate tuple
//! `(c_1, ..., c_B)`, flat and little-endian (`c_1` fastest). Its domain is the
//! group `F_p^{n_1} x ... x F_p^{n_B}` with the usual point indexing.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Budget, Error, Result};
use crate::group::{inv_mod, GroupSpec};
use crate::table::rng;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultilinearForm {
    p: u32,
    blocks: Vec<usize>,
    coeffs: Vec<u8>,
}

fn tensor_len(blocks: &[usize]) -> usize {
    blocks.iter().product()
}

impl MultilinearForm {
    pub fn zero(p: u32, blocks: Vec<usize>) -> Self {
        let n = tensor_len(&blocks);
        MultilinearForm { p, blocks, coeffs: vec![0; n] }
    }

    pub fn new(p: u32, blocks: Vec<usize>, coeffs: Vec<u8>) -> Result<Self> {
        if coeffs.len() != tensor_len(&blocks) {
            return Err(Error::input(format!(
                "form on blocks {blocks:?} needs {} coefficients, got {}",
                tensor_len(&blocks),
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|&c| c as u32 >= p) {
            return Err(Error::input(format!("coefficient not reduced mod {p}")));
        }
        Ok(MultilinearForm { p, blocks, coeffs })
    }

    pub fn random(p: u32, blocks: Vec<usize>, seed: u64) -> Self {
        let mut r = rng(seed);
        let coeffs = (0..tensor_len(&blocks)).map(|_| r.gen_range(0..p) as u8).collect();
        MultilinearForm { p, blocks, coeffs }
    }

    /// Number of distinct forms on these blocks, if it fits.
    pub fn count(p: u32, blocks: &[usize]) -> Option<u128> {
        (p as u128).checked_pow(u32::try_from(tensor_len(blocks)).ok()?)
    }

    /// The `idx`-th form in lexicographic order of coefficient vectors.
    pub fn from_index(p: u32, blocks: Vec<usize>, mut idx: u128) -> Self {
        let n = tensor_len(&blocks);
        let mut coeffs = vec![0u8; n];
        for c in coeffs.iter_mut().rev() {
            *c = (idx % p as u128) as u8;
            idx /= p as u128;
        }
        MultilinearForm { p, blocks, coeffs }
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn coeffs(&self) -> &[u8] {
        &self.coeffs
    }

    pub fn arity(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }

    /// Flat position of a coordinate tuple.
    pub fn flat(&self, cs: &[usize]) -> usize {
        let mut idx = 0;
        let mut w = 1;
        for (c, n) in cs.iter().zip(&self.blocks) {
            idx += c * w;
            w *= n;
        }
        idx
    }

    /// Coordinate tuple of a flat position.
    pub fn unflat(&self, mut idx: usize) -> Vec<usize> {
        self.blocks
            .iter()
            .map(|&n| {
                let c = idx % n;
                idx /= n;
                c
            })
            .collect()
    }

    pub fn coeff(&self, cs: &[usize]) -> u32 {
        self.coeffs[self.flat(cs)] as u32
    }

    pub fn set(&mut self, cs: &[usize], v: u32) {
        let i = self.flat(cs);
        self.coeffs[i] = (v % self.p) as u8;
    }

    /// The group on which the form is evaluated.
    pub fn domain(&self) -> Result<GroupSpec> {
        domain_group(self.p, &self.blocks)
    }

    fn same_shape(&self, other: &MultilinearForm) -> Result<()> {
        if self.p != other.p || self.blocks != other.blocks {
            return Err(Error::mismatch(format!(
                "forms on F_{} {:?} and F_{} {:?}",
                self.p, self.blocks, other.p, other.blocks
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &MultilinearForm) -> Result<MultilinearForm> {
        self.same_shape(other)?;
        let p = self.p as u8;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a + b) % p).collect();
        Ok(MultilinearForm { p: self.p, blocks: self.blocks.clone(), coeffs })
    }

    pub fn neg(&self) -> MultilinearForm {
        self.scale(self.p - 1)
    }

    pub fn sub(&self, other: &MultilinearForm) -> Result<MultilinearForm> {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: u32) -> MultilinearForm {
        let p = self.p;
        let coeffs = self.coeffs.iter().map(|&a| (a as u32 * (c % p) % p) as u8).collect();
        MultilinearForm { p, blocks: self.blocks.clone(), coeffs }
    }

    /// Evaluates at one coordinate vector per block.
    pub fn eval(&self, args: &[&[u8]]) -> Result<u32> {
        if args.len() != self.blocks.len() || args.iter().zip(&self.blocks).any(|(a, &n)| a.len() != n) {
            return Err(Error::mismatch("argument shapes do not match the form"));
        }
        if args.iter().any(|a| a.iter().any(|&c| c as u32 >= self.p)) {
            return Err(Error::input("argument coordinate not reduced"));
        }
        Ok(self.eval_unchecked(args))
    }

    fn eval_unchecked(&self, args: &[&[u8]]) -> u32 {
        let p = self.p;
        let mut acc = self.coeffs.iter().map(|&c| c as u32).collect::<Vec<_>>();
        for (b, arg) in args.iter().enumerate().rev() {
            let n = self.blocks[b];
            let inner = acc.len() / n.max(1);
            if n == 0 {
                return 0;
            }
            let mut next = vec![0u32; inner];
            for (c, &xv) in arg.iter().enumerate() {
                if xv == 0 {
                    continue;
                }
                for (j, slot) in next.iter_mut().enumerate() {
                    *slot += acc[j + c * inner] * xv as u32;
                }
            }
            for v in &mut next {
                *v %= p;
            }
            acc = next;
        }
        acc.first().copied().unwrap_or(0) % p
    }

    /// Values at every point of the domain, in index order.
    pub fn eval_all(&self) -> Result<Vec<u32>> {
        let g = self.domain()?;
        Ok(self.eval_all_on(&g))
    }

    pub(crate) fn eval_all_on(&self, g: &GroupSpec) -> Vec<u32> {
        let offsets: Vec<usize> = (0..self.blocks.len()).map(|b| g.block_offset(b)).collect();
        (0..g.order())
            .into_par_iter()
            .map_init(
                || vec![0u8; g.n()],
                |coords, idx| {
                    g.coords_of(idx, coords);
                    let args: Vec<&[u8]> =
                        offsets.iter().zip(&self.blocks).map(|(&o, &n)| &coords[o..o + n]).collect();
                    self.eval_unchecked(&args)
                },
            )
            .collect()
    }

    /// New form whose block `j` is block `perm[j]` of `self`.
    pub fn permute_blocks(&self, perm: &[usize]) -> MultilinearForm {
        let blocks: Vec<usize> = perm.iter().map(|&j| self.blocks[j]).collect();
        let mut out = MultilinearForm::zero(self.p, blocks);
        for idx in 0..self.coeffs.len() {
            let cs = self.unflat(idx);
            let new_cs: Vec<usize> = perm.iter().map(|&j| cs[j]).collect();
            let pos = out.flat(&new_cs);
            out.coeffs[pos] = self.coeffs[idx];
        }
        out
    }

    /// Exact bias `E_x ω^{α(x)}`, real and in `[0, 1]`.
    ///
    /// Summing over the largest block first leaves the probability that the
    /// linear coefficient of that block vanishes.
    pub fn bias(&self) -> Result<f64> {
        let b = bias_affine_parts(self.p, &self.blocks, |args| self.eval_unchecked(args))?;
        if b.im.abs() > 1e-9 || b.re < -1e-9 {
            return Err(Error::Numerical(format!("bias {b} of a multilinear form is not a nonnegative real")));
        }
        Ok(b.re.max(0.0))
    }

    /// `-log_p bias`.
    pub fn analytic_rank(&self) -> Result<f64> {
        let b = self.bias()?;
        if b <= 0.0 {
            return Err(Error::Numerical("bias is not positive".into()));
        }
        Ok(-b.ln() / (self.p as f64).ln())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

pub(crate) fn domain_group(p: u32, blocks: &[usize]) -> Result<GroupSpec> {
    if blocks.is_empty() {
        return GroupSpec::new(p, vec![0]);
    }
    GroupSpec::new(p, blocks.to_vec())
}

/// `E_x ω^{α(x)}` for a map affine in each block, summing out the largest block exactly.
fn bias_affine_parts(p: u32, blocks: &[usize], eval: impl Fn(&[&[u8]]) -> u32 + Sync) -> Result<Complex64> {
    let g = domain_group(p, blocks)?;
    let roots = g.roots().to_vec();
    if blocks.is_empty() {
        return Ok(roots[eval(&[]) as usize]);
    }
    let (b, &nb) = blocks.iter().enumerate().max_by_key(|(i, &n)| (n, usize::MAX - i)).expect("nonempty");
    let rest_dims: Vec<usize> = blocks.iter().enumerate().filter(|&(i, _)| i != b).map(|(_, &n)| n).collect();
    let rest_order: usize = rest_dims.iter().map(|&n| (p as usize).pow(n as u32)).product();
    let sum: Complex64 = (0..rest_order)
        .into_par_iter()
        .map(|mut idx| {
            let mut coords: Vec<Vec<u8>> = Vec::with_capacity(blocks.len());
            for (i, &n) in blocks.iter().enumerate() {
                if i == b {
                    coords.push(vec![0; n]);
                    continue;
                }
                let mut v = vec![0u8; n];
                for c in v.iter_mut() {
                    *c = (idx % p as usize) as u8;
                    idx /= p as usize;
                }
                coords.push(v);
            }
            let args = |cs: &Vec<Vec<u8>>| -> u32 {
                let refs: Vec<&[u8]> = cs.iter().map(|v| v.as_slice()).collect();
                eval(&refs)
            };
            let base = args(&coords);
            let mut linear_zero = true;
            for c in 0..nb {
                coords[b][c] = 1;
                let v = args(&coords);
                coords[b][c] = 0;
                if v != base {
                    linear_zero = false;
                    break;
                }
            }
            if linear_zero {
                roots[base as usize]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(sum / rest_order as f64)
}

/// A form `Σ_{I ⊆ [B]} α_I(x_I)`; parts are keyed by block bitmask.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct MultiaffineForm {
    p: u32,
    blocks: Vec<usize>,
    parts: BTreeMap<u32, MultilinearForm>,
}

#[derive(Serialize, Deserialize)]
struct RawAffine {
    p: u32,
    blocks: Vec<usize>,
    parts: BTreeMap<String, Vec<u8>>,
}

impl Serialize for MultiaffineForm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let parts = self.parts.iter().map(|(m, f)| (m.to_string(), f.coeffs.clone())).collect();
        RawAffine { p: self.p, blocks: self.blocks.clone(), parts }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MultiaffineForm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawAffine::deserialize(d)?;
        let mut out = MultiaffineForm::zero(raw.p, raw.blocks.clone());
        for (k, coeffs) in raw.parts {
            let mask: u32 = k.parse().map_err(serde::de::Error::custom)?;
            let blocks = sub_blocks(&raw.blocks, mask);
            let part = MultilinearForm::new(raw.p, blocks, coeffs).map_err(serde::de::Error::custom)?;
            out.set_part(mask, part).map_err(serde::de::Error::custom)?;
        }
        Ok(out)
    }
}

fn sub_blocks(blocks: &[usize], mask: u32) -> Vec<usize> {
    blocks.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &n)| n).collect()
}

impl MultiaffineForm {
    pub fn zero(p: u32, blocks: Vec<usize>) -> Self {
        MultiaffineForm { p, blocks, parts: BTreeMap::new() }
    }

    pub fn from_multilinear(form: &MultilinearForm) -> Self {
        let mut out = MultiaffineForm::zero(form.p, form.blocks.clone());
        let full = (1u32 << form.arity()) - 1;
        if !form.is_zero() {
            out.parts.insert(full, form.clone());
        }
        out
    }

    /// Independent uniform coefficients for every part.
    pub fn random(p: u32, blocks: Vec<usize>, seed: u64) -> Self {
        let mut out = MultiaffineForm::zero(p, blocks.clone());
        for mask in 0..(1u32 << blocks.len()) {
            let part = MultilinearForm::random(p, sub_blocks(&blocks, mask), seed.wrapping_mul(1000).wrapping_add(mask as u64));
            if !part.is_zero() {
                out.parts.insert(mask, part);
            }
        }
        out
    }

    /// Number of coefficients over all parts, `Π (1 + n_i)`.
    pub fn flat_len(blocks: &[usize]) -> usize {
        blocks.iter().map(|n| n + 1).product()
    }

    /// Builds a form from all part coefficients concatenated by increasing mask.
    pub fn from_flat(p: u32, blocks: Vec<usize>, coeffs: &[u8]) -> Result<Self> {
        if coeffs.len() != Self::flat_len(&blocks) {
            return Err(Error::input("wrong number of multiaffine coefficients"));
        }
        let mut out = MultiaffineForm::zero(p, blocks.clone());
        let mut pos = 0;
        for mask in 0..(1u32 << blocks.len()) {
            let sb = sub_blocks(&blocks, mask);
            let len = tensor_len(&sb);
            out.set_part(mask, MultilinearForm::new(p, sb, coeffs[pos..pos + len].to_vec())?)?;
            pos += len;
        }
        Ok(out)
    }

    /// Inverse of [`MultiaffineForm::from_flat`].
    pub fn to_flat(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::flat_len(&self.blocks));
        for mask in 0..(1u32 << self.blocks.len()) {
            match self.parts.get(&mask) {
                Some(f) => out.extend_from_slice(&f.coeffs),
                None => out.extend(std::iter::repeat_n(0, tensor_len(&sub_blocks(&self.blocks, mask)))),
            }
        }
        out
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn parts(&self) -> &BTreeMap<u32, MultilinearForm> {
        &self.parts
    }

    pub fn set_part(&mut self, mask: u32, part: MultilinearForm) -> Result<()> {
        if mask >= 1 << self.blocks.len() || part.blocks != sub_blocks(&self.blocks, mask) || part.p != self.p {
            return Err(Error::mismatch(format!("part for mask {mask} has the wrong shape")));
        }
        if part.is_zero() {
            self.parts.remove(&mask);
        } else {
            self.parts.insert(mask, part);
        }
        Ok(())
    }

    /// Adds a constant to the empty-set part.
    pub fn with_constant(mut self, c: u32) -> Self {
        let cur = self.parts.get(&0).map(|f| f.coeffs[0] as u32).unwrap_or(0);
        let part = MultilinearForm { p: self.p, blocks: vec![], coeffs: vec![((cur + c) % self.p) as u8] };
        self.set_part(0, part).expect("constant part");
        self
    }

    pub fn is_zero(&self) -> bool {
        self.parts.is_empty()
    }

    /// The part on all blocks.
    pub fn multilinear_part(&self) -> MultilinearForm {
        let full = (1u32 << self.blocks.len()) - 1;
        self.parts.get(&full).cloned().unwrap_or_else(|| MultilinearForm::zero(self.p, self.blocks.clone()))
    }

    pub fn domain(&self) -> Result<GroupSpec> {
        domain_group(self.p, &self.blocks)
    }

    pub fn add(&self, other: &MultiaffineForm) -> Result<MultiaffineForm> {
        if self.p != other.p || self.blocks != other.blocks {
            return Err(Error::mismatch("multiaffine forms on different signatures"));
        }
        let mut out = self.clone();
        for (&m, f) in &other.parts {
            let sum = match out.parts.get(&m) {
                Some(cur) => cur.add(f)?,
                None => f.clone(),
            };
            out.set_part(m, sum)?;
        }
        Ok(out)
    }

    pub fn scale(&self, c: u32) -> MultiaffineForm {
        let mut out = MultiaffineForm::zero(self.p, self.blocks.clone());
        for (&m, f) in &self.parts {
            out.set_part(m, f.scale(c)).expect("same shape");
        }
        out
    }

    fn eval_unchecked(&self, args: &[&[u8]]) -> u32 {
        let mut s = 0;
        for (&m, f) in &self.parts {
            let sub: Vec<&[u8]> = (0..self.blocks.len()).filter(|i| m >> i & 1 == 1).map(|i| args[i]).collect();
            s += f.eval_unchecked(&sub);
        }
        s % self.p
    }

    pub fn eval(&self, args: &[&[u8]]) -> Result<u32> {
        if args.len() != self.blocks.len() || args.iter().zip(&self.blocks).any(|(a, &n)| a.len() != n) {
            return Err(Error::mismatch("argument shapes do not match the form"));
        }
        Ok(self.eval_unchecked(args))
    }

    /// Values at every point of the domain, in index order.
    pub fn eval_all(&self) -> Result<Vec<u32>> {
        let g = self.domain()?;
        let mut out = vec![0u32; g.order()];
        for (&m, f) in &self.parts {
            let sub = f.eval_all_on(&domain_group(self.p, &f.blocks)?);
            let strides: Vec<(usize, usize)> = (0..self.blocks.len())
                .filter(|i| m >> i & 1 == 1)
                .map(|i| (g.block_stride(i), g.block_order(i)))
                .collect();
            for (idx, slot) in out.iter_mut().enumerate() {
                let mut j = 0;
                let mut w = 1;
                for &(s, o) in &strides {
                    j += (idx / s % o) * w;
                    w *= o;
                }
                *slot += sub[j];
            }
        }
        for v in &mut out {
            *v %= self.p;
        }
        Ok(out)
    }

    /// `E_x ω^{α(x)}`.
    pub fn bias(&self) -> Result<Complex64> {
        bias_affine_parts(self.p, &self.blocks, |args| self.eval_unchecked(args))
    }
}

/// `(bias(a + b), bias(a) bias(b))`.
pub fn check_bias_subadditivity(a: &MultilinearForm, b: &MultilinearForm) -> Result<(f64, f64)> {
    Ok((a.add(b)?.bias()?, a.bias()? * b.bias()?))
}

/// One term `β(x_I) γ(x_{∖I})` of a partition-rank decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionTerm {
    pub mask: u32,
    pub beta: MultilinearForm,
    pub gamma: MultilinearForm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionWitness {
    pub terms: Vec<PartitionTerm>,
}

impl PartitionWitness {
    pub fn m(&self) -> usize {
        self.terms.len()
    }

    /// Coefficient tensor of `Σ β_i ⊗ γ_i` on the given blocks.
    pub fn reconstruct(&self, p: u32, blocks: &[usize]) -> MultilinearForm {
        let mut out = MultilinearForm::zero(p, blocks.to_vec());
        for t in &self.terms {
            for idx in 0..out.coeffs.len() {
                let cs = out.unflat(idx);
                let (ci, co) = split_coords(&cs, t.mask);
                let v = t.beta.coeff(&ci) * t.gamma.coeff(&co) % p;
                out.coeffs[idx] = ((out.coeffs[idx] as u32 + v) % p) as u8;
            }
        }
        out
    }
}

fn split_coords(cs: &[usize], mask: u32) -> (Vec<usize>, Vec<usize>) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, &c) in cs.iter().enumerate() {
        if mask >> i & 1 == 1 {
            a.push(c);
        } else {
            b.push(c);
        }
    }
    (a, b)
}

/// Outcome of the exhaustive partition-rank search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionRankResult {
    /// Exact rank when certified.
    pub rank: Option<usize>,
    pub lower: usize,
    pub upper: usize,
    pub witness: Option<PartitionWitness>,
    /// Witness of the upper bound (slicing along the smallest block) when no exact certificate exists.
    pub upper_witness: PartitionWitness,
    pub budget_exhausted: bool,
}

/// Solves `A x = b` over `F_p`; free variables are set to zero.
pub(crate) fn solve_mod_p(mut a: Vec<Vec<u32>>, mut b: Vec<u32>, n_vars: usize, p: u32) -> Option<Vec<u32>> {
    let rows = a.len();
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..n_vars {
        let Some(piv) = (r..rows).find(|&i| !a[i][col].is_multiple_of(p)) else { continue };
        a.swap(r, piv);
        b.swap(r, piv);
        let inv = inv_mod(a[r][col], p);
        for v in a[r].iter_mut() {
            *v = *v * inv % p;
        }
        b[r] = b[r] * inv % p;
        for i in 0..rows {
            if i != r && a[i][col] != 0 {
                let f = a[i][col];
                for j in 0..n_vars {
                    a[i][j] = (a[i][j] + p * p - f * a[r][j] % p) % p;
                }
                b[i] = (b[i] + p * p - f * b[r] % p) % p;
            }
        }
        pivots.push(col);
        r += 1;
        if r == rows {
            break;
        }
    }
    if b[r..].iter().any(|&v| v != 0) {
        return None;
    }
    let mut x = vec![0u32; n_vars];
    for (i, &c) in pivots.iter().enumerate() {
        x[c] = b[i];
    }
    Some(x)
}

fn slicing_witness(form: &MultilinearForm) -> PartitionWitness {
    let (b, &nb) = form.blocks.iter().enumerate().min_by_key(|(i, &n)| (n, *i)).expect("arity >= 2");
    let mask = 1u32 << b;
    let rest: Vec<usize> = form.blocks.iter().enumerate().filter(|&(i, _)| i != b).map(|(_, &n)| n).collect();
    let mut terms = Vec::new();
    for c in 0..nb {
        let mut beta = MultilinearForm::zero(form.p, vec![nb]);
        beta.coeffs[c] = 1;
        let mut gamma = MultilinearForm::zero(form.p, rest.clone());
        for idx in 0..gamma.coeffs.len() {
            let co = gamma.unflat(idx);
            let mut cs = co.clone();
            cs.insert(b, c);
            gamma.coeffs[idx] = form.coeffs[form.flat(&cs)];
        }
        if !gamma.is_zero() {
            terms.push(PartitionTerm { mask, beta, gamma });
        }
    }
    PartitionWitness { terms }
}

/// Smallest partition rank up to `max_rank`, by iterative deepening over term counts.
///
/// Each term is a candidate `(I, β)` with block 0 in `I` and `β` scaled so its first
/// nonzero coefficient is 1; for a fixed set of candidates the `γ`s solve a linear
/// system. Candidate sets are tried in lexicographic order, so the first hit is the
/// lexicographically smallest certificate. `budget` caps the number of candidate sets.
pub fn partition_rank_exhaustive(form: &MultilinearForm, max_rank: usize, budget: Budget) -> Result<PartitionRankResult> {
    let k = form.arity();
    if k < 2 {
        return Err(Error::input("partition rank needs at least two blocks"));
    }
    let p = form.p;
    let upper_witness = slicing_witness(form);
    let upper = upper_witness.m();
    if form.is_zero() {
        return Ok(PartitionRankResult {
            rank: Some(0),
            lower: 0,
            upper: 0,
            witness: Some(PartitionWitness { terms: vec![] }),
            upper_witness,
            budget_exhausted: false,
        });
    }
    let mut cands: Vec<(u32, MultilinearForm)> = Vec::new();
    for mask in (1u32..(1 << k) - 1).filter(|m| m & 1 == 1) {
        let sb = sub_blocks(&form.blocks, mask);
        let total = MultilinearForm::count(p, &sb).ok_or_else(|| Error::Budget {
            what: "partition-rank candidates".into(),
            needed: u128::MAX,
            cap: budget.0,
        })?;
        budget.check("partition-rank candidates", total)?;
        for idx in 0..total {
            let beta = MultilinearForm::from_index(p, sb.clone(), idx);
            if beta.coeffs.iter().find(|&&c| c != 0) == Some(&1) {
                cands.push((mask, beta));
            }
        }
    }
    let n_eq = form.coeffs.len();
    let target: Vec<u32> = form.coeffs.iter().map(|&c| c as u32).collect();
    let mut spent: u128 = 0;
    let mut lower = 1;
    for m in 1..=max_rank.min(upper) {
        if m == upper {
            return Ok(PartitionRankResult {
                rank: Some(upper),
                lower: upper,
                upper,
                witness: Some(upper_witness.clone()),
                upper_witness,
                budget_exhausted: false,
            });
        }
        let mut combo: Vec<usize> = (0..m).collect();
        if m > cands.len() {
            break;
        }
        loop {
            spent += 1;
            if spent > budget.0 {
                return Ok(PartitionRankResult {
                    rank: None,
                    lower,
                    upper,
                    witness: None,
                    upper_witness,
                    budget_exhausted: true,
                });
            }
            if let Some(w) = try_combo(form, &cands, &combo, &target, n_eq, p) {
                return Ok(PartitionRankResult {
                    rank: Some(m),
                    lower: m,
                    upper: m,
                    witness: Some(w),
                    upper_witness,
                    budget_exhausted: false,
                });
            }
            let mut i = m;
            while i > 0 && combo[i - 1] == cands.len() - m + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            combo[i - 1] += 1;
            for j in i..m {
                combo[j] = combo[j - 1] + 1;
            }
        }
        lower = m + 1;
    }
    Ok(PartitionRankResult { rank: None, lower, upper, witness: None, upper_witness, budget_exhausted: false })
}

fn try_combo(
    form: &MultilinearForm,
    cands: &[(u32, MultilinearForm)],
    combo: &[usize],
    target: &[u32],
    n_eq: usize,
    p: u32,
) -> Option<PartitionWitness> {
    let shapes: Vec<Vec<usize>> =
        combo.iter().map(|&c| sub_blocks(&form.blocks, !cands[c].0 & ((1 << form.arity()) - 1))).collect();
    let offsets: Vec<usize> = shapes
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += tensor_len(s);
            Some(o)
        })
        .collect();
    let n_vars: usize = shapes.iter().map(|s| tensor_len(s)).sum();
    let mut a = vec![vec![0u32; n_vars]; n_eq];
    for (eq, row) in a.iter_mut().enumerate() {
        let cs = form.unflat(eq);
        for (t, &c) in combo.iter().enumerate() {
            let (mask, beta) = &cands[c];
            let (ci, co) = split_coords(&cs, *mask);
            let bv = beta.coeff(&ci);
            if bv != 0 {
                let gshape = MultilinearForm::zero(p, shapes[t].clone());
                row[offsets[t] + gshape.flat(&co)] = bv;
            }
        }
    }
    let x = solve_mod_p(a, target.to_vec(), n_vars, p)?;
    let terms = combo
        .iter()
        .enumerate()
        .map(|(t, &c)| {
            let coeffs = x[offsets[t]..offsets[t] + tensor_len(&shapes[t])].iter().map(|&v| v as u8).collect();
            PartitionTerm {
                mask: cands[c].0,
                beta: cands[c].1.clone(),
                gamma: MultilinearForm { p, blocks: shapes[t].clone(), coeffs },
            }
        })
        .collect();
    Some(PartitionWitness { terms })
}

/// Zero set of a multiaffine map given by its components.
#[derive(Clone, Debug)]
pub struct Variety {
    pub forms: Vec<MultiaffineForm>,
}

impl Variety {
    pub fn new(p: u32, blocks: &[usize], forms: Vec<MultiaffineForm>) -> Result<Self> {
        if forms.iter().any(|f| f.p != p || f.blocks != blocks) {
            return Err(Error::mismatch("variety components on different signatures"));
        }
        Ok(Variety { forms })
    }

    /// Membership mask over the domain (all points if there are no components).
    pub fn materialize(&self, domain: &GroupSpec, budget: Budget) -> Result<Vec<bool>> {
        budget.check("variety points", domain.order() as u128 * self.forms.len().max(1) as u128)?;
        let mut mask = vec![true; domain.order()];
        for f in &self.forms {
            for (m, v) in mask.iter_mut().zip(f.eval_all()?) {
                *m &= v == 0;
            }
        }
        Ok(mask)
    }
}

/// `(|G| |U ∩ V|, |U| |V|)`.
pub fn variety_intersection_check(u: &Variety, v: &Variety, domain: &GroupSpec, budget: Budget) -> Result<(u128, u128)> {
    let mu = u.materialize(domain, budget)?;
    let mv = v.materialize(domain, budget)?;
    let cu = mu.iter().filter(|&&b| b).count() as u128;
    let cv = mv.iter().filter(|&&b| b).count() as u128;
    let both = mu.iter().zip(&mv).filter(|(a, b)| **a && **b).count() as u128;
    Ok((domain.order() as u128 * both, cu * cv))
}

/// Result of the random outer approximation of a variety.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OuterApprox {
    pub phi: Vec<MultiaffineForm>,
    /// `|φ^{-1}(0) ∖ A^{-1}(0)| / |G|`.
    pub excess: f64,
    pub attempts: usize,
    pub success: bool,
}

/// `φ_i = Σ_j λ_{ij} A_j` with uniform random `λ`, redrawn until the excess is at most `p^{-s}`.
pub fn variety_outer_approx(a: &[MultiaffineForm], p: u32, blocks: &[usize], s: usize, seed: u64, retries: usize) -> Result<OuterApprox> {
    if s == 0 {
        return Err(Error::input("s must be at least 1"));
    }
    let domain = domain_group(p, blocks)?;
    let var_a = Variety::new(p, blocks, a.to_vec())?;
    let in_a = var_a.materialize(&domain, Budget::unlimited())?;
    let target = (p as f64).powi(-(s as i32));
    let mut r = rng(seed);
    let mut best: Option<OuterApprox> = None;
    for attempt in 1..=retries.max(1) {
        let mut phi = Vec::with_capacity(s);
        for _ in 0..s {
            let mut comb = MultiaffineForm::zero(p, blocks.to_vec());
            for f in a {
                comb = comb.add(&f.scale(r.gen_range(0..p)))?;
            }
            phi.push(comb);
        }
        let in_phi = Variety::new(p, blocks, phi.clone())?.materialize(&domain, Budget::unlimited())?;
        if in_a.iter().zip(&in_phi).any(|(x, y)| *x && !*y) {
            return Err(Error::Verification("outer approximation lost a point of the variety".into()));
        }
        let extra = in_a.iter().zip(&in_phi).filter(|(x, y)| !**x && **y).count();
        let excess = extra as f64 / domain.order() as f64;
        let cand = OuterApprox { phi, excess, attempts: attempt, success: excess <= target + 1e-12 };
        let better = best.as_ref().is_none_or(|b| cand.excess < b.excess);
        if better {
            best = Some(cand);
        }
        if best.as_ref().is_some_and(|b| b.success) {
            break;
        }
    }
    let mut out = best.expect("at least one attempt");
    out.attempts = out.attempts.max(1);
    Ok(out)
}
