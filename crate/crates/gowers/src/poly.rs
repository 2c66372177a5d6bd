//! Classical polynomials over `F_p` in block variables `x_{b,c}`.
//!
//! A monomial is a list of `(block, coord, multiplicity)` sorted by `(block, coord)`.
//! Multiplicities stay below `p`; products reduce `x^p` to `x`, which is the
//! same function on `F_p`. Blocks are 0-based.

use serde::{Deserialize, Serialize};
use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::group::{GroupSpec, Point};

pub type Monomial = Vec<(usize, usize, u32)>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Polynomial {
    p: u32,
    terms: BTreeMap<Monomial, u32>,
}

#[derive(Serialize, Deserialize)]
struct RawTerm {
    monomial: Vec<[usize; 3]>,
    coeff: u32,
}

#[derive(Serialize, Deserialize)]
struct RawPoly {
    p: u32,
    terms: Vec<RawTerm>,
}

impl Serialize for Polynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let terms = self
            .terms
            .iter()
            .map(|(m, &c)| RawTerm { monomial: m.iter().map(|&(b, i, e)| [b, i, e as usize]).collect(), coeff: c })
            .collect();
        RawPoly { p: self.p, terms }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawPoly::deserialize(d)?;
        let terms = raw
            .terms
            .into_iter()
            .map(|t| (t.monomial.into_iter().map(|[b, i, e]| (b, i, e as u32)).collect(), t.coeff));
        Polynomial::from_terms(raw.p, terms).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn binomial_table(n: usize, p: u32) -> Vec<Vec<u32>> {
    let mut t = vec![vec![0u32; n + 1]; n + 1];
    for i in 0..=n {
        t[i][0] = 1;
        for j in 1..=i {
            t[i][j] = (t[i - 1][j - 1] + if j < i { t[i - 1][j] } else { 0 }) % p;
        }
    }
    t
}

fn reduce_mult(mut m: u32, p: u32) -> u32 {
    while m >= p {
        m -= p - 1;
    }
    m
}

fn mono_mul(a: &Monomial, b: &Monomial, p: u32) -> Monomial {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take_a = j >= b.len() || (i < a.len() && (a[i].0, a[i].1) <= (b[j].0, b[j].1));
        let take_b = i >= a.len() || (j < b.len() && (b[j].0, b[j].1) <= (a[i].0, a[i].1));
        if take_a && take_b {
            out.push((a[i].0, a[i].1, reduce_mult(a[i].2 + b[j].2, p)));
            i += 1;
            j += 1;
        } else if take_a {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out
}

pub fn mono_degree(m: &Monomial) -> u32 {
    m.iter().map(|v| v.2).sum()
}

impl Polynomial {
    pub fn zero(p: u32) -> Self {
        Polynomial { p, terms: BTreeMap::new() }
    }

    pub fn constant(p: u32, c: u32) -> Self {
        let mut out = Polynomial::zero(p);
        out.add_term(Vec::new(), c);
        out
    }

    pub fn var(p: u32, block: usize, coord: usize) -> Self {
        let mut out = Polynomial::zero(p);
        out.add_term(vec![(block, coord, 1)], 1);
        out
    }

    /// `coeff · Π x_v` over a multiset of variables.
    pub fn monomial(p: u32, vars: &[(usize, usize)], coeff: u32) -> Result<Self> {
        let mut counts: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for &v in vars {
            *counts.entry(v).or_default() += 1;
        }
        let m = counts.into_iter().map(|((b, c), e)| (b, c, e)).collect();
        Polynomial::from_terms(p, [(m, coeff)])
    }

    /// Canonicalizes arbitrary terms; rejects multiplicities `>= p`.
    pub fn from_terms(p: u32, terms: impl IntoIterator<Item = (Monomial, u32)>) -> Result<Self> {
        let mut out = Polynomial::zero(p);
        for (mut m, c) in terms {
            m.sort();
            let mut merged: Monomial = Vec::with_capacity(m.len());
            for (b, i, e) in m {
                match merged.last_mut() {
                    Some(last) if last.0 == b && last.1 == i => last.2 += e,
                    _ => merged.push((b, i, e)),
                }
            }
            merged.retain(|v| v.2 > 0);
            if let Some(v) = merged.iter().find(|v| v.2 >= p) {
                return Err(Error::input(format!(
                    "variable x_({},{}) has multiplicity {} >= p = {p}",
                    v.0, v.1, v.2
                )));
            }
            out.add_term(merged, c);
        }
        Ok(out)
    }

    /// Every monomial of degree `1..=degree` on the variables of `g` gets an independent uniform coefficient.
    pub fn random(g: &GroupSpec, degree: u32, seed: u64) -> Polynomial {
        use rand::Rng;
        let p = g.p();
        let vars: Vec<(usize, usize)> =
            (0..g.k()).flat_map(|b| (0..g.dims()[b]).map(move |c| (b, c))).collect();
        let mut monos: Vec<Monomial> = vec![Vec::new()];
        for &(b, c) in &vars {
            let mut next = Vec::new();
            for m in &monos {
                let used = mono_degree(m);
                for e in 0..p.min(degree.saturating_sub(used) + 1) {
                    let mut m2 = m.clone();
                    if e > 0 {
                        m2.push((b, c, e));
                    }
                    next.push(m2);
                }
            }
            monos = next;
        }
        monos.sort();
        let mut r = crate::table::rng(seed);
        let mut out = Polynomial::zero(p);
        for m in monos.into_iter().filter(|m| !m.is_empty()) {
            let c = r.gen_range(0..p);
            out.add_term(m, c);
        }
        out
    }

    fn add_term(&mut self, m: Monomial, c: u32) {
        let c = c % self.p;
        if c == 0 {
            return;
        }
        match self.terms.entry(m) {
            Entry::Occupied(mut o) => {
                let v = (*o.get() + c) % self.p;
                if v == 0 {
                    o.remove();
                } else {
                    *o.get_mut() = v;
                }
            }
            Entry::Vacant(v) => {
                v.insert(c);
            }
        }
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn terms(&self) -> &BTreeMap<Monomial, u32> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; `0` for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(mono_degree).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        out
    }

    pub fn neg(&self) -> Polynomial {
        self.scale(self.p - 1)
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: u32) -> Polynomial {
        let mut out = Polynomial::zero(self.p);
        for (m, &v) in &self.terms {
            out.add_term(m.clone(), v * (c % self.p));
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = Polynomial::zero(self.p);
        for (a, &ca) in &self.terms {
            for (b, &cb) in &other.terms {
                out.add_term(mono_mul(a, b, self.p), ca * cb);
            }
        }
        out
    }

    /// Errors if a variable does not exist in `g`.
    pub fn check_vars(&self, g: &GroupSpec) -> Result<()> {
        if g.p() != self.p {
            return Err(Error::mismatch(format!("polynomial over F_{} used on F_{}", self.p, g.p())));
        }
        for m in self.terms.keys() {
            for &(b, c, _) in m {
                if b >= g.k() || c >= g.dims()[b] {
                    return Err(Error::input(format!("variable x_({b},{c}) is outside dims {:?}", g.dims())));
                }
            }
        }
        Ok(())
    }

    /// Evaluates with `value(b, c)` supplying each variable.
    pub fn eval_with(&self, value: impl Fn(usize, usize) -> u32) -> u32 {
        let p = self.p;
        let mut s = 0u32;
        for (m, &c) in &self.terms {
            let mut t = c;
            for &(b, i, e) in m {
                let v = value(b, i) % p;
                for _ in 0..e {
                    t = t * v % p;
                }
            }
            s = (s + t) % p;
        }
        s
    }

    pub fn eval(&self, g: &GroupSpec, x: &Point) -> Result<u32> {
        self.check_vars(g)?;
        g.check(x)?;
        Ok(self.eval_with(|b, c| x.coords[g.block_offset(b) + c] as u32))
    }

    /// Values at every index of `g`.
    pub fn eval_all(&self, g: &GroupSpec) -> Result<Vec<u32>> {
        self.check_vars(g)?;
        let compiled: Vec<(Vec<(usize, u32)>, u32)> = self
            .terms
            .iter()
            .map(|(m, &c)| (m.iter().map(|&(b, i, e)| (g.block_offset(b) + i, e)).collect(), c))
            .collect();
        let p = self.p;
        let mut coords = vec![0u8; g.n()];
        let mut out = Vec::with_capacity(g.order());
        for idx in 0..g.order() {
            g.coords_of(idx, &mut coords);
            let mut s = 0u32;
            for (vars, c) in &compiled {
                let mut t = *c;
                for &(j, e) in vars {
                    for _ in 0..e {
                        t = t * coords[j] as u32 % p;
                    }
                }
                s += t;
            }
            out.push(s % p);
        }
        Ok(out)
    }

    /// Replaces each `x_v^e` by the polynomial `expand(v, e)` and multiplies out.
    fn substitute(&self, expand: impl Fn(usize, usize, u32) -> Polynomial) -> Polynomial {
        let mut out = Polynomial::zero(self.p);
        for (m, &c) in &self.terms {
            let mut acc = Polynomial::constant(self.p, c);
            for &(b, i, e) in m {
                acc = acc.mul(&expand(b, i, e));
            }
            out = out.add(&acc);
        }
        out
    }

    /// `P(x + a) - P(x)` for a fixed shift `a`.
    pub fn additive_derivative(&self, g: &GroupSpec, a: &Point) -> Result<Polynomial> {
        self.check_vars(g)?;
        g.check(a)?;
        let p = self.p;
        let binom = binomial_table(p as usize, p);
        let shifted = self.substitute(|b, i, e| {
            let av = a.coords[g.block_offset(b) + i] as u32;
            let mut poly = Polynomial::zero(p);
            let mut apow = 1u32;
            // (x + av)^e = Σ_j C(e, j) av^{e-j} x^j
            let mut terms = vec![0u32; e as usize + 1];
            for j in (0..=e as usize).rev() {
                terms[j] = binom[e as usize][j] * apow % p;
                apow = apow * av % p;
            }
            for (j, &c) in terms.iter().enumerate() {
                let m = if j == 0 { vec![] } else { vec![(b, i, j as u32)] };
                poly.add_term(m, c);
            }
            poly
        });
        Ok(shifted.sub(self))
    }

    /// `P(x + y)` where `y_{b,c}` is the variable `x_{map[b],c}`; blocks past the map stay fixed.
    pub fn shift_symbolic(&self, block_map: &[usize]) -> Polynomial {
        let p = self.p;
        let binom = binomial_table(p as usize, p);
        self.substitute(|b, i, e| {
            let mut poly = Polynomial::zero(p);
            if b >= block_map.len() {
                poly.add_term(vec![(b, i, e)], 1);
                return poly;
            }
            for j in 0..=e {
                let mut m = Vec::new();
                if e - j > 0 {
                    m.push((b, i, e - j));
                }
                if j > 0 {
                    m.push((block_map[b], i, j));
                }
                m.sort();
                poly.add_term(m, binom[e as usize][j as usize]);
            }
            poly
        })
    }

    /// Symbolic `Δ_y P` with `y` living in the blocks named by `block_map`.
    pub fn delta_symbolic(&self, block_map: &[usize]) -> Polynomial {
        self.shift_symbolic(block_map).sub(self)
    }

    /// Renames block `b` to `map[b]`.
    pub fn relabel_blocks(&self, map: &[usize]) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .map(|(m, &c)| (m.iter().map(|&(b, i, e)| (map[b], i, e)).collect::<Monomial>(), c));
        Polynomial::from_terms(self.p, terms).expect("relabeling keeps multiplicities")
    }

    /// Degree of `m` in the variables of block `b`.
    pub fn block_degree(m: &Monomial, b: usize) -> u32 {
        m.iter().filter(|v| v.0 == b).map(|v| v.2).sum()
    }

    /// Membership in the class of degree `<= k + r - 1` polynomials whose monomials touch
    /// every one of the blocks `0..k`.
    pub fn in_pkr(&self, k: usize, r: usize) -> bool {
        self.terms
            .keys()
            .all(|m| (mono_degree(m) as usize) < k + r && (0..k).all(|b| Polynomial::block_degree(m, b) > 0))
    }

    /// Keeps the terms accepted by `keep`.
    pub fn filter(&self, keep: impl Fn(&Monomial) -> bool) -> Polynomial {
        Polynomial { p: self.p, terms: self.terms.iter().filter(|(m, _)| keep(m)).map(|(m, &c)| (m.clone(), c)).collect() }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Outcome of the monomial derivative expansion check.
#[derive(Clone, Debug)]
pub struct ExpansionReport {
    /// Symbolic `Δ_{a^{(1)}..a^{(t)}} m`; `a^{(l)}` lives in blocks `l·k .. (l+1)·k`.
    pub lhs: Polynomial,
    pub injection_sum: Polynomial,
    pub remainder: Polynomial,
    /// Smallest a-degree among remainder monomials.
    pub min_remainder_a_degree: Option<u32>,
    /// Every remainder monomial has a-degree at least `t + 1`.
    pub structural_ok: bool,
    /// The symbolic expansion at the concrete shifts matches repeated concrete derivatives at every `x`.
    pub pointwise_ok: bool,
}

/// Expands `Δ_{a^{(1)}..a^{(t)}}` of the monomial `Π_j x_{factors[j]}` both symbolically and at
/// concrete shifts, splitting off the sum over injections `[t] -> [s]`.
pub fn derivative_expansion_check(g: &GroupSpec, factors: &[(usize, usize)], shifts: &[Point]) -> Result<ExpansionReport> {
    let p = g.p();
    let k = g.k();
    let t = shifts.len();
    if t == 0 {
        return Err(Error::input("need at least one shift"));
    }
    let m = Polynomial::monomial(p, factors, 1)?;
    m.check_vars(g)?;
    let mut lhs = m.clone();
    for l in 1..=t {
        let map: Vec<usize> = (0..k).map(|b| l * k + b).collect();
        lhs = lhs.delta_symbolic(&map);
    }

    let s = factors.len();
    let mut injection_sum = Polynomial::zero(p);
    let mut choice = Vec::with_capacity(t);
    fn rec(
        s: usize,
        t: usize,
        k: usize,
        p: u32,
        factors: &[(usize, usize)],
        choice: &mut Vec<usize>,
        acc: &mut Polynomial,
    ) {
        if choice.len() == t {
            let mut vars: Vec<(usize, usize)> = Vec::with_capacity(s);
            for (l, &j) in choice.iter().enumerate() {
                let (b, c) = factors[j];
                vars.push(((l + 1) * k + b, c));
            }
            for (j, &f) in factors.iter().enumerate() {
                if !choice.contains(&j) {
                    vars.push(f);
                }
            }
            *acc = acc.add(&Polynomial::monomial(p, &vars, 1).expect("multiplicities stay below p"));
            return;
        }
        for j in 0..s {
            if !choice.contains(&j) {
                choice.push(j);
                rec(s, t, k, p, factors, choice, acc);
                choice.pop();
            }
        }
    }
    rec(s, t, k, p, factors, &mut choice, &mut injection_sum);

    let remainder = lhs.sub(&injection_sum);
    let a_degree = |mono: &Monomial| mono.iter().filter(|v| v.0 >= k).map(|v| v.2).sum::<u32>();
    let min_remainder_a_degree = remainder.terms().keys().map(a_degree).min();
    let structural_ok = min_remainder_a_degree.is_none_or(|d| d as usize > t);

    let mut concrete = m.clone();
    for a in shifts {
        concrete = concrete.additive_derivative(g, a)?;
    }
    let mut pointwise_ok = true;
    let mut coords = vec![0u8; g.n()];
    for idx in 0..g.order() {
        g.coords_of(idx, &mut coords);
        let want = concrete.eval_with(|b, c| coords[g.block_offset(b) + c] as u32);
        let got = lhs.eval_with(|b, c| {
            if b < k {
                coords[g.block_offset(b) + c] as u32
            } else {
                shifts[b / k - 1].coords[g.block_offset(b % k) + c] as u32
            }
        });
        if want != got {
            pointwise_ok = false;
            break;
        }
    }
    Ok(ExpansionReport { lhs, injection_sum, remainder, min_remainder_a_degree, structural_ok, pointwise_ok })
}
