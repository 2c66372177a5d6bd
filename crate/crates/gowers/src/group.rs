//! Finite groups `F_p^{n_1} x ... x F_p^{n_k}`, their points, subspaces and characters.
//!
//! Points are addressed by a little-endian mixed-radix index over the global
//! coordinates: `index = sum_j c_j p^j`, blocks concatenated in order. Block
//! `i` therefore occupies a contiguous digit range and its block index is a
//! plain div/mod of the global index.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Largest supported prime.
pub const MAX_PRIME: u32 = 13;
/// Default cap on the group order.
pub const DEFAULT_ORDER_CAP: usize = 1_000_000;

pub fn is_prime(p: u32) -> bool {
    p >= 2 && (2..p).take_while(|d| d * d <= p).all(|d| !p.is_multiple_of(d))
}

/// Multiplicative inverse modulo a prime. Panics on zero.
pub fn inv_mod(a: u32, p: u32) -> u32 {
    let a = a % p;
    assert!(a != 0, "zero has no inverse mod {p}");
    pow_mod(a, p - 2, p)
}

pub fn pow_mod(mut a: u32, mut e: u32, p: u32) -> u32 {
    let mut acc = 1u64;
    let mut base = (a % p) as u64;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * base % p as u64;
        }
        base = base * base % p as u64;
        e >>= 1;
    }
    a = acc as u32;
    a
}

/// Ambient group with block structure.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawGroup", into = "RawGroup")]
pub struct GroupSpec {
    p: u32,
    dims: Vec<usize>,
    offsets: Vec<usize>,
    n: usize,
    order: usize,
    pow: Vec<usize>,
    roots: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct RawGroup {
    p: u32,
    dims: Vec<usize>,
}

impl TryFrom<RawGroup> for GroupSpec {
    type Error = Error;
    fn try_from(raw: RawGroup) -> Result<Self> {
        GroupSpec::new(raw.p, raw.dims)
    }
}

impl From<GroupSpec> for RawGroup {
    fn from(g: GroupSpec) -> Self {
        RawGroup { p: g.p, dims: g.dims }
    }
}

impl PartialEq for GroupSpec {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p && self.dims == other.dims
    }
}

impl Eq for GroupSpec {}

impl GroupSpec {
    pub fn new(p: u32, dims: Vec<usize>) -> Result<Self> {
        Self::with_cap(p, dims, DEFAULT_ORDER_CAP)
    }

    /// Builds a group whose order may not exceed `cap`.
    pub fn with_cap(p: u32, dims: Vec<usize>, cap: usize) -> Result<Self> {
        if !is_prime(p) || p > MAX_PRIME {
            return Err(Error::input(format!("p = {p} must be a prime at most {MAX_PRIME}")));
        }
        if dims.is_empty() {
            return Err(Error::input("a group needs at least one block"));
        }
        let n: usize = dims.iter().sum();
        let mut pow = Vec::with_capacity(n + 1);
        let mut acc: usize = 1;
        pow.push(1);
        for _ in 0..n {
            acc = acc
                .checked_mul(p as usize)
                .filter(|&v| v <= cap)
                .ok_or_else(|| Error::Budget {
                    what: "group order".into(),
                    needed: (p as u128).saturating_pow(n as u32),
                    cap: cap as u128,
                })?;
            pow.push(acc);
        }
        let mut offsets = Vec::with_capacity(dims.len());
        let mut o = 0;
        for &d in &dims {
            offsets.push(o);
            o += d;
        }
        let roots = (0..p)
            .map(|t| Complex64::from_polar(1.0, 2.0 * PI * t as f64 / p as f64))
            .collect();
        Ok(GroupSpec { p, dims, offsets, n, order: acc, pow, roots })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of blocks.
    pub fn k(&self) -> usize {
        self.dims.len()
    }

    /// Total dimension `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn block_offset(&self, b: usize) -> usize {
        self.offsets[b]
    }

    pub fn block_order(&self, b: usize) -> usize {
        self.pow[self.dims[b]]
    }

    /// Index weight of the first coordinate of block `b`.
    pub fn block_stride(&self, b: usize) -> usize {
        self.pow[self.offsets[b]]
    }

    /// `p^j` for `j <= N`.
    pub fn weight(&self, j: usize) -> usize {
        self.pow[j]
    }

    /// Block `b` of `idx` as an index into `G_b`.
    #[inline]
    pub fn block_index(&self, idx: usize, b: usize) -> usize {
        idx / self.block_stride(b) % self.block_order(b)
    }

    /// Splits a global index into its block indices.
    pub fn split(&self, idx: usize) -> Vec<usize> {
        (0..self.k()).map(|b| self.block_index(idx, b)).collect()
    }

    /// Inverse of [`GroupSpec::split`].
    pub fn join(&self, parts: &[usize]) -> usize {
        parts.iter().enumerate().map(|(b, &i)| i * self.block_stride(b)).sum()
    }

    /// The group `G_b` on its own.
    pub fn block_group(&self, b: usize) -> GroupSpec {
        GroupSpec::with_cap(self.p, vec![self.dims[b]], usize::MAX).expect("block of a valid group")
    }

    /// Same field and total dimension with a single block.
    pub fn flat(&self) -> GroupSpec {
        GroupSpec::with_cap(self.p, vec![self.n], usize::MAX).expect("flattening a valid group")
    }

    /// `ω^t` with `ω = e^{2πi/p}`.
    #[inline]
    pub fn omega(&self, t: u32) -> Complex64 {
        self.roots[(t % self.p) as usize]
    }

    pub fn roots(&self) -> &[Complex64] {
        &self.roots
    }

    pub fn coords_of(&self, mut idx: usize, out: &mut [u8]) {
        let p = self.p as usize;
        for c in out.iter_mut().take(self.n) {
            *c = (idx % p) as u8;
            idx /= p;
        }
    }

    pub fn point_of(&self, idx: usize) -> Result<Point> {
        if idx >= self.order {
            return Err(Error::input(format!("index {idx} out of range for order {}", self.order)));
        }
        let mut coords = vec![0u8; self.n];
        self.coords_of(idx, &mut coords);
        Ok(Point { coords })
    }

    pub fn index_of(&self, x: &Point) -> Result<usize> {
        self.check(x)?;
        Ok(self.index_of_coords(&x.coords))
    }

    #[inline]
    pub fn index_of_coords(&self, coords: &[u8]) -> usize {
        coords.iter().zip(&self.pow).map(|(&c, &w)| c as usize * w).sum()
    }

    pub fn check(&self, x: &Point) -> Result<()> {
        if x.coords.len() != self.n {
            return Err(Error::mismatch(format!(
                "point has {} coordinates, group has {}",
                x.coords.len(),
                self.n
            )));
        }
        if x.coords.iter().any(|&c| c as u32 >= self.p) {
            return Err(Error::mismatch(format!("coordinate not reduced mod {}", self.p)));
        }
        Ok(())
    }

    pub fn zero(&self) -> Point {
        Point { coords: vec![0; self.n] }
    }

    pub fn add(&self, x: &Point, y: &Point) -> Result<Point> {
        self.check(x)?;
        self.check(y)?;
        let p = self.p as u8;
        Ok(Point { coords: x.coords.iter().zip(&y.coords).map(|(a, b)| (a + b) % p).collect() })
    }

    pub fn neg(&self, x: &Point) -> Result<Point> {
        self.check(x)?;
        let p = self.p as u8;
        Ok(Point { coords: x.coords.iter().map(|&a| (p - a) % p).collect() })
    }

    pub fn sub(&self, x: &Point, y: &Point) -> Result<Point> {
        self.add(x, &self.neg(y)?)
    }

    /// Index of `x + y`.
    #[inline]
    pub fn add_idx(&self, mut a: usize, mut b: usize) -> usize {
        let p = self.p as usize;
        if p == 2 {
            return a ^ b;
        }
        let mut out = 0;
        for &w in &self.pow[..self.n] {
            let s = a % p + b % p;
            out += if s >= p { s - p } else { s } * w;
            a /= p;
            b /= p;
        }
        out
    }

    #[inline]
    pub fn neg_idx(&self, mut a: usize) -> usize {
        let p = self.p as usize;
        if p == 2 {
            return a;
        }
        let mut out = 0;
        for &w in &self.pow[..self.n] {
            let d = a % p;
            out += if d == 0 { 0 } else { p - d } * w;
            a /= p;
        }
        out
    }

    #[inline]
    pub fn sub_idx(&self, a: usize, b: usize) -> usize {
        self.add_idx(a, self.neg_idx(b))
    }

    /// Index of `c x`.
    pub fn scale_idx(&self, c: u32, mut a: usize) -> usize {
        let p = self.p as usize;
        let c = c as usize % p;
        let mut out = 0;
        for &w in &self.pow[..self.n] {
            out += (a % p) * c % p * w;
            a /= p;
        }
        out
    }

    /// `r · x` mod p on indices.
    #[inline]
    pub fn dot_idx(&self, mut r: usize, mut x: usize) -> u32 {
        let p = self.p as usize;
        let mut s = 0;
        for _ in 0..self.n {
            s += (r % p) * (x % p);
            r /= p;
            x /= p;
        }
        (s % p) as u32
    }

    /// The permutation `x -> x + h` as an index table.
    pub fn translate_table(&self, h: usize) -> Vec<usize> {
        (0..self.order).map(|x| self.add_idx(x, h)).collect()
    }

    /// Index of the element of `G` that equals `local` in block `b` and zero elsewhere.
    pub fn embed_block(&self, b: usize, local: usize) -> usize {
        local * self.block_stride(b)
    }
}

/// An element of a [`GroupSpec`], stored as reduced coordinates.
///
/// Points do not carry their group; every operation takes the group
/// explicitly and rejects points of the wrong shape.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point {
    pub coords: Vec<u8>,
}

impl Point {
    pub fn new(coords: Vec<u8>) -> Self {
        Point { coords }
    }
}

/// `ω^{r·x}`.
pub fn character(g: &GroupSpec, r: &Point, x: &Point) -> Result<Complex64> {
    g.check(r)?;
    g.check(x)?;
    let s: u32 = r.coords.iter().zip(&x.coords).map(|(&a, &b)| a as u32 * b as u32).sum();
    Ok(g.omega(s % g.p()))
}

/// A subspace of `G`, kept in reduced row echelon form.
#[derive(Clone, Debug)]
pub struct Subspace {
    group: GroupSpec,
    basis: Vec<Vec<u8>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceJson {
    pub basis: Vec<Vec<u8>>,
}

impl Subspace {
    pub fn new(g: &GroupSpec, basis: &[Point]) -> Result<Self> {
        for b in basis {
            g.check(b)?;
        }
        let p = g.p();
        let mut rows: Vec<Vec<u8>> = basis.iter().map(|b| b.coords.clone()).collect();
        let mut rank = 0;
        for col in 0..g.n() {
            let Some(piv) = (rank..rows.len()).find(|&r| rows[r][col] != 0) else { continue };
            rows.swap(rank, piv);
            let inv = inv_mod(rows[rank][col] as u32, p);
            for c in rows[rank].iter_mut() {
                *c = (*c as u32 * inv % p) as u8;
            }
            let pivot_row = rows[rank].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && row[col] != 0 {
                    let f = row[col] as u32;
                    for (c, &pv) in row.iter_mut().zip(&pivot_row) {
                        *c = ((*c as u32 + p * p - f * pv as u32) % p) as u8;
                    }
                }
            }
            rank += 1;
        }
        rows.truncate(rank);
        Ok(Subspace { group: g.clone(), basis: rows })
    }

    pub fn from_json(g: &GroupSpec, json: &SubspaceJson) -> Result<Self> {
        let pts: Vec<Point> = json.basis.iter().map(|c| Point::new(c.clone())).collect();
        Subspace::new(g, &pts)
    }

    pub fn to_json(&self) -> SubspaceJson {
        SubspaceJson { basis: self.basis.clone() }
    }

    /// The whole group.
    pub fn full(g: &GroupSpec) -> Self {
        let basis = (0..g.n())
            .map(|j| {
                let mut c = vec![0u8; g.n()];
                c[j] = 1;
                c
            })
            .collect();
        Subspace { group: g.clone(), basis }
    }

    /// The block subgroup `{0} x ... x G_b x ... x {0}`.
    pub fn block(g: &GroupSpec, b: usize) -> Self {
        let off = g.block_offset(b);
        let basis = (0..g.dims()[b])
            .map(|j| {
                let mut c = vec![0u8; g.n()];
                c[off + j] = 1;
                c
            })
            .collect();
        Subspace { group: g.clone(), basis }
    }

    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn order(&self) -> usize {
        (self.group.p() as usize).pow(self.rank() as u32)
    }

    pub fn basis(&self) -> &[Vec<u8>] {
        &self.basis
    }

    /// Element indices, lexicographic in the echelon coefficients (first coefficient slowest).
    pub fn indices(&self) -> Vec<usize> {
        let g = &self.group;
        let basis_idx: Vec<usize> = self.basis.iter().map(|b| g.index_of_coords(b)).collect();
        let mut out = vec![0usize];
        for &b in &basis_idx {
            let mut next = Vec::with_capacity(out.len() * g.p() as usize);
            for &prefix in &out {
                for c in 0..g.p() {
                    next.push(g.add_idx(prefix, g.scale_idx(c, b)));
                }
            }
            out = next;
        }
        out
    }

    pub fn enumerate(&self) -> Vec<Point> {
        self.indices().into_iter().map(|i| self.group.point_of(i).expect("in range")).collect()
    }
}
