//! Brute-force cross-checks written against raw coordinates, sharing no
//! arithmetic with the library beyond table storage.

use num_complex::Complex64;
use std::f64::consts::TAU;

use gowers::cubical::cubical_convolution;
use gowers::forms::{partition_rank_exhaustive, MultilinearForm};
use gowers::fourier::{convolve, fourier_transform};
use gowers::norms::{box_norm, box_norm_naive, mixed_norm, uniformity_norm};
use gowers::table::gen_random_bounded;
use gowers::{Budget, CubicalFamily, FunctionTable, GroupSpec};

const TOL: f64 = 1e-9;

struct Raw {
    p: usize,
    dims: Vec<usize>,
    n: usize,
}

impl Raw {
    fn new(p: u32, dims: &[usize]) -> Self {
        Raw { p: p as usize, dims: dims.to_vec(), n: dims.iter().sum() }
    }

    fn order(&self) -> usize {
        self.p.pow(self.n as u32)
    }

    fn decode(&self, mut i: usize) -> Vec<usize> {
        (0..self.n)
            .map(|_| {
                let c = i % self.p;
                i /= self.p;
                c
            })
            .collect()
    }

    fn encode(&self, x: &[usize]) -> usize {
        x.iter().rev().fold(0, |acc, &c| acc * self.p + c % self.p)
    }

    fn add(&self, x: &[usize], y: &[usize]) -> Vec<usize> {
        x.iter().zip(y).map(|(a, b)| (a + b) % self.p).collect()
    }

    fn sub(&self, x: &[usize], y: &[usize]) -> Vec<usize> {
        x.iter().zip(y).map(|(a, b)| (a + self.p - b) % self.p).collect()
    }

    fn w(&self, t: usize) -> Complex64 {
        Complex64::from_polar(1.0, TAU * (t % self.p) as f64 / self.p as f64)
    }

    fn block_range(&self, b: usize) -> std::ops::Range<usize> {
        let s: usize = self.dims[..b].iter().sum();
        s..s + self.dims[b]
    }
}

fn conj_if(v: Complex64, c: bool) -> Complex64 {
    if c {
        v.conj()
    } else {
        v
    }
}

fn sample(p: u32, dims: &[usize], seed: u64) -> (Raw, FunctionTable) {
    let g = GroupSpec::new(p, dims.to_vec()).unwrap();
    (Raw::new(p, dims), gen_random_bounded(&g, seed))
}

const GROUPS: &[(u32, &[usize])] = &[(2, &[1, 2]), (3, &[1, 1]), (5, &[1]), (2, &[1, 1, 1]), (3, &[2])];

#[test]
fn transform_matches_direct_sum() {
    for (s, &(p, dims)) in GROUPS.iter().enumerate() {
        let (raw, f) = sample(p, dims, s as u64);
        let fh = fourier_transform(&f);
        for r in 0..raw.order() {
            let rv = raw.decode(r);
            let sum: Complex64 = (0..raw.order())
                .map(|x| {
                    let dot: usize = rv.iter().zip(raw.decode(x)).map(|(a, b)| a * b).sum();
                    f.get(x) * raw.w(dot).conj()
                })
                .sum();
            assert!((fh.get(r) - sum / raw.order() as f64).norm() < TOL, "p={p} dims={dims:?} r={r}");
        }
    }
}

#[test]
fn convolution_matches_direct_sum() {
    for (s, &(p, dims)) in GROUPS.iter().enumerate() {
        let (raw, f) = sample(p, dims, 10 + s as u64);
        let h = gen_random_bounded(f.group(), 20 + s as u64);
        let c = convolve(&f, &h).unwrap();
        for x in 0..raw.order() {
            let xv = raw.decode(x);
            let sum: Complex64 =
                (0..raw.order()).map(|y| f.get(y) * h.get(raw.encode(&raw.sub(&raw.decode(y), &xv))).conj()).sum();
            assert!((c.get(x) - sum / raw.order() as f64).norm() < TOL);
        }
    }
}

fn naive_uk(raw: &Raw, f: &FunctionTable, k: usize) -> Complex64 {
    let n = raw.order();
    let mut acc = Complex64::new(0.0, 0.0);
    for t in 0..n.pow(k as u32 + 1) {
        let mut t = t;
        let mut pts = Vec::new();
        for _ in 0..=k {
            pts.push(raw.decode(t % n));
            t /= n;
        }
        let mut prod = Complex64::new(1.0, 0.0);
        for w in 0..1usize << k {
            let mut y = pts[0].clone();
            for i in 0..k {
                if w >> i & 1 == 1 {
                    y = raw.add(&y, &pts[i + 1]);
                }
            }
            prod *= conj_if(f.get(raw.encode(&y)), (k - w.count_ones() as usize) % 2 == 1);
        }
        acc += prod;
    }
    acc / n.pow(k as u32 + 1) as f64
}

#[test]
fn uniformity_norms_match_direct_sum() {
    for (s, &(p, dims)) in GROUPS.iter().enumerate() {
        let (raw, f) = sample(p, dims, 30 + s as u64);
        for k in 1..=3 {
            if raw.order().pow(k as u32 + 1) > 2_000_000 {
                continue;
            }
            let want = naive_uk(&raw, &f, k);
            assert!(want.im.abs() < TOL);
            let got = uniformity_norm(&f, k, Budget::default()).unwrap();
            assert!((got.power_average - want.re).abs() < TOL, "k={k} p={p} dims={dims:?}");
        }
    }
}

/// `E_{x^0, x^1} Π_ω Conj^{k-|ω|} f(x^{ω_1}_1, ..., x^{ω_k}_k)`.
fn naive_box(raw: &Raw, f: &FunctionTable) -> Complex64 {
    let n = raw.order();
    let k = raw.dims.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..n {
        let x0 = raw.decode(a);
        for b in 0..n {
            let x1 = raw.decode(b);
            let mut prod = Complex64::new(1.0, 0.0);
            for w in 0..1usize << k {
                let mut y = x0.clone();
                for blk in 0..k {
                    if w >> blk & 1 == 1 {
                        for c in raw.block_range(blk) {
                            y[c] = x1[c];
                        }
                    }
                }
                prod *= conj_if(f.get(raw.encode(&y)), (k - w.count_ones() as usize) % 2 == 1);
            }
            acc += prod;
        }
    }
    acc / (n * n) as f64
}

#[test]
fn box_norms_match_direct_sum() {
    for (s, &(p, dims)) in GROUPS.iter().enumerate() {
        let (raw, f) = sample(p, dims, 40 + s as u64);
        let want = naive_box(&raw, &f);
        assert!(want.im.abs() < TOL);
        let fast = box_norm(&f).unwrap();
        let slow = box_norm_naive(&f, Budget::default()).unwrap();
        assert!((fast.power_average - want.re).abs() < TOL, "p={p} dims={dims:?}");
        assert!((slow.power_average - want.re).abs() < TOL);
    }
}

#[test]
fn mixed_norms_match_direct_sum() {
    // Directions G_1, ..., G_k then r copies of G.
    for (s, &(p, dims)) in GROUPS.iter().enumerate() {
        let (raw, f) = sample(p, dims, 50 + s as u64);
        let n = raw.order();
        let k = dims.len();
        for r in 1..=2 {
            let d = k + r;
            let mut dirs: Vec<Vec<Vec<usize>>> = Vec::new();
            for b in 0..k {
                let range = raw.block_range(b);
                dirs.push((0..n).map(|i| raw.decode(i)).filter(|x| x.iter().enumerate().all(|(c, &v)| v == 0 || range.contains(&c))).collect());
            }
            for _ in 0..r {
                dirs.push((0..n).map(|i| raw.decode(i)).collect());
            }
            let tuples: usize = dirs.iter().map(|v| v.len()).product::<usize>() * n;
            if tuples > 3_000_000 {
                continue;
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..tuples {
                let mut t = t;
                let x = raw.decode(t % n);
                t /= n;
                let hs: Vec<&Vec<usize>> = dirs
                    .iter()
                    .map(|v| {
                        let h = &v[t % v.len()];
                        t /= v.len();
                        h
                    })
                    .collect();
                let mut prod = Complex64::new(1.0, 0.0);
                for w in 0..1usize << d {
                    let mut y = x.clone();
                    for (i, h) in hs.iter().enumerate() {
                        if w >> i & 1 == 1 {
                            y = raw.add(&y, h);
                        }
                    }
                    prod *= conj_if(f.get(raw.encode(&y)), (d - w.count_ones() as usize) % 2 == 1);
                }
                acc += prod;
            }
            let want = acc / tuples as f64;
            let got = mixed_norm(&f, r, Budget::default()).unwrap();
            assert!((got.power_average - want.re).abs() < TOL && want.im.abs() < TOL, "r={r} p={p} dims={dims:?}");
        }
    }
}

#[test]
fn cubical_convolution_matches_direct_sum() {
    for (s, &(p, dims)) in GROUPS.iter().enumerate() {
        let (raw, f0) = sample(p, dims, 60 + s as u64);
        let k = dims.len();
        let fam: Vec<FunctionTable> = (0..1u64 << k).map(|m| gen_random_bounded(f0.group(), 70 + m + 8 * s as u64)).collect();
        let fam = CubicalFamily::new(f0.group(), fam).unwrap();
        let got = cubical_convolution(&fam, Budget::default()).unwrap();
        let n = raw.order();
        for a in 0..n {
            let av = raw.decode(a);
            let mut acc = Complex64::new(0.0, 0.0);
            for x in 0..n {
                let xv = raw.decode(x);
                let xa = raw.add(&xv, &av);
                let mut prod = Complex64::new(1.0, 0.0);
                for m in 0..1usize << k {
                    let mut y = xv.clone();
                    for b in 0..k {
                        if m >> b & 1 == 1 {
                            for c in raw.block_range(b) {
                                y[c] = xa[c];
                            }
                        }
                    }
                    prod *= conj_if(fam.get(m).get(raw.encode(&y)), (k - m.count_ones() as usize) % 2 == 1);
                }
                acc += prod;
            }
            assert!((got.get(a) - acc / n as f64).norm() < TOL, "p={p} dims={dims:?} a={a}");
        }
    }
}

/// Rank over `F_p` by Gaussian elimination.
fn matrix_rank(mut m: Vec<Vec<usize>>, p: usize) -> usize {
    let inv = |a: usize| (1..p).find(|b| a * b % p == 1).unwrap();
    let cols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for c in 0..cols {
        let Some(piv) = (rank..m.len()).find(|&i| m[i][c] != 0) else { continue };
        m.swap(rank, piv);
        let s = inv(m[rank][c]);
        let row: Vec<usize> = m[rank].iter().map(|v| v * s % p).collect();
        for (i, r) in m.iter_mut().enumerate() {
            if i != rank && r[c] != 0 {
                let f = r[c];
                for (v, w) in r.iter_mut().zip(&row) {
                    *v = (*v + p * p - f * w) % p;
                }
            }
        }
        m[rank] = row;
        rank += 1;
    }
    rank
}

#[test]
fn bilinear_bias_and_partition_rank_follow_matrix_rank() {
    for (p, n, m) in [(2u32, 2usize, 3usize), (3, 2, 2), (5, 2, 2)] {
        let raw_a = Raw::new(p, &[n]);
        let raw_b = Raw::new(p, &[m]);
        for seed in 0..12 {
            let form = MultilinearForm::random(p, vec![n, m], seed);
            let mat: Vec<Vec<usize>> = (0..n).map(|i| (0..m).map(|j| form.coeff(&[i, j]) as usize).collect()).collect();
            let rank = matrix_rank(mat, p as usize);
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..raw_a.order() {
                let x: Vec<u8> = raw_a.decode(a).iter().map(|&c| c as u8).collect();
                for b in 0..raw_b.order() {
                    let y: Vec<u8> = raw_b.decode(b).iter().map(|&c| c as u8).collect();
                    acc += raw_a.w(form.eval(&[&x, &y]).unwrap() as usize);
                }
            }
            let bias = acc.re / (raw_a.order() * raw_b.order()) as f64;
            assert!((bias - (p as f64).powi(-(rank as i32))).abs() < TOL);
            assert!((form.bias().unwrap() - bias).abs() < TOL);
            let pr = partition_rank_exhaustive(&form, 2, Budget::default()).unwrap();
            assert_eq!(pr.rank, Some(rank), "p={p} seed={seed}");
        }
    }
}

#[test]
fn trilinear_bias_matches_direct_sum() {
    let raw = Raw::new(3, &[1, 2, 1]);
    for seed in 0..8 {
        let form = MultilinearForm::random(3, vec![1, 2, 1], seed);
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..raw.order() {
            let x: Vec<u8> = raw.decode(i).iter().map(|&c| c as u8).collect();
            acc += raw.w(form.eval(&[&x[0..1], &x[1..3], &x[3..4]]).unwrap() as usize);
        }
        let want = acc / raw.order() as f64;
        assert!(want.im.abs() < TOL);
        assert!((form.bias().unwrap() - want.re).abs() < TOL);
    }
}
