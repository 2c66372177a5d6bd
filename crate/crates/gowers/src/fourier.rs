//! Fourier analysis on `F_p^N`: transform, convolution and large spectra.
//!
//! Blocks are ignored here; frequencies are indexed exactly like points.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{GroupSpec, Point};
use crate::table::{pairs, FunctionTable};

#[derive(Clone, Debug, PartialEq)]
pub struct FourierTable {
    group: GroupSpec,
    coeffs: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct RawFourier {
    group: GroupSpec,
    domain: String,
    values: Vec<[f64; 2]>,
}

impl Serialize for FourierTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawFourier { group: self.group.clone(), domain: "frequency".into(), values: pairs(&self.coeffs) }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for FourierTable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawFourier::deserialize(d)?;
        if raw.domain != "frequency" || raw.values.len() != raw.group.order() {
            return Err(serde::de::Error::custom("not a frequency table for this group"));
        }
        let coeffs = raw.values.iter().map(|v| Complex64::new(v[0], v[1])).collect();
        Ok(FourierTable { group: raw.group, coeffs })
    }
}

impl FourierTable {
    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    #[inline]
    pub fn get(&self, r: usize) -> Complex64 {
        self.coeffs[r]
    }

    pub fn at(&self, r: &Point) -> Result<Complex64> {
        Ok(self.coeffs[self.group.index_of(r)?])
    }
}

/// In-place length-`p` DFT along every coordinate; `sign` is the exponent sign.
fn butterfly(g: &GroupSpec, data: &mut [Complex64], sign: i64) {
    let p = g.p() as usize;
    let n = data.len();
    let twiddle: Vec<Complex64> =
        (0..p * p).map(|st| g.omega(((sign * (st as i64)).rem_euclid(p as i64)) as u32)).collect();
    let mut buf = vec![Complex64::new(0.0, 0.0); p];
    for j in 0..g.n() {
        let w = g.weight(j);
        let span = w * p;
        for base in (0..n).step_by(span) {
            for off in 0..w {
                let start = base + off;
                for (s, slot) in buf.iter_mut().enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for t in 0..p {
                        acc += data[start + t * w] * twiddle[(s * t) % p];
                    }
                    *slot = acc;
                }
                for (s, v) in buf.iter().enumerate() {
                    data[start + s * w] = *v;
                }
            }
        }
    }
}

/// `f̂(r) = E_x f(x) ω^{-r·x}`.
pub fn fourier_transform(f: &FunctionTable) -> FourierTable {
    let g = f.group();
    let mut data = f.values().to_vec();
    butterfly(g, &mut data, -1);
    let inv = 1.0 / g.order() as f64;
    for v in &mut data {
        *v *= inv;
    }
    FourierTable { group: g.clone(), coeffs: data }
}

/// `x -> Σ_r c(r) ω^{r·x}` (no normalization).
pub fn inverse_transform(c: &FourierTable) -> Vec<Complex64> {
    let mut data = c.coeffs.clone();
    butterfly(&c.group, &mut data, 1);
    data
}

/// `(f * g)(x) = E_y f(x + y) conj g(y)`, computed through the transform.
pub fn convolve(f: &FunctionTable, g: &FunctionTable) -> Result<FunctionTable> {
    f.same_group(g)?;
    let (fh, gh) = (fourier_transform(f), fourier_transform(g));
    let prod = FourierTable {
        group: f.group().clone(),
        coeffs: fh.coeffs.iter().zip(&gh.coeffs).map(|(a, b)| a * b.conj()).collect(),
    };
    Ok(FunctionTable::from_raw(f.group().clone(), inverse_transform(&prod)))
}

/// Frequencies with `|f̂(r)| >= eps`, in index order.
pub fn large_spectrum(f: &FunctionTable, eps: f64) -> Result<Vec<usize>> {
    if !(eps > 0.0) {
        return Err(Error::input("eps must be positive"));
    }
    let fh = fourier_transform(f);
    Ok(large_spectrum_of(&fh, eps))
}

pub(crate) fn large_spectrum_of(fh: &FourierTable, eps: f64) -> Vec<usize> {
    (0..fh.coeffs.len()).filter(|&r| fh.coeffs[r].norm() >= eps - 1e-12).collect()
}

/// `Σ_{r∈S} f̂(r) conj ĝ(r) ω^{r·x}` and its `L²` distance to `f * g`.
pub fn spectral_l2_approx(f: &FunctionTable, g: &FunctionTable, s: &[usize]) -> Result<(FunctionTable, f64)> {
    f.same_group(g)?;
    let grp = f.group();
    let (fh, gh) = (fourier_transform(f), fourier_transform(g));
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grp.order()];
    for &r in s {
        if r >= grp.order() {
            return Err(Error::input(format!("frequency index {r} out of range")));
        }
        coeffs[r] = fh.coeffs[r] * gh.coeffs[r].conj();
    }
    let approx = inverse_transform(&FourierTable { group: grp.clone(), coeffs });
    let conv = convolve(f, g)?;
    let approx = FunctionTable::from_raw(grp.clone(), approx);
    let err = conv.l2_distance(&approx)?;
    Ok((approx, err))
}

/// `((E_d |E_x f(x+d) conj g(x)|²)², Σ_r |f̂(r)|⁴)`.
pub fn conv_l4_bound_check(f: &FunctionTable, g: &FunctionTable) -> Result<(f64, f64)> {
    let conv = convolve(f, g)?;
    let m2 = conv.values().iter().map(|v| v.norm_sqr()).sum::<f64>() / conv.values().len() as f64;
    let fh = fourier_transform(f);
    let rhs = fh.coeffs.iter().map(|c| c.norm_sqr().powi(2)).sum();
    Ok((m2 * m2, rhs))
}
