//! Cubical convolution of a structured function and its multiaffine approximation.

use gowers::cubical::{cubical_convolution, multconv_approx, MultconvOptions, Strategy};
use gowers::table::gen_structured;
use gowers::{Budget, CubicalFamily, GroupSpec, Polynomial};

fn main() -> gowers::Result<()> {
    let g = GroupSpec::new(2, vec![1, 2])?;
    let poly = Polynomial::monomial(2, &[(0, 0), (1, 1)], 1)?;
    let fam = CubicalFamily::uniform(&gen_structured(&g, &poly, 3)?);
    let boxf = cubical_convolution(&fam, Budget::default())?;
    println!("max |□f| = {:.4}", boxf.values().iter().map(|v| v.norm()).fold(0.0, f64::max));
    let res = multconv_approx(&fam, 1e-6, Strategy::Exhaustive, &MultconvOptions::default())?;
    println!(
        "fit with {} component(s): L2 error {:.2e}, success {}, {} maps tried",
        res.fit.map.components().len(),
        res.fit.l2_error,
        res.success,
        res.evaluated
    );
    Ok(())
}
