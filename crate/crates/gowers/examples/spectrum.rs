//! Large multilinear spectrum of a twisted bilinear phase.

use gowers::spectrum::mls_enumerate;
use gowers::table::gen_polynomial_phase;
use gowers::{Budget, GroupSpec, Polynomial};

fn main() -> gowers::Result<()> {
    let g = GroupSpec::new(3, vec![1, 1])?;
    let f = gen_polynomial_phase(&g, &Polynomial::monomial(3, &[(0, 0), (1, 0)], 2)?)?;
    for e in mls_enumerate(&f, 0.5, Budget::default())? {
        println!("coeffs {:?}  box value {:.4}", e.form.coeffs(), e.box_value);
    }
    Ok(())
}
