//! Uniformity, box and mixed norms of a random bounded function and of a quadratic phase.

use gowers::norms::{box_norm, mixed_norm, uniformity_norm};
use gowers::table::{gen_polynomial_phase, gen_random_bounded};
use gowers::{Budget, GroupSpec, Polynomial};

fn main() -> gowers::Result<()> {
    let g = GroupSpec::new(3, vec![1, 1])?;
    let quad = Polynomial::monomial(3, &[(0, 0), (1, 0)], 1)?;
    let tables = [("random", gen_random_bounded(&g, 7)), ("x*y phase", gen_polynomial_phase(&g, &quad)?)];
    for (name, f) in &tables {
        println!("{name}:");
        for k in 1..=3 {
            println!("  U^{k}  = {:.6}", uniformity_norm(f, k, Budget::default())?.value);
        }
        println!("  box  = {:.6}", box_norm(f)?.value);
        println!("  mixed(r=1) = {:.6}", mixed_norm(f, 1, Budget::default())?.value);
    }
    Ok(())
}
