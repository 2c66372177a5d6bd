//! Transform of a linear phase and the large spectrum of a noisy copy.

use gowers::fourier::{fourier_transform, large_spectrum};
use gowers::table::gen_polynomial_phase;
use gowers::{FunctionTable, GroupSpec, Polynomial};

fn main() -> gowers::Result<()> {
    let g = GroupSpec::new(5, vec![2])?;
    let lin = Polynomial::var(5, 0, 0).add(&Polynomial::var(5, 0, 1).scale(3));
    let f = gen_polynomial_phase(&g, &lin)?;
    let noisy = FunctionTable::from_fn(&g, |x| f.get(x) * 0.6 + 0.4 * g.omega((x * x) as u32))?;
    let fh = fourier_transform(&noisy);
    for r in large_spectrum(&noisy, 0.3)? {
        println!("r = {:?}  |f^(r)| = {:.4}", g.point_of(r)?.coords, fh.get(r).norm());
    }
    Ok(())
}
