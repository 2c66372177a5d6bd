//! Additive derivatives lower degree until a polynomial vanishes.

use gowers::{GroupSpec, Polynomial};

fn main() -> gowers::Result<()> {
    let g = GroupSpec::new(5, vec![1, 2])?;
    let mut poly = Polynomial::random(&g, 3, 1);
    let shifts = [[1u8, 0, 2], [0, 3, 1], [4, 4, 0], [2, 1, 1]];
    println!("degree {} with {} terms", poly.degree(), poly.len());
    for a in shifts {
        poly = poly.additive_derivative(&g, &gowers::Point::new(a.to_vec()))?;
        println!("after Δ_{a:?}: degree {} with {} terms", poly.degree(), poly.len());
    }
    Ok(())
}
