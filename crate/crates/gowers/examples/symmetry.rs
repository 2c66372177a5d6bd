//! Symmetrizing a random ψ and splitting it into slices.

use gowers::forms::MultilinearForm;
use gowers::symmetry::{is_exactly_symmetric, symmetrize, SymmetricSlice};

fn main() -> gowers::Result<()> {
    let dims = [1, 1];
    let psi = MultilinearForm::random(5, vec![2, 2, 1, 1], 11);
    println!("random ψ symmetric: {}", is_exactly_symmetric(&psi, &dims)?);
    let rho = symmetrize(&psi, &dims)?;
    println!("symmetrized ψ symmetric: {}", is_exactly_symmetric(&rho, &dims)?);
    let slices = SymmetricSlice::from_psi(&rho, &dims)?;
    println!("slices reconstruct ψ: {}", slices.reconstruct() == rho);
    Ok(())
}
