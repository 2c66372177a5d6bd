//! Bias, analytic rank and partition rank of small multilinear forms.

use gowers::forms::{partition_rank_exhaustive, MultilinearForm};
use gowers::Budget;

fn main() -> gowers::Result<()> {
    for seed in 0..4 {
        let form = MultilinearForm::random(2, vec![2, 2, 1], seed);
        let pr = partition_rank_exhaustive(&form, 2, Budget::default())?;
        println!(
            "seed {seed}: bias {:.4}  analytic rank {:.3}  partition rank {:?} (bounds {}..={})",
            form.bias()?,
            form.analytic_rank()?,
            pr.rank,
            pr.lower,
            pr.upper
        );
    }
    Ok(())
}
