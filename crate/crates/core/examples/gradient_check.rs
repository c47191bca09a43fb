// Central-difference check of every gradient tensor on the toy model.

use clinicode::model::Mode;
use clinicode::train::{grad_check, toy_problem, GradCheckConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for mode in [Mode::Han, Mode::Hlan] {
        let (params, batch) = toy_problem(mode, 3)?;
        let report = grad_check(&params, &batch, &GradCheckConfig::default())?;
        println!("{mode:?}: {} coordinates, max relative error {:.2e}", report.n_checked, report.max_rel_error);
        for (tensor, err) in report.per_tensor.iter().filter(|(_, e)| *e > 1e-6) {
            println!("  {tensor:<28} {err:.2e}");
        }
        assert!(report.max_rel_error < 1e-4);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
