//! Minimizes the Rosenbrock function with each variant and prints the
//! iteration counts and estimated convergence order.

use qnewton::objective::rosenbrock;
use qnewton::stepper::estimate_order;
use qnewton::{run, BasisStrategy, StepperConfig};

fn main() -> qnewton::Result<()> {
    let f = rosenbrock();
    let x0 = [-1.2, 1.0];
    let configs = [
        (
            "G, eigen basis, tau 0.9",
            StepperConfig::g(2, 0).with_tau(0.9),
        ),
        (
            "G, hybrid basis",
            StepperConfig::g(2, 0).with_basis(BasisStrategy::hybrid()),
        ),
        ("NQNB", StepperConfig::nqnb(2, 0)),
        ("NQNB_S", StepperConfig::nqnb_s(2, 0)),
        ("NQN", StepperConfig::nqn(2, 0)),
    ];
    for (name, cfg) in configs {
        let r = run(&f, &x0, &cfg)?;
        let order = estimate_order(&r, &[1.0, 1.0])
            .map(|o| format!("{o:.2}"))
            .unwrap_or_else(|_| "n/a".into());
        println!(
            "{name:<26} {:<20} {:>5} iterations  x = ({:.8}, {:.8})  order {order}",
            r.termination.as_str(),
            r.iterations(),
            r.final_x[0],
            r.final_x[1],
        );
    }
    Ok(())
}
