//! Fixtures shared by the criterion benches.

use lattice_zeta::domains::{build_domain, Shape};
use lattice_zeta::operator::{assemble, DirichletOperator};
use lattice_zeta::walks::{BuiltinWalk, StepSet};

pub fn square_operator(walk: BuiltinWalk, side: usize) -> DirichletOperator {
    let steps = StepSet::builtin(walk, None).expect("builtin walk");
    let dom = build_domain(Shape::Square { side }, &steps).expect("square");
    assemble(&steps, &dom).expect("assembly")
}
