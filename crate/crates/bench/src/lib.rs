//! Shared fixtures for the benchmarks.

use hjbr_core::{build_example1, build_example2, ControlProblem, ExampleParams};

pub fn example1() -> ControlProblem {
    build_example1(ExampleParams::baseline()).expect("baseline parameters are valid")
}

pub fn example2() -> ControlProblem {
    build_example2(ExampleParams::baseline()).expect("baseline parameters are valid")
}
