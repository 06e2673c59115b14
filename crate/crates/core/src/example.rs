//! The five-state benchmark plant with two known inputs, two disturbances and
//! three outputs.

use nalgebra::dmatrix;

use crate::lti::LtiSystem;

pub fn example_system() -> LtiSystem {
    let a = dmatrix![
        0.0, 0.0, 0.0, 0.0, 0.5;
        1.0, 0.0, 0.0, 0.0, 0.75;
        0.0, 1.0, 0.0, 0.0, -2.0;
        0.0, 0.0, 1.0, 0.0, -1.25;
        0.0, 0.0, 0.0, 1.0, 3.0
    ];
    let b = dmatrix![
        0.0, 1.0;
        2.0, 1.0;
        -2.0, 1.0;
        0.0, 0.0;
        1.0, 0.0
    ];
    let e = dmatrix![
        0.0, 1.0;
        0.0, 0.0;
        0.0, 0.0;
        2.0, 1.0;
        1.0, 0.0
    ];
    let c = dmatrix![
        0.0, 1.0, -1.0, 2.0, -1.0;
        0.0, 0.0, 2.0, 0.0, -1.0;
        3.0, 0.0, 2.0, -1.0, 1.0
    ];
    LtiSystem::new(a, b, e, c).expect("benchmark plant is well formed")
}
