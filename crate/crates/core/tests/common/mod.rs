//! Shared fixtures for the integration suites: the three-player chain plant
//! and its delay structure.

use hinf_core::delay::{DelayConstraint, DelayPattern};
use hinf_core::synthesis::Plant;
use nalgebra::DMatrix;

/// Three coupled first-order nodes in a line, disturbance on every state,
/// control weight on every input, noisy state measurements.
pub fn chain_plant() -> Plant {
    let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.2, 0.0, 0.2, 0.5, 0.2, 0.0, 0.2, 0.5]);
    let eye3 = DMatrix::<f64>::identity(3, 3);
    let zero3 = DMatrix::<f64>::zeros(3, 3);
    let mut b1 = DMatrix::zeros(3, 6);
    b1.view_mut((0, 0), (3, 3)).copy_from(&eye3);
    let mut c1 = DMatrix::zeros(6, 3);
    c1.view_mut((0, 0), (3, 3)).copy_from(&eye3);
    let mut d12 = DMatrix::zeros(6, 3);
    d12.view_mut((3, 0), (3, 3)).copy_from(&eye3);
    let mut d21 = DMatrix::zeros(3, 6);
    d21.view_mut((0, 3), (3, 3)).copy_from(&eye3);
    Plant {
        a,
        b1,
        b2: eye3.clone(),
        c1,
        c2: eye3,
        d11: DMatrix::zeros(6, 6),
        d12,
        d21,
        d22: zero3,
    }
}

/// Unit-delay chain over three nodes: delay grows with line distance.
pub fn chain_pattern() -> DelayPattern {
    DelayPattern::from_matrix(vec![vec![0, 1, 2], vec![1, 0, 1], vec![2, 1, 0]]).unwrap()
}

/// Masks for the full-information parameter: rows are the three controls,
/// columns the six disturbance channels (process noise on node i, then
/// measurement noise on node i).
pub fn chain_constraint_full_information() -> DelayConstraint {
    DelayConstraint::from_pattern(&chain_pattern(), &[0, 1, 2], &[0, 1, 2, 0, 1, 2]).unwrap()
}

/// Masks for the output-feedback parameter: measurement i lives on node i.
pub fn chain_constraint_output_feedback() -> DelayConstraint {
    DelayConstraint::from_pattern(&chain_pattern(), &[0, 1, 2], &[0, 1, 2]).unwrap()
}
