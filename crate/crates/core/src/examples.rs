//! Reference systems with known closed-form quantities.

use crate::lqr_core::SystemInstance;

/// Two states, one input:
/// `A = [[-2, 1], [0, -1]]`, `B = [1, 1]ᵀ`, `Q = I₂`, `R = 2`.
///
/// `A − BK` is Hurwitz exactly when `k₂ > −k₁ − 1`.
pub fn two_state_example() -> SystemInstance {
    SystemInstance::from_row_major(2, 1, &[-2., 1., 0., -1.], &[1., 1.], &[1., 0., 0., 1.], &[2.])
        .expect("valid instance")
}

/// `A = −1`, `B = Q = R = 1`. The stabilizing CARE root is `√2 − 1`.
pub fn scalar_example() -> SystemInstance {
    SystemInstance::from_row_major(1, 1, &[-1.], &[1.], &[1.], &[1.]).expect("valid instance")
}

/// Closed-loop stability region of [`two_state_example`].
pub fn two_state_is_stabilizing(k1: f64, k2: f64) -> bool {
    k2 > -k1 - 1.0
}
