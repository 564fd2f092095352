//! Quadrature encoders on the rear wheels.

/// `N_ticks = CPR · N_rev`, truncated toward zero so the count is exactly
/// antisymmetric in the direction of rotation.
pub fn ticks(cpr: u32, revs_accum: f64) -> i64 {
    (cpr as f64 * revs_accum).trunc() as i64
}

/// Left and right rear-wheel tick counts.
pub fn read_encoders(cpr: u32, rear_left_revs: f64, rear_right_revs: f64) -> [i64; 2] {
    [ticks(cpr, rear_left_revs), ticks(cpr, rear_right_revs)]
}
