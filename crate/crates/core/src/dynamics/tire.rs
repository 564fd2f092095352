use super::friction::FrictionCurve;

/// Denominator floor for both slip ratios, m/s.
pub const SLIP_EPS_V: f64 = 0.01;

fn slip_denominator(v_long: f64) -> f64 {
    v_long.abs().max(SLIP_EPS_V)
}

/// `(r·ω − v_x) / |v_x|`, with `|v_x|` floored at [`SLIP_EPS_V`].
pub fn longitudinal_slip(r: f64, omega: f64, v_x: f64) -> f64 {
    (r * omega - v_x) / slip_denominator(v_x)
}

/// `tan α = v_y / |v_x|`, with `|v_x|` floored at [`SLIP_EPS_V`].
pub fn lateral_slip(v_x: f64, v_y: f64) -> f64 {
    v_y / slip_denominator(v_x)
}

/// Longitudinal and lateral tire force for the given slips and normal load.
/// Curve output is force per unit load; the lateral force opposes the slip.
pub fn tire_forces(
    curve_x: &FrictionCurve,
    curve_y: &FrictionCurve,
    s_x: f64,
    s_y: f64,
    f_z: f64,
) -> (f64, f64) {
    if f_z <= 0.0 {
        return (0.0, 0.0);
    }
    (curve_x.eval(s_x) * f_z, -curve_y.eval(s_y) * f_z)
}
