use twinsim_core::dynamics::suspension::{suspension_step, SuspensionCornerState, SuspensionParams};

// A huge unsprung mass pins the wheel, leaving the sprung mass as a damped
// oscillator M·Z̈ + B·Ż + K·Z = −F under a step load F.
const M: f64 = 0.25;
const B: f64 = 2.5;
const K: f64 = 250.0;
const F: f64 = 1.0;

fn analytic(t: f64) -> f64 {
    let wn = (K / M).sqrt();
    let zeta = B / (2.0 * (K * M).sqrt());
    let wd = wn * (1.0 - zeta * zeta).sqrt();
    let decay = (-zeta * wn * t).exp();
    -F / K * (1.0 - decay * ((wd * t).cos() + zeta / (1.0 - zeta * zeta).sqrt() * (wd * t).sin()))
}

#[test]
fn damped_step_matches_closed_form() {
    let p = SuspensionParams::free(M, 1e12, B, K);
    let dt = 0.001;
    let mut c = SuspensionCornerState::default();
    let (mut err2, mut ref2) = (0.0, 0.0);
    for n in 1..=2000 {
        c = suspension_step(&c, &p, F, dt).unwrap();
        let z = analytic(n as f64 * dt);
        err2 += (c.sprung_disp - z).powi(2);
        ref2 += z * z;
    }
    let rel = (err2 / ref2).sqrt();
    assert!(rel < 0.01, "relative RMS error {rel}");
    assert!((c.sprung_disp + F / K).abs() < 1e-5, "settles at −F/K, got {}", c.sprung_disp);
}

#[test]
fn free_response_energy_is_non_increasing() {
    let p = SuspensionParams::free(M, 0.03, B, K);
    let mut c = SuspensionCornerState {
        sprung_disp: 0.005,
        ..Default::default()
    };
    let mut e = c.energy(&p);
    let e0 = e;
    for _ in 0..2000 {
        c = suspension_step(&c, &p, 0.0, 0.001).unwrap();
        let e1 = c.energy(&p);
        // Slack only for rounding once the motion has died out.
        assert!(e1 <= e + 1e-12 * e0, "{e1} > {e}");
        e = e1;
    }
    assert!(e < 1e-3 * e0);
}
