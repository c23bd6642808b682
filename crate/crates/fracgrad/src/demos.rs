//! Small closed-form scenes that make the fractional behaviour visible
//! without a network: a two-variable bowl descended with fractional steps,
//! a saddle whose flat direction the fractional gradient amplifies, and the
//! two-term split of the scalar rule.

use crate::error::{Error, Result};
use crate::fracdiff::{frac_scalar_deriv, frac_scalar_deriv_parts};
use crate::special::{gamma, recip_gamma_or_zero, sign, FracOrder};

/// One point of a descent run, objective included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub iter: usize,
    pub x1: f64,
    pub x2: f64,
    pub objective: f64,
}

/// Fractional partial of `u^2 + c` with respect to `u`, magnitude clamped
/// at `eps`:
///
/// ```text
/// sign(u) * ( 2/Gamma(3-a) * |u|^(2-a) + c/Gamma(1-a) * |u|^(-a) )
/// ```
///
/// At order one this is the classical `2u` because the second reciprocal
/// gamma sits on a pole and vanishes.
fn bowl_partial(u: f64, coupled: f64, alpha: FracOrder, eps: f64) -> Result<f64> {
    let a = alpha.value();
    let mag = u.abs().max(eps);
    let power = 2.0 * mag.powf(2.0 - a) / gamma(3.0 - a)?;
    let constant = coupled * recip_gamma_or_zero(1.0 - a) * mag.powf(-a);
    Ok(sign(u) * (power + constant))
}

/// Descends `y = (x1 + 2)^2 + (x2 + 3)^2` with fractional gradient steps of
/// size `eta`, both coordinates updated simultaneously from the same
/// iterate. Returns the start plus one point per step. A non-finite
/// iterate aborts with a divergence error naming the step.
pub fn bowl_trajectory(
    alpha: FracOrder,
    eta: f64,
    steps: usize,
    start: (f64, f64),
    eps: f64,
) -> Result<Vec<TrajectoryPoint>> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Config {
            message: format!("step size must be positive and finite, got {eta}"),
        });
    }
    if steps == 0 {
        return Err(Error::Config {
            message: "trajectory needs at least one step".into(),
        });
    }
    if !(eps > 0.0) {
        return Err(Error::Config {
            message: format!("clamp floor eps must be positive, got {eps}"),
        });
    }
    let objective = |x1: f64, x2: f64| (x1 + 2.0).powi(2) + (x2 + 3.0).powi(2);
    let (mut x1, mut x2) = start;
    let mut points = Vec::with_capacity(steps + 1);
    points.push(TrajectoryPoint {
        iter: 0,
        x1,
        x2,
        objective: objective(x1, x2),
    });
    for k in 1..=steps {
        let u1 = x1 + 2.0;
        let u2 = x2 + 3.0;
        let d1 = bowl_partial(u1, u2 * u2, alpha, eps)?;
        let d2 = bowl_partial(u2, u1 * u1, alpha, eps)?;
        x1 -= eta * d1;
        x2 -= eta * d2;
        let y = objective(x1, x2);
        if !x1.is_finite() || !x2.is_finite() || !y.is_finite() {
            return Err(Error::Divergence {
                alpha: alpha.value(),
                lr: eta,
                iteration: k,
            });
        }
        points.push(TrajectoryPoint {
            iter: k,
            x1,
            x2,
            objective: y,
        });
    }
    Ok(points)
}

/// Both gradient readings of the saddle `z = x^2 - y^2` at one point.
#[derive(Debug, Clone, Copy)]
pub struct SaddleGradients {
    pub integer_x: f64,
    pub integer_y: f64,
    pub fractional_x: f64,
    pub fractional_y: f64,
}

/// Evaluates the classical and fractional gradients of `z = x^2 - y^2`.
/// Each fractional partial treats the other variable's term as the
/// constant, so near `y = 0` the `x^2 / Gamma(1-a) * |y|^(-a)` coupling
/// makes the y-component large where the classical `-2y` is almost zero.
///
/// At order one the fractional reading is the classical gradient, exactly
/// and everywhere. Below one, a coordinate sitting exactly on its axis is
/// read as displaced to `+eps`: the whole point of the scene is that the
/// coupling term still pulls off the saddle there, so the sign factor must
/// not zero it out.
pub fn saddle_gradients(alpha: FracOrder, point: (f64, f64), eps: f64) -> Result<SaddleGradients> {
    if !(eps > 0.0) {
        return Err(Error::Config {
            message: format!("clamp floor eps must be positive, got {eps}"),
        });
    }
    let (x, y) = point;
    let integer_x = 2.0 * x;
    let integer_y = -2.0 * y;
    if alpha.is_one() {
        return Ok(SaddleGradients {
            integer_x,
            integer_y,
            fractional_x: integer_x,
            fractional_y: integer_y,
        });
    }
    let zero_free_sign = |v: f64| if v < 0.0 { -1.0 } else { 1.0 };
    let a = alpha.value();
    let g3 = gamma(3.0 - a)?;
    let rg1 = recip_gamma_or_zero(1.0 - a);
    let xm = x.abs().max(eps);
    let ym = y.abs().max(eps);
    Ok(SaddleGradients {
        integer_x,
        integer_y,
        fractional_x: zero_free_sign(x) * (2.0 * xm.powf(2.0 - a) / g3 - y * y * rg1 * xm.powf(-a)),
        fractional_y: zero_free_sign(y) * (-2.0 * ym.powf(2.0 - a) / g3 + x * x * rg1 * ym.powf(-a)),
    })
}

/// Splits a scaled scalar derivative into its power-rule part and its
/// bias-coupling part: given the upstream factor `j_prime_y`, returns
/// `(j_prime_y * main, j_prime_y * coupling)`. The two pieces sum to
/// `j_prime_y` times the full derivative, which is how the coupling term
/// can be read as a built-in regularizer riding along with the gradient.
pub fn scaled_deriv_split(
    x: f64,
    w: f64,
    b: f64,
    alpha: FracOrder,
    j_prime_y: f64,
    eps: f64,
) -> (f64, f64) {
    let (main, coupling) = frac_scalar_deriv_parts(x, w, b, alpha, eps);
    (j_prime_y * main, j_prime_y * coupling)
}

/// Full scaled derivative, for checking the split against.
pub fn scaled_deriv(x: f64, w: f64, b: f64, alpha: FracOrder, j_prime_y: f64, eps: f64) -> f64 {
    j_prime_y * frac_scalar_deriv(x, w, b, alpha, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    const START: (f64, f64) = (-3.5, -4.7);

    fn order(a: f64) -> FracOrder {
        FracOrder::new(a).unwrap()
    }

    #[test]
    fn order_one_first_step_is_classical() {
        let points = bowl_trajectory(order(1.0), 0.1, 1, START, 1e-8).unwrap();
        // x1 <- -3.5 - 0.1 * 2 * (-1.5) = -3.2, likewise x2 <- -4.36.
        assert!((points[1].x1 - (-3.2)).abs() < 1e-12, "x1 = {}", points[1].x1);
        assert!((points[1].x2 - (-4.36)).abs() < 1e-12, "x2 = {}", points[1].x2);
    }

    #[test]
    fn order_one_trajectory_matches_the_closed_form_recursion() {
        let eta = 0.1;
        let steps = 20;
        let points = bowl_trajectory(order(1.0), eta, steps, START, 1e-8).unwrap();
        assert_eq!(points.len(), steps + 1);
        // Classical descent contracts each offset by (1 - 2 eta) per step.
        let shrink = 1.0 - 2.0 * eta;
        for (k, p) in points.iter().enumerate() {
            assert_eq!(p.iter, k);
            let u1 = (START.0 + 2.0) * shrink.powi(k as i32);
            let u2 = (START.1 + 3.0) * shrink.powi(k as i32);
            assert!((p.x1 - (u1 - 2.0)).abs() <= 1e-12, "step {k}: {} vs {}", p.x1, u1 - 2.0);
            assert!((p.x2 - (u2 - 3.0)).abs() <= 1e-12);
            let want_obj = u1 * u1 + u2 * u2;
            assert!((p.objective - want_obj).abs() <= 1e-12 * want_obj.max(1.0));
        }
    }

    #[test]
    fn half_order_reaches_the_minimum_neighborhood_sooner() {
        let frac = bowl_trajectory(order(0.5), 0.1, 20, START, 1e-8).unwrap();
        let grad = bowl_trajectory(order(1.0), 0.1, 20, START, 1e-8).unwrap();
        let dist = |p: &TrajectoryPoint| ((p.x1 + 2.0).powi(2) + (p.x2 + 3.0).powi(2)).sqrt();
        assert!(
            dist(&frac[5]) < dist(&grad[5]),
            "after 5 steps: fractional at {}, classical at {}",
            dist(&frac[5]),
            dist(&grad[5])
        );
    }

    #[test]
    fn trajectory_rejects_bad_settings_and_flags_blowups() {
        assert!(bowl_trajectory(order(0.5), 0.0, 5, START, 1e-8).is_err());
        assert!(bowl_trajectory(order(0.5), 0.1, 0, START, 1e-8).is_err());
        assert!(bowl_trajectory(order(0.5), 0.1, 5, START, 0.0).is_err());
        let err = bowl_trajectory(order(0.5), 1e80, 50, START, 1e-8).unwrap_err();
        match err {
            Error::Divergence { iteration, .. } => assert!(iteration >= 1),
            other => panic!("expected divergence, got {other}"),
        }
    }

    #[test]
    fn saddle_order_one_collapses_to_the_classical_gradient() {
        let g = saddle_gradients(order(1.0), (0.7, -1.3), 1e-8).unwrap();
        assert_eq!(g.fractional_x, g.integer_x);
        assert_eq!(g.fractional_y, g.integer_y);
        assert_eq!(g.integer_x, 1.4);
        assert_eq!(g.integer_y, 2.6);
    }

    #[test]
    fn saddle_escape_component_survives_on_the_axis() {
        // Exactly on the flat direction the classical gradient has no y
        // component at all; any order below one must still produce one.
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..50 {
            let x = rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let alpha = order(rng.gen_range(0.1..0.99));
            let g = saddle_gradients(alpha, (x, 0.0), 1e-8).unwrap();
            assert_eq!(g.integer_y, 0.0);
            assert!(
                g.fractional_y.abs() > 1e-6,
                "alpha {} at ({x}, 0): fractional y = {}",
                alpha.value(),
                g.fractional_y
            );
        }
    }

    #[test]
    fn saddle_flat_direction_is_amplified_near_the_axis() {
        // At (1, 1e-3) the classical y-component is -2e-3; the half-order
        // reading couples in x^2 / Gamma(0.5) * |y|^(-0.5) and dwarfs it.
        let g = saddle_gradients(order(0.5), (1.0, 1e-3), 1e-8).unwrap();
        assert_eq!(g.integer_y, -2e-3);
        assert!(
            g.fractional_y.abs() >= 10.0 * g.integer_y.abs(),
            "fractional {} vs classical {}",
            g.fractional_y,
            g.integer_y
        );
        assert!(g.fractional_y > 0.0, "coupling term must dominate the sign");
        // Hand evaluation of the same point.
        let want = -2.0 / gamma(2.5).unwrap() * 1e-3f64.powf(1.5)
            + 1.0 / gamma(0.5).unwrap() * 1e-3f64.powf(-0.5);
        assert!((g.fractional_y - want).abs() <= 1e-12 * want.abs());
    }

    #[test]
    fn split_pieces_sum_to_the_scaled_derivative() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..1000 {
            let x = rng.gen_range(-3.0..3.0);
            let w = rng.gen_range(-3.0..3.0);
            let b = rng.gen_range(-3.0..3.0);
            let j = rng.gen_range(-5.0..5.0);
            let alpha = order(rng.gen_range(0.05..=1.0));
            let (main, coupling) = scaled_deriv_split(x, w, b, alpha, j, 1e-8);
            let full = scaled_deriv(x, w, b, alpha, j, 1e-8);
            let gap = (main + coupling - full).abs();
            assert!(
                gap <= 1e-12 * full.abs().max(1.0),
                "split drifted: {main} + {coupling} vs {full}"
            );
        }
    }

    #[test]
    fn split_degenerates_where_it_should() {
        // Order one: the coupling piece vanishes and the main piece is the
        // classical chain product.
        let (main, coupling) = scaled_deriv_split(2.0, 1.5, 0.7, order(1.0), 3.0, 1e-8);
        assert_eq!(main, 6.0);
        assert_eq!(coupling, 0.0);
        // Zero bias: nothing to couple at any order.
        let (_, coupling) = scaled_deriv_split(2.0, 1.5, 0.0, order(0.5), 3.0, 1e-8);
        assert_eq!(coupling, 0.0);
    }
}
