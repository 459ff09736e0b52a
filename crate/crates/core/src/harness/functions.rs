//! Test functions and error metrics of the numerical experiments.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Franke's function, with the linear (not squared) `(9y + 1)/10` term in the
/// second exponent.
pub fn franke<T: Scalar>(x: T, y: T) -> T {
    let c = T::of;
    let nine_x = c(9.0) * x;
    let nine_y = c(9.0) * y;
    let sq = |v: T| v * v;
    c(0.75) * (-sq(nine_x - c(2.0)) / c(4.0) - sq(nine_y - c(2.0)) / c(4.0)).exp()
        + c(0.75) * (-sq(nine_x + c(1.0)) / c(49.0) - (nine_y + c(1.0)) / c(10.0)).exp()
        + c(0.5) * (-sq(nine_x - c(7.0)) / c(4.0) - sq(nine_y - c(3.0)) / c(4.0)).exp()
        - c(0.2) * (-sq(nine_x - c(4.0)) - sq(nine_y - c(7.0))).exp()
}

/// Harmonic function with a corner singularity on the L-shaped domain:
/// `u(r, φ) = −r^{2/3} sin((2φ − π)/3)` with `φ ∈ [π/2, 2π]`.
///
/// Points in the open first quadrant are outside the branch; angles that miss
/// it only by rounding are clamped.
pub fn lshape_u<T: Scalar>(x: T, y: T) -> Result<T> {
    let r = x.hypot(y);
    if r == T::zero() {
        return Ok(T::zero());
    }
    let two_pi = T::TAU();
    let half_pi = T::FRAC_PI_2();
    let mut phi = y.atan2(x);
    if phi < T::zero() {
        phi += two_pi;
    } else if phi == T::zero() {
        phi = two_pi;
    }
    if phi < half_pi {
        if x > T::zero() && y > T::zero() && half_pi - phi > T::of(1e-12) {
            return Err(Error::InvalidInput(format!(
                "({x}, {y}) lies outside the L-shaped domain"
            )));
        }
        phi = half_pi;
    }
    let third = T::one() / T::of(3.0);
    Ok(-r.powf(T::of(2.0) * third) * ((T::of(2.0) * phi - T::PI()) * third).sin())
}

/// `1 / (‖x − x0‖^{1/4} + 10^{-4})`. Panics if the dimensions differ.
pub fn cloud_target<T: Scalar>(x: &[T], x0: &[T]) -> T {
    assert_eq!(x.len(), x0.len(), "point and centre dimensions differ");
    let r = crate::scalar::distance(x, x0);
    T::one() / (r.sqrt().sqrt() + T::of(1e-4))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    L2,
    Max,
}

/// `‖values − reference‖_p / ‖reference‖_p` over the evaluation set.
pub fn relative_error<T: Scalar>(values: &[T], reference: &[T], p: Norm) -> Result<f64> {
    if values.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            found: values.len(),
        });
    }
    let (num, den) = match p {
        Norm::L2 => {
            let mut num = 0.0;
            let mut den = 0.0;
            for (&v, &r) in values.iter().zip(reference) {
                let (v, r) = (v.as_f64(), r.as_f64());
                num += (v - r) * (v - r);
                den += r * r;
            }
            (num.sqrt(), den.sqrt())
        }
        Norm::Max => values
            .iter()
            .zip(reference)
            .fold((0.0f64, 0.0f64), |(n, d), (&v, &r)| {
                let (v, r) = (v.as_f64(), r.as_f64());
                (n.max((v - r).abs()), d.max(r.abs()))
            }),
    };
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(num / den)
}

/// `log(e_{l+1}/e_l) / log(h_{l+1}/h_l)` for consecutive levels.
pub fn convergence_order(errors: &[f64], meshes: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != meshes.len() {
        return Err(Error::DimensionMismatch {
            expected: meshes.len(),
            found: errors.len(),
        });
    }
    if errors.len() < 2 {
        return Err(Error::InvalidInput("need at least two levels".into()));
    }
    if let Some(bad) = errors.iter().chain(meshes).find(|&&v| !(v > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "errors and mesh sizes must be positive, got {bad}"
        )));
    }
    if meshes.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput(
            "mesh sizes must decrease strictly".into(),
        ));
    }
    Ok(errors
        .windows(2)
        .zip(meshes.windows(2))
        .map(|(e, h)| (e[1] / e[0]).ln() / (h[1] / h[0]).ln())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn franke_matches_high_precision_values() {
        // 30-digit evaluations of the four printed terms
        assert!((franke::<f64>(0.0, 0.0) - 0.766_420_591_284_923_1).abs() < 1e-15);
        let v: f64 = franke(4.0 / 9.0, 7.0 / 9.0);
        assert!((v - 0.003_821_605_373_934_568).abs() < 1e-15);
        assert!(franke(10.0f64, 10.0).abs() < 1e-10);
        let single: f32 = franke(0.0, 0.0);
        assert!((single - 0.766_420_6).abs() < 1e-6);
    }

    #[test]
    fn lshape_values() {
        assert_eq!(lshape_u(0.0, 0.0).unwrap(), 0.0);
        let v: f64 = lshape_u(-1.0, 0.0).unwrap();
        assert!((v + 0.866_025_403_784_438_6).abs() < 1e-15);
        // positive x axis is φ = 2π, positive y axis φ = π/2
        let a: f64 = lshape_u(0.25, 0.0).unwrap();
        assert!((a + 0.25f64.powf(2.0 / 3.0) * (std::f64::consts::PI).sin()).abs() < 1e-15);
        let b: f64 = lshape_u(0.0, 0.25).unwrap();
        assert!(b.abs() < 1e-15);
        assert!(lshape_u(0.2, 0.3).is_err());
    }

    #[test]
    fn lshape_is_harmonic() {
        let h = 1e-3;
        for &(x, y) in &[
            (-0.3, 0.2),
            (-0.25, -0.35),
            (0.3, -0.2),
            (-0.1, 0.4),
            (0.4, -0.4),
        ] {
            let u = |a: f64, b: f64| lshape_u(a, b).unwrap();
            let lap =
                (u(x + h, y) + u(x - h, y) + u(x, y + h) + u(x, y - h) - 4.0 * u(x, y)) / (h * h);
            assert!(lap.abs() <= 1e-3, "Δu({x},{y}) = {lap}");
        }
    }

    #[test]
    fn cloud_target_values() {
        let x0 = [0.1, 0.2, 0.3];
        assert!((cloud_target::<f64>(&x0, &x0) - 1e4).abs() < 1e-9);
        let v: f64 = cloud_target(&[1.1, 0.2, 0.3], &x0);
        assert!((v - 1.0 / (1.0 + 1e-4)).abs() < 1e-12);
        let mut last = f64::INFINITY;
        for k in 0..50 {
            let v = cloud_target(&[0.1 + 0.05 * k as f64, 0.2, 0.3], &x0);
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn error_examples() {
        let r = [1.0, -2.0, 3.0];
        assert_eq!(relative_error(&r, &r, Norm::L2).unwrap(), 0.0);
        assert_eq!(relative_error(&[0.0; 3], &r, Norm::Max).unwrap(), 1.0);
        let scaled: Vec<f64> = r.iter().map(|v| 1.1 * v).collect();
        assert!((relative_error(&scaled, &r, Norm::L2).unwrap() - 0.1).abs() < 1e-12);
        assert!(matches!(
            relative_error(&r, &[0.0; 3], Norm::L2),
            Err(Error::ZeroReference)
        ));
    }

    #[test]
    fn order_examples() {
        let o = convergence_order(&[1e-2, 2.5e-3], &[0.5, 0.25]).unwrap();
        assert!((o[0] - 2.0).abs() < 1e-12);
        assert_eq!(
            convergence_order(&[0.1, 0.1, 0.1], &[0.5, 0.25, 0.125]).unwrap(),
            vec![0.0, 0.0]
        );
        // two reference error values, level 2 -> 3
        let o = convergence_order(&[5.29e-2, 9.20e-3], &[0.25, 0.125]).unwrap();
        assert!((o[0] - 2.53).abs() < 0.01);
        assert!(convergence_order(&[0.0, 1.0], &[0.5, 0.25]).is_err());
        assert!(convergence_order(&[1.0, 1.0], &[0.25, 0.5]).is_err());
    }
}
