//! Force densities applied to the network, N/m.
//!
//! Loads are selected by name with parameter overrides instead of a general
//! expression parser, so published runs stay reproducible. All loads are
//! evaluable at any point and time; static solves evaluate them at t = 0.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Unit vector normal to the x1 axis through the point x, or zero on the axis.
pub fn radial_direction(x: &Vector3<f64>) -> Vector3<f64> {
    let r = (x.y * x.y + x.z * x.z).sqrt();
    if r < 1e-300 {
        return Vector3::zeros();
    }
    Vector3::new(0.0, x.y / r, x.z / r)
}

/// A named load with its parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Load {
    /// f(x) = direction, constant in space and time.
    Constant { direction: [f64; 3] },
    /// Radial bell centered at half the axial extent:
    /// f(x1) = amplitude / (sharpness (x1 - axial_length/2)^2 + 1).
    Bell {
        amplitude: f64,
        sharpness: f64,
        axial_length: f64,
    },
    /// Transverse parabola: f(x) = amplitude (x1 - axial_length/2)^2 e3.
    TransverseParabola { amplitude: f64, axial_length: f64 },
    /// Radial monomial: f(x1) = amplitude (x1 - center)^power.
    RadialPolynomial {
        amplitude: f64,
        center: f64,
        power: i32,
    },
    /// Fixed-direction monomial: f(x) = amplitude (x1 - center)^power d.
    /// Restricted to a straight strut this is a polynomial in arclength,
    /// which makes it the natural probe for exactness checks.
    DirectedPolynomial {
        amplitude: f64,
        center: f64,
        power: i32,
        direction: [f64; 3],
    },
    /// Radial traveling wave: the profile
    /// F(y) = amplitude cos(y) with y = (pi / support_width)(x1 - speed (t - onset))
    /// applied while |x1 - speed (t - onset)| < support_width / 2 and zero
    /// outside, so the profile vanishes continuously at the cutoff.
    TravelingWave {
        amplitude: f64,
        speed: f64,
        onset: f64,
        support_width: f64,
    },
}

impl Load {
    /// The radial bell of the reference experiments:
    /// f(x1) = 10 / (1e5 (x1 - L/2)^2 + 1), radial direction.
    pub fn bell_f1(axial_length: f64) -> Load {
        Load::Bell {
            amplitude: 10.0,
            sharpness: 1e5,
            axial_length,
        }
    }

    /// The transverse parabola: f = 1e3 (x1 - L/2)^2 e3.
    pub fn parabola_f2(axial_length: f64) -> Load {
        Load::TransverseParabola {
            amplitude: 1e3,
            axial_length,
        }
    }

    /// The quadratic radial load used for convergence studies:
    /// f(x1) = 2.5e7 x1^2, radial direction.
    pub fn radial_quadratic() -> Load {
        Load::RadialPolynomial {
            amplitude: 2.5e7,
            center: 0.0,
            power: 2,
        }
    }

    /// The reference traveling wave: amplitude 5e-8, speed 0.0075 m/s,
    /// onset 0.5 s, support 3 mm.
    pub fn reference_wave() -> Load {
        Load::TravelingWave {
            amplitude: 5e-8,
            speed: 0.0075,
            onset: 0.5,
            support_width: 0.003,
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self, Load::TravelingWave { .. })
    }

    /// Force density at point x and time t.
    pub fn eval(&self, x: &Vector3<f64>, t: f64) -> Vector3<f64> {
        match self {
            Load::Constant { direction } => {
                Vector3::new(direction[0], direction[1], direction[2])
            }
            Load::Bell {
                amplitude,
                sharpness,
                axial_length,
            } => {
                let d = x.x - 0.5 * axial_length;
                radial_direction(x) * (amplitude / (sharpness * d * d + 1.0))
            }
            Load::TransverseParabola {
                amplitude,
                axial_length,
            } => {
                let d = x.x - 0.5 * axial_length;
                Vector3::new(0.0, 0.0, amplitude * d * d)
            }
            Load::RadialPolynomial {
                amplitude,
                center,
                power,
            } => radial_direction(x) * (amplitude * (x.x - center).powi(*power)),
            Load::DirectedPolynomial {
                amplitude,
                center,
                power,
                direction,
            } => {
                Vector3::new(direction[0], direction[1], direction[2])
                    * (amplitude * (x.x - center).powi(*power))
            }
            Load::TravelingWave {
                amplitude,
                speed,
                onset,
                support_width,
            } => {
                let offset = x.x - speed * (t - onset);
                let half = 0.5 * support_width;
                if offset.abs() >= half {
                    return Vector3::zeros();
                }
                let y = std::f64::consts::PI / support_width * offset;
                radial_direction(x) * (amplitude * y.cos())
            }
        }
    }
}
