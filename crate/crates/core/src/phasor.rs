//! Complex phasors, distributed line constants and equivalent-π two-ports.
//!
//! Angles are radians throughout. Conversion from degrees happens only where
//! scenario files are read.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

pub use num_complex::Complex64 as Complex;

use crate::error::{Error, Result};

/// Below this `|γℓ|` the correction factors use their Taylor expansion.
pub const SERIES_THRESHOLD: f64 = 1e-8;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = PI - (PI - theta).rem_euclid(2.0 * PI);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

/// Principal square root with `Re >= 0`; purely imaginary results take the
/// positive imaginary branch.
pub fn principal_sqrt(z: Complex) -> Complex {
    let r = z.sqrt();
    if r.re < 0.0 || (r.re == 0.0 && r.im < 0.0) {
        -r
    } else {
        r
    }
}

/// A sinusoidal quantity at nominal frequency, stored in polar form so that
/// phase rotations never perturb the magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Phasor {
    magnitude: f64,
    angle: f64,
}

impl Phasor {
    pub const ZERO: Phasor = Phasor {
        magnitude: 0.0,
        angle: 0.0,
    };

    pub fn new(re: f64, im: f64) -> Self {
        Self::from_complex(Complex::new(re, im))
    }

    pub fn from_complex(c: Complex) -> Self {
        let magnitude = c.norm();
        let angle = if magnitude == 0.0 || magnitude.is_nan() {
            0.0
        } else {
            wrap_angle(c.im.atan2(c.re))
        };
        Phasor { magnitude, angle }
    }

    /// Builds a phasor from magnitude and angle (radians). Negative
    /// magnitudes are folded into the angle.
    pub fn from_polar(magnitude: f64, angle: f64) -> Self {
        if magnitude < 0.0 {
            Phasor {
                magnitude: -magnitude,
                angle: wrap_angle(angle + PI),
            }
        } else {
            Phasor {
                magnitude,
                angle: if angle.is_finite() { wrap_angle(angle) } else { angle },
            }
        }
    }

    pub fn magnitude(self) -> f64 {
        self.magnitude
    }

    /// Angle in `(-π, π]`.
    pub fn angle(self) -> f64 {
        self.angle
    }

    pub fn to_polar(self) -> (f64, f64) {
        (self.magnitude, self.angle)
    }

    pub fn value(self) -> Complex {
        Complex::from_polar(self.magnitude, self.angle)
    }

    /// Rotates by `e^{jθ}`; the magnitude is carried over unchanged.
    pub fn rotate(self, theta: f64) -> Self {
        Phasor {
            magnitude: self.magnitude,
            angle: wrap_angle(self.angle + theta),
        }
    }

    pub fn is_finite(self) -> bool {
        self.magnitude.is_finite() && self.angle.is_finite()
    }
}

impl From<Complex> for Phasor {
    fn from(c: Complex) -> Self {
        Phasor::from_complex(c)
    }
}

impl From<Phasor> for Complex {
    fn from(p: Phasor) -> Self {
        p.value()
    }
}

impl Add for Phasor {
    type Output = Phasor;
    fn add(self, rhs: Phasor) -> Phasor {
        Phasor::from_complex(self.value() + rhs.value())
    }
}

impl Sub for Phasor {
    type Output = Phasor;
    fn sub(self, rhs: Phasor) -> Phasor {
        Phasor::from_complex(self.value() - rhs.value())
    }
}

impl Neg for Phasor {
    type Output = Phasor;
    fn neg(self) -> Phasor {
        self.rotate(PI)
    }
}

impl Mul<Complex> for Phasor {
    type Output = Phasor;
    fn mul(self, rhs: Complex) -> Phasor {
        Phasor::from_complex(self.value() * rhs)
    }
}

impl fmt::Display for Phasor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}∠{:.6} rad", self.magnitude, self.angle)
    }
}

/// Per-kilometre constants of a homogeneous single-phase-equivalent line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineParams {
    /// Series impedance, Ω/km.
    pub z_per_km: Complex,
    /// Shunt admittance, S/km.
    pub y_per_km: Complex,
    pub length_km: f64,
    pub frequency_hz: f64,
}

impl LineParams {
    pub fn new(
        z_per_km: Complex,
        y_per_km: Complex,
        length_km: f64,
        frequency_hz: f64,
    ) -> Result<Self> {
        let line = LineParams {
            z_per_km,
            y_per_km,
            length_km,
            frequency_hz,
        };
        line.validate()?;
        Ok(line)
    }

    /// Lossless-shunt line whose admittance is `jωC` for a capacitance in F/km.
    pub fn from_capacitance(
        z_per_km: Complex,
        capacitance_f_per_km: f64,
        length_km: f64,
        frequency_hz: f64,
    ) -> Result<Self> {
        let omega = 2.0 * PI * frequency_hz;
        Self::new(
            z_per_km,
            Complex::new(0.0, omega * capacitance_f_per_km),
            length_km,
            frequency_hz,
        )
    }

    /// The 400 km, 60 Hz benchmark line used by the bundled fault scenarios.
    ///
    /// Series impedance is 0.249168 + j0.60241 Ω/km. The tabulated
    /// capacitance is complex (19.469 + j12.06678 nF/km); its magnitude is
    /// taken as the per-km capacitance, giving `ȳ = jω|C|`.
    pub fn benchmark_400km() -> Self {
        let capacitance = Complex::new(19.469e-9, 12.06678e-9).norm();
        Self::from_capacitance(Complex::new(0.249168, 0.60241), capacitance, 400.0, 60.0)
            .expect("benchmark line constants are valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_km.is_finite() && self.length_km > 0.0) {
            return Err(Error::invalid("length_km", "must be finite and > 0"));
        }
        if !(self.frequency_hz.is_finite() && self.frequency_hz > 0.0) {
            return Err(Error::invalid("frequency_hz", "must be finite and > 0"));
        }
        if !is_finite(self.z_per_km) || self.z_per_km.norm() == 0.0 {
            return Err(Error::invalid("z_per_km", "must be finite and nonzero"));
        }
        if !is_finite(self.y_per_km) || self.y_per_km.norm() == 0.0 {
            return Err(Error::invalid("y_per_km", "must be finite and nonzero"));
        }
        Ok(())
    }
}

pub(crate) fn is_finite(z: Complex) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Propagation constant `γ = √(z̄ȳ)` (1/km) and characteristic impedance
/// `Z_c = √(z̄/ȳ)` (Ω), both on the principal branch.
pub fn line_constants(line: &LineParams) -> Result<(Complex, Complex)> {
    line.validate()?;
    let gamma = principal_sqrt(line.z_per_km * line.y_per_km);
    let z_c = principal_sqrt(line.z_per_km / line.y_per_km);
    Ok((gamma, z_c))
}

/// Exact lumped equivalent of a distributed line section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiSection {
    /// Series arm `Z'`, Ω.
    pub series_impedance: Complex,
    /// Total shunt admittance `Y'`, S; each arm carries `Y'/2`.
    pub shunt_admittance: Complex,
}

impl PiSection {
    pub fn abcd(&self) -> Abcd {
        Abcd::from_pi(self)
    }
}

/// `sinh(x)/x`
fn sinh_ratio(x: Complex) -> Complex {
    if x.norm() < SERIES_THRESHOLD {
        Complex::new(1.0, 0.0) + x * x / 6.0
    } else {
        x.sinh() / x
    }
}

/// `tanh(x/2)/(x/2)`
fn tanh_half_ratio(x: Complex) -> Complex {
    if x.norm() < SERIES_THRESHOLD {
        Complex::new(1.0, 0.0) - x * x / 12.0
    } else {
        let h = x / 2.0;
        h.tanh() / h
    }
}

/// Equivalent-π of a `section_km` long piece of `line`.
pub fn equivalent_pi(line: &LineParams, section_km: f64) -> Result<PiSection> {
    if !(section_km.is_finite() && section_km > 0.0) {
        return Err(Error::invalid("section_km", "must be finite and > 0"));
    }
    // relative slack for sections computed as D·L
    if section_km > line.length_km * (1.0 + 1e-12) {
        return Err(Error::invalid(
            "section_km",
            format!("{section_km} exceeds line length {}", line.length_km),
        ));
    }
    let (gamma, _) = line_constants(line)?;
    let gl = gamma * section_km;
    Ok(PiSection {
        series_impedance: line.z_per_km * section_km * sinh_ratio(gl),
        shunt_admittance: line.y_per_km * section_km * tanh_half_ratio(gl),
    })
}

/// Transmission (chain) parameters relating sending to receiving quantities:
/// `V_S = A·V_R + B·I_R`, `I_S = C·V_R + D·I_R`, with `I_S` entering the
/// two-port and `I_R` leaving it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Abcd {
    pub a: Complex,
    pub b: Complex,
    pub c: Complex,
    pub d: Complex,
}

impl Abcd {
    pub fn identity() -> Self {
        let one = Complex::new(1.0, 0.0);
        let zero = Complex::new(0.0, 0.0);
        Abcd {
            a: one,
            b: zero,
            c: zero,
            d: one,
        }
    }

    pub fn from_pi(pi: &PiSection) -> Self {
        let z = pi.series_impedance;
        let y = pi.shunt_admittance;
        let a = Complex::new(1.0, 0.0) + z * y / 2.0;
        Abcd {
            a,
            b: z,
            c: y * (Complex::new(1.0, 0.0) + z * y / 4.0),
            d: a,
        }
    }

    /// `self` followed by `next` (sending side first).
    pub fn cascade(&self, next: &Abcd) -> Abcd {
        Abcd {
            a: self.a * next.a + self.b * next.c,
            b: self.a * next.b + self.b * next.d,
            c: self.c * next.a + self.d * next.c,
            d: self.c * next.b + self.d * next.d,
        }
    }

    pub fn determinant(&self) -> Complex {
        self.a * self.d - self.b * self.c
    }

    pub fn send_from_receive(&self, v_r: Complex, i_r: Complex) -> (Complex, Complex) {
        (self.a * v_r + self.b * i_r, self.c * v_r + self.d * i_r)
    }

    /// Inverse map; relies on `AD − BC = 1`.
    pub fn receive_from_send(&self, v_s: Complex, i_s: Complex) -> (Complex, Complex) {
        let det = self.determinant();
        (
            (self.d * v_s - self.b * i_s) / det,
            (self.a * i_s - self.c * v_s) / det,
        )
    }
}

/// Sending-end voltage and current of a π-section given its receiving end.
pub fn two_port_send_from_receive(
    pi: &PiSection,
    v_r: Phasor,
    i_r: Phasor,
) -> Result<(Phasor, Phasor)> {
    if !(v_r.is_finite() && i_r.is_finite())
        || !is_finite(pi.series_impedance)
        || !is_finite(pi.shunt_admittance)
    {
        return Err(Error::invalid("two_port", "non-finite input"));
    }
    let (v_s, i_s) = pi.abcd().send_from_receive(v_r.value(), i_r.value());
    Ok((Phasor::from_complex(v_s), Phasor::from_complex(i_s)))
}
