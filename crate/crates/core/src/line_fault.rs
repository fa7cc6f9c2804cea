//! Two-ended fault detection and location on a long line, and what a
//! time-synchronization attack does to it.
//!
//! Conventions: `I_S` flows into the line at the sending end, `I_R` flows out
//! of it at the receiving end, and the fault position `D` is the fraction of
//! the line length measured from the receiving end.

use crate::circuit::{Network, Node};
use crate::error::{Error, Result};
use crate::phasor::{equivalent_pi, is_finite, line_constants, Abcd, Complex, LineParams, Phasor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalPhasors {
    pub v_s: Phasor,
    pub i_s: Phasor,
    pub v_r: Phasor,
    pub i_r: Phasor,
}

impl TerminalPhasors {
    pub fn is_finite(&self) -> bool {
        self.v_s.is_finite() && self.i_s.is_finite() && self.v_r.is_finite() && self.i_r.is_finite()
    }

    /// Rotates the sending-end pair by `dtheta_s` and the receiving-end pair
    /// by `dtheta_r`.
    pub fn attacked(&self, dtheta_s: f64, dtheta_r: f64) -> Self {
        TerminalPhasors {
            v_s: self.v_s.rotate(dtheta_s),
            i_s: self.i_s.rotate(dtheta_s),
            v_r: self.v_r.rotate(dtheta_r),
            i_r: self.i_r.rotate(dtheta_r),
        }
    }
}

/// Fault kinds, reduced to a scaling of the fault impedance in the
/// single-phase equivalent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaultType {
    #[default]
    ThreePhaseGround,
    LineToGround,
    LineToLine,
}

impl FaultType {
    pub fn impedance_factor(self) -> f64 {
        match self {
            FaultType::ThreePhaseGround => 1.0,
            FaultType::LineToGround => 3.0,
            FaultType::LineToLine => 2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FaultType::ThreePhaseGround => "three_phase_ground",
            FaultType::LineToGround => "line_to_ground",
            FaultType::LineToLine => "line_to_line",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            FaultType::ThreePhaseGround,
            FaultType::LineToGround,
            FaultType::LineToLine,
        ]
        .into_iter()
        .find(|t| t.name() == s)
    }
}

/// A line fed by an ideal source at S and terminated at R by a load, which
/// may carry its own EMF behind the load impedance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultScenario {
    pub line: LineParams,
    /// Fault position as a fraction of length from the receiving end.
    pub d: f64,
    /// `None` for a healthy line.
    pub fault_impedance: Option<Complex>,
    pub fault_type: FaultType,
    pub source_emf: Phasor,
    pub load_impedance: Complex,
    pub receiving_emf: Phasor,
}

impl FaultScenario {
    pub fn healthy(line: LineParams, source_emf: Phasor, load_impedance: Complex) -> Self {
        FaultScenario {
            line,
            d: 0.5,
            fault_impedance: None,
            fault_type: FaultType::default(),
            source_emf,
            load_impedance,
            receiving_emf: Phasor::ZERO,
        }
    }

    pub fn with_fault(mut self, d: f64, impedance: Complex) -> Self {
        self.d = d;
        self.fault_impedance = Some(impedance);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.line.validate()?;
        if !(0.0..=1.0).contains(&self.d) {
            return Err(Error::invalid("fault.location", "must lie in [0, 1]"));
        }
        if let Some(z) = self.fault_impedance {
            if !is_finite(z) {
                return Err(Error::invalid("fault.impedance", "must be finite"));
            }
        }
        if !is_finite(self.load_impedance) || self.load_impedance.norm() == 0.0 {
            return Err(Error::invalid("load_impedance", "must be finite and nonzero"));
        }
        if !(self.source_emf.is_finite() && self.receiving_emf.is_finite()) {
            return Err(Error::invalid("source_emf", "must be finite"));
        }
        Ok(())
    }
}

/// Terminal phasors plus the fault-point voltage of a solved scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultSolution {
    pub terminals: TerminalPhasors,
    pub v_f: Complex,
}

/// Forward model: two equivalent-π sections (S–F and F–R) around a shunt
/// fault admittance, solved by nodal analysis.
pub fn simulate_fault(scn: &FaultScenario) -> Result<TerminalPhasors> {
    simulate_fault_detailed(scn).map(|s| s.terminals)
}

pub fn simulate_fault_detailed(scn: &FaultScenario) -> Result<FaultSolution> {
    scn.validate()?;
    let line = &scn.line;
    let v_s = scn.source_emf.value();
    let e_r = scn.receiving_emf.value();
    let fault_z = scn.fault_impedance.map(|z| z * scn.fault_type.impedance_factor());

    let sf_km = (1.0 - scn.d) * line.length_km;
    let fr_km = scn.d * line.length_km;
    // a zero-length piece collapses F onto a terminal bus
    let sf = if sf_km > 0.0 && fault_z.is_some() {
        Some(equivalent_pi(line, sf_km)?)
    } else {
        None
    };
    let fr = if fault_z.is_none() {
        Some(equivalent_pi(line, line.length_km)?)
    } else if fr_km > 0.0 {
        Some(equivalent_pi(line, fr_km)?)
    } else {
        None
    };

    let s = Node::Fixed(v_s);
    let rcv_source = Node::Fixed(e_r);
    let half = |y: Complex| y / 2.0;

    // unknowns: F (when distinct from both terminals) and R
    let (f, r, free) = match (sf.is_some(), fr.is_some(), fault_z) {
        (_, _, None) => (s, Node::Free(0), 1),
        (true, true, Some(z)) if z.norm() == 0.0 => (Node::Ground, Node::Free(0), 1),
        (true, true, Some(_)) => (Node::Free(0), Node::Free(1), 2),
        (true, false, Some(z)) if z.norm() == 0.0 => (Node::Ground, Node::Ground, 0),
        (true, false, Some(_)) => (Node::Free(0), Node::Free(0), 1),
        (false, _, Some(z)) if z.norm() == 0.0 => {
            return Err(Error::DegenerateScenario(
                "bolted fault on the sending bus shorts the ideal source".into(),
            ))
        }
        (false, _, Some(_)) => (s, Node::Free(0), 1),
    };

    let mut net = Network::new(free);
    if let Some(pi) = &sf {
        net.impedance(s, f, pi.series_impedance)
            .admittance(f, Node::Ground, half(pi.shunt_admittance));
    }
    if let Some(pi) = &fr {
        net.impedance(f, r, pi.series_impedance)
            .admittance(f, Node::Ground, half(pi.shunt_admittance))
            .admittance(r, Node::Ground, half(pi.shunt_admittance));
    }
    if let (Some(z), Node::Free(_)) = (fault_z, f) {
        net.impedance(f, Node::Ground, z);
    }
    net.impedance(r, rcv_source, scn.load_impedance);

    let sol = if free > 0 { net.solve()? } else { Vec::new() };
    let voltage = |n: Node| match n {
        Node::Ground => Complex::new(0.0, 0.0),
        Node::Fixed(v) => v,
        Node::Free(i) => sol[i],
    };
    let v_f = voltage(f);
    let v_r = voltage(r);

    // current entering the first section at S
    let first = sf.as_ref().or(fr.as_ref()).expect("at least one section");
    let far = if sf.is_some() { v_f } else { v_r };
    let i_s = (v_s - far) / first.series_impedance + v_s * half(first.shunt_admittance);
    let i_r = (v_r - e_r) / scn.load_impedance;

    let terminals = TerminalPhasors {
        v_s: Phasor::from_complex(v_s),
        i_s: Phasor::from_complex(i_s),
        v_r: Phasor::from_complex(v_r),
        i_r: Phasor::from_complex(i_r),
    };
    if !terminals.is_finite() {
        return Err(Error::DegenerateScenario("non-finite terminal quantity".into()));
    }
    Ok(FaultSolution { terminals, v_f })
}

/// Travelling-wave combinations of the terminal phasors:
/// `A = V_R − Z_c I_R`, `B = −(V_S − Z_c I_S)e^{γL}`,
/// `C = −(V_R + Z_c I_R)`, `D = (V_S + Z_c I_S)e^{−γL}`.
/// Then `N = (A + B)/2` and `M = (C + D)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveTerms {
    pub a: Complex,
    pub b: Complex,
    pub c: Complex,
    pub d: Complex,
}

impl WaveTerms {
    pub fn new(t: &TerminalPhasors, line: &LineParams) -> Result<Self> {
        let (gamma, z_c) = line_constants(line)?;
        let gl = gamma * line.length_km;
        let (v_s, i_s, v_r, i_r) = (t.v_s.value(), t.i_s.value(), t.v_r.value(), t.i_r.value());
        Ok(WaveTerms {
            a: v_r - z_c * i_r,
            b: -(v_s - z_c * i_s) * gl.exp(),
            c: -(v_r + z_c * i_r),
            d: (v_s + z_c * i_s) * (-gl).exp(),
        })
    }

    fn scale(&self) -> f64 {
        self.a.norm() + self.b.norm() + self.c.norm() + self.d.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultIndicators {
    pub m: Complex,
    pub n: Complex,
    /// Magnitude of the wave terms feeding `m` and `n`; the reference for
    /// deciding that an indicator is numerically zero.
    pub scale: f64,
}

/// Relative size below which an indicator counts as zero.
pub const INDICATOR_ZERO_TOL: f64 = 1e-9;

impl FaultIndicators {
    pub fn m_is_zero(&self) -> bool {
        self.m.norm() <= INDICATOR_ZERO_TOL * self.scale
    }

    pub fn n_is_zero(&self) -> bool {
        self.n.norm() <= INDICATOR_ZERO_TOL * self.scale
    }

    /// A fault (or an attack) is flagged when either indicator is nonzero.
    pub fn flags_fault(&self) -> bool {
        !(self.m_is_zero() && self.n_is_zero())
    }
}

/// `M = (V_S + Z_c I_S)/2·e^{−γL} − (V_R + Z_c I_R)/2` and
/// `N = (V_R − Z_c I_R)/2 − (V_S − Z_c I_S)/2·e^{γL}`.
pub fn fault_indicators(t: &TerminalPhasors, line: &LineParams) -> Result<FaultIndicators> {
    let (gamma, z_c) = line_constants(line)?;
    let gl = gamma * line.length_km;
    let (v_s, i_s, v_r, i_r) = (t.v_s.value(), t.i_s.value(), t.v_r.value(), t.i_r.value());
    let fwd_s = (v_s + z_c * i_s) / 2.0;
    let bwd_s = (v_s - z_c * i_s) / 2.0;
    let fwd_r = (v_r + z_c * i_r) / 2.0;
    let bwd_r = (v_r - z_c * i_r) / 2.0;
    let scale = 2.0 * ((fwd_s * (-gl).exp()).norm() + fwd_r.norm() + bwd_r.norm() + (bwd_s * gl.exp()).norm());
    Ok(FaultIndicators {
        m: fwd_s * (-gl).exp() - fwd_r,
        n: bwd_r - bwd_s * gl.exp(),
        scale,
    })
}

/// Indicators computed by the control centre from phasors whose sending and
/// receiving ends carry phase errors `dtheta_s` and `dtheta_r`.
pub fn attacked_indicators(
    t: &TerminalPhasors,
    line: &LineParams,
    dtheta_s: f64,
    dtheta_r: f64,
) -> Result<FaultIndicators> {
    let w = WaveTerms::new(t, line)?;
    let rot_s = Complex::from_polar(1.0, dtheta_s);
    let rot_r = Complex::from_polar(1.0, dtheta_r);
    Ok(FaultIndicators {
        m: (w.c * rot_r + w.d * rot_s) / 2.0,
        n: (w.a * rot_r + w.b * rot_s) / 2.0,
        scale: w.scale(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultLocation {
    /// Estimated `D`, the real part of `ln(N/M)/(2γL)`.
    pub d: f64,
    /// Imaginary part of the same quotient. Near zero for consistent data.
    pub residual: f64,
}

impl FaultLocation {
    pub fn distance_from_receiving_km(&self, line: &LineParams) -> f64 {
        self.d * line.length_km
    }
}

/// `D_e = ln(N/M)/(2γL)` on the principal logarithm branch.
pub fn locate_fault(ind: &FaultIndicators, line: &LineParams) -> Result<FaultLocation> {
    if ind.m_is_zero() || ind.m.norm() == 0.0 {
        return Err(Error::IndeterminateLocation);
    }
    if ind.n.norm() == 0.0 {
        return Err(Error::IndeterminateLocation);
    }
    let (gamma, _) = line_constants(line)?;
    let est = (ind.n / ind.m).ln() / (gamma * 2.0 * line.length_km);
    if !(est.re.is_finite() && est.im.is_finite()) {
        return Err(Error::IndeterminateLocation);
    }
    Ok(FaultLocation {
        d: est.re,
        residual: est.im,
    })
}

/// Location error `ΔD = D − D_TSA` caused by a sending/receiving phase
/// mismatch `dtheta = Δθ_R − Δθ_S`.
///
/// With `ε = e^{jΔθ}` the attacked quotient is `Ñ/M̃ = (Aε + B)/(Cε + D)`, so
/// `ΔD = [ln((A+B)/(C+D)) − ln((Aε+B)/(Cε+D))]/(2γL)`. Each quotient takes the
/// principal logarithm, exactly as the estimator would, so the result equals
/// the difference of the clean and attacked estimates.
pub fn location_error(t: &TerminalPhasors, line: &LineParams, dtheta: f64) -> Result<f64> {
    let w = WaveTerms::new(t, line)?;
    let (gamma, _) = line_constants(line)?;
    let eps = Complex::from_polar(1.0, dtheta);
    let tol = INDICATOR_ZERO_TOL * w.scale();
    let clean_num = w.a + w.b;
    let clean_den = w.c + w.d;
    let att_num = w.a * eps + w.b;
    let att_den = w.c * eps + w.d;
    if clean_den.norm() <= tol || clean_num.norm() <= tol {
        return Err(Error::SingularAttack("(C + D) or (A + B) vanishes"));
    }
    if att_num.norm() <= tol || att_den.norm() <= tol {
        return Err(Error::SingularAttack("(Aε + B) or (Cε + D) vanishes"));
    }
    let delta = ((clean_num / clean_den).ln() - (att_num / att_den).ln()) / (gamma * 2.0 * line.length_km);
    Ok(delta.re)
}

/// Full-line chain parameters, for checking healthy-line phasors.
pub fn line_abcd(line: &LineParams) -> Result<Abcd> {
    Ok(equivalent_pi(line, line.length_km)?.abcd())
}
