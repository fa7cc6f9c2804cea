//! Voltage-stability monitoring from two-ended synchronized phasors:
//! T-equivalent estimation, Thevenin reduction, impedance and power margins,
//! and the distortion introduced by phase errors at either end.

use crate::error::{Error, Result};
use crate::line_fault::TerminalPhasors;
use crate::phasor::{is_finite, Complex, Phasor};

/// Sentinel for an open shunt branch in [`thevenin_reduce`].
pub const OPEN_CIRCUIT: Complex = Complex::new(f64::INFINITY, 0.0);

const ZERO_TOL: f64 = 1e-14;

fn one() -> Complex {
    Complex::new(1.0, 0.0)
}

/// T-equivalent of a corridor: two series halves `Z_T/2` around a shunt
/// `Z_sh`, feeding load `Z_L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TEquivalent {
    pub z_t: Complex,
    pub z_sh: Complex,
    pub z_l: Complex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheveninState {
    pub e_th: Phasor,
    pub z_th: Complex,
    /// Generator EMF implied by the T-equivalent and `z_g`.
    pub e_g: Phasor,
    /// Generator impedance; supplied, never estimated.
    pub z_g: Complex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityMargins {
    /// `100(1 − k_crit)`, percent.
    pub margin_z: f64,
    /// Active-power headroom, watts.
    pub margin_p: f64,
    pub k_crit: f64,
    pub p_l: f64,
    pub p_lmax: f64,
}

/// `Z_T = 2(V_S − V_R)/(I_S + I_R)`, `Z_sh = −(V_S I_R + V_R I_S)/(I_R² − I_S²)`,
/// `Z_L = V_R/I_R`.
pub fn estimate_t_equivalent(t: &TerminalPhasors) -> Result<TEquivalent> {
    let (v_s, i_s, v_r, i_r) = (t.v_s.value(), t.i_s.value(), t.v_r.value(), t.i_r.value());
    t_equivalent_from(v_s, i_s, v_r, i_r)
}

fn t_equivalent_from(v_s: Complex, i_s: Complex, v_r: Complex, i_r: Complex) -> Result<TEquivalent> {
    let scale = i_s.norm().max(i_r.norm());
    if !(v_s.re.is_finite() && v_s.im.is_finite() && v_r.re.is_finite() && v_r.im.is_finite())
        || !scale.is_finite()
    {
        return Err(Error::DegenerateMeasurement("non-finite phasor"));
    }
    if i_r.norm() <= ZERO_TOL * scale || i_r.norm() == 0.0 {
        return Err(Error::DegenerateMeasurement("I_R = 0, load impedance undefined"));
    }
    let sum = i_s + i_r;
    if sum.norm() <= ZERO_TOL * scale {
        return Err(Error::DegenerateMeasurement("I_S + I_R = 0, Z_T undefined"));
    }
    let diff_sq = i_r * i_r - i_s * i_s;
    if diff_sq.norm() <= ZERO_TOL * scale * scale {
        return Err(Error::DegenerateMeasurement("I_R² = I_S², Z_sh undefined"));
    }
    Ok(TEquivalent {
        z_t: (v_s - v_r) * 2.0 / sum,
        z_sh: -(v_s * i_r + v_r * i_s) / diff_sq,
        z_l: v_r / i_r,
    })
}

/// `E_g = V_S + I_S·Z_g`
pub fn generator_emf(v_s: Phasor, i_s: Phasor, z_g: Complex) -> Phasor {
    Phasor::from_complex(v_s.value() + i_s.value() * z_g)
}

/// Impedance of two branches in parallel; either may be [`OPEN_CIRCUIT`].
fn parallel(a: Complex, b: Complex) -> Result<Complex> {
    if !is_finite(a) {
        return Ok(b);
    }
    if !is_finite(b) {
        return Ok(a);
    }
    if a.norm() == 0.0 || b.norm() == 0.0 {
        return Ok(Complex::new(0.0, 0.0));
    }
    let y = one() / a + one() / b;
    if y.norm() <= ZERO_TOL * (one() / a).norm() {
        return Err(Error::DegenerateScenario("parallel branches resonate (Y = 0)".into()));
    }
    Ok(one() / y)
}

/// Thevenin source seen from the load bus:
/// `Z_th = Z_T/2 + Z_sh ∥ (Z_T/2 + Z_g)`, `E_th = V_R(Z_th + Z_L)/Z_L`.
pub fn thevenin_reduce(teq: &TEquivalent, z_g: Complex, v_r: Phasor) -> Result<TheveninState> {
    if !is_finite(teq.z_l) || teq.z_l.norm() == 0.0 {
        return Err(Error::DegenerateMeasurement("Z_L = 0"));
    }
    if !is_finite(teq.z_t) || !is_finite(z_g) {
        return Err(Error::DegenerateMeasurement("non-finite Z_T or Z_g"));
    }
    let upstream = teq.z_t / 2.0 + z_g;
    let z_th = teq.z_t / 2.0 + parallel(teq.z_sh, upstream)?;
    let e_th = v_r.value() * (z_th + teq.z_l) / teq.z_l;
    // open-circuit divider: E_th = E_g · Z_sh / (Z_sh + Z_T/2 + Z_g)
    let e_g = if is_finite(teq.z_sh) {
        if teq.z_sh.norm() == 0.0 {
            return Err(Error::DegenerateScenario("Z_sh = 0 hides the generator".into()));
        }
        e_th * (teq.z_sh + upstream) / teq.z_sh
    } else {
        e_th
    };
    Ok(TheveninState {
        e_th: Phasor::from_complex(e_th),
        z_th,
        e_g: Phasor::from_complex(e_g),
        z_g,
    })
}

/// Active power into `k·Z_L0` fed from `E_th` behind `Z_th`.
pub fn load_power(th: &TheveninState, z_l0: Complex, k: f64) -> f64 {
    let z_load = z_l0 * k;
    let i = th.e_th.magnitude() / (th.z_th + z_load).norm();
    z_load.re * i * i
}

/// Margins for the present load `z_l`, scaled from the reference load `z_l0`.
///
/// `k = |z_l|/|z_l0|` locates the present operating point on the power curve;
/// maximum transfer occurs where the load magnitude equals `|Z_th|`, i.e. at
/// `k = k_crit·k` (which is `k_crit` itself when `z_l = z_l0`).
pub fn stability_margins(th: &TheveninState, z_l: Complex, z_l0: Complex) -> Result<StabilityMargins> {
    if !is_finite(z_l) || z_l.norm() == 0.0 {
        return Err(Error::DegenerateMeasurement("Z_L = 0"));
    }
    if !is_finite(z_l0) || z_l0.norm() == 0.0 {
        return Err(Error::DegenerateMeasurement("Z_L0 = 0"));
    }
    let k_crit = th.z_th.norm() / z_l.norm();
    let k_now = z_l.norm() / z_l0.norm();
    let p_l = load_power(th, z_l0, k_now);
    let p_lmax = load_power(th, z_l0, k_crit * k_now);
    let margin_p = if z_l.norm() > th.z_th.norm() {
        (p_lmax - p_l).max(0.0)
    } else {
        0.0
    };
    Ok(StabilityMargins {
        margin_z: 100.0 * (1.0 - k_crit),
        margin_p,
        k_crit,
        p_l,
        p_lmax,
    })
}

/// T-equivalent computed from phasors whose ends carry phase errors, written
/// out in closed form:
/// `Z'_T = 2(V_S e^{jθs} − V_R e^{jθr})/(I_S e^{jθs} + I_R e^{jθr})`,
/// `Z'_sh = −(V_S I_R + V_R I_S)e^{j(θs+θr)}/(I_R² e^{j2θr} − I_S² e^{j2θs})`,
/// `Z'_L = Z_L`.
pub fn attacked_t_equivalent(t: &TerminalPhasors, dtheta_s: f64, dtheta_r: f64) -> Result<TEquivalent> {
    let clean = estimate_t_equivalent(t);
    let (v_s, i_s, v_r, i_r) = (t.v_s.value(), t.i_s.value(), t.v_r.value(), t.i_r.value());
    let es = Complex::from_polar(1.0, dtheta_s);
    let er = Complex::from_polar(1.0, dtheta_r);
    let scale = i_s.norm().max(i_r.norm());
    if i_r.norm() == 0.0 || i_r.norm() <= ZERO_TOL * scale {
        return Err(Error::DegenerateMeasurement("I_R = 0, load impedance undefined"));
    }
    let sum = i_s * es + i_r * er;
    if sum.norm() <= ZERO_TOL * scale {
        return Err(Error::DegenerateMeasurement("I_S + I_R = 0, Z_T undefined"));
    }
    let diff_sq = i_r * i_r * er * er - i_s * i_s * es * es;
    if diff_sq.norm() <= ZERO_TOL * scale * scale {
        return Err(Error::DegenerateMeasurement("I_R² = I_S², Z_sh undefined"));
    }
    let z_l = match clean {
        Ok(teq) => teq.z_l,
        Err(_) => v_r / i_r,
    };
    Ok(TEquivalent {
        z_t: (v_s * es - v_r * er) * 2.0 / sum,
        z_sh: -(v_s * i_r + v_r * i_s) * es * er / diff_sq,
        z_l,
    })
}

/// Lumped T model of one corridor line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorridorLine {
    /// Total series impedance (both halves).
    pub z_t: Complex,
    pub z_sh: Complex,
}

/// Generator behind `z_g` feeding a load through identical parallel lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorridorModel {
    pub e_g: Phasor,
    pub z_g: Complex,
    pub line: CorridorLine,
    pub n_lines: usize,
    pub z_load: Complex,
}

impl CorridorModel {
    /// Equivalent T of `in_service` identical lines in parallel. Their
    /// midpoints sit at one potential, so the result is exactly `1/n` of a
    /// single line.
    pub fn t_equivalent(&self, in_service: usize) -> TEquivalent {
        let n = in_service as f64;
        TEquivalent {
            z_t: self.line.z_t / n,
            z_sh: self.line.z_sh / n,
            z_l: self.z_load,
        }
    }

    /// Steady-state terminal phasors with `in_service` lines connected.
    pub fn solve(&self, in_service: usize) -> Result<TerminalPhasors> {
        if in_service == 0 {
            return Err(Error::DegenerateScenario("no line in service".into()));
        }
        let teq = self.t_equivalent(in_service);
        let half = teq.z_t / 2.0;
        let right = half + self.z_load;
        let middle = parallel(teq.z_sh, right)?;
        let total = self.z_g + half + middle;
        if total.norm() == 0.0 {
            return Err(Error::DegenerateScenario("source is short-circuited".into()));
        }
        let i_s = self.e_g.value() / total;
        let v_s = self.e_g.value() - self.z_g * i_s;
        let v_m = i_s * middle;
        let i_r = v_m / right;
        let v_r = i_r * self.z_load;
        Ok(TerminalPhasors {
            v_s: Phasor::from_complex(v_s),
            i_s: Phasor::from_complex(i_s),
            v_r: Phasor::from_complex(v_r),
            i_r: Phasor::from_complex(i_r),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_lines == 0 {
            return Err(Error::invalid("corridor.n_lines", "must be >= 1"));
        }
        for (name, z) in [
            ("corridor.line_z_t", self.line.z_t),
            ("corridor.line_z_sh", self.line.z_sh),
            ("corridor.z_load", self.z_load),
        ] {
            if !is_finite(z) || z.norm() == 0.0 {
                return Err(Error::invalid(name, "must be finite and nonzero"));
            }
        }
        if !is_finite(self.z_g) || !self.e_g.is_finite() {
            return Err(Error::invalid("corridor.z_g", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopologyEvent {
    Trip(usize),
    Restore(usize),
    /// Multiplies the base load impedance by a positive factor.
    LoadScale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorridorFrame {
    pub t: f64,
    pub lines_in_service: usize,
    pub terminals: TerminalPhasors,
    /// T-equivalent of the connected lines.
    pub truth: TEquivalent,
}

/// Piecewise-constant phasor stream of a corridor undergoing line trips.
/// Events at time `t` affect every sample taken at or after `t`.
#[derive(Debug, Clone)]
pub struct CorridorStream {
    model: CorridorModel,
    events: Vec<(f64, TopologyEvent)>,
    samples: std::vec::IntoIter<f64>,
    next_event: usize,
    in_service: Vec<bool>,
    load_scale: f64,
}

impl Iterator for CorridorStream {
    type Item = Result<CorridorFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        let t = self.samples.next()?;
        while let Some(&(at, ev)) = self.events.get(self.next_event) {
            if at > t {
                break;
            }
            match ev {
                TopologyEvent::Trip(i) => self.in_service[i] = false,
                TopologyEvent::Restore(i) => self.in_service[i] = true,
                TopologyEvent::LoadScale(k) => self.load_scale = k,
            }
            self.next_event += 1;
        }
        let n = self.in_service.iter().filter(|&&on| on).count();
        if n == 0 {
            return Some(Err(Error::Island { time: t }));
        }
        let model = CorridorModel {
            z_load: self.model.z_load * self.load_scale,
            ..self.model
        };
        Some(model.solve(n).map(|terminals| CorridorFrame {
            t,
            lines_in_service: n,
            terminals,
            truth: model.t_equivalent(n),
        }))
    }
}

/// Replays `timeline` over the corridor, sampling at `sample_times`.
pub fn simulate_corridor(
    model: &CorridorModel,
    timeline: &[(f64, TopologyEvent)],
    sample_times: &[f64],
) -> Result<CorridorStream> {
    model.validate()?;
    let mut events = timeline.to_vec();
    for &(t, ev) in &events {
        if !t.is_finite() {
            return Err(Error::invalid("timeline.t", "must be finite"));
        }
        match ev {
            TopologyEvent::Trip(i) | TopologyEvent::Restore(i) if i >= model.n_lines => {
                return Err(Error::invalid(
                    "timeline.line",
                    format!("line {i} does not exist (corridor has {})", model.n_lines),
                ));
            }
            TopologyEvent::LoadScale(k) if !(k.is_finite() && k > 0.0) => {
                return Err(Error::invalid("timeline.load_scale", "must be finite and > 0"));
            }
            _ => {}
        }
    }
    // stable: simultaneous events apply in timeline order
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut samples = sample_times.to_vec();
    samples.sort_by(|a, b| a.total_cmp(b));
    Ok(CorridorStream {
        model: *model,
        events,
        samples: samples.into_iter(),
        next_event: 0,
        in_service: vec![true; model.n_lines],
        load_scale: 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{Network, Node};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    fn rel(a: Complex, b: Complex) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    /// Forward T circuit by nodal analysis: E_g — Z_g — S — Z_T/2 — M — Z_T/2 — R — Z_L,
    /// with Z_sh from M to ground.
    fn forward_t(e_g: Complex, z_g: Complex, teq: &TEquivalent) -> TerminalPhasors {
        let mut net = Network::new(3);
        let (s, m, r) = (Node::Free(0), Node::Free(1), Node::Free(2));
        net.impedance(Node::Fixed(e_g), s, z_g)
            .impedance(s, m, teq.z_t / 2.0)
            .impedance(m, r, teq.z_t / 2.0)
            .impedance(m, Node::Ground, teq.z_sh)
            .impedance(r, Node::Ground, teq.z_l);
        let v = net.solve().unwrap();
        TerminalPhasors {
            v_s: Phasor::from_complex(v[0]),
            i_s: Phasor::from_complex((e_g - v[0]) / z_g),
            v_r: Phasor::from_complex(v[2]),
            i_r: Phasor::from_complex(v[2] / teq.z_l),
        }
    }

    /// Thevenin at the load bus by nodal analysis: open-circuit voltage with
    /// the load removed, over short-circuit current with the bus grounded.
    fn nodal_thevenin(e_g: Complex, z_g: Complex, teq: &TEquivalent) -> (Complex, Complex) {
        let (s, m) = (Node::Free(0), Node::Free(1));
        let mut open = Network::new(3);
        open.impedance(Node::Fixed(e_g), s, z_g)
            .impedance(s, m, teq.z_t / 2.0)
            .impedance(m, Node::Free(2), teq.z_t / 2.0)
            .impedance(m, Node::Ground, teq.z_sh);
        let e_oc = open.solve().unwrap()[2];
        let mut short = Network::new(2);
        short
            .impedance(Node::Fixed(e_g), s, z_g)
            .impedance(s, m, teq.z_t / 2.0)
            .impedance(m, Node::Ground, teq.z_t / 2.0)
            .impedance(m, Node::Ground, teq.z_sh);
        let i_sc = short.solve().unwrap()[1] / (teq.z_t / 2.0);
        (e_oc, e_oc / i_sc)
    }

    fn oracle_teq() -> TEquivalent {
        TEquivalent {
            z_t: c(12.0, 95.0),
            z_sh: c(-2.0, -1800.0),
            z_l: c(160.0, 70.0),
        }
    }

    #[test]
    fn symmetric_measurements_hit_shunt_error() {
        let v = Phasor::from_polar(20000.0, 0.1);
        let i = Phasor::from_polar(50.0, -0.2);
        let t = TerminalPhasors { v_s: v, i_s: i, v_r: v, i_r: i };
        let err = estimate_t_equivalent(&t).unwrap_err();
        assert_eq!(err, Error::DegenerateMeasurement("I_R² = I_S², Z_sh undefined"));
        // Z_T itself is zero here
        assert_eq!((v.value() - v.value()) * 2.0 / (i.value() + i.value()), c(0.0, 0.0));
    }

    #[test]
    fn zero_receiving_current_is_degenerate() {
        let t = TerminalPhasors {
            v_s: Phasor::from_polar(1.0, 0.0),
            i_s: Phasor::from_polar(1.0, 0.0),
            v_r: Phasor::from_polar(1.0, 0.0),
            i_r: Phasor::ZERO,
        };
        assert_eq!(
            estimate_t_equivalent(&t).unwrap_err(),
            Error::DegenerateMeasurement("I_R = 0, load impedance undefined")
        );
    }

    #[test]
    fn estimation_recovers_oracle_circuit() {
        let teq = oracle_teq();
        let t = forward_t(c(24000.0, 3000.0), c(1.0, 12.0), &teq);
        let est = estimate_t_equivalent(&t).unwrap();
        assert!(rel(est.z_t, teq.z_t) < 1e-9);
        assert!(rel(est.z_sh, teq.z_sh) < 1e-9);
        assert!(rel(est.z_l, teq.z_l) < 1e-9);
    }

    #[test]
    fn generator_emf_cases() {
        let v = Phasor::from_polar(25000.0, 0.0);
        assert_eq!(generator_emf(v, Phasor::from_polar(3.0, 1.0), c(0.0, 0.0)).value(), v.value());
        assert_eq!(generator_emf(v, Phasor::ZERO, c(3.0, 4.0)).value(), v.value());
        let i = Phasor::from_polar(100.0, -0.1);
        let z_g = c(1.0, 10.0);
        let rect = generator_emf(v, i, z_g).value();
        // polar route: |I||Z_g|∠(θ_I + θ_Zg) added to V_S
        let drop = Complex::from_polar(100.0 * 101f64.sqrt(), -0.1 + 10f64.atan2(1.0));
        let polar = Complex::from_polar(25000.0, 0.0) + drop;
        assert!(rel(rect, polar) < 1e-13);
    }

    #[test]
    fn open_shunt_reduces_to_series_path() {
        let teq = TEquivalent {
            z_t: c(10.0, 80.0),
            z_sh: OPEN_CIRCUIT,
            z_l: c(100.0, 20.0),
        };
        let z_g = c(1.0, 5.0);
        let th = thevenin_reduce(&teq, z_g, Phasor::from_polar(1.0, 0.0)).unwrap();
        assert!(rel(th.z_th, teq.z_t + z_g) < 1e-15);
    }

    #[test]
    fn zero_series_and_generator_gives_zero_thevenin() {
        let teq = TEquivalent {
            z_t: c(0.0, 0.0),
            z_sh: c(0.0, -900.0),
            z_l: c(100.0, 0.0),
        };
        let th = thevenin_reduce(&teq, c(0.0, 0.0), Phasor::from_polar(1.0, 0.0)).unwrap();
        assert_eq!(th.z_th, c(0.0, 0.0));
    }

    #[test]
    fn resonant_parallel_is_degenerate() {
        let teq = TEquivalent {
            z_t: c(0.0, 200.0),
            z_sh: c(0.0, -100.0),
            z_l: c(100.0, 0.0),
        };
        let err = thevenin_reduce(&teq, c(0.0, 0.0), Phasor::from_polar(1.0, 0.0)).unwrap_err();
        assert_eq!(err.code(), "degenerate_scenario");
    }

    #[test]
    fn thevenin_matches_nodal_reduction() {
        let teq = oracle_teq();
        let (e_g, z_g) = (c(24000.0, 3000.0), c(1.0, 12.0));
        let t = forward_t(e_g, z_g, &teq);
        let est = estimate_t_equivalent(&t).unwrap();
        let th = thevenin_reduce(&est, z_g, t.v_r).unwrap();
        let (e_oc, z_sc) = nodal_thevenin(e_g, z_g, &teq);
        assert!(rel(th.e_th.value(), e_oc) < 1e-9, "{} vs {e_oc}", th.e_th);
        assert!(rel(th.z_th, z_sc) < 1e-9);
        // E_th = V_R + Z_th I_R
        let alt = t.v_r.value() + th.z_th * t.i_r.value();
        assert!(rel(th.e_th.value(), alt) < 1e-12);
        // implied generator EMF agrees with the measured one
        assert!(rel(th.e_g.value(), e_g) < 1e-9);
        assert!(rel(generator_emf(t.v_s, t.i_s, z_g).value(), e_g) < 1e-12);
    }

    fn state(z_th: Complex) -> TheveninState {
        TheveninState {
            e_th: Phasor::from_polar(24000.0, 0.2),
            z_th,
            e_g: Phasor::from_polar(25000.0, 0.3),
            z_g: c(0.0, 0.0),
        }
    }

    #[test]
    fn margin_z_examples() {
        let z_l = c(60.0, 80.0);
        let m = stability_margins(&state(c(0.0, 100.0)), z_l, z_l).unwrap();
        assert_eq!(m.k_crit, 1.0);
        assert_eq!(m.margin_z, 0.0);
        assert_eq!(m.margin_p, 0.0);
        let m = stability_margins(&state(c(30.0, 40.0)), z_l, z_l).unwrap();
        assert_eq!(m.k_crit, 0.5);
        assert_eq!(m.margin_z, 50.0);
        assert!(m.margin_p > 0.0);
    }

    #[test]
    fn zero_load_rejected() {
        assert!(stability_margins(&state(c(1.0, 1.0)), c(0.0, 0.0), c(1.0, 0.0)).is_err());
    }

    #[test]
    fn resistive_match_peaks_at_unity_scale() {
        let z = c(50.0, 0.0);
        let th = state(z);
        let m = stability_margins(&th, z, z).unwrap();
        let best = (1..=40000)
            .map(|i| i as f64 * 1e-4)
            .map(|k| (k, load_power(&th, z, k)))
            .fold((0.0, f64::MIN), |acc, p| if p.1 > acc.1 { p } else { acc });
        assert!((best.0 - m.k_crit).abs() <= 1e-4);
        assert!((m.p_lmax - best.1).abs() <= 1e-9 * best.1);
    }

    #[test]
    fn corridor_trip_ratios() {
        let model = CorridorModel {
            e_g: Phasor::from_polar(25000.0, 0.0),
            z_g: c(0.5, 8.0),
            line: CorridorLine {
                z_t: c(9.0, 120.0),
                z_sh: c(0.0, -2500.0),
            },
            n_lines: 3,
            z_load: c(90.0, 30.0),
        };
        let timeline = [(4.0, TopologyEvent::Trip(0)), (6.0, TopologyEvent::Trip(1))];
        let frames: Vec<_> = simulate_corridor(&model, &timeline, &[1.0, 5.0, 7.0])
            .unwrap()
            .map(|f| f.unwrap())
            .collect();
        let z: Vec<f64> = frames
            .iter()
            .map(|f| estimate_t_equivalent(&f.terminals).unwrap().z_t.norm())
            .collect();
        assert!((z[1] / z[0] - 1.5).abs() < 1e-9);
        assert!((z[2] / z[0] - 3.0).abs() < 1e-9);
        for f in &frames {
            // nodal-analysis oracle per segment
            let oracle = forward_t(model.e_g.value(), model.z_g, &f.truth);
            assert!(rel(f.terminals.v_r.value(), oracle.v_r.value()) < 1e-9);
            assert!(rel(f.terminals.i_s.value(), oracle.i_s.value()) < 1e-9);
        }
    }

    #[test]
    fn corridor_island_and_bad_index() {
        let model = CorridorModel {
            e_g: Phasor::from_polar(1.0, 0.0),
            z_g: c(0.0, 1.0),
            line: CorridorLine {
                z_t: c(1.0, 10.0),
                z_sh: c(0.0, -500.0),
            },
            n_lines: 1,
            z_load: c(50.0, 0.0),
        };
        let mut s = simulate_corridor(&model, &[(1.0, TopologyEvent::Trip(0))], &[0.0, 2.0]).unwrap();
        assert!(s.next().unwrap().is_ok());
        assert_eq!(s.next().unwrap().unwrap_err(), Error::Island { time: 2.0 });
        assert!(simulate_corridor(&model, &[(1.0, TopologyEvent::Trip(3))], &[0.0]).is_err());
        assert!(simulate_corridor(&model, &[(1.0, TopologyEvent::LoadScale(0.0))], &[0.0]).is_err());
    }

    #[test]
    fn load_scaling_moves_the_estimated_load() {
        let model = CorridorModel {
            e_g: Phasor::from_polar(25000.0, 0.0),
            z_g: c(0.5, 8.0),
            line: CorridorLine {
                z_t: c(9.0, 120.0),
                z_sh: c(0.0, -2500.0),
            },
            n_lines: 2,
            z_load: c(90.0, 30.0),
        };
        let frames: Vec<_> = simulate_corridor(&model, &[(1.0, TopologyEvent::LoadScale(0.5))], &[0.0, 1.0])
            .unwrap()
            .map(|f| f.unwrap())
            .collect();
        let z0 = estimate_t_equivalent(&frames[0].terminals).unwrap().z_l;
        let z1 = estimate_t_equivalent(&frames[1].terminals).unwrap().z_l;
        assert!(rel(z1, z0 * 0.5) < 1e-9);
        assert_eq!(frames[1].truth.z_l, model.z_load * 0.5);
    }

    #[test]
    fn differential_attack_distorts_series_impedance() {
        let teq = oracle_teq();
        let t = forward_t(c(24000.0, 3000.0), c(1.0, 12.0), &teq);
        let att = attacked_t_equivalent(&t, 0.3, -0.3).unwrap();
        assert!(rel(att.z_t, teq.z_t) > 1e-3);
        assert_eq!(att.z_l, estimate_t_equivalent(&t).unwrap().z_l);
    }

    proptest! {
        #[test]
        fn closed_form_matches_rotated_estimate(ths in -PI..PI, thr in -PI..PI) {
            let teq = oracle_teq();
            let t = forward_t(c(24000.0, 3000.0), c(1.0, 12.0), &teq);
            let a = attacked_t_equivalent(&t, ths, thr).unwrap();
            let b = estimate_t_equivalent(&t.attacked(ths, thr)).unwrap();
            prop_assert!(rel(a.z_t, b.z_t) < 1e-9);
            prop_assert!(rel(a.z_sh, b.z_sh) < 1e-9);
            prop_assert!(rel(a.z_l, b.z_l) < 1e-12);
        }

        #[test]
        fn load_impedance_is_attack_invariant(ths in -PI..PI, thr in -PI..PI) {
            let teq = oracle_teq();
            let t = forward_t(c(24000.0, 3000.0), c(1.0, 12.0), &teq);
            let clean = estimate_t_equivalent(&t).unwrap();
            prop_assert_eq!(attacked_t_equivalent(&t, ths, thr).unwrap().z_l, clean.z_l);
        }

        #[test]
        fn common_mode_attack_is_invisible(phi in -PI..PI) {
            let teq = oracle_teq();
            let t = forward_t(c(24000.0, 3000.0), c(1.0, 12.0), &teq);
            let clean = estimate_t_equivalent(&t).unwrap();
            let att = attacked_t_equivalent(&t, phi, phi).unwrap();
            prop_assert!(rel(att.z_t, clean.z_t) < 1e-12);
            prop_assert!(rel(att.z_sh, clean.z_sh) < 1e-12);
        }

        #[test]
        fn margin_p_zero_when_overloaded(scale in 0.05f64..1.0) {
            let z_th = c(30.0, 40.0);
            let z_l = c(30.0, 40.0) * scale;
            let m = stability_margins(&state(z_th), z_l, z_l).unwrap();
            prop_assert_eq!(m.margin_p, 0.0);
            prop_assert!(m.margin_z <= 100.0);
        }
    }

    #[test]
    fn margin_p_continuous_at_boundary() {
        let z_th = c(30.0, 40.0);
        let th = state(z_th);
        let z_l0 = c(60.0, 80.0);
        let below = stability_margins(&th, z_th * (1.0 + 1e-7), z_l0).unwrap();
        let above = stability_margins(&th, z_th * (1.0 - 1e-7), z_l0).unwrap();
        assert!((below.margin_p - above.margin_p).abs() < 1e-6 * below.p_lmax);
    }
}
