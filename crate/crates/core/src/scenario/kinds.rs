//! Parameter blocks of each scenario kind and the evaluation of one grid
//! point into output rows.

use toml::Table;

use crate::attack::AttackSpec;
use crate::error::Error;
use crate::event_location::{
    locate_closed_form, solve_toa, toa_sensitivity, Anchor, Event, ToaScenario,
};
use crate::gps::{run_spoof_campaign, CorrelationPeak, SpoofCampaign};
use crate::line_fault::{attacked_indicators, locate_fault, simulate_fault, FaultScenario, FaultType};
use crate::phasor::{Complex, LineParams, Phasor};
use crate::stability::{
    estimate_t_equivalent, simulate_corridor, stability_margins, thevenin_reduce, CorridorLine,
    CorridorModel, TopologyEvent,
};

use super::section::{deg, to_deg, CfgResult, ConfigError, Section};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    LineFault,
    VoltageStability,
    EventLocation,
    GpsSpoof,
}

impl Kind {
    pub const ALL: [Kind; 4] = [
        Kind::LineFault,
        Kind::VoltageStability,
        Kind::EventLocation,
        Kind::GpsSpoof,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::LineFault => "line_fault",
            Kind::VoltageStability => "voltage_stability",
            Kind::EventLocation => "event_location",
            Kind::GpsSpoof => "gps_spoof",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Kind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn names() -> Vec<&'static str> {
        Kind::ALL.iter().map(|k| k.name()).collect()
    }

    pub fn description(self) -> &'static str {
        match self {
            Kind::LineFault => "two-ended fault indicators and location under end-phase errors",
            Kind::VoltageStability => "T-equivalent, Thevenin and margin tracking on a line corridor",
            Kind::EventLocation => "TOA event location and its sensitivity to one anchor's timing error",
            Kind::GpsSpoof => "correlation-peak capture and drag of a receiver's code phase",
        }
    }

    /// Output columns, in order, excluding sweep axes and `error_code`.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Kind::LineFault => &["dtheta_s", "dtheta_r", "abs_m", "abs_n", "d_est", "d_error_km"],
            Kind::VoltageStability => &[
                "t", "z_t_abs", "z_sh_abs", "z_th_abs", "e_th_abs", "e_th_angle", "margin_z", "margin_p",
            ],
            Kind::EventLocation => &["dt_seconds", "x_est", "y_est", "error_km", "dx_dt1", "dy_dt1"],
            Kind::GpsSpoof => &["step", "tracked_phase_chips", "captured", "achieved_dt"],
        }
    }
}

pub(crate) struct Outcome {
    pub cells: Vec<Option<f64>>,
    pub error_code: Option<String>,
}

impl Outcome {
    pub(crate) fn failed(width: usize, code: &str) -> Self {
        Outcome {
            cells: vec![None; width],
            error_code: Some(code.to_string()),
        }
    }

    fn partial(cells: Vec<Option<f64>>, err: Option<&Error>) -> Self {
        Outcome {
            cells,
            error_code: err.map(|e| e.code().to_string()),
        }
    }
}

pub(crate) enum Model {
    LineFault(LineFaultCase),
    VoltageStability(StabilityCase),
    EventLocation(ToaCase),
    GpsSpoof(SpoofCampaign),
}

pub(crate) fn build(kind: Kind, params: &Table) -> CfgResult<Model> {
    let root = Section::new("", params);
    let model = match kind {
        Kind::LineFault => Model::LineFault(LineFaultCase::build(&root)?),
        Kind::VoltageStability => Model::VoltageStability(StabilityCase::build(&root)?),
        Kind::EventLocation => Model::EventLocation(ToaCase::build(&root)?),
        Kind::GpsSpoof => Model::GpsSpoof(build_spoof(&root)?),
    };
    root.finish()?;
    Ok(model)
}

impl Model {
    pub(crate) fn evaluate(&self) -> Vec<Outcome> {
        match self {
            Model::LineFault(c) => vec![c.evaluate()],
            Model::VoltageStability(c) => c.evaluate(),
            Model::EventLocation(c) => vec![c.evaluate()],
            Model::GpsSpoof(c) => evaluate_spoof(c),
        }
    }
}

/// Maps a library validation error onto a scenario field under `prefix`.
fn lib(prefix: &'static str) -> impl Fn(Error) -> ConfigError {
    move |e| match e {
        Error::InvalidParameter { name, reason } => {
            ConfigError::invalid(&format!("{prefix}.{name}"), reason)
        }
        other => ConfigError::invalid(prefix, other.to_string()),
    }
}

/// Phase errors at the two ends; a timing error wins over a phase error.
fn end_phase_errors(
    attack: Option<&Section>,
    frequency_hz: Option<f64>,
    frequency_field: &str,
) -> CfgResult<(f64, f64)> {
    let Some(sec) = attack else { return Ok((0.0, 0.0)) };
    let mut out = [0.0; 2];
    for (slot, end) in out.iter_mut().zip(["s", "r"]) {
        let dt = sec.f64(&format!("dt_{end}_seconds"))?;
        let dtheta = sec.f64(&format!("dtheta_{end}_deg"))?.map(deg);
        let f = match (dt, frequency_hz) {
            (Some(_), None) => {
                return Err(ConfigError::missing(
                    frequency_field,
                    "a timing attack needs the nominal frequency",
                ))
            }
            (_, f) => f.unwrap_or(1.0),
        };
        *slot = AttackSpec::from_parts(end, dt, dtheta)
            .dtheta(f)
            .map_err(|e| ConfigError::invalid(&sec.key_path(&format!("dt_{end}_seconds")), e.to_string()))?;
    }
    Ok((out[0], out[1]))
}

pub(crate) struct LineFaultCase {
    scenario: FaultScenario,
    faulted: bool,
    dtheta_s: f64,
    dtheta_r: f64,
}

fn parse_line(sec: &Section) -> CfgResult<LineParams> {
    let base = match sec.string("preset")?.as_deref() {
        None => None,
        Some("benchmark_400km") => Some(LineParams::benchmark_400km()),
        Some(other) => {
            return Err(ConfigError::invalid(
                &sec.key_path("preset"),
                format!("unknown preset `{other}`; available: benchmark_400km"),
            ))
        }
    };
    let need = |key: &str| ConfigError::missing(&sec.key_path(key), "required without a preset");
    let z = match sec.complex("z_per_km")? {
        Some(z) => z,
        None => base.map(|b| b.z_per_km).ok_or_else(|| need("z_per_km"))?,
    };
    let length = match sec.f64("length_km")? {
        Some(l) => l,
        None => base.map(|b| b.length_km).ok_or_else(|| need("length_km"))?,
    };
    let freq = match sec.f64("frequency_hz")? {
        Some(f) => f,
        None => base.map(|b| b.frequency_hz).ok_or_else(|| need("frequency_hz"))?,
    };
    let y = match (sec.complex("y_per_km")?, sec.f64("capacitance_nf_per_km")?) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::invalid(
                &sec.key_path("capacitance_nf_per_km"),
                "give either y_per_km or capacitance_nf_per_km",
            ))
        }
        (Some(y), None) => y,
        (None, Some(c)) => Complex::new(0.0, 2.0 * std::f64::consts::PI * freq * c * 1e-9),
        // shunt admittance of a preset scales with frequency (jωC)
        (None, None) => base
            .map(|b| b.y_per_km * (freq / b.frequency_hz))
            .ok_or_else(|| need("y_per_km"))?,
    };
    let line = LineParams::new(z, y, length, freq).map_err(lib("line"))?;
    sec.finish()?;
    Ok(line)
}

impl LineFaultCase {
    fn build(root: &Section) -> CfgResult<Self> {
        let line = parse_line(&root.req_table("line")?)?;
        let sys = root.req_table("system")?;
        let mut scenario = FaultScenario::healthy(
            line,
            Phasor::from_complex(sys.req_complex("source_emf")?),
            sys.req_complex("load_impedance")?,
        );
        if let Some(e) = sys.complex("receiving_emf")? {
            scenario.receiving_emf = Phasor::from_complex(e);
        }
        sys.finish()?;

        let mut faulted = false;
        if let Some(f) = root.table("fault")? {
            let d = f.req_f64("location")?;
            let z = match (f.f64("resistance")?, f.complex("impedance")?) {
                (Some(r), None) => Complex::new(r, 0.0),
                (None, Some(z)) => z,
                (Some(_), Some(_)) => {
                    return Err(ConfigError::invalid(
                        &f.key_path("impedance"),
                        "give either resistance or impedance",
                    ))
                }
                (None, None) => {
                    return Err(ConfigError::missing(
                        &f.key_path("resistance"),
                        "fault resistance (0 for a bolted fault) or impedance",
                    ))
                }
            };
            scenario = scenario.with_fault(d, z);
            if let Some(t) = f.string("type")? {
                scenario.fault_type = FaultType::parse(&t).ok_or_else(|| {
                    ConfigError::invalid(
                        &f.key_path("type"),
                        format!("`{t}` is not one of three_phase_ground, line_to_ground, line_to_line"),
                    )
                })?;
            }
            f.finish()?;
            faulted = true;
        }
        scenario.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } if name.starts_with("fault.") => {
                ConfigError::invalid(name, reason)
            }
            Error::InvalidParameter { name, reason } => ConfigError::invalid(&format!("system.{name}"), reason),
            other => ConfigError::invalid("system", other.to_string()),
        })?;

        let attack = root.table("attack")?;
        let (dtheta_s, dtheta_r) = end_phase_errors(attack.as_ref(), Some(line.frequency_hz), "line.frequency_hz")?;
        if let Some(a) = &attack {
            a.finish()?;
        }
        Ok(LineFaultCase {
            scenario,
            faulted,
            dtheta_s,
            dtheta_r,
        })
    }

    fn evaluate(&self) -> Outcome {
        let line = &self.scenario.line;
        let mut cells = vec![Some(to_deg(self.dtheta_s)), Some(to_deg(self.dtheta_r)), None, None, None, None];
        let t = match simulate_fault(&self.scenario) {
            Ok(t) => t,
            Err(e) => return Outcome::partial(cells, Some(&e)),
        };
        let ind = match attacked_indicators(&t, line, self.dtheta_s, self.dtheta_r) {
            Ok(i) => i,
            Err(e) => return Outcome::partial(cells, Some(&e)),
        };
        cells[2] = Some(ind.m.norm());
        cells[3] = Some(ind.n.norm());
        match locate_fault(&ind, line) {
            Ok(loc) => {
                cells[4] = Some(loc.d);
                if self.faulted {
                    cells[5] = Some((loc.d - self.scenario.d) * line.length_km);
                }
                Outcome::partial(cells, None)
            }
            Err(e) => Outcome::partial(cells, Some(&e)),
        }
    }
}

pub(crate) struct StabilityCase {
    model: CorridorModel,
    timeline: Vec<(f64, TopologyEvent)>,
    samples: Vec<f64>,
    z_l0: Complex,
    power_base_va: Option<f64>,
    dtheta_s: f64,
    dtheta_r: f64,
    attack_start: f64,
}

impl StabilityCase {
    fn build(root: &Section) -> CfgResult<Self> {
        let c = root.req_table("corridor")?;
        let model = CorridorModel {
            e_g: Phasor::from_complex(c.req_complex("e_g")?),
            z_g: c.req_complex("z_g")?,
            line: CorridorLine {
                z_t: c.req_complex("line_z_t")?,
                z_sh: c.req_complex("line_z_sh")?,
            },
            n_lines: c.req_count("n_lines")?,
            z_load: c.req_complex("z_load")?,
        };
        let z_l0 = c.complex("z_load_ref")?.unwrap_or(model.z_load);
        if z_l0.norm() == 0.0 {
            return Err(ConfigError::invalid(&c.key_path("z_load_ref"), "must be nonzero"));
        }
        let frequency_hz = c.f64("frequency_hz")?;
        let power_base_va = c.f64("power_base_va")?;
        if matches!(power_base_va, Some(b) if b <= 0.0) {
            return Err(ConfigError::invalid(&c.key_path("power_base_va"), "must be > 0"));
        }
        model.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => ConfigError::invalid(name, reason),
            other => ConfigError::invalid("corridor", other.to_string()),
        })?;
        c.finish()?;

        let mut timeline = Vec::new();
        for ev in root.tables("event")? {
            let t = ev.req_f64("t")?;
            let action = ev.req_string("action")?;
            let event = match action.as_str() {
                "trip" | "restore" => {
                    let line = ev.req_count("line")?;
                    if line >= model.n_lines {
                        return Err(ConfigError::invalid(
                            &ev.key_path("line"),
                            format!("line {line} does not exist (corridor has {})", model.n_lines),
                        ));
                    }
                    if action == "trip" {
                        TopologyEvent::Trip(line)
                    } else {
                        TopologyEvent::Restore(line)
                    }
                }
                "scale_load" => {
                    let k = ev.req_f64("factor")?;
                    if k <= 0.0 {
                        return Err(ConfigError::invalid(&ev.key_path("factor"), "must be > 0"));
                    }
                    TopologyEvent::LoadScale(k)
                }
                other => {
                    return Err(ConfigError::invalid(
                        &ev.key_path("action"),
                        format!("`{other}` is not one of trip, restore, scale_load"),
                    ))
                }
            };
            ev.finish()?;
            timeline.push((t, event));
        }

        let s = root.req_table("sampling")?;
        let (start, stop, n) = (s.req_f64("start")?, s.req_f64("stop")?, s.req_count("samples")?);
        if n == 0 || n > 1_000_000 {
            return Err(ConfigError::invalid(&s.key_path("samples"), "must be in 1..=1000000"));
        }
        if stop < start {
            return Err(ConfigError::invalid(&s.key_path("stop"), "must be >= start"));
        }
        s.finish()?;
        let samples = if n == 1 {
            vec![start]
        } else {
            (0..n)
                .map(|i| if i == n - 1 { stop } else { start + (stop - start) * i as f64 / (n - 1) as f64 })
                .collect()
        };

        let attack = root.table("attack")?;
        let (dtheta_s, dtheta_r) = end_phase_errors(attack.as_ref(), frequency_hz, "corridor.frequency_hz")?;
        let attack_start = match &attack {
            Some(a) => {
                let t = a.f64("start_s")?.unwrap_or(f64::NEG_INFINITY);
                a.finish()?;
                t
            }
            None => f64::NEG_INFINITY,
        };
        Ok(StabilityCase {
            model,
            timeline,
            samples,
            z_l0,
            power_base_va,
            dtheta_s,
            dtheta_r,
            attack_start,
        })
    }

    fn evaluate(&self) -> Vec<Outcome> {
        let stream = match simulate_corridor(&self.model, &self.timeline, &self.samples) {
            Ok(s) => s,
            Err(e) => return vec![Outcome::failed(Kind::VoltageStability.columns().len(), e.code())],
        };
        self.samples
            .iter()
            .zip(stream)
            .map(|(&t, frame)| {
                let mut cells = vec![Some(t), None, None, None, None, None, None, None];
                let frame = match frame {
                    Ok(f) => f,
                    Err(e) => return Outcome::partial(cells, Some(&e)),
                };
                let terminals = if t >= self.attack_start {
                    frame.terminals.attacked(self.dtheta_s, self.dtheta_r)
                } else {
                    frame.terminals
                };
                let teq = match estimate_t_equivalent(&terminals) {
                    Ok(x) => x,
                    Err(e) => return Outcome::partial(cells, Some(&e)),
                };
                cells[1] = Some(teq.z_t.norm());
                cells[2] = Some(teq.z_sh.norm());
                let th = match thevenin_reduce(&teq, self.model.z_g, terminals.v_r) {
                    Ok(x) => x,
                    Err(e) => return Outcome::partial(cells, Some(&e)),
                };
                cells[3] = Some(th.z_th.norm());
                cells[4] = Some(th.e_th.magnitude());
                cells[5] = Some(to_deg(th.e_th.angle()));
                match stability_margins(&th, teq.z_l, self.z_l0) {
                    Ok(m) => {
                        cells[6] = Some(m.margin_z);
                        cells[7] = Some(m.margin_p / self.power_base_va.unwrap_or(1.0));
                        Outcome::partial(cells, None)
                    }
                    Err(e) => Outcome::partial(cells, Some(&e)),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    ClosedForm,
    GaussNewton,
}

pub(crate) struct ToaCase {
    scenario: ToaScenario,
    attacked: usize,
    dt: f64,
    shift_timestamps: bool,
    method: Method,
}

impl ToaCase {
    fn build(root: &Section) -> CfgResult<Self> {
        const V_E_FIELD: &str = "propagation.v_e_km_per_s";
        const V_E_HINT: &str = "the propagation speed has no default and must be set explicitly";
        let v_e = match root.table("propagation")? {
            None => return Err(ConfigError::missing(V_E_FIELD, V_E_HINT)),
            Some(p) => {
                let v = p.f64("v_e_km_per_s")?.ok_or_else(|| ConfigError::missing(V_E_FIELD, V_E_HINT))?;
                p.finish()?;
                if v <= 0.0 {
                    return Err(ConfigError::invalid(V_E_FIELD, "must be > 0"));
                }
                v
            }
        };

        let mut anchors = Vec::new();
        for a in root.tables("anchor")? {
            let id = a.req_string("id")?;
            if anchors.iter().any(|b: &Anchor| b.id == id) {
                return Err(ConfigError::invalid(&a.key_path("id"), format!("duplicate anchor id `{id}`")));
            }
            anchors.push(Anchor::new(id, a.req_f64("x_km")?, a.req_f64("y_km")?));
            a.finish()?;
        }
        if anchors.len() < 3 {
            return Err(ConfigError::invalid("anchor", "at least 3 [[anchor]] entries are required"));
        }

        let event = match root.table("event")? {
            Some(e) => {
                let ev = Event {
                    x: e.req_f64("x_km")?,
                    y: e.req_f64("y_km")?,
                    t: e.req_f64("t_s")?,
                };
                e.finish()?;
                Some(ev)
            }
            None => None,
        };
        let measured = match root.table("measurements")? {
            Some(m) => {
                let t = m.f64_array("arrival_times_s")?;
                m.finish()?;
                t
            }
            None => None,
        };
        let arrival_times = match (measured, event) {
            (Some(t), _) => {
                if t.len() != anchors.len() {
                    return Err(ConfigError::invalid(
                        "measurements.arrival_times_s",
                        format!("expected {} entries, got {}", anchors.len(), t.len()),
                    ));
                }
                t
            }
            (None, Some(ev)) => crate::event_location::arrival_times(&ev, &anchors, v_e).map_err(lib("propagation"))?,
            (None, None) => {
                return Err(ConfigError::missing(
                    "measurements.arrival_times_s",
                    "give measured arrival times or a ground-truth [event]",
                ))
            }
        };

        let (mut attacked, mut dt, mut shift_timestamps) = (0, 0.0, true);
        if let Some(a) = root.table("attack")? {
            if let Some(id) = a.string("anchor")? {
                attacked = anchors.iter().position(|x| x.id == id).ok_or_else(|| {
                    ConfigError::invalid(&a.key_path("anchor"), format!("no anchor with id `{id}`"))
                })?;
            }
            dt = a.f64("dt_seconds")?.unwrap_or(0.0);
            shift_timestamps = a.bool("shift_timestamps")?.unwrap_or(true);
            a.finish()?;
        }
        let method = match root.table("solver")? {
            Some(s) => {
                let m = match s.string("method")?.as_deref() {
                    None | Some("closed_form") => Method::ClosedForm,
                    Some("gauss_newton") => Method::GaussNewton,
                    Some(other) => {
                        return Err(ConfigError::invalid(
                            &s.key_path("method"),
                            format!("`{other}` is not one of closed_form, gauss_newton"),
                        ))
                    }
                };
                s.finish()?;
                m
            }
            None => Method::ClosedForm,
        };

        let scenario = ToaScenario {
            anchors,
            v_e,
            event,
            arrival_times,
        };
        scenario.validate().map_err(lib("anchor"))?;
        Ok(ToaCase {
            scenario,
            attacked,
            dt,
            shift_timestamps,
            method,
        })
    }

    fn evaluate(&self) -> Outcome {
        let mut cells = vec![Some(self.dt), None, None, None, None, None];
        // a phase-only attack leaves arrival times untouched
        let applied = if self.shift_timestamps { self.dt } else { 0.0 };
        let scn = match self.scenario.with_time_attack(self.attacked, applied) {
            Ok(s) => s,
            Err(e) => return Outcome::partial(cells, Some(&e)),
        };
        let mut error: Option<String> = None;
        let position = match self.method {
            Method::ClosedForm => match locate_closed_form(&scn, self.attacked) {
                Ok(sol) => match sol.selected_position() {
                    Some(p) => Some(p),
                    None => {
                        error = Some("ambiguous_root".into());
                        None
                    }
                },
                Err(e) => {
                    error = Some(e.code().into());
                    None
                }
            },
            Method::GaussNewton => match solve_toa(&scn, None) {
                Ok(s) => Some((s.x, s.y)),
                Err(e) => {
                    error = Some(e.code().into());
                    None
                }
            },
        };
        if let Some((x, y)) = position {
            cells[1] = Some(x);
            cells[2] = Some(y);
            if let Some(ev) = &self.scenario.event {
                cells[3] = Some((x - ev.x).hypot(y - ev.y));
            }
        }
        match toa_sensitivity(&scn, self.attacked) {
            Ok(s) => {
                cells[4] = Some(s.dx_dt1);
                cells[5] = Some(s.dy_dt1);
            }
            Err(e) => {
                error.get_or_insert_with(|| e.code().into());
            }
        }
        Outcome { cells, error_code: error }
    }
}

fn build_spoof(root: &Section) -> CfgResult<SpoofCampaign> {
    let r = root.req_table("receiver")?;
    let peak = CorrelationPeak {
        code_phase: r.req_f64("code_phase_chips")?,
        doppler: r.f64("doppler_hz")?.unwrap_or(0.0),
        amplitude: r.req_f64("amplitude")?,
    };
    r.finish()?;
    let c = root.req_table("campaign")?;
    let mut camp = SpoofCampaign::new(peak, c.req_f64("amplitude_ratio")?, c.req_f64("drag_target_chips")?);
    if let Some(v) = c.f64("start_offset_chips")? {
        camp.start_offset_chips = v;
    }
    if let Some(v) = c.f64("approach_rate_chips")? {
        camp.approach_rate = v;
    }
    if let Some(v) = c.f64("drag_rate_chips")? {
        camp.drag_rate = v;
    }
    if let Some(v) = c.f64("capture_radius_chips")? {
        camp.capture_radius = v;
    }
    if let Some(v) = c.f64("max_slew_chips")? {
        camp.max_slew = v;
    }
    if let Some(v) = c.f64("chip_duration_s")? {
        camp.chip_duration = v;
    }
    c.finish()?;
    camp.validate().map_err(|e| match e {
        Error::InvalidParameter { name, reason } => {
            let field = match name {
                "true_peak.amplitude" => "receiver.amplitude".to_string(),
                "true_peak.code_phase" => "receiver.code_phase_chips".to_string(),
                "fake_amplitude_ratio" => "campaign.amplitude_ratio".to_string(),
                "chip_duration" => "campaign.chip_duration_s".to_string(),
                "drag_target_chips" | "start_offset_chips" => format!("campaign.{name}"),
                other => format!("campaign.{other}_chips"),
            };
            ConfigError::invalid(&field, reason)
        }
        other => ConfigError::invalid("campaign", other.to_string()),
    })?;
    Ok(camp)
}

fn evaluate_spoof(camp: &SpoofCampaign) -> Vec<Outcome> {
    match run_spoof_campaign(camp) {
        Ok(out) => {
            let captured = if out.captured { 1.0 } else { 0.0 };
            out.trajectory
                .iter()
                .map(|&(step, phase)| Outcome {
                    cells: vec![Some(step as f64), Some(phase), Some(captured), Some(out.achieved_dt)],
                    error_code: None,
                })
                .collect()
        }
        Err(e) => vec![Outcome::failed(Kind::GpsSpoof.columns().len(), e.code())],
    }
}
