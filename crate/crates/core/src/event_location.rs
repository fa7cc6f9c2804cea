//! Disturbance-event localization from wave-front arrival times (TOA), its
//! three-anchor closed form, and the sensitivity of the closed form to a
//! timing error at one anchor.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const GN_STEP_TOL: f64 = 1e-10;
const GN_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub id: String,
    /// km
    pub x: f64,
    /// km
    pub y: f64,
}

impl Anchor {
    pub fn new(id: impl Into<String>, x: f64, y: f64) -> Self {
        Anchor { id: id.into(), x, y }
    }

    fn dist(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }
}

/// Event position (km) and origin time (s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToaScenario {
    pub anchors: Vec<Anchor>,
    /// Propagation speed, km/s.
    pub v_e: f64,
    pub event: Option<Event>,
    /// Seconds, one per anchor.
    pub arrival_times: Vec<f64>,
}

impl ToaScenario {
    /// Scenario with arrival times generated from a known event.
    pub fn from_event(anchors: Vec<Anchor>, v_e: f64, event: Event) -> Result<Self> {
        let arrival_times = arrival_times(&event, &anchors, v_e)?;
        let scn = ToaScenario {
            anchors,
            v_e,
            event: Some(event),
            arrival_times,
        };
        scn.validate()?;
        Ok(scn)
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchors.len() < 3 {
            return Err(Error::invalid("anchors", "at least 3 anchors are required"));
        }
        if !(self.v_e.is_finite() && self.v_e > 0.0) {
            return Err(Error::invalid("v_e", "must be finite and > 0"));
        }
        if self.arrival_times.len() != self.anchors.len() {
            return Err(Error::invalid(
                "arrival_times",
                format!("expected {} entries, got {}", self.anchors.len(), self.arrival_times.len()),
            ));
        }
        if self
            .anchors
            .iter()
            .any(|a| !(a.x.is_finite() && a.y.is_finite()))
        {
            return Err(Error::invalid("anchors", "coordinates must be finite"));
        }
        if self.arrival_times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("arrival_times", "must be finite"));
        }
        Ok(())
    }

    /// Copy with arrival time `index` shifted by `dt`.
    pub fn with_time_attack(&self, index: usize, dt: f64) -> Result<Self> {
        Ok(ToaScenario {
            arrival_times: inject_time_attack(&self.arrival_times, index, dt)?,
            ..self.clone()
        })
    }
}

/// `t_i = t_e + |p_i − e|/V_e`
pub fn arrival_times(event: &Event, anchors: &[Anchor], v_e: f64) -> Result<Vec<f64>> {
    if !(v_e.is_finite() && v_e > 0.0) {
        return Err(Error::invalid("v_e", "must be finite and > 0"));
    }
    Ok(anchors
        .iter()
        .map(|a| event.t + a.dist(event.x, event.y) / v_e)
        .collect())
}

pub fn inject_time_attack(times: &[f64], target_index: usize, dt: f64) -> Result<Vec<f64>> {
    if target_index >= times.len() {
        return Err(Error::invalid(
            "attacked_index",
            format!("index {target_index} out of range for {} anchors", times.len()),
        ));
    }
    if !dt.is_finite() {
        return Err(Error::invalid("dt_seconds", "must be finite"));
    }
    let mut out = times.to_vec();
    out[target_index] += dt;
    Ok(out)
}

/// Gauss-Newton solution of the circle system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToaSolution {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    /// Euclidean norm of the final residual vector, km².
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Least-squares fit of `r_i = (x_i−x)² + (y_i−y)² − V_e²(t_i−t)²`.
///
/// Without `init` the iteration starts from [`default_initial_guess`]; if that
/// settles in a local minimum with a non-negligible residual, the closed-form
/// roots are tried as further starting points and the smallest residual wins.
/// Time is carried internally as the range `V_e·t` so all unknowns are in km;
/// the convergence threshold applies to that scaled step.
pub fn solve_toa(scn: &ToaScenario, init: Option<Event>) -> Result<ToaSolution> {
    scn.validate()?;
    if let Some(start) = init {
        return gauss_newton(scn, start);
    }
    let first = gauss_newton(scn, default_initial_guess(scn));
    let spread = anchor_spread(scn);
    if matches!(&first, Ok(s) if s.residual_norm <= 1e-12 * spread * spread) {
        return first;
    }
    let mut best = first;
    if let Ok(cf) = locate_closed_form(scn, 0) {
        let t1 = scn.arrival_times[cf.triple[0]];
        for (i, c) in cf.candidates.iter().enumerate() {
            let (x, y) = cf.position(i);
            let start = Event { x, y, t: t1 - c.k / scn.v_e };
            if let Ok(s) = gauss_newton(scn, start) {
                if best.as_ref().map_or(true, |b| s.residual_norm < b.residual_norm) {
                    best = Ok(s);
                }
            }
        }
    }
    best
}

fn anchor_spread(scn: &ToaScenario) -> f64 {
    let mut spread: f64 = 0.0;
    for (i, a) in scn.anchors.iter().enumerate() {
        for b in &scn.anchors[i + 1..] {
            spread = spread.max(a.dist(b.x, b.y));
        }
    }
    spread
}

fn gauss_newton(scn: &ToaScenario, start: Event) -> Result<ToaSolution> {
    let v = scn.v_e;
    let n = scn.anchors.len();
    let ranges: Vec<f64> = scn.arrival_times.iter().map(|t| t * v).collect();
    let mut p = [start.x, start.y, start.t * v];
    let mut trace = vec![p];

    let residuals = |p: &[f64; 3]| -> DVector<f64> {
        DVector::from_iterator(
            n,
            scn.anchors.iter().zip(&ranges).map(|(a, r)| {
                let (dx, dy, dr) = (a.x - p[0], a.y - p[1], r - p[2]);
                dx * dx + dy * dy - dr * dr
            }),
        )
    };

    for iter in 1..=GN_MAX_ITER {
        let r = residuals(&p);
        let mut jac = DMatrix::zeros(n, 3);
        for (i, (a, rg)) in scn.anchors.iter().zip(&ranges).enumerate() {
            jac[(i, 0)] = -2.0 * (a.x - p[0]);
            jac[(i, 1)] = -2.0 * (a.y - p[1]);
            jac[(i, 2)] = 2.0 * (rg - p[2]);
        }
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smax.is_finite() && smin > 1e-12 * smax) {
            return Err(Error::SolverFailure {
                reason: "singular Jacobian",
                trace: unscale(&trace, v),
            });
        }
        let step = svd
            .solve(&(-r), 0.0)
            .map_err(|_| Error::SolverFailure {
                reason: "least-squares step failed",
                trace: unscale(&trace, v),
            })?;
        for k in 0..3 {
            p[k] += step[k];
        }
        trace.push(p);
        if !p.iter().all(|c| c.is_finite()) {
            return Err(Error::SolverFailure {
                reason: "iterate diverged",
                trace: unscale(&trace, v),
            });
        }
        if step.norm() < GN_STEP_TOL {
            return Ok(ToaSolution {
                x: p[0],
                y: p[1],
                t: p[2] / v,
                residual_norm: residuals(&p).norm(),
                iterations: iter,
            });
        }
    }
    Err(Error::SolverFailure {
        reason: "no convergence within 100 iterations",
        trace: unscale(&trace, v),
    })
}

fn unscale(trace: &[[f64; 3]], v: f64) -> Vec<[f64; 3]> {
    trace.iter().map(|p| [p[0], p[1], p[2] / v]).collect()
}

/// Anchor centroid, timed half the largest anchor spacing before the first
/// arrival.
pub fn default_initial_guess(scn: &ToaScenario) -> Event {
    let n = scn.anchors.len() as f64;
    let x = scn.anchors.iter().map(|a| a.x).sum::<f64>() / n;
    let y = scn.anchors.iter().map(|a| a.y).sum::<f64>() / n;
    let spread = anchor_spread(scn);
    let t_min = scn.arrival_times.iter().copied().fold(f64::INFINITY, f64::min);
    Event {
        x,
        y,
        t: t_min - spread / (2.0 * scn.v_e),
    }
}

/// Frame with `p1` at the origin and `p2` on the positive x′ axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformFrame {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub alpha: f64,
    pub origin: (f64, f64),
}

impl TransformFrame {
    pub fn to_original(&self, xp: f64, yp: f64) -> (f64, f64) {
        let (s, c) = self.alpha.sin_cos();
        (xp * c - yp * s + self.origin.0, xp * s + yp * c + self.origin.1)
    }

    pub fn to_local(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.alpha.sin_cos();
        let (dx, dy) = (x - self.origin.0, y - self.origin.1);
        (dx * c + dy * s, -dx * s + dy * c)
    }

    /// Rotates a local-frame vector into the original frame.
    pub fn rotate_vector(&self, dxp: f64, dyp: f64) -> (f64, f64) {
        let (s, c) = self.alpha.sin_cos();
        (dxp * c - dyp * s, dxp * s + dyp * c)
    }
}

pub fn transform_frame(p1: (f64, f64), p2: (f64, f64), p3: (f64, f64)) -> Result<TransformFrame> {
    let (dx2, dy2) = (p2.0 - p1.0, p2.1 - p1.1);
    let a = dx2.hypot(dy2);
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::FrameDegenerate);
    }
    let alpha = dy2.atan2(dx2);
    let (s, co) = alpha.sin_cos();
    let (dx3, dy3) = (p3.0 - p1.0, p3.1 - p1.1);
    let b = dx3 * co + dy3 * s;
    let c = -dx3 * s + dy3 * co;
    let tol = 1e-12 * a.max(dx3.hypot(dy3));
    if c.is_nan() || c.abs() <= tol {
        return Err(Error::FrameDegenerate);
    }
    Ok(TransformFrame {
        a,
        b,
        c,
        alpha,
        origin: p1,
    })
}

/// Coefficients of `x′ = A + Bk`, `y′ = C + Dk` and of `Mk² + 2Nk + P = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Coefficients {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    m: f64,
    n: f64,
    p: f64,
}

impl Coefficients {
    fn new(f: &TransformFrame, l: f64, r: f64) -> Self {
        let a = (f.a * f.a - l * l) / (2.0 * f.a);
        let b = -l / f.a;
        let c = (f.b * f.b + f.c * f.c - 2.0 * f.b * a - r * r) / (2.0 * f.c);
        let d = -(r + f.b * b) / f.c;
        Coefficients {
            a,
            b,
            c,
            d,
            m: b * b + d * d - 1.0,
            n: a * b + c * d,
            p: a * a + c * c,
        }
    }

    fn linear(&self) -> bool {
        self.m.abs() <= 1e-12 * (self.b * self.b + self.d * self.d + 1.0)
    }

    fn discriminant(&self) -> f64 {
        self.n * self.n - self.m * self.p
    }
}

/// Root branch of the k-quadratic a candidate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
    /// `M = 0`, single root `k = −P/2N`.
    Linear,
}

/// One closed-form solution in the local frame; `k` is the range from `p1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub x_local: f64,
    pub y_local: f64,
    pub k: f64,
    pub branch: Branch,
}

/// Solutions with `k ≥ 0` of the three-circle system given pseudo-ranges
/// `L = (t₂−t₁)V_e` and `R = (t₃−t₁)V_e`.
pub fn closed_form_location(frame: &TransformFrame, l: f64, r: f64) -> Result<Vec<Candidate>> {
    if !(l.is_finite() && r.is_finite()) {
        return Err(Error::invalid("pseudo_range", "must be finite"));
    }
    let co = Coefficients::new(frame, l, r);
    let mut roots = Vec::with_capacity(2);
    if co.linear() {
        if co.n == 0.0 {
            return Err(Error::NoSolution { discriminant: 0.0 });
        }
        roots.push((-co.p / (2.0 * co.n), Branch::Linear));
    } else {
        let disc = co.discriminant();
        if disc.is_nan() || disc < 0.0 {
            return Err(Error::NoSolution { discriminant: disc });
        }
        let sq = disc.sqrt();
        roots.push(((-co.n + sq) / co.m, Branch::Plus));
        if sq > 0.0 {
            roots.push(((-co.n - sq) / co.m, Branch::Minus));
        }
    }
    let k_tol = 1e-12 * (frame.a + frame.b.abs() + frame.c.abs());
    Ok(roots
        .into_iter()
        .filter(|(k, _)| k.is_finite() && *k >= -k_tol)
        .map(|(k, branch)| Candidate {
            x_local: co.a + co.b * k,
            y_local: co.c + co.d * k,
            k,
            branch,
        })
        .collect())
}

/// Closed-form pipeline on a scenario: anchor `attacked_index` becomes `p1`
/// and the next two anchors in scenario order become `p2`, `p3`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormSolution {
    pub frame: TransformFrame,
    /// Anchor indices used as `p1`, `p2`, `p3`.
    pub triple: [usize; 3],
    pub l: f64,
    pub r: f64,
    pub candidates: Vec<Candidate>,
    /// Index into `candidates` of the physical root, when it can be told apart.
    pub selected: Option<usize>,
}

impl ClosedFormSolution {
    /// Original-frame position of candidate `i`.
    pub fn position(&self, i: usize) -> (f64, f64) {
        let c = &self.candidates[i];
        self.frame.to_original(c.x_local, c.y_local)
    }

    pub fn selected_position(&self) -> Option<(f64, f64)> {
        self.selected.map(|i| self.position(i))
    }
}

fn triple_for(n: usize, attacked_index: usize) -> Result<[usize; 3]> {
    if attacked_index >= n {
        return Err(Error::invalid(
            "attacked_index",
            format!("index {attacked_index} out of range for {n} anchors"),
        ));
    }
    let mut rest = (0..n).filter(|&i| i != attacked_index);
    Ok([attacked_index, rest.next().unwrap(), rest.next().unwrap()])
}

pub fn locate_closed_form(scn: &ToaScenario, attacked_index: usize) -> Result<ClosedFormSolution> {
    scn.validate()?;
    let triple = triple_for(scn.anchors.len(), attacked_index)?;
    let pt = |i: usize| (scn.anchors[i].x, scn.anchors[i].y);
    let frame = transform_frame(pt(triple[0]), pt(triple[1]), pt(triple[2]))?;
    let t = |i: usize| scn.arrival_times[triple[i]];
    let l = (t(1) - t(0)) * scn.v_e;
    let r = (t(2) - t(0)) * scn.v_e;
    let candidates = closed_form_location(&frame, l, r)?;
    let mut sol = ClosedFormSolution {
        frame,
        triple,
        l,
        r,
        candidates,
        selected: None,
    };
    sol.selected = select_candidate(scn, &sol);
    Ok(sol)
}

/// Picks the physical root: the candidate most consistent with the anchors
/// outside the triple, or failing that the one nearest the known event.
fn select_candidate(scn: &ToaScenario, sol: &ClosedFormSolution) -> Option<usize> {
    match sol.candidates.len() {
        0 => return None,
        1 => return Some(0),
        _ => {}
    }
    let t1 = scn.arrival_times[sol.triple[0]];
    let others: Vec<usize> = (0..scn.anchors.len())
        .filter(|i| !sol.triple.contains(i))
        .collect();
    let score = |i: usize| -> f64 {
        let (x, y) = sol.position(i);
        if others.is_empty() {
            let e = scn.event.expect("checked by caller");
            (x - e.x).hypot(y - e.y)
        } else {
            let t_e = t1 - sol.candidates[i].k / scn.v_e;
            others
                .iter()
                .map(|&j| {
                    let res = scn.anchors[j].dist(x, y) - scn.v_e * (scn.arrival_times[j] - t_e);
                    res * res
                })
                .sum()
        }
    };
    if others.is_empty() && scn.event.is_none() {
        return None;
    }
    let (s0, s1) = (score(0), score(1));
    if s0 <= s1 {
        Some(0)
    } else {
        Some(1)
    }
}

/// `∂x_e/∂t₁`, `∂y_e/∂t₁` in the original frame, km/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityResult {
    pub dx_dt1: f64,
    pub dy_dt1: f64,
    /// Location the derivatives were evaluated at.
    pub x: f64,
    pub y: f64,
    pub branch: Branch,
}

/// Analytical derivative of the closed-form location with respect to the
/// arrival time at anchor `attacked_index`, on the branch of the selected
/// root.
pub fn toa_sensitivity(scn: &ToaScenario, attacked_index: usize) -> Result<SensitivityResult> {
    let sol = locate_closed_form(scn, attacked_index)?;
    let idx = sol
        .selected
        .ok_or(Error::SensitivityUndefined("no unambiguous physical root"))?;
    let cand = sol.candidates[idx];
    let f = &sol.frame;
    let co = Coefficients::new(f, sol.l, sol.r);
    let v = scn.v_e;
    let (a, b, c) = (f.a, f.b, f.c);

    // dL/dt₁ = dR/dt₁ = −V
    let da = sol.l * v / a;
    let db = v / a;
    let dc = v * (sol.r - b * sol.l / a) / c;
    let dd = v * (1.0 - b / a) / c;
    let dm = 2.0 * co.b * db + 2.0 * co.d * dd;
    let dn = da * co.b + co.a * db + dc * co.d + co.c * dd;
    let dp = 2.0 * co.a * da + 2.0 * co.c * dc;
    let k = cand.k;

    let dk = match cand.branch {
        Branch::Linear => -dp / (2.0 * co.n) - k * dn / co.n,
        branch => {
            let disc = co.discriminant();
            if disc.is_nan() || disc <= 0.0 {
                return Err(Error::SensitivityUndefined("discriminant is not positive"));
            }
            let s = if branch == Branch::Plus { 1.0 } else { -1.0 };
            let d_disc = 2.0 * co.n * dn - dm * co.p - co.m * dp;
            (-dn + s * d_disc / (2.0 * disc.sqrt())) / co.m - k * dm / co.m
        }
    };
    let dxp = da + db * k + co.b * dk;
    let dyp = dc + dd * k + co.d * dk;
    let (dx, dy) = f.rotate_vector(dxp, dyp);
    if !(dx.is_finite() && dy.is_finite()) {
        return Err(Error::SensitivityUndefined("non-finite derivative"));
    }
    let (x, y) = sol.position(idx);
    Ok(SensitivityResult {
        dx_dt1: dx,
        dy_dt1: dy,
        x,
        y,
        branch: cand.branch,
    })
}
