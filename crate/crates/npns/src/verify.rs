//! Machine checks of the a priori energy inequalities, exponential decay
//! bounds, and the random absorbing radii, evaluated on recorded trajectory
//! diagnostics.
//!
//! Inequalities are checked per record interval with midpoint/trapezoid
//! quadrature, so a calibrated tolerance `tol_ineq = max(1e-8, c_check * dt)`
//! separates genuine violations from discretization error. Checks whose
//! hypotheses fail on the data (e.g. loss of concentration positivity) are
//! reported `hypothesis-void` rather than failed when a violation occurs
//! under the broken hypothesis.

use crate::dynamics::{Gauge, NpnsState, PhysicalParams};
use crate::error::{Error, Result};
use crate::integrator::{pullback, DiagnosticsRecord, IntegratorConfig};
use crate::noise::{NoiseParams, WienerPath};
use crate::spectral::TWO_PI;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

pub const DEFAULT_C_CHECK: f64 = 10.0;

/// `max(1e-8, c_check * dt)`
pub fn tol_ineq(dt: f64, c_check: f64) -> f64 {
    (c_check * dt).max(1e-8)
}

/// Calibrates `c_check` from the worst residual of a reference run and
/// returns it with the observed convergence order under dt-halving.
pub fn calibrate_tolerance(worst_dt: f64, worst_half_dt: f64, dt: f64) -> (f64, f64) {
    let c_check = (4.0 * worst_dt.abs() / dt).max(1e-8 / dt);
    let order = if worst_half_dt.abs() > 0.0 {
        (worst_dt.abs() / worst_half_dt.abs()).log2()
    } else {
        f64::INFINITY
    };
    (c_check, order)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Passed,
    Failed,
    /// a precondition of the underlying estimate does not hold on this data
    HypothesisVoid,
    /// not enough data to decide (e.g. run too short for a fit)
    Inconclusive,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CheckRow {
    pub time: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub status: CheckStatus,
    pub rows: Vec<CheckRow>,
    pub violations: usize,
    pub worst_residual: f64,
    /// fitted or derived constants (decay rates, envelopes, drifts)
    pub fitted: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl CheckReport {
    fn new(name: &str) -> CheckReport {
        CheckReport {
            name: name.into(),
            status: CheckStatus::Passed,
            rows: Vec::new(),
            violations: 0,
            worst_residual: f64::NEG_INFINITY,
            fitted: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    fn push(&mut self, time: f64, lhs: f64, rhs: f64, tol: f64) {
        let residual = lhs - rhs;
        let pass = residual <= tol;
        if !pass {
            self.violations += 1;
        }
        self.worst_residual = self.worst_residual.max(residual);
        self.rows.push(CheckRow {
            time,
            lhs,
            rhs,
            residual,
            pass,
        });
    }

    fn finish(&mut self, hypothesis_holds: bool) {
        if self.rows.is_empty() {
            self.worst_residual = 0.0;
        }
        self.status = if self.violations == 0 {
            CheckStatus::Passed
        } else if hypothesis_holds {
            CheckStatus::Failed
        } else {
            CheckStatus::HypothesisVoid
        };
    }

    pub fn passed(&self) -> bool {
        self.status != CheckStatus::Failed
    }

    /// `time,lhs,rhs,residual,pass` rows.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "time,lhs,rhs,residual,pass")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.time, r.lhs, r.rhs, r.residual, r.pass)?;
        }
        Ok(())
    }
}

fn require_records(records: &[DiagnosticsRecord], n: usize) -> Result<()> {
    if records.len() < n {
        return Err(Error::MissingData(format!(
            "check needs at least {n} diagnostic records, got {}",
            records.len()
        )));
    }
    Ok(())
}

/// Positivity of both recovered concentrations across all records, with a
/// small slack for spectral truncation undershoot.
fn positivity_holds(records: &[DiagnosticsRecord]) -> bool {
    let scale = records
        .iter()
        .map(|r| r.sigma_mean.abs())
        .fold(1.0_f64, f64::max);
    records
        .iter()
        .all(|r| r.min_c1 >= -1e-8 * scale && r.min_c2 >= -1e-8 * scale)
}

/// Ion energy dissipation: per-interval residual of
/// `d/dt(||sigma||^2 + ||rho||^2) + 2D(||grad sigma||^2 + ||grad rho||^2) <= 0`
/// at interval midpoints, plus exact conservation of both means.
pub fn check_mass_dissipation(
    records: &[DiagnosticsRecord],
    params: &PhysicalParams,
    dt: f64,
    c_check: f64,
) -> Result<CheckReport> {
    require_records(records, 2)?;
    let mut rep = CheckReport::new("mass_dissipation");
    let tol = tol_ineq(dt, c_check);
    let scale = (records[0].sigma_l2_sq + records[0].rho_l2_sq).max(1.0);
    for w in records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let h = b.time - a.time;
        if !(h > 0.0) {
            return Err(Error::MissingData("non-increasing record times".into()));
        }
        let de = (b.sigma_l2_sq + b.rho_l2_sq - a.sigma_l2_sq - a.rho_l2_sq) / h;
        let grad = 0.5 * (a.sigma_h1_sq + a.rho_h1_sq + b.sigma_h1_sq + b.rho_h1_sq);
        let lhs = de + 2.0 * params.dcoef * grad;
        rep.push(0.5 * (a.time + b.time), lhs, 0.0, tol * scale);
    }
    let m0 = records[0].sigma_mean;
    let sigma_drift = records
        .iter()
        .map(|r| (r.sigma_mean - m0).abs())
        .fold(0.0_f64, f64::max);
    let rho_drift = records
        .iter()
        .map(|r| (r.rho_mean - records[0].rho_mean).abs())
        .fold(0.0_f64, f64::max);
    rep.fitted.insert("sigma_mean_drift".into(), sigma_drift);
    rep.fitted.insert("rho_mean_drift".into(), rho_drift);
    if sigma_drift > 1e-10 || rho_drift > 1e-10 {
        rep.violations += 1;
        rep.notes.push(format!(
            "ion mean drift exceeds 1e-10: sigma {sigma_drift:.3e}, rho {rho_drift:.3e}"
        ));
    }
    let pos = positivity_holds(records);
    if !pos {
        rep.notes
            .push("concentration positivity lost; the sign of the coupling term is uncontrolled".into());
    }
    rep.finish(pos);
    Ok(rep)
}

/// Exponential decay of the ion energy:
/// `||sigma||^2 + ||rho||^2 <= (1 + delta) * initial * exp(-2D (t - t0))`.
///
/// The bound is evaluated on the mean-free fluctuations: both means are
/// conserved exactly by the dynamics, and the Poincare step behind the decay
/// rate only controls the fluctuating part.
pub fn check_decay_h(
    records: &[DiagnosticsRecord],
    params: &PhysicalParams,
    dt: f64,
) -> Result<CheckReport> {
    require_records(records, 2)?;
    let mut rep = CheckReport::new("decay_h");
    let delta = 1e-3 + 5.0 * dt;
    rep.fitted.insert("delta_tol".into(), delta);
    let fluct = |r: &DiagnosticsRecord| {
        let mean_sq = TWO_PI * TWO_PI * (r.sigma_mean * r.sigma_mean + r.rho_mean * r.rho_mean);
        (r.sigma_l2_sq + r.rho_l2_sq - mean_sq).max(0.0)
    };
    let t0 = records[0].time;
    let e0 = fluct(&records[0]);
    for r in records {
        let bound = (1.0 + delta) * e0 * (2.0 * params.dcoef * (t0 - r.time)).exp();
        rep.push(r.time, fluct(r), bound, 1e-12 * e0.max(1.0));
    }
    let pos = positivity_holds(records);
    if !pos {
        rep.notes.push("positivity hypothesis lost during the run".into());
    }
    rep.finish(pos);
    Ok(rep)
}

/// Velocity energy inequality and its Gronwall closed form:
/// per-interval residual of
/// `d/dt||v||^2 + nu||grad v||^2 <= (2/nu) z^2 (||rho||^3 ||grad rho|| + ||f||^2)`
/// plus the integrated pointwise bound on `||v(t)||^2`.
pub fn check_velocity_energy(
    records: &[DiagnosticsRecord],
    params: &PhysicalParams,
    dt: f64,
    c_check: f64,
) -> Result<CheckReport> {
    require_records(records, 2)?;
    let mut rep = CheckReport::new("velocity_energy");
    let nu = params.nu;
    let f_sq = params.force.norm_l2().powi(2);
    let tol = tol_ineq(dt, c_check);
    let scale = records
        .iter()
        .map(|r| r.v_l2_sq)
        .fold(1.0_f64, f64::max);
    let source = |r: &DiagnosticsRecord| {
        (2.0 / nu) * r.z * r.z * (r.rho_l2.powi(3) * r.rho_h1_sq.sqrt() + f_sq)
    };
    for w in records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let h = b.time - a.time;
        let lhs = (b.v_l2_sq - a.v_l2_sq) / h + nu * 0.5 * (a.v_h1_sq + b.v_h1_sq);
        let rhs = 0.5 * (source(a) + source(b));
        rep.push(0.5 * (a.time + b.time), lhs, rhs, tol * scale);
    }
    // closed form: ||v(t)||^2 <= e^{-nu(t-t0)} ||v(t0)||^2
    //            + (2/nu) \int_{t0}^{t} e^{-nu(t-s)} z^2 (||rho||^3 ||grad rho|| + ||f||^2) ds
    let delta = 1e-3 + 5.0 * dt;
    let t0 = records[0].time;
    let v0 = records[0].v_l2_sq;
    let mut integral = 0.0; // of e^{nu s} * source, trapezoid
    let mut worst_closed = f64::NEG_INFINITY;
    let mut closed_violations = 0usize;
    for (i, r) in records.iter().enumerate() {
        if i > 0 {
            let a = &records[i - 1];
            let h = r.time - a.time;
            let g = |x: &DiagnosticsRecord| (nu * (x.time - t0)).exp() * source(x);
            integral += 0.5 * h * (g(a) + g(r));
        }
        let bound = (-nu * (r.time - t0)).exp() * (v0 + integral);
        let resid = r.v_l2_sq - (1.0 + delta) * bound;
        worst_closed = worst_closed.max(resid);
        if resid > tol * scale {
            closed_violations += 1;
        }
    }
    rep.fitted.insert("closed_form_worst".into(), worst_closed);
    if closed_violations > 0 {
        rep.violations += closed_violations;
        rep.notes.push(format!(
            "Gronwall closed-form bound violated at {closed_violations} samples"
        ));
    }
    rep.finish(true);
    Ok(rep)
}

/// Least-squares line fit; returns `(slope, intercept)`.
fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return (0.0, sy / n);
    }
    let slope = (n * sxy - sx * sy) / denom;
    (slope, (sy - slope * sx) / n)
}

/// Fits the exponential envelope `A exp(-a (t - t0))` of the ion gradient
/// energy over the tail half of the run and reports `(A, a)`.
pub fn check_gradient_decay_v(
    records: &[DiagnosticsRecord],
    params: &PhysicalParams,
) -> Result<CheckReport> {
    require_records(records, 4)?;
    let mut rep = CheckReport::new("gradient_decay_v");
    let t0 = records[0].time;
    let tail = &records[records.len() / 2..];
    let g = |r: &DiagnosticsRecord| r.rho_h1_sq + r.sigma_h1_sq;
    if tail.iter().all(|r| g(r) < 1e-28) {
        rep.notes.push("gradient energy at round-off level; fit skipped".into());
        rep.finish(true);
        return Ok(rep);
    }
    let xs: Vec<f64> = tail.iter().map(|r| r.time - t0).collect();
    let ys: Vec<f64> = tail.iter().map(|r| g(r).max(1e-300).ln()).collect();
    let (slope, intercept) = fit_line(&xs, &ys);
    let a = -slope;
    let big_a = intercept.exp();
    rep.fitted.insert("a".into(), a);
    rep.fitted.insert("A".into(), big_a);
    rep.fitted.insert("a_over_2d".into(), a / (2.0 * params.dcoef));
    // e-fold coverage of the fitted window
    let span = xs.last().unwrap() - xs.first().unwrap();
    let efolds = a * span;
    rep.fitted.insert("efolds".into(), efolds);
    if !(a > 0.0) {
        rep.violations += 1;
        rep.notes.push(format!("fitted decay rate not positive: a = {a:.3e}"));
        rep.finish(true);
    } else if efolds < 1.0 {
        rep.notes.push("run too short for a confident decay fit".into());
        rep.finish(true);
        rep.status = CheckStatus::Inconclusive;
    } else {
        rep.finish(true);
    }
    // rows: measured vs fitted envelope (report-only)
    for r in tail {
        let fitv = big_a * (-a * (r.time - t0)).exp();
        rep.rows.push(CheckRow {
            time: r.time,
            lhs: g(r),
            rhs: fitv,
            residual: g(r) - fitv,
            pass: true,
        });
    }
    Ok(rep)
}

/// Windowed time-averaged dissipation integral
/// `\int_t^{t+T} (||grad rho||^2 + ||grad sigma||^2 + (1/eps0) ||grad rho||_{L3}^3) ds`
/// per window, reported against the fitted envelope `c * T * exp(-2 D t)`.
/// Report-only: rows always pass.
pub fn check_time_averaged_bound(
    records: &[DiagnosticsRecord],
    params: &PhysicalParams,
    t_window: f64,
) -> Result<CheckReport> {
    require_records(records, 3)?;
    let mut rep = CheckReport::new("time_averaged_bound");
    rep.notes.push(
        "the 1/eps factor of the integrand is read as 1/eps0 (Debye parameter); \
         the noise intensity would make the bound degenerate as eps -> 0"
            .into(),
    );
    let t_first = records[0].time;
    let t_last = records.last().unwrap().time;
    if t_window <= 0.0 || t_window > t_last - t_first {
        return Err(Error::InvalidParameter(format!(
            "window {t_window} does not fit in trajectory span {}",
            t_last - t_first
        )));
    }
    let integrand = |r: &DiagnosticsRecord| {
        r.rho_h1_sq + r.sigma_h1_sq + r.grad_rho_l3.powi(3) / params.eps0
    };
    // window starts at every record whose window still fits
    let mut windows: Vec<(f64, f64)> = Vec::new();
    for (i, start) in records.iter().enumerate() {
        if start.time + t_window > t_last + 1e-12 {
            break;
        }
        let mut acc = 0.0;
        for w in records[i..].windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.time >= start.time + t_window - 1e-12 {
                break;
            }
            let h = b.time.min(start.time + t_window) - a.time;
            acc += 0.5 * h * (integrand(a) + integrand(b));
        }
        windows.push((start.time, acc));
    }
    // fit the envelope constant with the decay rate pinned at 2D
    let d2 = 2.0 * params.dcoef;
    let c = windows
        .iter()
        .map(|(t, v)| v * (d2 * (t - t_first)).exp())
        .sum::<f64>()
        / (windows.len() as f64 * t_window).max(1e-300);
    rep.fitted.insert("envelope_const".into(), c);
    let mut monotone = true;
    for w in windows.windows(2) {
        if w[1].1 > w[0].1 * (1.0 + 1e-9) + 1e-12 {
            monotone = false;
        }
    }
    rep.fitted
        .insert("windows_monotone_decreasing".into(), if monotone { 1.0 } else { 0.0 });
    for (t, v) in &windows {
        let env = c * t_window * (-d2 * (t - t_first)).exp();
        rep.rows.push(CheckRow {
            time: *t,
            lhs: *v,
            rhs: env,
            residual: v - env,
            pass: true,
        });
    }
    rep.finish(true);
    Ok(rep)
}

/// The deterministic and random absorbing radii of the pullback analysis.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AbsorbingRadii {
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub r5: f64,
    /// bound on the neglected `(-inf, t_truncate]` tail of the integrals
    pub truncation_tail_bound: f64,
}

impl AbsorbingRadii {
    /// H absorbing ball radius `2 R0 + R1`.
    pub fn ball_h(&self) -> f64 {
        2.0 * self.r0 + self.r1
    }

    /// V absorbing ball radius `R4 + 2 R5`.
    pub fn ball_v(&self) -> f64 {
        self.r4 + 2.0 * self.r5
    }
}

/// Assembles the random radii from quadratures of `z^2 e^{nu s}`-type
/// integrals over `[t_truncate, 0]` at the path resolution. `r0` bounds the
/// ion norms and `a_const` is the gradient-decay amplitude `A` (take it from
/// [`check_gradient_decay_v`]). Generic constants of the underlying estimates
/// are set to 1 and `c_f = ||f||^2`.
pub fn compute_absorbing_radii(
    path: &WienerPath,
    noise: &NoiseParams,
    params: &PhysicalParams,
    t_truncate: f64,
    r0: f64,
    a_const: f64,
) -> Result<AbsorbingRadii> {
    let nu = params.nu;
    let needed = -(1e12_f64.ln()) / nu;
    if t_truncate > needed {
        return Err(Error::InsufficientWindow {
            need: needed,
            have: t_truncate,
        });
    }
    if path.t_min() > t_truncate {
        return Err(Error::InsufficientWindow {
            need: t_truncate,
            have: path.t_min(),
        });
    }
    if !(r0 > 0.0) || !(a_const >= 0.0) {
        return Err(Error::InvalidParameter(
            "r0 must be positive and A nonnegative".into(),
        ));
    }
    let eps = noise.epsilon;
    // uniform trapezoid; cells aligned with (and subdividing) the path grid,
    // since the integrands are smooth between path nodes but kinked at them
    let trapezoid = |lo: f64, hi: f64, g: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
        // heavy subdivision: quadrature error on R3 is amplified through
        // exp(R3 * sup 1/z^2) when assembling R4 and R5
        let n = (16.0 * (hi - lo) / path.dt_w()).ceil().max(1.0) as usize;
        let h = (hi - lo) / n as f64;
        let mut acc = 0.5 * (g(lo)? + g(hi)?);
        for k in 1..n {
            acc += g(lo + k as f64 * h)?;
        }
        Ok(acc * h)
    };
    let i_full = trapezoid(t_truncate, 0.0, &|s| {
        Ok(path.z_of(s, eps)?.powi(2) * (nu * s).exp())
    })?;
    let i_half = trapezoid(t_truncate, 0.0, &|s| {
        Ok(path.z_of(s, eps)?.powi(2) * (0.5 * nu * s).exp())
    })?;
    // quantities over [-1, 0]
    let z4_int = trapezoid(-1.0, 0.0, &|s| Ok(path.z_of(s, eps)?.powi(4)))?;
    let m = (1.0 / path.dt_w()).ceil() as usize;
    let mut sup_inv_z2 = 0.0_f64;
    let mut sup_z4 = 0.0_f64;
    for k in 0..=m {
        let s = -(k as f64) / m as f64;
        let z = path.z_of(s, eps)?;
        sup_inv_z2 = sup_inv_z2.max(1.0 / (z * z));
        sup_z4 = sup_z4.max(z.powi(4));
    }
    let f_sq = params.force.norm_l2().powi(2);
    let c_f = f_sq;
    let r1_small = a_const.sqrt() * r0.powi(3) * i_full;
    let r2_small = i_half;
    let r_f_nu = f_sq * i_full;
    let r1 = nu.exp() * (1.0 + (2.0 / nu) * (r1_small + r2_small + r_f_nu));
    let r2 = r0 * r0 / (2.0 * params.dcoef);
    let r3 = r1 * r1 / nu + r0.powi(3) / (nu * nu) * (z4_int + r2 + c_f);
    let r3_small = r3 * sup_inv_z2;
    let r4_small = r0.powi(6) * sup_z4;
    let r5_small = c_f + z4_int;
    let r4 = r3_small.exp() * (r3 * r3 + 0.5 * params.dcoef * r2 + r4_small + r5_small);
    let r6_small = a_const * r3 * sup_inv_z2;
    let r5 = r6_small.exp() * r2;

    // tail bound: for s <= t_truncate, |omega(s)| <= c|s| with the measured
    // growth ratio c, so z^2 e^{nu s} <= e^{(nu - 2 eps c) s} when positive
    let mut growth = 0.0_f64;
    let mut s = t_truncate;
    while s >= path.t_min() {
        growth = growth.max((path.omega(s) / s).abs());
        s -= 1.0;
    }
    let rate = nu - 2.0 * eps * growth;
    let kernel_tail = if rate > 0.0 {
        (rate * t_truncate).exp() / rate
    } else {
        f64::INFINITY
    };
    let truncation_tail_bound =
        nu.exp() * (2.0 / nu) * (a_const.sqrt() * r0.powi(3) + 1.0 + f_sq) * kernel_tail;

    Ok(AbsorbingRadii {
        r0,
        r1,
        r2,
        r3,
        r4,
        r5,
        truncation_tail_bound,
    })
}

/// One pullback absorption probe: per start level the worst H norm over the
/// sample ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbsorptionReport {
    pub ball_radius: f64,
    pub ensemble_radius: f64,
    /// `(t_back, worst H norm, inside)` per dyadic pullback level
    pub levels: Vec<(f64, f64, bool)>,
    /// earliest pullback depth from which all deeper levels stay inside
    pub entry_time: Option<f64>,
    pub absorbed: bool,
}

/// Draws `n_samples` states of H norm below `ball_e`, pulls each back from
/// dyadic depths `1, 2, 4, ..., max_depth`, and reports entry into the ball
/// `B(0, radius + gauge)`.
///
/// The ionic content of the samples is capped at `ion_bound` (the same bound
/// the radii were computed with): the ion means are conserved and the ion
/// norms only dissipate, so absorption can only hold for data whose ionic
/// part already fits the ball. The large excursion goes into the velocity,
/// the component the flow actually contracts.
#[allow(clippy::too_many_arguments)]
pub fn verify_absorption(
    path: &WienerPath,
    noise: &NoiseParams,
    params: &PhysicalParams,
    cfg: &IntegratorConfig,
    radius: f64,
    gauge: f64,
    ball_e: f64,
    ion_bound: f64,
    n_samples: usize,
    max_depth: f64,
    seed: u64,
) -> Result<AbsorptionReport> {
    use rand::SeedableRng;
    if n_samples == 0 {
        return Err(Error::EmptyCloud);
    }
    let grid = params.force.grid();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_samples);
    // positive mean dominating its own fluctuation keeps sigma nonnegative
    let mean = ion_bound / (4.0 * crate::spectral::TWO_PI);
    for _ in 0..n_samples {
        let mut x = NpnsState::random(grid, &mut rng, 1.0, mean, 0.5 * mean, Gauge::Physical);
        let ion = (x.sigma.norm_l2().powi(2) + x.rho.norm_l2().powi(2)).sqrt();
        debug_assert!(ion <= ion_bound);
        let target = 0.9 * ball_e;
        let vel_target = (target * target - ion * ion).max(0.0).sqrt();
        x.velocity.scale(vel_target / x.velocity.norm_l2());
        samples.push(x);
    }
    let mut levels = Vec::new();
    let mut depth = 1.0;
    while depth <= max_depth * (1.0 + 1e-12) {
        let mut worst = 0.0_f64;
        for x0 in &samples {
            let end = pullback(x0, depth, path, noise, params, cfg)?;
            worst = worst.max(end.norm_h());
        }
        levels.push((depth, worst, worst <= radius + gauge));
        depth *= 2.0;
    }
    // entry = first level such that it and all deeper levels are inside
    let mut entry_time = None;
    for (i, (d, _, inside)) in levels.iter().enumerate() {
        if *inside && levels[i..].iter().all(|l| l.2) {
            entry_time = Some(*d);
            break;
        }
    }
    Ok(AbsorptionReport {
        ball_radius: radius,
        ensemble_radius: ball_e,
        absorbed: entry_time.is_some(),
        levels,
        entry_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Gauge;
    use crate::integrator::{integrate, Scheme};
    use crate::spectral::{Grid, SpectralField, VectorField};
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid16() -> Grid {
        Grid::new(16).unwrap()
    }

    fn params_zero_force() -> PhysicalParams {
        PhysicalParams::new(1.0, 1.0, 1.0, VectorField::zero(grid16())).unwrap()
    }

    fn one(_: f64) -> Result<f64> {
        Ok(1.0)
    }

    fn run_deterministic(
        state: &NpnsState,
        params: &PhysicalParams,
        dt: f64,
        steps: usize,
    ) -> Vec<DiagnosticsRecord> {
        let cfg = IntegratorConfig::new(dt, Scheme::IfRk2).unwrap();
        integrate(state, params, &cfg, &one, steps, 1).unwrap().records
    }

    #[test]
    fn zero_trajectory_passes_everything() {
        let grid = grid16();
        let params = params_zero_force();
        let state = NpnsState::zero(grid, Gauge::Physical);
        let recs = run_deterministic(&state, &params, 0.01, 20);
        let r1 = check_mass_dissipation(&recs, &params, 0.01, DEFAULT_C_CHECK).unwrap();
        assert_eq!(r1.status, CheckStatus::Passed);
        assert!(r1.worst_residual.abs() < 1e-12);
        let r2 = check_decay_h(&recs, &params, 0.01).unwrap();
        assert_eq!(r2.status, CheckStatus::Passed);
        let r3 = check_velocity_energy(&recs, &params, 0.01, DEFAULT_C_CHECK).unwrap();
        assert_eq!(r3.status, CheckStatus::Passed);
        let r4 = check_gradient_decay_v(&recs, &params).unwrap();
        assert_eq!(r4.status, CheckStatus::Passed);
        let r5 = check_time_averaged_bound(&recs, &params, 0.05).unwrap();
        assert_eq!(r5.status, CheckStatus::Passed);
        assert!(r5.rows.iter().all(|r| r.lhs == 0.0));
    }

    fn heat_state(grid: Grid) -> NpnsState {
        let mut sigma = SpectralField::zero(grid);
        sigma.set_mode_pair(1, 0, Complex64::new(0.5, 0.0)); // cos x
        NpnsState {
            velocity: VectorField::zero(grid),
            sigma,
            rho: SpectralField::zero(grid),
            time: 0.0,
            gauge: Gauge::Physical,
        }
    }

    #[test]
    fn heat_trajectory_dissipation_residual_is_second_order() {
        let grid = grid16();
        let params = params_zero_force();
        let state = heat_state(grid);
        let worst = |dt: f64| {
            let recs = run_deterministic(&state, &params, dt, (0.2 / dt).round() as usize);
            check_mass_dissipation(&recs, &params, dt, 1e6)
                .unwrap()
                .rows
                .iter()
                .map(|r| r.residual.abs())
                .fold(0.0_f64, f64::max)
        };
        let (w1, w2) = (worst(0.02), worst(0.01));
        let (_, order) = calibrate_tolerance(w1, w2, 0.02);
        assert!(
            (order - 2.0).abs() < 0.3,
            "dissipation residual order {order:.2} (worst {w1:.3e} -> {w2:.3e})"
        );
    }

    #[test]
    fn heat_trajectory_saturates_decay_bound() {
        // sigma = cos x decays exactly at the Poincare-sharp rate e^{-2Dt}
        let grid = grid16();
        let params = params_zero_force();
        let recs = run_deterministic(&heat_state(grid), &params, 1e-3, 500);
        let rep = check_decay_h(&recs, &params, 1e-3).unwrap();
        assert_eq!(rep.status, CheckStatus::Passed);
        // saturation: the measured energy tracks the bound to within delta_tol
        let last = rep.rows.last().unwrap();
        assert!(last.lhs > 0.0 && last.lhs > 0.99 * last.rhs / (1.0 + rep.fitted["delta_tol"]));
    }

    #[test]
    fn heat_trajectory_gradient_decay_rate_is_2d() {
        let grid = grid16();
        let params = PhysicalParams::new(1.0, 0.7, 1.0, VectorField::zero(grid)).unwrap();
        let recs = run_deterministic(&heat_state(grid), &params, 1e-3, 2000);
        let rep = check_gradient_decay_v(&recs, &params).unwrap();
        assert_eq!(rep.status, CheckStatus::Passed);
        let a = rep.fitted["a"];
        assert!(
            (a - 2.0 * params.dcoef).abs() < 0.01 * 2.0 * params.dcoef,
            "fitted rate {a} vs 2D = {}",
            2.0 * params.dcoef
        );
    }

    #[test]
    fn heat_trajectory_time_averaged_integral_matches_closed_form() {
        let grid = grid16();
        let params = params_zero_force();
        let dt = 1e-3;
        let recs = run_deterministic(&heat_state(grid), &params, dt, 1000);
        let t_window = 0.5;
        let rep = check_time_averaged_bound(&recs, &params, t_window).unwrap();
        // ||grad sigma(t)||^2 = 2 pi^2 (0.5)^2... with sigma = 0.5 cos x: ||sigma||^2 = pi^2/2
        let g0 = recs[0].sigma_h1_sq;
        let d2 = 2.0 * params.dcoef;
        let exact = |t: f64| g0 / d2 * ((-d2 * t).exp() - (-d2 * (t + t_window)).exp());
        for row in &rep.rows {
            let want = exact(row.time);
            assert!(
                (row.lhs - want).abs() < 0.01 * want,
                "window at {}: {} vs {}",
                row.time,
                row.lhs,
                want
            );
        }
        assert_eq!(rep.fitted["windows_monotone_decreasing"], 1.0);
    }

    fn positive_random_state(grid: Grid, seed: u64) -> NpnsState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // mean 2 dominates the fluctuations, so c1 and c2 stay positive
        NpnsState::random(grid, &mut rng, 0.4, 2.0, 0.3, Gauge::Physical)
    }

    #[test]
    fn nonlinear_run_has_no_dissipation_violations() {
        let grid = grid16();
        let force = PhysicalParams::shear_force(grid, 1.0);
        let params = PhysicalParams::new(1.0, 1.0, 1.0, force).unwrap();
        let dt = 1e-3;
        let state = positive_random_state(grid, 3);
        let recs = run_deterministic(&state, &params, dt, 2000);
        assert!(positivity_holds(&recs), "test premise: positivity kept");
        let rep = check_mass_dissipation(&recs, &params, dt, DEFAULT_C_CHECK).unwrap();
        assert_eq!(rep.status, CheckStatus::Passed);
        assert_eq!(rep.violations, 0);
        let dec = check_decay_h(&recs, &params, dt).unwrap();
        assert_eq!(dec.status, CheckStatus::Passed);
    }

    #[test]
    fn velocity_energy_clean_decay_without_sources() {
        // f = 0, rho = 0: ||v(t)||^2 <= e^{-nu (t-t0)} ||v(t0)||^2
        let grid = grid16();
        let params = params_zero_force();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let state = NpnsState {
            velocity: VectorField::random_divergence_free(grid, &mut rng, 3, 1.0),
            sigma: SpectralField::zero(grid),
            rho: SpectralField::zero(grid),
            time: 0.0,
            gauge: Gauge::Physical,
        };
        let dt = 1e-3;
        let recs = run_deterministic(&state, &params, dt, 1000);
        let rep = check_velocity_energy(&recs, &params, dt, DEFAULT_C_CHECK).unwrap();
        assert_eq!(rep.status, CheckStatus::Passed);
        let last = recs.last().unwrap();
        let bound = (-params.nu * last.time).exp() * recs[0].v_l2_sq;
        assert!(last.v_l2_sq <= 1.001 * bound);
    }

    #[test]
    fn velocity_energy_steady_state_bound() {
        // single-mode force, rho = 0: the flow converges to u* = f / nu and
        // the stationary closed-form level is (2/nu^2) ||f||^2
        let grid = grid16();
        let amp = 0.8;
        let force = PhysicalParams::shear_force(grid, amp);
        let params = PhysicalParams::new(1.0, 1.0, 1.0, force.clone()).unwrap();
        let state = NpnsState {
            velocity: VectorField::zero(grid),
            sigma: SpectralField::zero(grid),
            rho: SpectralField::zero(grid),
            time: 0.0,
            gauge: Gauge::Physical,
        };
        let dt = 1e-3;
        let recs = run_deterministic(&state, &params, dt, 10_000);
        let rep = check_velocity_energy(&recs, &params, dt, DEFAULT_C_CHECK).unwrap();
        assert_eq!(rep.status, CheckStatus::Passed);
        let f_sq = force.norm_l2().powi(2);
        let last = recs.last().unwrap();
        // steady state reached up to the e^{-nu t} transient:
        // ||u*||^2 = ||f||^2 / nu^2 for the shear mode
        assert!((last.v_l2_sq - f_sq).abs() < 1e-3 * f_sq);
        assert!(last.v_l2_sq <= 2.0 / params.nu.powi(2) * f_sq);
    }

    #[test]
    fn stochastic_run_velocity_energy_holds() {
        let grid = grid16();
        let force = PhysicalParams::shear_force(grid, 1.0);
        let params = PhysicalParams::new(1.0, 1.0, 1.0, force).unwrap();
        let noise = NoiseParams::new(0.2).unwrap();
        let dt = 1e-3;
        let cfg = IntegratorConfig::new(dt, Scheme::IfRk2).unwrap();
        let path = WienerPath::sample(91, -1.0, 3.0, dt).unwrap();
        let x0 = positive_random_state(grid, 7);
        let traj = crate::integrator::cocycle_traj(&x0, 2.0, &path, &noise, &params, &cfg, 1)
            .unwrap();
        let rep = check_velocity_energy(&traj.records, &params, dt, DEFAULT_C_CHECK).unwrap();
        assert_eq!(rep.status, CheckStatus::Passed, "notes: {:?}", rep.notes);
    }

    #[test]
    fn radii_deterministic_limit() {
        let params = params_zero_force();
        let noise = NoiseParams::new(0.0).unwrap();
        let t_star: f64 = -30.0;
        let path = WienerPath::sample(1, t_star, 0.0, 0.01).unwrap();
        let radii =
            compute_absorbing_radii(&path, &noise, &params, t_star, 1.0, 0.0).unwrap();
        // z = 1: R2 = R0^2/(2D) exactly
        assert_eq!(radii.r2, 0.5);
        // with A = 0 and f = 0 only the e^{nu s / 2} integral contributes:
        // R1 = e [1 + 2 * 2 (1 - e^{t*/2})]
        let expect_r1 = 1.0_f64.exp() * (1.0 + 4.0 * (1.0 - (0.5 * t_star).exp()));
        assert!(
            (radii.r1 - expect_r1).abs() < 1e-3 * expect_r1,
            "R1 {} vs {}",
            radii.r1,
            expect_r1
        );
        assert!(radii.truncation_tail_bound < 1e-11);
    }

    #[test]
    fn radii_match_refined_quadrature() {
        // parameters kept small enough that the exponentials in R4, R5 stay
        // finite in f64 (the assembled bounds grow doubly exponentially)
        let grid = grid16();
        let params = PhysicalParams::new(2.0, 1.0, 1.0, VectorField::zero(grid)).unwrap();
        let noise = NoiseParams::new(0.05).unwrap();
        let path = WienerPath::sample(13, -30.0, 0.0, 0.02).unwrap();
        let (r0, a_const) = (0.5, 0.01);
        let coarse =
            compute_absorbing_radii(&path, &noise, &params, -30.0, r0, a_const).unwrap();
        // 10x finer quadrature of the same piecewise-linear path
        let fine_dt = 0.002;
        let i_min = (-30.0 / fine_dt) as i64;
        let vals: Vec<f64> = (i_min..=0)
            .map(|j| path.omega(j as f64 * fine_dt))
            .collect();
        let fine_path = WienerPath::from_values(fine_dt, i_min, vals).unwrap();
        let fine =
            compute_absorbing_radii(&fine_path, &noise, &params, -30.0, r0, a_const).unwrap();
        for (a, b, name) in [
            (coarse.r1, fine.r1, "R1"),
            (coarse.r3, fine.r3, "R3"),
            (coarse.r4, fine.r4, "R4"),
            (coarse.r5, fine.r5, "R5"),
        ] {
            assert!(
                (a - b).abs() < 1e-4 * b.abs(),
                "{name}: coarse {a} vs refined {b}"
            );
        }
    }

    #[test]
    fn radii_monotone_in_window() {
        let params = params_zero_force();
        let noise = NoiseParams::new(0.15).unwrap();
        let path = WienerPath::sample(29, -80.0, 0.0, 0.05).unwrap();
        let a = compute_absorbing_radii(&path, &noise, &params, -40.0, 1.0, 0.5).unwrap();
        let b = compute_absorbing_radii(&path, &noise, &params, -80.0, 1.0, 0.5).unwrap();
        assert!(b.r1 >= a.r1 - 1e-12);
        assert!(b.truncation_tail_bound <= a.truncation_tail_bound);
    }

    #[test]
    fn radii_reject_short_window() {
        let params = params_zero_force();
        let noise = NoiseParams::new(0.0).unwrap();
        let path = WienerPath::sample(1, -5.0, 0.0, 0.1).unwrap();
        assert!(matches!(
            compute_absorbing_radii(&path, &noise, &params, -5.0, 1.0, 0.0),
            Err(Error::InsufficientWindow { .. })
        ));
    }

    #[test]
    fn absorption_trivial_cases() {
        let params = params_zero_force();
        let noise = NoiseParams::new(0.0).unwrap();
        let cfg = IntegratorConfig::new(2e-3, Scheme::IfRk2).unwrap();
        let path = WienerPath::sample(3, -8.0, 0.0, 2e-3).unwrap();
        // f = 0, eps = 0: everything decays to 0, tiny ensemble absorbed fast
        let rep = verify_absorption(
            &path, &noise, &params, &cfg, 0.5, 0.0, 0.3, 0.1, 2, 4.0, 11,
        )
        .unwrap();
        assert!(rep.absorbed, "levels: {:?}", rep.levels);
        assert!(rep.entry_time.unwrap() <= 4.0);
    }

    #[test]
    fn report_csv_shape() {
        let grid = grid16();
        let params = params_zero_force();
        let recs = run_deterministic(&heat_state(grid), &params, 0.01, 10);
        let rep = check_mass_dissipation(&recs, &params, 0.01, DEFAULT_C_CHECK).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "time,lhs,rhs,residual,pass");
        assert_eq!(text.lines().count(), rep.rows.len() + 1);
    }
}
