//! Time stepping: RK4 on the primitive system, a Duhamel exponential
//! integrator on the damped-wave form, and RK4 on the `(u, b)` form.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::{RunConfig, StepperKind};
use crate::diagnostics::{energy, energy_residuals, norm_report, NormParams, NormReport};
use crate::kernels::k0_k1;
use crate::nonlinear::{forcing_terms_from, time_derivative_fields_with, Physics, Tendency};
use crate::snapshot::{write_snapshot, SnapshotError};
use crate::spectral::{from_physical_many, leray_project, to_physical_many, Grid2D, SpectralField};
use crate::state::{make_initial_data, InitError, State};
use crate::Complex64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StepError {
    #[error("time step {dt} exceeds the stability limit {dt_max}")]
    Cfl { dt: f64, dt_max: f64 },
}

/// Largest admissible step for the explicit RK4 steppers:
///
/// `0.5 / ((max|u| + max|bx|)·kx_max + (max|v| + max|by|)·ky_max + 1)`
///
/// with `b = (1 + ∂yψ, −∂xψ)`, so the magnetic wave speed is covered
/// alongside advection.
pub fn dt_max(state: &State) -> f64 {
    let g = state.grid();
    let s = to_physical_many(&[&state.u, &state.v, &state.psi.dx(), &state.psi.dy()]);
    let sup = |v: &[f64], shift: f64| v.iter().fold(0.0f64, |m, x| m.max((x + shift).abs()));
    let (mu, mv, mbx, mby) = (sup(&s[0], 0.0), sup(&s[1], 0.0), sup(&s[3], 1.0), sup(&s[2], 0.0));
    0.5 / ((mu + mbx) * g.kx_max() + (mv + mby) * g.ky_max() + 1.0)
}

fn dt_max_b(state: &BState) -> f64 {
    let g = state.u.grid();
    let s = to_physical_many(&[&state.u, &state.v, &state.bx, &state.by]);
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    0.5 / ((sup(&s[0]) + sup(&s[2])) * g.kx_max() + (sup(&s[1]) + sup(&s[3])) * g.ky_max() + 1.0)
}

fn check_cfl(dt: f64, limit: f64) -> Result<(), StepError> {
    if dt > limit {
        Err(StepError::Cfl { dt, dt_max: limit })
    } else {
        Ok(())
    }
}

/// `(u1, v1, ψ1)`: the time derivatives at the initial time.
pub fn initial_time_derivatives(state0: &State) -> Tendency {
    time_derivative_fields_with(state0, Physics::default())
}

fn projected_tendency(state: &State, physics: Physics) -> Tendency {
    let mut d = time_derivative_fields_with(state, physics);
    let (du, dv) = leray_project(&d.du, &d.dv);
    d.du = du;
    d.dv = dv;
    d
}

fn advance(base: &State, d: &Tendency, h: f64) -> State {
    let mut s = base.clone();
    s.u.axpy(h, &d.du);
    s.v.axpy(h, &d.dv);
    s.psi.axpy(h, &d.dpsi);
    s.t = base.t + h;
    s
}

pub fn step_primitive(state: &State, dt: f64) -> Result<State, StepError> {
    step_primitive_with(state, dt, Physics::default())
}

/// Classical RK4; every stage tendency is Leray-projected.
pub fn step_primitive_with(state: &State, dt: f64, physics: Physics) -> Result<State, StepError> {
    check_cfl(dt, dt_max(state))?;
    let k1 = projected_tendency(state, physics);
    let k2 = projected_tendency(&advance(state, &k1, 0.5 * dt), physics);
    let k3 = projected_tendency(&advance(state, &k2, 0.5 * dt), physics);
    let k4 = projected_tendency(&advance(state, &k3, dt), physics);
    let mut out = state.clone();
    for (w, k) in [(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)] {
        let h = dt * w / 6.0;
        out.u.axpy(h, &k.du);
        out.v.axpy(h, &k.dv);
        out.psi.axpy(h, &k.dpsi);
    }
    out.t = state.t + dt;
    out.project();
    Ok(out)
}

/// `(u, v, ψ)` with their first time derivatives.
#[derive(Debug, Clone)]
pub struct SecondOrderState {
    pub u: SpectralField,
    pub v: SpectralField,
    pub psi: SpectralField,
    pub ut: SpectralField,
    pub vt: SpectralField,
    pub psit: SpectralField,
    pub t: f64,
}

impl SecondOrderState {
    /// Seeds the time derivatives from the first-order system.
    pub fn from_state(state: &State) -> Self {
        Self::from_state_with(state, Physics::default())
    }

    pub fn from_state_with(state: &State, physics: Physics) -> Self {
        let d = time_derivative_fields_with(state, physics);
        Self {
            u: state.u.clone(),
            v: state.v.clone(),
            psi: state.psi.clone(),
            ut: d.du,
            vt: d.dv,
            psit: d.dpsi,
            t: state.t,
        }
    }

    pub fn state(&self) -> State {
        State {
            u: self.u.clone(),
            v: self.v.clone(),
            psi: self.psi.clone(),
            t: self.t,
        }
    }

    pub fn tendency(&self) -> Tendency {
        Tendency {
            du: self.ut.clone(),
            dv: self.vt.clone(),
            dpsi: self.psit.clone(),
        }
    }

    pub fn has_non_finite(&self) -> bool {
        [&self.u, &self.v, &self.psi, &self.ut, &self.vt, &self.psit]
            .iter()
            .any(|f| f.has_non_finite())
    }
}

/// `F = (F1, F2, F0)` in the order of `(u, v, ψ)`, or zero when the
/// nonlinearity is switched off.
fn forcing(s: &SecondOrderState, physics: Physics) -> [SpectralField; 3] {
    if !physics.nonlinear {
        let z = SpectralField::zeros(s.u.grid());
        return [z.clone(), z.clone(), z];
    }
    let f = forcing_terms_from(&s.state(), &s.tendency());
    [f.f1, f.f2, f.f0]
}

/// One Duhamel update of a component over `dt`:
///
/// ```text
/// Φ(t+dt)  = K0 Φ + K1(½Φ + Φt) + (dt/2)·K1 F_n
/// Φt(t+dt) = K̇0 Φ + K̇1(½Φ + Φt) + (dt/2)·(K̇1 F_n + F_end)
/// ```
///
/// (trapezoidal quadrature of `∫K1(dt−s)F(s)ds`; `K1(0) = 0`, `K̇1(0) = 1`).
fn duhamel_component(
    dt: f64,
    phi: &SpectralField,
    phi_t: &SpectralField,
    f_n: &SpectralField,
    f_end: &SpectralField,
) -> (SpectralField, SpectralField) {
    let g = phi.grid();
    let ny = g.ny();
    let mut p = SpectralField::zeros(g);
    let mut pt = SpectralField::zeros(g);
    let (a, at, fa, fb) = (phi.coeffs(), phi_t.coeffs(), f_n.coeffs(), f_end.coeffs());
    {
        let (dst, dst_t) = (p.coeffs_mut(), pt.coeffs_mut());
        for ix in 0..g.nx() {
            let xi = g.kx()[ix];
            let (k0, k1) = k0_k1(dt, xi);
            let k0d = -0.5 * k0 + (0.25 - xi * xi) * k1;
            let k1d = k0 - 0.5 * k1;
            for i in ix * ny..(ix + 1) * ny {
                let b: Complex64 = 0.5 * a[i] + at[i];
                dst[i] = k0 * a[i] + k1 * b + 0.5 * dt * k1 * fa[i];
                dst_t[i] = k0d * a[i] + k1d * b + 0.5 * dt * (k1d * fa[i] + fb[i]);
            }
        }
    }
    (p, pt)
}

fn duhamel_all(
    s: &SecondOrderState,
    dt: f64,
    f_n: &[SpectralField; 3],
    f_end: &[SpectralField; 3],
) -> SecondOrderState {
    let (u, ut) = duhamel_component(dt, &s.u, &s.ut, &f_n[0], &f_end[0]);
    let (v, vt) = duhamel_component(dt, &s.v, &s.vt, &f_n[1], &f_end[1]);
    let (psi, psit) = duhamel_component(dt, &s.psi, &s.psit, &f_n[2], &f_end[2]);
    SecondOrderState {
        u,
        v,
        psi,
        ut,
        vt,
        psit,
        t: s.t + dt,
    }
}

pub fn step_duhamel(state: &SecondOrderState, dt: f64) -> SecondOrderState {
    step_duhamel_with(state, dt, Physics::default())
}

/// Exact propagation of the homogeneous part plus a trapezoidal Duhamel
/// integral; the end-point forcing is evaluated once on a predicted state.
pub fn step_duhamel_with(state: &SecondOrderState, dt: f64, physics: Physics) -> SecondOrderState {
    let f_n = forcing(state, physics);
    if !physics.nonlinear {
        return duhamel_all(state, dt, &f_n, &f_n);
    }
    let predicted = duhamel_all(state, dt, &f_n, &f_n);
    let f_end = forcing(&predicted, physics);
    duhamel_all(state, dt, &f_n, &f_end)
}

/// Velocity and full magnetic field `b = ∇⊥(y + ψ)`. The mean of `ψ`,
/// which `b` does not see, is carried alongside.
#[derive(Debug, Clone)]
pub struct BState {
    pub u: SpectralField,
    pub v: SpectralField,
    pub bx: SpectralField,
    pub by: SpectralField,
    pub psi_mean: f64,
    pub t: f64,
}

impl BState {
    pub fn from_state(s: &State) -> Self {
        let mut bx = s.psi.dy();
        bx.coeffs_mut()[0] += Complex64::new(1.0, 0.0);
        Self {
            u: s.u.clone(),
            v: s.v.clone(),
            bx,
            by: -s.psi.dx(),
            psi_mean: s.psi.mean(),
            t: s.t,
        }
    }

    /// Recovers `ψ` from `Δψ = ∂y bx − ∂x by`.
    pub fn to_state(&self) -> State {
        let mut psi = (self.bx.dy() - self.by.dx()).inverse_laplacian();
        psi.coeffs_mut()[0] = Complex64::new(self.psi_mean, 0.0);
        State {
            u: self.u.clone(),
            v: self.v.clone(),
            psi,
            t: self.t,
        }
    }

    pub fn divergence_defects(&self) -> (f64, f64) {
        use crate::spectral::divergence_defect;
        (
            divergence_defect(&self.u, &self.v),
            divergence_defect(&self.bx, &self.by),
        )
    }

    pub fn has_non_finite(&self) -> bool {
        [&self.u, &self.v, &self.bx, &self.by]
            .iter()
            .any(|f| f.has_non_finite())
    }
}

struct BTendency {
    du: SpectralField,
    dv: SpectralField,
    dbx: SpectralField,
    dby: SpectralField,
    dmean: f64,
}

/// `u_t = −u − P(u·∇u − b·∇b)`, `b_t = P(b·∇u − u·∇b)`; the magnetic
/// pressure gradient is removed by the projection `P`.
fn b_tendency(s: &BState, physics: Physics) -> BTendency {
    let g = s.u.grid();
    let (fu, fv, gbx, gby) = if physics.nonlinear {
        let fields = [
            s.u.clone(),
            s.v.clone(),
            s.bx.clone(),
            s.by.clone(),
            s.u.dx(),
            s.u.dy(),
            s.v.dx(),
            s.v.dy(),
            s.bx.dx(),
            s.bx.dy(),
            s.by.dx(),
            s.by.dy(),
        ];
        let refs: Vec<&SpectralField> = fields.iter().collect();
        let p = to_physical_many(&refs);
        let (u, v, bx, by) = (&p[0], &p[1], &p[2], &p[3]);
        let (ux, uy, vx, vy) = (&p[4], &p[5], &p[6], &p[7]);
        let (bxx, bxy, byx, byy) = (&p[8], &p[9], &p[10], &p[11]);
        let n = u.len();
        let mut out = vec![vec![0.0; n]; 4];
        for i in 0..n {
            // u·∇u − b·∇b
            out[0][i] = u[i] * ux[i] + v[i] * uy[i] - bx[i] * bxx[i] - by[i] * bxy[i];
            out[1][i] = u[i] * vx[i] + v[i] * vy[i] - bx[i] * byx[i] - by[i] * byy[i];
            // b·∇u − u·∇b
            out[2][i] = bx[i] * ux[i] + by[i] * uy[i] - u[i] * bxx[i] - v[i] * bxy[i];
            out[3][i] = bx[i] * vx[i] + by[i] * vy[i] - u[i] * byx[i] - v[i] * byy[i];
        }
        let mut f = from_physical_many(g, &out).into_iter().map(SpectralField::dealiased);
        let (a, b, c, d) = (
            f.next().unwrap(),
            f.next().unwrap(),
            f.next().unwrap(),
            f.next().unwrap(),
        );
        (-a, -b, c, d)
    } else {
        // linearized about b = (1, 0)
        (s.bx.dx(), s.by.dx(), s.u.dx(), s.v.dx())
    };
    let (pu, pv) = leray_project(&fu, &fv);
    let (pbx, pby) = leray_project(&gbx, &gby);
    BTendency {
        du: pu - &s.u,
        dv: pv - &s.v,
        dbx: pbx,
        dby: pby,
        dmean: -s.v.mean(),
    }
}

fn advance_b(base: &BState, d: &BTendency, h: f64) -> BState {
    let mut s = base.clone();
    s.u.axpy(h, &d.du);
    s.v.axpy(h, &d.dv);
    s.bx.axpy(h, &d.dbx);
    s.by.axpy(h, &d.dby);
    s.psi_mean += h * d.dmean;
    s.t = base.t + h;
    s
}

pub fn step_bform(state: &BState, dt: f64) -> Result<BState, StepError> {
    step_bform_with(state, dt, Physics::default())
}

/// RK4 on the `(u, b)` system with both fields projected at every stage.
pub fn step_bform_with(state: &BState, dt: f64, physics: Physics) -> Result<BState, StepError> {
    check_cfl(dt, dt_max_b(state))?;
    let k1 = b_tendency(state, physics);
    let k2 = b_tendency(&advance_b(state, &k1, 0.5 * dt), physics);
    let k3 = b_tendency(&advance_b(state, &k2, 0.5 * dt), physics);
    let k4 = b_tendency(&advance_b(state, &k3, dt), physics);
    let mut out = state.clone();
    for (w, k) in [(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)] {
        let h = dt * w / 6.0;
        out.u.axpy(h, &k.du);
        out.v.axpy(h, &k.dv);
        out.bx.axpy(h, &k.dbx);
        out.by.axpy(h, &k.dby);
        out.psi_mean += h * k.dmean;
    }
    out.t = state.t + dt;
    let (u, v) = leray_project(&out.u, &out.v);
    let (bx, by) = leray_project(&out.bx, &out.by);
    (out.u, out.v, out.bx, out.by) = (u, v, bx, by);
    Ok(out)
}

/// `⟨∇⟩^σ(u·∇f) − u·∇⟨∇⟩^σ f`.
pub fn commutator(u: &SpectralField, v: &SpectralField, f: &SpectralField, sigma: f64) -> SpectralField {
    use crate::nonlinear::transport;
    transport(u, v, f).bessel(sigma) - transport(u, v, &f.bessel(sigma))
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Init(#[from] InitError),
    #[error("non-finite values at t = {t}; last healthy time {last_healthy_t}")]
    NumericalAbort { last_healthy_t: f64, t: f64 },
    #[error("at t = {t}: {source}")]
    Step { t: f64, source: StepError },
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub reports: Vec<NormReport>,
    /// Per-step `(t, E, ‖u‖₂²)`.
    pub energy: Vec<(f64, f64, f64)>,
    pub final_state: State,
    pub steps: usize,
    /// Largest relative velocity divergence seen at report times.
    pub max_divergence: f64,
    pub snapshots: Vec<PathBuf>,
}

impl RunRecord {
    /// Energy rows with residuals over the per-step series.
    pub fn energy_rows(&self) -> Vec<crate::diagnostics::EnergyRow> {
        let ts: Vec<f64> = self.energy.iter().map(|e| e.0).collect();
        let es: Vec<f64> = self.energy.iter().map(|e| e.1).collect();
        let ks: Vec<f64> = self.energy.iter().map(|e| e.2).collect();
        energy_residuals(&ts, &es, &ks)
    }

    /// `(t, weighted value)` for one report component.
    pub fn series(&self, key: &str) -> Vec<(f64, f64)> {
        self.reports
            .iter()
            .filter_map(|r| r.get(key).map(|v| (r.t, v)))
            .collect()
    }
}

enum Stepper {
    Primitive(State),
    Duhamel(SecondOrderState),
    BForm(BState),
}

impl Stepper {
    fn state_and_tendency(&self, physics: Physics) -> (State, Tendency) {
        match self {
            Stepper::Primitive(s) => (s.clone(), time_derivative_fields_with(s, physics)),
            Stepper::Duhamel(s) => (s.state(), s.tendency()),
            Stepper::BForm(b) => {
                let s = b.to_state();
                let d = time_derivative_fields_with(&s, physics);
                (s, d)
            }
        }
    }

    fn t(&self) -> f64 {
        match self {
            Stepper::Primitive(s) => s.t,
            Stepper::Duhamel(s) => s.t,
            Stepper::BForm(s) => s.t,
        }
    }

    fn has_non_finite(&self) -> bool {
        match self {
            Stepper::Primitive(s) => s.has_non_finite(),
            Stepper::Duhamel(s) => s.has_non_finite(),
            Stepper::BForm(s) => s.has_non_finite(),
        }
    }

    fn energy(&self) -> (f64, f64) {
        match self {
            Stepper::Primitive(s) => energy(s),
            Stepper::Duhamel(s) => energy(&s.state()),
            Stepper::BForm(b) => {
                let ku = b.u.l2_norm().powi(2) + b.v.l2_norm().powi(2);
                let mut bx = b.bx.clone();
                bx.coeffs_mut()[0] = Complex64::new(0.0, 0.0);
                (ku + bx.l2_norm().powi(2) + b.by.l2_norm().powi(2), ku)
            }
        }
    }

    fn step(&mut self, dt: f64, physics: Physics) -> Result<(), StepError> {
        match self {
            Stepper::Primitive(s) => *s = step_primitive_with(s, dt, physics)?,
            Stepper::Duhamel(s) => *s = step_duhamel_with(s, dt, physics),
            Stepper::BForm(s) => *s = step_bform_with(s, dt, physics)?,
        }
        Ok(())
    }
}

/// Line-at-a-time CSV writer; each row is a single flushed write.
struct CsvSink {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvSink {
    fn create(path: &Path) -> Result<Self, RunError> {
        let io_err = |source| RunError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        let file = File::create(path).map_err(io_err)?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    fn line(&mut self, fields: &[String]) -> Result<(), RunError> {
        let mut row = fields.join(",");
        row.push('\n');
        self.out
            .write_all(row.as_bytes())
            .and_then(|_| self.out.flush())
            .map_err(|source| RunError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

pub fn csv_header(report: &NormReport) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain(report.keys().map(str::to_string))
        .chain(["E".to_string(), "residual".to_string()])
        .collect()
}

fn csv_row(report: &NormReport, e: f64, residual: f64) -> Vec<String> {
    std::iter::once(report.t)
        .chain(report.values())
        .chain([e, residual])
        .map(|v| format!("{v:e}"))
        .collect()
}

/// Builds the grid of a configuration.
pub fn config_grid(cfg: &RunConfig) -> Result<Grid2D, RunError> {
    Grid2D::new(cfg.grid.nx, cfg.grid.ny, cfg.grid.lx, cfg.grid.ly).map_err(|e| RunError::Config(e.to_string()))
}

/// Advances from `t = 1` to `t_end`, recording reports every
/// `diag.cadence` and snapshots every `output.snapshot_cadence`.
pub fn run(cfg: &RunConfig) -> Result<RunRecord, RunError> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        let msg: Vec<String> = problems.iter().map(|(k, m)| format!("{k}: {m}")).collect();
        return Err(RunError::Config(msg.join("; ")));
    }
    let grid = config_grid(cfg)?;
    let ic = crate::state::InitialCondition {
        seed: cfg.seed,
        ..cfg.ic.clone()
    };
    let state0 = make_initial_data(&grid, &ic)?;
    let physics = Physics {
        nonlinear: cfg.time.nonlinear,
    };
    let params: NormParams = cfg.diag.norm_params();
    let mut stepper = match cfg.time.stepper {
        StepperKind::Primitive => Stepper::Primitive(state0),
        StepperKind::Duhamel => Stepper::Duhamel(SecondOrderState::from_state_with(&state0, physics)),
        StepperKind::BForm => Stepper::BForm(BState::from_state(&state0)),
    };

    let dt = cfg.time.dt;
    let span = cfg.time.t_end - 1.0;
    let n_steps = if span <= 0.0 {
        0
    } else {
        (span / dt - 1e-9).ceil() as usize
    };
    let every = |cadence: f64| ((cadence / dt).round() as usize).max(1);
    let report_every = every(cfg.diag.cadence);
    let snap_every = every(cfg.output.snapshot_cadence);

    let mut csv = match &cfg.output.csv {
        Some(p) => Some(CsvSink::create(p)?),
        None => None,
    };
    if let Some(dir) = &cfg.output.snapshot_dir {
        fs::create_dir_all(dir).map_err(|source| RunError::Io {
            path: dir.clone(),
            source,
        })?;
    }

    let mut record = RunRecord {
        reports: Vec::new(),
        energy: Vec::new(),
        final_state: State::zeros(&grid, 1.0),
        steps: 0,
        max_divergence: 0.0,
        snapshots: Vec::new(),
    };
    // report rows wait until the energy stencil around them exists
    let mut pending: Vec<(usize, usize)> = Vec::new();
    let mut header_written = false;

    let flush = |record: &RunRecord,
                 pending: &mut Vec<(usize, usize)>,
                 csv: &mut Option<CsvSink>,
                 header_written: &mut bool,
                 done: bool|
     -> Result<(), RunError> {
        let last = record.energy.len() - 1;
        let ready = |step: usize| done || last >= (step + 1).max(2);
        while let Some(&(report_idx, step)) = pending.first() {
            if !ready(step) {
                break;
            }
            pending.remove(0);
            let Some(sink) = csv.as_mut() else { continue };
            let report = &record.reports[report_idx];
            if !*header_written {
                sink.line(&csv_header(report))?;
                *header_written = true;
            }
            let lo = step.saturating_sub(1).min(last.saturating_sub(2));
            let hi = (lo + 2).min(last);
            let slice = &record.energy[lo..=hi];
            let ts: Vec<f64> = slice.iter().map(|e| e.0).collect();
            let es: Vec<f64> = slice.iter().map(|e| e.1).collect();
            let ks: Vec<f64> = slice.iter().map(|e| e.2).collect();
            let rows = energy_residuals(&ts, &es, &ks);
            let row = &rows[step - lo];
            sink.line(&csv_row(report, row.e, row.residual))?;
        }
        Ok(())
    };

    let mut last_healthy_t = 1.0;
    for k in 0..=n_steps {
        if k > 0 {
            let t_now = stepper.t();
            let target = (1.0 + k as f64 * dt).min(cfg.time.t_end);
            if let Err(source) = stepper.step(target - t_now, physics) {
                flush(&record, &mut pending, &mut csv, &mut header_written, true)?;
                return Err(RunError::Step { t: t_now, source });
            }
            if stepper.has_non_finite() {
                flush(&record, &mut pending, &mut csv, &mut header_written, true)?;
                return Err(RunError::NumericalAbort {
                    last_healthy_t,
                    t: stepper.t(),
                });
            }
            record.steps += 1;
        }
        last_healthy_t = stepper.t();
        let (e, ku) = stepper.energy();
        record.energy.push((stepper.t(), e, ku));
        let is_last = k == n_steps;
        if k % report_every == 0 || is_last {
            let (state, tend) = stepper.state_and_tendency(physics);
            record.max_divergence = record.max_divergence.max(state.divergence_defect());
            record.reports.push(norm_report(&state, Some(&tend), params));
            pending.push((record.reports.len() - 1, k));
        }
        if let Some(dir) = &cfg.output.snapshot_dir {
            if k % snap_every == 0 || is_last {
                let path = dir.join(format!("snap_{k:08}.bin"));
                let (state, _) = stepper.state_and_tendency(Physics::LINEAR);
                write_snapshot(&path, &state)?;
                record.snapshots.push(path);
            }
        }
        flush(&record, &mut pending, &mut csv, &mut header_written, is_last)?;
    }
    record.final_state = stepper.state_and_tendency(Physics::LINEAR).0;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{apply_kernel, KernelId};
    use crate::spectral::Grid2D;

    fn unit() -> Grid2D {
        Grid2D::unit_periodic(32)
    }

    fn shear(g: &Grid2D, a: f64) -> State {
        State {
            u: SpectralField::from_fn(g, |_, y| a * y.sin()),
            v: SpectralField::zeros(g),
            psi: SpectralField::zeros(g),
            t: 1.0,
        }
    }

    #[test]
    fn initial_derivative_examples() {
        let g = unit();
        let d = initial_time_derivatives(&State::zeros(&g, 1.0));
        assert!(d.du.is_zero() && d.dv.is_zero() && d.dpsi.is_zero());
        let sinx = SpectralField::from_fn(&g, |x, _| x.sin());
        let s = State {
            psi: sinx.clone(),
            ..State::zeros(&g, 1.0)
        };
        let d = initial_time_derivatives(&s);
        assert!(d.du.max_coeff() < 1e-13 && d.dpsi.max_coeff() < 1e-13);
        assert!(d.dv.max_coeff_diff(&sinx) < 1e-13);
        let d = initial_time_derivatives(&shear(&g, 0.3));
        assert!(d.du.max_coeff_diff(&shear(&g, -0.3).u) < 1e-14);
        assert!(d.dv.max_coeff() < 1e-14 && d.dpsi.max_coeff() < 1e-14);
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = unit();
        let z = State::zeros(&g, 1.0);
        let s = step_primitive(&z, 0.01).unwrap();
        assert!(s.u.is_zero() && s.psi.is_zero());
        assert!((s.t - 1.01).abs() < 1e-15);
        let d = step_duhamel(&SecondOrderState::from_state(&z), 0.3);
        assert!(d.u.is_zero() && d.psit.is_zero());
    }

    #[test]
    fn shear_decays_exactly() {
        let g = unit();
        let a = 0.2;
        let dt = 0.01;
        let s = step_primitive(&shear(&g, a), dt).unwrap();
        let want = shear(&g, a * (-dt).exp()).u;
        assert!(s.u.max_coeff_diff(&want) < 1e-12);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let g = Grid2D::unit_periodic(8);
        let a = 0.2;
        let err = |dt: f64| {
            let mut s = shear(&g, a);
            let n = (1.0 / dt).round() as usize;
            for _ in 0..n {
                s = step_primitive(&s, dt).unwrap();
            }
            s.u.max_coeff_diff(&shear(&g, a * (-1f64).exp()).u)
        };
        let (e1, e2) = (err(0.05), err(0.025));
        assert!(e1 / e2 >= 15.0, "{e1} {e2}");
    }

    #[test]
    fn cfl_violation_is_refused() {
        let g = unit();
        let z = State::zeros(&g, 1.0);
        let limit = dt_max(&z);
        assert!((limit - 0.5 / (g.kx_max() + 1.0)).abs() < 1e-15);
        match step_primitive(&z, 2.0 * limit) {
            Err(StepError::Cfl { dt_max, .. }) => assert_eq!(dt_max, limit),
            other => panic!("expected CFL refusal, got {other:?}"),
        }
    }

    #[test]
    fn linear_rk4_matches_kernels() {
        let g = unit();
        let psi0 = SpectralField::from_fn(&g, |x, _| 0.1 * (2.0 * x).cos());
        let s0 = State {
            psi: psi0.clone(),
            ..State::zeros(&g, 1.0)
        };
        let psi1 = initial_time_derivatives(&s0).dpsi;
        let dt = 0.01;
        let mut s = s0;
        for _ in 0..10 {
            s = step_primitive_with(&s, dt, Physics::LINEAR).unwrap();
        }
        let t = 0.1;
        let want = apply_kernel(KernelId::K0, t, &psi0) + apply_kernel(KernelId::K1, t, &(psi0.scaled(0.5) + psi1));
        let gap = s.psi.max_coeff_diff(&want);
        assert!(gap < 1e-9, "{gap}");
    }

    #[test]
    fn linear_duhamel_is_exact() {
        let g = unit();
        let s0 = State::random(&g, 3, 0.1, 5.0);
        let so = SecondOrderState::from_state_with(&s0, Physics::LINEAR);
        let one = step_duhamel_with(&so, 0.8, Physics::LINEAR);
        let mut many = so.clone();
        for _ in 0..8 {
            many = step_duhamel_with(&many, 0.1, Physics::LINEAR);
        }
        for (a, b) in [(&one.u, &many.u), (&one.psi, &many.psi), (&one.vt, &many.vt)] {
            assert!(a.max_coeff_diff(b) < 1e-12);
        }
    }

    #[test]
    fn bform_examples() {
        let g = unit();
        let eq = BState::from_state(&State::zeros(&g, 1.0));
        let s = step_bform(&eq, 0.01).unwrap();
        assert!(s.u.is_zero() && s.by.is_zero());
        assert!((s.bx.mean() - 1.0).abs() < 1e-15);

        let a = 0.1;
        let mut b = BState::from_state(&shear(&g, a));
        b.bx = SpectralField::zeros(&g);
        for _ in 0..10 {
            b = step_bform(&b, 0.01).unwrap();
        }
        let want = shear(&g, a * (-0.1f64).exp()).u;
        assert!(b.u.max_coeff_diff(&want) < 1e-12);
    }

    #[test]
    fn bform_round_trip() {
        let g = unit();
        let s = State::random(&g, 8, 0.05, 4.0);
        let back = BState::from_state(&s).to_state();
        assert!(back.psi.max_coeff_diff(&s.psi) < 1e-15);
    }

    #[test]
    fn commutator_vanishes_for_constant_velocity() {
        let g = unit();
        let one = SpectralField::constant(&g, 1.0);
        let f = State::random(&g, 1, 1.0, 4.0).psi;
        assert!(commutator(&one, &one, &f, 3.0).max_coeff() < 1e-12);
    }
}
