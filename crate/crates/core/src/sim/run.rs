use std::fmt::Write as _;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::control::GismLaw;
use super::plant::{Signals, SimPlant};
use super::SimError;

/// Keeps a state component away from zero where the controller divides by
/// it; each clamped evaluation is counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Guard {
    pub index: usize,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
    pub x0: Vec<f64>,
    #[serde(default = "yes")]
    pub audit_bounds: bool,
    #[serde(default = "blowup")]
    pub blowup: f64,
    #[serde(default)]
    pub guards: Vec<Guard>,
    /// Start with `s(t0)` equal to this instead of zero, to exercise the
    /// reaching phase.
    #[serde(default)]
    pub initial_offset: Option<Vec<f64>>,
}

fn yes() -> bool {
    true
}

fn blowup() -> f64 {
    1e6
}

impl SimConfig {
    pub fn new(x0: Vec<f64>, t_end: f64) -> Self {
        SimConfig {
            dt: 1e-3,
            t0: 0.0,
            t_end,
            x0,
            audit_bounds: true,
            blowup: blowup(),
            guards: vec![],
            initial_offset: None,
        }
    }
}

/// One row per step. `x` holds plant states followed by controller states.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub n_plant: usize,
    pub dt: f64,
    pub alpha: f64,
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub switching: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
    /// Lyapunov function along the trace, when the law carries one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    pub events: Vec<SimEvent>,
    pub guard_activations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimEvent {
    /// `‖s‖` dropped below `α`.
    LayerEntry { t: f64 },
    LayerExit { t: f64 },
    /// First step of a stretch where `M·B` is singular.
    SingularMb { t: f64 },
}

struct Stepper<'a> {
    plant: &'a SimPlant,
    signals: &'a Signals,
    law: &'a GismLaw,
    cfg: &'a SimConfig,
    nx: usize,
    guard_hits: usize,
}

impl Stepper<'_> {
    fn guarded(&mut self, x: &[f64]) -> Vec<f64> {
        let mut x = x.to_vec();
        for g in &self.cfg.guards {
            if x[g.index].abs() < g.floor {
                x[g.index] = if x[g.index] < 0.0 { -g.floor } else { g.floor };
                self.guard_hits += 1;
            }
        }
        x
    }

    /// The switching term is held; the continuous part follows each stage.
    fn rhs(&mut self, y: &DVector<f64>, switching: &DVector<f64>, t: f64) -> Result<DVector<f64>, SimError> {
        let n = self.plant.n();
        let x = self.guarded(&y.as_slice()[..self.nx]);
        let u = self.law.continuous(&x, t, self.plant.m())? + switching;
        let u = &u;
        let phi = self.signals.eval(self.plant, &x[..n], t)?;
        let dx = self.plant.rhs(&x[..n], u, t, &phi)?;
        let extra = self.law.extra_rates(&x, t)?;
        let dz = self.law.zdot(self.plant, &x, t)?;
        let mut out = DVector::zeros(y.len());
        out.rows_mut(0, n).copy_from(&dx);
        for (i, e) in extra.into_iter().enumerate() {
            out[n + i] = e;
        }
        out.rows_mut(self.nx, dz.len()).copy_from(&dz);
        Ok(out)
    }
}

/// Fixed-step RK4 with the discontinuous term held constant over each step.
pub fn simulate(plant: &SimPlant, signals: &Signals, law: &GismLaw, cfg: &SimConfig) -> Result<SimTrace, SimError> {
    let n = plant.n();
    let nx = n + law.extra_states.len();
    if cfg.x0.len() != n {
        return Err(SimError::Config(format!("x0 has {} entries, the plant has {n} states", cfg.x0.len())));
    }
    if !(cfg.dt > 0.0 && cfg.t_end > cfg.t0) {
        return Err(SimError::Config("need dt > 0 and t_end > t0".into()));
    }
    let mut x0 = cfg.x0.clone();
    x0.extend(law.extra_states.iter().map(|e| e.init));
    let mut z0 = law.z0(&x0, cfg.t0)?;
    if let Some(off) = &cfg.initial_offset {
        if off.len() != z0.len() {
            return Err(SimError::Config("initial_offset has the wrong length".into()));
        }
        z0 += DVector::from_column_slice(off);
    }
    let nz = z0.len();
    let mut y = DVector::zeros(nx + nz);
    y.rows_mut(0, nx).copy_from_slice(&x0);
    y.rows_mut(nx, nz).copy_from(&z0);

    let mut st = Stepper { plant, signals, law, cfg, nx, guard_hits: 0 };
    let mut trace = SimTrace { n_plant: n, dt: cfg.dt, alpha: law.alpha, ..Default::default() };
    if law.lyapunov.is_some() {
        trace.v = Some(Vec::new());
    }
    let (mut inside, mut singular) = (None, false);
    let steps = ((cfg.t_end - cfg.t0) / cfg.dt).round() as usize;
    for k in 0..=steps {
        let t = cfg.t0 + k as f64 * cfg.dt;
        let xs = st.guarded(&y.as_slice()[..nx]);
        let z = y.rows(nx, nz).into_owned();
        let s = law.s(&xs, &z, t)?;
        let out = law.control(plant, &xs, t, &s)?;
        if cfg.audit_bounds {
            let phi = signals.eval(plant, &xs[..n], t)?;
            if let Some(msg) = plant.bound_violation(&xs[..n], t, &phi)? {
                return Err(SimError::BoundViolation { t, message: msg });
            }
        }
        trace.t.push(t);
        trace.x.push(y.as_slice()[..nx].to_vec());
        trace.z.push(z.as_slice().to_vec());
        trace.s.push(s.as_slice().to_vec());
        trace.u.push(out.u.as_slice().to_vec());
        trace.switching.push(out.switching.as_slice().to_vec());
        trace.rho.push(out.rho);
        if let (Some(vs), Some(lyap)) = (trace.v.as_mut(), &law.lyapunov) {
            vs.push(lyap.eval(&xs[..n])?);
        }
        let now_inside = s.norm() < law.alpha;
        match inside {
            Some(was) if was != now_inside => trace.events.push(if now_inside {
                SimEvent::LayerEntry { t }
            } else {
                SimEvent::LayerExit { t }
            }),
            _ => {}
        }
        inside = Some(now_inside);
        if out.singular_mb && !singular {
            trace.events.push(SimEvent::SingularMb { t });
        }
        singular = out.singular_mb;
        if k == steps {
            break;
        }
        let h = cfg.dt;
        let u = &out.switching;
        let k1 = st.rhs(&y, u, t)?;
        let k2 = st.rhs(&(&y + &k1 * (h / 2.0)), u, t + h / 2.0)?;
        let k3 = st.rhs(&(&y + &k2 * (h / 2.0)), u, t + h / 2.0)?;
        let k4 = st.rhs(&(&y + &k3 * h), u, t + h)?;
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let norm = y.rows(0, n).norm();
        if !norm.is_finite() || norm > cfg.blowup {
            trace.guard_activations = st.guard_hits;
            return Err(SimError::Divergence { t: t + h, trace: Box::new(trace) });
        }
    }
    trace.guard_activations = st.guard_hits;
    Ok(trace)
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn columns(&self) -> Vec<(String, Vec<f64>)> {
        let mut cols = vec![("t".to_string(), self.t.clone())];
        let mut push = |prefix: &str, rows: &[Vec<f64>], offset: usize, count: usize| {
            for j in 0..count {
                let name = format!("{prefix}{}", j + 1);
                cols.push((name, rows.iter().map(|r| r[offset + j]).collect()));
            }
        };
        let width = |rows: &[Vec<f64>]| rows.first().map_or(0, Vec::len);
        push("x", &self.x, 0, self.n_plant);
        push("xi", &self.x, self.n_plant, width(&self.x).saturating_sub(self.n_plant));
        push("z", &self.z, 0, width(&self.z));
        push("s", &self.s, 0, width(&self.s));
        push("u", &self.u, 0, width(&self.u));
        cols.push(("rho".to_string(), self.rho.clone()));
        if let Some(v) = &self.v {
            cols.push(("V".to_string(), v.clone()));
        }
        cols
    }

    /// Columns `t, x…, xi…, z…, s…, u…, rho`, then `V` when recorded.
    pub fn to_csv(&self) -> String {
        let cols = self.columns();
        let mut out = cols.iter().map(|c| c.0.as_str()).collect::<Vec<_>>().join(",");
        out.push('\n');
        for i in 0..self.len() {
            let row: Vec<String> = cols.iter().map(|c| format!("{:?}", c.1[i])).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    /// `(series, t, value)` triples for external plotting.
    pub fn plot_data(&self) -> Vec<(String, f64, f64)> {
        let cols = self.columns();
        let mut out = Vec::new();
        for (name, vals) in cols.iter().skip(1) {
            out.extend(self.t.iter().zip(vals).map(|(&t, &v)| (name.clone(), t, v)));
        }
        out
    }
}
