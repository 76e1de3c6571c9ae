use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::control::{GismLaw, ZRate};
use super::plant::{ExprMatrix, Signals, SimPlant};
use super::run::{Guard, SimConfig};
use super::SimError;
use crate::expr::{Expr, VecExpr};
use crate::poly::{PolyMatrix, PolyVector};
use crate::synth::{PlantModel, SwitchDirection, Thm1Route};

/// Synthesis settings carried by a model file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSettings {
    #[serde(default)]
    pub theorem: Option<u8>,
    #[serde(default)]
    pub degrees: BTreeMap<String, u32>,
    #[serde(default)]
    pub region_radius: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub route: Option<Thm1Route>,
    /// Boundary layer for simulation of synthesized designs.
    #[serde(default)]
    pub alpha: Option<f64>,
}

/// A plant, its perturbation signals, the scenario and any reference
/// design values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Polynomial model for synthesis.
    #[serde(default)]
    pub plant: Option<PlantModel>,
    /// Simulated dynamics; defaults to `plant`.
    #[serde(default)]
    pub dynamics: Option<SimPlant>,
    #[serde(default)]
    pub signals: Signals,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub guards: Vec<Guard>,
    /// A fixed controller, for plants whose design is taken as given.
    #[serde(default)]
    pub controller: Option<GismLaw>,
    #[serde(default)]
    pub synthesis: SynthesisSettings,
    /// Reference design values kept for audits, verbatim.
    #[serde(default)]
    pub reference: BTreeMap<String, serde_json::Value>,
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let m: ModelFile = serde_json::from_str(text).map_err(|e| SimError::Schema(e.to_string()))?;
        m.check()?;
        Ok(m)
    }

    pub fn sim_plant(&self) -> Result<SimPlant, SimError> {
        match (&self.dynamics, &self.plant) {
            (Some(d), _) => Ok(d.clone()),
            (None, Some(p)) => Ok(SimPlant::from(p)),
            (None, None) => Err(SimError::Schema(format!("model '{}' has neither plant nor dynamics", self.name))),
        }
    }

    /// Dimension consistency beyond what parsing checks.
    pub fn check(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Schema(format!("model '{}': {msg}", self.name)));
        if let Some(p) = &self.plant {
            if let Err(e) = p.validate() {
                return bad(e.to_string());
            }
        }
        let sp = self.sim_plant()?;
        let (n, m) = (sp.n(), sp.m());
        if sp.b.nrows() != n {
            return bad(format!("B has {} rows for {n} states", sp.b.nrows()));
        }
        if let Some(bp) = &sp.bperp {
            if bp.nrows() != n {
                return bad("Bperp row count differs from the state count".into());
            }
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != n {
                return bad(format!("x0 has {} entries for {n} states", x0.len()));
            }
        }
        if let Some(p) = &self.signals.phi0 {
            if p.nrows() != m || p.ncols() != m {
                return bad("phi0 must be m×m".into());
            }
        }
        if self.signals.phi1.as_ref().is_some_and(|p| p.len() != m) {
            return bad("phi1 must have m entries".into());
        }
        if let Some(p2) = &self.signals.phi2 {
            match &sp.bperp {
                Some(bp) if bp.ncols() == p2.len() => {}
                _ => return bad("phi2 needs a Bperp with matching columns".into()),
            }
        }
        Ok(())
    }

    /// Simulation settings from the scenario fields.
    pub fn sim_config(&self) -> Result<SimConfig, SimError> {
        let x0 = self.x0.clone().ok_or_else(|| SimError::Schema("scenario has no x0".into()))?;
        let mut cfg = SimConfig::new(x0, self.horizon.unwrap_or(10.0));
        if let Some(dt) = self.dt {
            cfg.dt = dt;
        }
        cfg.guards = self.guards.clone();
        Ok(cfg)
    }
}

pub const SCENARIOS: [&str; 5] = ["example2", "example3", "glucose", "unicycle_cartesian", "unicycle_polar"];

fn embedded(name: &str) -> Option<&'static str> {
    Some(match name {
        "example2" => include_str!("../../../../fixtures/example2.json"),
        "example3" => include_str!("../../../../fixtures/example3.json"),
        "unicycle_cartesian" => include_str!("../../../../fixtures/unicycle_cartesian.json"),
        "unicycle_polar" => include_str!("../../../../fixtures/unicycle_polar.json"),
        _ => return None,
    })
}

/// Bundled scenario by name. The glucose model needs parameters, see
/// [`glucose_model`].
pub fn scenario_fixtures(name: &str, glucose: Option<&GlucoseParams>) -> Result<ModelFile, SimError> {
    if name == "glucose" {
        let p = glucose.ok_or(SimError::MissingParameters(
            "the glucose model needs a parameter file (p1, p2, p3, n, gamma, h, gb, ib and bounds)",
        ))?;
        return glucose_model(p);
    }
    let text = embedded(name).ok_or_else(|| SimError::Schema(format!("unknown scenario '{name}'")))?;
    ModelFile::from_json(text)
}

/// Interval `[lo, hi]` of an uncertain parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    fn radius(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

/// Minimal-model parameters. Nominal values sit at interval midpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlucoseParams {
    pub p1: f64,
    pub p2: Interval,
    pub p3: Interval,
    pub n: Interval,
    pub gamma: Interval,
    pub h: Interval,
    pub gb: f64,
    pub ib: f64,
    /// Meal disturbance `D(t) = meal·exp(−meal_decay·t)`.
    pub meal: f64,
    pub meal_decay: f64,
    /// Initial deviation from basal `(G − Gb, X, I − Ib)`.
    pub x0: [f64; 3],
    pub horizon: f64,
    pub dt: f64,
    /// True values used in simulation; must lie inside the intervals.
    pub actual: Option<[f64; 5]>,
    #[serde(default)]
    pub source: String,
}

impl GlucoseParams {
    /// Typical literature magnitudes for a normal subject. These are
    /// placeholders, not values tied to the bundled reference design.
    pub fn placeholder() -> Self {
        let iv = |c: f64, r: f64| Interval { lo: c * (1.0 - r), hi: c * (1.0 + r) };
        GlucoseParams {
            p1: 0.0317,
            p2: iv(0.0123, 0.1),
            p3: iv(4.92e-6, 0.1),
            n: iv(0.2659, 0.1),
            gamma: iv(0.0039, 0.1),
            h: iv(79.0353, 0.02),
            gb: 70.0,
            ib: 7.0,
            meal: 3.0,
            meal_decay: 0.05,
            x0: [50.0, 0.0, 0.0],
            horizon: 400.0,
            dt: 0.01,
            actual: None,
            source: "placeholder".into(),
        }
    }

    fn mid(i: &Interval) -> f64 {
        0.5 * (i.lo + i.hi)
    }
}

fn e(s: &str) -> Result<Expr, SimError> {
    s.parse().map_err(|e: crate::expr::ExprSyntaxError| SimError::Schema(e.to_string()))
}

/// Shifted minimal model `x = (G − Gb, X, I − Ib)` with nominal parameters
/// at interval midpoints. Parameter deviations, the meal and the
/// threshold secretion term become perturbations: matched on the insulin
/// channel, unmatched on the glucose and remote-insulin rows.
pub fn glucose_model(p: &GlucoseParams) -> Result<ModelFile, SimError> {
    let (p2, p3, n, gam, h) = (
        GlucoseParams::mid(&p.p2),
        GlucoseParams::mid(&p.p3),
        GlucoseParams::mid(&p.n),
        GlucoseParams::mid(&p.gamma),
        GlucoseParams::mid(&p.h),
    );
    let actual = p.actual.unwrap_or([p2, p3, n, gam, h]);
    let ranges = [&p.p2, &p.p3, &p.n, &p.gamma, &p.h];
    for (v, r) in actual.iter().zip(ranges) {
        if !(r.lo..=r.hi).contains(v) {
            return Err(SimError::Schema(format!("actual parameter {v} outside [{}, {}]", r.lo, r.hi)));
        }
    }
    let [a2, a3, an, ag, ah] = actual;
    let poly = |s: String| -> Result<crate::poly::Polynomial, SimError> {
        s.parse().map_err(|e: crate::poly::PolyError| SimError::Schema(e.to_string()))
    };
    let f = PolyVector::new(vec![
        poly(format!("-{:e}*x1 - x1*x2 + {:e}*x2", p.p1, p.gb))?,
        poly(format!("-{p2:e}*x2 + {p3:e}*x3"))?,
        poly(format!("-{n:e}*x3"))?,
    ]);
    let b = PolyMatrix::parse(&[&["0"], &["0"], &["1"]]).map_err(|e| SimError::Schema(e.to_string()))?;
    let bperp = PolyMatrix::parse(&[&["1", "0"], &["0", "1"], &["0", "0"]]).map_err(|e| SimError::Schema(e.to_string()))?;
    let mut plant = PlantModel::new(f, b);
    plant.bperp = Some(bperp);
    // Matched: −Δn·x3 + γ·(x1 + Gb − h)⁺.
    let gmax = p.gamma.hi;
    let excess = (p.gb - p.h.lo).max(0.0);
    plant.beta1 = e(&format!("(+ (* {:?} (abs \"x3\")) (* {gmax:?} (+ (abs \"x1\") {excess:?})))", p.n.radius()))?;
    // Unmatched: (D(t), −Δp2·x2 + Δp3·x3).
    plant.beta2 = e(&format!(
        "(+ (* {:?} (exp (* {:?} \"t\"))) (* {:?} (abs \"x2\")) (* {:?} (abs \"x3\")))",
        p.meal,
        -p.meal_decay,
        p.p2.radius(),
        p.p3.radius()
    ))?;
    let signals = Signals {
        phi0: None,
        phi1: Some(vec![e(&format!(
            "(+ (* {:?} \"x3\") (* {ag:?} (pos (+ \"x1\" {:?}))))",
            n - an,
            p.gb - ah
        ))?]),
        phi2: Some(vec![
            e(&format!("(* {:?} (exp (* {:?} \"t\")))", p.meal, -p.meal_decay))?,
            e(&format!("(+ (* {:?} \"x2\") (* {:?} \"x3\"))", p2 - a2, a3 - p3))?,
        ]),
    };
    let mut reference = BTreeMap::new();
    reference.insert("g".into(), serde_json::json!("0.95378*x3"));
    reference.insert("L".into(), serde_json::json!([["0.95378", "0", "0"], ["0", "0.95378", "0"], ["0", "0", "0.95378"]]));
    reference.insert("alpha".into(), serde_json::json!(0.05));
    reference.insert("parameter_source".into(), serde_json::json!(p.source));
    // Manifold g = c·x3 with the nominal closed loop left unchanged (k = 0).
    let controller = GismLaw {
        g: VecExpr::Components(vec![e("(* 0.95378 \"x3\")")?]),
        m: ExprMatrix::try_from(vec![vec![Expr::c(0.0), Expr::c(0.0), Expr::c(0.95378)]]).map_err(SimError::Schema)?,
        zdot: ZRate::NominalClosedLoop,
        k: None,
        direction: SwitchDirection::MbTranspose,
        rho: plant.beta1.clone().add(Expr::c(crate::synth::GAIN_MARGIN)),
        alpha: 0.05,
        layer: Default::default(),
        extra_states: vec![],
        lyapunov: None,
    };
    Ok(ModelFile {
        name: "glucose".into(),
        description: "shifted glucose-insulin minimal model".into(),
        dynamics: None,
        plant: Some(plant),
        signals,
        x0: Some(p.x0.to_vec()),
        horizon: Some(p.horizon),
        dt: Some(p.dt),
        guards: vec![],
        controller: Some(controller),
        synthesis: SynthesisSettings { theorem: Some(4), alpha: Some(0.05), ..Default::default() },
        reference,
    })
}
