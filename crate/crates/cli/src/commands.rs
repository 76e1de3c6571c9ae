use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use gism::poly::{jacobian, PolyMatrix, Polynomial};
use gism::sim::{scenario_fixtures, simulate as run_sim, sliding_metrics, GismLaw, GlucoseParams, ModelFile, SimError, SimTrace};
use gism::sos::{verify_certificate, CertTolerance, SosProgram};
use gism::synth::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::manifest::Run;
use crate::{CliError, ModelArgs, Route, SynthArgs, TraceFormat};

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

/// The model and the bytes that identify it in manifests.
pub fn load_model(args: &ModelArgs) -> Result<(ModelFile, Vec<u8>), CliError> {
    let params = match &args.params {
        Some(p) => {
            let text = read(p)?;
            let gp: GlucoseParams =
                serde_json::from_str(&text).map_err(|e| SimError::Schema(format!("{}: {e}", p.display())))?;
            Some((gp, text))
        }
        None => None,
    };
    let path = Path::new(&args.model);
    let (model, mut bytes) = if path.is_file() {
        let text = read(path)?;
        (ModelFile::from_json(&text)?, text.into_bytes())
    } else {
        let m = scenario_fixtures(&args.model, params.as_ref().map(|p| &p.0))?;
        let bytes = serde_json::to_vec(&m).expect("model serializes");
        (m, bytes)
    };
    if let Some((_, text)) = params {
        bytes.extend_from_slice(text.as_bytes());
    }
    Ok((model, bytes))
}

fn degree_overrides(model: &ModelFile, args: &SynthArgs) -> Result<BTreeMap<String, u32>, CliError> {
    // Degrees stored with the model belong to the model's own route.
    let own = args.theorem.is_none() || args.theorem == model.synthesis.theorem;
    let mut out: BTreeMap<String, u32> = BTreeMap::new();
    if own {
        out.extend(model.synthesis.degrees.iter().map(|(k, v)| (k.to_lowercase(), *v)));
    }
    for item in &args.degrees {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("degree '{item}' is not of the form name=value")))?;
        let v: u32 = v.trim().parse().map_err(|_| CliError::Input(format!("degree '{item}' has a bad value")))?;
        out.insert(k.trim().to_lowercase(), v);
    }
    Ok(out)
}

fn unknown_degree(theorem: u8, key: &str) -> CliError {
    CliError::Input(format!("degree '{key}' does not apply to theorem {theorem}"))
}

fn apply_manifold(opts: &mut ManifoldMapOptions, key: &str, v: u32) -> bool {
    match key {
        "g" => opts.g_degree = Some(v),
        "l" => opts.l_degree = v,
        _ => return false,
    }
    true
}

fn apply_alternation(a: &mut AlternationOptions, m: &mut ManifoldMapOptions, key: &str, v: u32) -> bool {
    match key {
        "v" => a.v_degree = v,
        "k" => a.k_degree = v,
        "g" => a.g_degree = v,
        "d" => a.d_degree = v,
        "l" => m.l_degree = v,
        _ => return false,
    }
    true
}

pub fn theorem_of(model: &ModelFile, args: &SynthArgs) -> u8 {
    args.theorem.or(model.synthesis.theorem).unwrap_or(2)
}

fn plant_of(model: &ModelFile) -> Result<&PlantModel, CliError> {
    model
        .plant
        .as_ref()
        .ok_or_else(|| SimError::Schema(format!("model '{}' has no polynomial plant to synthesize for", model.name)).into())
}

fn thm2_options(model: &ModelFile, args: &SynthArgs) -> Result<Thm2Options, CliError> {
    let mut o = Thm2Options::default();
    for (k, v) in degree_overrides(model, args)? {
        match k.as_str() {
            "q" => o.q_degree = v,
            "n" => o.n_degree = v,
            _ if apply_manifold(&mut o.manifold, &k, v) => {}
            _ => return Err(unknown_degree(2, &k)),
        }
    }
    Ok(o)
}

fn thm4_options(model: &ModelFile, args: &SynthArgs) -> Result<Thm4Options, CliError> {
    let mut o = Thm4Options { region_radius: args.region_radius.or(model.synthesis.region_radius), ..Default::default() };
    if let Some(g) = args.gamma.or(model.synthesis.gamma) {
        o.gamma = GammaChoice::Fixed(g);
    }
    for (k, v) in degree_overrides(model, args)? {
        match k.as_str() {
            "p" => o.p_degree = v,
            "multiplier" => o.multiplier_degree = v,
            _ if apply_manifold(&mut o.manifold, &k, v) => {}
            _ => return Err(unknown_degree(4, &k)),
        }
    }
    Ok(o)
}

fn thm1_options(model: &ModelFile, args: &SynthArgs) -> Result<Thm1Options, CliError> {
    let mut o = Thm1Options::default();
    o.route = match args.route {
        Some(Route::Projected) => Thm1Route::Projected,
        Some(Route::Siso) => Thm1Route::Siso,
        None => model.synthesis.route.unwrap_or(o.route),
    };
    for (k, v) in degree_overrides(model, args)? {
        if !apply_alternation(&mut o.alternation, &mut o.manifold, &k, v) {
            return Err(unknown_degree(1, &k));
        }
    }
    Ok(o)
}

fn thm3_options(model: &ModelFile, args: &SynthArgs) -> Result<Thm3Options, CliError> {
    let mut o = Thm3Options { gamma: args.gamma.or(model.synthesis.gamma), ..Default::default() };
    for (k, v) in degree_overrides(model, args)? {
        if !apply_alternation(&mut o.alternation, &mut o.manifold, &k, v) {
            return Err(unknown_degree(3, &k));
        }
    }
    Ok(o)
}

pub fn design_for(model: &ModelFile, args: &SynthArgs) -> Result<Design, CliError> {
    let plant = plant_of(model)?;
    let design = match theorem_of(model, args) {
        1 => theorem1_synthesize(plant, &thm1_options(model, args)?)?,
        2 => theorem2_synthesize(plant, &thm2_options(model, args)?)?,
        3 => theorem3_synthesize(plant, &thm3_options(model, args)?)?,
        _ => theorem4_synthesize(plant, &thm4_options(model, args)?)?,
    };
    Ok(design)
}

fn solver_stats(d: &Design) -> BTreeMap<String, Value> {
    let (res, eig) = d.certificate_extremes();
    BTreeMap::from([
        ("iterations".to_string(), json!(d.manifest.solver_iterations)),
        ("max_residual".to_string(), json!(res)),
        ("min_eigenvalue".to_string(), json!(eig)),
        ("rounds".to_string(), json!(d.manifest.rounds)),
        ("gamma".to_string(), json!(d.gamma)),
    ])
}

pub fn synth(model_args: &ModelArgs, args: &SynthArgs, alpha: Option<f64>, out: &Path, argv: Vec<String>) -> Result<(), CliError> {
    let (model, input) = load_model(model_args)?;
    let mut design = design_for(&model, args)?;
    if let Some(a) = alpha.or(model.synthesis.alpha) {
        design.controller.alpha = a;
    }
    let mut run = Run::new(out, "manifest.json", argv, &input)?;
    run.solver = solver_stats(&design);
    let text = serde_json::to_string_pretty(&design).expect("design serializes");
    run.write("design.json", text.as_bytes())?;
    run.finish()?;
    let (res, eig) = design.certificate_extremes();
    println!(
        "{:?} design for '{}': {} certificates, max residual {res:.2e}, min Gram eigenvalue {eig:.2e}{}",
        design.theorem,
        model.name,
        design.certificates.len(),
        design.gamma.map(|g| format!(", gamma {g:.4}")).unwrap_or_default()
    );
    Ok(())
}

pub struct CheckOptions {
    pub tol: f64,
    pub eig_tol: f64,
    pub reference: bool,
    pub audit_radius: f64,
}

#[derive(Serialize)]
struct CertLine {
    name: String,
    passed: bool,
    max_residual: f64,
    min_eigenvalue: f64,
}

#[derive(Serialize)]
struct IdentityLine {
    name: String,
    passed: bool,
    error: f64,
}

#[derive(Serialize)]
struct CheckReport {
    certificates: Vec<CertLine>,
    identities: Vec<IdentityLine>,
    reference: Option<AuditReport>,
    failed: Vec<String>,
}

fn reference_matrix(reference: &BTreeMap<String, Value>, key: &str) -> Result<PolyMatrix, CliError> {
    let bad = || CliError::Input(format!("reference '{key}' is not a matrix of polynomial strings"));
    let rows: Vec<Vec<String>> = serde_json::from_value(reference.get(key).cloned().ok_or_else(bad)?).map_err(|_| bad())?;
    let rows: Vec<Vec<&str>> = rows.iter().map(|r| r.iter().map(String::as_str).collect()).collect();
    let slices: Vec<&[&str]> = rows.iter().map(Vec::as_slice).collect();
    PolyMatrix::parse(&slices).map_err(|e| CliError::Input(format!("reference '{key}': {e}")))
}

fn reference_number(reference: &BTreeMap<String, Value>, key: &str, default: f64) -> f64 {
    reference.get(key).and_then(Value::as_f64).unwrap_or(default)
}

fn reference_audit(model: &ModelFile, radius: f64, tol: f64) -> Result<Option<AuditReport>, CliError> {
    let r = &model.reference;
    let plant = plant_of(model)?;
    let eps = (reference_number(r, "eps1", 0.1), reference_number(r, "eps2", 0.01));
    let at = AuditRegion::boxed(radius);
    if r.contains_key("Q") && r.contains_key("N") {
        let q: Polynomial = match r.get("q").and_then(Value::as_str) {
            Some(s) => s.parse().map_err(|e| CliError::Input(format!("reference 'q': {e}")))?,
            None => Polynomial::one(),
        };
        let (qm, nm) = (reference_matrix(r, "Q")?, reference_matrix(r, "N")?);
        return Ok(Some(audit_thm2(plant, &qm, &nm, &q, eps, tol, &at)?));
    }
    if let (true, Some(gamma)) = (r.contains_key("P"), r.get("gamma").and_then(Value::as_f64)) {
        let pm = reference_matrix(r, "P")?;
        return Ok(Some(audit_thm4(plant, &pm, gamma, eps, tol, &at)?));
    }
    Ok(None)
}

pub fn check(design_path: &Path, against: Option<&ModelArgs>, opts: &CheckOptions, out: Option<&Path>) -> Result<(), CliError> {
    let text = read(design_path)?;
    let design: Design =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", design_path.display())))?;
    let model = against.map(load_model).transpose()?.map(|(m, _)| m);

    let tol = CertTolerance { coeff: opts.tol, eig: opts.eig_tol };
    let certificates: Vec<CertLine> = design
        .certificates
        .iter()
        .map(|c| {
            let r = verify_certificate(&c.target, &c.certificate, tol);
            CertLine { name: c.constraint.clone(), passed: r.passed, max_residual: r.max_residual, min_eigenvalue: r.min_eigenvalue }
        })
        .collect();

    let md = &design.manifold;
    let jac = jacobian(&md.g, &design.plant.state_vars());
    let worst = |m: &PolyMatrix| m.entries().iter().map(Polynomial::max_abs_coeff).fold(0.0, f64::max);
    let jac_err = jac.sub(&md.m).map(|d| worst(&d)).unwrap_or(f64::INFINITY);
    let lhs = md.m.map(|p| &md.w * p);
    let int_err = md
        .l
        .mul(&design.plant.b.transpose())
        .and_then(|rhs| lhs.sub(&rhs))
        .map(|d| worst(&d))
        .unwrap_or(f64::INFINITY);
    let x0s = match model.as_ref().and_then(|m| m.x0.clone()) {
        Some(x0) => vec![x0],
        None => sample_points(design.plant.n(), 3, SAMPLE_SEED),
    };
    let mut s0_err: f64 = 0.0;
    for x0 in &x0s {
        let s = md.z0(x0).and_then(|z| md.s(x0, &z)).map_err(SynthError::from)?;
        s0_err = s0_err.max(s.amax());
    }
    let identities = vec![
        IdentityLine { name: "M = dg/dx".into(), passed: jac_err <= 1e-12, error: jac_err },
        IdentityLine { name: "w·M = L·Bᵀ".into(), passed: int_err <= 1e-9, error: int_err },
        IdentityLine { name: "s(x0) = 0".into(), passed: s0_err <= 1e-12, error: s0_err },
    ];

    let reference = match (&model, opts.reference) {
        (Some(m), true) => reference_audit(m, opts.audit_radius, 1e-3)?,
        (None, true) => return Err(CliError::Input("--reference needs --against".into())),
        _ => None,
    };

    let mut failed: Vec<String> = certificates.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    failed.extend(identities.iter().filter(|i| !i.passed).map(|i| i.name.clone()));

    for c in &certificates {
        println!(
            "certificate '{}': {} (residual {:.2e}, min eigenvalue {:.2e})",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.max_residual,
            c.min_eigenvalue
        );
    }
    for i in &identities {
        println!("identity {}: {} (error {:.2e})", i.name, if i.passed { "PASS" } else { "FAIL" }, i.error);
    }
    if let Some(rep) = &reference {
        for c in &rep.constraints {
            println!(
                "reference '{}': sos {}, local margin {:.4} at {:?}",
                c.name,
                if c.sos { "yes" } else { "no" },
                c.local_margin,
                c.worst_point
            );
        }
    }
    if failed.is_empty() {
        println!("design checks passed");
    } else {
        println!("failed: {}", failed.join(", "));
    }

    if let Some(path) = out {
        let report = CheckReport { certificates, identities, reference, failed };
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

pub struct SimOptions {
    pub alpha: Option<f64>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub offset: Option<Vec<f64>>,
    pub format: TraceFormat,
}

fn write_trace(run: &mut Run, tr: &SimTrace, format: TraceFormat, diverged_at: Option<f64>) -> Result<(), CliError> {
    match format {
        TraceFormat::Csv => run.write("trace.csv", tr.to_csv().as_bytes())?,
        TraceFormat::Json => run.write("trace.json", serde_json::to_string(tr).expect("trace serializes").as_bytes())?,
    };
    let metrics = json!({
        "sliding": sliding_metrics(tr),
        "samples": tr.len(),
        "final_state": tr.x.last(),
        "events": tr.events,
        "guard_activations": tr.guard_activations,
        "diverged_at": diverged_at,
    });
    run.write("metrics.json", serde_json::to_string_pretty(&metrics).expect("metrics serialize").as_bytes())?;
    Ok(())
}

pub fn simulate(
    model_args: &ModelArgs,
    design_path: Option<&Path>,
    synth_args: &SynthArgs,
    opts: &SimOptions,
    out: &Path,
    argv: Vec<String>,
) -> Result<(), CliError> {
    let (model, mut input) = load_model(model_args)?;
    let mut solver = BTreeMap::new();
    let mut law = match (design_path, &model.controller) {
        (Some(p), _) => {
            let text = read(p)?;
            input.extend_from_slice(text.as_bytes());
            let d: Design = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            GismLaw::from(&d)
        }
        (None, Some(c)) if synth_args.theorem.is_none() => c.clone(),
        _ => {
            let d = design_for(&model, synth_args)?;
            solver = solver_stats(&d);
            let mut law = GismLaw::from(&d);
            if let Some(a) = model.synthesis.alpha {
                law.alpha = a;
            }
            law
        }
    };
    if let Some(a) = opts.alpha {
        law.alpha = a;
    }
    let mut cfg = model.sim_config()?;
    if let Some(t) = opts.t_end {
        cfg.t_end = t;
    }
    if let Some(dt) = opts.dt {
        cfg.dt = dt;
    }
    if opts.offset.is_some() {
        cfg.initial_offset = opts.offset.clone();
    }
    let plant = model.sim_plant()?;

    let mut run = Run::new(out, "manifest.json", argv, &input)?;
    run.solver = solver;
    match run_sim(&plant, &model.signals, &law, &cfg) {
        Ok(tr) => {
            write_trace(&mut run, &tr, opts.format, None)?;
            run.finish()?;
            let m = sliding_metrics(&tr);
            println!(
                "simulated '{}' to t = {}: max |s| {:.3e}, layer {:.3e}, reaching fraction {:.3}, chattering {:.3e}",
                model.name,
                tr.t.last().copied().unwrap_or(cfg.t0),
                m.max_s,
                m.layer,
                m.reaching_fraction,
                m.chattering_index
            );
            Ok(())
        }
        Err(SimError::Divergence { t, trace }) => {
            write_trace(&mut run, &trace, opts.format, Some(t))?;
            run.finish()?;
            Err(SimError::Divergence { t, trace }.into())
        }
        Err(e) => Err(e.into()),
    }
}

pub fn export_sdpa(model_args: &ModelArgs, args: &SynthArgs, out: &Path, argv: Vec<String>) -> Result<(), CliError> {
    let (model, input) = load_model(model_args)?;
    let plant = plant_of(&model)?;
    let theorem = theorem_of(&model, args);
    let prog: SosProgram = match theorem {
        1 => theorem1_program(plant, &thm1_options(&model, args)?)?,
        2 => theorem2_program(plant, &thm2_options(&model, args)?)?,
        3 => theorem3_program(plant, &thm3_options(&model, args)?)?,
        _ => {
            let opts = thm4_options(&model, args)?;
            let gamma = match opts.gamma {
                GammaChoice::Fixed(g) => g,
                GammaChoice::Minimize { .. } => theorem4_synthesize(plant, &opts)?
                    .gamma
                    .ok_or_else(|| CliError::Input("synthesis returned no gamma".into()))?,
            };
            theorem4_program(plant, &opts, gamma)?
        }
    };
    let text = prog.export_sdpa()?;
    let dir = out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = out
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| CliError::Input(format!("bad output path {}", out.display())))?;
    let mut run = Run::new(dir, &format!("{name}.manifest.json"), argv, &input)?;
    run.write(name, text.as_bytes())?;
    run.finish()?;
    println!("wrote theorem {theorem} program for '{}' to {}", model.name, out.display());
    Ok(())
}
