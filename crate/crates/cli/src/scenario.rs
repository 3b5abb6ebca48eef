//! Scenario files: JSON documents describing plant, controller and run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use bfppc::engine::{ControlHold, Controller, SimOptions, DEFAULT_STEP};
use bfppc::plant::{builtin_scenario, BuiltinScenario};
use bfppc::regulator::{
    assemble_regulation, standard_bounds, synthesize_regulation, ExprRegulationBound, FeasibilityReport,
    RegulationBound, RegulationDesign, RegulationParams,
};
use bfppc::tracker::{
    standard_tracking_bounds, synthesize_tracking, ConstTrackingBound, ExprTrackingBound, GainFill,
    TrackingBound, TrackingDesign, TrackingFeasibilityReport, TrackingWorstCase,
};
use bfppc::{
    ChannelFn, ChannelGains, PerformanceFunction, PlantChannel, PlantModel, Quantizer, QuantizerKind,
    ReferenceSignal, RegulationControllerConfig, StageGains, TrackingControllerConfig,
};
use serde::{Deserialize, Serialize};

pub const EXAMPLE1_JSON: &str = include_str!("../scenarios/example1.json");
pub const EXAMPLE2_JSON: &str = include_str!("../scenarios/example2.json");

/// Bundled scenario files by name.
pub fn bundled() -> [(&'static str, &'static str); 2] {
    [("example1", EXAMPLE1_JSON), ("example2", EXAMPLE2_JSON)]
}

/// Floor added to generated regulation bounds when the file gives none.
pub const DEFAULT_BOUND_FLOOR: f64 = 0.1;

// ---------------------------------------------------------------------------
// file format

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub plant: PlantSection,
    #[serde(default)]
    pub quantizer: Option<QuantizerSection>,
    pub performance: PerformanceSection,
    #[serde(default)]
    pub reference: Option<ReferenceSection>,
    pub controller: ControllerSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub builtin: Option<String>,
    pub n: Option<usize>,
    #[serde(default)]
    pub f: Vec<String>,
    #[serde(default)]
    pub g: Vec<String>,
    #[serde(default)]
    pub f_star: Vec<String>,
    #[serde(default)]
    pub g_star: Vec<String>,
    pub g_m: Option<f64>,
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerSection {
    #[serde(default = "default_quantizer_kind")]
    pub kind: String,
    pub l0: f64,
    pub delta0: Option<f64>,
}

fn default_quantizer_kind() -> String {
    "uniform".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerformanceShape {
    pub family: String,
    pub ts: Option<f64>,
    pub rho0: Option<f64>,
    pub rho1: Option<f64>,
}

/// A default shape, optionally overridden per channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerformanceSection {
    pub family: String,
    pub ts: Option<f64>,
    pub rho0: Option<f64>,
    pub rho1: Option<f64>,
    #[serde(default)]
    pub channels: Vec<PerformanceShape>,
}

impl PerformanceSection {
    fn default_shape(&self) -> PerformanceShape {
        PerformanceShape {
            family: self.family.clone(),
            ts: self.ts,
            rho0: self.rho0,
            rho1: self.rho1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub kind: String,
    pub value: Option<f64>,
    pub amplitude: Option<f64>,
    pub omega: Option<f64>,
    pub expr: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ControllerSection {
    Regulation(RegulationSection),
    Tracking(TrackingSection),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegulationSection {
    #[serde(default)]
    pub auto: bool,
    pub eps: Vec<f64>,
    pub c0: f64,
    #[serde(rename = "N")]
    pub powers: Vec<u32>,
    #[serde(rename = "H", default)]
    pub h: Option<Vec<f64>>,
    #[serde(rename = "H0", default)]
    pub h0: Option<Vec<String>>,
    #[serde(default)]
    pub gamma: Option<Vec<f64>>,
    #[serde(default)]
    pub c: Option<Vec<f64>>,
    /// Floor of generated bounds when neither `H0` nor a builtin applies.
    #[serde(default)]
    pub bound_floor: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingSection {
    #[serde(default)]
    pub auto: bool,
    #[serde(rename = "K", default)]
    pub k: Option<usize>,
    pub eps: Vec<f64>,
    pub stages: Vec<Vec<ChannelGains>>,
    pub thresholds: Vec<Vec<f64>>,
    #[serde(default)]
    pub fill: Option<Vec<String>>,
    #[serde(rename = "F0", default)]
    pub f0: Option<Vec<String>>,
    #[serde(rename = "F_star", default)]
    pub f_star: Option<Vec<f64>>,
    #[serde(default)]
    pub rho_dot_bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_step")]
    pub h: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default)]
    pub force: bool,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default)]
    pub hold: HoldName,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldName {
    #[default]
    SampleAndHold,
    Continuous,
}

fn default_step() -> f64 {
    DEFAULT_STEP
}
fn default_t_end() -> f64 {
    10.0
}
fn default_stride() -> usize {
    1
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            h: default_step(),
            t_end: default_t_end(),
            force: false,
            record_stride: default_stride(),
            hold: HoldName::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<String>,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
}

fn all_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json, Format::Svg]
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: None,
            formats: all_formats(),
        }
    }
}

// ---------------------------------------------------------------------------
// resolved scenario

/// A validated scenario with its controller built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub plant: PlantModel,
    pub setup: LoopSetup,
    pub options: SimOptions,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub enum LoopSetup {
    Regulation(RegulationLoop),
    Tracking(TrackingLoop),
}

#[derive(Debug, Clone)]
pub struct RegulationLoop {
    pub config: RegulationControllerConfig,
    pub quantizer: Quantizer,
    /// Stage bounds `H_i^0`, absent when the file gives only constants.
    pub bounds: Option<Vec<Arc<dyn RegulationBound>>>,
    pub delta0: f64,
    pub synthesized: bool,
}

#[derive(Debug, Clone)]
pub struct TrackingLoop {
    pub config: TrackingControllerConfig,
    pub bounds: Vec<Arc<dyn TrackingBound>>,
    pub worst: TrackingWorstCase,
    pub synthesized: bool,
}

/// Feasibility of whichever controller the scenario carries.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Feasibility {
    Regulation(FeasibilityReport),
    Tracking(TrackingFeasibilityReport),
}

impl Feasibility {
    pub fn pass(&self) -> bool {
        match self {
            Feasibility::Regulation(r) => r.pass,
            Feasibility::Tracking(r) => r.pass,
        }
    }
}

impl Scenario {
    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn controller(&self) -> Controller {
        match &self.setup {
            LoopSetup::Regulation(r) => Controller::Regulation {
                config: r.config.clone(),
                quantizer: r.quantizer.clone(),
            },
            LoopSetup::Tracking(t) => Controller::Tracking {
                config: t.config.clone(),
            },
        }
    }

    pub fn feasibility(&self) -> Feasibility {
        match &self.setup {
            LoopSetup::Regulation(r) => Feasibility::Regulation(r.config.feasibility()),
            LoopSetup::Tracking(t) => Feasibility::Tracking(t.config.feasibility()),
        }
    }

    /// Output signal compared with `[env_lo, env_hi]`: `x_1` for regulation,
    /// `x_1 - y_d(t)` for tracking.
    pub fn output(&self, t: f64, x1: f64) -> f64 {
        match &self.setup {
            LoopSetup::Regulation(_) => x1,
            LoopSetup::Tracking(tr) => x1 - tr.config.reference().value(t).unwrap_or(f64::NAN),
        }
    }

    /// Default output directory name under the output root.
    pub fn output_dir_name(&self) -> String {
        self.file.output.directory.clone().unwrap_or_else(|| self.file.name.clone())
    }
}

/// Reads and validates a scenario. A bare bundled name (`example1`) is
/// accepted in place of a path.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    if !path.exists() {
        if let Some((_, text)) = bundled().into_iter().find(|(n, _)| Some(*n) == path.to_str()) {
            return parse_scenario(text);
        }
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_scenario(&text).with_context(|| format!("loading {}", path.display()))
}

/// Parses JSON text; errors name the offending key and position.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut path = e.path().to_string();
        let inner = e.into_inner();
        if path == "controller" {
            if let Some(p) = controller_error_path(text) {
                path = format!("controller.{p}");
            }
        }
        anyhow!(
            "parse error at line {}, column {} (key `{path}`): {inner}",
            inner.line(),
            inner.column()
        )
    })?;
    resolve(file)
}

/// The tagged controller enum buffers its body, which hides the inner key;
/// re-reading the body as the concrete section recovers it.
fn controller_error_path(text: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(text).ok()?;
    let mut body = v.get("controller")?.as_object()?.clone();
    let kind = body.remove("kind")?;
    let body = serde_json::Value::Object(body);
    let err = match kind.as_str()? {
        "regulation" => serde_path_to_error::deserialize::<_, RegulationSection>(body).err()?,
        "tracking" => serde_path_to_error::deserialize::<_, TrackingSection>(body).err()?,
        _ => return None,
    };
    let p = err.path().to_string();
    (p != ".").then_some(p)
}

fn check_odd(powers: impl IntoIterator<Item = (String, u32)>) -> Result<()> {
    for (key, n) in powers {
        if n % 2 == 0 || n < 3 {
            bail!("{key} = {n}: N must be odd (and at least 3)");
        }
    }
    Ok(())
}

fn performance_shape(s: &PerformanceShape, key: &str) -> Result<PerformanceFunction> {
    match s.family.as_str() {
        "cosine" => {
            let ts = s.ts.ok_or_else(|| anyhow!("{key}.ts is required for the cosine family"))?;
            Ok(PerformanceFunction::cosine(ts)?)
        }
        "exponential" => {
            let rate = s.rho0.ok_or_else(|| anyhow!("{key}.rho0 is required for the exponential family"))?;
            let floor = s.rho1.ok_or_else(|| anyhow!("{key}.rho1 is required for the exponential family"))?;
            Ok(PerformanceFunction::exponential(rate, floor)?)
        }
        other => bail!("{key}.family = {other:?}: expected \"cosine\" or \"exponential\""),
    }
}

fn performance_list(p: &PerformanceSection, n: usize) -> Result<Vec<PerformanceFunction>> {
    let default = performance_shape(&p.default_shape(), "performance")?;
    if !p.channels.is_empty() && p.channels.len() != n {
        bail!("performance.channels has {} entries for order {n}", p.channels.len());
    }
    if p.channels.is_empty() {
        return Ok(vec![default; n]);
    }
    p.channels
        .iter()
        .enumerate()
        .map(|(i, s)| performance_shape(s, &format!("performance.channels[{i}]")))
        .collect()
}

fn reference(r: &ReferenceSection) -> Result<ReferenceSignal> {
    let need = |v: Option<f64>, key: &str| v.ok_or_else(|| anyhow!("reference.{key} is required"));
    match r.kind.as_str() {
        "constant" => Ok(ReferenceSignal::Constant(need(r.value, "value")?)),
        "sine" => Ok(ReferenceSignal::sine(need(r.amplitude, "amplitude")?, need(r.omega, "omega")?)),
        "expr" => {
            let e = r.expr.as_deref().ok_or_else(|| anyhow!("reference.expr is required"))?;
            ReferenceSignal::parse(e).with_context(|| format!("reference.expr {e:?}"))
        }
        other => bail!("reference.kind = {other:?}: expected constant, sine or expr"),
    }
}

fn build_plant(p: &PlantSection) -> Result<(PlantModel, Option<BuiltinScenario>)> {
    if let Some(name) = &p.builtin {
        let b = builtin_scenario(name).with_context(|| "plant.builtin".to_string())?;
        let mut plant = b.plant().clone();
        if let Some(x0) = &p.x0 {
            plant = plant.with_x0(x0.clone()).context("plant.x0")?;
        }
        if p.n.is_some() || !p.f.is_empty() || !p.g.is_empty() || !p.f_star.is_empty() || !p.g_star.is_empty() {
            bail!("plant.builtin cannot be combined with plant.n, f, g, f_star or g_star");
        }
        return Ok((plant, Some(b)));
    }
    let n = p.n.ok_or_else(|| anyhow!("plant needs either `builtin` or `n`"))?;
    if n == 0 {
        bail!("plant.n must be at least 1");
    }
    if p.f.len() != n {
        bail!("plant.f has {} entries for n = {n}", p.f.len());
    }
    for (key, v) in [("g", &p.g), ("f_star", &p.f_star), ("g_star", &p.g_star)] {
        if !v.is_empty() && v.len() != n {
            bail!("plant.{key} has {} entries for n = {n}", v.len());
        }
    }
    let parse = |key: &str, i: usize, text: &str| {
        ChannelFn::parse(text, n, i + 1).with_context(|| format!("plant.{key}[{i}] = {text:?}"))
    };
    let mut channels = Vec::with_capacity(n);
    for i in 0..n {
        channels.push(PlantChannel {
            f: parse("f", i, &p.f[i])?,
            g: match p.g.get(i) {
                Some(t) => parse("g", i, t)?,
                None => ChannelFn::Const(1.0),
            },
            f_star: p.f_star.get(i).map(|t| parse("f_star", i, t)).transpose()?,
            g_star: match p.g_star.get(i) {
                Some(t) => Some(parse("g_star", i, t)?),
                None if p.g.is_empty() => Some(ChannelFn::Const(1.0)),
                None => None,
            },
        });
    }
    let x0 = p.x0.clone().ok_or_else(|| anyhow!("plant.x0 is required"))?;
    let plant = PlantModel::new(channels, p.g_m.unwrap_or(1.0), x0).context("plant")?;
    Ok((plant, None))
}

fn simulation_options(s: &SimulationSection) -> Result<SimOptions> {
    if !(s.h > 0.0 && s.h.is_finite()) {
        bail!("simulation.h must be positive");
    }
    if !(s.t_end > 0.0 && s.t_end.is_finite()) {
        bail!("simulation.t_end must be positive");
    }
    Ok(SimOptions {
        step: s.h,
        t_end: s.t_end,
        force: s.force,
        record_stride: s.record_stride.max(1),
        hold: match s.hold {
            HoldName::SampleAndHold => ControlHold::SampleAndHold,
            HoldName::Continuous => ControlHold::Continuous,
        },
        ..Default::default()
    })
}

fn resolve(file: ScenarioFile) -> Result<Scenario> {
    let (plant, builtin) = build_plant(&file.plant)?;
    let n = plant.order();
    let options = simulation_options(&file.simulation)?;
    let setup = match &file.controller {
        ControllerSection::Regulation(c) => {
            if file.reference.is_some() {
                bail!("reference is only meaningful for tracking controllers");
            }
            let q = file
                .quantizer
                .as_ref()
                .ok_or_else(|| anyhow!("regulation scenarios need a quantizer section"))?;
            let kind: QuantizerKind = q.kind.parse().context("quantizer.kind")?;
            let quantizer = Quantizer::new(kind, q.l0, q.delta0).context("quantizer")?;
            let performance = performance_shape(&file.performance.default_shape(), "performance")?;
            if !file.performance.channels.is_empty() {
                bail!("performance.channels applies to tracking controllers only");
            }
            LoopSetup::Regulation(regulation(c, &plant, builtin.as_ref(), quantizer, performance)?)
        }
        ControllerSection::Tracking(c) => {
            if file.quantizer.is_some() {
                bail!("quantizer section is only allowed for regulation controllers");
            }
            let r = file
                .reference
                .as_ref()
                .ok_or_else(|| anyhow!("tracking scenarios need a reference section"))?;
            let reference = reference(r)?;
            let performance = performance_list(&file.performance, n)?;
            let horizon = options.t_end;
            LoopSetup::Tracking(tracking(c, &plant, builtin.as_ref(), reference, performance, horizon)?)
        }
    };
    if let (LoopSetup::Regulation(_), ControlHold::Continuous) = (&setup, options.hold) {
        bail!("simulation.hold = \"continuous\" is only allowed for tracking controllers");
    }
    let mut sc = Scenario {
        file,
        plant,
        setup,
        options,
        warnings: Vec::new(),
    };
    if !sc.feasibility().pass() {
        sc.warnings.push(if options.force {
            "feasibility conditions fail; running anyway (force)".to_string()
        } else {
            "feasibility conditions fail; `run` refuses without --force".to_string()
        });
    }
    Ok(sc)
}

fn regulation(
    c: &RegulationSection,
    plant: &PlantModel,
    builtin: Option<&BuiltinScenario>,
    quantizer: Quantizer,
    performance: PerformanceFunction,
) -> Result<RegulationLoop> {
    let n = plant.order();
    check_odd(c.powers.iter().enumerate().map(|(i, &p)| (format!("controller.N[{i}]"), p)))?;
    if c.powers.len() != n || c.eps.len() != n {
        bail!("controller.N and controller.eps need {n} entries");
    }
    let bounds: Option<Vec<Arc<dyn RegulationBound>>> = if let Some(h0) = &c.h0 {
        if h0.len() != n {
            bail!("controller.H0 has {} entries for n = {n}", h0.len());
        }
        Some(
            h0.iter()
                .enumerate()
                .map(|(i, t)| {
                    ExprRegulationBound::parse(t, i + 1, n)
                        .map(|b| Arc::new(b) as Arc<dyn RegulationBound>)
                        .with_context(|| format!("controller.H0[{i}] = {t:?}"))
                })
                .collect::<Result<_>>()?,
        )
    } else if let Some(BuiltinScenario::Regulation(s)) = builtin {
        Some(s.design.bounds.clone())
    } else if plant.channels().iter().all(|ch| ch.f_star.is_some()) {
        Some(standard_bounds(plant, c.bound_floor.unwrap_or(DEFAULT_BOUND_FLOOR))?)
    } else {
        None
    };
    let delta0 = quantizer.bound();
    let q_x0 = quantizer.clone().quantize_state(plant.x0())?;
    let config = if c.auto {
        let bounds = bounds
            .clone()
            .ok_or_else(|| anyhow!("controller.auto needs H0 expressions or plant majorants"))?;
        let design = RegulationDesign {
            eps: c.eps.clone(),
            c0: c.c0,
            powers: c.powers.clone(),
            bounds,
        };
        synthesize_regulation(&design, delta0, performance, &q_x0).context("synthesis")?
    } else {
        let get = |v: &Option<Vec<f64>>, key: &str| -> Result<Vec<f64>> {
            let v = v.clone().ok_or_else(|| anyhow!("controller.{key} is required when auto = false"))?;
            if v.len() != n {
                bail!("controller.{key} has {} entries for n = {n}", v.len());
            }
            Ok(v)
        };
        let (gamma, cc, h) = (get(&c.gamma, "gamma")?, get(&c.c, "c")?, get(&c.h, "H")?);
        let stages: Vec<StageGains> = (0..n)
            .map(|i| StageGains {
                gamma: gamma[i],
                c: cc[i],
                power: c.powers[i],
                h: h[i],
            })
            .collect();
        match &bounds {
            Some(b) => {
                let design = RegulationDesign {
                    eps: c.eps.clone(),
                    c0: c.c0,
                    powers: c.powers.clone(),
                    bounds: b.clone(),
                };
                assemble_regulation(&design, stages, delta0, performance, &q_x0)?
            }
            None => RegulationControllerConfig::new(RegulationParams {
                h_star: h.clone(),
                stages,
                eps: c.eps.clone(),
                c0: c.c0,
                delta_m: (1.0 + performance.bounds().rho_max) * delta0,
                q_x0,
                performance,
            })?,
        }
    };
    Ok(RegulationLoop {
        config,
        quantizer,
        bounds,
        delta0,
        synthesized: c.auto,
    })
}

fn tracking(
    c: &TrackingSection,
    plant: &PlantModel,
    builtin: Option<&BuiltinScenario>,
    reference: ReferenceSignal,
    performance: Vec<PerformanceFunction>,
    horizon: f64,
) -> Result<TrackingLoop> {
    let n = plant.order();
    if let Some(k) = c.k {
        if k != c.stages.len() {
            bail!("controller.K = {k} but {} stages are listed", c.stages.len());
        }
    }
    check_odd(c.stages.iter().enumerate().flat_map(|(m, st)| {
        st.iter()
            .enumerate()
            .map(move |(i, g)| (format!("controller.stages[{m}][{i}].N"), g.power))
    }))?;
    let bounds: Vec<Arc<dyn TrackingBound>> = match (&c.f0, &c.f_star) {
        (Some(_), Some(_)) => bail!("give either controller.F0 or controller.F_star, not both"),
        (Some(f0), None) => {
            if f0.len() != n {
                bail!("controller.F0 has {} entries for n = {n}", f0.len());
            }
            f0.iter()
                .enumerate()
                .map(|(i, t)| {
                    ExprTrackingBound::parse(t, i + 1, n)
                        .map(|b| Arc::new(b) as Arc<dyn TrackingBound>)
                        .with_context(|| format!("controller.F0[{i}] = {t:?}"))
                })
                .collect::<Result<_>>()?
        }
        (None, Some(fs)) => {
            if fs.len() != n {
                bail!("controller.F_star has {} entries for n = {n}", fs.len());
            }
            fs.iter()
                .map(|&v| Arc::new(ConstTrackingBound(v)) as Arc<dyn TrackingBound>)
                .collect()
        }
        (None, None) => match builtin {
            Some(BuiltinScenario::Tracking(s)) => s.design.bounds.clone(),
            _ => standard_tracking_bounds(plant).context("controller: no F0 or F_star and no plant majorants")?,
        },
    };
    let fill = match &c.fill {
        Some(f) => f
            .iter()
            .enumerate()
            .map(|(i, s)| s.parse::<GainFill>().with_context(|| format!("controller.fill[{i}]")))
            .collect::<Result<Vec<_>>>()?,
        None => vec![GainFill::C; n],
    };
    if fill.len() != n {
        bail!("controller.fill has {} entries for n = {n}", fill.len());
    }
    let design = TrackingDesign {
        stages: c.stages.clone(),
        thresholds: c.thresholds.clone(),
        eps: c.eps.clone(),
        fill,
        bounds: bounds.clone(),
        rho_dot_bound: c.rho_dot_bound,
    };
    let worst = design.worst_case(plant, &reference, &performance, horizon)?;
    let config =
        synthesize_tracking(&design, plant, reference, performance, horizon, c.auto).context("tracking design")?;
    Ok(TrackingLoop {
        config,
        bounds,
        worst,
        synthesized: c.auto,
    })
}

/// Output root: explicit flag, then `BFPPC_OUT`, then `./out`.
pub fn output_root(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os("BFPPC_OUT") {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from("out"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_files_parse() {
        let s1 = parse_scenario(EXAMPLE1_JSON).unwrap();
        assert!(matches!(s1.setup, LoopSetup::Regulation(_)));
        assert_eq!(s1.plant.order(), 2);
        let s2 = parse_scenario(EXAMPLE2_JSON).unwrap();
        let LoopSetup::Tracking(t) = &s2.setup else { panic!() };
        assert_eq!(t.config.stage_count(), 2);
    }

    #[test]
    fn even_power_is_rejected() {
        let text = EXAMPLE1_JSON.replace("\"N\": [3, 3]", "\"N\": [2, 3]");
        assert_ne!(text, EXAMPLE1_JSON);
        let err = parse_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("N must be odd"), "{err}");
    }
}
