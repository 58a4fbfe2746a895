//! Config-driven orchestration behind the `relaxstab` binary: run
//! configuration, pipelines, summaries and the report merger.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dichotomy::{
    block_diagonalize, detect_turning_points, propagate_subspaces, verify_dichotomy, DichotomyOptions,
    TurningPointOptions,
};
use crate::error::{Error, Result};
use crate::linalg::{c64, RVec};
use crate::model::{check_all, system_from_name, HypothesisSettings, SharedSystem};
use crate::profile::{solve_profile_jinxin_on, solve_profile_shooting, ShootingOptions, WaveProfile};
use crate::resolvent::{frequency_grid, verify_equivalence, FrequencyPoint, ResolventField, SweepConfig};
use crate::symmetrizer::{
    constant_symmetrizer, default_theta_req, energy_estimate_check, symmetrizer_from_dichotomy, verify_symmetrizer,
};
use crate::timedomain::{
    truncation_pipeline, verify_classical_damping, verify_integrated_damping, verify_short_time, CutoffPair, FitCaps,
    Mode, RunSpec, SimOptions, SimState, Simulator, Weight,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "RELAXSTAB_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Hypotheses,
    Profile,
    ResolventSweep,
    Dichotomy,
    Symmetrizer,
    Simulate,
    Full,
}

impl Pipeline {
    pub fn name(&self) -> &'static str {
        match self {
            Pipeline::Hypotheses => "hypotheses",
            Pipeline::Profile => "profile",
            Pipeline::ResolventSweep => "resolvent-sweep",
            Pipeline::Dichotomy => "dichotomy",
            Pipeline::Symmetrizer => "symmetrizer",
            Pipeline::Simulate => "simulate",
            Pipeline::Full => "full",
        }
    }

    fn stages(&self) -> Vec<Pipeline> {
        match self {
            Pipeline::Full => vec![
                Pipeline::Hypotheses,
                Pipeline::Profile,
                Pipeline::ResolventSweep,
                Pipeline::Dichotomy,
                Pipeline::Symmetrizer,
                Pipeline::Simulate,
            ],
            p => vec![*p],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    /// Endstates `w₋`, `w₊`.
    pub minus: Option<Vec<f64>>,
    pub plus: Option<Vec<f64>>,
    /// Front speed; the Jin–Xin closed form derives it.
    pub speed: Option<f64>,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_profile_nodes")]
    pub nodes: usize,
    #[serde(default)]
    pub shooting: ShootingOptions,
}

fn default_half_width() -> f64 {
    30.0
}

fn default_profile_nodes() -> usize {
    1201
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub count_r: usize,
    pub count_phi: usize,
    pub eta: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            r_min: 10.0,
            r_max: 1000.0,
            count_r: 5,
            count_phi: 4,
            eta: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ResolventConfig {
    pub grid: GridConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DichotomyConfig {
    /// `λ = re + i im`
    pub lambda: [f64; 2],
    pub eta: Vec<f64>,
    pub options: DichotomyOptions,
    pub pairs: usize,
    pub tol: f64,
    /// Ray `(η, τ)` for turning-point detection (default `τ = 1`).
    pub turning_ray: Option<Vec<f64>>,
    pub turning: TurningPointOptions,
    pub turning_nodes: usize,
}

impl Default for DichotomyConfig {
    fn default() -> Self {
        DichotomyConfig {
            lambda: [2.0, 0.0],
            eta: vec![],
            options: DichotomyOptions::default(),
            pairs: 50,
            tol: 1e-6,
            turning_ray: None,
            turning: TurningPointOptions::default(),
            turning_nodes: 401,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymmetrizerConfig {
    pub theta_req: Option<f64>,
    pub energy_trials: usize,
    /// Frequency `|η|` for the frozen-coefficient symmetrizer at the endstates.
    pub constant_eta: f64,
    pub cond_cap: f64,
}

impl Default for SymmetrizerConfig {
    fn default() -> Self {
        SymmetrizerConfig {
            theta_req: None,
            energy_trials: 100,
            constant_eta: 10.0,
            cond_cap: 1e8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub half_width: f64,
    pub nodes: usize,
    pub t_end: f64,
    /// Fraction of the CFL limit used as time step.
    pub courant: f64,
    pub record_interval: f64,
    pub s: usize,
    /// Exponential weight rate `a` in `α = e^{a x}` (0 gives `α ≡ 1`).
    pub alpha: f64,
    pub mode: Mode,
    pub amplitude: f64,
    pub center: f64,
    pub tau_c: f64,
    pub caps: FitCaps,
    /// Overrides `γ = −θ/2` from the symmetrizer certificate.
    pub gamma: Option<f64>,
    pub options: SimOptions,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            half_width: 40.0,
            nodes: 801,
            t_end: 8.0,
            courant: 0.8,
            record_interval: 0.02,
            s: 2,
            alpha: 0.0,
            mode: Mode::Linearized,
            amplitude: 1e-3,
            center: 2.0,
            tau_c: 1.0,
            caps: FitCaps::default(),
            gamma: None,
            options: SimOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub pipeline: Option<Pipeline>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub system: SystemConfig,
    pub profile: ProfileConfig,
    #[serde(default)]
    pub hypotheses: HypothesisSettings,
    #[serde(default)]
    pub resolvent: ResolventConfig,
    #[serde(default)]
    pub dichotomy: DichotomyConfig,
    #[serde(default)]
    pub symmetrizer: SymmetrizerConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
}

impl RunConfig {
    /// The stable Jin–Xin front `a = 2`, `u₋ = 1`, `u₊ = 0`.
    pub fn jin_xin_default() -> Self {
        let mut params = BTreeMap::new();
        params.insert("a".to_string(), 2.0);
        RunConfig {
            schema_version: SCHEMA_VERSION,
            pipeline: None,
            seed: 0,
            out: None,
            system: SystemConfig {
                name: "jin-xin".into(),
                params,
            },
            profile: ProfileConfig {
                minus: Some(vec![1.0, 0.5]),
                plus: Some(vec![0.0, 0.0]),
                speed: None,
                half_width: default_half_width(),
                nodes: default_profile_nodes(),
                shooting: ShootingOptions::default(),
            },
            hypotheses: HypothesisSettings::default(),
            resolvent: ResolventConfig::default(),
            dichotomy: DichotomyConfig::default(),
            symmetrizer: SymmetrizerConfig::default(),
            simulate: SimulateConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "config".to_string());
            Error::usage(field, e.message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::usage("--config", format!("{}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::usage(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", self.schema_version),
            ));
        }
        let minus = self.profile.minus.as_ref().ok_or_else(|| Error::usage("profile.minus", "missing endstate"))?;
        let plus = self.profile.plus.as_ref().ok_or_else(|| Error::usage("profile.plus", "missing endstate"))?;
        if minus.len() != plus.len() {
            return Err(Error::usage("profile.plus", "endstates differ in length"));
        }
        if self.profile.nodes < 5 || !(self.profile.half_width > 0.0) {
            return Err(Error::usage("profile", "need nodes >= 5 and half_width > 0"));
        }
        if self.resolvent.grid.count_r == 0 || self.resolvent.grid.count_phi == 0 {
            return Err(Error::usage("resolvent.grid", "empty frequency grid"));
        }
        if self.simulate.s > 3 {
            return Err(Error::usage("simulate.s", "energies are supported up to order 3"));
        }
        Ok(())
    }

    fn endstates(&self) -> (RVec, RVec) {
        let v = |x: &Option<Vec<f64>>| RVec::from_vec(x.clone().unwrap_or_default());
        (v(&self.profile.minus), v(&self.profile.plus))
    }
}

/// One pass/fail line of a summary, with the constants behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub pass: bool,
    pub constants: BTreeMap<String, Option<f64>>,
    pub diagnostic: Option<String>,
}

impl CheckEntry {
    fn new(pass: bool, constants: &[(&str, f64)]) -> Self {
        CheckEntry {
            pass,
            constants: constants
                .iter()
                .map(|(k, v)| (k.to_string(), v.is_finite().then_some(*v)))
                .collect(),
            diagnostic: None,
        }
    }

    fn note(mut self, msg: impl Into<String>) -> Self {
        self.diagnostic = Some(msg.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub tool_version: String,
    pub pipeline: String,
    pub seed: u64,
    pub system: String,
    pub checks: BTreeMap<String, CheckEntry>,
    pub sections: BTreeMap<String, Value>,
    pub error: Option<String>,
    pub config: RunConfig,
}

impl Summary {
    pub fn all_pass(&self) -> bool {
        self.error.is_none() && self.checks.values().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes") + "\n"
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_REFUTED: i32 = 4;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Usage { .. } | Error::Compatibility(_) => EXIT_USAGE,
        _ => EXIT_NUMERIC,
    }
}

/// Writes via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Context<'c> {
    cfg: &'c RunConfig,
    sys: SharedSystem,
    out: Option<&'c Path>,
    verbose: bool,
    profile: Option<WaveProfile>,
    /// `θ` of the Lyapunov certificate, once available.
    theta: Option<f64>,
    summary: Summary,
}

impl Context<'_> {
    fn log(&self, msg: &str) {
        if self.verbose {
            eprintln!("[relaxstab] {msg}");
        }
    }

    fn check(&mut self, name: &str, entry: CheckEntry) {
        self.summary.checks.insert(name.to_string(), entry);
    }

    fn section<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.summary.sections.insert(name.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    fn artifact(&self, name: &str) -> Option<PathBuf> {
        self.out.map(|d| d.join(name))
    }

    fn build_profile(&self) -> Result<WaveProfile> {
        let (minus, plus) = self.cfg.endstates();
        let p = &self.cfg.profile;
        if self.cfg.system.name == "jin-xin" && p.speed.is_none() {
            let a = self.cfg.system.params.get("a").copied().unwrap_or(2.0);
            return solve_profile_jinxin_on(a, minus[0], plus[0], Some(p.half_width), p.nodes);
        }
        let s = p.speed.ok_or_else(|| Error::usage("profile.speed", "required for this system"))?;
        let opts = ShootingOptions {
            half_width: Some(p.half_width),
            nodes: p.nodes,
            ..p.shooting
        };
        solve_profile_shooting(self.sys.as_ref(), &minus, &plus, s, &opts)
    }

    fn profile(&mut self) -> Result<WaveProfile> {
        if self.profile.is_none() {
            self.profile = Some(self.build_profile()?);
        }
        Ok(self.profile.clone().expect("profile set"))
    }

    fn frequency(&self) -> FrequencyPoint {
        let d = &self.cfg.dichotomy;
        FrequencyPoint::new(d.eta.clone(), c64(d.lambda[0], d.lambda[1]))
    }

    fn stage(&mut self, p: Pipeline) -> Result<()> {
        self.log(&format!("stage {}", p.name()));
        match p {
            Pipeline::Hypotheses => self.hypotheses(),
            Pipeline::Profile => self.profile_stage(),
            Pipeline::ResolventSweep => self.sweep(),
            Pipeline::Dichotomy => self.dichotomy(),
            Pipeline::Symmetrizer => self.symmetrizer().map(|_| ()),
            Pipeline::Simulate => self.simulate(),
            Pipeline::Full => unreachable!("full is expanded into stages"),
        }
    }

    fn hypotheses(&mut self) -> Result<()> {
        let (minus, plus) = self.cfg.endstates();
        // a profile is only needed for the noncharacteristic check; fall
        // back to the constant state when none exists
        let profile = match self.profile() {
            Ok(p) => p,
            Err(e) => {
                self.log(&format!("no profile ({e}); checking endstates only"));
                WaveProfile::constant(minus.clone(), self.cfg.profile.speed.unwrap_or(0.0), 1.0, 5)
            }
        };
        let rep = check_all(self.sys.as_ref(), &profile, &[minus, plus], &self.cfg.hypotheses)?;
        self.check("hypotheses.a1", CheckEntry::new(rep.a1_pass, &[("margin", rep.a1_margin)]));
        self.check(
            "hypotheses.a2",
            CheckEntry::new(
                rep.a2_pass,
                &[("worst_imag", rep.a2_worst_imag), ("condition", rep.a2_condition)],
            ),
        );
        self.check(
            "hypotheses.a3",
            CheckEntry::new(rep.a3_pass, &[("coalescences", rep.a3_coalescences.len() as f64)]),
        );
        self.check(
            "hypotheses.chf",
            CheckEntry::new(rep.chf_pass, &[("theta", rep.chf_theta), ("eta_min", rep.chf_eta_min)]),
        );
        // genuine coupling is informational: it is stronger than needed
        let kw = CheckEntry::new(true, &[("min_coupling", rep.kawashima.min_coupling)]).note(format!(
            "genuine coupling {}",
            if rep.kawashima.genuine_coupling { "holds" } else { "fails" }
        ));
        self.check("hypotheses.kawashima", kw);
        self.section("hypotheses", &rep)
    }

    fn profile_stage(&mut self) -> Result<()> {
        let p = self.profile()?;
        let residual = p.residual(self.sys.as_ref())?;
        let end = p.endstate_error();
        self.check(
            "profile",
            CheckEntry::new(
                residual <= 1e-6,
                &[
                    ("residual", residual),
                    ("endstate_error", end),
                    ("speed", p.speed),
                    ("decay_rate", p.decay_rate),
                ],
            ),
        );
        if let Some(path) = self.artifact("profile.csv") {
            p.write_csv(&path)?;
        }
        self.section(
            "profile",
            &json!({"nodes": p.grid.len(), "half_width": p.right(), "speed": p.speed, "decay_rate": p.decay_rate}),
        )
    }

    fn sweep(&mut self) -> Result<()> {
        let p = self.profile()?;
        let g = &self.cfg.resolvent.grid;
        let grid = frequency_grid(g.r_min, g.r_max, g.count_r, g.count_phi, &g.eta);
        let mut cfg = self.cfg.resolvent.sweep.clone();
        cfg.seed = self.cfg.seed;
        let res = verify_equivalence(self.sys.as_ref(), &p, &grid, &cfg)?;
        let exp = res.absorption_exponent.unwrap_or(f64::NAN);
        self.check(
            "resolvent.equivalence",
            CheckEntry::new(
                res.agreement == 1.0,
                &[
                    ("agreement", res.agreement),
                    ("c_hfres", res.c_hfres),
                    ("c_pdamp", res.c_pdamp),
                    ("gamma_star", res.gamma_star),
                ],
            ),
        );
        self.check(
            "resolvent.absorption",
            CheckEntry::new((exp - (-1.0)).abs() <= 0.2, &[("exponent", exp)]),
        );
        if let Some(path) = self.artifact("sweep.csv") {
            res.write_csv(&path)?;
        }
        self.section(
            "resolvent",
            &json!({
                "points": res.points.len(),
                "singular": res.singular_count,
                "method": res.method,
                "bounded_constant": res.bounded_constant,
            }),
        )
    }

    fn dichotomy(&mut self) -> Result<()> {
        let p = self.profile()?;
        let d = &self.cfg.dichotomy;
        let field = ResolventField::new(self.sys.as_ref(), &p, self.frequency(), None)?;
        let data = propagate_subspaces(&field, &d.options)?;
        let rep = verify_dichotomy(&data, d.pairs, d.tol, self.cfg.seed)?;
        let sum = data.summary();
        let rel = (sum.decay.theta - sum.endstate_theta).abs() / sum.endstate_theta;
        self.check(
            "dichotomy.axioms",
            CheckEntry::new(
                rep.pass,
                &[
                    ("commuting_error", rep.commuting_error),
                    ("decay_ratio", rep.decay_ratio),
                    ("projector_error", rep.projector_error),
                ],
            ),
        );
        self.check(
            "dichotomy.rate",
            CheckEntry::new(
                rel <= 0.25,
                &[
                    ("theta", sum.decay.theta),
                    ("endstate_theta", sum.endstate_theta),
                    ("c", sum.decay.c),
                ],
            ),
        );
        let blocks = block_diagonalize(&data)?;
        self.check(
            "dichotomy.block_diagonal",
            CheckEntry::new(blocks.residual <= 1e-6, &[("residual", blocks.residual)]),
        );
        let ray = d.turning_ray.clone().unwrap_or_else(|| {
            let mut r = d.eta.clone();
            r.push(1.0);
            r
        });
        let xs = crate::profile::uniform_grid(p.left(), p.right(), d.turning_nodes);
        let tp = detect_turning_points(self.sys.as_ref(), &p, &ray, &xs, &d.turning)?;
        self.check(
            "dichotomy.turning_points",
            CheckEntry::new(true, &[("count", tp.points.len() as f64)])
                .note(format!("{} warnings", tp.warnings.len())),
        );
        if let Some(path) = self.artifact("frames.csv") {
            data.write_frames_csv(&path)?;
        }
        self.section("dichotomy", &json!({"summary": sum, "report": rep, "turning_points": tp}))
    }

    fn symmetrizer(&mut self) -> Result<f64> {
        if let Some(t) = self.theta {
            return Ok(t);
        }
        let p = self.profile()?;
        let sc = self.cfg.symmetrizer.clone();
        let field = ResolventField::new(self.sys.as_ref(), &p, self.frequency(), None)?;
        let data = propagate_subspaces(&field, &self.cfg.dichotomy.options)?;
        let (sym, _) = symmetrizer_from_dichotomy(&data)?;
        let req = sc.theta_req.unwrap_or_else(|| default_theta_req(&data.frames()));
        let cert = verify_symmetrizer(&sym, data.g_nodes(), req)?;
        let energy = if cert.theta_measured > 0.0 && sc.energy_trials > 0 {
            Some(energy_estimate_check(&sym, &field, cert.theta_measured, sc.energy_trials, self.cfg.seed)?)
        } else {
            None
        };
        let cert = match &energy {
            Some(e) => cert.with_energy(e.worst_ratio),
            None => cert,
        };
        self.check(
            "symmetrizer.certificate",
            CheckEntry::new(
                cert.pass,
                &[
                    ("theta_measured", cert.theta_measured),
                    ("theta_req", cert.theta_req),
                    ("c0", cert.c0_measured),
                    ("energy_ratio", cert.energy_check.unwrap_or(f64::NAN)),
                ],
            ),
        );
        let (minus, plus) = self.cfg.endstates();
        let d = self.sys.space_dim();
        let mut eta = vec![0.0; d];
        eta[0] = sc.constant_eta;
        let mut frozen = vec![];
        let mut ok = true;
        let mut theta_min = f64::INFINITY;
        for w in [&minus, &plus] {
            match constant_symmetrizer(self.sys.as_ref(), w, &eta, None, sc.cond_cap) {
                Ok(cs) => {
                    ok &= cs.theta > 0.0 && cs.theta_measured >= cs.theta2 - 1e-12;
                    theta_min = theta_min.min(cs.theta);
                    frozen.push(json!({"theta": cs.theta, "theta2": cs.theta2, "c0": cs.c0, "condition": cs.condition}));
                }
                Err(e) => {
                    ok = false;
                    frozen.push(json!({"error": e.to_string()}));
                }
            }
        }
        self.check("symmetrizer.frozen", CheckEntry::new(ok, &[("theta", theta_min)]));
        self.section("symmetrizer", &json!({"certificate": cert, "energy": energy, "frozen": frozen}))?;
        self.theta = Some(cert.theta_measured);
        Ok(cert.theta_measured)
    }

    fn simulate(&mut self) -> Result<()> {
        let sc = self.cfg.simulate.clone();
        let gamma = match sc.gamma {
            Some(g) => g,
            None => -0.5 * self.symmetrizer()?,
        };
        let p = self.profile()?;
        let sim = Simulator::front(self.sys.as_ref(), &p, sc.half_width, sc.nodes, sc.options)?;
        let n = sim.n;
        let init = SimState::from_fn(&sim.grid, n, |x, z| {
            let g = (-(x - sc.center).powi(2)).exp();
            z[0] = sc.amplitude * (x - sc.center) * g;
            for c in z.iter_mut().skip(1) {
                *c = sc.amplitude * g;
            }
        });
        let dt = sc.courant * sim.cfl_limit(sc.mode);
        let spec = RunSpec {
            t_end: sc.t_end,
            dt,
            mode: sc.mode,
            record_every: ((sc.record_interval / dt).ceil() as usize).max(1),
            s: sc.s,
            weight: if sc.alpha == 0.0 { Weight::Unit } else { Weight::Exp(sc.alpha) },
            keep_history: true,
        };
        let run = sim.run(init, &spec, None)?;
        let fit = verify_classical_damping(&run.trace, (0.0, sc.t_end), sc.caps)?;
        let integrated = verify_integrated_damping(&run.trace, fit.eta, fit.c);
        let short = verify_short_time(&run.trace);
        let hist = run.state.history.as_ref().expect("history kept");
        let trunc = truncation_pipeline(&sim, hist, CutoffPair::new(sc.tau_c, sc.t_end)?, gamma, sc.s)?;
        self.check(
            "simulate.classical_damping",
            CheckEntry::new(fit.feasible && fit.eta > 0.0, &[("eta", fit.eta), ("c", fit.c)]),
        );
        self.check(
            "simulate.integrated_damping",
            CheckEntry::new(
                integrated.min_relative_slack >= -1e-6,
                &[("min_slack", integrated.min_slack), ("relative_slack", integrated.min_relative_slack)],
            ),
        );
        self.check(
            "simulate.short_time",
            CheckEntry::new(!short.refuted, &[("c_short", short.c_short)]),
        );
        self.check(
            "simulate.truncation",
            CheckEntry::new(
                trunc.pass,
                &[
                    ("gamma", gamma),
                    ("c2", trunc.c2),
                    ("c_one", trunc.c_one),
                    ("c_two", trunc.c_two),
                    ("c_integrated", trunc.c_integrated),
                ],
            ),
        );
        self.check(
            "simulate.boundary",
            CheckEntry::new(run.boundary_ok, &[("max_boundary", run.max_boundary)]),
        );
        if let Some(path) = self.artifact("trace.csv") {
            run.trace.write_csv(&path)?;
        }
        self.section(
            "simulate",
            &json!({"fit": fit, "integrated": integrated, "short_time": short, "truncation": trunc, "dt": run.dt}),
        )
    }
}

/// Runs `pipeline` (or the config's own, or `full`) and returns the summary.
/// Module failures are recorded in `summary.error` rather than returned;
/// only setup errors surface as `Err`.
pub fn run(cfg: &RunConfig, pipeline: Option<Pipeline>, out: Option<&Path>, verbose: bool) -> Result<Summary> {
    cfg.validate()?;
    let pipeline = pipeline.or(cfg.pipeline).unwrap_or(Pipeline::Full);
    let sys = system_from_name(&cfg.system.name, &cfg.system.params)?;
    let (minus, _) = cfg.endstates();
    if minus.len() != sys.state_dim() {
        return Err(Error::usage(
            "profile.minus",
            format!("expected {} components, found {}", sys.state_dim(), minus.len()),
        ));
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let mut ctx = Context {
        cfg,
        sys,
        out,
        verbose,
        profile: None,
        theta: None,
        summary: Summary {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            pipeline: pipeline.name().to_string(),
            seed: cfg.seed,
            system: cfg.system.name.clone(),
            checks: BTreeMap::new(),
            sections: BTreeMap::new(),
            error: None,
            config: cfg.clone(),
        },
    };
    for stage in pipeline.stages() {
        if let Err(e) = ctx.stage(stage) {
            ctx.log(&format!("{} failed: {e}", stage.name()));
            ctx.summary.error = Some(format!("{}: {e}", stage.name()));
            break;
        }
    }
    if let Some(dir) = out {
        write_atomic(&dir.join("summary.json"), ctx.summary.to_json().as_bytes())?;
    }
    Ok(ctx.summary)
}

pub fn summary_exit_code(s: &Summary) -> i32 {
    if s.error.is_some() {
        EXIT_NUMERIC
    } else if s.all_pass() {
        EXIT_OK
    } else {
        EXIT_REFUTED
    }
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub run: String,
    pub check: String,
    pub pass: bool,
    pub constants: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub runs: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub all_pass: bool,
}

impl Report {
    pub fn table(&self) -> String {
        let mut out = format!("{:<28} {:<32} {:<5} constants\n", "run", "check", "pass");
        for r in &self.rows {
            let consts: Vec<String> = r
                .constants
                .iter()
                .map(|(k, v)| match v {
                    Some(v) => format!("{k}={v:.4e}"),
                    None => format!("{k}=n/a"),
                })
                .collect();
            out += &format!(
                "{:<28} {:<32} {:<5} {}\n",
                r.run,
                r.check,
                if r.pass { "ok" } else { "FAIL" },
                consts.join(" ")
            );
        }
        out
    }
}

fn summary_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("summary.json")
    } else {
        p.to_path_buf()
    }
}

/// Merges run summaries (files or output directories) into one table.
pub fn report(paths: &[PathBuf]) -> Result<Report> {
    if paths.is_empty() {
        return Err(Error::usage("paths", "no summaries given"));
    }
    let mut rows = vec![];
    let mut runs = vec![];
    let mut all_pass = true;
    for p in paths {
        let path = summary_path(p);
        let text = fs::read_to_string(&path).map_err(|e| Error::usage("paths", format!("{}: {e}", path.display())))?;
        let head: Value = serde_json::from_str(&text)?;
        let version = head.get("schema_version").and_then(Value::as_u64);
        if version != Some(SCHEMA_VERSION as u64) {
            return Err(Error::Compatibility(format!(
                "{} has schema version {version:?}, expected {SCHEMA_VERSION}",
                path.display()
            )));
        }
        let s: Summary = serde_json::from_value(head)?;
        let name = p.display().to_string();
        all_pass &= s.all_pass();
        if let Some(e) = &s.error {
            rows.push(ReportRow {
                run: name.clone(),
                check: "error".into(),
                pass: false,
                constants: BTreeMap::new(),
            });
            let _ = e;
        }
        for (check, entry) in &s.checks {
            rows.push(ReportRow {
                run: name.clone(),
                check: check.clone(),
                pass: entry.pass,
                constants: entry.constants.clone(),
            });
        }
        runs.push(name);
    }
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        runs,
        rows,
        all_pass,
    })
}

/// Applies the thread-count override from the environment, if set.
pub fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::usage(THREADS_ENV, format!("`{v}` is not a thread count")))?;
        // a second initialization (tests) is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut c = RunConfig::jin_xin_default();
        c.resolvent.grid = GridConfig {
            r_min: 10.0,
            r_max: 100.0,
            count_r: 2,
            count_phi: 2,
            eta: vec![],
        };
        c.resolvent.sweep.trials = 4;
        c.symmetrizer.energy_trials = 5;
        c
    }

    #[test]
    fn default_config_round_trips_through_toml() {
        let c = RunConfig::jin_xin_default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn missing_endstates_name_the_field() {
        let text = r#"
schema_version = 1
[system]
name = "jin-xin"
[profile]
plus = [0.0, 0.0]
"#;
        match RunConfig::from_toml(text) {
            Err(Error::Usage { field, .. }) => assert_eq!(field, "profile.minus"),
            other => panic!("{other:?}"),
        }
        let text = "schema_version = 1\n[system]\nname = \"jin-xin\"\n";
        match RunConfig::from_toml(text) {
            Err(Error::Usage { field, .. }) => assert_eq!(field, "profile"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_schema_is_usage_error() {
        let mut c = RunConfig::jin_xin_default();
        c.schema_version = 7;
        let text = toml::to_string(&c).unwrap();
        assert!(matches!(RunConfig::from_toml(&text), Err(Error::Usage { .. })));
    }

    #[test]
    fn supercharacteristic_hypotheses_fail() {
        let mut c = small();
        c.system.params.insert("a".into(), 0.5);
        let s = run(&c, Some(Pipeline::Hypotheses), None, false).unwrap();
        assert!(!s.checks["hypotheses.chf"].pass);
        assert_eq!(summary_exit_code(&s), EXIT_REFUTED);
    }

    #[test]
    fn profile_pipeline_passes() {
        let s = run(&small(), Some(Pipeline::Profile), None, false).unwrap();
        assert_eq!(summary_exit_code(&s), EXIT_OK, "{s:?}");
    }

    #[test]
    fn report_merges_and_checks_versions() {
        let dir = std::env::temp_dir().join(format!("relaxstab-report-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let s = run(&small(), Some(Pipeline::Profile), Some(&dir), false).unwrap();
        let r = report(&[dir.clone()]).unwrap();
        assert_eq!(r.rows.len(), s.checks.len());
        assert!(r.all_pass);
        assert!(matches!(report(&[]), Err(Error::Usage { .. })));
        let bad = dir.join("old.json");
        fs::write(&bad, "{\"schema_version\": 0}").unwrap();
        assert!(matches!(report(&[bad]), Err(Error::Compatibility(_))));
        fs::remove_dir_all(&dir).unwrap();
    }
}
