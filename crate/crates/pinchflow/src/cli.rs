//! Command-line front end: six analysis commands, a resolved run
//! configuration, and deterministic artifact emission.
//!
//! Every command writes its results under `--out` as JSON (and CSV where
//! there is a series to tabulate), with a metadata block echoing the
//! resolved configuration. The echo uses the same `key = value` grammar
//! the optional `--config` file accepts, so a report can be reproduced
//! from its own header. Exit codes: 0 success, 1 when a checked
//! mathematical condition fails, 2 for errors of any other kind.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::flow::{self, FlowConfig, SupportProfile};
use crate::phi::{check_phi_conditions, PhiFunction};
use crate::pinch::{threshold_table, weakest_pinching};
use crate::report::{fmt_float, Csv, Json};
use crate::sphere_ode::{solve_psi, DEFAULT_REL_TOL};
use crate::symfunc::{
    check_speed_conditions, classify_convexity, ConeSampler, Convexity, SpeedFunction,
};

/// Which analysis a process run performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    CheckF,
    CheckPhi,
    PinchThreshold,
    SphereOde,
    Flow,
    SsResidual,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::CheckF => "check-f",
            CommandKind::CheckPhi => "check-phi",
            CommandKind::PinchThreshold => "pinch-threshold",
            CommandKind::SphereOde => "sphere-ode",
            CommandKind::Flow => "flow",
            CommandKind::SsResidual => "ss-residual",
        }
    }

    /// Configuration keys the command accepts, in echo order.
    fn keys(self) -> &'static [&'static str] {
        match self {
            CommandKind::CheckF => &["f", "n", "samples", "seed", "out"],
            CommandKind::CheckPhi => &["phi", "zmin", "zmax", "grid", "seed", "out"],
            CommandKind::PinchThreshold => &["f", "n", "c", "count", "seed", "out"],
            CommandKind::SphereOde => &["phi", "r", "tol", "seed", "out"],
            CommandKind::Flow | CommandKind::SsResidual => {
                &["f", "phi", "n", "shape", "m", "dt_safety", "seed", "out"]
            }
        }
    }
}

/// Fully resolved configuration of one command invocation. Fields not
/// meaningful for the command stay at their defaults and are neither
/// settable nor echoed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    pub f_id: String,
    pub phi_id: String,
    pub n: usize,
    pub c: f64,
    pub r: f64,
    pub tol: f64,
    pub m: usize,
    pub dt_safety: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub shape: String,
    pub samples: usize,
    pub count: usize,
    pub zmin: f64,
    pub zmax: f64,
    pub grid: usize,
}

fn invalid(key: &str, reason: impl Into<String>) -> Error {
    Error::ConfigInvalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

impl RunConfig {
    pub fn default_for(command: CommandKind) -> Self {
        RunConfig {
            command,
            f_id: String::new(),
            phi_id: String::new(),
            n: 2,
            c: 0.0,
            r: 1.0,
            tol: DEFAULT_REL_TOL,
            m: 256,
            dt_safety: 1.0,
            seed: 0,
            out_dir: PathBuf::from("."),
            shape: "sphere:1".to_string(),
            samples: 10_000,
            count: 100,
            zmin: 1e-6,
            zmax: 1e6,
            grid: 4001,
        }
    }

    /// Set one field by its configuration key. Rejects keys the command
    /// does not accept and values that fail to parse.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<()> {
        if !self.command.keys().contains(&key) {
            return Err(invalid(
                key,
                format!("unknown key for {}", self.command.name()),
            ));
        }
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| invalid(key, format!("cannot parse value '{value}'")))
        }
        match key {
            "f" => self.f_id = value.to_string(),
            "phi" => self.phi_id = value.to_string(),
            "n" => self.n = num(key, value)?,
            "c" => self.c = num(key, value)?,
            "r" => self.r = num(key, value)?,
            "tol" => self.tol = num(key, value)?,
            "m" => self.m = num(key, value)?,
            "dt_safety" => self.dt_safety = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "out" => self.out_dir = PathBuf::from(value),
            "shape" => self.shape = value.to_string(),
            "samples" => self.samples = num(key, value)?,
            "count" => self.count = num(key, value)?,
            "zmin" => self.zmin = num(key, value)?,
            "zmax" => self.zmax = num(key, value)?,
            "grid" => self.grid = num(key, value)?,
            _ => unreachable!("keys() admitted {key}"),
        }
        Ok(())
    }

    /// The command's configuration as `(key, value)` pairs; parsing them
    /// back with [`RunConfig::from_pairs`] reproduces the config exactly.
    pub fn pairs(&self) -> Vec<(String, String)> {
        self.command
            .keys()
            .iter()
            .map(|&key| {
                let value = match key {
                    "f" => self.f_id.clone(),
                    "phi" => self.phi_id.clone(),
                    "n" => self.n.to_string(),
                    "c" => fmt_float(self.c),
                    "r" => fmt_float(self.r),
                    "tol" => fmt_float(self.tol),
                    "m" => self.m.to_string(),
                    "dt_safety" => fmt_float(self.dt_safety),
                    "seed" => self.seed.to_string(),
                    "out" => self.out_dir.to_string_lossy().into_owned(),
                    "shape" => self.shape.clone(),
                    "samples" => self.samples.to_string(),
                    "count" => self.count.to_string(),
                    "zmin" => fmt_float(self.zmin),
                    "zmax" => fmt_float(self.zmax),
                    "grid" => self.grid.to_string(),
                    _ => unreachable!(),
                };
                (key.to_string(), value)
            })
            .collect()
    }

    pub fn from_pairs(command: CommandKind, pairs: &[(String, String)]) -> Result<Self> {
        let mut config = RunConfig::default_for(command);
        for (key, value) in pairs {
            config.set_key(key, value)?;
        }
        Ok(config)
    }

    /// Apply a `key = value` override file on top of the flag values.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(invalid(
                    "config",
                    format!("line {}: expected 'key = value', got '{line}'", lineno + 1),
                ));
            };
            self.set_key(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let keys = self.command.keys();
        if keys.contains(&"f") && self.f_id.is_empty() {
            return Err(invalid("f", "required (flag --f or config key)"));
        }
        if keys.contains(&"phi") && self.phi_id.is_empty() {
            return Err(invalid("phi", "required (flag --phi or config key)"));
        }
        if self.n != 2 && self.n != 3 {
            return Err(invalid("n", format!("must be 2 or 3, got {}", self.n)));
        }
        if !self.c.is_finite() {
            return Err(invalid("c", "must be finite"));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(invalid("r", format!("must be positive, got {}", self.r)));
        }
        if !(self.tol > 0.0 && self.tol < 0.1) {
            return Err(invalid("tol", format!("must lie in (0, 0.1), got {}", self.tol)));
        }
        if self.m < flow::MIN_GRID {
            return Err(invalid(
                "m",
                format!("grid needs at least {} points, got {}", flow::MIN_GRID, self.m),
            ));
        }
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return Err(invalid(
                "dt_safety",
                format!("must lie in (0, 1], got {}", self.dt_safety),
            ));
        }
        if self.samples == 0 {
            return Err(invalid("samples", "must be positive"));
        }
        if self.count == 0 {
            return Err(invalid("count", "must be positive"));
        }
        if !(self.zmin > 0.0 && self.zmin < self.zmax && self.zmax.is_finite()) {
            return Err(invalid(
                "zmin",
                format!("need 0 < zmin < zmax, got [{}, {}]", self.zmin, self.zmax),
            ));
        }
        if self.grid < 1000 {
            return Err(invalid(
                "grid",
                format!("needs at least 1000 points, got {}", self.grid),
            ));
        }
        if keys.contains(&"shape") && self.shape.trim().is_empty() {
            return Err(invalid("shape", "required"));
        }
        Ok(())
    }
}

#[derive(Parser)]
#[command(
    name = "pinchflow",
    version,
    about = "Curvature-contraction analysis: speed and modifier admissibility checks, \
             pinching thresholds, sphere scale solutions, and axisymmetric flow runs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Optional key = value file applied on top of the flags.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for sampled checks; echoed into every artifact (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Directory the artifacts are written into (default ".").
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckFArgs {
    /// Speed id: mean | sigma-k:<k> | norm-A | gauss-root.
    #[arg(long = "f", value_name = "ID")]
    f: Option<String>,
    /// Number of principal curvatures, 2 or 3 (default 2).
    #[arg(long)]
    n: Option<usize>,
    /// Sample count for the condition checks (default 10000).
    #[arg(long)]
    samples: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CheckPhiArgs {
    /// Modifier id: power-sum:c1,k1;c2,k2 | log-power:<p> | shifted-entropy:<z0> | power:<alpha>.
    #[arg(long = "phi", value_name = "ID")]
    phi: Option<String>,
    /// Lower end of the scanned range (default 1e-6).
    #[arg(long)]
    zmin: Option<f64>,
    /// Upper end of the scanned range (default 1e6).
    #[arg(long)]
    zmax: Option<f64>,
    /// Points in the log-spaced scan, at least 1000 (default 4001).
    #[arg(long)]
    grid: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct PinchThresholdArgs {
    /// Speed id.
    #[arg(long = "f", value_name = "ID")]
    f: Option<String>,
    /// Number of principal curvatures, 2 or 3 (default 2).
    #[arg(long)]
    n: Option<usize>,
    /// Additive constant in the decay bound (default 0).
    #[arg(long = "c")]
    c: Option<f64>,
    /// Rows in the epsilon table (default 100).
    #[arg(long)]
    count: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SphereOdeArgs {
    /// Modifier id.
    #[arg(long = "phi", value_name = "ID")]
    phi: Option<String>,
    /// Initial sphere radius (default 1).
    #[arg(long = "r")]
    r: Option<f64>,
    /// Relative step tolerance in (0, 0.1) (default 1e-8).
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct FlowArgs {
    /// Speed id.
    #[arg(long = "f", value_name = "ID")]
    f: Option<String>,
    /// Modifier id.
    #[arg(long = "phi", value_name = "ID")]
    phi: Option<String>,
    /// Number of principal curvatures, 2 or 3 (default 2).
    #[arg(long)]
    n: Option<usize>,
    /// Initial shape: sphere:<R> | spheroid:<a>,<b> | file:<path> (default sphere:1).
    #[arg(long, value_name = "SHAPE")]
    shape: Option<String>,
    /// Grid resolution over the colatitude (default 256; ignored for file shapes).
    #[arg(long)]
    m: Option<usize>,
    /// Fraction of the stability bound taken per step, in (0, 1] (default 1).
    #[arg(long = "dt-safety")]
    dt_safety: Option<f64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Check the admissibility conditions of a curvature speed.
    CheckF(CheckFArgs),
    /// Check the admissibility conditions of a flow modifier.
    CheckPhi(CheckPhiArgs),
    /// Scan pinching constants and find the weakest admissible pinching.
    PinchThreshold(PinchThresholdArgs),
    /// Solve the exact scale equation for a shrinking sphere.
    SphereOde(SphereOdeArgs),
    /// Run the axisymmetric contraction flow to extinction.
    Flow(FlowArgs),
    /// Run the flow and report the self-similarity residual of the start shape.
    SsResidual(FlowArgs),
}

fn apply_common(config: &mut RunConfig, common: &CommonArgs) -> Result<()> {
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    if let Some(path) = &common.config {
        config.apply_file(path)?;
    }
    Ok(())
}

fn resolve(command: Command) -> Result<RunConfig> {
    macro_rules! take {
        ($config:ident, $args:ident: $($field:ident => $target:ident),+) => {
            $(if let Some(v) = $args.$field { $config.$target = v; })+
        };
    }
    let config = match command {
        Command::CheckF(args) => {
            let mut config = RunConfig::default_for(CommandKind::CheckF);
            take!(config, args: f => f_id, n => n, samples => samples);
            apply_common(&mut config, &args.common)?;
            config
        }
        Command::CheckPhi(args) => {
            let mut config = RunConfig::default_for(CommandKind::CheckPhi);
            take!(config, args: phi => phi_id, zmin => zmin, zmax => zmax, grid => grid);
            apply_common(&mut config, &args.common)?;
            config
        }
        Command::PinchThreshold(args) => {
            let mut config = RunConfig::default_for(CommandKind::PinchThreshold);
            take!(config, args: f => f_id, n => n, c => c, count => count);
            apply_common(&mut config, &args.common)?;
            config
        }
        Command::SphereOde(args) => {
            let mut config = RunConfig::default_for(CommandKind::SphereOde);
            take!(config, args: phi => phi_id, r => r, tol => tol);
            apply_common(&mut config, &args.common)?;
            config
        }
        Command::Flow(args) => {
            let mut config = RunConfig::default_for(CommandKind::Flow);
            take!(config, args: f => f_id, phi => phi_id, n => n, shape => shape,
                  m => m, dt_safety => dt_safety);
            apply_common(&mut config, &args.common)?;
            config
        }
        Command::SsResidual(args) => {
            let mut config = RunConfig::default_for(CommandKind::SsResidual);
            take!(config, args: f => f_id, phi => phi_id, n => n, shape => shape,
                  m => m, dt_safety => dt_safety);
            apply_common(&mut config, &args.common)?;
            config
        }
    };
    config.validate()?;
    Ok(config)
}

fn metadata_json(config: &RunConfig) -> Json {
    let mut echo = Json::obj();
    for (key, value) in config.pairs() {
        echo.push(&key, Json::str(value));
    }
    let mut meta = Json::obj();
    meta.push("tool", Json::str("pinchflow"))
        .push("version", Json::str(env!("CARGO_PKG_VERSION")))
        .push("command", Json::str(config.command.name()))
        .push("config", echo);
    meta
}

fn csv_meta(config: &RunConfig) -> Vec<String> {
    let mut lines = vec![
        format!("pinchflow {}", env!("CARGO_PKG_VERSION")),
        format!("command = {}", config.command.name()),
    ];
    for (key, value) in config.pairs() {
        lines.push(format!("{key} = {value}"));
    }
    lines
}

fn write_artifact(config: &RunConfig, name: &str, content: &str) -> Result<()> {
    fs::create_dir_all(&config.out_dir)?;
    fs::write(config.out_dir.join(name), content)?;
    Ok(())
}

fn float_array(values: &[f64]) -> Json {
    Json::Arr(values.iter().map(|&v| Json::num(v)).collect())
}

/// Run the resolved command, write its artifacts, and return the process
/// exit code (0 pass, 1 condition failure). Errors map to exit code 2 in
/// [`run_cli`].
pub fn dispatch(config: &RunConfig) -> Result<i32> {
    match config.command {
        CommandKind::CheckF => run_check_f(config),
        CommandKind::CheckPhi => run_check_phi(config),
        CommandKind::PinchThreshold => run_pinch_threshold(config),
        CommandKind::SphereOde => run_sphere_ode(config),
        CommandKind::Flow => run_flow(config),
        CommandKind::SsResidual => run_ss_residual(config),
    }
}

fn run_check_f(config: &RunConfig) -> Result<i32> {
    let f = SpeedFunction::parse(&config.f_id, config.n)?;
    let mut sampler = ConeSampler::positive(config.n, config.seed)?;
    let conditions = check_speed_conditions(&f, &mut sampler, config.samples)?;
    let convexity = classify_convexity(&f, &mut sampler, config.samples)?;

    let mut cond = Json::obj();
    cond.push("samples", Json::Int(conditions.samples as i64))
        .push("symmetry_pass", Json::Bool(conditions.symmetry_pass))
        .push("symmetry_worst", Json::num(conditions.symmetry_worst))
        .push("symmetry_witness", float_array(&conditions.symmetry_witness))
        .push("monotonicity_pass", Json::Bool(conditions.monotonicity_pass))
        .push("gradient_min", Json::num(conditions.gradient_min))
        .push(
            "monotonicity_witness",
            float_array(&conditions.monotonicity_witness),
        )
        .push("homogeneity_pass", Json::Bool(conditions.homogeneity_pass))
        .push("homogeneity_worst", Json::num(conditions.homogeneity_worst))
        .push(
            "homogeneity_witness",
            float_array(&conditions.homogeneity_witness),
        )
        .push("positivity_pass", Json::Bool(conditions.positivity_pass))
        .push("value_min", Json::num(conditions.value_min))
        .push(
            "positivity_witness",
            float_array(&conditions.positivity_witness),
        )
        .push(
            "normalization_error",
            Json::num(conditions.normalization_error),
        )
        .push("normalization_pass", Json::Bool(conditions.normalization_pass))
        .push("all_pass", Json::Bool(conditions.all_pass()));

    let class = match convexity.class {
        Convexity::Convex => "convex",
        Convexity::Concave => "concave",
        Convexity::Neither => "neither",
    };
    let mut conv = Json::obj();
    conv.push("class", Json::str(class))
        .push("margin", Json::num(convexity.margin))
        .push("samples", Json::Int(convexity.samples as i64));

    let mut root = Json::obj();
    root.push("metadata", metadata_json(config))
        .push("conditions", cond)
        .push("convexity", conv);
    write_artifact(config, "check_f.json", &root.to_string_pretty())?;
    Ok(if conditions.all_pass() { 0 } else { 1 })
}

fn run_check_phi(config: &RunConfig) -> Result<i32> {
    let phi = PhiFunction::parse(&config.phi_id)?;
    let report = check_phi_conditions(&phi, config.zmin, config.zmax, config.grid)?;

    let mut body = Json::obj();
    body.push("zmin", Json::num(report.zmin))
        .push("zmax", Json::num(report.zmax))
        .push("grid", Json::Int(report.grid as i64))
        .push("origin_value", Json::num(report.origin_value))
        .push("pass_origin", Json::Bool(report.pass_origin))
        .push("deriv_min", Json::num(report.deriv_min))
        .push("deriv_argmin", Json::num(report.deriv_argmin))
        .push("pass_increasing", Json::Bool(report.pass_increasing))
        .push("second_min", Json::num(report.second_min))
        .push("second_argmin", Json::num(report.second_argmin))
        .push("pass_convex", Json::Bool(report.pass_convex))
        .push("c_estimate", Json::num(report.c_estimate))
        .push("c_argmax", Json::num(report.c_argmax))
        .push("pass_bounded_ratio", Json::Bool(report.pass_bounded_ratio))
        .push("all_pass", Json::Bool(report.all_pass()));

    let mut root = Json::obj();
    root.push("metadata", metadata_json(config))
        .push("conditions", body);
    write_artifact(config, "check_phi.json", &root.to_string_pretty())?;
    Ok(if report.all_pass() { 0 } else { 1 })
}

fn run_pinch_threshold(config: &RunConfig) -> Result<i32> {
    let f = SpeedFunction::parse(&config.f_id, config.n)?;
    let table = threshold_table(&f, config.c, config.count)?;
    let star = match weakest_pinching(&f, config.c) {
        Ok(eps) => Ok(eps),
        Err(Error::NotAchievable { q1 }) => Err(q1),
        Err(other) => return Err(other),
    };

    let mut rows = Vec::with_capacity(table.len());
    for entry in &table {
        let mut row = Json::obj();
        row.push("epsilon", Json::num(entry.epsilon))
            .push("m0", Json::num(entry.m0))
            .push("m1", Json::num(entry.m1))
            .push("m2", Json::num(entry.m2))
            .push("q", Json::num(entry.q));
        rows.push(row);
    }
    let mut body = Json::obj();
    body.push("achievable", Json::Bool(star.is_ok()));
    match star {
        Ok(eps) => body.push("epsilon_star", Json::num(eps)),
        Err(q1) => body.push("epsilon_star", Json::Null).push("q_at_one", Json::num(q1)),
    };
    body.push("table", Json::Arr(rows));

    let mut root = Json::obj();
    root.push("metadata", metadata_json(config))
        .push("threshold", body);
    write_artifact(config, "pinch_threshold.json", &root.to_string_pretty())?;

    let mut csv = Csv::new(&csv_meta(config), &["epsilon", "m0", "m1", "m2", "q"]);
    for entry in &table {
        csv.row_floats(&[entry.epsilon, entry.m0, entry.m1, entry.m2, entry.q]);
    }
    write_artifact(config, "pinch_threshold.csv", &csv.finish())?;
    Ok(if star.is_ok() { 0 } else { 1 })
}

/// Closed-form time law t(psi), known for two modifier ids; used to
/// publish a residual whenever the solved modifier matches one.
fn closed_form_time(phi_id: &str, r: f64, psi: f64) -> Option<f64> {
    match phi_id.trim() {
        // Phi(z) = z + z^3: radius s obeys ds/dt = -(s^2 + 1)/s^3.
        "power-sum:1,1;1,3" => {
            let s = r * psi;
            Some(0.5 * (r * r - s * s) - 0.5 * ((1.0 + r * r) / (1.0 + s * s)).ln())
        }
        // Phi(z) = z: ds/dt = -1/s.
        "power:1" => Some(0.5 * r * r * (1.0 - psi * psi)),
        _ => None,
    }
}

fn run_sphere_ode(config: &RunConfig) -> Result<i32> {
    let phi = PhiFunction::parse(&config.phi_id)?;
    let trajectory = solve_psi(config.r, &phi, config.tol)?;

    let mut csv = Csv::new(&csv_meta(config), &["t", "psi", "psi_prime"]);
    for sample in &trajectory.samples {
        csv.row_floats(&[sample.t, sample.psi, sample.dpsi]);
    }
    write_artifact(config, "sphere_ode.csv", &csv.finish())?;

    let residual_max = trajectory.samples.iter().try_fold(0.0_f64, |acc, sample| {
        closed_form_time(&config.phi_id, config.r, sample.psi)
            .map(|t_exact| acc.max((sample.t - t_exact).abs()))
    });

    let mut body = Json::obj();
    body.push("r", Json::num(trajectory.r))
        .push("extinction_time", Json::num(trajectory.extinction_time))
        .push("tail_exponent", Json::num(trajectory.tail_exponent))
        .push("tail_truncated", Json::Bool(trajectory.tail_truncated))
        .push("samples", Json::Int(trajectory.samples.len() as i64));
    if let Some(residual) = residual_max {
        body.push("closed_form_residual_max", Json::num(residual));
    }
    let mut root = Json::obj();
    root.push("metadata", metadata_json(config))
        .push("solution", body);
    write_artifact(config, "sphere_ode.json", &root.to_string_pretty())?;
    Ok(0)
}

fn initial_profile(config: &RunConfig) -> Result<SupportProfile> {
    let descriptor = config.shape.trim();
    if let Some(rest) = descriptor.strip_prefix("sphere:") {
        let radius: f64 = rest
            .trim()
            .parse()
            .map_err(|_| invalid("shape", format!("bad sphere radius in '{descriptor}'")))?;
        return SupportProfile::sphere(radius, config.m, config.n);
    }
    if let Some(rest) = descriptor.strip_prefix("spheroid:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 2 {
            return Err(invalid(
                "shape",
                format!("spheroid needs two semi-axes, got '{descriptor}'"),
            ));
        }
        let a: f64 = parts[0]
            .trim()
            .parse()
            .map_err(|_| invalid("shape", format!("bad semi-axis in '{descriptor}'")))?;
        let b: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| invalid("shape", format!("bad semi-axis in '{descriptor}'")))?;
        return SupportProfile::spheroid(a, b, config.m, config.n);
    }
    if let Some(path) = descriptor.strip_prefix("file:") {
        let profile = SupportProfile::from_file(Path::new(path.trim()))?;
        if profile.dim() != config.n {
            return Err(invalid(
                "shape",
                format!(
                    "shape file dimension {} does not match n = {}",
                    profile.dim(),
                    config.n
                ),
            ));
        }
        return Ok(profile);
    }
    Err(invalid(
        "shape",
        format!("expected sphere:<R>, spheroid:<a>,<b>, or file:<path>, got '{descriptor}'"),
    ))
}

fn flow_config(config: &RunConfig) -> FlowConfig {
    FlowConfig {
        dt_safety: config.dt_safety,
        ..FlowConfig::default()
    }
}

fn run_the_flow(config: &RunConfig) -> Result<(SpeedFunction, PhiFunction, flow::FlowRun)> {
    let f = SpeedFunction::parse(&config.f_id, config.n)?;
    let phi = PhiFunction::parse(&config.phi_id)?;
    let initial = initial_profile(config)?;
    let run = flow::run(&initial, &f, &phi, &flow_config(config))?;
    Ok((f, phi, run))
}

fn flow_summary_json(config: &RunConfig, run: &flow::FlowRun) -> Json {
    let summary = &run.summary;
    let mut body = Json::obj();
    body.push("grid", Json::Int(run.initial.len() as i64))
        .push("dimension", Json::Int(run.initial.dim() as i64))
        .push("steps", Json::Int(summary.steps as i64))
        .push("t_end", Json::num(summary.t_end))
        .push(
            "extinction_bracket",
            float_array(&[summary.extinction_bracket.0, summary.extinction_bracket.1]),
        )
        .push("extinction_estimate", Json::num(summary.extinction_estimate))
        .push("final_min_s", Json::num(summary.final_min_s))
        .push("final_psi_fit", Json::num(summary.final_psi_fit))
        .push(
            "final_kappa_ratio_max",
            Json::num(summary.final_kappa_ratio_max),
        )
        .push("records", Json::Int(run.records.len() as i64))
        .push("psi_samples", Json::Int(run.psi_records.len() as i64));
    let mut root = Json::obj();
    root.push("metadata", metadata_json(config)).push("run", body);
    root
}

fn run_flow(config: &RunConfig) -> Result<i32> {
    let (_, _, run) = run_the_flow(config)?;

    let mut csv = Csv::new(
        &csv_meta(config),
        &[
            "t",
            "min_s",
            "max_s",
            "kappa_ratio_max",
            "bound_min",
            "F_min",
            "F_max",
            "ss_residual",
        ],
    );
    for record in &run.records {
        let d = &record.diagnostics;
        csv.row_floats(&[
            record.t,
            record.min_s,
            record.max_s,
            d.kappa_ratio_max,
            d.bound_min,
            d.f_range.0,
            d.f_range.1,
            d.ss_residual_norm,
        ]);
    }
    write_artifact(config, "flow.csv", &csv.finish())?;
    write_artifact(
        config,
        "flow.json",
        &flow_summary_json(config, &run).to_string_pretty(),
    )?;
    write_artifact(config, "final_shape.txt", &run.final_rescaled.render())?;
    Ok(0)
}

fn run_ss_residual(config: &RunConfig) -> Result<i32> {
    let (f, phi, run) = run_the_flow(config)?;
    let report = flow::self_similarity_report(&run, &f, &phi)?;

    let mut csv = Csv::new(
        &csv_meta(config),
        &[
            "t",
            "psi",
            "psi_prime",
            "residual_max",
            "residual_rms",
            "normalized_max",
        ],
    );
    for row in &report.rows {
        csv.row_floats(&[
            row.t,
            row.psi,
            row.psi_prime,
            row.residual_max,
            row.residual_rms,
            row.normalized_max,
        ]);
    }
    write_artifact(config, "ss_residual.csv", &csv.finish())?;

    let mut body = Json::obj();
    body.push("worst_normalized", Json::num(report.worst_normalized))
        .push("start_normalized", Json::num(report.start_normalized))
        .push("rows", Json::Int(report.rows.len() as i64))
        .push("skipped_rows", Json::Int(report.skipped_rows as i64))
        .push("t_end", Json::num(run.summary.t_end))
        .push("steps", Json::Int(run.summary.steps as i64));
    let mut root = Json::obj();
    root.push("metadata", metadata_json(config))
        .push("self_similarity", body);
    write_artifact(config, "ss_residual.json", &root.to_string_pretty())?;
    Ok(0)
}

/// Parse the argument list (including the program name), run the command,
/// and return the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return code;
        }
    };
    let config = match resolve(cli.command) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("error: {err}");
            return 2;
        }
    };
    match dispatch(&config) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            2
        }
    }
}
