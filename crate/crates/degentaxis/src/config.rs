//! Run configuration: a sectioned `key = value` format, fully validated
//! before any allocation. Unknown sections or keys are hard errors, every
//! problem is reported with its line number, and parsing returns the whole
//! error list rather than the first hit. See `config-reference.md` at the
//! repository root for the documented schema and defaults.

use std::collections::HashMap;

use crate::error::{ConfigError, Error};
use crate::functionals::FunctionalConfig;
use crate::grid::{make_grid, Grid};
use crate::inequalities::InequalityId;
use crate::model::{ClipPolicy, MobilityAverage, Params};
use crate::scenarios::{InitialDataSpec, Recipe};
use crate::stepper::SteadyTolerances;

#[derive(Debug, Clone)]
pub struct GridBlock {
    pub dim: usize,
    pub cells: Vec<usize>,
    pub extents: Vec<f64>,
}

impl Default for GridBlock {
    fn default() -> Self {
        Self {
            dim: 2,
            cells: vec![32, 32],
            extents: vec![1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunBlock {
    pub horizon: f64,
    pub sample_cadence: f64,
    pub snapshot_cadence: f64,
    pub steady_tol_v: f64,
    pub steady_tol_u: f64,
    pub stop_on_steady: bool,
    pub certify: bool,
    pub nonconstancy_fraction: f64,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            sample_cadence: 0.1,
            snapshot_cadence: 1.0,
            steady_tol_v: 1e-6,
            steady_tol_u: 1e-8,
            stop_on_steady: false,
            certify: false,
            nonconstancy_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DiagnosticsBlock {
    /// None means "derive from alpha".
    pub p_list: Option<Vec<f64>>,
    pub q_list: Option<Vec<f64>>,
    pub k_list: Option<Vec<f64>>,
    pub dual_norm: bool,
    pub f_coeff: f64,
    pub g_coeff: f64,
    pub h_p: Option<f64>,
    pub h_q: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Ndjson,
    Snapshots,
    Csv,
}

#[derive(Debug, Clone)]
pub struct OutputBlock {
    pub dir: Option<String>,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: None,
            formats: vec![OutputFormat::Ndjson, OutputFormat::Snapshots],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepBlock {
    pub scales: Vec<f64>,
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self {
            scales: vec![1.0, 0.1, 0.01],
        }
    }
}

#[derive(Debug, Clone)]
pub struct InequalitiesBlock {
    pub ids: Vec<InequalityId>,
    pub sample_count: usize,
    pub cells: usize,
    pub mode_count: usize,
    pub min_value: f64,
    pub mass_bound: f64,
    /// Also probe one point just outside each admissible range and log its
    /// growth under refinement.
    pub boundary_probes: bool,
}

impl Default for InequalitiesBlock {
    fn default() -> Self {
        Self {
            ids: InequalityId::all().to_vec(),
            sample_count: 100,
            cells: 64,
            mode_count: 4,
            min_value: 0.2,
            mass_bound: 10.0,
            boundary_probes: true,
        }
    }
}

/// Fully validated configuration for every command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub grid: GridBlock,
    pub params: Params,
    pub initial: InitialDataSpec,
    pub run: RunBlock,
    pub diagnostics: DiagnosticsBlock,
    pub output: OutputBlock,
    pub sweep: SweepBlock,
    pub inequalities: InequalitiesBlock,
    /// FNV-1a hash of the source text, for the manifest.
    pub config_hash: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridBlock::default(),
            params: Params {
                chi: 1.0,
                ell: 1.0,
                alpha: 1.55,
                eps: 0.0,
                safety: 0.5,
                dt_max: 1e-2,
                clip_policy: ClipPolicy::ClipAndAccount,
                mobility_average: MobilityAverage::Arithmetic,
            },
            initial: InitialDataSpec::default(),
            run: RunBlock::default(),
            diagnostics: DiagnosticsBlock {
                dual_norm: true,
                f_coeff: 1.0,
                g_coeff: 1.0,
                ..Default::default()
            },
            output: OutputBlock::default(),
            sweep: SweepBlock::default(),
            inequalities: InequalitiesBlock::default(),
            config_hash: fnv1a(b""),
        }
    }
}

impl RunConfig {
    pub fn build_grid(&self) -> Result<Grid, Error> {
        make_grid(self.grid.dim, &self.grid.cells, &self.grid.extents)
    }

    /// Diagnostics exponents with alpha-derived defaults filled in.
    pub fn functional_config(&self) -> FunctionalConfig {
        let mut cfg = FunctionalConfig::for_alpha(self.params.alpha);
        if let Some(p) = &self.diagnostics.p_list {
            cfg.p_list = p.clone();
        }
        if let Some(q) = &self.diagnostics.q_list {
            cfg.q_list = q.clone();
        }
        if let Some(k) = &self.diagnostics.k_list {
            cfg.k_list = k.clone();
        }
        cfg.f_coeff = self.diagnostics.f_coeff;
        cfg.g_coeff = self.diagnostics.g_coeff;
        if let Some(p) = self.diagnostics.h_p {
            cfg.h_p = p;
        }
        if let Some(q) = self.diagnostics.h_q {
            cfg.h_q = q;
        }
        cfg
    }

    pub fn steady_tolerances(&self) -> SteadyTolerances {
        SteadyTolerances {
            tol_v: self.run.steady_tol_v,
            tol_u: self.run.steady_tol_u,
        }
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

struct ParseCtx {
    errors: Vec<ConfigError>,
    /// line on which each section.key was set, for cross-field diagnostics
    key_lines: HashMap<String, usize>,
}

impl ParseCtx {
    fn err(&mut self, line: usize, message: impl Into<String>) {
        self.errors.push(ConfigError {
            line,
            message: message.into(),
        });
    }

    fn line_of(&self, key: &str) -> usize {
        self.key_lines.get(key).copied().unwrap_or(0)
    }

    /// Report against the line where `key` was set (line 0 when defaulted).
    fn err_at(&mut self, key: &str, message: impl Into<String>) {
        let line = self.line_of(key);
        self.err(line, message);
    }
}

fn parse_f64(ctx: &mut ParseCtx, line: usize, key: &str, value: &str) -> Option<f64> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() => Some(v),
        _ => {
            ctx.err(
                line,
                format!("{key}: expected a finite number, got '{value}'"),
            );
            None
        }
    }
}

fn parse_u64(ctx: &mut ParseCtx, line: usize, key: &str, value: &str) -> Option<u64> {
    match value.parse::<u64>() {
        Ok(v) => Some(v),
        Err(_) => {
            ctx.err(
                line,
                format!("{key}: expected an unsigned integer, got '{value}'"),
            );
            None
        }
    }
}

fn parse_usize(ctx: &mut ParseCtx, line: usize, key: &str, value: &str) -> Option<usize> {
    parse_u64(ctx, line, key, value).map(|v| v as usize)
}

fn parse_bool(ctx: &mut ParseCtx, line: usize, key: &str, value: &str) -> Option<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => {
            ctx.err(line, format!("{key}: expected true/false, got '{value}'"));
            None
        }
    }
}

fn parse_f64_list(ctx: &mut ParseCtx, line: usize, key: &str, value: &str) -> Option<Vec<f64>> {
    let mut out = Vec::new();
    for tok in value.split_whitespace() {
        match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ => {
                ctx.err(line, format!("{key}: bad list entry '{tok}'"));
                return None;
            }
        }
    }
    if out.is_empty() {
        ctx.err(line, format!("{key}: list must not be empty"));
        return None;
    }
    Some(out)
}

fn parse_usize_list(ctx: &mut ParseCtx, line: usize, key: &str, value: &str) -> Option<Vec<usize>> {
    let mut out = Vec::new();
    for tok in value.split_whitespace() {
        match tok.parse::<usize>() {
            Ok(v) => out.push(v),
            _ => {
                ctx.err(line, format!("{key}: bad list entry '{tok}'"));
                return None;
            }
        }
    }
    if out.is_empty() {
        ctx.err(line, format!("{key}: list must not be empty"));
        return None;
    }
    Some(out)
}

fn parse_recipe(ctx: &mut ParseCtx, line: usize, key: &str, value: &str) -> Option<Recipe> {
    match Recipe::parse(value) {
        Some(r) => Some(r),
        None => {
            ctx.err(
                line,
                format!(
                    "{key}: expected constant|two-bump|cosine-mix|seeded-random, got '{value}'"
                ),
            );
            None
        }
    }
}

/// Parse and validate the sectioned key = value text.
pub fn parse_config(text: &str) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig {
        config_hash: fnv1a(text.as_bytes()),
        ..Default::default()
    };
    let mut ctx = ParseCtx {
        errors: Vec::new(),
        key_lines: HashMap::new(),
    };

    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if stripped.is_empty() {
            continue;
        }
        if let Some(name) = stripped.strip_prefix('[') {
            match name.strip_suffix(']') {
                Some(name) => {
                    let name = name.trim();
                    if [
                        "grid",
                        "params",
                        "initial",
                        "run",
                        "diagnostics",
                        "output",
                        "sweep",
                        "inequalities",
                    ]
                    .contains(&name)
                    {
                        section = name.to_string();
                    } else {
                        ctx.err(line, format!("unknown section [{name}]"));
                        section.clear();
                    }
                }
                None => ctx.err(line, format!("malformed section header '{stripped}'")),
            }
            continue;
        }
        let Some(eq) = stripped.find('=') else {
            ctx.err(line, format!("expected 'key = value', got '{stripped}'"));
            continue;
        };
        let key = stripped[..eq].trim();
        let value = stripped[eq + 1..].trim();
        if key.is_empty() || value.is_empty() {
            ctx.err(line, "empty key or value");
            continue;
        }
        if section.is_empty() {
            ctx.err(line, format!("key '{key}' outside any section"));
            continue;
        }
        ctx.key_lines.insert(format!("{section}.{key}"), line);
        apply_key(&mut cfg, &mut ctx, &section, key, value, line);
    }

    validate(&cfg, &mut ctx);
    if ctx.errors.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(ctx.errors))
    }
}

fn apply_key(
    cfg: &mut RunConfig,
    ctx: &mut ParseCtx,
    section: &str,
    key: &str,
    value: &str,
    line: usize,
) {
    match (section, key) {
        ("grid", "dim") => {
            if let Some(v) = parse_usize(ctx, line, key, value) {
                cfg.grid.dim = v;
            }
        }
        ("grid", "cells") => {
            if let Some(v) = parse_usize_list(ctx, line, key, value) {
                cfg.grid.cells = v;
            }
        }
        ("grid", "extents") => {
            if let Some(v) = parse_f64_list(ctx, line, key, value) {
                cfg.grid.extents = v;
            }
        }
        ("params", "chi") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.params.chi = v;
            }
        }
        ("params", "ell") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.params.ell = v;
            }
        }
        ("params", "alpha") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.params.alpha = v;
            }
        }
        ("params", "eps") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.params.eps = v;
            }
        }
        ("params", "safety") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.params.safety = v;
            }
        }
        ("params", "dt_max") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.params.dt_max = v;
            }
        }
        ("params", "clip_policy") => match value {
            "reject" => cfg.params.clip_policy = ClipPolicy::Reject,
            "clip-and-account" => cfg.params.clip_policy = ClipPolicy::ClipAndAccount,
            _ => ctx.err(
                line,
                format!("clip_policy: expected reject|clip-and-account, got '{value}'"),
            ),
        },
        ("params", "mobility_average") => match value {
            "arithmetic" => cfg.params.mobility_average = MobilityAverage::Arithmetic,
            "harmonic" => cfg.params.mobility_average = MobilityAverage::Harmonic,
            _ => ctx.err(
                line,
                format!("mobility_average: expected arithmetic|harmonic, got '{value}'"),
            ),
        },
        ("initial", "u0") => {
            if let Some(r) = parse_recipe(ctx, line, key, value) {
                cfg.initial.u0_recipe = r;
            }
        }
        ("initial", "v0") => {
            if let Some(r) = parse_recipe(ctx, line, key, value) {
                cfg.initial.v0_recipe = r;
            }
        }
        ("initial", "v0_scale") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.initial.v0_scale = v;
            }
        }
        ("initial", "u0_floor") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.initial.u0_floor = v;
            }
        }
        ("initial", "v0_floor") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.initial.v0_floor = v;
            }
        }
        ("initial", "seed") => {
            if let Some(v) = parse_u64(ctx, line, key, value) {
                cfg.initial.seed = v;
            }
        }
        ("run", "horizon") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.run.horizon = v;
            }
        }
        ("run", "sample_cadence") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.run.sample_cadence = v;
            }
        }
        ("run", "snapshot_cadence") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.run.snapshot_cadence = v;
            }
        }
        ("run", "steady_tol_v") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.run.steady_tol_v = v;
            }
        }
        ("run", "steady_tol_u") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.run.steady_tol_u = v;
            }
        }
        ("run", "stop_on_steady") => {
            if let Some(v) = parse_bool(ctx, line, key, value) {
                cfg.run.stop_on_steady = v;
            }
        }
        ("run", "certify") => {
            if let Some(v) = parse_bool(ctx, line, key, value) {
                cfg.run.certify = v;
            }
        }
        ("run", "nonconstancy_fraction") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.run.nonconstancy_fraction = v;
            }
        }
        ("diagnostics", "p_list") => {
            if let Some(v) = parse_f64_list(ctx, line, key, value) {
                cfg.diagnostics.p_list = Some(v);
            }
        }
        ("diagnostics", "q_list") => {
            if let Some(v) = parse_f64_list(ctx, line, key, value) {
                cfg.diagnostics.q_list = Some(v);
            }
        }
        ("diagnostics", "k_list") => {
            if let Some(v) = parse_f64_list(ctx, line, key, value) {
                cfg.diagnostics.k_list = Some(v);
            }
        }
        ("diagnostics", "dual_norm") => {
            if let Some(v) = parse_bool(ctx, line, key, value) {
                cfg.diagnostics.dual_norm = v;
            }
        }
        ("diagnostics", "f_coeff") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.diagnostics.f_coeff = v;
            }
        }
        ("diagnostics", "g_coeff") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.diagnostics.g_coeff = v;
            }
        }
        ("diagnostics", "h_p") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.diagnostics.h_p = Some(v);
            }
        }
        ("diagnostics", "h_q") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.diagnostics.h_q = Some(v);
            }
        }
        ("output", "dir") => {
            cfg.output.dir = Some(value.to_string());
        }
        ("output", "formats") => {
            let mut formats = Vec::new();
            let mut ok = true;
            for tok in value.split_whitespace() {
                match tok {
                    "ndjson" => formats.push(OutputFormat::Ndjson),
                    "snapshots" => formats.push(OutputFormat::Snapshots),
                    "csv" => formats.push(OutputFormat::Csv),
                    _ => {
                        ctx.err(
                            line,
                            format!("formats: expected ndjson|snapshots|csv, got '{tok}'"),
                        );
                        ok = false;
                    }
                }
            }
            if ok {
                cfg.output.formats = formats;
            }
        }
        ("sweep", "scales") => {
            if let Some(v) = parse_f64_list(ctx, line, key, value) {
                cfg.sweep.scales = v;
            }
        }
        ("inequalities", "ids") => {
            let mut ids = Vec::new();
            let mut ok = true;
            for tok in value.split_whitespace() {
                match (tok, InequalityId::parse(tok)) {
                    ("all", _) => ids.extend(InequalityId::all()),
                    (_, Some(id)) => ids.push(id),
                    (_, None) => {
                        ctx.err(
                            line,
                            format!("ids: expected all|I2.28|I2.38|I3.10|I3.25, got '{tok}'"),
                        );
                        ok = false;
                    }
                }
            }
            if ok && !ids.is_empty() {
                cfg.inequalities.ids = ids;
            }
        }
        ("inequalities", "sample_count") => {
            if let Some(v) = parse_usize(ctx, line, key, value) {
                cfg.inequalities.sample_count = v;
            }
        }
        ("inequalities", "cells") => {
            if let Some(v) = parse_usize(ctx, line, key, value) {
                cfg.inequalities.cells = v;
            }
        }
        ("inequalities", "mode_count") => {
            if let Some(v) = parse_usize(ctx, line, key, value) {
                cfg.inequalities.mode_count = v;
            }
        }
        ("inequalities", "min_value") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.inequalities.min_value = v;
            }
        }
        ("inequalities", "mass_bound") => {
            if let Some(v) = parse_f64(ctx, line, key, value) {
                cfg.inequalities.mass_bound = v;
            }
        }
        ("inequalities", "boundary_probes") => {
            if let Some(v) = parse_bool(ctx, line, key, value) {
                cfg.inequalities.boundary_probes = v;
            }
        }
        _ => {
            ctx.err(line, format!("unknown key '{key}' in section [{section}]"));
        }
    }
}

fn validate(cfg: &RunConfig, ctx: &mut ParseCtx) {
    // grid
    let gl = ctx.line_of("grid.dim");
    if !(1..=3).contains(&cfg.grid.dim) {
        ctx.err(
            gl,
            format!("grid.dim must be 1, 2 or 3, got {}", cfg.grid.dim),
        );
    } else {
        if cfg.grid.cells.len() != cfg.grid.dim {
            ctx.err_at(
                "grid.cells",
                format!(
                    "grid.cells needs {} entries, got {}",
                    cfg.grid.dim,
                    cfg.grid.cells.len()
                ),
            );
        } else if cfg.grid.cells.iter().any(|&c| c < 2) {
            ctx.err_at("grid.cells", "every cell count must be >= 2");
        }
        if cfg.grid.extents.len() != cfg.grid.dim {
            ctx.err_at(
                "grid.extents",
                format!(
                    "grid.extents needs {} entries, got {}",
                    cfg.grid.dim,
                    cfg.grid.extents.len()
                ),
            );
        } else if cfg.grid.extents.iter().any(|&e| !(e > 0.0)) {
            ctx.err_at("grid.extents", "every extent must be positive");
        }
    }

    // params
    if let Err(Error::Params(msg)) = cfg.params.validate() {
        ctx.err_at("params.chi", msg);
    }
    if cfg.run.certify && !cfg.params.in_admissible_window() {
        ctx.err_at(
            "params.alpha",
            format!(
                "certified runs need alpha in (3/2, 19/12); alpha = {} is outside the window",
                cfg.params.alpha
            ),
        );
    }

    // initial
    if !(cfg.initial.v0_scale > 0.0) {
        ctx.err_at(
            "initial.v0_scale",
            format!("v0_scale must be positive, got {}", cfg.initial.v0_scale),
        );
    }
    if cfg.initial.u0_floor < 0.0 {
        ctx.err_at("initial.u0_floor", "u0_floor must be nonnegative");
    }
    if !(cfg.initial.v0_floor > 0.0) {
        ctx.err_at("initial.v0_floor", "v0_floor must be positive");
    }

    // run
    if !(cfg.run.horizon >= 0.0) {
        ctx.err_at("run.horizon", "horizon must be nonnegative");
    }
    if !(cfg.run.sample_cadence > 0.0) {
        ctx.err_at("run.sample_cadence", "sample_cadence must be positive");
    }
    if !(cfg.run.snapshot_cadence > 0.0) {
        ctx.err_at("run.snapshot_cadence", "snapshot_cadence must be positive");
    } else if cfg.run.sample_cadence > 0.0 {
        let ratio = cfg.run.snapshot_cadence / cfg.run.sample_cadence;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 - 1e-9 {
            ctx.err_at(
                "run.snapshot_cadence",
                "snapshot_cadence must be an integer multiple of sample_cadence",
            );
        }
    }
    if !(cfg.run.steady_tol_v > 0.0) || !(cfg.run.steady_tol_u > 0.0) {
        ctx.err_at("run.steady_tol_v", "steady tolerances must be positive");
    }
    if !(cfg.run.nonconstancy_fraction > 0.0) {
        ctx.err_at(
            "run.nonconstancy_fraction",
            "nonconstancy_fraction must be positive",
        );
    }

    // diagnostics
    if let Some(q) = &cfg.diagnostics.q_list {
        if q.iter().any(|&x| x < 2.0) {
            ctx.err_at("diagnostics.q_list", "every q must satisfy q >= 2");
        }
    }
    if let Some(p) = &cfg.diagnostics.p_list {
        if p.iter().any(|&x| !(x > 0.0)) {
            ctx.err_at("diagnostics.p_list", "every p must be positive");
        }
    }
    if let Some(p) = cfg.diagnostics.h_p {
        if !(p > 1.0) {
            ctx.err_at("diagnostics.h_p", "h_p must be > 1");
        }
    }
    if let Some(q) = cfg.diagnostics.h_q {
        if !(q >= 2.0) {
            ctx.err_at("diagnostics.h_q", "h_q must be >= 2");
        }
    }

    // sweep
    if cfg.sweep.scales.iter().any(|&s| !(s > 0.0)) {
        ctx.err_at("sweep.scales", "sweep scales must be positive");
    }

    // inequalities
    if cfg.inequalities.cells < 2 {
        ctx.err_at("inequalities.cells", "cells must be >= 2");
    }
    if cfg.inequalities.sample_count == 0 {
        ctx.err_at("inequalities.sample_count", "sample_count must be positive");
    }
    if !(cfg.inequalities.min_value > 0.0) {
        ctx.err_at("inequalities.min_value", "min_value must be positive");
    }
    if !(cfg.inequalities.mass_bound > 0.0) {
        ctx.err_at("inequalities.mass_bound", "mass_bound must be positive");
    }
}
