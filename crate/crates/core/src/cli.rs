//! Command-line front end. `run` returns the process exit code: 0 on
//! success, 2 when a certification fails, 1 on usage, input or parse errors.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::causality::{build_causal_dag, time_separation, MeasureSpec, DEFAULT_STENCIL_RADIUS};
use crate::clarke::{
    check_clarke_inequality, clarke_field, omega_scan, probe_volume_smoothness, ClarkeSetup, ProbeGeometry,
    SliceProfile, SmoothnessProbeReport, FIG1_PROBE_POINT, PROBE_SPACINGS,
};
use crate::embedding::{
    assemble_lorentz_embedding, build_riemannian_metric, embeddability_obstruction_check, lapse_identity_residual,
    orthogonal_decomposition, riemannian_embed, splitting_identity_residual, verify_pullback, EmbedOptions,
    ObstructionSchedule, Verdict,
};
use crate::geometry::{build_grid, GridSpacetime, Interval, ScalarField, SpacetimeSpec};
use crate::io::{embedding_csv, field_csv, svg_heatmap, svg_loglog, write_json};
use crate::parser::{format_spec, parse_expr, parse_spec};
use crate::temporal::{build_steep_cauchy_temporal, conformal_rescale, steepness_check, TemporalConfig, TOL_STEEP};

pub const OUT_ENV: &str = "LORENTZ_EMBED_OUT";
const DEFAULT_OUT: &str = "lorentz-out";

type Pair = [f64; 2];

fn pair(s: &str) -> Result<Pair, String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `a,b`, got `{s}`"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    let p = [num(a)?, num(b)?];
    if p.iter().all(|v| v.is_finite()) {
        Ok(p)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a positive number")),
    }
}

fn radius(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(r) if (1..=8).contains(&r) => Ok(r),
        _ => Err(format!("stencil radius must be in 1..=8, got `{s}`")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "lorentz-embed", version, about = "Causal structure, steep temporal functions and embeddings of 2D chart spacetimes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Grid spacing (both axes). Default 0.2 for `distance`, 0.1 otherwise.
    #[arg(long, global = true, value_parser = positive)]
    h: Option<f64>,
    /// Stencil radius r of the causal dag.
    #[arg(long, global = true, default_value_t = DEFAULT_STENCIL_RADIUS, value_parser = radius)]
    radius: usize,
    /// Output directory (else $LORENTZ_EMBED_OUT, else ./lorentz-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the time range of the chart, `a,b`.
    #[arg(long, global = true, value_parser = pair, allow_hyphen_values = true)]
    t_range: Option<Pair>,
    /// Override the space range of the chart, `c,d`.
    #[arg(long, global = true, value_parser = pair, allow_hyphen_values = true)]
    x_range: Option<Pair>,
    #[arg(long, global = true, default_value_t = TOL_STEEP)]
    tol_steep: f64,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
enum Command {
    /// Validate a .spacetime file or bundled spec name.
    Parse { spec: String },
    /// J± sizes, volumes and pairwise time separations of points.
    Causality {
        spec: String,
        /// Chart point `t,x`; repeatable.
        #[arg(long = "point", required = true, value_parser = pair, allow_hyphen_values = true)]
        points: Vec<Pair>,
    },
    /// Time separation under grid refinement, with a DIVERGENT/BOUNDED verdict.
    Distance {
        spec: String,
        #[arg(long, value_parser = pair, allow_hyphen_values = true)]
        from: Pair,
        #[arg(long, value_parser = pair, allow_hyphen_values = true)]
        to: Pair,
        /// Number of spacings h, h/2, h/4, ...
        #[arg(long, default_value_t = 3)]
        refine: usize,
        /// Half-plane coordinate floored at h: `t`, `x`, `none` or `auto`.
        #[arg(long, default_value = "auto")]
        floor: String,
    },
    /// Steep Cauchy temporal function and its certificate.
    BuildTemporal {
        spec: String,
        #[arg(long, default_value_t = 2)]
        n_max: usize,
    },
    /// Orthogonal splitting g = −β dτ² + g_τ and the auxiliary metric.
    Decompose {
        spec: String,
        /// Expression in the chart coordinates, or `built`.
        #[arg(long, default_value = "t", allow_hyphen_values = true)]
        tau: String,
    },
    /// Embedding into Minkowski space of dimension N+1 with pullback report.
    Embed {
        spec: String,
        #[arg(long, default_value = "t", allow_hyphen_values = true)]
        tau: String,
        /// Dimension of the Riemannian stage.
        #[arg(long = "N", default_value_t = 6)]
        dim: usize,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
        /// Optimizer stop on the rms relative edge residual.
        #[arg(long, default_value_t = 1e-7)]
        rms_tol: f64,
        /// Certification threshold on the pullback rms relative residual.
        #[arg(long, default_value_t = 5e-2)]
        accept: f64,
        #[arg(long)]
        periodic: bool,
    },
    /// Conformal rescaling making τ steep.
    Rescale {
        spec: String,
        #[arg(long, default_value = "t", allow_hyphen_values = true)]
        tau: String,
    },
    /// Clarke f with its steepness tests, or the volume smoothness probe.
    Clarke {
        spec: String,
        /// Run the smoothness probe instead of the field construction.
        #[arg(long)]
        probe: bool,
        /// Probe point `t,x`.
        #[arg(long, value_parser = pair, allow_hyphen_values = true)]
        z: Option<Pair>,
        /// `across` or `along` the null line through z.
        #[arg(long, default_value = "across")]
        direction: String,
        /// Probe with S = {t = 0} instead of the flank profile.
        #[arg(long)]
        flat: bool,
        /// ω multipliers to scan.
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2,4")]
        omega: Vec<f64>,
        /// Exclude σ ≤ 1 + band from the domain of f.
        #[arg(long)]
        exclude_y: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Parse { .. } => "parse",
            Command::Causality { .. } => "causality",
            Command::Distance { .. } => "distance",
            Command::BuildTemporal { .. } => "build-temporal",
            Command::Decompose { .. } => "decompose",
            Command::Embed { .. } => "embed",
            Command::Rescale { .. } => "rescale",
            Command::Clarke { .. } => "clarke",
        }
    }

    fn spec(&self) -> &str {
        match self {
            Command::Parse { spec }
            | Command::Causality { spec, .. }
            | Command::Distance { spec, .. }
            | Command::BuildTemporal { spec, .. }
            | Command::Decompose { spec, .. }
            | Command::Embed { spec, .. }
            | Command::Rescale { spec, .. }
            | Command::Clarke { spec, .. } => spec,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub toolkit: &'static str,
    pub version: &'static str,
    pub command: String,
    pub spec: String,
    pub spacing: f64,
    pub stencil_radius: usize,
    pub seed: u64,
    pub out_dir: String,
    pub threads: Option<usize>,
    pub t_range: Option<Pair>,
    pub x_range: Option<Pair>,
    pub tol_steep: f64,
    pub params: serde_json::Value,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    config: &'a RunConfig,
    report: T,
}

enum Failure {
    Usage(String),
    Certification(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Certification(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Certification(m) => m,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn certification(e: impl std::fmt::Display) -> Failure {
    Failure::Certification(e.to_string())
}

struct Ctx {
    config: RunConfig,
    out: PathBuf,
}

impl Ctx {
    fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn report<T: Serialize>(&self, name: &str, report: T) -> Result<(), Failure> {
        let env = Envelope {
            config: &self.config,
            report,
        };
        write_json(&self.file(name), &env).map_err(usage)
    }

    fn text(&self, name: &str, body: &str) -> Result<(), Failure> {
        fs::write(self.file(name), body).map_err(usage)
    }
}

/// Path to a file, or a bundled spec name.
fn load_spec(arg: &str) -> Result<SpacetimeSpec, Failure> {
    let path = Path::new(arg);
    let (label, source) = if path.is_file() {
        (arg.to_string(), fs::read_to_string(path).map_err(|e| usage(format!("{arg}: {e}")))?)
    } else if let Some(src) = crate::specs::source(arg) {
        (arg.to_string(), src.to_string())
    } else {
        return Err(usage(format!("{arg}: no such file or bundled spec")));
    };
    parse_spec(&source).map_err(|e| usage(format!("{label}:{e}")))
}

fn with_ranges(spec: SpacetimeSpec, cli: &Cli) -> SpacetimeSpec {
    let mut domain = spec.domain;
    if let Some([lo, hi]) = cli.t_range {
        domain[0] = Interval { lo, hi };
    }
    if let Some([lo, hi]) = cli.x_range {
        domain[1] = Interval { lo, hi };
    }
    spec.with_domain(domain)
}

fn grid_for(spec: &SpacetimeSpec, h: f64) -> Result<GridSpacetime, Failure> {
    build_grid(spec, [h, h]).map_err(usage)
}

#[derive(Serialize)]
struct Snap {
    requested: Pair,
    node: usize,
    snapped: Pair,
    distance: f64,
}

fn snap(grid: &GridSpacetime, p: Pair) -> Result<Snap, Failure> {
    let (node, distance) = grid.nearest_node(p).map_err(usage)?;
    Ok(Snap {
        requested: p,
        node,
        snapped: grid.coords(node),
        distance,
    })
}

fn tau_field(grid: &GridSpacetime, tau: &str, cli: &Cli) -> Result<ScalarField, Failure> {
    if tau == "built" {
        let cfg = TemporalConfig {
            stencil_radius: cli.radius,
            tol_steep: cli.tol_steep,
            ..TemporalConfig::default()
        };
        let build = build_steep_cauchy_temporal(grid, &cfg).map_err(certification)?;
        return Ok(build.t);
    }
    let expr = parse_expr(tau, &grid.spec().coord_names).map_err(|e| usage(format!("--tau:{e}")))?;
    ScalarField::from_expr(grid, &expr).map_err(usage)
}

/// Runs the toolkit on `argv` (including the program name).
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    if let Some(n) = cli.threads {
        // only the first call in a process can size the global pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let h = cli
        .h
        .unwrap_or(if matches!(cli.command, Command::Distance { .. }) { 0.2 } else { 0.1 });
    let config = RunConfig {
        toolkit: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name().into(),
        spec: cli.command.spec().into(),
        spacing: h,
        stencil_radius: cli.radius,
        seed: cli.seed,
        out_dir: out.display().to_string(),
        threads: cli.threads,
        t_range: cli.t_range,
        x_range: cli.x_range,
        tol_steep: cli.tol_steep,
        params: serde_json::to_value(&cli.command).map_err(usage)?,
    };
    let spec = with_ranges(load_spec(cli.command.spec())?, cli);
    fs::create_dir_all(&out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    let ctx = Ctx { config, out };
    match &cli.command {
        Command::Parse { .. } => cmd_parse(&ctx, &spec),
        Command::Causality { points, .. } => cmd_causality(&ctx, cli, &spec, h, points),
        Command::Distance {
            from, to, refine, floor, ..
        } => cmd_distance(&ctx, cli, &spec, h, *from, *to, *refine, floor),
        Command::BuildTemporal { n_max, .. } => cmd_build_temporal(&ctx, cli, &spec, h, *n_max),
        Command::Decompose { tau, .. } => cmd_decompose(&ctx, cli, &spec, h, tau),
        Command::Embed {
            tau,
            dim,
            max_iter,
            rms_tol,
            accept,
            periodic,
            ..
        } => {
            let opts = EmbedOptions {
                max_iter: *max_iter,
                rms_tol: *rms_tol,
                seed: cli.seed,
                periodic_x: *periodic,
                ..EmbedOptions::default()
            };
            cmd_embed(&ctx, cli, &spec, h, tau, *dim, &opts, *accept)
        }
        Command::Rescale { tau, .. } => cmd_rescale(&ctx, cli, &spec, h, tau),
        Command::Clarke {
            probe,
            z,
            direction,
            flat,
            omega,
            exclude_y,
            ..
        } => {
            if *probe {
                cmd_probe(&ctx, cli, &spec, *z, direction, *flat)
            } else {
                cmd_clarke(&ctx, cli, &spec, h, omega, *exclude_y)
            }
        }
    }
}

fn cmd_parse(ctx: &Ctx, spec: &SpacetimeSpec) -> Result<(), Failure> {
    print!("{}", format_spec(spec));
    ctx.report(
        "parse.json",
        json!({
            "name": spec.name,
            "coords": spec.coord_names,
            "domain": spec.domain,
            "g_tt": spec.metric_exprs[0].to_string(),
            "g_tx": spec.metric_exprs[1].to_string(),
            "g_xx": spec.metric_exprs[2].to_string(),
        }),
    )
}

fn cmd_causality(ctx: &Ctx, cli: &Cli, spec: &SpacetimeSpec, h: f64, points: &[Pair]) -> Result<(), Failure> {
    let grid = grid_for(spec, h)?;
    let dag = build_causal_dag(&grid, cli.radius).map_err(usage)?;
    let masses = MeasureSpec::lebesgue().node_masses(&grid).map_err(usage)?;
    let snaps = points.iter().map(|&p| snap(&grid, p)).collect::<Result<Vec<_>, _>>()?;
    let tables: Vec<_> = snaps.iter().map(|s| time_separation(&dag, s.node)).collect();
    let mut rows = Vec::new();
    for s in &snaps {
        let fut = dag.future_mask(&[s.node]);
        let past = dag.past_mask(&[s.node]);
        let vol = |m: &[bool]| -> f64 { m.iter().zip(&masses).filter(|(b, _)| **b).map(|(_, w)| w).sum() };
        rows.push(json!({
            "point": s,
            "future_nodes": fut.iter().filter(|b| **b).count(),
            "past_nodes": past.iter().filter(|b| **b).count(),
            "future_volume": vol(&fut),
            "past_volume": vol(&past),
        }));
    }
    let separation: Vec<Vec<f64>> = tables
        .iter()
        .map(|t| snaps.iter().map(|s| t.values[s.node]).collect())
        .collect();
    let related: Vec<Vec<bool>> = tables
        .iter()
        .map(|t| snaps.iter().map(|s| t.reachable[s.node]).collect())
        .collect();
    ctx.report(
        "causality.json",
        json!({ "stats": dag.stats(), "points": rows, "separation": separation, "causally_related": related }),
    )?;
    ctx.text("causality_d0.csv", &field_csv(&grid, "d", &tables[0].values))?;
    ctx.text("causality_d0.svg", &svg_heatmap(&grid, &tables[0].values, "time separation from the first point"))?;
    println!("causality: {} points, {} edges", snaps.len(), dag.edge_count());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_distance(
    ctx: &Ctx,
    cli: &Cli,
    spec: &SpacetimeSpec,
    h: f64,
    from: Pair,
    to: Pair,
    refine: usize,
    floor: &str,
) -> Result<(), Failure> {
    if refine == 0 {
        return Err(usage("--refine must be at least 1"));
    }
    let spacings: Vec<f64> = (0..refine).map(|k| h / 2f64.powi(k as i32)).collect();
    let floor_coordinate = match floor {
        "none" => None,
        "t" => Some(0),
        "x" => Some(1),
        // a chart edge just above 0 and within one coarse step marks a half plane
        "auto" => (0..2).find(|&k| spec.domain[k].lo > 0.0 && spec.domain[k].lo <= h),
        other => return Err(usage(format!("--floor must be t, x, none or auto, got `{other}`"))),
    };
    let schedule = ObstructionSchedule {
        spacings,
        floor_coordinate,
        stencil_radius: cli.radius,
        ..ObstructionSchedule::default()
    };
    let rep = embeddability_obstruction_check(spec, &[(from, to)], &schedule).map_err(usage)?;
    let verdict = match rep.verdict {
        Verdict::Divergent => "DIVERGENT",
        Verdict::Bounded => "BOUNDED",
    };
    let series: Vec<(f64, f64)> = schedule.spacings.iter().copied().zip(rep.pairs[0].estimates.iter().copied()).collect();
    ctx.text("distance.svg", &svg_loglog("d(p,q) estimate against h", &[("d", series)]))?;
    ctx.report("distance.json", &rep)?;
    println!("distance: estimates {:?} verdict {verdict}", rep.pairs[0].estimates);
    Ok(())
}

fn cmd_build_temporal(ctx: &Ctx, cli: &Cli, spec: &SpacetimeSpec, h: f64, n_max: usize) -> Result<(), Failure> {
    let grid = grid_for(spec, h)?;
    let cfg = TemporalConfig {
        n_max,
        stencil_radius: cli.radius,
        tol_steep: cli.tol_steep,
        ..TemporalConfig::default()
    };
    let build = build_steep_cauchy_temporal(&grid, &cfg).map_err(certification)?;
    let layers = |ls: &[crate::temporal::LayerFunction]| -> Vec<serde_json::Value> {
        ls.iter()
            .map(|l| json!({ "level": l.level, "cones": l.constants.len(), "constants": l.constants, "check": l.check }))
            .collect()
    };
    ctx.report(
        "build-temporal.json",
        json!({
            "temporal_config": cfg,
            "layers_plus": layers(&build.layers_plus),
            "layers_minus": layers(&build.layers_minus),
            "certificate": build.certificate,
        }),
    )?;
    ctx.text("temporal_T.csv", &field_csv(&grid, "T", build.t.values()))?;
    ctx.text("temporal_T.svg", &svg_heatmap(&grid, build.t.values(), "steep Cauchy temporal function T"))?;
    let c = &build.certificate;
    println!(
        "build-temporal: steep margin {:.4e}, non-increasing edges {}/{}, cauchy {}",
        c.steepness.min_margin, c.non_increasing_edges, c.edges_checked, c.cauchy.cauchy
    );
    if c.passed {
        Ok(())
    } else {
        Err(certification(format!("temporal certificate failed: violating nodes {:?}", c.steepness.violating_nodes)))
    }
}

fn cmd_decompose(ctx: &Ctx, cli: &Cli, spec: &SpacetimeSpec, h: f64, tau: &str) -> Result<(), Failure> {
    let grid = grid_for(spec, h)?;
    let tau = tau_field(&grid, tau, cli)?;
    let d = orthogonal_decomposition(&grid, &tau).map_err(certification)?;
    let r = build_riemannian_metric(&grid, &d).map_err(certification)?;
    let interior = grid.interior_nodes();
    let steep = steepness_check(&grid, &tau, &interior, cli.tol_steep);
    let lapse = lapse_identity_residual(&grid, &d);
    let split = splitting_identity_residual(&grid, &r);
    let beta_max = d.beta.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let passed = lapse <= 1e-8 && split <= 1e-8 && (!steep.steep || beta_max <= 1.0 + cli.tol_steep);
    ctx.report(
        "decompose.json",
        json!({
            "lapse_identity_residual": lapse,
            "splitting_identity_residual": split,
            "beta_max": beta_max,
            "tau_steepness": steep,
            "passed": passed,
        }),
    )?;
    ctx.text("decompose_beta.csv", &field_csv(&grid, "beta", d.beta.values()))?;
    println!("decompose: residuals {lapse:.3e} {split:.3e}, max beta {beta_max:.4}");
    if passed {
        Ok(())
    } else {
        Err(certification("decomposition identities do not hold to 1e-8"))
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_embed(
    ctx: &Ctx,
    cli: &Cli,
    spec: &SpacetimeSpec,
    h: f64,
    tau: &str,
    dim: usize,
    opts: &EmbedOptions,
    accept: f64,
) -> Result<(), Failure> {
    let grid = grid_for(spec, h)?;
    let tau = tau_field(&grid, tau, cli)?;
    let d = orthogonal_decomposition(&grid, &tau).map_err(certification)?;
    let r = build_riemannian_metric(&grid, &d).map_err(certification)?;
    let outcome = riemannian_embed(&grid, &r, dim, opts).map_err(usage)?;
    let map = assemble_lorentz_embedding(&tau, &outcome.map);
    let pullback = verify_pullback(&grid, &map, grid.metrics());
    let x0_steep = pullback.x0_steepness.as_ref().is_some_and(|s| s.steep);
    let passed = pullback.rms_relative <= accept && x0_steep;
    let residual: Vec<f64> = (0..grid.len())
        .map(|n| pullback.residual[n].frobenius() / grid.metric(n).frobenius())
        .collect();
    ctx.report(
        "embed.json",
        json!({
            "options": opts,
            "dim": dim,
            "iterations": outcome.iterations,
            "converged": outcome.converged,
            "objective": outcome.objective,
            "rms_edge_residual": outcome.rms_edge_residual,
            "max_edge_residual": outcome.max_edge_residual,
            "history": outcome.history,
            "pullback": pullback,
            "accept": accept,
            "passed": passed,
        }),
    )?;
    ctx.text("embed_map.csv", &embedding_csv(&grid, &map))?;
    ctx.text("embed_residual.csv", &field_csv(&grid, "relative_residual", &residual))?;
    ctx.text("embed_residual.svg", &svg_heatmap(&grid, &residual, "pullback relative residual"))?;
    println!(
        "embed: N={dim} pullback rms {:.3e} max {:.3e}, x0 steep {x0_steep}",
        pullback.rms_relative, pullback.max_relative
    );
    if passed {
        Ok(())
    } else {
        Err(certification(format!(
            "pullback rms {:.3e} (accept {accept:e}), x0 steep {x0_steep}, worst node {}",
            pullback.rms_relative, pullback.worst_node
        )))
    }
}

fn cmd_rescale(ctx: &Ctx, cli: &Cli, spec: &SpacetimeSpec, h: f64, tau: &str) -> Result<(), Failure> {
    let grid = grid_for(spec, h)?;
    let tau = tau_field(&grid, tau, cli)?;
    let rescaled = conformal_rescale(&grid, &tau).map_err(certification)?;
    let interior = grid.interior_nodes();
    let steep = steepness_check(&rescaled.grid, &tau, &interior, 1e-6);
    let before = build_causal_dag(&grid, cli.radius).map_err(usage)?;
    let after = build_causal_dag(&rescaled.grid, cli.radius).map_err(usage)?;
    let edges = |d: &crate::causality::CausalDag<'_>| -> Vec<(usize, usize)> { d.edges().map(|(p, e)| (p, e.node)).collect() };
    let unchanged = edges(&before) == edges(&after);
    let passed = steep.min_margin >= -1e-6 && unchanged;
    ctx.report(
        "rescale.json",
        json!({ "steepness": steep, "edge_set_unchanged": unchanged, "edges": before.edge_count(), "passed": passed }),
    )?;
    ctx.text("rescale_omega.csv", &field_csv(&grid, "omega", rescaled.omega.values()))?;
    println!("rescale: steep margin {:.3e}, edge set unchanged {unchanged}", steep.min_margin);
    if passed {
        Ok(())
    } else {
        Err(certification("rescaled τ is not steep or the edge set changed"))
    }
}

fn cmd_clarke(ctx: &Ctx, cli: &Cli, spec: &SpacetimeSpec, h: f64, omega: &[f64], exclude_y: Option<f64>) -> Result<(), Failure> {
    let grid = grid_for(spec, h)?;
    let mut setup = ClarkeSetup::new(grid.clone()).map_err(usage)?;
    setup.exclude_y = exclude_y;
    let dag = build_causal_dag(&grid, cli.radius).map_err(usage)?;
    let field = clarke_field(&setup, &dag).map_err(usage)?;
    let rep = check_clarke_inequality(&setup, &field.values, &field.region);
    let scan = omega_scan(&setup, &field.values, &field.region, omega);
    ctx.report("clarke.json", json!({ "region_nodes": field.region.len(), "inequality": rep, "omega_scan": scan }))?;
    ctx.text("clarke_f.csv", &field_csv(&grid, "f", field.values.values()))?;
    ctx.text("clarke_f.svg", &svg_heatmap(&grid, field.values.values(), "Clarke f"))?;
    println!(
        "clarke: squares test holds at {}/{} nodes, discordant {}",
        rep.squares_holds,
        rep.nodes,
        rep.discordant.len()
    );
    if rep.discordant.is_empty() {
        Ok(())
    } else {
        Err(certification(format!("discordant nodes {:?}", rep.discordant)))
    }
}

fn cmd_probe(ctx: &Ctx, cli: &Cli, spec: &SpacetimeSpec, z: Option<Pair>, direction: &str, flat: bool) -> Result<(), Failure> {
    let slice = if flat {
        SliceProfile::Flat { t: 0.0 }
    } else {
        crate::clarke::fig1_geometry().slice
    };
    let geometry = ProbeGeometry {
        spec: spec.clone(),
        slice,
        stencil_radius: cli.radius,
    };
    let dir = match direction {
        "across" => [1, 0],
        "along" => [1, 1],
        other => return Err(usage(format!("--direction must be across or along, got `{other}`"))),
    };
    let spacings: Vec<f64> = match cli.h {
        Some(h) => (0..3).map(|k| h / 2f64.powi(k)).collect(),
        None => PROBE_SPACINGS.to_vec(),
    };
    let rep: SmoothnessProbeReport =
        probe_volume_smoothness(&geometry, z.unwrap_or(FIG1_PROBE_POINT), dir, &spacings).map_err(usage)?;
    let first: Vec<(f64, f64)> = rep
        .spacings
        .iter()
        .zip(&rep.first_differences)
        .map(|(h, d)| (*h, d[0].abs().max(d[1].abs())))
        .collect();
    let second: Vec<(f64, f64)> = rep.spacings.iter().copied().zip(rep.normalized_second.iter().copied()).collect();
    ctx.text(
        "clarke_probe.svg",
        &svg_loglog("difference tables against h", &[("max |first difference|", first), ("|second difference| / h", second)]),
    )?;
    ctx.report("clarke_probe.json", &rep)?;
    println!(
        "clarke probe: continuous {}, C2 failure {}, second difference / h {:?}",
        rep.continuous, rep.c2_failure, rep.normalized_second
    );
    Ok(())
}
