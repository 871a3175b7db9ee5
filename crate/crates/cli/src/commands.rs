use std::io::Write;

use serde::Serialize;

use fim_core::envelope::{convex_params, g_grid, ConvexEnvelope, ConvexEnvelopeParams, EnvelopeView, ExitInterval, GridOptions};
use fim_core::hedge::{build_hedge, check_assumption, AssumptionCheck, HedgeOptions, SuperRepReport, TrivialHedge};
use fim_core::lawdensity::{law_match_test, quantile_coupling_sample, weak_distance_diag, DistanceRow, LawMatch};
use fim_core::models::{simulate as simulate_paths, steer_volatility, write_binary, write_csv, SteerReport};
use fim_core::payoff::{default_probe, validate_pair, GamePayoffPair};
use fim_core::semistatic::{feasibility_ball, robust_price, LpReport};
use fim_core::stopvalue::{horizon_invariance_gap, solve_g_lattice, LatticeSpec, ValueSurface};
use fim_core::verify::{counterexample_run, envelope_value, lower_bound_check, mc_superreplication, CounterexampleConfig, LowerBoundTable};

use crate::input::*;
use crate::{CliResult, Context, Failure};

fn checked_pair(pair: &GamePayoffPair<f64>, s0: f64) -> CliResult<()> {
    if !(s0.is_finite() && s0 > 0.0) {
        return Err(Failure::Validation(format!("spot must be positive, got {s0}")));
    }
    pair.validate_params()?;
    let report = validate_pair(pair, &default_probe(pair, s0))?;
    match report.first_failure {
        Some(f) if !report.pass => Err(Failure::Validation(format!(
            "payoff pair fails the {:?} check at x = {}{}",
            f.kind,
            f.x,
            f.y.map(|y| format!(", y = {y}")).unwrap_or_default()
        ))),
        _ => Ok(()),
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_csv_rows(ctx: &Context, header: &str, rows: impl Iterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = ctx.sink.writer()?;
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct EnvelopeRow {
    x: f64,
    g: f64,
    dplus: f64,
    f1: f64,
    f2: f64,
    contact: bool,
}

#[derive(Serialize)]
struct EnvelopeOutput {
    method: &'static str,
    s0: f64,
    g_s0: f64,
    exit_interval: ExitInterval<f64>,
    params: Option<ConvexEnvelopeParams<f64>>,
    rows: Vec<EnvelopeRow>,
}

fn tabulate<E: EnvelopeView<f64>>(env: &E, pair: &GamePayoffPair<f64>, points: &[f64]) -> CliResult<Vec<EnvelopeRow>> {
    points
        .iter()
        .map(|&x| {
            Ok(EnvelopeRow {
                x,
                g: env.value(x)?,
                dplus: env.right_derivative(x)?,
                f1: pair.f1.value(x),
                f2: pair.f2.value(x),
                contact: env.is_contact(x)?,
            })
        })
        .collect()
}

fn default_points(s0: f64) -> Vec<f64> {
    let mut pts: Vec<f64> = (0..65).map(|i| s0 / 4.0 + (3.75 * s0) * i as f64 / 64.0).collect();
    pts.push(s0);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn grid_options(pair: &GamePayoffPair<f64>, s0: f64, grid: &Option<GridInput>) -> GridOptions<f64> {
    match grid {
        Some(g) => {
            let mut opts = GridOptions::new(g.x_min, g.x_max, g.n_points);
            if let Some(tol) = g.tol {
                opts.tol = tol;
            }
            opts.anchor = Some(s0);
            opts
        }
        None => GridOptions::around(pair, s0),
    }
}

pub fn envelope(ctx: &Context) -> CliResult<()> {
    let inp: EnvelopeInput = ctx.read()?;
    checked_pair(&inp.pair, inp.s0)?;
    let points = inp.points.clone().unwrap_or_else(|| default_points(inp.s0));
    let closed = match inp.method {
        Method::Auto => inp.pair.is_convex(),
        Method::Closed => true,
        Method::Grid => false,
    };
    let out = if closed {
        let env = ConvexEnvelope::new(&inp.pair)?;
        EnvelopeOutput {
            method: "closed_form",
            s0: inp.s0,
            g_s0: env.value(inp.s0)?,
            exit_interval: env.stop_interval(inp.s0)?,
            params: Some(convex_params(&inp.pair)?),
            rows: tabulate(&env, &inp.pair, &points)?,
        }
    } else {
        let env = g_grid(&inp.pair, &grid_options(&inp.pair, inp.s0, &inp.grid))?;
        EnvelopeOutput {
            method: "grid",
            s0: inp.s0,
            g_s0: env.value(inp.s0)?,
            exit_interval: env.stop_interval(inp.s0)?,
            params: env.convex_params,
            rows: tabulate(&env, &inp.pair, &points)?,
        }
    };
    if ctx.sink.extension() == Some("csv") {
        write_csv_rows(
            ctx,
            "x,g,dplus,f1,f2,contact",
            out.rows.iter().map(|r| {
                vec![num(r.x), num(r.g), num(r.dplus), num(r.f1), num(r.f2), u8::from(r.contact).to_string()]
            }),
        )
    } else {
        ctx.sink.json(&out)
    }
}

#[derive(Serialize)]
struct HedgeOutput {
    g_s0: f64,
    assumption: AssumptionCheck,
    hedge: TrivialHedge<f64>,
}

fn hedge_with<E: EnvelopeView<f64>>(env: &E, inp: &HedgeInput) -> CliResult<HedgeOutput> {
    let opts = HedgeOptions { allow_override: inp.allow_override, rate_is_zero: inp.r == 0.0 };
    Ok(HedgeOutput {
        g_s0: env.value(inp.s0)?,
        assumption: check_assumption(env, &inp.pair, inp.s0, opts.rate_is_zero)?,
        hedge: build_hedge(env, &inp.pair, inp.s0, opts)?,
    })
}

pub fn hedge(ctx: &Context) -> CliResult<()> {
    let inp: HedgeInput = ctx.read()?;
    checked_pair(&inp.pair, inp.s0)?;
    if !(inp.r.is_finite() && inp.r >= 0.0) {
        return Err(Failure::Validation(format!("rate must be non-negative, got {}", inp.r)));
    }
    let out = if inp.pair.is_convex() {
        hedge_with(&ConvexEnvelope::new(&inp.pair)?, &inp)?
    } else {
        hedge_with(&g_grid(&inp.pair, &GridOptions::around(&inp.pair, inp.s0))?, &inp)?
    };
    ctx.sink.json(&out)
}

pub fn simulate(ctx: &Context) -> CliResult<()> {
    let inp: SimulateInput = ctx.read()?;
    let batch = simulate_paths(&inp.market, inp.n_steps, inp.n_paths, ctx.seed)?;
    let w = ctx.sink.writer()?;
    if ctx.sink.extension() == Some("bin") {
        write_binary(&batch, w)?;
    } else {
        write_csv(&batch, w)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct VerifyOutput {
    seed: u64,
    report: SuperRepReport,
    lower_bound: Option<LowerBoundTable>,
}

pub fn verify(ctx: &Context) -> CliResult<()> {
    let inp: VerifyInput = ctx.read()?;
    let s0 = inp.market.s0;
    checked_pair(&inp.pair, s0)?;
    let report = mc_superreplication(&inp.market, &inp.pair, inp.n_paths, inp.n_steps, ctx.seed, inp.allow_override)?;
    let lower_bound = match &inp.lattice_v_hi {
        Some(caps) if !caps.is_empty() => {
            let top = caps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let grid = LatticeSpec::around(&inp.pair, s0, 1.0, top)?;
            Some(lower_bound_check(&inp.pair, s0, caps, &grid)?)
        }
        _ => None,
    };
    ctx.sink.json(&VerifyOutput { seed: ctx.seed, report, lower_bound })
}

#[derive(Serialize)]
struct CounterexampleOutput {
    seed: u64,
    config: CounterexampleConfig,
    report: SuperRepReport,
}

pub fn counterexample(ctx: &Context) -> CliResult<()> {
    let config: CounterexampleInput = ctx.read_or_default()?;
    let report = counterexample_run(&config, ctx.seed)?;
    ctx.sink.json(&CounterexampleOutput { seed: ctx.seed, config, report })
}

#[derive(Serialize)]
struct StopvalueOutput {
    x0: f64,
    value: f64,
    envelope: Option<f64>,
    horizon_gap: Option<f64>,
    lattice: LatticeSpec,
}

pub fn stopvalue(ctx: &Context) -> CliResult<()> {
    let inp: StopvalueInput = ctx.read()?;
    checked_pair(&inp.pair, inp.x0)?;
    let mut spec = match (inp.x_min, inp.x_max) {
        (Some(lo), Some(hi)) => {
            LatticeSpec::new(lo, hi, inp.n_y.unwrap_or(1200), inp.horizon, inp.v_lo.unwrap_or(1e-3), inp.v_hi)?
        }
        (None, None) => LatticeSpec::around(&inp.pair, inp.x0, inp.horizon, inp.v_hi)?,
        _ => return Err(Failure::Validation("give both x_min and x_max or neither".into())),
    };
    if let Some(v_lo) = inp.v_lo {
        spec.v_lo = v_lo;
    }
    if let Some(n_y) = inp.n_y {
        spec.n_y = n_y;
    }
    let spec = spec.with(inp.horizon, inp.v_hi)?;
    let surface = solve_g_lattice(&inp.pair, &spec)?;
    let out = StopvalueOutput {
        x0: inp.x0,
        value: surface.value_at(inp.x0)?,
        envelope: envelope_value(&inp.pair, inp.x0).ok(),
        horizon_gap: match inp.compare_horizon {
            Some(u) => Some(horizon_invariance_gap(&inp.pair, &spec, inp.x0, inp.horizon, u)?),
            None => None,
        },
        lattice: spec,
    };
    if ctx.sink.extension() == Some("csv") {
        write_surface(ctx, &surface)?;
        let stdout = crate::Sink { path: None };
        stdout.json(&out)
    } else {
        ctx.sink.json(&out)
    }
}

fn write_surface(ctx: &Context, surface: &ValueSurface) -> CliResult<()> {
    let rows = surface.times.iter().enumerate().flat_map(|(k, &t)| {
        surface
            .xs
            .iter()
            .enumerate()
            .map(move |(i, &x)| vec![num(t), num(x), num(surface.values[k][i]), num(surface.feedback_vol[k][i])])
    });
    write_csv_rows(ctx, "t,x,V,feedback_vol", rows)
}

#[derive(Serialize)]
struct SemistaticOutput {
    report: LpReport,
    feasibility_ball: Option<bool>,
}

pub fn semistatic(ctx: &Context) -> CliResult<()> {
    let inp: SemistaticInput = ctx.read()?;
    let report = robust_price(&inp.tree, &inp.claim, &inp.statics)?;
    let feasibility_ball = match inp.feasibility_eps {
        Some(eps) => Some(feasibility_ball(&inp.tree, &inp.statics, eps)?),
        None => None,
    };
    ctx.sink.json(&SemistaticOutput { report, feasibility_ball })
}

#[derive(Serialize)]
#[serde(untagged)]
enum LawdensityOutput {
    Match { seed: u64, n_samples: usize, law_match: LawMatch },
    Distance { seed: u64, rows: Vec<DistanceRow> },
}

pub fn lawdensity(ctx: &Context) -> CliResult<()> {
    let out = match ctx.read::<LawdensityInput>()? {
        LawdensityInput::LawMatch { law, n_samples } => {
            let samples = quantile_coupling_sample(&law, n_samples, ctx.seed)?;
            LawdensityOutput::Match { seed: ctx.seed, n_samples, law_match: law_match_test(&samples, &law)? }
        }
        LawdensityInput::WeakDistance { refinement, n_list, n_samples, fine_steps } => LawdensityOutput::Distance {
            seed: ctx.seed,
            rows: weak_distance_diag(&refinement, &n_list, n_samples, fine_steps, ctx.seed)?,
        },
    };
    ctx.sink.json(&out)
}

#[derive(Serialize)]
struct SteerOutput {
    seed: u64,
    eps: f64,
    rows: Vec<SteerReport>,
    /// `prob_exceed` does not increase with the block count.
    monotone: bool,
}

pub fn steer(ctx: &Context) -> CliResult<()> {
    let inp: SteerInput = ctx.read()?;
    let rows = inp
        .n_blocks
        .iter()
        .map(|&n| steer_volatility(&inp.market, inp.target, n, inp.eps, inp.n_paths, inp.fine_steps, ctx.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let monotone = rows.windows(2).all(|w| w[1].prob_exceed <= w[0].prob_exceed);
    ctx.sink.json(&SteerOutput { seed: ctx.seed, eps: inp.eps, rows, monotone })
}
