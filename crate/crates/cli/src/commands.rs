//! Dispatch from a resolved [`RunConfig`] to the solvers, and report assembly.

use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use dirinfo_core::capacity::{log_c_bound_threshold, scalar_feedback_capacity, LOWER_BOUND_NOTE};
use dirinfo_core::linalg::sym_sqrt;
use dirinfo_core::model::schema::{mat_to_rows, model_to_json, parse_model_json, ModelDocument};
use dirinfo_core::riccati::solve_are;
use dirinfo_core::simulate::{simulate_batch, stability_report, write_trace_csv};
use dirinfo_core::stability::{is_controllable, is_detectable, is_stabilizable, spectral_radius};
use dirinfo_core::{
    augment_memory, feedback_capacity, finite_horizon_dp, ftfi_capacity, kappa_min, nofeedback_capacity_q0,
    scalar_view, stationary_solve, validate_model, CapacityError, ChannelModel, Mat, ModelError, Regime,
    StationarySolution, Tolerances,
};

use crate::config::{Command, RunConfig, SweepParam, Units};
use crate::emit::{num, opt_num};
use crate::CliError;

/// A finished run: the JSON document and, for sweeps, the CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub json: Value,
    pub csv: Option<String>,
}

struct Loaded {
    model: ChannelModel,
    /// Lift order for memory-J files, `None` for first-order files.
    order: Option<usize>,
}

fn solver(e: impl std::fmt::Display) -> CliError {
    CliError::Solver(e.to_string())
}

fn model_error(e: ModelError) -> CliError {
    match e {
        ModelError::Schema(_) => CliError::Usage(e.to_string()),
        other => CliError::Solver(other.to_string()),
    }
}

fn load(config: &RunConfig) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(&config.model)
        .map_err(|e| CliError::Usage(format!("cannot read model {}: {e}", config.model.display())))?;
    match parse_model_json(&text).map_err(model_error)? {
        ModelDocument::FirstOrder(mut m) => {
            if let Some(k) = config.kappa {
                m.kappa = k;
            }
            if let Some(n) = config.horizon {
                m.horizon = n;
            }
            Ok(Loaded {
                model: validate_model(m).map_err(model_error)?,
                order: None,
            })
        }
        ModelDocument::MemoryJ(mut mj) => {
            if let Some(k) = config.kappa {
                mj.kappa = k;
            }
            if let Some(n) = config.horizon {
                mj.horizon = n;
            }
            let aug = augment_memory(&mj).map_err(model_error)?;
            Ok(Loaded {
                model: aug.model,
                order: Some(aug.order),
            })
        }
    }
}

pub fn mat(m: &Mat) -> Value {
    Value::Array(
        mat_to_rows(m)
            .into_iter()
            .map(|row| Value::Array(row.into_iter().map(num).collect()))
            .collect(),
    )
}

fn header(config: &RunConfig, loaded: &Loaded) -> Map<String, Value> {
    let model_echo: Value = serde_json::from_str(&model_to_json(&loaded.model)).unwrap_or(Value::Null);
    let mut h = Map::new();
    h.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    h.insert(
        "tolerances".into(),
        serde_json::to_value(Tolerances::default()).unwrap_or(Value::Null),
    );
    h.insert("command".into(), serde_json::to_value(config.command).unwrap_or(Value::Null));
    h.insert("units".into(), serde_json::to_value(config.units).unwrap_or(Value::Null));
    h.insert(
        "inputs".into(),
        json!({
            "model_path": config.model.display().to_string(),
            "kappa": opt_num(config.kappa),
            "horizon": config.horizon,
            "s": opt_num(config.s),
            "memory_order": loaded.order,
            "model": model_echo,
        }),
    );
    h
}

fn regime(r: Regime) -> Value {
    serde_json::to_value(r).unwrap_or(Value::Null)
}

pub fn run(config: &RunConfig) -> Result<Report, CliError> {
    let loaded = load(config)?;
    let mut doc = header(config, &loaded);
    let mut csv = None;
    let body = match config.command {
        Command::Check => check(&loaded.model)?,
        Command::Ftfi => ftfi(config, &loaded.model)?,
        Command::Capacity => capacity(config, &loaded.model)?,
        Command::Nofeedback => nofeedback(config, &loaded.model)?,
        Command::Simulate => simulate(config, &loaded.model)?,
        Command::Sweep => {
            let (body, table) = sweep(config, &loaded.model)?;
            csv = Some(table);
            body
        }
    };
    doc.extend(body);
    Ok(Report {
        json: Value::Object(doc),
        csv,
    })
}

fn check(model: &ChannelModel) -> Result<Map<String, Value>, CliError> {
    let g_seq: Vec<Mat> = model.q_seq.iter().map(sym_sqrt).collect();
    let mut steps = Vec::new();
    for (i, c) in model.c_seq.iter().enumerate() {
        let d = model.d(i);
        let g = &g_seq[i.min(g_seq.len() - 1)];
        steps.push(json!({
            "spectral_radius": num(spectral_radius(c).map_err(solver)?.spectral_radius),
            "controllable": is_controllable(c, d).map_err(solver)?,
            "stabilizable": is_stabilizable(c, d).map_err(solver)?,
            "detectable": is_detectable(g, c).map_err(solver)?,
        }));
    }
    let all = |key: &str| steps.iter().all(|s| s[key].as_bool() == Some(true));
    let mut out = Map::new();
    out.insert("valid".into(), json!(true));
    out.insert("output_dim".into(), json!(model.output_dim));
    out.insert("input_dim".into(), json!(model.input_dim));
    out.insert("time_invariant".into(), json!(model.time_invariant));
    out.insert("stabilizable".into(), json!(all("stabilizable")));
    out.insert("detectable".into(), json!(all("detectable")));
    out.insert("controllable".into(), json!(all("controllable")));
    if model.time_invariant && all("stabilizable") {
        let c = model.c(0);
        let are = solve_are(c, model.d(0), model.q(0), model.r(0), 1.0).map_err(solver)?;
        let class = are.classify(c, model.d(0), model.q(0), model.r(0), 1.0).map_err(solver)?;
        out.insert(
            "riccati_unit_multiplier".into(),
            json!({
                "P": mat(&are.p),
                "gain": mat(&are.gain),
                "closed_loop_spectral_radius": num(are.spectral_radius),
                "iterations": are.iterations,
                "start": serde_json::to_value(are.start).unwrap_or(Value::Null),
                "classification": serde_json::to_value(class).unwrap_or(Value::Null),
            }),
        );
        out.insert("kappa_min".into(), num(kappa_min(model).map_err(solver)?));
    }
    out.insert("steps".into(), Value::Array(steps));
    Ok(out)
}

fn ftfi(config: &RunConfig, model: &ChannelModel) -> Result<Map<String, Value>, CliError> {
    let u = config.units;
    let (sol, s_star, feasible, active, regime_v, search) = match config.s {
        Some(s) => {
            let sol = finite_horizon_dp(model, s).map_err(solver)?;
            (sol, None, Value::Null, Value::Null, Value::Null, Value::Null)
        }
        None => {
            let f = ftfi_capacity(model).map_err(solver)?;
            (
                f.solution,
                f.s_star,
                json!(f.budget_feasible),
                json!(f.constraint_active),
                regime(f.regime),
                serde_json::to_value(&f.search).unwrap_or(Value::Null),
            )
        }
    };
    let capacity_nats = if regime_v == regime(Regime::ZeroRate) { 0.0 } else { sol.rate_nats() };
    let mut out = Map::new();
    out.insert("capacity".into(), num(u.convert(capacity_nats)));
    out.insert("capacity_nats".into(), num(capacity_nats));
    out.insert("multiplier".into(), num(sol.s));
    out.insert("s_star".into(), opt_num(s_star));
    out.insert("budget_feasible".into(), feasible);
    out.insert("constraint_active".into(), active);
    out.insert("regime".into(), regime_v);
    out.insert("search".into(), search);
    out.insert("achieved_cost".into(), num(sol.achieved_cost));
    out.insert("value_nats".into(), num(sol.value_nats));
    out.insert("information_nats".into(), num(sol.information_nats));
    out.insert("steps".into(), json!(sol.steps()));
    out.insert("gains".into(), Value::Array(sol.strategy.gains.iter().map(mat).collect()));
    out.insert(
        "innovations_covariances".into(),
        Value::Array(sol.strategy.innovations.iter().map(mat).collect()),
    );
    out.insert("step_information_nats".into(), Value::Array(sol.step_information.iter().map(|x| num(*x)).collect()));
    out.insert("step_costs".into(), Value::Array(sol.step_costs.iter().map(|x| num(*x)).collect()));
    out.insert("residuals".into(), json!({ "waterfill_projected_gradient": num(sol.max_waterfill_pg) }));
    Ok(out)
}

fn stationary_fields(sol: &StationarySolution, u: Units, capacity_nats: f64) -> Map<String, Value> {
    let mut out = Map::new();
    out.insert("capacity".into(), num(u.convert(capacity_nats)));
    out.insert("capacity_nats".into(), num(capacity_nats));
    out.insert("multiplier".into(), num(sol.s));
    out.insert("regime".into(), regime(sol.regime));
    out.insert("gain".into(), mat(&sol.gain));
    out.insert("innovations_covariance".into(), mat(&sol.kz));
    out.insert("output_covariance".into(), mat(&sol.kb));
    out.insert("riccati_solution".into(), mat(&sol.p));
    out.insert("achieved_cost".into(), num(sol.achieved_cost));
    out.insert("dual_value".into(), num(sol.dual_value));
    out.insert("closed_loop_spectral_radius".into(), num(sol.closed_loop_radius));
    out.insert(
        "riccati".into(),
        json!({
            "iterations": sol.are_iterations,
            "start": serde_json::to_value(sol.are_start).unwrap_or(Value::Null),
            "detectable": sol.detectable,
        }),
    );
    out.insert(
        "residuals".into(),
        json!({
            "riccati": num(sol.are_residual),
            "lyapunov": num(sol.lyapunov_residual),
            "waterfill_projected_gradient": num(sol.waterfill_pg),
            "waterfill_complementarity": num(sol.waterfill_complementarity),
        }),
    );
    out
}

struct Stationary {
    solution: StationarySolution,
    capacity_nats: f64,
    fields: Map<String, Value>,
}

fn solve_stationary(config: &RunConfig, model: &ChannelModel) -> Result<Stationary, CliError> {
    match config.s {
        Some(s) => {
            let sol = stationary_solve(model, s).map_err(solver)?;
            let rate = sol.rate_nats;
            let mut fields = stationary_fields(&sol, config.units, rate);
            fields.insert("s_star".into(), Value::Null);
            fields.insert("kappa_min".into(), num(kappa_min(model).map_err(solver)?));
            Ok(Stationary {
                solution: sol,
                capacity_nats: rate,
                fields,
            })
        }
        None => {
            let fb = feedback_capacity(model).map_err(solver)?;
            let mut fields = stationary_fields(&fb.solution, config.units, fb.capacity_nats);
            fields.insert("s_star".into(), opt_num(fb.s_star));
            fields.insert("kappa_min".into(), num(fb.kappa_min));
            fields.insert("budget_feasible".into(), json!(fb.budget_feasible));
            fields.insert("constraint_active".into(), json!(fb.constraint_active));
            fields.insert("search".into(), serde_json::to_value(&fb.search).unwrap_or(Value::Null));
            if let Some(r) = fields.get_mut("residuals").and_then(Value::as_object_mut) {
                r.insert("cost_gap".into(), num(fb.search.cost_gap));
            }
            Ok(Stationary {
                capacity_nats: fb.capacity_nats,
                solution: fb.solution,
                fields,
            })
        }
    }
}

/// Closed-form comparison for scalar `R = 1`, `Q = 0` models.
fn scalar_oracle(model: &ChannelModel, st: &Stationary, fixed_s: bool) -> Map<String, Value> {
    let mut out = Map::new();
    let Ok(sc) = scalar_view(model) else {
        return out;
    };
    if sc.c.abs() > 1.0 {
        out.insert("lower_bound_note".into(), json!(LOWER_BOUND_NOTE));
        out.insert("log_c_bound_threshold".into(), num(log_c_bound_threshold(sc.c, sc.d, sc.kv)));
    }
    if sc.r != 1.0 || sc.q != 0.0 || fixed_s {
        return out;
    }
    match scalar_feedback_capacity(sc.c, sc.d, sc.kv, sc.kappa) {
        Ok(o) => {
            let sol = &st.solution;
            let mut delta = (o.capacity_nats - st.capacity_nats)
                .abs()
                .max((o.gain - sol.gain[(0, 0)]).abs())
                .max((o.kz - sol.kz[(0, 0)]).abs());
            if let (Some(a), Some(b)) = (o.s_star, st.fields.get("s_star").and_then(Value::as_f64)) {
                delta = delta.max((a - b).abs());
            }
            out.insert("oracle".into(), serde_json::to_value(o).unwrap_or(Value::Null));
            out.insert("oracle_delta".into(), num(delta));
        }
        Err(CapacityError::BoundaryIndeterminate(_)) => {
            out.insert("oracle".into(), json!("indeterminate at |C| = 1"));
        }
        Err(_) => {}
    }
    out
}

fn capacity(config: &RunConfig, model: &ChannelModel) -> Result<Map<String, Value>, CliError> {
    let st = solve_stationary(config, model)?;
    let oracle = scalar_oracle(model, &st, config.s.is_some());
    let mut out = st.fields;
    out.extend(oracle);
    Ok(out)
}

fn nofeedback(config: &RunConfig, model: &ChannelModel) -> Result<Map<String, Value>, CliError> {
    let nf = nofeedback_capacity_q0(model).map_err(solver)?;
    let mut out = Map::new();
    out.insert("capacity".into(), num(config.units.convert(nf.capacity_nats)));
    out.insert("capacity_nats".into(), num(nf.capacity_nats));
    out.insert("innovations_covariance".into(), mat(&nf.kz));
    out.insert("multiplier".into(), opt_num(nf.multiplier));
    out.insert("channel_stable".into(), json!(nf.channel_stable));
    Ok(out)
}

fn simulate(config: &RunConfig, model: &ChannelModel) -> Result<Map<String, Value>, CliError> {
    let st = solve_stationary(config, model)?;
    let seeds: Vec<u64> = (0..config.seeds as u64).map(|k| config.first_seed + k).collect();
    let traces = simulate_batch(model, &st.solution.strategy(), config.steps, &seeds).map_err(solver)?;
    let report = stability_report(
        &traces,
        st.capacity_nats,
        st.solution.achieved_cost,
        config.rate_epsilon,
        config.cost_epsilon,
    );
    if let Some(path) = &config.trace {
        write_trace(path, &traces[0])?;
    }
    let mut out = st.fields;
    out.insert("seeds".into(), json!(seeds));
    out.insert("simulation_steps".into(), json!(config.steps));
    out.insert(
        "terminal_rates".into(),
        Value::Array(report.terminal_rates.iter().map(|r| num(config.units.convert(*r))).collect()),
    );
    out.insert("stability".into(), serde_json::to_value(&report).unwrap_or(Value::Null));
    Ok(out)
}

fn write_trace(path: &Path, trace: &dirinfo_core::simulate::SimulationTrace) -> Result<(), CliError> {
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::Io(format!("cannot write trace {}: {e}", path.display())))?;
    write_trace_csv(trace, std::io::BufWriter::new(file))
        .map_err(|e| CliError::Io(format!("cannot write trace {}: {e}", path.display())))
}

#[derive(Debug, Clone)]
struct Cell {
    value: f64,
    capacity: f64,
    capacity_nats: f64,
    regime: Regime,
    s_star: Option<f64>,
    kappa_min: f64,
    achieved_cost: f64,
    budget_feasible: bool,
    gain: Mat,
    kz: Mat,
}

fn sweep_model(model: &ChannelModel, param: SweepParam, value: f64) -> Result<ChannelModel, CliError> {
    let mut m = model.clone();
    match param {
        SweepParam::Kappa => {
            if !(value.is_finite() && value >= 0.0) {
                return Err(CliError::Usage(format!("sweep value {value} is not a valid kappa")));
            }
            m.kappa = value;
        }
        SweepParam::C => {
            if scalar_view(model).is_err() {
                return Err(CliError::Usage("sweeping C requires a scalar time-invariant model".into()));
            }
            m.c_seq = vec![Mat::from_element(1, 1, value)];
        }
    }
    Ok(m)
}

fn sweep(config: &RunConfig, model: &ChannelModel) -> Result<(Map<String, Value>, String), CliError> {
    let param = config.param.expect("checked by config");
    let models = config
        .values
        .iter()
        .map(|v| sweep_model(model, param, *v))
        .collect::<Result<Vec<_>, _>>()?;
    let cells = models
        .par_iter()
        .zip(config.values.par_iter())
        .map(|(m, &value)| {
            let fb = feedback_capacity(m).map_err(|e| CliError::Solver(format!("sweep value {value}: {e}")))?;
            Ok(Cell {
                value,
                capacity: config.units.convert(fb.capacity_nats),
                capacity_nats: fb.capacity_nats,
                regime: fb.solution.regime,
                s_star: fb.s_star,
                kappa_min: fb.kappa_min,
                achieved_cost: fb.solution.achieved_cost,
                budget_feasible: fb.budget_feasible,
                gain: fb.solution.gain,
                kz: fb.solution.kz,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let records: Vec<Value> = cells
        .iter()
        .map(|c| {
            json!({
                "value": num(c.value),
                "capacity": num(c.capacity),
                "capacity_nats": num(c.capacity_nats),
                "regime": regime(c.regime),
                "s_star": opt_num(c.s_star),
                "kappa_min": num(c.kappa_min),
                "achieved_cost": num(c.achieved_cost),
                "budget_feasible": c.budget_feasible,
                "gain": mat(&c.gain),
                "innovations_covariance": mat(&c.kz),
            })
        })
        .collect();
    let mut out = Map::new();
    out.insert("param".into(), serde_json::to_value(param).unwrap_or(Value::Null));
    out.insert("cells".into(), Value::Array(records));
    Ok((out, sweep_csv(param, &cells)?))
}

fn sweep_csv(param: SweepParam, cells: &[Cell]) -> Result<String, CliError> {
    use crate::emit::format_g12;
    let name = match param {
        SweepParam::Kappa => "kappa",
        SweepParam::C => "C",
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record([
        name,
        "capacity",
        "capacity_nats",
        "regime",
        "s_star",
        "kappa_min",
        "achieved_cost",
        "budget_feasible",
    ])
    .map_err(io)?;
    for c in cells {
        let regime = serde_json::to_value(c.regime)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        w.write_record([
            format_g12(c.value),
            format_g12(c.capacity),
            format_g12(c.capacity_nats),
            regime,
            c.s_star.map(format_g12).unwrap_or_default(),
            format_g12(c.kappa_min),
            format_g12(c.achieved_cost),
            c.budget_feasible.to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}
