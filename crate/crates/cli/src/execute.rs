//! Command dispatch and report assembly.

use std::fs;

use conemarket::io::{digest_of, floats, model_digest, model_from_json, strategy_from_dto, strategy_to_dto};
use conemarket::model::{first_non_generating_time, is_driving_generated};
use conemarket::samples::{rng, shuffled_leaves};
use conemarket::transfer::{sibling_swap, TransferMethod};
use conemarket::{
    brute_force_with_budget, decompose, dirac_check, expected_utility, has_independent_increments, is_admissible,
    permute_atoms, prediction_process, randomize, rebuild, solve_bellman, transfer_strategy, verify_invariance, wealth,
    Model, PathTarget, SolveStatus, SolverOptions, Strategy, UtilitySpec, Verdict,
};
use serde_json::{json, Map, Value};

use crate::config::{Command, RunConfig, TargetConfig, Transform, SCHEMA_VERSION};
use crate::error::CliError;

/// A finished command: the structured report and the process exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Value,
    pub exit_code: i32,
}

fn num(v: f64) -> Value {
    Value::String(format!("{v:?}"))
}

fn nums(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

fn matrix(rows: &[Vec<f64>]) -> Value {
    Value::Array(rows.iter().map(|r| nums(r)).collect())
}

/// `{node id: vector}` in tree order.
fn per_node(model: &Model, values: &[Vec<f64>]) -> Value {
    let mut map = Map::new();
    for (node, v) in model.tree().nodes().iter().zip(values) {
        map.insert(node.id.clone(), nums(v));
    }
    Value::Object(map)
}

struct Inputs {
    model: Model,
    other: Option<Model>,
    digests: Map<String, Value>,
}

fn load_model(
    inline: Option<&conemarket::io::ModelDto>,
    file: Option<&std::path::Path>,
    field: &str,
) -> Result<Option<Model>, CliError> {
    if let Some(dto) = inline {
        return dto
            .to_model()
            .map(Some)
            .map_err(|e| CliError::Config(format!("{field}: {e}")));
    }
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        return model_from_json(&text)
            .map(Some)
            .map_err(|e| CliError::Config(format!("{field}_file: {e}")));
    }
    Ok(None)
}

fn node_index(model: &Model, id: &str, field: &str) -> Result<usize, CliError> {
    model
        .tree()
        .index_of(id)
        .ok_or_else(|| CliError::Config(format!("{field}: unknown node {id:?}")))
}

fn apply_transform(model: &Model, transform: &Transform, seed: u64) -> Result<Model, CliError> {
    Ok(match transform {
        Transform::Permute { perm } => permute_atoms(model, perm)?,
        Transform::SiblingSwap { a, b } => {
            let a = node_index(model, a, "transform.a")?;
            let b = node_index(model, b, "transform.b")?;
            permute_atoms(model, &sibling_swap(model, a, b)?)?
        }
        Transform::Rebuild => rebuild(model, Some(&shuffled_leaves(&mut rng(seed), model)))?,
        Transform::Randomize { m } => randomize(model, *m)?.model,
    })
}

fn load_inputs(config: &RunConfig) -> Result<Inputs, CliError> {
    let model = load_model(config.model.as_ref(), config.model_file.as_deref(), "model")?
        .ok_or_else(|| CliError::Config("model: missing".into()))?;
    let mut other = load_model(
        config.other_model.as_ref(),
        config.other_model_file.as_deref(),
        "other_model",
    )?;
    if let Some(t) = &config.transform {
        other = Some(apply_transform(&model, t, config.seed)?);
    }
    let mut digests = Map::new();
    digests.insert("config".into(), Value::String(digest_of(config)));
    digests.insert("model".into(), Value::String(model_digest(&model)));
    if let Some(o) = &other {
        digests.insert("other_model".into(), Value::String(model_digest(o)));
    }
    Ok(Inputs { model, other, digests })
}

fn endowment(config: &RunConfig) -> Result<Vec<f64>, CliError> {
    config
        .x
        .as_ref()
        .map(|x| floats(x))
        .ok_or_else(|| CliError::Config("x: missing".into()))
}

fn utility(config: &RunConfig) -> Result<UtilitySpec, CliError> {
    config
        .utility
        .as_ref()
        .map(|u| u.to_spec())
        .ok_or_else(|| CliError::Config("utility: missing".into()))
}

fn solver_options(config: &RunConfig) -> SolverOptions {
    SolverOptions {
        gap_tol: config.solver.tol.0,
        max_iter: config.solver.max_iter,
    }
}

fn ensure_dim(model: &Model, x: &[f64]) -> Result<(), CliError> {
    if x.len() != model.asset_dim() {
        return Err(CliError::Config(format!(
            "x: expected {} coordinates, got {}",
            model.asset_dim(),
            x.len()
        )));
    }
    Ok(())
}

/// Runs one command. Errors are usage or domain failures without a report;
/// a report with a nonzero exit code records a failed check.
pub fn execute(config: &RunConfig) -> Result<Outcome, CliError> {
    config.check()?;
    let inputs = load_inputs(config)?;
    let (result, exit_code) = match config.command {
        Command::Validate => run_validate(&inputs),
        Command::Solve => run_solve(config, &inputs)?,
        Command::Brute => run_brute(config, &inputs)?,
        Command::Decompose => run_decompose(config, &inputs)?,
        Command::Predict => run_predict(config, &inputs)?,
        Command::Transfer => run_transfer(config, &inputs)?,
        Command::Invariance => run_invariance(config, &inputs)?,
    };
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": config.command.name(),
        "digests": Value::Object(inputs.digests),
        "result": result,
    });
    Ok(Outcome { report, exit_code })
}

fn run_validate(inputs: &Inputs) -> (Value, i32) {
    let m = &inputs.model;
    let report = m.validate();
    let tree = m.tree();
    let result = json!({
        "valid": report.is_valid(),
        "errors": report.errors,
        "warnings": report.warnings,
        "nodes": tree.len(),
        "leaves": tree.leaves().len(),
        "horizon": m.horizon(),
        "assets": m.asset_dim(),
        "driving_dim": m.driving_dim(),
        "aux_dims": m.aux_dims(),
        "driving_generated": is_driving_generated(m),
        "first_non_generating_time": first_non_generating_time(m),
        "independent_increments": has_independent_increments(m),
    });
    (result, if report.is_valid() { 0 } else { 1 })
}

fn evaluation(model: &Model, x: &[f64], strategy: &Strategy, u: &UtilitySpec) -> Result<Value, CliError> {
    let w = wealth(model, x, strategy)?;
    let adm = is_admissible(model, x, strategy)?;
    let violations: Vec<Value> = adm
        .violations
        .iter()
        .map(|v| json!({"node": v.id, "kind": format!("{:?}", v.kind)}))
        .collect();
    Ok(json!({
        "expected_utility": num(expected_utility(model, x, strategy, u)?),
        "admissible": adm.admissible,
        "violations": violations,
        "wealth": per_node(model, &w.numeraire),
        "holdings": per_node(model, &w.physical),
    }))
}

fn run_solve(config: &RunConfig, inputs: &Inputs) -> Result<(Value, i32), CliError> {
    let m = &inputs.model;
    let x = endowment(config)?;
    ensure_dim(m, &x)?;
    let u = utility(config)?;
    m.ensure_valid()?;
    let res = solve_bellman(m, &x, &u, &solver_options(config))?;
    let mut result = json!({
        "utility": u.name(),
        "value": num(res.value),
        "upper_bound": num(res.upper_bound),
        "gap": num(res.gap),
        "status": res.status.as_str(),
        "iterations": res.iterations,
        "warnings": res.warnings,
        "strategy": strategy_to_dto(m, &res.strategy),
        "wealth": per_node(m, &wealth(m, &x, &res.strategy)?.numeraire),
    });
    if let Some(dto) = &config.strategy {
        let s = strategy_from_dto(m, dto)?;
        result["evaluation"] = evaluation(m, &x, &s, &u)?;
    }
    let exit = if res.status == SolveStatus::Infeasible { 1 } else { 0 };
    Ok((result, exit))
}

fn run_brute(config: &RunConfig, inputs: &Inputs) -> Result<(Value, i32), CliError> {
    let m = &inputs.model;
    let x = endowment(config)?;
    ensure_dim(m, &x)?;
    let u = utility(config)?;
    let grid = config.solver.grid.0;
    let res = brute_force_with_budget(m, &x, &u, grid, config.solver.budget)?;
    Ok((
        json!({
            "utility": u.name(),
            "value": num(res.value),
            "grid": num(grid),
            "evaluations": res.evaluations,
        }),
        0,
    ))
}

fn run_decompose(config: &RunConfig, inputs: &Inputs) -> Result<(Value, i32), CliError> {
    let cone = inputs.model.cone();
    let path = config
        .path
        .as_ref()
        .ok_or_else(|| CliError::Config("path: missing".into()))?
        .to_path()?;
    let dec = decompose(&path, cone)?;
    let rebuilt = dec.reconstruct();
    let error = rebuilt
        .iter()
        .zip(path.values())
        .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max);
    let liquidation = path
        .values()
        .iter()
        .map(|v| cone.liquidation_value(v).map(num))
        .collect::<Result<Vec<_>, _>>()?;
    let derivatives: Vec<Value> = dec
        .derivatives
        .iter()
        .map(|d| json!({"step": d.step, "direction": nums(&d.direction)}))
        .collect();
    Ok((
        json!({
            "y": nums(&dec.basis.y),
            "basis": matrix(&dec.basis.basis),
            "gram": matrix(&dec.basis.gram),
            "z": matrix(&dec.z),
            "coords": matrix(&dec.coords),
            "variation": nums(&dec.variation.values().iter().map(|v| v[0]).collect::<Vec<_>>()),
            "derivatives": derivatives,
            "reconstruction_error": num(error),
            "liquidation": liquidation,
        }),
        0,
    ))
}

fn run_predict(config: &RunConfig, inputs: &Inputs) -> Result<(Value, i32), CliError> {
    let m = &inputs.model;
    m.ensure_valid()?;
    let target = match config.target.as_ref().unwrap_or(&TargetConfig::Driving) {
        TargetConfig::Driving => PathTarget::driving(m),
        TargetConfig::Strategy => {
            let dto = config
                .strategy
                .as_ref()
                .ok_or_else(|| CliError::Config("strategy: missing".into()))?;
            PathTarget::from_node_values(m, strategy_from_dto(m, dto)?.increments())?
        }
        TargetConfig::NodeValues { values } => {
            let mut per_node = vec![None; m.tree().len()];
            for (id, v) in values {
                per_node[node_index(m, id, "target.values")?] = Some(floats(v));
            }
            let filled = per_node
                .into_iter()
                .enumerate()
                .map(|(i, v)| {
                    v.ok_or_else(|| CliError::Config(format!("target.values: missing node {:?}", m.tree().node(i).id)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            PathTarget::from_node_values(m, &filled)?
        }
    };
    let pred = prediction_process(m, &target)?;
    let tree = m.tree();
    let tables: Vec<Value> = pred
        .tables
        .iter()
        .map(|t| {
            let masses: Vec<Value> = t
                .masses
                .iter()
                .map(|(p, mass)| json!({"path": p, "mass": mass.to_string()}))
                .collect();
            json!({
                "node": tree.node(t.node).id,
                "time": t.time,
                "probability": t.probability.to_string(),
                "masses": masses,
            })
        })
        .collect();
    let cert = dirac_check(&pred, m);
    let violation = cert
        .violation
        .as_ref()
        .map(|v| json!({"k": v.k, "u": v.u, "node": v.id}));
    let function_table: Vec<Value> = cert
        .function_table
        .iter()
        .map(|f| json!({"time": f.time, "driving_path": matrix(&f.driving_path), "value": nums(&f.value)}))
        .collect();
    let tower = pred.tower_violation(m).map(|i| tree.node(i).id.clone());
    let terminal = pred.terminal_violation(m).map(|i| tree.node(i).id.clone());
    Ok((
        json!({
            "paths": pred.paths.iter().map(|p| matrix(p)).collect::<Vec<_>>(),
            "tables": tables,
            "tower_violation": tower,
            "terminal_violation": terminal,
            "normalized": pred.normalized(),
            "dirac": {
                "passed": cert.passed,
                "violation": violation,
                "function_table": function_table,
                "conflicts": cert.conflicts,
            },
        }),
        0,
    ))
}

fn other(inputs: &Inputs) -> Result<&Model, CliError> {
    inputs
        .other
        .as_ref()
        .ok_or_else(|| CliError::Config("other_model: missing".into()))
}

fn run_transfer(config: &RunConfig, inputs: &Inputs) -> Result<(Value, i32), CliError> {
    let src = &inputs.model;
    let dst = other(inputs)?;
    src.ensure_valid()?;
    dst.ensure_valid()?;
    let x = endowment(config)?;
    ensure_dim(src, &x)?;
    let u = config.utility.as_ref().map(|u| u.to_spec());
    let strategy = match (&config.strategy, &u) {
        (Some(dto), _) => strategy_from_dto(src, dto)?,
        (None, Some(u)) => solve_bellman(src, &x, u, &solver_options(config))?.strategy,
        (None, None) => return Err(CliError::Config("utility: required when no strategy is given".into())),
    };
    let t = transfer_strategy(src, &strategy, dst, &x)?;
    let mut result = json!({
        "source_strategy": strategy_to_dto(src, &strategy),
        "strategy": strategy_to_dto(dst, &t.strategy),
        "dirac_passed": t.certificate.passed,
        "function_table_size": t.certificate.function_table.len(),
        "k_decreasing": t.k_decreasing,
        "admissible": t.admissible,
    });
    if let Some(u) = &u {
        let a = expected_utility(src, &x, &strategy, u)?;
        let b = expected_utility(dst, &x, &t.strategy, u)?;
        result["utility"] = json!(u.name());
        result["source_value"] = num(a);
        result["transferred_value"] = num(b);
        result["difference"] = num(if a == b { 0.0 } else { (a - b).abs() });
    }
    let ok = t.certificate.passed && t.k_decreasing && t.admissible;
    Ok((result, if ok { 0 } else { 1 }))
}

fn run_invariance(config: &RunConfig, inputs: &Inputs) -> Result<(Value, i32), CliError> {
    let a = &inputs.model;
    let b = other(inputs)?;
    a.ensure_valid()?;
    b.ensure_valid()?;
    let x = endowment(config)?;
    ensure_dim(a, &x)?;
    let u = utility(config)?;
    let rep = verify_invariance(a, b, &x, &u, config.solver.invariance_tol.0, &solver_options(config))?;
    let checks: Vec<Value> = rep
        .checks
        .iter()
        .map(|c| {
            let method = match c.method {
                TransferMethod::Direct => json!("direct"),
                TransferMethod::Slices { count } => json!({"slices": count}),
            };
            json!({
                "from": c.from,
                "to": c.to,
                "method": method,
                "source_value": num(c.source_value),
                "transferred_value": num(c.transferred_value),
                "error": num(c.error),
                "dirac_passed": c.dirac_passed,
                "admissible": c.admissible,
                "passed": c.passed(conemarket::transfer::TRANSFER_TOL),
                "note": c.note,
            })
        })
        .collect();
    let note = (!rep.laws_equal).then_some("laws differ; no equality claim");
    let result = json!({
        "utility": u.name(),
        "value_a": num(rep.value_a),
        "value_b": num(rep.value_b),
        "difference": num(rep.difference),
        "tolerance": num(rep.tolerance),
        "status_a": rep.status_a.as_str(),
        "status_b": rep.status_b.as_str(),
        "laws_equal": rep.laws_equal,
        "verdict": rep.verdict.as_str(),
        "note": note,
        "checks": checks,
        "errors": rep.errors,
    });
    Ok((result, if rep.verdict == Verdict::Fail { 1 } else { 0 }))
}

/// Human-readable rendering: one `key: value` line per scalar, nested by indentation.
pub fn render_text(report: &Value) -> String {
    let mut out = String::new();
    render_into(report, 0, &mut out);
    out
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some("-".into()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        Value::Array(items) if items.iter().all(|i| !i.is_object() && !i.is_array()) => Some(format!(
            "[{}]",
            items.iter().filter_map(scalar).collect::<Vec<_>>().join(", ")
        )),
        _ => None,
    }
}

fn render_into(v: &Value, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match v {
        Value::Object(map) => {
            for (k, item) in map {
                match scalar(item) {
                    Some(s) => out.push_str(&format!("{pad}{k}: {s}\n")),
                    None => {
                        out.push_str(&format!("{pad}{k}:\n"));
                        render_into(item, indent + 1, out);
                    }
                }
            }
        }
        Value::Array(items) => {
            for item in items {
                match scalar(item) {
                    Some(s) => out.push_str(&format!("{pad}- {s}\n")),
                    None => {
                        out.push_str(&format!("{pad}-\n"));
                        render_into(item, indent + 1, out);
                    }
                }
            }
        }
        other => out.push_str(&format!("{pad}{}\n", scalar(other).unwrap_or_default())),
    }
}

/// Serializes a report in the requested format.
pub fn render(report: &Value, format: crate::config::Format) -> String {
    match format {
        crate::config::Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        crate::config::Format::Text => render_text(report),
    }
}
