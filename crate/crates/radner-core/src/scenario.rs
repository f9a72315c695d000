//! Scenario files: strict JSON ingestion with pointer-precise diagnostics.
//!
//! A scenario is a single JSON document naming the market and the
//! trajectory data:
//!
//! ```json
//! {
//!   "horizon": 1.0,
//!   "lambda": 0.2,
//!   "supply": 0.0,
//!   "dividend_mean": 0.0,
//!   "agents": [ { "target": -300.0, "endowment": 0.0 }, … ],
//!   "kappa": { "type": "constant", "value": 0.1 },
//!   "gamma": { "type": "twap" },
//!   "grid": 2001
//! }
//! ```
//!
//! `dividend_mean` defaults to 0 and `grid` (the default evaluation grid
//! size) is optional; everything else is required. Tabulated `kappa`/`gamma`
//! take `"type": "table"` with a `points` array of samples on a uniform
//! time grid. Validation is strict — unknown keys are rejected — and every
//! violation carries the JSON pointer of the offending value, so a bad file
//! fails loudly and precisely instead of half-solving.

use crate::equilibrium::MarketSpec;
use crate::error::{Error, Result};
use crate::ranking::AgentSpec;
use crate::trajectory::{GammaModel, KappaModel, TrajectoryModel};
use serde_json::{Map, Value};
use std::path::Path;

/// Highest accepted `grid` value; larger grids are almost certainly typos
/// and would only exhaust memory.
const MAX_GRID: u64 = 1_000_001;

/// A fully validated scenario: the market, the trajectory data, the
/// optional grid override, and any non-fatal observations.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: MarketSpec,
    pub model: TrajectoryModel,
    /// Evaluation grid size requested by the file, if any.
    pub grid: Option<usize>,
    /// Non-fatal inconsistencies worth surfacing (e.g. endowments that do
    /// not sum to the stated supply).
    pub warnings: Vec<String>,
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Scenario {
        pointer: String::new(),
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_scenario(&text)
}

/// Validates a scenario document from its JSON text.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let document: Value = serde_json::from_str(text).map_err(|e| Error::Scenario {
        pointer: String::new(),
        message: format!("invalid JSON: {e}"),
    })?;
    let root = as_object(&document, "")?;
    check_keys(
        root,
        "",
        &[
            "horizon",
            "lambda",
            "supply",
            "dividend_mean",
            "agents",
            "kappa",
            "gamma",
            "grid",
        ],
    )?;

    let horizon = require_number(root, "", "horizon")?;
    if !(horizon > 0.0) {
        return Err(violation("/horizon", "must be positive"));
    }
    let lambda = require_number(root, "", "lambda")?;
    if !(lambda > 0.0) {
        return Err(violation("/lambda", "must be positive"));
    }
    let supply = require_number(root, "", "supply")?;
    let dividend_mean = match root.get("dividend_mean") {
        Some(v) => number(v, "/dividend_mean")?,
        None => 0.0,
    };

    let agents = parse_agents(root)?;
    let kappa = parse_kappa(root)?;
    let gamma = parse_gamma(root)?;
    let grid = parse_grid(root)?;

    let mut warnings = Vec::new();
    let endowment_total: f64 = agents.iter().map(|a| a.endowment).sum();
    if (endowment_total - supply).abs() > 1e-9 * (1.0 + supply.abs()) {
        warnings.push(format!(
            "endowments sum to {endowment_total} but supply is {supply}; \
             the market cannot clear and verification will fail"
        ));
    }

    // The trajectory module re-validates table semantics; a slip past the
    // schema checks above is still caught, just without a pointer.
    let model = TrajectoryModel::new(horizon, kappa, gamma).map_err(|e| Error::Scenario {
        pointer: String::new(),
        message: e.to_string(),
    })?;
    let spec = MarketSpec {
        agents,
        lambda,
        supply,
        dividend_mean,
    };
    spec.validate()?;
    Ok(Scenario {
        spec,
        model,
        grid,
        warnings,
    })
}

fn violation(pointer: &str, message: &str) -> Error {
    Error::Scenario {
        pointer: pointer.to_string(),
        message: message.to_string(),
    }
}

fn as_object<'a>(value: &'a Value, pointer: &str) -> Result<&'a Map<String, Value>> {
    value
        .as_object()
        .ok_or_else(|| violation(pointer, "expected an object"))
}

fn check_keys(object: &Map<String, Value>, pointer: &str, known: &[&str]) -> Result<()> {
    for key in object.keys() {
        if !known.contains(&key.as_str()) {
            return Err(violation(
                &format!("{pointer}/{key}"),
                "unknown key (strict schema)",
            ));
        }
    }
    Ok(())
}

fn number(value: &Value, pointer: &str) -> Result<f64> {
    let x = value
        .as_f64()
        .ok_or_else(|| violation(pointer, "expected a number"))?;
    if !x.is_finite() {
        return Err(violation(pointer, "must be finite"));
    }
    Ok(x)
}

fn require_number(object: &Map<String, Value>, pointer: &str, key: &str) -> Result<f64> {
    let child = format!("{pointer}/{key}");
    let value = object
        .get(key)
        .ok_or_else(|| violation(&child, "missing required key"))?;
    number(value, &child)
}

fn require_str<'a>(
    object: &'a Map<String, Value>,
    pointer: &str,
    key: &str,
) -> Result<&'a str> {
    let child = format!("{pointer}/{key}");
    object
        .get(key)
        .ok_or_else(|| violation(&child, "missing required key"))?
        .as_str()
        .ok_or_else(|| violation(&child, "expected a string"))
}

fn parse_agents(root: &Map<String, Value>) -> Result<Vec<AgentSpec>> {
    let value = root
        .get("agents")
        .ok_or_else(|| violation("/agents", "missing required key"))?;
    let rows = value
        .as_array()
        .ok_or_else(|| violation("/agents", "expected an array"))?;
    if rows.len() < 2 {
        return Err(violation("/agents", "need at least 2 agents"));
    }
    let mut agents = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let pointer = format!("/agents/{i}");
        let fields = as_object(row, &pointer)?;
        check_keys(fields, &pointer, &["target", "endowment"])?;
        agents.push(AgentSpec {
            target: require_number(fields, &pointer, "target")?,
            endowment: require_number(fields, &pointer, "endowment")?,
        });
    }
    Ok(agents)
}

fn parse_samples(object: &Map<String, Value>, pointer: &str) -> Result<Vec<f64>> {
    let child = format!("{pointer}/points");
    let rows = object
        .get("points")
        .ok_or_else(|| violation(&child, "missing required key for a table"))?
        .as_array()
        .ok_or_else(|| violation(&child, "expected an array"))?;
    if rows.len() < 2 {
        return Err(violation(&child, "a table needs at least 2 samples"));
    }
    rows.iter()
        .enumerate()
        .map(|(i, v)| number(v, &format!("{child}/{i}")))
        .collect()
}

fn parse_kappa(root: &Map<String, Value>) -> Result<KappaModel> {
    let value = root
        .get("kappa")
        .ok_or_else(|| violation("/kappa", "missing required key"))?;
    let fields = as_object(value, "/kappa")?;
    match require_str(fields, "/kappa", "type")? {
        "constant" => {
            check_keys(fields, "/kappa", &["type", "value"])?;
            let level = require_number(fields, "/kappa", "value")?;
            if !(level > 0.0) {
                return Err(violation("/kappa/value", "must be positive"));
            }
            Ok(KappaModel::Constant(level))
        }
        "table" => {
            check_keys(fields, "/kappa", &["type", "points"])?;
            let samples = parse_samples(fields, "/kappa")?;
            for (i, &s) in samples.iter().enumerate() {
                if !(s > 0.0) {
                    return Err(violation(
                        &format!("/kappa/points/{i}"),
                        "must be positive",
                    ));
                }
            }
            Ok(KappaModel::Table(samples))
        }
        other => Err(violation(
            "/kappa/type",
            &format!("expected \"constant\" or \"table\", got \"{other}\""),
        )),
    }
}

fn parse_gamma(root: &Map<String, Value>) -> Result<GammaModel> {
    let value = root
        .get("gamma")
        .ok_or_else(|| violation("/gamma", "missing required key"))?;
    let fields = as_object(value, "/gamma")?;
    match require_str(fields, "/gamma", "type")? {
        "twap" => {
            check_keys(fields, "/gamma", &["type"])?;
            Ok(GammaModel::Twap)
        }
        "table" => {
            check_keys(fields, "/gamma", &["type", "points"])?;
            let samples = parse_samples(fields, "/gamma")?;
            for (i, pair) in samples.windows(2).enumerate() {
                if pair[1] <= pair[0] {
                    return Err(violation(
                        &format!("/gamma/points/{}", i + 1),
                        "samples must be strictly increasing",
                    ));
                }
            }
            if samples[0] != 0.0 || *samples.last().unwrap() != 1.0 {
                return Err(violation(
                    "/gamma/points",
                    "samples must start at 0 and end at 1",
                ));
            }
            Ok(GammaModel::Table(samples))
        }
        other => Err(violation(
            "/gamma/type",
            &format!("expected \"twap\" or \"table\", got \"{other}\""),
        )),
    }
}

fn parse_grid(root: &Map<String, Value>) -> Result<Option<usize>> {
    let Some(value) = root.get("grid") else {
        return Ok(None);
    };
    let n = value
        .as_u64()
        .ok_or_else(|| violation("/grid", "expected a positive integer"))?;
    if !(2..=MAX_GRID).contains(&n) {
        return Err(violation(
            "/grid",
            &format!("must be between 2 and {MAX_GRID}"),
        ));
    }
    Ok(Some(n as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> serde_json::Value {
        serde_json::json!({
            "horizon": 1.0,
            "lambda": 0.2,
            "supply": 0.0,
            "agents": [
                {"target": -1.0, "endowment": 0.0},
                {"target": 1.0, "endowment": 0.0},
            ],
            "kappa": {"type": "constant", "value": 0.1},
            "gamma": {"type": "twap"},
        })
    }

    fn parse(value: serde_json::Value) -> Result<Scenario> {
        parse_scenario(&value.to_string())
    }

    fn pointer_of(result: Result<Scenario>) -> String {
        match result {
            Err(Error::Scenario { pointer, .. }) => pointer,
            other => panic!("expected a scenario error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_scenario_round_trips() {
        let scenario = parse(minimal()).unwrap();
        assert_eq!(scenario.spec.lambda, 0.2);
        assert_eq!(scenario.spec.agents.len(), 2);
        assert_eq!(scenario.spec.dividend_mean, 0.0);
        assert_eq!(scenario.grid, None);
        assert!(scenario.warnings.is_empty());
        assert!(scenario.model.is_closed_form());
    }

    #[test]
    fn missing_lambda_points_at_lambda() {
        let mut doc = minimal();
        doc.as_object_mut().unwrap().remove("lambda");
        assert_eq!(pointer_of(parse(doc)), "/lambda");
    }

    #[test]
    fn schema_violations_carry_pointers() {
        let mut doc = minimal();
        doc["agents"][1]["target"] = serde_json::json!("much");
        assert_eq!(pointer_of(parse(doc)), "/agents/1/target");

        let mut doc = minimal();
        doc["kappa"]["value"] = serde_json::json!(-0.1);
        assert_eq!(pointer_of(parse(doc)), "/kappa/value");

        let mut doc = minimal();
        doc["kappa"] = serde_json::json!({"type": "quadratic", "value": 0.1});
        assert_eq!(pointer_of(parse(doc)), "/kappa/type");

        let mut doc = minimal();
        doc["gamma"] = serde_json::json!({"type": "table", "points": [0.0, 0.7, 0.4, 1.0]});
        assert_eq!(pointer_of(parse(doc)), "/gamma/points/2");

        let mut doc = minimal();
        doc["grid"] = serde_json::json!(1);
        assert_eq!(pointer_of(parse(doc)), "/grid");

        let mut doc = minimal();
        doc["agents"] = serde_json::json!([{"target": 1.0, "endowment": 0.0}]);
        assert_eq!(pointer_of(parse(doc)), "/agents");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut doc = minimal();
        doc["volatility"] = serde_json::json!(0.3);
        assert_eq!(pointer_of(parse(doc)), "/volatility");

        let mut doc = minimal();
        doc["agents"][0]["name"] = serde_json::json!("alice");
        assert_eq!(pointer_of(parse(doc)), "/agents/0/name");

        let mut doc = minimal();
        doc["gamma"]["points"] = serde_json::json!([0.0, 1.0]);
        assert_eq!(pointer_of(parse(doc)), "/gamma/points");
    }

    #[test]
    fn invalid_json_reports_document_error() {
        assert_eq!(pointer_of(parse_scenario("{not json")), "");
    }

    #[test]
    fn tables_and_options_parse() {
        let mut doc = minimal();
        doc["kappa"] = serde_json::json!({"type": "table", "points": [0.1, 0.2, 0.1]});
        doc["gamma"] = serde_json::json!({"type": "table", "points": [0.0, 0.6, 1.0]});
        doc["dividend_mean"] = serde_json::json!(5.0);
        doc["grid"] = serde_json::json!(501);
        let scenario = parse(doc).unwrap();
        assert_eq!(scenario.grid, Some(501));
        assert_eq!(scenario.spec.dividend_mean, 5.0);
        assert!(!scenario.model.is_closed_form());
    }

    #[test]
    fn endowment_supply_mismatch_warns() {
        let mut doc = minimal();
        doc["supply"] = serde_json::json!(7.0);
        let scenario = parse(doc).unwrap();
        assert_eq!(scenario.warnings.len(), 1);
        assert!(scenario.warnings[0].contains("supply"));
    }
}
