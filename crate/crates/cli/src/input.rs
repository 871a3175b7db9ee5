use serde::Deserialize;
use serde_json::{json, Value};

use fim_core::lawdensity::{DiscreteMartingaleLaw, Refinement};
use fim_core::models::{ModelSpec, SteerTarget};
use fim_core::payoff::GamePayoffPair;
use fim_core::semistatic::{PathClaim, StaticInstrument, TreeMarket};
use fim_core::verify::CounterexampleConfig;

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Auto,
    Closed,
    Grid,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridInput {
    pub x_min: f64,
    pub x_max: f64,
    #[serde(default = "default_grid_points")]
    pub n_points: usize,
    pub tol: Option<f64>,
}

fn default_grid_points() -> usize {
    4096
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeInput {
    pub pair: GamePayoffPair<f64>,
    pub s0: f64,
    /// Prices to tabulate; 65 points on `[s0/4, 4 s0]` plus `s0` by default.
    pub points: Option<Vec<f64>>,
    #[serde(default)]
    pub method: Method,
    pub grid: Option<GridInput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HedgeInput {
    pub pair: GamePayoffPair<f64>,
    pub s0: f64,
    #[serde(default)]
    pub r: f64,
    #[serde(default)]
    pub allow_override: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateInput {
    pub market: ModelSpec,
    pub n_paths: usize,
    pub n_steps: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyInput {
    pub market: ModelSpec,
    pub pair: GamePayoffPair<f64>,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default)]
    pub allow_override: bool,
    /// Volatility caps for the lattice lower-bound table.
    pub lattice_v_hi: Option<Vec<f64>>,
}

fn default_paths() -> usize {
    10_000
}

fn default_steps() -> usize {
    512
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopvalueInput {
    pub pair: GamePayoffPair<f64>,
    pub x0: f64,
    #[serde(default = "one", rename = "horizon")]
    pub horizon: f64,
    #[serde(default = "default_v_hi")]
    pub v_hi: f64,
    pub v_lo: Option<f64>,
    pub n_y: Option<usize>,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    /// Second horizon for the invariance gap.
    pub compare_horizon: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn default_v_hi() -> f64 {
    6.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemistaticInput {
    pub tree: TreeMarket,
    pub claim: PathClaim,
    #[serde(default)]
    pub statics: Vec<StaticInstrument>,
    pub feasibility_eps: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawdensityInput {
    LawMatch {
        law: DiscreteMartingaleLaw,
        #[serde(default = "default_samples")]
        n_samples: usize,
    },
    WeakDistance {
        refinement: Refinement,
        #[serde(default = "default_levels")]
        n_list: Vec<usize>,
        #[serde(default = "default_samples")]
        n_samples: usize,
        #[serde(default = "default_steps")]
        fine_steps: usize,
    },
}

fn default_samples() -> usize {
    100_000
}

fn default_levels() -> Vec<usize> {
    vec![4, 8, 16]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteerInput {
    pub market: ModelSpec,
    #[serde(default = "SteerTarget::constant")]
    pub target: SteerTarget,
    #[serde(default = "default_blocks")]
    pub n_blocks: Vec<usize>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_steps")]
    pub fine_steps: usize,
}

fn default_blocks() -> Vec<usize> {
    vec![8, 16, 32, 64]
}

fn default_eps() -> f64 {
    0.05
}

pub type CounterexampleInput = CounterexampleConfig;

fn payoff_schema() -> Value {
    json!({
        "type": "object",
        "required": ["type"],
        "oneOf": [
            {"properties": {"type": {"const": "call"}, "K": {"type": "number"}, "c": {"type": "number", "default": 1}, "delta": {"type": "number", "default": 0}}, "required": ["K"]},
            {"properties": {"type": {"const": "put"}, "K": {"type": "number"}, "c": {"type": "number", "default": 1}, "delta": {"type": "number", "default": 0}}, "required": ["K"]},
            {"properties": {"type": {"const": "power"}, "p": {"type": "number"}, "c": {"type": "number", "default": 1}, "delta": {"type": "number", "default": 0}}, "required": ["p"]},
            {"properties": {"type": {"const": "tabulated"}, "xs": {"type": "array", "items": {"type": "number"}}, "ys": {"type": "array", "items": {"type": "number"}}}, "required": ["xs", "ys"]}
        ]
    })
}

fn pair_schema() -> Value {
    json!({
        "type": "object",
        "required": ["f1", "f2", "L"],
        "properties": {"f1": payoff_schema(), "f2": payoff_schema(), "L": {"type": "number", "exclusiveMinimum": 0}}
    })
}

fn market_schema() -> Value {
    let num = json!({"type": "number"});
    json!({
        "type": "object",
        "required": ["s0", "T", "model"],
        "properties": {
            "s0": num, "T": num, "rho": {"type": "number", "default": 0},
            "r": {"oneOf": [num, {"type": "object", "properties": {"times": {"type": "array"}, "rates": {"type": "array"}}}], "default": 0},
            "model": {"enum": ["heston", "hull_white", "scott", "rough_fou"]}
        },
        "oneOf": [
            {"properties": {"model": {"const": "heston"}}, "required": ["kappa", "theta", "xi", "v0"]},
            {"properties": {"model": {"const": "hull_white"}}, "required": ["kappa", "theta", "u0"]},
            {"properties": {"model": {"const": "scott"}}, "required": ["lambda", "kappa", "theta", "u0"]},
            {"properties": {"model": {"const": "rough_fou"}}, "required": ["hurst", "lambda", "kappa", "nu0"]}
        ]
    })
}

fn tree_schema() -> Value {
    json!({
        "type": "object",
        "required": ["s0", "children"],
        "properties": {"s0": {"type": "number"}, "children": {"type": "array", "items": {"$ref": "#/definitions/node"}}},
        "definitions": {"node": {"type": "object", "required": ["price"], "properties": {"price": {"type": "number"}, "children": {"type": "array", "items": {"$ref": "#/definitions/node"}}}}}
    })
}

fn claim_schema() -> Value {
    json!({
        "type": "object",
        "required": ["kind"],
        "oneOf": [
            {"properties": {"kind": {"const": "terminal"}, "payoff": payoff_schema()}, "required": ["payoff"]},
            {"properties": {"kind": {"const": "max_call"}, "K": {"type": "number"}}, "required": ["K"]},
            {"properties": {"kind": {"const": "values"}, "values": {"type": "array", "items": {"type": "number"}}}, "required": ["values"]}
        ]
    })
}

fn law_schema() -> Value {
    json!({
        "type": "object",
        "required": ["n", "s0", "steps"],
        "properties": {
            "n": {"type": "integer"}, "s0": {"type": "number"}, "T": {"type": "number", "default": 1},
            "steps": {"type": "array", "items": {"type": "object", "properties": {"conditionals": {"type": "array", "items": {
                "type": "object", "required": ["given", "support", "prob"],
                "properties": {"given": {"type": "number"}, "support": {"type": "array"}, "prob": {"type": "array"}}
            }}}}}
        }
    })
}

/// JSON schema of the input each subcommand reads.
pub fn schema(command: &str) -> Value {
    let obj = |required: &[&str], props: Value| {
        json!({"$schema": "http://json-schema.org/draft-07/schema#", "title": command, "type": "object", "required": required, "properties": props})
    };
    let int = json!({"type": "integer", "minimum": 1});
    let num = json!({"type": "number"});
    match command {
        "envelope" => obj(&["pair", "s0"], json!({
            "pair": pair_schema(), "s0": num,
            "points": {"type": "array", "items": num},
            "method": {"enum": ["auto", "closed", "grid"], "default": "auto"},
            "grid": {"type": "object", "required": ["x_min", "x_max"], "properties": {"x_min": num, "x_max": num, "n_points": {"type": "integer", "default": 4096}, "tol": num}}
        })),
        "hedge" => obj(&["pair", "s0"], json!({
            "pair": pair_schema(), "s0": num, "r": {"type": "number", "default": 0}, "allow_override": {"type": "boolean", "default": false}
        })),
        "simulate" => obj(&["market", "n_paths", "n_steps"], json!({"market": market_schema(), "n_paths": int, "n_steps": int})),
        "verify" => obj(&["market", "pair"], json!({
            "market": market_schema(), "pair": pair_schema(),
            "n_paths": {"type": "integer", "default": 10000}, "n_steps": {"type": "integer", "default": 512},
            "allow_override": {"type": "boolean", "default": false},
            "lattice_v_hi": {"type": "array", "items": num}
        })),
        "counterexample" => obj(&[], json!({
            "r": {"type": "number", "default": 0.05}, "penalty": {"type": "number", "default": 0}, "s0": {"type": "number", "default": 120},
            "n_paths": {"type": "integer", "default": 10000}, "n_steps": {"type": "integer", "default": 512}
        })),
        "stopvalue" => obj(&["pair", "x0"], json!({
            "pair": pair_schema(), "x0": num, "horizon": {"type": "number", "default": 1}, "v_hi": {"type": "number", "default": 6},
            "v_lo": num, "n_y": int, "x_min": num, "x_max": num, "compare_horizon": num
        })),
        "semistatic" => obj(&["tree", "claim"], json!({
            "tree": tree_schema(), "claim": claim_schema(),
            "statics": {"type": "array", "items": {"type": "object", "required": ["payoff", "price"], "properties": {"payoff": claim_schema(), "price": num}}},
            "feasibility_eps": num
        })),
        "lawdensity" => json!({
            "$schema": "http://json-schema.org/draft-07/schema#", "title": command, "type": "object", "required": ["task"],
            "oneOf": [
                {"properties": {"task": {"const": "law_match"}, "law": law_schema(), "n_samples": {"type": "integer", "default": 100000}}, "required": ["law"]},
                {"properties": {
                    "task": {"const": "weak_distance"},
                    "refinement": {"type": "object", "required": ["family"], "properties": {"family": {"enum": ["binomial_gbm", "constant"]}, "s0": num, "sigma": num, "T": num}},
                    "n_list": {"type": "array", "items": int, "default": [4, 8, 16]},
                    "n_samples": {"type": "integer", "default": 100000}, "fine_steps": {"type": "integer", "default": 512}
                }, "required": ["refinement"]}
            ]
        }),
        "steer" => obj(&["market"], json!({
            "market": market_schema(),
            "target": {"type": "object", "properties": {"drift_w": num, "drift_t": num, "clip": num}},
            "n_blocks": {"type": "array", "items": int, "default": [8, 16, 32, 64]},
            "eps": {"type": "number", "default": 0.05}, "n_paths": {"type": "integer", "default": 10000}, "fine_steps": {"type": "integer", "default": 512}
        })),
        _ => Value::Null,
    }
}
