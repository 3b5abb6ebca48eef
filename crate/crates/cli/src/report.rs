//! `report.json`: run summary, statistics and audit verdicts.

use bfppc::audit::AuditReport;
use bfppc::engine::TraceStats;
use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub version: u32,
    pub scenario: String,
    pub kind: String,
    pub order: usize,
    pub step: f64,
    pub t_end: f64,
    pub record_stride: usize,
    /// `sample_and_hold` or `continuous`.
    pub control_update: String,
    pub forced: bool,
    pub runtime_seconds: f64,
    pub complete: bool,
    pub divergence_time: Option<f64>,
    pub divergence_message: Option<String>,
    pub radii: Vec<f64>,
    /// Quantization mismatch radii `delta_i` (regulation only).
    pub mismatch: Option<Vec<f64>>,
    pub gains: serde_json::Value,
    pub feasibility: serde_json::Value,
    pub feasible: bool,
    pub stats: TraceStats,
    /// Max `|e_i|` over every integration step, recorded or not.
    pub every_step_max_error: Vec<f64>,
    pub audits: Vec<AuditReport>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<String>,
    pub pass: bool,
}

fn json_type_matches(ty: &str, v: &serde_json::Value) -> bool {
    match ty {
        "null" => v.is_null(),
        "boolean" => v.is_boolean(),
        "integer" => v.is_u64() || v.is_i64(),
        "number" => v.is_number(),
        "string" => v.is_string(),
        "array" => v.is_array(),
        "object" => v.is_object(),
        _ => true,
    }
}

/// Structural check of a report document against the bundled schema:
/// required keys present, no undeclared keys, top-level types as declared,
/// and a typed round trip.
pub fn validate_report(doc: &serde_json::Value) -> Result<RunReport, String> {
    let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).map_err(|e| e.to_string())?;
    let obj = doc.as_object().ok_or("report must be a JSON object")?;
    let props = schema["properties"].as_object().ok_or("schema has no properties")?;
    for key in schema["required"].as_array().into_iter().flatten() {
        let key = key.as_str().unwrap_or_default();
        if !obj.contains_key(key) {
            return Err(format!("missing required key {key:?}"));
        }
    }
    if let Some(extra) = obj.keys().find(|k| !props.contains_key(*k)) {
        return Err(format!("undeclared key {extra:?}"));
    }
    for (key, value) in obj {
        let allowed: Vec<&str> = match &props[key]["type"] {
            serde_json::Value::String(t) => vec![t.as_str()],
            serde_json::Value::Array(ts) => ts.iter().filter_map(|t| t.as_str()).collect(),
            _ => continue,
        };
        if !allowed.iter().any(|t| json_type_matches(t, value)) {
            return Err(format!("key {key:?} is not of type {allowed:?}"));
        }
    }
    serde_json::from_value(doc.clone()).map_err(|e| e.to_string())
}
