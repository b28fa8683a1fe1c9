//! Reading transcripts back: filter expressions and one-line formatting.

use serde_json::{Map, Value};

use officemesh::acl::Payload;
use officemesh::bus::DeliveryRecord;
use officemesh::simworld::WorldConfig;

use crate::assertions::{Evidence, Match};
use crate::HarnessError;

const SUMMARY_WIDTH: usize = 160;

/// Parses `key=value,key=value` into a [`Match`]. Keys are the match field
/// names; `args` takes `/`-separated values, e.g. `args=corridor/office1`.
pub fn parse_filter(expr: &str) -> Result<Match, HarnessError> {
    let mut obj = Map::new();
    for part in expr.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| HarnessError::Filter(format!("`{part}` is not key=value")))?;
        let (key, value) = (key.trim(), value.trim());
        let json = match key {
            "goal" | "from_tick" | "to_tick" => Value::from(
                value.parse::<u64>().map_err(|_| HarnessError::Filter(format!("{key} needs a number, got `{value}`")))?,
            ),
            "success" => Value::from(
                value.parse::<bool>().map_err(|_| HarnessError::Filter(format!("success needs true|false, got `{value}`")))?,
            ),
            "args" | "covers" => {
                Value::from(value.split('/').filter(|s| !s.is_empty()).map(Value::from).collect::<Vec<_>>())
            }
            _ => Value::from(value),
        };
        if obj.insert(key.to_string(), json).is_some() {
            return Err(HarnessError::Filter(format!("`{key}` given twice")));
        }
    }
    serde_json::from_value(Value::Object(obj)).map_err(|e| HarnessError::Filter(e.to_string()))
}

/// Records of `records` matching `filter`, optionally without heartbeats.
pub fn select<'a>(records: &'a [DeliveryRecord], filter: &Match, heartbeats: bool) -> Vec<&'a DeliveryRecord> {
    let world = WorldConfig::office();
    let ev = Evidence::new(records, &[], &world);
    ev.find(filter, 0..records.len())
        .into_iter()
        .map(|i| &records[i])
        .filter(|r| heartbeats || !matches!(r.envelope.payload, Payload::CapabilityAdvertBody(_)))
        .collect()
}

/// One human-readable line per record.
pub fn format_record(r: &DeliveryRecord) -> String {
    let e = &r.envelope;
    let body = serde_json::to_value(&e.payload).ok().and_then(|mut v| v.get_mut("body").map(Value::take));
    let summary = match (&e.payload, body) {
        (Payload::CapabilityAdvertBody(a), _) => format!("heartbeat at {}", a.location.as_deref().unwrap_or("-")),
        (Payload::ActionRequest(a), _) => format!("{} {}", a.action, a.args.join(" ")),
        (Payload::ActionResult(a), _) => {
            let mut s = format!("{} {} -> {}", a.action, a.args.join(" "), if a.success { "ok" } else { "failed" });
            if let Some(reason) = &a.reason {
                s.push_str(&format!(" ({reason})"));
            }
            if let Some(obs) = a.observation.as_ref().and_then(|o| o.value.map(|v| (o, v))) {
                s.push_str(&format!(" {}={}", obs.0.location, obs.1));
            }
            s
        }
        (_, Some(body)) => body.to_string(),
        (_, None) => String::new(),
    };
    let summary = if summary.chars().count() > SUMMARY_WIDTH {
        let cut: String = summary.chars().take(SUMMARY_WIDTH).collect();
        format!("{cut}...")
    } else {
        summary
    };
    format!(
        "#{:<5} t={:<4} {} {} -> {} [{}] {} {}",
        r.order,
        e.sim_time,
        e.performative,
        e.sender,
        e.recipient,
        e.conversation_id,
        e.payload.kind().name(),
        summary
    )
}
