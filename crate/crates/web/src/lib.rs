//! Browser bindings: a DRR trace explorer, a shortened bandwidth-share run and
//! the control-plane command counter. Every export takes and returns plain
//! strings or numbers; structured results are JSON.

use serde_json::{json, Value};
use tmsim::model::{FlowId, NodeId, PacketFactory, PacketKind, QueueConfig, RateLimit, SimTime};
use tmsim::scenario::{CommandCountQuery, CommandMode, ScenarioSpec};
use tmsim::sched::{EgressBuffer, Policy};
use wasm_bindgen::prelude::*;

const MTU: u32 = 1500;
const MAX_TRACE_PACKETS: usize = 10_000;
const MAX_RUN_S: f64 = 600.0;

/// Serves `{"quanta": [..], "queues": [[sizes..], ..]}` with DRR until every
/// queue is empty. Each step reports the queue served, the packet size and
/// all deficits after the selection.
pub fn drr_trace_json(input: &str) -> Result<String, String> {
    let v: Value = serde_json::from_str(input).map_err(|e| format!("bad input: {e}"))?;
    let nums = |v: &Value, what: &str| -> Result<Vec<u32>, String> {
        v.as_array()
            .ok_or(format!("{what} must be an array"))?
            .iter()
            .map(|x| {
                x.as_u64()
                    .filter(|&n| n > 0 && n <= MTU as u64)
                    .map(|n| n as u32)
                    .ok_or(format!("{what} entries must be integers in 1..={MTU}"))
            })
            .collect()
    };
    let quanta = nums(&v["quanta"], "quanta")?;
    let queues: Vec<Vec<u32>> = v["queues"]
        .as_array()
        .ok_or("queues must be an array of arrays")?
        .iter()
        .map(|q| nums(q, "queue"))
        .collect::<Result<_, _>>()?;
    if quanta.is_empty() || quanta.len() != queues.len() {
        return Err("need one quantum per queue".into());
    }
    if queues.iter().map(Vec::len).sum::<usize>() > MAX_TRACE_PACKETS {
        return Err(format!("at most {MAX_TRACE_PACKETS} packets"));
    }

    // queue 0 is an idle HPQ so the LPQs are exactly the DRR set
    let mut cfgs = vec![QueueConfig::new(0, Some(RateLimit::BytesPerSec(1.0e6)), MTU, 1)];
    cfgs.extend(
        quanta
            .iter()
            .enumerate()
            .map(|(i, &q)| QueueConfig::new(i as u8 + 1, None, q, MAX_TRACE_PACKETS)),
    );
    let mut buf = EgressBuffer::new(Policy::RlSpDrr, cfgs).map_err(|e| e.to_string())?;
    let mut factory = PacketFactory::new(MTU);
    for (i, sizes) in queues.iter().enumerate() {
        let flow = FlowId::new(NodeId(0), NodeId(1), i as u8 + 1);
        for &s in sizes {
            let p = factory
                .make(flow, s, SimTime::ZERO, PacketKind::Data, None)
                .map_err(|e| e.to_string())?;
            buf.enqueue(i + 1, p, SimTime::ZERO).map_err(|e| e.to_string())?;
        }
    }
    let mut steps = Vec::new();
    while buf.active_list().next().is_some() {
        let (q, p) = buf.drr_select().map_err(|e| e.to_string())?;
        let deficits: Vec<u64> = (1..buf.num_queues()).map(|i| buf.queue(i).deficit_bytes()).collect();
        steps.push(json!({ "queue": q - 1, "size": p.size_bytes, "deficits": deficits }));
    }
    Ok(Value::Array(steps).to_string())
}

/// The six-LP-flow scenario shortened to `duration_s`, with the HP flow
/// active over the middle third. Returns per-flow goodput in Mbit/s.
pub fn bandwidth_run_json(policy: &str, duration_s: f64, seed: u64) -> Result<String, String> {
    let policy: Policy = serde_json::from_value(Value::String(policy.into())).map_err(|e| e.to_string())?;
    if !(3.0..=MAX_RUN_S).contains(&duration_s) {
        return Err(format!("duration must be within [3, {MAX_RUN_S}] s"));
    }
    let mut spec = ScenarioSpec::proactive(policy);
    spec.seed = seed;
    spec.duration_s = duration_s.round();
    let window = [(spec.duration_s / 3.0).round(), (2.0 * spec.duration_s / 3.0).round()];
    spec.proactive.as_mut().expect("proactive scenario").hp_window_s = window;
    spec.metrics.occupancy_window_s = None;
    let r = tmsim::scenario::run_scenario(&spec).map_err(|e| e.to_string())?;
    let flows: Vec<Value> = r
        .metrics
        .throughput(r.end)
        .iter()
        .map(|s| {
            let samples: Vec<[f64; 2]> = s.samples.iter().map(|&(t, bps)| [t.as_secs_f64(), bps / 1e6]).collect();
            json!({ "name": s.flow, "samples": samples })
        })
        .collect();
    let peak = r.summary.occupancy.first().map_or(0, |o| o.max_output_pkts);
    Ok(json!({
        "policy": policy.label(),
        "hp_window": window,
        "flows": flows,
        "h1_output_peak": peak,
        "h1_output_capacity": spec.buffers.output_capacity_pkts,
        "dropped": r.summary.dropped,
    })
    .to_string())
}

pub fn command_count_for(n: u32, m: u32, p: u32, mode: &str) -> Result<u64, String> {
    let mode: CommandMode = mode.parse().map_err(|e: tmsim::Error| e.to_string())?;
    tmsim::scenario::command_count(&CommandCountQuery {
        n_switches: n as u64,
        processes_per_switch: m as u64,
        prioritized: p as u64,
        mode,
    })
    .map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn drr_trace(input: &str) -> Result<String, JsError> {
    drr_trace_json(input).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn bandwidth_run(policy: &str, duration_s: f64, seed: u32) -> Result<String, JsError> {
    bandwidth_run_json(policy, duration_s, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn command_count(n: u32, m: u32, p: u32, mode: &str) -> Result<f64, JsError> {
    command_count_for(n, m, p, mode)
        .map(|c| c as f64)
        .map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_follows_deficits() {
        let out = drr_trace_json(r#"{"quanta":[500,1000],"queues":[[400,400],[900,100]]}"#).unwrap();
        let steps: Vec<Value> = serde_json::from_str(&out).unwrap();
        let order: Vec<u64> = steps.iter().map(|s| s["queue"].as_u64().unwrap()).collect();
        // q0 fits one 400 B packet per 500 B quantum, q1 spends its 1000 B on both
        assert_eq!(order, vec![0, 1, 1, 0]);
        assert_eq!(steps[0]["deficits"], json!([100, 0]));
    }

    #[test]
    fn trace_rejects_bad_input() {
        assert!(drr_trace_json("[]").is_err());
        assert!(drr_trace_json(r#"{"quanta":[500],"queues":[[1600]]}"#).is_err());
        assert!(drr_trace_json(r#"{"quanta":[500,1],"queues":[[100]]}"#).is_err());
    }

    #[test]
    fn short_bandwidth_run() {
        let out: Value = serde_json::from_str(&bandwidth_run_json("rl_sp_drr", 9.0, 1).unwrap()).unwrap();
        assert_eq!(out["flows"].as_array().unwrap().len(), 7);
        assert_eq!(out["hp_window"], json!([3.0, 6.0]));
        assert!(bandwidth_run_json("fifo", 9.0, 1).is_err());
        assert!(bandwidth_run_json("no", 1.0, 1).is_err());
    }

    #[test]
    fn command_counts() {
        assert_eq!(command_count_for(2, 3, 1, "STRICT_FULL").unwrap(), 6);
        assert_eq!(command_count_for(2, 3, 1, "RL_SP_DRR").unwrap(), 2);
        assert!(command_count_for(2, 3, 4, "RL_SP_DRR").is_err());
    }
}
