//! Line-delimited JSON traces, one record per (time step, agent).

use std::io::Write;

use serde_json::{json, Value};

use crate::coordinator::{Role, RoundRobinWorld};
use crate::{Result, Vector};

/// Rounds to 12 significant digits.
fn round12(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let r: f64 = format!("{x:.11e}").parse().expect("formatted float");
    json!(r)
}

fn vec12(v: &Vector) -> Value {
    Value::Array(v.iter().map(|&x| round12(x)).collect())
}

pub fn write_trace<W: Write>(world: &RoundRobinWorld, mut out: W) -> Result<()> {
    for rec in &world.log {
        for a in &rec.agents {
            let (verdict, theta) = match &a.inference {
                Some(inf) => (json!(inf.verdict.as_str()), inf.theta_hat.as_ref().map_or(Value::Null, vec12)),
                None => (Value::Null, Value::Null),
            };
            let line = json!({
                "t": rec.t,
                "agent": a.agent,
                "role": match a.role { Role::Demonstrator => "demonstrator", Role::Learner => "learner" },
                "position": vec12(&a.position),
                "velocity": vec12(&a.velocity),
                "u_nom": vec12(&a.u_nom),
                "u_safe": vec12(&a.u_safe),
                "active_set": a.active_set.label(),
                "lambda": round12(a.lambda),
                "nu": round12(a.nu),
                "inference_verdict": verdict,
                "theta_hat": theta,
            });
            serde_json::to_writer(&mut out, &line).map_err(|e| crate::Error::Io(e.to_string()))?;
            out.write_all(b"\n")?;
        }
        if let Some(f) = &rec.failure {
            log::warn!("rollout halted at t={}: {f}", rec.t);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round12(1.0 / 3.0), json!(0.333333333333));
        assert_eq!(round12(123456.7890123456), json!(123456.789012));
        assert_eq!(round12(f64::NAN), Value::Null);
    }
}
