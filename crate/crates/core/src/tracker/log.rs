use std::io::{self, Write};

use serde_json::{json, Value};

use super::records::{Activity, ScriptRecord};

fn activity_line(a: &Activity) -> Value {
    match a {
        Activity::Api(c) => json!({
            "t": "api",
            "id": c.script.0,
            "name": c.name,
            "args": c.args,
            "line": c.span.start_line,
        }),
        Activity::Forced(e) => json!({
            "t": "forced",
            "id": e.script.0,
            "kind": e.kind.as_str(),
            "apis": e.apis_found.iter().map(|a| a.name.as_str()).collect::<Vec<_>>(),
            "guard": e.guard,
            "line": e.condition_span.start_line,
        }),
        Activity::Resource404 { url } => json!({ "t": "resource404", "url": url }),
        Activity::Command { cmd } => json!({ "t": "command", "cmd": cmd }),
    }
}

/// All log lines: script records in id order, then activity in the order it happened.
pub fn log_lines(records: &[ScriptRecord], activity: &[Activity]) -> Vec<String> {
    let mut sorted: Vec<&ScriptRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.id);
    let scripts = sorted.into_iter().map(|r| {
        json!({
            "t": "script",
            "id": r.id.0,
            "prov": r.provenance,
            "lines": r.executed_lines,
        })
    });
    scripts.chain(activity.iter().map(activity_line)).map(|v| v.to_string()).collect()
}

/// Write the JSONL log. Each line is fully serialized before any byte of it is written.
pub fn emit_log(records: &[ScriptRecord], activity: &[Activity], sink: &mut impl Write) -> io::Result<()> {
    for line in log_lines(records, activity) {
        let mut buf = line.into_bytes();
        buf.push(b'\n');
        sink.write_all(&buf)?;
    }
    sink.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::{Provenance, ScriptId};

    #[test]
    fn no_activity_no_lines() {
        let mut out = Vec::new();
        emit_log(&[], &[], &mut out).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn field_order_is_stable() {
        let mut r = ScriptRecord::new(ScriptId(0), Provenance::Root { path: "a.js".into() }, "x\ny");
        r.executed_lines.extend([1, 2]);
        let lines = log_lines(&[r], &[Activity::Command { cmd: "ls".into() }]);
        assert_eq!(lines[0], r#"{"t":"script","id":0,"prov":{"kind":"root","path":"a.js"},"lines":[1,2]}"#);
        assert_eq!(lines[1], r#"{"t":"command","cmd":"ls"}"#);
    }
}
