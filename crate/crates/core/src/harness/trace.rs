//! Trace persistence.
//!
//! A trace file is a self-describing CSV: `# key=value` header lines carrying
//! the full plan, seed, mode and ball flag, then one row per iterate with
//! columns `t,f,grad_norm,max_sample_grad,clip_count[,x_0..x_{d-1}]`. The two
//! per-step columns are empty on the final row (an iterate has T+1 rows but
//! only T steps). Floats are written in shortest round-trip form, so
//! `read(write(t))` reproduces the trace exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::optimizer::{Mode, RunTrace};
use crate::privacy::{Constants, EscapeSchedule, NoisePlan};
use crate::problem::Point;

fn fmt_f64(v: f64) -> String {
    // Shortest representation that parses back to the same f64.
    format!("{v}")
}

/// Plan fields as ordered key=value pairs (also the plan-override file format
/// and the `calibrate` output).
pub fn plan_kv(plan: &NoisePlan) -> Vec<(String, String)> {
    let mut kv = vec![
        ("grad_bound".into(), fmt_f64(plan.grad_bound)),
        ("gauss_std".into(), fmt_f64(plan.gauss_std)),
        ("step_size".into(), fmt_f64(plan.step_size)),
        ("iterations".into(), plan.iterations.to_string()),
        ("alpha".into(), fmt_f64(plan.alpha)),
        ("total_noise_var".into(), fmt_f64(plan.total_noise_var)),
        ("batch_size".into(), plan.batch_size.to_string()),
    ];
    if let Some(esc) = &plan.escape {
        kv.push(("escape_iters".into(), esc.iters.to_string()));
        kv.push(("escape_radius".into(), fmt_f64(esc.radius)));
        kv.push(("escape_drop".into(), fmt_f64(esc.drop)));
    }
    let c = &plan.constants;
    kv.push(("const_c".into(), fmt_f64(c.c)));
    kv.push(("const_c1".into(), fmt_f64(c.c1)));
    kv.push(("const_c2".into(), fmt_f64(c.c2)));
    kv.push(("const_c_eta".into(), fmt_f64(c.c_eta)));
    kv.push(("const_c_escape_iters".into(), fmt_f64(c.c_escape_iters)));
    kv.push(("const_c_escape_radius".into(), fmt_f64(c.c_escape_radius)));
    kv.push(("const_c_drop".into(), fmt_f64(c.c_drop)));
    kv
}

/// Serializes a plan as bare key=value lines.
pub fn plan_to_text(plan: &NoisePlan) -> String {
    let mut s = String::new();
    for (k, v) in plan_kv(plan) {
        let _ = writeln!(s, "{k}={v}");
    }
    s
}

fn get_f64(map: &BTreeMap<String, String>, key: &str) -> Result<f64> {
    map.get(key)
        .ok_or_else(|| Error::Format {
            row: 0,
            message: format!("missing plan key '{key}'"),
        })?
        .parse()
        .map_err(|_| Error::Format {
            row: 0,
            message: format!("plan key '{key}' is not a number"),
        })
}

fn get_u64(map: &BTreeMap<String, String>, key: &str) -> Result<u64> {
    map.get(key)
        .ok_or_else(|| Error::Format {
            row: 0,
            message: format!("missing plan key '{key}'"),
        })?
        .parse()
        .map_err(|_| Error::Format {
            row: 0,
            message: format!("plan key '{key}' is not an integer"),
        })
}

fn plan_from_kv(map: &BTreeMap<String, String>) -> Result<NoisePlan> {
    let escape = if map.contains_key("escape_iters") {
        Some(EscapeSchedule {
            iters: get_u64(map, "escape_iters")?,
            radius: get_f64(map, "escape_radius")?,
            drop: get_f64(map, "escape_drop")?,
        })
    } else {
        None
    };
    Ok(NoisePlan {
        grad_bound: get_f64(map, "grad_bound")?,
        gauss_std: get_f64(map, "gauss_std")?,
        step_size: get_f64(map, "step_size")?,
        iterations: get_u64(map, "iterations")?,
        alpha: get_f64(map, "alpha")?,
        total_noise_var: get_f64(map, "total_noise_var")?,
        batch_size: get_u64(map, "batch_size")? as usize,
        escape,
        constants: Constants {
            c: get_f64(map, "const_c")?,
            c1: get_f64(map, "const_c1")?,
            c2: get_f64(map, "const_c2")?,
            c_eta: get_f64(map, "const_c_eta")?,
            c_escape_iters: get_f64(map, "const_c_escape_iters")?,
            c_escape_radius: get_f64(map, "const_c_escape_radius")?,
            c_drop: get_f64(map, "const_c_drop")?,
        },
    })
}

/// Parses a plan from bare key=value lines (the `--plan` override file).
pub fn plan_from_text(text: &str) -> Result<NoisePlan> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
            row: idx + 1,
            message: format!("expected key=value, got '{line}'"),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    plan_from_kv(&map)
}

/// Renders a trace to its CSV text form.
pub fn trace_to_csv(trace: &RunTrace, write_coords: bool) -> String {
    let d = trace.points.first().map(|p| p.len()).unwrap_or(0);
    let t_total = trace.clip_events.len();
    let mut s = String::new();
    let _ = writeln!(s, "# seed={}", trace.seed);
    let _ = writeln!(s, "# mode={}", trace.mode);
    let _ = writeln!(s, "# exited_ball={}", trace.exited_ball);
    for (k, v) in plan_kv(&trace.plan) {
        let _ = writeln!(s, "# {k}={v}");
    }
    s.push_str("t,f,grad_norm,max_sample_grad,clip_count");
    if write_coords {
        for j in 0..d {
            let _ = write!(s, ",x_{j}");
        }
    }
    s.push('\n');
    for t in 0..=t_total {
        let (ms, cc) = if t < t_total {
            (
                fmt_f64(trace.max_sample_grad[t]),
                trace.clip_events[t].to_string(),
            )
        } else {
            (String::new(), String::new())
        };
        let _ = write!(
            s,
            "{t},{},{},{ms},{cc}",
            fmt_f64(trace.objective[t]),
            fmt_f64(trace.grad_norm[t])
        );
        if write_coords {
            for v in trace.points[t].as_slice() {
                let _ = write!(s, ",{}", fmt_f64(*v));
            }
        }
        s.push('\n');
    }
    s
}

/// Writes a trace; coordinate columns are included when the dimension is at
/// most 50 (override with `write_trace_opts`).
pub fn write_trace(trace: &RunTrace, path: &Path) -> Result<()> {
    let d = trace.points.first().map(|p| p.len()).unwrap_or(0);
    write_trace_opts(trace, path, d <= 50)
}

pub fn write_trace_opts(trace: &RunTrace, path: &Path, write_coords: bool) -> Result<()> {
    std::fs::write(path, trace_to_csv(trace, write_coords))?;
    Ok(())
}

/// Reads a trace written by [`write_trace`]. The file must carry coordinate
/// columns (traces stored without them cannot be reconstructed).
pub fn read_trace(path: &Path) -> Result<RunTrace> {
    let text = std::fs::read_to_string(path)?;
    trace_from_csv(&text)
}

pub fn trace_from_csv(text: &str) -> Result<RunTrace> {
    let mut header: BTreeMap<String, String> = BTreeMap::new();
    let mut lines = text.lines().enumerate().peekable();

    while let Some((_, line)) = lines.peek() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                header.insert(k.trim().to_string(), v.trim().to_string());
            }
            lines.next();
        } else {
            break;
        }
    }

    let (head_row, head_line) =
        lines
            .next()
            .map(|(i, l)| (l, i + 1))
            .ok_or_else(|| Error::Format {
                row: 0,
                message: "missing column header row".into(),
            })?;
    let cols: Vec<&str> = head_row.split(',').collect();
    let fixed = ["t", "f", "grad_norm", "max_sample_grad", "clip_count"];
    if cols.len() < fixed.len() || cols[..fixed.len()] != fixed {
        return Err(Error::Format {
            row: head_line,
            message: format!("unexpected column header '{head_row}'"),
        });
    }
    let d = cols.len() - fixed.len();
    if d == 0 {
        return Err(Error::Format {
            row: head_line,
            message: "trace has no coordinate columns and cannot be reconstructed".into(),
        });
    }
    for (j, c) in cols[fixed.len()..].iter().enumerate() {
        if *c != format!("x_{j}") {
            return Err(Error::Format {
                row: head_line,
                message: format!("unexpected coordinate column '{c}'"),
            });
        }
    }

    let seed: u64 = header
        .get("seed")
        .ok_or_else(|| Error::Format {
            row: 0,
            message: "missing header key 'seed'".into(),
        })?
        .parse()
        .map_err(|_| Error::Format {
            row: 0,
            message: "header 'seed' is not an integer".into(),
        })?;
    let mode: Mode = header
        .get("mode")
        .ok_or_else(|| Error::Format {
            row: 0,
            message: "missing header key 'mode'".into(),
        })?
        .parse()
        .map_err(|e: Error| Error::Format {
            row: 0,
            message: e.to_string(),
        })?;
    let exited_ball = match header.get("exited_ball").map(String::as_str) {
        Some("true") => true,
        Some("false") => false,
        _ => {
            return Err(Error::Format {
                row: 0,
                message: "missing or malformed header key 'exited_ball'".into(),
            })
        }
    };
    let plan = plan_from_kv(&header)?;

    let mut points = Vec::new();
    let mut objective = Vec::new();
    let mut grad_norm = Vec::new();
    let mut clip_events = Vec::new();
    let mut max_sample_grad = Vec::new();

    let mut expected_t = 0u64;
    for (idx, line) in lines {
        let row_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != fixed.len() + d {
            return Err(Error::Format {
                row: row_no,
                message: format!(
                    "expected {} columns, found {}",
                    fixed.len() + d,
                    fields.len()
                ),
            });
        }
        let t: u64 = fields[0].parse().map_err(|_| Error::Format {
            row: row_no,
            message: format!("bad iteration index '{}'", fields[0]),
        })?;
        if t != expected_t {
            return Err(Error::Format {
                row: row_no,
                message: format!("iteration index {t} out of order (expected {expected_t})"),
            });
        }
        expected_t += 1;
        let parse_field = |v: &str, name: &str| -> Result<f64> {
            v.parse().map_err(|_| Error::Format {
                row: row_no,
                message: format!("bad value for {name}: '{v}'"),
            })
        };
        objective.push(parse_field(fields[1], "f")?);
        grad_norm.push(parse_field(fields[2], "grad_norm")?);
        let step_fields_empty = fields[3].is_empty() && fields[4].is_empty();
        if !step_fields_empty {
            max_sample_grad.push(parse_field(fields[3], "max_sample_grad")?);
            clip_events.push(fields[4].parse().map_err(|_| Error::Format {
                row: row_no,
                message: format!("bad clip count '{}'", fields[4]),
            })?);
        }
        let mut coords = Vec::with_capacity(d);
        for (j, v) in fields[fixed.len()..].iter().enumerate() {
            coords.push(parse_field(v, &format!("x_{j}"))?);
        }
        points.push(Point::new(coords).map_err(|e| Error::Format {
            row: row_no,
            message: e.to_string(),
        })?);
    }

    let t_total = points.len().checked_sub(1).ok_or_else(|| Error::Format {
        row: 0,
        message: "trace has no data rows".into(),
    })?;
    if clip_events.len() != t_total || max_sample_grad.len() != t_total {
        return Err(Error::Format {
            row: 0,
            message: format!(
                "step column count {} inconsistent with {} iterates",
                clip_events.len(),
                points.len()
            ),
        });
    }

    Ok(RunTrace {
        points,
        objective,
        grad_norm,
        clip_events,
        max_sample_grad,
        exited_ball,
        plan,
        seed,
        mode,
    })
}
