//! Trace and summary files.
//!
//! Traces are comma-separated with a header row and one row per slot:
//!
//! ```text
//! t, d, N, P, C, Cmax, A_1..A_K, mu_1..mu_K, Q_1..Q_K, X_1..X_K, Y, drops
//! ```
//!
//! `Y` is the common value of the per-service power queues and `drops` is
//! the slot's total over services. Reals are written in shortest round-trip
//! form, so reading a file back yields the exact in-memory doubles.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::{SimSummary, SlotTrace};

const FIXED_LEADING: [&str; 6] = ["t", "d", "N", "P", "C", "Cmax"];
const PER_SERVICE: [&str; 4] = ["A", "mu", "Q", "X"];

/// Number of trace columns for `k` services.
pub fn trace_columns(k: usize) -> usize {
    FIXED_LEADING.len() + PER_SERVICE.len() * k + 2
}

pub fn trace_header(k: usize) -> Vec<String> {
    let mut cols: Vec<String> = FIXED_LEADING.iter().map(|s| s.to_string()).collect();
    for name in PER_SERVICE {
        cols.extend((1..=k).map(|i| format!("{name}_{i}")));
    }
    cols.push("Y".into());
    cols.push("drops".into());
    cols
}

/// Formats a real so that parsing it back gives the same bits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:e}")
}

pub fn render_trace(trace: &[SlotTrace]) -> Result<String> {
    let k = trace
        .first()
        .ok_or_else(|| Error::MissingSeries("trace is empty".into()))?
        .num_services();
    let mut out = trace_header(k).join(",");
    out.push('\n');
    for r in trace {
        if r.num_services() != k {
            return Err(Error::Domain(format!(
                "slot {} has {} services, expected {k}",
                r.slot,
                r.num_services()
            )));
        }
        write!(
            out,
            "{},{},{},{},{},{}",
            r.slot,
            fmt_real(r.distance),
            fmt_real(r.noise_equiv),
            fmt_real(r.power),
            r.capacity,
            fmt_real(r.capacity_cap)
        )
        .unwrap();
        for v in r.arrivals.iter().chain(&r.served).chain(&r.backlog) {
            write!(out, ",{v}").unwrap();
        }
        for x in &r.delay_queue {
            write!(out, ",{}", fmt_real(*x)).unwrap();
        }
        writeln!(
            out,
            ",{},{}",
            fmt_real(r.power_queue),
            r.drops.iter().sum::<u64>()
        )
        .unwrap();
    }
    Ok(out)
}

pub fn write_trace(trace: &[SlotTrace], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = render_trace(trace)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses a trace. Per-service drops are recovered from the buffer size and
/// checked against the stored total.
pub fn parse_trace(text: &str, buffer_cap: u64) -> Result<Vec<SlotTrace>> {
    let bad = |line: usize, msg: String| Error::Parse {
        path: "<trace>".into(),
        message: format!("line {line}: {msg}"),
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad(1, "missing header".into()))?
        .split(',')
        .collect();
    let extra = header
        .len()
        .checked_sub(FIXED_LEADING.len() + 2)
        .filter(|n| n % PER_SERVICE.len() == 0)
        .ok_or_else(|| {
            bad(
                1,
                format!("{} columns is not a valid trace layout", header.len()),
            )
        })?;
    let k = extra / PER_SERVICE.len();
    if header != trace_header(k) {
        return Err(bad(1, "unexpected column names".into()));
    }

    let mut trace = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(bad(
                lineno,
                format!("{} fields, expected {}", fields.len(), header.len()),
            ));
        }
        let int = |j: usize| {
            fields[j]
                .parse::<u64>()
                .map_err(|e| bad(lineno, format!("column {}: {e}", header[j])))
        };
        let real = |j: usize| {
            fields[j]
                .parse::<f64>()
                .map_err(|e| bad(lineno, format!("column {}: {e}", header[j])))
        };
        let ints = |from: usize| (from..from + k).map(int).collect::<Result<Vec<u64>>>();
        let base = FIXED_LEADING.len();
        let arrivals = ints(base)?;
        let served = ints(base + k)?;
        let backlog = ints(base + 2 * k)?;
        let delay_queue = (base + 3 * k..base + 4 * k)
            .map(real)
            .collect::<Result<Vec<f64>>>()?;
        let drops_total = int(base + 4 * k + 1)?;
        let drops: Vec<u64> = (0..k)
            .map(|j| {
                (backlog[j] + arrivals[j])
                    .checked_sub(served[j])
                    .map(|q| q.saturating_sub(buffer_cap))
                    .ok_or_else(|| {
                        bad(
                            lineno,
                            format!("service {}: served more than queued", j + 1),
                        )
                    })
            })
            .collect::<Result<_>>()?;
        if drops.iter().sum::<u64>() != drops_total {
            return Err(bad(
                lineno,
                format!("drops column {drops_total} inconsistent with buffer cap {buffer_cap}"),
            ));
        }
        trace.push(SlotTrace {
            slot: int(0)?,
            distance: real(1)?,
            noise_equiv: real(2)?,
            power: real(3)?,
            capacity: int(4)?,
            capacity_cap: real(5)?,
            served,
            arrivals,
            backlog,
            delay_queue,
            power_queue: real(base + 4 * k)?,
            drops,
        });
    }
    Ok(trace)
}

pub fn read_trace(path: impl AsRef<Path>, buffer_cap: u64) -> Result<Vec<SlotTrace>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text, buffer_cap).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn write_summary(summary: &SimSummary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(summary).expect("summary serialises");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<SimSummary> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;
    use crate::policy::Policy;

    #[test]
    fn column_count() {
        for k in 1..8 {
            assert_eq!(trace_header(k).len(), trace_columns(k));
            assert_eq!(trace_columns(k), 6 + 4 * k + 2);
        }
        assert_eq!(
            trace_header(2)[..8],
            ["t", "d", "N", "P", "C", "Cmax", "A_1", "A_2"]
        );
    }

    #[test]
    fn parse_restores_trace() {
        let cfg = ScenarioConfig {
            horizon: 500,
            ..ScenarioConfig::default()
        };
        let (trace, _) = crate::sim::run(&cfg, &Policy::proposed(), 4).unwrap();
        let text = render_trace(&trace).unwrap();
        assert_eq!(parse_trace(&text, cfg.traffic.buffer_cap).unwrap(), trace);
    }

    #[test]
    fn drops_are_recovered_per_service() {
        let mut cfg = ScenarioConfig {
            horizon: 300,
            ..ScenarioConfig::default()
        };
        cfg.traffic.buffer_cap = 12;
        cfg.set_arrival_rate(20.0);
        let policy = Policy::build(
            crate::policy::PolicyKind::StaticCpa,
            &ScenarioConfig {
                traffic: crate::queues::TrafficParams {
                    avg_power: 1e-9,
                    ..cfg.traffic.clone()
                },
                ..cfg.clone()
            },
        )
        .unwrap();
        let (trace, summary) = crate::sim::run(&cfg, &policy, 4).unwrap();
        assert!(summary.total_drops.iter().sum::<u64>() > 0);
        let text = render_trace(&trace).unwrap();
        assert_eq!(parse_trace(&text, 12).unwrap(), trace);
        assert!(parse_trace(&text, 13).is_err());
    }

    #[test]
    fn rejects_empty_and_malformed() {
        assert!(render_trace(&[]).is_err());
        assert!(parse_trace("", 10).is_err());
        assert!(parse_trace("t,d\n", 10).is_err());
    }
}
