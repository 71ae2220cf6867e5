//! Plot-ready CSV exports.
//!
//! * `fig3`: per-slot power, link capacity and mean backlog of each policy
//!   over one station-to-station window.
//! * `fig4`/`fig5`/`fig6`: average power and delay against the arrival rate,
//!   omega, or the power cap, one row per (value, policy). `fig5` adds
//!   constant reference columns for the power and delay budgets.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::policy::PolicyKind;
use crate::sim::SlotTrace;
use crate::sweep::{SweepParameter, SweepTable};
use crate::trace_io::fmt_real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig3,
    Fig4,
    Fig5,
    Fig6,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
        }
    }

    /// The swept parameter a summary figure plots against.
    pub fn parameter(self) -> Option<SweepParameter> {
        match self {
            Figure::Fig3 => None,
            Figure::Fig4 => Some(SweepParameter::Lambda),
            Figure::Fig5 => Some(SweepParameter::Omega),
            Figure::Fig6 => Some(SweepParameter::Pmax),
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Figure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig3" => Ok(Figure::Fig3),
            "fig4" => Ok(Figure::Fig4),
            "fig5" => Ok(Figure::Fig5),
            "fig6" => Ok(Figure::Fig6),
            _ => Err(Error::config(
                "figure",
                format!("unknown figure `{s}` (fig3, fig4, fig5 or fig6)"),
            )),
        }
    }
}

/// Per-slot series of several policies over `[start, start + len)`.
pub fn render_fig3(traces: &[(PolicyKind, &[SlotTrace])], start: u64, len: u64) -> Result<String> {
    if traces.is_empty() {
        return Err(Error::MissingSeries(
            "fig3 needs at least one policy trace".into(),
        ));
    }
    let end = start + len;
    let mut windows = Vec::with_capacity(traces.len());
    for (policy, trace) in traces {
        let first = trace.first().map(|r| r.slot);
        let lo = first
            .and_then(|f| start.checked_sub(f))
            .map(|o| o as usize)
            .filter(|&o| o + len as usize <= trace.len())
            .ok_or_else(|| {
                Error::MissingSeries(format!(
                    "{policy} trace does not cover slots {start}..{end}"
                ))
            })?;
        windows.push(&trace[lo..lo + len as usize]);
    }

    let mut out = String::from("t,d");
    for (policy, _) in traces {
        write!(out, ",P_{policy},C_{policy},Qmean_{policy}").unwrap();
    }
    out.push('\n');
    for i in 0..len as usize {
        let lead = &windows[0][i];
        write!(out, "{},{}", lead.slot, fmt_real(lead.distance)).unwrap();
        for w in &windows {
            let r = &w[i];
            write!(
                out,
                ",{},{},{}",
                fmt_real(r.power),
                r.capacity,
                fmt_real(r.mean_backlog())
            )
            .unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// Average power and delay per (value, policy) for fig4/fig5/fig6.
pub fn render_summary_figure(
    figure: Figure,
    table: &SweepTable,
    cfg: &ScenarioConfig,
) -> Result<String> {
    let want = figure.parameter().ok_or_else(|| {
        Error::MissingSeries(format!("{figure} is drawn from traces, not a sweep"))
    })?;
    if table.parameter != want {
        return Err(Error::MissingSeries(format!(
            "{figure} plots against {want}, table sweeps {}",
            table.parameter
        )));
    }
    let rows = table.aggregate();
    if rows.is_empty() {
        return Err(Error::MissingSeries(format!(
            "{figure}: sweep has no successful cells"
        )));
    }
    let mut out = format!("{want},policy,avg_power,avg_power_sd,avg_delay,avg_delay_sd");
    let references = figure == Figure::Fig5;
    if references {
        out.push_str(",P_av,W_av");
    }
    out.push('\n');
    let w_av = cfg.traffic.delay_bounds.iter().sum::<f64>() / cfg.num_services() as f64;
    for a in rows {
        write!(
            out,
            "{},{},{},{},{},{}",
            fmt_real(a.value),
            a.policy,
            fmt_real(a.avg_power_mean),
            fmt_real(a.avg_power_sd),
            fmt_real(a.avg_delay_mean),
            fmt_real(a.avg_delay_sd)
        )
        .unwrap();
        if references {
            write!(
                out,
                ",{},{}",
                fmt_real(cfg.traffic.avg_power),
                fmt_real(w_av)
            )
            .unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes `text` only after it has been fully rendered, so a failed render
/// never leaves a file behind.
pub fn emit(text: Result<String>, path: impl AsRef<Path>) -> Result<()> {
    let text = text?;
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
