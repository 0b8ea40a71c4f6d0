//! CSV helpers shared by all writers. Floats carry 17 significant digits so every
//! value round-trips exactly.

use std::io::Write;

use crate::error::Result;

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a header line and rows of floats.
pub fn write_csv<W: Write>(mut out: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Output times `t0 + interval, t0 + 2 interval, ..., t_final`; the last one always
/// lands exactly on `t_final`.
pub fn output_times(t0: f64, t_final: f64, interval: f64) -> Vec<f64> {
    let mut times = Vec::new();
    let count = ((t_final - t0) / interval - 1e-9).ceil().max(0.0) as usize;
    for k in 1..=count {
        times.push((t0 + k as f64 * interval).min(t_final));
    }
    if times.last().is_none_or(|t| *t < t_final) && t_final > t0 {
        times.push(t_final);
    }
    times
}
