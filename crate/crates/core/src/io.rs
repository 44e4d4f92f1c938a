//! CSV and JSON writers for field data and reports.
//!
//! Floats are written in scientific notation with 17 significant digits so
//! that every binary64 value reads back exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::sim::{LyapunovTrace, Snapshot};
use crate::steady::SteadyProfile;

pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer(path: &Path) -> std::io::Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn csv_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// `x, H, V` on the fine grid of a steady profile.
pub fn write_steady_csv(path: &Path, profile: &SteadyProfile) -> std::io::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["x", "H", "V"]).map_err(csv_err)?;
    for i in 0..profile.x.len() {
        w.write_record([fmt(profile.x[i]), fmt(profile.h_star[i]), fmt(profile.v_star[i])]).map_err(csv_err)?;
    }
    w.flush()
}

/// `t, V, V_ext, l2_norm, boundary_B, l2_<id>...`
pub fn write_trace_csv(path: &Path, trace: &LyapunovTrace) -> std::io::Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<String> =
        ["t", "V", "V_ext", "l2_norm", "boundary_B"].iter().map(|s| s.to_string()).collect();
    header.extend(trace.channels.iter().map(|c| format!("l2_{c}")));
    w.write_record(&header).map_err(csv_err)?;
    for s in &trace.samples {
        let mut row = vec![fmt(s.t), fmt(s.v), fmt(s.v_ext), fmt(s.l2), fmt(s.boundary)];
        row.extend(s.channel_l2.iter().map(|&x| fmt(x)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()
}

/// `channel, x, H, V, h, v` at cell centers.
pub fn write_snapshot_csv(path: &Path, snap: &Snapshot) -> std::io::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["channel", "x", "H", "V", "h", "v"]).map_err(csv_err)?;
    for r in &snap.rows {
        w.write_record([r.channel.to_string(), fmt(r.x), fmt(r.depth), fmt(r.velocity), fmt(r.h), fmt(r.v)])
            .map_err(csv_err)?;
    }
    w.flush()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(std::io::Error::other)?;
    f.write_all(b"\n")?;
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, std::f64::consts::PI * 1e-300, -2.5e17, 0.0] {
            assert_eq!(fmt(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt(0.1), "1.0000000000000001e-1");
    }
}
