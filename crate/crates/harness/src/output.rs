//! File writers. CSV uses a header row, commas and LF line endings; floats use
//! Rust's shortest round-trip formatting.

use std::path::Path;

use serde::Serialize;
use skipcrawl_core::gait::Trajectory;

use crate::{HarnessError, Result};

pub struct CsvTable {
    writer: csv::Writer<Vec<u8>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Result<Self> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(Self { writer })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn into_bytes(self) -> Result<Vec<u8>> {
        self.writer
            .into_inner()
            .map_err(|e| HarnessError::Usage(format!("csv flush: {e}")))
    }

    pub fn save(self, path: &Path) -> Result<()> {
        let bytes = self.into_bytes()?;
        std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| HarnessError::Usage(format!("json encode: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub const TRAJECTORY_HEADER: [&str; 4] = ["time_s", "x_m", "y_m", "heading_rad"];

pub fn write_trajectory(path: &Path, trajectory: &Trajectory) -> Result<()> {
    let mut t = CsvTable::new(&TRAJECTORY_HEADER)?;
    for p in trajectory.poses() {
        t.row(&[num(p.time), num(p.x), num(p.y), num(p.heading)])?;
    }
    t.save(path)
}
