//! File formats: pretty JSON reports and the CSV grids and metric tables.

use std::fs;
use std::path::Path;

use qfl_core::qfl::TorusPoint;
use qfl_core::training::EpochMetrics;
use qfl_core::C64;
use serde::Serialize;

use crate::error::CliError;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Run(e.to_string()))?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn write_torus_csv(path: &Path, grid: &[TorusPoint]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["theta1", "theta2", "re", "im"])?;
    for p in grid {
        w.serialize((p.theta1, p.theta2, p.value.re, p.value.im))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_torus_csv(path: &Path) -> Result<Vec<TorusPoint>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["theta1", "theta2", "re", "im"] {
        return Err(CliError::Run(format!("{}: unexpected header {header:?}", path.display())));
    }
    r.deserialize::<(f64, f64, f64, f64)>()
        .map(|row| {
            let (theta1, theta2, re, im) = row?;
            Ok(TorusPoint { theta1, theta2, value: C64::new(re, im) })
        })
        .collect()
}

pub fn write_metrics_csv(path: &Path, history: &[EpochMetrics]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "split", "loss", "accuracy"])?;
    for m in history {
        w.serialize((m.epoch, m.split.name(), m.loss, m.accuracy))?;
    }
    w.flush()?;
    Ok(())
}
