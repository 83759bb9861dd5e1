//! Output writing: the manifest, NDJSON diagnostics, DEGTAX1 snapshots and
//! the inequality CSV report. A manifest.json lands in the output directory
//! before any other file.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Error;
use crate::functionals::DiagnosticsRecord;
use crate::grid::Grid;
use crate::model::State;
use crate::snapshot;
use crate::stepper::RunSink;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub grid_header: String,
}

/// Create the output directory and drop the manifest into it first.
pub fn prepare_output_dir(
    dir: &Path,
    config_hash: u64,
    seed: u64,
    grid: &Grid,
) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config_hash: format!("{config_hash:016x}"),
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        grid_header: snapshot::header_line(grid, 0.0),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(dir.join("manifest.json"), json + "\n")?;
    Ok(())
}

/// File-backed run sink: NDJSON rows, numbered snapshots, crash snapshot.
pub struct FileSinks {
    dir: PathBuf,
    ndjson: Option<BufWriter<fs::File>>,
    snapshot_dir: Option<PathBuf>,
    snapshot_index: u64,
}

impl FileSinks {
    pub fn new(dir: &Path, write_ndjson: bool, write_snapshots: bool) -> Result<Self, Error> {
        let ndjson = if write_ndjson {
            let file = fs::File::create(dir.join("diagnostics.ndjson"))?;
            Some(BufWriter::new(file))
        } else {
            None
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            ndjson,
            snapshot_dir: write_snapshots.then(|| dir.to_path_buf()),
            snapshot_index: 0,
        })
    }

    pub fn finish(mut self) -> Result<(), Error> {
        if let Some(w) = &mut self.ndjson {
            w.flush()?;
        }
        Ok(())
    }
}

impl RunSink for FileSinks {
    fn on_record(&mut self, record: &DiagnosticsRecord) -> Result<(), Error> {
        if let Some(w) = &mut self.ndjson {
            w.write_all(record.to_ndjson().as_bytes())?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    fn on_snapshot(&mut self, state: &State) -> Result<(), Error> {
        if let Some(dir) = &self.snapshot_dir {
            let path = dir.join(format!("snap_{:06}.snap", self.snapshot_index));
            snapshot::save_state(&path, state)?;
            self.snapshot_index += 1;
        }
        Ok(())
    }

    fn on_crash(&mut self, state: &State) -> Result<(), Error> {
        snapshot::save_state(&self.dir.join("crash.snap"), state)
    }
}

/// Write serializable rows as NDJSON, one object per line.
pub fn write_ndjson<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Error> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(row).expect("row serializes");
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text)?;
    Ok(())
}
