//! DEGTAX1 snapshot files: one ASCII header line
//!
//!   `DEGTAX1 <dim> <nx> <ny> <nz> <Lx> <Ly> <Lz> <t>\n`
//!
//! followed by raw little-endian 64-bit floats, row-major (x fastest), one
//! block per field in the order (u, v). Header floats use the shortest
//! representation that round-trips, so write → read is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::Error;
use crate::grid::{make_grid, Field, Grid};
use crate::model::State;

pub const MAGIC: &str = "DEGTAX1";

/// The header line (without trailing newline) for a grid at time t.
pub fn header_line(grid: &Grid, t: f64) -> String {
    let c = grid.cells();
    let e = grid.extents();
    format!(
        "{MAGIC} {} {} {} {} {} {} {} {}",
        grid.dim(),
        c[0],
        c[1],
        c[2],
        e[0],
        e[1],
        e[2],
        t
    )
}

pub fn write_state<W: Write>(mut w: W, state: &State) -> Result<(), Error> {
    let header = header_line(state.grid(), state.t);
    w.write_all(header.as_bytes())?;
    w.write_all(b"\n")?;
    for field in [&state.u, &state.v] {
        for &x in field.values() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_state(path: &Path, state: &State) -> Result<(), Error> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    write_state(&mut buf, state)?;
    buf.flush()?;
    Ok(())
}

pub fn read_state<R: Read>(mut r: R) -> Result<State, Error> {
    // read the header line byte by byte so the binary payload stays intact
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(Error::Snapshot("missing header line".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
        if header.len() > 4096 {
            return Err(Error::Snapshot("header line too long".into()));
        }
    }
    let header = String::from_utf8(header)
        .map_err(|_| Error::Snapshot("header is not valid UTF-8".into()))?;
    let tokens: Vec<&str> = header.split_ascii_whitespace().collect();
    if tokens.len() != 9 || tokens[0] != MAGIC {
        return Err(Error::Snapshot(format!(
            "bad header: expected '{MAGIC} dim nx ny nz Lx Ly Lz t', got '{header}'"
        )));
    }
    let dim: usize = tokens[1]
        .parse()
        .map_err(|_| Error::Snapshot(format!("bad dim '{}'", tokens[1])))?;
    let mut cells = [0usize; 3];
    for (i, c) in cells.iter_mut().enumerate() {
        *c = tokens[2 + i]
            .parse()
            .map_err(|_| Error::Snapshot(format!("bad cell count '{}'", tokens[2 + i])))?;
    }
    let mut extents = [0.0f64; 3];
    for (i, e) in extents.iter_mut().enumerate() {
        *e = tokens[5 + i]
            .parse()
            .map_err(|_| Error::Snapshot(format!("bad extent '{}'", tokens[5 + i])))?;
    }
    let t: f64 = tokens[8]
        .parse()
        .map_err(|_| Error::Snapshot(format!("bad time '{}'", tokens[8])))?;

    let grid = make_grid(dim, &cells[..dim], &extents[..dim])?;
    let n = grid.n_cells();
    let mut read_block = |grid: &Grid| -> Result<Field, Error> {
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes)
            .map_err(|_| Error::Snapshot("truncated field block".into()))?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Field::new(grid, values)
    };
    let u = read_block(&grid)?;
    let v = read_block(&grid)?;
    State::new(u, v, t)
}

pub fn load_state(path: &Path) -> Result<State, Error> {
    let file = std::fs::File::open(path)?;
    read_state(std::io::BufReader::new(file))
}
