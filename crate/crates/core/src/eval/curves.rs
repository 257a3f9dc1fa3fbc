//! CSV emission for plotting.
//!
//! * error rates: `threshold,far,frr`, one row per grid threshold
//! * densities: `bin_lo,bin_hi,client_count,impostor_count`, one row per bin
//!
//! Floats are written in shortest round-trip form.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::density::ScoreDensities;
use super::rates::ErrorRates;
use crate::error::{Error, Result};

pub const RATES_HEADER: &str = "threshold,far,frr";
pub const DENSITY_HEADER: &str = "bin_lo,bin_hi,client_count,impostor_count";

pub fn write_error_rates<W: Write>(e: &ErrorRates, mut w: W) -> Result<()> {
    if !e.is_monotone() {
        return Err(Error::InvalidArgument("error rates are not monotone".into()));
    }
    let io = |err| Error::io("<curves>", err);
    writeln!(w, "{RATES_HEADER}").map_err(io)?;
    for ((t, far), frr) in e.thresholds.iter().zip(&e.far).zip(&e.frr) {
        writeln!(w, "{t},{far},{frr}").map_err(io)?;
    }
    Ok(())
}

pub fn write_densities<W: Write>(d: &ScoreDensities, mut w: W) -> Result<()> {
    let io = |err| Error::io("<densities>", err);
    writeln!(w, "{DENSITY_HEADER}").map_err(io)?;
    for (i, (c, imp)) in d.client_counts.iter().zip(&d.impostor_counts).enumerate() {
        writeln!(w, "{},{},{c},{imp}", d.bin_edges[i], d.bin_edges[i + 1]).map_err(io)?;
    }
    Ok(())
}

fn to_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn emit_error_rates(e: &ErrorRates, path: &Path) -> Result<()> {
    to_file(path, |w| write_error_rates(e, w))
}

pub fn emit_densities(d: &ScoreDensities, path: &Path) -> Result<()> {
    to_file(path, |w| write_densities(d, w))
}
