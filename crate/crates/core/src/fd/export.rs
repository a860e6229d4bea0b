//! Field CSV: `sector,phi,z,theta_fluid,theta_metal,T_fluid_C,T_metal_C`.
//!
//! Rows are ordered with z varying fastest, then φ, then sector (1-based).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fd::{FieldSolution, Grid};
use crate::model::{NondimParams, TemperatureScale, SECTORS};
use crate::Scalar;

pub const FIELD_CSV_HEADER: [&str; 7] = [
    "sector",
    "phi",
    "z",
    "theta_fluid",
    "theta_metal",
    "T_fluid_C",
    "T_metal_C",
];

pub fn write_field_csv<T: Scalar, W: Write>(f: &FieldSolution<T>, scale: &TemperatureScale, w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(FIELD_CSV_HEADER)?;
    let g = f.grid;
    for j in 0..SECTORS {
        for i in 0..g.n_phi {
            for k in 0..g.n_z {
                let tf = f.fluid[[j, i, k]].f64();
                let tm = f.metal[[j, i, k]].f64();
                wr.write_record(&[
                    (j + 1).to_string(),
                    g.phi::<f64>(i).to_string(),
                    g.z::<f64>(k).to_string(),
                    tf.to_string(),
                    tm.to_string(),
                    scale.from_nondim_temperature(tf).to_string(),
                    scale.from_nondim_temperature(tm).to_string(),
                ])?;
            }
        }
    }
    wr.flush()?;
    Ok(())
}

pub fn save_field_csv<T: Scalar>(f: &FieldSolution<T>, scale: &TemperatureScale, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_field_csv(f, scale, std::io::BufWriter::new(file))
        .map_err(|e| Error::io(path, std::io::Error::other(e)))
}

/// Reads a field written by [`write_field_csv`]. The grid is inferred from the
/// node coordinates; `params` is attached unchanged.
pub fn read_field_csv<T: Scalar, R: Read>(r: R, params: NondimParams<T>, label: &Path) -> Result<FieldSolution<T>> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd
        .headers()
        .map_err(|e| parse_err(label, 1, e.to_string()))?
        .clone();
    if header.iter().ne(FIELD_CSV_HEADER) {
        return Err(parse_err(label, 1, format!("unexpected header {:?}", header)));
    }
    let mut rows = Vec::new();
    for (n, rec) in rd.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| parse_err(label, line, e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| parse_err(label, line, format!("bad value in column {}", FIELD_CSV_HEADER[i])))
        };
        let sector = num(0)? as usize;
        if !(1..=SECTORS).contains(&sector) {
            return Err(parse_err(label, line, format!("sector {sector} out of range")));
        }
        rows.push((sector - 1, num(1)?, num(2)?, num(3)?, num(4)?));
    }
    let per_sector = rows.len() / SECTORS;
    let n_z = rows.iter().take_while(|r| r.0 == 0 && r.1 == 0.0).count();
    if n_z == 0 || !rows.len().is_multiple_of(SECTORS) || !per_sector.is_multiple_of(n_z) {
        return Err(Error::Format(format!("{}: row count does not form a grid", label.display())));
    }
    let grid = Grid::new(per_sector / n_z, n_z)?;
    let mut f = FieldSolution::zeros(grid, params);
    for (idx, (j, _, _, tf, tm)) in rows.into_iter().enumerate() {
        let (jj, rest) = (idx / per_sector, idx % per_sector);
        if jj != j {
            return Err(Error::Format(format!("{}: rows are not grouped by sector", label.display())));
        }
        let (i, k) = (rest / n_z, rest % n_z);
        f.fluid[[j, i, k]] = T::of(tf);
        f.metal[[j, i, k]] = T::of(tm);
    }
    Ok(f)
}

fn parse_err(path: &Path, line: usize, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}
