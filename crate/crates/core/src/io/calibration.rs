//! Calibration table JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_version, read_json, write_json, FORMAT_VERSION};
use crate::calibration::{CalibrationTable, Provenance, RowFit};
use crate::dsp::TdoaLattice;
use crate::geometry::DoaGrid;
use crate::{pair_order, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationFile {
    version: u32,
    #[serde(rename = "M")]
    num_mics: usize,
    pair_order: Vec<(usize, usize)>,
    grid: DoaGrid,
    tau_max: f64,
    #[serde(rename = "G")]
    lattice_points: usize,
    provenance: Provenance,
    /// Polynomial order of measured tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    order: Option<usize>,
    /// `Q` rows of `P` TDOAs.
    tdoa: Vec<Vec<f64>>,
    #[serde(default)]
    fits: Vec<RowFit>,
}

pub fn write_calibration(path: &Path, table: &CalibrationTable) -> Result<()> {
    let p = table.num_pairs();
    let file = CalibrationFile {
        version: FORMAT_VERSION,
        num_mics: table.num_mics(),
        pair_order: table.pairs(),
        grid: table.grid().clone(),
        tau_max: table.tau_max(),
        lattice_points: table.lattice_points(),
        provenance: table.provenance(),
        order: table.fits().first().map(|f| f.second.degree()),
        tdoa: table.entries().chunks(p).map(<[f64]>::to_vec).collect(),
        fits: table.fits().to_vec(),
    };
    write_json(path, &file)
}

pub fn read_calibration(path: &Path) -> Result<CalibrationTable> {
    let file: CalibrationFile = read_json(path)?;
    check_version(path, file.version)?;
    let fail = |detail: String| Error::format(path, detail);
    if file.num_mics < 2 {
        return Err(fail("field `M`: need at least two microphones".into()));
    }
    if file.pair_order != pair_order(file.num_mics) {
        return Err(fail("field `pair_order`: not the canonical i<j order".into()));
    }
    if file.tdoa.len() != file.grid.len() {
        return Err(fail(format!(
            "field `tdoa`: {} rows for a {}-point grid",
            file.tdoa.len(),
            file.grid.len()
        )));
    }
    let p = file.pair_order.len();
    if let Some(q) = file.tdoa.iter().position(|r| r.len() != p) {
        return Err(fail(format!("field `tdoa`: row {q} has {} entries, expected {p}", file.tdoa[q].len())));
    }
    let lattice = TdoaLattice::new(file.tau_max, file.lattice_points)
        .map_err(|e| fail(format!("fields `tau_max`/`G`: {e}")))?;
    CalibrationTable::from_parts(
        file.grid,
        file.num_mics,
        &lattice,
        file.provenance,
        file.tdoa.into_iter().flatten().collect(),
        file.fits,
    )
    .map_err(|e| fail(e.to_string()))
}
