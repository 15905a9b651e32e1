//! Reference label CSV (`class,onset_sec,offset_sec,azimuth_deg,elevation_deg`)
//! and rasterisation onto the STFT frame grid.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::StftConfig;
use crate::fusion::Activity;
use crate::geometry::{Doa, DoaGrid};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub class: String,
    pub onset_sec: f64,
    pub offset_sec: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl LabelRecord {
    pub fn doa(&self) -> Doa {
        Doa::new(self.azimuth_deg, self.elevation_deg)
    }
}

/// Maps class names to indices. Without explicit names, class `c` is named
/// by its decimal index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMap {
    names: Vec<String>,
}

impl ClassMap {
    pub fn numbered(num_classes: usize) -> Self {
        Self {
            names: (0..num_classes).map(|c| c.to_string()).collect(),
        }
    }

    pub fn named(names: Vec<String>) -> Result<Self> {
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::invalid(format!("duplicate class name {n:?}")));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, class: usize) -> &str {
        &self.names[class]
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Frame-level reference: activity `[frame][class]` and the DOA set of
/// every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub frames: Activity,
    pub doas: Vec<Vec<Doa>>,
}

/// Frame `t` is active for class `c` iff its centre time lies in
/// `[onset, offset)` of a record of that class.
pub fn rasterize_labels(
    records: &[LabelRecord],
    stft: &StftConfig,
    classes: &ClassMap,
    grid: Option<&DoaGrid>,
    num_frames: usize,
) -> Result<Reference> {
    let mut indexed = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let c = classes
            .index(&r.class)
            .ok_or_else(|| Error::invalid(format!("label {i}: unknown class {:?}", r.class)))?;
        if !(r.onset_sec < r.offset_sec) {
            return Err(Error::invalid(format!(
                "label {i}: onset {} is not before offset {}",
                r.onset_sec, r.offset_sec
            )));
        }
        if let Some(g) = grid {
            if g.find(r.doa()).is_none() {
                return Err(Error::invalid(format!(
                    "label {i}: DOA ({}°, {}°) is not on the grid",
                    r.azimuth_deg, r.elevation_deg
                )));
            }
        }
        indexed.push((c, r));
    }
    for (a, (ca, ra)) in indexed.iter().enumerate() {
        for (cb, rb) in &indexed[a + 1..] {
            if ca == cb && ra.onset_sec < rb.offset_sec && rb.onset_sec < ra.offset_sec {
                return Err(Error::invalid(format!(
                    "overlapping records for class {:?}: [{}, {}) and [{}, {})",
                    ra.class, ra.onset_sec, ra.offset_sec, rb.onset_sec, rb.offset_sec
                )));
            }
        }
    }

    let mut frames = Activity::from_elem((num_frames, classes.len()), false);
    let mut doas = vec![Vec::new(); num_frames];
    for t in 0..num_frames {
        let center = stft.frame_center_sec(t);
        for &(c, r) in &indexed {
            if center >= r.onset_sec && center < r.offset_sec {
                frames[(t, c)] = true;
                doas[t].push(r.doa());
            }
        }
    }
    Ok(Reference { frames, doas })
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for (i, rec) in reader.deserialize().enumerate() {
        let rec: LabelRecord =
            rec.map_err(|e| Error::format(path, format!("row {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_labels(path: &Path, records: &[LabelRecord]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    writer.write_record(["class", "onset_sec", "offset_sec", "azimuth_deg", "elevation_deg"])?;
    for r in records {
        writer.write_record([
            r.class.clone(),
            r.onset_sec.to_string(),
            r.offset_sec.to_string(),
            r.azimuth_deg.to_string(),
            r.elevation_deg.to_string(),
        ])?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}
