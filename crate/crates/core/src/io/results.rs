//! Per-frame DOA results CSV: `frame_index,class,azimuth_deg,elevation_deg`.
//!
//! One row per active (frame, class), ordered by frame then class. A row with
//! empty angle fields is active without a DOA.

use std::path::Path;

use super::labels::csv_error;
use crate::doa::{ClassDoa, DoaOutput};
use crate::fusion::Activity;
use crate::geometry::Doa;
use crate::{Error, Result};

pub const HEADER: [&str; 4] = ["frame_index", "class", "azimuth_deg", "elevation_deg"];

pub fn write_results(path: &Path, activity: &Activity, doas: &DoaOutput) -> Result<()> {
    if doas.num_frames() != activity.nrows() {
        return Err(Error::dim("DOA frames", activity.nrows(), doas.num_frames()));
    }
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    writer.write_record(HEADER)?;
    for ((t, c), &active) in activity.indexed_iter() {
        if !active {
            continue;
        }
        let doa = doas.frames[t].iter().find(|d| d.class == c);
        let (az, el) = match doa {
            Some(d) => (d.doa.azimuth_deg.to_string(), d.doa.elevation_deg.to_string()),
            None => (String::new(), String::new()),
        };
        writer.write_record([t.to_string(), c.to_string(), az, el])?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a results file back into activity `[num_frames][num_classes]` and
/// the DOA output.
pub fn read_results(
    path: &Path,
    num_frames: usize,
    num_classes: usize,
) -> Result<(Activity, DoaOutput)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().ne(HEADER) {
        return Err(Error::format(path, format!("unexpected header {headers:?}")));
    }
    let mut activity = Activity::from_elem((num_frames, num_classes), false);
    let mut out = DoaOutput::with_frames(num_frames);
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let fail = |detail: String| Error::format(path, format!("row {}: {detail}", i + 1));
        let int = |k: usize| -> Result<usize> {
            row[k]
                .parse()
                .map_err(|_| fail(format!("field `{}`: {:?} is not an index", HEADER[k], &row[k])))
        };
        let (t, c) = (int(0)?, int(1)?);
        if t >= num_frames || c >= num_classes {
            return Err(fail(format!("({t}, {c}) outside {num_frames}x{num_classes}")));
        }
        activity[(t, c)] = true;
        match (row[2].trim(), row[3].trim()) {
            ("", "") => {}
            (az, el) => {
                let parse = |s: &str, k: usize| -> Result<f64> {
                    s.parse()
                        .map_err(|_| fail(format!("field `{}`: {s:?} is not a number", HEADER[k])))
                };
                let doa = Doa::new(parse(az, 2)?, parse(el, 3)?);
                if out.frames[t].iter().any(|d| d.class == c) {
                    return Err(fail(format!("duplicate DOA for frame {t}, class {c}")));
                }
                out.frames[t].push(ClassDoa { class: c, doa });
            }
        }
    }
    for frame in &mut out.frames {
        frame.sort_by_key(|d| d.class);
    }
    Ok((activity, out))
}
