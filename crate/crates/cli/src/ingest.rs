//! Reading observation files: CSV with a header of channel names, and
//! whitespace-separated JIGSAWS-style kinematics tables.

use std::fs;
use std::path::{Path, PathBuf};

use arhmm::{BlockKind, ObservationLayout, ObservationSequence};
use nalgebra::{Matrix3, Rotation3, UnitQuaternion};

use crate::error::{CliError, CliResult};

/// Norm deviation above which renormalizing a quaternion is reported.
pub const NORM_WARN_TOL: f64 = 1e-3;
/// Quaternions this close to unit norm are kept bit-for-bit, so written
/// sequences read back unchanged.
pub const NORM_KEEP_TOL: f64 = 1e-12;
/// Largest accepted entry of `RᵀR − I`.
pub const ORTHONORMAL_TOL: f64 = 1e-2;

/// Columns per arm in a kinematics table: position (3), rotation matrix
/// (9, row-major), linear velocity (3), angular velocity (3), gripper (1).
pub const JIGSAW_ARM_COLUMNS: usize = 19;
/// Full tables list the two master arms before the patient-side arms.
pub const JIGSAW_FULL_WIDTH: usize = 76;
pub const JIGSAW_PATIENT_OFFSET: usize = 38;

/// Unit-normalizes every quaternion block (warning when a norm is off by
/// more than `NORM_WARN_TOL`) and removes sign flips.
pub fn tidy_quaternions(seq: ObservationSequence, source: &str) -> CliResult<ObservationSequence> {
    let layout = seq.layout().clone();
    let mut rows = seq.into_rows();
    for (b, block) in layout.blocks().iter().enumerate() {
        if block.kind != BlockKind::Quaternion {
            continue;
        }
        let r = layout.range(b);
        for (i, row) in rows.iter_mut().enumerate() {
            let q = &mut row[r.clone()];
            let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                return Err(CliError::Data(format!("{source}: row {}: quaternion {} has zero norm", i + 1, block.name)));
            }
            if (norm - 1.0).abs() > NORM_WARN_TOL {
                log::warn!("{source}: row {}: quaternion {} has norm {norm:.6}, renormalizing", i + 1, block.name);
            }
            if (norm - 1.0).abs() > NORM_KEEP_TOL {
                q.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
    let mut seq = ObservationSequence::new(layout, rows).map_err(|e| CliError::core(source, e))?;
    seq.sign_continuize();
    Ok(seq)
}

/// Reads one CSV file whose header must equal the layout's channel names.
pub fn read_csv(path: &Path, layout: &ObservationLayout) -> CliResult<ObservationSequence> {
    let name = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{name}: {e}")))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{name}: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let expected = layout.channel_names();
    if header != expected {
        return Err(CliError::Data(format!(
            "{name}: header {header:?} does not match layout channels {expected:?}"
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| CliError::Data(format!("{name}: row {row_no}: {e}")))?;
        if record.len() != expected.len() {
            return Err(CliError::Data(format!(
                "{name}: row {row_no}: expected {} fields, found {}",
                expected.len(),
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(expected.len());
        for (cell, col) in record.iter().zip(&expected) {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| CliError::Data(format!("{name}: row {row_no}, column {col}: cannot parse {cell:?}")))?;
            if !v.is_finite() {
                return Err(CliError::Data(format!("{name}: row {row_no}, column {col}: non-finite value {cell}")));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(CliError::Data(format!("{name}: at least two rows are required")));
    }
    let seq = ObservationSequence::new(layout.clone(), rows).map_err(|e| CliError::core(&name, e))?;
    tidy_quaternions(seq, &name)
}

/// Files with the given extension directly inside `dir` (or `dir` itself if
/// it is a file), sorted by name.
pub fn list_inputs(dir: &Path, extension: &str) -> CliResult<Vec<PathBuf>> {
    if dir.is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == extension))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("{}: no .{extension} files found", dir.display())));
    }
    Ok(files)
}

/// Converts a rotation matrix to a unit quaternion `[w, x, y, z]`.
pub fn rotation_to_quaternion(r: &Matrix3<f64>) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    [q.w, q.i, q.j, q.k]
}

fn check_rotation(r: &Matrix3<f64>) -> Result<(), String> {
    let dev = (r.transpose() * r - Matrix3::identity()).amax();
    if dev > ORTHONORMAL_TOL {
        return Err(format!("rotation block is not orthonormal (|RᵀR − I| = {dev:.3e})"));
    }
    if r.determinant() < 0.0 {
        return Err("rotation block is a reflection".into());
    }
    Ok(())
}

/// Parses a kinematics table into position, orientation and gripper angle
/// for `arms` patient-side arms.
pub fn parse_jigsaw(text: &str, arms: usize, source: &str) -> CliResult<ObservationSequence> {
    let layout = ObservationLayout::pose_gripper(arms);
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row_no = i + 1;
        let values = line
            .split_whitespace()
            .enumerate()
            .map(|(c, s)| match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::Data(format!("{source}: row {row_no}, column {}: bad value {s:?}", c + 1))),
            })
            .collect::<CliResult<Vec<f64>>>()?;
        let offset = if values.len() >= JIGSAW_FULL_WIDTH { JIGSAW_PATIENT_OFFSET } else { 0 };
        let needed = offset + arms * JIGSAW_ARM_COLUMNS;
        if values.len() < needed {
            return Err(CliError::Data(format!(
                "{source}: row {row_no}: {} columns, {needed} needed for {arms} arm(s)",
                values.len()
            )));
        }
        let mut row = Vec::with_capacity(layout.width());
        for arm in 0..arms {
            let a = &values[offset + arm * JIGSAW_ARM_COLUMNS..][..JIGSAW_ARM_COLUMNS];
            let r = Matrix3::from_row_slice(&a[3..12]);
            check_rotation(&r).map_err(|m| CliError::Data(format!("{source}: row {row_no}, arm {}: {m}", arm + 1)))?;
            row.extend_from_slice(&a[0..3]);
            row.extend(rotation_to_quaternion(&r));
            row.push(a[18]);
        }
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(CliError::Data(format!("{source}: at least two rows are required")));
    }
    let seq = ObservationSequence::new(layout, rows).map_err(|e| CliError::core(source, e))?;
    tidy_quaternions(seq, source)
}

pub fn read_jigsaw(path: &Path, arms: usize) -> CliResult<ObservationSequence> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_jigsaw(&text, arms, &path.display().to_string())
}
