//! The four subcommands as library functions.

use std::fs;
use std::path::{Path, PathBuf};

use arhmm::{
    em_fit, frame_accuracy, seg_score, silhouette, to_string_full_precision, viterbi, BlockKind, ModelParams,
    ObservationLayout, ObservationSequence, Preset, SimConfig, Standardization,
};
use serde::Serialize;

use crate::config::{InputFormat, RunConfig};
use crate::error::{CliError, CliResult};
use crate::ingest::{list_inputs, read_csv, read_jigsaw};

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// CSV text with the layout's channel names as header. Floats use the
/// shortest representation that parses back to the same value.
pub fn sequence_csv(seq: &ObservationSequence) -> String {
    let mut out = seq.layout().channel_names().join(",");
    out.push('\n');
    for row in seq.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// `t,mode` rows for `t = 1..=T`.
pub fn path_csv(path: &[usize]) -> String {
    let mut out = String::from("t,mode\n");
    for (t, z) in path.iter().enumerate() {
        out.push_str(&format!("{},{z}\n", t + 1));
    }
    out
}

pub fn read_path_csv(path: &Path) -> CliResult<Vec<usize>> {
    let name = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{name}: {e}")))?;
    let header = reader.headers().map_err(|e| CliError::Data(format!("{name}: {e}")))?;
    if header.iter().map(str::trim).collect::<Vec<_>>() != ["t", "mode"] {
        return Err(CliError::Data(format!("{name}: expected header t,mode")));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("{name}: row {}: {e}", i + 1)))?;
        let z = rec
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| CliError::Data(format!("{name}: row {}, column mode: not a mode index", i + 1)))?;
        out.push(z);
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{name}: empty mode path")));
    }
    Ok(out)
}

#[derive(Serialize)]
struct Manifest<'a> {
    preset: &'a str,
    config: SimConfig,
    layout: &'a ObservationLayout,
    sequences: Vec<String>,
    truth: Vec<String>,
}

/// Writes `seq_NNNN.csv`, `truth/seq_NNNN.csv` and `manifest.json` under
/// `out`.
pub fn simulate(preset: Preset, cfg: &SimConfig, out: &Path) -> CliResult<()> {
    let data = preset.generate(cfg).map_err(|e| CliError::core("simulate", e))?;
    let mut names = Vec::new();
    let mut truths = Vec::new();
    for (k, (seq, path)) in data.sequences.iter().zip(&data.paths).enumerate() {
        let name = format!("seq_{k:04}.csv");
        write_file(&out.join(&name), &sequence_csv(seq))?;
        let truth = format!("truth/{name}");
        write_file(&out.join(&truth), &path_csv(path))?;
        names.push(name);
        truths.push(truth);
    }
    let manifest = Manifest {
        preset: preset.name(),
        config: *cfg,
        layout: data.sequences[0].layout(),
        sequences: names,
        truth: truths,
    };
    let text = to_string_full_precision(&manifest).map_err(|e| CliError::core("manifest", e))?;
    write_file(&out.join("manifest.json"), &text)
}

fn load_inputs(config: &RunConfig, data: &Path) -> CliResult<Vec<ObservationSequence>> {
    match &config.format {
        InputFormat::Csv => {
            let layout = config.layout()?;
            list_inputs(data, "csv")?.iter().map(|p| read_csv(p, &layout)).collect()
        }
        InputFormat::Jigsaw { arms } => list_inputs(data, "txt")?.iter().map(|p| read_jigsaw(p, *arms)).collect(),
    }
}

pub struct TrainOutcome {
    pub model: ModelParams,
    pub trace: Vec<f64>,
}

/// Standardizes (unless disabled), fits, and writes the model JSON and the
/// optional `iter,loglik` trace.
pub fn train(config_path: &Path, data: &Path, out: &Path, trace: Option<&Path>) -> CliResult<TrainOutcome> {
    let config = RunConfig::load(config_path)?;
    let template = config.template()?;
    let raw = load_inputs(&config, data)?;
    let (standardization, seqs) = if config.standardize {
        let st = Standardization::fit(&raw).map_err(|e| CliError::core("standardize", e))?;
        let seqs = raw
            .iter()
            .map(|s| st.apply(s))
            .collect::<arhmm::Result<Vec<_>>>()
            .map_err(|e| CliError::core("standardize", e))?;
        (Some(st), seqs)
    } else {
        (None, raw)
    };
    log::info!("fitting {} modes on {} sequences", template.modes(), seqs.len());
    let fit = em_fit(&seqs, &template, &config.em()).map_err(|e| CliError::core("train", e))?;
    log::info!(
        "final log-likelihood {:.6} after {} iterations (converged: {})",
        fit.loglik(),
        fit.trace.len() - 1,
        fit.converged
    );
    let model = fit
        .model
        .with_standardization(standardization)
        .map_err(|e| CliError::core("train", e))?;
    write_file(out, &model.to_json().map_err(|e| CliError::core("model", e))?)?;
    if let Some(path) = trace {
        let mut text = String::from("iter,loglik\n");
        for (i, ll) in fit.trace.iter().enumerate() {
            text.push_str(&format!("{i},{ll}\n"));
        }
        write_file(path, &text)?;
    }
    Ok(TrainOutcome { model, trace: fit.trace })
}

pub fn load_model(path: &Path) -> CliResult<ModelParams> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    ModelParams::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn arms_of(layout: &ObservationLayout) -> Option<usize> {
    let arms = layout.blocks().iter().filter(|b| b.kind == BlockKind::Quaternion).count();
    (arms > 0 && *layout == ObservationLayout::pose_gripper(arms)).then_some(arms)
}

/// Reads one sequence for `model`: CSV by extension, otherwise a kinematics
/// table with as many arms as the model's layout.
pub fn read_for_model(model: &ModelParams, path: &Path) -> CliResult<ObservationSequence> {
    let raw = if path.extension().is_some_and(|x| x == "csv") {
        read_csv(path, model.layout())?
    } else {
        let arms = arms_of(model.layout()).ok_or_else(|| {
            CliError::Data(format!("{}: only pose+gripper models read kinematics tables", path.display()))
        })?;
        read_jigsaw(path, arms)?
    };
    match model.standardization() {
        Some(st) => st.apply(&raw).map_err(|e| CliError::core("standardize", e)),
        None => Ok(raw),
    }
}

pub fn segment(model_path: &Path, data: &Path, out: &Path) -> CliResult<Vec<usize>> {
    let model = load_model(model_path)?;
    let seq = read_for_model(&model, data)?;
    let seg = viterbi(&model, &seq).map_err(|e| CliError::core("segment", e))?;
    write_file(out, &path_csv(&seg.path))?;
    Ok(seg.path)
}

#[derive(Debug, Serialize)]
pub struct Scores {
    pub seg_score: f64,
    pub silhouette: Option<f64>,
    pub frame_accuracy: f64,
}

/// Compares two path files; with `data`, also the silhouette of the
/// predicted labels on the (standardized) rows `y_1..y_T`.
pub fn score(pred: &Path, truth: &Path, data: Option<&Path>, model: Option<&Path>) -> CliResult<Scores> {
    let p = read_path_csv(pred)?;
    let t = read_path_csv(truth)?;
    if p.len() != t.len() {
        return Err(CliError::Data(format!("paths have {} and {} entries", p.len(), t.len())));
    }
    let silhouette = match data {
        None => None,
        Some(data) => {
            let all = match model {
                Some(m) => read_for_model(&load_model(m)?, data)?.into_rows(),
                None => standardized_table(data)?,
            };
            let rows = &all[1..];
            if rows.len() != p.len() {
                return Err(CliError::Data(format!(
                    "{}: {} emitted rows but {} labels",
                    data.display(),
                    rows.len(),
                    p.len()
                )));
            }
            Some(silhouette(rows, &p).map_err(|e| CliError::core("silhouette", e))?)
        }
    };
    Ok(Scores {
        seg_score: seg_score(&p, &t).map_err(|e| CliError::core("score", e))?,
        silhouette,
        frame_accuracy: frame_accuracy(&p, &t).map_err(|e| CliError::core("score", e))?,
    })
}

/// Any numeric CSV with a header, every column scaled to zero mean and unit
/// variance.
fn standardized_table(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let name = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{name}: {e}")))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{name}: {e}")))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("{name}: row {}: {e}", i + 1)))?;
        let row = rec
            .iter()
            .zip(&header)
            .map(|(cell, col)| match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::Data(format!("{name}: row {}, column {col}: bad value {cell:?}", i + 1))),
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    let n = rows.len().max(1) as f64;
    for c in 0..header.len() {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
        let sd = (rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n).sqrt();
        let scale = if sd > 0.0 { sd } else { 1.0 };
        rows.iter_mut().for_each(|r| r[c] = (r[c] - mean) / scale);
    }
    Ok(rows)
}

/// `simulate` output directory layout, for callers that read it back.
pub fn simulated_files(out: &Path, k: usize) -> (PathBuf, PathBuf) {
    let name = format!("seq_{k:04}.csv");
    (out.join(&name), out.join("truth").join(name))
}
