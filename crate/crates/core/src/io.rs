//! File formats: JSON for structured artifacts, CSV for bulk samples.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::control::Trajectory;
use crate::dynamics::{ProblemSpec, TrainingSet};
use crate::error::{Error, Result};
use crate::gp::{GpPosterior, KernelSpec};

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, e.line(), e.to_string()))
}

/// Reads and validates a problem document.
pub fn read_problem(path: &Path) -> Result<ProblemSpec> {
    let spec: ProblemSpec = read_json(path)?;
    spec.validate()?;
    Ok(spec)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSidecar {
    pub noise_std: f64,
    pub seed: u64,
}

/// `data.csv` → `data.meta.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

/// One row per sample, `x1..xn,y1..yn`, plus the JSON sidecar.
pub fn write_training_set(path: &Path, data: &TrainingSet) -> Result<()> {
    data.validate()?;
    let n = data.state_dim();
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    let header: Vec<String> = (1..=n)
        .map(|j| format!("x{j}"))
        .chain((1..=n).map(|j| format!("y{j}")))
        .collect();
    w.write_record(&header).map_err(csv_error)?;
    for (x, y) in data.states.iter().zip(&data.targets) {
        w.write_record(x.iter().chain(y).map(|v| v.to_string()))
            .map_err(csv_error)?;
    }
    w.flush()?;
    write_json(
        &sidecar_path(path),
        &TrainingSidecar {
            noise_std: data.noise_std,
            seed: data.seed,
        },
    )
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("csv: {other:?}")),
    }
}

/// Reads a training CSV and its sidecar.
pub fn read_training_set(path: &Path) -> Result<TrainingSet> {
    let meta: TrainingSidecar = read_json(&sidecar_path(path))?;
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let headers = r.headers().map_err(csv_error)?.clone();
    if headers.is_empty() || headers.len() % 2 != 0 {
        return Err(parse_error(path, 1, format!("expected 2n columns, found {}", headers.len())));
    }
    let n = headers.len() / 2;
    let mut states = Vec::new();
    let mut targets = Vec::new();
    for (k, record) in r.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| parse_error(path, line, e.to_string()))?;
        if record.len() != 2 * n {
            return Err(parse_error(
                path,
                line,
                format!("expected {} fields, found {}", 2 * n, record.len()),
            ));
        }
        let mut row = Vec::with_capacity(2 * n);
        for (field, name) in record.iter().zip(headers.iter()) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_error(path, line, format!("field {name}: cannot parse {field:?}")))?;
            row.push(v);
        }
        targets.push(row.split_off(n));
        states.push(row);
    }
    if states.is_empty() {
        return Err(parse_error(path, 1, "no samples"));
    }
    let data = TrainingSet {
        states,
        targets,
        noise_std: meta.noise_std,
        seed: meta.seed,
    };
    data.validate()?;
    Ok(data)
}

/// Persisted GP: hyperparameters, weights and a reference to the data CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub kernels: Vec<KernelSpec>,
    pub noise_std: f64,
    /// Path of the training CSV, relative to the model file.
    pub training_data_ref: String,
    pub alpha: Vec<Vec<f64>>,
    pub jitter: Vec<f64>,
}

impl ModelFile {
    pub fn from_posterior(gp: &GpPosterior, training_data_ref: impl Into<String>) -> Self {
        ModelFile {
            kernels: gp.kernels(),
            noise_std: gp.noise_std(),
            training_data_ref: training_data_ref.into(),
            alpha: gp.alpha(),
            jitter: gp.jitter(),
        }
    }
}

/// Writes `model` and returns nothing; the referenced CSV must already exist.
pub fn write_model(path: &Path, model: &ModelFile) -> Result<()> {
    write_json(path, model)
}

/// Reloads a model, reproducing the posterior of the original fit bit for bit.
pub fn read_model(path: &Path) -> Result<(ModelFile, TrainingSet, GpPosterior)> {
    let model: ModelFile = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let data = read_training_set(&base.join(&model.training_data_ref))?;
    if data.noise_std != model.noise_std {
        return Err(parse_error(
            path,
            0,
            format!(
                "noise_std {} disagrees with the training sidecar ({})",
                model.noise_std, data.noise_std
            ),
        ));
    }
    let gp = GpPosterior::from_parts(&data, &model.kernels, model.alpha.clone(), model.jitter.clone())?;
    Ok((model, data, gp))
}

/// Rows `t, x1..xn, u1..um, B, safe`; the final row has empty inputs.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let n = traj.states.first().map_or(0, Vec::len);
    let m = traj.inputs.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=n).map(|j| format!("x{j}")))
        .chain((1..=m).map(|q| format!("u{q}")))
        .chain(["B".to_string(), "safe".to_string()])
        .collect();
    w.write_record(&header).map_err(csv_error)?;
    for k in 0..traj.len() {
        let mut row = vec![traj.times[k].to_string()];
        row.extend(traj.states[k].iter().map(|v| v.to_string()));
        match traj.inputs.get(k) {
            Some(u) => row.extend(u.iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), m)),
        }
        row.push(traj.barrier_values[k].to_string());
        row.push(u8::from(traj.safe[k]).to_string());
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark;
    use crate::dynamics::jet_engine_problem;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("gpcbf-io-{}-{name}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn problem_round_trip() {
        let dir = tmp("problem");
        let p = dir.join("problem.json");
        write_json(&p, &jet_engine_problem()).unwrap();
        assert_eq!(read_problem(&p).unwrap(), jet_engine_problem());
    }

    #[test]
    fn training_set_round_trip_is_exact() {
        let dir = tmp("data");
        let p = dir.join("data.csv");
        let data = benchmark::training_data(12, 3).unwrap();
        write_training_set(&p, &data).unwrap();
        assert!(dir.join("data.meta.json").exists());
        assert_eq!(read_training_set(&p).unwrap(), data);
    }

    #[test]
    fn malformed_csv_names_the_line() {
        let dir = tmp("bad");
        let p = dir.join("bad.csv");
        fs::write(&p, "x1,x2,y1,y2\n0,0,0,0\n1,oops,0,0\n").unwrap();
        write_json(&sidecar_path(&p), &TrainingSidecar { noise_std: 0.1, seed: 0 }).unwrap();
        match read_training_set(&p) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("x2"), "{message}");
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn model_reload_is_bit_exact() {
        let dir = tmp("model");
        let data = benchmark::training_data(20, 5).unwrap();
        write_training_set(&dir.join("data.csv"), &data).unwrap();
        let gp = GpPosterior::fit(&data, &benchmark::published_kernels()).unwrap();
        write_model(&dir.join("model.json"), &ModelFile::from_posterior(&gp, "data.csv")).unwrap();
        let (_, _, again) = read_model(&dir.join("model.json")).unwrap();
        for x in [[0.1, 0.2], [-0.9, 3.9], [2.5, -1.0]] {
            assert_eq!(gp.mean(&x), again.mean(&x));
            assert_eq!(gp.variance(&x).unwrap(), again.variance(&x).unwrap());
        }
    }
}
