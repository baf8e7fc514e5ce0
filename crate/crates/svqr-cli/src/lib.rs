//! Library side of the `svqr` command-line tool: CSV and Servo ingestion,
//! experiment drivers, grid search and report emission. `main.rs` is a
//! thin argument-parsing shell over these functions so integration tests
//! can call them directly.

pub mod dataio;
pub mod experiments;
pub mod gridsearch;
pub mod report;

use std::path::{Path, PathBuf};

use svqr::data::Dataset;
use svqr::error::{Error, Result};
use svqr::loss::Tau;
use svqr::model::{fit, FitConfig, TrainedModel};

use dataio::Scaling;

/// Fit a model from CSV data, optionally min-max scaling the features,
/// and write `model.json` into `out`.
pub fn cmd_fit(
    data_path: &Path,
    config: FitConfig,
    normalize: bool,
    out: &Path,
) -> Result<PathBuf> {
    let loaded = dataio::read_xy_csv(data_path)?;
    let (dataset, scaling) = if normalize {
        let scaling = Scaling::fit(&loaded.dataset.x);
        let x = scaling.apply(&loaded.dataset.x)?;
        (Dataset::new(x, loaded.dataset.y.clone())?, Some(scaling))
    } else {
        (loaded.dataset, None)
    };
    let model = fit(&dataset, &config)?;

    std::fs::create_dir_all(out)
        .map_err(|e| Error::invalid(format!("cannot create {}: {e}", out.display())))?;
    let path = out.join("model.json");
    let mut value: serde_json::Value = serde_json::from_str(&model.to_json()?)
        .map_err(|e| Error::ModelIo(e.to_string()))?;
    if let Some(s) = scaling {
        value["preprocessing"] = serde_json::json!({
            "kind": "min-max",
            "mins": s.mins,
            "ranges": s.ranges,
        });
    }
    let text = serde_json::to_string_pretty(&value).map_err(|e| Error::ModelIo(e.to_string()))?;
    std::fs::write(&path, text + "\n")
        .map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Load a model file (with optional embedded scaling) and predict for the
/// feature rows of a CSV, writing `predictions.csv` into `out`.
pub fn cmd_predict(model_path: &Path, data_path: &Path, out: &Path) -> Result<PathBuf> {
    let text = std::fs::read_to_string(model_path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", model_path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::ModelIo(e.to_string()))?;
    let model = TrainedModel::from_json(&text)?;
    let mut features = dataio::read_feature_csv(data_path)?;
    if let Some(pre) = value.get("preprocessing") {
        let scaling: Scaling = serde_json::from_value(serde_json::json!({
            "mins": pre["mins"],
            "ranges": pre["ranges"],
        }))
        .map_err(|e| Error::ModelIo(format!("bad preprocessing block: {e}")))?;
        features = scaling.apply(&features)?;
    }
    let preds = model.predict(&features)?;

    std::fs::create_dir_all(out)
        .map_err(|e| Error::invalid(format!("cannot create {}: {e}", out.display())))?;
    let path = out.join("predictions.csv");
    let mut body = String::from("prediction\n");
    for p in preds {
        body.push_str(&dataio::fmt_f64(p));
        body.push('\n');
    }
    std::fs::write(&path, body)
        .map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Parse a `--tau` style flag.
pub fn parse_tau(v: f64) -> Result<Tau> {
    Tau::new(v)
}
