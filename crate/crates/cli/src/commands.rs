use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use vdensity::data::{BlockGrid, Manifest};
use vdensity::features::save_features;
use vdensity::gradcheck::{run_checks, Fault};
use vdensity::inference::{report_csv, traffic_density, EvalSummary};
use vdensity::io::write_atomic;
use vdensity::model_file::{load_model, save_model};
use vdensity::pipeline::{
    config_hash, evaluate_model, prepare, prepare_for_model, training_log_csv, ExperimentConfig,
};
use vdensity::synthgen::{generate, write_dataset};
use vdensity::SceneConfig;

use crate::exit::{CmdResult, Failure};

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::io(path, e))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Failure::Config(format!("{}: invalid config: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> CmdResult {
    let mut bytes = serde_json::to_vec_pretty(value).expect("json value serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

pub fn synth(config: &Path, out: &Path, seed: Option<u64>) -> CmdResult {
    let mut cfg: SceneConfig = read_json(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let hash = config_hash(&cfg);
    let ds = generate(&cfg)?;
    create_dir(out)?;
    write_dataset(&ds, out)?;
    write_json(&out.join("scene.json"), &cfg)?;
    write_json(
        &out.join("synth_summary.json"),
        &json!({
            "config_hash": hash,
            "frames": ds.frames.len(),
            "vehicles_total": ds.vehicles_total(),
        }),
    )?;
    println!("frames={} vehicles_total={}", ds.frames.len(), ds.vehicles_total());
    println!("config_hash={hash}");
    Ok(())
}

pub fn train(config: &Path, out: Option<&Path>, seed: Option<u64>, tol: Option<f64>) -> CmdResult {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.hyperparams.seed = s;
    }
    if let Some(t) = tol {
        cfg.hyperparams.tol = t;
    }
    let out: PathBuf = match out {
        Some(o) => o.to_path_buf(),
        None => cfg.out_dir_path().ok_or_else(|| {
            Failure::Config("no output directory: pass --out or set out_dir".into())
        })?,
    };
    let hash = cfg.hash();
    let outcome = vdensity::pipeline::train(&cfg)?;

    create_dir(&out)?;
    write_atomic(&out.join("config.json"), &cfg.to_json())?;
    save_model(&outcome.model, &out.join("model.wmat"))?;
    write_atomic(&out.join("train_log.csv"), &training_log_csv(&outcome.report))?;
    save_features(&outcome.data.features, &out.join("features.feat"))?;

    let report = &outcome.report;
    let train_summary = EvalSummary::from(&outcome.train_eval);
    let header = &outcome.model.header;
    let cv = outcome.cv.as_ref().map(|c| {
        json!({
            "best": { "alpha": c.best.alpha, "beta": c.best.beta, "rank": c.best.rank },
            "scores": c.scores,
        })
    });
    write_json(
        &out.join("train_summary.json"),
        &json!({
            "config_hash": hash,
            "feature_hash": header.feature_hash,
            "k": header.k,
            "j": header.j,
            "rank": header.rank,
            "alpha": header.alpha,
            "beta": header.beta,
            "final_objective": report.final_objective(),
            "iterations": report.iterations,
            "restart_index": report.restart_index,
            "converged": report.converged,
            "train": train_summary,
            "cv": cv,
        }),
    )?;
    println!(
        "objective={:e} iterations={} restart={} converged={}",
        report.final_objective(),
        report.iterations,
        report.restart_index,
        report.converged
    );
    println!(
        "train_mae={} train_mse={} train_ara={}",
        train_summary.mae, train_summary.mse, train_summary.ara
    );
    println!("config_hash={hash}");
    if let Some(limit) = cfg.max_train_mae {
        if train_summary.mae > limit {
            return Err(Failure::Check(format!(
                "train MAE {} exceeds max_train_mae {limit}",
                train_summary.mae
            )));
        }
    }
    Ok(())
}

pub fn predict(model_path: &Path, manifest_path: &Path, out: &Path) -> CmdResult {
    let model = load_model(model_path)?;
    let manifest = Manifest::load(manifest_path)?;
    let data = prepare_for_model(&model, &manifest)?;
    let roi = *data.roi();

    let mut frames = String::from("frame_id,est_count,raw_count,traffic_density\n");
    let mut blocks = String::from("frame_id,block,density\n");
    for (id, x) in data.ids.iter().zip(&data.features) {
        let p = vdensity::inference::predict_blocks(&model.weights, x)?;
        let count = p.count();
        frames.push_str(&format!(
            "{id},{count},{},{}\n",
            p.raw_count(),
            traffic_density(count, &roi)?
        ));
        for (j, d) in p.clamped.iter().enumerate() {
            blocks.push_str(&format!("{id},{j},{d}\n"));
        }
    }
    create_dir(out)?;
    write_atomic(&out.join("predictions.csv"), frames.as_bytes())?;
    write_atomic(&out.join("block_predictions.csv"), blocks.as_bytes())?;
    write_json(
        &out.join("predict_summary.json"),
        &json!({
            "config_hash": model.header.config_hash,
            "feature_hash": model.header.feature_hash,
            "n_frames": data.ids.len(),
        }),
    )?;
    println!("frames={}", data.ids.len());
    Ok(())
}

pub fn eval(
    model_path: &Path,
    manifest_path: Option<&Path>,
    config: Option<&Path>,
    out: &Path,
) -> CmdResult {
    let model = load_model(model_path)?;
    let data = match config {
        Some(c) => {
            let cfg = ExperimentConfig::load(c)?;
            cfg.features.validate()?;
            let path = manifest_path
                .map(Path::to_path_buf)
                .unwrap_or_else(|| cfg.manifest_path());
            let manifest = Manifest::load(&path)?;
            let grid = BlockGrid::new(manifest.roi()?, cfg.block_w, cfg.block_h)?;
            prepare(&manifest, grid, cfg.bg_threshold, &cfg.features)?
        }
        None => {
            let path = manifest_path.ok_or_else(|| {
                Failure::Config("eval needs --manifest or --config".into())
            })?;
            prepare_for_model(&model, &Manifest::load(path)?)?
        }
    };
    let (result, _) = evaluate_model(&model, &data)?;
    let summary = EvalSummary::from(&result);

    create_dir(out)?;
    write_atomic(&out.join("eval.csv"), &report_csv(&result))?;
    write_json(
        &out.join("eval.json"),
        &json!({
            "mae": summary.mae,
            "mse": summary.mse,
            "ara": summary.ara,
            "n_frames": summary.n_frames,
            "config_hash": model.header.config_hash,
            "feature_hash": model.header.feature_hash,
        }),
    )?;
    println!("mae={} mse={} ara={}", summary.mae, summary.mse, summary.ara);
    Ok(())
}

pub fn check_grad(tol: f64, points: usize, fault: Option<Fault>) -> CmdResult {
    if tol.is_nan() || tol <= 0.0 || points == 0 {
        return Err(Failure::Config("--tol must be > 0 and --points >= 1".into()));
    }
    let results = run_checks(points, tol, fault);
    for r in &results {
        println!(
            "{:<28} points={} max_rel_err={:.3e} tol={:.1e} {}",
            r.name,
            r.points,
            r.max_rel_err,
            r.tol,
            if r.passed() { "PASS" } else { "FAIL" }
        );
    }
    let worst = results
        .iter()
        .filter(|r| !r.passed())
        .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err));
    match worst {
        Some(w) => Err(Failure::Check(format!(
            "gradient check failed; worst offending check: {} (max relative error {:.3e} > {:.1e})",
            w.name, w.max_rel_err, w.tol
        ))),
        None => Ok(()),
    }
}
