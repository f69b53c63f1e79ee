//! Subcommand implementations.

use crate::config::RunConfig;
use crate::tables;
use cadx_core::aggregate::VolumePrediction;
use cadx_core::canonical;
use cadx_core::dataset::{
    self, generate_phantom_dataset, load_manifest, FineClass, Frame2D, PhantomConfig,
};
use cadx_core::evaluation::{cross_validate, EvalReport};
use cadx_core::explain::{guided_backprop, pca_fit, pca_project, predicted_class, saliency_map};
use cadx_core::neuralnet::{load_checkpoint, save_checkpoint};
use cadx_core::pipeline::{
    self, infer_volume, preprocess_volume, train_pipeline, PipelineConfig, TrainedPipeline,
};
use cadx_core::preprocess::AgeScaler;
use cadx_core::svm::{load_svm_model, save_svm_model};
use cadx_core::{CadxError, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CadxError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text.as_bytes()).map_err(|e| CadxError::io(path, e))
}

// ---------------------------------------------------------------- phantom

pub fn phantom(config: &PhantomConfig, seed: u64, out_dir: &Path) -> Result<()> {
    ensure_dir(out_dir)?;
    let manifest = generate_phantom_dataset(config, seed, out_dir)?;
    canonical::write_canonical_file(&out_dir.join("phantom_config.json"), config)?;
    println!(
        "phantom dataset: {} volumes, {} frames -> {}",
        manifest.total_volumes(),
        manifest
            .entries
            .iter()
            .map(|e| e.frames.len())
            .sum::<usize>(),
        out_dir.join("manifest.json").display()
    );
    Ok(())
}

// ------------------------------------------------------------- preprocess

#[derive(Debug, Serialize)]
struct VolumeSidecar<'a> {
    version: u32,
    volume_id: &'a str,
    volume_mean: f64,
    accepted_indices: &'a [usize],
    rejected: RejectionCounts,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
struct RejectionCounts {
    saturated: u64,
    dark: u64,
    blurry: u64,
}

#[derive(Debug, Serialize)]
struct CacheMeta {
    version: u32,
    age_scaler: AgeScaler,
    preproc: cadx_core::preprocess::PreprocConfig,
    volumes: usize,
    accepted_frames: u64,
    rejected: RejectionCounts,
}

pub fn preprocess(manifest_path: &Path, run: &RunConfig, out_dir: &Path) -> Result<()> {
    let manifest = load_manifest(manifest_path)?;
    let root = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    ensure_dir(out_dir)?;
    run.echo_into(out_dir)?;
    let cfg = &run.pipeline.preproc;

    let entries: Vec<&dataset::ManifestEntry> = manifest.entries.iter().collect();
    let age_scaler = pipeline::fit_age_scaler_on(&entries)?;

    let mut totals = RejectionCounts::default();
    let mut accepted_frames = 0u64;
    for entry in &manifest.entries {
        let raw = pipeline::load_volume_frames(&manifest, root, entry)?;
        let pre = preprocess_volume(&raw, cfg)?;
        let dir = out_dir.join(&entry.volume_id);
        ensure_dir(&dir)?;
        // Cached frames are the resized stack before zero-centering; the
        // sidecar records the mean to subtract.
        for (stack_pos, frame) in pre.accepted_indices.iter().zip(pre.frames.iter()) {
            let data: Vec<f64> = frame
                .data()
                .iter()
                .map(|v| (v + pre.volume_mean).clamp(0.0, 1.0))
                .collect();
            let restored = Frame2D::new(frame.width(), frame.height(), data)?;
            dataset::write_frame(&restored, &dir.join(format!("f{stack_pos:03}.pgm")))?;
        }
        let rejected = RejectionCounts {
            saturated: pre.rejected[0],
            dark: pre.rejected[1],
            blurry: pre.rejected[2],
        };
        canonical::write_canonical_file(
            &dir.join("sidecar.json"),
            &VolumeSidecar {
                version: 1,
                volume_id: &entry.volume_id,
                volume_mean: pre.volume_mean,
                accepted_indices: &pre.accepted_indices,
                rejected,
            },
        )?;
        totals.saturated += rejected.saturated;
        totals.dark += rejected.dark;
        totals.blurry += rejected.blurry;
        accepted_frames += pre.accepted_indices.len() as u64;
    }
    canonical::write_canonical_file(
        &out_dir.join("cache_meta.json"),
        &CacheMeta {
            version: 1,
            age_scaler,
            preproc: *cfg,
            volumes: manifest.total_volumes(),
            accepted_frames,
            rejected: totals,
        },
    )?;
    println!("accepted: {accepted_frames}");
    println!("rejected saturated: {}", totals.saturated);
    println!("rejected dark: {}", totals.dark);
    println!("rejected blurry: {}", totals.blurry);
    Ok(())
}

// ------------------------------------------------------------------ train

/// Model directory contents besides the two binary model files.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub version: u32,
    pub age_scaler: AgeScaler,
    pub pipeline: PipelineConfig,
    pub seed: u64,
    pub loss_curve: Vec<f64>,
}

pub fn save_model_dir(
    trained: &TrainedPipeline,
    config: &PipelineConfig,
    seed: u64,
    dir: &Path,
) -> Result<()> {
    ensure_dir(dir)?;
    save_checkpoint(&trained.cnn, &dir.join("cnn.ckpt"))?;
    canonical::write_canonical_file(&dir.join("cnn.meta.json"), &CnnSidecar {
        version: 1,
        config: trained.cnn.config().clone(),
        seed,
    })?;
    save_svm_model(&trained.svm, &dir.join("svm.model"))?;
    canonical::write_canonical_file(
        &dir.join("meta.json"),
        &ModelMeta {
            version: 1,
            age_scaler: trained.age_scaler,
            pipeline: config.clone(),
            seed,
            loss_curve: trained.loss_curve.clone(),
        },
    )
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CnnSidecar {
    version: u32,
    config: cadx_core::neuralnet::NetConfig,
    seed: u64,
}

pub fn load_model_dir(dir: &Path) -> Result<(TrainedPipeline, PipelineConfig)> {
    let meta_path = dir.join("meta.json");
    let text = std::fs::read_to_string(&meta_path).map_err(|e| CadxError::io(&meta_path, e))?;
    let meta: ModelMeta =
        serde_json::from_str(&text).map_err(|e| CadxError::parse(&meta_path, e.to_string()))?;
    let cnn = load_checkpoint(&dir.join("cnn.ckpt"))?;
    let svm = load_svm_model(&dir.join("svm.model"))?;
    Ok((
        TrainedPipeline {
            cnn,
            svm,
            age_scaler: meta.age_scaler,
            loss_curve: meta.loss_curve,
        },
        meta.pipeline,
    ))
}

pub fn train(manifest_path: &Path, run: &RunConfig, out_dir: &Path) -> Result<()> {
    let manifest = load_manifest(manifest_path)?;
    let root = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    ensure_dir(out_dir)?;
    run.echo_into(out_dir)?;
    let entries: Vec<&dataset::ManifestEntry> = manifest.entries.iter().collect();
    let trained = train_pipeline(
        &manifest,
        root,
        &entries,
        &run.pipeline,
        run.pipeline.seed,
    )?;
    save_model_dir(&trained, &run.pipeline, run.pipeline.seed, out_dir)?;
    println!(
        "trained on {} volumes; final epoch loss {:.6}",
        entries.len(),
        trained.loss_curve.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

// --------------------------------------------------------------- evaluate

pub fn evaluate(manifest_path: &Path, run: &RunConfig, out_dir: &Path) -> Result<EvalReport> {
    let manifest = load_manifest(manifest_path)?;
    let root = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    ensure_dir(out_dir)?;
    run.echo_into(out_dir)?;
    let report = cross_validate(&manifest, root, &run.pipeline)?;
    canonical::write_canonical_file(&out_dir.join("report.json"), &report)?;
    write_text(
        &out_dir.join("confusion_fine.csv"),
        &tables::confusion_csv(&report.pooled.confusion_fine),
    )?;
    write_text(
        &out_dir.join("confusion_binary.csv"),
        &tables::confusion_csv(&report.pooled.confusion_binary),
    )?;
    write_text(&out_dir.join("roc.csv"), &tables::roc_csv(&report.pooled.roc))?;
    write_text(
        &out_dir.join("roc.svg"),
        &tables::roc_svg(&report.pooled.roc, report.pooled.auc),
    )?;
    write_text(
        &out_dir.join("confusion.svg"),
        &tables::confusion_svg(
            &report.pooled.confusion_fine,
            &report.pooled.confusion_binary,
        ),
    )?;
    println!(
        "evaluated {} volumes over {} folds: five-class accuracy {:.4}, AUC {}",
        report.pooled.volumes,
        run.pipeline.folds,
        report.pooled.fine_accuracy,
        report
            .pooled
            .auc
            .map(|a| format!("{a:.4}"))
            .unwrap_or_else(|| "n/a".into()),
    );
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(report)
}

// ---------------------------------------------------------------- predict

pub fn predict(
    model_dir: &Path,
    volume_dir: &Path,
    age: u32,
    hpv: bool,
    threshold_override: Option<f64>,
) -> Result<()> {
    let (trained, mut config) = load_model_dir(model_dir)?;
    if let Some(t) = threshold_override {
        config.decision.threshold = t;
        config.decision.validate()?;
    }
    let mut frame_paths: Vec<PathBuf> = std::fs::read_dir(volume_dir)
        .map_err(|e| CadxError::io(volume_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "pgm"))
        .collect();
    frame_paths.sort();
    if frame_paths.is_empty() {
        return Err(CadxError::validation(format!(
            "no .pgm frames found in {}",
            volume_dir.display()
        )));
    }
    let frames: Vec<Frame2D> = frame_paths
        .iter()
        .map(|p| dataset::read_frame(p))
        .collect::<Result<_>>()?;
    let pre = preprocess_volume(&frames, &config.preproc)?;
    let inference = infer_volume(&trained, &pre, age, hpv, &config)?;
    let volume_id = volume_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "volume".to_string());
    let record: VolumePrediction = inference.to_prediction(&volume_id, config.decision.threshold);
    print!("{}", canonical::to_canonical_string(&record)?);
    Ok(())
}

// ---------------------------------------------------------------- explain

pub enum ExplainMethod {
    GuidedBackprop,
    Saliency,
}

pub fn explain(
    model_dir: &Path,
    frame_path: &Path,
    method: ExplainMethod,
    class: Option<FineClass>,
    out_path: &Path,
) -> Result<()> {
    let (trained, config) = load_model_dir(model_dir)?;
    let raw = dataset::read_frame(frame_path)?;
    // Single-frame preprocessing without the quality gate: the caller chose
    // this frame explicitly. Zero-centering treats it as a one-frame volume.
    let filtered = cadx_core::preprocess::median_filter_3x3(&raw)?;
    let cropped = cadx_core::preprocess::center_crop(&filtered, config.preproc.crop_size)?;
    let resized = cadx_core::preprocess::resize_bilinear(&cropped, config.preproc.target_size)?;
    let (centered, _) = cadx_core::preprocess::zero_center_volume(std::slice::from_ref(&resized))?;
    let frame = centered.into_iter().next().expect("one frame in, one out");

    let target = match class {
        Some(c) => c,
        None => predicted_class(&trained.cnn, &frame)?,
    };
    let map = match method {
        ExplainMethod::Saliency => saliency_map(&trained.cnn, &frame, target)?.map,
        ExplainMethod::GuidedBackprop => guided_backprop(&trained.cnn, &frame, target)?.0.map,
    };
    dataset::write_frame(&map, out_path)?;
    println!(
        "attribution for class {} ({}) -> {}",
        target.code(),
        target.name(),
        out_path.display()
    );
    Ok(())
}

// -------------------------------------------------------------------- pca

pub fn pca(
    model_dir: &Path,
    manifest_path: &Path,
    components: usize,
    out_path: &Path,
) -> Result<()> {
    let (trained, config) = load_model_dir(model_dir)?;
    let manifest = load_manifest(manifest_path)?;
    let root = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    // FC2 features for every accepted frame, tagged (volume, stack index).
    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut rows: Vec<(String, usize, u8)> = Vec::new();
    for entry in &manifest.entries {
        let raw = pipeline::load_volume_frames(&manifest, root, entry)?;
        let pre = preprocess_volume(&raw, &config.preproc)?;
        for (stack_pos, frame) in pre.accepted_indices.iter().zip(pre.frames.iter()) {
            let trace = cadx_core::neuralnet::forward(&trained.cnn, frame)?;
            features.push(trace.fc2_features().to_vec());
            rows.push((entry.volume_id.clone(), *stack_pos, entry.label.code()));
        }
    }
    let model = pca_fit(&features, components)?;
    let mut out = String::from("volume_id,frame,label");
    for i in 1..=components {
        out.push_str(&format!(",p{i}"));
    }
    out.push('\n');
    for ((volume_id, stack_pos, label), feature) in rows.iter().zip(features.iter()) {
        let projection = pca_project(&model, feature)?;
        let cells: Vec<String> = projection.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!(
            "{volume_id},{stack_pos},{label},{}\n",
            cells.join(",")
        ));
    }
    write_text(out_path, &out)?;
    println!(
        "projected {} frames onto {} components -> {}",
        features.len(),
        components,
        out_path.display()
    );
    Ok(())
}
