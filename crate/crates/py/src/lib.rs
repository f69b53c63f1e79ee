//! Python bindings: frames, the trained pipeline, and the statistical
//! helpers, wrapped thin over cadx-core.

use cadx_core::aggregate::VolumeDistribution;
use cadx_core::dataset::{FineClass, Frame2D, PhantomConfig};
use cadx_core::evaluation::{clopper_pearson, cross_validate, roc_and_auc, BinaryCounts};
use cadx_core::explain::{guided_backprop, pca_fit, pca_project, predicted_class, saliency_map};
use cadx_core::pipeline::{
    infer_volume, preprocess_volume, train_pipeline, PipelineConfig, TrainedPipeline,
};
use cadx_core::preprocess::{self, AgeScaler, PreprocConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use std::path::{Path, PathBuf};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn fine_class(code: u8) -> PyResult<FineClass> {
    FineClass::from_code(code).map_err(err)
}

/// One grayscale frame with unit-interval intensities.
#[pyclass(name = "Frame", from_py_object)]
#[derive(Clone)]
struct PyFrame {
    inner: Frame2D,
}

#[pymethods]
impl PyFrame {
    #[new]
    fn new(width: usize, height: usize, data: Vec<f64>) -> PyResult<Self> {
        Ok(PyFrame {
            inner: Frame2D::new(width, height, data).map_err(err)?,
        })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyFrame {
            inner: cadx_core::dataset::read_frame(&path).map_err(err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        cadx_core::dataset::write_frame(&self.inner, &path).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn median_filter(&self) -> PyResult<Self> {
        Ok(PyFrame {
            inner: preprocess::median_filter_3x3(&self.inner).map_err(err)?,
        })
    }

    fn center_crop(&self, size: usize) -> PyResult<Self> {
        Ok(PyFrame {
            inner: preprocess::center_crop(&self.inner, size).map_err(err)?,
        })
    }

    fn resize(&self, target: usize) -> PyResult<Self> {
        Ok(PyFrame {
            inner: preprocess::resize_bilinear(&self.inner, target).map_err(err)?,
        })
    }

    /// None when the frame passes the gate, otherwise the rejection reason.
    fn quality_gate(&self) -> Option<String> {
        match preprocess::quality_gate(&self.inner, &PreprocConfig::desk_scale()) {
            Ok(()) => None,
            Err(reason) => Some(reason.name().to_string()),
        }
    }
}

/// A trained model directory opened for inference.
#[pyclass(name = "Model")]
struct PyModel {
    trained: TrainedPipeline,
    config: PipelineConfig,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(model_dir: PathBuf) -> PyResult<Self> {
        let (trained, config) = load_model_dir(&model_dir)?;
        Ok(PyModel { trained, config })
    }

    /// (fc2_features, logits, probabilities) for one preprocessed frame.
    fn forward(&self, frame: &PyFrame) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let trace = cadx_core::neuralnet::forward(&self.trained.cnn, &frame.inner).map_err(err)?;
        Ok((
            trace.fc2_features().to_vec(),
            trace.logits().to_vec(),
            trace.probs().to_vec(),
        ))
    }

    /// 5-D image feature (FC3 pre-softmax activations).
    fn extract_features(&self, frame: &PyFrame) -> PyResult<Vec<f64>> {
        cadx_core::neuralnet::extract_features(&self.trained.cnn, &frame.inner).map_err(err)
    }

    /// Classifies a stack of raw frames with the full pipeline; returns the
    /// per-volume prediction record as a dict-shaped JSON string.
    fn predict_volume(&self, frames: Vec<PyFrame>, age: u32, hpv: bool) -> PyResult<String> {
        let raw: Vec<Frame2D> = frames.into_iter().map(|f| f.inner).collect();
        let pre = preprocess_volume(&raw, &self.config.preproc).map_err(err)?;
        let inference = infer_volume(&self.trained, &pre, age, hpv, &self.config).map_err(err)?;
        let record = inference.to_prediction("volume", self.config.decision.threshold);
        cadx_core::canonical::to_canonical_string(&record).map_err(err)
    }

    /// Attribution map for one raw frame; method is "gb" or "saliency",
    /// class is a code 0..4 or None for the predicted class.
    #[pyo3(signature = (frame, method, class_code = None))]
    fn explain(&self, frame: &PyFrame, method: &str, class_code: Option<u8>) -> PyResult<PyFrame> {
        let filtered = preprocess::median_filter_3x3(&frame.inner).map_err(err)?;
        let cropped =
            preprocess::center_crop(&filtered, self.config.preproc.crop_size).map_err(err)?;
        let resized =
            preprocess::resize_bilinear(&cropped, self.config.preproc.target_size).map_err(err)?;
        let (centered, _) =
            preprocess::zero_center_volume(std::slice::from_ref(&resized)).map_err(err)?;
        let input = centered.into_iter().next().expect("one frame");
        let target = match class_code {
            Some(code) => fine_class(code)?,
            None => predicted_class(&self.trained.cnn, &input).map_err(err)?,
        };
        let map = match method {
            "saliency" => saliency_map(&self.trained.cnn, &input, target).map_err(err)?.map,
            "gb" => {
                guided_backprop(&self.trained.cnn, &input, target)
                    .map_err(err)?
                    .0
                    .map
            }
            other => return Err(err(format!("unknown method '{other}'"))),
        };
        Ok(PyFrame { inner: map })
    }
}

fn load_model_dir(dir: &Path) -> PyResult<(TrainedPipeline, PipelineConfig)> {
    #[derive(serde::Deserialize)]
    struct Meta {
        age_scaler: AgeScaler,
        pipeline: PipelineConfig,
        loss_curve: Vec<f64>,
    }
    let meta_path = dir.join("meta.json");
    let text = std::fs::read_to_string(&meta_path).map_err(err)?;
    let meta: Meta = serde_json::from_str(&text).map_err(err)?;
    let cnn = cadx_core::neuralnet::load_checkpoint(&dir.join("cnn.ckpt")).map_err(err)?;
    let svm = cadx_core::svm::load_svm_model(&dir.join("svm.model")).map_err(err)?;
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

fn parse_pipeline_config(config_json: Option<&str>) -> PyResult<PipelineConfig> {
    let config = match config_json {
        Some(text) => serde_json::from_str::<PipelineConfig>(text).map_err(err)?,
        None => PipelineConfig::default(),
    };
    config.validate().map_err(err)?;
    Ok(config)
}

/// Generates a phantom dataset; returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, seed, patients, specimens, volumes, frames, size))]
fn generate_phantom(
    out_dir: PathBuf,
    seed: u64,
    patients: usize,
    specimens: usize,
    volumes: usize,
    frames: usize,
    size: usize,
) -> PyResult<String> {
    let config = PhantomConfig::uniform(patients, specimens, volumes, frames, size);
    std::fs::create_dir_all(&out_dir).map_err(err)?;
    cadx_core::dataset::generate_phantom_dataset(&config, seed, &out_dir).map_err(err)?;
    Ok(out_dir.join("manifest.json").to_string_lossy().into_owned())
}

/// One manifest row: (volume_id, specimen_id, patient_id, label, age, hpv, frame_count).
type ManifestRow = (String, String, String, u8, u32, bool, usize);

#[pyfunction]
fn manifest_summary(path: PathBuf) -> PyResult<Vec<ManifestRow>> {
    let manifest = cadx_core::dataset::load_manifest(&path).map_err(err)?;
    Ok(manifest
        .entries
        .iter()
        .map(|e| {
            (
                e.volume_id.clone(),
                e.specimen_id.clone(),
                e.patient_id.clone(),
                e.label.code(),
                e.age,
                e.hpv,
                e.frames.len(),
            )
        })
        .collect())
}

/// Trains on the full manifest and writes a model directory.
#[pyfunction]
#[pyo3(signature = (manifest_path, out_dir, config_json = None))]
fn train(manifest_path: PathBuf, out_dir: PathBuf, config_json: Option<&str>) -> PyResult<()> {
    let config = parse_pipeline_config(config_json)?;
    let manifest = cadx_core::dataset::load_manifest(&manifest_path).map_err(err)?;
    let root = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let entries: Vec<&cadx_core::dataset::ManifestEntry> = manifest.entries.iter().collect();
    let trained = train_pipeline(&manifest, &root, &entries, &config, config.seed).map_err(err)?;
    std::fs::create_dir_all(&out_dir).map_err(err)?;
    cadx_core::neuralnet::save_checkpoint(&trained.cnn, &out_dir.join("cnn.ckpt")).map_err(err)?;
    cadx_core::svm::save_svm_model(&trained.svm, &out_dir.join("svm.model")).map_err(err)?;
    #[derive(serde::Serialize)]
    struct Meta<'a> {
        version: u32,
        age_scaler: AgeScaler,
        pipeline: &'a PipelineConfig,
        seed: u64,
        loss_curve: &'a [f64],
    }
    cadx_core::canonical::write_canonical_file(
        &out_dir.join("meta.json"),
        &Meta {
            version: 1,
            age_scaler: trained.age_scaler,
            pipeline: &config,
            seed: config.seed,
            loss_curve: &trained.loss_curve,
        },
    )
    .map_err(err)
}

/// Grouped cross-validation; returns the report as a JSON string.
#[pyfunction]
#[pyo3(signature = (manifest_path, config_json = None))]
fn evaluate(manifest_path: PathBuf, config_json: Option<&str>) -> PyResult<String> {
    let config = parse_pipeline_config(config_json)?;
    let manifest = cadx_core::dataset::load_manifest(&manifest_path).map_err(err)?;
    let root = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let report = cross_validate(&manifest, &root, &config).map_err(err)?;
    cadx_core::canonical::to_canonical_string(&report).map_err(err)
}

/// Exact Clopper-Pearson interval.
#[pyfunction]
#[pyo3(signature = (successes, trials, alpha = 0.05))]
fn clopper_pearson_interval(successes: u64, trials: u64, alpha: f64) -> PyResult<(f64, f64)> {
    clopper_pearson(successes, trials, alpha).map_err(err)
}

/// Trapezoidal AUC with strict-threshold sweep semantics.
#[pyfunction]
fn roc_auc(scores: Vec<f64>, truth: Vec<bool>) -> PyResult<f64> {
    Ok(roc_and_auc(&scores, &truth).map_err(err)?.auc)
}

/// (accuracy, sensitivity, specificity) from binary counts.
#[pyfunction]
fn binary_metrics(tp: u64, tn: u64, fp: u64, fn_: u64) -> PyResult<(f64, f64, f64)> {
    let counts = BinaryCounts { tp, tn, fp, fn_ };
    Ok((
        counts.accuracy().map_err(err)?,
        counts.sensitivity().map_err(err)?,
        counts.specificity().map_err(err)?,
    ))
}

/// Per-class probabilities of a volume from hard per-frame labels.
#[pyfunction]
fn volume_distribution(labels: Vec<u8>) -> PyResult<Vec<f64>> {
    let classes: Vec<FineClass> = labels
        .into_iter()
        .map(fine_class)
        .collect::<PyResult<_>>()?;
    let dist = VolumeDistribution::from_labels(&classes).map_err(err)?;
    Ok(dist.probs().to_vec())
}

/// P(high risk) of a volume from hard per-frame labels.
#[pyfunction]
fn p_high(labels: Vec<u8>) -> PyResult<f64> {
    let classes: Vec<FineClass> = labels
        .into_iter()
        .map(fine_class)
        .collect::<PyResult<_>>()?;
    let dist = VolumeDistribution::from_labels(&classes).map_err(err)?;
    Ok(dist.general_probability(cadx_core::dataset::GeneralClass::High))
}

/// Ordered [image(5), age_norm, hpv] fusion vector.
#[pyfunction]
fn fuse_features(image: Vec<f64>, age_norm: f64, hpv_enc: f64) -> PyResult<Vec<f64>> {
    Ok(cadx_core::aggregate::fuse(&image, age_norm, hpv_enc)
        .map_err(err)?
        .to_vec())
}

/// Min-max age normalization with inference-time clamping.
#[pyfunction]
fn normalize_age(min: u32, max: u32, age: u32) -> f64 {
    AgeScaler { min, max }.normalize(age)
}

/// PCA fit+project: returns (projections, explained_variances).
#[pyfunction]
fn pca(features: Vec<Vec<f64>>, components: usize) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let model = pca_fit(&features, components).map_err(err)?;
    let projections = features
        .iter()
        .map(|f| pca_project(&model, f))
        .collect::<cadx_core::Result<Vec<_>>>()
        .map_err(err)?;
    Ok((projections, model.variances))
}

#[pymodule]
fn cadx_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFrame>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate_phantom, m)?)?;
    m.add_function(wrap_pyfunction!(manifest_summary, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(clopper_pearson_interval, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(binary_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(volume_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(p_high, m)?)?;
    m.add_function(wrap_pyfunction!(fuse_features, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_age, m)?)?;
    m.add_function(wrap_pyfunction!(pca, m)?)?;
    Ok(())
}
