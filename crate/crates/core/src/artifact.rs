//! On-disk model-run artifacts.
//!
//! A run directory holds a JSON manifest, one binary tensor file per layer and
//! a labels CSV. Tensor files are `DLDG`, a little-endian `u16` format version,
//! `u64` rows, `u64` cols, then row-major little-endian `f32` values.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TENSOR_MAGIC: &[u8; 4] = b"DLDG";
pub const TENSOR_VERSION: u16 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LABELS_FILE: &str = "labels.csv";

const HEADER_LEN: usize = 4 + 2 + 8 + 8;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("malformed labels file {path}: {message}")]
    Labels { path: PathBuf, message: String },
    #[error("{path}: not a DLDG tensor file")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported tensor format version {version}")]
    UnsupportedVersion { path: PathBuf, version: u16 },
    #[error(
        "layer '{layer}': tensor header is {found_rows}x{found_cols}, manifest expects {expected_rows}x{expected_cols}"
    )]
    HeaderMismatch {
        layer: String,
        expected_rows: usize,
        expected_cols: usize,
        found_rows: usize,
        found_cols: usize,
    },
    #[error("layer '{layer}': tensor payload has {found} bytes, expected {expected}")]
    Truncated {
        layer: String,
        expected: usize,
        found: usize,
    },
    #[error("layer '{layer}': non-finite activation at item {item}, neuron {neuron}")]
    NonFinite {
        layer: String,
        item: usize,
        neuron: usize,
    },
    #[error("item {item}: {field} {label} outside [0, {class_count})")]
    LabelOutOfRange {
        item: usize,
        field: &'static str,
        label: i64,
        class_count: usize,
    },
    #[error("invalid run: {0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub layer_name: String,
    pub neuron_count: usize,
    pub tensor_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub item_count: usize,
    pub class_count: usize,
    pub layers: Vec<LayerEntry>,
    pub latent_layer: String,
    pub labels_path: String,
    pub predictions_path: String,
}

impl RunManifest {
    /// Structural checks that do not touch the filesystem.
    pub fn validate(&self) -> Result<(), StoreError> {
        if self.item_count == 0 {
            return Err(StoreError::Invalid("item_count must be >= 1".into()));
        }
        if self.class_count < 2 {
            return Err(StoreError::Invalid("class_count must be >= 2".into()));
        }
        if self.layers.is_empty() {
            return Err(StoreError::Invalid("manifest lists no layers".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.neuron_count == 0 {
                return Err(StoreError::Invalid(format!(
                    "layer '{}' has neuron_count 0",
                    layer.layer_name
                )));
            }
            if self.layers[..i]
                .iter()
                .any(|l| l.layer_name == layer.layer_name)
            {
                return Err(StoreError::Invalid(format!(
                    "duplicate layer name '{}'",
                    layer.layer_name
                )));
            }
        }
        if !self
            .layers
            .iter()
            .any(|l| l.layer_name == self.latent_layer)
        {
            return Err(StoreError::Invalid(format!(
                "latent_layer '{}' is not a listed layer",
                self.latent_layer
            )));
        }
        Ok(())
    }
}

/// Dense `rows x cols` activations for one layer, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    pub layer_name: String,
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl ActivationMatrix {
    pub fn new(
        layer_name: impl Into<String>,
        rows: usize,
        cols: usize,
        values: Vec<f32>,
    ) -> Result<Self, StoreError> {
        let layer_name = layer_name.into();
        if values.len() != rows * cols {
            return Err(StoreError::Invalid(format!(
                "layer '{layer_name}': {} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Ok(Self {
            layer_name,
            rows,
            cols,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, item: usize) -> &[f32] {
        &self.values[item * self.cols..(item + 1) * self.cols]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, item: usize, neuron: usize) -> f32 {
        self.values[item * self.cols + neuron]
    }

    fn check_finite(&self) -> Result<(), StoreError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(pos) => Err(StoreError::NonFinite {
                layer: self.layer_name.clone(),
                item: pos / self.cols,
                neuron: pos % self.cols,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ItemMeta {
    pub true_label: usize,
    pub predicted_label: usize,
}

impl ItemMeta {
    pub fn correct(&self) -> bool {
        self.true_label == self.predicted_label
    }
}

/// Latent coordinates widened to `f64`, row-major `rows x dims`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSpace {
    rows: usize,
    dims: usize,
    data: Vec<f64>,
}

impl LatentSpace {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dims = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == dims), "ragged latent rows");
        Self {
            rows: rows.len(),
            dims,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn from_flat(rows: usize, dims: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * dims, data.len(), "latent buffer size mismatch");
        Self { rows, dims, data }
    }

    pub fn from_activations(m: &ActivationMatrix) -> Self {
        Self {
            rows: m.rows,
            dims: m.cols,
            data: m.values.iter().map(|&v| f64::from(v)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One validated model run. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub run_id: String,
    pub class_count: usize,
    layers: Vec<ActivationMatrix>,
    items: Vec<ItemMeta>,
    latent_index: usize,
    latent: LatentSpace,
}

impl RunArtifacts {
    pub fn new(
        run_id: impl Into<String>,
        class_count: usize,
        layers: Vec<ActivationMatrix>,
        items: Vec<ItemMeta>,
        latent_layer: &str,
    ) -> Result<Self, StoreError> {
        if class_count < 2 {
            return Err(StoreError::Invalid("class_count must be >= 2".into()));
        }
        if items.is_empty() {
            return Err(StoreError::Invalid("run has no items".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layers[..i].iter().any(|l| l.layer_name == layer.layer_name) {
                return Err(StoreError::Invalid(format!(
                    "duplicate layer name '{}'",
                    layer.layer_name
                )));
            }
            if layer.rows != items.len() {
                return Err(StoreError::HeaderMismatch {
                    layer: layer.layer_name.clone(),
                    expected_rows: items.len(),
                    expected_cols: layer.cols,
                    found_rows: layer.rows,
                    found_cols: layer.cols,
                });
            }
            if layer.cols == 0 {
                return Err(StoreError::Invalid(format!(
                    "layer '{}' has no neurons",
                    layer.layer_name
                )));
            }
            layer.check_finite()?;
        }
        for (item, meta) in items.iter().enumerate() {
            check_label(item, "true_label", meta.true_label as i64, class_count)?;
            check_label(
                item,
                "predicted_label",
                meta.predicted_label as i64,
                class_count,
            )?;
        }
        let latent_index = layers
            .iter()
            .position(|l| l.layer_name == latent_layer)
            .ok_or_else(|| {
                StoreError::Invalid(format!("latent layer '{latent_layer}' not present"))
            })?;
        let latent = LatentSpace::from_activations(&layers[latent_index]);
        Ok(Self {
            run_id: run_id.into(),
            class_count,
            layers,
            items,
            latent_index,
            latent,
        })
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn layers(&self) -> &[ActivationMatrix] {
        &self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&ActivationMatrix> {
        self.layers.iter().find(|l| l.layer_name == name)
    }

    pub fn items(&self) -> &[ItemMeta] {
        &self.items
    }

    pub fn latent_layer_name(&self) -> &str {
        &self.layers[self.latent_index].layer_name
    }

    pub fn latent(&self) -> &LatentSpace {
        &self.latent
    }

    pub fn true_labels(&self) -> Vec<usize> {
        self.items.iter().map(|m| m.true_label).collect()
    }

    pub fn misclassified_count(&self, ids: &[usize]) -> usize {
        ids.iter().filter(|&&i| !self.items[i].correct()).count()
    }

    /// Counts indexed `[true][predicted]`.
    pub fn confusion_matrix(&self) -> Vec<Vec<usize>> {
        let mut cm = vec![vec![0; self.class_count]; self.class_count];
        for m in &self.items {
            cm[m.true_label][m.predicted_label] += 1;
        }
        cm
    }
}

fn check_label(
    item: usize,
    field: &'static str,
    label: i64,
    class_count: usize,
) -> Result<(), StoreError> {
    if label < 0 || label as usize >= class_count {
        return Err(StoreError::LabelOutOfRange {
            item,
            field,
            label,
            class_count,
        });
    }
    Ok(())
}

pub fn write_tensor(path: &Path, m: &ActivationMatrix) -> Result<(), StoreError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(TENSOR_MAGIC);
    header.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    header.extend_from_slice(&(m.rows as u64).to_le_bytes());
    header.extend_from_slice(&(m.cols as u64).to_le_bytes());
    w.write_all(&header).map_err(io_err(path))?;
    for v in &m.values {
        w.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a tensor file, checking the header against the expected shape.
pub fn read_tensor(
    path: &Path,
    layer_name: &str,
    expected_rows: usize,
    expected_cols: usize,
) -> Result<ActivationMatrix, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            StoreError::BadMagic {
                path: path.to_path_buf(),
            }
        } else {
            io_err(path)(e)
        }
    })?;
    if &header[0..4] != TENSOR_MAGIC {
        return Err(StoreError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != TENSOR_VERSION {
        return Err(StoreError::UnsupportedVersion {
            path: path.to_path_buf(),
            version,
        });
    }
    let rows = u64::from_le_bytes(header[6..14].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(header[14..22].try_into().unwrap()) as usize;
    if rows != expected_rows || cols != expected_cols {
        return Err(StoreError::HeaderMismatch {
            layer: layer_name.to_string(),
            expected_rows,
            expected_cols,
            found_rows: rows,
            found_cols: cols,
        });
    }
    let mut bytes = Vec::with_capacity(rows * cols * 4);
    r.read_to_end(&mut bytes).map_err(io_err(path))?;
    if bytes.len() != rows * cols * 4 {
        return Err(StoreError::Truncated {
            layer: layer_name.to_string(),
            expected: rows * cols * 4,
            found: bytes.len(),
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let m = ActivationMatrix::new(layer_name, rows, cols, values)?;
    m.check_finite()?;
    Ok(m)
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    item_id: usize,
    true_label: i64,
    predicted_label: i64,
}

fn read_label_rows(path: &Path, item_count: usize) -> Result<Vec<LabelRow>, StoreError> {
    let labels_err = |message: String| StoreError::Labels {
        path: path.to_path_buf(),
        message,
    };
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| labels_err(e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["item_id", "true_label", "predicted_label"] {
        return Err(labels_err(format!(
            "expected header item_id,true_label,predicted_label, found {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::with_capacity(item_count);
    for (i, rec) in reader.deserialize::<LabelRow>().enumerate() {
        let row = rec.map_err(|e| labels_err(e.to_string()))?;
        if row.item_id != i {
            return Err(labels_err(format!(
                "row {i} has item_id {}, expected {i}",
                row.item_id
            )));
        }
        rows.push(row);
    }
    if rows.len() != item_count {
        return Err(labels_err(format!(
            "{} rows, manifest declares {item_count} items",
            rows.len()
        )));
    }
    Ok(rows)
}

/// Loads and fully validates the run described by `manifest_path`.
pub fn load_run(manifest_path: &Path) -> Result<RunArtifacts, StoreError> {
    let text = fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|source| StoreError::Manifest {
            path: manifest_path.to_path_buf(),
            source,
        })?;
    manifest.validate()?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut layers = Vec::with_capacity(manifest.layers.len());
    for entry in &manifest.layers {
        layers.push(read_tensor(
            &base.join(&entry.tensor_path),
            &entry.layer_name,
            manifest.item_count,
            entry.neuron_count,
        )?);
    }

    let labels_path = base.join(&manifest.labels_path);
    let truth = read_label_rows(&labels_path, manifest.item_count)?;
    let predictions = if manifest.predictions_path == manifest.labels_path {
        None
    } else {
        Some(read_label_rows(
            &base.join(&manifest.predictions_path),
            manifest.item_count,
        )?)
    };
    let mut items = Vec::with_capacity(manifest.item_count);
    for (i, t) in truth.iter().enumerate() {
        let predicted = predictions
            .as_ref()
            .map_or(t.predicted_label, |p| p[i].predicted_label);
        check_label(i, "true_label", t.true_label, manifest.class_count)?;
        check_label(i, "predicted_label", predicted, manifest.class_count)?;
        items.push(ItemMeta {
            true_label: t.true_label as usize,
            predicted_label: predicted as usize,
        });
    }

    RunArtifacts::new(
        manifest.run_id,
        manifest.class_count,
        layers,
        items,
        &manifest.latent_layer,
    )
}

/// Writes tensors, labels and manifest into `dir`, returning the manifest path.
pub fn write_run(run: &RunArtifacts, dir: &Path) -> Result<PathBuf, StoreError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::with_capacity(run.layers.len());
    for (i, layer) in run.layers.iter().enumerate() {
        let file_name = format!("layer{i:03}.dldg");
        write_tensor(&dir.join(&file_name), layer)?;
        entries.push(LayerEntry {
            layer_name: layer.layer_name.clone(),
            neuron_count: layer.cols,
            tensor_path: file_name,
        });
    }

    let labels_path = dir.join(LABELS_FILE);
    let file = File::create(&labels_path).map_err(io_err(&labels_path))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    for (item_id, m) in run.items.iter().enumerate() {
        writer
            .serialize(LabelRow {
                item_id,
                true_label: m.true_label as i64,
                predicted_label: m.predicted_label as i64,
            })
            .map_err(|e| StoreError::Labels {
                path: labels_path.clone(),
                message: e.to_string(),
            })?;
    }
    writer.flush().map_err(io_err(&labels_path))?;

    let manifest = RunManifest {
        run_id: run.run_id.clone(),
        item_count: run.item_count(),
        class_count: run.class_count,
        layers: entries,
        latent_layer: run.latent_layer_name().to_string(),
        labels_path: LABELS_FILE.to_string(),
        predictions_path: LABELS_FILE.to_string(),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json + "\n").map_err(io_err(&manifest_path))?;
    Ok(manifest_path)
}

/// Accepts either a run directory or a manifest path.
pub fn resolve_manifest(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_run(items: usize, classes: usize) -> RunArtifacts {
        let l1: Vec<f32> = (0..items * 3).map(|v| v as f32 * 0.25).collect();
        let l2: Vec<f32> = (0..items * 2).map(|v| (v % 7) as f32 - 1.5).collect();
        let metas = (0..items)
            .map(|i| ItemMeta {
                true_label: i % classes,
                predicted_label: (i / 3) % classes,
            })
            .collect();
        RunArtifacts::new(
            "tiny",
            classes,
            vec![
                ActivationMatrix::new("fc1", items, 3, l1).unwrap(),
                ActivationMatrix::new("latent", items, 2, l2).unwrap(),
            ],
            metas,
            "latent",
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let run = tiny_run(100, 10);
        let manifest = write_run(&run, dir.path()).unwrap();
        let back = load_run(&manifest).unwrap();
        assert_eq!(back, run);
        assert_eq!(back.layers().len(), 2);
        assert_eq!(back.item_count(), 100);
        for (a, b) in run.layers().iter().zip(back.layers()) {
            let bits_a: Vec<u32> = a.values().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = b.values().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn header_row_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let run = tiny_run(100, 10);
        let manifest = write_run(&run, dir.path()).unwrap();
        let short = ActivationMatrix::new("fc1", 99, 3, vec![0.0; 297]).unwrap();
        write_tensor(&dir.path().join("layer000.dldg"), &short).unwrap();
        match load_run(&manifest) {
            Err(StoreError::HeaderMismatch {
                layer,
                expected_rows: 100,
                found_rows: 99,
                ..
            }) => assert_eq!(layer, "fc1"),
            other => panic!("expected header mismatch, got {other:?}"),
        }
    }

    #[test]
    fn nan_is_reported_with_coordinates() {
        let dir = tempfile::tempdir().unwrap();
        let run = tiny_run(10, 2);
        let manifest = write_run(&run, dir.path()).unwrap();
        let mut vals = run.layers()[0].values().to_vec();
        vals[4 * 3 + 2] = f32::NAN;
        let bad = ActivationMatrix::new("fc1", 10, 3, vals).unwrap();
        write_tensor(&dir.path().join("layer000.dldg"), &bad).unwrap();
        match load_run(&manifest) {
            Err(StoreError::NonFinite {
                layer,
                item,
                neuron,
            }) => {
                assert_eq!((layer.as_str(), item, neuron), ("fc1", 4, 2));
            }
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let run = tiny_run(6, 3);
        let manifest = write_run(&run, dir.path()).unwrap();
        fs::write(
            dir.path().join(LABELS_FILE),
            "item_id,true_label,predicted_label\n0,0,0\n1,1,1\n2,2,2\n3,0,3\n4,1,1\n5,2,2\n",
        )
        .unwrap();
        match load_run(&manifest) {
            Err(StoreError::LabelOutOfRange {
                item: 3,
                field: "predicted_label",
                label: 3,
                ..
            }) => {}
            other => panic!("expected label error, got {other:?}"),
        }
    }

    #[test]
    fn negative_label_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let run = tiny_run(3, 3);
        let manifest = write_run(&run, dir.path()).unwrap();
        fs::write(
            dir.path().join(LABELS_FILE),
            "item_id,true_label,predicted_label\n0,0,0\n1,-1,1\n2,2,2\n",
        )
        .unwrap();
        assert!(matches!(
            load_run(&manifest),
            Err(StoreError::LabelOutOfRange {
                item: 1,
                field: "true_label",
                ..
            })
        ));
    }

    #[test]
    fn manifest_invariants() {
        let base = RunManifest {
            run_id: "r".into(),
            item_count: 4,
            class_count: 2,
            layers: vec![
                LayerEntry {
                    layer_name: "a".into(),
                    neuron_count: 2,
                    tensor_path: "a.dldg".into(),
                },
                LayerEntry {
                    layer_name: "b".into(),
                    neuron_count: 2,
                    tensor_path: "b.dldg".into(),
                },
            ],
            latent_layer: "b".into(),
            labels_path: LABELS_FILE.into(),
            predictions_path: LABELS_FILE.into(),
        };
        assert!(base.validate().is_ok());

        let mut dup = base.clone();
        dup.layers[1].layer_name = "a".into();
        dup.latent_layer = "a".into();
        assert!(dup.validate().is_err());

        let mut missing_latent = base.clone();
        missing_latent.latent_layer = "zzz".into();
        assert!(missing_latent.validate().is_err());

        let mut one_class = base;
        one_class.class_count = 1;
        assert!(one_class.validate().is_err());
    }

    #[test]
    fn missing_tensor_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_run(&tiny_run(5, 2), dir.path()).unwrap();
        fs::remove_file(dir.path().join("layer001.dldg")).unwrap();
        assert!(matches!(load_run(&manifest), Err(StoreError::Io { .. })));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_run(&tiny_run(5, 2), dir.path()).unwrap();
        fs::write(
            dir.path().join("layer000.dldg"),
            b"NOPE0000000000000000000000",
        )
        .unwrap();
        assert!(matches!(
            load_run(&manifest),
            Err(StoreError::BadMagic { .. })
        ));
    }

    #[test]
    fn write_into_unwritable_location_fails() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("not_a_dir");
        fs::write(&blocker, b"file").unwrap();
        let err = write_run(&tiny_run(5, 2), &blocker.join("run")).unwrap_err();
        assert!(matches!(err, StoreError::Io { .. }));
    }

    #[test]
    fn tensor_header_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.dldg");
        let m = ActivationMatrix::new("x", 2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        write_tensor(&path, &m).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"DLDG");
        assert_eq!(&bytes[4..6], &1u16.to_le_bytes());
        assert_eq!(&bytes[6..14], &2u64.to_le_bytes());
        assert_eq!(&bytes[14..22], &3u64.to_le_bytes());
        assert_eq!(&bytes[22..26], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 22 + 6 * 4);
    }
}
