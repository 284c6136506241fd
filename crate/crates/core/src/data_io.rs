//! Dataset ingestion and results persistence.
//!
//! Datasets are JSON Lines: one example per line with fields `id` (string),
//! `features` (array of numbers), `label` (integer), and `split` (`"train"`
//! or `"test"`). Features are expected pre-normalized by the producer — no
//! internal scaling happens here, and the VAT radius ε interacts directly
//! with feature scale.
//!
//! Results are CSV with header
//! `run_seed,round,labeled_count,test_macro_f1,acquisition_wall_ms`, UTF-8
//! with LF line endings. All writers go through a write-temp-then-rename so
//! readers never observe partial files.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulation::IterationRecord;

/// One labeled example: stable id, feature vector, class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub features: Vec<f64>,
    pub label: usize,
}

/// A train pool plus held-out test split over `dim`-dimensional features
/// and `num_classes` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
    pub dim: usize,
    pub num_classes: usize,
}

impl Dataset {
    /// Train entries as an acquisition pool (id, features).
    pub fn train_pool(&self) -> Vec<(String, Vec<f64>)> {
        self.train.iter().map(|e| (e.id.clone(), e.features.clone())).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct JsonlRow<'a> {
    id: String,
    features: Vec<f64>,
    label: i64,
    split: std::borrow::Cow<'a, str>,
}

/// Load a JSONL dataset, validating ids, dimensions, and labels.
///
/// The class count is inferred as `max label + 1` since the row schema
/// carries no separate metadata record.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let parse_err = |line: usize, message: String| Error::DatasetParse {
        path: path.display().to_string(),
        line,
        message,
    };

    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut dim = None;
    let mut max_label = 0usize;
    let mut seen_ids = std::collections::HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonlRow =
            serde_json::from_str(&line).map_err(|e| parse_err(line_no, e.to_string()))?;
        if row.features.is_empty() {
            return Err(parse_err(line_no, "empty feature vector".into()));
        }
        if row.features.iter().any(|x| !x.is_finite()) {
            return Err(parse_err(line_no, "non-finite feature".into()));
        }
        match dim {
            None => dim = Some(row.features.len()),
            Some(d) if d != row.features.len() => {
                return Err(parse_err(
                    line_no,
                    format!("feature dimension {} != {}", row.features.len(), d),
                ))
            }
            _ => {}
        }
        if row.label < 0 {
            return Err(parse_err(line_no, format!("label {} out of range", row.label)));
        }
        let label = row.label as usize;
        max_label = max_label.max(label);
        if !seen_ids.insert(row.id.clone()) {
            return Err(parse_err(line_no, format!("duplicate id {:?}", row.id)));
        }
        let example = Example { id: row.id, features: row.features, label };
        match row.split.as_ref() {
            "train" => train.push(example),
            "test" => test.push(example),
            other => return Err(parse_err(line_no, format!("unknown split {other:?}"))),
        }
    }
    let dim = dim.ok_or_else(|| parse_err(0, "no examples".into()))?;
    Ok(Dataset { name, train, test, dim, num_classes: max_label + 1 })
}

/// Write a dataset as JSONL (train rows first, then test), atomically.
pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for (split, examples) in [("train", &dataset.train), ("test", &dataset.test)] {
        for e in examples {
            let row = JsonlRow {
                id: e.id.clone(),
                features: e.features.clone(),
                label: e.label as i64,
                split: split.into(),
            };
            out.push_str(&serde_json::to_string(&row)?);
            out.push('\n');
        }
    }
    write_atomic(path.as_ref(), out.as_bytes())?;
    Ok(())
}

/// Synthetic Gaussian blob generator: desk-scale stand-in for pre-embedded
/// text corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobConfig {
    pub num_classes: usize,
    pub dim: usize,
    pub per_class_count: usize,
    /// Class centers are drawn from `center_scale · N(0, I)`.
    pub center_scale: f64,
    /// Per-point isotropic noise standard deviation.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for BlobConfig {
    /// 4 classes × 625 points in 32 dimensions: a 2000-point train pool
    /// with a 500-point test split after the 80/20 split.
    fn default() -> Self {
        BlobConfig {
            num_classes: 4,
            dim: 32,
            per_class_count: 625,
            center_scale: 1.0,
            noise_sigma: 1.0,
            seed: 0,
        }
    }
}

impl BlobConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("blobs need at least 2 classes".into()));
        }
        if self.dim < 1 {
            return Err(Error::InvalidConfig("dim must be >= 1".into()));
        }
        if self.per_class_count < 1 {
            return Err(Error::InvalidConfig("per_class_count must be >= 1".into()));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig("noise_sigma must be positive".into()));
        }
        if !(self.center_scale >= 0.0 && self.center_scale.is_finite()) {
            return Err(Error::InvalidConfig("center_scale must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Generate seeded Gaussian class clusters with a stratified 80/20
/// train/test split. Bit-for-bit reproducible from the config.
pub fn synthetic_blobs(cfg: &BlobConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gauss_vec = |scale: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..cfg.dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
    };
    let centers: Vec<Vec<f64>> =
        (0..cfg.num_classes).map(|_| gauss_vec(cfg.center_scale, &mut rng)).collect();

    let test_per_class = cfg.per_class_count / 5;
    let mut train_rows: Vec<(Vec<f64>, usize)> = Vec::new();
    let mut test_rows: Vec<(Vec<f64>, usize)> = Vec::new();
    for (class, center) in centers.iter().enumerate() {
        for i in 0..cfg.per_class_count {
            let noise = gauss_vec(cfg.noise_sigma, &mut rng);
            let point: Vec<f64> = center.iter().zip(&noise).map(|(c, n)| c + n).collect();
            if i < test_per_class {
                test_rows.push((point, class));
            } else {
                train_rows.push((point, class));
            }
        }
    }
    shuffle_rows(&mut train_rows, &mut rng);
    shuffle_rows(&mut test_rows, &mut rng);

    let number = |prefix: &str, rows: Vec<(Vec<f64>, usize)>| -> Vec<Example> {
        rows.into_iter()
            .enumerate()
            .map(|(i, (features, label))| Example { id: format!("{prefix}-{i:05}"), features, label })
            .collect()
    };
    Ok(Dataset {
        name: format!("blobs-c{}-d{}-s{}", cfg.num_classes, cfg.dim, cfg.seed),
        train: number("train", train_rows),
        test: number("test", test_rows),
        dim: cfg.dim,
        num_classes: cfg.num_classes,
    })
}

fn shuffle_rows(rows: &mut [(Vec<f64>, usize)], rng: &mut ChaCha8Rng) {
    for i in (1..rows.len()).rev() {
        let j = rng.gen_range(0..=i);
        rows.swap(i, j);
    }
}

/// The CSV projection of an [`IterationRecord`] (selected ids are kept in
/// memory and the manifest, not the results file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_seed: u64,
    pub round: usize,
    pub labeled_count: usize,
    pub test_macro_f1: f64,
    pub acquisition_wall_ms: f64,
}

impl From<&IterationRecord> for ResultRow {
    fn from(r: &IterationRecord) -> Self {
        ResultRow {
            run_seed: r.run_seed,
            round: r.round,
            labeled_count: r.labeled_count,
            test_macro_f1: r.test_macro_f1,
            acquisition_wall_ms: r.acquisition_wall_ms,
        }
    }
}

/// Write iteration records as CSV, one row per record, atomically.
pub fn write_results(records: &[IterationRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for record in records {
        writer.serialize(ResultRow::from(record))?;
    }
    if records.is_empty() {
        // serde-driven headers only appear with at least one row
        writer.write_record(["run_seed", "round", "labeled_count", "test_macro_f1", "acquisition_wall_ms"])?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path.as_ref(), &bytes)?;
    Ok(())
}

/// Parse a results CSV back into rows.
pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

/// One line of the long-format strategy comparison emitted by the CLI's
/// `compare` command: per-strategy, per-round aggregates ready for any
/// plotting tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub round: usize,
    pub mean_f1: f64,
    pub sd_f1: f64,
}

/// Write comparison rows as CSV with header `strategy,round,mean_f1,sd_f1`.
pub fn write_comparison(rows: &[ComparisonRow], path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        writer.serialize(row)?;
    }
    if rows.is_empty() {
        writer.write_record(["strategy", "round", "mean_f1", "sd_f1"])?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path.as_ref(), &bytes)?;
    Ok(())
}

/// Parse a comparison CSV back into rows.
pub fn read_comparison(path: impl AsRef<Path>) -> Result<Vec<ComparisonRow>> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

/// Write to a sibling temp file, then rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = path.with_file_name(format!("{}.tmp", file_name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_blobs() -> BlobConfig {
        BlobConfig { per_class_count: 25, dim: 3, ..BlobConfig::default() }
    }

    #[test]
    fn dataset_roundtrip_is_identity() {
        let dataset = synthetic_blobs(&small_blobs()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blobs.jsonl");
        write_dataset(&dataset, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded.train, dataset.train);
        assert_eq!(loaded.test, dataset.test);
        assert_eq!(loaded.dim, dataset.dim);
        assert_eq!(loaded.num_classes, dataset.num_classes);
    }

    #[test]
    fn bad_label_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        fs::write(
            &path,
            concat!(
                "{\"id\":\"a\",\"features\":[1.0],\"label\":0,\"split\":\"train\"}\n",
                "{\"id\":\"b\",\"features\":[2.0],\"label\":-3,\"split\":\"train\"}\n",
            ),
        )
        .unwrap();
        let err = load_dataset(&path).unwrap_err();
        match err {
            Error::DatasetParse { line, ref message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("label"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn inconsistent_dimension_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        fs::write(
            &path,
            concat!(
                "{\"id\":\"a\",\"features\":[1.0,2.0],\"label\":0,\"split\":\"train\"}\n",
                "{\"id\":\"b\",\"features\":[2.0],\"label\":1,\"split\":\"test\"}\n",
            ),
        )
        .unwrap();
        match load_dataset(&path).unwrap_err() {
            Error::DatasetParse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn four_class_fixture_loads_with_inferred_c() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.jsonl");
        let mut content = String::new();
        for (i, label) in [0, 1, 2, 3, 0, 1, 2, 3].iter().enumerate() {
            content.push_str(&format!(
                "{{\"id\":\"r{i}\",\"features\":[{}.0,1.0],\"label\":{label},\"split\":\"train\"}}\n",
                i
            ));
        }
        fs::write(&path, content).unwrap();
        let dataset = load_dataset(&path).unwrap();
        assert_eq!(dataset.num_classes, 4);
        assert_eq!(dataset.train.len(), 8);
        assert!(dataset.test.is_empty());
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.jsonl");
        fs::write(
            &path,
            concat!(
                "{\"id\":\"a\",\"features\":[1.0],\"label\":0,\"split\":\"train\"}\n",
                "{\"id\":\"a\",\"features\":[2.0],\"label\":1,\"split\":\"train\"}\n",
            ),
        )
        .unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::DatasetParse { line: 2, .. })));
    }

    #[test]
    fn blobs_are_reproducible() {
        let cfg = small_blobs();
        assert_eq!(synthetic_blobs(&cfg).unwrap(), synthetic_blobs(&cfg).unwrap());
        let other = BlobConfig { seed: 1, ..cfg };
        assert_ne!(synthetic_blobs(&other).unwrap(), synthetic_blobs(&cfg).unwrap());
    }

    #[test]
    fn vanishing_noise_collapses_within_class_variance() {
        let cfg = BlobConfig { noise_sigma: 1e-9, ..small_blobs() };
        let dataset = synthetic_blobs(&cfg).unwrap();
        for class in 0..cfg.num_classes {
            let members: Vec<&Example> =
                dataset.train.iter().filter(|e| e.label == class).collect();
            let first = &members[0].features;
            for e in &members {
                let dist: f64 =
                    e.features.iter().zip(first).map(|(a, b)| (a - b) * (a - b)).sum();
                assert!(dist < 1e-12, "class {class} spread {dist}");
            }
        }
    }

    #[test]
    fn default_blobs_are_linearly_separable() {
        // full-training oracle: a plain linear head on the default config
        // must reach high test macro-F1
        let dataset = synthetic_blobs(&BlobConfig::default()).unwrap();
        let labeled: Vec<(Vec<f64>, usize)> =
            dataset.train.iter().map(|e| (e.features.clone(), e.label)).collect();
        let cfg = crate::model::ModelConfig::linear(dataset.dim, dataset.num_classes);
        let tcfg = crate::model::TrainConfig::default();
        let params = crate::model::train(&cfg, &tcfg, &labeled).unwrap();
        let f1 = crate::simulation::evaluate_on_test(&params, &dataset.test).unwrap();
        assert!(f1 >= 0.95, "linear full-training macro-F1 {f1}");
    }

    #[test]
    fn blobs_split_is_stratified_80_20() {
        let cfg = BlobConfig { per_class_count: 50, ..small_blobs() };
        let dataset = synthetic_blobs(&cfg).unwrap();
        for class in 0..cfg.num_classes {
            let in_train = dataset.train.iter().filter(|e| e.label == class).count();
            let in_test = dataset.test.iter().filter(|e| e.label == class).count();
            assert_eq!(in_train, 40);
            assert_eq!(in_test, 10);
        }
    }

    fn record(seed: u64, round: usize) -> IterationRecord {
        IterationRecord {
            run_seed: seed,
            round,
            labeled_count: round * 20,
            test_macro_f1: 0.5 + 0.01 * round as f64,
            acquisition_wall_ms: 1.25 * round as f64,
            selected_ids: vec![format!("train-{round:05}")],
        }
    }

    #[test]
    fn empty_results_write_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        write_results(&[], &path).unwrap();
        let content = fs::read_to_string(&path).unwrap();
        assert_eq!(content, "run_seed,round,labeled_count,test_macro_f1,acquisition_wall_ms\n");
    }

    #[test]
    fn comparison_roundtrip_losslessly() {
        let rows = vec![
            ComparisonRow { strategy: "vapal".into(), round: 1, mean_f1: 0.5, sd_f1: 0.01 },
            ComparisonRow { strategy: "rand".into(), round: 1, mean_f1: 0.45, sd_f1: 0.02 },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("compare.csv");
        write_comparison(&rows, &path).unwrap();
        let content = fs::read_to_string(&path).unwrap();
        assert!(content.starts_with("strategy,round,mean_f1,sd_f1\n"));
        assert_eq!(read_comparison(&path).unwrap(), rows);
    }

    #[test]
    fn results_roundtrip_losslessly() {
        let records: Vec<IterationRecord> =
            (0..5).flat_map(|s| (1..=10).map(move |r| record(s, r))).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        write_results(&records, &path).unwrap();

        let content = fs::read_to_string(&path).unwrap();
        assert_eq!(content.lines().count(), 51);
        assert!(!content.contains('\r'));

        let rows = read_results(&path).unwrap();
        assert_eq!(rows.len(), 50);
        for (row, rec) in rows.iter().zip(&records) {
            assert_eq!(row, &ResultRow::from(rec));
        }
    }
}
