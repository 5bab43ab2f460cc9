//! Flat-file artifact formats shared by the pipeline subcommands: JSON-lines
//! jobs, CSV tables with pinned column orders, JSON documents, and run
//! manifests with content hashes.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::encoder::Embedding;
use crate::eval::{ClusterPrediction, ErrorHistogram};
use crate::features::{GraphFeatureVector, FEATURE_NAMES};
use crate::graph::JobGraph;
use crate::synth::SynthLabel;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

impl ArtifactError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        ArtifactError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn format(path: &Path, message: impl Into<String>) -> Self {
        ArtifactError::Format {
            path: path.display().to_string(),
            message: message.into(),
        }
    }
}

pub fn sha256_hex_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_hex_file(path: &Path) -> Result<String, ArtifactError> {
    let mut file = fs::File::open(path).map_err(|e| ArtifactError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf).map_err(|e| ArtifactError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| ArtifactError::format(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| ArtifactError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ArtifactError> {
    let text = fs::read_to_string(path).map_err(|e| ArtifactError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ArtifactError::format(path, e.to_string()))
}

/// One JSON object per line, one job per line.
pub fn write_jobs(path: &Path, jobs: &[JobGraph]) -> Result<(), ArtifactError> {
    let mut out = String::new();
    for job in jobs {
        out.push_str(
            &serde_json::to_string(job).map_err(|e| ArtifactError::format(path, e.to_string()))?,
        );
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| ArtifactError::io(path, e))
}

pub fn read_jobs(path: &Path) -> Result<Vec<JobGraph>, ArtifactError> {
    let file = fs::File::open(path).map_err(|e| ArtifactError::io(path, e))?;
    let mut jobs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ArtifactError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let job: JobGraph = serde_json::from_str(&line)
            .map_err(|e| ArtifactError::format(path, format!("line {}: {}", i + 1, e)))?;
        jobs.push(job);
    }
    Ok(jobs)
}

pub fn write_ground_truth(path: &Path, labels: &[SynthLabel]) -> Result<(), ArtifactError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    writer
        .write_record(["job_name", "family"])
        .map_err(|e| csv_err(path, e))?;
    for label in labels {
        writer
            .write_record([label.job_name.as_str(), &label.family.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| ArtifactError::io(path, e))
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<SynthLabel>, ArtifactError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != 2 {
            return Err(ArtifactError::format(path, "expected 2 columns"));
        }
        labels.push(SynthLabel {
            job_name: record[0].to_string(),
            family: record[1]
                .parse()
                .map_err(|_| ArtifactError::format(path, format!("bad family {:?}", &record[1])))?,
        });
    }
    Ok(labels)
}

fn csv_err(path: &Path, e: csv::Error) -> ArtifactError {
    ArtifactError::format(path, e.to_string())
}

/// Fixed column order: the 20 feature names, then runtime_s, then job_name.
pub fn write_features(path: &Path, rows: &[GraphFeatureVector]) -> Result<(), ArtifactError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
    header.push("runtime_s");
    header.push("job_name");
    writer.write_record(&header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        let mut record: Vec<String> = row.values.iter().map(|v| v.to_string()).collect();
        record.push(row.runtime_s.to_string());
        record.push(row.job_name.clone());
        writer.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| ArtifactError::io(path, e))
}

pub fn read_features(path: &Path) -> Result<Vec<GraphFeatureVector>, ArtifactError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let n = FEATURE_NAMES.len();
    if header.len() != n + 2
        || header.iter().take(n).ne(FEATURE_NAMES.iter().copied())
        || &header[n] != "runtime_s"
        || &header[n + 1] != "job_name"
    {
        return Err(ArtifactError::format(path, "unexpected feature header"));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != n + 2 {
            return Err(ArtifactError::format(path, "wrong column count"));
        }
        let mut values = [0.0; 20];
        for (i, v) in values.iter_mut().enumerate() {
            *v = record[i]
                .parse()
                .map_err(|_| ArtifactError::format(path, format!("bad number {:?}", &record[i])))?;
        }
        rows.push(GraphFeatureVector {
            values,
            runtime_s: record[n].parse().map_err(|_| {
                ArtifactError::format(path, format!("bad runtime {:?}", &record[n]))
            })?,
            job_name: record[n + 1].to_string(),
        });
    }
    Ok(rows)
}

/// job_name plus one column per embedding dimension (e0, e1, ...).
pub fn write_embeddings(path: &Path, embeddings: &[Embedding]) -> Result<(), ArtifactError> {
    let dim = embeddings.first().map_or(0, |e| e.g.len());
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["job_name".to_string()];
    header.extend((0..dim).map(|i| format!("e{i}")));
    writer.write_record(&header).map_err(|e| csv_err(path, e))?;
    for emb in embeddings {
        let mut record = vec![emb.job_name.clone()];
        record.extend(emb.g.iter().map(|v| v.to_string()));
        writer.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| ArtifactError::io(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<Vec<Embedding>, ArtifactError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.is_empty() {
            return Err(ArtifactError::format(path, "empty row"));
        }
        let mut g = Vec::with_capacity(record.len() - 1);
        for field in record.iter().skip(1) {
            g.push(field.parse().map_err(|_| {
                ArtifactError::format(path, format!("bad number {field:?}"))
            })?);
        }
        rows.push(Embedding {
            job_name: record[0].to_string(),
            g,
        });
    }
    Ok(rows)
}

pub fn write_clustering(
    path: &Path,
    names: &[String],
    labels: &[i64],
) -> Result<(), ArtifactError> {
    assert_eq!(names.len(), labels.len());
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    writer
        .write_record(["job_name", "label"])
        .map_err(|e| csv_err(path, e))?;
    for (name, label) in names.iter().zip(labels) {
        writer
            .write_record([name.as_str(), &label.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| ArtifactError::io(path, e))
}

pub fn read_clustering(path: &Path) -> Result<(Vec<String>, Vec<i64>), ArtifactError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut names = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != 2 {
            return Err(ArtifactError::format(path, "expected 2 columns"));
        }
        names.push(record[0].to_string());
        labels.push(record[1].parse().map_err(|_| {
            ArtifactError::format(path, format!("bad label {:?}", &record[1]))
        })?);
    }
    Ok((names, labels))
}

pub fn write_predictions(
    path: &Path,
    predictions: &[ClusterPrediction],
) -> Result<(), ArtifactError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    writer
        .write_record([
            "cluster_id",
            "target_job",
            "predicted_runtime_s",
            "actual_runtime_s",
            "signed_error",
        ])
        .map_err(|e| csv_err(path, e))?;
    for p in predictions {
        writer
            .write_record([
                p.cluster_id.to_string(),
                p.target_job.clone(),
                p.predicted_runtime_s.to_string(),
                p.actual_runtime_s.to_string(),
                p.signed_error().to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| ArtifactError::io(path, e))
}

/// Rows: underflow, each bin with its bounds, overflow.
pub fn write_histogram(path: &Path, histogram: &ErrorHistogram) -> Result<(), ArtifactError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    writer
        .write_record(["bin", "lo", "hi", "count"])
        .map_err(|e| csv_err(path, e))?;
    writer
        .write_record([
            "underflow".to_string(),
            String::new(),
            histogram.lo.to_string(),
            histogram.underflow.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    for (i, &count) in histogram.counts.iter().enumerate() {
        let (lo, hi) = histogram.bin_range(i);
        writer
            .write_record([
                format!("bin_{i}"),
                lo.to_string(),
                hi.to_string(),
                count.to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
    }
    writer
        .write_record([
            "overflow".to_string(),
            histogram.hi.to_string(),
            String::new(),
            histogram.overflow.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    writer.flush().map_err(|e| ArtifactError::io(path, e))
}

/// Run manifest: what a subcommand read and wrote, with content hashes, so
/// a rerun can detect stale or mismatched artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub config_fingerprint: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn manifest_path(workdir: &Path, command: &str) -> std::path::PathBuf {
    workdir.join(format!("manifest_{command}.json"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::JobNode;

    fn sample_jobs() -> Vec<JobGraph> {
        vec![JobGraph {
            job_name: "j_1".into(),
            nodes: vec![
                JobNode {
                    task_id: 1,
                    features: [100.0, 0.5, 2.0],
                    start_time: 10,
                    end_time: 20,
                },
                JobNode {
                    task_id: 2,
                    features: [50.0, 0.25, 1.0],
                    start_time: 20,
                    end_time: 30,
                },
            ],
            edges: vec![(1, 2)],
        }]
    }

    #[test]
    fn jobs_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("jobs.jsonl");
        let jobs = sample_jobs();
        write_jobs(&path, &jobs).unwrap();
        assert_eq!(read_jobs(&path).unwrap(), jobs);
    }

    #[test]
    fn features_roundtrip_and_header_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        let rows = vec![GraphFeatureVector {
            job_name: "a".into(),
            values: [1.5; 20],
            runtime_s: 12.0,
        }];
        write_features(&path, &rows).unwrap();
        assert_eq!(read_features(&path).unwrap(), rows);
        std::fs::write(&path, "x,y\n1,2\n").unwrap();
        assert!(read_features(&path).is_err());
    }

    #[test]
    fn embeddings_roundtrip_preserves_full_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("embeddings.csv");
        let rows = vec![
            Embedding {
                job_name: "a".into(),
                g: vec![0.1 + 0.2, -1.0 / 3.0],
            },
            Embedding {
                job_name: "b".into(),
                g: vec![1e-300, 3.1622776601683794e-4],
            },
        ];
        write_embeddings(&path, &rows).unwrap();
        assert_eq!(read_embeddings(&path).unwrap(), rows);
    }

    #[test]
    fn clustering_and_ground_truth_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clusters.csv");
        let names = vec!["a".to_string(), "b".to_string()];
        let labels = vec![0, -1];
        write_clustering(&path, &names, &labels).unwrap();
        assert_eq!(read_clustering(&path).unwrap(), (names, labels));

        let gt = vec![
            SynthLabel {
                job_name: "a".into(),
                family: 3,
            },
            SynthLabel {
                job_name: "b".into(),
                family: -1,
            },
        ];
        let gt_path = dir.path().join("ground_truth.csv");
        write_ground_truth(&gt_path, &gt).unwrap();
        assert_eq!(read_ground_truth(&gt_path).unwrap(), gt);
    }

    #[test]
    fn histogram_rows_cover_under_bins_over() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hist.csv");
        let hist = crate::eval::error_histogram(&[-2000.0, 0.0, 10.0, 2000.0], 1000.0, -1000.0, 1000.0);
        write_histogram(&path, &hist).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 1 + hist.counts.len() + 1);
        assert!(lines[1].starts_with("underflow"));
        assert!(lines.last().unwrap().starts_with("overflow"));
    }

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_hex_bytes(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f");
        std::fs::write(&path, "abc").unwrap();
        assert_eq!(sha256_hex_file(&path).unwrap(), sha256_hex_bytes(b"abc"));
    }

    #[test]
    fn manifest_roundtrips_as_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = manifest_path(dir.path(), "features");
        let manifest = Manifest {
            command: "features".into(),
            tool_version: "0.1.0".into(),
            config_fingerprint: "f".repeat(64),
            inputs: [("jobs.jsonl".to_string(), "a".repeat(64))].into(),
            outputs: [("features.csv".to_string(), "b".repeat(64))].into(),
        };
        write_json(&path, &manifest).unwrap();
        assert_eq!(read_json::<Manifest>(&path).unwrap(), manifest);
    }
}
