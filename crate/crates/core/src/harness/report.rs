use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    read_text, CellRecord, EmbeddingRecord, ExperimentMode, HarnessError, RankingRecord, RunManifest,
};
use crate::json::{from_jsonl, to_canonical_string};
use crate::metrics::{
    distinct_k, histogram_csv, inter_from_vectors, intra_from_vectors, novelty_insight_score, pca_project,
    projection_csv, similarity_csv, EmbeddingEquivalence, Histogram, MetricsConfig, SimilarityMatrix,
};
use crate::persistence::{self, atomic_write};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub total: usize,
    pub ok: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraSummary {
    pub pairs: u64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Histogram,
    pub histogram_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub samples: usize,
    pub distinct_k: usize,
    /// Absent with fewer than two samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intra: Option<IntraSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSummary {
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptReport {
    pub modes: BTreeMap<String, ModeReport>,
    /// Mode-by-mode similarity; absent with fewer than two modes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inter: Option<SimilarityMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inter_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectionSummary>,
    /// Measures that could not be computed, with the reason.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub name: String,
    pub configs_digest: String,
    pub complete: bool,
    pub cells: CellCounts,
    pub metrics: MetricsConfig,
    pub prompts: BTreeMap<String, PromptReport>,
    /// Per mode; present only when ranking outcomes exist.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nis: Option<BTreeMap<String, f64>>,
    /// CSV files keyed by path relative to the manifest's directory.
    #[serde(skip)]
    pub csv: BTreeMap<String, String>,
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn load_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    from_jsonl(&read_text(path)?).map_err(|e| HarnessError::Parse {
        path: path.to_owned(),
        detail: e.to_string(),
    })
}

fn summarize(m: &SimilarityMatrix, hist: Histogram, histogram_file: String) -> IntraSummary {
    let upper: Vec<f64> = (0..m.values.len())
        .flat_map(|i| m.values[i][i + 1..].to_vec())
        .collect();
    let mean = upper.iter().sum::<f64>() / upper.len() as f64;
    IntraSummary {
        pairs: upper.len() as u64,
        mean,
        min: upper.iter().copied().fold(f64::INFINITY, f64::min),
        max: upper.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        histogram: hist,
        histogram_file,
    }
}

struct Sample<'a> {
    text: &'a str,
    vector: &'a [f64],
}

fn prompt_report(
    pid: &str,
    modes: &[ExperimentMode],
    samples: &BTreeMap<ExperimentMode, Vec<Sample<'_>>>,
    cfg: &MetricsConfig,
    csv: &mut BTreeMap<String, String>,
) -> Result<PromptReport, HarnessError> {
    let stem = file_stem(pid);
    let mut out = PromptReport {
        modes: BTreeMap::new(),
        inter: None,
        inter_file: None,
        projection: None,
        notes: Vec::new(),
    };
    let mut present: Vec<(ExperimentMode, Vec<Vec<f64>>)> = Vec::new();
    for &mode in modes {
        let Some(set) = samples.get(&mode).filter(|s| !s.is_empty()) else {
            out.notes.push(format!("{mode}: no completed samples"));
            continue;
        };
        let vectors: Vec<Vec<f64>> = set.iter().map(|s| s.vector.to_vec()).collect();
        let texts: Vec<&str> = set.iter().map(|s| s.text).collect();
        let eq = EmbeddingEquivalence::from_vectors(
            cfg.equivalence_threshold,
            set.iter().map(|s| (s.text.to_owned(), s.vector.to_vec())),
        )?;
        let distinct = distinct_k(&texts, |a, b| eq.equivalent(a, b));
        let intra = if set.len() >= 2 {
            let labels = (0..set.len()).map(|i| format!("{mode}#{i}")).collect();
            let (m, hist) = intra_from_vectors(labels, &vectors)?;
            let name = format!("report/{stem}.{mode}.histogram.csv");
            csv.insert(name.clone(), histogram_csv(&hist)?);
            Some(summarize(&m, hist, name))
        } else {
            None
        };
        out.modes.insert(
            mode.as_str().to_owned(),
            ModeReport {
                samples: set.len(),
                distinct_k: distinct,
                intra,
            },
        );
        present.push((mode, vectors));
    }

    if present.len() >= 2 {
        let labels = present.iter().map(|(m, _)| m.as_str().to_owned()).collect();
        let sets: Vec<Vec<Vec<f64>>> = present.iter().map(|(_, v)| v.clone()).collect();
        let m = inter_from_vectors(labels, &sets, cfg.inter_aggregation)?;
        let name = format!("report/{stem}.inter.csv");
        csv.insert(name.clone(), similarity_csv(&m)?);
        out.inter = Some(m);
        out.inter_file = Some(name);
    }

    let mut labels = Vec::new();
    let mut all = Vec::new();
    for (mode, vectors) in &present {
        for (i, v) in vectors.iter().enumerate() {
            labels.push(format!("{mode}#{i}"));
            all.push(v.clone());
        }
    }
    let dim = all.first().map_or(0, Vec::len);
    match pca_project(&all, cfg.pca_dims.min(dim.max(1))) {
        Ok(proj) => {
            let name = format!("report/{stem}.projection.csv");
            csv.insert(name.clone(), projection_csv(&proj, &labels)?);
            out.projection = Some(ProjectionSummary {
                explained_variance: proj.explained_variance,
                total_variance: proj.total_variance,
                file: name,
            });
        }
        Err(e) => out.notes.push(format!("projection: {e}")),
    }
    Ok(out)
}

/// Compute the report from the artifacts a manifest points at. Reads files
/// only; calls no provider.
pub fn build_report(manifest_path: &Path) -> Result<Report, HarnessError> {
    let manifest = RunManifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let spec = &manifest.spec;
    spec.metrics.validate()?;

    let mut missing = Vec::new();
    let mut locate = |key: &str| -> Option<PathBuf> {
        match manifest.artifacts.get(key).map(|rel| dir.join(rel)) {
            Some(p) if p.is_file() => Some(p),
            Some(p) => {
                missing.push(p.display().to_string());
                None
            }
            None => {
                missing.push(format!("{key} (not in manifest)"));
                None
            }
        }
    };
    let records_path = locate("records");
    let embeddings_path = locate("embeddings");
    let rankings_path = if manifest.artifacts.contains_key("rankings") {
        locate("rankings")
    } else {
        None
    };
    let (Some(records_path), Some(embeddings_path)) = (records_path, embeddings_path) else {
        return Err(HarnessError::MissingArtifacts(missing));
    };
    if !missing.is_empty() {
        return Err(HarnessError::MissingArtifacts(missing));
    }
    let records: Vec<CellRecord> = load_jsonl(&records_path)?;
    let embeddings: Vec<EmbeddingRecord> = load_jsonl(&embeddings_path)?;
    let rankings: Vec<RankingRecord> = match &rankings_path {
        Some(p) => load_jsonl(p)?,
        None => Vec::new(),
    };

    let by_key: BTreeMap<(&str, ExperimentMode, usize), &EmbeddingRecord> = embeddings
        .iter()
        .map(|e| ((e.prompt_id.as_str(), e.mode, e.sample_index), e))
        .collect();
    let mut grouped: BTreeMap<&str, BTreeMap<ExperimentMode, Vec<Sample<'_>>>> = BTreeMap::new();
    for r in &records {
        match by_key.get(&(r.prompt_id.as_str(), r.mode, r.sample_index)) {
            Some(e) => grouped
                .entry(r.prompt_id.as_str())
                .or_default()
                .entry(r.mode)
                .or_default()
                .push(Sample {
                    text: &r.record.output,
                    vector: &e.values,
                }),
            None => missing.push(format!(
                "embedding for {}/{}/{}",
                r.prompt_id, r.mode, r.sample_index
            )),
        }
    }
    if !missing.is_empty() {
        return Err(HarnessError::MissingArtifacts(missing));
    }

    let mut csv = BTreeMap::new();
    let mut prompts = BTreeMap::new();
    let empty = BTreeMap::new();
    for p in &spec.prompts {
        let samples = grouped.get(p.id.as_str()).unwrap_or(&empty);
        prompts.insert(
            p.id.clone(),
            prompt_report(&p.id, &spec.modes, samples, &spec.metrics, &mut csv)?,
        );
    }

    let nis = if rankings.is_empty() {
        None
    } else {
        let mut per_mode: BTreeMap<String, Vec<_>> = BTreeMap::new();
        for r in rankings {
            per_mode
                .entry(r.mode.as_str().to_owned())
                .or_default()
                .push(r.outcome);
        }
        let mut out = BTreeMap::new();
        for (mode, outcomes) in per_mode {
            out.insert(mode, novelty_insight_score(&outcomes)?);
        }
        Some(out)
    };

    let ok = manifest.cells.iter().filter(|c| c.ok()).count();
    Ok(Report {
        schema: persistence::SCHEMA_REPORT.to_owned(),
        name: manifest.name.clone(),
        configs_digest: manifest.configs_digest.clone(),
        complete: manifest.complete,
        cells: CellCounts {
            total: manifest.cells.len(),
            ok,
            failed: manifest.cells.len() - ok,
        },
        metrics: spec.metrics.clone(),
        prompts,
        nis,
        csv,
    })
}

/// Build the report and write `report.json` plus its CSV files next to the
/// manifest.
pub fn write_report(manifest_path: &Path) -> Result<Report, HarnessError> {
    let report = build_report(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    for (rel, body) in &report.csv {
        atomic_write(&dir.join(rel), body.as_bytes())?;
    }
    atomic_write(&dir.join("report.json"), to_canonical_string(&report).as_bytes())?;
    Ok(report)
}
