use std::path::Path;

use super::{Histogram, MetricsError, PcaProjection, SimilarityMatrix, BIN_EDGES};
use crate::persistence::atomic_write;

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, MetricsError> {
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `label,pc1..pcd`, one row per sample.
pub fn projection_csv(proj: &PcaProjection, labels: &[String]) -> Result<String, MetricsError> {
    if labels.len() != proj.coordinates.len() {
        return Err(MetricsError::InvalidArgument(format!(
            "{} labels for {} samples",
            labels.len(),
            proj.coordinates.len()
        )));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let d = proj.components.len();
    let mut header = vec!["label".to_owned()];
    header.extend((1..=d).map(|i| format!("pc{i}")));
    w.write_record(&header)?;
    for (label, row) in labels.iter().zip(&proj.coordinates) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    finish(w)
}

pub fn emit_projection(proj: &PcaProjection, labels: &[String], path: &Path) -> Result<(), MetricsError> {
    let text = projection_csv(proj, labels)?;
    atomic_write(path, text.as_bytes())?;
    Ok(())
}

pub fn parse_projection_csv(text: &str) -> Result<Vec<(String, Vec<f64>)>, MetricsError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let label = rec.get(0).unwrap_or_default().to_owned();
        let coords = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| MetricsError::InvalidArgument(format!("`{v}`: {e}")))
            })
            .collect::<Result<_, _>>()?;
        out.push((label, coords));
    }
    Ok(out)
}

/// `bin_lo,bin_hi,count`.
pub fn histogram_csv(h: &Histogram) -> Result<String, MetricsError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bin_lo", "bin_hi", "count"])?;
    for (i, c) in h.counts.iter().enumerate() {
        w.write_record([
            format!("{:.1}", BIN_EDGES[i]),
            format!("{:.1}", BIN_EDGES[i + 1]),
            c.to_string(),
        ])?;
    }
    finish(w)
}

/// Square matrix with a header row and a label column.
pub fn similarity_csv(m: &SimilarityMatrix) -> Result<String, MetricsError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["label".to_owned()];
    header.extend(m.labels.iter().cloned());
    w.write_record(&header)?;
    for (label, row) in m.labels.iter().zip(&m.values) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    finish(w)
}
