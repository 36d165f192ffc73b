//! Per-image metric records and their mean / standard deviation summary.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::MAP_THRESHOLDS;

/// Metrics of one image. Absent metrics are skipped when aggregating.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ImageRecord {
    pub image_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pcc: Option<f64>,
    /// Precision at each of [`MAP_THRESHOLDS`], keyed by the formatted threshold.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precisions: Option<BTreeMap<String, f64>>,
}

impl ImageRecord {
    pub fn new(image_id: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            ..Default::default()
        }
    }

    pub fn with_precisions(mut self, precisions: &[f64; 10]) -> Self {
        self.precisions = Some(
            MAP_THRESHOLDS
                .iter()
                .zip(precisions)
                .map(|(t, &p)| (threshold_key(*t), p))
                .collect(),
        );
        self
    }

    /// Every present scalar metric, by aggregate name.
    fn values(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (name, value) in [("iou", self.iou), ("map", self.map), ("pcc", self.pcc)] {
            if let Some(v) = value {
                out.push((name.to_string(), v));
            }
        }
        if let Some(p) = &self.precisions {
            for (k, &v) in p {
                out.push((format!("precision@{k}"), v));
            }
        }
        out
    }
}

pub fn threshold_key(tau: f64) -> String {
    format!("{tau:.2}")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Summary {
            count: values.len(),
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub records: Vec<ImageRecord>,
    /// Metric name to summary, alphabetical.
    pub aggregate: BTreeMap<String, Summary>,
    /// Dataset-wide IoU from summed intersections and unions, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pooled_iou: Option<f64>,
}

/// Aggregates records into per-metric mean and population standard deviation.
pub fn summarize(records: Vec<ImageRecord>) -> Result<MetricsReport> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for record in &records {
        for (name, v) in record.values() {
            columns.entry(name).or_default().push(v);
        }
    }
    let aggregate = columns.into_iter().map(|(k, v)| (k, Summary::of(&v))).collect();
    Ok(MetricsReport {
        records,
        aggregate,
        pooled_iou: None,
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per image followed by `#mean`, `#std` and `#count` rows.
    pub fn to_csv(&self) -> Result<String> {
        let metrics: Vec<&String> = self.aggregate.keys().collect();
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["image_id".to_string()];
        header.extend(metrics.iter().map(|m| m.to_string()));
        writer.write_record(&header)?;

        for record in &self.records {
            let values: BTreeMap<String, f64> = record.values().into_iter().collect();
            let mut row = vec![record.image_id.clone()];
            row.extend(
                metrics
                    .iter()
                    .map(|m| values.get(*m).map(|v| v.to_string()).unwrap_or_default()),
            );
            writer.write_record(&row)?;
        }
        for (tag, pick) in [
            ("#mean", (|s: &Summary| s.mean.to_string()) as fn(&Summary) -> String),
            ("#std", |s: &Summary| s.std.to_string()),
            ("#count", |s: &Summary| s.count.to_string()),
        ] {
            let mut row = vec![tag.to_string()];
            row.extend(metrics.iter().map(|m| pick(&self.aggregate[*m])));
            writer.write_record(&row)?;
        }
        let bytes = writer.into_inner().map_err(|e| Error::Serialize(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serialize(e.to_string()))
    }
}
