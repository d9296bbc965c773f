//! Traffic accounting. Bits per state change and compression ratios count
//! payload bytes only; container headers are a fixed per-tensor cost and
//! are reported separately as `gross_bits`.

use std::io;

use serde::Serialize;

use crate::blob::CompressedBlob;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficSummary {
    pub total_values: u64,
    pub total_payload_bits: u64,
    /// Payload plus container header bits.
    pub gross_bits: u64,
    pub ratio: f64,
    pub bits_per_value: f64,
}

impl TrafficSummary {
    pub fn from_counts(total_values: u64, total_payload_bits: u64, gross_bits: u64) -> Result<Self> {
        if total_values == 0 {
            return Err(Error::Empty("traffic summary over zero values"));
        }
        let bits_per_value = total_payload_bits as f64 / total_values as f64;
        Ok(Self {
            total_values,
            total_payload_bits,
            gross_bits,
            ratio: 32.0 / bits_per_value,
            bits_per_value,
        })
    }
}

pub fn summarize<'a, I>(blobs: I) -> Result<TrafficSummary>
where
    I: IntoIterator<Item = &'a CompressedBlob>,
{
    let (mut values, mut bits, mut gross) = (0u64, 0u64, 0u64);
    for b in blobs {
        values += b.numel() as u64;
        bits += 8 * b.payload_len() as u64;
        gross += 8 * (b.payload_len() + b.header_len()) as u64;
    }
    if values == 0 {
        return Err(Error::Empty("no blobs to summarize"));
    }
    TrafficSummary::from_counts(values, bits, gross)
}

/// One simulator step. Serialized field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    /// Payload bytes pushed by all workers.
    pub push_bytes_total: u64,
    /// Payload bytes pulled, counted once per receiving worker.
    pub pull_bytes_total: u64,
    pub bits_per_value_push: f64,
    pub bits_per_value_pull: f64,
    pub loss: f64,
    /// Only present on evaluation steps.
    pub test_acc: Option<f64>,
    pub zero_frac: f64,
    #[serde(skip)]
    pub push_bytes_per_worker: Vec<u64>,
    /// Compressed-tensor values and payload bits behind the `bits_per_value` columns.
    #[serde(skip)]
    pub push_values: u64,
    #[serde(skip)]
    pub push_bits: u64,
    #[serde(skip)]
    pub pull_values: u64,
    #[serde(skip)]
    pub pull_bits: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub records: Vec<StepRecord>,
}

impl MetricsLog {
    pub fn push(&mut self, r: StepRecord) {
        self.records.push(r);
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.last().map(|r| r.loss)
    }

    pub fn final_test_acc(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.test_acc)
    }

    /// Value-weighted bits per state change over the whole run, for pushes.
    pub fn push_summary(&self) -> Result<TrafficSummary> {
        let values = self.records.iter().map(|r| r.push_values).sum();
        let bits: u64 = self.records.iter().map(|r| r.push_bits).sum();
        TrafficSummary::from_counts(values, bits, bits)
    }

    pub fn pull_summary(&self) -> Result<TrafficSummary> {
        let values = self.records.iter().map(|r| r.pull_values).sum();
        let bits: u64 = self.records.iter().map(|r| r.pull_bits).sum();
        TrafficSummary::from_counts(values, bits, bits)
    }

    /// Bits per state change over all compressed traffic on the wire:
    /// every worker's pushes plus the shared pull blob once per receiving
    /// worker.
    pub fn traffic_summary(&self, workers: usize) -> Result<TrafficSummary> {
        let w = workers as u64;
        let values = self.records.iter().map(|r| r.push_values + w * r.pull_values).sum();
        let bits: u64 = self.records.iter().map(|r| r.push_bits + w * r.pull_bits).sum();
        TrafficSummary::from_counts(values, bits, bits)
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(r).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("csv: {other:?}")),
    }
}
