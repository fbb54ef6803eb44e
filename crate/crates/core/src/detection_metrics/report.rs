use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const CSV_HEADER: &str = "sample_id,method,sinr_db,evm,ap_percent";

/// One scored sample. Metrics that are undefined for a sample are `None`
/// and serialize as empty CSV fields / JSON nulls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub sample_id: u64,
    pub method: String,
    pub sinr_db: Option<f64>,
    pub evm: Option<f64>,
    pub ap_percent: Option<f64>,
}

pub fn write_csv<W: Write>(records: &[MetricRecord], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    // serde would emit the same header; written explicitly so an empty report still has one.
    writer.write_record(CSV_HEADER.split(','))?;
    for r in records {
        writer.write_record([
            r.sample_id.to_string(),
            r.method.clone(),
            r.sinr_db.map(|v| v.to_string()).unwrap_or_default(),
            r.evm.map(|v| v.to_string()).unwrap_or_default(),
            r.ap_percent.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_jsonl<W: Write>(records: &[MetricRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
