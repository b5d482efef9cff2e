use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{MetricRecord, Split};

pub const CURVES_HEADER: &str = "epoch,split,loss,dice,iou,mean_iou,accuracy";

/// CSV text with rows ordered by epoch, then train before val.
pub fn format_curves(records: &[MetricRecord]) -> String {
    let mut rows: Vec<&MetricRecord> = records.iter().collect();
    rows.sort_by_key(|r| (r.epoch, r.split));
    let mut out = String::from(CURVES_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.epoch, r.split, r.loss, r.dice, r.iou, r.mean_iou, r.accuracy
        )
        .expect("writing to a string");
    }
    out
}

pub fn parse_curves(text: &str) -> Result<Vec<MetricRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CURVES_HEADER) {
        return Err(Error::Data(format!("curves file must start with {CURVES_HEADER:?}")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = |what: &str| Error::Data(format!("curves line {}: {what}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad("expected 7 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
            Ok(MetricRecord {
                epoch: f[0].parse().map_err(|_| bad("bad epoch"))?,
                split: match f[1] {
                    "train" => Split::Train,
                    "val" => Split::Val,
                    _ => return Err(bad("split must be train or val")),
                },
                loss: num(f[2])?,
                dice: num(f[3])?,
                iou: num(f[4])?,
                mean_iou: num(f[5])?,
                accuracy: num(f[6])?,
            })
        })
        .collect()
}

pub fn export_curves(path: impl AsRef<Path>, records: &[MetricRecord]) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("csv.tmp");
    std::fs::write(&tmp, format_curves(records)).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
