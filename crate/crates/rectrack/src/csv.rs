//! Loss-log and track CSVs.

use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::Path;

use rectrack_core::trainer::IterationRecord;
use rectrack_core::BoundingBox;

use crate::error::{Error, Result};

pub const LOSS_HEADER: &str = "iteration,stage,unroll,batch,p_self,lr,loss";
pub const TRACK_HEADER: &str = "frame_index,x1,y1,x2,y2";

pub fn loss_row(r: &IterationRecord) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.iteration, r.stage_index, r.stage.unroll, r.stage.batch, r.stage.p_self, r.lr, r.loss
    )
}

/// Append-only loss log; the header is written only to a new or empty file.
pub struct LossLog {
    file: File,
    path: std::path::PathBuf,
}

impl LossLog {
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
        let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        if len == 0 {
            writeln!(file, "{LOSS_HEADER}").map_err(|e| Error::io(path, e))?;
        }
        Ok(Self { file, path: path.to_owned() })
    }

    pub fn append(&mut self, r: &IterationRecord) -> Result<()> {
        writeln!(self.file, "{}", loss_row(r)).map_err(|e| Error::io(&self.path, e))
    }
}

/// Rows for frames `first_index, first_index + 1, ...`.
pub fn track_csv(first_index: usize, boxes: &[BoundingBox]) -> String {
    let mut s = format!("{TRACK_HEADER}\n");
    for (i, b) in boxes.iter().enumerate() {
        let _ = writeln!(s, "{},{},{},{},{}", first_index + i, b.x1, b.y1, b.x2, b.y2);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rectrack_core::trainer::LADDER;

    #[test]
    fn rows() {
        let r = IterationRecord { iteration: 3, stage_index: 1, stage: LADDER[1], lr: 0.001, loss: 0.5 };
        assert_eq!(loss_row(&r), "3,1,4,32,0.25,0.001,0.5");
        let b = BoundingBox::new(1.0, 2.5, 3.0, 4.0).unwrap();
        assert_eq!(track_csv(1, &[b]), "frame_index,x1,y1,x2,y2\n1,1,2.5,3,4\n");
    }
}
