//! Per-channel parameter table: a `channel` column, then one column per
//! (parameter, regime) named like `delta_1`, grouped by parameter.
//! Values are written as the shortest decimal that round-trips as `f32`.

use std::path::Path;

use crate::compressors::{CompressorState, ParamName};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamColumn {
    pub name: ParamName,
    pub regime: usize,
}

impl ParamColumn {
    pub fn header(&self) -> String {
        format!("{}_{}", self.name.as_str(), self.regime)
    }

    fn parse(s: &str) -> Option<Self> {
        let (name, regime) = s.rsplit_once('_')?;
        Some(Self {
            name: name.parse().ok()?,
            regime: regime.parse().ok()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTable {
    pub columns: Vec<ParamColumn>,
    pub channels: Vec<usize>,
    /// `rows[i][j]` is column `j` at `channels[i]`.
    pub rows: Vec<Vec<f32>>,
}

impl ParamTable {
    /// Static states yield a single row for channel 0.
    pub fn from_state(state: &CompressorState) -> Self {
        let names = state.kind().param_names();
        let columns: Vec<ParamColumn> = names
            .iter()
            .flat_map(|&name| (0..state.n_regimes()).map(move |regime| ParamColumn { name, regime }))
            .collect();
        let len = state.mode().param_len(state.n_channels());
        let rows = (0..len)
            .map(|f| {
                columns
                    .iter()
                    .map(|c| state.param(c.regime, c.name).expect("column from state").as_slice()[f] as f32)
                    .collect()
            })
            .collect();
        Self {
            columns,
            channels: (0..len).collect(),
            rows,
        }
    }

    pub fn column(&self, name: ParamName, regime: usize) -> Option<Vec<f32>> {
        let j = self
            .columns
            .iter()
            .position(|c| c.name == name && c.regime == regime)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = std::iter::once("channel".to_string()).chain(self.columns.iter().map(ParamColumn::header));
        w.write_record(header).expect("in-memory write");
        for (ch, row) in self.channels.iter().zip(&self.rows) {
            let rec = std::iter::once(ch.to_string()).chain(row.iter().map(|v| v.to_string()));
            w.write_record(rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let parse_err = |line: usize, reason: String| Error::Parse { line, reason };
        let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        if header.get(0) != Some("channel") {
            return Err(parse_err(1, "first column must be `channel`".into()));
        }
        let columns = header
            .iter()
            .skip(1)
            .map(|h| ParamColumn::parse(h).ok_or_else(|| parse_err(1, format!("bad column `{h}`"))))
            .collect::<Result<Vec<_>>>()?;
        let mut channels = Vec::new();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
            let ch = rec[0]
                .parse()
                .map_err(|_| parse_err(line, format!("bad channel `{}`", &rec[0])))?;
            let row = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f32>().map_err(|_| parse_err(line, format!("bad value `{v}`"))))
                .collect::<Result<Vec<_>>>()?;
            channels.push(ch);
            rows.push(row);
        }
        Ok(Self {
            columns,
            channels,
            rows,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
