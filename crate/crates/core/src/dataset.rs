//! Geo-tagged labeled samples and the CSV dataset format
//! (`id,x,y,f0..f{D-1},label`, UTF-8, LF line endings).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SvannError};
use crate::geom::GeoPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub id: u64,
    pub loc: GeoPoint,
    pub features: Vec<f64>,
    pub label: usize,
}

/// A non-empty collection of samples sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<LabeledSample>,
    feature_dim: usize,
}

impl Dataset {
    pub fn new(samples: Vec<LabeledSample>) -> Result<Self> {
        let first = samples.first().ok_or_else(|| SvannError::InvalidInput("dataset is empty".into()))?;
        let feature_dim = first.features.len();
        for s in &samples {
            if s.features.len() != feature_dim {
                return Err(SvannError::InvalidInput(format!("sample {} has {} features, expected {feature_dim}", s.id, s.features.len())));
            }
            s.loc.check_finite()?;
            if !s.features.iter().all(|v| v.is_finite()) {
                return Err(SvannError::InvalidInput(format!("sample {} has a non-finite feature", s.id)));
            }
        }
        Ok(Dataset { samples, feature_dim })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// One more than the largest label present.
    pub fn class_count(&self) -> usize {
        self.samples.iter().map(|s| s.label).max().map_or(0, |m| m + 1)
    }

    /// Arithmetic mean of the sample locations.
    pub fn centroid(&self) -> GeoPoint {
        let n = self.samples.len() as f64;
        let (sx, sy) = self.samples.iter().fold((0.0, 0.0), |(sx, sy), s| (sx + s.loc.x, sy + s.loc.y));
        GeoPoint { x: sx / n, y: sy / n }
    }

    /// The samples whose predicate holds, in dataset order. `None` if nothing matches.
    pub fn filter(&self, mut keep: impl FnMut(&LabeledSample) -> bool) -> Option<Dataset> {
        let samples: Vec<LabeledSample> = self.samples.iter().filter(|s| keep(s)).cloned().collect();
        if samples.is_empty() {
            None
        } else {
            Some(Dataset { samples, feature_dim: self.feature_dim })
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let mut header = vec!["id".to_string(), "x".into(), "y".into()];
        header.extend((0..self.feature_dim).map(|i| format!("f{i}")));
        header.push("label".into());
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row = vec![s.id.to_string(), s.loc.x.to_string(), s.loc.y.to_string()];
            row.extend(s.features.iter().map(|f| f.to_string()));
            row.push(s.label.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| SvannError::io("<csv output>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = r.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let dim = cols.len().checked_sub(4).ok_or_else(|| SvannError::Data("dataset header must be id,x,y,f0..,label".into()))?;
        let expected: Vec<String> = ["id", "x", "y"]
            .iter()
            .map(|s| s.to_string())
            .chain((0..dim).map(|i| format!("f{i}")))
            .chain(std::iter::once("label".to_string()))
            .collect();
        if cols != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(SvannError::Data(format!("unexpected dataset header {:?}, expected {:?}", cols, expected)));
        }
        let parse_f = |s: &str, line: u64| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| SvannError::Data(format!("line {line}: cannot parse number {s:?}")))
        };
        let mut samples = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i as u64 + 2;
            let id = rec[0].trim().parse::<u64>().map_err(|_| SvannError::Data(format!("line {line}: bad id {:?}", &rec[0])))?;
            let x = parse_f(&rec[1], line)?;
            let y = parse_f(&rec[2], line)?;
            let features = (0..dim).map(|j| parse_f(&rec[3 + j], line)).collect::<Result<Vec<f64>>>()?;
            let label = rec[3 + dim]
                .trim()
                .parse::<usize>()
                .map_err(|_| SvannError::Data(format!("line {line}: bad label {:?}", &rec[3 + dim])))?;
            samples.push(LabeledSample { id, loc: GeoPoint { x, y }, features, label });
        }
        Dataset::new(samples)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| SvannError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| SvannError::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| SvannError::Data(e.to_string()))
    }
}
