//! Residual reports and deterministic JSON output.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};

/// Summary statistics for one named residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStat {
    pub max: f64,
    pub mean: f64,
    pub samples: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// `f64::max` that keeps NaN, so a failed evaluation shows up in the maximum.
pub fn max_or_nan(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

impl ResidualStat {
    pub fn from_values(values: &[f64], tolerance: f64) -> Self {
        let max = values.iter().copied().fold(0.0, max_or_nan);
        let mean = if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        let finite = values.iter().all(|v| v.is_finite());
        ResidualStat {
            max,
            mean,
            samples: values.len(),
            tolerance,
            pass: finite && max < tolerance,
        }
    }

    /// Combine two summaries of the same residual (max of maxima, pooled mean).
    pub fn merge(&self, other: &ResidualStat) -> ResidualStat {
        let samples = self.samples + other.samples;
        let mean = if samples == 0 {
            0.0
        } else {
            (self.mean * self.samples as f64 + other.mean * other.samples as f64) / samples as f64
        };
        let tolerance = self.tolerance.min(other.tolerance);
        let max = max_or_nan(self.max, other.max);
        ResidualStat {
            max,
            mean,
            samples,
            tolerance,
            pass: self.pass && other.pass && max < tolerance,
        }
    }
}

/// Named residual → statistics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residuals: BTreeMap<String, ResidualStat>,
}

impl ResidualReport {
    pub fn insert(&mut self, name: impl Into<String>, stat: ResidualStat) {
        self.residuals.insert(name.into(), stat);
    }

    pub fn get(&self, name: &str) -> Option<&ResidualStat> {
        self.residuals.get(name)
    }

    pub fn all_pass(&self) -> bool {
        self.residuals.values().all(|s| s.pass)
    }

    pub fn merge(&self, other: &ResidualReport) -> ResidualReport {
        let mut out = self.clone();
        for (k, v) in &other.residuals {
            let merged = match out.residuals.get(k) {
                Some(existing) => existing.merge(v),
                None => v.clone(),
            };
            out.residuals.insert(k.clone(), merged);
        }
        out
    }
}

/// JSON formatter that prints every float with 17 significant digits.
#[derive(Default)]
pub struct FixedPrecisionFormatter {
    pretty: serde_json::ser::PrettyFormatter<'static>,
}

impl serde_json::ser::Formatter for FixedPrecisionFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_object_key(w, first)
    }
    fn end_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object_key(w)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object_value(w)
    }
}

/// Serialize with [`FixedPrecisionFormatter`]; identical inputs give
/// byte-identical output.
pub fn to_json_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedPrecisionFormatter::default());
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_and_merge() {
        let a = ResidualStat::from_values(&[1e-9, 3e-9], 1e-8);
        assert!(a.pass);
        assert_eq!(a.samples, 2);
        let b = ResidualStat::from_values(&[2e-8], 1e-8);
        assert!(!b.pass);
        let m = a.merge(&b);
        assert_eq!(m.samples, 3);
        assert_eq!(m.max, 2e-8);
        assert!(!m.pass);
        assert!((m.mean - (4e-9 + 2e-8) / 3.0).abs() < 1e-20);
        assert!(!ResidualStat::from_values(&[f64::NAN], 1.0).pass);
    }

    #[test]
    fn fixed_precision_output() {
        let mut r = ResidualReport::default();
        r.insert("leibniz", ResidualStat::from_values(&[0.1], 1.0));
        let text = to_json_string(&r).unwrap();
        assert!(text.contains("1.0000000000000001e-1"), "{text}");
        assert_eq!(text, to_json_string(&r).unwrap());
        let back: ResidualReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
