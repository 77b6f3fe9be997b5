use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binned click times: bin `k` covers `[bin_start + k w, bin_start + (k+1) w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingHistogram {
    bin_start: f64,
    bin_width: f64,
    counts: Vec<u64>,
    total: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    time_ps: f64,
    count: u64,
}

impl TimingHistogram {
    pub fn new(bin_start: f64, bin_width: f64, counts: Vec<u64>) -> Result<Self> {
        if !bin_start.is_finite() {
            return Err(Error::InvalidArgument(format!("bin start must be finite, got {bin_start}")));
        }
        if !(bin_width.is_finite() && bin_width > 0.0) {
            return Err(Error::InvalidArgument(format!("bin width must be > 0, got {bin_width}")));
        }
        if counts.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "histogram needs at least 3 bins, got {}",
                counts.len()
            )));
        }
        let total = counts.iter().sum();
        Ok(TimingHistogram {
            bin_start,
            bin_width,
            counts,
            total,
        })
    }

    /// Histogram of `samples` with bins starting at the smallest sample.
    ///
    /// Trailing empty bins are appended when fewer than three bins would
    /// cover the samples.
    pub fn from_samples(samples: &[f64], bin_width: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("cannot histogram an empty sample".into()));
        }
        if !(bin_width.is_finite() && bin_width > 0.0) {
            return Err(Error::InvalidArgument(format!("bin width must be > 0, got {bin_width}")));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite sample {bad}")));
        }
        let (lo, hi) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let nbins = (((hi - lo) / bin_width).floor() as usize + 1).max(3);
        let mut counts = vec![0u64; nbins];
        for &x in samples {
            let k = (((x - lo) / bin_width).floor() as usize).min(nbins - 1);
            counts[k] += 1;
        }
        Self::new(lo, bin_width, counts)
    }

    pub fn bin_start(&self) -> f64 {
        self.bin_start
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Left edge of bin `k`; `edge(len())` is the right edge of the last bin.
    pub fn edge(&self, k: usize) -> f64 {
        self.bin_start + k as f64 * self.bin_width
    }

    pub fn center(&self, k: usize) -> f64 {
        self.bin_start + (k as f64 + 0.5) * self.bin_width
    }

    pub fn end(&self) -> f64 {
        self.edge(self.counts.len())
    }

    /// Same counts with every edge moved by `delta` picoseconds.
    pub fn shifted(&self, delta: f64) -> Self {
        TimingHistogram {
            bin_start: self.bin_start + delta,
            ..self.clone()
        }
    }

    /// Pads `before` and `after` empty bins.
    pub fn padded(&self, before: usize, after: usize) -> Self {
        let mut counts = vec![0; before];
        counts.extend_from_slice(&self.counts);
        counts.resize(counts.len() + after, 0);
        TimingHistogram {
            bin_start: self.bin_start - before as f64 * self.bin_width,
            counts,
            ..self.clone()
        }
    }

    /// Reads the `time_ps,count` CSV format. Edges must be uniform and
    /// increasing; errors carry the 1-based file line.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(csv_error)?.clone();
        if headers.iter().collect::<Vec<_>>() != ["time_ps", "count"] {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `time_ps,count`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut edges: Vec<f64> = Vec::new();
        let mut counts = Vec::new();
        let mut width = None;
        for rec in rdr.deserialize::<Row>() {
            let row = rec.map_err(csv_error)?;
            let line = counts.len() + 2;
            if !row.time_ps.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite bin edge {}", row.time_ps),
                });
            }
            if let Some(&prev) = edges.last() {
                let step = row.time_ps - prev;
                if step <= 0.0 {
                    return Err(Error::Parse {
                        line,
                        message: format!("bin edge {} does not increase (previous {prev})", row.time_ps),
                    });
                }
                match width {
                    None => width = Some(step),
                    Some(w) => {
                        if (step - w).abs() > 1e-6 * w {
                            let what = if step > w { "gap" } else { "non-uniform spacing" };
                            return Err(Error::Parse {
                                line,
                                message: format!("{what} before bin edge {}: step {step}, expected {w}", row.time_ps),
                            });
                        }
                    }
                }
            }
            edges.push(row.time_ps);
            counts.push(row.count);
        }
        if counts.len() < 3 {
            return Err(Error::Parse {
                line: counts.len() + 1,
                message: "histogram needs at least 3 rows".into(),
            });
        }
        // Mean spacing, so rounding in the file does not accumulate.
        let width = (edges[edges.len() - 1] - edges[0]) / (edges.len() - 1) as f64;
        Self::new(edges[0], width, counts)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for (k, &count) in self.counts.iter().enumerate() {
            wtr.serialize(Row {
                time_ps: self.edge(k),
                count,
            })
            .map_err(csv_error)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        csv::ErrorKind::Deserialize { err, .. } => Error::Parse {
            line,
            message: err.to_string(),
        },
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_samples_three_bins() {
        let h = TimingHistogram::from_samples(&[0.0, 10.0, 20.0], 10.0).unwrap();
        assert_eq!(h.counts(), &[1, 1, 1]);
        assert_eq!((h.bin_start(), h.end()), (0.0, 30.0));
        assert_eq!(h.total(), 3);
    }

    #[test]
    fn equal_samples_occupy_one_bin() {
        let h = TimingHistogram::from_samples(&[5.0; 40], 2.0).unwrap();
        assert_eq!(h.counts().iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.total(), 40);
        assert!(h.len() >= 3);
    }

    #[test]
    fn rejects_empty_and_bad_width() {
        assert!(TimingHistogram::from_samples(&[], 1.0).is_err());
        assert!(TimingHistogram::from_samples(&[1.0], 0.0).is_err());
        assert!(TimingHistogram::new(0.0, 1.0, vec![1, 2]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let h = TimingHistogram::new(-40.0, 20.0, vec![0, 3, 17, 5, 1]).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time_ps,count\n-40.0,0\n"));
        assert_eq!(TimingHistogram::read_csv(text.as_bytes()).unwrap(), h);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let gap = "time_ps,count\n0,1\n20,2\n60,3\n";
        match TimingHistogram::read_csv(gap.as_bytes()) {
            Err(Error::Parse { line: 4, message }) => assert!(message.contains("gap")),
            other => panic!("{other:?}"),
        }
        let back = "time_ps,count\n0,1\n20,2\n10,3\n";
        assert!(matches!(TimingHistogram::read_csv(back.as_bytes()), Err(Error::Parse { line: 4, .. })));
        let junk = "time_ps,count\n0,1\n20,abc\n40,3\n";
        assert!(matches!(TimingHistogram::read_csv(junk.as_bytes()), Err(Error::Parse { line: 3, .. })));
        let header = "t,c\n0,1\n";
        assert!(matches!(TimingHistogram::read_csv(header.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }
}
