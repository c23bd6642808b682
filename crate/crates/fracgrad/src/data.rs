//! Time-series loading, chronological splitting, min-max scaling, and
//! sliding-window batching.
//!
//! Ordering is chronological everywhere: splits are contiguous prefixes of
//! the series, scaling statistics come from the training range only, and a
//! window's target always starts strictly after its last input row, so no
//! future value leaks into an input.

use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// A multivariate series: T rows by F feature columns, one column singled
/// out as the regression label.
#[derive(Debug, Clone)]
pub struct TimeSeriesFrame {
    names: Vec<String>,
    values: Matrix,
    label_col: usize,
}

impl TimeSeriesFrame {
    pub fn new(names: Vec<String>, values: Matrix, label_col: usize) -> Result<Self> {
        if names.len() != values.cols() {
            return Err(Error::Config {
                message: format!(
                    "{} column names for {} columns",
                    names.len(),
                    values.cols()
                ),
            });
        }
        if label_col >= values.cols() {
            return Err(Error::IndexOutOfRange {
                what: "label column",
                index: label_col,
                bound: values.cols(),
            });
        }
        Ok(TimeSeriesFrame {
            names,
            values,
            label_col,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn label_col(&self) -> usize {
        self.label_col
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn features(&self) -> usize {
        self.values.cols()
    }
}

/// Min and max of one column over the training range; maps values to
/// [0, 1] on that range.
#[derive(Debug, Clone, Copy)]
pub struct ColumnScale {
    pub min: f64,
    pub max: f64,
}

impl ColumnScale {
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * (self.max - self.min) + self.min
    }
}

/// One supervised pair: a flattened input window (time-major, all features
/// per step) and the label column over the following horizon.
#[derive(Debug, Clone)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// The three split ranges plus the per-column scales used to normalize.
#[derive(Debug, Clone)]
pub struct WindowDataset {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
    pub scales: Vec<ColumnScale>,
    pub window: usize,
    pub horizon: usize,
    pub features: usize,
}

impl WindowDataset {
    /// Splits 7:2:1, fits min-max on the training range, windows each split.
    pub fn build(frame: &TimeSeriesFrame, window: usize, horizon: usize) -> Result<Self> {
        let (train_r, val_r, test_r) = split_7_2_1(frame)?;
        let (normalized, scales) = fit_apply_minmax(frame, train_r.clone())?;
        let mut sets = make_windows(
            &normalized,
            &[train_r, val_r, test_r],
            window,
            horizon,
        )?;
        let test = sets.pop().expect("three ranges in, three sets out");
        let val = sets.pop().expect("three ranges in, three sets out");
        let train = sets.pop().expect("three ranges in, three sets out");
        Ok(WindowDataset {
            train,
            val,
            test,
            scales,
            window,
            horizon,
            features: frame.features(),
        })
    }

    /// Width of the flattened input rows.
    pub fn input_dim(&self) -> usize {
        self.window * self.features
    }
}

/// Loads a headered CSV. If the first column of the first data row does not
/// parse as a number it is taken to be a date/timestamp column and skipped.
/// `label_column` names the column to forecast.
pub fn load_csv(path: &Path, label_column: &str) -> Result<TimeSeriesFrame> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config {
            message: format!("{display}: {e}"),
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Config {
            message: format!("{display}: {e}"),
        })?
        .iter()
        .map(str::to_string)
        .collect();

    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: display.clone(),
            row: i + 1,
            col: 0,
            message: e.to_string(),
        })?;
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                path: display.clone(),
                row: i + 1,
                col: rec.len(),
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::Config {
            message: format!("{display}: no data rows"),
        });
    }

    let skip = usize::from(records[0]
        .get(0)
        .map(|cell| cell.parse::<f64>().is_err())
        .unwrap_or(false));
    if headers.len() <= skip {
        return Err(Error::Config {
            message: format!("{display}: no numeric columns"),
        });
    }
    let names: Vec<String> = headers[skip..].to_vec();
    let label_col = names
        .iter()
        .position(|n| n == label_column)
        .ok_or_else(|| Error::MissingColumn {
            name: label_column.to_string(),
        })?;

    let cols = names.len();
    let mut data = Vec::with_capacity(records.len() * cols);
    for (i, rec) in records.iter().enumerate() {
        for (j, cell) in rec.iter().skip(skip).enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: display.clone(),
                row: i + 1,
                col: skip + j + 1,
                message: format!("{cell:?} is not a number"),
            })?;
            data.push(v);
        }
    }
    let values = Matrix::from_vec(records.len(), cols, data)?;
    TimeSeriesFrame::new(names, values, label_col)
}

/// Chronological 7:2:1 split: the first floor(0.7 T) rows train, the next
/// floor(0.2 T) validate, the remainder tests.
pub fn split_7_2_1(frame: &TimeSeriesFrame) -> Result<(Range<usize>, Range<usize>, Range<usize>)> {
    let t = frame.len();
    if t < 10 {
        return Err(Error::Config {
            message: format!("7:2:1 split needs at least 10 rows, got {t}"),
        });
    }
    let n_train = 7 * t / 10;
    let n_val = 2 * t / 10;
    Ok((
        0..n_train,
        n_train..n_train + n_val,
        n_train + n_val..t,
    ))
}

/// Fits per-column min and max on `train` rows only and rescales every row
/// of the frame with those statistics. A column that is constant on the
/// training range has no usable scale and is rejected.
pub fn fit_apply_minmax(
    frame: &TimeSeriesFrame,
    train: Range<usize>,
) -> Result<(TimeSeriesFrame, Vec<ColumnScale>)> {
    if train.is_empty() || train.end > frame.len() {
        return Err(Error::Config {
            message: format!(
                "training range {}..{} invalid for {} rows",
                train.start,
                train.end,
                frame.len()
            ),
        });
    }
    let values = frame.values();
    let mut scales = Vec::with_capacity(frame.features());
    for c in 0..frame.features() {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for r in train.clone() {
            let v = values.get(r, c);
            min = min.min(v);
            max = max.max(v);
        }
        if min == max {
            return Err(Error::DegenerateColumn {
                name: frame.names()[c].clone(),
            });
        }
        scales.push(ColumnScale { min, max });
    }
    let normalized = Matrix::from_fn(frame.len(), frame.features(), |r, c| {
        scales[c].apply(values.get(r, c))
    });
    let frame = TimeSeriesFrame::new(frame.names().to_vec(), normalized, frame.label_col())?;
    Ok((frame, scales))
}

/// Stride-1 sliding windows over each range. A position `t0` yields a
/// flattened input over rows `[t0, t0 + window)` and the label column over
/// rows `[t0 + window, t0 + window + horizon)`, so every range contributes
/// `len - window - horizon + 1` samples and targets never cross the range
/// boundary.
pub fn make_windows(
    frame: &TimeSeriesFrame,
    ranges: &[Range<usize>],
    window: usize,
    horizon: usize,
) -> Result<Vec<Vec<Sample>>> {
    if window == 0 || horizon == 0 {
        return Err(Error::Config {
            message: format!("window {window} and horizon {horizon} must both be positive"),
        });
    }
    let values = frame.values();
    let label = frame.label_col();
    let mut sets = Vec::with_capacity(ranges.len());
    for range in ranges {
        if range.end > frame.len() || range.len() < window + horizon {
            return Err(Error::Config {
                message: format!(
                    "range {}..{} too short for window {window} plus horizon {horizon}",
                    range.start, range.end
                ),
            });
        }
        let mut samples = Vec::with_capacity(range.len() - window - horizon + 1);
        for t0 in range.start..=range.end - window - horizon {
            let mut input = Vec::with_capacity(window * frame.features());
            for r in t0..t0 + window {
                for c in 0..frame.features() {
                    input.push(values.get(r, c));
                }
            }
            let target = (t0 + window..t0 + window + horizon)
                .map(|r| values.get(r, label))
                .collect();
            samples.push(Sample { input, target });
        }
        sets.push(samples);
    }
    Ok(sets)
}

/// Packs samples into `(input, target)` matrix pairs of at most
/// `batch_size` rows; the final short batch is kept. With `shuffle` the
/// order is a seeded Fisher-Yates permutation, otherwise split order.
pub fn batches(
    samples: &[Sample],
    batch_size: usize,
    seed: u64,
    shuffle: bool,
) -> Result<Vec<(Matrix, Matrix)>> {
    if batch_size == 0 {
        return Err(Error::Config {
            message: "batch size must be positive".into(),
        });
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
    }
    let mut out = Vec::new();
    for chunk in order.chunks(batch_size) {
        let rows = chunk.len();
        let in_dim = samples[chunk[0]].input.len();
        let out_dim = samples[chunk[0]].target.len();
        let mut x = Vec::with_capacity(rows * in_dim);
        let mut y = Vec::with_capacity(rows * out_dim);
        for &i in chunk {
            x.extend_from_slice(&samples[i].input);
            y.extend_from_slice(&samples[i].target);
        }
        out.push((
            Matrix::from_vec(rows, in_dim, x)?,
            Matrix::from_vec(rows, out_dim, y)?,
        ));
    }
    Ok(out)
}

/// Texture of a generated series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// Slow harmonics plus a mild trend and small noise.
    Smooth,
    /// The smooth base plus sparse heavy-tailed shocks.
    Spiky,
}

impl std::str::FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "smooth" => Ok(SynthKind::Smooth),
            "spiky" => Ok(SynthKind::Spiky),
            other => Err(format!("unknown synthetic kind {other:?} (smooth|spiky)")),
        }
    }
}

/// Deterministic synthetic series: `t` rows, `features` columns, the last
/// column is the label. Identical arguments give a bitwise-identical frame.
pub fn synth_series(kind: SynthKind, t: usize, features: usize, seed: u64) -> Result<TimeSeriesFrame> {
    if t == 0 || features == 0 {
        return Err(Error::Config {
            message: format!("synthetic series needs positive size, got {t} x {features}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const PERIODS: [f64; 3] = [97.0, 181.0, 331.0];
    const BASE_AMPS: [f64; 3] = [1.0, 0.6, 0.3];

    struct Voice {
        amp: f64,
        phase: f64,
    }
    let mut voices = Vec::with_capacity(features);
    let mut offsets = Vec::with_capacity(features);
    let mut slopes = Vec::with_capacity(features);
    for _ in 0..features {
        let per_feature: Vec<Voice> = BASE_AMPS
            .iter()
            .map(|&base| Voice {
                amp: base * rng.gen_range(0.6..1.4),
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
            })
            .collect();
        voices.push(per_feature);
        offsets.push(rng.gen_range(-1.0..1.0));
        slopes.push(rng.gen_range(-0.2..0.4));
    }

    let horizon_t = t.max(2) as f64;
    let mut data = Vec::with_capacity(t * features);
    for step in 0..t {
        let time = step as f64;
        for f in 0..features {
            let mut v = offsets[f] + slopes[f] * time / horizon_t;
            for (voice, period) in voices[f].iter().zip(PERIODS) {
                v += voice.amp * (std::f64::consts::TAU * time / period + voice.phase).sin();
            }
            v += rng.gen_range(-0.02..0.02);
            if kind == SynthKind::Spiky && rng.gen_bool(0.03) {
                let magnitude = 0.4 / rng.gen_range(0.05..1.0);
                v += if rng.gen_bool(0.5) { magnitude } else { -magnitude };
            }
            data.push(v);
        }
    }
    let values = Matrix::from_vec(t, features, data)?;
    let names = (0..features).map(|i| format!("s{i}")).collect();
    TimeSeriesFrame::new(names, values, features - 1)
}
