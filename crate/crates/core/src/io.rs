//! File formats: JSON models and CSV measurement records.
//!
//! Matrices are row-major nested arrays. Non-finite reals, which JSON cannot
//! represent, are written as the strings `"inf"`, `"-inf"` and `"nan"`
//! (see [`extended_float`]).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::continuous::{ContinuousModel, TimeFunction};
use crate::matalg::{Matrix, Vector};
use crate::model::{DescriptorModel, MeasurementSequence, UncertaintyWeights};
use crate::{Error, Result};

type Rows = Vec<Vec<f64>>;

/// Serde adapter for `f64` fields that may be infinite or NaN.
pub mod extended_float {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    struct ExtVisitor;

    impl Visitor<'_> for ExtVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(E::custom(format!("unexpected float literal {other:?}"))),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(ExtVisitor)
    }
}

fn to_matrix(rows: &Rows, cols_if_empty: usize, what: &str) -> Result<Matrix> {
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, cols_if_empty));
    }
    let cols = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(Error::Parse(format!(
            "{what}: row {i} has {} entries, expected {cols}",
            rows[i].len()
        )));
    }
    Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn from_matrix(m: &Matrix) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn to_matrices(seq: &[Rows], cols_if_empty: usize, what: &str) -> Result<Vec<Matrix>> {
    seq.iter()
        .enumerate()
        .map(|(k, rows)| to_matrix(rows, cols_if_empty, &format!("{what}[{k}]")))
        .collect()
}

/// One matrix or a sequence of matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(Rows),
    Many(Vec<Rows>),
}

impl OneOrMany {
    fn into_seq(self, time_invariant: bool, what: &str) -> Result<Vec<Rows>> {
        match (self, time_invariant) {
            (OneOrMany::One(m), true) => Ok(vec![m]),
            (OneOrMany::Many(seq), false) => Ok(seq),
            // `[]` parses as an empty matrix; for a sequence it is empty.
            (OneOrMany::One(m), false) if m.is_empty() => Ok(Vec::new()),
            (OneOrMany::Many(_), true) => Err(Error::Parse(format!(
                "{what}: time-invariant model needs a single matrix"
            ))),
            (OneOrMany::One(_), false) => Err(Error::Parse(format!(
                "{what}: time-varying model needs a sequence of matrices"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DiscreteModelFile {
    n: usize,
    #[serde(rename = "N")]
    steps: usize,
    time_invariant: bool,
    #[serde(rename = "F")]
    f: OneOrMany,
    #[serde(rename = "C")]
    c: OneOrMany,
    #[serde(rename = "H")]
    h: OneOrMany,
    #[serde(rename = "S")]
    s: Rows,
    #[serde(rename = "S_seq")]
    s_seq: Vec<Rows>,
    #[serde(rename = "R_seq")]
    r_seq: Vec<Rows>,
}

/// Parses a discrete model with its uncertainty weights.
pub fn parse_discrete_model(text: &str) -> Result<(DescriptorModel, UncertaintyWeights)> {
    let file: DiscreteModelFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let n = file.n;
    let ti = file.time_invariant;
    let f = to_matrices(&file.f.into_seq(ti, "F")?, n, "F")?;
    let c = to_matrices(&file.c.into_seq(ti, "C")?, n, "C")?;
    let h = to_matrices(&file.h.into_seq(ti, "H")?, n, "H")?;
    let model = if ti {
        let mut it = f.into_iter().zip(c).zip(h);
        let ((f, c), h) = it.next().expect("single matrices");
        DescriptorModel::time_invariant(file.steps, f, c, h)
    } else {
        DescriptorModel::time_varying(f, c, h)
    };
    if model.n != n || model.steps != file.steps {
        return Err(Error::Parse(format!(
            "header says n={n}, N={}, matrices give n={}, N={}",
            file.steps, model.n, model.steps
        )));
    }
    let weights = UncertaintyWeights::new(
        to_matrix(&file.s, 0, "S")?,
        to_matrices(&file.s_seq, 0, "S_seq")?,
        to_matrices(&file.r_seq, 0, "R_seq")?,
    );
    Ok((model, weights))
}

pub fn discrete_model_to_json(
    model: &DescriptorModel,
    weights: &UncertaintyWeights,
) -> Result<String> {
    let wrap = |seq: &[Matrix]| {
        if model.time_invariant {
            OneOrMany::One(seq.first().map(from_matrix).unwrap_or_default())
        } else {
            OneOrMany::Many(seq.iter().map(from_matrix).collect())
        }
    };
    let file = DiscreteModelFile {
        n: model.n,
        steps: model.steps,
        time_invariant: model.time_invariant,
        f: wrap(&model.f),
        c: wrap(&model.c),
        h: wrap(&model.h),
        s: from_matrix(&weights.s),
        s_seq: weights.s_seq.iter().map(from_matrix).collect(),
        r_seq: weights.r_seq.iter().map(from_matrix).collect(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_discrete_model(path: &Path) -> Result<(DescriptorModel, UncertaintyWeights)> {
    parse_discrete_model(&std::fs::read_to_string(path)?)
}

/// Reads rows `index,v0,v1,...` with the given index column name.
fn parse_indexed_csv(text: &str, index: &str) -> Result<(Vec<f64>, Vec<Vector>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .clone();
    if headers.get(0) != Some(index) {
        return Err(Error::Parse(format!("first column must be '{index}'")));
    }
    let width = headers.len() - 1;
    let mut idx = Vec::new();
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let values = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("record {line}: {e}")))?;
        if values.len() != width + 1 {
            return Err(Error::Parse(format!(
                "record {line}: expected {} fields",
                width + 1
            )));
        }
        idx.push(values[0]);
        rows.push(Vector::from_row_slice(&values[1..]));
    }
    Ok((idx, rows))
}

fn indexed_csv(index: &str, idx: impl Iterator<Item = String>, rows: &[Vector]) -> Result<String> {
    grid_csv(index, "y", idx, rows)
}

/// CSV with an index column followed by `{prefix}0, {prefix}1, ...`.
pub fn grid_csv(
    index: &str,
    prefix: &str,
    idx: impl Iterator<Item = String>,
    rows: &[Vector],
) -> Result<String> {
    let width = rows.first().map_or(0, |v| v.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = std::iter::once(index.to_string())
        .chain((0..width).map(|i| format!("{prefix}{i}")))
        .collect();
    let to_err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(&header).map_err(to_err)?;
    for (i, v) in idx.zip(rows) {
        let rec: Vec<String> = std::iter::once(i)
            .chain(v.iter().map(|x| (x + 0.0).to_string()))
            .collect();
        w.write_record(&rec).map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// Parses `k,y0,y1,...`; rows must be in order `k = 0, 1, ...`.
pub fn parse_measurements(text: &str) -> Result<MeasurementSequence> {
    let (k, y) = parse_indexed_csv(text, "k")?;
    if let Some(i) = k.iter().enumerate().position(|(i, &k)| k != i as f64) {
        return Err(Error::Parse(format!(
            "record {i}: expected k={i}, found {}",
            k[i]
        )));
    }
    Ok(MeasurementSequence::new(y))
}

pub fn measurements_to_csv(y: &MeasurementSequence) -> Result<String> {
    indexed_csv("k", (0..y.len()).map(|k| k.to_string()), &y.y)
}

pub fn read_measurements(path: &Path) -> Result<MeasurementSequence> {
    parse_measurements(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ContinuousModelFile {
    #[serde(rename = "F")]
    f: Rows,
    t0: f64,
    #[serde(rename = "T")]
    t_end: f64,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "C")]
    c: Vec<Rows>,
    #[serde(rename = "H")]
    h: Vec<Rows>,
    #[serde(rename = "Q0")]
    q0: Rows,
    #[serde(rename = "Q1")]
    q1: Vec<Rows>,
    #[serde(rename = "Q2")]
    q2: Vec<Rows>,
    ell: Vec<Vec<f64>>,
}

pub fn parse_continuous_model(text: &str) -> Result<ContinuousModel> {
    let file: ContinuousModelFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let f = to_matrix(&file.f, 0, "F")?;
    let n = f.ncols();
    let timed = |seq: &[Rows], what: &str| -> Result<TimeFunction<Matrix>> {
        Ok(TimeFunction::sampled(
            file.t0,
            file.t_end,
            to_matrices(seq, n, what)?,
        ))
    };
    let ell = file.ell.iter().map(|v| Vector::from_row_slice(v)).collect();
    Ok(ContinuousModel {
        c: timed(&file.c, "C")?,
        h: timed(&file.h, "H")?,
        q0: to_matrix(&file.q0, 0, "Q0")?,
        q1: timed(&file.q1, "Q1")?,
        q2: timed(&file.q2, "Q2")?,
        ell: TimeFunction::sampled(file.t0, file.t_end, ell),
        f,
        t0: file.t0,
        t_end: file.t_end,
        k: file.k,
    })
}

pub fn continuous_model_to_json(model: &ContinuousModel) -> Result<String> {
    let seq = |tf: &TimeFunction<Matrix>| tf.iter().map(from_matrix).collect();
    let file = ContinuousModelFile {
        f: from_matrix(&model.f),
        t0: model.t0,
        t_end: model.t_end,
        k: model.k,
        c: seq(&model.c),
        h: seq(&model.h),
        q0: from_matrix(&model.q0),
        q1: seq(&model.q1),
        q2: seq(&model.q2),
        ell: model
            .ell
            .iter()
            .map(|v| v.iter().copied().collect())
            .collect(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_continuous_model(path: &Path) -> Result<ContinuousModel> {
    parse_continuous_model(&std::fs::read_to_string(path)?)
}

/// Parses `t,y0,y1,...` sampled on uniformly spaced, increasing times.
pub fn parse_continuous_measurements(text: &str) -> Result<TimeFunction<Vector>> {
    let (t, y) = parse_indexed_csv(text, "t")?;
    match t.len() {
        0 => Err(Error::Parse("no measurement records".into())),
        1 => Ok(TimeFunction::constant(
            y.into_iter().next().expect("one record"),
        )),
        len => {
            let (t0, t_end) = (t[0], t[len - 1]);
            let h = (t_end - t0) / (len - 1) as f64;
            if h.is_nan() || h <= 0.0 {
                return Err(Error::Parse("times must increase".into()));
            }
            if let Some(i) =
                (0..len).find(|&i| (t[i] - (t0 + i as f64 * h)).abs() > 1e-9 * (1.0 + t_end.abs()))
            {
                return Err(Error::Parse(format!(
                    "record {i}: times must be uniformly spaced"
                )));
            }
            Ok(TimeFunction::sampled(t0, t_end, y))
        }
    }
}

pub fn continuous_measurements_to_csv(y: &TimeFunction<Vector>) -> Result<String> {
    let len = y.samples.len();
    let step = if len > 1 {
        (y.t_end - y.t0) / (len - 1) as f64
    } else {
        0.0
    };
    let times = (0..len).map(|i| {
        if i + 1 == len && len > 1 {
            y.t_end.to_string()
        } else {
            (y.t0 + i as f64 * step).to_string()
        }
    });
    indexed_csv("t", times, &y.samples)
}

pub fn read_continuous_measurements(path: &Path) -> Result<TimeFunction<Vector>> {
    parse_continuous_measurements(&std::fs::read_to_string(path)?)
}
