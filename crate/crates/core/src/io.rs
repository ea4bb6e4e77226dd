//! File formats.
//!
//! | kind       | format | layout |
//! |------------|--------|--------|
//! | PLF spec   | JSON   | `{"classes": [name…], "plfs": [{"name", "codomain": [[class name…]…]}…]}` |
//! | votes      | CSV    | header of PLF names, then one row per example; a cell is a codomain index or `-` |
//! | params     | JSON   | `{"balance_mode", "class_balance", "acc_logits" (n rows of k), "prop_logits"}` |
//! | posterior  | CSV    | header of class names, then `k` probabilities per row in `%.8e` form |
//! | labels     | CSV    | header `label`, then one class name per row; `-` marks an unlabeled row |
//! | features   | CSV    | header `f0,…,f{d-1}`, then `d` reals per row |
//! | truth      | JSON   | `{"seed", "params", "labels"}` written next to synthetic votes |
//! | end model  | JSON   | `{"classes", "weights" (d rows of k), "bias"}` |
//!
//! Every `to_string`/`parse` pair round-trips exactly: serializing a parsed
//! file reproduces it byte for byte.

use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::endmodel::LinearModel;
use crate::error::{Error, Result};
use crate::label_space::{validate_plf_spec, LabelSpace, PartialLabel, PlfSpec, VoteMatrix};
use crate::model::{BalanceMode, ModelParams, Posterior};
use crate::scalar::Scalar;

/// Marker for an abstaining vote or an unlabeled row.
pub const ABSTAIN_TOKEN: &str = "-";

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: file not found", path.display())))
        } else {
            Error::Io(e)
        }
    })
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    Ok(fs::write(path, text)?)
}

fn parse_err(what: &str, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{what} line {line}: {msg}"))
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name == ABSTAIN_TOKEN || name.contains([',', '\n', '\r', '"']) {
        return Err(Error::Parse(format!("invalid name {name:?}: must be non-empty, not `-`, without commas, quotes or newlines")));
    }
    Ok(())
}

/// PLF definitions together with the class names they refer to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecSet {
    pub classes: Vec<String>,
    pub specs: Vec<PlfSpec>,
}

#[derive(Serialize, Deserialize)]
struct SpecFile {
    classes: Vec<String>,
    plfs: Vec<PlfEntry>,
}

#[derive(Serialize, Deserialize)]
struct PlfEntry {
    name: String,
    codomain: Vec<Vec<String>>,
}

impl SpecSet {
    pub fn space(&self) -> LabelSpace {
        LabelSpace::new(self.classes.len()).expect("validated at construction")
    }

    pub fn new(classes: Vec<String>, specs: Vec<PlfSpec>) -> Result<Self> {
        let space = LabelSpace::new(classes.len())?;
        for c in &classes {
            check_name(c)?;
        }
        for (j, c) in classes.iter().enumerate() {
            if classes[..j].contains(c) {
                return Err(Error::Parse(format!("duplicate class name {c:?}")));
            }
        }
        for (i, s) in specs.iter().enumerate() {
            check_name(s.name())?;
            if specs[..i].iter().any(|o| o.name() == s.name()) {
                return Err(Error::Parse(format!("duplicate PLF name {:?}", s.name())));
            }
            validate_plf_spec(s, space)?;
        }
        Ok(Self { classes, specs })
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: SpecFile = serde_json::from_str(text).map_err(|e| Error::Parse(format!("spec file: {e}")))?;
        let space = LabelSpace::new(file.classes.len())?;
        let lookup = |name: &str| {
            file.classes
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Parse(format!("spec file: unknown class {name:?}")))
        };
        let specs = file
            .plfs
            .iter()
            .map(|p| {
                let codomain = p
                    .codomain
                    .iter()
                    .map(|set| {
                        let members = set.iter().map(|c| lookup(c)).collect::<Result<Vec<_>>>()?;
                        PartialLabel::new(members)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(PlfSpec::from_codomain(p.name.clone(), codomain, space))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(file.classes, specs)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }
}

/// The spec file text, pretty-printed JSON with a trailing newline.
impl fmt::Display for SpecSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let file = SpecFile {
            classes: self.classes.clone(),
            plfs: self
                .specs
                .iter()
                .map(|s| PlfEntry {
                    name: s.name().to_owned(),
                    codomain: s
                        .codomain()
                        .iter()
                        .map(|t| t.members().iter().map(|&c| self.classes[c].clone()).collect())
                        .collect(),
                })
                .collect(),
        };
        writeln!(f, "{}", serde_json::to_string_pretty(&file).expect("spec serializes"))
    }
}

pub fn votes_to_string(specs: &[PlfSpec], votes: &VoteMatrix) -> String {
    let mut out = String::with_capacity(votes.m() * votes.n() * 3 + 64);
    out.push_str(&specs.iter().map(PlfSpec::name).collect::<Vec<_>>().join(","));
    out.push('\n');
    for a in 0..votes.m() {
        for (i, v) in votes.row(a).enumerate() {
            if i > 0 {
                out.push(',');
            }
            match v {
                Some(v) => out.push_str(&v.to_string()),
                None => out.push_str(ABSTAIN_TOKEN),
            }
        }
        out.push('\n');
    }
    out
}

/// Parses a votes file; the header must list the PLF names in spec order.
pub fn parse_votes(text: &str, specs: &[PlfSpec]) -> Result<VoteMatrix> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err("votes", 1, "missing header"))?;
    let names: Vec<&str> = header.split(',').collect();
    if names.len() != specs.len() {
        return Err(Error::ShapeMismatch(format!(
            "votes file has {} columns, spec file has {} PLFs",
            names.len(),
            specs.len()
        )));
    }
    for (name, spec) in names.iter().zip(specs) {
        if *name != spec.name() {
            return Err(parse_err("votes", 1, format!("column {name:?} does not match PLF {:?}", spec.name())));
        }
    }
    let mut rows = Vec::new();
    for (line_no, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != specs.len() {
            return Err(Error::ShapeMismatch(format!(
                "votes line {}: {} cells, expected {}",
                line_no + 2,
                cells.len(),
                specs.len()
            )));
        }
        let row = cells
            .iter()
            .map(|c| match *c {
                ABSTAIN_TOKEN => Ok(None),
                c => c.parse::<usize>().map(Some).map_err(|e| parse_err("votes", line_no + 2, format!("{c:?}: {e}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let votes = VoteMatrix::from_rows(specs.len(), &rows)?;
    votes.validate(specs)?;
    Ok(votes)
}

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    balance_mode: BalanceMode,
    class_balance: Vec<f64>,
    acc_logits: Vec<Vec<f64>>,
    prop_logits: Vec<f64>,
}

impl ParamsFile {
    fn from_params<T: Scalar>(p: &ModelParams<T>) -> Self {
        Self {
            balance_mode: p.balance_mode(),
            class_balance: p.class_balance().iter().map(|x| x.to_f64_lossy()).collect(),
            acc_logits: p.acc_logits().rows().into_iter().map(|r| r.iter().map(|x| x.to_f64_lossy()).collect()).collect(),
            prop_logits: p.prop_logits().iter().map(|x| x.to_f64_lossy()).collect(),
        }
    }

    fn into_params<T: Scalar>(self) -> Result<ModelParams<T>> {
        let n = self.acc_logits.len();
        let k = self.class_balance.len();
        if self.acc_logits.iter().any(|r| r.len() != k) {
            return Err(Error::ShapeMismatch(format!("params: every accuracy row must have {k} entries")));
        }
        let acc = Array2::from_shape_vec((n, k), self.acc_logits.into_iter().flatten().map(T::lit).collect())
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        ModelParams::new(
            acc,
            self.prop_logits.into_iter().map(T::lit).collect(),
            self.class_balance.into_iter().map(T::lit).collect(),
            self.balance_mode,
        )
    }
}

pub fn params_to_string<T: Scalar>(params: &ModelParams<T>) -> String {
    let mut out = serde_json::to_string_pretty(&ParamsFile::from_params(params)).expect("params serialize");
    out.push('\n');
    out
}

pub fn parse_params<T: Scalar>(text: &str) -> Result<ModelParams<T>> {
    let file: ParamsFile = serde_json::from_str(text).map_err(|e| Error::Parse(format!("params file: {e}")))?;
    file.into_params()
}

fn fmt_prob(p: f64) -> String {
    format!("{p:.8e}")
}

pub fn posterior_to_string<T: Scalar>(classes: &[String], post: &Posterior<T>) -> String {
    let mut out = classes.join(",");
    out.push('\n');
    for row in post.probs().rows() {
        out.push_str(&row.iter().map(|p| fmt_prob(p.to_f64_lossy())).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

fn parse_real_table(text: &str, what: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| parse_err(what, 1, "missing header"))?
        .split(',')
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (line_no, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|c| c.parse::<f64>().map_err(|e| parse_err(what, line_no + 2, format!("{c:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != header.len() {
            return Err(Error::ShapeMismatch(format!(
                "{what} line {}: {} values, expected {}",
                line_no + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

fn to_array<T: Scalar>(rows: Vec<Vec<f64>>, cols: usize) -> Array2<T> {
    let m = rows.len();
    Array2::from_shape_vec((m, cols), rows.into_iter().flatten().map(T::lit).collect()).expect("rows checked")
}

/// Parses a posterior or soft-label file; returns class names and the matrix.
pub fn parse_posterior<T: Scalar>(text: &str) -> Result<(Vec<String>, Posterior<T>)> {
    let (classes, rows) = parse_real_table(text, "posterior")?;
    let k = classes.len();
    Ok((classes, Posterior::from_probs(to_array(rows, k))?))
}

pub fn features_to_string<T: Scalar>(x: &Array2<T>) -> String {
    let mut out = (0..x.ncols()).map(|c| format!("f{c}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for row in x.rows() {
        out.push_str(&row.iter().map(|v| format!("{:?}", v.to_f64_lossy())).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

pub fn parse_features<T: Scalar>(text: &str) -> Result<Array2<T>> {
    let (header, rows) = parse_real_table(text, "features")?;
    Ok(to_array(rows, header.len()))
}

pub fn labels_to_string(classes: &[String], labels: &[Option<usize>]) -> String {
    let mut out = String::from("label\n");
    for l in labels {
        out.push_str(l.map_or(ABSTAIN_TOKEN, |c| classes[c].as_str()));
        out.push('\n');
    }
    out
}

pub fn parse_labels(text: &str, classes: &[String]) -> Result<Vec<Option<usize>>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("label") => {}
        _ => return Err(parse_err("labels", 1, "expected header `label`")),
    }
    lines
        .enumerate()
        .map(|(i, l)| match l {
            ABSTAIN_TOKEN => Ok(None),
            name => classes
                .iter()
                .position(|c| c == name)
                .map(Some)
                .ok_or_else(|| parse_err("labels", i + 2, format!("unknown class {name:?}"))),
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct TruthFile {
    seed: u64,
    params: ParamsFile,
    labels: Vec<String>,
}

/// Ground truth written alongside synthetic votes.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth<T> {
    pub seed: u64,
    pub params: ModelParams<T>,
    pub labels: Vec<usize>,
}

pub fn truth_to_string<T: Scalar>(classes: &[String], truth: &Truth<T>) -> String {
    let file = TruthFile {
        seed: truth.seed,
        params: ParamsFile::from_params(&truth.params),
        labels: truth.labels.iter().map(|&c| classes[c].clone()).collect(),
    };
    let mut out = serde_json::to_string_pretty(&file).expect("truth serializes");
    out.push('\n');
    out
}

pub fn parse_truth<T: Scalar>(text: &str, classes: &[String]) -> Result<Truth<T>> {
    let file: TruthFile = serde_json::from_str(text).map_err(|e| Error::Parse(format!("truth file: {e}")))?;
    let labels = file
        .labels
        .iter()
        .map(|l| classes.iter().position(|c| c == l).ok_or_else(|| Error::Parse(format!("truth file: unknown class {l:?}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Truth { seed: file.seed, params: file.params.into_params()?, labels })
}

#[derive(Serialize, Deserialize)]
struct LinearModelFile {
    classes: Vec<String>,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

pub fn linear_model_to_string<T: Scalar>(classes: &[String], model: &LinearModel<T>) -> String {
    let file = LinearModelFile {
        classes: classes.to_vec(),
        weights: model.weights.rows().into_iter().map(|r| r.iter().map(|x| x.to_f64_lossy()).collect()).collect(),
        bias: model.bias.iter().map(|x| x.to_f64_lossy()).collect(),
    };
    let mut out = serde_json::to_string_pretty(&file).expect("model serializes");
    out.push('\n');
    out
}

pub fn parse_linear_model<T: Scalar>(text: &str) -> Result<(Vec<String>, LinearModel<T>)> {
    let file: LinearModelFile = serde_json::from_str(text).map_err(|e| Error::Parse(format!("model file: {e}")))?;
    let k = file.classes.len();
    if file.bias.len() != k || file.weights.iter().any(|r| r.len() != k) {
        return Err(Error::ShapeMismatch("model file: weights and bias must have one column per class".into()));
    }
    let d = file.weights.len();
    let weights = to_array(file.weights, k);
    debug_assert_eq!(weights.nrows(), d);
    Ok((file.classes, LinearModel { weights, bias: Array1::from_iter(file.bias.into_iter().map(T::lit)) }))
}
