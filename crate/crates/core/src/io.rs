//! Delimited data files, run configuration and fitted-model artifacts.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cv::Criterion;
use crate::design::BlockedDesign;
use crate::error::{Result, RidgeError};
use crate::family::{BaselineHazard, Family, Response};
use crate::penalty::PenaltyConfig;
use crate::tune::{TraceEntry, TunerConfig};

pub const ARTIFACT_VERSION: u32 = 1;

fn io_err(path: &Path, source: std::io::Error) -> RidgeError {
    RidgeError::Io { path: path.display().to_string(), source }
}

/// A numeric table: header row, sample ids in the first column.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub ids: Vec<String>,
    pub columns: Vec<String>,
    pub data: DMatrix<f64>,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.to_ascii_lowercase().as_str(), "" | "na" | "nan" | "null" | "?")
}

/// Parse comma- or tab-separated text (whichever the header uses).
pub fn parse_table(text: &str, origin: &str) -> Result<Table> {
    let header = text.lines().next().ok_or_else(|| RidgeError::Parse(format!("{origin}: empty file")))?;
    let delim = if header.contains('\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new().delimiter(delim).trim(csv::Trim::All).from_reader(text.as_bytes());
    let head = reader.headers().map_err(|e| RidgeError::Parse(format!("{origin}: {e}")))?.clone();
    if head.len() < 2 {
        return Err(RidgeError::Parse(format!("{origin}: need an id column and at least one value column")));
    }
    let columns: Vec<String> = head.iter().skip(1).map(str::to_string).collect();
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let row = r + 2;
        let rec = rec.map_err(|e| RidgeError::Parse(format!("{origin}: {e}")))?;
        ids.push(rec[0].to_string());
        for (c, cell) in rec.iter().enumerate().skip(1) {
            let col = &columns[c - 1];
            if is_missing(cell) {
                return Err(RidgeError::Parse(format!("{origin}: missing value at row {row}, column {col}")));
            }
            let v: f64 = cell.parse().map_err(|_| {
                RidgeError::Parse(format!("{origin}: non-numeric value '{cell}' at row {row}, column {col}"))
            })?;
            if !v.is_finite() {
                return Err(RidgeError::Parse(format!("{origin}: non-finite value at row {row}, column {col}")));
            }
            values.push(v);
        }
    }
    if ids.is_empty() {
        return Err(RidgeError::Parse(format!("{origin}: no data rows")));
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(RidgeError::Parse(format!("{origin}: duplicate sample id '{dup}'")));
    }
    let data = DMatrix::from_row_slice(ids.len(), columns.len(), &values);
    Ok(Table { ids, columns, data })
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_table(&text, &path.display().to_string())
}

/// Write rows as CSV; floats use the shortest representation that parses
/// back to the same value.
pub fn write_table(path: &Path, ids: &[String], columns: &[String], data: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| RidgeError::Parse(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| RidgeError::Parse(format!("{}: {e}", path.display()));
    let mut head = vec!["id".to_string()];
    head.extend(columns.iter().cloned());
    w.write_record(&head).map_err(csv_err)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(data.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Rows of `table` reordered to follow `ids`; the id sets must match.
pub fn align(ids: &[String], table: &Table, origin: &str) -> Result<DMatrix<f64>> {
    let pos: HashMap<&str, usize> = table.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let want: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    let missing: Vec<&str> = ids.iter().map(String::as_str).filter(|s| !pos.contains_key(s)).collect();
    let extra: Vec<&str> = table.ids.iter().map(String::as_str).filter(|s| !want.contains(s)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(RidgeError::Dimension(format!(
            "{origin}: sample ids differ; missing {missing:?}, unexpected {extra:?}"
        )));
    }
    let rows: Vec<usize> = ids.iter().map(|s| pos[s.as_str()]).collect();
    Ok(DMatrix::from_fn(rows.len(), table.data.ncols(), |i, j| table.data[(rows[i], j)]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockRole {
    #[default]
    Penalized,
    Unpenalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSource {
    pub name: String,
    pub path: PathBuf,
    #[serde(default)]
    pub role: BlockRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    #[default]
    Cv,
    Ml,
    Vb,
}

impl MethodName {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cv" => Ok(MethodName::Cv),
            "ml" => Ok(MethodName::Ml),
            "vb" | "elbo" => Ok(MethodName::Vb),
            other => Err(RidgeError::Config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldSettings {
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub stratified: bool,
    /// Outer folds of double cross-validation.
    pub outer: usize,
}

impl Default for FoldSettings {
    fn default() -> Self {
        Self { k: 10, repeats: 1, seed: 1, stratified: true, outer: 5 }
    }
}

/// Everything a run needs. Relative paths resolve against the directory of
/// the file the configuration was loaded from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub blocks: Vec<BlockSource>,
    pub response: Option<PathBuf>,
    /// Inferred from the response file when absent.
    pub family: Option<Family>,
    pub paired: Option<Vec<String>>,
    pub folds: FoldSettings,
    pub tuner: TunerConfig,
    /// Defaults to the family's likelihood criterion.
    pub criterion: Option<Criterion>,
    pub method: MethodName,
    pub preferred: Vec<String>,
    pub output: PathBuf,
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            blocks: Vec::new(),
            response: None,
            family: None,
            paired: None,
            folds: FoldSettings::default(),
            tuner: TunerConfig::default(),
            criterion: None,
            method: MethodName::Cv,
            preferred: Vec::new(),
            output: PathBuf::from("."),
            workers: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| RidgeError::Config(format!("{}: {}", path.display(), e.message())))?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| RidgeError::Config(e.to_string()))
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        for b in &mut self.blocks {
            fix(&mut b.path);
        }
        if let Some(r) = &mut self.response {
            fix(r);
        }
        fix(&mut self.output);
    }

    /// Checks that need no data: files exist, roles and method fit.
    pub fn validate(&self) -> Result<()> {
        if !self.blocks.iter().any(|b| b.role == BlockRole::Penalized) {
            return Err(RidgeError::Config("at least one penalized block is required".into()));
        }
        let mut names = BTreeSet::new();
        for b in &self.blocks {
            if !names.insert(&b.name) {
                return Err(RidgeError::Config(format!("block name '{}' used twice", b.name)));
            }
            if !b.path.is_file() {
                return Err(RidgeError::Config(format!("block file {} does not exist", b.path.display())));
            }
        }
        if self.blocks.iter().filter(|b| b.role == BlockRole::Unpenalized).count() > 1 {
            return Err(RidgeError::Config("at most one unpenalized block".into()));
        }
        match &self.response {
            None => return Err(RidgeError::Config("no response file given".into())),
            Some(p) if !p.is_file() => {
                return Err(RidgeError::Config(format!("response file {} does not exist", p.display())))
            }
            _ => {}
        }
        if let Some(pair) = &self.paired {
            if pair.len() != 2 || pair[0] == pair[1] {
                return Err(RidgeError::Config("paired needs two distinct block names".into()));
            }
            for name in pair {
                self.penalized_block(name)?;
            }
        }
        for name in &self.preferred {
            self.penalized_block(name)?;
        }
        if self.method == MethodName::Vb && self.family.is_some_and(|f| f != Family::Logistic) {
            return Err(RidgeError::Config("method vb needs a binary response".into()));
        }
        if self.method == MethodName::Ml && self.blocks.iter().any(|b| b.role == BlockRole::Unpenalized) {
            return Err(RidgeError::Config("method ml does not allow an unpenalized block".into()));
        }
        if let (Some(c), Some(f)) = (self.criterion, self.family) {
            c.check_family(f)?;
        }
        self.tuner.validate()
    }

    fn penalized_block(&self, name: &str) -> Result<usize> {
        self.blocks
            .iter()
            .filter(|b| b.role == BlockRole::Penalized)
            .position(|b| b.name == name)
            .ok_or_else(|| RidgeError::Config(format!("no penalized block named '{name}'")))
    }

    /// Indices of the preferred blocks among the penalized ones.
    pub fn preferred_indices(&self) -> Result<Vec<usize>> {
        self.preferred.iter().map(|n| self.penalized_block(n)).collect()
    }

    /// SHA-256 over the configuration and the bytes of every input file.
    pub fn fingerprint(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).map_err(|e| RidgeError::Config(e.to_string()))?);
        let files = self.blocks.iter().map(|b| &b.path).chain(self.response.iter());
        for p in files {
            h.update(fs::read(p).map_err(|e| io_err(p, e))?);
        }
        Ok(hex::encode(h.finalize()))
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub ids: Vec<String>,
    pub design: BlockedDesign,
    pub response: Response,
}

/// Infer the family: two value columns mean `(time, status)`, a single
/// 0/1 column is binary, anything else is linear.
pub fn infer_family(table: &Table) -> Family {
    if table.columns.len() >= 2 {
        Family::Cox
    } else if table.data.iter().all(|&v| v == 0.0 || v == 1.0) {
        Family::Logistic
    } else {
        Family::Linear
    }
}

pub fn response_from_table(table: &Table, family: Family, ids: &[String], origin: &str) -> Result<Response> {
    let m = align(ids, table, origin)?;
    match family {
        Family::Cox => {
            if m.ncols() < 2 {
                return Err(RidgeError::Parse(format!("{origin}: survival needs time and status columns")));
            }
            Response::cox(m.column(0).into_owned(), m.column(1).into_owned())
        }
        Family::Logistic => Response::logistic(m.column(0).into_owned()),
        Family::Linear => Response::linear(m.column(0).into_owned()),
    }
}

/// Read and id-align all files named by `cfg`. Samples follow the order of
/// the response file.
pub fn ingest(cfg: &RunConfig) -> Result<Ingested> {
    cfg.validate()?;
    let resp_path = cfg.response.as_ref().expect("validated");
    let resp = read_table(resp_path)?;
    let ids = resp.ids.clone();
    let family = cfg.family.unwrap_or_else(|| infer_family(&resp));
    let response = response_from_table(&resp, family, &ids, &resp_path.display().to_string())?;

    let mut blocks = Vec::new();
    let mut names = Vec::new();
    let mut unpen = None;
    for b in &cfg.blocks {
        let t = read_table(&b.path)?;
        let x = align(&ids, &t, &b.path.display().to_string())?;
        match b.role {
            BlockRole::Penalized => {
                blocks.push((b.name.clone(), x));
                names.push((b.name.clone(), t.columns));
            }
            BlockRole::Unpenalized => unpen = Some((x, t.columns)),
        }
    }
    let mut design = BlockedDesign::new(blocks)?;
    for (name, cols) in names {
        design = design.with_column_names(&name, cols)?;
    }
    if let Some((x1, cols)) = unpen {
        design = design.with_unpenalized(x1)?.with_unpenalized_names(cols)?;
    }
    if let Some(pair) = &cfg.paired {
        design = design.with_pair(&pair[0], &pair[1])?;
    }
    Ok(Ingested { ids, design, response })
}

/// Labelled coefficients of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefBlock {
    pub name: String,
    pub columns: Vec<String>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub format_version: u32,
    pub fingerprint: String,
    pub family: Family,
    pub penalties: PenaltyConfig,
    pub unpenalized: Option<CoefBlock>,
    /// Penalized blocks in design order.
    pub blocks: Vec<CoefBlock>,
    pub sample_ids: Vec<String>,
    /// In-sample linear predictors.
    pub eta: Vec<f64>,
    pub baseline: Option<BaselineHazard>,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

impl FitArtifact {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| RidgeError::Parse(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| io_err(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let a: FitArtifact =
            serde_json::from_str(&text).map_err(|e| RidgeError::Parse(format!("{}: {e}", path.display())))?;
        if a.format_version != ARTIFACT_VERSION {
            return Err(RidgeError::Parse(format!(
                "{}: artifact format {} is not supported (expected {ARTIFACT_VERSION})",
                path.display(),
                a.format_version
            )));
        }
        if a.blocks.iter().chain(a.unpenalized.iter()).any(|b| b.columns.len() != b.values.len()) {
            return Err(RidgeError::Parse(format!("{}: coefficient labels and values differ in length", path.display())));
        }
        Ok(a)
    }

    /// `η = X₁ b + Σ_b X_b β_b` for new samples. Each table's columns are
    /// matched to the stored coefficients by name; rows follow `ids`.
    pub fn predict(&self, ids: &[String], blocks: &[(String, Table)], unpen: Option<&Table>) -> Result<DVector<f64>> {
        let mut eta = DVector::zeros(ids.len());
        let mut add = |coef: &CoefBlock, t: &Table| -> Result<()> {
            let x = align(ids, t, &coef.name)?;
            let pos: HashMap<&str, usize> = t.columns.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
            for (col, v) in coef.columns.iter().zip(&coef.values) {
                let j = *pos.get(col.as_str()).ok_or_else(|| {
                    RidgeError::Dimension(format!("block {}: new data lacks column '{col}'", coef.name))
                })?;
                eta.axpy(*v, &x.column(j), 1.0);
            }
            Ok(())
        };
        if let Some(c) = &self.unpenalized {
            let t = unpen.ok_or_else(|| RidgeError::Dimension("model has unpenalized covariates; supply them".into()))?;
            add(c, t)?;
        }
        for coef in &self.blocks {
            let t = blocks
                .iter()
                .find(|(n, _)| *n == coef.name)
                .map(|(_, t)| t)
                .ok_or_else(|| RidgeError::Dimension(format!("no new data for block {}", coef.name)))?;
            add(coef, t)?;
        }
        Ok(eta)
    }
}

/// One line per optimizer evaluation: stage, penalties, coupling, utility.
pub fn trace_tsv(names: &[String], trace: &[TraceEntry]) -> String {
    let mut out = String::from("stage");
    for n in names {
        out.push_str(&format!("\tlambda_{n}"));
    }
    out.push_str("\tcross\tutility\n");
    for t in trace {
        let stage = serde_json::to_value(t.stage).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        out.push_str(&stage);
        for l in &t.lambdas {
            out.push_str(&format!("\t{l}"));
        }
        out.push_str(&format!("\t{}\t{}\n", t.cross.map_or("NA".into(), |c| c.to_string()), t.utility));
    }
    out
}
