//! Files read and written by the command-line tool: the units CSV, the model
//! JSON, the run config TOML and the solution, path and summary outputs.
//!
//! Models are stored by feature name and group label so files stay readable
//! and independent of column order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{GroupAllocationSummary, SolutionPath};
use crate::bnb::{Solution, SolveStatus, SolverConfig};
use crate::error::{Error, Result};
use crate::estimation::{FitDataset, FitResult};
use crate::graph::{build_knn_graph, InterferenceGraph, KnnOptions};
use crate::outcome::{LinearInterferenceModel, MaxInterferenceModel, OutcomeModel, SemParams, TabularModel};
use crate::problem::AllocationProblem;
use crate::synth::{SyntheticInstance, UnitRecord, BASE_FEATURES};
use crate::units::{GroupDomain, Unit};

const REQUIRED: [&str; 8] = ["id", "group", "lon", "lat", "counselors", "ap_ib", "calculus", "outcome"];

/// Parsed units file.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitsTable {
    pub groups: GroupDomain,
    pub records: Vec<UnitRecord>,
    /// Auxiliary columns, in file order.
    pub extra_columns: Vec<String>,
}

impl UnitsTable {
    /// `[counselors, ap_ib, calculus, extras...]`.
    pub fn feature_names(&self) -> Vec<String> {
        BASE_FEATURES.iter().map(|s| s.to_string()).chain(self.extra_columns.iter().cloned()).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names().iter().position(|f| f == name)
    }

    /// Units with the non-descendant mask set from `prec_features`.
    pub fn units(&self, prec_features: &[String]) -> Result<Vec<Unit<f64>>> {
        let names = self.feature_names();
        if let Some(bad) = prec_features.iter().find(|f| !names.contains(f)) {
            return Err(Error::Config(format!("prec_feature_list names unknown column {bad:?}")));
        }
        let mask: Vec<bool> = names.iter().map(|f| prec_features.contains(f)).collect();
        Ok(self
            .records
            .iter()
            .map(|r| Unit::new(r.id.clone(), r.group, r.features()).with_coords(r.lon, r.lat).with_prec_mask(mask.clone()))
            .collect())
    }

    pub fn fit_dataset(&self, graph: InterferenceGraph<f64>) -> FitDataset<f64> {
        FitDataset {
            groups: self.records.iter().map(|r| r.group).collect(),
            labels: self.groups.labels().to_vec(),
            ap_ib: self.records.iter().map(|r| r.ap_ib).collect(),
            counselors: self.records.iter().map(|r| r.counselors).collect(),
            calculus: self.records.iter().map(|r| r.calculus).collect(),
            outcome: self.records.iter().map(|r| r.outcome).collect(),
            graph,
        }
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Creates `dir` and any missing parents.
pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

/// Reads a units CSV. Group labels are sorted unless `group_order` fixes
/// them; `group_column` names the column holding the labels.
pub fn load_units(path: &Path, group_column: &str, group_order: Option<&[String]>) -> Result<UnitsTable> {
    let text = read_to_string(path)?;
    parse_units(&text, group_column, group_order)
}

pub fn parse_units(text: &str, group_column: &str, group_order: Option<&[String]>) -> Result<UnitsTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let required: Vec<&str> = REQUIRED.iter().map(|&c| if c == "group" { group_column } else { c }).collect();
    let mut column = BTreeMap::new();
    for name in &required {
        let pos = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing required column {name:?}")))?;
        column.insert(*name, pos);
    }
    let extra: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| !required.contains(&h.as_str()))
        .map(|(i, h)| (i, h.clone()))
        .collect();
    if let Some(dup) = header.iter().enumerate().find(|(i, h)| header[..*i].contains(h)) {
        return Err(Error::Schema(format!("duplicate column {:?}", dup.1)));
    }

    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let row = line + 2;
        let rec = rec.map_err(|e| Error::Schema(format!("row {row}: {e}")))?;
        let cell = |name: &str| -> Result<&str> {
            let v = rec.get(column[name]).unwrap_or("");
            if v.is_empty() {
                return Err(Error::Schema(format!("row {row}: missing value in column {name:?}")));
            }
            Ok(v)
        };
        let number = |name: &str, v: &str| -> Result<f64> {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Schema(format!("row {row}: column {name:?} holds {v:?}, expected a finite number")))
        };
        let real = |name: &str| -> Result<f64> { number(name, cell(name)?) };
        let indicator = |name: &str| -> Result<f64> {
            let v = real(name)?;
            if v != 0.0 && v != 1.0 {
                return Err(Error::Schema(format!("row {row}: column {name:?} must be 0 or 1, got {v}")));
            }
            Ok(v)
        };
        let counselors = real("counselors")?;
        if counselors < 0.0 {
            return Err(Error::Schema(format!("row {row}: column \"counselors\" must be non-negative")));
        }
        let extras = extra
            .iter()
            .map(|(i, name)| {
                let v = rec.get(*i).unwrap_or("");
                if v.is_empty() {
                    return Err(Error::Schema(format!("row {row}: missing value in column {name:?}")));
                }
                number(name, v)
            })
            .collect::<Result<Vec<_>>>()?;
        let record = UnitRecord {
            id: cell("id")?.to_string(),
            group: 0,
            lon: real("lon")?,
            lat: real("lat")?,
            counselors,
            ap_ib: indicator("ap_ib")?,
            calculus: indicator("calculus")?,
            outcome: real("outcome")?,
            extras,
        };
        rows.push((record, cell(group_column)?.to_string()));
    }
    for (i, (r, _)) in rows.iter().enumerate() {
        if rows[..i].iter().any(|(o, _)| o.id == r.id) {
            return Err(Error::Schema(format!("duplicate id {:?}", r.id)));
        }
    }

    let groups = match group_order {
        Some(order) => GroupDomain::new(order.iter().cloned())?,
        None => {
            let mut labels: Vec<String> = rows.iter().map(|(_, g)| g.clone()).collect();
            labels.sort();
            labels.dedup();
            GroupDomain::new(labels)?
        }
    };
    let records = rows
        .into_iter()
        .enumerate()
        .map(|(i, (mut r, label))| {
            r.group = groups
                .index_of(&label)
                .ok_or_else(|| Error::Schema(format!("row {}: group {label:?} is not in the group list", i + 2)))?;
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UnitsTable { groups, records, extra_columns: extra.into_iter().map(|(_, h)| h).collect() })
}

pub fn units_csv(table: &UnitsTable) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut header: Vec<String> = REQUIRED.iter().map(|s| s.to_string()).collect();
    header.extend(table.extra_columns.iter().cloned());
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for r in &table.records {
        let mut row = vec![
            r.id.clone(),
            table.groups.label(r.group)?.to_string(),
            r.lon.to_string(),
            r.lat.to_string(),
            r.counselors.to_string(),
            r.ap_ib.to_string(),
            r.calculus.to_string(),
            r.outcome.to_string(),
        ];
        row.extend(r.extras.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// A bound on privilege: a positive number or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauValue {
    Number(f64),
    Text(TauSentinel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TauSentinel {
    #[serde(rename = "inf")]
    Inf,
}

impl TauValue {
    pub fn from_f64(tau: f64) -> Self {
        if tau == f64::INFINITY {
            TauValue::Text(TauSentinel::Inf)
        } else {
            TauValue::Number(tau)
        }
    }

    pub fn value(self) -> f64 {
        match self {
            TauValue::Number(v) => v,
            TauValue::Text(TauSentinel::Inf) => f64::INFINITY,
        }
    }
}

/// Parses `"inf"` or a number.
pub fn parse_tau(text: &str) -> Result<f64> {
    let t = text.trim();
    if t.eq_ignore_ascii_case("inf") {
        return Ok(f64::INFINITY);
    }
    match t.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(Error::Config(format!("tau must be a positive number or \"inf\", got {text:?}"))),
    }
}

fn format_tau(tau: f64) -> String {
    if tau == f64::INFINITY {
        "inf".into()
    } else {
        tau.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    MaxInterference,
    LinearInterference,
    Tabular,
}

fn default_k() -> usize {
    5
}

fn default_true() -> bool {
    true
}

fn default_group_column() -> String {
    "group".into()
}

fn default_prec() -> Vec<String> {
    vec!["ap_ib".into(), "counselors".into()]
}

fn default_model() -> ModelKind {
    ModelKind::MaxInterference
}

/// Settings of a run, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_true")]
    pub include_self: bool,
    pub budget: usize,
    pub tau_list: Vec<TauValue>,
    #[serde(default = "default_group_column")]
    pub group_column: String,
    /// Fixed group order; sorted labels when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_labels: Option<Vec<String>>,
    #[serde(default = "default_prec")]
    pub prec_feature_list: Vec<String>,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn taus(&self) -> Vec<f64> {
        self.tau_list.iter().map(|t| t.value()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        crate::analysis::validate_taus(&self.taus()).map_err(|e| Error::Config(e.to_string()))?;
        if self.solver.abs_gap_tol.is_nan() || self.solver.abs_gap_tol < 0.0 {
            return Err(Error::Config("solver.abs_gap_tol must be non-negative".into()));
        }
        Ok(())
    }

    pub fn knn(&self) -> KnnOptions {
        KnnOptions::new(self.k, self.include_self)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemGroupParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub theta: f64,
}

/// An outcome model keyed by feature names and group labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    MaxInterference {
        params: BTreeMap<String, SemGroupParams>,
        ap_feature: Option<String>,
        counselor_feature: Option<String>,
    },
    LinearInterference {
        #[serde(default)]
        feature_coefs: BTreeMap<String, f64>,
        intercept: BTreeMap<String, f64>,
        own_effect: BTreeMap<String, f64>,
        /// `neighbor_effect[group][neighbor group]`; absent entries are zero.
        #[serde(default)]
        neighbor_effect: BTreeMap<String, BTreeMap<String, f64>>,
        #[serde(default)]
        idle_neighbor_effect: BTreeMap<String, BTreeMap<String, f64>>,
    },
    Tabular {
        /// `values[unit id][group]` lists the outcome per neighbor pattern.
        values: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
    },
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::MaxInterference { .. } => ModelKind::MaxInterference,
            ModelSpec::LinearInterference { .. } => ModelKind::LinearInterference,
            ModelSpec::Tabular { .. } => ModelKind::Tabular,
        }
    }

    pub fn from_model(model: &OutcomeModel<f64>, features: &[String], groups: &GroupDomain, ids: &[String]) -> Result<Self> {
        let label = |a: usize| groups.label(a).map(str::to_string);
        let feature = |f: usize| {
            features.get(f).cloned().ok_or_else(|| Error::InvalidModel(format!("feature index {f} has no column")))
        };
        let per_group = |v: &[T64]| -> Result<BTreeMap<String, f64>> { v.iter().enumerate().map(|(a, &x)| Ok((label(a)?, x))).collect() };
        let matrix = |m: &[Vec<f64>]| -> Result<BTreeMap<String, BTreeMap<String, f64>>> {
            m.iter().enumerate().map(|(a, row)| Ok((label(a)?, per_group(row)?))).collect()
        };
        Ok(match model {
            OutcomeModel::MaxInterference(m) => ModelSpec::MaxInterference {
                params: (0..m.params.n_groups())
                    .map(|a| {
                        let [alpha, beta, gamma, theta] = m.params.group(a);
                        Ok((label(a)?, SemGroupParams { alpha, beta, gamma, theta }))
                    })
                    .collect::<Result<_>>()?,
                ap_feature: m.ap_feature.map(feature).transpose()?,
                counselor_feature: m.counselor_feature.map(feature).transpose()?,
            },
            OutcomeModel::LinearInterference(m) => ModelSpec::LinearInterference {
                feature_coefs: m.feature_coefs.iter().map(|&(f, c)| Ok((feature(f)?, c))).collect::<Result<_>>()?,
                intercept: per_group(&m.intercept)?,
                own_effect: per_group(&m.own_effect)?,
                neighbor_effect: matrix(&m.neighbor_effect)?,
                idle_neighbor_effect: matrix(&m.idle_neighbor_effect)?,
            },
            OutcomeModel::Tabular(m) => ModelSpec::Tabular {
                values: m
                    .values
                    .iter()
                    .enumerate()
                    .map(|(i, per_group)| {
                        let id = ids.get(i).cloned().ok_or_else(|| Error::InvalidModel(format!("table row {i} has no unit")))?;
                        let row = per_group.iter().enumerate().map(|(a, v)| Ok((label(a)?, v.clone()))).collect::<Result<_>>()?;
                        Ok((id, row))
                    })
                    .collect::<Result<_>>()?,
            },
        })
    }

    pub fn to_model(&self, features: &[String], groups: &GroupDomain, ids: &[String]) -> Result<OutcomeModel<f64>> {
        let feature = |name: &str| {
            features
                .iter()
                .position(|f| f == name)
                .ok_or_else(|| Error::InvalidModel(format!("model refers to unknown feature {name:?}")))
        };
        let check_labels = |what: &str, keys: Vec<&String>| -> Result<()> {
            if let Some(k) = keys.iter().find(|k| groups.index_of(k).is_none()) {
                return Err(Error::InvalidModel(format!("{what} names unknown group {k:?}")));
            }
            Ok(())
        };
        let per_group = |what: &str, map: &BTreeMap<String, f64>, required: bool| -> Result<Vec<f64>> {
            check_labels(what, map.keys().collect())?;
            groups
                .labels()
                .iter()
                .map(|l| match map.get(l) {
                    Some(&v) => Ok(v),
                    None if !required => Ok(0.0),
                    None => Err(Error::InvalidModel(format!("{what} lacks group {l:?}"))),
                })
                .collect()
        };
        let matrix = |what: &str, map: &BTreeMap<String, BTreeMap<String, f64>>| -> Result<Vec<Vec<f64>>> {
            check_labels(what, map.keys().collect())?;
            let empty = BTreeMap::new();
            groups.labels().iter().map(|l| per_group(what, map.get(l).unwrap_or(&empty), false)).collect()
        };
        Ok(match self {
            ModelSpec::MaxInterference { params, ap_feature, counselor_feature } => {
                check_labels("params", params.keys().collect())?;
                let mut sem = SemParams::zeros(groups.len());
                for (a, l) in groups.labels().iter().enumerate() {
                    let p = params.get(l).ok_or_else(|| Error::InvalidModel(format!("params lack group {l:?}")))?;
                    sem.set_group(a, [p.alpha, p.beta, p.gamma, p.theta]);
                }
                MaxInterferenceModel::new(
                    sem,
                    ap_feature.as_deref().map(feature).transpose()?,
                    counselor_feature.as_deref().map(feature).transpose()?,
                )?
                .into()
            }
            ModelSpec::LinearInterference { feature_coefs, intercept, own_effect, neighbor_effect, idle_neighbor_effect } => {
                let mut coefs = feature_coefs.iter().map(|(f, &c)| Ok((feature(f)?, c))).collect::<Result<Vec<_>>>()?;
                coefs.sort_by_key(|&(f, _)| f);
                LinearInterferenceModel::new(
                    coefs,
                    per_group("intercept", intercept, true)?,
                    per_group("own_effect", own_effect, true)?,
                    matrix("neighbor_effect", neighbor_effect)?,
                    matrix("idle_neighbor_effect", idle_neighbor_effect)?,
                )?
                .into()
            }
            ModelSpec::Tabular { values } => {
                if let Some(id) = values.keys().find(|id| !ids.contains(id)) {
                    return Err(Error::InvalidModel(format!("table names unknown unit {id:?}")));
                }
                let rows = ids
                    .iter()
                    .map(|id| {
                        let per = values.get(id).ok_or_else(|| Error::InvalidModel(format!("table lacks unit {id:?}")))?;
                        check_labels("table", per.keys().collect())?;
                        groups
                            .labels()
                            .iter()
                            .map(|l| per.get(l).cloned().ok_or_else(|| Error::InvalidModel(format!("unit {id:?} lacks group {l:?}"))))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                TabularModel::new(rows, groups.len())?.into()
            }
        })
    }
}

type T64 = f64;

/// Fit diagnostics stored next to a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub residual_variance: BTreeMap<String, f64>,
    pub n_per_group: BTreeMap<String, usize>,
    /// `[alpha, beta, gamma, theta]` standard errors; absent for groups with
    /// exactly four units.
    pub standard_errors: BTreeMap<String, Option<[f64; 4]>>,
}

impl FitReport {
    pub fn new(fit: &FitResult<f64>, groups: &GroupDomain) -> Self {
        let labels = groups.labels();
        Self {
            residual_variance: labels.iter().cloned().zip(fit.residual_variance.iter().copied()).collect(),
            n_per_group: labels.iter().cloned().zip(fit.n_per_group.iter().copied()).collect(),
            standard_errors: labels.iter().cloned().zip(fit.standard_errors.iter().copied()).collect(),
        }
    }
}

/// Contents of a model file. Without `privilege`, the privilege model is the
/// objective model restricted to the non-descendant features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub objective: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub privilege: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitReport>,
}

impl ModelFile {
    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }
}

pub fn load_model_file(path: &Path) -> Result<ModelFile> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

fn to_json<S: Serialize>(value: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Restriction of `model` to the features in `mask`: linear models drop the
/// other feature terms; the other kinds must not read them.
pub fn restrict_to_prec(model: &OutcomeModel<f64>, mask: &[bool]) -> Result<OutcomeModel<f64>> {
    use crate::outcome::StructuralOutcomeModel;
    let allowed = |f: usize| mask.get(f).copied().unwrap_or(false);
    match model {
        OutcomeModel::LinearInterference(m) => Ok(m.restricted(allowed).into()),
        other => {
            if let Some(f) = other.features_read().into_iter().find(|&f| !allowed(f)) {
                return Err(Error::Config(format!(
                    "the model reads feature {f}, which is not in prec_feature_list; supply an explicit privilege model"
                )));
            }
            Ok(other.clone())
        }
    }
}

/// Everything a run needs, loaded and cross-checked.
#[derive(Debug, Clone)]
pub struct RunInputs {
    pub table: UnitsTable,
    pub config: RunConfig,
    pub problem: AllocationProblem<f64>,
}

impl RunInputs {
    pub fn load(units: &Path, model: &Path, config: &Path) -> Result<Self> {
        let config = load_config(config)?;
        let table = load_units(units, &config.group_column, config.group_labels.as_deref())?;
        let file = load_model_file(model)?;
        Self::assemble(table, &file, config)
    }

    pub fn assemble(table: UnitsTable, file: &ModelFile, config: RunConfig) -> Result<Self> {
        config.validate()?;
        if file.objective.kind() != config.model {
            return Err(Error::Config(format!(
                "config selects model {:?} but the model file holds {:?}",
                config.model,
                file.objective.kind()
            )));
        }
        let units = table.units(&config.prec_feature_list)?;
        let names = table.feature_names();
        let ids: Vec<String> = table.records.iter().map(|r| r.id.clone()).collect();
        let objective = file.objective.to_model(&names, &table.groups, &ids)?;
        let privilege = match &file.privilege {
            Some(spec) => spec.to_model(&names, &table.groups, &ids)?,
            None => restrict_to_prec(&objective, &units.first().map(|u| u.prec_mask.clone()).unwrap_or_default())?,
        };
        let graph = build_knn_graph(&units, config.knn())?;
        if let OutcomeModel::Tabular(t) = &objective {
            t.validate_against(&graph)?;
        }
        if let OutcomeModel::Tabular(t) = &privilege {
            t.validate_against(&graph)?;
        }
        let tau = config.taus().last().copied().unwrap_or(f64::INFINITY);
        let problem = AllocationProblem::new(units, graph, objective, privilege, table.groups.clone(), config.budget, tau)?;
        Ok(Self { table, config, problem })
    }
}

/// Writes `units.csv`, `model.json` and `config.toml` for an instance.
pub fn write_instance(instance: &SyntheticInstance, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let table = UnitsTable {
        groups: instance.groups.clone(),
        records: instance.records.clone(),
        extra_columns: instance.extra_columns.clone(),
    };
    write_file(&dir.join("units.csv"), units_csv(&table)?.as_bytes())?;
    let names = instance.feature_names();
    let ids: Vec<String> = instance.records.iter().map(|r| r.id.clone()).collect();
    let objective = ModelSpec::from_model(&instance.objective_model, &names, &instance.groups, &ids)?;
    let derived = restrict_to_prec(&instance.objective_model, &instance.prec_mask()).ok();
    let privilege = if derived.as_ref() == Some(&instance.privilege_model) {
        None
    } else {
        Some(ModelSpec::from_model(&instance.privilege_model, &names, &instance.groups, &ids)?)
    };
    let file = ModelFile { objective: objective.clone(), privilege, fit: None };
    write_file(&dir.join("model.json"), file.to_json()?.as_bytes())?;
    let config = RunConfig {
        k: instance.knn.k,
        include_self: instance.knn.include_self,
        budget: instance.budget,
        tau_list: instance.taus.iter().map(|&t| TauValue::from_f64(t)).collect(),
        group_column: default_group_column(),
        group_labels: Some(instance.groups.labels().to_vec()),
        prec_feature_list: instance.prec_features.clone(),
        model: objective.kind(),
        solver: SolverConfig::default(),
        seed: instance.seed,
    };
    write_file(&dir.join("config.toml"), config.to_toml()?.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitGaps {
    pub id: String,
    /// Privilege over each counterfactual group.
    pub gaps: BTreeMap<String, f64>,
}

/// Serialized [`Solution`]. Allocations list the treated unit ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub status: SolveStatus,
    pub tau: TauValue,
    pub budget: usize,
    pub z: Option<Vec<String>>,
    pub objective: Option<f64>,
    /// Best proven upper bound; `null` when no allocation is feasible.
    pub bound: Option<f64>,
    pub budget_used: Option<usize>,
    pub nodes_explored: usize,
    pub per_unit_gaps: Option<Vec<UnitGaps>>,
}

impl SolutionFile {
    pub fn new(problem: &AllocationProblem<f64>, solution: &Solution<f64>) -> Result<Self> {
        let ids: Vec<&str> = problem.units().iter().map(|u| u.id.as_str()).collect();
        let labels = problem.groups().labels();
        Ok(Self {
            status: solution.status,
            tau: TauValue::from_f64(problem.tau()),
            budget: problem.budget(),
            z: solution
                .z
                .as_ref()
                .map(|z| z.iter().zip(&ids).filter(|(on, _)| **on).map(|(_, id)| id.to_string()).collect()),
            objective: solution.objective,
            bound: solution.bound.is_finite().then_some(solution.bound),
            budget_used: solution.budget_used(),
            nodes_explored: solution.nodes_explored,
            per_unit_gaps: solution.per_unit_gaps.as_ref().map(|gaps| {
                gaps.iter()
                    .zip(&ids)
                    .map(|(row, id)| UnitGaps {
                        id: id.to_string(),
                        gaps: labels.iter().cloned().zip(row.iter().copied()).collect(),
                    })
                    .collect()
            }),
        })
    }

    /// Allocation vector over `problem`'s units, if the file holds one.
    pub fn allocation(&self, problem: &AllocationProblem<f64>) -> Result<Option<Vec<bool>>> {
        let Some(ids) = &self.z else { return Ok(None) };
        let mut z = vec![false; problem.n()];
        for id in ids {
            let i = problem
                .units()
                .iter()
                .position(|u| &u.id == id)
                .ok_or_else(|| Error::Schema(format!("solution treats unknown unit {id:?}")))?;
            z[i] = true;
        }
        Ok(Some(z))
    }

    /// In-memory solution over `problem`'s units.
    pub fn to_solution(&self, problem: &AllocationProblem<f64>) -> Result<Solution<f64>> {
        let z = self.allocation(problem)?;
        Ok(Solution {
            status: self.status,
            per_unit_gaps: z.as_ref().map(|z| problem.evaluate_policy(z).map(|r| r.gaps)).transpose()?,
            z,
            objective: self.objective,
            bound: self.bound.unwrap_or(f64::NEG_INFINITY),
            nodes_explored: self.nodes_explored,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }
}

pub fn load_solution_file(path: &Path) -> Result<SolutionFile> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

pub fn summary_json(summary: &GroupAllocationSummary<f64>) -> Result<String> {
    to_json(summary)
}

/// `tau,status,objective,bound,treated_<group>...` with one row per point.
pub fn path_csv(problem: &AllocationProblem<f64>, path: &SolutionPath<f64>) -> Result<String> {
    let labels = problem.groups().labels();
    let mut out = String::from("tau,status,objective,bound");
    for l in labels {
        let _ = write!(out, ",treated_{l}");
    }
    out.push('\n');
    let groups: Vec<usize> = problem.units().iter().map(|u| u.group).collect();
    for point in &path.points {
        let s = &point.solution;
        let show = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        let _ = write!(
            out,
            "{},{},{},{}",
            format_tau(point.tau),
            s.status.as_str(),
            show(s.objective),
            show(s.bound.is_finite().then_some(s.bound))
        );
        let mut counts = vec![0usize; labels.len()];
        if let Some(z) = &s.z {
            for (i, _) in z.iter().enumerate().filter(|(_, on)| **on) {
                counts[groups[i]] += 1;
            }
        }
        for c in counts {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes `contents` to `path`.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    write_file(path, contents.as_bytes())
}

pub fn write_bytes(path: &Path, contents: &[u8]) -> Result<()> {
    write_file(path, contents)
}
