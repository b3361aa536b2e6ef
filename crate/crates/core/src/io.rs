//! File formats for datasets, models and fit artifacts.
//!
//! * Edges: one `u<TAB>v` line per follow edge (`u` is followed by `v`).
//!   Lines starting with `#` are comments; `# nodes N` fixes the node count,
//!   which otherwise is one past the largest index seen.
//! * Cascades: one `id<TAB>polarity<TAB>u1 u2 ...` line per item, users in
//!   activation order.
//! * Trace: one `kind<TAB>community<TAB>payload` line per generated link
//!   (`link`, payload `u v`) or item (`item`, payload the item id).
//! * Models, ground truth and manifests are JSON documents.
//!
//! Floats are written in their shortest round-trip form, so reading a file
//! back reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{GeneratorConfig, Memberships, Trace};
use crate::model::{CascadeSet, HyperParams, Item, ModelParams, SocialGraph, Table};

pub const EDGES_FILE: &str = "edges.tsv";
pub const CASCADES_FILE: &str = "cascades.tsv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const TRACE_FILE: &str = "trace.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory values serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Non-comment, non-blank lines with their 1-based numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn nodes_directive(text: &str) -> Option<(usize, &str)> {
    text.lines().enumerate().find_map(|(i, l)| {
        l.strip_prefix("# nodes")
            .filter(|rest| rest.starts_with(char::is_whitespace))
            .map(|rest| (i + 1, rest.trim()))
    })
}

fn parse_node(path: &Path, line: usize, field: &str) -> Result<usize> {
    field
        .parse()
        .map_err(|_| parse_error(path, line, format!("invalid node index {field:?}")))
}

pub fn format_edges(graph: &SocialGraph) -> String {
    let mut out = format!("# nodes {}\n", graph.num_nodes());
    for &(u, v) in graph.edges() {
        writeln!(out, "{u}\t{v}").unwrap();
    }
    out
}

/// Edge list and the declared node count, if the file has one.
pub fn parse_edges(path: &Path, text: &str) -> Result<(Option<usize>, Vec<(usize, usize)>)> {
    let declared = match nodes_directive(text) {
        Some((line, n)) => Some(
            n.parse()
                .map_err(|_| parse_error(path, line, format!("invalid node count {n:?}")))?,
        ),
        None => None,
    };
    let mut edges = Vec::new();
    for (line, l) in data_lines(text) {
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != 2 {
            return Err(parse_error(path, line, format!("expected 2 tab-separated fields, got {}", fields.len())));
        }
        let u = parse_node(path, line, fields[0].trim())?;
        let v = parse_node(path, line, fields[1].trim())?;
        if u == v {
            return Err(parse_error(path, line, format!("self-loop on node {u}")));
        }
        if let Some(n) = declared {
            if u >= n || v >= n {
                return Err(parse_error(path, line, format!("node index out of range for {n} nodes")));
            }
        }
        edges.push((u, v));
    }
    Ok((declared, edges))
}

pub fn format_cascades(cascades: &CascadeSet) -> String {
    let mut out = format!("# nodes {}\n", cascades.num_nodes());
    for item in cascades.items() {
        let users: Vec<String> = item.activated.iter().map(|u| u.to_string()).collect();
        writeln!(out, "{}\t{}\t{}", item.id, item.polarity, users.join(" ")).unwrap();
    }
    out
}

pub fn parse_cascades(path: &Path, text: &str) -> Result<(Option<usize>, Vec<Item>)> {
    let declared = match nodes_directive(text) {
        Some((line, n)) => Some(
            n.parse()
                .map_err(|_| parse_error(path, line, format!("invalid node count {n:?}")))?,
        ),
        None => None,
    };
    let mut items = Vec::new();
    let mut ids = std::collections::HashSet::new();
    for (line, l) in data_lines(text) {
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_error(path, line, format!("expected 3 tab-separated fields, got {}", fields.len())));
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(parse_error(path, line, "empty item id"));
        }
        if !ids.insert(id.to_string()) {
            return Err(parse_error(path, line, format!("duplicate item id {id:?}")));
        }
        let polarity: f64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| parse_error(path, line, format!("invalid polarity {:?}", fields[1])))?;
        if !(polarity.abs() <= 1.0) {
            return Err(parse_error(path, line, format!("polarity {polarity} outside [-1, 1]")));
        }
        let activated = fields[2]
            .split_whitespace()
            .map(|f| parse_node(path, line, f))
            .collect::<Result<Vec<_>>>()?;
        let item = Item {
            id: id.to_string(),
            polarity,
            activated,
        };
        item.validate(declared.unwrap_or(usize::MAX))
            .map_err(|e| parse_error(path, line, e.to_string()))?;
        items.push(item);
    }
    Ok((declared, items))
}

/// A follow graph and cascades over the same node set.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: SocialGraph,
    pub cascades: CascadeSet,
}

/// Reads an edges file and a cascades file. The node count is the declared
/// one when either file declares it (they must agree), else one past the
/// largest index in either file.
pub fn read_dataset(edges_path: &Path, cascades_path: &Path) -> Result<Dataset> {
    let (n_edges, edges) = parse_edges(edges_path, &read_text(edges_path)?)?;
    let (n_items, items) = parse_cascades(cascades_path, &read_text(cascades_path)?)?;
    let n = match (n_edges, n_items) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::input(format!(
                "{} declares {a} nodes but {} declares {b}",
                edges_path.display(),
                cascades_path.display()
            )))
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => edges
            .iter()
            .flat_map(|&(u, v)| [u, v])
            .chain(items.iter().flat_map(|i| i.activated.iter().copied()))
            .max()
            .map_or(0, |m| m + 1),
    };
    Ok(Dataset {
        graph: SocialGraph::new(n, edges)?,
        cascades: CascadeSet::new(n, items)?,
    })
}

/// Model file: parameters as row lists plus the hyperparameters that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub num_communities: usize,
    pub num_nodes: usize,
    pub eta: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub hyper: HyperParams,
}

impl ModelFile {
    pub fn new(params: &ModelParams, hyper: &HyperParams) -> Self {
        ModelFile {
            num_communities: params.num_communities(),
            num_nodes: params.num_nodes(),
            eta: params.eta.clone(),
            theta: params.theta.to_rows(),
            phi: params.phi.to_rows(),
            hyper: hyper.clone(),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        let table = |rows: &[Vec<f64>], what: &str| -> Result<Table> {
            let t = Table::from_rows(rows.to_vec())?;
            if t.rows() != self.num_communities || t.cols() != self.num_nodes {
                return Err(Error::shape(format!(
                    "{what} is {}x{}, expected {}x{}",
                    t.rows(),
                    t.cols(),
                    self.num_communities,
                    self.num_nodes
                )));
            }
            Ok(t)
        };
        if self.eta.len() != self.num_communities {
            return Err(Error::shape(format!(
                "eta has {} entries, expected {}",
                self.eta.len(),
                self.num_communities
            )));
        }
        ModelParams::new(
            self.eta.clone(),
            table(&self.theta, "theta")?,
            table(&self.phi, "phi")?,
        )
    }
}

pub fn write_model(path: &Path, params: &ModelParams, hyper: &HyperParams) -> Result<()> {
    write_json(path, &ModelFile::new(params, hyper))
}

pub fn read_model(path: &Path) -> Result<(ModelParams, HyperParams)> {
    let file: ModelFile = read_json(path)?;
    let params = file.params().map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    Ok((params, file.hyper))
}

/// Ground-truth file: the generating parameters and per-node mixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub eta: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    /// `N x K` per-node polarized mixtures before row normalization.
    pub node_theta: Vec<Vec<f64>>,
    pub node_phi: Vec<Vec<f64>>,
}

impl GroundTruthFile {
    pub fn new(m: &Memberships) -> Self {
        GroundTruthFile {
            eta: m.params.eta.clone(),
            theta: m.params.theta.to_rows(),
            phi: m.params.phi.to_rows(),
            node_theta: m.node_theta.to_rows(),
            node_phi: m.node_phi.to_rows(),
        }
    }

    pub fn memberships(&self) -> Result<Memberships> {
        let params = ModelParams::new(
            self.eta.clone(),
            Table::from_rows(self.theta.clone())?,
            Table::from_rows(self.phi.clone())?,
        )?;
        let node_theta = Table::from_rows(self.node_theta.clone())?;
        let node_phi = Table::from_rows(self.node_phi.clone())?;
        let (k, n) = (params.num_communities(), params.num_nodes());
        for t in [&node_theta, &node_phi] {
            if t.rows() != n || (n > 0 && t.cols() != k) {
                return Err(Error::shape(format!(
                    "node mixtures are {}x{}, expected {n}x{k}",
                    t.rows(),
                    t.cols()
                )));
            }
        }
        Ok(Memberships {
            params,
            node_theta,
            node_phi,
        })
    }
}

pub fn write_ground_truth(path: &Path, m: &Memberships) -> Result<()> {
    write_json(path, &GroundTruthFile::new(m))
}

pub fn read_ground_truth(path: &Path) -> Result<Memberships> {
    let file: GroundTruthFile = read_json(path)?;
    file.memberships()
        .map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

pub fn format_trace(trace: &Trace, graph: &SocialGraph, cascades: &CascadeSet) -> String {
    let mut out = String::from("# kind\tcommunity\tpayload\n");
    for (&c, &(u, v)) in trace.links.iter().zip(graph.edges()) {
        writeln!(out, "link\t{c}\t{u} {v}").unwrap();
    }
    for (&c, item) in trace.items.iter().zip(cascades.items()) {
        writeln!(out, "item\t{c}\t{}", item.id).unwrap();
    }
    out
}

/// One record of a trace file.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceRecord {
    Link { community: usize, u: usize, v: usize },
    Item { community: usize, id: String },
}

pub fn parse_trace(path: &Path, text: &str) -> Result<Vec<TraceRecord>> {
    data_lines(text)
        .map(|(line, l)| {
            let fields: Vec<&str> = l.split('\t').collect();
            if fields.len() != 3 {
                return Err(parse_error(path, line, "expected kind, community and payload"));
            }
            let community = fields[1]
                .parse()
                .map_err(|_| parse_error(path, line, format!("invalid community {:?}", fields[1])))?;
            match fields[0] {
                "link" => {
                    let ends: Vec<&str> = fields[2].split(' ').collect();
                    if ends.len() != 2 {
                        return Err(parse_error(path, line, "link payload must be `u v`"));
                    }
                    Ok(TraceRecord::Link {
                        community,
                        u: parse_node(path, line, ends[0])?,
                        v: parse_node(path, line, ends[1])?,
                    })
                }
                "item" => Ok(TraceRecord::Item {
                    community,
                    id: fields[2].to_string(),
                }),
                other => Err(parse_error(path, line, format!("unknown record kind {other:?}"))),
            }
        })
        .collect()
}

/// Generation manifest: the config (seed included) and the files it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: GeneratorConfig,
    pub edges: String,
    pub cascades: String,
    pub ground_truth: String,
    pub trace: String,
}

impl Manifest {
    pub fn new(generator: GeneratorConfig) -> Self {
        Manifest {
            generator,
            edges: EDGES_FILE.into(),
            cascades: CASCADES_FILE.into(),
            ground_truth: GROUND_TRUTH_FILE.into(),
            trace: TRACE_FILE.into(),
        }
    }
}

/// Paths of a dataset on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub edges: PathBuf,
    pub cascades: PathBuf,
    pub ground_truth: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

impl DatasetBundle {
    /// The standard file names inside `dir`; optional files only if present.
    pub fn in_dir(dir: &Path) -> Self {
        let optional = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
        DatasetBundle {
            edges: dir.join(EDGES_FILE),
            cascades: dir.join(CASCADES_FILE),
            ground_truth: optional(GROUND_TRUTH_FILE),
            manifest: optional(MANIFEST_FILE),
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        read_dataset(&self.edges, &self.cascades)
    }

    pub fn load_ground_truth(&self) -> Result<Option<Memberships>> {
        self.ground_truth.as_deref().map(read_ground_truth).transpose()
    }
}

pub fn format_values(values: &[f64]) -> String {
    let mut out = String::new();
    for v in values {
        writeln!(out, "{v}").unwrap();
    }
    out
}

pub fn parse_values(path: &Path, text: &str) -> Result<Vec<f64>> {
    data_lines(text)
        .map(|(line, l)| {
            l.trim()
                .parse()
                .map_err(|_| parse_error(path, line, format!("invalid number {l:?}")))
        })
        .collect()
}
