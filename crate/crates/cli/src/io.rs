//! File formats: CMDP models, policy checkpoints, metric tables, manifests.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use ecop_core::approx::{Activation, ParamBlock, PolicyApproximator, PolicyHead, PolicyKind};
use ecop_core::cmdp::EpisodicCmdp;
use ecop_core::ecop::TrainingRecord;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A threshold as stored on disk: a number, or `"inf"` / `"-inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum ThresholdRepr {
    Number(f64),
    Text(String),
}

impl ThresholdRepr {
    fn from_value(d: f64) -> Self {
        if d == f64::INFINITY {
            ThresholdRepr::Text("inf".into())
        } else if d == f64::NEG_INFINITY {
            ThresholdRepr::Text("-inf".into())
        } else {
            ThresholdRepr::Number(d)
        }
    }

    fn value(&self) -> Result<f64> {
        match self {
            ThresholdRepr::Number(d) => Ok(*d),
            ThresholdRepr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            ThresholdRepr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            ThresholdRepr::Text(t) => bail!("threshold '{t}' is neither a number nor \"inf\""),
        }
    }
}

/// CMDP model file: dimensions, dense `[s][a][s']` tensors as nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CmdpFile {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    thresholds: Vec<ThresholdRepr>,
    initial_dist: Vec<f64>,
    transition: Vec<Vec<Vec<f64>>>,
    reward: Vec<Vec<Vec<f64>>>,
    costs: Vec<Vec<Vec<Vec<f64>>>>,
}

fn nest(flat: &[f64], s_n: usize, a_n: usize) -> Vec<Vec<Vec<f64>>> {
    (0..s_n).map(|s| (0..a_n).map(|a| flat[(s * a_n + a) * s_n..(s * a_n + a + 1) * s_n].to_vec()).collect()).collect()
}

fn flatten(nested: &[Vec<Vec<f64>>], s_n: usize, a_n: usize, what: &str) -> Result<Vec<f64>> {
    ensure!(nested.len() == s_n, "{what}: expected {s_n} state blocks, found {}", nested.len());
    let mut out = Vec::with_capacity(s_n * a_n * s_n);
    for (s, block) in nested.iter().enumerate() {
        ensure!(block.len() == a_n, "{what}[{s}]: expected {a_n} action rows, found {}", block.len());
        for (a, row) in block.iter().enumerate() {
            ensure!(row.len() == s_n, "{what}[{s}][{a}]: expected {s_n} entries, found {}", row.len());
            out.extend_from_slice(row);
        }
    }
    Ok(out)
}

pub fn cmdp_to_json(cmdp: &EpisodicCmdp) -> String {
    let (s_n, a_n) = (cmdp.num_states(), cmdp.num_actions());
    let file = CmdpFile {
        num_states: s_n,
        num_actions: a_n,
        horizon: cmdp.horizon(),
        thresholds: cmdp.thresholds().iter().map(|d| ThresholdRepr::from_value(*d)).collect(),
        initial_dist: cmdp.initial_dist().to_vec(),
        transition: nest(cmdp.transition_tensor(), s_n, a_n),
        reward: nest(cmdp.reward_tensor(), s_n, a_n),
        costs: cmdp.cost_tensors().iter().map(|c| nest(c, s_n, a_n)).collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("model serializes");
    text.push('\n');
    text
}

pub fn cmdp_from_json(text: &str) -> Result<EpisodicCmdp> {
    let file: CmdpFile = serde_json::from_str(text)?;
    let (s_n, a_n) = (file.num_states, file.num_actions);
    let transition = flatten(&file.transition, s_n, a_n, "transition")?;
    let reward = flatten(&file.reward, s_n, a_n, "reward")?;
    let costs = file
        .costs
        .iter()
        .enumerate()
        .map(|(i, c)| flatten(c, s_n, a_n, &format!("costs[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let thresholds = file.thresholds.iter().map(ThresholdRepr::value).collect::<Result<Vec<_>>>()?;
    Ok(EpisodicCmdp::new(s_n, a_n, file.horizon, transition, reward, costs, thresholds, file.initial_dist)?)
}

pub fn read_cmdp(path: &Path) -> Result<EpisodicCmdp> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    cmdp_from_json(&text).with_context(|| format!("parsing model {}", path.display()))
}

pub fn write_cmdp(path: &Path, cmdp: &EpisodicCmdp) -> Result<()> {
    std::fs::write(path, cmdp_to_json(cmdp)).with_context(|| format!("writing model {}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum HeadRepr {
    Categorical { num_actions: usize },
    Gaussian { action_dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum KindRepr {
    TabularSoftmax { horizon: usize, num_states: usize, num_actions: usize },
    TimeConditionedNet { horizon: usize, feature_dim: usize, hidden: [usize; 2], activation: String, head: HeadRepr },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockRepr {
    name: String,
    start: usize,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    kind: KindRepr,
    layout: Vec<BlockRepr>,
    values: Vec<f64>,
}

const CHECKPOINT_FORMAT: &str = "ecop-policy-1";

/// Decimal-text checkpoint with the parameter layout; values use shortest
/// round-trip formatting, so reading restores them exactly.
pub fn checkpoint_to_json(policy: &PolicyApproximator) -> String {
    let kind = match *policy.kind() {
        PolicyKind::TabularSoftmax { horizon, num_states, num_actions } => {
            KindRepr::TabularSoftmax { horizon, num_states, num_actions }
        }
        PolicyKind::TimeConditionedNet { horizon, feature_dim, hidden, activation, head } => KindRepr::TimeConditionedNet {
            horizon,
            feature_dim,
            hidden,
            activation: match activation {
                Activation::Tanh => "tanh".into(),
                Activation::Relu => "relu".into(),
            },
            head: match head {
                PolicyHead::Categorical { num_actions } => HeadRepr::Categorical { num_actions },
                PolicyHead::Gaussian { action_dim } => HeadRepr::Gaussian { action_dim },
            },
        },
    };
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        kind,
        layout: policy
            .params()
            .layout()
            .iter()
            .map(|b| BlockRepr { name: b.name.clone(), start: b.start, len: b.len })
            .collect(),
        values: policy.params().values().to_vec(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("checkpoint serializes");
    text.push('\n');
    text
}

pub fn checkpoint_from_json(text: &str) -> Result<PolicyApproximator> {
    let file: CheckpointFile = serde_json::from_str(text)?;
    ensure!(file.format == CHECKPOINT_FORMAT, "unsupported checkpoint format '{}'", file.format);
    let kind = match file.kind {
        KindRepr::TabularSoftmax { horizon, num_states, num_actions } => {
            PolicyKind::TabularSoftmax { horizon, num_states, num_actions }
        }
        KindRepr::TimeConditionedNet { horizon, feature_dim, hidden, activation, head } => PolicyKind::TimeConditionedNet {
            horizon,
            feature_dim,
            hidden,
            activation: match activation.as_str() {
                "tanh" => Activation::Tanh,
                "relu" => Activation::Relu,
                other => bail!("unknown activation '{other}'"),
            },
            head: match head {
                HeadRepr::Categorical { num_actions } => PolicyHead::Categorical { num_actions },
                HeadRepr::Gaussian { action_dim } => PolicyHead::Gaussian { action_dim },
            },
        },
    };
    let policy = PolicyApproximator::from_parts(kind, file.values)?;
    let stored: Vec<ParamBlock> =
        file.layout.into_iter().map(|b| ParamBlock { name: b.name, start: b.start, len: b.len }).collect();
    ensure!(stored == policy.params().layout(), "checkpoint layout does not match its policy kind");
    Ok(policy)
}

pub fn read_checkpoint(path: &Path) -> Result<PolicyApproximator> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    checkpoint_from_json(&text).with_context(|| format!("parsing checkpoint {}", path.display()))
}

/// A CSV table held as text cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Reads the plain comma-separated files this tool writes (no quoting).
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<String> = lines.next().context("empty table")?.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: Vec<String> = line.split(',').map(str::to_string).collect();
            ensure!(row.len() == header.len(), "row {} has {} cells, header has {}", i + 2, row.len(), header.len());
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j].as_str()).collect())
    }
}

/// Header of a training table:
/// `episode,J,J_C1..J_Cm,lambda_max_1..m,beta,loss,feasible,seconds`, with a
/// trailing `algorithm` column for the comparison baselines.
pub fn record_header(m: usize, algorithm_column: bool) -> Vec<String> {
    let mut h = vec!["episode".to_string(), "J".to_string()];
    h.extend((1..=m).map(|i| format!("J_C{i}")));
    h.extend((1..=m).map(|i| format!("lambda_max_{i}")));
    h.extend(["beta", "loss", "feasible", "seconds"].map(String::from));
    if algorithm_column {
        h.push("algorithm".into());
    }
    h
}

pub fn record_row(rec: &TrainingRecord, algorithm: Option<&str>) -> Vec<String> {
    let mut row = vec![rec.episode.to_string(), rec.reward.to_string()];
    row.extend(rec.costs.iter().map(f64::to_string));
    row.extend(rec.lambda_max.iter().map(f64::to_string));
    row.push(rec.beta.to_string());
    row.push(rec.loss.to_string());
    row.push(rec.feasible.to_string());
    row.push(rec.seconds.to_string());
    if let Some(a) = algorithm {
        row.push(a.into());
    }
    row
}

/// Per-row mean and sample standard deviation across tables of equal
/// schema. The first column is the row key; other columns are aggregated when
/// every cell parses as a number. Shorter tables contribute their last row to
/// later keys (an early-stopped run holds its final policy).
pub fn aggregate(tables: &[Table]) -> Result<Table> {
    let first = tables.first().context("nothing to aggregate")?;
    for t in tables {
        ensure!(t.header == first.header, "tables with different columns cannot be aggregated");
        ensure!(!t.rows.is_empty(), "cannot aggregate an empty table");
    }
    let numeric: Vec<usize> = (1..first.header.len())
        .filter(|&j| tables.iter().all(|t| t.rows.iter().all(|r| r[j].parse::<f64>().is_ok())))
        .collect();
    let mut header = vec![first.header[0].clone()];
    for &j in &numeric {
        header.push(format!("{}_mean", first.header[j]));
        header.push(format!("{}_std", first.header[j]));
    }
    let longest = tables.iter().max_by_key(|t| t.rows.len()).expect("non-empty");
    let mut out = Table::new(header);
    for (i, key_row) in longest.rows.iter().enumerate() {
        let mut row = vec![key_row[0].clone()];
        for &j in &numeric {
            let values: Vec<f64> =
                tables.iter().map(|t| t.rows[i.min(t.rows.len() - 1)][j].parse::<f64>().expect("checked")).collect();
            let (mean, std) = mean_and_sample_std(&values);
            row.push(mean.to_string());
            row.push(std.to_string());
        }
        out.rows.push(row);
    }
    Ok(out)
}

/// Mean and `n − 1` standard deviation (0 for a single value).
pub fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        write!(out, "{b:02x}").expect("writing to a string");
    }
    out
}

/// Provenance of a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub tool_version: String,
    pub core_version: String,
    pub config_file: String,
    pub config_sha256: String,
    pub algorithm: String,
    pub env: String,
    pub seed_offset: u64,
    pub seeds: Vec<u64>,
    pub files: Vec<String>,
}
