use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "lp_homo")]
    LpHomogeneous,
    #[serde(rename = "lp_kg")]
    LpKg,
    #[serde(rename = "nc")]
    NodeClassification,
    #[serde(rename = "gc")]
    GraphClassification,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::LpHomogeneous,
        TaskKind::LpKg,
        TaskKind::NodeClassification,
        TaskKind::GraphClassification,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::LpHomogeneous => "lp_homo",
            TaskKind::LpKg => "lp_kg",
            TaskKind::NodeClassification => "nc",
            TaskKind::GraphClassification => "gc",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown task {s:?} (expected lp_homo, lp_kg, nc or gc)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    IntraOnly,
    DiffPool,
    SharedDelta,
    SharedLambda,
    NoEdgeEmbedding,
    DartsMode,
}

impl Ablation {
    pub const ALL: [Ablation; 6] = [
        Ablation::IntraOnly,
        Ablation::DiffPool,
        Ablation::SharedDelta,
        Ablation::SharedLambda,
        Ablation::NoEdgeEmbedding,
        Ablation::DartsMode,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::IntraOnly => "intra_only",
            Ablation::DiffPool => "diff_pool",
            Ablation::SharedDelta => "shared_delta",
            Ablation::SharedLambda => "shared_lambda",
            Ablation::NoEdgeEmbedding => "no_edge_embedding",
            Ablation::DartsMode => "darts_mode",
        }
    }

    fn applies_to(self, task: TaskKind) -> bool {
        match self {
            Ablation::IntraOnly | Ablation::DartsMode => true,
            Ablation::DiffPool => task == TaskKind::LpHomogeneous,
            Ablation::SharedDelta => task != TaskKind::LpKg,
            Ablation::SharedLambda | Ablation::NoEdgeEmbedding => task == TaskKind::LpKg,
        }
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation flag {s:?}")))
    }
}

/// Set of enabled ablation flags.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ablations(BTreeSet<Ablation>);

impl Ablations {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn from_flags(flags: &[Ablation]) -> Self {
        Self(flags.iter().copied().collect())
    }

    pub fn parse(names: &[String]) -> Result<Self> {
        names
            .iter()
            .map(|n| n.parse())
            .collect::<Result<BTreeSet<_>>>()
            .map(Self)
    }

    pub fn has(&self, a: Ablation) -> bool {
        self.0.contains(&a)
    }

    pub fn iter(&self) -> impl Iterator<Item = Ablation> + '_ {
        self.0.iter().copied()
    }

    pub fn validate_for(&self, task: TaskKind) -> Result<()> {
        for a in self.iter() {
            if !a.applies_to(task) {
                return Err(Error::Config(format!(
                    "ablation {} does not apply to task {task}",
                    a.name()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Compose,
    Aggregate,
    Combine,
    Activate,
    LayerConnect,
    LayerAgg,
    Pool,
}

impl SlotKind {
    fn short(self) -> &'static str {
        match self {
            SlotKind::Compose => "phi",
            SlotKind::Aggregate => "agg",
            SlotKind::Combine => "com",
            SlotKind::Activate => "act",
            SlotKind::LayerConnect => "connect",
            SlotKind::LayerAgg => "layer_agg",
            SlotKind::Pool => "pool",
        }
    }
}

/// Candidate operators. Names are shared across slot kinds where the
/// operation coincides (e.g. `sum` for aggregation, combination and pooling).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Candidate {
    Sub,
    Mult,
    Corr,
    Sum,
    Mean,
    Max,
    Concat,
    Relu,
    Prelu,
    Tanh,
    Skip,
    LcSum,
    LcConcat,
    LaConcat,
    LaMax,
    Diff,
    GlobalAddPool,
    GlobalMeanPool,
    GlobalMaxPool,
}

impl Candidate {
    pub fn name(self) -> &'static str {
        match self {
            Candidate::Sub => "sub",
            Candidate::Mult => "mult",
            Candidate::Corr => "corr",
            Candidate::Sum => "sum",
            Candidate::Mean => "mean",
            Candidate::Max => "max",
            Candidate::Concat => "concat",
            Candidate::Relu => "relu",
            Candidate::Prelu => "prelu",
            Candidate::Tanh => "tanh",
            Candidate::Skip => "skip",
            Candidate::LcSum => "lc_sum",
            Candidate::LcConcat => "lc_concat",
            Candidate::LaConcat => "la_concat",
            Candidate::LaMax => "la_max",
            Candidate::Diff => "diff",
            Candidate::GlobalAddPool => "global_add_pool",
            Candidate::GlobalMeanPool => "global_mean_pool",
            Candidate::GlobalMaxPool => "global_max_pool",
        }
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a slot lives: inside a specific layer, or once for the whole network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotScope {
    Layer(usize),
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotCatalog {
    pub id: String,
    pub kind: SlotKind,
    pub scope: SlotScope,
    pub candidates: Vec<Candidate>,
}

impl SlotCatalog {
    fn new(kind: SlotKind, scope: SlotScope, candidates: Vec<Candidate>) -> Self {
        let id = match scope {
            SlotScope::Layer(k) => format!("l{k}.{}", kind.short()),
            SlotScope::Global => kind.short().to_string(),
        };
        Self {
            id,
            kind,
            scope,
            candidates,
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn position(&self, c: Candidate) -> Option<usize> {
        self.candidates.iter().position(|&x| x == c)
    }
}

/// Full slot list for a task, in forward-evaluation order: per layer
/// `phi?, agg, com, act, connect?`, then `layer_agg?`, then `pool?`.
pub fn build_catalogs(task: TaskKind, layers: usize, ablations: &Ablations) -> Result<Vec<SlotCatalog>> {
    use Candidate::*;
    if layers == 0 {
        return Err(Error::Config("layer count must be at least 1".into()));
    }
    ablations.validate_for(task)?;
    let kg = task == TaskKind::LpKg;
    let inter = !ablations.has(Ablation::IntraOnly);
    let mut slots = Vec::new();
    for k in 0..layers {
        let scope = SlotScope::Layer(k);
        if kg && !ablations.has(Ablation::NoEdgeEmbedding) {
            slots.push(SlotCatalog::new(SlotKind::Compose, scope, vec![Sub, Mult, Corr]));
        }
        slots.push(SlotCatalog::new(SlotKind::Aggregate, scope, vec![Sum, Mean, Max]));
        slots.push(SlotCatalog::new(SlotKind::Combine, scope, vec![Sum, Concat]));
        let acts = if kg { vec![Tanh] } else { vec![Relu, Prelu] };
        slots.push(SlotCatalog::new(SlotKind::Activate, scope, acts));
        if inter {
            slots.push(SlotCatalog::new(SlotKind::LayerConnect, scope, vec![Skip, LcSum, LcConcat]));
        }
    }
    if inter {
        slots.push(SlotCatalog::new(SlotKind::LayerAgg, SlotScope::Global, vec![Skip, LaConcat, LaMax]));
    }
    match task {
        TaskKind::LpHomogeneous => {
            let pools = if ablations.has(Ablation::DiffPool) {
                vec![Diff]
            } else {
                vec![Sum, Max, Concat]
            };
            slots.push(SlotCatalog::new(SlotKind::Pool, SlotScope::Global, pools));
        }
        TaskKind::GraphClassification => slots.push(SlotCatalog::new(
            SlotKind::Pool,
            SlotScope::Global,
            vec![GlobalAddPool, GlobalMeanPool, GlobalMaxPool],
        )),
        TaskKind::LpKg | TaskKind::NodeClassification => {}
    }
    Ok(slots)
}
