use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::GraphBatch;
use super::catalog::{build_catalogs, Ablation, Ablations, Candidate, SlotCatalog, SlotKind, TaskKind};
use super::ops;
use super::params::{Bound, ParamStore};
use super::selection::{Choice, DerivedArchitecture, Selection};
use crate::error::{Error, Result};
use crate::graph::{AugmentedTriple, EdgeDirection};
use crate::tensor::{glorot_uniform, Tape, Tensor, Var};

/// Shape and task of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub task: TaskKind,
    /// Width of input node features (unused for knowledge graphs).
    pub input_dim: usize,
    pub dim: usize,
    pub layers: usize,
    /// Output classes for node and graph classification.
    pub classes: usize,
    pub dropout: f64,
    pub ablations: Ablations,
    /// Knowledge-graph vocabulary sizes.
    pub entities: usize,
    pub relations: usize,
}

impl NetSpec {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        if self.layers == 0 {
            return Err(Error::Config("layers must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Validation(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        match self.task {
            TaskKind::LpKg if self.entities == 0 || self.relations == 0 => {
                Err(Error::Config("knowledge graph needs entities and relations".into()))
            }
            TaskKind::LpKg => Ok(()),
            _ if self.input_dim == 0 => Err(Error::Config("input_dim must be positive".into())),
            TaskKind::NodeClassification | TaskKind::GraphClassification if self.classes < 2 => {
                Err(Error::Config("classification needs at least 2 classes".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Input instance for a forward pass.
#[derive(Debug, Clone, Copy)]
pub enum Input<'a> {
    Graph(&'a GraphBatch),
    /// Augmented triples carrying messages plus `(entity, augmented relation)` queries.
    Kg {
        triples: &'a [AugmentedTriple],
        queries: &'a [(usize, usize)],
    },
}

/// Searchable message-passing network: slot catalogs plus parameters.
/// A child network is the same structure with single-candidate slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Supernet {
    spec: NetSpec,
    slots: Vec<SlotCatalog>,
    params: ParamStore,
}

struct Cursor<'c> {
    slots: &'c [SlotCatalog],
    choices: &'c [Choice],
    pos: usize,
}

impl<'c> Cursor<'c> {
    /// Next slot if it has the given kind.
    fn take(&mut self, kind: SlotKind) -> Option<(&'c SlotCatalog, Choice)> {
        let s = self.slots.get(self.pos)?;
        if s.kind != kind {
            return None;
        }
        self.pos += 1;
        Some((s, self.choices[self.pos - 1]))
    }

    fn expect(&mut self, kind: SlotKind) -> Result<(&'c SlotCatalog, Choice)> {
        self.take(kind)
            .ok_or_else(|| Error::Contract(format!("expected a {kind:?} slot at position {}", self.pos)))
    }
}

/// `Σ_o θ_o · o(x)` over a slot, or the single fixed candidate.
fn mix(
    tape: &mut Tape,
    slot: &SlotCatalog,
    choice: Choice,
    mut eval: impl FnMut(&mut Tape, Candidate) -> Result<Var>,
) -> Result<Var> {
    match choice {
        Choice::Fixed(i) => eval(tape, slot.candidates[i]),
        Choice::Mixed(theta) => {
            let mut acc: Option<Var> = None;
            for (i, &c) in slot.candidates.iter().enumerate() {
                let out = eval(tape, c)?;
                let w = tape.index(theta, i)?;
                let term = tape.scale(out, w)?;
                acc = Some(match acc {
                    None => term,
                    Some(a) => tape.add(a, term)?,
                });
            }
            Ok(acc.expect("slot has candidates"))
        }
    }
}

impl Supernet {
    /// Full search space for `spec`.
    pub fn new(spec: NetSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        let slots = build_catalogs(spec.task, spec.layers, &spec.ablations)?;
        Self::with_slots(spec, slots, rng)
    }

    /// Child network of `arch` with fresh weights.
    pub fn child(spec: NetSpec, arch: &DerivedArchitecture, rng: &mut ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        if arch.task != spec.task || arch.layers != spec.layers || arch.dim != spec.dim || arch.ablations != spec.ablations {
            return Err(Error::Contract("architecture does not match network spec".into()));
        }
        let full = build_catalogs(spec.task, spec.layers, &spec.ablations)?;
        let slots = arch.restrict(&full)?;
        Self::with_slots(spec, slots, rng)
    }

    /// Child network of `arch` sharing this supernet's weights.
    pub fn derive_child(&self, arch: &DerivedArchitecture) -> Result<Self> {
        let slots = arch.restrict(&self.slots)?;
        let mut params = ParamStore::new();
        for (name, value) in self.params.names().iter().zip(self.params.values()) {
            if Self::needs_param(&self.spec, &slots, name) {
                params.insert(name.clone(), value.clone());
            }
        }
        Ok(Self {
            spec: self.spec.clone(),
            slots,
            params,
        })
    }

    /// Child network of `arch` with the given weights; names and shapes must
    /// match a freshly built child exactly.
    pub fn from_params(spec: NetSpec, arch: &DerivedArchitecture, params: ParamStore) -> Result<Self> {
        let mut rng = crate::rng::stream(0, crate::rng::Stream::RetrainInit);
        let mut net = Self::child(spec, arch, &mut rng)?;
        if net.params.names() != params.names() {
            return Err(Error::Contract(format!(
                "parameter names {:?} do not match architecture ({:?})",
                params.names(),
                net.params.names()
            )));
        }
        for (name, (a, b)) in params.names().iter().zip(net.params.values().iter().zip(params.values())) {
            if a.shape() != b.shape() {
                return Err(Error::Dimension(format!(
                    "parameter {name}: expected {:?}, got {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        net.params = params;
        Ok(net)
    }

    fn has(slots: &[SlotCatalog], id: &str, c: Candidate) -> bool {
        slots.iter().any(|s| s.id == id && s.position(c).is_some())
    }

    fn needs_param(spec: &NetSpec, slots: &[SlotCatalog], name: &str) -> bool {
        let mut probe = ParamStore::new();
        let mut rng = crate::rng::stream(0, crate::rng::Stream::Init);
        Self::init_params(spec, slots, &mut probe, &mut rng);
        probe.get(name).is_some()
    }

    fn init_params(spec: &NetSpec, slots: &[SlotCatalog], p: &mut ParamStore, rng: &mut ChaCha8Rng) {
        let d = spec.dim;
        let kg = spec.task == TaskKind::LpKg;
        let edge_emb = kg && !spec.ablations.has(Ablation::NoEdgeEmbedding);
        if kg {
            p.insert("ent", glorot_uniform(spec.entities, d, rng));
            if edge_emb {
                p.insert("rel", glorot_uniform(2 * spec.relations + 1, d, rng));
            } else {
                p.insert("dec_rel", glorot_uniform(2 * spec.relations, d, rng));
            }
        } else {
            p.insert("enc.w", glorot_uniform(spec.input_dim, d, rng));
        }
        for k in 0..spec.layers {
            let shared = if kg {
                spec.ablations.has(Ablation::SharedLambda)
            } else {
                spec.ablations.has(Ablation::SharedDelta)
            };
            if shared {
                p.insert(format!("l{k}.w"), glorot_uniform(d, d, rng));
            } else if kg {
                for w in ["w_sl", "w_o", "w_i"] {
                    p.insert(format!("l{k}.{w}"), glorot_uniform(d, d, rng));
                }
            } else {
                p.insert(format!("l{k}.w_self"), glorot_uniform(d, d, rng));
                p.insert(format!("l{k}.w_neigh"), glorot_uniform(d, d, rng));
            }
            if edge_emb {
                p.insert(format!("l{k}.w_rel"), glorot_uniform(d, d, rng));
            }
            if Self::has(slots, &format!("l{k}.com"), Candidate::Concat) {
                p.insert(format!("l{k}.com"), glorot_uniform(2 * d, d, rng));
            }
            if Self::has(slots, &format!("l{k}.act"), Candidate::Prelu) {
                p.insert(format!("l{k}.prelu"), Tensor::scalar(0.25));
            }
            if Self::has(slots, &format!("l{k}.connect"), Candidate::LcConcat) {
                p.insert(format!("l{k}.lc"), glorot_uniform(2 * d, d, rng));
            }
        }
        if Self::has(slots, "layer_agg", Candidate::LaConcat) {
            p.insert("la", glorot_uniform(spec.layers * d, d, rng));
        }
        if Self::has(slots, "pool", Candidate::Concat) {
            p.insert("pool", glorot_uniform(2 * d, d, rng));
        }
        let out = match spec.task {
            TaskKind::LpHomogeneous => Some(1),
            TaskKind::NodeClassification | TaskKind::GraphClassification => Some(spec.classes),
            TaskKind::LpKg => None,
        };
        if let Some(c) = out {
            p.insert("head.w", glorot_uniform(d, c, rng));
            p.insert("head.b", Tensor::zeros(&[c]));
        }
    }

    fn with_slots(spec: NetSpec, slots: Vec<SlotCatalog>, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut params = ParamStore::new();
        Self::init_params(&spec, &slots, &mut params, rng);
        Ok(Self { spec, slots, params })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn slots(&self) -> &[SlotCatalog] {
        &self.slots
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn check_choices(&self, choices: &[Choice], tape: &Tape) -> Result<()> {
        if choices.len() != self.slots.len() {
            return Err(Error::Contract(format!(
                "{} choices for {} slots",
                choices.len(),
                self.slots.len()
            )));
        }
        for (s, c) in self.slots.iter().zip(choices) {
            let ok = match *c {
                Choice::Fixed(i) => i < s.len(),
                Choice::Mixed(v) => tape.shape(v) == [s.len()],
            };
            if !ok {
                return Err(Error::Contract(format!("choice {c:?} does not fit slot {}", s.id)));
            }
        }
        Ok(())
    }

    fn dropout(&self, tape: &mut Tape, x: Var, rng: &mut Option<&mut ChaCha8Rng>) -> Result<Var> {
        match rng {
            Some(r) if self.spec.dropout > 0.0 => tape.dropout(x, self.spec.dropout, &mut **r),
            _ => Ok(x),
        }
    }

    /// Node embeddings after message passing and layer aggregation. For
    /// knowledge graphs also returns the final relation embeddings used by
    /// the scorer.
    pub fn embed(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        choices: &[Choice],
        input: Input<'_>,
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<(Var, Option<Var>, usize)> {
        self.check_choices(choices, tape)?;
        let mut cur = Cursor {
            slots: &self.slots,
            choices,
            pos: 0,
        };
        let d = self.spec.dim;
        let kg = self.spec.task == TaskKind::LpKg;
        let edge_emb = kg && !self.spec.ablations.has(Ablation::NoEdgeEmbedding);
        let shared = self.spec.ablations.has(if kg { Ablation::SharedLambda } else { Ablation::SharedDelta });

        let (mut stream, n) = match input {
            Input::Graph(b) => {
                if kg {
                    return Err(Error::Contract("graph batch given to a knowledge-graph network".into()));
                }
                if b.features.shape()[1] != self.spec.input_dim {
                    return Err(Error::Dimension(format!(
                        "input features {:?}, network expects width {}",
                        b.features.shape(),
                        self.spec.input_dim
                    )));
                }
                let x = tape.constant(b.features.clone());
                (tape.matmul(x, bound.var("enc.w")?)?, b.node_count)
            }
            Input::Kg { .. } => {
                if !kg {
                    return Err(Error::Contract("triples given to a homogeneous network".into()));
                }
                (bound.var("ent")?, self.spec.entities)
            }
        };
        let mut rel = if edge_emb { Some(bound.var("rel")?) } else { None };
        let mut raws = Vec::with_capacity(self.spec.layers);

        for k in 0..self.spec.layers {
            let w = |name: &str| bound.var(&format!("l{k}.{name}"));
            let (own, msgs, dst): (Var, Option<Var>, Vec<usize>) = match input {
                Input::Graph(b) => {
                    let (w_self, w_neigh) = if shared { (w("w")?, w("w")?) } else { (w("w_self")?, w("w_neigh")?) };
                    let own = tape.matmul(stream, w_self)?;
                    let msgs = if b.src.is_empty() {
                        None
                    } else {
                        let nb = if shared { own } else { tape.matmul(stream, w_neigh)? };
                        Some(tape.gather_rows(nb, &b.src)?)
                    };
                    (own, msgs, b.dst.clone())
                }
                Input::Kg { triples, .. } => {
                    for t in triples {
                        if t.head >= n || t.tail >= n || t.relation > 2 * self.spec.relations {
                            return Err(Error::Contract(format!("triple {t:?} outside vocabulary")));
                        }
                    }
                    let phi_slot = if edge_emb { Some(cur.expect(SlotKind::Compose)?) } else { None };
                    let w_sl = if shared { w("w")? } else { w("w_sl")? };
                    let own = tape.matmul(stream, w_sl)?;
                    if triples.is_empty() {
                        (own, None, Vec::new())
                    } else {
                        let heads: Vec<usize> = triples.iter().map(|t| t.head).collect();
                        let hu = tape.gather_rows(stream, &heads)?;
                        let phi = match (phi_slot, rel) {
                            (Some((slot, choice)), Some(r)) => {
                                let rels: Vec<usize> = triples.iter().map(|t| t.relation).collect();
                                let he = tape.gather_rows(r, &rels)?;
                                mix(tape, slot, choice, |t, c| ops::compose(t, c, hu, he))?
                            }
                            _ => hu,
                        };
                        if shared {
                            let m = tape.matmul(phi, w("w")?)?;
                            (own, Some(m), triples.iter().map(|t| t.tail).collect())
                        } else {
                            let mut parts = Vec::new();
                            let mut dst = Vec::with_capacity(triples.len());
                            for (dir, name) in [
                                (EdgeDirection::Original, "w_o"),
                                (EdgeDirection::Inverse, "w_i"),
                                (EdgeDirection::SelfLoop, "w_sl"),
                            ] {
                                let rows: Vec<usize> =
                                    (0..triples.len()).filter(|&i| triples[i].direction == dir).collect();
                                if rows.is_empty() {
                                    continue;
                                }
                                let g = tape.gather_rows(phi, &rows)?;
                                parts.push(tape.matmul(g, w(name)?)?);
                                dst.extend(rows.iter().map(|&i| triples[i].tail));
                            }
                            let m = if parts.len() == 1 { parts[0] } else { tape.concat(&parts, 0)? };
                            (own, Some(m), dst)
                        }
                    }
                }
            };

            let (slot, choice) = cur.expect(SlotKind::Aggregate)?;
            let m = mix(tape, slot, choice, |t, c| ops::aggregate(t, c, msgs, &dst, n, d))?;
            let (slot, choice) = cur.expect(SlotKind::Combine)?;
            let com_w = if slot.position(Candidate::Concat).is_some() { Some(w("com")?) } else { None };
            let h = mix(tape, slot, choice, |t, c| ops::combine(t, c, own, m, com_w))?;
            let (slot, choice) = cur.expect(SlotKind::Activate)?;
            let slope = if slot.position(Candidate::Prelu).is_some() { Some(w("prelu")?) } else { None };
            let h = mix(tape, slot, choice, |t, c| ops::activate(t, c, h, slope))?;
            let h = self.dropout(tape, h, &mut dropout)?;
            raws.push(h);

            stream = match cur.take(SlotKind::LayerConnect) {
                Some((slot, choice)) => {
                    let lc = if slot.position(Candidate::LcConcat).is_some() { Some(w("lc")?) } else { None };
                    let prev = stream;
                    mix(tape, slot, choice, |t, c| ops::layer_connect(t, c, prev, h, lc))?
                }
                None => h,
            };
            if let Some(r) = rel {
                rel = Some(tape.matmul(r, w("w_rel")?)?);
            }
        }

        // `skip` reads the final connected stream so every connectivity slot
        // stays on the computation path; the other kinds read raw outputs.
        let out = match cur.take(SlotKind::LayerAgg) {
            Some((slot, choice)) => {
                let la = if slot.position(Candidate::LaConcat).is_some() { Some(bound.var("la")?) } else { None };
                let last = stream;
                mix(tape, slot, choice, |t, c| match c {
                    Candidate::Skip => Ok(last),
                    _ => ops::layer_aggregate(t, c, &raws, la),
                })?
            }
            None => stream,
        };
        let rel_out = match input {
            Input::Kg { .. } if edge_emb => rel,
            Input::Kg { .. } => Some(bound.var("dec_rel")?),
            _ => None,
        };
        Ok((out, rel_out, cur.pos))
    }

    /// Task logits: `[pairs, 1]` for homogeneous link prediction, `[nodes, classes]`
    /// for node classification, `[graphs, classes]` for graph classification and
    /// `[queries, entities]` for knowledge graphs.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        choices: &[Choice],
        input: Input<'_>,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let (h, rel, pos) = self.embed(tape, bound, choices, input, dropout)?;
        let mut cur = Cursor {
            slots: &self.slots,
            choices,
            pos,
        };
        let head = |tape: &mut Tape, x: Var| -> Result<Var> {
            let z = tape.matmul(x, bound.var("head.w")?)?;
            tape.add_row(z, bound.var("head.b")?)
        };
        let logits = match (self.spec.task, input) {
            (TaskKind::LpHomogeneous, Input::Graph(b)) => {
                let (slot, choice) = cur.expect(SlotKind::Pool)?;
                let pw = if slot.position(Candidate::Concat).is_some() { Some(bound.var("pool")?) } else { None };
                let p = mix(tape, slot, choice, |t, c| ops::pool_pairs(t, c, h, &b.pairs, pw))?;
                head(tape, p)?
            }
            (TaskKind::GraphClassification, Input::Graph(b)) => {
                let (slot, choice) = cur.expect(SlotKind::Pool)?;
                let p = mix(tape, slot, choice, |t, c| ops::pool_graphs(t, c, h, &b.graph_index, b.graph_count))?;
                head(tape, p)?
            }
            (TaskKind::NodeClassification, Input::Graph(_)) => head(tape, h)?,
            (TaskKind::LpKg, Input::Kg { queries, .. }) => {
                if queries.is_empty() {
                    return Err(Error::Contract("no queries to score".into()));
                }
                let rel = rel.expect("knowledge-graph embed returns relations");
                let rows = tape.shape(rel)[0];
                let (ents, rels): (Vec<usize>, Vec<usize>) = queries.iter().copied().unzip();
                if let Some(&bad) = rels.iter().find(|&&r| r >= rows.min(2 * self.spec.relations)) {
                    return Err(Error::Contract(format!("query relation {bad} out of range")));
                }
                let hq = tape.gather_rows(h, &ents)?;
                let hr = tape.gather_rows(rel, &rels)?;
                let q = tape.mul(hq, hr)?;
                tape.matmul_t(q, h)?
            }
            _ => return Err(Error::Contract("input kind does not match task".into())),
        };
        if cur.pos != self.slots.len() {
            return Err(Error::Contract(format!("{} slots left unused", self.slots.len() - cur.pos)));
        }
        Ok(logits)
    }

    /// Forward pass without gradients or dropout.
    pub fn evaluate(&self, selection: &Selection, input: Input<'_>) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let choices = selection.choices(&mut tape);
        let out = self.forward(&mut tape, &bound, &choices, input, None)?;
        Ok(tape.value(out).clone())
    }
}
