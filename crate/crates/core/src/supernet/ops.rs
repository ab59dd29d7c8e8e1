//! Single-candidate operators of every slot kind.

use super::catalog::Candidate;
use crate::error::{Error, Result};
use crate::tensor::{SegmentReduce, Tape, Tensor, Var};

fn wrong(kind: &str, c: Candidate) -> Error {
    Error::Contract(format!("{c} is not a {kind} candidate"))
}

fn need(proj: Option<Var>, c: Candidate) -> Result<Var> {
    proj.ok_or_else(|| Error::Contract(format!("{c} needs a projection parameter")))
}

fn check_width(tape: &Tape, vars: &[Var], what: &str) -> Result<()> {
    let first = tape.shape(vars[0]).to_vec();
    for v in &vars[1..] {
        if tape.shape(*v) != first.as_slice() {
            return Err(Error::Dimension(format!(
                "{what}: {:?} vs {first:?}",
                tape.shape(*v)
            )));
        }
    }
    Ok(())
}

/// Edge-aware composition `phi(h_u, h_e)`.
pub fn compose(tape: &mut Tape, c: Candidate, hu: Var, he: Var) -> Result<Var> {
    match c {
        Candidate::Sub => tape.sub(hu, he),
        Candidate::Mult => tape.mul(hu, he),
        Candidate::Corr => tape.circ_corr(hu, he),
        _ => Err(wrong("composition", c)),
    }
}

/// [`compose`] on plain values.
pub fn compose_values(c: Candidate, hu: &Tensor, he: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (a, b) = (tape.constant(hu.clone()), tape.constant(he.clone()));
    let out = compose(&mut tape, c, a, b)?;
    Ok(tape.value(out).clone())
}

/// Reduces `messages[i]` into row `dst[i]` of an `[nodes, d]` result; nodes
/// without messages get zeros.
pub fn aggregate(
    tape: &mut Tape,
    c: Candidate,
    messages: Option<Var>,
    dst: &[usize],
    nodes: usize,
    width: usize,
) -> Result<Var> {
    let reduce = match c {
        Candidate::Sum => SegmentReduce::Sum,
        Candidate::Mean => SegmentReduce::Mean,
        Candidate::Max => SegmentReduce::Max,
        _ => return Err(wrong("aggregation", c)),
    };
    match messages {
        Some(m) => tape.segment(m, dst, nodes, reduce),
        None => Ok(tape.constant(Tensor::zeros(&[nodes, width]))),
    }
}

/// `COM(self_term, message)`; `concat` projects `2d -> d` with `proj`.
pub fn combine(tape: &mut Tape, c: Candidate, own: Var, msg: Var, proj: Option<Var>) -> Result<Var> {
    check_width(tape, &[own, msg], "combine")?;
    match c {
        Candidate::Sum => tape.add(own, msg),
        Candidate::Concat => {
            let cat = tape.concat(&[own, msg], 1)?;
            tape.matmul(cat, need(proj, c)?)
        }
        _ => Err(wrong("combination", c)),
    }
}

pub fn activate(tape: &mut Tape, c: Candidate, x: Var, slope: Option<Var>) -> Result<Var> {
    match c {
        Candidate::Relu => tape.relu(x),
        Candidate::Prelu => tape.prelu(x, need(slope, c)?),
        Candidate::Tanh => tape.tanh(x),
        _ => Err(wrong("activation", c)),
    }
}

/// Combines a layer's input stream `prev` with its raw output `new`.
pub fn layer_connect(tape: &mut Tape, c: Candidate, prev: Var, new: Var, proj: Option<Var>) -> Result<Var> {
    check_width(tape, &[prev, new], "layer_connect")?;
    match c {
        Candidate::Skip => Ok(new),
        Candidate::LcSum => tape.add(prev, new),
        Candidate::LcConcat => {
            let cat = tape.concat(&[prev, new], 1)?;
            tape.matmul(cat, need(proj, c)?)
        }
        _ => Err(wrong("layer connectivity", c)),
    }
}

/// Combines raw layer outputs. `skip` returns the last element of `outputs`.
pub fn layer_aggregate(tape: &mut Tape, c: Candidate, outputs: &[Var], proj: Option<Var>) -> Result<Var> {
    let last = *outputs
        .last()
        .ok_or_else(|| Error::Contract("layer aggregation over zero layers".into()))?;
    check_width(tape, outputs, "layer_aggregate")?;
    match c {
        Candidate::Skip => Ok(last),
        Candidate::LaConcat => {
            let cat = tape.concat(outputs, 1)?;
            tape.matmul(cat, need(proj, c)?)
        }
        Candidate::LaMax => {
            let mut acc = outputs[0];
            for &o in &outputs[1..] {
                acc = tape.maximum(acc, o)?;
            }
            Ok(acc)
        }
        _ => Err(wrong("layer aggregation", c)),
    }
}

/// Link readout over the two endpoints of each pair. `concat` orders the
/// endpoints by node index; the other kinds are symmetric.
pub fn pool_pairs(
    tape: &mut Tape,
    c: Candidate,
    h: Var,
    pairs: &[(usize, usize)],
    proj: Option<Var>,
) -> Result<Var> {
    if pairs.is_empty() {
        return Err(Error::Contract("pooling over an empty target set".into()));
    }
    let (first, second): (Vec<usize>, Vec<usize>) =
        pairs.iter().map(|&(u, v)| (u.min(v), u.max(v))).unzip();
    let hu = tape.gather_rows(h, &first)?;
    let hv = tape.gather_rows(h, &second)?;
    match c {
        Candidate::Sum => tape.add(hu, hv),
        Candidate::Max => tape.maximum(hu, hv),
        Candidate::Concat => {
            let cat = tape.concat(&[hu, hv], 1)?;
            tape.matmul(cat, need(proj, c)?)
        }
        Candidate::Diff => {
            let d = tape.sub(hu, hv)?;
            tape.abs(d)
        }
        _ => Err(wrong("link pooling", c)),
    }
}

/// Graph readout over all nodes of each graph.
pub fn pool_graphs(tape: &mut Tape, c: Candidate, h: Var, graph_index: &[usize], graphs: usize) -> Result<Var> {
    if graphs == 0 {
        return Err(Error::Contract("pooling over zero graphs".into()));
    }
    let reduce = match c {
        Candidate::GlobalAddPool => SegmentReduce::Sum,
        Candidate::GlobalMeanPool => SegmentReduce::Mean,
        Candidate::GlobalMaxPool => SegmentReduce::Max,
        _ => return Err(wrong("graph pooling", c)),
    };
    tape.segment(h, graph_index, graphs, reduce)
}
