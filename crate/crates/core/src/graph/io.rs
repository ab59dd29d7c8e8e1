use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{Graph, RelGraph, Triple};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn ingest(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Ingestion {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads a whitespace-separated undirected edge list. `#` starts a comment
/// line; the node count is the largest id plus one.
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut edges = Vec::new();
    let mut max_id: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(ingest(path, i + 1, format!("expected two node ids, got {line:?}")));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| ingest(path, i + 1, format!("invalid node id {s:?}")))
        };
        let (u, v) = (parse(fields[0])?, parse(fields[1])?);
        max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
        edges.push((u, v));
    }
    let n = max_id.map_or(0, |m| m + 1);
    Graph::from_edges(n, edges)
}

/// Token-to-id mapping in first-seen order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Writes `token<TAB>id` lines.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for (id, tok) in self.tokens.iter().enumerate() {
            out.push_str(tok);
            out.push('\t');
            out.push_str(&id.to_string());
            out.push('\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read(path)?;
        let mut vocab = Vocabulary::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| ingest(path, i + 1, "expected token<TAB>id"))?;
            let id: usize = id
                .parse()
                .map_err(|_| ingest(path, i + 1, format!("invalid id {id:?}")))?;
            if id != vocab.len() || vocab.intern(tok) != id {
                return Err(ingest(path, i + 1, "ids must be dense and in order"));
            }
        }
        Ok(vocab)
    }
}

fn parse_triples(
    path: &Path,
    entities: &mut Vocabulary,
    relations: &mut Vocabulary,
) -> Result<Vec<Triple>> {
    let text = read(path)?;
    let mut triples = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(ingest(
                path,
                i + 1,
                format!("expected head<TAB>relation<TAB>tail, got {line:?}"),
            ));
        }
        let head = entities.intern(fields[0]);
        let relation = relations.intern(fields[1]);
        let tail = entities.intern(fields[2]);
        triples.push(Triple { head, relation, tail });
    }
    Ok(triples)
}

/// Reads one TSV triple file into an augmented graph plus its vocabularies.
pub fn load_triples(path: impl AsRef<Path>) -> Result<(RelGraph, Vocabulary, Vocabulary)> {
    let mut entities = Vocabulary::new();
    let mut relations = Vocabulary::new();
    let triples = parse_triples(path.as_ref(), &mut entities, &mut relations)?;
    let graph = RelGraph::new(entities.len(), relations.len(), triples)?;
    Ok((graph, entities, relations))
}

/// `train.txt`, `valid.txt` and `test.txt` sharing one pair of vocabularies.
/// Only training triples carry messages.
#[derive(Debug, Clone)]
pub struct KgDataset {
    pub graph: RelGraph,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub entities: Vocabulary,
    pub relations: Vocabulary,
}

impl KgDataset {
    pub fn from_parts(
        entity_count: usize,
        relation_count: usize,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self> {
        let graph = RelGraph::new(entity_count, relation_count, train)?;
        let mut entities = Vocabulary::new();
        for e in 0..entity_count {
            entities.intern(&format!("e{e}"));
        }
        let mut relations = Vocabulary::new();
        for r in 0..relation_count {
            relations.intern(&format!("r{r}"));
        }
        for t in valid.iter().chain(&test) {
            if t.head >= entity_count || t.tail >= entity_count || t.relation >= relation_count {
                return Err(Error::Contract(format!("triple {t:?} outside vocabulary")));
            }
        }
        Ok(Self {
            graph,
            valid,
            test,
            entities,
            relations,
        })
    }

    /// Every known true triple, used to filter rankings.
    pub fn all_triples(&self) -> impl Iterator<Item = &Triple> {
        self.graph.triples().iter().chain(&self.valid).chain(&self.test)
    }

    pub fn save_vocabularies(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        self.entities.save(dir.join("entities.tsv"))?;
        self.relations.save(dir.join("relations.tsv"))
    }
}

pub fn load_kg_dataset(dir: impl AsRef<Path>) -> Result<KgDataset> {
    let dir = dir.as_ref();
    let mut entities = Vocabulary::new();
    let mut relations = Vocabulary::new();
    let train = parse_triples(&dir.join("train.txt"), &mut entities, &mut relations)?;
    let valid = parse_triples(&dir.join("valid.txt"), &mut entities, &mut relations)?;
    let test = parse_triples(&dir.join("test.txt"), &mut entities, &mut relations)?;
    let graph = RelGraph::new(entities.len(), relations.len(), train)?;
    Ok(KgDataset {
        graph,
        valid,
        test,
        entities,
        relations,
    })
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| ingest(path, 0, e.to_string()))
}

fn record_line(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

/// Dense node features, one CSV row per node in id order.
pub fn load_node_features(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ingest(path, 0, e.to_string()))?;
        let line = record_line(&rec);
        if width.is_some_and(|w| w != rec.len()) {
            return Err(ingest(path, line, format!("expected {} columns", width.unwrap())));
        }
        width = Some(rec.len());
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| ingest(path, line, format!("invalid feature {field:?}")))?;
            data.push(v);
        }
        rows += 1;
    }
    match width {
        Some(w) if w > 0 => Tensor::matrix(rows, w, data),
        _ => Err(ingest(path, 0, "no feature rows")),
    }
}

/// `node_id,label` rows (an optional header is skipped). Labels are dense
/// class ids; every node in `0..node_count` must be labelled exactly once.
pub fn load_node_labels(path: impl AsRef<Path>, node_count: usize) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let mut labels = vec![None; node_count];
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ingest(path, 0, e.to_string()))?;
        let line = record_line(&rec);
        if rec.len() != 2 {
            return Err(ingest(path, line, "expected node_id,label"));
        }
        let (Ok(node), Ok(label)) = (rec[0].parse::<usize>(), rec[1].parse::<usize>()) else {
            if k == 0 {
                continue;
            }
            return Err(ingest(path, line, format!("invalid row {:?}", rec.as_slice())));
        };
        if node >= node_count {
            return Err(ingest(path, line, format!("node {node} outside {node_count} nodes")));
        }
        if labels[node].replace(label).is_some() {
            return Err(ingest(path, line, format!("node {node} labelled twice")));
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| ingest(path, 0, format!("node {i} has no label"))))
        .collect()
}

/// One graph of a graph-classification dataset.
#[derive(Debug, Clone)]
pub struct LabeledGraph {
    pub graph: Graph,
    pub label: usize,
}

fn read_column(path: &Path) -> Result<Vec<i64>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        out.push(
            line.parse()
                .map_err(|_| ingest(path, i + 1, format!("invalid integer {line:?}")))?,
        );
    }
    Ok(out)
}

fn dense_ids(values: &[i64]) -> (Vec<usize>, usize) {
    let uniq: BTreeSet<i64> = values.iter().copied().collect();
    let map: HashMap<i64, usize> = uniq.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    (values.iter().map(|v| map[v]).collect(), uniq.len())
}

/// Reads a benchmark in the TU layout (`{name}_A.txt`, `{name}_graph_indicator.txt`,
/// `{name}_graph_labels.txt`, optional `{name}_node_labels.txt`). Node labels
/// become one-hot features; graph labels are remapped to `0..k` in sorted order.
pub fn load_tu_dataset(dir: impl AsRef<Path>, name: &str) -> Result<Vec<LabeledGraph>> {
    let dir = dir.as_ref();
    let file = |suffix: &str| -> PathBuf { dir.join(format!("{name}_{suffix}.txt")) };

    let indicator = read_column(&file("graph_indicator"))?;
    let (graph_labels, _) = dense_ids(&read_column(&file("graph_labels"))?);
    let n_graphs = graph_labels.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_graphs];
    let mut local = vec![0usize; indicator.len()];
    for (node, &g) in indicator.iter().enumerate() {
        if g < 1 || g as usize > n_graphs {
            return Err(ingest(&file("graph_indicator"), node + 1, format!("graph id {g}")));
        }
        let g = g as usize - 1;
        local[node] = members[g].len();
        members[g].push(node);
    }

    let node_label_path = file("node_labels");
    let node_labels = if node_label_path.exists() {
        let raw = read_column(&node_label_path)?;
        if raw.len() != indicator.len() {
            return Err(ingest(&node_label_path, raw.len(), "node label count mismatch"));
        }
        Some(dense_ids(&raw))
    } else {
        None
    };

    let adj_path = file("A");
    let text = read(&adj_path)?;
    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_graphs];
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let ids: Vec<usize> = line
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| ingest(&adj_path, i + 1, format!("invalid edge {line:?}")))?;
        if ids.len() != 2 || ids[0] == 0 || ids[1] == 0 || ids.iter().any(|&x| x > indicator.len()) {
            return Err(ingest(&adj_path, i + 1, format!("invalid edge {line:?}")));
        }
        let (a, b) = (ids[0] - 1, ids[1] - 1);
        let g = indicator[a] as usize - 1;
        if indicator[b] as usize - 1 != g {
            return Err(ingest(&adj_path, i + 1, "edge crosses graphs"));
        }
        edges[g].push((local[a], local[b]));
    }

    let mut out = Vec::with_capacity(n_graphs);
    for g in 0..n_graphs {
        let n = members[g].len();
        if n == 0 {
            return Err(ingest(&file("graph_indicator"), 0, format!("graph {} is empty", g + 1)));
        }
        let mut graph = Graph::from_edges(n, edges[g].iter().copied())?;
        if let Some((labels, width)) = &node_labels {
            let mut feats = Tensor::zeros(&[n, *width]);
            for (li, &node) in members[g].iter().enumerate() {
                feats.data_mut()[li * width + labels[node]] = 1.0;
            }
            graph = graph.with_features(feats)?;
        }
        out.push(LabeledGraph {
            graph,
            label: graph_labels[g],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn edge_list_basics() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "g.txt", "# header\n0 1\n1 2\n2 1\n3 3\n\n");
        let g = load_edge_list(&p).unwrap();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn edge_list_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "g.txt", "0 1\n# c\n1 x\n");
        match load_edge_list(&p) {
            Err(Error::Ingestion { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_edge_list("/nonexistent/graph.txt"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn triples_and_vocab_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.tsv", "a\tlikes\tb\nb\tlikes\tc\nc\thates\ta\n");
        let (g, ents, rels) = load_triples(&p).unwrap();
        assert_eq!(g.entity_count(), 3);
        assert_eq!(g.relation_count(), 2);
        assert_eq!(g.augmented().len(), 2 * 3 + 3);
        assert_eq!(ents.get("c"), Some(2));
        assert_eq!(rels.get("hates"), Some(1));
        let vp = dir.path().join("ents.tsv");
        ents.save(&vp).unwrap();
        assert_eq!(Vocabulary::load(&vp).unwrap(), ents);
    }

    #[test]
    fn malformed_triple_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.tsv", "a\tr\tb\na\tr\n");
        match load_triples(&p) {
            Err(Error::Ingestion { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn features_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "f.csv", "1.0,0\n0,2.5\n0.5,0.5\n");
        let t = load_node_features(&f).unwrap();
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.row(1), &[0.0, 2.5]);
        let l = write(dir.path(), "l.csv", "node_id,label\n2,1\n0,0\n1,1\n");
        assert_eq!(load_node_labels(&l, 3).unwrap(), vec![0, 1, 1]);
        let bad = write(dir.path(), "b.csv", "0,0\n0,1\n");
        assert!(load_node_labels(&bad, 2).is_err());
    }

    #[test]
    fn tu_layout() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "X_A.txt", "1, 2\n2, 1\n3, 4\n4, 3\n4, 5\n5, 4\n");
        write(dir.path(), "X_graph_indicator.txt", "1\n1\n2\n2\n2\n");
        write(dir.path(), "X_graph_labels.txt", "1\n-1\n");
        write(dir.path(), "X_node_labels.txt", "0\n2\n2\n0\n0\n");
        let gs = load_tu_dataset(dir.path(), "X").unwrap();
        assert_eq!(gs.len(), 2);
        assert_eq!((gs[0].label, gs[1].label), (1, 0));
        assert_eq!(gs[1].graph.edges(), &[(0, 1), (1, 2)]);
        let f = gs[0].graph.features().unwrap();
        assert_eq!(f.shape(), &[2, 2]);
        assert_eq!(f.row(1), &[0.0, 1.0]);
    }
}
