//! Plain-text graph, label, and feature ingestion.
//!
//! Formats, one record per line, `#` starting a comment line:
//!
//! - edges: `u v` or `u v w` (weight only with the weighted flag; defaults
//!   to 1 when omitted),
//! - labels: `v k`,
//! - features: `v x1 x2 … xd`.
//!
//! Vertex ids may be 0- or 1-based; the file's minimum index decides (a
//! minimum of 0 means 0-based, otherwise 1-based). Non-contiguous ids are
//! compacted to `0..n` in ascending order, and the caller is told so it
//! can emit the id mapping. Duplicate edges collapse keeping the largest
//! weight and self-loops are dropped; both are counted, not fatal.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use vn_core::features::FeatureSet;
use vn_core::sbm::{BlockAssignment, Graph};

/// An edge-list file parsed into a simple undirected graph.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: Graph,
    /// Original file id of each compact vertex, ascending.
    pub original_ids: Vec<u64>,
    /// Detected index base (0 or 1).
    pub base: u64,
    /// True when ids had gaps, so positions shifted beyond the base rule.
    pub compacted: bool,
    pub self_loops_dropped: usize,
    pub duplicates_collapsed: usize,
}

impl LoadedGraph {
    /// Compact id of an original file id.
    pub fn compact_id(&self, original: u64) -> Option<usize> {
        self.original_ids.binary_search(&original).ok()
    }
}

/// A dataset ready for the experiment harness: graph, block labels, and
/// optional per-vertex features, all in compact vertex order.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub graph: Graph,
    pub labels: BlockAssignment,
    pub features: Option<FeatureSet>,
    pub name: String,
}

/// Iterate the meaningful lines of a file: (1-based line number, text).
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line.trim()))
        .filter(|(_, line)| !line.is_empty() && !line.starts_with('#'))
}

fn parse_id(token: &str, path: &Path, lineno: usize) -> Result<u64> {
    token.parse().with_context(|| {
        format!(
            "{}:{lineno}: vertex id {token:?} is not a non-negative integer",
            path.display()
        )
    })
}

/// Parse an edge-list file into a simple undirected graph.
pub fn load_edge_list(path: &Path, weighted: bool) -> Result<LoadedGraph> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading edge list {}", path.display()))?;
    let mut records: Vec<(u64, u64, f64)> = Vec::new();
    let mut self_loops = 0usize;
    for (lineno, line) in data_lines(&text) {
        let mut tokens = line.split_whitespace();
        let (Some(a), Some(b)) = (tokens.next(), tokens.next()) else {
            bail!(
                "{}:{lineno}: expected 'u v{}', got {line:?}",
                path.display(),
                if weighted { " [w]" } else { "" }
            );
        };
        let u = parse_id(a, path, lineno)?;
        let v = parse_id(b, path, lineno)?;
        let w = match (tokens.next(), weighted) {
            (None, _) => 1.0,
            (Some(t), true) => {
                let w: f64 = t.parse().with_context(|| {
                    format!("{}:{lineno}: weight {t:?} is not a number", path.display())
                })?;
                if !w.is_finite() {
                    bail!("{}:{lineno}: weight {w} is not finite", path.display());
                }
                w
            }
            (Some(t), false) => bail!(
                "{}:{lineno}: unexpected third field {t:?} (use the weighted flag for weights)",
                path.display()
            ),
        };
        if tokens.next().is_some() {
            bail!("{}:{lineno}: too many fields in {line:?}", path.display());
        }
        if u == v {
            self_loops += 1;
            continue;
        }
        records.push((u, v, w));
    }
    if records.is_empty() {
        bail!("{}: no edges", path.display());
    }

    let min_id = records
        .iter()
        .map(|&(u, v, _)| u.min(v))
        .min()
        .expect("nonempty");
    let base = if min_id == 0 { 0 } else { 1 };
    let mut original_ids: Vec<u64> = records.iter().flat_map(|&(u, v, _)| [u, v]).collect();
    original_ids.sort_unstable();
    original_ids.dedup();
    let n = original_ids.len();
    let compacted = original_ids
        .iter()
        .enumerate()
        .any(|(pos, &id)| id != base + pos as u64);
    let index: HashMap<u64, usize> = original_ids
        .iter()
        .enumerate()
        .map(|(pos, &id)| (id, pos))
        .collect();

    let mut adj = DMatrix::<f64>::zeros(n, n);
    let mut seen = vec![false; n * n];
    let mut duplicates = 0usize;
    for &(u, v, w) in &records {
        let (i, j) = (index[&u], index[&v]);
        let (i, j) = (i.min(j), i.max(j));
        if seen[i * n + j] {
            duplicates += 1;
            if w > adj[(i, j)] {
                adj[(i, j)] = w;
                adj[(j, i)] = w;
            }
        } else {
            seen[i * n + j] = true;
            adj[(i, j)] = w;
            adj[(j, i)] = w;
        }
    }

    let graph = Graph::new(adj, weighted)
        .with_context(|| format!("validating graph from {}", path.display()))?;
    Ok(LoadedGraph {
        graph,
        original_ids,
        base,
        compacted,
        self_loops_dropped: self_loops,
        duplicates_collapsed: duplicates,
    })
}

/// Parse a label file against an already-loaded graph.
///
/// Blocks are renumbered to `0..K` in order of first appearance;
/// `interest_block` (a label value as written in the file) moves that
/// block to index 0, displacing the block that held it.
pub fn load_labels(
    path: &Path,
    loaded: &LoadedGraph,
    interest_block: Option<usize>,
) -> Result<BlockAssignment> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading labels {}", path.display()))?;
    let n = loaded.graph.n();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut block_index: HashMap<u64, usize> = HashMap::new();
    let mut block_order: Vec<u64> = Vec::new();
    for (lineno, line) in data_lines(&text) {
        let mut tokens = line.split_whitespace();
        let (Some(a), Some(b), None) = (tokens.next(), tokens.next(), tokens.next()) else {
            bail!("{}:{lineno}: expected 'v k', got {line:?}", path.display());
        };
        let v = parse_id(a, path, lineno)?;
        let k = parse_id(b, path, lineno)?;
        let Some(vertex) = loaded.compact_id(v) else {
            bail!(
                "{}:{lineno}: vertex {v} does not appear in the edge list",
                path.display()
            );
        };
        if labels[vertex].is_some() {
            bail!("{}:{lineno}: vertex {v} labeled twice", path.display());
        }
        let block = *block_index.entry(k).or_insert_with(|| {
            block_order.push(k);
            block_order.len() - 1
        });
        labels[vertex] = Some(block);
    }

    let missing = labels.iter().filter(|l| l.is_none()).count();
    if missing > 0 {
        let example = labels
            .iter()
            .position(|l| l.is_none())
            .expect("missing label exists");
        bail!(
            "{}: {missing} vertices have no label (for example original id {})",
            path.display(),
            loaded.original_ids[example]
        );
    }
    let mut labels: Vec<usize> = labels.into_iter().map(|l| l.expect("checked")).collect();

    if let Some(interest) = interest_block {
        let Some(&target) = block_index.get(&(interest as u64)) else {
            bail!(
                "{}: interest block {interest} never appears",
                path.display()
            );
        };
        if target != 0 {
            for l in &mut labels {
                if *l == target {
                    *l = 0;
                } else if *l == 0 {
                    *l = target;
                }
            }
        }
    }

    Ok(BlockAssignment::new(labels, block_order.len())?)
}

/// Parse a feature file ("v x1 … xd") against an already-loaded graph.
pub fn load_features(path: &Path, loaded: &LoadedGraph) -> Result<FeatureSet> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading features {}", path.display()))?;
    let n = loaded.graph.n();
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut dim: Option<usize> = None;
    for (lineno, line) in data_lines(&text) {
        let mut tokens = line.split_whitespace();
        let Some(a) = tokens.next() else { continue };
        let v = parse_id(a, path, lineno)?;
        let Some(vertex) = loaded.compact_id(v) else {
            bail!(
                "{}:{lineno}: vertex {v} does not appear in the edge list",
                path.display()
            );
        };
        let values: Vec<f64> = tokens
            .map(|t| {
                t.parse::<f64>().with_context(|| {
                    format!("{}:{lineno}: feature {t:?} is not a number", path.display())
                })
            })
            .collect::<Result<_>>()?;
        if values.is_empty() {
            bail!("{}:{lineno}: vertex {v} has no features", path.display());
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => bail!(
                "{}:{lineno}: {} features, expected {d}",
                path.display(),
                values.len()
            ),
            _ => {}
        }
        if rows[vertex].is_some() {
            bail!("{}:{lineno}: vertex {v} listed twice", path.display());
        }
        rows[vertex] = Some(values);
    }
    let missing = rows.iter().filter(|r| r.is_none()).count();
    if missing > 0 {
        bail!("{}: {missing} vertices have no features", path.display());
    }
    let d = dim.expect("nonempty rows");
    let data = DMatrix::from_fn(n, d, |i, j| rows[i].as_ref().expect("checked")[j]);
    Ok(FeatureSet::new(data)?)
}

/// Load a full dataset bundle; warnings are the caller's to print.
pub fn load_dataset(
    edges: &Path,
    labels: &Path,
    features: Option<&Path>,
    weighted: bool,
    interest_block: Option<usize>,
) -> Result<(DatasetBundle, LoadedGraph)> {
    let loaded = load_edge_list(edges, weighted)?;
    let assignment = load_labels(labels, &loaded, interest_block)?;
    let features = features
        .map(|path| load_features(path, &loaded))
        .transpose()?;
    let name = edges
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Ok((
        DatasetBundle {
            graph: loaded.graph.clone(),
            labels: assignment,
            features,
            name,
        },
        loaded,
    ))
}

/// Write a graph as an edge list, 0-based, one `u v [w]` line per edge
/// with `i < j`, ascending. Isolated vertices cannot be represented in an
/// edge list, so they are an error rather than silent data loss.
pub fn write_edge_list(graph: &Graph, path: &Path) -> Result<()> {
    let n = graph.n();
    let adj = graph.adjacency();
    for i in 0..n {
        if (0..n).all(|j| adj[(i, j)] == 0.0) {
            bail!("vertex {i} is isolated and an edge list cannot express that");
        }
    }
    let mut out = String::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let w = adj[(i, j)];
            if w != 0.0 {
                if graph.weighted() {
                    out.push_str(&format!("{i} {j} {w}\n"));
                } else {
                    out.push_str(&format!("{i} {j}\n"));
                }
            }
        }
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use vn_core::rng::stream;
    use vn_core::sbm::{sample_sbm, BlockModel};

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn zero_based_path_graph() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "e.txt", "0 1\n1 2\n");
        let loaded = load_edge_list(&path, false).unwrap();
        assert_eq!(loaded.graph.n(), 3);
        assert_eq!(loaded.base, 0);
        assert!(!loaded.compacted);
        let adj = loaded.graph.adjacency();
        assert_eq!(adj[(0, 1)], 1.0);
        assert_eq!(adj[(1, 2)], 1.0);
        assert_eq!(adj[(0, 2)], 0.0);
    }

    #[test]
    fn one_based_detection_gives_same_path_graph() {
        let dir = tempfile::tempdir().unwrap();
        let zero = load_edge_list(&write(&dir, "e0.txt", "0 1\n1 2\n"), false).unwrap();
        let one = load_edge_list(&write(&dir, "e1.txt", "1 2\n2 3\n"), false).unwrap();
        assert_eq!(one.base, 1);
        assert!(!one.compacted);
        assert_eq!(zero.graph.adjacency(), one.graph.adjacency());
    }

    #[test]
    fn duplicate_and_self_loop_counted_and_graph_simple() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "e.txt", "# comment\n0 1\n1 0\n2 2\n1 2\n");
        let loaded = load_edge_list(&path, false).unwrap();
        assert_eq!(loaded.self_loops_dropped, 1);
        assert_eq!(loaded.duplicates_collapsed, 1);
        let adj = loaded.graph.adjacency();
        assert_eq!(adj[(0, 1)], 1.0);
        assert_eq!(adj[(2, 2)], 0.0);
    }

    #[test]
    fn duplicates_keep_max_weight() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "e.txt", "0 1 2.5\n1 0 4.0\n1 2 1.0\n");
        let loaded = load_edge_list(&path, true).unwrap();
        assert_eq!(loaded.graph.adjacency()[(0, 1)], 4.0);
    }

    #[test]
    fn weight_field_rejected_without_flag() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "e.txt", "0 1 2.5\n");
        let err = load_edge_list(&path, false).unwrap_err().to_string();
        assert!(err.contains(":1:"), "{err}");
    }

    #[test]
    fn gaps_compact_with_mapping() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "e.txt", "0 10\n10 20\n");
        let loaded = load_edge_list(&path, false).unwrap();
        assert!(loaded.compacted);
        assert_eq!(loaded.original_ids, vec![0, 10, 20]);
        assert_eq!(loaded.graph.n(), 3);
        assert_eq!(loaded.graph.adjacency()[(0, 1)], 1.0);
    }

    #[test]
    fn labels_contiguous_and_relabeled() {
        let dir = tempfile::tempdir().unwrap();
        let edges = write(&dir, "e.txt", "0 1\n1 2\n2 3\n");
        let loaded = load_edge_list(&edges, false).unwrap();

        let labels = write(&dir, "l.txt", "0 0\n1 0\n2 1\n3 1\n");
        let a = load_labels(&labels, &loaded, None).unwrap();
        assert_eq!(a.counts(), vec![2, 2]);

        // Non-contiguous label values relabel by first appearance: 7 → 0,
        // 3 → 1.
        let labels = write(&dir, "l2.txt", "0 7\n1 7\n2 3\n3 7\n");
        let a = load_labels(&labels, &loaded, None).unwrap();
        assert_eq!(a.label(0), 0);
        assert_eq!(a.label(2), 1);

        // The interest flag hoists a label value to block 0.
        let a = load_labels(&labels, &loaded, Some(3)).unwrap();
        assert_eq!(a.label(2), 0);
        assert_eq!(a.label(0), 1);
    }

    #[test]
    fn missing_label_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let edges = write(&dir, "e.txt", "0 1\n1 2\n");
        let loaded = load_edge_list(&edges, false).unwrap();
        let labels = write(&dir, "l.txt", "0 0\n1 1\n");
        let err = load_labels(&labels, &loaded, None).unwrap_err().to_string();
        assert!(err.contains("no label"), "{err}");
    }

    #[test]
    fn unknown_label_vertex_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let edges = write(&dir, "e.txt", "0 1\n");
        let loaded = load_edge_list(&edges, false).unwrap();
        let labels = write(&dir, "l.txt", "0 0\n1 0\n5 1\n");
        let err = load_labels(&labels, &loaded, None).unwrap_err().to_string();
        assert!(err.contains("vertex 5"), "{err}");
    }

    #[test]
    fn features_parse_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let edges = write(&dir, "e.txt", "0 1\n1 2\n");
        let loaded = load_edge_list(&edges, false).unwrap();
        let feats = write(&dir, "f.txt", "0 1.0 2.0\n1 3.0 4.0\n2 5.0 6.0\n");
        let f = load_features(&feats, &loaded).unwrap();
        assert_eq!((f.n(), f.dim()), (3, 2));
        assert_eq!(f.matrix()[(2, 1)], 6.0);

        let bad = write(&dir, "g.txt", "0 1.0\n1 3.0 4.0\n2 5.0\n");
        assert!(load_features(&bad, &loaded).is_err());
    }

    #[test]
    fn sampled_graph_round_trips_exactly() {
        let model = BlockModel::new(
            vec![10, 10],
            nalgebra::DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.3, 0.6]),
        )
        .unwrap();
        let assignment = BlockAssignment::sorted(model.block_sizes());
        let mut rng = stream(7, &[0]);
        let graph = sample_sbm(&model, &assignment, &mut rng).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        write_edge_list(&graph, &path).unwrap();
        let loaded = load_edge_list(&path, false).unwrap();
        assert_eq!(loaded.graph.adjacency(), graph.adjacency());
    }
}
