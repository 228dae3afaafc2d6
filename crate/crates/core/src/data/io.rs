//! On-disk dataset formats.
//!
//! A dataset directory holds:
//!
//! * `features.csv`: header `node,<feature names...>`, one row per node.
//! * `labels.csv`: either `node,label` (class name per row) or
//!   `node,<class names...>` with a one-hot row per node.
//! * `edges.txt` (optional): whitespace-separated `src dst [weight]` node-id
//!   pairs, `#` starts a comment. Edges are symmetrized.
//! * `splits.json` (optional): `{"train": [...], "val": [...], "test": [...]}`
//!   holding row indices.
//!
//! The LINQS citation release (`<name>.content` + `<name>.cites`) is read by
//! [`load_linqs`].

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::{Dataset, Splits};
use crate::adjacency::Adjacency;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadOptions {
    /// Accept an edge file with no edges and continue without a graph.
    pub allow_graph_free: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    pub nodes: usize,
    pub features: usize,
    pub classes: usize,
    /// Edge records read, duplicates included.
    pub edge_lines: usize,
    /// Distinct undirected edges, self-loops included.
    pub unique_edges: usize,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("`{s}` is not a number")))
}

struct Features {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Matrix,
}

fn index_ids(path: &Path, ids: &[String]) -> Result<HashMap<String, usize>> {
    let mut index = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if index.insert(id.clone(), i).is_some() {
            return Err(parse_err(path, i + 2, format!("duplicate node id `{id}`")));
        }
    }
    Ok(index)
}

fn read_features(path: &Path) -> Result<Features> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
    let width = rdr.headers()?.len();
    if width < 2 {
        return Err(parse_err(path, 1, "expected a node column and at least one feature"));
    }
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        if rec.len() != width {
            return Err(parse_err(
                path,
                line,
                format!("expected {width} fields, got {}", rec.len()),
            ));
        }
        ids.push(rec[0].to_string());
        for field in rec.iter().skip(1) {
            data.push(parse_f64(path, line, field)?);
        }
    }
    let index = index_ids(path, &ids)?;
    let matrix = Matrix::from_vec(ids.len(), width - 1, data)?;
    Ok(Features { ids, index, matrix })
}

/// Orders class names numerically when they are all integers.
fn sorted_classes(names: BTreeSet<String>) -> Vec<String> {
    let mut v: Vec<String> = names.into_iter().collect();
    if v.iter().all(|s| s.parse::<i64>().is_ok()) {
        v.sort_by_key(|s| s.parse::<i64>().unwrap());
    }
    v
}

fn read_labels(path: &Path, index: &HashMap<String, usize>) -> Result<(Vec<usize>, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    let n = index.len();
    let mut assigned: Vec<Option<usize>> = vec![None; n];
    let class_names;
    if headers.len() == 2 {
        let mut rows = Vec::new();
        let mut names = BTreeSet::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(parse_err(path, k + 2, "expected `node,label`"));
            }
            names.insert(rec[1].to_string());
            rows.push((k + 2, rec[0].to_string(), rec[1].to_string()));
        }
        class_names = sorted_classes(names);
        let lookup: HashMap<&str, usize> = class_names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        for (line, id, label) in rows {
            let i = *index
                .get(&id)
                .ok_or_else(|| parse_err(path, line, format!("unknown node id `{id}`")))?;
            if assigned[i].replace(lookup[label.as_str()]).is_some() {
                return Err(parse_err(path, line, format!("node `{id}` labeled twice")));
            }
        }
    } else if headers.len() > 2 {
        class_names = headers.iter().skip(1).map(str::to_string).collect();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            if rec.len() != headers.len() {
                return Err(parse_err(path, line, format!("expected {} fields", headers.len())));
            }
            let id = &rec[0];
            let i = *index
                .get(id)
                .ok_or_else(|| parse_err(path, line, format!("unknown node id `{id}`")))?;
            let mut hot = None;
            for (c, field) in rec.iter().skip(1).enumerate() {
                let v = parse_f64(path, line, field)?;
                if v == 1.0 {
                    if hot.is_some() {
                        return Err(parse_err(path, line, "multi-label row; labels must be one-hot"));
                    }
                    hot = Some(c);
                } else if v != 0.0 {
                    return Err(parse_err(path, line, format!("one-hot entry {v} is not 0 or 1")));
                }
            }
            let c = hot.ok_or_else(|| parse_err(path, line, "row has no label"))?;
            if assigned[i].replace(c).is_some() {
                return Err(parse_err(path, line, format!("node `{id}` labeled twice")));
            }
        }
    } else {
        return Err(parse_err(path, 1, "expected a node column and a label column"));
    }
    let mut labels = Vec::with_capacity(n);
    for (i, l) in assigned.into_iter().enumerate() {
        match l {
            Some(l) => labels.push(l),
            None => return Err(Error::Load(format!("{}: node #{i} has no label", path.display()))),
        }
    }
    Ok((labels, class_names))
}

fn read_edges(
    path: &Path,
    index: &HashMap<String, usize>,
    opts: &LoadOptions,
    stats: &mut LoadStats,
) -> Result<Option<Adjacency>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let n = index.len();
    let mut a = Matrix::zeros(n, n);
    let mut unique = BTreeSet::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(parse_err(path, line, "expected `src dst [weight]`"));
        }
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| parse_err(path, line, format!("edge references unknown node `{id}`")))
        };
        let (i, j) = (lookup(fields[0])?, lookup(fields[1])?);
        let w = match fields.get(2) {
            Some(s) => parse_f64(path, line, s)?,
            None => 1.0,
        };
        if !w.is_finite() || w < 0.0 {
            return Err(parse_err(
                path,
                line,
                format!("edge weight {w} must be finite and nonnegative"),
            ));
        }
        a.set(i, j, w);
        a.set(j, i, w);
        stats.edge_lines += 1;
        unique.insert((i.min(j), i.max(j)));
    }
    stats.unique_edges = unique.len();
    if stats.edge_lines == 0 {
        if opts.allow_graph_free {
            return Ok(None);
        }
        return Err(Error::Load(format!(
            "{} contains no edges; allow graph-free loading explicitly to continue",
            path.display()
        )));
    }
    Ok(Some(Adjacency::new(a)?))
}

/// Reads a citation graph from separate edge, feature and label files.
pub fn load_citation(
    edge_file: &Path,
    feature_file: &Path,
    label_file: &Path,
    opts: &LoadOptions,
) -> Result<(Dataset, LoadStats)> {
    let feats = read_features(feature_file)?;
    let (labels, class_names) = read_labels(label_file, &feats.index)?;
    let mut stats = LoadStats {
        nodes: feats.ids.len(),
        features: feats.matrix.cols(),
        classes: class_names.len(),
        ..Default::default()
    };
    let adjacency = read_edges(edge_file, &feats.index, opts, &mut stats)?;
    let ds = Dataset {
        features: feats.matrix,
        adjacency,
        labels,
        class_names,
        splits: None,
        names: Some(feats.ids),
    };
    ds.validate()?;
    info!(
        "loaded {} nodes, {} features, {} classes, {} edge records ({} distinct)",
        stats.nodes, stats.features, stats.classes, stats.edge_lines, stats.unique_edges
    );
    Ok((ds, stats))
}

/// Reads the LINQS release format: `content` rows are
/// `<id> <features...> <class>` (tab separated), `cites` rows are
/// `<cited> <citing>`.
pub fn load_linqs(content: &Path, cites: &Path, opts: &LoadOptions) -> Result<(Dataset, LoadStats)> {
    let text = fs::read_to_string(content).map_err(|e| Error::io(content, e))?;
    let mut ids = Vec::new();
    let mut raw_labels = Vec::new();
    let mut data = Vec::new();
    let mut width = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(parse_err(content, line, "expected `<id> <features...> <class>`"));
        }
        let p = fields.len() - 2;
        if *width.get_or_insert(p) != p {
            return Err(parse_err(
                content,
                line,
                format!("expected {} features, got {p}", width.unwrap()),
            ));
        }
        ids.push(fields[0].to_string());
        for f in &fields[1..=p] {
            data.push(parse_f64(content, line, f)?);
        }
        raw_labels.push(fields[p + 1].to_string());
    }
    let index = index_ids(content, &ids)?;
    let class_names = sorted_classes(raw_labels.iter().cloned().collect());
    let lookup: HashMap<&str, usize> = class_names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let labels = raw_labels.iter().map(|l| lookup[l.as_str()]).collect();
    let features = Matrix::from_vec(ids.len(), width.unwrap_or(0), data)?;
    let mut stats = LoadStats {
        nodes: ids.len(),
        features: features.cols(),
        classes: class_names.len(),
        ..Default::default()
    };
    let adjacency = read_edges(cites, &index, opts, &mut stats)?;
    let ds = Dataset {
        features,
        adjacency,
        labels,
        class_names,
        splits: None,
        names: Some(ids),
    };
    ds.validate()?;
    info!(
        "loaded {} nodes, {} features, {} classes, {} citation records ({} distinct)",
        stats.nodes, stats.features, stats.classes, stats.edge_lines, stats.unique_edges
    );
    Ok((ds, stats))
}

fn find_with_extension(dir: &Path, ext: &str) -> Result<Option<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    found.sort();
    Ok(found.into_iter().next())
}

/// Loads a dataset directory (see the module docs). A directory holding a
/// `*.content` / `*.cites` pair is read as a LINQS release instead.
pub fn load_dir(dir: &Path, opts: &LoadOptions) -> Result<(Dataset, LoadStats)> {
    let features = dir.join("features.csv");
    let (mut ds, stats) = if features.exists() {
        let labels = dir.join("labels.csv");
        let edges = dir.join("edges.txt");
        if edges.exists() {
            load_citation(&edges, &features, &labels, opts)?
        } else {
            let feats = read_features(&features)?;
            let (labels, class_names) = read_labels(&labels, &feats.index)?;
            let stats = LoadStats {
                nodes: feats.ids.len(),
                features: feats.matrix.cols(),
                classes: class_names.len(),
                ..Default::default()
            };
            let ds = Dataset {
                features: feats.matrix,
                adjacency: None,
                labels,
                class_names,
                splits: None,
                names: Some(feats.ids),
            };
            (ds, stats)
        }
    } else {
        match (find_with_extension(dir, "content")?, find_with_extension(dir, "cites")?) {
            (Some(content), Some(cites)) => load_linqs(&content, &cites, opts)?,
            _ => {
                return Err(Error::Load(format!(
                    "{} has neither features.csv nor a .content/.cites pair",
                    dir.display()
                )))
            }
        }
    };
    let splits = dir.join("splits.json");
    if splits.exists() {
        let text = fs::read_to_string(&splits).map_err(|e| Error::io(&splits, e))?;
        let s: Splits = serde_json::from_str(&text)?;
        s.validate(ds.n())?;
        ds.splits = Some(s);
    }
    ds.validate()?;
    Ok((ds, stats))
}

fn node_ids(ds: &Dataset) -> Vec<String> {
    match &ds.names {
        Some(names) => names.clone(),
        None => (0..ds.n()).map(|i| i.to_string()).collect(),
    }
}

/// Writes `ds` in the directory layout read by [`load_dir`].
pub fn save_dir(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ids = node_ids(ds);

    let path = dir.join("features.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["node".to_string()];
    header.extend((0..ds.dim()).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(ds.features.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("labels.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["node", "label"])?;
    for (i, id) in ids.iter().enumerate() {
        w.write_record([id.as_str(), ds.class_names[ds.labels[i]].as_str()])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    if let Some(a) = &ds.adjacency {
        let path = dir.join("edges.txt");
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = String::new();
        let m = a.matrix();
        for i in 0..m.rows() {
            for j in i..m.cols() {
                let v = m.get(i, j);
                if v != 0.0 {
                    out.push_str(&format!("{} {} {}\n", ids[i], ids[j], v));
                }
            }
        }
        f.write_all(out.as_bytes()).map_err(|e| Error::io(&path, e))?;
    }

    if let Some(s) = &ds.splits {
        let path = dir.join("splits.json");
        fs::write(&path, serde_json::to_string(s)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn chain_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "features.csv", "node,a,b\nn0,1,0\nn1,0,1\nn2,1,1\n");
        write(dir.path(), "labels.csv", "node,label\nn0,x\nn1,y\nn2,x\n");
        write(dir.path(), "edges.txt", "# chain\nn0 n1\nn1 n2\n");
        dir
    }

    #[test]
    fn chain_symmetrized() {
        let dir = chain_dir();
        let (ds, stats) = load_dir(dir.path(), &LoadOptions::default()).unwrap();
        let a = ds.adjacency.unwrap();
        assert_eq!(a.off_diagonal_nnz(), 4);
        assert_eq!(stats.edge_lines, 2);
        assert_eq!(ds.class_names, ["x", "y"]);
        assert_eq!(ds.labels, [0, 1, 0]);
    }

    #[test]
    fn dangling_edge_reports_line() {
        let dir = chain_dir();
        write(dir.path(), "edges.txt", "n0 n1\nn1 n9\n");
        let err = load_dir(dir.path(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn duplicate_node_rejected() {
        let dir = chain_dir();
        write(dir.path(), "features.csv", "node,a,b\nn0,1,0\nn1,0,1\nn0,1,1\n");
        let err = load_dir(dir.path(), &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn empty_edge_file_needs_flag() {
        let dir = chain_dir();
        write(dir.path(), "edges.txt", "# nothing here\n");
        assert!(load_dir(dir.path(), &LoadOptions::default()).is_err());
        let (ds, _) = load_dir(dir.path(), &LoadOptions { allow_graph_free: true }).unwrap();
        assert!(ds.adjacency.is_none());
    }

    #[test]
    fn one_hot_labels_and_multi_label_rejection() {
        let dir = chain_dir();
        write(dir.path(), "labels.csv", "node,x,y\nn0,1,0\nn1,0,1\nn2,1,0\n");
        let (ds, _) = load_dir(dir.path(), &LoadOptions::default()).unwrap();
        assert_eq!(ds.labels, [0, 1, 0]);
        write(dir.path(), "labels.csv", "node,x,y\nn0,1,0\nn1,1,1\nn2,1,0\n");
        let err = load_dir(dir.path(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn linqs_format() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "toy.content",
            "31\t1\t0\t1\tTheory\n7\t0\t0\t1\tNeural\n12\t1\t1\t0\tTheory\n",
        );
        write(dir.path(), "toy.cites", "31\t7\n7\t31\n12\t7\n");
        let (ds, stats) = load_dir(dir.path(), &LoadOptions::default()).unwrap();
        assert_eq!((stats.nodes, stats.features, stats.classes), (3, 3, 2));
        assert_eq!((stats.edge_lines, stats.unique_edges), (3, 2));
        assert_eq!(ds.class_names, ["Neural", "Theory"]);
        assert_eq!(ds.labels, [1, 0, 1]);
    }
}
