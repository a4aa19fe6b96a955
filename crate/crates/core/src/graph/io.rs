use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// What `load_text_dataset` had to skip.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TextLoadReport {
    pub dropped_edges: usize,
}

/// Read the citation-dataset text layout: a content file with one
/// `id feat_0 .. feat_{F-1} label_name` line per vertex and a cites file with
/// one `cited_id citing_id` line per edge. Label names become indices in
/// order of first appearance. Edges with an unknown endpoint are dropped.
pub fn load_text_dataset(
    content_path: impl AsRef<Path>,
    cites_path: impl AsRef<Path>,
) -> Result<(Graph, TextLoadReport)> {
    let content_path = content_path.as_ref();
    let cites_path = cites_path.as_ref();
    let content =
        fs::read_to_string(content_path).map_err(|e| Error::io(content_path, e))?;
    let cites = fs::read_to_string(cites_path).map_err(|e| Error::io(cites_path, e))?;
    let content_name = content_path.display().to_string();
    let cites_name = cites_path.display().to_string();

    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut label_index: HashMap<String, usize> = HashMap::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut labels = Vec::new();
    let mut features = Vec::new();
    let mut dim: Option<usize> = None;

    for (lineno, line) in content.lines().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            file: content_name.clone(),
            line: lineno + 1,
            message,
        };
        if tokens.len() < 2 {
            return Err(parse_err("expected an id and a label".into()));
        }
        let width = tokens.len() - 2;
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(parse_err(format!("{width} features, expected {d}")))
            }
            _ => {}
        }
        for tok in &tokens[1..tokens.len() - 1] {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(format!("bad feature value {tok:?}")))?;
            features.push(v);
        }
        let id = tokens[0].to_string();
        if ids.contains_key(&id) {
            return Err(parse_err(format!("duplicate vertex id {id:?}")));
        }
        ids.insert(id, ids.len());
        let name = tokens[tokens.len() - 1];
        let next = label_names.len();
        let label = *label_index.entry(name.to_string()).or_insert_with(|| {
            label_names.push(name.to_string());
            next
        });
        labels.push(label);
    }

    let n = labels.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }

    let mut edges = Vec::new();
    let mut report = TextLoadReport::default();
    for (lineno, line) in cites.lines().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != 2 {
            return Err(Error::Parse {
                file: cites_name.clone(),
                line: lineno + 1,
                message: format!("expected two ids, found {}", tokens.len()),
            });
        }
        match (ids.get(tokens[0]), ids.get(tokens[1])) {
            (Some(&a), Some(&b)) => edges.push((a, b)),
            _ => report.dropped_edges += 1,
        }
    }
    if report.dropped_edges > 0 {
        log::warn!(
            "{}: dropped {} edges with unknown endpoints",
            cites_name,
            report.dropped_edges
        );
    }

    let features = DenseMatrix::from_vec(n, dim.unwrap_or(0), features)?;
    let k = label_names.len();
    let graph = Graph::from_edges(n, &edges, features, Some(labels), Some(k))?
        .with_label_names(label_names);
    Ok((graph, report))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonGraph {
    num_vertices: usize,
    #[serde(default)]
    num_classes: Option<usize>,
    features: Vec<Vec<f64>>,
    edges: Vec<[usize; 2]>,
    #[serde(default)]
    labels: Option<Vec<usize>>,
}

pub fn load_json_graph(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_json_graph(&text)
}

pub(crate) fn parse_json_graph(text: &str) -> Result<Graph> {
    let doc: JsonGraph = serde_json::from_str(text)?;
    if doc.features.len() != doc.num_vertices {
        return Err(Error::InvalidGraph(format!(
            "{} feature rows for {} vertices",
            doc.features.len(),
            doc.num_vertices
        )));
    }
    if let (Some(labels), None) = (&doc.labels, doc.num_classes) {
        log::debug!("num_classes absent; inferring from {} labels", labels.len());
    }
    let features = DenseMatrix::from_rows(&doc.features)
        .map_err(|e| Error::InvalidGraph(e.to_string()))?;
    let edges: Vec<(usize, usize)> = doc.edges.iter().map(|e| (e[0], e[1])).collect();
    Graph::from_edges(
        doc.num_vertices,
        &edges,
        features,
        doc.labels,
        doc.num_classes,
    )
}

pub fn write_json_graph(g: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, json_graph_string(g)?).map_err(|e| Error::io(path, e))
}

pub(crate) fn json_graph_string(g: &Graph) -> Result<String> {
    let doc = JsonGraph {
        num_vertices: g.num_vertices(),
        num_classes: g.num_classes(),
        features: g.features().row_iter().map(<[f64]>::to_vec).collect(),
        edges: g.edges().map(|(u, v)| [u, v]).collect(),
        labels: g.labels().map(<[usize]>::to_vec),
    };
    Ok(serde_json::to_string(&doc)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::File::create(&p)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        p
    }

    #[test]
    fn text_dataset_dedups_and_drops_unknown() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(
            &dir,
            "x.content",
            "31336 0 1 0 Neural\n1061127 1 0 0 Rule\n1106406\t0 0 1\tNeural\n",
        );
        let e = write(&dir, "x.cites", "31336 1061127\n1061127 31336\n99 31336\n");
        let (g, report) = load_text_dataset(&c, &e).unwrap();
        assert_eq!(g.num_vertices(), 3);
        assert_eq!(g.feature_dim(), 3);
        assert_eq!(g.num_edges(), 1);
        assert_eq!(report.dropped_edges, 1);
        assert_eq!(g.labels().unwrap(), &[0, 1, 0]);
        assert_eq!(g.label_names().unwrap(), &["Neural", "Rule"]);
    }

    #[test]
    fn text_dataset_single_vertex() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(&dir, "a.content", "v1 1 0 A\n");
        let e = write(&dir, "a.cites", "");
        let (g, _) = load_text_dataset(&c, &e).unwrap();
        assert_eq!((g.num_vertices(), g.num_edges()), (1, 0));
    }

    #[test]
    fn text_dataset_errors() {
        let dir = tempfile::tempdir().unwrap();
        let empty = write(&dir, "e.content", "\n");
        let cites = write(&dir, "e.cites", "");
        assert!(matches!(
            load_text_dataset(&empty, &cites),
            Err(Error::EmptyDataset)
        ));
        let bad = write(&dir, "b.content", "a 1 0 X\nb 1 Y\n");
        match load_text_dataset(&bad, &cites) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad_value = write(&dir, "c.content", "a 1 zz X\n");
        assert!(matches!(
            load_text_dataset(&bad_value, &cites),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            load_text_dataset(dir.path().join("missing"), &cites),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn json_triangle_and_optional_labels() {
        let g = parse_json_graph(
            r#"{"num_vertices":3,"num_classes":null,"features":[[1],[2],[3]],"edges":[[0,1],[1,2],[2,0]]}"#,
        )
        .unwrap();
        assert_eq!(
            (0..3).map(|v| g.degree(v)).collect::<Vec<_>>(),
            vec![2, 2, 2]
        );
        assert!(g.labels().is_none());
    }

    #[test]
    fn json_validation_errors() {
        let out_of_bounds = r#"{"num_vertices":3,"num_classes":null,"features":[[1],[2],[3]],"edges":[[0,5]],"labels":null}"#;
        assert!(matches!(
            parse_json_graph(out_of_bounds),
            Err(Error::InvalidGraph(_))
        ));
        let bad_label = r#"{"num_vertices":2,"num_classes":2,"features":[[1],[2]],"edges":[],"labels":[0,2]}"#;
        assert!(matches!(
            parse_json_graph(bad_label),
            Err(Error::InvalidGraph(_))
        ));
        let wrong_shape = r#"{"num_vertices":2,"features":[[1]],"edges":[]}"#;
        assert!(parse_json_graph(wrong_shape).is_err());
        assert!(matches!(
            parse_json_graph(r#"{"num_vertices":"x"}"#),
            Err(Error::Json(_))
        ));
    }
}
