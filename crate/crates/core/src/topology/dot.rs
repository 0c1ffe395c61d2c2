use std::fmt::Write as _;

use super::{AdjacencyMatrix, Topology, TopologyError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DotError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
}

/// Canonical undirected DOT text for a topology.
///
/// Edge statements come first in row-major order, then isolated nodes in
/// index order. The output has no attributes, so layout is left to the viewer.
pub fn to_dot(topology: &Topology, names: &[String]) -> Result<String, TopologyError> {
    let m = &topology.adjacency;
    m.validate()?;
    if names.len() != m.len() {
        return Err(TopologyError::MalformedMatrix(format!("{} names for a {}-node topology", names.len(), m.len())));
    }
    let mut out = String::new();
    let _ = writeln!(out, "graph topo_{} {{", topology.seq);
    for (x, y) in m.edges() {
        let _ = writeln!(out, "  \"{}\" -- \"{}\";", names[x], names[y]);
    }
    for (x, name) in names.iter().enumerate() {
        if m.degree(x) == 0 {
            let _ = writeln!(out, "  \"{name}\";");
        }
    }
    out.push_str("}\n");
    Ok(out)
}

fn unquote(token: &str, line: usize) -> Result<&str, DotError> {
    token
        .strip_prefix('"')
        .and_then(|t| t.strip_suffix('"'))
        .ok_or_else(|| DotError::Syntax { line, message: format!("expected quoted node name, found `{token}`") })
}

/// Reads canonical DOT back into an adjacency matrix indexed by `names`.
/// Returns the sequence number from the graph header alongside it.
pub fn parse_dot(text: &str, names: &[String]) -> Result<(u32, AdjacencyMatrix), DotError> {
    let index =
        |name: &str| names.iter().position(|n| n == name).ok_or_else(|| DotError::UnknownNode(name.to_string()));
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let seq = match lines.next() {
        Some((_, header)) => header
            .strip_prefix("graph topo_")
            .and_then(|h| h.strip_suffix(" {"))
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| DotError::Syntax { line: 1, message: format!("bad graph header `{header}`") })?,
        None => {
            return Err(DotError::Syntax { line: 1, message: "empty input".into() });
        }
    };
    let mut m = AdjacencyMatrix::zeros(names.len());
    let mut closed = false;
    for (line, stmt) in lines {
        if stmt.is_empty() {
            continue;
        }
        if closed {
            return Err(DotError::Syntax { line, message: "text after closing brace".into() });
        }
        if stmt == "}" {
            closed = true;
            continue;
        }
        let body = stmt
            .strip_suffix(';')
            .ok_or_else(|| DotError::Syntax { line, message: "statement must end with `;`".into() })?;
        match body.split_once(" -- ") {
            Some((a, b)) => {
                let (x, y) = (index(unquote(a, line)?)?, index(unquote(b, line)?)?);
                m.connect(x, y);
            }
            None => {
                index(unquote(body, line)?)?;
            }
        }
    }
    if !closed {
        return Err(DotError::Syntax { line: text.lines().count(), message: "missing `}`".into() });
    }
    Ok((seq, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn three_node_fixture() {
        let t = Topology::new(AdjacencyMatrix::from_edges(3, &[(0, 1)]), 0);
        let dot = to_dot(&t, &names(&["sai", "pritu", "nitin"])).unwrap();
        assert_eq!(dot, "graph topo_0 {\n  \"sai\" -- \"pritu\";\n  \"nitin\";\n}\n");
    }

    #[test]
    fn single_node() {
        let t = Topology::new(AdjacencyMatrix::zeros(1), 4);
        assert_eq!(to_dot(&t, &names(&["solo"])).unwrap(), "graph topo_4 {\n  \"solo\";\n}\n");
    }

    #[test]
    fn complete_graph_edges_once() {
        let t = Topology::new(AdjacencyMatrix::complete(3), 1);
        let dot = to_dot(&t, &names(&["a", "b", "c"])).unwrap();
        assert_eq!(dot.matches(" -- ").count(), 3);
        assert_eq!(dot, "graph topo_1 {\n  \"a\" -- \"b\";\n  \"a\" -- \"c\";\n  \"b\" -- \"c\";\n}\n");
    }

    #[test]
    fn rejects_bad_input() {
        let t = Topology::new(AdjacencyMatrix::zeros(2), 0);
        assert!(to_dot(&t, &names(&["a"])).is_err());
        let bad = Topology::new(AdjacencyMatrix::from_rows(&[vec![0, 1], vec![0, 0]]).unwrap(), 0);
        assert!(to_dot(&bad, &names(&["a", "b"])).is_err());
        assert!(parse_dot("graph x {\n}\n", &names(&["a"])).is_err());
        assert!(matches!(parse_dot("graph topo_0 {\n  \"z\";\n}\n", &names(&["a"])), Err(DotError::UnknownNode(_))));
        assert!(parse_dot("graph topo_0 {\n  \"a\";\n", &names(&["a"])).is_err());
    }

    proptest! {
        #[test]
        fn dot_round_trip(n in 1usize..9, bits in proptest::collection::vec(any::<bool>(), 36), seq in 0u32..100) {
            let mut m = AdjacencyMatrix::zeros(n);
            let mut k = 0;
            for x in 0..n {
                for y in x + 1..n {
                    if bits[k] { m.connect(x, y); }
                    k += 1;
                }
            }
            let labels: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
            let dot = to_dot(&Topology::new(m.clone(), seq), &labels).unwrap();
            prop_assert_eq!(dot.matches(" -- ").count(), m.edges().len());
            let (back_seq, back) = parse_dot(&dot, &labels).unwrap();
            prop_assert_eq!(back_seq, seq);
            prop_assert_eq!(back, m);
        }
    }
}
