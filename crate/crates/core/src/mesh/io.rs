//! Plain-text mesh exchange:
//!
//! ```text
//! plapmesh v1 <dim> <n_nodes> <n_elems>
//! x [y] boundary_flag        (one line per node, flag 0 or 1)
//! i j [k]                    (one line per element, 0-based)
//! ```

use std::io::{BufRead, Write};

use super::Mesh;
use crate::{Error, Result};

pub fn write_mesh(mesh: &Mesh, mut out: impl Write) -> Result<()> {
    let dim = mesh.dim();
    writeln!(out, "plapmesh v1 {dim} {} {}", mesh.n_nodes(), mesh.elements().len())?;
    for (i, x) in mesh.nodes().iter().enumerate() {
        let flag = u8::from(mesh.is_boundary(i));
        if dim == 1 {
            writeln!(out, "{} {flag}", x[0])?;
        } else {
            writeln!(out, "{} {} {flag}", x[0], x[1])?;
        }
    }
    for el in mesh.elements() {
        let line: Vec<String> = el.vertices(dim).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Reads a mesh file. The distance to the boundary of an imported mesh is
/// measured to its boundary facets.
pub fn read_mesh(input: impl BufRead) -> Result<Mesh> {
    let mut lines = input.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(l) if l.trim().is_empty() => None,
        other => Some((i + 1, other)),
    });
    let bad = |line: usize, reason: &str| Error::MeshFormat { line, reason: reason.to_string() };

    let (ln, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let header = header?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "plapmesh" || fields[1] != "v1" {
        return Err(bad(ln, "expected `plapmesh v1 <dim> <n_nodes> <n_elems>`"));
    }
    let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| bad(ln, "header counts must be integers"));
    let (dim, n_nodes, n_elems) = (parse_usize(fields[2])?, parse_usize(fields[3])?, parse_usize(fields[4])?);
    if !(dim == 1 || dim == 2) {
        return Err(bad(ln, "dimension must be 1 or 2"));
    }

    let mut nodes = Vec::with_capacity(n_nodes);
    let mut boundary = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let (ln, line) = lines.next().ok_or_else(|| bad(0, "missing node lines"))?;
        let line = line?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != dim + 1 {
            return Err(bad(ln, "wrong number of node fields"));
        }
        let mut x = [0.0; 2];
        for k in 0..dim {
            x[k] = f[k].parse().map_err(|_| bad(ln, "bad coordinate"))?;
        }
        let flag = match f[dim] {
            "0" => false,
            "1" => true,
            _ => return Err(bad(ln, "boundary flag must be 0 or 1")),
        };
        nodes.push(x);
        boundary.push(flag);
    }
    let mut cells = Vec::with_capacity(n_elems);
    for _ in 0..n_elems {
        let (ln, line) = lines.next().ok_or_else(|| bad(0, "missing element lines"))?;
        let line = line?;
        let cell = line
            .split_whitespace()
            .map(|s| s.parse::<usize>().map_err(|_| bad(ln, "bad node index")))
            .collect::<Result<Vec<_>>>()?;
        if cell.len() != dim + 1 {
            return Err(bad(ln, "wrong number of element vertices"));
        }
        cells.push(cell);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(bad(ln, "trailing content"));
    }
    Mesh::from_parts(dim, nodes, cells, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, Domain};

    #[test]
    fn round_trip_preserves_topology_and_distance() {
        for (domain, n) in [(Domain::Interval { a: 0.0, b: 1.0 }, 5), (Domain::UnitSquare, 4)] {
            let mesh = build_mesh(domain, n).unwrap();
            let mut buf = Vec::new();
            write_mesh(&mesh, &mut buf).unwrap();
            let back = read_mesh(buf.as_slice()).unwrap();
            assert_eq!(back.nodes(), mesh.nodes());
            assert_eq!(back.boundary_flags(), mesh.boundary_flags());
            for (a, b) in back.elements().iter().zip(mesh.elements()) {
                assert_eq!(a.nodes, b.nodes);
            }
            // polygonal boundary coincides with the true one here
            for (a, b) in back.nodal_distance().iter().zip(mesh.nodal_distance()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn header_is_exact() {
        let mesh = build_mesh(Domain::Interval { a: 0.0, b: 1.0 }, 2).unwrap();
        let mut buf = Vec::new();
        write_mesh(&mesh, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "plapmesh v1 1 3 2\n0 1\n0.5 0\n1 1\n0 1\n1 2\n");
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(read_mesh("plapmesh v2 1 2 1\n0 1\n1 1\n0 1\n".as_bytes()).is_err());
        assert!(read_mesh("plapmesh v1 1 2 1\n0 1\n1 1\n0 5\n".as_bytes()).is_err());
        // interior flag on an end point
        assert!(read_mesh("plapmesh v1 1 2 1\n0 0\n1 1\n0 1\n".as_bytes()).is_err());
    }
}
