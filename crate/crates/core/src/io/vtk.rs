//! Legacy ASCII VTK writers for grid and network snapshots.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::mesh::StructuredQuadMesh;
use crate::vasculature::VesselNetwork;

fn push_scalars(out: &mut String, name: &str, values: &[f64]) {
    let _ = writeln!(out, "SCALARS {name} double 1");
    out.push_str("LOOKUP_TABLE default\n");
    for v in values {
        let _ = writeln!(out, "{v:e}");
    }
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.contains(char::is_whitespace) {
        return Err(Error::data(format!("invalid field name '{name}'")));
    }
    Ok(())
}

/// Structured-grid snapshot with one scalar array per named nodal field.
pub fn write_snapshot(mesh: &StructuredQuadMesh, fields: &[(&str, &[f64])], path: &Path) -> Result<()> {
    let n = mesh.num_nodes();
    let mut out = String::with_capacity(64 * n * (fields.len() + 1));
    out.push_str("# vtk DataFile Version 3.0\nnanotherm snapshot\nASCII\nDATASET STRUCTURED_GRID\n");
    let _ = writeln!(out, "DIMENSIONS {} {} 1", mesh.nx() + 1, mesh.ny() + 1);
    let _ = writeln!(out, "POINTS {n} double");
    for c in mesh.coords() {
        let _ = writeln!(out, "{:e} {:e} 0", c[0], c[1]);
    }
    let _ = writeln!(out, "POINT_DATA {n}");
    for (name, values) in fields {
        check_name(name)?;
        if values.len() != n {
            return Err(Error::data(format!(
                "field '{name}' has {} values for {n} nodes",
                values.len()
            )));
        }
        push_scalars(&mut out, name, values);
    }
    write_atomic(path, out.as_bytes())
}

/// Scalars of a snapshot read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotData {
    pub dimensions: [usize; 3],
    pub points: usize,
    pub fields: Vec<(String, Vec<f64>)>,
}

/// Minimal reader for files produced by [`write_snapshot`].
pub fn read_snapshot(path: &Path) -> Result<SnapshotData> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::data(format!("{}: {m}", path.display()));
    let mut lines = text.lines().peekable();
    let mut dims = None;
    let mut points = None;
    let mut fields = Vec::new();
    while let Some(line) = lines.next() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("DIMENSIONS") => {
                let v: Vec<usize> = it.filter_map(|s| s.parse().ok()).collect();
                if v.len() != 3 {
                    return Err(bad("malformed DIMENSIONS"));
                }
                dims = Some([v[0], v[1], v[2]]);
            }
            Some("POINTS") => {
                let n: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("malformed POINTS"))?;
                for _ in 0..n {
                    lines.next().ok_or_else(|| bad("truncated POINTS"))?;
                }
                points = Some(n);
            }
            Some("SCALARS") => {
                let name = it.next().ok_or_else(|| bad("unnamed SCALARS"))?.to_string();
                let n = points.ok_or_else(|| bad("SCALARS before POINTS"))?;
                lines.next();
                let mut values = Vec::with_capacity(n);
                for _ in 0..n {
                    let l = lines.next().ok_or_else(|| bad("truncated SCALARS"))?;
                    values.push(l.trim().parse().map_err(|_| bad("non-numeric scalar"))?);
                }
                fields.push((name, values));
            }
            _ => {}
        }
    }
    Ok(SnapshotData {
        dimensions: dims.ok_or_else(|| bad("missing DIMENSIONS"))?,
        points: points.ok_or_else(|| bad("missing POINTS"))?,
        fields,
    })
}

/// Polyline snapshot of a network with per-segment cell scalars.
pub fn write_network_snapshot(network: &VesselNetwork, cell_fields: &[(&str, &[f64])], path: &Path) -> Result<()> {
    let ns = network.num_segments();
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\nnanotherm network\nASCII\nDATASET POLYDATA\n");
    let _ = writeln!(out, "POINTS {} double", network.num_nodes());
    for p in &network.nodes {
        let _ = writeln!(out, "{:e} {:e} 0", p[0], p[1]);
    }
    let _ = writeln!(out, "LINES {ns} {}", 3 * ns);
    for s in &network.segments {
        let _ = writeln!(out, "2 {} {}", s.nodes[0], s.nodes[1]);
    }
    let _ = writeln!(out, "CELL_DATA {ns}");
    for (name, values) in cell_fields {
        check_name(name)?;
        if values.len() != ns {
            return Err(Error::data(format!(
                "segment field '{name}' has {} values for {ns} segments",
                values.len()
            )));
        }
        push_scalars(&mut out, name, values);
    }
    write_atomic(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = StructuredQuadMesh::new(4, 3, 1.0, 1.0).unwrap();
        let ones = vec![1.0; mesh.num_nodes()];
        let path = dir.path().join("s.vtk");
        write_snapshot(&mesh, &[("T", &ones)], &path).unwrap();
        let back = read_snapshot(&path).unwrap();
        assert_eq!(back.points, 20);
        assert_eq!(back.dimensions, [5, 4, 1]);
        assert_eq!(back.fields[0].0, "T");
        assert!(back.fields[0].1.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rejects_wrong_length() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = StructuredQuadMesh::new(2, 2, 1.0, 1.0).unwrap();
        assert!(write_snapshot(&mesh, &[("T", &[1.0])], &dir.path().join("x.vtk")).is_err());
        assert!(!dir.path().join("x.vtk").exists());
    }
}
