//! Text writers: VTK legacy ASCII fields, CSV curves and polylines.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Mesh;
use crate::scalar::Real;

/// Unstructured-grid VTK file with one `SCALARS` block per named nodal field.
pub fn vtk_legacy<T: Real>(mesh: &Mesh<T>, title: &str, point_fields: &[(&str, &[T])]) -> Result<String> {
    for (name, values) in point_fields {
        if values.len() != mesh.n_nodes() {
            return Err(Error::ShapeMismatch(format!("field '{name}' has {} values", values.len())));
        }
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("invalid VTK field name '{name}'")));
        }
    }
    let mut out = String::new();
    writeln!(out, "# vtk DataFile Version 3.0").unwrap();
    writeln!(out, "{}", title.lines().next().unwrap_or("")).unwrap();
    writeln!(out, "ASCII\nDATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(out, "POINTS {} double", mesh.n_nodes()).unwrap();
    for p in mesh.nodes() {
        writeln!(out, "{} {} 0", p[0].as_f64(), p[1].as_f64()).unwrap();
    }
    let m = mesh.n_cells();
    writeln!(out, "CELLS {m} {}", 4 * m).unwrap();
    for t in mesh.triangles() {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(out, "CELL_TYPES {m}").unwrap();
    for _ in 0..m {
        writeln!(out, "5").unwrap();
    }
    if !point_fields.is_empty() {
        writeln!(out, "POINT_DATA {}", mesh.n_nodes()).unwrap();
        for (name, values) in point_fields {
            writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
            for v in values.iter() {
                writeln!(out, "{}", v.as_f64()).unwrap();
            }
        }
    }
    Ok(out)
}

/// Two-column CSV with the given header names.
pub fn curve_csv(header: [&str; 2], rows: &[(f64, f64)]) -> String {
    let mut out = format!("{},{}\n", header[0], header[1]);
    for (a, b) in rows {
        writeln!(out, "{a},{b}").unwrap();
    }
    out
}

/// `loop,x,y` rows, one block per closed polyline.
pub fn polylines_csv<T: Real>(loops: &[Vec<[T; 2]>]) -> String {
    let mut out = String::from("loop,x,y\n");
    for (k, pts) in loops.iter().enumerate() {
        for p in pts {
            writeln!(out, "{k},{},{}", p[0].as_f64(), p[1].as_f64()).unwrap();
        }
    }
    out
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}
