//! Legacy ASCII VTK (version 3.0) unstructured grids of bilinear quads.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::fespace::FeSpace;

/// Scalar values at the nodes of a cG(1) space, hanging nodes included.
#[derive(Debug, Clone)]
pub struct PointField<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

const VTK_QUAD: u8 = 9;

fn write_grid(w: &mut impl Write, space: &FeSpace, title: &str) -> Result<()> {
    assert_eq!(space.order(), 1, "VTK output uses the cG(1) nodes");
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", space.n_nodes())?;
    for i in 0..space.n_nodes() {
        let x = space.node_coords(i);
        writeln!(w, "{} {} 0", x[0], x[1])?;
    }
    let nc = space.n_cells();
    writeln!(w, "CELLS {nc} {}", 5 * nc)?;
    for c in 0..nc {
        let n = space.cell_nodes(c);
        writeln!(w, "4 {} {} {} {}", n[0], n[1], n[2], n[3])?;
    }
    writeln!(w, "CELL_TYPES {nc}")?;
    for _ in 0..nc {
        writeln!(w, "{VTK_QUAD}")?;
    }
    Ok(())
}

fn write_scalars(w: &mut impl Write, name: &str, values: &[f64]) -> Result<()> {
    writeln!(w, "SCALARS {name} double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in values {
        writeln!(w, "{v:.9e}")?;
    }
    Ok(())
}

/// Mesh only.
pub fn write_mesh(path: &Path, space: &FeSpace) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_grid(&mut w, space, "mesh")?;
    w.flush()?;
    Ok(())
}

/// Mesh with point and cell data.
pub fn write_fields(path: &Path, space: &FeSpace, points: &[PointField<'_>], cells: &[(&str, &[f64])]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_grid(&mut w, space, "fields")?;
    if !points.is_empty() {
        writeln!(w, "POINT_DATA {}", space.n_nodes())?;
        for f in points {
            assert_eq!(f.values.len(), space.n_nodes(), "point field {}", f.name);
            write_scalars(&mut w, f.name, f.values)?;
        }
    }
    if !cells.is_empty() {
        writeln!(w, "CELL_DATA {}", space.n_cells())?;
        for (name, values) in cells {
            assert_eq!(values.len(), space.n_cells(), "cell field {name}");
            write_scalars(&mut w, name, values)?;
        }
    }
    w.flush()?;
    Ok(())
}
