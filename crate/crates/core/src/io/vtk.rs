//! Legacy ASCII VTK (`STRUCTURED_POINTS`) output and a reader for the files
//! this module writes.
//!
//! Values are printed with 17 significant digits so they parse back to the
//! same `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::driver::Evaluation;
use crate::error::{Error, Result};
use crate::grid::StructuredGrid;

/// Title marker for designs whose left edge is a symmetry plane.
pub const SYMMETRY_TAG: &str = "symmetry=x0";

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarArray {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorArray {
    pub name: String,
    /// Three components per point.
    pub values: Vec<[f64; 3]>,
}

/// In-memory image of a structured-points file.
#[derive(Debug, Clone, PartialEq)]
pub struct VtkImage {
    pub title: String,
    /// Point counts along x and y.
    pub dims: [usize; 2],
    pub origin: [f64; 2],
    pub spacing: f64,
    pub point_scalars: Vec<ScalarArray>,
    pub point_vectors: Vec<VectorArray>,
    pub cell_scalars: Vec<ScalarArray>,
}

impl VtkImage {
    pub fn new(title: impl Into<String>, grid: &StructuredGrid) -> Self {
        VtkImage {
            title: title.into(),
            dims: [grid.nx + 1, grid.ny + 1],
            origin: grid.origin,
            spacing: grid.h,
            point_scalars: Vec::new(),
            point_vectors: Vec::new(),
            cell_scalars: Vec::new(),
        }
    }

    pub fn num_points(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn num_cells(&self) -> usize {
        self.dims[0].saturating_sub(1) * self.dims[1].saturating_sub(1)
    }

    pub fn point_scalar(&self, name: &str) -> Option<&[f64]> {
        self.point_scalars.iter().find(|a| a.name == name).map(|a| a.values.as_slice())
    }

    pub fn cell_scalar(&self, name: &str) -> Option<&[f64]> {
        self.cell_scalars.iter().find(|a| a.name == name).map(|a| a.values.as_slice())
    }

    pub fn point_vector(&self, name: &str) -> Option<&[[f64; 3]]> {
        self.point_vectors.iter().find(|a| a.name == name).map(|a| a.values.as_slice())
    }

    /// Rebuild the grid the image was written from.
    pub fn grid(&self) -> Result<StructuredGrid> {
        crate::grid::build_grid(
            self.dims[0].saturating_sub(1),
            self.dims[1].saturating_sub(1),
            self.spacing,
            self.origin,
        )
    }

    pub fn to_vtk_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# vtk DataFile Version 3.0");
        let _ = writeln!(out, "{}", self.title.replace('\n', " "));
        let _ = writeln!(out, "ASCII");
        let _ = writeln!(out, "DATASET STRUCTURED_POINTS");
        let _ = writeln!(out, "DIMENSIONS {} {} 1", self.dims[0], self.dims[1]);
        let _ = writeln!(out, "ORIGIN {} {} {}", num(self.origin[0]), num(self.origin[1]), num(0.0));
        let _ = writeln!(out, "SPACING {} {} {}", num(self.spacing), num(self.spacing), num(self.spacing));
        if !self.point_scalars.is_empty() || !self.point_vectors.is_empty() {
            let _ = writeln!(out, "POINT_DATA {}", self.num_points());
            for a in &self.point_scalars {
                write_scalars(&mut out, a);
            }
            for a in &self.point_vectors {
                let _ = writeln!(out, "VECTORS {} double", a.name);
                for v in &a.values {
                    let _ = writeln!(out, "{} {} {}", num(v[0]), num(v[1]), num(v[2]));
                }
            }
        }
        if !self.cell_scalars.is_empty() {
            let _ = writeln!(out, "CELL_DATA {}", self.num_cells());
            for a in &self.cell_scalars {
                write_scalars(&mut out, a);
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_vtk_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<VtkImage> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse(&text).map_err(|message| Error::Vtk { path: path.to_path_buf(), message })
    }

    pub fn from_vtk_str(text: &str) -> Result<VtkImage> {
        parse(text).map_err(|message| Error::Vtk { path: "<string>".into(), message })
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_scalars(out: &mut String, a: &ScalarArray) {
    let _ = writeln!(out, "SCALARS {} double 1", a.name);
    let _ = writeln!(out, "LOOKUP_TABLE default");
    for v in &a.values {
        let _ = writeln!(out, "{}", num(*v));
    }
}

/// Snapshot of one evaluated design with every field the optimizer tracks.
pub fn design_image(grid: &StructuredGrid, ev: &Evaluation, frozen: &[bool], symmetric: bool) -> VtkImage {
    let mut title = format!("levelset-density design iteration={}", ev.iteration);
    if symmetric {
        title.push(' ');
        title.push_str(SYMMETRY_TAG);
    }
    let mut img = VtkImage::new(title, grid);
    let f = &ev.fields;
    for (name, values) in [
        ("phi", &f.phi),
        ("phi_target", &ev.target.values),
        ("s_hat_rho", &f.s_hat_rho),
        ("rho_hat", &f.rho_hat),
        ("rho_bar", &f.rho_bar),
    ] {
        img.point_scalars.push(ScalarArray { name: name.into(), values: values.clone() });
    }
    img.point_scalars.push(ScalarArray {
        name: "frozen".into(),
        values: frozen.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    });
    img.point_vectors.push(VectorArray {
        name: "displacement".into(),
        values: ev.displacement.chunks(2).map(|u| [u[0], u[1], 0.0]).collect(),
    });
    for (name, values) in [
        ("solid_fraction", &ev.fractions.fractions),
        ("elem_rho_hat", &f.elem_rho_hat),
        ("youngs_modulus", &ev.moduli),
    ] {
        img.cell_scalars.push(ScalarArray { name: name.into(), values: values.clone() });
    }
    img
}

/// Write [`design_image`] to `path`.
pub fn write_vtk(path: &Path, grid: &StructuredGrid, ev: &Evaluation, frozen: &[bool], symmetric: bool) -> Result<()> {
    design_image(grid, ev, frozen, symmetric).write(path)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Point,
    Cell,
}

struct Tokens<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    pending: std::vec::IntoIter<&'a str>,
    line: usize,
}

impl<'a> Tokens<'a> {
    fn next_line(&mut self) -> Option<&'a str> {
        for (i, l) in self.lines.by_ref() {
            self.line = i + 1;
            if !l.trim().is_empty() {
                return Some(l.trim());
            }
        }
        None
    }

    fn next_number(&mut self) -> std::result::Result<f64, String> {
        loop {
            if let Some(t) = self.pending.next() {
                return t.parse().map_err(|_| format!("line {}: bad number '{t}'", self.line));
            }
            let l = self.next_line().ok_or("unexpected end of file")?;
            self.pending = l.split_whitespace().collect::<Vec<_>>().into_iter();
        }
    }

    fn numbers(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        (0..n).map(|_| self.next_number()).collect()
    }
}

fn parse(text: &str) -> std::result::Result<VtkImage, String> {
    let mut t = Tokens { lines: text.lines().enumerate().peekable(), pending: Vec::new().into_iter(), line: 0 };
    let version = t.next_line().ok_or("empty file")?;
    if !version.starts_with("# vtk DataFile") {
        return Err("missing '# vtk DataFile' header".into());
    }
    let title = t.lines.next().map(|(_, l)| l.trim().to_string()).unwrap_or_default();
    t.line = 2;
    if t.next_line() != Some("ASCII") {
        return Err("only ASCII files are supported".into());
    }
    if t.next_line() != Some("DATASET STRUCTURED_POINTS") {
        return Err("expected DATASET STRUCTURED_POINTS".into());
    }
    let mut img = VtkImage {
        title,
        dims: [0, 0],
        origin: [0.0, 0.0],
        spacing: 1.0,
        point_scalars: Vec::new(),
        point_vectors: Vec::new(),
        cell_scalars: Vec::new(),
    };
    let mut section = Section::None;
    while let Some(line) = t.next_line() {
        let words: Vec<&str> = line.split_whitespace().collect();
        let bad = || format!("line {}: malformed '{line}'", t.line);
        match words.as_slice() {
            ["DIMENSIONS", x, y, z] => {
                let d: Vec<usize> = [x, y, z].iter().map(|s| s.parse().map_err(|_| bad())).collect::<std::result::Result<_, _>>()?;
                if d[2] != 1 {
                    return Err(format!("line {}: only 2D images are supported", t.line));
                }
                img.dims = [d[0], d[1]];
            }
            ["ORIGIN", x, y, _] => {
                img.origin = [x.parse().map_err(|_| bad())?, y.parse().map_err(|_| bad())?];
            }
            ["SPACING", dx, _, _] => img.spacing = dx.parse().map_err(|_| bad())?,
            ["POINT_DATA", n] => {
                if n.parse::<usize>().ok() != Some(img.num_points()) {
                    return Err(format!("line {}: POINT_DATA count does not match DIMENSIONS", t.line));
                }
                section = Section::Point;
            }
            ["CELL_DATA", n] => {
                if n.parse::<usize>().ok() != Some(img.num_cells()) {
                    return Err(format!("line {}: CELL_DATA count does not match DIMENSIONS", t.line));
                }
                section = Section::Cell;
            }
            ["SCALARS", name, _ty, rest @ ..] => {
                if rest.first().is_some_and(|c| *c != "1") {
                    return Err(format!("line {}: multi-component scalars are not supported", t.line));
                }
                match t.next_line() {
                    Some(l) if l.starts_with("LOOKUP_TABLE") => {}
                    _ => return Err(format!("line {}: expected LOOKUP_TABLE", t.line)),
                }
                let (n, target) = match section {
                    Section::Point => (img.num_points(), &mut img.point_scalars),
                    Section::Cell => (img.num_cells(), &mut img.cell_scalars),
                    Section::None => return Err(format!("line {}: SCALARS outside a data section", t.line)),
                };
                let values = t.numbers(n)?;
                target.push(ScalarArray { name: name.to_string(), values });
            }
            ["VECTORS", name, _ty] => {
                if section != Section::Point {
                    return Err(format!("line {}: only point vectors are supported", t.line));
                }
                let flat = t.numbers(3 * img.num_points())?;
                let values = flat.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
                img.point_vectors.push(VectorArray { name: name.to_string(), values });
            }
            _ => return Err(format!("line {}: unsupported keyword '{}'", t.line, words[0])),
        }
    }
    if img.dims[0] == 0 || img.dims[1] == 0 {
        return Err("missing DIMENSIONS".into());
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    fn sample() -> VtkImage {
        let g = build_grid(2, 2, 0.5, [1.0, -2.0]).unwrap();
        let mut img = VtkImage::new("test symmetry=x0", &g);
        img.point_scalars.push(ScalarArray {
            name: "phi".into(),
            values: (0..9).map(|i| (i as f64 * 0.1).sin() / 3.0 - 1e-300).collect(),
        });
        img.point_vectors.push(VectorArray {
            name: "displacement".into(),
            values: (0..9).map(|i| [i as f64 / 7.0, -(i as f64) * 1e-17, 0.0]).collect(),
        });
        img.cell_scalars.push(ScalarArray { name: "solid_fraction".into(), values: vec![0.1, 1.0 / 3.0, 2.0 / 3.0, 1.0] });
        img
    }

    #[test]
    fn header_of_two_by_two_grid() {
        let s = sample().to_vtk_string();
        assert!(s.contains("DATASET STRUCTURED_POINTS\n"));
        assert!(s.contains("DIMENSIONS 3 3 1\n"));
        assert!(s.contains("POINT_DATA 9\n"));
        assert!(s.contains("CELL_DATA 4\n"));
        let phi_block: Vec<&str> = s
            .split("LOOKUP_TABLE default\n")
            .nth(1)
            .unwrap()
            .lines()
            .take_while(|l| !l.starts_with("VECTORS"))
            .collect();
        assert_eq!(phi_block.len(), 9);
    }

    #[test]
    fn round_trip_is_exact() {
        let img = sample();
        let back = VtkImage::from_vtk_str(&img.to_vtk_string()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn wrong_counts_are_rejected() {
        let s = sample().to_vtk_string().replace("POINT_DATA 9", "POINT_DATA 8");
        assert!(VtkImage::from_vtk_str(&s).is_err());
        let truncated: String = sample().to_vtk_string().lines().take(14).collect::<Vec<_>>().join("\n");
        assert!(VtkImage::from_vtk_str(&truncated).is_err());
    }
}
