//! Plain-text grid fields.
//!
//! ```text
//! # stabilab grid-field v1
//! n 3
//! shape box 0 0 0 0.5 0.5 0.5
//! h 0.0625
//! support cells
//! kind real
//! count 4096
//! 0.125
//! ...
//! ```
//!
//! `shape` is `box cx cy cz hx hy hz` or `ball cx cy cz r`. `support` is
//! `cells` (indexed like the grid's cells) or `faces` (like its boundary
//! faces). Complex bodies carry `re im` per line.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::geometry::{DomainGrid, Shape};
use crate::potential::PotentialField;

const MAGIC: &str = "# stabilab grid-field v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Support {
    Cells,
    Faces,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub dim: usize,
    pub shape: Shape,
    pub h: f64,
    pub support: Support,
    pub complex: bool,
    pub values: Vec<C64>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::CorruptRecord(msg.into())
}

impl GridField {
    pub fn real(grid: &DomainGrid, support: Support, values: &[f64]) -> Self {
        Self::new(grid, support, false, values.iter().map(|&v| C64::from(v)).collect())
    }

    pub fn complex(grid: &DomainGrid, support: Support, values: Vec<C64>) -> Self {
        Self::new(grid, support, true, values)
    }

    fn new(grid: &DomainGrid, support: Support, complex: bool, values: Vec<C64>) -> Self {
        Self {
            dim: grid.dim(),
            shape: grid.shape().clone(),
            h: grid.h(),
            support,
            complex,
            values,
        }
    }

    /// Grid described by the header.
    pub fn grid(&self) -> Result<DomainGrid> {
        DomainGrid::build(self.dim, self.shape.clone(), self.h)
    }

    /// Checks the header and length against `grid`.
    pub fn check(&self, grid: &DomainGrid, support: Support) -> Result<()> {
        if self.dim != grid.dim() || self.shape != *grid.shape() || self.h != grid.h() {
            return Err(Error::GridMismatch("grid-field header does not match the grid".into()));
        }
        if self.support != support {
            return Err(Error::GridMismatch(format!("expected a {support:?} field, got {:?}", self.support)));
        }
        let want = match support {
            Support::Cells => grid.n_cells(),
            Support::Faces => grid.n_faces(),
        };
        if self.values.len() != want {
            return Err(Error::GridMismatch(format!("field has {} values, grid needs {want}", self.values.len())));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(32 * self.values.len() + 128);
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "n {}", self.dim);
        let _ = match &self.shape {
            Shape::Box { center: c, half_widths: w } => writeln!(
                s,
                "shape box {:e} {:e} {:e} {:e} {:e} {:e}",
                c[0], c[1], c[2], w[0], w[1], w[2]
            ),
            Shape::Ball { center: c, radius } => {
                writeln!(s, "shape ball {:e} {:e} {:e} {:e}", c[0], c[1], c[2], radius)
            }
        };
        let _ = writeln!(s, "h {:e}", self.h);
        let _ = writeln!(
            s,
            "support {}",
            match self.support {
                Support::Cells => "cells",
                Support::Faces => "faces",
            }
        );
        let _ = writeln!(s, "kind {}", if self.complex { "complex" } else { "real" });
        let _ = writeln!(s, "count {}", self.values.len());
        for v in &self.values {
            let _ = if self.complex {
                writeln!(s, "{:.17e} {:.17e}", v.re, v.im)
            } else {
                writeln!(s, "{:.17e}", v.re)
            };
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some(MAGIC) {
            return Err(bad("not a grid-field file"));
        }
        let mut header = |key: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| bad(format!("missing '{key}' line")))?;
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(format!("expected '{key}', got '{line}'")));
            }
            Ok(it.map(String::from).collect())
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number '{s}'")));
        let dim: usize = header("n")?
            .first()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("bad dimension"))?;
        let sh = header("shape")?;
        let nums: Vec<f64> = sh.iter().skip(1).map(|v| num(v)).collect::<Result<_>>()?;
        let shape = match (sh.first().map(String::as_str), nums.len()) {
            (Some("box"), 6) => Shape::Box {
                center: [nums[0], nums[1], nums[2]],
                half_widths: [nums[3], nums[4], nums[5]],
            },
            (Some("ball"), 4) => Shape::Ball {
                center: [nums[0], nums[1], nums[2]],
                radius: nums[3],
            },
            _ => return Err(bad("shape must be 'box' with 6 numbers or 'ball' with 4")),
        };
        let h = num(header("h")?.first().ok_or_else(|| bad("missing h"))?)?;
        let support = match header("support")?.first().map(String::as_str) {
            Some("cells") => Support::Cells,
            Some("faces") => Support::Faces,
            _ => return Err(bad("support must be 'cells' or 'faces'")),
        };
        let complex = match header("kind")?.first().map(String::as_str) {
            Some("real") => false,
            Some("complex") => true,
            _ => return Err(bad("kind must be 'real' or 'complex'")),
        };
        let count: usize = header("count")?
            .first()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("bad count"))?;
        let mut values = Vec::with_capacity(count);
        for line in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let v = match (complex, parts.as_slice()) {
                (false, [re]) => C64::from(num(re)?),
                (true, [re, im]) => C64::new(num(re)?, num(im)?),
                _ => return Err(bad(format!("bad value line '{line}'"))),
            };
            values.push(v);
        }
        if values.len() != count {
            return Err(bad(format!("count says {count}, found {} values", values.len())));
        }
        Ok(Self {
            dim,
            shape,
            h,
            support,
            complex,
            values,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::parse(&text).map_err(|e| match e {
            Error::CorruptRecord(m) => Error::CorruptRecord(format!("{}: {m}", path.as_ref().display())),
            other => other,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Loads a real cell field as a potential on `grid`.
pub fn read_potential(path: impl AsRef<Path>, grid: &DomainGrid, s: u32, bound: f64) -> Result<PotentialField> {
    let f = GridField::read(path)?;
    f.check(grid, Support::Cells)?;
    if f.complex && f.values.iter().any(|v| v.im != 0.0) {
        return Err(Error::InvalidInput("potential file has complex values".into()));
    }
    PotentialField::new(grid, f.values.iter().map(|v| v.re).collect(), s, bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> DomainGrid {
        DomainGrid::build(3, Shape::unit_cube(), 0.25).unwrap()
    }

    #[test]
    fn header_roundtrip() {
        let g = grid();
        let vals: Vec<f64> = (0..g.n_cells()).map(|i| i as f64 * 0.1 - 3.0).collect();
        let f = GridField::real(&g, Support::Cells, &vals);
        let back = GridField::parse(&f.to_text()).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.grid().unwrap().hash(), g.hash());
        back.check(&g, Support::Cells).unwrap();
        assert!(back.check(&g, Support::Faces).is_err());
    }

    #[test]
    fn rejects_truncated_body() {
        let g = grid();
        let f = GridField::real(&g, Support::Cells, &vec![1.0; g.n_cells()]);
        let text = f.to_text();
        let cut = &text[..text.trim_end().rfind('\n').unwrap()];
        assert!(matches!(GridField::parse(cut), Err(Error::CorruptRecord(_))));
        assert!(GridField::parse("hello").is_err());
    }

    #[test]
    fn potential_from_file() {
        let g = grid();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.txt");
        GridField::real(&g, Support::Cells, &vec![0.5; g.n_cells()]).write(&path).unwrap();
        let q = read_potential(&path, &g, 2, 10.0).unwrap();
        assert_eq!(q.values()[3], 0.5);
        let fine = DomainGrid::build(3, Shape::unit_cube(), 0.125).unwrap();
        assert!(matches!(read_potential(&path, &fine, 2, 10.0), Err(Error::GridMismatch(_))));
    }

    proptest! {
        #[test]
        fn complex_values_roundtrip_exactly(vals in proptest::collection::vec((-1e6f64..1e6, -1e-6f64..1e-6), 1..40)) {
            let g = grid();
            let values: Vec<C64> = vals.iter().map(|&(a, b)| C64::new(a, b)).collect();
            let f = GridField::complex(&g, Support::Faces, values);
            prop_assert_eq!(GridField::parse(&f.to_text()).unwrap(), f);
        }
    }
}
