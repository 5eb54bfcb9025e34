//! Minutiae and their plain-text file format.
//!
//! One record per line: `x y angle_degrees kind`, where `kind` is `E`
//! (ridge ending) or `B` (bifurcation) and the angle lies in `[0, 360)`.
//! Lines starting with `#` are comments; a `# size W H` comment records the
//! image frame.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::wrap_two_pi;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MinutiaKind {
    Ending,
    Bifurcation,
}

impl MinutiaKind {
    pub fn code(self) -> char {
        match self {
            MinutiaKind::Ending => 'E',
            MinutiaKind::Bifurcation => 'B',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minutia {
    pub x: f64,
    pub y: f64,
    /// Radians in `[0, 2π)`.
    pub angle: f64,
    pub kind: MinutiaKind,
}

impl Minutia {
    pub fn new(x: f64, y: f64, angle: f64, kind: MinutiaKind) -> Self {
        Self {
            x,
            y,
            angle: wrap_two_pi(angle),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MinutiaSet {
    items: Vec<Minutia>,
    dims: Option<(usize, usize)>,
}

impl MinutiaSet {
    /// Rejects duplicate locations and, when `dims` is known, points outside the frame.
    pub fn new(items: Vec<Minutia>, dims: Option<(usize, usize)>) -> Result<Self> {
        for (i, m) in items.iter().enumerate() {
            if !(m.x.is_finite() && m.y.is_finite() && m.angle.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "minutia {i} has non-finite fields"
                )));
            }
            if let Some((w, h)) = dims {
                if m.x < 0.0 || m.y < 0.0 || m.x >= w as f64 || m.y >= h as f64 {
                    return Err(Error::OutOfBounds {
                        x: m.x,
                        y: m.y,
                        width: w,
                        height: h,
                    });
                }
            }
            if items[..i].iter().any(|o| o.x == m.x && o.y == m.y) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate minutia location ({}, {})",
                    m.x, m.y
                )));
            }
        }
        Ok(Self { items, dims })
    }

    pub fn empty(dims: Option<(usize, usize)>) -> Self {
        Self {
            items: Vec::new(),
            dims,
        }
    }

    pub fn items(&self) -> &[Minutia] {
        &self.items
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Minutia> {
        self.items.iter()
    }

    pub fn count_kind(&self, kind: MinutiaKind) -> usize {
        self.items.iter().filter(|m| m.kind == kind).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some((w, h)) = self.dims {
            let _ = writeln!(out, "# size {w} {h}");
        }
        for m in &self.items {
            let deg = m.angle.to_degrees();
            // keep the written angle inside [0, 360) after rounding
            let deg = if deg >= 360.0 { 0.0 } else { deg };
            let _ = writeln!(out, "{} {} {} {}", m.x, m.y, deg, m.kind.code());
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut dims = None;
        let mut items = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let fields: Vec<&str> = comment.split_whitespace().collect();
                if fields.first() == Some(&"size") {
                    if fields.len() != 3 {
                        return Err(parse_err(line_no, "size header needs W and H".into()));
                    }
                    let w = fields[1]
                        .parse::<usize>()
                        .map_err(|e| parse_err(line_no, format!("bad width: {e}")))?;
                    let h = fields[2]
                        .parse::<usize>()
                        .map_err(|e| parse_err(line_no, format!("bad height: {e}")))?;
                    dims = Some((w, h));
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(parse_err(
                    line_no,
                    format!("expected 4 fields `x y angle kind`, found {}", fields.len()),
                ));
            }
            let num = |s: &str, what: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(line_no, format!("bad {what} `{s}`")))
            };
            let x = num(fields[0], "x")?;
            let y = num(fields[1], "y")?;
            let deg = num(fields[2], "angle")?;
            if !(0.0..360.0).contains(&deg) {
                return Err(parse_err(
                    line_no,
                    format!("angle {deg} outside [0, 360)"),
                ));
            }
            let kind = match fields[3] {
                "E" => MinutiaKind::Ending,
                "B" => MinutiaKind::Bifurcation,
                other => {
                    return Err(parse_err(line_no, format!("unknown kind `{other}`")));
                }
            };
            items.push(Minutia::new(x, y, deg.to_radians(), kind));
        }
        MinutiaSet::new(items, dims).map_err(|e| parse_err(0, e.to_string()))
    }
}

pub fn read_minutiae(path: impl AsRef<Path>) -> Result<MinutiaSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MinutiaSet::parse(&text, path)
}

pub fn write_minutiae(set: &MinutiaSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, set.to_text()).map_err(|e| Error::io(path, e))
}
