//! File formats: one-value-per-line histograms, comma-separated matrices and
//! ASCII PGM (P2) images. Reals are written with 17 significant digits so
//! that every value re-parses to the same bits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::Array2;

/// Formats a real with 17 significant digits.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_real(tok: &str, what: &str, line: usize) -> Result<f64> {
    let v: f64 = tok.trim().parse().with_context(|| format!("{what}: line {line}: cannot parse {tok:?} as a number"))?;
    if !v.is_finite() {
        bail!("{what}: line {line}: non-finite value {tok:?}");
    }
    Ok(v)
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let body = l.split('#').next().unwrap_or("").trim();
        (!body.is_empty()).then_some((i + 1, body))
    })
}

/// Parses a vector with one value per line; `#` starts a comment.
pub fn parse_vector(text: &str, what: &str) -> Result<Vec<f64>> {
    let v = content_lines(text).map(|(i, l)| parse_real(l, what, i)).collect::<Result<Vec<_>>>()?;
    if v.is_empty() {
        bail!("{what}: no values");
    }
    Ok(v)
}

pub fn format_vector(v: &[f64]) -> String {
    let mut s = String::with_capacity(v.len() * 24);
    for x in v {
        s.push_str(&format_real(*x));
        s.push('\n');
    }
    s
}

/// Parses comma-separated rows of equal length; `#` starts a comment.
pub fn parse_matrix(text: &str, what: &str) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, l) in content_lines(text) {
        let row = l.split(',').map(|t| parse_real(t, what, i)).collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                bail!("{what}: line {i}: {} columns, expected {}", row.len(), first.len());
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{what}: no rows");
    }
    let (n, m) = (rows.len(), rows[0].len());
    Ok(Array2::from_shape_vec((n, m), rows.concat()).expect("rectangular rows"))
}

pub fn format_matrix(m: &Array2<f64>) -> String {
    let mut s = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|&x| format_real(x)).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

/// Gray levels of an ASCII PGM image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    pub pixels: Vec<u32>,
}

impl Pgm {
    /// Gray levels as reals, row-major.
    pub fn levels(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64).collect()
    }

    /// Quantizes a nonnegative image so that its largest entry maps to `maxval`.
    pub fn quantize(values: &[f64], height: usize, width: usize, maxval: u32) -> Result<Self> {
        if values.len() != height * width {
            bail!("image of {} values cannot be {height}×{width}", values.len());
        }
        let top = values.iter().copied().fold(0.0, f64::max);
        let scale = if top > 0.0 { maxval as f64 / top } else { 0.0 };
        let pixels = values.iter().map(|&v| (v.max(0.0) * scale).round() as u32).collect();
        Ok(Self { width, height, maxval, pixels })
    }
}

pub fn parse_pgm(text: &str, what: &str) -> Result<Pgm> {
    let mut tokens = text.lines().flat_map(|l| l.split('#').next().unwrap_or("").split_whitespace());
    let magic = tokens.next().with_context(|| format!("{what}: empty file"))?;
    if magic != "P2" {
        bail!("{what}: expected an ASCII PGM (P2), found {magic:?}");
    }
    let mut header = [0u32; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let tok = tokens.next().with_context(|| format!("{what}: missing {name}"))?;
        *slot = tok.parse().with_context(|| format!("{what}: bad {name} {tok:?}"))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        bail!("{what}: invalid header {width}×{height}, maxval {maxval}");
    }
    let pixels = tokens
        .map(|t| t.parse::<u32>().with_context(|| format!("{what}: bad pixel {t:?}")))
        .collect::<Result<Vec<_>>>()?;
    if pixels.len() != (width * height) as usize {
        bail!("{what}: {} pixels for a {width}×{height} image", pixels.len());
    }
    if let Some(p) = pixels.iter().find(|&&p| p > maxval) {
        bail!("{what}: pixel {p} exceeds maxval {maxval}");
    }
    Ok(Pgm { width: width as usize, height: height as usize, maxval, pixels })
}

pub fn format_pgm(img: &Pgm) -> String {
    let mut s = format!("P2\n{} {}\n{}\n", img.width, img.height, img.maxval);
    for row in img.pixels.chunks(img.width) {
        let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    parse_vector(&read(path)?, &path.display().to_string())
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    parse_matrix(&read(path)?, &path.display().to_string())
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    parse_pgm(&read(path)?, &path.display().to_string())
}

/// A density loaded from disk, with its image shape when it came from a PGM.
#[derive(Debug, Clone)]
pub struct Density {
    pub values: Vec<f64>,
    pub shape: Option<(usize, usize)>,
}

fn is_pgm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

/// Loads a histogram file or a PGM image (by extension), adds `floor` to
/// every bin and normalizes to unit mass.
pub fn load_density(path: &Path, floor: f64) -> Result<Density> {
    let (raw, shape) = if is_pgm(path) {
        let img = read_pgm(path)?;
        (img.levels(), Some((img.height, img.width)))
    } else {
        (read_vector(path)?, None)
    };
    if let Some(v) = raw.iter().find(|v| **v < 0.0) {
        bail!("{}: negative mass {v}", path.display());
    }
    let values: Vec<f64> = if floor != 0.0 { raw.iter().map(|v| v + floor).collect() } else { raw };
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        bail!("{}: total mass is zero", path.display());
    }
    let values = if total == 1.0 { values } else { values.into_iter().map(|v| v / total).collect() };
    Ok(Density { values, shape })
}
