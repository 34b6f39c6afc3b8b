//! Correspondence text files, intrinsics sidecars and reference extrinsics.
//!
//! A correspondence file holds one pair per line, `u_l v_l u_r v_r`,
//! whitespace-separated. Blank lines and everything after `#` are ignored.
//! [`write_correspondences`] emits the canonical form: one pair per line,
//! single spaces, shortest round-trip decimal representation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stereocal::{
    CorrespondencePair, CorrespondenceSet, Extrinsics, Intrinsics, PixelPoint, RotationMatrix,
    UnitVec3,
};

use crate::error::{CliError, Result};

/// Sidecar JSON: `{"left": {fx, fy, cx, cy, skew}, "right": {...}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsFile {
    pub left: Intrinsics,
    pub right: Intrinsics,
}

/// 3×3 matrix written out entry by entry, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixRows {
    pub r11: f64,
    pub r12: f64,
    pub r13: f64,
    pub r21: f64,
    pub r22: f64,
    pub r23: f64,
    pub r31: f64,
    pub r32: f64,
    pub r33: f64,
}

impl MatrixRows {
    pub fn from_row_major(v: [f64; 9]) -> Self {
        Self {
            r11: v[0],
            r12: v[1],
            r13: v[2],
            r21: v[3],
            r22: v[4],
            r23: v[5],
            r31: v[6],
            r32: v[7],
            r33: v[8],
        }
    }

    pub fn from_matrix(m: &stereocal::so3::Mat3) -> Self {
        Self::from_row_major([
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ])
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        [
            self.r11, self.r12, self.r13, self.r21, self.r22, self.r23, self.r31, self.r32,
            self.r33,
        ]
    }

    /// Fails unless the entries form a proper rotation.
    pub fn to_rotation(&self) -> stereocal::Result<RotationMatrix> {
        RotationMatrix::from_row_major(&self.to_row_major())
    }
}

/// `p_r = R·p_l + t` with unit `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicsRecord {
    pub rotation: MatrixRows,
    pub translation: [f64; 3],
}

impl ExtrinsicsRecord {
    pub fn from_extrinsics(ext: &Extrinsics) -> Self {
        let t = ext.translation.as_vec();
        Self {
            rotation: MatrixRows::from_row_major(ext.rotation.to_row_major()),
            translation: [t.x, t.y, t.z],
        }
    }

    pub fn to_extrinsics(&self) -> stereocal::Result<Extrinsics> {
        let [x, y, z] = self.translation;
        let t = UnitVec3::from_unit(stereocal::so3::Vec3::new(x, y, z))?;
        Ok(Extrinsics::new(self.rotation.to_rotation()?, t))
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::json(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::json(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

/// Pixel pairs of a correspondence file, in file order. `path` is only used
/// in error messages.
pub fn parse_pairs(text: &str, path: &Path) -> Result<Vec<CorrespondencePair>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let parse_err = |message: String| CliError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_err(format!(
                "expected 4 whitespace-separated numbers, found {}: {content:?}",
                fields.len()
            )));
        }
        let mut v = [0.0; 4];
        for (slot, field) in v.iter_mut().zip(&fields) {
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| parse_err(format!("not a finite number: {field:?}")))?;
        }
        pairs.push(CorrespondencePair::new(
            PixelPoint::new(v[0], v[1]),
            PixelPoint::new(v[2], v[3]),
        ));
    }
    Ok(pairs)
}

/// `intrinsics.json` next to the correspondence file.
pub fn default_intrinsics_path(input: &Path) -> PathBuf {
    input
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join("intrinsics.json")
}

pub fn read_intrinsics(path: &Path) -> Result<IntrinsicsFile> {
    let missing = |reason: String| CliError::MissingIntrinsics {
        path: path.to_path_buf(),
        reason,
    };
    let text = fs::read_to_string(path).map_err(|e| missing(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| missing(e.to_string()))
}

/// Reads a correspondence file together with its intrinsics sidecar; the
/// sidecar defaults to `intrinsics.json` in the same directory.
pub fn parse_correspondences(path: &Path, intrinsics: Option<&Path>) -> Result<CorrespondenceSet> {
    let sidecar = intrinsics
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_intrinsics_path(path));
    let k = read_intrinsics(&sidecar)?;
    let pairs = parse_pairs(&read_text(path)?, path)?;
    if pairs.is_empty() {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "no correspondences".into(),
        });
    }
    Ok(CorrespondenceSet::new(pairs, k.left, k.right)?)
}

/// Canonical text form of a correspondence set.
pub fn write_correspondences(set: &CorrespondenceSet) -> String {
    let mut out = String::new();
    for p in &set.pairs {
        writeln!(out, "{} {} {} {}", p.left.u, p.left.v, p.right.u, p.right.v)
            .expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skips_comments_and_blank_lines() {
        let text = "# header\n1 2 3 4\n\n5 6 7 8 # trailing\n  9 10 11 12\n";
        let pairs = parse_pairs(text, Path::new("x")).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[1].right, PixelPoint::new(7.0, 8.0));
    }

    #[test]
    fn comma_separated_line_reports_its_number() {
        let err = parse_pairs("1 2 3 4\na,b,c,d\n", Path::new("x")).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_non_finite_values() {
        let err = parse_pairs("1 2 nan 4\n", Path::new("x")).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 1, .. }));
    }

    #[test]
    fn matrix_rows_are_row_major() {
        let rows = MatrixRows::from_row_major([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let m = stereocal::so3::Mat3::from_row_slice(&rows.to_row_major());
        assert_eq!(m[(0, 1)], 2.0);
        assert_eq!(MatrixRows::from_matrix(&m), rows);
    }
}
