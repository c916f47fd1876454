use std::collections::BTreeMap;
use std::path::Path;

use crate::protocol::ExpressionName;

pub const MATRIX_SIZE: usize = 8;

pub type Bitmap = [[bool; MATRIX_SIZE]; MATRIX_SIZE];

/// One face for the 8×8 dot matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpressionFrame {
    pub name: ExpressionName,
    pub bitmap: Bitmap,
}

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("{name}: line {line}: {reason}")]
    Malformed {
        name: String,
        line: usize,
        reason: String,
    },
    #[error("{name}: expected {MATRIX_SIZE} rows, found {rows}")]
    RowCount { name: String, rows: usize },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("frames `{0}` and `{1}` are identical")]
    Duplicate(String, String),
}

impl ExpressionFrame {
    /// Parse an asset: eight lines of eight `#` (lit) or `.` (dark).
    pub fn parse(name: ExpressionName, text: &str) -> Result<Self, FrameError> {
        let rows: Vec<&str> = text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.is_empty())
            .collect();
        if rows.len() != MATRIX_SIZE {
            return Err(FrameError::RowCount {
                name: name.to_string(),
                rows: rows.len(),
            });
        }
        let mut bitmap = [[false; MATRIX_SIZE]; MATRIX_SIZE];
        for (r, row) in rows.iter().enumerate() {
            let malformed = |reason: String| FrameError::Malformed {
                name: name.to_string(),
                line: r + 1,
                reason,
            };
            if row.chars().count() != MATRIX_SIZE {
                return Err(malformed(format!("expected {MATRIX_SIZE} columns")));
            }
            for (c, ch) in row.chars().enumerate() {
                bitmap[r][c] = match ch {
                    '#' => true,
                    '.' => false,
                    other => return Err(malformed(format!("unexpected character {other:?}"))),
                };
            }
        }
        Ok(ExpressionFrame { name, bitmap })
    }

    /// Text rendering in the asset format, newline-terminated rows.
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(MATRIX_SIZE * (MATRIX_SIZE + 1));
        for row in &self.bitmap {
            out.extend(row.iter().map(|&lit| if lit { '#' } else { '.' }));
            out.push('\n');
        }
        out
    }

    /// Row bytes as sent to a MAX7219-style driver, MSB = leftmost column.
    pub fn row_bytes(&self) -> [u8; MATRIX_SIZE] {
        let mut out = [0u8; MATRIX_SIZE];
        for (r, row) in self.bitmap.iter().enumerate() {
            out[r] = row.iter().fold(0u8, |acc, &lit| (acc << 1) | u8::from(lit));
        }
        out
    }
}

/// The registered faces, one per [`ExpressionName`].
#[derive(Debug, Clone)]
pub struct ExpressionSet {
    frames: BTreeMap<ExpressionName, ExpressionFrame>,
}

fn bundled(name: ExpressionName) -> &'static str {
    match name {
        ExpressionName::Happy => include_str!("../../assets/expressions/happy.txt"),
        ExpressionName::Sad => include_str!("../../assets/expressions/sad.txt"),
        ExpressionName::Surprised => include_str!("../../assets/expressions/surprised.txt"),
        ExpressionName::Neutral => include_str!("../../assets/expressions/neutral.txt"),
        ExpressionName::Curious => include_str!("../../assets/expressions/curious.txt"),
        ExpressionName::Encouraging => include_str!("../../assets/expressions/encouraging.txt"),
        ExpressionName::Sleepy => include_str!("../../assets/expressions/sleepy.txt"),
    }
}

impl ExpressionSet {
    /// Raw bundled asset text for a face.
    pub fn bundled_asset(name: ExpressionName) -> &'static str {
        bundled(name)
    }

    /// Load `<name>.txt` for every registered face from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, FrameError> {
        let mut sources = Vec::new();
        for name in ExpressionName::ALL {
            let path = dir.join(format!("{name}.txt"));
            let text = std::fs::read_to_string(&path).map_err(|source| FrameError::Io {
                path: path.display().to_string(),
                source,
            })?;
            sources.push((name, text));
        }
        Self::from_sources(sources.iter().map(|(n, t)| (*n, t.as_str())))
    }

    fn from_sources<'a>(
        sources: impl Iterator<Item = (ExpressionName, &'a str)>,
    ) -> Result<Self, FrameError> {
        let mut frames = BTreeMap::new();
        for (name, text) in sources {
            let frame = ExpressionFrame::parse(name, text)?;
            if let Some(twin) = frames
                .values()
                .find(|f: &&ExpressionFrame| f.bitmap == frame.bitmap)
            {
                return Err(FrameError::Duplicate(
                    twin.name.to_string(),
                    name.to_string(),
                ));
            }
            frames.insert(name, frame);
        }
        Ok(ExpressionSet { frames })
    }

    pub fn get(&self, name: ExpressionName) -> &ExpressionFrame {
        &self.frames[&name]
    }

    /// Look up by wire name; `None` for unregistered names.
    pub fn by_name(&self, name: &str) -> Option<&ExpressionFrame> {
        name.parse().ok().map(|n| self.get(n))
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ExpressionFrame> {
        self.frames.values()
    }
}

impl Default for ExpressionSet {
    fn default() -> Self {
        Self::from_sources(ExpressionName::ALL.into_iter().map(|n| (n, bundled(n))))
            .expect("bundled faces are valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_distinct_frames() {
        let set = ExpressionSet::default();
        assert_eq!(set.len(), 7);
        let frames: Vec<_> = set.iter().collect();
        for (i, a) in frames.iter().enumerate() {
            for b in &frames[i + 1..] {
                assert_ne!(a.bitmap, b.bitmap, "{} vs {}", a.name, b.name);
            }
        }
    }

    #[test]
    fn render_reproduces_asset_bytes() {
        let set = ExpressionSet::default();
        for name in ExpressionName::ALL {
            assert_eq!(set.get(name).render(), ExpressionSet::bundled_asset(name));
        }
    }

    #[test]
    fn unregistered_name_is_absent() {
        assert!(ExpressionSet::default().by_name("angry").is_none());
    }

    #[test]
    fn malformed_assets_are_rejected() {
        assert!(matches!(
            ExpressionFrame::parse(ExpressionName::Happy, "........\n"),
            Err(FrameError::RowCount { rows: 1, .. })
        ));
        let bad = "#######x\n".repeat(8);
        assert!(matches!(
            ExpressionFrame::parse(ExpressionName::Happy, &bad),
            Err(FrameError::Malformed { .. })
        ));
    }

    #[test]
    fn row_bytes_pack_msb_first() {
        let frame = ExpressionFrame::parse(ExpressionName::Happy, &"#.......\n".repeat(8)).unwrap();
        assert_eq!(frame.row_bytes(), [0x80; 8]);
    }
}
