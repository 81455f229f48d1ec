//! Observation rows and the channel layout that splits them into
//! Cartesian, quaternion and scalar blocks.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BlockKind {
    Cartesian { dim: usize },
    Quaternion,
    Scalar,
}

impl BlockKind {
    pub fn width(&self) -> usize {
        match self {
            BlockKind::Cartesian { dim } => *dim,
            BlockKind::Quaternion => 4,
            BlockKind::Scalar => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    #[serde(flatten)]
    pub kind: BlockKind,
}

/// Ordered, contiguous blocks covering every channel of an observation row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LayoutWire", into = "LayoutWire")]
pub struct ObservationLayout {
    blocks: Vec<Block>,
    offsets: Vec<usize>,
    width: usize,
}

#[derive(Serialize, Deserialize)]
struct LayoutWire {
    blocks: Vec<Block>,
}

impl TryFrom<LayoutWire> for ObservationLayout {
    type Error = Error;
    fn try_from(w: LayoutWire) -> Result<Self> {
        ObservationLayout::new(w.blocks)
    }
}

impl From<ObservationLayout> for LayoutWire {
    fn from(l: ObservationLayout) -> Self {
        LayoutWire { blocks: l.blocks }
    }
}

impl ObservationLayout {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::LayoutMismatch("layout has no blocks".into()));
        }
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut width = 0;
        for b in &blocks {
            if b.kind.width() == 0 {
                return Err(Error::LayoutMismatch(format!("block {} has zero width", b.name)));
            }
            if b.name.is_empty() || b.name.contains(',') {
                return Err(Error::LayoutMismatch(format!("invalid block name {:?}", b.name)));
            }
            offsets.push(width);
            width += b.kind.width();
        }
        for (i, b) in blocks.iter().enumerate() {
            if blocks[..i].iter().any(|o| o.name == b.name) {
                return Err(Error::LayoutMismatch(format!("duplicate block name {}", b.name)));
            }
        }
        Ok(Self {
            blocks,
            offsets,
            width,
        })
    }

    /// A layout with one Cartesian block named `name`.
    pub fn cartesian(name: &str, dim: usize) -> Self {
        Self::new(vec![Block {
            name: name.into(),
            kind: BlockKind::Cartesian { dim },
        }])
        .expect("single block layout")
    }

    pub fn quaternion(name: &str) -> Self {
        Self::new(vec![Block {
            name: name.into(),
            kind: BlockKind::Quaternion,
        }])
        .expect("single block layout")
    }

    /// Position (3), orientation quaternion and gripper scalar per arm,
    /// named `x{h}`, `q{h}`, `th{h}` for `h = 1..=arms`.
    pub fn pose_gripper(arms: usize) -> Self {
        let blocks = (1..=arms)
            .flat_map(|h| {
                [
                    Block {
                        name: format!("x{h}"),
                        kind: BlockKind::Cartesian { dim: 3 },
                    },
                    Block {
                        name: format!("q{h}"),
                        kind: BlockKind::Quaternion,
                    },
                    Block {
                        name: format!("th{h}"),
                        kind: BlockKind::Scalar,
                    },
                ]
            })
            .collect();
        Self::new(blocks).expect("pose+gripper layout")
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn range(&self, block: usize) -> Range<usize> {
        let start = self.offsets[block];
        start..start + self.blocks[block].kind.width()
    }

    /// Column names used in CSV headers: `name_0..name_{d-1}` for Cartesian
    /// blocks, `name_r, name_i, name_j, name_k` for quaternions, and the bare
    /// name for scalars.
    pub fn channel_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.width);
        for b in &self.blocks {
            match b.kind {
                BlockKind::Cartesian { dim } => {
                    names.extend((0..dim).map(|i| format!("{}_{i}", b.name)));
                }
                BlockKind::Quaternion => {
                    names.extend(["r", "i", "j", "k"].iter().map(|c| format!("{}_{c}", b.name)));
                }
                BlockKind::Scalar => names.push(b.name.clone()),
            }
        }
        names
    }

    /// True for channels belonging to a quaternion block.
    pub fn quaternion_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.width];
        for (i, b) in self.blocks.iter().enumerate() {
            if b.kind == BlockKind::Quaternion {
                for c in self.range(i) {
                    mask[c] = true;
                }
            }
        }
        mask
    }
}

/// Observations `y_0 … y_T`; `y_0` is conditioned on and never emitted.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSequence {
    layout: ObservationLayout,
    rows: Vec<Vec<f64>>,
}

impl ObservationSequence {
    pub fn new(layout: ObservationLayout, rows: Vec<Vec<f64>>) -> Result<Self> {
        for (t, r) in rows.iter().enumerate() {
            check_dim("observation row width", layout.width(), r.len())?;
            if let Some(c) = r.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("observation row {t}, channel {c}")));
            }
        }
        Ok(Self { layout, rows })
    }

    pub fn layout(&self) -> &ObservationLayout {
        &self.layout
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Vec<f64>> {
        self.rows
    }

    /// Number of emitted steps `T` (rows minus the conditioning row).
    pub fn steps(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }

    /// Flips quaternion signs so consecutive samples in every quaternion
    /// block have a non-negative inner product.
    pub fn sign_continuize(&mut self) {
        for (b, block) in self.layout.blocks.iter().enumerate() {
            if block.kind != BlockKind::Quaternion {
                continue;
            }
            let r = self.layout.range(b);
            for t in 1..self.rows.len() {
                let (head, tail) = self.rows.split_at_mut(t);
                let prev = &head[t - 1][r.clone()];
                let cur = &mut tail[0][r.clone()];
                let dot: f64 = prev.iter().zip(cur.iter()).map(|(a, b)| a * b).sum();
                if dot < 0.0 {
                    cur.iter_mut().for_each(|v| *v = -*v);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_gripper_is_sixteen_wide() {
        let l = ObservationLayout::pose_gripper(2);
        assert_eq!(l.width(), 16);
        assert_eq!(l.range(3), 8..11);
        assert_eq!(l.channel_names()[3..7], ["q1_r", "q1_i", "q1_j", "q1_k"]);
        assert_eq!(l.channel_names()[7], "th1");
    }

    #[test]
    fn layout_json_shape() {
        let l = ObservationLayout::pose_gripper(1);
        let s = serde_json::to_string(&l).unwrap();
        assert_eq!(
            s,
            r#"{"blocks":[{"name":"x1","kind":"cartesian","dim":3},{"name":"q1","kind":"quaternion"},{"name":"th1","kind":"scalar"}]}"#
        );
        let back: ObservationLayout = serde_json::from_str(&s).unwrap();
        assert_eq!(back, l);
    }

    #[test]
    fn rejects_duplicates_and_bad_rows() {
        let dup = vec![
            Block { name: "a".into(), kind: BlockKind::Scalar },
            Block { name: "a".into(), kind: BlockKind::Scalar },
        ];
        assert!(ObservationLayout::new(dup).is_err());
        let l = ObservationLayout::cartesian("y", 2);
        assert!(ObservationSequence::new(l.clone(), vec![vec![1.0]]).is_err());
        assert!(ObservationSequence::new(l, vec![vec![1.0, f64::NAN]]).is_err());
    }

    #[test]
    fn continuization_removes_flips() {
        let l = ObservationLayout::quaternion("q");
        let rows = vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![-0.99, -0.1, 0.0, 0.0],
            vec![0.98, 0.2, 0.0, 0.0],
        ];
        let mut s = ObservationSequence::new(l, rows).unwrap();
        s.sign_continuize();
        for w in s.rows().windows(2) {
            let dot: f64 = w[0].iter().zip(&w[1]).map(|(a, b)| a * b).sum();
            assert!(dot >= 0.0);
        }
    }
}
