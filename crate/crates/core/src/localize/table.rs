use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensorio::{load_tensor, save_tensor, Tensor, TensorData};

/// One discovered concept.
#[derive(Debug, Clone, PartialEq)]
pub struct Concept {
    pub token_id: usize,
    /// Learned token embedding, absent until training.
    pub embedding: Option<Vec<f64>>,
    pub mask: Mask,
    /// Mean attention of the mask's rows; a distribution over the grid.
    pub f: Vec<f64>,
}

/// One edge merged during post-clustering, in the cluster numbering of its iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeEdge {
    pub iteration: usize,
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

/// Token lookup table: concepts in order of their first grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptTable {
    pub side: (usize, usize),
    pub concepts: Vec<Concept>,
    pub merges: Vec<MergeEdge>,
}

#[derive(Serialize, Deserialize)]
struct EntryDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f64>>,
    f_path: String,
    mask_path: String,
    token_id: usize,
}

#[derive(Serialize, Deserialize)]
struct TableDoc {
    concepts: Vec<EntryDoc>,
    height: usize,
    merges: Vec<MergeEdge>,
    width: usize,
}

impl ConceptTable {
    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn masks(&self) -> Vec<Mask> {
        self.concepts.iter().map(|c| c.mask.clone()).collect()
    }

    /// Writes `concepts.json` plus one uint8 mask and one f64 distribution per concept.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (h, w) = self.side;
        let mut entries = Vec::with_capacity(self.len());
        for c in &self.concepts {
            let mask_path = format!("mask_{}.rawt", c.token_id);
            let f_path = format!("f_{}.rawt", c.token_id);
            save_tensor(
                &Tensor::from_vec(vec![h, w], c.mask.to_bytes())?,
                dir.join(&mask_path),
            )?;
            save_tensor(
                &Tensor::from_vec(vec![h * w], c.f.clone())?,
                dir.join(&f_path),
            )?;
            entries.push(EntryDoc {
                embedding: c.embedding.clone(),
                f_path,
                mask_path,
                token_id: c.token_id,
            });
        }
        let doc = TableDoc {
            concepts: entries,
            height: h,
            merges: self.merges.clone(),
            width: w,
        };
        let path = dir.join("concepts.json");
        fs::write(&path, serde_json::to_string_pretty(&doc)?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Reads a table written by [`ConceptTable::save`]; file paths are relative to the JSON.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: TableDoc = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let (h, w) = (doc.height, doc.width);
        let mut concepts = Vec::with_capacity(doc.concepts.len());
        for e in doc.concepts {
            let mt = load_tensor(base.join(&e.mask_path))?;
            let bits = match (mt.shape(), mt.data()) {
                (s, TensorData::U8(b)) if s == [h, w] => b.iter().map(|&v| v != 0).collect(),
                _ => {
                    return Err(Error::Format(format!(
                        "{} is not a {h}x{w} uint8 mask",
                        e.mask_path
                    )))
                }
            };
            let ft = load_tensor(base.join(&e.f_path))?;
            if ft.len() != h * w {
                return Err(Error::Format(format!(
                    "{} has {} values, expected {}",
                    e.f_path,
                    ft.len(),
                    h * w
                )));
            }
            concepts.push(Concept {
                token_id: e.token_id,
                embedding: e.embedding,
                mask: Mask::from_bits(h, w, bits)?,
                f: ft.to_f64_vec(),
            });
        }
        let mut ids: Vec<usize> = concepts.iter().map(|c| c.token_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::Format("duplicate token ids".into()));
        }
        Ok(ConceptTable {
            side: (h, w),
            concepts,
            merges: doc.merges,
        })
    }
}
