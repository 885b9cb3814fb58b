use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorio::load_tensor;

/// Similarity used to rank prototypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    #[default]
    Cosine,
    Dot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub id: usize,
    pub label: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    /// Id of the prototype this query belongs to.
    pub label: usize,
    pub vector: Vec<f64>,
}

/// Prototype vectors (one per concept) and labeled query vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank {
    pub prototypes: Vec<Prototype>,
    pub queries: Vec<Query>,
}

#[derive(Deserialize)]
struct ProtoDoc {
    id: usize,
    label: String,
    path: String,
}

#[derive(Deserialize)]
struct QueryDoc {
    label: usize,
    path: String,
}

#[derive(Deserialize)]
struct BankDoc {
    prototypes: Vec<ProtoDoc>,
    queries: Vec<QueryDoc>,
}

impl FeatureBank {
    pub fn new(prototypes: Vec<Prototype>, queries: Vec<Query>) -> Result<Self> {
        let dim = prototypes
            .first()
            .map(|p| p.vector.len())
            .ok_or_else(|| Error::arg("feature bank has no prototypes"))?;
        let mut ids: Vec<usize> = prototypes.iter().map(|p| p.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::arg("duplicate prototype ids"));
        }
        let lens = prototypes
            .iter()
            .map(|p| p.vector.len())
            .chain(queries.iter().map(|q| q.vector.len()));
        if let Some(bad) = lens.into_iter().find(|&l| l != dim) {
            return Err(Error::arg(format!(
                "feature dimension {bad} differs from {dim}"
            )));
        }
        if let Some(q) = queries
            .iter()
            .find(|q| ids.binary_search(&q.label).is_err())
        {
            return Err(Error::arg(format!(
                "query label {} names no prototype",
                q.label
            )));
        }
        Ok(FeatureBank {
            prototypes,
            queries,
        })
    }

    /// Reads a JSON manifest whose vector paths are relative to it.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: BankDoc = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let vector = |p: &str| -> Result<Vec<f64>> { Ok(load_tensor(base.join(p))?.to_f64_vec()) };
        let prototypes = doc
            .prototypes
            .iter()
            .map(|p| {
                Ok(Prototype {
                    id: p.id,
                    label: p.label.clone(),
                    vector: vector(&p.path)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let queries = doc
            .queries
            .iter()
            .map(|q| {
                Ok(Query {
                    label: q.label,
                    vector: vector(&q.path)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FeatureBank::new(prototypes, queries)
    }
}

fn similarity(a: &[f64], b: &[f64], metric: Similarity) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    match metric {
        Similarity::Dot => dot,
        Similarity::Cosine => {
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                dot / (na * nb)
            }
        }
    }
}

/// Fraction of queries whose prototype ranks in the top `k`; ties go to the smaller id.
pub fn classify_topk(bank: &FeatureBank, k: usize, metric: Similarity) -> Result<f64> {
    if k == 0 || k > bank.prototypes.len() {
        return Err(Error::arg(format!(
            "k = {k} must be in 1..={}",
            bank.prototypes.len()
        )));
    }
    if bank.queries.is_empty() {
        return Err(Error::arg("feature bank has no queries"));
    }
    let hits = bank
        .queries
        .iter()
        .filter(|q| {
            let mut ranked: Vec<(f64, usize)> = bank
                .prototypes
                .iter()
                .map(|p| (similarity(&q.vector, &p.vector, metric), p.id))
                .collect();
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            ranked[..k].iter().any(|&(_, id)| id == q.label)
        })
        .count();
    Ok(hits as f64 / bank.queries.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis_bank(queries: Vec<Query>) -> FeatureBank {
        let prototypes = (0..3)
            .map(|i| Prototype {
                id: i,
                label: format!("c{i}"),
                vector: (0..3).map(|k| f64::from(k == i)).collect(),
            })
            .collect();
        FeatureBank::new(prototypes, queries).unwrap()
    }

    #[test]
    fn argmax_is_forced() {
        let bank = basis_bank(vec![Query {
            label: 0,
            vector: vec![0.9, 0.1, 0.0],
        }]);
        assert_eq!(classify_topk(&bank, 1, Similarity::Cosine).unwrap(), 1.0);
        assert_eq!(classify_topk(&bank, 1, Similarity::Dot).unwrap(), 1.0);
    }

    #[test]
    fn full_k_is_perfect() {
        let bank = basis_bank(vec![
            Query {
                label: 2,
                vector: vec![1.0, 0.0, 0.0],
            },
            Query {
                label: 1,
                vector: vec![0.0, 0.0, 1.0],
            },
        ]);
        assert_eq!(classify_topk(&bank, 1, Similarity::Cosine).unwrap(), 0.0);
        assert_eq!(classify_topk(&bank, 3, Similarity::Cosine).unwrap(), 1.0);
    }

    #[test]
    fn ties_prefer_smaller_id() {
        let bank = basis_bank(vec![Query {
            label: 1,
            vector: vec![1.0, 1.0, 0.0],
        }]);
        assert_eq!(classify_topk(&bank, 1, Similarity::Dot).unwrap(), 0.0);
        assert_eq!(classify_topk(&bank, 2, Similarity::Dot).unwrap(), 1.0);
    }

    #[test]
    fn bad_inputs_rejected() {
        let protos = vec![Prototype {
            id: 0,
            label: "a".into(),
            vector: vec![1.0, 0.0],
        }];
        assert!(FeatureBank::new(
            protos.clone(),
            vec![Query {
                label: 0,
                vector: vec![1.0]
            }]
        )
        .is_err());
        assert!(FeatureBank::new(
            protos.clone(),
            vec![Query {
                label: 4,
                vector: vec![1.0, 0.0]
            }]
        )
        .is_err());
        let bank = FeatureBank::new(
            protos,
            vec![Query {
                label: 0,
                vector: vec![1.0, 0.0],
            }],
        )
        .unwrap();
        assert!(classify_topk(&bank, 2, Similarity::Cosine).is_err());
    }
}
