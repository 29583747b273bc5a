//! Brute-force cosine ranking of all A×B descriptor pairs.

use std::cmp::Ordering;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DescriptorSet;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

/// `d1·d2 / (‖d1‖‖d2‖)` with `f64` accumulation.
pub fn cosine_similarity(d1: &[f32], d2: &[f32]) -> Result<f64> {
    if d1.len() != d2.len() {
        return Err(Error::Config(format!(
            "descriptor dimensions differ: {} vs {}",
            d1.len(),
            d2.len()
        )));
    }
    let (n1, n2) = (dot(d1, d1), dot(d2, d2));
    if !(n1 > 0.0 && n2 > 0.0) || !n1.is_finite() || !n2.is_finite() {
        return Err(Error::DegenerateDescriptor(
            "cosine similarity of a zero-norm or non-finite vector".into(),
        ));
    }
    // sqrt(n1·n2) is exact for identical vectors, giving exactly 1.
    Ok((dot(d1, d2) / (n1 * n2).sqrt()).clamp(-1.0, 1.0))
}

/// Dot product of `f32` slices accumulated in `f64` over eight lanes.
fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] as f64 * y[l] as f64;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += *x as f64 * *y as f64;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

fn inverse_norms(set: &DescriptorSet) -> Result<Vec<f64>> {
    (0..set.len())
        .map(|i| {
            let n = dot(set.row(i), set.row(i)).sqrt();
            if n > 0.0 && n.is_finite() {
                Ok(1.0 / n)
            } else {
                Err(Error::DegenerateDescriptor(format!(
                    "row {} ({}) has zero norm",
                    i,
                    set.image_ids()[i]
                )))
            }
        })
        .collect()
}

/// Row-major `N_A × N_B` matrix of cosine similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub n_a: usize,
    pub n_b: usize,
    pub values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_b + j]
    }
}

pub fn similarity_matrix(da: &DescriptorSet, db: &DescriptorSet) -> Result<SimilarityMatrix> {
    if da.dim() != db.dim() {
        return Err(Error::Config(format!(
            "descriptor dimensions differ: A has {}, B has {}",
            da.dim(),
            db.dim()
        )));
    }
    let inv_a = inverse_norms(da)?;
    let inv_b = inverse_norms(db)?;
    let n_b = db.len();
    let mut values = vec![0.0; da.len() * n_b];
    if n_b > 0 {
        values
            .par_chunks_mut(n_b)
            .enumerate()
            .for_each(|(i, row)| {
                let ra = da.row(i);
                for (j, v) in row.iter_mut().enumerate() {
                    *v = dot(ra, db.row(j)) * inv_a[i] * inv_b[j];
                }
            });
    }
    Ok(SimilarityMatrix {
        n_a: da.len(),
        n_b,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedPair {
    pub index_a: usize,
    pub index_b: usize,
    pub similarity: f64,
}

/// Descending similarity, then ascending `(index_a, index_b)`.
pub fn rank_order(x: &RankedPair, y: &RankedPair) -> Ordering {
    y.similarity
        .partial_cmp(&x.similarity)
        .expect("finite similarities")
        .then(x.index_a.cmp(&y.index_a))
        .then(x.index_b.cmp(&y.index_b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRanking {
    pub scene_id: String,
    pub method_tag: String,
    pub entries: Vec<RankedPair>,
    pub elapsed_seconds: f64,
}

impl PairRanking {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// JSON lines of `(rank, image_id_a, image_id_b, similarity)`.
    pub fn to_jsonl(&self, ids_a: &[String], ids_b: &[String]) -> Result<String> {
        #[derive(Serialize)]
        struct Line<'a> {
            rank: usize,
            image_id_a: &'a str,
            image_id_b: &'a str,
            similarity: f64,
        }
        let mut out = String::new();
        for (r, e) in self.entries.iter().enumerate() {
            let (Some(a), Some(b)) = (ids_a.get(e.index_a), ids_b.get(e.index_b)) else {
                return Err(Error::Integrity(format!(
                    "ranking index ({}, {}) outside {}x{} id lists",
                    e.index_a,
                    e.index_b,
                    ids_a.len(),
                    ids_b.len()
                )));
            };
            out.push_str(&serde_json::to_string(&Line {
                rank: r + 1,
                image_id_a: a,
                image_id_b: b,
                similarity: e.similarity,
            })?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: &Path, ids_a: &[String], ids_b: &[String]) -> Result<()> {
        write_atomic(path, self.to_jsonl(ids_a, ids_b)?.as_bytes())
    }
}

/// The `k` most similar A×B pairs, timed over matrix computation and selection.
pub fn top_k_pairs(
    scene_id: &str,
    da: &DescriptorSet,
    db: &DescriptorSet,
    k: usize,
) -> Result<PairRanking> {
    let total = da.len() * db.len();
    if k == 0 || k > total {
        return Err(Error::Config(format!(
            "k = {k} outside 1..={total} for a {}x{} grid",
            da.len(),
            db.len()
        )));
    }
    if da.method_tag() != db.method_tag() {
        return Err(Error::Config(format!(
            "descriptor sets come from different methods: {} vs {}",
            da.method_tag(),
            db.method_tag()
        )));
    }
    let start = Instant::now();
    let sim = similarity_matrix(da, db)?;
    let mut all: Vec<RankedPair> = sim
        .values
        .iter()
        .enumerate()
        .map(|(idx, s)| RankedPair {
            index_a: idx / sim.n_b,
            index_b: idx % sim.n_b,
            similarity: *s,
        })
        .collect();
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, rank_order);
        all.truncate(k);
    }
    all.sort_unstable_by(rank_order);
    let elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(PairRanking {
        scene_id: scene_id.to_string(),
        method_tag: da.method_tag().to_string(),
        entries: all,
        elapsed_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Subset;
    use proptest::prelude::*;

    fn set(subset: Subset, rows: &[&[f32]]) -> DescriptorSet {
        let dim = rows[0].len();
        let ids = (0..rows.len()).map(|i| format!("{subset}{i}")).collect();
        DescriptorSet::new(subset, "m", ids, dim, rows.concat()).unwrap()
    }

    #[test]
    fn cosine_cases() {
        assert_eq!(cosine_similarity(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::DegenerateDescriptor(_))
        ));
        assert!(matches!(cosine_similarity(&[1.0], &[1.0, 0.0]), Err(Error::Config(_))));
    }

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f32> = (0..19).map(|i| i as f32).collect();
        let expect: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum();
        assert_eq!(dot(&a, &a), expect);
    }

    #[test]
    fn matrix_cases() {
        let one = set(Subset::A, &[&[1.0, 0.0]]);
        assert_eq!(similarity_matrix(&one, &one).unwrap().values, vec![1.0]);
        let basis = set(Subset::A, &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(
            similarity_matrix(&basis, &basis).unwrap().values,
            vec![1.0, 0.0, 0.0, 1.0]
        );
        let three = set(Subset::B, &[&[1.0, 0.0, 0.0]]);
        assert!(matches!(similarity_matrix(&one, &three), Err(Error::Config(_))));
    }

    #[test]
    fn top_k_dominance_and_range() {
        let a = set(Subset::A, &[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = set(Subset::B, &[&[1.0, 0.0]]);
        let r = top_k_pairs("s", &a, &b, 1).unwrap();
        assert_eq!(
            r.entries,
            vec![RankedPair { index_a: 0, index_b: 0, similarity: 1.0 }]
        );
        assert!(top_k_pairs("s", &a, &b, 0).is_err());
        assert!(top_k_pairs("s", &a, &b, 3).is_err());
        let full = top_k_pairs("s", &a, &b, 2).unwrap();
        assert_eq!(full.entries[1].index_a, 1);
        assert!(full.elapsed_seconds >= 0.0);
    }

    #[test]
    fn ties_break_by_indices() {
        let a = set(Subset::A, &[&[1.0, 0.0], &[1.0, 0.0]]);
        let b = set(Subset::B, &[&[2.0, 0.0], &[1.0, 0.0]]);
        let r = top_k_pairs("s", &a, &b, 4).unwrap();
        let order: Vec<_> = r.entries.iter().map(|e| (e.index_a, e.index_b)).collect();
        assert_eq!(order, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn jsonl_dump() {
        let a = set(Subset::A, &[&[1.0, 0.0]]);
        let b = set(Subset::B, &[&[1.0, 1.0]]);
        let r = top_k_pairs("s", &a, &b, 1).unwrap();
        let text = r.to_jsonl(a.image_ids(), b.image_ids()).unwrap();
        assert!(text.starts_with("{\"rank\":1,\"image_id_a\":\"A0\",\"image_id_b\":\"B0\""));
        assert!(r.to_jsonl(&[], b.image_ids()).is_err());
    }

    fn grid(max: usize) -> impl Strategy<Value = (DescriptorSet, DescriptorSet)> {
        (1..max, 1..max, 1usize..6).prop_flat_map(|(na, nb, d)| {
            (
                proptest::collection::vec(-3i8..4, na * d),
                proptest::collection::vec(-3i8..4, nb * d),
            )
                .prop_map(move |(va, vb)| {
                    let fix = |v: Vec<i8>, n: usize, s: Subset| {
                        let mut data: Vec<f32> = v.into_iter().map(f32::from).collect();
                        for row in data.chunks_mut(d) {
                            if row.iter().all(|x| *x == 0.0) {
                                row[0] = 1.0;
                            }
                        }
                        let ids = (0..n).map(|i| format!("{s}{i}")).collect();
                        DescriptorSet::new(s, "m", ids, d, data).unwrap()
                    };
                    (fix(va, na, Subset::A), fix(vb, nb, Subset::B))
                })
        })
    }

    proptest! {
        #[test]
        fn prefix_property((a, b) in grid(7), k1 in 1usize..50, k2 in 1usize..50) {
            let total = a.len() * b.len();
            let (lo, hi) = (k1.min(k2).min(total), k1.max(k2).min(total));
            let short = top_k_pairs("s", &a, &b, lo).unwrap();
            let long = top_k_pairs("s", &a, &b, hi).unwrap();
            prop_assert_eq!(&short.entries[..], &long.entries[..lo]);
        }

        #[test]
        fn power_of_two_scaling_keeps_order((a, b) in grid(6), e in -20i32..20) {
            let s = 2f32.powi(e);
            let scaled = DescriptorSet::new(
                Subset::A, "m", a.image_ids().to_vec(), a.dim(),
                a.data().iter().map(|x| x * s).collect(),
            ).unwrap();
            let k = a.len() * b.len();
            prop_assert_eq!(
                top_k_pairs("s", &a, &b, k).unwrap().entries,
                top_k_pairs("s", &scaled, &b, k).unwrap().entries
            );
        }

        #[test]
        fn scaling_keeps_order(
            va in proptest::collection::vec(0.1f32..1.0, 24),
            vb in proptest::collection::vec(-1.0f32..1.0, 30),
            s in 0.01f32..100.0,
        ) {
            let ids = |n: usize| (0..n).map(|i| i.to_string()).collect::<Vec<_>>();
            let a = DescriptorSet::new(Subset::A, "m", ids(4), 6, va.clone()).unwrap();
            let b = DescriptorSet::new(Subset::B, "m", ids(5), 6, vb).unwrap();
            let scaled = DescriptorSet::new(
                Subset::A, "m", ids(4), 6, va.iter().map(|x| x * s).collect(),
            ).unwrap();
            let order = |r: PairRanking| r.entries.iter().map(|e| (e.index_a, e.index_b)).collect::<Vec<_>>();
            prop_assert_eq!(
                order(top_k_pairs("s", &a, &b, 20).unwrap()),
                order(top_k_pairs("s", &scaled, &b, 20).unwrap())
            );
        }
    }
}
