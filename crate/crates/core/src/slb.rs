//! Screenline-based tour classes and the binary class-by-screenline mapping
//! matrix.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::demand::NodeTour;
use crate::error::{Error, Result};
use crate::network::{crossings, Route, ScreenlineId, ScreenlineSet};

/// Ordered screenline ids crossed by a tour, with multiplicity.
pub type Signature = Vec<ScreenlineId>;

#[derive(Debug, Clone, PartialEq)]
pub struct SlbClass {
    pub signature: Signature,
    /// Member tour ids, ascending.
    pub members: Vec<u64>,
}

impl SlbClass {
    pub fn count(&self) -> usize {
        self.members.len()
    }

    /// True when some screenline occurs more than once in the signature. The
    /// binary matrix counts such a tour once per screenline although a count
    /// station would see every pass.
    pub fn has_repeat(&self) -> bool {
        let mut s = self.signature.clone();
        s.sort_unstable();
        s.windows(2).any(|w| w[0] == w[1])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SlbExtraction {
    /// Classes in canonical (lexicographic signature) order.
    pub classes: Vec<SlbClass>,
    /// Tours crossing no screenline, ascending.
    pub unobservable: Vec<u64>,
}

impl SlbExtraction {
    pub fn counts(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.count() as f64).collect()
    }
}

/// Groups tours by their exact crossing signature. Tours crossing no
/// screenline are set aside as unobservable.
pub fn extract_classes(
    tours: &[NodeTour],
    routes: &BTreeMap<u64, Route>,
    screenlines: &ScreenlineSet,
) -> Result<SlbExtraction> {
    let signatures = tours
        .par_iter()
        .map(|t| {
            let route = routes.get(&t.id).ok_or(Error::MissingRoute(t.id))?;
            Ok((t.id, crossings(route, screenlines)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut by_signature: BTreeMap<Signature, Vec<u64>> = BTreeMap::new();
    let mut unobservable = Vec::new();
    for (id, sig) in signatures {
        if sig.is_empty() {
            unobservable.push(id);
        } else {
            by_signature.entry(sig).or_default().push(id);
        }
    }
    unobservable.sort_unstable();
    let classes = by_signature
        .into_iter()
        .map(|(signature, mut members)| {
            members.sort_unstable();
            SlbClass { signature, members }
        })
        .collect();
    Ok(SlbExtraction { classes, unobservable })
}

/// Sparse binary matrix with one row per class and one column per screenline.
/// Each row stores the sorted, distinct column positions holding a one.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingMatrix {
    rows: Vec<Vec<usize>>,
    n_cols: usize,
}

impl MappingMatrix {
    pub fn from_rows(mut rows: Vec<Vec<usize>>, n_cols: usize) -> Self {
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
            assert!(r.iter().all(|&c| c < n_cols), "column out of range");
        }
        Self { rows, n_cols }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, l: usize) -> &[usize] {
        &self.rows[l]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn get(&self, l: usize, k: usize) -> f64 {
        if self.rows[l].binary_search(&k).is_ok() {
            1.0
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows()).map(|l| (0..self.n_cols).map(|k| self.get(l, k)).collect()).collect()
    }

    /// `Aᵀ x`, one entry per screenline.
    pub fn transpose_mul(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_rows() {
            return Err(Error::DimensionMismatch { expected: self.n_rows(), actual: x.len() });
        }
        let mut out = vec![0.0; self.n_cols];
        for (row, &v) in self.rows.iter().zip(x) {
            for &k in row {
                out[k] += v;
            }
        }
        Ok(out)
    }

    /// `A z`, one entry per class.
    pub fn mul(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.n_cols {
            return Err(Error::DimensionMismatch { expected: self.n_cols, actual: z.len() });
        }
        Ok(self.rows.iter().map(|row| row.iter().map(|&k| z[k]).sum()).collect())
    }

    /// Dense `AᵀA`, row-major `n_cols × n_cols`.
    pub fn gram(&self) -> Vec<f64> {
        let k = self.n_cols;
        let mut g = vec![0.0; k * k];
        for row in &self.rows {
            for &a in row {
                for &b in row {
                    g[a * k + b] += 1.0;
                }
            }
        }
        g
    }

    /// Sub-matrix keeping only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self { rows: rows.iter().map(|&l| self.rows[l].clone()).collect(), n_cols: self.n_cols }
    }

    /// MatrixMarket coordinate text, 1-based indices.
    pub fn to_matrix_market(&self) -> String {
        let mut s = String::from("%%MatrixMarket matrix coordinate integer general\n");
        s.push_str(&format!("{} {} {}\n", self.n_rows(), self.n_cols, self.nnz()));
        for (l, row) in self.rows.iter().enumerate() {
            for &k in row {
                s.push_str(&format!("{} {} 1\n", l + 1, k + 1));
            }
        }
        s
    }
}

/// Binary incidence of classes against screenlines: a one wherever the
/// screenline appears at least once in the class signature.
pub fn assemble_matrix(classes: &[SlbClass], screenlines: &ScreenlineSet) -> Result<MappingMatrix> {
    let rows = classes
        .iter()
        .map(|c| {
            c.signature
                .iter()
                .map(|id| {
                    screenlines.position(*id).ok_or_else(|| Error::InvalidNetwork(format!("unknown screenline {id}")))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MappingMatrix::from_rows(rows, screenlines.len()))
}

/// Simulated screenline counts `Aᵀ x`.
pub fn simulated_counts(a: &MappingMatrix, x: &[f64]) -> Result<Vec<f64>> {
    a.transpose_mul(x)
}

/// Physical crossings per screenline column (every pass counted), used to
/// report how far the binary rule undercounts.
pub fn physical_crossings(classes: &[SlbClass], screenlines: &ScreenlineSet) -> Vec<f64> {
    let mut out = vec![0.0; screenlines.len()];
    for c in classes {
        for id in &c.signature {
            if let Some(k) = screenlines.position(*id) {
                out[k] += c.count() as f64;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matrix_counts_equal_x() {
        let a = MappingMatrix::from_rows(vec![vec![0], vec![1], vec![2]], 3);
        assert_eq!(simulated_counts(&a, &[4.0, 5.0, 6.0]).unwrap(), vec![4.0, 5.0, 6.0]);
        assert_eq!(simulated_counts(&a, &[0.0; 3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn dimension_mismatch() {
        let a = MappingMatrix::from_rows(vec![vec![0]], 2);
        assert!(matches!(simulated_counts(&a, &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
        assert!(a.mul(&[1.0]).is_err());
    }

    #[test]
    fn repeated_column_is_binary() {
        let a = MappingMatrix::from_rows(vec![vec![1, 1, 0]], 2);
        assert_eq!(a.row(0), &[0, 1]);
        assert_eq!(a.to_dense(), vec![vec![1.0, 1.0]]);
    }

    #[test]
    fn gram_and_products_agree_with_dense() {
        let a = MappingMatrix::from_rows(vec![vec![0, 1], vec![1, 3], vec![2, 3]], 4);
        let d = a.to_dense();
        let g = a.gram();
        for i in 0..4 {
            for j in 0..4 {
                let want: f64 = d.iter().map(|r| r[i] * r[j]).sum();
                assert_eq!(g[i * 4 + j], want);
            }
        }
        let z = [1.0, -2.0, 0.5, 3.0];
        let az = a.mul(&z).unwrap();
        assert_eq!(az, vec![-1.0, 1.0, 3.5]);
    }

    #[test]
    fn matrix_market_text() {
        let a = MappingMatrix::from_rows(vec![vec![0, 1], vec![1]], 2);
        assert_eq!(
            a.to_matrix_market(),
            "%%MatrixMarket matrix coordinate integer general\n2 2 3\n1 1 1\n1 2 1\n2 2 1\n"
        );
    }
}
