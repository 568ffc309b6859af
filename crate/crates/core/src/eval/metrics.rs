use crate::error::{Error, Result};

/// Weighted mean absolute percentage error, `Σ|O − Õ| / Σ|O|`.
pub fn wmape(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    let mut acc = WmapeAccumulator::default();
    acc.add(reference, estimate)?;
    acc.value()
}

/// wMAPE pooled over many occupancy vectors.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WmapeAccumulator {
    pub abs_error: f64,
    pub abs_reference: f64,
    pub n_entries: usize,
    pub n_vectors: usize,
}

impl WmapeAccumulator {
    pub fn add(&mut self, reference: &[f64], estimate: &[f64]) -> Result<()> {
        if reference.len() != estimate.len() {
            return Err(Error::ShapeMismatch(reference.len(), estimate.len()));
        }
        for (o, e) in reference.iter().zip(estimate) {
            self.abs_error += (o - e).abs();
            self.abs_reference += o.abs();
        }
        self.n_entries += reference.len();
        self.n_vectors += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &WmapeAccumulator) {
        self.abs_error += other.abs_error;
        self.abs_reference += other.abs_reference;
        self.n_entries += other.n_entries;
        self.n_vectors += other.n_vectors;
    }

    pub fn value(&self) -> Result<f64> {
        if self.abs_reference > 0.0 {
            Ok(self.abs_error / self.abs_reference)
        } else {
            Err(Error::ZeroReference)
        }
    }
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; NaN when either series is constant or the
/// lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    if x.len() != y.len() || x.len() < 2 {
        return f64::NAN;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wmape_examples() {
        assert_eq!(wmape(&[4.0, 6.0], &[5.0, 6.0]).unwrap(), 0.1);
        assert_eq!(wmape(&[3.0, 0.0, 9.0], &[3.0, 0.0, 9.0]).unwrap(), 0.0);
        assert!((wmape(&[10.0, 20.0, 0.0], &[12.0, 18.0, 0.0]).unwrap() - 4.0 / 30.0).abs() < 1e-15);
        assert!(matches!(wmape(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroReference)));
        assert!(matches!(wmape(&[1.0], &[1.0, 0.0]), Err(Error::ShapeMismatch(1, 2))));
    }

    #[test]
    fn pooled_is_not_mean_of_ratios() {
        let mut acc = WmapeAccumulator::default();
        acc.add(&[1.0], &[2.0]).unwrap();
        acc.add(&[9.0], &[9.0]).unwrap();
        assert_eq!(acc.value().unwrap(), 0.1);
        assert_eq!((acc.n_entries, acc.n_vectors), (2, 2));
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 4.0, 9.0, 16.0]) - 1.0).abs() < 1e-12);
        // ties: ranks [1.5,1.5,3] vs [1,2,3]
        let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]);
        assert!((r - 0.866_025_403_784_438_6).abs() < 1e-12, "{r}");
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_nan());
    }
}
