//! Empirical semivariogram and exponential model fitting.

use serde::{Deserialize, Serialize};

use super::{GeostatError, TrainingPoint};

/// Exponential semivariogram `γ(h) = nugget + sill·(1 − exp(−h/range))`.
///
/// `sill` is the partial sill, so the plateau sits at `nugget + sill`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariogramModel {
    pub nugget: f64,
    pub sill: f64,
    pub range_km: f64,
}

impl VariogramModel {
    pub fn new(nugget: f64, sill: f64, range_km: f64) -> Result<Self, GeostatError> {
        if !(nugget >= 0.0 && sill >= 0.0 && range_km > 0.0)
            || !(nugget.is_finite() && sill.is_finite() && range_km.is_finite())
        {
            return Err(GeostatError::InvalidModel {
                nugget,
                sill,
                range_km,
            });
        }
        Ok(Self {
            nugget,
            sill,
            range_km,
        })
    }

    /// Model curve; `gamma(0) == nugget`.
    pub fn gamma(&self, h: f64) -> f64 {
        self.nugget + self.sill * (1.0 - (-h / self.range_km).exp())
    }

    /// Semivariance between two locations: zero for coincident points,
    /// `gamma(h)` otherwise.
    pub fn semivariance(&self, h: f64) -> f64 {
        if h == 0.0 {
            0.0
        } else {
            self.gamma(h)
        }
    }

    /// Covariance `C(h) = sill·exp(−h/range)` (plus the nugget at `h = 0`).
    pub fn covariance(&self, h: f64) -> f64 {
        let c = self.sill * (-h / self.range_km).exp();
        if h == 0.0 {
            c + self.nugget
        } else {
            c
        }
    }

    pub fn total_sill(&self) -> f64 {
        self.nugget + self.sill
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariogramBin {
    /// Bin midpoint distance, km.
    pub h_mid: f64,
    pub gamma: f64,
    pub pairs: usize,
}

/// Matheron estimator `γ̂(h) = Σ (v_i − v_j)² / (2·|N(h)|)` over
/// `n_bins` equal-width distance classes on `[0, max_dist_km]`.
/// Pairs farther than `max_dist_km` are ignored; empty bins are omitted.
pub fn empirical_variogram(
    points: &[TrainingPoint],
    n_bins: usize,
    max_dist_km: f64,
) -> Result<Vec<VariogramBin>, GeostatError> {
    if points.len() < 2 {
        return Err(GeostatError::TooFewPoints(points.len()));
    }
    if n_bins == 0 || !(max_dist_km > 0.0) {
        return Err(GeostatError::InvalidBinning { n_bins, max_dist_km });
    }
    let width = max_dist_km / n_bins as f64;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let d = p.distance_to(q.x, q.y);
            if d > max_dist_km {
                continue;
            }
            let b = ((d / width) as usize).min(n_bins - 1);
            sums[b] += (p.value - q.value).powi(2);
            counts[b] += 1;
        }
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .enumerate()
        .filter(|(_, (_, &c))| c > 0)
        .map(|(b, (&s, &c))| VariogramBin {
            h_mid: (b as f64 + 0.5) * width,
            gamma: s / (2.0 * c as f64),
            pairs: c,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariogramFit {
    pub model: VariogramModel,
    /// Weighted sum of squared residuals at the optimum.
    pub objective: f64,
    /// Every bin was zero; the model is the pure-nugget fallback.
    pub degenerate: bool,
}

const GRID: usize = 5;
const RANGE_SCAN: usize = 41;
const TOLERANCE: f64 = 1e-9;

struct Objective<'a> {
    bins: &'a [VariogramBin],
}

impl Objective<'_> {
    fn value(&self, nugget: f64, sill: f64, range: f64) -> f64 {
        self.bins
            .iter()
            .map(|b| {
                let model = nugget + sill * (1.0 - (-b.h_mid / range).exp());
                b.pairs as f64 * (b.gamma - model).powi(2)
            })
            .sum()
    }

    /// Optimal non-negative `(nugget, sill)` for a fixed range. The
    /// problem is a two-variable non-negative least squares, solved by
    /// checking the interior solution and each active-set face.
    fn linear_block(&self, range: f64) -> (f64, f64, f64) {
        let (mut sw, mut sf, mut sff, mut sg, mut sfg) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for b in self.bins {
            let w = b.pairs as f64;
            let f = 1.0 - (-b.h_mid / range).exp();
            sw += w;
            sf += w * f;
            sff += w * f * f;
            sg += w * b.gamma;
            sfg += w * f * b.gamma;
        }
        let mut candidates = vec![(0.0, 0.0)];
        let det = sw * sff - sf * sf;
        if det.abs() > 1e-300 {
            let a = (sg * sff - sf * sfg) / det;
            let s = (sw * sfg - sf * sg) / det;
            if a >= 0.0 && s >= 0.0 {
                candidates.push((a, s));
            }
        }
        if sw > 0.0 {
            candidates.push(((sg / sw).max(0.0), 0.0));
        }
        if sff > 0.0 {
            candidates.push((0.0, (sfg / sff).max(0.0)));
        }
        candidates
            .into_iter()
            .map(|(a, s)| (a, s, self.value(a, s, range)))
            .min_by(|x, y| x.2.total_cmp(&y.2))
            .expect("at least one candidate")
    }
}

/// Weighted least-squares fit of the exponential model (weights = pair
/// counts), with `nugget, sill >= 0` and `range ∈ [0.1, 10]·max_dist_km`.
///
/// A 5×5×5 grid over the box seeds the search. The range coordinate is
/// then refined by golden-section search on the profile objective, where
/// `(nugget, sill)` are solved exactly for each candidate range.
pub fn fit_exponential(
    bins: &[VariogramBin],
    max_dist_km: f64,
) -> Result<VariogramFit, GeostatError> {
    if bins.len() < 3 {
        return Err(GeostatError::TooFewBins(bins.len()));
    }
    if !(max_dist_km > 0.0) {
        return Err(GeostatError::InvalidBinning {
            n_bins: bins.len(),
            max_dist_km,
        });
    }
    if bins.iter().all(|b| b.gamma == 0.0) {
        return Ok(VariogramFit {
            model: VariogramModel::new(0.0, 0.0, max_dist_km)?,
            objective: 0.0,
            degenerate: true,
        });
    }
    let obj = Objective { bins };
    let (lo, hi) = ((0.1 * max_dist_km).ln(), (10.0 * max_dist_km).ln());
    let gamma_max = bins.iter().fold(0.0f64, |m, b| m.max(b.gamma));
    let lin = |k: usize, top: f64| top * k as f64 / (GRID - 1) as f64;

    let mut best = (f64::INFINITY, lo);
    for ir in 0..GRID {
        let log_r = lo + lin(ir, hi - lo);
        for in_ in 0..GRID {
            for is in 0..GRID {
                let v = obj.value(lin(in_, gamma_max), lin(is, gamma_max), log_r.exp());
                if v < best.0 {
                    best = (v, log_r);
                }
            }
        }
    }

    // profile scan to bracket the range, seeded by the grid optimum
    let step = (hi - lo) / (RANGE_SCAN - 1) as f64;
    let profile = |log_r: f64| obj.linear_block(log_r.exp()).2;
    let mut best_idx = ((best.1 - lo) / step).round() as usize;
    let mut best_val = profile(lo + best_idx as f64 * step);
    for k in 0..RANGE_SCAN {
        let v = profile(lo + k as f64 * step);
        if v < best_val {
            best_val = v;
            best_idx = k;
        }
    }
    let mut a = lo + best_idx.saturating_sub(1) as f64 * step;
    let mut b = lo + (best_idx + 1).min(RANGE_SCAN - 1) as f64 * step;

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (profile(c), profile(d));
    while b - a > TOLERANCE {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = profile(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = profile(d);
        }
    }
    let mut log_r = 0.5 * (a + b);
    let mut fit = obj.linear_block(log_r.exp());
    // the scan point itself may beat the refined interior (flat profiles)
    let scan_r = lo + best_idx as f64 * step;
    let scan_fit = obj.linear_block(scan_r.exp());
    if scan_fit.2 < fit.2 {
        log_r = scan_r;
        fit = scan_fit;
    }
    Ok(VariogramFit {
        model: VariogramModel::new(fit.0, fit.1, log_r.exp())?,
        objective: fit.2,
        degenerate: false,
    })
}
