//! Ordinary kriging in semivariogram form.

use serde::{Deserialize, Serialize};

use super::linalg::{Lu, Matrix};
use super::variogram::VariogramModel;
use super::{GeostatError, TrainingPoint};

/// Coordinates closer than this (km) are treated as one location.
const SAME_LOCATION_KM: f64 = 1e-9;
/// Merge radius for the single retry after a singular factorization.
const RETRY_MERGE_KM: f64 = 1e-6;
const PIVOT_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrigingPrediction {
    /// Prediction clamped to `[0, 1]`.
    pub value: f64,
    /// Unclamped weighted average.
    pub raw: f64,
    /// Ordinary-kriging variance `wᵀγ₀ + μ`.
    pub variance: f64,
}

/// Fitted ordinary-kriging predictor. The augmented system matrix is
/// factored once; each query only back-substitutes.
#[derive(Debug, Clone)]
pub struct KrigingModel {
    points: Vec<TrainingPoint>,
    variogram: VariogramModel,
    /// Variogram used to assemble the system; differs from `variogram`
    /// only when the fitted model is identically zero.
    system_variogram: VariogramModel,
    lu: Lu,
}

/// Averages the values of points whose coordinates coincide within `tol`.
/// Output order follows first appearance.
fn merge_locations(points: &[TrainingPoint], tol: f64) -> Vec<TrainingPoint> {
    let mut groups: Vec<(TrainingPoint, usize)> = Vec::new();
    for p in points {
        match groups
            .iter_mut()
            .find(|(q, _)| q.distance_to(p.x, p.y) <= tol)
        {
            Some((q, n)) => {
                q.value = (q.value * *n as f64 + p.value) / (*n as f64 + 1.0);
                *n += 1;
            }
            None => groups.push((*p, 1)),
        }
    }
    groups.into_iter().map(|(p, _)| p).collect()
}

fn assemble(points: &[TrainingPoint], v: &VariogramModel) -> Matrix {
    let n = points.len();
    Matrix::from_fn(n + 1, |i, j| match (i == n, j == n) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        (false, false) => v.semivariance(points[i].distance_to(points[j].x, points[j].y)),
    })
}

impl KrigingModel {
    pub fn new(points: &[TrainingPoint], variogram: VariogramModel) -> Result<Self, GeostatError> {
        if points.is_empty() {
            return Err(GeostatError::TooFewPoints(0));
        }
        // An all-zero variogram carries no spatial information; a unit
        // pure nugget gives the same equal-weight predictor and a
        // regular system.
        let system_variogram = if variogram.total_sill() > 0.0 {
            variogram
        } else {
            VariogramModel::new(1.0, 0.0, variogram.range_km)?
        };
        let mut merged = merge_locations(points, SAME_LOCATION_KM);
        let lu = match Lu::factor(&assemble(&merged, &system_variogram), PIVOT_TOL) {
            Ok(lu) => lu,
            Err(_) => {
                merged = merge_locations(&merged, RETRY_MERGE_KM);
                Lu::factor(&assemble(&merged, &system_variogram), PIVOT_TOL)
                    .map_err(|e| GeostatError::SingularSystem(e.to_string()))?
            }
        };
        Ok(Self {
            points: merged,
            variogram,
            system_variogram,
            lu,
        })
    }

    pub fn points(&self) -> &[TrainingPoint] {
        &self.points
    }

    pub fn variogram(&self) -> &VariogramModel {
        &self.variogram
    }

    fn rhs(&self, x: f64, y: f64) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .points
            .iter()
            .map(|p| self.system_variogram.semivariance(p.distance_to(x, y)))
            .collect();
        b.push(1.0);
        b
    }

    /// Kriging weights for a query and the Lagrange multiplier.
    pub fn weights(&self, x: f64, y: f64) -> (Vec<f64>, f64) {
        let mut sol = self.lu.solve(&self.rhs(x, y));
        let mu = sol.pop().expect("augmented system");
        (sol, mu)
    }

    pub fn predict(&self, x: f64, y: f64) -> KrigingPrediction {
        let gamma0 = self.rhs(x, y);
        let mut sol = self.lu.solve(&gamma0);
        let mu = sol.pop().expect("augmented system");
        let raw: f64 = sol.iter().zip(&self.points).map(|(w, p)| w * p.value).sum();
        let variance = sol.iter().zip(&gamma0).map(|(w, g)| w * g).sum::<f64>() + mu;
        KrigingPrediction {
            value: raw.clamp(0.0, 1.0),
            raw,
            variance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(nugget: f64) -> VariogramModel {
        VariogramModel::new(nugget, 0.04, 2.0).unwrap()
    }

    #[test]
    fn single_point_predicts_its_value_everywhere() {
        let k = KrigingModel::new(&[TrainingPoint::new(1.0, 2.0, 0.2)], model(0.01)).unwrap();
        for (x, y) in [(0.0, 0.0), (1.0, 2.0), (50.0, -30.0)] {
            let p = k.predict(x, y);
            assert!((p.value - 0.2).abs() < 1e-12);
            let (w, _) = k.weights(x, y);
            assert!((w[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_at_training_locations() {
        let pts = [
            TrainingPoint::new(0.0, 0.0, 0.1),
            TrainingPoint::new(1.0, 0.5, 0.3),
            TrainingPoint::new(-2.0, 1.0, 0.05),
            TrainingPoint::new(0.5, -1.5, 0.25),
        ];
        for nugget in [0.0, 0.02] {
            let k = KrigingModel::new(&pts, model(nugget)).unwrap();
            for p in &pts {
                assert!((k.predict(p.x, p.y).value - p.value).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn duplicate_locations_are_merged() {
        let pts = [
            TrainingPoint::new(0.0, 0.0, 0.1),
            TrainingPoint::new(0.0, 0.0, 0.3),
            TrainingPoint::new(3.0, 0.0, 0.5),
        ];
        let k = KrigingModel::new(&pts, model(0.0)).unwrap();
        assert_eq!(k.points().len(), 2);
        assert!((k.predict(0.0, 0.0).value - 0.2).abs() < 1e-10);
    }

    #[test]
    fn zero_variogram_predicts_mean() {
        let pts = [
            TrainingPoint::new(0.0, 0.0, 0.1),
            TrainingPoint::new(4.0, 0.0, 0.3),
        ];
        let k = KrigingModel::new(&pts, VariogramModel::new(0.0, 0.0, 5.0).unwrap()).unwrap();
        assert!((k.predict(1.0, 1.0).value - 0.2).abs() < 1e-12);
    }

    #[test]
    fn predictions_are_clamped() {
        let pts = [
            TrainingPoint::new(0.0, 0.0, 1.0),
            TrainingPoint::new(0.2, 0.0, 0.0),
        ];
        let k = KrigingModel::new(&pts, VariogramModel::new(0.0, 1.0, 50.0).unwrap()).unwrap();
        for x in [-3.0, -0.5, 0.1, 0.3, 2.0] {
            let p = k.predict(x, 0.7);
            assert_eq!(p.value, p.raw.clamp(0.0, 1.0));
        }
    }
}
