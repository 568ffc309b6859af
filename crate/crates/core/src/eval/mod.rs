//! Evaluation protocols: random hold-out of counted courses, leave one line
//! out, and coverage sweeps, scored with wMAPE against counts.

pub mod baseline;
pub mod metrics;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::fraud::{mean_fraud_rates, observe_courses, CourseObservation, FraudRateTable};
use crate::geostat::{KrigingModel, TrainingPoint, VariogramModel};
use crate::ingest::{write_csv, NetworkDataset};
use crate::model::{CourseId, LineId, StationId};
use crate::od::{TicketingProfile, TripSet};
use crate::unify::{fit_rate_field, training_points, unify_course, Geometry, RateResolver};

pub use baseline::{ContextKey, ContextPrediction, ContextualAverage, FallbackLevel};
pub use metrics::{spearman, wmape, WmapeAccumulator};

pub const EVAL_REPORT_FILE: &str = "eval_report.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Mean rates of the course's own line, kriging for missing entries.
    MeanRate,
    /// Kriged rates fitted on other lines only.
    Kriged,
    ContextualAverage,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::MeanRate, Method::Kriged, Method::ContextualAverage];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::MeanRate => "mean_rate",
            Method::Kriged => "kriged",
            Method::ContextualAverage => "contextual_average",
        }
    }
}

/// One line of `eval_report.csv`. `scope` is `all` or `line:<id>`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub protocol: &'static str,
    pub method: Method,
    pub scope: String,
    pub wmape: f64,
    pub n_entries: usize,
    pub n_courses: usize,
}

impl EvalRow {
    fn new(protocol: &'static str, method: Method, scope: String, acc: &WmapeAccumulator) -> Option<Self> {
        Some(Self {
            protocol,
            method,
            scope,
            wmape: acc.value().ok()?,
            n_entries: acc.n_entries,
            n_courses: acc.n_vectors,
        })
    }
}

fn line_scope(line: &LineId) -> String {
    format!("line:{line}")
}

/// Per-course quantities shared by all protocols.
#[derive(Debug, Clone)]
pub struct EvalContext<'a> {
    pub ds: &'a NetworkDataset,
    pub cfg: &'a Config,
    pub ticketing: BTreeMap<CourseId, TicketingProfile>,
    pub observations: BTreeMap<CourseId, CourseObservation>,
    /// Counted occupancy of every covered course.
    pub counted: BTreeMap<CourseId, Vec<f64>>,
    pub geometry: Geometry,
}

impl<'a> EvalContext<'a> {
    pub fn new(ds: &'a NetworkDataset, cfg: &'a Config) -> Result<Self> {
        let trips = TripSet::reconstruct(ds, cfg.walk_radius_m, cfg.rng_seed);
        let ticketing = trips.ticketing_profiles(ds)?;
        Self::with_ticketing(ds, cfg, ticketing)
    }

    pub fn with_ticketing(
        ds: &'a NetworkDataset,
        cfg: &'a Config,
        ticketing: BTreeMap<CourseId, TicketingProfile>,
    ) -> Result<Self> {
        if ds.apc_coverage.is_empty() {
            return Err(Error::NoCoveredCourses);
        }
        let observations: BTreeMap<CourseId, CourseObservation> =
            observe_courses(ds, &ticketing, &ds.apc_coverage)?
                .into_iter()
                .map(|o| (o.course_id.clone(), o))
                .collect();
        let counted = observations
            .iter()
            .map(|(id, o)| (id.clone(), o.apc_occupancy.iter().map(|&v| f64::from(v)).collect()))
            .collect();
        Ok(Self {
            ds,
            cfg,
            ticketing,
            observations,
            counted,
            geometry: Geometry::of(ds, cfg),
        })
    }

    pub fn covered_lines(&self) -> BTreeSet<LineId> {
        self.observations.values().map(|o| o.line_id.clone()).collect()
    }

    pub fn fit_table<'b>(
        &self,
        training: impl IntoIterator<Item = &'b CourseObservation>,
    ) -> Result<FraudRateTable> {
        Ok(mean_fraud_rates(training, self.cfg.min_courses, self.cfg.direction_specific_rates)?.0)
    }

    /// Kriged rates at `stations`, trained on the station means of `table`.
    /// A given variogram replaces the fitted one.
    pub fn kriged_rates<'b>(
        &self,
        table: &FraudRateTable,
        variogram: Option<VariogramModel>,
        stations: impl IntoIterator<Item = &'b StationId>,
    ) -> Result<BTreeMap<StationId, f64>> {
        let kriging = match variogram {
            None => fit_rate_field(self.ds, table, &self.geometry, self.cfg)?.kriging,
            Some(v) => {
                let pts: Vec<TrainingPoint> =
                    training_points(self.ds, table, &self.geometry.projection)
                        .into_iter()
                        .map(|(_, p)| p)
                        .collect();
                if pts.is_empty() {
                    return Err(Error::NoCoveredCourses);
                }
                KrigingModel::new(&pts, v)?
            }
        };
        stations
            .into_iter()
            .map(|sid| {
                let s = self
                    .ds
                    .stations
                    .get(sid)
                    .ok_or_else(|| Error::UnknownStation(sid.to_string()))?;
                let (x, y) = self.geometry.projection.project(s.lon, s.lat);
                Ok((sid.clone(), kriging.predict(x, y).value))
            })
            .collect()
    }

    /// Unified total occupancy of a course under `resolver`.
    pub fn unified_total(&self, id: &CourseId, resolver: &RateResolver<'_>) -> Result<Vec<f64>> {
        let course = self
            .ds
            .courses
            .get(id)
            .ok_or_else(|| Error::MissingTicketing(id.clone()))?;
        let t = self
            .ticketing
            .get(id)
            .ok_or_else(|| Error::MissingTicketing(id.clone()))?;
        Ok(unify_course(course, t, resolver)?.total)
    }

    fn stations_of<'b>(&'b self, ids: impl IntoIterator<Item = &'b CourseId>) -> BTreeSet<&'b StationId> {
        ids.into_iter()
            .filter_map(|id| self.observations.get(id))
            .flat_map(|o| o.stations.iter())
            .collect()
    }

    fn resolvable(&self, table: &FraudRateTable, id: &CourseId) -> bool {
        let o = &self.observations[id];
        let n = o.stations.len();
        o.stations[..n - 1]
            .iter()
            .all(|s| table.lookup(s, &o.line_id, o.direction).is_some())
    }
}

#[derive(Debug, Clone)]
pub struct HoldoutReport {
    pub held_out: Vec<CourseId>,
    /// Mean-rate table fitted on the retained courses.
    pub training_table: FraudRateTable,
    /// `all` rows cover the held-out courses every method could predict.
    pub rows: Vec<EvalRow>,
    pub skipped: Vec<(Method, LineId)>,
    /// Held-out courses the contextual average could not predict.
    pub unpredictable: usize,
}

impl HoldoutReport {
    pub fn row(&self, method: Method, scope: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.method == method && r.scope == scope)
    }
}

/// Withholds the counts of a seeded random share of covered courses,
/// refits on the rest and scores each method on the withheld courses.
pub fn holdout_30(ctx: &EvalContext<'_>, seed: u64) -> Result<HoldoutReport> {
    const PROTOCOL: &str = "holdout30";
    let mut ids: Vec<&CourseId> = ctx.observations.keys().collect();
    if ids.is_empty() {
        return Err(Error::NoCoveredCourses);
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len();
    let n_hold = ((ctx.cfg.holdout_fraction * n as f64).round() as usize).clamp(1, n);
    let held: BTreeSet<&CourseId> = ids[..n_hold].iter().copied().collect();
    let training: Vec<&CourseObservation> = ctx
        .observations
        .values()
        .filter(|o| !held.contains(&o.course_id))
        .collect();
    let train_lines: BTreeSet<&LineId> = training.iter().map(|o| &o.line_id).collect();
    let mut held_by_line: BTreeMap<&LineId, Vec<&CourseId>> = BTreeMap::new();
    for id in &held {
        held_by_line.entry(&ctx.observations[*id].line_id).or_default().push(id);
    }

    let mut preds: BTreeMap<Method, BTreeMap<&CourseId, Vec<f64>>> = BTreeMap::new();
    let mut skipped = Vec::new();
    let mut unpredictable = 0;
    let training_table = if training.is_empty() {
        FraudRateTable {
            entries: BTreeMap::new(),
            direction_specific: ctx.cfg.direction_specific_rates,
        }
    } else {
        ctx.fit_table(training.iter().copied())?
    };

    if training.is_empty() {
        for line in held_by_line.keys() {
            for m in Method::ALL {
                skipped.push((m, (*line).clone()));
            }
        }
    } else {
        let predictable: Vec<&CourseId> = held_by_line
            .iter()
            .filter(|(l, _)| train_lines.contains(*l))
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        let kriged = ctx.kriged_rates(&training_table, None, ctx.stations_of(predictable.iter().copied()))?;
        let resolver = RateResolver::new(&training_table, kriged);
        let out = preds.entry(Method::MeanRate).or_default();
        for (line, courses) in &held_by_line {
            if !train_lines.contains(line) {
                skipped.push((Method::MeanRate, (*line).clone()));
                continue;
            }
            for id in courses {
                out.insert(id, ctx.unified_total(id, &resolver)?);
            }
        }

        for (line, courses) in &held_by_line {
            let others: Vec<&CourseObservation> =
                training.iter().filter(|o| &o.line_id != *line).copied().collect();
            if others.is_empty() {
                skipped.push((Method::Kriged, (*line).clone()));
                continue;
            }
            let table = ctx.fit_table(others)?;
            let kriged = ctx.kriged_rates(&table, None, ctx.stations_of(courses.iter().copied()))?;
            let resolver = RateResolver::kriged_only(kriged);
            let out = preds.entry(Method::Kriged).or_default();
            for id in courses {
                out.insert(id, ctx.unified_total(id, &resolver)?);
            }
        }

        let model = ContextualAverage::fit(training.iter().map(|o| {
            (
                &ctx.ds.courses[&o.course_id].key,
                &o.stations[..],
                &ctx.counted[&o.course_id][..],
            )
        }));
        let out = preds.entry(Method::ContextualAverage).or_default();
        for (line, courses) in &held_by_line {
            let mut any = false;
            for id in courses {
                let o = &ctx.observations[*id];
                match model.predict(&ctx.ds.courses[*id].key, &o.stations) {
                    ContextPrediction::Predicted { occupancy, .. } => {
                        out.insert(id, occupancy);
                        any = true;
                    }
                    ContextPrediction::Unpredictable => unpredictable += 1,
                }
            }
            if !any {
                skipped.push((Method::ContextualAverage, (*line).clone()));
            }
        }
    }

    let empty = BTreeMap::new();
    let of = |m: Method| preds.get(&m).unwrap_or(&empty);
    let mut rows = Vec::new();
    let common: Vec<&CourseId> = held
        .iter()
        .copied()
        .filter(|id| Method::ALL.iter().all(|&m| of(m).contains_key(id)))
        .collect();
    for m in Method::ALL {
        let mut acc = WmapeAccumulator::default();
        for id in &common {
            acc.add(&ctx.counted[*id], &of(m)[id])?;
        }
        rows.extend(EvalRow::new(PROTOCOL, m, "all".into(), &acc));
    }
    for m in Method::ALL {
        for (line, courses) in &held_by_line {
            let mut acc = WmapeAccumulator::default();
            for id in courses {
                if let Some(p) = of(m).get(id) {
                    acc.add(&ctx.counted[*id], p)?;
                }
            }
            rows.extend(EvalRow::new(PROTOCOL, m, line_scope(line), &acc));
        }
    }
    Ok(HoldoutReport {
        held_out: held.into_iter().cloned().collect(),
        training_table,
        rows,
        skipped,
        unpredictable,
    })
}

/// For each covered line, fits kriging on the other lines' station rates
/// and scores the line's counted courses unified with kriged rates only.
/// The last row pools every line under scope `all`.
pub fn leave_line_out(
    ctx: &EvalContext<'_>,
    variogram: Option<VariogramModel>,
) -> Result<Vec<EvalRow>> {
    const PROTOCOL: &str = "leavelineout";
    let lines: Vec<LineId> = ctx.covered_lines().into_iter().collect();
    if lines.len() < 2 {
        return Err(Error::TooFewLines(lines.len()));
    }
    let per_line = crate::par::map(&lines, |line| -> Result<WmapeAccumulator> {
        let (mine, others): (Vec<&CourseObservation>, Vec<&CourseObservation>) =
            ctx.observations.values().partition(|o| &o.line_id == line);
        let table = ctx.fit_table(others)?;
        let kriged = ctx.kriged_rates(
            &table,
            variogram,
            ctx.stations_of(mine.iter().map(|o| &o.course_id)),
        )?;
        let resolver = RateResolver::kriged_only(kriged);
        let mut acc = WmapeAccumulator::default();
        for o in mine {
            acc.add(&ctx.counted[&o.course_id], &ctx.unified_total(&o.course_id, &resolver)?)?;
        }
        Ok(acc)
    });
    let mut rows = Vec::with_capacity(lines.len() + 1);
    let mut pooled = WmapeAccumulator::default();
    for (line, acc) in lines.iter().zip(per_line) {
        let acc = acc?;
        pooled.merge(&acc);
        rows.extend(EvalRow::new(PROTOCOL, Method::Kriged, line_scope(line), &acc));
    }
    rows.extend(EvalRow::new(PROTOCOL, Method::Kriged, "all".into(), &pooled));
    Ok(rows)
}

/// One point of a coverage sweep, averaged over repeated random removal
/// orders.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub line_id: LineId,
    /// Counted courses removed from training (and scored).
    pub removed: usize,
    /// Counted courses still in training over all courses of the line.
    pub coverage: f64,
    /// Reconstruction error over the removed courses.
    pub wmape: f64,
    /// Error over every counted course of the line, each unified with the
    /// rates fitted on the remaining courses.
    pub wmape_all_courses: f64,
    pub repeats: usize,
}

/// Removes the counts of one course at a time (`step` at a time) in a
/// seeded random order and refits the line's mean rates on the remaining
/// counted courses, down to a single remaining course. After each removal
/// the removed courses are reconstructed from their validations with the
/// refitted rates and scored against their counts; the same score over
/// every counted course of the line is reported alongside. Each repeat
/// draws a new order; each point pools the errors of all repeats.
pub fn coverage_sweep(
    ctx: &EvalContext<'_>,
    line: &LineId,
    step: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    let total = ctx.ds.courses.values().filter(|c| &c.key.line_id == line).count();
    let covered: Vec<&CourseObservation> =
        ctx.observations.values().filter(|o| &o.line_id == line).collect();
    let n = covered.len();
    if total == 0 || n < 2 || (n as f64) < ctx.cfg.sweep_min_coverage * total as f64 {
        return Err(Error::NotCoveredEnough {
            line: line.clone(),
            covered: n,
            total,
        });
    }
    let removed: Vec<usize> = (step.max(1)..n).step_by(step.max(1)).collect();
    let line_stations = ctx.stations_of(covered.iter().map(|o| &o.course_id));
    let runs: Vec<u64> = (0..repeats.max(1) as u64).collect();
    let results = crate::par::map(&runs, |&r| -> Result<Vec<(WmapeAccumulator, WmapeAccumulator)>> {
        let mut order = covered.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(r)));
        removed
            .iter()
            .map(|&k| {
                let (held, kept) = order.split_at(k);
                let table = ctx.fit_table(kept.iter().copied())?;
                let kriged = if held.iter().all(|o| ctx.resolvable(&table, &o.course_id)) {
                    BTreeMap::new()
                } else {
                    ctx.kriged_rates(&table, None, line_stations.iter().copied())?
                };
                let resolver = RateResolver::new(&table, kriged);
                let (mut all, mut out) = (WmapeAccumulator::default(), WmapeAccumulator::default());
                for (i, o) in order.iter().enumerate() {
                    let counted = &ctx.counted[&o.course_id];
                    let est = ctx.unified_total(&o.course_id, &resolver)?;
                    all.add(counted, &est)?;
                    if i < k {
                        out.add(counted, &est)?;
                    }
                }
                Ok((all, out))
            })
            .collect()
    });
    // errors pooled over repeats, not averaged per repeat
    let mut pooled = vec![(WmapeAccumulator::default(), WmapeAccumulator::default()); removed.len()];
    for run in results {
        for (slot, (all, out)) in pooled.iter_mut().zip(run?) {
            slot.0.merge(&all);
            slot.1.merge(&out);
        }
    }
    let runs = runs.len();
    Ok(removed
        .iter()
        .zip(pooled)
        .filter_map(|(&k, (all, out))| {
            Some(SweepPoint {
                line_id: line.clone(),
                removed: k,
                coverage: (n - k) as f64 / total as f64,
                wmape: out.value().ok()?,
                wmape_all_courses: all.value().ok()?,
                repeats: runs,
            })
        })
        .collect())
}

pub fn write_eval_report(path: &Path, rows: &[EvalRow]) -> Result<()> {
    write_csv(
        path,
        &["protocol", "method", "scope", "wmape", "n_entries", "n_courses"],
        rows,
    )?;
    Ok(())
}

pub fn write_sweep(path: &Path, points: &[SweepPoint]) -> Result<()> {
    write_csv(
        path,
        &["line_id", "removed", "coverage", "wmape", "wmape_all_courses", "repeats"],
        points,
    )?;
    Ok(())
}
