//! Seeded synthetic instances with known generating models.
//!
//! Every instance uses the tabular schema of the units file: the feature
//! vector of a unit is `[counselors, ap_ib, calculus, extras...]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::estimation::FitDataset;
use crate::graph::{build_knn_graph, KnnOptions};
use crate::outcome::{LinearInterferenceModel, MaxInterferenceModel, OutcomeModel, SemParams};
use crate::problem::AllocationProblem;
use crate::units::{GroupDomain, Unit};

pub const COUNSELORS: usize = 0;
pub const AP_IB: usize = 1;
pub const CALCULUS: usize = 2;
pub const BASE_FEATURES: [&str; 3] = ["counselors", "ap_ib", "calculus"];

pub const KINDS: [&str; 5] = ["housing", "housing_interference", "additive_infeasible", "nyc_like", "random"];

/// One row of a units file.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    pub id: String,
    pub group: usize,
    pub lon: f64,
    pub lat: f64,
    pub counselors: f64,
    pub ap_ib: f64,
    pub calculus: f64,
    pub outcome: f64,
    pub extras: Vec<f64>,
}

impl UnitRecord {
    pub fn features(&self) -> Vec<f64> {
        let mut f = vec![self.counselors, self.ap_ib, self.calculus];
        f.extend(&self.extras);
        f
    }
}

/// A dataset together with the model that generated it and a run setup.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    pub kind: String,
    pub groups: GroupDomain,
    pub records: Vec<UnitRecord>,
    pub extra_columns: Vec<String>,
    /// Names of the features treated as non-descendants of the group.
    pub prec_features: Vec<String>,
    pub knn: KnnOptions,
    pub objective_model: OutcomeModel<f64>,
    pub privilege_model: OutcomeModel<f64>,
    pub budget: usize,
    pub taus: Vec<f64>,
    pub seed: u64,
}

impl SyntheticInstance {
    pub fn feature_names(&self) -> Vec<String> {
        BASE_FEATURES.iter().map(|s| s.to_string()).chain(self.extra_columns.iter().cloned()).collect()
    }

    pub fn prec_mask(&self) -> Vec<bool> {
        self.feature_names().iter().map(|f| self.prec_features.contains(f)).collect()
    }

    pub fn units(&self) -> Vec<Unit<f64>> {
        let mask = self.prec_mask();
        self.records
            .iter()
            .map(|r| Unit::new(r.id.clone(), r.group, r.features()).with_coords(r.lon, r.lat).with_prec_mask(mask.clone()))
            .collect()
    }

    pub fn problem(&self, tau: f64) -> Result<AllocationProblem<f64>> {
        let units = self.units();
        let graph = build_knn_graph(&units, self.knn)?;
        AllocationProblem::new(
            units,
            graph,
            self.objective_model.clone(),
            self.privilege_model.clone(),
            self.groups.clone(),
            self.budget,
            tau,
        )
    }

    pub fn fit_dataset(&self) -> Result<FitDataset<f64>> {
        let graph = build_knn_graph(&self.units(), self.knn)?;
        Ok(FitDataset {
            groups: self.records.iter().map(|r| r.group).collect(),
            labels: self.groups.labels().to_vec(),
            ap_ib: self.records.iter().map(|r| r.ap_ib).collect(),
            counselors: self.records.iter().map(|r| r.counselors).collect(),
            calculus: self.records.iter().map(|r| r.calculus).collect(),
            outcome: self.records.iter().map(|r| r.outcome).collect(),
            graph,
        })
    }
}

fn record(id: usize, group: usize, lon: f64, lat: f64) -> UnitRecord {
    UnitRecord {
        id: id.to_string(),
        group,
        lon,
        lat,
        counselors: 0.0,
        ap_ib: 0.0,
        calculus: 0.0,
        outcome: 0.0,
        extras: Vec::new(),
    }
}

fn two_groups() -> GroupDomain {
    GroupDomain::new(["b", "w"]).expect("distinct labels")
}

/// `Y_i = X_i + 100 Z_i + 50 Z_i [A_i = w]`, optionally with
/// `- 10 [Z_i = 0] sum_j Z_j [A_j = w]` over the other unit.
/// Unit 1 is black with `X_1 = x1`, unit 2 white with `X_2 = x2`; `X` is the
/// extra column `x`.
pub fn housing(x1: f64, x2: f64, interference: bool) -> Result<SyntheticInstance> {
    let mut records = vec![record(1, 0, 0.0, 0.0), record(2, 1, 1.0, 0.0)];
    for (r, x) in records.iter_mut().zip([x1, x2]) {
        r.extras = vec![x];
        r.outcome = x;
    }
    let x = BASE_FEATURES.len();
    let idle = if interference { vec![vec![0.0, -10.0]; 2] } else { vec![vec![0.0; 2]; 2] };
    let model: OutcomeModel<f64> =
        LinearInterferenceModel::new(vec![(x, 1.0)], vec![0.0, 0.0], vec![100.0, 150.0], vec![vec![0.0; 2]; 2], idle)?.into();
    Ok(SyntheticInstance {
        kind: if interference { "housing_interference" } else { "housing" }.into(),
        groups: two_groups(),
        records,
        extra_columns: vec!["x".into()],
        prec_features: vec!["x".into()],
        knn: KnnOptions::new(if interference { 2 } else { 1 }, true),
        objective_model: model.clone(),
        privilege_model: model,
        budget: 1,
        taus: vec![f64::INFINITY],
        seed: 0,
    })
}

/// `Y_i = Z_i + [A_i = w]`: every white unit is privileged by exactly one
/// whatever the allocation, so no allocation is feasible for `tau < 1`.
pub fn additive_infeasible(seed: u64) -> Result<SyntheticInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 6;
    let records = (0..n)
        .map(|i| record(i + 1, i % 2, rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
        .collect();
    let model: OutcomeModel<f64> = LinearInterferenceModel::direct(vec![], vec![0.0, 1.0], vec![1.0, 1.0])?.into();
    Ok(SyntheticInstance {
        kind: "additive_infeasible".into(),
        groups: two_groups(),
        records,
        extra_columns: Vec::new(),
        prec_features: vec!["ap_ib".into(), "counselors".into()],
        knn: KnnOptions::new(1, true),
        objective_model: model.clone(),
        privilege_model: model,
        budget: 2,
        taus: vec![0.1, 0.5, 0.99, 1.0, 2.0],
        seed,
    })
}

/// Group labels of [`nyc_like`] instances, in index order.
pub const NYC_GROUPS: [&str; 3] = ["black", "hispanic", "white"];

/// Bounding box `(lon_min, lon_max, lat_min, lat_max)` of the city-like layout.
pub const NYC_BBOX: (f64, f64, f64, f64) = (-74.25, -73.70, 40.50, 40.92);

/// Settings of [`nyc_like`].
#[derive(Debug, Clone, PartialEq)]
pub struct NycOptions {
    pub n: usize,
    pub k: usize,
    pub budget: usize,
    /// Noise standard deviation of the observed outcome.
    pub noise_sd: f64,
    /// Place each group in its own, well separated region instead of mixing.
    pub segregated: bool,
    /// Index of a group whose intervention effect dominates every other
    /// group's; implies segregation.
    pub dominant: Option<usize>,
    /// Smallest distance between two units, in coordinate units.
    pub min_separation: f64,
}

impl Default for NycOptions {
    fn default() -> Self {
        Self { n: 345, k: 5, budget: 25, noise_sd: 0.01, segregated: false, dominant: None, min_separation: 0.002 }
    }
}

/// Group-specific generating parameters for the black, Hispanic and white
/// groups. Similarities are inverse distances in degrees (hundreds), so
/// `alpha` and `beta` are small.
pub fn nyc_params() -> SemParams<f64> {
    SemParams {
        alpha: vec![1.2e-4, 1.6e-4, 2.0e-4],
        beta: vec![1.0e-4, 1.2e-4, 1.5e-4],
        gamma: vec![0.030, 0.025, 0.035],
        theta: vec![0.25, 0.28, 0.40],
    }
}

fn draw_points(rng: &mut ChaCha8Rng, count: usize, region: (f64, f64, f64, f64), min_sep: f64, taken: &mut Vec<[f64; 2]>) -> Result<Vec<[f64; 2]>> {
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 1000 * count.max(1) {
            return Err(Error::InvalidProblem(format!("cannot place {count} units {min_sep} apart in the region")));
        }
        let p = [rng.random_range(region.0..region.1), rng.random_range(region.2..region.3)];
        if taken.iter().all(|q| (p[0] - q[0]).hypot(p[1] - q[1]) >= min_sep) {
            taken.push(p);
            out.push(p);
        }
    }
    Ok(out)
}

/// City-like population of schools in three groups (`black`, `hispanic`,
/// `white`) with features drawn independently of location, and outcomes
/// drawn from the max-interference model with the observed calculus
/// offering plus Gaussian noise.
///
/// With a dominant group, that group's `alpha` is kept and every other
/// group's is shrunk far enough that one treatment in the dominant group is
/// worth more than any treatment elsewhere; `beta` and `gamma` are shared and
/// the dominant group keeps the highest `theta`, so its units carry a common
/// baseline privilege.
pub fn nyc_like(seed: u64, opts: &NycOptions) -> Result<SyntheticInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = GroupDomain::new(NYC_GROUPS)?;
    let g = groups.len();
    if opts.k == 0 || opts.k > opts.n || opts.budget > opts.n || opts.n < g {
        return Err(Error::InvalidProblem(format!("invalid nyc_like sizes: n={} k={} budget={}", opts.n, opts.k, opts.budget)));
    }
    if let Some(d) = opts.dominant {
        groups.check(d)?;
    }
    let (x0, x1, y0, y1) = NYC_BBOX;
    let segregated = opts.segregated || opts.dominant.is_some();
    let mut taken = Vec::new();
    let mut placed: Vec<(usize, [f64; 2])> = Vec::with_capacity(opts.n);
    if segregated {
        // vertical bands separated by empty gaps as wide as a band
        let width = (x1 - x0) / (2.0 * g as f64 - 1.0);
        for a in 0..g {
            let count = opts.n / g + usize::from(a < opts.n % g);
            let left = x0 + a as f64 * width * 2.0;
            let pts = draw_points(&mut rng, count, (left, left + width, y0, y1), opts.min_separation, &mut taken)?;
            placed.extend(pts.into_iter().map(|p| (a, p)));
        }
    } else {
        let pts = draw_points(&mut rng, opts.n, (x0, x1, y0, y1), opts.min_separation, &mut taken)?;
        let mut labels: Vec<usize> = (0..opts.n).map(|i| i % g).collect();
        for i in (1..labels.len()).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        placed.extend(labels.into_iter().zip(pts));
    }

    let mut records: Vec<UnitRecord> = placed
        .iter()
        .enumerate()
        .map(|(i, &(a, p))| {
            let mut r = record(i + 1, a, p[0], p[1]);
            r.id = format!("S{:03}", i + 1);
            r.counselors = f64::from(rng.random_range(0..=8u8)) * 0.5;
            r.ap_ib = f64::from(u8::from(rng.random_bool(0.55)));
            r.calculus = f64::from(u8::from(rng.random_bool(0.4)));
            r
        })
        .collect();

    let knn = KnnOptions::new(opts.k, true);
    let mut params = nyc_params();
    if let Some(d) = opts.dominant {
        let units: Vec<Unit<f64>> = records.iter().map(|r| Unit::new(r.id.clone(), r.group, r.features()).with_coords(r.lon, r.lat)).collect();
        let graph = build_knn_graph(&units, knn)?;
        let max_in = (0..graph.len()).map(|j| graph.in_degree(j)).max().unwrap_or(1) as f64;
        // a dominant treatment gains at least alpha_d * cap / 2 on its own unit;
        // any other treatment gains at most alpha_o * cap on each unit it reaches
        let other_alpha = params.alpha[d] / (4.0 * (max_in + 1.0));
        let shared_beta = params.beta[d];
        let shared_gamma = params.gamma[d];
        let other_theta = params.theta[d] - 0.1;
        for a in 0..g {
            params.beta[a] = shared_beta;
            params.gamma[a] = shared_gamma;
            if a != d {
                params.alpha[a] = other_alpha;
                params.theta[a] = other_theta;
            }
        }
    }
    let model = MaxInterferenceModel::new(params, Some(AP_IB), Some(COUNSELORS))?;

    let units: Vec<Unit<f64>> = records.iter().map(|r| Unit::new(r.id.clone(), r.group, r.features()).with_coords(r.lon, r.lat)).collect();
    let graph = build_knn_graph(&units, knn)?;
    let noise = Normal::new(0.0, opts.noise_sd).map_err(|e| Error::InvalidProblem(format!("noise: {e}")))?;
    let calculus: Vec<f64> = records.iter().map(|r| r.calculus).collect();
    let ap: Vec<f64> = records.iter().map(|r| r.ap_ib).collect();
    for (i, r) in records.iter_mut().enumerate() {
        let mut treated = 0.0f64;
        let mut ap_term = 0.0f64;
        for (idx, (&j, &s)) in graph.neighbors(i).iter().zip(graph.similarities(i)).enumerate() {
            if calculus[j] == 1.0 {
                treated = treated.max(s);
            }
            ap_term = if idx == 0 { s * ap[j] } else { ap_term.max(s * ap[j]) };
        }
        let [al, be, ga, th] = model.params.group(r.group);
        let eps = if opts.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        r.outcome = al * treated + be * ap_term + ga * r.counselors + th + eps;
    }

    let model: OutcomeModel<f64> = model.into();
    Ok(SyntheticInstance {
        kind: "nyc_like".into(),
        groups,
        records,
        extra_columns: Vec::new(),
        prec_features: vec!["ap_ib".into(), "counselors".into()],
        knn,
        objective_model: model.clone(),
        privilege_model: model,
        budget: opts.budget,
        taus: vec![0.05, 0.1, 0.15, 0.2, f64::INFINITY],
        seed,
    })
}

/// Model family of [`random_instance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomModel {
    Linear,
    Max,
}

/// Settings of [`random_instance`].
#[derive(Debug, Clone, PartialEq)]
pub struct RandomOptions {
    pub n: usize,
    pub k: usize,
    pub budget: usize,
    pub n_groups: usize,
    pub model: RandomModel,
    pub include_self: bool,
    pub tau: f64,
}

impl Default for RandomOptions {
    fn default() -> Self {
        Self { n: 8, k: 3, budget: 3, n_groups: 2, model: RandomModel::Linear, include_self: true, tau: f64::INFINITY }
    }
}

/// Small random instance in the unit square. The linear family also reads
/// the non-descendant-excluded extra feature `x` in its objective, which the
/// privilege model drops.
pub fn random_instance(seed: u64, opts: &RandomOptions) -> Result<SyntheticInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<String> = (0..opts.n_groups).map(|a| format!("g{a}")).collect();
    let groups = GroupDomain::new(labels)?;
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut records: Vec<UnitRecord> = (0..opts.n)
        .map(|i| {
            let a = if i < opts.n_groups { i } else { rng.random_range(0..opts.n_groups) };
            let mut r = record(i + 1, a, rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            r.counselors = f64::from(rng.random_range(0..=4u8)) * 0.5;
            r.ap_ib = f64::from(u8::from(rng.random_bool(0.5)));
            r.calculus = f64::from(u8::from(rng.random_bool(0.5)));
            r.extras = vec![rng.random_range(0.0..1.0)];
            r
        })
        .collect();
    let g = opts.n_groups;
    let mut draw = |count: usize, scale: f64| -> Vec<f64> { (0..count).map(|_| scale * std.sample(&mut rng)).collect() };
    let (objective, privilege): (OutcomeModel<f64>, OutcomeModel<f64>) = match opts.model {
        RandomModel::Linear => {
            let coefs = draw(3, 1.0);
            let model = LinearInterferenceModel::new(
                vec![(COUNSELORS, coefs[0]), (AP_IB, coefs[1]), (BASE_FEATURES.len(), coefs[2])],
                draw(g, 1.0),
                draw(g, 1.0).into_iter().map(|v| v + 1.0).collect(),
                (0..g).map(|_| draw(g, 0.5)).collect(),
                (0..g).map(|_| draw(g, 0.5)).collect(),
            )?;
            let privilege = model.restricted(|f| f != BASE_FEATURES.len());
            (model.into(), privilege.into())
        }
        RandomModel::Max => {
            let params = SemParams {
                alpha: draw(g, 1.0).into_iter().map(f64::abs).collect(),
                beta: draw(g, 0.5),
                gamma: draw(g, 0.5),
                theta: draw(g, 1.0),
            };
            let model: OutcomeModel<f64> = MaxInterferenceModel::new(params, Some(AP_IB), Some(COUNSELORS))?.into();
            (model.clone(), model)
        }
    };
    // keep similarities moderate: the max model reads raw inverse distances
    for r in &mut records {
        r.lon *= 4.0;
        r.lat *= 4.0;
    }
    Ok(SyntheticInstance {
        kind: "random".into(),
        groups,
        records,
        extra_columns: vec!["x".into()],
        prec_features: vec!["ap_ib".into(), "counselors".into()],
        knn: KnnOptions::new(opts.k, opts.include_self),
        objective_model: objective,
        privilege_model: privilege,
        budget: opts.budget,
        taus: vec![opts.tau],
        seed,
    })
}

/// Instance of a named kind with its default settings.
pub fn generate(kind: &str, seed: u64) -> Result<SyntheticInstance> {
    match kind {
        "housing" => housing(60.0, 80.0, false),
        "housing_interference" => housing(60.0, 80.0, true),
        "additive_infeasible" => additive_infeasible(seed),
        "nyc_like" => nyc_like(seed, &NycOptions::default()),
        "random" => random_instance(seed, &RandomOptions::default()),
        other => Err(Error::UnknownKind(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn housing_objective_values() {
        let inst = housing(60.0, 80.0, true).unwrap();
        let p = inst.problem(f64::INFINITY).unwrap();
        let totals: Vec<f64> = [[false, false], [true, false], [false, true], [true, true]]
            .iter()
            .map(|z| p.evaluate_policy(z).unwrap().total)
            .collect();
        assert_eq!(totals, vec![140.0, 240.0, 280.0, 390.0]);
    }

    #[test]
    fn deterministic_per_seed() {
        for kind in KINDS {
            assert_eq!(generate(kind, 7).unwrap(), generate(kind, 7).unwrap());
        }
        assert_ne!(generate("random", 1).unwrap(), generate("random", 2).unwrap());
        assert!(matches!(generate("mall", 1), Err(Error::UnknownKind(_))));
    }

    #[test]
    fn nyc_like_shape() {
        let inst = nyc_like(3, &NycOptions::default()).unwrap();
        assert_eq!(inst.records.len(), 345);
        let (x0, x1, y0, y1) = NYC_BBOX;
        assert!(inst.records.iter().all(|r| (x0..=x1).contains(&r.lon) && (y0..=y1).contains(&r.lat)));
        for a in 0..3 {
            assert!(inst.records.iter().filter(|r| r.group == a).count() >= 100);
        }
        assert!(inst.records.iter().all(|r| r.outcome.is_finite()));
    }

    #[test]
    fn segregated_neighborhoods_stay_within_group() {
        let inst = nyc_like(5, &NycOptions { dominant: Some(2), ..NycOptions::default() }).unwrap();
        let p = inst.problem(f64::INFINITY).unwrap();
        for i in 0..p.n() {
            assert!(p.graph().neighbors(i).iter().all(|&j| p.units()[j].group == p.units()[i].group));
        }
    }
}
