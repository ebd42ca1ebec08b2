//! Two-level placement: banks are the K-Medoids of all households, then
//! pantries are the K-Medoids of each bank's cluster.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::ingest::Household;
use crate::kmedoids::{solve, Clustering, SolveError, SolveParams, SwapMode};
use crate::matrix::SquareView;
use crate::numeric::compensated_sum;

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("cannot allocate {total} pantries over clusters of sizes {sizes:?}")]
    Allocation { total: usize, sizes: Vec<usize> },
    #[error("invalid hierarchy parameters: {0}")]
    Params(String),
    #[error("plan does not match the household set: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    #[default]
    ProportionalLargestRemainder,
}

/// Per-level solver knobs; `k`, weights and seed come from the hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelSolver {
    pub mode: SwapMode,
    pub epsilon: f64,
    pub max_passes: Option<usize>,
}

impl Default for LevelSolver {
    fn default() -> Self {
        Self {
            mode: SwapMode::GlobalSwap,
            epsilon: 1e-6,
            max_passes: None,
        }
    }
}

impl LevelSolver {
    pub fn params(&self, k: usize, weights: Vec<f64>, seed: u64) -> SolveParams {
        SolveParams {
            k,
            weights,
            mode: self.mode,
            seed,
            epsilon: self.epsilon,
            max_passes: self.max_passes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierarchyParams {
    pub k_banks: usize,
    pub k_pantries_total: usize,
    pub allocation: Allocation,
    pub bank_solver: LevelSolver,
    pub pantry_solver: LevelSolver,
    pub seed: u64,
}

impl Default for HierarchyParams {
    fn default() -> Self {
        Self {
            k_banks: 1,
            k_pantries_total: 1,
            allocation: Allocation::default(),
            bank_solver: LevelSolver::default(),
            pantry_solver: LevelSolver::default(),
            seed: 0,
        }
    }
}

/// Largest-remainder apportionment of `total` over `sizes`.
///
/// Every nonempty cluster gets at least one unit and no cluster gets more
/// than its size. Clusters whose proportional quota falls outside
/// `[1, size]` are pinned to the violated bound and the rest is
/// re-apportioned among the others. Remainders are compared exactly in
/// integer arithmetic; equal remainders favor the lower index.
pub fn allocate_pantry_counts(sizes: &[usize], total: usize) -> Result<Vec<usize>, HierarchyError> {
    let nonempty = sizes.iter().filter(|&&s| s > 0).count();
    let capacity: usize = sizes.iter().sum();
    if total < nonempty || total > capacity {
        return Err(HierarchyError::Allocation {
            total,
            sizes: sizes.to_vec(),
        });
    }
    let mut counts = vec![0usize; sizes.len()];
    let mut pinned: Vec<bool> = sizes.iter().map(|&s| s == 0).collect();

    loop {
        let free: Vec<usize> = (0..sizes.len()).filter(|&i| !pinned[i]).collect();
        if free.is_empty() {
            break;
        }
        let remaining = total - counts.iter().sum::<usize>();
        let free_size: usize = free.iter().map(|&i| sizes[i]).sum();
        // quota_i = remaining * size_i / free_size, compared without division.
        let low: Vec<usize> = free
            .iter()
            .copied()
            .filter(|&i| remaining * sizes[i] < free_size)
            .collect();
        let high: Vec<usize> = free
            .iter()
            .copied()
            .filter(|&i| remaining * sizes[i] > sizes[i] * free_size)
            .collect();
        if !low.is_empty() {
            for i in low {
                counts[i] = 1;
                pinned[i] = true;
            }
            continue;
        }
        if !high.is_empty() {
            for i in high {
                counts[i] = sizes[i];
                pinned[i] = true;
            }
            continue;
        }
        let mut remainders = Vec::with_capacity(free.len());
        for &i in &free {
            let scaled = remaining * sizes[i];
            counts[i] = scaled / free_size;
            remainders.push((scaled % free_size, i));
        }
        let leftover = remaining - free.iter().map(|&i| counts[i]).sum::<usize>();
        remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in remainders.iter().take(leftover) {
            counts[i] += 1;
        }
        break;
    }
    debug_assert_eq!(counts.iter().sum::<usize>(), total);
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementPlan {
    /// Household indices of bank sites, ascending.
    pub banks: Vec<usize>,
    /// Household indices of pantry sites, ascending.
    pub pantries: Vec<usize>,
    /// Bank household index for each entry of `pantries`.
    pub pantry_to_bank: Vec<usize>,
    /// Nearest pantry (household index) for every household, over all pantries.
    pub household_to_pantry: Vec<usize>,
    /// Bank serving each household's level-1 cluster.
    pub household_to_bank: Vec<usize>,
    pub level1_objective: f64,
    pub level2_objective: f64,
    pub level1_passes: usize,
    /// Solver passes per bank cluster, in bank order.
    pub level2_passes: Vec<usize>,
}

impl PlacementPlan {
    pub fn bank_of(&self, pantry: usize) -> Option<usize> {
        self.pantries
            .iter()
            .position(|&p| p == pantry)
            .map(|pos| self.pantry_to_bank[pos])
    }
}

/// Nearest site for each point, ties to the lowest site index.
pub fn nearest_sites(m: SquareView<'_>, sites: &[usize]) -> Vec<usize> {
    let mut sorted = sites.to_vec();
    sorted.sort_unstable();
    (0..m.len())
        .map(|i| {
            let row = m.row(i);
            sorted
                .iter()
                .copied()
                .fold(sorted[0], |best, s| if row[s] < row[best] { s } else { best })
        })
        .collect()
}

pub fn place_two_level(
    m: SquareView<'_>,
    params: &HierarchyParams,
    weights: &[f64],
) -> Result<PlacementPlan, HierarchyError> {
    if params.k_banks == 0 || params.k_pantries_total == 0 {
        return Err(HierarchyError::Params(
            "k_banks and k_pantries_total must be positive".into(),
        ));
    }
    let level1 = solve(
        m,
        &params
            .bank_solver
            .params(params.k_banks, weights.to_vec(), params.seed),
    )?;
    let clusters = level1.clusters();
    let sizes: Vec<usize> = clusters.iter().map(Vec::len).collect();
    let counts = allocate_pantry_counts(&sizes, params.k_pantries_total)?;

    let level2: Vec<Clustering> = clusters
        .par_iter()
        .zip(counts.par_iter())
        .map(|(members, &k)| {
            let sub = m.restrict(members);
            let w = members.iter().map(|&i| weights[i]).collect();
            solve(sub.view(), &params.pantry_solver.params(k, w, params.seed))
        })
        .collect::<Result<_, _>>()?;

    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(params.k_pantries_total);
    for ((members, local), &bank) in clusters.iter().zip(&level2).zip(&level1.medoids) {
        pairs.extend(local.medoids.iter().map(|&j| (members[j], bank)));
    }
    pairs.sort_unstable();
    let pantries: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let pantry_to_bank = pairs.iter().map(|p| p.1).collect();

    let household_to_pantry = nearest_sites(m, &pantries);
    let level2_objective = compensated_sum(
        household_to_pantry
            .iter()
            .enumerate()
            .map(|(i, &p)| weights[i] * m.get(i, p)),
    );
    Ok(PlacementPlan {
        banks: level1.medoids.clone(),
        pantries,
        pantry_to_bank,
        household_to_pantry,
        household_to_bank: level1.assignment.clone(),
        level1_objective: level1.objective,
        level2_objective,
        level1_passes: level1.passes,
        level2_passes: level2.iter().map(|c| c.passes).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PantryBankDistances {
    /// Meters from each pantry (in plan order) to its bank.
    pub per_pantry: Vec<f64>,
    pub total: f64,
    pub mean: f64,
}

impl PantryBankDistances {
    pub fn from_distances(per_pantry: Vec<f64>) -> Self {
        let total = compensated_sum(per_pantry.iter().copied());
        let mean = if per_pantry.is_empty() {
            0.0
        } else {
            total / per_pantry.len() as f64
        };
        Self {
            per_pantry,
            total,
            mean,
        }
    }
}

pub fn pantry_bank_distances(plan: &PlacementPlan, m: SquareView<'_>) -> PantryBankDistances {
    PantryBankDistances::from_distances(
        plan.pantries
            .iter()
            .zip(&plan.pantry_to_bank)
            .map(|(&p, &b)| m.get(p, b))
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub index: usize,
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank_id: Option<String>,
}

/// On-disk form of a [`PlacementPlan`], with household ids and coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub provenance: Value,
    pub household_count: usize,
    pub level1_objective_m: f64,
    pub level2_objective_m: f64,
    pub level1_passes: usize,
    pub level2_passes: Vec<usize>,
    pub banks: Vec<SiteRecord>,
    pub pantries: Vec<SiteRecord>,
    pub household_to_pantry: Vec<usize>,
    pub household_to_bank: Vec<usize>,
}

fn site(households: &[Household], index: usize) -> SiteRecord {
    let h = &households[index];
    SiteRecord {
        index,
        id: h.id.clone(),
        lat: h.location.lat(),
        lon: h.location.lon(),
        bank_index: None,
        bank_id: None,
    }
}

impl PlanDocument {
    pub fn new(plan: &PlacementPlan, households: &[Household], provenance: Value) -> Self {
        Self {
            provenance,
            household_count: households.len(),
            level1_objective_m: plan.level1_objective,
            level2_objective_m: plan.level2_objective,
            level1_passes: plan.level1_passes,
            level2_passes: plan.level2_passes.clone(),
            banks: plan.banks.iter().map(|&b| site(households, b)).collect(),
            pantries: plan
                .pantries
                .iter()
                .zip(&plan.pantry_to_bank)
                .map(|(&p, &b)| SiteRecord {
                    bank_index: Some(b),
                    bank_id: Some(households[b].id.clone()),
                    ..site(households, p)
                })
                .collect(),
            household_to_pantry: plan.household_to_pantry.clone(),
            household_to_bank: plan.household_to_bank.clone(),
        }
    }

    /// Rebuilds the plan, checking indices and ids against `households`.
    pub fn to_plan(&self, households: &[Household]) -> Result<PlacementPlan, HierarchyError> {
        let n = households.len();
        if self.household_count != n
            || self.household_to_pantry.len() != n
            || self.household_to_bank.len() != n
        {
            return Err(HierarchyError::Mismatch(format!(
                "plan covers {} households, dataset has {n}",
                self.household_count
            )));
        }
        let check = |s: &SiteRecord| {
            if s.index >= n || households[s.index].id != s.id {
                Err(HierarchyError::Mismatch(format!("site {} ({})", s.index, s.id)))
            } else {
                Ok(s.index)
            }
        };
        let banks = self.banks.iter().map(check).collect::<Result<Vec<_>, _>>()?;
        let pantries = self.pantries.iter().map(check).collect::<Result<Vec<_>, _>>()?;
        let pantry_to_bank = self
            .pantries
            .iter()
            .map(|p| {
                p.bank_index
                    .filter(|b| banks.contains(b))
                    .ok_or_else(|| HierarchyError::Mismatch(format!("pantry {} has no bank", p.index)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if self
            .household_to_pantry
            .iter()
            .chain(&self.household_to_bank)
            .any(|&i| i >= n)
        {
            return Err(HierarchyError::Mismatch("mapping index out of range".into()));
        }
        Ok(PlacementPlan {
            banks,
            pantries,
            pantry_to_bank,
            household_to_pantry: self.household_to_pantry.clone(),
            household_to_bank: self.household_to_bank.clone(),
            level1_objective: self.level1_objective_m,
            level2_objective: self.level2_objective_m,
            level1_passes: self.level1_passes,
            level2_passes: self.level2_passes.clone(),
        })
    }
}

/// GeoJSON FeatureCollection of bank and pantry points.
pub fn plan_geojson(plan: &PlacementPlan, households: &[Household], provenance: Value) -> Value {
    let point = |i: usize| {
        let loc = households[i].location;
        json!({"type": "Point", "coordinates": [loc.lon(), loc.lat()]})
    };
    let mut features: Vec<Value> = plan
        .banks
        .iter()
        .map(|&b| {
            json!({
                "type": "Feature",
                "geometry": point(b),
                "properties": {"role": "bank", "id": households[b].id, "index": b},
            })
        })
        .collect();
    features.extend(plan.pantries.iter().zip(&plan.pantry_to_bank).map(|(&p, &b)| {
        json!({
            "type": "Feature",
            "geometry": point(p),
            "properties": {
                "role": "pantry",
                "id": households[p].id,
                "index": p,
                "bank_id": households[b].id,
            },
        })
    }));
    json!({"type": "FeatureCollection", "provenance": provenance, "features": features})
}
