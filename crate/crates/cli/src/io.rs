//! JSON instance and report files.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use lbfl_core::gallery::PlanarInstance;
use lbfl_core::model::{evaluate_lbfl, DistMatrix, LbflInstance, Solution};
use lbfl_core::{LbflError, Result};
use serde::{Deserialize, Serialize};

pub const FORMAT: u32 = 1;

/// External name of a facility or client: an integer or a string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Id {
    Int(u64),
    Str(String),
}

impl fmt::Display for Id {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Id::Int(n) => write!(f, "{n}"),
            Id::Str(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FacilityRecord {
    pub id: Id,
    pub opening_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientRecord {
    pub id: Id,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub format: u32,
    pub facilities: Vec<FacilityRecord>,
    pub clients: Vec<ClientRecord>,
    /// Plane coordinates keyed by id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<BTreeMap<String, [f64; 2]>>,
    /// Full matrix over facilities then clients, in file order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<Vec<f64>>>,
    #[serde(rename = "M")]
    pub lower_bound: usize,
}

fn facility_ids(n: usize) -> Vec<Id> {
    (0..n).map(|i| Id::Str(format!("f{i}"))).collect()
}

fn client_ids(n: usize) -> Vec<Id> {
    (0..n).map(|j| Id::Str(format!("c{j}"))).collect()
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text).map_err(|e| LbflError::Invalid(format!("instance file: {e}")))?;
        file.check_header()?;
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("instance serializes");
        s.push('\n');
        s
    }

    fn check_header(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(LbflError::Invalid(format!("unsupported format {}", self.format)));
        }
        match (&self.points, &self.distances) {
            (Some(_), Some(_)) => Err(LbflError::Invalid("both \"points\" and \"distances\" given".into())),
            (None, None) => Err(LbflError::Invalid("one of \"points\" or \"distances\" is required".into())),
            _ => Ok(()),
        }
    }

    fn ids(&self) -> impl Iterator<Item = &Id> {
        self.facilities.iter().map(|f| &f.id).chain(self.clients.iter().map(|c| &c.id))
    }

    /// Builds the validated instance; facilities keep file order, then
    /// clients.
    pub fn to_instance(&self) -> Result<LbflInstance> {
        self.check_header()?;
        let mut seen = HashMap::new();
        for id in self.ids() {
            if seen.insert(id.to_string(), ()).is_some() {
                return Err(LbflError::Invalid(format!("duplicate id {id}")));
            }
        }
        let n = self.facilities.len() + self.clients.len();
        let dist = if let Some(points) = &self.points {
            if points.len() != n {
                let extra = points.keys().find(|k| !seen.contains_key(*k));
                return Err(match extra {
                    Some(k) => LbflError::Reference(format!("point for unknown id {k}")),
                    None => LbflError::Invalid(format!("{} points for {n} ids", points.len())),
                });
            }
            let coords = self
                .ids()
                .map(|id| {
                    points
                        .get(&id.to_string())
                        .copied()
                        .ok_or_else(|| LbflError::Reference(format!("no point for id {id}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(p) = coords.iter().find(|p| !p.iter().all(|x| x.is_finite())) {
                return Err(LbflError::Invalid(format!("non-finite point {p:?}")));
            }
            DistMatrix::euclidean(&coords)
        } else {
            let rows = self.distances.as_ref().expect("checked above");
            if rows.len() != n {
                return Err(LbflError::Shape(format!("distance matrix has {} rows for {n} points", rows.len())));
            }
            DistMatrix::from_rows(rows)?
        };
        let costs = self.facilities.iter().map(|f| f.opening_cost).collect();
        LbflInstance::new(costs, self.clients.len(), dist, self.lower_bound)
    }

    pub fn facility_ids(&self) -> Vec<Id> {
        self.facilities.iter().map(|f| f.id.clone()).collect()
    }

    pub fn client_ids(&self) -> Vec<Id> {
        self.clients.iter().map(|c| c.id.clone()).collect()
    }

    pub fn from_planar(p: &PlanarInstance) -> Self {
        let inst = &p.instance;
        let fids = facility_ids(inst.n_facilities());
        let cids = client_ids(inst.n_clients());
        let points = fids
            .iter()
            .zip(&p.facility_points)
            .chain(cids.iter().zip(&p.client_points))
            .map(|(id, &pt)| (id.to_string(), pt))
            .collect();
        Self {
            format: FORMAT,
            facilities: records(inst, fids),
            clients: cids.into_iter().map(|id| ClientRecord { id }).collect(),
            points: Some(points),
            distances: None,
            lower_bound: inst.lower_bound(),
        }
    }

    pub fn from_matrix(inst: &LbflInstance) -> Self {
        Self {
            format: FORMAT,
            facilities: records(inst, facility_ids(inst.n_facilities())),
            clients: client_ids(inst.n_clients()).into_iter().map(|id| ClientRecord { id }).collect(),
            points: None,
            distances: Some(inst.dist().rows()),
            lower_bound: inst.lower_bound(),
        }
    }
}

fn records(inst: &LbflInstance, ids: Vec<Id>) -> Vec<FacilityRecord> {
    ids.into_iter()
        .enumerate()
        .map(|(i, id)| FacilityRecord {
            id,
            opening_cost: inst.opening_cost(i),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSummary {
    pub facility_cost: f64,
    pub assignment_cost: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionRecord {
    pub open: Vec<Id>,
    /// `[client, facility]` pairs in client order.
    pub assignment: Vec<(Id, Id)>,
}

impl SolutionRecord {
    pub fn new(solution: &Solution, file: &InstanceFile) -> Self {
        let fids = file.facility_ids();
        let cids = file.client_ids();
        Self {
            open: solution.open.iter().map(|&i| fids[i].clone()).collect(),
            assignment: solution
                .assign
                .iter()
                .enumerate()
                .map(|(j, &i)| (cids[j].clone(), fids[i].clone()))
                .collect(),
        }
    }

    /// Maps ids back to dense indices.
    pub fn to_solution(&self, file: &InstanceFile) -> Result<Solution> {
        let index = |ids: Vec<Id>| -> HashMap<Id, usize> { ids.into_iter().enumerate().map(|(k, id)| (id, k)).collect() };
        let fidx = index(file.facility_ids());
        let cidx = index(file.client_ids());
        let facility = |id: &Id| {
            fidx.get(id)
                .copied()
                .ok_or_else(|| LbflError::Reference(format!("unknown facility {id}")))
        };
        let open = self.open.iter().map(facility).collect::<Result<Vec<_>>>()?;
        let mut assign = vec![None; cidx.len()];
        for (c, f) in &self.assignment {
            let j = *cidx
                .get(c)
                .ok_or_else(|| LbflError::Reference(format!("unknown client {c}")))?;
            if assign[j].replace(facility(f)?).is_some() {
                return Err(LbflError::Invalid(format!("client {c} assigned twice")));
            }
        }
        let assign = assign
            .into_iter()
            .enumerate()
            .map(|(j, a)| a.ok_or_else(|| LbflError::Invalid(format!("client {} unassigned", file.clients[j].id))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Solution::new(open, assign))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub format: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub report: serde_json::Value,
    pub solution: SolutionRecord,
    pub cost: CostSummary,
}

impl ReportFile {
    pub fn parse(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text).map_err(|e| LbflError::Invalid(format!("report file: {e}")))?;
        if r.format != FORMAT {
            return Err(LbflError::Invalid(format!("unsupported format {}", r.format)));
        }
        Ok(r)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Re-evaluates the embedded solution and compares it with the embedded
    /// costs.
    pub fn verify(&self, file: &InstanceFile) -> Result<()> {
        let inst = file.to_instance()?;
        let sol = self.solution.to_solution(file)?;
        let got = evaluate_lbfl(&inst, &sol)?;
        let pairs = [
            ("facility_cost", got.facility_cost, self.cost.facility_cost),
            ("assignment_cost", got.assignment_cost, self.cost.assignment_cost),
            ("total", got.total, self.cost.total),
        ];
        for (name, a, b) in pairs {
            if (a - b).abs() > 1e-9 * (1.0 + b.abs()) {
                return Err(LbflError::Invariant(format!("{name}: re-evaluated {a}, embedded {b}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lbfl_core::gallery::gen_random_planar;

    #[test]
    fn planar_round_trip() {
        let p = gen_random_planar(3, 3, 5, 2, (0.0, 1.0)).unwrap();
        let file = InstanceFile::from_planar(&p);
        let back = InstanceFile::parse(&file.to_json()).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_instance().unwrap(), p.instance);
    }

    #[test]
    fn matrix_round_trip_is_bit_exact() {
        let p = gen_random_planar(4, 2, 4, 1, (0.1, 0.9)).unwrap();
        let file = InstanceFile::from_matrix(&p.instance);
        let back = InstanceFile::parse(&file.to_json()).unwrap();
        assert_eq!(back.to_instance().unwrap(), p.instance);
    }

    #[test]
    fn rejects_both_metrics() {
        let text = r#"{"format":1,"facilities":[{"id":0,"opening_cost":1}],"clients":[{"id":1}],
            "points":{"0":[0,0],"1":[1,0]},"distances":[[0,1],[1,0]],"M":1}"#;
        assert!(InstanceFile::parse(text).is_err());
    }

    #[test]
    fn rejects_duplicate_ids() {
        let text = r#"{"format":1,"facilities":[{"id":"a","opening_cost":1}],"clients":[{"id":"a"}],
            "distances":[[0,1],[1,0]],"M":1}"#;
        let f = InstanceFile::parse(text).unwrap();
        assert!(matches!(f.to_instance(), Err(LbflError::Invalid(_))));
    }

    #[test]
    fn integer_and_string_ids_mix() {
        let text = r#"{"format":1,"facilities":[{"id":7,"opening_cost":1}],"clients":[{"id":"x"}],
            "points":{"7":[0,0],"x":[3,4]},"M":1}"#;
        let inst = InstanceFile::parse(text).unwrap().to_instance().unwrap();
        assert_eq!(inst.conn(0, 0), 5.0);
    }

    #[test]
    fn non_metric_matrix_rejected() {
        let text = r#"{"format":1,"facilities":[{"id":0,"opening_cost":1}],"clients":[{"id":1},{"id":2}],
            "distances":[[0,1,1],[1,0,5],[1,5,0]],"M":1}"#;
        let f = InstanceFile::parse(text).unwrap();
        assert!(matches!(f.to_instance(), Err(LbflError::NotMetric(_))));
    }
}
