//! JSON reports. Reals are written in shortest round-trip form, so reading a
//! report back reproduces the in-memory values exactly.

use serde::{Deserialize, Serialize};
use stereocal::so3::Vec3;
use stereocal::{
    init_from_prior, rectifying_homographies, CorrespondenceSet, GlobalEstimate, MetricsReport,
    PairEstimate, RotationVector, SolveDiagnostics, SolverConfig, UnitVec3,
};

use crate::formats::MatrixRows;

pub const TOOL: &str = "stereocal";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Per-pair estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Rectifying-rotation solver.
    Rectification,
    /// Epipolar-constraint baseline.
    Epipolar,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Rectification => "ours",
            Method::Epipolar => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub method: Method,
    pub aggregate: bool,
    pub solver: SolverConfig,
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn vec(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub rotation: MatrixRows,
    pub translation: [f64; 3],
    pub theta: [f64; 3],
    pub axis: [f64; 3],
    pub angle: f64,
    pub axis_degenerate: bool,
    pub diagnostics: SolveDiagnostics,
    /// `K_left·R_l·K_left⁻¹`, rectifying into the left camera's intrinsics.
    pub homography_left: Option<MatrixRows>,
    pub homography_right: Option<MatrixRows>,
}

impl EstimateRecord {
    pub fn new(est: &PairEstimate, obs: &CorrespondenceSet) -> Self {
        let homographies = init_from_prior(&est.extrinsics()).and_then(|rect| {
            rectifying_homographies(
                &rect,
                &obs.intrinsics_left,
                &obs.intrinsics_right,
                &obs.intrinsics_left,
            )
        });
        let (hl, hr) = match homographies {
            Ok((l, r)) => (
                Some(MatrixRows::from_matrix(l.matrix())),
                Some(MatrixRows::from_matrix(r.matrix())),
            ),
            Err(_) => (None, None),
        };
        Self {
            rotation: MatrixRows::from_row_major(est.rotation.to_row_major()),
            translation: arr(est.translation.as_vec()),
            theta: arr(est.theta.as_vec()),
            axis: arr(est.axis.as_vec()),
            angle: est.angle,
            axis_degenerate: est.axis_degenerate,
            diagnostics: est.diagnostics.clone(),
            homography_left: hl,
            homography_right: hr,
        }
    }

    pub fn to_estimate(&self) -> stereocal::Result<PairEstimate> {
        let ext = stereocal::Extrinsics::new(
            self.rotation.to_rotation()?,
            UnitVec3::from_unit(vec(self.translation))?,
        );
        Ok(PairEstimate::from_extrinsics(
            &ext,
            self.diagnostics.clone(),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub input: String,
    pub estimate: Option<EstimateRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalRecord {
    pub rotation: MatrixRows,
    pub translation: [f64; 3],
    pub theta: [f64; 3],
    pub axis: [f64; 3],
    pub angle: f64,
    pub contributing_pairs: usize,
    pub no_valid_axes: bool,
}

impl GlobalRecord {
    pub fn new(g: &GlobalEstimate) -> Self {
        Self {
            rotation: MatrixRows::from_row_major(g.rotation.to_row_major()),
            translation: arr(g.translation.as_vec()),
            theta: arr(g.theta.as_vec()),
            axis: arr(g.axis.as_vec()),
            angle: g.angle,
            contributing_pairs: g.contributing_pairs,
            no_valid_axes: g.no_valid_axes,
        }
    }

    pub fn to_global(&self) -> stereocal::Result<GlobalEstimate> {
        Ok(GlobalEstimate {
            rotation: self.rotation.to_rotation()?,
            translation: UnitVec3::from_unit(vec(self.translation))?,
            theta: RotationVector::new(vec(self.theta)),
            axis: UnitVec3::from_unit(vec(self.axis))?,
            angle: self.angle,
            contributing_pairs: self.contributing_pairs,
            no_valid_axes: self.no_valid_axes,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub tool: String,
    pub version: String,
    pub config: ConfigEcho,
    pub pairs: Vec<PairRecord>,
    pub global: Option<GlobalRecord>,
    pub metrics: Option<MetricsReport>,
}

impl CalibrationReport {
    pub fn new(config: ConfigEcho) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            config,
            pairs: Vec::new(),
            global: None,
            metrics: None,
        }
    }

    /// Successfully solved pairs, in input order.
    pub fn estimates(&self) -> stereocal::Result<Vec<PairEstimate>> {
        self.pairs
            .iter()
            .filter_map(|p| p.estimate.as_ref())
            .map(EstimateRecord::to_estimate)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: String,
    pub metric: String,
    pub value: f64,
}

/// One row per method and metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub tool: String,
    pub version: String,
    pub solver: SolverConfig,
    #[serde(rename = "M")]
    pub m: usize,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn new(solver: SolverConfig, results: &[(Method, MetricsReport)]) -> Self {
        let mut rows = Vec::new();
        for (method, m) in results {
            for (metric, value) in [
                ("e_t", m.e_t),
                ("e_theta", m.e_theta),
                ("sigma_t", m.sigma_t),
                ("sigma_theta", m.sigma_theta),
            ] {
                rows.push(CompareRow {
                    method: method.name().into(),
                    metric: metric.into(),
                    value,
                });
            }
        }
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            solver,
            m: results.first().map_or(0, |(_, r)| r.m),
            rows,
        }
    }

    pub fn value(&self, method: Method, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method.name() && r.metric == metric)
            .map(|r| r.value)
    }
}
