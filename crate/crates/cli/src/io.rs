//! Versioned JSON description of networks and their anisotropies.

use netflow_core::anisotropy::{Anisotropy, CrystallinePolytope, SmoothAnisotropy};
use netflow_core::network::{Curve, CurveEnd, CurveKind, Junction, Network};
use netflow_core::Vec2;
use serde::{Deserialize, Serialize};

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnisotropySpec {
    /// `phi°(nu) = scale |nu|`.
    Euclidean { scale: f64 },
    /// `psi(theta) = base + amp cos(freq (theta - phase))`.
    Cosine {
        base: f64,
        amp: f64,
        freq: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Wulff polygon given by its vertices.
    Crystalline { vertices: Vec<Vec2> },
    /// Regular Wulff polygon with an edge normal at angle `rotation` (radians).
    RegularPolygon {
        sides: usize,
        side: f64,
        #[serde(default)]
        rotation: f64,
    },
}

impl AnisotropySpec {
    pub fn build(&self) -> netflow_core::Result<Anisotropy> {
        Ok(match *self {
            Self::Euclidean { scale } => Anisotropy::Smooth(SmoothAnisotropy::euclidean(scale)?),
            Self::Cosine {
                base,
                amp,
                freq,
                phase,
            } => Anisotropy::Smooth(SmoothAnisotropy::cosine_with_phase(base, amp, freq, phase)?),
            Self::Crystalline { ref vertices } => {
                Anisotropy::Crystalline(CrystallinePolytope::new(vertices.clone())?)
            }
            Self::RegularPolygon {
                sides,
                side,
                rotation,
            } => Anisotropy::Crystalline(CrystallinePolytope::regular(sides, side, rotation)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub id: String,
    pub anisotropy: usize,
    pub points: Vec<Vec2>,
    #[serde(default)]
    pub closed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halfline: Option<Vec2>,
    /// Sampled smooth curve rather than a polygon.
    #[serde(default)]
    pub sampled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JunctionSpec {
    pub point: Vec2,
    pub ends: Vec<CurveEnd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub schema: u32,
    pub anisotropies: Vec<AnisotropySpec>,
    pub curves: Vec<CurveSpec>,
    #[serde(default)]
    pub junctions: Vec<JunctionSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported schema version {0} (expected {SCHEMA})")]
    Schema(u32),
}

impl NetworkSpec {
    pub fn parse(text: &str, path: &str) -> Result<Self, ReadError> {
        let spec: NetworkSpec = serde_json::from_str(text).map_err(|e| ReadError::Parse {
            path: path.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if spec.schema != SCHEMA {
            return Err(ReadError::Schema(spec.schema));
        }
        Ok(spec)
    }

    pub fn read(path: &str) -> Result<Self, ReadError> {
        let text = std::fs::read_to_string(path).map_err(|source| ReadError::Io {
            path: path.to_string(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn table(&self) -> netflow_core::Result<Vec<Anisotropy>> {
        self.anisotropies
            .iter()
            .map(AnisotropySpec::build)
            .collect()
    }

    pub fn network(&self) -> netflow_core::Result<Network> {
        let curves = self
            .curves
            .iter()
            .map(|c| Curve {
                id: c.id.clone(),
                anisotropy: c.anisotropy,
                kind: if c.sampled {
                    CurveKind::Sampled
                } else {
                    CurveKind::Polyline
                },
                points: c.points.clone(),
                closed: c.closed,
                halfline: c.halfline,
                phases: c.phases,
            })
            .collect();
        let junctions = self
            .junctions
            .iter()
            .map(|j| Junction {
                point: j.point,
                ends: j.ends.clone(),
            })
            .collect();
        Network::new(curves, junctions)
    }

    /// Describes `net` with the given anisotropy table.
    pub fn from_network(net: &Network, anisotropies: Vec<AnisotropySpec>) -> Self {
        Self {
            schema: SCHEMA,
            anisotropies,
            curves: net
                .curves()
                .iter()
                .map(|c| CurveSpec {
                    id: c.id.clone(),
                    anisotropy: c.anisotropy,
                    points: c.points.clone(),
                    closed: c.closed,
                    halfline: c.halfline,
                    sampled: c.kind == CurveKind::Sampled,
                    phases: c.phases,
                })
                .collect(),
            junctions: net
                .junctions()
                .iter()
                .map(|j| JunctionSpec {
                    point: j.point,
                    ends: j.ends.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network spec serializes")
    }
}
