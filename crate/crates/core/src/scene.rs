//! Multiple-access scenes: a receiver block plus one N x N transmitter grid
//! per user, each user radiating one topology pattern.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coil::{build_grid, CoilPose, CoilSpec, ElectricalParams, GridLayout, MutualModel, Vec3};
use crate::error::{invalid, Error, Result};
use crate::modulation::{NetworkSymbol, TopologySymbol};
use crate::network::{CoupledNetwork, NetworkLayout};

/// One geometry the blind detector averages over: transmitters at
/// `distance` along their placement axes, grid normals along `normal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometrySample {
    pub distance: f64,
    pub normal: Vec3,
}

impl GeometrySample {
    pub fn facing(distance: f64) -> Self {
        Self {
            distance,
            normal: Vec3::z(),
        }
    }
}

/// Uniform grid of `count` distances over `[lo, hi]` with a fixed normal.
pub fn distance_prior(lo: f64, hi: f64, count: usize, normal: Vec3) -> Result<Vec<GeometrySample>> {
    if count == 0 || !(lo > 0.0) || hi < lo {
        return Err(invalid("prior", format!("need count >= 1 and 0 < lo <= hi, got {count} over [{lo}, {hi}]")));
    }
    Ok((0..count)
        .map(|i| {
            let d = if count == 1 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (count - 1) as f64
            };
            GeometrySample { distance: d, normal }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacScene {
    pub spec: CoilSpec,
    pub params: ElectricalParams,
    pub z_load: f64,
    pub grid_side: usize,
    pub delta_c: f64,
    pub receiver: Vec<CoilPose>,
    pub loaded: usize,
    /// Unit direction from the receiver to each transmitter grid center.
    pub directions: Vec<Vec3>,
    pub distance: f64,
    pub tx_normal: Vec3,
    pub patterns: Vec<TopologySymbol>,
    pub model: MutualModel,
}

impl MacScene {
    /// Two transmitters facing a single loaded receiver coil at the origin
    /// from (0, 0, -D) and (0, 0, +D); 3 x 3 grids with patterns
    /// {1,2,3,4,5} and {1,3,7,8,9}; 1 mm grid gap; Z_L = R.
    pub fn two_user(distance: f64, f0: f64) -> Result<Self> {
        let params = ElectricalParams::table_defaults(f0)?;
        let spec = CoilSpec::reference(f0);
        let scene = Self {
            spec,
            params,
            z_load: params.resistance,
            grid_side: 3,
            delta_c: 1e-3,
            receiver: vec![CoilPose::at(0.0, 0.0, 0.0)],
            loaded: 1,
            directions: vec![-Vec3::z(), Vec3::z()],
            distance,
            tx_normal: Vec3::z(),
            patterns: vec![
                TopologySymbol::new(vec![1, 2, 3, 4, 5], 3)?,
                TopologySymbol::new(vec![1, 3, 7, 8, 9], 3)?,
            ],
            model: MutualModel::default(),
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if !(self.distance > 0.0) {
            return Err(invalid("distance", "must be > 0"));
        }
        if self.directions.is_empty() {
            return Err(invalid("directions", "need at least one transmitter"));
        }
        if self.patterns.len() < 2 {
            return Err(invalid("patterns", "need at least two patterns"));
        }
        let t = self.patterns[0].len();
        if self.patterns.iter().any(|p| p.len() != t) {
            return Err(Error::Layout("all patterns must activate the same number of coils".into()));
        }
        let cells = self.grid_side * self.grid_side;
        if self.patterns.iter().flat_map(|p| p.active()).any(|&i| i > cells) {
            return Err(Error::Layout(format!("pattern index beyond {cells} grid cells")));
        }
        Ok(())
    }

    /// Number of users including the receiver (K).
    pub fn users(&self) -> usize {
        self.directions.len() + 1
    }

    pub fn at_distance(&self, distance: f64) -> Self {
        Self {
            distance,
            ..self.clone()
        }
    }

    pub fn with_geometry(&self, g: &GeometrySample) -> Self {
        Self {
            distance: g.distance,
            tx_normal: g.normal,
            ..self.clone()
        }
    }

    pub fn grid(&self, tx: usize) -> Result<GridLayout> {
        let dir = self.directions.get(tx).ok_or(Error::Index {
            index: tx,
            lo: 0,
            hi: self.directions.len() - 1,
        })?;
        let origin = CoilPose::new(dir.normalize() * self.distance, self.tx_normal)?;
        build_grid(self.grid_side, &self.spec, self.delta_c, &origin)
    }

    /// Layout of symbol `symbol`: for concurrent symbols transmitter j uses
    /// `patterns[j]`; a single-entry symbol is applied to every transmitter.
    pub fn layout(&self, symbol: &NetworkSymbol) -> Result<NetworkLayout> {
        let n_tx = self.directions.len();
        let per_tx = |j: usize| -> Result<usize> {
            let p = if symbol.patterns.len() == 1 {
                symbol.patterns[0]
            } else {
                *symbol.patterns.get(j).ok_or(Error::Dimension {
                    expected: n_tx,
                    got: symbol.patterns.len(),
                })?
            };
            if p >= self.patterns.len() {
                return Err(Error::Index {
                    index: p,
                    lo: 0,
                    hi: self.patterns.len() - 1,
                });
            }
            Ok(p)
        };
        if symbol.patterns.len() != 1 && symbol.patterns.len() != n_tx {
            return Err(Error::Dimension {
                expected: n_tx,
                got: symbol.patterns.len(),
            });
        }
        let mut blocks = Vec::with_capacity(n_tx);
        for j in 0..n_tx {
            let grid = self.grid(j)?;
            let pattern = &self.patterns[per_tx(j)?];
            blocks.push(pattern.active().iter().map(|&i| grid.poses[i - 1]).collect::<Vec<_>>());
        }
        NetworkLayout::new(&self.receiver, self.loaded, &blocks)
    }

    pub fn network(&self, symbol: &NetworkSymbol) -> Result<CoupledNetwork> {
        CoupledNetwork::new(self.layout(symbol)?, &self.spec, self.params, self.z_load, &self.model)
    }

    pub fn networks(&self, constellation: &[NetworkSymbol]) -> Result<Vec<CoupledNetwork>> {
        constellation.iter().map(|s| self.network(s)).collect()
    }
}

/// Random network for route cross-checks: 1 or 2 receiver coils (the first
/// loaded), 1 to 3 transmitters of at least 2 coils each, total at most
/// `max_total`. Coil centers are drawn in a cube of side `extent` and kept
/// at least `min_gap` apart; normals are uniform on the sphere.
pub fn random_layout<R: Rng + ?Sized>(
    rng: &mut R,
    max_total: usize,
    extent: f64,
    min_gap: f64,
) -> Result<NetworkLayout> {
    if max_total < 3 {
        return Err(invalid("max_total", "need room for a receiver and one two-coil transmitter"));
    }
    let receivers = if max_total >= 5 { rng.random_range(1..=2) } else { 1 };
    let room = max_total - receivers;
    let tx = rng.random_range(1..=(room / 2).min(3));
    let per = rng.random_range(2..=room / tx);
    let count = receivers + tx * per;
    let mut centers: Vec<Vec3> = Vec::with_capacity(count);
    let mut attempts = 0;
    while centers.len() < count {
        attempts += 1;
        if attempts > 100_000 {
            return Err(invalid("extent", "cannot place coils with the requested gap"));
        }
        let c = Vec3::new(
            rng.random_range(-0.5..0.5) * extent,
            rng.random_range(-0.5..0.5) * extent,
            rng.random_range(-0.5..0.5) * extent,
        );
        if centers.iter().all(|o| (o - c).norm() >= min_gap) {
            centers.push(c);
        }
    }
    let mut poses = Vec::with_capacity(count);
    for c in centers {
        let n = loop {
            let v = Vec3::new(
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            );
            if v.norm() > 1e-3 {
                break v;
            }
        };
        poses.push(CoilPose::new(c, n)?);
    }
    let blocks: Vec<Vec<CoilPose>> = (0..tx)
        .map(|j| poses[receivers + j * per..receivers + (j + 1) * per].to_vec())
        .collect();
    NetworkLayout::new(&poses[..receivers], 1, &blocks)
}
