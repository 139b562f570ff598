use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::KVector;

/// Geometry of a programmable illuminator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeometryConfig {
    /// Square LED lattice; every lattice point with `|k| <= extent_na` is lit.
    PlanarGrid { pitch_na: f64, extent_na: f64 },
    /// Central planar board plus four boards hinged at its edges.
    DomeBoards(DomeConfig),
}

impl GeometryConfig {
    pub fn planar(pitch_na: f64, extent_na: f64) -> Self {
        GeometryConfig::PlanarGrid { pitch_na, extent_na }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomeConfig {
    /// Height of the central board above the sample, mm.
    pub height_mm: f64,
    /// LED pitch on every board, mm.
    pub pitch_mm: f64,
    /// The central board holds `(2 * center_half + 1)²` LEDs.
    pub center_half: usize,
    /// LED rows on each side board, counted outward from the hinge.
    pub side_rows: usize,
    /// LED columns across each side board (odd).
    pub side_cols: usize,
    /// Side-board tilt below the central plane, degrees.
    pub tilt_deg: f64,
}

impl Default for DomeConfig {
    fn default() -> Self {
        DomeConfig { height_mm: 60.0, pitch_mm: 6.0, center_half: 4, side_rows: 5, side_cols: 9, tilt_deg: 45.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IlluminatorKind {
    PlanarGrid,
    DomeBoards,
}

/// Rotation, shift and scale of an illuminator about DC, in NA space.
///
/// Applied as `v -> scale · Rot(rotation) · v + shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub rotation_deg: f64,
    pub shift_na: [f64; 2],
    pub scale: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation::IDENTITY
    }
}

impl Perturbation {
    pub const IDENTITY: Perturbation = Perturbation { rotation_deg: 0.0, shift_na: [0.0, 0.0], scale: 1.0 };

    pub fn new(rotation_deg: f64, shift_na: [f64; 2], scale: f64) -> Self {
        Perturbation { rotation_deg, shift_na, scale }
    }

    pub fn rotation(deg: f64) -> Self {
        Perturbation { rotation_deg: deg, ..Self::IDENTITY }
    }

    pub fn shift(shift_na: [f64; 2]) -> Self {
        Perturbation { shift_na, ..Self::IDENTITY }
    }

    pub fn scaled(scale: f64) -> Self {
        Perturbation { scale, ..Self::IDENTITY }
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        let (s, c) = sin_cos_deg(self.rotation_deg);
        let x = self.scale * v[0];
        let y = self.scale * v[1];
        [c * x - s * y + self.shift_na[0], s * x + c * y + self.shift_na[1]]
    }
}

/// `sin`/`cos` of an angle in degrees, exact at multiples of 90°.
pub fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let quarter = deg / 90.0;
    if quarter.fract() == 0.0 && quarter.abs() < 1e15 {
        match (quarter as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        deg.to_radians().sin_cos()
    }
}

/// Source positions of an illuminator in NA units, one entry per LED.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlluminatorModel {
    pub geometry: GeometryConfig,
    /// Illumination direction `(sin θx, sin θy)` per source.
    pub positions: Vec<[f64; 2]>,
    /// Board id per source; all zero for a planar grid.
    pub boards: Vec<usize>,
    /// False once a perturbation pushed the source to `|NA| >= 1`.
    pub usable: Vec<bool>,
    /// Perturbations applied so far, oldest first.
    pub perturbations: Vec<Perturbation>,
}

impl IlluminatorModel {
    pub fn kind(&self) -> IlluminatorKind {
        match self.geometry {
            GeometryConfig::PlanarGrid { .. } => IlluminatorKind::PlanarGrid,
            GeometryConfig::DomeBoards(_) => IlluminatorKind::DomeBoards,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn board_count(&self) -> usize {
        self.boards.iter().copied().max().map_or(0, |b| b + 1)
    }

    pub fn kvectors(&self, wavelength: f64) -> Vec<KVector> {
        self.positions.iter().map(|&p| KVector::from_na(p, wavelength)).collect()
    }

    fn from_positions(geometry: GeometryConfig, positions: Vec<[f64; 2]>, boards: Vec<usize>) -> Self {
        let usable = positions.iter().map(|p| p[0].hypot(p[1]) < 1.0).collect();
        IlluminatorModel { geometry, positions, boards, usable, perturbations: Vec::new() }
    }

    /// Moves every source on `board` by its own NA offset.
    pub fn with_board_shifts(&self, shifts: &[[f64; 2]]) -> Self {
        let mut out = self.clone();
        for (p, &b) in out.positions.iter_mut().zip(&self.boards) {
            if let Some(s) = shifts.get(b) {
                p[0] += s[0];
                p[1] += s[1];
            }
        }
        out.refresh_usable();
        out
    }

    /// Smooth radial warp `v -> v (1 + coeff |v|²)`, a stand-in for sample-induced bending.
    pub fn with_radial_warp(&self, coeff: f64) -> Self {
        let mut out = self.clone();
        for p in out.positions.iter_mut() {
            let g = 1.0 + coeff * (p[0] * p[0] + p[1] * p[1]);
            p[0] *= g;
            p[1] *= g;
        }
        out.refresh_usable();
        out
    }

    fn refresh_usable(&mut self) {
        for (i, p) in self.positions.iter().enumerate() {
            if self.usable[i] && p[0].hypot(p[1]) >= 1.0 {
                warn!("source {i} pushed to NA {:.3}; marked unusable", p[0].hypot(p[1]));
                self.usable[i] = false;
            }
        }
    }
}

pub fn build_illuminator(geometry: &GeometryConfig) -> Result<IlluminatorModel> {
    match geometry {
        GeometryConfig::PlanarGrid { pitch_na, extent_na } => {
            let (pitch, extent) = (*pitch_na, *extent_na);
            if !(pitch > 0.0 && pitch.is_finite()) {
                return Err(Error::InvalidConfig(format!("grid pitch {pitch} must be positive")));
            }
            if !(extent >= 0.0) {
                return Err(Error::InvalidConfig(format!("grid extent {extent} must be non-negative")));
            }
            if extent >= 1.0 {
                return Err(Error::UnphysicalNa(extent));
            }
            // Compare in lattice units so points exactly on the rim are kept.
            let ratio = extent / pitch;
            let limit = ratio * ratio * (1.0 + 1e-9) + 1e-12;
            let n = (ratio + 1e-9).floor() as i64;
            let mut positions = Vec::new();
            for j in -n..=n {
                for i in -n..=n {
                    if ((i * i + j * j) as f64) <= limit {
                        positions.push([i as f64 * pitch, j as f64 * pitch]);
                    }
                }
            }
            let boards = vec![0; positions.len()];
            Ok(IlluminatorModel::from_positions(geometry.clone(), positions, boards))
        }
        GeometryConfig::DomeBoards(cfg) => build_dome(geometry, cfg),
    }
}

fn build_dome(geometry: &GeometryConfig, cfg: &DomeConfig) -> Result<IlluminatorModel> {
    if !(cfg.height_mm > 0.0 && cfg.pitch_mm > 0.0) {
        return Err(Error::InvalidConfig("dome height and pitch must be positive".into()));
    }
    if cfg.side_cols.is_multiple_of(2) {
        return Err(Error::InvalidConfig("dome side boards need an odd column count".into()));
    }
    let p = cfg.pitch_mm;
    let h = cfg.center_half as i64;
    let mut points: Vec<([f64; 3], usize)> = Vec::new();
    for j in -h..=h {
        for i in -h..=h {
            points.push(([i as f64 * p, j as f64 * p, cfg.height_mm], 0));
        }
    }
    let hinge = (h as f64 + 0.5) * p;
    let (st, ct) = cfg.tilt_deg.to_radians().sin_cos();
    let half_cols = (cfg.side_cols / 2) as i64;
    let dirs = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
    for (b, d) in dirs.iter().enumerate() {
        for row in 0..cfg.side_rows {
            let along = (row as f64 + 0.5) * p;
            let radial = hinge + along * ct;
            let z = cfg.height_mm - along * st;
            if z <= 0.0 {
                return Err(Error::InvalidConfig("dome side board reaches the sample plane".into()));
            }
            for col in -half_cols..=half_cols {
                let lateral = col as f64 * p;
                // lateral axis is perpendicular to the board direction
                let x = d[0] * radial - d[1] * lateral;
                let y = d[1] * radial + d[0] * lateral;
                points.push(([x, y, z], b + 1));
            }
        }
    }
    let mut positions = Vec::with_capacity(points.len());
    let mut boards = Vec::with_capacity(points.len());
    for ([x, y, z], b) in points {
        let r = (x * x + y * y + z * z).sqrt();
        positions.push([x / r, y / r]);
        boards.push(b);
    }
    Ok(IlluminatorModel::from_positions(geometry.clone(), positions, boards))
}

/// Applies `p` to every source; sources leaving the unit NA disk are flagged, not removed.
pub fn apply_perturbation(model: &IlluminatorModel, p: &Perturbation) -> IlluminatorModel {
    let mut out = model.clone();
    for v in out.positions.iter_mut() {
        *v = p.apply(*v);
    }
    out.refresh_usable();
    out.perturbations.push(*p);
    out
}
