//! Discretized 3-D command-velocity space.
//!
//! Axes are fixed as `(v_x, v_y, omega_z)`. The grid lives in a normalized
//! domain (default `[-1, 1]` per axis) and is mapped to physical units by a
//! per-axis linear [`AxisScale`]. Bins are addressed row-major with `x` as
//! the outer axis and `z` as the inner one; checkpoints persist these
//! indices, so the layout must not change.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const AXES: usize = 3;

/// Positions within this many cell widths of a grid line are treated as on it.
const SNAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BinId(pub usize);

impl BinId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BinCoords {
    pub ix: usize,
    pub iy: usize,
    pub iz: usize,
}

impl BinCoords {
    pub fn new(ix: usize, iy: usize, iz: usize) -> Self {
        Self { ix, iy, iz }
    }

    fn as_array(self) -> [usize; AXES] {
        [self.ix, self.iy, self.iz]
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Intersection, or `None` when the intervals are disjoint.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }
}

pub type CellBox = [Interval; AXES];

/// A velocity command in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub v_x: f64,
    pub v_y: f64,
    pub omega_z: f64,
}

impl Command {
    pub fn from_array(a: [f64; AXES]) -> Self {
        Self {
            v_x: a[0],
            v_y: a[1],
            omega_z: a[2],
        }
    }

    pub fn as_array(&self) -> [f64; AXES] {
        [self.v_x, self.v_y, self.omega_z]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandGrid {
    axis_bins: [usize; AXES],
    axis_domain: [Interval; AXES],
}

impl Default for CommandGrid {
    fn default() -> Self {
        Self::new([20, 10, 20]).expect("default grid is valid")
    }
}

impl CommandGrid {
    /// Grid over the default normalized domain `[-1, 1]^3`.
    pub fn new(axis_bins: [usize; AXES]) -> Result<Self> {
        Self::with_domain(axis_bins, [Interval::new(-1.0, 1.0); AXES])
    }

    pub fn with_domain(axis_bins: [usize; AXES], axis_domain: [Interval; AXES]) -> Result<Self> {
        for (a, &n) in axis_bins.iter().enumerate() {
            if n == 0 {
                return Err(Error::config(format!("grid.bins[{a}]"), "must be positive"));
            }
        }
        for (a, d) in axis_domain.iter().enumerate() {
            if !(d.lo.is_finite() && d.hi.is_finite() && d.lo < d.hi) {
                return Err(Error::config(
                    format!("grid.domain[{a}]"),
                    "needs finite lo < hi",
                ));
            }
        }
        Ok(Self {
            axis_bins,
            axis_domain,
        })
    }

    pub fn axis_bins(&self) -> [usize; AXES] {
        self.axis_bins
    }

    pub fn axis_domain(&self) -> [Interval; AXES] {
        self.axis_domain
    }

    /// Total bin count `N = n_x * n_y * n_z`.
    pub fn len(&self) -> usize {
        self.axis_bins.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_width(&self, axis: usize) -> f64 {
        self.axis_domain[axis].width() / self.axis_bins[axis] as f64
    }

    pub fn linear_index(&self, coords: BinCoords) -> Result<BinId> {
        let [nx, ny, nz] = self.axis_bins;
        if coords.ix >= nx || coords.iy >= ny || coords.iz >= nz {
            return Err(Error::Addressing(format!(
                "coords {coords:?} outside grid {nx}x{ny}x{nz}"
            )));
        }
        Ok(BinId(coords.ix * ny * nz + coords.iy * nz + coords.iz))
    }

    pub fn coords_of(&self, id: BinId) -> Result<BinCoords> {
        self.check(id)?;
        let [_, ny, nz] = self.axis_bins;
        let i = id.0;
        Ok(BinCoords {
            ix: i / (ny * nz),
            iy: (i / nz) % ny,
            iz: i % nz,
        })
    }

    pub fn check(&self, id: BinId) -> Result<()> {
        if id.0 >= self.len() {
            return Err(Error::Addressing(format!(
                "bin index {} out of range for N = {}",
                id.0,
                self.len()
            )));
        }
        Ok(())
    }

    fn axis_cell(&self, axis: usize, i: usize) -> Interval {
        let d = self.axis_domain[axis];
        let n = self.axis_bins[axis];
        let w = self.cell_width(axis);
        let lo = d.lo + i as f64 * w;
        let hi = if i + 1 == n { d.hi } else { d.lo + (i + 1) as f64 * w };
        Interval { lo, hi }
    }

    /// Normalized-domain box of a bin.
    pub fn bin_cell(&self, id: BinId) -> Result<CellBox> {
        let c = self.coords_of(id)?.as_array();
        Ok([0, 1, 2].map(|a| self.axis_cell(a, c[a])))
    }

    /// `{0,1}^N` indicator of `id`.
    pub fn one_hot(&self, id: BinId) -> Result<Vec<f64>> {
        self.check(id)?;
        let mut x = vec![0.0; self.len()];
        x[id.0] = 1.0;
        Ok(x)
    }

    /// Range of cell indices on `axis` whose cells overlap the normalized
    /// interval `[a, b]`. A zero-width interval selects the cells containing
    /// the point, which is two cells when it sits on a grid line.
    fn axis_overlap(&self, axis: usize, a: f64, b: f64) -> Option<(usize, usize)> {
        let d = self.axis_domain[axis];
        let n = self.axis_bins[axis];
        let a = a.max(d.lo);
        let b = b.min(d.hi);
        if a > b {
            return None;
        }
        let w = self.cell_width(axis);
        let snap = |p: f64| {
            let r = p.round();
            if (p - r).abs() < SNAP_TOL {
                r
            } else {
                p
            }
        };
        let pa = snap((a - d.lo) / w);
        let pb = snap((b - d.lo) / w);
        let last = n as f64 - 1.0;
        if pb > pa {
            let lo = pa.floor().clamp(0.0, last);
            let hi = (pb.ceil() - 1.0).clamp(0.0, last);
            Some((lo as usize, hi as usize))
        } else if pa.fract() == 0.0 {
            let k = pa;
            Some(((k - 1.0).clamp(0.0, last) as usize, k.clamp(0.0, last) as usize))
        } else {
            let k = pa.floor().clamp(0.0, last) as usize;
            Some((k, k))
        }
    }

    /// Bins whose cells overlap the active box `±v_max` (physical units).
    ///
    /// Overlap rather than containment decides membership, so partially
    /// covered frontier cells stay available. The result is sorted.
    pub fn bins_in_range(&self, range: &ActiveRange, scale: &AxisScale) -> Result<Vec<BinId>> {
        let mut spans = [(0usize, 0usize); AXES];
        for a in 0..AXES {
            let half = range.v_max[a] / scale.factor[a];
            spans[a] = self.axis_overlap(a, -half, half).ok_or_else(|| {
                Error::config(
                    format!("range.v_max[{a}]"),
                    "active range does not intersect the grid domain",
                )
            })?;
        }
        let [nx, ny, nz] = self.axis_bins;
        debug_assert!(spans[0].1 < nx && spans[1].1 < ny && spans[2].1 < nz);
        let mut out = Vec::with_capacity(
            (spans[0].1 - spans[0].0 + 1) * (spans[1].1 - spans[1].0 + 1) * (spans[2].1 - spans[2].0 + 1),
        );
        for ix in spans[0].0..=spans[0].1 {
            for iy in spans[1].0..=spans[1].1 {
                for iz in spans[2].0..=spans[2].1 {
                    out.push(BinId(ix * ny * nz + iy * nz + iz));
                }
            }
        }
        if out.is_empty() {
            return Err(Error::config("range.v_max", "no bins in the active range"));
        }
        Ok(out)
    }

    /// Physical-unit box of `cell ∩ ±v_max`, or `None` on an empty axis.
    pub fn active_cell(&self, id: BinId, range: &ActiveRange, scale: &AxisScale) -> Result<Option<CellBox>> {
        let cell = self.bin_cell(id)?;
        let mut out = [Interval::new(0.0, 0.0); AXES];
        for a in 0..AXES {
            let phys = scale.to_physical(a, cell[a]);
            let bound = Interval::new(-range.v_max[a], range.v_max[a]);
            match phys.intersect(&bound) {
                Some(iv) => out[a] = iv,
                None => return Ok(None),
            }
        }
        Ok(Some(out))
    }

    /// Draw a command uniformly from `cell ∩ ±v_max`.
    pub fn sample_command<R: Rng + ?Sized>(
        &self,
        id: BinId,
        range: &ActiveRange,
        scale: &AxisScale,
        rng: &mut R,
    ) -> Result<Command> {
        let region = self.active_cell(id, range, scale)?.ok_or_else(|| {
            Error::Sampling(format!("bin {} does not intersect the active range", id.0))
        })?;
        let mut v = [0.0; AXES];
        for a in 0..AXES {
            let iv = region[a];
            let u: f64 = rng.random();
            v[a] = if iv.width() > 0.0 {
                (iv.lo + u * iv.width()).min(iv.hi)
            } else {
                iv.lo
            };
        }
        Ok(Command::from_array(v))
    }
}

/// Linear per-axis map from the normalized grid domain to physical units:
/// `physical = normalized * factor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisScale {
    pub factor: [f64; AXES],
}

impl AxisScale {
    /// Maps `[-1, 1]` onto `[-cap, cap]` per axis.
    pub fn from_caps(cap: [f64; AXES]) -> Self {
        Self { factor: cap }
    }

    pub fn to_physical(&self, axis: usize, iv: Interval) -> Interval {
        Interval::new(iv.lo * self.factor[axis], iv.hi * self.factor[axis])
    }
}

/// Success-gated symmetric command envelope `±v_max`, capped per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActiveRange {
    pub v_max: [f64; AXES],
    pub cap: [f64; AXES],
    pub step: [f64; AXES],
}

impl ActiveRange {
    pub fn new(v_max: [f64; AXES], cap: [f64; AXES], step: [f64; AXES]) -> Result<Self> {
        for a in 0..AXES {
            if !(v_max[a] > 0.0 && v_max[a] <= cap[a] && cap[a].is_finite()) {
                return Err(Error::config(
                    format!("range.initial[{a}]"),
                    format!("need 0 < v_max ({}) <= cap ({})", v_max[a], cap[a]),
                ));
            }
            if !(step[a] >= 0.0 && step[a].is_finite()) {
                return Err(Error::config(format!("range.step[{a}]"), "must be >= 0"));
            }
        }
        Ok(Self { v_max, cap, step })
    }

    /// `v_max <- min(v_max + step, cap)` on success, unchanged otherwise.
    pub fn expand(&self, success: bool) -> ActiveRange {
        if !success {
            return *self;
        }
        let mut next = *self;
        for a in 0..AXES {
            next.v_max[a] = (self.v_max[a] + self.step[a]).min(self.cap[a]);
        }
        next
    }

    pub fn at_cap(&self, axis: usize) -> bool {
        self.v_max[axis] >= self.cap[axis]
    }
}

/// Success rule for range expansion: windowed mean of per-episode utility
/// at or above a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessCriterion {
    pub window: usize,
    pub threshold: f64,
}

impl Default for SuccessCriterion {
    fn default() -> Self {
        Self {
            window: 50,
            threshold: 0.8,
        }
    }
}

impl SuccessCriterion {
    /// Evaluates the last `window` utilities. Returns `false` while fewer
    /// than `window` values are available.
    pub fn is_met(&self, recent: &[f64]) -> bool {
        if self.window == 0 || recent.len() < self.window {
            return false;
        }
        let tail = &recent[recent.len() - self.window..];
        tail.iter().sum::<f64>() / self.window as f64 >= self.threshold
    }
}
