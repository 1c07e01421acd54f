//! Disjunctive normal level set representation.
//!
//! A shape is the union of `N` convex polytopes, each the intersection of `M`
//! half-planes. Every half-plane is relaxed to a logistic sigmoid, every
//! polytope to the product of its sigmoids `g_i`, and the union to
//! `f = 1 - prod_i (1 - g_i)`. The foreground is `f > 0.5`.
//!
//! Each polytope carries a local [`Frame`]: half-space parameters act on
//! `u = (x - origin) / scale` rather than raw pixel coordinates, so weight and
//! bias gradients have comparable magnitude. The represented function class is
//! unchanged; with the identity frame the formulas reduce to `sigma(s (w.x + b))`.
//!
//! Evaluation at a pixel only visits the polytopes `N(x)` homed in the
//! `neighbor_cells x neighbor_cells` block of grid cells around the pixel.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Mask;

/// A point in pixel coordinates, `[x, y]` = `[column, row]`. Pixel centers sit
/// on integer coordinates.
pub type Point = [f64; 2];

/// Sigmoid inputs are clamped to this magnitude.
pub const ACTIVATION_CLAMP: f64 = 500.0;

/// A polytope whose negative face activations sum below this value has
/// `g < e^-20 ~ 2.1e-9` (because `sigma(z) <= e^z`) and is skipped.
pub const PRUNE_ACTIVATION: f64 = -20.0;

/// Logistic sigmoid `1 / (1 + e^-z)` with the input clamped to `+-500`.
#[inline]
pub fn logistic(z: f64) -> f64 {
    logistic_pair(z).0
}

/// Returns `(sigma(z), 1 - sigma(z))`, both computed without cancellation.
#[inline]
pub fn logistic_pair(z: f64) -> (f64, f64) {
    let z = z.clamp(-ACTIVATION_CLAMP, ACTIVATION_CLAMP);
    if z >= 0.0 {
        let e = (-z).exp();
        let d = 1.0 + e;
        (1.0 / d, e / d)
    } else {
        let e = z.exp();
        let d = 1.0 + e;
        (e / d, 1.0 / d)
    }
}

/// One linear discriminant. Its interior is `weights . u + bias >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub weights: [f64; 2],
    pub bias: f64,
}

impl HalfSpace {
    pub fn new(weights: [f64; 2], bias: f64) -> Self {
        Self { weights, bias }
    }

    /// Half-plane whose outward unit normal points at `angle` and whose face
    /// lies at `distance` from the origin, which is therefore interior.
    pub fn face(angle: f64, distance: f64) -> Self {
        let (sin, cos) = angle.sin_cos();
        Self {
            weights: [-cos, -sin],
            bias: distance,
        }
    }

    #[inline]
    pub fn activation(&self, u: Point) -> f64 {
        self.weights[0] * u[0] + self.weights[1] * u[1] + self.bias
    }

    pub fn is_finite(&self) -> bool {
        self.weights[0].is_finite() && self.weights[1].is_finite() && self.bias.is_finite()
    }
}

/// Evaluates `sigma(gain * (w . u + b))`.
#[inline]
pub fn eval_sigmoid(hs: &HalfSpace, u: Point, gain: f64) -> f64 {
    logistic(gain * hs.activation(u))
}

/// Affine map from pixel coordinates into a polytope's parameter space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub origin: Point,
    pub scale: f64,
}

impl Frame {
    pub const IDENTITY: Frame = Frame {
        origin: [0.0, 0.0],
        scale: 1.0,
    };

    #[inline]
    pub fn to_local(&self, x: Point) -> Point {
        [
            (x[0] - self.origin[0]) / self.scale,
            (x[1] - self.origin[1]) / self.scale,
        ]
    }
}

impl Default for Frame {
    fn default() -> Self {
        Frame::IDENTITY
    }
}

/// Conjunction of half-spaces, `g(x) = prod_j sigma_j(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    pub halfspaces: Vec<HalfSpace>,
    /// Region index, 0-based. Two-phase models leave every label at 0.
    pub label: usize,
    /// Soft centroid of `g` in pixel coordinates; decides the home grid cell.
    pub centroid: Point,
    pub frame: Frame,
}

impl Polytope {
    /// A polytope in the identity frame.
    pub fn new(halfspaces: Vec<HalfSpace>) -> Self {
        Self {
            halfspaces,
            label: 0,
            centroid: [0.0, 0.0],
            frame: Frame::IDENTITY,
        }
    }

    /// Regular `m`-gon centered at `center` with faces at distance `radius`.
    /// The frame is centered on the polygon and scaled by `radius`, so every
    /// face starts with a unit-norm weight vector and bias 1.
    pub fn regular(center: Point, radius: f64, m: usize) -> Self {
        let halfspaces = (0..m)
            .map(|j| HalfSpace::face(2.0 * PI * j as f64 / m as f64, 1.0))
            .collect();
        Self {
            halfspaces,
            label: 0,
            centroid: center,
            frame: Frame {
                origin: center,
                scale: radius,
            },
        }
    }

    /// Sigmoid gain for a given steepness (per pixel).
    #[inline]
    pub fn gain(&self, steepness: f64) -> f64 {
        steepness * self.frame.scale
    }

    pub fn eval(&self, x: Point, steepness: f64) -> f64 {
        let u = self.frame.to_local(x);
        let gain = self.gain(steepness);
        self.halfspaces
            .iter()
            .map(|hs| eval_sigmoid(hs, u, gain))
            .product()
    }

    /// Center of the frame in pixel coordinates.
    pub fn anchor(&self) -> Point {
        self.frame.origin
    }
}

/// `g_i(x)` for a polytope.
pub fn eval_polytope(p: &Polytope, x: Point, steepness: f64) -> f64 {
    p.eval(x, steepness)
}

/// Model construction knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_polytopes: usize,
    pub m_halfspaces: usize,
    /// Initial face distance as a fraction of the grid spacing.
    pub init_radius_fraction: f64,
    /// Sigmoid sharpness per pixel.
    pub steepness: f64,
    /// Side, in grid cells, of the block that defines a pixel's neighborhood.
    pub neighbor_cells: usize,
    /// Largest distance, in grid spacings, a face may sit from its polytope's
    /// centroid. Keeps every boundary inside the block of pixels that can see
    /// it; infinity disables the limit.
    #[serde(default = "default_max_reach")]
    pub max_reach: f64,
    /// Smallest face weight norm, relative to the initial unit normals. Faces
    /// that flatten below it are rescaled, boundary kept; zero disables.
    #[serde(default = "default_min_face_norm")]
    pub min_face_norm: f64,
}

fn default_max_reach() -> f64 {
    1.0
}

fn default_min_face_norm() -> f64 {
    1.0
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_polytopes: 100,
            m_halfspaces: 16,
            init_radius_fraction: 0.4,
            steepness: 1.0,
            neighbor_cells: 3,
            max_reach: default_max_reach(),
            min_face_norm: default_min_face_norm(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_polytopes == 0 {
            return Err(Error::InvalidConfig("n_polytopes must be positive".into()));
        }
        if self.m_halfspaces == 0 {
            return Err(Error::InvalidConfig("m_halfspaces must be positive".into()));
        }
        if !(self.init_radius_fraction > 0.0 && self.init_radius_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "init_radius_fraction must lie in (0, 1)".into(),
            ));
        }
        if !(self.steepness > 0.0 && self.steepness.is_finite()) {
            return Err(Error::InvalidConfig("steepness must be positive".into()));
        }
        if !(self.max_reach > 0.0) {
            return Err(Error::InvalidConfig("max_reach must be positive".into()));
        }
        if !(self.min_face_norm >= 0.0 && self.min_face_norm.is_finite()) {
            return Err(Error::InvalidConfig("min_face_norm must be non-negative".into()));
        }
        if self.neighbor_cells == 0 || self.neighbor_cells % 2 == 0 {
            return Err(Error::InvalidConfig(
                "neighbor_cells must be an odd positive integer".into(),
            ));
        }
        Ok(())
    }

    /// Near-square factorization: `rows = floor(sqrt(N))`, `cols = ceil(N / rows)`.
    pub fn grid_dims(&self) -> (usize, usize) {
        let n = self.n_polytopes.max(1);
        let mut rows = (n as f64).sqrt().floor() as usize;
        while rows * rows > n {
            rows -= 1;
        }
        while (rows + 1) * (rows + 1) <= n {
            rows += 1;
        }
        let rows = rows.max(1);
        (rows, n.div_ceil(rows))
    }
}

/// The regular lattice of grid cells that home the polytopes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub cell_width: f64,
    pub cell_height: f64,
}

impl Grid {
    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    /// Grid cell `(row, col)` containing a point, clamped to the lattice.
    #[inline]
    pub fn cell_of(&self, x: Point) -> (usize, usize) {
        let col = ((x[0] + 0.5) / self.cell_width).floor();
        let row = ((x[1] + 0.5) / self.cell_height).floor();
        let clamp = |v: f64, n: usize| -> usize {
            if v.is_nan() || v < 0.0 {
                0
            } else {
                (v as usize).min(n - 1)
            }
        };
        (clamp(row, self.rows), clamp(col, self.cols))
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point {
        [
            (col as f64 + 0.5) * self.cell_width - 0.5,
            (row as f64 + 0.5) * self.cell_height - 0.5,
        ]
    }

    pub fn spacing(&self) -> f64 {
        self.cell_width.min(self.cell_height)
    }
}

/// Per-pixel evaluation of the polytopes in `N(x)` that are not negligible.
#[derive(Clone, Debug, Default)]
pub(crate) struct PixelEval {
    /// Polytope indices.
    pub active: Vec<usize>,
    pub g: Vec<f64>,
    /// `1 - sigma_ij` for each active polytope, `M` entries apiece.
    pub tails: Vec<f64>,
    pub local: Vec<Point>,
    pub gains: Vec<f64>,
}

impl PixelEval {
    pub fn clear(&mut self) {
        self.active.clear();
        self.g.clear();
        self.tails.clear();
        self.local.clear();
        self.gains.clear();
    }
}

/// `N` polytopes on a grid plus the neighbor index.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelSetModel {
    config: ModelConfig,
    grid: Grid,
    /// `(height, width)` in pixels.
    image_shape: (usize, usize),
    polytopes: Vec<Polytope>,
    #[serde(skip)]
    neighbors: Vec<Vec<usize>>,
}

const MODEL_DOC_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    version: u32,
    model: LevelSetModel,
}

impl LevelSetModel {
    /// Regularly spaced regular `M`-gons covering the image.
    pub fn init_grid(config: &ModelConfig, image_shape: (usize, usize)) -> Result<Self> {
        config.validate()?;
        let (height, width) = image_shape;
        let (rows, cols) = config.grid_dims();
        if height < rows || width < cols {
            return Err(Error::InvalidConfig(format!(
                "image {width}x{height} is smaller than the {cols}x{rows} polytope grid",
            )));
        }
        let grid = Grid {
            rows,
            cols,
            cell_width: width as f64 / cols as f64,
            cell_height: height as f64 / rows as f64,
        };
        let radius = config.init_radius_fraction * grid.spacing();
        let mut polytopes = Vec::with_capacity(rows * cols);
        for row in 0..rows {
            for col in 0..cols {
                let center = grid.cell_center(row, col);
                polytopes.push(Polytope::regular(center, radius, config.m_halfspaces));
            }
        }
        let mut model = Self {
            config: config.clone(),
            grid,
            image_shape,
            polytopes,
            neighbors: Vec::new(),
        };
        model.rehome();
        Ok(model)
    }

    /// Builds a model from explicit polytopes, homed by their centroids.
    pub fn from_polytopes(
        config: &ModelConfig,
        image_shape: (usize, usize),
        grid: Grid,
        polytopes: Vec<Polytope>,
    ) -> Result<Self> {
        config.validate()?;
        if polytopes
            .iter()
            .any(|p| p.halfspaces.len() != config.m_halfspaces)
        {
            return Err(Error::InvalidConfig(
                "every polytope must have m_halfspaces faces".into(),
            ));
        }
        let mut model = Self {
            config: config.clone(),
            grid,
            image_shape,
            polytopes,
            neighbors: Vec::new(),
        };
        model.rehome();
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn image_shape(&self) -> (usize, usize) {
        self.image_shape
    }

    pub fn steepness(&self) -> f64 {
        self.config.steepness
    }

    pub fn polytopes(&self) -> &[Polytope] {
        &self.polytopes
    }

    pub fn polytopes_mut(&mut self) -> &mut [Polytope] {
        &mut self.polytopes
    }

    pub fn len(&self) -> usize {
        self.polytopes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polytopes.is_empty()
    }

    pub fn m_halfspaces(&self) -> usize {
        self.config.m_halfspaces
    }

    pub fn labels(&self) -> Vec<usize> {
        self.polytopes.iter().map(|p| p.label).collect()
    }

    pub fn set_labels(&mut self, labels: &[usize]) {
        for (p, &l) in self.polytopes.iter_mut().zip(labels) {
            p.label = l;
        }
    }

    /// Grid cell index (row-major) a polytope is homed in.
    pub fn home_cell(&self, i: usize) -> usize {
        let (r, c) = self.grid.cell_of(self.polytopes[i].centroid);
        r * self.grid.cols + c
    }

    /// Recomputes home cells from the cached centroids and rebuilds the
    /// per-cell neighbor lists.
    pub fn rehome(&mut self) {
        let cells = self.grid.cells();
        let mut homed = vec![Vec::new(); cells];
        for i in 0..self.polytopes.len() {
            homed[self.home_cell(i)].push(i);
        }
        let half = (self.config.neighbor_cells / 2) as isize;
        let (rows, cols) = (self.grid.rows as isize, self.grid.cols as isize);
        let mut neighbors = Vec::with_capacity(cells);
        for r in 0..rows {
            for c in 0..cols {
                let mut list = Vec::new();
                for dr in -half..=half {
                    for dc in -half..=half {
                        let (rr, cc) = (r + dr, c + dc);
                        if rr >= 0 && rr < rows && cc >= 0 && cc < cols {
                            list.extend_from_slice(&homed[(rr * cols + cc) as usize]);
                        }
                    }
                }
                list.sort_unstable();
                neighbors.push(list);
            }
        }
        self.neighbors = neighbors;
    }

    /// `N(x)`: indices of the polytopes that participate at `x`.
    #[inline]
    pub fn neighborhood(&self, x: Point) -> &[usize] {
        let (r, c) = self.grid.cell_of(x);
        &self.neighbors[r * self.grid.cols + c]
    }

    /// Neighbor list of a grid cell (row-major index).
    pub fn cell_neighborhood(&self, cell: usize) -> &[usize] {
        &self.neighbors[cell]
    }

    /// Evaluates `f(x)`, or the region level set `f_r(x)` when `region` is given.
    /// An empty set of contributing polytopes yields 0.
    pub fn eval_level_set(&self, x: Point, region: Option<usize>) -> f64 {
        let s = self.config.steepness;
        let mut complement = 1.0;
        for &i in self.neighborhood(x) {
            let p = &self.polytopes[i];
            if region.is_some_and(|r| p.label != r) {
                continue;
            }
            if let Some(g) = pruned_eval(p, x, s) {
                complement *= 1.0 - g;
            }
        }
        1.0 - complement
    }

    /// `d f / d (w_ij1, w_ij2, b_ij)` at `x`.
    pub fn grad_f_wrt_params(&self, x: Point, i: usize, j: usize) -> Result<[f64; 3]> {
        self.grad_level_set_wrt_params(x, None, i, j)
    }

    /// Gradient of `f` (or of the region level set `f_r`) with respect to the
    /// parameters of half-space `j` of polytope `i`. A polytope outside `N(x)`
    /// is a contract violation; one outside the requested region has zero
    /// gradient.
    pub fn grad_level_set_wrt_params(
        &self,
        x: Point,
        region: Option<usize>,
        i: usize,
        j: usize,
    ) -> Result<[f64; 3]> {
        let hood = self.neighborhood(x);
        if !hood.contains(&i) {
            return Err(Error::NotInNeighborhood {
                polytope: i,
                x: x[0],
                y: x[1],
            });
        }
        let s = self.config.steepness;
        let target = &self.polytopes[i];
        if region.is_some_and(|r| target.label != r) {
            return Ok([0.0; 3]);
        }
        let mut others = 1.0;
        for &r in hood {
            if r == i {
                continue;
            }
            let p = &self.polytopes[r];
            if region.is_some_and(|reg| p.label != reg) {
                continue;
            }
            if let Some(g) = pruned_eval(p, x, s) {
                others *= 1.0 - g;
            }
        }
        let u = target.frame.to_local(x);
        let gain = target.gain(s);
        let g = target.eval(x, s);
        let (_, tail) = logistic_pair(gain * target.halfspaces[j].activation(u));
        let c = others * g * tail * gain;
        Ok([c * u[0], c * u[1], c])
    }

    /// Fills `pe` with every polytope in `N(x)` whose contribution is not
    /// negligible. `filter` restricts to one region label.
    pub(crate) fn eval_pixel(&self, x: Point, pe: &mut PixelEval) {
        pe.clear();
        let s = self.config.steepness;
        let m = self.config.m_halfspaces;
        for &i in self.neighborhood(x) {
            let p = &self.polytopes[i];
            let u = p.frame.to_local(x);
            let gain = p.gain(s);
            let start = pe.tails.len();
            let mut pruned = false;
            let mut negative = 0.0;
            for hs in &p.halfspaces {
                let z = gain * hs.activation(u);
                negative += z.min(0.0);
                if negative < PRUNE_ACTIVATION {
                    pruned = true;
                    break;
                }
                pe.tails.push(z);
            }
            if pruned {
                pe.tails.truncate(start);
                continue;
            }
            let mut g = 1.0;
            for t in &mut pe.tails[start..start + m] {
                let (sig, tail) = logistic_pair(*t);
                g *= sig;
                *t = tail;
            }
            pe.active.push(i);
            pe.g.push(g);
            pe.local.push(u);
            pe.gains.push(gain);
        }
    }

    /// Flat parameter vector, `[w1, w2, b]` per half-space, polytope-major.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for p in &self.polytopes {
            for hs in &p.halfspaces {
                out.extend_from_slice(&[hs.weights[0], hs.weights[1], hs.bias]);
            }
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let mut it = params.chunks_exact(3);
        for p in &mut self.polytopes {
            for hs in &mut p.halfspaces {
                let c = it.next().expect("length checked");
                hs.weights = [c[0], c[1]];
                hs.bias = c[2];
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.polytopes.len() * self.config.m_halfspaces * 3
    }

    /// Offset of parameter `k` (0, 1 = weights, 2 = bias) of half-space `j`
    /// of polytope `i` in [`Self::params`].
    pub fn param_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.config.m_halfspaces + j) * 3 + k
    }

    /// Gradient descent update `theta <- theta - gamma * grad`.
    pub fn apply_gradient(&mut self, grad: &[f64], gamma: f64) -> Result<()> {
        assert_eq!(grad.len(), self.param_count());
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        let mut it = grad.chunks_exact(3);
        for p in &mut self.polytopes {
            for hs in &mut p.halfspaces {
                let d = it.next().expect("length checked");
                hs.weights[0] -= gamma * d[0];
                hs.weights[1] -= gamma * d[1];
                hs.bias -= gamma * d[2];
                if !hs.is_finite() {
                    return Err(Error::NonFinite("half-space parameter"));
                }
            }
        }
        Ok(())
    }

    /// Replaces centroids from soft moments `[sum g, sum g x, sum g y]` per
    /// polytope and rehomes. Polytopes with negligible mass keep their centroid.
    pub fn update_centroids(&mut self, moments: &[[f64; 3]]) {
        for (p, m) in self.polytopes.iter_mut().zip(moments) {
            if m[0] > 1e-6 {
                p.centroid = [m[1] / m[0], m[2] / m[0]];
            }
        }
        self.rehome();
    }

    /// Keeps faces well posed after a step. A face whose weight norm fell
    /// below `min_face_norm` is scaled up along with its bias, which leaves its
    /// boundary in place; a face farther than `max_reach` grid spacings from
    /// the polytope's centroid is then moved back to that distance.
    pub fn constrain_faces(&mut self) {
        let reach = self.config.max_reach * self.grid.spacing();
        let min_norm = self.config.min_face_norm;
        let m = self.config.m_halfspaces;
        for p in &mut self.polytopes {
            let c = p.frame.to_local(p.centroid);
            let limit = reach / p.frame.scale;
            for (j, hs) in p.halfspaces.iter_mut().enumerate() {
                let mut norm = hs.weights[0].hypot(hs.weights[1]);
                if norm < min_norm {
                    if norm > 0.0 {
                        let k = min_norm / norm;
                        hs.weights = [hs.weights[0] * k, hs.weights[1] * k];
                        hs.bias *= k;
                    } else {
                        // No direction left: restore the initial outward normal.
                        let a = std::f64::consts::TAU * j as f64 / m as f64;
                        hs.weights = [-min_norm * a.cos(), -min_norm * a.sin()];
                    }
                    norm = min_norm;
                }
                if norm == 0.0 || !limit.is_finite() {
                    continue;
                }
                let inner = hs.weights[0] * c[0] + hs.weights[1] * c[1];
                if (inner + hs.bias) / norm > limit {
                    hs.bias = limit * norm - inner;
                }
            }
        }
    }

    /// `f` (or `f_r`) at every pixel center, row-major.
    pub fn field(&self, region: Option<usize>) -> Vec<f64> {
        let (height, width) = self.image_shape;
        let mut out = vec![0.0; width * height];
        out.par_chunks_mut(width.max(1))
            .enumerate()
            .for_each(|(y, row)| {
                for (x, v) in row.iter_mut().enumerate() {
                    *v = self.eval_level_set([x as f64, y as f64], region);
                }
            });
        out
    }

    /// Pixels with `f > 0.5`.
    pub fn foreground_mask(&self) -> Mask {
        let (height, width) = self.image_shape;
        let data = self.field(None).into_iter().map(|f| f > 0.5).collect();
        Mask::from_vec(width, height, data).expect("field covers the image")
    }

    /// Writes the model as a versioned JSON document.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDocumentRef {
            version: MODEL_DOC_VERSION,
            model: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.version != MODEL_DOC_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported model document version {}",
                doc.version
            )));
        }
        let mut model = doc.model;
        model.config.validate()?;
        model.rehome();
        Ok(model)
    }
}

#[derive(Serialize)]
struct ModelDocumentRef<'a> {
    version: u32,
    model: &'a LevelSetModel,
}

/// `g` with the negligible-polytope shortcut used by every evaluation path.
#[inline]
fn pruned_eval(p: &Polytope, x: Point, steepness: f64) -> Option<f64> {
    let u = p.frame.to_local(x);
    let gain = p.gain(steepness);
    let mut negative = 0.0;
    for hs in &p.halfspaces {
        negative += (gain * hs.activation(u)).min(0.0);
        if negative < PRUNE_ACTIVATION {
            return None;
        }
    }
    Some(p.halfspaces.iter().map(|hs| logistic(gain * hs.activation(u))).product())
}

/// For each entry, the product of `1 - g` over the other entries that share
/// its group (all entries when `groups` is `None`).
pub(crate) fn exclusive_products(g: &[f64], groups: Option<&[usize]>, out: &mut Vec<f64>) {
    out.clear();
    for i in 0..g.len() {
        let mut prod = 1.0;
        for k in 0..g.len() {
            if k != i && groups.is_none_or(|gr| gr[k] == gr[i]) {
                prod *= 1.0 - g[k];
            }
        }
        out.push(prod);
    }
}
