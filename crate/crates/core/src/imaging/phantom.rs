use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{GrayImage, LabelMap};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectShape {
    Disk,
    Square,
    /// Disk with a concentric background hole.
    Annulus,
}

/// Synthetic test image: objects on a regular lattice over a flat background.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub objects: usize,
    pub shape: ObjectShape,
    /// Gray levels, background first, then one per object. Empty selects
    /// evenly spaced levels.
    pub intensities: Vec<u8>,
    /// Standard deviation of the additive Gaussian noise, in gray levels.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Object radius (half side for squares) as a fraction of half the
    /// lattice cell.
    pub fill: f64,
    /// Inner radius of an annulus as a fraction of its outer radius.
    pub hole_fraction: f64,
    /// Minimum clearance in pixels between an object and its lattice cell edge.
    pub margin: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            width: 200,
            height: 200,
            objects: 1,
            shape: ObjectShape::Disk,
            intensities: Vec::new(),
            noise_sigma: 0.0,
            seed: 0,
            fill: 0.5,
            hole_fraction: 0.5,
            margin: 4.0,
        }
    }
}

impl PhantomSpec {
    /// The intensity plan actually used: the explicit one, or evenly spaced
    /// levels (dark background, bright object when there is only one).
    pub fn intensity_plan(&self) -> Vec<u8> {
        if !self.intensities.is_empty() {
            return self.intensities.clone();
        }
        match self.objects {
            0 => vec![50],
            1 => vec![50, 200],
            k => (0..=k)
                .map(|i| (15.0 + 225.0 * i as f64 / k as f64).round() as u8)
                .collect(),
        }
    }

    /// `(rows, cols)` of the object lattice.
    pub fn lattice(&self) -> (usize, usize) {
        let k = self.objects.max(1);
        let cols = (k as f64).sqrt().ceil() as usize;
        (k.div_ceil(cols), cols)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InfeasiblePhantom("empty image".into()));
        }
        let plan = self.intensity_plan();
        if self.objects + 1 > plan.len() {
            return Err(Error::InfeasiblePhantom(format!(
                "{} objects need {} intensities, plan has {}",
                self.objects,
                self.objects + 1,
                plan.len()
            )));
        }
        let mut sorted = plan[..self.objects + 1].to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.objects + 1 {
            return Err(Error::InfeasiblePhantom("intensities must be distinct".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InfeasiblePhantom("noise sigma must be >= 0".into()));
        }
        if !(self.fill > 0.0 && self.fill <= 1.0) {
            return Err(Error::InfeasiblePhantom("fill must lie in (0, 1]".into()));
        }
        if self.shape == ObjectShape::Annulus && !(self.hole_fraction > 0.0 && self.hole_fraction < 1.0) {
            return Err(Error::InfeasiblePhantom("hole_fraction must lie in (0, 1)".into()));
        }
        if self.objects > 0 {
            let (cw, ch) = self.cell_size();
            let half = 0.5 * cw.min(ch);
            let radius = self.radius();
            if radius < 1.0 || radius + self.margin > half {
                return Err(Error::InfeasiblePhantom(format!(
                    "objects of radius {radius:.1} do not fit {cw:.1}x{ch:.1} cells with margin {}",
                    self.margin
                )));
            }
        }
        Ok(())
    }

    fn cell_size(&self) -> (f64, f64) {
        let (rows, cols) = self.lattice();
        (self.width as f64 / cols as f64, self.height as f64 / rows as f64)
    }

    /// Object radius in pixels.
    pub fn radius(&self) -> f64 {
        let (cw, ch) = self.cell_size();
        self.fill * 0.5 * cw.min(ch)
    }

    /// Object centers in pixel coordinates, row-major lattice order.
    pub fn centers(&self) -> Vec<[f64; 2]> {
        let (_, cols) = self.lattice();
        let (cw, ch) = self.cell_size();
        (0..self.objects)
            .map(|k| {
                let (r, c) = (k / cols, k % cols);
                [(c as f64 + 0.5) * cw - 0.5, (r as f64 + 0.5) * ch - 0.5]
            })
            .collect()
    }

    fn contains(&self, center: [f64; 2], x: f64, y: f64) -> bool {
        let r = self.radius();
        let (dx, dy) = (x - center[0], y - center[1]);
        match self.shape {
            ObjectShape::Disk => dx * dx + dy * dy <= r * r,
            ObjectShape::Square => dx.abs() <= r && dy.abs() <= r,
            ObjectShape::Annulus => {
                let d2 = dx * dx + dy * dy;
                let inner = self.hole_fraction * r;
                d2 <= r * r && d2 > inner * inner
            }
        }
    }
}

/// Renders the phantom and its ground truth. Background is region 0 and
/// object `k` is region `k + 1`.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(GrayImage, LabelMap)> {
    spec.validate()?;
    let plan = spec.intensity_plan();
    let centers = spec.centers();
    let (w, h) = (spec.width, spec.height);
    let mut truth = LabelMap::new(w, h);
    let mut image = GrayImage::filled(w, h, plan[0]);
    let reach = spec.radius() + 1.0;
    for (k, &center) in centers.iter().enumerate() {
        let x0 = (center[0] - reach).floor().max(0.0) as usize;
        let y0 = (center[1] - reach).floor().max(0.0) as usize;
        let x1 = ((center[0] + reach).ceil() as usize).min(w - 1);
        let y1 = ((center[1] + reach).ceil() as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if spec.contains(center, x as f64, y as f64) {
                    truth.set(x, y, (k + 1) as u8);
                    image.set(x, y, plan[k + 1]);
                }
            }
        }
    }
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| Error::InfeasiblePhantom(e.to_string()))?;
        for v in image.data_mut() {
            let noisy = *v as f64 + normal.sample(&mut rng);
            *v = noisy.round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok((image, truth))
}
