//! Synthetic scan scenes with known ground truth: a mold shape, smooth air
//! pockets, Gaussian sensor noise and gross outliers. Pockets use a
//! cosine-squared bell, which has zero slope at both the rim and the peak,
//! so footprint, level-set area and excess length all have closed or
//! high-precision quadrature forms to test against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::OrganizedPointCloud;
use crate::error::{Error, Result};
use crate::geom;
use crate::grid::{BilinearSurface, ReferenceSurface};

/// Mold shape under the ply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MoldKind {
    Flat,
    /// z = sqrt(R^2 - x^2) - R: a cylinder crown along y, apex at x = 0.
    Cylinder { radius: f64 },
    /// z = amp * sin(2 pi x / wavelength) * sin(2 pi y / wavelength).
    DoublyCurved { amp: f64, wavelength: f64 },
}

impl MoldKind {
    /// Height and slope of the mold at (x, y).
    pub fn eval(&self, x: f64, y: f64) -> (f64, f64, f64) {
        match *self {
            MoldKind::Flat => (0.0, 0.0, 0.0),
            MoldKind::Cylinder { radius } => {
                let s = (radius * radius - x * x).max(0.0).sqrt();
                let z = s - radius;
                let dzdx = if s > 1e-9 { -x / s } else { 0.0 };
                (z, dzdx, 0.0)
            }
            MoldKind::DoublyCurved { amp, wavelength } => {
                let w = std::f64::consts::TAU / wavelength;
                (
                    amp * (w * x).sin() * (w * y).sin(),
                    amp * w * (w * x).cos() * (w * y).sin(),
                    amp * w * (w * x).sin() * (w * y).cos(),
                )
            }
        }
    }
}

/// One synthetic air pocket: an elliptical dome of the given peak height
/// above the mold, h = peak * cos^2(pi rho^2 / 2) for normalized radius
/// rho <= 1. Flat-topped with a steep skirt (like a real debulk bubble),
/// smooth everywhere, zero slope at center and rim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PocketSpec {
    pub center: [f64; 2],
    pub rx: f64,
    pub ry: f64,
    pub peak: f64,
}

impl PocketSpec {
    pub fn height(&self, x: f64, y: f64) -> f64 {
        let rho = self.rho(x, y);
        if rho >= 1.0 {
            0.0
        } else {
            let c = (std::f64::consts::FRAC_PI_2 * rho * rho).cos();
            self.peak * c * c
        }
    }

    fn rho(&self, x: f64, y: f64) -> f64 {
        let u = (x - self.center[0]) / self.rx;
        let v = (y - self.center[1]) / self.ry;
        (u * u + v * v).sqrt()
    }

    /// d(height)/d(rho): -peak * pi * rho * sin(pi rho^2).
    fn dh_drho(&self, rho: f64) -> f64 {
        if rho >= 1.0 {
            0.0
        } else {
            -self.peak * std::f64::consts::PI * rho * (std::f64::consts::PI * rho * rho).sin()
        }
    }

    /// Normalized level-set radius where the dome crosses `cut`.
    pub fn cut_radius_frac(&self, cut: f64) -> f64 {
        if cut >= self.peak {
            0.0
        } else if cut <= 0.0 {
            1.0
        } else {
            (2.0 / std::f64::consts::PI * (cut / self.peak).sqrt().acos()).sqrt()
        }
    }
}

fn default_pitch() -> f64 {
    1.0
}

fn default_ply_inset() -> f64 {
    5.0
}

fn default_cut_height() -> f64 {
    2.0
}

/// Scene description consumed by `generate`. Lengths in mm; the scan raster
/// covers [-extent/2, extent/2] in x and y at `pitch` spacing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub mold: MoldKind,
    pub extent: [f64; 2],
    #[serde(default = "default_pitch")]
    pub pitch: f64,
    /// Scan coverage: points outside are dropouts. Defaults to the scene
    /// rectangle inset by `ply_inset`.
    #[serde(default)]
    pub ply_outline: Option<Vec<[f64; 2]>>,
    #[serde(default = "default_ply_inset")]
    pub ply_inset: f64,
    pub pockets: Vec<PocketSpec>,
    /// Gaussian noise on z, standard deviation in mm.
    #[serde(default)]
    pub noise_std: f64,
    /// Fraction of valid points displaced far off-surface.
    #[serde(default)]
    pub outlier_fraction: f64,
    /// Cut height at which ground truth level sets are evaluated.
    #[serde(default = "default_cut_height")]
    pub cut_height: f64,
}

impl SceneSpec {
    pub fn outline(&self) -> Vec<[f64; 2]> {
        self.ply_outline.clone().unwrap_or_else(|| {
            let hx = self.extent[0] / 2.0 - self.ply_inset;
            let hy = self.extent[1] / 2.0 - self.ply_inset;
            vec![[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]]
        })
    }

    fn validate(&self) -> Result<()> {
        if self.extent[0] <= 0.0 || self.extent[1] <= 0.0 || self.pitch <= 0.0 {
            return Err(Error::InvalidArgument(
                "scene extent and pitch must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return Err(Error::InvalidArgument(
                "outlier_fraction must be in [0, 1]".into(),
            ));
        }
        for (i, p) in self.pockets.iter().enumerate() {
            if p.rx <= 0.0 || p.ry <= 0.0 || p.peak <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "pocket {i}: rx, ry, peak must be positive"
                )));
            }
        }
        if let (MoldKind::Cylinder { radius }, ex) = (&self.mold, self.extent[0]) {
            if *radius <= ex / 2.0 {
                return Err(Error::InvalidArgument(
                    "cylinder radius must exceed half the scene width".into(),
                ));
            }
        }
        Ok(())
    }
}

/// What the generator knows to be true about one pocket.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPocket {
    pub center: [f64; 2],
    pub rx: f64,
    pub ry: f64,
    pub peak: f64,
    /// Normalized level-set radius at the scene cut height.
    pub cut_radius_frac: f64,
    /// Level-set ellipse at the cut height (empty if peak < cut).
    pub cut_polygon: Vec<[f64; 2]>,
    /// XY area enclosed by the level set, cm^2.
    pub cut_area_cm2: f64,
    /// Excess length (ply arc minus mold arc) across the full bump along
    /// the x and y axes through the center, mm.
    pub excess_x: f64,
    pub excess_y: f64,
    /// Footprint intersects another pocket; per-pocket truth is not exact.
    pub overlaps: bool,
}

/// Generated scene: organized scan, reference surface, per-pocket truth.
pub struct SynthScene {
    pub cloud: OrganizedPointCloud,
    pub reference: ReferenceSurface,
    pub truth: Vec<GroundTruthPocket>,
}

/// Arc length of z(t) for t in [t0, t1] minus the same integral without the
/// bump, by composite Simpson quadrature with analytic slopes.
fn excess_along_axis(spec: &SceneSpec, pocket: &PocketSpec, axis: usize, n: usize) -> f64 {
    let n = n + n % 2; // Simpson needs an even interval count
    let r = if axis == 0 { pocket.rx } else { pocket.ry };
    let h = 2.0 * r / n as f64;
    let slope_with = |t: f64| -> f64 {
        let (x, y) = if axis == 0 {
            (pocket.center[0] + t, pocket.center[1])
        } else {
            (pocket.center[0], pocket.center[1] + t)
        };
        let (_, mx, my) = spec.mold.eval(x, y);
        let mold_slope = if axis == 0 { mx } else { my };
        let rho = pocket.rho(x, y);
        // On the axis through the center, d rho/dt = sign(t)/r.
        let bump_slope = if rho >= 1.0 || t == 0.0 {
            0.0
        } else {
            pocket.dh_drho(rho) * t.signum() / r
        };
        mold_slope + bump_slope
    };
    let slope_without = |t: f64| -> f64 {
        let (x, y) = if axis == 0 {
            (pocket.center[0] + t, pocket.center[1])
        } else {
            (pocket.center[0], pocket.center[1] + t)
        };
        let (_, mx, my) = spec.mold.eval(x, y);
        if axis == 0 {
            mx
        } else {
            my
        }
    };
    let integrand = |t: f64| -> f64 {
        let a = slope_with(t);
        let b = slope_without(t);
        (1.0 + a * a).sqrt() - (1.0 + b * b).sqrt()
    };
    let mut acc = integrand(-r) + integrand(r);
    for i in 1..n {
        let t = -r + i as f64 * h;
        acc += integrand(t) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Builds the scan cloud, reference surface and ground truth for a scene.
/// Deterministic for a given (spec, seed).
pub fn generate(spec: &SceneSpec, seed: u64) -> Result<SynthScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outline = spec.outline();

    let nx = (spec.extent[0] / spec.pitch).floor() as usize + 1;
    let ny = (spec.extent[1] / spec.pitch).floor() as usize + 1;
    let x0 = -spec.extent[0] / 2.0;
    let y0 = -spec.extent[1] / 2.0;

    let surface_z = |x: f64, y: f64| -> f64 {
        let (m, _, _) = spec.mold.eval(x, y);
        m + spec.pockets.iter().map(|p| p.height(x, y)).sum::<f64>()
    };

    let mut cloud = OrganizedPointCloud::new(nx, ny);
    let mut valid_idx: Vec<(usize, usize)> = Vec::new();
    for r in 0..ny {
        for c in 0..nx {
            let x = x0 + c as f64 * spec.pitch;
            let y = y0 + r as f64 * spec.pitch;
            if !geom::point_in_polygon([x, y], &outline) {
                continue;
            }
            let mut z = surface_z(x, y);
            if spec.noise_std > 0.0 {
                // Box-Muller from two uniforms.
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                z += spec.noise_std
                    * (-2.0 * u1.ln()).sqrt()
                    * (std::f64::consts::TAU * u2).cos();
            }
            cloud.set_point(r, c, [x, y, z]);
            valid_idx.push((r, c));
        }
    }
    if valid_idx.is_empty() {
        return Err(Error::EmptyInput("scene has no valid scan points".into()));
    }
    let n_outliers = (spec.outlier_fraction * valid_idx.len() as f64).floor() as usize;
    if n_outliers > 0 {
        let picks = rand::seq::index::sample(&mut rng, valid_idx.len(), n_outliers);
        for pick in picks.iter() {
            let (r, c) = valid_idx[pick];
            let mut p = cloud.point(r, c);
            p[2] += 50.0;
            cloud.set_point(r, c, p);
        }
    }

    // Reference surface: the mold sampled on a padded grid so heightmaps
    // built from the cloud always fall inside it.
    let pad = 4.0 * spec.pitch;
    let rx0 = x0 - pad;
    let ry0 = y0 - pad;
    let rnx = ((spec.extent[0] + 2.0 * pad) / spec.pitch).ceil() as usize + 1;
    let rny = ((spec.extent[1] + 2.0 * pad) / spec.pitch).ceil() as usize + 1;
    let reference = BilinearSurface::from_fn([rx0, ry0], [spec.pitch, spec.pitch], rnx, rny, |x, y| {
        spec.mold.eval(x, y).0
    })?;

    let mut truth = Vec::with_capacity(spec.pockets.len());
    for (i, p) in spec.pockets.iter().enumerate() {
        let frac = p.cut_radius_frac(spec.cut_height);
        let mut cut_polygon = Vec::new();
        if frac > 0.0 {
            for k in 0..128 {
                let a = k as f64 / 128.0 * std::f64::consts::TAU;
                cut_polygon.push([
                    p.center[0] + frac * p.rx * a.cos(),
                    p.center[1] + frac * p.ry * a.sin(),
                ]);
            }
        }
        let overlaps = spec.pockets.iter().enumerate().any(|(j, q)| {
            if i == j {
                return false;
            }
            // Conservative ellipse overlap test on normalized radii.
            let du = (p.center[0] - q.center[0]).abs();
            let dv = (p.center[1] - q.center[1]).abs();
            du / (p.rx + q.rx) < 1.0 && dv / (p.ry + q.ry) < 1.0 && {
                let d = (du / (p.rx + q.rx)).hypot(dv / (p.ry + q.ry));
                d < 1.0
            }
        });
        truth.push(GroundTruthPocket {
            center: p.center,
            rx: p.rx,
            ry: p.ry,
            peak: p.peak,
            cut_radius_frac: frac,
            cut_polygon,
            cut_area_cm2: std::f64::consts::PI * p.rx * p.ry * frac * frac / 100.0,
            excess_x: excess_along_axis(spec, p, 0, 4096),
            excess_y: excess_along_axis(spec, p, 1, 4096),
            overlaps,
        });
    }

    Ok(SynthScene {
        cloud,
        reference,
        truth,
    })
}

impl SceneSpec {
    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn read_json(path: &std::path::Path) -> Result<SceneSpec> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}
