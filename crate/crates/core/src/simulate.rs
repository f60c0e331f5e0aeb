//! Synthetic acoustic road scenes.
//!
//! Materials and damages are parametrized point-reflector fields (Born
//! approximation, no multiple scattering). Scenes render to per-microphone
//! echo signals and, via the sigma-delta encoder, to PDM recordings, giving
//! the pipeline a desk-scale dataset source whose ground truth is known by
//! construction.
//!
//! All signature parameters live in [`SignatureConfig`] so tests can tighten
//! or relax class separability in one place.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamform::ArrayGeometry;
use crate::error::{Error, Result};
use crate::ioutil::{atomic_write, ensure_dir, read_bytes};
use crate::seed::rng_for;
use crate::signal::{pdm_encode, write_pdm, ChirpSpec, PdmFrame, Waveform};

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

/// Road surface material classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Material {
    Asphalt,
    Concrete,
    Element,
}

impl Material {
    pub fn all() -> [Material; 3] {
        [Material::Asphalt, Material::Concrete, Material::Element]
    }
}

impl fmt::Display for Material {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Material::Asphalt => "Asphalt",
            Material::Concrete => "Concrete",
            Material::Element => "Element",
        })
    }
}

impl FromStr for Material {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Asphalt" => Ok(Material::Asphalt),
            "Concrete" => Ok(Material::Concrete),
            "Element" => Ok(Material::Element),
            other => Err(Error::parameter(format!("unknown material {:?}", other))),
        }
    }
}

/// Damage classes (merged across materials).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Damage {
    AlligatorCrack,
    Pothole,
    Crack,
    Patch,
}

impl Damage {
    pub fn all() -> [Damage; 4] {
        [
            Damage::AlligatorCrack,
            Damage::Pothole,
            Damage::Crack,
            Damage::Patch,
        ]
    }
}

impl fmt::Display for Damage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Damage::AlligatorCrack => "AlligatorCrack",
            Damage::Pothole => "Pothole",
            Damage::Crack => "Crack",
            Damage::Patch => "Patch",
        })
    }
}

impl FromStr for Damage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "AlligatorCrack" => Ok(Damage::AlligatorCrack),
            "Pothole" => Ok(Damage::Pothole),
            "Crack" => Ok(Damage::Crack),
            "Patch" => Ok(Damage::Patch),
            other => Err(Error::parameter(format!("unknown damage {:?}", other))),
        }
    }
}

// ---------------------------------------------------------------------------
// Scene model
// ---------------------------------------------------------------------------

/// A point scatterer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reflector {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub range_m: f64,
    pub amplitude: f64,
}

/// A parametrized reflector field with its ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub reflectors: Vec<Reflector>,
    pub material: Material,
    pub damages: BTreeSet<Damage>,
    pub seed: u64,
}

impl Scene {
    /// Ground-truth label strings: the material plus each damage.
    pub fn labels(&self) -> Vec<String> {
        let mut out = vec![self.material.to_string()];
        out.extend(self.damages.iter().map(|d| d.to_string()));
        out
    }
}

/// Every tunable of the synthetic material/damage signatures.
///
/// Scenes model the road as a ground plane below the sensor: a reflector at
/// elevation `el` (negative, looking down) sits at range
/// `height / sin(-el)` plus surface roughness. That shared backbone keeps
/// samples spatially aligned, so material and damage differences appear as
/// consistent patterns in the energyscape. The defaults are calibrated so
/// the three base fields are separable by simple energyscape statistics
/// while damage add-ons stay subtle relative to the varying material
/// background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignatureConfig {
    /// Sensor height above the road plane (meters).
    pub sensor_height: f64,
    /// Per-sample height offset drawn uniformly from +/- this span.
    pub height_jitter: f64,
    /// Per-reflector range noise (meters), the surface roughness.
    pub roughness: f64,
    /// Road band in elevation degrees, `lo < hi < 0`.
    pub elevation_lo: f64,
    pub elevation_hi: f64,
    /// Reflector azimuths stay within +/- this span (degrees).
    pub azimuth_span: f64,

    /// Facet-grid pitch (degrees) used to sample the continuous surface.
    pub facet_step_deg: f64,

    // asphalt: a rough dense mat, three grain substyles (facet amplitudes)
    pub asphalt_amp_fine: f64,
    pub asphalt_amp_coarse: f64,
    pub asphalt_amp_extra: f64,

    // concrete: a faint smooth-surface floor, sparse bright pits and one
    // specular return
    pub concrete_floor_amp: f64,
    pub concrete_speckle_polished: usize,
    pub concrete_speckle_worn: usize,
    pub concrete_speckle_amp_polished: f64,
    pub concrete_speckle_amp_worn: f64,
    pub concrete_specular_polished: f64,
    pub concrete_specular_worn: f64,

    // element: periodic joint train over a paver-surface floor; substyles
    // interleave joint mass and floor level with the other classes
    pub element_spacing_narrow_deg: f64,
    pub element_spacing_wide_deg: f64,
    pub element_joint_rows: usize,
    pub element_amp_strong: f64,
    pub element_amp_weak: f64,
    pub element_floor_sparse_amp: f64,
    pub element_floor_dense_amp: f64,

    // shared cues: worn concrete carries slab joints on the wide-paver
    // spacing, and mid pavers a faint nadir specular
    pub concrete_joint_spacing_deg: f64,
    pub concrete_joint_amp: f64,
    pub element_specular_amp: f64,

    // damage add-ons
    pub pothole_count: usize,
    pub pothole_amp: f64,
    pub crack_count: usize,
    pub crack_amp: f64,
    pub alligator_chains: usize,
    pub alligator_amp: f64,
    pub patch_count: usize,
    pub patch_amp: f64,
}

impl Default for SignatureConfig {
    fn default() -> Self {
        SignatureConfig {
            sensor_height: 0.8,
            height_jitter: 0.005,
            roughness: 0.03,
            elevation_lo: -70.0,
            elevation_hi: -25.0,
            azimuth_span: 60.0,

            facet_step_deg: 1.2,

            asphalt_amp_fine: 0.006,
            asphalt_amp_coarse: 0.011,
            asphalt_amp_extra: 0.0045,

            concrete_floor_amp: 0.0015,
            concrete_speckle_polished: 8,
            concrete_speckle_worn: 18,
            concrete_speckle_amp_polished: 0.025,
            concrete_speckle_amp_worn: 0.045,
            concrete_specular_polished: 0.62,
            concrete_specular_worn: 0.35,

            element_spacing_narrow_deg: 8.0,
            element_spacing_wide_deg: 15.0,
            element_joint_rows: 12,
            element_amp_strong: 0.55,
            element_amp_weak: 0.40,
            element_floor_sparse_amp: 0.002,
            element_floor_dense_amp: 0.005,

            concrete_joint_spacing_deg: 24.0,
            concrete_joint_amp: 0.45,
            element_specular_amp: 0.15,

            pothole_count: 14,
            pothole_amp: 0.25,
            crack_count: 12,
            crack_amp: 0.1,
            alligator_chains: 4,
            alligator_amp: 0.08,
            patch_count: 45,
            patch_amp: 0.03,
        }
    }
}

/// Ground-plane coordinates for one scene realization.
struct Plane {
    height: f64,
    roughness: f64,
    elevation_lo: f64,
    elevation_hi: f64,
    azimuth_span: f64,
}

impl Plane {
    /// Range of a plane point seen at `el` degrees (el < 0), with roughness.
    fn range_at(&self, el_deg: f64, rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        let r = self.height / (-el_deg.to_radians()).sin();
        r + rng.random_range(-self.roughness..=self.roughness)
    }

    /// Uniform point on the visible road band.
    fn sample(&self, rng: &mut rand_chacha::ChaCha8Rng, amplitude: f64) -> Reflector {
        let az = rng.random_range(-self.azimuth_span..=self.azimuth_span);
        let el = rng.random_range(self.elevation_lo..=self.elevation_hi);
        Reflector {
            azimuth_deg: az,
            elevation_deg: el,
            range_m: self.range_at(el, rng),
            amplitude,
        }
    }
}

/// Build the deterministic reflector field for `(material, damages, seed)`.
///
/// The same triple always yields the same scene, and a scene without damages
/// is a prefix of the same scene with damages added.
pub fn make_scene(
    material: Material,
    damages: &BTreeSet<Damage>,
    seed: u64,
    cfg: &SignatureConfig,
) -> Scene {
    let mut rng = rng_for(seed, "scene", 0);
    let plane = Plane {
        height: cfg.sensor_height + rng.random_range(-cfg.height_jitter..=cfg.height_jitter),
        roughness: cfg.roughness,
        elevation_lo: cfg.elevation_lo,
        elevation_hi: cfg.elevation_hi,
        azimuth_span: cfg.azimuth_span,
    };

    let mut reflectors = Vec::new();
    let speckle = |rng: &mut rand_chacha::ChaCha8Rng,
                   out: &mut Vec<Reflector>,
                   count: usize,
                   amp_sigma: f64| {
        let normal = Normal::new(0.0, amp_sigma).unwrap();
        for _ in 0..count {
            let amp = normal.sample(rng).abs();
            out.push(plane.sample(rng, amp));
        }
    };
    // the continuous surface sampled as a jittered facet grid: positions
    // are stable across samples, the texture randomness lives in the
    // facet amplitudes
    let facet_floor = |rng: &mut rand_chacha::ChaCha8Rng,
                       out: &mut Vec<Reflector>,
                       amp_sigma: f64| {
        let normal = Normal::new(0.0, amp_sigma).unwrap();
        let step = cfg.facet_step_deg;
        let mut az = -cfg.azimuth_span;
        while az <= cfg.azimuth_span {
            let mut el = cfg.elevation_lo;
            while el <= cfg.elevation_hi {
                let a = (az + rng.random_range(-0.3..=0.3)).clamp(-90.0, 90.0);
                let e = (el + rng.random_range(-0.3..=0.3))
                    .clamp(cfg.elevation_lo, cfg.elevation_hi);
                out.push(Reflector {
                    azimuth_deg: a,
                    elevation_deg: e,
                    range_m: plane.range_at(e, rng),
                    amplitude: normal.sample(rng).abs(),
                });
                el += step;
            }
            az += step;
        }
    };
    // Substyles form distinct clusters per material, interleaved across
    // materials on the marginal axes (floor densities overlap between
    // dense asphalt and dense-floored pavers, and worn concrete carries
    // slab joints), so single cues stay ambiguous while combinations
    // separate cleanly.
    let substyle = rng.random_range(0..3u8);
    match material {
        Material::Asphalt => {
            let amp = match substyle {
                0 => cfg.asphalt_amp_fine,
                1 => cfg.asphalt_amp_coarse,
                _ => cfg.asphalt_amp_extra,
            };
            facet_floor(&mut rng, &mut reflectors, amp);
        }
        Material::Concrete => {
            // smooth slab: faint continuous surface floor
            facet_floor(&mut rng, &mut reflectors, cfg.concrete_floor_amp);
            if substyle == 0 {
                // polished: strong mirror return, few bright pits
                speckle(
                    &mut rng,
                    &mut reflectors,
                    cfg.concrete_speckle_polished,
                    cfg.concrete_speckle_amp_polished,
                );
                specular(
                    &mut rng,
                    cfg,
                    &plane,
                    &mut reflectors,
                    cfg.concrete_specular_polished,
                );
            } else {
                // worn: weaker mirror, more pits, visible slab joints
                speckle(
                    &mut rng,
                    &mut reflectors,
                    cfg.concrete_speckle_worn,
                    cfg.concrete_speckle_amp_worn,
                );
                specular(
                    &mut rng,
                    cfg,
                    &plane,
                    &mut reflectors,
                    cfg.concrete_specular_worn,
                );
                lattice(
                    &mut rng,
                    cfg,
                    &plane,
                    &mut reflectors,
                    cfg.concrete_joint_spacing_deg,
                    cfg.concrete_joint_amp,
                    cfg.element_joint_rows * 2 / 3,
                );
            }
        }
        Material::Element => {
            let (spacing, joint_amp, floor_amp, with_specular) = match substyle {
                0 => (
                    cfg.element_spacing_narrow_deg,
                    cfg.element_amp_strong,
                    cfg.element_floor_sparse_amp,
                    false,
                ),
                // mid pavers: polished tops give a faint nadir mirror
                1 => (
                    0.5 * (cfg.element_spacing_narrow_deg + cfg.element_spacing_wide_deg),
                    0.818 * cfg.element_amp_strong,
                    0.5 * (cfg.element_floor_sparse_amp + cfg.element_floor_dense_amp),
                    true,
                ),
                _ => (
                    cfg.element_spacing_wide_deg,
                    cfg.element_amp_weak,
                    cfg.element_floor_dense_amp,
                    false,
                ),
            };
            lattice(
                &mut rng,
                cfg,
                &plane,
                &mut reflectors,
                spacing,
                joint_amp,
                cfg.element_joint_rows,
            );
            // paver surfaces between the joints
            facet_floor(&mut rng, &mut reflectors, floor_amp);
            if with_specular {
                specular(
                    &mut rng,
                    cfg,
                    &plane,
                    &mut reflectors,
                    cfg.element_specular_amp,
                );
            }
        }
    }

    // damage add-ons, in the set's (sorted) order
    let el_margin = 4.0;
    for damage in damages {
        match damage {
            Damage::Pothole => {
                // localized cluster of strong edge reflectors, slightly
                // recessed below the plane
                let c_az =
                    rng.random_range(-plane.azimuth_span + 5.0..=plane.azimuth_span - 5.0);
                let c_el = rng
                    .random_range(cfg.elevation_lo + el_margin..=cfg.elevation_hi - el_margin);
                let jitter = Normal::new(0.0, 1.5).unwrap();
                for _ in 0..cfg.pothole_count {
                    let el = (c_el + jitter.sample(&mut rng))
                        .clamp(cfg.elevation_lo, cfg.elevation_hi);
                    let range_m = plane.range_at(el, &mut rng) + rng.random_range(0.0..=0.05);
                    reflectors.push(Reflector {
                        azimuth_deg: (c_az + jitter.sample(&mut rng)).clamp(-90.0, 90.0),
                        elevation_deg: el,
                        range_m,
                        amplitude: cfg.pothole_amp * rng.random_range(0.8..=1.2),
                    });
                }
            }
            Damage::Crack => {
                let n = cfg.crack_count;
                reflectors.extend(chain(&mut rng, cfg, &plane, n, cfg.crack_amp));
            }
            Damage::AlligatorCrack => {
                // a grid of crossing chains
                for _ in 0..cfg.alligator_chains {
                    let n = cfg.crack_count / 2 + 2;
                    reflectors.extend(chain(&mut rng, cfg, &plane, n, cfg.alligator_amp));
                }
                // cross chains: fixed azimuth, marching down the band
                for _ in 0..cfg.alligator_chains {
                    let az = rng.random_range(-plane.azimuth_span..=plane.azimuth_span);
                    let n = cfg.crack_count / 2 + 2;
                    for k in 0..n {
                        let t = k as f64 / (n - 1) as f64;
                        let el = cfg.elevation_lo + t * (cfg.elevation_hi - cfg.elevation_lo);
                        let range_m = plane.range_at(el, &mut rng);
                        reflectors.push(Reflector {
                            azimuth_deg: (az + rng.random_range(-0.5..=0.5)).clamp(-90.0, 90.0),
                            elevation_deg: el,
                            range_m,
                            amplitude: cfg.alligator_amp * rng.random_range(0.8..=1.2),
                        });
                    }
                }
            }
            Damage::Patch => {
                // a compact region with altered speckle density
                let c_az =
                    rng.random_range(-plane.azimuth_span + 8.0..=plane.azimuth_span - 8.0);
                let c_el = rng
                    .random_range(cfg.elevation_lo + el_margin..=cfg.elevation_hi - el_margin);
                for _ in 0..cfg.patch_count {
                    let el = (c_el + rng.random_range(-5.0..=5.0))
                        .clamp(cfg.elevation_lo, cfg.elevation_hi);
                    let range_m = plane.range_at(el, &mut rng);
                    reflectors.push(Reflector {
                        azimuth_deg: (c_az + rng.random_range(-6.0..=6.0)).clamp(-90.0, 90.0),
                        elevation_deg: el,
                        range_m,
                        amplitude: cfg.patch_amp * rng.random_range(0.5..=1.5),
                    });
                }
            }
        }
    }

    Scene {
        reflectors,
        material,
        damages: damages.clone(),
        seed,
    }
}

/// A periodic joint train: reflector chains at regular azimuth spacing,
/// each running down the road band, with a small lattice phase wobble.
fn lattice(
    rng: &mut rand_chacha::ChaCha8Rng,
    cfg: &SignatureConfig,
    plane: &Plane,
    out: &mut Vec<Reflector>,
    spacing: f64,
    joint_amp: f64,
    beads: usize,
) {
    let phase: f64 = rng.random_range(-1.5..=1.5);
    let mut az = -plane.azimuth_span + phase.rem_euclid(spacing);
    while az <= plane.azimuth_span {
        for i in 0..beads {
            let t = i as f64 / (beads - 1).max(1) as f64;
            let el = cfg.elevation_lo + t * (cfg.elevation_hi - cfg.elevation_lo);
            let el = (el + rng.random_range(-1.0..=1.0))
                .clamp(cfg.elevation_lo, cfg.elevation_hi);
            let range_m = plane.range_at(el, rng);
            out.push(Reflector {
                azimuth_deg: (az + rng.random_range(-0.3..=0.3)).clamp(-90.0, 90.0),
                elevation_deg: el,
                range_m,
                amplitude: joint_amp * rng.random_range(0.8..=1.2),
            });
        }
        az += spacing;
    }
}

/// One dominant specular return: normal incidence happens at the nadir
/// line, so it stays near azimuth 0 on the steep part of the band.
fn specular(
    rng: &mut rand_chacha::ChaCha8Rng,
    cfg: &SignatureConfig,
    plane: &Plane,
    out: &mut Vec<Reflector>,
    amp: f64,
) {
    let az = rng.random_range(-6.0..=6.0);
    let el = rng.random_range(cfg.elevation_lo..=cfg.elevation_lo + 12.0);
    let range_m = plane.range_at(el, rng);
    out.push(Reflector {
        azimuth_deg: az,
        elevation_deg: el,
        range_m,
        amplitude: amp * rng.random_range(0.85..=1.15),
    });
}

/// A collinear chain of reflectors across azimuth on the road plane.
fn chain(
    rng: &mut rand_chacha::ChaCha8Rng,
    cfg: &SignatureConfig,
    plane: &Plane,
    count: usize,
    amp: f64,
) -> Vec<Reflector> {
    let span = plane.azimuth_span;
    let az0 = rng.random_range(-span..=span * 0.5);
    let el0 = rng.random_range(cfg.elevation_lo + 2.0..=cfg.elevation_hi - 2.0);
    let d_el = rng.random_range(-6.0..=6.0);
    let az_extent = rng.random_range(20.0..=35.0);
    (0..count)
        .map(|k| {
            let t = k as f64 / (count - 1).max(1) as f64;
            let el = (el0 + t * d_el + rng.random_range(-0.5..=0.5))
                .clamp(cfg.elevation_lo, cfg.elevation_hi);
            let range_m = plane.range_at(el, rng);
            Reflector {
                azimuth_deg: (az0 + t * az_extent).clamp(-90.0, 90.0),
                elevation_deg: el,
                range_m,
                amplitude: amp * rng.random_range(0.8..=1.2),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Echo rendering
// ---------------------------------------------------------------------------

/// Rendering controls. `noise_db` is the SNR relative to the strongest
/// echo's peak amplitude; `f64::INFINITY` disables noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderParams {
    pub n_samples: usize,
    pub noise_db: f64,
    pub seed: u64,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            n_samples: 16384,
            noise_db: f64::INFINITY,
            seed: 0,
        }
    }
}

/// Render a scene to one echo signal per microphone.
///
/// The emitter sits at the origin; each reflector contributes a chirp copy
/// at delay `(emitter_to_reflector + reflector_to_mic) / c`, scaled by
/// `1 / range^2` spreading. Seeded white noise is added at the configured
/// SNR.
pub fn render_echoes(
    scene: &Scene,
    geom: &ArrayGeometry,
    chirp: &Waveform,
    params: &RenderParams,
) -> Result<Vec<Waveform>> {
    if scene.reflectors.is_empty() {
        return Err(Error::parameter("scene has no reflectors"));
    }
    let fs = chirp.sample_rate;
    let c = geom.speed_of_sound;
    let n = params.n_samples;
    let max_range = c * (n as f64 / fs) / 2.0;
    for (i, r) in scene.reflectors.iter().enumerate() {
        if !(r.range_m > 0.0) {
            return Err(Error::parameter(format!("reflector {} has range <= 0", i)));
        }
        if r.range_m > max_range {
            return Err(Error::parameter(format!(
                "reflector {} at {:.2} m beyond unambiguous range {:.2} m",
                i, r.range_m, max_range
            )));
        }
        if r.azimuth_deg.abs() > 90.0 || r.elevation_deg.abs() > 90.0 {
            return Err(Error::parameter(format!(
                "reflector {} outside +/-90 degrees",
                i
            )));
        }
    }

    // reflector cartesian positions
    let positions: Vec<([f64; 3], f64)> = scene
        .reflectors
        .iter()
        .map(|r| {
            let az = r.azimuth_deg.to_radians();
            let el = r.elevation_deg.to_radians();
            let u = [el.cos() * az.sin(), el.sin(), el.cos() * az.cos()];
            (
                [u[0] * r.range_m, u[1] * r.range_m, u[2] * r.range_m],
                r.amplitude / (r.range_m * r.range_m),
            )
        })
        .collect();

    let mut channels: Vec<Waveform> = geom
        .positions
        .par_iter()
        .map(|mic| {
            let mut acc = vec![0.0f64; n];
            for (refl, (pos, amp)) in scene.reflectors.iter().zip(&positions) {
                let dx = pos[0] - mic[0];
                let dy = pos[1] - mic[1];
                let dz = pos[2] - mic[2];
                let back = (dx * dx + dy * dy + dz * dz).sqrt();
                let delay = (refl.range_m + back) / c;
                let onset = (delay * fs).round() as usize;
                let reach = chirp.len().min(n.saturating_sub(onset));
                for j in 0..reach {
                    acc[onset + j] += amp * chirp.samples[j];
                }
            }
            Waveform {
                samples: acc,
                sample_rate: fs,
            }
        })
        .collect();

    if params.noise_db.is_finite() {
        let peak = channels
            .iter()
            .flat_map(|ch| ch.samples.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            let sigma = peak / 10f64.powf(params.noise_db / 20.0);
            channels.par_iter_mut().enumerate().for_each(|(i, ch)| {
                let mut rng = rng_for(params.seed, "render-noise", i as u64);
                let normal = Normal::new(0.0, sigma).unwrap();
                for v in &mut ch.samples {
                    *v += normal.sample(&mut rng);
                }
            });
        }
    }
    Ok(channels)
}

// ---------------------------------------------------------------------------
// Dataset synthesis
// ---------------------------------------------------------------------------

/// One class mix entry of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthClassSpec {
    pub material: Material,
    #[serde(default)]
    pub damages: Vec<Damage>,
    pub count: usize,
}

/// Full recipe of a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: Vec<SynthClassSpec>,
    pub seed: u64,
    /// Sensor self-noise floor in dB below full scale. Unlike the
    /// renderer's per-scene SNR, this is absolute: quiet scenes sit closer
    /// to the noise, loud ones tower above it.
    pub noise_floor_db: f64,
    pub record_samples: usize,
    pub oversample: usize,
    pub chirp: ChirpSpec,
    pub geometry: ArrayGeometry,
    pub signature: SignatureConfig,
}

/// One dataset sample: a recording file plus its labels and timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Recording path relative to the manifest's directory.
    pub path: String,
    pub timestamp_s: f64,
    pub labels: Vec<String>,
}

/// The dataset index: entries plus the sorted label universe.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Sorted union of all entry labels; fixes the class/bit order.
    pub class_names: Vec<String>,
    /// Directory that entry paths are relative to.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn from_entries(entries: Vec<ManifestEntry>, base_dir: PathBuf) -> Self {
        let mut names: BTreeSet<String> = BTreeSet::new();
        for e in &entries {
            names.extend(e.labels.iter().cloned());
        }
        DatasetManifest {
            entries,
            class_names: names.into_iter().collect(),
            base_dir,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Absolute path of an entry's recording.
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.base_dir.join(&entry.path)
    }

    /// Positive count per class name, in class order.
    pub fn class_counts(&self) -> Vec<(String, usize)> {
        self.class_names
            .iter()
            .map(|name| {
                let count = self
                    .entries
                    .iter()
                    .filter(|e| e.labels.iter().any(|l| l == name))
                    .count();
                (name.clone(), count)
            })
            .collect()
    }
}

/// Write the JSONL manifest: one entry object per line.
pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut out = String::new();
    for e in &manifest.entries {
        out.push_str(&serde_json::to_string(e).expect("manifest entry serializes"));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Read a JSONL manifest; the base directory is the manifest's parent.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = String::from_utf8(read_bytes(path)?)
        .map_err(|_| Error::format(path, "not valid UTF-8"))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(line)
            .map_err(|e| Error::format(path, format!("line {}: {}", i + 1, e)))?;
        entries.push(entry);
    }
    let base = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    Ok(DatasetManifest::from_entries(entries, base))
}

/// Generate a synthetic dataset: PDM recordings plus the JSONL manifest.
///
/// Timestamps step at roughly 10 Hz with jitter. Samples are rendered and
/// encoded in parallel; every per-sample seed derives from `(spec.seed,
/// sample index)`, so regeneration is byte-identical.
pub fn synth_dataset(spec: &SynthSpec, out_dir: &Path) -> Result<DatasetManifest> {
    if spec.classes.is_empty() {
        return Err(Error::parameter("no classes in dataset spec"));
    }
    if spec.classes.iter().any(|c| c.count < 1) {
        return Err(Error::parameter("class counts must be >= 1"));
    }
    ensure_dir(out_dir)?;
    let pdm_dir = out_dir.join("pdm");
    ensure_dir(&pdm_dir)?;

    let chirp = crate::signal::generate_chirp(&spec.chirp)?;
    let mut jobs = Vec::new();
    for class in &spec.classes {
        let damages: BTreeSet<Damage> = class.damages.iter().copied().collect();
        for _ in 0..class.count {
            jobs.push((class.material, damages.clone()));
        }
    }

    let entries: Vec<ManifestEntry> = jobs
        .par_iter()
        .enumerate()
        .map(|(idx, (material, damages))| -> Result<ManifestEntry> {
            let scene_seed = crate::seed::derive_seed(spec.seed, "sample", idx as u64);
            let scene = make_scene(*material, damages, scene_seed, &spec.signature);
            let params = RenderParams {
                n_samples: spec.record_samples,
                noise_db: f64::INFINITY,
                seed: 0,
            };
            let mut channels = render_echoes(&scene, &spec.geometry, &chirp, &params)?;
            // protective front-end gain: keep the strongest sample inside
            // the 1-bit modulator's input range
            let peak = channels
                .iter()
                .flat_map(|c| c.samples.iter())
                .fold(0.0f64, |m, v| m.max(v.abs()));
            if peak > 0.9 {
                let scale = 0.9 / peak;
                for ch in &mut channels {
                    for v in &mut ch.samples {
                        *v *= scale;
                    }
                }
            }
            // absolute sensor noise after the gain stage, then saturation
            if spec.noise_floor_db.is_finite() {
                let sigma = 10f64.powf(-spec.noise_floor_db / 20.0);
                let noise_seed = crate::seed::derive_seed(spec.seed, "render", idx as u64);
                for (c, ch) in channels.iter_mut().enumerate() {
                    let mut rng = rng_for(noise_seed, "sensor-noise", c as u64);
                    let normal = Normal::new(0.0, sigma).unwrap();
                    for v in &mut ch.samples {
                        *v = (*v + normal.sample(&mut rng)).clamp(-1.0, 1.0);
                    }
                }
            }
            let encoded: Result<Vec<_>> = channels
                .iter()
                .map(|ch| pdm_encode(ch, spec.oversample))
                .collect();
            let frame = PdmFrame::new(encoded?, chirp.sample_rate * spec.oversample as f64)?;
            let rel = format!("pdm/{:05}.pdm", idx);
            write_pdm(&out_dir.join(&rel), &frame)?;
            let mut rng = rng_for(spec.seed, "timestamp", idx as u64);
            let timestamp_s = 0.1 * idx as f64 + rng.random_range(-0.02..=0.02);
            Ok(ManifestEntry {
                path: rel,
                timestamp_s,
                labels: scene.labels(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = DatasetManifest::from_entries(entries, out_dir.to_path_buf());
    write_manifest(&out_dir.join("manifest.jsonl"), &manifest)?;
    Ok(manifest)
}

// ===========================================================================
// Tests
// ===========================================================================
