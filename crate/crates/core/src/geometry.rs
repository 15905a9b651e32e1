//! DOA grid, microphone geometry and the free-field TDOA predictor.

use serde::{Deserialize, Serialize};

use crate::{pair_order, Error, Result};

/// Direction of arrival in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Doa {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl Doa {
    pub fn new(azimuth_deg: f64, elevation_deg: f64) -> Self {
        Self {
            azimuth_deg,
            elevation_deg,
        }
    }

    /// Unit vector `(cosθ cosφ, cosθ sinφ, sinθ)`.
    pub fn unit_vector(&self) -> [f64; 3] {
        let (phi, theta) = (self.azimuth_deg.to_radians(), self.elevation_deg.to_radians());
        [
            theta.cos() * phi.cos(),
            theta.cos() * phi.sin(),
            theta.sin(),
        ]
    }
}

/// Regular azimuth × elevation grid, indexed `q = elevation_index · n_az + azimuth_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoaGrid {
    pub azimuths_deg: Vec<f64>,
    pub elevations_deg: Vec<f64>,
}

impl Default for DoaGrid {
    fn default() -> Self {
        Self {
            azimuths_deg: (0..36).map(|i| -180.0 + 10.0 * i as f64).collect(),
            elevations_deg: (0..9).map(|i| -40.0 + 10.0 * i as f64).collect(),
        }
    }
}

impl DoaGrid {
    pub fn num_azimuths(&self) -> usize {
        self.azimuths_deg.len()
    }

    pub fn num_elevations(&self) -> usize {
        self.elevations_deg.len()
    }

    pub fn len(&self) -> usize {
        self.azimuths_deg.len() * self.elevations_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, azimuth_index: usize, elevation_index: usize) -> usize {
        elevation_index * self.num_azimuths() + azimuth_index
    }

    /// `(azimuth_index, elevation_index)` of grid point `q`.
    pub fn split(&self, q: usize) -> (usize, usize) {
        (q % self.num_azimuths(), q / self.num_azimuths())
    }

    pub fn lookup(&self, q: usize) -> Result<Doa> {
        if q >= self.len() {
            return Err(Error::invalid(format!(
                "DOA index {q} out of range ({} grid points)",
                self.len()
            )));
        }
        let (a, e) = self.split(q);
        Ok(Doa::new(self.azimuths_deg[a], self.elevations_deg[e]))
    }

    /// Grid index of an on-grid direction. Azimuths are compared modulo 360°.
    pub fn find(&self, doa: Doa) -> Option<usize> {
        const TOL: f64 = 1e-6;
        let az = wrap_degrees(doa.azimuth_deg);
        let a = self
            .azimuths_deg
            .iter()
            .position(|&v| wrap_degrees(v - az).abs() < TOL)?;
        let e = self
            .elevations_deg
            .iter()
            .position(|&v| (v - doa.elevation_deg).abs() < TOL)?;
        Some(self.index(a, e))
    }
}

/// Wrap an angle into `[-180, 180)`.
pub fn wrap_degrees(deg: f64) -> f64 {
    (deg + 180.0).rem_euclid(360.0) - 180.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    /// Microphone positions in meters.
    pub mic_positions: Vec<[f64; 3]>,
    #[serde(default = "default_speed_of_sound")]
    pub speed_of_sound: f64,
}

fn default_speed_of_sound() -> f64 {
    343.0
}

impl ArrayGeometry {
    pub fn new(mic_positions: Vec<[f64; 3]>, speed_of_sound: f64) -> Result<Self> {
        let g = Self {
            mic_positions,
            speed_of_sound,
        };
        g.validate()?;
        Ok(g)
    }

    /// Regular tetrahedron of the given circumradius, with capsules at
    /// (az, el) = (45°, 35°), (-45°, -35°), (135°, -35°), (-135°, 35°).
    pub fn tetrahedron(radius_m: f64) -> Self {
        let el = (1.0f64 / 3.0f64.sqrt()).asin().to_degrees();
        let mic_positions = [(45.0, el), (-45.0, -el), (135.0, -el), (-135.0, el)]
            .into_iter()
            .map(|(az, el)| {
                let u = Doa::new(az, el).unit_vector();
                [radius_m * u[0], radius_m * u[1], radius_m * u[2]]
            })
            .collect();
        Self {
            mic_positions,
            speed_of_sound: default_speed_of_sound(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mic_positions.len() < 2 {
            return Err(Error::invalid("geometry needs at least two microphones"));
        }
        if !(self.speed_of_sound.is_finite() && self.speed_of_sound > 0.0) {
            return Err(Error::invalid("speed_of_sound must be positive"));
        }
        for (i, j) in pair_order(self.mic_positions.len()) {
            if distance(&self.mic_positions[i], &self.mic_positions[j]) < 1e-9 {
                return Err(Error::invalid(format!(
                    "microphones {i} and {j} are coincident"
                )));
            }
        }
        Ok(())
    }

    pub fn num_mics(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn num_pairs(&self) -> usize {
        let m = self.num_mics();
        m * (m - 1) / 2
    }

    /// Largest possible |TDOA| over all pairs and directions, in samples.
    pub fn max_tdoa(&self, sample_rate_hz: f64) -> f64 {
        pair_order(self.num_mics())
            .into_iter()
            .map(|(i, j)| distance(&self.mic_positions[i], &self.mic_positions[j]))
            .fold(0.0, f64::max)
            * sample_rate_hz
            / self.speed_of_sound
    }

    /// Arrival delay of each microphone relative to the array origin, in
    /// samples (negative for capsules the wavefront reaches first).
    pub fn arrival_delays(&self, doa: Doa, sample_rate_hz: f64) -> Vec<f64> {
        let u = doa.unit_vector();
        self.mic_positions
            .iter()
            .map(|p| -sample_rate_hz * dot(&u, p) / self.speed_of_sound)
            .collect()
    }
}

/// Far-field TDOA of every pair in canonical order, in samples.
///
/// `τ_ij = f_S · u·(p_j − p_i) / c`: positive when microphone `i` lags
/// microphone `j`, the same convention as [`crate::dsp::gcc_phat`].
pub fn predict_freefield(geometry: &ArrayGeometry, doa: Doa, sample_rate_hz: f64) -> Vec<f64> {
    let delays = geometry.arrival_delays(doa, sample_rate_hz);
    pair_order(geometry.num_mics())
        .into_iter()
        .map(|(i, j)| delays[i] - delays[j])
        .collect()
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}
