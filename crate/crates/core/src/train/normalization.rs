use crate::error::{parse_value as parse, Error, Result};
use crate::trajectory::Trajectory;

/// Affine temperature scaling shared by training and rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationStats {
    pub temp_mean: f64,
    pub temp_std: f64,
    /// Statistics of one-frame temperature increments.
    pub delta_mean: f64,
    pub delta_std: f64,
}

impl Default for NormalizationStats {
    fn default() -> Self {
        Self { temp_mean: 0.0, temp_std: 1.0, delta_mean: 0.0, delta_std: 1.0 }
    }
}

impl NormalizationStats {
    /// Population statistics over every node of every frame (and every
    /// consecutive frame pair for the increments). A zero spread falls back
    /// to one so scaling stays invertible.
    pub fn from_trajectories(trajectories: &[Trajectory]) -> Result<Self> {
        let (mut n, mut s, mut ss) = (0usize, 0.0, 0.0);
        let (mut dn, mut ds, mut dss) = (0usize, 0.0, 0.0);
        for traj in trajectories {
            for snap in &traj.snapshots {
                for &t in &snap.temperatures {
                    n += 1;
                    s += t;
                }
            }
            for pair in traj.snapshots.windows(2) {
                for (a, b) in pair[0].temperatures.iter().zip(&pair[1].temperatures) {
                    dn += 1;
                    ds += b - a;
                }
            }
        }
        if n == 0 {
            return Err(Error::InvalidConfig("no temperatures to normalise".into()));
        }
        let temp_mean = s / n as f64;
        let delta_mean = if dn > 0 { ds / dn as f64 } else { 0.0 };
        for traj in trajectories {
            for snap in &traj.snapshots {
                ss += snap.temperatures.iter().map(|t| (t - temp_mean).powi(2)).sum::<f64>();
            }
            for pair in traj.snapshots.windows(2) {
                for (a, b) in pair[0].temperatures.iter().zip(&pair[1].temperatures) {
                    dss += (b - a - delta_mean).powi(2);
                }
            }
        }
        let spread = |sum_sq: f64, count: usize| {
            let sd = if count > 0 { (sum_sq / count as f64).sqrt() } else { 0.0 };
            if sd > 0.0 && sd.is_finite() {
                sd
            } else {
                log::warn!("degenerate spread in normalisation data, using 1");
                1.0
            }
        };
        Ok(Self {
            temp_mean,
            temp_std: spread(ss, n),
            delta_mean,
            delta_std: spread(dss, dn),
        })
    }

    pub fn normalize(&self, t: f64) -> f64 {
        (t - self.temp_mean) / self.temp_std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.temp_std + self.temp_mean
    }

    /// Typical increment in normalised units; multiplies the decoder output
    /// in residual mode.
    pub fn residual_scale(&self) -> f64 {
        self.delta_std / self.temp_std
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.temp_std) && ok(self.delta_std) && self.temp_mean.is_finite() && self.delta_mean.is_finite()) {
            return Err(Error::InvalidConfig(format!("bad normalisation statistics {self:?}")));
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("temp_mean", self.temp_mean.to_string()),
            ("temp_std", self.temp_std.to_string()),
            ("delta_mean", self.delta_mean.to_string()),
            ("delta_std", self.delta_std.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "temp_mean" => self.temp_mean = parse(key, value)?,
            "temp_std" => self.temp_std = parse(key, value)?,
            "delta_mean" => self.delta_mean = parse(key, value)?,
            "delta_std" => self.delta_std = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::CavityMesh;
    use crate::trajectory::PhysicalParams;
    use proptest::prelude::*;

    #[test]
    fn stats_of_a_two_frame_trajectory() {
        let mesh = CavityMesh::new(1, 4, 1.0).unwrap();
        let a = vec![300.0; 16];
        let b = vec![302.0; 16];
        let traj = Trajectory::from_frames(mesh, PhysicalParams::default(), vec![a, b]).unwrap();
        let s = NormalizationStats::from_trajectories(&[traj]).unwrap();
        assert_eq!(s.temp_mean, 301.0);
        assert_eq!(s.temp_std, 1.0);
        assert_eq!(s.delta_mean, 2.0);
        // every increment equals the mean, so the spread falls back to one
        assert_eq!(s.delta_std, 1.0);
        s.validate().unwrap();
    }

    #[test]
    fn key_values_round_trip() {
        let s = NormalizationStats { temp_mean: 300.123456789, temp_std: 0.1, delta_mean: -1e-7, delta_std: 3e-4 };
        let mut back = NormalizationStats::default();
        for (k, v) in s.to_key_values() {
            assert!(back.set(k, &v).unwrap());
        }
        assert_eq!(back, s);
    }

    proptest! {
        #[test]
        fn denormalize_inverts_normalize(t in 250.0f64..350.0, mean in 299.0f64..302.0, std in 0.01f64..2.0) {
            let s = NormalizationStats { temp_mean: mean, temp_std: std, ..Default::default() };
            let back = s.denormalize(s.normalize(t));
            let ulp = t.abs().log2().floor().exp2() * f64::EPSILON;
            prop_assert!((back - t).abs() <= ulp, "{} vs {}", back, t);
        }
    }
}
