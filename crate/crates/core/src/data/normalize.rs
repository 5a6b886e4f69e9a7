use std::fs;
use std::path::Path;

use super::scene::Scene;
use crate::error::{Error, Result};

/// Per-axis min-max map from source units onto `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalizer {
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
}

// Relative slack when checking that data lies inside the bounds.
const COVER_TOL: f64 = 1e-9;

impl Normalizer {
    pub fn new(min_x: f64, max_x: f64, min_y: f64, max_y: f64) -> Result<Self> {
        if !(max_x > min_x) || !(max_y > min_y) {
            return Err(Error::Config(format!(
                "degenerate normalization range x [{min_x}, {max_x}], y [{min_y}, {max_y}]"
            )));
        }
        Ok(Normalizer {
            min_x,
            max_x,
            min_y,
            max_y,
        })
    }

    /// Tight bounds over every position of `scenes`.
    pub fn fit(scenes: &[Scene]) -> Result<Self> {
        let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for s in scenes {
            for p in s.raw_positions().chunks_exact(2) {
                b[0] = b[0].min(p[0]);
                b[1] = b[1].max(p[0]);
                b[2] = b[2].min(p[1]);
                b[3] = b[3].max(p[1]);
            }
        }
        Normalizer::new(b[0], b[1], b[2], b[3])
    }

    fn axis(&self, d: usize) -> (f64, f64) {
        if d == 0 {
            (self.min_x, self.max_x)
        } else {
            (self.min_y, self.max_y)
        }
    }

    pub fn normalize_value(&self, v: f64, d: usize) -> f64 {
        let (lo, hi) = self.axis(d);
        (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
    }

    pub fn denormalize_value(&self, v: f64, d: usize) -> f64 {
        let (lo, hi) = self.axis(d);
        lo + (v + 1.0) * 0.5 * (hi - lo)
    }

    pub fn denormalize_point(&self, p: [f64; 2]) -> [f64; 2] {
        [self.denormalize_value(p[0], 0), self.denormalize_value(p[1], 1)]
    }

    /// Maps a raw scene into normalized coordinates; data outside the bounds is an error.
    pub fn normalize(&self, scene: &Scene) -> Result<Scene> {
        let mut out = scene.clone();
        for i in 0..scene.num_agents() {
            for t in 0..scene.steps() {
                let p = scene.position(i, t);
                let mut q = [0.0; 2];
                for d in 0..2 {
                    let (lo, hi) = self.axis(d);
                    let slack = COVER_TOL * (hi - lo);
                    if !(p[d] >= lo - slack && p[d] <= hi + slack) {
                        return Err(Error::MalformedData(format!(
                            "scene {}: agent {i} step {t} coordinate {} outside [{lo}, {hi}]",
                            scene.scene_id, p[d]
                        )));
                    }
                    q[d] = self.normalize_value(p[d], d);
                }
                out.set_position(i, t, q);
            }
        }
        Ok(out)
    }

    pub fn denormalize(&self, scene: &Scene) -> Scene {
        let mut out = scene.clone();
        for i in 0..scene.num_agents() {
            for t in 0..scene.steps() {
                out.set_position(i, t, self.denormalize_point(scene.position(i, t)));
            }
        }
        out
    }

    /// Sidecar text: four `name = value` lines.
    pub fn to_sidecar(&self) -> String {
        format!(
            "min_x = {:?}\nmax_x = {:?}\nmin_y = {:?}\nmax_y = {:?}\n",
            self.min_x, self.max_x, self.min_y, self.max_y
        )
    }

    pub fn from_sidecar(text: &str) -> Result<Self> {
        let mut vals: [Option<f64>; 4] = [None; 4];
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (name, value) = line
                .split_once('=')
                .ok_or_else(|| Error::MalformedData(format!("sidecar line `{line}`")))?;
            let slot = match name.trim() {
                "min_x" => 0,
                "max_x" => 1,
                "min_y" => 2,
                "max_y" => 3,
                other => return Err(Error::MalformedData(format!("unknown sidecar key `{other}`"))),
            };
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::MalformedData(format!("bad sidecar value `{}`", value.trim())))?;
            vals[slot] = Some(v);
        }
        match vals {
            [Some(a), Some(b), Some(c), Some(d)] => Normalizer::new(a, b, c, d),
            _ => Err(Error::MalformedData("sidecar needs min_x, max_x, min_y, max_y".into())),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_sidecar()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Normalizer::from_sidecar(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn norm() -> Normalizer {
        Normalizer::new(-16.0, 40.0, 0.0, 15.24).unwrap()
    }

    #[test]
    fn endpoints_and_midpoint() {
        let n = norm();
        assert_eq!(n.normalize_value(-16.0, 0), -1.0);
        assert_eq!(n.normalize_value(40.0, 0), 1.0);
        assert_eq!(n.normalize_value(12.0, 0), 0.0);
        assert_eq!(n.normalize_value(7.62, 1), 0.0);
    }

    #[test]
    fn degenerate_range_is_config_error() {
        assert!(matches!(Normalizer::new(1.0, 1.0, 0.0, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn round_trip_within_1e12() {
        let n = norm();
        let mut rng = RngStream::new(5, 0);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let x = rng.uniform(n.min_x, n.max_x);
            let y = rng.uniform(n.min_y, n.max_y);
            let back = n.denormalize_point([n.normalize_value(x, 0), n.normalize_value(y, 1)]);
            worst = worst.max((back[0] - x).abs()).max((back[1] - y).abs());
        }
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn out_of_range_data_rejected() {
        let n = Normalizer::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let s = Scene::new("s", vec![0, 0], 1, vec![0.5, 0.5, 2.0, 0.5]).unwrap();
        assert!(matches!(n.normalize(&s), Err(Error::MalformedData(_))));
    }

    #[test]
    fn sidecar_round_trip() {
        let n = Normalizer::new(-0.1, 28.65, 1e-3, 15.24).unwrap();
        assert_eq!(Normalizer::from_sidecar(&n.to_sidecar()).unwrap(), n);
    }
}
