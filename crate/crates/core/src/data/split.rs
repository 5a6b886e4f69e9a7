use super::scene::Scene;
use crate::error::{Error, Result};

pub const DEFAULT_SPLIT: [f64; 3] = [0.65, 0.10, 0.25];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<Scene>,
    pub val: Vec<Scene>,
    pub test: Vec<Scene>,
}

pub fn check_fractions(fractions: [f64; 3]) -> Result<()> {
    let total: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(*f >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {fractions:?} must be nonnegative and sum to 1")));
    }
    Ok(())
}

/// Contiguous train/val/test partition by rounded fractions; the test split takes the remainder.
pub fn split_scenes(scenes: Vec<Scene>, fractions: [f64; 3]) -> Result<Splits> {
    check_fractions(fractions)?;
    let n = scenes.len();
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let mut it = scenes.into_iter();
    Ok(Splits {
        train: it.by_ref().take(n_train).collect(),
        val: it.by_ref().take(n_val).collect(),
        test: it.collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenes(n: usize) -> Vec<Scene> {
        (0..n)
            .map(|i| Scene::new(format!("s{i}"), vec![0, 1], 1, vec![0.0; 4]).unwrap())
            .collect()
    }

    #[test]
    fn default_ratios_on_200() {
        let s = split_scenes(scenes(200), DEFAULT_SPLIT).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (130, 20, 50));
        assert_eq!(s.val[0].scene_id, "s130");
    }

    #[test]
    fn bad_fractions_rejected() {
        assert!(split_scenes(scenes(4), [0.5, 0.5, 0.5]).is_err());
    }
}
