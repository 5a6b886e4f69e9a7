//! Scenes, normalization, time windows, CSV datasets and the synthetic generator.

pub mod csv_io;
pub mod normalize;
pub mod scene;
pub mod split;
pub mod synthetic;
pub mod windows;

pub use csv_io::{load_csv, save_csv};
pub use normalize::Normalizer;
pub use scene::Scene;
pub use split::{check_fractions, split_scenes, Splits, DEFAULT_SPLIT};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticDataset};
pub use windows::{plan_windows, WindowPlan};
