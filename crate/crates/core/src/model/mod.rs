pub mod config;
pub mod net;
pub mod params;

pub use config::ModelConfig;
pub use net::{build_groups, forward, BnUpdate, ForwardVars, Net, ShapeTrace, TemporalGroups};
pub use params::{init_params, is_trainable, manifest, ManifestEntry, ModelParams, ParamInit};
