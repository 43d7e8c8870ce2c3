//! Synthetic benchmark data: input-function samplers, forward solvers,
//! dataset assembly and file formats.

mod antiderivative;
mod burgers;
mod dataset;
mod gp;
mod grf;
mod grid;
mod harmonic;
mod reaction_diffusion;

pub use antiderivative::{antiderivative_solve, unit_grid};
pub use burgers::{Burgers, BurgersSolution};
pub use dataset::{
    build_dataset, sidecar_path, AntiderivativeSpec, BurgersSpec, Dataset, Dims, FunctionPair, GeneratorSpec,
    Provenance, ReactionDiffusionSpec, DATA_MAGIC, DATA_VERSION, MIN_TARGET_NORM,
};
pub use gp::{gp_sample, rbf_kernel, GpConfig, GpSampler};
pub use grf::{cosine_mode, grf_mode_std, grf_sample, GrfSample};
pub use grid::{export_grid_data, ingest_grid_data, read_grid_data, GridData, Stride, GRID_MAGIC, GRID_VERSION};
pub use harmonic::harmonic_expand;
pub use reaction_diffusion::{linear_series_solution, ReactionDiffusion, SpaceTimeField};
