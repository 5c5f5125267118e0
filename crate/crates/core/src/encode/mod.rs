//! Numeric encoding of flow records and the feature spaces used for
//! clustering.

mod pca;
mod project;
mod recipe;

pub use pca::{fit_pca, PcaBasis, VARIANCE_TARGET};
pub use project::{project_features, FeatureSpace, MANUAL_SUBSET};
pub use recipe::{apply_recipe, fit_recipe, EncodingRecipe, FeatureMatrix, Field, OTHER, RECIPE_SCHEMA_VERSION};
