use serde::{Deserialize, Serialize};

use super::pca::{fit_pca, PcaBasis};
use super::recipe::{EncodingRecipe, Field};
use crate::config::ClusteringFeatures;
use crate::error::{Error, Result};
use crate::filter1::Autoencoder;
use crate::matrix::Matrix;

/// Columns of the manually selected subset, in output order.
pub const MANUAL_SUBSET: [Field; 5] = [
    Field::OctetDeltaCount,
    Field::AvgPacketSize,
    Field::FlowDuration,
    Field::SameDestIpCount,
    Field::SameDestPortCount,
];

/// The space in which the known-behavior filter clusters flows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureSpace {
    All,
    ManualSubset { columns: Vec<usize> },
    Pca(PcaBasis),
    /// Bottleneck activations of the frequency filter's autoencoder.
    AeBottleneck,
}

impl FeatureSpace {
    pub fn tag(&self) -> ClusteringFeatures {
        match self {
            FeatureSpace::All => ClusteringFeatures::All,
            FeatureSpace::ManualSubset { .. } => ClusteringFeatures::ManualSubset,
            FeatureSpace::Pca(_) => ClusteringFeatures::Pca,
            FeatureSpace::AeBottleneck => ClusteringFeatures::AeBottleneck,
        }
    }

    /// Prepares the space. PCA is fitted on `fit_rows`, which should be the
    /// infrequent training rows.
    pub fn fit(mode: ClusteringFeatures, recipe: &EncodingRecipe, fit_rows: &Matrix) -> Result<Self> {
        Ok(match mode {
            ClusteringFeatures::All => FeatureSpace::All,
            ClusteringFeatures::ManualSubset => {
                let columns = MANUAL_SUBSET
                    .iter()
                    .map(|f| {
                        recipe.column_index(f.name()).ok_or_else(|| {
                            Error::Config(format!("manual subset column {} missing from recipe", f.name()))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                FeatureSpace::ManualSubset { columns }
            }
            ClusteringFeatures::Pca => FeatureSpace::Pca(fit_pca(fit_rows)?),
            ClusteringFeatures::AeBottleneck => FeatureSpace::AeBottleneck,
        })
    }

    pub fn project(&self, x: &Matrix, ae: Option<&Autoencoder>) -> Result<Matrix> {
        match self {
            FeatureSpace::All => Ok(x.clone()),
            FeatureSpace::ManualSubset { columns } => {
                if let Some(&bad) = columns.iter().find(|&&j| j >= x.cols()) {
                    return Err(Error::DimensionMismatch { expected: bad + 1, actual: x.cols() });
                }
                Ok(x.select_cols(columns))
            }
            FeatureSpace::Pca(basis) => basis.project(x),
            FeatureSpace::AeBottleneck => ae
                .ok_or_else(|| Error::Config("bottleneck projection needs the trained autoencoder".into()))?
                .bottleneck_rows(x),
        }
    }
}

/// Fits the requested space on `fit_rows` and projects `x` into it.
pub fn project_features(
    x: &Matrix,
    mode: ClusteringFeatures,
    recipe: &EncodingRecipe,
    fit_rows: &Matrix,
    ae: Option<&Autoencoder>,
) -> Result<(Matrix, FeatureSpace)> {
    let space = FeatureSpace::fit(mode, recipe, fit_rows)?;
    let out = space.project(x, ae)?;
    Ok((out, space))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PipelineConfig;
    use crate::encode::fit_recipe;
    use crate::model::tests::sample_record;

    fn setup() -> (EncodingRecipe, Matrix) {
        let flows: Vec<_> = (0..10)
            .map(|i| {
                let mut r = sample_record();
                r.octet_delta_count = 10 * (i + 1);
                r.packet_delta_count = 1;
                r.avg_packet_size = r.octet_delta_count as f64;
                r.flow_duration_milliseconds = i * i;
                r.same_dest_ip_count_pool = i as u32;
                r
            })
            .collect();
        let recipe = fit_recipe(&flows, &PipelineConfig::default()).unwrap();
        let m = recipe.apply(&flows).values;
        (recipe, m)
    }

    #[test]
    fn all_is_identity() {
        let (recipe, m) = setup();
        let (out, space) = project_features(&m, ClusteringFeatures::All, &recipe, &m, None).unwrap();
        assert_eq!(out, m);
        assert_eq!(space.tag(), ClusteringFeatures::All);
    }

    #[test]
    fn manual_subset_has_five_ordered_columns() {
        let (recipe, m) = setup();
        let (out, space) = project_features(&m, ClusteringFeatures::ManualSubset, &recipe, &m, None).unwrap();
        assert_eq!(out.cols(), 5);
        let FeatureSpace::ManualSubset { columns } = space else { panic!() };
        let names: Vec<&str> = columns.iter().map(|&j| recipe.columns()[j].as_str()).collect();
        assert_eq!(
            names,
            ["octet_delta_count", "avg_packet_size", "flow_duration_milliseconds",
             "same_dest_IP_count_pool", "same_dest_port_count_pool"]
        );
    }

    #[test]
    fn bottleneck_dimension_and_missing_model() {
        let (recipe, m) = setup();
        let ae = Autoencoder::new(m.cols(), 1).unwrap();
        let (out, _) = project_features(&m, ClusteringFeatures::AeBottleneck, &recipe, &m, Some(&ae)).unwrap();
        assert_eq!(out.cols(), (0.25 * m.cols() as f64).round() as usize);
        assert!(project_features(&m, ClusteringFeatures::AeBottleneck, &recipe, &m, None).is_err());
    }

    #[test]
    fn pca_projection_width_is_retained_count() {
        let (recipe, m) = setup();
        let (out, space) = project_features(&m, ClusteringFeatures::Pca, &recipe, &m, None).unwrap();
        let FeatureSpace::Pca(b) = space else { panic!() };
        assert_eq!(out.cols(), b.retained);
    }
}
