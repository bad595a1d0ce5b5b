//! Discretized measures on `ℍ¹`: dense fields, tube rasterization, Lᵖ
//! integrals, Monte Carlo volumes, Korányi neighbourhoods, box counts and
//! power-law fits.

pub mod boxcount;
pub mod field;
pub mod fit;
pub mod raster;
pub mod volume;

pub use boxcount::{heis_box_count, heis_box_count_set};
pub use field::{lp_integral, Box3, ScalarField3};
pub use fit::{fit_powerlaw, ScalingFit};
pub use raster::{overlap_lp, rasterize_overlap, spacing_for, OverlapStats};
pub use volume::{
    koranyi_neighborhood_volume, mc_volume, HeisSet, HorizontalDisk, NeighborhoodVolume, PointSet,
    SampledSet, SegmentSet, VolumeEstimate,
};
