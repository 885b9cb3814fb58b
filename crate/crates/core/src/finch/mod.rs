//! First-neighbor hierarchical clustering (FINCH) and a k-means baseline.
//!
//! Every sample links to its nearest neighbour; connected components of the
//! resulting graph form a partition, and the procedure repeats on cluster
//! centroids until one cluster remains or nothing merges.

mod distance;
mod graph;
mod hierarchy;
mod kmeans;

pub use distance::{pairwise_distance, pairwise_distance_vecs, DistanceMetric};
pub use graph::{build_adjacency, connected_components, nearest_neighbors, NeighborGraph};
pub use hierarchy::{finch, finch_with_distances, ClusterHierarchy, GroupVeto, Partition};
pub use kmeans::{kmeans, KMeansResult};
