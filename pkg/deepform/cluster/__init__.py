"""K sampling, K-Means and the soft-assignment clustering loss."""

from .cluster_engine import ClusterEngine, ClusterState, KMeansResult

__all__ = ['ClusterEngine', 'ClusterState', 'KMeansResult']
