"""LiDAR place recognition with a learned Mahalanobis metric (MAPVLM)."""
from .descriptors import DescriptorSet, assign_place_classes, baseline_descriptor
from .mapvlm import MapvlmConfig, MetricModel, fit
from .metric_index import build_index, mahalanobis_distance, query_knn
from .projection import ProjectionConfig, project_pgv

__all__ = [
    "DescriptorSet", "MapvlmConfig", "MetricModel", "ProjectionConfig",
    "assign_place_classes", "baseline_descriptor", "build_index", "fit",
    "mahalanobis_distance", "project_pgv", "query_knn",
]
