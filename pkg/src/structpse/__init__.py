"""Feature-Structuralization and P/SE pretraining-target toolkit."""

from .graph import Graph, NodeMark, RandomFeatureSpec, add_virtual_node, inject_random_features, validate
from .pse import PseConfig, PseTargets, assemble_targets
from .structuralize import (structuralize, structuralize_categorical, structuralize_continuous,
                            structuralize_edge_features)

__version__ = "0.1.0"

__all__ = ["Graph", "NodeMark", "RandomFeatureSpec", "add_virtual_node", "inject_random_features",
           "validate", "PseConfig", "PseTargets", "assemble_targets", "structuralize",
           "structuralize_categorical", "structuralize_continuous", "structuralize_edge_features"]
