"""Finite sub-sigma-algebras, conditional expectations and their convergence."""

from .core import (FiniteProbSpace, Partition, all_partitions, as_randvec, block_probs, inner,
                   is_measurable, norm2, partitions_equal, random_partition, random_space)
from .lattice import independent, join, meet
from .metric import TestFamily, d_kappa, default_family, extract_convergent_subsequence
from .projection import (CondExpOperator, ProjectionCandidate, check_markov_characterization, cond_exp,
                         operator_norm_dev, operator_of, partition_from_projection)

__version__ = "0.1.0"
