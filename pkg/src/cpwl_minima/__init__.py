"""Construct ReLU networks at spurious local minima of the empirical risk and check them."""

from .cpwl import CpwlPredictor, MaxMinForm, assemble, build_maxmin, eval_maxmin
from .data import ABSOLUTE, MSE, Dataset, Loss, gen_parabola, gen_vshape, get_loss, load_csv, risk, save_csv
from .fitting import AffinePiece, GroupFit, fit_group
from .netbuild import BuildConfig, CnnArch, build_cnn_network, build_fc_network, build_max_gadget, build_min_gadget
from .network import CnnNetwork, ReluNetwork, load_network, save_network
from .partition import Partition, Polytope, even_partition_1d, partition_1d, refine_isolate, split_by_hyperplane
from .pipeline import PipelineState, run_pipeline
from .runtime import forward_batch, network_risk, predict
from .verify import (
    ProbeConfig,
    best_contiguous_risks,
    demonstrate_spurious,
    derive_epsilon,
    enumerate_patterns_1d,
    probe_local_min,
)

__version__ = "0.1.0"
