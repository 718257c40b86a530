"""Partition -> fit -> max-min form -> network, in one call."""

from __future__ import annotations

from dataclasses import dataclass

from .cpwl import CpwlPredictor, assemble
from .data import MSE, Dataset, Loss
from .fitting import fit_group
from .netbuild import BuildConfig, CnnArch, build_cnn_network, build_fc_network
from .partition import Partition


@dataclass
class PipelineState:
    dataset: Dataset
    partition: Partition
    fits: list
    predictor: CpwlPredictor
    net: object
    loss: Loss = MSE
    arch: CnnArch | None = None
    config: BuildConfig | None = None


def run_pipeline(
    dataset: Dataset,
    partition: Partition,
    loss: Loss = MSE,
    config: BuildConfig | None = None,
    arch: CnnArch | None = None,
) -> PipelineState:
    """Fit every sample-bearing group and realize the resulting predictor.

    With ``arch`` given the network is a CNN whose first-layer filters are
    fitted per group; otherwise a fully-connected network is built.
    Raises :class:`~cpwl_minima.errors.ConsistencyError` when the max-min
    form cannot reproduce the group pieces (possible for ``dx > 1``).
    """
    if arch is not None:
        built = build_cnn_network(dataset, partition, arch, config, loss)
        return PipelineState(dataset, partition, built.fits, built.predictor, built.net, loss, arch, config)
    fits = [
        fit_group(dataset, partition, r, loss)
        for r in range(partition.n_regions)
        if partition.members(r).size
    ]
    predictor = assemble(dataset, partition, fits)
    net = build_fc_network(predictor, config, dataset.X)
    return PipelineState(dataset, partition, fits, predictor, net, loss, None, config)
