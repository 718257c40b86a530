"""Empirical certification of local minima, spuriousness by refinement, and 1-D enumeration.

Local minimality is checked, not proven: a seeded random probe perturbs the
weights within a margin-derived radius and watches both the risk and the
activation patterns.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import MSE, Dataset, Loss
from .errors import ArgumentError, CombinatorialExplosionError, MarginError
from .fitting import fit_affine, group_loss
from .network import CnnNetwork, ConvStage, ReluNetwork
from .partition import distinct_x, refine_isolate
from .pipeline import PipelineState, run_pipeline
from .runtime import _conv, _pool, forward_batch, network_risk, relu

DELTA_TOL = 1e-12
DISTINCT_TOL = 1e-9
MAX_ENUMERATION = 100_000


def _param_blocks(net):
    """(name, W-like operator, fan_in) for each parameterized stage in forward order.

    Pooling stages appear as ``None`` entries: they carry no parameters and
    are 1-Lipschitz in the max-norm.
    """
    if isinstance(net, ReluNetwork):
        return [(f"fc{i}", l.W, l.cols) for i, l in enumerate(net.layers)]
    blocks = []
    i = 0
    for st in net.stages:
        if isinstance(st, ConvStage):
            blocks.append((f"conv{i}", st.filters, st.size))
            i += 1
        else:
            blocks.append(None)
    return blocks + _param_blocks(net.fc)


def _stage_inputs(net, X) -> list[float]:
    """Max absolute value of the input to every stage (over samples), plus the final output."""
    X = np.asarray(X, float)
    out = []
    if isinstance(net, CnnNetwork):
        F = X[:, None, :]
        for st in net.stages:
            out.append(float(np.max(np.abs(F))))
            F = relu(_conv(st, F)) if isinstance(st, ConvStage) else _pool(st, F)
        Y = F.reshape(F.shape[0], -1)
    else:
        Y = X
    for layer in (net.fc if isinstance(net, CnnNetwork) else net).layers:
        out.append(float(np.max(np.abs(Y))))
        Y = relu(Y @ layer.W.T + layer.b)
    return out


def _sensitivity(net, X, eps=None):
    """Propagate a max-norm perturbation bound through the activation stages.

    Returns the per-activation-stage bounds. With ``eps=None`` the first-order
    coefficients ``s_l`` are returned (bound = eps * s_l); otherwise the
    exact recurrence ``e_l = |W_l| e_{l-1} + eps (fan_in (Y + e_{l-1}) + 1)``.
    """
    blocks = _param_blocks(net)
    ys = _stage_inputs(net, X)
    e = 0.0
    bounds = []
    for blk, y in zip(blocks[:-1], ys):
        if blk is None:
            continue  # pooling: bound passes through
        _, W, fan_in = blk
        op = float(np.max(np.sum(np.abs(W), axis=1)))
        if eps is None:
            e = op * e + (fan_in + 1) * max(1.0, y)
        else:
            e = op * e + eps * (fan_in * (y + e) + 1)
        bounds.append(e)
    return bounds


def derive_epsilon(net, dataset: Dataset) -> float:
    """Entrywise perturbation radius that provably keeps every activation pattern.

    ``s_l`` bounds how far layer ``l`` pre-activations move per unit of
    entrywise weight/bias change (first order, using layer max-norms, fan-in
    and the largest intermediate activation over samples). The radius is
    ``min_margin / (L * max_l s_l) / 2`` with ``L`` activation stages, then
    halved until the exact (second-order inclusive) recurrence stays below
    the margin.

    Raises
    ------
    MarginError
        If some sample has a pre-activation exactly at zero.
    """
    fw = forward_batch(net, dataset.X)
    margins = fw.margins
    if not fw.preacts:
        return math.inf
    i = int(np.argmin(margins))
    m = float(margins[i])
    if not m > 0:
        raise MarginError(
            f"sample {i} (x={dataset.X[i].tolist()}) lies on an activation boundary; "
            "local minimality cannot be certified",
            sample_index=i,
        )
    s = _sensitivity(net, dataset.X)
    eps = m / (len(s) * max(s)) / 2
    while max(_sensitivity(net, dataset.X, eps)) >= m:
        eps /= 2
    return eps


@dataclass
class ProbeConfig:
    """Seeded perturbation probe settings.

    ``epsilon=None`` means "use :func:`derive_epsilon`". ``layers`` restricts
    the perturbation to parameters whose name starts with one of the given
    prefixes (``"fc1"``, ``"conv0"``, ...); ``None`` perturbs everything.
    """

    trials: int = 1000
    epsilon: float | None = None
    seed: int = 0
    scales: tuple = (1.0, 0.5, 0.25)
    layers: tuple | None = None

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ArgumentError("trials must be a positive integer")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ArgumentError("epsilon must be positive")
        if not self.scales or any(not 0 < s <= 1 for s in self.scales):
            raise ArgumentError("scales must lie in (0, 1]")


@dataclass
class ProbeOutcome:
    trials: int
    epsilon: float
    min_delta: float
    pattern_changes: int
    flipped_entries: int
    base_risk: float
    perturbed: list = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.min_delta >= -DELTA_TOL and self.pattern_changes == 0

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "epsilon": self.epsilon,
            "min_delta": self.min_delta,
            "pattern_changes": self.pattern_changes,
            "flipped_entries": self.flipped_entries,
            "perturbed": list(self.perturbed),
            "certified": self.certified,
        }


def _workers(n_tasks: int) -> int:
    cap = os.environ.get("CPWL_THREADS")
    limit = int(cap) if cap else min(4, os.cpu_count() or 1)
    return max(1, min(limit, n_tasks))


def probe_local_min(net, dataset: Dataset, loss: Loss = MSE, cfg: ProbeConfig | None = None) -> ProbeOutcome:
    """Randomly perturb the weights and record risk changes and pattern flips.

    Trial ``t`` draws i.i.d. uniform entries in ``[-eps*s, eps*s]`` with
    ``s = scales[t % len(scales)]`` from a generator seeded by
    ``(seed, t)``, so results do not depend on scheduling.
    """
    cfg = cfg or ProbeConfig()
    eps = derive_epsilon(net, dataset) if cfg.epsilon is None else float(cfg.epsilon)
    base = network_risk(net, dataset, loss)
    params = net.params()
    names = net.param_names()
    if cfg.layers is None:
        chosen = list(range(len(params)))
    else:
        prefixes = tuple(cfg.layers)
        chosen = [i for i, n in enumerate(names) if n.split(".")[0] in prefixes]
        if not chosen:
            raise ArgumentError(f"no parameters match layers {list(prefixes)}; have {names}")

    def trial(t):
        rng = np.random.default_rng([cfg.seed, t])
        r = eps * cfg.scales[t % len(cfg.scales)]
        new = list(params)
        for i in chosen:
            new[i] = params[i] + rng.uniform(-r, r, size=params[i].shape)
        pert = network_risk(net.with_params(new), dataset, loss)
        flips = int(np.count_nonzero(pert.patterns != base.patterns))
        return pert.risk - base.risk, flips

    n = int(cfg.trials)
    workers = _workers(n)
    if workers == 1:
        results = [trial(t) for t in range(n)]
    else:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(trial, range(n)))
    deltas = [d for d, _ in results]
    flips = [f for _, f in results]
    return ProbeOutcome(
        trials=n,
        epsilon=eps,
        min_delta=float(min(deltas)),
        pattern_changes=sum(1 for f in flips if f),
        flipped_entries=int(sum(flips)),
        base_risk=base.risk,
        perturbed=[names[i] for i in chosen],
    )


def gadget_layer_names(net) -> list[str]:
    """Parameter-group names of the layers above the piece layer."""
    fc = net.fc if isinstance(net, CnnNetwork) else net
    return [f"fc{i}" for i in range(1, len(fc.layers))]


def group_pattern_constancy(net, dataset: Dataset, partition) -> dict:
    """Whether all samples of each group share one activation pattern.

    Constant patterns make the network affine on each group, which is what
    ties per-group optimality to local minimality.
    """
    pats = forward_batch(net, dataset.X).patterns
    varying = []
    for r in range(partition.n_regions):
        idx = partition.members(r)
        if idx.size > 1 and np.any(pats[idx] != pats[idx[0]]):
            varying.append(r)
    return {"constant": not varying, "varying_groups": varying}


# ---------------------------------------------------------------------------
# spuriousness


@dataclass
class CertificationReport:
    base_risk: float
    base_probe: ProbeOutcome
    base_patterns: dict
    n_groups: int
    refinement: dict | None
    refined_probe: ProbeOutcome | None
    is_local_min_certified: bool
    is_spurious_demonstrated: bool
    verdict: str
    seed: int = 0

    def __post_init__(self):
        if self.is_spurious_demonstrated:
            assert self.refinement["refined_risk"] < self.base_risk - DELTA_TOL

    def to_dict(self) -> dict:
        return {
            "base_risk": self.base_risk,
            "n_groups": self.n_groups,
            "probe": self.base_probe.to_dict(),
            "group_patterns": self.base_patterns,
            "refinement": self.refinement,
            "refined_probe": None if self.refined_probe is None else self.refined_probe.to_dict(),
            "verdicts": {
                "is_local_min_certified": self.is_local_min_certified,
                "is_spurious_demonstrated": self.is_spurious_demonstrated,
                "verdict": self.verdict,
                "note": "local minimality certified up to the probe budget",
            },
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _pick_max(values, idx):
    """Index (from ``idx``) of the largest value; near-ties go to the lowest index."""
    values = np.asarray(values, float)
    top = values.max()
    return int(min(i for i, v in zip(idx, values) if v >= top - DELTA_TOL))


def demonstrate_spurious(state: PipelineState, cfg: ProbeConfig | None = None) -> CertificationReport:
    """Probe the built network, then isolate its worst sample and rebuild.

    The group with the largest summed loss is chosen, and inside it the
    sample with the largest loss. That sample is split off into its own
    region, every subgroup is refitted, and the new network must reach a
    strictly lower risk while itself passing the probe.
    """
    cfg = cfg or ProbeConfig()
    ds, loss = state.dataset, state.loss
    base = network_risk(state.net, ds, loss)
    probe = probe_local_min(state.net, ds, loss, cfg)
    patterns = group_pattern_constancy(state.net, ds, state.partition)
    n_groups = len(state.fits)
    certified = probe.certified

    group_risks = [f.group_risk for f in state.fits]
    if max(group_risks) <= DELTA_TOL:
        return CertificationReport(
            base.risk, probe, patterns, n_groups, None, None, certified, False,
            "not spurious, global minimum, risk 0", cfg.seed,
        )

    fit = state.fits[_pick_max(group_risks, range(n_groups))]
    members = state.partition.members(fit.region_idx)
    sample = _pick_max(base.losses[members], members)
    refined_part = refine_isolate(ds, state.partition, fit.region_idx, sample)
    refined = run_pipeline(ds, refined_part, loss, state.config, state.arch)
    refined_risk = network_risk(refined.net, ds, loss)

    subgroups = []
    for f in refined.fits:
        if refined_part.origin[f.region_idx] != fit.region_idx:
            continue
        idx = refined_part.members(f.region_idx)
        parent = group_loss(fit.piece, ds.X[idx], ds.Y[idx], loss)
        subgroups.append({
            "samples": [int(i) for i in idx],
            "refit_loss": f.group_risk,
            "parent_loss": parent,
            "not_worse": f.group_risk <= parent + DELTA_TOL * max(1.0, abs(parent)),
        })
    decrease = refined_risk.risk < base.risk - DELTA_TOL
    try:
        refined_probe = probe_local_min(refined.net, ds, loss, cfg)
        refined_margin_error = None
    except MarginError as exc:
        refined_probe, refined_margin_error = None, str(exc)
    refinement = {
        "group": int(fit.region_idx),
        "sample": int(sample),
        "sample_loss": float(base.losses[sample]),
        "refined_risk": refined_risk.risk,
        "decrease": base.risk - refined_risk.risk,
        "strict_decrease": bool(decrease),
        "subgroups": subgroups,
        "refined_patterns": group_pattern_constancy(refined.net, ds, refined_part),
        "refined_margin_error": refined_margin_error,
    }
    refined_ok = refined_probe is not None and refined_probe.certified
    spurious = bool(decrease and certified and refined_ok)
    if spurious:
        verdict = "spurious local minimum"
    elif not certified:
        verdict = "not certified: probe found descent or pattern flips"
    elif not decrease:
        verdict = "not demonstrated: refinement did not lower the risk"
    else:
        verdict = "not demonstrated: refined network failed the probe"
    return CertificationReport(
        base.risk, probe, patterns, n_groups, refinement, refined_probe, certified, spurious,
        verdict, cfg.seed,
    )


# ---------------------------------------------------------------------------
# enumeration on the line


class _SegmentCosts:
    """Cached optimal summed loss of runs ``xs[i..j]`` of sorted distinct inputs."""

    def __init__(self, dataset: Dataset, loss: Loss):
        self.ds = dataset
        self.loss = loss
        self.xs = distinct_x(dataset)
        self.rank = np.searchsorted(self.xs, dataset.X[:, 0])
        self._cache = {}

    def __call__(self, i, j):
        key = (i, j)
        if key not in self._cache:
            idx = np.flatnonzero((self.rank >= i) & (self.rank <= j))
            _, cost = fit_affine(self.ds.X[idx], self.ds.Y[idx], self.loss)
            self._cache[key] = cost
        return self._cache[key]


@dataclass
class EnumerationRow:
    partition_id: int
    boundaries: tuple
    n_groups: int
    risk: float


@dataclass
class Enumeration:
    rows: list
    n_distinct: int
    levels: list

    def to_csv(self) -> str:
        lines = ["partition_id,boundaries,P,risk"]
        for r in self.rows:
            b = " ".join(repr(float(v)) for v in r.boundaries)
            lines.append(f"{r.partition_id},{b},{r.n_groups},{r.risk!r}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        counts = {}
        for r in self.rows:
            counts[str(r.n_groups)] = counts.get(str(r.n_groups), 0) + 1
        return {
            "n_partitions": len(self.rows),
            "partitions_per_P": counts,
            "distinct_risk_levels": self.n_distinct,
            "min_risk": self.levels[0],
            "max_risk": self.levels[-1],
        }


def enumeration_size(m: int, p_max: int) -> int:
    return sum(math.comb(m - 1, p - 1) for p in range(1, min(p_max, m) + 1))


def distinct_levels(values, tol: float = DISTINCT_TOL) -> list[float]:
    """Representatives of ``values`` after merging neighbours closer than ``tol``."""
    out = []
    for v in sorted(values):
        if not out or v - out[-1] > tol:
            out.append(float(v))
    return out


def enumerate_patterns_1d(dataset: Dataset, p_max: int, loss: Loss = MSE) -> Enumeration:
    """Risk of every contiguous fitting pattern with at most ``p_max`` groups.

    The assembled predictor agrees with each group's piece on that group, so
    its risk is the sum of per-group optimal losses over ``N``; auxiliary
    pieces never touch a sample. Rows are sorted by risk, ties by id.

    Raises
    ------
    CombinatorialExplosionError
        If ``p_max`` exceeds the number of distinct inputs or the table
        would have more than 10^5 rows.
    """
    if int(p_max) != p_max or p_max < 1:
        raise ArgumentError(f"p_max must be a positive integer, got {p_max!r}")
    costs = _SegmentCosts(dataset, loss)
    xs = costs.xs
    m = xs.size
    total = enumeration_size(m, p_max)
    if p_max > m:
        raise CombinatorialExplosionError(
            f"p_max={p_max} exceeds the {m} distinct inputs; "
            f"the full table would hold {total} partitions", total,
        )
    if total > MAX_ENUMERATION:
        raise CombinatorialExplosionError(
            f"enumeration would produce {total} partitions (limit {MAX_ENUMERATION})", total,
        )
    mids = 0.5 * (xs[:-1] + xs[1:])
    rows = []
    for p in range(1, int(p_max) + 1):
        for cuts in itertools.combinations(range(m - 1), p - 1):
            starts = (0,) + tuple(c + 1 for c in cuts)
            ends = tuple(cuts) + (m - 1,)
            r = sum(costs(i, j) for i, j in zip(starts, ends)) / dataset.n
            rows.append(EnumerationRow(len(rows), tuple(float(mids[c]) for c in cuts), p, float(r)))
    rows.sort(key=lambda r: (r.risk, r.partition_id))
    levels = distinct_levels([r.risk for r in rows])
    return Enumeration(rows, len(levels), levels)


def best_contiguous_risks(dataset: Dataset, p_max: int, loss: Loss = MSE) -> np.ndarray:
    """Lowest risk over contiguous partitions into exactly ``P`` groups, for ``P = 1..p_max``.

    Segmented least squares by dynamic programming over sorted distinct inputs.
    """
    costs = _SegmentCosts(dataset, loss)
    m = costs.xs.size
    if int(p_max) != p_max or not 1 <= p_max <= m:
        raise ArgumentError(f"p_max must be in [1, {m}], got {p_max!r}")
    best = np.full((int(p_max) + 1, m + 1), np.inf)
    best[0, 0] = 0.0
    for p in range(1, int(p_max) + 1):
        for j in range(p, m + 1):
            best[p, j] = min(best[p - 1, i] + costs(i, j - 1) for i in range(p - 1, j))
    return best[1:, m] / dataset.n
