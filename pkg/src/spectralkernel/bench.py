"""Timing comparison of kernel evaluation strategies.

Three methods are timed on ``n`` uniform random distances in ``[0, 1]``:

* ``adaptive+nufft``: the adaptive panel engine with NUFFT summation,
* ``adaptive+direct``: the same panels summed directly in O(m n) per panel,
* ``trapezoid+nufft``: a single trapezoid rule, refined by halving the step
  until an accuracy audit passes.

Every record carries an audit against a reference computed by the adaptive
engine at a tolerance 100 times tighter, on 32 spot distances.
"""

from dataclasses import asdict, dataclass
import logging
import math
import statistics
import time

import numpy as np

from . import nufft
from .engine import EvaluationRequest, evaluate_kernel, evaluate_kernel_trapezoid
from .errors import InvalidArgumentError

__all__ = ["BenchRecord", "run_benchmark", "METHODS", "TRAPEZOID_MAX_NODES"]

log = logging.getLogger(__name__)

METHODS = ("adaptive+nufft", "adaptive+direct", "trapezoid+nufft")
TRAPEZOID_MAX_NODES = 2**27
AUDIT_POINTS = 32


@dataclass
class BenchRecord:
    """One (method, n, tol) timing.

    ``status`` is "ok", "capped" (direct summation projected beyond the time
    cap; ``seconds`` is then the projection) or "infeasible" (trapezoid
    would need more than ``2**27`` nodes).
    """

    method: str
    n: int
    tol: float
    seconds: float
    nodes: int
    audit_passed: bool
    audit_error: float
    status: str = "ok"

    def as_dict(self):
        return asdict(self)


def _timed(fn, repeats, warmup=True):
    if warmup:
        fn()  # rule and plan caches
    times = []
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def _direct_throughput(samples=2**17, targets=256):
    """Seconds per (node, target) pair of the direct summation."""
    w = np.linspace(0.0, 1e3, samples)
    c = np.ones(samples)
    r = np.linspace(0.0, 1.0, targets)
    t0 = time.perf_counter()
    nufft.direct_nudft(w, c, r)
    return (time.perf_counter() - t0) / (samples * targets)


def _audit(values, reference, scale, tol):
    err = float(np.max(np.abs(values - reference))) / scale
    return err <= tol, err


def _trapezoid_sweep(model, r, spots, reference, scale, tol, tail_law):
    """Halve the step until the audit passes; returns (h, m, err) or None if infeasible."""
    c, beta = tail_law.c, tail_law.beta
    # truncate where the r = 0 tail bound is half the tolerance
    length = (0.25 * tol * scale * (beta - 1) / c) ** (1.0 / (1.0 - beta))
    m = 1024
    err = math.inf
    while m <= TRAPEZOID_MAX_NODES:
        h = length / (m - 1)
        vals, _ = evaluate_kernel_trapezoid(model, r[spots], h, m, tol=0.01 * tol * scale)
        ok, err = _audit(vals, reference, scale, tol)
        log.info("trapezoid sweep m=%d h=%.3g audit error %.3g", m, h, err)
        if ok:
            return h, m, err
        m *= 2
    return None, m, err


def run_benchmark(model, n_grid, tol_grid, methods=METHODS, m=2**16, repeats=3, seed=0, direct_cap=120.0):
    """Time each method on every (n, tol) pair.

    Parameters
    ----------
    model : SpectralModel
    n_grid, tol_grid : sequences
    methods : sequence of str
        Subset of :data:`METHODS`.
    m : int
        Nodes per panel for the adaptive methods.
    repeats : int
        Timed runs after one warm-up; the median is reported.
    direct_cap : float
        Direct summation is not run when its projected time exceeds this
        many seconds; the projection is recorded instead.

    Returns
    -------
    list of BenchRecord
    """
    methods = list(methods)
    if not methods:
        raise InvalidArgumentError("at least one method is required")
    bad = [x for x in methods if x not in METHODS]
    if bad:
        raise InvalidArgumentError(f"unknown methods {bad}; expected a subset of {METHODS}")
    rng = np.random.default_rng(seed)
    records = []
    per_pair = None
    law = model.tail()
    sweeps = {}  # tol -> (h, m, err); the step needed does not depend on n
    for n in n_grid:
        r = rng.uniform(0.0, 1.0, int(n))
        spots = np.sort(rng.choice(r.size, size=min(AUDIT_POINTS, r.size), replace=False))
        for tol in tol_grid:
            ref_res = evaluate_kernel(EvaluationRequest(model, r[spots], tol=tol / 100, m=m))
            reference, scale = ref_res.values, ref_res.scale
            adaptive_nodes = None
            for method in methods:
                if method == "adaptive+nufft":
                    req = EvaluationRequest(model, r, tol=tol, m=m, summation="nufft")
                    secs, res = _timed(lambda: evaluate_kernel(req), repeats)
                    adaptive_nodes = res.node_count
                    ok, err = _audit(res.values[spots], reference, scale, tol)
                    records.append(BenchRecord(method, int(n), tol, secs, res.node_count, ok, err))
                elif method == "adaptive+direct":
                    if adaptive_nodes is None:
                        adaptive_nodes = evaluate_kernel(EvaluationRequest(model, r, tol=tol, m=m)).node_count
                    if per_pair is None:
                        per_pair = _direct_throughput()
                    projected = per_pair * adaptive_nodes * r.size
                    if projected > direct_cap:
                        records.append(
                            BenchRecord(method, int(n), tol, projected, adaptive_nodes, False, math.nan, "capped")
                        )
                        continue
                    req = EvaluationRequest(model, r, tol=tol, m=m, summation="direct")
                    # the adaptive run above already built every rule; direct sums cache nothing else
                    secs, res = _timed(lambda: evaluate_kernel(req), repeats, warmup=False)
                    ok, err = _audit(res.values[spots], reference, scale, tol)
                    records.append(BenchRecord(method, int(n), tol, secs, res.node_count, ok, err))
                else:
                    if law is None:
                        raise InvalidArgumentError("trapezoid benchmark needs a model with an analytic tail law")
                    if tol not in sweeps:
                        sweeps[tol] = _trapezoid_sweep(model, r, spots, reference, scale, tol, law)
                    h, mt, err = sweeps[tol]
                    if h is None:
                        records.append(BenchRecord(method, int(n), tol, math.nan, mt, False, err, "infeasible"))
                        continue
                    secs, (vals, _) = _timed(lambda: evaluate_kernel_trapezoid(model, r, h, mt, tol=0.01 * tol * scale), repeats)
                    ok, err = _audit(vals[spots], reference, scale, tol)
                    records.append(BenchRecord(method, int(n), tol, secs, mt, ok, err))
                log.info("bench %s", records[-1])
    return records
