"""Single runs and the two-scenario sweeps.

Scenario 1 holds FTP at ``fixed_flows`` and varies VoIP; scenario 2 holds
VoIP fixed and varies FTP.  ``scale`` multiplies flow counts (rounded half
up) and every bandwidth by the same factor, so ``--flows 0:200:50 --scale
0.1`` gives VoIP counts 0, 5, 10, 15, 20 over a 5 Mb/s bottleneck.  Per-flow
load ratios are preserved but RTT-dependent TCP dynamics are not; buffer and
threshold sizes stay in bytes.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .config import SCHEMES, RunConfig
from .engine import simulate
from .metrics import MetricsRecord, write_csv

log = logging.getLogger(__name__)


class SweepError(RuntimeError):
    pass


def run_once(cfg: RunConfig) -> MetricsRecord:
    """Build the dumbbell, run it for ``cfg.duration_s`` and finalize metrics."""
    return simulate(cfg)


def scale_count(n, scale):
    return int(math.floor(n * scale + 0.5))


@dataclass
class SweepSpec:
    scenario: int
    schemes: list = field(default_factory=lambda: list(SCHEMES))
    flows: tuple = (0, 200, 25)  # start, stop (inclusive), step
    fixed_flows: int = 100
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    scale: float = 1.0

    def __post_init__(self):
        if self.scenario not in (1, 2):
            raise ValueError("scenario must be 1 or 2")
        start, stop, step = self.flows
        if step <= 0 or stop < start or start < 0:
            raise ValueError("flows needs start >= 0, stop >= start and step > 0")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if not self.schemes:
            raise ValueError("at least one scheme is required")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ValueError(f"unknown scheme {s!r}")
        if not self.seeds:
            raise ValueError("at least one seed is required")

    def varied_points(self):
        start, stop, step = self.flows
        out = []
        for n in range(start, stop + 1, step):
            k = scale_count(n, self.scale)
            if k not in out:
                out.append(k)
        return out

    def cells(self, base: RunConfig):
        """Run configurations in output order: scheme, then flows, then seed."""
        fixed = scale_count(self.fixed_flows, self.scale)
        topo = base.topology
        bw = dict(
            access_bw_bps=topo.access_bw_bps * self.scale,
            bottleneck_bw_bps=topo.bottleneck_bw_bps * self.scale,
        )
        for scheme in self.schemes:
            for n in self.varied_points():
                if self.scenario == 1:
                    counts = dict(n_ftp=fixed, n_voip=n)
                else:
                    counts = dict(n_ftp=n, n_voip=fixed)
                t = dataclasses.replace(topo, **counts, **bw)
                for seed in self.seeds:
                    yield dataclasses.replace(base, scheme=scheme, seed=seed,
                                              scenario=self.scenario, topology=t)


def _run_cell(cfg):
    try:
        return run_once(cfg)
    except Exception as exc:  # annotate with the failing cell
        t = cfg.topology
        raise SweepError(
            f"run failed: scheme={cfg.scheme} scenario={cfg.scenario} "
            f"n_ftp={t.n_ftp} n_voip={t.n_voip} seed={cfg.seed}: {exc!r}"
        ) from exc


def run_sweep(spec: SweepSpec, base: RunConfig = None, out=None, jobs=1):
    """Run every cell of ``spec``; returns records in deterministic order.

    ``out`` may be a directory (writes ``scenario<N>.csv`` inside) or a file
    path ending in ``.csv``.
    """
    if base is None:
        base = RunConfig(scheme=spec.schemes[0])
    cells = list(spec.cells(base))
    log.info("sweep: scenario %d, %d runs, jobs=%d", spec.scenario, len(cells), jobs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_cell, cells))
    else:
        records = []
        for i, cfg in enumerate(cells, 1):
            records.append(_run_cell(cfg))
            log.debug("cell %d/%d done", i, len(cells))
    if out is not None:
        path = os.fspath(out)
        if not path.endswith(".csv"):
            os.makedirs(path, exist_ok=True)
            path = os.path.join(path, f"scenario{spec.scenario}.csv")
        write_csv(records, path)
    return records
