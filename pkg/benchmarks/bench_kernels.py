"""Time the Cython kernels against the pure-Python fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--scans 20]

Each row reports the best-of-``repeat`` wall time per call for both backends
and the speedup.  End-to-end rows (ARCE localization, tracker scans) swap the
backend in-process, so they measure exactly what the package runs.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import timeit

import numpy as np

from mprntrack import _pykernels, kernels
from mprntrack.arce import ArceInput, arce_localize
from mprntrack.config import load_config
from mprntrack.geom import bistatic_ranges
from mprntrack.metrics import run_seeds
from mprntrack.pipeline import make_tracker
from mprntrack.scenario import reference_beam, reference_geometry, simulate

try:
    from mprntrack import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_NAMES = ("likelihood_sums", "update_factors", "systematic_indices", "lm_solve")


@contextlib.contextmanager
def backend(module):
    saved = {n: getattr(kernels, n) for n in _NAMES}
    try:
        for n in _NAMES:
            setattr(kernels, n, getattr(module, n))
        yield
    finally:
        for n, f in saved.items():
            setattr(kernels, n, f)


def _best(fn, repeat: int) -> float:
    number, _ = timeit.Timer(fn).autorange()
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def cases(n_scans: int):
    rng = np.random.default_rng(0)
    geo = reference_geometry()
    tx, rx = geo.tx_position, geo.rx_positions[2]
    pos = rng.normal([30_000.0, 0.0, 0.0], 2_000.0, size=(500, 3))
    w = rng.random(500)
    w /= w.sum()
    rhos = rng.normal(60_000.0, 50.0, size=8)
    coeffs = rng.random(8)

    truth = np.array([29_000.0, 1_500.0, 800.0])
    rec = np.arange(1, geo.n_receivers + 1)
    rho = np.array([bistatic_ranges(truth[None, :], tx, r)[0] for r in geo.rx_positions])
    inp = ArceInput(rec, rho + rng.normal(0.0, 10.0, rho.shape), geo, reference_beam().with_range(28_000.0, 31_000.0))

    exp = load_config("ideal-target2")
    cfg = dataclasses.replace(exp.scenario, n_scans=n_scans)
    srng, _ = run_seeds(0, 0)
    _, scans = simulate(cfg, srng)

    def track(variant):
        def run():
            tr = make_tracker(cfg, variant, exp.tracker, exp.fusion, np.random.default_rng(1))
            for s in scans:
                tr.step(s)

        return run

    return [
        ("likelihood_sums (500 particles x 8 ranges)", lambda: kernels.likelihood_sums(pos, w, tx, rx, rhos, 10.0)),
        ("update_factors (500 particles x 8 ranges)", lambda: kernels.update_factors(pos, tx, rx, rhos, coeffs, 10.0, 0.1)),
        ("systematic_indices (500 weights)", lambda: kernels.systematic_indices(w, 0.3)),
        ("arce_localize (5 receivers, 27 patterns)", lambda: arce_localize(inp)),
        (f"tracker spa ({n_scans} scans)", track("spa")),
        (f"tracker ad ({n_scans} scans)", track("ad")),
    ]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scans", type=int, default=20)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not available; build with `pip install --no-build-isolation -e .`")
        return 1
    print(f"{'case':48s} {'python':>12s} {'cython':>12s} {'speedup':>8s}")
    for name, fn in cases(args.scans):
        with backend(_pykernels):
            t_py = _best(fn, args.repeat)
        with backend(_ckernels):
            t_c = _best(fn, args.repeat)
        print(f"{name:48s} {t_py * 1e3:10.3f}ms {t_c * 1e3:10.3f}ms {t_py / t_c:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
