"""Shared fixtures, instance generators and brute-force oracles."""

import numpy as np
import pytest

from causalsens.model import BaselineEstimate, build_grid

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


def make_baseline(names, arities, mu0, mu1, e, qx):
    return BaselineEstimate(build_grid(names, arities), mu0, mu1, e, qx)


def random_baseline(rng, arities, names=None, qx_floor=0.0):
    """Baseline with random means, propensities in (0.1, 0.9) and a random q_X."""
    names = names or [f"x{j}" for j in range(len(arities))]
    grid = build_grid(names, arities)
    d = grid.d
    qx = rng.dirichlet(np.full(d, 2.0)) + qx_floor
    return BaselineEstimate(
        grid,
        rng.uniform(0.02, 0.98, d),
        rng.uniform(0.02, 0.98, d),
        rng.uniform(0.1, 0.9, d),
        qx / qx.sum(),
    )


@pytest.fixture
def one_cov_baseline():
    """One binary covariate, uniform q_X, per-cell effects (0.4, -0.2)."""
    return make_baseline(["x"], [2], [0.3, 0.5], [0.7, 0.3], [0.5, 0.5], [0.5, 0.5])


@pytest.fixture
def single_cell_baseline():
    """One cell with e = 0.5, mu1 = 0.8 and mu0 = 0.4."""
    return make_baseline(["x"], [2], [0.4, 0.4], [0.8, 0.8], [0.5, 0.5], [1.0, 0.0])


@pytest.fixture
def two_cov_baseline():
    rng = np.random.default_rng(7)
    return random_baseline(rng, [2, 3], names=["age", "sex"])


# ---------------------------------------------------------------------------
# oracles, written without the package's solver or affine shortcuts


def level_effects(baseline, positions):
    """Effect of each subset level under the conditional q(x_-J | x_J).

    Levels with no mass fall back to the marginal of the remaining covariates.
    """
    grid = baseline.grid
    cells = grid.cells
    arities = [grid.arities[p] for p in positions]
    levels = np.ravel_multi_index(tuple(cells[:, p] for p in positions), arities)
    rest = [p for p in range(grid.k) if p not in positions]
    effects = baseline.mu1 - baseline.mu0
    out = np.zeros(int(np.prod(arities)))
    for v in range(len(out)):
        mask = levels == v
        mass = baseline.qx[mask]
        if mass.sum() > 0:
            out[v] = mass @ effects[mask] / mass.sum()
        else:
            # marginal of the other covariates, matched cell by cell
            keys = [tuple(c[rest]) for c in cells]
            marg = {}
            for key, q in zip(keys, baseline.qx):
                marg[key] = marg.get(key, 0.0) + q
            out[v] = sum(marg[keys[i]] * effects[i] for i in np.flatnonzero(mask))
    return out


def _kl_rows(points, q):
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(points > 0, points * np.log(points / q), 0.0)
    return terms.sum(axis=1)


def _simplex_grid(step, lo, hi):
    """Points of the simplex whose first n-1 coordinates lie in the box [lo, hi]."""
    axes = [np.arange(max(a, 0.0), min(b, 1.0) + step / 2, step) for a, b in zip(lo, hi)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    last = 1.0 - mesh.sum(axis=1)
    keep = last >= -1e-12
    return np.column_stack([mesh[keep], np.clip(last[keep], 0.0, None)])


def grid_worst_case(q, c, delta, step=None):
    """Minimum KL(theta || q) over the simplex subject to c . theta <= delta.

    Coarse grid search followed by local refinements (a window of three coarse
    steps around the best point) down to step 1e-5. The objective and the
    feasible set are convex, so the coarse minimizer lies next to the optimum.
    Returns ``(theta, D)``.
    """
    n = len(q)
    schedule = {2: [1e-5], 3: [1e-3, 1e-4, 1e-5], 4: [1e-2, 1e-3, 1e-4, 1e-5]}[n]
    if step is not None:
        schedule = [step]
    lo = np.zeros(n - 1)
    hi = np.ones(n - 1)
    best = None
    for i, h in enumerate(schedule):
        pts = _simplex_grid(h, lo, hi)
        pts = pts[pts @ c <= delta]
        D = _kl_rows(pts, q)
        j = int(np.argmin(D))
        best = (pts[j], float(D[j]))
        if i + 1 < len(schedule):
            lo = best[0][:-1] - 3 * h
            hi = best[0][:-1] + 3 * h
    return best
