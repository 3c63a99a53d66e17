"""Test-side construction helpers and independent numeric oracles."""

from __future__ import annotations

import numpy as np

from matchkit.ingest import MatchTimeline, PointRecord


def make_timeline(victors, servers=None, elapsed=None, set_no=None, game_no=None,
                  p1_sets=None, p2_sets=None, p1_games=None, p2_games=None,
                  aces1=None, aces2=None, dfs1=None, dfs2=None, ues1=None, ues2=None,
                  match_id="t1"):
    """Build a valid MatchTimeline from parallel per-point sequences.

    Any omitted sequence gets a neutral default: server 1, 30s spacing,
    single set/game, zeroed counters and event flags.
    """
    n = len(victors)

    def seq(value, default):
        if value is None:
            return [default] * n
        assert len(value) == n
        return list(value)

    servers = seq(servers, 1)
    elapsed = elapsed if elapsed is not None else [30 * (k + 1) for k in range(n)]
    set_no = seq(set_no, 1)
    game_no = seq(game_no, 1)
    p1_sets = seq(p1_sets, 0)
    p2_sets = seq(p2_sets, 0)
    p1_games = seq(p1_games, 0)
    p2_games = seq(p2_games, 0)
    flags = {name: seq(values, False) for name, values in
             (("p1_ace", aces1), ("p2_ace", aces2), ("p1_double_fault", dfs1),
              ("p2_double_fault", dfs2), ("p1_unf_err", ues1), ("p2_unf_err", ues2))}

    points = tuple(
        PointRecord(
            match_id=match_id, set_no=set_no[k], game_no=game_no[k], point_no=k + 1,
            elapsed_s=elapsed[k], server=servers[k], point_victor=victors[k],
            p1_sets=p1_sets[k], p2_sets=p2_sets[k],
            p1_games=p1_games[k], p2_games=p2_games[k],
            p1_ace=flags["p1_ace"][k], p2_ace=flags["p2_ace"][k],
            p1_double_fault=flags["p1_double_fault"][k],
            p2_double_fault=flags["p2_double_fault"][k],
            p1_unf_err=flags["p1_unf_err"][k], p2_unf_err=flags["p2_unf_err"][k],
            p1_distance_run=5.0, p2_distance_run=5.0, rally_count=2, speed_mph=100.0,
        )
        for k in range(n)
    )
    timeline = MatchTimeline(match_id=match_id, points=points)
    timeline.check()
    return timeline


def make_separable(n=500, flip=0.1, seed=42):
    """1-D threshold dataset with a fraction of labels flipped."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=(n, 1))
    y = (x[:, 0] > 0).astype(np.float64)
    y = np.where(rng.random(n) < flip, 1.0 - y, y)
    return x, y


def leaf_objective(w, G, H, lam, rho):
    """G*w + 1/2*(H + lam*(1-rho))*w^2 + lam*rho*|w|, vectorized in w."""
    return G * w + 0.5 * (H + lam * (1.0 - rho)) * w * w + lam * rho * np.abs(w)


def oracle_leaf_argmin(G, H, lam, rho, coarse_step=1e-4, max_points=200_001):
    """Dense 1-D grid minimization of the leaf objective, then refinement.

    Phase 1 scans a symmetric grid (step coarse_step, widened only when the
    bracket would need more than max_points nodes) of the raw objective.
    Phase 2 re-centers on the incumbent and scans the exact increment
    f(w0+d) - f(w0), whose absolute-value part is expanded by sign case so
    no big-magnitude cancellation occurs; three rounds shrink the spacing
    to ~1e-10.  Independent of the closed-form implementation under test.
    """
    d = H + lam * (1.0 - rho)
    a = lam * rho
    radius = abs(G) / d + 1.0
    n = int(2.0 * radius / coarse_step) + 1
    n = min(n, max_points)
    if n % 2 == 0:
        n += 1  # odd count puts w = 0 exactly on the grid
    ws = np.linspace(-radius, radius, n)
    w0 = float(ws[np.argmin(leaf_objective(ws, G, H, lam, rho))])
    spacing = 2.0 * radius / (n - 1)

    for _ in range(4):
        deltas = np.linspace(-spacing, spacing, 2001)
        w_new = w0 + deltas
        # |w0+delta| - |w0| without cancellation: case-split on signs.
        if w0 >= 0:
            abs_diff = np.where(w_new >= 0, deltas, -deltas - 2.0 * w0)
        else:
            abs_diff = np.where(w_new < 0, -deltas, deltas + 2.0 * w0)
        inc = (G + d * w0) * deltas + 0.5 * d * deltas * deltas + a * abs_diff
        # candidate w = 0 exactly, if inside the bracket
        zero_delta = -w0
        if abs(zero_delta) <= spacing:
            inc_zero = (G + d * w0) * zero_delta + 0.5 * d * zero_delta * zero_delta + a * (0.0 - abs(w0))
            if inc_zero < inc.min():
                w0 = 0.0
                spacing = spacing / 1000.0
                continue
        w0 = float(w_new[np.argmin(inc)])
        spacing = spacing / 1000.0
    return w0
