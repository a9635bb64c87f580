"""Euler-Bernoulli cantilever beam with piecewise-blended stiffness.

Solves (E(x) u'')'' = f on [0, 1] with clamped left end (u(0) = u'(0) = 0)
and free right end (u''(1) = u'''(1) = 0).  The discretization nests two
second differences: w = E * D2 u with one-sided closures at the ends, then
D2 w = f on the interior, plus four boundary rows, all second order.

The stiffness is a smooth blend of one value per subdomain:

    E_1(x) = theta_1,
    E_i(x) = (1 - I(x, alpha_i)) E_{i-1}(x) + I(x, alpha_i) theta_i,
    I(x, alpha) = 1 / (1 + exp(-(x - alpha) / 0.005)),

with alpha_1..alpha_{k+1} equidistant in [0, 1].
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve
from scipy.special import expit

from .problems import ExtrapolationError, ForwardModel

__all__ = [
    "BeamGrid",
    "make_beam_grid",
    "stiffness_field",
    "beam_solve",
    "beam_observe",
    "BeamModel",
    "BeamSurrogateModel",
    "build_beam_surrogate",
    "save_beam_surrogate",
    "load_beam_surrogate",
]

_SIGMOID_WIDTH = 0.005
_N_OBSERVATIONS = 41


@dataclass
class BeamGrid:
    """Beam mesh with fixed difference operators.

    ``d2_full`` maps u to its second difference at every node (one-sided at
    the ends); ``d2_interior`` applies the central second difference at
    nodes 2..N-3; ``bc_rows`` holds the four boundary condition rows.
    """

    n_nodes: int
    x: np.ndarray = field(repr=False)
    delta: float = 0.0
    d2_full: sp.csr_matrix = field(repr=False, default=None)
    d2_interior: sp.csr_matrix = field(repr=False, default=None)
    bc_rows: sp.csr_matrix = field(repr=False, default=None)


def make_beam_grid(n_nodes: int = 601) -> BeamGrid:
    if n_nodes < 7:
        raise ValueError(f"beam grid needs at least 7 nodes, got {n_nodes}")
    n = n_nodes
    x = np.linspace(0.0, 1.0, n)
    delta = 1.0 / (n - 1)
    d2 = sp.lil_matrix((n, n))
    d2[0, :4] = np.array([2.0, -5.0, 4.0, -1.0]) / delta**2
    for i in range(1, n - 1):
        d2[i, i - 1 : i + 2] = np.array([1.0, -2.0, 1.0]) / delta**2
    d2[n - 1, n - 4 :] = np.array([-1.0, 4.0, -5.0, 2.0]) / delta**2

    interior = sp.lil_matrix((n - 4, n))
    for row, i in enumerate(range(2, n - 2)):
        interior[row, i - 1 : i + 2] = np.array([1.0, -2.0, 1.0]) / delta**2

    bc = sp.lil_matrix((4, n))
    bc[0, 0] = 1.0  # u(0) = 0
    bc[1, :3] = np.array([-3.0, 4.0, -1.0]) / (2.0 * delta)  # u'(0) = 0
    bc[2, n - 4 :] = np.array([-1.0, 4.0, -5.0, 2.0]) / delta**2  # u''(1) = 0
    bc[3, n - 5 :] = np.array([1.5, -7.0, 12.0, -9.0, 2.5]) / delta**3  # u'''(1) = 0

    return BeamGrid(
        n_nodes=n,
        x=x,
        delta=delta,
        d2_full=d2.tocsr(),
        d2_interior=interior.tocsr(),
        bc_rows=bc.tocsr(),
    )


def stiffness_field(x, theta, n_pieces: int = 3) -> np.ndarray:
    """Blended stiffness E(x) for subdomain values theta_1..theta_k."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape[0] != n_pieces:
        raise ValueError(f"expected {n_pieces} stiffness values, got {theta.shape[0]}")
    x = np.asarray(x, dtype=float)
    field_values = np.full_like(x, theta[0])
    for i in range(2, n_pieces + 1):
        alpha = (i - 1) / n_pieces
        blend = expit((x - alpha) / _SIGMOID_WIDTH)
        field_values = (1.0 - blend) * field_values + blend * theta[i - 1]
    return field_values


def beam_solve(theta, grid: BeamGrid, load: np.ndarray | None = None) -> np.ndarray:
    """Deflection u at all nodes for stiffness parameters theta (load f = 1 default)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if np.any(theta <= 0.0):
        raise ValueError("stiffness parameters must be positive")
    n = grid.n_nodes
    if load is None:
        load = np.ones(n)
    stiffness = stiffness_field(grid.x, theta)
    operator = grid.d2_interior @ sp.diags(stiffness) @ grid.d2_full
    system = sp.vstack([grid.bc_rows, operator], format="csc")
    rhs = np.concatenate([np.zeros(4), load[2 : n - 2]])
    return spsolve(system, rhs)


def beam_observe(u, grid: BeamGrid) -> np.ndarray:
    """Read the 41 equispaced sensors (every (N-1)/40-th node, ends included)."""
    n = grid.n_nodes
    if (n - 1) % (_N_OBSERVATIONS - 1) != 0:
        raise ValueError(f"grid with {n} nodes cannot place {_N_OBSERVATIONS} equispaced sensors")
    stride = (n - 1) // (_N_OBSERVATIONS - 1)
    return np.asarray(u, dtype=float)[::stride]


class BeamModel(ForwardModel):
    """Full beam forward map theta -> 41 deflection observations."""

    d_in = 3
    d_out = _N_OBSERVATIONS
    cost = "hifi"

    def __init__(self, grid: BeamGrid):
        self.grid = grid

    def eval(self, theta: np.ndarray) -> np.ndarray:
        return beam_observe(beam_solve(theta, self.grid), self.grid)


def _axis_weights(nodes: np.ndarray, value: float) -> tuple[int, np.ndarray]:
    """Interpolation stencil start and weights along one axis.

    Piecewise-cubic with catenated neighbor slopes (Catmull-Rom style on a
    non-uniform grid) in interior cells; linear in the two edge cells where
    a four-point stencil does not fit.  A query exactly on a node
    reproduces the nodal value bitwise.
    """
    n = nodes.size
    if value < nodes[0] or value > nodes[-1]:
        raise ExtrapolationError(
            f"query {value:.6g} outside tabulated range [{nodes[0]:.6g}, {nodes[-1]:.6g}]"
        )
    cell = int(np.searchsorted(nodes, value, side="right")) - 1
    cell = min(max(cell, 0), n - 2)
    width = nodes[cell + 1] - nodes[cell]
    t = (value - nodes[cell]) / width
    if cell == 0 or cell == n - 2:
        return cell, np.array([1.0 - t, t])
    h00 = 2 * t**3 - 3 * t**2 + 1.0
    h10 = t**3 - 2 * t**2 + t
    h01 = -2 * t**3 + 3 * t**2
    h11 = t**3 - t**2
    left_span = nodes[cell + 1] - nodes[cell - 1]
    right_span = nodes[cell + 2] - nodes[cell]
    return cell - 1, np.array(
        [
            -h10 * width / left_span,
            h00 - h11 * width / right_span,
            h01 + h10 * width / left_span,
            h11 * width / right_span,
        ]
    )


class BeamSurrogateModel(ForwardModel):
    """Separable cubic interpolation of tabulated beam observations.

    Raises ExtrapolationError for queries outside the tabulated box, which
    samplers treat as certain rejection.
    """

    d_in = 3
    d_out = _N_OBSERVATIONS
    cost = "lofi"

    def __init__(self, axes: list[np.ndarray], table: np.ndarray, meta: dict | None = None):
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.table = np.asarray(table, dtype=float)
        self.meta = dict(meta or {})

    def eval(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        starts = []
        weights = []
        for axis, value in zip(self.axes, theta):
            start, w = _axis_weights(axis, float(value))
            starts.append(start)
            weights.append(w)
        block = self.table[
            starts[0] : starts[0] + weights[0].size,
            starts[1] : starts[1] + weights[1].size,
            starts[2] : starts[2] + weights[2].size,
        ]
        return np.einsum("i,j,k,ijkl->l", weights[0], weights[1], weights[2], block)


def build_beam_surrogate(
    grid: BeamGrid,
    nodes_per_axis: int = 10,
    box: tuple[float, float] = (0.5, 4.0),
) -> BeamSurrogateModel:
    """Tabulate the beam observations on a log-spaced parameter grid."""
    if nodes_per_axis < 4:
        raise ValueError("surrogate needs at least 4 nodes per axis for cubic cells")
    axis = np.geomspace(box[0], box[1], nodes_per_axis)
    table = np.empty((nodes_per_axis,) * 3 + (_N_OBSERVATIONS,))
    model = BeamModel(grid)
    for i, t1 in enumerate(axis):
        for j, t2 in enumerate(axis):
            for k, t3 in enumerate(axis):
                table[i, j, k] = model.eval(np.array([t1, t2, t3]))
    meta = {
        "box": list(box),
        "nodes_per_axis": nodes_per_axis,
        "beam_nodes": grid.n_nodes,
    }
    return BeamSurrogateModel(axes=[axis, axis, axis], table=table, meta=meta)


def save_beam_surrogate(json_path, surrogate: BeamSurrogateModel) -> None:
    """Write surrogate metadata as JSON and the table as CSV next to it."""
    json_path = Path(json_path)
    table_path = json_path.with_suffix(".table.csv")
    flat = surrogate.table.reshape(-1, surrogate.table.shape[-1])
    with open(table_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for row in flat:
            writer.writerow([repr(float(v)) for v in row])
    record = dict(surrogate.meta)
    record["axes"] = [a.tolist() for a in surrogate.axes]
    record["table_csv"] = table_path.name
    record["table_shape"] = list(surrogate.table.shape)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2)
        fh.write("\n")


def load_beam_surrogate(json_path) -> BeamSurrogateModel:
    json_path = Path(json_path)
    with open(json_path, encoding="utf-8") as fh:
        record = json.load(fh)
    table_path = json_path.parent / record["table_csv"]
    with open(table_path, encoding="utf-8", newline="") as fh:
        flat = np.array([[float(v) for v in row] for row in csv.reader(fh)])
    table = flat.reshape(record["table_shape"])
    axes = [np.asarray(a, dtype=float) for a in record["axes"]]
    return BeamSurrogateModel(axes=axes, table=table, meta=record)
