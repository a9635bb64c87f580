"""Nonlinear diffusion-reaction model problem on the unit square.

Solves -laplace(u) + g(u, theta) = 100 sin(2 pi x1) sin(2 pi x2) with
homogeneous Dirichlet boundary, discretized by the 5-point stencil on a
uniform mesh of width h, and provides a POD-Galerkin reduced-order model
trained on full-order snapshots over a parameter box.

The reaction term is

    g(u, theta) = (0.1 sin(theta_1) + 2) exp(-2.7 theta_1^2) (exp(1.8 theta_2 u) - 1).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .problems import ForwardModel

__all__ = [
    "SolverError",
    "DrGrid",
    "make_dr_grid",
    "dr_reaction",
    "dr_reaction_derivative",
    "dr_solve",
    "dr_observe",
    "DrFomModel",
    "DrRomModel",
    "build_dr_rom",
    "save_dr_rom",
    "load_dr_rom",
]

_OBS_X = [0.25, 0.5, 0.75]
_OBS_Y = [0.2, 0.4, 0.6, 0.8]
_EXP_CAP = 700.0
_NEWTON_TOL = 1e-10
_MAX_NEWTON = 50
_ARMIJO_C = 1e-4
_MAX_HALVINGS = 40


class SolverError(RuntimeError):
    """Newton iteration failed to converge."""


@dataclass
class DrGrid:
    """Uniform interior mesh of the unit square with precomputed operators.

    ``laplacian`` is the scaled 5-point operator acting on the interior
    unknowns ordered x-fastest: index k = iy * m + ix for node
    ((ix+1) h, (iy+1) h).
    """

    h: float
    m: int
    laplacian: sp.csc_matrix = field(repr=False)
    forcing: np.ndarray = field(repr=False)

    @property
    def n_unknowns(self) -> int:
        return self.m * self.m


def make_dr_grid(h: float) -> DrGrid:
    """Build the grid for mesh width h = 1 / 2^k."""
    n_side = round(1.0 / h)
    if abs(1.0 / h - n_side) > 1e-12 or n_side < 2 or (n_side & (n_side - 1)) != 0:
        raise ValueError(f"mesh width must be 1/2^k, got h={h}")
    m = n_side - 1
    one = sp.identity(m, format="csr")
    second = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(m, m), format="csr")
    laplacian = ((sp.kron(one, second) + sp.kron(second, one)) / h**2).tocsc()
    coords = (np.arange(1, m + 1)) * h
    xx, yy = np.meshgrid(coords, coords, indexing="xy")  # row iy, column ix
    forcing = (100.0 * np.sin(2.0 * np.pi * xx) * np.sin(2.0 * np.pi * yy)).ravel()
    return DrGrid(h=h, m=m, laplacian=laplacian, forcing=forcing)


def _reaction_prefactor(theta) -> float:
    t1 = float(theta[0])
    return (0.1 * np.sin(t1) + 2.0) * np.exp(-2.7 * t1 * t1)


def dr_reaction(u, theta):
    """Reaction term g(u, theta), elementwise in u.

    Raises OverflowError when the exponential argument exceeds 700 (the
    solver treats that as a failed line-search step).
    """
    u = np.asarray(u, dtype=float)
    arg = 1.8 * float(theta[1]) * u
    if np.any(np.abs(arg) > _EXP_CAP):
        raise OverflowError("reaction exponent exceeds 700")
    return _reaction_prefactor(theta) * (np.exp(arg) - 1.0)


def dr_reaction_derivative(u, theta):
    """dg/du, elementwise in u."""
    u = np.asarray(u, dtype=float)
    scale = 1.8 * float(theta[1])
    arg = scale * u
    if np.any(np.abs(arg) > _EXP_CAP):
        raise OverflowError("reaction exponent exceeds 700")
    return _reaction_prefactor(theta) * scale * np.exp(arg)


def _newton(residual_fn, jacobian_solve, u0, label: str, return_info: bool):
    """Damped Newton iteration shared by the full and reduced solvers.

    ``residual_fn`` may raise OverflowError; during the line search that is
    treated like a failed Armijo test.
    """
    u = u0
    res = residual_fn(u)
    norms = [float(np.max(np.abs(res)))]
    for _ in range(_MAX_NEWTON):
        if norms[-1] < _NEWTON_TOL:
            info = {"residual_norms": norms, "iterations": len(norms) - 1}
            return (u, info) if return_info else u
        delta = jacobian_solve(u, -res)
        phi = 0.5 * float(res @ res)
        alpha = 1.0
        accepted = None
        for _ in range(_MAX_HALVINGS):
            try:
                trial = u + alpha * delta
                res_trial = residual_fn(trial)
            except OverflowError:
                alpha *= 0.5
                continue
            if 0.5 * float(res_trial @ res_trial) <= (1.0 - 2.0 * _ARMIJO_C * alpha) * phi:
                accepted = (trial, res_trial)
                break
            alpha *= 0.5
        if accepted is None:
            raise SolverError(f"{label}: line search failed at residual {norms[-1]:.3e}")
        u, res = accepted
        norms.append(float(np.max(np.abs(res))))
    raise SolverError(
        f"{label}: no convergence in {_MAX_NEWTON} Newton steps (residual {norms[-1]:.3e})"
    )


def dr_solve(theta, grid: DrGrid, return_info: bool = False):
    """Solve the discrete diffusion-reaction system for one parameter.

    Newton iteration from the zero field with analytic Jacobian, an Armijo
    backtracking line search, and termination at residual inf-norm 1e-10.

    Returns:
        The interior solution vector (and an info dict with the residual
        history when ``return_info``).
    """
    A = grid.laplacian
    f = grid.forcing

    def residual(u):
        return A @ u + dr_reaction(u, theta) - f

    def jac_solve(u, rhs):
        J = A + sp.diags(dr_reaction_derivative(u, theta), format="csc")
        return splu(J.tocsc()).solve(rhs)

    return _newton(residual, jac_solve, np.zeros(grid.n_unknowns), "dr_solve", return_info)


def dr_observe(u, grid: DrGrid) -> np.ndarray:
    """Observe u at the 12 sensors (0.25 i, 0.2 j), i = 1..3 outer, j = 1..4 inner.

    Sensors off the mesh are read by bilinear interpolation; a sensor on a
    mesh node reduces to the nodal value exactly.
    """
    m = grid.m
    full = np.zeros((m + 2, m + 2))
    full[1:-1, 1:-1] = np.asarray(u, dtype=float).reshape(m, m).T  # full[ix, iy]
    out = np.empty(len(_OBS_X) * len(_OBS_Y))
    k = 0
    for x in _OBS_X:
        gx = x / grid.h
        ix = min(int(gx), m)
        fx = gx - ix
        for y in _OBS_Y:
            gy = y / grid.h
            iy = min(int(gy), m)
            fy = gy - iy
            out[k] = (
                (1.0 - fx) * (1.0 - fy) * full[ix, iy]
                + fx * (1.0 - fy) * full[ix + 1, iy]
                + (1.0 - fx) * fy * full[ix, iy + 1]
                + fx * fy * full[ix + 1, iy + 1]
            )
            k += 1
    return out


class DrFomModel(ForwardModel):
    """Full-order diffusion-reaction forward map theta -> 12 observations."""

    d_in = 2
    d_out = 12
    cost = "hifi"

    def __init__(self, grid: DrGrid):
        self.grid = grid

    def eval(self, theta: np.ndarray) -> np.ndarray:
        return dr_observe(dr_solve(theta, self.grid), self.grid)


class DrRomModel(ForwardModel):
    """POD-Galerkin reduced model of the diffusion-reaction map."""

    d_in = 2
    d_out = 12
    cost = "lofi"

    def __init__(self, basis: np.ndarray, grid: DrGrid, meta: dict):
        self.basis = np.asarray(basis, dtype=float)
        self.grid = grid
        self.meta = dict(meta)
        self.r = self.basis.shape[1]
        self.reduced_laplacian = self.basis.T @ (grid.laplacian @ self.basis)
        self.reduced_forcing = self.basis.T @ grid.forcing

    def solve_reduced(self, theta, return_info: bool = False):
        """Newton on the Galerkin-projected residual; returns reduced coords."""
        V = self.basis

        def residual(c):
            return (
                self.reduced_laplacian @ c
                + V.T @ dr_reaction(V @ c, theta)
                - self.reduced_forcing
            )

        def jac_solve(c, rhs):
            gp = dr_reaction_derivative(V @ c, theta)
            J = self.reduced_laplacian + V.T @ (gp[:, None] * V)
            return np.linalg.solve(J, rhs)

        return _newton(residual, jac_solve, np.zeros(self.r), "rom_solve", return_info)

    def eval(self, theta: np.ndarray) -> np.ndarray:
        return dr_observe(self.basis @ self.solve_reduced(theta), self.grid)


def build_dr_rom(
    h: float,
    snapshot_shape: tuple[int, int] = (20, 20),
    box: tuple[tuple[float, float], tuple[float, float]] = ((-np.pi / 2, np.pi / 2), (1.0, 5.0)),
    r: int = 20,
) -> DrRomModel:
    """Train a POD-Galerkin ROM from full-order snapshots on a parameter grid.

    Snapshots are solved on the tensor grid of ``snapshot_shape`` points
    over ``box``; the basis keeps the top ``r`` left singular vectors.
    """
    grid = make_dr_grid(h)
    n1, n2 = snapshot_shape
    t1s = np.linspace(box[0][0], box[0][1], n1)
    t2s = np.linspace(box[1][0], box[1][1], n2)
    snapshots = np.empty((grid.n_unknowns, n1 * n2))
    k = 0
    for t1 in t1s:
        for t2 in t2s:
            snapshots[:, k] = dr_solve((t1, t2), grid)
            k += 1
    if not 1 <= r <= min(snapshots.shape):
        raise ValueError(f"basis size r={r} out of range for {snapshots.shape} snapshots")
    left, singular, _ = np.linalg.svd(snapshots, full_matrices=False)
    meta = {
        "h": h,
        "snapshot_shape": [n1, n2],
        "box": [list(box[0]), list(box[1])],
        "r": r,
        "singular_values": singular.tolist(),
    }
    return DrRomModel(basis=left[:, :r], grid=grid, meta=meta)


def save_dr_rom(json_path, rom: DrRomModel) -> None:
    """Write ROM metadata as JSON and the basis as a CSV next to it."""
    json_path = Path(json_path)
    basis_path = json_path.with_suffix(".basis.csv")
    with open(basis_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for row in rom.basis:
            writer.writerow([repr(float(v)) for v in row])
    record = dict(rom.meta)
    record["basis_csv"] = basis_path.name
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2)
        fh.write("\n")


def load_dr_rom(json_path) -> DrRomModel:
    json_path = Path(json_path)
    with open(json_path, encoding="utf-8") as fh:
        record = json.load(fh)
    basis_path = json_path.parent / record["basis_csv"]
    with open(basis_path, encoding="utf-8", newline="") as fh:
        basis = np.array([[float(v) for v in row] for row in csv.reader(fh)])
    grid = make_dr_grid(record["h"])
    return DrRomModel(basis=basis, grid=grid, meta=record)
