"""Discretized integral operator and its Mercer eigensystem.

The operator ``(L f)(y) = int k(z, y) f(z) p(z) dz`` is discretized by a
tensor Gauss-Legendre rule on [0, 1]^d.  Eigenpairs come from the
symmetric matrix ``B = S K S`` with ``S = diag(sqrt(w p))``.  In double
precision the spectrum is only resolved down to ~1e-14 * mu_1 (about ten
eigenpairs for the unit-bandwidth Gaussian); passing ``dps`` runs the
eigensolve and the Nystrom extension in mpmath at that many digits.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import mpmath as mp
import numpy as np

from .density import density_from_dict
from .errors import DomainError, FitError, NumericalError, ShapeError, SizeError
from .kernels import BoundReport, RadialKernelSpec, gaussian, kernel_matrix
from .moments import ProductWeight

MODEL_VERSION = "kml-spectral-model/1"
RANK_RTOL = 1e-14
# multiprecision models keep eigenpairs with mu_l / mu_1 > 10^(HP_GUARD_DIGITS - dps), so the
# eigen-residual divided by mu_l stays near 1e-8 and Nystrom extension remains consistent
HP_GUARD_DIGITS = 8
MAX_NODES = 20000
_CHUNK = 2048


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    d: int
    q: int
    axis_nodes: np.ndarray
    axis_weights: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    density_values: np.ndarray
    dps: Optional[int] = None
    mp_axis_nodes: Optional[tuple] = None
    mp_axis_weights: Optional[tuple] = None

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def measure_weights(self) -> np.ndarray:
        """w_i p(z_i)."""
        return self.weights * self.density_values


def _mp_gauss_legendre(q: int, dps: int):
    """Gauss-Legendre on [0, 1] at ``dps`` digits, Newton-polished from numpy's nodes."""
    t0, _ = np.polynomial.legendre.leggauss(q)
    nodes, weights = [], []
    with mp.workdps(dps + 10):
        tol = mp.mpf(10) ** (-(dps + 5))
        for t in t0:
            x = mp.mpf(t)
            for _ in range(100):
                p0, p1 = mp.mpf(1), x
                for k in range(2, q + 1):
                    p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
                dp = q * (x * p1 - p0) / (x * x - 1)
                dx = p1 / dp
                x -= dx
                if abs(dx) < tol:
                    break
            p0, p1 = mp.mpf(1), x
            for k in range(2, q + 1):
                p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
            dp = q * (x * p1 - p0) / (x * x - 1)
            nodes.append((x + 1) / 2)
            weights.append(1 / ((1 - x * x) * dp * dp))
    with mp.workdps(dps):
        return tuple(+v for v in nodes), tuple(+v for v in weights)


def build_grid(d: int, q: int, density=None, dps: Optional[int] = None) -> QuadratureGrid:
    if q < 8:
        raise SizeError("need at least 8 nodes per axis")
    if density is None:
        density = density_from_dict(None, d)
    t, wt = np.polynomial.legendre.leggauss(q)
    z1, w1 = (t + 1.0) / 2.0, wt / 2.0
    mpn = mpw = None
    if dps is not None:
        mpn, mpw = _mp_gauss_legendre(q, dps)
        z1 = np.array([float(v) for v in mpn])
        w1 = np.array([float(v) for v in mpw])
    mesh = np.meshgrid(*([z1] * d), indexing="ij")
    wmesh = np.meshgrid(*([w1] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in mesh], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wmesh], axis=1), axis=1)
    return QuadratureGrid(d, q, z1, w1, nodes, weights, density.pdf(nodes), dps, mpn, mpw)


@dataclass(eq=False)
class SpectralModel:
    grid: QuadratureGrid
    kernel: RadialKernelSpec
    eigenvalues: np.ndarray
    node_values: np.ndarray
    hp_eigenvalues: Optional[list] = None
    hp_node_values: Optional[list] = None
    _tables: dict = field(default_factory=dict, repr=False)

    @property
    def rank(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def dps(self) -> Optional[int]:
        return self.grid.dps

    @property
    def has_eigensystem(self) -> bool:
        return self.node_values is not None


def _mp_kernel(kernel: RadialKernelSpec, a: Sequence, b: Sequence):
    sq = mp.fsum((ai - bi) ** 2 for ai, bi in zip(a, b))
    return mp.exp(-kernel.sigma * sq)


def _mp_nodes(grid: QuadratureGrid):
    axes = grid.mp_axis_nodes
    idx = np.stack(np.meshgrid(*([np.arange(grid.q)] * grid.d), indexing="ij"), -1).reshape(-1, grid.d)
    return [tuple(axes[k] for k in row) for row in idx], idx


def _mp_measure_weights(grid: QuadratureGrid, idx) -> list:
    w = grid.mp_axis_weights
    out = []
    for r, row in enumerate(idx):
        v = mp.mpf(1)
        for k in row:
            v *= w[k]
        out.append(v * mp.mpf(float(grid.density_values[r])))
    return out


def build_model(kernel: RadialKernelSpec, q: int, *, dps: Optional[int] = None, eigen: bool = True) -> SpectralModel:
    """Gauss-Legendre discretization; with ``eigen`` also the Mercer eigenpairs.

    Eigenvalues below ``RANK_RTOL * mu_1`` (double) or ``10^(8-dps) * mu_1``
    (multiprecision) are treated as numerically zero.  A negative eigenvalue
    above that cutoff means the kernel matrix is not PSD and aborts.
    """
    if q < 8:
        raise SizeError("need at least 8 nodes per axis")
    if eigen and q**kernel.d > MAX_NODES:
        raise SizeError(f"q^d = {q ** kernel.d} exceeds {MAX_NODES} nodes")
    if dps is not None and kernel.family != "gaussian":
        raise DomainError("multiprecision models are implemented for the Gaussian kernel only")
    grid = build_grid(kernel.d, q, kernel.density, dps)
    if not eigen:
        return SpectralModel(grid, kernel, np.empty(0), None)
    if dps is None:
        return _build_double(grid, kernel)
    return _build_mp(grid, kernel, dps)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    signs = np.where(vectors[0] < 0, -1.0, 1.0)
    return vectors * signs


def _build_double(grid: QuadratureGrid, kernel: RadialKernelSpec) -> SpectralModel:
    sw = np.sqrt(grid.measure_weights)
    B = sw[:, None] * kernel_matrix(kernel, grid.nodes, grid.nodes) * sw[None, :]
    try:
        vals, vecs = np.linalg.eigh(B)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("symmetric eigensolver failed") from exc
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    cutoff = RANK_RTOL * max(vals[0], 0.0)
    if vals[-1] < -cutoff and vals[-1] < -1e-12:
        raise NumericalError(f"kernel matrix not PSD: eigenvalue {vals[-1]:.3e}")
    keep = vals > cutoff
    phi = _fix_signs(vecs[:, keep] / sw[:, None])
    return SpectralModel(grid, kernel, vals[keep].copy(), phi)


def _build_mp(grid: QuadratureGrid, kernel: RadialKernelSpec, dps: int) -> SpectralModel:
    with mp.workdps(dps):
        pts, idx = _mp_nodes(grid)
        mw = _mp_measure_weights(grid, idx)
        sw = [mp.sqrt(v) for v in mw]
        n = len(pts)
        B = mp.matrix(n, n)
        for i in range(n):
            for j in range(i, n):
                B[i, j] = B[j, i] = sw[i] * _mp_kernel(kernel, pts[i], pts[j]) * sw[j]
        try:
            E, Q = mp.eigsy(B)
        except Exception as exc:  # mpmath raises bare exceptions on non-convergence
            raise NumericalError("multiprecision eigensolver failed") from exc
        order = sorted(range(n), key=lambda k: E[k], reverse=True)
        mu1 = E[order[0]]
        cutoff = mp.mpf(10) ** (HP_GUARD_DIGITS - dps) * mu1
        if E[order[-1]] < -cutoff:
            raise NumericalError(f"kernel matrix not PSD: eigenvalue {mp.nstr(E[order[-1]], 5)}")
        keep = [k for k in order if E[k] > cutoff]
        hp_vals = [E[k] for k in keep]
        hp_phi = []
        for k in keep:
            col = [Q[i, k] / sw[i] for i in range(n)]
            if col[0] < 0:
                col = [-v for v in col]
            hp_phi.append(col)
        # stored as rows = nodes, columns = eigenfunctions
        hp_phi = [list(r) for r in zip(*hp_phi)]
    vals = np.array([float(v) for v in hp_vals])
    phi = np.array([[float(v) for v in row] for row in hp_phi])
    return SpectralModel(grid, kernel, vals, phi, hp_vals, hp_phi)


def _require_eigen(model: SpectralModel) -> None:
    if not model.has_eigensystem:
        raise NumericalError("model was built without an eigensystem")


def _as_points(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim <= 1:
        x = x.reshape(-1, d)
    if x.ndim != 2 or x.shape[1] != d:
        raise ShapeError(f"points must have dimension {d}")
    return x


def eigenfunction_values(model: SpectralModel, X, ells: Optional[Sequence[int]] = None) -> np.ndarray:
    """Nystrom extension phi_l(x) = (1/mu_l) sum_i w_i p_i k(x, z_i) phi_l(z_i); returns (N, len(ells))."""
    _require_eigen(model)
    X = _as_points(X, model.kernel.d)
    cols = list(range(model.rank)) if ells is None else [l - 1 for l in ells]
    for c in cols:
        if not 0 <= c < model.rank:
            raise IndexError(f"eigen index {c + 1} outside retained rank {model.rank}")
    if model.hp_eigenvalues is not None:
        return _hp_extend(model, X, cols)
    g = model.grid
    A = model.node_values[:, cols] * g.measure_weights[:, None] / model.eigenvalues[cols]
    out = np.empty((X.shape[0], len(cols)))
    for s in range(0, X.shape[0], _CHUNK):
        out[s:s + _CHUNK] = kernel_matrix(model.kernel, X[s:s + _CHUNK], g.nodes) @ A
    return out


def _hp_extend(model: SpectralModel, X: np.ndarray, cols: list) -> np.ndarray:
    g = model.grid
    with mp.workdps(g.dps):
        key = ("hp-coef", tuple(cols))
        if key not in model._tables:
            pts, idx = _mp_nodes(g)
            mw = _mp_measure_weights(g, idx)
            coef = [[mw[i] * model.hp_node_values[i][c] / model.hp_eigenvalues[c] for i in range(len(pts))]
                    for c in cols]
            model._tables[key] = (pts, coef)
        pts, coef = model._tables[key]
        out = np.empty((X.shape[0], len(cols)))
        for r, x in enumerate(X):
            xm = [mp.mpf(float(v)) for v in x]
            kx = [_mp_kernel(model.kernel, xm, z) for z in pts]
            for c, a in enumerate(coef):
                out[r, c] = float(mp.fdot(kx, a))
    return out


def nystrom_extend(model: SpectralModel, ell: int, x) -> float:
    return float(eigenfunction_values(model, np.reshape(np.asarray(x, dtype=float), (1, -1)), [ell])[0, 0])


def apply_operator(model: SpectralModel, f, y):
    """sum_i w_i p_i k(y, z_i) f(z_i); scalar for one point, array for many."""
    g = model.grid
    f = np.asarray(f, dtype=float)
    if f.shape != (g.size,):
        raise ShapeError(f"node vector must have length {g.size}")
    y_arr = np.asarray(y, dtype=float)
    single = y_arr.ndim == 0 or (y_arr.ndim == 1 and y_arr.size == model.kernel.d)
    Y = _as_points(y_arr, model.kernel.d)
    wf = g.measure_weights * f
    out = np.empty(Y.shape[0])
    for s in range(0, Y.shape[0], _CHUNK):
        out[s:s + _CHUNK] = kernel_matrix(model.kernel, Y[s:s + _CHUNK], g.nodes) @ wf
    return float(out[0]) if single else out


@dataclass(frozen=True)
class WeightFunctionRep:
    """w_lambda^x = sum_l mu_l/(lambda+mu_l) phi_l(x) phi_l over retained eigenpairs."""

    model: SpectralModel
    anchor: np.ndarray
    lam: float
    factors: np.ndarray
    phi_x: np.ndarray

    @property
    def coefficients(self) -> np.ndarray:
        return self.factors * self.phi_x

    @property
    def l2_norm_sq(self) -> float:
        return float(np.sum(self.coefficients**2))

    @property
    def mixed_norm(self) -> float:
        """sum_l mu_l/(lambda+mu_l) phi_l(x)^2."""
        return float(np.sum(self.factors * self.phi_x**2))

    def __call__(self, y) -> np.ndarray:
        return eigenfunction_values(self.model, y) @ self.coefficients


def _shrinkage(model: SpectralModel, lam: float) -> np.ndarray:
    if lam < 0:
        raise DomainError("lambda must be nonnegative")
    mu = model.eigenvalues
    return mu / (lam + mu) if math.isfinite(lam) else np.zeros_like(mu)


def weight_function(model: SpectralModel, x, lam: float) -> WeightFunctionRep:
    _require_eigen(model)
    factors = _shrinkage(model, lam)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    phi_x = eigenfunction_values(model, x.reshape(1, -1))[0]
    return WeightFunctionRep(model, x, lam, factors, phi_x)


def uniform_grid(G: int, d: int) -> np.ndarray:
    if G < 2:
        raise SizeError("evaluation grid needs at least 2 points per axis")
    axis = np.linspace(0.0, 1.0, G)
    return np.stack(np.meshgrid(*([axis] * d), indexing="ij"), -1).reshape(-1, d)


def default_resolution(d: int) -> int:
    return {1: 512, 2: 64}.get(d, 16)


def eigenfunction_table(model: SpectralModel, G: Optional[int] = None) -> np.ndarray:
    """phi_l on the uniform G^d grid, cached on the model."""
    G = G or default_resolution(model.kernel.d)
    key = ("table", G)
    if key not in model._tables:
        model._tables[key] = eigenfunction_values(model, uniform_grid(G, model.kernel.d))
    return model._tables[key]


def empirical_ninf(model: SpectralModel, lam: float, G: Optional[int] = None) -> float:
    """max over the G^d grid of sum_l mu_l/(lambda+mu_l) phi_l(x)^2."""
    _require_eigen(model)
    G = G or default_resolution(model.kernel.d)
    if G < 3:
        raise SizeError("G must be >= 3")
    table = eigenfunction_table(model, G)
    return float(np.max(table**2 @ _shrinkage(model, lam)))


def _check_anchor(W: ProductWeight, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    anchors = np.array([float(a) for a in W.anchors])
    if x.shape != anchors.shape or np.max(np.abs(x - anchors)) > 1e-15:
        raise ShapeError("weight function is not anchored at x")
    return x


def empirical_sup_error(model: SpectralModel, W: ProductWeight, x, G: Optional[int] = None) -> float:
    """max over a uniform y-grid of |(L W)(y) - k(x, y)|.

    The Gaussian kernel and a tensor rule factor over axes, so (L W)(y) is a
    product of one-dimensional sums (the density cancels against W's 1/p).
    Other kernels go through :func:`apply_operator` on the full grid.
    """
    x = _check_anchor(W, x)
    d = model.kernel.d
    if W.d != d:
        raise ShapeError("weight and kernel dimensions differ")
    G = G or default_resolution(d)
    if G < 3:
        raise SizeError("G must be >= 3")
    g = model.grid
    if model.kernel.family == "gaussian":
        axis = np.linspace(0.0, 1.0, G)
        sig = model.kernel.sigma
        approx = np.ones([G] * d)
        exact = np.ones([G] * d)
        k1 = np.exp(-sig * (axis[:, None] - g.axis_nodes[None, :]) ** 2)
        for i, w in enumerate(W.factors):
            shape = [1] * d
            shape[i] = G
            approx = approx * (k1 @ (g.axis_weights * w(g.axis_nodes))).reshape(shape)
            exact = exact * np.exp(-sig * (axis - x[i]) ** 2).reshape(shape)
        return float(np.max(np.abs(approx - exact)))
    Y = uniform_grid(G, d)
    lw = apply_operator(model, W(g.nodes), Y)
    return float(np.max(np.abs(lw - kernel_matrix(model.kernel, x.reshape(1, -1), Y)[0])))


def empirical_rkhs_error(model: SpectralModel, W: ProductWeight, x) -> float:
    """sum_l mu_l (<W, phi_l> - phi_l(x))^2, the squared RKHS norm of L W - k_x."""
    _require_eigen(model)
    if model.rank == 0:
        raise NumericalError("model has rank zero")
    x = _check_anchor(W, x)
    g = model.grid
    inner = (g.weights * W.factor_product(g.nodes)) @ model.node_values
    phi_x = eigenfunction_values(model, x.reshape(1, -1))[0]
    return float(np.sum(model.eigenvalues * (inner - phi_x) ** 2))


@dataclass(frozen=True)
class DecayFit:
    C_fit: float
    c_fit: float
    residuals: np.ndarray
    d: int

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals)))

    @property
    def C_lower(self) -> float:
        """C_fit shifted down so the fitted curve lies below every eigenvalue.

        The shift is the most negative log residual plus a 1e-12 guard so the
        curve does not touch the eigenvalue that attains it.
        """
        return self.C_fit * math.exp(min(0.0, float(np.min(self.residuals))) - 1e-12)

    def curve(self, ells, lower: bool = True) -> np.ndarray:
        ells = np.asarray(ells, dtype=float)
        C = self.C_lower if lower else self.C_fit
        return C * np.exp(-self.c_fit * (ells + self.d) ** (2.0 / self.d))


def fit_eigen_decay(mu, d: int = 1) -> DecayFit:
    """Least squares for ln mu_l = ln C - c (l + d)^(2/d), l = 1..len(mu)."""
    mu = np.asarray(mu, dtype=float)
    if mu.size < 8:
        raise FitError(f"need at least 8 eigenvalues to fit, have {mu.size}")
    if np.any(mu <= 0):
        raise FitError("eigenvalues must be positive")
    ells = np.arange(1, mu.size + 1, dtype=float)
    feat = (ells + d) ** (2.0 / d)
    A = np.stack([np.ones_like(feat), -feat], axis=1)
    y = np.log(mu)
    (lnC, c), *_ = np.linalg.lstsq(A, y, rcond=None)
    if not c > 0:
        raise FitError("fitted decay rate is not positive")
    return DecayFit(math.exp(lnC), float(c), y - A @ np.array([lnC, c]), d)


def eigen_decay_fit(model: SpectralModel) -> DecayFit:
    _require_eigen(model)
    return fit_eigen_decay(model.eigenvalues, model.kernel.d)


def eigenfunction_sup(model: SpectralModel, G: Optional[int] = None, max_ell: Optional[int] = None) -> np.ndarray:
    """max |phi_l| over the uniform grid and the quadrature nodes, l = 1..max_ell."""
    table = eigenfunction_table(model, G)
    r = model.rank if max_ell is None else min(max_ell, model.rank)
    return np.maximum(np.max(np.abs(table[:, :r]), axis=0), np.max(np.abs(model.node_values[:, :r]), axis=0))


def quadratic_growth_constant(sups) -> float:
    """Smallest b with sup|phi_l| <= b l^2 for the given l = 1..len(sups)."""
    sups = np.asarray(sups, dtype=float)
    return float(np.max(sups / np.arange(1, sups.size + 1) ** 2))


def interpolation_check(model: SpectralModel, coefficients, s: float, b: float, G: Optional[int] = None,
                        tolerance: float = 0.0) -> BoundReport:
    """||f||_inf <= (pi/sqrt 6) b ||f||_s^(3/s) ||f||_2^(1-3/s) for f = sum c_l phi_l."""
    if not s > 3:
        raise DomainError("smoothness index s must exceed 3")
    c = np.asarray(coefficients, dtype=float)
    if c.size > model.rank:
        raise ShapeError("more coefficients than retained eigenfunctions")
    ells = np.arange(1, c.size + 1, dtype=float)
    norm2 = math.sqrt(float(np.sum(c**2)))
    norms = math.sqrt(float(np.sum(c**2 * ells ** (2 * s))))
    table = eigenfunction_table(model, G)
    sup = float(np.max(np.abs(table[:, : c.size] @ c))) if c.size else 0.0
    bound = math.pi / math.sqrt(6.0) * b * norms ** (3.0 / s) * norm2 ** (1.0 - 3.0 / s) if norm2 > 0 else 0.0
    return BoundReport("interpolation", {"s": s, "b": b, "terms": int(c.size)}, bound, sup, tolerance)


def tensor_log_spectrum(log_mu, d: int, count: int) -> np.ndarray:
    """Largest ``count`` values of sum_i log mu_{l_i}, sorted non-increasing."""
    log_mu = np.sort(np.asarray(log_mu, dtype=float))[::-1]
    acc = log_mu.copy()
    for _ in range(d - 1):
        acc = np.sort((acc[:, None] + log_mu[None, :]).ravel())[::-1][:count]
    return acc[:count]


_MODEL_CACHE: dict = {}


def cached_model(sigma: float = 1.0, d: int = 1, q: int = 64, dps: Optional[int] = None,
                 eigen: bool = True) -> SpectralModel:
    """Process-wide cache of uniform-density Gaussian models."""
    key = (float(sigma), d, q, dps, eigen)
    if key not in _MODEL_CACHE:
        _MODEL_CACHE[key] = build_model(gaussian(sigma, d), q, dps=dps, eigen=eigen)
    return _MODEL_CACHE[key]


def model_to_dict(model: SpectralModel) -> dict:
    _require_eigen(model)
    hp = model.hp_eigenvalues is not None
    with mp.workdps(model.dps or 15):
        vals = [mp.nstr(v, model.dps, min_fixed=1, max_fixed=0) for v in model.hp_eigenvalues] if hp \
            else [float(v) for v in model.eigenvalues]
        nodes = [[mp.nstr(v, model.dps, min_fixed=1, max_fixed=0) for v in row] for row in model.hp_node_values] if hp \
            else model.node_values.tolist()
    return {
        "version": MODEL_VERSION,
        "kernel": model.kernel.to_dict(),
        "grid": {"d": model.grid.d, "q": model.grid.q, "dps": model.dps},
        "rank": model.rank,
        "eigenvalues": vals,
        "node_values": nodes,
    }


def model_from_dict(doc: dict) -> SpectralModel:
    if doc.get("version") != MODEL_VERSION:
        raise ShapeError(f"unsupported model document version {doc.get('version')!r}")
    kd = doc["kernel"]
    kernel = gaussian(kd["sigma"], kd["d"], density_from_dict(kd.get("density"), kd["d"]))
    gd = doc["grid"]
    grid = build_grid(gd["d"], gd["q"], kernel.density, gd["dps"])
    if gd["dps"] is None:
        return SpectralModel(grid, kernel, np.array(doc["eigenvalues"], dtype=float),
                         np.array(doc["node_values"], dtype=float).reshape(grid.size, -1))
    with mp.workdps(gd["dps"]):
        hv = [mp.mpf(v) for v in doc["eigenvalues"]]
        hn = [[mp.mpf(v) for v in row] for row in doc["node_values"]]
    return SpectralModel(grid, kernel, np.array([float(v) for v in hv]),
                         np.array([[float(v) for v in row] for row in hn]).reshape(grid.size, -1), hv, hn)


def save_model(model: SpectralModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> SpectralModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
