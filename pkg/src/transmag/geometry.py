"""Tensor evaluation, Levi-Civita connection and structure-identity checks.

A manifold is given in a single coordinate chart by component functions:
the metric g, the (1,1) tensor f of rank 2n, the s characteristic vector
fields xi_i and their dual 1-forms eta_i.  Everything here is numerical:
derivatives of component matrices are taken by central finite differences
and every structural identity is verified as a residual, never assumed.

Index conventions for arrays:
    metric(points)  -> (m, d, d)   g_{ab}
    f(points)       -> (m, d, d)   f^a_b   (row = output component)
    xi(points)      -> (m, s, d)   xi_i^a
    eta(points)     -> (m, s, d)   (eta_i)_a
    christoffel     -> (d, d, d)   Gamma^k_{ij}, symmetric in (i, j)

The exterior derivative of the fundamental 2-form uses the convention
dW(X,Y,Z) = X W(Y,Z) - Y W(X,Z) + Z W(X,Y) on coordinate fields together
with the three-term cyclic wedge (W ^ t)(X,Y,Z) = W(X,Y)t(Z) + W(Y,Z)t(X)
+ W(Z,X)t(Y); the 1-form differential in the normality check carries the
extra 1/2 of deta(X,Y) = (X eta(Y) - Y eta(X))/2.  Both choices are the
ones under which the standard model constructions satisfy their
identities exactly.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateMetricError,
    DomainError,
    InsufficientSamplesError,
    StructureError,
    UnderdeterminedError,
)

# Central-difference step for first derivatives of tensor components,
# scaled per coordinate: h = eps^(1/3) * max(1, |x_k|).
_EPS_CBRT = float(np.finfo(float).eps) ** (1.0 / 3.0)


def fd_steps(x):
    """Per-axis finite-difference steps at a point (or batch of points)."""
    return _EPS_CBRT * np.maximum(1.0, np.abs(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class TangentVector:
    """A coordinate vector attached to a chart point."""

    base_point: np.ndarray
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base_point",
                           np.asarray(self.base_point, dtype=float))
        object.__setattr__(self, "components",
                           np.asarray(self.components, dtype=float))
        if not (np.all(np.isfinite(self.base_point))
                and np.all(np.isfinite(self.components))):
            raise ValueError("non-finite tangent vector data")


@dataclass(frozen=True)
class ManifoldModel:
    """Coordinate-chart description of a framed metric f-manifold.

    ``n`` is half the rank of f, ``s`` the number of characteristic
    fields, so the chart has dimension ``2n + s``.  ``alpha``/``beta``
    are the structure functions of the covariant-derivative identity
    when they are known in closed form; without them they can still be
    recovered numerically with :func:`extract_alpha_beta`.
    """

    name: str
    n: int
    s: int
    domain: np.ndarray                    # (dim, 2) per-axis [lo, hi]
    metric_field: object                  # CompiledField (m,d,d)
    f_field: object                       # CompiledField (m,d,d)
    xi_field: object                      # CompiledField (m,s,d)
    eta_field: object                     # CompiledField (m,s,d)
    alpha_field: object = None            # CompiledField (m,s) or None
    beta_field: object = None
    sources: dict = field(default=None, repr=False)

    @property
    def dim(self):
        return 2 * self.n + self.s

    # -- field evaluation (batched) ---------------------------------------
    def metric(self, points):
        return self.metric_field(points)

    def f(self, points):
        return self.f_field(points)

    def xi(self, points):
        return self.xi_field(points)

    def eta(self, points):
        return self.eta_field(points)

    def alpha(self, points):
        return None if self.alpha_field is None else self.alpha_field(points)

    def beta(self, points):
        return None if self.beta_field is None else self.beta_field(points)

    # -- single-point conveniences -----------------------------------------
    def metric_at(self, x):
        return self.metric(np.asarray(x, float)[None, :])[0]

    def f_at(self, x):
        return self.f(np.asarray(x, float)[None, :])[0]

    def xi_at(self, x):
        return self.xi(np.asarray(x, float)[None, :])[0]

    def eta_at(self, x):
        return self.eta(np.asarray(x, float)[None, :])[0]

    # -- chart domain --------------------------------------------------------
    def contains(self, points, pad=0.0):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        lo = self.domain[:, 0] + pad
        hi = self.domain[:, 1] - pad
        return np.all((points >= lo) & (points <= hi), axis=1)

    def require_inside(self, points, pad=0.0, what="point"):
        ok = self.contains(points, pad=pad)
        if not np.all(ok):
            bad = np.atleast_2d(np.asarray(points, float))[~ok][0]
            raise DomainError(
                f"{what} {bad} outside chart domain of {self.name}")

    def center(self):
        return 0.5 * (self.domain[:, 0] + self.domain[:, 1])

    def sample_points(self, count, rng, pad=1e-3):
        """Seeded uniform points in the (slightly shrunken) chart box."""
        lo = self.domain[:, 0]
        hi = self.domain[:, 1]
        u = rng.random((count, self.dim))
        return lo + (hi - lo) * (pad + (1 - 2 * pad) * u)


# ---------------------------------------------------------------------------
# Connection and covariant derivatives
# ---------------------------------------------------------------------------

def invert_metric(g):
    """Inverse of one or a stack of metric matrices."""
    try:
        ginv = np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise DegenerateMetricError(f"degenerate metric: {exc}") from exc
    if not np.all(np.isfinite(ginv)):
        raise DegenerateMetricError("degenerate metric: non-finite inverse")
    return ginv


def _stencil(points, steps):
    """Stencil x +- h_k e_k for a batch of points: (m, 2d, dim)."""
    m, d = points.shape
    pts = np.repeat(points[:, None, :], 2 * d, axis=1)
    idx = np.arange(d)
    pts[:, idx, idx] += steps
    pts[:, d + idx, idx] -= steps
    return pts


def _partial_field(model, field_fn, points, check_domain=True):
    """Values and central-difference partials of a field at points.

    Returns ``(values, partials)`` with
    ``partials[m, k, ...] = d/dx_k field[...]``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    m, d = points.shape
    steps = fd_steps(points)
    pts = _stencil(points, steps)
    if check_domain:
        model.require_inside(points)
        model.require_inside(pts.reshape(-1, d), what="stencil point")
    vals = field_fn(np.concatenate([pts.reshape(m * 2 * d, d), points]))
    stencil_vals = vals[:m * 2 * d].reshape((m, 2 * d) + vals.shape[1:])
    center = vals[m * 2 * d:]
    denom = (2.0 * steps).reshape((m, d) + (1,) * (vals.ndim - 1))
    partials = (stencil_vals[:, :d] - stencil_vals[:, d:]) / denom
    return center, partials


def _christoffel_from_partials(g0, dg):
    # dg[m, a, b, c] = d_a g_{bc}
    lower = 0.5 * (dg
                   + np.einsum("mjil->mijl", dg)
                   - np.einsum("mlij->mijl", dg))
    ginv = invert_metric(g0)
    return np.einsum("mkl,mijl->mkij", ginv, lower)


def christoffel(model, point):
    """Levi-Civita connection coefficients Gamma^k_{ij} at a point.

    Metric partials are taken by central finite differences; the result
    is exactly symmetric in (i, j) by construction.
    """
    x = np.asarray(point, dtype=float)
    g0, dg = _partial_field(model, model.metric_field, x[None, :])
    return _christoffel_from_partials(g0, dg)[0]


def christoffel_batch(model, points, check_domain=True):
    """Gamma^k_{ij} at a batch of points, shape (m, d, d, d)."""
    g0, dg = _partial_field(model, model.metric_field, points,
                            check_domain=check_domain)
    return _christoffel_from_partials(g0, dg)


def covariant_derivative_field(model, positions, velocities, W, h,
                               gammas=None):
    """Covariant derivative of a field sampled along a curve, all samples.

    d/dt is a second-order difference (one-sided at the ends); the
    connection term Gamma(T, W) is added pointwise.  ``gammas`` may carry
    the precomputed ``christoffel_batch`` output for the positions.
    """
    W = np.asarray(W, dtype=float)
    if W.shape[0] < 5:
        raise InsufficientSamplesError("insufficient samples (need >= 5)")
    dW = np.gradient(W, h, axis=0, edge_order=2)
    if gammas is None:
        gammas = christoffel_batch(model, positions)
    return dW + np.einsum("mkij,mi,mj->mk", gammas, velocities, W)


def covariant_derivative_along(model, trajectory, field_values, index,
                               one_sided=False):
    """Covariant derivative of a sampled vector field along a curve.

    ``field_values`` holds the field components at every trajectory
    sample; the derivative is returned at sample ``index``.  Boundary
    indices require ``one_sided=True`` (second-order one-sided stencil).
    """
    W = np.asarray(field_values, dtype=float)
    N = W.shape[0]
    if N < 5:
        raise InsufficientSamplesError("insufficient samples (need >= 5)")
    if W.shape != trajectory.positions.shape:
        raise ValueError("field_values must be sampled on the trajectory grid")
    h = trajectory.h
    if 0 < index < N - 1:
        dW = (W[index + 1] - W[index - 1]) / (2.0 * h)
    elif not one_sided:
        raise ValueError("boundary sample: pass one_sided=True")
    elif index == 0:
        dW = (-3.0 * W[0] + 4.0 * W[1] - W[2]) / (2.0 * h)
    else:
        dW = (3.0 * W[-1] - 4.0 * W[-2] + W[-3]) / (2.0 * h)
    x = trajectory.positions[index]
    v = trajectory.velocities[index]
    gamma = christoffel(model, x)
    comps = dW + np.einsum("kij,i,j->k", gamma, v, W[index])
    return TangentVector(x, comps)


# ---------------------------------------------------------------------------
# Structure-identity checks
# ---------------------------------------------------------------------------

@dataclass
class StructureReport:
    """Per-axiom sup-residuals of the framed-metric structure identities."""

    residuals: dict
    tolerance: float
    points: np.ndarray
    min_metric_eigenvalue: float

    @property
    def passes(self):
        return {name: r < self.tolerance for name, r in self.residuals.items()}

    @property
    def passed(self):
        return all(self.passes.values())

    def failing(self):
        return [name for name, ok in self.passes.items() if not ok]

    def rows(self):
        return [(name, self.residuals[name], self.passes[name])
                for name in sorted(self.residuals)]

    def __str__(self):
        lines = [f"{'axiom':<22} {'residual':>12}  pass"]
        for name, r, ok in self.rows():
            lines.append(f"{name:<22} {r:>12.3e}  {'yes' if ok else 'NO'}")
        return "\n".join(lines)


@dataclass
class NormalityReport:
    """Residuals of the normality bracket identity.

    ``identity_residual`` measures the identity relating the Nijenhuis
    tensor of f plus the 2 sum d(eta_i) (x) xi_i term to the
    eta_j(nabla xi_i) terms; ``s_structure_defect`` measures
    [f, f] + 2 sum d(eta_i) (x) xi_i alone.
    """

    identity_residual: float
    s_structure_defect: float


def _maxabs(a):
    return float(np.max(np.abs(a))) if a.size else 0.0


def check_framed_structure(model, points, tolerance=1e-8):
    """Evaluate every framed-metric-structure axiom at the given points.

    Residuals are sups over points of max-abs defects of:
    f^2 = -I + sum eta_i (x) xi_i;  eta_i(xi_j) = delta_ij;  f(xi_i) = 0;
    eta_i o f = 0;  g(fX, fY) = g(X, Y) - sum eta_i(X) eta_i(Y);
    eta_i = g(., xi_i);  g-orthonormality of the xi_i;  and symmetry /
    positivity of g.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    model.require_inside(pts)
    G = model.metric(pts)
    F = model.f(pts)
    XI = model.xi(pts)
    ETA = model.eta(pts)
    d = model.dim

    ff = np.einsum("mab,mbc->mac", F, F)
    eta_xi = np.einsum("mia,mib->mab", XI, ETA)  # xi_i^a (eta_i)_b
    res = {}
    res["f_squared"] = _maxabs(ff + np.eye(d) - eta_xi)
    res["eta_of_xi"] = _maxabs(np.einsum("mia,mja->mij", ETA, XI)
                               - np.eye(model.s))
    res["f_of_xi"] = _maxabs(np.einsum("mab,mib->mia", F, XI))
    res["eta_after_f"] = _maxabs(np.einsum("mia,mab->mib", ETA, F))
    res["metric_compat"] = _maxabs(
        np.einsum("mca,mcd,mdb->mab", F, G, F) - G
        + np.einsum("mia,mib->mab", ETA, ETA))
    res["eta_duality"] = _maxabs(ETA - np.einsum("mab,mib->mia", G, XI))
    res["xi_orthonormal"] = _maxabs(
        np.einsum("mia,mab,mjb->mij", XI, G, XI) - np.eye(model.s))
    res["metric_symmetry"] = _maxabs(G - G.transpose(0, 2, 1))
    eigmin = float(np.min(np.linalg.eigvalsh(0.5 * (G + G.transpose(0, 2, 1)))))
    res["metric_positive"] = max(0.0, -eigmin)
    return StructureReport(res, tolerance, pts, eigmin)


def _require_structure(model, point, tol=1e-6):
    report = check_framed_structure(model, point, tolerance=tol)
    if not report.passed:
        raise StructureError(
            f"structure axioms fail at {np.asarray(point)}: "
            + ", ".join(report.failing()))


def _nabla_f(model, points):
    """(nabla_a f)^k_b at a batch of points: (F0, nabla[m, a, k, b])."""
    F0, dF = _partial_field(model, model.f_field, points)
    gammas = christoffel_batch(model, points)
    nabla = (dF
             + np.einsum("mkal,mlb->makb", gammas, F0)
             - np.einsum("mlab,mkl->makb", gammas, F0))
    return F0, nabla


def _identity_design(model, points):
    """Design tensors of the covariant-derivative identity.

    Returns (A, B) with ``A[m, i, k, a, b]`` multiplying alpha_i and
    ``B[m, i, k, a, b]`` multiplying beta_i in the expansion of
    (nabla_a f)(e_b) at each point.
    """
    G = model.metric(points)
    F = model.f(points)
    XI = model.xi(points)
    ETA = model.eta(points)
    gff = np.einsum("mca,mcd,mdb->mab", F, G, F)     # g(f e_a, f e_b)
    gf = np.einsum("mca,mcb->mab", F, G)             # g(f e_a, e_b)
    ff = np.einsum("mkl,mla->mka", F, F)             # (f^2)^k_a
    A = (np.einsum("mab,mik->mikab", gff, XI)
         + np.einsum("mib,mka->mikab", ETA, ff))
    B = (np.einsum("mab,mik->mikab", gf, XI)
         - np.einsum("mib,mka->mikab", ETA, F))
    return A, B


def identity_defect(model, point, alpha, beta):
    """Sup g-norm defect of the covariant-derivative identity at a point,
    with given candidate structure functions."""
    x = np.asarray(point, dtype=float)[None, :]
    _, L = _nabla_f(model, x)
    A, B = _identity_design(model, x)
    rhs = (np.einsum("i,ikab->kab", np.asarray(alpha, float), A[0])
           + np.einsum("i,ikab->kab", np.asarray(beta, float), B[0]))
    defect = np.einsum("akb->kab", L[0]) - rhs
    g0 = model.metric_at(x[0])
    norms = np.sqrt(np.abs(np.einsum("kab,kl,lab->ab", defect, g0, defect)))
    return float(np.max(norms))


def extract_alpha_beta(model, point, structure_tol=1e-6):
    """Fit the structure functions alpha_i, beta_i at a point.

    The covariant derivative of f over all coordinate basis pairs is
    computed by finite differences and the defining identity is solved
    for (alpha, beta) in the least-squares sense.  Returns ``(alpha,
    beta, residual)`` where the residual is the sup over basis pairs of
    the g-norm of the identity defect with the fitted coefficients.
    """
    x = np.asarray(point, dtype=float)[None, :]
    _require_structure(model, x, tol=structure_tol)
    s = model.s
    _, L = _nabla_f(model, x)
    A, B = _identity_design(model, x)
    lhs = np.einsum("akb->kab", L[0]).reshape(-1)
    cols = np.concatenate([A[0], B[0]], axis=0)      # (2s, k, a, b)
    M = cols.reshape(2 * s, -1).T
    coef, _, rank, _ = np.linalg.lstsq(M, lhs, rcond=None)
    if rank < 2 * s:
        raise UnderdeterminedError(f"underdetermined at point {x[0]}")
    alpha, beta = coef[:s], coef[s:]
    residual = identity_defect(model, x[0], alpha, beta)
    return alpha, beta, residual


def alpha_beta_along(model, points):
    """Structure functions at many points: stored fields when available,
    otherwise pointwise least-squares extraction."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if model.alpha_field is not None and model.beta_field is not None:
        return model.alpha(pts), model.beta(pts)
    out_a = np.empty((pts.shape[0], model.s))
    out_b = np.empty((pts.shape[0], model.s))
    for k, x in enumerate(pts):
        out_a[k], out_b[k], _ = extract_alpha_beta(model, x)
    return out_a, out_b


def check_xi_derivative(model, points, alpha=None, beta=None):
    """Sup residual of nabla_X xi_i = -alpha_i f X - beta_i f^2 X.

    X ranges over the coordinate basis; the defect is measured in the
    g-norm.  Stored (or explicitly passed) structure functions are used
    when available, otherwise they are extracted first.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m = pts.shape[0]
    if alpha is None or beta is None:
        alpha, beta = alpha_beta_along(model, pts)
    else:
        alpha = np.broadcast_to(np.asarray(alpha, float), (m, model.s))
        beta = np.broadcast_to(np.asarray(beta, float), (m, model.s))
    XI0, dXI = _partial_field(model, model.xi_field, pts)
    gammas = christoffel_batch(model, pts)
    G = model.metric(pts)
    F = model.f(pts)
    FF = np.einsum("mkl,mla->mka", F, F)
    # nabla[m, a, i, k] = d_a xi_i^k + Gamma^k_{al} xi_i^l
    nabla = dXI + np.einsum("mkal,mil->maik", gammas, XI0)
    defect = (nabla
              + np.einsum("mi,mka->maik", alpha, F)
              + np.einsum("mi,mka->maik", beta, FF))
    norms = np.sqrt(np.abs(
        np.einsum("maik,mkl,mail->mai", defect, G, defect)))
    return float(np.max(norms))


def omega_matrix(model, points):
    """Components of the fundamental 2-form, Omega_{ab} = g_{ac} f^c_b."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.einsum("mac,mcb->mab", model.metric(pts), model.f(pts))


def fundamental_two_form(model, point, X, Y):
    """Omega(X, Y) = g(X, fY) for vectors at a point."""
    x = np.asarray(point, dtype=float)
    if isinstance(X, TangentVector):
        X = X.components
    if isinstance(Y, TangentVector):
        Y = Y.components
    om = omega_matrix(model, x[None, :])[0]
    return float(np.asarray(X, float) @ om @ np.asarray(Y, float))


def check_d_omega(model, points):
    """Sup defect of d Omega = 2 Omega ^ sum_i beta_i eta_i.

    The exterior derivative is evaluated on all coordinate triples by
    finite differences of the 2-form components.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    om0, dom = _partial_field(model, lambda P: omega_matrix(model, P), pts)
    # dOmega_{abc} = d_a Om_{bc} - d_b Om_{ac} + d_c Om_{ab}
    d_omega = (dom
               - np.einsum("mbac->mabc", dom)
               + np.einsum("mcab->mabc", dom))
    _, beta = alpha_beta_along(model, pts)
    theta = np.einsum("mi,mib->mb", beta, model.eta(pts))
    wedge = (np.einsum("mab,mc->mabc", om0, theta)
             + np.einsum("mbc,ma->mabc", om0, theta)
             + np.einsum("mca,mb->mabc", om0, theta))
    return _maxabs(d_omega - 2.0 * wedge)


def check_normality(model, points):
    """Residuals of the normality bracket identity at the given points.

    Evaluates the Nijenhuis tensor [f, f] on coordinate fields by finite
    differences, adds 2 sum_i d(eta_i) (x) xi_i, and compares with the
    characteristic-field terms sum_{i,j} [eta_j(nabla_X xi_i) eta_j(Y)
    - eta_j(nabla_Y xi_i) eta_j(X)] xi_i.  Also reports the defect of
    [f, f] + 2 sum_i d(eta_i) (x) xi_i alone.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    F0, dF = _partial_field(model, model.f_field, pts)
    ETA0, dETA = _partial_field(model, model.eta_field, pts)
    XI0, dXI = _partial_field(model, model.xi_field, pts)
    gammas = christoffel_batch(model, pts)

    # Nijenhuis tensor on coordinate fields; dF[m, c, k, b] = d_c f^k_b.
    nijenhuis = (np.einsum("mla,mlkb->mkab", F0, dF)
                 - np.einsum("mlb,mlka->mkab", F0, dF)
                 + np.einsum("mkl,mbla->mkab", F0, dF)
                 - np.einsum("mkl,malb->mkab", F0, dF))
    # d(eta_i)(X, Y) = (X eta_i(Y) - Y eta_i(X)) / 2 on coordinate fields.
    deta = 0.5 * (np.einsum("maib->miab", dETA)
                  - np.einsum("mbia->miab", dETA))
    lhs = nijenhuis + 2.0 * np.einsum("miab,mik->mkab", deta, XI0)

    nabla_xi = dXI + np.einsum("mkal,mil->maik", gammas, XI0)
    proj = np.einsum("maik,mjk->maij", nabla_xi, ETA0)
    rhs = np.einsum("miab,mik->mkab",
                    np.einsum("maij,mjb->miab", proj, ETA0)
                    - np.einsum("mbij,mja->miab", proj, ETA0),
                    XI0)
    return NormalityReport(identity_residual=_maxabs(lhs - rhs),
                           s_structure_defect=_maxabs(lhs))


def metric_compatibility_defect(model, points):
    """Sup defect of d_k g(X, Y) = g(nabla_k X, Y) + g(X, nabla_k Y) for
    constant-component fields X, Y (a direct connection diagnostic)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    g0, dg = _partial_field(model, model.metric_field, pts)
    gammas = christoffel_batch(model, pts)
    defect = (dg
              - np.einsum("mlki,mlj->mkij", gammas, g0)
              - np.einsum("mlkj,mil->mkij", gammas, g0))
    return _maxabs(defect)
