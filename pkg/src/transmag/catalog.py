"""Built-in manifold models and the model-file parser.

Three families are built in:

``standard_s_space(n, s)``
    The standard structure on R^(2n+s): eta^a = (dz_a - sum_i y_i dx_i)/2,
    xi_a = 2 d/dz_a, g = sum_a eta^a (x) eta^a + (dx^2 + dy^2)/4 and f the
    rotation of the xy-block.  Its structure functions are alpha_i = 1,
    beta_i = 0.

``c_space(n, s)``
    The flat product: Euclidean metric, f the block rotation, xi_a = d/dz_a,
    eta^a = dz_a; alpha = beta = 0 and both fundamental forms are closed.

``kenmotsu_warped(n, sigma)``
    The warped product g = dz^2 + exp(2 sigma(z)) * (Euclidean fiber) with
    xi = d/dz, eta = dz and f the fiber rotation; alpha = 0 and
    beta = sigma'(z).  ``sigma`` is an expression in the alias variable t.

User-defined models are JSON documents (see ``parse_model``) whose
component entries use the same expression grammar.  Parsing certifies the
structure axioms at the document's sample points before returning.

No particular textbook normalization is assumed anywhere: the component
formulas above are conventions of this package, and the numerical checks
in :mod:`transmag.geometry` are the source of truth for them.
"""

import json
import os

import numpy as np

from . import expressions as ex
from .errors import CertificationError, ModelFormatError
from .geometry import ManifoldModel, check_framed_structure

_CERT_SEED = 20240915


def _build(name, n, s, domain, g, f, xi, eta, alpha=None, beta=None,
           sample_points=None, tolerance=1e-6, check_finite=False,
           alias=None):
    dim = 2 * n + s
    domain = np.asarray(domain, dtype=float)
    if domain.shape != (dim, 2) or np.any(domain[:, 0] >= domain[:, 1]):
        raise ModelFormatError(f"{name}: domain must be {dim} pairs [lo, hi]")
    kw = dict(dim=dim, alias=alias, check_finite=check_finite)
    fields = dict(
        metric_field=ex.compile_field(g, (dim, dim), label=f"{name}.g", **kw),
        f_field=ex.compile_field(f, (dim, dim), label=f"{name}.f", **kw),
        xi_field=ex.compile_field(xi, (s, dim), label=f"{name}.xi", **kw),
        eta_field=ex.compile_field(eta, (s, dim), label=f"{name}.eta", **kw),
    )
    if alpha is not None:
        fields["alpha_field"] = ex.compile_field(
            alpha, (s,), label=f"{name}.alpha", **kw)
    if beta is not None:
        fields["beta_field"] = ex.compile_field(
            beta, (s,), label=f"{name}.beta", **kw)
    model = ManifoldModel(name=name, n=n, s=s, domain=domain, **fields)
    if sample_points is None:
        rng = np.random.default_rng(_CERT_SEED)
        sample_points = model.sample_points(20, rng)
    sample_points = np.atleast_2d(np.asarray(sample_points, dtype=float))
    sources = {
        "name": name,
        "n": n,
        "s": s,
        "domain": domain.tolist(),
        "g": fields["metric_field"].sources,
        "f": fields["f_field"].sources,
        "xi": fields["xi_field"].sources,
        "eta": fields["eta_field"].sources,
        "sample_points": sample_points.tolist(),
        "tolerance": tolerance,
    }
    if alpha is not None:
        sources["alpha"] = fields["alpha_field"].sources
    if beta is not None:
        sources["beta"] = fields["beta_field"].sources
    return ManifoldModel(name=name, n=n, s=s, domain=domain,
                         sources=sources, **fields)


def _zeros(rows, cols):
    return [["0"] * cols for _ in range(rows)]


def standard_s_space(n, s, xy_halfwidth=16.0, z_halfwidth=200.0):
    """Standard structure on R^(2n+s) with alpha_i = 1, beta_i = 0."""
    if n < 1 or s < 1:
        raise ValueError("standard_s_space requires n >= 1 and s >= 1")
    dim = 2 * n + s

    def y(j):  # 1-based expression name of the j-th y coordinate
        return f"x{n + j + 1}"

    g = _zeros(dim, dim)
    for i in range(n):
        for j in range(n):
            g[i][j] = f"0.25*({int(i == j)}+{s}*{y(i)}*{y(j)})"
        g[n + i][n + i] = "0.25"
        for a in range(s):
            g[i][2 * n + a] = g[2 * n + a][i] = f"-0.25*{y(i)}"
    for a in range(s):
        g[2 * n + a][2 * n + a] = "0.25"

    f = _zeros(dim, dim)
    for i in range(n):
        f[i][n + i] = "1"
        f[n + i][i] = "-1"
    for a in range(s):
        for j in range(n):
            f[2 * n + a][n + j] = y(j)

    xi = _zeros(s, dim)
    eta = _zeros(s, dim)
    for a in range(s):
        xi[a][2 * n + a] = "2"
        eta[a][2 * n + a] = "0.5"
        for i in range(n):
            eta[a][i] = f"-0.5*{y(i)}"

    half = [xy_halfwidth] * (2 * n) + [z_halfwidth] * s
    domain = [[-w, w] for w in half]
    return _build(f"s-space({n},{s})", n, s, domain, g, f, xi, eta,
                  alpha=["1"] * s, beta=["0"] * s)


def c_space(n, s, halfwidth=8.0, z_halfwidth=24.0):
    """Flat product model: Euclidean metric, closed fundamental forms."""
    if n < 1 or s < 1:
        raise ValueError("c_space requires n >= 1 and s >= 1")
    dim = 2 * n + s
    g = [[str(int(i == j)) for j in range(dim)] for i in range(dim)]
    f = _zeros(dim, dim)
    for i in range(n):
        f[i][n + i] = "1"
        f[n + i][i] = "-1"
    xi = _zeros(s, dim)
    eta = _zeros(s, dim)
    for a in range(s):
        xi[a][2 * n + a] = "1"
        eta[a][2 * n + a] = "1"
    half = [halfwidth] * (2 * n) + [z_halfwidth] * s
    domain = [[-w, w] for w in half]
    return _build(f"c-space({n},{s})", n, s, domain, g, f, xi, eta,
                  alpha=["0"] * s, beta=["0"] * s)


def kenmotsu_warped(n, sigma, fiber_halfwidth=6.0, z_halfwidth=1.5):
    """Warped product with alpha = 0 and beta = sigma'(z).

    ``sigma`` is an expression in the alias variable t (bound to the z
    coordinate, the last chart coordinate); its derivative is taken
    symbolically, so the stored beta is exact.
    """
    if n < 1:
        raise ValueError("kenmotsu_warped requires n >= 1")
    s = 1
    dim = 2 * n + 1
    zvar = f"x{dim}"
    sigma_ast = ex.fold(ex.substitute(ex.parse(sigma), {"t": zvar}))
    extra = ex.variables(sigma_ast) - {zvar}
    if extra:
        raise ModelFormatError(
            f"kenmotsu warping must depend on t only, found {sorted(extra)}")
    warp = ex.to_source(ex.fold(
        ("call", "exp", ("bin", "*", ("num", 2.0), sigma_ast))))
    beta_src = ex.to_source(ex.fold(ex.derivative(sigma_ast, zvar)))

    g = _zeros(dim, dim)
    for i in range(2 * n):
        g[i][i] = warp
    g[dim - 1][dim - 1] = "1"
    f = _zeros(dim, dim)
    for i in range(n):
        f[i][n + i] = "1"
        f[n + i][i] = "-1"
    xi = [["0"] * (dim - 1) + ["1"]]
    eta = [["0"] * (dim - 1) + ["1"]]
    half = [fiber_halfwidth] * (2 * n) + [z_halfwidth]
    domain = [[-w, w] for w in half]
    sigma_text = ex.to_source(ex.fold(ex.parse(sigma))) if isinstance(sigma, str) else ex.to_source(sigma)
    return _build(f"kenmotsu({n},{sigma_text})", n, s, domain, g, f, xi, eta,
                  alpha=["0"], beta=[beta_src])


_REQUIRED = ("n", "s", "domain", "g", "f", "xi", "eta")


def parse_model(text):
    """Parse a JSON model document and certify its structure axioms.

    The document carries: ``name``, ``n``, ``s``, ``domain`` (per-axis
    [lo, hi]), the component expression matrices ``g`` (dim x dim),
    ``f`` (dim x dim), ``xi`` (s x dim), ``eta`` (s x dim), optional
    ``alpha``/``beta`` (s entries), ``sample_points`` for certification
    and an optional certification ``tolerance`` (default 1e-6).

    Raises :class:`ModelFormatError` for structural problems,
    :class:`ExpressionError` (with line/column) for bad expressions, and
    :class:`CertificationError` when an axiom residual exceeds the
    tolerance at a sample point.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(
            f"invalid model document: {exc.msg} "
            f"(line {exc.lineno}, column {exc.colno})") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    missing = [key for key in _REQUIRED if key not in doc]
    if missing:
        raise ModelFormatError("missing component(s): " + ", ".join(missing))
    n, s = doc["n"], doc["s"]
    if not (isinstance(n, int) and isinstance(s, int) and n >= 1 and s >= 1):
        raise ModelFormatError("n and s must be integers >= 1")
    if "sample_points" not in doc or not doc["sample_points"]:
        raise ModelFormatError("missing component(s): sample_points")
    tolerance = float(doc.get("tolerance", 1e-6))
    model = _build(
        str(doc.get("name", "user-model")), n, s, doc["domain"],
        doc["g"], doc["f"], doc["xi"], doc["eta"],
        alpha=doc.get("alpha"), beta=doc.get("beta"),
        sample_points=doc["sample_points"], tolerance=tolerance,
        check_finite=True)
    report = check_framed_structure(
        model, np.asarray(doc["sample_points"], dtype=float),
        tolerance=tolerance)
    if not report.passed:
        raise CertificationError(
            f"model '{model.name}' failed certification on axiom(s) "
            f"{', '.join(report.failing())}:\n{report}", report=report)
    return model


def load_model(path):
    """Read and certify a model file."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model(fh.read())


def serialize_model(model):
    """Deterministic JSON text for a model (inverse of parse_model)."""
    if model.sources is None:
        raise ModelFormatError(
            f"model '{model.name}' carries no expression sources")
    return json.dumps(model.sources, indent=2, sort_keys=True) + "\n"


def model_from_source(source):
    """Resolve a CLI model reference.

    Catalog references look like ``s-space:1,2``, ``c-space:2,3`` or
    ``kenmotsu:1,t^2/2``; anything else is taken as a model-file path.
    """
    if ":" in source:
        kind, _, args = source.partition(":")
        kind = kind.strip().lower().replace("_", "-")
        if kind in ("s-space", "c-space"):
            try:
                n_text, s_text = args.split(",")
                n, s = int(n_text), int(s_text)
            except ValueError:
                raise ModelFormatError(
                    f"expected '{kind}:n,s' with integers, got {source!r}")
            return standard_s_space(n, s) if kind == "s-space" else c_space(n, s)
        if kind == "kenmotsu":
            n_text, _, sigma = args.partition(",")
            try:
                n = int(n_text)
            except ValueError:
                raise ModelFormatError(
                    f"expected 'kenmotsu:n,sigma', got {source!r}")
            if not sigma:
                raise ModelFormatError("kenmotsu reference needs a sigma expression")
            return kenmotsu_warped(n, sigma)
        raise ModelFormatError(f"unknown catalog family {kind!r}")
    if os.path.exists(source):
        return load_model(source)
    raise ModelFormatError(f"no such model file: {source}")
