"""Canonical JSON and CSV serialization for specs, certificates, and results.

Floats in CSV artifacts are written with 17 significant digits so every
emitted value re-parses to the exact double that was in memory.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import ScenarioError
from .expressions import CompiledExpression
from .generator import DomainSpec, EquilibriumDensity, GeneratorSpec, catalog_example
from .pawula import PawulaCertificate, TruncatedOperator

FLOAT_FMT = "{:.17g}"


def fmt(v):
    return FLOAT_FMT.format(float(v))


def canonical_json(obj):
    """Deterministic JSON text: sorted keys, newline-terminated."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


# --------------------------------------------------------------------------
# Generator specs
# --------------------------------------------------------------------------

def _coefficient_to_json(coeff, text_hint=None):
    if isinstance(coeff, CompiledExpression):
        return coeff.text
    if text_hint is not None:
        return text_hint
    raise ScenarioError(
        "coefficient is a bare callable; only expression or table "
        "coefficients are serializable")


def spec_to_dict(spec, equilibrium=None):
    d = {
        "dimension": spec.dimension,
        "a": _coefficient_to_json(spec.a),
        "b": _coefficient_to_json(spec.b),
        "domain": {
            "kind": spec.domain.kind,
            "bounds": [list(ax) for ax in spec.domain.bounds],
            "bc": spec.domain.boundary_condition,
        },
    }
    if spec.label:
        d["label"] = spec.label
    if equilibrium is not None and equilibrium.gibbs is not None:
        beta, H = equilibrium.gibbs
        d["gibbs"] = {"beta": float(beta), "H": _coefficient_to_json(H)}
    return d


def _coefficient_from_json(obj, dimension):
    if isinstance(obj, str):
        return CompiledExpression(obj, dimension)
    if isinstance(obj, dict) and "points" in obj and "values" in obj:
        pts = np.asarray(obj["points"], dtype=float)
        vals = np.asarray(obj["values"], dtype=float)
        if pts.size != vals.size:
            raise ScenarioError("table coefficient arrays differ in length")
        return lambda x: np.interp(x, pts, vals)
    if isinstance(obj, (int, float)):
        return CompiledExpression(repr(float(obj)), dimension)
    raise ScenarioError(f"cannot interpret coefficient {obj!r}")


def spec_from_dict(d):
    """Rebuild (GeneratorSpec, EquilibriumDensity | None) from a document."""
    try:
        dim = int(d.get("dimension", 1))
        domain_d = d["domain"]
        domain = DomainSpec(
            domain_d["kind"],
            tuple(tuple(ax) for ax in domain_d["bounds"]),
            domain_d.get("bc", "no-flux"),
        )
        a = _coefficient_from_json(d["a"], dim)
        b = _coefficient_from_json(d["b"], dim)
    except KeyError as exc:
        raise ScenarioError(f"generator document missing field {exc}") from None
    spec = GeneratorSpec(dim, a, b, domain, label=d.get("label", ""))
    rho = None
    if "gibbs" in d:
        g = d["gibbs"]
        beta = float(g["beta"])
        H = _coefficient_from_json(g["H"], dim)
        if isinstance(H, CompiledExpression):
            rho_fn = CompiledExpression(f"exp(-({beta!r})*({H.text}))", dim)
        else:
            rho_fn = lambda x: np.exp(-beta * H(x))  # noqa: E731
        rho = EquilibriumDensity(rho_fn=rho_fn, gibbs=(beta, H))
    return spec, rho


def load_generator(doc):
    """Generator from a scenario entry: catalog reference or inline spec."""
    if "catalog" in doc:
        name = doc["catalog"]
        alpha = doc.get("alpha", 1.0)
        return catalog_example(name, alpha)
    return spec_from_dict(doc)


# --------------------------------------------------------------------------
# Pawula documents
# --------------------------------------------------------------------------

def operator_from_dict(d):
    """TruncatedOperator plus options from an operator document."""
    try:
        coeffs_doc = d["coefficients"]
    except KeyError:
        raise ScenarioError("operator document needs a 'coefficients' map") from None
    if not coeffs_doc:
        raise ScenarioError("operator document has an empty coefficient list")
    coeffs = {}
    for key, val in coeffs_doc.items():
        order = int(key)
        coeffs[order] = _coefficient_from_json(val, 1)
    order = d.get("order", max(coeffs))
    op = TruncatedOperator(int(order), coeffs)
    options = {
        "x0": float(d.get("x0", 0.0)),
        "epsilon": float(d.get("epsilon", 0.1)),
        "amplitude": d.get("amplitude"),
    }
    if options["amplitude"] is not None:
        options["amplitude"] = float(options["amplitude"])
    return op, options


def certificate_to_dict(cert):
    d = {
        "x0": cert.x0 if cert.dimension == 1 else list(cert.x0),
        "epsilon": cert.epsilon,
        "amplitude": cert.amplitude,
        "order": cert.order,
        "value": cert.value,
        "validity_radius": cert.validity_radius,
        "dimension": cert.dimension,
        "polynomial": cert.describe(),
    }
    if cert.multi_index is not None:
        d["multi_index"] = [list(pair) for pair in cert.multi_index]
    return d


def certificate_from_dict(d):
    multi = d.get("multi_index")
    return PawulaCertificate(
        x0=d["x0"] if d.get("dimension", 1) == 1 else tuple(d["x0"]),
        epsilon=float(d["epsilon"]),
        amplitude=float(d["amplitude"]),
        order=int(d["order"]),
        value=float(d["value"]),
        validity_radius=float(d["validity_radius"]),
        dimension=int(d.get("dimension", 1)),
        multi_index=tuple(tuple(p) for p in multi) if multi else None,
    )


# --------------------------------------------------------------------------
# CSV artifacts
# --------------------------------------------------------------------------

def write_evolution_csv(path, result):
    grid = result.grid
    x = grid.x if grid is not None and getattr(grid, "ndim", 1) == 1 else None
    with open(path, "w") as fh:
        fh.write("time,node_index,x,value\n")
        for t, fld in zip(result.times, result.fields):
            vals = fld.values if hasattr(fld, "values") else np.asarray(fld)
            for i, v in enumerate(vals):
                xi = x[i] if x is not None else float(i)
                fh.write(f"{fmt(t)},{i},{fmt(xi)},{fmt(v)}\n")


def write_summary_csv(path, result):
    with open(path, "w") as fh:
        fh.write("time,mass,min_value,sup_norm\n")
        for t, m, mn, sn in zip(result.times, result.mass, result.min_value, result.sup_norm):
            fh.write(f"{fmt(t)},{fmt(m)},{fmt(mn)},{fmt(sn)}\n")


def write_hcurve_csv(path, curve):
    n = curve.times.size
    diss = curve.dissipation if curve.dissipation is not None else [float("nan")] * n
    bnd = curve.boundary if curve.boundary is not None else [float("nan")] * n
    running = -float("inf")
    with open(path, "w") as fh:
        fh.write("time,H,dissipation_rate,boundary_term,max_increase_so_far\n")
        prev = None
        for t, Hv, dv, bv in zip(curve.times, curve.H, diss, bnd):
            if prev is not None:
                running = max(running, Hv - prev)
            prev = Hv
            shown = max(running, 0.0) if running != -float("inf") else 0.0
            fh.write(f"{fmt(t)},{fmt(Hv)},{fmt(dv)},{fmt(bv)},{fmt(shown)}\n")


def write_ensemble_csv(path, ensemble):
    with open(path, "w") as fh:
        fh.write("particle_id,x,absorbed_flag\n")
        for i, (xv, flag) in enumerate(zip(ensemble.positions, ensemble.absorbed)):
            fh.write(f"{i},{fmt(xv)},{int(flag)}\n")


def read_csv_columns(path):
    """Parse one of our CSV artifacts back into float columns."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        cols = {name: [] for name in header}
        for line in fh:
            for name, tok in zip(header, line.strip().split(",")):
                cols[name].append(float(tok))
    return {k: np.asarray(v) for k, v in cols.items()}


def write_qmatrix(path_matrix, path_meta, qgen):
    """Coordinate-triplet export (row col value, row-major) with metadata."""
    coo = qgen.Q.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path_matrix, "w") as fh:
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {fmt(v)}\n")
    meta = {
        "size": qgen.size,
        "scheme": qgen.scheme,
        "lambda_max": qgen.lambda_max,
        "boundary_condition": qgen.grid.boundary_condition if qgen.grid else None,
        "grid_shape": list(qgen.grid.shape) if qgen.grid else None,
        "grid_bounds": [[float(ax[0]), float(ax[-1])] for ax in qgen.grid.axes]
        if qgen.grid else None,
    }
    with open(path_meta, "w") as fh:
        fh.write(canonical_json(meta))


def read_qmatrix(path_matrix, size):
    import scipy.sparse as sp

    rows, cols, vals = [], [], []
    with open(path_matrix) as fh:
        for line in fh:
            r, c, v = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(float(v))
    return sp.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()
