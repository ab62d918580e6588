"""Batched entropy combinations with gradients, for the search loops.

Arrays carry ``nb`` leading batch axes followed by the variable axes.  A term
``(coef, keep)`` contributes ``coef * H(P restricted to keep)``.
"""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import numpy as np

LN2 = np.log(2.0)
LOG_FLOOR = 1e-15


def _marg(P: np.ndarray, nb: int, keep: Iterable[int]) -> np.ndarray:
    keep = set(keep)
    drop = tuple(nb + i for i in range(P.ndim - nb) if i not in keep)
    return P.sum(axis=drop, keepdims=True) if drop else P


def plogp_sum(M: np.ndarray, nb: int) -> np.ndarray:
    """-sum M log2 M over the non-batch axes."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(M > 0, M * np.log2(np.where(M > 0, M, 1.0)), 0.0)
    return -t.reshape(t.shape[:nb] + (-1,)).sum(axis=-1)


def combos(P: np.ndarray, nb: int, named: Mapping[str, Sequence[tuple[float, tuple[int, ...]]]],
           coeffs: Mapping[str, np.ndarray] | None = None):
    """Values of several entropy combinations that share marginals.

    With ``coeffs`` (name -> batch weights) also returns the gradient w.r.t. P
    of sum_name coeffs[name] * value[name]; each distinct marginal is visited once.
    """
    keys = {tuple(sorted(keep)) for terms in named.values() for c, keep in terms if c and keep}
    margs = {k: _marg(P, nb, k) for k in keys}
    ent = {k: plogp_sum(M, nb) for k, M in margs.items()}
    vals = {}
    for name, terms in named.items():
        v = np.zeros(P.shape[:nb])
        for c, keep in terms:
            if c and keep:
                v = v + c * ent[tuple(sorted(keep))]
        vals[name] = v
    if coeffs is None:
        return vals
    weight: dict[tuple[int, ...], np.ndarray] = {}
    for name, terms in named.items():
        cn = coeffs.get(name)
        if cn is None or not np.any(cn):
            continue
        for c, keep in terms:
            if c and keep:
                k = tuple(sorted(keep))
                weight[k] = weight.get(k, 0.0) + c * np.asarray(cn, dtype=float)
    G = np.zeros_like(P)
    bshape = P.shape[:nb] + (1,) * (P.ndim - nb)
    for k, wk in weight.items():
        G -= np.reshape(wk, bshape) * (np.log2(np.maximum(margs[k], LOG_FLOOR)) + 1.0 / LN2)
    return vals, G


def mi_terms(a: Iterable[int], b: Iterable[int], given: Iterable[int] = ()) -> list[tuple[float, tuple[int, ...]]]:
    a, b, g = tuple(a), tuple(b), tuple(given)
    out = [(1.0, a + g), (1.0, b + g), (-1.0, a + b + g)]
    if g:
        out.append((-1.0, g))
    return out


def project_rows(V: np.ndarray) -> np.ndarray:
    """Euclidean projection of every last-axis row onto the probability simplex."""
    shape = V.shape
    X = V.reshape(-1, shape[-1])
    n = X.shape[1]
    U = -np.sort(-X, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    ind = np.arange(1, n + 1)
    cond = U - css / ind > 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(X.shape[0]), rho] / (rho + 1)
    out = np.maximum(X - theta[:, None], 0.0)
    return out.reshape(shape)
