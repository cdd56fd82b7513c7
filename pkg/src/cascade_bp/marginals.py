"""Container for marginal tables shared by the oracle and the BP engine."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaError
from .kernels import DAGGER, INF, state_from_name, state_name, time_axis


@dataclass
class Marginals:
    """Per-node and global marginal tables.

    ``x0[i]`` is over the four states, ``tA[i]``/``tB[i]`` over ``t_axis``
    (infinity last) and ``w`` over ``w_labels``. ``x0_joint`` is indexed like
    ``candidates`` when a joint table is available.
    """

    x0: np.ndarray
    tA: np.ndarray
    tB: np.ndarray
    w: np.ndarray
    w_labels: tuple
    t_cap: int
    x0_joint: np.ndarray | None = None
    candidates: np.ndarray | None = None
    evidence: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def t_axis(self):
        return time_axis(self.t_cap)

    @property
    def n(self):
        return self.x0.shape[0]

    def times(self, process):
        return self.tA if process == 0 else self.tB

    def scaled(self, factor):
        """Copy with every table multiplied by ``factor`` (unnormalised)."""
        return Marginals(self.x0 * factor, self.tA * factor, self.tB * factor, self.w * factor,
                         self.w_labels, self.t_cap,
                         None if self.x0_joint is None else self.x0_joint * factor,
                         self.candidates, self.evidence, dict(self.extra))

    # json -----------------------------------------------------------------
    def to_json(self, network=None):
        labels = [str(x) for x in (network.labels if network is not None else range(self.n))]
        axis = ["inf" if t == INF else t for t in self.t_axis]
        doc = {
            "x0": {lab: self.x0[i].tolist() for i, lab in enumerate(labels)},
            "tA": {lab: self.tA[i].tolist() for i, lab in enumerate(labels)},
            "tB": {lab: self.tB[i].tolist() for i, lab in enumerate(labels)},
            "t_axis": axis,
            "w": {"support": list(self.w_labels), "p": self.w.tolist()},
        }
        if self.x0_joint is not None:
            doc["x0_joint"] = [{"x0": [state_name(int(s)) for s in c], "p": float(p)}
                               for c, p in zip(self.candidates, self.x0_joint)]
        if self.evidence is not None:
            doc["evidence"] = self.evidence
        doc.update(self.extra)
        return doc

    @classmethod
    def from_json(cls, doc, network=None):
        try:
            labels = ([str(x) for x in network.labels] if network is not None
                      else list(doc["x0"].keys()))
            x0 = np.array([doc["x0"][lab] for lab in labels], dtype=float)
            tA = np.array([doc["tA"][lab] for lab in labels], dtype=float)
            tB = np.array([doc["tB"][lab] for lab in labels], dtype=float)
            t_cap = len(doc["t_axis"]) - 2
            w = np.array(doc["w"]["p"], dtype=float)
            w_labels = tuple(DAGGER if lab == DAGGER else int(lab) for lab in doc["w"]["support"])
            joint = cands = None
            if "x0_joint" in doc:
                cands = np.array([[state_from_name(s) for s in e["x0"]] for e in doc["x0_joint"]],
                                 dtype=np.int64)
                joint = np.array([e["p"] for e in doc["x0_joint"]], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed marginals document: {exc}") from exc
        known = {"x0", "tA", "tB", "t_axis", "w", "x0_joint", "evidence"}
        extra = {k: v for k, v in doc.items() if k not in known}
        return cls(x0, tA, tB, w, w_labels, t_cap, joint, cands, doc.get("evidence"), extra)


def tv(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def compare_marginals(a, b):
    """Total-variation distance per table; ``max`` over all of them."""
    out = {}
    if a.x0.shape != b.x0.shape:
        raise SchemaError("marginals cover different node sets")
    out["x0"] = max(tv(a.x0[i], b.x0[i]) for i in range(a.n))
    for name in ("tA", "tB"):
        pa, pb = getattr(a, name), getattr(b, name)
        if pa.shape != pb.shape:
            raise SchemaError(f"{name} tables use different time axes")
        out[name] = max(tv(pa[i], pb[i]) for i in range(a.n))
    if tuple(a.w_labels) == tuple(b.w_labels):
        out["w"] = tv(a.w, b.w)
    else:
        raise SchemaError("w tables use different supports")
    if a.x0_joint is not None and b.x0_joint is not None:
        ka = {tuple(c): p for c, p in zip(a.candidates.tolist(), a.x0_joint)}
        kb = {tuple(c): p for c, p in zip(b.candidates.tolist(), b.x0_joint)}
        keys = set(ka) | set(kb)
        out["x0_joint"] = 0.5 * sum(abs(ka.get(k, 0.0) - kb.get(k, 0.0)) for k in keys)
    out["max"] = max(out.values())
    return out
