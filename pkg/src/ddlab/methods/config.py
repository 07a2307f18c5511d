"""Method configuration and solver report."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

METHODS = ("bdd", "feti", "pfeti", "afeti", "hybrid", "fetidp", "bddc", "mixed2")
PRECONDITIONERS = ("none", "neumann", "dirichlet", "lumped", "superlumped")
SCALINGS = ("multiplicity", "stiffness")
PROJECTORS = ("identity", "superlumped", "lumped", "dirichlet", "inverse_multiplicity")
INITIALIZATIONS = ("zero", "classical_split", "condensed_split")
INIT_NORMS = ("diag_kbb", "schur")
COARSE = ("auto_rbm", "none")
CONSTRAINTS = ("none", "corners", "custom")
FETIDP_CONSTRAINTS = ("corners", "corners_plus_edge_averages")
SOLVERS = ("auto", "cg", "gmres")
MIXED_T = ("neighbor_schur", "neighbor_strip", "neighbor_kbb", "zero")
FLAVORS = ("redundant", "nonredundant", "orthonormal")

DUAL_METHODS = ("feti", "afeti", "pfeti", "hybrid")
_DEFAULT_PRECOND = {
    "bdd": "neumann", "pfeti": "neumann", "bddc": "neumann",
    "feti": "dirichlet", "afeti": "dirichlet", "fetidp": "dirichlet",
    "hybrid": "dirichlet", "mixed2": "none",
}


@dataclass
class MethodConfig:
    method: str = "bdd"
    preconditioner: Optional[str] = None  # None: the method's natural choice
    scaling: str = "multiplicity"
    projector_Q: str = "identity"
    initialization: str = "zero"
    init_norm: str = "diag_kbb"
    coarse: str = "auto_rbm"
    constraints: str = "none"
    hybrid_split: Optional[str] = None  # e.g. "D-P": x dual, y primal
    fetidp_constraints: str = "corners"
    mixed_T: str = "neighbor_schur"
    strip_layers: int = 1
    flavor: str = "redundant"
    solver: str = "auto"
    tol: float = 1e-6
    maxiter: int = 1000
    reorth: str = "full"
    rbm_mode: str = "geometric"
    label: Optional[str] = None
    custom_C: Optional[list] = field(default=None, repr=False)

    def __post_init__(self):
        self.validate()

    def validate(self):
        checks = [
            ("method", METHODS), ("scaling", SCALINGS), ("projector_Q", PROJECTORS),
            ("initialization", INITIALIZATIONS), ("init_norm", INIT_NORMS), ("coarse", COARSE),
            ("constraints", CONSTRAINTS), ("fetidp_constraints", FETIDP_CONSTRAINTS),
            ("solver", SOLVERS), ("mixed_T", MIXED_T), ("flavor", FLAVORS),
        ]
        for name, allowed in checks:
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name}={getattr(self, name)!r} not in {allowed}")
        if self.preconditioner is not None and self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"preconditioner={self.preconditioner!r} not in {PRECONDITIONERS}")
        if self.projector_Q != "identity" and self.method not in DUAL_METHODS:
            raise ValueError("projector_Q only applies to dual-type methods")
        if self.initialization != "zero" and self.method not in ("feti", "afeti"):
            raise ValueError("split initializations only apply to FETI-type methods")
        if self.hybrid_split is not None and self.method != "hybrid":
            raise ValueError("hybrid_split only applies to the hybrid method")
        if self.method in ("bdd", "pfeti", "bddc") and self.preconditioner in ("dirichlet", "lumped", "superlumped"):
            raise ValueError(f"{self.method} is primal: use the neumann preconditioner or none")
        if self.method in ("feti", "afeti", "fetidp") and self.preconditioner == "neumann":
            raise ValueError(f"{self.method} is dual: the neumann preconditioner does not apply")
        if self.constraints == "custom" and self.custom_C is None:
            raise ValueError("constraints='custom' needs custom_C")
        if not self.tol > 0 or self.maxiter < 1 or self.strip_layers < 1:
            raise ValueError("tol > 0, maxiter >= 1 and strip_layers >= 1 are required")

    @property
    def precond(self) -> str:
        return self.preconditioner or _DEFAULT_PRECOND[self.method]

    @property
    def display(self) -> str:
        if self.label:
            return self.label
        parts = [self.method]
        if self.method in ("feti", "afeti", "hybrid", "pfeti"):
            parts.append(f"{self.precond}-P({self.projector_Q})")
        if self.method == "bdd" and self.coarse == "none":
            parts.append("nocoarse")
        if self.hybrid_split:
            parts.append(self.hybrid_split)
        if self.initialization != "zero":
            parts.append(self.initialization)
        if self.scaling != "multiplicity":
            parts.append(self.scaling)
        return ":".join(parts)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("custom_C")
        return {k: v for k, v in d.items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "MethodConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown method fields: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **kw) -> "MethodConfig":
        return dataclasses.replace(self, **kw)


@dataclass
class SolverReport:
    method: str
    label: str
    iterations: int
    converged: bool
    history: list
    true_residual: float
    coarse: tuple = (0, 0)
    seconds: float = 0.0
    true_history: Optional[list] = None
    error_vs_oracle: Optional[float] = None
    extras: dict = field(default_factory=dict)

    @property
    def sc_label(self) -> str:
        return f"SC:{self.coarse[0]}+{self.coarse[1]}"

    def to_dict(self) -> dict:
        d = {
            "method": self.method, "label": self.label, "iterations": int(self.iterations),
            "converged": bool(self.converged), "history": [float(h) for h in self.history],
            "true_residual": float(self.true_residual),
            "coarse": [int(c) for c in self.coarse], "seconds": float(self.seconds),
        }
        if self.true_history is not None:
            d["true_history"] = [float(h) for h in self.true_history]
        if self.error_vs_oracle is not None:
            d["error_vs_oracle"] = float(self.error_vs_oracle)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolverReport":
        d = dict(d)
        d["coarse"] = tuple(d.get("coarse", (0, 0)))
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def history_rows(self):
        """(iter, res, relres, trueres) rows; relres is relative to the first entry."""
        h0 = self.history[0] if self.history and self.history[0] != 0 else 1.0
        for k, h in enumerate(self.history):
            tr = self.true_history[k] if self.true_history is not None and k < len(self.true_history) else np.nan
            yield k, h, h / h0, tr
