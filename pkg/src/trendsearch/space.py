"""Conditional hyperparameter space: definition, sampling, and vectorization.

A space is an ordered list of parameter definitions.  A parameter may carry
a single condition ``(parent, required values)``; it is active only when
its parent is active and holds one of those values, so activation chains
resolve in file order (parents must be declared before children).

Configurations are content-addressed: the id is a hash of the canonical
assignment JSON, so equal assignments always share an id.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import SpaceError

__all__ = [
    "ParamDef",
    "Condition",
    "ConfigurationSpace",
    "Configuration",
    "load_space",
    "load_space_file",
    "default_space",
    "sample",
    "validate",
    "active_params",
    "vectorize",
    "config_from_vector",
    "pin",
    "canonical_json",
    "space_hash",
    "make_config",
]

_KINDS = ("categorical", "integer", "continuous")

# Sentinel written into vector slots of inactive parameters (mid-range).
INACTIVE_SLOT = 0.5


@dataclass(frozen=True)
class Condition:
    parent: str
    values: tuple

    def satisfied_by(self, assignments: dict) -> bool:
        return self.parent in assignments and assignments[self.parent] in self.values


@dataclass(frozen=True)
class ParamDef:
    name: str
    kind: str
    choices: tuple = ()           # categorical
    lo: float = 0.0               # integer / continuous
    hi: float = 0.0
    log_scale: bool = False       # continuous only
    condition: Condition | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise SpaceError(f"parameter {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if not self.choices:
                raise SpaceError(f"parameter {self.name!r}: empty choice list")
            if len(set(self.choices)) != len(self.choices):
                raise SpaceError(f"parameter {self.name!r}: duplicate choices")
        else:
            if not self.lo < self.hi:
                raise SpaceError(
                    f"parameter {self.name!r}: domain requires lo < hi, got [{self.lo}, {self.hi}]"
                )
            if self.log_scale and self.lo <= 0:
                raise SpaceError(f"parameter {self.name!r}: log scale needs lo > 0")

    def contains(self, value) -> bool:
        if self.kind == "categorical":
            return value in self.choices
        if self.kind == "integer":
            return isinstance(value, (int, np.integer)) and self.lo <= value <= self.hi
        return isinstance(value, (int, float, np.floating)) and self.lo <= value <= self.hi


@dataclass(frozen=True)
class ConfigurationSpace:
    params: tuple[ParamDef, ...]
    by_name: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "by_name", {p.name: p for p in self.params})

    def __len__(self) -> int:
        return len(self.params)

    def counts(self) -> tuple[int, int, int]:
        """(total, categorical-or-integer, continuous) parameter counts."""
        cont = sum(1 for p in self.params if p.kind == "continuous")
        return len(self.params), len(self.params) - cont, cont

    def group_counts(self) -> dict[str, int]:
        """Parameter counts grouped by the selector value that activates them.

        Parameters whose condition chain roots at an unconditioned selector
        parameter are grouped under the selector value required at the root
        link; the selector itself reports under its own name and anything
        unconditioned is ``shared``.
        """
        roots = set()
        for p in self.params:
            if p.condition is not None:
                q = p
                while q.condition is not None:
                    q = self.by_name[q.condition.parent]
                roots.add(q.name)
        groups: dict[str, int] = {}
        for p in self.params:
            if p.condition is None:
                label = p.name if p.name in roots else "shared"
            else:
                q = p
                while self.by_name[q.condition.parent].condition is not None:
                    q = self.by_name[q.condition.parent]
                label = str(q.condition.values[0])
            groups[label] = groups.get(label, 0) + 1
        return groups


@dataclass(frozen=True)
class Configuration:
    """An assignment of values to exactly the active parameters."""

    id: str
    assignments: dict

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.assignments == other.assignments

    def __hash__(self):
        return hash(self.id)

    def get(self, name, default=None):
        return self.assignments.get(name, default)

    def __getitem__(self, name):
        return self.assignments[name]


def _config_id(assignments: dict) -> str:
    blob = json.dumps(assignments, sort_keys=True, separators=(",", ":"))
    return hashlib.sha1(blob.encode()).hexdigest()[:12]


def make_config(assignments: dict) -> Configuration:
    return Configuration(id=_config_id(assignments), assignments=dict(assignments))


def load_space(document: dict) -> ConfigurationSpace:
    """Validate and build a space from a parsed JSON document."""
    if not isinstance(document, dict) or "params" not in document:
        raise SpaceError("space document must be an object with a 'params' list")
    seen: set[str] = set()
    defs = []
    for entry in document["params"]:
        name = entry.get("name")
        if not name:
            raise SpaceError(f"parameter entry without a name: {entry!r}")
        if name in seen:
            raise SpaceError(f"duplicate parameter name {name!r}")
        cond = None
        if "condition" in entry and entry["condition"] is not None:
            parent = entry["condition"].get("parent")
            values = entry["condition"].get("values")
            if parent == name:
                raise SpaceError(f"parameter {name!r} cannot condition on itself")
            if parent not in seen:
                raise SpaceError(
                    f"parameter {name!r} conditions on {parent!r}, which is not defined earlier"
                )
            if not values:
                raise SpaceError(f"parameter {name!r}: condition needs non-empty values")
            cond = Condition(parent=parent, values=tuple(values))
        kind = entry.get("kind")
        if kind == "categorical":
            defs.append(ParamDef(name=name, kind=kind, choices=tuple(entry["domain"]),
                                 condition=cond))
        elif kind in ("integer", "continuous"):
            lo, hi = entry["domain"]
            defs.append(ParamDef(name=name, kind=kind, lo=lo, hi=hi,
                                 log_scale=bool(entry.get("log", False)), condition=cond))
        else:
            raise SpaceError(f"parameter {name!r}: unknown kind {kind!r}")
        seen.add(name)
    return ConfigurationSpace(params=tuple(defs))


def load_space_file(path) -> ConfigurationSpace:
    with open(path) as fh:
        return load_space(json.load(fh))


def default_space() -> ConfigurationSpace:
    """The shipped search space (24 parameters; see data/default_space.json)."""
    text = resources.files("trendsearch").joinpath("data/default_space.json").read_text()
    return load_space(json.loads(text))


def default_space_path() -> Path:
    return Path(str(resources.files("trendsearch").joinpath("data/default_space.json")))


def sample(space: ConfigurationSpace, rng: np.random.Generator) -> Configuration:
    """Draw one configuration uniformly, honouring conditions in file order."""
    assignments: dict = {}
    for p in space.params:
        if p.condition is not None and not p.condition.satisfied_by(assignments):
            continue
        if p.kind == "categorical":
            value = p.choices[int(rng.integers(len(p.choices)))]
        elif p.kind == "integer":
            value = int(rng.integers(int(p.lo), int(p.hi), endpoint=True))
        elif p.log_scale:
            value = float(math.exp(rng.uniform(math.log(p.lo), math.log(p.hi))))
        else:
            value = float(rng.uniform(p.lo, p.hi))
        assignments[p.name] = value
    return make_config(assignments)


def active_params(space: ConfigurationSpace, config: Configuration) -> set[str]:
    """Names of exactly the parameters whose conditions the config satisfies."""
    for name in config.assignments:
        if name not in space.by_name:
            raise SpaceError(f"configuration assigns unknown parameter {name!r}")
    active: set[str] = set()
    for p in space.params:
        if p.condition is None:
            active.add(p.name)
        elif p.condition.parent in active and p.condition.satisfied_by(config.assignments):
            active.add(p.name)
    return active


def validate(space: ConfigurationSpace, config: Configuration) -> None:
    """Raise SpaceError unless the config assigns exactly the active set,
    every value within its domain."""
    active = active_params(space, config)
    assigned = set(config.assignments)
    missing = active - assigned
    extra = assigned - active
    if missing:
        raise SpaceError(f"missing active parameters: {sorted(missing)}")
    if extra:
        raise SpaceError(f"inactive/unknown parameters assigned: {sorted(extra)}")
    for name in active:
        p = space.by_name[name]
        if not p.contains(config.assignments[name]):
            raise SpaceError(
                f"value {config.assignments[name]!r} outside the domain of {name!r}"
            )


def _slot(p: ParamDef, value) -> float:
    if p.kind == "categorical":
        idx = p.choices.index(value)
        return idx / (len(p.choices) - 1) if len(p.choices) > 1 else 0.0
    if p.kind == "integer":
        return (value - p.lo) / (p.hi - p.lo)
    if p.log_scale:
        return (math.log(value) - math.log(p.lo)) / (math.log(p.hi) - math.log(p.lo))
    return (value - p.lo) / (p.hi - p.lo)


def _unslot(p: ParamDef, x: float):
    x = min(max(float(x), 0.0), 1.0)
    if p.kind == "categorical":
        idx = int(round(x * (len(p.choices) - 1))) if len(p.choices) > 1 else 0
        return p.choices[idx]
    if p.kind == "integer":
        return int(round(p.lo + x * (p.hi - p.lo)))
    if p.log_scale:
        value = math.exp(math.log(p.lo) + x * (math.log(p.hi) - math.log(p.lo)))
    else:
        value = p.lo + x * (p.hi - p.lo)
    # exp/log roundtrips can land an ulp outside the domain
    return float(min(max(value, p.lo), p.hi))


def vectorize(space: ConfigurationSpace, config: Configuration) -> np.ndarray:
    """Embed a configuration as one [0, 1] slot per parameter in space order;
    inactive parameters take the fixed mid-range sentinel."""
    vec = np.full(len(space.params), INACTIVE_SLOT)
    for i, p in enumerate(space.params):
        if p.name in config.assignments:
            vec[i] = _slot(p, config.assignments[p.name])
    return vec


def config_from_vector(space: ConfigurationSpace, vec) -> Configuration:
    """Decode a vector to a valid configuration.

    Each slot snaps to the nearest domain value; conditionals are re-imposed
    in declaration order, so slots of parameters deactivated by their
    parents are simply ignored.
    """
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (len(space.params),):
        raise SpaceError(f"vector must have {len(space.params)} slots, got {vec.shape}")
    assignments: dict = {}
    for i, p in enumerate(space.params):
        if p.condition is not None and not p.condition.satisfied_by(assignments):
            continue
        assignments[p.name] = _unslot(p, vec[i])
    return make_config(assignments)


def pin(space: ConfigurationSpace, name: str, value) -> ConfigurationSpace:
    """Restrict a categorical parameter to a single value (e.g. the algorithm)."""
    if name not in space.by_name:
        raise SpaceError(f"cannot pin unknown parameter {name!r}")
    p = space.by_name[name]
    if p.kind != "categorical":
        raise SpaceError(f"only categorical parameters can be pinned, {name!r} is {p.kind}")
    if value not in p.choices:
        raise SpaceError(f"{value!r} is not a choice of {name!r}")
    new_params = tuple(
        ParamDef(name=q.name, kind=q.kind, choices=(value,), condition=q.condition)
        if q.name == name
        else q
        for q in space.params
    )
    return ConfigurationSpace(params=new_params)


def _space_document(space: ConfigurationSpace) -> dict:
    params = []
    for p in space.params:
        entry: dict = {"name": p.name, "kind": p.kind}
        if p.kind == "categorical":
            entry["domain"] = list(p.choices)
        else:
            entry["domain"] = [p.lo, p.hi]
            if p.kind == "continuous":
                entry["log"] = p.log_scale
        if p.condition is not None:
            entry["condition"] = {"parent": p.condition.parent,
                                  "values": list(p.condition.values)}
        params.append(entry)
    return {"params": params, "version": 1}


def canonical_json(space: ConfigurationSpace) -> str:
    """Bit-exact serialization (sorted keys) for stable hashing."""
    return json.dumps(_space_document(space), sort_keys=True, separators=(",", ":"))


def space_hash(space: ConfigurationSpace) -> str:
    return hashlib.sha256(canonical_json(space).encode()).hexdigest()
