"""Values shared by all three languages: labels, stores, traces."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping

#: The reserved cost-accumulator variable injected by instrumentation.
COST_VAR = "cost"


class FuelExhausted(Exception):
    """An interpreter ran out of its step budget (possible divergence)."""


@dataclass(frozen=True, order=True, slots=True)
class Label:
    """A cost label, printed ``_l<n>``; ordered by its numeric index."""

    index: int

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError(f"label index must be a natural number: {self.index}")

    def __str__(self) -> str:
        return f"_l{self.index}"


#: A run's emitted label sequence.  The empty tuple is the identity
#: for concatenation.
Trace = tuple[Label, ...]


class Store:
    """Total map from identifiers to integers; unbound names read as 0.

    Immutable: ``set`` returns a new store.  Two stores are equal when
    they agree as total functions, so explicit zero entries are dropped
    on construction.
    """

    __slots__ = ("_bindings",)

    def __init__(self, bindings: Mapping[str, int] | None = None):
        self._bindings = {x: v for x, v in dict(bindings or {}).items() if v != 0}

    def get(self, name: str) -> int:
        return self._bindings.get(name, 0)

    def set(self, name: str, value: int) -> "Store":
        new = dict(self._bindings)
        if value == 0:
            new.pop(name, None)
        else:
            new[name] = value
        out = Store.__new__(Store)
        out._bindings = new
        return out

    def without(self, name: str) -> "Store":
        """The same store with ``name`` reset to 0 (projected away)."""
        return self.set(name, 0)

    @property
    def bindings(self) -> dict[str, int]:
        """The nonzero bindings, as a fresh dict."""
        return dict(self._bindings)

    def __iter__(self) -> Iterator[str]:
        return iter(self._bindings)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Store):
            return NotImplemented
        return self._bindings == other._bindings

    def __repr__(self) -> str:
        items = ", ".join(f"{x}={v}" for x, v in sorted(self._bindings.items()))
        return f"Store({items})"
