"""Default numerical tolerances and a helper to scale them together."""

from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class Tolerances:
    unitarity: float = 1e-10
    reconstruction: float = 1e-9
    integrality: float = 1e-8
    commutation: float = 1e-9
    snap: float = 1e-6
    quadrature: float = 1e-6
    rank: float = 1e-9

    def scaled(self, factor: float) -> "Tolerances":
        if factor <= 0:
            raise ValueError("tolerance scale must be positive")
        return replace(self, **{f.name: getattr(self, f.name) * factor for f in fields(self)})


DEFAULT = Tolerances()
