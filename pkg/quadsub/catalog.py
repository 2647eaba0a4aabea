"""
Worked quadratic symbols.

Every module-level CatalogEntry is picked up by ``catalog()``; adding an
entry here is enough for the command line to offer it.
Coordinates are X = (x, xi), x-block first.
"""
from dataclasses import dataclass
from typing import Dict, List, Union

import numpy as np

from .symbol_core import QuadraticSymbol


@dataclass(frozen=True, eq=False)
class CatalogEntry:
    name: str
    symbol: QuadraticSymbol
    expected_k0: Union[int, str]
    notes: str = ""

    def to_dict(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "expected_k0": self.expected_k0,
            "notes": self.notes,
            "symbol": self.symbol.to_dict(),
        }


harmonic = CatalogEntry(
    name="harmonic",
    symbol=QuadraticSymbol(n=1, Q_re=np.eye(2), Q_im=np.zeros((2, 2))),
    expected_k0=0,
    notes="x^2 + xi^2, elliptic; Re F invertible",
)

davies = CatalogEntry(
    name="davies",
    symbol=QuadraticSymbol(n=1, Q_re=np.diag([0.0, 1.0]), Q_im=np.diag([1.0, 0.0])),
    expected_k0=1,
    notes="xi^2 + i x^2; Kalman ranks 1 -> 2 at j = 1",
)

# (x, v, xi, eta): eta^2 + v^2/4 + i(v xi - x eta), unit friction and temperature.
kfp = CatalogEntry(
    name="kfp",
    symbol=QuadraticSymbol(
        n=2,
        Q_re=np.diag([0.0, 0.25, 0.0, 1.0]),
        Q_im=np.array(
            [
                [0.0, 0.0, 0.0, -0.5],
                [0.0, 0.0, 0.5, 0.0],
                [0.0, 0.5, 0.0, 0.0],
                [-0.5, 0.0, 0.0, 0.0],
            ]
        ),
    ),
    expected_k0=1,
    notes="quadratic Kramers-Fokker-Planck model; Kalman ranks 2 -> 4 at j = 1",
)

# xi_1^2 + xi_2^2 + i(x_1^2 + x_2 xi_1): the Im q flow feeds x_1 into xi_1 and x_2 into x_1.
chain = CatalogEntry(
    name="chain",
    symbol=QuadraticSymbol(
        n=2,
        Q_re=np.diag([0.0, 0.0, 1.0, 1.0]),
        Q_im=np.array(
            [
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 0.5, 0.0],
                [0.0, 0.5, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0],
            ]
        ),
    ),
    expected_k0=2,
    notes="two-step chain; Kalman ranks 2, 3, 4",
)

degenerate = CatalogEntry(
    name="degenerate",
    symbol=QuadraticSymbol(n=1, Q_re=np.zeros((2, 2)), Q_im=np.diag([0.0, 1.0])),
    expected_k0="undefined",
    notes="i xi^2; Re q = 0 so S = R^2",
)


def catalog() -> List[CatalogEntry]:
    return [obj for name, obj in globals().items() if not name.startswith("_") and isinstance(obj, CatalogEntry)]


def get_entry(name: str) -> CatalogEntry:
    entries = {entry.name: entry for entry in catalog()}
    if name not in entries:
        raise ValueError(f"Symbol '{name}' not found. Available symbols: {list(entries)}")
    return entries[name]
