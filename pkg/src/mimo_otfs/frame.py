from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SymbolFrame:
    """Stacked delay-Doppler symbols of ``streams`` antennas.

    Stream ``s`` occupies ``data[s*MN:(s+1)*MN]`` and, within a stream,
    element ``k + N*l`` carries the symbol on Doppler bin ``k`` and delay bin ``l``.
    """

    data: np.ndarray
    streams: int
    M: int
    N: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex).reshape(-1)
        if data.size != self.streams * self.M * self.N:
            raise ValueError(
                f"frame length {data.size} != streams*M*N = {self.streams * self.M * self.N}"
            )
        object.__setattr__(self, "data", data)

    @property
    def mn(self) -> int:
        return self.M * self.N

    def stream(self, s: int) -> np.ndarray:
        return self.data[s * self.mn:(s + 1) * self.mn]

    def grids(self) -> np.ndarray:
        """Symbols as an array of shape ``(streams, M, N)`` indexed ``[s, l, k]``."""
        return self.data.reshape(self.streams, self.M, self.N)

    def with_data(self, data: np.ndarray) -> "SymbolFrame":
        return SymbolFrame(data, self.streams, self.M, self.N)
