"""Block-structured points for multi-agent optimization.

Decision variables are partitioned into per-agent blocks x = (x_1, ..., x_I),
x_i in R^{n_i}.  Solvers work on the stacked vector in R^n, n = sum(n_i);
:class:`BlockPoint` is the structured view handed across the public API and
:class:`Layout` maps between the two representations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = ["BlockPoint", "Layout"]


class BlockPoint:
    """Immutable list of per-agent real vectors.

    Parameters
    ----------
    blocks : iterable of array_like
        One 1-d real vector per agent.  Inputs are copied; the stored arrays
        are marked read-only so a point can be shared across threads.
    """

    __slots__ = ("blocks",)

    def __init__(self, blocks: Iterable[np.ndarray]):
        arrs = []
        for b in blocks:
            a = np.array(b, dtype=float).ravel()
            a.flags.writeable = False
            arrs.append(a)
        if not arrs:
            raise ValueError("a BlockPoint needs at least one block")
        object.__setattr__(self, "blocks", tuple(arrs))

    def __setattr__(self, name, value):  # pragma: no cover - defensive
        raise AttributeError("BlockPoint is immutable")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(b.size for b in self.blocks)

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    def block(self, i: int) -> np.ndarray:
        return self.blocks[i]

    def stack(self) -> np.ndarray:
        """Concatenate the blocks into one vector (always a fresh array)."""
        return np.concatenate(self.blocks)

    @classmethod
    def unstack(cls, vec: np.ndarray, dims: Sequence[int]) -> "BlockPoint":
        """Split a stacked vector back into blocks of the given sizes."""
        vec = np.asarray(vec, dtype=float).ravel()
        if vec.size != int(np.sum(dims)):
            raise ValueError(
                f"vector of size {vec.size} cannot be split into blocks {tuple(dims)}"
            )
        out, start = [], 0
        for d in dims:
            out.append(vec[start : start + d])
            start += d
        return cls(out)

    def norm(self) -> float:
        return float(np.linalg.norm(self.stack()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BlockPoint):
            return NotImplemented
        return self.dims == other.dims and all(
            np.array_equal(a, b) for a, b in zip(self.blocks, other.blocks)
        )

    def __repr__(self) -> str:
        return f"BlockPoint(dims={self.dims})"


@dataclass(frozen=True)
class Layout:
    """Slicing helper between stacked vectors and per-agent blocks."""

    dims: tuple[int, ...]
    offsets: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        if not self.dims or any(d <= 0 for d in self.dims):
            raise ValueError(f"block dims must be positive, got {self.dims}")
        offs = np.concatenate([[0], np.cumsum(self.dims)])
        object.__setattr__(self, "offsets", tuple(int(o) for o in offs))

    @property
    def num_blocks(self) -> int:
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        return self.offsets[-1]

    def sl(self, i: int) -> slice:
        return slice(self.offsets[i], self.offsets[i + 1])

    def block(self, vec: np.ndarray, i: int) -> np.ndarray:
        return vec[self.sl(i)]

    def split(self, vec: np.ndarray) -> list[np.ndarray]:
        return [vec[self.sl(i)] for i in range(self.num_blocks)]

    def compose(self, base: np.ndarray, i: int, block: np.ndarray) -> np.ndarray:
        """Copy of ``base`` with block ``i`` replaced (the (x_i, x_{-i}) point)."""
        out = np.array(base, dtype=float)
        out[self.sl(i)] = block
        return out

    def to_point(self, vec: np.ndarray) -> BlockPoint:
        return BlockPoint.unstack(vec, self.dims)

    def to_vector(self, point: BlockPoint | np.ndarray) -> np.ndarray:
        if isinstance(point, BlockPoint):
            if point.dims != self.dims:
                raise ValueError(f"point dims {point.dims} do not match layout {self.dims}")
            return point.stack()
        vec = np.asarray(point, dtype=float).ravel()
        if vec.size != self.total_dim:
            raise ValueError(f"vector size {vec.size} does not match layout dim {self.total_dim}")
        return np.array(vec)
