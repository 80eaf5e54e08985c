"""Dense tensors and the few linear-algebra primitives the layers build on.

Two numeric precisions live behind the same interface: float32 for
training and inference, float64 for gradient checking (central finite
differences are meaningless at single precision). Layout is row-major
everywhere, which keeps the serialized weights format unambiguous.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import AxisOutOfRange, ShapeMismatch

DEFAULT_DTYPE = np.float32
GRADCHECK_DTYPE = np.float64

_REDUCERS = {"sum": np.sum, "mean": np.mean, "max": np.max}


class Tensor:
    """Immutable dense n-dimensional array of reals with explicit shape.

    The backing array is made read-only at construction; every operation
    returns a new ``Tensor``, so instances are safe to share across
    threads without locking.
    """

    __slots__ = ("array",)

    def __init__(self, shape, data, dtype=DEFAULT_DTYPE):
        shape = tuple(int(d) for d in shape)
        if any(d < 1 for d in shape):
            raise ShapeMismatch(f"dimension sizes must be >= 1, got {shape}")
        arr = np.array(data, dtype=dtype).reshape(-1)
        if arr.size != math.prod(shape):
            raise ShapeMismatch(
                f"shape {shape} implies {math.prod(shape)} elements, "
                f"got {arr.size}"
            )
        arr = arr.reshape(shape)
        arr.flags.writeable = False
        self.array = arr

    @classmethod
    def wrap(cls, array) -> "Tensor":
        """Adopt ``array`` without copying. Internal fast path: the caller
        must hold the only reference to the array."""
        t = object.__new__(cls)
        arr = np.ascontiguousarray(array)
        arr.flags.writeable = False
        t.array = arr
        return t

    @classmethod
    def zeros(cls, shape, dtype=DEFAULT_DTYPE) -> "Tensor":
        return cls.wrap(np.zeros(shape, dtype=dtype))

    @property
    def shape(self) -> tuple:
        return self.array.shape

    @property
    def dtype(self):
        return self.array.dtype

    @property
    def ndim(self) -> int:
        return self.array.ndim

    @property
    def size(self) -> int:
        return self.array.size

    @property
    def data(self) -> np.ndarray:
        """Flat row-major read-only view of the contents."""
        return self.array.reshape(-1)

    def reshape(self, shape) -> "Tensor":
        shape = tuple(int(d) for d in shape)
        if math.prod(shape) != self.size:
            raise ShapeMismatch(
                f"cannot reshape {self.shape} ({self.size} elements) to {shape}"
            )
        return Tensor.wrap(self.array.reshape(shape))

    def astype(self, dtype) -> "Tensor":
        return Tensor.wrap(self.array.astype(dtype))

    def tolist(self):
        return self.array.tolist()

    def __getitem__(self, idx):
        # Delegates to numpy; scalars come back as numpy scalars, slices as
        # read-only views.
        return self.array[idx]

    def __len__(self) -> int:
        if self.ndim == 0:
            raise TypeError("len() of a rank-0 tensor")
        return self.shape[0]

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name})"


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Standard matrix product of two rank-2 tensors."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch(
            f"matmul needs rank-2 tensors, got ranks {a.ndim} and {b.ndim}"
        )
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(
            f"inner dimensions disagree: {a.shape} x {b.shape}"
        )
    return Tensor.wrap(a.array @ b.array)


def reduce(t: Tensor, axis: int, op: str) -> Tensor:
    """Reduce one axis with sum, mean, or max; the output drops that axis."""
    if op not in _REDUCERS:
        raise ValueError(f"unknown reduction {op!r}; expected one of {sorted(_REDUCERS)}")
    if not 0 <= axis < t.ndim:
        raise AxisOutOfRange(f"axis {axis} out of range for rank-{t.ndim} tensor")
    return Tensor.wrap(np.asarray(_REDUCERS[op](t.array, axis=axis)))
