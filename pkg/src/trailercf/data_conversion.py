import numpy as np
import pandas as pd

from trailercf.errors import ShapeError

get_data_switchDict = {
    pd.DataFrame: lambda vals: vals.values,
    pd.Series: lambda vals: np.asarray(vals.array),
    tuple: lambda xs: np.asarray(xs),
    list: lambda xs: np.asarray(xs),
}


def get_data(x, dtype=np.float64):
    """Return ``x`` as a numpy array of ``dtype``, unwrapping pandas containers."""
    method = get_data_switchDict.get(type(x), lambda vals: vals)
    return np.asarray(method(x), dtype=dtype)


def get_matrix(x, dtype=np.float64, name="x"):
    """
    Coerce ``x`` into an array whose last two axes are (rows, cols).

    Scalars become ``1 x 1``, vectors become a single column. Leading axes, when
    present, are kept as batch axes. Empty axes and non finite entries are rejected.

    Example:

        >>> get_matrix([1.0, 2.0, 3.0]).shape
        (3, 1)
    """
    x = get_data(x, dtype=dtype)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(len(x), 1)
    if 0 in x.shape:
        raise ShapeError(f"{name} has an empty axis, shape={x.shape}")
    if not np.all(np.isfinite(x)):
        raise ShapeError(f"{name} holds non finite values")
    return x


def get_vector(x, dtype=np.float64, name="x"):
    x = get_data(x, dtype=dtype)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.ndim != 1:
        raise ShapeError(f"{name} must be a vector, got shape {x.shape}")
    return x


def check_shape(x, expected, name="x"):
    """Raise :class:`ShapeError` unless ``x.shape == expected``."""
    expected = tuple(int(e) for e in expected)
    if tuple(np.shape(x)) != expected:
        raise ShapeError(f"{name}: expected shape {expected}, got {tuple(np.shape(x))}")
    return x
