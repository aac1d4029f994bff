"""
On-disk formats.

* ``.tfv`` feature files: magic ``TFV1``, ``u32`` frame count, ``u32`` feature dimension,
  then ``n_frames * dim`` little endian ``float32`` values, frame-major.
* CSV tables (manifest, attendance, split, reports) read through pandas, every malformed
  row reported with its 1-based line number, header included.
"""

import logging
import os
import re
import struct

import numpy as np
import pandas as pd

from trailercf.errors import (
    BadMagicError,
    EmptySequenceError,
    NonFiniteError,
    RecordFormatError,
    TruncatedPayloadError,
)

logger = logging.getLogger(__name__)

TFV_MAGIC = b"TFV1"
TFV_HEADER = struct.Struct("<4sII")


################file utilities######################################
save_to_file_switchDict = {
    pd.DataFrame: lambda x, file_name, **kwargs: x.to_csv(file_name, **kwargs),
    list: lambda x, file_name, **kwargs: [save_to_file(y, f, **kwargs) for y, f in zip(x, file_name)],
}


def save_to_file(x, file_name, **kwargs):
    """
    Write ``x`` as CSV. DataFrames go through ``to_csv``; anything else is wrapped in a
    DataFrame first. The index is dropped and reals are printed with 6 decimals unless
    ``kwargs`` says otherwise.
    """
    kwargs = {"index": False, "float_format": "%.6f", "lineterminator": "\n", **kwargs}
    if not isinstance(file_name, list):
        directory = os.path.dirname(str(file_name))
        if directory:
            os.makedirs(directory, exist_ok=True)
    method = save_to_file_switchDict.get(
        type(x), lambda x, file_name, **kwargs: save_to_file(pd.DataFrame(x), file_name, **kwargs)
    )
    return method(x, file_name, **kwargs)


def read_tfv(path):
    """
    Decode a ``.tfv`` file.

    Returns:
        ``(T, D)`` ``float64`` array.

    Raises:
        BadMagicError, TruncatedPayloadError, EmptySequenceError, NonFiniteError
    """
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 4 and TFV_MAGIC.startswith(blob):
        raise TruncatedPayloadError(path, f"truncated header ({len(blob)} bytes)")
    if blob[:4] != TFV_MAGIC:
        raise BadMagicError(path, f"bad magic {blob[:4]!r}")
    if len(blob) < TFV_HEADER.size:
        raise TruncatedPayloadError(path, f"truncated header ({len(blob)} bytes)")
    _, n_frames, dim = TFV_HEADER.unpack_from(blob)
    if n_frames == 0 or dim == 0:
        raise EmptySequenceError(path, f"empty sequence (n_frames={n_frames}, dim={dim})")
    expected = n_frames * dim * 4
    payload = blob[TFV_HEADER.size :]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            path, f"truncated payload: {len(payload)} of {expected} bytes for {n_frames}x{dim}"
        )
    if len(payload) > expected:
        logger.warning("%s: %d trailing bytes ignored", path, len(payload) - expected)
    frames = np.frombuffer(payload, dtype="<f4", count=n_frames * dim).reshape(n_frames, dim)
    if not np.all(np.isfinite(frames)):
        raise NonFiniteError(path, "non finite feature values")
    return frames.astype(np.float64)


def write_tfv(frames, path):
    """Write a ``(T, D)`` array as ``.tfv``; values are narrowed to ``float32``."""
    frames = np.asarray(frames)
    if frames.ndim != 2 or 0 in frames.shape:
        raise ValueError(f"expected a non empty (T, D) matrix, got shape {frames.shape}")
    directory = os.path.dirname(str(path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(TFV_HEADER.pack(TFV_MAGIC, frames.shape[0], frames.shape[1]))
        f.write(np.ascontiguousarray(frames, dtype="<f4").tobytes())


_line_in_message = re.compile(r"line (\d+)")


def _parse_real(text):
    try:
        return float(text)
    except ValueError:
        return np.nan


def read_table(path, columns, integer_columns=(), real_columns=(), allow_extra=False):
    """
    Read a CSV whose header must start with ``columns``.

    Every value is read as text, then the listed columns are converted. Empty or
    unparsable fields raise :class:`RecordFormatError` naming the line.

    Returns:
        DataFrame with string columns, ``int64`` for ``integer_columns`` and ``float64``
        for ``real_columns``.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        raise RecordFormatError(path, 1, "empty file, expected header " + ",".join(columns))
    except pd.errors.ParserError as error:
        match = _line_in_message.search(str(error))
        raise RecordFormatError(path, int(match.group(1)) if match else 0, f"malformed row ({error})")
    header = [str(c).strip() for c in frame.columns]
    if header[: len(columns)] != list(columns) or (not allow_extra and len(header) != len(columns)):
        raise RecordFormatError(
            path, 1, f"expected header {','.join(columns)}, got {','.join(header)}"
        )
    frame.columns = header
    # data row n sits on line n + 2 when no blank line precedes it
    lines = frame.index.to_numpy() + 2
    for column in frame.columns:
        values = frame[column].fillna("").str.strip()
        empty = values == ""
        if empty.any():
            row = int(np.argmax(empty.to_numpy()))
            raise RecordFormatError(path, lines[row], f"missing {column}")
        frame[column] = values
    for column in integer_columns:
        bad = ~frame[column].str.fullmatch(r"[+-]?\d+").to_numpy(dtype=bool)
        if bad.any():
            row = int(np.argmax(bad))
            raise RecordFormatError(path, lines[row], f"{column}={frame[column].iloc[row]!r} is not an integer")
        frame[column] = frame[column].astype(np.int64)
    for column in real_columns:
        # float() is correctly rounded, so %.17g text reads back bit for bit
        parsed = frame[column].map(_parse_real).to_numpy(dtype=np.float64)
        bad = ~np.isfinite(parsed)
        if bad.any():
            row = int(np.argmax(bad))
            raise RecordFormatError(path, lines[row], f"{column}={frame[column].iloc[row]!r} is not a finite real")
        frame[column] = parsed
    return frame
