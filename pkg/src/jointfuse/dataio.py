"""CSV input and output: ``long.csv``/``surv.csv`` datasets and draw files."""

import hashlib
import os

import numpy as np
import pandas as pd

from .errors import DataError, MissingColumn
from .model import Dataset

FLOAT_FORMAT = "%.17g"


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_csv(path):
    if not os.path.exists(path):
        raise DataError(f"{path}: file not found")
    try:
        return pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: file is empty") from None
    except pd.errors.ParserError as e:
        raise DataError(f"{path}: {e}") from None


def read_dataset(data_dir, marker_names):
    """Load ``long.csv`` and ``surv.csv`` from a directory."""
    surv = _read_csv(os.path.join(data_dir, "surv.csv"))
    long = _read_csv(os.path.join(data_dir, "long.csv"))
    if len(surv) == 0:
        raise DataError("surv.csv: no subjects")
    return Dataset.from_frames(long, surv, list(marker_names))


def dataset_frames(data):
    """(long, surv) data frames of a Dataset, markers merged on (id, time)."""
    ids = np.asarray(data.ids)
    surv = pd.DataFrame({"id": ids, "time": data.time, "status": data.status})
    for c in sorted(data.covariates):
        surv[c] = data.covariates[c]
    parts = []
    for name, obs in data.markers.items():
        df = pd.DataFrame({"id": ids[obs.subject], "time": obs.time, name: obs.value})
        for c in sorted(obs.covariates):
            df[c] = obs.covariates[c]
        parts.append(df)
    if parts:
        long = parts[0]
        for df in parts[1:]:
            shared = [c for c in df.columns if c in long.columns and c not in data.markers]
            long = long.merge(df, on=shared, how="outer")
        long = long.sort_values(["id", "time"], kind="stable").reset_index(drop=True)
    else:
        long = pd.DataFrame({"id": [], "time": []})
    return long, surv


def write_dataset(data, out_dir):
    """Write ``long.csv`` and ``surv.csv``; returns the two paths."""
    os.makedirs(out_dir, exist_ok=True)
    long, surv = dataset_frames(data)
    paths = (os.path.join(out_dir, "long.csv"), os.path.join(out_dir, "surv.csv"))
    long.to_csv(paths[0], index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    surv.to_csv(paths[1], index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return paths


def write_draws(path, names, draws):
    """One chain's retained draws with a header of parameter names."""
    df = pd.DataFrame(np.asarray(draws, dtype=float), columns=list(names))
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def read_draws(path, required=None):
    """Read a draw CSV written by ``write_draws``.

    Returns
    -------
    (names, ndarray)
        Raises MissingColumn if any of ``required`` is absent and DataError
        for non-numeric content.
    """
    df = _read_csv(path)
    for c in required or ():
        if c not in df.columns:
            raise MissingColumn(c, os.path.basename(path))
    try:
        x = df.to_numpy(dtype=float)
    except (TypeError, ValueError):
        raise DataError(f"{path}: non-numeric draw values") from None
    if x.shape[0] == 0:
        raise DataError(f"{path}: no draws")
    if np.any(np.isnan(x)):
        raise DataError(f"{path}: missing draw values")
    return list(df.columns), x


def write_rows(path, header, rows):
    """Plot-data rows as CSV (floats at full precision)."""
    df = pd.DataFrame(rows, columns=list(header))
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
