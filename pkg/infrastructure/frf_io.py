"""FRF CSV ingestion and export.

One row per matrix entry per frequency with header freq_hz,out_idx,in_idx,re,im[,var]
(1-based indices). A var column on every row gives a diagonal Σ_G on the column-major
vec ordering; a full Σ_G comes from the companion file <name>.cov.csv with rows
freq_hz,row,col,re,im.
"""
import logging
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from core.exceptions import ArtifactIOError, ConfigurationError, DataFormatError
from services.frf_core import CmifCurves, FrequencyGrid, FrfDataset

logger = logging.getLogger(__name__)

FRF_COLUMNS = ["freq_hz", "out_idx", "in_idx", "re", "im"]
COVARIANCE_COLUMNS = ["freq_hz", "row", "col", "re", "im"]

PathLike = Union[str, Path]


def covariance_path(path: PathLike) -> Path:
    """Companion full-covariance file of an FRF CSV"""
    path = Path(path)
    return path.with_name(f"{path.stem}.cov.csv")


def frf_columns(path: PathLike) -> List[str]:
    """Header of an FRF CSV; empty when the file is missing or unreadable"""
    try:
        return [column.strip() for column in pd.read_csv(path, nrows=0).columns]
    except (OSError, ValueError):
        return []


def _to_float(text: str) -> float:
    """Correctly rounded parse; NaN marks an unparsable cell"""
    try:
        return float(text)
    except ValueError:
        return np.nan


def _read_table(path: Path, required: list, optional: Optional[list] = None) -> pd.DataFrame:
    if not path.is_file():
        raise ArtifactIOError(str(path), "file not found")
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True, keep_default_na=False)
    except (OSError, UnicodeDecodeError) as e:
        raise ArtifactIOError(str(path), f"cannot read file: {e}")
    except pd.errors.ParserError as e:
        raise DataFormatError(str(path), f"malformed CSV: {e}")
    except pd.errors.EmptyDataError:
        raise DataFormatError(str(path), "file is empty")

    columns = [column.strip() for column in frame.columns]
    allowed = required + (optional or [])
    if columns[:len(required)] != required or any(column not in allowed for column in columns):
        raise DataFormatError(str(path), f"header must be {','.join(required)}[,{','.join(optional or [])}], got {','.join(columns)}")
    frame.columns = columns

    numeric = frame.apply(lambda column: column.str.strip().map(_to_float)).astype(float)
    invalid = numeric.isna() & (frame != "")
    missing = (frame[required] == "").any(axis=1)
    bad_rows = np.flatnonzero(invalid.any(axis=1).to_numpy() | missing.to_numpy())
    if bad_rows.size:
        # +2: header line and 1-based numbering
        raise DataFormatError(str(path), "non-numeric or missing value", row=int(bad_rows[0]) + 2)
    return numeric


def _index_column(frame: pd.DataFrame, column: str, path: Path) -> np.ndarray:
    values = frame[column].to_numpy()
    integral = np.isfinite(values) & (values == np.round(values)) & (values >= 1)
    if not np.all(integral):
        raise DataFormatError(str(path), f"{column} must be a positive integer", row=int(np.argmin(integral)) + 2)
    return values.astype(int)


def _load_full_covariance(path: Path, frequencies_hz: np.ndarray, size: int) -> np.ndarray:
    frame = _read_table(path, COVARIANCE_COLUMNS)
    rows = _index_column(frame, "row", path)
    cols = _index_column(frame, "col", path)
    if rows.max(initial=0) > size or cols.max(initial=0) > size:
        raise DataFormatError(str(path), f"covariance index exceeds the vec size {size}")

    keys = pd.DataFrame({"f": frame["freq_hz"], "r": rows, "c": cols})
    duplicated = keys.duplicated().to_numpy()
    if np.any(duplicated):
        raise DataFormatError(str(path), "duplicate (freq, row, col) entry", row=int(np.argmax(duplicated)) + 2)

    position = {f: k for k, f in enumerate(frequencies_hz)}
    covariance = np.zeros((frequencies_hz.size, size, size), dtype=complex)
    freqs = frame["freq_hz"].to_numpy()
    values = frame["re"].to_numpy() + 1j * frame["im"].to_numpy()
    for f, r, c, value in zip(freqs, rows, cols, values):
        k = position.get(f)
        if k is not None:
            covariance[k, r - 1, c - 1] = value
    return covariance


def load_frf(path: PathLike, min_freq_hz: float = 0.0) -> FrfDataset:
    """Parse an FRF CSV, drop frequencies below min_freq_hz and sort by frequency"""
    path = Path(path)
    if min_freq_hz < 0.0:
        raise ConfigurationError(f"min_freq_hz must be non-negative, got {min_freq_hz}")
    frame = _read_table(path, FRF_COLUMNS, ["var"])

    out_idx = _index_column(frame, "out_idx", path)
    in_idx = _index_column(frame, "in_idx", path)
    freqs = frame["freq_hz"].to_numpy()
    keep = freqs >= min_freq_hz
    invalid = ~np.isfinite(freqs) | (keep & (freqs <= 0.0))
    if np.any(invalid):
        raise DataFormatError(str(path), "frequencies must be finite and positive", row=int(np.argmax(invalid)) + 2)

    keys = pd.DataFrame({"f": freqs, "o": out_idx, "i": in_idx})
    duplicated = keys.duplicated().to_numpy()
    if np.any(duplicated):
        raise DataFormatError(str(path), "duplicate (freq, out, in) entry", row=int(np.argmax(duplicated)) + 2)

    n_y, n_u = int(out_idx.max()), int(in_idx.max())
    if not np.any(keep):
        raise ConfigurationError(
            "no frequencies remain after truncation",
            details={"path": str(path), "min_freq_hz": min_freq_hz}
        )

    frequencies_hz = np.unique(freqs[keep])
    counts = keys[keep].groupby("f").size().reindex(frequencies_hz).to_numpy()
    if np.any(counts != n_y * n_u):
        bad = frequencies_hz[np.argmax(counts != n_y * n_u)]
        raise DataFormatError(str(path), f"missing matrix entry at {bad} Hz (expected {n_y}×{n_u} entries)")

    k = np.searchsorted(frequencies_hz, freqs[keep])
    frf = np.zeros((frequencies_hz.size, n_y, n_u), dtype=complex)
    frf[k, out_idx[keep] - 1, in_idx[keep] - 1] = frame["re"].to_numpy()[keep] + 1j * frame["im"].to_numpy()[keep]

    covariance = None
    if "var" in frame:
        variances = frame["var"].to_numpy()
        if np.any(np.isnan(variances)):
            raise DataFormatError(str(path), "var column must be present on every row", row=int(np.argmax(np.isnan(variances))) + 2)
        if np.any(variances < 0.0):
            raise DataFormatError(str(path), "negative variance", row=int(np.argmax(variances < 0.0)) + 2)
        covariance = np.zeros((frequencies_hz.size, n_y * n_u, n_y * n_u), dtype=complex)
        vec_index = (in_idx[keep] - 1) * n_y + (out_idx[keep] - 1)
        covariance[k, vec_index, vec_index] = variances[keep]
    elif covariance_path(path).is_file():
        covariance = _load_full_covariance(covariance_path(path), frequencies_hz, n_y * n_u)
        logger.info(f"Loaded full FRF covariance from {covariance_path(path)}")

    dataset = FrfDataset(FrequencyGrid.from_hz(frequencies_hz), frf, covariance)
    logger.info(
        f"Loaded FRF {path}: {dataset.n_points} frequencies ({int(np.sum(~keep)) // max(n_y * n_u, 1)} dropped "
        f"below {min_freq_hz} Hz), {n_y}×{n_u}"
    )
    return dataset


def frf_frame(dataset: FrfDataset, frequencies_hz: Optional[np.ndarray] = None) -> pd.DataFrame:
    """Long-format table of the FRF in vec ordering per frequency"""
    n_points, n_y, n_u = dataset.frf.shape
    frequencies_hz = dataset.grid.frequencies_hz if frequencies_hz is None else np.asarray(frequencies_hz)
    outs = np.tile(np.arange(1, n_y + 1), n_u)
    ins = np.repeat(np.arange(1, n_u + 1), n_y)
    values = dataset.vec_frf()
    frame = pd.DataFrame({
        "freq_hz": np.repeat(frequencies_hz, n_y * n_u),
        "out_idx": np.tile(outs, n_points),
        "in_idx": np.tile(ins, n_points),
        "re": values.real.reshape(-1),
        "im": values.imag.reshape(-1),
    })
    if dataset.has_covariance() and dataset.covariance_is_diagonal():
        frame["var"] = np.real(np.diagonal(dataset.frf_covariance, axis1=1, axis2=2)).reshape(-1)
    return frame


def save_frf(dataset: FrfDataset, path: PathLike, frequencies_hz: Optional[np.ndarray] = None) -> Path:
    """Write the FRF CSV (and a companion covariance file for non-diagonal Σ_G)"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frf_frame(dataset, frequencies_hz).to_csv(path, index=False, lineterminator="\n")
        if dataset.has_covariance() and not dataset.covariance_is_diagonal():
            k, rows, cols = np.nonzero(dataset.frf_covariance)
            values = dataset.frf_covariance[k, rows, cols]
            hz = dataset.grid.frequencies_hz if frequencies_hz is None else np.asarray(frequencies_hz)
            pd.DataFrame({
                "freq_hz": hz[k], "row": rows + 1, "col": cols + 1, "re": values.real, "im": values.imag
            }).to_csv(covariance_path(path), index=False, lineterminator="\n")
    except OSError as e:
        raise ArtifactIOError(str(path), f"cannot write FRF: {e}")
    logger.info(f"Wrote FRF {path} ({dataset.n_points} frequencies)")
    return path


def save_cmif(curves: CmifCurves, path: PathLike) -> Path:
    """CMIF table freq_hz,sv1,…,svr"""
    path = Path(path)
    frame = pd.DataFrame(curves.singular_values, columns=[f"sv{i + 1}" for i in range(curves.n_curves)])
    frame.insert(0, "freq_hz", curves.grid.frequencies_hz)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise ArtifactIOError(str(path), f"cannot write CMIF table: {e}")
    return path
