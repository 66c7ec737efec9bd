"""CSV ingestion and export of datasets (response columns y*, covariate columns x*)."""

import logging
import re
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from constants.constants import COVARIATE_PREFIX, RESPONSE_PREFIX
from exceptions import InsufficientDataError, ParseError
from services.models import Dataset
from services.validators import DataValidator

logger = logging.getLogger(__name__)

# data row i (0-based) sits on file line i + 2, after the header
HEADER_LINES = 1

_COLUMN_PATTERN = re.compile(r'^([a-zA-Z]+)(\d*)$')
_PANDAS_LINE = re.compile(r'line (\d+)')


def _split_columns(columns: List[str]) -> tuple:
    """Response and covariate column names, each in header order."""
    responses, covariates = [], []
    for name in columns:
        match = _COLUMN_PATTERN.match(str(name).strip())
        if match is None or match.group(1) not in (RESPONSE_PREFIX, COVARIATE_PREFIX):
            raise ParseError(
                f"missing or malformed header: column {name!r} must start with "
                f"'{RESPONSE_PREFIX}' or '{COVARIATE_PREFIX}'",
                line=1,
            )
        (responses if match.group(1) == RESPONSE_PREFIX else covariates).append(name)
    if not responses:
        raise ParseError(f"header has no response column ('{RESPONSE_PREFIX}...')", line=1)
    return responses, covariates


def _numeric_block(frame: pd.DataFrame, columns: List[str]) -> np.ndarray:
    """Convert string cells to floats, reporting the first bad cell by file line."""
    if not columns:
        return np.zeros((frame.shape[0], 0))
    block = np.empty((frame.shape[0], len(columns)))
    for j, name in enumerate(columns):
        raw = frame[name].str.strip()
        values = pd.to_numeric(raw, errors='coerce')
        bad = values.isna() | ~np.isfinite(values.to_numpy(dtype=float, na_value=np.nan))
        if bad.any():
            row = bad.idxmax()
            raise ParseError(f"non-numeric value {raw.loc[row]!r} in column {name!r}",
                             line=int(row) + HEADER_LINES + 1)
        block[:, j] = values.to_numpy(dtype=float)
    return block


def load_dataset(path: Union[str, Path], model=None) -> Dataset:
    """
    Read a dataset CSV.

    Args:
        path: CSV file with a header; response columns prefixed 'y', covariate
            columns prefixed 'x'
        model: Optional model to validate responses and covariates against

    Returns:
        Dataset with row order preserved

    Raises:
        ParseError: empty file, missing header, ragged rows or non-numeric cells
        InsufficientDataError: header but no data rows
    """
    path = Path(path)
    logger.info(f"📂 Loading dataset from {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except FileNotFoundError as e:
        raise ParseError(f"dataset file {path} does not exist") from e
    except pd.errors.EmptyDataError as e:
        raise ParseError("file is empty", line=1) from e
    except pd.errors.ParserError as e:
        found = _PANDAS_LINE.search(str(e))
        raise ParseError(f"ragged row: {e}", line=int(found.group(1)) if found else None) from e

    frame.columns = [str(c).strip() for c in frame.columns]
    response_cols, covariate_cols = _split_columns(list(frame.columns))

    # skip_blank_lines=False keeps the index aligned with file lines; blank lines
    # come back as rows whose cells are all missing
    cells = frame.replace('', np.nan)
    blank = cells.isna().all(axis=1)
    ragged = cells.isna().any(axis=1) & ~blank
    if ragged.any():
        row = ragged.idxmax()
        raise ParseError(f"ragged row: expected {frame.shape[1]} fields", line=int(row) + HEADER_LINES + 1)
    frame = frame.loc[~blank]
    if frame.empty:
        raise InsufficientDataError(f"{path} has a header but no data rows")

    responses = _numeric_block(frame, response_cols)
    as_int = np.rint(responses)
    if not np.array_equal(as_int, responses):
        row = int(np.argmax(np.any(as_int != responses, axis=1)))
        raise ParseError("responses must be integers", line=int(frame.index[row]) + HEADER_LINES + 1)

    data = Dataset(responses=as_int.astype(np.int64), covariates=_numeric_block(frame, covariate_cols))
    if model is not None:
        DataValidator.validate_dataset(data, model)
    logger.info(f"✅ Loaded {data.n} observations "
                f"({len(response_cols)} response, {len(covariate_cols)} covariate columns)")
    return data


def save_dataset(data: Dataset, path: Union[str, Path]) -> Path:
    """Write the CSV schema load_dataset reads."""
    path = Path(path)
    d = data.responses.shape[1]
    columns = {}
    for j in range(d):
        columns[RESPONSE_PREFIX if d == 1 else f"{RESPONSE_PREFIX}{j + 1}"] = data.responses[:, j]
    for j in range(data.covariates.shape[1]):
        columns[f"{COVARIATE_PREFIX}{j + 1}"] = data.covariates[:, j]
    pd.DataFrame(columns).to_csv(path, index=False)
    logger.debug(f"Wrote {data.n} observations to {path}")
    return path
