"""Persistence layer: FRF CSV files, versioned JSON documents and trace tables"""

from infrastructure.frf_io import load_frf, save_frf, save_cmif
from infrastructure.documents import (
    AdditiveDocument,
    ModalDocument,
    StateSpaceDocument,
    FitReport,
    read_document,
    write_json,
    write_covariance,
    read_covariance,
    write_table,
)

__all__ = [
    # FRF files
    "load_frf",
    "save_frf",
    "save_cmif",
    # Documents
    "AdditiveDocument",
    "ModalDocument",
    "StateSpaceDocument",
    "FitReport",
    "read_document",
    "write_json",
    "write_covariance",
    "read_covariance",
    "write_table",
]
