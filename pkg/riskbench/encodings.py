"""
Module maps landscape sequences to real vectors: one-hot computed here, language-model
embeddings ingested from precomputed files
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from riskbench.errors import CoverageError, EncodingError, SchemaError
from riskbench.landscape_store import Landscape
from riskbench.validation import ArgumentChecker

logger = logging.getLogger(__name__)

ONE_HOT = "one-hot"
EMBEDDING = "embedding-file"


@dataclass(frozen=True, eq=False)
class EncodingMatrix:
    """ N x D matrix aligned to landscape indices

    name identifies the encoding inside a model grid ("one-hot" or an embedding id).
    """
    kind: str
    vectors: np.ndarray
    name: str = ONE_HOT

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=float)
        if vectors.ndim != 2:
            raise SchemaError("encoding must be a 2-D matrix, got shape %s" % (vectors.shape,))
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)

    @property
    def dim(self) -> int:
        """ Encoding dimension D

        :return: D
        """
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def rows(self, indices: Sequence[int]) -> np.ndarray:
        """ Vectors for the given landscape indices

        :param indices: Landscape indices
        :return: len(indices) x D array
        """
        return self.vectors[np.asarray(indices, dtype=np.int64)]


def encode_one_hot(landscape: Landscape, alphabet: Optional[str] = None) -> EncodingMatrix:
    """ Flattened L x |A| indicator encoding

    Row i holds, for each position in order, the indicator of the letter over `alphabet`
    (default: the landscape alphabet, canonical order ACDEFGHIKLMNPQRSTVWY).

    :param landscape: Landscape to encode
    :param alphabet: Letter ordering of the indicator blocks
    :raises: EncodingError naming the first unknown character
    :return: EncodingMatrix with D = L * |A|
    """
    alphabet = alphabet or landscape.alphabet
    lookup = np.full(256, -1, dtype=np.int64)
    for code, letter in enumerate(alphabet):
        lookup[ord(letter)] = code
    letters = lookup[landscape.as_array()]
    unknown = np.argwhere(letters < 0)
    if unknown.size:
        row, position = unknown[0]
        seq = landscape.sequences[row]
        raise EncodingError(seq[position], int(position), seq)
    n_rows, length = letters.shape
    vectors = np.zeros((n_rows, length * len(alphabet)))
    columns = np.arange(length) * len(alphabet) + letters
    vectors[np.arange(n_rows)[:, None], columns] = 1.0
    return EncodingMatrix(kind=ONE_HOT, vectors=vectors, name=ONE_HOT)


def load_embeddings(landscape: Landscape, path: str, name: Optional[str] = None) -> EncodingMatrix:
    """ Align a precomputed embedding table to the landscape order

    Accepts a CSV with header `sequence,e0,...,e{D-1}` or an .npz archive with `sequences` and
    `embeddings` arrays. Sequences absent from the landscape are ignored.

    :param landscape: Landscape the vectors must cover
    :param path: Embedding file
    :param name: Encoding id, defaults to the file stem
    :raises: SchemaError for inconsistent dimensions, CoverageError for missing sequences
    :return: EncodingMatrix aligned to landscape indices
    """
    if str(path).endswith(".npz"):
        with np.load(path, allow_pickle=False) as archive:
            keys = [str(seq) for seq in archive["sequences"]]
            values = np.asarray(archive["embeddings"], dtype=float)
        if values.ndim != 2 or len(keys) != len(values):
            raise SchemaError("%s: embeddings must be a 2-D array with one row per sequence" % path)
    else:
        try:
            frame = pd.read_csv(path)
        except pd.errors.ParserError as err:
            raise SchemaError("%s: inconsistent embedding dimension (%s)" % (path, err)) from err
        if "sequence" not in frame.columns:
            raise SchemaError("%s lacks a sequence column" % path)
        dims = [col for col in frame.columns if col != "sequence"]
        if not dims:
            raise SchemaError("%s has no embedding columns" % path)
        values = frame[dims].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
        ragged = np.flatnonzero(~np.isfinite(values).all(axis=1))
        if ragged.size:
            raise SchemaError("%s: row %d does not carry %d finite values (inconsistent dimension)"
                              % (path, ragged[0] + 2, len(dims)))
        keys = frame["sequence"].astype(str).str.strip().str.upper().tolist()

    positions = {}
    for row, key in enumerate(keys):
        positions.setdefault(key, row)
    missing = [seq for seq in landscape.sequences if seq not in positions]
    if missing:
        raise CoverageError("%s misses %d landscape sequence(s)" % (path, len(missing)), missing)
    order = np.fromiter((positions[seq] for seq in landscape.sequences), dtype=np.int64, count=len(landscape))
    stem = str(path).replace("\\", "/").rsplit("/", 1)[-1].rsplit(".", 1)[0]
    logger.info("Loaded %d-dimensional embeddings for %s from %s", values.shape[1], landscape.name, path)
    return EncodingMatrix(kind=EMBEDDING, vectors=values[order], name=name or stem)


@ArgumentChecker(stats_from="nonempty")
def standardize(matrix: EncodingMatrix, stats_from: Sequence[int]) -> EncodingMatrix:
    """ Per-dimension z-scoring with statistics from the given rows only

    Dimensions that are constant on stats_from pass through unchanged.

    :param matrix: Encoding to transform
    :param stats_from: Row indices providing mean and standard deviation (the acquired set)
    :raises: PreconditionError for empty stats_from
    :return: Standardized EncodingMatrix of the same kind and name
    """
    stats_from = np.asarray(stats_from, dtype=np.int64)
    reference = matrix.vectors[stats_from]
    mean = reference.mean(axis=0)
    scale = reference.std(axis=0)
    constant = np.ptp(reference, axis=0) == 0
    mean[constant] = 0.0
    scale[constant] = 1.0
    return EncodingMatrix(kind=matrix.kind, vectors=(matrix.vectors - mean) / scale, name=matrix.name)
