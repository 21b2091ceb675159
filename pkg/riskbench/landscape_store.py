"""
Module holds the finite ground-truth landscape: loading DMS tables, min-max normalization,
the hyperparameter/campaign split, the Hamming-1 neighbor structure, and synthetic generators
"""
import hashlib
import itertools
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from riskbench.errors import (DegenerateLandscapeError, LandscapeParseError, PoolSizeError, SchemaError)

logger = logging.getLogger(__name__)

# Canonical one-letter amino-acid ordering used for encodings and synthetic alphabets
CANONICAL_ALPHABET = "ACDEFGHIKLMNPQRSTVWY"
# Largest enumerable synthetic landscape
MAX_SYNTHETIC_SIZE = 200_000
# Split fractions, in percent of the pool
HYPERPARAM_TRAIN_PCT = 15
HYPERPARAM_TEST_PCT = 5
MIN_SPLIT_POOL = 20


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


def normalize_fitness(raw: np.ndarray) -> np.ndarray:
    """ Min-max scale fitness to [0, 1]

    :param raw: Raw fitness values
    :raises: DegenerateLandscapeError if all values are equal
    :return: Normalized copy
    """
    raw = np.asarray(raw, dtype=float)
    low, high = raw.min(), raw.max()
    if not high > low:
        raise DegenerateLandscapeError("fitness is constant (%r); cannot normalize" % low)
    return (raw - low) / (high - low)


@dataclass(frozen=True, eq=False)
class Landscape:
    """ Finite pool of fixed-length variants with ground-truth fitness

    Immutable after construction; safe to share across campaign workers.
    """
    name: str
    sequences: Tuple[str, ...]
    raw_fitness: np.ndarray
    norm_fitness: np.ndarray = field(default=None)
    wild_type: Optional[str] = None
    alphabet: str = CANONICAL_ALPHABET

    def __post_init__(self):
        sequences = tuple(self.sequences)
        raw = np.asarray(self.raw_fitness, dtype=float)
        if len(sequences) != len(raw):
            raise SchemaError("%d sequences but %d fitness values" % (len(sequences), len(raw)))
        if len(sequences) < 2:
            raise SchemaError("landscape needs at least 2 variants")
        lengths = {len(seq) for seq in sequences}
        if len(lengths) != 1 or 0 in lengths:
            raise SchemaError("sequences have unequal lengths: %s" % sorted(lengths))
        if len(set(sequences)) != len(sequences):
            raise SchemaError("sequences are not unique")
        letters = set(self.alphabet)
        for seq in sequences:
            if not letters.issuperset(seq):
                raise SchemaError("sequence %s has characters outside alphabet %s" % (seq, self.alphabet))
        if not np.all(np.isfinite(raw)):
            raise SchemaError("fitness values must be finite")
        object.__setattr__(self, "sequences", sequences)
        object.__setattr__(self, "raw_fitness", _frozen(raw))
        object.__setattr__(self, "norm_fitness", _frozen(normalize_fitness(raw)))
        object.__setattr__(self, "_index", {seq: i for i, seq in enumerate(sequences)})

    @property
    def length(self) -> int:
        """ Sequence length L

        :return: L
        """
        return len(self.sequences[0])

    @property
    def alphabet_size(self) -> int:
        """ Size of the alphabet A

        :return: |A|
        """
        return len(self.alphabet)

    def __len__(self) -> int:
        return len(self.sequences)

    def index_of(self, sequence: str) -> Optional[int]:
        """ Position of a sequence in the pool

        :param sequence: Variant
        :return: Index or None if absent
        """
        return self._index.get(sequence)

    def as_array(self) -> np.ndarray:
        """ Sequences as an N x L array of single-byte codes

        :return: uint8 array
        """
        joined = "".join(self.sequences).encode("ascii")
        return np.frombuffer(joined, dtype=np.uint8).reshape(len(self), self.length)

    def digest(self) -> str:
        """ Content hash over sequences and raw fitness

        :return: Hex SHA-256
        """
        hasher = hashlib.sha256()
        hasher.update("\n".join(self.sequences).encode("ascii"))
        hasher.update(self.raw_fitness.tobytes())
        return hasher.hexdigest()


@dataclass(frozen=True, eq=False)
class SplitPlan:
    """ Partition of landscape indices into hyperparameter train/test and campaign pool

    """
    hyperparam_train: np.ndarray
    hyperparam_test: np.ndarray
    campaign_pool: np.ndarray
    split_seed: int

    def digest(self) -> str:
        """ Content hash of the partition

        :return: Hex SHA-256
        """
        hasher = hashlib.sha256(str(self.split_seed).encode())
        for part in (self.hyperparam_train, self.hyperparam_test, self.campaign_pool):
            hasher.update(np.asarray(part, dtype=np.int64).tobytes())
            hasher.update(b"|")
        return hasher.hexdigest()


@dataclass(frozen=True, eq=False)
class NeighborIndex:
    """ Hamming-1 adjacency lists over pool indices

    """
    adjacency: Tuple[np.ndarray, ...]

    def __len__(self) -> int:
        return len(self.adjacency)

    def neighbors(self, index: int) -> np.ndarray:
        """ Pool indices at Hamming distance exactly 1

        :param index: Pool index
        :return: Sorted index array
        """
        return self.adjacency[index]

    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """ Directed edge list, each undirected edge appearing in both directions

        :return: (source, target) index arrays
        """
        degrees = np.fromiter((len(adj) for adj in self.adjacency), dtype=np.int64, count=len(self.adjacency))
        sources = np.repeat(np.arange(len(self.adjacency)), degrees)
        if degrees.sum() == 0:
            return sources, np.zeros(0, dtype=np.int64)
        return sources, np.concatenate(self.adjacency).astype(np.int64)


@dataclass(frozen=True)
class SyntheticSpec:
    """ Generative model of a fully enumerated synthetic landscape

    model is one of "additive", "nk" or "random"; k is the NK interaction order.
    """
    model: str
    length: int
    alphabet_size: int = 20
    k: int = 0
    seed: int = 0
    name: Optional[str] = None

    MODELS = ("additive", "nk", "random")

    def __post_init__(self):
        if self.model not in SyntheticSpec.MODELS:
            raise SchemaError("unknown synthetic model %r, expected one of %s" % (self.model, SyntheticSpec.MODELS))
        if self.length < 1 or not 1 <= self.alphabet_size <= len(CANONICAL_ALPHABET):
            raise SchemaError("synthetic length must be >= 1 and alphabet size in [1, 20]")
        if not 0 <= self.k < self.length:
            raise SchemaError("NK order k must satisfy 0 <= k < L")

    @property
    def label(self) -> str:
        """ Landscape name, generated from the parameters when unnamed

        :return: Name
        """
        return self.name or "%s_L%d_A%d_k%d_s%d" % (self.model, self.length, self.alphabet_size, self.k, self.seed)


def load_landscape(path: str, name: Optional[str] = None, wild_type: Optional[str] = None,
                   fixed_positions: Optional[Mapping[int, str]] = None, alphabet: str = CANONICAL_ALPHABET,
                   sequence_column: str = "sequence", fitness_column: str = "fitness") -> Landscape:
    """ Load a DMS table with `sequence,fitness[,...]` columns

    Duplicate sequences are collapsed to their mean fitness. Variants not carrying the letters in
    fixed_positions are dropped before normalization.

    :param path: CSV file
    :param name: Landscape name, defaults to the file stem
    :param wild_type: Reference sequence; falls back to a `wild_type` column when present
    :param fixed_positions: 0-based position -> letter every kept variant must carry
    :param alphabet: Allowed letters
    :param sequence_column: Header of the sequence column
    :param fitness_column: Header of the fitness column
    :raises: LandscapeParseError, SchemaError, DegenerateLandscapeError
    :return: Normalized Landscape
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.ParserError as err:
        raise LandscapeParseError(str(err), _parser_error_line(str(err))) from err
    except pd.errors.EmptyDataError as err:
        raise SchemaError("%s is empty" % path) from err
    frame = frame.fillna("")
    missing = [col for col in (sequence_column, fitness_column) if col not in frame.columns]
    if missing:
        raise SchemaError("%s lacks required column(s): %s" % (path, ", ".join(missing)))
    if len(frame) < 2:
        raise SchemaError("%s needs at least 2 rows, found %d" % (path, len(frame)))

    sequences = frame[sequence_column].str.strip().str.upper()
    fitness = pd.to_numeric(frame[fitness_column].str.strip(), errors="coerce")
    letters = set(alphabet)
    for row, (seq, value) in enumerate(zip(sequences, fitness)):
        line = row + 2
        if not seq:
            raise LandscapeParseError("empty sequence", line)
        if not np.isfinite(value):
            raise LandscapeParseError("fitness %r is not a finite number" % frame[fitness_column].iloc[row], line)
        if not letters.issuperset(seq):
            bad = sorted(set(seq).difference(letters))
            raise LandscapeParseError("sequence %s has characters outside the alphabet: %s" % (seq, "".join(bad)),
                                      line)
    lengths = sequences.str.len()
    if lengths.nunique() != 1:
        raise SchemaError("%s has unequal sequence lengths: %s" % (path, sorted(lengths.unique().tolist())))

    if wild_type is None and "wild_type" in frame.columns:
        candidates = [value.strip().upper() for value in frame["wild_type"] if value.strip()]
        wild_type = candidates[0] if candidates else None

    table = pd.DataFrame({"sequence": sequences, "fitness": fitness.astype(float)})
    if fixed_positions:
        keep = np.ones(len(table), dtype=bool)
        for position, letter in fixed_positions.items():
            keep &= table["sequence"].str[int(position)].to_numpy() == letter.upper()
        logger.info("Fixed positions %s keep %d of %d variants", dict(fixed_positions), keep.sum(), len(table))
        table = table[keep]

    grouped = table.groupby("sequence", sort=False)["fitness"]
    sizes = grouped.size()
    if (sizes > 1).any():
        logger.warning("%s: %d duplicated sequence(s) collapsed to mean fitness", path, int((sizes > 1).sum()))
    collapsed = grouped.mean()
    if len(collapsed) < 2:
        raise DegenerateLandscapeError("%s has fewer than 2 distinct variants" % path)
    if wild_type is not None and wild_type not in collapsed.index:
        logger.warning("%s: wild type %s is not in the pool", path, wild_type)

    landscape_name = name if name is not None else _stem(path)
    landscape = Landscape(name=landscape_name, sequences=tuple(collapsed.index),
                          raw_fitness=collapsed.to_numpy(dtype=float), wild_type=wild_type, alphabet=alphabet)
    logger.info("Loaded landscape %s: N=%d, L=%d", landscape.name, len(landscape), landscape.length)
    return landscape


def _stem(path: str) -> str:
    base = str(path).replace("\\", "/").rsplit("/", 1)[-1]
    return base.rsplit(".", 1)[0] if "." in base else base


def _parser_error_line(message: str) -> int:
    """ Pull the line number out of a pandas tokenizer message ("... in line 5, saw 3")

    :param message: Parser error text
    :return: Line number or 0 when unknown
    """
    words = message.replace(",", " ").split()
    for first, second in zip(words, words[1:]):
        if first == "line" and second.isdigit():
            return int(second)
    return 0


def make_split(landscape: Landscape, split_seed: int) -> SplitPlan:
    """ Random 15% / 5% / 80% partition of the pool

    :param landscape: Landscape to split
    :param split_seed: RNG seed
    :raises: PoolSizeError for pools below MIN_SPLIT_POOL
    :return: Deterministic SplitPlan
    """
    size = len(landscape)
    if size < MIN_SPLIT_POOL:
        raise PoolSizeError("split needs at least %d variants, landscape %s has %d"
                            % (MIN_SPLIT_POOL, landscape.name, size))
    n_train = size * HYPERPARAM_TRAIN_PCT // 100
    n_test = size * HYPERPARAM_TEST_PCT // 100
    order = np.random.default_rng(split_seed).permutation(size)
    plan = SplitPlan(hyperparam_train=_frozen(np.sort(order[:n_train])),
                     hyperparam_test=_frozen(np.sort(order[n_train:n_train + n_test])),
                     campaign_pool=_frozen(np.sort(order[n_train + n_test:])),
                     split_seed=split_seed)
    logger.debug("Split %s (seed %d): %d / %d / %d", landscape.name, split_seed, n_train, n_test,
                 size - n_train - n_test)
    return plan


def build_neighbor_index(landscape: Landscape) -> NeighborIndex:
    """ Hamming-1 adjacency by positional bucketing

    Sequences sharing every letter except the one at position p fall in the same bucket, and since
    sequences are unique every pair inside a bucket differs at exactly p.

    :param landscape: Landscape
    :return: Symmetric NeighborIndex without self-loops
    """
    adjacency: List[List[int]] = [[] for _ in range(len(landscape))]
    for position in range(landscape.length):
        buckets: Dict[str, List[int]] = defaultdict(list)
        for index, seq in enumerate(landscape.sequences):
            buckets[seq[:position] + seq[position + 1:]].append(index)
        for members in buckets.values():
            if len(members) < 2:
                continue
            for index in members:
                adjacency[index].extend(other for other in members if other != index)
    return NeighborIndex(adjacency=tuple(_frozen(np.array(sorted(adj), dtype=np.int64)) for adj in adjacency))


def generate_synthetic(spec: SyntheticSpec) -> Landscape:
    """ Enumerate every sequence of a synthetic landscape

    Site tables are drawn in position order from one generator, so NK with k=0 reproduces the
    additive landscape of the same seed.

    :param spec: Generator description
    :raises: PoolSizeError if |A|^L exceeds MAX_SYNTHETIC_SIZE
    :return: Landscape over the first alphabet_size canonical letters
    """
    size = spec.alphabet_size ** spec.length
    if size > MAX_SYNTHETIC_SIZE:
        raise PoolSizeError("synthetic landscape with %d^%d = %d variants exceeds the bound of %d"
                            % (spec.alphabet_size, spec.length, size, MAX_SYNTHETIC_SIZE))
    alphabet = CANONICAL_ALPHABET[:spec.alphabet_size]
    codes = np.array(list(itertools.product(range(spec.alphabet_size), repeat=spec.length)), dtype=np.int64)
    codes = codes.reshape(size, spec.length)
    rng = np.random.default_rng(spec.seed)
    if spec.model == "random":
        fitness = rng.uniform(0.0, 1.0, size=size)
    else:
        order = spec.k if spec.model == "nk" else 0
        fitness = np.zeros(size)
        for position in range(spec.length):
            table = rng.uniform(0.0, 1.0, size=(spec.alphabet_size,) * (order + 1))
            sites = [(position + offset) % spec.length for offset in range(order + 1)]
            fitness += table[tuple(codes[:, site] for site in sites)]
        fitness /= spec.length
    sequences = tuple("".join(alphabet[c] for c in row) for row in codes)
    return Landscape(name=spec.label, sequences=sequences, raw_fitness=fitness, alphabet=alphabet)
