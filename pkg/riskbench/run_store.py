"""
Module persists run records as one JSON-lines file per landscape so interrupted grids resume
"""
import json
import logging
import os
import re
import threading
from typing import Iterable, List, Optional, Set

from riskbench.errors import CorruptStoreError
from riskbench.records import RunKey, RunRecord

logger = logging.getLogger(__name__)

SUFFIX = ".runs.jsonl"


def _file_stem(landscape: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", landscape)


class RunStore:
    """
    Append-only record store; the single writer is whichever thread calls append
    """

    def __init__(self, directory: str):
        self.directory = directory
        self._lock = threading.Lock()
        os.makedirs(directory, exist_ok=True)

    def path_for(self, landscape: str) -> str:
        """ File holding the records of a landscape

        :param landscape: Landscape name
        :return: Path
        """
        return os.path.join(self.directory, _file_stem(landscape) + SUFFIX)

    def append(self, record: RunRecord):
        """ Write one record as a single line and flush it to disk

        :param record: Record to persist
        """
        line = json.dumps(record.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"
        with self._lock:
            with open(self.path_for(record.landscape), "a", encoding="utf-8") as stream:
                stream.write(line)
                stream.flush()
                os.fsync(stream.fileno())

    def extend(self, records: Iterable[RunRecord]):
        for record in records:
            self.append(record)

    def landscapes(self) -> List[str]:
        """ Stems of every landscape file in the store

        :return: Sorted list
        """
        return sorted(name[:-len(SUFFIX)] for name in os.listdir(self.directory) if name.endswith(SUFFIX))

    def load(self, landscape: Optional[str] = None) -> List[RunRecord]:
        """ Read records back

        A later record with the same key replaces an earlier one.

        :param landscape: Landscape name, or None for the whole store
        :raises: CorruptStoreError naming the file and line of an unparsable record
        :return: Records in file order
        """
        paths = [self.path_for(landscape)] if landscape is not None else \
            [os.path.join(self.directory, stem + SUFFIX) for stem in self.landscapes()]
        records = {}
        for path in paths:
            if not os.path.exists(path):
                continue
            with open(path, "r", encoding="utf-8") as stream:
                for number, line in enumerate(stream, start=1):
                    if not line.strip():
                        continue
                    try:
                        record = RunRecord.from_dict(json.loads(line))
                    except (ValueError, KeyError, TypeError) as err:
                        raise CorruptStoreError(path, number) from err
                    records[record.key] = record
        return list(records.values())

    def completed_keys(self, landscape: Optional[str] = None) -> Set[RunKey]:
        """ Keys already present, failed runs included

        :param landscape: Landscape name, or None for the whole store
        :return: Set of RunKey
        """
        return {record.key for record in self.load(landscape)}
