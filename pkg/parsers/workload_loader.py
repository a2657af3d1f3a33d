"""
Workload Loader for the workload catalog

Loads workload declarations from catalog.json, assembles their programs and
decodes their input streams, with caching for repeated runs.
"""

import json
import random
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from loguru import logger

from analysis.config import DEFAULT_CATALOG_PATH
from vm.isa import Opcode, Program, SyscallKind

from .assembler import AssemblyError, assemble
from .constants import LABEL_REF_PREFIX

RANDOM_PREFIX = 'random:'


class WorkloadError(ValueError):
    """Raised for unknown workload ids and malformed catalog entries."""


@dataclass
class Workload:
    """One runnable workload: program, input streams and declared expectations."""
    id: str
    description: str
    program: Program
    inputs: Dict[str, bytes] = field(default_factory=dict)
    threads: int = 1
    markers: Dict[str, Dict[str, str]] = field(default_factory=dict)
    expect: Dict[str, Any] = field(default_factory=dict)
    source: str = ''

    def evaluate_markers(self, outputs: Mapping[str, bytes]) -> Dict[str, bool]:
        """
        Evaluate the declared output markers.

        A marker holds when its sink received data containing the marker text.
        """
        results = {}
        for name, marker in sorted(self.markers.items()):
            data = bytes(outputs.get(marker['sink'], b''))
            results[name] = marker['contains'].encode() in data
        return results

    def marker_probe(self):
        """Callable that evaluates the markers on a finished WorldState."""
        return lambda world: self.evaluate_markers(world.outputs)


def count_spawns(program: Program) -> int:
    return sum(1 for insn in program.instructions
               if insn.opcode is Opcode.SYSCALL and insn.syscall is SyscallKind.SPAWN)


def decode_input(declared: Any, labels: Mapping[str, int]) -> bytes:
    """
    Decode one input stream declaration.

    Forms:
        "text"                          ASCII text
        {"text": "..."}                 ASCII text
        {"hex": "deadbeef"}             raw bytes
        {"repeat": [byte, count]}       a byte repeated count times
        {"words": [1, "@label", ...]}   little-endian 8-byte words; @label is a code address
        {"random": n, "seed": s}        n seeded random bytes

    Raises:
        WorkloadError: On an unknown form or an undefined label
    """
    if isinstance(declared, str):
        return declared.encode()
    if not isinstance(declared, dict) or len(set(declared) - {'seed'}) != 1:
        raise WorkloadError(f"bad input declaration: {declared!r}")
    if 'text' in declared:
        return declared['text'].encode()
    if 'hex' in declared:
        return bytes.fromhex(declared['hex'])
    if 'repeat' in declared:
        value, count = declared['repeat']
        return bytes([value]) * count
    if 'words' in declared:
        words = []
        for word in declared['words']:
            if isinstance(word, str) and word.startswith(LABEL_REF_PREFIX):
                name = word[len(LABEL_REF_PREFIX):]
                if name not in labels:
                    raise WorkloadError(f"input refers to undefined label '{name}'")
                word = labels[name]
            words.append(int(word, 0) if isinstance(word, str) else int(word))
        return b''.join(struct.pack('<Q', w & 0xFFFF_FFFF_FFFF_FFFF) for w in words)
    if 'random' in declared:
        rng = random.Random(declared.get('seed', 0))
        return bytes(rng.getrandbits(8) for _ in range(declared['random']))
    raise WorkloadError(f"unknown input form: {sorted(declared)}")


class WorkloadCatalog:
    """Load and assemble catalog workloads with caching"""

    def __init__(self, catalog_path: str = DEFAULT_CATALOG_PATH):
        """
        Initialize the catalog.

        Args:
            catalog_path: Path to catalog.json; program files are resolved next to it
        """
        self.catalog_path = Path(catalog_path)
        self._entries_cache: Optional[Dict[str, Dict[str, Any]]] = None
        self._workload_cache: Dict[str, Workload] = {}

    def entries(self) -> Dict[str, Dict[str, Any]]:
        """Raw catalog entries keyed by workload id."""
        if self._entries_cache is None:
            try:
                with open(self.catalog_path, 'r', encoding='utf-8') as f:
                    data = json.load(f)
            except (OSError, json.JSONDecodeError) as e:
                raise WorkloadError(f"cannot read workload catalog {self.catalog_path}: {e}")
            self._entries_cache = data.get('workloads', {})
            logger.info(f"Loaded {len(self._entries_cache)} workloads from {self.catalog_path}")
        return self._entries_cache

    def ids(self) -> List[str]:
        return sorted(self.entries())

    def describe(self) -> List[Dict[str, Any]]:
        """One row per workload: id, description and thread count."""
        rows = [{'id': wid, 'description': entry.get('description', ''), 'threads': entry.get('threads', 1)}
                for wid, entry in sorted(self.entries().items())]
        rows.append({'id': f'{RANDOM_PREFIX}<seed>',
                     'description': 'randomized program for oracle fuzzing', 'threads': None})
        return rows

    def get(self, workload_id: str) -> Workload:
        """
        Load a workload by id, or generate one for 'random:<seed>'.

        Raises:
            WorkloadError: For unknown ids (naming the valid ones) and malformed entries
            AssemblyError: If the program does not assemble
        """
        if workload_id in self._workload_cache:
            return self._workload_cache[workload_id]

        if workload_id.startswith(RANDOM_PREFIX):
            workload = self._generated(workload_id)
        else:
            entries = self.entries()
            if workload_id not in entries:
                raise WorkloadError(f"unknown workload '{workload_id}'; valid ids: "
                                    f"{', '.join(self.ids())}, {RANDOM_PREFIX}<seed>")
            workload = self._load(workload_id, entries[workload_id])

        self._workload_cache[workload_id] = workload
        return workload

    def _load(self, workload_id: str, entry: Dict[str, Any]) -> Workload:
        source_path = self.catalog_path.parent / entry['source']
        try:
            source = source_path.read_text(encoding='utf-8')
        except OSError as e:
            raise WorkloadError(f"workload '{workload_id}': cannot read {source_path}: {e}")
        try:
            program = assemble(source)
        except AssemblyError as e:
            raise AssemblyError(f"workload '{workload_id}': {e}")

        threads = entry.get('threads', 1)
        spawns = count_spawns(program)
        if spawns + 1 != threads:
            raise WorkloadError(f"workload '{workload_id}' declares {threads} threads but has {spawns} SPAWNs")

        inputs = {name: decode_input(declared, program.labels) for name, declared in entry.get('inputs', {}).items()}
        for name, marker in entry.get('markers', {}).items():
            if set(marker) != {'sink', 'contains'}:
                raise WorkloadError(f"workload '{workload_id}': marker '{name}' needs 'sink' and 'contains'")
        logger.debug(f"Workload {workload_id}: {len(program.instructions)} instructions, "
                     f"{sum(len(v) for v in inputs.values())} input bytes")
        return Workload(id=workload_id, description=entry.get('description', ''), program=program,
                        inputs=inputs, threads=threads, markers=entry.get('markers', {}),
                        expect=entry.get('expect', {}), source=source)

    def _generated(self, workload_id: str) -> Workload:
        from harness.program_generator import generate_workload

        try:
            seed = int(workload_id[len(RANDOM_PREFIX):], 0)
        except ValueError:
            raise WorkloadError(f"bad random workload id '{workload_id}', expected {RANDOM_PREFIX}<integer seed>")
        return generate_workload(seed)
