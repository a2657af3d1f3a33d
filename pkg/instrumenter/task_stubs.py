"""
Task stubs: which analysis tasks fire at which instrumentation sites, and the
words the recording side emits for them.

A task entry in the record stream is a tag word followed by the task's
arguments. IndirectCheck has no entry of its own; it reuses the branch
target the block already captures.

Besides syscalls, TaintCheck and Custom tasks can be bound to memory
instructions (LOAD, STORE, MEMCPY), for every site of an opcode or for one
code address. Such a task runs after the instruction's own taint op and covers
the memory the instruction touched.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from analysis.constants import TASK_BINDINGS, in_sentinel_range
from vm.isa import Instruction, Opcode, SyscallKind
from vm.machine import MachineState

from .blocks import InstrumentationError


class TaskKind(Enum):
    SOURCE = 'TaintSource'
    CHECK = 'TaintCheck'
    INDIRECT = 'IndirectCheck'
    MIRROR_ALLOC = 'MirrorAlloc'
    MIRROR_FREE = 'MirrorFree'
    CUSTOM = 'Custom'


class TaskSite(Enum):
    ENTRY = 'entry'     # before the syscall takes effect
    RETURN = 'return'   # after the syscall returned
    BRANCH = 'branch'   # indirect branch instruction
    INSTRUCTION = 'instruction'     # after a memory instruction's taint op


TASK_TAGS: Dict[TaskKind, int] = {
    TaskKind.SOURCE: 1,
    TaskKind.CHECK: 2,
    TaskKind.MIRROR_ALLOC: 3,
    TaskKind.MIRROR_FREE: 4,
}
CUSTOM_TAG_BASE = 0x100
MAX_CUSTOM_ID = 0xFFFF

TASK_ARGS: Dict[TaskKind, Tuple[str, ...]] = {
    TaskKind.SOURCE: ('addr', 'len', 'label'),
    TaskKind.CHECK: ('addr', 'len'),
    TaskKind.INDIRECT: ('target',),
    TaskKind.MIRROR_ALLOC: ('addr', 'size'),
    TaskKind.MIRROR_FREE: ('addr', 'size'),
    TaskKind.CUSTOM: ('addr', 'len'),
}

_BINDING_NAMES = {
    'source': TaskKind.SOURCE,
    'check': TaskKind.CHECK,
    'mirror_alloc': TaskKind.MIRROR_ALLOC,
    'mirror_free': TaskKind.MIRROR_FREE,
}

_DEFAULT_SITES = {
    TaskKind.SOURCE: TaskSite.RETURN,
    TaskKind.CHECK: TaskSite.ENTRY,
    TaskKind.MIRROR_ALLOC: TaskSite.RETURN,
    TaskKind.MIRROR_FREE: TaskSite.RETURN,
    TaskKind.CUSTOM: TaskSite.RETURN,
    TaskKind.INDIRECT: TaskSite.BRANCH,
}

INSTRUCTION_SITE_KINDS = (TaskKind.CHECK, TaskKind.CUSTOM)
MEMORY_OPCODES = (Opcode.LOAD, Opcode.STORE, Opcode.MEMCPY)
WORD_BYTES = 8


def source_label(stream: int) -> int:
    """Taint label for data read from an input stream: one bit per stream, modulo 8."""
    return 1 << (stream % 8)


def _touched_range(values: Sequence[int]) -> Tuple[int, int]:
    # LOAD/STORE pass the effective address; MEMCPY passes (src, dst, count) and exposes its destination
    if len(values) == 3:
        return values[1], values[2]
    return values[0], WORD_BYTES


def _range_word(addr: int, length: int) -> int:
    # an empty range never reaches memory validation, so its address can be any word
    if length == 0 or in_sentinel_range(addr):
        return 0
    return addr


@dataclass(frozen=True)
class TaskStub:
    """Emission rule for one task at one site."""
    kind: TaskKind
    site: TaskSite
    custom_id: Optional[int] = None

    @property
    def tag(self) -> Optional[int]:
        if self.kind is TaskKind.INDIRECT:
            return None
        if self.kind is TaskKind.CUSTOM:
            return CUSTOM_TAG_BASE + self.custom_id
        return TASK_TAGS[self.kind]

    @property
    def arg_names(self) -> Tuple[str, ...]:
        return TASK_ARGS[self.kind]

    @property
    def entry_count(self) -> int:
        """Stream words this stub emits (tag plus arguments)."""
        if self.kind is TaskKind.INDIRECT:
            return 0
        return 1 + len(self.arg_names)

    def emit(self, state: MachineState, result=None, values: Sequence[int] = ()) -> Tuple[int, ...]:
        """
        Resolve the stub's words from the thread state and, at return sites, the syscall result.

        Args:
            state: Executing thread
            result: SyscallResult for RETURN-site stubs
            values: Runtime values of the instruction, INSTRUCTION-site stubs only

        Returns:
            Tuple of stream words, tag first
        """
        regs = state.regs
        if self.site is TaskSite.INSTRUCTION:
            addr, length = _touched_range(values)
            return (self.tag, _range_word(addr, length), length)
        if self.kind is TaskKind.SOURCE:
            return (self.tag, _range_word(result.addr, result.length), result.length, source_label(result.stream))
        if self.kind is TaskKind.CHECK:
            return (self.tag, _range_word(regs[1], regs[2]), regs[2])
        if self.kind in (TaskKind.MIRROR_ALLOC, TaskKind.MIRROR_FREE):
            return (self.tag, _range_word(result.addr, result.length), result.length)
        if self.kind is TaskKind.CUSTOM:
            # custom tasks may sit on syscalls whose r2 is not a length
            length = 0 if in_sentinel_range(regs[2]) else regs[2]
            return (self.tag, _range_word(regs[1], length), length)
        return ()


def gen_task_stub(site: TaskSite, kind: TaskKind, custom_id: Optional[int] = None) -> TaskStub:
    """
    Build the emission rule for a task at an instrumentation site.

    Args:
        site: ENTRY or RETURN of a syscall, or BRANCH for indirect branches
        kind: Task kind
        custom_id: Handler id, required for Custom tasks

    Returns:
        TaskStub

    Raises:
        InstrumentationError: On an unknown kind, a bad custom id or a kind/site mismatch
    """
    if not isinstance(kind, TaskKind):
        raise InstrumentationError(f"unknown task kind {kind!r}")
    if (kind is TaskKind.INDIRECT) != (site is TaskSite.BRANCH):
        raise InstrumentationError(f"{kind.value} cannot be bound at a {site.value} site")
    if kind is TaskKind.CUSTOM:
        if custom_id is None or not 0 <= custom_id <= MAX_CUSTOM_ID:
            raise InstrumentationError(f"custom task id must be in [0, {MAX_CUSTOM_ID}], got {custom_id}")
    elif custom_id is not None:
        raise InstrumentationError(f"{kind.value} takes no custom id")
    if site is TaskSite.INSTRUCTION and kind not in INSTRUCTION_SITE_KINDS:
        raise InstrumentationError(f"{kind.value} cannot be bound at an instruction site")
    if kind is TaskKind.SOURCE and site is not TaskSite.RETURN:
        raise InstrumentationError("a taint source needs the syscall result and binds at the return site")
    return TaskStub(kind, site, custom_id)


def decode_tag(tag: int) -> Tuple[TaskKind, Optional[int]]:
    """Map a stream tag word back to (kind, custom id)."""
    for kind, value in TASK_TAGS.items():
        if value == tag:
            return kind, None
    if CUSTOM_TAG_BASE <= tag <= CUSTOM_TAG_BASE + MAX_CUSTOM_ID:
        return TaskKind.CUSTOM, tag - CUSTOM_TAG_BASE
    raise InstrumentationError(f"unknown task tag {tag:#x}")


class TaskBindings:
    """
    Task-stub table keyed by syscall kind or by memory opcode (optionally at one
    code address), plus the implicit IndirectCheck on indirect branches.
    """

    def __init__(self, bindings: Optional[Dict[str, str]] = None, indirect_checks: bool = True):
        self.indirect_checks = indirect_checks
        self._stubs: Dict[SyscallKind, List[TaskStub]] = {}
        self._sites: Dict[Tuple[Opcode, Optional[int]], List[TaskStub]] = {}
        for syscall_name, task_name in (TASK_BINDINGS if bindings is None else bindings).items():
            if task_name not in _BINDING_NAMES:
                raise InstrumentationError(f"unknown task '{task_name}' bound to {syscall_name}")
            kind = _BINDING_NAMES[task_name]
            self.bind(SyscallKind[syscall_name], kind)

    def bind(self, syscall: SyscallKind, kind: TaskKind, site: Optional[TaskSite] = None,
             custom_id: Optional[int] = None) -> TaskStub:
        site = site or _DEFAULT_SITES[kind]
        if site is TaskSite.INSTRUCTION:
            raise InstrumentationError("syscall tasks bind at the entry or return site")
        stub = gen_task_stub(site, kind, custom_id)
        self._stubs.setdefault(syscall, []).append(stub)
        return stub

    def bind_custom(self, syscall: SyscallKind, custom_id: int, site: TaskSite = TaskSite.RETURN) -> TaskStub:
        return self.bind(syscall, TaskKind.CUSTOM, site=site, custom_id=custom_id)

    def bind_instruction(self, opcode: Opcode, kind: TaskKind, address: Optional[int] = None,
                         custom_id: Optional[int] = None) -> TaskStub:
        """
        Bind a task to a memory instruction.

        Args:
            opcode: LOAD, STORE or MEMCPY
            kind: TaintCheck or Custom
            address: Code address of one site; every site of the opcode when omitted
            custom_id: Handler id for Custom tasks

        Returns:
            The bound TaskStub

        Raises:
            InstrumentationError: On a non-memory opcode or a kind that needs a syscall
        """
        if opcode not in MEMORY_OPCODES:
            raise InstrumentationError(f"{opcode.value} touches no memory; tasks bind only to "
                                       f"{', '.join(o.value for o in MEMORY_OPCODES)}")
        stub = gen_task_stub(TaskSite.INSTRUCTION, kind, custom_id)
        self._sites.setdefault((opcode, address), []).append(stub)
        return stub

    def stubs_for(self, insn: Instruction, pc: Optional[int] = None) -> Tuple[TaskStub, ...]:
        if insn.opcode is Opcode.SYSCALL:
            return tuple(self._stubs.get(insn.syscall, ()))
        if self.indirect_checks and insn.opcode in (Opcode.JMPIND, Opcode.CALLIND):
            return (TaskStub(TaskKind.INDIRECT, TaskSite.BRANCH),)
        stubs = list(self._sites.get((insn.opcode, None), ()))
        if pc is not None:
            stubs.extend(self._sites.get((insn.opcode, pc), ()))
        return tuple(stubs)

    def describe(self) -> Dict[str, List[str]]:
        table = {syscall.value: [f"{s.kind.value}@{s.site.value}" for s in stubs]
                 for syscall, stubs in sorted(self._stubs.items(), key=lambda kv: kv[0].value)}
        for (opcode, address), stubs in sorted(self._sites.items(), key=lambda kv: (kv[0][0].value, -1 if kv[0][1] is None else kv[0][1])):
            key = opcode.value if address is None else f"{opcode.value}@{address:#x}"
            table.setdefault(key, []).extend(f"{s.kind.value}@{s.site.value}" for s in stubs)
        return table
