"""
Interpreter of TaintOps against shadow memory and register taint.

Both the decoupled workers and the coupled oracle apply ops through
`apply_taint_op`; only where the entry words come from differs.
"""

from typing import Callable, Optional, Sequence

from analysis.constants import WORD_SIZE
from instrumenter.blocks import InstrumentationError
from instrumenter.task_stubs import TaskKind, decode_tag
from instrumenter.taint_rules import OP_ARITY, TaintOp, TaintOpKind
from shadow.register_taint import RegisterTaint
from shadow.shadow_memory import ShadowMemory

from .errors import StreamCorruption
from .tasks import TaskInvocation

Dispatch = Callable[[TaskInvocation], object]

REGISTER_ONLY = frozenset({TaintOpKind.COPY, TaintOpKind.UNION, TaintOpKind.CLEAR})


def apply_taint_op(op: TaintOp, entries: Sequence[int], shadow: ShadowMemory, reg_taint: RegisterTaint,
                   dispatch: Optional[Dispatch] = None, tid: int = 0, block_address: int = 0) -> None:
    """
    Apply one op.

    Args:
        op: Op to apply
        entries: Entry words; op.entries index into this sequence
        shadow: Shadow memory
        reg_taint: Register taint of the thread the op belongs to
        dispatch: Receives the op's task invocation (TaskCall, CheckIndirect); tasks are skipped when None
        tid: Target thread, for task invocations
        block_address: Analysis block address, for task invocations

    Raises:
        StreamCorruption: If a task tag does not match the op's stub
    """
    kind = op.kind
    expected = OP_ARITY.get(kind)
    if expected is not None and len(op.entries) != expected:
        raise StreamCorruption(f"{kind.value} at {op.site_pc:#x} names {len(op.entries)} entries, expected {expected}")

    if kind is TaintOpKind.COPY:
        reg_taint.copy(op.dst, op.src)
    elif kind is TaintOpKind.UNION:
        reg_taint.union(op.dst, op.src)
    elif kind is TaintOpKind.CLEAR:
        reg_taint.clear(op.dst)
    elif kind is TaintOpKind.COPY_MEM2REG:
        reg_taint.set(op.dst, shadow.taint_read(entries[op.entries[0]], WORD_SIZE))
    elif kind is TaintOpKind.COPY_REG2MEM:
        shadow.taint_write(entries[op.entries[0]], WORD_SIZE, reg_taint.get(op.src).copy())
    elif kind is TaintOpKind.BLOCK_COPY:
        src, dst, count = (entries[i] for i in op.entries)
        if count:
            shadow.taint_write(dst, count, shadow.taint_read(src, count))
    elif kind is TaintOpKind.SHIFT_ADJUST:
        # the count only reproduces the architectural value; byte taint passes through
        pass
    elif kind is TaintOpKind.COND_COPY:
        if entries[op.entries[0]]:
            reg_taint.copy(op.dst, op.src)
    elif kind is TaintOpKind.CHECK_INDIRECT:
        if op.stub is not None and dispatch is not None:
            dispatch(TaskInvocation(TaskKind.INDIRECT, tid, op.site_pc, (entries[op.entries[0]],),
                                    block_address=block_address,
                                    register_labels=tuple(int(b) for b in reg_taint.get(op.src))))
    elif kind is TaintOpKind.TASK_CALL:
        words = [entries[i] for i in op.entries]
        try:
            task_kind, custom_id = decode_tag(words[0])
        except InstrumentationError as e:
            raise StreamCorruption(f"task call at {op.site_pc:#x}: {e}") from e
        if task_kind is not op.stub.kind or custom_id != op.stub.custom_id:
            raise StreamCorruption(f"task call at {op.site_pc:#x} expected {op.stub.kind.value}, "
                                   f"stream carries tag {words[0]:#x}")
        if dispatch is not None:
            dispatch(TaskInvocation(task_kind, tid, op.site_pc, tuple(words[1:]), custom_id, block_address))
