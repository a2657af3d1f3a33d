"""
Constants for the parsers module.

Mnemonic tables and lexical settings used by the assembler and workload loader.
"""

from vm.isa import Condition, Opcode, SyscallKind

COMMENT_CHAR = ';'
LABEL_SUFFIX = ':'
LABEL_REF_PREFIX = '@'

DIRECTIVES = ('.data', '.entry')

OPCODE_MNEMONICS = {opcode.value: opcode for opcode in Opcode}
CONDITION_MNEMONICS = {cond.value: cond for cond in Condition}
SYSCALL_MNEMONICS = {kind.value: kind for kind in SyscallKind}

# Opcodes whose first operand is a branch label
LABEL_OPERAND_OPCODES = (Opcode.JCC, Opcode.JMP, Opcode.CALL)

REGISTER_PATTERN = r'^[rR](\d{1,2})$'
LABEL_PATTERN = r'^[A-Za-z_.$][A-Za-z0-9_.$]*$'
