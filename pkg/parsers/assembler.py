"""
Assembler for the toy ISA.

Two passes: the first collects labels and statement text, the second parses
operands with every label known. Addresses are assigned in source order, so
the same text always assembles to the same Program.
"""

import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from loguru import logger

from vm.isa import ISAError, Imm, Instruction, Program

from .constants import (
    CONDITION_MNEMONICS,
    DIRECTIVES,
    LABEL_OPERAND_OPCODES,
    LABEL_SUFFIX,
    OPCODE_MNEMONICS,
    SYSCALL_MNEMONICS,
)
from .utils import is_label, parse_int, parse_operand, split_operands, strip_comment

_LABEL_DEF_RE = re.compile(r'^([A-Za-z_.$][A-Za-z0-9_.$]*)' + LABEL_SUFFIX + r'\s*(.*)$')


class AssemblyError(ValueError):
    """Syntax or resolution error, carrying the 1-based source line."""

    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass
class _Statement:
    line: int
    mnemonic: str
    operand_text: str


def _parse_data(args: str, line: int) -> Tuple[int, bytes]:
    parts = args.split(None, 1)
    if not parts:
        raise AssemblyError(".data needs an address", line)
    try:
        addr = parse_int(parts[0])
    except ValueError:
        raise AssemblyError(f"bad .data address '{parts[0]}'", line)
    if len(parts) == 1:
        return addr, b''
    payload = parts[1].strip()
    if payload.startswith('"'):
        if not payload.endswith('"') or len(payload) < 2:
            raise AssemblyError("unterminated string in .data", line)
        return addr, payload[1:-1].encode('ascii')
    try:
        values = [parse_int(tok) for tok in payload.replace(',', ' ').split()]
    except ValueError as e:
        raise AssemblyError(f"bad .data byte: {e}", line)
    if any(not 0 <= v <= 0xFF for v in values):
        raise AssemblyError(".data values must be bytes", line)
    return addr, bytes(values)


def assemble(source: str, code_base: Optional[int] = None) -> Program:
    """
    Assemble line-oriented source text into a Program.

    Args:
        source: Assembly text (see docs/ASSEMBLY.md)
        code_base: Optional override of the code region base address

    Returns:
        Program with resolved labels

    Raises:
        AssemblyError: On syntax errors, undefined or duplicate labels
    """
    program = Program() if code_base is None else Program(code_base=code_base)
    statements: List[_Statement] = []
    labels: Dict[str, int] = {}
    label_lines: Dict[str, int] = {}
    entry_label: Optional[Tuple[str, int]] = None

    for lineno, raw in enumerate(source.splitlines(), start=1):
        text = strip_comment(raw)
        while text:
            match = _LABEL_DEF_RE.match(text)
            if not match or match.group(1).upper() in OPCODE_MNEMONICS:
                break
            name = match.group(1)
            if name in labels:
                raise AssemblyError(f"duplicate label '{name}' (first defined on line {label_lines[name]})", lineno)
            labels[name] = program.code_base + len(statements)
            label_lines[name] = lineno
            text = match.group(2).strip()
        if not text:
            continue
        head, _, rest = text.partition(' ')
        head_upper = head.upper()
        if head.startswith('.'):
            directive = head.lower()
            if directive not in DIRECTIVES:
                raise AssemblyError(f"unknown directive '{head}' (known: {', '.join(DIRECTIVES)})", lineno)
            if directive == '.data':
                addr, payload = _parse_data(rest, lineno)
                if payload:
                    program.data_image[addr] = payload
            else:
                entry_label = (rest.strip(), lineno)
            continue
        if head_upper not in OPCODE_MNEMONICS:
            raise AssemblyError(f"unknown mnemonic '{head}'", lineno)
        statements.append(_Statement(lineno, head_upper, rest.strip()))

    def resolve(name: str, line: int) -> int:
        if name not in labels:
            raise AssemblyError(f"undefined label '{name}'", line)
        return labels[name]

    for stmt in statements:
        program.instructions.append(_parse_statement(stmt, resolve))

    program.labels = labels
    if entry_label is not None:
        program.entry = resolve(*entry_label)
    elif program.instructions:
        program.entry = program.code_base

    try:
        program.validate()
    except ISAError as e:
        raise AssemblyError(str(e))
    logger.debug(f"Assembled {len(program.instructions)} instructions, {len(labels)} labels")
    return program


def _parse_statement(stmt: _Statement, resolve) -> Instruction:
    opcode = OPCODE_MNEMONICS[stmt.mnemonic]
    tokens = split_operands(stmt.operand_text)
    cond = syscall = None

    if opcode.value in ('JCC', 'CMOV'):
        if not tokens or tokens[0].upper() not in CONDITION_MNEMONICS:
            raise AssemblyError(f"{opcode.value} needs a condition code", stmt.line)
        cond = CONDITION_MNEMONICS[tokens.pop(0).upper()]
    elif opcode.value == 'SYSCALL':
        if len(tokens) != 1 or tokens[0].upper() not in SYSCALL_MNEMONICS:
            raise AssemblyError("SYSCALL needs a kind name", stmt.line)
        syscall = SYSCALL_MNEMONICS[tokens.pop(0).upper()]

    operands = []
    for position, token in enumerate(tokens):
        try:
            if opcode in LABEL_OPERAND_OPCODES and position == 0 and is_label(token):
                operands.append(Imm(resolve(token, stmt.line)))
            else:
                operands.append(parse_operand(token, lambda name: resolve(name, stmt.line)))
        except AssemblyError:
            raise
        except ValueError as e:
            raise AssemblyError(f"bad operand '{token}': {e}", stmt.line)

    try:
        return Instruction(opcode, tuple(operands), cond=cond, syscall=syscall, line=stmt.line)
    except ISAError as e:
        raise AssemblyError(str(e), stmt.line)
