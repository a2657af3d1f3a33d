"""
Lexical helpers for the assembler: comments, operand splitting and operand parsing.
"""

import re
from typing import Callable, List, Optional

from vm.isa import Imm, Mem, Operand, Reg

from .constants import COMMENT_CHAR, LABEL_PATTERN, LABEL_REF_PREFIX, REGISTER_PATTERN

_REGISTER_RE = re.compile(REGISTER_PATTERN)
_LABEL_RE = re.compile(LABEL_PATTERN)


def strip_comment(line: str) -> str:
    """Remove a trailing `;` comment, ignoring semicolons inside string literals."""
    in_string = False
    for i, ch in enumerate(line):
        if ch == '"':
            in_string = not in_string
        elif ch == COMMENT_CHAR and not in_string:
            return line[:i].strip()
    return line.strip()


def split_operands(text: str) -> List[str]:
    """Split an operand list on commas outside brackets."""
    operands, depth, current = [], 0, []
    for ch in text:
        if ch == '[':
            depth += 1
        elif ch == ']':
            depth -= 1
        if ch == ',' and depth == 0:
            operands.append(''.join(current).strip())
            current = []
        else:
            current.append(ch)
    tail = ''.join(current).strip()
    if tail:
        operands.append(tail)
    return operands


def is_label(token: str) -> bool:
    return bool(_LABEL_RE.match(token)) and parse_register(token) is None


def parse_register(token: str) -> Optional[int]:
    match = _REGISTER_RE.match(token.strip())
    if not match:
        return None
    return int(match.group(1))


def parse_int(token: str) -> int:
    """Parse decimal, hex (0x), or negative integer literals; raises ValueError."""
    return int(token.strip(), 0)


def parse_memory(token: str) -> Mem:
    """
    Parse an address expression like `[r1+r2*8+16]`.

    Args:
        token: Bracketed address expression

    Returns:
        Mem operand

    Raises:
        ValueError: If the expression is malformed
    """
    body = token.strip()[1:-1].replace(' ', '')
    if not body:
        raise ValueError("empty address expression")
    body = body.replace('-', '+-')
    base = index = None
    scale, disp = 1, 0
    for term in filter(None, body.split('+')):
        if '*' in term:
            reg_text, scale_text = term.split('*', 1)
            reg = parse_register(reg_text)
            if reg is None or index is not None:
                raise ValueError(f"bad index term '{term}'")
            index, scale = reg, parse_int(scale_text)
            continue
        reg = parse_register(term)
        if reg is not None:
            if base is None:
                base = reg
            elif index is None:
                index = reg
            else:
                raise ValueError(f"too many registers in '{token}'")
            continue
        disp += parse_int(term)
    return Mem(base=base, index=index, scale=scale, disp=disp)


def parse_operand(token: str, resolve_label: Callable[[str], int]) -> Operand:
    """
    Parse a single operand.

    Args:
        token: Operand text
        resolve_label: Callback mapping a label name to its code address

    Returns:
        Reg, Imm or Mem operand
    """
    token = token.strip()
    if token.startswith('[') and token.endswith(']'):
        return parse_memory(token)
    reg = parse_register(token)
    if reg is not None:
        return Reg(reg)
    if token.startswith(LABEL_REF_PREFIX):
        return Imm(resolve_label(token[1:]))
    return Imm(parse_int(token))
