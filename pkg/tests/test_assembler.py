"""
Tests for the Assembler

Tests label resolution, directives, operand parsing and error reporting.
"""

import unittest

from parsers.assembler import AssemblyError, assemble
from vm.isa import Condition, Imm, Mem, Opcode, Reg, SyscallKind


SAMPLE = """
; sample program
.entry main
.data 0x600000 "HELLO"
.data 0x600010 1, 2, 0xff
helper:
    ADD r4, r5
    RET
main:
    MOVRI r1, @helper
    LOAD r4, [r15+r12*8+16]
    STORE [r9-8], r4
    JCC NE, main
    CMOV GE, r1, r2
    SYSCALL RECV        ; semicolons "inside" comments are fine
    MEMCPY r13, r14, r12
    HALT
"""


class TestAssembler(unittest.TestCase):
    """Test cases for assemble()"""

    def setUp(self):
        """Set up test fixtures"""
        self.program = assemble(SAMPLE)
        self.base = self.program.code_base

    def test_labels_and_entry(self):
        """Labels resolve to code addresses in source order and .entry picks main"""
        self.assertEqual(self.program.labels['helper'], self.base)
        self.assertEqual(self.program.labels['main'], self.base + 2)
        self.assertEqual(self.program.entry, self.base + 2)
        self.assertEqual(len(self.program.instructions), 10)

    def test_data_directives(self):
        """Text and byte-list .data directives fill the data image"""
        self.assertEqual(self.program.data_image[0x600000], b"HELLO")
        self.assertEqual(self.program.data_image[0x600010], bytes([1, 2, 0xff]))

    def test_operand_forms(self):
        """Label immediates, scaled index and negative displacement parse correctly"""
        movri, load, store, jcc, cmov, syscall, memcpy = self.program.instructions[2:9]
        self.assertEqual(movri.operands, (Reg(1), Imm(self.base)))
        self.assertEqual(load.operands[1], Mem(base=15, index=12, scale=8, disp=16))
        self.assertEqual(store.operands[0], Mem(base=9, disp=-8))
        self.assertEqual(jcc.cond, Condition.NE)
        self.assertEqual(jcc.operands, (Imm(self.base + 2),))
        self.assertEqual(cmov.cond, Condition.GE)
        self.assertEqual(syscall.syscall, SyscallKind.RECV)
        self.assertEqual(memcpy.opcode, Opcode.MEMCPY)

    def test_same_text_same_program(self):
        """Assembly is deterministic"""
        again = assemble(SAMPLE)
        self.assertEqual(again.instructions, self.program.instructions)
        self.assertEqual(again.labels, self.program.labels)

    def test_entry_defaults_to_first_instruction(self):
        """Without .entry the first instruction is the entry"""
        program = assemble("MOVRI r1, 1\nHALT\n")
        self.assertEqual(program.entry, program.code_base)

    def test_empty_program_has_no_entry(self):
        """A source without instructions has no entry point"""
        self.assertIsNone(assemble("; nothing here\n").entry)

    def test_unknown_mnemonic_reports_line(self):
        """Unknown mnemonics carry their line number"""
        with self.assertRaises(AssemblyError) as ctx:
            assemble("MOVRI r1, 1\nFROB r1\n")
        self.assertEqual(ctx.exception.line, 2)

    def test_directives_are_case_insensitive_and_checked(self):
        """Known directives match in any case; unknown ones are named with the known set"""
        program = assemble(".ENTRY start\n.Data 0x600000 \"ok\"\nHALT\nstart:\nHALT\n")
        self.assertEqual(program.entry, program.code_base + 1)
        self.assertEqual(program.data_image[0x600000], b"ok")
        with self.assertRaises(AssemblyError) as ctx:
            assemble("HALT\n.text\n")
        self.assertIn("'.text'", str(ctx.exception))
        self.assertIn(".data, .entry", str(ctx.exception))

    def test_duplicate_label(self):
        """A label defined twice is rejected"""
        with self.assertRaises(AssemblyError):
            assemble("a:\n HALT\na:\n HALT\n")

    def test_undefined_label(self):
        """Jumping to an undefined label is rejected"""
        with self.assertRaises(AssemblyError):
            assemble("JMP nowhere\n")

    def test_bad_scale(self):
        """Index scales outside 1, 2, 4, 8 are rejected"""
        with self.assertRaises(AssemblyError):
            assemble("LOAD r1, [r2+r3*3]\n")

    def test_shift_count_must_be_register(self):
        """SHL takes its count from a register only"""
        with self.assertRaises(AssemblyError):
            assemble("SHL r1, 3\n")

    def test_jcc_needs_condition(self):
        """JCC without a condition code is rejected"""
        with self.assertRaises(AssemblyError):
            assemble("top:\n JCC top\n")

    def test_data_overlapping_code(self):
        """Data may not overlap the code region"""
        with self.assertRaises(AssemblyError):
            assemble(".data 0x400000 \"X\"\nHALT\n")

    def test_register_out_of_range(self):
        """Only r0-r15 exist"""
        with self.assertRaises(AssemblyError):
            assemble("MOVRI r16, 1\n")


if __name__ == '__main__':
    unittest.main()
