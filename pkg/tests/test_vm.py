"""
Tests for the Target VM

Tests single-instruction semantics, syscalls and the seeded scheduler.
"""

import unittest

from analysis.config import VM_CONFIG
from parsers.assembler import assemble
from vm.isa import Condition, Imm, Instruction, Mem, Opcode, Program, Reg
from vm.machine import FaultKind, InstrumentationHooks, MachineState, OutcomeKind, VMError, step
from vm.memory import AddressSpace
from vm.scheduler import ThreadScheduler
from vm.syscalls import ThreadStatus, WorldState


def run_program(source, inputs=None, seed=0, **kwargs):
    world = WorldState(assemble(source), inputs, throttle=kwargs.pop('throttle', 0))
    world.load_image()
    scheduler = ThreadScheduler(world, seed=seed, **kwargs)
    scheduler.start()
    return world, scheduler.run()


class CountingHooks(InstrumentationHooks):
    def __init__(self):
        self.seen = []

    def before_instruction(self, state, insn, values):
        self.seen.append((insn.opcode, tuple(values)))


class TestStep(unittest.TestCase):
    """Test cases for vm.machine.step"""

    def setUp(self):
        """Set up test fixtures"""
        self.memory = AddressSpace()
        self.memory.commit(0x10000, 0x1000)
        self.hooks = CountingHooks()

    def run_one(self, insn, state=None):
        program = Program(instructions=[insn], entry=VM_CONFIG['code_base'])
        state = state or MachineState(tid=0, memory=self.memory, pc=program.code_base)
        return state, step(state, program, self.hooks)

    def test_add_sets_carry_and_zero(self):
        """ADD wraps modulo 2^64 and sets Z and C"""
        state = MachineState(tid=0, memory=self.memory, pc=VM_CONFIG['code_base'])
        state.regs[1] = (1 << 64) - 1
        state, outcome = self.run_one(Instruction(Opcode.ADD, (Reg(1), Imm(1))), state)
        self.assertIs(outcome.kind, OutcomeKind.CONTINUE)
        self.assertEqual(state.regs[1], 0)
        self.assertEqual((state.flags.z, state.flags.c), (1, 1))

    def test_signed_compare(self):
        """CMP followed by LT distinguishes signed order"""
        state = MachineState(tid=0, memory=self.memory, pc=VM_CONFIG['code_base'])
        state.regs[1] = (1 << 64) - 5     # -5
        state.regs[2] = 3
        state, _ = self.run_one(Instruction(Opcode.CMP, (Reg(1), Reg(2))), state)
        self.assertTrue(state.flags.holds(Condition.LT))
        self.assertFalse(state.flags.holds(Condition.LTU))

    def test_store_then_load(self):
        """STORE and LOAD move little-endian words and report the effective address"""
        state = MachineState(tid=0, memory=self.memory, pc=VM_CONFIG['code_base'])
        state.regs[1] = 0x10000
        state.regs[2] = 0x1122334455667788
        self.run_one(Instruction(Opcode.STORE, (Mem(base=1, disp=8), Reg(2))), state)
        self.assertEqual(self.memory.read(0x10008, 1), b'\x88')
        self.assertEqual(self.hooks.seen[-1], (Opcode.STORE, (0x10008,)))

    def test_unmapped_load_faults_without_hooks(self):
        """A fault is reported before any hook runs"""
        state = MachineState(tid=0, memory=self.memory, pc=VM_CONFIG['code_base'])
        state.regs[1] = 0x90000
        state, outcome = self.run_one(Instruction(Opcode.LOAD, (Reg(2), Mem(base=1))), state)
        self.assertIs(outcome.fault, FaultKind.UNMAPPED_MEMORY)
        self.assertEqual(outcome.address, 0x90000)
        self.assertEqual(self.hooks.seen, [])

    def test_shift_count_is_masked(self):
        """SHL uses the low six bits of the count register"""
        state = MachineState(tid=0, memory=self.memory, pc=VM_CONFIG['code_base'])
        state.regs[1] = 1
        state.regs[2] = 65
        state, _ = self.run_one(Instruction(Opcode.SHL, (Reg(1), Reg(2))), state)
        self.assertEqual(state.regs[1], 2)
        self.assertEqual(self.hooks.seen[-1], (Opcode.SHL, (1,)))

    def test_cmov_reports_selection(self):
        """CMOV hands the selection bit to the hooks"""
        state = MachineState(tid=0, memory=self.memory, pc=VM_CONFIG['code_base'])
        state.flags.z = 1
        state.regs[2] = 42
        state, _ = self.run_one(Instruction(Opcode.CMOV, (Reg(1), Reg(2)), cond=Condition.EQ), state)
        self.assertEqual(state.regs[1], 42)
        self.assertEqual(self.hooks.seen[-1], (Opcode.CMOV, (1,)))

    def test_indirect_to_bad_target(self):
        """CALLIND to a non-code address faults with BadTarget"""
        state = MachineState(tid=0, memory=self.memory, pc=VM_CONFIG['code_base'])
        state.regs[3] = 0x10000
        _, outcome = self.run_one(Instruction(Opcode.CALLIND, (Reg(3),)), state)
        self.assertIs(outcome.fault, FaultKind.BAD_TARGET)

    def test_zero_length_memcpy_skips_validation(self):
        """MEMCPY of zero bytes never faults"""
        state = MachineState(tid=0, memory=self.memory, pc=VM_CONFIG['code_base'])
        state.regs[1] = 0xdead0000
        state, outcome = self.run_one(Instruction(Opcode.MEMCPY, (Reg(1), Reg(2), Reg(3))), state)
        self.assertIs(outcome.kind, OutcomeKind.CONTINUE)

    def test_ret_on_empty_stack_halts(self):
        """RET with an empty call stack ends the thread"""
        _, outcome = self.run_one(Instruction(Opcode.RET))
        self.assertIs(outcome.kind, OutcomeKind.HALTED)


class TestScheduler(unittest.TestCase):
    """Test cases for syscalls under the ThreadScheduler"""

    def test_recv_and_fwrite(self):
        """Input streams flow through memory to output sinks"""
        world, summary = run_program("""
            MOVRI r1, 0x1000
            MOVRI r2, 0
            SYSCALL ALLOC
            MOVRR r8, r0
            MOVRR r1, r8
            MOVRI r2, 5
            MOVRI r3, 2
            SYSCALL RECV
            MOVRR r1, r8
            MOVRR r2, r0
            MOVRI r3, 0
            SYSCALL FWRITE
        """, inputs={'net:2': b'hello world'})
        self.assertEqual(summary.exit_status, 'ok')
        self.assertEqual(bytes(world.outputs['file:0']), b'hello')
        self.assertEqual(world.memory.tc, 1)

    def test_heap_allocation_starts_at_heap_base(self):
        """Non-fixed ALLOC bump-allocates from the heap base"""
        world, _ = run_program("MOVRI r1, 10\nMOVRI r2, 0\nSYSCALL ALLOC\nMOVRR r5, r0\n")
        self.assertEqual(world.threads[0].state.regs[5], VM_CONFIG['heap_base'])

    def test_fixed_alloc_over_committed_memory_conflicts(self):
        """A fixed ALLOC over committed pages faults with AddressConflict"""
        world, summary = run_program("""
            MOVRI r1, 0x1000
            MOVRI r2, 0x3000000
            SYSCALL ALLOC
            SYSCALL ALLOC
        """)
        self.assertEqual(summary.exit_status, 'AddressConflict')
        self.assertIs(world.threads[0].status, ThreadStatus.FAULTED)

    def test_unmapped_access_sets_exit_status(self):
        """A faulting thread records its fault as the exit status"""
        _, summary = run_program("MOVRI r1, 0x5000\nLOAD r2, [r1]\n")
        self.assertEqual(summary.exit_status, 'UnmappedMemory')

    def test_latched_signal(self):
        """SIGNAL with no waiter latches the event for the next WAIT"""
        world, summary = run_program("""
            MOVRI r1, 3
            SYSCALL SIGNAL
            SYSCALL WAIT
            MOVRI r5, 1
        """)
        self.assertEqual(summary.exit_status, 'ok')
        self.assertEqual(world.threads[0].state.regs[5], 1)

    def test_deadlock(self):
        """A WAIT nobody signals ends the run as Deadlock"""
        _, summary = run_program("MOVRI r1, 0\nSYSCALL WAIT\n")
        self.assertEqual(summary.exit_status, 'Deadlock')

    def test_invalid_event(self):
        """Events outside the event table fault"""
        _, summary = run_program("MOVRI r1, 1000\nSYSCALL SIGNAL\n")
        self.assertEqual(summary.exit_status, 'InvalidEvent')

    def test_step_limit(self):
        """An endless loop stops at the step limit"""
        _, summary = run_program("top:\n JMP top\n", max_steps=100)
        self.assertEqual(summary.exit_status, 'StepLimit')
        self.assertEqual(summary.steps, 100)

    def test_spawn_passes_argument(self):
        """A spawned thread receives its argument in r1"""
        world, summary = run_program("""
            .entry main
            main:
                MOVRI r1, @child
                MOVRI r2, 77
                SYSCALL SPAWN
                MOVRI r1, 0
                SYSCALL WAIT
                MOVRI r1, 0
                SYSCALL EXIT
            child:
                MOVRR r6, r1
                MOVRI r1, 0
                SYSCALL SIGNAL
                MOVRI r1, 0
                SYSCALL EXIT
        """)
        self.assertEqual(summary.exit_status, 'ok')
        self.assertEqual(summary.threads, 2)
        self.assertEqual(world.threads[1].state.regs[6], 77)

    def test_spawn_at_thread_limit_fails_softly(self):
        """SPAWN past the thread limit leaves all ones in r0 and the caller running"""
        world, summary = run_program("""
            .entry main
            main:
                MOVRI r10, 0
                MOVRI r12, 0
                MOVRI r9, 0
                SUB r9, 1
            again:
                MOVRI r1, @child
                MOVRI r2, 0
                SYSCALL SPAWN
                CMP r0, r9
                JCC NE, spawned
                ADD r12, 1
            spawned:
                ADD r10, 1
                CMP r10, 70
                JCC LT, again
                MOVRI r1, 0
                SYSCALL EXIT
            child:
                MOVRI r1, 0
                SYSCALL EXIT
        """)
        self.assertEqual(summary.exit_status, 'ok')
        self.assertEqual(summary.threads, VM_CONFIG['max_threads'])
        self.assertEqual(world.threads[0].state.regs[12], 70 - (VM_CONFIG['max_threads'] - 1))
        self.assertEqual(world.threads[0].status, ThreadStatus.EXITED)

    def test_throttle_delays_but_completes(self):
        """Throttled RECV puts the thread to sleep without changing its results"""
        source = """
            MOVRI r1, 0x1000
            MOVRI r2, 0
            SYSCALL ALLOC
            MOVRR r1, r0
            MOVRI r2, 4
            MOVRI r3, 0
            SYSCALL RECV
        """
        plain, _ = run_program(source, inputs={'net:0': b'abcd'})
        slow, summary = run_program(source, inputs={'net:0': b'abcd'}, throttle=500)
        self.assertEqual(summary.exit_status, 'ok')
        self.assertGreaterEqual(slow.clock, 500)
        self.assertLess(plain.clock, 500)

    def test_same_seed_same_schedule(self):
        """The schedule is a function of program and seed"""
        source = """
            .entry main
            main:
                MOVRI r1, @child
                SYSCALL SPAWN
                MOVRI r1, 0x1000
                MOVRI r2, 0x2000000
                SYSCALL ALLOC
                MOVRI r4, 0
            loop:
                ADD r4, 1
                STORE [r2], r4
                CMP r4, 200
                JCC LT, loop
                MOVRI r1, 0
                SYSCALL EXIT
            child:
                MOVRI r9, 0
            spin:
                ADD r9, 1
                CMP r9, 100
                JCC LT, spin
                MOVRI r1, 0
                SYSCALL EXIT
        """
        first, a = run_program(source, seed=5, quantum=3)
        second, b = run_program(source, seed=5, quantum=3)
        self.assertEqual((a.steps, a.quanta), (b.steps, b.quanta))
        self.assertEqual(first.threads[0].state.snapshot(), second.threads[0].state.snapshot())

    def test_start_without_entry(self):
        """A program without instructions cannot start"""
        world = WorldState(assemble(""))
        with self.assertRaises(VMError):
            ThreadScheduler(world).start()


if __name__ == '__main__':
    unittest.main()
