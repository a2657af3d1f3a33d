"""
Seeded random program generator for oracle equivalence fuzzing.

Generated programs stay inside the shapes the runtime guarantees to complete:
every thread computes on its own data region, memory operands stay inside that
region, loops are counted, and children SIGNAL their own event before EXIT
while the main thread WAITs for each of them.

Cross-thread data flows only through a shared region with one slot per child.
A child publishes part of its region into its slot right before SIGNAL, and
main reads the slot (and sinks it) only after its WAIT for that child returns.

Indirect CALLIND/JMPIND targets are received: each such site RECVs one word
from a stream of its own whose content is the address of the intended label,
so the target register is tainted and still lands on valid code.

Register roles:

    r0          syscall result
    r1-r3       syscall arguments
    r4-r10      general purpose values
    r11         loop counter
    r12-r14     address and count scratch
    r15         region base
"""

import random
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from parsers.assembler import assemble
from parsers.workload_loader import Workload

MAX_INSTRUCTIONS = 500
MAX_THREADS = 4
MAX_SOURCES = 3
MAX_SINKS = 3
MAX_INDIRECT_SITES = 4

REGION_BASE = 0x0100_0000
REGION_STRIDE = 0x0001_0000
REGION_SIZE = 512
SHARED_BASE = REGION_BASE + MAX_THREADS * REGION_STRIDE
SHARED_SLOT = 64
INPUT_STREAMS = 3
INDIRECT_STREAM_BASE = 16

VALUE_REGS = list(range(4, 11))
CONDITIONS = ['EQ', 'NE', 'LT', 'GE', 'LE', 'GT', 'LTU', 'GEU']
ALU = ['ADD', 'SUB', 'AND', 'OR', 'XOR']


@dataclass
class _Budget:
    instructions: int
    sources: int = MAX_SOURCES
    sinks: int = MAX_SINKS
    indirect: Dict[str, str] = field(default_factory=dict)    # input stream -> target label


@dataclass
class _ThreadWriter:
    tid: int
    rng: random.Random
    budget: _Budget
    lines: List[str] = field(default_factory=list)
    emitted: int = 0
    labels: int = 0

    @property
    def base(self) -> int:
        return REGION_BASE + self.tid * REGION_STRIDE

    def emit(self, *lines: str) -> None:
        self.lines.extend(f"    {line}" for line in lines)
        self.emitted += len(lines)
        self.budget.instructions -= len(lines)

    def label(self, stem: str) -> str:
        self.labels += 1
        return f"t{self.tid}_{stem}{self.labels}"

    def place(self, label: str) -> None:
        self.lines.append(f"{label}:")

    def reg(self) -> str:
        return f"r{self.rng.choice(VALUE_REGS)}"

    def offset(self, length: int = 8) -> int:
        return self.rng.randrange(0, REGION_SIZE - length + 1)

    # Snippets; each returns without touching r11 or r15

    def simple(self) -> None:
        rng = self.rng
        choice = rng.randrange(9)
        if choice == 0:
            self.emit(f"MOVRI {self.reg()}, {rng.randrange(0, 1 << 16)}")
        elif choice == 1:
            self.emit(f"MOVRR {self.reg()}, {self.reg()}")
        elif choice in (2, 3):
            self.emit(f"LOAD {self.reg()}, [r15+{self.offset()}]")
        elif choice == 4:
            self.emit(f"STORE [r15+{self.offset()}], {self.reg()}")
        elif choice == 5:
            operand = self.reg() if rng.random() < 0.6 else str(rng.randrange(0, 256))
            self.emit(f"{rng.choice(ALU)} {self.reg()}, {operand}")
        elif choice == 6:
            self.emit(f"MOVRI r12, {rng.randrange(0, 64)}",
                      f"{rng.choice(['SHL', 'SHR'])} {self.reg()}, r12")
        elif choice == 7:
            self.emit(f"CMP {self.reg()}, {self.reg()}",
                      f"CMOV {rng.choice(CONDITIONS)}, {self.reg()}, {self.reg()}")
        else:
            slot = rng.randrange(0, REGION_SIZE // 8)
            self.emit(f"MOVRI r12, {slot}",
                      f"LOAD {self.reg()}, [r15+r12*8]" if rng.random() < 0.5
                      else f"STORE [r15+r12*8], {self.reg()}")

    def memcpy(self) -> None:
        count = self.rng.randrange(0, 65)
        src, dst = self.offset(count), self.offset(count)
        self.emit("MOVRR r13, r15", f"ADD r13, {dst}",
                  "MOVRR r14, r15", f"ADD r14, {src}",
                  f"MOVRI r12, {count}",
                  "MEMCPY r13, r14, r12")

    def branch(self) -> None:
        skip = self.label('skip')
        self.emit(f"CMP {self.reg()}, {self.rng.randrange(0, 1 << 16)}",
                  f"JCC {self.rng.choice(CONDITIONS)}, {skip}")
        for _ in range(self.rng.randint(1, 3)):
            self.simple()
        self.place(skip)

    def loop(self) -> None:
        head = self.label('loop')
        self.emit(f"MOVRI r11, {self.rng.randint(1, 6)}")
        self.place(head)
        for _ in range(self.rng.randint(1, 3)):
            self.simple()
        self.emit("SUB r11, 1", "CMP r11, 0", f"JCC NE, {head}")

    def call(self, subroutines: List[str]) -> None:
        target = self.rng.choice(subroutines)
        if self.rng.random() < 0.5:
            self.emit(f"CALL {target}")
        else:
            self.emit(f"MOVRI r12, @{target}", "CALLIND r12")

    def received_target(self, subroutines: List[str]) -> None:
        """RECV a code address into the region, load it and transfer control through it."""
        stream = INDIRECT_STREAM_BASE + len(self.budget.indirect)
        at = self.offset()
        self.emit("MOVRR r1, r15", f"ADD r1, {at}", "MOVRI r2, 8", f"MOVRI r3, {stream}",
                  "SYSCALL RECV", f"LOAD r12, [r15+{at}]")
        if subroutines and self.rng.random() < 0.5:
            self.budget.indirect[f"net:{stream}"] = self.rng.choice(subroutines)
            self.emit("CALLIND r12")
        else:
            landing = self.label('land')
            self.budget.indirect[f"net:{stream}"] = landing
            self.emit("JMPIND r12")
            self.place(landing)

    def source(self) -> None:
        self.budget.sources -= 1
        length = self.rng.randrange(1, 65)
        kind = self.rng.choice(['RECV', 'FREAD'])
        self.emit("MOVRR r1, r15", f"ADD r1, {self.offset(length)}",
                  f"MOVRI r2, {length}", f"MOVRI r3, {self.rng.randrange(INPUT_STREAMS)}",
                  f"SYSCALL {kind}")

    def sink(self) -> None:
        self.budget.sinks -= 1
        length = self.rng.randrange(0, 65)
        kind = self.rng.choice(['FWRITE', 'SEND'])
        self.emit("MOVRR r1, r15", f"ADD r1, {self.offset(length)}",
                  f"MOVRI r2, {length}", f"MOVRI r3, {self.rng.randrange(INPUT_STREAMS)}",
                  f"SYSCALL {kind}")

    def publish(self) -> None:
        """Copy part of this thread's region into its shared slot; runs right before SIGNAL."""
        self.emit(f"MOVRI r13, {shared_slot(self.tid):#x}",
                  "MOVRR r14, r15", f"ADD r14, {self.offset(SHARED_SLOT)}",
                  f"MOVRI r12, {SHARED_SLOT}",
                  "MEMCPY r13, r14, r12",
                  f"STORE [r13+{8 * self.rng.randrange(SHARED_SLOT // 8)}], {self.reg()}")

    def consume(self, child: int) -> None:
        """Read and sink a child's shared slot; runs right after the WAIT for that child."""
        length = self.rng.randrange(1, SHARED_SLOT + 1)
        value = self.reg()
        self.emit(f"MOVRI r13, {shared_slot(child):#x}",
                  f"LOAD {value}, [r13+{8 * self.rng.randrange(SHARED_SLOT // 8)}]",
                  f"STORE [r15+{self.offset()}], {value}",
                  "MOVRR r1, r13", f"ADD r1, {self.rng.randrange(SHARED_SLOT - length + 1)}",
                  f"MOVRI r2, {length}", f"MOVRI r3, {self.rng.randrange(INPUT_STREAMS)}",
                  f"SYSCALL {self.rng.choice(['FWRITE', 'SEND'])}")

    def body(self, quota: int, subroutines: List[str]) -> None:
        self.emit(f"MOVRI r15, {self.base:#x}")
        for reg in VALUE_REGS:
            if self.rng.random() < 0.5:
                self.emit(f"LOAD r{reg}, [r15+{self.offset()}]")
        while self.emitted < quota and self.budget.instructions > 40:
            roll = self.rng.random()
            if roll < 0.08 and self.budget.sources > 0:
                self.source()
            elif roll < 0.14 and self.budget.sinks > 0:
                self.sink()
            elif roll < 0.24:
                self.branch()
            elif roll < 0.32:
                self.loop()
            elif roll < 0.38:
                self.memcpy()
            elif roll < 0.43 and subroutines:
                self.call(subroutines)
            elif roll < 0.46 and len(self.budget.indirect) < MAX_INDIRECT_SITES:
                self.received_target(subroutines)
            else:
                self.simple()


def shared_slot(child: int) -> int:
    return SHARED_BASE + child * SHARED_SLOT


def _compose(seed: int, max_instructions: int) -> Tuple[str, Dict[str, str]]:
    rng = random.Random(seed)
    threads = rng.randint(1, MAX_THREADS)
    budget = _Budget(instructions=max_instructions - 24 * threads - 24)
    quota = budget.instructions // (threads + 1)

    subroutines = [f"sub{i}" for i in range(rng.randint(0, 2))]
    lines = [f"; random program, seed {seed}, {threads} threads", ".entry main"]
    for tid in range(threads):
        region = bytes(rng.getrandbits(8) for _ in range(REGION_SIZE))
        base = REGION_BASE + tid * REGION_STRIDE
        for chunk in range(0, REGION_SIZE, 64):
            lines.append(f".data {base + chunk:#x} " + " ".join(str(b) for b in region[chunk:chunk + 64]))
    for child in range(1, threads):
        lines.append(f".data {shared_slot(child):#x} " + " ".join("0" for _ in range(SHARED_SLOT)))

    main = _ThreadWriter(0, rng, budget)
    main.place('main')
    for child in range(1, threads):
        main.emit(f"MOVRI r1, @thread{child}", f"MOVRI r2, {child}", "SYSCALL SPAWN")
    main.body(main.emitted + quota, subroutines)
    for child in range(1, threads):
        main.emit(f"MOVRI r1, {child}", "SYSCALL WAIT")
        main.consume(child)
    main.emit("MOVRI r1, 0", "SYSCALL EXIT")
    lines.extend(main.lines)

    for child in range(1, threads):
        writer = _ThreadWriter(child, rng, budget)
        writer.place(f"thread{child}")
        writer.body(quota, subroutines)
        writer.publish()
        writer.emit(f"MOVRI r1, {child}", "SYSCALL SIGNAL", "MOVRI r1, 0", "SYSCALL EXIT")
        lines.extend(writer.lines)

    for name in subroutines:
        lines.append(f"{name}:")
        for _ in range(rng.randint(1, 4)):
            op = rng.choice(ALU)
            lines.append(f"    {op} r{rng.choice(VALUE_REGS)}, r{rng.choice(VALUE_REGS)}")
        lines.append("    RET")
    return "\n".join(lines) + "\n", budget.indirect


def generate_source(seed: int, max_instructions: int = MAX_INSTRUCTIONS) -> str:
    """
    Generate the assembly text of one random program.

    Args:
        seed: Generator seed; the same seed always yields the same text
        max_instructions: Instruction limit of the whole program

    Returns:
        Assembly source text
    """
    return _compose(seed, max_instructions)[0]


def generate_inputs(seed: int) -> Dict[str, bytes]:
    rng = random.Random(seed ^ 0x5EED)
    inputs = {}
    for stream in range(INPUT_STREAMS):
        for prefix in ('net', 'file'):
            inputs[f"{prefix}:{stream}"] = bytes(rng.getrandbits(8) for _ in range(rng.randrange(16, 257)))
    return inputs


def generate_workload(seed: int, max_instructions: Optional[int] = None) -> Workload:
    """Generate and assemble a random workload named 'random:<seed>'."""
    source, indirect = _compose(seed, max_instructions or MAX_INSTRUCTIONS)
    program = assemble(source)
    inputs = generate_inputs(seed)
    for stream, label in indirect.items():
        inputs[stream] = struct.pack('<Q', program.labels[label])
    threads = 1 + sum(1 for line in source.splitlines() if line.strip() == "SYSCALL SPAWN")
    return Workload(id=f"random:{seed}", description=f"random program (seed {seed})", program=program,
                    inputs=inputs, threads=threads, source=source)
