import pytest

from approx_rv.circuits import approx_mul8
from approx_rv.isa import (
    CSR_INSTRET,
    ConfigurationFault,
    CsrFile,
    IllegalInstruction,
    address_gen,
    csr_access,
    decode,
    disassemble,
    execute_arith,
    select_circuit,
)
from approx_rv.kernels import encode
from approx_rv.models import MulConfig, SlotKind

MASK = 0xFFFFFFFF
APPROX_MUL = 0x007E0003


def _regs(**values):
    regs = [0] * 16
    for name, value in values.items():
        regs[int(name[1:])] = value & MASK
    return regs


def _exec(mnemonic, *operands, csrs=None, regs=None):
    instr = decode(encode(mnemonic, *operands))
    return execute_arith(instr, regs or [0] * 16, csrs or CsrFile())


@pytest.mark.parametrize(
    ("word", "mnemonic", "fields"),
    [
        (0x003100B3, "add", {"rd": 1, "rs1": 2, "rs2": 3}),
        (0x403100B3, "sub", {"rd": 1, "rs1": 2, "rs2": 3}),
        (0x02B50533, "mul", {"rd": 10, "rs1": 10, "rs2": 11}),
        (0x02C5C533, "div", {"rd": 10, "rs1": 11, "rs2": 12}),
        (0xFFF00093, "addi", {"rd": 1, "rs1": 0, "imm": -1}),
        (0x40315093, "srai", {"rd": 1, "rs1": 2, "imm": 3}),
        (0x00812283, "lw", {"rd": 5, "rs1": 2, "imm": 8}),
        (0x00512623, "sw", {"rs1": 2, "rs2": 5, "imm": 12}),
        (0xFE208EE3, "beq", {"rs1": 1, "rs2": 2, "imm": -4}),
        (0x008000EF, "jal", {"rd": 1, "imm": 8}),
        (0x123452B7, "lui", {"rd": 5, "imm": 0x12345000}),
        (0x80129073, "csrrw", {"rd": 0, "rs1": 5, "csr": 0x801}),
        (0x00000073, "ecall", {}),
        (0x00100073, "ebreak", {}),
    ],
)
def test_decode_known_encodings(word, mnemonic, fields):
    instr = decode(word)

    assert instr.mnemonic == mnemonic
    for name, value in fields.items():
        assert getattr(instr, name) == value


@pytest.mark.parametrize(
    ("word", "text"),
    [
        (0x003100B3, "add x1, x2, x3"),
        (0x00812283, "lw x5, 8(x2)"),
        (0x00512623, "sw x5, 12(x2)"),
        (0x80129073, "csrrw x0, 0x801, x5"),
    ],
)
def test_disassemble(word, text):
    assert disassemble(decode(word)) == text


def test_encoder_agrees_with_decoder_on_every_mnemonic():
    samples = [
        ("add", 1, 2, 3), ("sub", 1, 2, 3), ("sll", 1, 2, 3), ("slt", 1, 2, 3),
        ("sltu", 1, 2, 3), ("xor", 1, 2, 3), ("srl", 1, 2, 3), ("sra", 1, 2, 3),
        ("or", 1, 2, 3), ("and", 1, 2, 3), ("mul", 4, 5, 6), ("mulh", 4, 5, 6),
        ("mulhsu", 4, 5, 6), ("mulhu", 4, 5, 6), ("div", 4, 5, 6), ("divu", 4, 5, 6),
        ("rem", 4, 5, 6), ("remu", 4, 5, 6), ("addi", 1, 2, -7), ("slti", 1, 2, 5),
        ("sltiu", 1, 2, 5), ("xori", 1, 2, -1), ("ori", 1, 2, 8), ("andi", 1, 2, 15),
        ("slli", 1, 2, 31), ("srli", 1, 2, 1), ("srai", 1, 2, 4), ("lb", 1, -4, 2),
        ("lh", 1, 2, 2), ("lw", 1, 8, 2), ("lbu", 1, 3, 2), ("lhu", 1, 6, 2),
        ("sb", 1, -1, 2), ("sh", 1, 2, 2), ("sw", 1, 2044, 2), ("beq", 1, 2, -4096),
        ("bne", 1, 2, 8), ("blt", 1, 2, 12), ("bge", 1, 2, -2), ("bltu", 1, 2, 4094),
        ("bgeu", 1, 2, 16), ("jal", 1, -8), ("jalr", 1, 4, 2), ("lui", 3, 0xFFFFF),
        ("auipc", 3, 1), ("csrrs", 2, 0xC02, 0), ("csrrc", 2, 0x800, 3),
        ("csrrwi", 2, 0x802, 31), ("csrrsi", 0, 0x801, 1), ("csrrci", 0, 0x801, 1),
    ]
    for mnemonic, *operands in samples:
        instr = decode(encode(mnemonic, *operands))
        assert instr.mnemonic == mnemonic


def test_rv32e_rejects_upper_registers():
    with pytest.raises(IllegalInstruction) as excinfo:
        decode(0x00000833, pc=0x40)

    assert excinfo.value.pc == 0x40
    assert excinfo.value.raw == 0x00000833
    assert decode(0x00000833, num_regs=32).rd == 16


@pytest.mark.parametrize("word", [0xFFFFFFFF, 0x00000000, 0x00200073, 0x0000707B])
def test_undefined_words_are_illegal(word):
    with pytest.raises(IllegalInstruction):
        decode(word)


def test_csrrw_returns_previous_value_and_installs_new():
    csrs = CsrFile(mulcsr=0x11)

    assert csr_access(csrs, "csrrw", 0x801, APPROX_MUL) == 0x11
    assert csrs.mulcsr == APPROX_MUL


def test_csrrs_reads_instret_without_modification():
    csrs = CsrFile(instret=42)

    assert csr_access(csrs, "csrrs", CSR_INSTRET, 0) == 42
    assert csrs.instret == 42


def test_set_and_clear_forms():
    csrs = CsrFile(alucsr=0x0F)
    csr_access(csrs, "csrrs", 0x800, 0x30)
    assert csrs.alucsr == 0x3F
    csr_access(csrs, "csrrci", 0x800, 0x01)
    assert csrs.alucsr == 0x3E


def test_counter_writes_trap():
    with pytest.raises(IllegalInstruction):
        csr_access(CsrFile(), "csrrw", 0xC00, 5)


def test_unimplemented_csr_traps():
    with pytest.raises(IllegalInstruction):
        csr_access(CsrFile(), "csrrs", 0x7C0, 0)


def test_counters_expose_high_halves():
    csrs = CsrFile(cycle=(3 << 32) | 7)

    assert csrs.read(0xC00) == 7
    assert csrs.read(0xC80) == 3


def test_approximate_mul_uses_8x8_error_mask():
    csrs = CsrFile(mulcsr=APPROX_MUL)
    value = _exec("mul", 10, 10, 11, csrs=csrs, regs=_regs(x10=200, x11=123))

    assert value == approx_mul8(200, 123, MulConfig(error_mask=0x7E))


def test_disabled_mulcsr_gives_exact_product():
    assert _exec("mul", 10, 10, 11, regs=_regs(x10=200, x11=123)) == 24600


def test_disable_bit_dominates_circuit_select():
    csrs = CsrFile(mulcsr=0x00000002)
    route = select_circuit("MUL", "mul", csrs)

    assert route.slot == 0
    assert route.kind is SlotKind.ACCURATE


def test_empty_slot_is_a_configuration_fault():
    with pytest.raises(ConfigurationFault):
        _exec("mul", 1, 2, 3, csrs=CsrFile(mulcsr=0x00000005))
    with pytest.raises(ConfigurationFault):
        select_circuit("DIV", "div", CsrFile(divcsr=0x00000003))


def test_mulhu_and_mulhsu_stay_on_accurate_slot():
    csrs = CsrFile(mulcsr=0x00000003)
    regs = _regs(x1=0xFFFFFFFF, x2=0xFFFFFFFF)

    assert select_circuit("MUL", "mulhu", csrs).slot == 0
    assert _exec("mulhu", 3, 1, 2, csrs=csrs, regs=regs) == 0xFFFFFFFE
    assert _exec("mulhsu", 3, 1, 2, csrs=csrs, regs=regs) == 0xFFFFFFFF


def test_mulh_sign_grid_through_accurate_mask_on_approximate_slot():
    csrs = CsrFile(mulcsr=0x007F0003)
    for x in range(-8, 8):
        for y in range(-8, 8):
            regs = _regs(x1=x, x2=y)
            assert _exec("mul", 3, 1, 2, csrs=csrs, regs=regs) == (x * y) & MASK
            assert _exec("mulh", 3, 1, 2, csrs=csrs, regs=regs) == ((x * y) >> 32) & MASK
            assert _exec("mulh", 3, 1, 2, regs=regs) == ((x * y) >> 32) & MASK


def test_division_edge_cases_through_execute():
    regs = _regs(x1=0x80000000, x2=-1, x3=0)

    assert _exec("div", 4, 1, 2, regs=regs) == 0x80000000
    assert _exec("rem", 4, 1, 2, regs=regs) == 0
    assert _exec("divu", 4, 1, 3, regs=regs) == MASK
    assert _exec("remu", 4, 1, 3, regs=regs) == 0x80000000


def test_alu_add_follows_alucsr():
    regs = _regs(x1=0x1234, x2=0x4321)
    exact = 0x1234 + 0x4321

    assert _exec("add", 3, 1, 2, regs=regs) == exact
    assert _exec("add", 3, 1, 2, csrs=CsrFile(alucsr=0xFFFF0001), regs=regs) == exact
    approximate = _exec("add", 3, 1, 2, csrs=CsrFile(alucsr=0x00000001), regs=regs)
    assert approximate >> 16 == exact >> 16


def test_addi_with_zero_source_under_full_approximation():
    # the approximate sum bit passes operand a through, which is x0 here
    csrs = CsrFile(alucsr=0x00000001)

    assert _exec("addi", 1, 0, 6, csrs=csrs) == 0


def test_logic_and_shift_ops_are_exact():
    regs = _regs(x1=0xF0F0F0F0, x2=4)

    assert _exec("sll", 3, 1, 2, regs=regs) == 0x0F0F0F00
    assert _exec("srai", 3, 1, 4, regs=regs) == 0xFF0F0F0F
    assert _exec("sltu", 3, 2, 1, regs=regs) == 1
    assert _exec("slt", 3, 2, 1, regs=regs) == 0
    assert _exec("xori", 3, 1, -1, regs=regs) == 0x0F0F0F0F


def test_address_generation_is_exact():
    assert address_gen(0x1000, -4) == 0x0FFC
    assert address_gen(0xFFFFFFFC, 8) == 4
