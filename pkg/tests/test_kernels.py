import pytest

from approx_rv.error_analysis import app_output_error, matmul_error_bound
from approx_rv.kernels import (
    DATA_BASE,
    KERNELS,
    ProgramBuilder,
    csr_prologue,
    default_spec,
    encode,
    generate,
    instruction_mix,
)
from approx_rv.machine import load_program, run
from approx_rv.models import ApproxControlWord, KernelSpec, MulConfig
from approx_rv.storage import words_to_bytes

FULLY_APPROXIMATE_MUL = ApproxControlWord.for_multiplier(slot=1, error_mask=0x00).to_word()
DEFAULT_APPROX_MUL = ApproxControlWord.for_multiplier(slot=1, error_mask=0x7E).to_word()


def _run(program, mulcsr=0, **kwargs):
    state = load_program(program.image(), **kwargs)
    state.apply_csr_presets({0x801: mulcsr})
    return run(state)


@pytest.mark.parametrize(
    ("args", "word"),
    [
        (("add", 1, 2, 3), 0x003100B3),
        (("mul", 10, 10, 11), 0x02B50533),
        (("csrrw", 0, 0x801, 5), 0x80129073),
        (("addi", 1, 0, -1), 0xFFF00093),
        (("lw", 5, 8, 2), 0x00812283),
        (("sw", 5, 12, 2), 0x00512623),
        (("beq", 1, 2, -4), 0xFE208EE3),
        (("jal", 1, 8), 0x008000EF),
        (("lui", 5, 0x12345), 0x123452B7),
        (("ebreak",), 0x00100073),
        (("ecall",), 0x00000073),
        (("fence",), 0x0FF0000F),
    ],
)
def test_encode_known_words(args, word):
    assert encode(*args) == word


def test_encode_rejects_out_of_range_operands():
    with pytest.raises(ValueError):
        encode("addi", 1, 0, 2048)
    with pytest.raises(ValueError):
        encode("add", 16, 0, 0)
    with pytest.raises(ValueError):
        encode("beq", 1, 2, 3)
    with pytest.raises(ValueError):
        encode("fmul", 1, 2, 3)
    assert encode("add", 16, 0, 0, num_regs=32) == 0x00000833


@pytest.mark.parametrize("value", [0, 2047, -2048, 2048, 0x12345FFF, 0x80000000, 0xFFFFF800, 0x7FFFFFFF])
def test_li_materialises_any_word(value):
    b = ProgramBuilder().li(1, value).emit("ebreak")
    state = load_program(words_to_bytes(b.words))
    run(state)

    assert state.regs[1] == value & 0xFFFFFFFF


def test_factorial_reference_and_run():
    program = generate(default_spec("factorial"))
    summary = _run(program)

    assert program.reference[-1] == 3628800
    assert summary.output == program.reference
    assert summary.class_counts["mul"] == 10


def test_matmul_mul_count_matches_trace():
    program = generate(default_spec("matmul"))
    summary = _run(program)

    assert program.mul_count == 512
    assert summary.class_counts["mul"] == 512


@pytest.mark.parametrize("name", sorted(KERNELS))
@pytest.mark.parametrize("seed", range(5))
def test_accurate_runs_reproduce_host_reference(name, seed):
    program = generate(default_spec(name, seed))
    summary = _run(program)

    assert summary.halt.ok
    assert summary.halt.exit_code == 0
    assert summary.output == program.reference
    assert summary.class_counts.get("mul", 0) == program.mul_count


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_control_flow_is_invariant_under_multiplier_approximation(name):
    program = generate(default_spec(name, 1))
    accurate = _run(program)
    approximate = _run(program, mulcsr=FULLY_APPROXIMATE_MUL)

    assert approximate.halt.ok
    assert approximate.instret == accurate.instret
    assert approximate.pc_trace_hash == accurate.pc_trace_hash
    assert approximate.addr_trace_hash == accurate.addr_trace_hash


def test_approximate_matmul_changes_outputs_within_bound():
    program = generate(default_spec("matmul_int", 3))
    summary = _run(program, mulcsr=DEFAULT_APPROX_MUL)
    n = program.spec.params["n"]
    bound = matmul_error_bound(program.reference, n, MulConfig(error_mask=0x7E))
    error = app_output_error(program.reference, summary.output)

    assert error["er"] > 0.0
    assert error["max_ed"] <= bound["per_output"]
    assert error["mred"] <= bound["mred_bound"]


def test_generation_is_deterministic_per_seed():
    assert generate(default_spec("fir_int", 2)) == generate(default_spec("fir", 2))
    assert generate(default_spec("fir_int", 2)).data != generate(default_spec("fir_int", 3)).data


def test_image_places_data_at_data_base():
    program = generate(default_spec("matmul_int", n=2))
    image = program.image()

    assert image[: len(program.words) * 4] == words_to_bytes(program.words)
    assert image[DATA_BASE:] == program.data


def test_prologue_installs_presets_as_instructions():
    program = generate(default_spec("matmul_int", n=4))
    presets = {0x800: 0, 0x801: DEFAULT_APPROX_MUL, 0x802: 0}
    prologue = csr_prologue(presets)
    with_prologue = run(load_program(program.with_prologue(prologue).image()))
    preset = _run(program, mulcsr=DEFAULT_APPROX_MUL)

    assert with_prologue.output == preset.output
    assert with_prologue.instret == preset.instret + len(prologue)


def test_unknown_kernels_and_parameters():
    with pytest.raises(KeyError):
        default_spec("sobel")
    with pytest.raises(ValueError):
        default_spec("matmul_int", size=3)
    with pytest.raises(ValueError):
        generate(KernelSpec(name="factorial", params={"n": 3, "m": 1}))
    with pytest.raises(ValueError):
        generate(default_spec("conv2d5x5", height=4))


def test_instruction_mix_from_counts_and_trace():
    mix = instruction_mix({"add": 6, "mul": 2, "load": 4})

    assert mix.total == 12
    assert mix.arithmetic == 8
    assert mix.mul_share == pytest.approx(0.25)
    assert instruction_mix({}).mul_share == 0.0

    b = ProgramBuilder().emit("addi", 1, 0, 3).emit("mul", 2, 1, 1).emit("ebreak")
    state = load_program(words_to_bytes(b.words), trace=True)
    run(state)
    traced = instruction_mix(state.trace)
    assert traced.counts["mul"] == 1
    assert traced.counts["add"] == 1
    assert traced.counts["other"] == 1
