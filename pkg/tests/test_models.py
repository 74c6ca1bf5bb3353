import random

import pytest

from approx_rv.models import (
    AdderConfig,
    ApproxControlWord,
    CircuitSlot,
    CircuitSlotTable,
    KernelSpec,
    Latencies,
    MachineConfig,
    MulConfig,
    RunRequest,
    SlotKind,
)


def test_control_word_fields():
    word = ApproxControlWord.from_word(0x007E0003)

    assert word.enable == 1
    assert word.circuit_select == 1
    assert word.truncation == 0
    assert word.error_field == 0x007E
    assert word.active_slot == 1
    assert word.mul_config() == MulConfig(error_mask=0x7E)
    assert word.describe()["raw"] == "0x007e0003"


def test_control_word_round_trips_every_word():
    rng = random.Random(0)
    for _ in range(1_000_000):
        word = rng.getrandbits(32)
        assert ApproxControlWord.from_word(word).to_word() == word


def test_for_multiplier_builds_default_word():
    assert ApproxControlWord.for_multiplier(slot=1, error_mask=0x7E).to_word() == 0x007E0003
    assert ApproxControlWord.for_multiplier(slot=1, error_mask=0x00, truncation=3).to_word() == 0x0000001B


def test_disabled_word_selects_slot_zero():
    assert ApproxControlWord.from_word(0x00000006).active_slot == 0


@pytest.mark.parametrize(
    "kwargs",
    [{"enable": 2}, {"circuit_select": 4}, {"truncation": 32}, {"custom_a": 16}, {"error_field": 1 << 16}],
)
def test_control_word_rejects_wide_fields(kwargs):
    with pytest.raises(ValueError):
        ApproxControlWord(**kwargs)


def test_adder_config_keeps_upper_half_accurate():
    cfg = AdderConfig(error_mask=0)

    assert cfg.effective_mask == 0xFFFF0000
    assert not cfg.is_exact
    assert AdderConfig(error_mask=0x0000FFFF).is_exact
    assert ApproxControlWord.from_word(0x0001FFFF).adder_config().error_mask == 0x0001
    with pytest.raises(ValueError):
        AdderConfig(carry_in=2)


def test_mul_config_validation():
    assert MulConfig().is_exact
    assert not MulConfig(error_mask=0x7F, truncation=1).is_exact
    with pytest.raises(ValueError):
        MulConfig(error_mask=0x80)
    with pytest.raises(ValueError):
        MulConfig(truncation=32)


def test_default_slot_table():
    slots = CircuitSlotTable.default_build()

    assert slots.slot("MUL", 0).kind is SlotKind.ACCURATE
    assert slots.slot("MUL", 1).kind is SlotKind.APPROXIMATE
    assert slots.slot("MUL", 2) is None
    assert set(slots.occupied("ALU")) == {0}
    with pytest.raises(KeyError):
        slots.slot("FPU", 0)
    with pytest.raises(ValueError):
        CircuitSlotTable(units={"MUL": (CircuitSlot(SlotKind.ACCURATE),)})


def test_machine_config_validation_and_dict_round_trip():
    config = MachineConfig(latencies=Latencies(mul_cycles=3), num_regs=32)

    assert MachineConfig.from_dict(config.to_dict()) == config
    with pytest.raises(ValueError):
        MachineConfig(num_regs=8)
    with pytest.raises(ValueError):
        MachineConfig(base=2)
    with pytest.raises(ValueError):
        Latencies(div_cycles=0)


def test_run_request_needs_exactly_one_source():
    with pytest.raises(ValueError):
        RunRequest()
    with pytest.raises(ValueError):
        RunRequest(kernel=KernelSpec("factorial"), bin_path="prog.bin")
    with pytest.raises(ValueError):
        RunRequest(bin_path="prog.bin", mulcsr=1 << 32)
    with pytest.raises(ValueError):
        RunRequest(bin_path="prog.bin", report_format="xml")

    request = RunRequest(bin_path="prog.bin", alucsr=1, mulcsr=2, divcsr=3)
    assert request.csr_presets == {0x800: 1, 0x801: 2, 0x802: 3}


def test_kernel_spec_rejects_non_positive_params():
    with pytest.raises(ValueError):
        KernelSpec("matmul_int", params={"n": 0})
