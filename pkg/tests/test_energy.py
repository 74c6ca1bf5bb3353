import json
import random
from dataclasses import replace
from types import SimpleNamespace

import pytest

from approx_rv.energy import (
    CSV_COLUMNS,
    UNITS,
    EnergyEvent,
    EnergyLedger,
    EnergyReport,
    finalize,
    improvement,
    improvement_table,
    load_cost_model,
    shipped_cost_models,
    summary_across_apps,
)
from approx_rv.harness import run_request
from approx_rv.kernels import default_spec, generate
from approx_rv.machine import load_program, run, step
from approx_rv.models import MulConfig, RunRequest, SlotKind

CLOCK = 5e8
APPS = ("conv2d3x3", "conv2d5x5", "fir_int", "iir_int", "matmul_int", "nr_solver", "factorial")


def _table(**powers):
    units = {unit: 0 for unit in UNITS}
    units.update(powers)
    return load_cost_model({"mode": "table", "name": "test", "clock_hz": CLOCK, "units": units})


def _totals(instret, cycle):
    return SimpleNamespace(instret=instret, cycle=cycle, elapsed_s=cycle / CLOCK)


def _profile_report(model, profile):
    ledger = EnergyLedger(model.for_profile(profile))
    ledger.accrue(EnergyEvent("other", 0, "other", 1000))
    return ledger.finalize(_totals(1000, 1000))


def _random_report(rng):
    powers = {unit: rng.uniform(0.01, 1.0) for unit in UNITS}
    exe = powers["MUL"] + powers["ALU"] + powers["DIV"]
    total = sum(powers.values())
    return EnergyReport(
        profile="random",
        mode="table",
        instret=1,
        cycle=1,
        elapsed_s=1.0,
        per_unit_pj={},
        slot_pj={},
        total_pj=0.0,
        pj_per_instr=0.0,
        unit_power_mw=powers,
        exe_power_mw=exe,
        total_power_mw=total,
        power_shares={},
        exe_share=exe / total,
    )


@pytest.fixture(scope="module")
def shipped():
    return load_cost_model("tables_accurate.json"), load_cost_model("tables_approx.json")


def test_shipped_models_are_listed():
    assert {"tables_accurate.json", "tables_approx.json", "event_default.json"} <= set(shipped_cost_models())


def test_energy_is_power_times_time():
    ledger = EnergyLedger(_table(MUL=1))
    ledger.accrue(EnergyEvent("MUL", 0, "mul", 500))

    assert ledger.per_unit()["MUL"] == pytest.approx(1000.0)


def test_pj_per_instruction_from_total_power():
    ledger = EnergyLedger(_table(IFID=5.279))
    for _ in range(1000):
        ledger.accrue(EnergyEvent("ALU", 0, "add", 1))
    report = finalize(ledger, _totals(1000, 1000))

    assert report.pj_per_instr == pytest.approx(10.558)
    assert report.total_power_mw == pytest.approx(5.279)


def test_finalize_rejects_empty_runs():
    with pytest.raises(ValueError):
        finalize(EnergyLedger(_table(MUL=1)), _totals(0, 0))


def test_matmul_improvements(shipped):
    accurate, approx = shipped
    base = _profile_report(accurate, "matmul_int")
    cheap = _profile_report(approx, "matmul_int")

    assert improvement(base, cheap, "mul") == pytest.approx(71.16, abs=0.05)
    assert improvement(base, cheap, "exe") == pytest.approx(18.05, abs=0.05)
    assert base.exe_power_mw == pytest.approx(1.590)
    assert base.total_power_mw == pytest.approx(1.9875)


def test_average_improvements_across_apps(shipped):
    accurate, approx = shipped
    pairs = [(_profile_report(accurate, app), _profile_report(approx, app)) for app in APPS]
    averages = summary_across_apps(pairs)

    assert averages["avg_mul_improvement"] == pytest.approx(60.83, abs=0.05)
    assert averages["avg_exe_improvement"] == pytest.approx(14.64, abs=0.05)


def test_improvement_table_rows(shipped):
    accurate, approx = shipped
    rows = improvement_table(
        [("matmul_int", _profile_report(accurate, "matmul_int"), _profile_report(approx, "matmul_int"))]
    )

    assert rows[0]["app"] == "matmul_int"
    assert {"total_improvement", "exe_improvement", "mul_improvement"} <= set(rows[0])


def test_improvement_of_identical_reports_is_zero():
    report = _random_report(random.Random(1))

    for scope in ("total", "exe", "mul"):
        assert improvement(report, report, scope) == 0.0


def test_improvement_errors():
    report = _random_report(random.Random(2))
    silent = replace(report, total_power_mw=0.0)

    with pytest.raises(ValueError):
        improvement(silent, report)
    with pytest.raises(ValueError):
        improvement(report, report, "cache")
    with pytest.raises(ValueError):
        summary_across_apps([])


def test_improvement_antisymmetry_on_random_reports():
    rng = random.Random(10)
    for _ in range(10_000):
        a, b = _random_report(rng), _random_report(rng)
        forward = improvement(a, b)
        backward = improvement(b, a)
        assert forward == pytest.approx(-backward * b.total_power_mw / a.total_power_mw)


def test_ledger_is_additive_over_segments():
    model = load_cost_model("event_default.json")
    rng = random.Random(5)
    events = [
        EnergyEvent(
            unit=rng.choice(["ALU", "MUL", "other"]),
            slot=0,
            op_class="add",
            cycles=rng.randint(1, 4),
            selection=(("ALU", 0, SlotKind.APPROXIMATE), ("MUL", 0, SlotKind.ACCURATE), ("DIV", 0, SlotKind.ACCURATE)),
        )
        for _ in range(200)
    ]
    whole = EnergyLedger(model)
    first, second = EnergyLedger(model), EnergyLedger(model)
    for index, event in enumerate(events):
        whole.accrue(event)
        (first if index < 120 else second).accrue(event)
    merged = first.merge(second)

    assert merged.cycles == whole.cycles
    for unit, pj in whole.per_unit().items():
        assert merged.per_unit()[unit] == pytest.approx(pj)


def test_approximate_multiplier_energy_grows_with_accurate_lines():
    model = load_cost_model("event_default.json")
    previous = None
    for mask in (0x00, 0x01, 0x03, 0x0F, 0x3F, 0x7F):
        slot = model.event_units["MUL"][1]
        pj = slot.op_energy_pj("mul", 4, model.clock_hz, MulConfig(error_mask=mask))
        if previous is not None:
            assert pj > previous
        previous = pj


def _mul_event(cycles=4):
    return EnergyEvent(
        unit="MUL",
        slot=1,
        op_class="mul",
        cycles=cycles,
        selection=(("ALU", 0, SlotKind.APPROXIMATE), ("MUL", 1, SlotKind.APPROXIMATE), ("DIV", 0, SlotKind.ACCURATE)),
        mul_config=MulConfig(error_mask=0x7E),
    )


def test_gating_switches_off_unselected_slots():
    model = load_cost_model("event_default.json")
    gated = EnergyLedger(model).accrue(_mul_event())
    ungated = EnergyLedger(model.with_gating(False)).accrue(_mul_event())

    assert ("MUL", 0) not in gated.slot_energy
    assert ungated.slot_energy[("MUL", 0)] > 0.0
    assert sum(gated.per_unit().values()) < sum(ungated.per_unit().values())


def test_gated_kernel_run_uses_less_energy():
    model = load_cost_model("event_default.json")
    request = RunRequest(kernel=default_spec("matmul_int", n=4), mulcsr=0x007E0003)
    gated = run_request(request, model)
    ungated = run_request(request, model.with_gating(False))

    assert gated.ok and ungated.ok
    assert gated.report.total_pj < ungated.report.total_pj
    assert "MUL:0" not in gated.report.slot_pj


def test_event_model_charges_unknown_slot_as_error():
    model = load_cost_model("event_default.json")
    event = replace(_mul_event(), slot=3, selection=(("MUL", 3, SlotKind.APPROXIMATE),))

    with pytest.raises(KeyError):
        EnergyLedger(model).accrue(event)


def test_invalid_documents_are_rejected(tmp_path):
    with pytest.raises(ValueError):
        load_cost_model({})
    with pytest.raises(ValueError):
        load_cost_model({"mode": "spice", "units": {}})
    with pytest.raises(ValueError):
        load_cost_model({"mode": "table", "units": {"MUL": 1}})
    units = {unit: 1 for unit in UNITS}
    with pytest.raises(ValueError):
        load_cost_model({"mode": "table", "units": {**units, "FPU": 1}})
    with pytest.raises(ValueError):
        load_cost_model({"mode": "table", "units": {**units, "MUL": -1}})
    with pytest.raises(FileNotFoundError):
        load_cost_model(tmp_path / "missing.json")


def test_cost_model_from_path_with_slot_kinds(tmp_path):
    units = {unit: 0.5 for unit in UNITS}
    units["MUL"] = {"accurate": 0.4, "approximate": 0.1}
    path = tmp_path / "model.json"
    path.write_text(json.dumps({"mode": "table", "units": units}), encoding="utf-8")
    model = load_cost_model(path)

    assert model.unit_power_mw("MUL", SlotKind.APPROXIMATE) == 0.1
    assert model.unit_power_mw("MUL") == 0.4
    assert model.unit_power_mw("ALU", SlotKind.APPROXIMATE) == 0.5


def test_csv_row_has_every_column(shipped):
    row = _profile_report(shipped[0], "fir_int").to_csv_row()

    assert list(row) == CSV_COLUMNS


def test_executing_slot_overrides_csr_selection():
    model = load_cost_model("event_default.json")
    event = replace(_mul_event(), slot=0, op_class="mulh", mul_config=None)
    ledger = EnergyLedger(model).accrue(event)

    assert ledger.slot_energy[("MUL", 0)] == pytest.approx(0.10 * 4 / CLOCK * 1e9 + 0.88)
    assert ("MUL", 1) not in ledger.slot_energy


def _alu_kind_model():
    units = {unit: 0.0 for unit in UNITS}
    units["ALU"] = {"accurate": 1.0, "approximate": 0.5}
    return load_cost_model({"mode": "table", "name": "alu-kinds", "clock_hz": CLOCK, "units": units})


def test_disabled_alu_is_charged_accurate_power():
    outcome = run_request(RunRequest(kernel=default_spec("factorial")), _alu_kind_model())

    assert outcome.ok
    assert outcome.report.unit_power_mw["ALU"] == pytest.approx(1.0)


def test_enabled_alu_is_charged_approximate_power():
    # Slot 0 enabled with every error line accurate keeps results exact.
    request = RunRequest(kernel=default_spec("factorial"), alucsr=0xFFFF0001)
    outcome = run_request(request, _alu_kind_model())

    assert outcome.ok
    assert outcome.output_error["er"] == 0.0
    assert outcome.report.unit_power_mw["ALU"] == pytest.approx(0.5)


def test_table_energy_of_a_run_is_the_sum_of_its_segments():
    model = load_cost_model("tables_accurate.json").for_profile("matmul_int")
    image = generate(default_spec("matmul_int", n=4)).image()
    whole = EnergyLedger(model)
    run(load_program(image, ledger=whole))

    first, second = EnergyLedger(model), EnergyLedger(model)
    state = load_program(image, ledger=first)
    for _ in range(150):
        step(state)
    state.ledger = second
    run(state)

    assert first.cycles + second.cycles == whole.cycles
    for unit, pj in whole.per_unit().items():
        assert first.per_unit()[unit] + second.per_unit()[unit] == pytest.approx(pj)
    total = whole.finalize(_totals(state.instret, whole.cycles)).total_pj
    parts = [
        first.finalize(_totals(150, first.cycles)).total_pj,
        second.finalize(_totals(state.instret - 150, second.cycles)).total_pj,
    ]
    assert sum(parts) == pytest.approx(total)
