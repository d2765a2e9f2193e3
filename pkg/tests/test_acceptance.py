"""End-to-end acceptance: reference programs, corpus sweeps, and budgets.

Each test pins a behavior the package promises as a whole: exact signatures
for the reference programs, reproducible runs, a misuse-free corpus under
many seeds, rejection of mutated programs by both the inference and the
declarative route, the session-algebra laws at scale, agreement between the
two checking routes, and budget-bounded recursion.
"""

from __future__ import annotations

import time

import pytest

from sessionpi.cli import main as cli_main, signature_matches
from sessionpi.core import (
    BOT,
    CLOSE,
    END,
    INT,
    Bot,
    Close,
    CompUndefined,
    DualUndefined,
    End,
    NotGround,
    Rec,
    Send,
    UVar,
    comp,
    dual,
)
from sessionpi.infer import EndedTailR, Inference
from sessionpi.oracle import Checker, OutsideFragment, elaborate
from sessionpi.runtime import Runner, prepare, run
from sessionpi.surface import parse_program

from conftest import (
    corpus_path,
    corpus_text,
    expected_log,
    expected_signatures,
    load_corpus_program,
    script_lines,
)
from mutant_catalog import MUTANTS, apply_mutant
from test_core import sample_types
from test_infer import CALC_FIXTURE, PQ_FIXTURE
from test_oracle import ExhaustiveChecker, component_count


def timed_infer(text: str):
    program = parse_program(text)
    start = time.perf_counter()
    sigs = Inference(program).infer_all()
    return sigs, time.perf_counter() - start


# --------------------------------------------------------------------------
# 1. the reference programs infer their exact signatures, quickly


def test_c1_reference_signatures():
    sigs, elapsed = timed_infer(CALC_FIXTURE)
    assert elapsed < 1.0
    assert signature_matches(
        sigs["server"],
        "(Recv Int (Recv Int (Offer (Send Int a) (Send Bool a))), a)",
    )
    assert signature_matches(
        sigs["client"],
        "(Send Int (Send Int (Select a (Recv Bool b))), b)",
    )
    assert signature_matches(sigs["calc"], "(Bot, End)")

    sigs, elapsed = timed_infer(corpus_text("twochan.pi"))
    assert elapsed < 1.0
    assert signature_matches(
        sigs["emitter"],
        "(ss :> Send String a :> Send Bool b, ss :> a :> b)",
    )

    sigs, elapsed = timed_infer(corpus_text("smtp.pi"))
    assert elapsed < 1.0
    send_mail = sigs["sendMail"]
    assert any(isinstance(r, EndedTailR) for r in send_mail.residual)
    line = next(
        l for l in expected_signatures("smtp.expect") if l.startswith("sendMail")
    )
    _, _, text = line.partition("::")
    assert signature_matches(send_mail, text.strip())


# --------------------------------------------------------------------------
# 2. the reference programs run reproducibly on every seed, quickly


def run_fixture_on_seeds(text_or_program, golden, script=None):
    program = (
        parse_program(text_or_program)
        if isinstance(text_or_program, str)
        else text_or_program
    )
    inference = prepare(program)
    for seed in range(10):
        start = time.perf_counter()
        result = Runner(
            program, seed=seed, script=script, inference=inference
        ).run()
        assert time.perf_counter() - start < 1.0
        assert result.status == "done", f"seed {seed}: {result.status}"
        assert result.effects == golden, f"seed {seed}"


def test_c2_reference_runs():
    run_fixture_on_seeds(CALC_FIXTURE, ["PRINT Lesser"])
    run_fixture_on_seeds(PQ_FIXTURE, ["PRINT Hello"])
    run_fixture_on_seeds(
        load_corpus_program("smtp.pi"), expected_log("smtp.log")
    )


# --------------------------------------------------------------------------
# 3. the whole corpus stays misuse-free across 200 seeds each


def test_c3_corpus_misuse_free_across_seeds(corpus_entries):
    start = time.perf_counter()
    for entry in corpus_entries:
        program = load_corpus_program(entry["file"])
        inference = prepare(program)
        script = script_lines(entry)
        for seed in range(200):
            result = Runner(
                program,
                seed=seed,
                script=script,
                budget=10000,
                inference=inference,
            ).run()
            assert result.error is None, f"{entry['file']} seed {seed}"
            assert result.status == entry["status"], f"{entry['file']} seed {seed}"
    assert time.perf_counter() - start < 60.0


# --------------------------------------------------------------------------
# 4. every mutated program is rejected statically and its misuse is
#    observable dynamically


def test_c4_mutants_rejected_and_reachable(tmp_path, capsys):
    assert len(MUTANTS) == 30
    for m in MUTANTS:
        source = apply_mutant(corpus_text(m.host), m)
        path = tmp_path / f"{m.mid}_{m.host}"
        path.write_text(source)
        rc = cli_main(["infer", str(path)])
        assert rc == 1, f"{m.mid}: infer exited {rc}"
        program = parse_program(source)
        reached = False
        for seed in range(20):
            result = run(program, seed=seed, unchecked=True)
            if result.status == "error":
                assert result.error is not None
                reached = True
                break
        assert reached, f"{m.mid}: no seed in 0..19 reached a misuse report"
    capsys.readouterr()


# --------------------------------------------------------------------------
# 5. algebra laws on 1000 random ground types


def test_c5_algebra_properties_at_scale():
    start = time.perf_counter()
    types = sample_types(1000)
    assert len(types) == 1000
    for t in types:
        assert dual(dual(t)) == t
        if isinstance(t, Close):
            with pytest.raises(CompUndefined):
                comp(t, END)
        else:
            assert comp(t, END) == t
            assert comp(END, t) == t
            if not isinstance(t, End):
                assert comp(t, dual(t)) == BOT
                assert comp(dual(t), t) == BOT
    assert time.perf_counter() - start < 5.0

    with pytest.raises(DualUndefined):
        dual(BOT)
    with pytest.raises(DualUndefined):
        dual(Send(INT, BOT))
    with pytest.raises(NotGround):
        dual(UVar(0))
    with pytest.raises(CompUndefined):
        comp(Send(INT, END), Send(INT, END))
    with pytest.raises(CompUndefined):
        comp(CLOSE, CLOSE)


# --------------------------------------------------------------------------
# 6. the inference route and the declarative route agree on the sub-corpus,
#    and the pruned split search matches exhaustive enumeration


def test_c6_route_agreement(corpus_entries):
    start = time.perf_counter()
    derivable = 0
    for entry in corpus_entries:
        program = load_corpus_program(entry["file"])
        try:
            proc = elaborate(program, "main")
        except OutsideFragment:
            assert not entry["oracle"]
            continue
        inference = Inference(program)
        inference.infer_all()
        inference.require_runnable("main")
        result = Checker({}, program.data_decls).check(proc, {})
        assert result.ok == entry["oracle"], entry["file"]
        if entry["oracle"]:
            derivable += 1
    assert derivable >= 15

    # boundary: retaining the endpoint after delegation passes inference but
    # has no declarative derivation
    pq = load_corpus_program("pq.pi")
    inference = Inference(pq)
    inference.infer_all()
    inference.require_runnable("main")
    boundary = Checker({}, pq.data_decls).check(elaborate(pq, "main"), {})
    assert not boundary.ok
    assert "[Thr]" in boundary.reason

    # the pruned environment-split search equals exhaustive enumeration on
    # every elaborable program with at most three parallel components
    compared = 0
    for entry in corpus_entries:
        program = load_corpus_program(entry["file"])
        try:
            proc = elaborate(program, "main")
        except OutsideFragment:
            continue
        if component_count(proc) > 3:
            continue
        pruned = Checker({}, program.data_decls).check(proc, {})
        exhaustive = ExhaustiveChecker({}, program.data_decls).check(proc, {})
        assert pruned.ok == exhaustive.ok, entry["file"]
        compared += 1
    assert compared >= 15
    assert time.perf_counter() - start < 30.0


# --------------------------------------------------------------------------
# 7. recursive sessions infer a recursive protocol and run to the budget


def test_c7_recursion_bounded_by_budget():
    program = load_corpus_program("loop.pi")
    sigs = Inference(program).infer_all()
    entry = sigs["loop"].pre.entries[0]
    assert isinstance(entry, Rec)
    result = run(program, budget=10000)
    assert result.status == "budget"
    assert result.steps == 10000
    assert result.error is None
    assert result.effects == ["BUDGET"]
