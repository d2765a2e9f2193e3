"""Scheduler semantics: golden logs, misuse detection, scripts, budgets."""

from __future__ import annotations

import pytest

from sessionpi.infer import TypeCheckError
from sessionpi.runtime import (
    ErrorReport,
    Runner,
    ScriptExhausted,
    prepare,
    run,
)
from sessionpi.surface import parse_program

from conftest import (
    corpus_text,
    expected_log,
    load_corpus_program,
    script_lines,
)
from mutant_catalog import MUTANTS, apply_mutant


def run_corpus(entry, seed, budget=10000, inference=None, program=None):
    program = program or load_corpus_program(entry["file"])
    return (
        Runner(
            program,
            seed=seed,
            script=script_lines(entry),
            budget=budget,
            inference=inference,
        ).run(),
        program,
    )


# --------------------------------------------------------------------------
# golden logs, stable across seeds


def test_corpus_goldens(corpus_entries):
    for entry in corpus_entries:
        program = load_corpus_program(entry["file"])
        inference = prepare(program)
        golden = expected_log(entry["file"].replace(".pi", ".log"))
        for seed in (0, 1, 7, 13):
            result, _ = run_corpus(entry, seed, inference=inference, program=program)
            assert result.status == entry["status"], (
                f"{entry['file']} seed {seed}: {result.status}"
            )
            assert result.effects == golden, f"{entry['file']} seed {seed}"
            assert result.error is None


def test_deadlock_is_not_misuse():
    entry = {"file": "deadlock.pi"}
    result, _ = run_corpus(entry, 0)
    assert result.status == "deadlock"
    assert result.error is None
    assert result.effects[-1] == "DEADLOCK"
    assert not any(e.startswith("ERROR") for e in result.effects)


def test_delegation_moves_the_endpoint():
    result, _ = run_corpus({"file": "delegate.pi"}, 0)
    assert result.effects == ["PRINT Hello"]
    result, _ = run_corpus({"file": "delegate_recv.pi"}, 0)
    assert result.effects == ["PRINT payload"]


# --------------------------------------------------------------------------
# misuse detector


def run_text(text: str, seed=0, **kw):
    return run(parse_program(text), seed=seed, **kw)


def test_two_sends_raise_error_report():
    result = run_text(
        """
        session main() {
          c <- new;
          fork { send c 1; };
          send c 2;
        }
        """,
        unchecked=True,
    )
    assert result.status == "error"
    err = result.error
    assert isinstance(err, ErrorReport)
    assert err.classification == "NonRedexPair"
    assert err.channel == "c"
    assert len(err.engaged) == 2
    assert err.step >= 0
    assert result.effects[-1] == "ERROR NonRedexPair c"


def test_two_receives_raise_error_report():
    result = run_text(
        """
        session main() {
          c <- new;
          fork { x <- recv c; };
          y <- recv c;
        }
        """,
        unchecked=True,
    )
    assert result.status == "error"
    assert result.error.classification == "NonRedexPair"


def test_three_engaged_tasks_raise_error_report():
    result = run_text(
        """
        session main() {
          c <- new;
          fork { send c 1; };
          fork { x <- recv c; };
          y <- recv c;
        }
        """,
        unchecked=True,
    )
    assert result.status == "error"
    assert result.error.classification == "ThreeOrMore"
    assert result.error.channel == "c"
    assert len(result.error.engaged) == 3


def test_send_close_mismatch():
    result = run_text(
        """
        session main() {
          c <- new;
          fork { send c 1; };
          close c;
        }
        """,
        unchecked=True,
    )
    assert result.status == "error"
    assert result.error.classification == "NonRedexPair"


def test_well_typed_corpus_never_reports(corpus_entries):
    # the detector stays silent on everything the checker admitted
    for entry in corpus_entries:
        program = load_corpus_program(entry["file"])
        inference = prepare(program)
        result, _ = run_corpus(entry, 3, inference=inference, program=program)
        assert result.error is None, entry["file"]


def test_every_mutant_reaches_an_error_report():
    for m in MUTANTS:
        program = parse_program(apply_mutant(corpus_text(m.host), m))
        statuses = set()
        hit = False
        for seed in range(20):
            result = run(program, seed=seed, unchecked=True)
            statuses.add(result.status)
            if result.status == "error":
                assert result.error is not None
                hit = True
                break
        assert hit, f"{m.mid}: no seed in 0..19 reached a report ({statuses})"


# --------------------------------------------------------------------------
# scripts


def test_script_lines_feed_readline():
    entry = {"file": "script_read.pi", "script": "script_read.script"}
    result, _ = run_corpus(entry, 0)
    assert result.status == "done"
    assert result.effects == expected_log("script_read.log")


def test_missing_script_line_raises():
    program = load_corpus_program("script_read.pi")
    with pytest.raises(ScriptExhausted):
        run(program, script=[])


# --------------------------------------------------------------------------
# budget and checking modes


def test_budget_counts_steps():
    program = load_corpus_program("loop.pi")
    result = run(program, budget=50)
    assert result.status == "budget"
    assert result.steps == 50
    assert result.effects[-1] == "BUDGET"


def test_loop_runs_to_large_budget():
    program = load_corpus_program("loop.pi")
    result = run(program, budget=10000)
    assert result.status == "budget"
    assert result.steps == 10000
    assert result.effects == ["BUDGET"]


def test_checked_run_rejects_ill_typed_programs():
    program = parse_program(
        apply_mutant(corpus_text(MUTANTS[0].host), MUTANTS[0])
    )
    with pytest.raises(TypeCheckError):
        run(program)


def test_unchecked_run_executes_ill_typed_programs():
    program = parse_program(
        apply_mutant(corpus_text(MUTANTS[0].host), MUTANTS[0])
    )
    result = run(program, unchecked=True)
    assert result.status == "error"


def test_prepare_requires_main():
    with pytest.raises(TypeCheckError) as exc:
        prepare(parse_program("session helper(c) { x <- recv c; }"))
    assert "main" in str(exc.value)


def test_prepare_requires_service_server_session():
    with pytest.raises(TypeCheckError) as exc:
        prepare(
            parse_program(
                """
                service greet : Send String Close;
                session main() {
                  c <- connect greet;
                  send c "hi";
                  close c;
                }
                """
            )
        )
    assert "greet_server" in str(exc.value)


# --------------------------------------------------------------------------
# seeded interleaving: different seeds may order independent effects
# differently, but every seed is reproducible

RACY = """
session main() {
  a <- new;
  fork { x <- recv a; io print(x); };
  b <- new;
  fork { y <- recv b; io print(y); };
  send a 10;
  send b 20;
}
"""


def test_seeds_vary_independent_interleavings():
    program = parse_program(RACY)
    inference = prepare(program)
    first = Runner(program, seed=0, inference=inference).run()
    second = Runner(program, seed=3, inference=inference).run()
    assert first.effects == ["PRINT 20", "PRINT 10"]
    assert second.effects == ["PRINT 10", "PRINT 20"]


def test_same_seed_same_run():
    program = parse_program(RACY)
    inference = prepare(program)
    for seed in range(10):
        a = Runner(program, seed=seed, inference=inference).run()
        b = Runner(program, seed=seed, inference=inference).run()
        assert a.effects == b.effects
        assert a.steps == b.steps
        assert a.status == "done"


def test_trace_records_choices():
    program = load_corpus_program("send_recv.pi")
    result = run(program, trace=True)
    assert result.trace
    assert all(line.startswith("step ") for line in result.trace)
