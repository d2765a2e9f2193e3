"""Declarative checker: elaboration, derivations, and split-search validation."""

from __future__ import annotations

import pytest

from sessionpi.core import BOOL, END, INT, Bot, End, Send
from sessionpi.oracle import (
    Checker,
    CheckResult,
    Derivation,
    Inact,
    OutsideFragment,
    Par,
    check,
    elaborate,
    format_process,
    free_channels,
)
from sessionpi.surface import parse_program

from conftest import corpus_text, load_corpus_program
from mutant_catalog import MUTANTS, apply_mutant


def elaborated(name: str):
    prog = load_corpus_program(name)
    return prog, elaborate(prog, "main")


def check_main(prog, proc) -> CheckResult:
    return Checker({}, prog.data_decls).check(proc, {})


# --------------------------------------------------------------------------
# elaboration


def test_elaborate_send_recv():
    _, proc = elaborated("send_recv.pi")
    assert format_process(proc) == (
        "new c. (recv c(x). io print(x). 0 ||| send c 42. 0)"
    )


def test_fork_call_substitutes_value_arguments():
    _, proc = elaborated("fork_call.pi")
    text = format_process(proc)
    assert "send c 41 + 1" in text
    assert "worker" not in text


def test_offer_duplicates_continuation():
    prog = parse_program(
        """
        session main() {
          c <- new;
          fork {
            offer c {
              x <- recv c;
            } {
              y <- recv c;
            };
            io print("done");
          };
          sel1 c;
          send c 1;
        }
        """
    )
    text = format_process(elaborate(prog, "main"))
    assert text.count('io print("done")') == 2


def test_inlining_avoids_capture():
    prog = parse_program(
        """
        session helper(c) {
          d <- new;
          fork { z <- recv d; };
          send d 5;
          x <- recv c;
          io print(x);
        }
        session main() {
          d <- new;
          fork helper(d);
          send d 8;
        }
        """
    )
    proc = elaborate(prog, "main")
    text = format_process(proc)
    # helper's local d is renamed so the argument d is not captured
    assert "new d'" in text
    assert check_main(prog, proc).ok


def test_inlining_renames_swapped_arguments_simultaneously():
    prog = parse_program(
        """
        session pipe(x, y) {
          m <- recv x;
          send y m + 1;
        }
        session main() {
          x <- new;
          y <- new;
          fork { send y 5; };
          fork { r <- recv x; io print(r); };
          fork pipe(y, x);
        }
        """
    )
    proc = elaborate(prog, "main")
    text = format_process(proc)
    assert "recv y(m). send x m + 1" in text
    assert check_main(prog, proc).ok


def test_recursive_fork_outside_fragment():
    prog = parse_program(
        """
        session ping(c) { send c 1; fork pong(c); }
        session pong(c) { x <- recv c; fork ping(c); }
        session main() { c <- new; fork ping(c); fork pong(c); }
        """
    )
    with pytest.raises(OutsideFragment):
        elaborate(prog, "main")


@pytest.mark.parametrize(
    "body",
    [
        "c <- new; fork { x <- recv c; }; send c 1; close c;",
        "c <- connect greet;",
        "c <- new; unwind 0 c;",
        "c <- new; recur1 other c;",
        "c <- new; sel1N c;",
        "c <- new; offerN c { x <- recv c; } { y <- recv c; };",
    ],
)
def test_statements_without_declarative_rules(body):
    text = "service greet : Send String Close;\n"
    text += "session other(c) { x <- recv c; }\n"
    text += "session main() { %s }" % body
    prog = parse_program(text)
    with pytest.raises(OutsideFragment):
        elaborate(prog, "main")


# --------------------------------------------------------------------------
# checking anchors


def test_inact_requires_completed_environment():
    assert check({}, Inact(), {"c": END}).ok
    res = check({}, Inact(), {"c": Send(INT, END)})
    assert not res.ok
    assert "[Inact]" in res.reason


def test_send_payload_mismatch():
    prog = parse_program("session main() { send c 1; }")
    proc = elaborate(prog, "main")
    res = check({}, proc, {"c": Send(BOOL, END)})
    assert not res.ok
    assert "[Send]" in res.reason


def test_derivation_shape():
    prog, proc = elaborated("send_recv.pi")
    res = check_main(prog, proc)
    assert res.ok
    root = res.derivation
    assert root.rule == "Cres"
    (conc,) = root.children
    assert conc.rule == "Conc"
    rendered = root.render()
    for rule in ("[Cres]", "[Conc]", "[Rcv]", "[Send]", "[Io]", "[Inact]"):
        assert rule in rendered


def test_both_receive_not_derivable():
    prog = parse_program(
        "session main() { c <- new; fork { x <- recv c; }; y <- recv c; }"
    )
    res = check_main(prog, elaborate(prog, "main"))
    assert not res.ok


def test_full_transfer_delegation_derivable():
    prog, proc = elaborated("delegate.pi")
    res = check_main(prog, proc)
    assert res.ok
    rendered = res.derivation.render()
    assert "[Thr]" in rendered
    assert "[Cat]" in rendered


def test_retained_delegation_not_derivable():
    prog, proc = elaborated("pq.pi")
    res = check_main(prog, proc)
    assert not res.ok
    assert "[Thr] d has usage" in res.reason


def test_weakening_preserves_derivability():
    prog, proc = elaborated("send_recv.pi")
    assert check_main(prog, proc).ok
    assert Checker({}, prog.data_decls).check(proc, {"z": END}).ok


# --------------------------------------------------------------------------
# corpus agreement: inference accepts everything here, the declarative route
# accepts exactly the programs inside its fragment


def test_corpus_oracle_agreement(corpus_entries):
    for entry in corpus_entries:
        prog = load_corpus_program(entry["file"])
        try:
            proc = elaborate(prog, "main")
        except OutsideFragment:
            assert not entry["oracle"], f"{entry['file']} should be derivable"
            continue
        res = check_main(prog, proc)
        assert res.ok == entry["oracle"], (
            f"{entry['file']}: derivable={res.ok}, expected {entry['oracle']}"
            f" ({res.reason})"
        )


# --------------------------------------------------------------------------
# the pruned split search agrees with exhaustive enumeration


class ExhaustiveChecker(Checker):
    """Same typing rules, but [Conc] tries the full candidate product with no
    free-channel pruning."""

    def _check_par(self, gamma, p: Par, delta, goal):
        chans = sorted(delta)

        def assign(i, d1, d2):
            if i == len(chans):
                lsub = self._check(gamma, p.left, dict(d1))
                if not lsub.ok:
                    return None
                rsub = self._check(gamma, p.right, dict(d2))
                if not rsub.ok:
                    return None
                return CheckResult(
                    True, Derivation("Conc", goal, (lsub.derivation, rsub.derivation))
                )
            c = chans[i]
            for left_part, right_part in self._split_candidates(
                gamma, c, delta[c], p, d1, d2
            ):
                d1[c] = left_part
                d2[c] = right_part
                res = assign(i + 1, d1, d2)
                del d1[c], d2[c]
                if res is not None:
                    return res
            return None

        res = assign(0, {}, {})
        if res is not None:
            return res
        return self._fail("[Conc] no environment split admits both components")


def component_count(p) -> int:
    if isinstance(p, Par):
        return component_count(p.left) + component_count(p.right)
    inner = getattr(p, "cont", None)
    if inner is not None:
        return component_count(inner)
    if hasattr(p, "left"):
        return max(component_count(p.left), component_count(p.right))
    return 1


def test_pruned_search_matches_exhaustive(corpus_entries):
    compared = 0
    for entry in corpus_entries:
        prog = load_corpus_program(entry["file"])
        try:
            proc = elaborate(prog, "main")
        except OutsideFragment:
            continue
        if component_count(proc) > 3:
            continue
        pruned = Checker({}, prog.data_decls).check(proc, {})
        exhaustive = ExhaustiveChecker({}, prog.data_decls).check(proc, {})
        assert pruned.ok == exhaustive.ok, entry["file"]
        compared += 1
    assert compared >= 15


def test_exhaustive_agrees_on_mutants():
    for m in MUTANTS:
        if m.leaves_fragment:
            continue
        prog = parse_program(apply_mutant(corpus_text(m.host), m))
        proc = elaborate(prog, "main")
        pruned = Checker({}, prog.data_decls).check(proc, {})
        exhaustive = ExhaustiveChecker({}, prog.data_decls).check(proc, {})
        assert not pruned.ok, m.mid
        assert not exhaustive.ok, m.mid


# --------------------------------------------------------------------------
# every mutated program is rejected by the declarative route


def test_mutants_rejected_by_declarative_route():
    for m in MUTANTS:
        source = apply_mutant(corpus_text(m.host), m)
        prog = parse_program(source)
        if m.leaves_fragment:
            with pytest.raises(OutsideFragment):
                elaborate(prog, "main")
        else:
            res = check_main(prog, elaborate(prog, "main"))
            assert not res.ok, f"{m.mid} unexpectedly derivable"


def test_free_channels():
    prog, proc = elaborated("send_recv.pi")
    assert free_channels(proc) == frozenset()
    assert free_channels(proc.cont) == frozenset({"c"})
