"""Signature inference: fixture programs, corpus agreement, rejection cases."""

from __future__ import annotations

import pytest

from sessionpi.cli import signature_matches
from sessionpi.core import Bot, End, Rec, Throw
from sessionpi.infer import (
    EndedTailR,
    Inference,
    InferError,
    TypeCheckError,
    alpha_equal_signature,
    format_signature,
)
from sessionpi.surface import OfferNStmt, parse_program

from conftest import corpus_text, expected_signatures, load_corpus_program

CALC_FIXTURE = """
session server(c) {
  x <- recv c;
  y <- recv c;
  offer c {
    send c x + y;
  } {
    send c x < y;
  };
}

session client(c) {
  send c 123;
  send c 456;
  sel2 c;
  ans <- recv c;
  io print(if ans then "Lesser" else "Greater or Equal");
}

session calc(c) {
  fork server(c);
  recur1 client c;
}

session main() {
  c <- new;
  recur1 calc c;
}
"""

PQ_FIXTURE = """
session p(c) {
  d <- new;
  throw c d;
  str <- recv d;
  io print(str);
}

session q(c) {
  e <- catch c;
  send e "Hello";
}

session pq(c) {
  fork q(c);
  recur1 p c;
}

session main() {
  c <- new;
  recur1 pq c;
}
"""


def infer_text(text: str):
    return Inference(parse_program(text)).infer_all()


# --------------------------------------------------------------------------
# signatures of the fixture programs


def test_calc_fixture_signatures():
    sigs = infer_text(CALC_FIXTURE)
    assert signature_matches(
        sigs["server"],
        "(Recv Int (Recv Int (Offer (Send Int a) (Send Bool a))), a)",
    )
    assert signature_matches(
        sigs["client"],
        "(Send Int (Send Int (Select a (Recv Bool b))), b)",
    )
    assert signature_matches(sigs["calc"], "(Bot, End)")
    assert signature_matches(sigs["main"], "(ss, ss :> End)")


def test_pq_fixture_signatures():
    sigs = infer_text(PQ_FIXTURE)
    assert signature_matches(sigs["q"], "(ss :> Catch (Send String a) b, ss :> b :> a)")
    # p keeps the receive side of the delegated channel; the thrown half is
    # the dual send side, and the fresh channel's entry closes once thrown
    p = sigs["p"]
    assert isinstance(p.pre.entries[0], Throw)
    assert signature_matches(p, "(ss :> Throw (Send a End) b, ss :> b :> End)")
    assert signature_matches(sigs["pq"], "(ss :> Bot, ss :> End :> End)")


def test_twochan_rows():
    sigs = infer_text(corpus_text("twochan.pi"))
    assert signature_matches(
        sigs["emitter"],
        "(ss :> Send String a :> Send Bool b, ss :> a :> b)",
    )


def test_loop_infers_recursive_type():
    sigs = infer_text(corpus_text("loop.pi"))
    entry = sigs["loop"].pre.entries[0]
    assert isinstance(entry, Rec)
    assert signature_matches(
        sigs["loop"], "(ss :> Rec Z (Throw (Recv String End) (Var Z)), ss :> a :> b)"
    )


def test_smtp_send_mail_signature():
    sigs = infer_text(corpus_text("smtp.pi"))
    sig = sigs["sendMail"]
    assert any(isinstance(r, EndedTailR) for r in sig.residual)
    expected = [
        line for line in expected_signatures("smtp.expect") if line.startswith("sendMail")
    ][0]
    _, _, text = expected.partition("::")
    assert signature_matches(sig, text.strip())


# --------------------------------------------------------------------------
# corpus agreement


def test_corpus_expectations(corpus_entries):
    for entry in corpus_entries:
        name = entry["file"]
        sigs = infer_text(corpus_text(name))
        for line in expected_signatures(name.replace(".pi", ".expect")):
            sess, _, text = line.partition("::")
            sess = sess.strip()
            assert sess in sigs, f"{name}: no session {sess}"
            assert signature_matches(sigs[sess], text.strip()), (
                f"{name}: {sess} inferred {format_signature(sigs[sess])}, "
                f"expected {text.strip()}"
            )


def test_inference_is_deterministic_up_to_renaming():
    a = infer_text(corpus_text("deep_session.pi"))
    b = infer_text(corpus_text("deep_session.pi"))
    for name in a:
        assert alpha_equal_signature(a[name], b[name])
    assert not alpha_equal_signature(a["main"], a["compute"])


# --------------------------------------------------------------------------
# programs that must be rejected


def reject(text: str) -> InferError:
    with pytest.raises(InferError) as exc:
        infer_text(text)
    return exc.value


def test_named_fork_requires_top_of_row():
    err = reject(
        """
        session helper(c) {
          x <- recv c;
        }
        session main() {
          a <- new;
          b <- new;
          fork helper(a);
          send a 1;
          send b 2;
          q <- recv b;
        }
        """
    )
    assert "level" in str(err) or "unify" in str(err)


def test_named_fork_argument_order_must_match_row():
    err = reject(
        """
        session pipe(x, y) {
          m <- recv x;
          send y m;
        }
        session main() {
          a <- new;
          b <- new;
          fork { send a 1; };
          fork { n <- recv b; io print(n); };
          fork pipe(b, a);
        }
        """
    )
    assert "level" in str(err)


def test_fork_recursion_rejected():
    err = reject(
        """
        session ping(c) {
          send c 1;
          fork pong(c);
        }
        session pong(c) {
          x <- recv c;
          fork ping(c);
        }
        session main() {
          c <- new;
          fork ping(c);
          recur1 pong c;
        }
        """
    )
    assert "recursion through fork" in str(err)


def test_both_sides_receive_rejected():
    err = reject(
        """
        session main() {
          c <- new;
          fork { x <- recv c; };
          y <- recv c;
        }
        """
    )
    assert "unify" in str(err) or "compose" in str(err)


def test_value_type_mismatch_rejected():
    err = reject(
        """
        session main() {
          c <- new;
          fork { send c "text"; };
          n <- recv c;
          io print(n + 1);
        }
        """
    )
    assert "unify" in str(err) or "Int" in str(err) or "String" in str(err)


def test_value_param_argument_mismatch():
    err = reject(
        """
        session worker(c, n: Int) {
          send c n;
        }
        session main() {
          c <- new;
          fork { m <- recv c; };
          fork worker(c, "oops");
        }
        """
    )
    assert "unify" in str(err) or "Int" in str(err)


def test_unknown_session_in_fork():
    with pytest.raises(InferError):
        infer_text("session main() { c <- new; fork ghost(c); q <- recv c; }")


def test_channel_must_be_split_before_direct_use():
    # a fresh channel's row entry stands for the whole composition; sending
    # on it without forking a peer leaves nothing to supply the other half
    err = reject(
        """
        session main() {
          c <- new;
          send c 1;
        }
        """
    )
    assert "Bot" in str(err)


def test_entry_session_must_close_everything():
    inf = Inference(
        parse_program(
            """
            session main() {
              c <- new;
              fork { x <- recv c; };
            }
            """
        )
    )
    sigs = inf.infer_all()
    assert signature_matches(sigs["main"], "(ss, ss :> Send a End)")
    with pytest.raises(InferError):
        inf.require_runnable("main")


def test_require_runnable_rejects_parameters():
    inf = Inference(parse_program("session main(c) { x <- recv c; }"))
    inf.infer_all()
    with pytest.raises(TypeCheckError):
        inf.require_runnable("main")


# --------------------------------------------------------------------------
# service checking and tag resolution


def test_require_server_accepts_matching_session():
    prog = parse_program(corpus_text("connectecho.pi"))
    inf = Inference(prog)
    inf.infer_all()
    decl = prog.services["echo"]
    inf.require_server("echo_server", decl.session_type)
    inf.require_runnable("main")


def test_require_server_rejects_wrong_protocol():
    prog = parse_program(
        """
        service echo : Send String (Recv String Close);

        session echo_server(s) {
          m <- recv s;
          send s True;
          close s;
        }

        session main() {
          c <- connect echo;
          send c "ping";
          reply <- recv c;
          io print(reply);
          close c;
        }
        """
    )
    inf = Inference(prog)
    inf.infer_all()
    with pytest.raises(InferError):
        inf.require_server("echo_server", prog.services["echo"].session_type)


def test_offern_tags_resolve_after_grounding():
    prog = parse_program(corpus_text("smtp.pi"))
    inf = Inference(prog)
    inf.infer_all()
    inf.require_server("smtp_server", prog.services["smtp"].session_type)
    inf.require_runnable("main")

    def offern_stmts(body):
        for st in body:
            if isinstance(st, OfferNStmt):
                yield st
                for sub in (st.left, st.right):
                    yield from offern_stmts(sub)

    stmts = list(offern_stmts(prog.sessions["rcptLoop"].body))
    assert stmts
    tags = inf.offern_tag(stmts[0], "smtp_server")
    assert tags == ("RCPT", "DATA")
