"""Single-statement mutations of well-typed corpus programs.

Each entry replaces one statement of a host program with a statement that
misuses a channel (wrong direction, wrong discipline, or an early close).
``old`` occurs exactly once in the host file, so plain text replacement is a
faithful single-point mutation. ``leaves_fragment`` marks mutants whose new
statement has no declarative rule at all (close); for those the declarative
route rejects by refusing to elaborate rather than by a failed derivation.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class Mutant:
    mid: str
    host: str
    old: str
    new: str
    leaves_fragment: bool = False


MUTANTS: tuple[Mutant, ...] = (
    Mutant("M01", "send_recv.pi", "send c 42;", "z <- recv c;"),
    Mutant("M02", "send_recv.pi", "x <- recv c;", "send c 0;"),
    Mutant("M03", "two_values.pi", "send c True;", "t <- recv c;"),
    Mutant("M04", "two_values.pi", "b <- recv c;", "b <- catch c;"),
    Mutant("M05", "string_pair.pi", "first <- recv c;", "first <- catch c;"),
    Mutant("M06", "string_pair.pi", 'send c "two";', "offer c {} {};"),
    Mutant("M07", "arith.pi", "send c 20 + 22;", "w <- recv c;"),
    Mutant("M08", "compare.pi", "send c 3 < 5;", "sel1 c;"),
    Mutant("M09", "select_left.pi", "sel1 c;", "send c unit;"),
    Mutant(
        "M10",
        "select_left.pi",
        "offer c {\n    n <- recv c;\n    io print(n);\n  } {\n"
        '    send c "unused";\n  };',
        "n2 <- recv c;",
    ),
    Mutant("M11", "select_right.pi", "sel2 c;", "y0 <- recv c;"),
    Mutant("M12", "offer_both.pi", "sel2 c;", "send c 9;"),
    Mutant("M13", "delegate.pi", "throw c d;", "send c 5;"),
    Mutant("M14", "delegate.pi", "e <- catch c;", "e <- recv c;"),
    Mutant("M15", "delegate_recv.pi", "e <- catch c;", "e <- recv c;"),
    Mutant("M16", "nested_new.pi", "send a 1;", "w <- recv a;"),
    Mutant("M17", "nested_new.pi", "send b x + 100;", "x2 <- recv b;"),
    Mutant("M18", "fork_call.pi", "send c n + 1;", "m <- recv c;"),
    Mutant("M19", "list_values.pi", "xs <- recv c;", "xs <- catch c;"),
    Mutant("M20", "tagged.pi", 'send c Wrap("boxed");', "offer c {} {};"),
    Mutant("M21", "unit_value.pi", "u <- recv c;", "close c;", leaves_fragment=True),
    Mutant("M22", "deep_session.pi", "send c a + b;", "c2 <- recv c;"),
    Mutant("M23", "deep_session.pi", "send c 10;", "sel1 c;"),
    Mutant("M24", "calc.pi", "sel2 c;", "send c 4;"),
    Mutant("M25", "calc.pi", "send c 3;", "m2 <- recv c;"),
    Mutant("M26", "twochan.pi", "send d True;", "u <- recv d;"),
    Mutant("M27", "echo.pi", "send c x;", "x2 <- recv c;"),
    Mutant(
        "M28",
        "if_branch.pi",
        "send c if 1 < 2 then 10 else 20;",
        "close c;",
        leaves_fragment=True,
    ),
    Mutant("M29", "three_tasks.pi", "send a 3;", "n0 <- recv a;"),
    Mutant("M30", "string_pair.pi", 'send c "one";', "close c;", leaves_fragment=True),
)


def apply_mutant(source: str, m: Mutant) -> str:
    assert source.count(m.old) == 1, f"{m.mid}: pattern not unique in {m.host}"
    return source.replace(m.old, m.new)
