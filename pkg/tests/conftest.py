import random

from iniva.overlay import build_tree


def small_tree(n=7, fanout=2, root=0):
    return build_tree(list(range(n)), fanout, root)


def random_multiplicities(tree, rnd: random.Random, absent_rate=0.1):
    """A multiplicity vector the protocol could have produced for ``tree``."""
    mv = {tree.root: 1}
    for i in tree.internals:
        kids = {k: rnd.choices([0, 1, 2], weights=[absent_rate, 0.2, 1])[0] for k in tree.children(i)}
        doubled = sum(v == 2 for v in kids.values())
        if doubled:
            mv[i] = 1 + doubled
        else:
            mv[i] = rnd.choices([0, 1], weights=[absent_rate, 1])[0]
        mv.update({k: v for k, v in kids.items() if v})
    return {p: c for p, c in mv.items() if c}


# acceptance verdicts, one line per criterion in the terminal summary
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[criterion]
        verdict = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        terminalreporter.write_line(f"{verdict} criterion {criterion}: " + "; ".join(d for _, d in parts))
