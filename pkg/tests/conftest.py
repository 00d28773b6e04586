ACCEPTANCE = {}

TITLES = {
    1: "ridge equivalence (Gaussian filter = ridge path)",
    2: "pathwise inequality on logistic and Gaussian trajectories",
    3: "precision recursion",
    4: "martingale deviation frequency",
    5: "lambda_max(P_t) concentration envelope",
    6: "setting2 comparison against ONS and ASGD",
    7: "truncation effect on setting1",
    8: "label-parameter densities",
    9: "bound calculators against transcription oracle",
    10: "thread-count invariance of aggregated output",
}


def record(criterion, passed, detail=""):
    """Store the verdict of an acceptance criterion (an earlier failure sticks)."""
    prev = ACCEPTANCE.get(criterion)
    ok = bool(passed) and (prev is None or prev[0])
    parts = [p for p in ((prev[1] if prev else ""), detail) if p]
    ACCEPTANCE[criterion] = (ok, "; ".join(parts))
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(TITLES):
        if k in ACCEPTANCE:
            ok, detail = ACCEPTANCE[k]
            terminalreporter.write_line(f"criterion {k:2d} {'PASS' if ok else 'FAIL'}  {TITLES[k]}  [{detail}]")
        else:
            terminalreporter.write_line(f"criterion {k:2d} NOT RUN  {TITLES[k]}")
