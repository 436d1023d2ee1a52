import hypothesis.strategies as st
from hypothesis import settings

from biphoton.algebra import ModeRegistry, OperatorExpression, OperatorTerm

settings.register_profile("default", deadline=None, max_examples=200)
settings.load_profile("default")

LABELS = ("m0", "m1", "m2", "m3")


def make_registry(n=len(LABELS)):
    reg = ModeRegistry()
    for lab in LABELS[:n]:
        reg.register(lab)
    return reg


REGISTRY = make_registry()
MODES = [REGISTRY[lab] for lab in LABELS]

coeffs = st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False)


@st.composite
def expressions(draw, n_modes=4, max_terms=4, max_order=1):
    terms = draw(st.lists(
        st.tuples(st.integers(0, n_modes - 1), st.booleans(), coeffs, st.integers(0, max_order)),
        min_size=1, max_size=max_terms))
    return OperatorExpression(OperatorTerm(MODES[m], d, c, o) for m, d, c, o in terms)


def products(min_size=1, max_size=4, **kw):
    return st.lists(expressions(**kw), min_size=min_size, max_size=max_size)


# acceptance verdicts, printed once at the end of the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)
