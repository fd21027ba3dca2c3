from fractions import Fraction

import numpy as np
import pytest

from app.errors import (
    ConditionC1Violated,
    CPlaneRepresentation,
    DegenerateInput,
    DeltaNegative,
    InfeasiblePoint,
    InvalidSelection,
    InvalidSignature,
    NonGenericBoundary,
    TurnoverError,
)
from app.geometry.chgeom import herm, norm_sq, orthonormal_complement, vec
from app.services.charvar import (
    RESIDUAL_LIMIT,
    Branch,
    Case,
    CharVarPoint,
    TurnoverSignature,
    c1_margins,
    enumerate_selections,
    make_selection,
    solve,
    solve_regular,
)

SIGNATURES = [(3, 3, 4), (3, 3, 5), (3, 4, 4), (3, 3, 7), (4, 4, 4),
              (3, 5, 5), (4, 4, 5), (3, 4, 7), (5, 5, 5), (3, 6, 6)]


def feasible_triples(sig: TurnoverSignature, steps: int = 16, low: float = 5e-3, high: float = 5.0):
    """Solver successes on a geometric grid in [low, high]^2 for every regular selection of sig"""
    values = np.geomspace(low, high, steps)
    found = []
    for sel in enumerate_selections(sig, Case.REGULAR, lifts=(0, 1, 2)):
        for branch in Branch:
            for s in values:
                for t in values:
                    pt = CharVarPoint(float(s), float(t), branch)
                    try:
                        found.append(solve(sel, pt))
                    except InfeasiblePoint:
                        continue
    return found


def test_signature_validation():
    assert TurnoverSignature.parse("3,3,4") == TurnoverSignature(3, 3, 4)
    assert TurnoverSignature(3, 3, 4).chi == Fraction(-1, 12)
    for bad in ("2,3,6", "3,3,3", "1,5,7", "3,3", "a,b,c"):
        with pytest.raises(InvalidSignature):
            TurnoverSignature.parse(bad)


def test_enumerate_regular_selections_of_334(sig334):
    selections = enumerate_selections(sig334, Case.REGULAR)
    assert [s.label for s in selections] == ["1,1,1", "1,1,2"]
    assert all(s.lift == 0 for s in selections)
    assert len(enumerate_selections(sig334, Case.REGULAR, lifts=(0, 1, 2))) == 6


@pytest.mark.parametrize("orders", SIGNATURES)
@pytest.mark.parametrize("case", list(Case))
def test_selection_eigenvalues(orders, case):
    sig = TurnoverSignature(*orders)
    for sel in enumerate_selections(sig, case, lifts=(0, 1, 2)):
        assert sel.q4_holds()
        for values, n in ((sel.alpha, sig.n1), (sel.beta, sig.n2), (sel.gamma, sig.n3)):
            assert np.allclose(np.abs(values), 1)
            assert np.prod(values) == pytest.approx(1)
            # each class has order n up to a cube root of unity
            assert np.allclose(values ** (3 * n), 1)


def test_special_selections_of_334(sig334):
    points = enumerate_selections(sig334, Case.SPECIAL_POINT)
    lines = enumerate_selections(sig334, Case.SPECIAL_LINE)
    assert {s.l2 for s in points} == {2}
    assert {s.l2 for s in lines} == {0}
    assert len(points) == len(lines) == 2


def test_make_selection_guards(sig334):
    with pytest.raises(CPlaneRepresentation):
        make_selection(sig334, Case.REGULAR, (0, 0, 2))
    with pytest.raises(InvalidSelection):
        make_selection(sig334, Case.REGULAR, (0, 1, 2))
    with pytest.raises(InvalidSelection):
        make_selection(sig334, Case.REGULAR, (5, 1, 2))
    with pytest.raises(InvalidSelection):
        make_selection(sig334, Case.REGULAR, (1, 1, 2), lift=3)
    with pytest.raises(InvalidSelection):
        make_selection(sig334, Case.SPECIAL_LINE, (1, 1, 2))


def test_c1_margins_of_334(sig334):
    sel_111 = make_selection(sig334, Case.REGULAR, (1, 1, 1))
    m = c1_margins(sel_111, 0.1, 0.2)
    assert m.v2_sq == pytest.approx(2 / 3 + 0.3, abs=1e-12)
    assert m.v3_sq == pytest.approx(1 / 3 - 0.1, abs=1e-12)
    assert m.v1_sq == pytest.approx(0.2, abs=1e-12)

    lifted = c1_margins(make_selection(sig334, Case.REGULAR, (1, 1, 2), lift=2), 0.1, 0.2)
    assert lifted.as_dict() == pytest.approx(m.as_dict(), abs=1e-12)

    assert c1_margins(make_selection(sig334, Case.REGULAR, (1, 1, 2)), 0.1, 0.2).v3_sq == \
        pytest.approx(-0.1, abs=1e-12)
    origin = c1_margins(make_selection(sig334, Case.REGULAR, (1, 1, 2), lift=1), 0.0, 0.0)
    assert (origin.v2_sq, origin.v3_sq, origin.v1_sq) == pytest.approx((1, -1 / 3, -1 / 3), abs=1e-12)


def test_solve_regular_failures(sig334):
    sel = make_selection(sig334, Case.REGULAR, (1, 1, 2))
    with pytest.raises(ConditionC1Violated) as info:
        solve_regular(sel, CharVarPoint(0.1, 0.2))
    assert set(info.value.margins) == {"v2_sq", "v3_sq", "v1_sq"}
    assert info.value.to_dict()["error"] == "ConditionC1Violated"

    sel_111 = make_selection(sig334, Case.REGULAR, (1, 1, 1))
    with pytest.raises(DeltaNegative):
        solve_regular(sel_111, CharVarPoint(0.3, 0.01))
    with pytest.raises(NonGenericBoundary):
        solve_regular(sel_111, CharVarPoint(0.0, 0.2))
    with pytest.raises(DegenerateInput):
        solve_regular(sel_111, CharVarPoint(-0.1, 0.2))
    with pytest.raises(InvalidSelection):
        solve(sel_111)
    with pytest.raises(InvalidSelection):
        solve_regular(enumerate_selections(sig334, Case.SPECIAL_LINE)[0], CharVarPoint(0.1, 0.1))


def assert_valid_triple(rep):
    sel = rep.selection
    n1, n2, n3 = sel.signature.orders
    assert rep.trace_residual < 1e-9
    assert rep.relation_residual < 1e-9
    for M, n in ((rep.I1, n1), (rep.I2, n2), (rep.I3, n3)):
        assert M.form_defect() < 1e-9
        assert M.det() == pytest.approx(1, abs=1e-9)
        assert M.power(n).scalar_cube_root() is not None
    assert (rep.I2 @ rep.I1).trace() == pytest.approx(sel.gamma.sum(), abs=1e-9)


def test_passing_point_triple_is_valid(passing_query):
    assert_valid_triple(passing_query[3].representation)


@pytest.mark.slow
def test_regular_solver_over_many_signatures():
    total = 0
    solved_signatures = set()
    for orders in SIGNATURES:
        triples = feasible_triples(TurnoverSignature(*orders))
        for rep in triples:
            assert_valid_triple(rep)
        total += len(triples)
        if triples:
            solved_signatures.add(orders)
    assert total >= 1000
    assert len(solved_signatures) >= 10


def brute_force_residual(sel, s: float, t: float, psi_steps: int = 181, phi_steps: int = 361,
                         seeds: int = 24, rounds: int = 50, zoom: int = 21) -> float:
    """min |tr(I2 I1) - sum(gamma)| over unit positive v orthogonal to u = (sqrt(1+s+t), sqrt(s), sqrt(t))

    A coarse (psi, phi) grid picks the best seeds, then each seed is refined on a
    zoom x zoom window that halves every round.
    """
    al, be, ga = sel.alpha, sel.beta, sel.gamma
    w = 1 + s + t
    u = vec(np.sqrt(w), np.sqrt(s), np.sqrt(t))
    a, b = orthonormal_complement(u)

    def residual(psi, phi):
        v = np.cos(psi)[..., None] * a + (np.sin(psi) * np.exp(1j * phi))[..., None] * b
        X = np.abs(v) ** 2
        trace = ((be[0] - be[2]) * (al[0] * w - al[1] * s - al[2] * t)
                 + (be[1] - be[2]) * (-al[0] * X[..., 0] + al[1] * X[..., 1] + al[2] * X[..., 2])
                 + be[2] * al.sum())
        return np.abs(trace - ga.sum())

    psi, phi = np.meshgrid(np.linspace(0, np.pi / 2, psi_steps),
                           np.linspace(0, 2 * np.pi, phi_steps), indexing="ij")
    values = residual(psi, phi)
    best = float(values.min())
    for flat in np.argsort(values, axis=None)[:seeds]:
        p0, f0 = psi.flat[flat], phi.flat[flat]
        hp, hf = np.pi / 2 / (psi_steps - 1), 2 * np.pi / (phi_steps - 1)
        for _ in range(rounds):
            local_psi, local_phi = np.meshgrid(np.linspace(p0 - hp, p0 + hp, zoom),
                                               np.linspace(f0 - hf, f0 + hf, zoom), indexing="ij")
            local = residual(local_psi, local_phi)
            k = int(local.argmin())
            p0, f0 = local_psi.flat[k], local_phi.flat[k]
            best = min(best, float(local.flat[k]))
            hp, hf = hp / 2, hf / 2
    return best


def refusal_bound(sel, s: float, t: float) -> float:
    """Lower bound on the trace residual of any positive v when C1 fails at (s, t)"""
    al, be = sel.alpha, sel.beta
    a21, a31 = al[1] - al[0], al[2] - al[0]
    coefficients = np.array([[a21.real, a31.real], [a21.imag, a31.imag]])
    sigma_min = np.linalg.svd(coefficients, compute_uv=False).min()
    m = c1_margins(sel, s, t)
    # distance from the unique real solution to the region X1, X2, X3 >= 0
    gap = max(-m.v2_sq, -m.v3_sq, -m.v1_sq / np.sqrt(2))
    return float(abs(be[1] - be[2]) * sigma_min * gap)


def test_brute_force_agrees_at_solver_points(passing_cells):
    seen = set()
    for sel, branch, cell in passing_cells:
        if (sel, branch) in seen:
            continue
        seen.add((sel, branch))
        rep = solve(sel, CharVarPoint(cell.s, cell.t, branch))
        assert abs(herm(rep.u, rep.v)) < 1e-9
        assert norm_sq(rep.v) == pytest.approx(1.0)
        assert brute_force_residual(sel, cell.s, cell.t) < RESIDUAL_LIMIT


@pytest.mark.slow
@pytest.mark.parametrize("orders", SIGNATURES[:3])
def test_brute_force_agrees_across_signatures(orders):
    checked = set()
    for rep in feasible_triples(TurnoverSignature(*orders), steps=6):
        key = (rep.selection, rep.point.branch)
        if key in checked:
            continue
        checked.add(key)
        assert brute_force_residual(rep.selection, rep.point.s, rep.point.t) < RESIDUAL_LIMIT
    assert checked


def test_brute_force_finds_nothing_where_solver_refuses(sig334):
    sel = make_selection(sig334, Case.REGULAR, (1, 1, 2))
    s, t = 2.0, 0.5
    with pytest.raises(ConditionC1Violated):
        solve(sel, CharVarPoint(s, t))
    bound = refusal_bound(sel, s, t)
    assert bound > 1
    assert brute_force_residual(sel, s, t) >= bound * (1 - 1e-9)


@pytest.mark.slow
@pytest.mark.parametrize("orders", SIGNATURES[:3])
def test_brute_force_finds_nothing_where_c1_fails(orders):
    refused = 0
    for sel in enumerate_selections(TurnoverSignature(*orders), Case.REGULAR, lifts=(0, 1, 2)):
        for s in (0.25, 0.75, 1.5, 3.0):
            for t in (0.25, 0.75, 1.5, 3.0):
                if c1_margins(sel, s, t).holds:
                    continue
                bound = refusal_bound(sel, s, t)
                if bound < 1e-3:
                    continue
                with pytest.raises(ConditionC1Violated):
                    solve(sel, CharVarPoint(s, t))
                residual = brute_force_residual(sel, s, t)
                assert residual >= bound * (1 - 1e-9)
                assert residual > RESIDUAL_LIMIT
                refused += 1
    assert refused > 0


@pytest.mark.parametrize("case", [Case.SPECIAL_POINT, Case.SPECIAL_LINE])
def test_special_solutions_are_rigid(case):
    solved = 0
    for n2 in range(3, 7):
        for n3 in range(4, 8):
            try:
                sig = TurnoverSignature(3, n2, n3)
            except InvalidSignature:
                continue
            for sel in enumerate_selections(sig, case, lifts=(0, 1, 2)):
                try:
                    first = solve(sel)
                except TurnoverError as e:
                    with pytest.raises(type(e)):
                        solve(sel)
                    continue
                second = solve(sel)
                assert np.array_equal(first.I2.matrix, second.I2.matrix)
                assert_valid_triple(first)
                solved += 1
    assert solved > 0
